//! Post-processing of trajectories: impact events, restitution and energy
//! audits, stroboscopic sections with a regime label, and an independent
//! smooth integrator for the zero-clearance limit.

use crate::model::{eval_kinematics, force_vector, mass_matrix, State, SystemParams, Vec2, Wall};
use crate::stepper::{step_count, StepStats, Trajectory, IMPACT_THRESHOLD};
use serde::Serialize;
use thiserror::Error;

/// Diameter of a Poincaré cluster, rad (velocity scaled by `1/Omega`).
pub const CLUSTER_DIAMETER: f64 = 1e-4;
/// Most clusters still labelled multi-periodic.
pub const MAX_PERIODIC_CLUSTERS: usize = 8;
/// Minimum number of forcing periods after the transient cut.
pub const MIN_SECTION_PERIODS: f64 = 50.0;
/// Default transient cut, in forcing periods.
pub const TRANSIENT_PERIODS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("horizon after the transient cut is {available:.4} s, need {required:.4} s")]
    InsufficientHorizon { available: f64, required: f64 },
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("smooth reference did not converge: refinements differ by {diff:e} with step {h:e} s")]
    NotConverged { diff: f64, h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpactEvent {
    pub t: f64,
    pub wall: Wall,
    pub gamma_na: f64,
    pub gamma_ne: f64,
    pub p_n: f64,
    pub p_t: f64,
}

/// Impulses with `P_N > 0` and approach speed above `v_threshold`.
pub fn extract_events(traj: &Trajectory, v_threshold: f64) -> Vec<ImpactEvent> {
    traj.impulses
        .iter()
        .filter(|r| r.p_n > 0.0 && r.gamma_na < -v_threshold)
        .map(|r| ImpactEvent {
            t: r.t,
            wall: r.wall,
            gamma_na: r.gamma_na,
            gamma_ne: r.gamma_ne,
            p_n: r.p_n,
            p_t: r.p_t,
        })
        .collect()
}

/// `(t, gamma_NE / -gamma_NA)` per event.
pub fn restitution_audit(events: &[ImpactEvent]) -> Vec<(f64, f64)> {
    events
        .iter()
        .map(|e| (e.t, e.gamma_ne / -e.gamma_na))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Periodic1,
    MultiPeriodic,
    QuasiPeriodicOrChaotic,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Periodic1 => "Periodic1",
            Regime::MultiPeriodic => "MultiPeriodic",
            Regime::QuasiPeriodicOrChaotic => "QuasiPeriodicOrChaotic",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSummary {
    pub impacts_per_forcing_period: f64,
    /// `(phi1c, phi1c_dot)` at multiples of the forcing period.
    pub poincare_points: Vec<(f64, f64)>,
    /// Largest pairwise distance in `(phi1c, phi1c_dot / Omega)`, rad.
    pub poincare_diameter: f64,
    pub clusters: usize,
    pub classification: Regime,
}

fn interpolate(traj: &Trajectory, t: f64) -> Option<State> {
    let first = traj.samples.first()?;
    let spacing = traj.dt * traj.sample_every as f64;
    let x = (t - first.t) / spacing;
    if x < -1e-9 {
        return None;
    }
    let i = (x.max(0.0).floor() as usize).min(traj.samples.len() - 1);
    let a = &traj.samples[i];
    if i + 1 == traj.samples.len() {
        return ((t - a.t).abs() <= 1e-9 * spacing.max(1.0)).then_some(*a);
    }
    let b = &traj.samples[i + 1];
    let f = (t - a.t) / (b.t - a.t);
    Some(State {
        t,
        q: a.q + (b.q - a.q) * f,
        u: a.u + (b.u - a.u) * f,
    })
}

fn greedy_clusters(points: &[(f64, f64)], diameter: f64) -> usize {
    let mut seeds: Vec<(f64, f64)> = Vec::new();
    for &p in points {
        let near = seeds
            .iter()
            .any(|s| (p.0 - s.0).hypot(p.1 - s.1) <= 0.5 * diameter);
        if !near {
            seeds.push(p);
        }
    }
    seeds.len()
}

/// Stroboscopic section at `t = k 2 pi / Omega >= transient_cut`.
///
/// Points are compared in `(phi1c, phi1c_dot / Omega)`. The motion is
/// `Periodic1` when the whole set fits within [`CLUSTER_DIAMETER`],
/// `MultiPeriodic` when greedy balls of that diameter cover it with at most
/// [`MAX_PERIODIC_CLUSTERS`] seeds, and `QuasiPeriodicOrChaotic` otherwise.
pub fn poincare_section(
    traj: &Trajectory,
    omega: f64,
    transient_cut: f64,
) -> Result<RegimeSummary, AnalysisError> {
    let last = traj.samples.last().ok_or(AnalysisError::EmptyTrajectory)?;
    let period = std::f64::consts::TAU / omega;
    let available = last.t - transient_cut;
    let required = MIN_SECTION_PERIODS * period;
    if available < required * (1.0 - 1e-9) {
        return Err(AnalysisError::InsufficientHorizon {
            available,
            required,
        });
    }

    let k0 = (transient_cut / period - 1e-9).ceil().max(0.0) as usize;
    let mut points = Vec::new();
    for k in k0.. {
        let t = k as f64 * period;
        if t > last.t + 1e-9 * traj.dt {
            break;
        }
        match interpolate(traj, t) {
            Some(s) => points.push((s.q[1], s.u[1])),
            None => break,
        }
    }

    let scaled: Vec<(f64, f64)> = points.iter().map(|&(x, v)| (x, v / omega)).collect();
    let mut diameter = 0.0f64;
    for (i, a) in scaled.iter().enumerate() {
        for b in &scaled[i + 1..] {
            diameter = diameter.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    let clusters = greedy_clusters(&scaled, CLUSTER_DIAMETER);
    let classification = if diameter <= CLUSTER_DIAMETER {
        Regime::Periodic1
    } else if clusters <= MAX_PERIODIC_CLUSTERS {
        Regime::MultiPeriodic
    } else {
        Regime::QuasiPeriodicOrChaotic
    };

    let impacts = extract_events(traj, IMPACT_THRESHOLD)
        .iter()
        .filter(|e| e.t >= transient_cut)
        .count();
    Ok(RegimeSummary {
        impacts_per_forcing_period: impacts as f64 / (available / period),
        poincare_points: points,
        poincare_diameter: diameter,
        clusters,
        classification,
    })
}

/// Right-hand side of the rigidly coupled (zero clearance) system in
/// `(phi1c, phi1c_dot)`.
fn coupled_rhs(p: &SystemParams, t: f64, y: [f64; 2]) -> [f64; 2] {
    let kin = eval_kinematics(y[0], y[1], p.beta);
    let m = mass_matrix(p, &kin);
    let s = State {
        t,
        q: Vec2::new(y[0], y[0]),
        u: Vec2::new(y[1], y[1]),
    };
    let h = force_vector(p, &s, &kin);
    [y[1], (h[0] + h[1]) / (m.0[0] + m.0[1])]
}

fn rk4(
    p: &SystemParams,
    t0: f64,
    y0: [f64; 2],
    h: f64,
    substeps: usize,
    out_steps: usize,
) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(out_steps + 1);
    let mut y = y0;
    out.push(y);
    let mut step_index = 0usize;
    for _ in 0..out_steps {
        for _ in 0..substeps {
            let t = t0 + step_index as f64 * h;
            let k1 = coupled_rhs(p, t, y);
            let y2 = [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]];
            let k2 = coupled_rhs(p, t + 0.5 * h, y2);
            let y3 = [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]];
            let k3 = coupled_rhs(p, t + 0.5 * h, y3);
            let y4 = [y[0] + h * k3[0], y[1] + h * k3[1]];
            let k4 = coupled_rhs(p, t + h, y4);
            for i in 0..2 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            step_index += 1;
        }
        out.push(y);
    }
    out
}

/// Tolerance on successive refinements of [`smooth_reference`].
pub const REFERENCE_TOL: f64 = 1e-9;

/// Integrates the rigidly coupled system (`phi1 == phi1c`) with classical
/// RK4 at `dt/10`, halving the step until two successive refinements agree
/// to [`REFERENCE_TOL`] in `phi1c` and `phi1c_dot / Omega` on the output
/// grid. Output samples every `dt`.
pub fn smooth_reference(p: &SystemParams, initial: State) -> Result<Trajectory, AnalysisError> {
    let n_out = step_count(p.t_final, p.dt);
    let y0 = [initial.q[1], initial.u[1]];
    let vel_scale = if p.omega != 0.0 { p.omega.abs() } else { 1.0 };
    let mut substeps = 10usize;
    let mut coarse = rk4(p, initial.t, y0, p.dt / substeps as f64, substeps, n_out);
    let mut last = (f64::INFINITY, p.dt);
    for _ in 0..5 {
        substeps *= 2;
        let h = p.dt / substeps as f64;
        let fine = rk4(p, initial.t, y0, h, substeps, n_out);
        let diff = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs() / vel_scale))
            .fold(0.0, f64::max);
        if diff <= REFERENCE_TOL {
            let samples = fine
                .iter()
                .enumerate()
                .map(|(k, y)| State {
                    t: initial.t + k as f64 * p.dt,
                    q: Vec2::new(y[0], y[0]),
                    u: Vec2::new(y[1], y[1]),
                })
                .collect();
            return Ok(Trajectory {
                dt: p.dt,
                sample_every: 1,
                samples,
                impulses: Vec::new(),
                stats: StepStats::default(),
                failure: None,
            });
        }
        last = (diff, h);
        coarse = fine;
    }
    Err(AnalysisError::NotConverged {
        diff: last.0,
        h: last.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub kinetic: f64,
    /// Output shaft spring energy `Ks phi4^2 / 2`.
    pub potential: f64,
    /// Cumulative input work.
    pub input_work: f64,
    /// Cumulative damper dissipation.
    pub damping_loss: f64,
    /// Energy not explained by the smooth channels: impact losses plus
    /// discretization error.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyAudit {
    pub records: Vec<EnergyRecord>,
    /// Residual increments over sample intervals that contain an impact
    /// event, `(t at interval start, increment)`.
    pub impact_residuals: Vec<(f64, f64)>,
    /// Sum of `impact_residuals`.
    pub impact_energy: f64,
    /// `max |residual|` over the run divided by the largest energy figure
    /// involved in the budget.
    pub closure_error: f64,
}

fn energy_terms(p: &SystemParams, s: &State) -> (f64, f64, f64, f64) {
    let kin = eval_kinematics(s.q[1], s.u[1], p.beta);
    let m = mass_matrix(p, &kin);
    let kinetic = m.kinetic_energy(&s.u);
    let potential = 0.5 * p.ks * kin.phi4 * kin.phi4;
    let power_in = p.input_torque(s.t) * s.u[0];
    let power_damp = p.cs * kin.phi4_dot * kin.phi4_dot;
    (kinetic, potential, power_in, power_damp)
}

/// Energy budget over the stored samples. Works on any sampling, but the
/// trapezoidal work integrals are only tight with `sample_every == 1`.
pub fn energy_audit(traj: &Trajectory, p: &SystemParams) -> EnergyAudit {
    let mut records = Vec::with_capacity(traj.samples.len());
    let mut impact_residuals = Vec::new();
    let Some(first) = traj.samples.first() else {
        return EnergyAudit {
            records,
            impact_residuals,
            impact_energy: 0.0,
            closure_error: 0.0,
        };
    };

    let mut event_steps: Vec<usize> = traj
        .impulses
        .iter()
        .filter(|r| r.p_n > 0.0 && r.gamma_na < -IMPACT_THRESHOLD)
        .map(|r| r.step / traj.sample_every)
        .collect();
    event_steps.dedup();
    let mut events = event_steps.into_iter().peekable();

    let (k0, v0, mut pin_prev, mut pd_prev) = energy_terms(p, first);
    let e0 = k0 + v0;
    let (mut work, mut damp) = (0.0, 0.0);
    let mut prev_residual = 0.0;
    let mut scale = e0.abs();
    let mut worst = 0.0f64;
    records.push(EnergyRecord {
        t: first.t,
        kinetic: k0,
        potential: v0,
        input_work: 0.0,
        damping_loss: 0.0,
        residual: 0.0,
    });
    for (i, s) in traj.samples.iter().enumerate().skip(1) {
        let (kinetic, potential, pin, pd) = energy_terms(p, s);
        let h = s.t - traj.samples[i - 1].t;
        work += 0.5 * h * (pin_prev + pin);
        damp += 0.5 * h * (pd_prev + pd);
        pin_prev = pin;
        pd_prev = pd;
        let residual = kinetic + potential - e0 - work + damp;
        let interval = i - 1;
        while events.peek().is_some_and(|&e| e < interval) {
            events.next();
        }
        if events.peek() == Some(&interval) {
            impact_residuals.push((traj.samples[i - 1].t, residual - prev_residual));
        }
        prev_residual = residual;
        scale = scale
            .max(kinetic + potential)
            .max(work.abs())
            .max(damp.abs());
        worst = worst.max(residual.abs());
        records.push(EnergyRecord {
            t: s.t,
            kinetic,
            potential,
            input_work: work,
            damping_loss: damp,
            residual,
        });
    }
    let impact_energy = impact_residuals.iter().map(|r| r.1).sum();
    EnergyAudit {
        records,
        impact_residuals,
        impact_energy,
        closure_error: if scale > 0.0 { worst / scale } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::{simulate, ImpulseRecord};

    fn synthetic(dt: f64, n: usize, f: impl Fn(f64) -> (f64, f64)) -> Trajectory {
        Trajectory {
            dt,
            sample_every: 1,
            samples: (0..=n)
                .map(|k| {
                    let t = k as f64 * dt;
                    let (x, v) = f(t);
                    State {
                        t,
                        q: Vec2::new(x, x),
                        u: Vec2::new(v, v),
                    }
                })
                .collect(),
            impulses: Vec::new(),
            stats: StepStats::default(),
            failure: None,
        }
    }

    #[test]
    fn no_impulses_no_events() {
        let traj = synthetic(1e-3, 10, |_| (0.0, 0.0));
        assert!(extract_events(&traj, IMPACT_THRESHOLD).is_empty());
    }

    #[test]
    fn injected_impulse_gives_one_event() {
        let mut traj = synthetic(1e-3, 10, |_| (0.0, 0.0));
        let rec = ImpulseRecord {
            step: 3,
            t: 3e-3,
            wall: Wall::Right,
            gamma_na: -0.02,
            gamma_ne: 0.009,
            p_n: 0.1,
            p_t: 0.0,
        };
        traj.impulses.push(rec);
        // Holding impulse: positive P_N but no approach.
        traj.impulses.push(ImpulseRecord {
            step: 4,
            gamma_na: 0.0,
            ..rec
        });
        let ev = extract_events(&traj, IMPACT_THRESHOLD);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].wall, Wall::Right);
        let ratios = restitution_audit(&ev);
        assert!((ratios[0].1 - 0.45).abs() < 1e-15);
    }

    #[test]
    fn inelastic_ratio_is_zero() {
        let ev = ImpactEvent {
            t: 0.0,
            wall: Wall::Left,
            gamma_na: -0.3,
            gamma_ne: 0.0,
            p_n: 1.0,
            p_t: 0.0,
        };
        assert_eq!(restitution_audit(&[ev])[0].1, 0.0);
    }

    #[test]
    fn pure_sinusoid_is_period_one() {
        let omega = 100.0;
        let period = std::f64::consts::TAU / omega;
        let dt = 1e-5;
        let n = step_count(60.0 * period, dt);
        let traj = synthetic(dt, n, |t| {
            (1e-3 * (omega * t).sin(), 1e-3 * omega * (omega * t).cos())
        });
        let s = poincare_section(&traj, omega, 5.0 * period).unwrap();
        assert_eq!(s.classification, Regime::Periodic1);
        assert!(s.poincare_points.len() >= 50);
        assert_eq!(s.impacts_per_forcing_period, 0.0);
    }

    #[test]
    fn subharmonic_is_multi_periodic_and_noise_is_chaotic() {
        let omega = 100.0;
        let period = std::f64::consts::TAU / omega;
        let dt = 1e-5;
        let n = step_count(60.0 * period, dt);
        let traj = synthetic(dt, n, |t| {
            (
                1e-3 * (0.5 * omega * t).sin(),
                0.5e-3 * omega * (0.5 * omega * t).cos(),
            )
        });
        let s = poincare_section(&traj, omega, 0.0).unwrap();
        assert_eq!(s.classification, Regime::MultiPeriodic);
        assert_eq!(s.clusters, 2);

        // Incommensurate frequency: section fills a closed curve.
        let w2 = omega * (5f64.sqrt() - 1.0) / 2.0;
        let traj = synthetic(dt, n, |t| {
            (1e-3 * (w2 * t).sin(), 1e-3 * w2 * (w2 * t).cos())
        });
        let s = poincare_section(&traj, omega, 0.0).unwrap();
        assert_eq!(s.classification, Regime::QuasiPeriodicOrChaotic);
    }

    #[test]
    fn short_horizon_is_rejected() {
        let traj = synthetic(1e-4, 1000, |_| (0.0, 0.0));
        assert!(matches!(
            poincare_section(&traj, 100.0, 0.0),
            Err(AnalysisError::InsufficientHorizon { .. })
        ));
    }

    #[test]
    fn smooth_reference_matches_closed_form() {
        let p = SystemParams {
            beta: 0.0,
            ks: 0.0,
            cs: 0.0,
            t_final: 0.2,
            ..SystemParams::default()
        };
        let traj = smooth_reference(&p, State::at_rest()).unwrap();
        let j = p.j1 + p.j3 + p.j2x;
        for s in &traj.samples {
            let want = p.torque_amplitude * (1.0 - (p.omega * s.t).cos()) / (p.omega * j);
            assert!((s.u[1] - want).abs() <= 1e-9, "{} {}", s.u[1], want);
            assert_eq!(s.q[0], s.q[1]);
        }
    }

    #[test]
    fn smooth_reference_empty_horizon() {
        let p = SystemParams {
            t_final: 0.0,
            ..SystemParams::default()
        };
        let traj = smooth_reference(&p, State::at_rest()).unwrap();
        assert_eq!(traj.samples, vec![State::at_rest()]);
    }

    #[test]
    fn energy_at_rest_is_zero() {
        let p = SystemParams::default();
        let traj = synthetic(1e-5, 0, |_| (0.0, 0.0));
        let audit = energy_audit(&traj, &p);
        assert_eq!(audit.records.len(), 1);
        let r = audit.records[0];
        assert_eq!(
            (r.kinetic, r.potential, r.input_work, r.damping_loss),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn smooth_reference_conserves_energy() {
        let p = SystemParams {
            t_final: 0.2,
            ..SystemParams::default()
        };
        let traj = smooth_reference(&p, State::at_rest()).unwrap();
        let audit = energy_audit(&traj, &p);
        assert!(audit.closure_error < 1e-6, "{}", audit.closure_error);
        assert!(audit.impact_residuals.is_empty());
    }

    #[test]
    fn stepper_energy_with_impacts_is_dissipative() {
        let p = SystemParams {
            mu: 0.0,
            t_final: 0.2,
            ..SystemParams::default()
        };
        let traj = simulate(&p, State::at_rest(), 1);
        let audit = energy_audit(&traj, &p);
        assert!(!audit.impact_residuals.is_empty());
        assert!(audit.impact_energy < 0.0);
    }
}
