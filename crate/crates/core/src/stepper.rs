//! Midpoint time-stepping of the impact dynamics.
//!
//! Each step evaluates the system at the midpoint configuration
//! `q_M = q_A + dt/2 u_A`, collects the walls whose gap is closed there, and
//! either advances the smooth dynamics or solves one LCP for the step
//! impulses. Contact forces and impact impulses are not distinguished: the
//! per-step impulse carries both.
//!
//! The friction law is encoded with the usual saturation split of the
//! tangential impulse, `P_T = P_R - mu P_N` with `0 <= P_R <= 2 mu P_N`, and
//! the tangential velocity measure `xi_T = xi_R - xi_L`. The unknowns are
//! `z = (P_N, P_R, xi_L)` and their complements `w = (xi_N, xi_R, P_L)`,
//! one triple per active wall.

use crate::lcp::{self, LcpProblem, LcpStatus};
use crate::model::{
    contact_jacobians, contact_set, eval_kinematics, force_vector, gap_functions, mass_matrix,
    ContactSet, MassMatrix, State, SystemParams, Vec2, Wall,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Normal approach speed above which a contact impulse counts as an impact, m/s.
pub const IMPACT_THRESHOLD: f64 = 1e-6;

/// Gap below which a wall is treated as closed at the midpoint, m.
pub const ACTIVATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub activation_tol: f64,
    pub lcp_tol: f64,
    /// `None` uses [`lcp::default_max_pivots`].
    pub max_pivots: Option<usize>,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            activation_tol: ACTIVATION_TOL,
            lcp_tol: lcp::DEFAULT_TOL,
            max_pivots: None,
        }
    }
}

/// Impulses and relative velocities at one active wall over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactImpulse {
    pub wall: Wall,
    /// Normal impulse, N m s (generalized, conjugate to the gap in m).
    pub p_n: f64,
    pub p_r: f64,
    /// Signed tangential impulse `p_r - mu p_n`.
    pub p_t: f64,
    pub gamma_na: f64,
    pub gamma_ne: f64,
    pub gamma_ta: f64,
    pub gamma_te: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcpReport {
    pub status: LcpStatus,
    pub pivots: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: State,
    /// Walls closed at the midpoint.
    pub active: ContactSet,
    pub impulses: Vec<ContactImpulse>,
    /// `None` when no wall was active and no LCP was needed.
    pub lcp: Option<LcpReport>,
    /// Mass matrix used for the step (midpoint configuration).
    pub mass: MassMatrix,
    /// Velocity the step would reach without contact impulses.
    pub u_free: Vec2,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("LCP {status} at t = {t:.9} s (q = [{q0:e}, {q1:e}], u = [{u0:e}, {u1:e}], residual {residual:e}, {pivots} pivots)",
    t = state.t, q0 = state.q[0], q1 = state.q[1], u0 = state.u[0], u1 = state.u[1])]
pub struct StepError {
    /// State at the start of the failing step.
    pub state: State,
    pub active: ContactSet,
    pub status: LcpStatus,
    pub residual: f64,
    pub pivots: usize,
}

/// Builds the per-step LCP for the active walls.
///
/// With `G_XY = W_X^T M^-1 W_Y`, row blocks are
///
/// ```text
/// xi_N = (G_NN - mu G_NT) P_N + G_NT P_R + W_N^T M^-1 h dt + (1 + eps_N) gamma_NA
/// xi_R = (G_TN - mu G_TT) P_N + G_TT P_R + xi_L + W_T^T M^-1 h dt + (1 + eps_T) gamma_TA
/// P_L  = 2 mu P_N - P_R
/// ```
#[allow(clippy::too_many_arguments)]
pub fn assemble_lcp(
    mass: &MassMatrix,
    h: &Vec2,
    normals: &[Vec2],
    tangential: &Vec2,
    gamma_na: &[f64],
    gamma_ta: f64,
    eps_n: f64,
    eps_t: f64,
    mu: f64,
    dt: f64,
) -> Result<LcpProblem, lcp::LcpError> {
    assert!(
        mass.0.iter().all(|&m| m > 0.0),
        "mass matrix must be positive definite"
    );
    assert_eq!(normals.len(), gamma_na.len());
    let k = normals.len();
    let wt = tangential;
    let g_tt = mass.inv_form(wt, wt);
    let mut a = DMatrix::zeros(3 * k, 3 * k);
    let mut b = DVector::zeros(3 * k);
    for (i, wn_i) in normals.iter().enumerate() {
        let g_nt = mass.inv_form(wn_i, wt);
        for (j, wn_j) in normals.iter().enumerate() {
            let g_nn = mass.inv_form(wn_i, wn_j);
            let g_tn = mass.inv_form(wt, wn_j);
            a[(i, j)] = g_nn - mu * g_nt;
            a[(i, k + j)] = g_nt;
            a[(k + i, j)] = g_tn - mu * g_tt;
            a[(k + i, k + j)] = g_tt;
        }
        a[(k + i, 2 * k + i)] = 1.0;
        a[(2 * k + i, i)] = 2.0 * mu;
        a[(2 * k + i, k + i)] = -1.0;

        b[i] = mass.inv_form(wn_i, h) * dt + (1.0 + eps_n) * gamma_na[i];
        b[k + i] = mass.inv_form(wt, h) * dt + (1.0 + eps_t) * gamma_ta;
    }
    LcpProblem::new(a, b)
}

/// Advances `state_a` by one step of length `dt`.
pub fn step(p: &SystemParams, state_a: &State, dt: f64) -> Result<StepResult, StepError> {
    step_with(p, state_a, dt, &StepOptions::default())
}

pub fn step_with(
    p: &SystemParams,
    state_a: &State,
    dt: f64,
    opts: &StepOptions,
) -> Result<StepResult, StepError> {
    let u_a = state_a.u;
    let q_m = state_a.q + u_a * (0.5 * dt);
    let mid = State {
        t: state_a.t + 0.5 * dt,
        q: q_m,
        u: u_a,
    };
    let kin = eval_kinematics(q_m[1], u_a[1], p.beta);
    let mass = mass_matrix(p, &kin);
    let h = force_vector(p, &mid, &kin);
    let u_free = u_a + mass.solve(&h) * dt;

    let active = contact_set(p, &q_m, opts.activation_tol);
    let (u_e, impulses, lcp_report) = if active.is_empty() {
        (u_free, Vec::new(), None)
    } else {
        let jac = contact_jacobians(p, &active, &kin);
        let normals: Vec<Vec2> = jac.normals.iter().map(|(_, w)| *w).collect();
        let wt = jac.tangential;
        let gamma_na: Vec<f64> = normals.iter().map(|w| w.dot(&u_a)).collect();
        let gamma_ta = wt.dot(&u_a);
        let problem = assemble_lcp(
            &mass, &h, &normals, &wt, &gamma_na, gamma_ta, p.eps_n, p.eps_t, p.mu, dt,
        )
        .map_err(|_| StepError {
            state: *state_a,
            active,
            status: LcpStatus::Inaccurate,
            residual: f64::NAN,
            pivots: 0,
        })?;
        let max_pivots = opts
            .max_pivots
            .unwrap_or_else(|| lcp::default_max_pivots(problem.dim()));
        let sol = lcp::solve_lemke(&problem, max_pivots, opts.lcp_tol)
            .expect("step options hold valid solver settings");
        let residual = lcp::residual(&problem, &sol);
        if sol.status != LcpStatus::Solved {
            return Err(StepError {
                state: *state_a,
                active,
                status: sol.status,
                residual,
                pivots: sol.pivots,
            });
        }

        let k = normals.len();
        let mut generalized = Vec2::zeros();
        for (i, wn) in normals.iter().enumerate() {
            generalized += (wn - wt * p.mu) * sol.z[i] + wt * sol.z[k + i];
        }
        let u_e = u_free + mass.solve(&generalized);
        let gamma_te = wt.dot(&u_e);
        let impulses = jac
            .normals
            .iter()
            .enumerate()
            .map(|(i, (wall, wn))| ContactImpulse {
                wall: *wall,
                p_n: sol.z[i],
                p_r: sol.z[k + i],
                p_t: sol.z[k + i] - p.mu * sol.z[i],
                gamma_na: gamma_na[i],
                gamma_ne: wn.dot(&u_e),
                gamma_ta,
                gamma_te,
            })
            .collect();
        let report = LcpReport {
            status: sol.status,
            pivots: sol.pivots,
            residual,
        };
        (u_e, impulses, Some(report))
    };

    let q_e = q_m + u_e * (0.5 * dt);
    Ok(StepResult {
        state: State {
            t: state_a.t + dt,
            q: q_e,
            u: u_e,
        },
        active,
        impulses,
        lcp: lcp_report,
        mass,
        u_free,
    })
}

/// One non-zero contact impulse retained by [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseRecord {
    /// Zero-based index of the step that produced it.
    pub step: usize,
    /// Start time of that step.
    pub t: f64,
    pub wall: Wall,
    pub gamma_na: f64,
    pub gamma_ne: f64,
    pub p_n: f64,
    pub p_t: f64,
}

/// Running extrema collected while stepping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub steps: usize,
    pub contact_steps: usize,
    /// Smallest end-of-step gap over both walls, m.
    pub min_gap: f64,
    /// Largest `|gamma_N|` seen at the start or end of any step, m/s.
    pub max_gamma_n: f64,
    pub max_lcp_residual: f64,
    /// Largest `|P_T| - mu P_N`, N m s.
    pub max_cone_excess: f64,
    pub max_pivots: usize,
}

impl Default for StepStats {
    fn default() -> Self {
        Self {
            steps: 0,
            contact_steps: 0,
            min_gap: f64::INFINITY,
            max_gamma_n: 0.0,
            max_lcp_residual: 0.0,
            max_cone_excess: f64::NEG_INFINITY,
            max_pivots: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step} failed: {error}")]
pub struct StepFailure {
    pub step: usize,
    pub error: StepError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub sample_every: usize,
    /// States at steps `0, sample_every, 2 sample_every, ...`.
    pub samples: Vec<State>,
    pub impulses: Vec<ImpulseRecord>,
    pub stats: StepStats,
    pub failure: Option<StepFailure>,
}

impl Trajectory {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_state(&self) -> Option<&State> {
        self.samples.last()
    }
}

/// Number of whole steps of length `dt` in `horizon`, forgiving round-off
/// in the ratio.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    if horizon <= 0.0 {
        return 0;
    }
    let r = horizon / dt;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as usize
    } else {
        r.floor() as usize
    }
}

/// Integrates from `initial` over `p.t_final` with step `p.dt`.
pub fn simulate(p: &SystemParams, initial: State, sample_every: usize) -> Trajectory {
    simulate_with(p, initial, sample_every, &StepOptions::default())
}

pub fn simulate_with(
    p: &SystemParams,
    initial: State,
    sample_every: usize,
    opts: &StepOptions,
) -> Trajectory {
    assert!(sample_every >= 1, "sample_every must be at least 1");
    let n_steps = step_count(p.t_final, p.dt);
    let mut traj = Trajectory {
        dt: p.dt,
        sample_every,
        samples: Vec::with_capacity(n_steps / sample_every + 1),
        impulses: Vec::new(),
        stats: StepStats::default(),
        failure: None,
    };
    traj.samples.push(initial);

    let mut state = initial;
    let mut stats = StepStats::default();
    for k in 0..n_steps {
        let res = match step_with(p, &state, p.dt, opts) {
            Ok(r) => r,
            Err(error) => {
                traj.failure = Some(StepFailure { step: k, error });
                break;
            }
        };

        stats.steps += 1;
        let speed_a = p.arm_length * state.delta_dot().abs();
        state = res.state;
        // Uniform stamps, free of accumulated round-off.
        state.t = initial.t + (k + 1) as f64 * p.dt;
        let (g_minus, g_plus) = gap_functions(p, &state.q);
        stats.min_gap = stats.min_gap.min(g_minus).min(g_plus);
        stats.max_gamma_n = stats
            .max_gamma_n
            .max(speed_a)
            .max(p.arm_length * state.delta_dot().abs());

        if let Some(report) = res.lcp {
            stats.contact_steps += 1;
            stats.max_lcp_residual = stats.max_lcp_residual.max(report.residual);
            stats.max_pivots = stats.max_pivots.max(report.pivots);
        }
        for imp in &res.impulses {
            stats.max_cone_excess = stats.max_cone_excess.max(imp.p_t.abs() - p.mu * imp.p_n);
            if imp.p_n != 0.0 || imp.p_t != 0.0 {
                traj.impulses.push(ImpulseRecord {
                    step: k,
                    t: initial.t + k as f64 * p.dt,
                    wall: imp.wall,
                    gamma_na: imp.gamma_na,
                    gamma_ne: imp.gamma_ne,
                    p_n: imp.p_n,
                    p_t: imp.p_t,
                });
            }
        }
        if (k + 1) % sample_every == 0 {
            traj.samples.push(state);
        }
    }
    traj.stats = stats;
    traj
}
