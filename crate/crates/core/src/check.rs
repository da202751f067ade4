//! Self-checks run by `ujoint check`.
//!
//! Each battery compares the solver against an independent computation and
//! returns a [`CheckOutcome`] with the worst observed metric.

use crate::analysis::{extract_events, smooth_reference};
use crate::lcp::{residual, solve_enumerative, solve_lemke_default, LcpProblem, LcpStatus};
use crate::model::{eval_kinematics, State, SystemParams};
use crate::stepper::{simulate, IMPACT_THRESHOLD};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub metric: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckTolerances {
    pub lcp_residual: f64,
    pub lcp_agreement: f64,
    pub fd_relative: f64,
    pub phi2: f64,
    pub restitution: f64,
    pub zero_clearance: f64,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            lcp_residual: 1e-10,
            lcp_agreement: 1e-8,
            fd_relative: 1e-6,
            phi2: 1e-8,
            restitution: 1e-6,
            zero_clearance: 1e-3,
        }
    }
}

pub const LCP_TRIALS: usize = 1000;
pub const FD_SAMPLES: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Symmetric positive definite test matrix `B^T B + 0.1 I` with entries of
/// `B` and `b` uniform in `[-1, 1]`.
pub fn random_pd_problem(rng: &mut ChaCha8Rng, n: usize) -> LcpProblem {
    let b_mat = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let a = b_mat.transpose() * &b_mat + DMatrix::identity(n, n) * 0.1;
    let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    LcpProblem::new(a, b).expect("generated problem is well formed")
}

/// Lemke against exhaustive enumeration on random PD instances of size 1..=8.
pub fn lcp_battery(trials: usize, seed: u64, tol: &CheckTolerances) -> CheckOutcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_res = 0.0f64;
    let mut worst_diff = 0.0f64;
    let mut failures = 0usize;
    for _ in 0..trials {
        let n = rng.gen_range(1..=8);
        let prob = random_pd_problem(&mut rng, n);
        let lemke = solve_lemke_default(&prob);
        let exact = solve_enumerative(&prob).expect("size is within enumeration limit");
        if lemke.status != LcpStatus::Solved || exact.status != LcpStatus::Solved {
            failures += 1;
            continue;
        }
        worst_res = worst_res.max(residual(&prob, &lemke));
        worst_diff = worst_diff.max((&lemke.z - &exact.z).amax());
    }
    let passed = failures == 0 && worst_res <= tol.lcp_residual && worst_diff <= tol.lcp_agreement;
    CheckOutcome {
        name: "lcp-oracle",
        passed,
        metric: worst_diff,
        tolerance: tol.lcp_agreement,
        detail: format!(
            "{trials} instances, {failures} unsolved, max residual {worst_res:.2e}, max |z - z_enum| {worst_diff:.2e}"
        ),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Analytic `(eta', nu')` with respect to `phi1c`.
pub fn analytic_derivatives(phi: f64, beta: f64) -> (f64, f64) {
    let k = eval_kinematics(phi, 0.0, beta);
    (k.eta_prime, k.nu_prime)
}

fn five_point(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Largest deviation between the closed-form `phi2` and an RK4 integral of
/// `nu` over one revolution.
pub fn phi2_integration_error(beta: f64, steps: usize) -> f64 {
    let nu = |phi: f64| eval_kinematics(phi, 0.0, beta).nu;
    let h = TAU / steps as f64;
    let mut y = eval_kinematics(0.0, 0.0, beta).phi2;
    let mut worst = 0.0f64;
    for i in 0..steps {
        let x = i as f64 * h;
        y += h / 6.0 * (nu(x) + 4.0 * nu(x + 0.5 * h) + nu(x + h));
        let exact = eval_kinematics(x + h, 0.0, beta).phi2;
        worst = worst.max((y - exact).abs());
    }
    worst
}

/// Finite-difference check of the derivative provider, plus the `phi2`
/// integral check. Relative errors use `max(|analytic|, 1e-3)` as the
/// denominator so that zero crossings do not dominate.
pub fn kinematics_battery(
    samples: usize,
    seed: u64,
    derivatives: &dyn Fn(f64, f64) -> (f64, f64),
    tol: &CheckTolerances,
) -> CheckOutcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_beta = 80f64.to_radians();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let phi = rng.gen_range(0.0..TAU);
        let beta = rng.gen_range(0.0..max_beta);
        let (eta_p, nu_p) = derivatives(phi, beta);
        let fd_eta = five_point(|x| eval_kinematics(x, 0.0, beta).eta, phi, 1e-4);
        let fd_nu = five_point(|x| eval_kinematics(x, 0.0, beta).nu, phi, 1e-4);
        for (an, fd) in [(eta_p, fd_eta), (nu_p, fd_nu)] {
            let rel = (an - fd).abs() / an.abs().max(1e-3);
            worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
        }
    }
    let phi2_err = [0.0, 5.0, 30.0, 60.0, 80.0]
        .iter()
        .map(|d: &f64| phi2_integration_error(d.to_radians(), 20_000))
        .fold(0.0, f64::max);
    CheckOutcome {
        name: "kinematics-fd",
        passed: worst <= tol.fd_relative && phi2_err <= tol.phi2,
        metric: worst,
        tolerance: tol.fd_relative,
        detail: format!(
            "{samples} samples, max relative error {worst:.2e}, phi2 integral error {phi2_err:.2e}"
        ),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Frictionless run with default parameters over 1 s: every impact must
/// satisfy `gamma_NE = -eps_N gamma_NA`.
pub fn restitution_check(tol: &CheckTolerances) -> CheckOutcome {
    let start = Instant::now();
    let p = SystemParams {
        mu: 0.0,
        t_final: 1.0,
        ..SystemParams::default()
    };
    let traj = simulate(&p, State::at_rest(), 1000);
    let events = extract_events(&traj, IMPACT_THRESHOLD);
    let worst = events
        .iter()
        .map(|e| (e.gamma_ne + p.eps_n * e.gamma_na).abs() / e.gamma_na.abs())
        .fold(0.0, f64::max);
    CheckOutcome {
        name: "restitution",
        passed: traj.is_complete() && !events.is_empty() && worst <= tol.restitution,
        metric: worst,
        tolerance: tol.restitution,
        detail: format!("{} impacts, worst relative error {worst:.2e}", events.len()),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Zero clearance over 1 s against the rigidly coupled smooth integrator.
pub fn zero_clearance_check(tol: &CheckTolerances) -> CheckOutcome {
    let start = Instant::now();
    let p = SystemParams {
        clearance: 0.0,
        t_final: 1.0,
        ..SystemParams::default()
    };
    let every = 100;
    let traj = simulate(&p, State::at_rest(), every);
    let events = extract_events(&traj, IMPACT_THRESHOLD).len();
    let (dev, note) = match smooth_reference(&p, State::at_rest()) {
        Ok(reference) => {
            let dev = traj
                .samples
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    reference
                        .samples
                        .get(i * every)
                        .map(|r| (s.q[1] - r.q[1]).abs())
                })
                .fold(0.0, f64::max);
            (dev, String::new())
        }
        Err(e) => (f64::INFINITY, format!(", reference failed: {e}")),
    };
    CheckOutcome {
        name: "zero-clearance",
        passed: traj.is_complete() && events == 0 && dev <= tol.zero_clearance,
        metric: dev,
        tolerance: tol.zero_clearance,
        detail: format!("{events} impacts, sup |phi1c - reference| {dev:.2e} rad{note}"),
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(tol: &CheckTolerances) -> Vec<CheckOutcome> {
    vec![
        lcp_battery(LCP_TRIALS, DEFAULT_SEED, tol),
        kinematics_battery(FD_SAMPLES, DEFAULT_SEED, &analytic_derivatives, tol),
        restitution_check(tol),
        zero_clearance_check(tol),
    ]
}

pub fn render_table(outcomes: &[CheckOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(&format!(
            "{:<6} {:<16} {:>10.3e} <= {:<8.1e} {:>7.2}s  {}\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.metric,
            o.tolerance,
            o.seconds,
            o.detail
        ));
    }
    out
}
