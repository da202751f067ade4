//! Dense linear complementarity problems.
//!
//! Given a square matrix `A` and a vector `b`, find `z` such that
//!
//! ```text
//! w = A z + b,   z >= 0,   w >= 0,   z^T w = 0.
//! ```
//!
//! [`solve_lemke`] is the production solver: Lemke's complementary pivoting
//! with a covering vector of ones and a lexicographic ratio test, so that
//! degenerate pivots cannot cycle. [`solve_enumerative`] tries every
//! complementary index set and is only meant for cross-checking on small
//! instances.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default complementarity tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Largest dimension accepted by [`solve_enumerative`].
pub const MAX_ENUMERATION_DIM: usize = 14;

// Entering-column entries below this (relative to the column's largest
// magnitude) are not eligible as pivots.
const PIVOT_EPS: f64 = 1e-12;
// Relative tolerance for treating two ratios as tied.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcpError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("vector has length {len}, matrix dimension is {dim}")]
    DimensionMismatch { dim: usize, len: usize },
    #[error("problem data contains a non-finite entry")]
    NonFinite,
    #[error("enumeration is limited to n <= {MAX_ENUMERATION_DIM}, got n = {0}")]
    TooLarge(usize),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(&'static str),
}

/// A validated LCP instance `(A, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcpProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LcpProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, LcpError> {
        if a.nrows() != a.ncols() {
            return Err(LcpError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if b.len() != a.nrows() {
            return Err(LcpError::DimensionMismatch {
                dim: a.nrows(),
                len: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(LcpError::NonFinite);
        }
        Ok(Self { a, b })
    }

    /// Builds a problem from row slices. Convenient for tests and fixtures.
    pub fn from_rows(rows: &[&[f64]], b: &[f64]) -> Result<Self, LcpError> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LcpError::NotSquare { rows: n, cols });
        }
        let a = DMatrix::from_fn(n, cols, |i, j| rows[i][j]);
        Self::new(a, DVector::from_column_slice(b))
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Same matrix, right-hand side multiplied by `s`.
    pub fn scaled_rhs(&self, s: f64) -> Result<Self, LcpError> {
        Self::new(self.a.clone(), &self.b * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcpStatus {
    /// Complementary solution with residual within tolerance.
    Solved,
    /// The entering column had no positive entry (secondary ray).
    RayTermination,
    /// Pivot budget exhausted.
    PivotLimit,
    /// A complementary basis was reached but its residual exceeds the tolerance.
    Inaccurate,
}

impl LcpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LcpStatus::Solved => "solved",
            LcpStatus::RayTermination => "ray_termination",
            LcpStatus::PivotLimit => "pivot_limit",
            LcpStatus::Inaccurate => "inaccurate",
        }
    }
}

impl std::fmt::Display for LcpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    pub status: LcpStatus,
    /// Pivots performed (Lemke) or index sets examined (enumeration).
    pub pivots: usize,
}

impl LcpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == LcpStatus::Solved
    }
}

/// Worst violation of the complementarity conditions:
/// `max(|w - Az - b|_inf, max(0, -min z), max(0, -min w), |z^T w|)`.
pub fn residual(problem: &LcpProblem, solution: &LcpSolution) -> f64 {
    complementarity_residual(problem, &solution.z, &solution.w)
}

fn complementarity_residual(problem: &LcpProblem, z: &DVector<f64>, w: &DVector<f64>) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let eq = (w - (&problem.a * z + &problem.b)).amax();
    let zneg = (-z.min()).max(0.0);
    let wneg = (-w.min()).max(0.0);
    let comp = z.dot(w).abs();
    eq.max(zneg).max(wneg).max(comp)
}

/// Default pivot budget for a problem of dimension `n`.
pub fn default_max_pivots(n: usize) -> usize {
    100 * n.max(1)
}

/// [`solve_lemke`] with the default tolerance and pivot budget.
pub fn solve_lemke_default(problem: &LcpProblem) -> LcpSolution {
    solve_lemke(problem, default_max_pivots(problem.dim()), DEFAULT_TOL)
        .expect("default settings are valid")
}

/// Lemke's complementary pivoting method.
///
/// Works on the tableau `w - A z - e z0 = b` with basis initially `w`. The
/// first pivot brings the artificial variable `z0` in at the row of the most
/// negative `b`; afterwards the complement of each leaving variable enters,
/// until `z0` leaves. Leaving rows are chosen by the lexicographic minimum
/// ratio over `[rhs | B^-1]`, preferring `z0` whenever it ties on the plain
/// ratio.
///
/// On reaching a complementary basis the active block `A_aa z_a = -b_a` is
/// re-solved directly to remove the round-off accumulated by pivoting.
pub fn solve_lemke(
    problem: &LcpProblem,
    max_pivots: usize,
    tol: f64,
) -> Result<LcpSolution, LcpError> {
    if max_pivots == 0 {
        return Err(LcpError::InvalidSettings("max_pivots must be at least 1"));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(LcpError::InvalidSettings("tol must be positive"));
    }
    let n = problem.dim();
    if n == 0 || problem.b.iter().all(|&v| v >= 0.0) {
        return Ok(LcpSolution {
            z: DVector::zeros(n),
            w: problem.b.clone(),
            status: LcpStatus::Solved,
            pivots: 0,
        });
    }

    let mut tab = Tableau::new(problem);

    // First pivot: z0 replaces the row with the most negative rhs. On ties
    // the smallest index keeps every other row lexicographically positive.
    let bmin = problem.b.min();
    let tie = TIE_EPS * bmin.abs().max(1.0);
    let first = (0..n)
        .find(|&i| problem.b[i] <= bmin + tie)
        .expect("minimum exists");
    let mut leaving = tab.basis[first];
    tab.pivot(first, tab.z0());
    let mut pivots = 1;

    loop {
        if leaving == tab.z0() {
            break;
        }
        if pivots >= max_pivots {
            return Ok(tab.partial(problem, LcpStatus::PivotLimit, pivots));
        }
        let entering = tab.complement(leaving);
        let Some(row) = tab.leaving_row(entering) else {
            return Ok(tab.partial(problem, LcpStatus::RayTermination, pivots));
        };
        leaving = tab.basis[row];
        tab.pivot(row, entering);
        pivots += 1;
    }

    let (z, w) = tab.finish(problem);
    let status = if complementarity_residual(problem, &z, &w) <= tol {
        LcpStatus::Solved
    } else {
        LcpStatus::Inaccurate
    };
    Ok(LcpSolution {
        z,
        w,
        status,
        pivots,
    })
}

/// Dense tableau with columns `[w_0..w_n | z_0..z_n | z0 | rhs]`.
struct Tableau {
    n: usize,
    cols: usize,
    data: Vec<f64>,
    /// Variable index held by each row: `0..n` are `w`, `n..2n` are `z`,
    /// `2n` is the artificial `z0`.
    basis: Vec<usize>,
}

impl Tableau {
    fn new(problem: &LcpProblem) -> Self {
        let n = problem.dim();
        let cols = 2 * n + 2;
        let mut data = vec![0.0; n * cols];
        for i in 0..n {
            let row = &mut data[i * cols..(i + 1) * cols];
            row[i] = 1.0;
            for j in 0..n {
                row[n + j] = -problem.a[(i, j)];
            }
            row[2 * n] = -1.0;
            row[2 * n + 1] = problem.b[i];
        }
        Self {
            n,
            cols,
            data,
            basis: (0..n).collect(),
        }
    }

    fn z0(&self) -> usize {
        2 * self.n
    }

    fn rhs(&self) -> usize {
        2 * self.n + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn complement(&self, var: usize) -> usize {
        if var < self.n {
            var + self.n
        } else {
            var - self.n
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let p = self.at(row, col);
        for v in &mut self.data[row * cols..(row + 1) * cols] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[row * cols..(row + 1) * cols].to_vec();
        for i in 0..self.n {
            if i == row {
                continue;
            }
            let f = self.at(i, col);
            if f == 0.0 {
                continue;
            }
            let r = &mut self.data[i * cols..(i + 1) * cols];
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Lexicographic minimum-ratio test for the column of `entering`.
    fn leaving_row(&self, entering: usize) -> Option<usize> {
        let scale = (0..self.n)
            .map(|i| self.at(i, entering).abs())
            .fold(0.0, f64::max);
        let eps = PIVOT_EPS * scale.max(f64::MIN_POSITIVE);
        let mut candidates: Vec<usize> = (0..self.n)
            .filter(|&i| self.at(i, entering) > eps)
            .collect();
        if candidates.is_empty() {
            return None;
        }

        self.keep_min_ratio(&mut candidates, entering, self.rhs());
        if let Some(&r) = candidates.iter().find(|&&r| self.basis[r] == self.z0()) {
            return Some(r);
        }
        // Columns of B^-1 sit under the original w columns.
        for j in 0..self.n {
            if candidates.len() == 1 {
                break;
            }
            self.keep_min_ratio(&mut candidates, entering, j);
        }
        Some(candidates[0])
    }

    fn keep_min_ratio(&self, candidates: &mut Vec<usize>, entering: usize, test_col: usize) {
        let ratio = |i: usize| self.at(i, test_col) / self.at(i, entering);
        let min = candidates
            .iter()
            .map(|&i| ratio(i))
            .fold(f64::INFINITY, f64::min);
        let tie = TIE_EPS * min.abs().max(1.0);
        candidates.retain(|&i| ratio(i) <= min + tie);
    }

    fn basic_z(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.n);
        for (row, &var) in self.basis.iter().enumerate() {
            if (self.n..2 * self.n).contains(&var) {
                z[var - self.n] = self.at(row, self.rhs());
            }
        }
        z
    }

    fn partial(&self, problem: &LcpProblem, status: LcpStatus, pivots: usize) -> LcpSolution {
        let z = self.basic_z();
        let w = problem.a() * &z + problem.b();
        LcpSolution {
            z,
            w,
            status,
            pivots,
        }
    }

    fn finish(&self, problem: &LcpProblem) -> (DVector<f64>, DVector<f64>) {
        let raw = self.basic_z();
        let raw_w = problem.a() * &raw + problem.b();
        let active: Vec<usize> = self
            .basis
            .iter()
            .filter(|&&v| (self.n..2 * self.n).contains(&v))
            .map(|&v| v - self.n)
            .collect();
        let Some(refined) = solve_block(problem, &active) else {
            return (raw, raw_w);
        };
        let refined = refined.map(|v| if v < 0.0 && v > -DEFAULT_TOL { 0.0 } else { v });
        let refined_w = problem.a() * &refined + problem.b();
        if complementarity_residual(problem, &refined, &refined_w)
            <= complementarity_residual(problem, &raw, &raw_w)
        {
            (refined, refined_w)
        } else {
            (raw, raw_w)
        }
    }
}

/// Solves `A_aa z_a = -b_a` with `z` zero outside `active`.
fn solve_block(problem: &LcpProblem, active: &[usize]) -> Option<DVector<f64>> {
    let n = problem.dim();
    let mut z = DVector::zeros(n);
    if active.is_empty() {
        return Some(z);
    }
    let k = active.len();
    let sub = DMatrix::from_fn(k, k, |i, j| problem.a[(active[i], active[j])]);
    let rhs = DVector::from_fn(k, |i, _| -problem.b[active[i]]);
    let sol = sub.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (i, &idx) in active.iter().enumerate() {
        z[idx] = sol[i];
    }
    Some(z)
}

/// Brute-force LCP solver over all `2^n` complementary index sets.
///
/// Index sets are visited in increasing bitmask order; the first candidate
/// with `z >= -tol` and `w >= -tol` is returned with entries in `[-tol, 0)`
/// clamped to zero. Singular sub-blocks are skipped. If no index set yields
/// a solution the status is [`LcpStatus::RayTermination`].
pub fn solve_enumerative(problem: &LcpProblem) -> Result<LcpSolution, LcpError> {
    solve_enumerative_with_tol(problem, DEFAULT_TOL)
}

pub fn solve_enumerative_with_tol(problem: &LcpProblem, tol: f64) -> Result<LcpSolution, LcpError> {
    let n = problem.dim();
    if n > MAX_ENUMERATION_DIM {
        return Err(LcpError::TooLarge(n));
    }
    let clamp = |v: f64| if v < 0.0 && v >= -tol { 0.0 } else { v };
    let mut active = Vec::with_capacity(n);
    for mask in 0u32..(1u32 << n) {
        active.clear();
        active.extend((0..n).filter(|&i| mask & (1 << i) != 0));
        let Some(z) = solve_block(problem, &active) else {
            continue;
        };
        let w = problem.a() * &z + problem.b();
        if z.iter().chain(w.iter()).all(|&v| v >= -tol) {
            return Ok(LcpSolution {
                z: z.map(clamp),
                w: w.map(clamp),
                status: LcpStatus::Solved,
                pivots: mask as usize + 1,
            });
        }
    }
    Ok(LcpSolution {
        z: DVector::zeros(n),
        w: problem.b.clone(),
        status: LcpStatus::RayTermination,
        pivots: 1 << n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> LcpProblem {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = b.transpose() * &b + DMatrix::identity(n, n) * 0.1;
        let q = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        LcpProblem::new(a, q).unwrap()
    }

    #[test]
    fn nonnegative_rhs_gives_zero() {
        let p = LcpProblem::from_rows(&[&[2.0]], &[3.0]).unwrap();
        let s = solve_lemke_default(&p);
        assert_eq!(s.status, LcpStatus::Solved);
        assert_eq!(s.z[0], 0.0);
        assert_eq!(s.w[0], 3.0);
        assert_eq!(s.pivots, 0);
    }

    #[test]
    fn one_dimensional_active() {
        let p = LcpProblem::from_rows(&[&[2.0]], &[-4.0]).unwrap();
        let s = solve_lemke_default(&p);
        assert_eq!(s.status, LcpStatus::Solved);
        assert!((s.z[0] - 2.0).abs() < 1e-14);
        assert!(s.w[0].abs() < 1e-14);
        assert_eq!(residual(&p, &s), 0.0);
    }

    #[test]
    fn two_by_two_all_active() {
        // Frozen from the enumeration oracle: only the full index set is
        // feasible, z = A^-1 (5, 6) = (4/3, 7/3).
        let p = LcpProblem::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]], &[-5.0, -6.0]).unwrap();
        let oracle = solve_enumerative(&p).unwrap();
        assert_eq!(oracle.status, LcpStatus::Solved);
        assert!((oracle.z[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((oracle.z[1] - 7.0 / 3.0).abs() < 1e-14);
        assert_eq!(oracle.pivots, 4);

        let s = solve_lemke_default(&p);
        assert_eq!(s.status, LcpStatus::Solved);
        assert!((s.z[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((s.z[1] - 7.0 / 3.0).abs() < 1e-14);
        assert!(s.w.amax() < 1e-14);
    }

    #[test]
    fn enumeration_trivial() {
        let p = LcpProblem::from_rows(&[&[2.0]], &[3.0]).unwrap();
        let s = solve_enumerative(&p).unwrap();
        assert_eq!(s.z[0], 0.0);
        assert_eq!(s.w[0], 3.0);
    }

    #[test]
    fn residual_detects_perturbation() {
        let p = LcpProblem::from_rows(&[&[2.0]], &[-4.0]).unwrap();
        let mut s = solve_lemke_default(&p);
        s.z[0] += 1e-3;
        assert!(residual(&p, &s) >= 1e-3);
    }

    #[test]
    fn infeasible_problem_ray_terminates() {
        // w = -z - 1 can never be nonnegative for z >= 0.
        let p = LcpProblem::from_rows(&[&[-1.0]], &[-1.0]).unwrap();
        let s = solve_lemke_default(&p);
        assert_eq!(s.status, LcpStatus::RayTermination);
        let e = solve_enumerative(&p).unwrap();
        assert_eq!(e.status, LcpStatus::RayTermination);
    }

    #[test]
    fn degenerate_rhs_ties_terminate() {
        // Identical rows of b force ratio ties on the first pivots.
        let p = LcpProblem::from_rows(
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            &[-1.0, -1.0, -1.0],
        )
        .unwrap();
        let s = solve_lemke_default(&p);
        assert_eq!(s.status, LcpStatus::Solved);
        for i in 0..3 {
            assert!((s.z[i] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_with_zero_rhs_component() {
        // PSD, degenerate: z = (0, 1) is a solution.
        let p = LcpProblem::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]], &[0.0, -1.0]).unwrap();
        let s = solve_lemke_default(&p);
        assert_eq!(s.status, LcpStatus::Solved);
        assert!(residual(&p, &s) <= DEFAULT_TOL);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            LcpProblem::new(DMatrix::zeros(2, 3), DVector::zeros(2)),
            Err(LcpError::NotSquare { .. })
        ));
        assert!(matches!(
            LcpProblem::new(DMatrix::zeros(2, 2), DVector::zeros(3)),
            Err(LcpError::DimensionMismatch { .. })
        ));
        assert_eq!(
            LcpProblem::from_rows(&[&[f64::NAN]], &[1.0]),
            Err(LcpError::NonFinite)
        );
        let p = LcpProblem::new(DMatrix::identity(15, 15), DVector::zeros(15)).unwrap();
        assert_eq!(solve_enumerative(&p), Err(LcpError::TooLarge(15)));
        let p = LcpProblem::from_rows(&[&[1.0]], &[-1.0]).unwrap();
        assert!(solve_lemke(&p, 0, 1e-10).is_err());
        assert!(solve_lemke(&p, 10, 0.0).is_err());
    }

    #[test]
    fn pivot_limit_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = random_pd(&mut rng, 6);
        p.b.fill(-1.0);
        let s = solve_lemke(&p, 1, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, LcpStatus::PivotLimit);
        assert_eq!(s.pivots, 1);
    }

    #[test]
    fn random_pd_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let p = random_pd(&mut rng, n);
            let s = solve_lemke_default(&p);
            assert_eq!(s.status, LcpStatus::Solved);
            assert!(residual(&p, &s) <= 1e-10);
            assert!(s.pivots <= default_max_pivots(n));
            let e = solve_enumerative(&p).unwrap();
            assert!((&s.z - &e.z).amax() <= 1e-8);
        }
    }

    proptest::proptest! {
        #[test]
        fn rhs_scaling_scales_solution(seed in 0u64..10_000, s in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=6);
            let p = random_pd(&mut rng, n);
            let base = solve_lemke_default(&p);
            let scaled = solve_lemke_default(&p.scaled_rhs(s).unwrap());
            proptest::prop_assert!(base.is_solved() && scaled.is_solved());
            let err = (&scaled.z - &base.z * s).amax();
            proptest::prop_assert!(err <= 1e-9 * s.max(1.0), "err {err}");
        }
    }
}
