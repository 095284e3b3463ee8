//! Nonnegative LASSO solvers for the per-segment matching problem.
//!
//! The primary solver traces the homotopy (regularization) path from
//! lambda_max down to the requested lambda, maintaining an active set that is
//! updated at each breakpoint. A projected proximal-gradient (ISTA) solver is
//! provided as an independent cross-check; both minimize
//!
//!   lambda * ||w||_1 + 1/2 * ||A w - b||_2^2    subject to w >= 0.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

/// Dense 4 x n matrix of candidate residual vectors (one column per candidate).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
}

impl DesignMatrix {
    pub const ROWS: usize = 4;

    /// Build from column vectors. Requires at least one finite column.
    pub fn from_columns(columns: &[[f64; 4]]) -> Result<Self, SolverError> {
        if columns.is_empty() {
            return Err(SolverError::InvalidInput("empty design matrix".into()));
        }
        if columns.iter().flatten().any(|x| !x.is_finite()) {
            return Err(SolverError::InvalidInput("non-finite entry".into()));
        }
        let entries = DMatrix::from_fn(Self::ROWS, columns.len(), |r, c| columns[c][r]);
        Ok(Self { entries })
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.entries.column(j).into_owned()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Nonnegative matching weights, one per candidate column.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    fn new(w: Vec<f64>) -> Self {
        debug_assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Final regularization weight on the path.
    pub lambda: f64,
    /// Breakpoint budget; `None` means 4 * n + 16.
    pub max_iters: Option<usize>,
    /// KKT slack tolerance.
    pub tolerance: f64,
    /// Optional per-row scaling of the residual components. The default
    /// all-ones vector reproduces the unscaled problem.
    pub row_weights: [f64; 4],
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            max_iters: None,
            tolerance: 1e-9,
            row_weights: [1.0; 4],
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(SolverError::InvalidInput("lambda must be > 0".into()));
        }
        if self.tolerance < 0.0 {
            return Err(SolverError::InvalidInput("tolerance must be >= 0".into()));
        }
        if self.row_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(SolverError::InvalidInput("row weights must be > 0".into()));
        }
        Ok(())
    }

    fn breakpoint_budget(&self, n: usize) -> usize {
        self.max_iters.unwrap_or(4 * n + 16)
    }
}

fn apply_row_weights(a: &DesignMatrix, b: &[f64; 4], w: &[f64; 4]) -> (DMatrix<f64>, DVector<f64>) {
    let mut m = a.as_matrix().clone();
    let mut bv = DVector::from_column_slice(b);
    if w.iter().any(|x| *x != 1.0) {
        for r in 0..4 {
            for c in 0..m.ncols() {
                m[(r, c)] *= w[r];
            }
            bv[r] *= w[r];
        }
    }
    (m, bv)
}

/// Exact path solver for the nonnegative LASSO.
pub fn solve_homotopy(
    a: &DesignMatrix,
    b: &[f64; 4],
    cfg: &SolverConfig,
) -> Result<WeightVector, SolverError> {
    cfg.validate()?;
    let (m, bv) = apply_row_weights(a, b, &cfg.row_weights);
    let n = m.ncols();
    let budget = cfg.breakpoint_budget(n);

    // Correlations at w = 0. Only positive correlations can enter.
    let corr0 = m.transpose() * &bv;
    let (mut lambda_cur, first) = corr0
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0usize), |(best, bj), (j, &c)| {
            if c > best {
                (c, j)
            } else {
                (best, bj)
            }
        });

    let mut w = vec![0.0; n];
    if lambda_cur <= cfg.lambda {
        return Ok(WeightVector::new(w));
    }

    let mut active: Vec<usize> = vec![first];
    let mut breakpoints = 0usize;

    loop {
        breakpoints += 1;
        if breakpoints > budget {
            return Err(SolverError::NonConvergence(budget));
        }

        let k = active.len();
        let a_s = DMatrix::from_fn(4, k, |r, c| m[(r, active[c])]);
        let gram = a_s.transpose() * &a_s;
        let rhs_b = a_s.transpose() * &bv;
        let ones = DVector::from_element(k, 1.0);
        let solve = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
            gram.clone().cholesky().map(|ch| ch.solve(rhs)).or_else(|| {
                let lu = gram.clone().full_piv_lu();
                lu.solve(rhs)
            })
        };
        let (u, v) = match (solve(&rhs_b), solve(&ones)) {
            (Some(u), Some(v)) => (u, v),
            _ => return Err(SolverError::NonConvergence(breakpoints)),
        };

        // On the current active set the path is w_S(lambda) = u - lambda * v.
        // Find the largest breakpoint strictly below lambda_cur.
        const REL_STEP: f64 = 1e-12;
        let tie_tol = REL_STEP * lambda_cur.abs().max(1.0);
        let step_ceil = lambda_cur - tie_tol;
        #[derive(Clone, Copy)]
        enum Event {
            Leave(usize), // position in `active`
            Enter(usize), // column index
        }
        // (breakpoint lambda, column index, event)
        let mut events: Vec<(f64, usize, Event)> = Vec::new();

        // Active coordinate hits zero: u_k - lambda v_k = 0 with w shrinking
        // as lambda decreases (v_k < 0).
        for (pos, &j) in active.iter().enumerate() {
            if v[pos] < 0.0 {
                let lam = u[pos] / v[pos];
                if lam.is_finite() && lam < step_ceil {
                    events.push((lam, j, Event::Leave(pos)));
                }
            }
        }

        // Inactive correlation reaches lambda: c_j(lambda) = p_j + lambda q_j.
        let proj_u = &a_s * &u; // A_S u
        let proj_v = &a_s * &v; // A_S v
        for j in 0..n {
            if active.contains(&j) {
                continue;
            }
            let col = m.column(j);
            let p = col.dot(&bv) - col.dot(&proj_u);
            let q = col.dot(&proj_v);
            let denom = 1.0 - q;
            if denom.abs() < 1e-14 {
                continue; // correlation parallel to lambda (e.g. duplicate column)
            }
            let lam = p / denom;
            if lam.is_finite() && lam < step_ceil {
                events.push((lam, j, Event::Enter(j)));
            }
        }

        // Largest breakpoint first; simultaneous breakpoints are processed in
        // ascending column-index order.
        let mut best: Option<(f64, usize, Event)> = None;
        for &(lam, col, ev) in &events {
            match best {
                None => best = Some((lam, col, ev)),
                Some((bl, bc, _)) => {
                    if lam > bl + tie_tol || ((lam - bl).abs() <= tie_tol && col < bc) {
                        best = Some((lam.max(bl), col, ev));
                    }
                }
            }
        }

        let (best_lambda, best_event) = match best {
            Some((lam, _, ev)) => (lam, Some(ev)),
            None => (f64::NEG_INFINITY, None),
        };
        let lambda_next = best_lambda.max(cfg.lambda);
        if best_event.is_none() || lambda_next <= cfg.lambda {
            // Path segment reaches the target lambda.
            for (pos, &j) in active.iter().enumerate() {
                w[j] = (u[pos] - cfg.lambda * v[pos]).max(0.0);
            }
            return Ok(WeightVector::new(w));
        }

        match best_event.unwrap() {
            Event::Leave(pos) => {
                active.remove(pos);
                if active.is_empty() {
                    // Re-enter the best remaining correlation below lambda_next.
                    // With w = 0 again the correlations are corr0.
                    let mut next = None;
                    for j in 0..n {
                        let c = corr0[j];
                        if c < lambda_next && c > cfg.lambda {
                            match next {
                                None => next = Some((c, j)),
                                Some((bc, _)) if c > bc => next = Some((c, j)),
                                _ => {}
                            }
                        }
                    }
                    match next {
                        Some((c, j)) => {
                            lambda_cur = c;
                            active.push(j);
                            continue;
                        }
                        None => return Ok(WeightVector::new(w)),
                    }
                }
            }
            Event::Enter(j) => {
                active.push(j);
                active.sort_unstable();
            }
        }
        lambda_cur = lambda_next;
    }
}

/// Projected ISTA: independent oracle for the homotopy solver.
pub fn solve_ista(
    a: &DesignMatrix,
    b: &[f64; 4],
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<WeightVector, SolverError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SolverError::InvalidInput("lambda must be > 0".into()));
    }
    let m = a.as_matrix();
    let n = m.ncols();

    // Step size 1/L with L the spectral norm of A^T A, via the 4x4 A A^T
    // (same nonzero spectrum).
    let aat = m * m.transpose();
    let lip = aat
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    if lip <= 0.0 {
        return Ok(WeightVector::new(vec![0.0; n]));
    }
    let step = 1.0 / lip;

    let bv = DVector::from_column_slice(b);
    let mut w = DVector::from_element(n, 0.0);
    // Nesterov momentum with gradient-based adaptive restart; same fixed
    // point and stopping rule as the plain iteration, but keeps near-singular
    // active sets from stalling below linear convergence.
    let mut y = w.clone();
    let mut t_k = 1.0f64;
    for _ in 0..max_iters {
        let grad = m.transpose() * (m * &y - &bv);
        let mut w_next = DVector::from_element(n, 0.0);
        let mut delta_max = 0.0f64;
        for j in 0..n {
            w_next[j] = (y[j] - step * grad[j] - step * lambda).max(0.0);
            delta_max = delta_max.max((w_next[j] - w[j]).abs());
        }
        if delta_max < tol {
            return Ok(WeightVector::new(w_next.iter().cloned().collect()));
        }
        let step_dir = &w_next - &w;
        let mut t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        let mut momentum = (t_k - 1.0) / t_next;
        if (&y - &w_next).dot(&step_dir) > 0.0 {
            momentum = 0.0;
            t_next = 1.0;
        }
        y = &w_next + momentum * step_dir;
        w = w_next;
        t_k = t_next;
    }
    Err(SolverError::NonConvergence(max_iters))
}

/// Result of normalizing a weight vector to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWeights {
    pub weights: WeightVector,
    /// Set when the input was all-zero and nothing could be normalized.
    pub no_candidate: bool,
}

/// Scale weights to sum to one; an all-zero vector is returned unchanged and
/// flagged as having no candidate.
pub fn normalize_weights(w: &WeightVector) -> NormalizedWeights {
    let total = w.sum();
    if total <= 0.0 {
        return NormalizedWeights {
            weights: w.clone(),
            no_candidate: true,
        };
    }
    NormalizedWeights {
        weights: WeightVector::new(w.as_slice().iter().map(|x| x / total).collect()),
        no_candidate: false,
    }
}

/// Check the nonnegative-LASSO KKT conditions at `w`:
/// active columns have correlation equal to lambda, inactive ones at most
/// lambda, both within `tol`.
pub fn kkt_satisfied(a: &DesignMatrix, b: &[f64; 4], lambda: f64, w: &WeightVector, tol: f64) -> bool {
    let m = a.as_matrix();
    let bv = DVector::from_column_slice(b);
    let wv = DVector::from_column_slice(w.as_slice());
    let corr = m.transpose() * (&bv - m * &wv);
    w.as_slice().iter().zip(corr.iter()).all(|(&wj, &cj)| {
        if wj > 0.0 {
            (cj - lambda).abs() <= tol
        } else {
            cj <= lambda + tol
        }
    })
}

/// Objective value of the regularized problem at `w`.
pub fn objective(a: &DesignMatrix, b: &[f64; 4], lambda: f64, w: &[f64]) -> f64 {
    let m = a.as_matrix();
    let bv = DVector::from_column_slice(b);
    let wv = DVector::from_column_slice(w);
    let res = m * wv - bv;
    lambda * w.iter().map(|x| x.abs()).sum::<f64>() + 0.5 * res.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn target() -> [f64; 4] {
        crate::geometry::TARGET
    }

    #[test]
    fn zero_above_lambda_max() {
        let a = DesignMatrix::from_columns(&[[0.5, 0.1, 0.3, 0.2], [0.1, 0.2, 0.4, 0.1]]).unwrap();
        let b = target();
        let lambda_max = (0..2)
            .map(|j| a.column(j).dot(&DVector::from_column_slice(&b)))
            .fold(f64::NEG_INFINITY, f64::max);
        let cfg = SolverConfig {
            lambda: lambda_max + 0.01,
            ..Default::default()
        };
        let w = solve_homotopy(&a, &b, &cfg).unwrap();
        assert!(w.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_active_column_closed_form() {
        // A = [b, c] with c orthogonal to b, ||b|| = 1.
        let b = [1.0, 0.0, 0.0, 0.0];
        let a = DesignMatrix::from_columns(&[b, [0.0, 1.0, 0.0, 0.0]]).unwrap();
        let w = solve_homotopy(&a, &b, &SolverConfig::default()).unwrap();
        assert!((w.as_slice()[0] - 0.9).abs() < 1e-12);
        assert_eq!(w.as_slice()[1], 0.0);
    }

    #[test]
    fn ista_zero_matrix() {
        let a = DesignMatrix::from_columns(&[[0.0; 4], [0.0; 4]]).unwrap();
        let w = solve_ista(&a, &target(), 0.1, 1e-10, 1000).unwrap();
        assert!(w.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn ista_single_column_closed_form() {
        let col = [0.3, 0.1, 0.8, 0.9];
        let a = DesignMatrix::from_columns(&[col]).unwrap();
        let b = target();
        let lambda = 0.1;
        let w = solve_ista(&a, &b, lambda, 1e-14, 1_000_000).unwrap();
        let av = DVector::from_column_slice(&col);
        let expected = ((av.dot(&DVector::from_column_slice(&b)) - lambda) / av.norm_squared())
            .max(0.0);
        assert!((w.as_slice()[0] - expected).abs() < 1e-10);
    }

    #[test]
    fn normalize_examples() {
        let w = WeightVector::new(vec![2.0, 0.0, 0.0]);
        let n = normalize_weights(&w);
        assert!(!n.no_candidate);
        assert_eq!(n.weights.as_slice(), &[1.0, 0.0, 0.0]);

        let z = WeightVector::new(vec![0.0, 0.0, 0.0]);
        let nz = normalize_weights(&z);
        assert!(nz.no_candidate);
        assert_eq!(nz.weights.as_slice(), &[0.0, 0.0, 0.0]);

        let p = WeightVector::new(vec![0.2, 0.6, 0.2]);
        let np = normalize_weights(&p);
        for (got, want) in np.weights.as_slice().iter().zip([0.2, 0.6, 0.2]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    fn random_problem(rng: &mut impl Rng, n: usize) -> (DesignMatrix, [f64; 4]) {
        // Rows scaled like the matching residual components: two angle rows
        // near zero, overlap in [0,1], length ratio >= 1.
        let cols: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                [
                    rng.gen_range(0.0..1.5),
                    rng.gen_range(0.0..0.8),
                    rng.gen_range(0.0..1.0),
                    rng.gen_range(1.0..3.0),
                ]
            })
            .collect();
        (DesignMatrix::from_columns(&cols).unwrap(), target())
    }

    #[test]
    fn homotopy_matches_ista_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        for trial in 0..200 {
            let n = [5, 20, 50][trial % 3];
            let (a, b) = random_problem(&mut rng, n);
            let cfg = SolverConfig::default();
            let wh = solve_homotopy(&a, &b, &cfg).unwrap();
            let wi = solve_ista(&a, &b, cfg.lambda, 1e-12, 2_000_000).unwrap();
            let diff = wh
                .as_slice()
                .iter()
                .zip(wi.as_slice())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            assert!(diff <= 1e-6, "trial {trial}: disagreement {diff}");
            assert!(kkt_satisfied(&a, &b, cfg.lambda, &wh, 1e-9), "trial {trial} KKT");
            // Path never worsens the final objective vs the origin.
            assert!(
                objective(&a, &b, cfg.lambda, wh.as_slice())
                    <= objective(&a, &b, cfg.lambda, &vec![0.0; n]) + 1e-12
            );
            // 4 rows: at most 4 active columns.
            assert!(wh.as_slice().iter().filter(|&&x| x > 0.0).count() <= 4);
        }
    }

    #[test]
    fn scaling_preserves_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let (a, b) = random_problem(&mut rng, 12);
            let cfg = SolverConfig::default();
            let w1 = solve_homotopy(&a, &b, &cfg).unwrap();
            let argmax = |w: &WeightVector| {
                w.as_slice()
                    .iter()
                    .enumerate()
                    .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                    .map(|(i, _)| i)
            };
            if w1.as_slice().iter().all(|&x| x == 0.0) {
                continue;
            }
            let s = 3.0;
            let cols: Vec<[f64; 4]> = (0..a.ncols())
                .map(|j| {
                    let c = a.column(j);
                    [c[0] * s, c[1] * s, c[2] * s, c[3] * s]
                })
                .collect();
            let a2 = DesignMatrix::from_columns(&cols).unwrap();
            let b2 = [b[0] * s, b[1] * s, b[2] * s, b[3] * s];
            let cfg2 = SolverConfig {
                lambda: cfg.lambda * s * s,
                ..cfg
            };
            let w2 = solve_homotopy(&a2, &b2, &cfg2).unwrap();
            assert_eq!(argmax(&w1), argmax(&w2));
        }
    }
}
