//! Logistic link, per-record scores and a damped Newton solver for vector
//! estimating equations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{add_outer, max_abs, solve_with_ridge};

/// Regression coefficients `(intercept, x1 block, x2 block, z block)`.
pub type Beta = DVector<f64>;

/// `H(u) = 1 / (1 + exp(-u))`, evaluated without overflow for any finite `u`.
pub fn inv_logit(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `H'(u) = H(u) (1 - H(u))`.
pub fn inv_logit_deriv(u: f64) -> f64 {
    inv_logit(u) * inv_logit(-u)
}

fn dot(beta: &[f64], x: &[f64]) -> f64 {
    beta.iter().zip(x).map(|(b, v)| b * v).sum()
}

/// Score contribution `x (y - H(beta' x))`.
pub fn score_contrib(beta: &Beta, x: &[f64], y: u8) -> Result<DVector<f64>> {
    if beta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            got: x.len(),
        });
    }
    let r = f64::from(y) - inv_logit(dot(beta.as_slice(), x));
    Ok(DVector::from_iterator(x.len(), x.iter().map(|v| v * r)))
}

/// `acc += weight * x (y - H(beta' x))`. Dimensions are the caller's responsibility.
pub(crate) fn add_score(acc: &mut [f64], beta: &[f64], x: &[f64], y: u8, weight: f64) {
    let r = weight * (f64::from(y) - inv_logit(dot(beta, x)));
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v * r;
    }
}

/// `acc += weight * x x' H'(beta' x)`.
pub(crate) fn add_information(acc: &mut DMatrix<f64>, beta: &[f64], x: &[f64], weight: f64) {
    add_outer(acc, x, weight * inv_logit_deriv(dot(beta, x)));
}

/// Newton solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the max-abs score component.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings tried before giving up on an iteration.
    pub max_halvings: usize,
    /// Ridge multiplier of `trace / dim` for a numerically singular Jacobian.
    pub ridge: f64,
    /// Euclidean norm of `beta` beyond which the iteration is declared divergent.
    pub divergence_norm: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 30,
            ridge: 1e-8,
            divergence_norm: 50.0,
        }
    }
}

/// Why a solve did not converge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveFailure {
    /// Jacobian singular even after the ridge fallback.
    Singular,
    /// `max_iter` exhausted.
    MaxIter,
    /// No step length reduced the score norm.
    Stalled,
    /// Coefficients diverged (separation).
    Diverged,
    /// The problem is degenerate before iterating, e.g. a constant outcome.
    Degenerate,
}

impl SolveFailure {
    pub fn describe(self) -> &'static str {
        match self {
            SolveFailure::Singular => "singular jacobian",
            SolveFailure::MaxIter => "iteration limit reached",
            SolveFailure::Stalled => "step halving failed to reduce the score",
            SolveFailure::Diverged => "coefficients diverged (separation)",
            SolveFailure::Degenerate => "degenerate problem (constant outcome)",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub beta_hat: Beta,
    pub iterations: usize,
    pub final_score_norm: f64,
    pub converged: bool,
    pub failure: Option<SolveFailure>,
    /// The ridge fallback was used at least once.
    pub ridged: bool,
}

impl SolveReport {
    pub(crate) fn degenerate(dim: usize) -> Self {
        SolveReport {
            beta_hat: DVector::zeros(dim),
            iterations: 0,
            final_score_norm: f64::NAN,
            converged: false,
            failure: Some(SolveFailure::Degenerate),
            ridged: false,
        }
    }
}

/// Solves `score(beta) = 0` by Newton's method with step halving.
///
/// `neg_jacobian` must return `-d score / d beta`. Never panics on numerical
/// trouble; failures are reported through [`SolveReport::failure`].
pub fn solve_estimating_eq<S, J>(
    mut score: S,
    mut neg_jacobian: J,
    beta0: Beta,
    opts: &SolverOptions,
) -> SolveReport
where
    S: FnMut(&Beta) -> DVector<f64>,
    J: FnMut(&Beta) -> DMatrix<f64>,
{
    let mut beta = beta0;
    let mut s = score(&beta);
    let mut norm = max_abs(&s);
    let mut ridged = false;
    let mut failure = None;
    let mut iterations = 0;

    while !(norm <= opts.tol) {
        if iterations >= opts.max_iter {
            failure = Some(SolveFailure::MaxIter);
            break;
        }
        if !norm.is_finite() || beta.norm() > opts.divergence_norm {
            failure = Some(SolveFailure::Diverged);
            break;
        }
        iterations += 1;
        let jac = neg_jacobian(&beta);
        let Some((step, used_ridge)) = solve_with_ridge(&jac, &s, opts.ridge) else {
            failure = Some(SolveFailure::Singular);
            break;
        };
        ridged |= used_ridge;

        let current = s.norm();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = &beta + &step * scale;
            let cs = score(&candidate);
            let cn = cs.norm();
            if cn.is_finite() && (cn < current || max_abs(&cs) <= opts.tol) {
                accepted = Some((candidate, cs));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((b, cs)) => {
                beta = b;
                s = cs;
                norm = max_abs(&s);
            }
            None => {
                failure = Some(SolveFailure::Stalled);
                break;
            }
        }
    }

    if failure.is_none() && beta.norm() > opts.divergence_norm {
        failure = Some(SolveFailure::Diverged);
    }
    SolveReport {
        converged: failure.is_none(),
        beta_hat: beta,
        iterations,
        final_score_norm: norm,
        failure,
        ridged,
    }
}

/// Weighted logistic estimating equation `sum_i w_i x_i (y_i - H(beta' x_i)) = 0`
/// over a flat row-major design.
#[derive(Clone, Debug)]
pub struct WeightedLogistic {
    dim: usize,
    designs: Vec<f64>,
    y: Vec<u8>,
    weights: Vec<f64>,
}

impl WeightedLogistic {
    pub fn new(dim: usize) -> Self {
        WeightedLogistic {
            dim,
            designs: Vec::new(),
            y: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f64], y: u8, weight: f64) {
        debug_assert_eq!(x.len(), self.dim);
        self.designs.extend_from_slice(x);
        self.y.push(y);
        self.weights.push(weight);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], u8, f64)> + '_ {
        self.designs
            .chunks_exact(self.dim)
            .zip(&self.y)
            .zip(&self.weights)
            .map(|((x, &y), &w)| (x, y, w))
    }

    /// True when both outcome values carry positive weight.
    pub fn outcome_varies(&self) -> bool {
        let mut seen = [false; 2];
        for (_, y, w) in self.rows() {
            if w > 0.0 {
                seen[usize::from(y)] = true;
            }
        }
        seen[0] && seen[1]
    }

    pub fn score(&self, beta: &Beta) -> DVector<f64> {
        let mut acc = vec![0.0; self.dim];
        for (x, y, w) in self.rows() {
            add_score(&mut acc, beta.as_slice(), x, y, w);
        }
        DVector::from_vec(acc)
    }

    /// `sum_i w_i x_i x_i' H'(beta' x_i)`.
    pub fn information(&self, beta: &Beta) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for (x, _, w) in self.rows() {
            add_information(&mut acc, beta.as_slice(), x, w);
        }
        acc
    }

    /// `sum_i w_i^2 S_i S_i'` (meat of the weighted sandwich).
    pub fn score_outer(&self, beta: &Beta) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        let mut s = vec![0.0; self.dim];
        for (x, y, w) in self.rows() {
            s.iter_mut().for_each(|v| *v = 0.0);
            add_score(&mut s, beta.as_slice(), x, y, w);
            add_outer(&mut acc, &s, 1.0);
        }
        acc
    }

    pub fn solve(&self, opts: &SolverOptions) -> SolveReport {
        if !self.outcome_varies() {
            return SolveReport::degenerate(self.dim);
        }
        let mut report = solve_estimating_eq(
            |b| self.score(b),
            |b| self.information(b),
            DVector::zeros(self.dim),
            opts,
        );
        if report.converged && self.separated(&report.beta_hat) {
            report.converged = false;
            report.failure = Some(SolveFailure::Diverged);
        }
        report
    }

    /// Every weighted record fitted to within `1e-6` of its outcome: the
    /// score vanished only because the coefficients ran off toward infinity.
    fn separated(&self, beta: &Beta) -> bool {
        self.rows()
            .filter(|(_, _, w)| *w > 0.0)
            .all(|(x, y, _)| (f64::from(y) - inv_logit(dot(beta.as_slice(), x))).abs() < 1e-6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inv_logit_values() {
        assert_eq!(inv_logit(0.0), 0.5);
        assert!((inv_logit(3f64.ln()) - 0.75).abs() < 1e-15);
        // exp(-50)/(1+exp(-50)) = 1.9287498479639178e-22 (high-precision value)
        let v = inv_logit(-50.0);
        assert!(v > 0.0);
        assert!(((v - 1.928_749_847_963_917_8e-22) / 1.928_749_847_963_917_8e-22).abs() < 1e-12);
        assert!(inv_logit(-700.0) > 0.0);
        assert_eq!(inv_logit(700.0), 1.0);
    }

    #[test]
    fn deriv_values() {
        assert_eq!(inv_logit_deriv(0.0), 0.25);
        assert_eq!(inv_logit_deriv(1.7), inv_logit_deriv(-1.7));
        let h = 1e-5;
        let fd = (inv_logit(2.0 + h) - inv_logit(2.0 - h)) / (2.0 * h);
        assert!((inv_logit_deriv(2.0) - fd).abs() < 1e-8);
    }

    #[test]
    fn score_contrib_examples() {
        let s = score_contrib(&DVector::zeros(2), &[1.0, 1.0], 1).unwrap();
        assert_eq!(s.as_slice(), &[0.5, 0.5]);
        let s = score_contrib(&DVector::zeros(2), &[1.0, -1.0], 0).unwrap();
        assert_eq!(s.as_slice(), &[-0.5, 0.5]);
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let s = score_contrib(&beta, &[1.0, 0.4], 1).unwrap();
        let r = 1.0 - 1.0 / (1.0 + (-1.8f64).exp());
        assert!((s[0] - r).abs() < 1e-15);
        assert!((s[1] - 0.4 * r).abs() < 1e-15);
        assert!(matches!(
            score_contrib(&beta, &[1.0], 1),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    fn intercept_only(ys: &[u8]) -> WeightedLogistic {
        let mut eq = WeightedLogistic::new(1);
        for &y in ys {
            eq.push(&[1.0], y, 1.0);
        }
        eq
    }

    #[test]
    fn intercept_only_solutions() {
        let r = intercept_only(&[1, 0]).solve(&SolverOptions::default());
        assert!(r.converged);
        assert!(r.beta_hat[0].abs() < 1e-10);
        let r = intercept_only(&[1, 1, 1, 0]).solve(&SolverOptions::default());
        assert!(r.converged);
        assert!((r.beta_hat[0] - 3f64.ln()).abs() < 1e-9);
        assert!(r.final_score_norm <= 1e-8);
    }

    #[test]
    fn constant_outcome_is_reported() {
        let r = intercept_only(&[1, 1, 1]).solve(&SolverOptions::default());
        assert!(!r.converged);
        assert_eq!(r.failure, Some(SolveFailure::Degenerate));
    }

    #[test]
    fn separated_data_diverges() {
        let mut eq = WeightedLogistic::new(2);
        for (x, y) in [(-2.0, 0), (-1.0, 0), (1.0, 1), (2.0, 1)] {
            eq.push(&[1.0, x], y, 1.0);
        }
        let r = eq.solve(&SolverOptions::default());
        assert!(!r.converged);
    }

    #[test]
    fn singular_jacobian_never_panics() {
        let r = solve_estimating_eq(
            |_| DVector::from_vec(vec![1.0, 1.0]),
            |_| DMatrix::zeros(2, 2),
            DVector::zeros(2),
            &SolverOptions::default(),
        );
        assert_eq!(r.failure, Some(SolveFailure::Singular));
        assert!(!r.converged);
    }

    #[test]
    fn max_iter_is_reported() {
        let opts = SolverOptions {
            max_iter: 1,
            ..SolverOptions::default()
        };
        let r = solve_estimating_eq(
            |b| DVector::from_vec(vec![(b[0] - 1.0).powi(3) + (b[0] - 1.0)]),
            |b| DMatrix::from_element(1, 1, -(3.0 * (b[0] - 1.0).powi(2) + 1.0)),
            DVector::from_vec(vec![10.0]),
            &opts,
        );
        assert!(!r.converged);
    }

    proptest! {
        #[test]
        fn inv_logit_symmetry(u in -700.0f64..700.0) {
            let s = inv_logit(u) + inv_logit(-u);
            prop_assert!((s - 1.0).abs() <= 2.0 * f64::EPSILON);
        }

        #[test]
        fn inv_logit_in_unit_interval(u in -30.0f64..30.0) {
            let h = inv_logit(u);
            prop_assert!(h > 0.0 && h < 1.0);
        }
    }
}
