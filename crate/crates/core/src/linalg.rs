//! Small dense linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Matrices whose 2-norm condition number exceeds this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// 2-norm condition number from the singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of `m` via LU, rejected when the condition number exceeds [`MAX_CONDITION`].
pub fn guarded_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cond = condition_number(m);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Singular { cond });
    }
    m.clone().lu().try_inverse().ok_or(Error::Singular { cond })
}

/// Solves `m x = rhs` by LU with partial pivoting. If `m` is numerically
/// singular, retries once with `ridge * (trace / dim) * I` added.
/// Returns the solution and whether the ridge was used.
pub fn solve_with_ridge(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    ridge: f64,
) -> Option<(DVector<f64>, bool)> {
    let attempt = |a: &DMatrix<f64>| -> Option<DVector<f64>> {
        if !(condition_number(a) <= MAX_CONDITION) {
            return None;
        }
        a.clone()
            .lu()
            .solve(rhs)
            .filter(|x| x.iter().all(|v| v.is_finite()))
    };
    if let Some(x) = attempt(m) {
        return Some((x, false));
    }
    let dim = m.nrows().max(1) as f64;
    let shift = ridge * (m.trace() / dim).abs().max(f64::MIN_POSITIVE);
    let mut shifted = m.clone();
    for i in 0..m.nrows() {
        shifted[(i, i)] += shift;
    }
    attempt(&shifted).map(|x| (x, true))
}

/// `a^{-1} m a^{-T}`, symmetrized.
pub fn sandwich(a_inv: &DMatrix<f64>, meat: &DMatrix<f64>) -> DMatrix<f64> {
    let s = a_inv * meat * a_inv.transpose();
    symmetrize(&s)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Adds `weight * v v^T` to `acc`.
pub fn add_outer(acc: &mut DMatrix<f64>, v: &[f64], weight: f64) {
    let d = v.len();
    for j in 0..d {
        let vj = v[j] * weight;
        for i in 0..d {
            acc[(i, j)] += v[i] * vj;
        }
    }
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(
        0.0_f64,
        |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_identity() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert_eq!(guarded_inverse(&m).unwrap(), m);
    }

    #[test]
    fn rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(guarded_inverse(&m), Err(Error::Singular { .. })));
    }

    #[test]
    fn ridge_rescues_near_singular_solve() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-15]);
        let rhs = DVector::from_vec(vec![1.0, 1.0]);
        let (x, ridged) = solve_with_ridge(&m, &rhs, 1e-8).unwrap();
        assert!(ridged);
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn outer_product_accumulates() {
        let mut acc = DMatrix::zeros(2, 2);
        add_outer(&mut acc, &[1.0, 2.0], 0.5);
        assert_eq!(acc, DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 2.0]));
    }
}
