//! Rubin-type combining rule and the influence-function sandwich variances of
//! the MI estimators, with the plug-in quantities they are built from.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Dataset, Pattern};
use crate::error::{Error, Result};
use crate::imputation::{CompletedSets, DonorIndex, DonorPool, Method, Need, Provenance};
use crate::linalg::{add_outer, guarded_inverse, sandwich};
use crate::logit::{add_information, add_score, Beta};
use crate::selection::SelectionTable;

/// Gradient matrix `G = (1/n) sum_i [d1 x x' H' + (1/M) sum_v x~ x~' H']`.
#[derive(Clone, Debug, PartialEq)]
pub struct GMatrix {
    pub matrix: DMatrix<f64>,
}

impl GMatrix {
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        guarded_inverse(&self.matrix)
    }
}

/// One influence vector per record.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceSet {
    pub method: Method,
    pub vectors: Vec<DVector<f64>>,
}

impl InfluenceSet {
    /// `(1/n) sum_i v_i v_i'`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let d = self.vectors.first().map_or(0, |v| v.len());
        let mut acc = DMatrix::zeros(d, d);
        for v in &self.vectors {
            add_outer(&mut acc, v.as_slice(), 1.0);
        }
        acc / self.vectors.len() as f64
    }
}

fn row_weight(completed: &CompletedSets, i: usize) -> f64 {
    if completed.row(i).pattern.is_complete() {
        1.0
    } else {
        1.0 / completed.m() as f64
    }
}

/// Assembled MI score `sum_i [d1 S_i + (1/M) sum_v S(x~_iv)]`.
pub fn mi_score(completed: &CompletedSets, beta: &Beta) -> DVector<f64> {
    let mut acc = vec![0.0; completed.dim()];
    for i in 0..completed.n() {
        let w = row_weight(completed, i);
        let y = completed.row(i).y;
        for x in completed.designs(i) {
            add_score(&mut acc, beta.as_slice(), x, y, w);
        }
    }
    DVector::from_vec(acc)
}

/// `n G`, the negative Jacobian of [`mi_score`].
pub fn mi_information(completed: &CompletedSets, beta: &Beta) -> DMatrix<f64> {
    let d = completed.dim();
    let mut acc = DMatrix::zeros(d, d);
    for i in 0..completed.n() {
        let w = row_weight(completed, i);
        for x in completed.designs(i) {
            add_information(&mut acc, beta.as_slice(), x, w);
        }
    }
    acc
}

pub fn g_matrix(completed: &CompletedSets, beta: &Beta) -> GMatrix {
    GMatrix {
        matrix: mi_information(completed, beta) / completed.n() as f64,
    }
}

fn score_at(beta: &Beta, x: &[f64], y: u8) -> DVector<f64> {
    let mut s = vec![0.0; x.len()];
    add_score(&mut s, beta.as_slice(), x, y, 1.0);
    DVector::from_vec(s)
}

/// Rubin-type covariance of the MI estimate, per-estimate scale.
///
/// `U_vi = S(x~_iv) / sqrt(n)`, `U_v = sum_i U_vi`, and the bracket is
/// `(1/M) sum_v sum_i U_vi U_vi' + (1 + 1/M) sum_v U_v U_v' / (M - 1)`.
pub fn rubin_variance(completed: &CompletedSets, beta_hat: &Beta) -> Result<DMatrix<f64>> {
    let m = completed.m();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "Rubin variance needs M >= 2, got {m}"
        )));
    }
    let n = completed.n();
    let d = completed.dim();
    let rn = (n as f64).sqrt();
    let mut within = DMatrix::zeros(d, d);
    let mut totals = vec![DVector::zeros(d); m];
    for i in 0..n {
        let y = completed.row(i).y;
        for (v, total) in totals.iter_mut().enumerate() {
            let u = score_at(beta_hat, completed.design(i, v), y) / rn;
            add_outer(&mut within, u.as_slice(), 1.0);
            *total += u;
        }
    }
    within /= m as f64;
    let mut between = DMatrix::zeros(d, d);
    for t in &totals {
        add_outer(&mut between, t.as_slice(), 1.0);
    }
    between *= (1.0 + 1.0 / m as f64) / (m - 1) as f64;
    let g_inv = g_matrix(completed, beta_hat).inverse()?;
    Ok(sandwich(&g_inv, &(within + between)) / n as f64)
}

/// Conditional score averages for MI1; `s2`/`s3` exist only where the
/// conditioning block is observed.
#[derive(Clone, Debug, PartialEq)]
pub struct SStarMi1 {
    pub s2: Vec<Option<DVector<f64>>>,
    pub s3: Vec<Option<DVector<f64>>>,
    pub s4: Vec<DVector<f64>>,
    /// Pools used for `(s2, s3, s4)`.
    pub provenance: Vec<[Option<Provenance>; 3]>,
}

/// Averages of complete-case scores over donor pools, memoized per pool.
struct PoolMeans<'a> {
    dataset: &'a Dataset,
    beta: &'a Beta,
    scores: Vec<Option<DVector<f64>>>,
    cache: HashMap<*const DonorPool, DVector<f64>>,
}

impl<'a> PoolMeans<'a> {
    fn new(dataset: &'a Dataset, beta: &'a Beta) -> Self {
        let scores = (0..dataset.n())
            .map(|i| {
                let r = dataset.record(i);
                dataset.design(i).map(|x| score_at(beta, &x, r.y))
            })
            .collect();
        PoolMeans {
            dataset,
            beta,
            scores,
            cache: HashMap::new(),
        }
    }

    fn mean(&mut self, pool: &DonorPool) -> DVector<f64> {
        let d = self.beta.len();
        let scores = &self.scores;
        let ds = self.dataset;
        self.cache
            .entry(pool as *const DonorPool)
            .or_insert_with(|| {
                let mut acc = DVector::zeros(d);
                for &k in pool.donors() {
                    let s = scores[k].as_ref().unwrap_or_else(|| {
                        panic!(
                            "donor {k} of a complete-case pool is incomplete in a dataset of {}",
                            ds.n()
                        )
                    });
                    acc += s;
                }
                acc / pool.len() as f64
            })
            .clone()
    }
}

pub fn sstar_mi1(dataset: &Dataset, index: &DonorIndex, beta: &Beta) -> Result<SStarMi1> {
    let n = dataset.n();
    let mut means = PoolMeans::new(dataset, beta);
    let mut out = SStarMi1 {
        s2: Vec::with_capacity(n),
        s3: Vec::with_capacity(n),
        s4: Vec::with_capacity(n),
        provenance: Vec::with_capacity(n),
    };
    for i in 0..n {
        let r = dataset.record(i);
        let mut prov = [None; 3];
        // s2 conditions on x2, i.e. it averages the scores that impute x1.
        let s2 = if r.x2.is_some() {
            let res = index.resolve(dataset, i, Method::Mi1, Need::X1)?;
            prov[0] = Some(res.provenance);
            Some(means.mean(res.pool))
        } else {
            None
        };
        let s3 = if r.x1.is_some() {
            let res = index.resolve(dataset, i, Method::Mi1, Need::X2)?;
            prov[1] = Some(res.provenance);
            Some(means.mean(res.pool))
        } else {
            None
        };
        let res = index.resolve(dataset, i, Method::Mi1, Need::Both)?;
        prov[2] = Some(res.provenance);
        out.s4.push(means.mean(res.pool));
        out.s2.push(s2);
        out.s3.push(s3);
        out.provenance.push(prov);
    }
    Ok(out)
}

/// `(y, v)` conditional score average used by MI2; identical to MI1's `s4`.
pub fn sstar_mi2(dataset: &Dataset, index: &DonorIndex, beta: &Beta) -> Result<Vec<DVector<f64>>> {
    let mut means = PoolMeans::new(dataset, beta);
    (0..dataset.n())
        .map(|i| {
            let res = index.resolve(dataset, i, Method::Mi2, Need::Both)?;
            Ok(means.mean(res.pool))
        })
        .collect()
}

fn ratio(num: f64, den: f64, quantity: &'static str, record: usize) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::ZeroDenominator { quantity, record })
    }
}

/// `eta = (d1+d3) pi2/(pi1+pi3) + (d1+d2) pi3/(pi1+pi2) + d1 pi4/pi1`; each
/// term is evaluated only when its indicator is nonzero.
pub fn eta_hat(pattern: Pattern, pi: &[f64; 4], record: usize) -> Result<f64> {
    let [p1, p2, p3, p4] = *pi;
    let mut eta = 0.0;
    if matches!(pattern, Pattern::Complete | Pattern::MissingX2) {
        eta += ratio(p2, p1 + p3, "pi1+pi3", record)?;
    }
    if matches!(pattern, Pattern::Complete | Pattern::MissingX1) {
        eta += ratio(p3, p1 + p2, "pi1+pi2", record)?;
    }
    if pattern == Pattern::Complete {
        eta += ratio(p4, p1, "pi1", record)?;
    }
    Ok(eta)
}

/// MI1 influence vectors
/// `Phi_i = d1 S_i/pi1 + sum_k S*_k (d_k - d1 pi_k/pi1)`.
pub fn phi_hat(
    dataset: &Dataset,
    index: &DonorIndex,
    beta: &Beta,
    table: &SelectionTable,
) -> Result<InfluenceSet> {
    let sstar = sstar_mi1(dataset, index, beta)?;
    let vectors = (0..dataset.n())
        .map(|i| {
            let r = dataset.record(i);
            let pi = table.for_record(i);
            let s2 = || sstar.s2[i].clone().expect("x2 observed");
            let s3 = || sstar.s3[i].clone().expect("x1 observed");
            Ok(match r.pattern() {
                Pattern::Complete => {
                    let p1 = pi[0];
                    if p1 <= 0.0 {
                        return Err(Error::ZeroDenominator {
                            quantity: "pi1",
                            record: i,
                        });
                    }
                    let x = dataset.design(i).expect("complete record");
                    let s = score_at(beta, &x, r.y);
                    (s - s2() * pi[1] - s3() * pi[2] - &sstar.s4[i] * pi[3]) / p1
                }
                Pattern::MissingX1 => s2(),
                Pattern::MissingX2 => s3(),
                Pattern::MissingBoth => sstar.s4[i].clone(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(InfluenceSet {
        method: Method::Mi1,
        vectors,
    })
}

/// Mean imputed score of each record (its own score when complete).
pub fn mean_imputed_scores(completed: &CompletedSets, beta: &Beta) -> Vec<DVector<f64>> {
    (0..completed.n())
        .map(|i| {
            let y = completed.row(i).y;
            let mut acc = vec![0.0; completed.dim()];
            let w = row_weight(completed, i);
            for x in completed.designs(i) {
                add_score(&mut acc, beta.as_slice(), x, y, w);
            }
            DVector::from_vec(acc)
        })
        .collect()
}

/// MI2 influence vectors
/// `Psi_i = d1 S_i + (1 - d1) S*_i + (S~_i - S*_i) eta_i`.
pub fn psi_hat(
    dataset: &Dataset,
    completed: &CompletedSets,
    index: &DonorIndex,
    beta: &Beta,
    table: &SelectionTable,
) -> Result<InfluenceSet> {
    if completed.method() != Method::Mi2 {
        return Err(Error::InvalidArgument(
            "psi_hat requires MI2 completed sets".into(),
        ));
    }
    let sstar = sstar_mi2(dataset, index, beta)?;
    let smean = mean_imputed_scores(completed, beta);
    let vectors = (0..dataset.n())
        .map(|i| {
            let pattern = dataset.record(i).pattern();
            let eta = eta_hat(pattern, &table.for_record(i), i)?;
            let base = if pattern.is_complete() {
                smean[i].clone()
            } else {
                sstar[i].clone()
            };
            Ok(base + (&smean[i] - &sstar[i]) * eta)
        })
        .collect::<Result<_>>()?;
    Ok(InfluenceSet {
        method: Method::Mi2,
        vectors,
    })
}

/// Sandwich covariance `G^{-1} M G^{-T} / n` with `M` the second moment of
/// the method's influence vectors.
pub fn proposed_variance(
    dataset: &Dataset,
    completed: &CompletedSets,
    index: &DonorIndex,
    beta_hat: &Beta,
    table: &SelectionTable,
) -> Result<DMatrix<f64>> {
    let influence = match completed.method() {
        Method::Mi1 => phi_hat(dataset, index, beta_hat, table)?,
        Method::Mi2 => psi_hat(dataset, completed, index, beta_hat, table)?,
    };
    let g_inv = g_matrix(completed, beta_hat).inverse()?;
    Ok(sandwich(&g_inv, &influence.second_moment()) / dataset.n() as f64)
}

/// Full-data maximum-likelihood sandwich `A^{-1} B A^{-T} / n` with
/// `A = (1/n) sum x x' H'` and `B = (1/n) sum S S'`.
pub fn full_sandwich(dataset: &Dataset, beta: &Beta) -> Result<DMatrix<f64>> {
    let n = dataset.n();
    if !dataset.is_fully_observed() {
        return Err(Error::IncompleteData {
            incomplete: n - dataset.complete_count(),
        });
    }
    let d = dataset.design_len();
    let mut a = DMatrix::zeros(d, d);
    let mut b = DMatrix::zeros(d, d);
    for i in 0..n {
        let x = dataset.design(i).expect("complete record");
        add_information(&mut a, beta.as_slice(), &x, 1.0);
        let s = score_at(beta, &x, dataset.record(i).y);
        add_outer(&mut b, s.as_slice(), 1.0);
    }
    let a_inv = guarded_inverse(&(a / n as f64))?;
    Ok(sandwich(&a_inv, &(b / n as f64)) / n as f64)
}
