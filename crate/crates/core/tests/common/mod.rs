//! Brute-force reference implementations used by the integration tests.
#![allow(dead_code, clippy::type_complexity)]

use mimar::dataset::{Dataset, DatasetBuilder, Record};
use mimar::imputation::CompletedSets;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn h(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

pub fn score(beta: &DVector<f64>, x: &[f64], y: u8) -> DVector<f64> {
    let eta: f64 = beta.iter().zip(x).map(|(b, v)| b * v).sum();
    let r = f64::from(y) - h(eta);
    DVector::from_iterator(x.len(), x.iter().map(|v| v * r))
}

pub fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

pub fn mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
}

fn pat(r: &Record) -> u8 {
    match (r.x1.is_some(), r.x2.is_some()) {
        (true, true) => 1,
        (false, true) => 2,
        (true, false) => 3,
        (false, false) => 4,
    }
}

fn same_v(a: &Record, b: &Record) -> bool {
    a.y == b.y && a.z == b.z && a.w == b.w
}

/// Random small dataset with at least one complete case per outcome value.
pub fn random_tiny_dataset<R: Rng>(rng: &mut R) -> Dataset {
    let x1_cols = rng.random_range(1..=2);
    let mut b = DatasetBuilder::new("y");
    for k in 0..x1_cols {
        b = b.x1(format!("a{k}"));
    }
    b = b.x2("b").z("c").w("d");
    let n = rng.random_range(8..=50);
    let p_complete = rng.random_range(0.3..0.8);
    let p_fix = rng.random_range(0.0..1.0);
    for i in 0..n {
        let y: u8 = if i < 2 {
            i as u8
        } else {
            rng.random_range(0..=1)
        };
        let x1: Vec<String> = (0..x1_cols)
            .map(|_| rng.random_range(0..3).to_string())
            .collect();
        let x2 = rng.random_range(0..2).to_string();
        let z = rng.random_range(0..2).to_string();
        let w = if rng.random::<f64>() < p_fix {
            "0".to_string()
        } else {
            rng.random_range(0..2).to_string()
        };
        let pattern = if i < 2 || rng.random::<f64>() < p_complete {
            1
        } else {
            rng.random_range(2..=4)
        };
        let x1r: Vec<&str> = x1.iter().map(String::as_str).collect();
        let x2r = [x2.as_str()];
        b.push(
            y,
            matches!(pattern, 1 | 3).then_some(&x1r[..]),
            matches!(pattern, 1 | 2).then_some(&x2r[..]),
            &[&z],
            &[&w],
        )
        .unwrap();
    }
    b.build().unwrap()
}

/// `pi_j` of each record's stratum by counting over all records.
pub fn oracle_selection(ds: &Dataset) -> Vec<[f64; 4]> {
    let rs = ds.records();
    rs.iter()
        .map(|ri| {
            let mut counts = [0usize; 4];
            let mut total = 0usize;
            for rj in rs {
                if same_v(ri, rj) {
                    counts[usize::from(pat(rj)) - 1] += 1;
                    total += 1;
                }
            }
            counts.map(|c| c as f64 / total as f64)
        })
        .collect()
}

/// Which block(s) a pool imputes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleNeed {
    X1,
    X2,
    Both,
}

/// Donor list by direct filtering, following the documented fallback chain.
pub fn oracle_donors(ds: &Dataset, i: usize, mi2: bool, need: OracleNeed) -> Vec<usize> {
    let rs = ds.records();
    let ri = &rs[i];
    let eligible = |rj: &Record| -> bool {
        match (mi2, need) {
            (_, OracleNeed::Both) | (false, _) => pat(rj) == 1,
            (true, OracleNeed::X1) => matches!(pat(rj), 1 | 3),
            (true, OracleNeed::X2) => matches!(pat(rj), 1 | 2),
        }
    };
    let filter = |pred: &dyn Fn(&Record) -> bool| -> Vec<usize> {
        (0..rs.len())
            .filter(|&j| eligible(&rs[j]) && pred(&rs[j]))
            .collect()
    };
    let mut chain: Vec<Box<dyn Fn(&Record) -> bool>> = Vec::new();
    if !mi2 && need == OracleNeed::X1 {
        chain.push(Box::new(|rj: &Record| same_v(ri, rj) && rj.x2 == ri.x2));
    }
    if !mi2 && need == OracleNeed::X2 {
        chain.push(Box::new(|rj: &Record| same_v(ri, rj) && rj.x1 == ri.x1));
    }
    chain.push(Box::new(|rj: &Record| same_v(ri, rj)));
    chain.push(Box::new(|rj: &Record| rj.y == ri.y));
    for pred in &chain {
        let d = filter(pred.as_ref());
        if !d.is_empty() {
            return d;
        }
    }
    Vec::new()
}

fn mean_score(ds: &Dataset, donors: &[usize], beta: &DVector<f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(beta.len());
    for &j in donors {
        acc += score(beta, &ds.design(j).unwrap(), ds.record(j).y);
    }
    acc / donors.len() as f64
}

pub struct OracleSStar {
    pub s2: Vec<Option<DVector<f64>>>,
    pub s3: Vec<Option<DVector<f64>>>,
    pub s4: Vec<DVector<f64>>,
}

pub fn oracle_sstar(ds: &Dataset, beta: &DVector<f64>) -> OracleSStar {
    let n = ds.n();
    OracleSStar {
        s2: (0..n)
            .map(|i| {
                ds.record(i)
                    .x2
                    .as_ref()
                    .map(|_| mean_score(ds, &oracle_donors(ds, i, false, OracleNeed::X1), beta))
            })
            .collect(),
        s3: (0..n)
            .map(|i| {
                ds.record(i)
                    .x1
                    .as_ref()
                    .map(|_| mean_score(ds, &oracle_donors(ds, i, false, OracleNeed::X2), beta))
            })
            .collect(),
        s4: (0..n)
            .map(|i| mean_score(ds, &oracle_donors(ds, i, false, OracleNeed::Both), beta))
            .collect(),
    }
}

pub fn oracle_eta(pattern: u8, pi: &[f64; 4]) -> f64 {
    let d = |k: u8| f64::from(u8::from(pattern == k));
    let mut eta = 0.0;
    if pattern == 1 || pattern == 3 {
        eta += (d(1) + d(3)) * pi[1] / (pi[0] + pi[2]);
    }
    if pattern == 1 || pattern == 2 {
        eta += (d(1) + d(2)) * pi[2] / (pi[0] + pi[1]);
    }
    if pattern == 1 {
        eta += pi[3] / pi[0];
    }
    eta
}

pub fn oracle_phi(ds: &Dataset, beta: &DVector<f64>) -> Vec<DVector<f64>> {
    let pis = oracle_selection(ds);
    let ss = oracle_sstar(ds, beta);
    (0..ds.n())
        .map(|i| {
            let r = ds.record(i);
            let p = pat(r);
            let pi = pis[i];
            let d = |k: u8| f64::from(u8::from(p == k));
            let mut phi = DVector::zeros(beta.len());
            if p == 1 {
                phi += score(beta, &ds.design(i).unwrap(), r.y) / pi[0];
            }
            let terms = [(2u8, &ss.s2[i]), (3u8, &ss.s3[i])];
            for (k, s) in terms {
                let coef = d(k)
                    - if p == 1 {
                        pi[usize::from(k) - 1] / pi[0]
                    } else {
                        0.0
                    };
                if coef != 0.0 {
                    phi += s.as_ref().unwrap() * coef;
                }
            }
            let coef4 = d(4) - if p == 1 { pi[3] / pi[0] } else { 0.0 };
            phi += &ss.s4[i] * coef4;
            phi
        })
        .collect()
}

/// Mean over imputations of each record's score.
pub fn oracle_mean_imputed(completed: &CompletedSets, beta: &DVector<f64>) -> Vec<DVector<f64>> {
    (0..completed.n())
        .map(|i| {
            let y = completed.row(i).y;
            let m = completed.m();
            let mut acc = DVector::zeros(beta.len());
            for v in 0..m {
                acc += score(beta, completed.design(i, v), y);
            }
            acc / m as f64
        })
        .collect()
}

pub fn oracle_psi(
    ds: &Dataset,
    completed: &CompletedSets,
    beta: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let pis = oracle_selection(ds);
    let ss = oracle_sstar(ds, beta);
    let sbar = oracle_mean_imputed(completed, beta);
    (0..ds.n())
        .map(|i| {
            let p = pat(ds.record(i));
            let eta = oracle_eta(p, &pis[i]);
            let d1 = f64::from(u8::from(p == 1));
            &sbar[i] * d1 + &ss.s4[i] * (1.0 - d1) + (&sbar[i] - &ss.s4[i]) * eta
        })
        .collect()
}

/// Iteratively reweighted least squares for a weighted logistic fit.
pub fn irls(xs: &[Vec<f64>], ys: &[u8], ws: &[f64]) -> DVector<f64> {
    let d = xs[0].len();
    let mut beta = DVector::zeros(d);
    for _ in 0..100 {
        let mut xtwx = DMatrix::zeros(d, d);
        let mut xtwz = DVector::zeros(d);
        for ((x, &y), &w) in xs.iter().zip(ys).zip(ws) {
            let x = DVector::from_column_slice(x);
            let eta = x.dot(&beta);
            let mu = h(eta);
            let v = mu * (1.0 - mu);
            let z = eta + (f64::from(y) - mu) / v;
            xtwx += &x * x.transpose() * (w * v);
            xtwz += &x * (w * v * z);
        }
        let next = xtwx.cholesky().unwrap().solve(&xtwz);
        let delta = (&next - &beta).amax();
        beta = next;
        if delta < 1e-13 {
            break;
        }
    }
    beta
}
