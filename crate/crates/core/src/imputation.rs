//! Hot-deck donor pools realizing the empirical conditional distributions of
//! the missing blocks, and the imputation step producing `M` completed datasets.
//!
//! Every pool is a uniform categorical distribution over eligible donors that
//! share the pool's conditioning key:
//!
//! | pool              | key           | donor patterns |
//! |-------------------|---------------|----------------|
//! | MI1 `x1 | x2`     | `(y, x2, v)`  | 1              |
//! | MI1 `x2 | x1`     | `(y, x1, v)`  | 1              |
//! | joint (MI1, MI2)  | `(y, v)`      | 1              |
//! | MI2 `x1`          | `(y, v)`      | 1, 3           |
//! | MI2 `x2`          | `(y, v)`      | 1, 2           |
//!
//! When the pool for a record's key is empty the lookup falls back to coarser
//! keys: MI1 conditional pools go to the joint `(y, v)` pool and then to the
//! pool keyed by `y` alone; MI2 and joint pools go straight to `y`. If that is
//! still empty the record cannot be imputed.
//!
//! Random numbers: record `i` uses a ChaCha8 generator seeded with the root
//! seed on stream `i`; imputation `v` consumes the `v`-th `f64` of that stream.
//! Results therefore do not depend on the order in which records are visited.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{Block, Dataset, LevelId, Pattern, Record, StratumKey};
use crate::error::{Error, Result};

/// Imputation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Conditions a single missing block on the observed block, `y` and `v`.
    Mi1,
    /// Conditions a single missing block on `y` and `v` only, with enlarged donor eligibility.
    Mi2,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mi1 => "MI1",
            Method::Mi2 => "MI2",
        })
    }
}

/// Categorical distribution over donor records.
#[derive(Clone, Debug, PartialEq)]
pub struct DonorPool {
    donors: Vec<usize>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DonorPool {
    /// Equal weights over `donors` (kept in ascending index order).
    pub fn uniform(mut donors: Vec<usize>) -> Self {
        donors.sort_unstable();
        let m = donors.len();
        let weights = vec![1.0 / m as f64; m];
        let cumulative = (1..=m).map(|k| k as f64 / m as f64).collect();
        DonorPool {
            donors,
            weights,
            cumulative,
        }
    }

    /// Arbitrary nonnegative weights, normalized to sum to one.
    pub fn weighted(donors: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if donors.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: donors.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "donor weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if donors.is_empty() || total <= 0.0 {
            return Ok(DonorPool {
                donors: Vec::new(),
                weights: Vec::new(),
                cumulative: Vec::new(),
            });
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(DonorPool {
            donors,
            weights,
            cumulative,
        })
    }

    pub fn donors(&self) -> &[usize] {
        &self.donors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.donors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.donors.is_empty()
    }

    /// Inverse CDF: first donor whose cumulative weight is `>= u`.
    pub fn select(&self, u: f64) -> Option<usize> {
        if self.donors.is_empty() {
            return None;
        }
        let k = self.cumulative.partition_point(|&c| c < u);
        Some(self.donors[k.min(self.donors.len() - 1)])
    }
}

/// Draws one donor record index; `None` for an empty pool.
pub fn sample_donor<R: Rng + ?Sized>(pool: &DonorPool, rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    pool.select(u)
}

/// Draws the requested block(s) from one donor. Joint draws return both
/// blocks of the same donor.
pub fn sample_block<'d, R: Rng + ?Sized>(
    dataset: &'d Dataset,
    pool: &DonorPool,
    need: Need,
    rng: &mut R,
) -> Option<(Option<&'d [LevelId]>, Option<&'d [LevelId]>)> {
    let donor = dataset.record(sample_donor(pool, rng)?);
    Some(match need {
        Need::X1 => (donor.x1.as_deref(), None),
        Need::X2 => (None, donor.x2.as_deref()),
        Need::Both => (donor.x1.as_deref(), donor.x2.as_deref()),
    })
}

/// Which block(s) a record needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Need {
    X1,
    X2,
    Both,
}

impl Need {
    pub fn for_pattern(p: Pattern) -> Option<Need> {
        match p {
            Pattern::Complete => None,
            Pattern::MissingX1 => Some(Need::X1),
            Pattern::MissingX2 => Some(Need::X2),
            Pattern::MissingBoth => Some(Need::Both),
        }
    }
}

/// Identifies a pool family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Mi1X1GivenX2,
    Mi1X2GivenX1,
    Joint,
    Mi2X1,
    Mi2X2,
    OutcomeComplete,
    OutcomeX1,
    OutcomeX2,
}

impl PoolKind {
    pub fn name(self) -> &'static str {
        match self {
            PoolKind::Mi1X1GivenX2 => "mi1_x1|y,x2,v",
            PoolKind::Mi1X2GivenX1 => "mi1_x2|y,x1,v",
            PoolKind::Joint => "joint|y,v",
            PoolKind::Mi2X1 => "mi2_x1|y,v",
            PoolKind::Mi2X2 => "mi2_x2|y,v",
            PoolKind::OutcomeComplete => "complete|y",
            PoolKind::OutcomeX1 => "x1_eligible|y",
            PoolKind::OutcomeX2 => "x2_eligible|y",
        }
    }
}

/// How far down the fallback chain a lookup went.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FallbackLevel {
    Primary,
    Stratum,
    Outcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub pool: PoolKind,
    pub level: FallbackLevel,
}

/// `(y, block, v)` conditioning key.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockKey {
    pub y: u8,
    pub block: Vec<LevelId>,
    pub v: Vec<LevelId>,
}

impl BlockKey {
    fn of(record: &Record, block: Block) -> Option<Self> {
        let StratumKey { y, v } = StratumKey::of(record);
        Some(BlockKey {
            y,
            block: record.block(block)?.to_vec(),
            v,
        })
    }
}

/// All donor pools of both schemes.
#[derive(Clone, Debug)]
pub struct DonorIndex {
    mi1_x1_given: HashMap<BlockKey, DonorPool>,
    mi1_x2_given: HashMap<BlockKey, DonorPool>,
    joint: HashMap<StratumKey, DonorPool>,
    mi2_x1: HashMap<StratumKey, DonorPool>,
    mi2_x2: HashMap<StratumKey, DonorPool>,
    outcome_complete: [DonorPool; 2],
    outcome_x1: [DonorPool; 2],
    outcome_x2: [DonorPool; 2],
}

fn finish<K: std::hash::Hash + Eq>(groups: HashMap<K, Vec<usize>>) -> HashMap<K, DonorPool> {
    groups
        .into_iter()
        .map(|(k, d)| (k, DonorPool::uniform(d)))
        .collect()
}

/// Groups eligible donors by conditioning key.
pub fn build_donor_index(dataset: &Dataset) -> DonorIndex {
    let mut mi1_x1: HashMap<BlockKey, Vec<usize>> = HashMap::new();
    let mut mi1_x2: HashMap<BlockKey, Vec<usize>> = HashMap::new();
    let mut joint: HashMap<StratumKey, Vec<usize>> = HashMap::new();
    let mut mi2_x1: HashMap<StratumKey, Vec<usize>> = HashMap::new();
    let mut mi2_x2: HashMap<StratumKey, Vec<usize>> = HashMap::new();
    let mut by_y: [[Vec<usize>; 2]; 3] = Default::default();

    for (i, r) in dataset.records().iter().enumerate() {
        let p = r.pattern();
        let key = StratumKey::of(r);
        let y = usize::from(r.y);
        if p == Pattern::Complete {
            mi1_x1
                .entry(BlockKey::of(r, Block::X2).unwrap())
                .or_default()
                .push(i);
            mi1_x2
                .entry(BlockKey::of(r, Block::X1).unwrap())
                .or_default()
                .push(i);
            joint.entry(key.clone()).or_default().push(i);
            by_y[0][y].push(i);
        }
        if matches!(p, Pattern::Complete | Pattern::MissingX2) {
            mi2_x1.entry(key.clone()).or_default().push(i);
            by_y[1][y].push(i);
        }
        if matches!(p, Pattern::Complete | Pattern::MissingX1) {
            mi2_x2.entry(key).or_default().push(i);
            by_y[2][y].push(i);
        }
    }
    let [c, x1, x2] = by_y;
    let pools = |[a, b]: [Vec<usize>; 2]| [DonorPool::uniform(a), DonorPool::uniform(b)];
    DonorIndex {
        mi1_x1_given: finish(mi1_x1),
        mi1_x2_given: finish(mi1_x2),
        joint: finish(joint),
        mi2_x1: finish(mi2_x1),
        mi2_x2: finish(mi2_x2),
        outcome_complete: pools(c),
        outcome_x1: pools(x1),
        outcome_x2: pools(x2),
    }
}

/// A pool chosen for a record together with how it was found.
#[derive(Clone, Copy, Debug)]
pub struct Resolved<'a> {
    pub pool: &'a DonorPool,
    pub provenance: Provenance,
}

impl DonorIndex {
    pub fn mi1_x1_given(&self, key: &BlockKey) -> Option<&DonorPool> {
        self.mi1_x1_given.get(key)
    }

    pub fn mi1_x2_given(&self, key: &BlockKey) -> Option<&DonorPool> {
        self.mi1_x2_given.get(key)
    }

    pub fn mi1_joint(&self, key: &StratumKey) -> Option<&DonorPool> {
        self.joint.get(key)
    }

    /// Same pools as [`DonorIndex::mi1_joint`]: both schemes draw jointly
    /// missing blocks from complete cases of the stratum.
    pub fn mi2_joint(&self, key: &StratumKey) -> Option<&DonorPool> {
        self.joint.get(key)
    }

    pub fn mi2_x1(&self, key: &StratumKey) -> Option<&DonorPool> {
        self.mi2_x1.get(key)
    }

    pub fn mi2_x2(&self, key: &StratumKey) -> Option<&DonorPool> {
        self.mi2_x2.get(key)
    }

    /// Number of pools per family: mi1_x1, mi1_x2, joint, mi2_x1, mi2_x2.
    pub fn pool_counts(&self) -> [usize; 5] {
        [
            self.mi1_x1_given.len(),
            self.mi1_x2_given.len(),
            self.joint.len(),
            self.mi2_x1.len(),
            self.mi2_x2.len(),
        ]
    }

    /// Pool used to impute `need` for record `i` under `method`, walking the
    /// fallback chain.
    pub fn resolve(
        &self,
        dataset: &Dataset,
        i: usize,
        method: Method,
        need: Need,
    ) -> Result<Resolved<'_>> {
        let r = dataset.record(i);
        let key = StratumKey::of(r);
        let y = usize::from(r.y);
        let conditional = |block: Block| -> Result<BlockKey> {
            BlockKey::of(r, block).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "record {i} lacks block {} for conditioning",
                    block.name()
                ))
            })
        };
        use FallbackLevel::*;
        use PoolKind::*;
        let chain: Vec<(Option<&DonorPool>, PoolKind, FallbackLevel)> = match (method, need) {
            (Method::Mi1, Need::X1) => vec![
                (
                    self.mi1_x1_given.get(&conditional(Block::X2)?),
                    Mi1X1GivenX2,
                    Primary,
                ),
                (self.joint.get(&key), Joint, Stratum),
                (Some(&self.outcome_complete[y]), OutcomeComplete, Outcome),
            ],
            (Method::Mi1, Need::X2) => vec![
                (
                    self.mi1_x2_given.get(&conditional(Block::X1)?),
                    Mi1X2GivenX1,
                    Primary,
                ),
                (self.joint.get(&key), Joint, Stratum),
                (Some(&self.outcome_complete[y]), OutcomeComplete, Outcome),
            ],
            (Method::Mi2, Need::X1) => vec![
                (self.mi2_x1.get(&key), Mi2X1, Primary),
                (Some(&self.outcome_x1[y]), OutcomeX1, Outcome),
            ],
            (Method::Mi2, Need::X2) => vec![
                (self.mi2_x2.get(&key), Mi2X2, Primary),
                (Some(&self.outcome_x2[y]), OutcomeX2, Outcome),
            ],
            (_, Need::Both) => vec![
                (self.joint.get(&key), Joint, Primary),
                (Some(&self.outcome_complete[y]), OutcomeComplete, Outcome),
            ],
        };
        chain
            .into_iter()
            .find_map(|(pool, kind, level)| {
                pool.filter(|p| !p.is_empty()).map(|pool| Resolved {
                    pool,
                    provenance: Provenance { pool: kind, level },
                })
            })
            .ok_or_else(|| Error::EmptyPool {
                record: i,
                key: format!("{method} {need:?} y={} v={:?}", r.y, key.v),
            })
    }
}

/// One record across the `M` completed datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletedRow {
    pub y: u8,
    pub pattern: Pattern,
    /// One design vector for complete records, `M` otherwise (row-major).
    designs: Vec<f64>,
    /// Donor record index per imputation; empty for complete records.
    pub donors: Vec<usize>,
    pub provenance: Option<Provenance>,
}

/// `M` completed design matrices produced by one imputation scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletedSets {
    method: Method,
    m: usize,
    dim: usize,
    rows: Vec<CompletedRow>,
}

impl CompletedSets {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[CompletedRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &CompletedRow {
        &self.rows[i]
    }

    /// Distinct design vectors stored for record `i` (1 if complete, else `M`).
    pub fn designs(&self, i: usize) -> std::slice::ChunksExact<'_, f64> {
        self.rows[i].designs.chunks_exact(self.dim)
    }

    /// Completed design vector of record `i` in imputation `v`.
    pub fn design(&self, i: usize, v: usize) -> &[f64] {
        let row = &self.rows[i];
        let k = if row.pattern.is_complete() { 0 } else { v };
        &row.designs[k * self.dim..(k + 1) * self.dim]
    }

    /// Writes completed dataset `v` (outcome, pattern, design columns) as CSV.
    pub fn write_csv<W: Write>(&self, dataset: &Dataset, v: usize, writer: W) -> Result<()> {
        if v >= self.m {
            return Err(Error::InvalidArgument(format!(
                "imputation {v} out of range 0..{}",
                self.m
            )));
        }
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![dataset.outcome_name().to_string(), "pattern".to_string()];
        header.extend(dataset.coefficient_names().into_iter().skip(1));
        wtr.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut out = vec![row.y.to_string(), row.pattern.code().to_string()];
            out.extend(self.design(i, v)[1..].iter().map(|x| x.to_string()));
            wtr.write_record(&out)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Random stream of record `i`.
pub fn record_stream(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

const PARALLEL_THRESHOLD: usize = 4096;

/// Builds `m` completed datasets under `method`.
pub fn impute(
    dataset: &Dataset,
    index: &DonorIndex,
    method: Method,
    m: usize,
    seed: u64,
) -> Result<CompletedSets> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "number of imputations must be at least 2, got {m}"
        )));
    }
    let dim = dataset.design_len();
    let one = |i: usize| -> Result<CompletedRow> {
        let r = dataset.record(i);
        let pattern = r.pattern();
        let Some(need) = Need::for_pattern(pattern) else {
            return Ok(CompletedRow {
                y: r.y,
                pattern,
                designs: dataset.design(i).expect("complete record"),
                donors: Vec::new(),
                provenance: None,
            });
        };
        let resolved = index.resolve(dataset, i, method, need)?;
        let mut rng = record_stream(seed, i);
        let mut designs = vec![0.0; m * dim];
        let mut donors = Vec::with_capacity(m);
        for out in designs.chunks_exact_mut(dim) {
            let d = sample_donor(resolved.pool, &mut rng).expect("nonempty pool");
            let donor = dataset.record(d);
            let x1 = match need {
                Need::X2 => r.x1.as_deref(),
                _ => donor.x1.as_deref(),
            }
            .expect("x1 available");
            let x2 = match need {
                Need::X1 => r.x2.as_deref(),
                _ => donor.x2.as_deref(),
            }
            .expect("x2 available");
            dataset.fill_design(x1, x2, &r.z, out);
            donors.push(d);
        }
        Ok(CompletedRow {
            y: r.y,
            pattern,
            designs,
            donors,
            provenance: Some(resolved.provenance),
        })
    };
    let rows: Result<Vec<CompletedRow>> = if dataset.n() >= PARALLEL_THRESHOLD {
        (0..dataset.n()).into_par_iter().map(one).collect()
    } else {
        (0..dataset.n()).map(one).collect()
    };
    Ok(CompletedSets {
        method,
        m,
        dim,
        rows: rows?,
    })
}
