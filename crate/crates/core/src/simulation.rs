//! Study data generators, the replication runner and the metric tables.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, DatasetBuilder, Pattern};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, FitContext};
use crate::logit::inv_logit;

/// Two-sided 95% normal quantile used for coverage.
pub const Z_975: f64 = 1.959964;

/// Share of failed replications above which a table is flagged.
pub const FAILURE_WARNING_RATE: f64 = 0.10;

const DATA_TAG: u64 = 0x4441_5441;
const IMPUTE_TAG: u64 = 0x494d_5055;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` in scenario `scenario` for the stream `tag`.
pub fn derive_seed(root: u64, scenario: u64, tag: u64, rep: u64) -> u64 {
    [scenario, tag, rep]
        .into_iter()
        .fold(splitmix64(root), |s, v| splitmix64(s ^ v))
}

/// Law of a scalar covariate.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CovariateSpec {
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Bernoulli { p: f64 },
}

impl CovariateSpec {
    fn validate(&self, field: &str) -> Result<()> {
        let bad = |message: String| Error::Config {
            field: field.to_string(),
            message,
        };
        match self {
            CovariateSpec::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(bad(
                        "values and probs must be nonempty and of equal length".into()
                    ));
                }
                check_probs(probs).map_err(bad)?;
                if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(bad("probs must sum to 1".into()));
                }
            }
            CovariateSpec::Bernoulli { p } => check_probs(&[*p]).map_err(bad)?,
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            CovariateSpec::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated nonempty")
            }
            CovariateSpec::Bernoulli { p } => f64::from(u8::from(u < *p)),
        }
    }
}

fn check_probs(ps: &[f64]) -> std::result::Result<(), String> {
    if ps.iter().all(|p| (0.0..=1.0).contains(p)) {
        Ok(())
    } else {
        Err("probabilities must lie in [0, 1]".into())
    }
}

/// How the surrogates `w1`, `w2` relate to `x1`, `x2`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SurrogateSpec {
    /// `w_k = 1{x_k > 0}`.
    Threshold,
    /// `P(w_k = 1 | x_k = 1)` and `P(w_k = 1 | x_k = 0)` for binary `x_k`.
    Conditional { w1: [f64; 2], w2: [f64; 2] },
}

impl SurrogateSpec {
    fn draw<R: Rng + ?Sized>(&self, x1: f64, x2: f64, rng: &mut R) -> (u8, u8) {
        match self {
            SurrogateSpec::Threshold => (u8::from(x1 > 0.0), u8::from(x2 > 0.0)),
            SurrogateSpec::Conditional { w1, w2 } => {
                let p1 = if x1 == 1.0 { w1[0] } else { w1[1] };
                let p2 = if x2 == 1.0 { w2[0] } else { w2[1] };
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                (u8::from(u1 < p1), u8::from(u2 < p2))
            }
        }
    }
}

/// Per-scenario overrides of the study defaults.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub label: String,
    pub alpha: Option<[f64; 3]>,
    pub n: Option<usize>,
    pub imputations: Option<usize>,
    /// Pattern fractions the scenario is meant to produce (informational).
    pub target_fractions: Option<[f64; 4]>,
}

/// One fully specified simulation setting.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub index: usize,
    pub label: String,
    pub n: usize,
    pub imputations: usize,
    pub alpha: [f64; 3],
    pub target_fractions: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    pub n: usize,
    pub imputations: usize,
    pub reps: usize,
    pub seed: u64,
    pub beta: [f64; 4],
    pub gamma: [f64; 4],
    pub alpha: [f64; 3],
    #[serde(default)]
    pub estimators: Option<Vec<String>>,
    pub x1: CovariateSpec,
    pub x2: CovariateSpec,
    pub z: CovariateSpec,
    pub surrogate: SurrogateSpec,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
}

const PRESETS: [&str; 4] = [
    include_str!("../../../configs/study1.toml"),
    include_str!("../../../configs/study2.toml"),
    include_str!("../../../configs/study3.toml"),
    include_str!("../../../configs/study4.toml"),
];

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config {
            field: e
                .span()
                .map(|s| text[..s.start].lines().count().to_string())
                .map_or_else(|| "config".to_string(), |line| format!("line {line}")),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Bundled configuration of study `k` (1..=4).
    pub fn preset(k: usize) -> Result<Self> {
        let text = k
            .checked_sub(1)
            .and_then(|i| PRESETS.get(i))
            .ok_or_else(|| Error::InvalidArgument(format!("no bundled study {k}")))?;
        Self::from_toml(text)
    }

    pub fn preset_text(k: usize) -> Option<&'static str> {
        k.checked_sub(1).and_then(|i| PRESETS.get(i)).copied()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| Error::Config {
            field: field.to_string(),
            message: message.to_string(),
        };
        if self.n == 0 {
            return Err(bad("n", "must be positive"));
        }
        if self.imputations < 2 {
            return Err(bad("imputations", "must be at least 2"));
        }
        if self.reps < 2 {
            return Err(bad("reps", "must be at least 2"));
        }
        self.x1.validate("x1")?;
        self.x2.validate("x2")?;
        self.z.validate("z")?;
        if !matches!(self.z, CovariateSpec::Bernoulli { .. }) {
            return Err(bad("z", "must be bernoulli"));
        }
        if let SurrogateSpec::Conditional { w1, w2 } = &self.surrogate {
            check_probs(w1).map_err(|m| bad("surrogate.w1", &m))?;
            check_probs(w2).map_err(|m| bad("surrogate.w2", &m))?;
        }
        for (k, s) in self.scenarios.iter().enumerate() {
            if s.n == Some(0) {
                return Err(bad(&format!("scenario[{k}].n"), "must be positive"));
            }
            if s.imputations.is_some_and(|m| m < 2) {
                return Err(bad(
                    &format!("scenario[{k}].imputations"),
                    "must be at least 2",
                ));
            }
        }
        Ok(())
    }

    /// Scenarios with defaults filled in; a single default scenario when none are listed.
    pub fn scenarios(&self) -> Vec<Scenario> {
        if self.scenarios.is_empty() {
            return vec![Scenario {
                index: 0,
                label: self.name.clone(),
                n: self.n,
                imputations: self.imputations,
                alpha: self.alpha,
                target_fractions: None,
            }];
        }
        self.scenarios
            .iter()
            .enumerate()
            .map(|(index, s)| Scenario {
                index,
                label: s.label.clone(),
                n: s.n.unwrap_or(self.n),
                imputations: s.imputations.unwrap_or(self.imputations),
                alpha: s.alpha.unwrap_or(self.alpha),
                target_fractions: s.target_fractions,
            })
            .collect()
    }

    pub fn beta_true(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.beta)
    }
}

/// Pattern probabilities of the baseline-category multinomial logit with
/// log-odds `alpha_j + g1 y + g2 w1 + g3 w2 + g4 z` against pattern 4.
pub fn pattern_probabilities(
    y: u8,
    w1: u8,
    w2: u8,
    z: f64,
    alpha: &[f64; 3],
    gamma: &[f64; 4],
) -> [f64; 4] {
    let lin = gamma[0] * f64::from(y)
        + gamma[1] * f64::from(w1)
        + gamma[2] * f64::from(w2)
        + gamma[3] * z;
    let odds = alpha.map(|a| (a + lin).exp());
    let total = 1.0 + odds.iter().sum::<f64>();
    [
        odds[0] / total,
        odds[1] / total,
        odds[2] / total,
        1.0 / total,
    ]
}

pub fn gen_missingness<R: Rng + ?Sized>(
    y: u8,
    w1: u8,
    w2: u8,
    z: f64,
    alpha: &[f64; 3],
    gamma: &[f64; 4],
    rng: &mut R,
) -> Pattern {
    let p = pattern_probabilities(y, w1, w2, z, alpha, gamma);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (pattern, pj) in Pattern::ALL.into_iter().zip(p) {
        acc += pj;
        if u < acc {
            return pattern;
        }
    }
    Pattern::MissingBoth
}

/// A simulated sample before and after masking.
#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub full: Dataset,
    pub observed: Dataset,
}

/// Draws `n` records: covariates, surrogates, outcome, then the pattern.
pub fn gen_dataset<R: Rng + ?Sized>(
    config: &StudyConfig,
    scenario: &Scenario,
    rng: &mut R,
) -> Result<GeneratedData> {
    let builder = || {
        DatasetBuilder::new("y")
            .x1("x1")
            .x2("x2")
            .z("z")
            .w("w1")
            .w("w2")
    };
    let mut full = builder();
    let mut observed = builder();
    let b = &config.beta;
    for _ in 0..scenario.n {
        let x1 = config.x1.draw(rng);
        let x2 = config.x2.draw(rng);
        let z = config.z.draw(rng);
        let (w1, w2) = config.surrogate.draw(x1, x2, rng);
        let u: f64 = rng.random();
        let y = u8::from(u < inv_logit(b[0] + b[1] * x1 + b[2] * x2 + b[3] * z));
        let pattern = gen_missingness(y, w1, w2, z, &scenario.alpha, &config.gamma, rng);

        let (t1, t2, tz) = (x1.to_string(), x2.to_string(), z.to_string());
        let tw = [w1.to_string(), w2.to_string()];
        let w: [&str; 2] = [&tw[0], &tw[1]];
        full.push(y, Some(&[&t1]), Some(&[&t2]), &[&tz], &w)?;
        let keep1 = matches!(pattern, Pattern::Complete | Pattern::MissingX2);
        let keep2 = matches!(pattern, Pattern::Complete | Pattern::MissingX1);
        observed.push(
            y,
            keep1.then_some(&[t1.as_str()][..]),
            keep2.then_some(&[t2.as_str()][..]),
            &[&tz],
            &w,
        )?;
    }
    Ok(GeneratedData {
        full: full.build()?,
        observed: observed.build()?,
    })
}

/// Data generator stream of one replication.
pub fn replication_rng(config: &StudyConfig, scenario: &Scenario, rep: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(
        config.seed,
        scenario.index as u64,
        DATA_TAG,
        rep as u64,
    ))
}

/// Imputation seed of one replication (shared by MI1 and MI2).
pub fn imputation_seed(config: &StudyConfig, scenario: &Scenario, rep: usize) -> u64 {
    derive_seed(config.seed, scenario.index as u64, IMPUTE_TAG, rep as u64)
}

/// Aggregates for one coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefMetrics {
    pub bias: f64,
    pub sd: f64,
    pub ase: f64,
    pub mse: f64,
    pub cp: f64,
}

/// Bias, SD, mean ASE, MSE and coverage over `(estimate, ase)` samples.
pub fn aggregate(
    beta_true: &DVector<f64>,
    samples: &[(DVector<f64>, DVector<f64>)],
) -> Vec<CoefMetrics> {
    let r = samples.len() as f64;
    (0..beta_true.len())
        .map(|k| {
            let truth = beta_true[k];
            let mean = samples.iter().map(|(b, _)| b[k]).sum::<f64>() / r;
            let ss = samples
                .iter()
                .map(|(b, _)| (b[k] - mean).powi(2))
                .sum::<f64>();
            let sd = if samples.len() > 1 {
                (ss / (r - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            let ase = samples.iter().map(|(_, a)| a[k]).sum::<f64>() / r;
            let covered = samples
                .iter()
                .filter(|(b, a)| (b[k] - truth).abs() <= Z_975 * a[k])
                .count();
            let bias = mean - truth;
            CoefMetrics {
                bias,
                sd,
                ase,
                mse: bias * bias + sd * sd,
                cp: covered as f64 / r,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorMetrics {
    pub label: String,
    pub coefs: Vec<CoefMetrics>,
    /// Replications entering the aggregates.
    pub used: usize,
    /// Replications dropped for failing to converge or erroring.
    pub failed: usize,
    /// First failure message, for the log.
    pub first_failure: Option<String>,
}

impl EstimatorMetrics {
    pub fn failure_rate(&self) -> f64 {
        self.failed as f64 / (self.used + self.failed).max(1) as f64
    }

    pub fn flagged(&self) -> bool {
        self.failure_rate() > FAILURE_WARNING_RATE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub study: String,
    pub scenario: String,
    pub n: usize,
    pub imputations: usize,
    pub reps: usize,
    pub beta_true: DVector<f64>,
    pub coefficient_names: Vec<String>,
    pub estimators: Vec<EstimatorMetrics>,
    /// Mean observed pattern fractions over replications.
    pub pattern_fractions: [f64; 4],
}

impl MetricsTable {
    pub fn get(&self, label: &str) -> Option<&EstimatorMetrics> {
        self.estimators.iter().find(|e| e.label == label)
    }

    /// Labels of estimators failing in more than 10% of replications.
    pub fn warnings(&self) -> Vec<&str> {
        self.estimators
            .iter()
            .filter(|e| e.flagged())
            .map(|e| e.label.as_str())
            .collect()
    }
}

type RepOutcome = Vec<std::result::Result<(DVector<f64>, DVector<f64>), String>>;

fn one_replication(
    config: &StudyConfig,
    scenario: &Scenario,
    estimators: &[&dyn Estimator],
    rep: usize,
) -> Result<(RepOutcome, [usize; 4])> {
    let mut rng = replication_rng(config, scenario, rep);
    let data = gen_dataset(config, scenario, &mut rng)?;
    let ctx = FitContext::new(
        &data.observed,
        scenario.imputations,
        imputation_seed(config, scenario, rep),
    )
    .with_full_data(&data.full);
    let outcome = estimators
        .iter()
        .map(|e| {
            let fit = e
                .fit(&ctx)
                .and_then(|f| f.require_converged())
                .map_err(|err| err.to_string())?;
            if fit.ase.iter().all(|v| v.is_finite()) {
                Ok((fit.beta_hat, fit.ase))
            } else {
                Err(format!("{}: non-finite standard error", e.label()))
            }
        })
        .collect();
    Ok((outcome, data.observed.pattern_counts()))
}

/// Runs `config.reps` replications of one scenario on `workers` threads.
/// Output does not depend on `workers`.
pub fn run_replications(
    config: &StudyConfig,
    scenario: &Scenario,
    estimators: &[&dyn Estimator],
    workers: usize,
) -> Result<MetricsTable> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let outcomes: Vec<(RepOutcome, [usize; 4])> = pool.install(|| {
        (0..config.reps)
            .into_par_iter()
            .map(|r| one_replication(config, scenario, estimators, r))
            .collect::<Result<_>>()
    })?;

    let beta_true = config.beta_true();
    let mut fractions = [0.0; 4];
    for (_, counts) in &outcomes {
        for (f, c) in fractions.iter_mut().zip(counts) {
            *f += *c as f64 / scenario.n as f64;
        }
    }
    let fractions = fractions.map(|f| f / config.reps as f64);

    let metrics = estimators
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let mut samples = Vec::with_capacity(outcomes.len());
            let mut failed = 0;
            let mut first_failure = None;
            for (out, _) in &outcomes {
                match &out[j] {
                    Ok(s) => samples.push(s.clone()),
                    Err(msg) => {
                        failed += 1;
                        first_failure.get_or_insert_with(|| msg.clone());
                    }
                }
            }
            EstimatorMetrics {
                label: e.label().to_string(),
                coefs: aggregate(&beta_true, &samples),
                used: samples.len(),
                failed,
                first_failure,
            }
        })
        .collect();
    Ok(MetricsTable {
        study: config.name.clone(),
        scenario: scenario.label.clone(),
        n: scenario.n,
        imputations: scenario.imputations,
        reps: config.reps,
        beta_true,
        coefficient_names: ["b0", "b1", "b2", "b3"].map(String::from).to_vec(),
        estimators: metrics,
        pattern_fractions: fractions,
    })
}

/// Elementwise `ase / reference`.
pub fn relative_efficiency(ase: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    if ase.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: ase.len(),
        });
    }
    ase.iter()
        .zip(reference)
        .map(|(a, r)| {
            if *r == 0.0 || !r.is_finite() {
                Err(Error::InvalidArgument(
                    "reference ASE must be finite and nonzero".into(),
                ))
            } else {
                Ok(a / r)
            }
        })
        .collect()
}

/// Ratios of mean ASEs against the sandwich-variance MI estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct ReTable {
    pub scenario: String,
    /// `(label, per-coefficient ratio)`, e.g. `C1 = CC / MI1n`.
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn re_table(table: &MetricsTable) -> ReTable {
    let ase = |label: &str| -> Option<Vec<f64>> {
        table
            .get(label)
            .filter(|e| e.used > 0)
            .map(|e| e.coefs.iter().map(|c| c.ase).collect())
    };
    let mut rows = Vec::new();
    for (r, reference) in [("1", "MI1n"), ("2", "MI2n")] {
        let Some(ref_ase) = ase(reference) else {
            continue;
        };
        for (prefix, label) in [("C", "CC"), ("W", "SIPW"), ("M1", "MI1"), ("M2", "MI2")] {
            if let Some(a) = ase(label) {
                if let Ok(re) = relative_efficiency(&a, &ref_ase) {
                    rows.push((format!("{prefix}{r}"), re));
                }
            }
        }
    }
    if let (Some(a), Some(b)) = (ase("MI1n"), ase("MI2n")) {
        if let Ok(re) = relative_efficiency(&a, &b) {
            rows.push(("M12n".to_string(), re));
        }
    }
    ReTable {
        scenario: table.scenario.clone(),
        rows,
    }
}

/// Provenance line written at the top of every output file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunHeader {
    pub seed: u64,
    pub config_sha256: String,
}

impl RunHeader {
    pub fn new(seed: u64, config_text: &str) -> Self {
        RunHeader {
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "# mimar {} seed={} config_sha256={}",
            env!("CARGO_PKG_VERSION"),
            self.seed,
            self.config_sha256
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".into()
    }
}

pub fn write_metrics_csv<W: Write>(
    tables: &[MetricsTable],
    header: &RunHeader,
    mut writer: W,
) -> Result<()> {
    writeln!(writer, "{}", header.line())?;
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "study",
        "scenario",
        "n",
        "m",
        "estimator",
        "parameter",
        "bias",
        "sd",
        "ase",
        "mse",
        "cp",
        "used",
        "failed",
        "flagged",
    ])?;
    for t in tables {
        for e in &t.estimators {
            for (name, c) in t.coefficient_names.iter().zip(&e.coefs) {
                wtr.write_record([
                    t.study.clone(),
                    t.scenario.clone(),
                    t.n.to_string(),
                    t.imputations.to_string(),
                    e.label.clone(),
                    name.clone(),
                    fmt_num(c.bias),
                    fmt_num(c.sd),
                    fmt_num(c.ase),
                    fmt_num(c.mse),
                    fmt_num(c.cp),
                    e.used.to_string(),
                    e.failed.to_string(),
                    e.flagged().to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_re_csv<W: Write>(
    tables: &[ReTable],
    names: &[String],
    header: &RunHeader,
    mut writer: W,
) -> Result<()> {
    writeln!(writer, "{}", header.line())?;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut head = vec!["scenario".to_string(), "ratio".to_string()];
    head.extend(names.iter().cloned());
    wtr.write_record(&head)?;
    for t in tables {
        for (label, values) in &t.rows {
            let mut row = vec![t.scenario.clone(), label.clone()];
            row.extend(values.iter().map(|v| format!("{v:.4}")));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

fn fmt4(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "NA".into()
    }
}

/// Aligned text: estimators across, `Bias/SD/ASE/MSE/CP` rows per coefficient.
pub fn format_metrics_text(table: &MetricsTable) -> String {
    let mut out = String::new();
    let f = table.pattern_fractions;
    let _ = writeln!(
        out,
        "{} scenario {} (n={}, M={}, reps={}; observed fractions {:.3} {:.3} {:.3} {:.3})",
        table.study, table.scenario, table.n, table.imputations, table.reps, f[0], f[1], f[2], f[3]
    );
    let _ = write!(out, "{:<10}{:<6}", "", "");
    for e in &table.estimators {
        let _ = write!(out, "{:>10}", e.label);
    }
    out.push('\n');
    for (k, name) in table.coefficient_names.iter().enumerate() {
        let stats: [(&str, fn(&CoefMetrics) -> f64); 5] = [
            ("Bias", |c| c.bias),
            ("SD", |c| c.sd),
            ("ASE", |c| c.ase),
            ("MSE", |c| c.mse),
            ("CP", |c| c.cp),
        ];
        for (j, (stat, get)) in stats.iter().enumerate() {
            let label = if j == 0 { name.as_str() } else { "" };
            let _ = write!(out, "{label:<10}{stat:<6}");
            for e in &table.estimators {
                let _ = write!(out, "{:>10}", fmt4(get(&e.coefs[k])));
            }
            out.push('\n');
        }
    }
    let _ = write!(out, "{:<16}", "failed reps");
    for e in &table.estimators {
        let _ = write!(out, "{:>10}", e.failed);
    }
    out.push('\n');
    for label in table.warnings() {
        let _ = writeln!(
            out,
            "WARNING: {label} failed in more than 10% of replications"
        );
    }
    out
}

pub fn format_re_text(table: &ReTable, names: &[String]) -> String {
    let mut out = format!(
        "relative efficiency, scenario {}\n{:<8}",
        table.scenario, ""
    );
    for n in names {
        let _ = write!(out, "{n:>10}");
    }
    out.push('\n');
    for (label, values) in &table.rows {
        let _ = write!(out, "{label:<8}");
        for v in values {
            let _ = write!(out, "{:>10}", fmt4(*v));
        }
        out.push('\n');
    }
    out
}
