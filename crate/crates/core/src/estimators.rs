//! Point estimators and the registry that selects them by name.
//!
//! | name   | label | point estimate           | covariance                 |
//! |--------|-------|--------------------------|----------------------------|
//! | `full` | FULL  | ML on fully observed data | inverse information       |
//! | `cc`   | CC    | ML on complete cases     | inverse information        |
//! | `sipw` | SIPW  | `1/pi1`-weighted CC      | weighted sandwich          |
//! | `mi1`  | MI1   | MI1 score                | Rubin                      |
//! | `mi2`  | MI2   | MI2 score                | Rubin                      |
//! | `mi1n` | MI1n  | MI1 score                | influence sandwich         |
//! | `mi2n` | MI2n  | MI2 score                | influence sandwich         |

use std::cell::OnceCell;
use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::imputation::{build_donor_index, impute, CompletedSets, DonorIndex, Method};
use crate::linalg::{add_outer, guarded_inverse, sandwich};
use crate::logit::{
    score_contrib, solve_estimating_eq, Beta, SolveFailure, SolveReport, SolverOptions,
    WeightedLogistic,
};
use crate::selection::{estimate_selection_probs, SelectionTable};
use crate::variance::{mi_information, mi_score, proposed_variance, rubin_variance, sstar_mi2};

/// How the covariance in a [`FitResult`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarianceMethod {
    None,
    ModelBased,
    Rubin,
    Proposed,
    IpwSandwich,
}

impl VarianceMethod {
    pub fn name(self) -> &'static str {
        match self {
            VarianceMethod::None => "none",
            VarianceMethod::ModelBased => "model",
            VarianceMethod::Rubin => "rubin",
            VarianceMethod::Proposed => "proposed",
            VarianceMethod::IpwSandwich => "ipw_sandwich",
        }
    }
}

impl fmt::Display for VarianceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub estimator: String,
    pub beta_hat: Beta,
    /// Covariance of `beta_hat` (not of `sqrt(n) (beta_hat - beta)`).
    pub cov: DMatrix<f64>,
    pub ase: DVector<f64>,
    pub report: SolveReport,
    pub variance_method: VarianceMethod,
}

impl FitResult {
    fn point(estimator: &str, report: SolveReport) -> Self {
        let d = report.beta_hat.len();
        FitResult {
            estimator: estimator.to_string(),
            beta_hat: report.beta_hat.clone(),
            cov: DMatrix::from_element(d, d, f64::NAN),
            ase: DVector::from_element(d, f64::NAN),
            report,
            variance_method: VarianceMethod::None,
        }
    }

    /// Attaches a covariance; `ase` becomes the root of its diagonal.
    pub fn with_covariance(mut self, cov: DMatrix<f64>, method: VarianceMethod) -> Self {
        self.ase = cov.diagonal().map(|v| v.max(0.0).sqrt());
        self.cov = cov;
        self.variance_method = method;
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.estimator = label.to_string();
        self
    }

    pub fn converged(&self) -> bool {
        self.report.converged
    }

    /// Turns a non-converged fit into [`Error::NotConverged`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged() {
            return Ok(self);
        }
        Err(Error::NotConverged {
            estimator: self.estimator,
            reason: self
                .report
                .failure
                .map_or("unknown", SolveFailure::describe)
                .to_string(),
        })
    }

    /// Wald statistics `beta / ase`.
    pub fn z_values(&self) -> DVector<f64> {
        self.beta_hat.component_div(&self.ase)
    }

    /// Two-sided Wald p-values.
    pub fn p_values(&self) -> DVector<f64> {
        let normal = Normal::standard();
        self.z_values().map(|z| 2.0 * normal.cdf(-z.abs()))
    }
}

fn model_based(label: &str, eq: &WeightedLogistic, opts: &SolverOptions) -> Result<FitResult> {
    let report = eq.solve(opts);
    if !report.converged {
        return Ok(FitResult::point(label, report));
    }
    let cov = guarded_inverse(&eq.information(&report.beta_hat))?;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(FitResult::point(label, report).with_covariance(cov, VarianceMethod::ModelBased))
}

/// Maximum likelihood on a fully observed dataset.
pub fn fit_full_ml(dataset: &Dataset, opts: &SolverOptions) -> Result<FitResult> {
    if !dataset.is_fully_observed() {
        return Err(Error::IncompleteData {
            incomplete: dataset.n() - dataset.complete_count(),
        });
    }
    fit_cc_labeled(dataset, opts, "FULL")
}

/// Maximum likelihood on the complete cases.
pub fn fit_cc(dataset: &Dataset, opts: &SolverOptions) -> Result<FitResult> {
    fit_cc_labeled(dataset, opts, "CC")
}

fn fit_cc_labeled(dataset: &Dataset, opts: &SolverOptions, label: &str) -> Result<FitResult> {
    let mut eq = WeightedLogistic::new(dataset.design_len());
    for (i, r) in dataset.records().iter().enumerate() {
        if let Some(x) = dataset.design(i) {
            eq.push(&x, r.y, 1.0);
        }
    }
    if eq.is_empty() {
        return Err(Error::NoCompleteCases);
    }
    model_based(label, &eq, opts)
}

/// Complete cases weighted by `1 / pi1` of their stratum.
///
/// The covariance accounts for the estimated weights: it is the sandwich
/// `G_w^{-1} M G_w^{-T} / n` over influence vectors
/// `d1 S_i / pi1 + (1 - d1 / pi1) S*_i`, with `S*` the `(y, v)` complete-case
/// score average.
pub fn fit_sipw(
    dataset: &Dataset,
    table: &SelectionTable,
    index: &DonorIndex,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let mut eq = WeightedLogistic::new(dataset.design_len());
    for (i, r) in dataset.records().iter().enumerate() {
        if let Some(x) = dataset.design(i) {
            let p1 = table.for_record(i)[0];
            if p1 <= 0.0 {
                return Err(Error::ZeroDenominator {
                    quantity: "pi1",
                    record: i,
                });
            }
            eq.push(&x, r.y, 1.0 / p1);
        }
    }
    if eq.is_empty() {
        return Err(Error::NoCompleteCases);
    }
    let report = eq.solve(opts);
    if !report.converged {
        return Ok(FitResult::point("SIPW", report));
    }
    let beta = &report.beta_hat;
    let influence = sipw_influence(dataset, table, index, beta)?;
    let g_inv = guarded_inverse(&eq.information(beta))?;
    let d = beta.len();
    let mut meat = DMatrix::zeros(d, d);
    for phi in &influence {
        add_outer(&mut meat, phi.as_slice(), 1.0);
    }
    let cov = sandwich(&g_inv, &meat);
    Ok(FitResult::point("SIPW", report).with_covariance(cov, VarianceMethod::IpwSandwich))
}

/// Per-record SIPW influence vectors `d1 S_i / pi1 + (1 - d1 / pi1) S*_i`.
pub fn sipw_influence(
    dataset: &Dataset,
    table: &SelectionTable,
    index: &DonorIndex,
    beta: &Beta,
) -> Result<Vec<DVector<f64>>> {
    let sstar = sstar_mi2(dataset, index, beta)?;
    Ok((0..dataset.n())
        .map(|i| match dataset.design(i) {
            Some(x) => {
                let w = 1.0 / table.for_record(i)[0];
                let s = score_contrib(beta, &x, dataset.record(i).y).expect("design length");
                s * w + &sstar[i] * (1.0 - w)
            }
            None => sstar[i].clone(),
        })
        .collect())
}

/// Solves the MI estimating equation; covariance is left unset.
pub fn fit_mi(completed: &CompletedSets, opts: &SolverOptions) -> Result<FitResult> {
    if completed.m() < 2 {
        return Err(Error::InvalidArgument(format!(
            "number of imputations must be at least 2, got {}",
            completed.m()
        )));
    }
    let label = completed.method().to_string();
    let mut seen = [false; 2];
    for r in completed.rows() {
        seen[usize::from(r.y)] = true;
    }
    if !(seen[0] && seen[1]) {
        return Ok(FitResult::point(
            &label,
            SolveReport::degenerate(completed.dim()),
        ));
    }
    let report = solve_estimating_eq(
        |b| mi_score(completed, b),
        |b| mi_information(completed, b),
        DVector::zeros(completed.dim()),
        opts,
    );
    Ok(FitResult::point(&label, report))
}

/// Shared, lazily computed inputs for the estimators fitted to one dataset.
pub struct FitContext<'a> {
    pub dataset: &'a Dataset,
    /// Fully observed version of `dataset`, if known (simulation).
    pub full_data: Option<&'a Dataset>,
    pub imputations: usize,
    pub impute_seed: u64,
    pub solver: SolverOptions,
    table: OnceCell<SelectionTable>,
    index: OnceCell<DonorIndex>,
    completed: [OnceCell<Result<CompletedSets>>; 2],
    mi_fits: [OnceCell<Result<FitResult>>; 2],
}

fn method_slot(method: Method) -> usize {
    match method {
        Method::Mi1 => 0,
        Method::Mi2 => 1,
    }
}

impl<'a> FitContext<'a> {
    pub fn new(dataset: &'a Dataset, imputations: usize, impute_seed: u64) -> Self {
        FitContext {
            dataset,
            full_data: None,
            imputations,
            impute_seed,
            solver: SolverOptions::default(),
            table: OnceCell::new(),
            index: OnceCell::new(),
            completed: Default::default(),
            mi_fits: Default::default(),
        }
    }

    pub fn with_full_data(mut self, full: &'a Dataset) -> Self {
        self.full_data = Some(full);
        self
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn selection(&self) -> &SelectionTable {
        self.table
            .get_or_init(|| estimate_selection_probs(self.dataset))
    }

    pub fn donor_index(&self) -> &DonorIndex {
        self.index.get_or_init(|| build_donor_index(self.dataset))
    }

    pub fn completed(&self, method: Method) -> Result<&CompletedSets> {
        self.completed[method_slot(method)]
            .get_or_init(|| {
                impute(
                    self.dataset,
                    self.donor_index(),
                    method,
                    self.imputations,
                    self.impute_seed,
                )
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// MI point estimate shared by the Rubin and sandwich variants.
    pub fn mi_fit(&self, method: Method) -> Result<&FitResult> {
        self.mi_fits[method_slot(method)]
            .get_or_init(|| fit_mi(self.completed(method)?, &self.solver))
            .as_ref()
            .map_err(Clone::clone)
    }
}

/// A named estimation strategy.
pub trait Estimator: Send + Sync {
    /// Registry key (lowercase).
    fn name(&self) -> &'static str;
    /// Display label used in tables.
    fn label(&self) -> &'static str;
    fn fit(&self, ctx: &FitContext<'_>) -> Result<FitResult>;
}

struct Full;
struct CompleteCase;
struct Sipw;
struct MultipleImputation {
    name: &'static str,
    label: &'static str,
    method: Method,
    variance: VarianceMethod,
}

impl Estimator for Full {
    fn name(&self) -> &'static str {
        "full"
    }
    fn label(&self) -> &'static str {
        "FULL"
    }
    fn fit(&self, ctx: &FitContext<'_>) -> Result<FitResult> {
        fit_full_ml(ctx.full_data.unwrap_or(ctx.dataset), &ctx.solver)
    }
}

impl Estimator for CompleteCase {
    fn name(&self) -> &'static str {
        "cc"
    }
    fn label(&self) -> &'static str {
        "CC"
    }
    fn fit(&self, ctx: &FitContext<'_>) -> Result<FitResult> {
        fit_cc(ctx.dataset, &ctx.solver)
    }
}

impl Estimator for Sipw {
    fn name(&self) -> &'static str {
        "sipw"
    }
    fn label(&self) -> &'static str {
        "SIPW"
    }
    fn fit(&self, ctx: &FitContext<'_>) -> Result<FitResult> {
        fit_sipw(ctx.dataset, ctx.selection(), ctx.donor_index(), &ctx.solver)
    }
}

impl Estimator for MultipleImputation {
    fn name(&self) -> &'static str {
        self.name
    }
    fn label(&self) -> &'static str {
        self.label
    }
    fn fit(&self, ctx: &FitContext<'_>) -> Result<FitResult> {
        let point = ctx.mi_fit(self.method)?.clone().with_label(self.label);
        if !point.converged() {
            return Ok(point);
        }
        let completed = ctx.completed(self.method)?;
        let cov = match self.variance {
            VarianceMethod::Rubin => rubin_variance(completed, &point.beta_hat)?,
            _ => proposed_variance(
                ctx.dataset,
                completed,
                ctx.donor_index(),
                &point.beta_hat,
                ctx.selection(),
            )?,
        };
        Ok(point.with_covariance(cov, self.variance))
    }
}

/// Estimators addressable by name.
pub struct Registry {
    entries: Vec<Box<dyn Estimator>>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            entries: Vec::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register(Box::new(Full));
        r.register(Box::new(CompleteCase));
        r.register(Box::new(Sipw));
        for (name, label, method, variance) in [
            ("mi1", "MI1", Method::Mi1, VarianceMethod::Rubin),
            ("mi2", "MI2", Method::Mi2, VarianceMethod::Rubin),
            ("mi1n", "MI1n", Method::Mi1, VarianceMethod::Proposed),
            ("mi2n", "MI2n", Method::Mi2, VarianceMethod::Proposed),
        ] {
            r.register(Box::new(MultipleImputation {
                name,
                label,
                method,
                variance,
            }));
        }
        r
    }

    /// Adds or replaces the estimator registered under its name.
    pub fn register(&mut self, estimator: Box<dyn Estimator>) {
        match self
            .entries
            .iter()
            .position(|e| e.name() == estimator.name())
        {
            Some(k) => self.entries[k] = estimator,
            None => self.entries.push(estimator),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    /// Case-insensitive lookup by name or label.
    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        let key = name.trim().to_ascii_lowercase();
        self.entries
            .iter()
            .find(|e| e.name() == key || e.label().to_ascii_lowercase() == key)
            .map(|e| e.as_ref())
            .ok_or_else(|| Error::UnknownEstimator(name.to_string()))
    }

    /// Looks up each name, preserving order; `all` selects every entry.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<&dyn Estimator>> {
        if names
            .iter()
            .any(|n| n.as_ref().trim().eq_ignore_ascii_case("all"))
        {
            return Ok(self.entries.iter().map(|e| e.as_ref()).collect());
        }
        names.iter().map(|n| self.get(n.as_ref())).collect()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}

/// Long-form coefficient table: one row per estimator and coefficient.
pub fn write_fit_csv<W: Write>(results: &[FitResult], names: &[String], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "estimator",
        "variance",
        "converged",
        "parameter",
        "est",
        "ase",
        "z",
        "p",
    ])?;
    for r in results {
        let z = r.z_values();
        let p = r.p_values();
        for (k, name) in names.iter().enumerate() {
            wtr.write_record([
                r.estimator.clone(),
                r.variance_method.to_string(),
                r.converged().to_string(),
                name.clone(),
                format!("{:.6}", r.beta_hat[k]),
                format!("{:.6}", r.ase[k]),
                format!("{:.4}", z[k]),
                format!("{:.4}", p[k]),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Wide text table: estimators across, `est`/`ASE`/`z`/`p` rows per coefficient.
pub fn format_fit_table(results: &[FitResult], names: &[String]) -> String {
    let mut out = format!("{:<16}{:<6}", "parameter", "");
    for r in results {
        out.push_str(&format!("{:>11}", r.estimator));
    }
    out.push('\n');
    for (k, name) in names.iter().enumerate() {
        let rows: [(&str, Box<dyn Fn(&FitResult) -> f64>); 4] = [
            ("est", Box::new(move |r: &FitResult| r.beta_hat[k])),
            ("ASE", Box::new(move |r: &FitResult| r.ase[k])),
            ("z", Box::new(move |r: &FitResult| r.z_values()[k])),
            ("p", Box::new(move |r: &FitResult| r.p_values()[k])),
        ];
        for (j, (stat, f)) in rows.iter().enumerate() {
            let label = if j == 0 { name.as_str() } else { "" };
            out.push_str(&format!("{label:<16}{stat:<6}"));
            for r in results {
                out.push_str(&format!("{:>11.4}", f(r)));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetBuilder;

    fn complete() -> Dataset {
        let mut b = DatasetBuilder::new("y").x1("a").x2("b").z("c");
        let rows = [
            (1, "1", "0", "0"),
            (0, "0", "1", "0"),
            (1, "1", "1", "1"),
            (0, "0", "0", "1"),
            (1, "0", "1", "0"),
            (0, "1", "0", "1"),
            (1, "1", "1", "0"),
            (0, "0", "0", "0"),
            (1, "0", "0", "1"),
            (0, "1", "1", "1"),
            (1, "1", "0", "1"),
            (0, "0", "1", "1"),
        ];
        for (y, a, bb, c) in rows {
            b.push(y, Some(&[a]), Some(&[bb]), &[c], &[]).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn registry_lookup() {
        let reg = Registry::builtin();
        assert_eq!(
            reg.names(),
            ["full", "cc", "sipw", "mi1", "mi2", "mi1n", "mi2n"]
        );
        assert_eq!(reg.get("MI1n").unwrap().label(), "MI1n");
        assert!(matches!(reg.get("rfmi"), Err(Error::UnknownEstimator(_))));
        assert_eq!(reg.select(&["all"]).unwrap().len(), 7);
    }

    #[test]
    fn complete_data_estimators_coincide() {
        let ds = complete();
        let ctx = FitContext::new(&ds, 3, 0);
        let reg = Registry::builtin();
        let fits: Vec<FitResult> = reg
            .select(&["all"])
            .unwrap()
            .iter()
            .map(|e| e.fit(&ctx).unwrap())
            .collect();
        for f in &fits {
            assert!(f.converged(), "{}", f.estimator);
            assert!((&f.beta_hat - &fits[0].beta_hat).amax() < 1e-8);
        }
    }

    #[test]
    fn full_rejects_incomplete() {
        let mut b = DatasetBuilder::new("y").x1("a").x2("b");
        b.push(1, Some(&["1"]), Some(&["0"]), &[], &[]).unwrap();
        b.push(0, None, Some(&["0"]), &[], &[]).unwrap();
        let ds = b.build().unwrap();
        assert!(matches!(
            fit_full_ml(&ds, &SolverOptions::default()),
            Err(Error::IncompleteData { incomplete: 1 })
        ));
    }

    #[test]
    fn p_values_are_two_sided() {
        let ds = complete();
        let f = fit_cc(&ds, &SolverOptions::default()).unwrap();
        let p = f.p_values();
        let z = f.z_values();
        for k in 0..p.len() {
            assert!(p[k] > 0.0 && p[k] <= 1.0);
            if z[k].abs() < 1e-12 {
                assert!((p[k] - 1.0).abs() < 1e-12);
            }
        }
        let table = format_fit_table(std::slice::from_ref(&f), &ds.coefficient_names());
        assert_eq!(table.lines().count(), 1 + 4 * 4);
    }
}
