//! Missing-data logistic regression datasets.
//!
//! A record carries a binary outcome, two covariate blocks that may each be
//! absent, and always-observed covariates `z` and surrogates `w`. Covariate
//! values are stored as interned [`Level`]s so that stratum matching is exact
//! token equality; numeric values are only materialized when a design vector
//! is built.

mod csv_io;
mod schema;

pub use csv_io::{load_csv, read_csv, write_csv};
pub use schema::{Role, Schema};

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Index of a level inside its column's level table.
pub type LevelId = u32;

/// A canonical discrete value.
///
/// Decimal tokens are normalized (`"+0.40"` and `"0.4"` are the same level,
/// `"-0"` is `"0"`); anything else is kept verbatim after trimming.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Level(String);

impl Level {
    pub fn new(token: &str) -> Self {
        let token = token.trim();
        Level(canonical_decimal(token).unwrap_or_else(|| token.to_string()))
    }

    pub fn from_f64(value: f64) -> Self {
        Level::new(&format!("{value}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn numeric(&self) -> Option<f64> {
        self.0.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn canonical_decimal(token: &str) -> Option<String> {
    let (negative, body) = match token.as_bytes().first()? {
        b'-' => (true, &token[1..]),
        b'+' => (false, &token[1..]),
        _ => (false, token),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let int_part = int_part.trim_start_matches('0');
    let frac_part = frac_part.trim_end_matches('0');
    let int_part = if int_part.is_empty() { "0" } else { int_part };
    let mut out = String::with_capacity(token.len());
    let is_zero = int_part == "0" && frac_part.is_empty();
    if negative && !is_zero {
        out.push('-');
    }
    out.push_str(int_part);
    if !frac_part.is_empty() {
        out.push('.');
        out.push_str(frac_part);
    }
    Some(out)
}

/// Missingness pattern of the two covariate blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    /// Both blocks observed.
    Complete,
    /// `x1` missing, `x2` observed.
    MissingX1,
    /// `x1` observed, `x2` missing.
    MissingX2,
    /// Both blocks missing.
    MissingBoth,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::Complete,
        Pattern::MissingX1,
        Pattern::MissingX2,
        Pattern::MissingBoth,
    ];

    pub fn from_presence(x1_present: bool, x2_present: bool) -> Self {
        match (x1_present, x2_present) {
            (true, true) => Pattern::Complete,
            (false, true) => Pattern::MissingX1,
            (true, false) => Pattern::MissingX2,
            (false, false) => Pattern::MissingBoth,
        }
    }

    /// Pattern code 1..=4.
    pub fn code(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Zero-based position, handy for indexing `[_; 4]` arrays.
    pub fn index(self) -> usize {
        match self {
            Pattern::Complete => 0,
            Pattern::MissingX1 => 1,
            Pattern::MissingX2 => 2,
            Pattern::MissingBoth => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Pattern::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    pub fn is_complete(self) -> bool {
        self == Pattern::Complete
    }
}

/// Pattern code for the given block presence: (T,T)→1, (F,T)→2, (T,F)→3, (F,F)→4.
pub fn derive_pattern(x1_present: bool, x2_present: bool) -> u8 {
    Pattern::from_presence(x1_present, x2_present).code()
}

/// One of the two covariate blocks subject to missingness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    X1,
    X2,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::X1 => "x1",
            Block::X2 => "x2",
        }
    }
}

/// A covariate column with its interned level table.
#[derive(Clone, Debug)]
pub struct Column {
    name: String,
    numeric: bool,
    levels: Vec<Level>,
    values: Vec<f64>,
    lookup: HashMap<Level, LevelId>,
}

impl Column {
    /// A column whose levels must parse as numbers (design columns).
    pub fn numeric(name: impl Into<String>) -> Self {
        Self::empty(name.into(), true)
    }

    /// A column whose levels are arbitrary tokens (surrogate columns).
    pub fn categorical(name: impl Into<String>) -> Self {
        Self::empty(name.into(), false)
    }

    fn empty(name: String, numeric: bool) -> Self {
        Column {
            name,
            numeric,
            levels: Vec::new(),
            values: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, id: LevelId) -> &Level {
        &self.levels[id as usize]
    }

    /// Numeric value of a level. Zero for categorical columns.
    pub fn value(&self, id: LevelId) -> f64 {
        self.values[id as usize]
    }

    pub fn id_of(&self, level: &Level) -> Option<LevelId> {
        self.lookup.get(level).copied()
    }

    /// Returns the id of `level`, adding it to the table if new.
    /// Fails with the offending token when a numeric column gets a non-number.
    pub fn intern(&mut self, level: Level) -> std::result::Result<LevelId, String> {
        if let Some(&id) = self.lookup.get(&level) {
            return Ok(id);
        }
        let value = if self.numeric {
            level.numeric().ok_or_else(|| level.as_str().to_string())?
        } else {
            0.0
        };
        let id = self.levels.len() as LevelId;
        self.levels.push(level.clone());
        self.values.push(value);
        self.lookup.insert(level, id);
        Ok(id)
    }
}

/// One observation. `x1`/`x2` are `None` when the block is missing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub y: u8,
    pub x1: Option<Vec<LevelId>>,
    pub x2: Option<Vec<LevelId>>,
    pub z: Vec<LevelId>,
    pub w: Vec<LevelId>,
}

impl Record {
    pub fn pattern(&self) -> Pattern {
        Pattern::from_presence(self.x1.is_some(), self.x2.is_some())
    }

    pub fn block(&self, block: Block) -> Option<&[LevelId]> {
        match block {
            Block::X1 => self.x1.as_deref(),
            Block::X2 => self.x2.as_deref(),
        }
    }
}

/// Conditioning stratum `(y, v)` with `v = (z, w)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StratumKey {
    pub y: u8,
    pub v: Vec<LevelId>,
}

impl StratumKey {
    pub fn of(record: &Record) -> Self {
        let mut v = Vec::with_capacity(record.z.len() + record.w.len());
        v.extend_from_slice(&record.z);
        v.extend_from_slice(&record.w);
        StratumKey { y: record.y, v }
    }
}

/// Stratum key of a record; a pure function of `(y, z, w)`.
pub fn stratum_key(record: &Record) -> StratumKey {
    StratumKey::of(record)
}

/// Block widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub x1: usize,
    pub x2: usize,
    pub z: usize,
    pub w: usize,
}

impl Dims {
    /// Length of `(1, x1, x2, z)`.
    pub fn design_len(&self) -> usize {
        1 + self.x1 + self.x2 + self.z
    }
}

/// Validated, immutable collection of records.
#[derive(Clone, Debug)]
pub struct Dataset {
    outcome: String,
    x1: Vec<Column>,
    x2: Vec<Column>,
    z: Vec<Column>,
    w: Vec<Column>,
    records: Vec<Record>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &Record {
        &self.records[i]
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome
    }

    pub fn x1_columns(&self) -> &[Column] {
        &self.x1
    }

    pub fn x2_columns(&self) -> &[Column] {
        &self.x2
    }

    pub fn z_columns(&self) -> &[Column] {
        &self.z
    }

    pub fn w_columns(&self) -> &[Column] {
        &self.w
    }

    pub fn dims(&self) -> Dims {
        Dims {
            x1: self.x1.len(),
            x2: self.x2.len(),
            z: self.z.len(),
            w: self.w.len(),
        }
    }

    pub fn design_len(&self) -> usize {
        self.dims().design_len()
    }

    /// Coefficient names in design order: intercept, x1, x2, z.
    pub fn coefficient_names(&self) -> Vec<String> {
        std::iter::once("(Intercept)".to_string())
            .chain(
                self.x1
                    .iter()
                    .chain(&self.x2)
                    .chain(&self.z)
                    .map(|c| c.name.clone()),
            )
            .collect()
    }

    /// Counts of patterns 1..=4.
    pub fn pattern_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for r in &self.records {
            counts[r.pattern().index()] += 1;
        }
        counts
    }

    pub fn complete_count(&self) -> usize {
        self.pattern_counts()[0]
    }

    pub fn is_fully_observed(&self) -> bool {
        self.records.iter().all(|r| r.pattern().is_complete())
    }

    pub fn stratum_key(&self, i: usize) -> StratumKey {
        StratumKey::of(&self.records[i])
    }

    /// Writes `(1, x1, x2, z)` for the given block values into `out`.
    pub fn fill_design(&self, x1: &[LevelId], x2: &[LevelId], z: &[LevelId], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.design_len());
        out[0] = 1.0;
        let mut k = 1;
        for (col, &id) in self.x1.iter().zip(x1) {
            out[k] = col.value(id);
            k += 1;
        }
        for (col, &id) in self.x2.iter().zip(x2) {
            out[k] = col.value(id);
            k += 1;
        }
        for (col, &id) in self.z.iter().zip(z) {
            out[k] = col.value(id);
            k += 1;
        }
    }

    /// Observed design vector of record `i`; `None` unless the record is complete.
    pub fn design(&self, i: usize) -> Option<Vec<f64>> {
        let r = &self.records[i];
        let (x1, x2) = (r.x1.as_deref()?, r.x2.as_deref()?);
        let mut out = vec![0.0; self.design_len()];
        self.fill_design(x1, x2, &r.z, &mut out);
        Some(out)
    }

    /// Same columns, different records (validated again).
    pub fn with_records(&self, records: Vec<Record>) -> Result<Dataset> {
        let ds = Dataset {
            records,
            ..self.clone_schema()
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Dataset made of the complete cases only.
    pub fn complete_cases(&self) -> Result<Dataset> {
        let records = self
            .records
            .iter()
            .filter(|r| r.pattern().is_complete())
            .cloned()
            .collect();
        self.with_records(records)
    }

    fn clone_schema(&self) -> Dataset {
        Dataset {
            outcome: self.outcome.clone(),
            x1: self.x1.clone(),
            x2: self.x2.clone(),
            z: self.z.clone(),
            w: self.w.clone(),
            records: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dims = self.dims();
        for r in &self.records {
            let check = |got: usize, expected: usize| {
                if got == expected {
                    Ok(())
                } else {
                    Err(Error::DimensionMismatch { expected, got })
                }
            };
            if r.y > 1 {
                return Err(Error::InvalidArgument(format!(
                    "outcome {} is not binary",
                    r.y
                )));
            }
            if let Some(x1) = &r.x1 {
                check(x1.len(), dims.x1)?;
            }
            if let Some(x2) = &r.x2 {
                check(x2.len(), dims.x2)?;
            }
            check(r.z.len(), dims.z)?;
            check(r.w.len(), dims.w)?;
        }
        if self.complete_count() == 0 {
            return Err(Error::NoCompleteCases);
        }
        Ok(())
    }
}

/// Incremental construction of a [`Dataset`].
#[derive(Clone, Debug)]
pub struct DatasetBuilder {
    outcome: String,
    x1: Vec<Column>,
    x2: Vec<Column>,
    z: Vec<Column>,
    w: Vec<Column>,
    records: Vec<Record>,
}

impl DatasetBuilder {
    pub fn new(outcome: impl Into<String>) -> Self {
        DatasetBuilder {
            outcome: outcome.into(),
            x1: Vec::new(),
            x2: Vec::new(),
            z: Vec::new(),
            w: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn x1(mut self, name: impl Into<String>) -> Self {
        self.x1.push(Column::numeric(name));
        self
    }

    pub fn x2(mut self, name: impl Into<String>) -> Self {
        self.x2.push(Column::numeric(name));
        self
    }

    pub fn z(mut self, name: impl Into<String>) -> Self {
        self.z.push(Column::numeric(name));
        self
    }

    pub fn w(mut self, name: impl Into<String>) -> Self {
        self.w.push(Column::categorical(name));
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record given as level tokens. Blocks passed as `None` are missing.
    pub fn push(
        &mut self,
        y: u8,
        x1: Option<&[&str]>,
        x2: Option<&[&str]>,
        z: &[&str],
        w: &[&str],
    ) -> Result<()> {
        let row = self.records.len() + 1;
        if y > 1 {
            return Err(Error::BadOutcome {
                row,
                token: y.to_string(),
            });
        }
        let x1 = x1.map(|t| intern_all(&mut self.x1, t, row)).transpose()?;
        let x2 = x2.map(|t| intern_all(&mut self.x2, t, row)).transpose()?;
        let z = intern_all(&mut self.z, z, row)?;
        let w = intern_all(&mut self.w, w, row)?;
        self.records.push(Record { y, x1, x2, z, w });
        Ok(())
    }

    pub fn build(self) -> Result<Dataset> {
        let ds = Dataset {
            outcome: self.outcome,
            x1: self.x1,
            x2: self.x2,
            z: self.z,
            w: self.w,
            records: self.records,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn intern_all(columns: &mut [Column], tokens: &[&str], row: usize) -> Result<Vec<LevelId>> {
    if tokens.len() != columns.len() {
        return Err(Error::DimensionMismatch {
            expected: columns.len(),
            got: tokens.len(),
        });
    }
    columns
        .iter_mut()
        .zip(tokens)
        .map(|(col, tok)| {
            col.intern(Level::new(tok))
                .map_err(|token| Error::NonNumeric {
                    row,
                    column: col.name.clone(),
                    token,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let mut b = DatasetBuilder::new("y").x1("a").x2("b").z("c").w("d");
        b.push(1, Some(&["0.4"]), Some(&["1"]), &["0"], &["u"])
            .unwrap();
        b.push(0, None, Some(&["1"]), &["0"], &["u"]).unwrap();
        b.push(1, Some(&["-0.3"]), None, &["1"], &["v"]).unwrap();
        b.push(1, None, None, &["1"], &["v"]).unwrap();
        b.push(0, Some(&["1"]), Some(&["-1"]), &["0"], &["u"])
            .unwrap();
        b.push(1, None, Some(&["0.6"]), &["0"], &["u"]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn derive_pattern_codes() {
        assert_eq!(derive_pattern(true, true), 1);
        assert_eq!(derive_pattern(false, true), 2);
        assert_eq!(derive_pattern(true, false), 3);
        assert_eq!(derive_pattern(false, false), 4);
    }

    #[test]
    fn pattern_code_round_trip() {
        for p in Pattern::ALL {
            assert_eq!(Pattern::from_code(p.code()), Some(p));
        }
        assert_eq!(Pattern::from_code(0), None);
        assert_eq!(Pattern::from_code(5), None);
    }

    #[test]
    fn hand_written_patterns() {
        let ds = toy();
        let codes: Vec<u8> = ds.records().iter().map(|r| r.pattern().code()).collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 1, 2]);
        assert_eq!(ds.pattern_counts(), [2, 2, 1, 1]);
    }

    #[test]
    fn decimal_levels_are_canonical() {
        assert_eq!(Level::new("0.40"), Level::new("0.4"));
        assert_eq!(Level::new("+1.0"), Level::new("1"));
        assert_eq!(Level::new("-0"), Level::new("0"));
        assert_eq!(Level::new("-.5").as_str(), "-0.5");
        assert_eq!(Level::new("007").as_str(), "7");
        assert_eq!(Level::new(" abc ").as_str(), "abc");
        assert_ne!(Level::new("1"), Level::new("1e0"));
        assert_eq!(Level::from_f64(-0.3).as_str(), "-0.3");
    }

    #[test]
    fn stratum_keys_ignore_covariate_blocks() {
        let ds = toy();
        // records 0 and 1 differ in y only.
        assert_ne!(ds.stratum_key(0), ds.stratum_key(1));
        // records 0 and 5 differ in x1/x2 only.
        assert_ne!(ds.record(0).x2, ds.record(5).x2);
        assert_eq!(ds.stratum_key(0), ds.stratum_key(5));
        let keys: std::collections::BTreeSet<_> = (0..ds.n()).map(|i| ds.stratum_key(i)).collect();
        // {y=1,(0,u)}: 0,5 ; {y=0,(0,u)}: 1,4 ; {y=1,(1,v)}: 2,3
        assert_eq!(keys.len(), 3);
        assert_eq!(ds.stratum_key(1), ds.stratum_key(4));
        assert_eq!(ds.stratum_key(2), ds.stratum_key(3));
    }

    #[test]
    fn design_vector_starts_with_one() {
        let ds = toy();
        assert_eq!(ds.design(0).unwrap(), vec![1.0, 0.4, 1.0, 0.0]);
        assert!(ds.design(1).is_none());
        assert_eq!(ds.coefficient_names(), vec!["(Intercept)", "a", "b", "c"]);
    }

    #[test]
    fn rejects_dataset_without_complete_cases() {
        let mut b = DatasetBuilder::new("y").x1("a").x2("b").z("c");
        b.push(1, None, Some(&["1"]), &["0"], &[]).unwrap();
        assert_eq!(b.build().unwrap_err(), Error::NoCompleteCases);
    }

    #[test]
    fn rejects_non_numeric_design_level() {
        let mut b = DatasetBuilder::new("y").x1("a").x2("b").z("c");
        let err = b
            .push(1, Some(&["high"]), Some(&["1"]), &["0"], &[])
            .unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 1, .. }));
    }

    #[test]
    fn complete_cases_drops_incomplete() {
        let ds = toy().complete_cases().unwrap();
        assert_eq!(ds.n(), 2);
        assert!(ds.is_fully_observed());
    }
}
