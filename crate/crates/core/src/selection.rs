//! Nonparametric selection probabilities per `(y, v)` stratum.

use std::collections::HashMap;
use std::io::Write;

use crate::dataset::{Dataset, StratumKey};
use crate::error::{Error, Result};

/// Pattern counts within one stratum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct StratumCounts {
    /// Counts of patterns 1..=4.
    pub by_pattern: [usize; 4],
    pub total: usize,
}

impl StratumCounts {
    /// `pi_j = n_j / n_total`.
    pub fn probabilities(&self) -> [f64; 4] {
        let t = self.total as f64;
        self.by_pattern.map(|c| c as f64 / t)
    }
}

/// Estimated selection probabilities, one entry per stratum observed in the data.
#[derive(Clone, Debug)]
pub struct SelectionTable {
    keys: Vec<StratumKey>,
    counts: Vec<StratumCounts>,
    probs: Vec<[f64; 4]>,
    index: HashMap<StratumKey, usize>,
    record_stratum: Vec<usize>,
}

/// Counts patterns per `(y, z, w)` stratum and forms the ratios `n_j / n`.
pub fn estimate_selection_probs(dataset: &Dataset) -> SelectionTable {
    let mut keys = Vec::new();
    let mut counts: Vec<StratumCounts> = Vec::new();
    let mut index = HashMap::new();
    let mut record_stratum = Vec::with_capacity(dataset.n());
    for r in dataset.records() {
        let key = StratumKey::of(r);
        let s = *index.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            counts.push(StratumCounts::default());
            counts.len() - 1
        });
        counts[s].by_pattern[r.pattern().index()] += 1;
        counts[s].total += 1;
        record_stratum.push(s);
    }
    let probs = counts.iter().map(StratumCounts::probabilities).collect();
    SelectionTable {
        keys,
        counts,
        probs,
        index,
        record_stratum,
    }
}

impl SelectionTable {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn lookup(&self, key: &StratumKey) -> Result<[f64; 4]> {
        self.index
            .get(key)
            .map(|&s| self.probs[s])
            .ok_or_else(|| Error::UnknownStratum(format!("y={} v={:?}", key.y, key.v)))
    }

    pub fn counts(&self, key: &StratumKey) -> Option<StratumCounts> {
        self.index.get(key).map(|&s| self.counts[s])
    }

    /// Probabilities for the stratum of record `i` of the source dataset.
    pub fn for_record(&self, i: usize) -> [f64; 4] {
        self.probs[self.record_stratum[i]]
    }

    /// Stratum index (first-appearance order) of record `i`.
    pub fn stratum_of(&self, i: usize) -> usize {
        self.record_stratum[i]
    }

    /// `(key, counts, probabilities)` in first-appearance order.
    pub fn iter(&self) -> impl Iterator<Item = (&StratumKey, &StratumCounts, &[f64; 4])> {
        self.keys
            .iter()
            .zip(&self.counts)
            .zip(&self.probs)
            .map(|((k, c), p)| (k, c, p))
    }

    /// Diagnostic CSV: stratum columns, counts and probabilities.
    pub fn write_csv<W: Write>(&self, dataset: &Dataset, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![dataset.outcome_name().to_string()];
        let v_cols: Vec<_> = dataset
            .z_columns()
            .iter()
            .chain(dataset.w_columns())
            .collect();
        header.extend(v_cols.iter().map(|c| c.name().to_string()));
        header.extend(
            [
                "n1", "n2", "n3", "n4", "n_total", "pi1", "pi2", "pi3", "pi4",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        wtr.write_record(&header)?;
        for (key, c, p) in self.iter() {
            let mut row = vec![key.y.to_string()];
            row.extend(
                v_cols
                    .iter()
                    .zip(&key.v)
                    .map(|(col, &id)| col.level(id).to_string()),
            );
            row.extend(c.by_pattern.iter().map(|n| n.to_string()));
            row.push(c.total.to_string());
            row.extend(p.iter().map(|v| format!("{v:.6}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Overall fractions of patterns 1..=4.
pub fn pattern_fractions(dataset: &Dataset) -> [f64; 4] {
    let n = dataset.n() as f64;
    dataset.pattern_counts().map(|c| c as f64 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetBuilder;

    #[test]
    fn hand_counted_stratum() {
        // one stratum with patterns (1,1,2,3)
        let mut b = DatasetBuilder::new("y").x1("a").x2("b").z("c");
        b.push(1, Some(&["1"]), Some(&["1"]), &["0"], &[]).unwrap();
        b.push(1, Some(&["0"]), Some(&["1"]), &["0"], &[]).unwrap();
        b.push(1, None, Some(&["1"]), &["0"], &[]).unwrap();
        b.push(1, Some(&["1"]), None, &["0"], &[]).unwrap();
        let ds = b.build().unwrap();
        let t = estimate_selection_probs(&ds);
        assert_eq!(t.len(), 1);
        assert_eq!(
            t.lookup(&ds.stratum_key(0)).unwrap(),
            [0.5, 0.25, 0.25, 0.0]
        );
    }

    #[test]
    fn complete_data_gives_unit_pi1() {
        let mut b = DatasetBuilder::new("y").x1("a").x2("b").z("c");
        for (y, z) in [(0, "0"), (1, "0"), (1, "1"), (0, "1")] {
            b.push(y, Some(&["1"]), Some(&["1"]), &[z], &[]).unwrap();
        }
        let ds = b.build().unwrap();
        let t = estimate_selection_probs(&ds);
        assert_eq!(t.len(), 4);
        for (_, _, p) in t.iter() {
            assert_eq!(*p, [1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn lookup_unknown_key_fails() {
        let mut b = DatasetBuilder::new("y").x1("a").x2("b").z("c");
        b.push(0, Some(&["1"]), Some(&["1"]), &["0"], &[]).unwrap();
        let ds = b.build().unwrap();
        let t = estimate_selection_probs(&ds);
        let unseen = StratumKey { y: 1, v: vec![0] };
        assert!(matches!(t.lookup(&unseen), Err(Error::UnknownStratum(_))));
    }
}
