//! Datasets of binary `(S, X, H, Y)` records.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

pub mod io;
pub mod outcome;
pub mod preprocess;
pub mod synthetic;

pub use outcome::{inject_outcome, OutcomeCase, OutcomeCaseConfig};
pub use preprocess::{preprocess, Preprocessor, RawTable, Schema};
pub use synthetic::{gen_thm42_data, gen_thm43_data, GenCell, GeneratorSpec};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Row {
    pub s: u8,
    pub x: Vec<u8>,
    pub h: u8,
    pub y: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
    pub feature_names: Vec<String>,
    pub sensitive_name: String,
}

impl Dataset {
    pub fn new(rows: Vec<Row>, feature_names: Vec<String>, sensitive_name: impl Into<String>) -> Result<Self> {
        let d = Self {
            rows,
            feature_names,
            sensitive_name: sensitive_name.into(),
        };
        d.validate()?;
        Ok(d)
    }

    /// Feature names `X_1..X_n`.
    pub fn default_names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("X_{i}")).collect()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_features();
        for (i, r) in self.rows.iter().enumerate() {
            if r.x.len() != n {
                return Err(Error::Data(format!(
                    "row {i} has {} features, expected {n}",
                    r.x.len()
                )));
            }
            if r.s > 1 || r.h > 1 || r.y > 1 || r.x.iter().any(|&v| v > 1) {
                return Err(Error::Data(format!("row {i} has a non-binary value")));
            }
        }
        Ok(())
    }

    /// Row counts for `S = 0` and `S = 1`.
    pub fn group_sizes(&self) -> [usize; 2] {
        let n1 = self.rows.iter().filter(|r| r.s == 1).count();
        [self.rows.len() - n1, n1]
    }

    pub fn has_both_groups(&self) -> bool {
        let g = self.group_sizes();
        g[0] > 0 && g[1] > 0
    }

    /// Empirical `Pr(H=1 | S=s)`.
    pub fn rate_h(&self, s: u8) -> Result<f64> {
        self.rate(s, |r| r.h)
    }

    /// Empirical `Pr(Y=1 | S=s)`.
    pub fn rate_y(&self, s: u8) -> Result<f64> {
        self.rate(s, |r| r.y)
    }

    fn rate(&self, s: u8, f: impl Fn(&Row) -> u8) -> Result<f64> {
        let (mut n, mut k) = (0usize, 0usize);
        for r in self.rows.iter().filter(|r| r.s == s) {
            n += 1;
            k += f(r) as usize;
        }
        if n == 0 {
            return Err(Error::Data(format!("no rows with S={s}")));
        }
        Ok(k as f64 / n as f64)
    }

    /// `Pr(H=1|S=1) - Pr(H=1|S=0)`.
    pub fn decision_gap(&self) -> Result<f64> {
        Ok(self.rate_h(1)? - self.rate_h(0)?)
    }

    /// `Pr(Y=1|S=1) - Pr(Y=1|S=0)`.
    pub fn outcome_gap(&self) -> Result<f64> {
        Ok(self.rate_y(1)? - self.rate_y(0)?)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            sensitive_name: self.sensitive_name.clone(),
        }
    }
}

/// Seeded shuffle then split; both sides must contain both groups.
///
/// A split that leaves a group empty is redrawn with a fresh stream, up to
/// ten attempts.
pub fn split(d: &Dataset, train_fraction: f64, seed_value: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = d.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    for attempt in 0..10u64 {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = seed::rng(seed::derive(seed_value, &[attempt]));
        idx.shuffle(&mut rng);
        let train = d.subset(&idx[..n_train]);
        let test = d.subset(&idx[n_train..]);
        if train.has_both_groups() && test.has_both_groups() {
            return Ok((train, test));
        }
    }
    Err(Error::Data(
        "could not draw a split with both groups on each side".into(),
    ))
}

/// One distinct `(s, x)` input with label counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub s: u8,
    /// Indices of features equal to 1.
    pub active: Vec<u32>,
    /// `hy[h][y]` row counts.
    pub hy: [[u64; 2]; 2],
}

impl Pattern {
    pub fn count(&self) -> u64 {
        self.hy[0][0] + self.hy[0][1] + self.hy[1][0] + self.hy[1][1]
    }

    pub fn count_h(&self, h: usize) -> u64 {
        self.hy[h][0] + self.hy[h][1]
    }

    pub fn x(&self, n_features: usize) -> Vec<u8> {
        let mut x = vec![0u8; n_features];
        for &j in &self.active {
            x[j as usize] = 1;
        }
        x
    }
}

/// A dataset compressed to its distinct inputs.
///
/// Every loss is a count-weighted sum over rows that share an input, so
/// evaluating on patterns is exact and much cheaper on binary data.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternTable {
    pub n_features: usize,
    pub patterns: Vec<Pattern>,
    pub n_rows: u64,
    pub group_rows: [u64; 2],
}

impl PatternTable {
    /// Patterns keep first-appearance order, so results depend only on row order.
    pub fn from_dataset(d: &Dataset) -> Self {
        let mut index: HashMap<(u8, &[u8]), usize> = HashMap::new();
        let mut patterns: Vec<Pattern> = Vec::new();
        let mut group_rows = [0u64; 2];
        for r in &d.rows {
            let k = *index.entry((r.s, r.x.as_slice())).or_insert_with(|| {
                patterns.push(Pattern {
                    s: r.s,
                    active: r
                        .x
                        .iter()
                        .enumerate()
                        .filter(|(_, &v)| v == 1)
                        .map(|(j, _)| j as u32)
                        .collect(),
                    hy: [[0; 2]; 2],
                });
                patterns.len() - 1
            });
            patterns[k].hy[r.h as usize][r.y as usize] += 1;
            group_rows[r.s as usize] += 1;
        }
        Self {
            n_features: d.n_features(),
            patterns,
            n_rows: d.len() as u64,
            group_rows,
        }
    }

    pub fn has_both_groups(&self) -> bool {
        self.group_rows[0] > 0 && self.group_rows[1] > 0
    }
}

impl From<&Dataset> for PatternTable {
    fn from(d: &Dataset) -> Self {
        Self::from_dataset(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let rows = vec![
            Row { s: 0, x: vec![1, 0], h: 1, y: 1 },
            Row { s: 1, x: vec![1, 0], h: 0, y: 1 },
            Row { s: 0, x: vec![1, 0], h: 0, y: 0 },
            Row { s: 1, x: vec![0, 0], h: 1, y: 0 },
        ];
        Dataset::new(rows, Dataset::default_names(2), "S").unwrap()
    }

    #[test]
    fn validation_rejects_bad_rows() {
        let bad = vec![Row { s: 2, x: vec![0], h: 0, y: 0 }];
        assert!(Dataset::new(bad, Dataset::default_names(1), "S").is_err());
        let short = vec![Row { s: 0, x: vec![], h: 0, y: 0 }];
        assert!(Dataset::new(short, Dataset::default_names(1), "S").is_err());
    }

    #[test]
    fn pattern_table_counts() {
        let t = PatternTable::from_dataset(&tiny());
        assert_eq!(t.patterns.len(), 3);
        assert_eq!(t.patterns[0].hy, [[1, 0], [0, 1]]);
        assert_eq!(t.patterns[0].active, vec![0]);
        assert_eq!(t.group_rows, [2, 2]);
        assert_eq!(t.patterns.iter().map(|p| p.count()).sum::<u64>(), 4);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let rows: Vec<Row> = (0..1000)
            .map(|i| Row { s: (i % 2) as u8, x: vec![(i % 3 == 0) as u8], h: 0, y: 0 })
            .collect();
        let d = Dataset::new(rows, Dataset::default_names(1), "S").unwrap();
        let (a, b) = split(&d, 0.7, 5).unwrap();
        assert_eq!((a.len(), b.len()), (700, 300));
        let (a2, b2) = split(&d, 0.7, 5).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        assert!(split(&d, 1.0, 5).is_err());
    }

    #[test]
    fn degenerate_split() {
        let rows = vec![
            Row { s: 0, x: vec![], h: 0, y: 0 },
            Row { s: 1, x: vec![], h: 0, y: 0 },
        ];
        let d = Dataset::new(rows, vec![], "S").unwrap();
        assert!(split(&d, 0.5, 1).is_err());
    }

    #[test]
    fn gaps() {
        let d = tiny();
        assert_eq!(d.decision_gap().unwrap(), 0.5 - 0.5);
        assert_eq!(d.outcome_gap().unwrap(), 0.5 - 0.5);
        let only0 = d.subset(&[0, 2]);
        assert!(only0.rate_h(1).is_err());
    }
}
