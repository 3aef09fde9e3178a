//! Synthetic generators defined by finite conditional probability tables.

use rand::Rng as _;

use super::{Dataset, Row};
use crate::error::{Error, Result};
use crate::seed;

/// One input cell of a generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GenCell {
    pub s: u8,
    pub x: Vec<u8>,
    /// `Pr(S=s, X=x)`.
    pub mass: f64,
    /// `Pr(H=1 | s, x)`.
    pub p_h: f64,
    /// `Pr(Y=1 | s, x, h)` indexed by `h`.
    pub p_y: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub n_features: usize,
    pub cells: Vec<GenCell>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.cells.iter().map(|c| c.mass).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("cell masses sum to {total}")));
        }
        for c in &self.cells {
            let probs = [c.mass, c.p_h, c.p_y[0], c.p_y[1]];
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || c.x.len() != self.n_features {
                return Err(Error::Config("malformed generator cell".into()));
            }
        }
        Ok(())
    }

    /// S, X ~ Bernoulli(0.5); H rate 0.6 / 0.3 for S = 0 / 1; Y depends on (X, H).
    pub fn thm42() -> Self {
        let p_y = |x: u8| if x == 0 { [0.3, 0.8] } else { [0.2, 0.6] };
        let mut cells = Vec::new();
        for s in 0..2u8 {
            for x in 0..2u8 {
                cells.push(GenCell {
                    s,
                    x: vec![x],
                    mass: 0.25,
                    p_h: if s == 0 { 0.6 } else { 0.3 },
                    p_y: p_y(x),
                });
            }
        }
        Self { n_features: 1, cells }
    }

    /// No features; H rate 0.01 / 0.6 for S = 0 / 1; Y = H.
    pub fn thm43() -> Self {
        let cells = (0..2u8)
            .map(|s| GenCell {
                s,
                x: vec![],
                mass: 0.5,
                p_h: if s == 0 { 0.01 } else { 0.6 },
                p_y: [0.0, 1.0],
            })
            .collect();
        Self { n_features: 0, cells }
    }

    /// Draw `n` i.i.d. rows.
    pub fn sample(&self, n: usize, seed_value: u64) -> Result<Dataset> {
        self.validate()?;
        let mut rng = seed::rng(seed_value);
        let mut cum = Vec::with_capacity(self.cells.len());
        let mut acc = 0.0;
        for c in &self.cells {
            acc += c.mass;
            cum.push(acc);
        }
        let last = self.cells.len() - 1;
        let rows = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let k = cum.iter().position(|&c| u < c).unwrap_or(last);
                let c = &self.cells[k];
                let h = (rng.random::<f64>() < c.p_h) as u8;
                let y = (rng.random::<f64>() < c.p_y[h as usize]) as u8;
                Row {
                    s: c.s,
                    x: c.x.clone(),
                    h,
                    y,
                }
            })
            .collect();
        Dataset::new(rows, Dataset::default_names(self.n_features), "S")
    }
}

pub fn gen_thm42_data(n: usize, seed_value: u64) -> Result<Dataset> {
    GeneratorSpec::thm42().sample(n, seed_value)
}

pub fn gen_thm43_data(n: usize, seed_value: u64) -> Result<Dataset> {
    GeneratorSpec::thm43().sample(n, seed_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// |observed - p| within 3 standard errors of a Bernoulli(p) mean over n draws.
    fn within_3_sigma(k: usize, n: usize, p: f64) -> bool {
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        (k as f64 / n as f64 - p).abs() <= 3.0 * sd
    }

    #[test]
    fn thm42_conditional_rates() {
        let d = gen_thm42_data(100_000, 42).unwrap();
        let spec = GeneratorSpec::thm42();
        for c in &spec.cells {
            let rows: Vec<_> = d.rows.iter().filter(|r| r.s == c.s && r.x == c.x).collect();
            let kh = rows.iter().filter(|r| r.h == 1).count();
            assert!(within_3_sigma(kh, rows.len(), c.p_h));
            for h in 0..2u8 {
                let sub: Vec<_> = rows.iter().filter(|r| r.h == h).collect();
                let ky = sub.iter().filter(|r| r.y == 1).count();
                assert!(within_3_sigma(ky, sub.len(), c.p_y[h as usize]));
            }
        }
        assert!((d.rate_h(0).unwrap() - 0.6).abs() < 0.01);
        let x0h1: Vec<_> = d.rows.iter().filter(|r| r.x[0] == 0 && r.h == 1).collect();
        let rate = x0h1.iter().filter(|r| r.y == 1).count() as f64 / x0h1.len() as f64;
        assert!((rate - 0.8).abs() < 0.01);
        // Pr(Y=1|S=0) - Pr(Y=1|S=1) = 0.52 - 0.385 by exact marginalization.
        assert!((-d.outcome_gap().unwrap() - 0.135).abs() < 0.01);
    }

    #[test]
    fn thm43_rows() {
        let d = gen_thm43_data(100_000, 1).unwrap();
        assert_eq!(d.n_features(), 0);
        assert!(d.rows.iter().all(|r| r.y == r.h && r.x.is_empty()));
        assert!((d.rate_h(0).unwrap() - 0.01).abs() < 0.005);
        let implied = crate::diffcore::logit(0.6).unwrap() - crate::diffcore::logit(0.01).unwrap();
        assert!((implied - 5.0).abs() < 0.01);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_thm42_data(500, 3).unwrap(), gen_thm42_data(500, 3).unwrap());
        assert_ne!(gen_thm42_data(500, 3).unwrap(), gen_thm42_data(500, 4).unwrap());
    }

    #[test]
    fn malformed_spec_rejected() {
        let mut spec = GeneratorSpec::thm43();
        spec.cells[0].mass = 0.7;
        assert!(spec.sample(10, 0).is_err());
    }
}
