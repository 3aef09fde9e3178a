//! Semi-synthetic outcomes layered on real decisions.
//!
//! The outcome table is `Pr(Y=1 | S, H)` with base rates `0.3` (H=0) and
//! `0.9` (H=1). One group's rates are offset by `b`, so the outcome gap
//! decomposes as `a·c + b` where `c` is the decision gap and `a = 0.6` is the
//! base-rate difference. When `c > 0` the `S=1` rates become `(0.3 + b,
//! 0.9 + b)`; when `c < 0` the `S=0` rates become `(0.3 - b, 0.9 - b)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

pub const BASE_RATES: [f64; 2] = [0.3, 0.9];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeCase {
    I,
    II,
    III,
    IV,
    V,
}

impl OutcomeCase {
    pub const ALL: [OutcomeCase; 5] = [Self::I, Self::II, Self::III, Self::IV, Self::V];

    /// `b / (a·c)`; `None` for the `Y = H` case.
    pub fn multiplier(self) -> Option<f64> {
        match self {
            Self::I => Some(1.0),
            Self::II => Some(-0.5),
            Self::III => Some(-1.0),
            Self::IV => Some(-1.5),
            Self::V => None,
        }
    }
}

impl fmt::Display for OutcomeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::I => "I",
            Self::II => "II",
            Self::III => "III",
            Self::IV => "IV",
            Self::V => "V",
        };
        f.write_str(s)
    }
}

impl FromStr for OutcomeCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            "IV" | "4" => Ok(Self::IV),
            "V" | "5" => Ok(Self::V),
            other => Err(Error::Config(format!("unknown case {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeCaseConfig {
    pub case: OutcomeCase,
    pub a_param: f64,
    pub b_param: f64,
    pub c_param: f64,
    /// `b` before clipping, when clipping changed it.
    pub b_unclipped: Option<f64>,
}

impl OutcomeCaseConfig {
    /// Measure `c` on `d` and derive `b`.
    ///
    /// With `clip`, an offset that would push a rate outside `[0, 1]` is moved
    /// to the nearest admissible value; otherwise it is an error.
    pub fn for_dataset(case: OutcomeCase, d: &Dataset, clip: bool) -> Result<Self> {
        let c = d.decision_gap()?;
        Self::from_gap(case, c, clip)
    }

    pub fn from_gap(case: OutcomeCase, c: f64, clip: bool) -> Result<Self> {
        let Some(mult) = case.multiplier() else {
            return Ok(Self {
                case,
                a_param: 1.0,
                b_param: 0.0,
                c_param: c,
                b_unclipped: None,
            });
        };
        let a = BASE_RATES[1] - BASE_RATES[0];
        let b = mult * a * c;
        let (lo, hi) = Self::admissible_b(c);
        let mut cfg = Self {
            case,
            a_param: a,
            b_param: b,
            c_param: c,
            b_unclipped: None,
        };
        if b < lo || b > hi {
            if !clip {
                return Err(Error::Config(format!(
                    "offset b={b} puts an outcome rate outside [0, 1]; admissible range [{lo}, {hi}]"
                )));
            }
            cfg.b_param = b.clamp(lo, hi);
            cfg.b_unclipped = Some(b);
            log::warn!("case {case}: b clipped from {b} to {}", cfg.b_param);
        }
        Ok(cfg)
    }

    /// Range of `b` that keeps every table entry in `[0, 1]`.
    fn admissible_b(c: f64) -> (f64, f64) {
        let [r0, r1] = BASE_RATES;
        if c >= 0.0 {
            (-r0, 1.0 - r1)
        } else {
            (r1 - 1.0, r0)
        }
    }

    /// Group whose rates carry the offset.
    pub fn offset_group(&self) -> u8 {
        (self.c_param >= 0.0) as u8
    }

    /// `Pr(Y=1 | S=s, H=h)` as `table[s][h]`; `None` when `Y = H`.
    pub fn table(&self) -> Option<[[f64; 2]; 2]> {
        self.case.multiplier()?;
        let mut t = [BASE_RATES, BASE_RATES];
        if self.offset_group() == 1 {
            for v in &mut t[1] {
                *v += self.b_param;
            }
        } else {
            for v in &mut t[0] {
                *v -= self.b_param;
            }
        }
        Some(t)
    }

    /// `|a·c + b|`.
    pub fn expected_disparity(&self) -> f64 {
        crate::metrics::decomposition(self.a_param, self.b_param, self.c_param)
    }
}

/// Redraw `Y` for every row; `S`, `X` and `H` are untouched.
pub fn inject_outcome(d: &Dataset, cfg: &OutcomeCaseConfig, seed_value: u64) -> Result<Dataset> {
    let mut out = d.clone();
    match cfg.table() {
        None => {
            for r in &mut out.rows {
                r.y = r.h;
            }
        }
        Some(t) => {
            if t.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Config("outcome table outside [0, 1]".into()));
            }
            let mut rng = seed::rng(seed_value);
            for r in &mut out.rows {
                let p = t[r.s as usize][r.h as usize];
                r.y = (rng.random::<f64>() < p) as u8;
            }
        }
    }
    Ok(out)
}
