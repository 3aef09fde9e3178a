//! The four-layer network.
//!
//! Inputs `{S, X}` feed `m` ReLU units. The observed decision head reads the
//! first `m_obs` units; the desired head reads all of them, so the extra
//! units carry the representational disparity between the two. A separate
//! logistic head predicts the outcome from `{S, X, H}`.
//!
//! All parameters live in one flat vector (see [`ModelParams::flatten`]) so
//! the optimizer and the tape see a single coordinate system.

use std::fmt::Write as _;
use std::path::Path;

use crate::diffcore::{relu, sigmoid, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchitectureConfig {
    pub n_features: usize,
    pub m: usize,
    pub m_obs: usize,
}

impl ArchitectureConfig {
    pub fn new(n_features: usize, m: usize, m_obs: usize) -> Result<Self> {
        if m_obs < 1 || m_obs >= m {
            return Err(Error::Config(format!(
                "need 1 <= m_obs < m, got m_obs={m_obs}, m={m}"
            )));
        }
        Ok(Self {
            n_features,
            m,
            m_obs,
        })
    }

    /// `m_obs` observed units followed by `k` disparity units.
    pub fn with_disparity_nodes(n_features: usize, m_obs: usize, k: usize) -> Result<Self> {
        Self::new(n_features, m_obs + k, m_obs)
    }

    pub fn n_disparity(&self) -> usize {
        self.m - self.m_obs
    }

    /// Rows of the input weight matrix: `S` first, then the features.
    pub fn n_inputs(&self) -> usize {
        self.n_features + 1
    }

    pub fn n_params(&self) -> usize {
        let rep = self.n_inputs() * self.m;
        rep + self.m + self.m + 1 + (self.n_features + 2) + 1
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(*self)
    }
}

/// Parameter partition used for freezing and regularization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Observed,
    Disparity,
    Outcome,
}

/// Offsets of each block inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub arch: ArchitectureConfig,
    pub rep_weights: usize,
    pub rep_bias: usize,
    pub head_weights: usize,
    pub head_bias: usize,
    pub outcome_weights: usize,
    pub outcome_bias: usize,
    pub len: usize,
}

impl ParamLayout {
    fn new(arch: ArchitectureConfig) -> Self {
        let rep_weights = 0;
        let rep_bias = rep_weights + arch.n_inputs() * arch.m;
        let head_weights = rep_bias + arch.m;
        let head_bias = head_weights + arch.m;
        let outcome_weights = head_bias + 1;
        let outcome_bias = outcome_weights + arch.n_features + 2;
        Self {
            arch,
            rep_weights,
            rep_bias,
            head_weights,
            head_bias,
            outcome_weights,
            outcome_bias,
            len: outcome_bias + 1,
        }
    }

    /// Flat index of the weight from input row `r` (0 = S) into unit `i`.
    #[inline]
    pub fn rep(&self, r: usize, i: usize) -> usize {
        self.rep_weights + r * self.arch.m + i
    }

    #[inline]
    pub fn bias(&self, i: usize) -> usize {
        self.rep_bias + i
    }

    #[inline]
    pub fn head(&self, i: usize) -> usize {
        self.head_weights + i
    }

    /// Outcome-head weight index: 0 = S, `1..=n` = features, `n + 1` = H.
    #[inline]
    pub fn outcome(&self, j: usize) -> usize {
        self.outcome_weights + j
    }

    pub fn group_of(&self, k: usize) -> ParamGroup {
        let m = self.arch.m;
        let m_obs = self.arch.m_obs;
        let unit = if k < self.rep_bias {
            Some((k - self.rep_weights) % m)
        } else if k < self.head_weights {
            Some(k - self.rep_bias)
        } else if k < self.head_bias {
            Some(k - self.head_weights)
        } else {
            None
        };
        match unit {
            Some(i) if i >= m_obs => ParamGroup::Disparity,
            Some(_) => ParamGroup::Observed,
            None if k == self.head_bias => ParamGroup::Observed,
            None => ParamGroup::Outcome,
        }
    }

    /// `true` for every flat index in one of `groups`.
    pub fn mask(&self, groups: &[ParamGroup]) -> Vec<bool> {
        (0..self.len)
            .map(|k| groups.contains(&self.group_of(k)))
            .collect()
    }

    /// Flat indices of unit `i`: its input column, bias and head weight.
    pub fn unit_indices(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.arch.n_inputs()).map(|r| self.rep(r, i)).collect();
        out.push(self.bias(i));
        out.push(self.head(i));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub arch: ArchitectureConfig,
    /// Row-major `(n_features + 1) x m`; row 0 holds the S weights.
    pub rep_weights: Vec<f64>,
    pub rep_bias: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
    /// `[S, X_1..X_n, H]`.
    pub outcome_weights: Vec<f64>,
    pub outcome_bias: f64,
}

impl ModelParams {
    pub fn zeros(arch: ArchitectureConfig) -> Self {
        Self {
            arch,
            rep_weights: vec![0.0; arch.n_inputs() * arch.m],
            rep_bias: vec![0.0; arch.m],
            head_weights: vec![0.0; arch.m],
            head_bias: 0.0,
            outcome_weights: vec![0.0; arch.n_features + 2],
            outcome_bias: 0.0,
        }
    }

    pub fn layout(&self) -> ParamLayout {
        self.arch.layout()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.arch.n_params());
        v.extend_from_slice(&self.rep_weights);
        v.extend_from_slice(&self.rep_bias);
        v.extend_from_slice(&self.head_weights);
        v.push(self.head_bias);
        v.extend_from_slice(&self.outcome_weights);
        v.push(self.outcome_bias);
        v
    }

    pub fn from_flat(arch: ArchitectureConfig, flat: &[f64]) -> Result<Self> {
        let l = arch.layout();
        if flat.len() != l.len {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                l.len,
                flat.len()
            )));
        }
        Ok(Self {
            arch,
            rep_weights: flat[l.rep_weights..l.rep_bias].to_vec(),
            rep_bias: flat[l.rep_bias..l.head_weights].to_vec(),
            head_weights: flat[l.head_weights..l.head_bias].to_vec(),
            head_bias: flat[l.head_bias],
            outcome_weights: flat[l.outcome_weights..l.outcome_bias].to_vec(),
            outcome_bias: flat[l.outcome_bias],
        })
    }

    #[inline]
    pub fn w_rep(&self, r: usize, i: usize) -> f64 {
        self.rep_weights[r * self.arch.m + i]
    }

    pub fn set_w_rep(&mut self, r: usize, i: usize, v: f64) {
        let m = self.arch.m;
        self.rep_weights[r * m + i] = v;
    }

    /// Zero every parameter of the disparity units.
    pub fn zero_disparity(&mut self) {
        let a = self.arch;
        for i in a.m_obs..a.m {
            for r in 0..a.n_inputs() {
                self.set_w_rep(r, i, 0.0);
            }
            self.rep_bias[i] = 0.0;
            self.head_weights[i] = 0.0;
        }
    }

    fn check(&self, x: &[u8], s: u8) -> Result<()> {
        if x.len() != self.arch.n_features {
            return Err(Error::Dimension(format!(
                "{} features expected, got {}",
                self.arch.n_features,
                x.len()
            )));
        }
        if s > 1 || x.iter().any(|&v| v > 1) {
            return Err(Error::Data("inputs must be 0/1".into()));
        }
        Ok(())
    }

    /// Activation of unit `i`.
    pub fn unit_activation(&self, x: &[u8], s: u8, i: usize) -> f64 {
        let mut z = self.rep_bias[i];
        if s == 1 {
            z += self.w_rep(0, i);
        }
        for (j, &xj) in x.iter().enumerate() {
            if xj == 1 {
                z += self.w_rep(j + 1, i);
            }
        }
        relu(z)
    }

    fn head_logit(&self, x: &[u8], s: u8, units: std::ops::Range<usize>) -> f64 {
        units
            .map(|i| self.head_weights[i] * self.unit_activation(x, s, i))
            .sum()
    }

    pub fn observed_logit(&self, x: &[u8], s: u8) -> f64 {
        self.head_bias + self.head_logit(x, s, 0..self.arch.m_obs)
    }

    /// Logit contribution of the disparity units for one input.
    pub fn disparity_logit(&self, x: &[u8], s: u8) -> f64 {
        self.head_logit(x, s, self.arch.m_obs..self.arch.m)
    }

    pub fn desired_logit(&self, x: &[u8], s: u8) -> f64 {
        self.observed_logit(x, s) + self.disparity_logit(x, s)
    }

    pub fn outcome_logit(&self, x: &[u8], s: u8, h: u8) -> f64 {
        let n = self.arch.n_features;
        let mut z = self.outcome_bias;
        if s == 1 {
            z += self.outcome_weights[0];
        }
        for (j, &xj) in x.iter().enumerate() {
            if xj == 1 {
                z += self.outcome_weights[j + 1];
            }
        }
        if h == 1 {
            z += self.outcome_weights[n + 1];
        }
        z
    }

    pub fn forward_observed(&self, x: &[u8], s: u8) -> Result<f64> {
        self.check(x, s)?;
        Ok(sigmoid(self.observed_logit(x, s)))
    }

    pub fn forward_desired(&self, x: &[u8], s: u8) -> Result<f64> {
        self.check(x, s)?;
        Ok(sigmoid(self.desired_logit(x, s)))
    }

    pub fn forward_outcome(&self, x: &[u8], s: u8, h: u8) -> Result<f64> {
        self.check(x, s)?;
        if h > 1 {
            return Err(Error::Data("h must be 0/1".into()));
        }
        Ok(sigmoid(self.outcome_logit(x, s, h)))
    }

    /// `RD(x, 1) - RD(x, 0)` summed over the disparity units.
    pub fn representational_disparity(&self, x: &[u8]) -> Result<f64> {
        self.check(x, 0)?;
        Ok(self.disparity_logit(x, 1) - self.disparity_logit(x, 0))
    }

    /// Parameters of one disparity unit: `(w_x, w_s, bias, w_head)`.
    pub fn unit(&self, i: usize) -> (Vec<f64>, f64, f64, f64) {
        let wx = (1..self.arch.n_inputs()).map(|r| self.w_rep(r, i)).collect();
        (wx, self.w_rep(0, i), self.rep_bias[i], self.head_weights[i])
    }

    /// Plain-text dump: one `name rows cols values...` line per block.
    pub fn to_text(&self) -> String {
        let a = self.arch;
        let mut out = String::new();
        let _ = writeln!(out, "arch {} {} {}", a.n_features, a.m, a.m_obs);
        let mut block = |name: &str, rows: usize, cols: usize, vals: &[f64]| {
            let _ = write!(out, "{name} {rows} {cols}");
            for v in vals {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        };
        block("rep_weights", a.n_inputs(), a.m, &self.rep_weights);
        block("rep_bias", 1, a.m, &self.rep_bias);
        block("head_weights", 1, a.m, &self.head_weights);
        block("head_bias", 1, 1, &[self.head_bias]);
        block("outcome_weights", 1, a.n_features + 2, &self.outcome_weights);
        block("outcome_bias", 1, 1, &[self.outcome_bias]);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::parse_text(text, Path::new("<params>"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&text, path)
    }

    fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let mut params: Option<ModelParams> = None;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: &str| Error::parse(path, ln + 1, msg);
            let nums = |from: usize| -> Result<Vec<f64>> {
                toks[from..]
                    .iter()
                    .map(|t| t.parse::<f64>().map_err(|_| err(&format!("bad number {t:?}"))))
                    .collect()
            };
            if toks[0] == "arch" {
                let dims: Vec<usize> = toks[1..]
                    .iter()
                    .map(|t| t.parse::<usize>().map_err(|_| err("bad arch")))
                    .collect::<Result<_>>()?;
                if dims.len() != 3 {
                    return Err(err("arch needs n_features m m_obs"));
                }
                let arch = ArchitectureConfig::new(dims[0], dims[1], dims[2])
                    .map_err(|e| err(&e.to_string()))?;
                params = Some(ModelParams::zeros(arch));
                continue;
            }
            let p = params.as_mut().ok_or_else(|| err("missing arch line"))?;
            if toks.len() < 3 {
                return Err(err("block needs name rows cols"));
            }
            let rows: usize = toks[1].parse().map_err(|_| err("bad rows"))?;
            let cols: usize = toks[2].parse().map_err(|_| err("bad cols"))?;
            let vals = nums(3)?;
            if vals.len() != rows * cols {
                return Err(err("value count does not match shape"));
            }
            let a = p.arch;
            let (target, shape): (&mut Vec<f64>, (usize, usize)) = match toks[0] {
                "rep_weights" => (&mut p.rep_weights, (a.n_inputs(), a.m)),
                "rep_bias" => (&mut p.rep_bias, (1, a.m)),
                "head_weights" => (&mut p.head_weights, (1, a.m)),
                "outcome_weights" => (&mut p.outcome_weights, (1, a.n_features + 2)),
                "head_bias" | "outcome_bias" => {
                    if (rows, cols) != (1, 1) {
                        return Err(err("scalar block must be 1x1"));
                    }
                    if toks[0] == "head_bias" {
                        p.head_bias = vals[0];
                    } else {
                        p.outcome_bias = vals[0];
                    }
                    continue;
                }
                other => return Err(err(&format!("unknown block {other:?}"))),
            };
            if (rows, cols) != shape {
                return Err(err("block shape does not match arch"));
            }
            *target = vals;
        }
        params.ok_or_else(|| Error::parse(path, 0, "empty parameter file"))
    }
}

/// Tape handles for a parameter vector.
///
/// `None` entries are treated as constants taken from the parameter values,
/// which keeps frozen blocks off the tape entirely.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub values: Vec<f64>,
    pub vars: Vec<Option<Var>>,
}

impl ParamVars {
    /// Every parameter becomes a tape input.
    pub fn all(tape: &mut Tape, flat: &[f64]) -> Self {
        Self {
            values: flat.to_vec(),
            vars: flat.iter().map(|&v| Some(tape.input(v))).collect(),
        }
    }

    /// Only entries with `mask[k]` become tape inputs.
    pub fn masked(tape: &mut Tape, flat: &[f64], mask: &[bool]) -> Self {
        Self {
            values: flat.to_vec(),
            vars: flat
                .iter()
                .zip(mask)
                .map(|(&v, &on)| on.then(|| tape.input(v)))
                .collect(),
        }
    }

    pub fn gradient(&self, tape: &Tape) -> Vec<f64> {
        self.vars
            .iter()
            .map(|v| v.map_or(0.0, |v| tape.grad(v)))
            .collect()
    }

    #[inline]
    pub fn is_var(&self, k: usize) -> bool {
        self.vars[k].is_some()
    }

    /// Handle for entry `k`, recording a constant if it is frozen.
    pub fn get(&self, tape: &mut Tape, k: usize) -> Var {
        match self.vars[k] {
            Some(v) => v,
            None => tape.constant(self.values[k]),
        }
    }
}

/// A logit split into a constant part and a tape part.
#[derive(Clone, Copy, Debug)]
pub struct Logit {
    pub constant: f64,
    pub var: Option<Var>,
}

impl Logit {
    pub fn value(&self, tape: &Tape) -> f64 {
        self.constant + self.var.map_or(0.0, |v| tape.value(v))
    }

    /// Materialize as one tape node.
    pub fn to_var(&self, tape: &mut Tape) -> Var {
        match self.var {
            Some(v) if self.constant == 0.0 => v,
            Some(v) => tape.affine(v, 1.0, self.constant),
            None => tape.constant(self.constant),
        }
    }
}

/// Graph builders for one `(s, x)` input pattern given by its active features.
pub struct GraphBuilder<'a> {
    pub layout: ParamLayout,
    pub pv: &'a ParamVars,
}

impl<'a> GraphBuilder<'a> {
    pub fn new(layout: ParamLayout, pv: &'a ParamVars) -> Self {
        Self { layout, pv }
    }

    fn unit_is_const(&self, i: usize, active: &[u32], s: u8) -> bool {
        let l = &self.layout;
        if self.pv.is_var(l.bias(i)) || self.pv.is_var(l.head(i)) {
            return false;
        }
        if s == 1 && self.pv.is_var(l.rep(0, i)) {
            return false;
        }
        !active
            .iter()
            .any(|&j| self.pv.is_var(l.rep(j as usize + 1, i)))
    }

    fn unit_value(&self, i: usize, active: &[u32], s: u8) -> f64 {
        let l = &self.layout;
        let v = &self.pv.values;
        let mut z = v[l.bias(i)];
        if s == 1 {
            z += v[l.rep(0, i)];
        }
        for &j in active {
            z += v[l.rep(j as usize + 1, i)];
        }
        v[l.head(i)] * relu(z)
    }

    /// `w_i * relu(pre_i)` on the tape.
    fn unit_var(&self, tape: &mut Tape, i: usize, active: &[u32], s: u8) -> Var {
        let l = &self.layout;
        let mut terms = Vec::with_capacity(active.len() + 2);
        terms.push(self.pv.get(tape, l.bias(i)));
        if s == 1 {
            terms.push(self.pv.get(tape, l.rep(0, i)));
        }
        for &j in active {
            terms.push(self.pv.get(tape, l.rep(j as usize + 1, i)));
        }
        let pre = tape.sum(&terms);
        let act = tape.relu(pre);
        let w = self.pv.get(tape, l.head(i));
        tape.mul(w, act)
    }

    fn units_logit(
        &self,
        tape: &mut Tape,
        units: std::ops::Range<usize>,
        active: &[u32],
        s: u8,
        constant: f64,
    ) -> Logit {
        let mut c = constant;
        let mut vars = Vec::new();
        for i in units {
            if self.unit_is_const(i, active, s) {
                c += self.unit_value(i, active, s);
            } else {
                vars.push(self.unit_var(tape, i, active, s));
            }
        }
        Logit {
            constant: c,
            var: (!vars.is_empty()).then(|| tape.sum(&vars)),
        }
    }

    pub fn observed_logit(&self, tape: &mut Tape, active: &[u32], s: u8) -> Logit {
        let l = &self.layout;
        let hb = l.head_bias;
        let mut logit = self.units_logit(tape, 0..l.arch.m_obs, active, s, 0.0);
        if self.pv.is_var(hb) {
            let b = self.pv.get(tape, hb);
            logit.var = Some(match logit.var {
                Some(v) => tape.add(v, b),
                None => b,
            });
        } else {
            logit.constant += self.pv.values[hb];
        }
        logit
    }

    /// Desired logit, reusing an already built observed logit.
    pub fn desired_logit(&self, tape: &mut Tape, active: &[u32], s: u8, observed: Logit) -> Logit {
        let l = &self.layout;
        let extra = self.units_logit(tape, l.arch.m_obs..l.arch.m, active, s, observed.constant);
        let var = match (observed.var, extra.var) {
            (Some(a), Some(b)) => Some(tape.add(a, b)),
            (a, b) => a.or(b),
        };
        Logit {
            constant: extra.constant,
            var,
        }
    }

    pub fn outcome_logit(&self, tape: &mut Tape, active: &[u32], s: u8, h: u8) -> Logit {
        let l = &self.layout;
        let n = l.arch.n_features;
        let mut idx = Vec::with_capacity(active.len() + 3);
        idx.push(l.outcome_bias);
        if s == 1 {
            idx.push(l.outcome(0));
        }
        idx.extend(active.iter().map(|&j| l.outcome(j as usize + 1)));
        if h == 1 {
            idx.push(l.outcome(n + 1));
        }
        let mut c = 0.0;
        let mut vars = Vec::new();
        for k in idx {
            match self.pv.vars[k] {
                Some(v) => vars.push(v),
                None => c += self.pv.values[k],
            }
        }
        Logit {
            constant: c,
            var: (!vars.is_empty()).then(|| tape.sum(&vars)),
        }
    }
}
