//! The four training objectives and their weighted total.
//!
//! * `A`: outcome disparity under the desired decision head, with the outcome
//!   head marginalized over both decision values.
//! * `B`: L1 norm of every disparity-unit parameter.
//! * `C`: cross-entropy of the observed decision head against `H`.
//! * `D`: cross-entropy of the outcome head against `Y`, fed the recorded `H`.
//!
//! All losses are evaluated on a [`PatternTable`], which is exact.

use crate::data::PatternTable;
use crate::diffcore::{sigmoid, Tape, Var};
use crate::error::{Error, Result};
use crate::model::{GraphBuilder, Logit, ModelParams, ParamGroup, ParamLayout, ParamVars};

/// Probability clip applied before taking logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl LossWeights {
    /// `b = 1 - a` and `d = c`, requiring `0 < a < 1` and `c >= 100 a`.
    pub fn new(a: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("a must lie in (0, 1), got {a}")));
        }
        if !(c >= 100.0 * a) {
            return Err(Error::Config(format!(
                "c must be at least 100 a (got c={c}, a={a}); use LossWeights::custom to override"
            )));
        }
        Ok(Self {
            a,
            b: 1.0 - a,
            c,
            d: c,
        })
    }

    /// Arbitrary nonnegative weights, skipping the usual relations.
    pub fn custom(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if [a, b, c, d].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        Ok(Self { a, b, c, d })
    }
}

/// Which objectives enter a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub a: bool,
    pub b: bool,
    pub c: bool,
    pub d: bool,
}

impl Terms {
    pub const ALL: Terms = Terms { a: true, b: true, c: true, d: true };
    pub const OBSERVED_OUTCOME: Terms = Terms { a: false, b: false, c: true, d: true };
    pub const OBSERVED: Terms = Terms { a: false, b: false, c: true, d: false };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    /// `A`.
    pub disparity: f64,
    /// `B`.
    pub sparsity: f64,
    /// `C`.
    pub observed_bce: f64,
    /// `D`.
    pub outcome_bce: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str = "fit_id,epoch,A,B,C,D,total";

    pub fn new(disparity: f64, sparsity: f64, observed_bce: f64, outcome_bce: f64, w: &LossWeights) -> Self {
        Self {
            disparity,
            sparsity,
            observed_bce,
            outcome_bce,
            total: w.a * disparity + w.b * sparsity + w.c * observed_bce + w.d * outcome_bce,
        }
    }

    /// `a A + b B`.
    pub fn fairness_part(&self, w: &LossWeights) -> f64 {
        w.a * self.disparity + w.b * self.sparsity
    }

    /// `c C + d D`.
    pub fn fidelity_part(&self, w: &LossWeights) -> f64 {
        w.c * self.observed_bce + w.d * self.outcome_bce
    }

    pub fn csv_row(&self, fit_id: usize, epoch: usize) -> String {
        format!(
            "{fit_id},{epoch},{},{},{},{},{}",
            self.disparity, self.sparsity, self.observed_bce, self.outcome_bce, self.total
        )
    }
}

/// Tape handles of one loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LossGraph {
    pub a: Option<Var>,
    pub b: Option<Var>,
    pub c: Option<Var>,
    pub d: Option<Var>,
    pub total: Var,
}

fn prob(tape: &mut Tape, z: Logit) -> Var {
    let zv = z.to_var(tape);
    tape.sigmoid(zv)
}

/// `-(n1 ln p + n0 ln(1 - p)) / n` with `p` clipped.
fn bce_terms(tape: &mut Tape, p: Var, n1: u64, n0: u64, n: f64, out: &mut Vec<(Var, f64)>) {
    let pc = tape.clip(p, BCE_EPS, 1.0 - BCE_EPS);
    if n1 > 0 {
        let l = tape.ln(pc);
        out.push((l, -(n1 as f64) / n));
    }
    if n0 > 0 {
        let q = tape.affine(pc, -1.0, 1.0);
        let l = tape.ln(q);
        out.push((l, -(n0 as f64) / n));
    }
}

/// Record the selected objectives on `tape`.
pub fn build_loss(
    tape: &mut Tape,
    layout: ParamLayout,
    pv: &ParamVars,
    table: &PatternTable,
    w: &LossWeights,
    terms: Terms,
) -> Result<LossGraph> {
    if table.n_features != layout.arch.n_features {
        return Err(Error::Dimension(format!(
            "data has {} features, model expects {}",
            table.n_features, layout.arch.n_features
        )));
    }
    if table.n_rows == 0 {
        return Err(Error::Data("empty dataset".into()));
    }
    if terms.a && !table.has_both_groups() {
        return Err(Error::Data("disparity needs rows from both groups".into()));
    }
    let g = GraphBuilder::new(layout, pv);
    let n = table.n_rows as f64;
    let mut c_terms = Vec::new();
    let mut d_terms = Vec::new();
    let mut a_terms: [Vec<(Var, f64)>; 2] = [Vec::new(), Vec::new()];

    for pat in &table.patterns {
        let s = pat.s;
        let active = pat.active.as_slice();
        let observed = (terms.a || terms.c).then(|| g.observed_logit(tape, active, s));
        if terms.c {
            let p = prob(tape, observed.unwrap());
            bce_terms(tape, p, pat.count_h(1), pat.count_h(0), n, &mut c_terms);
        }
        let need_q = terms.a || terms.d;
        let q = need_q.then(|| {
            [
                g.outcome_logit(tape, active, s, 0),
                g.outcome_logit(tape, active, s, 1),
            ]
        });
        if terms.d {
            for h in 0..2 {
                if pat.count_h(h) == 0 {
                    continue;
                }
                let qh = prob(tape, q.unwrap()[h]);
                bce_terms(tape, qh, pat.hy[h][1], pat.hy[h][0], n, &mut d_terms);
            }
        }
        if terms.a {
            let desired = g.desired_logit(tape, active, s, observed.unwrap());
            let p = prob(tape, desired);
            let [q0, q1] = q.unwrap();
            let mixed = if q0.var.is_none() && q1.var.is_none() {
                let (v0, v1) = (sigmoid(q0.constant), sigmoid(q1.constant));
                tape.affine(p, v1 - v0, v0)
            } else {
                let v0 = prob(tape, q0);
                let v1 = prob(tape, q1);
                let diff = tape.sub(v1, v0);
                let prod = tape.mul(diff, p);
                tape.add(v0, prod)
            };
            let share = pat.count() as f64 / table.group_rows[s as usize] as f64;
            a_terms[s as usize].push((mixed, share));
        }
    }

    let a = terms.a.then(|| {
        let m1 = tape.weighted_sum(&a_terms[1]);
        let m0 = tape.weighted_sum(&a_terms[0]);
        let gap = tape.sub(m1, m0);
        tape.abs(gap)
    });
    let b = terms.b.then(|| {
        let mut vars = Vec::new();
        for i in layout.arch.m_obs..layout.arch.m {
            for k in layout.unit_indices(i) {
                let v = pv.get(tape, k);
                vars.push(tape.abs(v));
            }
        }
        tape.sum(&vars)
    });
    let c = terms.c.then(|| tape.weighted_sum(&c_terms));
    let d = terms.d.then(|| tape.weighted_sum(&d_terms));

    let mut parts = Vec::new();
    for (v, weight) in [(a, w.a), (b, w.b), (c, w.c), (d, w.d)] {
        if let Some(v) = v {
            parts.push((v, weight));
        }
    }
    let total = tape.weighted_sum(&parts);
    Ok(LossGraph { a, b, c, d, total })
}

fn evaluate_terms(params: &ModelParams, table: &PatternTable, terms: Terms) -> Result<(Tape, LossGraph)> {
    let mut tape = Tape::new();
    let pv = ParamVars::masked(&mut tape, &params.flatten(), &vec![false; params.arch.n_params()]);
    let w = LossWeights::custom(1.0, 1.0, 1.0, 1.0)?;
    let g = build_loss(&mut tape, params.layout(), &pv, table, &w, terms)?;
    Ok((tape, g))
}

fn single(params: &ModelParams, table: &PatternTable, terms: Terms, pick: fn(&LossGraph) -> Option<Var>) -> Result<f64> {
    let (tape, g) = evaluate_terms(params, table, terms)?;
    Ok(tape.value(pick(&g).expect("selected term")))
}

/// `A`.
pub fn disparity_loss(params: &ModelParams, table: &PatternTable) -> Result<f64> {
    let t = Terms { a: true, b: false, c: false, d: false };
    single(params, table, t, |g| g.a)
}

/// `B`: L1 norm of the disparity units.
pub fn interpretability_loss(params: &ModelParams) -> f64 {
    let l = params.layout();
    let flat = params.flatten();
    (params.arch.m_obs..params.arch.m)
        .flat_map(|i| l.unit_indices(i))
        .map(|k| flat[k].abs())
        .sum()
}

/// `C`.
pub fn observed_bce_loss(params: &ModelParams, table: &PatternTable) -> Result<f64> {
    single(params, table, Terms::OBSERVED, |g| g.c)
}

/// `D`.
pub fn outcome_bce_loss(params: &ModelParams, table: &PatternTable) -> Result<f64> {
    let t = Terms { a: false, b: false, c: false, d: true };
    single(params, table, t, |g| g.d)
}

/// All four objectives and `a A + b B + c C + d D`.
pub fn total_loss(params: &ModelParams, table: &PatternTable, w: &LossWeights) -> Result<LossBreakdown> {
    let (tape, g) = evaluate_terms(params, table, Terms::ALL)?;
    let v = |x: Option<Var>| tape.value(x.unwrap());
    Ok(LossBreakdown::new(v(g.a), v(g.b), v(g.c), v(g.d), w))
}

/// Value and gradient of the weighted loss over the parameters in `mask`.
pub fn loss_and_grad(
    params: &ModelParams,
    table: &PatternTable,
    w: &LossWeights,
    terms: Terms,
    mask: &[bool],
    tape: &mut Tape,
) -> Result<(f64, Vec<f64>)> {
    tape.clear();
    let pv = ParamVars::masked(tape, &params.flatten(), mask);
    let g = build_loss(tape, params.layout(), &pv, table, w, terms)?;
    tape.backward(g.total);
    Ok((tape.value(g.total), pv.gradient(tape)))
}

/// Trainable mask for a set of groups.
pub fn group_mask(params: &ModelParams, groups: &[ParamGroup]) -> Vec<bool> {
    params.layout().mask(groups)
}
