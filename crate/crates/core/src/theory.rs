//! Optima for a single disparity unit acting on a sensitive attribute alone.
//!
//! Setting: the observed decision has logit `l0` for `S=0` and `l0 + δ` for
//! `S=1`, the outcome gap between decisions is `α`, and one unit with head
//! weight `w`, input weight `w_s` and bias `b_r` adds
//! `w · relu(w_s · s + b_r)` to the logit. The loss is
//!
//! ```text
//! a |α| |D(1) - D(0)| + (1 - a) (|w| + |w_s| + |b_r|)
//! ```
//!
//! with `D(s)` the desired decision rate. A unit with L1 norm `B` shifts a
//! logit by at most `B²/4`, which gives four one-dimensional branches in `B`:
//!
//! | branch | gap sign | move | weights `(w, w_s, b_r)` |
//! |--------|----------|------|-------------------------|
//! | L1 | δ > 0 | lower the `S=1` logit | `(-B/2, B/2, 0)` |
//! | L2 | δ > 0 | raise both logits | `(B/2, 0, B/2)` |
//! | L3 | δ < 0 | raise the `S=1` logit | `(B/2, B/2, 0)` |
//! | L4 | δ < 0 | lower both logits | `(-B/2, 0, B/2)` |

use std::fmt;

use crate::diffcore::{relu, sigmoid};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoremScenario {
    pub delta: f64,
    pub alpha: f64,
    pub logit_o0: f64,
    pub a: f64,
}

impl TheoremScenario {
    pub fn new(delta: f64, alpha: f64, logit_o0: f64, a: f64) -> Result<Self> {
        let s = Self {
            delta,
            alpha,
            logit_o0,
            a,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta == 0.0 || !self.delta.is_finite() {
            return Err(Error::Config("delta must be finite and nonzero".into()));
        }
        if self.alpha == 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite and nonzero".into()));
        }
        if !(self.a > 0.0 && self.a < 1.0) || !self.logit_o0.is_finite() {
            return Err(Error::Config("need 0 < a < 1 and a finite logit".into()));
        }
        Ok(())
    }

    /// `(logit_o0, delta) -> (-logit_o0, -delta)`.
    pub fn mirrored(&self) -> Self {
        Self {
            delta: -self.delta,
            logit_o0: -self.logit_o0,
            ..*self
        }
    }

    /// Largest useful L1 norm: `2 sqrt|δ|` already closes the gap.
    pub fn feasible_bound(&self) -> f64 {
        2.0 * self.delta.abs().sqrt()
    }

    /// Loss with the unit switched off.
    pub fn no_change_loss(&self) -> f64 {
        let l0 = self.logit_o0;
        self.a * self.alpha.abs() * (sigmoid(l0 + self.delta) - sigmoid(l0)).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct UnitWeights {
    pub w: f64,
    pub w_sr: f64,
    pub bias: f64,
}

impl UnitWeights {
    pub fn l1(&self) -> f64 {
        self.w.abs() + self.w_sr.abs() + self.bias.abs()
    }

    /// Logit shift applied to group `s`.
    pub fn shift(&self, s: f64) -> f64 {
        self.w * relu(self.w_sr * s + self.bias)
    }
}

/// Full single-unit loss at given weights.
pub fn single_unit_loss(sc: &TheoremScenario, u: &UnitWeights) -> f64 {
    let l0 = sc.logit_o0;
    let d1 = sigmoid(l0 + sc.delta + u.shift(1.0));
    let d0 = sigmoid(l0 + u.shift(0.0));
    sc.a * sc.alpha.abs() * (d1 - d0).abs() + (1.0 - sc.a) * u.l1()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BranchKind {
    /// Shift down the larger logit.
    SD,
    /// Equal increase of both logits.
    EI,
    /// Shift up the smaller logit.
    SI,
    /// Equal decrease of both logits.
    ED,
}

/// Remaining decision gap after a logit shift `x >= 0`.
pub fn branch_fn(kind: BranchKind, x: f64, sc: &TheoremScenario) -> f64 {
    let (l0, d) = (sc.logit_o0, sc.delta);
    match kind {
        BranchKind::SD => sigmoid(l0 + d - x) - sigmoid(l0),
        BranchKind::EI => sigmoid(l0 + d + x) - sigmoid(l0 + x),
        BranchKind::SI => sigmoid(l0) - sigmoid(l0 + d + x),
        BranchKind::ED => sigmoid(l0 - x) - sigmoid(l0 + d - x),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    L1,
    L2,
    L3,
    L4,
    NoChange,
    Thm41,
    Thm42,
}

impl Branch {
    pub fn kind(self) -> Option<BranchKind> {
        match self {
            Branch::L1 => Some(BranchKind::SD),
            Branch::L2 => Some(BranchKind::EI),
            Branch::L3 => Some(BranchKind::SI),
            Branch::L4 => Some(BranchKind::ED),
            _ => None,
        }
    }

    /// Unit weights with L1 norm `b` on this branch.
    pub fn weights(self, b: f64) -> UnitWeights {
        let h = b / 2.0;
        let (w, w_sr, bias) = match self {
            Branch::L1 => (-h, h, 0.0),
            Branch::L2 => (h, 0.0, h),
            Branch::L3 => (h, h, 0.0),
            Branch::L4 => (-h, 0.0, h),
            _ => (0.0, 0.0, 0.0),
        };
        UnitWeights { w, w_sr, bias }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Branch::L1 => "L1",
            Branch::L2 => "L2",
            Branch::L3 => "L3",
            Branch::L4 => "L4",
            Branch::NoChange => "L0",
            Branch::Thm41 => "thm41",
            Branch::Thm42 => "thm42",
        };
        f.write_str(s)
    }
}

/// Minimum of one branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchMinimum {
    pub branch: Branch,
    /// Minimum over `[0, 2 sqrt|δ|]`.
    pub loss: f64,
    pub b: f64,
    /// Best strictly interior local minimum over a range wide enough to
    /// saturate the sigmoid, if one exists.
    pub interior: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimumReport {
    pub l_min: f64,
    pub weights: UnitWeights,
    pub branch: Branch,
    pub b_opti: Option<f64>,
    /// Per-branch minima, for the numerical optimum.
    pub branches: Vec<BranchMinimum>,
}

impl OptimumReport {
    pub fn csv_header() -> &'static str {
        "branch,l_min,b_opti,w,w_sr,bias"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.branch,
            self.l_min,
            self.b_opti.map_or(String::new(), |b| b.to_string()),
            self.weights.w,
            self.weights.w_sr,
            self.weights.bias
        )
    }

    pub fn branch(&self, b: Branch) -> Option<&BranchMinimum> {
        self.branches.iter().find(|m| m.branch == b)
    }
}

/// Closed-form optimum as `a -> 1`: the gap is closed exactly with the
/// smallest L1 norm, `2 sqrt|δ|`. `l_min` is in L1 units.
pub fn thm41_optimum(delta: f64) -> Result<OptimumReport> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::Config("delta must be finite and nonzero".into()));
    }
    let r = delta.abs().sqrt();
    Ok(OptimumReport {
        l_min: 2.0 * r,
        weights: UnitWeights {
            w: -delta.signum() * r,
            w_sr: r,
            bias: 0.0,
        },
        branch: Branch::Thm41,
        b_opti: Some(2.0 * r),
        branches: Vec::new(),
    })
}

/// One of the `k` equivalent optima with several disparity units.
#[derive(Clone, Debug, PartialEq)]
pub struct Thm42Solution {
    pub active: usize,
    pub units: Vec<UnitWeights>,
    pub l_min: f64,
}

/// With `k` units and features present, exactly one unit closes the gap
/// (feature weights zero) and the rest stay at zero.
pub fn thm42_optimum(delta: f64, k: usize) -> Result<Vec<Thm42Solution>> {
    if k == 0 {
        return Err(Error::Config("need at least one unit".into()));
    }
    let single = thm41_optimum(delta)?;
    Ok((0..k)
        .map(|active| {
            let mut units = vec![UnitWeights::default(); k];
            units[active] = single.weights;
            Thm42Solution {
                active,
                units,
                l_min: single.l_min,
            }
        })
        .collect())
}

/// Golden-section search on `[lo, hi]` down to a bracket of width `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    // Report the best of the final bracket and its endpoints.
    [(x, fx), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

pub const GRID_POINTS_1D: usize = 4000;
const GOLDEN_TOL: f64 = 1e-8;

fn dense(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let fs = xs.iter().map(|&x| f(x)).collect();
    (xs, fs)
}

fn refine(f: &impl Fn(f64) -> f64, xs: &[f64], fs: &[f64], i: usize) -> (f64, f64) {
    let lo = xs[i.saturating_sub(1)];
    let hi = xs[(i + 1).min(xs.len() - 1)];
    let (x, fx) = golden_section(f, lo, hi, GOLDEN_TOL);
    if fx <= fs[i] {
        (x, fx)
    } else {
        (xs[i], fs[i])
    }
}

/// Global minimum on `[lo, hi]`: dense grid, then golden-section polish.
pub fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let (xs, fs) = dense(&f, lo, hi, n.max(3));
    let i = (0..fs.len()).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).unwrap();
    refine(&f, &xs, &fs, i)
}

/// Best strictly interior local minimum on `[lo, hi]`.
pub fn interior_minimum(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Option<(f64, f64)> {
    let (xs, fs) = dense(&f, lo, hi, n.max(3));
    (1..fs.len() - 1)
        .filter(|&i| fs[i] < fs[i - 1] && fs[i] <= fs[i + 1])
        .map(|i| refine(&f, &xs, &fs, i))
        .filter(|&(x, _)| x > lo && x < hi)
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn branch_loss(sc: &TheoremScenario, branch: Branch) -> impl Fn(f64) -> f64 + '_ {
    let kind = branch.kind().expect("a one-dimensional branch");
    move |b: f64| (1.0 - sc.a) * b + sc.a * sc.alpha.abs() * branch_fn(kind, b * b / 4.0, sc).abs()
}

/// Numerical optimum over the two branches that apply to the sign of δ.
///
/// Each branch is minimized over `[0, 2 sqrt|δ|]`: beyond that the L1 cost
/// alone exceeds a loss that is already attainable. A minimum at `B = 0` is
/// reported as the no-change branch.
pub fn thm43_optimum(sc: &TheoremScenario) -> Result<OptimumReport> {
    sc.validate()?;
    let candidates = if sc.delta > 0.0 {
        [Branch::L1, Branch::L2]
    } else {
        [Branch::L3, Branch::L4]
    };
    let hi = sc.feasible_bound();
    let wide = 2.0 * (sc.delta.abs() + sc.logit_o0.abs() + 40.0).sqrt();
    let branches: Vec<BranchMinimum> = candidates
        .iter()
        .map(|&br| {
            let f = branch_loss(sc, br);
            let (b, loss) = minimize_1d(&f, 0.0, hi, GRID_POINTS_1D);
            let top = match br.kind() {
                Some(BranchKind::EI) | Some(BranchKind::ED) => wide,
                _ => hi,
            };
            let interior = interior_minimum(&f, 0.0, top, 4 * GRID_POINTS_1D).map(|(b, l)| (l, b));
            BranchMinimum {
                branch: br,
                loss,
                b,
                interior,
            }
        })
        .collect();
    let best = branches
        .iter()
        .min_by(|x, y| x.loss.total_cmp(&y.loss))
        .copied()
        .unwrap();
    let (branch, b) = if best.b < 1e-7 {
        (Branch::NoChange, 0.0)
    } else {
        (best.branch, best.b)
    };
    let weights = branch.weights(b);
    Ok(OptimumReport {
        l_min: single_unit_loss(sc, &weights),
        weights,
        branch,
        b_opti: Some(b),
        branches,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Points per axis for `w_s` and the bias (odd keeps 0 on the grid).
    pub points: usize,
    /// Half-width of every axis; defaults to `2 sqrt|δ| + 1`.
    pub bound: Option<f64>,
    /// Dense points for the `w` scan at each `(w_s, bias)` node.
    pub inner_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 151,
            bound: None,
            inner_points: 2001,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridReport {
    pub l_min: f64,
    pub weights: UnitWeights,
    /// Grid spacing of the outer axes.
    pub step: f64,
    /// Bound on how far the grid minimum can sit above the true minimum.
    pub resolution: f64,
}

/// Brute-force minimum of [`single_unit_loss`].
///
/// `w_s` and the bias run over a regular grid. At each node the loss is a
/// function of `w` alone, which is scanned densely and polished.
pub fn grid_oracle(sc: &TheoremScenario, spec: &GridSpec) -> Result<GridReport> {
    sc.validate()?;
    if spec.points < 3 || spec.inner_points < 3 {
        return Err(Error::Config("grid needs at least three points per axis".into()));
    }
    let bound = spec.bound.unwrap_or(sc.feasible_bound() + 1.0);
    let n = spec.points;
    let step = 2.0 * bound / (n - 1) as f64;
    let axis: Vec<f64> = (0..n)
        .map(|i| if 2 * i + 1 == n { 0.0 } else { -bound + step * i as f64 })
        .collect();

    let row = |ws: f64| -> (f64, UnitWeights) {
        let mut best = (f64::INFINITY, UnitWeights::default());
        for &bias in &axis {
            let at = |w: f64| single_unit_loss(sc, &UnitWeights { w, w_sr: ws, bias });
            let (w, l) = minimize_1d(at, -bound, bound, spec.inner_points);
            if l < best.0 {
                best = (l, UnitWeights { w, w_sr: ws, bias });
            }
        }
        best
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<(f64, UnitWeights)> = {
        use rayon::prelude::*;
        axis.par_iter().map(|&ws| row(ws)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<(f64, UnitWeights)> = axis.iter().map(|&ws| row(ws)).collect();

    let (l_min, weights) = rows
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    // Moving w_s or the bias by half a step changes the loss by at most
    // (1 - a + a|α| |w| / 4) per unit, since the sigmoid slope is <= 1/4.
    let lipschitz = (1.0 - sc.a) + sc.a * sc.alpha.abs() * bound / 4.0;
    Ok(GridReport {
        l_min,
        weights,
        step,
        resolution: step * lipschitz,
    })
}
