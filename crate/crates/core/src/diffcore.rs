//! Scalar reverse-mode differentiation.
//!
//! A [`Tape`] records every intermediate value of one evaluation in
//! topological order. Calling [`Tape::backward`] sweeps the tape in reverse
//! and accumulates adjoints, so shared sub-expressions receive the sum of
//! their contributions. Tapes are rebuilt for every evaluation; use
//! [`Tape::clear`] to reuse the allocation.
//!
//! Subgradient conventions at kinks: `relu'(0) = 0`, `abs'(0) = 0`, and a
//! clipped value has zero adjoint on (and beyond) its bounds.

use crate::error::{Error, Result};

/// `max(x, 0)`.
#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Logistic sigmoid, evaluated in the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds `ln(p / (1 - p))` for `p` in the open unit interval.
pub fn logit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok((p / (1.0 - p)).ln())
    } else {
        Err(Error::Domain(p))
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Operation kind of a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpTag {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Affine,
    Relu,
    Sigmoid,
    Abs,
    Log,
    Clip,
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Input,
    Const,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Affine { x: u32, scale: f64 },
    Relu(u32),
    Sigmoid(u32),
    Abs(u32),
    Log(u32),
    Clip { x: u32, lo: f64, hi: f64 },
    // Linear combination over `terms[start..start + len]`.
    Sum { start: u32, len: u32 },
    Mean { start: u32, len: u32 },
}

/// One recorded value with its accumulated adjoint.
#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub value: f64,
    pub grad: f64,
    op: Op,
}

impl Node {
    pub fn tag(&self) -> OpTag {
        match self.op {
            Op::Input => OpTag::Input,
            Op::Const => OpTag::Const,
            Op::Add(..) => OpTag::Add,
            Op::Sub(..) => OpTag::Sub,
            Op::Mul(..) => OpTag::Mul,
            Op::Affine { .. } => OpTag::Affine,
            Op::Relu(_) => OpTag::Relu,
            Op::Sigmoid(_) => OpTag::Sigmoid,
            Op::Abs(_) => OpTag::Abs,
            Op::Log(_) => OpTag::Log,
            Op::Clip { .. } => OpTag::Clip,
            Op::Sum { .. } => OpTag::Sum,
            Op::Mean { .. } => OpTag::Mean,
        }
    }
}

#[derive(Default, Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    terms: Vec<(u32, f64)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(nodes),
            terms: Vec::with_capacity(nodes),
        }
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.terms.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.index()]
    }

    #[inline]
    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.index()].value
    }

    #[inline]
    pub fn grad(&self, v: Var) -> f64 {
        self.nodes[v.index()].grad
    }

    #[inline]
    fn push(&mut self, value: f64, op: Op) -> Var {
        let i = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: 0.0,
            op,
        });
        Var(i as u32)
    }

    pub fn input(&mut self, value: f64) -> Var {
        self.push(value, Op::Input)
    }

    pub fn inputs(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(value, Op::Const)
    }

    pub fn add(&mut self, x: Var, y: Var) -> Var {
        let v = self.value(x) + self.value(y);
        self.push(v, Op::Add(x.0, y.0))
    }

    pub fn sub(&mut self, x: Var, y: Var) -> Var {
        let v = self.value(x) - self.value(y);
        self.push(v, Op::Sub(x.0, y.0))
    }

    pub fn mul(&mut self, x: Var, y: Var) -> Var {
        let v = self.value(x) * self.value(y);
        self.push(v, Op::Mul(x.0, y.0))
    }

    /// `scale * x + offset`.
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Var {
        let v = scale * self.value(x) + offset;
        self.push(v, Op::Affine { x: x.0, scale })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = relu(self.value(x));
        self.push(v, Op::Relu(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = sigmoid(self.value(x));
        self.push(v, Op::Sigmoid(x.0))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).abs();
        self.push(v, Op::Abs(x.0))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let v = self.value(x).ln();
        self.push(v, Op::Log(x.0))
    }

    pub fn clip(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).clamp(lo, hi);
        self.push(v, Op::Clip { x: x.0, lo, hi })
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let start = self.terms.len() as u32;
        let mut v = 0.0;
        for x in xs {
            v += self.value(*x);
            self.terms.push((x.0, 1.0));
        }
        self.push(
            v,
            Op::Sum {
                start,
                len: xs.len() as u32,
            },
        )
    }

    /// `Σ coef · x` over the given terms.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let start = self.terms.len() as u32;
        let mut v = 0.0;
        for &(x, c) in terms {
            v += c * self.value(x);
            self.terms.push((x.0, c));
        }
        self.push(
            v,
            Op::Sum {
                start,
                len: terms.len() as u32,
            },
        )
    }

    /// Sum of `bias` and the selected entries of `weights`.
    ///
    /// This is the pre-activation of a unit fed by 0/1 inputs, where only the
    /// active inputs contribute their weight.
    pub fn gather_sum(&mut self, bias: Var, weights: &[Var], active: &[usize]) -> Var {
        let start = self.terms.len() as u32;
        let mut v = self.value(bias);
        self.terms.push((bias.0, 1.0));
        for &j in active {
            let w = weights[j];
            v += self.value(w);
            self.terms.push((w.0, 1.0));
        }
        self.push(
            v,
            Op::Sum {
                start,
                len: active.len() as u32 + 1,
            },
        )
    }

    pub fn mean(&mut self, xs: &[Var]) -> Var {
        if xs.is_empty() {
            return self.constant(f64::NAN);
        }
        let start = self.terms.len() as u32;
        let mut v = 0.0;
        for x in xs {
            v += self.value(*x);
            self.terms.push((x.0, 1.0));
        }
        v /= xs.len() as f64;
        self.push(
            v,
            Op::Mean {
                start,
                len: xs.len() as u32,
            },
        )
    }

    /// Reverse sweep from `output`; leaves `d output / d node` in every node.
    pub fn backward(&mut self, output: Var) {
        for n in &mut self.nodes {
            n.grad = 0.0;
        }
        self.nodes[output.index()].grad = 1.0;
        for i in (0..=output.index()).rev() {
            let Node { value, grad, op } = self.nodes[i];
            if grad == 0.0 {
                continue;
            }
            match op {
                Op::Input | Op::Const => {}
                Op::Add(x, y) => {
                    self.nodes[x as usize].grad += grad;
                    self.nodes[y as usize].grad += grad;
                }
                Op::Sub(x, y) => {
                    self.nodes[x as usize].grad += grad;
                    self.nodes[y as usize].grad -= grad;
                }
                Op::Mul(x, y) => {
                    let vx = self.nodes[x as usize].value;
                    let vy = self.nodes[y as usize].value;
                    self.nodes[x as usize].grad += grad * vy;
                    self.nodes[y as usize].grad += grad * vx;
                }
                Op::Affine { x, scale } => {
                    self.nodes[x as usize].grad += grad * scale;
                }
                Op::Relu(x) => {
                    if self.nodes[x as usize].value > 0.0 {
                        self.nodes[x as usize].grad += grad;
                    }
                }
                Op::Sigmoid(x) => {
                    self.nodes[x as usize].grad += grad * value * (1.0 - value);
                }
                Op::Abs(x) => {
                    let vx = self.nodes[x as usize].value;
                    if vx > 0.0 {
                        self.nodes[x as usize].grad += grad;
                    } else if vx < 0.0 {
                        self.nodes[x as usize].grad -= grad;
                    }
                }
                Op::Log(x) => {
                    let vx = self.nodes[x as usize].value;
                    self.nodes[x as usize].grad += grad / vx;
                }
                Op::Clip { x, lo, hi } => {
                    let vx = self.nodes[x as usize].value;
                    if vx > lo && vx < hi {
                        self.nodes[x as usize].grad += grad;
                    }
                }
                Op::Sum { start, len } => {
                    for k in start..start + len {
                        let (x, c) = self.terms[k as usize];
                        self.nodes[x as usize].grad += grad * c;
                    }
                }
                Op::Mean { start, len } => {
                    let g = grad / len as f64;
                    for k in start..start + len {
                        let (x, _) = self.terms[k as usize];
                        self.nodes[x as usize].grad += g;
                    }
                }
            }
        }
    }

    /// Which side of its kink every piecewise node sits on.
    ///
    /// Two evaluations with equal signatures lie in the same smooth piece of
    /// the recorded function.
    pub fn kink_signature(&self) -> Vec<i8> {
        let side = |v: f64| -> i8 {
            if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        };
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) | Op::Abs(x) => Some(side(self.nodes[x as usize].value)),
                Op::Clip { x, lo, hi } => {
                    let v = self.nodes[x as usize].value;
                    Some(if v <= lo {
                        -1
                    } else if v >= hi {
                        1
                    } else {
                        0
                    })
                }
                _ => None,
            })
            .collect()
    }
}

/// Value and gradient of a tape-built scalar function at `theta`.
pub fn value_and_grad<F>(f: &F, theta: &[f64]) -> (f64, Vec<f64>)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars = tape.inputs(theta);
    let out = f(&mut tape, &vars);
    tape.backward(out);
    (tape.value(out), vars.iter().map(|v| tape.grad(*v)).collect())
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / (|numeric| + 1e-8)` over checked coordinates.
    pub max_rel_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Coordinates whose `±h` probe crossed a relu/abs/clip kink.
    pub skipped: Vec<usize>,
}

/// Compare reverse-mode gradients with central differences of step `h`.
pub fn grad_check<F>(f: F, theta: &[f64], h: f64) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let eval = |point: &[f64]| -> (f64, Vec<i8>) {
        let mut tape = Tape::new();
        let vars = tape.inputs(point);
        let out = f(&mut tape, &vars);
        (tape.value(out), tape.kink_signature())
    };

    let mut tape = Tape::new();
    let vars = tape.inputs(theta);
    let out = f(&mut tape, &vars);
    let base_signature = tape.kink_signature();
    tape.backward(out);
    let analytic: Vec<f64> = vars.iter().map(|v| tape.grad(*v)).collect();

    let mut numeric = vec![0.0; theta.len()];
    let mut skipped = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    let mut probe = theta.to_vec();
    for k in 0..theta.len() {
        probe[k] = theta[k] + h;
        let (plus, sig_plus) = eval(&probe);
        probe[k] = theta[k] - h;
        let (minus, sig_minus) = eval(&probe);
        probe[k] = theta[k];

        numeric[k] = (plus - minus) / (2.0 * h);
        if sig_plus != base_signature || sig_minus != base_signature {
            skipped.push(k);
            continue;
        }
        let err = (analytic[k] - numeric[k]).abs() / (numeric[k].abs() + 1e-8);
        max_rel_error = max_rel_error.max(err);
    }

    GradCheckReport {
        max_rel_error,
        analytic,
        numeric,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_and_passes() {
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(2.0), 2.0);
        assert_eq!(relu(0.0), 0.0);

        let mut t = Tape::new();
        let x = t.input(0.0);
        let y = t.relu(x);
        t.backward(y);
        assert_eq!(t.grad(x), 0.0);

        let mut t = Tape::new();
        let x = t.input(-3.0);
        let y = t.relu(x);
        t.backward(y);
        assert_eq!(t.grad(x), 0.0);

        let mut t = Tape::new();
        let x = t.input(1.5);
        let y = t.relu(x);
        t.backward(y);
        assert_eq!(t.grad(x), 1.0);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(logit(0.6).unwrap()) - 0.6).abs() < 1e-15);
        assert!((sigmoid(-4.595) - 0.01).abs() < 1e-5);
        for x in [-500.0, -40.0, 40.0, 500.0] {
            let s = sigmoid(x);
            assert!(s.is_finite());
        }
        for x in [-500.0, 36.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        }
        assert!(sigmoid(1e300).is_finite() && sigmoid(-1e300).is_finite());
    }

    #[test]
    fn logit_values_and_domain() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        let d = logit(0.6).unwrap() - logit(0.3).unwrap();
        assert!((d - 1.2528).abs() < 1e-4);
        for x in [-3.0, 0.0, 7.0] {
            assert!((logit(sigmoid(x)).unwrap() - x).abs() < 1e-9);
        }
        assert!(logit(0.0).is_err());
        assert!(logit(1.0).is_err());
        assert!(logit(-0.1).is_err());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let mut t = Tape::new();
        let x = t.input(3.0);
        let y = t.add(x, x);
        t.backward(y);
        assert_eq!(t.grad(x), 2.0);

        let mut t = Tape::new();
        let x = t.input(3.0);
        let y = t.mul(x, x);
        let z = t.sum(&[y, x, x]);
        t.backward(z);
        assert_eq!(t.grad(x), 8.0);
    }

    #[test]
    fn abs_subgradient_at_zero() {
        let mut t = Tape::new();
        let x = t.input(0.0);
        let y = t.abs(x);
        t.backward(y);
        assert_eq!(t.grad(x), 0.0);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let report = grad_check(|t, _| t.constant(4.0), &[0.3, -1.2, 2.0], 1e-5);
        assert_eq!(report.max_rel_error, 0.0);
        assert!(report.analytic.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn sigmoid_of_affine_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let report = grad_check(
                |t, v| {
                    // sigmoid(w0 * 0.7 + w1 * -1.3 + w2 * w3 + w3)
                    let a = t.affine(v[0], 0.7, 0.0);
                    let b = t.affine(v[1], -1.3, 0.0);
                    let c = t.mul(v[2], v[3]);
                    let z = t.sum(&[a, b, c, v[3]]);
                    t.sigmoid(z)
                },
                &theta,
                1e-5,
            );
            assert!(report.max_rel_error < 1e-5, "{report:?}");
        }
    }

    #[test]
    fn kink_probe_is_skipped() {
        let report = grad_check(
            |t, v| {
                let r = t.relu(v[0]);
                t.mul(r, v[1])
            },
            &[1e-7, 2.0],
            1e-5,
        );
        assert_eq!(report.skipped, vec![0]);
    }

    #[test]
    fn log_clip_mean_weighted_sum() {
        let report = grad_check(
            |t, v| {
                let p = t.sigmoid(v[0]);
                let c = t.clip(p, 1e-7, 1.0 - 1e-7);
                let l = t.ln(c);
                let q = t.affine(p, -1.0, 1.0);
                let lq = t.ln(q);
                let m = t.mean(&[l, lq, v[1]]);
                let s = t.weighted_sum(&[(m, 3.0), (v[1], -0.5)]);
                let d = t.sub(s, v[0]);
                t.abs(d)
            },
            &[0.4, -2.0],
            1e-5,
        );
        assert!(report.skipped.is_empty());
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn gather_sum_selects_active_weights() {
        let mut t = Tape::new();
        let b = t.input(0.5);
        let w = t.inputs(&[1.0, 2.0, 4.0]);
        let z = t.gather_sum(b, &w, &[0, 2]);
        assert_eq!(t.value(z), 5.5);
        t.backward(z);
        assert_eq!(t.grad(w[1]), 0.0);
        assert_eq!(t.grad(w[2]), 1.0);
        assert_eq!(t.grad(b), 1.0);
        assert_eq!(t.node(z).tag(), OpTag::Sum);
    }
}
