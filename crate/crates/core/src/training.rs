//! Adam, the two-phase protocol and restart selection.
//!
//! Phase 1 fits the observed decision head and the outcome head on `C + D`
//! with the disparity units held at zero. Phase 2 freezes everything from
//! phase 1 and trains only the disparity units on the full weighted loss.
//! Each phase runs several independently seeded fits and keeps the one with
//! the lowest selection loss.

use rand::Rng as _;

use crate::data::{Dataset, PatternTable};
use crate::diffcore::Tape;
use crate::error::{Error, Result};
use crate::model::{ArchitectureConfig, ModelParams, ParamGroup};
use crate::objectives::{self, LossBreakdown, LossWeights, Terms};
use crate::seed::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Every parameter drawn from `U(-0.5, 0.5)`.
    UniformSmall,
    /// Disparity units start in the sign region that leads to the
    /// single-node optimum: `w_s > 0`, `bias >= -w_s`, and `w` opposite in
    /// sign to the decision gap.
    Theorem41Region,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub fits: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub master_seed: u64,
    pub init_scheme: InitScheme,
    /// Record losses every this many epochs (0 keeps only the first and last).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            fits: 100,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            master_seed: 0,
            init_scheme: InitScheme::UniformSmall,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.fits == 0 {
            return Err(Error::Config("epochs and fits must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update; entries with `mask[k] == false` are left untouched.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &TrainConfig,
    mask: Option<&[bool]>,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n || mask.is_some_and(|m| m.len() != n) {
        return Err(Error::Dimension("adam state, gradient and parameter sizes differ".into()));
    }
    state.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for k in 0..n {
        if mask.is_some_and(|m| !m[k]) {
            continue;
        }
        let g = grads[k];
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

fn uniform(rng: &mut seed::Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Draw a full parameter set.
///
/// `Theorem41Region` needs `delta_hint`, the sign-carrying decision gap in
/// logits, and only changes the disparity units' `w`, `w_s` and bias.
pub fn init_params(
    arch: ArchitectureConfig,
    scheme: InitScheme,
    seed_value: u64,
    delta_hint: Option<f64>,
) -> Result<ModelParams> {
    let mut rng = seed::rng(seed_value);
    let flat: Vec<f64> = (0..arch.n_params()).map(|_| uniform(&mut rng, -0.5, 0.5)).collect();
    let mut p = ModelParams::from_flat(arch, &flat)?;
    if scheme == InitScheme::Theorem41Region {
        let delta = match delta_hint {
            Some(d) if d != 0.0 => d,
            _ => {
                return Err(Error::Config(
                    "theorem-region initialization needs a nonzero delta hint".into(),
                ))
            }
        };
        for i in arch.m_obs..arch.m {
            let ws = uniform(&mut rng, 0.01, 0.5);
            let w = uniform(&mut rng, 0.01, 0.5) * -delta.signum();
            let bias = uniform(&mut rng, -ws, 0.5);
            p.set_w_rep(0, i, ws);
            p.head_weights[i] = w;
            p.rep_bias[i] = bias;
        }
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    ObservedOutcome,
    Disparity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    pub final_losses: LossBreakdown,
    pub seed: u64,
    pub phase: Phase,
    pub fit_index: usize,
    /// Loss used to rank fits: `c C + d D` in phase 1, the total in phase 2.
    pub selection_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub fit_id: usize,
    pub epoch: usize,
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub best: FitResult,
    pub fits: Vec<FitResult>,
    pub logs: Vec<LogRecord>,
}

impl TrainReport {
    pub fn log_csv(&self) -> String {
        let mut s = format!("{}\n", LossBreakdown::CSV_HEADER);
        for r in &self.logs {
            s.push_str(&r.losses.csv_row(r.fit_id, r.epoch));
            s.push('\n');
        }
        s
    }

    /// `(epoch, total)` series of the selected fit.
    pub fn best_curve(&self) -> Vec<(usize, f64)> {
        self.logs
            .iter()
            .filter(|r| r.fit_id == self.best.fit_index)
            .map(|r| (r.epoch, r.losses.total))
            .collect()
    }
}

/// Run `f` for each fit index, in parallel when available, preserving order.
fn map_fits<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

struct FitSpec<'a> {
    table: &'a PatternTable,
    weights: &'a LossWeights,
    terms: Terms,
    mask: &'a [bool],
    cfg: &'a TrainConfig,
    phase: Phase,
}

fn selection(phase: Phase, l: &LossBreakdown, w: &LossWeights) -> f64 {
    let v = match phase {
        Phase::ObservedOutcome => l.fidelity_part(w),
        Phase::Disparity => l.total,
    };
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn run_fit(spec: &FitSpec, init: ModelParams, fit_index: usize, seed_value: u64) -> Result<(FitResult, Vec<LogRecord>)> {
    let arch = init.arch;
    let mut flat = init.flatten();
    let mut state = AdamState::new(flat.len());
    let mut tape = Tape::new();
    let mut logs = Vec::new();
    let cfg = spec.cfg;
    let log = |flat: &[f64], epoch: usize, logs: &mut Vec<LogRecord>| -> Result<()> {
        let p = ModelParams::from_flat(arch, flat)?;
        logs.push(LogRecord {
            fit_id: fit_index,
            epoch,
            losses: objectives::total_loss(&p, spec.table, spec.weights)?,
        });
        Ok(())
    };
    log(&flat, 0, &mut logs)?;
    for epoch in 1..=cfg.epochs {
        let params = ModelParams::from_flat(arch, &flat)?;
        let (value, grad) =
            objectives::loss_and_grad(&params, spec.table, spec.weights, spec.terms, spec.mask, &mut tape)?;
        if !value.is_finite() {
            log::warn!("fit {fit_index}: non-finite loss at epoch {epoch}; stopping");
            break;
        }
        adam_step(&mut flat, &grad, &mut state, cfg, Some(spec.mask))?;
        let due = cfg.log_every > 0 && epoch % cfg.log_every == 0;
        if due || epoch == cfg.epochs {
            log(&flat, epoch, &mut logs)?;
        }
    }
    let params = ModelParams::from_flat(arch, &flat)?;
    let final_losses = objectives::total_loss(&params, spec.table, spec.weights)?;
    Ok((
        FitResult {
            selection_loss: selection(spec.phase, &final_losses, spec.weights),
            params,
            final_losses,
            seed: seed_value,
            phase: spec.phase,
            fit_index,
        },
        logs,
    ))
}

fn run_fits(spec: &FitSpec, n_fits: usize, init: impl Fn(usize, u64) -> Result<ModelParams> + Sync, phase_stream: u64) -> Result<TrainReport> {
    spec.cfg.validate()?;
    let results = map_fits(n_fits, |k| {
        let s = seed::derive(spec.cfg.master_seed, &[phase_stream, k as u64]);
        run_fit(spec, init(k, s)?, k, s)
    });
    let mut fits = Vec::with_capacity(n_fits);
    let mut logs = Vec::new();
    for r in results {
        let (fit, l) = r?;
        fits.push(fit);
        logs.extend(l);
    }
    let best = fits
        .iter()
        .min_by(|a, b| a.selection_loss.total_cmp(&b.selection_loss).then(a.fit_index.cmp(&b.fit_index)))
        .expect("at least one fit")
        .clone();
    Ok(TrainReport { best, fits, logs })
}

/// Fit the observed and outcome heads; disparity units stay at zero.
pub fn train_phase1(
    table: &PatternTable,
    arch: ArchitectureConfig,
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let layout = arch.layout();
    let mask = layout.mask(&[ParamGroup::Observed, ParamGroup::Outcome]);
    let spec = FitSpec {
        table,
        weights,
        terms: Terms::OBSERVED_OUTCOME,
        mask: &mask,
        cfg,
        phase: Phase::ObservedOutcome,
    };
    run_fits(
        &spec,
        cfg.fits,
        |_, s| {
            let mut p = init_params(arch, InitScheme::UniformSmall, s, None)?;
            p.zero_disparity();
            Ok(p)
        },
        stream::PHASE1,
    )
}

/// Starting values of one disparity unit.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitInit {
    /// Feature weights; empty means all zero.
    pub w_x: Vec<f64>,
    pub w_s: f64,
    pub bias: f64,
    pub w_head: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phase2Init {
    /// Random draws per the config's scheme; the hint feeds `Theorem41Region`.
    Random { delta_hint: Option<f64> },
    /// The same start for every fit, so a single fit is run.
    Fixed(Vec<UnitInit>),
}

/// Train the disparity units on the full loss with everything else frozen.
pub fn train_phase2(
    table: &PatternTable,
    frozen: &ModelParams,
    weights: &LossWeights,
    cfg: &TrainConfig,
    init: &Phase2Init,
) -> Result<TrainReport> {
    let arch = frozen.arch;
    let layout = arch.layout();
    let mask = layout.mask(&[ParamGroup::Disparity]);
    let spec = FitSpec {
        table,
        weights,
        terms: Terms::ALL,
        mask: &mask,
        cfg,
        phase: Phase::Disparity,
    };
    if let Phase2Init::Fixed(units) = init {
        if units.len() != arch.n_disparity() {
            return Err(Error::Config(format!(
                "{} unit initializations for {} disparity units",
                units.len(),
                arch.n_disparity()
            )));
        }
        if units.iter().any(|u| !u.w_x.is_empty() && u.w_x.len() != arch.n_features) {
            return Err(Error::Dimension("unit feature weights do not match n_features".into()));
        }
    }
    let n_fits = match init {
        Phase2Init::Fixed(_) => 1,
        Phase2Init::Random { .. } => cfg.fits,
    };
    run_fits(
        &spec,
        n_fits,
        |_, s| {
            let mut p = frozen.clone();
            match init {
                Phase2Init::Random { delta_hint } => {
                    let draw = init_params(arch, cfg.init_scheme, s, *delta_hint)?;
                    let src = draw.flatten();
                    let mut flat = p.flatten();
                    for (k, on) in mask.iter().enumerate() {
                        if *on {
                            flat[k] = src[k];
                        }
                    }
                    p = ModelParams::from_flat(arch, &flat)?;
                }
                Phase2Init::Fixed(units) => {
                    for (u, i) in units.iter().zip(arch.m_obs..arch.m) {
                        for r in 1..arch.n_inputs() {
                            p.set_w_rep(r, i, u.w_x.get(r - 1).copied().unwrap_or(0.0));
                        }
                        p.set_w_rep(0, i, u.w_s);
                        p.rep_bias[i] = u.bias;
                        p.head_weights[i] = u.w_head;
                    }
                }
            }
            Ok(p)
        },
        stream::PHASE2,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct KfoldReport {
    pub chosen: usize,
    /// `(m_obs, mean validation C)` per candidate.
    pub cv_losses: Vec<(usize, f64)>,
}

/// Pick the observed-unit count by k-fold validation cross-entropy of the observed head.
pub fn kfold_select_m_obs(d: &Dataset, candidates: &[usize], folds: usize, cfg: &TrainConfig) -> Result<KfoldReport> {
    if folds < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Config("no m_obs candidates".into()));
    }
    if d.len() < folds {
        return Err(Error::Data("fewer rows than folds".into()));
    }
    let nf = d.n_features();
    if let Some(bad) = candidates.iter().find(|&&m| m == 0 || m > nf + 1) {
        return Err(Error::Config(format!("m_obs candidate {bad} outside 1..={}", nf + 1)));
    }
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut seed::rng(seed::derive(cfg.master_seed, &[stream::KFOLD])));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; d.len()];
        for (pos, &row) in idx.iter().enumerate() {
            f[row] = pos % folds;
        }
        f
    };
    let weights = LossWeights::custom(0.0, 0.0, 1.0, 0.0)?;
    let mut cv_losses = Vec::new();
    for &m_obs in candidates {
        let arch = ArchitectureConfig::with_disparity_nodes(nf, m_obs, 1)?;
        let mask = arch.layout().mask(&[ParamGroup::Observed]);
        let mut total = 0.0;
        for k in 0..folds {
            let train_idx: Vec<usize> = (0..d.len()).filter(|&i| fold_of[i] != k).collect();
            let val_idx: Vec<usize> = (0..d.len()).filter(|&i| fold_of[i] == k).collect();
            let train = PatternTable::from(&d.subset(&train_idx));
            let val = PatternTable::from(&d.subset(&val_idx));
            let fold_cfg = TrainConfig {
                master_seed: seed::derive(cfg.master_seed, &[stream::KFOLD, m_obs as u64, k as u64]),
                log_every: 0,
                ..cfg.clone()
            };
            let spec = FitSpec {
                table: &train,
                weights: &weights,
                terms: Terms::OBSERVED,
                mask: &mask,
                cfg: &fold_cfg,
                phase: Phase::ObservedOutcome,
            };
            let report = run_fits(
                &spec,
                fold_cfg.fits,
                |_, s| {
                    let mut p = init_params(arch, InitScheme::UniformSmall, s, None)?;
                    p.zero_disparity();
                    Ok(p)
                },
                stream::PHASE1,
            )?;
            total += objectives::observed_bce_loss(&report.best.params, &val)?;
        }
        cv_losses.push((m_obs, total / folds as f64));
    }
    let chosen = cv_losses
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|c| c.0)
        .expect("nonempty");
    Ok(KfoldReport { chosen, cv_losses })
}
