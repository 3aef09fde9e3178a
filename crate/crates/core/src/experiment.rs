//! End-to-end experiments: configuration, the per-split pipeline and report
//! files.
//!
//! A config file holds one `key = value` per line; `#` starts a comment.
//! Relative paths resolve against the config file's directory.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `dataset` | | canonical CSV, or raw file(s) separated by `;` when `schema` is set |
//! | `schema` | | preprocessing schema for raw input |
//! | `generator` | | `thm42` or `thm43` instead of a dataset |
//! | `n` | 100000 | generated rows |
//! | `name` | file stem | label in the summary |
//! | `case` | V | outcome case `I`..`V` |
//! | `clip` | true | clip outcome offsets to valid rates |
//! | `splits` | 10 | train/test splits |
//! | `train_fraction` | 0.7 | |
//! | `a`, `c` | 0.99, 1000 | loss weights; `b = 1 - a`, `d = c` unless given |
//! | `b`, `d` | | explicit weights |
//! | `epochs` | 1000 | |
//! | `phase1_fits`, `phase2_fits` | 100, 100 | restarts per phase |
//! | `lr` | 0.01 | Adam learning rate |
//! | `init_scheme` | uniform_small | or `theorem41_region` |
//! | `m_obs` | auto | observed nodes, or `auto` for cross-validation |
//! | `m_obs_candidates` | 1,2,3,4 | candidates for `auto` |
//! | `cv_folds` | 5 | |
//! | `disparity_nodes` | 1 | |
//! | `log_every` | 100 | |
//! | `output` | results | report directory |
//! | `master_seed` | 0 | overridden by `DISPARITY_LAB_SEED` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{self, io, outcome, Dataset, OutcomeCase, OutcomeCaseConfig, PatternTable, RawTable, Schema};
use crate::diffcore::logit;
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::model::{ArchitectureConfig, ModelParams};
use crate::objectives::{self, LossBreakdown, LossWeights};
use crate::seed::{self, stream};
use crate::training::{self, InitScheme, Phase2Init, TrainConfig, TrainReport};

pub const SEED_ENV: &str = "DISPARITY_LAB_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Thm42,
    Thm43,
}

impl std::str::FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm42" => Ok(Self::Thm42),
            "thm43" => Ok(Self::Thm43),
            _ => Err(Error::Config(format!("unknown generator {s:?}"))),
        }
    }
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Thm42 => "thm42",
            Self::Thm43 => "thm43",
        }
    }

    pub fn generate(self, n: usize, seed_value: u64) -> Result<Dataset> {
        match self {
            Self::Thm42 => data::gen_thm42_data(n, seed_value),
            Self::Thm43 => data::gen_thm43_data(n, seed_value),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Canonical(PathBuf),
    Raw { files: Vec<PathBuf>, schema: PathBuf },
    Generated { generator: Generator, n: usize },
}

impl DataSource {
    pub fn load(&self, master_seed: u64) -> Result<Dataset> {
        match self {
            Self::Canonical(p) => io::read_canonical(p),
            Self::Raw { files, schema } => {
                let schema = Schema::load(schema)?;
                let refs: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
                data::preprocess(&RawTable::read(&refs, &schema)?, &schema)
            }
            Self::Generated { generator, n } => {
                generator.generate(*n, seed::derive(master_seed, &[stream::GENERATE]))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MObs {
    Fixed(usize),
    Auto,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub name: String,
    pub case: OutcomeCase,
    pub clip: bool,
    pub splits: usize,
    pub train_fraction: f64,
    pub weights: LossWeights,
    pub epochs: usize,
    pub phase1_fits: usize,
    pub phase2_fits: usize,
    pub learning_rate: f64,
    pub init_scheme: InitScheme,
    pub m_obs: MObs,
    pub m_obs_candidates: Vec<usize>,
    pub cv_folds: usize,
    pub disparity_nodes: usize,
    pub log_every: usize,
    pub output: PathBuf,
    pub master_seed: u64,
}

/// Raw key/value settings before validation.
#[derive(Clone, Debug, Default)]
struct Settings {
    pairs: Vec<(String, String)>,
}

impl Settings {
    fn set(&mut self, key: &str, value: &str) {
        self.pairs.retain(|(k, _)| k != key);
        self.pairs.push((key.to_string(), value.to_string()));
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}"))),
        }
    }
}

const KEYS: &[&str] = &[
    "dataset",
    "schema",
    "generator",
    "n",
    "name",
    "case",
    "clip",
    "splits",
    "train_fraction",
    "a",
    "b",
    "c",
    "d",
    "epochs",
    "phase1_fits",
    "phase2_fits",
    "lr",
    "init_scheme",
    "m_obs",
    "m_obs_candidates",
    "cv_folds",
    "disparity_nodes",
    "log_every",
    "output",
    "master_seed",
];

fn split_kv(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl ExperimentConfig {
    /// Parse config text, apply `overrides` (`key=value`) and the seed
    /// environment variable. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &[String]) -> Result<Self> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_kv(line).ok_or_else(|| Error::parse(base, i + 1, "expected key = value"))?;
            if !KEYS.contains(&k) {
                return Err(Error::parse(base, i + 1, format!("unknown key {k:?}")));
            }
            s.set(k, v);
        }
        for o in overrides {
            let (k, v) = split_kv(o).ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("unknown key {k:?}")));
            }
            s.set(k, v);
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            s.set("master_seed", &v);
        }
        Self::from_settings(&s, base)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    fn from_settings(s: &Settings, base: &Path) -> Result<Self> {
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let source = match (s.get("dataset"), s.get("generator")) {
            (Some(_), Some(_)) => return Err(Error::Config("set either dataset or generator".into())),
            (None, None) => return Err(Error::Config("no dataset or generator".into())),
            (None, Some(g)) => DataSource::Generated {
                generator: g.parse()?,
                n: s.parse("n", 100_000)?,
            },
            (Some(d), None) => {
                let files: Vec<PathBuf> = d.split(';').map(|f| resolve(f.trim())).collect();
                match s.get("schema") {
                    Some(schema) => DataSource::Raw {
                        files,
                        schema: resolve(schema),
                    },
                    None if files.len() == 1 => DataSource::Canonical(files.into_iter().next().unwrap()),
                    None => return Err(Error::Config("several dataset files need a schema".into())),
                }
            }
        };
        let name = match s.get("name") {
            Some(n) => n.to_string(),
            None => match &source {
                DataSource::Generated { generator, .. } => generator.name().to_string(),
                DataSource::Canonical(p) => stem(p),
                DataSource::Raw { files, .. } => stem(&files[0]),
            },
        };
        let a: f64 = s.parse("a", 0.99)?;
        let c: f64 = s.parse("c", 1000.0)?;
        let weights = match (s.get("b"), s.get("d")) {
            (None, None) => LossWeights::new(a, c)?,
            _ => LossWeights::custom(a, s.parse("b", 1.0 - a)?, c, s.parse("d", c)?)?,
        };
        let m_obs = match s.get("m_obs").unwrap_or("auto") {
            "auto" => MObs::Auto,
            v => MObs::Fixed(v.parse().map_err(|_| Error::Config(format!("m_obs: {v:?}")))?),
        };
        let m_obs_candidates = s
            .get("m_obs_candidates")
            .unwrap_or("1,2,3,4")
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("m_obs candidate {v:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        let init_scheme = match s.get("init_scheme").unwrap_or("uniform_small") {
            "uniform_small" => InitScheme::UniformSmall,
            "theorem41_region" => InitScheme::Theorem41Region,
            v => return Err(Error::Config(format!("init_scheme {v:?}"))),
        };
        let cfg = Self {
            source,
            name,
            case: s.parse("case", OutcomeCase::V)?,
            clip: s.parse("clip", true)?,
            splits: s.parse("splits", 10)?,
            train_fraction: s.parse("train_fraction", 0.7)?,
            weights,
            epochs: s.parse("epochs", 1000)?,
            phase1_fits: s.parse("phase1_fits", 100)?,
            phase2_fits: s.parse("phase2_fits", 100)?,
            learning_rate: s.parse("lr", 0.01)?,
            init_scheme,
            m_obs,
            m_obs_candidates,
            cv_folds: s.parse("cv_folds", 5)?,
            disparity_nodes: s.parse("disparity_nodes", 1)?,
            log_every: s.parse("log_every", 100)?,
            output: resolve(s.get("output").unwrap_or("results")),
            master_seed: s.parse("master_seed", 0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 || self.disparity_nodes == 0 {
            return Err(Error::Config("splits and disparity_nodes must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        let files: Vec<&PathBuf> = match &self.source {
            DataSource::Canonical(p) => vec![p],
            DataSource::Raw { files, schema } => files.iter().chain(std::iter::once(schema)).collect(),
            DataSource::Generated { n, .. } => {
                if *n == 0 {
                    return Err(Error::Config("n must be positive".into()));
                }
                vec![]
            }
        };
        if let Some(missing) = files.iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!("{} does not exist", missing.display())));
        }
        if self.m_obs == MObs::Auto && self.m_obs_candidates.is_empty() {
            return Err(Error::Config("m_obs = auto needs candidates".into()));
        }
        self.train_config(0, 1).validate()
    }

    fn train_config(&self, seed_value: u64, fits: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            fits,
            learning_rate: self.learning_rate,
            master_seed: seed_value,
            init_scheme: self.init_scheme,
            log_every: self.log_every,
            ..TrainConfig::default()
        }
    }

    /// Fully resolved settings, re-parseable by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        match &self.source {
            DataSource::Canonical(p) => writeln!(t, "dataset = {}", p.display()),
            DataSource::Raw { files, schema } => {
                let joined: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
                writeln!(t, "dataset = {}\nschema = {}", joined.join(";"), schema.display())
            }
            DataSource::Generated { generator, n } => writeln!(t, "generator = {}\nn = {n}", generator.name()),
        }
        .unwrap();
        let w = &self.weights;
        let m_obs = match self.m_obs {
            MObs::Auto => "auto".to_string(),
            MObs::Fixed(m) => m.to_string(),
        };
        let cands: Vec<String> = self.m_obs_candidates.iter().map(|m| m.to_string()).collect();
        let scheme = match self.init_scheme {
            InitScheme::UniformSmall => "uniform_small",
            InitScheme::Theorem41Region => "theorem41_region",
        };
        let _ = write!(
            t,
            "name = {}\ncase = {}\nclip = {}\nsplits = {}\ntrain_fraction = {}\n\
             a = {}\nb = {}\nc = {}\nd = {}\nepochs = {}\nphase1_fits = {}\nphase2_fits = {}\n\
             lr = {}\ninit_scheme = {scheme}\nm_obs = {m_obs}\nm_obs_candidates = {}\ncv_folds = {}\n\
             disparity_nodes = {}\nlog_every = {}\noutput = {}\nmaster_seed = {}\n",
            self.name,
            self.case,
            self.clip,
            self.splits,
            self.train_fraction,
            w.a,
            w.b,
            w.c,
            w.d,
            self.epochs,
            self.phase1_fits,
            self.phase2_fits,
            self.learning_rate,
            cands.join(","),
            self.cv_folds,
            self.disparity_nodes,
            self.log_every,
            self.output.display(),
            self.master_seed
        );
        t
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

/// Everything produced by one split.
#[derive(Clone, Debug)]
pub struct SplitResult {
    pub split: usize,
    pub m_obs: usize,
    pub outcome: OutcomeCaseConfig,
    /// `(m_obs, mean validation C)` when selected by cross-validation.
    pub cv_losses: Vec<(usize, f64)>,
    pub phase1: TrainReport,
    pub phase2: TrainReport,
    pub test_losses: LossBreakdown,
    pub eval: EvalReport,
}

impl SplitResult {
    pub fn params(&self) -> &ModelParams {
        &self.phase2.best.params
    }
}

pub const SUMMARY_HEADER: &str = "dataset,case,split,disparity,accuracy,A,B,C,D";

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub results: Vec<SplitResult>,
    pub failures: Vec<(usize, String)>,
    pub summary_csv: String,
}

impl ExperimentOutcome {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }

    /// `(mean disparity, mean accuracy)` over completed splits.
    pub fn means(&self) -> Option<(f64, f64)> {
        if self.results.is_empty() {
            return None;
        }
        let n = self.results.len() as f64;
        Some((
            self.results.iter().map(|r| r.eval.disparity).sum::<f64>() / n,
            self.results.iter().map(|r| r.eval.accuracy).sum::<f64>() / n,
        ))
    }
}

fn logit_gap(d: &Dataset) -> Option<f64> {
    let l = |s| d.rate_h(s).ok().and_then(|r| logit(r).ok());
    Some(l(1)? - l(0)?)
}

/// Run one split of `cfg` on the full dataset `full`.
pub fn run_split(cfg: &ExperimentConfig, full: &Dataset, k: usize) -> Result<SplitResult> {
    let master = cfg.master_seed;
    let k64 = k as u64;
    let outcome = OutcomeCaseConfig::for_dataset(cfg.case, full, cfg.clip)?;
    let injected = outcome::inject_outcome(full, &outcome, seed::derive(master, &[stream::INJECT, k64]))?;
    let (train, test) = data::split(&injected, cfg.train_fraction, seed::derive(master, &[stream::SPLIT, k64]))?;

    let (m_obs, cv_losses) = match cfg.m_obs {
        MObs::Fixed(m) => (m, Vec::new()),
        MObs::Auto => {
            let tc = cfg.train_config(seed::derive(master, &[stream::KFOLD, k64]), cfg.phase1_fits);
            let r = training::kfold_select_m_obs(&train, &cfg.m_obs_candidates, cfg.cv_folds, &tc)?;
            (r.chosen, r.cv_losses)
        }
    };
    let arch = ArchitectureConfig::with_disparity_nodes(train.n_features(), m_obs, cfg.disparity_nodes)?;
    let table = PatternTable::from(&train);
    let p1_cfg = cfg.train_config(seed::derive(master, &[stream::PHASE1, k64]), cfg.phase1_fits);
    let phase1 = training::train_phase1(&table, arch, &cfg.weights, &p1_cfg)?;
    let p2_cfg = cfg.train_config(seed::derive(master, &[stream::PHASE2, k64]), cfg.phase2_fits);
    let init = Phase2Init::Random {
        delta_hint: logit_gap(&train),
    };
    let phase2 = training::train_phase2(&table, &phase1.best.params, &cfg.weights, &p2_cfg, &init)?;
    let params = &phase2.best.params;
    let test_losses = objectives::total_loss(params, &PatternTable::from(&test), &cfg.weights)?;
    let eval = metrics::evaluate(params, &test)?;
    for (epoch, l) in phase2.logs.iter().map(|r| (r.epoch, r.losses.total)) {
        if !l.is_finite() {
            return Err(Error::Data(format!("non-finite phase-2 loss at epoch {epoch}")));
        }
    }
    Ok(SplitResult {
        split: k,
        m_obs,
        outcome,
        cv_losses,
        phase1,
        phase2,
        test_losses,
        eval,
    })
}

fn map_splits<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
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

pub fn summary_row(name: &str, case: OutcomeCase, split: &str, disparity: f64, accuracy: f64, l: &LossBreakdown) -> String {
    format!(
        "{name},{case},{split},{disparity},{accuracy},{},{},{},{}",
        l.disparity, l.sparsity, l.observed_bce, l.outcome_bce
    )
}

fn summary_csv(cfg: &ExperimentConfig, results: &[SplitResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in results {
        out.push_str(&summary_row(&cfg.name, cfg.case, &r.split.to_string(), r.eval.disparity, r.eval.accuracy, &r.test_losses));
        out.push('\n');
    }
    if !results.is_empty() {
        let n = results.len() as f64;
        let mean = |f: &dyn Fn(&SplitResult) -> f64| results.iter().map(f).sum::<f64>() / n;
        let l = LossBreakdown {
            disparity: mean(&|r| r.test_losses.disparity),
            sparsity: mean(&|r| r.test_losses.sparsity),
            observed_bce: mean(&|r| r.test_losses.observed_bce),
            outcome_bce: mean(&|r| r.test_losses.outcome_bce),
            total: mean(&|r| r.test_losses.total),
        };
        out.push_str(&summary_row(&cfg.name, cfg.case, "mean", mean(&|r| r.eval.disparity), mean(&|r| r.eval.accuracy), &l));
        out.push('\n');
    }
    out
}

fn series(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    points.into_iter().map(|(x, y)| format!("{x}\t{y}\n")).collect()
}

/// Run every split and compute the summary without touching the disk.
pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let full = cfg.source.load(cfg.master_seed)?;
    let outcomes = map_splits(cfg.splits, |k| run_split(cfg, &full, k));
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in outcomes.into_iter().enumerate() {
        match r {
            Ok(r) => results.push(r),
            Err(e) => {
                log::error!("split {k} failed: {e}");
                failures.push((k, e.to_string()));
            }
        }
    }
    let summary_csv = summary_csv(cfg, &results);
    Ok(ExperimentOutcome {
        results,
        failures,
        summary_csv,
    })
}

/// Run the experiment and write the report directory.
///
/// Layout: `config.txt`, `summary.csv`, `eval.csv`, `consistency.txt`,
/// `failures.log`, and per split `split_<k>/` with both training logs, the
/// final parameters and two-column `.tsv` plot series.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let out = run_in_memory(cfg)?;
    let dir = &cfg.output;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.txt"), cfg.to_text())?;
    std::fs::write(dir.join("summary.csv"), &out.summary_csv)?;
    let mut eval = format!("{}\n", EvalReport::CSV_HEADER);
    for r in &out.results {
        eval.push_str(&r.eval.csv_row(&cfg.name, &cfg.case.to_string(), r.split)?);
        eval.push('\n');
    }
    std::fs::write(dir.join("eval.csv"), eval)?;
    let groups: Vec<(&[u8], &[f64])> = out
        .results
        .iter()
        .map(|r| (r.eval.s.as_slice(), r.eval.corrections.as_slice()))
        .collect();
    let cm = if groups.is_empty() {
        "cm\tnan\n".to_string()
    } else {
        format!("cm\t{}\n", metrics::consistency_measure(&groups)?)
    };
    std::fs::write(dir.join("consistency.txt"), cm)?;
    let failures: String = out.failures.iter().map(|(k, e)| format!("split {k}: {e}\n")).collect();
    std::fs::write(dir.join("failures.log"), failures)?;
    for r in &out.results {
        let sd = dir.join(format!("split_{}", r.split));
        std::fs::create_dir_all(&sd)?;
        std::fs::write(sd.join("phase1_log.csv"), r.phase1.log_csv())?;
        std::fs::write(sd.join("phase2_log.csv"), r.phase2.log_csv())?;
        r.params().save(&sd.join("params.txt"))?;
        let curve = r.phase2.best_curve().into_iter().map(|(e, l)| (e as f64, l));
        std::fs::write(sd.join("phase2_loss.tsv"), series(curve))?;
        if !r.cv_losses.is_empty() {
            let cv = r.cv_losses.iter().map(|&(m, l)| (m as f64, l));
            std::fs::write(sd.join("cv_loss_vs_m_obs.tsv"), series(cv))?;
        }
        let corr = r.eval.s.iter().zip(&r.eval.corrections).map(|(&s, &c)| (s as f64, c));
        std::fs::write(sd.join("corrections_by_s.tsv"), series(corr))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke(extra: &str) -> ExperimentConfig {
        let text = format!(
            "generator = thm42\nn = 400\nsplits = 2\nepochs = 3\nphase1_fits = 2\nphase2_fits = 2\nm_obs = 1\nlog_every = 1\n{extra}"
        );
        ExperimentConfig::parse(&text, Path::new("."), &[]).unwrap()
    }

    #[test]
    fn parse_defaults_and_overrides() {
        let c = smoke("");
        assert_eq!(c.case, OutcomeCase::V);
        assert_eq!(c.weights, LossWeights::new(0.99, 1000.0).unwrap());
        assert_eq!(c.train_fraction, 0.7);
        let o = ExperimentConfig::parse("generator = thm43 # comment\n", Path::new("/x"), &["case=III".into(), "splits=4".into()]).unwrap();
        assert_eq!((o.case, o.splits), (OutcomeCase::III, 4));
        assert_eq!(o.output, PathBuf::from("/x/results"));
        assert_eq!(o.m_obs, MObs::Auto);
        assert!(ExperimentConfig::parse("generator = thm42\nbogus = 1\n", Path::new("."), &[]).is_err());
        assert!(ExperimentConfig::parse("n = 3\n", Path::new("."), &[]).is_err());
        assert!(ExperimentConfig::parse("dataset = /does/not/exist.csv\n", Path::new("."), &[]).is_err());
        assert!(ExperimentConfig::parse("generator = thm42\na = 0.99\nc = 1\n", Path::new("."), &[]).is_err());
    }

    #[test]
    fn config_text_roundtrip() {
        let c = smoke("case = II\nm_obs_candidates = 1,2\nb = 0.2\nd = 5\n");
        let again = ExperimentConfig::parse(&c.to_text(), Path::new("."), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn smoke_run_summary_means() {
        let c = smoke("case = I\n");
        let out = run_in_memory(&c).unwrap();
        assert!(out.success());
        let lines: Vec<&str> = out.summary_csv.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(lines.len(), 4);
        let col = |l: &str, i: usize| l.split(',').nth(i).unwrap().parse::<f64>().unwrap();
        let mean = (col(lines[1], 3) + col(lines[2], 3)) / 2.0;
        assert!((col(lines[3], 3) - mean).abs() < 1e-15);
        let (md, _) = out.means().unwrap();
        assert!((md - mean).abs() < 1e-15);
        let again = run_in_memory(&c).unwrap();
        assert_eq!(out.summary_csv, again.summary_csv);
    }

    #[test]
    fn failing_split_is_recorded() {
        // The thm42 gap forces a Case I offset outside the valid range.
        let c = smoke("case = I\nclip = false\n");
        let out = run_in_memory(&c).unwrap();
        assert_eq!(out.failures.len(), 2);
        assert!(out.results.is_empty() && !out.success());
    }
}
