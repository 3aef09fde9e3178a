//! Evaluation metrics.

use crate::data::{Dataset, GeneratorSpec, PatternTable};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::objectives;

/// Outcome disparity implied by the desired head, on `d`.
///
/// Goes through [`objectives::disparity_loss`] so training and evaluation
/// share one computation.
pub fn outcome_disparity(params: &ModelParams, d: &Dataset) -> Result<f64> {
    check_arch(params, d)?;
    objectives::disparity_loss(params, &PatternTable::from_dataset(d))
}

fn check_arch(params: &ModelParams, d: &Dataset) -> Result<()> {
    if params.arch.n_features != d.n_features() {
        return Err(Error::Dimension(format!(
            "model expects {} features, data has {}",
            params.arch.n_features,
            d.n_features()
        )));
    }
    if !d.has_both_groups() {
        return Err(Error::Data("both sensitive groups must be present".into()));
    }
    Ok(())
}

/// Desired decision: 1 iff its probability is at least 0.5.
pub fn predict_desired(params: &ModelParams, x: &[u8], s: u8) -> Result<u8> {
    Ok(u8::from(params.forward_desired(x, s)? >= 0.5))
}

/// Share of rows where the desired decision equals the observed `h`.
pub fn decision_accuracy(params: &ModelParams, d: &Dataset) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let mut hits = 0usize;
    for r in &d.rows {
        hits += usize::from(predict_desired(params, &r.x, r.s)? == r.h);
    }
    Ok(hits as f64 / d.len() as f64)
}

/// Per-split evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub disparity: f64,
    pub accuracy: f64,
    /// `(Pr(Y=1|S=1), Pr(Y=1|S=0))` under the desired head.
    pub group_means: (f64, f64),
    /// Desired minus observed decision probability, per row.
    pub corrections: Vec<f64>,
    /// Sensitive value of each row, aligned with `corrections`.
    pub s: Vec<u8>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "dataset,case,split,disparity,accuracy,cm,mean_y_s1,mean_y_s0";

    /// Within-split consistency contribution.
    pub fn consistency(&self) -> Result<f64> {
        split_variance(&self.s, &self.corrections)
    }

    pub fn csv_row(&self, dataset: &str, case: &str, split: usize) -> Result<String> {
        Ok(format!(
            "{dataset},{case},{split},{},{},{},{},{}",
            self.disparity,
            self.accuracy,
            self.consistency()?,
            self.group_means.0,
            self.group_means.1
        ))
    }
}

pub fn evaluate(params: &ModelParams, d: &Dataset) -> Result<EvalReport> {
    let disparity = outcome_disparity(params, d)?;
    let accuracy = decision_accuracy(params, d)?;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    let mut corrections = Vec::with_capacity(d.len());
    for r in &d.rows {
        let p_obs = params.forward_observed(&r.x, r.s)?;
        let p_des = params.forward_desired(&r.x, r.s)?;
        let q0 = params.forward_outcome(&r.x, r.s, 0)?;
        let q1 = params.forward_outcome(&r.x, r.s, 1)?;
        sums[r.s as usize] += q0 + (q1 - q0) * p_des;
        counts[r.s as usize] += 1;
        corrections.push(p_des - p_obs);
    }
    Ok(EvalReport {
        disparity,
        accuracy,
        group_means: (sums[1] / counts[1] as f64, sums[0] / counts[0] as f64),
        corrections,
        s: d.rows.iter().map(|r| r.s).collect(),
    })
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (sq, lin) = v.iter().fold((0.0, 0.0), |(sq, lin), &x| {
        let e = x - mean;
        (sq + e * e, lin + e)
    });
    // Corrected two-pass: the second term removes rounding in the mean.
    (sq - lin * lin / n) / n
}

fn split_variance(s: &[u8], corrections: &[f64]) -> Result<f64> {
    if s.len() != corrections.len() {
        return Err(Error::Dimension("sensitive values and corrections differ in length".into()));
    }
    let mut total = 0.0;
    for g in 0..2u8 {
        let vals: Vec<f64> = s
            .iter()
            .zip(corrections)
            .filter(|(&si, _)| si == g)
            .map(|(_, &c)| c)
            .collect();
        match vals.len() {
            0 => return Err(Error::Data(format!("group S={g} is empty"))),
            1 => log::warn!("group S={g} has a single row; its variance counts as 0"),
            n => total += n as f64 * population_variance(&vals),
        }
    }
    Ok(total / s.len() as f64)
}

/// Consistency measure: within-group variance of the corrections, weighted
/// by group size and averaged over splits. Each split is `(s, corrections)`.
pub fn consistency_measure(splits: &[(&[u8], &[f64])]) -> Result<f64> {
    if splits.is_empty() {
        return Err(Error::Data("need at least one split".into()));
    }
    let mut sum = 0.0;
    for (s, c) in splits {
        sum += split_variance(s, c)?;
    }
    Ok(sum / splits.len() as f64)
}

pub fn consistency_ratio(cm_other: f64, cm_lrd: f64) -> Result<f64> {
    if cm_lrd == 0.0 {
        return Err(Error::Config("consistency ratio needs a nonzero denominator".into()));
    }
    Ok(cm_other / cm_lrd)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    H,
    Y,
}

fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

/// Cross-entropy of the true-probability predictor, in nats.
pub fn optimal_bce(spec: &GeneratorSpec, target: Target) -> Result<f64> {
    spec.validate()?;
    Ok(spec
        .cells
        .iter()
        .map(|c| {
            c.mass
                * match target {
                    Target::H => binary_entropy(c.p_h),
                    Target::Y => c.p_h * binary_entropy(c.p_y[1]) + (1.0 - c.p_h) * binary_entropy(c.p_y[0]),
                }
        })
        .sum())
}

/// `|a·c + b|`.
pub fn decomposition(a: f64, b: f64, c: f64) -> f64 {
    (a * c + b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_thm42_data, Row};
    use crate::model::ArchitectureConfig;
    use proptest::prelude::*;

    fn hb(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    #[test]
    fn optimal_bce_matches_hand_expectation() {
        let spec = GeneratorSpec::thm42();
        let c = optimal_bce(&spec, Target::H).unwrap();
        assert!((c - 0.5 * (hb(0.6) + hb(0.3))).abs() < 1e-15);
        assert!((c - 0.641937984532075).abs() < 1e-12);
        // Y given h: each (s, x) cell has mass 1/4.
        let mut d = 0.0;
        for ph in [0.6, 0.3] {
            for (p0, p1) in [(0.3, 0.8), (0.2, 0.6)] {
                d += 0.25 * (ph * hb(p1) + (1.0 - ph) * hb(p0));
            }
        }
        let got = optimal_bce(&spec, Target::Y).unwrap();
        assert!((got - d).abs() < 1e-15);
        assert!((got - 0.5696165199112724).abs() < 1e-12);
    }

    #[test]
    fn optimal_bce_deterministic_is_zero() {
        let mut spec = GeneratorSpec::thm42();
        for c in &mut spec.cells {
            c.p_h = 1.0;
            c.p_y = [0.0, 1.0];
        }
        assert_eq!(optimal_bce(&spec, Target::H).unwrap(), 0.0);
        assert_eq!(optimal_bce(&spec, Target::Y).unwrap(), 0.0);
    }

    #[test]
    fn optimal_bce_matches_empirical_within_3_sigma() {
        let spec = GeneratorSpec::thm42();
        let n = 100_000;
        let d = gen_thm42_data(n, 11).unwrap();
        let cell = |r: &Row| spec.cells.iter().find(|c| c.s == r.s && c.x == r.x).unwrap();
        let nll = |p: f64, y: u8| if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
        for target in [Target::H, Target::Y] {
            let losses: Vec<f64> = d
                .rows
                .iter()
                .map(|r| {
                    let c = cell(r);
                    match target {
                        Target::H => nll(c.p_h, r.h),
                        Target::Y => nll(c.p_y[r.h as usize], r.y),
                    }
                })
                .collect();
            let mean = losses.iter().sum::<f64>() / n as f64;
            let sd = (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let opt = optimal_bce(&spec, target).unwrap();
            assert!((mean - opt).abs() < 3.0 * sd / (n as f64).sqrt(), "{target:?}: {mean} vs {opt}");
        }
    }

    #[test]
    fn decomposition_examples() {
        assert_eq!(decomposition(0.6, -0.06, 0.1), (0.6f64 * 0.1 - 0.06).abs());
        assert!((decomposition(0.6, 0.0572, 0.0953) - 0.11438).abs() < 1e-4);
        assert_eq!(decomposition(1.0, 0.0, 0.1), 0.1);
    }

    #[test]
    fn ratio() {
        assert!((consistency_ratio(0.2008, 0.0031).unwrap() - 64.774).abs() < 1e-2);
        assert_eq!(consistency_ratio(0.3, 0.3).unwrap(), 1.0);
        assert!(consistency_ratio(0.3, 0.0).is_err());
    }

    fn small_model(d: &Dataset) -> ModelParams {
        let arch = ArchitectureConfig::new(d.n_features(), 2, 1).unwrap();
        let flat: Vec<f64> = (0..arch.n_params()).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
        ModelParams::from_flat(arch, &flat).unwrap()
    }

    #[test]
    fn evaluation_is_consistent_with_objectives() {
        let d = gen_thm42_data(500, 3).unwrap();
        let p = small_model(&d);
        let r = evaluate(&p, &d).unwrap();
        let direct = objectives::disparity_loss(&p, &PatternTable::from_dataset(&d)).unwrap();
        assert_eq!(r.disparity, direct);
        assert!((r.disparity - (r.group_means.0 - r.group_means.1).abs()).abs() < 1e-12);
        assert_eq!(r.corrections.len(), d.len());
        assert!((0.0..=1.0).contains(&r.accuracy));
        let row = r.csv_row("thm42", "V", 0).unwrap();
        assert_eq!(row.split(',').count(), EvalReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn accuracy_complement_under_flip() {
        let d = gen_thm42_data(400, 8).unwrap();
        let p = small_model(&d);
        let acc = decision_accuracy(&p, &d).unwrap();
        let mut flipped = d.clone();
        for r in &mut flipped.rows {
            r.h = 1 - r.h;
        }
        assert_eq!(decision_accuracy(&p, &flipped).unwrap(), 1.0 - acc);
        let mut perfect = d.clone();
        for r in &mut perfect.rows {
            r.h = predict_desired(&p, &r.x, r.s).unwrap();
        }
        assert_eq!(decision_accuracy(&p, &perfect).unwrap(), 1.0);
    }

    #[test]
    fn disparity_zero_for_group_free_model() {
        let d = gen_thm42_data(300, 1).unwrap();
        let mut p = small_model(&d);
        // Remove every dependence on S.
        for i in 0..p.arch.m {
            p.set_w_rep(0, i, 0.0);
        }
        let l = p.layout();
        let mut flat = p.flatten();
        flat[l.outcome(0)] = 0.0;
        let p = ModelParams::from_flat(p.arch, &flat).unwrap();
        // Give both groups identical X rows.
        let rows: Vec<Row> = d
            .rows
            .iter()
            .flat_map(|r| [0u8, 1].map(|s| Row { s, ..r.clone() }))
            .collect();
        let doubled = Dataset::new(rows, d.feature_names.clone(), "S").unwrap();
        assert!(outcome_disparity(&p, &doubled).unwrap() < 1e-12);
    }

    #[test]
    fn cm_edge_cases() {
        let s = [0u8, 0, 1, 1, 1];
        assert_eq!(consistency_measure(&[(&s, &[0.0; 5])]).unwrap(), 0.0);
        let shifted = [0.2, 0.2, -0.1, -0.1, -0.1];
        assert!(consistency_measure(&[(&s, &shifted)]).unwrap().abs() < 1e-15);
        assert!(consistency_measure(&[(&[1, 1], &[0.1, 0.2])]).is_err());
        assert!(consistency_measure(&[]).is_err());
        // Singleton group counts as zero.
        let v = consistency_measure(&[(&[0, 1, 1], &[5.0, 0.0, 1.0])]).unwrap();
        assert!((v - 2.0 * 0.25 / 3.0).abs() < 1e-15);
    }

    fn two_pass(s: &[u8], c: &[f64]) -> f64 {
        let mut acc = 0.0;
        for g in 0..2u8 {
            let v: Vec<f64> = s.iter().zip(c).filter(|p| *p.0 == g).map(|p| *p.1).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            acc += v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
        }
        acc / s.len() as f64
    }

    proptest! {
        #[test]
        fn cm_matches_two_pass(
            splits in prop::collection::vec(prop::collection::vec((0u8..2, -1.0f64..1.0), 4..60), 1..5),
            shift in (-0.5f64..0.5, -0.5f64..0.5),
        ) {
            let mut data: Vec<(Vec<u8>, Vec<f64>)> = splits
                .into_iter()
                .map(|v| v.into_iter().unzip())
                .collect();
            for (s, _) in &mut data {
                s[0] = 0;
                s[1] = 0;
                s[2] = 1;
                s[3] = 1;
            }
            let refs: Vec<(&[u8], &[f64])> = data.iter().map(|(s, c)| (s.as_slice(), c.as_slice())).collect();
            let cm = consistency_measure(&refs).unwrap();
            let expect = data.iter().map(|(s, c)| two_pass(s, c)).sum::<f64>() / data.len() as f64;
            prop_assert!(cm >= 0.0);
            prop_assert!((cm - expect).abs() < 1e-12);
            let moved: Vec<(Vec<u8>, Vec<f64>)> = data
                .iter()
                .map(|(s, c)| {
                    let c2 = s.iter().zip(c).map(|(&g, &x)| x + if g == 1 { shift.1 } else { shift.0 }).collect();
                    (s.clone(), c2)
                })
                .collect();
            let refs2: Vec<(&[u8], &[f64])> = moved.iter().map(|(s, c)| (s.as_slice(), c.as_slice())).collect();
            prop_assert!((consistency_measure(&refs2).unwrap() - cm).abs() < 1e-12);
        }
    }
}
