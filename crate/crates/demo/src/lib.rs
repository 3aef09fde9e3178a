//! Browser bindings: single-node optima, branch loss curves and a small
//! two-phase training run. Every export returns a JSON string.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use disparity_lab::data::{synthetic, PatternTable};
use disparity_lab::model::{ArchitectureConfig, ModelParams};
use disparity_lab::objectives::LossWeights;
use disparity_lab::theory::{self, Branch, TheoremScenario};
use disparity_lab::training::{self, Phase2Init, TrainConfig, UnitInit};

const BRANCHES: [Branch; 4] = [Branch::L1, Branch::L2, Branch::L3, Branch::L4];

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn scenario(delta: f64, alpha: f64, logit_o0: f64, a: f64) -> Result<TheoremScenario, JsError> {
    TheoremScenario::new(delta, alpha, logit_o0, a).map_err(err)
}

pub fn optimum_json(delta: f64, alpha: f64, logit_o0: f64, a: f64) -> disparity_lab::Result<Value> {
    let sc = TheoremScenario::new(delta, alpha, logit_o0, a)?;
    let r = theory::thm43_optimum(&sc)?;
    let branches: Vec<Value> = r
        .branches
        .iter()
        .map(|m| {
            json!({
                "branch": m.branch.to_string(),
                "loss": finite(m.loss),
                "b": finite(m.b),
                "interior": m.interior.map(|(l, b)| json!([l, b])),
            })
        })
        .collect();
    Ok(json!({
        "branch": r.branch.to_string(),
        "l_min": r.l_min,
        "b_opti": r.b_opti,
        "weights": [r.weights.w, r.weights.w_sr, r.weights.bias],
        "bound": sc.feasible_bound(),
        "no_change": sc.no_change_loss(),
        "branches": branches,
    }))
}

pub fn curves_json(delta: f64, alpha: f64, logit_o0: f64, a: f64, points: usize) -> disparity_lab::Result<Value> {
    let sc = TheoremScenario::new(delta, alpha, logit_o0, a)?;
    let bound = sc.feasible_bound();
    // Past the feasible bound, so interior minima show up on the plot.
    let hi = 2.0 * bound.max(1.0);
    let n = points.clamp(2, 2000);
    let bs: Vec<f64> = (0..n).map(|k| hi * k as f64 / (n - 1) as f64).collect();
    let mut curves = serde_json::Map::new();
    for br in BRANCHES {
        let ys: Vec<Value> = bs.iter().map(|&b| finite(theory::single_unit_loss(&sc, &br.weights(b)))).collect();
        curves.insert(br.to_string(), Value::Array(ys));
    }
    Ok(json!({ "b": bs, "bound": bound, "no_change": sc.no_change_loss(), "curves": curves }))
}

fn unit_json(p: &ModelParams, i: usize) -> Value {
    let (_, w_s, bias, w_head) = p.unit(i);
    json!({ "w_head": w_head, "w_s": w_s, "bias": bias })
}

pub fn train_json(w_head: f64, w_s: f64, bias: f64, epochs: usize, lr: f64, seed: u64) -> disparity_lab::Result<Value> {
    let d = synthetic::gen_thm43_data(20_000, seed)?;
    let table = PatternTable::from_dataset(&d);
    let arch = ArchitectureConfig::new(0, 3, 2)?;
    let w = LossWeights::custom(0.9, 0.1, 1000.0, 1000.0)?;
    // A few restarts; a single draw can leave the observed unit dead.
    let p1 = TrainConfig {
        fits: 5,
        learning_rate: 0.1,
        master_seed: seed,
        log_every: 0,
        ..TrainConfig::default()
    };
    let frozen = training::train_phase1(&table, arch, &w, &p1)?.best.params;
    let l0 = frozen.observed_logit(&[], 0);
    let delta = frozen.observed_logit(&[], 1) - l0;
    let mut alpha = 0.0;
    for s in 0..2u8 {
        alpha += (frozen.forward_outcome(&[], s, 1)? - frozen.forward_outcome(&[], s, 0)?) / 2.0;
    }
    let p2 = TrainConfig {
        epochs: epochs.clamp(1, 20_000),
        learning_rate: lr,
        log_every: (epochs / 200).max(1),
        ..p1
    };
    let init = Phase2Init::Fixed(vec![UnitInit {
        w_x: vec![],
        w_s,
        bias,
        w_head,
    }]);
    let r = training::train_phase2(&table, &frozen, &w, &p2, &init)?;
    let curve: Vec<Value> = r
        .logs
        .iter()
        .map(|l| json!([l.epoch, l.losses.fairness_part(&w)]))
        .collect();
    let best = &r.best;
    let shift = (0..2u8).map(|s| best.params.disparity_logit(&[], s).abs()).fold(0.0, f64::max);
    let gap = d.decision_gap()?;
    Ok(json!({
        "scenario": { "delta": delta, "alpha": alpha, "logit_o0": l0, "a": w.a, "decision_gap": gap },
        "curve": curve,
        "final": {
            "fair_loss": best.final_losses.fairness_part(&w),
            "disparity": best.final_losses.disparity,
            "shift": shift,
            "unit": unit_json(&best.params, arch.m_obs),
        },
        "theory": optimum_json(delta, alpha, l0, w.a)?,
    }))
}

/// Optimal single-node branch for a scenario.
#[wasm_bindgen]
pub fn optimum(delta: f64, alpha: f64, logit_o0: f64, a: f64) -> Result<String, JsError> {
    scenario(delta, alpha, logit_o0, a)?;
    Ok(optimum_json(delta, alpha, logit_o0, a).map_err(err)?.to_string())
}

/// Loss along each branch as a function of the shift size.
#[wasm_bindgen]
pub fn branch_curves(delta: f64, alpha: f64, logit_o0: f64, a: f64, points: usize) -> Result<String, JsError> {
    Ok(curves_json(delta, alpha, logit_o0, a, points).map_err(err)?.to_string())
}

/// Fit the heads on generated data, then train one disparity unit from the given start.
#[wasm_bindgen]
pub fn train_unit(w_head: f64, w_s: f64, bias: f64, epochs: usize, lr: f64, seed: u32) -> Result<String, JsError> {
    Ok(train_json(w_head, w_s, bias, epochs, lr, seed as u64).map_err(err)?.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_matches_core() {
        let v = optimum_json(5.0, 1.0, -4.595, 0.9).unwrap();
        assert_eq!(v["branch"], "L1");
        assert!((v["l_min"].as_f64().unwrap() - 0.4).abs() < 0.01);
        assert!(v["branches"].as_array().unwrap().iter().any(|b| b["branch"] == "L1"));
    }

    #[test]
    fn curves_start_at_no_change() {
        let v = curves_json(5.0, 1.0, -4.595, 0.9, 50).unwrap();
        assert_eq!(v["b"].as_array().unwrap().len(), 50);
        let l0 = v["no_change"].as_f64().unwrap();
        for br in ["L1", "L2", "L3", "L4"] {
            let y0 = v["curves"][br][0].as_f64().unwrap();
            assert!((y0 - l0).abs() < 1e-12, "{br}");
        }
    }

    #[test]
    fn training_reaches_the_l1_branch() {
        let v = train_json(-1.735, 1.735, 0.0, 1000, 0.01, 1).unwrap();
        let fin = v["final"]["fair_loss"].as_f64().unwrap();
        let pred = v["theory"]["branches"]
            .as_array()
            .unwrap()
            .iter()
            .find(|b| b["branch"] == "L1")
            .and_then(|b| b["loss"].as_f64())
            .unwrap();
        assert!((fin - pred).abs() < 0.02, "{fin} vs {pred}");
        assert!(!v["curve"].as_array().unwrap().is_empty());
    }

    #[test]
    fn bad_scenario_is_an_error() {
        assert!(optimum_json(5.0, 1.0, 0.0, 1.5).is_err());
    }
}
