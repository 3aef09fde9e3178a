use std::path::Path;
use std::process::{Command, Output};

use disparity_lab::data::io;
use disparity_lab::model::ModelParams;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disparity-lab"))
        .args(args)
        .env_remove("DISPARITY_LAB_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn gen_is_reproducible_and_canonical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    for p in [&a, &b] {
        let o = bin(&["gen", "--name", "thm42", "--n", "2000", "--seed", "5", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let d = io::read_canonical(&a).unwrap();
    assert_eq!((d.len(), d.n_features()), (2000, 1));
    let t = tmp.path().join("t.csv");
    assert!(bin(&["gen", "--name", "thm43", "--n", "50", "--out", t.to_str().unwrap()]).status.success());
    assert!(std::fs::read_to_string(&t).unwrap().starts_with("S,H,Y\n"));
}

#[test]
fn theorem_outputs() {
    let o = bin(&["theorem", "--thm", "4.1", "--delta", "5"]);
    assert!(o.status.success());
    let l: f64 = field(&stdout(&o), "l_min").parse().unwrap();
    assert!((l - 4.4721).abs() < 1e-4);

    let o = bin(&["theorem", "--thm", "4.3", "--a", "0.9", "--logit-o0", "-4.595", "--delta", "5", "--verify", "--grid-points", "61"]);
    let s = stdout(&o);
    assert!(o.status.success(), "{s}");
    assert_eq!(field(&s, "branch"), "L1");
    let l: f64 = field(&s, "l_min").parse().unwrap();
    assert!((l - 0.4).abs() < 0.01);
    assert_eq!(field(&s, "verify"), "PASS");

    let o = bin(&["theorem", "--thm", "4.2", "--delta", "-1.2528", "--k", "3"]);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("solution")).count(), 3);
    assert!(!bin(&["theorem", "--thm", "4.1", "--delta", "0"]).status.success());
}

#[test]
fn preprocess_then_experiment_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let german = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/german");
    let canon = tmp.path().join("german.csv");
    let o = bin(&[
        "preprocess",
        "--raw",
        german.join("german_credit.csv").to_str().unwrap(),
        "--schema",
        german.join("schema.txt").to_str().unwrap(),
        "--out",
        canon.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = io::read_canonical(&canon).unwrap();
    assert_eq!(d.n_features(), 61);
    assert_eq!(d.feature_names.len(), 61);

    let cfg = tmp.path().join("exp.txt");
    std::fs::write(
        &cfg,
        "dataset = german.csv\ncase = V\nsplits = 1\nepochs = 1\nphase1_fits = 1\nphase2_fits = 1\nm_obs = 1\noutput = out\n",
    )
    .unwrap();
    let o = bin(&["experiment", "--config", cfg.to_str().unwrap(), "--set", "case=II", "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    for f in ["summary.csv", "eval.csv", "consistency.txt", "failures.log", "config.txt", "split_0/params.txt", "split_0/phase1_log.csv", "split_0/phase2_log.csv", "split_0/phase2_loss.tsv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(summary.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["dataset", "case", "split", "disparity", "accuracy", "A", "B", "C", "D"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][1], "II");
    assert_eq!(&rows[1][2], "mean");
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), rows[1][3].parse::<f64>().unwrap());
    let eval = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(csv::Reader::from_reader(eval.as_bytes()).records().count(), 1);
    for log in ["phase1_log.csv", "phase2_log.csv"] {
        let text = std::fs::read_to_string(out.join("split_0").join(log)).unwrap();
        let mut r = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(r.headers().unwrap().len(), 7);
        for rec in r.records() {
            for v in rec.unwrap().iter().skip(2) {
                assert!(v.parse::<f64>().unwrap().is_finite());
            }
        }
    }
    let params = out.join("split_0/params.txt");
    assert_eq!(ModelParams::load(&params).unwrap().arch.n_features, 61);

    let o = bin(&["eval", "--params", params.to_str().unwrap(), "--data", canon.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);

    // A failing split yields a nonzero exit and a failures log entry.
    let o = bin(&["experiment", "--config", cfg.to_str().unwrap(), "--set", "m_obs=auto", "--set", "m_obs_candidates=70"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!std::fs::read_to_string(out.join("failures.log")).unwrap().is_empty());
}

#[test]
fn seed_env_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.txt");
    std::fs::write(&cfg, "generator = thm42\nn = 300\nsplits = 1\nepochs = 2\nphase1_fits = 1\nphase2_fits = 1\nm_obs = 1\nmaster_seed = 1\n").unwrap();
    let run = |seed: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_disparity-lab"));
        c.args(["experiment", "--config", cfg.to_str().unwrap(), "--set", &format!("output={out}")]);
        match seed {
            Some(s) => c.env("DISPARITY_LAB_SEED", s),
            None => c.env_remove("DISPARITY_LAB_SEED"),
        };
        assert!(c.output().unwrap().status.success());
        std::fs::read_to_string(tmp.path().join(out).join("config.txt")).unwrap()
    };
    assert!(run(None, "a").contains("master_seed = 1\n"));
    assert!(run(Some("77"), "b").contains("master_seed = 77\n"));
}
