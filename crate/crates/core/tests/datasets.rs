use std::path::{Path, PathBuf};

use disparity_lab::data::{self, io, OutcomeCase, OutcomeCaseConfig, RawTable, Schema};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn load(dir: &Path, files: &[&str]) -> disparity_lab::data::Dataset {
    let schema = Schema::load(&dir.join("schema.txt")).unwrap();
    let paths: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    data::preprocess(&RawTable::read(&refs, &schema).unwrap(), &schema).unwrap()
}

#[test]
fn german_preprocesses_to_61_features() {
    let d = load(&data_dir().join("german"), &["german_credit.csv"]);
    assert_eq!(d.n_features(), 61);
    assert_eq!(d.len(), 1000);
    assert_eq!(d.sensitive_name, "age_in_years");
    // Median age 33; older applicants are more often rated good.
    let c = d.decision_gap().unwrap();
    assert!((c - 0.0925).abs() < 1e-3, "{c}");
    assert!(d.feature_names.iter().any(|n| n == "age_in_years>=33"));
    let cfg = OutcomeCaseConfig::for_dataset(OutcomeCase::I, &d, false).unwrap();
    assert!((cfg.b_param - 0.6 * c).abs() < 1e-12);
}

#[test]
fn german_canonical_roundtrip_is_idempotent() {
    let d = load(&data_dir().join("german"), &["german_credit.csv"]);
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("german.csv");
    io::write_canonical(&p, &d, true).unwrap();
    let back = io::read_canonical(&p).unwrap();
    assert_eq!(back, d);
    let again = data::preprocess(&io::to_raw(&back), &Schema::canonical(back.n_features())).unwrap();
    assert_eq!(again.rows, d.rows);
}

/// P(H=1 | female) - P(H=1 | male), straight from the raw lines.
fn raw_gap(paths: &[PathBuf]) -> f64 {
    let mut n = [[0u32; 2]; 2];
    for p in paths {
        for line in std::fs::read_to_string(p).unwrap().lines() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 15 || f.contains(&"?") {
                continue;
            }
            let s = usize::from(f[9] == "Female");
            let h = usize::from(f[14].starts_with(">50K"));
            n[s][h] += 1;
        }
    }
    let rate = |s: usize| f64::from(n[s][1]) / f64::from(n[s][0] + n[s][1]);
    rate(1) - rate(0)
}

/// Needs the UCI files; set `ADULT_DIR`.
#[test]
fn adult_preprocesses_to_103_features() {
    let Ok(dir) = std::env::var("ADULT_DIR") else {
        eprintln!("ADULT_DIR not set; skipping");
        return;
    };
    let dir = PathBuf::from(dir);
    let schema_dir = data_dir().join("adult");
    let schema = Schema::load(&schema_dir.join("schema.txt")).unwrap();
    let paths = [dir.join("adult.data"), dir.join("adult.test")];
    let refs: Vec<&Path> = paths.iter().map(PathBuf::as_path).collect();
    let d = data::preprocess(&RawTable::read(&refs, &schema).unwrap(), &schema).unwrap();
    assert_eq!(d.n_features(), 103);
    assert_eq!(d.len(), 45_222);
    let c = d.decision_gap().unwrap();
    let oracle = raw_gap(&paths);
    assert!((c - oracle).abs() < 1e-12, "{c} vs {oracle}");
    assert!(c < 0.0);
    assert!(OutcomeCaseConfig::for_dataset(OutcomeCase::I, &d, false).is_err());
    let clipped = OutcomeCaseConfig::for_dataset(OutcomeCase::I, &d, true).unwrap();
    assert!((clipped.b_param + 0.1).abs() < 1e-12);
}
