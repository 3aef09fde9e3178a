//! Canonical CSV: header `S,X_1..X_n,H,Y`, values 0/1.
//!
//! Human-readable feature names go to an optional sidecar file next to the
//! CSV (`<file>.names`, one name per line).

use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Dataset, RawTable, Row};
use crate::error::{Error, Result};

pub fn names_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".names");
    PathBuf::from(s)
}

pub fn canonical_header(n: usize) -> Vec<String> {
    let mut h = vec!["S".to_string()];
    h.extend(Dataset::default_names(n));
    h.push("H".into());
    h.push("Y".into());
    h
}

pub fn to_raw(d: &Dataset) -> RawTable {
    let rows = d
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.s.to_string()];
            v.extend(r.x.iter().map(|b| b.to_string()));
            v.push(r.h.to_string());
            v.push(r.y.to_string());
            v
        })
        .collect();
    RawTable {
        headers: canonical_header(d.n_features()),
        rows,
    }
}

pub fn write_canonical(path: &Path, d: &Dataset, with_names: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{}", canonical_header(d.n_features()).join(","))?;
    let mut line = String::with_capacity(2 * d.n_features() + 8);
    for r in &d.rows {
        line.clear();
        line.push((b'0' + r.s) as char);
        for &b in &r.x {
            line.push(',');
            line.push((b'0' + b) as char);
        }
        line.push(',');
        line.push((b'0' + r.h) as char);
        line.push(',');
        line.push((b'0' + r.y) as char);
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    if with_names {
        let mut text = format!("{}\n", d.sensitive_name);
        for n in &d.feature_names {
            text.push_str(n);
            text.push('\n');
        }
        std::fs::write(names_path(path), text)?;
    }
    Ok(())
}

fn bit(v: &str, path: &Path, line: usize) -> Result<u8> {
    match v.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::parse(path, line, format!("expected 0/1, got {other:?}"))),
    }
}

/// Read a canonical CSV, picking up the names sidecar when present.
pub fn read_canonical(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.len() < 3 {
        return Err(Error::parse(path, 1, "need at least S,H,Y columns"));
    }
    let n = headers.len() - 3;
    if headers != canonical_header(n) {
        return Err(Error::parse(path, 1, "header must be S,X_1..X_n,H,Y"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != n + 3 {
            return Err(Error::parse(path, line, "wrong field count"));
        }
        let x = (1..=n)
            .map(|j| bit(&rec[j], path, line))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            s: bit(&rec[0], path, line)?,
            x,
            h: bit(&rec[n + 1], path, line)?,
            y: bit(&rec[n + 2], path, line)?,
        });
    }
    let (sensitive, names) = match std::fs::read_to_string(names_path(path)) {
        Ok(text) => {
            let mut lines = text.lines().map(str::to_string);
            let s = lines.next().unwrap_or_else(|| "S".into());
            let names: Vec<String> = lines.collect();
            if names.len() != n {
                return Err(Error::Data(format!(
                    "names sidecar lists {} features, data has {n}",
                    names.len()
                )));
            }
            (s, names)
        }
        Err(_) => ("S".to_string(), Dataset::default_names(n)),
    };
    Dataset::new(rows, names, sensitive)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_and_without_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let rows = vec![
            Row { s: 1, x: vec![0, 1], h: 1, y: 0 },
            Row { s: 0, x: vec![1, 1], h: 0, y: 1 },
        ];
        let d = Dataset::new(rows, vec!["a=1".into(), "b>=3".into()], "age").unwrap();
        write_canonical(&p, &d, true).unwrap();
        assert_eq!(read_canonical(&p).unwrap(), d);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("S,X_1,X_2,H,Y\n1,0,1,1,0\n"));
        std::fs::remove_file(names_path(&p)).unwrap();
        let plain = read_canonical(&p).unwrap();
        assert_eq!(plain.rows, d.rows);
        assert_eq!(plain.feature_names, vec!["X_1", "X_2"]);
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "S,H,Y\n1,2,0\n").unwrap();
        assert!(matches!(read_canonical(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "S,Q,Y\n1,1,0\n").unwrap();
        assert!(read_canonical(&p).is_err());
    }
}
