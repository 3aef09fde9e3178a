//! Raw tabular data to binary datasets.
//!
//! A schema file lists one column per line as `name,kind[:arg]`. Lines
//! starting with `#` are comments and `@key value` lines set reader options.
//!
//! | kind | effect |
//! |------|--------|
//! | `categorical` | one-hot over the sorted distinct values |
//! | `numeric` | `value >= median` |
//! | `binary:v` | `value == v` |
//! | `sensitive:rule` | becomes `S`; rule is `median`, `ge:t`, `gt:t` or `eq:v` |
//! | `target:v` | becomes `H` |
//! | `outcome:v` | becomes `Y` (defaults to `H` when absent) |
//! | `drop` | ignored |
//!
//! Values may list alternatives separated by `|`. A name ending in `?` marks
//! an optional column that is dropped when it has no values at all. Rows with
//! a missing value (`?` or empty) in any used column are removed. Medians and
//! category lists are fitted on the table passed to [`Preprocessor::fit`].
//!
//! Options: `@header true|false` and `@comment c`.

use std::collections::BTreeSet;
use std::path::Path;

use super::{Dataset, Row};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SensitiveRule {
    Median,
    Ge(f64),
    Gt(f64),
    Eq(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnKind {
    Categorical,
    Numeric,
    Binary(Vec<String>),
    Sensitive(SensitiveRule),
    Target(Vec<String>),
    Outcome(Vec<String>),
    Drop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub optional: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    pub has_header: bool,
    pub comment: Option<u8>,
}

fn alternatives(arg: &str) -> Vec<String> {
    arg.split('|').map(|s| s.trim().to_string()).collect()
}

impl Schema {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut schema = Schema {
            columns: Vec::new(),
            has_header: true,
            comment: None,
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |m: String| Error::parse(path, ln + 1, m);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(opt) = line.strip_prefix('@') {
                let (k, v) = opt.split_once(char::is_whitespace).unwrap_or((opt, ""));
                match (k, v.trim()) {
                    ("header", "true") => schema.has_header = true,
                    ("header", "false") => schema.has_header = false,
                    ("comment", c) if c.len() == 1 => schema.comment = Some(c.as_bytes()[0]),
                    _ => return Err(err(format!("unknown option {line:?}"))),
                }
                continue;
            }
            let (name, kind) = line
                .split_once(',')
                .ok_or_else(|| err("expected name,kind".into()))?;
            let (name, optional) = match name.trim().strip_suffix('?') {
                Some(n) => (n.to_string(), true),
                None => (name.trim().to_string(), false),
            };
            let (k, arg) = match kind.trim().split_once(':') {
                Some((k, a)) => (k, Some(a)),
                None => (kind.trim(), None),
            };
            let need = |a: Option<&'_ str>| -> Result<String> {
                a.map(str::to_string)
                    .ok_or_else(|| err(format!("{k} needs an argument")))
            };
            let kind = match k {
                "categorical" => ColumnKind::Categorical,
                "numeric" => ColumnKind::Numeric,
                "drop" => ColumnKind::Drop,
                "binary" => ColumnKind::Binary(alternatives(&need(arg)?)),
                "target" => ColumnKind::Target(alternatives(&need(arg)?)),
                "outcome" => ColumnKind::Outcome(alternatives(&need(arg)?)),
                "sensitive" => {
                    let a = need(arg)?;
                    let (rule, v) = a.split_once(':').unwrap_or((a.as_str(), ""));
                    let num = |v: &str| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| err(format!("bad threshold {v:?}")))
                    };
                    ColumnKind::Sensitive(match rule {
                        "median" => SensitiveRule::Median,
                        "ge" => SensitiveRule::Ge(num(v)?),
                        "gt" => SensitiveRule::Gt(num(v)?),
                        "eq" => SensitiveRule::Eq(alternatives(v)),
                        _ => return Err(err(format!("unknown sensitive rule {a:?}"))),
                    })
                }
                _ => return Err(err(format!("unknown column kind {k:?}"))),
            };
            schema.columns.push(ColumnSpec {
                name,
                kind,
                optional,
            });
        }
        let count = |f: fn(&ColumnKind) -> bool| schema.columns.iter().filter(|c| f(&c.kind)).count();
        if count(|k| matches!(k, ColumnKind::Sensitive(_))) != 1 {
            return Err(Error::Schema("exactly one sensitive column required".into()));
        }
        if count(|k| matches!(k, ColumnKind::Target(_))) != 1 {
            return Err(Error::Schema("exactly one target column required".into()));
        }
        if count(|k| matches!(k, ColumnKind::Outcome(_))) > 1 {
            return Err(Error::Schema("at most one outcome column allowed".into()));
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Schema of the canonical `S, X_1..X_n, H, Y` layout.
    pub fn canonical(n_features: usize) -> Self {
        let one = || vec!["1".to_string()];
        let mut columns = vec![ColumnSpec {
            name: "S".into(),
            kind: ColumnKind::Sensitive(SensitiveRule::Eq(one())),
            optional: false,
        }];
        for i in 1..=n_features {
            columns.push(ColumnSpec {
                name: format!("X_{i}"),
                kind: ColumnKind::Binary(one()),
                optional: false,
            });
        }
        columns.push(ColumnSpec {
            name: "H".into(),
            kind: ColumnKind::Target(one()),
            optional: false,
        });
        columns.push(ColumnSpec {
            name: "Y".into(),
            kind: ColumnKind::Outcome(one()),
            optional: false,
        });
        Self {
            columns,
            has_header: true,
            comment: None,
        }
    }

    /// Distinct column names in first-mention order.
    pub fn column_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.columns
            .iter()
            .filter(|c| seen.insert(c.name.clone()))
            .map(|c| c.name.clone())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    /// Read one or more delimited files with the schema's reader options.
    ///
    /// Headerless files take their column names from the schema.
    pub fn read(paths: &[&Path], schema: &Schema) -> Result<Self> {
        let mut table: Option<RawTable> = None;
        for path in paths {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(schema.has_header)
                .trim(csv::Trim::All)
                .comment(schema.comment)
                .flexible(false)
                .from_path(path)?;
            let headers = if schema.has_header {
                rdr.headers()?.iter().map(str::to_string).collect()
            } else {
                schema.column_names()
            };
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                if rec.len() == 1 && rec[0].is_empty() {
                    continue;
                }
                if rec.len() != headers.len() {
                    let line = rec.position().map_or(0, |p| p.line() as usize);
                    return Err(Error::parse(
                        *path,
                        line,
                        format!("{} fields, expected {}", rec.len(), headers.len()),
                    ));
                }
                rows.push(rec.iter().map(str::to_string).collect());
            }
            match &mut table {
                None => table = Some(RawTable { headers, rows }),
                Some(t) => {
                    if t.headers != headers {
                        return Err(Error::Schema(format!(
                            "{} has different columns",
                            path.display()
                        )));
                    }
                    t.rows.extend(rows);
                }
            }
        }
        table.ok_or_else(|| Error::Config("no input files".into()))
    }
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || v == "?"
}

#[derive(Clone, Debug, PartialEq)]
enum Fitted {
    OneHot(Vec<String>),
    Threshold(f64),
    Match(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
struct FittedColumn {
    col: usize,
    spec: ColumnSpec,
    fitted: Fitted,
}

/// Fitted schema: medians and category lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    columns: Vec<FittedColumn>,
    used: Vec<usize>,
    sensitive_name: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn parse_num(v: &str, col: &str, row: usize) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Data(format!("row {row}: column {col:?} value {v:?} is not numeric")))
}

impl Preprocessor {
    pub fn fit(raw: &RawTable, schema: &Schema) -> Result<Self> {
        let index = |name: &str| raw.headers.iter().position(|h| h == name);
        for h in &raw.headers {
            if !schema.columns.iter().any(|c| &c.name == h) {
                return Err(Error::Schema(format!("column {h:?} is not covered by the schema")));
            }
        }
        let mut present = Vec::new();
        for spec in &schema.columns {
            let col = match index(&spec.name) {
                Some(c) => c,
                None if spec.optional => continue,
                None => {
                    return Err(Error::Schema(format!("column {:?} missing from data", spec.name)))
                }
            };
            if spec.kind == ColumnKind::Drop {
                continue;
            }
            let empty = raw.rows.iter().all(|r| is_missing(&r[col]));
            if empty {
                if spec.optional {
                    log::info!("dropping empty optional column {:?}", spec.name);
                    continue;
                }
                return Err(Error::Schema(format!("column {:?} is empty", spec.name)));
            }
            present.push((col, spec.clone()));
        }
        let mut used: Vec<usize> = present.iter().map(|(c, _)| *c).collect();
        used.sort_unstable();
        used.dedup();
        let complete: Vec<&Vec<String>> = raw
            .rows
            .iter()
            .filter(|r| used.iter().all(|&c| !is_missing(&r[c])))
            .collect();

        let mut columns = Vec::new();
        let mut sensitive_name = String::new();
        for (col, spec) in present {
            let values = || complete.iter().map(|r| r[col].as_str());
            let threshold = || -> Result<f64> {
                let nums = values()
                    .enumerate()
                    .map(|(i, v)| parse_num(v, &spec.name, i))
                    .collect::<Result<Vec<_>>>()?;
                if nums.is_empty() {
                    return Err(Error::Schema(format!("column {:?} has no complete rows", spec.name)));
                }
                Ok(median(nums))
            };
            let fitted = match &spec.kind {
                ColumnKind::Categorical => {
                    let cats: BTreeSet<&str> = values().collect();
                    Fitted::OneHot(cats.into_iter().map(str::to_string).collect())
                }
                ColumnKind::Numeric => Fitted::Threshold(threshold()?),
                ColumnKind::Sensitive(rule) => {
                    sensitive_name = spec.name.clone();
                    match rule {
                        SensitiveRule::Median => Fitted::Threshold(threshold()?),
                        SensitiveRule::Ge(t) => Fitted::Threshold(*t),
                        SensitiveRule::Gt(t) => Fitted::Threshold(*t),
                        SensitiveRule::Eq(v) => Fitted::Match(v.clone()),
                    }
                }
                ColumnKind::Binary(v) | ColumnKind::Target(v) | ColumnKind::Outcome(v) => {
                    Fitted::Match(v.clone())
                }
                ColumnKind::Drop => unreachable!(),
            };
            columns.push(FittedColumn { col, spec, fitted });
        }
        Ok(Self {
            columns,
            used,
            sensitive_name,
        })
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for c in &self.columns {
            match (&c.spec.kind, &c.fitted) {
                (ColumnKind::Categorical, Fitted::OneHot(cats)) => {
                    names.extend(cats.iter().map(|v| format!("{}={v}", c.spec.name)))
                }
                (ColumnKind::Numeric, Fitted::Threshold(t)) => {
                    names.push(format!("{}>={t}", c.spec.name))
                }
                (ColumnKind::Binary(_), _) => names.push(c.spec.name.clone()),
                _ => {}
            }
        }
        names
    }

    pub fn apply(&self, raw: &RawTable) -> Result<Dataset> {
        let mut rows = Vec::new();
        let mut dropped = 0usize;
        let mut unknown = 0usize;
        for (i, r) in raw.rows.iter().enumerate() {
            if self.used.iter().any(|&c| is_missing(&r[c])) {
                dropped += 1;
                continue;
            }
            let mut row = Row {
                s: 0,
                x: Vec::new(),
                h: 0,
                y: 0,
            };
            let mut has_y = false;
            for c in &self.columns {
                let v = r[c.col].as_str();
                let matches = |alts: &Vec<String>| alts.iter().any(|a| a == v) as u8;
                match (&c.spec.kind, &c.fitted) {
                    (ColumnKind::Categorical, Fitted::OneHot(cats)) => {
                        let hit = cats.iter().position(|k| k == v);
                        if hit.is_none() {
                            unknown += 1;
                        }
                        row.x.extend((0..cats.len()).map(|k| (Some(k) == hit) as u8));
                    }
                    (ColumnKind::Numeric, Fitted::Threshold(t)) => {
                        row.x.push((parse_num(v, &c.spec.name, i)? >= *t) as u8)
                    }
                    (ColumnKind::Binary(_), Fitted::Match(alts)) => row.x.push(matches(alts)),
                    (ColumnKind::Sensitive(rule), fitted) => {
                        row.s = match (rule, fitted) {
                            (SensitiveRule::Gt(_), Fitted::Threshold(t)) => {
                                (parse_num(v, &c.spec.name, i)? > *t) as u8
                            }
                            (_, Fitted::Threshold(t)) => (parse_num(v, &c.spec.name, i)? >= *t) as u8,
                            (_, Fitted::Match(alts)) => matches(alts),
                            _ => unreachable!(),
                        }
                    }
                    (ColumnKind::Target(_), Fitted::Match(alts)) => row.h = matches(alts),
                    (ColumnKind::Outcome(_), Fitted::Match(alts)) => {
                        row.y = matches(alts);
                        has_y = true;
                    }
                    _ => unreachable!(),
                }
            }
            if !has_y {
                row.y = row.h;
            }
            rows.push(row);
        }
        if dropped > 0 {
            log::info!("dropped {dropped} rows with missing values");
        }
        if unknown > 0 {
            log::warn!("{unknown} unseen category values encoded as all zeros");
        }
        Dataset::new(rows, self.feature_names(), self.sensitive_name.clone())
    }
}

/// Fit on `raw` and apply to it.
pub fn preprocess(raw: &RawTable, schema: &Schema) -> Result<Dataset> {
    Preprocessor::fit(raw, schema)?.apply(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(headers: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    fn schema(text: &str) -> Schema {
        Schema::parse(text, Path::new("test.schema")).unwrap()
    }

    #[test]
    fn one_hot_median_and_missing_rows() {
        let s = schema("color,categorical\nage,numeric\nage,sensitive:median\nok,target:yes\nid,drop\n");
        let t = raw(
            &["id", "color", "age", "ok"],
            &[
                &["1", "red", "30", "yes"],
                &["2", "blue", "40", "no"],
                &["3", "?", "50", "yes"],
                &["4", "red", "20", "no"],
            ],
        );
        let d = preprocess(&t, &s).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.feature_names, vec!["color=blue", "color=red", "age>=30"]);
        assert_eq!(d.rows[0].x, vec![0, 1, 1]);
        assert_eq!(d.rows[2].x, vec![0, 1, 0]);
        assert_eq!([d.rows[0].s, d.rows[1].s, d.rows[2].s], [1, 1, 0]);
        assert_eq!(d.rows[0].h, 1);
        assert_eq!(d.rows[0].y, 1);
        assert_eq!(d.sensitive_name, "age");
    }

    #[test]
    fn unknown_category_is_all_zero() {
        let s = schema("c,categorical\ng,sensitive:eq:F\nt,target:1\n");
        let fit = Preprocessor::fit(&raw(&["c", "g", "t"], &[&["a", "F", "1"], &["b", "M", "0"]]), &s).unwrap();
        let d = fit.apply(&raw(&["c", "g", "t"], &[&["z", "M", "1"]])).unwrap();
        assert_eq!(d.rows[0].x, vec![0, 0]);
    }

    #[test]
    fn optional_empty_column_dropped() {
        let s = schema("c,categorical\nextra?,categorical\ng,sensitive:gt:1\nt,target:1\n");
        let d = preprocess(
            &raw(&["c", "extra", "g", "t"], &[&["a", "", "2", "1"], &["b", "", "1", "0"]]),
            &s,
        )
        .unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!((d.rows[0].s, d.rows[1].s), (1, 0));
        let strict = schema("c,categorical\nextra,categorical\ng,sensitive:gt:1\nt,target:1\n");
        assert!(matches!(
            preprocess(&raw(&["c", "extra", "g", "t"], &[&["a", "", "2", "1"]]), &strict),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn schema_errors() {
        let p = Path::new("s");
        assert!(Schema::parse("a,categorical\n", p).is_err());
        assert!(Schema::parse("a,sensitive:median\nb,target:1\nc,wat\n", p).is_err());
        assert!(Schema::parse("a,sensitive:oops\nb,target:1\n", p).is_err());
        let s = schema("a,sensitive:median\nb,target:1\n");
        assert!(Preprocessor::fit(&raw(&["a", "b", "c"], &[&["1", "1", "x"]]), &s).is_err());
    }

    #[test]
    fn canonical_schema_is_idempotent() {
        let t = raw(
            &["S", "X_1", "X_2", "H", "Y"],
            &[&["1", "0", "1", "1", "0"], &["0", "1", "1", "0", "0"]],
        );
        let s = Schema::canonical(2);
        let d = preprocess(&t, &s).unwrap();
        assert_eq!(d.feature_names, vec!["X_1", "X_2"]);
        assert_eq!(d.rows[0], Row { s: 1, x: vec![0, 1], h: 1, y: 0 });
        let back = crate::data::io::to_raw(&d);
        assert_eq!(preprocess(&back, &s).unwrap(), d);
    }

    #[test]
    fn target_alternatives() {
        let s = schema("g,sensitive:eq:F\nincome,target:>50K|>50K.\n");
        let d = preprocess(&raw(&["g", "income"], &[&["F", ">50K."], &["M", "<=50K"]]), &s).unwrap();
        assert_eq!((d.rows[0].h, d.rows[1].h), (1, 0));
    }
}
