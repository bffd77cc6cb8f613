//! Dataset ingestion, group-balanced splitting and seeded mini-batching.
//!
//! Supported inputs:
//!
//! - prediction logs as CSV (`id,y_true,y_pred,score,z`, `score` may be
//!   empty) or JSON lines with the same keys;
//! - attribute manifests in the CelebA text layout (count line, attribute
//!   name line, then `filename ±1 ...` rows) or as a CSV with named columns;
//! - feature tables as CSV with `id,label,z` followed by numeric columns.
//!
//! Columns or keys beyond the ones a parser needs are ignored, with a debug
//! log line naming them.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Group, MetricError, PredictionLog, PredictionRecord};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },
    #[error("log contains no records")]
    EmptyLog,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("header declares {declared} rows but {found} were found")]
    CountMismatch { declared: usize, found: usize },
    #[error("group z={0} has no examples")]
    MissingGroup(Group),
    #[error("duplicate example id `{0}`")]
    DuplicateId(String),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> DataError {
    DataError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Features {
    Vector(Vec<f64>),
    Image(PathBuf),
}

/// One training example `(x, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub features: Features,
    pub label: usize,
    pub z: Group,
}

impl LabeledExample {
    pub fn vector(&self) -> Option<&[f64]> {
        match &self.features {
            Features::Vector(v) => Some(v),
            Features::Image(_) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Prediction logs

/// Load a prediction log, choosing CSV or JSON lines from the file content.
///
/// `num_classes` defaults to one past the largest label seen.
pub fn load_prediction_log(path: &Path, num_classes: Option<usize>) -> Result<PredictionLog> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let is_jsonl = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "ndjson")
    ) || text.trim_start().starts_with('{');
    let lines_and_records = if is_jsonl {
        parse_log_jsonl(text.as_bytes())?
    } else {
        parse_log_csv(text.as_bytes())?
    };
    build_log(lines_and_records, num_classes)
}

fn build_log(parsed: Vec<(u64, PredictionRecord)>, num_classes: Option<usize>) -> Result<PredictionLog> {
    if parsed.is_empty() {
        return Err(DataError::EmptyLog);
    }
    let (lines, records): (Vec<u64>, Vec<PredictionRecord>) = parsed.into_iter().unzip();
    let log = match num_classes {
        Some(k) => PredictionLog::new(records, k),
        None => PredictionLog::from_records(records),
    };
    log.map_err(|e| match e {
        MetricError::EmptyLog => DataError::EmptyLog,
        MetricError::MalformedRecord { index, reason } => malformed(lines[index], reason),
        other => malformed(0, other.to_string()),
    })
}

const LOG_COLUMNS: [&str; 5] = ["id", "y_true", "y_pred", "score", "z"];

/// Parse a CSV prediction log into `(line, record)` pairs.
pub fn parse_log_csv<R: Read>(reader: R) -> Result<Vec<(u64, PredictionRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(LOG_COLUMNS) {
        match col(name) {
            Some(i) => *slot = i,
            None if name == "score" => *slot = usize::MAX,
            None => return Err(malformed(1, format!("missing column `{name}`"))),
        }
    }
    let extra: Vec<&str> = headers
        .iter()
        .filter(|h| !LOG_COLUMNS.contains(&h.trim()))
        .collect();
    if !extra.is_empty() {
        log::debug!("prediction log: ignoring columns {extra:?}");
    }

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize| if i == usize::MAX { "" } else { row.get(i).unwrap_or("").trim() };
        let record = PredictionRecord {
            id: get(idx[0]).to_string(),
            y_true: parse_class(get(idx[1]), "y_true", line)?,
            y_pred: parse_class(get(idx[2]), "y_pred", line)?,
            score: parse_score(get(idx[3]), line)?,
            z: parse_group(get(idx[4]), line)?,
        };
        out.push((line, record));
    }
    Ok(out)
}

/// Parse a JSON-lines prediction log into `(line, record)` pairs.
pub fn parse_log_jsonl<R: Read>(reader: R) -> Result<Vec<(u64, PredictionRecord)>> {
    let mut out = Vec::new();
    let mut warned: BTreeSet<String> = BTreeSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| malformed(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed(line_no, "expected a JSON object"))?;
        for k in obj.keys() {
            if !LOG_COLUMNS.contains(&k.as_str()) && warned.insert(k.clone()) {
                log::debug!("prediction log: ignoring key `{k}`");
            }
        }
        let field = |k: &str| -> String {
            match obj.get(k) {
                None | Some(serde_json::Value::Null) => String::new(),
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
            }
        };
        let record = PredictionRecord {
            id: field("id"),
            y_true: parse_class(&field("y_true"), "y_true", line_no)?,
            y_pred: parse_class(&field("y_pred"), "y_pred", line_no)?,
            score: parse_score(&field("score"), line_no)?,
            z: parse_group(&field("z"), line_no)?,
        };
        out.push((line_no, record));
    }
    Ok(out)
}

fn parse_class(s: &str, name: &str, line: u64) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| malformed(line, format!("{name} `{s}` is not a class index")))
}

fn parse_score(s: &str, line: u64) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(Some(v)),
        _ => Err(malformed(line, format!("score `{s}` is not a probability"))),
    }
}

fn parse_group(s: &str, line: u64) -> Result<Group> {
    s.parse::<i64>()
        .ok()
        .and_then(Group::from_flag)
        .ok_or_else(|| malformed(line, format!("z `{s}` must be 0 or 1")))
}

/// Write a log as CSV with the canonical header.
pub fn write_log_csv(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(LOG_COLUMNS).map_err(|e| csv_io(path, e))?;
    for r in records {
        let score = r.score.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            r.id.as_str(),
            &r.y_true.to_string(),
            &r.y_pred.to_string(),
            &score,
            &r.z.to_string(),
        ])
        .map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn csv_io(path: &Path, e: csv::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

// ---------------------------------------------------------------------------
// Attribute manifests

/// How the sensitive attribute column maps onto `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZRule {
    /// z = 1 when the raw value is one of these strings.
    Values(Vec<String>),
    /// z = 1 when the value parses as a number at least this large.
    AtLeast(f64),
}

impl Default for ZRule {
    fn default() -> Self {
        ZRule::Values(vec!["1".into()])
    }
}

impl ZRule {
    fn apply(&self, raw: &str, line: u64) -> Result<Group> {
        let protected = match self {
            ZRule::Values(vals) => vals.iter().any(|v| v == raw),
            ZRule::AtLeast(t) => {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| malformed(line, format!("`{raw}` is not numeric")))?;
                v >= *t
            }
        };
        Ok(if protected {
            Group::Protected
        } else {
            Group::Unprotected
        })
    }
}

fn parse_label(raw: &str, line: u64) -> Result<usize> {
    match raw {
        "-1" => Ok(0),
        _ => raw
            .parse::<usize>()
            .map_err(|_| malformed(line, format!("label `{raw}` is neither ±1 nor a class index"))),
    }
}

/// Load examples from an attribute manifest. Features are image paths taken
/// verbatim from the filename (CelebA layout) or id column (CSV layout).
pub fn load_attribute_manifest(
    path: &Path,
    label_attr: &str,
    z_attr: &str,
    z_rule: &ZRule,
) -> Result<Vec<LabeledExample>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let first = text.lines().next().unwrap_or("").trim();
    if first.parse::<usize>().is_ok() {
        parse_celeba_manifest(&text, label_attr, z_attr, z_rule)
    } else {
        parse_csv_manifest(text.as_bytes(), label_attr, z_attr, z_rule)
    }
}

pub fn parse_celeba_manifest(
    text: &str,
    label_attr: &str,
    z_attr: &str,
    z_rule: &ZRule,
) -> Result<Vec<LabeledExample>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
    let (_, count_line) = lines.next().ok_or(DataError::EmptyLog)?;
    let declared: usize = count_line
        .trim()
        .parse()
        .map_err(|_| malformed(1, "first line must be the row count"))?;
    let (_, names_line) = lines
        .next()
        .ok_or_else(|| malformed(2, "missing attribute name line"))?;
    let names: Vec<&str> = names_line.split_whitespace().collect();
    let find = |attr: &str| {
        names
            .iter()
            .position(|n| *n == attr)
            .ok_or_else(|| DataError::UnknownAttribute(attr.to_string()))
    };
    let label_idx = find(label_attr)?;
    let z_idx = find(z_attr)?;

    let mut out = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != names.len() + 1 {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", names.len() + 1, fields.len()),
            ));
        }
        let values = &fields[1..];
        let label = match values[label_idx] {
            "1" => 1,
            "-1" => 0,
            other => return Err(malformed(line, format!("attribute value `{other}` is not ±1"))),
        };
        out.push(LabeledExample {
            id: fields[0].to_string(),
            features: Features::Image(PathBuf::from(fields[0])),
            label,
            z: z_rule.apply(values[z_idx], line)?,
        });
    }
    if out.len() != declared {
        return Err(DataError::CountMismatch {
            declared,
            found: out.len(),
        });
    }
    Ok(out)
}

const ID_COLUMNS: [&str; 4] = ["id", "image", "image_id", "filename"];

pub fn parse_csv_manifest<R: Read>(
    reader: R,
    label_attr: &str,
    z_attr: &str,
    z_rule: &ZRule,
) -> Result<Vec<LabeledExample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_idx = ID_COLUMNS
        .iter()
        .find_map(|c| col(c))
        .ok_or_else(|| malformed(1, format!("no id column (one of {ID_COLUMNS:?})")))?;
    let label_idx = col(label_attr).ok_or_else(|| DataError::UnknownAttribute(label_attr.into()))?;
    let z_idx = col(z_attr).ok_or_else(|| DataError::UnknownAttribute(z_attr.into()))?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(id_idx).unwrap_or("").trim().to_string();
        out.push(LabeledExample {
            features: Features::Image(PathBuf::from(&id)),
            id,
            label: parse_label(row.get(label_idx).unwrap_or("").trim(), line)?,
            z: z_rule.apply(row.get(z_idx).unwrap_or("").trim(), line)?,
        });
    }
    if out.is_empty() {
        return Err(DataError::EmptyLog);
    }
    Ok(out)
}

/// Load a numeric feature table: `id,label,z,<feature columns...>`.
pub fn load_feature_table(path: &Path) -> Result<Vec<LabeledExample>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_feature_table(file)
}

pub fn parse_feature_table<R: Read>(reader: R) -> Result<Vec<LabeledExample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let expect = ["id", "label", "z"];
    if headers.len() < 4 || headers.iter().take(3).ne(expect.iter().copied()) {
        return Err(malformed(1, "header must start with id,label,z and have a feature column"));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let features = row
            .iter()
            .skip(3)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| malformed(line, format!("feature `{v}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(LabeledExample {
            id: row[0].trim().to_string(),
            features: Features::Vector(features),
            label: parse_label(row[1].trim(), line)?,
            z: parse_group(row[2].trim(), line)?,
        });
    }
    if out.is_empty() {
        return Err(DataError::EmptyLog);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splitting

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    fn validate(&self) -> Result<()> {
        let r = self.as_array();
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(DataError::InvalidRatios(format!("{r:?} has a negative entry")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidRatios(format!("{r:?} sums to {sum}")));
        }
        Ok(())
    }
}

/// Group-balanced train/validation/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<LabeledExample>,
    pub val: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    /// Majority-group examples dropped to equalize group sizes, sorted by id.
    pub discarded: Vec<LabeledExample>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl SplitSet {
    pub fn parts(&self) -> [&[LabeledExample]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

/// Split `total` items by `ratios` with largest-remainder rounding.
///
/// Ties between equal remainders go to the earlier split.
pub fn largest_remainder(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * total as f64);
    // tolerance keeps 0.15 * 800 = 119.999... from flooring to 119
    let floor = |q: f64| (q + 1e-9).floor();
    let mut sizes = quotas.map(|q| floor(q) as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - floor(quotas[a]);
        let rb = quotas[b] - floor(quotas[b]);
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Down-sample the larger group to the smaller group's size, then split each
/// group so every split holds the same number of each group (or one more of
/// one group when the split size is odd).
pub fn balanced_split(examples: &[LabeledExample], seed: u64, ratios: SplitRatios) -> Result<SplitSet> {
    ratios.validate()?;
    let mut seen = HashSet::new();
    for e in examples {
        if !seen.insert(e.id.as_str()) {
            return Err(DataError::DuplicateId(e.id.clone()));
        }
    }
    let mut groups: [Vec<LabeledExample>; 2] = [Vec::new(), Vec::new()];
    for e in examples {
        groups[e.z.flag() as usize].push(e.clone());
    }
    for (g, members) in groups.iter_mut().enumerate() {
        if members.is_empty() {
            return Err(DataError::MissingGroup(Group::ALL[g]));
        }
        members.sort_by(|a, b| a.id.cmp(&b.id));
    }
    let m = groups[0].len().min(groups[1].len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut discarded = Vec::new();
    for members in groups.iter_mut() {
        members.shuffle(&mut rng);
        discarded.extend(members.drain(m..));
    }
    discarded.sort_by(|a, b| a.id.cmp(&b.id));

    let totals = largest_remainder(2 * m, ratios.as_array());
    // Odd split sizes come in pairs (the totals sum to 2m); alternate which
    // group takes the extra example so each group contributes exactly m.
    let mut per_group = [[0usize; 3]; 2];
    let mut extra_to = Group::Protected;
    for (s, &t) in totals.iter().enumerate() {
        per_group[0][s] = t / 2;
        per_group[1][s] = t / 2;
        if t % 2 == 1 {
            per_group[extra_to.flag() as usize][s] += 1;
            extra_to = extra_to.other();
        }
    }

    let mut parts: [Vec<LabeledExample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (g, members) in groups.into_iter().enumerate() {
        let mut it = members.into_iter();
        for (s, part) in parts.iter_mut().enumerate() {
            part.extend(it.by_ref().take(per_group[g][s]));
        }
    }
    let [train, val, test] = parts;
    Ok(SplitSet {
        train,
        val,
        test,
        discarded,
        seed,
        ratios,
    })
}

/// Shuffle indices `0..len` with `epoch_seed` and cut them into batches of
/// `batch_size`; the last batch may be short.
pub fn minibatches(len: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}
