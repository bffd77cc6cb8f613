//! Group fairness metrics over prediction logs.
//!
//! Every metric is computed from per-group confusion counts under a
//! one-vs-rest reduction of a chosen positive class. Binary logs use the
//! caller's positive class directly; logs with more than two classes are
//! audited as the unweighted mean of the per-class one-vs-rest scores.
//!
//! Group `z = 1` is the protected group and `z = 0` the unprotected one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sensitive-attribute group flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    Unprotected,
    Protected,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::Unprotected, Group::Protected];

    pub fn flag(self) -> u8 {
        match self {
            Group::Unprotected => 0,
            Group::Protected => 1,
        }
    }

    pub fn from_flag(flag: i64) -> Option<Group> {
        match flag {
            0 => Some(Group::Unprotected),
            1 => Some(Group::Protected),
            _ => None,
        }
    }

    pub fn other(self) -> Group {
        match self {
            Group::Unprotected => Group::Protected,
            Group::Protected => Group::Unprotected,
        }
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.flag()
    }
}

impl TryFrom<u8> for Group {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        Group::from_flag(i64::from(v)).ok_or_else(|| format!("group flag must be 0 or 1, got {v}"))
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.flag())
    }
}

/// One evaluated example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub y_true: usize,
    pub y_pred: usize,
    #[serde(default)]
    pub score: Option<f64>,
    pub z: Group,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, y_true: usize, y_pred: usize, z: Group) -> Self {
        PredictionRecord {
            id: id.into(),
            y_true,
            y_pred,
            score: None,
            z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("prediction log is empty")]
    EmptyLog,
    #[error("malformed record at index {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("positive class {class} is out of range for a {num_classes}-class log")]
    InvalidClass { class: usize, num_classes: usize },
    #[error("{metric}: missing group z={group} (no records)")]
    MissingGroup { metric: &'static str, group: Group },
    #[error("{metric}: rate undefined, group z={group} has no records with {stratum}")]
    UndefinedRate {
        metric: &'static str,
        group: Group,
        stratum: &'static str,
    },
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// A validated set of prediction records sharing one class count.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    records: Vec<PredictionRecord>,
    num_classes: usize,
}

impl PredictionLog {
    pub fn new(records: Vec<PredictionRecord>, num_classes: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(MetricError::EmptyLog);
        }
        if num_classes < 2 {
            return Err(MetricError::MalformedRecord {
                index: 0,
                reason: format!("a log needs at least 2 classes, got {num_classes}"),
            });
        }
        for (index, r) in records.iter().enumerate() {
            if r.y_true >= num_classes || r.y_pred >= num_classes {
                return Err(MetricError::MalformedRecord {
                    index,
                    reason: format!(
                        "class index ({}, {}) out of range for {num_classes} classes",
                        r.y_true, r.y_pred
                    ),
                });
            }
            if let Some(s) = r.score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(MetricError::MalformedRecord {
                        index,
                        reason: format!("score {s} outside [0, 1]"),
                    });
                }
                if num_classes != 2 {
                    return Err(MetricError::MalformedRecord {
                        index,
                        reason: "scores are only defined for binary logs".into(),
                    });
                }
            }
        }
        Ok(PredictionLog {
            records,
            num_classes,
        })
    }

    /// Infers the class count as one past the largest label seen (minimum 2).
    pub fn from_records(records: Vec<PredictionRecord>) -> Result<Self> {
        let max_label = records
            .iter()
            .map(|r| r.y_true.max(r.y_pred))
            .max()
            .unwrap_or(0);
        PredictionLog::new(records, (max_label + 1).max(2))
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_binary(&self) -> bool {
        self.num_classes == 2
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes {
            return Err(MetricError::InvalidClass {
                class,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }
}

/// Confusion counts of one group under a one-vs-rest reduction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub n: u64,
}

impl GroupConfusion {
    fn add(&mut self, actual_pos: bool, predicted_pos: bool) {
        match (actual_pos, predicted_pos) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
        self.n += 1;
    }

    /// P(ŷ = pos).
    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.n)
    }

    /// tp / (tp + fn).
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// fp / (fp + tn).
    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// P(ŷ ≠ y), the misclassification rate.
    pub fn error_rate(&self) -> Option<f64> {
        ratio(self.fp + self.fn_, self.n)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Which false-positive-rate semantics the average odds difference uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FprMode {
    /// FPR = fp / (fp + tn); AOD = ½(|ΔTPR| + |ΔFPR|).
    #[default]
    Standard,
    /// FPR = P(ŷ ≠ y); AOD = ½(|ΔTPR| − |ΔFPR|). Can be negative.
    AsWritten,
}

impl std::str::FromStr for FprMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "standard" => Ok(FprMode::Standard),
            "as_written" | "as-written" => Ok(FprMode::AsWritten),
            other => Err(format!("unknown fpr mode `{other}` (expected standard or as_written)")),
        }
    }
}

impl fmt::Display for FprMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FprMode::Standard => "standard",
            FprMode::AsWritten => "as_written",
        })
    }
}

/// Partition records by group and tally one-vs-rest confusion counts.
///
/// Groups with no records are absent from the returned map.
pub fn group_confusion(
    log: &PredictionLog,
    positive_class: usize,
) -> Result<BTreeMap<Group, GroupConfusion>> {
    log.check_class(positive_class)?;
    let mut out: BTreeMap<Group, GroupConfusion> = BTreeMap::new();
    for r in log.records() {
        out.entry(r.z)
            .or_default()
            .add(r.y_true == positive_class, r.y_pred == positive_class);
    }
    Ok(out)
}

/// (protected, unprotected) confusion counts, or `MissingGroup`.
fn confusion_pair(
    log: &PredictionLog,
    positive_class: usize,
    metric: &'static str,
) -> Result<(GroupConfusion, GroupConfusion)> {
    let mut by_group = group_confusion(log, positive_class)?;
    let mut take = |group| {
        by_group
            .remove(&group)
            .ok_or(MetricError::MissingGroup { metric, group })
    };
    let protected = take(Group::Protected)?;
    let unprotected = take(Group::Unprotected)?;
    Ok((protected, unprotected))
}

fn rate_of(
    c: &GroupConfusion,
    group: Group,
    metric: &'static str,
    f: fn(&GroupConfusion) -> Option<f64>,
    stratum: &'static str,
) -> Result<f64> {
    f(c).ok_or(MetricError::UndefinedRate {
        metric,
        group,
        stratum,
    })
}

const POSITIVE_LABEL: &str = "y = positive";
const NEGATIVE_LABEL: &str = "y != positive";

fn tpr_gap(p: &GroupConfusion, u: &GroupConfusion, metric: &'static str) -> Result<f64> {
    let t1 = rate_of(p, Group::Protected, metric, GroupConfusion::tpr, POSITIVE_LABEL)?;
    let t0 = rate_of(u, Group::Unprotected, metric, GroupConfusion::tpr, POSITIVE_LABEL)?;
    Ok((t1 - t0).abs())
}

fn fpr_gap(p: &GroupConfusion, u: &GroupConfusion, metric: &'static str) -> Result<f64> {
    let f1 = rate_of(p, Group::Protected, metric, GroupConfusion::fpr, NEGATIVE_LABEL)?;
    let f0 = rate_of(u, Group::Unprotected, metric, GroupConfusion::fpr, NEGATIVE_LABEL)?;
    Ok((f1 - f0).abs())
}

/// |P(ŷ=pos | z=1) − P(ŷ=pos | z=0)|.
pub fn statistical_parity_difference(log: &PredictionLog, positive_class: usize) -> Result<f64> {
    let (p, u) = confusion_pair(log, positive_class, "SPD")?;
    // Both groups are non-empty here, so the rates exist.
    Ok((p.positive_rate().unwrap_or(0.0) - u.positive_rate().unwrap_or(0.0)).abs())
}

/// |TPR(z=1) − TPR(z=0)|.
pub fn equal_opportunity_difference(log: &PredictionLog, positive_class: usize) -> Result<f64> {
    let (p, u) = confusion_pair(log, positive_class, "EOD")?;
    tpr_gap(&p, &u, "EOD")
}

/// Maximum over y ∈ {positive, non-positive} of the positive-prediction-rate
/// gap between groups within that label stratum.
pub fn equalized_odds_difference(log: &PredictionLog, positive_class: usize) -> Result<f64> {
    let (p, u) = confusion_pair(log, positive_class, "DEO")?;
    let tpr = tpr_gap(&p, &u, "DEO")?;
    let fpr = fpr_gap(&p, &u, "DEO")?;
    Ok(tpr.max(fpr))
}

pub fn average_odds_difference(
    log: &PredictionLog,
    positive_class: usize,
    fpr_mode: FprMode,
) -> Result<f64> {
    const METRIC: &str = "AOD";
    let (p, u) = confusion_pair(log, positive_class, METRIC)?;
    let tpr = tpr_gap(&p, &u, METRIC)?;
    // Rates are required to be defined in both label strata for either mode.
    let fpr = fpr_gap(&p, &u, METRIC)?;
    match fpr_mode {
        FprMode::Standard => Ok(0.5 * (tpr + fpr)),
        FprMode::AsWritten => {
            let e1 = p.error_rate().unwrap_or(0.0);
            let e0 = u.error_rate().unwrap_or(0.0);
            Ok(0.5 * (tpr - (e1 - e0).abs()))
        }
    }
}

/// Precision, recall and F1 for one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

#[derive(Default)]
struct ClassCounts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

fn prf_from_counts(c: &ClassCounts) -> GroupPrf {
    let mut degenerate = false;
    let mut safe = |num: u64, den: u64| match ratio(num, den) {
        Some(v) => v,
        None => {
            degenerate = true;
            0.0
        }
    };
    let precision = safe(c.tp, c.tp + c.fp);
    let recall = safe(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate = true;
        0.0
    };
    GroupPrf {
        precision,
        recall,
        f1,
        degenerate,
    }
}

/// Per-group precision/recall/F1.
///
/// Binary logs report the positive class. Multiclass logs report the
/// unweighted mean over the classes that occur (as truth or prediction)
/// within the group.
pub fn per_group_prf(
    log: &PredictionLog,
    positive_class: usize,
) -> Result<BTreeMap<Group, GroupPrf>> {
    log.check_class(positive_class)?;
    let mut out = BTreeMap::new();
    for group in Group::ALL {
        let members: Vec<&PredictionRecord> =
            log.records().iter().filter(|r| r.z == group).collect();
        if members.is_empty() {
            continue;
        }
        let prf = if log.is_binary() {
            prf_from_counts(&class_counts(&members, positive_class))
        } else {
            let classes: BTreeSet<usize> =
                members.iter().flat_map(|r| [r.y_true, r.y_pred]).collect();
            let per_class: Vec<GroupPrf> = classes
                .iter()
                .map(|&c| prf_from_counts(&class_counts(&members, c)))
                .collect();
            let k = per_class.len() as f64;
            GroupPrf {
                precision: per_class.iter().map(|p| p.precision).sum::<f64>() / k,
                recall: per_class.iter().map(|p| p.recall).sum::<f64>() / k,
                f1: per_class.iter().map(|p| p.f1).sum::<f64>() / k,
                degenerate: per_class.iter().any(|p| p.degenerate),
            }
        };
        out.insert(group, prf);
    }
    Ok(out)
}

fn class_counts(members: &[&PredictionRecord], class: usize) -> ClassCounts {
    let mut c = ClassCounts::default();
    for r in members {
        match (r.y_true == class, r.y_pred == class) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Fraction of records whose prediction equals the true class.
pub fn accuracy(log: &PredictionLog) -> f64 {
    let hits = log.records().iter().filter(|r| r.y_true == r.y_pred).count();
    hits as f64 / log.len() as f64
}

/// All fairness and classification numbers for one experimental condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub spd: f64,
    pub eod: f64,
    pub deo: f64,
    pub aod: f64,
    pub accuracy: f64,
    pub per_group: BTreeMap<Group, GroupPrf>,
    pub fpr_mode: FprMode,
    pub num_classes: usize,
    pub positive_class: usize,
    pub n_records: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Run every metric over a log.
///
/// Binary logs propagate the first metric error. Multiclass logs average the
/// one-vs-rest score of every class; classes whose rates are undefined are
/// skipped and noted in `warnings`, and a metric fails only if no class
/// yields a value.
pub fn audit(log: &PredictionLog, positive_class: usize, fpr_mode: FprMode) -> Result<FairnessReport> {
    log.check_class(positive_class)?;
    let mut warnings = Vec::new();
    let (spd, eod, deo, aod) = if log.is_binary() {
        (
            statistical_parity_difference(log, positive_class)?,
            equal_opportunity_difference(log, positive_class)?,
            equalized_odds_difference(log, positive_class)?,
            average_odds_difference(log, positive_class, fpr_mode)?,
        )
    } else {
        let n = log.num_classes();
        (
            macro_average(n, &mut warnings, |c| statistical_parity_difference(log, c))?,
            macro_average(n, &mut warnings, |c| equal_opportunity_difference(log, c))?,
            macro_average(n, &mut warnings, |c| equalized_odds_difference(log, c))?,
            macro_average(n, &mut warnings, |c| average_odds_difference(log, c, fpr_mode))?,
        )
    };
    let per_group = per_group_prf(log, positive_class)?;
    for (g, prf) in &per_group {
        if prf.degenerate {
            warnings.push(format!("DegenerateCell: z={g} has a zero-denominator precision/recall cell"));
        }
    }
    Ok(FairnessReport {
        spd,
        eod,
        deo,
        aod,
        accuracy: accuracy(log),
        per_group,
        fpr_mode,
        num_classes: log.num_classes(),
        positive_class,
        n_records: log.len(),
        warnings,
    })
}

fn macro_average(
    num_classes: usize,
    warnings: &mut Vec<String>,
    metric: impl Fn(usize) -> Result<f64>,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut first_err = None;
    for class in 0..num_classes {
        match metric(class) {
            Ok(v) => {
                sum += v;
                used += 1;
            }
            Err(e) => {
                warnings.push(format!("class {class} skipped: {e}"));
                first_err.get_or_insert(e);
            }
        }
    }
    match (used, first_err) {
        (0, Some(e)) => Err(e),
        _ => Ok(sum / used as f64),
    }
}

impl FairnessReport {
    /// Human-readable table with four-decimal cells.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "records: {}  classes: {}  positive class: {}  fpr mode: {}\n",
            self.n_records, self.num_classes, self.positive_class, self.fpr_mode
        ));
        s.push_str(&format!(
            "{:<10}{:>10}{:>10}{:>10}{:>10}{:>10}\n",
            "", "ACC ↑", "SPD ↓", "EOD ↓", "DEO ↓", "AOD ↓"
        ));
        s.push_str(&format!(
            "{:<10}{:>10.4}{:>10.4}{:>10.4}{:>10.4}{:>10.4}\n",
            "all", self.accuracy, self.spd, self.eod, self.deo, self.aod
        ));
        s.push_str(&format!(
            "\n{:<10}{:>12}{:>12}{:>12}\n",
            "group", "Precision ↑", "Recall ↑", "F1-score ↑"
        ));
        for (g, prf) in &self.per_group {
            s.push_str(&format!(
                "{:<10}{:>12.4}{:>12.4}{:>12.4}\n",
                format!("z={g}"),
                prf.precision,
                prf.recall,
                prf.f1
            ));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}
