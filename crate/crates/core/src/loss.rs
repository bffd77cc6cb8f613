//! Training objective: cross-entropy plus a squared soft statistical-parity
//! penalty, each returning its value and the exact gradient with respect to
//! the predicted probabilities.
//!
//! The soft parity gap replaces the hard indicator P(ŷ=1 | z) by the mean
//! predicted positive-class probability of each group, which is what makes
//! the penalty differentiable. Evaluation keeps the hard definition in
//! [`crate::metrics`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Group;

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid probabilities: {0}")]
    InvalidProbs(String),
    #[error("group z={0} has no member in the batch")]
    MissingGroupInBatch(Group),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Model outputs for one mini-batch.
///
/// `probs` is row-major with `width` columns. With `width == 1` each entry is
/// the positive-class (class 1) probability of a binary sigmoid head; with
/// `width >= 2` each row is a probability simplex over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    pub probs: Vec<f64>,
    pub width: usize,
    pub labels: Vec<usize>,
    pub z: Vec<Group>,
}

impl BatchPrediction {
    pub fn new(probs: Vec<f64>, width: usize, labels: Vec<usize>, z: Vec<Group>) -> Result<Self> {
        let b = BatchPrediction {
            probs,
            width,
            labels,
            z,
        };
        b.check_shape()?;
        b.check_probs()?;
        Ok(b)
    }

    pub fn binary(probs: Vec<f64>, labels: Vec<usize>, z: Vec<Group>) -> Result<Self> {
        BatchPrediction::new(probs, 1, labels, z)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        if self.width == 1 {
            2
        } else {
            self.width
        }
    }

    fn check_shape(&self) -> Result<()> {
        let b = self.labels.len();
        if b == 0 {
            return Err(LossError::Shape("batch is empty".into()));
        }
        if self.width == 0 {
            return Err(LossError::Shape("probability width is zero".into()));
        }
        if self.z.len() != b {
            return Err(LossError::Shape(format!("{} labels but {} group flags", b, self.z.len())));
        }
        if self.probs.len() != b * self.width {
            return Err(LossError::Shape(format!(
                "{} probabilities for {} rows of width {}",
                self.probs.len(),
                b,
                self.width
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes()) {
            return Err(LossError::Shape(format!(
                "label {bad} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    fn check_probs(&self) -> Result<()> {
        if let Some(p) = self.probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(LossError::InvalidProbs(format!("{p} is not in (0, 1)")));
        }
        if self.width > 1 {
            for (i, row) in self.probs.chunks(self.width).enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(LossError::InvalidProbs(format!("row {i} sums to {s}")));
                }
            }
        }
        Ok(())
    }

    /// Index into `probs` holding the probability of `class` for row `i`, and
    /// whether that value must be complemented (binary head, class 0).
    fn slot(&self, i: usize, class: usize) -> (usize, bool) {
        if self.width == 1 {
            (i, class == 0)
        } else {
            (i * self.width + class, false)
        }
    }
}

/// A loss value with its gradient, shaped like [`BatchPrediction::probs`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_probs: Vec<f64>,
}

impl LossValue {
    fn zeros(len: usize) -> Self {
        LossValue {
            value: 0.0,
            grad_probs: vec![0.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
    #[serde(default)]
    pub spd_ideal: f64,
    /// Class whose probability mass counts as a positive prediction for the
    /// fairness penalty. Ignored by binary sigmoid heads, which always use class 1.
    #[serde(default = "default_positive_class")]
    pub positive_class: usize,
}

fn default_positive_class() -> usize {
    1
}

impl LossWeights {
    pub fn new(lambda: f64) -> Self {
        LossWeights {
            lambda,
            spd_ideal: 0.0,
            positive_class: 1,
        }
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights::new(1.0)
    }
}

/// Mean negative log-likelihood of the true class.
pub fn cross_entropy_loss(batch: &BatchPrediction) -> Result<LossValue> {
    batch.check_shape()?;
    let b = batch.len() as f64;
    let mut out = LossValue::zeros(batch.probs.len());
    for (i, &label) in batch.labels.iter().enumerate() {
        let (slot, complement) = batch.slot(i, label);
        let raw = batch.probs[slot];
        let p_true = if complement { 1.0 - raw } else { raw };
        if p_true < PROB_EPS {
            // clamped: value is constant in p here
            out.value -= PROB_EPS.ln() / b;
            continue;
        }
        out.value -= p_true.ln() / b;
        let d_p_true = -1.0 / (b * p_true);
        out.grad_probs[slot] += if complement { -d_p_true } else { d_p_true };
    }
    Ok(out)
}

/// Mean positive-class probability over the members of `group`, with its
/// gradient (1/|group| on member positive-class slots, 0 elsewhere).
pub fn soft_group_positive_rate(
    batch: &BatchPrediction,
    group: Group,
    positive_class: usize,
) -> Result<(f64, Vec<f64>)> {
    batch.check_shape()?;
    let class = positive_column(batch, positive_class)?;
    let members: Vec<usize> = (0..batch.len()).filter(|&i| batch.z[i] == group).collect();
    if members.is_empty() {
        return Err(LossError::MissingGroupInBatch(group));
    }
    let inv = 1.0 / members.len() as f64;
    let mut grad = vec![0.0; batch.probs.len()];
    let mut rate = 0.0;
    for &i in &members {
        let (slot, _) = batch.slot(i, class);
        rate += batch.probs[slot];
        grad[slot] = inv;
    }
    Ok((rate * inv, grad))
}

fn positive_column(batch: &BatchPrediction, positive_class: usize) -> Result<usize> {
    if batch.width == 1 {
        return Ok(1);
    }
    if positive_class >= batch.width {
        return Err(LossError::Shape(format!(
            "positive class {positive_class} out of range for width {}",
            batch.width
        )));
    }
    Ok(positive_class)
}

/// Soft parity gap: soft rate of z=1 minus soft rate of z=0.
///
/// `None` when either group is absent from the batch.
pub fn soft_spd(batch: &BatchPrediction, positive_class: usize) -> Result<Option<(f64, Vec<f64>)>> {
    let rate = |g| match soft_group_positive_rate(batch, g, positive_class) {
        Ok(v) => Ok(Some(v)),
        Err(LossError::MissingGroupInBatch(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let (Some((r1, g1)), Some((r0, g0))) = (rate(Group::Protected)?, rate(Group::Unprotected)?) else {
        return Ok(None);
    };
    let grad = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
    Ok(Some((r1 - r0, grad)))
}

/// (|soft SPD| − SPD_ideal)² for the batch; zero with zero gradient when a
/// group is missing.
pub fn fairness_loss(batch: &BatchPrediction, weights: &LossWeights) -> Result<LossValue> {
    let Some((gap, d_gap)) = soft_spd(batch, weights.positive_class)? else {
        return Ok(LossValue::zeros(batch.probs.len()));
    };
    let dev = gap.abs() - weights.spd_ideal;
    let scale = 2.0 * dev * sign(gap);
    Ok(LossValue {
        value: dev * dev,
        grad_probs: d_gap.into_iter().map(|g| scale * g).collect(),
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Total objective with its two components.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub total: LossValue,
    pub cross_entropy: f64,
    /// Unweighted fairness penalty.
    pub fairness: f64,
}

pub fn objective(batch: &BatchPrediction, weights: &LossWeights) -> Result<Objective> {
    let ce = cross_entropy_loss(batch)?;
    let fair = fairness_loss(batch, weights)?;
    let lambda = weights.lambda;
    let grad_probs = ce
        .grad_probs
        .iter()
        .zip(&fair.grad_probs)
        .map(|(c, f)| c + lambda * f)
        .collect();
    Ok(Objective {
        total: LossValue {
            value: ce.value + lambda * fair.value,
            grad_probs,
        },
        cross_entropy: ce.value,
        fairness: fair.value,
    })
}

/// L = L_cls + λ · L_fair.
pub fn total_loss(batch: &BatchPrediction, weights: &LossWeights) -> Result<LossValue> {
    Ok(objective(batch, weights)?.total)
}
