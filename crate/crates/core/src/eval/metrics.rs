use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with attack (label 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn from_predictions(predicted: &[u8], actual: &[u8]) -> Result<Self> {
        Self::default().accumulate(predicted, actual)
    }

    pub fn accumulate(mut self, predicted: &[u8], actual: &[u8]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::LengthMismatch {
                left: predicted.len(),
                right: actual.len(),
            });
        }
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p != 0, a != 0) {
                (true, true) => self.tp += 1,
                (false, false) => self.tn += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
            }
        }
        Ok(self)
    }

    /// Count-wise sum; associative and commutative, so shards merge in any order.
    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    /// Binary metrics for the attack class.
    pub fn metrics(&self) -> Result<Metrics> {
        if self.total() == 0 {
            return Err(Error::EmptyConfusion);
        }
        let acc = ratio(self.tp + self.tn, self.total());
        Ok(Metrics::from_pr(
            acc,
            ratio(self.tp, self.tp + self.fp),
            ratio(self.tp, self.tp + self.fn_),
        ))
    }

    /// Unweighted mean of the per-class precision, recall and F1 of both classes.
    pub fn macro_metrics(&self) -> Result<Metrics> {
        let pos = self.metrics()?;
        let flipped = Confusion {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        };
        let neg = flipped.metrics()?;
        Ok(Metrics {
            accuracy: pos.accuracy,
            precision: (pos.precision + neg.precision) / 2.0,
            recall: (pos.recall + neg.recall) / 2.0,
            f1: (pos.f1 + neg.f1) / 2.0,
        })
    }
}

/// Divisions by zero yield 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    fn from_pr(accuracy: f64, precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            accuracy,
            precision,
            recall,
            f1,
        }
    }
}
