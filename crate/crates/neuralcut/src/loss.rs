//! Imitation losses against lookahead targets `q = s_LA / max s_LA`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tape::sigmoid;

pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[default]
    #[serde(rename = "sbe")]
    SoftBinaryEntropy,
    #[serde(rename = "mse-linear")]
    MseLinear,
    #[serde(rename = "mse-sigmoid")]
    MseSigmoid,
    #[serde(rename = "cross-entropy")]
    CrossEntropy,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::SoftBinaryEntropy,
        LossKind::MseLinear,
        LossKind::MseSigmoid,
        LossKind::CrossEntropy,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            LossKind::SoftBinaryEntropy => "sbe",
            LossKind::MseLinear => "mse-linear",
            LossKind::MseSigmoid => "mse-sigmoid",
            LossKind::CrossEntropy => "cross-entropy",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| {
                format!("unknown loss `{s}` (sbe, mse-linear, mse-sigmoid, cross-entropy)")
            })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("all lookahead scores are zero")]
    AllZeroLaScores,
    #[error("{0} scores for {1} targets")]
    LengthMismatch(usize, usize),
}

/// `q_C = s_LA(C) / max s_LA`.
pub fn targets(la_scores: &[f64]) -> Result<Vec<f64>, LossError> {
    let best = la_scores.iter().copied().fold(0.0, f64::max);
    if best <= 0.0 {
        return Err(LossError::AllZeroLaScores);
    }
    Ok(la_scores
        .iter()
        .map(|v| (v / best).clamp(0.0, 1.0))
        .collect())
}

fn clamp_log(p: f64) -> (f64, bool) {
    if p < LOG_CLAMP {
        (LOG_CLAMP, true)
    } else if p > 1.0 - LOG_CLAMP {
        (1.0 - LOG_CLAMP, true)
    } else {
        (p, false)
    }
}

/// Loss of one pool from its logits, with the gradient in the logits and
/// a flag per term telling whether a log argument was clamped (clamped
/// terms have zero gradient).
pub fn loss_from_logits(z: &[f64], q: &[f64], kind: LossKind) -> (f64, Vec<f64>, Vec<bool>) {
    let n = z.len() as f64;
    let mut grad = vec![0.0; z.len()];
    let mut clamped = Vec::with_capacity(z.len());
    let mut value = 0.0;
    match kind {
        LossKind::SoftBinaryEntropy => {
            for i in 0..z.len() {
                let (s, c) = clamp_log(sigmoid(z[i]));
                value -= (q[i] * s.ln() + (1.0 - q[i]) * (1.0 - s).ln()) / n;
                if !c {
                    grad[i] = (s - q[i]) / n;
                }
                clamped.push(c);
            }
        }
        LossKind::MseLinear => {
            for i in 0..z.len() {
                value += (z[i] - q[i]).powi(2) / n;
                grad[i] = 2.0 * (z[i] - q[i]) / n;
            }
        }
        LossKind::MseSigmoid => {
            for i in 0..z.len() {
                let s = sigmoid(z[i]);
                value += (s - q[i]).powi(2) / n;
                grad[i] = 2.0 * (s - q[i]) * s * (1.0 - s) / n;
            }
        }
        LossKind::CrossEntropy => {
            let target = q
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > q[best] { i } else { best });
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let total: f64 = e.iter().sum();
            let (p, c) = clamp_log(e[target] / total);
            value = -p.ln();
            if !c {
                for i in 0..z.len() {
                    grad[i] = e[i] / total - if i == target { 1.0 } else { 0.0 };
                }
            }
            clamped.push(c);
        }
    }
    (value, grad, clamped)
}

fn logit(s: f64) -> f64 {
    (s / (1.0 - s)).ln()
}

/// Loss of model scores against lookahead scores. Scores are sigmoid
/// outputs `s̃ ∈ (0,1)`, except for `MseLinear` where they are the raw head
/// output.
pub fn loss(scores: &[f64], la_scores: &[f64], kind: LossKind) -> Result<f64, LossError> {
    if scores.len() != la_scores.len() {
        return Err(LossError::LengthMismatch(scores.len(), la_scores.len()));
    }
    let q = targets(la_scores)?;
    let n = scores.len() as f64;
    Ok(match kind {
        LossKind::SoftBinaryEntropy => scores
            .iter()
            .zip(&q)
            .map(|(&s, &q)| {
                let (s, _) = clamp_log(s);
                -(q * s.ln() + (1.0 - q) * (1.0 - s).ln()) / n
            })
            .sum(),
        LossKind::MseLinear | LossKind::MseSigmoid => scores
            .iter()
            .zip(&q)
            .map(|(s, q)| (s - q).powi(2) / n)
            .sum(),
        LossKind::CrossEntropy => {
            let z: Vec<f64> = scores.iter().map(|&s| logit(s)).collect();
            loss_from_logits(&z, &q, kind).0
        }
    })
}
