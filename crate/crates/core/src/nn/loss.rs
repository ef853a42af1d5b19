use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Predictions below this are clamped before taking the Poisson log.
pub const POISSON_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CosineProximity,
    Poisson,
}

impl LossKind {
    pub fn evaluate(self, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            LossKind::CosineProximity => cosine_proximity_loss(pred, target),
            LossKind::Poisson => poisson_loss(pred, target),
        }
    }
}

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!("prediction length {} vs target {}", pred.len(), target.len())));
    }
    Ok(())
}

/// `-(p·t) / (‖p‖‖t‖)` and its gradient with respect to `p`.
pub fn cosine_proximity_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred, target)?;
    let dot: f64 = pred.iter().zip(target).map(|(p, t)| p * t).sum();
    let pp: f64 = pred.iter().map(|p| p * p).sum();
    let tt: f64 = target.iter().map(|t| t * t).sum();
    if pp == 0.0 || tt == 0.0 {
        return Err(Error::Degenerate("cosine proximity of a zero vector".into()));
    }
    let (np, nt) = (libm::sqrt(pp), libm::sqrt(tt));
    let loss = -dot / (np * nt);
    let grad = pred.iter().zip(target).map(|(p, t)| -(t / (np * nt)) + dot * p / (pp * np * nt)).collect();
    Ok((loss, grad))
}

/// `mean(p - t·ln p)` with `p` floored at [`POISSON_FLOOR`]; the gradient is
/// zero on clamped components.
pub fn poisson_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(pred, target)?;
    if let Some(p) = pred.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::Degenerate(format!("poisson loss needs positive predictions, got {p}")));
    }
    if let Some(t) = target.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::Degenerate(format!("poisson loss needs non-negative targets, got {t}")));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let clamped = p < POISSON_FLOOR;
        let p = p.max(POISSON_FLOOR);
        loss += p - if t == 0.0 { 0.0 } else { t * libm::log(p) };
        grad.push(if clamped { 0.0 } else { (1.0 - t / p) / n });
    }
    Ok((loss / n, grad))
}
