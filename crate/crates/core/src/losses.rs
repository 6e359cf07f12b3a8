//! Training objectives for the detector and the reconstructor.
//!
//! All functions operate on flat pixel slices in `f64`. The reconstructor
//! objective is `lambda_rec * bce + lambda_dice * dice`; with the default
//! weights `(1, -1)` minimizing it maximizes the dice overlap.

use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before any log.
pub const PROB_CLIP: f64 = 1e-7;

/// Default `(lambda_rec, lambda_dice)` for [`total_loss`].
pub const DEFAULT_LAMBDAS: (f64, f64) = (1.0, -1.0);

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

fn check_dims(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} pixels", gt.len()),
            found: format!("{} pixels", pred.len()),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("empty frame".into()));
    }
    Ok(())
}

/// Cross-entropy of the two-class detector output for one frame.
///
/// `y = 1` means the frame is occluded.
pub fn detection_loss(p_occluded: f64, p_clean: f64, y: u8) -> f64 {
    let y = f64::from(y.min(1));
    -y * clip(p_occluded).ln() - (1.0 - y) * clip(p_clean).ln()
}

/// Mean pixel-wise binary cross-entropy between a predicted frame and a
/// binary ground-truth frame.
pub fn rec_loss(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_dims(pred, gt)?;
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(&p, &y)| {
            let p = clip(p);
            -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Dice overlap `2 * sum(p * g) / (sum(p^2) + sum(g^2))`.
///
/// Two all-zero frames are a perfect match and score 1.
pub fn dice_coeff(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_dims(pred, gt)?;
    let (inter, denom) = dice_sums(pred, gt);
    Ok(if denom == 0.0 { 1.0 } else { 2.0 * inter / denom })
}

fn dice_sums(pred: &[f64], gt: &[f64]) -> (f64, f64) {
    pred.iter().zip(gt).fold((0.0, 0.0), |(i, d), (&p, &g)| {
        (i + p * g, d + p * p + g * g)
    })
}

/// Weighted reconstructor objective `lambda_rec * rec_loss + lambda_dice * dice`.
pub fn total_loss(pred: &[f64], gt: &[f64], lambda_rec: f64, lambda_dice: f64) -> Result<f64> {
    Ok(lambda_rec * rec_loss(pred, gt)? + lambda_dice * dice_coeff(pred, gt)?)
}

/// Loss value together with its gradient with respect to `pred`.
///
/// The clip in the cross-entropy term has zero derivative outside
/// `[PROB_CLIP, 1 - PROB_CLIP]`.
pub fn total_loss_with_grad(
    pred: &[f64],
    gt: &[f64],
    lambda_rec: f64,
    lambda_dice: f64,
) -> Result<(f64, Vec<f64>)> {
    let loss = total_loss(pred, gt, lambda_rec, lambda_dice)?;
    let n = pred.len() as f64;
    let (inter, denom) = dice_sums(pred, gt);
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(&p, &y)| {
            let d_rec = if p > PROB_CLIP && p < 1.0 - PROB_CLIP {
                (-y / p + (1.0 - y) / (1.0 - p)) / n
            } else {
                0.0
            };
            let d_dice = if denom == 0.0 {
                0.0
            } else {
                2.0 * (y * denom - 2.0 * p * inter) / (denom * denom)
            };
            lambda_rec * d_rec + lambda_dice * d_dice
        })
        .collect();
    Ok((loss, grad))
}
