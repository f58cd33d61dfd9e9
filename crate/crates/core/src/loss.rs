//! Asymmetric weighted negative-log-likelihood loss and its analytic
//! gradient, as a framework-independent numeric kernel.
//!
//! For a logit `x` and a binary label `y`,
//!
//! ```text
//! L(x, y) = -(y - eps) * clip(log sigmoid(x)) + C
//! ```
//!
//! where the log probability is clipped from below to keep very wrong
//! positive pixels from exploding, and `C >= eps * |clip|` keeps the loss
//! nonnegative at the clip boundary. Positive labels are weighted
//! `(1 - eps) / eps` times heavier than negatives (9x at the default
//! `eps = 0.1`), so missing a feasible region costs far more than
//! predicting an extra one.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// False-positive weight; false negatives weigh `1 - epsilon`.
    pub epsilon: f64,
    /// Lower bound applied to `log sigmoid(x)`; negative.
    pub clip_floor: f64,
    /// Additive offset keeping the loss nonnegative.
    pub offset_c: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, clip_floor: -20.0, offset_c: 2.0 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("epsilon must lie in (0, 0.5), got {0}")]
    BadEpsilon(f64),
    #[error("clip_floor must be negative, got {0}")]
    BadClipFloor(f64),
    #[error("offset_c = {offset_c} is below epsilon * |clip_floor| = {bound}; loss could go negative")]
    OffsetTooSmall { offset_c: f64, bound: f64 },
    #[error("logit and label grids differ in length: {logits} vs {labels}")]
    ShapeMismatch { logits: usize, labels: usize },
    #[error("empty grid")]
    EmptyGrid,
    #[error("label {0} is not in {{0, 1}}")]
    BadLabel(f64),
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(LossError::BadEpsilon(self.epsilon));
        }
        if !(self.clip_floor < 0.0) {
            return Err(LossError::BadClipFloor(self.clip_floor));
        }
        let bound = self.epsilon * self.clip_floor.abs();
        if !(self.offset_c >= bound) {
            return Err(LossError::OffsetTooSmall { offset_c: self.offset_c, bound });
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without intermediate underflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Per-pixel loss. `y` must be 0 or 1.
pub fn asym_loss(x: f64, y: f64, cfg: &LossConfig) -> f64 {
    debug_assert!(y == 0.0 || y == 1.0);
    let logp = log_sigmoid(x).max(cfg.clip_floor);
    -(y - cfg.epsilon) * logp + cfg.offset_c
}

/// Analytic `dL/dx`. Zero inside the clipped region (the constant side of
/// the kink is taken as the subgradient, which is what clipping does under
/// autodiff).
pub fn asym_loss_grad(x: f64, y: f64, cfg: &LossConfig) -> f64 {
    debug_assert!(y == 0.0 || y == 1.0);
    if log_sigmoid(x) > cfg.clip_floor {
        -(y - cfg.epsilon) * (1.0 - sigmoid(x))
    } else {
        0.0
    }
}

/// Deterministic pairwise summation; the reduction tree depends only on the
/// slice length, so results do not vary with chunking or thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Mean per-pixel loss over matching logit/label grids.
pub fn batch_loss(logits: &[f64], labels: &[f64], cfg: &LossConfig) -> Result<f64, LossError> {
    if logits.len() != labels.len() {
        return Err(LossError::ShapeMismatch { logits: logits.len(), labels: labels.len() });
    }
    if logits.is_empty() {
        return Err(LossError::EmptyGrid);
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(LossError::BadLabel(bad));
    }
    let losses: Vec<f64> =
        logits.iter().zip(labels).map(|(&x, &y)| asym_loss(x, y, cfg)).collect();
    Ok(pairwise_sum(&losses) / losses.len() as f64)
}

/// One line of the property table produced by [`property_report`].
#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Runs the loss kernel's property suite with a fixed seed and returns one
/// pass/fail row per property. Used by the `loss-check` command and by the
/// acceptance tests.
pub fn property_report(cfg: &LossConfig) -> Vec<PropertyCheck> {
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x10_55);

    // Analytic gradient vs central differences, away from the clip kink.
    let mut worst_rel = 0.0f64;
    let mut checked = 0usize;
    while checked < 10_000 {
        let x = rng.gen_range(-30.0..30.0);
        let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        if (log_sigmoid(x) - cfg.clip_floor).abs() < 1e-3 {
            continue;
        }
        checked += 1;
        let h = 1e-5;
        let fd = (asym_loss(x + h, y, cfg) - asym_loss(x - h, y, cfg)) / (2.0 * h);
        let g = asym_loss_grad(x, y, cfg);
        let rel = (g - fd).abs() / g.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
    }
    rows.push(PropertyCheck {
        name: "gradient matches central differences (1e4 points)",
        pass: worst_rel <= 1e-6,
        detail: format!("worst relative deviation {worst_rel:.3e}"),
    });

    // Nonnegativity over a wide random sweep.
    let mut min_loss = f64::INFINITY;
    for _ in 0..1_000_000 {
        let x = rng.gen_range(-200.0..200.0);
        let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        min_loss = min_loss.min(asym_loss(x, y, cfg));
    }
    rows.push(PropertyCheck {
        name: "nonnegativity (1e6 points)",
        pass: min_loss >= 0.0,
        detail: format!("minimum observed loss {min_loss:.3e}"),
    });

    // The weight ratio is exact; the per-point gradient ratio reproduces it
    // up to final rounding of the two products and one division.
    let weight_ratio = (1.0 - cfg.epsilon) / cfg.epsilon;
    let ratio_at_zero = (asym_loss_grad(0.0, 1.0, cfg) / asym_loss_grad(0.0, 0.0, cfg)).abs();
    let mut worst_ulps = 0.0f64;
    for _ in 0..10_000 {
        let x = rng.gen_range(-15.0..15.0);
        if log_sigmoid(x) <= cfg.clip_floor {
            continue;
        }
        let r = (asym_loss_grad(x, 1.0, cfg) / asym_loss_grad(x, 0.0, cfg)).abs();
        let ulps = (r - weight_ratio).abs() / (weight_ratio * f64::EPSILON);
        worst_ulps = worst_ulps.max(ulps);
    }
    rows.push(PropertyCheck {
        name: "gradient asymmetry equals (1-eps)/eps",
        pass: ratio_at_zero == weight_ratio && worst_ulps <= 2.0,
        detail: format!(
            "ratio {weight_ratio} (= {ratio_at_zero} at x = 0), worst pointwise deviation {worst_ulps:.2} ulp"
        ),
    });

    // Monotone polarization on the unclipped domain: decreasing in x for
    // positives, increasing for negatives.
    let mut monotone = true;
    let mut prev: Option<(f64, f64)> = None;
    let lo = inverse_log_sigmoid(cfg.clip_floor) + 1e-6;
    for i in 0..2_000 {
        let x = lo + (30.0 - lo) * (i as f64 / 1_999.0);
        let lp = asym_loss(x, 1.0, cfg);
        let ln = asym_loss(x, 0.0, cfg);
        if let Some((prev_p, prev_n)) = prev {
            monotone &= lp < prev_p && ln > prev_n;
        }
        prev = Some((lp, ln));
    }
    rows.push(PropertyCheck {
        name: "loss is strictly monotone on the unclipped domain",
        pass: monotone,
        detail: "positive labels decreasing, negative labels increasing".to_string(),
    });

    // Saturation limit: perfectly confident positives cost exactly C.
    let sat = asym_loss(40.0, 1.0, cfg);
    rows.push(PropertyCheck {
        name: "saturated positive tends to offset C",
        pass: (sat - cfg.offset_c).abs() < 1e-9,
        detail: format!("loss at x = 40 is {sat}"),
    });

    rows
}

/// Inverse of `log_sigmoid`: the x with `log(sigmoid(x)) = lp`, `lp < 0`.
fn inverse_log_sigmoid(lp: f64) -> f64 {
    // sigmoid(x) = exp(lp)  =>  x = lp - ln(1 - exp(lp))
    lp - (-lp.exp()).ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 1.0 - 1e-17);
        assert!(sigmoid(-40.0) < 1e-17);
        assert!(sigmoid(1000.0).is_finite() && sigmoid(-1000.0).is_finite());
    }

    #[test]
    fn loss_hand_values() {
        let cfg = LossConfig::default();
        // y = 1 at x = 0: 0.9 * ln 2 + 2.
        assert!((asym_loss(0.0, 1.0, &cfg) - (0.9 * LN2 + 2.0)).abs() < 1e-12);
        assert!((asym_loss(0.0, 1.0, &cfg) - 2.6238325).abs() < 1e-6);
        // Saturated positive: loss tends to C.
        assert!((asym_loss(40.0, 1.0, &cfg) - 2.0).abs() < 1e-9);
        // Clipped negative at the nonnegativity boundary: exactly zero.
        assert_eq!(asym_loss(-30.0, 0.0, &cfg), 0.0);
    }

    #[test]
    fn gradient_hand_values() {
        let cfg = LossConfig::default();
        assert!((asym_loss_grad(0.0, 1.0, &cfg) - (-0.45)).abs() < 1e-15);
        assert!((asym_loss_grad(0.0, 0.0, &cfg) - 0.05).abs() < 1e-15);
        assert_eq!(asym_loss_grad(-30.0, 0.0, &cfg), 0.0);
        assert_eq!(asym_loss_grad(-30.0, 1.0, &cfg), 0.0);
    }

    #[test]
    fn gradient_ratio_is_nine_at_exact_half_sigmoid() {
        let cfg = LossConfig::default();
        let r = (asym_loss_grad(0.0, 1.0, &cfg) / asym_loss_grad(0.0, 0.0, &cfg)).abs();
        assert_eq!(r, 9.0);
        assert_eq!((1.0 - cfg.epsilon) / cfg.epsilon, 9.0);
    }

    #[test]
    fn batch_loss_composes_hand_values() {
        let cfg = LossConfig::default();
        let logits = [40.0, 0.0, -30.0, 0.0];
        let labels = [1.0, 1.0, 0.0, 0.0];
        let want = (asym_loss(40.0, 1.0, &cfg)
            + asym_loss(0.0, 1.0, &cfg)
            + asym_loss(-30.0, 0.0, &cfg)
            + asym_loss(0.0, 0.0, &cfg))
            / 4.0;
        assert_eq!(batch_loss(&logits, &labels, &cfg).unwrap(), want);
    }

    #[test]
    fn batch_loss_rejects_bad_shapes_and_labels() {
        let cfg = LossConfig::default();
        assert_eq!(batch_loss(&[], &[], &cfg), Err(LossError::EmptyGrid));
        assert!(matches!(
            batch_loss(&[0.0], &[0.0, 1.0], &cfg),
            Err(LossError::ShapeMismatch { .. })
        ));
        assert_eq!(batch_loss(&[0.0], &[0.5], &cfg), Err(LossError::BadLabel(0.5)));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { epsilon: 0.6, ..Default::default() }.validate().is_err());
        assert!(LossConfig { clip_floor: 1.0, ..Default::default() }.validate().is_err());
        assert!(matches!(
            LossConfig { offset_c: 1.0, ..Default::default() }.validate(),
            Err(LossError::OffsetTooSmall { .. })
        ));
    }

    #[test]
    fn property_suite_passes_with_defaults() {
        for row in property_report(&LossConfig::default()) {
            assert!(row.pass, "{}: {}", row.name, row.detail);
        }
    }

    #[test]
    fn pairwise_sum_matches_exact_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -50.0f64..50.0) {
            prop_assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
        }

        #[test]
        fn loss_is_nonnegative(x in -500.0f64..500.0, y in 0u8..2) {
            let cfg = LossConfig::default();
            prop_assert!(asym_loss(x, y as f64, &cfg) >= 0.0);
        }

        #[test]
        fn gradient_matches_finite_difference(x in -15.0f64..15.0, y in 0u8..2) {
            let cfg = LossConfig::default();
            prop_assume!((log_sigmoid(x) - cfg.clip_floor).abs() > 1e-3);
            let h = 1e-5;
            let fd = (asym_loss(x + h, y as f64, &cfg) - asym_loss(x - h, y as f64, &cfg)) / (2.0 * h);
            let g = asym_loss_grad(x, y as f64, &cfg);
            prop_assert!((g - fd).abs() <= 1e-6 * g.abs().max(1.0));
        }
    }
}
