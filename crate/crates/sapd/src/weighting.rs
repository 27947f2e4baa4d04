//! Per-anchor attention weights: generalized centerness within a level and
//! its combination with per-level soft selection weights.

use crate::geometry::{AnchorPoint, DistanceTargets, GroundTruthBox};
use crate::{Error, Result};

/// Which loss components the soft anchor weight multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Weight the sum of classification and localization losses (default).
    Both,
    /// Weight the classification (focal) term only.
    ClsOnly,
    /// Weight the localization (IoU) term only.
    LocOnly,
    /// Disable soft weighting entirely; every anchor weight is 1.
    Off,
}

impl WeightMode {
    /// Effective (classification, localization) multipliers for an anchor
    /// with stored weight `w`.
    #[inline]
    pub fn apply(&self, w: f32) -> (f32, f32) {
        match self {
            WeightMode::Both => (w, w),
            WeightMode::ClsOnly => (w, 1.0),
            WeightMode::LocOnly => (1.0, w),
            WeightMode::Off => (1.0, 1.0),
        }
    }

    /// Weight entering the normalization denominator for a positive anchor.
    #[inline]
    pub fn denominator_weight(&self, w: f32) -> f32 {
        match self {
            WeightMode::Off => 1.0,
            _ => w,
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(WeightMode::Both),
            "cls_only" => Ok(WeightMode::ClsOnly),
            "loc_only" => Ok(WeightMode::LocOnly),
            "off" => Ok(WeightMode::Off),
            other => Err(Error::Config(format!(
                "unknown weight mode '{other}' (expected both|cls_only|loc_only|off)"
            ))),
        }
    }
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WeightMode::Both => "both",
            WeightMode::ClsOnly => "cls_only",
            WeightMode::LocOnly => "loc_only",
            WeightMode::Off => "off",
        };
        f.write_str(s)
    }
}

/// Soft anchor weighting configuration.
#[derive(Debug, Clone, Copy)]
pub struct SoftWeightConfig {
    /// Exponent of the generalized centerness; larger values down-weight
    /// off-center anchors more steeply.
    pub eta: f32,
    /// Valid-box shrink factor.
    pub epsilon: f32,
    pub mode: WeightMode,
}

impl Default for SoftWeightConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            epsilon: 0.2,
            mode: WeightMode::Both,
        }
    }
}

/// Generalized centerness:
/// `[min(dl,dr)*min(dt,db) / (max(dl,dr)*max(dt,db))]^eta`, in (0, 1],
/// equal to 1 exactly when the anchor sits at the box center.
pub fn centerness(d: &DistanceTargets, eta: f32) -> f32 {
    debug_assert!(d.left > 0.0 && d.top > 0.0 && d.right > 0.0 && d.bottom > 0.0);
    let ratio = (d.left.min(d.right) * d.top.min(d.bottom))
        / (d.left.max(d.right) * d.top.max(d.bottom));
    ratio.powf(eta)
}

/// Attention weight of one anchor point.
///
/// Negative anchors (no assigned instance) keep weight 1. Positive anchors
/// get `w_level * centerness`; an absent level weight (hard selection phase)
/// is treated as 1. `mode == Off` forces every weight to 1.
pub fn anchor_weight(
    anchor: &AnchorPoint,
    assigned_instance: Option<&GroundTruthBox>,
    level_weight: Option<f32>,
    cfg: &SoftWeightConfig,
) -> f32 {
    if cfg.mode == WeightMode::Off {
        return 1.0;
    }
    let Some(instance) = assigned_instance else {
        return 1.0;
    };
    // Centerness is scale invariant, so unnormalized distances (z = 1 at the
    // anchor's own stride) give the same value as the encoded targets.
    let (x, y) = anchor.location();
    let [x1, y1, x2, y2] = instance.corners();
    let d = DistanceTargets::new(x - x1, y - y1, x2 - x, y2 - y);
    level_weight.unwrap_or(1.0) * centerness(&d, cfg.eta)
}

/// Per-anchor weights and positive mask for one pyramid level.
#[derive(Debug, Clone)]
pub struct LevelWeightMap {
    pub level: u32,
    pub width: usize,
    pub height: usize,
    pub weights: Vec<f32>,
    pub positive: Vec<bool>,
}

impl LevelWeightMap {
    pub fn uniform(level: u32, width: usize, height: usize) -> Self {
        Self {
            level,
            width,
            height,
            weights: vec![1.0; width * height],
            positive: vec![false; width * height],
        }
    }
}

/// Attention weights over all pyramid levels of one image.
#[derive(Debug, Clone)]
pub struct WeightMap {
    pub levels: Vec<LevelWeightMap>,
}

impl WeightMap {
    /// Sum of weights over positive anchors (the loss denominator) and the
    /// positive count.
    pub fn positive_sum(&self, mode: WeightMode) -> (f64, usize) {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for level in &self.levels {
            for (w, &pos) in level.weights.iter().zip(&level.positive) {
                if pos {
                    sum += mode.denominator_weight(*w) as f64;
                    count += 1;
                }
            }
        }
        (sum, count)
    }
}
