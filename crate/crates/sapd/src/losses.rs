//! Focal loss, IoU loss, per-anchor combination and the soft-weighted total
//! loss with its normalization over positive anchor weights.
//!
//! Loss scalars and their gradients are computed in f64 (the network itself
//! stays f32); gradients are hand-derived and checked against the central
//! finite-difference oracle.

use crate::geometry::DistanceTargets;
use crate::weighting::WeightMode;

/// Floor applied to every log argument.
pub const LOG_FLOOR: f64 = 1e-12;
/// Floor applied to the IoU ratio before taking its log.
pub const IOU_FLOOR: f64 = 1e-8;

/// Focal loss constants. The defaults are the standard values of the cited
/// formulation; this detector does not tune them.
#[derive(Debug, Clone, Copy)]
pub struct FocalConfig {
    pub alpha: f32,
    pub gamma: f32,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
        }
    }
}

/// Sum of per-class sigmoid focal terms.
///
/// `target_class` is 1-based; 0 means background (all classes negative).
/// For the target class the term is `-alpha*(1-p)^gamma*ln(p)`, for every
/// other class `-(1-alpha)*p^gamma*ln(1-p)`.
pub fn focal_loss(logits: &[f32], target_class: usize, cfg: &FocalConfig) -> f64 {
    focal_terms(logits, target_class, cfg, None)
}

/// Focal loss together with its analytic gradient with respect to the logits.
pub fn focal_loss_grad(
    logits: &[f32],
    target_class: usize,
    cfg: &FocalConfig,
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(grad.len(), logits.len());
    focal_terms(logits, target_class, cfg, Some(grad))
}

fn focal_terms(
    logits: &[f32],
    target_class: usize,
    cfg: &FocalConfig,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    debug_assert!(target_class <= logits.len(), "target class out of range");
    let alpha = cfg.alpha as f64;
    let gamma = cfg.gamma as f64;
    let mut loss = 0.0f64;
    for (k, &logit) in logits.iter().enumerate() {
        let p = 1.0 / (1.0 + (-(logit as f64)).exp());
        let is_target = k + 1 == target_class;
        let (term, dterm) = if is_target {
            let log_p = p.max(LOG_FLOOR).ln();
            let term = -alpha * (1.0 - p).powf(gamma) * log_p;
            let dterm = alpha * (1.0 - p).powf(gamma) * (gamma * p * log_p - (1.0 - p));
            (term, dterm)
        } else {
            let log_q = (1.0 - p).max(LOG_FLOOR).ln();
            let term = -(1.0 - alpha) * p.powf(gamma) * log_q;
            let dterm = (1.0 - alpha) * p.powf(gamma) * (p - gamma * (1.0 - p) * log_q);
            (term, dterm)
        };
        loss += term;
        if let Some(g) = grad.as_deref_mut() {
            g[k] = dterm;
        }
    }
    loss
}

/// `-ln(IoU)` between the predicted and target anchor-relative boxes
/// `[-dl, -dt, dr, db]`. Both inputs must be strictly positive, which makes
/// the two boxes always overlap.
pub fn iou_loss(pred: &DistanceTargets, target: &DistanceTargets) -> f64 {
    iou_loss_impl(pred, target, None)
}

/// IoU loss and its analytic gradient with respect to the four predicted
/// distances (left, top, right, bottom).
pub fn iou_loss_grad(pred: &DistanceTargets, target: &DistanceTargets, grad: &mut [f64; 4]) -> f64 {
    iou_loss_impl(pred, target, Some(grad))
}

fn iou_loss_impl(
    pred: &DistanceTargets,
    target: &DistanceTargets,
    grad: Option<&mut [f64; 4]>,
) -> f64 {
    let [pl, pt, pr, pb] = pred.as_array().map(|v| v as f64);
    let [tl, tt, tr, tb] = target.as_array().map(|v| v as f64);
    debug_assert!(
        pl > 0.0 && pt > 0.0 && pr > 0.0 && pb > 0.0,
        "predicted distances must be positive"
    );
    debug_assert!(tl > 0.0 && tt > 0.0 && tr > 0.0 && tb > 0.0);

    let ix = pl.min(tl) + pr.min(tr);
    let iy = pt.min(tt) + pb.min(tb);
    let inter = ix * iy;
    let area_pred = (pl + pr) * (pt + pb);
    let area_target = (tl + tr) * (tt + tb);
    let union = area_pred + area_target - inter;
    let iou = (inter / union).max(IOU_FLOOR);
    let loss = -iou.ln();

    if let Some(g) = grad {
        // dLoss/dx = dU/dx / U - dI/dx / I for each predicted component.
        let di = [
            if pl < tl { iy } else { 0.0 },
            if pt < tt { ix } else { 0.0 },
            if pr < tr { iy } else { 0.0 },
            if pb < tb { ix } else { 0.0 },
        ];
        let darea = [pt + pb, pl + pr, pt + pb, pl + pr];
        for k in 0..4 {
            let du = darea[k] - di[k];
            g[k] = du / union - di[k] / inter;
        }
    }
    loss
}

/// Per-anchor loss components: focal for every anchor, plus IoU for
/// positives. Components are kept separate so the soft weight can be applied
/// to either or both.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerAnchorLoss {
    pub cls: f64,
    pub loc: f64,
}

impl PerAnchorLoss {
    pub fn total(&self) -> f64 {
        self.cls + self.loc
    }
}

pub fn per_anchor_loss(
    logits: &[f32],
    target_class: usize,
    pred_d: Option<&DistanceTargets>,
    target_d: Option<&DistanceTargets>,
    cfg: &FocalConfig,
) -> PerAnchorLoss {
    let positive = target_class > 0;
    debug_assert_eq!(positive, pred_d.is_some() && target_d.is_some());
    let cls = focal_loss(logits, target_class, cfg);
    let loc = match (pred_d, target_d) {
        (Some(p), Some(t)) => iou_loss(p, t),
        _ => 0.0,
    };
    PerAnchorLoss { cls, loc }
}

/// One anchor's loss components with its attention weight, flattened across
/// levels for the total-loss reduction.
#[derive(Debug, Clone, Copy)]
pub struct WeightedAnchorLoss {
    pub cls: f64,
    pub loc: f64,
    pub weight: f32,
    pub positive: bool,
}

/// Full loss bookkeeping for one image (or one synthetic batch in tests).
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls_sum: f64,
    pub loc_sum: f64,
    pub select_net: f64,
    pub positive_weight_sum: f64,
    pub num_positives: usize,
    /// Set when the batch had no positive anchors and the denominator was
    /// forced to 1.
    pub zero_positives: bool,
}

/// Weighted sum of anchor losses divided by the positive weight sum, plus
/// `lambda` times the selection-network loss.
///
/// Negative anchors contribute with weight 1 to the numerator only; the
/// denominator sums weights over positive anchors. A batch without positives
/// uses denominator 1 and is flagged.
pub fn total_loss(
    anchors: &[WeightedAnchorLoss],
    select_net_loss: f64,
    lambda: f64,
    mode: WeightMode,
) -> LossBreakdown {
    let mut cls_sum = 0.0f64;
    let mut loc_sum = 0.0f64;
    let mut weight_sum = 0.0f64;
    let mut num_positives = 0usize;
    for a in anchors {
        let (wc, wl) = mode.apply(if a.positive { a.weight } else { 1.0 });
        cls_sum += wc as f64 * a.cls;
        loc_sum += wl as f64 * a.loc;
        if a.positive {
            weight_sum += mode.denominator_weight(a.weight) as f64;
            num_positives += 1;
        }
    }
    let zero_positives = num_positives == 0;
    let denom = if zero_positives { 1.0 } else { weight_sum };
    LossBreakdown {
        total: (cls_sum + loc_sum) / denom + lambda * select_net_loss,
        cls_sum,
        loc_sum,
        select_net: select_net_loss,
        positive_weight_sum: weight_sum,
        num_positives,
        zero_positives,
    }
}
