//! Instance-to-level assignment: instance-dependent per-level losses,
//! min-loss hard selection, the feature-selection network that predicts soft
//! per-level weights, and top-k soft assignment.

use crate::geometry::{
    anchors_in_box, encode_targets, valid_box, AnchorPoint, GroundTruthBox, PyramidSpec,
};
use crate::losses::{focal_loss, iou_loss, FocalConfig, LOG_FLOOR};
use crate::numerics::{
    bias_init, gaussian_from, linear_forward, relu_backward, relu_forward, softmax, Conv2d,
    Linear, Param, SplitMix64, Tensor,
};

/// Soft level-selection configuration.
#[derive(Debug, Clone, Copy)]
pub struct SelectionConfig {
    /// Number of lowest-loss pyramid levels each instance is assigned to.
    pub top_k: usize,
    /// Coefficient of the selection-network loss in the total loss.
    pub lambda: f32,
    /// RoIAlign output side length.
    pub roi_size: usize,
    /// Bilinear samples per bin axis.
    pub sampling_ratio: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            lambda: 0.1,
            roi_size: 7,
            sampling_ratio: 2,
        }
    }
}

/// Per-instance probability weights over pyramid levels (softmax output).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelWeights(pub Vec<f32>);

impl LevelWeights {
    pub fn uniform(num_levels: usize) -> Self {
        Self(vec![1.0 / num_levels as f32; num_levels])
    }
}

/// Mean unweighted per-anchor loss (focal + IoU) an instance would incur on
/// one pyramid level, over the anchors inside its valid box.
///
/// A level whose valid box holds no anchors returns infinity and can never
/// be selected.
pub fn instance_level_loss(
    instance: &GroundTruthBox,
    level: u32,
    cls_logits: &Tensor,
    distances: &Tensor,
    spec: &PyramidSpec,
    z: f32,
    epsilon: f32,
    focal_cfg: &FocalConfig,
) -> f64 {
    let shrunk = valid_box(instance, epsilon);
    let num_classes = cls_logits.shape()[0];
    let mut sum = 0.0f64;
    let mut count = 0usize;
    let mut logits = vec![0.0f32; num_classes];
    for anchor in anchors_in_box(spec, level, &shrunk) {
        if !strictly_inside(instance, &anchor) {
            continue;
        }
        for (k, v) in logits.iter_mut().enumerate() {
            *v = cls_logits.at3(k, anchor.j, anchor.i);
        }
        let target_d = encode_targets(&anchor, instance, z);
        let pred_d = crate::geometry::DistanceTargets::new(
            distances.at3(0, anchor.j, anchor.i),
            distances.at3(1, anchor.j, anchor.i),
            distances.at3(2, anchor.j, anchor.i),
            distances.at3(3, anchor.j, anchor.i),
        );
        sum += focal_loss(&logits, instance.class_id as usize, focal_cfg)
            + iou_loss(&pred_d, &target_d);
        count += 1;
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

pub(crate) fn strictly_inside(instance: &GroundTruthBox, anchor: &AnchorPoint) -> bool {
    let (x, y) = anchor.location();
    (x - instance.cx).abs() < instance.width / 2.0
        && (y - instance.cy).abs() < instance.height / 2.0
}

/// Index of the level with the minimal instance-dependent loss; ties break
/// toward the lower level. `None` when every level is infinite.
pub fn hard_select(level_losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, &loss) in level_losses.iter().enumerate() {
        if !loss.is_finite() {
            continue;
        }
        match best {
            Some((_, b)) if loss >= b => {}
            _ => best = Some((idx, loss)),
        }
    }
    best.map(|(idx, _)| idx)
}

/// The `k` levels with the smallest instance-dependent losses, each paired
/// with its soft weight. Fewer than `k` finite levels assigns to all finite
/// ones; weights of unselected levels are dropped without renormalization.
pub fn soft_assign(
    level_losses: &[f64],
    weights: &LevelWeights,
    top_k: usize,
) -> Vec<(usize, f32)> {
    debug_assert_eq!(level_losses.len(), weights.0.len());
    let mut order: Vec<usize> = (0..level_losses.len())
        .filter(|&i| level_losses[i].is_finite())
        .collect();
    order.sort_by(|&a, &b| {
        level_losses[a]
            .partial_cmp(&level_losses[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(top_k)
        .map(|idx| (idx, weights.0[idx]))
        .collect()
}

fn axis_weights(coord: f32, size: usize) -> (usize, usize, f32) {
    let centered = coord - 0.5;
    let floor = centered.floor();
    let frac = centered - floor;
    let lo = (floor as isize).clamp(0, size as isize - 1) as usize;
    let hi = (floor as isize + 1).clamp(0, size as isize - 1) as usize;
    (lo, hi, frac)
}

fn bilinear_sample(feature: &Tensor, channel: usize, x: f32, y: f32) -> f32 {
    let (h, w) = (feature.shape()[1], feature.shape()[2]);
    let (x0, x1, fx) = axis_weights(x, w);
    let (y0, y1, fy) = axis_weights(y, h);
    let v00 = feature.at3(channel, y0, x0);
    let v01 = feature.at3(channel, y0, x1);
    let v10 = feature.at3(channel, y1, x0);
    let v11 = feature.at3(channel, y1, x1);
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
}

/// RoIAlign of one feature map: the box (image coordinates) is divided into
/// `roi_size^2` bins and each bin averages `sampling_ratio^2` bilinear
/// samples. Feature cell centers sit at `(i + 0.5) * stride` in image space.
pub fn roialign_level(
    feature: &Tensor,
    stride: f32,
    box_corners: &[f32; 4],
    roi_size: usize,
    sampling_ratio: usize,
) -> Tensor {
    let channels = feature.shape()[0];
    let x1 = box_corners[0] / stride;
    let y1 = box_corners[1] / stride;
    let bin_w = (box_corners[2] - box_corners[0]) / stride / roi_size as f32;
    let bin_h = (box_corners[3] - box_corners[1]) / stride / roi_size as f32;
    let inv_samples = 1.0 / (sampling_ratio * sampling_ratio) as f32;
    let mut out = Tensor::zeros(&[channels, roi_size, roi_size]);
    for c in 0..channels {
        for by in 0..roi_size {
            for bx in 0..roi_size {
                let mut acc = 0.0f32;
                for sy in 0..sampling_ratio {
                    let y = y1 + bin_h * (by as f32 + (sy as f32 + 0.5) / sampling_ratio as f32);
                    for sx in 0..sampling_ratio {
                        let x =
                            x1 + bin_w * (bx as f32 + (sx as f32 + 0.5) / sampling_ratio as f32);
                        acc += bilinear_sample(feature, c, x, y);
                    }
                }
                let idx = out.off3(c, by, bx);
                out.data_mut()[idx] = acc * inv_samples;
            }
        }
    }
    out
}

/// Scatter of the RoIAlign gradient back onto a feature map.
pub fn roialign_level_backward(
    feature_shape: &[usize],
    stride: f32,
    box_corners: &[f32; 4],
    roi_size: usize,
    sampling_ratio: usize,
    grad_out: &Tensor,
) -> Tensor {
    let (channels, h, w) = (feature_shape[0], feature_shape[1], feature_shape[2]);
    let x1 = box_corners[0] / stride;
    let y1 = box_corners[1] / stride;
    let bin_w = (box_corners[2] - box_corners[0]) / stride / roi_size as f32;
    let bin_h = (box_corners[3] - box_corners[1]) / stride / roi_size as f32;
    let inv_samples = 1.0 / (sampling_ratio * sampling_ratio) as f32;
    let mut grad = Tensor::zeros(feature_shape);
    for c in 0..channels {
        for by in 0..roi_size {
            for bx in 0..roi_size {
                let g = grad_out.at3(c, by, bx) * inv_samples;
                if g == 0.0 {
                    continue;
                }
                for sy in 0..sampling_ratio {
                    let y = y1 + bin_h * (by as f32 + (sy as f32 + 0.5) / sampling_ratio as f32);
                    let (y0, y1i, fy) = axis_weights(y, h);
                    for sx in 0..sampling_ratio {
                        let x =
                            x1 + bin_w * (bx as f32 + (sx as f32 + 0.5) / sampling_ratio as f32);
                        let (x0, x1i, fx) = axis_weights(x, w);
                        let d = grad.data_mut();
                        let base = c * h * w;
                        d[base + y0 * w + x0] += g * (1.0 - fy) * (1.0 - fx);
                        d[base + y0 * w + x1i] += g * (1.0 - fy) * fx;
                        d[base + y1i * w + x0] += g * fy * (1.0 - fx);
                        d[base + y1i * w + x1i] += g * fy * fx;
                    }
                }
            }
        }
    }
    grad
}

/// Channel-concatenated RoIAlign blocks over all pyramid levels.
pub fn extract_instance_feature(
    features: &[Tensor],
    spec: &PyramidSpec,
    instance: &GroundTruthBox,
    cfg: &SelectionConfig,
) -> Tensor {
    assert_eq!(features.len(), spec.num_levels());
    let corners = instance.corners();
    let per_level: Vec<Tensor> = spec
        .levels()
        .zip(features)
        .map(|(level, feat)| {
            roialign_level(
                feat,
                PyramidSpec::stride(level) as f32,
                &corners,
                cfg.roi_size,
                cfg.sampling_ratio,
            )
        })
        .collect();
    let channels: usize = per_level.iter().map(|t| t.shape()[0]).sum();
    let mut data = Vec::with_capacity(channels * cfg.roi_size * cfg.roi_size);
    for block in &per_level {
        data.extend_from_slice(block.data());
    }
    Tensor::from_vec(&[channels, cfg.roi_size, cfg.roi_size], data)
}

/// Feature-selection network: three 3x3 convolutions without padding, each
/// followed by ReLU, then a fully-connected layer with softmax over levels.
/// With a 7x7 input the spatial size shrinks 7 -> 5 -> 3 -> 1.
#[derive(Debug, Clone)]
pub struct SelectNet {
    pub convs: Vec<Conv2d>,
    pub fc: Linear,
    pub num_levels: usize,
    pub roi_size: usize,
}

/// Activations cached by [`SelectNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct SelectNetCache {
    input: Tensor,
    pre_relu: Vec<Tensor>,
    post_relu: Vec<Tensor>,
    flat: Vec<f32>,
    pub probs: Vec<f32>,
}

impl SelectNet {
    /// Builds the network with Gaussian-initialized weights (sigma 0.01) and
    /// zero biases.
    pub fn new(
        in_channels: usize,
        width: usize,
        num_levels: usize,
        roi_size: usize,
        rng: &mut SplitMix64,
    ) -> Self {
        assert!(roi_size >= 7, "roi_size must be at least 7, got {roi_size}");
        let sigma = 0.01;
        let mut convs = Vec::with_capacity(3);
        let mut channels = in_channels;
        for _ in 0..3 {
            convs.push(Conv2d::new(
                gaussian_from(&[width, channels, 3, 3], sigma, rng),
                bias_init(width, 0.0),
                1,
                0,
            ));
            channels = width;
        }
        let spatial = roi_size - 6;
        let fc_in = width * spatial * spatial;
        let fc = Linear::new(
            gaussian_from(&[num_levels, fc_in], sigma, rng),
            bias_init(num_levels, 0.0),
        );
        Self {
            convs,
            fc,
            num_levels,
            roi_size,
        }
    }

    pub fn forward(&self, block: &Tensor) -> (LevelWeights, SelectNetCache) {
        debug_assert_eq!(block.shape()[1], self.roi_size);
        let mut pre_relu = Vec::with_capacity(3);
        let mut post_relu = Vec::with_capacity(3);
        let mut x = block.clone();
        for conv in &self.convs {
            let z = conv.forward(&x).expect("select net conv shape");
            let a = relu_forward(&z);
            pre_relu.push(z);
            post_relu.push(a.clone());
            x = a;
        }
        let flat = x.data().to_vec();
        let logits = linear_forward(&self.fc.weight.value, &self.fc.bias.value, &flat);
        let probs = softmax(&logits);
        (
            LevelWeights(probs.clone()),
            SelectNetCache {
                input: block.clone(),
                pre_relu,
                post_relu,
                flat,
                probs,
            },
        )
    }

    /// Backward pass of softmax cross entropy against `target_level`,
    /// scaled by `scale`. Accumulates parameter gradients and returns the
    /// gradient with respect to the input block.
    pub fn backward_cross_entropy(
        &mut self,
        cache: &SelectNetCache,
        target_level: usize,
        scale: f32,
    ) -> Tensor {
        let grad_logits: Vec<f32> = cache
            .probs
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let t = if i == target_level { 1.0 } else { 0.0 };
                scale * (p - t)
            })
            .collect();
        let grad_flat = self.fc.backward(&cache.flat, &grad_logits);
        let last_shape = cache.post_relu[2].shape().to_vec();
        let mut grad = Tensor::from_vec(&last_shape, grad_flat);
        for layer in (0..3).rev() {
            let gz = relu_backward(&cache.pre_relu[layer], &grad);
            let input = if layer == 0 {
                &cache.input
            } else {
                &cache.post_relu[layer - 1]
            };
            grad = self.convs[layer]
                .backward(input, &gz)
                .expect("select net conv backward shape");
        }
        grad
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut params = Vec::new();
        for conv in &mut self.convs {
            params.push(&mut conv.weight);
            params.push(&mut conv.bias);
        }
        params.push(&mut self.fc.weight);
        params.push(&mut self.fc.bias);
        params
    }
}

/// Cross entropy of the predicted level distribution against the min-loss
/// level: `-ln(p[target])`, floored. Averaging over the instances of a batch
/// is the caller's responsibility.
pub fn select_net_loss(predicted: &LevelWeights, min_loss_level: usize) -> f64 {
    -(predicted.0[min_loss_level] as f64).max(LOG_FLOOR).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_difference_oracle, gradient_mismatch};

    fn spec_64() -> PyramidSpec {
        PyramidSpec::new(2, 5, 64, 64).unwrap()
    }

    /// Outputs that reproduce the targets exactly for `instance`.
    fn perfect_outputs(
        spec: &PyramidSpec,
        level: u32,
        instance: &GroundTruthBox,
        num_classes: usize,
        z: f32,
    ) -> (Tensor, Tensor) {
        let (cols, rows) = spec.grid_size(level);
        let mut cls = Tensor::filled(&[num_classes, rows, cols], -40.0);
        let mut dist = Tensor::filled(&[4, rows, cols], 1.0);
        for j in 0..rows {
            for i in 0..cols {
                let idx = cls.off3(instance.class_id as usize - 1, j, i);
                cls.data_mut()[idx] = 40.0;
                let anchor = AnchorPoint::new(level, i, j);
                if strictly_inside(instance, &anchor) {
                    let d = encode_targets(&anchor, instance, z);
                    for (k, v) in d.as_array().iter().enumerate() {
                        let idx = dist.off3(k, j, i);
                        dist.data_mut()[idx] = *v;
                    }
                }
            }
        }
        (cls, dist)
    }

    #[test]
    fn perfect_predictions_give_zero_level_loss() {
        let spec = spec_64();
        let b = GroundTruthBox::new(1, 32.0, 32.0, 40.0, 40.0);
        let (cls, dist) = perfect_outputs(&spec, 2, &b, 3, 4.0);
        let loss =
            instance_level_loss(&b, 2, &cls, &dist, &spec, 4.0, 0.5, &FocalConfig::default());
        assert!(loss < 1e-9, "loss {loss}");
    }

    #[test]
    fn singleton_level_loss_is_the_anchor_loss() {
        let spec = spec_64();
        // Valid box containing exactly one anchor at level 4 (stride 16).
        let b = GroundTruthBox::new(2, 24.0, 24.0, 40.0, 40.0);
        let eps = 0.2; // valid box 8x8 centered at 24: single anchor (i=1,j=1)
        let shrunk = valid_box(&b, eps);
        let anchors = anchors_in_box(&spec, 4, &shrunk);
        assert_eq!(anchors.len(), 1);
        let (cols, rows) = spec.grid_size(4);
        let cls = Tensor::zeros(&[3, rows, cols]);
        let dist = Tensor::filled(&[4, rows, cols], 1.0);
        let level_loss =
            instance_level_loss(&b, 4, &cls, &dist, &spec, 4.0, eps, &FocalConfig::default());
        let anchor = anchors[0];
        let logits = vec![0.0f32; 3];
        let target_d = encode_targets(&anchor, &b, 4.0);
        let direct = focal_loss(&logits, 2, &FocalConfig::default())
            + iou_loss(&DistanceTargets::new(1.0, 1.0, 1.0, 1.0), &target_d);
        assert!((level_loss - direct).abs() < 1e-12);
    }

    use crate::geometry::DistanceTargets;

    #[test]
    fn empty_valid_box_yields_infinite_loss() {
        let spec = spec_64();
        // 6x6 instance: valid box 1.2x1.2, no stride-32 anchors inside.
        let b = GroundTruthBox::new(1, 30.0, 30.0, 6.0, 6.0);
        let (cols, rows) = spec.grid_size(5);
        let cls = Tensor::zeros(&[3, rows, cols]);
        let dist = Tensor::filled(&[4, rows, cols], 1.0);
        let loss =
            instance_level_loss(&b, 5, &cls, &dist, &spec, 4.0, 0.2, &FocalConfig::default());
        assert!(loss.is_infinite());
    }

    #[test]
    fn hard_select_cases() {
        assert_eq!(
            hard_select(&[3.0, 1.0, 2.0, f64::INFINITY, f64::INFINITY]),
            Some(1)
        );
        assert_eq!(hard_select(&[f64::INFINITY, 5.0, f64::INFINITY]), Some(1));
        assert_eq!(hard_select(&[1.0, 1.0, 2.0]), Some(0)); // tie -> lower level
        assert_eq!(hard_select(&[f64::INFINITY; 3]), None);
    }

    #[test]
    fn hard_select_invariant_under_positive_scaling() {
        let losses = [2.5, 0.7, 1.9, 4.0];
        let base = hard_select(&losses);
        for scale in [0.1f64, 3.0, 100.0] {
            let scaled: Vec<f64> = losses.iter().map(|l| l * scale).collect();
            assert_eq!(hard_select(&scaled), base);
        }
    }

    #[test]
    fn soft_assign_examples() {
        let losses = [3.0, 1.0, 2.0, 4.0, 5.0];
        let weights = LevelWeights(vec![0.1, 0.4, 0.3, 0.15, 0.05]);
        let picked = soft_assign(&losses, &weights, 3);
        assert_eq!(picked, vec![(1, 0.4), (2, 0.3), (0, 0.1)]);

        // k = 1 reduces to hard selection.
        let top1 = soft_assign(&losses, &weights, 1);
        assert_eq!(top1, vec![(hard_select(&losses).unwrap(), 0.4)]);

        // k = L assigns every finite level.
        let all = soft_assign(&losses, &weights, 5);
        assert_eq!(all.len(), 5);

        // Fewer finite levels than k.
        let sparse = [f64::INFINITY, 1.0, f64::INFINITY, 2.0, f64::INFINITY];
        let picked = soft_assign(&sparse, &weights, 3);
        assert_eq!(picked, vec![(1, 0.4), (3, 0.15)]);
    }

    #[test]
    fn soft_assign_contains_hard_selection_and_is_distinct() {
        let losses = [0.9, 0.2, 0.7, 0.4, 1.5];
        let weights = LevelWeights::uniform(5);
        for k in 1..=5 {
            let picked = soft_assign(&losses, &weights, k);
            assert_eq!(picked.len(), k.min(5));
            let hard = hard_select(&losses).unwrap();
            assert!(picked.iter().any(|&(idx, _)| idx == hard));
            let mut idxs: Vec<usize> = picked.iter().map(|&(i, _)| i).collect();
            idxs.dedup();
            assert_eq!(idxs.len(), picked.len());
        }
    }

    #[test]
    fn roialign_preserves_constants() {
        let feat = Tensor::filled(&[2, 8, 8], 3.5);
        let out = roialign_level(&feat, 8.0, &[10.0, 12.0, 50.0, 40.0], 7, 2);
        for &v in out.data() {
            assert!((v - 3.5).abs() < 1e-6);
        }
    }

    #[test]
    fn roialign_matches_dense_ramp_oracle() {
        // f(x_img, y_img) = 2*u + 3*v in feature coordinates, where the cell
        // (i, j) holds the ramp at its center (u = i + 0.5). Bilinear
        // interpolation reproduces the ramp, so each bin must equal the mean
        // of the ramp at its sample points.
        let (h, w) = (16usize, 16usize);
        let stride = 4.0f32;
        let mut feat = Tensor::zeros(&[1, h, w]);
        for j in 0..h {
            for i in 0..w {
                let idx = feat.off3(0, j, i);
                feat.data_mut()[idx] = 2.0 * (i as f32 + 0.5) + 3.0 * (j as f32 + 0.5);
            }
        }
        let corners = [6.0f32, 9.0, 54.0, 49.0];
        let (roi, ratio) = (7usize, 2usize);
        let out = roialign_level(&feat, stride, &corners, roi, ratio);
        let x1 = corners[0] / stride;
        let y1 = corners[1] / stride;
        let bin_w = (corners[2] - corners[0]) / stride / roi as f32;
        let bin_h = (corners[3] - corners[1]) / stride / roi as f32;
        for by in 0..roi {
            for bx in 0..roi {
                // Brute-force oracle: average the analytic ramp over samples.
                let mut expect = 0.0f32;
                for sy in 0..ratio {
                    for sx in 0..ratio {
                        let u = x1 + bin_w * (bx as f32 + (sx as f32 + 0.5) / ratio as f32);
                        let v = y1 + bin_h * (by as f32 + (sy as f32 + 0.5) / ratio as f32);
                        expect += 2.0 * u + 3.0 * v;
                    }
                }
                expect /= (ratio * ratio) as f32;
                let got = out.at3(0, by, bx);
                assert!((got - expect).abs() < 1e-4, "bin ({bx},{by}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn roialign_full_map_identity_alignment() {
        // RoI covering the whole map with roi_size = map size and ratio 1
        // samples exactly the cell centers.
        let n = 7usize;
        let stride = 8.0f32;
        let mut feat = Tensor::zeros(&[1, n, n]);
        for j in 0..n {
            for i in 0..n {
                let idx = feat.off3(0, j, i);
                feat.data_mut()[idx] = (10 * j + i) as f32;
            }
        }
        let out = roialign_level(&feat, stride, &[0.0, 0.0, n as f32 * stride, n as f32 * stride], n, 1);
        assert_eq!(out.data(), feat.data());
    }

    #[test]
    fn roialign_backward_matches_finite_differences() {
        let mut rng = SplitMix64::new(91);
        let mut feat = Tensor::zeros(&[2, 6, 6]);
        for v in feat.data_mut() {
            *v = rng.range_f32(-1.0, 1.0);
        }
        let corners = [5.0f32, 7.0, 41.0, 35.0];
        let mut gout = Tensor::zeros(&[2, 7, 7]);
        for v in gout.data_mut() {
            *v = rng.range_f32(-1.0, 1.0);
        }
        let grad = roialign_level_backward(&[2, 6, 6], 8.0, &corners, 7, 2, &gout);
        let numeric = finite_difference_oracle(
            |p| {
                let f = Tensor::from_vec(&[2, 6, 6], p.to_vec());
                roialign_level(&f, 8.0, &corners, 7, 2)
                    .data()
                    .iter()
                    .zip(gout.data())
                    .map(|(&a, &g)| a as f64 * g as f64)
                    .sum()
            },
            feat.data(),
            1e-2,
        );
        for (a, n) in grad.data().iter().zip(numeric.iter()) {
            assert!(gradient_mismatch(*a as f64, *n, 1e-2) < 1e-3, "{a} vs {n}");
        }
    }

    #[test]
    fn extract_concatenates_levels_in_order() {
        let spec = PyramidSpec::new(4, 5, 64, 64).unwrap();
        let features = vec![Tensor::filled(&[3, 4, 4], 1.0), Tensor::filled(&[3, 2, 2], 2.0)];
        let cfg = SelectionConfig::default();
        let b = GroundTruthBox::new(1, 32.0, 32.0, 30.0, 30.0);
        let block = extract_instance_feature(&features, &spec, &b, &cfg);
        assert_eq!(block.shape(), &[6, 7, 7]);
        for c in 0..3 {
            for &v in block.channel(c) {
                assert!((v - 1.0).abs() < 1e-6);
            }
        }
        for c in 3..6 {
            for &v in block.channel(c) {
                assert!((v - 2.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn select_net_outputs_live_on_the_simplex() {
        let mut rng = SplitMix64::new(7);
        let net = SelectNet::new(8, 6, 4, 7, &mut rng);
        for _ in 0..50 {
            let mut block = Tensor::zeros(&[8, 7, 7]);
            for v in block.data_mut() {
                *v = rng.range_f32(-2.0, 2.0);
            }
            let (weights, _) = net.forward(&block);
            let sum: f32 = weights.0.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(weights.0.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn zero_parameters_give_exactly_uniform_weights() {
        let mut rng = SplitMix64::new(7);
        let mut net = SelectNet::new(4, 5, 5, 7, &mut rng);
        for p in net.params_mut() {
            p.value.fill(0.0);
        }
        let mut block = Tensor::zeros(&[4, 7, 7]);
        for (i, v) in block.data_mut().iter_mut().enumerate() {
            *v = (i % 13) as f32 * 0.1 - 0.5;
        }
        let (weights, _) = net.forward(&block);
        for &p in &weights.0 {
            assert_eq!(p, 1.0 / 5.0);
        }
    }

    #[test]
    fn select_net_loss_golden_values() {
        let uniform = LevelWeights::uniform(5);
        assert!((select_net_loss(&uniform, 2) - 1.609438).abs() < 1e-6);
        let half = LevelWeights(vec![0.5, 0.25, 0.25]);
        assert!((select_net_loss(&half, 0) - 0.693147).abs() < 1e-6);
        let one_hot = LevelWeights(vec![0.0, 1.0, 0.0]);
        assert_eq!(select_net_loss(&one_hot, 1), 0.0);
    }

    /// Finite-difference sweep of the selection-net cross entropy over every
    /// parameter tensor and the input block.
    ///
    /// ReLU kinks make FD unreliable at coordinates whose perturbation flips
    /// an activation sign: when `strict` is false those coordinates are
    /// detected (the two step sizes disagree) and skipped, and the remaining
    /// ones use a looser tolerance. Kink-free configurations run strict.
    fn sweep_select_net_gradients(net: &mut SelectNet, block: &Tensor, target: usize, strict: bool) {
        // f32 forward noise limits the absolute FD accuracy to ~1e-4 here,
        // hence the magnitude floors under the relative tolerances.
        let (tol, floor) = if strict { (1e-3, 0.25) } else { (1e-2, 5e-2) };
        let check = |analytic: &[f32], point: &[f32], f: &mut dyn FnMut(&[f32]) -> f64, label: &str| {
            let coarse = finite_difference_oracle(&mut *f, point, 1.5e-2);
            let fine = finite_difference_oracle(&mut *f, point, 6e-3);
            let mut skipped = 0usize;
            for ((a, n1), n2) in analytic.iter().zip(coarse.iter()).zip(fine.iter()) {
                if !strict && gradient_mismatch(*n1, *n2, 5e-2) > 2e-3 {
                    skipped += 1;
                    continue;
                }
                let n = if strict { *n1 } else { *n2 };
                assert!(
                    gradient_mismatch(*a as f64, n, floor) < tol,
                    "{label}: analytic {a} vs numeric {n}"
                );
            }
            assert!(skipped <= analytic.len() / 2 + 2, "{label}");
        };

        let (_, cache) = net.forward(block);
        for p in net.params_mut() {
            p.zero_grad();
        }
        let grad_input = net.backward_cross_entropy(&cache, target, 1.0);

        let net_ref = net.clone();
        check(
            grad_input.data(),
            block.data(),
            &mut |p| {
                let b = Tensor::from_vec(block.shape(), p.to_vec());
                let (w, _) = net_ref.forward(&b);
                select_net_loss(&w, target)
            },
            "input",
        );

        let n_params = net.params_mut().len();
        for pi in 0..n_params {
            let analytic = net.params_mut()[pi].grad.clone();
            let point = net.params_mut()[pi].value.clone();
            let base = net.clone();
            check(
                analytic.data(),
                point.data(),
                &mut |vals| {
                    let mut probe = base.clone();
                    probe.params_mut()[pi].value.data_mut().copy_from_slice(vals);
                    let (w, _) = probe.forward(block);
                    select_net_loss(&w, target)
                },
                &format!("param {pi}"),
            );
        }
    }

    #[test]
    fn select_net_gradients_match_finite_differences_kink_free() {
        // Positive conv weights, biases and inputs keep every ReLU strictly
        // active, so the network is smooth and the check can be strict.
        let mut rng = SplitMix64::new(13);
        for trial in 0..4 {
            let mut net = SelectNet::new(3, 4, 3, 7, &mut rng);
            let n_params = net.params_mut().len();
            for (pi, p) in net.params_mut().into_iter().enumerate() {
                for v in p.value.data_mut() {
                    // Signed fc weights still give meaningful CE gradients.
                    *v = if pi >= n_params - 2 {
                        rng.range_f32(-1.0, 1.0)
                    } else {
                        rng.range_f32(0.01, 0.05)
                    };
                }
            }
            let mut block = Tensor::zeros(&[3, 7, 7]);
            for v in block.data_mut() {
                *v = rng.range_f32(0.5, 1.5);
            }
            sweep_select_net_gradients(&mut net, &block, trial % 3, true);
        }
    }

    #[test]
    fn select_net_gradients_match_finite_differences_random() {
        let mut rng = SplitMix64::new(17);
        for trial in 0..4 {
            let mut net = SelectNet::new(3, 4, 3, 7, &mut rng);
            for p in net.params_mut() {
                for v in p.value.data_mut() {
                    *v = rng.range_f32(-0.4, 0.4);
                }
            }
            let mut block = Tensor::zeros(&[3, 7, 7]);
            for v in block.data_mut() {
                *v = rng.range_f32(-1.0, 1.0);
            }
            sweep_select_net_gradients(&mut net, &block, trial % 3, false);
        }
    }
}
