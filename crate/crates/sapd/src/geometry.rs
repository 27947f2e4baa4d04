//! Boxes, pyramid layout, anchor-point locations, distance-target
//! encoding/decoding and box overlap math.
//!
//! Coordinate convention: image origin at the top-left, x rightward,
//! y downward. Ground truth is stored center-form, detections corner-form.

use crate::{Error, Result};

/// Predicted distances are clamped to this floor before decoding so an
/// untrained network cannot produce inverted boxes.
pub const DECODE_DISTANCE_FLOOR: f32 = 1e-4;

/// Feature pyramid layout over an image. The stride of level `l` is `2^l`
/// and the level grid is `W/2^l x H/2^l`; image sides must divide evenly
/// by the coarsest stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PyramidSpec {
    pub min_level: u32,
    pub max_level: u32,
    pub image_width: usize,
    pub image_height: usize,
}

impl PyramidSpec {
    pub fn new(
        min_level: u32,
        max_level: u32,
        image_width: usize,
        image_height: usize,
    ) -> Result<Self> {
        if min_level == 0 || min_level > max_level {
            return Err(Error::Config(format!(
                "invalid level range [{min_level}, {max_level}]"
            )));
        }
        let coarsest = 1usize << max_level;
        if image_width == 0 || image_height == 0 {
            return Err(Error::Config("image sides must be positive".into()));
        }
        if image_width % coarsest != 0 || image_height % coarsest != 0 {
            return Err(Error::Config(format!(
                "image size {image_width}x{image_height} is not divisible by the coarsest stride {coarsest}"
            )));
        }
        Ok(Self {
            min_level,
            max_level,
            image_width,
            image_height,
        })
    }

    #[inline]
    pub fn stride(level: u32) -> usize {
        1usize << level
    }

    /// Grid size (columns, rows) of a pyramid level.
    pub fn grid_size(&self, level: u32) -> (usize, usize) {
        let s = Self::stride(level);
        (self.image_width / s, self.image_height / s)
    }

    pub fn num_levels(&self) -> usize {
        (self.max_level - self.min_level + 1) as usize
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.min_level..=self.max_level
    }

    /// Index of `level` within [min_level, max_level].
    pub fn level_index(&self, level: u32) -> usize {
        debug_assert!(level >= self.min_level && level <= self.max_level);
        (level - self.min_level) as usize
    }

    pub fn level_at(&self, index: usize) -> u32 {
        self.min_level + index as u32
    }
}

/// Instance annotation in image space, center-form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    /// Object class, 1-based; 0 is reserved for background.
    pub class_id: u32,
    pub cx: f32,
    pub cy: f32,
    pub width: f32,
    pub height: f32,
}

impl GroundTruthBox {
    pub fn new(class_id: u32, cx: f32, cy: f32, width: f32, height: f32) -> Self {
        Self {
            class_id,
            cx,
            cy,
            width,
            height,
        }
    }

    /// Corner form [x1, y1, x2, y2].
    pub fn corners(&self) -> [f32; 4] {
        [
            self.cx - self.width / 2.0,
            self.cy - self.height / 2.0,
            self.cx + self.width / 2.0,
            self.cy + self.height / 2.0,
        ]
    }

    pub fn area(&self) -> f32 {
        self.width * self.height
    }

    /// Clips the box to the image bounds, used on ingest.
    pub fn clip_to(&self, image_width: usize, image_height: usize) -> Self {
        let [x1, y1, x2, y2] = self.corners();
        let x1 = x1.clamp(0.0, image_width as f32);
        let y1 = y1.clamp(0.0, image_height as f32);
        let x2 = x2.clamp(0.0, image_width as f32);
        let y2 = y2.clamp(0.0, image_height as f32);
        Self {
            class_id: self.class_id,
            cx: (x1 + x2) / 2.0,
            cy: (y1 + y2) / 2.0,
            width: x2 - x1,
            height: y2 - y1,
        }
    }
}

/// A pixel on a pyramid level acting as a detection hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnchorPoint {
    pub level: u32,
    pub i: usize,
    pub j: usize,
}

impl AnchorPoint {
    pub fn new(level: u32, i: usize, j: usize) -> Self {
        Self { level, i, j }
    }

    /// Image-space location: X = s*(i + 0.5), Y = s*(j + 0.5).
    pub fn location(&self) -> (f32, f32) {
        let s = PyramidSpec::stride(self.level) as f32;
        (s * (self.i as f32 + 0.5), s * (self.j as f32 + 0.5))
    }
}

/// Normalized point-to-boundary distances (left, top, right, bottom),
/// measured in units of `z * stride`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceTargets {
    pub left: f32,
    pub top: f32,
    pub right: f32,
    pub bottom: f32,
}

impl DistanceTargets {
    pub fn new(left: f32, top: f32, right: f32, bottom: f32) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn as_array(&self) -> [f32; 4] {
        [self.left, self.top, self.right, self.bottom]
    }

    pub fn from_array(a: [f32; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// Central shrunk box: same class and center, sides scaled by `epsilon`.
pub fn valid_box(instance: &GroundTruthBox, epsilon: f32) -> GroundTruthBox {
    debug_assert!(epsilon > 0.0 && epsilon <= 1.0);
    GroundTruthBox {
        class_id: instance.class_id,
        cx: instance.cx,
        cy: instance.cy,
        width: epsilon * instance.width,
        height: epsilon * instance.height,
    }
}

/// Closed-boundary membership test: a point on the box edge counts as inside.
pub fn contains(instance: &GroundTruthBox, x: f32, y: f32) -> bool {
    (x - instance.cx).abs() <= instance.width / 2.0
        && (y - instance.cy).abs() <= instance.height / 2.0
}

/// Normalized distances from the anchor location to the four box boundaries.
///
/// The anchor must be strictly inside the box; all components are positive.
pub fn encode_targets(anchor: &AnchorPoint, instance: &GroundTruthBox, z: f32) -> DistanceTargets {
    let (x_anchor, y_anchor) = anchor.location();
    let norm = z * PyramidSpec::stride(anchor.level) as f32;
    let [x1, y1, x2, y2] = instance.corners();
    let d = DistanceTargets {
        left: (x_anchor - x1) / norm,
        top: (y_anchor - y1) / norm,
        right: (x2 - x_anchor) / norm,
        bottom: (y2 - y_anchor) / norm,
    };
    assert!(
        d.left > 0.0 && d.top > 0.0 && d.right > 0.0 && d.bottom > 0.0,
        "anchor {:?} is not strictly inside box {:?}",
        anchor,
        instance
    );
    d
}

/// Inverse of [`encode_targets`]: corner box [x1, y1, x2, y2] clipped to the
/// image bounds. Distances are floored at [`DECODE_DISTANCE_FLOOR`] first.
pub fn decode_box(
    spec: &PyramidSpec,
    anchor: &AnchorPoint,
    d: &DistanceTargets,
    z: f32,
) -> [f32; 4] {
    let (x_anchor, y_anchor) = anchor.location();
    let norm = z * PyramidSpec::stride(anchor.level) as f32;
    let (w, h) = (spec.image_width as f32, spec.image_height as f32);
    [
        (x_anchor - norm * d.left.max(DECODE_DISTANCE_FLOOR)).clamp(0.0, w),
        (y_anchor - norm * d.top.max(DECODE_DISTANCE_FLOOR)).clamp(0.0, h),
        (x_anchor + norm * d.right.max(DECODE_DISTANCE_FLOOR)).clamp(0.0, w),
        (y_anchor + norm * d.bottom.max(DECODE_DISTANCE_FLOOR)).clamp(0.0, h),
    ]
}

/// Intersection over union of two corner-form boxes; 0 when disjoint or
/// degenerate.
pub fn iou(a: &[f32; 4], b: &[f32; 4]) -> f32 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let area_a = (a[2] - a[0]).max(0.0) * (a[3] - a[1]).max(0.0);
    let area_b = (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// All anchor points of `level` whose image location lies inside `region`
/// (closed boundaries), in row-major order.
pub fn anchors_in_box(
    spec: &PyramidSpec,
    level: u32,
    region: &GroundTruthBox,
) -> Vec<AnchorPoint> {
    let s = PyramidSpec::stride(level) as f32;
    let (cols, rows) = spec.grid_size(level);
    let [x1, y1, x2, y2] = region.corners();
    // X = s*(i + 0.5) inside [x1, x2]  =>  i in [x1/s - 0.5, x2/s - 0.5].
    let i_lo = ((x1 / s - 0.5).ceil().max(0.0)) as usize;
    let i_hi = ((x2 / s - 0.5).floor()).min(cols as f32 - 1.0);
    let j_lo = ((y1 / s - 0.5).ceil().max(0.0)) as usize;
    let j_hi = ((y2 / s - 0.5).floor()).min(rows as f32 - 1.0);
    let mut out = Vec::new();
    if i_hi < 0.0 || j_hi < 0.0 {
        return out;
    }
    for j in j_lo..=j_hi as usize {
        for i in i_lo..=i_hi as usize {
            let anchor = AnchorPoint::new(level, i, j);
            let (x, y) = anchor.location();
            if contains(region, x, y) {
                out.push(anchor);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn valid_box_scales_sides_only() {
        let b = GroundTruthBox::new(1, 64.0, 64.0, 64.0, 64.0);
        assert_eq!(valid_box(&b, 1.0), b);
        let shrunk = valid_box(&b, 0.2);
        assert_eq!(shrunk.class_id, 1);
        assert_eq!((shrunk.cx, shrunk.cy), (64.0, 64.0));
        assert!((shrunk.width - 12.8).abs() < 1e-6);
        assert!((shrunk.height - 12.8).abs() < 1e-6);

        let b2 = GroundTruthBox::new(2, 10.0, 20.0, 30.0, 40.0);
        let half = valid_box(&b2, 0.5);
        assert_eq!(half, GroundTruthBox::new(2, 10.0, 20.0, 15.0, 20.0));
    }

    #[test]
    fn contains_uses_closed_boundaries() {
        let b = GroundTruthBox::new(1, 64.0, 64.0, 12.8, 12.8);
        assert!(contains(&b, 60.0, 60.0)); // |60-64| = 4 <= 6.4
        assert!(contains(&b, 70.0, 64.0)); // 6 <= 6.4
        assert!(!contains(&b, 71.0, 64.0)); // 7 > 6.4
        assert!(!contains(&b, 70.5, 64.0)); // 6.5 > 6.4
        assert!(contains(&b, b.cx, b.cy));
        // Exact boundary counts as inside (values chosen to be representable).
        let b12 = GroundTruthBox::new(1, 64.0, 64.0, 12.0, 12.0);
        assert!(contains(&b12, 70.0, 64.0));
        assert!(contains(&b12, 58.0, 64.0));
    }

    #[test]
    fn encode_matches_hand_computed_distances() {
        let anchor = AnchorPoint::new(3, 7, 7); // X = Y = 8 * 7.5 = 60
        let b = GroundTruthBox::new(1, 64.0, 64.0, 64.0, 64.0);
        let d = encode_targets(&anchor, &b, 4.0);
        assert!((d.left - 0.875).abs() < 1e-6);
        assert!((d.top - 0.875).abs() < 1e-6);
        assert!((d.right - 1.125).abs() < 1e-6);
        assert!((d.bottom - 1.125).abs() < 1e-6);
    }

    #[test]
    fn encode_is_symmetric_at_center_and_linear_in_inverse_z() {
        // Anchor exactly at the center of a square box.
        let anchor = AnchorPoint::new(2, 7, 7); // X = Y = 30
        let b = GroundTruthBox::new(1, 30.0, 30.0, 20.0, 20.0);
        let d = encode_targets(&anchor, &b, 4.0);
        assert_eq!(d.left, d.right);
        assert_eq!(d.top, d.bottom);
        assert_eq!(d.left, d.top);

        let d2 = encode_targets(&anchor, &b, 8.0);
        for (a, b) in d.as_array().iter().zip(d2.as_array()) {
            assert!((a / 2.0 - b).abs() < 1e-7);
        }
    }

    #[test]
    fn decode_matches_hand_computed_corners() {
        let spec = PyramidSpec::new(2, 5, 128, 128).unwrap();
        let anchor = AnchorPoint::new(3, 7, 7); // X = Y = 60
        let d = DistanceTargets::new(1.0, 1.0, 1.0, 1.0);
        let corners = decode_box(&spec, &anchor, &d, 4.0);
        assert_eq!(corners, [28.0, 28.0, 92.0, 92.0]);
    }

    #[test]
    fn decode_clips_to_image_bounds() {
        let spec = PyramidSpec::new(2, 5, 64, 64).unwrap();
        let anchor = AnchorPoint::new(5, 0, 0); // X = Y = 16
        let d = DistanceTargets::new(5.0, 5.0, 5.0, 5.0); // 640 px reach
        let corners = decode_box(&spec, &anchor, &d, 4.0);
        assert_eq!(corners, [0.0, 0.0, 64.0, 64.0]);
    }

    #[test]
    fn decode_inverts_encode() {
        let spec = PyramidSpec::new(2, 5, 128, 128).unwrap();
        let b = GroundTruthBox::new(1, 64.0, 60.0, 48.0, 40.0);
        let anchor = AnchorPoint::new(3, 6, 8);
        let d = encode_targets(&anchor, &b, 4.0);
        let corners = decode_box(&spec, &anchor, &d, 4.0);
        let expect = b.corners();
        for (a, e) in corners.iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-5, "{corners:?} vs {expect:?}");
        }
    }

    #[test]
    fn iou_known_values() {
        let a = [0.0, 0.0, 2.0, 2.0];
        assert_eq!(iou(&a, &a), 1.0);
        let b = [3.0, 3.0, 5.0, 5.0];
        assert_eq!(iou(&a, &b), 0.0);
        let c = [1.0, 1.0, 3.0, 3.0];
        assert!((iou(&a, &c) - 1.0 / 7.0).abs() < 1e-6);
        // Degenerate zero-area box.
        let zero = [1.0, 1.0, 1.0, 1.0];
        assert_eq!(iou(&zero, &zero), 0.0);
    }

    #[test]
    fn anchor_lattice_spacing_equals_stride() {
        for level in 2..=5u32 {
            let s = PyramidSpec::stride(level) as f32;
            for i in 1..4 {
                let (x0, _) = AnchorPoint::new(level, i - 1, 0).location();
                let (x1, _) = AnchorPoint::new(level, i, 0).location();
                assert_eq!(x1 - x0, s);
            }
        }
    }

    #[test]
    fn pyramid_spec_rejects_non_divisible_sizes() {
        assert!(PyramidSpec::new(2, 5, 64, 64).is_ok());
        assert!(PyramidSpec::new(2, 5, 60, 64).is_err());
        assert!(PyramidSpec::new(3, 2, 64, 64).is_err());
        assert!(PyramidSpec::new(0, 2, 64, 64).is_err());
    }

    #[test]
    fn anchors_in_box_matches_brute_force_scan() {
        let spec = PyramidSpec::new(2, 5, 64, 64).unwrap();
        let b = GroundTruthBox::new(1, 30.0, 28.5, 22.0, 17.0);
        for level in spec.levels() {
            let fast = anchors_in_box(&spec, level, &b);
            let (cols, rows) = spec.grid_size(level);
            let mut slow = Vec::new();
            for j in 0..rows {
                for i in 0..cols {
                    let a = AnchorPoint::new(level, i, j);
                    let (x, y) = a.location();
                    if contains(&b, x, y) {
                        slow.push(a);
                    }
                }
            }
            assert_eq!(fast, slow, "level {level}");
        }
    }

    proptest! {
        #[test]
        fn roundtrip_within_tolerance(
            cx in 20.0f32..108.0,
            cy in 20.0f32..108.0,
            w in 8.0f32..40.0,
            h in 8.0f32..40.0,
            z in 0.5f32..8.0,
        ) {
            let spec = PyramidSpec::new(2, 5, 128, 128).unwrap();
            let b = GroundTruthBox::new(1, cx, cy, w, h).clip_to(128, 128);
            for level in spec.levels() {
                for anchor in anchors_in_box(&spec, level, &valid_box(&b, 0.9)) {
                    let (x, y) = anchor.location();
                    // Strictly-inside precondition for encode.
                    if (x - b.cx).abs() >= b.width / 2.0 || (y - b.cy).abs() >= b.height / 2.0 {
                        continue;
                    }
                    let d = encode_targets(&anchor, &b, z);
                    let corners = decode_box(&spec, &anchor, &d, z);
                    let expect = b.corners();
                    for (a, e) in corners.iter().zip(expect.iter()) {
                        prop_assert!((a - e).abs() < 1e-4);
                    }
                }
            }
        }

        #[test]
        fn iou_is_symmetric_and_bounded(
            ax in 0.0f32..50.0, ay in 0.0f32..50.0, aw in 0.1f32..30.0, ah in 0.1f32..30.0,
            bx in 0.0f32..50.0, by in 0.0f32..50.0, bw in 0.1f32..30.0, bh in 0.1f32..30.0,
        ) {
            let a = [ax, ay, ax + aw, ay + ah];
            let b = [bx, by, bx + bw, by + bh];
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn shrink_monotonicity(
            cx in 24.0f32..40.0, cy in 24.0f32..40.0,
            w in 10.0f32..24.0, h in 10.0f32..24.0,
            e1 in 0.1f32..0.9,
            delta in 0.01f32..0.5,
        ) {
            let spec = PyramidSpec::new(2, 5, 64, 64).unwrap();
            let b = GroundTruthBox::new(1, cx, cy, w, h);
            let e2 = (e1 + delta).min(1.0);
            for level in spec.levels() {
                let small = anchors_in_box(&spec, level, &valid_box(&b, e1));
                let big = anchors_in_box(&spec, level, &valid_box(&b, e2));
                for a in &small {
                    prop_assert!(big.contains(a));
                }
            }
        }
    }
}
