//! Learning-side numerics that can be checked without training a network:
//! the patch sequencing of a stack of heatmap frames, the decoder's shape
//! progression, and the three training losses with analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformer embedding width.
pub const EMBED_DIM: usize = 256;
/// Transformer encoder depth.
pub const ENCODER_LAYERS: usize = 2;
/// Output channels of the segmentation head.
pub const MASK_CHANNELS: usize = 1;
/// Output channels of the keypoint head.
pub const KEYPOINT_CHANNELS: usize = 26;

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` before the
/// logarithms.
pub const BCE_CLAMP: f64 = 1e-7;

/// Real values indexed `[f][h][w]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FrameTensor {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(Error::DimMismatch("every dimension must be at least 1".into()));
        }
        if data.len() != frames * height * width {
            return Err(Error::DimMismatch(format!(
                "{} values for a {frames}x{height}x{width} tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimMismatch("tensor values must be finite".into()));
        }
        Ok(Self { frames, height, width, data })
    }

    pub fn get(&self, f: usize, h: usize, w: usize) -> f64 {
        self.data[(f * self.height + h) * self.width + w]
    }
}

/// One row per spatial patch holding that patch's full temporal trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub rows: Vec<Vec<f64>>,
    pub patch_size: usize,
    pub frames: usize,
}

impl PatchSequence {
    pub fn patch_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row_len(&self) -> usize {
        self.frames * self.patch_size * self.patch_size
    }
}

/// Cuts each frame into non-overlapping P×P blocks and concatenates, per
/// block, the flattened block of frame 0, then frame 1, and so on. Blocks are
/// numbered row-major over the (H/P)×(W/P) block grid.
pub fn split_patches(x: &FrameTensor, p: usize) -> Result<PatchSequence> {
    if p == 0 || x.height % p != 0 || x.width % p != 0 {
        return Err(Error::PatchSizeIndivisible { patch: p, height: x.height, width: x.width });
    }
    let (bh, bw) = (x.height / p, x.width / p);
    let rows = (0..bh * bw)
        .map(|n| {
            let (r0, c0) = ((n / bw) * p, (n % bw) * p);
            let mut row = Vec::with_capacity(x.frames * p * p);
            for f in 0..x.frames {
                for r in r0..r0 + p {
                    let start = (f * x.height + r) * x.width + c0;
                    row.extend_from_slice(&x.data[start..start + p]);
                }
            }
            row
        })
        .collect();
    Ok(PatchSequence { rows, patch_size: p, frames: x.frames })
}

/// Inverse of [`split_patches`].
pub fn reassemble(seq: &PatchSequence, height: usize, width: usize) -> Result<FrameTensor> {
    let p = seq.patch_size;
    if p == 0 || height % p != 0 || width % p != 0 {
        return Err(Error::PatchSizeIndivisible { patch: p, height, width });
    }
    let (bh, bw) = (height / p, width / p);
    if seq.rows.len() != bh * bw || seq.rows.iter().any(|r| r.len() != seq.row_len()) {
        return Err(Error::DimMismatch("patch sequence does not fit the requested frame size".into()));
    }
    let mut data = vec![0.0; seq.frames * height * width];
    for (n, row) in seq.rows.iter().enumerate() {
        let (r0, c0) = ((n / bw) * p, (n % bw) * p);
        let mut it = row.chunks_exact(p);
        for f in 0..seq.frames {
            for r in r0..r0 + p {
                let start = (f * height + r) * width + c0;
                data[start..start + p].copy_from_slice(it.next().expect("row length checked"));
            }
        }
    }
    FrameTensor::new(seq.frames, height, width, data)
}

/// `(C/2^i, 2^i·H/P, 2^i·W/P)`: each decoder stage doubles the resolution and
/// halves the channels.
pub fn decoder_shape(i: u32, c: usize, h: usize, w: usize, p: usize) -> Result<(usize, usize, usize)> {
    if !(1..=2).contains(&i) {
        return Err(Error::IndivisibleDims(format!("decoder stage {i} is not 1 or 2")));
    }
    let scale = 1usize << i;
    if c % scale != 0 {
        return Err(Error::IndivisibleDims(format!("{c} channels are not divisible by {scale}")));
    }
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::IndivisibleDims(format!("{h}x{w} is not divisible by patch size {p}")));
    }
    Ok((c / scale, scale * h / p, scale * w / p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
    /// Divide the cross-entropy term by the pixel count.
    pub bce_mean: bool,
    /// Per-keypoint weights; empty means all ones.
    pub keypoint_weights: Vec<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha1: 0.5,
            alpha2: 0.5,
            epsilon: 1e-6,
            bce_mean: false,
            keypoint_weights: Vec::new(),
            lambda1: 1.0,
            lambda2: 1.0,
            delta: 1.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.alpha1, self.alpha2, self.lambda1, self.lambda2, self.delta];
        if nonneg.iter().any(|v| !(*v >= 0.0)) || self.keypoint_weights.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig("loss weights and margin must be non-negative".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// A loss value and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Cross-entropy plus Dice:
/// `−α₁·Σ(y log x + (1−y) log(1−x)) + α₂·(1 − (2Σxy + ε)/(Σx² + Σy² + ε))`.
pub fn mask_loss(x: &[f64], y: &[f64], params: &LossParams) -> Result<f64> {
    Ok(mask_loss_with_grad(x, y, params)?.value)
}

pub fn mask_loss_with_grad(x: &[f64], y: &[f64], params: &LossParams) -> Result<LossGrad> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if let Some(index) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinaryTarget { index });
    }
    let n = x.len();
    let bce_scale = if params.bce_mean && n > 0 { 1.0 / n as f64 } else { 1.0 };
    let clamped: Vec<f64> = x.iter().map(|v| v.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)).collect();

    let mut bce = 0.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&xc, &yi) in clamped.iter().zip(y) {
        bce -= yi * xc.ln() + (1.0 - yi) * (1.0 - xc).ln();
        sxy += xc * yi;
        sxx += xc * xc;
        syy += yi * yi;
    }
    let num = 2.0 * sxy + params.epsilon;
    let den = sxx + syy + params.epsilon;
    let value = params.alpha1 * bce_scale * bce + params.alpha2 * (1.0 - num / den);

    let grad = x
        .iter()
        .zip(&clamped)
        .zip(y)
        .map(|((&raw, &xc), &yi)| {
            if raw != xc {
                return 0.0;
            }
            let d_bce = -(yi / xc - (1.0 - yi) / (1.0 - xc));
            let d_dice = (2.0 * yi * den - num * 2.0 * xc) / (den * den);
            params.alpha1 * bce_scale * d_bce - params.alpha2 * d_dice
        })
        .collect();
    Ok(LossGrad { value, grad })
}

/// K heatmaps of H×W pixels, stored `[k][h][w]` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub keypoints: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl HeatmapStack {
    pub fn new(keypoints: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if keypoints == 0 || height == 0 || width == 0 || data.len() != keypoints * height * width {
            return Err(Error::DimMismatch(format!(
                "{} values for {keypoints} heatmaps of {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { keypoints, height, width, data })
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.keypoints, self.height, self.width)
    }
}

/// `(1/K)·Σ_k w_k·mean_pixels((Y_k + 1)⊙(Ŷ_k − Y_k)²)`.
pub fn keypoint_loss(pred: &HeatmapStack, target: &HeatmapStack, params: &LossParams) -> Result<f64> {
    Ok(keypoint_loss_with_grad(pred, target, params)?.value)
}

pub fn keypoint_loss_with_grad(pred: &HeatmapStack, target: &HeatmapStack, params: &LossParams) -> Result<LossGrad> {
    params.validate()?;
    if pred.dims() != target.dims() {
        return Err(Error::DimMismatch(format!("prediction {:?} vs target {:?}", pred.dims(), target.dims())));
    }
    let k = pred.keypoints;
    let weights = if params.keypoint_weights.is_empty() {
        vec![1.0; k]
    } else if params.keypoint_weights.len() == k {
        params.keypoint_weights.clone()
    } else {
        return Err(Error::DimMismatch(format!("{} keypoint weights for {k} keypoints", params.keypoint_weights.len())));
    };
    if target.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::DimMismatch("target heatmap values must lie in [0, 1]".into()));
    }
    let pixels = pred.height * pred.width;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.data.len()];
    for kk in 0..k {
        let scale = weights[kk] / (k * pixels) as f64;
        let range = kk * pixels..(kk + 1) * pixels;
        for i in range {
            let (yh, y) = (pred.data[i], target.data[i]);
            let diff = yh - y;
            value += scale * (y + 1.0) * diff * diff;
            grad[i] = scale * 2.0 * (y + 1.0) * diff;
        }
    }
    Ok(LossGrad { value, grad })
}

/// Scalar tags of each person's visible keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonTags {
    pub persons: Vec<Vec<f64>>,
}

impl PersonTags {
    fn means(&self) -> Vec<f64> {
        self.persons.iter().map(|t| t.iter().sum::<f64>() / t.len() as f64).collect()
    }
}

/// Associative-embedding grouping loss: a pull term on each person's tag
/// variance plus a hinge push between the mean tags of every ordered pair of
/// distinct persons.
pub fn grouping_loss(tags: &PersonTags, params: &LossParams) -> Result<f64> {
    Ok(grouping_loss_with_grad(tags, params)?.value)
}

/// Gradient entries follow the tags person by person. At a zero mean-tag
/// separation the push term contributes no gradient.
pub fn grouping_loss_with_grad(tags: &PersonTags, params: &LossParams) -> Result<LossGrad> {
    params.validate()?;
    if tags.persons.is_empty() {
        return Err(Error::EmptyPersonList);
    }
    if let Some(p) = tags.persons.iter().position(Vec::is_empty) {
        return Err(Error::DimMismatch(format!("person {p} has no visible keypoint tags")));
    }
    let np = tags.persons.len();
    let means = tags.means();
    let pull_scale = params.lambda1 / np as f64;

    let mut pull = 0.0;
    for (t, m) in tags.persons.iter().zip(&means) {
        pull += t.iter().map(|e| (e - m).powi(2)).sum::<f64>() / t.len() as f64;
    }

    let mut push = 0.0;
    let mut d_mean = vec![0.0; np];
    if np >= 2 {
        let push_scale = params.lambda2 / (np * (np - 1)) as f64;
        for i in 0..np {
            for j in 0..np {
                if i == j {
                    continue;
                }
                let sep = means[i] - means[j];
                let margin = params.delta - sep.abs();
                if margin > 0.0 {
                    push += margin;
                    if sep != 0.0 {
                        // ordered pairs (i, j) and (j, i) both move with ē_i
                        d_mean[i] -= 2.0 * push_scale * sep.signum();
                    }
                }
            }
        }
        push *= push_scale;
    }

    let mut grad = Vec::with_capacity(tags.persons.iter().map(Vec::len).sum());
    for ((t, m), dm) in tags.persons.iter().zip(&means).zip(&d_mean) {
        let kp = t.len() as f64;
        grad.extend(t.iter().map(|e| pull_scale * 2.0 * (e - m) / kp + dm / kp));
    }
    Ok(LossGrad { value: pull_scale * pull + push, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_tensor(f: usize, h: usize, w: usize) -> FrameTensor {
        FrameTensor::new(f, h, w, (0..f * h * w).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn reference_patch_shape() {
        let x = seq_tensor(21, 100, 100);
        let s = split_patches(&x, 10).unwrap();
        assert_eq!(s.patch_count(), 100);
        assert!(s.rows.iter().all(|r| r.len() == 2100));
        assert_eq!(reassemble(&s, 100, 100).unwrap(), x);
    }

    #[test]
    fn whole_frame_patch() {
        let x = seq_tensor(1, 4, 4);
        let s = split_patches(&x, 4).unwrap();
        assert_eq!(s.rows, vec![x.data.clone()]);
    }

    #[test]
    fn every_element_appears_once() {
        let x = seq_tensor(2, 4, 4);
        let s = split_patches(&x, 2).unwrap();
        let mut all: Vec<f64> = s.rows.concat();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, x.data);
        // patch 1 is the top-right block: frame 0 rows 0-1 cols 2-3, then frame 1
        assert_eq!(s.rows[1], vec![2.0, 3.0, 6.0, 7.0, 18.0, 19.0, 22.0, 23.0]);
    }

    #[test]
    fn indivisible_patch() {
        assert!(matches!(split_patches(&seq_tensor(1, 10, 10), 3), Err(Error::PatchSizeIndivisible { .. })));
    }

    #[test]
    fn decoder_shapes() {
        assert_eq!(decoder_shape(2, EMBED_DIM, 100, 100, 10).unwrap(), (64, 40, 40));
        assert_eq!(decoder_shape(1, EMBED_DIM, 100, 100, 10).unwrap(), (128, 20, 20));
        assert!(decoder_shape(2, 6, 100, 100, 10).is_err());
        assert!(decoder_shape(3, 256, 100, 100, 10).is_err());
        assert_eq!((MASK_CHANNELS, KEYPOINT_CHANNELS, ENCODER_LAYERS), (1, 26, 2));
    }

    #[test]
    fn mask_loss_examples() {
        let p = LossParams::default();
        assert!(mask_loss(&[1.0], &[1.0], &p).unwrap().abs() <= 1e-6);
        let tiny = LossParams { epsilon: 1e-300, ..LossParams::default() };
        assert!((mask_loss(&[0.5], &[1.0], &tiny).unwrap() - 0.446574).abs() < 1e-6);
        assert!(matches!(mask_loss(&[0.5], &[0.5], &p), Err(Error::NonBinaryTarget { index: 0 })));
        assert!(matches!(mask_loss(&[0.5], &[], &p), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn keypoint_loss_examples() {
        let p = LossParams::default();
        let one = |v: f64| HeatmapStack::new(1, 1, 1, vec![v]).unwrap();
        assert_eq!(keypoint_loss(&one(0.0), &one(1.0), &p).unwrap(), 2.0);
        assert_eq!(keypoint_loss(&one(0.3), &one(0.3), &p).unwrap(), 0.0);
        let two = HeatmapStack::new(2, 1, 1, vec![0.0, 0.0]).unwrap();
        assert!(matches!(keypoint_loss(&one(0.0), &two, &p), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn grouping_loss_examples() {
        let p = LossParams::default();
        let one = PersonTags { persons: vec![vec![1.0, 3.0]] };
        assert_eq!(grouping_loss(&one, &p).unwrap(), 1.0);
        let apart = PersonTags { persons: vec![vec![0.0, 0.0], vec![2.0, 2.0]] };
        assert_eq!(grouping_loss(&apart, &p).unwrap(), 0.0);
        assert_eq!(grouping_loss(&PersonTags { persons: vec![] }, &p), Err(Error::EmptyPersonList));
    }

    fn fd(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let (mut a, mut b) = (x.to_vec(), x.to_vec());
        a[i] += h;
        b[i] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    fn close(analytic: f64, numeric: f64) -> bool {
        (analytic - numeric).abs() <= 1e-6 * analytic.abs().max(numeric.abs()).max(1e-2)
    }

    proptest! {
        #[test]
        fn split_round_trip(f in 1usize..4, bh in 1usize..4, bw in 1usize..4, p in 1usize..4) {
            let x = seq_tensor(f, bh * p, bw * p);
            let s = split_patches(&x, p).unwrap();
            prop_assert_eq!(reassemble(&s, bh * p, bw * p).unwrap(), x);
        }

        #[test]
        fn mask_gradient(x in prop::collection::vec(0.01f64..0.99, 16), y in prop::collection::vec(0u8..2, 16)) {
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let p = LossParams::default();
            let g = mask_loss_with_grad(&x, &y, &p).unwrap();
            prop_assert!(g.value >= -1e-12);
            for i in 0..x.len() {
                let n = fd(|v| mask_loss(v, &y, &p).unwrap(), &x, i);
                prop_assert!(close(g.grad[i], n), "{} vs {}", g.grad[i], n);
            }
        }

        #[test]
        fn keypoint_gradient(pred in prop::collection::vec(-1.0f64..2.0, 18), target in prop::collection::vec(0.0f64..1.0, 18), w in prop::collection::vec(0.0f64..3.0, 2)) {
            let p = LossParams { keypoint_weights: w, ..LossParams::default() };
            let t = HeatmapStack::new(2, 3, 3, target).unwrap();
            let g = keypoint_loss_with_grad(&HeatmapStack::new(2, 3, 3, pred.clone()).unwrap(), &t, &p).unwrap();
            prop_assert!(g.value >= -1e-12);
            for i in 0..pred.len() {
                let n = fd(|v| keypoint_loss(&HeatmapStack::new(2, 3, 3, v.to_vec()).unwrap(), &t, &p).unwrap(), &pred, i);
                prop_assert!(close(g.grad[i], n), "{} vs {}", g.grad[i], n);
            }
        }

        #[test]
        fn grouping_symmetry(tags in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 1..5), 1..5), rot in 0usize..5) {
            let p = LossParams::default();
            let base = grouping_loss(&PersonTags { persons: tags.clone() }, &p).unwrap();
            prop_assert!(base >= -1e-12);
            let mut persons = tags.clone();
            persons.rotate_left(rot % tags.len());
            for t in persons.iter_mut() { t.reverse(); }
            let other = grouping_loss(&PersonTags { persons }, &p).unwrap();
            prop_assert!((base - other).abs() < 1e-12);
        }
    }
}
