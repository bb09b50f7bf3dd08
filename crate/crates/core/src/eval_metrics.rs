//! Evaluation metrics for masks and keypoints.
//!
//! Average precision here is the per-instance threshold fraction
//! `AP@α = Prob(score ≥ α)` over pre-associated instances, averaged over
//! α ∈ {0.50, 0.55, …, 0.95}. It is not the precision-recall integral used
//! by COCO tooling. Average recall is computed the same way on the same
//! scores, since each instance has exactly one prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The ten thresholds 0.50, 0.55, …, 0.95.
pub const AP_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Per-keypoint falloffs for the 17 COCO body keypoints.
pub const COCO_SIGMAS: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089,
    0.089,
];

/// Predicted and ground-truth masks on the same raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub rows: usize,
    pub cols: usize,
    pub pred: Vec<bool>,
    pub gt: Vec<bool>,
}

impl MaskPair {
    pub fn new(pred_dims: (usize, usize), pred: Vec<bool>, gt_dims: (usize, usize), gt: Vec<bool>) -> Result<Self> {
        if pred_dims != gt_dims || pred.len() != pred_dims.0 * pred_dims.1 || gt.len() != gt_dims.0 * gt_dims.1 {
            return Err(Error::RasterMismatch { pred: pred_dims, gt: gt_dims });
        }
        Ok(Self { rows: pred_dims.0, cols: pred_dims.1, pred, gt })
    }
}

/// `|S_p ∩ S_gt| / |S_p ∪ S_gt|`, with two empty masks scoring 1.
pub fn iou(m: &MaskPair) -> Result<f64> {
    if m.pred.len() != m.gt.len() {
        return Err(Error::RasterMismatch { pred: (m.rows, m.cols), gt: (m.rows, m.cols) });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in m.pred.iter().zip(&m.gt) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    /// `(α, AP@α)` for every threshold in [`AP_THRESHOLDS`].
    pub ap_at: Vec<(f64, f64)>,
    pub mean_ap: f64,
}

impl ApSummary {
    pub fn at(&self, alpha: f64) -> Option<f64> {
        self.ap_at.iter().find(|(a, _)| (a - alpha).abs() < 1e-9).map(|&(_, v)| v)
    }
}

pub fn ap_summary(scores: &[f64]) -> Result<ApSummary> {
    if scores.is_empty() {
        return Err(Error::EmptyScoreList);
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidConfig("scores must lie in [0, 1]".into()));
    }
    let n = scores.len() as f64;
    let ap_at: Vec<(f64, f64)> = AP_THRESHOLDS
        .iter()
        .map(|&a| (a, scores.iter().filter(|&&s| s >= a).count() as f64 / n))
        .collect();
    let mean_ap = ap_at.iter().map(|(_, v)| v).sum::<f64>() / ap_at.len() as f64;
    Ok(ApSummary { ap_at, mean_ap })
}

/// Keypoints of one person: predictions, ground truth, visibility, object
/// scale, per-keypoint falloff, and the ground-truth box `(h, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointInstance {
    pub pred: Vec<[f64; 2]>,
    pub gt: Vec<[f64; 2]>,
    pub visibility: Vec<u8>,
    pub scale: f64,
    pub falloff: Vec<f64>,
    pub bbox: (f64, f64),
}

impl KeypointInstance {
    /// Instance with the default falloffs: COCO sigmas (k_i = 2σ_i) for 17
    /// keypoints, 0.1 otherwise.
    pub fn new(pred: Vec<[f64; 2]>, gt: Vec<[f64; 2]>, visibility: Vec<u8>, scale: f64, bbox: (f64, f64)) -> Result<Self> {
        let falloff = default_falloffs(gt.len());
        let inst = Self { pred, gt, visibility, scale, falloff, bbox };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.gt.len();
        if self.pred.len() != k || self.visibility.len() != k || self.falloff.len() != k {
            return Err(Error::DimMismatch(format!(
                "keypoint arrays differ in length: pred {}, gt {k}, visibility {}, falloff {}",
                self.pred.len(),
                self.visibility.len(),
                self.falloff.len()
            )));
        }
        if self.visibility.iter().any(|&v| v > 2) {
            return Err(Error::InvalidConfig("visibility must be 0, 1 or 2".into()));
        }
        if self.visibility.iter().any(|&v| v > 0) && !(self.scale > 0.0) {
            return Err(Error::InvalidConfig("scale must be positive when a keypoint is visible".into()));
        }
        Ok(())
    }

    fn error(&self, k: usize) -> f64 {
        let [px, py] = self.pred[k];
        let [gx, gy] = self.gt[k];
        (px - gx).hypot(py - gy)
    }
}

pub fn default_falloffs(keypoints: usize) -> Vec<f64> {
    if keypoints == COCO_SIGMAS.len() {
        COCO_SIGMAS.iter().map(|s| 2.0 * s).collect()
    } else {
        vec![0.1; keypoints]
    }
}

/// `Σ_i exp(−d_i²/(2s²k_i²))·[v_i > 0] / Σ_i [v_i > 0]`.
pub fn oks(inst: &KeypointInstance) -> Result<f64> {
    inst.validate()?;
    let (mut sum, mut visible) = (0.0, 0usize);
    for k in 0..inst.gt.len() {
        if inst.visibility[k] > 0 {
            let d = inst.error(k);
            let denom = 2.0 * inst.scale * inst.scale * inst.falloff[k] * inst.falloff[k];
            sum += (-d * d / denom).exp();
            visible += 1;
        }
    }
    if visible == 0 {
        return Err(Error::NoVisibleKeypoints);
    }
    Ok(sum / visible as f64)
}

/// Percentage of visible instances of keypoint `k` within `alpha` times the
/// ground-truth box diagonal. The boundary counts as correct.
pub fn pck(instances: &[KeypointInstance], k: usize, alpha: f64) -> Result<f64> {
    let (mut hits, mut visible) = (0usize, 0usize);
    for inst in instances {
        inst.validate()?;
        if k >= inst.gt.len() {
            return Err(Error::DimMismatch(format!("keypoint {k} out of range for {} keypoints", inst.gt.len())));
        }
        if inst.visibility[k] == 0 {
            continue;
        }
        visible += 1;
        let diag = inst.bbox.0.hypot(inst.bbox.1);
        if inst.error(k) <= alpha * diag {
            hits += 1;
        }
    }
    if visible == 0 {
        return Err(Error::NoVisibleKeypoints);
    }
    Ok(100.0 * hits as f64 / visible as f64)
}
