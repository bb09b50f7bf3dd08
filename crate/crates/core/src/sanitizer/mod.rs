//! Constellation sanitisation: reduce each window of baseband samples to one
//! representative point.
//!
//! The stages run in a fixed order:
//!
//! 1. Butterworth low-pass over the sample stream.
//! 2. Bias correction: k-means with three clusters, then translate every
//!    point so the centroid nearest the origin lands on it. Receiver DC
//!    offset and samples taken while the ambient source is silent collect in
//!    that cluster.
//! 3. Discard every point within a small radius of the origin.
//! 4. Remove Local Outlier Factor outliers.
//! 5. Cluster what is left and return the centroid of the largest cluster.
//!
//! The low-pass runs over the whole stream before it is cut into windows.

mod butterworth;
mod kmeans;
mod lof;

pub use butterworth::{butterworth_lowpass, Butterworth};
pub use kmeans::{kmeans, KMeans, MAX_ITERATIONS as KMEANS_MAX_ITERATIONS};
pub use lof::{lof_filter, lof_scores, lof_scores_brute_force};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};

/// Points of one time window.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationFrame {
    pub points: Vec<Complex64>,
    pub window_start_s: f64,
    pub window_len_s: f64,
}

impl ConstellationFrame {
    pub fn new(points: Vec<Complex64>, window_start_s: f64, window_len_s: f64) -> Result<Self> {
        if !(window_len_s > 0.0) {
            return Err(Error::InvalidConfig("window length must be positive".into()));
        }
        if points.iter().any(|p| !(p.re.is_finite() && p.im.is_finite())) {
            return Err(Error::InvalidConfig("frame contains non-finite points".into()));
        }
        Ok(Self { points, window_start_s, window_len_s })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rms(&self) -> f64 {
        rms(&self.points)
    }

    fn with_points(&self, points: Vec<Complex64>) -> Self {
        Self { points, window_start_s: self.window_start_s, window_len_s: self.window_len_s }
    }
}

fn rms(points: &[Complex64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    (points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SanitizeConfig {
    pub butterworth_order: usize,
    pub butterworth_cutoff_hz: f64,
    pub bias_k: usize,
    /// Discard radius as a fraction of the bias-corrected frame RMS.
    pub origin_radius_rms_fraction: f64,
    /// Absolute discard radius; replaces the RMS-relative one when set.
    pub origin_radius: Option<f64>,
    pub lof_k: usize,
    pub lof_threshold: f64,
    pub project_k: usize,
    pub rng_seed: u64,
    pub window_s: f64,
}

impl Default for SanitizeConfig {
    fn default() -> Self {
        Self {
            butterworth_order: 4,
            butterworth_cutoff_hz: 10e3,
            bias_k: 3,
            origin_radius_rms_fraction: 0.05,
            origin_radius: None,
            lof_k: 20,
            lof_threshold: 1.5,
            project_k: 3,
            rng_seed: 0,
            window_s: 0.01,
        }
    }
}

impl SanitizeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.butterworth_order == 0 {
            return Err(Error::OrderZero);
        }
        if self.bias_k == 0 || self.lof_k == 0 || self.project_k == 0 {
            return bad("cluster and neighbour counts must be at least 1");
        }
        if !(self.origin_radius_rms_fraction >= 0.0) || self.origin_radius.is_some_and(|r| !(r >= 0.0)) {
            return bad("origin radius must be non-negative");
        }
        if !(self.lof_threshold > 1.0) {
            return bad("lof_threshold must exceed 1");
        }
        if !(self.window_s > 0.0) {
            return bad("window_s must be positive");
        }
        if !(self.butterworth_cutoff_hz > 0.0) {
            return bad("butterworth_cutoff_hz must be positive");
        }
        Ok(())
    }
}

/// Translates the frame so the k-means centroid nearest the origin moves to
/// the origin. Returns the shifted frame and the translation applied.
pub fn bias_correct(frame: &ConstellationFrame, cfg: &SanitizeConfig) -> Result<(ConstellationFrame, Complex64)> {
    let km = kmeans(&frame.points, cfg.bias_k, cfg.rng_seed)?;
    let closest = km
        .centroids
        .iter()
        .copied()
        .min_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .expect("k is at least 1");
    let shift = -closest;
    Ok((frame.with_points(frame.points.iter().map(|p| p + shift).collect()), shift))
}

/// Keeps exactly the points with `|p| > radius`.
pub fn discard_near_origin(frame: &ConstellationFrame, radius: f64) -> ConstellationFrame {
    frame.with_points(frame.points.iter().copied().filter(|p| p.norm() > radius).collect())
}

pub fn lof_filter_frame(frame: &ConstellationFrame, lof_k: usize, threshold: f64) -> Result<ConstellationFrame> {
    Ok(frame.with_points(lof_filter(&frame.points, lof_k, threshold)?))
}

/// Centroid of the most populated k-means cluster, or the plain centroid when
/// the frame has fewer than `project_k` points. Equal populations go to the
/// lower cluster index.
pub fn project(frame: &ConstellationFrame, project_k: usize, seed: u64) -> Result<Complex64> {
    let n = frame.points.len();
    if n == 0 {
        return Err(Error::EmptyFrame);
    }
    if n < project_k {
        return Ok(frame.points.iter().sum::<Complex64>() / n as f64);
    }
    let km = kmeans(&frame.points, project_k, seed)?;
    let sizes = km.cluster_sizes();
    let mut best = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    Ok(km.centroids[best])
}

/// Discard radius for a bias-corrected frame. The floor tied to the frame's
/// pre-correction RMS keeps a perfectly constant window from surviving on
/// round-off alone.
fn origin_radius(corrected: &ConstellationFrame, raw_rms: f64, cfg: &SanitizeConfig) -> f64 {
    cfg.origin_radius
        .unwrap_or_else(|| (cfg.origin_radius_rms_fraction * corrected.rms()).max(1e-9 * raw_rms))
}

/// Stages 2 to 5 on an already filtered frame. Point order does not matter.
pub fn sanitize_frame(frame: &ConstellationFrame, cfg: &SanitizeConfig) -> Result<Complex64> {
    if frame.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let mut points = frame.points.clone();
    points.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let frame = frame.with_points(points);

    let (corrected, _) = bias_correct(&frame, cfg).map_err(|e| e.at(Stage::BiasCorrection))?;
    let radius = origin_radius(&corrected, frame.rms(), cfg);
    let kept = discard_near_origin(&corrected, radius);
    if kept.is_empty() {
        return Err(Error::EmptyFrame.at(Stage::OriginDiscard));
    }
    let inliers = lof_filter_frame(&kept, cfg.lof_k, cfg.lof_threshold).map_err(|e| e.at(Stage::OutlierRemoval))?;
    project(&inliers, cfg.project_k, cfg.rng_seed).map_err(|e| e.at(Stage::Projection))
}

/// All five stages on one window of raw samples.
pub fn sanitize_window(raw: &[Complex64], sample_rate_hz: f64, cfg: &SanitizeConfig) -> Result<Complex64> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::EmptyFrame);
    }
    let filtered = butterworth_lowpass(raw, sample_rate_hz, cfg.butterworth_order, cfg.butterworth_cutoff_hz)
        .map_err(|e| e.at(Stage::Filter))?;
    let frame = ConstellationFrame::new(filtered, 0.0, raw.len() as f64 / sample_rate_hz)?;
    sanitize_frame(&frame, cfg)
}

/// Per-window output of [`sanitize_stream`].
#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedSeries {
    /// Centre time of each window.
    pub t_s: Vec<f64>,
    /// Representative point, or the reason the window produced none.
    pub points: Vec<Result<Complex64>>,
    pub window_s: f64,
}

impl SanitizedSeries {
    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_ok()).count()
    }

    /// Gaps filled by holding the previous valid point; leading gaps take the
    /// first valid point. `None` when no window produced a point.
    pub fn filled(&self) -> Option<Vec<Complex64>> {
        let first = *self.points.iter().find_map(|p| p.as_ref().ok())?;
        let mut last = first;
        Some(
            self.points
                .iter()
                .map(|p| {
                    if let Ok(v) = p {
                        last = *v;
                    }
                    last
                })
                .collect(),
        )
    }
}

/// Filters the whole channel, cuts it into `cfg.window_s` windows (a partial
/// trailing window is dropped), and sanitises each window.
pub fn sanitize_stream(samples: &[Complex64], sample_rate_hz: f64, t0_s: f64, cfg: &SanitizeConfig) -> Result<SanitizedSeries> {
    cfg.validate()?;
    let per_window = (cfg.window_s * sample_rate_hz).round() as usize;
    if per_window == 0 {
        return Err(Error::InvalidConfig("window is shorter than one sample".into()));
    }
    let filtered = butterworth_lowpass(samples, sample_rate_hz, cfg.butterworth_order, cfg.butterworth_cutoff_hz)
        .map_err(|e| e.at(Stage::Filter))?;
    let window_s = per_window as f64 / sample_rate_hz;
    let (t_s, points) = filtered
        .par_chunks_exact(per_window)
        .enumerate()
        .map(|(w, chunk)| {
            let start = t0_s + w as f64 * window_s;
            let frame = ConstellationFrame { points: chunk.to_vec(), window_start_s: start, window_len_s: window_s };
            (start + window_s / 2.0, sanitize_frame(&frame, cfg))
        })
        .unzip();
    Ok(SanitizedSeries { t_s, points, window_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand::seq::SliceRandom;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn frame(points: Vec<Complex64>) -> ConstellationFrame {
        ConstellationFrame::new(points, 0.0, 0.01).unwrap()
    }

    fn blob(rng: &mut ChaCha8Rng, centre: Complex64, sigma: f64, n: usize) -> Vec<Complex64> {
        let g = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| centre + c(g.sample(rng), g.sample(rng))).collect()
    }

    #[test]
    fn centred_cluster_is_a_fixpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, c(0.0, 0.0), 0.01, 100);
        pts.extend(blob(&mut rng, c(3.0, 0.0), 0.01, 100));
        pts.extend(blob(&mut rng, c(0.0, 3.0), 0.01, 100));
        let (_, shift) = bias_correct(&frame(pts), &SanitizeConfig::default()).unwrap();
        assert!(shift.norm() < 0.01);
    }

    #[test]
    fn static_blob_offset_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sigma = 0.01;
        let mut pts = blob(&mut rng, c(1.0, 1.0), sigma, 200);
        pts.extend(blob(&mut rng, c(6.0, -4.0), sigma, 100));
        pts.extend(blob(&mut rng, c(-5.0, 5.0), sigma, 100));
        let (out, shift) = bias_correct(&frame(pts.clone()), &SanitizeConfig::default()).unwrap();
        assert!((shift + c(1.0, 1.0)).norm() < 3.0 * sigma);
        for (a, b) in pts.iter().zip(&out.points) {
            assert!((b - a - shift).norm() < 1e-12);
        }
        assert!(matches!(
            bias_correct(&frame(vec![c(0.0, 0.0); 2]), &SanitizeConfig::default()),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn discard_predicate() {
        let f = frame(vec![c(0.01, 0.0), c(0.0, 0.2), c(0.0, 0.0)]);
        assert_eq!(discard_near_origin(&f, 0.05).points, vec![c(0.0, 0.2)]);
        assert_eq!(discard_near_origin(&f, 0.0).points, vec![c(0.01, 0.0), c(0.0, 0.2)]);
        assert!(discard_near_origin(&f, 1.0).is_empty());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project(&frame(vec![c(0.2, 0.7)]), 3, 0).unwrap(), c(0.2, 0.7));
        assert_eq!(project(&frame(vec![]), 3, 0), Err(Error::EmptyFrame));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = blob(&mut rng, c(0.3, 0.4), 0.005, 80);
        pts.extend(blob(&mut rng, c(-0.8, 0.1), 0.005, 10));
        let p = project(&frame(pts), 3, 0).unwrap();
        assert!((p - c(0.3, 0.4)).norm() < 0.01, "{p}");
    }

    #[test]
    fn constant_window_is_empty() {
        let raw = vec![c(0.4, -0.3); 2000];
        let err = sanitize_window(&raw, 2e6, &SanitizeConfig::default()).unwrap_err();
        assert_eq!(err.root(), &Error::EmptyFrame);
        assert_eq!(sanitize_window(&[], 2e6, &SanitizeConfig::default()), Err(Error::EmptyFrame));
    }

    #[test]
    fn stage_errors_are_tagged() {
        let cfg = SanitizeConfig { butterworth_cutoff_hz: 5e6, ..SanitizeConfig::default() };
        let err = sanitize_window(&[c(1.0, 0.0); 10], 2e6, &cfg).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: Stage::Filter, .. }));
        let few = frame(vec![c(0.0, 0.0), c(1.0, 0.0)]);
        let err = sanitize_frame(&few, &SanitizeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: Stage::BiasCorrection, .. }));
    }

    #[test]
    fn stream_cadence() {
        let fs = 2e6;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<Complex64> = (0..200_000)
            .map(|_| if rng.random::<f64>() < 0.3 { c(0.0, 0.0) } else { c(1.0, 0.5) + c(rng.random::<f64>() * 1e-3, 0.0) })
            .collect();
        let cfg = SanitizeConfig { butterworth_cutoff_hz: 400e3, ..SanitizeConfig::default() };
        let s = sanitize_stream(&samples, fs, 0.0, &cfg).unwrap();
        assert_eq!(s.t_s.len(), 10);
        assert!((s.t_s[1] - s.t_s[0] - 0.01).abs() < 1e-12);
        assert_eq!(s.filled().unwrap().len(), 10);
    }

    fn planted_frame(seed: u64) -> Vec<Complex64> {
        planted_frame_at(seed, c(0.1, -0.05))
    }

    fn planted_frame_at(seed: u64, bias: Complex64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = blob(&mut rng, bias, 0.005, 60);
        pts.extend(blob(&mut rng, bias + c(0.6, 0.8), 0.02, 120));
        pts.extend((0..20).map(|_| bias + c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))));
        pts
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn translation_covariance(seed in 0u64..1000, dx in -0.2f64..0.2, dy in -0.2f64..0.2) {
            // offsets small enough that the static cluster stays the one nearest the origin
            let cfg = SanitizeConfig::default();
            let a = sanitize_frame(&frame(planted_frame_at(seed, c(0.0, 0.0))), &cfg).unwrap();
            let b = sanitize_frame(&frame(planted_frame_at(seed, c(dx, dy))), &cfg).unwrap();
            prop_assert!((a - b).norm() < 1e-9, "{} vs {}", a, b);
        }

        #[test]
        fn permutation_invariance(seed in 0u64..1000, shuffle_seed in 0u64..1000) {
            let pts = planted_frame(seed);
            let cfg = SanitizeConfig::default();
            let a = sanitize_frame(&frame(pts.clone()), &cfg).unwrap();
            let mut shuffled = pts;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
            prop_assert_eq!(a, sanitize_frame(&frame(shuffled), &cfg).unwrap());
        }

        #[test]
        fn stages_never_add_points(seed in 0u64..1000, radius in 0.0f64..1.0) {
            let f = frame(planted_frame(seed));
            let kept = discard_near_origin(&f, radius);
            prop_assert!(kept.len() <= f.len());
            if kept.len() > 20 {
                prop_assert!(lof_filter_frame(&kept, 20, 1.5).unwrap().len() <= kept.len());
            }
        }
    }
}
