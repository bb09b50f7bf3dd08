//! The subcommands as library functions. Each takes a validated scenario and
//! directories, writes its files atomically, and returns a summary.

use std::collections::BTreeMap;
use std::path::Path;

use ambisense::beamformer::HeatmapFrame;
use ambisense::eval_metrics::{ap_summary, default_falloffs, iou, oks, pck, ApSummary, KeypointInstance, MaskPair};
use ambisense::mixer_doppler::{analytic_stream, estimate_velocity, BasebandStream, DopplerConfig};
use ambisense::sanitizer::sanitize_stream;
use ambisense::signal_model::apply_impairments;
use ambisense::Error;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::formats::{self, BasebandHeader, SanitizedPoints, VelocityRows, SCENARIO_FILE};
use crate::scenario::Scenario;

/// Noise seed for channel `c`.
pub fn channel_seed(seed: u64, channel: usize) -> u64 {
    seed.wrapping_add((channel as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn write_scenario(sc: &Scenario, out: &Path) -> CliResult<()> {
    formats::write_atomic(&out.join(SCENARIO_FILE), sc.to_toml().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub channels: usize,
    pub samples_per_channel: usize,
    pub warnings: Vec<String>,
}

/// One channel of measured baseband: closed-form per antenna, then the
/// receiver impairments, rounded to payload precision.
pub fn simulate_channel(sc: &Scenario, channel: usize) -> CliResult<Vec<num_complex::Complex64>> {
    let cfg = sc.ofdm_config()?;
    let geometry = sc.array_geometry()?;
    let antenna = sc.channel_map()[channel];
    let fs = sc.run.sample_rate_hz;
    let clean = analytic_stream(&cfg, &sc.scene, fs, sc.run.t0_s, sc.sample_count(), Some(geometry.rx_positions[antenna]))?;
    let measured = apply_impairments(&clean, fs, sc.run.t0_s, &sc.impairments, sc.scene.noise_snr_db, channel_seed(sc.run.rng_seed, channel));
    Ok(formats::quantize(&measured))
}

pub fn simulate(sc: &Scenario, out: &Path) -> CliResult<SimulateSummary> {
    let mut warnings = Vec::new();
    if sc.scene.reflectors.is_empty() {
        warnings.push("scene has no reflectors: the baseband is static and every heatmap will be empty".to_string());
    }
    if sc.impairments.signal_duty >= 1.0 {
        warnings.push(
            "impairments.signal_duty is 1: without source-off periods the sanitizer's bias correction has no offset cluster to lock onto"
                .to_string(),
        );
    }
    write_scenario(sc, out)?;
    let channels = sc.channel_map().len();
    for c in 0..channels {
        formats::write_baseband_channel(out, c, &simulate_channel(sc, c)?)?;
    }
    let header = BasebandHeader::new(sc.channel_map().to_vec(), sc.sample_count(), sc.run.sample_rate_hz, sc.run.t0_s);
    formats::write_baseband_header(out, &header)?;
    Ok(SimulateSummary { channels, samples_per_channel: header.samples_per_channel, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizeSummary {
    pub channels: usize,
    pub windows: usize,
    pub gaps: usize,
}

/// Reads the baseband in `input` and writes one point per window and channel.
pub fn sanitize(sc: &Scenario, input: &Path, out: &Path) -> CliResult<SanitizedPoints> {
    let header = formats::read_baseband_header(input)?;
    let mut series = Vec::with_capacity(header.channels);
    for c in 0..header.channels {
        let samples = formats::read_baseband_channel(input, &header, c)?;
        series.push(sanitize_stream(&samples, header.sample_rate_hz, header.t0_s, &sc.sanitize)?);
    }
    let window_s = series.first().map_or(sc.sanitize.window_s, |s| s.window_s);
    let pts = SanitizedPoints::from_series(header.t0_s, series, window_s);
    write_scenario(sc, out)?;
    formats::write_points(out, &pts)?;
    Ok(pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityManifest {
    pub channel: usize,
    pub t_delta_s: f64,
    pub sample_rate_hz: f64,
    pub samples: usize,
    pub mean_velocity_mps: Option<f64>,
    pub trace_file: String,
}

/// Velocity trace from the sanitized series of `doppler.channel`.
pub fn velocity(sc: &Scenario, input: &Path, out: &Path) -> CliResult<(VelocityRows, VelocityManifest)> {
    let pts = formats::read_points(input)?;
    let channel = sc.doppler.channel;
    if channel >= pts.channels.len() {
        return Err(CliError::validation("doppler.channel", format!("input has {} channels", pts.channels.len())));
    }
    let z = pts.filled(channel).ok_or(Error::EmptyFrame)?;
    let cfg = sc.ofdm_config()?;
    let rate = 1.0 / pts.window_s;
    let dc = DopplerConfig::for_ofdm(&cfg, sc.doppler_t_delta_s());
    let trace = estimate_velocity(&z, rate, &cfg, &dc)?;
    let rows = VelocityRows {
        t_s: (trace.lag..z.len()).map(|w| pts.window_centre(w)).collect(),
        phase_rate_rad_s: trace.phase_rate_rad_s.clone(),
        velocity_mps: trace.velocity_mps.clone(),
    };
    let manifest = VelocityManifest {
        channel,
        t_delta_s: trace.lag as f64 * pts.window_s,
        sample_rate_hz: rate,
        samples: rows.t_s.len(),
        mean_velocity_mps: trace.mean_velocity(),
        trace_file: "velocity.csv".into(),
    };
    write_scenario(sc, out)?;
    formats::write_velocity(&out.join("velocity.csv"), &rows)?;
    formats::write_json(&out.join("velocity.json"), &manifest)?;
    Ok((rows, manifest))
}

/// Sanitized series of every channel as a stream sampled once per window.
pub fn sanitized_stream(sc: &Scenario, pts: &SanitizedPoints) -> CliResult<BasebandStream> {
    let channels = (0..pts.channels.len())
        .map(|c| pts.filled(c).ok_or_else(|| CliError::Usage(format!("channel {c} has no sanitized point"))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut stream = BasebandStream::new(channels, 1.0 / pts.window_s, pts.t0_s)?;
    stream.antenna_indices = sc.channel_map().to_vec();
    stream.validate()?;
    Ok(stream)
}

/// Differential heatmaps from the sanitized series.
pub fn beamform(sc: &Scenario, input: &Path, out: &Path) -> CliResult<Vec<HeatmapFrame>> {
    let pts = formats::read_points(input)?;
    let stream = sanitized_stream(sc, &pts)?;
    let bf = sc.beamformer()?;
    let frames = bf.sequence(&stream, sc.frame_period_s(), sc.beamform_t_delta_s())?;
    write_scenario(sc, out)?;
    let grid = bf.grid();
    formats::write_heatmaps(
        out,
        &frames,
        &grid.theta_values,
        &grid.phi_values,
        sc.beamform.convention,
        sc.beamform_t_delta_s(),
        sc.frame_period_s(),
    )?;
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub simulate: SimulateSummary,
    pub sanitize: SanitizeSummary,
    pub velocity: VelocityManifest,
    pub heatmap_frames: usize,
    pub files: Vec<String>,
}

/// simulate → sanitize → velocity → beamform, all in `out`.
pub fn pipeline(sc: &Scenario, out: &Path) -> CliResult<PipelineManifest> {
    let sim = simulate(sc, out)?;
    let pts = sanitize(sc, out, out)?;
    let (_, vel) = velocity(sc, out, out)?;
    let frames = beamform(sc, out, out)?;
    let mut files: Vec<String> = vec![SCENARIO_FILE.into(), "header.json".into()];
    files.extend((0..sim.channels).map(formats::channel_file));
    files.extend(["points.csv", "sanitized.json", "velocity.csv", "velocity.json", "heatmaps.csv", "heatmaps.json"].map(String::from));
    files.extend((0..frames.len()).map(formats::frame_pgm_name));
    let manifest = PipelineManifest {
        simulate: sim,
        sanitize: SanitizeSummary { channels: pts.channels.len(), windows: pts.windows, gaps: pts.gaps.len() },
        velocity: vel,
        heatmap_frames: frames.len(),
        files,
    };
    formats::write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

// ----------------------------------------------------------------- metrics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MetricsTask {
    Mask,
    Keypoint,
}

pub const PCK_ALPHAS: [f64; 5] = [0.01, 0.02, 0.03, 0.04, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum MetricsReport {
    Mask {
        instances: usize,
        iou: BTreeMap<String, f64>,
        ap: ApSummary,
        /// Computed the same way as `ap.mean_ap` on single matched instances.
        ar: f64,
    },
    Keypoint {
        instances: usize,
        keypoints: usize,
        /// `pck[a][k]` for `alpha = PCK_ALPHAS[a]`, in percent.
        pck: Vec<Vec<Option<f64>>>,
        pck_alphas: Vec<f64>,
        mean_oks: Option<f64>,
    },
}

fn match_instances<'a, A, B>(pred: &'a BTreeMap<String, A>, gt: &'a BTreeMap<String, B>, path: &Path) -> CliResult<Vec<(&'a String, &'a A, &'a B)>> {
    for id in pred.keys() {
        if !gt.contains_key(id) {
            return Err(CliError::schema(path, 0, "instance", format!("prediction `{id}` has no ground truth")));
        }
    }
    gt.iter()
        .map(|(id, g)| {
            let p = pred.get(id).ok_or_else(|| CliError::schema(path, 0, "instance", format!("ground truth `{id}` has no prediction")))?;
            Ok((id, p, g))
        })
        .collect()
}

pub fn metrics(task: MetricsTask, pred_path: &Path, gt_path: &Path, out: &Path) -> CliResult<MetricsReport> {
    let report = match task {
        MetricsTask::Mask => {
            let pred = formats::read_masks(pred_path)?;
            let gt = formats::read_masks(gt_path)?;
            let mut scores = BTreeMap::new();
            for (id, p, g) in match_instances(&pred, &gt, pred_path)? {
                let pair = MaskPair::new((p.rows, p.cols), p.bits.clone(), (g.rows, g.cols), g.bits.clone())
                    .map_err(|e| CliError::schema(pred_path, 0, "bits", format!("instance `{id}`: {e}")))?;
                scores.insert(id.clone(), iou(&pair)?);
            }
            let values: Vec<f64> = scores.values().copied().collect();
            let ap = ap_summary(&values)?;
            let ar = ap.mean_ap;
            MetricsReport::Mask { instances: values.len(), iou: scores, ap, ar }
        }
        MetricsTask::Keypoint => {
            let pred = formats::read_keypoints(pred_path)?;
            let gt = formats::read_keypoints(gt_path)?;
            let mut instances = Vec::new();
            for (id, p, g) in match_instances(&pred, &gt, pred_path)? {
                if p.points.len() != g.points.len() {
                    return Err(CliError::schema(pred_path, 0, "keypoint", format!("instance `{id}` has {} keypoints, ground truth {}", p.points.len(), g.points.len())));
                }
                instances.push(KeypointInstance {
                    pred: p.points.clone(),
                    gt: g.points.clone(),
                    visibility: g.visibility.clone(),
                    scale: g.scale,
                    falloff: default_falloffs(g.points.len()),
                    bbox: g.bbox,
                });
            }
            let k = instances.first().map_or(0, |i| i.gt.len());
            if instances.iter().any(|i| i.gt.len() != k) {
                return Err(CliError::schema(gt_path, 0, "keypoint", "instances have different keypoint counts"));
            }
            let pck_table = PCK_ALPHAS
                .iter()
                .map(|&a| (0..k).map(|kp| pck(&instances, kp, a).ok()).collect())
                .collect();
            let oks_values: Vec<f64> = instances.iter().filter_map(|i| oks(i).ok()).collect();
            let mean_oks = (!oks_values.is_empty()).then(|| oks_values.iter().sum::<f64>() / oks_values.len() as f64);
            MetricsReport::Keypoint { instances: instances.len(), keypoints: k, pck: pck_table, pck_alphas: PCK_ALPHAS.to_vec(), mean_oks }
        }
    };
    formats::write_json(&out.join("metrics.json"), &report)?;
    Ok(report)
}

/// Plain-text table of a metrics report.
pub fn format_metrics(report: &MetricsReport) -> String {
    let mut s = String::new();
    match report {
        MetricsReport::Mask { instances, ap, ar, .. } => {
            let cols: Vec<(String, f64)> = std::iter::once(("AP".to_string(), ap.mean_ap))
                .chain(ap.ap_at.iter().map(|&(a, v)| (format!("AP@{:.2}", a).replace("0.", "."), v)))
                .chain(std::iter::once(("AR".to_string(), *ar)))
                .collect();
            s.push_str(&format!("mask metrics over {instances} instances\n"));
            s.push_str(&cols.iter().map(|(n, _)| format!("{n:>8}")).collect::<String>());
            s.push('\n');
            s.push_str(&cols.iter().map(|(_, v)| format!("{:>8.4}", v)).collect::<String>());
            s.push('\n');
        }
        MetricsReport::Keypoint { instances, keypoints, pck, pck_alphas, mean_oks } => {
            s.push_str(&format!("keypoint metrics over {instances} instances\n"));
            s.push_str(&format!("{:>8}", ""));
            for k in 0..*keypoints {
                s.push_str(&format!("{:>8}", format!("kp{k}")));
            }
            s.push('\n');
            for (a, row) in pck_alphas.iter().zip(pck) {
                s.push_str(&format!("{:>8}", format!("PCK@{a:.2}").replace("0.", ".")));
                for v in row {
                    match v {
                        Some(v) => s.push_str(&format!("{v:>8.2}")),
                        None => s.push_str(&format!("{:>8}", "-")),
                    }
                }
                s.push('\n');
            }
            if let Some(o) = mean_oks {
                s.push_str(&format!("mean OKS {o:.4}\n"));
            }
        }
    }
    s
}
