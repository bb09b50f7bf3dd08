//! On-disk formats. Every writer goes through [`write_atomic`], and every
//! reader returns exactly the values that were written.
//!
//! | file | content |
//! |------|---------|
//! | `header.json` + `ch<N>.iq` | baseband: interleaved I/Q as 32-bit little-endian floats, one file per channel |
//! | `points.csv` + `sanitized.json` | one sanitized point per window and channel |
//! | `velocity.csv` + `velocity.json` | phase rate and velocity trace |
//! | `heatmaps.csv` + `heatmaps.json` + `heatmaps/frame_NNN.pgm` | differential heatmaps |
//!
//! Floating-point CSV fields use the shortest representation that parses
//! back to the same value.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ambisense::beamformer::{DirectionConvention, HeatmapFrame};
use ambisense::sanitizer::SanitizedSeries;
use num_complex::{Complex32, Complex64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;
pub const BASEBAND_LAYOUT: &str = "interleaved_iq_f32_le";
pub const SCENARIO_FILE: &str = "scenario.toml";

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse { path: path.into(), line: e.line(), message: e.to_string() })
}

// ---------------------------------------------------------------- baseband

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasebandHeader {
    pub format_version: u32,
    pub channels: usize,
    pub samples_per_channel: usize,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
    pub layout: String,
    pub files: Vec<String>,
    /// Receive antenna recorded on each channel.
    pub antenna_indices: Vec<usize>,
}

impl BasebandHeader {
    pub fn new(antenna_indices: Vec<usize>, samples_per_channel: usize, sample_rate_hz: f64, t0_s: f64) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            channels: antenna_indices.len(),
            samples_per_channel,
            sample_rate_hz,
            t0_s,
            layout: BASEBAND_LAYOUT.into(),
            files: (0..antenna_indices.len()).map(channel_file).collect(),
            antenna_indices,
        }
    }

    pub fn check(&self, path: &Path) -> CliResult<()> {
        let bad = |column: &str, msg: String| Err(CliError::schema(path, 0, column, msg));
        if self.format_version != FORMAT_VERSION {
            return bad("format_version", format!("unsupported version {}", self.format_version));
        }
        if self.layout != BASEBAND_LAYOUT {
            return bad("layout", format!("expected `{BASEBAND_LAYOUT}`, found `{}`", self.layout));
        }
        if self.files.len() != self.channels || self.antenna_indices.len() != self.channels {
            return bad("channels", format!("{} channels but {} files and {} antenna indices", self.channels, self.files.len(), self.antenna_indices.len()));
        }
        Ok(())
    }
}

pub fn channel_file(channel: usize) -> String {
    format!("ch{channel}.iq")
}

/// Rounds every sample to the 32-bit payload precision.
pub fn quantize(samples: &[Complex64]) -> Vec<Complex64> {
    samples.iter().map(|z| Complex64::new(z.re as f32 as f64, z.im as f32 as f64)).collect()
}

pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    for z in samples {
        let q = Complex32::new(z.re as f32, z.im as f32);
        bytes.extend_from_slice(&q.re.to_le_bytes());
        bytes.extend_from_slice(&q.im.to_le_bytes());
    }
    bytes
}

pub fn decode_iq(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(8)
        .map(|b| {
            let re = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            let im = f32::from_le_bytes([b[4], b[5], b[6], b[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect()
}

pub fn write_baseband_channel(dir: &Path, channel: usize, samples: &[Complex64]) -> CliResult<()> {
    write_atomic(&dir.join(channel_file(channel)), &encode_iq(samples))
}

pub fn write_baseband_header(dir: &Path, header: &BasebandHeader) -> CliResult<()> {
    write_json(&dir.join("header.json"), header)
}

pub fn read_baseband_header(dir: &Path) -> CliResult<BasebandHeader> {
    let path = dir.join("header.json");
    let header: BasebandHeader = read_json(&path)?;
    header.check(&path)?;
    Ok(header)
}

pub fn read_baseband_channel(dir: &Path, header: &BasebandHeader, channel: usize) -> CliResult<Vec<Complex64>> {
    let path = dir.join(&header.files[channel]);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    if bytes.len() != header.samples_per_channel * 8 {
        return Err(CliError::schema(
            &path,
            0,
            "payload",
            format!("{} bytes, header promises {} samples", bytes.len(), header.samples_per_channel),
        ));
    }
    Ok(decode_iq(&bytes))
}

// ------------------------------------------------------- sanitized points

/// Sanitizer output for all channels on a shared window grid. Window `w`
/// spans `[t0 + w·window_s, t0 + (w+1)·window_s)` and is stamped with its
/// centre.
#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedPoints {
    pub t0_s: f64,
    pub window_s: f64,
    pub windows: usize,
    /// `channels[c][w]`; `None` where the window produced no point.
    pub channels: Vec<Vec<Option<Complex64>>>,
    /// Reason for every missing point.
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub channel: usize,
    pub window: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanitizedManifest {
    pub format_version: u32,
    pub points_file: String,
    pub channels: usize,
    pub windows: usize,
    pub window_s: f64,
    pub t0_s: f64,
    pub gaps: Vec<Gap>,
}

impl SanitizedPoints {
    pub fn from_series(t0_s: f64, series: Vec<SanitizedSeries>, window_s: f64) -> Self {
        let windows = series.first().map_or(0, |s| s.points.len());
        let mut gaps = Vec::new();
        let channels = series
            .into_iter()
            .enumerate()
            .map(|(c, s)| {
                s.points
                    .into_iter()
                    .enumerate()
                    .map(|(w, p)| match p {
                        Ok(v) => Some(v),
                        Err(e) => {
                            gaps.push(Gap { channel: c, window: w, reason: e.to_string() });
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        Self { t0_s, window_s, windows, channels, gaps }
    }

    pub fn window_centre(&self, w: usize) -> f64 {
        self.t0_s + w as f64 * self.window_s + self.window_s / 2.0
    }

    /// Channel `c` with gaps held at the previous point (leading gaps take
    /// the first point). `None` if the channel has no point at all.
    pub fn filled(&self, c: usize) -> Option<Vec<Complex64>> {
        let first = self.channels[c].iter().flatten().next().copied()?;
        let mut last = first;
        Some(
            self.channels[c]
                .iter()
                .map(|p| {
                    if let Some(v) = p {
                        last = *v;
                    }
                    last
                })
                .collect(),
        )
    }
}

pub fn write_points(dir: &Path, pts: &SanitizedPoints) -> CliResult<()> {
    let mut csv = String::from("t_s,re,im,channel\n");
    for w in 0..pts.windows {
        for (c, ch) in pts.channels.iter().enumerate() {
            if let Some(p) = ch[w] {
                csv.push_str(&format!("{},{},{},{c}\n", pts.window_centre(w), p.re, p.im));
            }
        }
    }
    write_atomic(&dir.join("points.csv"), csv.as_bytes())?;
    let manifest = SanitizedManifest {
        format_version: FORMAT_VERSION,
        points_file: "points.csv".into(),
        channels: pts.channels.len(),
        windows: pts.windows,
        window_s: pts.window_s,
        t0_s: pts.t0_s,
        gaps: pts.gaps.clone(),
    };
    write_json(&dir.join("sanitized.json"), &manifest)
}

pub fn read_points(dir: &Path) -> CliResult<SanitizedPoints> {
    let manifest: SanitizedManifest = read_json(&dir.join("sanitized.json"))?;
    let path = dir.join(&manifest.points_file);
    let mut pts = SanitizedPoints {
        t0_s: manifest.t0_s,
        window_s: manifest.window_s,
        windows: manifest.windows,
        channels: vec![vec![None; manifest.windows]; manifest.channels],
        gaps: manifest.gaps,
    };
    let table = read_table(&path, &["t_s", "re", "im", "channel"])?;
    for (row, rec) in table.rows.iter().enumerate() {
        let row = row + 2;
        let t: f64 = table.parse(&path, row, rec, "t_s")?;
        let re: f64 = table.parse(&path, row, rec, "re")?;
        let im: f64 = table.parse(&path, row, rec, "im")?;
        let c: usize = table.parse(&path, row, rec, "channel")?;
        if c >= manifest.channels {
            return Err(CliError::schema(&path, row, "channel", format!("{c} is not below {}", manifest.channels)));
        }
        let w = ((t - pts.t0_s) / pts.window_s - 0.5).round();
        if !(w >= 0.0 && (w as usize) < pts.windows) || pts.window_centre(w as usize) != t {
            return Err(CliError::schema(&path, row, "t_s", format!("{t} is not a window centre")));
        }
        pts.channels[c][w as usize] = Some(Complex64::new(re, im));
    }
    Ok(pts)
}

// ---------------------------------------------------------------- velocity

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityRows {
    pub t_s: Vec<f64>,
    pub phase_rate_rad_s: Vec<f64>,
    pub velocity_mps: Vec<f64>,
}

pub fn write_velocity(path: &Path, v: &VelocityRows) -> CliResult<()> {
    let mut csv = String::from("t_s,phase_rate,velocity_mps\n");
    for i in 0..v.t_s.len() {
        csv.push_str(&format!("{},{},{}\n", v.t_s[i], v.phase_rate_rad_s[i], v.velocity_mps[i]));
    }
    write_atomic(path, csv.as_bytes())
}

pub fn read_velocity(path: &Path) -> CliResult<VelocityRows> {
    let table = read_table(path, &["t_s", "phase_rate", "velocity_mps"])?;
    let mut v = VelocityRows { t_s: vec![], phase_rate_rad_s: vec![], velocity_mps: vec![] };
    for (row, rec) in table.rows.iter().enumerate() {
        v.t_s.push(table.parse(path, row + 2, rec, "t_s")?);
        v.phase_rate_rad_s.push(table.parse(path, row + 2, rec, "phase_rate")?);
        v.velocity_mps.push(table.parse(path, row + 2, rec, "velocity_mps")?);
    }
    Ok(v)
}

// ---------------------------------------------------------------- heatmaps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapManifest {
    pub format_version: u32,
    pub values_file: String,
    pub theta_rad: Vec<f64>,
    pub phi_rad: Vec<f64>,
    pub convention: DirectionConvention,
    pub t_delta_s: f64,
    pub frame_period_s: f64,
    pub frames: Vec<HeatmapFrameEntry>,
}

/// `scale` is the raw value that maps to 65535 in the PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapFrameEntry {
    pub index: usize,
    pub t_s: f64,
    pub pgm: String,
    pub scale: f64,
    pub argmax_phi_index: usize,
    pub argmax_theta_index: usize,
}

/// 16-bit binary PGM, rows in ascending elevation, samples big-endian.
pub fn encode_pgm(frame: &HeatmapFrame) -> (Vec<u8>, f64) {
    let scale = frame.max();
    let mut bytes = format!("P5\n{} {}\n65535\n", frame.n_theta, frame.n_phi).into_bytes();
    for &v in &frame.values {
        let level = if scale > 0.0 { (v / scale * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    (bytes, scale)
}

/// Width, height, and samples of a 16-bit binary PGM.
pub fn decode_pgm(path: &Path, bytes: &[u8]) -> CliResult<(usize, usize, Vec<u16>)> {
    let bad = |m: &str| CliError::schema(path, 0, "header", m);
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(bad("expected a 16-bit P5 image"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w * h * 2 {
        return Err(bad("payload size does not match the header"));
    }
    Ok((w, h, body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()))
}

pub fn frame_pgm_name(index: usize) -> String {
    format!("heatmaps/frame_{index:03}.pgm")
}

pub fn write_heatmaps(
    dir: &Path,
    frames: &[HeatmapFrame],
    theta_rad: &[f64],
    phi_rad: &[f64],
    convention: DirectionConvention,
    t_delta_s: f64,
    frame_period_s: f64,
) -> CliResult<HeatmapManifest> {
    let mut csv = String::from("frame,t_s,phi_index,theta_index,value\n");
    let mut entries = Vec::with_capacity(frames.len());
    for (f, frame) in frames.iter().enumerate() {
        for p in 0..frame.n_phi {
            for t in 0..frame.n_theta {
                csv.push_str(&format!("{f},{},{p},{t},{}\n", frame.t_s, frame.get(p, t)));
            }
        }
        let (pgm, scale) = encode_pgm(frame);
        let name = frame_pgm_name(f);
        write_atomic(&dir.join(&name), &pgm)?;
        let (ap, at) = frame.argmax();
        entries.push(HeatmapFrameEntry { index: f, t_s: frame.t_s, pgm: name, scale, argmax_phi_index: ap, argmax_theta_index: at });
    }
    write_atomic(&dir.join("heatmaps.csv"), csv.as_bytes())?;
    let manifest = HeatmapManifest {
        format_version: FORMAT_VERSION,
        values_file: "heatmaps.csv".into(),
        theta_rad: theta_rad.to_vec(),
        phi_rad: phi_rad.to_vec(),
        convention,
        t_delta_s,
        frame_period_s,
        frames: entries,
    };
    write_json(&dir.join("heatmaps.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_heatmaps(dir: &Path) -> CliResult<(HeatmapManifest, Vec<HeatmapFrame>)> {
    let manifest: HeatmapManifest = read_json(&dir.join("heatmaps.json"))?;
    let (n_phi, n_theta) = (manifest.phi_rad.len(), manifest.theta_rad.len());
    let mut frames: Vec<HeatmapFrame> = manifest
        .frames
        .iter()
        .map(|e| HeatmapFrame { t_s: e.t_s, n_phi, n_theta, values: vec![0.0; n_phi * n_theta] })
        .collect();
    let path = dir.join(&manifest.values_file);
    let table = read_table(&path, &["frame", "t_s", "phi_index", "theta_index", "value"])?;
    if table.rows.len() != frames.len() * n_phi * n_theta {
        return Err(CliError::schema(&path, table.rows.len() + 1, "frame", "row count does not match the manifest"));
    }
    for (row, rec) in table.rows.iter().enumerate() {
        let r = row + 2;
        let f: usize = table.parse(&path, r, rec, "frame")?;
        let p: usize = table.parse(&path, r, rec, "phi_index")?;
        let t: usize = table.parse(&path, r, rec, "theta_index")?;
        if f >= frames.len() || p >= n_phi || t >= n_theta {
            return Err(CliError::schema(&path, r, "frame", "index outside the manifest grid"));
        }
        frames[f].values[p * n_theta + t] = table.parse(&path, r, rec, "value")?;
    }
    Ok((manifest, frames))
}

// ------------------------------------------------------------ metric inputs

/// One binary mask raster.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRaster {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<bool>,
}

/// Masks keyed by instance id from a CSV with columns `instance,row,bits`,
/// where `bits` is one row of the raster written as `0`/`1` characters.
pub fn read_masks(path: &Path) -> CliResult<BTreeMap<String, MaskRaster>> {
    let table = read_table(path, &["instance", "row", "bits"])?;
    let mut rows: BTreeMap<String, BTreeMap<usize, Vec<bool>>> = BTreeMap::new();
    for (i, rec) in table.rows.iter().enumerate() {
        let r = i + 2;
        let id = table.field(rec, "instance").to_string();
        let row: usize = table.parse(path, r, rec, "row")?;
        let bits = table
            .field(rec, "bits")
            .chars()
            .map(|ch| match ch {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(CliError::schema(path, r, "bits", format!("unexpected character `{other}`"))),
            })
            .collect::<CliResult<Vec<bool>>>()?;
        if rows.entry(id).or_default().insert(row, bits).is_some() {
            return Err(CliError::schema(path, r, "row", format!("row {row} repeated")));
        }
    }
    rows.into_iter()
        .map(|(id, by_row)| {
            let cols = by_row.values().next().map_or(0, Vec::len);
            for (expected, (&row, bits)) in by_row.iter().enumerate() {
                if row != expected {
                    return Err(CliError::schema(path, 0, "row", format!("instance `{id}` is missing row {expected}")));
                }
                if bits.len() != cols {
                    return Err(CliError::schema(path, 0, "bits", format!("instance `{id}` row {row} has {} columns, expected {cols}", bits.len())));
                }
            }
            let n = by_row.len();
            Ok((id, MaskRaster { rows: n, cols, bits: by_row.into_values().flatten().collect() }))
        })
        .collect()
}

pub fn write_masks(path: &Path, masks: &BTreeMap<String, MaskRaster>) -> CliResult<()> {
    let mut csv = String::from("instance,row,bits\n");
    for (id, m) in masks {
        for r in 0..m.rows {
            let bits: String = m.bits[r * m.cols..(r + 1) * m.cols].iter().map(|&b| if b { '1' } else { '0' }).collect();
            csv.push_str(&format!("{id},{r},{bits}\n"));
        }
    }
    write_atomic(path, csv.as_bytes())
}

/// Keypoints of one instance in one file.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointRecord {
    pub points: Vec<[f64; 2]>,
    pub visibility: Vec<u8>,
    pub scale: f64,
    /// `(h, w)` of the bounding box.
    pub bbox: (f64, f64),
}

pub const KEYPOINT_COLUMNS: [&str; 8] = ["instance", "keypoint", "x", "y", "visibility", "scale", "bbox_w", "bbox_h"];

/// Keypoints keyed by instance id. Keypoint indices must run 0..K within
/// each instance, and `scale`/`bbox_*` must agree across an instance's rows.
pub fn read_keypoints(path: &Path) -> CliResult<BTreeMap<String, KeypointRecord>> {
    let table = read_table(path, &KEYPOINT_COLUMNS)?;
    let mut by_id: BTreeMap<String, BTreeMap<usize, (usize, [f64; 2], u8, f64, (f64, f64))>> = BTreeMap::new();
    for (i, rec) in table.rows.iter().enumerate() {
        let r = i + 2;
        let id = table.field(rec, "instance").to_string();
        let k: usize = table.parse(path, r, rec, "keypoint")?;
        let x: f64 = table.parse(path, r, rec, "x")?;
        let y: f64 = table.parse(path, r, rec, "y")?;
        let v: u8 = table.parse(path, r, rec, "visibility")?;
        if v > 2 {
            return Err(CliError::schema(path, r, "visibility", "must be 0, 1 or 2"));
        }
        let s: f64 = table.parse(path, r, rec, "scale")?;
        let bw: f64 = table.parse(path, r, rec, "bbox_w")?;
        let bh: f64 = table.parse(path, r, rec, "bbox_h")?;
        if by_id.entry(id).or_default().insert(k, (r, [x, y], v, s, (bh, bw))).is_some() {
            return Err(CliError::schema(path, r, "keypoint", format!("keypoint {k} repeated")));
        }
    }
    by_id
        .into_iter()
        .map(|(id, kps)| {
            let mut rec = KeypointRecord { points: vec![], visibility: vec![], scale: 0.0, bbox: (0.0, 0.0) };
            for (expected, (&k, &(row, p, v, s, bbox))) in kps.iter().enumerate() {
                if k != expected {
                    return Err(CliError::schema(path, row, "keypoint", format!("instance `{id}` is missing keypoint {expected}")));
                }
                if k == 0 {
                    rec.scale = s;
                    rec.bbox = bbox;
                } else if s != rec.scale || bbox != rec.bbox {
                    return Err(CliError::schema(path, row, "scale", format!("instance `{id}` changes scale or box between rows")));
                }
                rec.points.push(p);
                rec.visibility.push(v);
            }
            Ok((id, rec))
        })
        .collect()
}

pub fn write_keypoints(path: &Path, records: &BTreeMap<String, KeypointRecord>) -> CliResult<()> {
    let mut csv = KEYPOINT_COLUMNS.join(",");
    csv.push('\n');
    for (id, r) in records {
        for (k, p) in r.points.iter().enumerate() {
            csv.push_str(&format!("{id},{k},{},{},{},{},{},{}\n", p[0], p[1], r.visibility[k], r.scale, r.bbox.1, r.bbox.0));
        }
    }
    write_atomic(path, csv.as_bytes())
}

// ------------------------------------------------------------------ tables

struct Table {
    columns: BTreeMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn field<'a>(&self, rec: &'a csv::StringRecord, name: &str) -> &'a str {
        rec.get(self.columns[name]).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, path: &Path, row: usize, rec: &csv::StringRecord, name: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.field(rec, name);
        raw.trim().parse().map_err(|e| CliError::schema(path, row, name, format!("cannot parse `{raw}`: {e}")))
    }
}

/// Reads a headered CSV, checking that `required` columns are present.
/// Rows are numbered from 1 at the header in error messages.
fn read_table(path: &Path, required: &[&str]) -> CliResult<Table> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let columns: BTreeMap<String, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
    for &c in required {
        if !columns.contains_key(c) {
            return Err(CliError::schema(path, 1, c, "required column is missing"));
        }
    }
    let rows = reader.records().collect::<Result<Vec<_>, _>>().map_err(|e| csv_error(path, e))?;
    Ok(Table { columns, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::schema(path, row, "*", format!("{other:?}")),
    }
}
