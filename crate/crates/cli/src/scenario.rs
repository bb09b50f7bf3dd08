//! Scenario files: one TOML document describing a complete run.
//!
//! Loading fills in every default, so writing a loaded scenario back out
//! (see [`Scenario::to_toml`]) gives a self-contained file that reproduces
//! the run on its own. Any key may be overridden from the environment with
//! `AMBISENSE_<SECTION>__<KEY>=<toml value>`, for example
//! `AMBISENSE_RUN__DURATION_S=1.5` or `AMBISENSE_SCENE__REFLECTORS__0__ALPHA=[0.1, 0.0]`.

use std::path::Path;

use ambisense::beamformer::{ArrayGeometry, Beamformer, DirectionConvention, DirectionGrid, SwitchModel, Vec3};
use ambisense::sanitizer::SanitizeConfig;
use ambisense::signal_model::{Impairments, OfdmConfig, Scene};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::presets;

pub const ENV_PREFIX: &str = "AMBISENSE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub run: RunSection,
    pub ofdm: OfdmSection,
    pub scene: Scene,
    #[serde(default)]
    pub impairments: Impairments,
    pub array: ArraySection,
    #[serde(default)]
    pub sanitize: SanitizeConfig,
    #[serde(default)]
    pub doppler: DopplerSection,
    #[serde(default)]
    pub beamform: BeamformSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub t0_s: f64,
}

/// Subcarrier indices, either listed or as an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Subcarriers {
    List(Vec<i32>),
    Range {
        first: i32,
        last: i32,
        #[serde(default)]
        skip_dc: bool,
    },
}

impl Subcarriers {
    pub fn indices(&self) -> Vec<i32> {
        match self {
            Subcarriers::List(v) => v.clone(),
            Subcarriers::Range { first, last, skip_dc } => (*first..=*last).filter(|&k| !(*skip_dc && k == 0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmSection {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: Subcarriers,
    /// Explicit symbols `[re, im]`, one per subcarrier. Without them the
    /// symbols are unit-power QPSK drawn from `qpsk_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<Complex64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qpsk_seed: Option<u64>,
    #[serde(default)]
    pub symbol_period_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayLayout {
    /// 3×3 grid at λ/2 in the y–z plane without its centre.
    #[default]
    RingOfEight,
    /// `count` antennas along y, `spacing_m` apart.
    UniformLinear,
    /// Positions given in `rx_positions`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    #[serde(default)]
    pub layout: ArrayLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    #[serde(default)]
    pub rx_positions: Option<Vec<Vec3>>,
    /// `channel_map[c]` is the antenna recorded on channel `c`.
    #[serde(default)]
    pub channel_map: Option<Vec<usize>>,
    #[serde(default)]
    pub switch: SwitchModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopplerSection {
    /// Channel whose sanitized series feeds the velocity estimate.
    pub channel: usize,
    /// Lag of the phase difference; defaults to one sanitizer window.
    pub t_delta_s: Option<f64>,
}

impl Default for DopplerSection {
    fn default() -> Self {
        Self { channel: 0, t_delta_s: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamformSection {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub n_theta: usize,
    pub phi_min_deg: f64,
    pub phi_max_deg: f64,
    pub n_phi: usize,
    pub frame_rate_hz: f64,
    /// Differencing lag; defaults to one frame period.
    pub t_delta_s: Option<f64>,
    pub convention: DirectionConvention,
}

impl Default for BeamformSection {
    fn default() -> Self {
        Self {
            theta_min_deg: -60.0,
            theta_max_deg: 60.0,
            n_theta: 100,
            phi_min_deg: -60.0,
            phi_max_deg: 60.0,
            n_phi: 100,
            frame_rate_hz: 5.25,
            t_delta_s: None,
            convention: DirectionConvention::Spherical,
        }
    }
}

impl Scenario {
    /// Reads `source`, which is a file path or `preset:<name>`, applying
    /// overrides from the process environment.
    pub fn load(source: &str) -> CliResult<Self> {
        Self::load_with_env(source, std::env::vars())
    }

    pub fn load_with_env(source: &str, env: impl IntoIterator<Item = (String, String)>) -> CliResult<Self> {
        let (text, origin) = match source.strip_prefix("preset:") {
            Some(name) => (presets::text(name)?.to_string(), source.to_string()),
            None => {
                let path = Path::new(source);
                (std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?, source.to_string())
            }
        };
        Self::parse_with_env(&text, &origin, env)
    }

    /// Parses without consulting the environment.
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        Self::parse_with_env(text, origin, std::iter::empty())
    }

    pub fn parse_with_env(text: &str, origin: &str, env: impl IntoIterator<Item = (String, String)>) -> CliResult<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, text, &e))?;
        let mut overridden = false;
        for (key, value) in env {
            if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
                apply_override(&mut table, rest, &value)?;
                overridden = true;
            }
        }
        let text = if overridden {
            toml::to_string(&table).map_err(|e| CliError::validation("environment", e))?
        } else {
            text.to_string()
        };
        let origin = if overridden { format!("{origin} (with environment overrides)") } else { origin.to_string() };
        let mut sc: Scenario = toml::from_str(&text).map_err(|e| parse_error(&origin, &text, &e))?;
        sc.materialize()?;
        sc.validate()?;
        Ok(sc)
    }

    /// Serialized form with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn materialize(&mut self) -> CliResult<()> {
        if self.ofdm.symbols.is_none() && self.ofdm.qpsk_seed.is_none() {
            self.ofdm.qpsk_seed = Some(self.run.rng_seed);
        }
        if self.ofdm.symbol_period_s.is_none() && self.ofdm.subcarrier_spacing_hz > 0.0 {
            self.ofdm.symbol_period_s = Some(1.0 / self.ofdm.subcarrier_spacing_hz);
        }
        let generated = self.layout_positions()?;
        match (&self.array.rx_positions, generated) {
            (None, Some(p)) => self.array.rx_positions = Some(p),
            (Some(given), Some(p)) => {
                let same = given.len() == p.len()
                    && given.iter().zip(&p).all(|(a, b)| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs().max(1.0)));
                if !same {
                    return Err(CliError::validation("array.rx_positions", "does not match the positions of the chosen layout"));
                }
            }
            (None, None) => return Err(CliError::validation("array.rx_positions", "required for the custom layout")),
            (Some(_), None) => {}
        }
        let m = self.array.rx_positions.as_ref().map_or(0, Vec::len);
        if self.array.channel_map.is_none() {
            self.array.channel_map = Some((0..m).collect());
        }
        if self.doppler.t_delta_s.is_none() {
            self.doppler.t_delta_s = Some(self.sanitize.window_s);
        }
        if self.beamform.t_delta_s.is_none() && self.beamform.frame_rate_hz > 0.0 {
            self.beamform.t_delta_s = Some(1.0 / self.beamform.frame_rate_hz);
        }
        Ok(())
    }

    fn layout_positions(&self) -> CliResult<Option<Vec<Vec3>>> {
        let lambda = self.wavelength_m();
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(CliError::validation("ofdm.carrier_hz", "must be positive"));
        }
        Ok(match self.array.layout {
            ArrayLayout::RingOfEight => Some(ArrayGeometry::ring_of_eight(lambda).rx_positions),
            ArrayLayout::UniformLinear => {
                let n = self.array.count.unwrap_or(8);
                let spacing = self.array.spacing_m.unwrap_or(lambda / 2.0);
                Some(ArrayGeometry::uniform_linear(n, spacing, lambda).rx_positions)
            }
            ArrayLayout::Custom => None,
        })
    }

    pub fn wavelength_m(&self) -> f64 {
        ambisense::signal_model::SPEED_OF_LIGHT / self.ofdm.carrier_hz
    }

    pub fn validate(&self) -> CliResult<()> {
        let run = &self.run;
        if !(run.duration_s.is_finite() && run.duration_s >= 0.0) {
            return Err(CliError::validation("run.duration_s", "must be finite and non-negative"));
        }
        if !(run.sample_rate_hz.is_finite() && run.sample_rate_hz > 0.0) {
            return Err(CliError::validation("run.sample_rate_hz", "must be positive"));
        }
        if !run.t0_s.is_finite() {
            return Err(CliError::validation("run.t0_s", "must be finite"));
        }
        if self.ofdm.symbols.is_some() && self.ofdm.qpsk_seed.is_some() {
            return Err(CliError::validation("ofdm.qpsk_seed", "cannot be combined with explicit symbols"));
        }
        self.ofdm_config().map_err(|e| CliError::validation("ofdm", e))?;
        self.scene.validate().map_err(|e| CliError::validation("scene", e))?;
        self.impairments.validate().map_err(|e| CliError::validation("impairments", e))?;
        let geometry = self.array_geometry().map_err(|e| CliError::validation("array", e))?;
        let m = geometry.rx_positions.len();
        let map = self.channel_map();
        let mut seen = vec![false; m];
        if map.len() != m {
            return Err(CliError::validation("array.channel_map", format!("has {} entries for {m} receive antennas", map.len())));
        }
        for &a in map {
            if a >= m || std::mem::replace(&mut seen[a], true) {
                return Err(CliError::validation("array.channel_map", format!("must be a permutation of 0..{m}")));
            }
        }
        if let SwitchModel::RoundRobin { dwell_s } = self.array.switch {
            if !(dwell_s.is_finite() && dwell_s > 0.0) {
                return Err(CliError::validation("array.switch.dwell_s", "must be positive"));
            }
        }
        self.sanitize.validate().map_err(|e| CliError::validation("sanitize", e))?;
        if (self.sanitize.window_s * run.sample_rate_hz).round() < 1.0 {
            return Err(CliError::validation("sanitize.window_s", "is shorter than one sample"));
        }
        if self.sanitize.butterworth_cutoff_hz >= run.sample_rate_hz / 2.0 {
            return Err(CliError::validation("sanitize.butterworth_cutoff_hz", "must be below the Nyquist frequency"));
        }
        if self.doppler.channel >= m {
            return Err(CliError::validation("doppler.channel", format!("must be below the channel count {m}")));
        }
        if !self.doppler_t_delta_s().is_finite() || self.doppler_t_delta_s() <= 0.0 {
            return Err(CliError::validation("doppler.t_delta_s", "must be positive"));
        }
        let bf = &self.beamform;
        if !(bf.frame_rate_hz.is_finite() && bf.frame_rate_hz > 0.0) {
            return Err(CliError::validation("beamform.frame_rate_hz", "must be positive"));
        }
        if !(self.beamform_t_delta_s() > 0.0) {
            return Err(CliError::validation("beamform.t_delta_s", "must be positive"));
        }
        self.direction_grid().validate().map_err(|e| CliError::validation("beamform", e))?;
        Ok(())
    }

    pub fn ofdm_config(&self) -> ambisense::Result<OfdmConfig> {
        let ks = self.ofdm.subcarriers.indices();
        let symbols = match &self.ofdm.symbols {
            Some(x) => x.clone(),
            None => ambisense::signal_model::qpsk_symbols(ks.len(), self.ofdm.qpsk_seed.unwrap_or(self.run.rng_seed)),
        };
        let mut cfg = OfdmConfig::new(self.ofdm.carrier_hz, self.ofdm.subcarrier_spacing_hz, ks, symbols)?;
        if let Some(p) = self.ofdm.symbol_period_s {
            cfg.symbol_period_s = p;
            cfg.validate()?;
        }
        Ok(cfg)
    }

    /// Receive positions in antenna order.
    pub fn array_geometry(&self) -> ambisense::Result<ArrayGeometry> {
        ArrayGeometry::new(self.array.rx_positions.clone().unwrap_or_default(), self.wavelength_m())
    }

    /// Receive positions in channel order.
    pub fn channel_geometry(&self) -> ambisense::Result<ArrayGeometry> {
        let g = self.array_geometry()?;
        let rx = self.channel_map().iter().map(|&a| g.rx_positions[a]).collect();
        ArrayGeometry::new(rx, g.wavelength_m)
    }

    pub fn channel_map(&self) -> &[usize] {
        self.array.channel_map.as_deref().unwrap_or(&[])
    }

    pub fn sample_count(&self) -> usize {
        (self.run.duration_s * self.run.sample_rate_hz + 1e-9).floor() as usize
    }

    pub fn doppler_t_delta_s(&self) -> f64 {
        self.doppler.t_delta_s.unwrap_or(self.sanitize.window_s)
    }

    pub fn beamform_t_delta_s(&self) -> f64 {
        self.beamform.t_delta_s.unwrap_or(1.0 / self.beamform.frame_rate_hz)
    }

    pub fn frame_period_s(&self) -> f64 {
        1.0 / self.beamform.frame_rate_hz
    }

    pub fn direction_grid(&self) -> DirectionGrid {
        let bf = &self.beamform;
        let theta = DirectionGrid::uniform(bf.n_theta, 1, bf.theta_min_deg.to_radians(), bf.theta_max_deg.to_radians());
        let phi = DirectionGrid::uniform(1, bf.n_phi, bf.phi_min_deg.to_radians(), bf.phi_max_deg.to_radians());
        DirectionGrid { theta_values: theta.theta_values, phi_values: phi.phi_values }
    }

    /// Beamformer over the channel-ordered array.
    pub fn beamformer(&self) -> ambisense::Result<Beamformer> {
        Beamformer::with_options(self.channel_geometry()?, self.direction_grid(), self.beamform.convention, self.array.switch)
    }
}

fn parse_error(origin: &str, text: &str, e: &toml::de::Error) -> CliError {
    let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    CliError::Parse { path: origin.into(), line, message: e.message().to_string() }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> CliResult<()> {
    let field = key.to_ascii_lowercase().replace("__", ".");
    let path: Vec<String> = key.split("__").map(|s| s.to_ascii_lowercase()).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::validation(field, "malformed environment override name"));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (head, rest) = path.split_first().expect("non-empty path");
    if rest.is_empty() {
        table.insert(head.clone(), value);
        return Ok(());
    }
    let slot = table.entry(head.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    set_path(slot, rest, value).map_err(|reason| CliError::validation(field, reason))
}

fn set_path(node: &mut toml::Value, path: &[String], value: toml::Value) -> Result<(), String> {
    let (head, rest) = path.split_first().expect("non-empty path");
    let slot = match node {
        toml::Value::Table(t) => {
            if rest.is_empty() {
                t.insert(head.clone(), value);
                return Ok(());
            }
            t.entry(head.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
        }
        toml::Value::Array(a) => {
            let idx: usize = head.parse().map_err(|_| "array elements are addressed by index".to_string())?;
            let len = a.len();
            a.get_mut(idx).ok_or_else(|| format!("index {idx} out of range for {len} elements"))?
        }
        _ => return Err("overrides a value that is not a table".into()),
    };
    if rest.is_empty() {
        *slot = value;
        return Ok(());
    }
    set_path(slot, rest, value)
}
