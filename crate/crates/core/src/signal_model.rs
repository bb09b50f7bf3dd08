//! Ambient OFDM waveform synthesis and the moving-reflector channel.
//!
//! The ambient signal is one OFDM symbol
//!
//! ```text
//! s(t) = Σ_k X_k · exp(j2π(f_c + k·f_Δ)·t)
//! ```
//!
//! forwarded with complex gain β and reflected by a set of objects, each with
//! complex attenuation α_l and a time-varying path distance d_l(t):
//!
//! ```text
//! r(t) = β · Σ_l α_l · s(t − d_l(t)/c)
//! ```
//!
//! Time-domain synthesis at RF rate is only practical for scaled-down
//! carriers. Production paths use the closed-form baseband in
//! [`crate::mixer_doppler`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One OFDM symbol: carrier, subcarrier grid and the QAM symbol on each
/// subcarrier. `qam_symbols[i]` belongs to `subcarriers[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmConfig {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: Vec<i32>,
    pub qam_symbols: Vec<Complex64>,
    pub symbol_period_s: f64,
}

impl OfdmConfig {
    /// Builds and validates a config. The symbol period defaults to `1/f_Δ`.
    pub fn new(
        carrier_hz: f64,
        subcarrier_spacing_hz: f64,
        subcarriers: Vec<i32>,
        qam_symbols: Vec<Complex64>,
    ) -> Result<Self> {
        let cfg = Self {
            carrier_hz,
            subcarrier_spacing_hz,
            subcarriers,
            qam_symbols,
            symbol_period_s: 1.0 / subcarrier_spacing_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Unit-power QPSK on every subcarrier, drawn from a seeded generator.
    pub fn with_qpsk(
        carrier_hz: f64,
        subcarrier_spacing_hz: f64,
        subcarriers: Vec<i32>,
        seed: u64,
    ) -> Result<Self> {
        let symbols = qpsk_symbols(subcarriers.len(), seed);
        Self::new(carrier_hz, subcarrier_spacing_hz, subcarriers, symbols)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz.is_finite() && self.carrier_hz > 0.0) {
            return Err(Error::InvalidConfig("carrier_hz must be positive".into()));
        }
        if !(self.subcarrier_spacing_hz.is_finite() && self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::InvalidConfig("subcarrier_spacing_hz must be positive".into()));
        }
        if self.subcarrier_spacing_hz >= self.carrier_hz {
            return Err(Error::InvalidConfig(
                "subcarrier spacing must be below the carrier frequency".into(),
            ));
        }
        if self.subcarriers.is_empty() {
            return Err(Error::EmptySubcarrierSet);
        }
        if self.subcarriers.len() != self.qam_symbols.len() {
            return Err(Error::InvalidConfig(format!(
                "{} subcarriers but {} QAM symbols",
                self.subcarriers.len(),
                self.qam_symbols.len()
            )));
        }
        let mut sorted = self.subcarriers.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate subcarrier index".into()));
        }
        if self.qam_symbols.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("QAM symbols must be finite".into()));
        }
        if !(self.symbol_period_s.is_finite() && self.symbol_period_s > 0.0) {
            return Err(Error::InvalidConfig("symbol_period_s must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Highest absolute RF frequency present, `f_c + max|k|·f_Δ`.
    pub fn max_frequency_hz(&self) -> f64 {
        let kmax = self.subcarriers.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0);
        self.carrier_hz + kmax as f64 * self.subcarrier_spacing_hz
    }

    /// Σ|X_k|², the mean power of one symbol.
    pub fn symbol_power(&self) -> f64 {
        self.qam_symbols.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Evaluates s(t) exactly at an arbitrary instant.
    pub fn eval(&self, t_s: f64) -> Complex64 {
        self.subcarriers
            .iter()
            .zip(&self.qam_symbols)
            .map(|(&k, &x)| {
                let f = self.carrier_hz + k as f64 * self.subcarrier_spacing_hz;
                x * unit_phasor(f * t_s)
            })
            .sum()
    }

    fn check_rf_rate(&self, sample_rate_hz: f64) -> Result<()> {
        let required = 2.0 * self.max_frequency_hz();
        if !(sample_rate_hz >= required) {
            return Err(Error::SampleRateTooLow { sample_rate_hz, required_hz: required });
        }
        Ok(())
    }
}

/// exp(j·2π·cycles), with the integer part of `cycles` removed first so large
/// time arguments keep full phase precision.
pub(crate) fn unit_phasor(cycles: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * cycles.fract()).sin_cos();
    Complex64::new(c, s)
}

pub fn qpsk_symbols(count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = std::f64::consts::FRAC_1_SQRT_2;
    (0..count)
        .map(|_| {
            let re = if rng.random::<bool>() { a } else { -a };
            let im = if rng.random::<bool>() { a } else { -a };
            Complex64::new(re, im)
        })
        .collect()
}

/// Path distance of a reflector as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    /// `d(t) = d0_m + v_mps·t`, defined wherever it stays non-negative.
    Linear { d0_m: f64, v_mps: f64 },
    /// Piecewise-linear through `(t_s, d_m)` points, defined on
    /// `[first t, last t]`.
    Waypoints { points: Vec<(f64, f64)> },
}

impl Trajectory {
    pub fn stationary(d_m: f64) -> Self {
        Trajectory::Linear { d0_m: d_m, v_mps: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Trajectory::Linear { d0_m, v_mps } => {
                if !(d0_m.is_finite() && v_mps.is_finite()) {
                    return Err(Error::InvalidConfig("linear trajectory must be finite".into()));
                }
            }
            Trajectory::Waypoints { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidConfig("waypoint list is empty".into()));
                }
                if points.iter().any(|&(t, d)| !t.is_finite() || !d.is_finite() || d < 0.0) {
                    return Err(Error::InvalidConfig(
                        "waypoints must be finite with non-negative distance".into(),
                    ));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidConfig(
                        "waypoint times must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn distance(&self, t_s: f64) -> Result<f64> {
        let out_of_range = Error::TrajectoryOutOfRange { t_s };
        if !t_s.is_finite() {
            return Err(out_of_range);
        }
        match self {
            Trajectory::Linear { d0_m, v_mps } => {
                let d = d0_m + v_mps * t_s;
                if d < 0.0 {
                    Err(out_of_range)
                } else {
                    Ok(d)
                }
            }
            Trajectory::Waypoints { points } => {
                let (first, last) = match (points.first(), points.last()) {
                    (Some(f), Some(l)) => (*f, *l),
                    _ => return Err(out_of_range),
                };
                if t_s < first.0 || t_s > last.0 {
                    return Err(out_of_range);
                }
                // index of the first waypoint strictly after t
                let hi = points.partition_point(|&(t, _)| t <= t_s);
                if hi == points.len() {
                    return Ok(last.1);
                }
                let (t0, d0) = points[hi - 1];
                let (t1, d1) = points[hi];
                Ok(d0 + (d1 - d0) * (t_s - t0) / (t1 - t0))
            }
        }
    }
}

/// One moving or static object.
///
/// `azimuth_rad`/`elevation_rad` give the object's direction as seen from the
/// array; they only matter when per-antenna path lengths are derived from an
/// array geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflector {
    pub alpha: Complex64,
    pub trajectory: Trajectory,
    #[serde(default)]
    pub azimuth_rad: f64,
    #[serde(default)]
    pub elevation_rad: f64,
}

impl Reflector {
    pub fn new(alpha: Complex64, trajectory: Trajectory) -> Self {
        Self { alpha, trajectory, azimuth_rad: 0.0, elevation_rad: 0.0 }
    }

    pub fn with_direction(mut self, azimuth_rad: f64, elevation_rad: f64) -> Self {
        self.azimuth_rad = azimuth_rad;
        self.elevation_rad = elevation_rad;
        self
    }

    pub fn delay_s(&self, t_s: f64) -> Result<f64> {
        Ok(self.trajectory.distance(t_s)? / SPEED_OF_LIGHT)
    }
}

pub fn trajectory_distance(refl: &Reflector, t_s: f64) -> Result<f64> {
    refl.trajectory.distance(t_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    /// Complex gain of the amplify-and-forward chain.
    pub beta: Complex64,
    pub reflectors: Vec<Reflector>,
    /// Additive complex Gaussian noise, relative to the noiseless output power.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
}

impl Scene {
    pub fn new(beta: Complex64, reflectors: Vec<Reflector>) -> Self {
        Self { beta, reflectors, noise_snr_db: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta.norm() > 0.0) {
            return Err(Error::InvalidConfig("|beta| must be positive".into()));
        }
        for r in &self.reflectors {
            if !r.alpha.is_finite() {
                return Err(Error::InvalidConfig("reflector alpha must be finite".into()));
            }
            r.trajectory.validate()?;
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidConfig("noise_snr_db must be finite".into()));
            }
        }
        Ok(())
    }
}

/// A uniformly sampled complex sequence.
///
/// Signals produced by [`synthesize_symbol`] remember their generating
/// [`OfdmConfig`] so that [`propagate`] can realize fractional delays by
/// evaluating the waveform at `t − τ` instead of interpolating.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
    pub source: Option<OfdmConfig>,
}

impl SampledSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if samples.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidConfig("samples must be finite".into()));
        }
        Ok(Self { samples, sample_rate_hz, t0_s, source: None })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, n: usize) -> f64 {
        self.t0_s + n as f64 / self.sample_rate_hz
    }

    pub fn scaled(&self, gain: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|z| z * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
            t0_s: self.t0_s,
            source: None,
        }
    }
}

/// Samples one OFDM symbol (`symbol_period_s` long) at RF rate.
pub fn synthesize_symbol(cfg: &OfdmConfig, sample_rate_hz: f64, t0_s: f64) -> Result<SampledSignal> {
    let n = (cfg.symbol_period_s * sample_rate_hz).round() as usize;
    synthesize(cfg, sample_rate_hz, t0_s, n)
}

/// Samples s(t) for `n` samples starting at `t0_s`. The waveform is the
/// symbol of `cfg` held over the whole span.
pub fn synthesize(cfg: &OfdmConfig, sample_rate_hz: f64, t0_s: f64, n: usize) -> Result<SampledSignal> {
    cfg.validate()?;
    cfg.check_rf_rate(sample_rate_hz)?;
    let samples = (0..n)
        .into_par_iter()
        .map(|i| cfg.eval(t0_s + i as f64 / sample_rate_hz))
        .collect();
    Ok(SampledSignal { samples, sample_rate_hz, t0_s, source: Some(cfg.clone()) })
}

/// Passes `s` through the forward chain and the reflector set.
///
/// When `s` carries its generating config the delayed copies are exact.
/// Otherwise they are linearly interpolated, and any sample whose delayed
/// instant falls before the first input sample is taken as zero. Output has
/// the same time base as the input. Noise, if the scene asks for it, is drawn
/// from `seed`.
pub fn propagate(s: &SampledSignal, scene: &Scene, seed: u64) -> Result<SampledSignal> {
    scene.validate()?;
    let fs = s.sample_rate_hz;
    let samples: Result<Vec<Complex64>> = (0..s.len())
        .into_par_iter()
        .map(|n| {
            let t = s.time_at(n);
            let mut acc = Complex64::new(0.0, 0.0);
            for refl in &scene.reflectors {
                let delayed_t = t - refl.delay_s(t)?;
                let value = match &s.source {
                    Some(cfg) => cfg.eval(delayed_t),
                    None => interpolate(&s.samples, (delayed_t - s.t0_s) * fs),
                };
                acc += refl.alpha * value;
            }
            Ok(scene.beta * acc)
        })
        .collect();
    let mut samples = samples?;
    if let Some(snr_db) = scene.noise_snr_db {
        add_awgn(&mut samples, snr_db, seed);
    }
    Ok(SampledSignal { samples, sample_rate_hz: fs, t0_s: s.t0_s, source: None })
}

fn interpolate(samples: &[Complex64], pos: f64) -> Complex64 {
    if pos < 0.0 || samples.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    let i = pos.floor() as usize;
    if i + 1 >= samples.len() {
        return if i < samples.len() { samples[i] } else { Complex64::new(0.0, 0.0) };
    }
    let frac = pos - i as f64;
    samples[i] * (1.0 - frac) + samples[i + 1] * frac
}

/// Adds complex white Gaussian noise at `snr_db` below the mean power of
/// `samples`. A silent input stays silent.
pub fn add_awgn(samples: &mut [Complex64], snr_db: f64, seed: u64) {
    if samples.is_empty() {
        return;
    }
    let power = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64;
    add_awgn_with_power(samples, power / 10f64.powf(snr_db / 10.0), seed);
}

pub(crate) fn add_awgn_with_power(samples: &mut [Complex64], noise_power: f64, seed: u64) {
    if noise_power <= 0.0 {
        return;
    }
    let sigma = (noise_power / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for z in samples.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z += Complex64::new(re, im) * sigma;
    }
}

/// Receiver-side effects that shape a measured baseband stream.
///
/// * `dc_offset` is the mixer's output when no ambient signal is present.
/// * `signal_duty` is the fraction of each `tdd_period_s` during which the
///   ambient source transmits (downlink share of a TDD frame); the rest of
///   the period leaves only the DC offset and noise.
/// * `outlier_fraction` of samples receive an impulsive interference term
///   drawn uniformly from a square of half-width `outlier_amplitude` times
///   the signal RMS, added on top of the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Impairments {
    pub dc_offset: Complex64,
    pub signal_duty: f64,
    pub tdd_period_s: f64,
    pub outlier_fraction: f64,
    pub outlier_amplitude: f64,
}

impl Default for Impairments {
    fn default() -> Self {
        Self {
            dc_offset: Complex64::new(0.0, 0.0),
            signal_duty: 1.0,
            tdd_period_s: 2.5e-3,
            outlier_fraction: 0.0,
            outlier_amplitude: 2.0,
        }
    }
}

impl Impairments {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.signal_duty) {
            return Err(Error::InvalidConfig("signal_duty must lie in [0, 1]".into()));
        }
        if !(self.tdd_period_s.is_finite() && self.tdd_period_s > 0.0) {
            return Err(Error::InvalidConfig("tdd_period_s must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidConfig("outlier_fraction must lie in [0, 1]".into()));
        }
        if !(self.outlier_amplitude.is_finite() && self.outlier_amplitude >= 0.0) {
            return Err(Error::InvalidConfig("outlier_amplitude must be non-negative".into()));
        }
        if !self.dc_offset.is_finite() {
            return Err(Error::InvalidConfig("dc_offset must be finite".into()));
        }
        Ok(())
    }

    /// True when the ambient source is on the air at `t_s`.
    pub fn signal_present(&self, t_s: f64) -> bool {
        if self.signal_duty >= 1.0 {
            return true;
        }
        // sample times carry rounding error, so boundaries are snapped to
        // within 1e-9 of a period to keep every period gated identically
        let x = t_s / self.tdd_period_s;
        let phase = x - (x + 1e-9).floor();
        phase < self.signal_duty - 1e-9
    }
}

/// Turns a clean baseband into a "measured" one: TDD gating, DC offset, noise
/// at `snr_db` relative to the clean signal power, and uniform outliers.
pub fn apply_impairments(
    clean: &[Complex64],
    sample_rate_hz: f64,
    t0_s: f64,
    imp: &Impairments,
    snr_db: Option<f64>,
    seed: u64,
) -> Vec<Complex64> {
    let n = clean.len();
    if n == 0 {
        return Vec::new();
    }
    let power = clean.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    let mut out: Vec<Complex64> = clean
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let t = t0_s + i as f64 / sample_rate_hz;
            if imp.signal_present(t) {
                z + imp.dc_offset
            } else {
                imp.dc_offset
            }
        })
        .collect();
    if let Some(snr) = snr_db {
        add_awgn_with_power(&mut out, power / 10f64.powf(snr / 10.0), seed);
    }
    if imp.outlier_fraction > 0.0 {
        let half = imp.outlier_amplitude * power.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for z in out.iter_mut() {
            if rng.random::<f64>() < imp.outlier_fraction {
                let re = rng.random_range(-half..=half);
                let im = rng.random_range(-half..=half);
                *z += Complex64::new(re, im);
            }
        }
    }
    out
}
