//! Self-mixing, low-pass isolation of the near-DC term, the closed-form
//! per-object baseband, and velocity from unwrapped phase.
//!
//! Mixing the reflected signal with the conjugate of the forwarded copy gives,
//! for each reflector, a sum over subcarrier pairs. The diagonal (k = k')
//! terms are constant in t apart from the slow path-length change; every
//! off-diagonal term oscillates at a non-zero multiple of f_Δ. A low-pass at
//! f_Δ/2 therefore leaves
//!
//! ```text
//! z_l(t) = |β|²·α_l·Σ_k |X_k|²·exp(−j2π(f_c + k·f_Δ)·d_l(t)/c)
//! ```
//!
//! whose phase is close to `−2π·f_c·d_l/c`. Differencing the unwrapped phase
//! over T_Δ yields a phase rate in rad/s; scaling by `−c/(2π·f_c)` converts it
//! to the rate of change of path distance in m/s. Both are returned.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::beamformer::{direction_vector, dot, DirectionConvention};
use crate::error::{Error, Result};
use crate::signal_model::{unit_phasor, OfdmConfig, SampledSignal, Scene, SPEED_OF_LIGHT};

/// Per-antenna baseband sequences sharing one time base.
///
/// `antenna_indices[i]` names the receive antenna that produced
/// `channels[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandStream {
    pub channels: Vec<Vec<Complex64>>,
    pub sample_rate_hz: f64,
    pub t0_s: f64,
    pub antenna_indices: Vec<usize>,
}

impl BasebandStream {
    pub fn new(channels: Vec<Vec<Complex64>>, sample_rate_hz: f64, t0_s: f64) -> Result<Self> {
        let antenna_indices = (0..channels.len()).collect();
        let stream = Self { channels, sample_rate_hz, t0_s, antenna_indices };
        stream.validate()?;
        Ok(stream)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(first) = self.channels.first() {
            for ch in &self.channels {
                if ch.len() != first.len() {
                    return Err(Error::LengthMismatch { left: first.len(), right: ch.len() });
                }
            }
        }
        if self.antenna_indices.len() != self.channels.len() {
            return Err(Error::LengthMismatch {
                left: self.channels.len(),
                right: self.antenna_indices.len(),
            });
        }
        Ok(())
    }

    pub fn samples_per_channel(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.samples_per_channel() as f64 / self.sample_rate_hz
    }

    pub fn end_s(&self) -> f64 {
        self.t0_s + self.duration_s()
    }

    /// Sample-and-hold value of `channel` at `t_s`.
    ///
    /// Sample n covers `[t0 + n/fs, t0 + (n+1)/fs)`; the closing instant of
    /// the span maps to the last sample.
    pub fn sample_at(&self, channel: usize, t_s: f64) -> Result<Complex64> {
        let n = self.samples_per_channel();
        let out = Error::TimestampOutOfRange { t_s, start_s: self.t0_s, end_s: self.end_s() };
        if n == 0 {
            return Err(out);
        }
        let pos = (t_s - self.t0_s) * self.sample_rate_hz;
        // tolerate round-off at both ends of the span
        if !(pos >= -1e-6 && pos <= n as f64 + 1e-6) {
            return Err(out);
        }
        let idx = ((pos + 1e-9).floor().max(0.0) as usize).min(n - 1);
        Ok(self.channels[channel][idx])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DopplerConfig {
    pub t_delta_s: f64,
    pub lowpass_cutoff_hz: f64,
}

impl DopplerConfig {
    /// T_Δ = `t_delta_s` and a cutoff of f_Δ/2.
    pub fn for_ofdm(cfg: &OfdmConfig, t_delta_s: f64) -> Self {
        Self { t_delta_s, lowpass_cutoff_hz: cfg.subcarrier_spacing_hz / 2.0 }
    }

    /// T_Δ expressed in samples at `sample_rate_hz`.
    pub fn lag_samples(&self, sample_rate_hz: f64) -> Result<usize> {
        if !(self.t_delta_s.is_finite() && self.t_delta_s > 0.0) {
            return Err(Error::InvalidConfig("t_delta_s must be positive".into()));
        }
        if !(self.lowpass_cutoff_hz > 0.0) {
            return Err(Error::InvalidConfig("lowpass_cutoff_hz must be positive".into()));
        }
        let lag = self.t_delta_s * sample_rate_hz;
        let rounded = lag.round();
        if rounded < 1.0 || (lag - rounded).abs() > 1e-6 * lag.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "t_delta_s = {} is not a whole number of sample periods at {} Hz",
                self.t_delta_s, sample_rate_hz
            )));
        }
        Ok(rounded as usize)
    }
}

/// `y[n] = r[n]·conj(s[n])`. Pass the forwarded copy (β·s) as `s` to obtain
/// the |β|² scaling of a physical mixer.
pub fn self_mix(r: &SampledSignal, s: &SampledSignal) -> Result<SampledSignal> {
    if r.len() != s.len() {
        return Err(Error::LengthMismatch { left: r.len(), right: s.len() });
    }
    if r.sample_rate_hz != s.sample_rate_hz || r.t0_s != s.t0_s {
        return Err(Error::RateMismatch);
    }
    let samples = r.samples.iter().zip(&s.samples).map(|(a, b)| a * b.conj()).collect();
    Ok(SampledSignal { samples, sample_rate_hz: r.sample_rate_hz, t0_s: r.t0_s, source: None })
}

/// Ideal low-pass over the whole record: zero every DFT bin with
/// `|f| > cutoff_hz`.
///
/// The record is treated as periodic, so samples near both ends carry
/// wrap-around ringing unless the retained content is periodic in the record
/// length.
pub fn lowpass_isolate(y: &SampledSignal, cutoff_hz: f64) -> Result<SampledSignal> {
    let nyquist = y.sample_rate_hz / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::CutoffAboveNyquist { cutoff_hz, nyquist_hz: nyquist });
    }
    let n = y.len();
    let mut buf = y.samples.clone();
    if n > 0 {
        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let bin_hz = y.sample_rate_hz / n as f64;
        for (i, v) in buf.iter_mut().enumerate() {
            let signed = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
            if (signed * bin_hz).abs() > cutoff_hz {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(SampledSignal { samples: buf, sample_rate_hz: y.sample_rate_hz, t0_s: y.t0_s, source: None })
}

/// `H(d) = Σ_k |X_k|²·exp(−j2π·k·f_Δ·d/c)`, the subcarrier part of z_l.
///
/// Equal-power symbols on a contiguous index range (optionally missing the DC
/// subcarrier) use the closed-form Dirichlet sum; anything else is summed
/// term by term.
#[derive(Debug, Clone)]
pub struct SubcarrierKernel {
    spacing_hz: f64,
    terms: Vec<(f64, f64)>,
    closed_form: Option<ClosedForm>,
}

#[derive(Debug, Clone, Copy)]
struct ClosedForm {
    power: f64,
    lo: i64,
    hi: i64,
    dc_hole: bool,
}

impl SubcarrierKernel {
    pub fn new(cfg: &OfdmConfig) -> Self {
        let terms: Vec<(f64, f64)> = cfg
            .subcarriers
            .iter()
            .zip(&cfg.qam_symbols)
            .map(|(&k, x)| (k as f64, x.norm_sqr()))
            .collect();
        Self { spacing_hz: cfg.subcarrier_spacing_hz, closed_form: detect_closed_form(cfg), terms }
    }

    pub fn eval(&self, d_m: f64) -> Complex64 {
        let x = 2.0 * PI * self.spacing_hz * d_m / SPEED_OF_LIGHT;
        match self.closed_form {
            Some(cf) => cf.eval(x),
            None => self
                .terms
                .iter()
                .map(|&(k, p)| {
                    let (s, c) = (k * x).sin_cos();
                    Complex64::new(p * c, -p * s)
                })
                .sum(),
        }
    }

    /// Direct term-by-term sum, regardless of structure.
    pub fn eval_direct(&self, d_m: f64) -> Complex64 {
        let x = 2.0 * PI * self.spacing_hz * d_m / SPEED_OF_LIGHT;
        self.terms
            .iter()
            .map(|&(k, p)| {
                let (s, c) = (k * x).sin_cos();
                Complex64::new(p * c, -p * s)
            })
            .sum()
    }
}

fn detect_closed_form(cfg: &OfdmConfig) -> Option<ClosedForm> {
    let power = cfg.qam_symbols.first()?.norm_sqr();
    if cfg.qam_symbols.iter().any(|x| (x.norm_sqr() - power).abs() > 1e-12 * power.max(1e-300)) {
        return None;
    }
    let lo = *cfg.subcarriers.iter().min()? as i64;
    let hi = *cfg.subcarriers.iter().max()? as i64;
    let span = (hi - lo + 1) as usize;
    let has_dc = cfg.subcarriers.contains(&0);
    let dc_hole = lo < 0 && hi > 0 && !has_dc;
    let expected = if dc_hole { span - 1 } else { span };
    (cfg.subcarriers.len() == expected).then_some(ClosedForm { power, lo, hi, dc_hole })
}

impl ClosedForm {
    fn eval(&self, x: f64) -> Complex64 {
        // integer subcarrier indices make the sum 2π-periodic in x
        let x = x.rem_euclid(2.0 * PI);
        let x = if x > PI { x - 2.0 * PI } else { x };
        let count = (self.hi - self.lo + 1) as f64;
        let half = 0.5 * x;
        // Σ_{k=lo}^{hi} e^{-jkx} = e^{-j(lo+hi)x/2}·sin(count·x/2)/sin(x/2)
        let ratio = if half.abs() < 1e-9 { count } else { (count * half).sin() / half.sin() };
        let centre = -((self.lo + self.hi) as f64) * half;
        let mut sum = Complex64::from_polar(ratio, centre);
        if self.dc_hole {
            sum -= 1.0;
        }
        sum * self.power
    }
}

/// Closed-form baseband at one instant: one value per reflector and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSample {
    pub per_reflector: Vec<Complex64>,
    pub total: Complex64,
}

pub fn analytic_baseband(cfg: &OfdmConfig, scene: &Scene, t_s: f64) -> Result<BasebandSample> {
    let kernel = SubcarrierKernel::new(cfg);
    analytic_baseband_with(&kernel, cfg, scene, t_s, None)
}

fn analytic_baseband_with(
    kernel: &SubcarrierKernel,
    cfg: &OfdmConfig,
    scene: &Scene,
    t_s: f64,
    rx_position: Option<[f64; 3]>,
) -> Result<BasebandSample> {
    let gain = scene.beta.norm_sqr();
    let per_reflector = scene
        .reflectors
        .iter()
        .map(|refl| {
            let mut d = refl.trajectory.distance(t_s)?;
            if let Some(p) = rx_position {
                let u = direction_vector(refl.azimuth_rad, refl.elevation_rad, DirectionConvention::Spherical);
                d -= dot(&u, &p);
            }
            Ok(refl.alpha * gain * kernel.eval(d) * unit_phasor(-cfg.carrier_hz * d / SPEED_OF_LIGHT))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = per_reflector.iter().sum();
    Ok(BasebandSample { per_reflector, total })
}

/// Closed-form baseband sampled on a uniform grid.
///
/// With `rx_position` set, each reflector's path is shortened by the
/// projection of the antenna position on the reflector's direction (far-field
/// plane wave), which is what separates the channels of an array.
pub fn analytic_stream(
    cfg: &OfdmConfig,
    scene: &Scene,
    sample_rate_hz: f64,
    t0_s: f64,
    n: usize,
    rx_position: Option<[f64; 3]>,
) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    scene.validate()?;
    let kernel = SubcarrierKernel::new(cfg);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let t = t0_s + i as f64 / sample_rate_hz;
            analytic_baseband_with(&kernel, cfg, scene, t, rx_position).map(|b| b.total)
        })
        .collect()
}

/// Magnitude of d(arg z)/dd, `2π·f_c/c` rad/m.
pub fn phase_to_distance_slope(cfg: &OfdmConfig) -> f64 {
    2.0 * PI * cfg.carrier_hz / SPEED_OF_LIGHT
}

/// Removes 2π jumps: whenever consecutive values differ by more than π, the
/// remainder of the sequence is shifted by the nearest multiple of 2π.
pub fn unwrap(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in phase {
        if let Some(q) = prev {
            let step = p - q;
            if step.abs() > PI {
                offset -= (step / (2.0 * PI)).round() * 2.0 * PI;
            }
        }
        prev = Some(p);
        out.push(p + offset);
    }
    out
}

/// Output of [`estimate_velocity`]. Entry i corresponds to input sample
/// `i + lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityTrace {
    pub lag: usize,
    pub phase_rate_rad_s: Vec<f64>,
    pub velocity_mps: Vec<f64>,
}

impl VelocityTrace {
    pub fn mean_velocity(&self) -> Option<f64> {
        if self.velocity_mps.is_empty() {
            return None;
        }
        Some(self.velocity_mps.iter().sum::<f64>() / self.velocity_mps.len() as f64)
    }
}

/// Phase rate over T_Δ and the corresponding path-distance rate.
///
/// `phase_rate(t) = (unwrap(arg z(t)) − unwrap(arg z(t − T_Δ)))/T_Δ` and
/// `velocity = −c·phase_rate/(2π·f_c)`, so a growing path gives a positive
/// velocity. Samples below 1e−12 of the peak magnitude have no usable phase
/// and are reported as errors.
pub fn estimate_velocity(
    z: &[Complex64],
    sample_rate_hz: f64,
    cfg: &OfdmConfig,
    dc: &DopplerConfig,
) -> Result<VelocityTrace> {
    let lag = dc.lag_samples(sample_rate_hz)?;
    if z.len() <= lag {
        return Err(Error::SequenceTooShort { len: z.len(), needed: lag });
    }
    let peak = z.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if let Some(index) = z.iter().position(|v| !(v.norm() > 1e-12 * peak)) {
        return Err(Error::ZeroMagnitudeSample { index });
    }
    let phase: Vec<f64> = z.iter().map(|v| v.arg()).collect();
    let unwrapped = unwrap(&phase);
    let t_delta = lag as f64 / sample_rate_hz;
    let phase_rate: Vec<f64> =
        (lag..z.len()).map(|n| (unwrapped[n] - unwrapped[n - lag]) / t_delta).collect();
    let scale = -SPEED_OF_LIGHT / (2.0 * PI * cfg.carrier_hz);
    let velocity = phase_rate.iter().map(|r| r * scale).collect();
    Ok(VelocityTrace { lag, phase_rate_rad_s: phase_rate, velocity_mps: velocity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{Reflector, Trajectory};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sig(samples: Vec<Complex64>, fs: f64) -> SampledSignal {
        SampledSignal::new(samples, fs, 0.0).unwrap()
    }

    #[test]
    fn self_mix_basics() {
        let s = sig((0..32).map(|n| Complex64::from_polar(1.0, 0.3 * n as f64)).collect(), 1e3);
        let y = self_mix(&s, &s).unwrap();
        assert!(y.samples.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-12));

        let w = 0.7;
        let delta = 0.05;
        let r = sig((0..32).map(|n| Complex64::from_polar(1.0, w * n as f64)).collect(), 1e3);
        let s2 = sig((0..32).map(|n| Complex64::from_polar(1.0, (w - delta) * n as f64)).collect(), 1e3);
        let y = self_mix(&r, &s2).unwrap();
        for (n, v) in y.samples.iter().enumerate() {
            assert!((v - Complex64::from_polar(1.0, delta * n as f64)).norm() < 1e-12);
        }

        let zero = sig(vec![c(0.0, 0.0); 32], 1e3);
        assert!(self_mix(&zero, &s).unwrap().samples.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn self_mix_rejects_mismatch() {
        let a = sig(vec![c(1.0, 0.0); 4], 1e3);
        let b = sig(vec![c(1.0, 0.0); 5], 1e3);
        assert!(matches!(self_mix(&a, &b), Err(Error::LengthMismatch { .. })));
        let c2 = sig(vec![c(1.0, 0.0); 4], 2e3);
        assert_eq!(self_mix(&a, &c2), Err(Error::RateMismatch));
    }

    #[test]
    fn lowpass_keeps_dc() {
        let y = sig(vec![c(0.3, -0.2); 1000], 1e4);
        let z = lowpass_isolate(&y, 100.0).unwrap();
        for v in &z.samples {
            assert!((v - c(0.3, -0.2)).norm() < 1e-6 * 0.36f64.sqrt());
        }
    }

    #[test]
    fn lowpass_suppresses_tone_above_cutoff() {
        // tone at 2·f_Δ, cutoff f_Δ/2; oracle is the DFT magnitude at the tone bin
        let fs = 64e3;
        let f_delta = 1e3;
        let n = 4096;
        let tone: Vec<Complex64> =
            (0..n).map(|i| unit_phasor(2.0 * f_delta * i as f64 / fs)).collect();
        let input_power = tone.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let z = lowpass_isolate(&sig(tone, fs), f_delta / 2.0).unwrap();
        let out_power = z.samples.iter().map(|v| v.norm_sqr()).sum::<f64>();
        assert!(10.0 * (out_power / input_power).log10() <= -40.0);
    }

    #[test]
    fn lowpass_separates_dc_from_subcarrier_tone() {
        let fs = 32e3;
        let f_delta = 1e3;
        let n = 3200;
        let dc = c(0.8, 0.6);
        let y: Vec<Complex64> =
            (0..n).map(|i| dc + unit_phasor(f_delta * i as f64 / fs) * 0.5).collect();
        let z = lowpass_isolate(&sig(y, fs), f_delta / 2.0).unwrap();
        for v in &z.samples {
            assert!((v - dc).norm() / dc.norm() < 1e-3);
        }
    }

    #[test]
    fn lowpass_rejects_cutoff_beyond_nyquist() {
        let y = sig(vec![c(1.0, 0.0); 8], 100.0);
        assert!(matches!(lowpass_isolate(&y, 50.0), Err(Error::CutoffAboveNyquist { .. })));
        assert!(matches!(lowpass_isolate(&y, 0.0), Err(Error::CutoffAboveNyquist { .. })));
    }

    fn symmetric_cfg(fc: f64, n: i32) -> OfdmConfig {
        let ks: Vec<i32> = (-n..=n).filter(|&k| k != 0).collect();
        OfdmConfig::with_qpsk(fc, 30e3, ks, 9).unwrap()
    }

    #[test]
    fn zero_distance_baseband_is_total_power() {
        let cfg = OfdmConfig::new(1e6, 1e3, vec![-1, 1], vec![c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        let scene = Scene::new(c(1.0, 0.0), vec![Reflector::new(c(1.0, 0.0), Trajectory::stationary(0.0))]);
        let b = analytic_baseband(&cfg, &scene, 0.0).unwrap();
        assert!((b.total - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn half_wavelength_rotates_by_pi() {
        let cfg = symmetric_cfg(2.35e9, 4);
        let d = cfg.wavelength_m() / 2.0;
        let scene = Scene::new(c(1.0, 0.0), vec![Reflector::new(c(1.0, 0.0), Trajectory::stationary(d))]);
        let z = analytic_baseband(&cfg, &scene, 0.0).unwrap().total;
        assert!((z.arg().abs() - PI).abs() < 1e-9, "arg {}", z.arg());
    }

    #[test]
    fn closed_form_kernel_matches_direct_sum() {
        for ks in [(-50..=50).collect::<Vec<i32>>(), (-7..=9).collect()] {
            let cfg = OfdmConfig::with_qpsk(2.35e9, 30e3, ks, 2).unwrap();
            let k = SubcarrierKernel::new(&cfg);
            assert!(k.closed_form.is_some());
            for d in [0.0, 0.37, 1.5, 12.0, 250.0, 1.0e4] {
                assert!((k.eval(d) - k.eval_direct(d)).norm() < 1e-9 * cfg.symbol_power(), "d={d}");
            }
        }
        let holed = symmetric_cfg(2.35e9, 40);
        let k = SubcarrierKernel::new(&holed);
        assert!(k.closed_form.unwrap().dc_hole);
        for d in [0.0, 0.37, 3.1, 99.0, 1.0e4, SPEED_OF_LIGHT / 30e3] {
            assert!((k.eval(d) - k.eval_direct(d)).norm() < 1e-9 * holed.symbol_power(), "d={d}");
        }
        let sparse = OfdmConfig::with_qpsk(2.35e9, 30e3, vec![-5, 2, 3], 2).unwrap();
        assert!(SubcarrierKernel::new(&sparse).closed_form.is_none());
    }

    #[test]
    fn slope_values() {
        let cfg = symmetric_cfg(2.35e9, 2);
        assert!((phase_to_distance_slope(&cfg) - 49.25).abs() < 0.01);
        let unit = OfdmConfig::with_qpsk(SPEED_OF_LIGHT / (2.0 * PI), 1.0, vec![0], 1).unwrap();
        assert_relative_eq!(phase_to_distance_slope(&unit), 1.0, epsilon = 1e-12);
        let doubled = symmetric_cfg(4.7e9, 2);
        assert_relative_eq!(phase_to_distance_slope(&doubled), 2.0 * phase_to_distance_slope(&cfg), epsilon = 1e-9);
    }

    #[test]
    fn static_object_has_zero_velocity() {
        let cfg = symmetric_cfg(2.35e9, 2);
        let dc = DopplerConfig { t_delta_s: 0.01, lowpass_cutoff_hz: 15e3 };
        let z = vec![c(0.3, 0.4); 50];
        let v = estimate_velocity(&z, 100.0, &cfg, &dc).unwrap();
        assert_eq!(v.velocity_mps.len(), 49);
        assert!(v.velocity_mps.iter().all(|&x| x == 0.0));
        assert!(v.phase_rate_rad_s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_speed_is_recovered_from_phase_ramp() {
        let cfg = symmetric_cfg(2.35e9, 2);
        let fs = 1000.0;
        let z: Vec<Complex64> = (0..3000).map(|n| Complex64::from_polar(1.0, -49.25 * n as f64 / fs)).collect();
        let dc = DopplerConfig { t_delta_s: 0.005, lowpass_cutoff_hz: 15e3 };
        let v = estimate_velocity(&z, fs, &cfg, &dc).unwrap();
        for &x in &v.velocity_mps {
            assert!((x - 1.0).abs() < 1e-3, "{x}");
        }
        assert!((v.phase_rate_rad_s[0] + 49.25).abs() < 1e-6);
    }

    #[test]
    fn velocity_errors() {
        let cfg = symmetric_cfg(2.35e9, 2);
        let dc = DopplerConfig { t_delta_s: 0.01, lowpass_cutoff_hz: 15e3 };
        assert!(matches!(estimate_velocity(&[c(1.0, 0.0)], 100.0, &cfg, &dc), Err(Error::SequenceTooShort { .. })));
        let z = vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        assert_eq!(estimate_velocity(&z, 100.0, &cfg, &dc), Err(Error::ZeroMagnitudeSample { index: 1 }));
        let off_grid = DopplerConfig { t_delta_s: 0.015, lowpass_cutoff_hz: 15e3 };
        assert!(estimate_velocity(&[c(1.0, 0.0); 8], 100.0, &cfg, &off_grid).is_err());
    }

    #[test]
    fn sample_and_hold_lookup() {
        let s = BasebandStream::new(vec![vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]], 10.0, 1.0).unwrap();
        assert_eq!(s.sample_at(0, 1.0).unwrap(), c(0.0, 0.0));
        assert_eq!(s.sample_at(0, 1.15).unwrap(), c(1.0, 0.0));
        assert_eq!(s.sample_at(0, 1.3).unwrap(), c(2.0, 0.0));
        assert!(matches!(s.sample_at(0, 0.9), Err(Error::TimestampOutOfRange { .. })));
        assert!(matches!(s.sample_at(0, 1.31), Err(Error::TimestampOutOfRange { .. })));
        assert!(BasebandStream::new(vec![vec![c(0.0, 0.0)], vec![]], 10.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn unwrap_is_idempotent(raw in prop::collection::vec(-10.0f64..10.0, 0..64)) {
            let wrapped: Vec<f64> = raw.iter().map(|p| Complex64::from_polar(1.0, *p).arg()).collect();
            let once = unwrap(&wrapped);
            let twice = unwrap(&once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn unwrap_leaves_continuous_sequences_alone(start in -3.0f64..3.0, steps in prop::collection::vec(-3.0f64..3.0, 0..64)) {
            let mut seq = vec![start];
            for s in steps { let last = *seq.last().unwrap(); seq.push(last + s); }
            prop_assert_eq!(unwrap(&seq), seq);
        }

        #[test]
        fn symmetric_spectrum_gives_exact_linear_phase(d in 0.0f64..3.0, n in 1i32..40) {
            // the subcarrier sum is real, so arg z = −2π f_c d/c modulo π
            let cfg = symmetric_cfg(2.35e9, n);
            let scene = Scene::new(c(1.0, 0.0), vec![Reflector::new(c(1.0, 0.0), Trajectory::stationary(d))]);
            let z = analytic_baseband(&cfg, &scene, 0.0).unwrap().total;
            let expected = -phase_to_distance_slope(&cfg) * d;
            let diff = (z * Complex64::from_polar(1.0, -expected)).arg();
            let modpi = diff.rem_euclid(PI);
            prop_assert!(modpi < 1e-9 || PI - modpi < 1e-9, "diff {}", diff);
        }
    }
}
