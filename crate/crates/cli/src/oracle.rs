//! Brute-force check of the closed-form baseband.
//!
//! The scenario's waveform is synthesized at RF rate, propagated through the
//! scene, mixed with the forwarded copy, and low-passed at f_Δ/2. The result
//! is compared sample by sample with [`analytic_baseband`] away from the
//! record edges, where the block low-pass rings.

use ambisense::mixer_doppler::{analytic_baseband, lowpass_isolate, self_mix};
use ambisense::signal_model::{propagate, synthesize, SampledSignal};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

/// Highest carrier for which RF-rate synthesis is attempted.
pub const MAX_ORACLE_CARRIER_HZ: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub amplitude: f64,
    pub phase_rad: f64,
    /// Share of the record dropped at each end before comparing.
    pub edge_fraction: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { amplitude: 1e-3, phase_rad: 1e-2, edge_fraction: 0.1 }
    }
}

impl Tolerance {
    /// Amplitude tolerance `amplitude`, with the phase tolerance kept at ten
    /// times that in radians.
    pub fn scaled(amplitude: f64) -> Self {
        Self { amplitude, phase_rad: 10.0 * amplitude, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub samples_total: usize,
    pub samples_compared: usize,
    pub first_compared: usize,
    /// max over compared samples of `| |z_time| − |z_closed| | / |z_closed|`.
    pub max_rel_amplitude_error: f64,
    /// max over compared samples of `|arg(z_time / z_closed)|`.
    pub max_phase_error_rad: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

/// Runs both chains on `sc`. Noise and receiver impairments are not part of
/// either chain and are ignored.
pub fn run_oracle(sc: &Scenario, tol: &Tolerance) -> CliResult<OracleReport> {
    let z = time_domain_baseband(sc)?;
    compare(sc, &z, tol)
}

/// The RF-rate chain alone: synthesize, propagate without noise, mix with
/// the forwarded copy, and low-pass at f_Δ/2.
pub fn time_domain_baseband(sc: &Scenario) -> CliResult<SampledSignal> {
    if sc.ofdm.carrier_hz > MAX_ORACLE_CARRIER_HZ {
        return Err(CliError::validation(
            "ofdm.carrier_hz",
            format!("the oracle synthesizes at RF rate and needs a carrier of at most {MAX_ORACLE_CARRIER_HZ} Hz"),
        ));
    }
    let cfg = sc.ofdm_config()?;
    let mut scene = sc.scene.clone();
    scene.noise_snr_db = None;
    let s = synthesize(&cfg, sc.run.sample_rate_hz, sc.run.t0_s, sc.sample_count())?;
    let r = propagate(&s, &scene, sc.run.rng_seed)?;
    let forwarded = s.scaled(scene.beta);
    Ok(lowpass_isolate(&self_mix(&r, &forwarded)?, cfg.subcarrier_spacing_hz / 2.0)?)
}

/// Compares `z` with the closed-form baseband of `sc`, skipping
/// `tol.edge_fraction` of the record at each end.
pub fn compare(sc: &Scenario, z: &SampledSignal, tol: &Tolerance) -> CliResult<OracleReport> {
    if !(tol.edge_fraction >= 0.0 && tol.edge_fraction < 0.5) {
        return Err(CliError::validation("tolerance.edge_fraction", "must lie in [0, 0.5)"));
    }
    let cfg = sc.ofdm_config()?;
    let mut scene = sc.scene.clone();
    scene.noise_snr_db = None;
    let n = z.samples.len();
    let skip = (n as f64 * tol.edge_fraction).ceil() as usize;
    let range = skip..n.saturating_sub(skip);
    let mut amp: f64 = 0.0;
    let mut phase: f64 = 0.0;
    for i in range.clone() {
        let closed = analytic_baseband(&cfg, &scene, z.time_at(i))?.total;
        let time = z.samples[i];
        amp = amp.max((time.norm() - closed.norm()).abs() / closed.norm());
        phase = phase.max((time / closed).arg().abs());
    }
    let compared = range.len();
    Ok(OracleReport {
        samples_total: n,
        samples_compared: compared,
        first_compared: skip,
        max_rel_amplitude_error: amp,
        max_phase_error_rad: phase,
        tolerance: *tol,
        pass: compared > 0 && amp < tol.amplitude && phase < tol.phase_rad,
    })
}
