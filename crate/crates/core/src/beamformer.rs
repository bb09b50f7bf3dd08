//! Differential beamforming over an azimuth/elevation grid.
//!
//! For a hypothesised arrival direction u(θ, φ) the expected phase at
//! antenna i is `(2π/λ)·⟨u, p_i⟩`. Differencing each channel against itself
//! T_Δ earlier removes every reflector whose path length did not change, and
//! the steered sum
//!
//! ```text
//! I(θ, φ, t) = Σ_i w_i(θ, φ)·(z_i(t) − z_i(t − T_Δ)),   w_i = exp(−j(2π/λ)⟨u, p_i⟩)
//! ```
//!
//! peaks in the direction of the movers. A heatmap frame holds |I| over the
//! grid.
//!
//! The receive phase of a plane wave from u₀ is `+(2π/λ)⟨u₀, p_i⟩` because
//! antennas displaced towards the source see a shorter path. The weights
//! cancel exactly that phase, so the difference is summed as is. Summing its
//! conjugate instead would place the peak at the mirror image of the source
//! through the array normal.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer_doppler::BasebandStream;

pub type Vec3 = [f64; 3];

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// How (θ, φ) maps to a direction vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionConvention {
    /// `(cosφ·cosθ, cosφ·sinθ, sinφ)`: unit norm, with θ the azimuth from
    /// the x axis towards y and φ the elevation above the x–y plane.
    #[default]
    Spherical,
    /// `(cosθ·cosφ, cosθ·sinφ, sinφ)`. Its squared norm is `cos²θ + sin²φ`,
    /// so it is a unit vector only on the lines θ = 0 or |θ| = |φ|, and it is
    /// even in θ, which leaves the sign of the azimuth unresolved.
    Printed,
}

pub fn direction_vector(theta: f64, phi: f64, convention: DirectionConvention) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    match convention {
        DirectionConvention::Spherical => [cp * ct, cp * st, sp],
        DirectionConvention::Printed => [ct * cp, ct * sp, sp],
    }
}

/// `exp(−j(2π/λ)·⟨u(θ, φ), p⟩)` with the spherical direction convention.
pub fn steering_weight(p: &Vec3, theta: f64, phi: f64, lambda_m: f64) -> Complex64 {
    steering_weight_for(p, &direction_vector(theta, phi, DirectionConvention::Spherical), lambda_m)
}

pub fn steering_weight_for(p: &Vec3, u: &Vec3, lambda_m: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI / lambda_m * dot(u, p))
}

/// Transmit antenna at the origin and the ordered receive antennas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    #[serde(default)]
    pub tx_position: Vec3,
    pub rx_positions: Vec<Vec3>,
    pub wavelength_m: f64,
}

impl ArrayGeometry {
    pub fn new(rx_positions: Vec<Vec3>, wavelength_m: f64) -> Result<Self> {
        let g = Self { tx_position: [0.0; 3], rx_positions, wavelength_m };
        g.validate()?;
        Ok(g)
    }

    /// Eight antennas on a 3×3 grid with spacing λ/2 in the y–z plane, the
    /// centre position left to the transmit antenna. Boresight is +x, so
    /// azimuth and elevation both vary across the aperture.
    pub fn ring_of_eight(wavelength_m: f64) -> Self {
        let h = wavelength_m / 2.0;
        let rx_positions = (-1..=1)
            .flat_map(|row: i32| (-1..=1).map(move |col: i32| (row, col)))
            .filter(|&(row, col)| (row, col) != (0, 0))
            .map(|(row, col)| [0.0, col as f64 * h, row as f64 * h])
            .collect();
        Self { tx_position: [0.0; 3], rx_positions, wavelength_m }
    }

    /// `n` antennas along y with spacing `spacing_m`, centred on the origin.
    pub fn uniform_linear(n: usize, spacing_m: f64, wavelength_m: f64) -> Self {
        let mid = (n as f64 - 1.0) / 2.0;
        let rx_positions = (0..n).map(|i| [0.0, (i as f64 - mid) * spacing_m, 0.0]).collect();
        Self { tx_position: [0.0; 3], rx_positions, wavelength_m }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rx_positions.len() < 2 {
            return Err(Error::InvalidConfig("need at least two receive antennas".into()));
        }
        if !(self.wavelength_m.is_finite() && self.wavelength_m > 0.0) {
            return Err(Error::InvalidConfig("wavelength must be positive".into()));
        }
        let finite = |p: &Vec3| p.iter().all(|v| v.is_finite());
        if !finite(&self.tx_position) || !self.rx_positions.iter().all(finite) {
            return Err(Error::InvalidConfig("antenna positions must be finite".into()));
        }
        Ok(())
    }
}

/// Ascending azimuth and elevation samples in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionGrid {
    pub theta_values: Vec<f64>,
    pub phi_values: Vec<f64>,
}

impl Default for DirectionGrid {
    /// 100 × 100 over ±60° in both angles.
    fn default() -> Self {
        let lim = 60f64.to_radians();
        Self::uniform(100, 100, -lim, lim)
    }
}

impl DirectionGrid {
    pub fn uniform(n_theta: usize, n_phi: usize, lo: f64, hi: f64) -> Self {
        Self { theta_values: linspace(lo, hi, n_theta), phi_values: linspace(lo, hi, n_phi) }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta", &self.theta_values), ("phi", &self.phi_values)] {
            if v.is_empty() {
                return Err(Error::InvalidConfig(format!("{name} grid is empty")));
            }
            if v.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidConfig(format!("{name} grid must be strictly ascending")));
            }
            if v.iter().any(|a| !(a.abs() <= PI / 2.0 + 1e-12)) {
                return Err(Error::InvalidConfig(format!("{name} grid must lie within ±π/2")));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.phi_values.len(), self.theta_values.len())
    }

    /// `(phi_index, theta_index)` of the cell closest to the given angles.
    pub fn nearest_cell(&self, theta: f64, phi: f64) -> (usize, usize) {
        (nearest(&self.phi_values, phi), nearest(&self.theta_values, theta))
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn nearest(values: &[f64], x: f64) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - x).abs() < (values[best] - x).abs() {
            best = i;
        }
    }
    best
}

/// |I| over the grid at one instant, stored row-major as `[phi][theta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapFrame {
    pub t_s: f64,
    pub n_phi: usize,
    pub n_theta: usize,
    pub values: Vec<f64>,
}

impl HeatmapFrame {
    pub fn get(&self, phi_index: usize, theta_index: usize) -> f64 {
        self.values[phi_index * self.n_theta + theta_index]
    }

    pub fn row(&self, phi_index: usize) -> &[f64] {
        &self.values[phi_index * self.n_theta..(phi_index + 1) * self.n_theta]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `(phi_index, theta_index)` of the largest value; the first in
    /// row-major order wins ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.n_theta.max(1), best % self.n_theta.max(1))
    }
}

/// How the receive chain observes the antennas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchModel {
    /// Every channel sampled at every instant.
    #[default]
    Simultaneous,
    /// One chain cycles through the antennas in order, staying `dwell_s` on
    /// each. A channel queried while inactive returns its sample nearest in
    /// time from its own active slots.
    RoundRobin { dwell_s: f64 },
}

impl SwitchModel {
    fn observed_time(&self, stream: &BasebandStream, channel: usize, t_s: f64) -> f64 {
        let SwitchModel::RoundRobin { dwell_s } = *self else {
            return t_s;
        };
        let m = stream.channels.len() as f64;
        let period = m * dwell_s;
        let slot_start = channel as f64 * dwell_s;
        let local = (t_s - stream.t0_s - slot_start).rem_euclid(period);
        if local < dwell_s {
            return t_s;
        }
        let last_sample = 1.0 / stream.sample_rate_hz;
        let before = t_s - (local - dwell_s) - last_sample.min(dwell_s) * 0.5;
        let after = t_s + (period - local);
        let pick = if t_s - before <= after - t_s { before } else { after };
        let candidates = [pick, before, after];
        candidates
            .into_iter()
            .find(|&c| c >= stream.t0_s && c <= stream.end_s())
            .unwrap_or(t_s)
    }
}

/// Geometry, grid, and convention with the steering weights precomputed.
#[derive(Debug, Clone)]
pub struct Beamformer {
    geometry: ArrayGeometry,
    grid: DirectionGrid,
    switch: SwitchModel,
    /// `weights[cell * M + i]`
    weights: Vec<Complex64>,
}

impl Beamformer {
    pub fn new(geometry: ArrayGeometry, grid: DirectionGrid) -> Result<Self> {
        Self::with_options(geometry, grid, DirectionConvention::default(), SwitchModel::default())
    }

    pub fn with_options(
        geometry: ArrayGeometry,
        grid: DirectionGrid,
        convention: DirectionConvention,
        switch: SwitchModel,
    ) -> Result<Self> {
        geometry.validate()?;
        grid.validate()?;
        if let SwitchModel::RoundRobin { dwell_s } = switch {
            if !(dwell_s.is_finite() && dwell_s > 0.0) {
                return Err(Error::InvalidConfig("dwell_s must be positive".into()));
            }
        }
        let mut weights = Vec::with_capacity(grid.phi_values.len() * grid.theta_values.len() * geometry.rx_positions.len());
        for &phi in &grid.phi_values {
            for &theta in &grid.theta_values {
                let u = direction_vector(theta, phi, convention);
                weights.extend(geometry.rx_positions.iter().map(|p| steering_weight_for(p, &u, geometry.wavelength_m)));
            }
        }
        Ok(Self { geometry, grid, switch, weights })
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn grid(&self) -> &DirectionGrid {
        &self.grid
    }

    /// |I| over the grid for per-antenna differences `dz[i]`.
    pub fn image(&self, dz: &[Complex64], t_s: f64) -> Result<HeatmapFrame> {
        let m = self.geometry.rx_positions.len();
        if dz.len() != m {
            return Err(Error::ChannelGeometryMismatch { channels: dz.len(), antennas: m });
        }
        let values = self
            .weights
            .par_chunks(m)
            .map(|w| w.iter().zip(dz).map(|(w, d)| w * d).sum::<Complex64>().norm())
            .collect();
        let (n_phi, n_theta) = self.grid.shape();
        Ok(HeatmapFrame { t_s, n_phi, n_theta, values })
    }

    /// Per-antenna `z_i(t) − z_i(t − T_Δ)`.
    pub fn differences(&self, streams: &BasebandStream, t_s: f64, t_delta_s: f64) -> Result<Vec<Complex64>> {
        let m = self.geometry.rx_positions.len();
        if streams.channels.len() != m {
            return Err(Error::ChannelGeometryMismatch { channels: streams.channels.len(), antennas: m });
        }
        (0..m)
            .map(|i| {
                let now = streams.sample_at(i, self.switch.observed_time(streams, i, t_s))?;
                let before = streams.sample_at(i, self.switch.observed_time(streams, i, t_s - t_delta_s))?;
                Ok(now - before)
            })
            .collect()
    }

    pub fn frame(&self, streams: &BasebandStream, t_s: f64, t_delta_s: f64) -> Result<HeatmapFrame> {
        let dz = self.differences(streams, t_s, t_delta_s)?;
        self.image(&dz, t_s)
    }

    /// One frame per `frame_period_s`, at `t0 + (f+1)·period` for every such
    /// instant inside the stream.
    pub fn sequence(&self, streams: &BasebandStream, frame_period_s: f64, t_delta_s: f64) -> Result<Vec<HeatmapFrame>> {
        frame_times(streams, frame_period_s)?
            .into_iter()
            .map(|t| self.frame(streams, t, t_delta_s))
            .collect()
    }
}

/// Frame timestamps used by [`heatmap_sequence`].
pub fn frame_times(streams: &BasebandStream, frame_period_s: f64) -> Result<Vec<f64>> {
    if !(frame_period_s.is_finite() && frame_period_s > 0.0) {
        return Err(Error::InvalidConfig("frame period must be positive".into()));
    }
    let count = (streams.duration_s() / frame_period_s + 1e-9).floor() as usize;
    Ok((1..=count).map(|f| streams.t0_s + f as f64 * frame_period_s).collect())
}

/// Differential heatmap at `t_s` with the default direction convention and
/// simultaneous sampling.
pub fn differential_beamform(
    streams: &BasebandStream,
    geom: &ArrayGeometry,
    grid: &DirectionGrid,
    t_s: f64,
    t_delta_s: f64,
) -> Result<HeatmapFrame> {
    Beamformer::new(geom.clone(), grid.clone())?.frame(streams, t_s, t_delta_s)
}

pub fn heatmap_sequence(
    streams: &BasebandStream,
    geom: &ArrayGeometry,
    grid: &DirectionGrid,
    frame_period_s: f64,
    t_delta_s: f64,
) -> Result<Vec<HeatmapFrame>> {
    Beamformer::new(geom.clone(), grid.clone())?.sequence(streams, frame_period_s, t_delta_s)
}
