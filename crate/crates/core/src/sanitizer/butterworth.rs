//! Digital Butterworth low-pass as a cascade of biquads.
//!
//! The analog prototype `|H(jω)|² = 1/(1 + (ω/ω_c)^{2N})` is mapped to the
//! z-plane with the bilinear transform after prewarping the cutoff, so the
//! digital response is exactly −3 dB at `cutoff_hz`. Each section runs in
//! transposed direct form II and starts in the steady state of the first
//! input sample, which avoids a start-up transient on signals with a large
//! DC component.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b: [f64; 3],
    a: [f64; 2],
}

impl Section {
    /// Steady-state TDF-II registers for a constant input `x0` (unity DC gain).
    fn rest_state(&self, x0: Complex64) -> [Complex64; 2] {
        let s2 = x0 * (self.b[2] - self.a[1]);
        let s1 = x0 * (self.b[1] - self.a[0]) + s2;
        [s1, s2]
    }
}

/// A designed filter; reusable across sequences with the same sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Section>,
}

impl Butterworth {
    pub fn design(sample_rate_hz: f64, order: usize, cutoff_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::OrderZero);
        }
        let nyquist = sample_rate_hz / 2.0;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::CutoffAboveNyquist { cutoff_hz, nyquist_hz: nyquist });
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            // conjugate pole pair at angle ψ from the negative real axis
            let psi = PI * (order - 1 - 2 * i) as f64 / (2 * order) as f64;
            let damp = 2.0 * psi.cos();
            let norm = 1.0 / (1.0 + damp * k + k2);
            let b0 = k2 * norm;
            sections.push(Section {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k2 - 1.0) * norm, (1.0 - damp * k + k2) * norm],
            });
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            sections.push(Section { b: [k * norm, k * norm, 0.0], a: [(k - 1.0) * norm, 0.0] });
        }
        Ok(Self { sections })
    }

    pub fn order(&self) -> usize {
        self.sections.iter().map(|s| if s.b[2] == 0.0 { 1 } else { 2 }).sum()
    }

    /// Filters `x`. Coefficients are real, so the real and imaginary parts
    /// are filtered independently of each other.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = x.to_vec();
        let Some(&x0) = x.first() else {
            return y;
        };
        for sec in &self.sections {
            let [mut s1, mut s2] = sec.rest_state(x0);
            let [b0, b1, b2] = sec.b;
            let [a1, a2] = sec.a;
            for v in y.iter_mut() {
                let input = *v;
                let out = input * b0 + s1;
                s1 = input * b1 - out * a1 + s2;
                s2 = input * b2 - out * a2;
                *v = out;
            }
        }
        y
    }

    /// Magnitude of the digital frequency response at `f_hz`.
    pub fn gain_at(&self, f_hz: f64, sample_rate_hz: f64) -> f64 {
        let z = Complex64::from_polar(1.0, -2.0 * PI * f_hz / sample_rate_hz);
        self.sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * z + s.b[2] * z * z;
                let den = 1.0 + s.a[0] * z + s.a[1] * z * z;
                (num / den).norm()
            })
            .product()
    }
}

pub fn butterworth_lowpass(
    x: &[Complex64],
    sample_rate_hz: f64,
    order: usize,
    cutoff_hz: f64,
) -> Result<Vec<Complex64>> {
    Ok(Butterworth::design(sample_rate_hz, order, cutoff_hz)?.apply(x))
}
