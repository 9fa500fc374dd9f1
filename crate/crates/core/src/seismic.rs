//! SEISMIC: a doubly stochastic Hawkes predictor whose infectiousness
//! `p(t)` varies in time and is re-estimated from the observed events.
//!
//! Each event with mark `m` (follower count) exposes `m · φ(s)` users per
//! unit time after a delay `s`, where `φ` is a fixed human reaction-time
//! kernel: constant `c0` up to `s0`, then a power law with exponent
//! `−(1 + θ)`. The reference constants (`s0 = 300 s`, `θ = 0.242`,
//! `c0 = 6.49e−4`) make `φ` integrate to one.
//!
//! The infectiousness estimate uses a rectangular trailing window instead of
//! the tapered weighting of the original estimator; the window length is a
//! tuning knob.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::cascade::Cascade;
use crate::math::{self, KahanSum};
use crate::simulation::Excitation;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeismicConfig {
    /// End of the constant region of the reaction-time kernel (seconds).
    pub s0: f64,
    /// Power-law decay exponent of the kernel tail.
    pub theta_s: f64,
    /// Kernel height on `[0, s0]`.
    pub c0: f64,
    /// Length of the trailing infectiousness window (seconds).
    pub window: f64,
    /// Scale of the descendant correction.
    pub gamma: f64,
}

impl Default for SeismicConfig {
    /// Reference defaults.
    fn default() -> Self {
        Self {
            s0: 300.0,
            theta_s: 0.242,
            c0: 6.49e-4,
            window: 4.0 * 300.0,
            gamma: 1.0,
        }
    }
}

impl SeismicConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s0", self.s0),
            ("theta_s", self.theta_s),
            ("c0", self.c0),
            ("window", self.window),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!(
                    "SEISMIC {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `∫₀^∞ φ = c0 · s0 · (1 + 1/θ)`.
    pub fn kernel_mass(&self) -> f64 {
        self.c0 * self.s0 * (1.0 + 1.0 / self.theta_s)
    }

    #[inline]
    fn kernel_unchecked(&self, s: f64) -> f64 {
        if s <= self.s0 {
            self.c0
        } else {
            self.c0 * math::powf(s / self.s0, -(1.0 + self.theta_s))
        }
    }

    /// `K(t) = ∫₀ᵗ φ`.
    #[inline]
    pub fn kernel_integral(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t <= self.s0 {
            self.c0 * t
        } else {
            let tail_part = -math::expm1(-self.theta_s * math::ln(t / self.s0));
            self.c0 * self.s0 * (1.0 + tail_part / self.theta_s)
        }
    }

    /// `∫ₜ^∞ φ`.
    #[inline]
    pub fn kernel_tail(&self, t: f64) -> f64 {
        if t <= self.s0 {
            self.kernel_mass() - self.c0 * t.max(0.0)
        } else {
            self.c0 * self.s0 / self.theta_s * math::powf(t / self.s0, -self.theta_s)
        }
    }
}

/// Reaction-time kernel `φ(s)`.
pub fn seismic_kernel(config: &SeismicConfig, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("kernel lag must be non-negative, got {s}")));
    }
    Ok(config.kernel_unchecked(s))
}

/// Marked Hawkes process `λ(t) = p Σ mᵢ φ(t − tᵢ)` with constant
/// infectiousness `p`; used to simulate SEISMIC-style cascades.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeismicProcess {
    pub config: SeismicConfig,
    pub infectiousness: f64,
}

impl Excitation for SeismicProcess {
    fn mark_factor(&self, mark: f64) -> f64 {
        self.infectiousness * mark
    }

    fn value(&self, dt: f64) -> f64 {
        self.config.kernel_unchecked(dt)
    }
}

fn check_time(cascade: &Cascade, t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!(
            "t = {t} precedes the first event of `{}`",
            cascade.cascade_id
        )));
    }
    if t > cascade.observation_time() {
        return Err(Error::Domain(format!(
            "t = {t} beyond observation time {}",
            cascade.observation_time()
        )));
    }
    Ok(())
}

/// Trailing-window estimate of the infectiousness at `t` from raw event
/// times and marks (times need not start at 0; the first event is the
/// original post and is not counted as a reshare).
pub fn estimate_infectiousness_raw(config: &SeismicConfig, times: &[f64], marks: &[f64], t: f64) -> f64 {
    let origin = match times.first() {
        Some(&t0) => t0,
        None => return 0.0,
    };
    let window_start = t - config.window;
    let count = times
        .iter()
        .skip(1)
        .filter(|&&ti| ti > window_start && ti <= t && ti >= origin)
        .count();
    let mut exposure = KahanSum::default();
    for (&ti, &mi) in times.iter().zip(marks) {
        if ti > t {
            break;
        }
        let full = config.kernel_integral(t - ti);
        let before = config.kernel_integral((window_start - ti).max(0.0));
        exposure.add(mi * (full - before));
    }
    let exposure = exposure.total();
    if exposure > 0.0 {
        count as f64 / exposure
    } else {
        0.0
    }
}

/// `p̂(t)`: reshares in the trailing window divided by the exposure the
/// cascade generated inside that window.
pub fn estimate_infectiousness(config: &SeismicConfig, cascade: &Cascade, t: f64) -> Result<f64> {
    config.validate()?;
    check_time(cascade, t)?;
    let times: alloc::vec::Vec<f64> = cascade.times().collect();
    let marks: alloc::vec::Vec<f64> = cascade.magnitudes().collect();
    Ok(estimate_infectiousness_raw(config, &times, &marks, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeismicPrediction {
    pub prediction: f64,
    pub infectiousness: f64,
    /// Observed count `R_t`.
    pub observed: usize,
    /// The descendant correction diverged and the prediction fell back to
    /// the observed count.
    pub saturated: bool,
}

/// Final-popularity prediction at time `t`:
/// `R_t + p̂ Σ mᵢ ∫_{t−tᵢ}^∞ φ / (1 − γ p̂ m̄)`, where `m̄` is the mean mark
/// of the observed reshares (the initial post is excluded).
pub fn seismic_predict(config: &SeismicConfig, cascade: &Cascade, t: f64) -> Result<SeismicPrediction> {
    config.validate()?;
    check_time(cascade, t)?;
    let p_hat = estimate_infectiousness(config, cascade, t)?;
    let observed: alloc::vec::Vec<_> = cascade.events().iter().filter(|e| e.time <= t).collect();
    let r_t = observed.len();
    let mut future = KahanSum::default();
    let mut mark_sum = KahanSum::default();
    for e in &observed {
        future.add(e.magnitude * config.kernel_tail(t - e.time));
    }
    for e in observed.iter().skip(1) {
        mark_sum.add(e.magnitude);
    }
    let mean_mark = if r_t > 1 {
        mark_sum.total() / (r_t - 1) as f64
    } else {
        observed[0].magnitude
    };
    let denom = 1.0 - config.gamma * p_hat * mean_mark;
    if !(denom > 0.0) {
        return Ok(SeismicPrediction {
            prediction: r_t as f64,
            infectiousness: p_hat,
            observed: r_t,
            saturated: true,
        });
    }
    Ok(SeismicPrediction {
        prediction: r_t as f64 + p_hat * future.total() / denom,
        infectiousness: p_hat,
        observed: r_t,
        saturated: false,
    })
}
