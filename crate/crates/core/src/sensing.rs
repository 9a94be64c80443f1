//! Poisson count model: expected counts with a line-of-sight inverse-square
//! signal, count sampling, and the exceedance threshold that selects the
//! small-step branch of the walk.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{MapSpec, Vec2};

/// Physical description of the inspecting robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InspectorSpec {
    /// Fundamental length (diameter), meters.
    pub r_i: f64,
    /// Detector range, meters: distance at which signal equals background.
    pub r_d: f64,
    /// Travel speed, meters per second.
    pub speed: f64,
    /// Dwell time per measurement, seconds.
    pub measure_seconds: f64,
}

impl InspectorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r_i.is_finite()
            && self.r_i > 0.0
            && self.r_d.is_finite()
            && self.r_d > self.r_i
            && self.speed.is_finite()
            && self.speed > 0.0
            && self.measure_seconds.is_finite()
            && self.measure_seconds > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "inspector needs r_i > 0, r_d > r_i, speed > 0, measure_seconds > 0: {self:?}"
            )))
        }
    }

    pub fn check_fits(&self, map: &MapSpec) -> Result<()> {
        if self.r_i >= map.l_x.min(map.l_y) {
            return Err(Error::InvalidParams(format!(
                "inspector diameter {} does not fit a {} x {} map",
                self.r_i, map.l_x, map.l_y
            )));
        }
        Ok(())
    }
}

/// Detector-side parameters: the background estimate the inspector compares
/// against, the threshold level, and the near-field distance clamp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub background: f64,
    pub z: f64,
    pub clamp: f64,
}

impl DetectorModel {
    pub fn validate(&self, inspector: &InspectorSpec) -> Result<()> {
        if !(self.background.is_finite() && self.background >= 0.0) {
            return Err(Error::InvalidParams(format!("background must be >= 0, got {}", self.background)));
        }
        if !(self.z.is_finite() && self.z >= 0.0) {
            return Err(Error::InvalidParams(format!("z must be >= 0, got {}", self.z)));
        }
        if !(self.clamp > 0.0 && self.clamp <= 0.5 * inspector.r_i) {
            return Err(Error::InvalidParams(format!(
                "clamp must lie in (0, r_i/2], got {}",
                self.clamp
            )));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        count_threshold(self.background, self.z)
    }
}

/// A single field measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measurement {
    pub counts: u64,
    pub exceeded: bool,
}

/// `B + z·sqrt(B)`.
pub fn count_threshold(background: f64, z: f64) -> f64 {
    background + z * background.sqrt()
}

/// Mean count at `position`: the map's background plus `s / max(r, r_0)^2`
/// when the source is in line of sight.
pub fn expected_counts(det: &DetectorModel, map: &MapSpec, position: Vec2) -> f64 {
    let b = map.background;
    match map.active_source() {
        Some(src) if map.line_of_sight(position, src.position) => {
            let r = position.distance(src.position).max(det.clamp);
            b + src.strength / (r * r)
        }
        _ => b,
    }
}

/// Draws a Poisson(`mu`) count. Inversion below 30, transformed rejection
/// (PTRS) above.
pub fn sample_counts<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    if !(mu > 0.0) {
        return 0;
    }
    if mu < 30.0 {
        poisson_inversion(rng, mu)
    } else {
        poisson_ptrs(rng, mu)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    let u: f64 = rng.gen();
    let mut p = (-mu).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf {
        k += 1;
        p *= mu / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            // rounding left a sliver of mass unaccounted for
            break;
        }
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    let smu = mu.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_mu = mu.ln();
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mu + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mu + k * log_mu - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Probability that a Poisson(`background`) count lands strictly above
/// `B + z·sqrt(B)`, i.e. the small-step probability in a source-free bin.
pub fn exceedance_probability(background: f64, z: f64) -> f64 {
    if !(background > 0.0) {
        return 0.0;
    }
    let c = count_threshold(background, z);
    let k0 = c.floor() + 1.0;
    let ln_b = background.ln();
    let mut term = (k0 * ln_b - background - ln_gamma(k0 + 1.0)).exp();
    if term == 0.0 {
        return 0.0;
    }
    // z >= 0 puts k0 above the mean, so terms decrease from here on
    let mut sum = 0.0;
    let mut k = k0;
    loop {
        sum += term;
        k += 1.0;
        term *= background / k;
        let ratio = background / (k + 1.0);
        // geometric bound on everything after `term`
        if term / (1.0 - ratio) < 1e-17 * sum {
            sum += term;
            break;
        }
    }
    sum.min(1.0)
}

/// True when `counts > B + z·sqrt(B)`, selecting the small-step branch.
pub fn threshold_exceeded(counts: u64, background: f64, z: f64) -> bool {
    counts as f64 > count_threshold(background, z)
}

/// Samples a measurement at `position`.
pub fn measure<R: Rng + ?Sized>(rng: &mut R, det: &DetectorModel, map: &MapSpec, position: Vec2) -> Measurement {
    let counts = sample_counts(rng, expected_counts(det, map, position));
    Measurement {
        counts,
        exceeded: threshold_exceeded(counts, det.background, det.z),
    }
}
