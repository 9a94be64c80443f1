use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::exceedance_probability;

/// Source-free law of the normalized step `s' = ds / c_U`: a mixture of
/// Uniform[0, 1] with weight `1 - delta` and Uniform[0, c_L'] with weight
/// `delta`, where `delta` is the small-step probability of a background-only
/// measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCdf {
    pub c_l_prime: f64,
    pub delta: f64,
}

impl ReferenceCdf {
    pub fn new(c_l_prime: f64, delta: f64) -> Result<Self> {
        if !((0.0..1.0).contains(&c_l_prime) && (0.0..=1.0).contains(&delta)) {
            return Err(Error::InvalidParams(format!(
                "reference needs c_L' in [0, 1) and delta in [0, 1], got {c_l_prime}, {delta}"
            )));
        }
        Ok(Self { c_l_prime, delta })
    }

    /// Reference for step bounds `c_l < c_u` and threshold `B + z·sqrt(B)`.
    pub fn from_params(c_l: f64, c_u: f64, background: f64, z: f64) -> Result<Self> {
        if !(c_u > 0.0 && c_l >= 0.0 && c_l < c_u) {
            return Err(Error::InvalidParams(format!("need 0 <= c_L < c_U, got {c_l}, {c_u}")));
        }
        Self::new(c_l / c_u, exceedance_probability(background, z))
    }

    /// `F(s') = (1 - delta)·s' + delta·min(s'/c_L', 1)`.
    pub fn eval(&self, s_prime: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s_prime) {
            return Err(Error::Domain(s_prime));
        }
        Ok(self.cdf(s_prime))
    }

    /// Total version of [`eval`](Self::eval), clamping outside `[0, 1]`.
    pub fn cdf(&self, s_prime: f64) -> f64 {
        if s_prime < 0.0 {
            return 0.0;
        }
        if s_prime >= 1.0 {
            return 1.0;
        }
        let small = if self.c_l_prime > 0.0 {
            (s_prime / self.c_l_prime).min(1.0)
        } else {
            1.0
        };
        (1.0 - self.delta) * s_prime + self.delta * small
    }

    /// Piecewise-constant density on `[0, 1]`.
    pub fn density(&self, s_prime: f64) -> f64 {
        if !(0.0..=1.0).contains(&s_prime) {
            return 0.0;
        }
        let c = self.c_l_prime;
        if s_prime <= c && c > 0.0 {
            (c + self.delta - c * self.delta) / c
        } else {
            1.0 - self.delta
        }
    }
}
