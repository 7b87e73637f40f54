use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of the scalar input `v`, drawn i.i.d. at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    Uniform { lo: f64, hi: f64 },
}

impl InputDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = InputDistribution::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let InputDistribution::Uniform { lo, hi } = *self;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::model(format!(
                "uniform input needs finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    /// Support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        let InputDistribution::Uniform { lo, hi } = *self;
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        let (lo, hi) = self.support();
        0.5 * (lo + hi)
    }

    /// Raw moment `E[v^j]`.
    pub fn raw_moment(&self, j: u32) -> f64 {
        let (lo, hi) = self.support();
        if j == 0 {
            return 1.0;
        }
        if hi == lo {
            return lo.powi(j as i32);
        }
        let p = j as i32 + 1;
        (hi.powi(p) - lo.powi(p)) / (f64::from(j + 1) * (hi - lo))
    }

    /// `E[v^{e}]` for each requested exponent.
    pub fn raw_moments(&self, exponents: &[u32]) -> Vec<f64> {
        exponents.iter().map(|&e| self.raw_moment(e)).collect()
    }

    pub fn std_dev(&self) -> f64 {
        let (lo, hi) = self.support();
        (hi - lo) / 12f64.sqrt()
    }

    /// `E[max(v, 0)]`.
    pub fn mean_positive_part(&self) -> f64 {
        let (lo, hi) = self.support();
        if hi == lo {
            return lo.max(0.0);
        }
        let (a, b) = (lo.max(0.0), hi.max(0.0));
        (b * b - a * a) / (2.0 * (hi - lo))
    }

    /// `E[max(-v, 0)]`.
    pub fn mean_negative_part(&self) -> f64 {
        let (lo, hi) = self.support();
        if hi == lo {
            return (-lo).max(0.0);
        }
        let (a, b) = (lo.min(0.0), hi.min(0.0));
        (b * b - a * a).abs() / (2.0 * (hi - lo))
    }

    pub fn mean_abs(&self) -> f64 {
        self.mean_positive_part() + self.mean_negative_part()
    }

    /// One draw; always inside `[lo, hi]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.support();
        if hi == lo {
            return lo;
        }
        let u: f64 = rng.random();
        (lo + (hi - lo) * u).clamp(lo, hi)
    }
}
