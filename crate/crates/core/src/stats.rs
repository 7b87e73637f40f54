use serde::{Deserialize, Serialize};

/// Normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.96;

/// Sample mean with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            half_width_95: 0.0,
            n: 0,
        }
    }

    pub fn upper_95(&self) -> f64 {
        self.mean + self.half_width_95
    }

    pub(crate) fn accumulator() -> Welford {
        Welford::default()
    }
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn finish(&self) -> MeanEstimate {
        let var = if self.n > 1 {
            self.m2 / (self.n - 1) as f64
        } else {
            0.0
        };
        MeanEstimate {
            mean: self.mean,
            half_width_95: if self.n > 0 {
                Z95 * (var / self.n as f64).sqrt()
            } else {
                0.0
            },
            n: self.n,
        }
    }
}

/// Wilson score interval for `hits` successes out of `n` at quantile `z`.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
