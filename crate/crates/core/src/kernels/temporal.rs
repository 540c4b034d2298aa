use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary (and Brownian) kernels over time used in separable products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TemporalKernel {
    /// `v · exp(−(t−s)² / 2ℓ²)`
    Rbf { variance: f64, lengthscale: f64 },
    /// `v · exp(−|t−s| / ℓ)`
    Exponential { variance: f64, lengthscale: f64 },
    /// `v · min(t, s)`, defined for `t, s ≥ 0`
    Brownian { variance: f64 },
    /// `v · cos(ω (t−s))`
    Cosine { variance: f64, frequency: f64 },
}

impl TemporalKernel {
    pub fn variance(&self) -> f64 {
        match *self {
            TemporalKernel::Rbf { variance, .. }
            | TemporalKernel::Exponential { variance, .. }
            | TemporalKernel::Brownian { variance }
            | TemporalKernel::Cosine { variance, .. } => variance,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TemporalKernel::Rbf { .. } => "rbf",
            TemporalKernel::Exponential { .. } => "exponential",
            TemporalKernel::Brownian { .. } => "brownian",
            TemporalKernel::Cosine { .. } => "cosine",
        }
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        temporal_kernel(self, t, s)
    }

    pub(crate) fn eval_unchecked(&self, t: f64, s: f64) -> f64 {
        match *self {
            TemporalKernel::Rbf {
                variance,
                lengthscale,
            } => {
                let d = (t - s) / lengthscale;
                variance * (-0.5 * d * d).exp()
            }
            TemporalKernel::Exponential {
                variance,
                lengthscale,
            } => variance * (-(t - s).abs() / lengthscale).exp(),
            TemporalKernel::Brownian { variance } => variance * t.min(s),
            TemporalKernel::Cosine {
                variance,
                frequency,
            } => variance * (frequency * (t - s)).cos(),
        }
    }

    pub(crate) fn requires_nonnegative_time(&self) -> bool {
        matches!(self, TemporalKernel::Brownian { .. })
    }
}

pub fn temporal_kernel(kernel: &TemporalKernel, t: f64, s: f64) -> Result<f64> {
    if kernel.requires_nonnegative_time() && (t < 0.0 || s < 0.0) {
        return Err(Error::NegativeTime(t.min(s)));
    }
    Ok(kernel.eval_unchecked(t, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn examples() {
        let rbf = TemporalKernel::Rbf {
            variance: 2.5,
            lengthscale: 0.3,
        };
        assert_eq!(rbf.eval(1.7, 1.7).unwrap(), 2.5);
        let bm = TemporalKernel::Brownian { variance: 1.0 };
        assert_eq!(bm.eval(2.0, 3.0).unwrap(), 2.0);
        assert!(matches!(bm.eval(-1.0, 3.0), Err(Error::NegativeTime(_))));
        let cos = TemporalKernel::Cosine {
            variance: 1.0,
            frequency: PI,
        };
        assert_close!(cos.eval(1.5, 0.5).unwrap(), -1.0, 1e-15);
        let exp = TemporalKernel::Exponential {
            variance: 1.0,
            lengthscale: 2.0,
        };
        assert_close!(exp.eval(0.0, 2.0).unwrap(), (-1.0f64).exp(), 1e-15);
        assert_close!(rbf.eval(0.0, 0.3).unwrap(), 2.5 * (-0.5f64).exp(), 1e-15);
    }
}
