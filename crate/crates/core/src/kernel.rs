//! Robust loss kernels for iteratively re-weighted least squares.
//!
//! Kernels act on whitened (unit-variance) scalar residuals. `rho` is the
//! loss and `weight` is `ψ(r) = ρ'(r) / r`, the per-residual IRLS weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classical 95%-efficiency Huber threshold.
pub const DEFAULT_HUBER_DELTA: f64 = 1.345;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RobustKernel {
    #[default]
    L2,
    Huber {
        delta: f64,
    },
}

impl RobustKernel {
    pub fn huber(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!(
                "Huber threshold must be positive, got {delta}"
            )));
        }
        Ok(RobustKernel::Huber { delta })
    }

    pub fn default_huber() -> Self {
        RobustKernel::Huber {
            delta: DEFAULT_HUBER_DELTA,
        }
    }

    pub fn is_l2(&self) -> bool {
        matches!(self, RobustKernel::L2)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RobustKernel::L2 => Ok(()),
            RobustKernel::Huber { delta } => Self::huber(delta).map(|_| ()),
        }
    }

    /// Loss `ρ(r)`.
    pub fn rho(&self, r: f64) -> Result<f64> {
        check_finite(r)?;
        Ok(match *self {
            RobustKernel::L2 => 0.5 * r * r,
            RobustKernel::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    0.5 * r * r
                } else {
                    delta * a - 0.5 * delta * delta
                }
            }
        })
    }

    /// IRLS weight `ψ(r)`, in `(0, 1]` with `ψ(0) = 1`.
    pub fn weight(&self, r: f64) -> Result<f64> {
        check_finite(r)?;
        Ok(match *self {
            RobustKernel::L2 => 1.0,
            RobustKernel::Huber { delta } => {
                let a = r.abs();
                if a <= delta {
                    1.0
                } else {
                    delta / a
                }
            }
        })
    }
}

fn check_finite(r: f64) -> Result<()> {
    if r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel residual {r} is not finite")))
    }
}
