//! Radial kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum KernelKind {
    Gaussian,
    ThinPlateSpline,
}

/// A radial kernel together with its shape parameter.
///
/// `epsilon` is measured per unit of normalized input distance and is only
/// used by the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1.0
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian(1.0)
    }
}

impl KernelSpec {
    pub fn gaussian(epsilon: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            epsilon,
        }
    }

    pub fn thin_plate() -> Self {
        Self {
            kind: KernelKind::ThinPlateSpline,
            epsilon: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == KernelKind::Gaussian && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Gaussian shape parameter must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Kernel value at distance `r`, without the domain check.
    #[inline]
    pub(crate) fn value(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-(self.epsilon * r).powi(2)).exp(),
            KernelKind::ThinPlateSpline => {
                if r == 0.0 {
                    0.0
                } else {
                    r * r * r.ln()
                }
            }
        }
    }
}

/// Evaluates the kernel at a nonnegative distance.
pub fn kernel_eval(kernel: &KernelSpec, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!(
            "kernel distance must be nonnegative, got {r}"
        )));
    }
    Ok(kernel.value(r))
}
