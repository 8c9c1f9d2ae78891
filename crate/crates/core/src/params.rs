//! The global trade-off controller and the operator schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base coefficients scaling each alpha-derived parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConstants {
    pub c_heat: f64,
    pub c_id: f64,
    pub c_s: f64,
    pub c_b: f64,
}

impl Default for BaseConstants {
    fn default() -> Self {
        BaseConstants {
            c_heat: 2.0,
            c_id: 1.0,
            c_s: 0.1,
            c_b: 0.1,
        }
    }
}

impl BaseConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("c_heat", self.c_heat),
            ("c_id", self.c_id),
            ("c_s", self.c_s),
            ("c_b", self.c_b),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::NegativeConstant { name, value });
            }
        }
        Ok(())
    }
}

/// Control state derived from a single knob `alpha`.
///
/// The derived fields are never set directly; they are recomputed from
/// `alpha` and the base constants on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlParams {
    pub alpha: f64,
    pub constants: BaseConstants,
    /// Diffusion strength, `c_heat * alpha`.
    pub nu: f64,
    /// Identity-injection blend weight, `min(c_id * alpha, 1)`.
    pub lambda_id: f64,
    /// Subject noise intensity, `c_s * (1 - alpha)`.
    pub sigma_s: f64,
    /// Background noise intensity, `c_b * alpha`.
    pub sigma_b: f64,
}

/// Maps alpha to the four derived parameters.
///
/// `lambda_id` is clamped to 1 so the identity blend stays convex even
/// when `c_id * alpha` exceeds it.
pub fn derive_params(alpha: f64, constants: BaseConstants) -> Result<ControlParams> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    constants.validate()?;
    Ok(ControlParams {
        alpha,
        constants,
        nu: constants.c_heat * alpha,
        lambda_id: (constants.c_id * alpha).min(1.0),
        sigma_s: constants.c_s * (1.0 - alpha),
        sigma_b: constants.c_b * alpha,
    })
}

impl ControlParams {
    /// True when either region's noise intensity is nonzero.
    pub fn noise_enabled(&self) -> bool {
        self.sigma_s > 0.0 || self.sigma_b > 0.0
    }
}

/// Virtual-time loop settings for the physics operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSchedule {
    pub n_iters: usize,
    pub dtau: f64,
}

impl Default for OperatorSchedule {
    fn default() -> Self {
        OperatorSchedule {
            n_iters: 10,
            dtau: 0.1,
        }
    }
}

impl OperatorSchedule {
    pub fn new(n_iters: usize, dtau: f64) -> Result<Self> {
        let schedule = OperatorSchedule { n_iters, dtau };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iters < 1 {
            return Err(Error::BadSchedule("n_iters must be >= 1"));
        }
        if !self.dtau.is_finite() || self.dtau <= 0.0 {
            return Err(Error::BadSchedule("dtau must be positive and finite"));
        }
        Ok(())
    }
}
