//! Utility models: strictly increasing, strictly concave, differentiable on
//! the interior of their domain, with closed-form marginal utility and its
//! inverse.
//!
//! Conventions for total evaluation on the extended reals:
//! * `u(x)` below the domain is -inf (an infeasible wealth level can never
//!   win a maximization);
//! * `du(x)` at or below the domain edge is +inf when the model's marginal
//!   utility blows up there (power, log);
//! * `inv_du(y)` is the inverse of `du` on (0, inf), with `inv_du(0+) ->`
//!   domain supremum image (+inf) and `inv_du(inf)` = domain infimum.

use crate::error::{invalid, numerical, Result};
use crate::float::{abs, exp, ln, max, powf};

#[derive(Clone, Debug, PartialEq)]
pub enum UtilityModel {
    /// u(x) = -exp(-alpha x) on all of R.
    Exponential { alpha: f64 },
    /// u(x) = (x + shift)^gamma / gamma on [-shift, inf), 0 < gamma < 1.
    Power { gamma: f64, shift: f64 },
    /// u(x) = ln(x + shift) on (-shift, inf).
    Log { shift: f64 },
}

impl UtilityModel {
    pub fn exponential(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid!("exponential utility needs alpha > 0, got {alpha}"));
        }
        let u = UtilityModel::Exponential { alpha };
        u.self_check()?;
        Ok(u)
    }

    pub fn power(gamma: f64, shift: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid!("power utility needs gamma in (0,1), got {gamma}"));
        }
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(invalid!("power utility needs finite shift >= 0, got {shift}"));
        }
        let u = UtilityModel::Power { gamma, shift };
        u.self_check()?;
        Ok(u)
    }

    pub fn log(shift: f64) -> Result<Self> {
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(invalid!("log utility needs finite shift >= 0, got {shift}"));
        }
        let u = UtilityModel::Log { shift };
        u.self_check()?;
        Ok(u)
    }

    /// Roundtrip check inv_du(du(z)) = z on interior probes; a failed check
    /// means the closed forms disagree and all downstream math is suspect.
    fn self_check(&self) -> Result<()> {
        let lo = self.domain_low();
        let probes = [0.01, 0.1, 1.0, 10.0, 100.0];
        for &p in &probes {
            let z = if lo.is_finite() { lo + p } else { ln(p) };
            let back = self.inv_du(self.du(z));
            if abs(back - z) > 1e-10 * max(1.0, abs(z)) {
                return Err(numerical!(
                    "marginal-utility inverse roundtrip failed at {z}: got {back}"
                ));
            }
        }
        Ok(())
    }

    /// Infimum of the domain: -inf for exponential, -shift otherwise.
    pub fn domain_low(&self) -> f64 {
        match self {
            UtilityModel::Exponential { .. } => f64::NEG_INFINITY,
            UtilityModel::Power { shift, .. } | UtilityModel::Log { shift } => -shift,
        }
    }

    /// Whether the domain edge itself is excluded (log diverges there).
    pub fn domain_low_open(&self) -> bool {
        matches!(self, UtilityModel::Log { .. })
    }

    /// Supremum of u over its domain: 0 for exponential, +inf otherwise.
    pub fn sup(&self) -> f64 {
        match self {
            UtilityModel::Exponential { .. } => 0.0,
            _ => f64::INFINITY,
        }
    }

    pub fn u(&self, x: f64) -> f64 {
        match *self {
            UtilityModel::Exponential { alpha } => -exp(-alpha * x),
            UtilityModel::Power { gamma, shift } => {
                let y = x + shift;
                if y < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    powf(y, gamma) / gamma
                }
            }
            UtilityModel::Log { shift } => {
                let y = x + shift;
                if y <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    ln(y)
                }
            }
        }
    }

    /// Marginal utility u'(x).
    pub fn du(&self, x: f64) -> f64 {
        match *self {
            UtilityModel::Exponential { alpha } => alpha * exp(-alpha * x),
            UtilityModel::Power { gamma, shift } => {
                let y = x + shift;
                if y < 0.0 {
                    f64::INFINITY
                } else {
                    powf(y, gamma - 1.0)
                }
            }
            UtilityModel::Log { shift } => {
                let y = x + shift;
                if y <= 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / y
                }
            }
        }
    }

    /// Second derivative u''(x) on the domain interior.
    pub fn d2u(&self, x: f64) -> f64 {
        match *self {
            UtilityModel::Exponential { alpha } => -alpha * alpha * exp(-alpha * x),
            UtilityModel::Power { gamma, shift } => {
                (gamma - 1.0) * powf(x + shift, gamma - 2.0)
            }
            UtilityModel::Log { shift } => {
                let y = x + shift;
                -1.0 / (y * y)
            }
        }
    }

    /// Inverse marginal utility (u')^{-1}(y) for y in (0, inf).
    pub fn inv_du(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::INFINITY;
        }
        match *self {
            UtilityModel::Exponential { alpha } => (ln(alpha) - ln(y)) / alpha,
            UtilityModel::Power { gamma, shift } => powf(y, 1.0 / (gamma - 1.0)) - shift,
            UtilityModel::Log { shift } => 1.0 / y - shift,
        }
    }
}

impl core::fmt::Display for UtilityModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            UtilityModel::Exponential { alpha } => write!(f, "exponential(alpha={alpha})"),
            UtilityModel::Power { gamma, shift } => write!(f, "power(gamma={gamma}, shift={shift})"),
            UtilityModel::Log { shift } => write!(f, "log(shift={shift})"),
        }
    }
}
