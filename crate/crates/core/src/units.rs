//! Conversion between laboratory units and the dimensionless system where
//! frequencies are measured in `Omega0` and times in `1 / Omega0`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Inverse seconds.
    Rate,
    /// Seconds.
    Time,
    /// Hertz (cycles per second, not angular).
    Frequency,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalUnits {
    #[serde(rename = "omega0_over_2pi_MHz", alias = "omega0_over_2pi_mhz")]
    pub omega0_over_2pi_mhz: f64,
    /// Rydberg lifetime overriding the species preset.
    #[serde(rename = "gamma_inverse_us", default, skip_serializing_if = "Option::is_none")]
    pub rydberg_lifetime_us: Option<f64>,
}

impl Default for PhysicalUnits {
    fn default() -> Self {
        Self { omega0_over_2pi_mhz: 100.0, rydberg_lifetime_us: None }
    }
}

impl PhysicalUnits {
    pub fn new(omega0_over_2pi_mhz: f64) -> Result<Self> {
        let u = Self { omega0_over_2pi_mhz, rydberg_lifetime_us: None };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega0_over_2pi_mhz.is_finite() && self.omega0_over_2pi_mhz > 0.0) {
            return Err(invalid(format!("omega0_over_2pi_MHz must be positive, got {}", self.omega0_over_2pi_mhz)));
        }
        if let Some(l) = self.rydberg_lifetime_us {
            if !(l.is_finite() && l > 0.0) {
                return Err(invalid(format!("gamma_inverse_us must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Angular reference frequency in rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.omega0_over_2pi_mhz * 1e6
    }

    /// `gamma / Omega0` for a state with the given lifetime in microseconds.
    pub fn decay_rate_from_lifetime_us(&self, lifetime_us: f64) -> Result<f64> {
        self.to_dimensionless(Quantity::Rate, 1.0 / (lifetime_us * 1e-6))
    }

    /// `Omega0 * t` for a time in microseconds.
    pub fn time_from_us(&self, t_us: f64) -> Result<f64> {
        self.to_dimensionless(Quantity::Time, t_us * 1e-6)
    }

    /// Inverse of [`time_from_us`](Self::time_from_us).
    pub fn time_to_us(&self, tau: f64) -> f64 {
        tau / self.omega0() * 1e6
    }

    pub fn to_dimensionless(&self, quantity: Quantity, value: f64) -> Result<f64> {
        self.validate()?;
        if !(value.is_finite() && value > 0.0) {
            return Err(invalid(format!("{quantity:?} must be positive, got {value}")));
        }
        Ok(match quantity {
            Quantity::Rate => value / self.omega0(),
            Quantity::Time => value * self.omega0(),
            Quantity::Frequency => 2.0 * PI * value / self.omega0(),
        })
    }

    /// Reference frequency that stretches a protocol of dimensionless length
    /// `tau_total` to `t_us` microseconds.
    pub fn for_duration(tau_total: f64, t_us: f64) -> Result<Self> {
        if !(tau_total > 0.0 && t_us > 0.0) {
            return Err(invalid("durations must be positive"));
        }
        Self::new(tau_total / (2.0 * PI * t_us))
    }
}
