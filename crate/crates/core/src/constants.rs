//! Physical constants and unit conversion.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Constants entering the Hamiltonian and the sensitivity formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Electron gyromagnetic ratio, rad s^-1 T^-1.
    pub gyromagnetic_ratio: f64,
    /// Planck constant, J s.
    pub planck: f64,
    /// Speed of light in vacuum, m/s.
    pub light_speed: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gyromagnetic_ratio: 1.761e11,
            planck: 6.626_070_15e-34,
            light_speed: 299_792_458.0,
        }
    }
}

impl PhysicalConstants {
    /// Zeeman shift of the m_s = ±1 levels in Hz for an axial field in tesla.
    pub fn zeeman_hz(&self, bz_tesla: f64) -> f64 {
        self.gyromagnetic_ratio * bz_tesla / TAU
    }

    /// Photon energy h·ν in joules.
    pub fn photon_energy(&self, frequency_hz: f64) -> f64 {
        self.planck * frequency_hz
    }
}

/// Converts an ordinary frequency (Hz) into an angular frequency (rad/s).
///
/// This is the only place ordinary frequencies are turned into generator
/// units. Splittings, Zeeman shifts and detunings go through here. The Rabi
/// rate and the jump rates are already per-second quantities and do not.
#[inline]
pub fn angular(hz: f64) -> f64 {
    TAU * hz
}
