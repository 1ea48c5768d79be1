//! Physical constants in SI units (CODATA 2018 exact and recommended values).
//!
//! The vacuum permittivity is derived from the fine-structure constant so that
//! `alpha = e^2 / (4 pi eps0 hbar c)` holds to rounding.

use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const FINE_STRUCTURE: f64 = 7.297_352_569_3e-3;
pub const VACUUM_PERMITTIVITY: f64 =
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * FINE_STRUCTURE * PLANCK * SPEED_OF_LIGHT);
/// Electron rest energy in eV.
pub const ELECTRON_REST_ENERGY_EV: f64 = 510_998.950_00;

/// Photon energy in eV for an angular frequency in rad/s.
pub fn omega_to_ev(omega: f64) -> f64 {
    HBAR * omega / ELEMENTARY_CHARGE
}

pub fn ev_to_omega(ev: f64) -> f64 {
    ev * ELEMENTARY_CHARGE / HBAR
}

pub fn wavelength_to_omega(wavelength: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / wavelength
}

pub fn omega_to_wavelength(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega
}

/// Shortest and longest wavelength of the working band (m).
pub const BAND_MIN_WAVELENGTH: f64 = 780e-9;
pub const BAND_MAX_WAVELENGTH: f64 = 2.5e-6;

/// Angular-frequency bounds of the working band, ascending.
pub fn working_band() -> (f64, f64) {
    (
        wavelength_to_omega(BAND_MAX_WAVELENGTH),
        wavelength_to_omega(BAND_MIN_WAVELENGTH),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fine_structure_is_consistent() {
        let alpha = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE
            / (4.0 * PI * VACUUM_PERMITTIVITY * HBAR * SPEED_OF_LIGHT);
        assert!(((alpha - FINE_STRUCTURE) / FINE_STRUCTURE).abs() < 1e-12);
    }

    #[test]
    fn energy_conversion_round_trips() {
        let w = ev_to_omega(0.8);
        assert!((omega_to_ev(w) - 0.8).abs() < 1e-14);
        // 1.55 um is about 0.8 eV
        assert!((omega_to_ev(wavelength_to_omega(1.55e-6)) - 0.79990).abs() < 1e-4);
    }
}
