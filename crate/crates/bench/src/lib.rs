//! Shared fixtures for the benchmarks.

use fewg_core::constants::wavelength_to_omega;
use fewg_core::sweep::{solve_families, CompactWindow};
use fewg_core::{BeamParams, GridSpec, MaterialLibrary, SolverOptions, Sweep, WaveguideGeometry};

/// 800 x 650 nm nitride guide on silica.
pub fn narrow_guide() -> WaveguideGeometry {
    WaveguideGeometry::new(0.8e-6, 0.65e-6).expect("valid geometry")
}

pub fn coarse_grid() -> GridSpec {
    GridSpec {
        spacing: 50e-9,
        ..GridSpec::default()
    }
}

pub fn beam() -> BeamParams {
    BeamParams::new(0.6, 100e-9, 50e-6).expect("valid beam")
}

/// Small solved sweep used by the spectrum-level benchmarks.
pub fn small_sweep() -> Sweep {
    let omega: Vec<f64> = [2.5e-6, 1.8e-6, 1.3e-6, 1.0e-6, 0.78e-6].iter().map(|&l| wavelength_to_omega(l)).collect();
    let opts = SolverOptions {
        n_modes: 4,
        ..SolverOptions::default()
    };
    solve_families(&narrow_guide(), &MaterialLibrary::default(), &omega, &coarse_grid(), &opts, Some(CompactWindow::default()))
        .expect("sweep solves")
}
