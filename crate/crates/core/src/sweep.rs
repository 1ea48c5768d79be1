//! Frequency sweeps of the cross-section solver and family tracking.

use serde::{Deserialize, Serialize};

use crate::beam::BeamParams;
use crate::constants::working_band;
use crate::coupling::FamilyInterpolant;
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, WaveguideGeometry};
use crate::material::MaterialLibrary;
use crate::modesolver::{solve_modes, track_families, FamilyDispersion, ModeSolution, SolverOptions, TrackingOptions};
use crate::numeric::linspace;

/// Stored part of each solved field: the top cladding up to `height` above the
/// surface and within `lateral` of either core edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactWindow {
    pub lateral: f64,
    pub height: f64,
}

impl Default for CompactWindow {
    fn default() -> Self {
        Self {
            lateral: 0.6e-6,
            height: 1.2e-6,
        }
    }
}

/// Solve failure at one sweep frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub omega: f64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub omega: Vec<f64>,
    pub families: Vec<FamilyDispersion>,
    pub failures: Vec<SweepFailure>,
}

impl Sweep {
    /// True when `omega` lies in a sweep interval bounded by a failed sample.
    pub fn failed_near(&self, omega: f64) -> bool {
        if self.failures.is_empty() {
            return false;
        }
        let k = self.omega.partition_point(|&w| w < omega);
        let neighbours = [k.checked_sub(1), Some(k)];
        neighbours
            .iter()
            .flatten()
            .filter_map(|&i| self.omega.get(i))
            .any(|w| self.failures.iter().any(|f| f.omega == *w))
    }

    pub fn family(&self, name: &str) -> Result<&FamilyDispersion> {
        self.families
            .iter()
            .find(|f| f.family == name)
            .ok_or_else(|| Error::UnknownFamily(name.to_string()))
    }

    /// Interpolants for every family with at least two samples.
    pub fn interpolants(&self, beam: &BeamParams) -> Result<Vec<FamilyInterpolant>> {
        let mut out = Vec::new();
        for f in &self.families {
            if f.len() < 2 {
                log::debug!("family {} has a single sample and is skipped", f.family);
                continue;
            }
            out.push(FamilyInterpolant::new(f, beam)?);
        }
        Ok(out)
    }
}

/// Uniform sweep grid over the working band.
pub fn sweep_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = working_band();
    linspace(lo, hi, points)
}

/// Solves every frequency with `solve` and tracks families.
///
/// `NoGuidedMode` yields an empty sample; other errors are recorded as failures
/// and the affected families are interpolated across them.
pub fn sweep_families(
    omega: &[f64],
    solve: impl Fn(f64) -> Result<Vec<ModeSolution>> + Sync,
    tracking: &TrackingOptions,
) -> Result<Sweep> {
    use rayon::prelude::*;
    let results: Vec<Result<Vec<ModeSolution>>> = omega.par_iter().map(|&w| solve(w)).collect();
    let mut samples = Vec::with_capacity(omega.len());
    let mut failures = Vec::new();
    for (&w, r) in omega.iter().zip(results) {
        match r {
            Ok(modes) => samples.push(modes),
            Err(Error::NoGuidedMode { .. }) => samples.push(Vec::new()),
            Err(e) => {
                log::warn!("mode solve failed at omega {w:.6e}: {e}");
                failures.push(SweepFailure {
                    omega: w,
                    message: e.to_string(),
                });
                samples.push(Vec::new());
            }
        }
    }
    let families = track_families(omega, samples, tracking)?;
    Ok(Sweep {
        omega: omega.to_vec(),
        families,
        failures,
    })
}

/// Direct (uncached) solver returning compacted fields.
pub fn direct_solver<'a>(
    geometry: &'a WaveguideGeometry,
    materials: &'a MaterialLibrary,
    grid: &'a GridSpec,
    opts: &'a SolverOptions,
    compact: Option<CompactWindow>,
) -> impl Fn(f64) -> Result<Vec<ModeSolution>> + Sync + 'a {
    move |omega| {
        let set = solve_modes(geometry, materials, omega, grid, opts)?;
        Ok(match compact {
            Some(c) => set
                .modes
                .iter()
                .map(|m| m.compact(0.5 * geometry.core_width, c.lateral, c.height))
                .collect(),
            None => set.modes,
        })
    }
}

/// Sweep with the direct solver.
pub fn solve_families(
    geometry: &WaveguideGeometry,
    materials: &MaterialLibrary,
    omega: &[f64],
    grid: &GridSpec,
    opts: &SolverOptions,
    compact: Option<CompactWindow>,
) -> Result<Sweep> {
    geometry.validate()?;
    sweep_families(
        omega,
        direct_solver(geometry, materials, grid, opts, compact),
        &TrackingOptions::default(),
    )
}
