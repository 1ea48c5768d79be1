//! Waveguide cross-section, routing, and the discretized permittivity map.
//!
//! Coordinates: `x` is lateral with the core centred on `x = 0`; `y` is vertical
//! with the top surface of the core and substrate at `y = 0`. The core occupies
//! `y in [-thickness, 0]` and is embedded in the substrate; the region `y > 0` is
//! the top cladding (vacuum by default), where the electron travels.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{MaterialLibrary, SILICA, SILICON_NITRIDE, VACUUM};
use crate::numeric::CubicSpline;

/// Longitudinal waveguide coordinate `R(z)` as a function of the electron
/// coordinate `z` (metres).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "RoutingRepr", into = "RoutingRepr")]
pub enum Routing {
    #[default]
    Straight,
    Sampled {
        z: Vec<f64>,
        r: Vec<f64>,
        spline: Box<CubicSpline>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RoutingRepr {
    Straight(String),
    Sampled { z: Vec<f64>, r: Vec<f64> },
}

impl From<RoutingRepr> for Routing {
    fn from(r: RoutingRepr) -> Self {
        match r {
            RoutingRepr::Straight(_) => Routing::Straight,
            // validated again by `Routing::sampled` callers; fall back to straight on bad data
            RoutingRepr::Sampled { z, r } => Routing::sampled(z, r).unwrap_or_default(),
        }
    }
}

impl From<Routing> for RoutingRepr {
    fn from(r: Routing) -> Self {
        match r {
            Routing::Straight => RoutingRepr::Straight("straight".into()),
            Routing::Sampled { z, r, .. } => RoutingRepr::Sampled { z, r },
        }
    }
}

impl PartialEq for Routing {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Routing::Straight, Routing::Straight) => true,
            (Routing::Sampled { z: z1, r: r1, .. }, Routing::Sampled { z: z2, r: r2, .. }) => z1 == z2 && r1 == r2,
            _ => false,
        }
    }
}

impl Routing {
    pub fn sampled(z: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if z.len() < 2 || z.len() != r.len() {
            return Err(Error::InvalidInput("routing needs >= 2 matching samples".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("routing must be strictly increasing".into()));
        }
        let spline = Box::new(CubicSpline::new(&z, &r)?);
        Ok(Routing::Sampled { z, r, spline })
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Routing::Straight => z,
            Routing::Sampled { spline, .. } => spline.eval(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match self {
            Routing::Straight => 1.0,
            Routing::Sampled { spline, .. } => spline.derivative(z),
        }
    }

    pub fn is_straight(&self) -> bool {
        matches!(self, Routing::Straight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideGeometry {
    pub core_width: f64,
    pub core_thickness: f64,
    pub core_material: String,
    pub substrate_material: String,
    #[serde(default = "default_top")]
    pub top_cladding_material: String,
    #[serde(default)]
    pub routing: Routing,
}

fn default_top() -> String {
    VACUUM.into()
}

impl WaveguideGeometry {
    pub fn new(core_width: f64, core_thickness: f64) -> Result<Self> {
        let g = Self {
            core_width,
            core_thickness,
            core_material: SILICON_NITRIDE.into(),
            substrate_material: SILICA.into(),
            top_cladding_material: VACUUM.into(),
            routing: Routing::Straight,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.core_width > 0.0 && self.core_thickness > 0.0) {
            return Err(Error::InvalidInput(format!(
                "core dimensions must be positive (width {}, thickness {})",
                self.core_width, self.core_thickness
            )));
        }
        Ok(())
    }

    /// Stable text identity used for hashing and provenance.
    pub fn identity(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Field vanishes one cell outside the window.
    #[default]
    Zero,
    /// Even reflection: the ghost cell mirrors the edge cell.
    Mirror,
}

/// Discretization request for the cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub spacing: f64,
    /// Minimum window width (m).
    pub width: f64,
    /// Minimum window height (m).
    pub height: f64,
    /// Minimum cladding margin around the core on every side (m).
    pub margin: f64,
    #[serde(default)]
    pub lateral_boundary: Boundary,
    /// Height above the top surface for which longitudinal fields are kept (m).
    pub probe_height: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            spacing: 10e-9,
            width: 6e-6,
            height: 4e-6,
            margin: 2e-6,
            lateral_boundary: Boundary::Zero,
            probe_height: 1.2e-6,
        }
    }
}

impl GridSpec {
    pub fn with_spacing(spacing: f64) -> Self {
        Self {
            spacing,
            ..Self::default()
        }
    }

    /// Laterally uniform window with mirror edges, for slab (1D) checks.
    pub fn slab(spacing: f64, margin: f64) -> Self {
        Self {
            spacing,
            width: 4.0 * spacing,
            height: 0.0,
            margin,
            lateral_boundary: Boundary::Mirror,
            probe_height: margin.min(1.2e-6),
        }
    }
}

/// Uniform cell-centred grid. Cell `(i, j)` has centre
/// `(x_min + (i + 1/2) h, y_min + (j + 1/2) h)`; storage is row-major in `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub lateral_boundary: Boundary,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.h
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// First row whose centre lies above the top surface.
    pub fn first_row_above_surface(&self) -> usize {
        (0..self.ny).find(|&j| self.y(j) > 0.0).unwrap_or(self.ny)
    }
}

/// Piecewise-constant relative permittivity on a [`Grid`].
#[derive(Debug, Clone)]
pub struct EpsMap {
    pub grid: Grid,
    pub eps: Vec<f64>,
    pub omega: f64,
    pub n_core: f64,
    pub n_substrate: f64,
    pub n_top: f64,
    /// Snapped core half-width and thickness actually represented (m).
    pub snapped_half_width: f64,
    pub snapped_thickness: f64,
}

impl EpsMap {
    /// Largest cladding index: guided modes must exceed it.
    pub fn n_cladding(&self) -> f64 {
        self.n_substrate.max(self.n_top)
    }

    pub fn n_max(&self) -> f64 {
        self.n_core.max(self.n_cladding())
    }
}

/// Rasterizes the cross-section at `omega` onto the grid implied by `spec`.
///
/// Material boundaries are snapped to the nearest grid line, so each cell holds
/// exactly one material.
pub fn permittivity_profile(
    geometry: &WaveguideGeometry,
    materials: &MaterialLibrary,
    omega: f64,
    spec: &GridSpec,
) -> Result<Arc<EpsMap>> {
    geometry.validate()?;
    let h = spec.spacing;
    if !(h > 0.0) {
        return Err(Error::InvalidInput("grid spacing must be positive".into()));
    }
    let n_core = materials.get(&geometry.core_material)?.refractive_index(omega)?;
    let n_sub = materials.get(&geometry.substrate_material)?.refractive_index(omega)?;
    let n_top = materials
        .get(&geometry.top_cladding_material)?
        .refractive_index(omega)?;

    let width = match spec.lateral_boundary {
        Boundary::Zero => spec.width.max(geometry.core_width + 2.0 * spec.margin),
        Boundary::Mirror => spec.width,
    };
    let nx_half = ((0.5 * width / h) - 1e-9).ceil().max(1.0) as usize;
    let nx = 2 * nx_half;
    let core_cells_y = (geometry.core_thickness / h).round() as usize;
    let vertical_pad = (0.5 * (spec.height - geometry.core_thickness)).max(spec.margin);
    let pad_cells = ((vertical_pad / h) - 1e-9).ceil() as usize;
    let ny = core_cells_y + 2 * pad_cells;
    let core_half_cells = (0.5 * geometry.core_width / h).round() as usize;
    if core_cells_y == 0 || core_half_cells == 0 {
        return Err(Error::InvalidInput(format!(
            "core {}x{} m is not resolved by spacing {h} m",
            geometry.core_width, geometry.core_thickness
        )));
    }

    let grid = Grid {
        nx,
        ny,
        h,
        x_min: -(nx_half as f64) * h,
        y_min: -((core_cells_y + pad_cells) as f64) * h,
        lateral_boundary: spec.lateral_boundary,
    };
    let (e_core, e_sub, e_top) = (n_core * n_core, n_sub * n_sub, n_top * n_top);
    let mut eps = vec![0.0; grid.len()];
    for j in 0..ny {
        // rows counted from the bottom: [0, pad) substrate, [pad, pad+core) core layer, rest top
        let in_core_layer = j >= pad_cells && j < pad_cells + core_cells_y;
        for i in 0..nx {
            let value = if j >= pad_cells + core_cells_y {
                e_top
            } else if in_core_layer {
                let di = if i < nx_half { nx_half - 1 - i } else { i - nx_half };
                if di < core_half_cells {
                    e_core
                } else {
                    e_sub
                }
            } else {
                e_sub
            };
            eps[grid.index(i, j)] = value;
        }
    }
    Ok(Arc::new(EpsMap {
        grid,
        eps,
        omega,
        n_core,
        n_substrate: n_sub,
        n_top,
        snapped_half_width: core_half_cells as f64 * h,
        snapped_thickness: core_cells_y as f64 * h,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::wavelength_to_omega;
    use crate::material::MaterialModel;

    fn omega() -> f64 {
        wavelength_to_omega(1.55e-6)
    }

    #[test]
    fn homogeneous_geometry_gives_uniform_map() {
        let mut g = WaveguideGeometry::new(800e-9, 650e-9).unwrap();
        g.core_material = SILICA.into();
        g.top_cladding_material = SILICA.into();
        let map = permittivity_profile(&g, &MaterialLibrary::default(), omega(), &GridSpec::with_spacing(50e-9)).unwrap();
        let first = map.eps[0];
        assert!(map.eps.iter().all(|&e| e == first));
    }

    #[test]
    fn three_regions_with_ordered_permittivity() {
        let g = WaveguideGeometry::new(800e-9, 650e-9).unwrap();
        let map = permittivity_profile(&g, &MaterialLibrary::default(), omega(), &GridSpec::with_spacing(50e-9)).unwrap();
        let mut distinct: Vec<f64> = map.eps.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
        assert!(distinct[2] > distinct[1] && distinct[1] > distinct[0] && distinct[0] == 1.0);
        let grid = &map.grid;
        // margins of at least 2 um around the core
        assert!(-grid.x_min >= 0.4e-6 + 2e-6 - 1e-12);
        assert!(grid.y(grid.ny - 1) > 2e-6 - grid.h);
        assert!(-grid.y_min >= 0.65e-6 + 2e-6 - 1e-12);
    }

    #[test]
    fn refinement_changes_area_by_at_most_one_row_and_column() {
        let g = WaveguideGeometry::new(830e-9, 655e-9).unwrap();
        let lib = MaterialLibrary::default();
        let area = |h: f64| {
            let m = permittivity_profile(&g, &lib, omega(), &GridSpec::with_spacing(h)).unwrap();
            let ec = m.n_core * m.n_core;
            m.eps.iter().filter(|&&e| e == ec).count() as f64 * h * h
        };
        for h in [40e-9, 20e-9] {
            let coarse = area(h);
            let fine = area(h / 2.0);
            // one coarse row plus one coarse column
            let bound = h * (g.core_width + g.core_thickness);
            assert!((coarse - fine).abs() <= bound, "h={h}: {coarse} vs {fine}");
        }
    }

    #[test]
    fn unknown_or_out_of_band_material_propagates() {
        let g = WaveguideGeometry::new(800e-9, 650e-9).unwrap();
        let err = permittivity_profile(&g, &MaterialLibrary::default(), wavelength_to_omega(3e-6), &GridSpec::default()).unwrap_err();
        assert!(matches!(err, Error::OutOfBand { .. }));
        let mut lib = MaterialLibrary::default();
        lib.insert(MaterialModel::constant("glass", 1.5).unwrap());
        let mut g2 = g.clone();
        g2.core_material = "nope".into();
        assert!(matches!(
            permittivity_profile(&g2, &lib, omega(), &GridSpec::default()),
            Err(Error::UnknownMaterial(_))
        ));
    }

    #[test]
    fn routing_spline_tracks_samples() {
        let z: Vec<f64> = (0..=10).map(|i| i as f64 * 1e-6).collect();
        let r: Vec<f64> = z.iter().map(|v| 1.5 * v).collect();
        let route = Routing::sampled(z, r).unwrap();
        assert!((route.eval(3.3e-6) - 4.95e-6).abs() < 1e-15);
        assert!((route.derivative(7.1e-6) - 1.5).abs() < 1e-9);
        assert!(Routing::sampled(vec![0.0, 1.0], vec![1.0, 0.5]).is_err());
    }
}
