//! Run configuration: one TOML file per run, human units at the boundary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fewg_core::beam::kinetic_energy_to_beta;
use fewg_core::constants::wavelength_to_omega;
use fewg_core::ideality::DEFAULT_TARGET;
use fewg_core::numeric::linspace;
use fewg_core::{BackgroundModel, BeamParams, GridSpec, IdealityOptions, MaterialLibrary, Routing, SolverOptions, WaveguideGeometry, Window};

/// Invalid configuration; `field` is the dotted path of the offending entry.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error in `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Modes,
    Map,
    Ideality,
    Tradeoff,
    Waveform,
    Resonator,
    Spectrum,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Modes => "modes",
            Task::Map => "map",
            Task::Ideality => "ideality",
            Task::Tradeoff => "tradeoff",
            Task::Waveform => "waveform",
            Task::Resonator => "resonator",
            Task::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    /// Extra material files; built-in vacuum, sio2 and si3n4 are always present.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub materials: Vec<PathBuf>,
    pub geometry: GeometrySpec,
    pub beam: BeamSpec,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub ideality: IdealitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waveform: Option<WaveformSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonator: Option<ResonatorSpec>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub core_width_um: f64,
    pub core_thickness_um: f64,
    #[serde(default = "default_core")]
    pub core_material: String,
    #[serde(default = "default_substrate")]
    pub substrate_material: String,
    #[serde(default = "default_top")]
    pub top_cladding_material: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingSpec>,
}

fn default_core() -> String {
    "si3n4".into()
}
fn default_substrate() -> String {
    "sio2".into()
}
fn default_top() -> String {
    "vacuum".into()
}

/// Sampled `R(z)`, both in micrometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingSpec {
    pub z_um: Vec<f64>,
    pub r_um: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_kev: Option<f64>,
    pub gap_nm: f64,
    pub length_um: f64,
    #[serde(default)]
    pub window: Window,
    /// Lateral offset from the core centre.
    #[serde(default)]
    pub x_offset_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Electron velocities for maps and ideality curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Range>,
    /// Mode-solve samples, uniform in frequency between the wavelength bounds.
    #[serde(default = "default_wavelengths")]
    pub wavelength_nm: Range,
    /// Output frequency grid of maps and spectra.
    #[serde(default = "default_omega_points")]
    pub omega_points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaps_nm: Vec<f64>,
}

fn default_wavelengths() -> Range {
    Range {
        min: 780.0,
        max: 2500.0,
        steps: 24,
    }
}
fn default_omega_points() -> usize {
    600
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            beta: None,
            wavelength_nm: default_wavelengths(),
            omega_points: default_omega_points(),
            gaps_nm: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_spacing")]
    pub spacing_nm: f64,
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    #[serde(default = "default_window_width")]
    pub window_width_um: f64,
    #[serde(default = "default_window_height")]
    pub window_height_um: f64,
    #[serde(default = "default_margin")]
    pub margin_um: f64,
}

fn default_spacing() -> f64 {
    20.0
}
fn default_n_modes() -> usize {
    10
}
fn default_window_width() -> f64 {
    6.0
}
fn default_window_height() -> f64 {
    4.0
}
fn default_margin() -> f64 {
    2.0
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            spacing_nm: default_spacing(),
            n_modes: default_n_modes(),
            window_width_um: default_window_width(),
            window_height_um: default_window_height(),
            margin_um: default_margin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundChoice {
    None,
    BulkFrankTamm,
    PlanarInterface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealitySpec {
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_zlp")]
    pub zlp_fwhm_ev: f64,
    #[serde(default = "default_window_fwhm")]
    pub window_fwhm: f64,
    #[serde(default = "default_background")]
    pub background: BackgroundChoice,
    #[serde(default = "default_refine")]
    pub refine: usize,
}

fn default_target() -> String {
    DEFAULT_TARGET.into()
}
fn default_zlp() -> f64 {
    0.5
}
fn default_window_fwhm() -> f64 {
    1.0
}
fn default_background() -> BackgroundChoice {
    BackgroundChoice::PlanarInterface
}
fn default_refine() -> usize {
    4
}

impl Default for IdealitySpec {
    fn default() -> Self {
        Self {
            target: default_target(),
            zlp_fwhm_ev: default_zlp(),
            window_fwhm: default_window_fwhm(),
            background: default_background(),
            refine: default_refine(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvelopeShape {
    /// `|u_z|` along the trajectory of the solved target mode, shaped by the window.
    Solved,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSpec {
    #[serde(default = "default_envelope")]
    pub envelope: EnvelopeShape,
    #[serde(default = "default_envelope_points")]
    pub envelope_points: usize,
    /// Overrides the dispersion from the solved curve (seconds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2_s: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_threshold")]
    pub delta_threshold: f64,
}

fn default_envelope() -> EnvelopeShape {
    EnvelopeShape::Solved
}
fn default_envelope_points() -> usize {
    1024
}
fn default_points() -> usize {
    2048
}
fn default_threshold() -> f64 {
    0.05
}

impl Default for WaveformSpec {
    fn default() -> Self {
        Self {
            envelope: default_envelope(),
            envelope_points: default_envelope_points(),
            beta2_s: None,
            points: default_points(),
            delta_threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSpec {
    pub fsr_ghz: f64,
    pub finesse: f64,
    /// A resonance position in eV; defaults to the target's phase-matched frequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_ev: Option<f64>,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_max_points() -> usize {
    4_000_000
}

fn check(cond: bool, field: &str, message: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::new(field, message))
    }
}

fn positive(x: f64, field: &str) -> Result<(), ConfigError> {
    check(x.is_finite() && x > 0.0, field, format!("must be positive, got {x}"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| locate_field(text, s.start)).unwrap_or_else(|| "<root>".into());
            ConfigError::new(&field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("--config", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // material paths are relative to the config file
        if let Some(dir) = path.parent() {
            for m in &mut cfg.materials {
                if m.is_relative() {
                    *m = dir.join(&*m);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Compact single-line JSON used in output headers.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::new("<metadata>", e.to_string()))
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (i, m) in self.materials.iter().enumerate() {
            check(m.is_file(), &format!("materials[{i}]"), format!("file {} does not exist", m.display()))?;
        }
        let lib = self.material_library()?;
        let g = &self.geometry;
        positive(g.core_width_um, "geometry.core_width_um")?;
        positive(g.core_thickness_um, "geometry.core_thickness_um")?;
        for (field, id) in [
            ("geometry.core_material", &g.core_material),
            ("geometry.substrate_material", &g.substrate_material),
            ("geometry.top_cladding_material", &g.top_cladding_material),
        ] {
            lib.get(id).map_err(|e| ConfigError::new(field, e.to_string()))?;
        }
        self.geometry()?;
        let b = &self.beam;
        match (b.beta, b.energy_kev) {
            (Some(_), Some(_)) => return Err(ConfigError::new("beam", "give either beta or energy_kev, not both")),
            (None, None) => return Err(ConfigError::new("beam", "one of beta or energy_kev is required")),
            _ => {}
        }
        self.beam()?;
        let gr = &self.grids;
        check(gr.wavelength_nm.steps >= 2, "grids.wavelength_nm.steps", "need at least 2 wavelengths")?;
        check(
            gr.wavelength_nm.min >= 780.0 && gr.wavelength_nm.max <= 2500.0 && gr.wavelength_nm.min < gr.wavelength_nm.max,
            "grids.wavelength_nm",
            "range must be ascending inside [780, 2500] nm",
        )?;
        check(gr.omega_points >= 16, "grids.omega_points", "need at least 16 points")?;
        if let Some(r) = gr.beta {
            check(r.steps >= 1, "grids.beta.steps", "beta grid is empty")?;
            check(r.min > 0.0 && r.max < 1.0 && r.min <= r.max, "grids.beta", "range must be ascending inside (0, 1)")?;
        }
        if matches!(self.task, Task::Map | Task::Ideality) {
            check(gr.beta.is_some(), "grids.beta", format!("task `{}` needs a beta grid", self.task.name()))?;
        }
        if self.task == Task::Tradeoff {
            check(!gr.gaps_nm.is_empty(), "grids.gaps_nm", "gap list is empty")?;
        }
        for (i, &gap) in gr.gaps_nm.iter().enumerate() {
            check((50.0..=1000.0).contains(&gap), &format!("grids.gaps_nm[{i}]"), "gap must lie in [50, 1000] nm")?;
        }
        let s = &self.solver;
        positive(s.spacing_nm, "solver.spacing_nm")?;
        check(s.n_modes >= 1, "solver.n_modes", "need at least one mode")?;
        positive(s.window_width_um, "solver.window_width_um")?;
        positive(s.window_height_um, "solver.window_height_um")?;
        check(s.margin_um >= 2.0, "solver.margin_um", "cladding margin must be at least 2 um")?;
        let id = &self.ideality;
        positive(id.zlp_fwhm_ev, "ideality.zlp_fwhm_ev")?;
        positive(id.window_fwhm, "ideality.window_fwhm")?;
        check(id.refine >= 1, "ideality.refine", "refinement factor must be >= 1")?;
        if let Some(w) = &self.waveform {
            check(w.envelope_points >= 512, "waveform.envelope_points", "need at least 512 samples")?;
            check(w.points >= 16, "waveform.points", "need at least 16 points")?;
            positive(w.delta_threshold, "waveform.delta_threshold")?;
        }
        if self.task == Task::Resonator {
            let r = self.resonator.as_ref().ok_or_else(|| ConfigError::new("resonator", "task `resonator` needs a [resonator] table"))?;
            positive(r.fsr_ghz, "resonator.fsr_ghz")?;
            check(r.finesse > 1.0, "resonator.finesse", "finesse must exceed 1")?;
        }
        Ok(())
    }

    pub fn material_library(&self) -> Result<MaterialLibrary, ConfigError> {
        let mut lib = MaterialLibrary::default();
        for (i, m) in self.materials.iter().enumerate() {
            lib.load_file(m).map_err(|e| ConfigError::new(&format!("materials[{i}]"), e.to_string()))?;
        }
        Ok(lib)
    }

    pub fn geometry(&self) -> Result<WaveguideGeometry, ConfigError> {
        let g = &self.geometry;
        let routing = match &g.routing {
            None => Routing::Straight,
            Some(r) => Routing::sampled(r.z_um.iter().map(|z| z * 1e-6).collect(), r.r_um.iter().map(|x| x * 1e-6).collect())
                .map_err(|e| ConfigError::new("geometry.routing", e.to_string()))?,
        };
        let geo = WaveguideGeometry {
            core_width: g.core_width_um * 1e-6,
            core_thickness: g.core_thickness_um * 1e-6,
            core_material: g.core_material.clone(),
            substrate_material: g.substrate_material.clone(),
            top_cladding_material: g.top_cladding_material.clone(),
            routing,
        };
        geo.validate().map_err(|e| ConfigError::new("geometry", e.to_string()))?;
        Ok(geo)
    }

    pub fn beta(&self) -> Result<f64, ConfigError> {
        match (self.beam.beta, self.beam.energy_kev) {
            (Some(b), _) => Ok(b),
            (None, Some(e)) => kinetic_energy_to_beta(e * 1e3).map_err(|e| ConfigError::new("beam.energy_kev", e.to_string())),
            (None, None) => Err(ConfigError::new("beam", "one of beta or energy_kev is required")),
        }
    }

    pub fn beam(&self) -> Result<BeamParams, ConfigError> {
        let b = &self.beam;
        let mut beam = BeamParams::new(self.beta()?, b.gap_nm * 1e-9, b.length_um * 1e-6).map_err(|e| ConfigError::new("beam", e.to_string()))?;
        beam.window = b.window;
        beam.x_offset = b.x_offset_nm * 1e-9;
        Ok(beam)
    }

    pub fn grid_spec(&self) -> GridSpec {
        let s = &self.solver;
        GridSpec {
            spacing: s.spacing_nm * 1e-9,
            width: s.window_width_um * 1e-6,
            height: s.window_height_um * 1e-6,
            margin: s.margin_um * 1e-6,
            ..GridSpec::default()
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            n_modes: self.solver.n_modes,
            ..SolverOptions::default()
        }
    }

    /// Sweep frequencies, uniform in omega, ascending.
    pub fn sweep_omega(&self) -> Vec<f64> {
        let r = &self.grids.wavelength_nm;
        linspace(wavelength_to_omega(r.max * 1e-9), wavelength_to_omega(r.min * 1e-9), r.steps)
    }

    pub fn beta_grid(&self) -> Vec<f64> {
        self.grids.beta.map(|r| r.values()).unwrap_or_default()
    }

    pub fn ideality_options(&self) -> IdealityOptions {
        IdealityOptions {
            zlp_fwhm_ev: self.ideality.zlp_fwhm_ev,
            window_fwhm: self.ideality.window_fwhm,
            background: match self.ideality.background {
                BackgroundChoice::None => None,
                BackgroundChoice::BulkFrankTamm => Some(BackgroundModel::BulkFrankTamm),
                BackgroundChoice::PlanarInterface => Some(BackgroundModel::PlanarInterface),
            },
            grid_points: self.grids.omega_points,
            refine: self.ideality.refine,
        }
    }
}

/// Dotted key path of the table entry enclosing byte offset `at`.
fn locate_field(text: &str, at: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if t.starts_with('[') {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        offset += line.len();
        if offset > at {
            break;
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "<root>".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}
