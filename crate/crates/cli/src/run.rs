//! Task orchestration: one validated config in, a directory of CSV/JSON out.
//!
//! Outputs are a pure function of the effective config and the cache
//! contents. Headers carry no timestamps, so a warm rerun reproduces every
//! file byte for byte.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use fewg_core::background::background_spectrum;
use fewg_core::constants::{ev_to_omega, omega_to_ev, SPEED_OF_LIGHT};
use fewg_core::coupling::{coupling_map, integrated_strength};
use fewg_core::export::{self, write_csv, write_json, COUPLING_COLUMNS, EELS_COLUMNS, WAVEFORM_COLUMNS};
use fewg_core::ideality::{full_spectrum, gap_tradeoff, ideality_report, tradeoff_is_monotone};
use fewg_core::modesolver::{TrackingOptions, SOLVER_VERSION};
use fewg_core::numeric::{linspace, trapezoid};
use fewg_core::quantum::{herald_metrics, sideband_probabilities, synth_eels_spectrum};
use fewg_core::resonator::{resonator_spectrum, ResonatorOptions};
use fewg_core::sweep::{direct_solver, sweep_families};
use fewg_core::waveform::{dispersion_from_gvd, synthesize_waveform, WaveformOptions};
use fewg_core::{
    BeamParams, CompactWindow, CouplingSpectrum, Error, FamilyInterpolant, GridSpec, IdealityOptions, MaterialLibrary, Metadata,
    ModeEnvelope, Polarization, ResonatorParams, SolverOptions, Sweep, WaveformParams, WaveguideGeometry,
};

use crate::cache::ModeCache;
use crate::config::{EnvelopeShape, RunConfig, Task};
use crate::ConfigError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PARTIAL: u8 = 3;

pub const FAILURES_FILE: &str = "failures.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Core(_) => EXIT_FAILURE,
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub config: PathBuf,
    pub task: Option<Task>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// One work item that failed without aborting the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub stage: String,
    pub item: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    /// Hits, misses, writes and quarantined entries, when a cache was used.
    pub cache_stats: Option<[usize; 4]>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

/// Loads, overrides, validates and runs.
pub fn run(req: &RunRequest) -> Result<RunOutcome, RunError> {
    let mut cfg = RunConfig::load(&req.config)?;
    if let Some(t) = req.task {
        cfg.task = t;
    }
    if let Some(o) = &req.out {
        cfg.output = o.clone();
    }
    if let Some(c) = &req.cache {
        cfg.cache = Some(c.clone());
    }
    run_config(&cfg)
}

pub fn run_config(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    let mut outcome = RunOutcome::default();
    fs::create_dir_all(&cfg.output).map_err(Error::from)?;
    match cfg.task {
        Task::Modes => ctx.modes(&mut outcome)?,
        Task::Map => ctx.map(&mut outcome)?,
        Task::Ideality => ctx.ideality(&mut outcome)?,
        Task::Tradeoff => ctx.tradeoff(&mut outcome)?,
        Task::Spectrum => ctx.spectrum(&mut outcome)?,
        Task::Waveform => ctx.waveform(&mut outcome)?,
        Task::Resonator => ctx.resonator(&mut outcome)?,
    }
    let failures_path = cfg.output.join(FAILURES_FILE);
    if outcome.failures.is_empty() {
        // a stale manifest would misreport this run
        let _ = fs::remove_file(&failures_path);
    } else {
        write_json(create(&failures_path)?, &ctx.meta, &outcome.failures)?;
        outcome.files.push(failures_path);
    }
    outcome.cache_stats = ctx.cache.as_ref().map(|c| c.stats.snapshot());
    Ok(outcome)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// Hash of the physics-bearing part of the config; output and cache
/// locations do not change results.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.output = PathBuf::new();
    c.cache = None;
    sha256_hex(c.to_json_line().as_bytes())
}

struct Context<'a> {
    cfg: &'a RunConfig,
    lib: MaterialLibrary,
    geo: WaveguideGeometry,
    beam: BeamParams,
    grid: GridSpec,
    opts: SolverOptions,
    cache: Option<ModeCache>,
    meta: Metadata,
}

#[derive(Serialize)]
struct FamilyRecord<'a> {
    family: &'a str,
    polarization: Polarization,
    omega_rad_s: &'a [f64],
    n_eff: &'a [f64],
    n_g: &'a [f64],
    interpolated: &'a [bool],
}

#[derive(Serialize)]
struct IdealityRow {
    beta: f64,
    gap_m: f64,
    report: fewg_core::IdealityReport,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, RunError> {
        let lib = cfg.material_library()?;
        let geo = cfg.geometry()?;
        let cache = cfg.cache.as_deref().map(ModeCache::open).transpose()?;
        let mut versions = Vec::new();
        for id in [&geo.core_material, &geo.substrate_material, &geo.top_cladding_material] {
            let m = lib.get(id)?;
            let v = if m.version.is_empty() { "unversioned" } else { m.version.as_str() };
            let entry = format!("{id}={v}");
            if !versions.contains(&entry) {
                versions.push(entry);
            }
        }
        let geo_json = serde_json::to_vec(&geo).map_err(|e| Error::Io(e.to_string()))?;
        let meta = Metadata::new()
            .with("tool", concat!("fewg ", env!("CARGO_PKG_VERSION")))
            .with("task", cfg.task.name())
            .with("config_sha256", config_hash(cfg))
            .with("materials", versions.join(";"))
            .with("geometry_sha256", sha256_hex(&geo_json))
            .with("solver", SOLVER_VERSION)
            .with("config", cfg.to_json_line());
        Ok(Self {
            cfg,
            lib,
            beam: cfg.beam()?,
            grid: cfg.grid_spec(),
            opts: cfg.solver_options(),
            geo,
            cache,
            meta,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output.join(name)
    }

    fn sweep(&self, outcome: &mut RunOutcome) -> Result<Sweep, Error> {
        let omega = self.cfg.sweep_omega();
        let compact = Some(CompactWindow::default());
        let tracking = TrackingOptions::default();
        let sweep = match &self.cache {
            Some(c) => sweep_families(&omega, c.solver(&self.geo, &self.lib, &self.grid, &self.opts, compact), &tracking)?,
            None => sweep_families(&omega, direct_solver(&self.geo, &self.lib, &self.grid, &self.opts, compact), &tracking)?,
        };
        outcome.failures.extend(sweep.failures.iter().map(|f| Failure {
            stage: "mode-solve".into(),
            item: format!("omega={}", fmt(f.omega)),
            message: f.message.clone(),
        }));
        Ok(sweep)
    }

    /// Output frequency grid spanning the solved band.
    fn output_omega(&self) -> Vec<f64> {
        let w = self.cfg.sweep_omega();
        linspace(w[0], w[w.len() - 1], self.cfg.grids.omega_points)
    }

    fn ideality_options(&self) -> IdealityOptions {
        let mut o = self.cfg.ideality_options();
        o.grid_points = self.cfg.grids.omega_points;
        o
    }

    fn substrate(&self) -> Result<&fewg_core::MaterialModel, Error> {
        self.lib.get(&self.geo.substrate_material)
    }

    fn write_pair<T: Serialize>(&self, outcome: &mut RunOutcome, stem: &str, columns: &[&str], rows: Vec<Vec<String>>, json: &T) -> Result<(), Error> {
        let csv = self.out(&format!("{stem}.csv"));
        write_csv(create(&csv)?, &self.meta, columns, rows)?;
        let js = self.out(&format!("{stem}.json"));
        write_json(create(&js)?, &self.meta, json)?;
        outcome.files.extend([csv, js]);
        Ok(())
    }

    fn target<'s>(&self, interpolants: &'s [FamilyInterpolant]) -> Result<&'s FamilyInterpolant, Error> {
        let name = &self.cfg.ideality.target;
        interpolants
            .iter()
            .find(|f| &f.family == name)
            .ok_or_else(|| Error::InvalidInput(format!("target family {name} was not found in the sweep")))
    }

    fn modes(&self, outcome: &mut RunOutcome) -> Result<(), Error> {
        let sweep = self.sweep(outcome)?;
        let mut rows = Vec::new();
        for f in &sweep.families {
            for i in 0..f.len() {
                rows.push(vec![
                    f.family.clone(),
                    serde_json::to_value(f.polarization).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                    fmt(f.omega[i]),
                    fmt(omega_to_ev(f.omega[i])),
                    fmt(f.n_eff[i]),
                    fmt(f.n_g[i]),
                    f.interpolated[i].to_string(),
                ]);
            }
        }
        let records: Vec<FamilyRecord> = sweep
            .families
            .iter()
            .map(|f| FamilyRecord {
                family: &f.family,
                polarization: f.polarization,
                omega_rad_s: &f.omega,
                n_eff: &f.n_eff,
                n_g: &f.n_g,
                interpolated: &f.interpolated,
            })
            .collect();
        self.write_pair(outcome, "modes", &MODES_COLUMNS, rows, &records)
    }

    fn map(&self, outcome: &mut RunOutcome) -> Result<(), Error> {
        let sweep = self.sweep(outcome)?;
        let interpolants = sweep.interpolants(&self.beam)?;
        let substrate = self.substrate()?;
        let model = self.cfg.ideality_options().background;
        let omega = self.output_omega();
        let map = coupling_map(
            &interpolants,
            &self.beam,
            &self.cfg.beta_grid(),
            &omega,
            |beam, w| match model {
                None => Ok(0.0),
                Some(m) => Ok(background_spectrum(substrate, m, beam, &[w])?.density[0]),
            },
            &|w| sweep.failed_near(w),
        )?;
        for (ib, row) in map.failed.iter().enumerate() {
            let n = row.iter().filter(|&&f| f).count();
            if n > 0 {
                outcome.failures.push(Failure {
                    stage: "map".into(),
                    item: format!("beta={}", fmt(map.beta[ib])),
                    message: format!("{n} frequency cells unavailable"),
                });
            }
        }
        self.write_pair(outcome, "map", &COUPLING_COLUMNS, export::map_rows(&map), &map)
    }

    fn ideality(&self, outcome: &mut RunOutcome) -> Result<(), Error> {
        let sweep = self.sweep(outcome)?;
        let substrate = self.substrate()?;
        let opts = self.ideality_options();
        let target = &self.cfg.ideality.target;
        let results: Vec<(f64, Result<fewg_core::IdealityReport, Error>)> = self
            .cfg
            .beta_grid()
            .par_iter()
            .map(|&b| {
                let r = self
                    .beam
                    .with_beta(b)
                    .and_then(|beam| full_spectrum(&sweep, &beam, substrate, &opts))
                    .and_then(|s| ideality_report(&s, target, &opts));
                (b, r)
            })
            .collect();
        let mut rows = Vec::new();
        let mut data = Vec::new();
        for (b, r) in results {
            match r {
                Ok(report) => {
                    rows.push(report_row(b, &report));
                    data.push(IdealityRow { beta: b, gap_m: self.beam.gap, report });
                }
                Err(e) => outcome.failures.push(Failure {
                    stage: "ideality".into(),
                    item: format!("beta={}", fmt(b)),
                    message: e.to_string(),
                }),
            }
        }
        self.write_pair(outcome, "ideality", &IDEALITY_COLUMNS, rows, &data)
    }

    fn tradeoff(&self, outcome: &mut RunOutcome) -> Result<(), Error> {
        let sweep = self.sweep(outcome)?;
        let gaps: Vec<f64> = self.cfg.grids.gaps_nm.iter().map(|g| g * 1e-9).collect();
        let reports = gap_tradeoff(&sweep, &self.beam, &gaps, self.substrate()?, &self.cfg.ideality.target, &self.ideality_options())?;
        let rows = reports.iter().map(|r| report_row(r.beam.beta, r)).collect();
        let (strength_falls, ideality_rises) = tradeoff_is_monotone(&reports);
        let data = serde_json::json!({
            "strength_decreasing": strength_falls,
            "ideality_increasing": ideality_rises,
            "reports": reports,
        });
        self.write_pair(outcome, "tradeoff", &IDEALITY_COLUMNS, rows, &data)
    }

    fn open_spectrum(&self, outcome: &mut RunOutcome) -> Result<(Sweep, CouplingSpectrum), Error> {
        let sweep = self.sweep(outcome)?;
        let spectrum = full_spectrum(&sweep, &self.beam, self.substrate()?, &self.ideality_options())?;
        Ok((sweep, spectrum))
    }

    fn spectrum(&self, outcome: &mut RunOutcome) -> Result<(), Error> {
        let (_, spectrum) = self.open_spectrum(outcome)?;
        let opts = self.ideality_options();
        let target = &self.cfg.ideality.target;
        let report = ideality_report(&spectrum, target, &opts)?;
        let mut strengths = BTreeMap::new();
        let mut photon_ev = BTreeMap::new();
        for (name, density) in spectrum.channels() {
            let strength = trapezoid(&spectrum.omega, density);
            if strength > 0.0 {
                let first: Vec<f64> = spectrum.omega.iter().zip(density).map(|(w, d)| w * d).collect();
                strengths.insert(name.to_string(), strength);
                photon_ev.insert(name.to_string(), omega_to_ev(trapezoid(&spectrum.omega, &first) / strength));
            }
        }
        let dist = sideband_probabilities(&strengths, None)?;
        let eels = synth_eels_spectrum(&dist, &photon_ev, opts.zlp_fwhm_ev)?;
        let herald = herald_metrics(&spectrum, target, opts.zlp_fwhm_ev, opts.window_fwhm)?;
        let data = serde_json::json!({
            "report": report,
            "photon_energy_eV": photon_ev,
            "sidebands": dist,
            "herald": herald,
            "spectrum": spectrum,
        });
        self.write_pair(outcome, "spectrum", &COUPLING_COLUMNS, export::spectrum_rows(&spectrum), &data)?;
        let eels_path = self.out("eels.csv");
        write_csv(create(&eels_path)?, &self.meta, &EELS_COLUMNS, export::eels_rows(&eels))?;
        outcome.files.push(eels_path);
        Ok(())
    }

    fn waveform(&self, outcome: &mut RunOutcome) -> Result<(), Error> {
        let spec = self.cfg.waveform.clone().unwrap_or_default();
        let sweep = self.sweep(outcome)?;
        let interpolants = sweep.interpolants(&self.beam)?;
        let target = self.target(&interpolants)?;
        let omega_m = target.phase_matched_omega(self.beam.beta).ok_or_else(|| {
            Error::InvalidInput(format!("{} is not phase matched at beta {} inside the solved band", target.family, self.beam.beta))
        })?;
        let n_g = target.n_g(omega_m);
        let v_g = SPEED_OF_LIGHT / n_g;
        let gvd = target.n_g_derivative(omega_m) / SPEED_OF_LIGHT;
        let beta2 = spec.beta2_s.unwrap_or_else(|| dispersion_from_gvd(gvd, v_g));
        let length = self.beam.length;
        let envelope = match spec.envelope {
            EnvelopeShape::Uniform => ModeEnvelope::uniform(length, spec.envelope_points)?,
            EnvelopeShape::Solved => {
                let amp = target.uz_sq(omega_m).sqrt();
                let window = self.beam.window;
                ModeEnvelope::from_fn(length, spec.envelope_points, |z| Complex64::new(amp * window.weight(z / length), 0.0))?
            }
        };
        let params = WaveformParams {
            v: self.beam.velocity(),
            v_g,
            beta2,
            omega_m,
            routing: self.geo.routing.clone(),
        };
        let opts = WaveformOptions {
            points: spec.points,
            delta_threshold: spec.delta_threshold,
            ..WaveformOptions::default()
        };
        let result = synthesize_waveform(&envelope, &params, &opts)?;
        let data = serde_json::json!({
            "family": target.family,
            "omega_m_rad_s": omega_m,
            "photon_energy_eV": omega_to_ev(omega_m),
            "group_index": n_g,
            "gvd_s2_per_m": gvd,
            "waveform": result,
        });
        self.write_pair(outcome, "waveform", &WAVEFORM_COLUMNS, export::waveform_rows(&result), &data)
    }

    fn resonator(&self, outcome: &mut RunOutcome) -> Result<(), Error> {
        let spec = self.cfg.resonator.clone().ok_or_else(|| Error::InvalidInput("missing [resonator] table".into()))?;
        let (sweep, open) = self.open_spectrum(outcome)?;
        let anchor = match spec.anchor_ev {
            Some(ev) => ev_to_omega(ev),
            None => {
                let interpolants = sweep.interpolants(&self.beam)?;
                let target = self.target(&interpolants)?;
                target
                    .phase_matched_omega(self.beam.beta)
                    .ok_or_else(|| Error::InvalidInput(format!("{} is not phase matched; set resonator.anchor_ev", target.family)))?
            }
        };
        let params = ResonatorParams::new(spec.fsr_ghz * 1e9, spec.finesse, anchor)?;
        let res = resonator_spectrum(&open, &params, &ResonatorOptions { max_points: spec.max_points })?;
        // null where a band is clipped by the grid edge
        let strengths: BTreeMap<&str, (Option<f64>, Option<f64>)> = res
            .spectrum
            .per_family
            .keys()
            .map(|name| (name.as_str(), (integrated_strength(&open, name).ok(), integrated_strength(&res.spectrum, name).ok())))
            .collect();
        let data = serde_json::json!({
            "params": params,
            "linewidth_rad_s": params.linewidth(),
            "round_trip_time_s": res.round_trip_time,
            "truncation_bound": res.truncation_bound,
            "refined_grid": res.refined,
            "grid_points": res.spectrum.omega.len(),
            "resonances_in_band": res.resonances.len(),
            "comb_resolvable": res.comb_resolvable(self.cfg.ideality.zlp_fwhm_ev),
            "band_strength_open_vs_resonator": strengths,
        });
        let csv = self.out("resonator.csv");
        let meta = self
            .meta
            .clone()
            .with("fsr_hz", fmt(params.fsr))
            .with("finesse", fmt(params.finesse))
            .with("anchor_omega_rad_s", fmt(params.anchor_omega));
        write_csv(create(&csv)?, &meta, &COUPLING_COLUMNS, export::spectrum_rows(&res.spectrum))?;
        let js = self.out("resonator.json");
        write_json(create(&js)?, &meta, &data)?;
        outcome.files.extend([csv, js]);
        Ok(())
    }
}

pub const MODES_COLUMNS: [&str; 7] = ["family", "polarization", "omega_rad_s", "omega_eV", "n_eff", "n_g", "interpolated"];
pub const IDEALITY_COLUMNS: [&str; 8] = [
    "beta",
    "gap_m",
    "target",
    "target_strength",
    "total_strength",
    "background_strength",
    "ideality",
    "ideality_filtered",
];

fn report_row(beta: f64, r: &fewg_core::IdealityReport) -> Vec<String> {
    vec![
        fmt(beta),
        fmt(r.beam.gap),
        r.target_family.clone(),
        fmt(r.target_strength),
        fmt(r.total),
        fmt(r.background),
        fmt(r.ideality),
        fmt(r.ideality_filtered),
    ]
}
