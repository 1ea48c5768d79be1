//! Simulation engine for the vacuum coupling between a free electron and the
//! guided modes of a photonic integrated waveguide.

pub mod background;
pub mod beam;
pub mod constants;
pub mod coupling;
pub mod error;
pub mod export;
pub mod geometry;
pub mod ideality;
pub mod material;
pub mod modesolver;
pub mod numeric;
pub mod quantum;
pub mod resonator;
pub mod slab;
pub mod sweep;
pub mod waveform;

pub use beam::{BeamParams, TransverseDensity, Window};
pub use error::{Error, Result};
pub use geometry::{permittivity_profile, Boundary, GridSpec, Routing, WaveguideGeometry};
pub use material::{MaterialLibrary, MaterialModel};
pub use background::{BackgroundModel, BackgroundSpectrum};
pub use coupling::{CouplingMap, CouplingSpectrum, FamilyInterpolant};
pub use export::Metadata;
pub use ideality::{IdealityOptions, IdealityReport};
pub use modesolver::{FamilyDispersion, ModeSolution, Polarization, SolverOptions};
pub use quantum::{HeraldMetrics, SidebandDistribution, SynthEels};
pub use resonator::{ResonatorParams, ResonatorSpectrum};
pub use sweep::{CompactWindow, Sweep};
pub use waveform::{ModeEnvelope, WaveformParams, WaveformResult};
