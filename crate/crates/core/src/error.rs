use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("wavelength {wavelength:.4e} m is outside the valid band [{min:.4e}, {max:.4e}] m of material `{material}`")]
    OutOfBand {
        material: String,
        wavelength: f64,
        min: f64,
        max: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid material `{id}`: {reason}")]
    InvalidMaterial { id: String, reason: String },
    #[error("unknown material `{0}`")]
    UnknownMaterial(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no guided mode at omega = {omega:.6e} rad/s")]
    NoGuidedMode { omega: f64 },
    #[error("eigensolver did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("need at least {needed} frequency samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("ambiguous family tracking at omega = {omega:.6e} rad/s (best overlap {overlap:.3})")]
    AmbiguousTracking { omega: f64, overlap: f64 },
    #[error("coupling band of `{family}` is truncated by the frequency grid (edge/peak = {edge_ratio:.3e})")]
    BandTruncated { family: String, edge_ratio: f64 },
    #[error("transverse density has support inside material at ({x:.3e}, {y:.3e}) m")]
    SupportViolation { x: f64, y: f64 },
    #[error("adaptive quadrature failed to reach {tolerance:e} relative (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure {
        tolerance: f64,
        estimate: f64,
        error: f64,
    },
    #[error("kernel is singular: observation point coincides with the emission point")]
    SingularPoint,
    #[error("degenerate phase matching at z = {z:.4e} m (|dR/dz - v_g/v| = {slope_gap:.3e})")]
    DegeneratePhaseMatching { z: f64, slope_gap: f64 },
    #[error("waveform grids cannot be aligned: {0}")]
    GridMismatch(String),
    #[error("comb under-resolved: {points_per_linewidth:.2} points per linewidth, refinement would need {required} points (cap {cap})")]
    UnderResolvedComb {
        points_per_linewidth: f64,
        required: usize,
        cap: usize,
    },
    #[error("degenerate dispersion: |n_g - n_eff| = {0:.3e}")]
    DegenerateDispersion(f64),
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("corrupt data: {0}")]
    Corrupt(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
