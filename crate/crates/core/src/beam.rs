//! Electron-beam parameters, relativistic kinematics and apodization windows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{ELECTRON_REST_ENERGY_EV, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::numeric::sinc;

pub fn lorentz_gamma(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(1.0 / (1.0 - beta * beta).sqrt())
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")))
    }
}

/// Kinetic energy in eV for velocity ratio `beta`.
pub fn beta_to_kinetic_energy(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    // (gamma - 1) written as b^2 / (sqrt(1-b^2) (1 + sqrt(1-b^2))) to stay accurate as beta -> 0
    let s = (1.0 - beta * beta).sqrt();
    Ok(ELECTRON_REST_ENERGY_EV * beta * beta / (s * (1.0 + s)))
}

/// Velocity ratio for a kinetic energy in eV.
pub fn kinetic_energy_to_beta(energy_ev: f64) -> Result<f64> {
    if !(energy_ev > 0.0 && energy_ev.is_finite()) {
        return Err(Error::Domain(format!(
            "kinetic energy must be positive, got {energy_ev} eV"
        )));
    }
    let t = energy_ev / ELECTRON_REST_ENERGY_EV;
    // beta = sqrt(1 - 1/gamma^2) = sqrt(t (t + 2)) / (t + 1)
    Ok((t * (t + 2.0)).sqrt() / (t + 1.0))
}

/// Evanescent decay constant `omega / (v gamma)` of the electron's near field.
pub fn evanescent_decay(omega: f64, beta: f64) -> Result<f64> {
    let gamma = lorentz_gamma(beta)?;
    Ok(omega / (beta * SPEED_OF_LIGHT * gamma))
}

/// Apodization of the interaction along `z in [0, L]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Blackman,
}

impl Window {
    /// Weight at normalized position `s = z / L in [0, 1]`.
    pub fn weight(self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        match self {
            Window::Rectangular => 1.0,
            Window::Blackman => {
                0.42 - 0.5 * (2.0 * PI * s).cos() + 0.08 * (4.0 * PI * s).cos()
            }
        }
    }

    /// Magnitude of the window transform normalized to 1 at zero mismatch,
    /// `|int_0^L w(z) e^{i Delta z} dz| / int_0^L w(z) dz`, with `x = Delta L / 2`.
    pub fn transform(self, x: f64) -> f64 {
        let x = x.abs();
        match self {
            Window::Rectangular => sinc(x).abs(),
            Window::Blackman => {
                // each cosine term shifts the sinc by a multiple of pi; x/(x+k pi) sinc(x - k pi)
                // is the same quantity rewritten without the removable singularity at x = k pi
                let shifted = |k: f64| {
                    let d = x - k * PI;
                    x / (x + k * PI) * sinc(d)
                };
                let v = 0.42 * sinc(x) + 0.5 * shifted(1.0) + 0.08 * shifted(2.0);
                (v / 0.42).abs()
            }
        }
    }

    /// `L int w^2 / (int w)^2`: spectral energy relative to a rectangular window
    /// of the same length and peak-normalized transform.
    pub fn energy_factor(self) -> f64 {
        match self {
            Window::Rectangular => 1.0,
            // int w = 0.42 L, int w^2 = (0.42^2 + 0.5^2/2 + 0.08^2/2) L
            Window::Blackman => (0.42f64.powi(2) + 0.125 + 0.0032) / 0.42f64.powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

/// Discrete transverse probability density `|psi(R)|^2` as weighted points.
/// Coordinates follow [`crate::geometry`]: `y` is height above the top surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransverseDensity {
    pub points: Vec<WeightedPoint>,
}

impl TransverseDensity {
    pub fn new(points: Vec<WeightedPoint>) -> Result<Self> {
        let d = Self { points };
        d.validate()?;
        Ok(d)
    }

    pub fn point(x: f64, y: f64) -> Self {
        Self {
            points: vec![WeightedPoint { x, y, weight: 1.0 }],
        }
    }

    /// Isotropic Gaussian of standard deviation `sigma` sampled on a square
    /// `(2 n + 1)^2` lattice spanning `+-extent` standard deviations, with
    /// midpoint weights renormalized to sum to one.
    pub fn gaussian(x0: f64, y0: f64, sigma: f64, n: usize, extent: f64) -> Result<Self> {
        if !(sigma > 0.0) || n == 0 || !(extent > 0.0) {
            return Err(Error::InvalidInput(
                "gaussian density needs sigma > 0, n >= 1, extent > 0".into(),
            ));
        }
        let step = extent * sigma / n as f64;
        let mut points = Vec::with_capacity((2 * n + 1).pow(2));
        for i in 0..=2 * n {
            for j in 0..=2 * n {
                let dx = (i as f64 - n as f64) * step;
                let dy = (j as f64 - n as f64) * step;
                let w = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                points.push(WeightedPoint {
                    x: x0 + dx,
                    y: y0 + dy,
                    weight: w,
                });
            }
        }
        let total: f64 = points.iter().map(|p| p.weight).sum();
        points.iter_mut().for_each(|p| p.weight /= total);
        Ok(Self { points })
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.points.iter().any(|p| !(p.weight >= 0.0)) {
            return Err(Error::InvalidInput(
                "transverse density needs non-negative weights".into(),
            ));
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "transverse density integrates to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub beta: f64,
    /// Height of the trajectory above the top waveguide surface (m).
    pub gap: f64,
    /// Interaction length (m).
    pub length: f64,
    #[serde(default)]
    pub window: Window,
    /// Lateral offset of the trajectory from the core centre (m).
    #[serde(default)]
    pub x_offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transverse_density: Option<TransverseDensity>,
}

impl BeamParams {
    pub fn new(beta: f64, gap: f64, length: f64) -> Result<Self> {
        let b = Self {
            beta,
            gap,
            length,
            window: Window::Rectangular,
            x_offset: 0.0,
            transverse_density: None,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        let mut b = self.clone();
        b.beta = beta;
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.gap > 0.0) {
            return Err(Error::InvalidInput(format!("gap must be positive, got {}", self.gap)));
        }
        if !(self.length > 0.0) {
            return Err(Error::InvalidInput(format!(
                "interaction length must be positive, got {}",
                self.length
            )));
        }
        if let Some(d) = &self.transverse_density {
            d.validate()?;
        }
        Ok(())
    }

    pub fn velocity(&self) -> f64 {
        self.beta * SPEED_OF_LIGHT
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 - self.beta * self.beta).sqrt()
    }

    pub fn kinetic_energy_ev(&self) -> f64 {
        beta_to_kinetic_energy(self.beta).unwrap_or(f64::NAN)
    }

    /// Sampling points of the transverse density, or the nominal trajectory.
    pub fn transverse_points(&self) -> Vec<WeightedPoint> {
        match &self.transverse_density {
            Some(d) => d.points.clone(),
            None => vec![WeightedPoint {
                x: self.x_offset,
                y: self.gap,
                weight: 1.0,
            }],
        }
    }
}
