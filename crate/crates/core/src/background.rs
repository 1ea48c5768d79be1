//! Non-guided coupling channel: bulk emission into the substrate and the
//! planar-interface model for a trajectory parallel to the top surface.
//!
//! The planar model integrates the reflected field of the electron's
//! evanescent spectrum over the lateral wavevector `k_x`:
//!
//! `|g_w|^2 = alpha c L / (pi w^2) int dk_x e^{-2 kappa d} / Q^2
//!            Im[ r_p kappa k_z^2 + r_s k0^2 k_x^2 / kappa ]`
//!
//! with `k_z = w / v`, `Q^2 = k_x^2 + k_z^2` and `kappa = sqrt(Q^2 - k0^2)`.
//! For a lossless stack the reflection coefficients are real unless the wave
//! propagates in the substrate, so the integrand is confined to
//! `Q < n_sub k0` and vanishes identically below the Cherenkov threshold.
//! Guided modes of a film appear as real poles; their residues are added
//! explicitly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beam::BeamParams;
use crate::constants::{FINE_STRUCTURE, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::material::MaterialModel;
use crate::numeric::{adaptive_gauss_kronrod, trapezoid};
use crate::slab::{SlabPolarization, SlabStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundModel {
    BulkFrankTamm,
    PlanarInterface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpectrum {
    pub omega: Vec<f64>,
    pub density: Vec<f64>,
    pub model: BackgroundModel,
    pub substrate: String,
    pub beta: f64,
    pub gap: f64,
    pub length: f64,
}

/// Frank-Tamm density for a trajectory inside a medium of index `n`:
/// `(alpha L / c) (1 - 1 / (beta n)^2)` above threshold, zero otherwise.
pub fn frank_tamm_density(n: f64, beta: f64, length: f64) -> f64 {
    if beta * n <= 1.0 {
        return 0.0;
    }
    FINE_STRUCTURE * length / SPEED_OF_LIGHT * (1.0 - 1.0 / (beta * n).powi(2))
}

/// Relative quadrature tolerance of the planar model.
pub const PLANAR_REL_TOL: f64 = 1e-6;

/// Reflection coefficients `(r_s, r_p)` seen from vacuum for a film of index
/// `n_film` and thickness `t` on a semi-infinite substrate, at in-plane
/// wavenumber `q`. `t = 0` gives the bare substrate.
pub fn reflection(k0: f64, q: f64, n_film: f64, t: f64, n_sub: f64) -> (Complex64, Complex64) {
    let kperp = |eps: f64| {
        let v = Complex64::new(eps * k0 * k0 - q * q, 0.0);
        // branch with Im >= 0 (outgoing or decaying away from the interface)
        let s = v.sqrt();
        if s.im < 0.0 {
            -s
        } else {
            s
        }
    };
    let (e0, e1, e2) = (1.0, n_film * n_film, n_sub * n_sub);
    let (k0y, k1y, k2y) = (kperp(e0), kperp(e1), kperp(e2));
    let rs = |ka: Complex64, kb: Complex64| (ka - kb) / (ka + kb);
    let rp = |ea: f64, eb: f64, ka: Complex64, kb: Complex64| (eb * ka - ea * kb) / (eb * ka + ea * kb);
    let phase = (Complex64::i() * 2.0 * k1y * t).exp();
    let combine = |r01: Complex64, r12: Complex64| (r01 + r12 * phase) / (1.0 + r01 * r12 * phase);
    let s = combine(rs(k0y, k1y), rs(k1y, k2y));
    let p = combine(rp(e0, e1, k0y, k1y), rp(e1, e2, k1y, k2y));
    (s, p)
}

fn planar_integrand(k0: f64, kz: f64, kx: f64, gap: f64, refl: (Complex64, Complex64)) -> f64 {
    let q2 = kx * kx + kz * kz;
    let kappa = (q2 - k0 * k0).sqrt();
    let (rs, rp) = refl;
    (-2.0 * kappa * gap).exp() / q2 * (rp.im * kappa * kz * kz + rs.im * k0 * k0 * kx * kx / kappa)
}

fn prefactor(omega: f64, length: f64) -> f64 {
    // the k_x integral runs over the full line; the integrand is even
    2.0 * FINE_STRUCTURE * SPEED_OF_LIGHT * length / (std::f64::consts::PI * omega * omega)
}

/// Planar-interface density (s) for a bare substrate of index `n_sub`.
pub fn planar_interface_density(n_sub: f64, beta: f64, gap: f64, length: f64, omega: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::InvalidInput(format!("gap must be positive, got {gap}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    let k0 = omega / SPEED_OF_LIGHT;
    let kz = k0 / beta;
    let kx2_max = (n_sub * k0).powi(2) - kz * kz;
    if kx2_max <= 0.0 {
        return Ok(0.0);
    }
    let kmax = kx2_max.sqrt();
    // substitution k_x = kmax sin(theta) removes the square-root endpoint behaviour
    let f = |theta: f64| {
        let kx = kmax * theta.sin();
        planar_integrand(k0, kz, kx, gap, reflection(k0, (kx * kx + kz * kz).sqrt(), n_sub, 0.0, n_sub)) * kmax * theta.cos()
    };
    let v = adaptive_gauss_kronrod(f, 0.0, std::f64::consts::FRAC_PI_2, PLANAR_REL_TOL, 0.0, 400)?;
    Ok((prefactor(omega, length) * v).max(0.0))
}

/// Background spectrum on a frequency grid.
pub fn background_spectrum(
    substrate: &MaterialModel,
    model: BackgroundModel,
    beam: &BeamParams,
    omega: &[f64],
) -> Result<BackgroundSpectrum> {
    beam.validate()?;
    let density = omega
        .iter()
        .map(|&w| {
            let n = substrate.refractive_index(w)?;
            match model {
                BackgroundModel::BulkFrankTamm => Ok(frank_tamm_density(n, beam.beta, beam.length)),
                BackgroundModel::PlanarInterface => planar_interface_density(n, beam.beta, beam.gap, beam.length, w),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BackgroundSpectrum {
        omega: omega.to_vec(),
        density,
        model,
        substrate: substrate.id.clone(),
        beta: beam.beta,
        gap: beam.gap,
        length: beam.length,
    })
}

/// Emission density (s) of a film of index `n_film` and thickness `t` on the
/// substrate: substrate radiation by quadrature plus film guided-mode residues.
pub fn film_density(n_film: f64, t: f64, n_sub: f64, beta: f64, gap: f64, length: f64, omega: f64) -> Result<f64> {
    if !(t > 0.0) {
        return planar_interface_density(n_sub, beta, gap, length, omega);
    }
    let k0 = omega / SPEED_OF_LIGHT;
    let kz = k0 / beta;
    let pre = prefactor(omega, length);
    let mut total = 0.0;
    let kx2_sub = (n_sub * k0).powi(2) - kz * kz;
    if kx2_sub > 0.0 {
        let kmax = kx2_sub.sqrt();
        let f = |theta: f64| {
            let kx = kmax * theta.sin();
            planar_integrand(k0, kz, kx, gap, reflection(k0, (kx * kx + kz * kz).sqrt(), n_film, t, n_sub)) * kmax * theta.cos()
        };
        total += pre * adaptive_gauss_kronrod(f, 0.0, std::f64::consts::FRAC_PI_2, PLANAR_REL_TOL, 0.0, 400)?;
    }
    // guided film modes: r ~ a / (q - K) with the causal prescription q -> q + i0
    // contributes Im -> pi a delta(q - K)
    let stack = SlabStack::film(n_sub, n_film, t, 1.0)?;
    for pol in [SlabPolarization::Te, SlabPolarization::Tm] {
        for n_mode in stack.guided_indices(pol, k0) {
            let big_k = n_mode * k0;
            if big_k <= kz {
                continue;
            }
            let kx = (big_k * big_k - kz * kz).sqrt();
            let pick = |q: f64| {
                let (s, p) = reflection(k0, q, n_film, t, n_sub);
                match pol {
                    SlabPolarization::Te => s.re,
                    SlabPolarization::Tm => p.re,
                }
            };
            let dq = 1e-7 * big_k;
            // residue from the derivative of 1/r, which is smooth through the pole
            let d_inv = (1.0 / pick(big_k + dq) - 1.0 / pick(big_k - dq)) / (2.0 * dq);
            let a = 1.0 / d_inv;
            let kappa = (big_k * big_k - k0 * k0).sqrt();
            let weight = match pol {
                SlabPolarization::Te => k0 * k0 * kx * kx / kappa,
                SlabPolarization::Tm => kappa * kz * kz,
            };
            // delta(q - K) = delta(k_x - k_xm) K / k_xm; the k_x integrand is even, so
            // the prefactor's factor two covers the pole at -k_xm
            let contrib = std::f64::consts::PI * a.abs() * (-2.0 * kappa * gap).exp() / (big_k * big_k) * weight * big_k / kx;
            total += pre * contrib;
        }
    }
    Ok(total.max(0.0))
}

/// Film emission compared with a waveguide's total guided coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilmComparison {
    pub film_total: f64,
    pub waveguide_total: f64,
    pub ratio: f64,
    pub caveat: String,
}

pub const FILM_CAVEAT: &str = "film emission uses an infinite planar film on a semi-infinite substrate; \
the waveguide total sums band-integrated guided strengths; both are linear in the interaction length";

/// Band-integrated film emission over `omega` divided by `waveguide_total`.
pub fn thin_film_comparison(
    film: &MaterialModel,
    thickness: f64,
    substrate: &MaterialModel,
    beam: &BeamParams,
    omega: &[f64],
    waveguide_total: f64,
) -> Result<FilmComparison> {
    if !(waveguide_total > 0.0) {
        return Err(Error::InvalidInput("waveguide total must be positive".into()));
    }
    let d = omega
        .iter()
        .map(|&w| {
            film_density(
                film.refractive_index(w)?,
                thickness,
                substrate.refractive_index(w)?,
                beam.beta,
                beam.gap,
                beam.length,
                w,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let film_total = trapezoid(omega, &d);
    Ok(FilmComparison {
        film_total,
        waveguide_total,
        ratio: film_total / waveguide_total,
        caveat: FILM_CAVEAT.into(),
    })
}
