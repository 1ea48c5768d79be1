//! Electron-photon vacuum coupling density, spectra, maps and band-integrated
//! strengths.
//!
//! With the continuum normalization `U = u e^{i beta_z z} / sqrt(2 pi v_g)` the
//! coupling density of one family is
//! `|g_w|^2 = alpha c / (w v_g) |u_z(R0)|^2 L^2 |W(Delta L / 2)|^2`
//! with `Delta = n_eff w / c - w / v`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::beam::{BeamParams, TransverseDensity, WeightedPoint};
use crate::constants::{working_band, ELEMENTARY_CHARGE, FINE_STRUCTURE, HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::geometry::WaveguideGeometry;
use crate::modesolver::{FamilyDispersion, ModeSolution, Polarization};
use crate::numeric::{linspace, trapezoid, CubicSpline};

/// Label of the non-guided channel in spectra and exports.
pub const BACKGROUND: &str = "background";

/// Density in s from the modal quantities at one frequency.
pub fn density_from_parts(omega: f64, n_eff: f64, n_g: f64, uz_sq: f64, beam: &BeamParams) -> f64 {
    let v_g = SPEED_OF_LIGHT / n_g;
    let delta = n_eff * omega / SPEED_OF_LIGHT - omega / beam.velocity();
    let w = beam.window.transform(0.5 * delta * beam.length);
    FINE_STRUCTURE * SPEED_OF_LIGHT / (omega * v_g) * uz_sq * beam.length * beam.length * w * w
}

/// Density for a solved mode; the mode must carry a group index from tracking.
pub fn coupling_density(mode: &ModeSolution, beam: &BeamParams) -> Result<f64> {
    let n_g = mode
        .n_g
        .ok_or_else(|| Error::InvalidInput(format!("mode {} has no group index", mode.family)))?;
    let uz_sq = transverse_average(|x, y| mode.uz_sq_at(x, y), &beam_density(beam))?;
    Ok(density_from_parts(mode.omega, mode.n_eff, n_g, uz_sq, beam))
}

fn beam_density(beam: &BeamParams) -> TransverseDensity {
    TransverseDensity {
        points: beam.transverse_points(),
    }
}

/// `int |psi(R)|^2 f(R) d^2R` over a discrete density confined to the top cladding.
pub fn transverse_average(f: impl Fn(f64, f64) -> f64, density: &TransverseDensity) -> Result<f64> {
    density.validate()?;
    let mut acc = 0.0;
    for &WeightedPoint { x, y, weight } in &density.points {
        if weight > 0.0 && y <= 0.0 {
            return Err(Error::SupportViolation { x, y });
        }
        acc += weight * f(x, y);
    }
    Ok(acc)
}

/// Uniform frequency grid over the working band.
pub fn default_omega_grid(points: usize) -> Vec<f64> {
    let (lo, hi) = working_band();
    linspace(lo, hi, points)
}

/// Smooth representation of one family for evaluation on fine grids.
#[derive(Debug, Clone)]
pub struct FamilyInterpolant {
    pub family: String,
    pub polarization: Polarization,
    pub omega_min: f64,
    pub omega_max: f64,
    n_eff: CubicSpline,
    n_g: CubicSpline,
    ln_uz_sq: CubicSpline,
}

impl FamilyInterpolant {
    /// Splines `n_eff`, `n_g` and `ln |u_z|^2` (averaged over the beam's transverse
    /// density) through the family samples.
    pub fn new(family: &FamilyDispersion, beam: &BeamParams) -> Result<Self> {
        if family.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: family.len(),
            });
        }
        let density = beam_density(beam);
        let mut raw = Vec::with_capacity(family.len());
        for f in family.fields.iter().flatten() {
            for p in &density.points {
                if !f.window.contains(p.x, p.y) {
                    return Err(Error::InvalidInput(format!(
                        "beam point ({:.3e}, {:.3e}) m lies outside the stored field window of {}",
                        p.x, p.y, family.family
                    )));
                }
            }
        }
        let mut per_point: Vec<Vec<f64>> = Vec::with_capacity(density.points.len());
        for p in &density.points {
            per_point.push(family.uz_sq_curve(p.x, p.y));
        }
        for k in 0..family.len() {
            let mut avg = 0.0;
            for (p, curve) in density.points.iter().zip(&per_point) {
                if p.y <= 0.0 && p.weight > 0.0 {
                    return Err(Error::SupportViolation { x: p.x, y: p.y });
                }
                avg += p.weight * curve[k];
            }
            raw.push(avg.max(f64::MIN_POSITIVE).ln());
        }
        let (lo, hi) = family.omega_range();
        Ok(Self {
            family: family.family.clone(),
            polarization: family.polarization,
            omega_min: lo,
            omega_max: hi,
            n_eff: CubicSpline::new(&family.omega, &family.n_eff)?,
            n_g: CubicSpline::new(&family.omega, &family.n_g)?,
            ln_uz_sq: CubicSpline::new(&family.omega, &raw)?,
        })
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.omega_min * (1.0 - 1e-12) && omega <= self.omega_max * (1.0 + 1e-12)
    }

    pub fn n_eff(&self, omega: f64) -> f64 {
        self.n_eff.eval(omega)
    }

    pub fn n_g(&self, omega: f64) -> f64 {
        self.n_g.eval(omega)
    }

    pub fn uz_sq(&self, omega: f64) -> f64 {
        self.ln_uz_sq.eval(omega).exp()
    }

    pub fn n_g_derivative(&self, omega: f64) -> f64 {
        self.n_g.derivative(omega)
    }

    /// Frequency where `n_eff = 1/beta`, if the family reaches it.
    pub fn phase_matched_omega(&self, beta: f64) -> Option<f64> {
        let f = |w: f64| self.n_eff(w) - 1.0 / beta;
        let n = 256;
        let step = (self.omega_max - self.omega_min) / n as f64;
        let mut a = self.omega_min;
        let mut fa = f(a);
        for k in 1..=n {
            let b = self.omega_min + k as f64 * step;
            let fb = f(b);
            if fa == 0.0 {
                return Some(a);
            }
            if fa * fb < 0.0 {
                let (mut lo, mut hi, mut flo) = (a, b, fa);
                for _ in 0..100 {
                    let m = 0.5 * (lo + hi);
                    let fm = f(m);
                    if fm * flo > 0.0 {
                        lo = m;
                        flo = fm;
                    } else {
                        hi = m;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
            a = b;
            fa = fb;
        }
        None
    }

    /// Density at `omega`; zero outside the family's guided range.
    pub fn density(&self, omega: f64, beam: &BeamParams) -> f64 {
        if !self.contains(omega) {
            return 0.0;
        }
        density_from_parts(omega, self.n_eff(omega), self.n_g(omega), self.uz_sq(omega), beam)
    }
}

/// Sampled coupling densities (s) of every family plus the background channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpectrum {
    pub omega: Vec<f64>,
    pub per_family: BTreeMap<String, Vec<f64>>,
    pub background: Vec<f64>,
    pub beam: BeamParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<WaveguideGeometry>,
}

impl CouplingSpectrum {
    pub fn new(omega: Vec<f64>, per_family: BTreeMap<String, Vec<f64>>, background: Vec<f64>, beam: BeamParams) -> Result<Self> {
        let n = omega.len();
        if omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("spectrum frequencies must ascend".into()));
        }
        if background.len() != n || per_family.values().any(|v| v.len() != n) {
            return Err(Error::InvalidInput("spectrum arrays must match the frequency grid".into()));
        }
        if background.iter().chain(per_family.values().flatten()).any(|&d| !(d >= 0.0)) {
            return Err(Error::InvalidInput("coupling densities must be non-negative".into()));
        }
        Ok(Self {
            omega,
            per_family,
            background,
            beam,
            geometry: None,
        })
    }

    pub fn family(&self, name: &str) -> Result<&[f64]> {
        if name == BACKGROUND {
            return Ok(&self.background);
        }
        self.per_family
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownFamily(name.to_string()))
    }

    /// Sum over families and background at each frequency.
    pub fn total(&self) -> Vec<f64> {
        let mut t = self.background.clone();
        for v in self.per_family.values() {
            t.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        t
    }

    /// Channels including the background, in export order.
    pub fn channels(&self) -> Vec<(&str, &[f64])> {
        let mut out: Vec<(&str, &[f64])> = self.per_family.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        out.push((BACKGROUND, &self.background));
        out
    }

    /// Density per eV instead of per rad/s.
    pub fn per_ev(density: f64) -> f64 {
        density * ELEMENTARY_CHARGE / HBAR
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.per_family.values_mut().flatten().for_each(|d| *d *= factor);
        s.background.iter_mut().for_each(|d| *d *= factor);
        s
    }
}

/// Evaluates every family on `omega`; background starts at zero.
pub fn coupling_spectrum(families: &[FamilyInterpolant], beam: &BeamParams, omega: &[f64]) -> Result<CouplingSpectrum> {
    beam.validate()?;
    let mut per_family = BTreeMap::new();
    for f in families {
        per_family.insert(f.family.clone(), omega.iter().map(|&w| f.density(w, beam)).collect());
    }
    CouplingSpectrum::new(omega.to_vec(), per_family, vec![0.0; omega.len()], beam.clone())
}

/// Inserts `factor - 1` points into every interval where some family exceeds
/// `threshold` of its own peak at either end.
pub fn refine_omega_grid(spectrum: &CouplingSpectrum, factor: usize, threshold: f64) -> Vec<f64> {
    let w = &spectrum.omega;
    let mut active = vec![false; w.len().saturating_sub(1)];
    for v in spectrum.per_family.values() {
        let peak = v.iter().cloned().fold(0.0, f64::max);
        if peak <= 0.0 {
            continue;
        }
        for k in 0..active.len() {
            if v[k] > threshold * peak || v[k + 1] > threshold * peak {
                active[k] = true;
            }
        }
    }
    let mut out = Vec::with_capacity(w.len() * 2);
    for k in 0..active.len() {
        out.push(w[k]);
        if active[k] && factor > 1 {
            for s in 1..factor {
                out.push(w[k] + (w[k + 1] - w[k]) * s as f64 / factor as f64);
            }
        }
    }
    if let Some(&last) = w.last() {
        out.push(last);
    }
    out
}

/// Spectrum on the default grid, refined inside detected bands.
pub fn coupling_spectrum_refined(
    families: &[FamilyInterpolant],
    beam: &BeamParams,
    base_points: usize,
    factor: usize,
) -> Result<CouplingSpectrum> {
    let coarse = coupling_spectrum(families, beam, &default_omega_grid(base_points))?;
    let grid = refine_omega_grid(&coarse, factor, 1e-3);
    coupling_spectrum(families, beam, &grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandOptions {
    /// Window bounds: first and last samples above this fraction of the peak.
    pub window_threshold: f64,
    /// Maximum density at either grid edge relative to the peak.
    pub edge_threshold: f64,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            window_threshold: 1e-4,
            edge_threshold: 1e-3,
        }
    }
}

/// Index bounds of the band window of `density`.
pub fn band_window(density: &[f64], opts: &BandOptions) -> Option<(usize, usize)> {
    let peak = density.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return None;
    }
    let lo = density.iter().position(|&d| d > opts.window_threshold * peak)?;
    let hi = density.iter().rposition(|&d| d > opts.window_threshold * peak)?;
    Some((lo, hi))
}

/// Band-integrated strength `|g_m|^2` (dimensionless) of one channel.
///
/// The window spans the first to the last sample above the window threshold,
/// so the sidelobes between are included.
pub fn integrated_strength(spectrum: &CouplingSpectrum, family: &str) -> Result<f64> {
    integrated_strength_with(spectrum, family, &BandOptions::default())
}

pub fn integrated_strength_with(spectrum: &CouplingSpectrum, family: &str, opts: &BandOptions) -> Result<f64> {
    let d = spectrum.family(family)?;
    let Some((lo, hi)) = band_window(d, opts) else {
        return Ok(0.0);
    };
    let peak = d.iter().cloned().fold(0.0, f64::max);
    let edge = d[0].max(d[d.len() - 1]) / peak;
    if edge >= opts.edge_threshold {
        return Err(Error::BandTruncated {
            family: family.to_string(),
            edge_ratio: edge,
        });
    }
    Ok(trapezoid(&spectrum.omega[lo..=hi], &d[lo..=hi]))
}

/// Closed-form band integral for a rectangular window and weak dispersion:
/// `2 pi alpha c L |u_z|^2 / (w |1 - v_g / v|)`.
pub fn integrated_strength_closed_form(omega: f64, n_g: f64, uz_sq: f64, beam: &BeamParams) -> f64 {
    let v_g = SPEED_OF_LIGHT / n_g;
    2.0 * std::f64::consts::PI * FINE_STRUCTURE * SPEED_OF_LIGHT * beam.length * uz_sq
        / (omega * (1.0 - v_g / beam.velocity()).abs())
        * beam.window.energy_factor()
}

/// Velocity-frequency coupling map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMap {
    pub beta: Vec<f64>,
    pub omega: Vec<f64>,
    /// `per_family[name][i_beta][i_omega]`.
    pub per_family: BTreeMap<String, Vec<Vec<f64>>>,
    pub background: Vec<Vec<f64>>,
    /// Cells whose value could not be computed.
    pub failed: Vec<Vec<bool>>,
}

impl CouplingMap {
    pub fn total(&self, i_beta: usize, i_omega: usize) -> f64 {
        self.background[i_beta][i_omega]
            + self
                .per_family
                .values()
                .map(|m| m[i_beta][i_omega])
                .sum::<f64>()
    }

    pub fn check_dimensions(&self) -> bool {
        let (nb, nw) = (self.beta.len(), self.omega.len());
        let ok = |m: &Vec<Vec<f64>>| m.len() == nb && m.iter().all(|r| r.len() == nw);
        ok(&self.background) && self.per_family.values().all(ok) && self.failed.len() == nb && self.failed.iter().all(|r| r.len() == nw)
    }
}

/// Evaluates every family on the `(beta, omega)` grid. `background(beam, omega)`
/// supplies the non-guided channel; cells where it fails are marked failed.
/// `failed_omega` marks frequencies whose underlying solves failed.
pub fn coupling_map(
    families: &[FamilyInterpolant],
    beam_template: &BeamParams,
    beta: &[f64],
    omega: &[f64],
    background: impl Fn(&BeamParams, f64) -> Result<f64> + Sync,
    failed_omega: &dyn Fn(f64) -> bool,
) -> Result<CouplingMap> {
    use rayon::prelude::*;
    if beta.is_empty() || omega.is_empty() {
        return Err(Error::InvalidInput("map grids must be non-empty".into()));
    }
    if beta.windows(2).any(|w| !(w[1] > w[0])) || omega.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("map grids must ascend".into()));
    }
    let beams: Vec<BeamParams> = beta.iter().map(|&b| beam_template.with_beta(b)).collect::<Result<_>>()?;
    let omega_failed: Vec<bool> = omega.iter().map(|&w| failed_omega(w)).collect();
    let rows: Vec<(Vec<Vec<f64>>, Vec<f64>, Vec<bool>)> = beams
        .par_iter()
        .map(|beam| {
            let fam: Vec<Vec<f64>> = families
                .iter()
                .map(|f| omega.iter().map(|&w| f.density(w, beam)).collect())
                .collect();
            let mut failed = omega_failed.clone();
            let bg: Vec<f64> = omega
                .iter()
                .enumerate()
                .map(|(k, &w)| match background(beam, w) {
                    Ok(v) => v,
                    Err(e) => {
                        log::warn!("background failed at beta {:.4}, omega {w:.4e}: {e}", beam.beta);
                        failed[k] = true;
                        f64::NAN
                    }
                })
                .collect();
            (fam, bg, failed)
        })
        .collect();
    let mut per_family: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut bg_rows = Vec::with_capacity(beta.len());
    let mut failed_rows = Vec::with_capacity(beta.len());
    for (fam, bg, failed) in rows {
        for (f, row) in families.iter().zip(fam) {
            per_family.entry(f.family.clone()).or_default().push(row);
        }
        bg_rows.push(bg);
        failed_rows.push(failed);
    }
    Ok(CouplingMap {
        beta: beta.to_vec(),
        omega: omega.to_vec(),
        per_family,
        background: bg_rows,
        failed: failed_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::Window;
    use crate::constants::ev_to_omega;
    use proptest::prelude::*;

    fn beam(l: f64) -> BeamParams {
        BeamParams::new(0.65, 100e-9, l).unwrap()
    }

    /// `|int_0^L e^{i Delta z} w(z) dz|^2` by composite Simpson quadrature on `n` intervals.
    fn brute_force_window(delta: f64, l: f64, window: Window, n: usize) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        let dz = l / n as f64;
        for k in 0..=n {
            let z = k as f64 * dz;
            let c = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let w = c * window.weight(z / l) * dz / 3.0;
            re += w * (delta * z).cos();
            im += w * (delta * z).sin();
        }
        re * re + im * im
    }

    #[test]
    fn phase_matched_density_matches_closed_form() {
        let b = beam(50e-6);
        let omega = ev_to_omega(0.8);
        let n_eff = 1.0 / b.beta;
        let d = density_from_parts(omega, n_eff, 2.0, 1e10, &b);
        let expected = FINE_STRUCTURE * SPEED_OF_LIGHT * b.length.powi(2) * 1e10 / (omega * SPEED_OF_LIGHT / 2.0);
        assert!((d - expected).abs() < 1e-12 * expected);
        let d2 = density_from_parts(omega, n_eff, 2.0, 1e10, &beam(100e-6));
        assert!((d2 / d - 4.0).abs() < 1e-12);
    }

    #[test]
    fn window_transform_matches_brute_force_integral() {
        let l = 50e-6;
        for window in [Window::Rectangular, Window::Blackman] {
            for &delta in &[0.0, 1e4, 7.3e4, 2.0e5] {
                let brute = brute_force_window(delta, l, window, 10_000);
                let norm = brute_force_window(0.0, l, window, 10_000);
                let closed = window.transform(0.5 * delta * l).powi(2);
                if closed > 1e-6 {
                    assert!((brute / norm - closed).abs() < 1e-8 * closed, "{window:?} {delta}");
                } else {
                    assert!((brute / norm - closed).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn point_and_two_point_averages() {
        let f = |x: f64, y: f64| 3.0 * x + y * y;
        let p = TransverseDensity::point(0.1, 0.2);
        assert_eq!(transverse_average(f, &p).unwrap(), f(0.1, 0.2));
        let two = TransverseDensity::new(vec![
            WeightedPoint { x: 0.0, y: 0.1, weight: 0.5 },
            WeightedPoint { x: 1.0, y: 0.3, weight: 0.5 },
        ])
        .unwrap();
        let avg = transverse_average(f, &two).unwrap();
        assert!((avg - 0.5 * (f(0.0, 0.1) + f(1.0, 0.3))).abs() < 1e-15);
        let inside = TransverseDensity::point(0.0, -1e-9);
        assert!(matches!(transverse_average(f, &inside), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn gaussian_average_converges_to_center_value() {
        let f = |x: f64, y: f64| (-(2.0 * y / 1e-7)).exp() * (1.0 + (x / 1e-6).powi(2));
        let center = f(0.0, 100e-9);
        let mut errors = Vec::new();
        for &sigma in &[20e-9, 10e-9, 5e-9, 2.5e-9] {
            let d = TransverseDensity::gaussian(0.0, 100e-9, sigma, 8, 4.0).unwrap();
            errors.push((transverse_average(f, &d).unwrap() - center).abs() / center);
        }
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
        assert!(errors[3] < 2e-3);
    }

    #[test]
    fn band_window_and_truncation() {
        let omega = linspace(1.0, 2.0, 201);
        let bump: Vec<f64> = omega.iter().map(|w| (-((w - 1.5) / 0.05).powi(2)).exp()).collect();
        let mut fams = BTreeMap::new();
        fams.insert("a".to_string(), bump.clone());
        let s = CouplingSpectrum::new(omega.clone(), fams, vec![0.0; 201], beam(1e-5)).unwrap();
        let g = integrated_strength(&s, "a").unwrap();
        let exact = 0.05 * std::f64::consts::PI.sqrt();
        assert!((g - exact).abs() < 1e-4 * exact);
        let shifted: Vec<f64> = omega.iter().map(|w| (-((w - 1.02) / 0.05).powi(2)).exp()).collect();
        let mut fams = BTreeMap::new();
        fams.insert("edge".to_string(), shifted);
        let s = CouplingSpectrum::new(omega, fams, vec![0.0; 201], beam(1e-5)).unwrap();
        assert!(matches!(integrated_strength(&s, "edge"), Err(Error::BandTruncated { .. })));
        assert!(matches!(integrated_strength(&s, "nope"), Err(Error::UnknownFamily(_))));
    }

    proptest! {
        #[test]
        fn density_is_gauge_and_sign_invariant(u in 1e6f64..1e12, n_eff in 1.45f64..1.9, omega_ev in 0.5f64..1.6) {
            let b = beam(50e-6);
            let w = ev_to_omega(omega_ev);
            let plus = density_from_parts(w, n_eff, 2.0, u * u, &b);
            let minus = density_from_parts(w, n_eff, 2.0, (-u) * (-u), &b);
            prop_assert_eq!(plus, minus);
            prop_assert!(plus >= 0.0);
        }

        #[test]
        fn quanta_per_bandwidth_survive_unit_rescaling(s in 1e-3f64..1e3, delta_frac in -0.02f64..0.02) {
            // lengths in units shrunk by s: L -> L/s, omega -> s omega, |u_z|^2 -> s^2 |u_z|^2;
            // |g|^2 d omega is a pure number and must not change
            let b = beam(50e-6);
            let w = ev_to_omega(0.8);
            let n_eff = (1.0 + delta_frac) / b.beta;
            let q = density_from_parts(w, n_eff, 2.0, 1e11, &b) * (1e-3 * w);
            let b_s = BeamParams { length: b.length / s, ..b.clone() };
            let q_s = density_from_parts(s * w, n_eff, 2.0, 1e11 * s * s, &b_s) * (1e-3 * s * w);
            prop_assert!((q - q_s).abs() <= 1e-10 * q.max(1e-300));
        }
    }
}
