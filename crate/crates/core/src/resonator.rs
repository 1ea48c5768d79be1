//! Closed-loop resonator combs built from open-waveguide coupling spectra.
//!
//! Each cavity resonance reshapes the open density by a Lorentzian
//! susceptibility whose FSR average is one, so integrated quanta are
//! conserved while peaks are enhanced by `2F/pi`. The background channel is
//! not resonant and passes through unchanged.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{ELEMENTARY_CHARGE, HBAR};
use crate::coupling::CouplingSpectrum;
use crate::error::{Error, Result};
use crate::numeric::{linspace, CubicSpline};

/// Minimum comb margin beyond the spectrum band, in FSRs.
pub const MIN_MARGIN_FSR: usize = 5;
/// Bound on the comb truncation error relative to the FSR-average of one.
pub const TRUNCATION_TOLERANCE: f64 = 1e-4;
pub const MIN_POINTS_PER_LINEWIDTH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Free spectral range (Hz).
    pub fsr: f64,
    pub finesse: f64,
    /// One resonance of the comb (rad/s).
    pub anchor_omega: f64,
}

impl ResonatorParams {
    pub fn new(fsr: f64, finesse: f64, anchor_omega: f64) -> Result<Self> {
        let p = Self { fsr, finesse, anchor_omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fsr > 0.0 && self.finesse > 1.0 && self.anchor_omega.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "resonator needs fsr > 0 and finesse > 1 (fsr {}, finesse {})",
                self.fsr, self.finesse
            )));
        }
        Ok(())
    }

    /// Angular FSR (rad/s).
    pub fn fsr_angular(&self) -> f64 {
        2.0 * PI * self.fsr
    }

    /// Angular linewidth `kappa = FSR / F` (rad/s).
    pub fn linewidth(&self) -> f64 {
        self.fsr_angular() / self.finesse
    }

    pub fn round_trip_time(&self) -> f64 {
        1.0 / self.fsr
    }

    /// Margin in FSRs that keeps the analytic tail bound below the tolerance.
    pub fn margin_fsr(&self) -> usize {
        let m = (1.0 / (PI * self.finesse * TRUNCATION_TOLERANCE)).ceil() as usize + 2;
        m.max(MIN_MARGIN_FSR)
    }

    /// Upper bound on the omitted comb terms for points inside the band.
    ///
    /// Each omitted term is below `(2/pi) F / (4 k^2 F^2)`; summing both sides
    /// from `k = M` gives `1 / (pi F (M - 1))`.
    pub fn truncation_bound(&self) -> f64 {
        1.0 / (PI * self.finesse * (self.margin_fsr() as f64 - 1.0))
    }
}

/// `chi = (2/pi) F / (1 + 4 (w - w0)^2 / kappa^2)`.
pub fn susceptibility(omega: f64, omega0: f64, params: &ResonatorParams) -> f64 {
    let d = 2.0 * (omega - omega0) / params.linewidth();
    2.0 / PI * params.finesse / (1.0 + d * d)
}

/// Resonance frequencies covering `[lo, hi]` plus the margin.
pub fn comb_frequencies(lo: f64, hi: f64, params: &ResonatorParams) -> Vec<f64> {
    let step = params.fsr_angular();
    let m = params.margin_fsr() as f64;
    let first = ((lo - params.anchor_omega) / step).floor() - m;
    let last = ((hi - params.anchor_omega) / step).ceil() + m;
    (first as i64..=last as i64).map(|k| params.anchor_omega + k as f64 * step).collect()
}

pub fn comb_factor(omega: &[f64], comb: &[f64], params: &ResonatorParams) -> Vec<f64> {
    omega
        .par_iter()
        .map(|&w| comb.iter().map(|&w0| susceptibility(w, w0, params)).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorOptions {
    /// Largest grid the automatic refinement may build.
    pub max_points: usize,
}

impl Default for ResonatorOptions {
    fn default() -> Self {
        Self { max_points: 4_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorSpectrum {
    pub spectrum: CouplingSpectrum,
    pub params: ResonatorParams,
    /// Sum of susceptibilities on the spectrum grid.
    pub comb: Vec<f64>,
    pub resonances: Vec<f64>,
    pub refined: bool,
    pub truncation_bound: f64,
    pub round_trip_time: f64,
}

impl ResonatorSpectrum {
    /// Electron-side coherence time `h / dE` for a zero-loss peak of width `zlp_fwhm_ev`.
    pub fn zlp_coherence_time(zlp_fwhm_ev: f64) -> f64 {
        2.0 * PI * HBAR / (zlp_fwhm_ev * ELEMENTARY_CHARGE)
    }

    /// Whether the spectrometer could separate neighbouring comb lines.
    pub fn comb_resolvable(&self, zlp_fwhm_ev: f64) -> bool {
        Self::zlp_coherence_time(zlp_fwhm_ev) > self.round_trip_time
    }
}

fn resample(x: &[f64], y: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let s = CubicSpline::new(x, y)?;
    Ok(grid.iter().map(|&t| s.eval(t).max(0.0)).collect())
}

/// Multiplies every family density by the comb; the background is unchanged.
///
/// A grid with fewer than eight points per linewidth is replaced by a uniform
/// grid at eight points per linewidth with spline-resampled densities, unless
/// that grid would exceed `opts.max_points`.
pub fn resonator_spectrum(open: &CouplingSpectrum, params: &ResonatorParams, opts: &ResonatorOptions) -> Result<ResonatorSpectrum> {
    params.validate()?;
    let n = open.omega.len();
    if n < 2 {
        return Err(Error::InvalidInput("resonator needs a spectrum with >= 2 frequencies".into()));
    }
    let kappa = params.linewidth();
    let (lo, hi) = (open.omega[0], open.omega[n - 1]);
    let max_step = open.omega.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let ppl = kappa / max_step;
    let (spectrum, refined) = if ppl >= MIN_POINTS_PER_LINEWIDTH {
        (open.clone(), false)
    } else {
        let required = ((hi - lo) / (kappa / MIN_POINTS_PER_LINEWIDTH)).ceil() as usize + 1;
        if required > opts.max_points {
            return Err(Error::UnderResolvedComb {
                points_per_linewidth: ppl,
                required,
                cap: opts.max_points,
            });
        }
        log::info!("refining comb grid from {n} to {required} points ({ppl:.2} points per linewidth)");
        let grid = linspace(lo, hi, required);
        let mut per_family = std::collections::BTreeMap::new();
        for (k, v) in &open.per_family {
            per_family.insert(k.clone(), resample(&open.omega, v, &grid)?);
        }
        let background = resample(&open.omega, &open.background, &grid)?;
        let mut s = CouplingSpectrum::new(grid, per_family, background, open.beam.clone())?;
        s.geometry = open.geometry.clone();
        (s, true)
    };
    let bound = params.truncation_bound();
    assert!(bound < TRUNCATION_TOLERANCE, "comb margin too small: bound {bound}");
    let resonances = comb_frequencies(lo, hi, params);
    let comb = comb_factor(&spectrum.omega, &resonances, params);
    let mut out = spectrum;
    for v in out.per_family.values_mut() {
        v.iter_mut().zip(&comb).for_each(|(d, c)| *d *= c);
    }
    Ok(ResonatorSpectrum {
        spectrum: out,
        params: *params,
        comb,
        resonances,
        refined,
        truncation_bound: bound,
        round_trip_time: params.round_trip_time(),
    })
}

/// Number of resonances inside one phase-matching band, `1 / |n_g - n_eff|`.
pub fn modes_in_band(n_g: f64, n_eff: f64) -> Result<f64> {
    let d = (n_g - n_eff).abs();
    if d < 1e-9 {
        return Err(Error::DegenerateDispersion(d));
    }
    Ok(1.0 / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam::BeamParams;
    use crate::numeric::trapezoid;
    use std::collections::BTreeMap;

    const FSR: f64 = 100e9;

    fn gaussian_spectrum(center: f64, fwhm: f64, span: f64, points: usize) -> CouplingSpectrum {
        let omega = linspace(center - span / 2.0, center + span / 2.0, points);
        let s = fwhm / 2.354_820_045;
        let d: Vec<f64> = omega.iter().map(|w| (-0.5 * ((w - center) / s).powi(2)).exp()).collect();
        let bg = vec![0.25; points];
        CouplingSpectrum::new(omega, BTreeMap::from([("TM00".to_string(), d)]), bg, BeamParams::new(0.65, 100e-9, 1e-4).unwrap()).unwrap()
    }

    #[test]
    fn susceptibility_shape() {
        let p = ResonatorParams::new(FSR, 50.0, 1e15).unwrap();
        assert!((susceptibility(1e15, 1e15, &p) - 100.0 / PI).abs() < 1e-12);
        let half = susceptibility(1e15 + 0.5 * p.linewidth(), 1e15, &p);
        assert!((half / susceptibility(1e15, 1e15, &p) - 0.5).abs() < 1e-9);
        // isolated resonance integrates to one angular FSR
        let w = linspace(1e15 - 4000.0 * p.linewidth(), 1e15 + 4000.0 * p.linewidth(), 2_000_001);
        let chi: Vec<f64> = w.iter().map(|&x| susceptibility(x, 1e15, &p)).collect();
        assert!((trapezoid(&w, &chi) / p.fsr_angular() - 1.0).abs() < 2e-4);
        assert!(ResonatorParams::new(FSR, 1.0, 0.0).is_err());
        assert!(ResonatorParams::new(0.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn truncation_bound_holds_for_all_finesses() {
        for f in [1.01, 10.0, 100.0, 1000.0] {
            let p = ResonatorParams::new(FSR, f, 0.0).unwrap();
            assert!(p.truncation_bound() < TRUNCATION_TOLERANCE);
            assert!(p.margin_fsr() >= MIN_MARGIN_FSR);
        }
    }

    #[test]
    fn quanta_are_conserved_and_peaks_enhanced() {
        let step = 2.0 * PI * FSR;
        let center = 1.2e15;
        for f in [10.0, 100.0, 1000.0] {
            let p = ResonatorParams::new(FSR, f, center).unwrap();
            let open = gaussian_spectrum(center, 12.0 * step, 60.0 * step, 4001);
            let r = resonator_spectrum(&open, &p, &ResonatorOptions::default()).unwrap();
            let g_open = trapezoid(&open.omega, open.family("TM00").unwrap());
            let g_comb = trapezoid(&r.spectrum.omega, r.spectrum.family("TM00").unwrap());
            assert!((g_comb / g_open - 1.0).abs() < 5e-3, "F {f}: {g_comb} vs {g_open}");
            // peak at the anchor resonance
            let k = r.spectrum.omega.partition_point(|&w| w < center);
            let open_peak = 1.0;
            let comb_peak = r.spectrum.family("TM00").unwrap()[k].max(r.spectrum.family("TM00").unwrap()[k - 1]);
            assert!((comb_peak / open_peak / (2.0 * f / PI) - 1.0).abs() < 1e-2, "F {f}");
            assert_eq!(r.spectrum.background, r.spectrum.background.iter().map(|_| 0.25).collect::<Vec<_>>());
            assert!(r.refined);
        }
    }

    #[test]
    fn comb_peaks_sit_on_resonances() {
        let step = 2.0 * PI * FSR;
        let p = ResonatorParams::new(FSR, 40.0, 1.0e15).unwrap();
        let open = gaussian_spectrum(1.0e15, 6.0 * step, 20.0 * step, 20_001);
        let r = resonator_spectrum(&open, &p, &ResonatorOptions::default()).unwrap();
        let w = &r.spectrum.omega;
        let d = r.spectrum.family("TM00").unwrap();
        let h = w[1] - w[0];
        for k in 1..w.len() - 1 {
            if d[k] > d[k - 1] && d[k] >= d[k + 1] && d[k] > 1e-3 * d.iter().cloned().fold(0.0, f64::max) {
                let nearest = r.resonances.iter().map(|&c| (c - w[k]).abs()).fold(f64::INFINITY, f64::min);
                assert!(nearest <= h, "peak at {} off by {nearest}", w[k]);
            }
        }
    }

    #[test]
    fn flat_spectrum_integrates_to_input_over_whole_fsrs() {
        let step = 2.0 * PI * FSR;
        let p = ResonatorParams::new(FSR, 25.0, 0.3 * step).unwrap();
        let omega = linspace(0.0, 7.0 * step, 14_001);
        let flat = vec![1.0; omega.len()];
        let c = comb_factor(&omega, &comb_frequencies(0.0, 7.0 * step, &p), &p);
        assert!((trapezoid(&omega, &c) / trapezoid(&omega, &flat) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn low_finesse_keeps_the_shape() {
        let step = 2.0 * PI * FSR;
        let p = ResonatorParams::new(FSR, 1.01, 1.0e15).unwrap();
        let open = gaussian_spectrum(1.0e15, 12.0 * step, 40.0 * step, 4001);
        let r = resonator_spectrum(&open, &p, &ResonatorOptions::default()).unwrap();
        let a = open.family("TM00").unwrap();
        let b = r.spectrum.family("TM00").unwrap();
        for (x, y) in a.iter().zip(b) {
            if *x > 1e-3 {
                assert!((y / x - 1.0).abs() < 0.15);
            }
        }
    }

    #[test]
    fn under_resolved_grid_beyond_cap_errors() {
        let p = ResonatorParams::new(FSR, 1e4, 1e15).unwrap();
        let open = gaussian_spectrum(1e15, 1e13, 1e14, 101);
        let e = resonator_spectrum(&open, &p, &ResonatorOptions { max_points: 10_000 });
        assert!(matches!(e, Err(Error::UnderResolvedComb { .. })));
    }

    #[test]
    fn mode_count_estimate() {
        assert!((modes_in_band(2.0, 1.9).unwrap() - 10.0).abs() < 1e-9);
        assert!(modes_in_band(3.5, 1.5).unwrap() < 1.0);
        assert!(matches!(modes_in_band(1.8, 1.8), Err(Error::DegenerateDispersion(_))));
    }

    #[test]
    fn electron_resolvability_flag() {
        let p = ResonatorParams::new(FSR, 100.0, 1e15).unwrap();
        let open = gaussian_spectrum(1e15, 1e13, 2e13, 2001);
        let r = resonator_spectrum(&open, &p, &ResonatorOptions::default()).unwrap();
        // 0.5 eV resolution is far coarser than a 0.4 meV comb spacing
        assert!(!r.comb_resolvable(0.5));
        assert!(r.comb_resolvable(1e-4));
    }
}
