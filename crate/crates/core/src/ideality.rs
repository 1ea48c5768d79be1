//! Coupling ideality with and without sideband filtering, and the gap trade-off.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::background::{background_spectrum, BackgroundModel};
use crate::beam::BeamParams;
use crate::constants::{ev_to_omega, omega_to_ev};
use crate::coupling::{coupling_spectrum_refined, integrated_strength, CouplingSpectrum, BACKGROUND};
use crate::error::{Error, Result};
use crate::material::MaterialModel;
use crate::numeric::trapezoid;
use crate::sweep::Sweep;

pub const DEFAULT_TARGET: &str = "TM00";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdealityOptions {
    /// Zero-loss-peak full width at half maximum (eV).
    pub zlp_fwhm_ev: f64,
    /// Half-width of the sideband gate in units of the ZLP FWHM.
    pub window_fwhm: f64,
    pub background: Option<BackgroundModel>,
    /// Base frequency grid size before band refinement.
    pub grid_points: usize,
    pub refine: usize,
}

impl Default for IdealityOptions {
    fn default() -> Self {
        Self {
            zlp_fwhm_ev: 0.5,
            window_fwhm: 1.0,
            background: Some(BackgroundModel::PlanarInterface),
            grid_points: 600,
            refine: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealityReport {
    pub target_family: String,
    pub ideality: f64,
    pub ideality_filtered: f64,
    /// Band-window strength of the target.
    pub target_strength: f64,
    /// Full-grid integral of every guided channel.
    pub per_family: BTreeMap<String, f64>,
    pub background: f64,
    pub total: f64,
    pub zlp_fwhm_ev: f64,
    pub window_fwhm: f64,
    /// Families whose convolved peak falls inside the sideband gate.
    pub overlap_warnings: Vec<String>,
    pub beam: BeamParams,
}

fn peak(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

/// `I`: target share of all quanta on the grid, background included.
pub fn ideality_full(spectrum: &CouplingSpectrum, target: &str) -> Result<f64> {
    // the band edge condition applies to the target only
    integrated_strength(spectrum, target)?;
    let total = trapezoid(&spectrum.omega, &spectrum.total());
    if total <= 0.0 {
        return Err(Error::InvalidInput("spectrum carries no coupling".into()));
    }
    Ok(trapezoid(&spectrum.omega, spectrum.family(target)?) / total)
}

/// Channels convolved with a unit-area Gaussian in photon energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolvedSpectrum {
    pub energy_ev: Vec<f64>,
    pub channels: BTreeMap<String, Vec<f64>>,
}

impl ConvolvedSpectrum {
    pub fn total(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.energy_ev.len()];
        for c in self.channels.values() {
            t.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
        t
    }
}

/// Gaussian convolution of every channel on a uniform energy grid that covers
/// the input band plus 7 standard deviations on either side, so the integral
/// of each channel is preserved.
pub fn convolve_zlp(spectrum: &CouplingSpectrum, fwhm_ev: f64) -> Result<ConvolvedSpectrum> {
    if !(fwhm_ev > 0.0) {
        return Err(Error::InvalidInput(format!("ZLP FWHM must be positive, got {fwhm_ev}")));
    }
    let sigma = fwhm_ev / (8.0 * std::f64::consts::LN_2).sqrt();
    let e: Vec<f64> = spectrum.omega.iter().map(|&w| omega_to_ev(w)).collect();
    let (lo, hi) = (e[0] - 7.0 * sigma, e[e.len() - 1] + 7.0 * sigma);
    let step = sigma / 20.0;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| lo + k as f64 * step).collect();
    // trapezoid weights on the input energy axis; densities are per unit energy
    let mut wts = vec![0.0; e.len()];
    for k in 0..e.len().saturating_sub(1) {
        let h = 0.5 * (e[k + 1] - e[k]);
        wts[k] += h;
        wts[k + 1] += h;
    }
    let dw_de = ev_to_omega(1.0);
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut channels = BTreeMap::new();
    for (name, d) in spectrum.channels() {
        let out: Vec<f64> = grid
            .iter()
            .map(|&x| {
                let mut acc = 0.0;
                for k in 0..e.len() {
                    if d[k] == 0.0 {
                        continue;
                    }
                    let u = (x - e[k]) / sigma;
                    if u.abs() < 12.0 {
                        acc += wts[k] * d[k] * dw_de * norm * (-0.5 * u * u).exp();
                    }
                }
                acc
            })
            .collect();
        channels.insert(name.to_string(), out);
    }
    Ok(ConvolvedSpectrum { energy_ev: grid, channels })
}

/// `I*` and the families whose convolved peaks fall inside the gate.
pub fn ideality_filtered(spectrum: &CouplingSpectrum, target: &str, fwhm_ev: f64, window_fwhm: f64) -> Result<(f64, Vec<String>)> {
    spectrum.family(target)?;
    let conv = convolve_zlp(spectrum, fwhm_ev)?;
    let t = &conv.channels[target];
    let p = peak(t);
    if p <= 0.0 {
        return Err(Error::InvalidInput(format!("target `{target}` has no coupling")));
    }
    let k_peak = t.iter().position(|&v| v == p).unwrap_or(0);
    let e_peak = conv.energy_ev[k_peak];
    let (lo, hi) = (e_peak - window_fwhm * fwhm_ev, e_peak + window_fwhm * fwhm_ev);
    let idx: Vec<usize> = (0..conv.energy_ev.len()).filter(|&k| conv.energy_ev[k] >= lo && conv.energy_ev[k] <= hi).collect();
    let xs: Vec<f64> = idx.iter().map(|&k| conv.energy_ev[k]).collect();
    let total = conv.total();
    let num = trapezoid(&xs, &idx.iter().map(|&k| t[k]).collect::<Vec<_>>());
    let den = trapezoid(&xs, &idx.iter().map(|&k| total[k]).collect::<Vec<_>>());
    let target_strength: f64 = trapezoid(&conv.energy_ev, t);
    let mut warnings = Vec::new();
    for (name, c) in &conv.channels {
        if name == target || name == BACKGROUND {
            continue;
        }
        let cp = peak(c);
        if cp <= 0.0 || trapezoid(&conv.energy_ev, c) < 1e-4 * target_strength {
            continue;
        }
        let k = c.iter().position(|&v| v == cp).unwrap_or(0);
        if conv.energy_ev[k] >= lo && conv.energy_ev[k] <= hi {
            warnings.push(name.clone());
        }
    }
    Ok(((num / den).clamp(0.0, 1.0), warnings))
}

/// Full report for one spectrum.
pub fn ideality_report(spectrum: &CouplingSpectrum, target: &str, opts: &IdealityOptions) -> Result<IdealityReport> {
    let ideality = ideality_full(spectrum, target)?;
    let (ideality_filtered, overlap_warnings) = ideality_filtered(spectrum, target, opts.zlp_fwhm_ev, opts.window_fwhm)?;
    let per_family: BTreeMap<String, f64> = spectrum
        .per_family
        .iter()
        .map(|(k, v)| (k.clone(), trapezoid(&spectrum.omega, v)))
        .collect();
    let background = trapezoid(&spectrum.omega, &spectrum.background);
    let total = per_family.values().sum::<f64>() + background;
    Ok(IdealityReport {
        target_family: target.to_string(),
        ideality,
        ideality_filtered,
        target_strength: integrated_strength(spectrum, target)?,
        per_family,
        background,
        total,
        zlp_fwhm_ev: opts.zlp_fwhm_ev,
        window_fwhm: opts.window_fwhm,
        overlap_warnings,
        beam: spectrum.beam.clone(),
    })
}

/// Refined guided spectrum of a sweep plus the chosen background channel.
pub fn full_spectrum(sweep: &Sweep, beam: &BeamParams, substrate: &MaterialModel, opts: &IdealityOptions) -> Result<CouplingSpectrum> {
    let interpolants = sweep.interpolants(beam)?;
    let mut spectrum = coupling_spectrum_refined(&interpolants, beam, opts.grid_points, opts.refine)?;
    if let Some(model) = opts.background {
        spectrum.background = background_spectrum(substrate, model, beam, &spectrum.omega)?.density;
    }
    Ok(spectrum)
}

/// One report per gap, sharing the solved families; field profiles do not
/// depend on the trajectory.
pub fn gap_tradeoff(
    sweep: &Sweep,
    beam_template: &BeamParams,
    gaps: &[f64],
    substrate: &MaterialModel,
    target: &str,
    opts: &IdealityOptions,
) -> Result<Vec<IdealityReport>> {
    use rayon::prelude::*;
    if gaps.is_empty() {
        return Err(Error::InvalidInput("gap list is empty".into()));
    }
    if let Some(&g) = gaps.iter().find(|&&g| !(50e-9..=1e-6).contains(&g)) {
        return Err(Error::InvalidInput(format!("gap {g:.3e} m outside [50 nm, 1 um]")));
    }
    gaps.par_iter()
        .map(|&gap| {
            let beam = BeamParams {
                gap,
                ..beam_template.clone()
            };
            beam.validate()?;
            let spectrum = full_spectrum(sweep, &beam, substrate, opts)?;
            ideality_report(&spectrum, target, opts)
        })
        .collect()
}

/// Whether the curve shows decreasing target strength and increasing `I` with gap.
pub fn tradeoff_is_monotone(reports: &[IdealityReport]) -> (bool, bool) {
    let strength = reports.windows(2).all(|w| w[1].target_strength < w[0].target_strength);
    let ideality = reports.windows(2).all(|w| w[1].ideality >= w[0].ideality - 1e-12);
    (strength, ideality)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::linspace;
    use proptest::prelude::*;

    fn synthetic(bands: &[(&str, f64, f64, f64)], background: f64) -> CouplingSpectrum {
        // (name, centre eV, width eV, area in quanta)
        let omega = linspace(ev_to_omega(0.4), ev_to_omega(2.0), 4001);
        let mut per_family = BTreeMap::new();
        for &(name, c, w, area) in bands {
            let d: Vec<f64> = omega
                .iter()
                .map(|&x| {
                    let u = (omega_to_ev(x) - c) / w;
                    area / (w * ev_to_omega(1.0) * std::f64::consts::PI.sqrt()) * (-u * u).exp()
                })
                .collect();
            per_family.insert(name.to_string(), d);
        }
        let bg = vec![background; omega.len()];
        CouplingSpectrum::new(omega, per_family, bg, BeamParams::new(0.6, 100e-9, 1e-4).unwrap()).unwrap()
    }

    #[test]
    fn single_family_is_ideal() {
        let s = synthetic(&[("TM00", 0.8, 0.01, 1.0)], 0.0);
        assert!((ideality_full(&s, "TM00").unwrap() - 1.0).abs() < 1e-12);
        for fwhm in [0.1, 0.5, 1.0] {
            assert!((ideality_filtered(&s, "TM00", fwhm, 1.0).unwrap().0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_equal_bands_split_full_but_not_filtered_ideality() {
        let s = synthetic(&[("TM00", 0.7, 0.01, 1.0), ("TM01", 1.9, 0.01, 1.0)], 0.0);
        assert!((ideality_full(&s, "TM00").unwrap() - 0.5).abs() < 1e-6);
        let (i_star, warn) = ideality_filtered(&s, "TM00", 0.3, 1.0).unwrap();
        assert!(i_star > 0.999_999, "{i_star}");
        assert!(warn.is_empty());
    }

    #[test]
    fn nearby_band_triggers_overlap_warning() {
        let s = synthetic(&[("TM00", 0.8, 0.01, 1.0), ("TE10", 0.95, 0.01, 0.5)], 0.0);
        let (i_star, warn) = ideality_filtered(&s, "TM00", 0.5, 1.0).unwrap();
        assert_eq!(warn, vec!["TE10".to_string()]);
        assert!(i_star < 0.8);
    }

    #[test]
    fn convolution_preserves_each_channel_integral() {
        let s = synthetic(&[("TM00", 0.8, 0.02, 1.0), ("TE10", 1.3, 0.05, 0.25)], 1e-18);
        let c = convolve_zlp(&s, 0.5).unwrap();
        for (name, d) in s.channels() {
            let before = trapezoid(&s.omega, d);
            let after = trapezoid(&c.energy_ev, &c.channels[name]);
            assert!((after - before).abs() < 1e-9 * before, "{name}: {before} {after}");
        }
    }

    #[test]
    fn report_partitions_the_total() {
        let s = synthetic(&[("TM00", 0.8, 0.02, 1.0), ("TE10", 1.3, 0.05, 0.25)], 1e-17);
        let r = ideality_report(&s, "TM00", &IdealityOptions::default()).unwrap();
        let sum: f64 = r.per_family.values().sum::<f64>() + r.background;
        assert!((sum - r.total).abs() < 1e-9 * r.total);
        assert!((0.0..=1.0).contains(&r.ideality) && (0.0..=1.0).contains(&r.ideality_filtered));
        assert!(r.ideality_filtered >= r.ideality);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn idealities_are_scale_invariant(scale in 1e-6f64..1e6, sep in 0.3f64..1.0, ratio in 0.01f64..1.0) {
            let s = synthetic(&[("TM00", 0.7, 0.02, 1.0), ("TM01", 0.7 + sep, 0.02, ratio)], 2e-18);
            let t = s.scaled(scale);
            let (a, b) = (ideality_full(&s, "TM00").unwrap(), ideality_full(&t, "TM00").unwrap());
            prop_assert!((a - b).abs() < 1e-12);
            let (a, _) = ideality_filtered(&s, "TM00", 0.5, 1.0).unwrap();
            let (b, _) = ideality_filtered(&t, "TM00", 0.5, 1.0).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn filtering_helps_when_competitors_are_outside_the_gate(sep in 1.05f64..1.2, ratio in 0.01f64..2.0) {
            let s = synthetic(&[("TM00", 0.6, 0.01, 1.0), ("TM01", 0.6 + sep, 0.01, ratio)], 0.0);
            let i = ideality_full(&s, "TM00").unwrap();
            let (i_star, _) = ideality_filtered(&s, "TM00", 0.5, 1.0).unwrap();
            prop_assert!(i_star >= i);
        }
    }
}
