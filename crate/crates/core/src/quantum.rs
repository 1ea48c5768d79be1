//! Loss-sideband statistics, synthesized spectrometer traces and heralding
//! figures of merit.
//!
//! The vacuum interaction displaces every mode family independently, so the
//! number of quanta left in family `m` is Poisson with mean `G_m` and the total
//! is Poisson with mean `G = sum G_m`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingSpectrum;
use crate::error::{Error, Result};
use crate::ideality::{ideality_filtered, ideality_full};
use crate::numeric::trapezoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandDistribution {
    pub per_family: BTreeMap<String, f64>,
    pub total: f64,
    /// `P_n` for `n = 0..=n_max`.
    pub probabilities: Vec<f64>,
    pub n_max: usize,
}

/// Truncation that keeps the Poisson tail below 1e-9.
pub fn default_n_max(total: f64) -> usize {
    (total + 10.0 * total.sqrt() + 10.0).ceil() as usize
}

/// `P(n; mean)` evaluated in log space.
pub fn poisson(mean: f64, n: usize) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mut log_fact = 0.0;
    for k in 2..=n {
        log_fact += (k as f64).ln();
    }
    (n as f64 * mean.ln() - mean - log_fact).exp()
}

pub fn sideband_probabilities(strengths: &BTreeMap<String, f64>, n_max: Option<usize>) -> Result<SidebandDistribution> {
    if let Some((k, v)) = strengths.iter().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("strength of `{k}` must be finite and non-negative, got {v}")));
    }
    let total: f64 = strengths.values().sum();
    let n_max = n_max.unwrap_or_else(|| default_n_max(total));
    let mut probabilities = Vec::with_capacity(n_max + 1);
    let mut log_p = -total;
    for n in 0..=n_max {
        if n > 0 {
            log_p += total.ln() - (n as f64).ln();
        }
        probabilities.push(if total == 0.0 { (n == 0) as u8 as f64 } else { log_p.exp() });
    }
    Ok(SidebandDistribution {
        per_family: strengths.clone(),
        total,
        probabilities,
        n_max,
    })
}

impl SidebandDistribution {
    /// Mean number of quanta per family given `n` total losses (multinomial split).
    pub fn split_given(&self, n: usize) -> BTreeMap<String, f64> {
        self.per_family
            .iter()
            .map(|(k, g)| (k.clone(), if self.total > 0.0 { n as f64 * g / self.total } else { 0.0 }))
            .collect()
    }

    /// Unconditional expected quanta per family; sums to the total mean.
    pub fn expected_counts(&self) -> BTreeMap<String, f64> {
        self.per_family.clone()
    }

    /// Probability of a specific count in every family.
    pub fn joint_probability(&self, counts: &BTreeMap<String, usize>) -> f64 {
        self.per_family
            .iter()
            .map(|(k, &g)| poisson(g, counts.get(k).copied().unwrap_or(0)))
            .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEels {
    /// Energy change of the electron (eV); losses are negative.
    pub energy_ev: Vec<f64>,
    pub intensity: Vec<f64>,
    pub zlp_fwhm_ev: f64,
}

/// Discrete loss lines `(energy, probability)` of the joint distribution,
/// built by successive convolution of the per-family Poisson ladders.
pub fn loss_lines(dist: &SidebandDistribution, photon_ev: &BTreeMap<String, f64>) -> Result<Vec<(f64, f64)>> {
    let mut lines: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for (name, &g) in &dist.per_family {
        let e = *photon_ev
            .get(name)
            .ok_or_else(|| Error::UnknownFamily(name.clone()))?;
        if !(e > 0.0) {
            return Err(Error::InvalidInput(format!("photon energy of `{name}` must be positive")));
        }
        let ladder: Vec<f64> = (0..=default_n_max(g)).map(|n| poisson(g, n)).collect();
        let mut next: Vec<(f64, f64)> = Vec::with_capacity(lines.len() * ladder.len());
        for &(e0, p0) in &lines {
            for (n, &pn) in ladder.iter().enumerate() {
                let p = p0 * pn;
                if p > 1e-16 {
                    next.push((e0 - n as f64 * e, p));
                }
            }
        }
        next.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        lines.clear();
        for (e1, p1) in next {
            match lines.last_mut() {
                Some(last) if (last.0 - e1).abs() < 1e-12 => last.1 += p1,
                _ => lines.push((e1, p1)),
            }
        }
    }
    Ok(lines)
}

/// Gaussian-broadened loss spectrum normalized to unit area.
pub fn synth_eels_spectrum(dist: &SidebandDistribution, photon_ev: &BTreeMap<String, f64>, zlp_fwhm_ev: f64) -> Result<SynthEels> {
    if !(zlp_fwhm_ev > 0.0) {
        return Err(Error::InvalidInput("ZLP FWHM must be positive".into()));
    }
    let lines = loss_lines(dist, photon_ev)?;
    let sigma = zlp_fwhm_ev / (8.0 * std::f64::consts::LN_2).sqrt();
    let lowest = lines.iter().map(|l| l.0).fold(0.0, f64::min);
    let (lo, hi) = (lowest - 8.0 * sigma, 8.0 * sigma);
    let step = sigma / 25.0;
    let n = ((hi - lo) / step).ceil() as usize + 1;
    let energy_ev: Vec<f64> = (0..n).map(|k| lo + k as f64 * step).collect();
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let mut intensity: Vec<f64> = energy_ev
        .iter()
        .map(|&x| {
            lines
                .iter()
                .map(|&(e, p)| {
                    let u = (x - e) / sigma;
                    p * norm * (-0.5 * u * u).exp()
                })
                .sum()
        })
        .collect();
    let area = trapezoid(&energy_ev, &intensity);
    intensity.iter_mut().for_each(|v| *v /= area);
    Ok(SynthEels {
        energy_ev,
        intensity,
        zlp_fwhm_ev,
    })
}

impl SynthEels {
    pub fn mean_energy(&self) -> f64 {
        let w: Vec<f64> = self.energy_ev.iter().zip(&self.intensity).map(|(e, i)| e * i).collect();
        trapezoid(&self.energy_ev, &w)
    }

    /// Local maxima strictly inside `(lo, hi)`.
    pub fn local_maxima(&self, lo: f64, hi: f64) -> Vec<f64> {
        (1..self.energy_ev.len() - 1)
            .filter(|&k| {
                let e = self.energy_ev[k];
                e > lo && e < hi && self.intensity[k] > self.intensity[k - 1] && self.intensity[k] >= self.intensity[k + 1]
            })
            .map(|k| self.energy_ev[k])
            .collect()
    }

    pub fn value_at(&self, e: f64) -> f64 {
        crate::numeric::interp_linear(&self.energy_ev, &self.intensity, e).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldMetrics {
    pub total_strength: f64,
    /// Probability of exactly one loss quantum.
    pub p_herald_1: f64,
    pub purity_full: f64,
    pub purity_filtered: f64,
}

/// Heralding from totals; `I` and `I*` are the purities.
pub fn herald_from_parts(total: f64, ideality: f64, ideality_filtered: f64) -> HeraldMetrics {
    HeraldMetrics {
        total_strength: total,
        p_herald_1: total * (-total).exp(),
        purity_full: ideality,
        purity_filtered: ideality_filtered,
    }
}

pub fn herald_metrics(spectrum: &CouplingSpectrum, target: &str, zlp_fwhm_ev: f64, window_fwhm: f64) -> Result<HeraldMetrics> {
    let total = trapezoid(&spectrum.omega, &spectrum.total());
    let i = ideality_full(spectrum, target)?;
    let (i_star, _) = ideality_filtered(spectrum, target, zlp_fwhm_ev, window_fwhm)?;
    Ok(herald_from_parts(total, i, i_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(name: &str, g: f64) -> BTreeMap<String, f64> {
        BTreeMap::from([(name.to_string(), g)])
    }

    #[test]
    fn vacuum_and_unit_mean() {
        let d = sideband_probabilities(&one("TM00", 0.0), None).unwrap();
        assert_eq!(d.probabilities[0], 1.0);
        assert!(d.probabilities[1..].iter().all(|&p| p == 0.0));
        let d = sideband_probabilities(&one("TM00", 1.0), None).unwrap();
        // independent evaluation: e^-1 / 1!
        assert!((d.probabilities[1] - 0.367_879_441_171_442_3).abs() < 1e-12);
        assert!((d.probabilities[3] - (-1f64).exp() / 6.0).abs() < 1e-15);
        assert!(sideband_probabilities(&one("TM00", -0.1), None).is_err());
    }

    #[test]
    fn herald_composition() {
        let h = herald_from_parts(1.0, 0.9, 0.95);
        assert!((h.p_herald_1 - 0.3679).abs() < 1e-4);
        assert_eq!(h.purity_full, 0.9);
        let small = herald_from_parts(1e-6, 1.0, 1.0);
        assert!((small.p_herald_1 / 1e-6 - 1.0).abs() < 2e-6);
    }

    #[test]
    fn first_sideband_is_resolved_for_a_single_family() {
        let d = sideband_probabilities(&one("TM00", 1.0), None).unwrap();
        let s = synth_eels_spectrum(&d, &one("TM00", 0.9), 0.5).unwrap();
        let peak = s.value_at(-0.9);
        let valley = (0..=90).map(|k| s.value_at(-0.01 * k as f64)).fold(f64::INFINITY, f64::min);
        assert!(peak / valley > 1.2, "{peak} {valley}");
        assert!((trapezoid(&s.energy_ev, &s.intensity) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn close_families_merge_into_one_sideband() {
        let g = BTreeMap::from([("TM00".to_string(), 0.5), ("TE10".to_string(), 0.5)]);
        let e = BTreeMap::from([("TM00".to_string(), 0.8), ("TE10".to_string(), 0.9)]);
        let d = sideband_probabilities(&g, None).unwrap();
        let s = synth_eels_spectrum(&d, &e, 0.5).unwrap();
        assert_eq!(s.local_maxima(-1.0, -0.7).len(), 1);
    }

    #[test]
    fn zero_strength_gives_a_bare_zlp() {
        let d = sideband_probabilities(&one("TM00", 0.0), None).unwrap();
        let s = synth_eels_spectrum(&d, &one("TM00", 0.9), 0.5).unwrap();
        assert_eq!(s.local_maxima(-10.0, 10.0).len(), 1);
        assert!(s.mean_energy().abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn poisson_sums_to_one(g in 0.0f64..40.0) {
            let d = sideband_probabilities(&one("TM00", g), None).unwrap();
            let s: f64 = d.probabilities.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "{}", s);
            prop_assert!(d.probabilities.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn split_and_merge_leave_the_distribution_unchanged(g in 0.0f64..8.0, frac in 0.0f64..1.0) {
            let merged = sideband_probabilities(&one("TM00", g), Some(40)).unwrap();
            let parts = BTreeMap::from([("TM00a".to_string(), frac * g), ("TM00b".to_string(), (1.0 - frac) * g)]);
            let split = sideband_probabilities(&parts, Some(40)).unwrap();
            for (a, b) in merged.probabilities.iter().zip(&split.probabilities) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // joint ladder convolution reproduces the total Poisson law
            let e = BTreeMap::from([("TM00a".to_string(), 1.0), ("TM00b".to_string(), 1.0)]);
            let lines = loss_lines(&split, &e).unwrap();
            for &(energy, p) in &lines {
                let n = (-energy).round() as usize;
                prop_assert!((p - merged.probabilities.get(n).copied().unwrap_or(0.0)).abs() < 1e-12);
            }
        }

        #[test]
        fn expected_counts_sum_to_total(a in 0.0f64..3.0, b in 0.0f64..3.0, n in 0usize..20) {
            let d = sideband_probabilities(&BTreeMap::from([("x".to_string(), a), ("y".to_string(), b)]), None).unwrap();
            let s: f64 = d.expected_counts().values().sum();
            prop_assert_eq!(s, d.total);
            if d.total > 0.0 {
                let c: f64 = d.split_given(n).values().sum();
                prop_assert!((c - n as f64).abs() < 1e-12);
            }
        }

        #[test]
        fn first_moment_matches_weighted_photon_energy(a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let g = BTreeMap::from([("x".to_string(), a), ("y".to_string(), b)]);
            let e = BTreeMap::from([("x".to_string(), 0.7), ("y".to_string(), 1.2)]);
            let d = sideband_probabilities(&g, None).unwrap();
            let s = synth_eels_spectrum(&d, &e, 0.5).unwrap();
            let expected = -(a * 0.7 + b * 1.2);
            prop_assert!((s.mean_energy() - expected).abs() < 1e-6, "{} {}", s.mean_energy(), expected);
        }
    }
}
