//! Mode-family identity across frequency and group-index estimation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ModeSolution, Polarization};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingOptions {
    /// Minimum `|<eps u, u'>|` for two samples to be the same family.
    pub match_threshold: f64,
    /// Overlaps between this and `match_threshold` are ambiguous.
    pub ambiguity_threshold: f64,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            match_threshold: 0.5,
            ambiguity_threshold: 0.1,
        }
    }
}

/// One mode family sampled on an ascending frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDispersion {
    pub family: String,
    pub polarization: Polarization,
    pub omega: Vec<f64>,
    pub n_eff: Vec<f64>,
    pub n_g: Vec<f64>,
    /// True where the sample was interpolated across a gap in the input.
    pub interpolated: Vec<bool>,
    /// Solved fields per sample; `None` at interpolated samples.
    pub fields: Vec<Option<ModeSolution>>,
}

impl FamilyDispersion {
    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega_range(&self) -> (f64, f64) {
        (self.omega[0], self.omega[self.omega.len() - 1])
    }

    /// `|u_z|^2` at `(x, y)` for every sample; interpolated samples are filled
    /// geometrically from their solved neighbours.
    pub fn uz_sq_curve(&self, x: f64, y: f64) -> Vec<f64> {
        let raw: Vec<Option<f64>> = self
            .fields
            .iter()
            .map(|f| f.as_ref().map(|m| m.uz_sq_at(x, y)))
            .collect();
        fill_gaps(&self.omega, &raw, true)
    }

    /// Builds a family from explicit curves (no field data); `n_g` is derived.
    pub fn from_curves(family: &str, polarization: Polarization, omega: Vec<f64>, n_eff: Vec<f64>) -> Result<Self> {
        let n_g = group_index_curve(&omega, &n_eff)?;
        let len = omega.len();
        Ok(Self {
            family: family.to_string(),
            polarization,
            omega,
            n_eff,
            n_g,
            interpolated: vec![false; len],
            fields: vec![None; len],
        })
    }
}

/// Linear (or log-linear when `geometric`) fill of `None` entries between known ones.
fn fill_gaps(x: &[f64], v: &[Option<f64>], geometric: bool) -> Vec<f64> {
    let known: Vec<usize> = (0..v.len()).filter(|&k| v[k].is_some()).collect();
    (0..v.len())
        .map(|k| {
            if let Some(val) = v[k] {
                return val;
            }
            let lo = known.iter().rev().find(|&&i| i < k).copied();
            let hi = known.iter().find(|&&i| i > k).copied();
            match (lo, hi) {
                (Some(a), Some(b)) => {
                    let t = (x[k] - x[a]) / (x[b] - x[a]);
                    let (va, vb) = (v[a].unwrap(), v[b].unwrap());
                    if geometric && va > 0.0 && vb > 0.0 {
                        (va.ln() * (1.0 - t) + vb.ln() * t).exp()
                    } else {
                        va * (1.0 - t) + vb * t
                    }
                }
                (Some(a), None) => v[a].unwrap(),
                (None, Some(b)) => v[b].unwrap(),
                (None, None) => 0.0,
            }
        })
        .collect()
}

/// Derivative at `x[1]` of the parabola through three points.
fn three_point_derivative(x: [f64; 3], y: [f64; 3], at: f64) -> f64 {
    // Lagrange basis derivatives evaluated at `at`
    let d0 = ((at - x[1]) + (at - x[2])) / ((x[0] - x[1]) * (x[0] - x[2]));
    let d1 = ((at - x[0]) + (at - x[2])) / ((x[1] - x[0]) * (x[1] - x[2]));
    let d2 = ((at - x[0]) + (at - x[1])) / ((x[2] - x[0]) * (x[2] - x[1]));
    y[0] * d0 + y[1] * d1 + y[2] * d2
}

fn three_point_value(x: [f64; 3], y: [f64; 3], at: f64) -> f64 {
    let l0 = (at - x[1]) * (at - x[2]) / ((x[0] - x[1]) * (x[0] - x[2]));
    let l1 = (at - x[0]) * (at - x[2]) / ((x[1] - x[0]) * (x[1] - x[2]));
    let l2 = (at - x[0]) * (at - x[1]) / ((x[2] - x[0]) * (x[2] - x[1]));
    y[0] * l0 + y[1] * l1 + y[2] * l2
}

fn stencil(omega: &[f64], at: f64) -> usize {
    let k = omega.partition_point(|&w| w < at);
    // centre index of the three samples nearest to `at`
    let nearest = if k == 0 {
        0
    } else if k >= omega.len() || (at - omega[k - 1]) <= (omega[k] - at) {
        k.min(omega.len()) - 1
    } else {
        k
    };
    nearest.clamp(1, omega.len() - 2)
}

/// `n_g = n_eff + omega dn_eff/domega` at `omega` from the three nearest samples.
pub fn group_index(family: &FamilyDispersion, omega: f64) -> Result<f64> {
    group_index_from(&family.omega, &family.n_eff, omega)
}

fn group_index_from(omega: &[f64], n_eff: &[f64], at: f64) -> Result<f64> {
    if omega.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: omega.len(),
        });
    }
    let c = stencil(omega, at);
    let xs = [omega[c - 1], omega[c], omega[c + 1]];
    let ys = [n_eff[c - 1], n_eff[c], n_eff[c + 1]];
    Ok(three_point_value(xs, ys, at) + at * three_point_derivative(xs, ys, at))
}

/// Group index at every sample: central differences inside, one-sided at the ends.
pub fn group_index_curve(omega: &[f64], n_eff: &[f64]) -> Result<Vec<f64>> {
    if omega.len() != n_eff.len() {
        return Err(Error::InvalidInput("omega and n_eff lengths differ".into()));
    }
    omega.iter().map(|&w| group_index_from(omega, n_eff, w)).collect()
}

struct Builder {
    family: String,
    polarization: Polarization,
    samples: Vec<(usize, Option<ModeSolution>)>,
    last: ModeSolution,
    /// Frequency index of the latest solved sample.
    last_index: usize,
}

/// Groups per-frequency solutions into families by greedy field-overlap matching.
///
/// `solutions[k]` holds the modes at `omega[k]`; an empty entry marks a missing
/// sample. Families present on both sides of a gap are interpolated across it.
pub fn track_families(omega: &[f64], solutions: Vec<Vec<ModeSolution>>, opts: &TrackingOptions) -> Result<Vec<FamilyDispersion>> {
    if omega.len() != solutions.len() {
        return Err(Error::InvalidInput("one solution list per frequency is required".into()));
    }
    if omega.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("frequency grid must be strictly ascending".into()));
    }
    let mut builders: Vec<Builder> = Vec::new();
    for (t, modes) in solutions.into_iter().enumerate() {
        let mut pairs: Vec<(f64, f64, usize, usize)> = Vec::new();
        for (bi, b) in builders.iter().enumerate() {
            for (mi, m) in modes.iter().enumerate() {
                if m.polarization != b.polarization {
                    continue;
                }
                let o = b.last.fingerprint.overlap(&m.fingerprint).unwrap_or(0.0).abs();
                pairs.push((o, (m.n_eff - b.last.n_eff).abs(), bi, mi));
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
        let mut taken_b = vec![false; builders.len()];
        let mut assignment: Vec<Option<usize>> = vec![None; modes.len()];
        for &(o, _, bi, mi) in &pairs {
            if o < opts.match_threshold {
                break;
            }
            if !taken_b[bi] && assignment[mi].is_none() {
                taken_b[bi] = true;
                assignment[mi] = Some(bi);
            }
        }
        for (mi, m) in modes.into_iter().enumerate() {
            match assignment[mi] {
                Some(bi) => {
                    let b = &mut builders[bi];
                    b.samples.push((t, Some(m.clone())));
                    b.last = m;
                    b.last_index = t;
                }
                None => {
                    let best = pairs
                        .iter()
                        .filter(|p| p.3 == mi && !taken_b[p.2])
                        .map(|p| p.0)
                        .fold(0.0, f64::max);
                    if best >= opts.ambiguity_threshold {
                        return Err(Error::AmbiguousTracking {
                            omega: omega[t],
                            overlap: best,
                        });
                    }
                    builders.push(Builder {
                        family: m.family.clone(),
                        polarization: m.polarization,
                        samples: vec![(t, Some(m.clone()))],
                        last: m,
                        last_index: t,
                    });
                    taken_b.push(true);
                }
            }
        }
    }

    let mut out = Vec::with_capacity(builders.len());
    let mut used_labels: Vec<String> = Vec::new();
    // families ordered by first appearance, then by descending n_eff
    builders.sort_by(|a, b| {
        a.samples[0]
            .0
            .cmp(&b.samples[0].0)
            .then(b.samples[0].1.as_ref().unwrap().n_eff.partial_cmp(&a.samples[0].1.as_ref().unwrap().n_eff).unwrap())
    });
    for b in builders {
        let first = b.samples[0].0;
        let last = b.last_index;
        let mut raw_n: Vec<Option<f64>> = vec![None; last - first + 1];
        let mut fields: Vec<Option<ModeSolution>> = vec![None; last - first + 1];
        for (t, m) in b.samples {
            if let Some(m) = m {
                raw_n[t - first] = Some(m.n_eff);
                fields[t - first] = Some(m);
            }
        }
        let om = omega[first..=last].to_vec();
        let interpolated: Vec<bool> = raw_n.iter().map(|v| v.is_none()).collect();
        let n_eff = fill_gaps(&om, &raw_n, false);
        let n_g = if om.len() >= 3 {
            group_index_curve(&om, &n_eff)?
        } else {
            vec![f64::NAN; om.len()]
        };
        let mut label = b.family.clone();
        let mut suffix = 1;
        while used_labels.contains(&label) {
            label = format!("{}_{}", b.family, suffix);
            suffix += 1;
        }
        used_labels.push(label.clone());
        for (f, ng) in fields.iter_mut().zip(&n_g) {
            if let Some(m) = f {
                m.family = label.clone();
                m.n_g = Some(*ng);
            }
        }
        out.push(FamilyDispersion {
            family: label,
            polarization: b.polarization,
            omega: om,
            n_eff,
            n_g,
            interpolated,
            fields,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modesolver::{FieldWindow, Fingerprint};
    use proptest::prelude::*;

    fn synthetic(pol: Polarization, omega: f64, n_eff: f64, shape: &[f32]) -> ModeSolution {
        let norm = shape.iter().map(|v| v * v).sum::<f32>().sqrt();
        ModeSolution {
            family: format!("{}00", pol.prefix()),
            polarization: pol,
            omega,
            n_eff,
            n_g: None,
            polarization_fraction: 0.95,
            nodes: (0, 0),
            eigen_imag_ratio: 0.0,
            window: FieldWindow {
                x0: 0.0,
                y0: 0.0,
                h: 1.0,
                nx: 1,
                ny: 1,
            },
            transverse: Vec::new(),
            longitudinal: vec![1.0],
            fingerprint: Fingerprint {
                stride: 1,
                nx: shape.len(),
                ny: 1,
                values: shape.iter().map(|v| v / norm).collect(),
            },
            edge_ratio: 0.0,
        }
    }

    #[test]
    fn quadratic_curve_gives_exact_group_index() {
        let omega: Vec<f64> = (0..9).map(|k| 1.0e15 + 0.7e14 * (k as f64).powf(1.3)).collect();
        let (a, b, c) = (1.5, 2.0e-16, -3.0e-32);
        let n: Vec<f64> = omega.iter().map(|w| a + b * w + c * w * w).collect();
        let ng = group_index_curve(&omega, &n).unwrap();
        for (w, g) in omega.iter().zip(&ng) {
            let exact = a + 2.0 * b * w + 3.0 * c * w * w;
            assert!((g - exact).abs() < 1e-10 * exact.abs(), "{g} vs {exact}");
        }
        assert!(matches!(
            group_index_curve(&omega[..2], &n[..2]),
            Err(Error::InsufficientSamples { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn crossing_families_follow_polarization() {
        let omega: Vec<f64> = (0..6).map(|k| 1e15 + 1e14 * k as f64).collect();
        let shape_tm = [1.0, 2.0, 1.0];
        let shape_te = [1.0, 2.0, 1.0];
        let sols: Vec<Vec<ModeSolution>> = omega
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                // TM starts below TE and overtakes it half way
                let tm = synthetic(Polarization::QuasiTm, w, 1.60 + 0.02 * k as f64, &shape_tm);
                let te = synthetic(Polarization::QuasiTe, w, 1.65, &shape_te);
                let mut v = vec![tm, te];
                v.sort_by(|a, b| b.n_eff.partial_cmp(&a.n_eff).unwrap());
                v
            })
            .collect();
        let fams = track_families(&omega, sols, &TrackingOptions::default()).unwrap();
        assert_eq!(fams.len(), 2);
        let tm = fams.iter().find(|f| f.family == "TM00").unwrap();
        assert!(tm.n_eff.windows(2).all(|w| w[1] > w[0]));
        let te = fams.iter().find(|f| f.family == "TE00").unwrap();
        assert!(te.n_eff.iter().all(|&n| n == 1.65));
    }

    #[test]
    fn missing_sample_is_interpolated_and_flagged() {
        let omega: Vec<f64> = (0..5).map(|k| 1e15 + 1e14 * k as f64).collect();
        let sols: Vec<Vec<ModeSolution>> = omega
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                if k == 2 {
                    Vec::new()
                } else {
                    vec![synthetic(Polarization::QuasiTm, w, 1.6 + 0.01 * k as f64, &[1.0, 1.0])]
                }
            })
            .collect();
        let fams = track_families(&omega, sols, &TrackingOptions::default()).unwrap();
        assert_eq!(fams.len(), 1);
        assert_eq!(fams[0].interpolated, vec![false, false, true, false, false]);
        assert!((fams[0].n_eff[2] - 1.62).abs() < 1e-12);
        assert!(fams[0].fields[2].is_none());
    }

    #[test]
    fn partial_overlap_is_reported_as_ambiguous() {
        let omega = vec![1e15, 1.1e15];
        let a = synthetic(Polarization::QuasiTm, omega[0], 1.6, &[1.0, 0.0, 0.0]);
        let b = synthetic(Polarization::QuasiTm, omega[1], 1.6, &[0.3, 1.0, 0.0]);
        let err = track_families(&omega, vec![vec![a], vec![b]], &TrackingOptions::default()).unwrap_err();
        assert!(matches!(err, Error::AmbiguousTracking { .. }));
    }

    #[test]
    fn single_mode_is_one_family() {
        let omega: Vec<f64> = (0..4).map(|k| 1e15 + 1e14 * k as f64).collect();
        let sols = omega
            .iter()
            .map(|&w| vec![synthetic(Polarization::QuasiTm, w, 1.6, &[1.0])])
            .collect();
        let fams = track_families(&omega, sols, &TrackingOptions::default()).unwrap();
        assert_eq!(fams.len(), 1);
        assert!(fams[0].interpolated.iter().all(|f| !f));
    }

    proptest! {
        #[test]
        fn group_index_equals_n_eff_for_flat_curves(n in 1.0f64..3.0, len in 3usize..20) {
            let omega: Vec<f64> = (0..len).map(|k| 1e15 * (1.0 + 0.1 * k as f64)).collect();
            let ng = group_index_curve(&omega, &vec![n; len]).unwrap();
            for g in ng {
                prop_assert!((g - n).abs() < 1e-12);
            }
        }
    }
}
