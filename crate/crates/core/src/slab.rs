//! Guided modes of planar multilayer stacks by the transfer-matrix method.
//!
//! Layers are stacked along `y` from a semi-infinite bottom cladding to a
//! semi-infinite top cladding. For TE the tracked field is the tangential
//! electric field; for TM it is the tangential magnetic field (proportional to
//! `eps * E_y`), whose derivative is continuous after scaling by `1 / eps`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlabPolarization {
    Te,
    Tm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub index: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabStack {
    pub bottom_index: f64,
    pub layers: Vec<Layer>,
    pub top_index: f64,
}

impl SlabStack {
    pub fn new(bottom_index: f64, layers: Vec<Layer>, top_index: f64) -> Result<Self> {
        if !(bottom_index >= 1.0 && top_index >= 1.0)
            || layers.iter().any(|l| !(l.index >= 1.0 && l.thickness >= 0.0))
        {
            return Err(Error::InvalidInput("slab indices must be >= 1 and thicknesses >= 0".into()));
        }
        Ok(Self {
            bottom_index,
            layers,
            top_index,
        })
    }

    /// Single film of index `core` and thickness `d` between two claddings.
    pub fn film(bottom: f64, core: f64, thickness: f64, top: f64) -> Result<Self> {
        Self::new(
            bottom,
            vec![Layer {
                index: core,
                thickness,
            }],
            top,
        )
    }

    fn n_cladding(&self) -> f64 {
        self.bottom_index.max(self.top_index)
    }

    fn n_max(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.index)
            .fold(self.n_cladding(), f64::max)
    }

    fn weight(pol: SlabPolarization, n: f64) -> f64 {
        match pol {
            SlabPolarization::Te => 1.0,
            SlabPolarization::Tm => n * n,
        }
    }

    /// Field and scaled derivative `(F, F' / w)` after propagating from the
    /// bottom cladding through every layer, starting from a decaying solution.
    fn propagate(&self, pol: SlabPolarization, k0: f64, n_eff: f64, mut on_layer: impl FnMut(usize, f64, f64)) -> (f64, f64) {
        let gb = k0 * (n_eff * n_eff - self.bottom_index * self.bottom_index).max(0.0).sqrt();
        let mut f = 1.0;
        let mut g = gb / Self::weight(pol, self.bottom_index);
        for (idx, layer) in self.layers.iter().enumerate() {
            on_layer(idx, f, g);
            let w = Self::weight(pol, layer.index);
            let k2 = k0 * k0 * (layer.index * layer.index - n_eff * n_eff);
            let d = layer.thickness;
            let (nf, ng) = if k2 > 0.0 {
                let k = k2.sqrt();
                let (s, c) = (k * d).sin_cos();
                (f * c + w * g * s / k, -(k / w) * f * s + g * c)
            } else if k2 < 0.0 {
                let q = (-k2).sqrt();
                let (s, c) = ((q * d).sinh(), (q * d).cosh());
                (f * c + w * g * s / q, (q / w) * f * s + g * c)
            } else {
                (f + w * g * d, g)
            };
            f = nf;
            g = ng;
        }
        (f, g)
    }

    /// Mismatch of the top boundary condition; zero at guided-mode indices.
    pub fn dispersion(&self, pol: SlabPolarization, k0: f64, n_eff: f64) -> f64 {
        let (f, g) = self.propagate(pol, k0, n_eff, |_, _, _| {});
        let gt = k0 * (n_eff * n_eff - self.top_index * self.top_index).max(0.0).sqrt();
        let norm = (f.abs() + g.abs() * Self::weight(pol, self.top_index) / k0).max(1e-300);
        (g + gt / Self::weight(pol, self.top_index) * f) / norm
    }

    /// Guided-mode effective indices in descending order.
    pub fn guided_indices(&self, pol: SlabPolarization, k0: f64) -> Vec<f64> {
        let lo = self.n_cladding();
        let hi = self.n_max();
        if hi <= lo {
            return Vec::new();
        }
        let total_thickness: f64 = self.layers.iter().map(|l| l.thickness).sum();
        // one mode per half-wavelength of transverse phase; oversample generously
        let max_modes = (k0 * total_thickness * (hi * hi - lo * lo).sqrt() / std::f64::consts::PI).ceil();
        let samples = (400.0 * (max_modes + 1.0)).min(200_000.0) as usize;
        let eps = 1e-12 * hi;
        let mut roots = Vec::new();
        let mut prev_n = hi - eps;
        let mut prev_f = self.dispersion(pol, k0, prev_n);
        for i in 1..=samples {
            let t = i as f64 / samples as f64;
            let n = hi - eps - (hi - lo - 2.0 * eps) * t;
            let fv = self.dispersion(pol, k0, n);
            if prev_f == 0.0 {
                roots.push(prev_n);
            } else if prev_f.signum() != fv.signum() && fv != 0.0 {
                if let Some(r) = self.bisect(pol, k0, n, prev_n) {
                    roots.push(r);
                }
            }
            prev_n = n;
            prev_f = fv;
        }
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        roots
    }

    fn bisect(&self, pol: SlabPolarization, k0: f64, mut a: f64, mut b: f64) -> Option<f64> {
        let mut fa = self.dispersion(pol, k0, a);
        let fb = self.dispersion(pol, k0, b);
        if fa.signum() == fb.signum() {
            return None;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = self.dispersion(pol, k0, m);
            if fm == 0.0 || (b - a) < 1e-15 * m {
                return Some(m);
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        // the normalized mismatch can also change sign across a pole; reject those
        let m = 0.5 * (a + b);
        let residual = self.dispersion(pol, k0, m).abs();
        (residual < 1e-6).then_some(m)
    }

    /// Unnormalized mode profile `F(y)` with the bottom interface at `y = 0`.
    pub fn field_profile(&self, pol: SlabPolarization, k0: f64, n_eff: f64, ys: &[f64]) -> Vec<f64> {
        let mut starts = Vec::with_capacity(self.layers.len());
        self.propagate(pol, k0, n_eff, |_, f, g| starts.push((f, g)));
        let (f_top, _) = self.propagate(pol, k0, n_eff, |_, _, _| {});
        let total: f64 = self.layers.iter().map(|l| l.thickness).sum();
        let gb = k0 * (n_eff * n_eff - self.bottom_index.powi(2)).max(0.0).sqrt();
        let gt = k0 * (n_eff * n_eff - self.top_index.powi(2)).max(0.0).sqrt();
        ys.iter()
            .map(|&y| {
                if y < 0.0 {
                    return (gb * y).exp();
                }
                if y >= total {
                    return f_top * (-gt * (y - total)).exp();
                }
                let mut y0 = 0.0;
                for (layer, &(f, g)) in self.layers.iter().zip(&starts) {
                    if y < y0 + layer.thickness {
                        let dy = y - y0;
                        let w = Self::weight(pol, layer.index);
                        let k2 = k0 * k0 * (layer.index.powi(2) - n_eff * n_eff);
                        return if k2 > 0.0 {
                            let k = k2.sqrt();
                            f * (k * dy).cos() + w * g * (k * dy).sin() / k
                        } else if k2 < 0.0 {
                            let q = (-k2).sqrt();
                            f * (q * dy).cosh() + w * g * (q * dy).sinh() / q
                        } else {
                            f + w * g * dy
                        };
                    }
                    y0 += layer.thickness;
                }
                f_top
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Even TE mode of a symmetric slab: tan(k d / 2) = q / k.
    fn symmetric_te_even(n1: f64, n2: f64, d: f64, k0: f64) -> f64 {
        let f = |n: f64| {
            let k = k0 * (n1 * n1 - n * n).sqrt();
            let q = k0 * (n * n - n2 * n2).sqrt();
            (k * d / 2.0).tan() - q / k
        };
        // fundamental branch: k d / 2 in (0, pi/2)
        let n_lo = (n1 * n1 - (PI / (k0 * d)).powi(2)).max(n2 * n2).sqrt() + 1e-12;
        let (mut a, mut b) = (n_lo, n1 - 1e-12);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            // the mismatch falls from +inf at the branch start to -inf at n1
            if f(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Even TM mode of a symmetric slab: tan(k d / 2) = (n1^2 / n2^2) q / k.
    fn symmetric_tm_even(n1: f64, n2: f64, d: f64, k0: f64) -> f64 {
        let f = |n: f64| {
            let k = k0 * (n1 * n1 - n * n).sqrt();
            let q = k0 * (n * n - n2 * n2).sqrt();
            (k * d / 2.0).tan() - (n1 * n1 / (n2 * n2)) * q / k
        };
        let n_lo = (n1 * n1 - (PI / (k0 * d)).powi(2)).max(n2 * n2).sqrt() + 1e-12;
        let (mut a, mut b) = (n_lo, n1 - 1e-12);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            // the mismatch falls from +inf at the branch start to -inf at n1
            if f(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn symmetric_slab_matches_closed_form() {
        let k0 = 2.0 * PI / 1.55e-6;
        let stack = SlabStack::film(1.444, 1.996, 650e-9, 1.444).unwrap();
        let te = stack.guided_indices(SlabPolarization::Te, k0);
        let tm = stack.guided_indices(SlabPolarization::Tm, k0);
        assert!((te[0] - symmetric_te_even(1.996, 1.444, 650e-9, k0)).abs() < 1e-10);
        assert!((tm[0] - symmetric_tm_even(1.996, 1.444, 650e-9, k0)).abs() < 1e-10);
        assert!(te[0] > tm[0]);
    }

    #[test]
    fn mode_count_grows_with_thickness() {
        let k0 = 2.0 * PI / 1.0e-6;
        let thin = SlabStack::film(1.444, 1.996, 200e-9, 1.0).unwrap();
        let thick = SlabStack::film(1.444, 1.996, 2000e-9, 1.0).unwrap();
        let a = thin.guided_indices(SlabPolarization::Te, k0).len();
        let b = thick.guided_indices(SlabPolarization::Te, k0).len();
        assert!(b > a && a >= 1);
    }

    #[test]
    fn asymmetric_cutoff_and_no_contrast() {
        let k0 = 2.0 * PI / 1.55e-6;
        // well below the asymmetric-slab cutoff thickness
        let tiny = SlabStack::film(1.444, 1.996, 5e-9, 1.0).unwrap();
        assert!(tiny.guided_indices(SlabPolarization::Tm, k0).is_empty());
        let flat = SlabStack::film(1.444, 1.444, 500e-9, 1.444).unwrap();
        assert!(flat.guided_indices(SlabPolarization::Te, k0).is_empty());
    }

    #[test]
    fn profile_decays_in_claddings() {
        let k0 = 2.0 * PI / 1.55e-6;
        let stack = SlabStack::film(1.444, 1.996, 650e-9, 1.0).unwrap();
        let n = stack.guided_indices(SlabPolarization::Tm, k0)[0];
        let ys = [-1e-6, -0.5e-6, 0.3e-6, 0.65e-6 + 0.5e-6, 0.65e-6 + 1e-6];
        let p = stack.field_profile(SlabPolarization::Tm, k0, n, &ys);
        let q_top = k0 * (n * n - 1.0).sqrt();
        assert!((p[4] / p[3] - (-q_top * 0.5e-6).exp()).abs() < 1e-12);
        assert!(p[0].abs() < p[1].abs());
    }
}
