//! Restarted Arnoldi iteration for the dominant eigenpairs of a real operator.
//!
//! The search space is expanded by repeated application of the operator with
//! full (twice-applied) Gram-Schmidt orthogonalization. Ritz pairs come from the
//! explicit projection `V^T (Op V)`, so restarting with kept Ritz vectors needs
//! no extra operator applications.

use faer::linalg::solvers::Eigen;
use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ArnoldiOptions {
    /// Number of wanted eigenpairs above the magnitude cut.
    pub nev: usize,
    /// Search-space dimension per cycle.
    pub dim: usize,
    pub tol: f64,
    pub max_cycles: usize,
}

#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: f64,
    pub imag: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Deterministic pseudo-random fill used when the search space collapses.
fn fill_pseudo_random(v: &mut [f64], seed: u64) {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    for x in v.iter_mut() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *x = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
    }
}

/// Orthogonalizes `v` against `basis` (also applying the same combination to
/// `w` when given) and returns the remaining norm before normalization.
fn orthonormalize(basis: &[Vec<f64>], images: Option<&[Vec<f64>]>, v: &mut [f64], mut w: Option<&mut [f64]>) -> f64 {
    let before = norm(v);
    for _ in 0..2 {
        for (k, b) in basis.iter().enumerate() {
            let c = dot(b, v);
            axpy(-c, b, v);
            if let (Some(w), Some(img)) = (w.as_deref_mut(), images) {
                axpy(-c, &img[k], w);
            }
        }
    }
    let after = norm(v);
    if after > 0.0 {
        v.iter_mut().for_each(|x| *x /= after);
        if let Some(w) = w {
            w.iter_mut().for_each(|x| *x /= after);
        }
    }
    if before > 0.0 {
        after / before
    } else {
        0.0
    }
}

/// Eigenpairs of `op` with the largest magnitudes, restricted to values whose
/// magnitude exceeds `min_magnitude`. `op` overwrites its argument with the image.
pub fn dominant_eigenpairs(
    mut op: impl FnMut(&mut [f64]),
    start: Vec<f64>,
    min_magnitude: f64,
    opts: ArnoldiOptions,
) -> Result<Vec<RitzPair>> {
    let n = start.len();
    let dim = opts.dim.max(opts.nev + 8).min(n);
    let keep = (opts.nev + 4).min(dim.saturating_sub(4)).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut next = start;
    let mut seed = 1u64;
    for cycle in 0..opts.max_cycles {
        while basis.len() < dim {
            let mut v = std::mem::take(&mut next);
            let mut ratio = orthonormalize(&basis, None, &mut v, None);
            while ratio < 1e-10 {
                fill_pseudo_random(&mut v, seed);
                seed += 1;
                ratio = orthonormalize(&basis, None, &mut v, None);
            }
            let mut w = v.clone();
            op(&mut w);
            next = w.clone();
            basis.push(v);
            images.push(w);
        }
        let m = basis.len();
        let h = Mat::<f64>::from_fn(m, m, |i, j| dot(&basis[i], &images[j]));
        let eig = Eigen::new_from_real(h.as_ref())
            .map_err(|e| Error::ConvergenceFailure(format!("projected eigenproblem: {e:?}")))?;
        let s = eig.S();
        let u = eig.U();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| s[b].norm().partial_cmp(&s[a].norm()).unwrap());

        // Ritz vectors and exact residuals for the leading candidates
        let mut pairs = Vec::new();
        let mut all_converged = true;
        let mut wanted = 0;
        for &k in order.iter().take(keep) {
            let theta = s[k];
            let mut xr = vec![0.0; n];
            let mut xi = vec![0.0; n];
            let mut wr = vec![0.0; n];
            let mut wi = vec![0.0; n];
            for j in 0..m {
                let c = u[(j, k)];
                axpy(c.re, &basis[j], &mut xr);
                axpy(c.im, &basis[j], &mut xi);
                axpy(c.re, &images[j], &mut wr);
                axpy(c.im, &images[j], &mut wi);
            }
            // r = W y - theta V y, complex
            let mut rr = 0.0;
            for t in 0..n {
                let re = wr[t] - (theta.re * xr[t] - theta.im * xi[t]);
                let im = wi[t] - (theta.re * xi[t] + theta.im * xr[t]);
                rr += re * re + im * im;
            }
            let xnorm = (dot(&xr, &xr) + dot(&xi, &xi)).sqrt();
            let residual = rr.sqrt() / (theta.norm() * xnorm).max(f64::MIN_POSITIVE);
            let is_wanted = theta.norm() > min_magnitude && wanted < opts.nev;
            if is_wanted {
                wanted += 1;
                if residual > opts.tol {
                    all_converged = false;
                }
            }
            pairs.push((theta, xr, xi, wr, wi, residual, is_wanted));
        }
        if all_converged && (wanted > 0 || cycle > 0) {
            return Ok(pairs
                .into_iter()
                .filter(|p| p.6)
                .map(|(theta, xr, _, _, _, residual, _)| RitzPair {
                    value: theta.re,
                    imag: theta.im,
                    vector: xr,
                    residual,
                })
                .collect());
        }
        if cycle + 1 == opts.max_cycles {
            let worst = pairs
                .iter()
                .filter(|p| p.6)
                .map(|p| p.5)
                .fold(0.0, f64::max);
            return Err(Error::ConvergenceFailure(format!(
                "{wanted} wanted eigenpairs, worst relative residual {worst:.2e} after {} cycles",
                opts.max_cycles
            )));
        }

        // residual direction of the last expansion step seeds the next cycle
        let mut f = next.clone();
        orthonormalize(&basis, None, &mut f, None);
        let mut new_basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut new_images: Vec<Vec<f64>> = Vec::with_capacity(dim);
        for (theta, xr, xi, wr, wi, _, _) in pairs {
            let mut parts = vec![(xr, wr)];
            if theta.im.abs() > 1e-14 * theta.norm() {
                parts.push((xi, wi));
            }
            for (mut v, mut w) in parts {
                if orthonormalize(&new_basis, Some(&new_images), &mut v, Some(&mut w)) > 1e-8 {
                    new_basis.push(v);
                    new_images.push(w);
                }
            }
            if new_basis.len() >= keep {
                break;
            }
        }
        basis = new_basis;
        images = new_images;
        next = f;
    }
    unreachable!("loop returns on the final cycle")
}
