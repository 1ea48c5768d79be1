//! Semi-vectorial finite-difference operators on the cell-centred grid.
//!
//! Quasi-TM acts on `E_y` and quasi-TE on `E_x`. Along the dominant-field
//! direction the stencil discretizes `d/ds [ (1/eps) d/ds (eps E) ]`; across it
//! the plain three-point Laplacian is used. The diagonal carries `k^2 eps`, so the
//! eigenvalues are `beta_z^2`.

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::geometry::{Boundary, EpsMap};

use super::Polarization;

/// Off-diagonal couplings of one row: `(column, coefficient)`.
fn row_entries(map: &EpsMap, pol: Polarization, i: usize, j: usize, out: &mut Vec<(usize, f64)>) -> f64 {
    let g = &map.grid;
    let inv_h2 = 1.0 / (g.h * g.h);
    let e0 = map.eps[g.index(i, j)];
    let mut diag = 0.0;
    // (neighbor index if inside, neighbor eps, is the neighbor along the dominant direction)
    let mut visit = |ni: Option<(usize, usize)>, ghost_mirror: bool, along_field: bool| {
        match ni {
            Some((a, b)) => {
                let en = map.eps[g.index(a, b)];
                if along_field {
                    let s = en + e0;
                    out.push((g.index(a, b), 2.0 * en / s * inv_h2));
                    diag -= 2.0 * e0 / s * inv_h2;
                } else {
                    out.push((g.index(a, b), inv_h2));
                    diag -= inv_h2;
                }
            }
            None => {
                // mirror ghost equals the edge cell (same eps), so its coupling cancels the diagonal term
                if !ghost_mirror {
                    diag -= inv_h2;
                }
            }
        }
    };
    let mirror = g.lateral_boundary == Boundary::Mirror;
    let x_along = pol == Polarization::QuasiTe;
    visit((i > 0).then(|| (i - 1, j)), mirror, x_along);
    visit((i + 1 < g.nx).then(|| (i + 1, j)), mirror, x_along);
    visit((j > 0).then(|| (i, j - 1)), false, !x_along);
    visit((j + 1 < g.ny).then(|| (i, j + 1)), false, !x_along);
    diag
}

/// Sparse `A - shift I` in compressed-column form.
pub fn assemble_shifted(map: &EpsMap, pol: Polarization, k0: f64, shift: f64) -> Result<SparseColMat<usize, f64>> {
    let g = &map.grid;
    let mut triplets = Vec::with_capacity(5 * g.len());
    let mut row = Vec::with_capacity(4);
    for j in 0..g.ny {
        for i in 0..g.nx {
            row.clear();
            let r = g.index(i, j);
            let diag = row_entries(map, pol, i, j, &mut row);
            triplets.push(Triplet::new(r, r, diag + k0 * k0 * map.eps[r] - shift));
            for &(c, v) in &row {
                triplets.push(Triplet::new(r, c, v));
            }
        }
    }
    SparseColMat::try_new_from_triplets(g.len(), g.len(), &triplets)
        .map_err(|e| Error::ConvergenceFailure(format!("operator assembly failed: {e:?}")))
}

/// `y = A x` without the shift; used for residual checks.
pub fn apply(map: &EpsMap, pol: Polarization, k0: f64, x: &[f64], y: &mut [f64]) {
    let g = &map.grid;
    let mut row = Vec::with_capacity(4);
    for j in 0..g.ny {
        for i in 0..g.nx {
            row.clear();
            let r = g.index(i, j);
            let diag = row_entries(map, pol, i, j, &mut row);
            let mut acc = (diag + k0 * k0 * map.eps[r]) * x[r];
            for &(c, v) in &row {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }
}
