//! Finite-difference modes of a laterally uniform film against the
//! transfer-matrix slab roots.

use fewg_core::constants::{wavelength_to_omega, SPEED_OF_LIGHT};
use fewg_core::geometry::{permittivity_profile, GridSpec, WaveguideGeometry};
use fewg_core::material::{MaterialLibrary, SILICA};
use fewg_core::modesolver::{solve_polarization, Polarization, SolverOptions};
use fewg_core::slab::{SlabPolarization, SlabStack};

fn film() -> WaveguideGeometry {
    let mut g = WaveguideGeometry::new(1.0, 400e-9).unwrap();
    g.top_cladding_material = SILICA.into();
    g
}

fn fd_index(pol: Polarization, h: f64, omega: f64) -> f64 {
    let lib = MaterialLibrary::default();
    let map = permittivity_profile(&film(), &lib, omega, &GridSpec::slab(h, 2e-6)).unwrap();
    let opts = SolverOptions {
        n_modes: 1,
        ..SolverOptions::default()
    };
    solve_polarization(&map, pol, &opts).unwrap()[0].n_eff
}

fn oracle(pol: SlabPolarization, omega: f64) -> f64 {
    let lib = MaterialLibrary::default();
    let n_core = lib.get("si3n4").unwrap().refractive_index(omega).unwrap();
    let n_clad = lib.get(SILICA).unwrap().refractive_index(omega).unwrap();
    let stack = SlabStack::film(n_clad, n_core, 400e-9, n_clad).unwrap();
    stack.guided_indices(pol, omega / SPEED_OF_LIGHT)[0]
}

#[test]
fn slab_index_and_convergence_order() {
    let omega = wavelength_to_omega(1.55e-6);
    for (pol, spol) in [(Polarization::QuasiTm, SlabPolarization::Tm), (Polarization::QuasiTe, SlabPolarization::Te)] {
        let exact = oracle(spol, omega);
        let errs: Vec<f64> = [40e-9, 20e-9, 10e-9].iter().map(|&h| (fd_index(pol, h, omega) - exact).abs()).collect();
        println!("{pol:?}: exact {exact:.8}, errors {errs:?}");
        assert!(errs[2] < 1e-3, "{pol:?} error at 10 nm: {}", errs[2]);
        let order = (errs[1] / errs[2]).log2();
        assert!((1.5..=2.5).contains(&order), "{pol:?} order {order}");
    }
}
