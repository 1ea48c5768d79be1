use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use num_complex::Complex64;

use fewg_bench::{beam, coarse_grid, narrow_guide, small_sweep};
use fewg_core::constants::{wavelength_to_omega, SPEED_OF_LIGHT};
use fewg_core::coupling::{coupling_spectrum, default_omega_grid};
use fewg_core::export::{decode_modes, encode_modes};
use fewg_core::modesolver::solve_modes;
use fewg_core::quantum::sideband_probabilities;
use fewg_core::resonator::{resonator_spectrum, ResonatorOptions};
use fewg_core::waveform::{synthesize_waveform, SynthesisPath, WaveformOptions};
use fewg_core::{MaterialLibrary, ModeEnvelope, ResonatorParams, Routing, SolverOptions, WaveformParams};

fn mode_solve(c: &mut Criterion) {
    let (geo, lib, grid) = (narrow_guide(), MaterialLibrary::default(), coarse_grid());
    let opts = SolverOptions {
        n_modes: 4,
        ..SolverOptions::default()
    };
    let omega = wavelength_to_omega(1.3e-6);
    let mut g = c.benchmark_group("modesolver");
    g.sample_size(10);
    g.bench_function("solve_50nm_4modes", |b| b.iter(|| solve_modes(&geo, &lib, black_box(omega), &grid, &opts).unwrap()));
    g.finish();
}

fn spectra(c: &mut Criterion) {
    let sweep = small_sweep();
    let beam = beam();
    let families = sweep.interpolants(&beam).unwrap();
    let omega = default_omega_grid(2000);
    c.bench_function("coupling_spectrum_2000", |b| b.iter(|| coupling_spectrum(&families, &beam, black_box(&omega)).unwrap()));

    let open = coupling_spectrum(&families, &beam, &omega).unwrap();
    let params = ResonatorParams::new(500e9, 20.0, omega[1000]).unwrap();
    let mut g = c.benchmark_group("resonator");
    g.sample_size(10);
    g.bench_function("comb_fsr500ghz_f20", |b| {
        b.iter(|| resonator_spectrum(black_box(&open), &params, &ResonatorOptions::default()).unwrap())
    });
    g.finish();

    let strengths: BTreeMap<String, f64> = [("TM00", 1.2), ("TE00", 0.05), ("background", 0.01)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    c.bench_function("sideband_probabilities", |b| b.iter(|| sideband_probabilities(black_box(&strengths), None).unwrap()));
}

fn waveforms(c: &mut Criterion) {
    let length = 50e-6;
    let env = ModeEnvelope::from_fn(length, 1024, |z| Complex64::new((std::f64::consts::PI * z / length).sin(), 0.0)).unwrap();
    let params = WaveformParams {
        v: 0.6 * SPEED_OF_LIGHT,
        v_g: SPEED_OF_LIGHT / 2.2,
        beta2: 4e-17,
        omega_m: wavelength_to_omega(1.3e-6),
        routing: Routing::Straight,
    };
    let mut g = c.benchmark_group("waveform");
    g.sample_size(10);
    for (name, path) in [("delta", SynthesisPath::Delta), ("kernel", SynthesisPath::Kernel)] {
        let opts = WaveformOptions {
            path: Some(path),
            ..WaveformOptions::default()
        };
        g.bench_function(name, |b| b.iter(|| synthesize_waveform(&env, black_box(&params), &opts).unwrap()));
    }
    g.finish();
}

fn cache_format(c: &mut Criterion) {
    let modes = solve_modes(&narrow_guide(), &MaterialLibrary::default(), wavelength_to_omega(1.3e-6), &coarse_grid(), &SolverOptions::default())
        .unwrap()
        .modes;
    let bytes = encode_modes(&modes, "bench", "key").unwrap();
    c.bench_function("encode_modes", |b| b.iter(|| encode_modes(black_box(&modes), "bench", "key").unwrap()));
    c.bench_function("decode_modes", |b| b.iter_batched(|| bytes.clone(), |v| decode_modes(&v).unwrap(), BatchSize::SmallInput));
}

criterion_group!(benches, mode_solve, spectra, waveforms, cache_format);
criterion_main!(benches);
