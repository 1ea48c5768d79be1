//! Solve-cache behaviour, in process. The eigensolve counter is global, so
//! every test holds `SERIAL` to keep other solves out of its count.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::time::Duration;

use fewg_cli::ModeCache;
use fewg_core::constants::wavelength_to_omega;
use fewg_core::modesolver::{eigensolve_count, SOLVER_VERSION};
use fewg_core::{CompactWindow, GridSpec, MaterialLibrary, ModeSolution, SolverOptions, WaveguideGeometry};

static SERIAL: Mutex<()> = Mutex::new(());

struct Setup {
    geo: WaveguideGeometry,
    lib: MaterialLibrary,
    grid: GridSpec,
    opts: SolverOptions,
    omega: f64,
}

fn setup() -> Setup {
    Setup {
        geo: WaveguideGeometry::new(0.8e-6, 0.65e-6).unwrap(),
        lib: MaterialLibrary::default(),
        grid: GridSpec {
            spacing: 50e-9,
            ..GridSpec::default()
        },
        opts: SolverOptions {
            n_modes: 3,
            ..SolverOptions::default()
        },
        omega: wavelength_to_omega(1.2e-6),
    }
}

fn entries(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(ext))
        .collect();
    v.sort();
    v
}

fn same_modes(a: &[ModeSolution], b: &[ModeSolution]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.family, y.family);
        assert_eq!(x.n_eff.to_bits(), y.n_eff.to_bits());
        assert_eq!(x.transverse, y.transverse);
        assert_eq!(x.longitudinal, y.longitudinal);
    }
}

#[test]
fn warm_call_performs_no_eigensolve() {
    let _g = SERIAL.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = setup();
    let cache = ModeCache::open(dir.path()).unwrap();
    let solve = cache.solver(&s.geo, &s.lib, &s.grid, &s.opts, Some(CompactWindow::default()));

    let before = eigensolve_count();
    let cold = solve(s.omega).unwrap();
    assert!(eigensolve_count() > before, "cold call must solve");
    assert!(!cold.is_empty());

    let before = eigensolve_count();
    let warm = solve(s.omega).unwrap();
    assert_eq!(eigensolve_count(), before, "warm call must not solve");
    same_modes(&cold, &warm);
    assert_eq!(cache.stats.snapshot(), [1, 1, 1, 0]);

    // a fresh handle on the same directory also hits
    let again = ModeCache::open(dir.path()).unwrap();
    let before = eigensolve_count();
    let w2 = again.solver(&s.geo, &s.lib, &s.grid, &s.opts, Some(CompactWindow::default()))(s.omega).unwrap();
    assert_eq!(eigensolve_count(), before);
    same_modes(&cold, &w2);
}

#[test]
fn version_bump_invalidates_entries() {
    let _g = SERIAL.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = setup();
    let old = ModeCache::open(dir.path()).unwrap();
    let old_key = old.key(&s.geo, &s.lib, s.omega, &s.grid, &s.opts, None).unwrap();
    old.solver(&s.geo, &s.lib, &s.grid, &s.opts, None)(s.omega).unwrap();

    let bumped = ModeCache::with_version(dir.path(), &format!("{SOLVER_VERSION}+next")).unwrap();
    let new_key = bumped.key(&s.geo, &s.lib, s.omega, &s.grid, &s.opts, None).unwrap();
    assert_ne!(old_key, new_key, "version is part of the key");
    let before = eigensolve_count();
    bumped.solver(&s.geo, &s.lib, &s.grid, &s.opts, None)(s.omega).unwrap();
    assert!(eigensolve_count() > before, "bumped version must not reuse the old entry");

    // an entry stored under a colliding key but an older version is rejected
    let calls = AtomicUsize::new(0);
    let modes = bumped
        .get_or_solve(&old_key, || {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(Vec::new())
        })
        .unwrap();
    assert!(modes.is_empty());
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    assert_eq!(bumped.stats.quarantined.load(Ordering::SeqCst), 1);
    assert_eq!(entries(dir.path(), ".modes").len(), 2);
}

#[test]
fn key_tracks_inputs_but_not_routing() {
    let _g = SERIAL.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = setup();
    let c = ModeCache::open(dir.path()).unwrap();
    let k = |geo: &WaveguideGeometry, omega: f64, grid: &GridSpec| c.key(geo, &s.lib, omega, grid, &s.opts, None).unwrap();
    let base = k(&s.geo, s.omega, &s.grid);
    assert_eq!(base.len(), 64);
    assert_eq!(base, k(&s.geo, s.omega, &s.grid));
    assert_ne!(base, k(&s.geo, s.omega * (1.0 + f64::EPSILON), &s.grid));
    assert_ne!(base, k(&WaveguideGeometry::new(0.81e-6, 0.65e-6).unwrap(), s.omega, &s.grid));
    let finer = GridSpec {
        spacing: 40e-9,
        ..s.grid.clone()
    };
    assert_ne!(base, k(&s.geo, s.omega, &finer));
    let routed = WaveguideGeometry {
        routing: fewg_core::Routing::sampled(vec![0.0, 1e-5, 2e-5], vec![0.0, 1.1e-5, 2.3e-5]).unwrap(),
        ..s.geo.clone()
    };
    assert_eq!(base, k(&routed, s.omega, &s.grid));
}

#[test]
fn concurrent_cold_callers_write_once() {
    let _g = SERIAL.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = setup();
    let key = ModeCache::open(dir.path()).unwrap().key(&s.geo, &s.lib, s.omega, &s.grid, &s.opts, None).unwrap();
    let solves = Arc::new(AtomicUsize::new(0));
    let barrier = Arc::new(Barrier::new(2));
    // separate handles share only the directory, as separate processes would
    let handles: Vec<_> = (0..2)
        .map(|_| {
            let (dir, key, solves, barrier) = (dir.path().to_path_buf(), key.clone(), solves.clone(), barrier.clone());
            let s = setup();
            std::thread::spawn(move || {
                let cache = ModeCache::open(&dir).unwrap();
                barrier.wait();
                let modes = cache
                    .get_or_solve(&key, || {
                        solves.fetch_add(1, Ordering::SeqCst);
                        std::thread::sleep(Duration::from_millis(200));
                        fewg_core::modesolver::solve_modes(&s.geo, &s.lib, s.omega, &s.grid, &s.opts).map(|m| m.modes)
                    })
                    .unwrap();
                (modes, cache.stats.snapshot())
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(solves.load(Ordering::SeqCst), 1);
    let writes: usize = results.iter().map(|(_, st)| st[2]).sum();
    assert_eq!(writes, 1);
    same_modes(&results[0].0, &results[1].0);
    assert_eq!(entries(dir.path(), ".modes"), vec![format!("{key}.modes")]);
    assert!(entries(dir.path(), ".lock").is_empty());
}

#[test]
fn corrupt_entry_is_quarantined_and_recomputed() {
    let _g = SERIAL.lock().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = setup();
    let cache = ModeCache::open(dir.path()).unwrap();
    let solve = cache.solver(&s.geo, &s.lib, &s.grid, &s.opts, None);
    let first = solve(s.omega).unwrap();
    let key = cache.key(&s.geo, &s.lib, s.omega, &s.grid, &s.opts, None).unwrap();
    let path = dir.path().join(format!("{key}.modes"));
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&path, &bytes).unwrap();

    let before = eigensolve_count();
    let second = solve(s.omega).unwrap();
    assert!(eigensolve_count() > before);
    same_modes(&first, &second);
    assert_eq!(cache.stats.quarantined.load(Ordering::SeqCst), 1);
    assert_eq!(entries(dir.path(), ".modes").len(), 1);
    let quarantined: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().contains(".corrupt-"))
        .collect();
    assert_eq!(quarantined.len(), 1);
}
