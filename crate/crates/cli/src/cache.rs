//! Content-addressed store of cross-section mode sets.
//!
//! An entry is named by the SHA-256 of the solver version and every input that
//! shapes the solution. Entries are written once, through a temporary file
//! and a rename, under a per-key lock that serializes threads and processes.
//! Unreadable entries are moved aside and recomputed.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime};

use serde::Serialize;
use sha2::{Digest, Sha256};

use fewg_core::export::{decode_modes, encode_modes};
use fewg_core::modesolver::{solve_modes, SOLVER_VERSION};
use fewg_core::sweep::CompactWindow;
use fewg_core::{Error, GridSpec, MaterialLibrary, ModeSolution, Result, Routing, SolverOptions, WaveguideGeometry};

const ENTRY_EXT: &str = "modes";
const STALE_LOCK: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Default)]
pub struct CacheStats {
    pub hits: AtomicUsize,
    pub misses: AtomicUsize,
    pub writes: AtomicUsize,
    pub quarantined: AtomicUsize,
}

impl CacheStats {
    pub fn snapshot(&self) -> [usize; 4] {
        [&self.hits, &self.misses, &self.writes, &self.quarantined].map(|a| a.load(Ordering::SeqCst))
    }
}

#[derive(Debug)]
pub struct ModeCache {
    dir: PathBuf,
    version: String,
    pub stats: CacheStats,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

#[derive(Serialize)]
struct KeyInputs<'a> {
    solver_version: &'a str,
    geometry: &'a WaveguideGeometry,
    materials: Vec<&'a fewg_core::MaterialModel>,
    /// Exact bit pattern so nearby frequencies never share an entry.
    omega_bits: String,
    grid: &'a GridSpec,
    options: &'a SolverOptions,
    compact: Option<CompactWindow>,
}

impl ModeCache {
    pub fn open(dir: &Path) -> Result<Self> {
        Self::with_version(dir, SOLVER_VERSION)
    }

    /// Cache bound to an explicit solver version tag.
    pub fn with_version(dir: &Path, version: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            version: version.to_string(),
            stats: CacheStats::default(),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Routing is excluded: it does not change the cross-section.
    pub fn key(
        &self,
        geometry: &WaveguideGeometry,
        materials: &MaterialLibrary,
        omega: f64,
        grid: &GridSpec,
        options: &SolverOptions,
        compact: Option<CompactWindow>,
    ) -> Result<String> {
        let geometry = WaveguideGeometry {
            routing: Routing::Straight,
            ..geometry.clone()
        };
        let mut ids = vec![&geometry.core_material, &geometry.substrate_material, &geometry.top_cladding_material];
        ids.sort();
        ids.dedup();
        let materials = ids.into_iter().map(|id| materials.get(id)).collect::<Result<Vec<_>>>()?;
        let inputs = KeyInputs {
            solver_version: &self.version,
            geometry: &geometry,
            materials,
            omega_bits: format!("{:016x}", omega.to_bits()),
            grid,
            options,
            compact,
        };
        let json = serde_json::to_vec(&inputs).map_err(|e| Error::Io(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(json)))
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.{ENTRY_EXT}"))
    }

    fn read(&self, key: &str) -> Option<Vec<ModeSolution>> {
        let path = self.entry_path(key);
        let bytes = fs::read(&path).ok()?;
        match decode_modes(&bytes) {
            Ok(d) if d.key == key && d.solver_version == self.version => Some(d.modes),
            Ok(d) => {
                self.quarantine(&path, &format!("identity mismatch (key {}, version {})", d.key, d.solver_version));
                None
            }
            Err(e) => {
                self.quarantine(&path, &e.to_string());
                None
            }
        }
    }

    fn quarantine(&self, path: &Path, reason: &str) {
        let stamp = SystemTime::now().duration_since(SystemTime::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let target = path.with_extension(format!("corrupt-{stamp}"));
        log::warn!("cache entry {} is unusable ({reason}); moved to {}", path.display(), target.display());
        if fs::rename(path, &target).is_ok() {
            self.stats.quarantined.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(key.to_string()).or_default().clone()
    }

    /// Returns the stored mode set for `key`, or runs `solve` and stores it.
    pub fn get_or_solve(&self, key: &str, solve: impl FnOnce() -> Result<Vec<ModeSolution>>) -> Result<Vec<ModeSolution>> {
        if let Some(m) = self.read(key) {
            self.stats.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(m);
        }
        let lock = self.key_lock(key);
        let _thread_guard = lock.lock().unwrap();
        let _file_guard = FileLock::acquire(&self.dir.join(format!("{key}.lock")))?;
        if let Some(m) = self.read(key) {
            self.stats.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(m);
        }
        self.stats.misses.fetch_add(1, Ordering::SeqCst);
        let modes = solve()?;
        let bytes = encode_modes(&modes, &self.version, key)?;
        let tmp = self.dir.join(format!("{key}.tmp-{}", std::process::id()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.entry_path(key))?;
        self.stats.writes.fetch_add(1, Ordering::SeqCst);
        Ok(modes)
    }

    /// Solver closure for sweeps; "no guided mode" is stored as an empty set.
    pub fn solver<'a>(
        &'a self,
        geometry: &'a WaveguideGeometry,
        materials: &'a MaterialLibrary,
        grid: &'a GridSpec,
        options: &'a SolverOptions,
        compact: Option<CompactWindow>,
    ) -> impl Fn(f64) -> Result<Vec<ModeSolution>> + Sync + 'a {
        move |omega| {
            let key = self.key(geometry, materials, omega, grid, options, compact)?;
            self.get_or_solve(&key, || match solve_modes(geometry, materials, omega, grid, options) {
                Ok(set) => Ok(match compact {
                    Some(c) => set.modes.iter().map(|m| m.compact(0.5 * geometry.core_width, c.lateral, c.height)).collect(),
                    None => set.modes,
                }),
                Err(Error::NoGuidedMode { .. }) => Ok(Vec::new()),
                Err(e) => Err(e),
            })
        }
    }
}

/// Exclusive lock file, removed on drop. Locks older than the stale limit
/// are assumed abandoned by a crashed process.
struct FileLock(PathBuf);

impl FileLock {
    fn acquire(path: &Path) -> Result<Self> {
        loop {
            match OpenOptions::new().write(true).create_new(true).open(path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(Self(path.to_path_buf()));
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let stale = fs::metadata(path)
                        .and_then(|m| m.modified())
                        .ok()
                        .and_then(|t| t.elapsed().ok())
                        .is_some_and(|age| age > STALE_LOCK);
                    if stale {
                        log::warn!("removing stale cache lock {}", path.display());
                        let _ = fs::remove_file(path);
                    } else {
                        std::thread::sleep(Duration::from_millis(20));
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Drop for FileLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}
