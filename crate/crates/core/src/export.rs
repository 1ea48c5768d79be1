//! CSV and JSON writers with `#`-prefixed metadata headers, and the binary
//! mode-set format used by the solve cache.
//!
//! Column contracts:
//! * coupling (spectra, maps, resonator combs): `beta, omega_rad_s, omega_eV,
//!   family, density_per_rad_s, density_per_eV`; the background channel uses
//!   the family label `background`.
//! * loss spectrum: `energy_eV, intensity`.
//! * waveform: `r_par_pulse_frame_m, re, im, abs`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::{omega_to_ev, ELEMENTARY_CHARGE, HBAR};
use crate::coupling::{CouplingMap, CouplingSpectrum};
use crate::error::{Error, Result};
use crate::modesolver::ModeSolution;
use crate::quantum::SynthEels;
use crate::waveform::WaveformResult;

pub const COUPLING_COLUMNS: [&str; 6] = ["beta", "omega_rad_s", "omega_eV", "family", "density_per_rad_s", "density_per_eV"];
pub const EELS_COLUMNS: [&str; 2] = ["energy_eV", "intensity"];
pub const WAVEFORM_COLUMNS: [&str; 4] = ["r_par_pulse_frame_m", "re", "im", "abs"];

/// Ordered `key: value` metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        // header lines must stay single-line
        let v = value.to_string().replace(['\n', '\r'], " ");
        self.0.push((key.to_string(), v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Header line stating the per-eV conversion.
    pub fn with_unit_note(self) -> Self {
        self.with("density_per_eV", format!("density_per_rad_s * e / hbar, hbar = {HBAR:e} J s, e = {ELEMENTARY_CHARGE:e} C"))
    }

    fn to_json(&self) -> serde_json::Map<String, serde_json::Value> {
        self.0.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect()
    }
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

/// Writes header comments then the table.
pub fn write_csv<W: Write>(mut out: W, meta: &Metadata, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    for (k, v) in &meta.0 {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(columns).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// A parsed CSV file: metadata, header and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub metadata: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.column(name).ok_or_else(|| Error::Corrupt(format!("missing column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| r[k].parse::<f64>().map_err(|e| Error::Corrupt(format!("column `{name}`: {e}"))))
            .collect()
    }
}

pub fn read_csv<R: Read>(mut input: R) -> Result<CsvTable> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut metadata = Metadata::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim_start();
        if let Some((k, v)) = body.split_once(": ") {
            metadata.push(k, v);
        }
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let corrupt = |e: csv::Error| Error::Corrupt(e.to_string());
    let columns = r.headers().map_err(corrupt)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(String::from).collect()).map_err(corrupt))
        .collect::<Result<_>>()?;
    Ok(CsvTable { metadata, columns, rows })
}

pub fn read_csv_file(path: &Path) -> Result<CsvTable> {
    read_csv(std::fs::File::open(path)?)
}

fn coupling_row(beta: f64, omega: f64, family: &str, d: f64) -> Vec<String> {
    vec![fmt(beta), fmt(omega), fmt(omega_to_ev(omega)), family.to_string(), fmt(d), fmt(CouplingSpectrum::per_ev(d))]
}

pub fn spectrum_rows(s: &CouplingSpectrum) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(s.omega.len() * (s.per_family.len() + 1));
    for (name, d) in s.channels() {
        for (w, v) in s.omega.iter().zip(d) {
            rows.push(coupling_row(s.beam.beta, *w, name, *v));
        }
    }
    rows
}

pub fn map_rows(m: &CouplingMap) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (ib, &beta) in m.beta.iter().enumerate() {
        for (name, grid) in m.per_family.iter().map(|(k, v)| (k.as_str(), v)).chain([(crate::coupling::BACKGROUND, &m.background)]) {
            for (iw, &w) in m.omega.iter().enumerate() {
                rows.push(coupling_row(beta, w, name, grid[ib][iw]));
            }
        }
    }
    rows
}

pub fn eels_rows(e: &SynthEels) -> Vec<Vec<String>> {
    e.energy_ev.iter().zip(&e.intensity).map(|(x, y)| vec![fmt(*x), fmt(*y)]).collect()
}

pub fn waveform_rows(w: &WaveformResult) -> Vec<Vec<String>> {
    w.r_tilde
        .iter()
        .zip(&w.phi)
        .map(|(r, p)| vec![fmt(*r), fmt(p.re), fmt(p.im), fmt(p.norm())])
        .collect()
}

/// `{"metadata": {...}, "data": ...}`, pretty-printed with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut out: W, meta: &Metadata, data: &T) -> Result<()> {
    let mut root = serde_json::Map::new();
    root.insert("metadata".into(), serde_json::Value::Object(meta.to_json()));
    root.insert("data".into(), serde_json::to_value(data).map_err(|e| Error::Io(e.to_string()))?);
    serde_json::to_writer_pretty(&mut out, &root).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

const MODESET_MAGIC: &[u8; 8] = b"FEWGMODE";
pub const MODESET_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModeSetHeader {
    solver_version: String,
    key: String,
    /// Modes with their float arrays moved to the binary body.
    modes: Vec<ModeSolution>,
    lengths: Vec<[usize; 3]>,
}

/// Encodes a mode set: magic, format version, JSON header length, JSON
/// header, little-endian `f32` arrays, then a SHA-256 of everything before.
pub fn encode_modes(modes: &[ModeSolution], solver_version: &str, key: &str) -> Result<Vec<u8>> {
    let mut stripped = Vec::with_capacity(modes.len());
    let mut lengths = Vec::with_capacity(modes.len());
    let mut body: Vec<u8> = Vec::new();
    for m in modes {
        let arrays = [&m.transverse, &m.longitudinal, &m.fingerprint.values];
        lengths.push([arrays[0].len(), arrays[1].len(), arrays[2].len()]);
        for a in arrays {
            a.iter().for_each(|v| body.extend_from_slice(&v.to_le_bytes()));
        }
        let mut s = m.clone();
        s.transverse.clear();
        s.longitudinal.clear();
        s.fingerprint.values.clear();
        stripped.push(s);
    }
    let header = serde_json::to_vec(&ModeSetHeader {
        solver_version: solver_version.to_string(),
        key: key.to_string(),
        modes: stripped,
        lengths,
    })
    .map_err(|e| Error::Io(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + body.len() + 32);
    out.extend_from_slice(MODESET_MAGIC);
    out.extend_from_slice(&MODESET_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Decoded mode set with the identity it was stored under.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedModes {
    pub solver_version: String,
    pub key: String,
    pub modes: Vec<ModeSolution>,
}

pub fn decode_modes(bytes: &[u8]) -> Result<DecodedModes> {
    let bad = |m: &str| Error::Corrupt(m.to_string());
    if bytes.len() < 16 + 32 || &bytes[..8] != MODESET_MAGIC {
        return Err(bad("not a mode-set file"));
    }
    let (payload, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let version = u32::from_le_bytes(payload[8..12].try_into().unwrap());
    if version != MODESET_FORMAT_VERSION {
        return Err(bad(&format!("format version {version}")));
    }
    let hlen = u32::from_le_bytes(payload[12..16].try_into().unwrap()) as usize;
    let header_end = 16usize.checked_add(hlen).filter(|&e| e <= payload.len()).ok_or_else(|| bad("header length"))?;
    let header: ModeSetHeader = serde_json::from_slice(&payload[16..header_end]).map_err(|e| Error::Corrupt(e.to_string()))?;
    if header.lengths.len() != header.modes.len() {
        return Err(bad("array table does not match the modes"));
    }
    let mut body = payload[header_end..].chunks_exact(4);
    if body.len() * 4 != payload.len() - header_end || body.len() != header.lengths.iter().flatten().sum::<usize>() {
        return Err(bad("body length"));
    }
    let mut take = |n: usize| -> Vec<f32> { body.by_ref().take(n).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect() };
    let mut modes = header.modes;
    for (m, l) in modes.iter_mut().zip(&header.lengths) {
        m.transverse = take(l[0]);
        m.longitudinal = take(l[1]);
        m.fingerprint.values = take(l[2]);
    }
    Ok(DecodedModes {
        solver_version: header.solver_version,
        key: header.key,
        modes,
    })
}
