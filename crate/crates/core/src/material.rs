//! Lossless dispersive materials described by Sellmeier fits.
//!
//! `n^2 = 1 + sum_i B_i lambda^2 / (lambda^2 - C_i)` with `lambda` in micrometres
//! and `C_i` in square micrometres. Evaluation outside a material's valid band is
//! an error; the fits are never extrapolated.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{omega_to_wavelength, BAND_MAX_WAVELENGTH, BAND_MIN_WAVELENGTH};
use crate::error::{Error, Result};

pub const VACUUM: &str = "vacuum";
pub const SILICA: &str = "sio2";
pub const SILICON_NITRIDE: &str = "si3n4";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellmeierTerm {
    pub b: f64,
    /// Resonance term in um^2.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    pub id: String,
    pub terms: Vec<SellmeierTerm>,
    /// Valid wavelength interval in metres; `None` means unrestricted.
    pub valid_band: Option<(f64, f64)>,
    /// Free-form provenance tag carried into output metadata.
    #[serde(default)]
    pub version: String,
}

/// On-disk material description: `{ id, B: [..], C: [..], band_nm: [min, max] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialRecord {
    pub id: String,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub band_nm: Option<[f64; 2]>,
    #[serde(default)]
    pub version: Option<String>,
}

impl MaterialModel {
    pub fn new(
        id: impl Into<String>,
        terms: Vec<SellmeierTerm>,
        valid_band: Option<(f64, f64)>,
    ) -> Result<Self> {
        let m = Self {
            id: id.into(),
            terms,
            valid_band,
            version: String::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn vacuum() -> Self {
        Self {
            id: VACUUM.into(),
            terms: Vec::new(),
            valid_band: None,
            version: "builtin".into(),
        }
    }

    /// Fused silica, Malitson (1965).
    pub fn silica() -> Self {
        Self {
            id: SILICA.into(),
            terms: vec![
                SellmeierTerm { b: 0.696_166_3, c: 0.068_404_3 * 0.068_404_3 },
                SellmeierTerm { b: 0.407_942_6, c: 0.116_241_4 * 0.116_241_4 },
                SellmeierTerm { b: 0.897_479_4, c: 9.896_161 * 9.896_161 },
            ],
            valid_band: Some((BAND_MIN_WAVELENGTH, BAND_MAX_WAVELENGTH)),
            version: "malitson-1965".into(),
        }
    }

    /// Stoichiometric LPCVD silicon nitride, Luke et al. (2015).
    pub fn silicon_nitride() -> Self {
        Self {
            id: SILICON_NITRIDE.into(),
            terms: vec![
                SellmeierTerm { b: 3.0249, c: 0.135_340_6 * 0.135_340_6 },
                SellmeierTerm { b: 40314.0, c: 1239.842 * 1239.842 },
            ],
            valid_band: Some((BAND_MIN_WAVELENGTH, BAND_MAX_WAVELENGTH)),
            version: "luke-2015".into(),
        }
    }

    /// Dispersionless material of fixed index, valid everywhere.
    pub fn constant(id: impl Into<String>, index: f64) -> Result<Self> {
        let mut m = Self::new(
            id,
            vec![SellmeierTerm { b: index * index - 1.0, c: 0.0 }],
            None,
        )?;
        m.version = format!("constant-{index}");
        Ok(m)
    }

    pub fn from_record(rec: &MaterialRecord) -> Result<Self> {
        if rec.b.len() != rec.c.len() {
            return Err(Error::InvalidMaterial {
                id: rec.id.clone(),
                reason: format!("{} B coefficients but {} C coefficients", rec.b.len(), rec.c.len()),
            });
        }
        let terms = rec
            .b
            .iter()
            .zip(&rec.c)
            .map(|(&b, &c)| SellmeierTerm { b, c })
            .collect();
        let band = rec.band_nm.map(|[lo, hi]| (lo * 1e-9, hi * 1e-9));
        let mut m = Self::new(rec.id.clone(), terms, band)?;
        m.version = rec.version.clone().unwrap_or_else(|| "file".into());
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidMaterial { id: self.id.clone(), reason };
        if let Some((lo, hi)) = self.valid_band {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(bad(format!("invalid band [{lo:e}, {hi:e}]")));
            }
            for t in &self.terms {
                let c_m2 = t.c * 1e-12;
                if c_m2 >= lo * lo && c_m2 <= hi * hi {
                    return Err(bad("Sellmeier pole inside the valid band".into()));
                }
            }
            for k in 0..=64 {
                let lam = lo + (hi - lo) * k as f64 / 64.0;
                let n2 = self.n_squared_unchecked(lam);
                if !(n2 >= 1.0) {
                    return Err(bad(format!("n^2 = {n2} < 1 at {lam:e} m")));
                }
            }
        } else if self.terms.iter().any(|t| t.c != 0.0 || t.b < 0.0) {
            return Err(bad("an unrestricted band requires constant, non-negative terms".into()));
        }
        Ok(())
    }

    fn n_squared_unchecked(&self, wavelength: f64) -> f64 {
        let l2 = (wavelength * 1e6).powi(2);
        1.0 + self
            .terms
            .iter()
            .map(|t| t.b * l2 / (l2 - t.c))
            .sum::<f64>()
    }

    pub fn contains_wavelength(&self, wavelength: f64) -> bool {
        match self.valid_band {
            None => true,
            // half a part per billion of slack for grids built from the band edges
            Some((lo, hi)) => wavelength >= lo * (1.0 - 5e-10) && wavelength <= hi * (1.0 + 5e-10),
        }
    }

    pub fn index_at_wavelength(&self, wavelength: f64) -> Result<f64> {
        if !self.contains_wavelength(wavelength) {
            let (min, max) = self.valid_band.unwrap_or((0.0, f64::INFINITY));
            return Err(Error::OutOfBand {
                material: self.id.clone(),
                wavelength,
                min,
                max,
            });
        }
        Ok(self.n_squared_unchecked(wavelength).sqrt())
    }

    /// Real refractive index at angular frequency `omega` (rad/s).
    pub fn refractive_index(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("omega must be positive, got {omega}")));
        }
        self.index_at_wavelength(omega_to_wavelength(omega))
    }

    pub fn permittivity(&self, omega: f64) -> Result<f64> {
        self.refractive_index(omega).map(|n| n * n)
    }
}

/// Named collection of materials with the built-in defaults preloaded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialLibrary {
    materials: BTreeMap<String, MaterialModel>,
}

impl Default for MaterialLibrary {
    fn default() -> Self {
        let mut materials = BTreeMap::new();
        for m in [
            MaterialModel::vacuum(),
            MaterialModel::silica(),
            MaterialModel::silicon_nitride(),
        ] {
            materials.insert(m.id.clone(), m);
        }
        Self { materials }
    }
}

#[derive(Deserialize)]
struct MaterialFile {
    #[serde(alias = "materials")]
    material: Vec<MaterialRecord>,
}

impl MaterialLibrary {
    pub fn get(&self, id: &str) -> Result<&MaterialModel> {
        self.materials
            .get(id)
            .ok_or_else(|| Error::UnknownMaterial(id.to_string()))
    }

    pub fn insert(&mut self, m: MaterialModel) {
        self.materials.insert(m.id.clone(), m);
    }

    pub fn iter(&self) -> impl Iterator<Item = &MaterialModel> {
        self.materials.values()
    }

    /// Parses a JSON array/object or a TOML file with `[[material]]` tables.
    pub fn parse_records(text: &str, is_json: bool) -> Result<Vec<MaterialRecord>> {
        if is_json {
            let value: serde_json::Value =
                serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let recs = if value.is_array() {
                serde_json::from_value::<Vec<MaterialRecord>>(value)
            } else if value.get("id").is_some() {
                serde_json::from_value::<MaterialRecord>(value).map(|r| vec![r])
            } else {
                serde_json::from_value::<MaterialFile>(value).map(|f| f.material)
            };
            recs.map_err(|e| Error::InvalidInput(e.to_string()))
        } else {
            toml::from_str::<MaterialFile>(text)
                .map(|f| f.material)
                .map_err(|e| Error::InvalidInput(e.to_string()))
        }
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        for rec in Self::parse_records(&text, is_json)? {
            self.insert(MaterialModel::from_record(&rec)?);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::wavelength_to_omega;

    /// Malitson silica evaluated by hand at 1.55 um.
    fn malitson_reference(lam_um: f64) -> f64 {
        let l2 = lam_um * lam_um;
        let n2 = 1.0
            + 0.6961663 * l2 / (l2 - 0.0684043f64.powi(2))
            + 0.4079426 * l2 / (l2 - 0.1162414f64.powi(2))
            + 0.8974794 * l2 / (l2 - 9.896161f64.powi(2));
        n2.sqrt()
    }

    #[test]
    fn vacuum_is_unity_everywhere() {
        let v = MaterialModel::vacuum();
        for w in [1e12, 1.2e15, 1e18] {
            assert_eq!(v.refractive_index(w).unwrap(), 1.0);
        }
    }

    #[test]
    fn silica_at_telecom() {
        let n = MaterialModel::silica()
            .refractive_index(wavelength_to_omega(1.55e-6))
            .unwrap();
        assert!((n - malitson_reference(1.55)).abs() < 1e-12);
        // regression constant
        assert!((n - 1.444_023).abs() < 1e-5, "{n}");
    }

    #[test]
    fn nitride_at_telecom() {
        let n = MaterialModel::silicon_nitride()
            .refractive_index(wavelength_to_omega(1.55e-6))
            .unwrap();
        let l2: f64 = 1.55 * 1.55;
        let reference = (1.0 + 3.0249 * l2 / (l2 - 0.1353406f64.powi(2))
            + 40314.0 * l2 / (l2 - 1239.842f64.powi(2)))
        .sqrt();
        assert!((n - reference).abs() < 1e-12);
        assert!((n - 1.996_25).abs() < 1e-4, "{n}");
    }

    #[test]
    fn out_of_band_is_an_error() {
        let err = MaterialModel::silica().index_at_wavelength(3.0e-6).unwrap_err();
        assert!(matches!(err, Error::OutOfBand { .. }));
        assert!(MaterialModel::silicon_nitride().index_at_wavelength(500e-9).is_err());
    }

    #[test]
    fn normal_dispersion_over_band() {
        for m in [MaterialModel::silica(), MaterialModel::silicon_nitride()] {
            let mut prev = f64::INFINITY;
            for k in 0..=200 {
                let lam = 780e-9 + (2.5e-6 - 780e-9) * k as f64 / 200.0;
                let n = m.index_at_wavelength(lam).unwrap();
                assert!(n >= 1.0);
                assert!(n < prev, "{} not decreasing at {lam}", m.id);
                prev = n;
            }
        }
    }

    #[test]
    fn pole_in_band_rejected() {
        let err = MaterialModel::new(
            "bad",
            vec![SellmeierTerm { b: 1.0, c: 1.0 }],
            Some((0.8e-6, 1.2e-6)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMaterial { .. }));
    }

    #[test]
    fn records_parse_from_json_and_toml() {
        let json = r#"{ "id": "glass", "B": [1.1], "C": [0.01], "band_nm": [700, 2600] }"#;
        let recs = MaterialLibrary::parse_records(json, true).unwrap();
        let m = MaterialModel::from_record(&recs[0]).unwrap();
        let n = m.index_at_wavelength(1.0e-6).unwrap();
        assert!((n * n - (1.0 + 1.1 / (1.0 - 0.01))).abs() < 1e-12);

        let toml = "[[material]]\nid = \"glass\"\nB = [1.1]\nC = [0.01]\nband_nm = [700.0, 2600.0]\n";
        let recs = MaterialLibrary::parse_records(toml, false).unwrap();
        assert_eq!(recs[0].id, "glass");
        assert!(MaterialModel::from_record(&recs[0])
            .unwrap()
            .index_at_wavelength(3.0e-6)
            .is_err());
    }
}
