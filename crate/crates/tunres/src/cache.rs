//! Coefficient store: the scale-free limit-problem outputs, keyed by a
//! content hash of everything that influenced them. Records are immutable;
//! a colliding insert with different content is an integrity error rather
//! than an overwrite.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tunres_core::geometry::WaveguideSpec;
use tunres_core::Complex;

use crate::config::CoefficientParams;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tip exponents of the cone cap with the azimuthal sector of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralRecord {
    pub mu: Vec<f64>,
    pub mu_m: Vec<usize>,
    /// Integrator truncation scale of the shooting solve, quoted
    /// conservatively; the root bracketing itself is at machine width.
    pub mu_err: f64,
    pub lambda1_sq: f64,
    pub lambda2_sq: f64,
    /// Richardson remainder estimate `|extrapolated - fine|` per threshold.
    pub lambda_err: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorRecord {
    pub k0_sq: f64,
    /// Richardson remainder estimate `|extrapolated - fine|`.
    pub k0_err: f64,
    pub b: [f64; 2],
    /// Relative singular admixture left in each tip fit.
    pub b_spurious: [f64; 2],
    /// Field-weighted mode mass `int H |v0|^2`; half the spin splitting.
    /// Present only when the device carries an active solenoid.
    pub zeeman_overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionRecord {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Richardson remainder estimates `|extrapolated - fine|`.
    pub alpha_err: f64,
    pub beta_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub k_sq: Vec<f64>,
    pub a: Vec<Complex>,
    pub amp: Vec<Complex>,
    /// Leak in the outgoing-energy identity per scan point.
    pub flux_defect: Vec<f64>,
    /// Tip-fit rms residual per scan point.
    pub fit_rms: Vec<f64>,
}

/// Chamber response coefficients at the configured detunings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetunedRecord {
    pub k_sq: Vec<f64>,
    pub c: Vec<[Complex; 2]>,
    pub d: Vec<[Complex; 2]>,
}

/// One immutable cache entry: everything the asymptotic formulas need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub version: String,
    pub params: CoefficientParams,
    pub spectral: SpectralRecord,
    pub resonator: ResonatorRecord,
    pub junction: JunctionRecord,
    pub channel: ChannelRecord,
    pub detuned: Option<DetunedRecord>,
}

/// Key material: the geometry with the diameter normalized out (records
/// describe the scale-free limit objects), the stage parameters, and the
/// tool version.
#[derive(Serialize)]
struct KeyMaterial<'a> {
    geometry: WaveguideSpec,
    params: &'a CoefficientParams,
    version: &'a str,
}

/// Content hash a coefficient record is stored under.
pub fn content_hash(geometry: &WaveguideSpec, params: &CoefficientParams) -> String {
    let mut scale_free = geometry.clone();
    scale_free.eps = 0.0;
    let material = KeyMaterial {
        geometry: scale_free,
        params,
        version: TOOL_VERSION,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// The store file: a hash-keyed map, kept sorted for stable bytes.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct CacheStore {
    #[serde(default)]
    pub records: BTreeMap<String, CoefficientRecord>,
    #[serde(skip)]
    path: PathBuf,
}

impl CacheStore {
    /// Load the store at `path`; a missing file is an empty store.
    pub fn load(path: &Path) -> Result<CacheStore, String> {
        let mut store = if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read cache {}: {e}", path.display()))?;
            serde_json::from_str::<CacheStore>(&text)
                .map_err(|e| format!("cache {} is corrupt: {e}", path.display()))?
        } else {
            CacheStore::default()
        };
        store.path = path.to_path_buf();
        Ok(store)
    }

    pub fn get(&self, hash: &str) -> Option<&CoefficientRecord> {
        self.records.get(hash)
    }

    /// Insert a record. Same hash with identical content is an idempotent
    /// no-op; different content under the same hash is refused.
    pub fn insert(&mut self, hash: String, record: CoefficientRecord) -> Result<(), String> {
        if let Some(existing) = self.records.get(&hash) {
            if *existing == record {
                return Ok(());
            }
            return Err(format!(
                "cache record {hash} already exists with different content; remove it first"
            ));
        }
        self.records.insert(hash, record);
        Ok(())
    }

    pub fn remove(&mut self, hash: &str) -> bool {
        self.records.remove(hash).is_some()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    pub fn save(&self) -> Result<(), String> {
        let mut text = serde_json::to_string_pretty(self).expect("store serializes");
        text.push('\n');
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| format!("cannot create {}: {e}", parent.display()))?;
            }
        }
        std::fs::write(&self.path, text)
            .map_err(|e| format!("cannot write cache {}: {e}", self.path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tunres_core::geometry::reference_spec;

    fn sample_record() -> CoefficientRecord {
        CoefficientRecord {
            version: TOOL_VERSION.into(),
            params: CoefficientParams::default(),
            spectral: SpectralRecord {
                mu: vec![1.7, 3.1],
                mu_m: vec![0, 1],
                mu_err: 1e-9,
                lambda1_sq: 5.78,
                lambda2_sq: 14.68,
                lambda_err: [1e-6, 2e-6],
            },
            resonator: ResonatorRecord {
                k0_sq: 10.8,
                k0_err: 1e-4,
                b: [6.27, 6.27],
                b_spurious: [1e-3, 1e-3],
                zeeman_overlap: None,
            },
            junction: JunctionRecord {
                mu: 1.7,
                alpha: 3.36,
                beta: 3.1e-3,
                alpha_err: 1e-5,
                beta_err: 1e-7,
            },
            channel: ChannelRecord {
                k_sq: vec![10.8],
                a: vec![Complex::new(-0.69, 12.5)],
                amp: vec![Complex::new(2.77, -2.2)],
                flux_defect: vec![1e-3],
                fit_rms: vec![1e-4],
            },
            detuned: None,
        }
    }

    #[test]
    fn store_roundtrip_is_immutable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        let mut store = CacheStore::load(&path).unwrap();
        let rec = sample_record();
        store.insert("abc".into(), rec.clone()).unwrap();
        store.insert("abc".into(), rec.clone()).unwrap();
        let mut other = rec.clone();
        other.junction.alpha += 1.0;
        assert!(store.insert("abc".into(), other).is_err());
        store.save().unwrap();
        let reloaded = CacheStore::load(&path).unwrap();
        assert_eq!(reloaded.records.len(), 1);
        assert_eq!(reloaded.get("abc"), Some(&rec));
    }

    #[test]
    fn diameter_is_normalized_out_of_the_key() {
        // records hold scale-free limit constants, so two devices differing
        // only in diameter share one record
        let params = CoefficientParams::default();
        let a = content_hash(&reference_spec(0.1, None), &params);
        let b = content_hash(&reference_spec(0.2, None), &params);
        assert_eq!(a, b);
        let c = content_hash(&reference_spec(0.1, Some(0.5)), &params);
        assert_ne!(a, c, "the solenoid is part of the key");
    }

    proptest! {
        // any perturbation of a keyed field must change the hash
        #[test]
        fn perturbed_configs_never_collide(field in 0usize..12, scale in 1.001f64..2.0) {
            let spec = reference_spec(0.1, Some(0.5));
            let params = CoefficientParams::default();
            let base = content_hash(&spec, &params);
            let mut spec2 = spec.clone();
            let mut params2 = params.clone();
            match field {
                0 => params2.section_h *= scale,
                1 => params2.resonator_h *= scale,
                2 => params2.junction_h *= scale,
                3 => params2.junction_trunc *= scale,
                4 => params2.channel_h *= scale,
                5 => params2.channel_length *= scale,
                6 => params2.channel_n_ev += 1,
                7 => params2.detunings.push(1.3 * scale),
                8 => spec2.narrows[0].half_angle *= scale,
                9 => spec2.narrows[1].rho_match *= scale,
                10 => spec2.solenoid.as_mut().unwrap().h0 *= scale,
                _ => spec2.solenoid.as_mut().unwrap().cutoff.0 *= scale,
            }
            let perturbed = content_hash(&spec2, &params2);
            prop_assert_ne!(base, perturbed);
        }
    }
}
