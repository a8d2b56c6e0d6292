//! Pipeline configuration: a JSON file describing the device, the run mode,
//! and every numerical knob of the solver stages. All tolerances have
//! documented defaults; nothing numerical is hidden in the code.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tunres_core::geometry::WaveguideSpec;

/// What a `run` invocation computes.
///
/// `coefficients` solves the scale-free limit problems and stores them;
/// every other mode starts from those records (via the cache) and is cheap
/// by comparison. `ladder` sweeps the asymptotic formulas over a strictly
/// decreasing list of diameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Coefficients,
    Asymptotics,
    Direct,
    Full,
    Ladder { eps: Vec<f64> },
}

impl RunMode {
    pub fn name(&self) -> &'static str {
        match self {
            RunMode::Coefficients => "coefficients",
            RunMode::Asymptotics => "asymptotics",
            RunMode::Direct => "direct",
            RunMode::Full => "full",
            RunMode::Ladder { .. } => "ladder",
        }
    }
}

/// Numerical parameters of the coefficient stages. These enter the cache
/// key: any change invalidates stored records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientParams {
    /// Tip exponents to extract from the cone cap (first one drives the
    /// asymptotics, second one bounds the remainder).
    pub cap_count: usize,
    /// Cross-section eigenvalue grid; solved at `h` and `h/2` and
    /// extrapolated.
    pub section_h: f64,
    /// Chamber eigenvalue grid; solved at `h` and `h/2` and extrapolated.
    pub resonator_h: f64,
    /// Detunings `k^2 - k_0^2` at which the chamber response coefficients
    /// are tabulated. Empty list skips the table (leading order only).
    /// Each must stay outside the deflation floor of the chamber solve.
    pub detunings: Vec<f64>,
    /// Unit-neck grid; solved at `h` and `h/2` and extrapolated.
    pub junction_h: f64,
    /// Truncation radius of the unit-neck exterior domain.
    pub junction_trunc: f64,
    /// Lead grid; solved at `h` and `h/2` and extrapolated.
    pub channel_h: f64,
    /// Lead length used for the scattering fit.
    pub channel_length: f64,
    /// Evanescent modes kept in the lead closure.
    pub channel_n_ev: usize,
    /// Wavenumber scan points across the propagation window (the chamber
    /// eigenvalue itself is always added as a scan point).
    pub channel_k_count: usize,
}

impl Default for CoefficientParams {
    fn default() -> Self {
        CoefficientParams {
            cap_count: 2,
            section_h: 0.02,
            resonator_h: 0.05,
            detunings: vec![-0.9, -0.5, 0.5, 0.9, 1.8],
            junction_h: 0.05,
            junction_trunc: 12.0,
            channel_h: 0.03,
            channel_length: 6.0,
            channel_n_ev: 6,
            channel_k_count: 5,
        }
    }
}

/// Numerical parameters of the direct cross-check solver. These never enter
/// the cache key; direct solves are not cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DirectParams {
    /// Grid spacing of the scattering solves.
    pub h: f64,
    /// Lead length beyond each tip.
    pub lead: f64,
    /// Evanescent modes kept in the face closures.
    pub n_evanescent: usize,
    /// Initial half-bracket of the peak search around the model's center.
    pub scan_bracket: f64,
    /// Sample count of the final least-squares peak fit.
    pub scan_fit_points: usize,
}

impl Default for DirectParams {
    fn default() -> Self {
        DirectParams {
            h: 0.04,
            lead: 1.5,
            n_evanescent: 6,
            scan_bracket: 0.15,
            scan_fit_points: 13,
        }
    }
}

/// The whole run description, deserialized from the `--config` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Device geometry. The diameter scale `eps` lives here; coefficient
    /// records are scale-free and ignore it.
    pub geometry: WaveguideSpec,
    pub mode: RunMode,
    /// Artifact directory, created if missing.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Coefficient store shared across runs.
    #[serde(default = "default_cache_file")]
    pub cache_file: PathBuf,
    #[serde(default)]
    pub coefficients: CoefficientParams,
    #[serde(default)]
    pub direct: DirectParams,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_cache_file() -> PathBuf {
    PathBuf::from("tunres-cache.json")
}

impl PipelineConfig {
    /// Read and schema-check a config file. The error list is exhaustive,
    /// not first-failure.
    pub fn load(path: &Path) -> Result<PipelineConfig, Vec<String>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| vec![format!("config parse error: {e}")])?;
        let violations = cfg.validate();
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(violations)
        }
    }

    /// Every schema violation in the config, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.geometry.validate() {
            v.push(format!("geometry: {e}"));
        }
        let [n0, n1] = &self.geometry.narrows;
        if (n0.half_angle - n1.half_angle).abs() > 1e-12 {
            v.push("geometry: the two narrows must share one cone angle (a single tip exponent drives the asymptotics)".into());
        }
        let c = &self.coefficients;
        for (name, val) in [
            ("coefficients.section_h", c.section_h),
            ("coefficients.resonator_h", c.resonator_h),
            ("coefficients.junction_h", c.junction_h),
            ("coefficients.junction_trunc", c.junction_trunc),
            ("coefficients.channel_h", c.channel_h),
            ("coefficients.channel_length", c.channel_length),
        ] {
            if !(val > 0.0 && val.is_finite()) {
                v.push(format!("{name} must be positive and finite (got {val})"));
            }
        }
        if c.cap_count == 0 {
            v.push("coefficients.cap_count must be at least 1".into());
        }
        if c.channel_k_count == 0 {
            v.push("coefficients.channel_k_count must be at least 1".into());
        }
        for &dk in &c.detunings {
            if !dk.is_finite() || dk.abs() < 0.1 {
                v.push(format!(
                    "coefficients.detunings entry {dk} is inside the chamber deflation floor (|dk| >= 0.1)"
                ));
            }
        }
        let d = &self.direct;
        for (name, val) in [
            ("direct.h", d.h),
            ("direct.lead", d.lead),
            ("direct.scan_bracket", d.scan_bracket),
        ] {
            if !(val > 0.0 && val.is_finite()) {
                v.push(format!("{name} must be positive and finite (got {val})"));
            }
        }
        if d.scan_fit_points < 5 {
            v.push("direct.scan_fit_points must be at least 5".into());
        }
        if let RunMode::Ladder { eps } = &self.mode {
            if eps.len() < 2 {
                v.push("ladder mode needs at least two diameters".into());
            }
            if !eps.windows(2).all(|w| w[0] > w[1]) {
                v.push("ladder diameters must be strictly decreasing".into());
            }
            if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
                v.push("ladder diameters must be positive and finite".into());
            }
        }
        v
    }
}
