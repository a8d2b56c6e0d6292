//! Dev helper: print a reference-device pipeline config as JSON.

use tunres::config::{PipelineConfig, RunMode};
use tunres_core::geometry::reference_spec;

fn main() {
    let mode = match std::env::args().nth(1).as_deref() {
        Some("ladder") => RunMode::Ladder { eps: vec![0.2, 0.16, 0.12] },
        Some("direct") => RunMode::Direct,
        Some("full") => RunMode::Full,
        Some("coefficients") => RunMode::Coefficients,
        _ => RunMode::Asymptotics,
    };
    let h0: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let eps: f64 = std::env::args().nth(3).map(|s| s.parse().unwrap()).unwrap_or(0.25);
    let solenoid = if h0 != 0.0 { Some(h0) } else { None };
    let cfg = PipelineConfig {
        geometry: reference_spec(eps, solenoid),
        mode,
        output_dir: "out".into(),
        cache_file: "tunres-cache.json".into(),
        coefficients: Default::default(),
        direct: Default::default(),
    };
    println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
}
