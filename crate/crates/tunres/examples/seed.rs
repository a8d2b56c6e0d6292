//! Dev helper: seed a cache file with the frozen reference-device record.

use tunres::cache::{content_hash, CacheStore, ChannelRecord, CoefficientRecord, DetunedRecord, JunctionRecord, ResonatorRecord, SpectralRecord, TOOL_VERSION};
use tunres::config::PipelineConfig;
use tunres_core::Complex as C;

fn main() {
    let cfg_path = std::env::args().nth(1).expect("usage: seed <config.json>");
    let cfg: PipelineConfig =
        serde_json::from_str(&std::fs::read_to_string(&cfg_path).unwrap()).unwrap();
    let k0 = 10.8095319432;
    let zeeman = cfg.geometry.solenoid.as_ref().is_some_and(|s| s.h0 != 0.0);
    let dks = [-0.9, -0.5, 0.5, 0.9, 1.8];
    let cs = [
        [-31.2510, -32.9349],
        [-34.8584, -35.6175],
        [-43.6893, -43.5335],
        [-46.9834, -47.2725],
        [-53.3595, -57.1807],
    ];
    let ds = [
        [-11.7380, 11.7380],
        [-9.5253, 9.5253],
        [-1.9550, 1.9550],
        [2.0150, -2.0150],
        [13.3187, -13.3187],
    ];
    let record = CoefficientRecord {
        version: TOOL_VERSION.to_string(),
        params: cfg.coefficients.clone(),
        spectral: SpectralRecord {
            mu: vec![1.777288270159, 3.195691151012],
            mu_m: vec![0, 1],
            mu_err: 1e-9,
            lambda1_sq: 5.783185962946785,
            lambda2_sq: 14.681970642123895,
            lambda_err: [2e-9, 1e-8],
        },
        resonator: ResonatorRecord {
            k0_sq: k0,
            k0_err: 3.7e-3,
            b: [6.2737828914, 6.2737828914],
            b_spurious: [1e-3, 1e-3],
            zeeman_overlap: zeeman.then_some(0.147977),
        },
        junction: JunctionRecord {
            mu: 1.777288270159,
            alpha: 3.3653515465,
            beta: 0.0031257185,
            alpha_err: 1e-5,
            beta_err: 1e-7,
        },
        channel: ChannelRecord {
            k_sq: vec![k0],
            a: vec![C::new(-0.6925036, 12.4981211)],
            amp: vec![C::new(2.7668655, -2.2001495)],
            flux_defect: vec![1.8e-3],
            fit_rms: vec![1e-4],
        },
        detuned: Some(DetunedRecord {
            k_sq: dks.iter().map(|dk| k0 + dk).collect(),
            c: cs.iter().map(|r| [C::new(r[0], 0.0), C::new(r[1], 0.0)]).collect(),
            d: ds.iter().map(|r| [C::new(r[0], 0.0), C::new(r[1], 0.0)]).collect(),
        }),
    };
    let hash = content_hash(&cfg.geometry, &cfg.coefficients);
    let mut store = CacheStore::load(&cfg.cache_file).unwrap();
    store.insert(hash.clone(), record).unwrap();
    store.save().unwrap();
    println!("seeded {hash}");
}
