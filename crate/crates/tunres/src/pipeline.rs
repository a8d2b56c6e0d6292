//! Run orchestration: solve the limit problems into a coefficient record,
//! assemble the asymptotic characteristics per spin, cross-check with the
//! direct solver, and emit artifacts.
//!
//! The expensive work is the coefficient extraction; it runs once per
//! content hash and lands in the store. Everything downstream (poles,
//! profiles, tables, ladders) is closed-form assembly from the record and
//! costs nothing, so the fast modes stay fast across repeated invocations.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use tunres_core::asymptotics::{
    resonance_pole, transmission_at, transmission_profile, AsymptoticModel, CoeffTable, Order,
    Pole, Profile,
};
use tunres_core::channel::{channel_constants, ChannelTable};
use tunres_core::direct::{
    resonance_scan_3d, resonance_scan_axi, BodyMode, DirectSetup, ResonanceScan, ScanDeltas,
};
use tunres_core::geometry::{Spin, WaveguideSpec};
use tunres_core::junction::neck_response;
use tunres_core::linalg::richardson;
use tunres_core::resonator::{axi_mode, regularized_expansion, zeeman_overlap, ResonatorMode};
use tunres_core::spectral::{cap_spectrum, section_thresholds};
use tunres_core::Complex as C;

use crate::cache::{
    content_hash, CacheStore, ChannelRecord, CoefficientRecord, DetunedRecord, JunctionRecord,
    ResonatorRecord, SpectralRecord, TOOL_VERSION,
};
use crate::config::{PipelineConfig, RunMode};
use crate::emit::{num, Emitter};

/// Above this diameter the leading-order formulas carry visible
/// next-order corrections; runs still proceed, with a warning.
pub const REGIME_EPS: f64 = 0.15;

/// Energy samples per peak in the transmission table, in units of the
/// width. Odd count, so the exact center (hence the exact maximum) is a row.
const TABLE_HALF_SPAN: f64 = 6.0;
const TABLE_POINTS: usize = 121;

// ---------------------------------------------------------------------------
// errors

/// A failed run: the stage that broke, what happened, and the process exit
/// code (`2` configuration or I/O, `3` numerics).
#[derive(Debug)]
pub struct RunError {
    pub stage: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl RunError {
    fn config(stage: &'static str, message: impl Into<String>) -> RunError {
        RunError { stage, message: message.into(), exit_code: 2 }
    }

    fn numerical(stage: &'static str, err: &tunres_core::Error) -> RunError {
        RunError { stage, message: err.to_string(), exit_code: 3 }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

// ---------------------------------------------------------------------------
// coefficient extraction

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Solve every limit problem the asymptotic formulas need and bundle the
/// outputs. The record is scale-free: nothing in it depends on `eps`.
pub fn compute_coefficients(cfg: &PipelineConfig) -> Result<CoefficientRecord, RunError> {
    let p = &cfg.coefficients;
    let geometry = &cfg.geometry;

    // tip exponents first; they are cheap and everything quotes them
    let caps = cap_spectrum(geometry.narrows[0].half_angle, p.cap_count.max(2))
        .map_err(|e| RunError::numerical("spectral", &e))?;
    let section = section_thresholds(&geometry.cross_section, p.section_h, 2)
        .map_err(|e| RunError::numerical("spectral", &e))?;
    let spectral = SpectralRecord {
        mu: caps.iter().map(|c| c.mu).collect(),
        mu_m: caps.iter().map(|c| c.m).collect(),
        mu_err: 1e-9,
        lambda1_sq: section.lambda1_sq(),
        lambda2_sq: section.lambda2_sq(),
        lambda_err: [
            (section.lambda_sq[0] - section.lambda_sq_discrete[0]).abs(),
            (section.lambda_sq[1] - section.lambda_sq_discrete[1]).abs(),
        ],
    };
    let window = (spectral.lambda1_sq, spectral.lambda2_sq);

    // the chamber problem never sees the field or the diameter; strip the
    // solenoid so the axisymmetric solver accepts the geometry
    let mut chamber_spec = geometry.clone();
    chamber_spec.solenoid = None;

    type ResonatorOut = (ResonatorRecord, Option<DetunedRecord>, ResonatorMode);
    let (res_out, junc_out): (Result<ResonatorOut, RunError>, Result<JunctionRecord, RunError>) =
        rayon::join(
            || {
                let mode = axi_mode(&chamber_spec, p.resonator_h, window)
                    .map_err(|e| RunError::numerical("resonator", &e))?;
                let overlap = match &geometry.solenoid {
                    Some(s) if s.h0 != 0.0 => Some(zeeman_overlap(&mode, geometry)),
                    _ => None,
                };
                let record = ResonatorRecord {
                    k0_sq: mode.k0_sq,
                    k0_err: (mode.k0_sq - mode.k0_sq_fine).abs(),
                    b: mode.b,
                    b_spurious: mode.spurious,
                    zeeman_overlap: overlap,
                };
                let detuned = if p.detunings.is_empty() {
                    None
                } else {
                    // detunings are taken from the discrete eigenvalue: the
                    // deflated solve lives on that grid and its pole sits at
                    // the discrete value, not the extrapolated one
                    let mut rec = DetunedRecord { k_sq: Vec::new(), c: Vec::new(), d: Vec::new() };
                    for &dk in &p.detunings {
                        let k_sq = mode.k0_sq_fine + dk;
                        let ex = regularized_expansion(&chamber_spec, &mode, k_sq)
                            .map_err(|e| RunError::numerical("resonator", &e))?;
                        rec.k_sq.push(k_sq);
                        rec.c.push(ex.c);
                        rec.d.push(ex.d);
                    }
                    Some(rec)
                };
                Ok((record, detuned, mode))
            },
            || {
                let coarse = neck_response(&geometry.narrows[0], p.junction_h, p.junction_trunc)
                    .map_err(|e| RunError::numerical("junction", &e))?;
                let fine =
                    neck_response(&geometry.narrows[0], 0.5 * p.junction_h, p.junction_trunc)
                        .map_err(|e| RunError::numerical("junction", &e))?;
                let ex = |c: f64, f: f64| richardson(c, f, 2);
                let alpha = [ex(coarse.alpha[0], fine.alpha[0]), ex(coarse.alpha[1], fine.alpha[1])];
                let beta = [ex(coarse.beta[0], fine.beta[0]), ex(coarse.beta[1], fine.beta[1])];
                // the model takes one constant per kind; the wing spread and
                // the extrapolation remainder both go into the error bar
                Ok(JunctionRecord {
                    mu: fine.mu,
                    alpha: 0.5 * (alpha[0] + alpha[1]),
                    beta: 0.5 * (beta[0] + beta[1]),
                    alpha_err: (alpha[0] - fine.alpha[0]).abs().max((alpha[0] - alpha[1]).abs()),
                    beta_err: (beta[0] - fine.beta[0]).abs().max((beta[0] - beta[1]).abs()),
                })
            },
        );
    let (resonator, detuned, _mode) = res_out?;
    let junction = junc_out?;

    // lead constants over the window; the eigenvalue (and its Zeeman-shifted
    // companions, when a field is on) are always scan points so the profile
    // assembly reads constants from where the peaks actually sit
    let span = window.1 - window.0;
    let mut ks = if p.channel_k_count == 1 {
        Vec::new()
    } else {
        linspace(window.0 + 0.05 * span, window.1 - 0.05 * span, p.channel_k_count)
    };
    ks.push(resonator.k0_sq);
    if let Some(ov) = resonator.zeeman_overlap {
        ks.push(resonator.k0_sq + ov);
        ks.push(resonator.k0_sq - ov);
    }
    ks.sort_by(f64::total_cmp);
    ks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    ks.retain(|&k| window.0 < k && k < window.1);

    let solves: Result<Vec<_>, RunError> = ks
        .par_iter()
        .map(|&k_sq| {
            channel_constants(
                &chamber_spec,
                window,
                p.channel_h,
                p.channel_length,
                p.channel_n_ev,
                k_sq,
            )
            .map_err(|e| RunError::numerical("channel", &e))
        })
        .collect();
    let mut channel = ChannelRecord {
        k_sq: Vec::new(),
        a: Vec::new(),
        amp: Vec::new(),
        flux_defect: Vec::new(),
        fit_rms: Vec::new(),
    };
    for c in solves? {
        channel.k_sq.push(c.k_sq);
        channel.a.push(c.a);
        channel.amp.push(c.amp);
        channel.flux_defect.push(c.flux_defect);
        channel.fit_rms.push(c.fit_rms);
    }

    Ok(CoefficientRecord {
        version: TOOL_VERSION.to_string(),
        params: p.clone(),
        spectral,
        resonator,
        junction,
        channel,
        detuned,
    })
}

// ---------------------------------------------------------------------------
// asymptotic assembly

/// The spin-resolved models plus everything derived from them at one
/// diameter. Without an active field the two spins coincide exactly.
pub struct AsymOutcome {
    pub plus: AsymptoticModel,
    pub minus: AsymptoticModel,
    pub field_on: bool,
    pub pole_plus: Pole,
    pub pole_minus: Pole,
    pub profile_plus: Profile,
    pub profile_minus: Profile,
    /// Pole real parts recomputed with the detuned coefficient table, when
    /// the record carries one.
    pub full_centers: Option<[f64; 2]>,
}

/// Build the per-spin asymptotic models from a coefficient record. The
/// Zeeman term moves the chamber eigenvalue by the field-weighted mode
/// mass: up for spin plus, down for spin minus.
pub fn models_from(
    record: &CoefficientRecord,
    geometry: &WaveguideSpec,
) -> (AsymptoticModel, AsymptoticModel, bool) {
    let mu = &record.spectral.mu;
    let base = AsymptoticModel {
        mu1: mu[0],
        tau: if mu.len() > 1 { (mu[1] - mu[0]).min(1.9) } else { 1.9 },
        alpha: record.junction.alpha,
        beta: record.junction.beta,
        d: (geometry.narrows[1].tip_x - geometry.narrows[0].tip_x).abs(),
        lambda1_sq: record.spectral.lambda1_sq,
        lambda2_sq: record.spectral.lambda2_sq,
        k0_sq: record.resonator.k0_sq,
        b: [C::new(record.resonator.b[0], 0.0), C::new(record.resonator.b[1], 0.0)],
        channel: ChannelTable {
            k_sq: record.channel.k_sq.clone(),
            a: record.channel.a.clone(),
            amp: record.channel.amp.clone(),
        },
        coeffs: record.detuned.as_ref().map(|det| CoeffTable {
            k_sq: det.k_sq.clone(),
            c: det.c.clone(),
            d: det.d.clone(),
        }),
    };
    match record.resonator.zeeman_overlap {
        Some(ov) if ov != 0.0 => {
            let mut plus = base.clone();
            let mut minus = base;
            plus.k0_sq += ov;
            minus.k0_sq -= ov;
            (plus, minus, true)
        }
        _ => (base.clone(), base, false),
    }
}

/// Locate the poles and assemble the peak profiles for both spins.
pub fn assemble_asymptotics(
    record: &CoefficientRecord,
    geometry: &WaveguideSpec,
) -> Result<AsymOutcome, RunError> {
    let eps = geometry.eps;
    let (plus, minus, field_on) = models_from(record, geometry);
    let stage = |e: &tunres_core::Error| RunError::numerical("asymptotics", e);
    let pole_plus = resonance_pole(&plus, eps, Order::Leading).map_err(|e| stage(&e))?;
    let profile_plus = transmission_profile(&plus, eps, &pole_plus).map_err(|e| stage(&e))?;
    let (pole_minus, profile_minus) = if field_on {
        let pm = resonance_pole(&minus, eps, Order::Leading).map_err(|e| stage(&e))?;
        let prof = transmission_profile(&minus, eps, &pm).map_err(|e| stage(&e))?;
        (pm, prof)
    } else {
        (pole_plus.clone(), profile_plus.clone())
    };
    let full_centers = match &plus.coeffs {
        Some(_) => {
            let fp = resonance_pole(&plus, eps, Order::Full).map_err(|e| stage(&e))?;
            let fm = if field_on {
                resonance_pole(&minus, eps, Order::Full).map_err(|e| stage(&e))?
            } else {
                fp.clone()
            };
            Some([fp.k_re_sq, fm.k_re_sq])
        }
        None => None,
    };
    Ok(AsymOutcome {
        plus,
        minus,
        field_on,
        pole_plus,
        pole_minus,
        profile_plus,
        profile_minus,
        full_centers,
    })
}

/// Energy grid of the transmission table: both peaks sampled on a
/// width-scaled stencil, merged and clipped to the propagation window.
fn table_grid(out: &AsymOutcome) -> Vec<f64> {
    let mut grid = Vec::with_capacity(2 * TABLE_POINTS);
    let profiles: &[&Profile] = if out.field_on {
        &[&out.profile_plus, &out.profile_minus]
    } else {
        &[&out.profile_plus]
    };
    for prof in profiles {
        for i in 0..TABLE_POINTS {
            let t = -TABLE_HALF_SPAN + 2.0 * TABLE_HALF_SPAN * i as f64 / (TABLE_POINTS - 1) as f64;
            grid.push(prof.center + t * prof.width);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.retain(|&k| out.plus.lambda1_sq < k && k < out.plus.lambda2_sq);
    grid
}

fn polarization(tp: f64, tm: f64) -> f64 {
    if tp + tm == 0.0 {
        0.0
    } else {
        (tp - tm) / (tp + tm)
    }
}

// ---------------------------------------------------------------------------
// summary shapes

#[derive(Serialize)]
pub struct SpinPeak {
    pub spin: &'static str,
    /// Resonant energy: pole real part.
    pub k_r_sq: f64,
    /// Full width of the peak at half height.
    pub width: f64,
    /// Peak transmission probability.
    pub t_max: f64,
    /// Tip asymmetry `|b1| / |b2|`.
    pub q: f64,
    pub pole_iterations: usize,
    /// Resonant energy with the detuned chamber coefficients, when the
    /// record tabulates them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_r_sq_detuned: Option<f64>,
}

#[derive(Serialize)]
pub struct AsymSummary {
    pub order: &'static str,
    pub peaks: Vec<SpinPeak>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    /// Whether the spin separation exceeds both linewidths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolvable: Option<bool>,
}

#[derive(Serialize)]
pub struct ScanSummary {
    pub spin: &'static str,
    pub center: f64,
    pub width: f64,
    pub height: f64,
    pub rms: f64,
    pub solves: usize,
    /// Extra solves spent bracketing the peak before the scan proper;
    /// zero inside the asymptotic regime where the model guess suffices.
    pub sweep_solves: usize,
    pub worst_defect: f64,
    pub defect_bound: f64,
    /// Direct minus predicted, per observable.
    pub deltas: ScanDeltas,
}

#[derive(Serialize)]
pub struct DirectSummary {
    pub solver: &'static str,
    pub h: f64,
    pub scans: Vec<ScanSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
}

#[derive(Serialize)]
pub struct LadderSummary {
    pub eps: Vec<f64>,
    /// Fitted exponent of the resonance shift `k0^2 - k_r^2` and its
    /// predicted value `2 mu1 + 1`.
    pub shift_slope: f64,
    pub shift_slope_target: f64,
    pub shift_prefactor: f64,
    /// Fitted exponent of the width and its predicted value `4 mu1 + 2`.
    pub width_slope: f64,
    pub width_slope_target: f64,
    pub width_prefactor: f64,
}

#[derive(Serialize)]
pub struct Summary {
    pub version: &'static str,
    pub mode: &'static str,
    pub hash: String,
    pub cache_hit: bool,
    pub eps: f64,
    pub warnings: Vec<String>,
    pub coefficients: CoefficientRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymptotics: Option<AsymSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct: Option<DirectSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderSummary>,
}

/// What `run` hands back to the caller for its closing line.
pub struct RunOutcome {
    pub hash: String,
    pub cache_hit: bool,
    pub artifacts: Vec<String>,
}

fn spin_peak(
    spin: &'static str,
    pole: &Pole,
    profile: &Profile,
    detuned_center: Option<f64>,
) -> SpinPeak {
    SpinPeak {
        spin,
        k_r_sq: profile.center,
        width: profile.width,
        t_max: profile.peak,
        q: profile.q,
        pole_iterations: pole.iterations,
        k_r_sq_detuned: detuned_center,
    }
}

fn asym_summary(out: &AsymOutcome) -> AsymSummary {
    let fc = out.full_centers;
    let mut peaks = vec![spin_peak("plus", &out.pole_plus, &out.profile_plus, fc.map(|c| c[0]))];
    let (mut separation, mut resolvable) = (None, None);
    if out.field_on {
        peaks.push(spin_peak("minus", &out.pole_minus, &out.profile_minus, fc.map(|c| c[1])));
        let sep = (out.profile_plus.center - out.profile_minus.center).abs();
        separation = Some(sep);
        resolvable = Some(sep > out.profile_plus.width.max(out.profile_minus.width));
    }
    AsymSummary { order: "leading", peaks, separation, resolvable }
}

// ---------------------------------------------------------------------------
// least squares on log-log ladders

/// Slope and intercept of `ln y` against `ln x`.
fn log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

// ---------------------------------------------------------------------------
// the run itself

fn scan_window(record: &CoefficientRecord) -> (f64, f64) {
    let (lo, hi) = (record.spectral.lambda1_sq, record.spectral.lambda2_sq);
    let pad = 0.02 * (hi - lo);
    (lo + pad, hi - pad)
}

/// Bracket the peak outside the asymptotic regime. The leading-order center
/// overshoots the true shift there, so the peak sits between the predicted
/// center and the unshifted chamber energy; a coarse transmission sweep over
/// that stretch ranks far above the nonresonant background and its argmax
/// lands inside the scan basin.
fn sweep_guess<F>(
    solve: &F,
    window: (f64, f64),
    predicted: f64,
    k0_spin: f64,
) -> Result<(f64, f64, usize), RunError>
where
    F: Fn(f64) -> Result<f64, tunres_core::Error>,
{
    let reach = (k0_spin - predicted).abs().max(1e-3);
    let lo = (predicted - 0.15 * reach).max(window.0);
    let hi = (k0_spin + 0.05 * reach).min(window.1);
    let spacing = ((hi - lo) / 120.0).max(5e-3);
    let n = ((hi - lo) / spacing).ceil() as usize + 1;
    let mut best = (f64::NEG_INFINITY, predicted);
    for i in 0..n {
        let k = lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64;
        let t = solve(k).map_err(|e| RunError::numerical("direct", &e))?;
        if t > best.0 {
            best = (t, k);
        }
    }
    Ok((best.1, spacing, n))
}

fn run_direct(
    cfg: &PipelineConfig,
    record: &CoefficientRecord,
    out: &AsymOutcome,
    emitter: &mut Emitter,
) -> Result<DirectSummary, RunError> {
    let d = &cfg.direct;
    let mut setup = DirectSetup::new(d.h);
    setup.lead = d.lead;
    setup.n_evanescent = d.n_evanescent;
    setup.body = BodyMode::Narrowed;
    let window = scan_window(record);
    let stage = |e: &tunres_core::Error| RunError::numerical("direct", e);

    let field_on = cfg.geometry.solenoid.as_ref().is_some_and(|s| s.h0 != 0.0);
    let axi = !field_on && cfg.geometry.cross_section.is_disk();
    let solver = if axi { "axisymmetric" } else { "full_3d" };
    let in_regime = cfg.geometry.eps <= REGIME_EPS;

    let sectors: &[(&'static str, Spin, &Profile, &AsymptoticModel)] = if field_on {
        &[
            ("plus", Spin::Plus, &out.profile_plus, &out.plus),
            ("minus", Spin::Minus, &out.profile_minus, &out.minus),
        ]
    } else {
        &[("plus", Spin::Plus, &out.profile_plus, &out.plus)]
    };

    let mut scans: Vec<(&'static str, &Profile, ResonanceScan, usize)> = Vec::new();
    for &(name, spin, profile, model) in sectors {
        let solve_t = |k: f64| -> Result<f64, tunres_core::Error> {
            let r = if axi {
                tunres_core::direct::scattering_axi(&cfg.geometry, &setup, k, true)?
            } else {
                tunres_core::direct::scattering_3d(
                    &cfg.geometry,
                    &setup,
                    k,
                    spin,
                    tunres_core::direct::Gauge::Fixed,
                    true,
                )?
            };
            Ok(r.transmission)
        };
        let (guess, bracket, sweep_solves) = if in_regime {
            (profile.center, d.scan_bracket, 0)
        } else {
            let (g, spacing, n) = sweep_guess(&solve_t, window, profile.center, model.k0_sq)?;
            (g, 2.0 * spacing, n)
        };
        let scan = if axi {
            resonance_scan_axi(&cfg.geometry, &setup, window, guess, bracket, d.scan_fit_points)
        } else {
            resonance_scan_3d(
                &cfg.geometry,
                &setup,
                spin,
                window,
                guess,
                bracket,
                d.scan_fit_points,
            )
        }
        .map_err(|e| stage(&e))?;
        scans.push((name, profile, scan, sweep_solves));
    }

    // every energy the scan visited, in evaluation order, for plotting
    for (spin, _, scan, _) in &scans {
        let rows: Vec<Vec<String>> =
            scan.samples.iter().map(|&(k, t)| vec![num(k), num(t)]).collect();
        emitter
            .csv(&format!("direct_scan_{spin}.csv"), &["k_sq", "transmission"], &rows)
            .map_err(|e| RunError::config("emit", e))?;
    }

    let separation = (scans.len() == 2).then(|| (scans[0].2.center - scans[1].2.center).abs());
    Ok(DirectSummary {
        solver,
        h: d.h,
        scans: scans
            .into_iter()
            .map(|(spin, predicted, scan, sweep_solves)| ScanSummary {
                spin,
                center: scan.center,
                width: scan.width,
                height: scan.height,
                rms: scan.rms,
                solves: scan.solves,
                sweep_solves,
                worst_defect: scan.worst_defect,
                defect_bound: scan.defect_bound,
                deltas: scan.deltas(predicted),
            })
            .collect(),
        separation,
    })
}

fn emit_transmission_tables(out: &AsymOutcome, eps: f64, emitter: &mut Emitter) -> Result<(), RunError> {
    let grid = table_grid(out);
    let mut rows = Vec::with_capacity(grid.len());
    let mut pol_rows = Vec::with_capacity(grid.len());
    for &k in &grid {
        let tp = transmission_at(&out.plus, eps, &out.profile_plus, k);
        let tm = if out.field_on {
            transmission_at(&out.minus, eps, &out.profile_minus, k)
        } else {
            tp
        };
        let p = polarization(tp, tm);
        rows.push(vec![num(k), num(tp), num(tm), num(p)]);
        pol_rows.push(vec![num(k), num(p)]);
    }
    emitter
        .csv("transmission.csv", &["k_sq", "t_plus", "t_minus", "polarization"], &rows)
        .map_err(|e| RunError::config("emit", e))?;
    if out.field_on {
        emitter
            .csv("polarization.csv", &["k_sq", "polarization"], &pol_rows)
            .map_err(|e| RunError::config("emit", e))?;
    }
    Ok(())
}

fn run_ladder(
    record: &CoefficientRecord,
    geometry: &WaveguideSpec,
    eps_list: &[f64],
    emitter: &mut Emitter,
) -> Result<LadderSummary, RunError> {
    let (plus, minus, field_on) = models_from(record, geometry);
    let stage = |e: &tunres_core::Error| RunError::numerical("asymptotics", e);
    let header = [
        "eps",
        "k_r_sq_plus",
        "width_plus",
        "t_max_plus",
        "k_r_sq_minus",
        "width_minus",
        "t_max_minus",
        "separation",
    ];
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut shifts = Vec::with_capacity(eps_list.len());
    let mut widths = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let pp = resonance_pole(&plus, eps, Order::Leading).map_err(|e| stage(&e))?;
        let prof_p = transmission_profile(&plus, eps, &pp).map_err(|e| stage(&e))?;
        let (prof_m, sep) = if field_on {
            let pm = resonance_pole(&minus, eps, Order::Leading).map_err(|e| stage(&e))?;
            let prof_m = transmission_profile(&minus, eps, &pm).map_err(|e| stage(&e))?;
            let sep = (prof_p.center - prof_m.center).abs();
            (prof_m, sep)
        } else {
            (prof_p.clone(), 0.0)
        };
        shifts.push(plus.k0_sq - prof_p.center);
        widths.push(prof_p.width);
        rows.push(vec![
            num(eps),
            num(prof_p.center),
            num(prof_p.width),
            num(prof_p.peak),
            num(prof_m.center),
            num(prof_m.width),
            num(prof_m.peak),
            num(sep),
        ]);
    }
    emitter.csv("ladder.csv", &header, &rows).map_err(|e| RunError::config("emit", e))?;

    let (shift_slope, shift_icpt) = log_fit(eps_list, &shifts);
    let (width_slope, width_icpt) = log_fit(eps_list, &widths);
    Ok(LadderSummary {
        eps: eps_list.to_vec(),
        shift_slope,
        shift_slope_target: 2.0 * plus.mu1 + 1.0,
        shift_prefactor: shift_icpt.exp(),
        width_slope,
        width_slope_target: 4.0 * plus.mu1 + 2.0,
        width_prefactor: width_icpt.exp(),
    })
}

fn regime_warnings(cfg: &PipelineConfig) -> Vec<String> {
    let mut warnings = Vec::new();
    let mut flag = |eps: f64| {
        if eps > REGIME_EPS {
            warnings.push(format!(
                "diameter eps = {eps} exceeds {REGIME_EPS}: the formulas are leading order in \
                 eps^(2 mu1 + 1) and next-order corrections are visible at this scale; \
                 cross-check with the direct solver"
            ));
        }
    };
    match &cfg.mode {
        RunMode::Ladder { eps } => eps.iter().copied().for_each(&mut flag),
        RunMode::Coefficients => {}
        _ => flag(cfg.geometry.eps),
    }
    if cfg.geometry.eps <= 0.0 && !matches!(cfg.mode, RunMode::Coefficients | RunMode::Ladder { .. })
    {
        warnings.push("geometry.eps must be positive for profile and direct modes".to_string());
    }
    warnings
}

/// Execute the configured run and write its artifacts. On failure the
/// output directory gets a `partial.json` marker naming the failed stage
/// and listing what was completed before it.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutcome, RunError> {
    let mut emitter =
        Emitter::new(&cfg.output_dir).map_err(|e| RunError::config("emit", e))?;
    match run_stages(cfg, &mut emitter) {
        Ok(outcome) => Ok(outcome),
        Err(err) => {
            emitter.flag_partial(err.stage, &err.message);
            Err(err)
        }
    }
}

fn run_stages(cfg: &PipelineConfig, emitter: &mut Emitter) -> Result<RunOutcome, RunError> {
    // eps must be usable before any solving when the mode needs it
    let needs_eps = !matches!(cfg.mode, RunMode::Coefficients | RunMode::Ladder { .. });
    if needs_eps && !(cfg.geometry.eps > 0.0 && cfg.geometry.eps.is_finite()) {
        return Err(RunError::config(
            "config",
            format!("geometry.eps = {} but this mode profiles one device", cfg.geometry.eps),
        ));
    }

    let hash = content_hash(&cfg.geometry, &cfg.coefficients);
    let mut store =
        CacheStore::load(&cfg.cache_file).map_err(|e| RunError::config("cache", e))?;
    let (record, cache_hit) = match store.get(&hash) {
        Some(existing) => {
            if existing.params != cfg.coefficients {
                return Err(RunError::config(
                    "cache",
                    format!(
                        "record {hash} does not match the requested solver parameters; \
                         remove it with `cache rm` and rerun"
                    ),
                ));
            }
            (existing.clone(), true)
        }
        None => {
            let record = compute_coefficients(cfg)?;
            store
                .insert(hash.clone(), record.clone())
                .map_err(|e| RunError::config("cache", e))?;
            store.save().map_err(|e| RunError::config("cache", e))?;
            (record, false)
        }
    };

    let warnings = regime_warnings(cfg);
    let mut summary = Summary {
        version: TOOL_VERSION,
        mode: cfg.mode.name(),
        hash: hash.clone(),
        cache_hit,
        eps: cfg.geometry.eps,
        warnings,
        coefficients: record.clone(),
        asymptotics: None,
        direct: None,
        ladder: None,
    };

    match &cfg.mode {
        RunMode::Coefficients => {}
        RunMode::Ladder { eps } => {
            summary.ladder = Some(run_ladder(&record, &cfg.geometry, eps, emitter)?);
        }
        RunMode::Asymptotics | RunMode::Direct | RunMode::Full => {
            let out = assemble_asymptotics(&record, &cfg.geometry)?;
            summary.asymptotics = Some(asym_summary(&out));
            if matches!(cfg.mode, RunMode::Asymptotics | RunMode::Full) {
                emit_transmission_tables(&out, cfg.geometry.eps, emitter)?;
            }
            if matches!(cfg.mode, RunMode::Direct | RunMode::Full) {
                summary.direct = Some(run_direct(cfg, &record, &out, emitter)?);
            }
        }
    }

    emitter.json("summary.json", &summary).map_err(|e| RunError::config("emit", e))?;
    let report = render_report(cfg, &summary);
    emitter.text("report.txt", &report).map_err(|e| RunError::config("emit", e))?;
    emitter.clear_partial();

    Ok(RunOutcome {
        hash,
        cache_hit,
        artifacts: emitter.written().to_vec(),
    })
}

// ---------------------------------------------------------------------------
// report

fn render_report(cfg: &PipelineConfig, s: &Summary) -> String {
    let mut r = String::new();
    let g = &cfg.geometry;
    let _ = writeln!(r, "resonant tunneling pipeline, mode `{}`", s.mode);
    let _ = writeln!(
        r,
        "device: diameter eps = {}, narrows at x = {} and x = {}, cone half-angle {:.6} rad",
        g.eps, g.narrows[0].tip_x, g.narrows[1].tip_x, g.narrows[0].half_angle
    );
    match &g.solenoid {
        Some(sol) if sol.h0 != 0.0 => {
            let _ = writeln!(
                r,
                "solenoid: strength h0 = {}, radius {}, centered at x = {}",
                sol.h0, sol.radius, sol.center[0]
            );
        }
        _ => {
            let _ = writeln!(r, "no magnetic field: the two spin states coincide");
        }
    }
    let _ = writeln!(
        r,
        "coefficient record {} ({})",
        &s.hash[..12],
        if s.cache_hit { "reused from the store" } else { "solved this run" }
    );

    let c = &s.coefficients;
    let _ = writeln!(r, "\nlimit-problem constants:");
    let _ = writeln!(
        r,
        "  tip exponent mu1 = {:.9} +- {:.1e} (next exponent {:.9})",
        c.spectral.mu[0],
        c.spectral.mu_err,
        c.spectral.mu.get(1).copied().unwrap_or(f64::NAN)
    );
    let _ = writeln!(
        r,
        "  propagation window lambda1^2 = {:.9} +- {:.1e}, lambda2^2 = {:.9} +- {:.1e}",
        c.spectral.lambda1_sq, c.spectral.lambda_err[0], c.spectral.lambda2_sq, c.spectral.lambda_err[1]
    );
    let _ = writeln!(
        r,
        "  chamber eigenvalue k0^2 = {:.9} +- {:.1e}, tip couplings b = [{:.7}, {:.7}]",
        c.resonator.k0_sq, c.resonator.k0_err, c.resonator.b[0], c.resonator.b[1]
    );
    if let Some(ov) = c.resonator.zeeman_overlap {
        let _ = writeln!(r, "  field-weighted mode mass = {ov:.9} (spin splitting {:.9})", 2.0 * ov);
    }
    let _ = writeln!(
        r,
        "  neck constants alpha = {:.9} +- {:.1e}, beta = {:.9} +- {:.1e}",
        c.junction.alpha, c.junction.alpha_err, c.junction.beta, c.junction.beta_err
    );
    let worst_leak = c.channel.flux_defect.iter().copied().fold(0.0, f64::max);
    let _ = writeln!(
        r,
        "  lead constants at {} wavenumbers (worst flux leak {:.2e})",
        c.channel.k_sq.len(),
        worst_leak
    );
    if let Some(det) = &c.detuned {
        let _ = writeln!(r, "  chamber response tabulated at {} detunings", det.k_sq.len());
    }

    if let Some(a) = &s.asymptotics {
        let _ = writeln!(r, "\nasymptotic peaks (eps = {}):", s.eps);
        for p in &a.peaks {
            let _ = writeln!(
                r,
                "  spin {}: center k_r^2 = {:.9}, width = {:.6e}, peak T = {:.9}",
                p.spin, p.k_r_sq, p.width, p.t_max
            );
            if let Some(full) = p.k_r_sq_detuned {
                let _ = writeln!(r, "    with detuned chamber coefficients: center {full:.9}");
            }
        }
        if let (Some(sep), Some(res)) = (a.separation, a.resolvable) {
            let _ = writeln!(
                r,
                "  spin separation = {:.6e} ({})",
                sep,
                if res { "resolvable: exceeds both linewidths" } else { "not resolvable at this diameter" }
            );
        }
    }

    if let Some(d) = &s.direct {
        let _ = writeln!(r, "\ndirect cross-check ({} solver, h = {}):", d.solver, d.h);
        for sc in &d.scans {
            let _ = writeln!(
                r,
                "  spin {}: center = {:.9}, width = {:.6e}, height = {:.6}",
                sc.spin, sc.center, sc.width, sc.height
            );
            let _ = writeln!(
                r,
                "    vs model: center delta = {:+.3e}, width ratio = {:.3}, height delta = {:+.3e}",
                sc.deltas.center, sc.deltas.width_ratio, sc.deltas.height
            );
            let _ = writeln!(
                r,
                "    fit rms = {:.2e}, solves = {} (+{} bracketing), worst flux defect = {:.2e} (bound {:.2e})",
                sc.rms, sc.solves, sc.sweep_solves, sc.worst_defect, sc.defect_bound
            );
        }
        if let Some(sep) = d.separation {
            let _ = writeln!(r, "  spin separation (direct) = {sep:.6e}");
        }
    }

    if let Some(l) = &s.ladder {
        let _ = writeln!(r, "\ndiameter ladder over {:?}:", l.eps);
        let _ = writeln!(
            r,
            "  shift exponent = {:.4} (formula {:.4}), prefactor = {:.4}",
            l.shift_slope, l.shift_slope_target, l.shift_prefactor
        );
        let _ = writeln!(
            r,
            "  width exponent = {:.4} (formula {:.4}), prefactor = {:.6e}",
            l.width_slope, l.width_slope_target, l.width_prefactor
        );
    }

    if !s.warnings.is_empty() {
        let _ = writeln!(r, "\nwarnings:");
        for w in &s.warnings {
            let _ = writeln!(r, "  - {w}");
        }
    }
    r
}

// ---------------------------------------------------------------------------
// explain

/// Describe what `run` would do for this config without solving anything:
/// the resolved parameters, the stage plan, the cache outcome, and any
/// regime warnings.
pub fn explain(cfg: &PipelineConfig) -> String {
    let hash = content_hash(&cfg.geometry, &cfg.coefficients);
    let hit = CacheStore::load(&cfg.cache_file)
        .ok()
        .and_then(|s| s.get(&hash).cloned());
    let p = &cfg.coefficients;
    let d = &cfg.direct;

    let mut r = String::new();
    let _ = writeln!(r, "run plan, mode `{}`", cfg.mode.name());
    let _ = writeln!(
        r,
        "cache {}: record {} is a {}",
        cfg.cache_file.display(),
        &hash[..12],
        if hit.is_some() { "HIT (coefficient stages are skipped)" } else { "MISS (coefficient stages will solve)" }
    );

    let _ = writeln!(r, "\ncoefficient stages (scale-free, cached under the record):");
    let _ = writeln!(
        r,
        "  1. cone-cap exponents: shooting solve on the cap angle {:.6} rad for {} exponents; \
         the first drives every power law",
        cfg.geometry.narrows[0].half_angle,
        p.cap_count.max(2)
    );
    let _ = writeln!(
        r,
        "  2. cross-section thresholds: Dirichlet eigensolves at h = {} and h/2, extrapolated; \
         they bound the single-mode window",
        p.section_h
    );
    let _ = writeln!(
        r,
        "  3. chamber mode: axisymmetric eigensolve between the tips at h = {} and h/2; \
         yields the resonant energy seed k0^2 and the tip couplings b1, b2",
        p.resonator_h
    );
    if cfg.geometry.solenoid.as_ref().is_some_and(|s| s.h0 != 0.0) {
        let _ = writeln!(
            r,
            "     plus the field-weighted mode mass (the field moves each spin's resonance \
             by this much, in opposite directions)"
        );
    }
    if p.detunings.is_empty() {
        let _ = writeln!(r, "     (no detunings configured: leading-order coefficients only)");
    } else {
        let _ = writeln!(
            r,
            "     plus chamber response coefficients at detunings {:?}",
            p.detunings
        );
    }
    let _ = writeln!(
        r,
        "  4. unit neck: exterior solve truncated at radius {} with h = {} and h/2; \
         yields the decay constants alpha (same wing) and beta (across)",
        p.junction_trunc, p.junction_h
    );
    let _ = writeln!(
        r,
        "  5. lead constants: scattering fits at {} window points plus the chamber \
         eigenvalue, h = {} and h/2, lead length {}",
        p.channel_k_count, p.channel_h, p.channel_length
    );

    match &cfg.mode {
        RunMode::Coefficients => {
            let _ = writeln!(r, "\nno assembly stages: the run stops at the record.");
        }
        RunMode::Ladder { eps } => {
            let _ = writeln!(
                r,
                "\nassembly: resonance pole and peak profile at each diameter in {eps:?}, \
                 then log-log fits of shift and width against the diameter"
            );
        }
        _ => {
            let _ = writeln!(
                r,
                "\nassembly: resonance pole per spin at eps = {}, then the peak profile \
                 (center, width, height) and the transmission table",
                cfg.geometry.eps
            );
            if matches!(cfg.mode, RunMode::Direct | RunMode::Full) {
                let field_on = cfg.geometry.solenoid.as_ref().is_some_and(|s| s.h0 != 0.0);
                let solver = if !field_on && cfg.geometry.cross_section.is_disk() {
                    "axisymmetric"
                } else {
                    "full 3d"
                };
                let _ = writeln!(
                    r,
                    "direct cross-check: {} scattering solver at h = {}, peak search starting \
                     from the model center with bracket {}, {}-point fit",
                    solver, d.h, d.scan_bracket, d.scan_fit_points
                );
                if cfg.geometry.eps > REGIME_EPS {
                    let _ = writeln!(
                        r,
                        "  (outside the regime the model center can miss the peak basin, so a \
                         coarse transmission sweep between the predicted center and the chamber \
                         energy brackets it first)"
                    );
                }
            }
        }
    }

    if let Some(rec) = &hit {
        let _ = writeln!(r, "\nstored record holds:");
        let _ = writeln!(
            r,
            "  mu1 = {:.9}, lambda1^2 = {:.9}, k0^2 = {:.9}, alpha = {:.9}, beta = {:.9}",
            rec.spectral.mu[0],
            rec.spectral.lambda1_sq,
            rec.resonator.k0_sq,
            rec.junction.alpha,
            rec.junction.beta
        );
    }

    let _ = writeln!(r, "\nartifacts go to {}", cfg.output_dir.display());
    let warnings = regime_warnings(cfg);
    if !warnings.is_empty() {
        let _ = writeln!(r, "warnings:");
        for w in &warnings {
            let _ = writeln!(r, "  - {w}");
        }
    }
    let _ = writeln!(r, "\nresolved configuration:");
    let _ = writeln!(
        r,
        "{}",
        serde_json::to_string_pretty(cfg).unwrap_or_else(|e| format!("<unserializable: {e}>"))
    );
    r
}

// ---------------------------------------------------------------------------
// cache subcommands

/// One line per stored record: hash prefix, version, headline constants.
pub fn cache_listing(store: &CacheStore, active_hash: &str) -> String {
    let mut r = String::new();
    if store.records.is_empty() {
        let _ = writeln!(r, "store is empty");
        return r;
    }
    for (hash, rec) in &store.records {
        let marker = if hash == active_hash { " <- this config" } else { "" };
        let _ = writeln!(
            r,
            "{}  v{}  mu1 = {:.6}, k0^2 = {:.6}, {} lead points, {} detunings{}",
            &hash[..12],
            rec.version,
            rec.spectral.mu[0],
            rec.resonator.k0_sq,
            rec.channel.k_sq.len(),
            rec.detuned.as_ref().map_or(0, |d| d.k_sq.len()),
            marker
        );
    }
    r
}

/// Resolve a user-supplied hash prefix to the full key.
pub fn resolve_hash<'a>(store: &'a CacheStore, prefix: &str) -> Result<&'a str, String> {
    let matches: Vec<&String> =
        store.records.keys().filter(|k| k.starts_with(prefix)).collect();
    match matches.len() {
        0 => Err(format!("no record matches {prefix}")),
        1 => Ok(matches[0]),
        n => Err(format!("{n} records match {prefix}; give more digits")),
    }
}

/// Shared entry used by `main`: load the config or return the violation
/// list formatted for stderr.
pub fn load_config(path: &Path) -> Result<PipelineConfig, Vec<String>> {
    PipelineConfig::load(path)
}
