//! Special outgoing solution of a half-infinite lead and its two constants.
//!
//! The lead is a semi-infinite cylinder ending in a conical cap. The solution
//! that is singular at the cap tip and outgoing down the pipe behaves like
//! `r^{-1/2} (N~(kr) + a J~(kr)) Phi(phi)` near the tip and like
//! `A e^{-i nu1 x} Psi(y,z)` far away, with `Psi` flux-normalized so that
//! `nu1 ||Psi||^2 = 1`. The pair `(a, A)` is everything later formulas need
//! from the lead, and energy conservation ties them together: `|A|^2 = Im a`,
//! which doubles as the module's built-in accuracy check.
//!
//! Numerically the singular part is carried analytically under a radial
//! cutoff `Theta(r)`; the discrete unknown solves a Helmholtz problem with
//! the commutator source `-[Delta, Theta] v`, bounded everywhere, with a
//! mode-matched radiation closure on the truncated pipe end.

use crate::farfield::{helmholtz_fit, project_cap_axi};
use crate::geometry::WaveguideSpec;
use crate::grid::AxiGrid;
use crate::linalg::{richardson, tridiag_eigen, BlockTridiagLu};
use crate::operators::{assemble_axi, FaceClosure};
use crate::special::{smoothstep, smoothstep_d1, smoothstep_d2, RadialPair};
use crate::spectral::cap_ground;
use crate::{Complex as C, Error, Result};

/// Evanescent modes kept in the pipe closure beyond the propagating one.
pub const DEFAULT_EVANESCENT: usize = 8;

/// Default truncation length: four cross-section diameters of pipe.
pub fn default_length(spec: &WaveguideSpec) -> f64 {
    8.0 * spec.cross_section.max_radius()
}

/// The two lead constants at one wavenumber.
#[derive(Debug, Clone)]
pub struct ChannelConstants {
    pub k_sq: f64,
    /// Propagation wavenumber `sqrt(k^2 - lambda_1^2)`.
    pub nu1: f64,
    /// Regular tip coefficient: the `J~` admixture riding on the unit `N~`
    /// singularity.
    pub a: C,
    /// Outgoing modal amplitude in the flux normalization, phase referenced
    /// to the tip plane.
    pub amp: C,
    /// Fitted coefficient of the singular branch; 1 up to discretization.
    pub sing: C,
    /// `| |amp|^2 - Im a |`, the discrete leak in the energy-flux identity.
    pub flux_defect: f64,
    /// Tip-fit rms residual per probe radius, fine grid.
    pub fit_rms: f64,
}

/// Scan of `(a, A)` over the propagation window, for nearest-point lookup by
/// the formula assembly.
#[derive(Debug, Clone)]
pub struct ChannelTable {
    pub k_sq: Vec<f64>,
    pub a: Vec<C>,
    pub amp: Vec<C>,
}

impl ChannelTable {
    /// Constants at the scan point nearest `k_sq`.
    pub fn nearest(&self, k_sq: f64) -> (C, C) {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &k) in self.k_sq.iter().enumerate() {
            let d = (k - k_sq).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        (self.a[best], self.amp[best])
    }
}

// ---------------------------------------------------------------------------
// pipe mode data

/// Eigenvalues of the discrete radial Dirichlet operator on one staggered
/// column of spacing `h`: the grid's own transverse thresholds.
pub fn discrete_radial_thresholds(radius: f64, h: f64, count: usize) -> Result<Vec<f64>> {
    let n = ((radius / h - 0.5).floor() as isize + 1).max(0) as usize;
    if n < count + 2 {
        return Err(Error::invalid(
            "radial grid too coarse for the requested mode count",
        ));
    }
    let h2 = h * h;
    let sv = |j: usize| (j as f64 + 0.5) * h;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n - 1];
    for j in 0..n {
        let s = sv(j);
        // inner face has zero area on the axis node
        if j > 0 {
            d[j] += (s - 0.5 * h) / (s * h2);
        }
        let fw = s + 0.5 * h;
        if j + 1 < n {
            d[j] += fw / (s * h2);
            e[j] = -fw / (h2 * (s * sv(j + 1)).sqrt());
        } else {
            let cut = (radius - s) / h;
            d[j] += fw / (s * cut * h2);
        }
    }
    let (vals, _) = tridiag_eigen(&d, &e)?;
    Ok(vals[..count].to_vec())
}

/// Transverse thresholds of the axisymmetric sector for a circular pipe of
/// the given radius: continuum estimates via two staggered grids and
/// second-order extrapolation.
pub fn radial_thresholds(radius: f64, h: f64, count: usize) -> Result<Vec<f64>> {
    let coarse = discrete_radial_thresholds(radius, h, count)?;
    let fine = discrete_radial_thresholds(radius, 0.5 * h, count)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(&c, &f)| richardson(c, f, 2))
        .collect())
}

/// Thresholds adjusted so that the closure's plane-wave ghost factor matches
/// the three-point stencil's own dispersion exactly. With these the outgoing
/// discrete wave passes the truncation face without any spurious reflection,
/// and `zeta_eff[0]` is the discrete axial wavenumber of the propagating
/// mode.
fn reflectionless_thresholds(
    radius: f64,
    h: f64,
    k_sq: f64,
    count: usize,
) -> Result<(Vec<f64>, f64)> {
    let lam = discrete_radial_thresholds(radius, h, count)?;
    if k_sq <= lam[0] || k_sq >= lam[1] {
        return Err(Error::OutsideWindow {
            k_sq,
            lo: lam[0],
            hi: lam[1],
        });
    }
    let mut eff = Vec::with_capacity(count);
    let mut zeta1 = 0.0;
    for (m, &l) in lam.iter().enumerate() {
        if k_sq > l {
            let arg = 0.5 * h * (k_sq - l).sqrt();
            if arg >= 1.0 {
                return Err(Error::invalid("propagating mode unresolved by the grid"));
            }
            let zt = 2.0 / h * arg.asin();
            if m == 0 {
                zeta1 = zt;
            }
            eff.push(k_sq - zt * zt);
        } else {
            let kt = 2.0 / h * (0.5 * h * (l - k_sq).sqrt()).asinh();
            eff.push(k_sq + kt * kt);
        }
    }
    Ok((eff, zeta1))
}

/// Mode-space description of the radiation closure: thresholds and axial
/// wavenumbers (first entry real and propagating, the rest decaying).
#[derive(Debug, Clone)]
pub struct DtnData {
    pub thresholds: Vec<f64>,
    pub zetas: Vec<C>,
    pub nu1: f64,
}

/// Closure data for a circular pipe at `k_sq`, keeping the propagating mode
/// plus `n_ev` evanescent ones. Errors unless exactly the first mode of the
/// axisymmetric sector propagates.
pub fn dtn_closure(radius: f64, h: f64, k_sq: f64, n_ev: usize) -> Result<DtnData> {
    let thresholds = radial_thresholds(radius, h, n_ev + 2)?;
    if k_sq <= thresholds[0] || k_sq >= thresholds[1] {
        return Err(Error::OutsideWindow {
            k_sq,
            lo: thresholds[0],
            hi: thresholds[1],
        });
    }
    let zetas = thresholds
        .iter()
        .take(n_ev + 1)
        .map(|&t| {
            let z = (C::new(k_sq - t, 0.0)).sqrt();
            if z.im < 0.0 {
                -z
            } else {
                z
            }
        })
        .collect::<Vec<_>>();
    let nu1 = zetas[0].re;
    Ok(DtnData {
        thresholds: thresholds[..n_ev + 1].to_vec(),
        zetas,
        nu1,
    })
}

/// Ghost-step defect of a one-sided mode closure against a field whose true
/// outward step factor over one cell is `exp(i zeta_true h)`. `zeta_used` is
/// the closure's wavenumber for that mode, or `None` beyond the kept modes
/// (truncated to a Dirichlet ghost). Returned per unit boundary amplitude.
pub fn closure_residual(zeta_used: Option<C>, zeta_true: C, h: f64) -> f64 {
    let truth = (C::new(0.0, 1.0) * zeta_true * h).exp();
    let used = match zeta_used {
        Some(z) => (C::new(0.0, 1.0) * z * h).exp(),
        None => C::new(0.0, 0.0),
    };
    (used - truth).norm()
}

// ---------------------------------------------------------------------------
// the lead solve

struct LeadFrame {
    tip: f64,
    /// +1 when the cone opens toward +x (right lead), -1 toward -x.
    axis: f64,
}

struct SolveOut {
    a: C,
    amp: C,
    sing: C,
    rms: f64,
}

fn solve_once(
    spec: &WaveguideSpec,
    frame: &LeadFrame,
    window: (f64, f64),
    h: f64,
    l: f64,
    n_ev: usize,
    k_sq: f64,
) -> Result<SolveOut> {
    let radius = spec.cross_section.max_radius();
    if !spec.cross_section.is_disk() {
        return Err(Error::invalid(
            "lead solver requires a circular cross-section",
        ));
    }
    if !(k_sq > window.0 && k_sq < window.1) {
        return Err(Error::OutsideWindow {
            k_sq,
            lo: window.0,
            hi: window.1,
        });
    }
    let narrow = if frame.axis < 0.0 {
        &spec.narrows[0]
    } else {
        &spec.narrows[1]
    };
    let theta = narrow.half_angle;
    let cap = cap_ground(theta)?;
    let mu = cap.mu;
    let k = k_sq.sqrt();
    let pair = RadialPair::new(mu, k)?;

    // cutoff support must stay inside the conical region of the lead
    let delta = 0.8 * radius / theta.sin();
    if l < radius / theta.tan() + 1.5 * delta {
        return Err(Error::invalid("lead truncation too short for the cutoff"));
    }
    let nu1 = (k_sq - window.0).sqrt();

    let inside = |x: f64, s: f64| {
        if frame.axis < 0.0 {
            spec.in_left_channel(x, s, 0.0)
        } else {
            x > frame.tip
                && spec.cross_section.contains(s, 0.0)
                && narrow.in_body(0.0, x, s, 0.0)
        }
    };
    let (xlo, xhi, open, low_face) = if frame.axis < 0.0 {
        (frame.tip - l, frame.tip - 0.4 * h, [true, false], true)
    } else {
        (frame.tip + 0.4 * h, frame.tip + l, [false, true], false)
    };
    let grid = AxiGrid::build(xlo, xhi, radius + 2.0 * h, h, open, inside)?;

    let (thresholds, zeta1) = reflectionless_thresholds(radius, h, k_sq, n_ev + 2)?;
    let closure = FaceClosure {
        low_face,
        n_modes: n_ev + 1,
        thresholds,
        incident: None,
    };
    let asm = assemble_axi(&grid, C::new(k_sq, 0.0), &[closure], None)?;

    // commutator source: (Delta + k^2) v~ = -[Delta, Theta] v turns into the
    // load (DTheta) v + 2 Theta' v' for the assembled sign convention
    let half = 0.5 * delta;
    let tip = frame.tip;
    let axis = frame.axis;
    let pair_s = pair.clone();
    let cap_s = cap.clone();
    let source = move |x: f64, s: f64| -> C {
        let r = ((x - tip) * (x - tip) + s * s).sqrt();
        if r <= half || r >= delta {
            return C::new(0.0, 0.0);
        }
        let t = (r - half) / half;
        let th1 = -smoothstep_d1(t) / half;
        let th2 = -smoothstep_d2(t) / (half * half);
        let (nv, nd) = match pair_s.n_tilde(r) {
            Ok(v) => v,
            Err(_) => return C::new(0.0, 0.0),
        };
        let v = nv / r.sqrt();
        let vr = nd / r.sqrt() - 0.5 * nv / (r * r.sqrt());
        let phi = (s).atan2(axis * (x - tip));
        let cv = cap_s.value(phi);
        C::new(((th2 + 2.0 * th1 / r) * v + 2.0 * th1 * vr) * cv, 0.0)
    };
    let mut load = asm.force_rhs(&grid, &source);
    for (l, r) in load.iter_mut().zip(&asm.rhs) {
        *l += r;
    }
    let lu = BlockTridiagLu::factor(&asm.sys)?;
    let u_hat = lu.solve(&load);
    let u = asm.physical(&grid, &u_hat);

    // total field below the cutoff plateau edge carries the exact singular
    // part; fit both branches there
    let mut total = u;
    for q in 0..grid.n_unknowns() {
        let (x, s) = grid.node_pos(q);
        let r = ((x - tip) * (x - tip) + s * s).sqrt();
        if r < delta {
            let t = ((r - half) / half).clamp(0.0, 1.0);
            let theta_r = 1.0 - smoothstep(t);
            if theta_r > 0.0 {
                let (nv, _) = pair.n_tilde(r)?;
                let phi = s.atan2(axis * (x - tip));
                total[q] += C::new(theta_r * nv / r.sqrt() * cap.value(phi), 0.0);
            }
        }
    }
    // the total field solves the homogeneous equation everywhere, so probes
    // may range over the whole conical region; wide spacing separates the
    // two radial branches in the fit
    let radii: Vec<f64> = (0..6).map(|i| (0.50 + 0.25 * i as f64) * half).collect();
    let projs: Vec<C> = radii
        .iter()
        .map(|&r| project_cap_axi(&grid, &total, tip, axis, &cap, r, 96))
        .collect();
    let (sing, a, rms) = helmholtz_fit(&radii, &projs, &pair)?;
    if (sing - C::new(1.0, 0.0)).norm() > 0.1 {
        return Err(Error::FitUnresolved {
            context: "lead tip expansion".into(),
            residual: (sing - C::new(1.0, 0.0)).norm(),
            limit: 0.1,
        });
    }

    // far-field amplitude: discrete modal amplitude, converted to the
    // flux-normalized continuum mode and referenced back to the tip plane at
    // the grid's own propagation rate
    let amp_disc = asm.face_amplitude(0, 0, &u_hat);
    let x_b = asm.faces[0].x_b;
    let x_local = frame.axis * (x_b - tip);
    let phase = C::new(0.0, -zeta1 * x_local).exp();
    let amp = amp_disc * phase * (nu1.sqrt() * (2.0 * std::f64::consts::PI * h).sqrt());

    Ok(SolveOut { a, amp, sing, rms })
}

fn extrap(coarse: C, fine: C) -> C {
    C::new(
        richardson(coarse.re, fine.re, 2),
        richardson(coarse.im, fine.im, 2),
    )
}

/// Lead constants `(a, A)` at `k_sq`, extrapolated over `h` and `h/2`.
///
/// `window` is the full single-mode propagation interval of the guide (its
/// upper edge is the first non-axisymmetric threshold, which the
/// axisymmetric solver cannot see on its own).
pub fn channel_constants(
    spec: &WaveguideSpec,
    window: (f64, f64),
    h: f64,
    l: f64,
    n_ev: usize,
    k_sq: f64,
) -> Result<ChannelConstants> {
    let frame = LeadFrame {
        tip: spec.narrows[0].tip_x,
        axis: -1.0,
    };
    let coarse = solve_once(spec, &frame, window, h, l, n_ev, k_sq)?;
    let fine = solve_once(spec, &frame, window, 0.5 * h, l, n_ev, k_sq)?;
    let a = extrap(coarse.a, fine.a);
    let amp = extrap(coarse.amp, fine.amp);
    if amp.norm() < 1e-10 {
        return Err(Error::invalid("outgoing amplitude vanished; lead decoupled"));
    }
    Ok(ChannelConstants {
        k_sq,
        nu1: (k_sq - window.0).sqrt(),
        a,
        amp,
        sing: fine.sing,
        flux_defect: (amp.norm_sqr() - a.im).abs(),
        fit_rms: fine.rms,
    })
}

/// Constants of the mirrored (right) lead in its own outward frame. For a
/// mirror-symmetric device these equal the left-lead constants exactly; the
/// solve runs on the right geometry and is the consistency check for that.
pub fn channel_constants_mirror(
    spec: &WaveguideSpec,
    window: (f64, f64),
    h: f64,
    l: f64,
    n_ev: usize,
    k_sq: f64,
) -> Result<ChannelConstants> {
    let frame = LeadFrame {
        tip: spec.narrows[1].tip_x,
        axis: 1.0,
    };
    let coarse = solve_once(spec, &frame, window, h, l, n_ev, k_sq)?;
    let fine = solve_once(spec, &frame, window, 0.5 * h, l, n_ev, k_sq)?;
    let a = extrap(coarse.a, fine.a);
    let amp = extrap(coarse.amp, fine.amp);
    Ok(ChannelConstants {
        k_sq,
        nu1: (k_sq - window.0).sqrt(),
        a,
        amp,
        sing: fine.sing,
        flux_defect: (amp.norm_sqr() - a.im).abs(),
        fit_rms: fine.rms,
    })
}

/// `(a, A)` over a list of wavenumbers, as a lookup table.
pub fn channel_table(
    spec: &WaveguideSpec,
    window: (f64, f64),
    h: f64,
    l: f64,
    n_ev: usize,
    ks: &[f64],
) -> Result<ChannelTable> {
    let mut t = ChannelTable {
        k_sq: Vec::with_capacity(ks.len()),
        a: Vec::with_capacity(ks.len()),
        amp: Vec::with_capacity(ks.len()),
    };
    for &k_sq in ks {
        let c = channel_constants(spec, window, h, l, n_ev, k_sq)?;
        t.k_sq.push(k_sq);
        t.a.push(c.a);
        t.amp.push(c.amp);
    }
    Ok(t)
}
