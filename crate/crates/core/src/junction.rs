//! Harmonic response of the unit-scale neck.
//!
//! In stretched coordinates the narrow becomes an unbounded body: a throat
//! joining two conical wings. The limit problem there is the Dirichlet
//! Laplace equation. A solution growing like `rho^mu Phi` in one wing decays
//! like `rho^-mu-1 Phi` in both; the decay coefficients are the neck's
//! two-port response and carry all of its influence on the resonance.
//!
//! The wings make the truncated domain too large for the banded direct
//! solver, so the real symmetric positive definite system is solved by
//! Jacobi-preconditioned conjugate gradients on a sparse five-point replica
//! of the banded scheme (pinned against it by a test).

use num_complex::Complex64;

use crate::farfield::{project_cap_axi, radial_fit};
use crate::geometry::NarrowSpec;
use crate::grid::{AxiGrid, GHOST, WALL};
use crate::linalg::{pcg_real, richardson};
use crate::spectral::{cap_ground, cap_spectrum};
use crate::{Error, Result};

type C = Complex64;

const CG_TOL: f64 = 1e-9;
const CG_MAX_ITER: usize = 60_000;

/// Fit radii as multiples of the cone-match radius: outside the shaped
/// throat, inside half the truncation radius.
const FIT_RADII: [f64; 6] = [1.05, 1.25, 1.45, 1.65, 1.85, 2.05];

/// Sparse real five-point form of the symmetrized axisymmetric operator,
/// entry-identical to the banded assembly at `k^2 = 0`.
struct SparseAxi {
    diag: Vec<f64>,
    nb: Vec<[i32; 4]>,
    coef: Vec<[f64; 4]>,
    rhs: Vec<f64>,
}

impl SparseAxi {
    fn build(grid: &AxiGrid, wall_data: &dyn Fn(f64, f64) -> f64) -> Self {
        let h = grid.h;
        let h2 = h * h;
        let n = grid.n_unknowns();
        let mut diag = vec![0.0; n];
        let mut nb = vec![[-1i32; 4]; n];
        let mut coef = vec![[0.0; 4]; n];
        let mut rhs = vec![0.0; n];
        for q in 0..n {
            let j = grid.nodes[q][1] as usize;
            let (x, s) = grid.node_pos(q);
            let fw_rad = [s - 0.5 * h, s + 0.5 * h];
            for d in 0..4 {
                let face_w = match d {
                    0 | 1 => s,
                    2 => fw_rad[0],
                    _ => fw_rad[1],
                };
                match grid.neighbors[q][d] {
                    b if b >= 0 => {
                        let (_, s_nb) = grid.node_pos(b as usize);
                        diag[q] += face_w / (s * h2);
                        nb[q][d] = b;
                        coef[q][d] = -face_w / (h2 * (s * s_nb).sqrt());
                    }
                    WALL => {
                        if d == 2 && j == 0 {
                            continue; // axis face: zero area
                        }
                        let cut = grid.cuts[q][d];
                        diag[q] += face_w / (s * cut * h2);
                        let (dx, ds) = match d {
                            0 => (-cut * h, 0.0),
                            1 => (cut * h, 0.0),
                            2 => (0.0, -cut * h),
                            _ => (0.0, cut * h),
                        };
                        let gb = wall_data(x + dx, s + ds);
                        if gb != 0.0 {
                            rhs[q] += face_w * gb / (s.sqrt() * cut * h2);
                        }
                    }
                    GHOST => diag[q] += face_w / (s * h2),
                    other => panic!("unexpected neighbor sentinel {other}"),
                }
            }
        }
        SparseAxi { diag, nb, coef, rhs }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for q in 0..x.len() {
            let mut acc = self.diag[q] * x[q];
            for d in 0..4 {
                let b = self.nb[q][d];
                if b >= 0 {
                    acc += self.coef[q][d] * x[b as usize];
                }
            }
            y[q] = acc;
        }
    }
}

/// Decay coefficients of the neck for unit power-law growth in one wing.
#[derive(Debug, Clone, Copy)]
pub struct NeckResponse {
    pub mu: f64,
    /// Same-wing decay coefficient: `[left, right]` wing excitation.
    pub alpha: [f64; 2],
    /// Cross-wing decay coefficient: `[left-to-right, right-to-left]`.
    pub beta: [f64; 2],
    /// Fitted growth coefficient at the excited wing; 1 up to solver error.
    pub growth: [f64; 2],
    /// Fitted growth coefficient at the silent wing; 0 up to solver error.
    pub leak: [f64; 2],
    pub cg_iters: usize,
}

fn second_axisymmetric_exponent(theta: f64) -> Result<f64> {
    let eigs = cap_spectrum(theta, 12)?;
    let mut m0 = eigs.iter().filter(|e| e.m == 0);
    let _first = m0.next();
    m0.next()
        .map(|e| e.mu)
        .ok_or_else(|| Error::ScanFailed("no second axisymmetric cap exponent found".into()))
}

/// Solve the neck's harmonic two-port problem at grid step `h` with the
/// wings truncated at radius `trunc`.
///
/// Symmetric and antisymmetric sphere data are solved once each; their
/// half-sum and half-difference excite one wing at a time.
pub fn neck_response(narrow: &NarrowSpec, h: f64, trunc: f64) -> Result<NeckResponse> {
    if trunc < 3.0 * narrow.rho_match {
        return Err(Error::invalid(
            "truncation radius must clear the shaped throat by a factor of three",
        ));
    }
    let cap = cap_ground(narrow.half_angle)?;
    let mu = cap.mu;
    let mu3 = second_axisymmetric_exponent(narrow.half_angle)?;
    let smax = trunc * narrow.half_angle.sin() + 2.0 * h;
    let grid = AxiGrid::build(-trunc, trunc, smax, h, [false; 2], |x, s| {
        s < narrow.unit_radius(x) && x * x + s * s < trunc * trunc
    })?;
    let n = grid.n_unknowns();

    let sphere_edge = (trunc - 2.0 * h) * (trunc - 2.0 * h);
    let mut solutions: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut iters_total = 0;
    for variant in [1.0, -1.0] {
        let data = |x: f64, s: f64| -> f64 {
            if x * x + s * s <= sphere_edge {
                return 0.0;
            }
            let r = x.hypot(s);
            let phi = s.atan2(x.abs());
            let sign = if x < 0.0 { variant } else { 1.0 };
            sign * r.powf(mu) * cap.value(phi)
        };
        let sys = SparseAxi::build(&grid, &data);
        let (u_hat, iters) = pcg_real(
            |x, y| sys.apply(x, y),
            &sys.diag,
            &sys.rhs,
            CG_TOL,
            CG_MAX_ITER,
        )?;
        iters_total += iters;
        solutions.push(u_hat);
    }

    // physical field, complex for the projection routine
    let physical = |u_hat: &[f64]| -> Vec<C> {
        (0..n)
            .map(|q| C::new(u_hat[q] / grid.weight(q).sqrt(), 0.0))
            .collect()
    };
    let v_sym = physical(&solutions[0]);
    let v_anti = physical(&solutions[1]);

    let rs: Vec<f64> = FIT_RADII.iter().map(|f| f * narrow.rho_match).collect();
    // one-wing excitations by superposition, projected in both wings
    // (projection is linear, so superpose the projections)
    let mut proj: [[Vec<C>; 2]; 2] = Default::default(); // [excited][observed]
    for (w, axis) in [(0usize, -1.0), (1usize, 1.0)] {
        let cs_sym: Vec<C> = rs
            .iter()
            .map(|&r| project_cap_axi(&grid, &v_sym, 0.0, axis, &cap, r, 160))
            .collect();
        let cs_anti: Vec<C> = rs
            .iter()
            .map(|&r| project_cap_axi(&grid, &v_anti, 0.0, axis, &cap, r, 160))
            .collect();
        // left excitation = (sym - anti)/2, right = (sym + anti)/2
        proj[0][w] = cs_sym
            .iter()
            .zip(&cs_anti)
            .map(|(s, a)| (s - a) * 0.5)
            .collect::<Vec<C>>();
        proj[1][w] = cs_sym
            .iter()
            .zip(&cs_anti)
            .map(|(s, a)| (s + a) * 0.5)
            .collect::<Vec<C>>();
    }

    // weighted fit on c(rho)/rho^mu keeps the rows comparably scaled
    let grow = |_r: f64| 1.0;
    let decay = |r: f64| r.powf(-2.0 * mu - 1.0);
    let decay3 = |r: f64| r.powf(-mu3 - 1.0 - mu);
    let basis: [&dyn Fn(f64) -> f64; 3] = [&grow, &decay, &decay3];
    let mut alpha = [0.0; 2];
    let mut beta = [0.0; 2];
    let mut growth = [0.0; 2];
    let mut leak = [0.0; 2];
    for e in 0..2 {
        for w in 0..2 {
            let scaled: Vec<C> = proj[e][w]
                .iter()
                .zip(&rs)
                .map(|(c, &r)| c / r.powf(mu))
                .collect();
            let (coefs, _) = radial_fit(&rs, &scaled, &basis)?;
            if e == w {
                growth[e] = coefs[0].re;
                alpha[e] = coefs[1].re;
            } else {
                leak[e] = coefs[0].re;
                beta[e] = coefs[1].re;
            }
        }
    }
    Ok(NeckResponse {
        mu,
        alpha,
        beta,
        growth,
        leak,
        cg_iters: iters_total,
    })
}

/// Extrapolated neck constants from solves at `h` and `h/2`.
#[derive(Debug, Clone, Copy)]
pub struct NeckConstants {
    pub mu: f64,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    /// Coarse-fine drift of `beta`, a convergence diagnostic.
    pub beta_drift: f64,
}

pub fn neck_constants(narrow: &NarrowSpec, h: f64, trunc: f64) -> Result<NeckConstants> {
    let coarse = neck_response(narrow, h, trunc)?;
    let fine = neck_response(narrow, 0.5 * h, trunc)?;
    let ex = |c: f64, f: f64| richardson(c, f, 2);
    Ok(NeckConstants {
        mu: fine.mu,
        alpha: [ex(coarse.alpha[0], fine.alpha[0]), ex(coarse.alpha[1], fine.alpha[1])],
        beta: [ex(coarse.beta[0], fine.beta[0]), ex(coarse.beta[1], fine.beta[1])],
        beta_drift: (coarse.beta[0] - fine.beta[0]).abs() / fine.beta[0].abs().max(1e-300),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NeckProfile;
    use crate::linalg::seeded_unit_vector;
    use crate::operators::assemble_axi;
    use crate::linalg::BlockTridiagLu;

    fn reference_narrow() -> NarrowSpec {
        NarrowSpec {
            tip_x: 0.0,
            half_angle: std::f64::consts::FRAC_PI_3,
            profile: NeckProfile::Hyperboloid { waist: 1.0 },
            rho_match: 3.0,
        }
    }

    #[test]
    fn sparse_replica_matches_banded_assembly() {
        let narrow = reference_narrow();
        let trunc = 4.0;
        let h = 0.1;
        let grid = AxiGrid::build(
            -trunc,
            trunc,
            trunc * narrow.half_angle.sin() + 2.0 * h,
            h,
            [false; 2],
            |x, s| s < narrow.unit_radius(x) && x * x + s * s < trunc * trunc,
        )
        .unwrap();
        let n = grid.n_unknowns();
        let data = |x: f64, s: f64| -> f64 {
            if x.hypot(s) > trunc - 2.0 * h {
                1.0 + 0.3 * x
            } else {
                0.0
            }
        };
        let sparse = SparseAxi::build(&grid, &data);
        let banded = assemble_axi(&grid, C::new(0.0, 0.0), &[], Some(&data)).unwrap();

        // identical right-hand sides
        for q in 0..n {
            assert!(
                (sparse.rhs[q] - banded.rhs[q].re).abs() < 1e-12 * sparse.rhs[q].abs().max(1.0)
            );
            assert_eq!(banded.rhs[q].im, 0.0);
        }
        // identical operator action on a random vector
        let v = seeded_unit_vector(n, 0x1234_5678);
        let vr: Vec<f64> = v.iter().map(|z| z.re).collect();
        let mut ys = vec![0.0; n];
        sparse.apply(&vr, &mut ys);
        let mut yb = vec![C::new(0.0, 0.0); n];
        banded.sys.apply(&v, &mut yb);
        for q in 0..n {
            assert!((ys[q] - yb[q].re).abs() < 1e-10 * ys[q].abs().max(1.0));
        }
        // same solution through either path
        let lu = BlockTridiagLu::factor(&banded.sys).unwrap();
        let xb = lu.solve(&banded.rhs);
        let (xs, _) = pcg_real(|x, y| sparse.apply(x, y), &sparse.diag, &sparse.rhs, 1e-12, 20000)
            .unwrap();
        let num: f64 = (0..n).map(|q| (xs[q] - xb[q].re).powi(2)).sum::<f64>().sqrt();
        let den: f64 = xb.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den < 1e-8, "solution mismatch {num:e} / {den:e}");
    }

    #[test]
    fn pinched_neck_is_inert() {
        let mut narrow = reference_narrow();
        narrow.profile = NeckProfile::Hyperboloid { waist: 0.05 };
        let r = neck_response(&narrow, 0.06, 12.0).unwrap();
        // a closed double cone supports pure power growth with no response
        assert!(r.alpha[0].abs() < 0.02, "alpha = {:?}", r.alpha);
        assert!(r.beta[0].abs() < 2e-3, "beta = {:?}", r.beta);
        assert!((r.growth[0] - 1.0).abs() < 1e-2);
        assert!((r.growth[1] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn discrete_scale_equivariance() {
        // scaling the neck, grid, truncation, and fit radii together maps
        // the discrete problem onto itself; decay coefficients pick up
        // exactly s^(2 mu + 1)
        let a = reference_narrow();
        let s = 1.25;
        let b = NarrowSpec {
            tip_x: 0.0,
            half_angle: a.half_angle,
            profile: NeckProfile::Hyperboloid { waist: s * 1.0 },
            rho_match: s * a.rho_match,
        };
        let ra = neck_response(&a, 0.08, 12.0).unwrap();
        let rb = neck_response(&b, 0.08 * s, 12.0 * s).unwrap();
        let law = s.powf(2.0 * ra.mu + 1.0);
        let rel_a = (rb.alpha[0] / ra.alpha[0] - law).abs() / law;
        let rel_b = (rb.beta[0] / ra.beta[0] - law).abs() / law;
        assert!(rel_a < 1e-5, "alpha ratio off the scale law: {rel_a:e}");
        assert!(rel_b < 1e-5, "beta ratio off the scale law: {rel_b:e}");
    }

    #[test]
    fn reciprocity_holds_on_an_asymmetric_neck() {
        let theta = std::f64::consts::FRAC_PI_3;
        let c = theta.tan();
        let w0 = 0.5 / c;
        let m = 3.0;
        let nsam = 301;
        let samples: Vec<f64> = (0..nsam)
            .map(|i| {
                let xi = -m + 2.0 * m * i as f64 / (nsam - 1) as f64;
                let base = c * (xi * xi + w0 * w0).sqrt();
                let bump = 0.18 * (-2.0 * (xi - 0.7) * (xi - 0.7)).exp();
                let taper = 1.0 - (xi / m) * (xi / m);
                base + bump * taper * taper
            })
            .collect();
        let narrow = NarrowSpec {
            tip_x: 0.0,
            half_angle: theta,
            profile: NeckProfile::Custom { samples },
            rho_match: m,
        };
        let r = neck_response(&narrow, 0.06, 12.0).unwrap();
        // the bump sits on one side, so the same-wing responses must differ
        let asym = (r.alpha[0] - r.alpha[1]).abs() / r.alpha[0].abs();
        assert!(asym > 0.04, "test geometry failed to break symmetry: {asym:e}");
        // while the cross responses agree by the Green identity
        let rec = (r.beta[0] - r.beta[1]).abs() / r.beta[0].abs();
        assert!(rec < 2e-2, "reciprocity violated: {:?} vs {:?}", r.beta[0], r.beta[1]);
    }

    #[test]
    fn reference_neck_constants() {
        let narrow = reference_narrow();
        let r = neck_response(&narrow, 0.05, 12.0).unwrap();
        assert!((r.growth[0] - 1.0).abs() < 5e-3, "growth {:?}", r.growth);
        assert!(r.leak[0].abs() < 5e-3, "leak {:?}", r.leak);
        assert!(r.beta[0] > 0.0, "transmission through an open neck is positive");
        assert!(
            (r.beta[0] - r.beta[1]).abs() < 1e-10,
            "mirror symmetry: {:?}",
            r.beta
        );
        assert!(
            (r.alpha[0] - r.alpha[1]).abs() < 1e-10,
            "mirror symmetry: {:?}",
            r.alpha
        );
        // frozen from a converged run
        assert!((r.alpha[0] - 3.3653515465).abs() < 1e-5, "alpha = {}", r.alpha[0]);
        assert!((r.beta[0] - 0.0031257185).abs() < 1e-7, "beta = {}", r.beta[0]);
    }
}
