//! Far-field extraction at conical tips.
//!
//! Solutions of the limit problems expand near (or far from) a tip in
//! products of radial powers, or Helmholtz radial functions, with cap
//! eigenfunctions. This module projects discrete fields onto a cap mode on
//! spheres of increasing radius and fits the radial profile in a prescribed
//! basis, recovering the expansion coefficients.

use num_complex::Complex64;

use crate::grid::{AxiGrid, VoxelGrid3};
use crate::linalg::lstsq;
use crate::special::RadialPair;
use crate::spectral::CapMode;
use crate::Result;

type C = Complex64;

/// Spherical cap of sampling radii around a tip, opening along `axis`
/// (`+1.0` toward growing x, `-1.0` toward shrinking x).
#[derive(Debug, Clone, Copy)]
pub struct CapFrame {
    pub tip: [f64; 3],
    pub axis: f64,
}

impl CapFrame {
    fn point(&self, r: f64, phi: f64, psi: f64) -> [f64; 3] {
        [
            self.tip[0] + self.axis * r * phi.cos(),
            self.tip[1] + r * phi.sin() * psi.cos(),
            self.tip[2] + r * phi.sin() * psi.sin(),
        ]
    }
}

/// `c(r) = (2 mu + 1) int_cap u Phi domega` on the sphere of radius `r`.
///
/// With the mode normalized to `(2 mu + 1) int Phi^2 domega = 1` this is the
/// coefficient of `Phi` in the transverse expansion of `u`. Simpson rule in
/// the polar angle, uniform rule in the periodic azimuth.
pub fn project_cap3(
    grid: &VoxelGrid3,
    field: &[C],
    frame: CapFrame,
    mode: &CapMode,
    r: f64,
    n_phi: usize,
    n_psi: usize,
) -> C {
    let n_phi = n_phi + n_phi % 2;
    let dphi = mode.theta / n_phi as f64;
    let dpsi = 2.0 * std::f64::consts::PI / n_psi as f64;
    let mut acc = C::new(0.0, 0.0);
    for i in 0..=n_phi {
        let phi = i as f64 * dphi;
        let w_simpson = if i == 0 || i == n_phi {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let ring_weight = mode.value(phi) * phi.sin() * w_simpson * dphi / 3.0;
        if ring_weight == 0.0 {
            continue;
        }
        let mut ring = C::new(0.0, 0.0);
        for j in 0..n_psi {
            let psi = j as f64 * dpsi;
            ring += grid.interp(field, frame.point(r, phi, psi));
        }
        acc += ring * (ring_weight * dpsi);
    }
    acc * (2.0 * mode.mu + 1.0)
}

/// Axisymmetric counterpart of [`project_cap3`]; the azimuthal integral is
/// `2 pi` exactly.
pub fn project_cap_axi(
    grid: &AxiGrid,
    field: &[C],
    tip_x: f64,
    axis: f64,
    mode: &CapMode,
    r: f64,
    n_phi: usize,
) -> C {
    let n_phi = n_phi + n_phi % 2;
    let dphi = mode.theta / n_phi as f64;
    let mut acc = C::new(0.0, 0.0);
    for i in 0..=n_phi {
        let phi = i as f64 * dphi;
        let w_simpson = if i == 0 || i == n_phi {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let w = mode.value(phi) * phi.sin() * w_simpson * dphi / 3.0;
        if w == 0.0 {
            continue;
        }
        acc += grid.interp(field, tip_x + axis * r * phi.cos(), r * phi.sin()) * w;
    }
    acc * (2.0 * mode.mu + 1.0) * 2.0 * std::f64::consts::PI
}

/// Least-squares fit `c(r_i) ~ sum_k coef_k basis_k(r_i)`.
///
/// Returns the coefficients and the rms residual per sample.
pub fn radial_fit(rs: &[f64], cs: &[C], basis: &[&dyn Fn(f64) -> f64]) -> Result<(Vec<C>, f64)> {
    let (n, m) = (rs.len(), basis.len());
    let mut a = vec![C::new(0.0, 0.0); n * m];
    for (i, &r) in rs.iter().enumerate() {
        for (k, f) in basis.iter().enumerate() {
            a[i * m + k] = C::new(f(r), 0.0);
        }
    }
    let (x, res) = lstsq(&a, n, m, cs)?;
    Ok((x, res / (n as f64).sqrt()))
}

/// Pure power-law fit with the given exponents.
pub fn power_fit(rs: &[f64], cs: &[C], exps: &[f64]) -> Result<(Vec<C>, f64)> {
    let funcs: Vec<Box<dyn Fn(f64) -> f64>> = exps
        .iter()
        .map(|&e| Box::new(move |r: f64| r.powf(e)) as Box<dyn Fn(f64) -> f64>)
        .collect();
    let refs: Vec<&dyn Fn(f64) -> f64> = funcs.iter().map(|b| b.as_ref()).collect();
    radial_fit(rs, cs, &refs)
}

/// Helmholtz two-term fit: `c(r) ~ sing * n_tilde(r)/sqrt(r) + reg *
/// j_tilde(r)/sqrt(r)`, the exact radial solutions at the pair's wavenumber.
///
/// Returns `(sing, reg, rms)`.
pub fn helmholtz_fit(rs: &[f64], cs: &[C], pair: &RadialPair) -> Result<(C, C, f64)> {
    let n = rs.len();
    let mut a = vec![C::new(0.0, 0.0); n * 2];
    for (i, &r) in rs.iter().enumerate() {
        a[i * 2] = C::new(pair.n_tilde(r)?.0 / r.sqrt(), 0.0);
        a[i * 2 + 1] = C::new(pair.j_tilde(r)?.0 / r.sqrt(), 0.0);
    }
    let (x, res) = lstsq(&a, n, 2, cs)?;
    Ok((x[0], x[1], res / (n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::cap_ground;

    const THETA: f64 = std::f64::consts::FRAC_PI_3;

    fn cone_grid3(h: f64, reach: f64) -> VoxelGrid3 {
        // solid cone, tip at the origin, opening toward +x
        VoxelGrid3::build(
            [0.0, -reach, -reach],
            [reach, reach, reach],
            h,
            [false; 2],
            |x, y, z| {
                let rho = y.hypot(z);
                let r = x.hypot(rho);
                x > 0.0 && rho < x * THETA.tan() && r < reach
            },
        )
        .unwrap()
    }

    #[test]
    fn harmonic_power_pair_recovered_from_sampled_field() {
        let mode = cap_ground(THETA).unwrap();
        let (alpha, beta) = (0.7, 0.3);
        let grid = cone_grid3(0.05, 1.4);
        let mut field = vec![C::new(0.0, 0.0); grid.n_unknowns()];
        for q in 0..grid.n_unknowns() {
            let [x, y, z] = grid.node_pos(q);
            let rho = y.hypot(z);
            let r = x.hypot(rho);
            let phi = rho.atan2(x);
            let radial = alpha * r.powf(mode.mu) + beta * r.powf(-mode.mu - 1.0);
            field[q] = C::new(radial * mode.value(phi), 0.0);
        }
        let frame = CapFrame { tip: [0.0; 3], axis: 1.0 };
        let rs = [0.5, 0.65, 0.8, 0.95, 1.1];
        let cs: Vec<C> = rs
            .iter()
            .map(|&r| project_cap3(&grid, &field, frame, &mode, r, 64, 48))
            .collect();
        let (coef, rms) = power_fit(&rs, &cs, &[mode.mu, -mode.mu - 1.0]).unwrap();
        assert!(
            (coef[0].re - alpha).abs() < 2e-2 * alpha,
            "alpha {} vs {alpha}, rms {rms:e}",
            coef[0].re
        );
        assert!(
            (coef[1].re - beta).abs() < 2e-2 * beta,
            "beta {} vs {beta}, rms {rms:e}",
            coef[1].re
        );
        assert!(coef[0].im.abs() < 1e-8 && coef[1].im.abs() < 1e-8);
    }

    #[test]
    fn azimuthal_average_kills_nonaxisymmetric_parts() {
        let mode = cap_ground(THETA).unwrap();
        let grid = cone_grid3(0.06, 1.2);
        let mut field = vec![C::new(0.0, 0.0); grid.n_unknowns()];
        for q in 0..grid.n_unknowns() {
            let [_, y, _] = grid.node_pos(q);
            field[q] = C::new(y, 0.0); // odd in y: integrates to zero over psi
        }
        let frame = CapFrame { tip: [0.0; 3], axis: 1.0 };
        let c = project_cap3(&grid, &field, frame, &mode, 0.8, 64, 48);
        assert!(c.norm() < 1e-3, "projection should vanish, got {c}");
    }

    #[test]
    fn reversed_axis_projects_mirror_field() {
        // the same radial profile placed on a cone opening toward -x must be
        // recovered through a frame with axis = -1
        let mode = cap_ground(THETA).unwrap();
        let h = 0.05;
        let grid = VoxelGrid3::build(
            [-1.4, -1.4, -1.4],
            [0.0, 1.4, 1.4],
            h,
            [false; 2],
            |x, y, z| {
                let rho = y.hypot(z);
                let r = x.hypot(rho);
                x < 0.0 && rho < -x * THETA.tan() && r < 1.4
            },
        )
        .unwrap();
        let mut field = vec![C::new(0.0, 0.0); grid.n_unknowns()];
        for q in 0..grid.n_unknowns() {
            let [x, y, z] = grid.node_pos(q);
            let rho = y.hypot(z);
            let r = x.hypot(rho);
            let phi = rho.atan2(-x);
            field[q] = C::new(r.powf(mode.mu) * mode.value(phi), 0.0);
        }
        let frame = CapFrame { tip: [0.0; 3], axis: -1.0 };
        let rs = [0.6, 0.8, 1.0];
        let cs: Vec<C> = rs
            .iter()
            .map(|&r| project_cap3(&grid, &field, frame, &mode, r, 64, 48))
            .collect();
        let (coef, _) = power_fit(&rs, &cs, &[mode.mu]).unwrap();
        assert!((coef[0].re - 1.0).abs() < 2e-2, "got {}", coef[0].re);
    }

    #[test]
    fn helmholtz_pair_recovered_on_axisymmetric_grid() {
        let mode = cap_ground(THETA).unwrap();
        let k = 2.5;
        let pair = RadialPair::new(mode.mu, k).unwrap();
        let (sing, reg) = (C::new(0.2, -0.05), C::new(1.1, 0.4));
        let h = 0.01;
        let reach = 1.5;
        let grid = AxiGrid::build(0.0, reach, reach, h, [false; 2], |x, s| {
            let r = x.hypot(s);
            x > 0.0 && s < x * THETA.tan() && r < reach
        })
        .unwrap();
        let mut field = vec![C::new(0.0, 0.0); grid.n_unknowns()];
        for q in 0..grid.n_unknowns() {
            let (x, s) = grid.node_pos(q);
            let r = x.hypot(s);
            let phi = s.atan2(x);
            let radial = sing * pair.n_tilde(r).unwrap().0 / r.sqrt()
                + reg * pair.j_tilde(r).unwrap().0 / r.sqrt();
            field[q] = radial * mode.value(phi);
        }
        let rs = [0.5, 0.7, 0.9, 1.1, 1.3];
        let cs: Vec<C> = rs
            .iter()
            .map(|&r| project_cap_axi(&grid, &field, 0.0, 1.0, &mode, r, 200))
            .collect();
        let (got_sing, got_reg, rms) = helmholtz_fit(&rs, &cs, &pair).unwrap();
        assert!(
            (got_sing - sing).norm() < 2e-3 * sing.norm(),
            "sing {got_sing} vs {sing}, rms {rms:e}"
        );
        assert!(
            (got_reg - reg).norm() < 2e-3 * reg.norm(),
            "reg {got_reg} vs {reg}, rms {rms:e}"
        );
    }
}
