//! Spectral ingredients: cone-cap exponents and cross-section thresholds.
//!
//! Near a conical tip of half-angle `theta`, separable solutions behave like
//! `r^mu Phi(phi)` where `mu (mu + 1)` is a Dirichlet eigenvalue of the
//! Laplace-Beltrami operator on the spherical cap and `Phi` the associated
//! eigenfunction. The cap problem separates further in the azimuthal index
//! `m`; each sector reduces to a Legendre-type ODE solved here by shooting.
//!
//! Cross-section thresholds `lambda_n^2` are Dirichlet Laplacian eigenvalues
//! of the 2D section, computed on cut-cell grids at two resolutions and
//! Richardson-extrapolated.

use num_complex::Complex64;

use crate::geometry::CrossSection;
use crate::grid::VoxelGrid3;
use crate::operators::{assemble3, eigs_near};
use crate::{Error, Result};

type C = Complex64;

const MAX_MU_SCAN: f64 = 400.0;
const SCAN_STEP: f64 = 0.2;
const ODE_STEPS: usize = 2000;

/// One cap eigenvalue: the tip exponent and its azimuthal index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapEig {
    pub mu: f64,
    pub m: usize,
}

fn cot(phi: f64) -> f64 {
    phi.cos() / phi.sin()
}

/// Series start for the regular solution of
/// `u'' + cot(phi) u' + (lambda - m^2 / sin^2 phi) u = 0`,
/// normalized to leading coefficient one.
fn series_start(m: usize, lambda: f64, phi0: f64) -> (f64, f64) {
    match m {
        0 => {
            let a2 = -lambda / 4.0;
            let a4 = a2 * (2.0 / 3.0 - lambda) / 16.0;
            let u = 1.0 + a2 * phi0 * phi0 + a4 * phi0.powi(4);
            let du = 2.0 * a2 * phi0 + 4.0 * a4 * phi0.powi(3);
            (u, du)
        }
        1 => {
            let c = (2.0 / 3.0 - lambda) / 8.0;
            let u = phi0 * (1.0 + c * phi0 * phi0);
            let du = 1.0 + 3.0 * c * phi0 * phi0;
            (u, du)
        }
        2 => {
            let c = (2.0 - lambda) / 12.0;
            let u = phi0 * phi0 * (1.0 + c * phi0 * phi0);
            let du = 2.0 * phi0 + 4.0 * c * phi0.powi(3);
            (u, du)
        }
        _ => unreachable!("azimuthal sectors above m = 2 are never ground states here"),
    }
}

/// Integrate the cap ODE from near the pole to `theta`; optionally record
/// the trajectory on the uniform step grid.
fn integrate_cap(
    m: usize,
    lambda: f64,
    theta: f64,
    record: Option<&mut Vec<f64>>,
) -> (f64, f64, f64) {
    let phi0 = (5e-3f64).min(theta / 100.0);
    let (mut u, mut v) = series_start(m, lambda, phi0);
    let n = ODE_STEPS;
    let dphi = (theta - phi0) / n as f64;
    let msq = (m * m) as f64;
    let f = |phi: f64, u: f64, v: f64| -> (f64, f64) {
        let s = phi.sin();
        (v, -cot(phi) * v - (lambda - msq / (s * s)) * u)
    };
    let mut traj = record;
    if let Some(t) = traj.as_deref_mut() {
        t.clear();
        t.push(u);
    }
    let mut phi = phi0;
    for _ in 0..n {
        let (k1u, k1v) = f(phi, u, v);
        let (k2u, k2v) = f(phi + 0.5 * dphi, u + 0.5 * dphi * k1u, v + 0.5 * dphi * k1v);
        let (k3u, k3v) = f(phi + 0.5 * dphi, u + 0.5 * dphi * k2u, v + 0.5 * dphi * k2v);
        let (k4u, k4v) = f(phi + dphi, u + dphi * k3u, v + dphi * k3v);
        u += dphi / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += dphi / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        phi += dphi;
        if let Some(t) = traj.as_deref_mut() {
            t.push(u);
        }
    }
    (u, v, phi0)
}

fn shoot_roots(m: usize, theta: f64, count: usize) -> Vec<f64> {
    let g = |mu: f64| integrate_cap(m, mu * (mu + 1.0), theta, None).0;
    let mut roots = Vec::new();
    let mut mu_prev = (m as f64).max(1e-3);
    let mut g_prev = g(mu_prev);
    let mut mu = mu_prev;
    while roots.len() < count && mu < MAX_MU_SCAN {
        mu += SCAN_STEP;
        let g_cur = g(mu);
        if g_prev * g_cur <= 0.0 && g_prev != 0.0 {
            let (mut a, mut b) = (mu_prev, mu);
            let (mut ga, _) = (g_prev, g_cur);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                let gm = g(mid);
                if ga * gm <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    ga = gm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        mu_prev = mu;
        g_prev = g_cur;
    }
    roots
}

/// The `count` smallest tip exponents across azimuthal sectors `m <= 2`.
pub fn cap_spectrum(theta: f64, count: usize) -> Result<Vec<CapEig>> {
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2 + 1e-12) {
        return Err(Error::invalid("cap half-angle must lie in (0, pi/2]"));
    }
    let mut all = Vec::new();
    for m in 0..=2usize {
        for mu in shoot_roots(m, theta, count) {
            all.push(CapEig { mu, m });
        }
    }
    all.sort_by(|a, b| a.mu.partial_cmp(&b.mu).unwrap());
    all.truncate(count);
    if all.len() < count {
        return Err(Error::ScanFailed(format!(
            "found only {} cap exponents below the scan ceiling",
            all.len()
        )));
    }
    Ok(all)
}

/// Ground cap mode, normalized so `(2 mu + 1) * 2 pi * int |Phi|^2 sin = 1`.
#[derive(Debug, Clone)]
pub struct CapMode {
    pub theta: f64,
    pub mu: f64,
    pub m: usize,
    /// Uniform sample grid from the series start to `theta`.
    pub phi0: f64,
    pub dphi: f64,
    pub values: Vec<f64>,
}

impl CapMode {
    pub fn value(&self, phi: f64) -> f64 {
        if phi <= self.phi0 {
            // regular behavior at the pole
            return self.values[0] * (phi / self.phi0).powi(self.m as i32);
        }
        let t = (phi - self.phi0) / self.dphi;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// `(2 mu + 1) * 2 pi * int_0^theta Phi^2 sin(phi) dphi`; 1 when
    /// normalized.
    pub fn norm_integral(&self) -> f64 {
        let n = self.values.len() - 1;
        let mut acc = 0.0;
        // composite Simpson over the stored grid
        for i in 0..n {
            let phi_a = self.phi0 + i as f64 * self.dphi;
            let phi_b = phi_a + self.dphi;
            let fa = self.values[i].powi(2) * phi_a.sin();
            let fb = self.values[i + 1].powi(2) * phi_b.sin();
            let fm = self.value(0.5 * (phi_a + phi_b)).powi(2) * (0.5 * (phi_a + phi_b)).sin();
            acc += self.dphi / 6.0 * (fa + 4.0 * fm + fb);
        }
        // pole remainder, u ~ u0 (phi/phi0)^m
        acc += self.values[0].powi(2) * self.phi0 * self.phi0 / (2.0 * self.m as f64 + 2.0);
        (2.0 * self.mu + 1.0) * 2.0 * std::f64::consts::PI * acc
    }
}

/// The normalized ground mode of the cap (must be axisymmetric).
pub fn cap_ground(theta: f64) -> Result<CapMode> {
    let spec = cap_spectrum(theta, 2)?;
    if spec[0].m != 0 {
        return Err(Error::ScanFailed(
            "cap ground state is not axisymmetric; geometry outside the supported regime".into(),
        ));
    }
    let mu = spec[0].mu;
    let mut traj = Vec::new();
    let (_, _, phi0) = integrate_cap(0, mu * (mu + 1.0), theta, Some(&mut traj));
    let dphi = (theta - phi0) / ODE_STEPS as f64;
    let mut mode = CapMode { theta, mu, m: 0, phi0, dphi, values: traj };
    let norm = mode.norm_integral();
    let scale = 1.0 / norm.sqrt();
    for v in &mut mode.values {
        *v *= scale;
    }
    Ok(mode)
}

/// Extrapolated cross-section thresholds.
#[derive(Debug, Clone)]
pub struct SectionSpectrum {
    /// Richardson-extrapolated `lambda_n^2`, ascending.
    pub lambda_sq: Vec<f64>,
    /// Discrete values on the finer grid (step `h`).
    pub lambda_sq_discrete: Vec<f64>,
    pub h: f64,
}

impl SectionSpectrum {
    pub fn lambda1_sq(&self) -> f64 {
        self.lambda_sq[0]
    }
    pub fn lambda2_sq(&self) -> f64 {
        self.lambda_sq[1]
    }
}

fn section_eigs(cs: &CrossSection, h: f64, nev: usize) -> Result<Vec<f64>> {
    let (by, bz) = cs.bounds();
    // the box hugs the section exactly; wall cuts come from the membership
    // test, and a padded box would only produce empty lattice planes
    let grid = VoxelGrid3::build(
        [by[0], bz[0], -0.6 * h],
        [by[1], bz[1], 0.6 * h],
        h,
        [false; 2],
        |y, z, _| cs.contains(y, z),
    )?;
    if grid.dims[2] != 1 {
        return Err(Error::invalid("section grid must be one node thick"));
    }
    let n = grid.n_unknowns();
    let assemble = |sigma: f64| {
        assemble3(&grid, C::new(sigma, 0.0), None, &[], [true, true, false]).map(|a| a.sys)
    };
    let pairs = eigs_near(n, assemble, 0.0, nev, 42.min(n), 1)?;
    Ok(pairs.into_iter().map(|p| p.0).collect())
}

/// Dirichlet thresholds of the section: eigensolves at `h` and `h/2`,
/// second-order extrapolation, with a guard against a collapsed window
/// between the first two.
pub fn section_thresholds(cs: &CrossSection, h: f64, nev: usize) -> Result<SectionSpectrum> {
    cs.validate()?;
    let coarse = section_eigs(cs, h, nev)?;
    let fine = section_eigs(cs, 0.5 * h, nev)?;
    let lambda_sq: Vec<f64> = coarse
        .iter()
        .zip(&fine)
        .map(|(&c, &f)| crate::linalg::richardson(c, f, 2))
        .collect();
    if nev >= 2 {
        let (l1, l2) = (lambda_sq[0], lambda_sq[1]);
        if !(l2 > l1 && (l2 - l1) > 1e-9 * l2.abs()) {
            return Err(Error::DegenerateThresholds {
                lambda1_sq: l1,
                lambda2_sq: l2,
            });
        }
    }
    Ok(SectionSpectrum {
        lambda_sq,
        lambda_sq_discrete: fine,
        h: 0.5 * h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const J01: f64 = 2.404825557695773;
    const J11: f64 = 3.8317059702075125;

    #[test]
    fn hemisphere_exponents_are_integers() {
        // Dirichlet on the equator picks Legendre functions vanishing at the
        // equator: mu = 1 (m = 0) and mu = 2 (m = 1)
        let eigs = cap_spectrum(std::f64::consts::FRAC_PI_2, 2).unwrap();
        assert!((eigs[0].mu - 1.0).abs() < 1e-9, "mu1 = {}", eigs[0].mu);
        assert_eq!(eigs[0].m, 0);
        assert!((eigs[1].mu - 2.0).abs() < 1e-9, "mu2 = {}", eigs[1].mu);
        assert_eq!(eigs[1].m, 1);
    }

    #[test]
    fn narrow_cap_approaches_bessel_scaling() {
        // as theta -> 0 the cap flattens to a disk: mu * theta -> j_{m,1}
        let theta = 0.05;
        let eigs = cap_spectrum(theta, 2).unwrap();
        let r1 = (eigs[0].mu * theta - J01).abs() / J01;
        let r2 = (eigs[1].mu * theta - J11).abs() / J11;
        assert!(r1 < 0.02, "m=0 scaling off: {r1}");
        assert!(r2 < 0.02, "m=1 scaling off: {r2}");
    }

    #[test]
    fn exponent_grows_as_cap_shrinks() {
        let a = cap_spectrum(1.2, 1).unwrap()[0].mu;
        let b = cap_spectrum(0.6, 1).unwrap()[0].mu;
        let c = cap_spectrum(0.3, 1).unwrap()[0].mu;
        assert!(a < b && b < c);
    }

    #[test]
    fn reference_cap_exponents() {
        // frozen from a converged run; guards regressions of the shooting
        let eigs = cap_spectrum(std::f64::consts::FRAC_PI_3, 2).unwrap();
        assert!((eigs[0].mu - 1.777288270159).abs() < 1e-9, "mu1 = {}", eigs[0].mu);
        assert_eq!(eigs[0].m, 0);
        assert!((eigs[1].mu - 3.195691151012).abs() < 1e-9, "mu2 = {}", eigs[1].mu);
        assert_eq!(eigs[1].m, 1);
    }

    #[test]
    fn ground_mode_normalized_positive_and_vanishing_at_rim() {
        let mode = cap_ground(std::f64::consts::FRAC_PI_3).unwrap();
        assert!((mode.norm_integral() - 1.0).abs() < 1e-9);
        assert!(mode.value(0.01) > 0.0);
        assert!(mode.value(0.3) > 0.0);
        assert!(mode.value(mode.theta).abs() < 1e-9 * mode.value(0.01).abs());
    }

    #[test]
    fn ground_mode_satisfies_the_ode() {
        let mode = cap_ground(0.9).unwrap();
        let lambda = mode.mu * (mode.mu + 1.0);
        // central differences on the sample grid, interior probe
        let i = mode.values.len() / 2;
        let phi = mode.phi0 + i as f64 * mode.dphi;
        let (um, u0, up) = (mode.values[i - 1], mode.values[i], mode.values[i + 1]);
        let d2 = (up - 2.0 * u0 + um) / (mode.dphi * mode.dphi);
        let d1 = (up - um) / (2.0 * mode.dphi);
        let res = d2 + (phi.cos() / phi.sin()) * d1 + lambda * u0;
        assert!(res.abs() < 1e-4 * lambda * u0.abs(), "ODE residual {res:e}");
    }

    #[test]
    fn disk_thresholds_match_bessel_zeros() {
        let cs = CrossSection::Disk { radius: 1.0 };
        let sp = section_thresholds(&cs, 0.04, 3).unwrap();
        let want1 = J01 * J01;
        let want2 = J11 * J11;
        let r1 = (sp.lambda1_sq() - want1).abs() / want1;
        let r2 = (sp.lambda2_sq() - want2).abs() / want2;
        assert!(r1 < 3e-4, "lambda1 off: {} vs {want1} (rel {r1:e})", sp.lambda1_sq());
        assert!(r2 < 1e-3, "lambda2 off: {} vs {want2} (rel {r2:e})", sp.lambda2_sq());
        // the second threshold is doubly degenerate on the disk
        let r3 = (sp.lambda_sq[2] - want2).abs() / want2;
        assert!(r3 < 1e-3, "lambda3 should pair with lambda2: rel {r3:e}");
    }

    #[test]
    fn rectangle_thresholds_match_closed_form() {
        let (a, b) = (1.3, 0.9);
        let cs = CrossSection::Rectangle { a, b };
        let sp = section_thresholds(&cs, 0.04, 2).unwrap();
        let pi = std::f64::consts::PI;
        let want1 = pi * pi * (1.0 / (a * a) + 1.0 / (b * b));
        let want2 = pi * pi * (4.0 / (a * a) + 1.0 / (b * b));
        let r1 = (sp.lambda1_sq() - want1).abs() / want1;
        let r2 = (sp.lambda2_sq() - want2).abs() / want2;
        assert!(r1 < 5e-4, "rect lambda1 rel {r1:e}");
        assert!(r2 < 5e-4, "rect lambda2 rel {r2:e}");
    }
}
