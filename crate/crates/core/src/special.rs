//! Scalar special functions used by the limit-problem solvers: the gamma
//! function, a scaled Bessel pair normalized to pure powers of `r` at the
//! origin, and the quintic cutoff used for gauge and commutator windows.

use crate::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for real argument, poles excluded.
///
/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-13 relative over
/// the range used here (|x| <= 70, away from non-positive integers).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection; sin(pi x) vanishes exactly at the poles
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Quintic smoothstep: 0 for `t <= 0`, 1 for `t >= 1`, C^2 across the joins.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// First derivative of [`smoothstep`].
pub fn smoothstep_d1(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (t - 1.0) * (t - 1.0)
    }
}

/// Second derivative of [`smoothstep`].
pub fn smoothstep_d2(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        60.0 * t * (t - 1.0) * (2.0 * t - 1.0)
    }
}

/// Largest reliable argument `k r` for the power-series evaluation of the
/// scaled pair; beyond this, alternating-series cancellation erodes accuracy.
pub const MAX_KR: f64 = 8.0;

/// Scaled Bessel pair of order `nu = mu + 1/2` at wavenumber `k`.
///
/// `j_tilde(r)` is the regular solution of the radial equation
/// `u'' + u'/r + (k^2 - nu^2/r^2) u = 0` normalized to `r^nu (1 + O(r^2))`,
/// i.e. `2^nu Gamma(nu+1) k^-nu J_nu(k r)`; `n_tilde(r)` is the singular
/// counterpart normalized to `r^-nu (1 + O(r^2))`. Dividing by `sqrt(r)`
/// turns them into the radial parts of 3D Helmholtz solutions on a cone with
/// separation exponent `mu`: `r^-1/2 j_tilde ~ r^mu`, `r^-1/2 n_tilde ~
/// r^-mu-1`.
#[derive(Debug, Clone)]
pub struct RadialPair {
    /// Order `nu = mu + 1/2`.
    pub nu: f64,
    /// Wavenumber scaling the argument.
    pub k: f64,
    /// `cos(nu pi) * Gamma(1-nu)/Gamma(1+nu) * (k^2/4)^nu`, the admixture of
    /// the regular branch inside the singular one.
    mix: f64,
}

impl RadialPair {
    /// Build the pair for cap exponent `mu` (so order `nu = mu + 1/2`).
    ///
    /// Rejects orders within 1e-3 of an integer: there the two power
    /// branches degenerate (logarithmic solutions) and the series
    /// representation of the singular member breaks down.
    pub fn new(mu: f64, k: f64) -> Result<Self> {
        let nu = mu + 0.5;
        if !(nu > 0.0 && k > 0.0) {
            return Err(Error::invalid(format!(
                "radial pair needs mu > -1/2 and k > 0 (got mu={mu}, k={k})"
            )));
        }
        if (nu - nu.round()).abs() < 1e-3 {
            return Err(Error::IntegerOrder { nu });
        }
        let mix = (std::f64::consts::PI * nu).cos() * gamma(1.0 - nu) / gamma(1.0 + nu)
            * (k * k / 4.0).powf(nu);
        Ok(RadialPair { nu, k, mix })
    }

    fn guard(&self, r: f64) -> Result<()> {
        let kr = self.k * r;
        if !(r > 0.0) {
            return Err(Error::invalid(format!("radial pair evaluated at r={r}")));
        }
        if kr > MAX_KR {
            return Err(Error::RadialRange { kr, max: MAX_KR });
        }
        Ok(())
    }

    /// Regular member and its `d/dr`, as `(value, derivative)`.
    pub fn j_tilde(&self, r: f64) -> Result<(f64, f64)> {
        self.guard(r)?;
        let t = (self.k * r) * (self.k * r) / 4.0;
        let (s, sp) = series(t, |m| m * (self.nu + m));
        let p = r.powf(self.nu);
        let dt_dr = self.k * self.k * r / 2.0;
        Ok((p * s, self.nu * p / r * s + p * sp * dt_dr))
    }

    /// Singular member and its `d/dr`, as `(value, derivative)`.
    pub fn n_tilde(&self, r: f64) -> Result<(f64, f64)> {
        self.guard(r)?;
        let t = (self.k * r) * (self.k * r) / 4.0;
        let (sm, smp) = series(t, |m| m * (m - self.nu));
        let (sp_val, sp_der) = series(t, |m| m * (self.nu + m));
        let pm = r.powf(-self.nu);
        let pp = r.powf(self.nu);
        let dt_dr = self.k * self.k * r / 2.0;
        let value = pm * sm - self.mix * pp * sp_val;
        let deriv = -self.nu * pm / r * sm + pm * smp * dt_dr
            - self.mix * (self.nu * pp / r * sp_val + pp * sp_der * dt_dr);
        Ok((value, deriv))
    }
}

/// Evaluate `S(t) = sum_m c_m t^m` with `c_0 = 1`,
/// `c_m = -c_{m-1} / denom(m)`, returning `(S, dS/dt)`.
fn series(t: f64, denom: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut c = 1.0;
    let mut s = 1.0;
    let mut sp = 0.0;
    let mut tm = 1.0; // t^(m-1) when entering iteration m
    for m in 1..=80 {
        let mf = m as f64;
        c = -c / denom(mf);
        sp += mf * c * tm;
        tm *= t;
        s += c * tm;
        if c.abs() * tm.max(1.0) < 1e-17 && m >= 8 {
            break;
        }
    }
    (s, sp)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PI: f64 = std::f64::consts::PI;

    fn close(a: f64, b: f64, rel: f64) {
        let scale = a.abs().max(b.abs()).max(1e-300);
        assert!(
            (a - b).abs() <= rel * scale,
            "expected {a} ~ {b} within rel {rel} (diff {:.3e})",
            (a - b).abs()
        );
    }

    #[test]
    fn gamma_reference_values() {
        close(gamma(1.0), 1.0, 1e-13);
        close(gamma(5.0), 24.0, 1e-13);
        close(gamma(0.5), PI.sqrt(), 1e-13);
        close(gamma(2.5), 1.329_340_388_179_137, 1e-13);
        close(gamma(-0.5), -2.0 * PI.sqrt(), 1e-12);
        close(gamma(-1.3), gamma(0.7) / (-1.3 * -0.3), 1e-12);
        close(gamma(20.0), 1.216_451_004_088_320_3e17, 1e-12);
    }

    #[test]
    fn smoothstep_joins_and_monotonicity() {
        assert_eq!(smoothstep(-0.2), 0.0);
        assert_eq!(smoothstep(1.3), 1.0);
        close(smoothstep(0.5), 0.5, 1e-15);
        // C^2 joins: derivatives vanish at both ends
        for t in [1e-9, 1.0 - 1e-9] {
            assert!(smoothstep_d1(t) < 1e-6);
            assert!(smoothstep_d2(t).abs() < 1e-4);
        }
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = smoothstep(i as f64 / 100.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    // Half-integer orders have elementary closed forms; they match the cone
    // exponents of a hemispherical cap (mu = 1, 2) and give an independent
    // check of the series and its normalization.
    #[test]
    fn half_integer_closed_forms() {
        let k = 2.3;
        let pair = RadialPair::new(1.0, k).unwrap(); // nu = 3/2
        let scale_j = 2.0f64.powf(1.5) * gamma(2.5) * k.powf(-1.5);
        let scale_n = -PI * k.powf(1.5) / (2.0f64.powf(1.5) * gamma(1.5));
        for r in [0.05, 0.3, 0.8, 1.4] {
            let x = k * r;
            let j32 = (2.0 / (PI * x)).sqrt() * (x.sin() / x - x.cos());
            let y32 = -(2.0 / (PI * x)).sqrt() * (x.cos() / x + x.sin());
            let (jv, _) = pair.j_tilde(r).unwrap();
            let (nv, _) = pair.n_tilde(r).unwrap();
            close(jv, scale_j * j32, 1e-12);
            close(nv, scale_n * y32, 1e-12);
        }
    }

    #[test]
    fn leading_powers_at_origin() {
        let pair = RadialPair::new(1.77, 3.0).unwrap();
        let r = 1e-4;
        let (jv, jd) = pair.j_tilde(r).unwrap();
        let (nv, nd) = pair.n_tilde(r).unwrap();
        close(jv, r.powf(2.27), 1e-7);
        close(nv, r.powf(-2.27), 1e-7);
        close(jd, 2.27 * r.powf(1.27), 1e-6);
        close(nd, -2.27 * r.powf(-3.27), 1e-6);
    }

    #[test]
    fn wronskian_is_minus_two_nu_over_r() {
        for (mu, k) in [(1.77, 3.0), (0.6, 1.1), (4.2, 2.0)] {
            let pair = RadialPair::new(mu, k).unwrap();
            let nu = mu + 0.5;
            for r in [0.07, 0.4, 1.9] {
                let (j, jd) = pair.j_tilde(r).unwrap();
                let (n, nd) = pair.n_tilde(r).unwrap();
                close(j * nd - jd * n, -2.0 * nu / r, 1e-10);
            }
        }
    }

    #[test]
    fn radial_equation_residual() {
        // u'' + u'/r + (k^2 - nu^2/r^2) u = 0, derivative checked spectrally
        let pair = RadialPair::new(2.3, 2.0).unwrap();
        let nu = 2.8;
        let h = 1e-4;
        for r in [0.5, 1.2] {
            for f in [RadialPair::j_tilde, RadialPair::n_tilde] {
                let (u, ud) = f(&pair, r).unwrap();
                let (_, ud_p) = f(&pair, r + h).unwrap();
                let (_, ud_m) = f(&pair, r - h).unwrap();
                let udd = (ud_p - ud_m) / (2.0 * h);
                let res = udd + ud / r + (4.0 - nu * nu / (r * r)) * u;
                assert!(res.abs() < 1e-5 * u.abs().max(1.0), "residual {res}");
            }
        }
    }

    #[test]
    fn guards_reject_bad_input() {
        assert!(matches!(
            RadialPair::new(1.5, 2.0),
            Err(Error::IntegerOrder { .. })
        )); // nu = 2
        let pair = RadialPair::new(1.77, 3.0).unwrap();
        assert!(matches!(
            pair.j_tilde(5.0),
            Err(Error::RadialRange { .. })
        ));
        assert!(pair.j_tilde(-1.0).is_err());
    }
}
