//! Assembly of the small-diameter scattering asymptotics.
//!
//! Everything computed elsewhere meets here: the chamber eigenvalue and tip
//! coefficients, the neck constants of the unit junction, and the lead
//! constants. Two auxiliary combinations `gamma, delta` of those constants
//! encode how the neck couples the tip expansions across the scales; a small
//! linear matching system then yields the reflection and transmission
//! entries, the complex resonance pole, and the Breit-Wigner profile around
//! it.
//!
//! The neck enters only through `alpha`, `beta` and the diameter scaling
//! `eps^(2 mu1 + 1)`; the lead only through `(a, A)`; the chamber through
//! `(k0^2, b_j)` and, beyond leading order, the detuned coefficients
//! `(c_j, d_j)`.

use crate::channel::ChannelTable;
use crate::linalg::DenseLu;
use crate::{Complex as C, Error, Result};

/// Coefficient rows of the detuned chamber responses on a real wavenumber
/// scan, for nearest-point lookup.
#[derive(Debug, Clone)]
pub struct CoeffTable {
    pub k_sq: Vec<f64>,
    pub c: Vec<[C; 2]>,
    pub d: Vec<[C; 2]>,
}

impl CoeffTable {
    pub fn nearest(&self, k_sq: f64) -> ([C; 2], [C; 2]) {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &k) in self.k_sq.iter().enumerate() {
            let dd = (k - k_sq).abs();
            if dd < dist {
                dist = dd;
                best = i;
            }
        }
        (self.c[best], self.d[best])
    }
}

/// Which chamber coefficients feed the matching formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// `c_j = -conj(b_1) b_j`, `d_j = 0`: the eigenvalue-limit coefficients.
    Leading,
    /// Detuned coefficients from the coefficient table.
    Full,
}

/// All constants of one spin state needed to assemble the asymptotics.
#[derive(Debug, Clone)]
pub struct AsymptoticModel {
    /// Tip exponent of the shared cone angle.
    pub mu1: f64,
    /// Remainder exponent of the expansion, `min(1.9, mu2 - mu1)`.
    pub tau: f64,
    /// Neck constants of the unit junction.
    pub alpha: f64,
    pub beta: f64,
    /// Axial distance between the two tips.
    pub d: f64,
    /// Propagation window of the leads.
    pub lambda1_sq: f64,
    pub lambda2_sq: f64,
    /// Chamber eigenvalue and tip coefficients.
    pub k0_sq: f64,
    pub b: [C; 2],
    /// Lead constants over the window.
    pub channel: ChannelTable,
    /// Detuned chamber coefficients; required for `Order::Full`.
    pub coeffs: Option<CoeffTable>,
}

impl AsymptoticModel {
    pub fn eps_pow(&self, eps: f64) -> f64 {
        eps.powf(2.0 * self.mu1 + 1.0)
    }

    pub fn width_pow(&self, eps: f64) -> f64 {
        eps.powf(4.0 * self.mu1 + 2.0)
    }

    pub fn nu1(&self, k_sq: f64) -> Result<f64> {
        if k_sq <= self.lambda1_sq || k_sq >= self.lambda2_sq {
            return Err(Error::OutsideWindow {
                k_sq,
                lo: self.lambda1_sq,
                hi: self.lambda2_sq,
            });
        }
        Ok((k_sq - self.lambda1_sq).sqrt())
    }

    /// Lead constants at the nearest scan point, with the energy-flux
    /// identity imposed on the imaginary part.
    pub fn lead(&self, k_sq: f64) -> (C, C) {
        let (a_raw, amp) = self.channel.nearest(k_sq);
        (C::new(a_raw.re, amp.norm_sqr()), amp)
    }

    fn coefficients(&self, k_sq: f64, order: Order) -> Result<([C; 2], [C; 2])> {
        match order {
            Order::Leading => {
                let c = [
                    -self.b[0].conj() * self.b[0],
                    -self.b[0].conj() * self.b[1],
                ];
                Ok((c, [C::new(0.0, 0.0); 2]))
            }
            Order::Full => {
                let table = self.coeffs.as_ref().ok_or_else(|| {
                    Error::invalid("full-order matching needs a coefficient table")
                })?;
                Ok(table.nearest(k_sq))
            }
        }
    }
}

/// The two neck-coupling combinations entering every matching row.
pub fn gamma_delta(model: &AsymptoticModel, eps: f64, k_sq: f64) -> Result<(C, C)> {
    if eps <= 0.0 {
        return Err(Error::invalid("diameter must be positive"));
    }
    let (a, amp) = model.lead(k_sq);
    let p = model.eps_pow(eps);
    let ab = amp * model.beta;
    let gamma = (C::new(1.0 / p, 0.0) - a * model.alpha) / ab;
    let delta = (C::new(model.alpha, 0.0)
        + a * (model.beta * model.beta - model.alpha * model.alpha) * p)
        / ab;
    Ok((gamma, delta))
}

/// Matching output at one real wavenumber.
#[derive(Debug, Clone)]
pub struct Matching {
    pub k_sq: f64,
    pub s11: C,
    pub s12: C,
    /// Chamber excitation coefficients.
    pub c1: C,
    pub c2: C,
    /// Largest scaled residual of the linear system.
    pub residual: f64,
}

/// Solve the four matching conditions for the scattering row and the
/// chamber excitation.
pub fn matching_solve(
    model: &AsymptoticModel,
    eps: f64,
    k_sq: f64,
    order: Order,
) -> Result<Matching> {
    let (gamma, delta) = gamma_delta(model, eps, k_sq)?;
    let (cc, dd) = model.coefficients(k_sq, order)?;
    let nu1 = model.nu1(k_sq)?;
    let phase = C::new(0.0, -nu1 * model.d).exp();
    let det = C::new(k_sq - model.k0_sq, 0.0);
    let b1c = model.b[0].conj();
    let b2c = model.b[1].conj();
    let zero = C::new(0.0, 0.0);

    // unknowns: (s11, s12, C1, C2)
    let a = vec![
        gamma, zero, -cc[0], -dd[0], //
        delta, zero, -det, -b2c, //
        zero, gamma, -cc[1] * phase, -dd[1] * phase, //
        zero, delta, zero, b1c * phase,
    ];
    let rhs_v = [-gamma.conj(), -delta.conj(), zero, zero];
    let lu = DenseLu::factor(a.clone(), 4)?;
    let mut x = rhs_v;
    lu.solve_in_place(&mut x);

    // residual against the original rows, scaled by the largest entry
    let scale = a.iter().map(|v| v.norm()).fold(0.0f64, f64::max)
        * x.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1.0);
    let mut residual = 0.0f64;
    for i in 0..4 {
        let mut acc = -rhs_v[i];
        for j in 0..4 {
            acc += a[i * 4 + j] * x[j];
        }
        residual = residual.max(acc.norm() / scale);
    }

    Ok(Matching {
        k_sq,
        s11: x[0],
        s12: x[1],
        c1: x[2],
        c2: x[3],
        residual,
    })
}

/// Transmission entry in closed form; see the matching solve for the system
/// it solves.
pub fn s12_closed(model: &AsymptoticModel, eps: f64, k_sq: f64, order: Order) -> Result<C> {
    let (gamma, delta) = gamma_delta(model, eps, k_sq)?;
    let (cc, dd) = model.coefficients(k_sq, order)?;
    let nu1 = model.nu1(k_sq)?;
    let phase = C::new(0.0, -nu1 * model.d).exp();
    let det = C::new(k_sq - model.k0_sq, 0.0);
    let b1c = model.b[0].conj();
    let b2c = model.b[1].conj();
    let two_i = C::new(0.0, 2.0);
    let denom = -det * b1c * gamma * gamma
        - (det * dd[1] - b1c * cc[0] - b2c * cc[1]) * gamma * delta
        + (cc[0] * dd[1] - cc[1] * dd[0]) * delta * delta;
    Ok(two_i * b1c * cc[1] * phase / denom)
}

/// Reflection entry in closed form, expressed through the transmission.
pub fn s11_closed(model: &AsymptoticModel, eps: f64, k_sq: f64, order: Order) -> Result<C> {
    let (gamma, delta) = gamma_delta(model, eps, k_sq)?;
    let (cc, dd) = model.coefficients(k_sq, order)?;
    let nu1 = model.nu1(k_sq)?;
    let phase_back = C::new(0.0, nu1 * model.d).exp();
    let det = C::new(k_sq - model.k0_sq, 0.0);
    let b1c = model.b[0].conj();
    let b2c = model.b[1].conj();
    let s12 = s12_closed(model, eps, k_sq, order)?;
    let num = det * b1c * gamma.norm_sqr()
        + (det * dd[1] - b2c * cc[1]) * gamma.conj() * delta
        - b1c * cc[0] * gamma * delta.conj()
        - (cc[0] * dd[1] - cc[1] * dd[0]) * delta.norm_sqr();
    Ok(num / (C::new(0.0, 2.0) * b1c * cc[1]) * s12 * phase_back)
}

/// Chamber excitation coefficients in closed form.
pub fn excitation_closed(
    model: &AsymptoticModel,
    eps: f64,
    k_sq: f64,
    order: Order,
) -> Result<(C, C)> {
    let (gamma, delta) = gamma_delta(model, eps, k_sq)?;
    let (cc, dd) = model.coefficients(k_sq, order)?;
    let nu1 = model.nu1(k_sq)?;
    let phase_back = C::new(0.0, nu1 * model.d).exp();
    let b1c = model.b[0].conj();
    let s12 = s12_closed(model, eps, k_sq, order)?;
    let c1 = (gamma * b1c + delta * dd[1]) / (b1c * cc[1]) * s12 * phase_back;
    let c2 = -delta / b1c * s12 * phase_back;
    Ok((c1, c2))
}

/// Complex resonance pole of the transmission denominator.
#[derive(Debug, Clone)]
pub struct Pole {
    /// Real part: the resonant energy.
    pub k_re_sq: f64,
    /// Minus the imaginary part: half the physical linewidth in energy.
    pub k_im_sq: f64,
    pub iterations: usize,
}

/// Denominator of the transmission entry at a complex energy, with the
/// coefficients frozen at the nearest real scan point.
pub fn pole_denominator(
    model: &AsymptoticModel,
    eps: f64,
    k_sq: C,
    order: Order,
) -> Result<C> {
    let re = k_sq.re;
    let (gamma, delta) = gamma_delta(model, eps, re)?;
    let (cc, dd) = model.coefficients(re, order)?;
    let det = k_sq - model.k0_sq;
    let b1c = model.b[0].conj();
    let b2c = model.b[1].conj();
    Ok(-det * b1c * gamma * gamma
        - (det * dd[1] - b1c * cc[0] - b2c * cc[1]) * gamma * delta
        + (cc[0] * dd[1] - cc[1] * dd[0]) * delta * delta)
}

/// Locate the pole by successive substitution from the chamber eigenvalue.
///
/// Each step evaluates the coefficient-weighted shift at the previous
/// iterate, freezing lead and chamber coefficients at the nearest real scan
/// point. Outside the asymptotic regime the map stops contracting and the
/// search reports failure rather than a pole.
pub fn resonance_pole(
    model: &AsymptoticModel,
    eps: f64,
    order: Order,
) -> Result<Pole> {
    let mut k_sq = C::new(model.k0_sq, 0.0);
    let mut last_step = f64::INFINITY;
    for it in 0..60 {
        let re = k_sq.re;
        let (gamma, delta) = gamma_delta(model, eps, re)?;
        let (cc, dd) = model.coefficients(re, order)?;
        let b1c = model.b[0].conj();
        let b2c = model.b[1].conj();
        let num = (b1c * cc[0] + b2c * cc[1]) * gamma * delta
            + (cc[0] * dd[1] - cc[1] * dd[0]) * delta * delta;
        let den = b1c * gamma * gamma + dd[1] * gamma * delta;
        let next = C::new(model.k0_sq, 0.0) + num / den;
        let step = (next - k_sq).norm();
        if step < 1e-13 * model.k0_sq {
            let pole = Pole {
                k_re_sq: next.re,
                k_im_sq: -next.im,
                iterations: it + 1,
            };
            if pole.k_re_sq <= model.lambda1_sq || pole.k_re_sq >= model.lambda2_sq {
                return Err(Error::OutsideRegime {
                    eps,
                    correction: (pole.k_re_sq - model.k0_sq).abs(),
                });
            }
            return Ok(pole);
        }
        if it > 2 && step > 0.75 * last_step {
            return Err(Error::OutsideRegime {
                eps,
                correction: step,
            });
        }
        last_step = step;
        k_sq = next;
    }
    Err(Error::OutsideRegime {
        eps,
        correction: last_step,
    })
}

/// Breit-Wigner description of the transmission peak.
#[derive(Debug, Clone)]
pub struct Profile {
    /// `|b1| / |b2|`, the tip asymmetry.
    pub q: f64,
    /// Peak transmission probability, `4 / (q + 1/q)^2`.
    pub peak: f64,
    /// Full width of the peak at half height, in energy.
    pub width: f64,
    /// Resonant energy (pole real part).
    pub center: f64,
}

/// Assemble the peak profile from a located pole.
pub fn transmission_profile(model: &AsymptoticModel, eps: f64, pole: &Pole) -> Result<Profile> {
    let q = model.b[0].norm() / model.b[1].norm();
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::invalid("tip coefficient ratio must be positive"));
    }
    let (_, amp) = model.lead(pole.k_re_sq);
    let p_coef = 1.0
        / (2.0
            * model.b[0].norm()
            * model.b[1].norm()
            * model.beta
            * model.beta
            * amp.norm_sqr());
    let width = (q + 1.0 / q) / p_coef * model.width_pow(eps);
    Ok(Profile {
        q,
        peak: 4.0 / (q + 1.0 / q) / (q + 1.0 / q),
        width,
        center: pole.k_re_sq,
    })
}

/// Breit-Wigner transmission probability at one energy.
pub fn transmission_at(
    model: &AsymptoticModel,
    eps: f64,
    profile: &Profile,
    k_sq: f64,
) -> f64 {
    let q = profile.q;
    let p_coef = (q + 1.0 / q) * model.width_pow(eps) / profile.width;
    let scaled = (k_sq - profile.center) / model.width_pow(eps);
    1.0 / (0.25 * (q + 1.0 / q) * (q + 1.0 / q) + p_coef * p_coef * scaled * scaled)
}

/// Spin-resolved peak pair and its observables.
#[derive(Debug, Clone)]
pub struct SpinCharacteristics {
    pub profile_plus: Profile,
    pub profile_minus: Profile,
    /// Distance between the two resonant energies.
    pub separation: f64,
    /// Whether the separation exceeds both linewidths.
    pub resolvable: bool,
}

pub fn spin_characteristics(
    plus: &AsymptoticModel,
    minus: &AsymptoticModel,
    eps: f64,
) -> Result<SpinCharacteristics> {
    let pp = resonance_pole(plus, eps, Order::Leading)?;
    let pm = resonance_pole(minus, eps, Order::Leading)?;
    let profile_plus = transmission_profile(plus, eps, &pp)?;
    let profile_minus = transmission_profile(minus, eps, &pm)?;
    let separation = (profile_plus.center - profile_minus.center).abs();
    let resolvable = separation > profile_plus.width.max(profile_minus.width);
    Ok(SpinCharacteristics {
        profile_plus,
        profile_minus,
        separation,
        resolvable,
    })
}

/// Spin polarization of the transmitted flux at one energy.
pub fn polarization_at(
    plus: &AsymptoticModel,
    minus: &AsymptoticModel,
    eps: f64,
    chars: &SpinCharacteristics,
    k_sq: f64,
) -> f64 {
    let tp = transmission_at(plus, eps, &chars.profile_plus, k_sq);
    let tm = transmission_at(minus, eps, &chars.profile_minus, k_sq);
    if tp + tm == 0.0 {
        return 0.0;
    }
    (tp - tm) / (tp + tm)
}

#[cfg(test)]
mod tests {
    use super::*;

    // constants of the reference device, frozen from the solver modules
    const MU1: f64 = 1.777288270159;
    const MU2: f64 = 3.195691151012;
    const ALPHA: f64 = 3.3653515465;
    const BETA: f64 = 0.0031257185;
    const K0_SQ: f64 = 10.8095319432;
    const B: f64 = 6.2737828914;
    const LAMBDA1_SQ: f64 = 5.783185962946785;
    const LAMBDA2_SQ: f64 = 14.681970642123895;
    const A_RE: f64 = -0.6925036;
    const AMP_RE: f64 = 2.7668655;
    const AMP_IM: f64 = -2.2001495;

    fn reference_model(asym: f64) -> AsymptoticModel {
        // a one-point lead table is enough: the lookup freezes constants at
        // the nearest scan point anyway
        let amp = C::new(AMP_RE, AMP_IM);
        let channel = ChannelTable {
            k_sq: vec![K0_SQ],
            a: vec![C::new(A_RE, amp.norm_sqr())],
            amp: vec![amp],
        };
        AsymptoticModel {
            mu1: MU1,
            tau: (MU2 - MU1).min(1.9),
            alpha: ALPHA,
            beta: BETA,
            d: 2.0,
            lambda1_sq: LAMBDA1_SQ,
            lambda2_sq: LAMBDA2_SQ,
            k0_sq: K0_SQ,
            b: [C::new(B, 0.0), C::new(B * asym, 0.0)],
            channel,
            coeffs: None,
        }
    }

    // detuned chamber coefficients measured on the reference chamber
    fn with_coeffs(mut model: AsymptoticModel) -> AsymptoticModel {
        let rows = [
            (-0.9, -31.2510, -32.9349, -11.7380, 11.7380),
            (-0.5, -34.8584, -35.6175, -9.5253, 9.5253),
            (0.5, -43.6893, -43.5335, -1.9550, 1.9550),
            (0.9, -46.9834, -47.2725, 2.0150, -2.0150),
            (1.8, -53.3595, -57.1807, 13.3187, -13.3187),
        ];
        let mut table = CoeffTable {
            k_sq: Vec::new(),
            c: Vec::new(),
            d: Vec::new(),
        };
        for (dk, c1, c2, d1, d2) in rows {
            table.k_sq.push(K0_SQ + dk);
            table.c.push([C::new(c1, 0.0), C::new(c2, 0.0)]);
            table.d.push([C::new(d1, 0.0), C::new(d2, 0.0)]);
        }
        model.coeffs = Some(table);
        model
    }

    #[test]
    fn coupling_combinations_reach_their_limits() {
        // gamma is dominated by the diameter power, delta by the neck
        // constant; their ratio fixes the leading resonance shift
        let model = reference_model(1.0);
        let (gamma, delta) = gamma_delta(&model, 0.02, K0_SQ).unwrap();
        let (a, amp) = model.lead(K0_SQ);
        let p = model.eps_pow(0.02);
        let lead_gamma = C::new(1.0 / p, 0.0) / (amp * BETA);
        assert!((gamma - lead_gamma).norm() < 1e-3 * gamma.norm());
        let lead_delta = C::new(ALPHA, 0.0) / (amp * BETA);
        assert!((delta - lead_delta).norm() < 1e-6 * delta.norm());
        // flux identity is imposed on the lead constant
        assert!((a.im - amp.norm_sqr()).abs() == 0.0);
        let ratio = delta / gamma;
        assert!((ratio.re - ALPHA * p).abs() < 1e-4 * ALPHA * p);
    }

    #[test]
    fn closed_forms_agree_with_the_linear_system() {
        // both paths share a cancellation floor set by |gamma| |delta|, the
        // depth at which the coupling identity Im(gamma conj(delta)) = -1
        // is buried under the dominant products
        for asym in [1.0, 0.7] {
            let model = with_coeffs(reference_model(asym));
            for order in [Order::Leading, Order::Full] {
                for (eps, k_sq) in [(0.1, K0_SQ + 0.02), (0.3, K0_SQ - 0.4)] {
                    let m = matching_solve(&model, eps, k_sq, order).unwrap();
                    assert!(m.residual < 1e-12, "residual {:e}", m.residual);
                    let (gamma, delta) = gamma_delta(&model, eps, k_sq).unwrap();
                    let tol = 1e-12 + 5e-15 * gamma.norm() * delta.norm();
                    let s12 = s12_closed(&model, eps, k_sq, order).unwrap();
                    let s11 = s11_closed(&model, eps, k_sq, order).unwrap();
                    let (c1, c2) = excitation_closed(&model, eps, k_sq, order).unwrap();
                    assert!((m.s12 - s12).norm() < tol * s12.norm().max(1e-30));
                    assert!((m.s11 - s11).norm() < tol * s11.norm().max(1e-30));
                    assert!((m.c1 - c1).norm() < tol * c1.norm().max(1e-30));
                    assert!((m.c2 - c2).norm() < tol * c2.norm().max(1e-30));
                }
            }
        }
    }

    #[test]
    fn transmission_magnitude_ignores_tip_separation() {
        let near = reference_model(1.0);
        let mut far = reference_model(1.0);
        far.d = 5.0;
        let k_sq = K0_SQ + 0.05;
        let a = matching_solve(&near, 0.2, k_sq, Order::Leading).unwrap();
        let b = matching_solve(&far, 0.2, k_sq, Order::Leading).unwrap();
        assert!((a.s12.norm() - b.s12.norm()).abs() < 1e-12 * a.s12.norm());
        assert!((a.s11 - b.s11).norm() < 1e-12 * a.s11.norm());
    }

    #[test]
    fn pole_matches_the_explicit_leading_formulas() {
        let model = reference_model(1.0);
        let eps = 0.05;
        let pole = resonance_pole(&model, eps, Order::Leading).unwrap();
        assert!(pole.k_im_sq > 0.0);
        let sum_b = 2.0 * B * B;
        let amp_sq = AMP_RE * AMP_RE + AMP_IM * AMP_IM;
        let shift = ALPHA * sum_b * model.eps_pow(eps);
        let width = BETA * BETA * sum_b * amp_sq * model.width_pow(eps);
        assert!(
            ((K0_SQ - pole.k_re_sq) - shift).abs() < 1e-3 * shift,
            "shift {} vs {shift}",
            K0_SQ - pole.k_re_sq
        );
        assert!(
            (pole.k_im_sq - width).abs() < 5e-3 * width,
            "width {} vs {width}",
            pole.k_im_sq
        );
        // the denominator really vanishes there
        let d_at = pole_denominator(
            &model,
            eps,
            C::new(pole.k_re_sq, -pole.k_im_sq),
            Order::Leading,
        )
        .unwrap();
        let d_off = pole_denominator(
            &model,
            eps,
            C::new(pole.k_re_sq + 0.1, 0.0),
            Order::Leading,
        )
        .unwrap();
        assert!(d_at.norm() < 1e-8 * d_off.norm(), "pole residual {:e}", d_at.norm());
    }

    #[test]
    fn pole_search_reports_regime_breakdown() {
        let model = with_coeffs(reference_model(1.0));
        // at half-unit diameter the correction exceeds the window; the
        // fixed point must refuse rather than report a pole
        match resonance_pole(&model, 0.55, Order::Full) {
            Err(Error::OutsideRegime { .. }) => {}
            other => panic!("expected regime error, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_tips_transmit_fully_at_resonance() {
        let model = reference_model(1.0);
        // below eps = 0.1 the linewidth in k^2 drops under the f64 spacing
        // near k0^2, so the center cannot be addressed on the k^2 grid
        let eps = 0.1;
        let pole = resonance_pole(&model, eps, Order::Leading).unwrap();
        let profile = transmission_profile(&model, eps, &pole).unwrap();
        assert_eq!(profile.peak, 1.0);
        // the matching transmission at the center approaches the peak
        let m = matching_solve(&model, eps, profile.center, Order::Leading).unwrap();
        assert!(
            (m.s12.norm_sqr() - 1.0).abs() < 1e-6,
            "|s12|^2 = {}",
            m.s12.norm_sqr()
        );
        // half height at half a width off center, against the matching curve;
        // the offset itself rounds at the ulp of the center, a 1e-4 slice of
        // the width here, so exact agreement is out of reach
        let half = transmission_at(&model, eps, &profile, profile.center + 0.5 * profile.width);
        assert!((half - 0.5 * profile.peak).abs() < 1e-3);
        let mh = matching_solve(
            &model,
            eps,
            profile.center + 0.5 * profile.width,
            Order::Leading,
        )
        .unwrap();
        assert!(
            (mh.s12.norm_sqr() - 0.5).abs() < 1e-3,
            "half-height matching {}",
            mh.s12.norm_sqr()
        );
    }

    #[test]
    fn asymmetric_tips_cap_the_peak() {
        let model = reference_model(0.6);
        let eps = 0.1;
        let pole = resonance_pole(&model, eps, Order::Leading).unwrap();
        let profile = transmission_profile(&model, eps, &pole).unwrap();
        let q = 0.6f64.recip();
        let want = 4.0 / (q + 1.0 / q).powi(2);
        assert!((profile.peak - want).abs() < 1e-12);
        let m = matching_solve(&model, eps, profile.center, Order::Leading).unwrap();
        assert!(
            (m.s12.norm_sqr() - want).abs() < 1e-3 * want,
            "peak {} vs {want}",
            m.s12.norm_sqr()
        );
    }

    #[test]
    fn shift_and_width_follow_the_diameter_powers() {
        let model = reference_model(1.0);
        let ladder = [0.2, 0.16, 0.125, 0.1];
        let mut shifts = Vec::new();
        let mut widths = Vec::new();
        for &eps in &ladder {
            let pole = resonance_pole(&model, eps, Order::Leading).unwrap();
            shifts.push(K0_SQ - pole.k_re_sq);
            widths.push(pole.k_im_sq);
        }
        let s_slope = crate::linalg::log_slope(&ladder, &shifts);
        let w_slope = crate::linalg::log_slope(&ladder, &widths);
        let want_s = 2.0 * MU1 + 1.0;
        let want_w = 4.0 * MU1 + 2.0;
        assert!(
            (s_slope - want_s).abs() < 0.05 * want_s,
            "shift slope {s_slope} vs {want_s}"
        );
        assert!(
            (w_slope - want_w).abs() < 0.05 * want_w,
            "width slope {w_slope} vs {want_w}"
        );
    }

    #[test]
    fn spin_split_follows_the_chamber_split() {
        let plus = reference_model(1.0);
        let mut minus = reference_model(1.0);
        let split = 0.295954;
        minus.k0_sq -= split;
        let eps = 0.1;
        let chars = spin_characteristics(&plus, &minus, eps).unwrap();
        // the diameter shift cancels to leading order in the separation
        assert!(
            (chars.separation - split).abs() < 1e-3 * split,
            "separation {} vs {split}",
            chars.separation
        );
        assert!(chars.resolvable);
        // polarization saturates on resonance and flips sign
        let pp = polarization_at(
            &plus,
            &minus,
            eps,
            &chars,
            chars.profile_plus.center,
        );
        let pm = polarization_at(
            &plus,
            &minus,
            eps,
            &chars,
            chars.profile_minus.center,
        );
        assert!(pp > 0.99, "on-peak polarization {pp}");
        assert!(pm < -0.99, "off-peak polarization {pm}");
        // identical models mean exactly zero polarization everywhere
        let same = spin_characteristics(&plus, &plus, eps).unwrap();
        for dk in [-1.0, 0.0, 1.0] {
            let p = polarization_at(
                &plus,
                &plus,
                eps,
                &same,
                same.profile_plus.center + dk * same.profile_plus.width,
            );
            assert_eq!(p, 0.0);
        }
    }
}
