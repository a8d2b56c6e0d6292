//! Waveguide geometry: cylinder cross-sections, conical narrows with a
//! smoothed neck, the solenoid with its gauge-fixed vector potential, and
//! membership predicates for the full and limit domains.
//!
//! The full waveguide is `G(eps) = G /\ O1(eps) /\ O2(eps)`: a cylinder `G`
//! with cross-section `D`, intersected with two hourglass bodies, each the
//! `eps`-contraction of a unit-scale body `Omega` centered at a tip on the
//! axis. `Omega` coincides with a double cone of half-angle `theta` beyond a
//! match radius, so for `eps -> 0` the waveguide degenerates into two leads
//! and a chamber joined at two conical points.

use serde::{Deserialize, Serialize};

use crate::special::{smoothstep, smoothstep_d1};
use crate::{Error, Result};

/// Cylinder cross-section `D` in the `(y, z)` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossSection {
    Disk { radius: f64 },
    Rectangle { a: f64, b: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl CrossSection {
    pub fn contains(&self, y: f64, z: f64) -> bool {
        match self {
            CrossSection::Disk { radius } => y * y + z * z < radius * radius,
            CrossSection::Rectangle { a, b } => y.abs() < a / 2.0 && z.abs() < b / 2.0,
            CrossSection::Polygon { vertices } => point_in_polygon(y, z, vertices),
        }
    }

    /// Half-extents of the bounding box, `([*y*], [*z*])`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            CrossSection::Disk { radius } => ([-radius, *radius], [-radius, *radius]),
            CrossSection::Rectangle { a, b } => ([-a / 2.0, a / 2.0], [-b / 2.0, b / 2.0]),
            CrossSection::Polygon { vertices } => {
                let mut yb = [f64::INFINITY, f64::NEG_INFINITY];
                let mut zb = [f64::INFINITY, f64::NEG_INFINITY];
                for v in vertices {
                    yb[0] = yb[0].min(v[0]);
                    yb[1] = yb[1].max(v[0]);
                    zb[0] = zb[0].min(v[1]);
                    zb[1] = zb[1].max(v[1]);
                }
                (yb, zb)
            }
        }
    }

    /// Largest distance from the axis to a cross-section point.
    pub fn max_radius(&self) -> f64 {
        match self {
            CrossSection::Disk { radius } => *radius,
            CrossSection::Rectangle { a, b } => (a * a + b * b).sqrt() / 2.0,
            CrossSection::Polygon { vertices } => vertices
                .iter()
                .map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt())
                .fold(0.0, f64::max),
        }
    }

    pub fn is_disk(&self) -> bool {
        matches!(self, CrossSection::Disk { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CrossSection::Disk { radius } if *radius > 0.0 => Ok(()),
            CrossSection::Rectangle { a, b } if *a > 0.0 && *b > 0.0 => Ok(()),
            CrossSection::Polygon { vertices } if vertices.len() >= 3 => Ok(()),
            _ => Err(Error::invalid("degenerate cross-section")),
        }
    }
}

fn point_in_polygon(y: f64, z: f64, vs: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = vs.len();
    for i in 0..n {
        let (a, b) = (vs[i], vs[(i + 1) % n]);
        if (a[1] > z) != (b[1] > z) {
            let t = (z - a[1]) / (b[1] - a[1]);
            if y < a[0] + t * (b[0] - a[0]) {
                inside = !inside;
            }
        }
    }
    inside
}

/// Radial profile of the unit-scale narrow body `Omega`.
///
/// The default is a one-sheet hyperboloid `s(xi) = tan(theta) *
/// sqrt(xi^2 + w0^2)` blended into the exact cone beyond the match radius;
/// its waist diameter (`2 s(0)`) is the `waist` parameter, so the physical
/// narrow diameter is `eps * waist`. Custom profiles supply radius samples on
/// a uniform grid over `[-rho_match, rho_match]` and must join the cone at
/// the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeckProfile {
    Hyperboloid { waist: f64 },
    Custom { samples: Vec<f64> },
}

/// One conical narrow: tip position on the axis, cone half-angle, neck
/// profile, and the radius beyond which `Omega` is exactly conical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrowSpec {
    pub tip_x: f64,
    pub half_angle: f64,
    pub profile: NeckProfile,
    pub rho_match: f64,
}

impl NarrowSpec {
    pub fn tan_theta(&self) -> f64 {
        self.half_angle.tan()
    }

    /// Unit-scale boundary radius at axial coordinate `xi`.
    pub fn unit_radius(&self, xi: f64) -> f64 {
        let c = self.tan_theta();
        let ax = xi.abs();
        if ax >= self.rho_match {
            return c * ax;
        }
        match &self.profile {
            NeckProfile::Hyperboloid { waist } => {
                let w0 = waist / (2.0 * c);
                let cone = c * ax;
                let hyper = c * (xi * xi + w0 * w0).sqrt();
                // blend to the exact cone over the outer half of the match zone
                let chi = 1.0 - smoothstep((ax - self.rho_match / 2.0) / (self.rho_match / 2.0));
                cone + chi * (hyper - cone)
            }
            NeckProfile::Custom { samples } => {
                let n = samples.len();
                let t = (xi + self.rho_match) / (2.0 * self.rho_match) * (n - 1) as f64;
                let i = (t.floor() as usize).min(n - 2);
                let f = t - i as f64;
                samples[i] * (1.0 - f) + samples[i + 1] * f
            }
        }
    }

    /// Membership in the unit-scale body `Omega`.
    pub fn in_unit_body(&self, xi: f64, eta: f64, zeta: f64) -> bool {
        let s = self.unit_radius(xi);
        eta * eta + zeta * zeta < s * s
    }

    /// Membership in the contracted body `Omega(eps)` at a lab-frame point.
    /// `eps = 0` degenerates to the double cone `K` at the tip.
    pub fn in_body(&self, eps: f64, x: f64, y: f64, z: f64) -> bool {
        let dx = x - self.tip_x;
        if eps == 0.0 {
            let c = self.tan_theta();
            return y * y + z * z < c * c * dx * dx;
        }
        self.in_unit_body(dx / eps, y / eps, z / eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_angle > 0.0 && self.half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "cone half-angle {} outside (0, pi/2)",
                self.half_angle
            )));
        }
        if !(self.rho_match > 0.0) {
            return Err(Error::invalid("rho_match must be positive"));
        }
        match &self.profile {
            NeckProfile::Hyperboloid { waist } => {
                if !(*waist > 0.0) {
                    return Err(Error::invalid("neck waist must be positive (closed neck)"));
                }
            }
            NeckProfile::Custom { samples } => {
                if samples.len() < 5 {
                    return Err(Error::invalid("custom profile needs >= 5 samples"));
                }
                if samples.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::invalid("custom profile radii must be positive"));
                }
                let cone_end = self.tan_theta() * self.rho_match;
                for s in [samples[0], *samples.last().unwrap()] {
                    if (s - cone_end).abs() > 1e-6 * cone_end {
                        return Err(Error::invalid(
                            "custom profile must join the cone at +/- rho_match",
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Electron spin projection on the solenoid axis; selects the sign of the
/// Zeeman term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Plus,
    Minus,
}

impl Spin {
    pub fn sign(self) -> f64 {
        match self {
            Spin::Plus => 1.0,
            Spin::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Plus => Spin::Minus,
            Spin::Minus => Spin::Plus,
        }
    }
}

/// Solenoid threading the chamber: axis parallel to `z` through
/// `(x0, y0)`, uniform field `h0` inside radius `radius`.
///
/// The raw vector potential `A = A(rho) e_psi` falls off like `1/rho`; the
/// gauge-fixed `A'` subtracts the gradient of `tau(|x - x0|) * c * psi`
/// (flux constant `c`, azimuth `psi` with branch cut along `psi = -pi/2`,
/// cutoff `tau` ramping over `cutoff.0 < |x - x0| < cutoff.1`), which makes
/// `A'` vanish identically for `|x - x0| >= cutoff.1`. The cut half-plane
/// sits at `x = x0` where `tau = 0`, so the discontinuity is never sampled
/// in a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolenoidSpec {
    pub center: [f64; 2],
    pub radius: f64,
    pub h0: f64,
    /// `(inner, outer)` axial radii of the gauge cutoff ramp.
    pub cutoff: (f64, f64),
}

impl SolenoidSpec {
    /// Default cutoff per the gauge construction: ramp over
    /// `(radius + 1, radius + 2)`.
    pub fn with_default_cutoff(center: [f64; 2], radius: f64, h0: f64) -> Self {
        SolenoidSpec {
            center,
            radius,
            h0,
            cutoff: (radius + 1.0, radius + 2.0),
        }
    }

    /// Field strength `H` at a point (independent of `z`).
    pub fn field(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        if dx * dx + dy * dy < self.radius * self.radius {
            self.h0
        } else {
            0.0
        }
    }

    /// Flux constant `c = integral_0^R t H(t) dt = h0 R^2 / 2`.
    pub fn flux_constant(&self) -> f64 {
        self.h0 * self.radius * self.radius / 2.0
    }

    /// Raw potential `A(rho) e_psi`: `h0 rho / 2` inside, `c / rho` outside.
    pub fn raw_potential(&self, x: f64, y: f64) -> [f64; 3] {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let rho2 = dx * dx + dy * dy;
        if rho2 == 0.0 {
            return [0.0; 3];
        }
        // A(rho)/rho avoids the square root: h0/2 inside, c/rho^2 outside
        let a_over_rho = if rho2 < self.radius * self.radius {
            self.h0 / 2.0
        } else {
            self.flux_constant() / rho2
        };
        [-dy * a_over_rho, dx * a_over_rho, 0.0]
    }

    /// Azimuth around the solenoid axis on the branch `(-pi/2, 3pi/2]`.
    fn azimuth(&self, x: f64, y: f64) -> f64 {
        let psi = (y - self.center[1]).atan2(x - self.center[0]);
        if psi < -std::f64::consts::FRAC_PI_2 {
            psi + 2.0 * std::f64::consts::PI
        } else {
            psi
        }
    }

    fn tau(&self, t: f64) -> (f64, f64) {
        let (t0, t1) = self.cutoff;
        let u = (t - t0) / (t1 - t0);
        (smoothstep(u), smoothstep_d1(u) / (t1 - t0))
    }

    /// Gauge-fixed potential `A' = A - grad(tau(|x - x0|) c psi)`.
    ///
    /// Exactly zero for `|x - x0| >= cutoff.1`. Errors if a point on the
    /// branch cut would be sampled where the cutoff is active (impossible
    /// for `cutoff.0 > 0`; kept as a configuration guard).
    pub fn modified_potential(&self, x: f64, y: f64) -> Result<[f64; 3]> {
        let t = (x - self.center[0]).abs();
        if t >= self.cutoff.1 {
            return Ok([0.0; 3]);
        }
        let a = self.raw_potential(x, y);
        let (tau, tau_d) = self.tau(t);
        if tau == 0.0 && tau_d == 0.0 {
            return Ok(a);
        }
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let rho2 = dx * dx + dy * dy;
        if dx == 0.0 && dy < 0.0 {
            return Err(Error::BranchCut(format!(
                "point ({x}, {y}) lies on the cut with active cutoff"
            )));
        }
        let c = self.flux_constant();
        let psi = self.azimuth(x, y);
        // grad(tau c psi) = tau' sgn(x-x0) c psi e_x + tau c e_psi / rho
        let sgn = if dx >= 0.0 { 1.0 } else { -1.0 };
        Ok([
            a[0] - tau_d * sgn * c * psi - tau * c * (-dy / rho2),
            a[1] - tau * c * (dx / rho2),
            a[2],
        ])
    }

    /// Scalar `g = tau(|x - x0|) c psi` with `A' = A - grad g`.
    ///
    /// Continuous everywhere the cutoff is active (`tau = 0` on the branch
    /// cut whenever `cutoff.0 > 0`), so wavefunctions in the two gauges are
    /// related pointwise by `Psi' = e^{-i sigma g} Psi` for charge sign
    /// `sigma` matching the potential coupling.
    pub fn gauge_function(&self, x: f64, y: f64) -> f64 {
        let t = (x - self.center[0]).abs();
        if t >= self.cutoff.1 {
            return 0.0;
        }
        let (tau, _) = self.tau(t);
        if tau == 0.0 {
            return 0.0;
        }
        tau * self.flux_constant() * self.azimuth(x, y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::invalid("solenoid radius must be positive"));
        }
        let (t0, t1) = self.cutoff;
        if !(t0 >= self.radius && t1 > t0) {
            return Err(Error::invalid(format!(
                "gauge cutoff ({t0}, {t1}) must satisfy radius <= inner < outer"
            )));
        }
        Ok(())
    }
}

/// Full device description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideSpec {
    pub cross_section: CrossSection,
    pub narrows: [NarrowSpec; 2],
    /// Contraction scale of the narrows (physical waist = `eps * waist`).
    pub eps: f64,
    pub solenoid: Option<SolenoidSpec>,
}

impl WaveguideSpec {
    /// Distance between the two tips.
    pub fn tip_distance(&self) -> f64 {
        self.narrows[1].tip_x - self.narrows[0].tip_x
    }

    /// Membership in the full waveguide `G(eps)`.
    pub fn in_full(&self, x: f64, y: f64, z: f64) -> bool {
        self.cross_section.contains(y, z)
            && self.narrows[0].in_body(self.eps, x, y, z)
            && self.narrows[1].in_body(self.eps, x, y, z)
    }

    /// Membership in the limit chamber `G2` (between the tips, `eps = 0`).
    pub fn in_resonator(&self, x: f64, y: f64, z: f64) -> bool {
        x > self.narrows[0].tip_x
            && x < self.narrows[1].tip_x
            && self.cross_section.contains(y, z)
            && self.narrows[0].in_body(0.0, x, y, z)
            && self.narrows[1].in_body(0.0, x, y, z)
    }

    /// Membership in the left limit lead `G1` (`x` below the first tip).
    pub fn in_left_channel(&self, x: f64, y: f64, z: f64) -> bool {
        x < self.narrows[0].tip_x
            && self.cross_section.contains(y, z)
            && self.narrows[0].in_body(0.0, x, y, z)
    }

    pub fn validate(&self) -> Result<()> {
        self.cross_section.validate()?;
        for n in &self.narrows {
            n.validate()?;
        }
        let d = self.tip_distance();
        if !(d > 0.0) {
            return Err(Error::invalid("tips must be ordered with positive distance"));
        }
        let theta0 = self.narrows[0].half_angle;
        if (theta0 - self.narrows[1].half_angle).abs() > 1e-12 {
            return Err(Error::invalid(
                "both narrows must share the cone half-angle (one cap spectrum)",
            ));
        }
        // the circle where the two cone boundaries meet must lie outside the
        // cylinder, so the chamber walls are cones and cylinder wall only
        let meet_radius = d / 2.0 * theta0.tan();
        if meet_radius <= self.cross_section.max_radius() {
            return Err(Error::invalid(format!(
                "cones meet inside the guide: (d/2) tan(theta) = {meet_radius:.4} <= max cross-section radius"
            )));
        }
        if self.eps < 0.0 {
            return Err(Error::invalid("eps must be non-negative"));
        }
        for n in &self.narrows {
            if self.eps * n.rho_match > d / 2.0 {
                return Err(Error::invalid(
                    "eps * rho_match exceeds half the tip distance; necks overlap",
                ));
            }
        }
        if let Some(s) = &self.solenoid {
            s.validate()?;
            let (x0, x1) = (self.narrows[0].tip_x, self.narrows[1].tip_x);
            if !(s.center[0] - s.radius > x0 && s.center[0] + s.radius < x1) {
                return Err(Error::invalid(
                    "solenoid support must lie strictly between the tips",
                ));
            }
            // the modified potential must vanish in a fixed neighborhood of
            // each tip so the channel problems stay field-free
            let margin = 0.1 * (x1 - x0);
            if s.center[0] - s.cutoff.1 < x0 + margin || s.center[0] + s.cutoff.1 > x1 - margin {
                return Err(Error::invalid(
                    "gauge cutoff support reaches a tip neighborhood; shrink cutoff radii",
                ));
            }
        }
        Ok(())
    }
}

/// Reference device used across tests and examples: unit disk cross-section,
/// `theta = pi/3` cones 2 radii apart, hyperboloid necks of unit-scale waist
/// diameter 1, and an optional centered solenoid with a compact gauge ramp.
pub fn reference_spec(eps: f64, solenoid_h0: Option<f64>) -> WaveguideSpec {
    let narrow = |tip_x: f64| NarrowSpec {
        tip_x,
        half_angle: std::f64::consts::FRAC_PI_3,
        profile: NeckProfile::Hyperboloid { waist: 1.0 },
        rho_match: 3.0,
    };
    WaveguideSpec {
        cross_section: CrossSection::Disk { radius: 1.0 },
        narrows: [narrow(0.0), narrow(2.0)],
        eps,
        solenoid: solenoid_h0.map(|h0| SolenoidSpec {
            center: [1.0, 0.0],
            radius: 0.25,
            h0,
            cutoff: (0.3, 0.5),
        }),
    }
}
