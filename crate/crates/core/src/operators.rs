//! Grid operators: Helmholtz and Pauli stencils over voxel grids.
//!
//! The Laplacian uses a symmetric cut-cell correction: where a grid line
//! leaves the domain at fraction `s` of a step, the ghost value is linearly
//! extrapolated through the boundary point, which turns into a `1/s` diagonal
//! weight. Only diagonals change, so Hermitian structure survives and errors
//! stay O(h^2), clean enough for Richardson extrapolation.
//!
//! A magnetic vector potential enters as unitary link phases (midpoint rule),
//! spin as a `+/- H` diagonal. Open faces are closed by a transverse-mode
//! transfer relation: each outgoing mode's ghost amplitude is its boundary
//! amplitude times `exp(i zeta h)` with the continuum dispersion
//! `zeta = sqrt(k^2 - lambda_n^2)`, plus an injection term for the incident
//! wave. Closing with continuum dispersions against discrete mode shapes
//! leaves a deliberate O(h^2) unitarity defect that refines away under
//! `h -> h/2`.

use num_complex::Complex64;

use crate::grid::{AxiGrid, VoxelGrid3, GHOST, WALL};
use crate::linalg::{
    dotc, lanczos_extreme, nrm2, tridiag_eigen, BlockTridiagLu, Coupling, PlaneSystem,
};
use crate::{Error, Result};

type C = Complex64;

const MODE_SEED: u64 = 0x5ec7_0a11;

/// Magnetic data for the Pauli operator: a vector potential sampled at link
/// midpoints and the field strength entering the spin diagonal.
pub struct MagneticField<'a> {
    pub potential: &'a dyn Fn(f64, f64, f64) -> [f64; 3],
    pub zeeman: &'a dyn Fn(f64, f64, f64) -> f64,
    /// Spin sign: +1 adds `+H`, -1 adds `-H`.
    pub sign: f64,
}

/// Radiation closure request for one open x face.
pub struct FaceClosure {
    pub low_face: bool,
    pub n_modes: usize,
    /// Continuum transverse thresholds `lambda_n^2`, ascending, at least
    /// `n_modes` of them.
    pub thresholds: Vec<f64>,
    /// Index of the mode injected with unit amplitude, if any.
    pub incident: Option<usize>,
}

/// Mode data retained per closed face for amplitude extraction.
pub struct FaceModes {
    pub low_face: bool,
    pub plane: usize,
    /// Unknown-id range of the face plane in the global ordering.
    pub range: (usize, usize),
    /// l2-orthonormal transverse mode shapes over the face plane.
    pub modes: Vec<Vec<C>>,
    /// Complex axial wavenumbers `zeta_n` (real = propagating).
    pub zetas: Vec<C>,
    /// Face x coordinate.
    pub x_b: f64,
}

pub struct Assembled {
    pub sys: PlaneSystem,
    pub rhs: Vec<C>,
    pub faces: Vec<FaceModes>,
}

fn axial_wavenumber(k_sq: C, lambda_sq: f64) -> C {
    // branch with Im >= 0: decaying or outgoing
    let z = (k_sq - C::new(lambda_sq, 0.0)).sqrt();
    if z.im < 0.0 {
        -z
    } else {
        z
    }
}

/// Deterministic sign convention: largest-magnitude entry made positive real.
fn fix_mode_sign(v: &mut [C]) {
    let mut best = 0usize;
    let mut mag = 0.0;
    for (i, x) in v.iter().enumerate() {
        if x.norm_sqr() > mag {
            mag = x.norm_sqr();
            best = i;
        }
    }
    let ph = v[best] / v[best].norm();
    for x in v.iter_mut() {
        *x /= ph;
    }
}

/// Lowest `nev` eigenpairs of a small dense symmetric block, via a dense
/// factorization and deflated Lanczos on its inverse. Deflation walks
/// through degenerate clusters one member at a time.
fn dense_lowest_modes(block: &[C], n: usize, nev: usize) -> Result<Vec<(f64, Vec<C>)>> {
    let lu = crate::linalg::DenseLu::factor(block.to_vec(), n)?;
    let solve = |v: &[C]| {
        let mut b = v.to_vec();
        lu.solve_in_place(&mut b);
        b
    };
    let mut out: Vec<(f64, Vec<C>)> = Vec::with_capacity(nev);
    let mut space: Vec<Vec<C>> = Vec::new();
    for i in 0..nev.min(n) {
        let steps = 40.min(n - i);
        let p = lanczos_extreme(n, solve, steps, 1, MODE_SEED, &space)?.remove(0);
        let mut v = p.vector;
        fix_mode_sign(&mut v);
        out.push((1.0 / p.value, v.clone()));
        space.push(v);
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(out)
}

/// Assemble the 3D operator `-Delta_A - k^2 (+/- H)` over the grid. `axes`
/// masks coordinate directions, letting a single-plane grid act as a 2D
/// problem. Returns the plane system plus injection right-hand side.
pub fn assemble3(
    grid: &VoxelGrid3,
    k_sq: C,
    field: Option<&MagneticField>,
    closures: &[FaceClosure],
    axes: [bool; 3],
) -> Result<Assembled> {
    let h = grid.h;
    let h2 = h * h;
    let np = grid.dims[0];
    let sizes: Vec<usize> = grid.plane_range.iter().map(|(a, b)| b - a).collect();
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid("grid contains an empty x-plane"));
    }
    let mut diag: Vec<Vec<C>> = sizes.iter().map(|&s| vec![C::new(0.0, 0.0); s * s]).collect();
    let mut down: Vec<Coupling> = vec![Vec::new(); np.saturating_sub(1)];
    let mut up: Vec<Coupling> = vec![Vec::new(); np.saturating_sub(1)];
    let mut rhs = vec![C::new(0.0, 0.0); grid.n_unknowns()];

    // transverse blocks of closure planes, captured before axial terms land
    let mut face_planes: Vec<usize> = Vec::new();
    for c in closures {
        face_planes.push(if c.low_face { 0 } else { np - 1 });
    }

    let dir_vec = |d: usize| -> [f64; 3] {
        match d {
            0 => [-1.0, 0.0, 0.0],
            1 => [1.0, 0.0, 0.0],
            2 => [0.0, -1.0, 0.0],
            3 => [0.0, 1.0, 0.0],
            4 => [0.0, 0.0, -1.0],
            _ => [0.0, 0.0, 1.0],
        }
    };

    for q in 0..grid.n_unknowns() {
        let plane = grid.nodes[q][0] as usize;
        let start = grid.plane_range[plane].0;
        let r = q - start;
        let n = sizes[plane];
        let p = grid.node_pos(q);
        let mut dacc = -k_sq;
        if let Some(f) = field {
            dacc += C::new(f.sign * (f.zeeman)(p[0], p[1], p[2]), 0.0);
        }
        for d in 0..6 {
            if !axes[d / 2] {
                continue;
            }
            let e = dir_vec(d);
            match grid.neighbors[q][d] {
                nb if nb >= 0 => {
                    dacc += C::new(1.0 / h2, 0.0);
                    let mut phase = C::new(1.0, 0.0);
                    if let Some(f) = field {
                        let mid = [p[0] + 0.5 * h * e[0], p[1] + 0.5 * h * e[1], p[2] + 0.5 * h * e[2]];
                        let a = (f.potential)(mid[0], mid[1], mid[2]);
                        let arg = -(a[0] * e[0] + a[1] * e[1] + a[2] * e[2]) * h;
                        phase = C::new(arg.cos(), arg.sin());
                    }
                    let coef = -phase / h2;
                    let nb = nb as usize;
                    let nb_plane = grid.nodes[nb][0] as usize;
                    if nb_plane == plane {
                        diag[plane][r * n + (nb - start)] += coef;
                    } else if nb_plane == plane + 1 {
                        up[plane].push((r, nb - grid.plane_range[nb_plane].0, coef));
                    } else {
                        down[nb_plane].push((r, nb - grid.plane_range[nb_plane].0, coef));
                    }
                }
                WALL => {
                    dacc += C::new(1.0 / (grid.cuts[q][d] * h2), 0.0);
                }
                GHOST => {
                    // ghost neighbor at full step; its value comes from a
                    // face closure added below
                    dacc += C::new(1.0 / h2, 0.0);
                }
                other => panic!("unexpected neighbor sentinel {other}"),
            }
        }
        diag[plane][r * n + r] += dacc;
    }

    // face closures
    let mut faces = Vec::new();
    for c in closures {
        let plane = if c.low_face { 0 } else { np - 1 };
        let (start, end) = grid.plane_range[plane];
        let n = end - start;
        let gdir = if c.low_face { 0 } else { 1 };
        let inward = if c.low_face { 1 } else { 0 };
        let next = if c.low_face { plane + 1 } else { plane - 1 };
        let next_size = grid.plane_range[next].1 - grid.plane_range[next].0;
        let uniform = next_size == n
            && (start..end).all(|q| grid.neighbors[q][gdir] == GHOST && grid.neighbors[q][inward] >= 0);
        if !uniform {
            return Err(Error::invalid(
                "closure face is not in a uniform lead section; extend the box",
            ));
        }
        if c.thresholds.len() < c.n_modes {
            return Err(Error::invalid("fewer thresholds than requested closure modes"));
        }
        // transverse operator of the face plane: strip axial and bulk terms
        // from the assembled diagonal block
        let mut t = diag[plane].clone();
        for q in start..end {
            let r = q - start;
            let mut axial = -k_sq;
            if let Some(f) = field {
                let p = grid.node_pos(q);
                axial += C::new(f.sign * (f.zeeman)(p[0], p[1], p[2]), 0.0);
            }
            for d in 0..2 {
                if !axes[0] {
                    continue;
                }
                axial += match grid.neighbors[q][d] {
                    nb if nb >= 0 => C::new(1.0 / h2, 0.0),
                    WALL => C::new(1.0 / (grid.cuts[q][d] * h2), 0.0),
                    _ => C::new(1.0 / h2, 0.0),
                };
            }
            t[r * n + r] -= axial;
        }
        let nev = c.n_modes.min(n);
        let pairs = dense_lowest_modes(&t, n, nev)?;
        let modes: Vec<Vec<C>> = pairs.iter().map(|(_, v)| v.clone()).collect();
        let zetas: Vec<C> = (0..nev).map(|m| axial_wavenumber(k_sq, c.thresholds[m])).collect();
        // ghost = sum_n exp(i zeta_n h) psi_n psi_n^dag u
        for (m, psi) in modes.iter().enumerate() {
            let phi = (C::new(0.0, 1.0) * zetas[m] * h).exp();
            let w = -phi / h2;
            for a in 0..n {
                if psi[a].norm_sqr() == 0.0 {
                    continue;
                }
                for b in 0..n {
                    diag[plane][a * n + b] += w * psi[a] * psi[b].conj();
                }
            }
        }
        let x_b = grid.origin[0] + plane as f64 * h;
        if let Some(mi) = c.incident {
            let zeta = zetas[mi];
            if zeta.im.abs() > 1e-12 * (1.0 + zeta.re.abs()) {
                return Err(Error::OutsideWindow {
                    k_sq: k_sq.re,
                    lo: c.thresholds[mi],
                    hi: f64::INFINITY,
                });
            }
            let nu = zeta.re;
            // incident exp(+/- i nu x) traveling into the domain
            let sgn = if c.low_face { 1.0 } else { -1.0 };
            let inj = (C::new(0.0, sgn * nu * (x_b - sgn * h)).exp()
                - (C::new(0.0, 1.0) * zeta * h).exp() * C::new(0.0, sgn * nu * x_b).exp())
                / h2;
            for a in 0..n {
                rhs[start + a] += inj * modes[mi][a];
            }
        }
        faces.push(FaceModes {
            low_face: c.low_face,
            plane,
            range: (start, end),
            modes,
            zetas,
            x_b,
        });
    }

    Ok(Assembled {
        sys: PlaneSystem { sizes, diag, down, up },
        rhs,
        faces,
    })
}

impl Assembled {
    /// Modal amplitude `psi_m^dag u` on a closed face.
    pub fn face_amplitude(&self, face: usize, m: usize, u: &[C]) -> C {
        let f = &self.faces[face];
        dotc(&f.modes[m], &u[f.range.0..f.range.1])
    }

    /// Reflection and transmission entries for unit incidence in mode 0 on
    /// the given face, the transmitted side being the other closed face.
    pub fn scattering_pair(&self, inc_face: usize, out_face: usize, u: &[C]) -> (C, C) {
        let fi = &self.faces[inc_face];
        let fo = &self.faces[out_face];
        let nu_i = fi.zetas[0].re;
        let nu_o = fo.zetas[0].re;
        let sgn = if fi.low_face { 1.0 } else { -1.0 };
        let a_in = self.face_amplitude(inc_face, 0, u);
        let a_out = self.face_amplitude(out_face, 0, u);
        let inc_phase = C::new(0.0, sgn * nu_i * fi.x_b).exp();
        // reflected wave travels opposite the incident direction
        let refl_phase = C::new(0.0, -sgn * nu_i * fi.x_b).exp();
        let s11 = (a_in - inc_phase) / refl_phase;
        let sgo = if fo.low_face { -1.0 } else { 1.0 };
        let out_phase = C::new(0.0, sgo * nu_o * fo.x_b).exp();
        let s12 = a_out / out_phase;
        (s11, s12)
    }
}

// ---------------------------------------------------------------------------
// axisymmetric assembly (m = 0 sector)

/// Assembled axisymmetric operator in symmetrized form: the radial measure
/// `s` is folded into the unknowns, `u_hat = sqrt(s) u`, keeping the matrix
/// symmetric.
pub struct AssembledAxi {
    pub sys: PlaneSystem,
    pub rhs: Vec<C>,
    pub faces: Vec<FaceModes>,
}

/// Optional inhomogeneous Dirichlet data evaluated at wall-cut points.
pub type WallData<'a> = &'a dyn Fn(f64, f64) -> f64;

pub fn assemble_axi(
    grid: &AxiGrid,
    k_sq: C,
    closures: &[FaceClosure],
    wall_data: Option<WallData>,
) -> Result<AssembledAxi> {
    let h = grid.h;
    let h2 = h * h;
    let np = grid.nx;
    let sizes: Vec<usize> = grid.col_range.iter().map(|(a, b)| b - a).collect();
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::invalid("grid contains an empty x-column"));
    }
    let mut diag: Vec<Vec<C>> = sizes.iter().map(|&s| vec![C::new(0.0, 0.0); s * s]).collect();
    let mut down: Vec<Coupling> = vec![Vec::new(); np.saturating_sub(1)];
    let mut up: Vec<Coupling> = vec![Vec::new(); np.saturating_sub(1)];
    let mut rhs = vec![C::new(0.0, 0.0); grid.n_unknowns()];

    for q in 0..grid.n_unknowns() {
        let col = grid.nodes[q][0] as usize;
        let j = grid.nodes[q][1] as usize;
        let start = grid.col_range[col].0;
        let r = q - start;
        let n = sizes[col];
        let (x, s) = grid.node_pos(q);
        let mut dacc = -k_sq;
        // radial faces at j h and (j+1) h
        let fw = [s - 0.5 * h, s + 0.5 * h];
        for d in 0..4 {
            let (axial, face_w) = match d {
                0 | 1 => (true, s),
                2 => (false, fw[0]),
                _ => (false, fw[1]),
            };
            match grid.neighbors[q][d] {
                nb if nb >= 0 => {
                    let nb = nb as usize;
                    let (_, s_nb) = grid.node_pos(nb);
                    dacc += C::new(face_w / (s * h2), 0.0);
                    let coef = C::new(-face_w / (h2 * (s * s_nb).sqrt()), 0.0);
                    let nb_col = grid.nodes[nb][0] as usize;
                    if nb_col == col {
                        diag[col][r * n + (nb - start)] += coef;
                    } else if nb_col == col + 1 {
                        up[col].push((r, nb - grid.col_range[nb_col].0, coef));
                    } else {
                        down[nb_col].push((r, nb - grid.col_range[nb_col].0, coef));
                    }
                }
                WALL => {
                    if d == 2 && j == 0 {
                        continue; // axis face: zero area
                    }
                    let cut = grid.cuts[q][d];
                    dacc += C::new(face_w / (s * cut * h2), 0.0);
                    if let Some(g) = wall_data {
                        let (dx, ds) = match d {
                            0 => (-cut * h, 0.0),
                            1 => (cut * h, 0.0),
                            2 => (0.0, -cut * h),
                            _ => (0.0, cut * h),
                        };
                        let gb = g(x + dx, s + ds);
                        if gb != 0.0 {
                            rhs[q] += C::new(face_w * gb / (s.sqrt() * cut * h2), 0.0);
                        }
                    }
                }
                GHOST => {
                    dacc += C::new(face_w / (s * h2), 0.0);
                }
                other => panic!("unexpected neighbor sentinel {other}"),
            }
            let _ = axial;
        }
        diag[col][r * n + r] += dacc;
    }

    let mut faces = Vec::new();
    for c in closures {
        let col = if c.low_face { 0 } else { np - 1 };
        let (start, end) = grid.col_range[col];
        let n = end - start;
        let gdir = if c.low_face { 0 } else { 1 };
        let inward = if c.low_face { 1 } else { 0 };
        let next = if c.low_face { col + 1 } else { col - 1 };
        let next_size = grid.col_range[next].1 - grid.col_range[next].0;
        let uniform = next_size == n
            && (start..end).all(|q| grid.neighbors[q][gdir] == GHOST && grid.neighbors[q][inward] >= 0);
        if !uniform {
            return Err(Error::invalid(
                "closure face is not in a uniform lead section; extend the box",
            ));
        }
        if c.thresholds.len() < c.n_modes {
            return Err(Error::invalid("fewer thresholds than requested closure modes"));
        }
        // transverse radial operator of the face column, tridiagonal exactly
        let mut dvec = vec![0.0; n];
        let mut evec = vec![0.0; n.saturating_sub(1)];
        for q in start..end {
            let r = q - start;
            let j = grid.nodes[q][1] as usize;
            let s = (j as f64 + 0.5) * h;
            let mut dd = 0.0;
            for d in 2..4 {
                let face_w = if d == 2 { s - 0.5 * h } else { s + 0.5 * h };
                match grid.neighbors[q][d] {
                    nb if nb >= 0 => {
                        let (_, s_nb) = grid.node_pos(nb as usize);
                        dd += face_w / (s * h2);
                        if d == 3 && r + 1 < n {
                            evec[r] = -face_w / (h2 * (s * s_nb).sqrt());
                        }
                    }
                    WALL => {
                        if d == 2 && j == 0 {
                            continue;
                        }
                        dd += face_w / (s * grid.cuts[q][d] * h2);
                    }
                    _ => dd += face_w / (s * h2),
                }
            }
            dvec[r] = dd;
        }
        let (vals, vecs) = tridiag_eigen(&dvec, &evec)?;
        let nev = c.n_modes.min(n);
        let mut modes: Vec<Vec<C>> = Vec::with_capacity(nev);
        for m in 0..nev {
            let mut v: Vec<C> = (0..n).map(|r| C::new(vecs[r * n + m], 0.0)).collect();
            fix_mode_sign(&mut v);
            modes.push(v);
        }
        let _ = vals;
        let zetas: Vec<C> = (0..nev).map(|m| axial_wavenumber(k_sq, c.thresholds[m])).collect();
        for (m, psi) in modes.iter().enumerate() {
            let phi = (C::new(0.0, 1.0) * zetas[m] * h).exp();
            let w = -phi / h2;
            for a in 0..n {
                for b in 0..n {
                    diag[col][a * n + b] += w * psi[a] * psi[b].conj();
                }
            }
        }
        let x_b = grid.x0 + col as f64 * h;
        if let Some(mi) = c.incident {
            let zeta = zetas[mi];
            if zeta.im.abs() > 1e-12 * (1.0 + zeta.re.abs()) {
                return Err(Error::OutsideWindow {
                    k_sq: k_sq.re,
                    lo: c.thresholds[mi],
                    hi: f64::INFINITY,
                });
            }
            let nu = zeta.re;
            let sgn = if c.low_face { 1.0 } else { -1.0 };
            let inj = (C::new(0.0, sgn * nu * (x_b - sgn * h)).exp()
                - (C::new(0.0, 1.0) * zeta * h).exp() * C::new(0.0, sgn * nu * x_b).exp())
                / h2;
            for a in 0..n {
                rhs[start + a] += inj * modes[mi][a];
            }
        }
        faces.push(FaceModes {
            low_face: c.low_face,
            plane: col,
            range: (start, end),
            modes,
            zetas,
            x_b,
        });
    }

    Ok(AssembledAxi {
        sys: PlaneSystem { sizes, diag, down, up },
        rhs,
        faces,
    })
}

impl AssembledAxi {
    /// Scale a physical volume force into the symmetrized right-hand side.
    pub fn force_rhs(&self, grid: &AxiGrid, f: &dyn Fn(f64, f64) -> C) -> Vec<C> {
        (0..grid.n_unknowns())
            .map(|q| {
                let (x, s) = grid.node_pos(q);
                f(x, s) * s.sqrt()
            })
            .collect()
    }

    /// Convert a symmetrized solution back to physical node values.
    pub fn physical(&self, grid: &AxiGrid, u_hat: &[C]) -> Vec<C> {
        (0..grid.n_unknowns())
            .map(|q| u_hat[q] / grid.weight(q).sqrt())
            .collect()
    }

    pub fn face_amplitude(&self, face: usize, m: usize, u: &[C]) -> C {
        let f = &self.faces[face];
        dotc(&f.modes[m], &u[f.range.0..f.range.1])
    }

    pub fn scattering_pair(&self, inc_face: usize, out_face: usize, u: &[C]) -> (C, C) {
        let fi = &self.faces[inc_face];
        let fo = &self.faces[out_face];
        let sgn = if fi.low_face { 1.0 } else { -1.0 };
        let a_in = self.face_amplitude(inc_face, 0, u);
        let a_out = self.face_amplitude(out_face, 0, u);
        let inc_phase = C::new(0.0, sgn * fi.zetas[0].re * fi.x_b).exp();
        let refl_phase = C::new(0.0, -sgn * fi.zetas[0].re * fi.x_b).exp();
        let s11 = (a_in - inc_phase) / refl_phase;
        let sgo = if fo.low_face { -1.0 } else { 1.0 };
        let out_phase = C::new(0.0, sgo * fo.zetas[0].re * fo.x_b).exp();
        let s12 = a_out / out_phase;
        (s11, s12)
    }
}

// ---------------------------------------------------------------------------
// eigensolver driver

/// Eigenvalues of an assembled family nearest `sigma`: deflated shift-invert
/// Lanczos on a factorization at `sigma`, then Rayleigh-quotient refinement
/// with one fresh factorization per eigenvalue round.
pub fn eigs_near<A>(
    n: usize,
    assemble: A,
    sigma: f64,
    nev: usize,
    lanczos_steps: usize,
    rqi_rounds: usize,
) -> Result<Vec<(f64, Vec<C>)>>
where
    A: Fn(f64) -> Result<PlaneSystem>,
{
    let sys = assemble(sigma)?;
    let lu = BlockTridiagLu::factor(&sys)?;
    let mut raw: Vec<(f64, Vec<C>)> = Vec::with_capacity(nev);
    let mut space: Vec<Vec<C>> = Vec::new();
    for _ in 0..nev {
        let p = lanczos_extreme(n, |v| lu.solve(v), lanczos_steps, 1, MODE_SEED ^ 0x9e37, &space)?
            .remove(0);
        raw.push((sigma + 1.0 / p.value, p.vector.clone()));
        space.push(p.vector);
    }
    let mut out = Vec::with_capacity(raw.len());
    for (mut lam, mut v) in raw {
        for _ in 0..rqi_rounds {
            let sys_l = assemble(lam)?;
            let lu_l = match BlockTridiagLu::factor(&sys_l) {
                Ok(f) => f,
                // exactly singular shift: the eigenvalue is converged
                Err(Error::SolveFailed(_)) => break,
                Err(e) => return Err(e),
            };
            let y = lu_l.solve(&v);
            let yn = nrm2(&y);
            lam += dotc(&y, &v).re / (yn * yn);
            v = y.iter().map(|z| z / yn).collect();
        }
        out.push((lam, v));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{reference_spec, Spin};
    use crate::grid::VoxelGrid3;

    // first Bessel zeros, for disk-section thresholds in closure tests
    const J01: f64 = 2.404825557695773;
    const J11: f64 = 3.8317059702075125;

    #[test]
    fn magnetic_assembly_is_hermitian() {
        let spec = reference_spec(0.4, Some(1.0));
        let grid = VoxelGrid3::build(
            [-0.3, -1.0, -1.0],
            [2.3, 1.0, 1.0],
            0.21,
            [false; 2],
            |x, y, z| spec.in_full(x, y, z),
        )
        .unwrap();
        let sol = spec.solenoid.clone().unwrap();
        let pot = move |x: f64, y: f64, _z: f64| sol.modified_potential(x, y).unwrap();
        let sol2 = spec.solenoid.clone().unwrap();
        let zee = move |x: f64, y: f64, _z: f64| sol2.field(x, y);
        let mag = MagneticField { potential: &pot, zeeman: &zee, sign: Spin::Plus.sign() };
        let asm = assemble3(&grid, C::new(2.0, 0.0), Some(&mag), &[], [true; 3]).unwrap();
        let n = asm.sys.n_total();
        // densify column by column and compare against the conjugate transpose
        let mut cols: Vec<Vec<C>> = Vec::with_capacity(n);
        let mut e = vec![C::new(0.0, 0.0); n];
        let mut y = vec![C::new(0.0, 0.0); n];
        for q in 0..n {
            e[q] = C::new(1.0, 0.0);
            asm.sys.apply(&e, &mut y);
            cols.push(y.clone());
            e[q] = C::new(0.0, 0.0);
        }
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let diff = (cols[a][b] - cols[b][a].conj()).norm();
                worst = worst.max(diff);
            }
        }
        assert!(worst < 1e-12, "Hermiticity defect {worst:e}");
    }

    #[test]
    fn empty_pipe_is_transparent_and_nearly_unitary() {
        let rad = 0.6f64;
        let l1 = J01 / rad;
        let l2 = J11 / rad;
        let k_sq = l1 * l1 + 0.45 * (l2 * l2 - l1 * l1);
        let thresholds = vec![l1 * l1, l2 * l2, l2 * l2];
        let run = |h: f64| -> (f64, f64, f64) {
            let grid = VoxelGrid3::build(
                [0.0, -rad, -rad],
                [0.96, rad, rad],
                h,
                [true, true],
                |_x, y, z| y * y + z * z < rad * rad,
            )
            .unwrap();
            let mk = |inc| FaceClosure {
                low_face: inc,
                n_modes: 3,
                thresholds: thresholds.clone(),
                incident: if inc { Some(0) } else { None },
            };
            let asm = assemble3(&grid, C::new(k_sq, 0.0), None, &[mk(true), mk(false)], [true; 3])
                .unwrap();
            let lu = BlockTridiagLu::factor(&asm.sys).unwrap();
            let u = lu.solve(&asm.rhs);
            let (s11, s12) = asm.scattering_pair(0, 1, &u);
            (
                (1.0 - s11.norm_sqr() - s12.norm_sqr()).abs(),
                s12.norm(),
                s11.norm(),
            )
        };
        let (d1, t1, r1) = run(0.12);
        let (d2, t2, r2) = run(0.06);
        assert!(t1 > 0.98 && t2 > 0.99, "pipe not transparent: {t1} {t2}");
        // a uniform pipe decouples into modes; flux balance is then exact
        assert!(d1 < 1e-10 && d2 < 1e-10, "defect not at identity level: {d1} {d2}");
        // spurious reflection from the dispersion mismatch of the closure
        // is O(h^2)
        assert!(r1 < 0.02, "spurious reflection too large: {r1}");
        assert!(r2 < r1 / 2.5, "reflection does not refine: {r1} -> {r2}");
    }

    #[test]
    fn axi_empty_pipe_matches_and_refines() {
        let l1 = J01 * J01;
        let l2 = (J01 + std::f64::consts::PI).powi(2); // j02 approx; only mode 1 matters
        let k_sq = l1 + 0.4 * (14.68 - l1);
        let run = |h: f64| -> (f64, f64, f64) {
            let grid = AxiGrid::build(0.0, 1.5, 1.2, h, [true, true], |_x, s| s < 1.0).unwrap();
            let mk = |inc| FaceClosure {
                low_face: inc,
                n_modes: 2,
                thresholds: vec![l1, l2],
                incident: if inc { Some(0) } else { None },
            };
            let asm = assemble_axi(&grid, C::new(k_sq, 0.0), &[mk(true), mk(false)], None).unwrap();
            let lu = BlockTridiagLu::factor(&asm.sys).unwrap();
            let u = lu.solve(&asm.rhs);
            let (s11, s12) = asm.scattering_pair(0, 1, &u);
            (
                (1.0 - s11.norm_sqr() - s12.norm_sqr()).abs(),
                s12.norm(),
                s11.norm(),
            )
        };
        let (d1, t1, r1) = run(0.02);
        let (d2, t2, r2) = run(0.01);
        assert!(t1 > 0.999 && t2 > 0.999, "axi pipe not transparent: {t1} {t2}");
        assert!(d1 < 1e-10 && d2 < 1e-10, "axi defect not at identity level: {d1} {d2}");
        assert!(r2 < r1 / 2.5 + 1e-14, "axi reflection does not refine: {r1} -> {r2}");
    }

    #[test]
    fn axi_radial_ground_state_matches_disk_mode() {
        // pure radial eigenproblem on the unit disk via the face-column path:
        // assemble a short pipe and diagonalize its closure column
        let h = 0.005;
        let grid = AxiGrid::build(0.0, 0.1, 1.2, h, [true, true], |_x, s| s < 1.0).unwrap();
        let asm = assemble_axi(
            &grid,
            C::new(0.0, 0.0),
            &[FaceClosure {
                low_face: true,
                n_modes: 2,
                thresholds: vec![J01 * J01, 30.0],
                incident: None,
            }],
            None,
        )
        .unwrap();
        // reconstruct the radial eigenvalue from the mode by Rayleigh quotient
        // of the transverse operator: apply the assembled operator at k^2 = 0
        // to an x-independent extension of the mode and read the eigenvalue
        let f = &asm.faces[0];
        let n = f.range.1 - f.range.0;
        assert_eq!(n, 200, "column should hold the nodes below the disk wall");
        // direct check instead: tridiagonal eigenvalue vs j01^2
        let mut dvec = vec![0.0; n];
        let mut evec = vec![0.0; n - 1];
        for r in 0..n {
            let s = (r as f64 + 0.5) * h;
            let mut dd = 0.0;
            for d in 2..4usize {
                let fw = if d == 2 { s - 0.5 * h } else { s + 0.5 * h };
                let q = f.range.0 + r;
                match grid.neighbors[q][d] {
                    nb if nb >= 0 => {
                        let (_, s_nb) = grid.node_pos(nb as usize);
                        dd += fw / (s * h * h);
                        if d == 3 {
                            evec[r] = -fw / (h * h * (s * s_nb).sqrt());
                        }
                    }
                    crate::grid::WALL => {
                        if d == 2 && r == 0 {
                            continue;
                        }
                        dd += fw / (s * grid.cuts[q][d] * h * h);
                    }
                    _ => unreachable!(),
                }
            }
            dvec[r] = dd;
        }
        let (vals, _) = tridiag_eigen(&dvec, &evec).unwrap();
        let rel = (vals[0] - J01 * J01).abs() / (J01 * J01);
        assert!(rel < 2e-4, "radial ground eigenvalue off: rel {rel:e}");
    }

    #[test]
    fn closure_rejects_face_inside_narrow() {
        let spec = reference_spec(0.5, None);
        // left face lands inside the conical narrowing
        let grid = VoxelGrid3::build(
            [-0.2, -1.0, -1.0],
            [1.0, 1.0, 1.0],
            0.15,
            [true, false],
            |x, y, z| spec.in_full(x, y, z),
        )
        .unwrap();
        let c = FaceClosure {
            low_face: true,
            n_modes: 2,
            thresholds: vec![J01 * J01, J11 * J11],
            incident: Some(0),
        };
        let err = assemble3(&grid, C::new(9.0, 0.0), None, &[c], [true; 3]);
        assert!(err.is_err());
    }

    #[test]
    fn eigs_near_locates_pipe_modes() {
        // closed cylinder radius 1, length 1: k^2 = j01^2 + (pi m / L)^2
        let grid = VoxelGrid3::build(
            [0.0, -1.0, -1.0],
            [1.0, 1.0, 1.0],
            0.075,
            [false; 2],
            |x, y, z| x > 0.0 && x < 1.0 && y * y + z * z < 1.0,
        )
        .unwrap();
        let n = grid.n_unknowns();
        let assemble = |sigma: f64| {
            assemble3(&grid, C::new(sigma, 0.0), None, &[], [true; 3]).map(|a| a.sys)
        };
        let pi = std::f64::consts::PI;
        let want1 = J01 * J01 + pi * pi;
        let got = eigs_near(n, assemble, want1 * 0.95, 2, 40, 1).unwrap();
        let rel = (got[0].0 - want1).abs() / want1;
        // discretization error at h = 0.075 is a few percent; the point is
        // that shift-invert plus refinement lands on the right branch
        assert!(rel < 0.02, "lowest pipe mode {} vs {} (rel {rel:e})", got[0].0, want1);
    }
}
