//! Cartesian voxel grids over implicit domains.
//!
//! Nodes live on the absolute lattice `m * h` (3D) so that grids at `h` and
//! `h/2` nest and grids of different subdomains share node positions. Each
//! interior node stores, per coordinate direction, either its interior
//! neighbor or the fractional distance to the domain boundary along the grid
//! line (found by bisecting the membership predicate). The fractions feed a
//! symmetric second-order Dirichlet stencil; with them, accuracy survives the
//! stair-step representation and Richardson extrapolation in `h` is reliable.
//!
//! A box face may be declared *open*: neighbors beyond it that still satisfy
//! the membership predicate become ghost links, to be closed by a radiation
//! condition instead of a wall.

use num_complex::Complex64;

use crate::{Error, Result};

/// Neighbor sentinel: domain boundary along this direction (use the cut).
pub const WALL: i32 = -1;
/// Neighbor sentinel: open box face; the solver must supply a closure.
pub const GHOST: i32 = -2;

const BISECT_STEPS: usize = 48;
const MIN_CUT: f64 = 1e-6;

fn bisect<F: Fn(f64) -> bool>(f: F) -> f64 {
    // f(0) = true, f(1) = false; returns the crossing fraction in (0, 1]
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..BISECT_STEPS {
        let m = 0.5 * (a + b);
        if f(m) {
            a = m;
        } else {
            b = m;
        }
    }
    (0.5 * (a + b)).max(MIN_CUT)
}

fn lattice_range(lo: f64, hi: f64, h: f64) -> (i64, usize) {
    let m_lo = (lo / h + 1e-9).floor() as i64 + 1;
    let m_hi = (hi / h - 1e-9).ceil() as i64 - 1;
    (m_lo, (m_hi - m_lo + 1).max(0) as usize)
}

/// 3D voxel grid ordered by `x`-planes (then `y`, then `z`).
#[derive(Debug, Clone)]
pub struct VoxelGrid3 {
    pub h: f64,
    /// Position of node `(0, 0, 0)`.
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    /// Interior mask over the full lattice box.
    pub interior: Vec<bool>,
    /// Exterior nodes touching an interior node (6-connectivity).
    pub boundary: Vec<bool>,
    /// Lattice node -> unknown id, or negative if exterior.
    pub index: Vec<i32>,
    /// Unknown id -> lattice coordinates.
    pub nodes: Vec<[u32; 3]>,
    /// Per `ix`: contiguous unknown-id range of that plane.
    pub plane_range: Vec<(usize, usize)>,
    /// Per unknown and direction `[-x, +x, -y, +y, -z, +z]`.
    pub neighbors: Vec<[i32; 6]>,
    /// Boundary-cut fraction in `(0, 1]` where the neighbor is [`WALL`].
    pub cuts: Vec<[f64; 6]>,
}

impl VoxelGrid3 {
    /// Build over the box `lo..hi`, with the two `x` faces optionally open.
    pub fn build<F>(lo: [f64; 3], hi: [f64; 3], h: f64, open_x: [bool; 2], inside: F) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> bool,
    {
        if !(h > 0.0) {
            return Err(Error::invalid("grid step must be positive"));
        }
        let (mx, nx) = lattice_range(lo[0], hi[0], h);
        let (my, ny) = lattice_range(lo[1], hi[1], h);
        let (mz, nz) = lattice_range(lo[2], hi[2], h);
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid("empty grid box"));
        }
        let origin = [mx as f64 * h, my as f64 * h, mz as f64 * h];
        let dims = [nx, ny, nz];
        let lin = |ix: usize, iy: usize, iz: usize| (ix * ny + iy) * nz + iz;
        let pos = |ix: usize, iy: usize, iz: usize| {
            [
                origin[0] + ix as f64 * h,
                origin[1] + iy as f64 * h,
                origin[2] + iz as f64 * h,
            ]
        };

        let mut interior = vec![false; nx * ny * nz];
        let mut index = vec![WALL; nx * ny * nz];
        let mut nodes = Vec::new();
        let mut plane_range = Vec::with_capacity(nx);
        for ix in 0..nx {
            let start = nodes.len();
            for iy in 0..ny {
                for iz in 0..nz {
                    let p = pos(ix, iy, iz);
                    if inside(p[0], p[1], p[2]) {
                        interior[lin(ix, iy, iz)] = true;
                        index[lin(ix, iy, iz)] = nodes.len() as i32;
                        nodes.push([ix as u32, iy as u32, iz as u32]);
                    }
                }
            }
            plane_range.push((start, nodes.len()));
        }
        if nodes.is_empty() {
            return Err(Error::invalid("no interior nodes; box misses the domain"));
        }

        const DIRS: [[i64; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        let mut neighbors = vec![[WALL; 6]; nodes.len()];
        let mut cuts = vec![[1.0f64; 6]; nodes.len()];
        let mut boundary = vec![false; nx * ny * nz];
        for (q, n) in nodes.iter().enumerate() {
            let (ix, iy, iz) = (n[0] as i64, n[1] as i64, n[2] as i64);
            let p = pos(ix as usize, iy as usize, iz as usize);
            for (d, dir) in DIRS.iter().enumerate() {
                let (jx, jy, jz) = (ix + dir[0], iy + dir[1], iz + dir[2]);
                let in_box = jx >= 0
                    && jx < nx as i64
                    && jy >= 0
                    && jy < ny as i64
                    && jz >= 0
                    && jz < nz as i64;
                if in_box {
                    let l = lin(jx as usize, jy as usize, jz as usize);
                    if interior[l] {
                        neighbors[q][d] = index[l];
                        continue;
                    }
                    boundary[l] = true;
                } else if (d == 0 && open_x[0]) || (d == 1 && open_x[1]) {
                    let np = [
                        p[0] + dir[0] as f64 * h,
                        p[1] + dir[1] as f64 * h,
                        p[2] + dir[2] as f64 * h,
                    ];
                    if inside(np[0], np[1], np[2]) {
                        neighbors[q][d] = GHOST;
                        continue;
                    }
                }
                cuts[q][d] = bisect(|t| {
                    inside(
                        p[0] + dir[0] as f64 * t * h,
                        p[1] + dir[1] as f64 * t * h,
                        p[2] + dir[2] as f64 * t * h,
                    )
                });
            }
        }

        Ok(VoxelGrid3 {
            h,
            origin,
            dims,
            interior,
            boundary,
            index,
            nodes,
            plane_range,
            neighbors,
            cuts,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_pos(&self, q: usize) -> [f64; 3] {
        let n = self.nodes[q];
        [
            self.origin[0] + n[0] as f64 * self.h,
            self.origin[1] + n[1] as f64 * self.h,
            self.origin[2] + n[2] as f64 * self.h,
        ]
    }

    /// Plain voxel volume (interior node count times cell volume).
    pub fn volume(&self) -> f64 {
        self.nodes.len() as f64 * self.h * self.h * self.h
    }

    /// Trilinear interpolation of an unknown-indexed field; exterior nodes
    /// contribute zero (Dirichlet).
    pub fn interp(&self, field: &[Complex64], p: [f64; 3]) -> Complex64 {
        let [nx, ny, nz] = self.dims;
        let g = |c: f64, o: f64| (c - o) / self.h;
        let (fx, fy, fz) = (g(p[0], self.origin[0]), g(p[1], self.origin[1]), g(p[2], self.origin[2]));
        let (ix, iy, iz) = (fx.floor(), fy.floor(), fz.floor());
        let (tx, ty, tz) = (fx - ix, fy - iy, fz - iz);
        let mut acc = Complex64::new(0.0, 0.0);
        for (dx, wx) in [(0i64, 1.0 - tx), (1, tx)] {
            for (dy, wy) in [(0i64, 1.0 - ty), (1, ty)] {
                for (dz, wz) in [(0i64, 1.0 - tz), (1, tz)] {
                    let (jx, jy, jz) = (ix as i64 + dx, iy as i64 + dy, iz as i64 + dz);
                    if jx < 0 || jy < 0 || jz < 0 {
                        continue;
                    }
                    let (jx, jy, jz) = (jx as usize, jy as usize, jz as usize);
                    if jx >= nx || jy >= ny || jz >= nz {
                        continue;
                    }
                    let id = self.index[(jx * ny + jy) * nz + jz];
                    if id >= 0 {
                        acc += field[id as usize] * (wx * wy * wz);
                    }
                }
            }
        }
        acc
    }

    pub fn write_mask<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_header(w, 0, self.dims, self.h, self.origin)?;
        let mut buf = Vec::with_capacity(self.interior.len());
        buf.extend(self.interior.iter().map(|b| *b as u8));
        w.write_all(&buf)
    }

    pub fn write_field<W: std::io::Write>(
        &self,
        w: &mut W,
        field: &[Complex64],
    ) -> std::io::Result<()> {
        write_header(w, 2, self.dims, self.h, self.origin)?;
        for (l, _) in self.interior.iter().enumerate() {
            let v = if self.index[l] >= 0 {
                field[self.index[l] as usize]
            } else {
                Complex64::new(0.0, 0.0)
            };
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Axisymmetric `(x, s)` grid: `x` on the absolute lattice, `s` staggered at
/// half-steps so the axis `s = 0` carries no node (its flux face has zero
/// area, which closes the radial operator without a boundary condition).
#[derive(Debug, Clone)]
pub struct AxiGrid {
    pub h: f64,
    /// Position of node column `ix = 0`.
    pub x0: f64,
    pub nx: usize,
    pub ns: usize,
    pub interior: Vec<bool>,
    pub index: Vec<i32>,
    pub nodes: Vec<[u32; 2]>,
    pub col_range: Vec<(usize, usize)>,
    /// Per unknown and direction `[-x, +x, -s, +s]`.
    pub neighbors: Vec<[i32; 4]>,
    pub cuts: Vec<[f64; 4]>,
}

impl AxiGrid {
    pub fn build<F>(xlo: f64, xhi: f64, smax: f64, h: f64, open_x: [bool; 2], inside: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> bool,
    {
        if !(h > 0.0) {
            return Err(Error::invalid("grid step must be positive"));
        }
        let (mx, nx) = lattice_range(xlo, xhi, h);
        let ns = (smax / h - 0.5).floor() as i64 + 1;
        if nx == 0 || ns <= 0 {
            return Err(Error::invalid("empty grid box"));
        }
        let ns = ns as usize;
        let x0 = mx as f64 * h;
        let xs = |ix: usize| x0 + ix as f64 * h;
        let sv = |is: usize| (is as f64 + 0.5) * h;
        let lin = |ix: usize, is: usize| ix * ns + is;

        let mut interior = vec![false; nx * ns];
        let mut index = vec![WALL; nx * ns];
        let mut nodes = Vec::new();
        let mut col_range = Vec::with_capacity(nx);
        for ix in 0..nx {
            let start = nodes.len();
            for is in 0..ns {
                if inside(xs(ix), sv(is)) {
                    interior[lin(ix, is)] = true;
                    index[lin(ix, is)] = nodes.len() as i32;
                    nodes.push([ix as u32, is as u32]);
                }
            }
            col_range.push((start, nodes.len()));
        }
        if nodes.is_empty() {
            return Err(Error::invalid("no interior nodes; box misses the domain"));
        }

        const DIRS: [[i64; 2]; 4] = [[-1, 0], [1, 0], [0, -1], [0, 1]];
        let mut neighbors = vec![[WALL; 4]; nodes.len()];
        let mut cuts = vec![[1.0f64; 4]; nodes.len()];
        for (q, n) in nodes.iter().enumerate() {
            let (ix, is) = (n[0] as i64, n[1] as i64);
            let (x, s) = (xs(ix as usize), sv(is as usize));
            for (d, dir) in DIRS.iter().enumerate() {
                let (jx, js) = (ix + dir[0], is + dir[1]);
                if js < 0 {
                    continue; // axis face: zero area, no coupling
                }
                let in_box = jx >= 0 && jx < nx as i64 && js < ns as i64;
                if in_box {
                    let l = lin(jx as usize, js as usize);
                    if interior[l] {
                        neighbors[q][d] = index[l];
                        continue;
                    }
                } else if (d == 0 && open_x[0]) || (d == 1 && open_x[1]) {
                    let (nxp, nsp) = (x + dir[0] as f64 * h, s + dir[1] as f64 * h);
                    if inside(nxp, nsp) {
                        neighbors[q][d] = GHOST;
                        continue;
                    }
                }
                cuts[q][d] = bisect(|t| inside(x + dir[0] as f64 * t * h, s + dir[1] as f64 * t * h));
            }
        }

        Ok(AxiGrid {
            h,
            x0,
            nx,
            ns,
            interior,
            index,
            nodes,
            col_range,
            neighbors,
            cuts,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_pos(&self, q: usize) -> (f64, f64) {
        let n = self.nodes[q];
        (self.x0 + n[0] as f64 * self.h, (n[1] as f64 + 0.5) * self.h)
    }

    /// Radial weight `s` of an unknown: the measure factor of the
    /// axisymmetric inner product `2 pi integral u v s ds dx`.
    pub fn weight(&self, q: usize) -> f64 {
        (self.nodes[q][1] as f64 + 0.5) * self.h
    }

    /// Represented 3D volume, `sum 2 pi s_j h^2`.
    pub fn volume(&self) -> f64 {
        let s: f64 = (0..self.n_unknowns()).map(|q| self.weight(q)).sum();
        2.0 * std::f64::consts::PI * s * self.h * self.h
    }

    /// Bilinear interpolation with even reflection across the axis;
    /// exterior nodes contribute zero.
    pub fn interp(&self, field: &[Complex64], x: f64, s: f64) -> Complex64 {
        let fx = (x - self.x0) / self.h;
        let fs = s.abs() / self.h - 0.5;
        let (ix, is) = (fx.floor(), fs.floor());
        let (tx, ts) = (fx - ix, fs - is);
        let mut acc = Complex64::new(0.0, 0.0);
        for (dx, wx) in [(0i64, 1.0 - tx), (1, tx)] {
            for (ds, ws) in [(0i64, 1.0 - ts), (1, ts)] {
                let jx = ix as i64 + dx;
                let js = (is as i64 + ds).abs(); // even reflection at s=0
                if jx < 0 || jx >= self.nx as i64 || js >= self.ns as i64 {
                    continue;
                }
                let id = self.index[jx as usize * self.ns + js as usize];
                if id >= 0 {
                    acc += field[id as usize] * (wx * ws);
                }
            }
        }
        acc
    }
}

fn write_header<W: std::io::Write>(
    w: &mut W,
    dtype: u32,
    dims: [usize; 3],
    h: f64,
    origin: [f64; 3],
) -> std::io::Result<()> {
    w.write_all(b"TNRSGRD\0")?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&dtype.to_le_bytes())?;
    for d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&h.to_le_bytes())?;
    for o in origin {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&0u32.to_le_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::reference_spec;

    #[test]
    fn lattice_alignment_and_nesting() {
        let f = |x: f64, y: f64, z: f64| x * x + y * y + z * z < 1.0;
        let g1 = VoxelGrid3::build([-1.0; 3], [1.0; 3], 0.25, [false; 2], f).unwrap();
        let g2 = VoxelGrid3::build([-1.0; 3], [1.0; 3], 0.125, [false; 2], f).unwrap();
        // every coarse node position appears on the fine lattice
        let p = g1.node_pos(0);
        let fine = [
            (p[0] - g2.origin[0]) / g2.h,
            (p[1] - g2.origin[1]) / g2.h,
            (p[2] - g2.origin[2]) / g2.h,
        ];
        for c in fine {
            assert!((c - c.round()).abs() < 1e-9, "coarse node off fine lattice");
        }
    }

    #[test]
    fn cuts_are_unit_for_interior_pairs_and_fractional_at_walls() {
        let f = |x: f64, y: f64, z: f64| x * x + y * y + z * z < 1.0;
        let g = VoxelGrid3::build([-1.0; 3], [1.0; 3], 0.2, [false; 2], f).unwrap();
        let mut saw_wall = false;
        for q in 0..g.n_unknowns() {
            for d in 0..6 {
                match g.neighbors[q][d] {
                    n if n >= 0 => assert_eq!(g.cuts[q][d], 1.0),
                    WALL => {
                        let c = g.cuts[q][d];
                        assert!(c > 0.0 && c <= 1.0);
                        saw_wall = true;
                        // the cut point must sit on the sphere
                        let p = g.node_pos(q);
                        let dir: [f64; 3] = match d {
                            0 => [-1.0, 0.0, 0.0],
                            1 => [1.0, 0.0, 0.0],
                            2 => [0.0, -1.0, 0.0],
                            3 => [0.0, 1.0, 0.0],
                            4 => [0.0, 0.0, -1.0],
                            _ => [0.0, 0.0, 1.0],
                        };
                        let b = [
                            p[0] + dir[0] * c * g.h,
                            p[1] + dir[1] * c * g.h,
                            p[2] + dir[2] * c * g.h,
                        ];
                        let r = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                        assert!((r - 1.0).abs() < 1e-9, "cut point off the boundary: r={r}");
                    }
                    other => panic!("unexpected sentinel {other}"),
                }
            }
        }
        assert!(saw_wall);
    }

    #[test]
    fn ghost_links_only_on_open_faces() {
        let f = |_x: f64, y: f64, z: f64| y * y + z * z < 1.0; // infinite cylinder
        let g = VoxelGrid3::build([-0.5, -1.0, -1.0], [0.5, 1.0, 1.0], 0.2, [true, false], f).unwrap();
        let mut ghosts = [0usize; 6];
        for q in 0..g.n_unknowns() {
            for d in 0..6 {
                if g.neighbors[q][d] == GHOST {
                    ghosts[d] += 1;
                }
            }
        }
        assert!(ghosts[0] > 0, "open -x face must produce ghost links");
        assert_eq!(ghosts[1], 0, "+x face is closed");
        assert_eq!(ghosts[2] + ghosts[3] + ghosts[4] + ghosts[5], 0);
    }

    #[test]
    fn chamber_volume_extrapolates_to_closed_form() {
        // chamber between the tips: cylinder of length d minus two conical
        // bites => V = pi (d - 2 cot) + (2 pi / 3) cot, cot = 1/tan(theta)
        let spec = reference_spec(0.0, None);
        let cot = 1.0 / spec.narrows[0].tan_theta();
        let d = spec.tip_distance();
        let exact = std::f64::consts::PI * (d - 2.0 * cot)
            + 2.0 * std::f64::consts::PI / 3.0 * cot;
        let vol = |h: f64| {
            VoxelGrid3::build(
                [-0.1, -1.0, -1.0],
                [d + 0.1, 1.0, 1.0],
                h,
                [false; 2],
                |x, y, z| spec.in_resonator(x, y, z),
            )
            .unwrap()
            .volume()
        };
        let (v1, v2, v3) = (vol(0.08), vol(0.04), vol(0.02));
        // second-order Richardson on the finer pair
        let extr = v3 + (v3 - v2) / 3.0;
        let rel = (extr - exact).abs() / exact;
        assert!(
            rel < 2e-3,
            "volume ladder {v1:.5} {v2:.5} {v3:.5} -> {extr:.5} vs {exact:.5} (rel {rel:.2e})"
        );
    }

    #[test]
    fn axi_grid_volume_and_weights() {
        // cylinder x in (0,2), s < 0.7: volume pi r^2 L
        let g = AxiGrid::build(-0.1, 2.1, 1.0, 0.02, [false; 2], |x, s| {
            x > 0.0 && x < 2.0 && s < 0.7
        })
        .unwrap();
        let exact = std::f64::consts::PI * 0.49 * 2.0;
        assert!((g.volume() - exact).abs() / exact < 2e-2);
        // axis direction never couples below s=0
        for q in 0..g.n_unknowns() {
            if g.nodes[q][1] == 0 {
                assert_eq!(g.neighbors[q][2], WALL);
            }
        }
    }

    #[test]
    fn interp_reproduces_linear_fields() {
        let f = |x: f64, y: f64, z: f64| x.abs() < 1.0 && y.abs() < 1.0 && z.abs() < 1.0;
        let g = VoxelGrid3::build([-1.0; 3], [1.0; 3], 0.25, [false; 2], f).unwrap();
        let field: Vec<Complex64> = (0..g.n_unknowns())
            .map(|q| {
                let p = g.node_pos(q);
                Complex64::new(2.0 * p[0] - p[1] + 0.5 * p[2], 0.0)
            })
            .collect();
        // deep interior probe, away from Dirichlet-zero exterior corners
        let p = [0.11, -0.07, 0.23];
        let v = g.interp(&field, p);
        let expect = 2.0 * p[0] - p[1] + 0.5 * p[2];
        assert!((v.re - expect).abs() < 1e-12);
    }

    #[test]
    fn export_header_is_64_bytes() {
        let f = |x: f64, y: f64, z: f64| x.abs() < 0.4 && y.abs() < 0.4 && z.abs() < 0.4;
        let g = VoxelGrid3::build([-0.5; 3], [0.5; 3], 0.2, [false; 2], f).unwrap();
        let mut buf = Vec::new();
        g.write_mask(&mut buf).unwrap();
        assert_eq!(buf.len(), 64 + g.interior.len());
        assert_eq!(&buf[0..8], b"TNRSGRD\0");
        let mut field = vec![Complex64::new(1.0, -2.0); g.n_unknowns()];
        field[0] = Complex64::new(3.5, 0.25);
        let mut fbuf = Vec::new();
        g.write_field(&mut fbuf, &field).unwrap();
        assert_eq!(fbuf.len(), 64 + 16 * g.interior.len());
    }
}
