//! Exact linear algebra for plane-ordered grid operators.
//!
//! Field solves use a block-tridiagonal LU over x-planes: dense Schur
//! complements per plane, sparse inter-plane couplings. This is direct and
//! deterministic, so it stays well behaved arbitrarily close to a resonance
//! pole where iterative methods stall. Eigenpairs come from shift-invert
//! Lanczos with full reorthogonalization on top of the same factorization.
//! The one iterative method kept is preconditioned CG, for the real
//! symmetric positive definite neck problem whose wings are too large to
//! factor densely.

use num_complex::Complex64;

use crate::{Error, Result};

pub type C = Complex64;

/// Factorization memory cap. Exceeding it is a setup error, not an OOM.
const FACTOR_BUDGET_BYTES: usize = 3_500_000_000;

// ---------------------------------------------------------------------------
// deterministic seeding

/// SplitMix64 stream; used wherever a reproducible start vector is needed.
#[derive(Clone)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

/// Real-valued random unit vector. Real entries keep conjugation symmetries
/// of the operators exact in floating point.
pub fn seeded_unit_vector(n: usize, seed: u64) -> Vec<C> {
    let mut rng = SplitMix64(seed);
    let mut v: Vec<C> = (0..n).map(|_| C::new(rng.next_f64(), 0.0)).collect();
    let nrm = nrm2(&v);
    for x in &mut v {
        *x /= nrm;
    }
    v
}

// ---------------------------------------------------------------------------
// small vector helpers

pub fn dotc(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn nrm2(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(alpha: C, x: &[C], y: &mut [C]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// ---------------------------------------------------------------------------
// dense complex LU with partial pivoting

pub struct DenseLu {
    n: usize,
    a: Vec<C>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Factor a row-major n x n matrix in place.
    pub fn factor(mut a: Vec<C>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].norm_sqr();
            for i in k + 1..n {
                let m = a[i * n + k].norm_sqr();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::SolveFailed(format!("singular pivot at column {k}")));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                a[i * n + k] = l;
                if l != C::new(0.0, 0.0) {
                    let (head, tail) = a.split_at_mut(i * n);
                    let row_k = &head[k * n + k + 1..k * n + n];
                    let row_i = &mut tail[k + 1..n];
                    for (ri, rk) in row_i.iter_mut().zip(row_k) {
                        *ri -= l * rk;
                    }
                }
            }
        }
        Ok(DenseLu { n, a, piv })
    }

    pub fn solve_in_place(&self, b: &mut [C]) {
        self.solve_multi(b, 1)
    }

    /// Solve for `m` right-hand sides stored row-major as an n x m matrix.
    pub fn solve_multi(&self, b: &mut [C], m: usize) {
        let n = self.n;
        assert_eq!(b.len(), n * m);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                for j in 0..m {
                    b.swap(k * m + j, p * m + j);
                }
            }
        }
        for k in 0..n {
            for i in k + 1..n {
                let l = self.a[i * n + k];
                if l != C::new(0.0, 0.0) {
                    let (head, tail) = b.split_at_mut(i * m);
                    let row_k = &head[k * m..k * m + m];
                    for (ri, rk) in tail[..m].iter_mut().zip(row_k) {
                        *ri -= l * rk;
                    }
                }
            }
        }
        for k in (0..n).rev() {
            let d = self.a[k * n + k];
            for j in 0..m {
                b[k * m + j] /= d;
            }
            for i in 0..k {
                let u = self.a[i * n + k];
                if u != C::new(0.0, 0.0) {
                    let (head, tail) = b.split_at_mut(k * m);
                    let row_k = &tail[..m];
                    for (ri, rk) in head[i * m..i * m + m].iter_mut().zip(row_k) {
                        *ri -= u * rk;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// block-tridiagonal LU over planes

/// Sparse inter-plane coupling entries `(row, col, value)`; `row` indexes the
/// target plane, `col` the source plane.
pub type Coupling = Vec<(usize, usize, C)>;

/// One plane of the operator: its dense diagonal block plus the couplings to
/// the next plane (`down` maps plane j into plane j+1 rows, `up` maps plane
/// j+1 into plane j rows).
pub struct PlaneSystem {
    pub sizes: Vec<usize>,
    pub diag: Vec<Vec<C>>,
    pub down: Vec<Coupling>,
    pub up: Vec<Coupling>,
}

impl PlaneSystem {
    pub fn n_total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Apply the assembled operator to a full-length vector (for residuals
    /// and Lanczos on the unshifted matrix).
    pub fn apply(&self, x: &[C], y: &mut [C]) {
        let offsets = self.offsets();
        y.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
        for j in 0..self.sizes.len() {
            let n = self.sizes[j];
            let a = &self.diag[j];
            let xo = &x[offsets[j]..offsets[j] + n];
            let yo = &mut y[offsets[j]..offsets[j] + n];
            for r in 0..n {
                let mut acc = C::new(0.0, 0.0);
                for c in 0..n {
                    acc += a[r * n + c] * xo[c];
                }
                yo[r] = acc;
            }
        }
        for j in 0..self.sizes.len().saturating_sub(1) {
            let (oj, oj1) = (offsets[j], offsets[j + 1]);
            for &(r, c, v) in &self.down[j] {
                y[oj1 + r] += v * x[oj + c];
            }
            for &(r, c, v) in &self.up[j] {
                y[oj + r] += v * x[oj1 + c];
            }
        }
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.sizes.len() + 1);
        let mut acc = 0;
        for &s in &self.sizes {
            o.push(acc);
            acc += s;
        }
        o.push(acc);
        o
    }
}

pub struct BlockTridiagLu {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    schur: Vec<DenseLu>,
    down: Vec<Coupling>,
    up: Vec<Coupling>,
}

impl BlockTridiagLu {
    pub fn factor(sys: &PlaneSystem) -> Result<Self> {
        let p = sys.sizes.len();
        assert_eq!(sys.diag.len(), p);
        assert!(sys.down.len() + 1 >= p && sys.up.len() + 1 >= p);
        let bytes: usize = sys.sizes.iter().map(|&n| n * n * 16).sum();
        if bytes > FACTOR_BUDGET_BYTES {
            return Err(Error::MemoryBudget {
                needed_mb: bytes / (1 << 20),
                budget_mb: FACTOR_BUDGET_BYTES / (1 << 20),
            });
        }
        let mut schur: Vec<DenseLu> = Vec::with_capacity(p);
        for j in 0..p {
            let n = sys.sizes[j];
            let mut s = sys.diag[j].clone();
            if j > 0 {
                let np = sys.sizes[j - 1];
                // T = S_{j-1}^{-1} * up_{j-1}, assembled dense np x n
                let mut t = vec![C::new(0.0, 0.0); np * n];
                for &(r, c, v) in &sys.up[j - 1] {
                    t[r * n + c] = v;
                }
                schur[j - 1].solve_multi(&mut t, n);
                for &(r, c, v) in &sys.down[j - 1] {
                    let row_t = &t[c * n..c * n + n];
                    let row_s = &mut s[r * n..r * n + n];
                    for (si, ti) in row_s.iter_mut().zip(row_t) {
                        *si -= v * ti;
                    }
                }
            }
            schur.push(DenseLu::factor(s, n)?);
        }
        Ok(BlockTridiagLu {
            sizes: sys.sizes.clone(),
            offsets: sys.offsets(),
            schur,
            down: sys.down.clone(),
            up: sys.up.clone(),
        })
    }

    pub fn solve(&self, b: &[C]) -> Vec<C> {
        let p = self.sizes.len();
        let off = &self.offsets;
        // forward sweep: w_j = S_j^{-1} (b_j - down_{j-1} w_{j-1})
        let mut w: Vec<Vec<C>> = Vec::with_capacity(p);
        for j in 0..p {
            let mut z = b[off[j]..off[j + 1]].to_vec();
            if j > 0 {
                for &(r, c, v) in &self.down[j - 1] {
                    let wc = w[j - 1][c];
                    z[r] -= v * wc;
                }
            }
            self.schur[j].solve_in_place(&mut z);
            w.push(z);
        }
        // back sweep: x_j = w_j - S_j^{-1} up_j x_{j+1}
        let mut x = vec![C::new(0.0, 0.0); off[p]];
        x[off[p - 1]..off[p]].copy_from_slice(&w[p - 1]);
        for j in (0..p - 1).rev() {
            let mut z = vec![C::new(0.0, 0.0); self.sizes[j]];
            for &(r, c, v) in &self.up[j] {
                z[r] += v * x[off[j + 1] + c];
            }
            self.schur[j].solve_in_place(&mut z);
            for (i, zi) in z.iter().enumerate() {
                x[off[j] + i] = w[j][i] - zi;
            }
        }
        x
    }
}

// ---------------------------------------------------------------------------
// preconditioned conjugate gradients (real SPD only)

/// Jacobi-preconditioned CG. `apply` must be symmetric positive definite.
pub fn pcg_real<F>(
    apply: F,
    diag: &[f64],
    b: &[f64],
    tol_rel: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if bn == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::SolveFailed("CG lost positive definiteness".into()));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn <= tol_rel * bn {
            return Ok((x, it + 1));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolveFailed(format!(
        "CG stalled after {max_iter} iterations"
    )))
}

// ---------------------------------------------------------------------------
// symmetric tridiagonal eigensolver (implicit QL with shifts)

/// Eigendecomposition of the symmetric tridiagonal with diagonal `d` and
/// subdiagonal `e` (`e.len() == d.len() - 1`). Returns eigenvalues ascending
/// and, row-major, the matrix whose columns are eigenvectors.
pub fn tridiag_eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    assert_eq!(e.len() + 1, n.max(1));
    let mut d = d.to_vec();
    let mut ee = vec![0.0; n];
    ee[..n - 1].copy_from_slice(e);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if ee[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::SolveFailed("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * ee[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + ee[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut i = m - 1;
            loop {
                let f = s * ee[i];
                let b = c * ee[i];
                r = f.hypot(g);
                ee[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    ee[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
                if i == l {
                    d[l] -= p;
                    ee[l] = g;
                    ee[m] = 0.0;
                    break;
                }
                i -= 1;
            }
        }
    }
    // ascending sort, carrying columns
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let dv: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut zv = vec![0.0; n * n];
    for (jnew, &jold) in order.iter().enumerate() {
        for k in 0..n {
            zv[k * n + jnew] = z[k * n + jold];
        }
    }
    Ok((dv, zv))
}

// ---------------------------------------------------------------------------
// Lanczos with full reorthogonalization

pub struct RitzPair {
    pub value: f64,
    pub vector: Vec<C>,
    /// Residual estimate |beta_m * s_last| in the operator's own scale.
    pub residual: f64,
}

/// Hermitian Lanczos on `op`, full reorthogonalization, seeded start.
/// Returns up to `nev` Ritz pairs with the largest |value| (the useful end
/// for a shift-inverted operator). Vectors in `deflate` are projected out of
/// the whole Krylov space; passing already-found eigenvectors makes repeated
/// calls walk through a degenerate cluster one member at a time.
pub fn lanczos_extreme<F>(
    n: usize,
    mut op: F,
    steps: usize,
    nev: usize,
    seed: u64,
    deflate: &[Vec<C>],
) -> Result<Vec<RitzPair>>
where
    F: FnMut(&[C]) -> Vec<C>,
{
    let steps = steps.min(n - deflate.len());
    let mut v0 = seeded_unit_vector(n, seed);
    for _ in 0..2 {
        for d in deflate {
            let c = dotc(d, &v0);
            axpy(-c, d, &mut v0);
        }
    }
    let nr = nrm2(&v0);
    if nr < 1e-8 {
        return Err(Error::SolveFailed("deflation space swallowed the seed".into()));
    }
    for x in &mut v0 {
        *x /= nr;
    }
    let mut basis: Vec<Vec<C>> = vec![v0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = op(&basis[j]);
        if j > 0 {
            let b = C::new(beta[j - 1], 0.0);
            let prev = basis[j - 1].clone();
            for (wi, pi) in w.iter_mut().zip(&prev) {
                *wi -= b * pi;
            }
        }
        let a = dotc(&basis[j], &w);
        alpha.push(a.re);
        axpy(C::new(-a.re, 0.0), &basis[j].clone(), &mut w);
        // two-pass reorthogonalization keeps the basis orthonormal to
        // machine precision, which Ritz residual estimates rely on
        for _ in 0..2 {
            for d in deflate {
                let c = dotc(d, &w);
                if c.norm() > 0.0 {
                    axpy(-c, d, &mut w);
                }
            }
            for v in &basis {
                let c = dotc(v, &w);
                if c.norm() > 0.0 {
                    axpy(-c, v, &mut w);
                }
            }
        }
        let b = nrm2(&w);
        if b < 1e-13 * alpha.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0) {
            break; // invariant subspace found
        }
        if j + 1 < steps {
            beta.push(b);
            for wi in &mut w {
                *wi /= b;
            }
            basis.push(w);
        } else {
            beta.push(b);
        }
    }
    let m = alpha.len();
    let (theta, zmat) = tridiag_eigen(&alpha, &beta[..m.saturating_sub(1)])?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| theta[b].abs().partial_cmp(&theta[a].abs()).unwrap());
    let beta_last = if m <= basis.len() && m >= 1 && beta.len() >= m {
        beta[m - 1]
    } else {
        0.0
    };
    let mut out = Vec::new();
    for &idx in order.iter().take(nev) {
        let mut vec = vec![C::new(0.0, 0.0); n];
        for (i, v) in basis.iter().enumerate().take(m) {
            axpy(C::new(zmat[i * m + idx], 0.0), v, &mut vec);
        }
        let nrm = nrm2(&vec);
        for x in &mut vec {
            *x /= nrm;
        }
        out.push(RitzPair {
            value: theta[idx],
            vector: vec,
            residual: (beta_last * zmat[(m - 1) * m + idx]).abs(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// small dense least squares (modified Gram-Schmidt QR)

/// Minimize |A x - b| for a row-major n x m matrix, n >= m. Returns the
/// coefficients and the residual norm.
pub fn lstsq(a: &[C], n: usize, m: usize, b: &[C]) -> Result<(Vec<C>, f64)> {
    assert_eq!(a.len(), n * m);
    assert_eq!(b.len(), n);
    assert!(n >= m);
    // columns of Q
    let mut q: Vec<Vec<C>> = (0..m)
        .map(|j| (0..n).map(|i| a[i * m + j]).collect())
        .collect();
    let mut r = vec![C::new(0.0, 0.0); m * m];
    for j in 0..m {
        for i in 0..j {
            let qi = q[i].clone();
            let c = dotc(&qi, &q[j]);
            r[i * m + j] = c;
            axpy(-c, &qi, &mut q[j]);
        }
        let nrm = nrm2(&q[j]);
        let col_scale = (0..n).map(|i| a[i * m + j].norm()).fold(0.0, f64::max);
        if nrm <= 1e-12 * col_scale.max(1e-300) {
            return Err(Error::SolveFailed(format!(
                "least squares column {j} is linearly dependent"
            )));
        }
        r[j * m + j] = C::new(nrm, 0.0);
        for x in &mut q[j] {
            *x /= nrm;
        }
    }
    let qtb: Vec<C> = (0..m).map(|j| dotc(&q[j], b)).collect();
    let mut x = qtb.clone();
    for j in (0..m).rev() {
        for k in j + 1..m {
            let xk = x[k];
            x[j] -= r[j * m + k] * xk;
        }
        x[j] /= r[j * m + j];
    }
    let mut res = b.to_vec();
    for i in 0..n {
        for j in 0..m {
            res[i] -= a[i * m + j] * x[j];
        }
    }
    Ok((x, nrm2(&res)))
}

// ---------------------------------------------------------------------------
// convergence helpers

/// Richardson extrapolation for a method of order `p` from values at steps
/// `h` and `h/2`.
pub fn richardson(v_h: f64, v_h2: f64, p: u32) -> f64 {
    v_h2 + (v_h2 - v_h) / ((1u64 << p) as f64 - 1.0)
}

/// Least-squares slope of log|y| against log x; the observed convergence or
/// decay order.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.abs().ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().max(1e-300).ln()).collect();
    let sx: f64 = lx.iter().sum();
    let sy: f64 = ly.iter().sum();
    let sxx: f64 = lx.iter().map(|x| x * x).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(n: usize, seed: u64) -> Vec<C> {
        let mut rng = SplitMix64(seed);
        (0..n * n)
            .map(|_| C::new(rng.next_f64(), rng.next_f64()))
            .collect()
    }

    #[test]
    fn dense_lu_solves_random_system() {
        let n = 40;
        let a = random_matrix(n, 7);
        let mut rng = SplitMix64(99);
        let x_true: Vec<C> = (0..n).map(|_| C::new(rng.next_f64(), rng.next_f64())).collect();
        let mut b = vec![C::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                b[i] += a[i * n + j] * x_true[j];
            }
        }
        let lu = DenseLu::factor(a, n).unwrap();
        lu.solve_in_place(&mut b);
        let err: f64 = b.iter().zip(&x_true).map(|(u, v)| (u - v).norm()).sum();
        assert!(err < 1e-10, "err {err:e}");
    }

    #[test]
    fn dense_lu_rejects_singular() {
        let n = 3;
        let mut a = vec![C::new(0.0, 0.0); 9];
        a[0] = C::new(1.0, 0.0);
        a[4] = C::new(1.0, 0.0); // third row/column zero
        assert!(DenseLu::factor(a, n).is_err());
    }

    fn dense_from_planes(sys: &PlaneSystem) -> (Vec<C>, usize) {
        let n = sys.n_total();
        let off = sys.offsets();
        let mut a = vec![C::new(0.0, 0.0); n * n];
        for j in 0..sys.sizes.len() {
            let s = sys.sizes[j];
            for r in 0..s {
                for c in 0..s {
                    a[(off[j] + r) * n + off[j] + c] = sys.diag[j][r * s + c];
                }
            }
        }
        for j in 0..sys.sizes.len() - 1 {
            for &(r, c, v) in &sys.down[j] {
                a[(off[j + 1] + r) * n + off[j] + c] = v;
            }
            for &(r, c, v) in &sys.up[j] {
                a[(off[j] + r) * n + off[j + 1] + c] = v;
            }
        }
        (a, n)
    }

    #[test]
    fn block_tridiag_matches_dense_lu() {
        let sizes = vec![5usize, 7, 6, 4];
        let mut rng = SplitMix64(1234);
        let mut diag = Vec::new();
        for &s in &sizes {
            let mut d = vec![C::new(0.0, 0.0); s * s];
            for (i, v) in d.iter_mut().enumerate() {
                *v = C::new(rng.next_f64(), rng.next_f64());
                if i % (s + 1) == 0 {
                    *v += C::new(6.0, 0.0); // diagonally dominant
                }
            }
            diag.push(d);
        }
        let mut down = Vec::new();
        let mut up = Vec::new();
        for j in 0..sizes.len() - 1 {
            let (a, b) = (sizes[j], sizes[j + 1]);
            let mut dn = Vec::new();
            let mut upv = Vec::new();
            for c in 0..a.min(b) {
                dn.push((c, c, C::new(rng.next_f64(), rng.next_f64())));
                upv.push((c, c, C::new(rng.next_f64(), rng.next_f64())));
            }
            dn.push((0, a - 1, C::new(0.3, -0.2)));
            upv.push((1, b - 1, C::new(-0.1, 0.4)));
            down.push(dn);
            up.push(upv);
        }
        let sys = PlaneSystem { sizes, diag, down, up };
        let n = sys.n_total();
        let b: Vec<C> = seeded_unit_vector(n, 5);

        let (ad, _) = dense_from_planes(&sys);
        let mut x_ref = b.clone();
        DenseLu::factor(ad, n).unwrap().solve_in_place(&mut x_ref);

        let lu = BlockTridiagLu::factor(&sys).unwrap();
        let x = lu.solve(&b);
        let err: f64 = x.iter().zip(&x_ref).map(|(u, v)| (u - v).norm()).sum();
        assert!(err < 1e-10, "err {err:e}");

        // and apply(x) reproduces b
        let mut y = vec![C::new(0.0, 0.0); n];
        sys.apply(&x, &mut y);
        let res: f64 = y.iter().zip(&b).map(|(u, v)| (u - v).norm()).sum();
        assert!(res < 1e-10, "residual {res:e}");
    }

    /// 5-point Laplacian on an mx x my rectangle as a plane system; its
    /// discrete eigenvalues are known exactly.
    fn laplace_2d(mx: usize, my: usize, h: f64) -> PlaneSystem {
        let s = my;
        let mut diag = Vec::new();
        let mut down = Vec::new();
        let mut up = Vec::new();
        for _ in 0..mx {
            let mut d = vec![C::new(0.0, 0.0); s * s];
            for r in 0..s {
                d[r * s + r] = C::new(4.0 / (h * h), 0.0);
                if r + 1 < s {
                    d[r * s + r + 1] = C::new(-1.0 / (h * h), 0.0);
                    d[(r + 1) * s + r] = C::new(-1.0 / (h * h), 0.0);
                }
            }
            diag.push(d);
        }
        for _ in 0..mx - 1 {
            let cpl: Coupling = (0..s).map(|r| (r, r, C::new(-1.0 / (h * h), 0.0))).collect();
            down.push(cpl.clone());
            up.push(cpl);
        }
        PlaneSystem { sizes: vec![s; mx], diag, down, up }
    }

    #[test]
    fn shift_invert_lanczos_hits_exact_discrete_eigenvalues() {
        let (mx, my, h) = (12usize, 9usize, 0.1f64);
        let sys = laplace_2d(mx, my, h);
        let n = sys.n_total();
        let exact = |p: usize, q: usize| {
            let sp = (p as f64 * std::f64::consts::PI / (2.0 * (mx as f64 + 1.0))).sin();
            let sq = (q as f64 * std::f64::consts::PI / (2.0 * (my as f64 + 1.0))).sin();
            4.0 / (h * h) * (sp * sp + sq * sq)
        };
        let sigma = exact(1, 1) * 0.9;
        // shifted copy
        let mut shifted = PlaneSystem {
            sizes: sys.sizes.clone(),
            diag: sys.diag.clone(),
            down: sys.down.clone(),
            up: sys.up.clone(),
        };
        for d in &mut shifted.diag {
            let s = (d.len() as f64).sqrt() as usize;
            for r in 0..s {
                d[r * s + r] -= C::new(sigma, 0.0);
            }
        }
        let lu = BlockTridiagLu::factor(&shifted).unwrap();
        // deflated sweep: one Ritz pair at a time, projecting out found ones
        let mut found: Vec<f64> = Vec::new();
        let mut space: Vec<Vec<C>> = Vec::new();
        for _ in 0..3 {
            let p = lanczos_extreme(n, |v| lu.solve(v), 40, 1, 42, &space)
                .unwrap()
                .remove(0);
            found.push(sigma + 1.0 / p.value);
            space.push(p.vector);
        }
        found.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = vec![exact(1, 1), exact(2, 1), exact(1, 2)];
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (f, w) in found.iter().zip(&want) {
            assert!((f - w).abs() < 1e-8 * w, "got {f}, want {w}");
        }
    }

    #[test]
    fn pcg_matches_direct_solution() {
        let (mx, my, h) = (15usize, 11usize, 0.07f64);
        let sys = laplace_2d(mx, my, h);
        let n = sys.n_total();
        let b: Vec<f64> = {
            let mut rng = SplitMix64(3);
            (0..n).map(|_| rng.next_f64()).collect()
        };
        let bc: Vec<C> = b.iter().map(|&x| C::new(x, 0.0)).collect();
        let x_ref = BlockTridiagLu::factor(&sys).unwrap().solve(&bc);
        let diag = vec![4.0 / (h * h); n];
        let apply = |x: &[f64], y: &mut [f64]| {
            let xc: Vec<C> = x.iter().map(|&v| C::new(v, 0.0)).collect();
            let mut yc = vec![C::new(0.0, 0.0); n];
            sys.apply(&xc, &mut yc);
            for (yi, yci) in y.iter_mut().zip(&yc) {
                *yi = yci.re;
            }
        };
        let (x, iters) = pcg_real(apply, &diag, &b, 1e-12, 2000).unwrap();
        assert!(iters < 500);
        let err: f64 = x
            .iter()
            .zip(&x_ref)
            .map(|(u, v)| (u - v.re).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "err {err:e}");
    }

    #[test]
    fn tridiag_eigen_closed_form() {
        // diag 2, off -1: eigenvalues 2 - 2 cos(j pi / (n+1))
        let n = 8;
        let d = vec![2.0; n];
        let e = vec![-1.0; n - 1];
        let (vals, vecs) = tridiag_eigen(&d, &e).unwrap();
        for j in 1..=n {
            let want = 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((vals[j - 1] - want).abs() < 1e-12);
        }
        // eigenvector orthonormality
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|k| vecs[k * n + a] * vecs[k * n + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lstsq_recovers_exact_coefficients() {
        let n = 12;
        let xs: Vec<f64> = (0..n).map(|i| 0.5 + 0.1 * i as f64).collect();
        let c0 = C::new(1.25, -0.5);
        let c1 = C::new(-0.75, 2.0);
        let mut a = vec![C::new(0.0, 0.0); n * 2];
        let mut b = vec![C::new(0.0, 0.0); n];
        for (i, &x) in xs.iter().enumerate() {
            a[i * 2] = C::new(x.powf(1.7), 0.0);
            a[i * 2 + 1] = C::new(x.powf(-2.7), 0.0);
            b[i] = c0 * a[i * 2] + c1 * a[i * 2 + 1];
        }
        let (x, res) = lstsq(&a, n, 2, &b).unwrap();
        assert!((x[0] - c0).norm() < 1e-12);
        assert!((x[1] - c1).norm() < 1e-12);
        assert!(res < 1e-12);
    }

    #[test]
    fn lstsq_flags_dependent_columns() {
        let n = 6;
        let mut a = vec![C::new(0.0, 0.0); n * 2];
        for i in 0..n {
            a[i * 2] = C::new(1.0 + i as f64, 0.0);
            a[i * 2 + 1] = C::new(2.0 * (1.0 + i as f64), 0.0);
        }
        let b = vec![C::new(1.0, 0.0); n];
        assert!(lstsq(&a, n, 2, &b).is_err());
    }

    #[test]
    fn richardson_and_slope() {
        let f = |h: f64| 3.0 + 0.2 * h * h + 0.05 * h * h * h * h;
        let ex = richardson(f(0.1), f(0.05), 2);
        // exact remainder after eliminating the h^2 term is -c4 h^4 / 4
        assert!((ex - 3.0 + 0.05 * 0.1f64.powi(4) / 4.0).abs() < 1e-15);
        let xs = vec![0.1, 0.2, 0.4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 2.0 * x.powf(3.5)).collect();
        assert!((log_slope(&xs, &ys) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn seeded_vectors_are_deterministic_and_real() {
        let a = seeded_unit_vector(64, 11);
        let b = seeded_unit_vector(64, 11);
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.im == 0.0));
        assert!((nrm2(&a) - 1.0).abs() < 1e-14);
    }
}
