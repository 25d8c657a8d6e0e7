//! Linear-algebra kernels for the per-step coupled solves: dense LU with
//! partial pivoting (small instances and oracles), BiCGStab with an optional
//! right preconditioner (large instances), and the orthonormal cosine basis
//! that diagonalizes the Neumann Laplacian on cell-centered grids.

use crate::error::{CoreError, Result};
use crate::geometry::{dot, Grid};

/// Dense LU factorization with partial pivoting.
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Factor a dense row-major `n x n` matrix.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut max = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > max {
                    max = v;
                    p = i;
                }
            }
            if max == 0.0 {
                return Err(CoreError::LinearSolve {
                    what: "dense LU (singular matrix)".into(),
                    residual: f64::INFINITY,
                });
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let m = a[i * n + k] / pivot;
                a[i * n + k] = m;
                if m != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= m * a[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, piv })
    }

    /// Assemble the matrix of a linear operator by probing unit vectors,
    /// then factor it.
    pub fn from_operator(n: usize, mut apply: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut a = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                a[i * n + j] = col[i];
            }
        }
        Self::factor(a, n)
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        x.copy_from_slice(b);
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..n {
                    x[i] -= self.lu[i * n + k] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            x[k] /= self.lu[k * n + k];
            let xk = x[k];
            if xk != 0.0 {
                for i in 0..k {
                    x[i] -= self.lu[i * n + k] * xk;
                }
            }
        }
    }
}

/// BiCGStab with an optional right preconditioner.
///
/// Solves `A x = b` to relative tolerance `tol` on the true residual.
/// `apply` computes `A v`; `precond` approximates `A⁻¹` (identity when
/// `None`). Deterministic: no randomized restarts.
pub fn bicgstab(
    apply: &mut dyn FnMut(&[f64], &mut [f64]),
    mut precond: Option<&mut dyn FnMut(&[f64], &mut [f64])>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> Result<usize> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let target = tol * bnorm;

    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut resid = dot(&r, &r).sqrt();

    for iter in 0..max_iters {
        if resid <= target {
            return Ok(iter);
        }
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        match precond.as_deref_mut() {
            Some(m) => m(&p, &mut phat),
            None => phat.copy_from_slice(&p),
        }
        apply(&phat, &mut v);
        let r0v = dot(&r0, &v);
        if r0v.abs() < 1e-300 {
            break;
        }
        alpha = rho / r0v;
        // s = r - alpha v (reuse r)
        for i in 0..n {
            r[i] -= alpha * v[i];
        }
        let snorm = dot(&r, &r).sqrt();
        if snorm <= target {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(iter + 1);
        }
        match precond.as_deref_mut() {
            Some(m) => m(&r, &mut shat),
            None => shat.copy_from_slice(&r),
        }
        apply(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &r) / tt;
        if omega == 0.0 {
            break;
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] -= omega * t[i];
        }
        resid = dot(&r, &r).sqrt();
    }
    if resid <= target {
        return Ok(max_iters);
    }
    Err(CoreError::LinearSolve {
        what: "BiCGStab".into(),
        residual: resid / bnorm,
    })
}

/// Orthonormal DCT-II basis on one axis of a cell-centered grid. The columns
/// `cos(k π (i + 1/2) / n)` (suitably normalized) are the eigenvectors of
/// the 1D mirrored-ghost Neumann Laplacian.
pub struct CosineBasis {
    n: usize,
    /// Row-major `n x n` forward matrix; its transpose is the inverse.
    forward: Vec<f64>,
}

impl CosineBasis {
    pub fn new(n: usize) -> Self {
        let mut forward = vec![0.0; n * n];
        let norm0 = (1.0 / n as f64).sqrt();
        let norm = (2.0 / n as f64).sqrt();
        for k in 0..n {
            let s = if k == 0 { norm0 } else { norm };
            for i in 0..n {
                forward[k * n + i] =
                    s * (k as f64 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos();
            }
        }
        Self { n, forward }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn apply(&self, transpose: bool, src: &[f64], dst: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                let m = if transpose { self.forward[i * n + k] } else { self.forward[k * n + i] };
                acc += m * src[i];
            }
            dst[k] = acc;
        }
    }
}

/// Tensor-product cosine transform on a grid, with the Laplacian eigenvalues
/// per mode. `coeffs[k]` multiplies the mode with flat index `k` (row-major,
/// x-wavenumber fastest); `eigenvalue[k]` is the eigenvalue of `-Δ`.
pub struct GridCosineTransform {
    nx: usize,
    ny: usize,
    bx: CosineBasis,
    by: Option<CosineBasis>,
    eigenvalues: Vec<f64>,
}

impl GridCosineTransform {
    pub fn new(grid: &Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let bx = CosineBasis::new(nx);
        let by = if ny > 1 { Some(CosineBasis::new(ny)) } else { None };
        let mut eigenvalues = Vec::with_capacity(nx * ny);
        for ky in 0..ny {
            for kx in 0..nx {
                eigenvalues.push(grid.laplacian_eigenvalue(kx, ky));
            }
        }
        Self { nx, ny, bx, by, eigenvalues }
    }

    /// Eigenvalues of `-Δ` in mode order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Physical space -> cosine coefficients.
    pub fn forward(&self, src: &[f64], dst: &mut [f64], scratch: &mut [f64]) {
        self.transform(false, src, dst, scratch)
    }

    /// Cosine coefficients -> physical space.
    pub fn inverse(&self, src: &[f64], dst: &mut [f64], scratch: &mut [f64]) {
        self.transform(true, src, dst, scratch)
    }

    fn transform(&self, inverse: bool, src: &[f64], dst: &mut [f64], scratch: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        debug_assert_eq!(src.len(), nx * ny);
        // Along x for every row.
        for j in 0..ny {
            let row = &src[j * nx..(j + 1) * nx];
            let out = &mut scratch[j * nx..(j + 1) * nx];
            self.bx.apply(inverse, row, out);
        }
        match &self.by {
            None => dst.copy_from_slice(scratch),
            Some(by) => {
                // Along y for every column.
                let mut col = vec![0.0; ny];
                let mut res = vec![0.0; ny];
                for i in 0..nx {
                    for j in 0..ny {
                        col[j] = scratch[j * nx + i];
                    }
                    by.apply(inverse, &col, &mut res);
                    for j in 0..ny {
                        dst[j * nx + i] = res[j];
                    }
                }
            }
        }
    }
}
