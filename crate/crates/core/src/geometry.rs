//! Structured cell-centered grids with homogeneous Neumann boundaries,
//! the discrete operators built on them, and space-time fields.
//!
//! The domain is a 1D interval or 2D rectangle discretized by cell-centered
//! nodes `x_i = (i + 1/2) h`. Neumann boundaries are realized by mirrored
//! ghost nodes, which makes the discrete Laplacian symmetric with exact zero
//! row sums. Two consequences are load-bearing for everything downstream:
//!
//! * `mean(laplacian(f)) == 0` up to rounding (discrete divergence theorem),
//!   so the mass-balance recursion of the phase equation is exact;
//! * `-laplacian` is symmetric positive semidefinite with kernel = constants,
//!   so the inverse operator `N` (solution operator of `-Δz = ψ`, `z̄ = 0`)
//!   is well defined on zero-mean fields and self-adjoint.
//!
//! Time is a uniform partition of `[0, T]`. Space-time fields store one slice
//! per time node `n = 0..=nt`. Quadrature in time is the right-endpoint
//! rectangle rule (slices `1..=nt`), matching implicit Euler stepping.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

/// Cell-centered rectangular grid. 1D grids use `ny == 1` and a unit
/// transverse extent so that cell volume and domain volume stay consistent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    /// 1D grid on `[0, lx]` with `nx` cells.
    pub fn new_1d(nx: usize, lx: f64) -> Result<Self> {
        if nx < 4 {
            return Err(CoreError::InvalidGrid(format!("nx = {nx}, need nx >= 4")));
        }
        if !(lx > 0.0) || !lx.is_finite() {
            return Err(CoreError::InvalidGrid(format!("lx = {lx}, need lx > 0")));
        }
        Ok(Self { nx, ny: 1, lx, ly: 1.0, hx: lx / nx as f64, hy: 1.0 })
    }

    /// 2D grid on `[0, lx] x [0, ly]` with `nx * ny` cells.
    pub fn new_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(CoreError::InvalidGrid(format!(
                "nx = {nx}, ny = {ny}, need both >= 4"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(CoreError::InvalidGrid(format!(
                "extents lx = {lx}, ly = {ly} must be positive"
            )));
        }
        Ok(Self { nx, ny, lx, ly, hx: lx / nx as f64, hy: ly / ny as f64 })
    }

    pub fn dim(&self) -> usize {
        if self.ny == 1 { 1 } else { 2 }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }

    /// Domain volume, defined as `cell_volume * node_count` so the identity
    /// holds exactly in floating point.
    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.node_count() as f64
    }

    /// Coordinates of the cell center with flat index `idx` (row-major,
    /// x fastest).
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let i = idx % self.nx;
        let j = idx / self.nx;
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Evaluate `f(x, y)` at every cell center.
    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut v = Vec::with_capacity(self.node_count());
        for idx in 0..self.node_count() {
            let (x, y) = self.coords(idx);
            v.push(f(x, y));
        }
        Field { values: v }
    }

    pub fn constant_field(&self, c: f64) -> Field {
        Field { values: vec![c; self.node_count()] }
    }

    pub fn zero_field(&self) -> Field {
        self.constant_field(0.0)
    }

    fn check_conformance(&self, f: &Field) -> Result<()> {
        if f.len() != self.node_count() {
            return Err(CoreError::Conformance {
                expected: self.node_count(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Eigenvalue of `-laplacian_neumann` for the cosine mode with wavenumber
    /// pair `(kx, ky)`; modes are `cos(kx π x / lx) cos(ky π y / ly)` sampled
    /// at cell centers.
    pub fn laplacian_eigenvalue(&self, kx: usize, ky: usize) -> f64 {
        let ex = 2.0 / (self.hx * self.hx)
            * (1.0 - (kx as f64 * std::f64::consts::PI / self.nx as f64).cos());
        let ey = if self.ny == 1 {
            0.0
        } else {
            2.0 / (self.hy * self.hy)
                * (1.0 - (ky as f64 * std::f64::consts::PI / self.ny as f64).cos())
        };
        ex + ey
    }
}

/// Uniform partition of `[0, T]` into `nt` steps of size `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    nt: usize,
    tau: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, nt: usize) -> Result<Self> {
        if nt < 2 {
            return Err(CoreError::InvalidGrid(format!("nt = {nt}, need nt >= 2")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(CoreError::InvalidGrid(format!("T = {t_final}, need T > 0")));
        }
        Ok(Self { t_final, nt, tau: t_final / nt as f64 })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Time of node `n` (0-based, `n <= nt`).
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }
}

/// Nodal real values on a grid; a discrete member of `L²(Ω)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    /// Wrap raw nodal values. Rejects non-finite entries; conformance with a
    /// grid is checked by the operations that take one.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(*bad));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    /// `self + a * other`, elementwise.
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        assert_eq!(self.len(), other.len());
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(s, o)| s + a * o)
            .collect();
        Field { values }
    }

    pub fn scale(&self, a: f64) -> Field {
        Field { values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.axpy(-1.0, other)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { values: self.values.iter().map(|v| f(*v)).collect() }
    }
}

/// One [`Field`] per time node `n = 0..=nt`; a discrete member of `L²(Q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    slices: Vec<Field>,
}

impl SpaceTimeField {
    pub fn from_slices(slices: Vec<Field>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(CoreError::InvalidGrid(
                "a space-time field needs at least two time slices".into(),
            ));
        }
        let len = slices[0].len();
        if slices.iter().any(|s| s.len() != len) {
            return Err(CoreError::Conformance { expected: len, got: 0 });
        }
        Ok(Self { slices })
    }

    pub fn constant(grid: &Grid, tgrid: &TimeGrid, c: f64) -> Self {
        Self { slices: vec![grid.constant_field(c); tgrid.nt() + 1] }
    }

    pub fn zero(grid: &Grid, tgrid: &TimeGrid) -> Self {
        Self::constant(grid, tgrid, 0.0)
    }

    /// Evaluate `f(x, y, t)` at every cell center and time node.
    pub fn from_fn(
        grid: &Grid,
        tgrid: &TimeGrid,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Self {
        let slices = (0..=tgrid.nt())
            .map(|n| {
                let t = tgrid.time(n);
                grid.field_from_fn(|x, y| f(x, y, t))
            })
            .collect();
        Self { slices }
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    /// Number of time steps (`nt`); slices run `0..=nt`.
    pub fn nt(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn slice(&self, n: usize) -> &Field {
        &self.slices[n]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut Field {
        &mut self.slices[n]
    }

    pub fn slices(&self) -> &[Field] {
        &self.slices
    }

    pub fn map_slices(&self, f: impl Fn(&Field) -> Field) -> Self {
        Self { slices: self.slices.iter().map(f).collect() }
    }

    pub fn axpy(&self, a: f64, other: &SpaceTimeField) -> SpaceTimeField {
        assert_eq!(self.num_slices(), other.num_slices());
        let slices = self
            .slices
            .iter()
            .zip(&other.slices)
            .map(|(s, o)| s.axpy(a, o))
            .collect();
        Self { slices }
    }

    pub fn scale(&self, a: f64) -> SpaceTimeField {
        Self { slices: self.slices.iter().map(|s| s.scale(a)).collect() }
    }

    pub fn sub(&self, other: &SpaceTimeField) -> SpaceTimeField {
        self.axpy(-1.0, other)
    }

    pub fn norm_inf(&self) -> f64 {
        self.slices.iter().fold(0.0, |m, s| m.max(s.norm_inf()))
    }

    pub fn conforms(&self, grid: &Grid, tgrid: &TimeGrid) -> bool {
        self.nt() == tgrid.nt() && self.slices.iter().all(|s| s.len() == grid.node_count())
    }
}

/// Apply the mirrored-ghost Neumann Laplacian in place: `out = Δf`.
///
/// The stencil is the standard 3-point (1D) / 5-point (2D) one with ghost
/// values equal to their interior mirror, i.e. at a boundary face the normal
/// difference vanishes. Row sums are exactly zero.
pub fn laplacian_into(f: &[f64], out: &mut [f64], g: &Grid) {
    let (nx, ny) = (g.nx, g.ny);
    debug_assert_eq!(f.len(), nx * ny);
    debug_assert_eq!(out.len(), nx * ny);
    let ihx2 = 1.0 / (g.hx * g.hx);
    let ihy2 = 1.0 / (g.hy * g.hy);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let idx = row + i;
            let c = f[idx];
            let left = if i == 0 { c } else { f[idx - 1] };
            let right = if i + 1 == nx { c } else { f[idx + 1] };
            let mut acc = (left - c + (right - c)) * ihx2;
            if ny > 1 {
                let down = if j == 0 { c } else { f[idx - nx] };
                let up = if j + 1 == ny { c } else { f[idx + nx] };
                acc += (down - c + (up - c)) * ihy2;
            }
            out[idx] = acc;
        }
    }
}

/// Discrete Neumann Laplacian `Δf` (see [`laplacian_into`]).
pub fn laplacian_neumann(f: &Field, g: &Grid) -> Result<Field> {
    g.check_conformance(f)?;
    let mut out = vec![0.0; f.len()];
    laplacian_into(f.values(), &mut out, g);
    Ok(Field::from_raw(out))
}

/// Generalized mean value `(1/|Ω|) ⟨f, 1⟩`. On a uniform grid the volume
/// weights cancel, leaving the plain average of nodal values.
pub fn mean(f: &Field, g: &Grid) -> Result<f64> {
    g.check_conformance(f)?;
    Ok(f.values.iter().sum::<f64>() / f.len() as f64)
}

/// L²(Ω) inner product (nodal sum weighted by cell volume).
pub fn inner(f: &Field, other: &Field, g: &Grid) -> Result<f64> {
    g.check_conformance(f)?;
    g.check_conformance(other)?;
    let s: f64 = f.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
    Ok(s * g.cell_volume())
}

/// L²(Ω) norm.
pub fn norm_l2(f: &Field, g: &Grid) -> Result<f64> {
    Ok(inner(f, f, g)?.sqrt())
}

/// Squared seminorm `∫ |∇f|²` via one-sided differences on interior faces.
/// Boundary faces contribute nothing (homogeneous Neumann).
pub fn grad_norm_sq(f: &Field, g: &Grid) -> Result<f64> {
    g.check_conformance(f)?;
    let (nx, ny) = (g.nx, g.ny);
    let vol = g.cell_volume();
    let v = &f.values;
    let mut acc = 0.0;
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx - 1 {
            let d = (v[row + i + 1] - v[row + i]) / g.hx;
            acc += d * d;
        }
    }
    if ny > 1 {
        for j in 0..ny - 1 {
            for i in 0..nx {
                let d = (v[(j + 1) * nx + i] - v[j * nx + i]) / g.hy;
                acc += d * d;
            }
        }
    }
    Ok(acc * vol)
}

/// H¹(Ω) norm: `(‖f‖² + ‖∇f‖²)^{1/2}`.
pub fn norm_h1(f: &Field, g: &Grid) -> Result<f64> {
    Ok((inner(f, f, g)? + grad_norm_sq(f, g)?).sqrt())
}

/// Default relative tolerance for the conjugate-gradient solve behind `N`.
pub const INVERSE_NEUMANN_TOL: f64 = 1e-12;

/// Solution operator `N` of the homogeneous Neumann problem: given zero-mean
/// `ψ`, returns the zero-mean `z` with `-Δz = ψ`.
///
/// Solved by conjugate gradients restricted to the zero-mean subspace (the
/// operator is SPD there). `tol` is relative to `‖ψ‖`.
pub fn inverse_neumann(psi: &Field, g: &Grid, tol: f64) -> Result<Field> {
    g.check_conformance(psi)?;
    let psi_mean = mean(psi, g)?;
    let scale = psi.norm_inf();
    if psi_mean.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(CoreError::NonZeroMean { mean: psi_mean, scale });
    }
    if scale == 0.0 {
        return Ok(g.zero_field());
    }

    let m = g.node_count();
    // Re-center defensively; the tiny mean allowed by the precondition would
    // otherwise put a constant component in the CG right-hand side.
    let mut b = psi.values.clone();
    subtract_mean(&mut b);

    let mut x = vec![0.0; m];
    let mut r = b;
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let rhs_norm = dot(&r, &r).sqrt();
    let target = tol * rhs_norm;
    let mut rr = rhs_norm * rhs_norm;
    let max_iters = 20 * m + 200;
    for _ in 0..max_iters {
        if rr.sqrt() <= target {
            subtract_mean(&mut x);
            return Ok(Field::from_raw(x));
        }
        // ap = -Δp
        laplacian_into(&p, &mut ap, g);
        for v in ap.iter_mut() {
            *v = -*v;
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        subtract_mean(&mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..m {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(CoreError::LinearSolve {
        what: "inverse_neumann CG".into(),
        residual: rr.sqrt() / rhs_norm,
    })
}

/// Dual norm `‖ψ‖_* = (‖∇N(ψ - ψ̄)‖² + |ψ̄|²)^{1/2}`.
///
/// The gradient term is computed as `⟨ψ - ψ̄, N(ψ - ψ̄)⟩`, which equals
/// `∫ |∇N(ψ - ψ̄)|²` exactly for the summation-by-parts stencil.
pub fn dual_norm(psi: &Field, g: &Grid) -> Result<f64> {
    g.check_conformance(psi)?;
    let psi_bar = mean(psi, g)?;
    let centered = psi.map(|v| v - psi_bar);
    let z = inverse_neumann(&centered, g, INVERSE_NEUMANN_TOL)?;
    let grad_sq = inner(&centered, &z, g)?.max(0.0);
    Ok((grad_sq + psi_bar * psi_bar).sqrt())
}

/// L²(Q) inner product with the right-endpoint rectangle rule in time:
/// `τ Σ_{n=1..nt} ⟨aⁿ, bⁿ⟩`. Slice 0 does not enter, matching the implicit
/// Euler quadrature convention used throughout.
pub fn inner_q(a: &SpaceTimeField, b: &SpaceTimeField, g: &Grid, tg: &TimeGrid) -> Result<f64> {
    if a.nt() != tg.nt() || b.nt() != tg.nt() {
        return Err(CoreError::Conformance { expected: tg.nt() + 1, got: a.num_slices() });
    }
    let mut acc = 0.0;
    for n in 1..=tg.nt() {
        acc += inner(a.slice(n), b.slice(n), g)?;
    }
    Ok(acc * tg.tau())
}

/// L²(Q) norm (right-endpoint rule).
pub fn norm_q(a: &SpaceTimeField, g: &Grid, tg: &TimeGrid) -> Result<f64> {
    Ok(inner_q(a, a, g, tg)?.sqrt())
}

/// Forward time convolution `(1 * v)(t_n) = ∫_0^{t_n} v`, right-endpoint
/// rule: `τ Σ_{k=1..n} v^k`. Satisfies `(1*v)^0 = 0` and the discrete
/// identity `((1*v)^{n+1} - (1*v)^n)/τ = v^{n+1}` exactly.
pub fn conv_forward(v: &SpaceTimeField, tg: &TimeGrid) -> SpaceTimeField {
    let tau = tg.tau();
    let mut slices = Vec::with_capacity(v.num_slices());
    let mut acc = v.slice(0).scale(0.0);
    slices.push(acc.clone());
    for n in 1..v.num_slices() {
        acc = acc.axpy(tau, v.slice(n));
        slices.push(acc.clone());
    }
    SpaceTimeField { slices }
}

/// Backward time convolution `(1 ⊛ v)(t_n) = ∫_{t_n}^T v`, left-endpoint
/// rule: `τ Σ_{k=n..nt-1} v^k`. Satisfies `(1⊛v)^{nt} = 0` and the discrete
/// identity `((1⊛v)^{n+1} - (1⊛v)^n)/τ = -v^n` exactly, the analogue of
/// `∂_t(1 ⊛ r) = -r` for the backward sweep.
pub fn conv_backward(v: &SpaceTimeField, tg: &TimeGrid) -> SpaceTimeField {
    let tau = tg.tau();
    let nt = v.nt();
    let mut slices = vec![v.slice(0).scale(0.0); nt + 1];
    let mut acc = v.slice(0).scale(0.0);
    for n in (0..nt).rev() {
        acc = acc.axpy(tau, v.slice(n));
        slices[n] = acc.clone();
    }
    SpaceTimeField { slices }
}

/// Backward convolution with the right-endpoint rule:
/// `τ Σ_{k=n+1..nt} v^k`. This is the alignment produced by exact
/// transposition of the right-endpoint forward quadrature; the adjoint
/// solver uses it for the `α₃` source term in transpose mode.
pub fn conv_backward_right(v: &SpaceTimeField, tg: &TimeGrid) -> SpaceTimeField {
    let tau = tg.tau();
    let nt = v.nt();
    let mut slices = vec![v.slice(0).scale(0.0); nt + 1];
    let mut acc = v.slice(0).scale(0.0);
    for n in (0..nt).rev() {
        acc = acc.axpy(tau, v.slice(n + 1));
        slices[n] = acc.clone();
    }
    SpaceTimeField { slices }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn subtract_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= m;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::SplitMix64;
    use std::f64::consts::PI;

    fn grid_1d(n: usize) -> Grid {
        Grid::new_1d(n, 1.0).unwrap()
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid::new_1d(3, 1.0).is_err());
        assert!(Grid::new_1d(8, -1.0).is_err());
        assert!(Grid::new_2d(8, 3, 1.0, 1.0).is_err());
        let g = Grid::new_2d(8, 6, 2.0, 3.0).unwrap();
        assert_eq!(g.domain_volume(), g.cell_volume() * 48.0);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = Grid::new_2d(8, 8, 1.0, 2.0).unwrap();
        let f = g.constant_field(3.7);
        let lap = laplacian_neumann(&f, &g).unwrap();
        assert_eq!(lap.norm_inf(), 0.0);
    }

    #[test]
    fn laplacian_cosine_eigenmode_1d() {
        let g = grid_1d(32);
        for k in 1..6 {
            let f = g.field_from_fn(|x, _| (k as f64 * PI * x / g.lx()).cos());
            let lap = laplacian_neumann(&f, &g).unwrap();
            let lam = -g.laplacian_eigenvalue(k, 0);
            let diff = lap.sub(&f.scale(lam));
            assert!(diff.norm_inf() < 1e-11, "k = {k}: {}", diff.norm_inf());
        }
    }

    #[test]
    fn laplacian_matches_dense_assembly() {
        // Dense oracle: assemble the operator column by column on a small 2D
        // grid and compare against the stencil on a pseudo-random field.
        let g = Grid::new_2d(4, 4, 1.0, 1.0).unwrap();
        let m = g.node_count();
        let mut cols = Vec::with_capacity(m);
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let mut col = vec![0.0; m];
            laplacian_into(&e, &mut col, &g);
            cols.push(col);
        }
        let mut rng = SplitMix64::new(42);
        let f: Vec<f64> = (0..m).map(|_| rng.next_symmetric()).collect();
        let mut direct = vec![0.0; m];
        laplacian_into(&f, &mut direct, &g);
        for i in 0..m {
            let dense: f64 = (0..m).map(|j| cols[j][i] * f[j]).sum();
            assert!((dense - direct[i]).abs() <= 1e-12);
        }
        // Symmetry of the assembled matrix.
        for i in 0..m {
            for j in 0..m {
                assert!((cols[j][i] - cols[i][j]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn divergence_theorem() {
        let g = Grid::new_2d(16, 12, 1.0, 0.7).unwrap();
        let mut rng = SplitMix64::new(7);
        let f = Field::from_raw((0..g.node_count()).map(|_| rng.next_symmetric()).collect());
        let lap = laplacian_neumann(&f, &g).unwrap();
        let m = mean(&lap, &g).unwrap();
        assert!(m.abs() <= 1e-13 * f.norm_inf());
    }

    #[test]
    fn mean_of_constant_and_eigenmode() {
        let g = grid_1d(64);
        assert_eq!(mean(&g.constant_field(2.5), &g).unwrap(), 2.5);
        for k in 1..4 {
            let f = g.field_from_fn(|x, _| (k as f64 * PI * x).cos());
            assert!(mean(&f, &g).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn mean_matches_quadrature_oracle() {
        let g = Grid::new_2d(8, 8, 2.0, 1.0).unwrap();
        let mut rng = SplitMix64::new(3);
        let f = Field::from_raw((0..g.node_count()).map(|_| rng.next_symmetric()).collect());
        let oracle =
            f.values().iter().sum::<f64>() * g.cell_volume() / g.domain_volume();
        assert!((mean(&f, &g).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn inverse_neumann_identities() {
        let g = Grid::new_2d(12, 12, 1.0, 1.0).unwrap();
        // Zero in, zero out.
        let z = inverse_neumann(&g.zero_field(), &g, 1e-12).unwrap();
        assert_eq!(z.norm_inf(), 0.0);

        // Eigenmode: N divides by the discrete eigenvalue.
        let f = g.field_from_fn(|x, y| (PI * x).cos() * (2.0 * PI * y).cos());
        let z = inverse_neumann(&f, &g, 1e-12).unwrap();
        let lam = g.laplacian_eigenvalue(1, 2);
        assert!(z.sub(&f.scale(1.0 / lam)).norm_inf() < 1e-10);

        // Apply-forward oracle on a random zero-mean field.
        let mut rng = SplitMix64::new(11);
        let mut psi = Field::from_raw(
            (0..g.node_count()).map(|_| rng.next_symmetric()).collect(),
        );
        subtract_mean(psi.values_mut());
        let z = inverse_neumann(&psi, &g, 1e-12).unwrap();
        let back = laplacian_neumann(&z, &g).unwrap().scale(-1.0);
        let err = back.sub(&psi);
        let rel = norm_l2(&err, &g).unwrap() / norm_l2(&psi, &g).unwrap();
        assert!(rel <= 1e-10, "relative residual {rel}");
        assert!(mean(&z, &g).unwrap().abs() < 1e-13);

        // Self-adjointness <psi, N zeta> = <zeta, N psi>.
        let mut zeta = Field::from_raw(
            (0..g.node_count()).map(|_| rng.next_symmetric()).collect(),
        );
        subtract_mean(zeta.values_mut());
        let nz = inverse_neumann(&zeta, &g, 1e-12).unwrap();
        let lhs = inner(&psi, &nz, &g).unwrap();
        let rhs = inner(&zeta, &z, &g).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn inverse_neumann_rejects_nonzero_mean() {
        let g = grid_1d(16);
        let f = g.constant_field(1.0);
        assert!(matches!(
            inverse_neumann(&f, &g, 1e-12),
            Err(CoreError::NonZeroMean { .. })
        ));
    }

    #[test]
    fn dual_norm_cases() {
        let g = grid_1d(48);
        assert!((dual_norm(&g.constant_field(-2.0), &g).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(dual_norm(&g.zero_field(), &g).unwrap(), 0.0);

        // Eigenmode oracle: amplitude * ||mode|| / sqrt(eigenvalue).
        let amp = 0.8;
        let k = 3;
        let mode = g.field_from_fn(|x, _| (k as f64 * PI * x).cos());
        let psi = mode.scale(amp);
        let expect = amp * norm_l2(&mode, &g).unwrap() / g.laplacian_eigenvalue(k, 0).sqrt();
        let got = dual_norm(&psi, &g).unwrap();
        assert!((got - expect).abs() <= 1e-9 * expect, "{got} vs {expect}");
    }

    #[test]
    fn dual_norm_positivity_and_comparability() {
        let g = grid_1d(32);
        let mut rng = SplitMix64::new(5);
        // <psi, N psi> = ||psi||_*^2 >= 0 on zero-mean fields, and the dual
        // norm is dominated by the L2 norm times a grid constant.
        let lam1 = g.laplacian_eigenvalue(1, 0);
        let c = 1.0 / lam1.sqrt();
        for _ in 0..5 {
            let mut psi = Field::from_raw(
                (0..g.node_count()).map(|_| rng.next_symmetric()).collect(),
            );
            subtract_mean(psi.values_mut());
            let z = inverse_neumann(&psi, &g, 1e-12).unwrap();
            let quad = inner(&psi, &z, &g).unwrap();
            assert!(quad >= 0.0);
            let dn = dual_norm(&psi, &g).unwrap();
            assert!((dn * dn - quad).abs() <= 1e-10 * quad.max(1e-30));
            assert!(dn <= c * norm_l2(&psi, &g).unwrap() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn l2_norms_and_cauchy_schwarz() {
        let g = Grid::new_2d(8, 8, 1.5, 1.0).unwrap();
        assert_eq!(norm_l2(&g.zero_field(), &g).unwrap(), 0.0);
        let c = 1.7;
        let expect = c * g.domain_volume().sqrt();
        assert!((norm_l2(&g.constant_field(c), &g).unwrap() - expect).abs() < 1e-12);

        let mut rng = SplitMix64::new(9);
        let f = Field::from_raw((0..g.node_count()).map(|_| rng.next_symmetric()).collect());
        let h = Field::from_raw((0..g.node_count()).map(|_| rng.next_symmetric()).collect());
        let ip = inner(&f, &h, &g).unwrap();
        assert!(
            ip.abs() <= norm_l2(&f, &g).unwrap() * norm_l2(&h, &g).unwrap() * (1.0 + 1e-12)
        );
    }

    #[test]
    fn convolution_identities() {
        let g = grid_1d(8);
        let tg = TimeGrid::new(1.0, 100).unwrap();
        let zero = SpaceTimeField::zero(&g, &tg);
        assert_eq!(conv_forward(&zero, &tg).norm_inf(), 0.0);

        let c = 0.3;
        let cst = SpaceTimeField::constant(&g, &tg, c);
        let fwd = conv_forward(&cst, &tg);
        for n in 0..=tg.nt() {
            let expect = c * n as f64 * tg.tau();
            assert!((fwd.slice(n).values()[0] - expect).abs() < 1e-14);
        }

        // v(t) = t: right-endpoint sum vs the exact integral T²/2.
        let v = SpaceTimeField::from_fn(&g, &tg, |_, _, t| t);
        let fwd = conv_forward(&v, &tg);
        let got = fwd.slice(tg.nt()).values()[0];
        assert!((got - 0.5).abs() <= tg.tau() * 1.0);

        // Backward rule endpoints and the exact relation between the two
        // quadratures: (1*v)(T) - (1⊛v)(0) = τ (v^N - v^0).
        let bwd = conv_backward(&v, &tg);
        assert_eq!(bwd.slice(tg.nt()).norm_inf(), 0.0);
        let gap = fwd.slice(tg.nt()).values()[0] - bwd.slice(0).values()[0];
        let expect = tg.tau() * (v.slice(tg.nt()).values()[0] - v.slice(0).values()[0]);
        assert!((gap - expect).abs() < 1e-14);

        // Telescoping: forward difference of (1*v) recovers v exactly.
        for n in 0..tg.nt() {
            let d = (fwd.slice(n + 1).values()[0] - fwd.slice(n).values()[0]) / tg.tau();
            assert!((d - v.slice(n + 1).values()[0]).abs() < 1e-12);
        }
        // Backward difference identity for the left-endpoint rule.
        for n in 0..tg.nt() {
            let d = (bwd.slice(n + 1).values()[0] - bwd.slice(n).values()[0]) / tg.tau();
            assert!((d + v.slice(n).values()[0]).abs() < 1e-12);
        }
    }
}
