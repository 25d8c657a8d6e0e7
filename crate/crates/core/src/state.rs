//! Time-stepping solver for the coupled state system.
//!
//! One step of the scheme advances `(φ, μ, v, w)` by implicit Euler with the
//! potential split convexly (`β` implicit, `π` explicit):
//!
//! ```text
//! (φⁿ⁺¹ - φⁿ)/τ - Δμⁿ⁺¹ + γ φⁿ⁺¹              = fⁿ⁺¹
//! μⁿ⁺¹ = -Δφⁿ⁺¹ + β(φⁿ⁺¹) + π(φⁿ) + a - b vⁿ⁺¹
//! (vⁿ⁺¹ - vⁿ)/τ - Δ(κ₁vⁿ⁺¹ + κ₂wⁿ⁺¹) + λ(φⁿ⁺¹ - φⁿ)/τ = uⁿ⁺¹
//! wⁿ⁺¹ = wⁿ + τ vⁿ⁺¹
//! ```
//!
//! `v = ∂t w` is the temperature. Each step solves the coupled `(φ, μ, v)`
//! block by Newton with the analytic Jacobian; `w` is eliminated through the
//! last identity, which also makes the discrete thermal relation
//! `wⁿ = w⁰ + τ Σ_{m≤n} vᵐ` hold exactly.
//!
//! Taking means in the first equation gives the exact mass-balance recursion
//! `mean(φⁿ⁺¹)(1 + τγ) = mean(φⁿ) + τ mean(fⁿ⁺¹)`, since the discrete
//! Laplacian has zero row sums.

use crate::blocksys::{BlockKind, CoupledStepSolver, LinearSolverKind, StepCoefficients};
use crate::error::{CoreError, Result};
use crate::geometry::{laplacian_into, laplacian_neumann, norm_l2, Field, Grid, SpaceTimeField, TimeGrid};
use crate::potentials::{validate_compatibility, PotentialSpec, PotentialVariant};
use serde::{Deserialize, Serialize};

/// Structural constants of the system; all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub lambda: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("gamma", self.gamma),
            ("a", self.a),
            ("b", self.b),
            ("kappa1", self.kappa1),
            ("kappa2", self.kappa2),
            ("lambda", self.lambda),
        ];
        for (name, v) in entries {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::InvalidParameter(format!(
                    "structural constant {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Newton and linear-solver settings for the per-step solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Acceptance tolerance on the residual infinity norm.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative tolerance of the inner linear solves.
    pub linear_tol: f64,
    pub linear_solver: LinearSolverKind,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
            linear_tol: 1e-12,
            linear_solver: LinearSolverKind::Auto,
        }
    }
}

const MAX_NEWTON_HALVINGS: usize = 10;

/// Initial data `(φ₀, w₀, w₁)`.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub phi0: Field,
    pub w0: Field,
    pub w1: Field,
}

impl InitialData {
    pub fn validate(&self, grid: &Grid, spec: &PotentialSpec) -> Result<()> {
        for (name, f) in [("phi0", &self.phi0), ("w0", &self.w0), ("w1", &self.w1)] {
            if f.len() != grid.node_count() {
                return Err(CoreError::InvalidParameter(format!(
                    "initial field {name} has {} nodes, grid has {}",
                    f.len(),
                    grid.node_count()
                )));
            }
        }
        if let PotentialVariant::Logarithmic { .. } = spec.variant() {
            let (lo, hi) = spec.domain();
            if !(self.phi0.min() > lo && self.phi0.max() < hi) {
                return Err(CoreError::Compatibility(format!(
                    "phi0 range [{}, {}] must lie strictly inside ({lo}, {hi})",
                    self.phi0.min(),
                    self.phi0.max()
                )));
            }
        }
        Ok(())
    }
}

/// Per-step Newton diagnostics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub halvings: usize,
    /// Whether clipped potential evaluations were ever active during the
    /// iteration (they must be inactive at the accepted state).
    pub clip_seen: bool,
}

/// Solution of the state system: `(φ, μ, w, ∂t w)` at each time node plus
/// solver diagnostics.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    phi: SpaceTimeField,
    mu: SpaceTimeField,
    w: SpaceTimeField,
    v: SpaceTimeField,
    diagnostics: Vec<StepDiagnostics>,
    mu0_laplacian_norm: f64,
}

impl StateTrajectory {
    pub fn phi(&self) -> &SpaceTimeField {
        &self.phi
    }

    pub fn mu(&self) -> &SpaceTimeField {
        &self.mu
    }

    pub fn w(&self) -> &SpaceTimeField {
        &self.w
    }

    /// Temperature `θ = ∂t w`.
    pub fn v(&self) -> &SpaceTimeField {
        &self.v
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    /// `‖Δμ₀‖` for the derived initial chemical potential; a regularity
    /// diagnostic with no enforced threshold.
    pub fn mu0_laplacian_norm(&self) -> f64 {
        self.mu0_laplacian_norm
    }
}

/// Temperature trajectory `θ = ∂t w`; returns the stored `v` slices.
pub fn temperature(traj: &StateTrajectory) -> &SpaceTimeField {
    traj.v()
}

/// Solve the state system for a control `u` and source `f`.
#[allow(clippy::too_many_arguments)]
pub fn solve_state(
    u: &SpaceTimeField,
    f: &SpaceTimeField,
    params: &PhysicalParams,
    init: &InitialData,
    grid: &Grid,
    tgrid: &TimeGrid,
    spec: &PotentialSpec,
    newton_cfg: &NewtonConfig,
) -> Result<StateTrajectory> {
    params.validate()?;
    init.validate(grid, spec)?;
    if !u.conforms(grid, tgrid) || !f.conforms(grid, tgrid) {
        return Err(CoreError::Conformance {
            expected: grid.node_count(),
            got: u.slice(0).len(),
        });
    }
    if let PotentialVariant::Logarithmic { .. } = spec.variant() {
        let report = validate_compatibility(spec, &init.phi0, f, params.gamma, grid)?;
        if !report.pass {
            return Err(CoreError::Compatibility(format!(
                "data compatibility failed: {:?}",
                report
                    .entries
                    .iter()
                    .filter(|e| !e.pass)
                    .map(|e| format!("{} = {}", e.name, e.value))
                    .collect::<Vec<_>>()
            )));
        }
    }

    let m = grid.node_count();
    let nt = tgrid.nt();
    let tau = tgrid.tau();
    let co = StepCoefficients {
        tau,
        gamma: params.gamma,
        b: params.b,
        lam: params.lambda,
        kappa_eff: params.kappa1 + tau * params.kappa2,
    };
    let mut solver = CoupledStepSolver::new(grid, newton_cfg.linear_solver, newton_cfg.linear_tol);

    // Initial chemical potential μ₀ = -Δφ₀ + F'(φ₀) + a - b w₁; used as the
    // slice-0 value and the first warm start.
    let lap_phi0 = laplacian_neumann(&init.phi0, grid)?;
    let mut mu0 = vec![0.0; m];
    for i in 0..m {
        let r = init.phi0.values()[i];
        mu0[i] = -lap_phi0.values()[i] + spec.beta(r)? + spec.pi(r) + params.a
            - params.b * init.w1.values()[i];
    }
    let mu0 = Field::from_raw(mu0);
    let mu0_laplacian_norm = norm_l2(&laplacian_neumann(&mu0, grid)?, grid)?;

    let mut phi_slices = vec![init.phi0.clone()];
    let mut mu_slices = vec![mu0.clone()];
    let mut w_slices = vec![init.w0.clone()];
    let mut v_slices = vec![init.w1.clone()];
    let mut diagnostics = Vec::with_capacity(nt);

    // Stacked unknown [φ; μ; v] with warm start from the previous slice.
    let mut z = vec![0.0; 3 * m];
    z[..m].copy_from_slice(init.phi0.values());
    z[m..2 * m].copy_from_slice(mu0.values());
    z[2 * m..].copy_from_slice(init.w1.values());

    let mut work = StepWorkspace::new(m);

    for n in 0..nt {
        let phi_n = phi_slices[n].values();
        let v_n = v_slices[n].values();
        laplacian_into(w_slices[n].values(), &mut work.lap_w_n, grid);
        for i in 0..m {
            work.pi_phi_n[i] = spec.pi(phi_n[i]);
        }
        let f_next = f.slice(n + 1).values();
        let u_next = u.slice(n + 1).values();

        let diag = newton_solve_step(
            &mut solver,
            &co,
            params,
            spec,
            newton_cfg,
            grid,
            phi_n,
            v_n,
            f_next,
            u_next,
            &mut z,
            &mut work,
        )
        .map_err(|e| match e {
            CoreError::NewtonDiverged { iters, residual, .. } => {
                CoreError::NewtonDiverged { step: n + 1, iters, residual }
            }
            other => other,
        })?;

        // Separation gate: for the singular potential an accepted state must
        // not touch the clipped region.
        if let PotentialVariant::Logarithmic { .. } = spec.variant() {
            let phi_new = &z[..m];
            let active = phi_new.iter().any(|r| spec.clip_active(*r));
            if active {
                let min = phi_new.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = phi_new.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                return Err(CoreError::SeparationViolation { step: n + 1, min, max });
            }
        }

        phi_slices.push(Field::from_raw(z[..m].to_vec()));
        mu_slices.push(Field::from_raw(z[m..2 * m].to_vec()));
        let v_new = Field::from_raw(z[2 * m..].to_vec());
        let w_new = w_slices[n].axpy(tau, &v_new);
        v_slices.push(v_new);
        w_slices.push(w_new);
        diagnostics.push(diag);
    }

    Ok(StateTrajectory {
        phi: SpaceTimeField::from_slices(phi_slices)?,
        mu: SpaceTimeField::from_slices(mu_slices)?,
        w: SpaceTimeField::from_slices(w_slices)?,
        v: SpaceTimeField::from_slices(v_slices)?,
        diagnostics,
        mu0_laplacian_norm,
    })
}

struct StepWorkspace {
    lap_w_n: Vec<f64>,
    pi_phi_n: Vec<f64>,
    lap: Vec<f64>,
    residual: Vec<f64>,
    residual_try: Vec<f64>,
    delta: Vec<f64>,
    z_try: Vec<f64>,
    d: Vec<f64>,
}

impl StepWorkspace {
    fn new(m: usize) -> Self {
        Self {
            lap_w_n: vec![0.0; m],
            pi_phi_n: vec![0.0; m],
            lap: vec![0.0; m],
            residual: vec![0.0; 3 * m],
            residual_try: vec![0.0; 3 * m],
            delta: vec![0.0; 3 * m],
            z_try: vec![0.0; 3 * m],
            d: vec![0.0; m],
        }
    }
}

/// Residual of the implicit step equations at the stacked state `z`.
#[allow(clippy::too_many_arguments)]
fn step_residual(
    co: &StepCoefficients,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    grid: &Grid,
    phi_n: &[f64],
    v_n: &[f64],
    lap_w_n: &[f64],
    pi_phi_n: &[f64],
    f_next: &[f64],
    u_next: &[f64],
    z: &[f64],
    out: &mut [f64],
    lap: &mut [f64],
    clip_seen: &mut bool,
) {
    let m = phi_n.len();
    let (phi, rest) = z.split_at(m);
    let (mu, v) = rest.split_at(m);
    let inv_tau = 1.0 / co.tau;

    laplacian_into(mu, lap, grid);
    for i in 0..m {
        out[i] = (phi[i] - phi_n[i]) * inv_tau - lap[i] + co.gamma * phi[i] - f_next[i];
    }
    laplacian_into(phi, lap, grid);
    for i in 0..m {
        if spec.clip_active(phi[i]) {
            *clip_seen = true;
        }
        out[m + i] = mu[i] + lap[i] - spec.beta_clipped(phi[i]) - pi_phi_n[i] - params.a
            + co.b * v[i];
    }
    laplacian_into(v, lap, grid);
    for i in 0..m {
        out[2 * m + i] = (v[i] - v_n[i]) * inv_tau - co.kappa_eff * lap[i]
            - params.kappa2 * lap_w_n[i]
            + co.lam * inv_tau * (phi[i] - phi_n[i])
            - u_next[i];
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

#[allow(clippy::too_many_arguments)]
fn newton_solve_step(
    solver: &mut CoupledStepSolver,
    co: &StepCoefficients,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    cfg: &NewtonConfig,
    grid: &Grid,
    phi_n: &[f64],
    v_n: &[f64],
    f_next: &[f64],
    u_next: &[f64],
    z: &mut [f64],
    work: &mut StepWorkspace,
) -> Result<StepDiagnostics> {
    let m = phi_n.len();
    let mut clip_seen = false;
    let mut halvings_total = 0usize;

    step_residual(
        co,
        params,
        spec,
        grid,
        phi_n,
        v_n,
        &work.lap_w_n,
        &work.pi_phi_n,
        f_next,
        u_next,
        z,
        &mut work.residual,
        &mut work.lap,
        &mut clip_seen,
    );
    let mut res_norm = inf_norm(&work.residual);

    for iter in 0..cfg.max_iters {
        if res_norm <= cfg.tol {
            return Ok(StepDiagnostics {
                iterations: iter,
                residual: res_norm,
                halvings: halvings_total,
                clip_seen,
            });
        }
        // Jacobian diagonal from the implicit potential derivative.
        for i in 0..m {
            work.d[i] = spec.beta_prime_clipped(z[i]);
        }
        // Solve J delta = -residual.
        for (dst, r) in work.z_try.iter_mut().zip(&work.residual) {
            *dst = -r;
        }
        work.delta.iter_mut().for_each(|v| *v = 0.0);
        let rhs = work.z_try.clone();
        solver.solve(BlockKind::Forward, co, &work.d, &rhs, &mut work.delta)?;

        // Damped update: halve the step while the residual norm increases.
        let mut step = 1.0;
        let mut halvings = 0usize;
        loop {
            for i in 0..3 * m {
                work.z_try[i] = z[i] + step * work.delta[i];
            }
            step_residual(
                co,
                params,
                spec,
                grid,
                phi_n,
                v_n,
                &work.lap_w_n,
                &work.pi_phi_n,
                f_next,
                u_next,
                &work.z_try,
                &mut work.residual_try,
                &mut work.lap,
                &mut clip_seen,
            );
            let try_norm = inf_norm(&work.residual_try);
            if try_norm < res_norm || halvings >= MAX_NEWTON_HALVINGS {
                z.copy_from_slice(&work.z_try);
                std::mem::swap(&mut work.residual, &mut work.residual_try);
                res_norm = try_norm;
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        halvings_total += halvings;
    }

    if res_norm <= cfg.tol {
        Ok(StepDiagnostics {
            iterations: cfg.max_iters,
            residual: res_norm,
            halvings: halvings_total,
            clip_seen,
        })
    } else {
        Err(CoreError::NewtonDiverged { step: 0, iters: cfg.max_iters, residual: res_norm })
    }
}

/// Residual norms of the discrete equations, recomputed independently of the
/// Newton solve, per step and per equation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Rows indexed by step `n = 1..=nt`; columns are the phase equation,
    /// chemical potential equation, energy balance, and `w`-update identity.
    pub per_step: Vec<[f64; 4]>,
    pub max: [f64; 4],
}

/// Recompute the per-step residuals of a trajectory against inputs.
#[allow(clippy::too_many_arguments)]
pub fn residual_report(
    traj: &StateTrajectory,
    u: &SpaceTimeField,
    f: &SpaceTimeField,
    params: &PhysicalParams,
    grid: &Grid,
    tgrid: &TimeGrid,
    spec: &PotentialSpec,
) -> Result<ResidualReport> {
    let m = grid.node_count();
    let nt = tgrid.nt();
    let tau = tgrid.tau();
    let co = StepCoefficients {
        tau,
        gamma: params.gamma,
        b: params.b,
        lam: params.lambda,
        kappa_eff: params.kappa1 + tau * params.kappa2,
    };
    let mut per_step = Vec::with_capacity(nt);
    let mut max = [0.0f64; 4];
    let mut lap = vec![0.0; m];
    let mut lap_w_n = vec![0.0; m];
    let mut out = vec![0.0; 3 * m];
    let mut z = vec![0.0; 3 * m];
    let mut pi_phi_n = vec![0.0; m];
    for n in 0..nt {
        let phi_n = traj.phi.slice(n).values();
        for i in 0..m {
            pi_phi_n[i] = spec.pi(phi_n[i]);
        }
        laplacian_into(traj.w.slice(n).values(), &mut lap_w_n, grid);
        z[..m].copy_from_slice(traj.phi.slice(n + 1).values());
        z[m..2 * m].copy_from_slice(traj.mu.slice(n + 1).values());
        z[2 * m..].copy_from_slice(traj.v.slice(n + 1).values());
        let mut clip = false;
        step_residual(
            &co,
            params,
            spec,
            grid,
            phi_n,
            traj.v.slice(n).values(),
            &lap_w_n,
            &pi_phi_n,
            f.slice(n + 1).values(),
            u.slice(n + 1).values(),
            &z,
            &mut out,
            &mut lap,
            &mut clip,
        );
        let r1 = inf_norm(&out[..m]);
        let r2 = inf_norm(&out[m..2 * m]);
        let r3 = inf_norm(&out[2 * m..]);
        let w_pred = traj.w.slice(n).axpy(tau, traj.v.slice(n + 1));
        let r4 = w_pred.sub(traj.w.slice(n + 1)).norm_inf();
        let row = [r1, r2, r3, r4];
        for k in 0..4 {
            max[k] = max[k].max(row[k]);
        }
        per_step.push(row);
    }
    Ok(ResidualReport { per_step, max })
}
