//! Optimal heat-source control for a nonisothermal Cahn-Hilliard system
//! with source term.
//!
//! The state system couples a Cahn-Hilliard equation with mass source to the
//! internal-energy balance written for the thermal displacement `w` (a time
//! primitive of the temperature) under a Green-Naghdi heat flux:
//!
//! ```text
//! ∂t φ - Δμ + γ φ = f
//! μ = -Δφ + F'(φ) + a - b ∂t w
//! ∂t² w - Δ(κ₁ ∂t w + κ₂ w) + λ ∂t φ = u
//! ```
//!
//! with homogeneous Neumann boundary conditions and a double-well potential
//! `F` (quartic or logarithmic). The distributed heat source `u` is the
//! control; a quadratic tracking functional with box constraints
//! `u_min ≤ u ≤ u_max` defines the optimization problem.
//!
//! The crate provides:
//!
//! * [`geometry`] - cell-centered grids, the mirrored-ghost Neumann
//!   Laplacian, the inverse Neumann operator and dual norm, time
//!   convolutions;
//! * [`potentials`] - the quartic and logarithmic double wells with their
//!   convex/concave splits and assumption checks;
//! * [`state`] - the convex-split implicit Euler solver for the state system;
//! * [`sensitivity`] - linearized (forward) and adjoint (backward) solvers,
//!   in exact-transpose or continuous-adjoint discretization;
//! * [`optimizer`] - reduced cost/gradient, box projection, and projected
//!   gradient descent with Armijo backtracking;
//! * [`verification`] - independent oracles: finite-difference gradient
//!   checks, duality-gap checks, linearization remainder order, mass
//!   balance, separation, and manufactured-solution convergence;
//! * [`config`], [`output`] - run configuration, persistence, plot data.

pub mod blocksys;
pub mod config;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod linalg;
pub mod optimizer;
pub mod output;
pub mod potentials;
pub mod problem;
pub mod sensitivity;
pub mod state;
pub mod util;
pub mod verification;

pub use error::{CoreError, Result};
pub use geometry::{Field, Grid, SpaceTimeField, TimeGrid};
pub use potentials::{PotentialSpec, PotentialVariant};


