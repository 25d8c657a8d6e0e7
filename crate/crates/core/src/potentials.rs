//! Double-well potentials `F = β̂ + π̂` and the assumption checks attached
//! to them.
//!
//! Two variants are provided:
//!
//! * the regular quartic `F(r) = (r² - 1)² / 4`, split as `β̂ = r⁴/4`
//!   (convex) and `π̂ = 1/4 - r²/2`, so `β = r³` and `π = -r`;
//! * the logarithmic well
//!   `F(r) = (1+r) ln(1+r) + (1-r) ln(1-r) - c₁ r²` on `(-1, 1)` with
//!   `c₁ > 1`, split as entropy plus `π̂ = -c₁ r²`, so
//!   `β = ln((1+r)/(1-r))` and `π = -2 c₁ r`.
//!
//! The split feeds the convex-splitting time discretization (`β` implicit,
//! `π` explicit). Clipped evaluation is a Newton safeguard only: converged
//! states are re-validated unclipped, and an active clip at convergence is a
//! separation failure.

use crate::error::{CoreError, Result};
use crate::geometry::{mean, Field, Grid, SpaceTimeField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PotentialVariant {
    Regular,
    /// Logarithmic well with nonconvexity parameter `c1 > 1`.
    Logarithmic { c1: f64 },
}

/// A double-well potential together with its domain and the clipping margin
/// used inside Newton iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    variant: PotentialVariant,
    delta_clip: f64,
}

pub const DEFAULT_DELTA_CLIP: f64 = 1e-9;
pub const DEFAULT_C1: f64 = 2.0;

impl PotentialSpec {
    pub fn regular() -> Self {
        Self { variant: PotentialVariant::Regular, delta_clip: DEFAULT_DELTA_CLIP }
    }

    pub fn logarithmic(c1: f64) -> Result<Self> {
        Self::new(PotentialVariant::Logarithmic { c1 }, DEFAULT_DELTA_CLIP)
    }

    pub fn new(variant: PotentialVariant, delta_clip: f64) -> Result<Self> {
        if let PotentialVariant::Logarithmic { c1 } = variant {
            if !(c1 > 1.0) {
                return Err(CoreError::InvalidParameter(format!(
                    "logarithmic potential needs c1 > 1, got {c1}"
                )));
            }
        }
        if !(delta_clip > 0.0 && delta_clip < 0.5) {
            return Err(CoreError::InvalidParameter(format!(
                "delta_clip must lie in (0, 0.5), got {delta_clip}"
            )));
        }
        Ok(Self { variant, delta_clip })
    }

    pub fn variant(&self) -> PotentialVariant {
        self.variant
    }

    pub fn delta_clip(&self) -> f64 {
        self.delta_clip
    }

    /// Domain `D(β) = (r_-, r_+)` of the monotone part.
    pub fn domain(&self) -> (f64, f64) {
        match self.variant {
            PotentialVariant::Regular => (f64::NEG_INFINITY, f64::INFINITY),
            PotentialVariant::Logarithmic { .. } => (-1.0, 1.0),
        }
    }

    fn requires_interior(&self, r: f64, order: u8) -> Result<()> {
        if let PotentialVariant::Logarithmic { .. } = self.variant {
            if order >= 1 && r.abs() >= 1.0 {
                return Err(CoreError::PotentialDomain { r });
            }
        }
        Ok(())
    }

    /// `F`, `F'`, `F''` or `F'''` at `r` (order 0..=3), closed form.
    ///
    /// Logarithmic at order 0 uses the convention `0 ln 0 = 0` at `r = ±1`
    /// and returns `+∞` outside `[-1, 1]`; orders ≥ 1 require `|r| < 1`.
    pub fn f_eval(&self, r: f64, order: u8) -> Result<f64> {
        assert!(order <= 3, "derivative order must be 0..=3");
        self.requires_interior(r, order)?;
        Ok(match self.variant {
            PotentialVariant::Regular => match order {
                0 => {
                    let s = r * r - 1.0;
                    0.25 * s * s
                }
                1 => r * r * r - r,
                2 => 3.0 * r * r - 1.0,
                _ => 6.0 * r,
            },
            PotentialVariant::Logarithmic { c1 } => match order {
                0 => {
                    if r.abs() > 1.0 {
                        f64::INFINITY
                    } else {
                        xlnx(1.0 + r) + xlnx(1.0 - r) - c1 * r * r
                    }
                }
                1 => (1.0 + r).ln() - (1.0 - r).ln() - 2.0 * c1 * r,
                2 => 2.0 / (1.0 - r * r) - 2.0 * c1,
                _ => {
                    let d = 1.0 - r * r;
                    4.0 * r / (d * d)
                }
            },
        })
    }

    /// Argument clamped to `(r_- + δ, r_+ - δ)` for the logarithmic variant;
    /// identity for the regular one.
    pub fn clip(&self, r: f64) -> f64 {
        match self.variant {
            PotentialVariant::Regular => r,
            PotentialVariant::Logarithmic { .. } => {
                r.clamp(-1.0 + self.delta_clip, 1.0 - self.delta_clip)
            }
        }
    }

    /// Whether `clip` would move the argument.
    pub fn clip_active(&self, r: f64) -> bool {
        self.clip(r) != r
    }

    /// `F` and derivatives at the clipped argument; total on all finite
    /// inputs.
    pub fn f_eval_clipped(&self, r: f64, order: u8) -> f64 {
        self.f_eval(self.clip(r), order)
            .expect("clipped argument is interior by construction")
    }

    /// Monotone part `β = β̂'`.
    pub fn beta(&self, r: f64) -> Result<f64> {
        self.requires_interior(r, 1)?;
        Ok(match self.variant {
            PotentialVariant::Regular => r * r * r,
            PotentialVariant::Logarithmic { .. } => (1.0 + r).ln() - (1.0 - r).ln(),
        })
    }

    /// `β'` (second derivative of the convex part); positive on the domain.
    pub fn beta_prime(&self, r: f64) -> Result<f64> {
        self.requires_interior(r, 1)?;
        Ok(match self.variant {
            PotentialVariant::Regular => 3.0 * r * r,
            PotentialVariant::Logarithmic { .. } => 2.0 / (1.0 - r * r),
        })
    }

    pub fn beta_clipped(&self, r: f64) -> f64 {
        self.beta(self.clip(r)).expect("clipped argument is interior")
    }

    pub fn beta_prime_clipped(&self, r: f64) -> f64 {
        self.beta_prime(self.clip(r)).expect("clipped argument is interior")
    }

    /// Lipschitz perturbation `π = π̂'`.
    pub fn pi(&self, r: f64) -> f64 {
        match self.variant {
            PotentialVariant::Regular => -r,
            PotentialVariant::Logarithmic { c1 } => -2.0 * c1 * r,
        }
    }

    pub fn pi_prime(&self, _r: f64) -> f64 {
        match self.variant {
            PotentialVariant::Regular => -1.0,
            PotentialVariant::Logarithmic { c1 } => -2.0 * c1,
        }
    }

    /// Concave part `π̂` of the split.
    pub fn pi_hat(&self, r: f64) -> f64 {
        match self.variant {
            PotentialVariant::Regular => 0.25 - 0.5 * r * r,
            PotentialVariant::Logarithmic { c1 } => -c1 * r * r,
        }
    }
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// One line of a [`CompatibilityReport`]: a scalar that assumption (A3)
/// requires to lie in the open interval `(r_-, r_+)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatibilityEntry {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

/// Result of the data-compatibility check for the initial datum and source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub entries: Vec<CompatibilityEntry>,
    pub rho: f64,
    pub pass: bool,
}

/// Check the compatibility condition on `φ₀` and `f`: with
/// `ρ = ‖f‖_∞ / γ`, the four quantities `inf φ₀`, `sup φ₀`,
/// `-ρ - (φ̄₀)⁻`, `ρ + (φ̄₀)⁺` must lie strictly inside `D(β)`.
pub fn validate_compatibility(
    spec: &PotentialSpec,
    phi0: &Field,
    f: &SpaceTimeField,
    gamma: f64,
    grid: &Grid,
) -> Result<CompatibilityReport> {
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let (lo, hi) = spec.domain();
    let rho = f.norm_inf() / gamma;
    let phi_bar = mean(phi0, grid)?;
    let quantities = [
        ("inf phi0", phi0.min()),
        ("sup phi0", phi0.max()),
        ("-rho - (mean phi0)^-", -rho - (-phi_bar).max(0.0)),
        ("rho + (mean phi0)^+", rho + phi_bar.max(0.0)),
    ];
    let entries: Vec<CompatibilityEntry> = quantities
        .iter()
        .map(|(name, value)| CompatibilityEntry {
            name: (*name).into(),
            value: *value,
            pass: *value > lo && *value < hi,
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    Ok(CompatibilityReport { entries, rho, pass })
}

/// Separation margins of a trajectory: global extrema of `φ` over `Q` and
/// their distances to the domain endpoints. Positive margins on both sides
/// certify discrete strict separation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeparationReport {
    pub min: f64,
    pub max: f64,
    pub margin_lo: f64,
    pub margin_hi: f64,
}

pub fn separation_report(phi: &SpaceTimeField, spec: &PotentialSpec) -> SeparationReport {
    let (lo, hi) = spec.domain();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for s in phi.slices() {
        min = min.min(s.min());
        max = max.max(s.max());
    }
    SeparationReport { min, max, margin_lo: min - lo, margin_hi: hi - max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TimeGrid;

    #[test]
    fn regular_printed_values() {
        let p = PotentialSpec::regular();
        assert_eq!(p.f_eval(0.0, 0).unwrap(), 0.25);
        assert_eq!(p.f_eval(1.0, 1).unwrap(), 0.0);
        assert_eq!(p.f_eval(0.0, 2).unwrap(), -1.0);
        assert_eq!(p.f_eval(1.5, 1).unwrap(), 1.875);
    }

    #[test]
    fn logarithmic_printed_values() {
        let p = PotentialSpec::logarithmic(2.0).unwrap();
        assert_eq!(p.f_eval(0.0, 1).unwrap(), 0.0);
        // F(1) = 2 ln 2 - c1 with the 0 ln 0 convention.
        let expect = 2.0 * (2.0f64).ln() - 2.0;
        assert!((p.f_eval(1.0, 0).unwrap() - expect).abs() < 1e-15);
        assert_eq!(p.f_eval(2.0, 0).unwrap(), f64::INFINITY);
        assert!(p.f_eval(1.0, 1).is_err());
        assert!(p.f_eval(-1.0, 2).is_err());
    }

    #[test]
    fn derivative_formulas_log() {
        let p = PotentialSpec::logarithmic(2.0).unwrap();
        let r = 0.4;
        let c1 = 2.0;
        assert!((p.f_eval(r, 1).unwrap() - (((1.0 + r) / (1.0 - r)) as f64).ln() + 2.0 * c1 * r).abs() < 1e-14);
        assert!((p.f_eval(r, 2).unwrap() - (2.0 / (1.0 - r * r) - 2.0 * c1)).abs() < 1e-14);
        assert!((p.f_eval(r, 3).unwrap() - 4.0 * r / ((1.0 - r * r) * (1.0 - r * r))).abs() < 1e-14);
    }

    #[test]
    fn clipped_evaluation() {
        let log = PotentialSpec::new(
            PotentialVariant::Logarithmic { c1: 2.0 },
            1e-6,
        )
        .unwrap();
        let expect = log.f_eval(1.0 - 1e-6, 1).unwrap();
        assert_eq!(log.f_eval_clipped(1.5, 1), expect);
        assert!(log.clip_active(1.5));
        assert!(!log.clip_active(0.3));
        assert_eq!(log.f_eval_clipped(0.3, 1), log.f_eval(0.3, 1).unwrap());

        let reg = PotentialSpec::regular();
        assert_eq!(reg.f_eval_clipped(1.5, 1), 1.875);
    }

    #[test]
    fn split_is_consistent() {
        // beta + pi reproduces F' and beta' + pi' reproduces F'' for both
        // variants; beta_hat(0) = F(0) - pi_hat(0) = 0.
        for p in [PotentialSpec::regular(), PotentialSpec::logarithmic(2.0).unwrap()] {
            for i in 0..40 {
                let r = -0.95 + 0.048 * i as f64;
                let f1 = p.f_eval(r, 1).unwrap();
                assert!((p.beta(r).unwrap() + p.pi(r) - f1).abs() <= 1e-12 * f1.abs().max(1.0));
                let f2 = p.f_eval(r, 2).unwrap();
                assert!(
                    (p.beta_prime(r).unwrap() + p.pi_prime(r) - f2).abs()
                        <= 1e-12 * f2.abs().max(1.0)
                );
            }
            let beta_hat_zero = p.f_eval(0.0, 0).unwrap() - p.pi_hat(0.0);
            assert_eq!(beta_hat_zero, 0.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for p in [PotentialSpec::regular(), PotentialSpec::logarithmic(2.0).unwrap()] {
            for order in 1..=3u8 {
                for i in 0..100 {
                    let r = -0.9 + 1.8 * (i as f64 + 0.5) / 100.0;
                    let fd = (p.f_eval(r + h, order - 1).unwrap()
                        - p.f_eval(r - h, order - 1).unwrap())
                        / (2.0 * h);
                    let exact = p.f_eval(r, order).unwrap();
                    let rel = (fd - exact).abs() / exact.abs().max(1.0);
                    assert!(rel <= 1e-6, "order {order} at r = {r}: rel = {rel}");
                }
            }
        }
    }

    #[test]
    fn regular_lipschitz_on_interval() {
        let p = PotentialSpec::regular();
        let n = 200;
        for i in 0..n {
            for j in 0..n {
                let x = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
                let y = -2.0 + 4.0 * j as f64 / (n - 1) as f64;
                let lhs = (p.f_eval(x, 1).unwrap() - p.f_eval(y, 1).unwrap()).abs();
                assert!(lhs <= 11.0 * (x - y).abs() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn log_second_derivative_lower_bound() {
        let c1 = 2.0;
        let p = PotentialSpec::logarithmic(c1).unwrap();
        for i in 0..500 {
            let r = -0.999 + 1.998 * i as f64 / 499.0;
            assert!(p.f_eval(r, 2).unwrap() >= -2.0 * c1);
        }
    }

    #[test]
    fn compatibility_report() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 4).unwrap();

        // Regular: domain is all of R, always passes.
        let rep = validate_compatibility(
            &PotentialSpec::regular(),
            &g.constant_field(5.0),
            &SpaceTimeField::constant(&g, &tg, 100.0),
            1.0,
            &g,
        )
        .unwrap();
        assert!(rep.pass);

        // Logarithmic with zero data: all four quantities are 0, pass.
        let log = PotentialSpec::logarithmic(2.0).unwrap();
        let rep = validate_compatibility(
            &log,
            &g.zero_field(),
            &SpaceTimeField::zero(&g, &tg),
            1.0,
            &g,
        )
        .unwrap();
        assert!(rep.pass);
        assert_eq!(rep.rho, 0.0);

        // rho = 2 > 1 pushes the bracket quantities outside (-1, 1).
        let rep = validate_compatibility(
            &log,
            &g.zero_field(),
            &SpaceTimeField::constant(&g, &tg, 2.0),
            1.0,
            &g,
        )
        .unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.rho, 2.0);
    }

    #[test]
    fn separation_margins() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let tg = TimeGrid::new(1.0, 4).unwrap();
        let log = PotentialSpec::logarithmic(2.0).unwrap();

        let zero = SpaceTimeField::zero(&g, &tg);
        let rep = separation_report(&zero, &log);
        assert_eq!(rep.margin_lo, 1.0);
        assert_eq!(rep.margin_hi, 1.0);

        let mut phi = zero.clone();
        phi.slice_mut(2).values_mut()[3] = 0.97;
        let rep = separation_report(&phi, &log);
        assert!((rep.margin_hi - 0.03).abs() < 1e-15);
        assert_eq!(rep.max, 0.97);
    }
}
