//! Spectral gap, regularity interval and the contraction constants of the
//! Cordes scheme.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calculus::{center, grad_norm, inner, ScalarField};
use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::serde_util::finite_or_null;
use crate::solve::poisson::PoissonSolver;

/// Which curvature correction multiplies `α_p` in the contraction bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BochnerFactor {
    /// `1 + K⁻/λ₁`, obtained from the improved Bochner inequality with the
    /// spectral Poincaré inequality `λ₁ ∫|∇u|² ≤ ∫(Δu)²`.
    #[default]
    InverseGap,
    /// `1 + K⁻λ₁`, the product form.
    ProductGap,
}

impl BochnerFactor {
    pub fn value(self, lambda1: f64, k_minus: f64) -> f64 {
        match self {
            BochnerFactor::InverseGap => 1.0 + k_minus / lambda1,
            BochnerFactor::ProductGap => 1.0 + k_minus * lambda1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryConstants {
    pub lambda1: f64,
    pub k_minus: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub n_dim: f64,
    pub delta_x: f64,
    pub p_lo: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub p_hi: f64,
    pub bochner_factor: BochnerFactor,
}

impl GeometryConstants {
    pub fn compute(domain: &Domain, tol: f64, factor: BochnerFactor) -> Result<Self> {
        let lambda1 = lambda1(domain, tol)?;
        let k_minus = domain.k_minus();
        let delta_x = delta_x(lambda1, k_minus);
        let (p_lo, p_hi) = regularity_interval(domain.n_dim, delta_x)?;
        Ok(GeometryConstants { lambda1, k_minus, n_dim: domain.n_dim, delta_x, p_lo, p_hi, bochner_factor: factor })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.p_lo < p && p < self.p_hi
    }

    pub fn contraction_bound(&self, p: f64) -> f64 {
        contraction_bound(p, self.n_dim, self.lambda1, self.k_minus, self.bochner_factor)
    }
}

/// Smallest nonzero eigenvalue of `-Δ` by inverse iteration on zero-mean fields.
pub fn lambda1(domain: &Domain, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance {tol} must be positive")));
    }
    let solver = PoissonSolver::new(domain);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a3b);
    let x0: Vec<f64> = (0..domain.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut x = center(domain, &x0);
    let rayleigh = |x: &ScalarField| grad_norm(domain, x, 2.0).powi(2) / inner(domain, x, x);
    let mut lam = rayleigh(&x);
    let ptol = (tol * 1e-2).clamp(1e-14, 1e-10);
    for _ in 0..2000 {
        let y = solver.solve(&x, ptol)?;
        let nrm = inner(domain, &y, &y).sqrt();
        x = y.scaled(1.0 / nrm);
        let next = rayleigh(&x);
        if (next - lam).abs() <= tol * next {
            return Ok(next);
        }
        lam = next;
    }
    Err(Error::IterationCap { what: "inverse iteration", iterations: 2000, last: lam })
}

/// `δ_X = λ₁K⁻ / (1 + λ₁K⁻)`.
pub fn delta_x(lambda1: f64, k_minus: f64) -> f64 {
    lambda1 * k_minus / (1.0 + lambda1 * k_minus)
}

/// The open interval of exponents for which the scheme contracts.
pub fn regularity_interval(n_dim: f64, delta: f64) -> Result<(f64, f64)> {
    if !(n_dim >= 2.0) {
        return Err(Error::Parameter(format!("dimension bound {n_dim} must be at least 2")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Parameter(format!("defect {delta} must lie in [0, 1)")));
    }
    let s = (1.0 - delta).sqrt();
    if n_dim == 2.0 && delta == 0.0 {
        Ok((1.0, f64::INFINITY))
    } else if n_dim.is_infinite() {
        Ok((2.0 - s, 2.0 + s))
    } else {
        Ok((2.0 - s, 2.0 + s * (n_dim - delta) / (n_dim - 2.0 + delta)))
    }
}

/// Exact upper threshold `p̄` solving `α_p = 1 - δ` for finite `N > 2` or `δ > 0`.
pub fn p_bar(n_dim: f64, delta: f64) -> f64 {
    let s = (1.0 - delta).sqrt();
    if n_dim.is_infinite() {
        return 2.0 + s;
    }
    let nm1 = n_dim - 1.0;
    2.0 + s * (s + (nm1 * nm1 + delta * nm1).sqrt()) / (n_dim - 2.0 + delta)
}

/// Cordes constant `α_p`.
pub fn alpha_p(p: f64, n_dim: f64) -> f64 {
    let t = p - 2.0;
    if p < 2.0 || n_dim.is_infinite() {
        t * t
    } else {
        t * t * (n_dim - 1.0) / (n_dim + 2.0 * t + t * t)
    }
}

/// Theoretical contraction factor of the inner map in the `||Δ·||₂` norm.
pub fn contraction_bound(p: f64, n_dim: f64, lambda1: f64, k_minus: f64, factor: BochnerFactor) -> f64 {
    (alpha_p(p, n_dim) * factor.value(lambda1, k_minus)).sqrt()
}
