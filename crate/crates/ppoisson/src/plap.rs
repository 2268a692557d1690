//! Nonlinear operators: flux, regularized p-Laplacian, developed operator,
//! frozen linearization and the Cordes weight `θ`.

use serde::Serialize;

use crate::calculus::{divergence, dot, gradient, hessian, laplacian, norm, quad_form, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::serde_util::finite_or_null;

/// Exponent `p`, regularization `ε` and gradient truncation level `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegParams {
    pub p: f64,
    pub eps: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub m: f64,
}

impl RegParams {
    pub fn new(p: f64, eps: f64, m: f64) -> Self {
        RegParams { p, eps, m }
    }

    /// The unregularized operator: `ε = 0`, `M = ∞`.
    pub fn exact(p: f64) -> Self {
        RegParams { p, eps: 0.0, m: f64::INFINITY }
    }

    /// `((|g| ∧ M)² + ε)^{(p-2)/2}` from `|g|²`. Zero where the base vanishes,
    /// which only happens when the gradient itself is zero.
    #[inline]
    pub fn coefficient(&self, g2: f64) -> f64 {
        if self.p == 2.0 {
            return 1.0;
        }
        let base = g2.min(self.m * self.m) + self.eps;
        if base == 0.0 {
            0.0
        } else {
            base.powf(0.5 * (self.p - 2.0))
        }
    }

    fn require_eps(&self, what: &str) -> Result<()> {
        if self.eps > 0.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("{what} needs eps > 0, got {}", self.eps)))
        }
    }
}

/// Pointwise coefficients `((|∇u| ∧ M)² + ε)^{(p-2)/2}` of a gradient field.
pub fn coefficients(grad: &VectorField, rp: &RegParams) -> Vec<f64> {
    grad.magnitude_sq().into_iter().map(|g2| rp.coefficient(g2)).collect()
}

pub fn flux(domain: &Domain, u: &[f64], rp: &RegParams) -> VectorField {
    let g = gradient(domain, u);
    let c = coefficients(&g, rp);
    g.scale_pointwise(&c)
}

/// `div(((|∇u| ∧ M)² + ε)^{(p-2)/2} ∇u)`.
pub fn p_laplacian(domain: &Domain, u: &[f64], rp: &RegParams) -> ScalarField {
    divergence(domain, &flux(domain, u, rp))
}

/// `D_{p,ε}u = Δu + (p-2) Δ_∞u / (|∇u|² + ε)`.
pub fn developed(domain: &Domain, u: &[f64], rp: &RegParams) -> Result<ScalarField> {
    let g = gradient(domain, u);
    frozen_l(domain, u, &g, rp)
}

/// `𝓛_{v,ε}u = Δu + (p-2) Hu(v,v) / (|v|² + ε)`.
pub fn frozen_l(domain: &Domain, u: &[f64], v: &VectorField, rp: &RegParams) -> Result<ScalarField> {
    rp.require_eps("the frozen operator")?;
    let hess = hessian(domain, u)?;
    let lap = laplacian(domain, u);
    if rp.p == 2.0 {
        return Ok(lap);
    }
    let d = hess.dim;
    let out = (0..lap.len())
        .map(|x| {
            let vx = v.at(x);
            lap[x] + (rp.p - 2.0) * quad_form(hess.at(x), vx, d) / (dot(vx, vx) + rp.eps)
        })
        .collect();
    Ok(ScalarField(out))
}

/// Cordes weight: 1 for `p < 2` or `N = ∞`, else `(N + g)/(N + g² + 2g)`
/// with `g = (p-2)|v|²/(|v|² + ε)`.
pub fn theta(v: &VectorField, rp: &RegParams, n_dim: f64) -> Result<Vec<f64>> {
    rp.require_eps("theta")?;
    if rp.p < 2.0 || n_dim.is_infinite() {
        return Ok(vec![1.0; v.len()]);
    }
    Ok(v.magnitude_sq()
        .into_iter()
        .map(|v2| {
            let g = (rp.p - 2.0) * v2 / (v2 + rp.eps);
            (n_dim + g) / (n_dim + g * g + 2.0 * g)
        })
        .collect())
}

/// Infimum of `θ` over all gradients for `p ≥ 2`, finite `N`.
pub fn theta_lower_bound(p: f64, n_dim: f64) -> f64 {
    if p < 2.0 || n_dim.is_infinite() {
        return 1.0;
    }
    let t = p - 2.0;
    (n_dim + t) / (n_dim + t * t + 2.0 * t)
}

/// `|v|^{p-2} v`, zero at `v = 0`.
fn power_vector(v: &[f64], p: f64) -> Vec<f64> {
    let n = norm(v);
    let c = if n == 0.0 { 0.0 } else { n.powf(p - 2.0) };
    v.iter().map(|x| c * x).collect()
}

/// Both sides of the monotonicity inequality at a single point, without the constant:
/// `⟨|v|^{p-2}v - |w|^{p-2}w, v - w⟩` and `|v-w|^p` (`p ≥ 2`) or
/// `|v-w|²/(|v|+|w|)^{2-p}` (`p < 2`, with `0/0 = 0`).
pub fn monotonicity_terms(v: &[f64], w: &[f64], p: f64) -> (f64, f64) {
    let a = power_vector(v, p);
    let b = power_vector(w, p);
    let diff: Vec<f64> = v.iter().zip(w).map(|(x, y)| x - y).collect();
    let lhs = a.iter().zip(&b).zip(&diff).map(|((x, y), d)| (x - y) * d).sum();
    let dn = norm(&diff);
    let rhs = if p >= 2.0 {
        dn.powf(p)
    } else {
        let s = norm(v) + norm(w);
        if s == 0.0 {
            0.0
        } else {
            dn * dn / s.powf(2.0 - p)
        }
    };
    (lhs, rhs)
}

/// Pointwise monotonicity sides for two vector fields.
pub fn monotonicity_pair(v: &VectorField, w: &VectorField, p: f64) -> (ScalarField, ScalarField) {
    let (l, r): (Vec<f64>, Vec<f64>) = (0..v.len()).map(|s| monotonicity_terms(v.at(s), w.at(s), p)).unzip();
    (ScalarField(l), ScalarField(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{integrate, lp_norm};
    use std::f64::consts::PI;

    fn sine_circle(n: usize) -> (Domain, ScalarField) {
        let d = Domain::circle(n, 1.0).unwrap();
        let u = ScalarField::from_fn(&d, |x| (2.0 * PI * x[0]).sin());
        (d, u)
    }

    #[test]
    fn p2_flux_is_gradient_and_plap_is_laplacian() {
        let (d, u) = sine_circle(64);
        let rp = RegParams::new(2.0, 0.3, 0.5);
        assert_eq!(flux(&d, &u, &rp), gradient(&d, &u));
        assert_eq!(p_laplacian(&d, &u, &rp), laplacian(&d, &u));
        assert_eq!(developed(&d, &u, &rp).unwrap(), laplacian(&d, &u));
    }

    #[test]
    fn zero_field_has_zero_flux_even_when_singular() {
        let d = Domain::torus(2, 8, 1.0).unwrap();
        let f = flux(&d, &[0.0; 64], &RegParams::exact(1.3));
        assert!(f.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn flux_magnitude_p4() {
        // u = 2x on a single forward difference gives |∇u| = 2 at vertex 0
        let d = Domain::circle(8, 8.0).unwrap();
        let mut u = vec![0.0; 8];
        u[1] = 2.0;
        let f = flux(&d, &u, &RegParams::exact(4.0));
        assert_eq!(f.data[0], 8.0);
    }

    #[test]
    fn p_laplacian_integrates_to_zero_and_ignores_constants() {
        let d = Domain::torus(2, 16, 1.0).unwrap();
        let u = ScalarField::from_fn(&d, |x| (2.0 * PI * x[0]).cos() + (4.0 * PI * x[1]).sin() * 0.3);
        let rp = RegParams::new(3.3, 1e-4, 2.0);
        let l = p_laplacian(&d, &u, &rp);
        assert!(integrate(&d, &l).abs() < 1e-12 * lp_norm(&d, &l, 1.0));
        let shifted = p_laplacian(&d, &u.shifted(-4.0), &rp);
        let diff = l.sub(&shifted).max_abs();
        assert!(diff < 1e-9 * l.max_abs(), "{diff}");
    }

    #[test]
    fn p_laplacian_of_sine_converges() {
        // (|u'|^{p-2} u')' for u = sin(2πx), p = 3: derivative of 2π|2π cos| 2π cos
        let p = 3.0;
        let mut prev = f64::INFINITY;
        for n in [128, 256, 512] {
            let (d, u) = sine_circle(n);
            let l = p_laplacian(&d, &u, &RegParams::exact(p));
            let k = 2.0 * PI;
            let exact = ScalarField::from_fn(&d, |x| {
                let c = (k * x[0]).cos();
                -(p - 1.0) * k.powf(p) * c.abs().powf(p - 2.0) * (k * x[0]).sin()
            });
            let err = l.sub(&exact).max_abs();
            assert!(err < 0.6 * prev, "n={n}: {err} vs {prev}");
            prev = err;
        }
    }

    #[test]
    fn develop_identity_converges_under_refinement() {
        let rp = RegParams::new(3.0, 1e-2, f64::INFINITY);
        let mut errs = Vec::new();
        for n in [64, 128, 256, 512] {
            let (d, u) = sine_circle(n);
            let lhs = p_laplacian(&d, &u, &rp);
            let g = gradient(&d, &u);
            let c = coefficients(&g, &rp);
            let dev = developed(&d, &u, &rp).unwrap();
            let err = (0..n).fold(0.0f64, |a, x| a.max((lhs[x] - c[x] * dev[x]).abs()));
            errs.push(err);
        }
        for w in errs.windows(2) {
            assert!(w[1] < 0.6 * w[0], "{errs:?}");
        }
    }

    #[test]
    fn frozen_operator_special_cases() {
        let d = Domain::torus(2, 16, 1.0).unwrap();
        let u = ScalarField::from_fn(&d, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        let rp = RegParams::new(2.7, 1e-3, f64::INFINITY);
        let g = gradient(&d, &u);
        assert_eq!(frozen_l(&d, &u, &g, &rp).unwrap(), developed(&d, &u, &rp).unwrap());
        let zero = VectorField::zeros_like(&d);
        assert_eq!(frozen_l(&d, &u, &zero, &rp).unwrap(), laplacian(&d, &u));
        assert!(frozen_l(&d, &u, &g, &RegParams::exact(2.7)).is_err());
    }

    #[test]
    fn theta_cases() {
        let d = Domain::torus(2, 4, 1.0).unwrap();
        let mut v = VectorField::zeros_like(&d);
        v.data.iter_mut().for_each(|x| *x = 100.0);
        let small = RegParams::new(1.5, 1e-8, f64::INFINITY);
        assert!(theta(&v, &small, 4.0).unwrap().iter().all(|&t| t == 1.0));
        let p3 = RegParams::new(3.0, 1e-12, f64::INFINITY);
        assert!(theta(&v, &p3, 4.0).unwrap().iter().all(|&t| (t - 5.0 / 7.0).abs() < 1e-12));
        assert!(theta(&v, &p3, f64::INFINITY).unwrap().iter().all(|&t| t == 1.0));
        assert!(theta(&v, &RegParams::new(2.0, 1e-3, 1.0), 3.0).unwrap().iter().all(|&t| t == 1.0));
    }

    #[test]
    fn monotonicity_special_cases() {
        let v = [1.0, -2.0];
        let w = [0.5, 0.25];
        let (l, r) = monotonicity_terms(&v, &w, 2.0);
        assert!((l - r).abs() < 1e-15 && (l - 5.3125).abs() < 1e-15);
        assert_eq!(monotonicity_terms(&v, &v, 3.0), (0.0, 0.0));
        assert_eq!(monotonicity_terms(&[0.0, 0.0], &[0.0, 0.0], 1.5), (0.0, 0.0));
    }
}
