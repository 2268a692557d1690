//! Independent oracle: direct minimization of
//! `E(u) = Σ (1/p)|∇u|^p μ + Σ f u m` over zero-mean fields, whose minimizer
//! solves `Δ_p u = f` weakly.
//!
//! Nonlinear conjugate gradients (Polak-Ribière+) preconditioned by the inverse
//! Laplacian. The line search brackets the root of the directional derivative,
//! which is monotone because `E` is convex, and accepts the step only if it
//! also satisfies the Armijo condition.

use crate::calculus::{center, gradient, inner, integrate_support, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::plap::{p_laplacian, RegParams};
use crate::solve::poisson::PoissonSolver;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalOptions {
    /// Stop when the preconditioned gradient norm falls below `tol` times that of `f`.
    pub tol: f64,
    pub max_iter: usize,
    pub poisson_tol: f64,
    /// Stop early after this many iterations without decreasing the gradient norm,
    /// provided it is already within `1e3 * tol`; the same band is accepted at `max_iter`.
    pub stall: usize,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        VariationalOptions { tol: 1e-12, max_iter: 20_000, poisson_tol: 1e-13, stall: 200 }
    }
}

struct Line<'a> {
    domain: &'a Domain,
    gu: &'a VectorField,
    gd: &'a VectorField,
    p: f64,
    f_u: f64,
    f_d: f64,
}

impl Line<'_> {
    /// `(E(u + αd), d/dα E(u + αd))`.
    fn eval(&self, alpha: f64) -> (f64, f64) {
        let k = self.gu.components();
        let n = self.gu.len();
        let mut dens = vec![0.0; n];
        let mut slope = vec![0.0; n];
        for s in 0..n {
            let a = self.gu.at(s);
            let b = self.gd.at(s);
            let mut g2 = 0.0;
            let mut gb = 0.0;
            for i in 0..k {
                let gi = a[i] + alpha * b[i];
                g2 += gi * gi;
                gb += gi * b[i];
            }
            if g2 > 0.0 {
                dens[s] = g2.powf(0.5 * self.p) / self.p;
                slope[s] = g2.powf(0.5 * self.p - 1.0) * gb;
            }
        }
        let e = integrate_support(self.domain, &dens) + self.f_u + alpha * self.f_d;
        let de = integrate_support(self.domain, &slope) + self.f_d;
        (e, de)
    }
}

/// Minimize along `d` from `α = 0`; returns the accepted step.
fn line_search(line: &Line, guess: f64) -> Result<f64> {
    let (e0, d0) = line.eval(0.0);
    if !(d0 < 0.0) {
        return Err(Error::LineSearch(format!("not a descent direction (slope {d0:e})")));
    }
    let mut lo = 0.0;
    let mut d_lo = d0;
    let mut hi = guess;
    let mut d_hi;
    let mut expansions = 0;
    loop {
        d_hi = line.eval(hi).1;
        if d_hi >= 0.0 {
            break;
        }
        lo = hi;
        d_lo = d_hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::LineSearch("energy unbounded along the search direction".into()));
        }
    }
    // Illinois-type regula falsi on the monotone slope
    let mut alpha = hi;
    let mut side = 0;
    for _ in 0..100 {
        alpha = if d_hi > d_lo { lo - d_lo * (hi - lo) / (d_hi - d_lo) } else { 0.5 * (lo + hi) };
        if !(alpha > lo && alpha < hi) {
            alpha = 0.5 * (lo + hi);
        }
        let da = line.eval(alpha).1;
        if da.abs() <= 1e-6 * d0.abs() {
            break;
        }
        if da < 0.0 {
            lo = alpha;
            d_lo = da;
            if side == -1 {
                d_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = alpha;
            d_hi = da;
            if side == 1 {
                d_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let (ea, _) = line.eval(alpha);
    // Armijo, with rounding slack once E no longer resolves the decrease
    let slack = 1e-13 * e0.abs().max(f64::MIN_POSITIVE);
    if ea <= e0 + 1e-4 * alpha * d0 + slack {
        Ok(alpha)
    } else {
        Err(Error::LineSearch(format!("Armijo condition failed at step {alpha:e}")))
    }
}

/// Zero-mean minimizer of `Σ (1/p)|∇u|^p μ + Σ f u m`.
pub fn variational_solve(domain: &Domain, f: &[f64], p: f64, opts: &VariationalOptions) -> Result<ScalarField> {
    variational_solve_from(domain, f, p, None, opts)
}

/// As [`variational_solve`], starting the descent from `initial` when given.
pub fn variational_solve_from(
    domain: &Domain,
    f: &[f64],
    p: f64,
    initial: Option<&[f64]>,
    opts: &VariationalOptions,
) -> Result<ScalarField> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("p = {p} must lie in (1, ∞)")));
    }
    let solver = PoissonSolver::new(domain);
    let nv = domain.num_vertices();
    let f = ScalarField(f.to_vec());
    let mean_f = crate::calculus::mean(domain, &f);
    let rms = (inner(domain, &f, &f) / domain.total_measure()).sqrt();
    if mean_f.abs() > 1e-10 * rms {
        return Err(Error::NonzeroMean { mean: mean_f, norm: rms });
    }
    if rms == 0.0 {
        return Ok(ScalarField::zeros(nv));
    }
    let rp = RegParams::exact(p);
    // preconditioned gradient z = (-Δ)^{-1} g
    let precondition = |g: &[f64]| -> Result<ScalarField> { Ok(solver.solve(&center(domain, g), opts.poisson_tol)?.scaled(-1.0)) };
    let grad_e = |u: &[f64]| -> ScalarField { f.sub(&p_laplacian(domain, u, &rp)) };

    let f_dual = inner(domain, &f, &precondition(&f)?).sqrt();
    let mut u = match initial {
        Some(u0) => center(domain, u0),
        None => ScalarField::zeros(nv),
    };
    let mut g = grad_e(&u);
    let mut z = precondition(&g)?;
    let mut gz = inner(domain, &g, &z);
    let mut d = z.scaled(-1.0);
    let mut alpha: f64 = 1.0;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for _ in 0..opts.max_iter {
        let norm = gz.max(0.0).sqrt();
        if norm <= opts.tol * f_dual {
            return Ok(center(domain, &u));
        }
        if norm < best {
            best = norm;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stall && norm <= 1e3 * opts.tol * f_dual {
                return Ok(center(domain, &u));
            }
        }
        let gu = gradient(domain, &u);
        let gd = gradient(domain, &d);
        let line = Line { domain, gu: &gu, gd: &gd, p, f_u: inner(domain, &f, &u), f_d: inner(domain, &f, &d) };
        alpha = line_search(&line, alpha.max(1e-8))?;
        for i in 0..nv {
            u[i] += alpha * d[i];
        }
        let g_new = grad_e(&u);
        let z_new = precondition(&g_new)?;
        let gz_new = inner(domain, &g_new, &z_new);
        let cross = inner(domain, &g_new, &z);
        let beta = ((gz_new - cross) / gz).max(0.0);
        g = g_new;
        z = z_new;
        gz = gz_new;
        for i in 0..nv {
            d[i] = -z[i] + beta * d[i];
        }
        if inner(domain, &g, &d) >= 0.0 {
            d = z.scaled(-1.0);
        }
    }
    let last = gz.max(0.0).sqrt() / f_dual;
    // same acceptance band as the stall rule
    if last <= 1e3 * opts.tol {
        return Ok(center(domain, &u));
    }
    Err(Error::IterationCap { what: "variational descent", iterations: opts.max_iter, last })
}
