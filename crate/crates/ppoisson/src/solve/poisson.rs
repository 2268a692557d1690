//! Zero-mean Poisson solves `Δu = f` by preconditioned conjugate gradients.
//!
//! `-Δ` is symmetric positive definite on zero-mean fields in the
//! measure-weighted inner product. On periodic grids the preconditioner is the
//! exact Fourier inverse of the stencil, so CG typically stops after one or two
//! iterations; on graphs it is Jacobi.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::calculus::{inner, laplacian, mean, ScalarField};
use crate::error::{Error, Result};
use crate::mesh::{Domain, DomainKind};

struct FourierInverse {
    dim: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    backward: Arc<dyn Fft<f64>>,
    /// `-1 / symbol(k)` scaled by the inverse transform length; zero at `k = 0`.
    multiplier: Vec<f64>,
}

impl FourierInverse {
    fn new(dim: usize, n: usize, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let backward = planner.plan_fft_inverse(n);
        let nv = n.pow(dim as u32);
        let axis_symbol: Vec<f64> = (0..n).map(|k| 4.0 / (h * h) * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2)).collect();
        let multiplier = (0..nv)
            .map(|v| {
                let mut r = v;
                let mut s = 0.0;
                for _ in 0..dim {
                    s += axis_symbol[r % n];
                    r /= n;
                }
                if v == 0 {
                    0.0
                } else {
                    -1.0 / (s * nv as f64)
                }
            })
            .collect();
        FourierInverse { dim, n, forward, backward, multiplier }
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let nv = buf.len();
        plan.process(buf);
        let mut line = vec![Complex64::default(); nv];
        for axis in 1..self.dim {
            let stride = n.pow(axis as u32);
            // gather every line along `axis` contiguously, transform, scatter back
            let mut k = 0;
            for base in (0..nv).filter(|v| (v / stride).is_multiple_of(n)) {
                for i in 0..n {
                    line[k] = buf[base + i * stride];
                    k += 1;
                }
            }
            plan.process(&mut line);
            k = 0;
            for base in (0..nv).filter(|v| (v / stride).is_multiple_of(n)) {
                for i in 0..n {
                    buf[base + i * stride] = line[k];
                    k += 1;
                }
            }
        }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = r.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (b, m) in buf.iter_mut().zip(&self.multiplier) {
            *b *= m;
        }
        self.transform(&mut buf, &self.backward);
        buf.iter().map(|c| c.re).collect()
    }
}

enum Preconditioner {
    Fourier(FourierInverse),
    /// Diagonal of `-Δ`.
    Jacobi(Vec<f64>),
}

/// Reusable Poisson solver bound to one domain.
pub struct PoissonSolver<'d> {
    domain: &'d Domain,
    pre: Preconditioner,
    max_iter: usize,
    /// Upper bound on the operator norm of `Δ`.
    op_norm: f64,
}

impl<'d> PoissonSolver<'d> {
    pub fn new(domain: &'d Domain) -> Self {
        let (pre, max_iter, op_norm) = match &domain.kind {
            DomainKind::Grid(g) => {
                let h = g.h();
                (Preconditioner::Fourier(FourierInverse::new(g.dim, g.n, h)), 100, 4.0 * g.dim as f64 / (h * h))
            }
            DomainKind::Graph(g) => {
                let mut diag = vec![0.0; domain.num_vertices()];
                for e in &g.edges {
                    let c = e.weight / (e.length * e.length);
                    diag[e.a] += c;
                    diag[e.b] += c;
                }
                for (d, m) in diag.iter_mut().zip(&domain.measure) {
                    *d /= m;
                }
                let op_norm = 2.0 * diag.iter().fold(0.0f64, |a, &b| a.max(b));
                (Preconditioner::Jacobi(diag), 10 * domain.num_vertices() + 100, op_norm)
            }
        };
        PoissonSolver { domain, pre, max_iter, op_norm }
    }

    pub fn domain(&self) -> &'d Domain {
        self.domain
    }

    /// Approximate `(-Δ)^{-1} r` on zero-mean fields, result projected to zero mean.
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let z = match &self.pre {
            Preconditioner::Fourier(f) => f.apply(r).iter().map(|x| -x).collect(),
            Preconditioner::Jacobi(d) => r.iter().zip(d).map(|(a, b)| a / b).collect::<Vec<_>>(),
        };
        let c = mean(self.domain, &z);
        z.into_iter().map(|x| x - c).collect()
    }

    /// Solve `Δu = f` for zero-mean `u` with `||Δu - f||_2 <= tol ||f||_2`.
    ///
    /// Tolerances below the rounding floor `~ ε_mach ||Δ|| ||u||` of the
    /// stencil are raised to that floor.
    pub fn solve(&self, f: &[f64], tol: f64) -> Result<ScalarField> {
        let d = self.domain;
        let nv = d.num_vertices();
        let fnorm = inner(d, f, f).sqrt();
        if fnorm == 0.0 {
            return Ok(ScalarField::zeros(nv));
        }
        let fmean = mean(d, f);
        let rms = fnorm / d.total_measure().sqrt();
        if fmean.abs() > 1e-10 * rms {
            return Err(Error::NonzeroMean { mean: fmean, norm: rms });
        }
        // solve (-Δ) u = b with b = -(f - mean f)
        let b: Vec<f64> = f.iter().map(|x| fmean - x).collect();
        let mut u = vec![0.0; nv];
        let mut r = b.clone();
        let target = tol * fnorm;
        let mut iterations = 0;
        for _restart in 0..4 {
            let mut z = self.precondition(&r);
            let mut p = z.clone();
            let mut rho = inner(d, &r, &z);
            while iterations < self.max_iter {
                if inner(d, &r, &r).sqrt() <= target {
                    break;
                }
                iterations += 1;
                let q: Vec<f64> = laplacian(d, &p).iter().map(|x| -x).collect();
                let pq = inner(d, &p, &q);
                if pq <= 0.0 {
                    break;
                }
                let alpha = rho / pq;
                for i in 0..nv {
                    u[i] += alpha * p[i];
                    r[i] -= alpha * q[i];
                }
                z = self.precondition(&r);
                let rho_new = inner(d, &r, &z);
                let beta = rho_new / rho;
                rho = rho_new;
                for i in 0..nv {
                    p[i] = z[i] + beta * p[i];
                }
            }
            // recompute the true residual; the recursive one drifts
            let lu = laplacian(d, &u);
            r = b.iter().zip(lu.iter()).map(|(bi, li)| bi + li).collect();
            let c = mean(d, &r);
            r.iter_mut().for_each(|x| *x -= c);
            let floor = 16.0 * f64::EPSILON * self.op_norm * inner(d, &u, &u).sqrt();
            if inner(d, &r, &r).sqrt() <= target.max(floor) {
                let c = mean(d, &u);
                return Ok(ScalarField(u.into_iter().map(|x| x - c).collect()));
            }
            if iterations >= self.max_iter {
                break;
            }
        }
        Err(Error::CgNonConvergence { iterations, residual: inner(d, &r, &r).sqrt() / fnorm })
    }
}

/// One-shot zero-mean Poisson solve.
pub fn poisson_solve(domain: &Domain, f: &[f64], tol: f64) -> Result<ScalarField> {
    PoissonSolver::new(domain).solve(f, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::center;
    use crate::mesh::Edge;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_zero_mean(d: &Domain, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..d.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
        center(d, &f)
    }

    fn residual(d: &Domain, u: &[f64], f: &[f64]) -> f64 {
        let r: Vec<f64> = laplacian(d, u).iter().zip(f).map(|(a, b)| a - b).collect();
        inner(d, &r, &r).sqrt() / inner(d, f, f).sqrt()
    }

    #[test]
    fn zero_source_gives_zero() {
        let d = Domain::torus(2, 8, 1.0).unwrap();
        assert!(poisson_solve(&d, &[0.0; 64], 1e-12).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn circle_sine_inverse() {
        let d = Domain::circle(256, 2.0 * PI).unwrap();
        let f = ScalarField::from_fn(&d, |x| x[0].sin());
        let u = poisson_solve(&d, &f, 1e-12).unwrap();
        let err = u.iter().zip(f.iter()).fold(0.0f64, |a, (u, s)| a.max((u + s).abs()));
        assert!(err < 1e-3, "err {err}");
    }

    #[test]
    fn reproduces_random_sources_on_grids_and_graphs() {
        let e = |a, b, weight, length| Edge { a, b, weight, length };
        let graph = Domain::graph(
            vec![1.0, 0.3, 2.0, 1.0, 0.7, 1.2],
            vec![
                e(0, 1, 1.0, 1.0),
                e(1, 2, 0.4, 2.0),
                e(2, 3, 1.0, 1.0),
                e(3, 4, 2.0, 0.5),
                e(4, 5, 1.0, 1.0),
                e(5, 0, 1.0, 1.0),
                e(0, 3, 0.2, 3.0),
            ],
            0.0,
            2.0,
        )
        .unwrap();
        for d in [Domain::circle(64, 1.0).unwrap(), Domain::torus(2, 16, 3.0).unwrap(), Domain::torus(3, 8, 1.0).unwrap(), graph] {
            for seed in 0..5 {
                let f = random_zero_mean(&d, seed);
                let u = poisson_solve(&d, &f, 1e-12).unwrap();
                assert!(residual(&d, &u, &f) <= 1e-12);
                assert!(mean(&d, &u).abs() < 1e-12 * u.max_abs());
            }
        }
    }

    #[test]
    fn rejects_nonzero_mean() {
        let d = Domain::circle(16, 1.0).unwrap();
        assert!(matches!(poisson_solve(&d, &[1.0; 16], 1e-10), Err(Error::NonzeroMean { .. })));
    }
}
