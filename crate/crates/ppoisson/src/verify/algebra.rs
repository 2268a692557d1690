//! Pointwise inequalities behind the estimates, checked exactly at one point
//! or on seeded random samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EstimateReport, ALGEBRA_TOL};
use crate::calculus::{dot, hessian, quad_form, VectorField};
use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::plap::{frozen_l, monotonicity_terms, theta, RegParams};
use crate::spectral::alpha_p;

/// One evaluated sample: both sides, a scale for the rounding tolerance and
/// whether the inequality holds at that tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub lhs: f64,
    pub rhs: f64,
    pub scale: f64,
    pub ok: bool,
    /// Ratio of the two sides oriented so that the inequality says `ratio <= 1`.
    pub ratio: Option<f64>,
}

impl Sample {
    /// `lhs >= rhs` up to `tol * scale`.
    fn at_least(lhs: f64, rhs: f64, scale: f64) -> Self {
        let ratio = super::ratio(rhs.max(0.0), lhs.max(0.0));
        Sample { lhs, rhs, scale, ok: lhs - rhs >= -ALGEBRA_TOL * scale, ratio: Some(ratio) }
    }

    /// `lhs <= rhs` up to `tol * scale`.
    fn at_most(lhs: f64, rhs: f64, scale: f64) -> Self {
        let ratio = super::ratio(lhs.max(0.0), rhs.max(0.0));
        Sample { lhs, rhs, scale, ok: rhs - lhs >= -ALGEBRA_TOL * scale, ratio: Some(ratio) }
    }
}

fn sym_check(a: &[f64], d: usize) -> Result<()> {
    if a.len() != d * d {
        return Err(Error::Parameter(format!("matrix has {} entries, expected {}", a.len(), d * d)));
    }
    for i in 0..d {
        for j in 0..i {
            if a[i * d + j] != a[j * d + i] {
                return Err(Error::Parameter("matrix is not symmetric".into()));
            }
        }
    }
    Ok(())
}

fn mat_vec(a: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| (0..d).map(|j| a[i * d + j] * v[j]).sum()).collect()
}

fn trace(a: &[f64], d: usize) -> f64 {
    (0..d).map(|i| a[i * d + i]).sum()
}

/// `|v|⁴|A|²_HS >= 2|v|²|Av|² + (|v|² tr A - ⟨Av,v⟩)²/(n-1) - ⟨Av,v⟩²`.
pub fn key_sample(a: &[f64], v: &[f64], n: usize) -> Sample {
    let d = v.len();
    let v2 = dot(v, v);
    let av = mat_vec(a, v);
    let avv = dot(&av, v);
    let hs2 = dot(a, a);
    let tr = trace(a, d);
    let lhs = v2 * v2 * hs2;
    let rhs = 2.0 * v2 * dot(&av, &av) + (v2 * tr - avv).powi(2) / (n as f64 - 1.0) - avv * avv;
    Sample::at_least(lhs, rhs, v2 * v2 * (hs2 + tr * tr))
}

pub fn check_key_inequality(a: &[f64], v: &[f64], n: usize) -> Result<EstimateReport> {
    if n < 2 {
        return Err(Error::Parameter(format!("n = {n} must be at least 2")));
    }
    sym_check(a, v.len())?;
    let s = key_sample(a, v, n);
    Ok(report("key_inequality", &s).with("n", n as f64))
}

/// `[((t²+t)A - (tN+t²)B)/(N+t²+2t)]² <= t²(N-1)/(N+2t+t²) [(A-B)²/(N-1) + B²]`.
pub fn elementary_sample(t: f64, a: f64, b: f64, n: f64) -> Sample {
    let den = n + t * t + 2.0 * t;
    let lhs = (((t * t + t) * a - (t * n + t * t) * b) / den).powi(2);
    let k = t * t * (n - 1.0) / den;
    let rhs = k * ((a - b).powi(2) / (n - 1.0) + b * b);
    let scale = lhs.max(rhs).max(k * (a * a + b * b));
    Sample::at_most(lhs, rhs, scale)
}

pub fn check_elementary(t: f64, a: f64, b: f64, n: f64) -> Result<EstimateReport> {
    if !(t >= 0.0) || !(n >= 2.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Parameter(format!("need t >= 0, N >= 2 and finite A, B (t={t}, N={n})")));
    }
    Ok(report("elementary", &elementary_sample(t, a, b, n)).with("t", t).with("N", n))
}

/// Coefficients `(a, b, c)` of `Q(t) = a t² + b t + c`.
pub fn q_coefficients(p: f64, n: f64, alpha: f64) -> (f64, f64, f64) {
    let s = p - 2.0;
    if n.is_infinite() {
        (-s * (s - 2.0 * alpha), 2.0 * alpha, 1.0)
    } else {
        let k = 1.0 / (n - 1.0);
        (s * s * k - s * (s - 2.0 * alpha), 2.0 * s * k + 2.0 * alpha, k + 1.0)
    }
}

/// `min_{t ∈ [0,1]} Q(t)` from the endpoints and, for a convex `Q`, the vertex.
pub fn q_min(p: f64, n: f64, alpha: f64) -> f64 {
    let (a, b, c) = q_coefficients(p, n, alpha);
    let q = |t: f64| (a * t + b) * t + c;
    let mut m = q(0.0).min(q(1.0));
    if a > 0.0 {
        let t = -b / (2.0 * a);
        if t > 0.0 && t < 1.0 {
            m = m.min(q(t));
        }
    }
    m
}

/// Admissibility margin `α - ½(p - 3 - (p-1)/(N-1))`; the last term is dropped for `N = ∞`.
pub fn alpha_margin(p: f64, n: f64, alpha: f64) -> f64 {
    let tail = if n.is_infinite() { 0.0 } else { (p - 1.0) / (n - 1.0) };
    alpha - 0.5 * (p - 3.0 - tail)
}

/// `min Q > 0` exactly for strictly admissible `α`, and
/// `Q(1) = (p-1)((p-1)/(N-1) + 3 - p + 2α)`.
pub fn q_sample(p: f64, n: f64, alpha: f64) -> Sample {
    let (a, b, c) = q_coefficients(p, n, alpha);
    let q1 = a + b + c;
    let tail = if n.is_infinite() { 0.0 } else { (p - 1.0) / (n - 1.0) };
    let closed = (p - 1.0) * (tail + 3.0 - p + 2.0 * alpha);
    let scale = 1.0 + a.abs() + b.abs() + c.abs();
    let identity = (q1 - closed).abs() <= ALGEBRA_TOL * scale;
    let min = q_min(p, n, alpha);
    let margin = alpha_margin(p, n, alpha);
    // within rounding of the boundary either verdict is consistent
    let boundary = (2.0 * (p - 1.0) * margin).abs() <= ALGEBRA_TOL * scale;
    let consistent = boundary || ((min > 0.0) == (margin > 0.0));
    Sample { lhs: min, rhs: q1, scale, ok: identity && consistent, ratio: None }
}

pub fn check_q_polynomial(p: f64, n: f64, alpha: f64) -> Result<EstimateReport> {
    if !(p > 1.0 && p.is_finite()) || !(n >= 2.0) || !alpha.is_finite() {
        return Err(Error::Parameter(format!("need p ∈ (1,∞), N ∈ [2,∞], finite α (p={p}, N={n}, α={alpha})")));
    }
    let s = q_sample(p, n, alpha);
    let margin = alpha_margin(p, n, alpha);
    Ok(report("q_polynomial", &s)
        .with("p", p)
        .with("N", n)
        .with("alpha", alpha)
        .with("min_q", s.lhs)
        .with("q1", s.rhs)
        .with("admissible", if margin > 0.0 { 1.0 } else { 0.0 }))
}

/// `|tr H - θ𝓛H|² <= α_p |H|²_HS` at one point, with `dim = N`.
pub fn cordes_sample(h: &[f64], v: &[f64], p: f64, eps: f64) -> Sample {
    let d = v.len();
    let n = d as f64;
    let tr = trace(h, d);
    let v2 = dot(v, v);
    let l = tr + (p - 2.0) * quad_form(h, v, d) / (v2 + eps);
    let g = (p - 2.0) * v2 / (v2 + eps);
    let th = (n + g) / (n + g * g + 2.0 * g);
    let hs2 = dot(h, h);
    let lhs = (tr - th * l).powi(2);
    let rhs = alpha_p(p, n) * hs2;
    Sample::at_most(lhs, rhs, hs2)
}

/// The pointwise Cordes estimate on a grid whose dimension equals `N`.
pub fn check_cordes_closeness(domain: &Domain, u: &[f64], v: &VectorField, p: f64, eps: f64) -> Result<EstimateReport> {
    if p < 2.0 {
        return Err(Error::Unsupported(format!("the Cordes closeness estimate needs p >= 2, got {p}")));
    }
    let g = domain.grid().ok_or_else(|| Error::Unsupported("Cordes closeness needs a grid".into()))?;
    if domain.n_dim != g.dim as f64 {
        return Err(Error::Unsupported(format!("needs N = dim, got N = {} on a {}-dimensional grid", domain.n_dim, g.dim)));
    }
    let rp = RegParams::new(p, eps, f64::INFINITY);
    let hess = hessian(domain, u)?;
    let lap = hess.trace();
    let l = frozen_l(domain, u, v, &rp)?;
    let th = theta(v, &rp, domain.n_dim)?;
    let a = alpha_p(p, domain.n_dim);
    let mut worst = Sample { lhs: 0.0, rhs: 0.0, scale: 0.0, ok: true, ratio: Some(0.0) };
    let mut all_ok = true;
    for x in 0..u.len() {
        let hs2 = dot(hess.at(x), hess.at(x));
        let s = Sample::at_most((lap[x] - th[x] * l[x]).powi(2), a * hs2, hs2);
        all_ok &= s.ok;
        if s.ratio > worst.ratio || !s.ok {
            worst = s;
        }
    }
    Ok(EstimateReport::new("cordes_closeness", worst.lhs, worst.rhs, worst.ratio.unwrap_or(f64::NAN), all_ok)
        .with("p", p)
        .with("N", domain.n_dim)
        .with("eps", eps)
        .with("alpha_p", a))
}

/// Known monotonicity constant: `2^{2-p}` for `p >= 2`, `p - 1` below.
pub fn monotonicity_constant(p: f64) -> f64 {
    if p >= 2.0 {
        2f64.powf(2.0 - p)
    } else {
        p - 1.0
    }
}

/// `⟨|v|^{p-2}v - |w|^{p-2}w, v-w⟩ >= c_p · rhs` with the constant above.
pub fn monotonicity_sample(v: &[f64], w: &[f64], p: f64) -> Sample {
    let (lhs, rhs) = monotonicity_terms(v, w, p);
    let nv = dot(v, v).sqrt();
    let nw = dot(w, w).sqrt();
    let scale = (nv + nw).powf(p);
    Sample::at_least(lhs, monotonicity_constant(p) * rhs, scale)
}

pub fn check_monotonicity(v: &[f64], w: &[f64], p: f64) -> Result<EstimateReport> {
    if !(p > 1.0 && p.is_finite()) || v.len() != w.len() {
        return Err(Error::Parameter(format!("need p ∈ (1,∞) and equal lengths (p={p})")));
    }
    let s = monotonicity_sample(v, w, p);
    Ok(report("monotonicity", &s).with("p", p).with("c_p", monotonicity_constant(p)))
}

fn report(name: &str, s: &Sample) -> EstimateReport {
    EstimateReport::new(name, s.lhs, s.rhs, s.ratio.unwrap_or(f64::NAN), s.ok)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

fn random_sym(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let s = log_uniform(rng, -3.0, 3.0);
    let mut a = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let x = s * rng.random_range(-1.0..1.0);
            a[i * d + j] = x;
            a[j * d + i] = x;
        }
    }
    a
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let s = log_uniform(rng, -3.0, 3.0);
    (0..d).map(|_| s * rng.random_range(-1.0..1.0)).collect()
}

/// The sampled families of the algebraic suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Key,
    Elementary,
    QPolynomial,
    Cordes,
    Monotonicity,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Key, Family::Elementary, Family::QPolynomial, Family::Cordes, Family::Monotonicity];

    pub fn name(self) -> &'static str {
        match self {
            Family::Key => "key_inequality",
            Family::Elementary => "elementary",
            Family::QPolynomial => "q_polynomial",
            Family::Cordes => "cordes_pointwise",
            Family::Monotonicity => "monotonicity",
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> Sample {
        match self {
            Family::Key => {
                let d = rng.random_range(2..=3);
                let roll: f64 = rng.random();
                let a = if roll < 0.01 {
                    let c = rng.random_range(-2.0..2.0);
                    (0..d * d).map(|k| if k % (d + 1) == 0 { c } else { 0.0 }).collect()
                } else {
                    random_sym(rng, d)
                };
                let v = if roll > 0.99 { vec![0.0; d] } else { random_vec(rng, d) };
                key_sample(&a, &v, d)
            }
            Family::Elementary => {
                let t = if rng.random::<f64>() < 0.01 { 0.0 } else { rng.random_range(0.0..100.0) };
                let a = rng.random_range(-10.0..10.0);
                let b = if rng.random::<f64>() < 0.05 { a } else { rng.random_range(-10.0..10.0) };
                let n = if rng.random::<bool>() { rng.random_range(2..=10) as f64 } else { rng.random_range(2.0..10.0) };
                elementary_sample(t, a, b, n)
            }
            Family::QPolynomial => {
                let p = rng.random_range(1.01..6.0);
                let n = match rng.random_range(0..5) {
                    0 => f64::INFINITY,
                    1 => rng.random_range(2..=10) as f64,
                    _ => rng.random_range(2.0..10.0),
                };
                let boundary = alpha_margin(p, n, 0.0);
                // margin(α) = α + margin(0), so the boundary sits at α = -margin(0)
                let alpha = match rng.random_range(0..4) {
                    0 => -boundary,
                    1 => -boundary + rng.random_range(-0.5..0.5),
                    _ => rng.random_range(-3.0..3.0),
                };
                q_sample(p, n, alpha)
            }
            Family::Cordes => {
                let d = rng.random_range(2..=3);
                let h = random_sym(rng, d);
                let v = if rng.random::<f64>() < 0.05 { vec![0.0; d] } else { random_vec(rng, d) };
                let p = if rng.random::<f64>() < 0.02 { 2.0 } else { rng.random_range(2.0..8.0) };
                let eps = log_uniform(rng, -8.0, 1.0);
                cordes_sample(&h, &v, p, eps)
            }
            Family::Monotonicity => {
                let d = rng.random_range(1..=3);
                let p = rng.random_range(1.01..6.0);
                let v = random_vec(rng, d);
                let w = match rng.random_range(0..20) {
                    0 => vec![0.0; d],
                    1 => v.clone(),
                    2 => v.iter().map(|x| -x).collect(),
                    3 => v.iter().map(|x| x * (1.0 + 1e-6)).collect(),
                    _ => random_vec(rng, d),
                };
                monotonicity_sample(&v, &w, p)
            }
        }
    }
}

const CHUNKS: usize = 8;

/// Run `samples` seeded draws of one family; the result depends only on
/// `(family, samples, seed)`.
pub fn run_family(family: Family, samples: usize, seed: u64) -> EstimateReport {
    let per_chunk = |c: usize| samples / CHUNKS + usize::from(c < samples % CHUNKS);
    let parts: Vec<(usize, Option<Sample>, Option<Sample>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..CHUNKS)
            .map(|c| {
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((family as u64) << 40) ^ ((c as u64) << 20));
                    let mut violations = 0;
                    let mut first_bad = None;
                    let mut worst: Option<Sample> = None;
                    for _ in 0..per_chunk(c) {
                        let x = family.draw(&mut rng);
                        if !x.ok {
                            violations += 1;
                            first_bad.get_or_insert(x);
                        }
                        if x.ratio.is_some() && worst.is_none_or(|w| x.ratio > w.ratio) {
                            worst = Some(x);
                        }
                    }
                    (violations, first_bad, worst)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sampling thread panicked")).collect()
    });
    let violations: usize = parts.iter().map(|p| p.0).sum();
    let first_bad = parts.iter().find_map(|p| p.1);
    let worst = parts.iter().filter_map(|p| p.2).fold(None, |acc: Option<Sample>, x| match acc {
        Some(a) if a.ratio >= x.ratio => Some(a),
        _ => Some(x),
    });
    let shown = first_bad.or(worst);
    let (lhs, rhs) = shown.map_or((f64::NAN, f64::NAN), |s| (s.lhs, s.rhs));
    let fitted = worst.and_then(|w| w.ratio).unwrap_or(f64::NAN);
    EstimateReport::new(family.name(), lhs, rhs, fitted, violations == 0)
        .with("samples", samples as f64)
        .with("violations", violations as f64)
        .with("seed", seed as f64)
        .with("tolerance", ALGEBRA_TOL)
}

/// All algebraic families, run concurrently.
pub fn algebra_suite(samples: usize, seed: u64) -> Vec<EstimateReport> {
    std::thread::scope(|s| {
        let handles: Vec<_> = Family::ALL.iter().map(|&f| s.spawn(move || run_family(f, samples, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("family thread panicked")).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{gradient, ScalarField};
    use std::f64::consts::PI;

    #[test]
    fn key_examples() {
        let r = check_key_inequality(&[0.0; 4], &[0.0, 0.0], 2).unwrap();
        assert!(r.pass && r.lhs == 0.0 && r.rhs == 0.0);
        let r = check_key_inequality(&[1.0, 0.0, 0.0, 1.0], &[1.0, 0.0], 2).unwrap();
        assert_eq!((r.lhs, r.rhs), (2.0, 2.0));
        assert!(r.pass);
        assert!(check_key_inequality(&[1.0], &[1.0], 1).is_err());
        assert!(check_key_inequality(&[1.0, 2.0, 0.0, 1.0], &[1.0, 0.0], 2).is_err());
    }

    #[test]
    fn elementary_examples() {
        let r = check_elementary(0.0, 3.0, -2.0, 3.0).unwrap();
        assert!(r.pass && r.lhs == 0.0 && r.rhs == 0.0);
        // A = B: LHS/RHS = (N-1)/(N+2t+t²)
        for (t, n) in [(0.5, 2.0), (3.0, 4.0), (40.0, 7.5)] {
            let r = check_elementary(t, 1.7, 1.7, n).unwrap();
            assert!(r.pass);
            assert!((r.lhs / r.rhs - (n - 1.0) / (n + 2.0 * t + t * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn q_examples() {
        // p = 2: Q(t) = 2αt + 1 + 1/(N-1)
        let r = check_q_polynomial(2.0, 4.0, 0.0).unwrap();
        assert!(r.pass && (r.get("min_q").unwrap() - 4.0 / 3.0).abs() < 1e-15);
        // N = ∞, p = 2.5, α = 0: Q(t) = 1 - 0.25t²
        let r = check_q_polynomial(2.5, f64::INFINITY, 0.0).unwrap();
        assert!(r.pass && (r.get("min_q").unwrap() - 0.75).abs() < 1e-15);
        // boundary α: Q(1) = 0 and α is not admissible
        let (p, n) = (3.5, 3.0);
        let alpha = 0.5 * (p - 3.0 - (p - 1.0) / (n - 1.0));
        let r = check_q_polynomial(p, n, alpha).unwrap();
        assert!(r.pass);
        assert!(r.get("q1").unwrap().abs() < 1e-14);
        assert_eq!(r.get("admissible"), Some(0.0));
        assert!(r.get("min_q").unwrap() <= 1e-14);
    }

    #[test]
    fn q_minimum_against_dense_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = rng.random_range(1.01..6.0);
            let n = if rng.random::<bool>() { f64::INFINITY } else { rng.random_range(2.0..10.0) };
            let alpha = rng.random_range(-3.0..3.0);
            let (a, b, c) = q_coefficients(p, n, alpha);
            let scan = (0..=10_000).map(|k| k as f64 / 1e4).map(|t| (a * t + b) * t + c).fold(f64::INFINITY, f64::min);
            let m = q_min(p, n, alpha);
            assert!(m <= scan + 1e-12 && scan - m <= 1e-7 * (1.0 + a.abs()), "{m} vs {scan}");
        }
    }

    #[test]
    fn cordes_examples() {
        let d = Domain::torus(2, 32, 1.0).unwrap();
        let u = ScalarField::from_fn(&d, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + 0.3 * (4.0 * PI * x[1]).sin());
        let w = ScalarField::from_fn(&d, |x| (2.0 * PI * (x[0] + 2.0 * x[1])).cos());
        let v = gradient(&d, &w);
        let r = check_cordes_closeness(&d, &u, &v, 2.0, 1e-3).unwrap();
        assert!(r.pass && r.fitted_constant == 0.0);
        let zero = VectorField::zeros_like(&d);
        assert!(check_cordes_closeness(&d, &u, &zero, 3.0, 1e-3).unwrap().fitted_constant == 0.0);
        let r = check_cordes_closeness(&d, &u, &v, 2.5, 1e-3).unwrap();
        assert!(r.pass && r.fitted_constant < 1.0);
        assert!(matches!(check_cordes_closeness(&d, &u, &v, 1.5, 1e-3), Err(Error::Unsupported(_))));
        let d4 = d.clone().with_geometry(0.0, 4.0);
        assert!(check_cordes_closeness(&d4, &u, &v, 2.5, 1e-3).is_err());
    }

    #[test]
    fn monotonicity_edge_cases() {
        for p in [1.2, 2.0, 3.7] {
            assert!(check_monotonicity(&[0.0, 0.0], &[0.0, 0.0], p).unwrap().pass);
            assert!(check_monotonicity(&[1.0, -2.0], &[1.0, -2.0], p).unwrap().pass);
            assert!(check_monotonicity(&[1.0, -2.0], &[0.0, 0.0], p).unwrap().pass);
        }
        // equality in one dimension at p = 2: (v - w)² = 2^0 (v - w)²
        let r = check_monotonicity(&[3.0], &[-1.0], 2.0).unwrap();
        assert_eq!(r.lhs, r.rhs);
    }

    #[test]
    fn suite_is_deterministic_and_passes() {
        let a = algebra_suite(20_000, 7);
        let b = algebra_suite(20_000, 7);
        // NaN fields rule out PartialEq; the JSON form is the determinism contract
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for r in &a {
            assert!(r.pass, "{r:?}");
        }
    }
}
