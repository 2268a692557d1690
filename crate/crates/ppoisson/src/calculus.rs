//! Discrete calculus with exact summation by parts.
//!
//! On grids the gradient is the forward difference and the divergence the
//! backward difference, so `sum <X, grad phi> m = -sum phi div(X) m` holds for
//! every pair up to rounding. On graphs gradients live on edges:
//! `grad u (e) = (u(b) - u(a)) / length(e)`, paired with the edge weights.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::mesh::{Domain, DomainKind, Grid};

/// Per-vertex values. Operators take the domain explicitly; the length must
/// match `domain.num_vertices()`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn zeros(n: usize) -> Self {
        ScalarField(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ScalarField(vec![c; n])
    }

    /// Sample a function of the vertex position (grids only; graph positions are the vertex id).
    pub fn from_fn(domain: &Domain, f: impl Fn([f64; 3]) -> f64) -> Self {
        match &domain.kind {
            DomainKind::Grid(g) => ScalarField((0..g.num_vertices()).map(|v| f(g.position(v))).collect()),
            DomainKind::Graph(_) => ScalarField((0..domain.num_vertices()).map(|v| f([v as f64, 0.0, 0.0])).collect()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        ScalarField(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self - c` for a constant `c`.
    pub fn shifted(&self, c: f64) -> Self {
        self.map(|x| x - c)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

impl Deref for ScalarField {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

/// Where a vector field lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// `dim` components per grid vertex, stored vertex-major.
    Vertices { dim: usize },
    /// One oriented scalar per graph edge.
    Edges,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub support: Support,
    pub data: Vec<f64>,
}

impl VectorField {
    pub fn zeros_like(domain: &Domain) -> Self {
        match &domain.kind {
            DomainKind::Grid(g) => VectorField { support: Support::Vertices { dim: g.dim }, data: vec![0.0; g.dim * g.num_vertices()] },
            DomainKind::Graph(g) => VectorField { support: Support::Edges, data: vec![0.0; g.edges.len()] },
        }
    }

    /// Number of components per support point.
    pub fn components(&self) -> usize {
        match self.support {
            Support::Vertices { dim } => dim,
            Support::Edges => 1,
        }
    }

    /// Number of support points (vertices or edges).
    pub fn len(&self) -> usize {
        self.data.len() / self.components()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, s: usize) -> &[f64] {
        let c = self.components();
        &self.data[s * c..(s + 1) * c]
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.len()).map(|s| norm(self.at(s))).collect()
    }

    /// Pointwise squared magnitude.
    pub fn magnitude_sq(&self) -> Vec<f64> {
        (0..self.len()).map(|s| dot(self.at(s), self.at(s))).collect()
    }

    /// Multiply the vector at each support point by `c[s]`.
    pub fn scale_pointwise(&self, c: &[f64]) -> Self {
        let k = self.components();
        let data = self.data.iter().enumerate().map(|(i, &x)| c[i / k] * x).collect();
        VectorField { support: self.support, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        VectorField { support: self.support, data }
    }

    pub fn scaled(&self, c: f64) -> Self {
        VectorField { support: self.support, data: self.data.iter().map(|x| c * x).collect() }
    }
}

/// Per-vertex symmetric `dim x dim` matrices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianField {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl HessianField {
    pub fn at(&self, v: usize) -> &[f64] {
        let k = self.dim * self.dim;
        &self.data[v * k..(v + 1) * k]
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.dim * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Pointwise trace.
    pub fn trace(&self) -> ScalarField {
        ScalarField(
            (0..self.len())
                .map(|v| {
                    let a = self.at(v);
                    let mut t = 0.0;
                    for i in 0..self.dim {
                        t += a[i * self.dim + i];
                    }
                    t
                })
                .collect(),
        )
    }

    /// Quadratic form `H(x)(w(x), w(x))` at every vertex.
    pub fn quadratic(&self, w: &VectorField) -> ScalarField {
        ScalarField((0..self.len()).map(|v| quad_form(self.at(v), w.at(v), self.dim)).collect())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn quad_form(a: &[f64], x: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a[i * d + j] * x[i] * x[j];
        }
    }
    s
}

pub fn gradient(domain: &Domain, u: &[f64]) -> VectorField {
    debug_assert_eq!(u.len(), domain.num_vertices());
    match &domain.kind {
        DomainKind::Grid(g) => {
            let d = g.dim;
            let h = g.h();
            let mut data = vec![0.0; d * u.len()];
            for v in 0..u.len() {
                for axis in 0..d {
                    data[v * d + axis] = (u[g.plus(axis, v)] - u[v]) / h;
                }
            }
            VectorField { support: Support::Vertices { dim: d }, data }
        }
        DomainKind::Graph(g) => {
            VectorField { support: Support::Edges, data: g.edges.iter().map(|e| (u[e.b] - u[e.a]) / e.length).collect() }
        }
    }
}

/// Negative adjoint of [`gradient`] in the measure-weighted pairing.
pub fn divergence(domain: &Domain, x: &VectorField) -> ScalarField {
    match &domain.kind {
        DomainKind::Grid(g) => {
            let d = g.dim;
            let h = g.h();
            let nv = g.num_vertices();
            let out = (0..nv)
                .map(|v| {
                    let mut acc = 0.0;
                    for axis in 0..d {
                        acc += (x.data[v * d + axis] - x.data[g.minus(axis, v) * d + axis]) / h;
                    }
                    acc
                })
                .collect();
            ScalarField(out)
        }
        DomainKind::Graph(g) => {
            let mut out = vec![0.0; domain.num_vertices()];
            for (idx, e) in g.edges.iter().enumerate() {
                let flow = e.weight * x.data[idx] / e.length;
                out[e.a] += flow;
                out[e.b] -= flow;
            }
            for (o, m) in out.iter_mut().zip(&domain.measure) {
                *o /= m;
            }
            ScalarField(out)
        }
    }
}

#[inline]
fn second_difference(g: &Grid, u: &[f64], axis: usize, v: usize, h: f64) -> f64 {
    ((u[g.plus(axis, v)] - u[v]) / h - (u[v] - u[g.minus(axis, v)]) / h) / h
}

/// `div(grad u)`, evaluated with the same floating-point operations as the composition.
pub fn laplacian(domain: &Domain, u: &[f64]) -> ScalarField {
    match &domain.kind {
        DomainKind::Grid(g) => {
            let h = g.h();
            ScalarField(
                (0..u.len())
                    .map(|v| {
                        let mut acc = 0.0;
                        for axis in 0..g.dim {
                            acc += second_difference(g, u, axis, v, h);
                        }
                        acc
                    })
                    .collect(),
            )
        }
        DomainKind::Graph(_) => divergence(domain, &gradient(domain, u)),
    }
}

fn require_grid<'a>(domain: &'a Domain, what: &str) -> Result<&'a Grid> {
    domain.grid().ok_or_else(|| Error::Unsupported(format!("{what} needs a grid domain; graphs carry first-order calculus only")))
}

/// Grid Hessian: diagonal entries are the second differences used by
/// [`laplacian`] (so the trace is the Laplacian bit for bit), off-diagonal
/// entries the central mixed difference.
pub fn hessian(domain: &Domain, u: &[f64]) -> Result<HessianField> {
    let g = require_grid(domain, "hessian")?;
    let d = g.dim;
    let h = g.h();
    let inv4h2 = 1.0 / (4.0 * h * h);
    let mut data = vec![0.0; d * d * u.len()];
    for v in 0..u.len() {
        let a = &mut data[v * d * d..(v + 1) * d * d];
        for i in 0..d {
            a[i * d + i] = second_difference(g, u, i, v, h);
            for j in (i + 1)..d {
                let pp = u[g.plus(j, g.plus(i, v))];
                let pm = u[g.minus(j, g.plus(i, v))];
                let mp = u[g.plus(j, g.minus(i, v))];
                let mm = u[g.minus(j, g.minus(i, v))];
                let hij = (pp - pm - mp + mm) * inv4h2;
                a[i * d + j] = hij;
                a[j * d + i] = hij;
            }
        }
    }
    Ok(HessianField { dim: d, data })
}

/// `H u (grad u, grad u)`.
pub fn infinity_laplacian(domain: &Domain, u: &[f64]) -> Result<ScalarField> {
    let hess = hessian(domain, u)?;
    Ok(hess.quadratic(&gradient(domain, u)))
}

/// Pointwise Hilbert-Schmidt norm.
pub fn hs_norm(hess: &HessianField) -> ScalarField {
    ScalarField((0..hess.len()).map(|v| norm(hess.at(v))).collect())
}

pub fn integrate(domain: &Domain, f: &[f64]) -> f64 {
    f.iter().zip(&domain.measure).map(|(a, m)| a * m).sum()
}

pub fn mean(domain: &Domain, f: &[f64]) -> f64 {
    integrate(domain, f) / domain.total_measure()
}

/// `f - mean(f)`.
pub fn center(domain: &Domain, f: &[f64]) -> ScalarField {
    let c = mean(domain, f);
    ScalarField(f.iter().map(|x| x - c).collect())
}

/// Measure-weighted `L^p` norm; `p = inf` gives the max norm.
pub fn lp_norm(domain: &Domain, f: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return f.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    }
    f.iter().zip(&domain.measure).map(|(a, m)| a.abs().powf(p) * m).sum::<f64>().powf(1.0 / p)
}

/// `sum f g m`.
pub fn inner(domain: &Domain, f: &[f64], g: &[f64]) -> f64 {
    f.iter().zip(g).zip(&domain.measure).map(|((a, b), m)| a * b * m).sum()
}

/// Weights pairing vector fields: vertex measure on grids, edge weights on graphs.
pub fn support_weights(domain: &Domain) -> Vec<f64> {
    match &domain.kind {
        DomainKind::Grid(_) => domain.measure.clone(),
        DomainKind::Graph(g) => g.edges.iter().map(|e| e.weight).collect(),
    }
}

/// `sum <X, Y> mu` with the pairing of [`support_weights`].
pub fn inner_vec(domain: &Domain, x: &VectorField, y: &VectorField) -> f64 {
    let w = support_weights(domain);
    (0..x.len()).map(|s| dot(x.at(s), y.at(s)) * w[s]).sum()
}

/// Integral of a pointwise function of a vector field over its support.
pub fn integrate_support(domain: &Domain, vals: &[f64]) -> f64 {
    let w = support_weights(domain);
    vals.iter().zip(&w).map(|(a, b)| a * b).sum()
}

/// `L^p` norm of the pointwise magnitude of a vector field.
pub fn lp_norm_vec(domain: &Domain, x: &VectorField, p: f64) -> f64 {
    let mag = x.magnitude();
    if p.is_infinite() {
        return mag.iter().fold(0.0f64, |a, &b| a.max(b));
    }
    let vals: Vec<f64> = mag.iter().map(|a| a.powf(p)).collect();
    integrate_support(domain, &vals).powf(1.0 / p)
}

/// `|| grad u ||_p`.
pub fn grad_norm(domain: &Domain, u: &[f64], p: f64) -> f64 {
    lp_norm_vec(domain, &gradient(domain, u), p)
}
