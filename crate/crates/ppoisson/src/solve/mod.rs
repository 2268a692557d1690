//! Solving `Δ_p u = f` on closed domains.
//!
//! The scheme regularizes with `ε > 0` (and truncates large gradients at `M`
//! when `p < 2`), then finds a fixed point of the outer map `S` by damped
//! Picard iteration. Each evaluation of `S(w)` freezes the direction `v = ∇w`
//! and solves the linear non-divergence problem `𝓛_{v,ε}u = h` through the
//! Cordes contraction `Δu_{k+1} = Δu_k + θ(h - 𝓛u_k) - mean(θ(h - 𝓛u_k))`,
//! whose iterates converge in the `||Δ·||₂` norm at rate `≤ √α_p`.
//!
//! Two forms of the outer right-hand side are available. The developed form
//! `h = f/a(∇w)` with `a = ((|∇w|∧M)²+ε)^{(p-2)/2}` is exact for the continuum
//! operator, but on a grid the developed and divergence forms of the operator
//! differ at `O(h)`, so its fixed point solves a slightly different discrete
//! problem. The default adds the defect `𝓛_{∇w}(w) - div(a∇w)/a`, which
//! vanishes in the continuum; the fixed point then satisfies the discrete weak
//! equation `div(a∇u) = f` exactly.

pub mod poisson;
pub mod variational;

use serde::{Deserialize, Serialize};

use crate::calculus::{center, grad_norm, gradient, inner, integrate_support, laplacian, mean, ScalarField};
use crate::error::{Error, Result};
use crate::mesh::{Domain, DomainKind};
use crate::plap::{coefficients, flux, frozen_l, theta, RegParams};
use crate::serde_util::{finite_or_null, finite_or_null_vec};
use crate::spectral::{alpha_p, contraction_bound, lambda1, BochnerFactor};

pub use poisson::{poisson_solve, PoissonSolver};
pub use variational::{variational_solve, variational_solve_from, VariationalOptions};

/// Right-hand side used by the outer map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsForm {
    /// `h = f/a(∇w)`.
    Developed,
    /// `h = f/a(∇w) + 𝓛_{∇w}(w) - div(a∇w)/a`; fixed points solve the discrete weak equation.
    #[default]
    DivergenceConsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Exponent and the regularization used by a standalone [`Solver::outer_picard`].
    pub rp: RegParams,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub poisson_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Picard damping `τ`.
    pub damping: f64,
    /// Number of times `τ` may be halved after a stall or divergence before giving up.
    pub max_halvings: usize,
    /// Window length: a stall is declared when the smallest step over the
    /// last window is not 5% below the smallest over the window before.
    pub patience: usize,
    pub eps_schedule: Vec<f64>,
    /// Truncation levels paired with `eps_schedule`; only used when `p < 2`.
    pub m_schedule: Vec<f64>,
    pub rhs_form: RhsForm,
    pub bochner: BochnerFactor,
    /// Keep every continuation stage's solution in the record.
    pub keep_stages: bool,
}

impl SolverConfig {
    pub fn new(p: f64) -> Self {
        SolverConfig {
            rp: RegParams::new(p, 1e-8, f64::INFINITY),
            inner_tol: 1e-11,
            outer_tol: 1e-10,
            poisson_tol: 1e-13,
            max_inner: 500,
            max_outer: 3000,
            damping: 0.5,
            max_halvings: 4,
            patience: 25,
            eps_schedule: (1..=8).map(|j| 10f64.powi(-j)).collect(),
            m_schedule: (1..=8).map(|j| 10f64.powf(j as f64 / 2.0)).collect(),
            rhs_form: RhsForm::default(),
            bochner: BochnerFactor::default(),
            keep_stages: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        let p = self.rp.p;
        if !(p > 1.0 && p.is_finite()) {
            return bad(format!("p = {p} must lie in (1, ∞)"));
        }
        for (name, t) in [("inner_tol", self.inner_tol), ("outer_tol", self.outer_tol), ("poisson_tol", self.poisson_tol)] {
            if !(t > 0.0) {
                return bad(format!("{name} = {t} must be positive"));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping {} must lie in (0, 1]", self.damping));
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return bad("iteration caps must be positive".into());
        }
        if self.eps_schedule.is_empty() || self.eps_schedule.iter().any(|&e| !(e >= 1e-14)) {
            return bad("eps_schedule must be nonempty with entries >= 1e-14".into());
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_schedule must be strictly decreasing".into());
        }
        if p < 2.0 {
            if self.m_schedule.len() != self.eps_schedule.len() {
                return bad("m_schedule must pair with eps_schedule".into());
            }
            if self.m_schedule.iter().any(|&m| !(m > 0.0)) || self.m_schedule.windows(2).any(|w| w[1] < w[0]) {
                return bad("m_schedule must be positive and nondecreasing".into());
            }
        }
        if !(self.rp.eps >= 1e-14) {
            return bad(format!("eps = {} must be at least 1e-14", self.rp.eps));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub u: ScalarField,
    /// `||Δ(u_{k+1}-u_k)|| / ||Δ(u_k-u_{k-1})||`, recorded while above rounding level.
    pub ratios: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub eps: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub m: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub max_inner_ratio: f64,
    pub damping: f64,
    pub halvings: usize,
    /// `||∇(u_j - u_{j-1})||_p` to the previous stage.
    pub drift: Option<f64>,
    pub final_step: f64,
    pub energy: f64,
    /// Outer steps where the regularized energy went up after coming within `10·outer_tol`.
    pub late_energy_increases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveRecord {
    pub p: f64,
    #[serde(skip)]
    pub u: ScalarField,
    /// Weak residual of the regularized equation that was solved.
    pub residual: f64,
    /// Weak residual of the unregularized equation `Δ_p u = f`.
    pub residual_exact: f64,
    /// Largest inner ratio at each outer step of the final stage.
    #[serde(serialize_with = "finite_or_null_vec")]
    pub inner_ratios: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub eps_final: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub m_final: f64,
    /// `s` with `u = s·û`, where `û` solves the problem for `f/s^{p-1}`.
    pub rescale: f64,
    pub stages: Vec<StageRecord>,
    #[serde(skip)]
    pub stage_solutions: Vec<ScalarField>,
}

struct StageOutput {
    u: ScalarField,
    record: StageRecord,
    ratios: Vec<f64>,
}

/// Solver bound to one domain and configuration.
pub struct Solver<'d> {
    domain: &'d Domain,
    poisson: PoissonSolver<'d>,
    cfg: SolverConfig,
    basis: Vec<ScalarField>,
}

impl<'d> Solver<'d> {
    pub fn new(domain: &'d Domain, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Solver { domain, poisson: PoissonSolver::new(domain), cfg, basis: test_basis(domain) })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn poisson(&self) -> &PoissonSolver<'d> {
        &self.poisson
    }

    fn check_zero_mean(&self, f: &[f64]) -> Result<()> {
        let d = self.domain;
        let m = mean(d, f);
        let rms = (inner(d, f, f) / d.total_measure()).sqrt();
        if m.abs() > 1e-10 * rms {
            return Err(Error::NonzeroMean { mean: m, norm: rms });
        }
        Ok(())
    }

    fn require_grid(&self) -> Result<()> {
        match self.domain.kind {
            DomainKind::Grid(_) => Ok(()),
            DomainKind::Graph(_) => Err(Error::Unsupported("the Cordes scheme needs a grid domain".into())),
        }
    }

    fn theoretical_bound(&self) -> f64 {
        let d = self.domain;
        let k_minus = d.k_minus();
        let lam = if k_minus > 0.0 { lambda1(d, 1e-8).unwrap_or(f64::NAN) } else { 1.0 };
        contraction_bound(self.cfg.rp.p, d.n_dim, lam, k_minus, self.cfg.bochner)
    }

    /// Fixed point of `u ↦ T(u)` with `v = ∇w` frozen:
    /// `Δu_{k+1} = Δu_k + θ(f - 𝓛u_k) - mean(θ(f - 𝓛u_k))`, started at `w`.
    pub fn inner_fixed_point(&self, w: &[f64], f: &[f64], rp: &RegParams) -> Result<InnerResult> {
        self.require_grid()?;
        let d = self.domain;
        let v = gradient(d, w);
        let th = theta(&v, rp, d.n_dim)?;
        let mut u = ScalarField(w.to_vec());
        let mut lap_u = laplacian(d, &u);
        let mut prev_step: Option<f64> = None;
        let mut ratios = Vec::new();
        let mut bad = 0;
        for k in 1..=self.cfg.max_inner {
            let lu = frozen_l(d, &u, &v, rp)?;
            let g: Vec<f64> = (0..u.len()).map(|x| th[x] * (f[x] - lu[x])).collect();
            let gm = mean(d, &g);
            let rhs: Vec<f64> = (0..u.len()).map(|x| lap_u[x] + (g[x] - gm)).collect();
            let rhs = center(d, &rhs);
            let next = self.poisson.solve(&rhs, self.cfg.poisson_tol)?;
            let lap_next = laplacian(d, &next);
            let diff: Vec<f64> = lap_next.iter().zip(lap_u.iter()).map(|(a, b)| a - b).collect();
            let step = inner(d, &diff, &diff).sqrt();
            let scale = inner(d, &lap_next, &lap_next).sqrt();
            u = next;
            lap_u = lap_next;
            if let Some(prev) = prev_step {
                // ratios of steps already at rounding level carry no information
                if prev > 1e-13 * scale {
                    let r = step / prev;
                    ratios.push(r);
                    bad = if r >= 1.0 { bad + 1 } else { 0 };
                    if bad >= 3 {
                        return Err(Error::ContractionFailure { observed: r, bound: self.theoretical_bound() });
                    }
                }
            }
            if step <= self.cfg.inner_tol * scale || step == 0.0 {
                return Ok(InnerResult { u, ratios, iterations: k });
            }
            prev_step = Some(step);
        }
        Err(Error::IterationCap { what: "inner fixed point", iterations: self.cfg.max_inner, last: prev_step.unwrap_or(0.0) })
    }

    /// Outer right-hand side `h(ε, w)`.
    fn outer_rhs(&self, w: &[f64], f: &[f64], rp: &RegParams) -> Result<Vec<f64>> {
        let d = self.domain;
        let g = gradient(d, w);
        let a = coefficients(&g, rp);
        let base = (0..w.len()).map(|x| f[x] / a[x]);
        match self.cfg.rhs_form {
            RhsForm::Developed => Ok(base.collect()),
            RhsForm::DivergenceConsistent => {
                let lw = frozen_l(d, w, &g, rp)?;
                let dw = crate::calculus::divergence(d, &g.scale_pointwise(&a));
                Ok(base.zip(0..w.len()).map(|(b, x)| b + (lw[x] - dw[x] / a[x])).collect())
            }
        }
    }

    fn energy(&self, w: &[f64], f: &[f64], rp: &RegParams) -> f64 {
        let d = self.domain;
        let p = rp.p;
        let g2 = gradient(d, w).magnitude_sq();
        let dens: Vec<f64> = g2.iter().map(|&s| (s.min(rp.m * rp.m) + rp.eps).powf(0.5 * p) / p).collect();
        integrate_support(d, &dens) + inner(d, f, w)
    }

    fn stage(&self, f: &[f64], rp: &RegParams, warm: Option<&[f64]>) -> Result<StageOutput> {
        let d = self.domain;
        let p = rp.p;
        let nv = d.num_vertices();
        if p == 2.0 {
            // ε and M are invisible at p = 2: the outer map is constant, S(w) = Δ⁻¹f
            let u = self.poisson.solve(f, self.cfg.poisson_tol)?;
            let energy = self.energy(&u, f, rp);
            let record = StageRecord {
                eps: rp.eps,
                m: rp.m,
                outer_iterations: 1,
                inner_iterations: 1,
                max_inner_ratio: 0.0,
                damping: 1.0,
                halvings: 0,
                drift: None,
                final_step: 0.0,
                energy,
                late_energy_increases: 0,
            };
            return Ok(StageOutput { u, record, ratios: vec![0.0] });
        }
        self.require_grid()?;
        let start = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; nv]);
        let mut w = center(d, &start);
        let mut tau = self.cfg.damping;
        let mut halvings = 0;
        let start_w = w.clone();
        let mut history: Vec<f64> = Vec::new();
        let mut energy = self.energy(&w, f, rp);
        let mut rises = 0;
        let mut late_rises = 0;
        let mut inner_total = 0;
        let mut max_ratio = 0.0f64;
        let mut ratios = Vec::new();
        let mut last_step = f64::INFINITY;
        for k in 1..=self.cfg.max_outer {
            let h = self.outer_rhs(&w, f, rp)?;
            let s = self.inner_fixed_point(&w, &h, rp)?;
            inner_total += s.iterations;
            let rmax = s.ratios.iter().copied().fold(0.0, f64::max);
            max_ratio = max_ratio.max(rmax);
            ratios.push(rmax);
            let next = center(d, &w.iter().zip(s.u.iter()).map(|(a, b)| (1.0 - tau) * a + tau * b).collect::<Vec<_>>());
            let diff = next.sub(&w);
            let step = grad_norm(d, &diff, p);
            let scale = grad_norm(d, &next, p);
            w = next;
            last_step = step;
            let e = self.energy(&w, f, rp);
            if e > energy {
                rises += 1;
                if step <= 10.0 * self.cfg.outer_tol * scale {
                    late_rises += 1;
                }
            } else {
                rises = 0;
            }
            energy = e;
            if step <= self.cfg.outer_tol * scale || step == 0.0 {
                let record = StageRecord {
                    eps: rp.eps,
                    m: rp.m,
                    outer_iterations: k,
                    inner_iterations: inner_total,
                    max_inner_ratio: max_ratio,
                    damping: tau,
                    halvings,
                    drift: None,
                    final_step: step,
                    energy,
                    late_energy_increases: late_rises,
                };
                return Ok(StageOutput { u: w, record, ratios });
            }
            history.push(step);
            let window = self.cfg.patience;
            let stalled_window = history.len() >= 2 * window && {
                let recent = history[history.len() - window..].iter().copied().fold(f64::INFINITY, f64::min);
                let earlier = history[history.len() - 2 * window..history.len() - window].iter().copied().fold(f64::INFINITY, f64::min);
                recent > 0.95 * earlier
            };
            if !step.is_finite() || rises >= 10 || stalled_window {
                if halvings == self.cfg.max_halvings {
                    return Err(Error::Divergence { eps: rp.eps, halvings });
                }
                halvings += 1;
                tau *= 0.5;
                if !step.is_finite() {
                    w = start_w.clone();
                }
                history.clear();
                rises = 0;
                energy = self.energy(&w, f, rp);
            }
        }
        Err(Error::IterationCap { what: "outer Picard iteration", iterations: self.cfg.max_outer, last: last_step })
    }

    /// `(s, f/s^{p-1})` bringing `||f||₂` into a well-conditioned range.
    fn rescaling(&self, f: &[f64], p: f64) -> (f64, Vec<f64>) {
        let t = inner(self.domain, f, f).sqrt();
        if p == 2.0 || t == 0.0 || (1e-3..=1e3).contains(&t) {
            return (1.0, f.to_vec());
        }
        let s = t.powf(1.0 / (p - 1.0));
        (s, f.iter().map(|x| x / t).collect())
    }

    /// Damped Picard iteration for one `(ε, M)` pair, taken from `cfg.rp`.
    pub fn outer_picard(&self, f: &[f64]) -> Result<SolveRecord> {
        self.check_zero_mean(f)?;
        let rp = self.cfg.rp;
        let (s, fs) = self.rescaling(f, rp.p);
        let scaled = RegParams::new(rp.p, rp.eps / (s * s), rp.m / s);
        let out = self.stage(&fs, &scaled, None)?;
        let u = out.u.scaled(s);
        Ok(self.finish(f, u, rp, s, out.ratios, vec![(out.record, None)]))
    }

    /// Outer iteration along the `ε` (and, for `p < 2`, `M`) schedule with warm starts.
    pub fn continuation(&self, f: &[f64]) -> Result<SolveRecord> {
        self.check_zero_mean(f)?;
        let p = self.cfg.rp.p;
        let (s, fs) = self.rescaling(f, p);
        let mut stages: Vec<(StageRecord, Option<ScalarField>)> = Vec::new();
        let mut prev: Option<ScalarField> = None;
        let mut ratios = Vec::new();
        let mut last_rp = self.cfg.rp;
        for (j, &eps) in self.cfg.eps_schedule.iter().enumerate() {
            let m = if p < 2.0 { self.cfg.m_schedule[j] } else { f64::INFINITY };
            let rp = RegParams::new(p, eps, m);
            let scaled = RegParams::new(p, eps / (s * s), m / s);
            let mut out = self.stage(&fs, &scaled, prev.as_deref().map(|v| v.as_slice()))?;
            if let Some(pr) = &prev {
                out.record.drift = Some(s * grad_norm(self.domain, &out.u.sub(pr), p));
            }
            ratios = out.ratios;
            let keep = self.cfg.keep_stages.then(|| out.u.scaled(s));
            stages.push((out.record, keep));
            prev = Some(out.u);
            last_rp = rp;
        }
        let u = prev.expect("nonempty schedule").scaled(s);
        Ok(self.finish(f, u, last_rp, s, ratios, stages))
    }

    fn finish(
        &self,
        f: &[f64],
        u: ScalarField,
        rp: RegParams,
        s: f64,
        inner_ratios: Vec<f64>,
        stages: Vec<(StageRecord, Option<ScalarField>)>,
    ) -> SolveRecord {
        let residual = weak_residual(self.domain, &self.basis, &u, f, &rp);
        let residual_exact = weak_residual(self.domain, &self.basis, &u, f, &RegParams::exact(rp.p));
        let outer_iterations = stages.iter().map(|s| s.0.outer_iterations).sum();
        let inner_iterations = stages.iter().map(|s| s.0.inner_iterations).sum();
        let (records, sols): (Vec<StageRecord>, Vec<Option<ScalarField>>) = stages.into_iter().unzip();
        SolveRecord {
            p: rp.p,
            u,
            residual,
            residual_exact,
            inner_ratios,
            outer_iterations,
            inner_iterations,
            eps_final: rp.eps,
            m_final: rp.m,
            rescale: s,
            stages: records,
            stage_solutions: sols.into_iter().flatten().collect(),
        }
    }

    /// Theoretical inner rate `√α_p` on a flat domain.
    pub fn alpha_rate(&self) -> f64 {
        alpha_p(self.cfg.rp.p, self.domain.n_dim).sqrt()
    }
}

/// Deterministic test functions for the weak residual: `(2d+1)`-point bumps at
/// 64 hashed vertices plus 8 low-frequency trigonometric fields on grids.
/// Graphs use bumps over vertex neighborhoods only.
pub fn test_basis(domain: &Domain) -> Vec<ScalarField> {
    let nv = domain.num_vertices();
    let mut out = Vec::new();
    let bumps = match domain.kind {
        DomainKind::Grid(_) => 64,
        DomainKind::Graph(_) => 72,
    };
    let mut seen = std::collections::BTreeSet::new();
    for k in 0..bumps as u64 {
        let v = ((k.wrapping_mul(2_654_435_761) + 12_345) % nv as u64) as usize;
        if !seen.insert(v) {
            continue;
        }
        let mut phi = vec![0.0; nv];
        phi[v] = 1.0;
        match &domain.kind {
            DomainKind::Grid(g) => {
                for axis in 0..g.dim {
                    phi[g.plus(axis, v)] = 0.5;
                    phi[g.minus(axis, v)] = 0.5;
                }
            }
            DomainKind::Graph(g) => {
                for &(_, w) in g.incident(v) {
                    phi[w] = 0.5;
                }
            }
        }
        out.push(ScalarField(phi));
    }
    if let DomainKind::Grid(g) = &domain.kind {
        let two_pi = 2.0 * std::f64::consts::PI / g.side;
        let mut modes = Vec::new();
        for freq in 1..=8 {
            for axis in 0..g.dim {
                modes.push((freq as f64, axis));
            }
        }
        for &(freq, axis) in modes.iter().take(4) {
            out.push(ScalarField::from_fn(domain, |x| (two_pi * freq * x[axis]).cos()));
            out.push(ScalarField::from_fn(domain, |x| (two_pi * freq * x[axis]).sin()));
        }
    }
    out
}

/// `max_φ |Σ⟨flux(u),∇φ⟩ + Σfφ| / ||∇φ||_{p'}` over the basis.
pub fn weak_residual(domain: &Domain, basis: &[ScalarField], u: &[f64], f: &[f64], rp: &RegParams) -> f64 {
    let fl = flux(domain, u, rp);
    let q = rp.p / (rp.p - 1.0);
    basis
        .iter()
        .map(|phi| {
            let g = gradient(domain, phi);
            let pairing = crate::calculus::inner_vec(domain, &fl, &g) + inner(domain, f, phi);
            pairing.abs() / crate::calculus::lp_norm_vec(domain, &g, q)
        })
        .fold(0.0, f64::max)
}

/// Clamp `f` to `[-n, n]` and subtract the mean of the result.
pub fn truncate_rhs(domain: &Domain, f: &[f64], n: f64) -> Result<ScalarField> {
    if !(n > 0.0) {
        return Err(Error::Parameter(format!("truncation level {n} must be positive")));
    }
    let clamped: Vec<f64> = f.iter().map(|x| x.clamp(-n, n)).collect();
    Ok(center(domain, &clamped))
}
