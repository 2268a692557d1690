//! Named checks of the pointwise inequalities and integral estimates.
//!
//! Algebraic inequalities ([`algebra`]) pass or fail outright at a relative
//! tolerance. Integral estimates ([`estimates`]) carry unspecified constants,
//! so each report fits the least constant over its sample and "pass" means the
//! constant is finite; stability across a grid refinement is judged by
//! [`refinement_drift`].

use std::collections::BTreeMap;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::calculus::ScalarField;
use crate::mesh::Domain;
use crate::serde_util::{finite_or_null, finite_or_null_vec};

pub mod algebra;
pub mod estimates;

/// Relative tolerance for the algebraic checks.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Parameters attached to a report. Non-finite values serialize as `null`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Context(pub BTreeMap<String, f64>);

impl Serialize for Context {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, &if v.is_finite() { Some(*v) } else { None })?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub name: String,
    #[serde(serialize_with = "finite_or_null")]
    pub lhs: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub rhs: f64,
    /// Least `C` with `lhs <= C rhs` over the sample.
    #[serde(serialize_with = "finite_or_null")]
    pub fitted_constant: f64,
    pub pass: bool,
    pub context: Context,
}

impl EstimateReport {
    pub fn new(name: &str, lhs: f64, rhs: f64, fitted_constant: f64, pass: bool) -> Self {
        EstimateReport { name: name.to_string(), lhs, rhs, fitted_constant, pass, context: Context::default() }
    }

    /// A report for `lhs <= C rhs` with `C = lhs / rhs`; `0/0` counts as `C = 0`.
    pub fn fitted(name: &str, lhs: f64, rhs: f64) -> Self {
        let c = ratio(lhs, rhs);
        Self::new(name, lhs, rhs, c, c.is_finite())
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.context.0.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.context.0.get(key).copied()
    }
}

/// `a / b` with `0/0 = 0` and `a/0 = ∞` for `a > 0`.
pub(crate) fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub name: String,
    pub sizes: Vec<usize>,
    #[serde(serialize_with = "finite_or_null_vec")]
    pub constants: Vec<f64>,
    /// Largest `max(c_{k+1}/c_k, c_k/c_{k+1})` over consecutive refinements.
    #[serde(serialize_with = "finite_or_null")]
    pub max_ratio: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Drift of fitted constants along a refinement family; passes when every
/// consecutive ratio is below `limit`.
pub fn refinement_drift(name: &str, sizes: &[usize], constants: &[f64], limit: f64) -> DriftReport {
    let mut max_ratio: f64 = 1.0;
    for w in constants.windows(2) {
        let r = if w[0] == 0.0 && w[1] == 0.0 { 1.0 } else { ratio(w[0].max(w[1]), w[0].min(w[1])) };
        max_ratio = if r.is_nan() { f64::INFINITY } else { max_ratio.max(r) };
    }
    let finite = constants.iter().all(|c| c.is_finite());
    DriftReport {
        name: name.to_string(),
        sizes: sizes.to_vec(),
        constants: constants.to_vec(),
        max_ratio,
        limit,
        pass: finite && max_ratio < limit,
    }
}

/// Clamped radial tent: 1 on `B_r(center)`, 0 outside `B_R(center)`, linear in
/// the distance between, so `Lip(η) = 1/(R-r) <= 2/(R-r)`.
pub fn tent_cutoff(domain: &Domain, center: usize, r: f64, big_r: f64) -> ScalarField {
    ScalarField((0..domain.num_vertices()).map(|v| ((big_r - domain.distance(center, v)) / (big_r - r)).clamp(0.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::gradient;

    #[test]
    fn drift_ratios() {
        let d = refinement_drift("x", &[32, 64, 128], &[1.0, 1.5, 1.2], 2.0);
        assert!((d.max_ratio - 1.5).abs() < 1e-15 && d.pass);
        assert!(!refinement_drift("x", &[32, 64], &[1.0, 0.4], 2.0).pass);
        assert!(refinement_drift("x", &[32, 64], &[0.0, 0.0], 2.0).pass);
        assert!(!refinement_drift("x", &[32, 64], &[0.0, 1.0], 2.0).pass);
        assert!(!refinement_drift("x", &[32, 64], &[1.0, f64::INFINITY], 2.0).pass);
    }

    #[test]
    fn tent_lipschitz_and_support() {
        let d = Domain::torus(2, 32, 1.0).unwrap();
        let (r, big_r) = (0.1, 0.3);
        let eta = tent_cutoff(&d, 0, r, big_r);
        let lip = gradient(&d, &eta).magnitude().into_iter().fold(0.0, f64::max);
        // a forward difference of a 1-Lipschitz distance is at most √d times larger
        assert!(lip <= 2f64.sqrt() / (big_r - r) + 1e-12);
        for v in 0..d.num_vertices() {
            let dist = d.distance(0, v);
            if dist <= r {
                assert_eq!(eta[v], 1.0);
            }
            if dist >= big_r {
                assert_eq!(eta[v], 0.0);
            }
        }
    }

    #[test]
    fn report_json_writes_null_for_infinity() {
        let r = EstimateReport::fitted("x", 1.0, 0.0).with("M", f64::INFINITY);
        assert!(!r.pass);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"fitted_constant\":null") && s.contains("\"M\":null"), "{s}");
    }
}
