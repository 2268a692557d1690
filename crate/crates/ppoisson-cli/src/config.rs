//! TOML run configuration. Every key is optional and unknown keys are errors.
//!
//! ```toml
//! [solver]
//! eps_schedule = [1e-1, 1e-2, 1e-3]
//! m_schedule = [10.0, 100.0, "inf"]
//! damping = 0.5
//!
//! [eigen]
//! restarts = 4
//!
//! [verify]
//! samples = 100000
//! seed = 7
//!
//! [output]
//! dir = "out"
//! field_format = "csv"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use ppoisson::eigen::EigenOptions;
use ppoisson::mesh::parse_real;
use ppoisson::solve::RhsForm;
use ppoisson::spectral::BochnerFactor;
use ppoisson::SolverConfig;
use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use crate::error::CliError;

/// A real that also accepts the strings `"inf"` and `"infinity"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                parse_real(v).map(Real).ok_or_else(|| E::custom(format!("`{v}` is not a number or \"inf\"")))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    #[default]
    Csv,
    Bin,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub inner_tol: Option<f64>,
    pub outer_tol: Option<f64>,
    pub poisson_tol: Option<f64>,
    pub max_inner: Option<usize>,
    pub max_outer: Option<usize>,
    pub damping: Option<f64>,
    pub max_halvings: Option<usize>,
    pub patience: Option<usize>,
    pub eps_schedule: Option<Vec<f64>>,
    pub m_schedule: Option<Vec<Real>>,
    pub rhs_form: Option<RhsForm>,
    pub bochner: Option<BochnerFactor>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSection {
    pub tol: Option<f64>,
    pub lambda_tol: Option<f64>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub drift_limit: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub field_format: Option<FieldFormat>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub eigen: EigenSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn solver(&self, p: f64) -> SolverConfig {
        let s = &self.solver;
        let mut c = SolverConfig::new(p);
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = s.$f.clone() { c.$f = v; })* };
        }
        set!(inner_tol, outer_tol, poisson_tol, max_inner, max_outer, damping, max_halvings, patience, eps_schedule, rhs_form, bochner);
        if let Some(m) = &s.m_schedule {
            c.m_schedule = m.iter().map(|r| r.0).collect();
        }
        c
    }

    pub fn eigen(&self) -> EigenOptions {
        let e = &self.eigen;
        let d = EigenOptions::default();
        EigenOptions {
            tol: e.tol.unwrap_or(d.tol),
            lambda_tol: e.lambda_tol.unwrap_or(d.lambda_tol),
            restarts: e.restarts.unwrap_or(d.restarts),
            seed: e.seed.unwrap_or(d.seed),
            max_iter: e.max_iter.unwrap_or(d.max_iter),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_infinity() {
        let c = RunConfig::parse(
            "[solver]\neps_schedule = [0.1, 0.01]\nm_schedule = [10, \"inf\"]\nrhs_form = \"developed\"\n[verify]\nseed = 7\n",
        )
        .unwrap();
        let s = c.solver(1.5);
        assert_eq!(s.eps_schedule, vec![0.1, 0.01]);
        assert_eq!(s.m_schedule, vec![10.0, f64::INFINITY]);
        assert_eq!(s.rhs_form, RhsForm::Developed);
        assert_eq!(c.verify.seed, Some(7));
        assert_eq!(c.eigen(), EigenOptions::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let e = RunConfig::parse("[solver]\ndampng = 0.5\n").unwrap_err().to_string();
        assert!(e.contains("dampng") && e.contains("line 2"), "{e}");
        assert!(RunConfig::parse("[solvr]\n").is_err());
        assert!(RunConfig::parse("[solver]\nm_schedule = [\"lots\"]\n").is_err());
    }
}
