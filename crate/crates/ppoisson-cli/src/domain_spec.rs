//! Domain spec strings:
//!
//! ```text
//! torus:<dim>:<n>[:<side>]     side defaults to 1
//! circle:<n>[:<length>]        length defaults to 2pi
//! graph:<path>                 graph file, see `Domain::parse_graph`
//! ```
//!
//! Lengths accept a plain number or a multiple of pi such as `2pi`.

use std::f64::consts::PI;
use std::path::Path;

use ppoisson::Domain;

use crate::error::CliError;

fn length(s: &str) -> Result<f64, CliError> {
    let bad = || CliError::Config(format!("`{s}` is not a length"));
    let v = match s.strip_suffix("pi") {
        Some("") => PI,
        Some(k) => k.parse::<f64>().map_err(|_| bad())? * PI,
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn count(s: &str) -> Result<usize, CliError> {
    s.parse().map_err(|_| CliError::Config(format!("`{s}` is not a count")))
}

pub fn parse_domain(spec: &str) -> Result<Domain, CliError> {
    let usage =
        || CliError::Config(format!("bad domain `{spec}`; expected torus:<dim>:<n>[:<side>], circle:<n>[:<length>] or graph:<path>"));
    let (kind, rest) = spec.split_once(':').ok_or_else(usage)?;
    let parts: Vec<&str> = rest.split(':').collect();
    let domain = match (kind, parts.as_slice()) {
        ("torus", [d, n]) => Domain::torus(count(d)?, count(n)?, 1.0),
        ("torus", [d, n, side]) => Domain::torus(count(d)?, count(n)?, length(side)?),
        ("circle", [n]) => Domain::circle(count(n)?, 2.0 * PI),
        ("circle", [n, len]) => Domain::circle(count(n)?, length(len)?),
        ("graph", _) => Domain::load_graph(Path::new(rest)),
        _ => return Err(usage()),
    };
    domain.map_err(|e| match e {
        ppoisson::Error::Io(io) => CliError::Config(format!("{rest}: {io}")),
        other => CliError::Config(format!("{spec}: {other}")),
    })
}
