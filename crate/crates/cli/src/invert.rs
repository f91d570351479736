use std::fmt;

use cfcc_core::inversion::invert;
use cfcc_core::{Distribution, Inversion, Tolerances};

use crate::error::{CliError, ConfigError};

/// Relative tolerance `tol`, absolute tolerance `tol / 100`.
pub fn tolerances(tol: f64) -> Result<Tolerances, ConfigError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(ConfigError::Invalid { field: "tol".into(), reason: format!("must be positive, got {tol}") });
    }
    Ok(Tolerances { abs: tol * 1e-2, rel: tol, ..Tolerances::default() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertReport {
    pub distribution: Distribution,
    pub x: f64,
    pub result: Inversion,
}

pub fn invert_spec(spec: &str, x: f64, tol: f64) -> Result<InvertReport, CliError> {
    let distribution: Distribution =
        spec.parse().map_err(|e: cfcc_core::Error| ConfigError::Invalid { field: "dist_spec".into(), reason: e.to_string() })?;
    if !x.is_finite() {
        return Err(ConfigError::Invalid { field: "x".into(), reason: format!("must be finite, got {x}") }.into());
    }
    let result = invert(&distribution, x, &tolerances(tol)?)?;
    Ok(InvertReport { distribution, x, result })
}

impl fmt::Display for InvertReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.result;
        writeln!(f, "distribution   {}", self.distribution)?;
        writeln!(f, "x              {}", self.x)?;
        writeln!(f, "F(x)           {:.12}", r.cdf)?;
        writeln!(f, "p(x)           {:.12}", r.pdf)?;
        writeln!(f, "error          {:.3e}", r.error_estimate)?;
        writeln!(f, "batch_calls    {}", r.counters.batch_calls)?;
        writeln!(f, "subintervals   {}", r.counters.subintervals)?;
        write!(f, "nodes          {}", r.counters.node_evaluations)
    }
}
