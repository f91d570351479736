//! Case configuration: a TOML file with top-level run settings, one
//! `[lakeN]` table per lake, and optional `[chance]`, `[solver]` and
//! `[quadrature]` tables. Every key is optional; missing keys take the values
//! of the bundled `configs/three_lakes.toml`.

use std::path::Path;

use cfcc_core::{Distribution, EvalOptions, Tolerances};
use cfcc_smpc::{Levels, ReservoirParams, SmpcProblem};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feedback {
    None,
    Affine,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChance {
    flood: Option<f64>,
    drought: Option<f64>,
    release: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLake {
    area: Option<f64>,
    conveyance: Option<f64>,
    base_outflow: Option<f64>,
    rainfall: Option<String>,
    reference: Option<f64>,
    max: Option<f64>,
    min: Option<f64>,
    initial_level: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    kkt_tol: Option<f64>,
    max_iterations: Option<usize>,
    max_outer: Option<usize>,
    screening: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
    max_subdiv: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    horizon: Option<usize>,
    dt_hours: Option<f64>,
    duration_hours: Option<f64>,
    feedback: Option<Feedback>,
    inflow: Option<f64>,
    rain_to_level: Option<f64>,
    u_max: Option<f64>,
    #[serde(default)]
    chance: RawChance,
    #[serde(default)]
    lake1: RawLake,
    #[serde(default)]
    lake2: RawLake,
    #[serde(default)]
    lake3: RawLake,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    quadrature: RawQuadrature,
}

/// A validated case.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub seed: u64,
    pub params: ReservoirParams,
    /// Closed-loop steps, `duration_hours / dt_hours`.
    pub steps: usize,
    pub initial_levels: [f64; 3],
    pub kkt_tol: f64,
    pub max_iterations: usize,
    pub max_outer: usize,
    pub screening: bool,
    pub tolerances: Tolerances,
    /// SHA-256 of the config text.
    pub hash: String,
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn probability(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must lie in (0, 1), got {v}")))
    }
}

pub fn load_config(path: &Path) -> Result<CaseConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<CaseConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let d = ReservoirParams::default();
    let mut params = d.clone();

    params.horizon = raw.horizon.unwrap_or(d.horizon);
    if params.horizon == 0 {
        return Err(invalid("horizon", "must be at least 1"));
    }
    params.dt_hours = positive("dt_hours", raw.dt_hours.unwrap_or(d.dt_hours))?;
    let duration = positive("duration_hours", raw.duration_hours.unwrap_or(24.0))?;
    let ratio = duration / params.dt_hours;
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
        return Err(invalid("duration_hours", format!("must be a positive multiple of dt_hours, got {duration}")));
    }
    params.affine_feedback = raw.feedback.unwrap_or(Feedback::Affine) == Feedback::Affine;
    params.inflow = positive("inflow", raw.inflow.unwrap_or(d.inflow))?;
    params.rain_to_level = positive("rain_to_level", raw.rain_to_level.unwrap_or(d.rain_to_level))?;
    params.u_max = positive("u_max", raw.u_max.unwrap_or(d.u_max))?;
    params.levels = Levels {
        upper: probability("chance.flood", raw.chance.flood.unwrap_or(d.levels.upper))?,
        lower: probability("chance.drought", raw.chance.drought.unwrap_or(d.levels.lower))?,
        input: probability("chance.release", raw.chance.release.unwrap_or(d.levels.input))?,
    };

    let mut initial_levels = [0.0; 3];
    for (j, lake) in [&raw.lake1, &raw.lake2, &raw.lake3].into_iter().enumerate() {
        let name = format!("lake{}", j + 1);
        let field = |key: &str| format!("{name}.{key}");
        params.areas[j] = positive(&field("area"), lake.area.unwrap_or(d.areas[j]))?;
        if j < 2 {
            let eta = lake.conveyance.unwrap_or(d.conveyance[j]);
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(invalid(&field("conveyance"), format!("must lie in (0, 1], got {eta}")));
            }
            params.conveyance[j] = eta;
            params.base_outflow[j] = positive(&field("base_outflow"), lake.base_outflow.unwrap_or(d.base_outflow[j]))?;
        } else if lake.conveyance.is_some() || lake.base_outflow.is_some() {
            return Err(invalid(&field("conveyance"), "the last lake has no downstream river"));
        }
        if let Some(spec) = &lake.rainfall {
            params.rainfall[j] = spec
                .parse::<Distribution>()
                .map_err(|e| invalid(&field("rainfall"), e.to_string()))?;
        }
        let reference = lake.reference.unwrap_or(d.y_ref[j]);
        let (max, min) = (lake.max.unwrap_or(d.y_max[j]), lake.min.unwrap_or(d.y_min[j]));
        if ![reference, max, min].iter().all(|v| v.is_finite()) || !(min < reference && reference < max) {
            return Err(invalid(&field("reference"), format!("need min < reference < max, got {min} / {reference} / {max}")));
        }
        (params.y_ref[j], params.y_max[j], params.y_min[j]) = (reference, max, min);
        initial_levels[j] = lake.initial_level.unwrap_or(reference);
        if !initial_levels[j].is_finite() {
            return Err(invalid(&field("initial_level"), "must be finite"));
        }
    }

    let defaults = cfcc_smpc::SolverOptions::default();
    let kkt_tol = positive("solver.kkt_tol", raw.solver.kkt_tol.unwrap_or(defaults.kkt_tol))?;
    let max_iterations = raw.solver.max_iterations.unwrap_or(defaults.max_iterations);
    let max_outer = raw.solver.max_outer.unwrap_or(defaults.max_outer);
    if max_iterations == 0 {
        return Err(invalid("solver.max_iterations", "must be at least 1"));
    }
    if max_outer == 0 {
        return Err(invalid("solver.max_outer", "must be at least 1"));
    }
    let td = Tolerances::default();
    let tolerances = Tolerances {
        abs: positive("quadrature.abs_tol", raw.quadrature.abs_tol.unwrap_or(td.abs))?,
        rel: positive("quadrature.rel_tol", raw.quadrature.rel_tol.unwrap_or(td.rel))?,
        max_subdiv: raw.quadrature.max_subdiv.unwrap_or(td.max_subdiv),
    };
    if tolerances.max_subdiv == 0 {
        return Err(invalid("quadrature.max_subdiv", "must be at least 1"));
    }

    Ok(CaseConfig {
        seed: raw.seed.unwrap_or(0),
        params,
        steps: steps as usize,
        initial_levels,
        kkt_tol,
        max_iterations,
        max_outer,
        screening: raw.solver.screening.unwrap_or(defaults.screening),
        tolerances,
        hash: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

impl CaseConfig {
    pub fn problem(&self) -> Result<SmpcProblem, ConfigError> {
        let mut prob = self.params.problem().map_err(|e| invalid("lake parameters", e.to_string()))?;
        prob.solver.kkt_tol = self.kkt_tol;
        prob.solver.max_iterations = self.max_iterations;
        prob.solver.max_outer = self.max_outer;
        prob.solver.screening = self.screening;
        prob.eval = EvalOptions { tol: self.tolerances, ..EvalOptions::default() };
        Ok(prob)
    }

    /// Initial state: configured levels, river flows of the dry-weather
    /// steady releases.
    pub fn initial_state(&self) -> Vec<f64> {
        self.params.state(self.initial_levels)
    }
}
