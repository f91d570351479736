use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cfcc_smpc::{closed_loop_simulate, ConstraintKind, SimulationTrace, SolveStatus, StepStatus};
use serde::Serialize;

use crate::config::CaseConfig;
use crate::data::{round_trip, rows_from_trace, DataFile};
use crate::error::CliError;

pub fn run_case(cfg: &CaseConfig, seed: u64) -> Result<SimulationTrace, CliError> {
    let prob = cfg.problem()?;
    Ok(closed_loop_simulate(&prob, &cfg.initial_state(), cfg.steps, seed)?)
}

pub fn data_file(cfg: &CaseConfig, seed: u64, trace: &SimulationTrace) -> DataFile {
    let metadata = vec![
        ("config_sha256".to_string(), cfg.hash.clone()),
        ("seed".to_string(), seed.to_string()),
        ("dt_hours".to_string(), cfg.params.dt_hours.to_string()),
        ("inflow_r0".to_string(), cfg.params.inflow.to_string()),
    ];
    DataFile { metadata, rows: rows_from_trace(trace, cfg.params.dt_hours) }
}

#[derive(Debug, Serialize)]
struct StepSummary {
    k: usize,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    /// `Σ_j (h_{k+1,j} - ref_j)²` of the realised levels.
    stage_cost: f64,
    /// Expected cost of the optimised plan.
    predicted_cost: Option<f64>,
    iterations: Option<usize>,
    outer_iterations: Option<usize>,
    kkt_residual: Option<f64>,
    max_violation: Option<f64>,
    exact_evaluations: Option<usize>,
    screened_evaluations: Option<usize>,
    cf_batch_calls: Option<usize>,
    /// One-step-ahead probabilities at the applied plan.
    beta: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    config_sha256: String,
    seed: u64,
    steps: usize,
    dt_hours: f64,
    inflow_r0: f64,
    total_stage_cost: f64,
    failed_steps: usize,
    cf_batch_calls: usize,
    step: Vec<StepSummary>,
}

fn status_name(s: &StepStatus) -> &'static str {
    match s {
        StepStatus::Solved(SolveStatus::Converged) => "converged",
        StepStatus::Solved(SolveStatus::IterationLimit) => "iteration_limit",
        StepStatus::Solved(SolveStatus::Stalled) => "stalled",
        StepStatus::Failed(_) => "failed",
    }
}

fn constraint_name(kind: &ConstraintKind) -> String {
    match kind {
        ConstraintKind::OutputUpper { row, .. } => format!("flood{}", row + 1),
        ConstraintKind::OutputLower { row, .. } => format!("drought{}", row + 1),
        ConstraintKind::InputUpper { input, .. } => format!("release_max{}", input + 1),
        ConstraintKind::InputLower { input, .. } => format!("release_min{}", input + 1),
    }
}

pub fn summary(cfg: &CaseConfig, seed: u64, trace: &SimulationTrace) -> String {
    let r = round_trip;
    let steps: Vec<StepSummary> = trace
        .records
        .iter()
        .map(|rec| {
            let d = rec.diagnostics.as_ref();
            let stage: f64 = (0..3).map(|j| (rec.next_state[j] - cfg.params.y_ref[j]).powi(2)).sum();
            StepSummary {
                k: rec.step,
                status: status_name(&rec.status),
                message: match &rec.status {
                    StepStatus::Failed(m) => Some(m.clone()),
                    _ => None,
                },
                stage_cost: r(stage),
                predicted_cost: d.map(|d| r(d.cost)),
                iterations: d.map(|d| d.iterations),
                outer_iterations: d.map(|d| d.outer_iterations),
                kkt_residual: d.map(|d| r(d.kkt_residual)),
                max_violation: d.map(|d| r(d.max_violation)),
                exact_evaluations: d.map(|d| d.exact_evaluations),
                screened_evaluations: d.map(|d| d.screened_evaluations),
                cf_batch_calls: d.map(|d| d.cf_batch_calls),
                beta: rec.probabilities.iter().map(|(k, b)| (constraint_name(k), r(*b))).collect(),
            }
        })
        .collect();
    let s = Summary {
        config_sha256: cfg.hash.clone(),
        seed,
        steps: steps.len(),
        dt_hours: cfg.params.dt_hours,
        inflow_r0: cfg.params.inflow,
        total_stage_cost: r(steps.iter().map(|s| s.stage_cost).sum()),
        failed_steps: steps.iter().filter(|s| s.status == "failed").count(),
        cf_batch_calls: steps.iter().filter_map(|s| s.cf_batch_calls).sum(),
        step: steps,
    };
    toml::to_string(&s).expect("summary serializes")
}

/// Writes `trace_seed<S>.dat` and `summary_seed<S>.toml` into `dir`.
pub fn write_run(cfg: &CaseConfig, seed: u64, trace: &SimulationTrace, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Output { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let data = dir.join(format!("trace_seed{seed}.dat"));
    let summary_path = dir.join(format!("summary_seed{seed}.toml"));
    std::fs::write(&data, data_file(cfg, seed, trace).render()).map_err(io(&data))?;
    std::fs::write(&summary_path, summary(cfg, seed, trace)).map_err(io(&summary_path))?;
    Ok((data, summary_path))
}
