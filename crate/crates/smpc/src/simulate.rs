use cfcc_core::Distribution;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::problem::{compile_chance_constraints, ConstraintKind, ExpectedCost, SmpcProblem};
use crate::solver::{solve, Diagnostics, SolveStatus};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum StepStatus {
    Solved(SolveStatus),
    /// The solve failed; the warm start was applied instead.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// `x_k`.
    pub state: Vec<f64>,
    /// Applied `u_k`, clipped to the input bounds.
    pub input: Vec<f64>,
    /// Realised `w_k`.
    pub disturbance: Vec<f64>,
    /// `x_{k+1}`.
    pub next_state: Vec<f64>,
    pub status: StepStatus,
    /// Solver diagnostics without the merit history.
    pub diagnostics: Option<Diagnostics>,
    /// `β` of the one-step-ahead output constraints at the applied plan
    /// (NaN if the evaluation failed).
    pub probabilities: Vec<(ConstraintKind, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub records: Vec<StepRecord>,
}

impl SimulationTrace {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.records.last().map(|r| r.next_state.as_slice())
    }
}

/// Start point for the first solve: mid-range open-loop inputs, zero gains.
pub fn initial_guess(prob: &SmpcProblem) -> Vec<f64> {
    let p = &prob.policy;
    let mut z = vec![0.0; p.dim()];
    for l in 0..p.horizon {
        for r in 0..p.n_u {
            let (lo, hi) = (prob.u_min[r], prob.u_max[r]);
            z[p.v_index(l, r)] = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => 0.0,
            };
        }
    }
    z
}

/// Optimised decision vector of one receding-horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub z: Vec<f64>,
    pub diagnostics: Diagnostics,
    /// `β` of the one-step-ahead output constraints.
    pub probabilities: Vec<(ConstraintKind, f64)>,
}

/// Solve from `x` at absolute time `k`.
pub fn plan(prob: &SmpcProblem, x: &DVector<f64>, k: usize, z0: &[f64]) -> Result<Plan> {
    let mut shifted = prob.clone();
    shifted.system = prob.system.shifted(k);
    let pred = shifted.predict(x)?;
    let compiled = compile_chance_constraints(&pred, &shifted)?;
    let cost = ExpectedCost::new(&pred, &shifted)?.with_gain_regularization(prob.gain_regularization);
    let sol = solve(&cost, &compiled.chance, &compiled.bounds, z0, &prob.solver, &prob.eval)?;
    let probabilities = compiled
        .kinds
        .iter()
        .zip(&compiled.chance)
        .filter(|(k, _)| matches!(k, ConstraintKind::OutputUpper { step: 1, .. } | ConstraintKind::OutputLower { step: 1, .. }))
        .map(|(k, c)| (*k, c.probability(&sol.z, &prob.eval).unwrap_or(f64::NAN)))
        .collect();
    let mut diagnostics = sol.diagnostics;
    diagnostics.merit_history.clear();
    Ok(Plan { z: sol.z, diagnostics, probabilities })
}

/// Receding-horizon loop with disturbances supplied by `draw(k)`.
pub fn closed_loop_with(
    prob: &SmpcProblem,
    x0: &[f64],
    steps: usize,
    mut draw: impl FnMut(usize) -> Vec<f64>,
) -> Result<SimulationTrace> {
    if steps == 0 {
        return Err(Error::InvalidProblem("simulation needs at least one step".into()));
    }
    let sys = &prob.system;
    if x0.len() != sys.n_x() {
        return Err(Error::Dimension(format!("initial state has length {}, expected {}", x0.len(), sys.n_x())));
    }
    let mut x = DVector::from_column_slice(x0);
    let mut z = initial_guess(prob);
    let mut trace = SimulationTrace { records: Vec::with_capacity(steps) };
    for k in 0..steps {
        let (status, diagnostics, probabilities) = match plan(prob, &x, k, &z) {
            Ok(p) => {
                z = p.z;
                (StepStatus::Solved(p.diagnostics.status), Some(p.diagnostics), p.probabilities)
            }
            Err(e) => (StepStatus::Failed(e.to_string()), None, Vec::new()),
        };
        let u: Vec<f64> = (0..sys.n_u())
            .map(|r| z[prob.policy.v_index(0, r)].clamp(prob.u_min[r], prob.u_max[r]))
            .collect();
        let w = draw(k);
        if w.len() != sys.n_w() {
            return Err(Error::Dimension(format!("disturbance draw has length {}, expected {}", w.len(), sys.n_w())));
        }
        let next = sys.step(&x, &DVector::from_column_slice(&u), &DVector::from_column_slice(&w), k);
        trace.records.push(StepRecord {
            step: k,
            state: x.iter().copied().collect(),
            input: u,
            disturbance: w,
            next_state: next.iter().copied().collect(),
            status,
            diagnostics,
            probabilities,
        });
        x = next;
        z = prob.policy.shift(&z);
    }
    Ok(trace)
}

/// Disturbances sampled from the system laws with a ChaCha8 stream seeded by
/// `seed`.
pub fn closed_loop_simulate(prob: &SmpcProblem, x0: &[f64], steps: usize, seed: u64) -> Result<SimulationTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let laws: Vec<Distribution> = prob.system.disturbances.clone();
    closed_loop_with(prob, x0, steps, |_| laws.iter().map(|d| d.sample_one(&mut rng)).collect())
}
