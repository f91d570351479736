use cfcc_core::{AffineChanceConstraint, Distribution, EvalOptions, SparseAffine};
use nalgebra::{DMatrix, DVector};

use crate::prediction::{build_prediction, AffineRow, FeedbackPolicy, PredictionModel};
use crate::solver::{HardBound, Objective, SolverOptions};
use crate::system::LinearSystem;
use crate::{Error, Result};

/// Chance levels for the three constraint classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Levels {
    /// `P(y ≤ y_max) ≥ upper`.
    pub upper: f64,
    /// `P(y ≥ y_min) ≥ lower`.
    pub lower: f64,
    /// Each side of `P(u_min ≤ u ≤ u_max)`.
    pub input: f64,
}

impl Levels {
    pub fn uniform(gamma: f64) -> Self {
        Self { upper: gamma, lower: gamma, input: gamma }
    }
}

#[derive(Debug, Clone)]
pub struct SmpcProblem {
    pub system: LinearSystem,
    pub policy: FeedbackPolicy,
    pub y_ref: Vec<f64>,
    pub y_max: Vec<f64>,
    pub y_min: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub levels: Levels,
    /// Weight of `‖L‖²` added to the cost inside the solver. The cost depends
    /// on the gains only through the disturbance means, so without it the
    /// gains are not determined by the cost.
    pub gain_regularization: f64,
    pub eval: EvalOptions,
    pub solver: SolverOptions,
}

impl SmpcProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        system: LinearSystem,
        horizon: usize,
        affine_feedback: bool,
        y_ref: Vec<f64>,
        y_max: Vec<f64>,
        y_min: Vec<f64>,
        u_min: Vec<f64>,
        u_max: Vec<f64>,
        levels: Levels,
    ) -> Result<Self> {
        let policy = FeedbackPolicy::new(horizon, system.n_u(), system.n_w(), affine_feedback)?;
        let (n_y, n_u) = (system.n_y(), system.n_u());
        if [&y_ref, &y_max, &y_min].iter().any(|v| v.len() != n_y) {
            return Err(Error::Dimension(format!("output bounds and reference must have length {n_y}")));
        }
        if u_min.len() != n_u || u_max.len() != n_u {
            return Err(Error::Dimension(format!("input bounds must have length {n_u}")));
        }
        for j in 0..n_y {
            if !(y_min[j] < y_ref[j] && y_ref[j] < y_max[j]) {
                return Err(Error::InvalidProblem(format!(
                    "output {j}: need y_min < y_ref < y_max, got {} / {} / {}",
                    y_min[j], y_ref[j], y_max[j]
                )));
            }
        }
        if u_min.iter().zip(&u_max).any(|(lo, hi)| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::InvalidProblem("need u_min < u_max".into()));
        }
        for (name, g) in [("upper", levels.upper), ("lower", levels.lower), ("input", levels.input)] {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidProblem(format!("{name} level must lie in [0, 1], got {g}")));
            }
        }
        let scale = u_min.iter().chain(&u_max).filter(|v| v.is_finite()).fold(1.0_f64, |m, v| m.max(v.abs()));
        let solver = SolverOptions { linear_scale: scale, ..SolverOptions::default() };
        Ok(Self {
            system,
            policy,
            y_ref,
            y_max,
            y_min,
            u_min,
            u_max,
            levels,
            gain_regularization: 1e-8,
            eval: EvalOptions::default(),
            solver,
        })
    }

    pub fn predict(&self, x0: &DVector<f64>) -> Result<PredictionModel> {
        build_prediction(&self.system, x0, self.policy)
    }

    /// Disturbance laws of the stacked vector `w_k, …, w_{k+N-1}`.
    pub fn stacked_disturbances(&self, len: usize) -> Vec<Distribution> {
        let d = &self.system.disturbances;
        (0..len).map(|k| d[k % d.len()].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    /// `P(y_{k+step, row} ≤ y_max) ≥ γ`.
    OutputUpper { step: usize, row: usize },
    /// `P(y_{k+step, row} ≥ y_min) ≥ γ`.
    OutputLower { step: usize, row: usize },
    InputUpper { step: usize, input: usize },
    InputLower { step: usize, input: usize },
}

impl ConstraintKind {
    pub fn step(&self) -> usize {
        match *self {
            Self::OutputUpper { step, .. }
            | Self::OutputLower { step, .. }
            | Self::InputUpper { step, .. }
            | Self::InputLower { step, .. } => step,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledConstraints {
    pub kinds: Vec<ConstraintKind>,
    pub chance: Vec<AffineChanceConstraint<SparseAffine>>,
    pub bounds: Vec<HardBound>,
}

fn chance_row(
    row: &AffineRow,
    sign: f64,
    bound: f64,
    dim: usize,
    laws: Vec<Distribution>,
    gamma: f64,
) -> Result<AffineChanceConstraint<SparseAffine>> {
    // sign·(a(z) + b(z)ᵀw - bound) ≤ 0
    let scaled = |terms: &[(usize, f64)]| terms.iter().map(|&(i, a)| (i, sign * a)).collect();
    let f = SparseAffine::new(
        dim,
        sign * (row.constant - bound),
        scaled(&row.z_terms),
        row.w_constant.iter().map(|v| sign * v).collect(),
        row.w_terms.iter().map(|t| scaled(t)).collect(),
    )?;
    Ok(AffineChanceConstraint::new(f, laws, gamma)?)
}

/// Output bounds at every predicted step, the first input as hard bounds,
/// later inputs as one chance constraint per side (hard bounds when the
/// gains are disabled, since the inputs are then deterministic).
pub fn compile_chance_constraints(pred: &PredictionModel, prob: &SmpcProblem) -> Result<CompiledConstraints> {
    if pred.policy != prob.policy || pred.n_y != prob.y_ref.len() {
        return Err(Error::Dimension("prediction was built for a different problem".into()));
    }
    let dim = pred.policy.dim();
    let mut kinds = Vec::new();
    let mut chance = Vec::new();
    let mut bounds = Vec::new();
    for (l, rows) in pred.outputs.iter().enumerate() {
        let step = l + 1;
        for (row, r) in rows.iter().enumerate() {
            let laws = prob.stacked_disturbances(r.components());
            kinds.push(ConstraintKind::OutputUpper { step, row });
            chance.push(chance_row(r, 1.0, prob.y_max[row], dim, laws.clone(), prob.levels.upper)?);
            kinds.push(ConstraintKind::OutputLower { step, row });
            chance.push(chance_row(r, -1.0, prob.y_min[row], dim, laws, prob.levels.lower)?);
        }
    }
    for (step, rows) in pred.inputs.iter().enumerate() {
        for (input, r) in rows.iter().enumerate() {
            if step == 0 || !pred.policy.affine {
                bounds.push(HardBound {
                    index: pred.policy.v_index(step, input),
                    lower: prob.u_min[input],
                    upper: prob.u_max[input],
                });
                continue;
            }
            let laws = prob.stacked_disturbances(r.components());
            kinds.push(ConstraintKind::InputUpper { step, input });
            chance.push(chance_row(r, 1.0, prob.u_max[input], dim, laws.clone(), prob.levels.input)?);
            kinds.push(ConstraintKind::InputLower { step, input });
            chance.push(chance_row(r, -1.0, prob.u_min[input], dim, laws, prob.levels.input)?);
        }
    }
    Ok(CompiledConstraints { kinds, chance, bounds })
}

/// `J(z) = Σ_{l=1}^{N} ‖E[y_{k+l}] - y_ref‖²` in the form
/// `Σ_r (e_r + a_rᵀz - ref_r)²` with dense `a_r`.
#[derive(Debug, Clone)]
pub struct ExpectedCost {
    dim: usize,
    offsets: Vec<f64>,
    rows: Vec<Vec<f64>>,
    gain_weight: f64,
    first_gain: usize,
    /// `(σ², b)` with `b` the gain coefficients of one disturbance in one
    /// output; only used to shape the preconditioner.
    spread: Vec<(f64, Vec<(usize, f64)>)>,
}

impl ExpectedCost {
    pub fn new(pred: &PredictionModel, prob: &SmpcProblem) -> Result<Self> {
        let dim = pred.policy.dim();
        let mut offsets = Vec::new();
        let mut rows = Vec::new();
        let mut spread = Vec::new();
        for step in &pred.outputs {
            let laws = prob.stacked_disturbances(step[0].components());
            let means: Vec<f64> = laws.iter().map(|d| d.mean()).collect::<Result<_, _>>()?;
            for (j, r) in step.iter().enumerate() {
                for (d, terms) in laws.iter().zip(&r.w_terms) {
                    if !terms.is_empty() {
                        spread.push((d.variance().unwrap_or_else(|| d.spread().powi(2)), terms.clone()));
                    }
                }
                let mut a = vec![0.0; dim];
                for &(i, v) in &r.z_terms {
                    a[i] += v;
                }
                let mut e = r.constant - prob.y_ref[j];
                for (k, mu) in means.iter().enumerate() {
                    e += r.w_constant[k] * mu;
                    for &(i, v) in &r.w_terms[k] {
                        a[i] += v * mu;
                    }
                }
                offsets.push(e);
                rows.push(a);
            }
        }
        Ok(Self { dim, offsets, rows, gain_weight: 0.0, first_gain: pred.policy.open_loop_len(), spread })
    }

    /// Adds `weight·‖L‖²` to the cost.
    pub fn with_gain_regularization(mut self, weight: f64) -> Self {
        self.gain_weight = weight;
        self
    }

    /// Predicted mean deviations `E[y] - y_ref`, step-major.
    pub fn deviations(&self, z: &[f64]) -> Vec<f64> {
        self.offsets.iter().zip(&self.rows).map(|(e, a)| e + a.iter().zip(z).map(|(a, z)| a * z).sum::<f64>()).collect()
    }
}

impl Objective for ExpectedCost {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let mut value = 0.0;
        for (d, a) in self.deviations(z).into_iter().zip(&self.rows) {
            value += d * d;
            for (g, a) in grad.iter_mut().zip(a) {
                *g += 2.0 * d * a;
            }
        }
        if self.gain_weight > 0.0 {
            for i in self.first_gain..self.dim {
                value += self.gain_weight * z[i] * z[i];
                grad[i] += 2.0 * self.gain_weight * z[i];
            }
        }
        value
    }

    fn curvature(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for a in &self.rows {
            for (h, a) in h.iter_mut().zip(a) {
                *h += 2.0 * a * a;
            }
        }
        for v in &mut h[self.first_gain..] {
            *v += 2.0 * self.gain_weight;
        }
        h
    }

    fn preconditioner(&self) -> Option<DMatrix<f64>> {
        let a = DMatrix::from_fn(self.rows.len(), self.dim, |r, i| self.rows[r][i]);
        let mut h = a.transpose() * a * 2.0;
        for (var, b) in &self.spread {
            for &(i, x) in b {
                for &(j, y) in b {
                    h[(i, j)] += 2.0 * var * x * y;
                }
            }
        }
        for i in self.first_gain..self.dim {
            h[(i, i)] += 2.0 * self.gain_weight;
        }
        Some(h)
    }
}

/// `(J(z), ∇J(z))` of the paper-form expected cost (no regularization).
pub fn expected_cost(pred: &PredictionModel, prob: &SmpcProblem, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let cost = ExpectedCost::new(pred, prob)?;
    if z.len() != cost.dim {
        return Err(Error::Dimension(format!("z has length {}, expected {}", z.len(), cost.dim)));
    }
    let mut grad = vec![0.0; cost.dim];
    let value = cost.evaluate(z, &mut grad);
    Ok((value, grad))
}
