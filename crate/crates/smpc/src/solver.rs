//! Augmented-Lagrangian solver for a smooth cost under chance constraints
//! `γ - β_i(z) ≤ 0` and box bounds on single variables.
//!
//! Each outer iteration minimises
//!
//! ```text
//! M(z) = f(z) + Σ_i ψ(c_i(z), μ_i, ρ),
//! ψ(c, μ, ρ) = μc + ρc²/2      if μ + ρc > 0
//!            = -μ²/(2ρ)        otherwise
//! ```
//!
//! with limited-memory BFGS and Armijo backtracking, then updates
//! `μ ← max(0, μ + ρc)`. The quasi-Newton model starts from the cost's
//! Hessian when the objective provides one and from its diagonal otherwise.
//! Stationarity is measured with the gradient divided by the square root of
//! that diagonal.
//!
//! A chance constraint whose Cantelli bound already guarantees
//! `γ - β ≤ -μ/ρ` contributes the constant `-μ²/(2ρ)` and is not inverted.
//! A chance constraint with `g(z) = 0` is deterministic; its residual is
//! replaced by the normalised `q(z)`, which carries a useful gradient where
//! `β` is a step function.

use std::collections::VecDeque;

use cfcc_core::{parallel, AffineChanceConstraint, AffineFunctions, EvalOptions};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::{Error, Result};

pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Value at `z`; writes the gradient into `grad`.
    fn evaluate(&self, z: &[f64], grad: &mut [f64]) -> f64;

    /// Nonnegative estimate of the Hessian diagonal, used for scaling.
    fn curvature(&self) -> Vec<f64>;

    /// Positive definite approximation of the Hessian; used as the initial
    /// inverse-Hessian model of the quasi-Newton iteration when given.
    fn preconditioner(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// `lower ≤ z[index] ≤ upper`; either side may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardBound {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Budget of inner iterations summed over all outer iterations.
    pub max_iterations: usize,
    pub max_outer: usize,
    pub kkt_tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub memory: usize,
    /// Skip inversions whose Cantelli bound settles the penalty term.
    pub screening: bool,
    /// Divides bound residuals and deterministic surrogates.
    pub linear_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            max_outer: 50,
            kkt_tol: 1e-5,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            memory: 8,
            screening: true,
            linear_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// Budget exhausted; the best iterate is returned.
    IterationLimit,
    /// The line search made no progress; the best iterate is returned.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub cost: f64,
    /// Largest constraint residual (probability units for chance
    /// constraints, scaled units for bounds).
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub exact_evaluations: usize,
    pub screened_evaluations: usize,
    pub cf_batch_calls: usize,
    /// `(outer iteration, merit)` at the start of every inner loop and after
    /// every accepted step.
    pub merit_history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub z: Vec<f64>,
    /// Chance-constraint multipliers, then lower and upper bound multipliers
    /// interleaved per bound.
    pub multipliers: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Default)]
struct Counts {
    exact: usize,
    screened: usize,
    cf_calls: usize,
}

#[derive(Clone)]
struct Point {
    z: Vec<f64>,
    cost: f64,
    merit: f64,
    grad: Vec<f64>,
    residuals: Vec<f64>,
    /// `√ρ·∇c_i` of the penalty terms in their quadratic branch.
    active: Vec<Vec<f64>>,
}

struct Term {
    residual: f64,
    gradient: Option<Vec<f64>>,
    exact: bool,
    cf_calls: usize,
}

fn chance_term<F: AffineFunctions>(
    c: &AffineChanceConstraint<F>,
    z: &[f64],
    threshold: f64,
    opts: &SolverOptions,
    eval: &EvalOptions,
) -> Result<Term> {
    let gamma = c.gamma();
    let settled = |residual| Term { residual, gradient: None, exact: false, cf_calls: 0 };
    if gamma == 0.0 {
        return Ok(settled(-1.0));
    }
    let f = c.functions();
    let mut g = vec![0.0; f.components()];
    f.g(z, &mut g);
    if g.iter().all(|v| *v == 0.0) {
        let mut grad = vec![0.0; z.len()];
        f.grad_q(z, &mut grad);
        grad.iter_mut().for_each(|v| *v /= opts.linear_scale);
        return Ok(Term { residual: f.q(z) / opts.linear_scale, gradient: Some(grad), exact: false, cf_calls: 0 });
    }
    if opts.screening {
        let bound = gamma - c.probability_lower_bound(z);
        if bound <= threshold {
            return Ok(settled(bound));
        }
    }
    let e = c.evaluate(z, eval, true)?;
    Ok(Term {
        residual: gamma - e.probability,
        gradient: Some(e.gradient.into_iter().map(|v| -v).collect()),
        exact: true,
        cf_calls: e.cf_batch_calls + e.cf_prime_batch_calls,
    })
}

struct Merit<'a, O, F> {
    objective: &'a O,
    chance: &'a [AffineChanceConstraint<F>],
    bounds: &'a [HardBound],
    opts: &'a SolverOptions,
    eval: &'a EvalOptions,
}

fn add_penalty(
    merit: &mut f64,
    grad: &mut [f64],
    active: &mut Vec<Vec<f64>>,
    c: f64,
    grad_c: Option<&[f64]>,
    mu: f64,
    rho: f64,
) {
    let m = mu + rho * c;
    if m > 0.0 {
        *merit += mu * c + 0.5 * rho * c * c;
        if let Some(gc) = grad_c {
            for (g, v) in grad.iter_mut().zip(gc) {
                *g += m * v;
            }
            active.push(gc.iter().map(|v| rho.sqrt() * v).collect());
        }
    } else {
        *merit -= mu * mu / (2.0 * rho);
    }
}

impl<O: Objective, F: AffineFunctions + Sync> Merit<'_, O, F> {
    fn evaluate(&self, z: Vec<f64>, mu: &[f64], rho: f64, counts: &mut Counts) -> Result<Point> {
        let n = z.len();
        let mut grad = vec![0.0; n];
        let cost = self.objective.evaluate(&z, &mut grad);
        if !cost.is_finite() {
            return Err(Error::InvalidProblem("cost is not finite".into()));
        }
        let mut merit = cost;
        let indices: Vec<usize> = (0..self.chance.len()).collect();
        let terms = parallel::map(&indices, |&i| {
            chance_term(&self.chance[i], &z, -mu[i] / rho, self.opts, self.eval)
        });
        let mut residuals = Vec::with_capacity(self.chance.len() + 2 * self.bounds.len());
        let mut active = Vec::new();
        for (i, t) in terms.into_iter().enumerate() {
            let t = t?;
            if t.exact {
                counts.exact += 1;
            } else if t.gradient.is_none() {
                counts.screened += 1;
            }
            counts.cf_calls += t.cf_calls;
            add_penalty(&mut merit, &mut grad, &mut active, t.residual, t.gradient.as_deref(), mu[i], rho);
            residuals.push(t.residual);
        }
        let s = self.opts.linear_scale;
        for (k, b) in self.bounds.iter().enumerate() {
            let base = self.chance.len() + 2 * k;
            for (side, (limit, sign)) in [(b.lower, -1.0), (b.upper, 1.0)].into_iter().enumerate() {
                let c = if limit.is_finite() { sign * (z[b.index] - limit) / s } else { -1.0 };
                let mut gc = vec![0.0; n];
                gc[b.index] = sign / s;
                add_penalty(&mut merit, &mut grad, &mut active, c, Some(&gc), mu[base + side], rho);
                residuals.push(c);
            }
        }
        Ok(Point { z, cost, merit, grad, residuals, active })
    }
}

fn inf_norm_scaled(grad: &[f64], scale: &[f64]) -> f64 {
    grad.iter().zip(scale).fold(0.0_f64, |m, (g, s)| m.max((g / s).abs()))
}

enum Metric {
    Diagonal(Vec<f64>),
    Factored(Cholesky<f64, Dyn>),
}

impl Metric {
    fn solve(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diagonal(d) => v.iter().zip(d).map(|(v, d)| v / d).collect(),
            Metric::Factored(chol) => chol.solve(&DVector::from_column_slice(v)).data.into(),
        }
    }
}

/// `(P + UUᵀ)⁻¹` by the Woodbury identity, `P` the cost model and `U` the
/// active penalty gradients.
struct InverseModel<'a> {
    metric: &'a Metric,
    /// `P⁻¹U`, one column per active term.
    w: Vec<Vec<f64>>,
    capacitance: Option<Cholesky<f64, Dyn>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> InverseModel<'a> {
    fn new(metric: &'a Metric, active: &[Vec<f64>]) -> Self {
        let w: Vec<Vec<f64>> = active.iter().map(|u| metric.solve(u)).collect();
        let k = w.len();
        let capacitance = (k > 0)
            .then(|| DMatrix::from_fn(k, k, |i, j| dot(&active[i], &w[j]) + if i == j { 1.0 } else { 0.0 }))
            .and_then(Cholesky::new);
        Self { metric, w, capacitance }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut r = self.metric.solve(v);
        if let Some(c) = &self.capacitance {
            let rhs = DVector::from_iterator(self.w.len(), self.w.iter().map(|w| dot(w, v)));
            let coef = c.solve(&rhs);
            for (w, a) in self.w.iter().zip(coef.iter()) {
                for (r, w) in r.iter_mut().zip(w) {
                    *r -= a * w;
                }
            }
        }
        r
    }
}

/// L-BFGS two-loop recursion on pairs `(s, y)` in `z` space, started from
/// the Gauss-Newton model of the merit function.
fn direction(grad: &[f64], model: &InverseModel, memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let a = dot(s, &q) / dot(y, s);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let mut q = model.apply(&q);
    for ((s, y), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = dot(y, &q) / dot(y, s);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.into_iter().map(|v| -v).collect()
}

/// Minimise `objective` subject to `chance` and `bounds` from `z0`.
pub fn solve<O: Objective, F: AffineFunctions + Sync>(
    objective: &O,
    chance: &[AffineChanceConstraint<F>],
    bounds: &[HardBound],
    z0: &[f64],
    opts: &SolverOptions,
    eval: &EvalOptions,
) -> Result<Solution> {
    let n = objective.dim();
    if z0.len() != n {
        return Err(Error::Dimension(format!("initial point has length {}, expected {n}", z0.len())));
    }
    if let Some(v) = z0.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidProblem(format!("initial point is not finite: {v}")));
    }
    if chance.iter().any(|c| c.dim() != n) || bounds.iter().any(|b| b.index >= n) {
        return Err(Error::Dimension("constraint dimension does not match the cost".into()));
    }
    let curvature = objective.curvature();
    let floor = 1e-2 * curvature.iter().fold(0.0_f64, |m, v| m.max(*v));
    let scale: Vec<f64> =
        curvature.iter().map(|h| if floor > 0.0 { (h + floor).sqrt() } else { 1.0 }).collect();

    let metric = objective
        .preconditioner()
        .and_then(|mut h| {
            let shift = 1e-12 * h.diagonal().amax().max(f64::MIN_POSITIVE);
            for i in 0..n {
                h[(i, i)] += shift;
            }
            Cholesky::new(h)
        })
        .map_or_else(|| Metric::Diagonal(scale.iter().map(|s| s * s).collect()), Metric::Factored);

    let merit = Merit { objective, chance, bounds, opts, eval };
    let mut counts = Counts::default();
    let mut mu = vec![0.0; chance.len() + 2 * bounds.len()];
    let mut rho = opts.initial_penalty;
    let mut point = merit.evaluate(z0.to_vec(), &mu, rho, &mut counts)?;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut outer = 0;
    let mut previous_violation = f64::INFINITY;
    let mut best: Option<(f64, Point)> = None;
    let status;
    let mut kkt;
    let mut violation;

    loop {
        outer += 1;
        history.push((outer, point.merit));
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(opts.memory);
        let mut stalled = false;
        while iterations < opts.max_iterations && inf_norm_scaled(&point.grad, &scale) > opts.kkt_tol {
            let model = InverseModel::new(&metric, &point.active);
            let mut d = direction(&point.grad, &model, &memory);
            let mut slope = dot(&d, &point.grad);
            if slope.is_nan() || slope >= 0.0 {
                memory.clear();
                d = direction(&point.grad, &model, &memory);
                slope = dot(&d, &point.grad);
            }
            let mut accepted = None;
            let mut t = 1.0;
            for _ in 0..40 {
                let trial: Vec<f64> = point.z.iter().zip(&d).map(|(z, d)| z + t * d).collect();
                if let Ok(p) = merit.evaluate(trial, &mu, rho, &mut counts) {
                    if p.merit <= point.merit + 1e-4 * t * slope {
                        accepted = Some(p);
                        break;
                    }
                }
                t *= 0.5;
            }
            iterations += 1;
            let Some(next) = accepted else {
                if memory.is_empty() {
                    stalled = true;
                    break;
                }
                memory.clear();
                continue;
            };
            let s: Vec<f64> = next.z.iter().zip(&point.z).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = next.grad.iter().zip(&point.grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * s.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt()
            {
                if memory.len() == opts.memory {
                    memory.pop_front();
                }
                memory.push_back((s, y));
            }
            point = next;
            history.push((outer, point.merit));
        }

        violation = point.residuals.iter().fold(0.0_f64, |m, c| m.max(*c));
        for (m, c) in mu.iter_mut().zip(&point.residuals) {
            *m = (*m + rho * c).max(0.0);
        }
        kkt = inf_norm_scaled(&point.grad, &scale).max(violation);
        let key = (violation - opts.kkt_tol).max(0.0);
        if best.as_ref().is_none_or(|(k, b)| key < *k || (key == *k && point.cost <= b.cost)) {
            best = Some((key, point.clone()));
        }
        if kkt <= opts.kkt_tol {
            status = SolveStatus::Converged;
            break;
        }
        if stalled && violation <= opts.kkt_tol {
            status = SolveStatus::Stalled;
            break;
        }
        if iterations >= opts.max_iterations || outer >= opts.max_outer {
            status = SolveStatus::IterationLimit;
            break;
        }
        if violation > 0.25 * previous_violation {
            rho = (rho * opts.penalty_growth).min(opts.max_penalty);
        }
        previous_violation = violation;
        point = merit.evaluate(point.z, &mu, rho, &mut counts)?;
    }

    let final_point = if status == SolveStatus::Converged { point } else { best.map(|(_, p)| p).unwrap_or(point) };
    let max_violation = final_point.residuals.iter().fold(0.0_f64, |m, c| m.max(*c));
    Ok(Solution {
        z: final_point.z,
        multipliers: mu,
        diagnostics: Diagnostics {
            status,
            iterations,
            outer_iterations: outer,
            cost: final_point.cost,
            max_violation,
            kkt_residual: kkt,
            exact_evaluations: counts.exact,
            screened_evaluations: counts.screened,
            cf_batch_calls: counts.cf_calls,
            merit_history: history,
        },
    })
}
