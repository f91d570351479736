//! Probability and gradient of a chance constraint that is affine in the
//! disturbance:
//!
//! ```text
//! β(z) = P(q(z) + g(z)ᵀw ≤ 0) = F_λ(-q(z)),   λ = g(z)ᵀw
//! ```
//!
//! with independent, possibly mixture-distributed `w_j`. The CF of `λ` is
//! `φ_λ(t) = Π_j φ_j(g_j(z)t)` and
//!
//! ```text
//! ∇β = -∇q·p_λ(-q) - (1/π) Σ_j ∇g_j ∫₀^∞ Im[e^{itq} φ'_j(g_j t) Π_{k≠j} φ_k(g_k t)] dt
//! ```
//!
//! All integrands of one constraint (probability, density and one gradient
//! integral per `z`-dependent component) are produced by a single batch
//! evaluation per quadrature panel that shares `e^{itq}`, the component CFs
//! and their product.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dist::Distribution;
use crate::inversion::{decay_horizon, oscillation_band, product_terms};
use crate::quadrature::{integrate_semi_infinite, BatchIntegrand, Counters, SemiInfinite, Tolerances};
use crate::{Error, Result};

/// Callbacks describing `q(z)` and `g(z)` with their derivatives.
pub trait AffineFunctions {
    /// Dimension `n` of the decision vector.
    fn dim(&self) -> usize;

    /// Number `m` of disturbance components.
    fn components(&self) -> usize;

    fn q(&self, z: &[f64]) -> f64;

    fn grad_q(&self, z: &[f64], out: &mut [f64]);

    fn g(&self, z: &[f64], out: &mut [f64]);

    /// `out += Σ_j coeffs[j]·∇g_j(z)`.
    fn add_jacobian_transpose(&self, z: &[f64], coeffs: &[f64], out: &mut [f64]);

    /// `false` if `∇g_j` is identically zero; its gradient integral is then
    /// skipped.
    fn g_depends_on_z(&self, _j: usize) -> bool {
        true
    }
}

/// `q(z) = q0 + aᵀz`, `g(z) = g0 + Bz` with dense `B` (`m` rows of length `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAffine {
    pub q0: f64,
    pub q_lin: Vec<f64>,
    pub g0: Vec<f64>,
    pub g_lin: Vec<Vec<f64>>,
}

impl DenseAffine {
    pub fn new(q0: f64, q_lin: Vec<f64>, g0: Vec<f64>, g_lin: Vec<Vec<f64>>) -> Result<Self> {
        let n = q_lin.len();
        if g_lin.len() != g0.len() || g_lin.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "jacobian must be {}x{n}, got {} rows",
                g0.len(),
                g_lin.len()
            )));
        }
        Ok(Self { q0, q_lin, g0, g_lin })
    }
}

impl AffineFunctions for DenseAffine {
    fn dim(&self) -> usize {
        self.q_lin.len()
    }

    fn components(&self) -> usize {
        self.g0.len()
    }

    fn q(&self, z: &[f64]) -> f64 {
        self.q0 + self.q_lin.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    fn grad_q(&self, _z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.q_lin);
    }

    fn g(&self, z: &[f64], out: &mut [f64]) {
        for (o, (g0, row)) in out.iter_mut().zip(self.g0.iter().zip(&self.g_lin)) {
            *o = g0 + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn add_jacobian_transpose(&self, _z: &[f64], coeffs: &[f64], out: &mut [f64]) {
        for (c, row) in coeffs.iter().zip(&self.g_lin) {
            if *c != 0.0 {
                for (o, r) in out.iter_mut().zip(row) {
                    *o += c * r;
                }
            }
        }
    }

    fn g_depends_on_z(&self, j: usize) -> bool {
        self.g_lin[j].iter().any(|&v| v != 0.0)
    }
}

/// Affine maps with sparse coefficients: `q(z) = q0 + Σ a_i z_i` and
/// `g_j(z) = g0_j + Σ b_{ji} z_i` over the listed `(i, coefficient)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffine {
    pub dim: usize,
    pub q0: f64,
    pub q_terms: Vec<(usize, f64)>,
    pub g0: Vec<f64>,
    pub g_terms: Vec<Vec<(usize, f64)>>,
}

impl SparseAffine {
    pub fn new(
        dim: usize,
        q0: f64,
        q_terms: Vec<(usize, f64)>,
        g0: Vec<f64>,
        g_terms: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if g_terms.len() != g0.len() {
            return Err(Error::InvalidArgument(format!(
                "{} constant terms but {} jacobian rows",
                g0.len(),
                g_terms.len()
            )));
        }
        if let Some(&(i, _)) = q_terms.iter().chain(g_terms.iter().flatten()).find(|(i, _)| *i >= dim) {
            return Err(Error::InvalidArgument(format!("index {i} out of range for dimension {dim}")));
        }
        Ok(Self { dim, q0, q_terms, g0, g_terms })
    }
}

fn sparse_dot(terms: &[(usize, f64)], z: &[f64]) -> f64 {
    terms.iter().map(|&(i, a)| a * z[i]).sum()
}

impl AffineFunctions for SparseAffine {
    fn dim(&self) -> usize {
        self.dim
    }

    fn components(&self) -> usize {
        self.g0.len()
    }

    fn q(&self, z: &[f64]) -> f64 {
        self.q0 + sparse_dot(&self.q_terms, z)
    }

    fn grad_q(&self, _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(i, a) in &self.q_terms {
            out[i] += a;
        }
    }

    fn g(&self, z: &[f64], out: &mut [f64]) {
        for (o, (g0, terms)) in out.iter_mut().zip(self.g0.iter().zip(&self.g_terms)) {
            *o = g0 + sparse_dot(terms, z);
        }
    }

    fn add_jacobian_transpose(&self, _z: &[f64], coeffs: &[f64], out: &mut [f64]) {
        for (c, terms) in coeffs.iter().zip(&self.g_terms) {
            if *c != 0.0 {
                for &(i, a) in terms {
                    out[i] += c * a;
                }
            }
        }
    }

    fn g_depends_on_z(&self, j: usize) -> bool {
        self.g_terms[j].iter().any(|&(_, a)| a != 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub tol: Tolerances,
    /// Share `e^{itq}`, component CFs and `φ_λ` between all integrands of a
    /// panel. Disabling recomputes them per integrand; results are identical,
    /// only the cost differs.
    pub share: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { tol: Tolerances::default(), share: true }
    }
}

/// Result of one constraint evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub probability: f64,
    /// Probability before clamping to `[0, 1]`.
    pub probability_raw: f64,
    /// `p_λ(-q(z))`.
    pub density: f64,
    /// `∇β(z)`; empty unless requested.
    pub gradient: Vec<f64>,
    pub error_estimate: f64,
    pub quadrature: Counters,
    /// Component-CF batch calls (one per mixture component per panel).
    pub cf_batch_calls: usize,
    /// Component-CF-derivative batch calls (one per mixture component per
    /// panel of a `z`-dependent component).
    pub cf_prime_batch_calls: usize,
    /// `g(z) = 0`: `λ` is a point mass and inversion was bypassed.
    pub degenerate: bool,
}

/// Per-panel intermediates shared by every integrand of one evaluation.
#[derive(Debug, Clone, Default)]
pub struct EvalSharedState {
    /// Frequencies `t` of the panel nodes.
    pub ts: Vec<f64>,
    /// `e^{itq}` per node.
    pub phase: Vec<Complex64>,
    /// `φ_j(g_j t)` per active component, node-major within each component.
    pub phi: Vec<Vec<Complex64>>,
    /// `φ'_j(g_j t)` per active component (empty when not needed).
    pub phi_prime: Vec<Vec<Complex64>>,
    /// `φ_λ(t)` per node.
    pub phi_lambda: Vec<Complex64>,
    /// `φ'_j(g_j t) Π_{k≠j} φ_k(g_k t)` per gradient component.
    pub weighted_derivative: Vec<Vec<Complex64>>,
    pub cf_batch_calls: usize,
    pub cf_prime_batch_calls: usize,
}

impl EvalSharedState {
    /// `true` if the cached `φ_λ` equals the product of the component caches
    /// at every node to 1e-14.
    pub fn is_consistent(&self) -> bool {
        (0..self.ts.len()).all(|i| {
            let product = self.phi.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * p[i]);
            (product - self.phi_lambda[i]).norm() <= 1e-14 * (1.0 + product.norm())
        })
    }

    /// `α_j = t·φ'_j/φ_j` for gradient component `k` at node `i`.
    pub fn alpha(&self, k: usize, i: usize, component: usize) -> Result<Complex64> {
        let phi = self.phi[k][i];
        if phi.norm() < 1e-300 {
            return Err(Error::VanishingCf { component, t: self.ts[i] });
        }
        Ok(self.ts[i] * self.phi_prime[k][i] / phi)
    }
}

/// The active part of a constraint at a fixed `z`: components with `g_j ≠ 0`.
struct Frozen<'a> {
    w: &'a [Distribution],
    q: f64,
    /// `(j, g_j)` for every `g_j ≠ 0`.
    active: Vec<(usize, f64)>,
    /// Positions in `active` whose gradient integral is needed.
    gradient_terms: Vec<usize>,
}

impl Frozen<'_> {
    fn fill(&self, ts: &[f64], derivatives: bool, s: &mut EvalSharedState) -> Result<()> {
        let nodes = ts.len();
        s.ts.clear();
        s.ts.extend_from_slice(ts);
        s.phase.clear();
        s.phase.extend(ts.iter().map(|t| Complex64::from_polar(1.0, t * self.q)));
        s.phi.resize(self.active.len(), Vec::new());
        let mut args = vec![0.0; nodes];
        for (k, &(j, gj)) in self.active.iter().enumerate() {
            for (a, t) in args.iter_mut().zip(ts) {
                *a = gj * t;
            }
            let phi = &mut s.phi[k];
            phi.clear();
            phi.resize(nodes, Complex64::new(0.0, 0.0));
            for c in self.w[j].components() {
                for (p, &a) in phi.iter_mut().zip(&args) {
                    *p += c.weight * c.family.cf(a);
                }
                s.cf_batch_calls += 1;
            }
        }
        s.phi_lambda.clear();
        s.phi_lambda.extend((0..nodes).map(|i| s.phi.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * p[i])));

        s.phi_prime.clear();
        s.weighted_derivative.clear();
        if !derivatives {
            return Ok(());
        }
        // leave-one-out products Π_{o≠k} φ_o from prefix and suffix products,
        // without dividing by φ_k
        let m = self.active.len();
        let one = Complex64::new(1.0, 0.0);
        let mut suffix = vec![one; (m + 1) * nodes];
        for k in (0..m).rev() {
            for i in 0..nodes {
                suffix[k * nodes + i] = suffix[(k + 1) * nodes + i] * s.phi[k][i];
            }
        }
        let mut prefix = vec![one; nodes];
        let mut next = 0;
        for &k in &self.gradient_terms {
            while next < k {
                for (p, f) in prefix.iter_mut().zip(&s.phi[next]) {
                    *p *= f;
                }
                next += 1;
            }
            let (j, gj) = self.active[k];
            for (a, t) in args.iter_mut().zip(ts) {
                *a = gj * t;
            }
            let mut d = vec![Complex64::new(0.0, 0.0); nodes];
            for c in self.w[j].components() {
                for (p, &a) in d.iter_mut().zip(&args) {
                    *p += c.weight * c.family.cf_prime(a)?;
                }
                s.cf_prime_batch_calls += 1;
            }
            let weighted = (0..nodes).map(|i| d[i] * prefix[i] * suffix[(k + 1) * nodes + i]).collect();
            s.phi_prime.push(d);
            s.weighted_derivative.push(weighted);
        }
        Ok(())
    }
}

struct Integrand<'a> {
    frozen: Frozen<'a>,
    scale: f64,
    gradient: bool,
    share: bool,
    state: EvalSharedState,
    ts: Vec<f64>,
}

impl Integrand<'_> {
    fn write(&self, k: usize, taus: &[f64], out: &mut [f64]) {
        let comps = self.components();
        let s = &self.state;
        for (i, &tau) in taus.iter().enumerate() {
            let v = s.phase[i] * s.phi_lambda[i];
            let row = &mut out[i * comps..(i + 1) * comps];
            match k {
                0 => row[0] = v.im / tau,
                1 => row[1] = v.re / self.scale,
                _ => row[k] = (s.phase[i] * s.weighted_derivative[k - 2][i]).im / self.scale,
            }
        }
    }
}

impl BatchIntegrand for Integrand<'_> {
    fn components(&self) -> usize {
        2 + if self.gradient { self.frozen.gradient_terms.len() } else { 0 }
    }

    fn evaluate(&mut self, taus: &[f64], out: &mut [f64]) -> Result<()> {
        self.ts.clear();
        self.ts.extend(taus.iter().map(|tau| tau / self.scale));
        let ts = std::mem::take(&mut self.ts);
        let comps = self.components();
        let result = (|| {
            if self.share {
                self.frozen.fill(&ts, self.gradient, &mut self.state)?;
                for k in 0..comps {
                    self.write(k, taus, out);
                }
            } else {
                for k in 0..comps {
                    let mut state = std::mem::take(&mut self.state);
                    let r = self.frozen.fill(&ts, k >= 2, &mut state);
                    self.state = state;
                    r?;
                    self.write(k, taus, out);
                }
            }
            Ok(())
        })();
        self.ts = ts;
        result
    }
}

/// `P(q(z) + g(z)ᵀw ≤ 0) ≥ γ` with independent `w_j`.
#[derive(Debug, Clone)]
pub struct AffineChanceConstraint<F> {
    functions: F,
    disturbances: Vec<Distribution>,
    gamma: f64,
}

impl<F: AffineFunctions> AffineChanceConstraint<F> {
    pub fn new(functions: F, disturbances: Vec<Distribution>, gamma: f64) -> Result<Self> {
        if functions.components() != disturbances.len() {
            return Err(Error::InvalidArgument(format!(
                "g has {} components but {} disturbances were given",
                functions.components(),
                disturbances.len()
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        Ok(Self { functions, disturbances, gamma })
    }

    pub fn functions(&self) -> &F {
        &self.functions
    }

    pub fn disturbances(&self) -> &[Distribution] {
        &self.disturbances
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.functions.dim()
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::InvalidArgument(format!("z has length {}, expected {}", z.len(), self.dim())));
        }
        match z.iter().find(|v| !v.is_finite()) {
            Some(&v) => Err(Error::NonFiniteInput(v)),
            None => Ok(()),
        }
    }

    fn g_at(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.functions.components()];
        self.functions.g(z, &mut g);
        g
    }

    fn freeze(&self, z: &[f64]) -> Result<Frozen<'_>> {
        self.check(z)?;
        let q = self.functions.q(z);
        let g = self.g_at(z);
        if let Some(v) = std::iter::once(q).chain(g.iter().copied()).find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(v));
        }
        let active: Vec<(usize, f64)> = g.iter().copied().enumerate().filter(|(_, gj)| *gj != 0.0).collect();
        let gradient_terms =
            (0..active.len()).filter(|&k| self.functions.g_depends_on_z(active[k].0)).collect();
        Ok(Frozen { w: &self.disturbances, q, active, gradient_terms })
    }

    /// `φ_λ(t; z)` at every node of `ts`.
    pub fn lambda_cf(&self, z: &[f64], ts: &[f64]) -> Result<Vec<Complex64>> {
        let frozen = self.freeze(z)?;
        if let Some(t) = ts.iter().find(|t| !t.is_finite()) {
            return Err(Error::NonFiniteInput(*t));
        }
        let mut s = EvalSharedState::default();
        frozen.fill(ts, false, &mut s)?;
        Ok(s.phi_lambda)
    }

    /// Intermediates of one panel at `z`, as used by the integrands.
    pub fn shared_state(&self, z: &[f64], ts: &[f64]) -> Result<EvalSharedState> {
        let frozen = self.freeze(z)?;
        let mut s = EvalSharedState::default();
        frozen.fill(ts, true, &mut s)?;
        Ok(s)
    }

    /// `ξ(z, t) = Σ_j α_j(z, t)∇g_j(z)` at every node, as complex
    /// `n`-vectors.
    pub fn xi(&self, z: &[f64], ts: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let frozen = self.freeze(z)?;
        let mut s = EvalSharedState::default();
        frozen.fill(ts, true, &mut s)?;
        let m = self.functions.components();
        let n = self.dim();
        let mut out = Vec::with_capacity(ts.len());
        let mut re = vec![0.0; m];
        let mut im = vec![0.0; m];
        for i in 0..ts.len() {
            re.fill(0.0);
            im.fill(0.0);
            for (pos, &k) in frozen.gradient_terms.iter().enumerate() {
                let j = frozen.active[k].0;
                let a = s.alpha(pos, i, j)?;
                re[j] = a.re;
                im[j] = a.im;
            }
            let mut xr = vec![0.0; n];
            let mut xi = vec![0.0; n];
            self.functions.add_jacobian_transpose(z, &re, &mut xr);
            self.functions.add_jacobian_transpose(z, &im, &mut xi);
            out.push(xr.into_iter().zip(xi).map(|(r, i)| Complex64::new(r, i)).collect());
        }
        Ok(out)
    }

    /// Evaluate `β(z)` and, if `gradient` is set, `∇β(z)`.
    pub fn evaluate(&self, z: &[f64], opts: &EvalOptions, gradient: bool) -> Result<Evaluation> {
        let frozen = self.freeze(z)?;
        let n = self.dim();
        if frozen.active.is_empty() {
            let p = if frozen.q <= 0.0 { 1.0 } else { 0.0 };
            return Ok(Evaluation {
                probability: p,
                probability_raw: p,
                density: 0.0,
                gradient: if gradient { vec![0.0; n] } else { Vec::new() },
                error_estimate: 0.0,
                quadrature: Counters::default(),
                cf_batch_calls: 0,
                cf_prime_batch_calls: 0,
                degenerate: true,
            });
        }

        let scale = frozen
            .active
            .iter()
            .map(|&(j, gj)| (gj * self.disturbances[j].spread()).powi(2))
            .sum::<f64>()
            .sqrt();
        let u_max = decay_horizon(
            |ts| {
                let mut s = EvalSharedState::default();
                frozen.fill(ts, false, &mut s)?;
                Ok(s.phi_lambda.iter().map(|p| p.norm()).collect())
            },
            scale,
        )?;
        let terms = product_terms(frozen.active.iter().map(|&(j, gj)| (gj, &self.disturbances[j])));
        let (omega, tail_omega) = oscillation_band(&terms, -frozen.q);
        let semi = SemiInfinite { tol: opts.tol, omega: omega / scale, tail_omega: tail_omega / scale, u_max };
        let mut f = Integrand {
            frozen,
            scale,
            gradient,
            share: opts.share,
            state: EvalSharedState::default(),
            ts: Vec::with_capacity(15),
        };
        let r = match integrate_semi_infinite(&mut f, &semi) {
            Ok(r) => r,
            Err(Error::ToleranceNotMet { value, error }) => {
                let mut value = value;
                value[0] = 0.5 - value[0] / PI;
                return Err(Error::ToleranceNotMet { value, error: error / PI });
            }
            Err(e) => return Err(e),
        };

        let probability_raw = 0.5 - r.value[0] / PI;
        let density_raw = r.value[1] / PI;
        let mut grad = Vec::new();
        if gradient {
            grad = vec![0.0; n];
            self.functions.grad_q(z, &mut grad);
            for v in grad.iter_mut() {
                *v *= -density_raw;
            }
            let mut coeffs = vec![0.0; self.functions.components()];
            for (pos, &k) in f.frozen.gradient_terms.iter().enumerate() {
                coeffs[f.frozen.active[k].0] = -r.value[2 + pos] / PI;
            }
            self.functions.add_jacobian_transpose(z, &coeffs, &mut grad);
        }
        Ok(Evaluation {
            probability: probability_raw.clamp(0.0, 1.0),
            probability_raw,
            density: density_raw.max(0.0),
            gradient: grad,
            error_estimate: r.error_estimate / PI,
            quadrature: r.counters,
            cf_batch_calls: f.state.cf_batch_calls,
            cf_prime_batch_calls: f.state.cf_prime_batch_calls,
            degenerate: false,
        })
    }

    pub fn probability(&self, z: &[f64], opts: &EvalOptions) -> Result<f64> {
        self.evaluate(z, opts, false).map(|e| e.probability)
    }

    pub fn gradient(&self, z: &[f64], opts: &EvalOptions) -> Result<Vec<f64>> {
        self.evaluate(z, opts, true).map(|e| e.gradient)
    }

    /// `(γ - β(z), -∇β(z))`; the constraint holds when the residual is
    /// nonpositive.
    pub fn residual(&self, z: &[f64], opts: &EvalOptions) -> Result<(f64, Vec<f64>)> {
        let e = self.evaluate(z, opts, true)?;
        Ok((self.gamma - e.probability, e.gradient.into_iter().map(|v| -v).collect()))
    }

    /// Mean and variance of `λ = g(z)ᵀw`, when all active components have
    /// them.
    pub fn lambda_moments(&self, z: &[f64]) -> Option<(f64, f64)> {
        let g = self.g_at(z);
        let mut mean = 0.0;
        let mut var = 0.0;
        for (gj, w) in g.iter().zip(&self.disturbances) {
            if *gj != 0.0 {
                mean += gj * w.mean().ok()?;
                var += gj * gj * w.variance()?;
            }
        }
        Some((mean, var))
    }

    /// Cantelli lower bound on `β(z)`; zero when it is uninformative.
    pub fn probability_lower_bound(&self, z: &[f64]) -> f64 {
        let Some((mean, var)) = self.lambda_moments(z) else { return 0.0 };
        let margin = -self.functions.q(z) - mean;
        if margin <= 0.0 {
            return 0.0;
        }
        if var == 0.0 {
            return 1.0;
        }
        1.0 - var / (var + margin * margin)
    }
}
