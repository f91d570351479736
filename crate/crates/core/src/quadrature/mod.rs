//! Adaptive Gauss-Kronrod 7-15 integration of batch-evaluated, possibly
//! vector-valued integrands over `[0, ∞)`.
//!
//! The integrand is always called with all 15 abscissae of a panel at once
//! and returns every component (for instance a probability integrand, a
//! density integrand and gradient integrands) from that one call. The Gauss-7
//! estimate reuses the Kronrod values, so each panel costs exactly one batch
//! call.
//!
//! The half-line is mapped to `[0, 1)` by `t = u/(1-u)`. When the integrand
//! has a known oscillation frequency, the initial `u`-partition is aligned to
//! its period (see [`periodic_aware_partition`]); once that partition reaches
//! its 64-interval cap, the remainder `[t_cap, ∞)` is integrated half-period
//! by half-period and the partial sums are accelerated with Wynn's epsilon
//! algorithm. Slowly decaying oscillatory tails (characteristic functions of
//! laws with density jumps decay like `1/t`) cannot be resolved by bisection
//! in `u` alone.

mod adaptive;
mod rule;
mod tail;

use std::f64::consts::PI;

pub use rule::{Gk15Rule, GK15};

pub(crate) use rule::Mapping;

use crate::{Error, Result};

/// Contract for batch integrands.
pub trait BatchIntegrand {
    /// Number of scalar components produced per abscissa.
    fn components(&self) -> usize;

    /// Evaluate at every abscissa of `ts`, writing `ts.len() * components()`
    /// values node-major into `out`.
    fn evaluate(&mut self, ts: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Adapter turning a scalar closure into a one-component batch integrand.
pub struct Scalar<F>(pub F);

impl<F: FnMut(f64) -> f64> BatchIntegrand for Scalar<F> {
    fn components(&self) -> usize {
        1
    }

    fn evaluate(&mut self, ts: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, &t) in out.iter_mut().zip(ts) {
            *o = (self.0)(t);
        }
        Ok(())
    }
}

/// Integration tolerances and budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
    /// Maximum number of bisections on the mapped half-line.
    pub max_subdiv: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs: 1e-10, rel: 1e-8, max_subdiv: 1000 }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        if !(self.abs > 0.0 && self.rel > 0.0 && self.max_subdiv >= 1) {
            return Err(Error::InvalidArgument(format!("invalid tolerances {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn target(&self, magnitude: f64) -> f64 {
        self.abs.max(self.rel * magnitude)
    }
}

/// Evaluation counters. `batch_calls == subintervals` always holds: each
/// panel is evaluated by exactly one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub batch_calls: usize,
    pub subintervals: usize,
    pub node_evaluations: usize,
    pub bisections: usize,
    pub tail_cycles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureResult {
    pub value: Vec<f64>,
    pub error_estimate: f64,
    pub counters: Counters,
}

/// Result of one GK15 panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Gk15Estimate {
    pub kronrod: Vec<f64>,
    pub gauss: Vec<f64>,
    pub error_estimate: f64,
}

/// Apply the GK15 rule on `[a, b]` with one batch call.
pub fn gk15_apply<F: BatchIntegrand + ?Sized>(f: &mut F, a: f64, b: f64) -> Result<Gk15Estimate> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidArgument(format!("need finite a < b, got [{a}, {b}]")));
    }
    let mut ws = rule::Workspace::default();
    let mut counters = Counters::default();
    let p = rule::apply(f, a, b, Mapping::Identity, &mut ws, &mut counters)?;
    Ok(Gk15Estimate { kronrod: p.kronrod, gauss: p.gauss, error_estimate: p.error })
}

/// Maximum number of initial intervals produced by
/// [`periodic_aware_partition`].
pub const PARTITION_CAP: usize = 64;

fn to_u(t: f64) -> f64 {
    if t.is_infinite() {
        1.0
    } else {
        t / (1.0 + t)
    }
}

fn to_t(u: f64) -> f64 {
    if u >= 1.0 {
        f64::INFINITY
    } else {
        u / (1.0 - u)
    }
}

/// Initial breakpoints in `u` covering `[0, u_max]` such that no interval
/// spans more than one period `2π/omega` in `t`, with at most
/// [`PARTITION_CAP`] intervals. When the cap is reached the final interval
/// runs from `63` periods to `u_max`.
pub fn periodic_aware_partition(omega: f64, u_max: f64) -> Vec<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return vec![0.0, u_max];
    }
    let period = 2.0 * PI / omega;
    let t_max = to_t(u_max);
    let needed = (t_max / period).ceil();
    if needed <= PARTITION_CAP as f64 {
        let n = needed.max(1.0) as usize;
        let mut bps: Vec<f64> = (0..n).map(|k| to_u(k as f64 * t_max / n as f64)).collect();
        bps.push(u_max);
        bps
    } else {
        let mut bps: Vec<f64> = (0..PARTITION_CAP).map(|k| to_u(k as f64 * period)).collect();
        bps.push(u_max);
        bps
    }
}

/// Options for [`integrate_semi_infinite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiInfinite {
    pub tol: Tolerances,
    /// Dominant oscillation frequency of the integrand in `t`; zero if none.
    pub omega: f64,
    /// Slowest significant oscillation frequency; sets the tail cycle length.
    /// Zero means `omega`.
    pub tail_omega: f64,
    /// Upper end of the partitioned region in `u`; beyond it the integrand
    /// is expected to be negligible. Use 1 when unknown.
    pub u_max: f64,
}

impl SemiInfinite {
    pub fn new(tol: Tolerances) -> Self {
        Self { tol, omega: 0.0, tail_omega: 0.0, u_max: 1.0 }
    }
}

/// Integrate `f` over `[0, ∞)`.
///
/// On budget exhaustion returns [`Error::ToleranceNotMet`] carrying the best
/// value and its error estimate.
pub fn integrate_semi_infinite<F: BatchIntegrand + ?Sized>(f: &mut F, opts: &SemiInfinite) -> Result<QuadratureResult> {
    opts.tol.validate()?;
    if !(opts.u_max > 0.0 && opts.u_max <= 1.0) {
        return Err(Error::InvalidArgument(format!("u_max must lie in (0, 1], got {}", opts.u_max)));
    }
    let mut counters = Counters::default();
    let mut ws = rule::Workspace::default();

    let bps = periodic_aware_partition(opts.omega, opts.u_max);
    let capped = opts.omega > 0.0 && bps.len() == PARTITION_CAP + 1 && {
        let t_last = to_t(bps[PARTITION_CAP - 1]);
        to_t(opts.u_max) > t_last + 2.0 * PI / opts.omega
    };
    let mut intervals: Vec<(f64, f64)> = bps.windows(2).map(|w| (w[0], w[1])).collect();
    let tail_start = if capped { intervals.pop().map(|(a, _)| to_t(a)) } else { None };
    if opts.u_max < 1.0 && tail_start.is_none() {
        intervals.push((opts.u_max, 1.0));
    }

    let body_share = if tail_start.is_some() { 0.5 } else { 1.0 };
    let body = adaptive::integrate(
        f,
        &intervals,
        Mapping::Rational,
        |m| body_share * opts.tol.target(m),
        opts.tol.max_subdiv,
        &mut ws,
        &mut counters,
    )?;
    let mut value = body.value;
    let mut error = body.error;
    let mut converged = body.converged;

    if let Some(start) = tail_start {
        let magnitude = value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let target = (1.0 - body_share) * opts.tol.target(magnitude);
        let t_end = to_t(opts.u_max);
        let cycle_omega = if opts.tail_omega > 0.0 { opts.tail_omega.min(opts.omega) } else { opts.omega };
        let tail = tail::integrate(f, start, PI / cycle_omega, t_end, target, &mut ws, &mut counters)?;
        for (v, t) in value.iter_mut().zip(&tail.value) {
            *v += t;
        }
        error += tail.error;
        converged &= tail.converged;
        if tail.reached_end && opts.u_max < 1.0 {
            let rest = adaptive::integrate(
                f,
                &[(opts.u_max, 1.0)],
                Mapping::Rational,
                |m| opts.tol.target(m),
                opts.tol.max_subdiv,
                &mut ws,
                &mut counters,
            )?;
            for (v, t) in value.iter_mut().zip(&rest.value) {
                *v += t;
            }
            error += rest.error;
            converged &= rest.converged;
        }
    }

    let magnitude = value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !converged || error > opts.tol.target(magnitude) {
        return Err(Error::ToleranceNotMet { value, error });
    }
    Ok(QuadratureResult { value, error_estimate: error, counters })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances { abs: 1e-12, rel: 1e-12, max_subdiv: 1000 }
    }

    #[test]
    fn gk15_integrates_low_degree_polynomials_exactly() {
        let p = gk15_apply(&mut Scalar(|x: f64| x * x), 0.0, 1.0).unwrap();
        assert!((p.kronrod[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.gauss[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(p.error_estimate < 1e-14);

        let c = gk15_apply(&mut Scalar(|_| 1.0), -3.0, 5.0).unwrap();
        assert!((c.kronrod[0] - 8.0).abs() < 1e-14 && (c.gauss[0] - 8.0).abs() < 1e-14);
    }

    #[test]
    fn gk15_exponential() {
        let p = gk15_apply(&mut Scalar(f64::exp), 0.0, 1.0).unwrap();
        assert!((p.kronrod[0] - (std::f64::consts::E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn gk15_rejects_bad_interval_and_non_finite_values() {
        assert!(gk15_apply(&mut Scalar(|x| x), 1.0, 1.0).is_err());
        let err = gk15_apply(&mut Scalar(|x: f64| if x > 0.9 { f64::NAN } else { x }), 0.0, 1.0).unwrap_err();
        match err {
            Error::NonFiniteIntegrand { at } => assert!(at > 0.9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partition_examples() {
        assert_eq!(periodic_aware_partition(0.0, 1.0), vec![0.0, 1.0]);
        assert_eq!(periodic_aware_partition(0.0, 0.5), vec![0.0, 0.5]);
        let p = periodic_aware_partition(1e6, 1.0);
        assert_eq!(p.len(), PARTITION_CAP + 1);
        assert_eq!(*p.last().unwrap(), 1.0);

        let p = periodic_aware_partition(2.0 * PI, 1.0);
        assert_eq!(p.len(), 65);
        for w in p[..64].windows(2) {
            assert!(to_t(w[1]) - to_t(w[0]) <= 1.0 + 1e-9);
        }

        // finite range below the cap: evenly spaced, each at most one period
        let p = periodic_aware_partition(1.0, to_u(20.0));
        assert_eq!(p.len(), 5);
        for w in p.windows(2) {
            assert!(to_t(w[1]) - to_t(w[0]) <= 2.0 * PI + 1e-9);
        }
    }

    #[test]
    fn semi_infinite_reference_integrals() {
        let opts = SemiInfinite::new(tol());
        type Case = (fn(f64) -> f64, f64);
        let cases: [Case; 3] = [
            (|t| (-t).exp(), 1.0),
            (|t| 1.0 / (1.0 + t * t), PI / 2.0),
            (|t| (-t * t / 2.0).exp(), (PI / 2.0).sqrt()),
        ];
        for (f, want) in cases {
            let r = integrate_semi_infinite(&mut Scalar(f), &opts).unwrap();
            assert!((r.value[0] - want).abs() < 1e-10, "{} vs {want}", r.value[0]);
            assert_eq!(r.counters.batch_calls, r.counters.subintervals);
        }
    }

    #[test]
    fn zero_integrand_costs_one_call() {
        let r = integrate_semi_infinite(&mut Scalar(|_| 0.0), &SemiInfinite::new(tol())).unwrap();
        assert_eq!(r.value, vec![0.0]);
        assert_eq!(r.error_estimate, 0.0);
        assert_eq!(r.counters.batch_calls, 1);
    }

    #[test]
    fn batch_calls_count_each_panel_once() {
        let r = integrate_semi_infinite(&mut Scalar(|t: f64| (-t).exp() * (3.0 * t).cos()), &SemiInfinite::new(tol()))
            .unwrap();
        let c = r.counters;
        assert_eq!(c.batch_calls, 1 + 2 * c.bisections);
        assert_eq!(c.node_evaluations, 15 * c.batch_calls);
    }

    #[test]
    fn damped_sine_with_oscillation_hint() {
        let opts = SemiInfinite { tol: Tolerances { abs: 1e-10, rel: 1e-10, max_subdiv: 1000 }, omega: 10.0, tail_omega: 0.0, u_max: 1.0 };
        let r = integrate_semi_infinite(&mut Scalar(|t: f64| (-t).exp() * (10.0 * t).sin()), &opts).unwrap();
        assert!((r.value[0] - 10.0 / 101.0).abs() < 1e-10, "{}", r.value[0]);
    }

    #[test]
    fn slowly_decaying_oscillatory_tail() {
        // ∫₀^∞ sin(t)/t dt = π/2: the integrand decays like 1/t
        let opts = SemiInfinite { tol: Tolerances { abs: 1e-10, rel: 1e-10, max_subdiv: 1000 }, omega: 1.0, tail_omega: 0.0, u_max: 1.0 };
        let r = integrate_semi_infinite(
            &mut Scalar(|t: f64| if t == 0.0 { 1.0 } else { t.sin() / t }),
            &opts,
        )
        .unwrap();
        assert!((r.value[0] - PI / 2.0).abs() < 1e-9, "{}", r.value[0]);
        assert!(r.counters.tail_cycles > 0);
    }

    #[test]
    fn budget_exhaustion_reports_best_value() {
        let opts = SemiInfinite { tol: Tolerances { abs: 1e-14, rel: 1e-14, max_subdiv: 2 }, omega: 0.0, tail_omega: 0.0, u_max: 1.0 };
        match integrate_semi_infinite(&mut Scalar(|t: f64| (-t).exp() * (40.0 * t).sin()), &opts) {
            Err(Error::ToleranceNotMet { value, error }) => {
                assert_eq!(value.len(), 1);
                assert!(error > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }
}
