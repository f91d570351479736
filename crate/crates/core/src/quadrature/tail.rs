//! Oscillatory tails: half-period cycles summed with Wynn's epsilon
//! acceleration.

use super::adaptive;
use super::rule::{Mapping, Workspace};
use super::{BatchIntegrand, Counters};
use crate::Result;

const MAX_CYCLES: usize = 400;
const MAX_TABLE: usize = 48;
const CYCLE_SUBDIV: usize = 2000;

pub(super) struct Tail {
    pub value: Vec<f64>,
    pub error: f64,
    pub converged: bool,
    /// The cycles ran up to the requested end point without extrapolation.
    pub reached_end: bool,
}

/// Incremental epsilon table holding the latest anti-diagonal.
#[derive(Default)]
struct Epsilon {
    diagonal: Vec<f64>,
    estimates: Vec<f64>,
}

impl Epsilon {
    fn push(&mut self, partial_sum: f64) {
        let old = std::mem::take(&mut self.diagonal);
        let mut new = Vec::with_capacity(old.len() + 1);
        new.push(partial_sum);
        for k in 1..=old.len().min(MAX_TABLE) {
            let diff = new[k - 1] - old[k - 1];
            if diff == 0.0 || !diff.is_finite() {
                break;
            }
            let prev = if k >= 2 { old[k - 2] } else { 0.0 };
            let next = prev + 1.0 / diff;
            if !next.is_finite() {
                break;
            }
            new.push(next);
        }
        let best = new[(new.len() - 1) & !1];
        self.estimates.push(best);
        self.diagonal = new;
    }

    fn estimate(&self) -> f64 {
        *self.estimates.last().unwrap_or(&0.0)
    }

    fn error(&self) -> f64 {
        match self.estimates.as_slice() {
            [.., a, b, c] => (c - b).abs() + (c - a).abs(),
            _ => f64::INFINITY,
        }
    }
}

/// Integrate from `start` towards `end` (possibly infinite) in cycles of
/// length `half_period`. Returns as soon as the extrapolated tail meets
/// `target` or the cycles become negligible.
pub(super) fn integrate<F: BatchIntegrand + ?Sized>(
    f: &mut F,
    start: f64,
    half_period: f64,
    end: f64,
    target: f64,
    ws: &mut Workspace,
    counters: &mut Counters,
) -> Result<Tail> {
    let comps = f.components();
    let cycle_target = target / 100.0;
    let mut sums = vec![0.0; comps];
    let mut tables: Vec<Epsilon> = (0..comps).map(|_| Epsilon::default()).collect();
    let mut quad_error = 0.0;
    let mut quiet = 0;
    let mut a = start;
    let mut cycles_converged = true;

    for _ in 0..MAX_CYCLES {
        let b = (a + half_period).min(end);
        let cycle =
            adaptive::integrate(f, &[(a, b)], Mapping::Identity, |_| cycle_target, CYCLE_SUBDIV, ws, counters)?;
        counters.tail_cycles += 1;
        cycles_converged &= cycle.converged;
        quad_error += cycle.error;
        let size = cycle.value.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for ((s, t), v) in sums.iter_mut().zip(tables.iter_mut()).zip(&cycle.value) {
            *s += v;
            t.push(*s);
        }
        a = b;

        if b >= end {
            return Ok(Tail { value: sums, error: quad_error, converged: cycles_converged, reached_end: true });
        }
        quiet = if size <= 1e-3 * target { quiet + 1 } else { 0 };
        if quiet >= 2 {
            // remaining cycles are negligible; no extrapolation needed
            return Ok(Tail { value: sums, error: quad_error + size, converged: cycles_converged, reached_end: false });
        }
        let wynn_error = tables.iter().fold(0.0_f64, |m, t| m.max(t.error()));
        if wynn_error + quad_error <= target {
            let value = tables.iter().map(Epsilon::estimate).collect();
            return Ok(Tail { value, error: wynn_error + quad_error, converged: cycles_converged, reached_end: false });
        }
    }
    let wynn_error = tables.iter().fold(0.0_f64, |m, t| m.max(t.error()));
    let value = tables.iter().map(Epsilon::estimate).collect();
    Ok(Tail { value, error: wynn_error + quad_error, converged: false, reached_end: false })
}
