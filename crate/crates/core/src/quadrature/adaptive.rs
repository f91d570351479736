//! Worst-first adaptive bisection over a set of initial panels.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::rule::{self, Mapping, Panel, Workspace};
use super::{BatchIntegrand, Counters};
use crate::Result;

pub(super) struct Partial {
    pub value: Vec<f64>,
    pub error: f64,
    pub converged: bool,
}

struct Ranked(Panel);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // largest error first; ties go to the leftmost panel
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.error.total_cmp(&other.0.error).then_with(|| other.0.a.total_cmp(&self.0.a))
    }
}

fn magnitude(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Integrate over the union of `intervals`, bisecting the panel with the
/// largest error estimate until the summed error meets `target(|value|)` or
/// `max_subdiv` bisections have been spent.
pub(super) fn integrate<F, T>(
    f: &mut F,
    intervals: &[(f64, f64)],
    mapping: Mapping,
    target: T,
    max_subdiv: usize,
    ws: &mut Workspace,
    counters: &mut Counters,
) -> Result<Partial>
where
    F: BatchIntegrand + ?Sized,
    T: Fn(f64) -> f64,
{
    let comps = f.components();
    let mut heap = BinaryHeap::with_capacity(intervals.len() + 2 * max_subdiv.min(4096));
    let mut value = vec![0.0; comps];
    let mut error = 0.0;
    for &(a, b) in intervals {
        let p = rule::apply(f, a, b, mapping, ws, counters)?;
        for (v, k) in value.iter_mut().zip(&p.kronrod) {
            *v += k;
        }
        error += p.error;
        heap.push(Ranked(p));
    }

    let mut bisections = 0;
    let mut converged = false;
    loop {
        if error <= target(magnitude(&value)) {
            // running sums drift; confirm against a fresh total
            value.iter_mut().for_each(|v| *v = 0.0);
            error = 0.0;
            for Ranked(p) in heap.iter() {
                for (v, k) in value.iter_mut().zip(&p.kronrod) {
                    *v += k;
                }
                error += p.error;
            }
            if error <= target(magnitude(&value)) {
                converged = true;
                break;
            }
        }
        if bisections >= max_subdiv {
            break;
        }
        let Some(Ranked(worst)) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            // cannot split further in floating point
            heap.push(Ranked(worst));
            break;
        }
        let left = rule::apply(f, worst.a, mid, mapping, ws, counters)?;
        let right = rule::apply(f, mid, worst.b, mapping, ws, counters)?;
        bisections += 1;
        counters.bisections += 1;
        for (c, v) in value.iter_mut().enumerate().take(comps) {
            *v += left.kronrod[c] + right.kronrod[c] - worst.kronrod[c];
        }
        error = (error + left.error + right.error - worst.error).max(0.0);
        heap.push(Ranked(left));
        heap.push(Ranked(right));
    }
    Ok(Partial { value, error, converged })
}
