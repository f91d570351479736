use std::fmt;

use cfcc_core::parallel;
use cfcc_smpc::{SolveStatus, StepStatus};

use crate::config::CaseConfig;
use crate::error::CliError;
use crate::run::run_case;

/// Below this many runs the report warns that the intervals are wide.
pub const MIN_RUNS: usize = 10;

const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Flood,
    Drought,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationStat {
    pub lake: usize,
    pub bound: Bound,
    pub violations: usize,
    pub samples: usize,
    /// 95% Wilson score interval.
    pub interval: (f64, f64),
    /// `1 - γ`.
    pub allowed: f64,
}

impl ViolationStat {
    pub fn frequency(&self) -> f64 {
        self.violations as f64 / self.samples as f64
    }

    /// The whole interval lies above the allowed frequency.
    pub fn flagged(&self) -> bool {
        self.interval.0 > self.allowed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub runs: usize,
    pub steps: usize,
    pub stats: Vec<ViolationStat>,
    /// Step-lake pairs with `y_min ≤ h ≤ y_max`.
    pub within_bands: usize,
    pub pairs: usize,
    pub failed_steps: usize,
    pub unconverged_steps: usize,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn band_fraction(&self) -> f64 {
        self.within_bands as f64 / self.pairs as f64
    }

    pub fn stat(&self, lake: usize, bound: Bound) -> &ViolationStat {
        self.stats.iter().find(|s| s.lake == lake && s.bound == bound).expect("every lake has both bounds")
    }
}

pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `runs` closed-loop simulations with seeds `seed, seed + 1, …`, run
/// concurrently.
pub fn validate_monte_carlo(cfg: &CaseConfig, runs: usize) -> Result<ValidationReport, CliError> {
    if runs == 0 {
        return Err(CliError::Config(crate::error::ConfigError::Invalid {
            field: "runs".into(),
            reason: "must be at least 1".into(),
        }));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let traces = parallel::map(&seeds, |&s| run_case(cfg, s));
    let p = &cfg.params;
    let mut flood = [0usize; 3];
    let mut drought = [0usize; 3];
    let (mut within, mut pairs, mut failed, mut unconverged) = (0, 0, 0, 0);
    for trace in traces {
        for rec in trace?.records {
            match rec.status {
                StepStatus::Failed(_) => failed += 1,
                StepStatus::Solved(SolveStatus::Converged) => {}
                StepStatus::Solved(_) => unconverged += 1,
            }
            for j in 0..3 {
                let h = rec.next_state[j];
                flood[j] += (h > p.y_max[j]) as usize;
                drought[j] += (h < p.y_min[j]) as usize;
                within += (h >= p.y_min[j] && h <= p.y_max[j]) as usize;
                pairs += 1;
            }
        }
    }
    let samples = runs * cfg.steps;
    let mut stats = Vec::new();
    for j in 0..3 {
        for (bound, count, gamma) in
            [(Bound::Flood, flood[j], p.levels.upper), (Bound::Drought, drought[j], p.levels.lower)]
        {
            stats.push(ViolationStat {
                lake: j + 1,
                bound,
                violations: count,
                samples,
                interval: wilson_interval(count, samples),
                allowed: 1.0 - gamma,
            });
        }
    }
    let mut warnings = Vec::new();
    if runs < MIN_RUNS {
        warnings.push(format!(
            "only {runs} run(s): confidence intervals are wide and per-run outcomes are correlated; use at least {MIN_RUNS}"
        ));
    }
    if failed > 0 {
        warnings.push(format!("{failed} step(s) failed to solve and applied the warm-start input"));
    }
    Ok(ValidationReport {
        runs,
        steps: cfg.steps,
        stats,
        within_bands: within,
        pairs,
        failed_steps: failed,
        unconverged_steps: unconverged,
        warnings,
    })
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "runs {}  steps {}  samples per bound {}", self.runs, self.steps, self.runs * self.steps)?;
        writeln!(f, "{:<5} {:<8} {:>10} {:>11} {:>23} {:>8}", "lake", "bound", "violations", "frequency", "95% interval", "allowed")?;
        for s in &self.stats {
            let bound = match s.bound {
                Bound::Flood => "flood",
                Bound::Drought => "drought",
            };
            writeln!(
                f,
                "{:<5} {:<8} {:>10} {:>11.6} [{:>9.6}, {:>9.6}] {:>8.4}{}",
                s.lake,
                bound,
                s.violations,
                s.frequency(),
                s.interval.0,
                s.interval.1,
                s.allowed,
                if s.flagged() { "  EXCEEDS LEVEL" } else { "" }
            )?;
        }
        writeln!(
            f,
            "within bands: {}/{} step-lake pairs ({:.2}%)",
            self.within_bands,
            self.pairs,
            100.0 * self.band_fraction()
        )?;
        writeln!(f, "failed steps: {}  unconverged steps: {}", self.failed_steps, self.unconverged_steps)?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}
