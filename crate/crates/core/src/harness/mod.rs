//! Monte Carlo experiments over frameworks and a swept parameter, with CSV output.

pub mod oracle;
mod output;

pub use output::{emit_csv, emit_summary_csv, emit_trace, read_csv, read_trace, TraceRow};

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{framework_channels, solve, Framework, Instance};
use crate::error::{Error, Result};
use crate::scenario::SystemConfig;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "STARNOMA_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NumUsers,
    Elements,
    BsRisDistance,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::NumUsers => "num_users",
            SweepVariable::Elements => "elements",
            SweepVariable::BsRisDistance => "bs_ris_distance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [SweepVariable::NumUsers, SweepVariable::Elements, SweepVariable::BsRisDistance]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep variable '{s}'")))
    }

    /// `base` with the swept parameter set to `value`.
    ///
    /// Element counts that are perfect squares give a square array; others a
    /// single row along y.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut c = base.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidArgument(format!("{} needs a positive integer, got {v}", self.name())))
            }
        };
        match self {
            SweepVariable::NumUsers => c.users_per_side = as_count(value)?,
            SweepVariable::Elements => {
                let m = as_count(value)?;
                let side = (m as f64).sqrt().round() as usize;
                (c.elements_y, c.elements_z) = if side * side == m { (side, side) } else { (m, 1) };
            }
            SweepVariable::BsRisDistance => {
                c.bs_ris_distance_2d_m = value;
                c.bs_position_m = None;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub frameworks: Vec<Framework>,
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub base: SystemConfig,
    /// Trial `i` uses seed `base_seed + i`.
    pub base_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("at least one trial is required".into()));
        }
        if self.frameworks.is_empty() {
            return Err(Error::InvalidArgument("no frameworks selected".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidArgument("no sweep values".into()));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!("sweep values must be strictly increasing: {:?}", self.values)));
        }
        for &v in &self.values {
            self.sweep.apply(&self.base, v)?;
        }
        Ok(())
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

/// One solved (framework, value, trial) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub framework: Framework,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub min_rate: f64,
    pub rates: Vec<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub framework: Framework,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub sweep: SweepVariable,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<TrialFailure>,
}

/// Mean and standard error of one (framework, value) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Sample mean and standard error (`sd / sqrt(n)`, zero for one sample).
pub fn mean_stderr(xs: &[f64]) -> CellStats {
    let n = xs.len();
    if n == 0 {
        return CellStats { n, mean: f64::NAN, stderr: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    CellStats { n, mean, stderr }
}

impl ResultTable {
    pub fn empty(sweep: SweepVariable) -> Self {
        Self { sweep, rows: Vec::new(), failures: Vec::new() }
    }

    /// Per-trial min rates of one cell, in trial order.
    pub fn samples(&self, framework: Framework, value: f64) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter(|r| r.framework == framework && r.value == value)
            .map(|r| (r.trial, r.min_rate))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    }

    pub fn cell(&self, framework: Framework, value: f64) -> CellStats {
        let xs: Vec<f64> = self.samples(framework, value).into_iter().map(|x| x.1).collect();
        mean_stderr(&xs)
    }

    /// Statistics of `a - b` over trials solved by both cells (common random numbers).
    pub fn paired_gap(&self, a: (Framework, f64), b: (Framework, f64)) -> CellStats {
        let bs: BTreeMap<usize, f64> = self.samples(b.0, b.1).into_iter().collect();
        let diffs: Vec<f64> =
            self.samples(a.0, a.1).into_iter().filter_map(|(t, x)| bs.get(&t).map(|y| x - y)).collect();
        mean_stderr(&diffs)
    }

    /// Every (framework, value) cell with its statistics, in first-seen order.
    pub fn cells(&self) -> Vec<(Framework, f64, CellStats)> {
        let mut keys: Vec<(Framework, f64)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|k| k.0 == r.framework && k.1 == r.value) {
                keys.push((r.framework, r.value));
            }
        }
        keys.into_iter().map(|(f, v)| (f, v, self.cell(f, v))).collect()
    }

    /// Copy with wall times zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        t.rows.iter_mut().for_each(|r| r.wall_time_s = 0.0);
        t
    }
}

/// Worker count from the environment cap, if any.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0)
}

/// Solves one drop with every framework. The drop is generated once so all
/// frameworks see identical channels.
fn run_trial(spec: &ExperimentSpec, config: &SystemConfig, value: f64, trial: usize) -> Vec<std::result::Result<ResultRow, TrialFailure>> {
    let seed = spec.seed(trial);
    let fail = |framework: Framework, e: Error| TrialFailure { framework, value, trial, seed, message: e.to_string() };
    let instance = match Instance::<f64>::generate(config, seed) {
        Ok(i) => i,
        Err(e) => {
            let msg = e.to_string();
            return spec.frameworks.iter().map(|&f| Err(fail(f, Error::InvalidConfig(msg.clone())))).collect();
        }
    };
    spec.frameworks
        .iter()
        .map(|&framework| {
            let start = Instant::now();
            let sol = solve(framework, &instance).map_err(|e| fail(framework, e))?;
            sol.validate(&framework_channels(framework, &instance), instance.link).map_err(|e| fail(framework, e))?;
            Ok(ResultRow {
                framework,
                value,
                trial,
                seed,
                min_rate: sol.min_rate(),
                rates: sol.rates().to_vec(),
                iterations: sol.iterations(),
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Runs every (value, trial) drop, in parallel across drops.
///
/// Results are ordered by value, then trial, then framework, whatever the
/// thread count. Failed solves are collected rather than aborting the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let configs = spec.values.iter().map(|&v| spec.sweep.apply(&spec.base, v)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..spec.values.len()).flat_map(|v| (0..spec.trials).map(move |t| (v, t))).collect();
    let work = || -> Vec<_> {
        jobs.par_iter()
            .map(|&(v, t)| run_trial(spec, &configs[v], spec.values[v], t))
            .collect()
    };
    let results = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut table = ResultTable::empty(spec.sweep);
    for r in results.into_iter().flatten() {
        match r {
            Ok(row) => table.rows.push(row),
            Err(f) => table.failures.push(f),
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(frameworks: Vec<Framework>, values: Vec<f64>, trials: usize) -> ExperimentSpec {
        let base = SystemConfig { elements_y: 2, elements_z: 2, ..Default::default() };
        ExperimentSpec { frameworks, sweep: SweepVariable::NumUsers, values, trials, base, base_seed: 100 }
    }

    #[test]
    fn cardinality() {
        let s = spec(vec![Framework::HybridNomaStar, Framework::TdmaStar], vec![1.0, 2.0, 3.0], 5);
        let t = run_experiment(&s).unwrap();
        assert_eq!(t.rows.len(), 30);
        assert!(t.failures.is_empty());
        assert!(t.rows.iter().all(|r| r.min_rate >= 0.0));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let s = spec(vec![Framework::HybridNomaStar, Framework::EqualPower], vec![1.0, 2.0], 3);
        let a = run_experiment(&s).unwrap().without_timing();
        let b = run_experiment(&s).unwrap().without_timing();
        assert_eq!(a, b);
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = serial.install(|| run_experiment(&s)).unwrap().without_timing();
        assert_eq!(a, c);
    }

    #[test]
    fn spec_validation() {
        assert!(spec(vec![Framework::TdmaStar], vec![2.0, 1.0], 1).validate().is_err());
        assert!(spec(vec![Framework::TdmaStar], vec![1.0], 0).validate().is_err());
        assert!(spec(vec![], vec![1.0], 1).validate().is_err());
        assert!(spec(vec![Framework::TdmaStar], vec![1.5], 1).validate().is_err());
    }

    #[test]
    fn element_sweep_shapes() {
        let base = SystemConfig::default();
        let c = SweepVariable::Elements.apply(&base, 36.0).unwrap();
        assert_eq!((c.elements_y, c.elements_z), (6, 6));
        let c = SweepVariable::Elements.apply(&base, 12.0).unwrap();
        assert_eq!((c.elements_y, c.elements_z), (12, 1));
        let c = SweepVariable::BsRisDistance.apply(&base, 250.0).unwrap();
        assert_eq!(c.bs_position().x, -250.0);
    }

    #[test]
    fn stats() {
        let s = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[4.0]).stderr, 0.0);
    }
}
