use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::methods::{run_method, Method, MethodRun};
use super::scenario::{generate, ScenarioSpec};
use crate::error::{Error, Result};
use crate::model::{PlacementCounts, SystemInstance};

/// Relative tolerance for energies of exact methods to agree.
pub const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Feasible,
    Infeasible,
}

/// One method on one experiment, averaged over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub experiment: usize,
    pub offload_fraction: f64,
    pub fog_fraction: f64,
    pub cloud_fraction: f64,
    pub error_rate: f64,
    /// J per task; empty when infeasible.
    pub mean_energy: Option<f64>,
    /// Seconds; empty when infeasible.
    pub mean_delay: Option<f64>,
    pub wall_time_ms: f64,
    pub intermediate_problem_count: usize,
    pub mp_iterations: usize,
    pub fast_detection_fraction: f64,
    pub status: RunStatus,
    pub standard_solver_calls: usize,
}

const HEADER: [&str; 14] = [
    "method",
    "experiment",
    "offload_fraction",
    "fog_fraction",
    "cloud_fraction",
    "error_rate",
    "mean_energy",
    "mean_delay",
    "wall_time_ms",
    "intermediate_problem_count",
    "mp_iterations",
    "fast_detection_fraction",
    "status",
    "standard_solver_calls",
];

impl ResultRow {
    pub fn from_run(run: &MethodRun, experiment: usize, instance: &SystemInstance) -> Self {
        let n = instance.n_tasks().max(1) as f64;
        let n_nodes = instance.n_nodes();
        let counts = run
            .solution
            .as_ref()
            .and_then(|s| s.placements(n_nodes))
            .map(|p| PlacementCounts::of(&p, n_nodes))
            .unwrap_or_default();
        Self {
            method: run.method,
            experiment,
            offload_fraction: (counts.fog + counts.cloud) as f64 / n,
            fog_fraction: counts.fog as f64 / n,
            cloud_fraction: counts.cloud as f64 / n,
            error_rate: run.error_rate,
            mean_energy: run.energy().map(|e| e / n),
            mean_delay: run.mean_delay,
            wall_time_ms: run.wall_time_ms,
            intermediate_problem_count: run.intermediate_problems,
            mp_iterations: run.mp_iterations,
            fast_detection_fraction: run.fast_detection_fraction,
            status: if run.solution.is_some() {
                RunStatus::Feasible
            } else {
                RunStatus::Infeasible
            },
            standard_solver_calls: run.standard_solver_calls,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub repetitions: usize,
    /// Fail when exact methods disagree or report deadline misses.
    pub cross_check: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            repetitions: 1,
            cross_check: true,
        }
    }
}

fn agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= AGREEMENT_TOL * a.abs().max(b.abs()).max(1e-12)
}

fn cross_check(runs: &[MethodRun], experiment: usize) -> Result<()> {
    let exact: Vec<&MethodRun> = runs.iter().filter(|r| r.method.is_exact()).collect();
    for r in &exact {
        if r.solution.is_some() && r.error_rate > 0.0 {
            return Err(Error::CrossCheck(format!(
                "{} misses deadlines on experiment {experiment} (error rate {})",
                r.method, r.error_rate
            )));
        }
    }
    if let Some(first) = exact.first() {
        for r in &exact[1..] {
            let ok = match (first.energy(), r.energy()) {
                (None, None) => true,
                (Some(a), Some(b)) => agree(a, b),
                _ => false,
            };
            if !ok {
                return Err(Error::CrossCheck(format!(
                    "experiment {experiment}: {} gives {:?} J, {} gives {:?} J",
                    first.method,
                    first.energy(),
                    r.method,
                    r.energy()
                )));
            }
        }
    }
    Ok(())
}

/// Runs every method on every experiment of the scenario. Rows come out
/// ordered by experiment, then by the order of `methods`.
pub fn run_suite(
    spec: &ScenarioSpec,
    methods: &[Method],
    opts: &SuiteOptions,
) -> Result<Vec<ResultRow>> {
    let reps = opts.repetitions.max(1);
    let mut rows = Vec::new();
    for experiment in 0..spec.experiments {
        let instance = generate(spec, experiment)?;
        let mut first_runs = Vec::new();
        for &method in methods {
            let mut runs = Vec::with_capacity(reps);
            for _ in 0..reps {
                runs.push(run_method(&instance, method)?);
            }
            let mut row = ResultRow::from_run(&runs[0], experiment, &instance);
            row.wall_time_ms = runs.iter().map(|r| r.wall_time_ms).sum::<f64>() / reps as f64;
            rows.push(row);
            first_runs.push(runs.swap_remove(0));
        }
        if opts.cross_check {
            cross_check(&first_runs, experiment)?;
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidInstance(format!(
                "unknown output format `{other}`"
            ))),
        }
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn write_json<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, rows)?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    Ok(serde_json::from_reader(input)?)
}
