use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fogopt::harness::{
    generate, run_method, run_suite, write_csv, write_json, Format, Method, ResultRow,
    ScenarioSpec, SuiteOptions,
};
use fogopt::model::SystemInstance;
use fogopt::Error;

/// Exit status when exact methods disagree or miss deadlines.
const CROSS_CHECK_FAILED: u8 = 2;

#[derive(Parser)]
#[command(
    name = "fogopt",
    version,
    about = "Energy-optimal task offloading in fog networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one generated instance as JSON.
    Gen {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Experiment index within the sweep.
        #[arg(long, default_value_t = 0)]
        experiment: usize,
        /// Output file, stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an instance file with one method and print a JSON summary.
    Solve {
        /// Instance JSON as written by `gen`.
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "FFBD-F")]
        method: Method,
    },
    /// Run methods over a whole sweep and write the result table.
    Bench {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        methods: MethodArgs,
        /// Repetitions per method; wall times are averaged.
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, default_value = "csv")]
        format: Format,
        /// Output file, stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run methods over a sweep and print a side by side summary.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        methods: MethodArgs,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// 1: complexity sweep, 2: deadline sweep.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the number of tasks.
    #[arg(long)]
    tasks: Option<usize>,
    /// Override the number of fog nodes.
    #[arg(long)]
    fog: Option<usize>,
}

impl ScenarioArgs {
    fn spec(&self) -> ScenarioSpec {
        let mut spec = match self.scenario {
            1 => ScenarioSpec::scenario1(self.seed),
            _ => ScenarioSpec::scenario2(self.seed),
        };
        if let Some(n) = self.tasks {
            spec.n_tasks = n;
        }
        if let Some(m) = self.fog {
            spec.n_fog = m;
        }
        spec
    }
}

#[derive(Args)]
struct MethodArgs {
    /// Comma separated method names; all but the enumeration oracle by default.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Skip the agreement and deadline check on exact methods.
    #[arg(long)]
    no_cross_check: bool,
}

impl MethodArgs {
    fn methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            Method::ALL
                .into_iter()
                .filter(|m| *m != Method::Oracle)
                .collect()
        } else {
            self.methods.clone()
        }
    }

    fn options(&self, reps: usize) -> SuiteOptions {
        SuiteOptions {
            repetitions: reps,
            cross_check: !self.no_cross_check,
        }
    }
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn gen(spec: &ScenarioSpec, experiment: usize, out: Option<&PathBuf>) -> Result<()> {
    if experiment >= spec.experiments {
        bail!(
            "experiment {experiment} out of range, the sweep has {}",
            spec.experiments
        );
    }
    let inst = generate(spec, experiment)?;
    let mut w = output(out)?;
    writeln!(w, "{}", inst.to_json_string()?)?;
    w.flush()?;
    Ok(())
}

fn solve(path: &PathBuf, method: Method) -> Result<()> {
    let inst = SystemInstance::load(path).with_context(|| format!("reading {}", path.display()))?;
    let run = run_method(&inst, method)?;
    let placements = run
        .solution
        .as_ref()
        .and_then(|s| s.placements(inst.n_nodes()))
        .map(|p| p.iter().map(ToString::to_string).collect::<Vec<_>>());
    let summary = json!({
        "method": method.name(),
        "status": if run.solution.is_some() { "feasible" } else { "infeasible" },
        "energy": run.energy(),
        "mean_delay": run.mean_delay,
        "error_rate": run.error_rate,
        "placements": placements,
        "wall_time_ms": run.wall_time_ms,
        "intermediate_problems": run.intermediate_problems,
        "mp_iterations": run.mp_iterations,
        "standard_solver_calls": run.standard_solver_calls,
        "fast_detection_fraction": run.fast_detection_fraction,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn print_table(rows: &[ResultRow]) {
    println!(
        "{:>3}  {:<11} {:<10} {:>12} {:>8} {:>8} {:>7} {:>10}",
        "exp", "method", "status", "energy/task", "offload", "cloud", "errors", "ms"
    );
    for r in rows {
        let energy = r
            .mean_energy
            .map_or_else(|| "-".to_string(), |e| format!("{e:.6}"));
        println!(
            "{:>3}  {:<11} {:<10} {:>12} {:>8.2} {:>8.2} {:>7.2} {:>10.1}",
            r.experiment,
            r.method.name(),
            format!("{:?}", r.status),
            energy,
            r.offload_fraction,
            r.cloud_fraction,
            r.error_rate,
            r.wall_time_ms
        );
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Gen {
            scenario,
            experiment,
            out,
        } => gen(&scenario.spec(), experiment, out.as_ref()),
        Command::Solve { instance, method } => solve(&instance, method),
        Command::Bench {
            scenario,
            methods,
            reps,
            format,
            out,
        } => {
            let rows = run_suite(&scenario.spec(), &methods.methods(), &methods.options(reps))?;
            let mut w = output(out.as_ref())?;
            match format {
                Format::Csv => write_csv(&rows, &mut w)?,
                Format::Json => {
                    write_json(&rows, &mut w)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::Compare { scenario, methods } => {
            let rows = run_suite(&scenario.spec(), &methods.methods(), &methods.options(1))?;
            print_table(&rows);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::CrossCheck(_)) => ExitCode::from(CROSS_CHECK_FAILED),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
