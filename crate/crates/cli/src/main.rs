//! `morseflow` command-line interface.
//!
//! Exit status: 0 when every requested verdict passes, 1 on any fail, 2 on
//! any inconclusive, 3 for usage errors and 4 for runtime errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use morseflow::experiment::{
    benchmark, emit_report, load_problem, registry, run_experiment, ExperimentReport, ProblemSpec,
    ReportFormat, Stage,
};
use morseflow::flow::{flow_to_level, Direction, FlowBudget, StepControl, Termination};
use morseflow::report::Verdict;

const EXIT_USAGE: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "morseflow",
    version,
    about = "Gradient flows on singular real varieties"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on a problem file.
    Run {
        #[arg(long)]
        problem: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run the pipeline on a built-in benchmark.
    Bench {
        /// One of: saddle, quartic, planes, cone.
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Integrate a single flow line and write it as CSV.
    Flow {
        #[arg(long)]
        problem: PathBuf,
        /// Start point, comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        from: String,
        #[arg(long, value_enum, default_value_t = Dir::Down)]
        direction: Dir,
        #[arg(long, allow_hyphen_values = true)]
        stop_level: f64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunOpts {
    /// Comma-separated subset of critical,loja,cond1,cond2,cond4.
    #[arg(long, default_value = "critical,loja,cond1,cond2,cond4")]
    stages: String,
    /// Directory for the report; nothing is written when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Overrides the seed in the problem.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    Down,
    Up,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    CsvBundle,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn exit_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Inconclusive => 2,
    }
}

fn print_summary(report: &ExperimentReport) {
    println!("problem {}", report.problem.name);
    for (i, cp) in report.critical_points.iter().enumerate() {
        println!(
            "critical point {i}: {:?} value {} kind {:?}",
            cp.location, cp.value, cp.kind
        );
    }
    for e in &report.lojasiewicz_fits {
        match (&e.fit, &e.error) {
            (Some(fit), _) => println!(
                "fit {}: theta {:.4} C {:.4} delta {:.4}{}",
                e.critical_point,
                fit.theta,
                fit.constant_c,
                fit.radius_delta,
                e.eps.map(|x| format!(" eps {x:.4e}")).unwrap_or_default()
            ),
            (None, Some(err)) => println!("fit {}: {err}", e.critical_point),
            (None, None) => {}
        }
    }
    for c in &report.condition_reports {
        println!("condition {}: {}", c.condition, c.verdict);
        for w in &c.warnings {
            println!("  warning: {w}");
        }
    }
    println!("corollary: {}", report.corollary_verdict);
}

fn run(mut spec: ProblemSpec, opts: RunOpts) -> Result<u8, Failure> {
    let stages = Stage::parse_list(&opts.stages).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    let report = run_experiment(&spec, &stages).map_err(|e| match e {
        morseflow::experiment::ExperimentError::MissingDependency { .. } => {
            Failure::Usage(e.to_string())
        }
        other => runtime(other),
    })?;
    print_summary(&report);
    if let Some(dir) = &opts.out {
        let format = match opts.format {
            Format::Json => ReportFormat::Json,
            Format::CsvBundle => ReportFormat::CsvBundle,
        };
        for path in emit_report(&report, format, dir).map_err(runtime)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(exit_code(report.overall_verdict()))
}

fn flow(
    problem: PathBuf,
    from: &str,
    direction: Dir,
    level: f64,
    out: Option<PathBuf>,
) -> Result<u8, Failure> {
    let spec = load_problem(&problem).map_err(runtime)?;
    let (f, z) = spec.build().map_err(runtime)?;
    let x0 = from
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(format!("--from: {e}")))?;
    if x0.len() != z.dim() {
        return Err(Failure::Usage(format!(
            "--from has {} coordinates, the problem has {} variables",
            x0.len(),
            z.dim()
        )));
    }
    let direction = match direction {
        Dir::Down => Direction::Descend,
        Dir::Up => Direction::Ascend,
    };
    let traj = flow_to_level(
        &f,
        &z,
        &x0,
        level,
        direction,
        &StepControl::default(),
        &FlowBudget::default(),
    )
    .map_err(runtime)?;
    let result = match &out {
        Some(path) => File::create(path)
            .map(BufWriter::new)
            .and_then(|mut w| traj.write_csv(&mut w).and_then(|_| w.flush())),
        None => traj.write_csv(&mut io::stdout().lock()),
    };
    result.map_err(runtime)?;
    eprintln!(
        "termination {:?} after {} samples, arc length {:.6e}",
        traj.termination,
        traj.samples.len(),
        traj.total_arc_length()
    );
    Ok(if traj.termination == Termination::ReachLevel {
        0
    } else {
        2
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Run { problem, opts } => load_problem(&problem)
            .map_err(runtime)
            .and_then(|spec| run(spec, opts)),
        Command::Bench { name, opts } => match benchmark(&name) {
            Some(spec) => run(spec, opts),
            None => Err(Failure::Usage(format!(
                "unknown benchmark '{name}' (expected one of: {})",
                registry()
                    .iter()
                    .map(|p| p.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        },
        Command::Flow {
            problem,
            from,
            direction,
            stop_level,
            out,
        } => flow(problem, &from, direction, stop_level, out),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn verdicts_map_to_exit_codes() {
        assert_eq!(exit_code(Verdict::Pass), 0);
        assert_eq!(exit_code(Verdict::Fail), 1);
        assert_eq!(exit_code(Verdict::Inconclusive), 2);
    }

    #[test]
    fn negative_levels_and_coordinates_parse() {
        let cli = Cli::try_parse_from([
            "morseflow",
            "flow",
            "--problem",
            "p.json",
            "--from",
            "-0.5,0.1",
            "--stop-level",
            "-1",
        ])
        .unwrap();
        match cli.command {
            Command::Flow {
                from, stop_level, ..
            } => {
                assert_eq!(from, "-0.5,0.1");
                assert_eq!(stop_level, -1.0);
            }
            _ => panic!("expected flow"),
        }
    }
}
