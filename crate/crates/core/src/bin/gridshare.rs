use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gridshare::oracle::{brute_force_schedule, GridSearchSpec};
use gridshare::pipeline::{emit_report, run_study, write_iteration_trace, AllocationChoice, ReportFormat, StudyError, StudyOptions};
use gridshare::program::{community_spec, CostScope};
use gridshare::scenario::{load_scenario_with, validate_scenario, LoadMode, Scenario};
use gridshare::solver::{solve_problem, SolverOptions};

const EXIT_INVALID: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "gridshare", version, about = "Energy community scheduling and cost allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every violation.
    Validate {
        scenario: PathBuf,
        /// Ignore unknown keys instead of rejecting them.
        #[arg(long)]
        lax: bool,
    },
    /// Run the full study and write the reports.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, value_enum, default_value_t = Allocation::All)]
        allocation: Allocation,
        /// Linear grid fee (€/kWh) of the fixed-rate benchmark; repeatable.
        /// Defaults to 0.10, 0.208 and 0.30.
        #[arg(long = "fixed-rate")]
        fixed_rates: Vec<f64>,
        /// Skip the complementarity repair.
        #[arg(long)]
        no_repair: bool,
        #[arg(long)]
        lax: bool,
        /// Print stage timings to stderr.
        #[arg(long)]
        timings: bool,
        /// Write the interior-point iterations of every sub-problem to this CSV file.
        #[arg(long, value_name = "FILE")]
        dump_iterations: Option<PathBuf>,
    },
    /// Compare the conic optimum with an exhaustive search (tiny instances).
    Oracle {
        scenario: PathBuf,
        #[arg(long, default_value_t = 11)]
        grid_steps: usize,
        #[arg(long)]
        lax: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Allocation {
    Nash,
    Shapley,
    All,
}

/// Failure with a dedicated exit code.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
struct Exit {
    code: u8,
    message: String,
}

fn mode(lax: bool) -> LoadMode {
    if lax {
        LoadMode::Lax
    } else {
        LoadMode::Strict
    }
}

fn load_valid(path: &PathBuf, lax: bool) -> Result<Scenario> {
    let s = load_scenario_with(path, mode(lax)).map_err(|e| Exit {
        code: EXIT_INVALID,
        message: e.to_string(),
    })?;
    let violations = validate_scenario(&s);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err(Exit {
            code: EXIT_INVALID,
            message: format!("{}: {} violations", path.display(), violations.len()),
        }
        .into());
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { scenario, lax } => {
            let s = load_valid(&scenario, lax)?;
            println!(
                "{}: valid ({} members, {} slots, {} branches)",
                scenario.display(),
                s.member_count(),
                s.slots(),
                s.network.branches.len()
            );
        }
        Command::Run {
            scenario,
            out,
            format,
            allocation,
            fixed_rates,
            no_repair,
            lax,
            timings,
            dump_iterations,
        } => {
            let s = load_valid(&scenario, lax)?;
            let mut options = StudyOptions::for_scenario(&s);
            options.repair = !no_repair;
            options.allocation = match allocation {
                Allocation::Nash => AllocationChoice::Nash,
                Allocation::Shapley => AllocationChoice::Shapley,
                Allocation::All => AllocationChoice::All,
            };
            if !fixed_rates.is_empty() {
                options.fixed_rates = fixed_rates;
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let report = match run_study(&s, &options) {
                Ok(r) => r,
                Err(StudyError::Solve { failure, manifest }) => {
                    if let Some(p) = &dump_iterations {
                        write_iteration_trace(&manifest, p)?;
                    }
                    let path = out.join("manifest.json");
                    let text = serde_json::to_string_pretty(&manifest)?;
                    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
                    return Err(Exit {
                        code: EXIT_SOLVER,
                        message: format!("{failure} (manifest written to {})", path.display()),
                    }
                    .into());
                }
                Err(e) => return Err(e.into()),
            };
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            emit_report(&s, &report, &out, format)?;
            if let Some(p) = &dump_iterations {
                write_iteration_trace(&report.manifest, p)?;
            }
            if timings {
                for (stage, d) in &report.timings {
                    eprintln!("{stage:<12} {:>9.3} ms", d.as_secs_f64() * 1e3);
                }
            }
            println!("{:<14} {:>12}", "approach", "total €");
            for (name, o) in [
                ("global", &report.global),
                ("co_aggregate", &report.co_aggregate),
                ("par_aggregate", &report.par_aggregate),
            ] {
                println!("{name:<14} {:>12.6}", o.costs.total);
            }
            println!("reports written to {}", out.display());
        }
        Command::Oracle {
            scenario,
            grid_steps,
            lax,
        } => {
            let s = load_valid(&scenario, lax)?;
            let opts = SolverOptions::from(&s.options);
            let solved = solve_problem(&s, &community_spec(&s, CostScope::Full), &opts, true, "global")
                .map_err(|e| Exit {
                    code: EXIT_SOLVER,
                    message: e.to_string(),
                })?;
            let oracle = brute_force_schedule(&s, &GridSearchSpec::new(grid_steps))?;
            let conic = solved.solution.objective;
            println!("conic optimum   {conic:.6} €");
            println!(
                "oracle minimum  {:.6} € ({} of {} grid points feasible, {} dimensions)",
                oracle.cost, oracle.feasible, oracle.points, oracle.dimensions
            );
            println!(
                "relative gap    {:+.4} %",
                100.0 * (oracle.cost - conic) / oracle.cost.abs().max(1e-9)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.code);
            ExitCode::from(code)
        }
    }
}
