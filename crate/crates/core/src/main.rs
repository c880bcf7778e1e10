use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use growthopt::config::{load_config, scenario_to_toml};
use growthopt::evolution::{assemble_on, compare_runs, read_checkpoint, History, Simulation};
use growthopt::output::{read_run_summary, write_run_dir};
use growthopt::selftest::run_selftest;
use growthopt::{BalanceRelation, Error, SolverPath};

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;

#[derive(Parser)]
#[command(name = "growthopt", version, about = "Optimization-driven growth of 2D elastic bodies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Analytic,
    Numerical,
}

#[derive(Subcommand)]
enum Command {
    /// Run the growth evolution and write CSV, VTK snapshots and a checkpoint.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Output directory (overrides `output.out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint file up to `run.n_iter`.
        #[arg(long)]
        restart: Option<PathBuf>,
    },
    /// Parse a scenario and print it fully resolved.
    Validate { config: PathBuf },
    /// Compare two run directories.
    Compare { run_a: PathBuf, run_b: PathBuf },
    /// Run the built-in oracle suite.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            solver,
            out,
            restart,
        } => cmd_run(config, solver, out, restart),
        Command::Validate { config } => match load_config(&config) {
            Ok(sc) => {
                print!("{}", scenario_to_toml(&sc));
                ExitCode::SUCCESS
            }
            Err(e) => fail(EXIT_VALIDATION, &e),
        },
        Command::Compare { run_a, run_b } => cmd_compare(run_a, run_b),
        Command::Selftest => cmd_selftest(),
    }
}

fn fail(code: u8, e: &dyn std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn cmd_run(config: PathBuf, solver: Option<SolverArg>, out: Option<PathBuf>, restart: Option<PathBuf>) -> ExitCode {
    let mut sc = match load_config(&config) {
        Ok(sc) => sc,
        Err(e) => return fail(EXIT_VALIDATION, &e),
    };
    if let Some(s) = solver {
        sc.solver_path = match s {
            SolverArg::Analytic => SolverPath::Analytic,
            SolverArg::Numerical => SolverPath::Numerical,
        };
    }
    if let Some(o) = out {
        sc.out_dir = o;
    }
    if sc.solver_path == SolverPath::Analytic && sc.balance_relation == BalanceRelation::Inequality {
        return fail(
            EXIT_VALIDATION,
            &"balance.relation: the analytic path needs an equality balance; use --solver numerical",
        );
    }

    let setup = || -> Result<Simulation, Error> {
        match &restart {
            None => Simulation::new(&sc),
            Some(path) => {
                let f = std::fs::File::open(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                let cp = read_checkpoint(BufReader::new(f), &path.display().to_string())?;
                let sys = assemble_on(&sc, cp.mesh)?;
                let mut sim = Simulation::with_system(&sc, sys)?;
                sim.set_state(cp.iteration, cp.gamma)?;
                Ok(sim)
            }
        }
    };
    let mut sim = match setup() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_VALIDATION, &e),
    };
    let remaining = sc.n_iter.saturating_sub(sim.iteration());
    eprintln!(
        "{}: {} nodes, {} elements, {} steps, {:?} path",
        sc.name,
        sim.system().mesh().n_nodes(),
        sim.system().n_elements(),
        remaining,
        sc.solver_path
    );
    let every = (remaining / 10).max(1);
    let result = sim.run_with(remaining, sc.snapshot_every, |r, _| {
        if r.iter % every == 0 {
            eprintln!(
                "  iter {:>5}  objective {:.8e}  kkt {:.2e}  roundness {:.4}",
                r.iter, r.objective, r.kkt_residual, r.roundness
            );
        }
    });
    let (history, failure): (History, Option<Error>) = match result {
        Ok(h) => (h, None),
        Err(f) => (f.history, Some(f.error)),
    };
    if let Err(e) = write_run_dir(&sc.out_dir, sim.system(), &history, sc.center, &scenario_to_toml(&sc)) {
        return fail(EXIT_VALIDATION, &e);
    }
    if let Some(e) = failure {
        return fail(EXIT_SOLVER, &format!("step {} failed: {e}", history.records.last().map_or(0, |r| r.iter) + 1));
    }
    let unconverged: Vec<usize> = history.records.iter().filter(|r| !r.converged).map(|r| r.iter).collect();
    println!(
        "final objective {:.16e} after {} steps; output in {}",
        history.final_objective(),
        history.records.last().map_or(0, |r| r.iter),
        sc.out_dir.display()
    );
    if !unconverged.is_empty() {
        return fail(EXIT_SOLVER, &format!("steps did not converge: {unconverged:?}"));
    }
    ExitCode::SUCCESS
}

fn cmd_compare(a: PathBuf, b: PathBuf) -> ExitCode {
    let summaries = read_run_summary(&a).and_then(|sa| read_run_summary(&b).map(|sb| (sa, sb)));
    let report = match summaries.and_then(|(sa, sb)| compare_runs(&sa, &sb)) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_VALIDATION, &e),
    };
    println!("iter,objective_difference");
    for (i, d) in report.objective_differences.iter().enumerate() {
        println!("{i},{d:.16e}");
    }
    println!("final objective {}: {:.16e}", a.display(), report.final_objectives.0);
    println!("final objective {}: {:.16e}", b.display(), report.final_objectives.1);
    println!("relative objective difference: {:.6e}", report.relative_objective_difference);
    println!("L2 growth distance: {:.6e}", report.l2_distance);
    ExitCode::SUCCESS
}

fn cmd_selftest() -> ExitCode {
    let checks = match run_selftest() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_SOLVER, &e),
    };
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        println!("{} {}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{}/{} checks passed", checks.iter().filter(|c| c.passed).count(), checks.len());
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SOLVER)
    }
}
