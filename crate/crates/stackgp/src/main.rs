//! Command-line runner: single runs, repeated trials, the
//! active-vs-random ablation, and equation-file utilities.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use stackgp::active_loop::{self, LoopConfig};
use stackgp::evolution::EvolutionConfig;
use stackgp::feynman::{self, EquationSpec};
use stackgp::genetics::SpawnConfig;
use stackgp::model::Op;
use stackgp::report::{Mode, RunReport, TrialSummary};

#[derive(Parser)]
#[command(name = "stackgp", version, about = "Symbolic regression with active data selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Al,
    Random,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Al => Mode::ActiveLearning,
            ModeArg::Random => Mode::RandomSelection,
        }
    }
}

#[derive(Args)]
struct SearchOpts {
    /// Master seed; every stochastic stream derives from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Acquisition iterations before giving up.
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Wall-clock budget of one evolution epoch per island, in seconds.
    #[arg(long, default_value_t = 120.0)]
    epoch_secs: f64,
    /// Independent evolution islands per epoch.
    #[arg(long, default_value_t = 4)]
    islands: usize,
    /// Population size per island.
    #[arg(long, default_value_t = 300)]
    pop: usize,
    /// Hard per-island generation cap; makes epochs deterministic.
    #[arg(long)]
    gen_limit: Option<u64>,
    /// Add sin and cos to the operator set.
    #[arg(long)]
    enable_trig: bool,
    /// Extra equations (CSV) appended to the builtin registry.
    #[arg(long)]
    equations_file: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Zero wall times in reports so reruns compare byte-for-byte.
    #[arg(long)]
    no_timings: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One run on one equation.
    Run {
        /// Equation id.
        #[arg(long)]
        eq: u32,
        #[arg(long, value_enum, default_value = "al")]
        mode: ModeArg,
        #[command(flatten)]
        opts: SearchOpts,
    },
    /// Repeated runs with derived seeds, summarized by median points used.
    Trials {
        /// Equation id or comma-separated list.
        #[arg(long, value_delimiter = ',', required = true)]
        eq: Vec<u32>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, value_enum, default_value = "al")]
        mode: ModeArg,
        #[command(flatten)]
        opts: SearchOpts,
    },
    /// Paired active-vs-random trials over an equation list.
    Ablation {
        /// Comma-separated equation ids.
        #[arg(long, value_delimiter = ',', required = true)]
        eqs: Vec<u32>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[command(flatten)]
        opts: SearchOpts,
    },
    /// Print the equation registry.
    ListEquations {
        #[arg(long)]
        equations_file: Option<PathBuf>,
    },
    /// Dry-run ingestion of an equation CSV file.
    ValidateFile { path: PathBuf },
}

#[derive(Serialize)]
struct AblationRow {
    equation_id: u32,
    al: TrialSummary,
    random: TrialSummary,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { eq, mode, opts } => {
            init_jobs(opts.jobs)?;
            let registry = load_registry(opts.equations_file.as_deref())?;
            let spec = lookup(&registry, eq)?;
            let cfg = loop_config(spec, &opts, mode.into());
            warn_missing_operators(spec, &cfg);
            let mut report = active_loop::run(spec, &cfg)?;
            if opts.no_timings {
                report.strip_timings();
            }
            print_run(spec, &report);
            write_out(opts.out.as_deref(), &report.to_json())?;
            Ok(())
        }
        Command::Trials {
            eq,
            trials,
            mode,
            opts,
        } => {
            init_jobs(opts.jobs)?;
            let registry = load_registry(opts.equations_file.as_deref())?;
            let mut summaries = Vec::new();
            for id in &eq {
                let spec = lookup(&registry, *id)?;
                let cfg = loop_config(spec, &opts, mode.into());
                warn_missing_operators(spec, &cfg);
                let mut summary = active_loop::run_trials(spec, &cfg, trials)?;
                if opts.no_timings {
                    for run in &mut summary.runs {
                        run.strip_timings();
                    }
                }
                print_summary(spec, &summary);
                summaries.push(summary);
            }
            let json = if summaries.len() == 1 {
                summaries[0].to_json()
            } else {
                serde_json::to_string_pretty(&summaries)?
            };
            write_out(opts.out.as_deref(), &json)?;
            Ok(())
        }
        Command::Ablation { eqs, trials, opts } => {
            init_jobs(opts.jobs)?;
            let registry = load_registry(opts.equations_file.as_deref())?;
            let mut rows = Vec::new();
            println!(
                "{:<6} {:>10} {:>10} {:>9} {:>9}",
                "EQ", "AL", "Random", "AL-rate", "Rnd-rate"
            );
            for id in &eqs {
                let spec = lookup(&registry, *id)?;
                let cfg = loop_config(spec, &opts, Mode::ActiveLearning);
                warn_missing_operators(spec, &cfg);
                let (mut al, mut random) = active_loop::run_ablation(spec, &cfg, trials)?;
                if opts.no_timings {
                    for run in al.runs.iter_mut().chain(random.runs.iter_mut()) {
                        run.strip_timings();
                    }
                }
                println!(
                    "{:<6} {:>10} {:>10} {:>8.0}% {:>8.0}%",
                    id,
                    al.median_points.to_string(),
                    random.median_points.to_string(),
                    al.solve_rate * 100.0,
                    random.solve_rate * 100.0
                );
                rows.push(AblationRow {
                    equation_id: *id,
                    al,
                    random,
                });
            }
            write_out(opts.out.as_deref(), &serde_json::to_string_pretty(&rows)?)?;
            Ok(())
        }
        Command::ListEquations { equations_file } => {
            let registry = load_registry(equations_file.as_deref())?;
            for eq in &registry {
                let vars: Vec<String> = eq
                    .variables
                    .iter()
                    .map(|v| format!("{}∈[{},{}]", v.name, v.lo, v.hi))
                    .collect();
                let extra: Vec<&str> = eq.required_operators().iter().map(|o| o.name()).collect();
                let note = if extra.is_empty() {
                    String::new()
                } else {
                    format!("  (needs {})", extra.join(","))
                };
                println!(
                    "{:>4}  {:<26} {}  |  {}{}",
                    eq.id,
                    eq.name,
                    vars.join(" "),
                    eq.source,
                    note
                );
            }
            Ok(())
        }
        Command::ValidateFile { path } => {
            let specs = feynman::ingest_equation_file(&path)
                .with_context(|| format!("validation failed for {}", path.display()))?;
            println!("{}: {} equation(s) ok", path.display(), specs.len());
            for eq in &specs {
                println!(
                    "{:>4}  {:<26} {} vars  |  {}",
                    eq.id,
                    eq.name,
                    eq.variables.len(),
                    eq.source
                );
            }
            Ok(())
        }
    }
}

fn init_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("failed to size the worker pool")?;
    }
    Ok(())
}

fn load_registry(extra: Option<&Path>) -> Result<Vec<EquationSpec>> {
    let mut registry = feynman::builtin_registry();
    if let Some(path) = extra {
        let specs = feynman::ingest_equation_file(path)
            .with_context(|| format!("failed to ingest {}", path.display()))?;
        feynman::extend_registry(&mut registry, specs)?;
    }
    Ok(registry)
}

fn lookup(registry: &[EquationSpec], id: u32) -> Result<&EquationSpec> {
    feynman::find_equation(registry, id)
        .ok_or_else(|| anyhow!("no equation with id {id}; see `stackgp list-equations`"))
}

fn loop_config(eq: &EquationSpec, opts: &SearchOpts, mode: Mode) -> LoopConfig {
    let ops = if opts.enable_trig {
        Op::default_set_with_trig()
    } else {
        Op::default_set()
    };
    let spawn = SpawnConfig::new(eq.variables.len(), ops);
    let mut evo = EvolutionConfig::new(spawn);
    evo.pop_size = opts.pop;
    evo.islands = opts.islands;
    evo.time_limit = Duration::from_secs_f64(opts.epoch_secs);
    evo.generation_limit = opts.gen_limit;
    let mut cfg = LoopConfig::new(evo);
    cfg.mode = mode;
    cfg.max_iterations = opts.max_iters;
    cfg.master_seed = opts.seed;
    cfg
}

fn warn_missing_operators(eq: &EquationSpec, cfg: &LoopConfig) {
    let missing: Vec<&str> = eq
        .required_operators()
        .into_iter()
        .filter(|op| !cfg.evolution.spawn.ops.contains(op))
        .map(|op| op.name())
        .collect();
    if !missing.is_empty() {
        eprintln!(
            "note: equation {} needs operator(s) {} — consider --enable-trig",
            eq.id,
            missing.join(", ")
        );
    }
}

fn print_run(eq: &EquationSpec, report: &RunReport) {
    println!(
        "equation {} ({})  mode={}  solved={}  points_used={}",
        report.equation_id, eq.name, report.mode, report.solved, report.points_used
    );
    println!(
        "best model: {}  [a={:.6}, b={:.6}, complexity={}]",
        report.best_model.infix,
        report.best_model.a,
        report.best_model.b,
        report.best_model.complexity
    );
    if let Some(last) = report.iterations.last() {
        let test = last
            .test_max_rel_err
            .map_or_else(|| "invalid".to_string(), |e| format!("{e:.3e}"));
        println!(
            "final train loss {:.3e}, test error {}, {} iteration(s)",
            last.train_loss,
            test,
            report.iterations.len() - 1
        );
    }
}

fn print_summary(eq: &EquationSpec, summary: &TrialSummary) {
    println!(
        "equation {} ({})  mode={}  trials={}  solve_rate={:.0}%  median_points={}",
        summary.equation_id,
        eq.name,
        summary.mode,
        summary.trials,
        summary.solve_rate * 100.0,
        summary.median_points
    );
}

fn write_out(path: Option<&Path>, json: &str) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, json)
            .with_context(|| format!("failed to write {}", path.display()))?;
    }
    Ok(())
}
