use clap::{Parser, Subcommand};
use dhevo_cli::{cmd_dive, cmd_eval, cmd_evolve, cmd_gen, cmd_report, CliError};
use dhevo_cli::{DiveArgs, EvalArgs, EvolveArgs, GenArgs, ReportArgs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "dhevo", version, about = "Evolve and evaluate MILP diving heuristics")]
struct Cli {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate benchmark instances.
    Gen(GenArgs),
    /// Run one dive and print the result.
    Dive(DiveArgs),
    /// Run an evolution from a TOML config.
    Evolve(EvolveArgs),
    /// Evaluate a portfolio and builtin scorers on an instance directory.
    Eval(EvalArgs),
    /// Rebuild summary tables from per-instance CSVs.
    Report(ReportArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Gen(a) => {
            for p in cmd_gen(a, seed)? {
                println!("{}", p.display());
            }
        }
        Command::Dive(a) => {
            let r = cmd_dive(a, seed)?;
            if a.out.is_some() {
                println!("objective {:?}, gap {:?}, {} LP solves", r.result.best_objective, r.gamma_p, r.result.lp_resolves);
            }
        }
        Command::Evolve(a) => {
            let interrupt = Arc::new(AtomicBool::new(false));
            let flag = interrupt.clone();
            if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
                log::warn!("no interrupt handler: {e}");
            }
            let o = cmd_evolve(a, cli.seed, interrupt.clone())?;
            println!("{} ({} episodes)", o.archive.display(), o.episodes);
            if !o.complete && interrupt.load(Ordering::SeqCst) {
                return Err(CliError::Runtime("interrupted; partial archive written".into()));
            }
        }
        Command::Eval(a) => {
            cmd_eval(a, seed)?;
            println!("{}", a.out.join("report.md").display());
        }
        Command::Report(a) => {
            cmd_report(a)?;
            println!("{}", a.out.join("report.md").display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    if cli.threads > 0 {
        dhevo_core::parallel::configure_threads(cli.threads);
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
