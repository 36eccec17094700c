//! Subcommands of the `dhevo` binary, callable as library functions.

pub mod manifest;

use clap::Args;
use dhevo_core::diving::{dive, DiveResult, Scorer};
use dhevo_core::evolution::{
    self, build_provider, build_templates, load_train_dir, prepare_instances, Archive, EvolveConfig,
    EvolveError, Observer, ARCHIVE_SCHEMA,
};
use dhevo_core::gen::{Family, FamilyParams, GenSpec};
use dhevo_core::io::{self, IoError, Reference};
use dhevo_core::metrics::primal_gap;
use dhevo_core::milp::BnbLimits;
use dhevo_core::report::{self, PortfolioFile, ReportError, SummaryRow, PORTFOLIO_SCHEMA};
use manifest::RunManifest;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Scorer(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::Config(_) | EvolveError::Resume(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub family: Option<Family>,
    /// Size preset: tiny, easy or hard.
    #[arg(long, default_value = "tiny")]
    pub preset: String,
    /// Explicit generator parameters as JSON, e.g. '{"family":"indset","nodes":40,"affinity":3}'.
    #[arg(long, conflicts_with_all = ["family", "preset"])]
    pub params: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip solving for reference objectives.
    #[arg(long)]
    pub no_reference: bool,
    #[arg(long, default_value_t = BnbLimits::default().max_nodes)]
    pub bnb_nodes: usize,
    #[arg(long, default_value_t = BnbLimits::default().max_seconds)]
    pub bnb_seconds: f64,
}

/// Writes `count` instance files plus a manifest; returns the instance paths.
pub fn cmd_gen(args: &GenArgs, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    let params = match (&args.params, args.family) {
        (Some(text), _) => serde_json::from_str::<FamilyParams>(text)
            .map_err(|e| CliError::Usage(format!("--params: {e}")))?,
        (None, Some(f)) => FamilyParams::preset(f, &args.preset).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => return Err(CliError::Usage("either --family or --params is required".into())),
    };
    mkdir(&args.out)?;
    let mut manifest = RunManifest::start(
        "gen",
        json!({ "params": params, "count": args.count, "reference": !args.no_reference }),
        seed,
    );
    let instances =
        GenSpec::generate_batch(params, seed, args.count).map_err(|e| CliError::Usage(e.to_string()))?;
    let limits = BnbLimits { max_nodes: args.bnb_nodes, max_seconds: args.bnb_seconds };
    let refs: Vec<Option<Reference>> = if args.no_reference {
        vec![None; instances.len()]
    } else {
        dhevo_core::parallel::par_map(&instances, |inst| evolution::reference_for(inst, limits).ok())
    };
    let mut paths = Vec::new();
    for (inst, r) in instances.iter().zip(refs) {
        let path = args.out.join(format!("{}.json", inst.name));
        io::save_instance(&path, inst, r)?;
        manifest.instance_hashes.push(evolution::instance_hash(inst));
        manifest.outputs.push(path.clone());
        paths.push(path);
    }
    manifest.finish(&args.out)?;
    log::info!("wrote {} instances to {}", paths.len(), args.out.display());
    Ok(paths)
}

#[derive(Debug, Clone, Args)]
pub struct DiveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// `builtin:<name>`, a path to a `.dh` program, or program text.
    #[arg(long, default_value = "builtin:fractional")]
    pub scorer: String,
    #[arg(long)]
    pub d_max: Option<usize>,
    /// Result file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiveReport {
    pub schema_version: u32,
    pub instance: String,
    pub scorer: String,
    pub d_max: usize,
    pub z_ref: Option<Reference>,
    pub gamma_p: Option<f64>,
    pub result: DiveResult,
}

/// Builtin name, program file or inline program.
pub fn load_scorer(spec: &str, seed: u64) -> Result<Scorer, CliError> {
    let path = Path::new(spec);
    if !spec.starts_with("builtin:") && !spec.contains("score:") {
        if path.exists() {
            return io::load_program(path).map(Scorer::Dsl).map_err(|e| match e {
                IoError::Program { .. } => CliError::Usage(e.to_string()),
                _ => CliError::Runtime(e.to_string()),
            });
        }
        if spec.ends_with(".dh") {
            return Err(CliError::Runtime(format!("{spec}: no such file")));
        }
    }
    Ok(report::scorer_from_spec(spec)?.with_seed(seed))
}

pub fn cmd_dive(args: &DiveArgs, seed: u64) -> Result<DiveReport, CliError> {
    let scorer = load_scorer(&args.scorer, seed)?;
    let (inst, z_ref) = io::load_instance(&args.instance)?;
    let z_ref = match z_ref {
        Some(r) => Some(r),
        None => evolution::reference_for(&inst, BnbLimits::default()).ok(),
    };
    let d_max = args.d_max.unwrap_or_else(|| dhevo_core::diving::default_d_max(&inst));
    let result = dive(&inst, &scorer, d_max);
    let report = DiveReport {
        schema_version: 1,
        instance: inst.name.clone(),
        scorer: match &scorer {
            Scorer::Dsl(p) => p.render(),
            other => other.label(),
        },
        d_max,
        gamma_p: match (result.best_objective, z_ref) {
            (Some(z), Some(r)) => Some(primal_gap(z, r.objective)),
            _ => None,
        },
        z_ref,
        result,
    };
    match &args.out {
        Some(path) => io::save_json(path, &report)?,
        None => print!("{}", io::to_json_pretty(&report)),
    }
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for archive.json, events.jsonl, portfolio.json and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Stop cleanly after this many generations, leaving a resumable archive.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Continue the partial archive in --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub archive: PathBuf,
    pub complete: bool,
    pub episodes: usize,
}

struct CliObserver {
    events: BufWriter<File>,
    archive_path: PathBuf,
    stop_after: Option<usize>,
    interrupt: Arc<AtomicBool>,
    error: Option<String>,
}

impl Observer for CliObserver {
    fn event(&mut self, event: &evolution::Event) {
        let line = serde_json::to_string(event).expect("event serializes");
        if let Err(e) = writeln!(self.events, "{line}") {
            self.error.get_or_insert(e.to_string());
        }
    }

    fn checkpoint(&mut self, archive: &Archive) {
        let _ = self.events.flush();
        if let Err(e) = evolution::save_archive(&self.archive_path, archive) {
            self.error.get_or_insert(e.to_string());
        }
    }

    fn should_stop(&self, done: usize) -> bool {
        self.interrupt.load(Ordering::SeqCst) || self.stop_after.is_some_and(|s| done >= s)
    }
}

/// Runs or resumes an evolution. `interrupt` is polled between generations.
pub fn cmd_evolve(args: &EvolveArgs, seed: Option<u64>, interrupt: Arc<AtomicBool>) -> Result<EvolveOutcome, CliError> {
    let mut cfg = EvolveConfig::load(&args.config).map_err(|e| match e {
        EvolveError::Io(io) => CliError::Usage(io.to_string()),
        other => other.into(),
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    mkdir(&args.out)?;
    let archive_path = args.out.join("archive.json");
    let previous = if args.resume {
        let a = evolution::load_archive(&archive_path)?;
        let mut expected = cfg.clone();
        expected.fitness_mode = a.mode;
        if serde_json::to_value(&a.config).ok() != serde_json::to_value(&expected).ok() {
            return Err(CliError::Usage("config differs from the archive being resumed".into()));
        }
        Some(a)
    } else {
        None
    };
    let provider = build_provider(&cfg.provider)?;
    let templates = build_templates(&cfg)?;
    let instances = prepare_instances(&cfg)?;
    let mut manifest = RunManifest::start("evolve", serde_json::to_value(&cfg).expect("config"), cfg.seed);
    manifest.instance_hashes = instances.iter().map(|t| t.hash.clone()).collect();

    let events_path = args.out.join("events.jsonl");
    let events = OpenOptions::new()
        .create(true)
        .write(true)
        .append(args.resume)
        .truncate(!args.resume)
        .open(&events_path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", events_path.display())))?;
    let mut obs = CliObserver {
        events: BufWriter::new(events),
        archive_path: archive_path.clone(),
        stop_after: args.stop_after,
        interrupt,
        error: None,
    };
    let result = match previous {
        Some(a) => evolution::resume(a, &instances, provider.as_ref(), &templates, &mut obs),
        None => evolution::run(&cfg, &instances, provider.as_ref(), &templates, &mut obs),
    };
    let _ = obs.events.flush();
    let archive = match result {
        Ok(a) => a,
        Err(EvolveError::Aborted { reason, partial }) => {
            evolution::save_archive(&archive_path, &partial)?;
            return Err(CliError::Runtime(format!("run aborted: {reason}; partial archive in {}", archive_path.display())));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = obs.error {
        return Err(CliError::Runtime(e));
    }
    evolution::save_archive(&archive_path, &archive)?;
    manifest.outputs = vec![archive_path.clone(), events_path];
    if archive.complete {
        let prefix = match archive.mode {
            evolution::FitnessMode::PerInstance => "dhevo",
            evolution::FitnessMode::Averaged => "ec",
        };
        let portfolio_path = args.out.join("portfolio.json");
        io::save_json(&portfolio_path, &PortfolioFile::from_entries(prefix, &archive.portfolio))?;
        manifest.outputs.push(portfolio_path);
    } else {
        log::warn!(
            "stopped after {} generation(s); continue with --resume",
            archive.generations.len()
        );
    }
    manifest.finish(&args.out)?;
    Ok(EvolveOutcome { archive: archive_path, complete: archive.complete, episodes: archive.episodes_used })
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// A portfolio.json or archive.json.
    #[arg(long)]
    pub portfolio: Option<PathBuf>,
    #[arg(long)]
    pub instances: PathBuf,
    /// Directory for per_instance.csv, summary.csv and report.md.
    #[arg(long)]
    pub out: PathBuf,
    /// Builtin scorers to evaluate alongside, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub baselines: Vec<String>,
    #[arg(long)]
    pub d_max: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub gap_cap: f64,
}

fn load_portfolio(path: &Path) -> Result<PortfolioFile, CliError> {
    let text = io::read_text(path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if value.get("candidates").is_some() {
        let a: Archive = io::from_versioned_str(path, &text, ARCHIVE_SCHEMA)?;
        if !a.complete {
            return Err(CliError::Usage(format!("{} is a partial archive", path.display())));
        }
        Ok(PortfolioFile::from_entries("dhevo", &a.portfolio))
    } else {
        Ok(io::from_versioned_str(path, &text, PORTFOLIO_SCHEMA)?)
    }
}

pub fn cmd_eval(args: &EvalArgs, seed: u64) -> Result<Vec<SummaryRow>, CliError> {
    let mut methods: Vec<(String, Scorer)> = Vec::new();
    if let Some(p) = &args.portfolio {
        for h in load_portfolio(p)?.heuristics {
            methods.push((h.name, load_scorer(&h.scorer, seed)?));
        }
    }
    for b in &args.baselines {
        let spec = if b.starts_with("builtin:") { b.clone() } else { format!("builtin:{b}") };
        methods.push((spec.clone(), load_scorer(&spec, seed)?));
    }
    if methods.is_empty() {
        return Err(CliError::Usage("nothing to evaluate: give --portfolio or --baselines".into()));
    }
    let instances = load_train_dir(&args.instances, None, BnbLimits::default())?;
    mkdir(&args.out)?;
    let mut manifest = RunManifest::start(
        "eval",
        json!({
            "methods": methods.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            "instances": args.instances,
            "d_max": args.d_max,
            "gap_cap": args.gap_cap,
        }),
        seed,
    );
    manifest.instance_hashes = instances.iter().map(|t| t.hash.clone()).collect();
    let rows = report::evaluate_methods(&methods, &instances, args.d_max, args.gap_cap);
    let summaries = report::summarize_rows(&rows);
    manifest.outputs = write_report(&args.out, Some(&rows), &summaries)?;
    manifest.finish(&args.out)?;
    Ok(summaries)
}

fn write_report(
    out: &Path,
    rows: Option<&[report::InstanceRow]>,
    summaries: &[SummaryRow],
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    if let Some(rows) = rows {
        let p = out.join("per_instance.csv");
        io::write_atomic(&p, report::instance_csv(rows)?.as_bytes())?;
        written.push(p);
    }
    let p = out.join("summary.csv");
    io::write_atomic(&p, report::summary_csv(summaries)?.as_bytes())?;
    written.push(p);
    let p = out.join("report.md");
    io::write_atomic(&p, report::markdown(summaries).as_bytes())?;
    written.push(p);
    Ok(written)
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Per-instance CSV files; rows are concatenated.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Recomputes summary tables from per-instance CSVs.
pub fn cmd_report(args: &ReportArgs) -> Result<Vec<SummaryRow>, CliError> {
    let mut rows = Vec::new();
    for p in &args.inputs {
        rows.extend(report::read_instance_csv(&io::read_text(p)?)?);
    }
    if rows.is_empty() {
        return Err(CliError::Runtime("no rows in the input CSVs".into()));
    }
    let summaries = report::summarize_rows(&rows);
    mkdir(&args.out)?;
    write_report(&args.out, None, &summaries)?;
    Ok(summaries)
}
