//! Co-evolution of diving heuristics with their training instances, the
//! averaged-fitness baseline, and final portfolio selection.
//!
//! Every candidate is evaluated on every training instance, so a run keeps a
//! full fitness table. In per-instance mode each instance is paired with the
//! best candidate seen for it so far; a temperature-controlled draw keeps `k`
//! of those pairs, and only the retained pairs spawn offspring. In averaged
//! mode candidates are ranked by mean fitness and the best `m` survive.

use crate::agents::{
    run_episode, AgentError, EpisodeLimits, HttpConfig, HttpProvider, MockFault, MockProvider, Op,
    Origin, Parent, Provider, ProviderError, Templates, Transcript,
};
use crate::diving::{default_d_max, dive, Scorer};
use crate::dsl::{random_program, Program};
use crate::gen::{Family, FamilyParams, GenSpec};
use crate::io::{self, IoError, Reference};
use crate::metrics::{primal_gap, summarize};
use crate::milp::{solve_bnb, BnbLimits, Instance, MipStatus};
use crate::parallel::par_map;
use crate::rng::{derive_seed, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const ARCHIVE_SCHEMA: u32 = 1;

// Stream ids below the run seed.
const TAG_EPISODE: u64 = 1;
const TAG_FALLBACK: u64 = 2;
const TAG_PARENT: u64 = 3;
const TAG_SELECT: u64 = 4;
const TAG_ANCHOR: u64 = 5;

/// Keeps fitness-proportional weights positive at the penalty floor.
const WEIGHT_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("need at least {needed} pairs, got {available}")]
    TooFew { needed: usize, available: usize },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("instance {id}: {msg}")]
    Instance { id: String, msg: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("run aborted: {reason}")]
    Aborted { reason: String, partial: Box<Archive> },
    #[error("cannot resume: {0}")]
    Resume(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    #[default]
    PerInstance,
    Averaged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Mock {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        fault: MockFault,
    },
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InstanceSource {
    Generate { family: Family, preset: String, seed: u64 },
    Dir { path: PathBuf },
}

fn default_temperature() -> f64 {
    1.0
}
fn default_gap_cap() -> f64 {
    10.0
}
fn default_offspring() -> usize {
    4
}
fn default_p_crossover() -> f64 {
    0.5
}
fn default_provider() -> ProviderConfig {
    ProviderConfig::Mock { seed: 0, fault: MockFault::None }
}
fn default_bnb_nodes() -> usize {
    BnbLimits::default().max_nodes
}
fn default_bnb_seconds() -> f64 {
    BnbLimits::default().max_seconds
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    /// Population size.
    pub m: usize,
    /// Training instances.
    pub n: usize,
    /// Retained pairs per generation, and portfolio size.
    pub k: usize,
    /// Generations, the initial one included.
    pub t_iters: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_gap_cap")]
    pub gap_cap: f64,
    #[serde(default)]
    pub seed: u64,
    /// Dive depth; `None` uses the per-instance default.
    #[serde(default)]
    pub d_max: Option<usize>,
    #[serde(default)]
    pub fitness_mode: FitnessMode,
    /// Offspring episodes per retained pair and generation.
    #[serde(default = "default_offspring")]
    pub offspring_per_pair: usize,
    #[serde(default = "default_p_crossover")]
    pub p_crossover: f64,
    #[serde(default = "default_provider")]
    pub provider: ProviderConfig,
    pub instances: InstanceSource,
    #[serde(default)]
    pub episode: EpisodeLimits,
    #[serde(default = "default_bnb_nodes")]
    pub bnb_max_nodes: usize,
    #[serde(default = "default_bnb_seconds")]
    pub bnb_max_seconds: f64,
    #[serde(default)]
    pub background: Option<String>,
    #[serde(default)]
    pub prompts_dir: Option<PathBuf>,
}

impl EvolveConfig {
    /// A mock-provider config over generated tiny instances.
    pub fn mock(family: Family, m: usize, n: usize, k: usize, t_iters: usize, seed: u64) -> Self {
        EvolveConfig {
            m,
            n,
            k,
            t_iters,
            temperature: default_temperature(),
            gap_cap: default_gap_cap(),
            seed,
            d_max: None,
            fitness_mode: FitnessMode::PerInstance,
            offspring_per_pair: default_offspring(),
            p_crossover: default_p_crossover(),
            provider: ProviderConfig::Mock { seed, fault: MockFault::None },
            instances: InstanceSource::Generate { family, preset: "tiny".into(), seed },
            episode: EpisodeLimits::default(),
            bnb_max_nodes: default_bnb_nodes(),
            bnb_max_seconds: default_bnb_seconds(),
            background: None,
            prompts_dir: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, EvolveError> {
        let cfg: EvolveConfig = toml::from_str(text).map_err(|e| EvolveError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EvolveError> {
        Self::from_toml_str(&io::read_text(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |msg: &str| Err(EvolveError::Config(msg.to_string()));
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if self.k == 0 || self.k > self.n {
            return bad("k must satisfy 1 <= k <= n");
        }
        if self.t_iters == 0 {
            return bad("t_iters must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.gap_cap > 0.0 && self.gap_cap.is_finite()) {
            return bad("gap_cap must be positive");
        }
        if self.offspring_per_pair == 0 {
            return bad("offspring_per_pair must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.p_crossover) {
            return bad("p_crossover must lie in [0, 1]");
        }
        if self.episode.budget == 0 || self.episode.max_rounds == 0 || self.episode.max_retries == 0 {
            return bad("episode limits must be positive");
        }
        Ok(())
    }

    pub fn bnb_limits(&self) -> BnbLimits {
        BnbLimits { max_nodes: self.bnb_max_nodes, max_seconds: self.bnb_max_seconds }
    }

    /// Episodes a complete run performs.
    pub fn episode_budget(&self) -> usize {
        self.m + (self.t_iters - 1) * self.k * self.offspring_per_pair
    }
}

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn Provider>, EvolveError> {
    match cfg {
        ProviderConfig::Mock { seed, fault } => Ok(Box::new(MockProvider::with_fault(*seed, *fault))),
        ProviderConfig::Http(h) => Ok(Box::new(HttpProvider::new(h.clone().with_env())?)),
    }
}

pub fn build_templates(cfg: &EvolveConfig) -> Result<Templates, EvolveError> {
    match &cfg.prompts_dir {
        Some(dir) => Templates::load_dir(dir).map_err(|e| EvolveError::Config(e.to_string())),
        None => Ok(Templates::builtin()),
    }
}

/// A training instance with its reference objective.
#[derive(Debug, Clone)]
pub struct TrainInstance {
    pub id: String,
    pub instance: Instance,
    pub reference: Reference,
    pub hash: String,
}

pub fn instance_hash(inst: &Instance) -> String {
    io::content_hash(io::instance_to_json(inst, None).as_bytes())
}

/// Best objective branch-and-bound finds within `limits`.
pub fn reference_for(inst: &Instance, limits: BnbLimits) -> Result<Reference, EvolveError> {
    let sol = solve_bnb(inst, limits)
        .map_err(|e| EvolveError::Instance { id: inst.name.clone(), msg: e.to_string() })?;
    match sol.objective {
        Some(objective) => Ok(Reference { objective, proven: sol.status == MipStatus::Optimal }),
        None => Err(EvolveError::Instance {
            id: inst.name.clone(),
            msg: format!("no feasible solution for a reference ({:?})", sol.status),
        }),
    }
}

fn train_set(named: Vec<(String, Instance, Option<Reference>)>, limits: BnbLimits) -> Result<Vec<TrainInstance>, EvolveError> {
    par_map(&named, |(id, inst, r)| {
        let reference = match r {
            Some(r) => *r,
            None => reference_for(inst, limits)?,
        };
        Ok(TrainInstance { id: id.clone(), instance: inst.clone(), reference, hash: instance_hash(inst) })
    })
    .into_iter()
    .collect()
}

/// Loads or generates the first `n` training instances and their references.
pub fn prepare_instances(cfg: &EvolveConfig) -> Result<Vec<TrainInstance>, EvolveError> {
    let named = match &cfg.instances {
        InstanceSource::Generate { family, preset, seed } => {
            let params = FamilyParams::preset(*family, preset).map_err(|e| EvolveError::Config(e.to_string()))?;
            GenSpec::generate_batch(params, *seed, cfg.n)
                .map_err(|e| EvolveError::Config(e.to_string()))?
                .into_iter()
                .map(|inst| (inst.name.clone(), inst, None))
                .collect::<Vec<_>>()
        }
        InstanceSource::Dir { path } => {
            let set = load_train_dir(path, Some(cfg.n), cfg.bnb_limits())?;
            if set.len() < cfg.n {
                return Err(EvolveError::Config(format!(
                    "{} holds {} instances, n = {}",
                    path.display(),
                    set.len(),
                    cfg.n
                )));
            }
            return Ok(set);
        }
    };
    train_set(named, cfg.bnb_limits())
}

/// Instances of a directory in file-name order, at most `limit` of them.
/// Stored references are used; missing ones are computed.
pub fn load_train_dir(dir: &Path, limit: Option<usize>, bnb: BnbLimits) -> Result<Vec<TrainInstance>, EvolveError> {
    let named = io::load_instance_dir(dir)?
        .into_iter()
        .take(limit.unwrap_or(usize::MAX))
        .map(|l| {
            let id = l.path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            (id, l.instance, l.z_ref)
        })
        .collect();
    train_set(named, bnb)
}

/// Outcome of one dive used for fitness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub gamma_p: Option<f64>,
    pub objective: Option<f64>,
    pub lp_resolves: usize,
}

pub fn fitness_from_objective(objective: Option<f64>, z_ref: f64, gap_cap: f64) -> f64 {
    match objective {
        Some(z) => 0.0 - primal_gap(z, z_ref).min(gap_cap),
        None => -gap_cap,
    }
}

pub fn evaluate_on(program: &Program, inst: &Instance, z_ref: f64, d_max: Option<usize>, gap_cap: f64) -> Evaluation {
    let d = d_max.unwrap_or_else(|| default_d_max(inst));
    let r = dive(inst, &Scorer::Dsl(program.clone()), d);
    Evaluation {
        fitness: fitness_from_objective(r.best_objective, z_ref, gap_cap),
        gamma_p: r.best_objective.map(|z| primal_gap(z, z_ref)),
        objective: r.best_objective,
        lp_resolves: r.lp_resolves,
    }
}

pub fn evaluate_fitness(program: &Program, inst: &Instance, z_ref: f64, cfg: &EvolveConfig) -> f64 {
    evaluate_on(program, inst, z_ref, cfg.d_max, cfg.gap_cap).fitness
}

/// An instance paired with the candidate that does best on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataCodePair {
    pub instance: usize,
    pub candidate: usize,
    pub fitness: f64,
}

/// Deterministic top-`k` by fitness; ties go to the lower instance index.
pub fn topk_strict(pairs: &[DataCodePair], k: usize) -> Result<Vec<DataCodePair>, EvolveError> {
    if pairs.len() < k {
        return Err(EvolveError::TooFew { needed: k, available: pairs.len() });
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| {
        b.fitness.total_cmp(&a.fitness).then(a.instance.cmp(&b.instance)).then(a.candidate.cmp(&b.candidate))
    });
    sorted.truncate(k);
    Ok(sorted)
}

/// Draws `k` distinct pairs, each step picking among the remaining ones with
/// probability proportional to `exp(fitness / temperature)`.
pub fn select_topk_pairs<R: Rng + ?Sized>(
    pairs: &[DataCodePair],
    k: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<DataCodePair>, EvolveError> {
    if pairs.len() < k {
        return Err(EvolveError::TooFew { needed: k, available: pairs.len() });
    }
    let mut remaining: Vec<usize> = (0..pairs.len()).collect();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let top = remaining.iter().map(|&i| pairs[i].fitness).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|&i| ((pairs[i].fitness - top) / temperature).exp()).collect();
        let pick = proportional(&weights, rng);
        out.push(pairs[remaining.remove(pick)]);
    }
    Ok(out)
}

fn proportional<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub hash: String,
    pub z_ref: f64,
    pub proven: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: usize,
    pub generation: usize,
    pub origin: Origin,
    pub parents: Vec<usize>,
    /// Instance of the retained pair that spawned this candidate.
    pub anchor: Option<usize>,
    pub description: String,
    pub program: String,
    pub transcript: Option<Transcript>,
    /// Why the episode failed, for substituted random programs.
    pub fallback: Option<String>,
    /// Fitness on every training instance, in instance order.
    pub fitness: Vec<f64>,
}

impl CandidateRecord {
    pub fn mean_fitness(&self) -> f64 {
        self.fitness.iter().sum::<f64>() / self.fitness.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub candidate: usize,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub index: usize,
    pub new_candidates: Vec<usize>,
    /// Best pair per instance. Empty in averaged mode.
    pub pairs: Vec<DataCodePair>,
    /// Retained instances, ascending. Empty in averaged mode.
    pub selected: Vec<usize>,
    /// Parents for the next generation with the fitness they were ranked by.
    pub population: Vec<Scored>,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioEntry {
    pub candidate: usize,
    pub generation: usize,
    /// Program text, usable wherever a scorer spec is accepted.
    pub scorer: String,
    pub description: String,
    pub f_avg: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Archive {
    pub schema_version: u32,
    pub complete: bool,
    pub mode: FitnessMode,
    pub config: EvolveConfig,
    pub provider: String,
    pub instances: Vec<InstanceRecord>,
    pub candidates: Vec<CandidateRecord>,
    pub generations: Vec<GenerationRecord>,
    pub portfolio: Vec<PortfolioEntry>,
    pub episodes_used: usize,
}

impl Archive {
    pub fn to_json(&self) -> String {
        io::to_json_pretty(self)
    }
}

pub fn save_archive(path: &Path, archive: &Archive) -> Result<(), IoError> {
    io::save_json(path, archive)
}

pub fn load_archive(path: &Path) -> Result<Archive, IoError> {
    io::load_versioned(path, ARCHIVE_SCHEMA)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Episode {
        generation: usize,
        candidate: usize,
        op: Op,
        origin: Origin,
        calls: usize,
        fallback: Option<String>,
    },
    Evaluation {
        generation: usize,
        candidate: usize,
        instance: usize,
        #[serde(flatten)]
        result: Evaluation,
    },
    Generation {
        generation: usize,
        best_fitness: f64,
        selected: Vec<usize>,
    },
}

/// Hooks into a running evolution.
pub trait Observer {
    fn event(&mut self, _event: &Event) {}
    /// Called with the partial archive after every generation.
    fn checkpoint(&mut self, _archive: &Archive) {}
    fn should_stop(&self, _generations_done: usize) -> bool {
        false
    }
}

pub struct Silent;
impl Observer for Silent {}

struct Job {
    op: Op,
    parents: Vec<usize>,
    anchor: Option<usize>,
}

struct Engine<'a> {
    cfg: &'a EvolveConfig,
    instances: &'a [TrainInstance],
    provider: &'a dyn Provider,
    templates: &'a Templates,
    programs: Vec<Program>,
    archive: Archive,
}

enum Produced {
    Ok { program: Program, description: String, origin: Origin, transcript: Option<Transcript>, fallback: Option<String> },
    Fatal(String),
}

impl<'a> Engine<'a> {
    fn background(&self) -> &str {
        self.cfg.background.as_deref().unwrap_or("")
    }

    fn produce(&self, generation: usize, slot: usize, job: &Job) -> Produced {
        let parents: Vec<Parent> = job
            .parents
            .iter()
            .map(|&c| Parent {
                program: self.programs[c].clone(),
                description: self.archive.candidates[c].description.clone(),
            })
            .collect();
        let seed = derive_seed(self.cfg.seed, &[TAG_EPISODE, generation as u64, slot as u64]);
        let result =
            run_episode(job.op, &parents, self.provider, self.templates, self.cfg.episode, self.background(), seed);
        let (reason, transcript) = match result {
            Ok(c) => {
                return Produced::Ok {
                    program: c.program,
                    description: c.description,
                    origin: c.origin,
                    transcript: Some(c.transcript),
                    fallback: None,
                }
            }
            Err(AgentError::Provider(e)) if e.is_fatal() => return Produced::Fatal(e.to_string()),
            Err(e @ (AgentError::MissingTemplate(_) | AgentError::MissingPlaceholder(_))) => {
                return Produced::Fatal(e.to_string())
            }
            Err(AgentError::EpisodeFailed { reason, transcript }) => (reason, Some(*transcript)),
            Err(e) => (e.to_string(), None),
        };
        let mut rng = stream(self.cfg.seed, &[TAG_FALLBACK, generation as u64, slot as u64]);
        Produced::Ok {
            program: random_program(&mut rng, 4),
            description: "Random rule substituted after a failed episode.".into(),
            origin: Origin::Random,
            transcript,
            fallback: Some(reason),
        }
    }

    fn abort(&self, reason: String) -> EvolveError {
        let mut partial = self.archive.clone();
        partial.complete = false;
        EvolveError::Aborted { reason, partial: Box::new(partial) }
    }

    /// Runs the episodes of one generation and evaluates the new candidates.
    fn spawn(&mut self, generation: usize, jobs: Vec<Job>, obs: &mut dyn Observer) -> Result<Vec<usize>, EvolveError> {
        let indexed: Vec<(usize, &Job)> = jobs.iter().enumerate().collect();
        let produced = par_map(&indexed, |(slot, job)| self.produce(generation, *slot, job));
        if let Some(reason) = produced.iter().find_map(|p| match p {
            Produced::Fatal(r) => Some(r.clone()),
            Produced::Ok { .. } => None,
        }) {
            return Err(self.abort(reason));
        }
        let first = self.archive.candidates.len();
        let mut new_programs = Vec::with_capacity(jobs.len());
        for (job, p) in jobs.iter().zip(produced) {
            let Produced::Ok { program, description, origin, transcript, fallback } = p else { unreachable!() };
            let id = self.archive.candidates.len();
            if let Some(reason) = &fallback {
                log::warn!("generation {generation}: episode for candidate {id} failed ({reason}); using a random rule");
            }
            obs.event(&Event::Episode {
                generation,
                candidate: id,
                op: job.op,
                origin: origin.clone(),
                calls: transcript.as_ref().map_or(0, |t| t.calls),
                fallback: fallback.clone(),
            });
            self.archive.candidates.push(CandidateRecord {
                id,
                generation,
                origin,
                parents: job.parents.clone(),
                anchor: job.anchor,
                description,
                program: program.render(),
                transcript,
                fallback,
                fitness: Vec::new(),
            });
            new_programs.push(program);
        }
        self.programs.extend(new_programs);
        self.archive.episodes_used += jobs.len();

        let ids: Vec<usize> = (first..self.archive.candidates.len()).collect();
        let work: Vec<(usize, usize)> =
            ids.iter().flat_map(|&c| (0..self.instances.len()).map(move |i| (c, i))).collect();
        let evals = par_map(&work, |&(c, i)| {
            let t = &self.instances[i];
            evaluate_on(&self.programs[c], &t.instance, t.reference.objective, self.cfg.d_max, self.cfg.gap_cap)
        });
        for (&(c, i), e) in work.iter().zip(evals) {
            obs.event(&Event::Evaluation { generation, candidate: c, instance: i, result: e });
            self.archive.candidates[c].fitness.push(e.fitness);
        }
        Ok(ids)
    }

    fn best_pairs(&self) -> Vec<DataCodePair> {
        (0..self.instances.len())
            .map(|i| {
                let mut best = DataCodePair { instance: i, candidate: 0, fitness: f64::NEG_INFINITY };
                for c in &self.archive.candidates {
                    if c.fitness[i] > best.fitness {
                        best = DataCodePair { instance: i, candidate: c.id, fitness: c.fitness[i] };
                    }
                }
                best
            })
            .collect()
    }

    fn top_by_mean(&self, m: usize) -> Vec<Scored> {
        let mut all: Vec<Scored> =
            self.archive.candidates.iter().map(|c| Scored { candidate: c.id, fitness: c.mean_fitness() }).collect();
        all.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.candidate.cmp(&b.candidate)));
        all.truncate(m);
        all
    }

    fn offspring_jobs(&self, generation: usize, anchors: &[(usize, Option<usize>)], pool: &[Scored]) -> Vec<Job> {
        let b = self.cfg.offspring_per_pair;
        let mut jobs = Vec::with_capacity(anchors.len() * b);
        for (p, &(anchor, anchor_instance)) in anchors.iter().enumerate() {
            let others: Vec<&Scored> = pool.iter().filter(|s| s.candidate != anchor).collect();
            for child in 0..b {
                let mut rng = stream(self.cfg.seed, &[TAG_PARENT, generation as u64, p as u64, child as u64]);
                let cross = rng.random::<f64>() < self.cfg.p_crossover;
                let job = if cross && !others.is_empty() {
                    let w: Vec<f64> = others.iter().map(|s| s.fitness + self.cfg.gap_cap + WEIGHT_EPS).collect();
                    let second = others[proportional(&w, &mut rng)].candidate;
                    Job { op: Op::Crossover, parents: vec![anchor, second], anchor: anchor_instance }
                } else {
                    Job { op: Op::Mutation, parents: vec![anchor], anchor: anchor_instance }
                };
                jobs.push(job);
            }
        }
        jobs
    }

    fn generation(&mut self, g: usize, obs: &mut dyn Observer) -> Result<(), EvolveError> {
        let mode = self.archive.mode;
        let jobs = if g == 1 {
            (0..self.cfg.m).map(|_| Job { op: Op::Init, parents: Vec::new(), anchor: None }).collect()
        } else {
            let prev = self.archive.generations.last().expect("previous generation");
            match mode {
                FitnessMode::PerInstance => {
                    let anchors: Vec<(usize, Option<usize>)> = prev
                        .selected
                        .iter()
                        .zip(&prev.population)
                        .map(|(&i, s)| (s.candidate, Some(i)))
                        .collect();
                    self.offspring_jobs(g, &anchors, &prev.population)
                }
                FitnessMode::Averaged => {
                    let pool = prev.population.clone();
                    let anchors: Vec<(usize, Option<usize>)> = (0..self.cfg.k)
                        .map(|p| {
                            let mut rng = stream(self.cfg.seed, &[TAG_ANCHOR, g as u64, p as u64]);
                            let w: Vec<f64> =
                                pool.iter().map(|s| s.fitness + self.cfg.gap_cap + WEIGHT_EPS).collect();
                            (pool[proportional(&w, &mut rng)].candidate, None)
                        })
                        .collect();
                    self.offspring_jobs(g, &anchors, &pool)
                }
            }
        };
        let new_candidates = self.spawn(g, jobs, obs)?;
        let record = match mode {
            FitnessMode::PerInstance => {
                let pairs = self.best_pairs();
                let mut chosen = if g == 1 {
                    topk_strict(&pairs, self.cfg.k)?
                } else {
                    let mut rng = stream(self.cfg.seed, &[TAG_SELECT, g as u64]);
                    select_topk_pairs(&pairs, self.cfg.k, self.cfg.temperature, &mut rng)?
                };
                chosen.sort_by_key(|p| p.instance);
                let best_fitness = pairs.iter().map(|p| p.fitness).fold(f64::NEG_INFINITY, f64::max);
                GenerationRecord {
                    index: g,
                    new_candidates,
                    selected: chosen.iter().map(|p| p.instance).collect(),
                    population: chosen.iter().map(|p| Scored { candidate: p.candidate, fitness: p.fitness }).collect(),
                    pairs,
                    best_fitness,
                }
            }
            FitnessMode::Averaged => {
                let population = self.top_by_mean(self.cfg.m);
                GenerationRecord {
                    index: g,
                    new_candidates,
                    pairs: Vec::new(),
                    selected: Vec::new(),
                    best_fitness: population[0].fitness,
                    population,
                }
            }
        };
        obs.event(&Event::Generation {
            generation: g,
            best_fitness: record.best_fitness,
            selected: record.selected.clone(),
        });
        self.archive.generations.push(record);
        Ok(())
    }

    fn run(mut self, obs: &mut dyn Observer) -> Result<Archive, EvolveError> {
        let start = self.archive.generations.len() + 1;
        for g in start..=self.cfg.t_iters {
            self.generation(g, obs)?;
            if g < self.cfg.t_iters {
                obs.checkpoint(&self.archive);
                if obs.should_stop(g) {
                    log::info!("stopping after generation {g}");
                    return Ok(self.archive);
                }
            }
        }
        self.archive.portfolio = final_select(&self.archive, self.cfg.k);
        self.archive.complete = true;
        Ok(self.archive)
    }
}

fn instance_records(instances: &[TrainInstance]) -> Vec<InstanceRecord> {
    instances
        .iter()
        .map(|t| InstanceRecord {
            id: t.id.clone(),
            hash: t.hash.clone(),
            z_ref: t.reference.objective,
            proven: t.reference.proven,
        })
        .collect()
}

fn start(
    cfg: &EvolveConfig,
    mode: FitnessMode,
    instances: &[TrainInstance],
    provider: &dyn Provider,
    templates: &Templates,
    obs: &mut dyn Observer,
) -> Result<Archive, EvolveError> {
    let mut cfg = cfg.clone();
    cfg.fitness_mode = mode;
    cfg.validate()?;
    if instances.len() != cfg.n {
        return Err(EvolveError::Config(format!("expected {} instances, got {}", cfg.n, instances.len())));
    }
    let archive = Archive {
        schema_version: ARCHIVE_SCHEMA,
        complete: false,
        mode,
        config: cfg.clone(),
        provider: provider.describe(),
        instances: instance_records(instances),
        candidates: Vec::new(),
        generations: Vec::new(),
        portfolio: Vec::new(),
        episodes_used: 0,
    };
    let engine = Engine { cfg: &cfg, instances, provider, templates, programs: Vec::new(), archive };
    engine.run(obs)
}

/// The co-evolution loop with per-instance fitness and pair selection.
pub fn run_dhevo(
    cfg: &EvolveConfig,
    instances: &[TrainInstance],
    provider: &dyn Provider,
    templates: &Templates,
    obs: &mut dyn Observer,
) -> Result<Archive, EvolveError> {
    start(cfg, FitnessMode::PerInstance, instances, provider, templates, obs)
}

/// Classic evolution: mean fitness over all instances, no instance selection,
/// same operators and episode budget.
pub fn run_baseline_ec(
    cfg: &EvolveConfig,
    instances: &[TrainInstance],
    provider: &dyn Provider,
    templates: &Templates,
    obs: &mut dyn Observer,
) -> Result<Archive, EvolveError> {
    start(cfg, FitnessMode::Averaged, instances, provider, templates, obs)
}

/// Dispatches on `cfg.fitness_mode`.
pub fn run(
    cfg: &EvolveConfig,
    instances: &[TrainInstance],
    provider: &dyn Provider,
    templates: &Templates,
    obs: &mut dyn Observer,
) -> Result<Archive, EvolveError> {
    start(cfg, cfg.fitness_mode, instances, provider, templates, obs)
}

/// Continues a partial archive. The result is identical to an uninterrupted
/// run with the same inputs.
pub fn resume(
    archive: Archive,
    instances: &[TrainInstance],
    provider: &dyn Provider,
    templates: &Templates,
    obs: &mut dyn Observer,
) -> Result<Archive, EvolveError> {
    if archive.complete {
        return Ok(archive);
    }
    if archive.instances != instance_records(instances) {
        return Err(EvolveError::Resume("training instances differ from the archive".into()));
    }
    let cfg = archive.config.clone();
    let programs = archive
        .candidates
        .iter()
        .map(|c| Program::parse(&c.program).map_err(|e| EvolveError::Resume(format!("candidate {}: {e}", c.id))))
        .collect::<Result<Vec<_>, _>>()?;
    if archive.candidates.iter().any(|c| c.fitness.len() != instances.len()) {
        return Err(EvolveError::Resume("incomplete fitness table".into()));
    }
    let engine = Engine { cfg: &cfg, instances, provider, templates, programs, archive };
    engine.run(obs)
}

/// Ranks candidates by mean fitness over the instances retained in the last
/// generation (all instances in averaged mode) and returns the best `k`.
/// Duplicate programs keep their earliest copy. Ties go to the earlier
/// generation, then the lower id. `variance` is taken over all instances.
pub fn final_select(archive: &Archive, k: usize) -> Vec<PortfolioEntry> {
    let Some(last) = archive.generations.last() else { return Vec::new() };
    let retained: Vec<usize> = match archive.mode {
        FitnessMode::PerInstance => last.selected.clone(),
        FitnessMode::Averaged => (0..archive.instances.len()).collect(),
    };
    let mut seen = std::collections::HashSet::new();
    let mut entries: Vec<PortfolioEntry> = archive
        .candidates
        .iter()
        .filter(|c| seen.insert(c.program.clone()))
        .map(|c| PortfolioEntry {
            candidate: c.id,
            generation: c.generation,
            scorer: c.program.clone(),
            description: c.description.clone(),
            f_avg: retained.iter().map(|&i| c.fitness[i]).sum::<f64>() / retained.len().max(1) as f64,
            variance: summarize(&c.fitness).variance,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.f_avg.total_cmp(&a.f_avg).then(a.generation.cmp(&b.generation)).then(a.candidate.cmp(&b.candidate))
    });
    entries.truncate(k);
    entries
}

fn diff_values(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for key in keys {
                let p = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
                match (x.get(key), y.get(key)) {
                    (Some(u), Some(v)) => diff_values(&p, u, v, out),
                    _ => out.push(p),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path}.len"));
            }
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                diff_values(&format!("{path}[{i}]"), u, v, out);
            }
        }
        _ if a != b => out.push(path.to_string()),
        _ => {}
    }
}

/// JSON paths at which two archives differ.
pub fn archive_diff(a: &Archive, b: &Archive) -> Vec<String> {
    let (x, y) = (serde_json::to_value(a).expect("archive"), serde_json::to_value(b).expect("archive"));
    let mut out = Vec::new();
    diff_values("", &x, &y, &mut out);
    out
}

/// Paths in `diff` outside the selection and fitness pathways: anything but
/// the mode, per-generation ranking fields, candidates bred after the first
/// generation, and the portfolio.
pub fn non_pathway_differences(archive: &Archive, diff: &[String]) -> Vec<String> {
    let first_gen: Vec<usize> = archive.candidates.iter().filter(|c| c.generation == 1).map(|c| c.id).collect();
    diff.iter()
        .filter(|p| {
            let allowed = *p == "mode"
                || *p == "config.fitness_mode"
                || p.starts_with("portfolio")
                || ["pairs", "selected", "population", "best_fitness"]
                    .iter()
                    .any(|f| p.starts_with("generations[") && p.contains(&format!("].{f}")))
                || p.strip_prefix("candidates[")
                    .and_then(|r| r.split(']').next())
                    .and_then(|i| i.parse::<usize>().ok())
                    .is_some_and(|i| !first_gen.contains(&i));
            !allowed
        })
        .cloned()
        .collect()
}
