//! The generation episode. A designer proposes a plan, a coder writes a rule,
//! a reviewer checks it (backed by executable validation), and a judge
//! settles the result when the two never agree.

mod http;
mod mock;
mod prompts;

pub use http::{HttpConfig, HttpProvider};
pub use mock::{MockFault, MockProvider};
pub use prompts::{
    features_text, render_named, render_prompt, render_system, PromptContext, Templates,
    DEFAULT_BACKGROUND, MARKERS,
};

use crate::diving::FeatureVector;
use crate::dsl::Program;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Designer,
    Coder,
    Reviewer,
    Judge,
}

impl Role {
    pub fn key(self) -> &'static str {
        match self {
            Role::Designer => "designer",
            Role::Coder => "coder",
            Role::Reviewer => "reviewer",
            Role::Judge => "judge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Init,
    Mutation,
    Crossover,
}

impl Op {
    pub fn key(self) -> &'static str {
        match self {
            Op::Init => "init",
            Op::Mutation => "mutation",
            Op::Crossover => "crossover",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Op::Init => 0,
            Op::Mutation => 1,
            Op::Crossover => 2,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("HTTP error {status}: {snippet}")]
    Http { status: u16, snippet: String },
    #[error("request timed out")]
    Timeout,
    #[error("provider quota exceeded")]
    QuotaExceeded,
    #[error("API key not set (DHEVO_API_KEY)")]
    MissingKey,
    #[error("transport error: {0}")]
    Transport(String),
}

impl ProviderError {
    /// Errors after which continuing the run is pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(self, ProviderError::QuotaExceeded | ProviderError::MissingKey)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("missing prompt template {0}")]
    MissingTemplate(String),
    #[error("template placeholder '{0}' has no value")]
    MissingPlaceholder(String),
    #[error("response has no {0} markers")]
    MarkerMissing(&'static str),
    #[error("{op} takes {expected} parent(s), got {found}")]
    Arity { op: Op, expected: usize, found: usize },
    #[error("episode failed: {reason}")]
    EpisodeFailed { reason: String, transcript: Box<Transcript> },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Structured side information for a request. Real providers only read the
/// prompt text; the mock provider uses these fields to stay deterministic.
#[derive(Debug, Clone, Default)]
pub struct Hints {
    pub episode_seed: u64,
    pub call_index: usize,
    pub parents: Vec<Program>,
    pub validation_passed: Option<bool>,
    pub diagnostics: Option<String>,
    pub valid_codes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ChatRequest<'a> {
    pub role: Role,
    pub op: Op,
    pub system: &'a str,
    pub user: &'a str,
    pub hints: &'a Hints,
}

pub trait Provider: Send + Sync {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, ProviderError>;
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub prompt: String,
    pub response: String,
    /// Position of the call within the episode.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Revised,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub op: Op,
    pub turns: Vec<Turn>,
    pub verdict: Verdict,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    Init,
    Mutation,
    Crossover,
    /// Substituted after a failed episode.
    Random,
}

/// A parent as shown to the agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Parent {
    pub program: Program,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub program: Program,
    pub description: String,
    pub transcript: Transcript,
    pub origin: Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeLimits {
    pub max_rounds: usize,
    pub max_retries: usize,
    /// Provider calls allowed per episode.
    pub budget: usize,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        EpisodeLimits { max_rounds: 3, max_retries: 3, budget: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocks {
    pub description: String,
    pub code: String,
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let len = text[start..].find(close)?;
    Some(&text[start..start + len])
}

/// The first description and code blocks in a response, trimmed.
pub fn extract_blocks(response: &str) -> Result<Blocks, AgentError> {
    let code = between(response, "<start_code>", "</end_code>").ok_or(AgentError::MarkerMissing("code"))?;
    let description =
        between(response, "<start_des>", "</end_des>").ok_or(AgentError::MarkerMissing("description"))?;
    Ok(Blocks { description: description.trim().to_string(), code: code.trim().to_string() })
}

/// Fixed inputs on which every candidate is evaluated before acceptance: all
/// eight combinations of the boolean features, with fractional parts 0.01,
/// 0.5 and 0.99 and a spread of magnitudes including zeros.
pub fn probe_vectors() -> Vec<FeatureVector> {
    let fracs = [0.01, 0.5, 0.99];
    (0..8)
        .map(|i| {
            let frac = fracs[i % 3];
            let base = [0.0, 1.0, 3.0, 10.0, -2.0, 0.0, 7.0, 1.0][i];
            FeatureVector {
                mayrounddown: i & 1 != 0,
                mayroundup: i & 2 != 0,
                is_binary: i & 4 != 0,
                candsfrac: frac,
                candsol: base + frac,
                nlocksdown: i % 4,
                nlocksup: (7 - i) % 3,
                obj: [-1.0, 0.0, 2.5, -40.0, 1e3, 0.0, -0.5, 3.0][i],
                objnorm: [0.0, 1.0, 5.0, 100.0, 1e3, 0.0, 2.0, 3.0][i],
                pscostdown: [0.0, 0.5, 0.0, 4.0, 1e4, 0.0, 1.0, 0.25][i],
                pscostup: [0.0, 0.0, 1.5, 2.0, 0.0, 1e4, 0.5, 0.75][i],
                rootsolval: base + 0.5,
                n_nonz: [0, 1, 2, 5, 40, 0, 3, 8][i],
            }
        })
        .collect()
}

/// Parses the code and evaluates it on the probe vectors. Returns the
/// program and a human-readable report, or the diagnostics.
pub fn validate_code(code: &str) -> Result<(Program, String), String> {
    let program = Program::parse(code).map_err(|e| format!("parse: {e}"))?;
    let outs: Vec<_> = probe_vectors().iter().map(|fv| program.eval(fv)).collect();
    if let Some(i) = outs.iter().position(|o| !o.score.is_finite()) {
        return Err(format!("probe {i}: non-finite score"));
    }
    let scores: Vec<String> = outs.iter().map(|o| format!("{}", o.score)).collect();
    let ups = outs.iter().filter(|o| o.roundup).count();
    let mut report = format!(
        "parse: ok\nprobes: {} of {} evaluated\nscores: [{}]\nroundup true on {} probe(s)",
        outs.len(),
        outs.len(),
        scores.join(", "),
        ups
    );
    if outs.windows(2).all(|w| w[0].score == w[1].score) {
        report.push_str("\nnote: score is the same on every probe");
    }
    Ok((program, report))
}

struct Episode<'a> {
    provider: &'a dyn Provider,
    templates: &'a Templates,
    op: Op,
    limits: EpisodeLimits,
    hints: Hints,
    transcript: Transcript,
}

impl Episode<'_> {
    fn call(&mut self, role: Role, user: String) -> Result<Option<String>, AgentError> {
        if self.transcript.calls >= self.limits.budget {
            return Ok(None);
        }
        let system = render_system(self.templates, role)?;
        self.hints.call_index = self.transcript.calls;
        let req = ChatRequest { role, op: self.op, system: &system, user: &user, hints: &self.hints };
        let response = self.provider.complete(&req)?;
        self.transcript.turns.push(Turn {
            role,
            prompt: user,
            response: response.clone(),
            timestamp: self.transcript.calls as u64,
        });
        self.transcript.calls += 1;
        Ok(Some(response))
    }

    fn fail(self, reason: impl Into<String>) -> AgentError {
        let mut transcript = self.transcript;
        transcript.verdict = Verdict::Discarded;
        AgentError::EpisodeFailed { reason: reason.into(), transcript: Box::new(transcript) }
    }
}

/// Runs one generation episode. `episode_seed` only matters to
/// deterministic providers.
pub fn run_episode(
    op: Op,
    parents: &[Parent],
    provider: &dyn Provider,
    templates: &Templates,
    limits: EpisodeLimits,
    background: &str,
    episode_seed: u64,
) -> Result<Candidate, AgentError> {
    if parents.len() != op.arity() {
        return Err(AgentError::Arity { op, expected: op.arity(), found: parents.len() });
    }
    let mut ep = Episode {
        provider,
        templates,
        op,
        limits,
        hints: Hints {
            episode_seed,
            parents: parents.iter().map(|p| p.program.clone()).collect(),
            ..Hints::default()
        },
        transcript: Transcript { op, turns: Vec::new(), verdict: Verdict::Discarded, calls: 0 },
    };
    let mut ctx = PromptContext {
        background: background.to_string(),
        parents: parents.to_vec(),
        ..PromptContext::default()
    };

    let prompt = render_prompt(templates, Role::Designer, op, &ctx)?;
    let Some(plan) = ep.call(Role::Designer, prompt)? else {
        return Err(ep.fail("call budget exhausted"));
    };
    ctx.plan = plan.trim().to_string();

    let mut last_valid: Option<(Blocks, Program)> = None;
    let mut history = String::new();
    let mut invalid = 0;
    let mut accepted: Option<(usize, Blocks, Program)> = None;
    for round in 0..limits.max_rounds {
        let prompt = render_prompt(templates, Role::Coder, op, &ctx)?;
        let Some(response) = ep.call(Role::Coder, prompt)? else { break };
        history.push_str(&format!("[coder, round {}]\n{}\n\n", round + 1, response.trim()));
        let blocks = match extract_blocks(&response) {
            Ok(b) if !b.description.is_empty() => Some(b),
            Ok(_) => {
                ctx.diagnostics = "the description block is empty".to_string();
                None
            }
            Err(e) => {
                ctx.diagnostics = e.to_string();
                None
            }
        };
        let Some(blocks) = blocks else {
            invalid += 1;
            ep.hints.diagnostics = Some(ctx.diagnostics.clone());
            if invalid >= limits.max_retries {
                break;
            }
            continue;
        };
        let (passed, report) = match validate_code(&blocks.code) {
            Ok((program, report)) => {
                last_valid = Some((blocks.clone(), program));
                ep.hints.valid_codes.push(blocks.code.clone());
                (true, report)
            }
            Err(diag) => (false, format!("FAILED\n{diag}")),
        };
        ep.hints.validation_passed = Some(passed);
        ep.hints.diagnostics = if passed { None } else { Some(report.clone()) };
        ctx.code = blocks.code.clone();
        ctx.validation = report.clone();
        let prompt = render_prompt(templates, Role::Reviewer, op, &ctx)?;
        let Some(review) = ep.call(Role::Reviewer, prompt)? else { break };
        history.push_str(&format!("[reviewer, round {}]\n{}\n\n", round + 1, review.trim()));
        if passed && review.contains("VERDICT: ACCEPT") {
            let program = last_valid.as_ref().map(|(_, p)| p.clone()).expect("just validated");
            accepted = Some((round, blocks, program));
            break;
        }
        if !passed {
            invalid += 1;
        }
        ctx.diagnostics = if passed { review.trim().to_string() } else { report };
        ep.hints.diagnostics = Some(ctx.diagnostics.clone());
        if invalid >= limits.max_retries {
            break;
        }
    }

    let origin = match op {
        Op::Init => Origin::Init,
        Op::Mutation => Origin::Mutation,
        Op::Crossover => Origin::Crossover,
    };
    if let Some((round, blocks, program)) = accepted {
        ep.transcript.verdict = if round == 0 { Verdict::Accepted } else { Verdict::Revised };
        return Ok(Candidate { program, description: blocks.description, transcript: ep.transcript, origin });
    }

    let Some((fallback, fallback_program)) = last_valid else {
        return Err(ep.fail(format!("no valid rule after {invalid} invalid attempt(s)")));
    };
    ctx.history = history;
    let prompt = render_prompt(templates, Role::Judge, op, &ctx)?;
    let (blocks, program) = match ep.call(Role::Judge, prompt)? {
        Some(resp) => match extract_blocks(&resp).ok().filter(|b| !b.description.is_empty()) {
            Some(b) => match validate_code(&b.code) {
                Ok((p, _)) => (b, p),
                Err(_) => (fallback, fallback_program),
            },
            None => (fallback, fallback_program),
        },
        None => (fallback, fallback_program),
    };
    ep.transcript.verdict = Verdict::Revised;
    Ok(Candidate { program, description: blocks.description, transcript: ep.transcript, origin })
}
