use super::{ChatRequest, Op, Provider, ProviderError, Role};
use crate::dsl::{crossover, mutate, random_program, Program};
use crate::rng::stream;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

/// Injected misbehavior for exercising failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFault {
    #[default]
    None,
    /// Every coder and judge answer lacks markers.
    Garbage,
    /// The first coder answer of each episode lacks markers.
    FirstCoderGarbage,
    /// The first coder answer of each episode does not typecheck.
    FirstCoderInvalid,
}

/// Deterministic stand-in for a language model. Answers depend only on the
/// provider seed, the episode seed and the position of the call.
#[derive(Debug, Clone)]
pub struct MockProvider {
    pub seed: u64,
    pub fault: MockFault,
}

const PLANS: &[&str] = &[
    "prefer variables whose LP value is already close to an integer and round toward it",
    "prefer variables with few locks so that the fixing rarely blocks rows",
    "weigh the objective coefficient against the fractional part",
    "favor variables whose pseudocosts predict a small objective increase",
    "favor variables that moved little from their root LP value",
    "favor variables that appear in many rows, rounding in the direction without locks",
];

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider { seed, fault: MockFault::None }
    }

    pub fn with_fault(seed: u64, fault: MockFault) -> Self {
        MockProvider { seed, fault }
    }

    fn program(&self, req: &ChatRequest<'_>) -> Program {
        let mut rng = stream(self.seed, &[req.hints.episode_seed, req.hints.call_index as u64]);
        let parents = &req.hints.parents;
        match (req.op, parents.as_slice()) {
            (Op::Mutation, [p, ..]) => mutate(p, &mut rng),
            (Op::Crossover, [a, b, ..]) => {
                let c = crossover(a, b, &mut rng);
                if c == *a || c == *b {
                    mutate(&c, &mut rng)
                } else {
                    c
                }
            }
            _ => random_program(&mut rng, 4),
        }
    }
}

fn describe_program(p: &Program, op: Op) -> String {
    let features = p.features();
    let uses = if features.is_empty() {
        "constants only".to_string()
    } else {
        features.join(", ")
    };
    let how = match op {
        Op::Init => "New rule",
        Op::Mutation => "Edited copy of the parent rule",
        Op::Crossover => "Blend of the two parent rules",
    };
    format!("{how}; the score uses {uses}.")
}

fn wrap(description: &str, code: &str) -> String {
    format!("<start_des>{description}</end_des>\n<start_code>\n{code}\n</end_code>\n")
}

impl Provider for MockProvider {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, ProviderError> {
        let first_coder = req.hints.call_index == 1;
        Ok(match req.role {
            Role::Designer => {
                let mut rng = stream(self.seed, &[req.hints.episode_seed, 0]);
                let i = (0..PLANS.len()).collect::<Vec<_>>();
                let id = *i.choose(&mut rng).expect("nonempty");
                format!("Plan P{id}: {}.", PLANS[id])
            }
            Role::Coder => match self.fault {
                MockFault::Garbage => "I could not come up with anything.".to_string(),
                MockFault::FirstCoderGarbage if first_coder => "Here is my idea, in prose.".to_string(),
                MockFault::FirstCoderInvalid if first_coder => {
                    wrap("Uses the binary flag as a score.", "score: isBinary roundup: true")
                }
                _ => {
                    let p = self.program(req);
                    wrap(&describe_program(&p, req.op), &p.render())
                }
            },
            Role::Reviewer => match (req.hints.validation_passed, &req.hints.diagnostics) {
                (Some(true), _) => "VERDICT: ACCEPT".to_string(),
                (_, Some(d)) => format!("VERDICT: REVISE\n{d}"),
                _ => "VERDICT: REVISE".to_string(),
            },
            Role::Judge => match (self.fault, req.hints.valid_codes.last()) {
                (MockFault::Garbage, _) | (_, None) => "No decision.".to_string(),
                (_, Some(code)) => wrap("Selected the last version that passed validation.", code),
            },
        })
    }

    fn describe(&self) -> String {
        format!("mock(seed={})", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{run_episode, AgentError, EpisodeLimits, Op, Parent, Templates, Verdict};
    use super::*;

    fn run(p: &MockProvider, op: Op, parents: &[Parent], seed: u64) -> Result<super::super::Candidate, AgentError> {
        run_episode(op, parents, p, &Templates::builtin(), EpisodeLimits::default(), "", seed)
    }

    #[test]
    fn init_episode_is_valid_and_reproducible() {
        let p = MockProvider::new(9);
        let a = run(&p, Op::Init, &[], 1).unwrap();
        let b = run(&p, Op::Init, &[], 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.transcript.verdict, Verdict::Accepted);
        assert_eq!(a.transcript.calls, 3);
        assert!(!a.description.is_empty());
        let c = run(&p, Op::Init, &[], 2).unwrap();
        assert_ne!(a.program, c.program);
        let roles: Vec<_> = a.transcript.turns.iter().map(|t| t.role).collect();
        assert_eq!(roles, vec![Role::Designer, Role::Coder, Role::Reviewer]);
    }

    #[test]
    fn operators_use_parents() {
        let p = MockProvider::new(3);
        let pa = Parent { program: Program::parse("score: obj roundup: true").unwrap(), description: "a".into() };
        let pb = Parent {
            program: Program::parse("score: nNonz - candsfrac roundup: isBinary").unwrap(),
            description: "b".into(),
        };
        for seed in 0..20 {
            let m = run(&p, Op::Mutation, std::slice::from_ref(&pa), seed).unwrap();
            assert_ne!(m.program, pa.program);
            let c = run(&p, Op::Crossover, &[pa.clone(), pb.clone()], seed).unwrap();
            assert!(c.program.check_limits().is_ok());
        }
        assert!(matches!(
            run(&p, Op::Crossover, std::slice::from_ref(&pa), 0),
            Err(AgentError::Arity { expected: 2, found: 1, .. })
        ));
    }

    #[test]
    fn retry_after_invalid_code() {
        let p = MockProvider::with_fault(1, MockFault::FirstCoderInvalid);
        let c = run(&p, Op::Init, &[], 5).unwrap();
        assert_eq!(c.transcript.verdict, Verdict::Revised);
        let second_coder = &c.transcript.turns[3];
        assert_eq!(second_coder.role, Role::Coder);
        assert!(second_coder.prompt.contains("type error"), "{}", second_coder.prompt);

        let p = MockProvider::with_fault(1, MockFault::FirstCoderGarbage);
        let c = run(&p, Op::Init, &[], 5).unwrap();
        assert!(c.transcript.turns[2].prompt.contains("markers"));
    }

    #[test]
    fn garbage_fails_after_retries() {
        let p = MockProvider::with_fault(1, MockFault::Garbage);
        match run(&p, Op::Init, &[], 5) {
            Err(AgentError::EpisodeFailed { transcript, .. }) => {
                assert_eq!(transcript.verdict, Verdict::Discarded);
                let coder_calls = transcript.turns.iter().filter(|t| t.role == Role::Coder).count();
                assert_eq!(coder_calls, EpisodeLimits::default().max_retries);
                assert!(transcript.calls <= EpisodeLimits::default().budget);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn budget_is_respected() {
        let p = MockProvider::with_fault(1, MockFault::Garbage);
        let limits = EpisodeLimits { max_rounds: 10, max_retries: 10, budget: 4 };
        let r = run_episode(Op::Init, &[], &p, &Templates::builtin(), limits, "", 0);
        match r {
            Err(AgentError::EpisodeFailed { transcript, .. }) => assert_eq!(transcript.calls, 4),
            other => panic!("{other:?}"),
        }
    }
}
