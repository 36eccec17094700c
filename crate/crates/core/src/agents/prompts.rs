use super::{AgentError, Op, Parent, Role};
use std::collections::BTreeMap;
use std::path::Path;

const BUILTIN: &[(&str, &str)] = &[
    ("system", include_str!("../../prompts/system.txt")),
    ("designer_init", include_str!("../../prompts/designer_init.txt")),
    ("designer_mutation", include_str!("../../prompts/designer_mutation.txt")),
    ("designer_crossover", include_str!("../../prompts/designer_crossover.txt")),
    ("coder_init", include_str!("../../prompts/coder_init.txt")),
    ("coder_mutation", include_str!("../../prompts/coder_mutation.txt")),
    ("coder_crossover", include_str!("../../prompts/coder_crossover.txt")),
    ("reviewer", include_str!("../../prompts/reviewer.txt")),
    ("judge", include_str!("../../prompts/judge.txt")),
];

pub const DEFAULT_BACKGROUND: &str = "\
The solver minimizes a linear objective subject to linear rows, and some
variables must take integer values. At the root node a dive repeatedly picks
one integer variable whose LP value is fractional, forces it up or down by
tightening its bound, and solves the LP again. Whenever the current LP point
can be rounded without violating any row, the rounded point is kept as a
feasible solution. A good rule reaches feasible solutions with a low
objective value.";

const FEATURES: &[(&str, &str)] = &[
    ("mayrounddown", "bool; rounding the variable down cannot violate any row"),
    ("mayroundup", "bool; rounding the variable up cannot violate any row"),
    ("candsfrac", "number in (0, 1); fractional part of the current LP value"),
    ("candsol", "number; current LP value of the variable"),
    ("nlocksdown", "count; rows that decreasing the variable could violate"),
    ("nlocksup", "count; rows that increasing the variable could violate"),
    ("obj", "number; objective coefficient of the variable"),
    ("objnorm", "number; Euclidean length of the whole objective vector"),
    ("pscostdown", "number; average LP objective increase per unit seen when this variable was forced down earlier in the dive, 0 if never"),
    ("pscostup", "number; the same for forcing the variable up"),
    ("rootsolval", "number; value of the variable in the root LP solution"),
    ("nNonz", "count; nonzero entries in the variable's column"),
    ("isBinary", "bool; the variable is restricted to 0 or 1"),
];

const CONTRACT: &str = "\
The rule is evaluated once for every integer variable with a fractional LP
value. `score` is a number: the dive picks the variable with the highest
score, the lowest index winning ties. `roundup` is a boolean: true forces the
chosen variable up to the next integer, false forces it down.";

const GRAMMAR: &str = "\
A rule is written as `score: <number expression> roundup: <boolean expression>`.
Number expressions use + - * / with the usual precedence, unary minus,
parentheses, numeric literals, min(a, b), max(a, b), abs(a),
if(<boolean>, a, b) and the numeric features. Boolean expressions use and, or,
not, comparisons < <= > >= == between numbers, true, false and the boolean
features. Division by zero yields 0. Lines starting with # are comments.
Example: score: candsfrac * 2 - nlocksup roundup: candsfrac > 0.5";

pub const MARKERS: &str = "\
Reply with a one-paragraph description between <start_des> and </end_des>,
followed by the rule itself, and nothing else, between <start_code> and
</end_code>.";

/// Values substituted into a template.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub background: String,
    pub parents: Vec<Parent>,
    pub plan: String,
    pub diagnostics: String,
    pub code: String,
    pub validation: String,
    pub history: String,
}

#[derive(Debug, Clone)]
pub struct Templates {
    map: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Templates { map: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    /// Builtin templates overridden by every `<name>.txt` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut t = Templates::builtin();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| AgentError::MissingTemplate(format!("{}: {e}", dir.display())))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "txt") {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| AgentError::MissingTemplate(format!("{}: {e}", path.display())))?;
                t.map.insert(name, text);
            }
        }
        Ok(t)
    }

    pub fn insert(&mut self, name: &str, text: &str) {
        self.map.insert(name.to_string(), text.to_string());
    }

    pub fn remove(&mut self, name: &str) {
        self.map.remove(name);
    }

    /// The `<role>_<op>` template, falling back to `<role>`.
    pub fn get(&self, role: &str, op: &str) -> Result<&str, AgentError> {
        self.map
            .get(&format!("{role}_{op}"))
            .or_else(|| self.map.get(role))
            .map(String::as_str)
            .ok_or_else(|| AgentError::MissingTemplate(format!("{role}/{op}")))
    }
}

pub fn features_text() -> String {
    FEATURES.iter().map(|(n, d)| format!("- {n}: {d}\n")).collect()
}

fn parents_text(parents: &[Parent]) -> String {
    parents
        .iter()
        .enumerate()
        .map(|(i, p)| {
            format!(
                "Rule {}\nDescription: {}\nCode: {}\n",
                (b'A' + i as u8) as char,
                p.description.trim(),
                p.program.render()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn substitute(template: &str, vars: &BTreeMap<&str, String>) -> Result<String, AgentError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| AgentError::MissingPlaceholder("unterminated {{".into()))?;
        let name = after[..end].trim();
        let value = vars.get(name).ok_or_else(|| AgentError::MissingPlaceholder(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_named(
    templates: &Templates,
    role: &str,
    op: &str,
    ctx: &PromptContext,
) -> Result<String, AgentError> {
    let template = templates.get(role, op)?;
    let background =
        if ctx.background.is_empty() { DEFAULT_BACKGROUND.to_string() } else { ctx.background.clone() };
    let diagnostics = if ctx.diagnostics.is_empty() {
        String::new()
    } else {
        format!("\nYour previous answer was rejected:\n{}\nFix these problems.\n", ctx.diagnostics.trim())
    };
    let vars: BTreeMap<&str, String> = [
        ("role", role.to_string()),
        ("background", background),
        ("features", features_text()),
        ("contract", CONTRACT.to_string()),
        ("grammar", GRAMMAR.to_string()),
        ("markers", MARKERS.to_string()),
        ("parents", parents_text(&ctx.parents)),
        ("plan", ctx.plan.clone()),
        ("diagnostics", diagnostics),
        ("code", ctx.code.clone()),
        ("validation", ctx.validation.clone()),
        ("history", ctx.history.clone()),
    ]
    .into_iter()
    .collect();
    substitute(template, &vars)
}

pub fn render_prompt(
    templates: &Templates,
    role: Role,
    op: Op,
    ctx: &PromptContext,
) -> Result<String, AgentError> {
    render_named(templates, role.key(), op.key(), ctx)
}

pub fn render_system(templates: &Templates, role: Role) -> Result<String, AgentError> {
    let template = templates.get("system", "")?;
    let vars = [("role", role.key().to_string())].into_iter().collect();
    substitute(template, &vars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{feature_names, Program};

    fn parent(code: &str, d: &str) -> Parent {
        Parent { program: Program::parse(code).unwrap(), description: d.into() }
    }

    #[test]
    fn coder_init_has_features_and_markers() {
        let t = Templates::builtin();
        let p = render_prompt(&t, Role::Coder, Op::Init, &PromptContext::default()).unwrap();
        for name in feature_names() {
            assert!(p.contains(name), "{name}");
        }
        for m in ["<start_des>", "</end_des>", "<start_code>", "</end_code>"] {
            assert!(p.contains(m));
        }
        assert!(!p.contains("{{"));
    }

    #[test]
    fn crossover_embeds_both_parents() {
        let t = Templates::builtin();
        let ctx = PromptContext {
            parents: vec![
                parent("score: obj roundup: true", "first"),
                parent("score: nNonz * 2 roundup: isBinary", "second"),
            ],
            ..Default::default()
        };
        let p = render_prompt(&t, Role::Coder, Op::Crossover, &ctx).unwrap();
        assert!(p.contains("score: obj roundup: true"));
        assert!(p.contains("score: nNonz * 2 roundup: isBinary"));
        let d = render_prompt(&t, Role::Designer, Op::Crossover, &ctx).unwrap();
        assert!(d.contains("second"));
    }

    #[test]
    fn missing_template_and_placeholder() {
        let t = Templates::builtin();
        let ctx = PromptContext::default();
        assert!(matches!(render_named(&t, "oracle", "init", &ctx), Err(AgentError::MissingTemplate(_))));
        let mut t = Templates::builtin();
        t.insert("judge", "{{history}} {{nonsense}}");
        assert_eq!(
            render_prompt(&t, Role::Judge, Op::Init, &ctx).unwrap_err(),
            AgentError::MissingPlaceholder("nonsense".into())
        );
        t.remove("judge");
        assert!(matches!(
            render_prompt(&t, Role::Judge, Op::Init, &ctx),
            Err(AgentError::MissingTemplate(_))
        ));
    }

    #[test]
    fn reviewer_and_judge_fallback_templates() {
        let t = Templates::builtin();
        let ctx = PromptContext { code: "score: 1 roundup: true".into(), ..Default::default() };
        for op in [Op::Init, Op::Mutation, Op::Crossover] {
            let r = render_prompt(&t, Role::Reviewer, op, &ctx).unwrap();
            assert!(r.contains("score: 1 roundup: true"));
        }
        assert!(render_system(&t, Role::Judge).unwrap().contains("judge"));
    }
}
