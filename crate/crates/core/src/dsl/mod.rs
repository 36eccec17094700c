//! A small, total expression language for diving scorers.
//!
//! ```text
//! heuristic := "score:" expr "roundup:" bexpr
//! ```
//!
//! `expr` is numeric: `+ - * /`, unary `-`, parentheses, `min(a, b)`,
//! `max(a, b)`, `abs(a)`, `if(bexpr, a, b)`, literals and the ten numeric
//! features. `bexpr` is boolean: `and`, `or`, `not`, comparisons
//! (`< <= > >= ==`) between numeric expressions, `true`, `false` and the three
//! boolean features. `#` starts a comment that runs to the end of the line.
//!
//! Evaluation never fails: division by a near-zero denominator yields 0, NaN
//! becomes 0 and every intermediate value is clamped to `[-1e12, 1e12]`.

mod ops;
mod parse;
mod render;

pub use ops::{crossover, mutate, mutate_traced, random_program, trim, EditKind};
pub use parse::parse;

use crate::diving::FeatureVector;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const MAX_DEPTH: usize = 24;
pub const MAX_NODES: usize = 512;
/// Bound applied to every intermediate numeric value.
pub const VALUE_CLAMP: f64 = 1e12;
/// Denominators smaller than this in magnitude divide to zero.
pub const DIV_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("unknown identifier '{name}' at {line}:{col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("type error at {line}:{col}: {msg}")]
    Type { line: usize, col: usize, msg: String },
    #[error("limit exceeded: {0}")]
    LimitExceeded(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NumFeature {
    Candsfrac,
    Candsol,
    Nlocksdown,
    Nlocksup,
    Obj,
    Objnorm,
    Pscostdown,
    Pscostup,
    Rootsolval,
    NNonz,
}

impl NumFeature {
    pub const ALL: [NumFeature; 10] = [
        NumFeature::Candsfrac,
        NumFeature::Candsol,
        NumFeature::Nlocksdown,
        NumFeature::Nlocksup,
        NumFeature::Obj,
        NumFeature::Objnorm,
        NumFeature::Pscostdown,
        NumFeature::Pscostup,
        NumFeature::Rootsolval,
        NumFeature::NNonz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NumFeature::Candsfrac => "candsfrac",
            NumFeature::Candsol => "candsol",
            NumFeature::Nlocksdown => "nlocksdown",
            NumFeature::Nlocksup => "nlocksup",
            NumFeature::Obj => "obj",
            NumFeature::Objnorm => "objnorm",
            NumFeature::Pscostdown => "pscostdown",
            NumFeature::Pscostup => "pscostup",
            NumFeature::Rootsolval => "rootsolval",
            NumFeature::NNonz => "nNonz",
        }
    }

    pub fn value(self, fv: &FeatureVector) -> f64 {
        match self {
            NumFeature::Candsfrac => fv.candsfrac,
            NumFeature::Candsol => fv.candsol,
            NumFeature::Nlocksdown => fv.nlocksdown as f64,
            NumFeature::Nlocksup => fv.nlocksup as f64,
            NumFeature::Obj => fv.obj,
            NumFeature::Objnorm => fv.objnorm,
            NumFeature::Pscostdown => fv.pscostdown,
            NumFeature::Pscostup => fv.pscostup,
            NumFeature::Rootsolval => fv.rootsolval,
            NumFeature::NNonz => fv.n_nonz as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoolFeature {
    Mayrounddown,
    Mayroundup,
    IsBinary,
}

impl BoolFeature {
    pub const ALL: [BoolFeature; 3] =
        [BoolFeature::Mayrounddown, BoolFeature::Mayroundup, BoolFeature::IsBinary];

    pub fn name(self) -> &'static str {
        match self {
            BoolFeature::Mayrounddown => "mayrounddown",
            BoolFeature::Mayroundup => "mayroundup",
            BoolFeature::IsBinary => "isBinary",
        }
    }

    pub fn value(self, fv: &FeatureVector) -> bool {
        match self {
            BoolFeature::Mayrounddown => fv.mayrounddown,
            BoolFeature::Mayroundup => fv.mayroundup,
            BoolFeature::IsBinary => fv.is_binary,
        }
    }
}

/// Names of all thirteen features in declaration order.
pub fn feature_names() -> Vec<&'static str> {
    let mut v = vec![BoolFeature::Mayrounddown.name(), BoolFeature::Mayroundup.name()];
    v.extend(NumFeature::ALL.iter().map(|f| f.name()));
    v.push(BoolFeature::IsBinary.name());
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NumExpr {
    Const(f64),
    Feature(NumFeature),
    Neg(Box<NumExpr>),
    Bin(BinOp, Box<NumExpr>, Box<NumExpr>),
    Min(Box<NumExpr>, Box<NumExpr>),
    Max(Box<NumExpr>, Box<NumExpr>),
    Abs(Box<NumExpr>),
    If(Box<BoolExpr>, Box<NumExpr>, Box<NumExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Const(bool),
    Feature(BoolFeature),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Cmp(CmpOp, Box<NumExpr>, Box<NumExpr>),
}

/// Either kind of expression, used where operators treat nodes uniformly.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(NumExpr),
    Bool(BoolExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Num,
    Bool,
}

impl Expr {
    pub fn kind(&self) -> Kind {
        match self {
            Expr::Num(_) => Kind::Num,
            Expr::Bool(_) => Kind::Bool,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

/// A scoring heuristic: a numeric score (higher is better) and a rounding
/// direction.
#[derive(Debug, Clone)]
pub struct Program {
    pub score: NumExpr,
    pub roundup: BoolExpr,
    /// Source positions of the nodes in preorder (score tree first), when the
    /// program came from text.
    pub spans: Vec<Span>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score && self.roundup == other.roundup
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub score: f64,
    pub roundup: bool,
}

impl Program {
    pub fn new(score: NumExpr, roundup: BoolExpr) -> Self {
        Program { score, roundup, spans: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Self, DslError> {
        parse(text)
    }

    /// Canonical text form; `parse(render(p)) == p`.
    pub fn render(&self) -> String {
        render::render_program(self)
    }

    pub fn eval(&self, fv: &FeatureVector) -> EvalOutput {
        EvalOutput { score: eval_num(&self.score, fv), roundup: eval_bool(&self.roundup, fv) }
    }

    pub fn node_count(&self) -> usize {
        num_nodes(&self.score) + bool_nodes(&self.roundup)
    }

    pub fn depth(&self) -> usize {
        num_depth(&self.score).max(bool_depth(&self.roundup))
    }

    pub fn check_limits(&self) -> Result<(), DslError> {
        let depth = self.depth();
        if depth > MAX_DEPTH {
            return Err(DslError::LimitExceeded(format!("depth {depth} > {MAX_DEPTH}")));
        }
        let nodes = self.node_count();
        if nodes > MAX_NODES {
            return Err(DslError::LimitExceeded(format!("{nodes} nodes > {MAX_NODES}")));
        }
        Ok(())
    }

    /// Distinct features referenced, in first-use order.
    pub fn features(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        ops::visit_program(self, &mut |e| {
            let name = match e {
                ops::NodeRef::Num(NumExpr::Feature(f)) => f.name(),
                ops::NodeRef::Bool(BoolExpr::Feature(f)) => f.name(),
                _ => return,
            };
            if !out.contains(&name) {
                out.push(name);
            }
        });
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

fn clamp(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-VALUE_CLAMP, VALUE_CLAMP)
    }
}

pub fn eval_num(e: &NumExpr, fv: &FeatureVector) -> f64 {
    let v = match e {
        NumExpr::Const(c) => *c,
        NumExpr::Feature(f) => f.value(fv),
        NumExpr::Neg(a) => -eval_num(a, fv),
        NumExpr::Bin(op, a, b) => {
            let (x, y) = (eval_num(a, fv), eval_num(b, fv));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => {
                    if y.abs() < DIV_EPS {
                        0.0
                    } else {
                        x / y
                    }
                }
            }
        }
        NumExpr::Min(a, b) => eval_num(a, fv).min(eval_num(b, fv)),
        NumExpr::Max(a, b) => eval_num(a, fv).max(eval_num(b, fv)),
        NumExpr::Abs(a) => eval_num(a, fv).abs(),
        NumExpr::If(c, a, b) => {
            if eval_bool(c, fv) {
                eval_num(a, fv)
            } else {
                eval_num(b, fv)
            }
        }
    };
    clamp(v)
}

pub fn eval_bool(e: &BoolExpr, fv: &FeatureVector) -> bool {
    match e {
        BoolExpr::Const(b) => *b,
        BoolExpr::Feature(f) => f.value(fv),
        BoolExpr::Not(a) => !eval_bool(a, fv),
        BoolExpr::And(a, b) => eval_bool(a, fv) && eval_bool(b, fv),
        BoolExpr::Or(a, b) => eval_bool(a, fv) || eval_bool(b, fv),
        BoolExpr::Cmp(op, a, b) => {
            let (x, y) = (eval_num(a, fv), eval_num(b, fv));
            match op {
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
                CmpOp::Eq => x == y,
            }
        }
    }
}

fn num_nodes(e: &NumExpr) -> usize {
    1 + match e {
        NumExpr::Const(_) | NumExpr::Feature(_) => 0,
        NumExpr::Neg(a) | NumExpr::Abs(a) => num_nodes(a),
        NumExpr::Bin(_, a, b) | NumExpr::Min(a, b) | NumExpr::Max(a, b) => {
            num_nodes(a) + num_nodes(b)
        }
        NumExpr::If(c, a, b) => bool_nodes(c) + num_nodes(a) + num_nodes(b),
    }
}

fn bool_nodes(e: &BoolExpr) -> usize {
    1 + match e {
        BoolExpr::Const(_) | BoolExpr::Feature(_) => 0,
        BoolExpr::Not(a) => bool_nodes(a),
        BoolExpr::And(a, b) | BoolExpr::Or(a, b) => bool_nodes(a) + bool_nodes(b),
        BoolExpr::Cmp(_, a, b) => num_nodes(a) + num_nodes(b),
    }
}

fn num_depth(e: &NumExpr) -> usize {
    1 + match e {
        NumExpr::Const(_) | NumExpr::Feature(_) => 0,
        NumExpr::Neg(a) | NumExpr::Abs(a) => num_depth(a),
        NumExpr::Bin(_, a, b) | NumExpr::Min(a, b) | NumExpr::Max(a, b) => {
            num_depth(a).max(num_depth(b))
        }
        NumExpr::If(c, a, b) => bool_depth(c).max(num_depth(a)).max(num_depth(b)),
    }
}

fn bool_depth(e: &BoolExpr) -> usize {
    1 + match e {
        BoolExpr::Const(_) | BoolExpr::Feature(_) => 0,
        BoolExpr::Not(a) => bool_depth(a),
        BoolExpr::And(a, b) | BoolExpr::Or(a, b) => bool_depth(a).max(bool_depth(b)),
        BoolExpr::Cmp(_, a, b) => num_depth(a).max(num_depth(b)),
    }
}

pub fn expr_depth(e: &Expr) -> usize {
    match e {
        Expr::Num(n) => num_depth(n),
        Expr::Bool(b) => bool_depth(b),
    }
}

pub fn expr_nodes(e: &Expr) -> usize {
    match e {
        Expr::Num(n) => num_nodes(n),
        Expr::Bool(b) => bool_nodes(b),
    }
}
