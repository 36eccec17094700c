//! Random generation and the genetic operators. Nodes are addressed by paths
//! of child indices; the first index selects the score tree (0) or the
//! roundup tree (1).

use super::{
    BinOp, BoolExpr, BoolFeature, CmpOp, Expr, Kind, NumExpr, NumFeature, Program, MAX_DEPTH,
    MAX_NODES, VALUE_CLAMP,
};
use rand::seq::IndexedRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) enum NodeRef<'a> {
    Num(&'a NumExpr),
    Bool(&'a BoolExpr),
}

enum NodeMut<'a> {
    Num(&'a mut NumExpr),
    Bool(&'a mut BoolExpr),
}

impl<'a> NodeRef<'a> {
    fn kind(self) -> Kind {
        match self {
            NodeRef::Num(_) => Kind::Num,
            NodeRef::Bool(_) => Kind::Bool,
        }
    }

    fn to_owned(self) -> Expr {
        match self {
            NodeRef::Num(e) => Expr::Num(e.clone()),
            NodeRef::Bool(e) => Expr::Bool(e.clone()),
        }
    }

    fn children(self) -> Vec<NodeRef<'a>> {
        match self {
            NodeRef::Num(e) => match e {
                NumExpr::Const(_) | NumExpr::Feature(_) => vec![],
                NumExpr::Neg(a) | NumExpr::Abs(a) => vec![NodeRef::Num(a)],
                NumExpr::Bin(_, a, b) | NumExpr::Min(a, b) | NumExpr::Max(a, b) => {
                    vec![NodeRef::Num(a), NodeRef::Num(b)]
                }
                NumExpr::If(c, a, b) => vec![NodeRef::Bool(c), NodeRef::Num(a), NodeRef::Num(b)],
            },
            NodeRef::Bool(e) => match e {
                BoolExpr::Const(_) | BoolExpr::Feature(_) => vec![],
                BoolExpr::Not(a) => vec![NodeRef::Bool(a)],
                BoolExpr::And(a, b) | BoolExpr::Or(a, b) => vec![NodeRef::Bool(a), NodeRef::Bool(b)],
                BoolExpr::Cmp(_, a, b) => vec![NodeRef::Num(a), NodeRef::Num(b)],
            },
        }
    }
}

fn child_mut(n: NodeMut<'_>, i: usize) -> NodeMut<'_> {
    match n {
        NodeMut::Num(e) => match e {
            NumExpr::Neg(a) | NumExpr::Abs(a) => NodeMut::Num(a),
            NumExpr::Bin(_, a, b) | NumExpr::Min(a, b) | NumExpr::Max(a, b) => {
                NodeMut::Num(if i == 0 { a } else { b })
            }
            NumExpr::If(c, a, b) => match i {
                0 => NodeMut::Bool(c),
                1 => NodeMut::Num(a),
                _ => NodeMut::Num(b),
            },
            NumExpr::Const(_) | NumExpr::Feature(_) => unreachable!("leaf has no children"),
        },
        NodeMut::Bool(e) => match e {
            BoolExpr::Not(a) => NodeMut::Bool(a),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => NodeMut::Bool(if i == 0 { a } else { b }),
            BoolExpr::Cmp(_, a, b) => NodeMut::Num(if i == 0 { a } else { b }),
            BoolExpr::Const(_) | BoolExpr::Feature(_) => unreachable!("leaf has no children"),
        },
    }
}

fn root(p: &Program, i: usize) -> NodeRef<'_> {
    if i == 0 {
        NodeRef::Num(&p.score)
    } else {
        NodeRef::Bool(&p.roundup)
    }
}

/// Preorder traversal of both trees, score first.
pub(crate) fn visit_program(p: &Program, f: &mut impl FnMut(NodeRef<'_>)) {
    fn go<'a>(n: NodeRef<'a>, f: &mut impl FnMut(NodeRef<'a>)) {
        f(n);
        for c in n.children() {
            go(c, f);
        }
    }
    go(root(p, 0), f);
    go(root(p, 1), f);
}

fn paths(p: &Program) -> Vec<(Vec<usize>, NodeRef<'_>)> {
    fn go<'a>(n: NodeRef<'a>, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, NodeRef<'a>)>) {
        out.push((path.clone(), n));
        for (i, c) in n.children().into_iter().enumerate() {
            path.push(i);
            go(c, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    for r in 0..2 {
        go(root(p, r), &mut vec![r], &mut out);
    }
    out
}

fn get<'a>(p: &'a Program, path: &[usize]) -> Option<NodeRef<'a>> {
    let mut n = root(p, path[0]);
    for &i in &path[1..] {
        n = *n.children().get(i)?;
    }
    Some(n)
}

fn replace(p: &mut Program, path: &[usize], new: Expr) {
    let mut n = if path[0] == 0 { NodeMut::Num(&mut p.score) } else { NodeMut::Bool(&mut p.roundup) };
    for &i in &path[1..] {
        n = child_mut(n, i);
    }
    match (n, new) {
        (NodeMut::Num(slot), Expr::Num(e)) => *slot = e,
        (NodeMut::Bool(slot), Expr::Bool(e)) => *slot = e,
        _ => unreachable!("replacement kind mismatch"),
    }
}

struct Gen<'r, R: Rng + ?Sized> {
    rng: &'r mut R,
    budget: usize,
}

impl<R: Rng + ?Sized> Gen<'_, R> {
    fn constant(&mut self) -> f64 {
        (self.rng.random_range(-10.0..=10.0f64) * 100.0).round() / 100.0
    }

    fn num_leaf(&mut self) -> NumExpr {
        if self.rng.random_bool(0.6) {
            NumExpr::Feature(*NumFeature::ALL.choose(self.rng).expect("nonempty"))
        } else {
            NumExpr::Const(self.constant())
        }
    }

    fn bool_leaf(&mut self) -> BoolExpr {
        if self.rng.random_bool(0.8) {
            BoolExpr::Feature(*BoolFeature::ALL.choose(self.rng).expect("nonempty"))
        } else {
            BoolExpr::Const(self.rng.random_bool(0.5))
        }
    }

    fn num(&mut self, depth: usize, top: bool) -> NumExpr {
        self.budget = self.budget.saturating_sub(1);
        if depth <= 1 || self.budget < 8 || (!top && self.rng.random_bool(0.3)) {
            return self.num_leaf();
        }
        let d = depth - 1;
        let b = |g: &mut Self| Box::new(g.num(d, false));
        match self.rng.random_range(0..10) {
            0..=4 => {
                let op = *BinOp::ALL.choose(self.rng).expect("nonempty");
                NumExpr::Bin(op, b(self), b(self))
            }
            5 => NumExpr::Neg(b(self)),
            6 => NumExpr::Min(b(self), b(self)),
            7 => NumExpr::Max(b(self), b(self)),
            8 => NumExpr::Abs(b(self)),
            _ => {
                let c = Box::new(self.boolean(d, false));
                NumExpr::If(c, b(self), b(self))
            }
        }
    }

    fn boolean(&mut self, depth: usize, top: bool) -> BoolExpr {
        self.budget = self.budget.saturating_sub(1);
        if depth <= 1 || self.budget < 8 || (!top && self.rng.random_bool(0.3)) {
            return self.bool_leaf();
        }
        let d = depth - 1;
        match self.rng.random_range(0..10) {
            0..=5 => {
                let op = *CmpOp::ALL.choose(self.rng).expect("nonempty");
                BoolExpr::Cmp(op, Box::new(self.num(d, false)), Box::new(self.num(d, false)))
            }
            6 | 7 => {
                let (a, b) = (Box::new(self.boolean(d, false)), Box::new(self.boolean(d, false)));
                if self.rng.random_bool(0.5) {
                    BoolExpr::And(a, b)
                } else {
                    BoolExpr::Or(a, b)
                }
            }
            8 => BoolExpr::Not(Box::new(self.boolean(d, false))),
            _ => self.bool_leaf(),
        }
    }

    fn expr(&mut self, kind: Kind, depth: usize) -> Expr {
        match kind {
            Kind::Num => Expr::Num(self.num(depth, false)),
            Kind::Bool => Expr::Bool(self.boolean(depth, false)),
        }
    }
}

/// A random well-typed program whose trees are at most `max_depth` deep.
pub fn random_program<R: Rng + ?Sized>(rng: &mut R, max_depth: usize) -> Program {
    let depth = max_depth.clamp(1, MAX_DEPTH);
    // Siblings still pending when the budget runs out each add one leaf.
    let budget = MAX_NODES / 2 - 3 * MAX_DEPTH;
    let mut g = Gen { rng, budget };
    let score = g.num(depth, true);
    g.budget = budget;
    let roundup = g.boolean(depth, true);
    Program::new(score, roundup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    PerturbConst,
    SwapOperator,
    SwapFeature,
    Wrap,
    Graft,
}

impl EditKind {
    pub const ALL: [EditKind; 5] = [
        EditKind::PerturbConst,
        EditKind::SwapOperator,
        EditKind::SwapFeature,
        EditKind::Wrap,
        EditKind::Graft,
    ];

    fn applies(self, n: NodeRef<'_>) -> bool {
        match self {
            EditKind::PerturbConst => matches!(n, NodeRef::Num(NumExpr::Const(_))),
            EditKind::SwapOperator => matches!(
                n,
                NodeRef::Num(NumExpr::Bin(..) | NumExpr::Min(..) | NumExpr::Max(..))
                    | NodeRef::Bool(BoolExpr::And(..) | BoolExpr::Or(..) | BoolExpr::Cmp(..))
            ),
            EditKind::SwapFeature => {
                matches!(n, NodeRef::Num(NumExpr::Feature(_)) | NodeRef::Bool(BoolExpr::Feature(_)))
            }
            EditKind::Wrap => matches!(n, NodeRef::Num(_)),
            EditKind::Graft => true,
        }
    }
}

fn other<T: Copy + PartialEq, R: Rng + ?Sized>(all: &[T], current: T, rng: &mut R) -> T {
    let rest: Vec<T> = all.iter().copied().filter(|x| *x != current).collect();
    *rest.choose(rng).expect("at least two choices")
}

fn edited<R: Rng + ?Sized>(kind: EditKind, n: NodeRef<'_>, rng: &mut R) -> Expr {
    let mut g = Gen { rng, budget: MAX_NODES };
    match (kind, n) {
        (EditKind::PerturbConst, NodeRef::Num(NumExpr::Const(v))) => {
            let v = if g.rng.random_bool(0.5) {
                v * g.rng.random_range(0.5..=2.0)
            } else {
                v + g.rng.random_range(-10.0..=10.0)
            };
            let v = if v.abs() < 1e8 { (v * 1e4).round() / 1e4 } else { v };
            Expr::Num(NumExpr::Const(v.clamp(-VALUE_CLAMP, VALUE_CLAMP)))
        }
        (EditKind::SwapOperator, NodeRef::Num(e)) => Expr::Num(match e.clone() {
            NumExpr::Bin(op, a, b) => NumExpr::Bin(other(&BinOp::ALL, op, g.rng), a, b),
            NumExpr::Min(a, b) => NumExpr::Max(a, b),
            NumExpr::Max(a, b) => NumExpr::Min(a, b),
            e => e,
        }),
        (EditKind::SwapOperator, NodeRef::Bool(e)) => Expr::Bool(match e.clone() {
            BoolExpr::And(a, b) => BoolExpr::Or(a, b),
            BoolExpr::Or(a, b) => BoolExpr::And(a, b),
            BoolExpr::Cmp(op, a, b) => BoolExpr::Cmp(other(&CmpOp::ALL, op, g.rng), a, b),
            e => e,
        }),
        (EditKind::SwapFeature, NodeRef::Num(NumExpr::Feature(f))) => {
            Expr::Num(NumExpr::Feature(other(&NumFeature::ALL, *f, g.rng)))
        }
        (EditKind::SwapFeature, NodeRef::Bool(BoolExpr::Feature(f))) => {
            Expr::Bool(BoolExpr::Feature(other(&BoolFeature::ALL, *f, g.rng)))
        }
        (EditKind::Wrap, NodeRef::Num(e)) => {
            let inner = Box::new(e.clone());
            Expr::Num(match g.rng.random_range(0..3) {
                0 => NumExpr::Min(inner, Box::new(g.num_leaf())),
                1 => NumExpr::Max(inner, Box::new(g.num_leaf())),
                _ => NumExpr::Abs(inner),
            })
        }
        (_, n) => {
            let depth = g.rng.random_range(1..=3);
            g.expr(n.kind(), depth)
        }
    }
}

/// Applies one random edit and reports which kind it was. The result differs
/// from `p` whenever any edit can change it within the size limits.
pub fn mutate_traced<R: Rng + ?Sized>(p: &Program, rng: &mut R) -> (Program, EditKind) {
    let sites = paths(p);
    let mut last = None;
    for _ in 0..64 {
        let kinds: Vec<EditKind> = EditKind::ALL
            .iter()
            .copied()
            .filter(|k| sites.iter().any(|(_, n)| k.applies(*n)))
            .collect();
        let kind = *kinds.choose(rng).expect("graft always applies");
        let candidates: Vec<&(Vec<usize>, NodeRef<'_>)> =
            sites.iter().filter(|(_, n)| kind.applies(*n)).collect();
        let (path, node) = candidates.choose(rng).expect("kind has a site");
        let mut child = Program::new(p.score.clone(), p.roundup.clone());
        replace(&mut child, path, edited(kind, *node, rng));
        if child.check_limits().is_err() {
            continue;
        }
        if child != *p {
            return (child, kind);
        }
        last = Some((child, kind));
    }
    last.unwrap_or_else(|| (Program::new(p.score.clone(), p.roundup.clone()), EditKind::Graft))
}

pub fn mutate<R: Rng + ?Sized>(p: &Program, rng: &mut R) -> Program {
    mutate_traced(p, rng).0
}

/// Subtree crossover. Each tree of `a` is, with probability 1/2, given one
/// subtree from `b` of the same kind: the node at the same position when
/// there is one, otherwise a random one.
pub fn crossover<R: Rng + ?Sized>(a: &Program, b: &Program, rng: &mut R) -> Program {
    let mut child = Program::new(a.score.clone(), a.roundup.clone());
    let donors = paths(b);
    for tree in 0..2 {
        if !rng.random_bool(0.5) {
            continue;
        }
        let sites: Vec<(Vec<usize>, Kind)> = paths(&child)
            .into_iter()
            .filter(|(p, _)| p[0] == tree)
            .map(|(p, n)| (p, n.kind()))
            .collect();
        let (path, kind) = sites.choose(rng).expect("tree has a root").clone();
        let donor = match get(b, &path) {
            Some(n) if n.kind() == kind => n.to_owned(),
            _ => {
                let same: Vec<NodeRef<'_>> =
                    donors.iter().map(|(_, n)| *n).filter(|n| n.kind() == kind).collect();
                (*same.choose(rng).expect("both kinds present at the roots")).to_owned()
            }
        };
        replace(&mut child, &path, donor);
    }
    trim(&mut child);
    child
}

/// Cuts subtrees below the depth limit, tightening it until the node limit
/// also holds.
pub fn trim(p: &mut Program) {
    fn cut_num(e: &mut NumExpr, room: usize) {
        if room <= 1 {
            if !matches!(e, NumExpr::Const(_) | NumExpr::Feature(_)) {
                *e = NumExpr::Const(0.0);
            }
            return;
        }
        match e {
            NumExpr::Const(_) | NumExpr::Feature(_) => {}
            NumExpr::Neg(a) | NumExpr::Abs(a) => cut_num(a, room - 1),
            NumExpr::Bin(_, a, b) | NumExpr::Min(a, b) | NumExpr::Max(a, b) => {
                cut_num(a, room - 1);
                cut_num(b, room - 1);
            }
            NumExpr::If(c, a, b) => {
                cut_bool(c, room - 1);
                cut_num(a, room - 1);
                cut_num(b, room - 1);
            }
        }
    }
    fn cut_bool(e: &mut BoolExpr, room: usize) {
        if room <= 1 {
            if !matches!(e, BoolExpr::Const(_) | BoolExpr::Feature(_)) {
                *e = BoolExpr::Const(false);
            }
            return;
        }
        match e {
            BoolExpr::Const(_) | BoolExpr::Feature(_) => {}
            BoolExpr::Not(a) => cut_bool(a, room - 1),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) => {
                cut_bool(a, room - 1);
                cut_bool(b, room - 1);
            }
            BoolExpr::Cmp(_, a, b) => {
                cut_num(a, room - 1);
                cut_num(b, room - 1);
            }
        }
    }
    let mut room = MAX_DEPTH;
    loop {
        cut_num(&mut p.score, room);
        cut_bool(&mut p.roundup, room);
        if p.node_count() <= MAX_NODES || room == 1 {
            break;
        }
        room -= 1;
    }
    p.spans.clear();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::testing::feature_vector;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn depth_one_programs_are_leaves() {
        let mut rng = stream(1, &[]);
        for _ in 0..50 {
            let p = random_program(&mut rng, 1);
            assert_eq!(p.node_count(), 2);
        }
    }

    #[test]
    fn random_programs_are_valid_and_reproducible() {
        let mut rng = stream(2, &[]);
        for _ in 0..1000 {
            let p = random_program(&mut rng, MAX_DEPTH);
            assert!(p.check_limits().is_ok());
            assert_eq!(Program::parse(&p.render()).unwrap(), p);
        }
        let a = random_program(&mut stream(3, &[]), 6);
        let b = random_program(&mut stream(3, &[]), 6);
        assert_eq!(a, b);
    }

    #[test]
    fn every_edit_kind_occurs() {
        let mut rng = stream(4, &[]);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..500 {
            let p = random_program(&mut rng, 5);
            let (q, kind) = mutate_traced(&p, &mut rng);
            assert!(q.check_limits().is_ok());
            assert_ne!(q, p);
            seen.insert(format!("{kind:?}"));
        }
        assert_eq!(seen.len(), 5);
    }

    #[test]
    fn crossover_respects_limits() {
        let mut rng = stream(5, &[]);
        for _ in 0..300 {
            let a = random_program(&mut rng, MAX_DEPTH);
            let b = random_program(&mut rng, MAX_DEPTH);
            let c = crossover(&a, &b, &mut rng);
            assert!(c.check_limits().is_ok());
        }
    }

    #[test]
    fn trim_enforces_limits() {
        let mut e = NumExpr::Feature(NumFeature::Obj);
        for _ in 0..40 {
            e = NumExpr::Bin(BinOp::Add, Box::new(e.clone()), Box::new(e.clone()));
            if matches!(e, NumExpr::Bin(..)) && super::super::expr_nodes(&Expr::Num(e.clone())) > 4000 {
                break;
            }
        }
        let mut p = Program::new(e, BoolExpr::Const(true));
        trim(&mut p);
        assert!(p.check_limits().is_ok());
    }

    proptest! {
        #[test]
        fn self_crossover_is_identity(seed in any::<u64>(), fv in feature_vector()) {
            let mut rng = stream(seed, &[]);
            let p = random_program(&mut rng, 8);
            let c = crossover(&p, &p, &mut rng);
            prop_assert_eq!(c.eval(&fv), p.eval(&fv));
        }

        #[test]
        fn mutants_evaluate_totally(seed in any::<u64>(), fv in feature_vector()) {
            let mut rng = stream(seed, &[1]);
            let p = mutate(&random_program(&mut rng, 10), &mut rng);
            let out = p.eval(&fv);
            prop_assert!(out.score.is_finite());
        }
    }
}
