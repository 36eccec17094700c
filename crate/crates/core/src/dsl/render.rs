use super::{BinOp, BoolExpr, NumExpr, Program};
use std::fmt::Write;

pub(super) fn render_program(p: &Program) -> String {
    let mut s = String::from("score: ");
    num(&p.score, 0, &mut s);
    s.push_str(" roundup: ");
    boolean(&p.roundup, 0, &mut s);
    s
}

fn num_prec(e: &NumExpr) -> u8 {
    match e {
        NumExpr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        NumExpr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        _ => 3,
    }
}

fn literal(v: f64, out: &mut String) {
    // Display is the shortest representation that round-trips.
    let _ = write!(out, "{v}");
}

pub(super) fn num(e: &NumExpr, min_prec: u8, out: &mut String) {
    let paren = num_prec(e) < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        NumExpr::Const(v) => literal(*v, out),
        NumExpr::Feature(f) => out.push_str(f.name()),
        NumExpr::Neg(a) => {
            out.push_str("-(");
            num(a, 0, out);
            out.push(')');
        }
        NumExpr::Bin(op, a, b) => {
            let p = num_prec(e);
            num(a, p, out);
            let _ = write!(out, " {} ", op.symbol());
            num(b, p + 1, out);
        }
        NumExpr::Min(a, b) | NumExpr::Max(a, b) => {
            out.push_str(if matches!(e, NumExpr::Min(..)) { "min(" } else { "max(" });
            num(a, 0, out);
            out.push_str(", ");
            num(b, 0, out);
            out.push(')');
        }
        NumExpr::Abs(a) => {
            out.push_str("abs(");
            num(a, 0, out);
            out.push(')');
        }
        NumExpr::If(c, a, b) => {
            out.push_str("if(");
            boolean(c, 0, out);
            out.push_str(", ");
            num(a, 0, out);
            out.push_str(", ");
            num(b, 0, out);
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

fn bool_prec(e: &BoolExpr) -> u8 {
    match e {
        BoolExpr::Or(..) => 1,
        BoolExpr::And(..) => 2,
        BoolExpr::Not(..) => 3,
        _ => 4,
    }
}

pub(super) fn boolean(e: &BoolExpr, min_prec: u8, out: &mut String) {
    let paren = bool_prec(e) < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        BoolExpr::Const(b) => out.push_str(if *b { "true" } else { "false" }),
        BoolExpr::Feature(f) => out.push_str(f.name()),
        BoolExpr::Not(a) => {
            out.push_str("not ");
            boolean(a, 3, out);
        }
        BoolExpr::And(a, b) => {
            boolean(a, 2, out);
            out.push_str(" and ");
            boolean(b, 3, out);
        }
        BoolExpr::Or(a, b) => {
            boolean(a, 1, out);
            out.push_str(" or ");
            boolean(b, 2, out);
        }
        BoolExpr::Cmp(op, a, b) => {
            num(a, 0, out);
            let _ = write!(out, " {} ", op.symbol());
            num(b, 0, out);
        }
    }
    if paren {
        out.push(')');
    }
}
