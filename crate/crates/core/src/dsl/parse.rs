use super::{
    BinOp, BoolExpr, BoolFeature, CmpOp, DslError, NumExpr, NumFeature, Program, Span,
};

/// Recursion guard for the parser itself, well above the AST depth limit so
/// that deep input is reported as a limit violation rather than a crash.
const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Span,
}

fn lex(text: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Span { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| DslError::Parse {
                line,
                col,
                msg: format!("malformed number '{s}'"),
            })?;
            if !v.is_finite() {
                return Err(DslError::Parse { line, col, msg: format!("number '{s}' out of range") });
            }
            col += i - start;
            out.push(Token { tok: Tok::Num(v), pos });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let sym = match two.as_str() {
            "<=" => Some("<="),
            ">=" => Some(">="),
            "==" => Some("=="),
            _ => None,
        };
        let sym = match sym {
            Some(s) => s,
            None => match c {
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '/' => "/",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                ':' => ":",
                '<' => "<",
                '>' => ">",
                _ => {
                    return Err(DslError::Parse {
                        line,
                        col,
                        msg: format!("unexpected character '{c}'"),
                    })
                }
            },
        };
        i += sym.len();
        col += sym.len();
        out.push(Token { tok: Tok::Sym(sym), pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Span { line, col } });
    Ok(out)
}

/// Untyped parse tree; kinds are resolved afterwards.
#[derive(Debug)]
enum Raw {
    Num(f64),
    Bool(bool),
    Ident(String),
    Neg(Box<Node>),
    Not(Box<Node>),
    Bin(&'static str, Box<Node>, Box<Node>),
    Call(String, Vec<Node>),
}

#[derive(Debug)]
struct Node {
    raw: Raw,
    pos: Span,
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    nesting: usize,
}

fn err_at(pos: Span, msg: impl Into<String>) -> DslError {
    DslError::Parse { line: pos.line, col: pos.col, msg: msg.into() }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Sym(s) => format!("'{s}'"),
        Tok::Eof => "end of input".to_string(),
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == w)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), DslError> {
        if self.is_sym(s) {
            self.next();
            Ok(())
        } else {
            let t = self.peek();
            Err(err_at(t.pos, format!("expected '{s}', found {}", describe(&t.tok))))
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), DslError> {
        if self.is_word(w) {
            self.next();
            Ok(())
        } else {
            let t = self.peek();
            Err(err_at(t.pos, format!("expected '{w}', found {}", describe(&t.tok))))
        }
    }

    fn enter(&mut self) -> Result<(), DslError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(DslError::LimitExceeded(format!("nesting deeper than {MAX_NESTING}")));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Node, DslError> {
        self.enter()?;
        let r = self.or_expr();
        self.nesting -= 1;
        r
    }

    fn or_expr(&mut self) -> Result<Node, DslError> {
        let mut lhs = self.and_expr()?;
        while self.is_word("or") {
            let pos = self.next().pos;
            let rhs = self.and_expr()?;
            lhs = Node { raw: Raw::Bin("or", Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Node, DslError> {
        let mut lhs = self.not_expr()?;
        while self.is_word("and") {
            let pos = self.next().pos;
            let rhs = self.not_expr()?;
            lhs = Node { raw: Raw::Bin("and", Box::new(lhs), Box::new(rhs)), pos };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Node, DslError> {
        if self.is_word("not") {
            let pos = self.next().pos;
            self.enter()?;
            let inner = self.not_expr();
            self.nesting -= 1;
            return Ok(Node { raw: Raw::Not(Box::new(inner?)), pos });
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Node, DslError> {
        let lhs = self.add_expr()?;
        for op in ["<=", ">=", "==", "<", ">"] {
            if self.is_sym(op) {
                let pos = self.next().pos;
                let rhs = self.add_expr()?;
                return Ok(Node { raw: Raw::Bin(op, Box::new(lhs), Box::new(rhs)), pos });
            }
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Node, DslError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = if self.is_sym("+") {
                "+"
            } else if self.is_sym("-") {
                "-"
            } else {
                return Ok(lhs);
            };
            let pos = self.next().pos;
            let rhs = self.mul_expr()?;
            lhs = Node { raw: Raw::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn mul_expr(&mut self) -> Result<Node, DslError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                "*"
            } else if self.is_sym("/") {
                "/"
            } else {
                return Ok(lhs);
            };
            let pos = self.next().pos;
            let rhs = self.unary()?;
            lhs = Node { raw: Raw::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn unary(&mut self) -> Result<Node, DslError> {
        if self.is_sym("-") {
            let pos = self.next().pos;
            // A minus directly before a literal is part of the literal.
            if let Tok::Num(v) = self.peek().tok {
                self.next();
                return Ok(Node { raw: Raw::Num(-v), pos });
            }
            self.enter()?;
            let inner = self.unary();
            self.nesting -= 1;
            return Ok(Node { raw: Raw::Neg(Box::new(inner?)), pos });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node, DslError> {
        let t = self.next();
        let pos = t.pos;
        match t.tok {
            Tok::Num(v) => Ok(Node { raw: Raw::Num(v), pos }),
            Tok::Sym("(") => {
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => Ok(Node { raw: Raw::Bool(true), pos }),
                "false" => Ok(Node { raw: Raw::Bool(false), pos }),
                "and" | "or" | "not" | "score" | "roundup" => {
                    Err(err_at(pos, format!("unexpected keyword '{name}'")))
                }
                _ if self.is_sym("(") => {
                    self.next();
                    let mut args = Vec::new();
                    if !self.is_sym(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.is_sym(",") {
                                self.next();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect_sym(")")?;
                    Ok(Node { raw: Raw::Call(name, args), pos })
                }
                _ => Ok(Node { raw: Raw::Ident(name), pos }),
            },
            other => Err(err_at(pos, format!("unexpected {}", describe(&other)))),
        }
    }
}

fn type_err(pos: Span, msg: impl Into<String>) -> DslError {
    DslError::Type { line: pos.line, col: pos.col, msg: msg.into() }
}

fn unknown(name: &str, pos: Span) -> DslError {
    DslError::UnknownIdentifier { name: name.to_string(), line: pos.line, col: pos.col }
}

fn is_bool_node(n: &Node) -> bool {
    match &n.raw {
        Raw::Bool(_) | Raw::Not(_) => true,
        Raw::Bin(op, _, _) => matches!(*op, "and" | "or" | "<" | "<=" | ">" | ">=" | "=="),
        Raw::Ident(name) => BoolFeature::ALL.iter().any(|f| f.name() == name),
        _ => false,
    }
}

struct Typer {
    spans: Vec<Span>,
}

impl Typer {
    fn num(&mut self, n: Node) -> Result<NumExpr, DslError> {
        self.spans.push(n.pos);
        let pos = n.pos;
        Ok(match n.raw {
            Raw::Num(v) => NumExpr::Const(v),
            Raw::Ident(name) => match NumFeature::ALL.iter().find(|f| f.name() == name) {
                Some(f) => NumExpr::Feature(*f),
                None if BoolFeature::ALL.iter().any(|f| f.name() == name) => {
                    return Err(type_err(pos, format!("'{name}' is boolean, expected a number")))
                }
                None => return Err(unknown(&name, pos)),
            },
            Raw::Neg(a) => NumExpr::Neg(Box::new(self.num(*a)?)),
            Raw::Bin(op, a, b) => {
                let op = match op {
                    "+" => BinOp::Add,
                    "-" => BinOp::Sub,
                    "*" => BinOp::Mul,
                    "/" => BinOp::Div,
                    _ => return Err(type_err(pos, format!("'{op}' yields a boolean, expected a number"))),
                };
                NumExpr::Bin(op, Box::new(self.num(*a)?), Box::new(self.num(*b)?))
            }
            Raw::Call(name, args) => self.call(name, args, pos)?,
            Raw::Bool(_) | Raw::Not(_) => {
                return Err(type_err(pos, "boolean expression where a number is expected"))
            }
        })
    }

    fn call(&mut self, name: String, args: Vec<Node>, pos: Span) -> Result<NumExpr, DslError> {
        let arity = match name.as_str() {
            "min" | "max" => 2,
            "abs" => 1,
            "if" => 3,
            _ => return Err(unknown(&name, pos)),
        };
        if args.len() != arity {
            return Err(type_err(
                pos,
                format!("'{name}' takes {arity} argument(s), found {}", args.len()),
            ));
        }
        let mut it = args.into_iter();
        let mut arg = || it.next().expect("arity checked");
        Ok(match name.as_str() {
            "min" => NumExpr::Min(Box::new(self.num(arg())?), Box::new(self.num(arg())?)),
            "max" => NumExpr::Max(Box::new(self.num(arg())?), Box::new(self.num(arg())?)),
            "abs" => NumExpr::Abs(Box::new(self.num(arg())?)),
            _ => {
                let c = self.boolean(arg())?;
                let a = self.num(arg())?;
                let b = self.num(arg())?;
                NumExpr::If(Box::new(c), Box::new(a), Box::new(b))
            }
        })
    }

    fn boolean(&mut self, n: Node) -> Result<BoolExpr, DslError> {
        self.spans.push(n.pos);
        let pos = n.pos;
        Ok(match n.raw {
            Raw::Bool(b) => BoolExpr::Const(b),
            Raw::Ident(name) => match BoolFeature::ALL.iter().find(|f| f.name() == name) {
                Some(f) => BoolExpr::Feature(*f),
                None if NumFeature::ALL.iter().any(|f| f.name() == name) => {
                    return Err(type_err(pos, format!("'{name}' is numeric, expected a boolean")))
                }
                None => return Err(unknown(&name, pos)),
            },
            Raw::Not(a) => BoolExpr::Not(Box::new(self.boolean(*a)?)),
            Raw::Bin(op @ ("and" | "or"), a, b) => {
                let (a, b) = (self.boolean(*a)?, self.boolean(*b)?);
                if op == "and" {
                    BoolExpr::And(Box::new(a), Box::new(b))
                } else {
                    BoolExpr::Or(Box::new(a), Box::new(b))
                }
            }
            Raw::Bin(op @ ("<" | "<=" | ">" | ">=" | "=="), a, b) => {
                let op = match op {
                    "<" => CmpOp::Lt,
                    "<=" => CmpOp::Le,
                    ">" => CmpOp::Gt,
                    ">=" => CmpOp::Ge,
                    _ => CmpOp::Eq,
                };
                if is_bool_node(&a) || is_bool_node(&b) {
                    return Err(type_err(pos, "comparison operands must be numeric"));
                }
                BoolExpr::Cmp(op, Box::new(self.num(*a)?), Box::new(self.num(*b)?))
            }
            Raw::Call(name, _) if !matches!(name.as_str(), "min" | "max" | "abs" | "if") => {
                return Err(unknown(&name, pos))
            }
            _ => return Err(type_err(pos, "numeric expression where a boolean is expected")),
        })
    }
}

pub fn parse(text: &str) -> Result<Program, DslError> {
    let toks = lex(text)?;
    // Every node needs at most a few tokens, so longer input cannot fit.
    if toks.len() > 8 * super::MAX_NODES {
        return Err(DslError::LimitExceeded(format!("{} tokens", toks.len())));
    }
    let mut p = Parser { toks, at: 0, nesting: 0 };
    p.expect_word("score")?;
    p.expect_sym(":")?;
    let score = p.expr()?;
    p.expect_word("roundup")?;
    p.expect_sym(":")?;
    let roundup = p.expr()?;
    let t = p.peek();
    if t.tok != Tok::Eof {
        return Err(err_at(t.pos, format!("unexpected {} after program", describe(&t.tok))));
    }
    let mut typer = Typer { spans: Vec::new() };
    let score = typer.num(score)?;
    let roundup = typer.boolean(roundup)?;
    let prog = Program { score, roundup, spans: typer.spans };
    prog.check_limits()?;
    Ok(prog)
}
