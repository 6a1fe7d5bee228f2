//! The hyperproperty language: quantifier prefix over schedulers, states and
//! stutter-schedulers, with a PCTL-like non-quantified body.
//!
//! Concrete grammar (ASCII):
//!
//! ```text
//! formula   := schedQ stateQ+ stutterQ+ body
//! schedQ    := ("exists" | "forall") "sched" IDENT "."
//! stateQ    := ("exists" | "forall") "state" IDENT "(" IDENT ")" "."
//! stutterQ  := ("exists" | "forall") "stutter" IDENT "(" IDENT ")" "."
//! body      := or ("->" or)*                    (left-associative)
//! or        := and ("|" and)*
//! and       := unary ("&" unary)*
//! unary     := "!" unary | primary
//! primary   := "true" | "false" | IDENT "(" IDENT ")"
//!            | "(" body ")" | expr CMP expr
//! expr      := mul (("+" | "-") mul)*
//! mul       := probAtom ("*" probAtom)*
//! probAtom  := "P" "(" path ")" | NUMBER | "(" expr ")"
//! path      := ("X" | "F" | "G") unary | unary "U" unary
//! CMP       := "<=" | "<" | "=" | "!=" | ">=" | ">"
//! NUMBER    := digits ("." digits)? ("/" digits)?
//! ```
//!
//! `exists forall sched state stutter true false P X U F G` are reserved
//! words. Operands of the temporal operators bind at the unary level, so
//! composite operands need parentheses, e.g. `P((a(t) & b(t)) U c(t))`.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::One;
use thiserror::Error;

use crate::rational::Rational;

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("duplicate variable `{0}`")]
    Duplicate(String),
    #[error("malformed formula: {0}")]
    Malformed(String),
    #[error("unsupported fragment: {0}")]
    UnsupportedFragment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantKind {
    Forall,
    Exists,
}

impl QuantKind {
    pub fn dual(self) -> QuantKind {
        match self {
            QuantKind::Forall => QuantKind::Exists,
            QuantKind::Exists => QuantKind::Forall,
        }
    }
}

impl fmt::Display for QuantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantKind::Forall => write!(f, "forall"),
            QuantKind::Exists => write!(f, "exists"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateQuant {
    pub kind: QuantKind,
    pub var: String,
    pub sched_var: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StutterQuant {
    pub kind: QuantKind,
    pub var: String,
    pub state_var: String,
}

/// A quantified hyperproperty: exactly one scheduler quantifier, then state
/// quantifiers, then stutter quantifiers, then the non-quantified body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HyperFormula {
    pub sched_kind: QuantKind,
    pub sched_var: String,
    pub state_quants: Vec<StateQuant>,
    pub stutter_quants: Vec<StutterQuant>,
    pub body: NonQuantFormula,
}

/// How an atom refers to its experiment: by stutter-variable name right
/// after parsing, by 1-based experiment index after [`experiment_map`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StutterRef {
    Var(String),
    Experiment(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Eq,
    Ne,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negated(self) -> CmpOp {
        match self {
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn eval(self, l: &Rational, r: &Rational) -> bool {
        match self {
            CmpOp::Le => l <= r,
            CmpOp::Lt => l < r,
            CmpOp::Eq => l == r,
            CmpOp::Ne => l != r,
            CmpOp::Gt => l > r,
            CmpOp::Ge => l >= r,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl fmt::Display for ArithOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        };
        write!(f, "{s}")
    }
}

/// Non-quantified state formula. `False`, `Or` and `Implies` are sugar and
/// are gone after [`desugar`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NonQuantFormula {
    True,
    False,
    Atom { ap: String, exp: StutterRef },
    Not(Box<NonQuantFormula>),
    And(Box<NonQuantFormula>, Box<NonQuantFormula>),
    Or(Box<NonQuantFormula>, Box<NonQuantFormula>),
    Implies(Box<NonQuantFormula>, Box<NonQuantFormula>),
    Compare(CmpOp, Box<ProbExpr>, Box<ProbExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbExpr {
    Prob(Box<PathFormula>),
    Const(Rational),
    Arith(ArithOp, Box<ProbExpr>, Box<ProbExpr>),
}

/// Path formula under the probability operator. `Finally` and `Globally`
/// are sugar and are gone after [`desugar`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathFormula {
    Next(Box<NonQuantFormula>),
    Until(Box<NonQuantFormula>, Box<NonQuantFormula>),
    Finally(Box<NonQuantFormula>),
    Globally(Box<NonQuantFormula>),
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(Rational),
    Exists,
    Forall,
    Sched,
    State,
    Stutter,
    True,
    False,
    P,
    X,
    U,
    F,
    G,
    LParen,
    RParen,
    Dot,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Cmp(CmpOp),
    Plus,
    Minus,
    Star,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "`{n}`"),
            Tok::Exists => write!(f, "`exists`"),
            Tok::Forall => write!(f, "`forall`"),
            Tok::Sched => write!(f, "`sched`"),
            Tok::State => write!(f, "`state`"),
            Tok::Stutter => write!(f, "`stutter`"),
            Tok::True => write!(f, "`true`"),
            Tok::False => write!(f, "`false`"),
            Tok::P => write!(f, "`P`"),
            Tok::X => write!(f, "`X`"),
            Tok::U => write!(f, "`U`"),
            Tok::F => write!(f, "`F`"),
            Tok::G => write!(f, "`G`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Amp => write!(f, "`&`"),
            Tok::Pipe => write!(f, "`|`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Cmp(op) => write!(f, "`{op}`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> char {
        let c = self.chars.next().unwrap();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        c
    }
}

fn lex(text: &str) -> Result<Vec<Token>, FormulaError> {
    let mut lx = Lexer {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = lx.peek() {
        let (line, col) = (lx.line, lx.col);
        if c.is_whitespace() {
            lx.bump();
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(c) = lx.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    word.push(lx.bump());
                } else {
                    break;
                }
            }
            match word.as_str() {
                "exists" => Tok::Exists,
                "forall" => Tok::Forall,
                "sched" => Tok::Sched,
                "state" => Tok::State,
                "stutter" => Tok::Stutter,
                "true" => Tok::True,
                "false" => Tok::False,
                "P" => Tok::P,
                "X" => Tok::X,
                "U" => Tok::U,
                "F" => Tok::F,
                "G" => Tok::G,
                _ => Tok::Ident(word),
            }
        } else if c.is_ascii_digit() {
            let mut num = String::new();
            while let Some(c) = lx.peek() {
                if c.is_ascii_digit() {
                    num.push(lx.bump());
                } else {
                    break;
                }
            }
            if lx.peek() == Some('.') {
                num.push(lx.bump());
                while let Some(c) = lx.peek() {
                    if c.is_ascii_digit() {
                        num.push(lx.bump());
                    } else {
                        break;
                    }
                }
            }
            if lx.peek() == Some('/') {
                num.push(lx.bump());
                while let Some(c) = lx.peek() {
                    if c.is_ascii_digit() {
                        num.push(lx.bump());
                    } else {
                        break;
                    }
                }
            }
            let value = crate::rational::parse_rational(&num)
                .map_err(|msg| FormulaError::Syntax { line, col, msg })?;
            Tok::Number(value)
        } else {
            lx.bump();
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '.' => Tok::Dot,
                '&' => Tok::Amp,
                '|' => Tok::Pipe,
                '+' => Tok::Plus,
                '*' => Tok::Star,
                '!' => {
                    if lx.peek() == Some('=') {
                        lx.bump();
                        Tok::Cmp(CmpOp::Ne)
                    } else {
                        Tok::Bang
                    }
                }
                '-' => {
                    if lx.peek() == Some('>') {
                        lx.bump();
                        Tok::Arrow
                    } else {
                        Tok::Minus
                    }
                }
                '<' => {
                    if lx.peek() == Some('=') {
                        lx.bump();
                        Tok::Cmp(CmpOp::Le)
                    } else {
                        Tok::Cmp(CmpOp::Lt)
                    }
                }
                '>' => {
                    if lx.peek() == Some('=') {
                        lx.bump();
                        Tok::Cmp(CmpOp::Ge)
                    } else {
                        Tok::Cmp(CmpOp::Gt)
                    }
                }
                '=' => Tok::Cmp(CmpOp::Eq),
                other => {
                    return Err(FormulaError::Syntax {
                        line,
                        col,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            }
        };
        out.push(Token { tok, line, col });
    }
    out.push(Token {
        tok: Tok::Eof,
        line: lx.line,
        col: lx.col,
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.tokens[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        let (line, col) = self.here();
        Err(FormulaError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), FormulaError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {tok}, found {}", self.peek()))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, FormulaError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected {what}, found {other}")),
        }
    }

    fn quant_kind(&mut self) -> Option<QuantKind> {
        match self.peek() {
            Tok::Exists => {
                self.bump();
                Some(QuantKind::Exists)
            }
            Tok::Forall => {
                self.bump();
                Some(QuantKind::Forall)
            }
            _ => None,
        }
    }

    fn formula(&mut self) -> Result<HyperFormula, FormulaError> {
        let kind = match self.quant_kind() {
            Some(k) => k,
            None => return self.error("expected `exists` or `forall`"),
        };
        self.expect(Tok::Sched)?;
        let sched_var = self.ident("scheduler variable")?;
        self.expect(Tok::Dot)?;

        let mut state_quants = Vec::new();
        let mut stutter_quants: Vec<StutterQuant> = Vec::new();
        while matches!(self.peek(), Tok::Exists | Tok::Forall) {
            match self.peek2() {
                Tok::Sched => {
                    return Err(FormulaError::UnsupportedFragment(
                        "only one scheduler quantifier is supported".to_string(),
                    ))
                }
                Tok::State => {
                    let kind = self.quant_kind().unwrap();
                    self.bump(); // `state`
                    if !stutter_quants.is_empty() {
                        return self.error("state quantifiers must precede stutter quantifiers");
                    }
                    let var = self.ident("state variable")?;
                    self.expect(Tok::LParen)?;
                    let sched = self.ident("scheduler variable")?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Dot)?;
                    state_quants.push(StateQuant {
                        kind,
                        var,
                        sched_var: sched,
                    });
                }
                Tok::Stutter => {
                    let kind = self.quant_kind().unwrap();
                    self.bump(); // `stutter`
                    let var = self.ident("stutter variable")?;
                    self.expect(Tok::LParen)?;
                    let state_var = self.ident("state variable")?;
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Dot)?;
                    stutter_quants.push(StutterQuant {
                        kind,
                        var,
                        state_var,
                    });
                }
                _ => return self.error("expected `state` or `stutter` after quantifier"),
            }
        }

        let body = self.state_formula()?;
        if *self.peek() != Tok::Eof {
            return self.error(format!("unexpected {} after formula", self.peek()));
        }
        let f = HyperFormula {
            sched_kind: kind,
            sched_var,
            state_quants,
            stutter_quants,
            body,
        };
        well_formed(&f)?;
        Ok(f)
    }

    fn state_formula(&mut self) -> Result<NonQuantFormula, FormulaError> {
        let mut lhs = self.or_formula()?;
        while *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.or_formula()?;
            lhs = NonQuantFormula::Implies(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn or_formula(&mut self) -> Result<NonQuantFormula, FormulaError> {
        let mut lhs = self.and_formula()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.and_formula()?;
            lhs = NonQuantFormula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_formula(&mut self) -> Result<NonQuantFormula, FormulaError> {
        let mut lhs = self.unary_formula()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            let rhs = self.unary_formula()?;
            lhs = NonQuantFormula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary_formula(&mut self) -> Result<NonQuantFormula, FormulaError> {
        if *self.peek() == Tok::Bang {
            self.bump();
            let inner = self.unary_formula()?;
            return Ok(NonQuantFormula::Not(Box::new(inner)));
        }
        self.primary_formula()
    }

    fn primary_formula(&mut self) -> Result<NonQuantFormula, FormulaError> {
        match self.peek().clone() {
            Tok::True => {
                self.bump();
                Ok(NonQuantFormula::True)
            }
            Tok::False => {
                self.bump();
                Ok(NonQuantFormula::False)
            }
            Tok::Ident(ap) => {
                self.bump();
                self.expect(Tok::LParen)?;
                let var = self.ident("stutter variable")?;
                self.expect(Tok::RParen)?;
                Ok(NonQuantFormula::Atom {
                    ap,
                    exp: StutterRef::Var(var),
                })
            }
            Tok::P | Tok::Number(_) => self.comparison(),
            Tok::LParen => {
                // Either a parenthesized state formula or the start of a
                // parenthesized probability expression; try the state
                // formula first and fall back on failure or when a
                // comparison/arithmetic operator follows.
                let save = self.pos;
                self.bump();
                match self.state_formula() {
                    Ok(inner) if *self.peek() == Tok::RParen => {
                        self.bump();
                        let expr_op_follows = matches!(
                            self.peek(),
                            Tok::Cmp(_) | Tok::Plus | Tok::Minus | Tok::Star
                        );
                        if !expr_op_follows {
                            return Ok(inner);
                        }
                        self.pos = save;
                        self.comparison()
                    }
                    _ => {
                        self.pos = save;
                        self.comparison()
                    }
                }
            }
            other => self.error(format!("expected a formula, found {other}")),
        }
    }

    fn comparison(&mut self) -> Result<NonQuantFormula, FormulaError> {
        let lhs = self.prob_expr()?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            other => return self.error(format!("expected a comparison operator, found {other}")),
        };
        self.bump();
        let rhs = self.prob_expr()?;
        Ok(NonQuantFormula::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn prob_expr(&mut self) -> Result<ProbExpr, FormulaError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = ProbExpr::Arith(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<ProbExpr, FormulaError> {
        let mut lhs = self.prob_atom()?;
        while *self.peek() == Tok::Star {
            self.bump();
            let rhs = self.prob_atom()?;
            lhs = ProbExpr::Arith(ArithOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prob_atom(&mut self) -> Result<ProbExpr, FormulaError> {
        match self.peek().clone() {
            Tok::P => {
                self.bump();
                self.expect(Tok::LParen)?;
                let path = self.path_formula()?;
                self.expect(Tok::RParen)?;
                Ok(ProbExpr::Prob(Box::new(path)))
            }
            Tok::Number(value) => {
                self.bump();
                Ok(ProbExpr::Const(value))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.prob_expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => self.error(format!("expected a probability expression, found {other}")),
        }
    }

    fn path_formula(&mut self) -> Result<PathFormula, FormulaError> {
        match self.peek() {
            Tok::X => {
                self.bump();
                Ok(PathFormula::Next(Box::new(self.unary_formula()?)))
            }
            Tok::F => {
                self.bump();
                Ok(PathFormula::Finally(Box::new(self.unary_formula()?)))
            }
            Tok::G => {
                self.bump();
                Ok(PathFormula::Globally(Box::new(self.unary_formula()?)))
            }
            _ => {
                let lhs = self.unary_formula()?;
                self.expect(Tok::U)?;
                let rhs = self.unary_formula()?;
                Ok(PathFormula::Until(Box::new(lhs), Box::new(rhs)))
            }
        }
    }
}

/// Parse a hyperproperty from text; the result is well-formed but not yet
/// desugared or experiment-indexed.
pub fn parse_formula(text: &str) -> Result<HyperFormula, FormulaError> {
    let tokens = lex(text)?;
    Parser { tokens, pos: 0 }.formula()
}

// ---------------------------------------------------------------------------
// Well-formedness
// ---------------------------------------------------------------------------

/// Check the scope rules: state quantifiers name the scheduler variable,
/// stutter quantifiers name a bound state variable, atoms name a bound
/// stutter variable, all variables are distinct, and both quantifier layers
/// are non-empty.
pub fn well_formed(f: &HyperFormula) -> Result<(), FormulaError> {
    let mut names = BTreeSet::new();
    if !names.insert(f.sched_var.clone()) {
        return Err(FormulaError::Duplicate(f.sched_var.clone()));
    }
    if f.state_quants.is_empty() {
        return Err(FormulaError::Malformed(
            "at least one state quantifier is required".to_string(),
        ));
    }
    if f.stutter_quants.is_empty() {
        return Err(FormulaError::Malformed(
            "at least one stutter quantifier is required".to_string(),
        ));
    }
    for q in &f.state_quants {
        if !names.insert(q.var.clone()) {
            return Err(FormulaError::Duplicate(q.var.clone()));
        }
        if q.sched_var != f.sched_var {
            return Err(FormulaError::Unbound(q.sched_var.clone()));
        }
    }
    let state_vars: BTreeSet<&String> = f.state_quants.iter().map(|q| &q.var).collect();
    for q in &f.stutter_quants {
        if !names.insert(q.var.clone()) {
            return Err(FormulaError::Duplicate(q.var.clone()));
        }
        if !state_vars.contains(&q.state_var) {
            return Err(FormulaError::Unbound(q.state_var.clone()));
        }
    }
    let stutter_vars: BTreeSet<&String> = f.stutter_quants.iter().map(|q| &q.var).collect();
    check_atoms(&f.body, &stutter_vars)
}

fn check_atoms(
    body: &NonQuantFormula,
    stutter_vars: &BTreeSet<&String>,
) -> Result<(), FormulaError> {
    match body {
        NonQuantFormula::True | NonQuantFormula::False => Ok(()),
        NonQuantFormula::Atom { exp, .. } => match exp {
            StutterRef::Var(v) if !stutter_vars.contains(v) => {
                Err(FormulaError::Unbound(v.clone()))
            }
            _ => Ok(()),
        },
        NonQuantFormula::Not(x) => check_atoms(x, stutter_vars),
        NonQuantFormula::And(a, b) | NonQuantFormula::Or(a, b) | NonQuantFormula::Implies(a, b) => {
            check_atoms(a, stutter_vars)?;
            check_atoms(b, stutter_vars)
        }
        NonQuantFormula::Compare(_, l, r) => {
            check_atoms_expr(l, stutter_vars)?;
            check_atoms_expr(r, stutter_vars)
        }
    }
}

fn check_atoms_expr(expr: &ProbExpr, stutter_vars: &BTreeSet<&String>) -> Result<(), FormulaError> {
    match expr {
        ProbExpr::Const(_) => Ok(()),
        ProbExpr::Arith(_, l, r) => {
            check_atoms_expr(l, stutter_vars)?;
            check_atoms_expr(r, stutter_vars)
        }
        ProbExpr::Prob(path) => match path.as_ref() {
            PathFormula::Next(x) | PathFormula::Finally(x) | PathFormula::Globally(x) => {
                check_atoms(x, stutter_vars)
            }
            PathFormula::Until(a, b) => {
                check_atoms(a, stutter_vars)?;
                check_atoms(b, stutter_vars)
            }
        },
    }
}

// ---------------------------------------------------------------------------
// Desugaring
// ---------------------------------------------------------------------------

/// Rewrite sugar into the core fragment: `false` to `!true`, disjunction
/// and implication through De Morgan, `F p` to `true U p`, and `P(G p)` to
/// `1 - P(true U !p)`. Idempotent.
pub fn desugar(f: &NonQuantFormula) -> NonQuantFormula {
    use NonQuantFormula::*;
    match f {
        True => True,
        False => Not(Box::new(True)),
        Atom { ap, exp } => Atom {
            ap: ap.clone(),
            exp: exp.clone(),
        },
        Not(x) => Not(Box::new(desugar(x))),
        And(a, b) => And(Box::new(desugar(a)), Box::new(desugar(b))),
        Or(a, b) => Not(Box::new(And(
            Box::new(Not(Box::new(desugar(a)))),
            Box::new(Not(Box::new(desugar(b)))),
        ))),
        Implies(a, b) => Not(Box::new(And(
            Box::new(desugar(a)),
            Box::new(Not(Box::new(desugar(b)))),
        ))),
        Compare(op, l, r) => Compare(*op, Box::new(desugar_expr(l)), Box::new(desugar_expr(r))),
    }
}

fn desugar_expr(e: &ProbExpr) -> ProbExpr {
    match e {
        ProbExpr::Const(c) => ProbExpr::Const(c.clone()),
        ProbExpr::Arith(op, l, r) => {
            ProbExpr::Arith(*op, Box::new(desugar_expr(l)), Box::new(desugar_expr(r)))
        }
        ProbExpr::Prob(path) => match path.as_ref() {
            PathFormula::Next(x) => {
                ProbExpr::Prob(Box::new(PathFormula::Next(Box::new(desugar(x)))))
            }
            PathFormula::Until(a, b) => ProbExpr::Prob(Box::new(PathFormula::Until(
                Box::new(desugar(a)),
                Box::new(desugar(b)),
            ))),
            PathFormula::Finally(x) => ProbExpr::Prob(Box::new(PathFormula::Until(
                Box::new(NonQuantFormula::True),
                Box::new(desugar(x)),
            ))),
            PathFormula::Globally(x) => ProbExpr::Arith(
                ArithOp::Sub,
                Box::new(ProbExpr::Const(Rational::one())),
                Box::new(ProbExpr::Prob(Box::new(PathFormula::Until(
                    Box::new(NonQuantFormula::True),
                    Box::new(NonQuantFormula::Not(Box::new(desugar(x)))),
                )))),
            ),
        },
    }
}

/// Desugar the body of a hyperproperty in place.
pub fn desugar_formula(f: &HyperFormula) -> HyperFormula {
    HyperFormula {
        body: desugar(&f.body),
        ..f.clone()
    }
}

/// True when the formula contains none of the sugar constructors.
pub fn is_desugared(f: &NonQuantFormula) -> bool {
    use NonQuantFormula::*;
    match f {
        True | Atom { .. } => true,
        False | Or(..) | Implies(..) => false,
        Not(x) => is_desugared(x),
        And(a, b) => is_desugared(a) && is_desugared(b),
        Compare(_, l, r) => is_desugared_expr(l) && is_desugared_expr(r),
    }
}

fn is_desugared_expr(e: &ProbExpr) -> bool {
    match e {
        ProbExpr::Const(_) => true,
        ProbExpr::Arith(_, l, r) => is_desugared_expr(l) && is_desugared_expr(r),
        ProbExpr::Prob(path) => match path.as_ref() {
            PathFormula::Next(x) => is_desugared(x),
            PathFormula::Until(a, b) => is_desugared(a) && is_desugared(b),
            PathFormula::Finally(_) | PathFormula::Globally(_) => false,
        },
    }
}

// ---------------------------------------------------------------------------
// Prefix analysis
// ---------------------------------------------------------------------------

/// Quantifier shape of the scheduler/stutter layers (state quantifiers may
/// mix freely in every class).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixClass {
    /// Existential scheduler and stutter quantifiers: encodable directly.
    Existential,
    /// Universal scheduler and stutter quantifiers: encodable after
    /// dualization through [`negate_prefix`].
    Universal,
    /// Anything else; out of the supported fragment.
    Mixed,
}

pub fn prefix_class(f: &HyperFormula) -> PrefixClass {
    let all_exists = f.stutter_quants.iter().all(|q| q.kind == QuantKind::Exists);
    let all_forall = f.stutter_quants.iter().all(|q| q.kind == QuantKind::Forall);
    match f.sched_kind {
        QuantKind::Exists if all_exists => PrefixClass::Existential,
        QuantKind::Forall if all_forall => PrefixClass::Universal,
        _ => PrefixClass::Mixed,
    }
}

/// Dualize a purely universal formula: flip every quantifier and negate the
/// body. The input holds iff the result does not.
pub fn negate_prefix(f: &HyperFormula) -> Result<HyperFormula, FormulaError> {
    match prefix_class(f) {
        PrefixClass::Universal => {}
        PrefixClass::Existential => {
            return Err(FormulaError::UnsupportedFragment(
                "dualization applies to purely universal prefixes".to_string(),
            ))
        }
        PrefixClass::Mixed => {
            return Err(FormulaError::UnsupportedFragment(
                "mixed scheduler/stutter quantifier alternation".to_string(),
            ))
        }
    }
    Ok(HyperFormula {
        sched_kind: f.sched_kind.dual(),
        sched_var: f.sched_var.clone(),
        state_quants: f
            .state_quants
            .iter()
            .map(|q| StateQuant {
                kind: q.kind.dual(),
                ..q.clone()
            })
            .collect(),
        stutter_quants: f
            .stutter_quants
            .iter()
            .map(|q| StutterQuant {
                kind: q.kind.dual(),
                ..q.clone()
            })
            .collect(),
        body: NonQuantFormula::Not(Box::new(f.body.clone())),
    })
}

/// Experiment structure of a hyperproperty: `n` experiments (stutter
/// quantifiers), `l` state quantifiers, and for each experiment the index of
/// the state quantifier its runs start from (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentMap {
    pub n: usize,
    pub l: usize,
    pub k: Vec<usize>,
}

/// Compute the experiment map and re-index every atom `a(tau_i)` by its
/// 1-based experiment number.
pub fn experiment_map(f: &HyperFormula) -> Result<(ExperimentMap, NonQuantFormula), FormulaError> {
    let mut k = Vec::new();
    for q in &f.stutter_quants {
        let idx = f
            .state_quants
            .iter()
            .position(|sq| sq.var == q.state_var)
            .ok_or_else(|| FormulaError::Unbound(q.state_var.clone()))?;
        k.push(idx);
    }
    let body = index_atoms(&f.body, &f.stutter_quants)?;
    Ok((
        ExperimentMap {
            n: f.stutter_quants.len(),
            l: f.state_quants.len(),
            k,
        },
        body,
    ))
}

fn experiment_of(var: &str, quants: &[StutterQuant]) -> Result<usize, FormulaError> {
    quants
        .iter()
        .position(|q| q.var == var)
        .map(|i| i + 1)
        .ok_or_else(|| FormulaError::Unbound(var.to_string()))
}

fn index_atoms(
    body: &NonQuantFormula,
    quants: &[StutterQuant],
) -> Result<NonQuantFormula, FormulaError> {
    use NonQuantFormula::*;
    Ok(match body {
        True => True,
        False => False,
        Atom { ap, exp } => {
            let exp = match exp {
                StutterRef::Var(v) => StutterRef::Experiment(experiment_of(v, quants)?),
                StutterRef::Experiment(i) => StutterRef::Experiment(*i),
            };
            Atom {
                ap: ap.clone(),
                exp,
            }
        }
        Not(x) => Not(Box::new(index_atoms(x, quants)?)),
        And(a, b) => And(
            Box::new(index_atoms(a, quants)?),
            Box::new(index_atoms(b, quants)?),
        ),
        Or(a, b) => Or(
            Box::new(index_atoms(a, quants)?),
            Box::new(index_atoms(b, quants)?),
        ),
        Implies(a, b) => Implies(
            Box::new(index_atoms(a, quants)?),
            Box::new(index_atoms(b, quants)?),
        ),
        Compare(op, l, r) => Compare(
            *op,
            Box::new(index_atoms_expr(l, quants)?),
            Box::new(index_atoms_expr(r, quants)?),
        ),
    })
}

fn index_atoms_expr(expr: &ProbExpr, quants: &[StutterQuant]) -> Result<ProbExpr, FormulaError> {
    Ok(match expr {
        ProbExpr::Const(c) => ProbExpr::Const(c.clone()),
        ProbExpr::Arith(op, l, r) => ProbExpr::Arith(
            *op,
            Box::new(index_atoms_expr(l, quants)?),
            Box::new(index_atoms_expr(r, quants)?),
        ),
        ProbExpr::Prob(path) => ProbExpr::Prob(Box::new(match path.as_ref() {
            PathFormula::Next(x) => PathFormula::Next(Box::new(index_atoms(x, quants)?)),
            PathFormula::Finally(x) => PathFormula::Finally(Box::new(index_atoms(x, quants)?)),
            PathFormula::Globally(x) => PathFormula::Globally(Box::new(index_atoms(x, quants)?)),
            PathFormula::Until(a, b) => PathFormula::Until(
                Box::new(index_atoms(a, quants)?),
                Box::new(index_atoms(b, quants)?),
            ),
        })),
    })
}

/// Experiments (1-based) whose atoms occur in the given indexed body.
pub fn experiments_of(body: &NonQuantFormula) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    collect_experiments(body, &mut out);
    out
}

fn collect_experiments(body: &NonQuantFormula, out: &mut BTreeSet<usize>) {
    use NonQuantFormula::*;
    match body {
        True | False => {}
        Atom { exp, .. } => {
            if let StutterRef::Experiment(i) = exp {
                out.insert(*i);
            }
        }
        Not(x) => collect_experiments(x, out),
        And(a, b) | Or(a, b) | Implies(a, b) => {
            collect_experiments(a, out);
            collect_experiments(b, out);
        }
        Compare(_, l, r) => {
            collect_experiments_expr(l, out);
            collect_experiments_expr(r, out);
        }
    }
}

fn collect_experiments_expr(expr: &ProbExpr, out: &mut BTreeSet<usize>) {
    match expr {
        ProbExpr::Const(_) => {}
        ProbExpr::Arith(_, l, r) => {
            collect_experiments_expr(l, out);
            collect_experiments_expr(r, out);
        }
        ProbExpr::Prob(path) => match path.as_ref() {
            PathFormula::Next(x) | PathFormula::Finally(x) | PathFormula::Globally(x) => {
                collect_experiments(x, out)
            }
            PathFormula::Until(a, b) => {
                collect_experiments(a, out);
                collect_experiments(b, out);
            }
        },
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// Canonical rendering; parses back to an identical AST (for formulas whose
/// atoms still use variable references).
pub fn print_formula(f: &HyperFormula) -> String {
    let mut out = format!("{} sched {} . ", f.sched_kind, f.sched_var);
    for q in &f.state_quants {
        out.push_str(&format!("{} state {}({}) . ", q.kind, q.var, q.sched_var));
    }
    for q in &f.stutter_quants {
        out.push_str(&format!("{} stutter {}({}) . ", q.kind, q.var, q.state_var));
    }
    out.push_str(&print_body(&f.body));
    out
}

/// Render a body; composite nodes carry their own parentheses so the result
/// is unambiguous at every nesting depth.
pub fn print_body(f: &NonQuantFormula) -> String {
    use NonQuantFormula::*;
    match f {
        True => "true".to_string(),
        False => "false".to_string(),
        Atom { ap, exp } => match exp {
            StutterRef::Var(v) => format!("{ap}({v})"),
            StutterRef::Experiment(i) => format!("{ap}(@{i})"),
        },
        Not(x) => format!("!{}", print_body(x)),
        And(a, b) => format!("({} & {})", print_body(a), print_body(b)),
        Or(a, b) => format!("({} | {})", print_body(a), print_body(b)),
        Implies(a, b) => format!("({} -> {})", print_body(a), print_body(b)),
        Compare(op, l, r) => format!("({} {op} {})", print_expr(l), print_expr(r)),
    }
}

pub fn print_expr(e: &ProbExpr) -> String {
    match e {
        ProbExpr::Const(c) => format!("{c}"),
        ProbExpr::Arith(op, l, r) => format!("({} {op} {})", print_expr(l), print_expr(r)),
        ProbExpr::Prob(path) => match path.as_ref() {
            PathFormula::Next(x) => format!("P(X {})", print_body(x)),
            PathFormula::Finally(x) => format!("P(F {})", print_body(x)),
            PathFormula::Globally(x) => format!("P(G {})", print_body(x)),
            PathFormula::Until(a, b) => format!("P({} U {})", print_body(a), print_body(b)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    const SSPOD: &str = "exists sched sg . forall state s1(sg) . forall state s2(sg) . \
        exists stutter t1(s1) . exists stutter t2(s2) . \
        (init(t1) & init(t2)) -> (P(F a(t1)) = P(F a(t2)))";

    #[test]
    fn parses_sspod_example() {
        let f = parse_formula(SSPOD).unwrap();
        assert_eq!(f.sched_kind, QuantKind::Exists);
        assert_eq!(f.state_quants.len(), 2);
        assert_eq!(f.stutter_quants.len(), 2);
        let (map, body) = experiment_map(&f).unwrap();
        assert_eq!(map.n, 2);
        assert_eq!(map.l, 2);
        assert_eq!(map.k, vec![0, 1]);
        assert_eq!(experiments_of(&body), [1, 2].into_iter().collect());
    }

    #[test]
    fn parses_minimal_formula() {
        let f = parse_formula("exists sched sg . exists state s(sg) . exists stutter t(s) . true")
            .unwrap();
        assert_eq!(f.stutter_quants.len(), 1);
        assert_eq!(f.body, NonQuantFormula::True);
    }

    #[test]
    fn rejects_unbound_stutter_var() {
        let err =
            parse_formula("exists sched sg . exists state s(sg) . exists stutter t(s) . a(t3)")
                .unwrap_err();
        assert!(matches!(err, FormulaError::Unbound(v) if v == "t3"));
    }

    #[test]
    fn rejects_scope_rule_violations() {
        // stutter quantifier over an unbound state variable
        let err =
            parse_formula("exists sched sg . exists state s(sg) . exists stutter t(s9) . a(t)")
                .unwrap_err();
        assert!(matches!(err, FormulaError::Unbound(v) if v == "s9"));
        // state quantifier over an unbound scheduler variable
        let err =
            parse_formula("exists sched sg . exists state s(zz) . exists stutter t(s) . a(t)")
                .unwrap_err();
        assert!(matches!(err, FormulaError::Unbound(v) if v == "zz"));
    }

    #[test]
    fn rejects_duplicate_variables() {
        let err = parse_formula(
            "exists sched sg . exists state s(sg) . exists state s(sg) . exists stutter t(s) . true",
        )
        .unwrap_err();
        assert!(matches!(err, FormulaError::Duplicate(v) if v == "s"));
    }

    #[test]
    fn rejects_second_scheduler_quantifier() {
        let err = parse_formula(
            "exists sched sg . exists sched sh . exists state s(sg) . exists stutter t(s) . true",
        )
        .unwrap_err();
        assert!(matches!(err, FormulaError::UnsupportedFragment(_)));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_formula("exists sched sg .\n exists state ((").unwrap_err();
        match err {
            FormulaError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert!(col > 1);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn desugars_globally() {
        let f = parse_formula(
            "exists sched sg . exists state s(sg) . exists stutter t(s) . P(G a(t)) = 1",
        )
        .unwrap();
        let d = desugar(&f.body);
        // 1 - P(true U !a(t)) = 1
        let expect = NonQuantFormula::Compare(
            CmpOp::Eq,
            Box::new(ProbExpr::Arith(
                ArithOp::Sub,
                Box::new(ProbExpr::Const(int(1))),
                Box::new(ProbExpr::Prob(Box::new(PathFormula::Until(
                    Box::new(NonQuantFormula::True),
                    Box::new(NonQuantFormula::Not(Box::new(NonQuantFormula::Atom {
                        ap: "a".into(),
                        exp: StutterRef::Var("t".into()),
                    }))),
                )))),
            )),
            Box::new(ProbExpr::Const(int(1))),
        );
        assert_eq!(d, expect);
        assert!(is_desugared(&d));
    }

    #[test]
    fn desugars_or_and_is_idempotent() {
        let f = parse_formula(
            "exists sched sg . exists state s(sg) . exists stutter t1(s) . exists stutter t2(s) . \
             a(t1) | b(t2)",
        )
        .unwrap();
        let d = desugar(&f.body);
        let a = NonQuantFormula::Atom {
            ap: "a".into(),
            exp: StutterRef::Var("t1".into()),
        };
        let b = NonQuantFormula::Atom {
            ap: "b".into(),
            exp: StutterRef::Var("t2".into()),
        };
        let expect = NonQuantFormula::Not(Box::new(NonQuantFormula::And(
            Box::new(NonQuantFormula::Not(Box::new(a))),
            Box::new(NonQuantFormula::Not(Box::new(b))),
        )));
        assert_eq!(d, expect);
        assert_eq!(desugar(&d), d);
    }

    #[test]
    fn negate_prefix_flips_universal() {
        let f = parse_formula("forall sched sg . forall state s(sg) . forall stutter t(s) . a(t)")
            .unwrap();
        let neg = negate_prefix(&f).unwrap();
        assert_eq!(neg.sched_kind, QuantKind::Exists);
        assert!(neg.state_quants.iter().all(|q| q.kind == QuantKind::Exists));
        assert!(neg
            .stutter_quants
            .iter()
            .all(|q| q.kind == QuantKind::Exists));
        assert!(matches!(neg.body, NonQuantFormula::Not(_)));
        // double dualization gives back the original prefix with a doubly
        // negated body
        let again = negate_prefix(&HyperFormula {
            sched_kind: neg.sched_kind.dual(),
            state_quants: neg
                .state_quants
                .iter()
                .map(|q| StateQuant {
                    kind: q.kind.dual(),
                    ..q.clone()
                })
                .collect(),
            stutter_quants: neg
                .stutter_quants
                .iter()
                .map(|q| StutterQuant {
                    kind: q.kind.dual(),
                    ..q.clone()
                })
                .collect(),
            ..neg.clone()
        })
        .unwrap();
        assert_eq!(
            again.body,
            NonQuantFormula::Not(Box::new(NonQuantFormula::Not(Box::new(f.body.clone()))))
        );
    }

    #[test]
    fn negate_prefix_rejects_mixed() {
        let f = parse_formula(
            "forall sched sg . forall state s1(sg) . forall state s2(sg) . \
             exists stutter t1(s1) . exists stutter t2(s2) . a(t1)",
        )
        .unwrap();
        assert_eq!(prefix_class(&f), PrefixClass::Mixed);
        assert!(matches!(
            negate_prefix(&f),
            Err(FormulaError::UnsupportedFragment(_))
        ));
    }

    #[test]
    fn experiment_map_shared_state_var() {
        let f = parse_formula(
            "exists sched sg . exists state s1(sg) . \
             exists stutter t1(s1) . exists stutter t2(s1) . a(t1) & a(t2)",
        )
        .unwrap();
        let (map, body) = experiment_map(&f).unwrap();
        assert_eq!(map.k, vec![0, 0]);
        assert_eq!(
            body,
            NonQuantFormula::And(
                Box::new(NonQuantFormula::Atom {
                    ap: "a".into(),
                    exp: StutterRef::Experiment(1)
                }),
                Box::new(NonQuantFormula::Atom {
                    ap: "a".into(),
                    exp: StutterRef::Experiment(2)
                }),
            )
        );
    }

    #[test]
    fn experiment_map_single() {
        let f = parse_formula(
            "exists sched sg . exists state s(sg) . exists stutter t(s) . P(X a(t)) > 0",
        )
        .unwrap();
        let (map, _) = experiment_map(&f).unwrap();
        assert_eq!((map.n, map.l, map.k.as_slice()), (1, 1, &[0][..]));
    }

    #[test]
    fn print_parse_round_trip() {
        let samples = [
            SSPOD,
            "exists sched sg . exists state s(sg) . exists stutter t(s) . true",
            "forall sched sg . forall state s(sg) . forall stutter t(s) . \
             (P(a(t) U b(t)) >= 1/2 & !false)",
            "exists sched sg . forall state s(sg) . exists stutter t(s) . \
             ((1 - P(G !a(t))) * P(X b(t))) != (P(F a(t)) + 0.25)",
            "exists sched sg . forall state s(sg) . exists stutter t(s) . \
             P((a(t) & !b(t)) U (P(X a(t)) < 1)) = 0",
        ];
        for text in samples {
            let f = parse_formula(text).unwrap();
            let printed = print_formula(&f);
            let again = parse_formula(&printed)
                .unwrap_or_else(|e| panic!("printed form failed to parse: {printed}\n{e}"));
            assert_eq!(again, f, "round trip of {text}");
        }
    }

    #[test]
    fn parses_numbers() {
        let f = parse_formula(
            "exists sched sg . exists state s(sg) . exists stutter t(s) . \
             P(F a(t)) = 0.25 & P(X a(t)) < 3/8",
        )
        .unwrap();
        let printed = print_body(&f.body);
        assert!(printed.contains("1/4"));
        assert!(printed.contains("3/8"));
        assert_eq!(parse_formula(&print_formula(&f)).unwrap().body, f.body);
        let _ = ratio(1, 4);
    }

    proptest::proptest! {
        #[test]
        fn desugar_idempotent_on_random_bodies(body in arb_body(3)) {
            let once = desugar(&body);
            proptest::prop_assert!(is_desugared(&once));
            proptest::prop_assert_eq!(desugar(&once), once.clone());
        }

        #[test]
        fn print_parse_round_trip_random(body in arb_body(3)) {
            let f = HyperFormula {
                sched_kind: QuantKind::Exists,
                sched_var: "sg".into(),
                state_quants: vec![StateQuant {
                    kind: QuantKind::Forall,
                    var: "s1".into(),
                    sched_var: "sg".into(),
                }],
                stutter_quants: vec![
                    StutterQuant {
                        kind: QuantKind::Exists,
                        var: "t1".into(),
                        state_var: "s1".into(),
                    },
                    StutterQuant {
                        kind: QuantKind::Exists,
                        var: "t2".into(),
                        state_var: "s1".into(),
                    },
                ],
                body,
            };
            let printed = print_formula(&f);
            let parsed = parse_formula(&printed).map_err(|e| {
                proptest::test_runner::TestCaseError::fail(format!("{printed}: {e}"))
            })?;
            proptest::prop_assert_eq!(parsed, f);
        }
    }

    /// Random bodies over atoms a(t1), b(t2) with bounded depth.
    fn arb_body(depth: u32) -> impl proptest::strategy::Strategy<Value = NonQuantFormula> {
        use proptest::prelude::*;
        let atom = prop_oneof![
            Just(NonQuantFormula::True),
            Just(NonQuantFormula::False),
            Just(NonQuantFormula::Atom {
                ap: "a".into(),
                exp: StutterRef::Var("t1".into())
            }),
            Just(NonQuantFormula::Atom {
                ap: "b".into(),
                exp: StutterRef::Var("t2".into())
            }),
        ];
        atom.prop_recursive(depth, 24, 3, |inner| {
            let expr = arb_expr(inner.clone());
            prop_oneof![
                inner
                    .clone()
                    .prop_map(|x| NonQuantFormula::Not(Box::new(x))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| NonQuantFormula::And(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| NonQuantFormula::Or(Box::new(a), Box::new(b))),
                (inner.clone(), inner)
                    .prop_map(|(a, b)| NonQuantFormula::Implies(Box::new(a), Box::new(b))),
                (expr.clone(), arb_cmp(), expr).prop_map(|(l, op, r)| NonQuantFormula::Compare(
                    op,
                    Box::new(l),
                    Box::new(r)
                )),
            ]
        })
    }

    fn arb_cmp() -> impl proptest::strategy::Strategy<Value = CmpOp> {
        use proptest::prelude::*;
        prop_oneof![
            Just(CmpOp::Le),
            Just(CmpOp::Lt),
            Just(CmpOp::Eq),
            Just(CmpOp::Ne),
            Just(CmpOp::Gt),
            Just(CmpOp::Ge),
        ]
    }

    fn arb_expr(
        body: impl proptest::strategy::Strategy<Value = NonQuantFormula> + Clone + 'static,
    ) -> impl proptest::strategy::Strategy<Value = ProbExpr> + Clone {
        use proptest::prelude::*;
        let leaf = prop_oneof![
            (0i64..=4).prop_map(|n| ProbExpr::Const(ratio(n, 4))),
            body.clone()
                .prop_map(|x| ProbExpr::Prob(Box::new(PathFormula::Next(Box::new(x))))),
            body.clone()
                .prop_map(|x| ProbExpr::Prob(Box::new(PathFormula::Finally(Box::new(x))))),
            body.clone()
                .prop_map(|x| ProbExpr::Prob(Box::new(PathFormula::Globally(Box::new(x))))),
            (body.clone(), body).prop_map(|(a, b)| ProbExpr::Prob(Box::new(PathFormula::Until(
                Box::new(a),
                Box::new(b)
            )))),
        ];
        leaf.prop_recursive(2, 8, 2, |inner| {
            (
                inner.clone(),
                prop_oneof![Just(ArithOp::Add), Just(ArithOp::Sub), Just(ArithOp::Mul)],
                inner,
            )
                .prop_map(|(l, op, r)| ProbExpr::Arith(op, Box::new(l), Box::new(r)))
        })
    }
}
