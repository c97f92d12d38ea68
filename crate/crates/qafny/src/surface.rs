//! Concrete ASCII syntax for Qafny programs: AST, parser, and printer.
//!
//! ```text
//! program := decl* def* stmt*
//! decl    := "qubit" ident "[" nat "]" ";"
//! def     := "def" ident "(" ident ("," ident)* ")" block
//! stmt    := "skip" ";"
//!          | "let" ident "=" (aexp | "measure" "(" ident ")") "in" block
//!          | locus "*=" unitary ";"  |  locus "+=" aexp ";"  |  locus ":=" ("mulmod"|"powmod") args ";"
//!          | "if" "(" bexp ")" block ["else" block]
//!          | "for" ident "in" "[" aexp "," aexp ")" ["&&" bexp] block
//!          | "assert" "{" pred "}" ";"
//!          | ident "(" aexp ("," aexp)* ")" ";"
//! locus   := range ("++" range)*
//! range   := ident | ident "[" aexp "]" | ident "[" aexp "," aexp ")"
//! unitary := "H" | "QFT" | "RQFT" | "dis" | "reduce" bits nat | "+" aexp
//!          | "mulmod" "(" aexp "," aexp ")" | "powmod" "(" aexp "," aexp ")"
//!          | "oqasm" "{" instr* "}"
//! ```
//!
//! Guards are `x[i]`, `a1 < a2 @ x[i]`, `a1 == a2 @ x[i]`, classical
//! comparisons, `true`/`false`, and negation `!b`.  Predicates combine
//! `Κ |-> ket` maps and comparisons with `&&` and the separating conjunction
//! `*` (both left-associative, `&&` binding tighter).

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::oqasm::{OqInstr, Pos};
use crate::qstate::{bits_from_str, bits_to_string, Bits};

/// A whole Qafny source file.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub decls: Vec<QubitDecl>,
    pub procs: Vec<ProcDef>,
    pub body: Vec<Stmt>,
}

/// `qubit name[size];`
#[derive(Debug, Clone, PartialEq)]
pub struct QubitDecl {
    pub name: String,
    pub size: usize,
}

/// A named procedure: qubit-array or classical parameters, inlined at calls.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

/// Integer-valued arithmetic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "%",
            ArithOp::Pow => "^",
        }
    }

    fn prec(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div | ArithOp::Mod => 2,
            ArithOp::Pow => 3,
        }
    }
}

/// Arithmetic expressions over classical values and quantum ranges.
#[derive(Debug, Clone, PartialEq)]
pub enum AExp {
    Num(i64),
    /// A classical/measurement variable, or a whole qubit array.
    Var(String),
    /// A quantum range read as a little-endian integer.
    Qubits(Box<RangeExp>),
    Bin(ArithOp, Box<AExp>, Box<AExp>),
}

impl AExp {
    pub fn bin(op: ArithOp, a: AExp, b: AExp) -> Self {
        AExp::Bin(op, Box::new(a), Box::new(b))
    }
}

/// A range as written: bare array, singleton `x[i]`, or slice `x[a,b)`.
#[derive(Debug, Clone, PartialEq)]
pub enum RangeExp {
    Whole(String),
    Single(String, AExp),
    Slice(String, AExp, AExp),
}

impl RangeExp {
    pub fn var(&self) -> &str {
        match self {
            RangeExp::Whole(v) | RangeExp::Single(v, _) | RangeExp::Slice(v, _, _) => v,
        }
    }
}

/// A locus as written: ranges joined by `++`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocusExp(pub Vec<RangeExp>);

/// Comparison operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
        }
    }

    pub fn eval(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
        }
    }
}

/// Boolean guards.
#[derive(Debug, Clone, PartialEq)]
pub enum BExp {
    Bool(bool),
    /// A single qubit tested as-is (`false ⊕ x[i]`).
    Bit(RangeExp),
    /// `lhs op rhs @ target`: the comparison is XORed into `target`, which is then tested.
    QCmp { op: CmpOp, lhs: AExp, rhs: AExp, target: RangeExp },
    /// A purely classical comparison.
    CCmp { op: CmpOp, lhs: AExp, rhs: AExp },
    Not(Box<BExp>),
}

impl BExp {
    /// True if the guard reads qubits.
    pub fn is_quantum(&self) -> bool {
        match self {
            BExp::Bool(_) | BExp::CCmp { .. } => false,
            BExp::Bit(_) | BExp::QCmp { .. } => true,
            BExp::Not(b) => b.is_quantum(),
        }
    }
}

/// Built-in and OQASM oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// `+ k`: add a constant modulo `2^width`.
    AddConst(AExp),
    /// `mulmod(a, N)`: `y ↦ a·y mod N` for `y < N`.
    MulMod { a: AExp, n: AExp },
    /// `powmod(a, N)` on `e ++ y`: `y ↦ y·aᵉ mod N` for `y < N`, where `e`
    /// is the first range of the locus.
    PowMod { a: AExp, n: AExp },
    /// Raw OQASM; array names refer to the locus ranges of the same name.
    Oqasm(OqInstr),
}

/// Operations applicable with `κ *= op`.
#[derive(Debug, Clone, PartialEq)]
pub enum Unitary {
    H,
    Qft,
    Rqft,
    Dis,
    /// Amplitude reduction on basis `bits` with parameter `n`.
    Reduce { bits: Bits, n: u32 },
    Oracle(Oracle),
}

/// Statements.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Skip,
    LetC { var: String, value: AExp, body: Vec<Stmt> },
    LetM { var: String, target: String, body: Vec<Stmt> },
    Apply { locus: LocusExp, op: Unitary },
    QIf { guard: BExp, body: Vec<Stmt> },
    CIf { guard: BExp, then_branch: Vec<Stmt>, else_branch: Vec<Stmt> },
    For { var: String, lo: AExp, hi: AExp, guard: Option<BExp>, body: Vec<Stmt> },
    Assert(Pred),
    Call { name: String, args: Vec<AExp> },
}

/// Real/complex amplitude expressions inside predicates.
#[derive(Debug, Clone, PartialEq)]
pub enum AmpExp {
    Num(f64),
    Var(String),
    Neg(Box<AmpExp>),
    Bin(ArithOp, Box<AmpExp>, Box<AmpExp>),
    Sqrt(Box<AmpExp>),
    /// `alpha(r) = e^{2πir}`.
    Alpha(Box<AmpExp>),
}

/// One basis segment inside a ket literal.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisExp {
    Lit(Bits),
    /// `rep(d, n)`: bit `d` repeated `n` times.
    Rep(AExp, AExp),
    /// `bits(v, n)`: `v` as an `n`-bit little-endian string.
    Bits(AExp, AExp),
}

/// Ket expressions; summation indices stay symbolic until evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum KetExp {
    Term { amp: Option<AmpExp>, bases: Vec<BasisExp> },
    Sum { var: String, lo: AExp, hi: AExp, body: Box<KetExp> },
    Add(Box<KetExp>, Box<KetExp>),
}

/// Predicate loci: plain loci or transformer forms.
#[derive(Debug, Clone, PartialEq)]
pub enum PredLocus {
    Plain(LocusExp),
    /// `M(x, n, κ)`: measurement of an `n`-qubit prefix bound to `x`.
    M { var: String, n: AExp, locus: LocusExp },
    /// `F(b, κ, κ')`: freeze the guard locus `κ` under `b`.
    F { guard: BExp, guard_locus: LocusExp, locus: LocusExp },
    /// `U(b, κ, κ')`: the `b`-part of `κ ++ κ'` viewed over `κ'`.
    U { guard: BExp, guard_locus: LocusExp, locus: LocusExp },
}

/// State predicates.
#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    True,
    Cmp { op: CmpOp, lhs: AExp, rhs: AExp },
    Maps { locus: PredLocus, ket: KetExp },
    And(Box<Pred>, Box<Pred>),
    Sep(Box<Pred>, Box<Pred>),
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: &[&str] = &[
    "|->", "++", "*=", "+=", ":=", "==", "<=", "&&", "[", "]", "(", ")", "{", "}", ",", ";", ":", "+",
    "-", "*", "/", "%", "^", "<", ">", "=", "!", "@", "|",
];

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
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
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (l0, c0) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            toks.push(Token { tok: Tok::Ident(s), line: l0, col: c0 });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            toks.push(Token { tok: Tok::Num(s), line: l0, col: c0 });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                toks.push(Token { tok: Tok::Sym(s), line: l0, col: c0 });
            }
            None => return Err(Error::syntax(line, col, format!("unexpected character `{c}`"))),
        }
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

const RESERVED: &[&str] = &[
    "qubit", "def", "skip", "let", "in", "measure", "if", "else", "for", "assert", "sum", "true",
    "false", "rep", "bits", "sqrt", "alpha",
];

/// True if `s` is a keyword that cannot name a variable.
pub fn is_reserved(s: &str) -> bool {
    RESERVED.contains(&s)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        Ok(Parser { toks: lex(src)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        let found = match &t.tok {
            Tok::Ident(s) | Tok::Num(s) => s.clone(),
            Tok::Sym(s) => s.to_string(),
            Tok::Eof => "end of input".into(),
        };
        Err(Error::syntax(t.line, t.col, format!("{} (found `{found}`)", msg.into())))
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn expect_kw(&mut self, s: &str) -> Result<()> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn nat(&mut self) -> Result<u64> {
        match self.peek().clone() {
            Tok::Num(s) if !s.contains('.') => match s.parse() {
                Ok(v) => {
                    self.bump();
                    Ok(v)
                }
                Err(_) => self.err("number too large"),
            },
            _ => self.err("expected natural number"),
        }
    }

    // -- programs ---------------------------------------------------------

    fn program(&mut self) -> Result<Program> {
        let mut decls: Vec<QubitDecl> = Vec::new();
        while self.is_kw("qubit") {
            self.bump();
            let line = self.toks[self.pos].line;
            let col = self.toks[self.pos].col;
            let name = self.ident()?;
            self.expect_sym("[")?;
            let size = self.nat()? as usize;
            self.expect_sym("]")?;
            self.expect_sym(";")?;
            if decls.iter().any(|d| d.name == name) {
                let _ = (line, col);
                return Err(Error::DuplicateDeclaration(name));
            }
            decls.push(QubitDecl { name, size });
        }
        let mut procs: Vec<ProcDef> = Vec::new();
        while self.is_kw("def") {
            self.bump();
            let name = self.ident()?;
            self.expect_sym("(")?;
            let mut params = vec![self.ident()?];
            while self.eat_sym(",") {
                params.push(self.ident()?);
            }
            self.expect_sym(")")?;
            let body = self.block()?;
            if procs.iter().any(|p| p.name == name) || decls.iter().any(|d| d.name == name) {
                return Err(Error::DuplicateDeclaration(name));
            }
            procs.push(ProcDef { name, params, body });
        }
        let mut body = Vec::new();
        while *self.peek() != Tok::Eof {
            body.push(self.stmt()?);
        }
        Ok(Program { decls, procs, body })
    }

    fn block(&mut self) -> Result<Vec<Stmt>> {
        self.expect_sym("{")?;
        let mut out = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unterminated block");
            }
            out.push(self.stmt()?);
        }
        self.bump();
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Stmt> {
        if self.is_kw("skip") {
            self.bump();
            self.expect_sym(";")?;
            return Ok(Stmt::Skip);
        }
        if self.is_kw("let") {
            self.bump();
            let var = self.ident()?;
            self.expect_sym("=")?;
            if self.is_kw("measure") {
                self.bump();
                self.expect_sym("(")?;
                let target = self.ident()?;
                self.expect_sym(")")?;
                self.expect_kw("in")?;
                let body = self.block()?;
                return Ok(Stmt::LetM { var, target, body });
            }
            let value = self.aexp(false)?;
            self.expect_kw("in")?;
            let body = self.block()?;
            return Ok(Stmt::LetC { var, value, body });
        }
        if self.is_kw("if") {
            self.bump();
            self.expect_sym("(")?;
            let guard = self.bexp()?;
            self.expect_sym(")")?;
            let then_branch = self.block()?;
            let else_branch = if self.is_kw("else") {
                self.bump();
                Some(self.block()?)
            } else {
                None
            };
            if guard.is_quantum() {
                if else_branch.is_some() {
                    return self.err("a quantum conditional has no else branch");
                }
                return Ok(Stmt::QIf { guard, body: then_branch });
            }
            return Ok(Stmt::CIf { guard, then_branch, else_branch: else_branch.unwrap_or_default() });
        }
        if self.is_kw("for") {
            self.bump();
            let var = self.ident()?;
            self.expect_kw("in")?;
            self.expect_sym("[")?;
            let lo = self.aexp(false)?;
            self.expect_sym(",")?;
            let hi = self.aexp(false)?;
            self.expect_sym(")")?;
            let guard = if self.eat_sym("&&") { Some(self.bexp()?) } else { None };
            let body = self.block()?;
            return Ok(Stmt::For { var, lo, hi, guard, body });
        }
        if self.is_kw("assert") {
            self.bump();
            self.expect_sym("{")?;
            let p = self.pred()?;
            self.expect_sym("}")?;
            self.expect_sym(";")?;
            return Ok(Stmt::Assert(p));
        }
        if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym("(")) {
            let name = self.ident()?;
            self.expect_sym("(")?;
            let mut args = vec![self.aexp(false)?];
            while self.eat_sym(",") {
                args.push(self.aexp(false)?);
            }
            self.expect_sym(")")?;
            self.expect_sym(";")?;
            return Ok(Stmt::Call { name, args });
        }
        let locus = self.locus()?;
        let op = if self.eat_sym("*=") {
            self.unitary()?
        } else if self.eat_sym("+=") {
            Unitary::Oracle(Oracle::AddConst(self.aexp(false)?))
        } else if self.eat_sym(":=") {
            let pow = if self.is_kw("mulmod") {
                false
            } else if self.is_kw("powmod") {
                true
            } else {
                return self.err("expected `mulmod` or `powmod`");
            };
            self.bump();
            let (a, n) = self.two_args()?;
            Unitary::Oracle(if pow { Oracle::PowMod { a, n } } else { Oracle::MulMod { a, n } })
        } else {
            return self.err("expected `*=`, `+=`, or `:=`");
        };
        self.expect_sym(";")?;
        Ok(Stmt::Apply { locus, op })
    }

    fn two_args(&mut self) -> Result<(AExp, AExp)> {
        self.expect_sym("(")?;
        let a = self.aexp(false)?;
        self.expect_sym(",")?;
        let b = self.aexp(false)?;
        self.expect_sym(")")?;
        Ok((a, b))
    }

    fn unitary(&mut self) -> Result<Unitary> {
        if self.eat_sym("+") {
            return Ok(Unitary::Oracle(Oracle::AddConst(self.aexp(false)?)));
        }
        let Tok::Ident(name) = self.peek().clone() else {
            return self.err("expected a unitary");
        };
        self.bump();
        Ok(match name.as_str() {
            "H" => Unitary::H,
            "QFT" => Unitary::Qft,
            "RQFT" => Unitary::Rqft,
            "dis" => Unitary::Dis,
            "reduce" => {
                let bits = match self.peek().clone() {
                    Tok::Num(s) => match bits_from_str(&s) {
                        Some(b) => {
                            self.bump();
                            b
                        }
                        None => return self.err("expected a bitstring"),
                    },
                    _ => return self.err("expected a bitstring"),
                };
                let n = self.nat()? as u32;
                Unitary::Reduce { bits, n }
            }
            "mulmod" => {
                let (a, n) = self.two_args()?;
                Unitary::Oracle(Oracle::MulMod { a, n })
            }
            "powmod" => {
                let (a, n) = self.two_args()?;
                Unitary::Oracle(Oracle::PowMod { a, n })
            }
            "oqasm" => Unitary::Oracle(Oracle::Oqasm(self.oq_block()?)),
            _ => {
                self.pos -= 1;
                return self.err("unknown unitary");
            }
        })
    }

    // -- OQASM ------------------------------------------------------------

    fn oq_block(&mut self) -> Result<OqInstr> {
        self.expect_sym("{")?;
        let mut items = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unterminated OQASM block");
            }
            items.push(self.oq_instr()?);
            self.eat_sym(";");
        }
        self.bump();
        Ok(OqInstr::seq(items))
    }

    fn oq_pos(&mut self) -> Result<Pos> {
        let var = self.ident()?;
        self.expect_sym("[")?;
        let idx = self.nat()? as usize;
        self.expect_sym("]")?;
        Ok(Pos { var, idx })
    }

    fn oq_instr(&mut self) -> Result<OqInstr> {
        let Tok::Ident(name) = self.peek().clone() else {
            return self.err("expected an OQASM instruction");
        };
        self.bump();
        Ok(match name.as_str() {
            "ID" => OqInstr::Id(self.oq_pos()?),
            "X" => OqInstr::X(self.oq_pos()?),
            "RZ" => {
                let q = self.nat()? as u32;
                OqInstr::Rz(q, self.oq_pos()?)
            }
            "RZinv" => {
                let q = self.nat()? as u32;
                OqInstr::Rzinv(q, self.oq_pos()?)
            }
            "SR" => {
                let m = self.nat()? as u32;
                OqInstr::Sr(m, self.ident()?)
            }
            "SRinv" => {
                let m = self.nat()? as u32;
                OqInstr::Srinv(m, self.ident()?)
            }
            "QFT" => {
                let n = self.nat()? as u32;
                OqInstr::Qft(n, self.ident()?)
            }
            "RQFT" => {
                let n = self.nat()? as u32;
                OqInstr::Rqft(n, self.ident()?)
            }
            "CU" => {
                let p = self.oq_pos()?;
                OqInstr::Cu(p, Box::new(self.oq_block()?))
            }
            "Lshift" => OqInstr::Lshift(self.ident()?),
            "Rshift" => OqInstr::Rshift(self.ident()?),
            "Rev" => OqInstr::Rev(self.ident()?),
            _ => {
                self.pos -= 1;
                return self.err("unknown OQASM instruction");
            }
        })
    }

    // -- loci and expressions ---------------------------------------------

    fn range(&mut self) -> Result<RangeExp> {
        let var = self.ident()?;
        if !self.eat_sym("[") {
            return Ok(RangeExp::Whole(var));
        }
        let lo = self.aexp(false)?;
        if self.eat_sym("]") {
            return Ok(RangeExp::Single(var, lo));
        }
        self.expect_sym(",")?;
        let hi = self.aexp(false)?;
        self.expect_sym(")")?;
        Ok(RangeExp::Slice(var, lo, hi))
    }

    fn locus(&mut self) -> Result<LocusExp> {
        let mut rs = vec![self.range()?];
        while self.eat_sym("++") {
            rs.push(self.range()?);
        }
        Ok(LocusExp(rs))
    }

    /// `no_star` stops at `*` so predicates can use it as separating conjunction.
    fn aexp(&mut self, no_star: bool) -> Result<AExp> {
        let mut lhs = self.aterm(no_star)?;
        loop {
            let op = if self.is_sym("+") {
                ArithOp::Add
            } else if self.is_sym("-") {
                ArithOp::Sub
            } else {
                break;
            };
            self.bump();
            let rhs = self.aterm(no_star)?;
            lhs = AExp::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn aterm(&mut self, no_star: bool) -> Result<AExp> {
        let mut lhs = self.afactor()?;
        loop {
            let op = if self.is_sym("*") && !no_star {
                ArithOp::Mul
            } else if self.is_sym("/") {
                ArithOp::Div
            } else if self.is_sym("%") {
                ArithOp::Mod
            } else {
                break;
            };
            self.bump();
            let rhs = self.afactor()?;
            lhs = AExp::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn afactor(&mut self) -> Result<AExp> {
        let base = self.aatom()?;
        if self.eat_sym("^") {
            let exp = self.afactor()?;
            return Ok(AExp::bin(ArithOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn aatom(&mut self) -> Result<AExp> {
        match self.peek().clone() {
            Tok::Num(s) if !s.contains('.') => match s.parse() {
                Ok(v) => {
                    self.bump();
                    Ok(AExp::Num(v))
                }
                Err(_) => self.err("number too large"),
            },
            Tok::Sym("(") => {
                self.bump();
                let e = self.aexp(false)?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) if !is_reserved(&s) => {
                if matches!(self.peek_at(1), Tok::Sym("[")) {
                    Ok(AExp::Qubits(Box::new(self.range()?)))
                } else {
                    self.bump();
                    Ok(AExp::Var(s))
                }
            }
            _ => self.err("expected an arithmetic expression"),
        }
    }

    fn cmp_op(&mut self) -> Option<CmpOp> {
        let op = if self.is_sym("<") {
            CmpOp::Lt
        } else if self.is_sym("<=") {
            CmpOp::Le
        } else if self.is_sym("==") {
            CmpOp::Eq
        } else {
            return None;
        };
        self.bump();
        Some(op)
    }

    fn bexp(&mut self) -> Result<BExp> {
        if self.eat_sym("!") {
            return Ok(BExp::Not(Box::new(self.bexp()?)));
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(BExp::Bool(true));
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(BExp::Bool(false));
        }
        let lhs = self.aexp(false)?;
        let Some(op) = self.cmp_op() else {
            return match lhs {
                AExp::Qubits(r) => Ok(BExp::Bit(*r)),
                _ => self.err("expected a comparison or a single qubit"),
            };
        };
        let rhs = self.aexp(false)?;
        if self.eat_sym("@") {
            let target = self.range()?;
            return Ok(BExp::QCmp { op, lhs, rhs, target });
        }
        Ok(BExp::CCmp { op, lhs, rhs })
    }

    // -- predicates --------------------------------------------------------

    fn pred(&mut self) -> Result<Pred> {
        let mut lhs = self.pred_and()?;
        while self.eat_sym("*") {
            let rhs = self.pred_and()?;
            lhs = Pred::Sep(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_and(&mut self) -> Result<Pred> {
        let mut lhs = self.pred_atom()?;
        while self.eat_sym("&&") {
            let rhs = self.pred_atom()?;
            lhs = Pred::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn pred_atom(&mut self) -> Result<Pred> {
        if self.is_kw("true") {
            self.bump();
            return Ok(Pred::True);
        }
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(p) = self.pred() {
                if self.eat_sym(")") && !self.is_cmp_start() {
                    return Ok(p);
                }
            }
            self.pos = save;
        }
        let transformer = match self.peek() {
            Tok::Ident(s) if matches!(s.as_str(), "M" | "F" | "U") => {
                matches!(self.peek_at(1), Tok::Sym("("))
            }
            _ => false,
        };
        if transformer {
            let Tok::Ident(which) = self.bump() else { unreachable!() };
            self.expect_sym("(")?;
            let locus = if which == "M" {
                let var = self.ident()?;
                self.expect_sym(",")?;
                let n = self.aexp(false)?;
                self.expect_sym(",")?;
                let locus = self.locus()?;
                PredLocus::M { var, n, locus }
            } else {
                let guard = self.bexp()?;
                self.expect_sym(",")?;
                let guard_locus = self.locus()?;
                self.expect_sym(",")?;
                let locus = self.locus()?;
                if which == "F" {
                    PredLocus::F { guard, guard_locus, locus }
                } else {
                    PredLocus::U { guard, guard_locus, locus }
                }
            };
            self.expect_sym(")")?;
            self.expect_sym("|->")?;
            let ket = self.ket()?;
            return Ok(Pred::Maps { locus, ket });
        }
        let save = self.pos;
        if let Ok(l) = self.locus() {
            if self.eat_sym("|->") {
                let ket = self.ket()?;
                return Ok(Pred::Maps { locus: PredLocus::Plain(l), ket });
            }
        }
        self.pos = save;
        let lhs = self.aexp(true)?;
        let Some(op) = self.cmp_op() else {
            return self.err("expected a comparison or `|->`");
        };
        let rhs = self.aexp(true)?;
        Ok(Pred::Cmp { op, lhs, rhs })
    }

    fn is_cmp_start(&self) -> bool {
        matches!(self.peek(), Tok::Sym("<") | Tok::Sym("<=") | Tok::Sym("==") | Tok::Sym("+")
            | Tok::Sym("-") | Tok::Sym("/") | Tok::Sym("%") | Tok::Sym("^"))
    }

    fn ket(&mut self) -> Result<KetExp> {
        let mut lhs = self.kterm()?;
        while self.eat_sym("+") {
            let rhs = self.kterm()?;
            lhs = KetExp::Add(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn kterm(&mut self) -> Result<KetExp> {
        if self.is_kw("sum") {
            self.bump();
            let var = self.ident()?;
            self.expect_kw("in")?;
            self.expect_sym("[")?;
            let lo = self.aexp(false)?;
            self.expect_sym(",")?;
            let hi = self.aexp(false)?;
            self.expect_sym(")")?;
            self.expect_sym(":")?;
            let body = self.kterm()?;
            return Ok(KetExp::Sum { var, lo, hi, body: Box::new(body) });
        }
        if self.is_sym("(") {
            let save = self.pos;
            self.bump();
            if let Ok(k) = self.ket() {
                if self.eat_sym(")") && !self.is_sym("|") {
                    return Ok(k);
                }
            }
            self.pos = save;
        }
        let amp = if self.is_sym("|") { None } else { Some(self.amp_prod()?) };
        let mut bases = Vec::new();
        while self.eat_sym("|") {
            bases.push(self.basis()?);
            while self.eat_sym(",") {
                bases.push(self.basis()?);
            }
            self.expect_sym(">")?;
        }
        if bases.is_empty() {
            return self.err("expected a ket `|...>`");
        }
        Ok(KetExp::Term { amp, bases })
    }

    fn basis(&mut self) -> Result<BasisExp> {
        match self.peek().clone() {
            Tok::Num(s) => match bits_from_str(&s) {
                Some(b) => {
                    self.bump();
                    Ok(BasisExp::Lit(b))
                }
                None => self.err("expected a bitstring"),
            },
            Tok::Ident(s) if s == "rep" || s == "bits" => {
                self.bump();
                let (a, b) = self.two_args()?;
                Ok(if s == "rep" { BasisExp::Rep(a, b) } else { BasisExp::Bits(a, b) })
            }
            _ => self.err("expected a basis"),
        }
    }

    fn amp_full(&mut self) -> Result<AmpExp> {
        let mut lhs = self.amp_prod()?;
        loop {
            let op = if self.is_sym("+") {
                ArithOp::Add
            } else if self.is_sym("-") {
                ArithOp::Sub
            } else {
                break;
            };
            self.bump();
            let rhs = self.amp_prod()?;
            lhs = AmpExp::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn amp_prod(&mut self) -> Result<AmpExp> {
        let mut lhs = self.amp_unary()?;
        loop {
            let op = if self.is_sym("*") {
                ArithOp::Mul
            } else if self.is_sym("/") {
                ArithOp::Div
            } else {
                break;
            };
            self.bump();
            let rhs = self.amp_unary()?;
            lhs = AmpExp::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn amp_unary(&mut self) -> Result<AmpExp> {
        if self.eat_sym("-") {
            return Ok(AmpExp::Neg(Box::new(self.amp_unary()?)));
        }
        let base = self.amp_atom()?;
        if self.eat_sym("^") {
            let e = self.amp_unary()?;
            return Ok(AmpExp::Bin(ArithOp::Pow, Box::new(base), Box::new(e)));
        }
        Ok(base)
    }

    fn amp_atom(&mut self) -> Result<AmpExp> {
        match self.peek().clone() {
            Tok::Num(s) => match s.parse::<f64>() {
                Ok(v) => {
                    self.bump();
                    Ok(AmpExp::Num(v))
                }
                Err(_) => self.err("bad number"),
            },
            Tok::Sym("(") => {
                self.bump();
                let e = self.amp_full()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "sqrt" || s == "alpha" => {
                self.bump();
                self.expect_sym("(")?;
                let e = self.amp_full()?;
                self.expect_sym(")")?;
                Ok(if s == "sqrt" { AmpExp::Sqrt(Box::new(e)) } else { AmpExp::Alpha(Box::new(e)) })
            }
            Tok::Ident(s) if !is_reserved(&s) => {
                self.bump();
                Ok(AmpExp::Var(s))
            }
            _ => self.err("expected an amplitude"),
        }
    }
}

fn finish<T>(p: &Parser, v: T) -> Result<T> {
    if *p.peek() != Tok::Eof {
        return p.err("unexpected trailing input");
    }
    Ok(v)
}

/// Parses a `.qfy` program.
pub fn parse_program(text: &str) -> Result<Program> {
    let mut p = Parser::new(text)?;
    let prog = p.program()?;
    finish(&p, prog)
}

/// Parses a standalone predicate.
pub fn parse_predicate(text: &str) -> Result<Pred> {
    let mut p = Parser::new(text)?;
    let pred = p.pred()?;
    finish(&p, pred)
}

/// Parses a standalone OQASM instruction sequence (without braces).
pub fn parse_oqasm(text: &str) -> Result<OqInstr> {
    let mut p = Parser::new(&format!("{{{text}\n}}"))?;
    let ins = p.oq_block()?;
    finish(&p, ins)
}

/// Parses a standalone arithmetic expression.
pub fn parse_aexp(text: &str) -> Result<AExp> {
    let mut p = Parser::new(text)?;
    let e = p.aexp(false)?;
    finish(&p, e)
}

/// Parses a standalone Boolean guard.
pub fn parse_bexp(text: &str) -> Result<BExp> {
    let mut p = Parser::new(text)?;
    let e = p.bexp()?;
    finish(&p, e)
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

/// Prints an arithmetic expression with minimal parentheses.
/// Binary operators are left-associative except `^`.
fn write_aexp(out: &mut String, e: &AExp, no_star: bool) {
    write_aexp_prec(out, e, 0, false, no_star)
}

fn write_aexp_prec(out: &mut String, e: &AExp, ctx: u8, right: bool, no_star: bool) {
    match e {
        AExp::Num(v) => {
            let _ = write!(out, "{v}");
        }
        AExp::Var(v) => out.push_str(v),
        AExp::Qubits(r) => write_range(out, r),
        AExp::Bin(op, a, b) => {
            let p = op.prec();
            let needs = p < ctx
                || (p == ctx && right && *op != ArithOp::Pow)
                || (p == ctx && !right && *op == ArithOp::Pow)
                || (no_star && *op == ArithOp::Mul);
            if needs {
                out.push('(');
            }
            let inner_no_star = no_star && !needs;
            write_aexp_prec(out, a, p, false, inner_no_star);
            if *op == ArithOp::Pow {
                out.push('^');
            } else {
                let _ = write!(out, " {} ", op.symbol());
            }
            write_aexp_prec(out, b, p, true, inner_no_star);
            if needs {
                out.push(')');
            }
        }
    }
}

fn write_range(out: &mut String, r: &RangeExp) {
    match r {
        RangeExp::Whole(v) => out.push_str(v),
        RangeExp::Single(v, i) => {
            out.push_str(v);
            out.push('[');
            write_aexp(out, i, false);
            out.push(']');
        }
        RangeExp::Slice(v, a, b) => {
            out.push_str(v);
            out.push('[');
            write_aexp(out, a, false);
            out.push(',');
            write_aexp(out, b, false);
            out.push(')');
        }
    }
}

fn write_locus(out: &mut String, l: &LocusExp) {
    for (i, r) in l.0.iter().enumerate() {
        if i > 0 {
            out.push_str(" ++ ");
        }
        write_range(out, r);
    }
}

fn write_bexp(out: &mut String, b: &BExp) {
    match b {
        BExp::Bool(v) => out.push_str(if *v { "true" } else { "false" }),
        BExp::Bit(r) => write_range(out, r),
        BExp::QCmp { op, lhs, rhs, target } => {
            write_aexp(out, lhs, false);
            let _ = write!(out, " {} ", op.symbol());
            write_aexp(out, rhs, false);
            out.push_str(" @ ");
            write_range(out, target);
        }
        BExp::CCmp { op, lhs, rhs } => {
            write_aexp(out, lhs, false);
            let _ = write!(out, " {} ", op.symbol());
            write_aexp(out, rhs, false);
        }
        BExp::Not(b) => {
            out.push('!');
            write_bexp(out, b);
        }
    }
}

fn write_oq(out: &mut String, ins: &OqInstr, indent: usize) {
    let pad = "    ".repeat(indent);
    match ins {
        OqInstr::Seq(items) => {
            for i in items {
                write_oq(out, i, indent);
            }
        }
        OqInstr::Cu(p, body) => {
            let _ = writeln!(out, "{pad}CU {p} {{");
            write_oq(out, body, indent + 1);
            let _ = writeln!(out, "{pad}}}");
        }
        other => {
            let _ = writeln!(out, "{pad}{other}");
        }
    }
}

fn write_unitary(out: &mut String, u: &Unitary, indent: usize) {
    match u {
        Unitary::H => out.push('H'),
        Unitary::Qft => out.push_str("QFT"),
        Unitary::Rqft => out.push_str("RQFT"),
        Unitary::Dis => out.push_str("dis"),
        Unitary::Reduce { bits, n } => {
            let _ = write!(out, "reduce {} {n}", bits_to_string(bits));
        }
        Unitary::Oracle(Oracle::AddConst(k)) => {
            out.push('+');
            write_aexp_prec(out, k, 2, false, false);
        }
        Unitary::Oracle(Oracle::MulMod { a, n }) | Unitary::Oracle(Oracle::PowMod { a, n }) => {
            out.push_str(if matches!(u, Unitary::Oracle(Oracle::MulMod { .. })) { "mulmod(" } else { "powmod(" });
            write_aexp(out, a, false);
            out.push_str(", ");
            write_aexp(out, n, false);
            out.push(')');
        }
        Unitary::Oracle(Oracle::Oqasm(ins)) => {
            out.push_str("oqasm {\n");
            write_oq(out, ins, indent + 1);
            out.push_str(&"    ".repeat(indent));
            out.push('}');
        }
    }
}

fn write_amp(out: &mut String, a: &AmpExp, ctx: u8, right: bool) {
    match a {
        AmpExp::Num(v) => {
            let _ = write!(out, "{v}");
        }
        AmpExp::Var(v) => out.push_str(v),
        AmpExp::Neg(x) => {
            let needs = ctx > 2;
            if needs {
                out.push('(');
            }
            out.push('-');
            write_amp(out, x, 3, false);
            if needs {
                out.push(')');
            }
        }
        AmpExp::Sqrt(x) => {
            out.push_str("sqrt(");
            write_amp(out, x, 0, false);
            out.push(')');
        }
        AmpExp::Alpha(x) => {
            out.push_str("alpha(");
            write_amp(out, x, 0, false);
            out.push(')');
        }
        AmpExp::Bin(op, x, y) => {
            let p = op.prec();
            // Top-level `+`/`-` are never printed bare before a ket.
            let needs = p < ctx.max(2)
                || (p == ctx && right && *op != ArithOp::Pow)
                || (p == ctx && !right && *op == ArithOp::Pow);
            if needs {
                out.push('(');
            }
            let inner = if needs { 0 } else { p };
            write_amp(out, x, if needs { p } else { inner.max(p) }, false);
            if *op == ArithOp::Pow {
                out.push('^');
            } else {
                let _ = write!(out, " {} ", op.symbol());
            }
            write_amp(out, y, p, true);
            if needs {
                out.push(')');
            }
        }
    }
}

fn write_basis(out: &mut String, b: &BasisExp) {
    match b {
        BasisExp::Lit(bits) => out.push_str(&bits_to_string(bits)),
        BasisExp::Rep(a, n) | BasisExp::Bits(a, n) => {
            out.push_str(if matches!(b, BasisExp::Rep(..)) { "rep(" } else { "bits(" });
            write_aexp(out, a, false);
            out.push_str(", ");
            write_aexp(out, n, false);
            out.push(')');
        }
    }
}

fn write_ket(out: &mut String, k: &KetExp, as_term: bool) {
    match k {
        KetExp::Term { amp, bases } => {
            if let Some(a) = amp {
                write_amp(out, a, 2, false);
                out.push(' ');
            }
            for b in bases {
                out.push('|');
                write_basis(out, b);
                out.push('>');
            }
        }
        KetExp::Sum { var, lo, hi, body } => {
            let _ = write!(out, "sum {var} in [");
            write_aexp(out, lo, false);
            out.push(',');
            write_aexp(out, hi, false);
            out.push_str("): ");
            write_ket(out, body, true);
        }
        KetExp::Add(a, b) => {
            if as_term {
                out.push('(');
            }
            write_ket(out, a, false);
            out.push_str(" + ");
            write_ket(out, b, true);
            if as_term {
                out.push(')');
            }
        }
    }
}

fn write_pred_locus(out: &mut String, l: &PredLocus) {
    match l {
        PredLocus::Plain(l) => write_locus(out, l),
        PredLocus::M { var, n, locus } => {
            let _ = write!(out, "M({var}, ");
            write_aexp(out, n, false);
            out.push_str(", ");
            write_locus(out, locus);
            out.push(')');
        }
        PredLocus::F { guard, guard_locus, locus } | PredLocus::U { guard, guard_locus, locus } => {
            out.push_str(if matches!(l, PredLocus::F { .. }) { "F(" } else { "U(" });
            write_bexp(out, guard);
            out.push_str(", ");
            write_locus(out, guard_locus);
            out.push_str(", ");
            write_locus(out, locus);
            out.push(')');
        }
    }
}

/// `ctx`: 0 top, 1 inside `*` right operand, 2 inside `&&`.
fn write_pred(out: &mut String, p: &Pred, ctx: u8) {
    match p {
        Pred::True => out.push_str("true"),
        Pred::Cmp { op, lhs, rhs } => {
            write_aexp(out, lhs, true);
            let _ = write!(out, " {} ", op.symbol());
            write_aexp(out, rhs, true);
        }
        Pred::Maps { locus, ket } => {
            write_pred_locus(out, locus);
            out.push_str(" |-> ");
            write_ket(out, ket, false);
        }
        Pred::Sep(a, b) => {
            let needs = ctx >= 1;
            if needs {
                out.push('(');
            }
            write_pred(out, a, 0);
            out.push_str(" * ");
            write_pred(out, b, 1);
            if needs {
                out.push(')');
            }
        }
        Pred::And(a, b) => {
            let needs = ctx >= 2;
            if needs {
                out.push('(');
            }
            write_pred(out, a, 1);
            out.push_str(" && ");
            write_pred(out, b, 2);
            if needs {
                out.push(')');
            }
        }
    }
}

fn write_block(out: &mut String, body: &[Stmt], indent: usize) {
    out.push_str("{\n");
    for s in body {
        write_stmt(out, s, indent + 1);
    }
    out.push_str(&"    ".repeat(indent));
    out.push('}');
}

fn write_stmt(out: &mut String, s: &Stmt, indent: usize) {
    out.push_str(&"    ".repeat(indent));
    match s {
        Stmt::Skip => out.push_str("skip;"),
        Stmt::LetC { var, value, body } => {
            let _ = write!(out, "let {var} = ");
            write_aexp(out, value, false);
            out.push_str(" in ");
            write_block(out, body, indent);
        }
        Stmt::LetM { var, target, body } => {
            let _ = write!(out, "let {var} = measure({target}) in ");
            write_block(out, body, indent);
        }
        Stmt::Apply { locus, op } => {
            write_locus(out, locus);
            out.push_str(" *= ");
            write_unitary(out, op, indent);
            out.push(';');
        }
        Stmt::QIf { guard, body } => {
            out.push_str("if (");
            write_bexp(out, guard);
            out.push_str(") ");
            write_block(out, body, indent);
        }
        Stmt::CIf { guard, then_branch, else_branch } => {
            out.push_str("if (");
            write_bexp(out, guard);
            out.push_str(") ");
            write_block(out, then_branch, indent);
            if !else_branch.is_empty() {
                out.push_str(" else ");
                write_block(out, else_branch, indent);
            }
        }
        Stmt::For { var, lo, hi, guard, body } => {
            let _ = write!(out, "for {var} in [");
            write_aexp(out, lo, false);
            out.push(',');
            write_aexp(out, hi, false);
            out.push(')');
            if let Some(g) = guard {
                out.push_str(" && ");
                write_bexp(out, g);
            }
            out.push(' ');
            write_block(out, body, indent);
        }
        Stmt::Assert(p) => {
            out.push_str("assert { ");
            write_pred(out, p, 0);
            out.push_str(" };");
        }
        Stmt::Call { name, args } => {
            let _ = write!(out, "{name}(");
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_aexp(out, a, false);
            }
            out.push_str(");");
        }
    }
    out.push('\n');
}

/// Prints a program in canonical form, one statement per line.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        let _ = writeln!(out, "qubit {}[{}];", d.name, d.size);
    }
    for d in &p.procs {
        let _ = write!(out, "def {}({}) ", d.name, d.params.join(", "));
        write_block(&mut out, &d.body, 0);
        out.push('\n');
    }
    for s in &p.body {
        write_stmt(&mut out, s, 0);
    }
    out
}

/// Prints a single statement (with trailing newline).
pub fn print_stmt(s: &Stmt) -> String {
    let mut out = String::new();
    write_stmt(&mut out, s, 0);
    out
}

/// Prints a predicate.
pub fn print_pred(p: &Pred) -> String {
    let mut out = String::new();
    write_pred(&mut out, p, 0);
    out
}

/// Prints an OQASM instruction sequence, one instruction per line.
pub fn print_oqasm(ins: &OqInstr) -> String {
    let mut out = String::new();
    write_oq(&mut out, ins, 0);
    out
}

impl fmt::Display for AExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_aexp(&mut s, self, false);
        f.write_str(&s)
    }
}

impl fmt::Display for BExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_bexp(&mut s, self);
        f.write_str(&s)
    }
}

impl fmt::Display for LocusExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_locus(&mut s, self);
        f.write_str(&s)
    }
}

impl fmt::Display for RangeExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_range(&mut s, self);
        f.write_str(&s)
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_pred(self))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}

/// Expands procedure calls by inlining.  Quantum parameters are renamed to
/// the argument array; classical parameters become `let` bindings.
pub fn expand_calls(p: &Program) -> Result<Program> {
    fn go(stmts: &[Stmt], p: &Program, depth: usize) -> Result<Vec<Stmt>> {
        if depth > 32 {
            return Err(Error::TypeMismatch("procedure inlining too deep".into()));
        }
        let mut out = Vec::new();
        for s in stmts {
            out.push(match s {
                Stmt::Call { name, args } => {
                    let def = p
                        .procs
                        .iter()
                        .find(|d| &d.name == name)
                        .ok_or_else(|| Error::UnknownProcedure(name.clone()))?;
                    if def.params.len() != args.len() {
                        return Err(Error::TypeMismatch(format!(
                            "`{name}` expects {} arguments, got {}",
                            def.params.len(),
                            args.len()
                        )));
                    }
                    let mut body = go(&def.body, p, depth + 1)?;
                    let mut lets = Vec::new();
                    for (param, arg) in def.params.iter().zip(args) {
                        match arg {
                            AExp::Var(a) if p.decls.iter().any(|d| &d.name == a) => {
                                body = body.iter().map(|s| rename_stmt(s, param, a)).collect();
                            }
                            _ => lets.push((param.clone(), arg.clone())),
                        }
                    }
                    for (param, arg) in lets.into_iter().rev() {
                        body = vec![Stmt::LetC { var: param, value: arg, body }];
                    }
                    return_block(body)
                }
                Stmt::LetC { var, value, body } => {
                    Stmt::LetC { var: var.clone(), value: value.clone(), body: go(body, p, depth)? }
                }
                Stmt::LetM { var, target, body } => {
                    Stmt::LetM { var: var.clone(), target: target.clone(), body: go(body, p, depth)? }
                }
                Stmt::QIf { guard, body } => Stmt::QIf { guard: guard.clone(), body: go(body, p, depth)? },
                Stmt::CIf { guard, then_branch, else_branch } => Stmt::CIf {
                    guard: guard.clone(),
                    then_branch: go(then_branch, p, depth)?,
                    else_branch: go(else_branch, p, depth)?,
                },
                Stmt::For { var, lo, hi, guard, body } => Stmt::For {
                    var: var.clone(),
                    lo: lo.clone(),
                    hi: hi.clone(),
                    guard: guard.clone(),
                    body: go(body, p, depth)?,
                },
                other => other.clone(),
            });
        }
        Ok(out)
    }
    // A call expands to a block; a classical `if (true)` keeps it one statement.
    fn return_block(body: Vec<Stmt>) -> Stmt {
        match <[Stmt; 1]>::try_from(body) {
            Ok([s]) => s,
            Err(body) => Stmt::CIf { guard: BExp::Bool(true), then_branch: body, else_branch: Vec::new() },
        }
    }
    Ok(Program { decls: p.decls.clone(), procs: Vec::new(), body: go(&p.body, p, 0)? })
}

fn rename_range(r: &RangeExp, from: &str, to: &str) -> RangeExp {
    let v = |x: &str| if x == from { to.to_string() } else { x.to_string() };
    match r {
        RangeExp::Whole(x) => RangeExp::Whole(v(x)),
        RangeExp::Single(x, i) => RangeExp::Single(v(x), rename_aexp(i, from, to)),
        RangeExp::Slice(x, a, b) => RangeExp::Slice(v(x), rename_aexp(a, from, to), rename_aexp(b, from, to)),
    }
}

fn rename_aexp(e: &AExp, from: &str, to: &str) -> AExp {
    match e {
        AExp::Var(x) if x == from => AExp::Var(to.to_string()),
        AExp::Qubits(r) => AExp::Qubits(Box::new(rename_range(r, from, to))),
        AExp::Bin(op, a, b) => AExp::bin(*op, rename_aexp(a, from, to), rename_aexp(b, from, to)),
        other => other.clone(),
    }
}

fn rename_bexp(b: &BExp, from: &str, to: &str) -> BExp {
    match b {
        BExp::Bool(v) => BExp::Bool(*v),
        BExp::Bit(r) => BExp::Bit(rename_range(r, from, to)),
        BExp::QCmp { op, lhs, rhs, target } => BExp::QCmp {
            op: *op,
            lhs: rename_aexp(lhs, from, to),
            rhs: rename_aexp(rhs, from, to),
            target: rename_range(target, from, to),
        },
        BExp::CCmp { op, lhs, rhs } => {
            BExp::CCmp { op: *op, lhs: rename_aexp(lhs, from, to), rhs: rename_aexp(rhs, from, to) }
        }
        BExp::Not(x) => BExp::Not(Box::new(rename_bexp(x, from, to))),
    }
}

fn rename_locus(l: &LocusExp, from: &str, to: &str) -> LocusExp {
    LocusExp(l.0.iter().map(|r| rename_range(r, from, to)).collect())
}

fn rename_ket(k: &KetExp, from: &str, to: &str) -> KetExp {
    match k {
        KetExp::Term { amp, bases } => KetExp::Term {
            amp: amp.clone(),
            bases: bases
                .iter()
                .map(|b| match b {
                    BasisExp::Lit(x) => BasisExp::Lit(x.clone()),
                    BasisExp::Rep(a, n) => BasisExp::Rep(rename_aexp(a, from, to), rename_aexp(n, from, to)),
                    BasisExp::Bits(a, n) => BasisExp::Bits(rename_aexp(a, from, to), rename_aexp(n, from, to)),
                })
                .collect(),
        },
        KetExp::Sum { var, lo, hi, body } => KetExp::Sum {
            var: var.clone(),
            lo: rename_aexp(lo, from, to),
            hi: rename_aexp(hi, from, to),
            body: Box::new(rename_ket(body, from, to)),
        },
        KetExp::Add(a, b) => KetExp::Add(Box::new(rename_ket(a, from, to)), Box::new(rename_ket(b, from, to))),
    }
}

fn rename_pred(p: &Pred, from: &str, to: &str) -> Pred {
    match p {
        Pred::True => Pred::True,
        Pred::Cmp { op, lhs, rhs } => {
            Pred::Cmp { op: *op, lhs: rename_aexp(lhs, from, to), rhs: rename_aexp(rhs, from, to) }
        }
        Pred::Maps { locus, ket } => Pred::Maps {
            locus: match locus {
                PredLocus::Plain(l) => PredLocus::Plain(rename_locus(l, from, to)),
                PredLocus::M { var, n, locus } => {
                    PredLocus::M { var: var.clone(), n: rename_aexp(n, from, to), locus: rename_locus(locus, from, to) }
                }
                PredLocus::F { guard, guard_locus, locus } => PredLocus::F {
                    guard: rename_bexp(guard, from, to),
                    guard_locus: rename_locus(guard_locus, from, to),
                    locus: rename_locus(locus, from, to),
                },
                PredLocus::U { guard, guard_locus, locus } => PredLocus::U {
                    guard: rename_bexp(guard, from, to),
                    guard_locus: rename_locus(guard_locus, from, to),
                    locus: rename_locus(locus, from, to),
                },
            },
            ket: rename_ket(ket, from, to),
        },
        Pred::And(a, b) => Pred::And(Box::new(rename_pred(a, from, to)), Box::new(rename_pred(b, from, to))),
        Pred::Sep(a, b) => Pred::Sep(Box::new(rename_pred(a, from, to)), Box::new(rename_pred(b, from, to))),
    }
}

fn rename_oq(ins: &OqInstr, from: &str, to: &str) -> OqInstr {
    let v = |x: &String| if x == from { to.to_string() } else { x.clone() };
    let p = |q: &Pos| Pos { var: v(&q.var), idx: q.idx };
    match ins {
        OqInstr::Id(q) => OqInstr::Id(p(q)),
        OqInstr::X(q) => OqInstr::X(p(q)),
        OqInstr::Rz(k, q) => OqInstr::Rz(*k, p(q)),
        OqInstr::Rzinv(k, q) => OqInstr::Rzinv(*k, p(q)),
        OqInstr::Sr(m, x) => OqInstr::Sr(*m, v(x)),
        OqInstr::Srinv(m, x) => OqInstr::Srinv(*m, v(x)),
        OqInstr::Qft(n, x) => OqInstr::Qft(*n, v(x)),
        OqInstr::Rqft(n, x) => OqInstr::Rqft(*n, v(x)),
        OqInstr::Cu(q, b) => OqInstr::Cu(p(q), Box::new(rename_oq(b, from, to))),
        OqInstr::Lshift(x) => OqInstr::Lshift(v(x)),
        OqInstr::Rshift(x) => OqInstr::Rshift(v(x)),
        OqInstr::Rev(x) => OqInstr::Rev(v(x)),
        OqInstr::Seq(items) => OqInstr::Seq(items.iter().map(|i| rename_oq(i, from, to)).collect()),
    }
}

fn rename_stmt(s: &Stmt, from: &str, to: &str) -> Stmt {
    let block = |b: &[Stmt]| b.iter().map(|s| rename_stmt(s, from, to)).collect::<Vec<_>>();
    match s {
        Stmt::Skip => Stmt::Skip,
        Stmt::LetC { var, value, body } => {
            Stmt::LetC { var: var.clone(), value: rename_aexp(value, from, to), body: block(body) }
        }
        Stmt::LetM { var, target, body } => Stmt::LetM {
            var: var.clone(),
            target: if target == from { to.to_string() } else { target.clone() },
            body: block(body),
        },
        Stmt::Apply { locus, op } => Stmt::Apply {
            locus: rename_locus(locus, from, to),
            op: match op {
                Unitary::Oracle(Oracle::AddConst(k)) => Unitary::Oracle(Oracle::AddConst(rename_aexp(k, from, to))),
                Unitary::Oracle(Oracle::MulMod { a, n }) => Unitary::Oracle(Oracle::MulMod {
                    a: rename_aexp(a, from, to),
                    n: rename_aexp(n, from, to),
                }),
                Unitary::Oracle(Oracle::PowMod { a, n }) => Unitary::Oracle(Oracle::PowMod {
                    a: rename_aexp(a, from, to),
                    n: rename_aexp(n, from, to),
                }),
                Unitary::Oracle(Oracle::Oqasm(ins)) => Unitary::Oracle(Oracle::Oqasm(rename_oq(ins, from, to))),
                other => other.clone(),
            },
        },
        Stmt::QIf { guard, body } => Stmt::QIf { guard: rename_bexp(guard, from, to), body: block(body) },
        Stmt::CIf { guard, then_branch, else_branch } => Stmt::CIf {
            guard: rename_bexp(guard, from, to),
            then_branch: block(then_branch),
            else_branch: block(else_branch),
        },
        Stmt::For { var, lo, hi, guard, body } => Stmt::For {
            var: var.clone(),
            lo: rename_aexp(lo, from, to),
            hi: rename_aexp(hi, from, to),
            guard: guard.as_ref().map(|g| rename_bexp(g, from, to)),
            body: block(body),
        },
        Stmt::Assert(p) => Stmt::Assert(rename_pred(p, from, to)),
        Stmt::Call { name, args } => {
            Stmt::Call { name: name.clone(), args: args.iter().map(|a| rename_aexp(a, from, to)).collect() }
        }
    }
}
