//! Kind environments, expression kind checking, free-variable loci, and
//! locus-domain well-formedness.
//!
//! Classical (`C`) variables carry their concrete value: Qafny evaluates them
//! during type checking, so every range index resolves to a number before a
//! locus is formed.  Measurement (`M`) variables may be unknown (while type
//! checking) or bound to an outcome (while interpreting).

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::qstate::{Locus, Qubit, Range};
use crate::surface::{AExp, ArithOp, BExp, LocusExp, QubitDecl, RangeExp, Stmt};

/// The kind of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Classical compile-time scalar.
    C,
    /// Measurement outcome.
    M,
    /// Qubit array of the given size.
    Q(usize),
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::C => write!(f, "C"),
            Kind::M => write!(f, "M"),
            Kind::Q(n) => write!(f, "Q {n}"),
        }
    }
}

/// A measurement outcome: probability and measured value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MVal {
    pub prob: f64,
    pub outcome: u64,
}

/// The binding of a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    C(i64),
    /// `None` while the outcome is not known (type checking, compilation).
    M(Option<MVal>),
}

/// Kind environment Ω, extended with the values of classical scalars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KindEnv {
    arrays: Vec<(String, usize)>,
    scalars: BTreeMap<String, Scalar>,
}

impl KindEnv {
    /// Builds Ω from qubit declarations; every array must have at least one qubit.
    pub fn from_decls(decls: &[QubitDecl]) -> Result<Self> {
        let mut env = KindEnv::default();
        for d in decls {
            if d.size == 0 {
                return Err(Error::KindMismatch(format!("array `{}` must have at least one qubit", d.name)));
            }
            if env.arrays.iter().any(|(n, _)| n == &d.name) {
                return Err(Error::DuplicateDeclaration(d.name.clone()));
            }
            env.arrays.push((d.name.clone(), d.size));
        }
        Ok(env)
    }

    /// Declared arrays in declaration order.
    pub fn arrays(&self) -> &[(String, usize)] {
        &self.arrays
    }

    pub fn kind(&self, v: &str) -> Result<Kind> {
        if let Some((_, n)) = self.arrays.iter().find(|(a, _)| a == v) {
            return Ok(Kind::Q(*n));
        }
        match self.scalars.get(v) {
            Some(Scalar::C(_)) => Ok(Kind::C),
            Some(Scalar::M(_)) => Ok(Kind::M),
            None => Err(Error::UnboundVariable(v.to_string())),
        }
    }

    pub fn scalar(&self, v: &str) -> Option<Scalar> {
        self.scalars.get(v).copied()
    }

    pub fn array_size(&self, v: &str) -> Result<usize> {
        match self.kind(v)? {
            Kind::Q(n) => Ok(n),
            k => Err(Error::KindMismatch(format!("`{v}` has kind {k}, expected a qubit array"))),
        }
    }

    /// Position of an array in declaration order.
    pub fn decl_index(&self, v: &str) -> Option<usize> {
        self.arrays.iter().position(|(a, _)| a == v)
    }

    /// Canonical sort key of a qubit: declaration order, then index.
    pub fn canonical_key(&self, q: &Qubit) -> (usize, usize) {
        (self.decl_index(&q.0).unwrap_or(usize::MAX), q.1)
    }

    fn fresh(&self, v: &str) -> Result<()> {
        if self.arrays.iter().any(|(a, _)| a == v) || self.scalars.contains_key(v) {
            return Err(Error::KindMismatch(format!("binder `{v}` is not fresh")));
        }
        Ok(())
    }

    /// Extends Ω with a classical binding; the name must be fresh.
    pub fn with_c(&self, v: &str, value: i64) -> Result<Self> {
        self.fresh(v)?;
        let mut e = self.clone();
        e.scalars.insert(v.to_string(), Scalar::C(value));
        Ok(e)
    }

    /// Extends Ω with a measurement binding; the name must be fresh.
    pub fn with_m(&self, v: &str, value: Option<MVal>) -> Result<Self> {
        self.fresh(v)?;
        let mut e = self.clone();
        e.scalars.insert(v.to_string(), Scalar::M(value));
        Ok(e)
    }

    /// The whole-array locus `x[0,n)`.
    pub fn whole(&self, v: &str) -> Result<Locus> {
        Ok(Locus::single(v, 0, self.array_size(v)?))
    }

    /// Sorts qubits into canonical order.
    pub fn canonical_qubits(&self, locus: &Locus) -> Vec<Qubit> {
        let mut qs = locus.qubits();
        qs.sort_by_key(|q| self.canonical_key(q));
        qs
    }
}

fn checked(op: ArithOp, a: i64, b: i64) -> Result<i64> {
    let ovf = || Error::Arithmetic(format!("overflow in {a} {op:?} {b}"));
    match op {
        ArithOp::Add => a.checked_add(b).ok_or_else(ovf),
        ArithOp::Sub => a.checked_sub(b).ok_or_else(ovf),
        ArithOp::Mul => a.checked_mul(b).ok_or_else(ovf),
        ArithOp::Div => {
            if b == 0 {
                Err(Error::Arithmetic("division by zero".into()))
            } else {
                Ok(a.div_euclid(b))
            }
        }
        ArithOp::Mod => {
            if b == 0 {
                Err(Error::Arithmetic("modulo by zero".into()))
            } else {
                Ok(a.rem_euclid(b))
            }
        }
        ArithOp::Pow => {
            let e = u32::try_from(b).map_err(|_| Error::Arithmetic(format!("bad exponent {b}")))?;
            a.checked_pow(e).ok_or_else(ovf)
        }
    }
}

/// Evaluates an arithmetic expression, reading quantum ranges through `read`.
pub fn eval_aexp_with(env: &KindEnv, e: &AExp, read: &mut dyn FnMut(&Range) -> Result<i64>) -> Result<i64> {
    match e {
        AExp::Num(v) => Ok(*v),
        AExp::Var(v) => match env.kind(v)? {
            Kind::Q(n) => read(&Range::new(v.clone(), 0, n)),
            _ => match env.scalar(v) {
                Some(Scalar::C(x)) => Ok(x),
                Some(Scalar::M(Some(m))) => i64::try_from(m.outcome)
                    .map_err(|_| Error::Arithmetic(format!("outcome of `{v}` too large"))),
                _ => Err(Error::KindMismatch(format!("measurement variable `{v}` has no value yet"))),
            },
        },
        AExp::Qubits(r) => {
            let r = resolve_range(env, r)?;
            read(&r)
        }
        AExp::Bin(op, a, b) => {
            let x = eval_aexp_with(env, a, read)?;
            let y = eval_aexp_with(env, b, read)?;
            checked(*op, x, y)
        }
    }
}

/// Evaluates a classical expression; quantum ranges are a kind error.
pub fn eval_const(env: &KindEnv, e: &AExp) -> Result<i64> {
    eval_aexp_with(env, e, &mut |r| {
        Err(Error::KindMismatch(format!("quantum range {r} used as a classical value")))
    })
}

/// Evaluates a guard classically; `None` if it reads qubits.
pub fn eval_classical_bexp(env: &KindEnv, b: &BExp) -> Result<bool> {
    match b {
        BExp::Bool(v) => Ok(*v),
        BExp::CCmp { op, lhs, rhs } => Ok(op.eval(eval_const(env, lhs)?, eval_const(env, rhs)?)),
        BExp::Not(x) => Ok(!eval_classical_bexp(env, x)?),
        other => Err(Error::KindMismatch(format!("guard `{other}` reads qubits"))),
    }
}

/// Resolves a range expression to a concrete, in-bounds range.
pub fn resolve_range(env: &KindEnv, r: &RangeExp) -> Result<Range> {
    let n = env.array_size(r.var())?;
    let (lo, hi) = match r {
        RangeExp::Whole(_) => (0, n as i64),
        RangeExp::Single(_, i) => {
            let i = eval_const(env, i)?;
            (i, i.saturating_add(1))
        }
        RangeExp::Slice(_, a, b) => (eval_const(env, a)?, eval_const(env, b)?),
    };
    if lo < 0 || hi < lo || hi as u64 > n as u64 {
        return Err(Error::RangeOutOfBounds(format!("{}[{lo},{hi}) of size {n}", r.var())));
    }
    Ok(Range::new(r.var(), lo as usize, hi as usize))
}

/// Resolves a locus expression; its ranges must be pairwise disjoint.
pub fn resolve_locus(env: &KindEnv, l: &LocusExp) -> Result<Locus> {
    let ranges = l.0.iter().map(|r| resolve_range(env, r)).collect::<Result<Vec<_>>>()?;
    for (i, a) in ranges.iter().enumerate() {
        for b in &ranges[i + 1..] {
            if a.overlaps(b) {
                return Err(Error::OverlappingLoci(format!("{a} and {b}")));
            }
        }
    }
    Ok(Locus::new(ranges))
}

/// Result of kind checking a term.
#[derive(Debug, Clone, PartialEq)]
pub enum KindOf {
    /// A scalar term of kind `C` or `M`.
    Scalar(Kind),
    /// A quantum term and the disjoint union of the ranges it reads.
    Quantum(Locus),
}

fn union_disjoint(a: Locus, b: Locus) -> Result<Locus> {
    if a.intersects(&b) {
        return Err(Error::OverlappingQuantumOperands(format!("{a} and {b}")));
    }
    Ok(a.concat(&b))
}

fn combine(a: KindOf, b: KindOf) -> Result<KindOf> {
    Ok(match (a, b) {
        (KindOf::Quantum(x), KindOf::Quantum(y)) => KindOf::Quantum(union_disjoint(x, y)?),
        (KindOf::Quantum(x), _) | (_, KindOf::Quantum(x)) => KindOf::Quantum(x),
        (KindOf::Scalar(Kind::M), _) | (_, KindOf::Scalar(Kind::M)) => KindOf::Scalar(Kind::M),
        _ => KindOf::Scalar(Kind::C),
    })
}

/// Kind of an arithmetic expression.
pub fn kind_of_aexp(env: &KindEnv, e: &AExp) -> Result<KindOf> {
    match e {
        AExp::Num(_) => Ok(KindOf::Scalar(Kind::C)),
        AExp::Var(v) => match env.kind(v)? {
            Kind::Q(n) => Ok(KindOf::Quantum(Locus::single(v.clone(), 0, n))),
            k => Ok(KindOf::Scalar(k)),
        },
        AExp::Qubits(r) => Ok(KindOf::Quantum(Locus::new([resolve_range(env, r)?]))),
        AExp::Bin(_, a, b) => combine(kind_of_aexp(env, a)?, kind_of_aexp(env, b)?),
    }
}

/// Kind of a Boolean guard.  For `a1 < a2 @ x[i]` the result locus lists the
/// operand qubits followed by the result qubit.
pub fn kind_of_bexp(env: &KindEnv, b: &BExp) -> Result<KindOf> {
    match b {
        BExp::Bool(_) => Ok(KindOf::Scalar(Kind::C)),
        BExp::Bit(r) => {
            let r = resolve_range(env, r)?;
            if r.len() != 1 {
                return Err(Error::KindMismatch(format!("guard {r} must be a single qubit")));
            }
            Ok(KindOf::Quantum(Locus::new([r])))
        }
        BExp::QCmp { lhs, rhs, target, .. } => {
            let t = resolve_range(env, target)?;
            if t.len() != 1 {
                return Err(Error::KindMismatch(format!("result qubit {t} must be a single qubit")));
            }
            let ops = combine(kind_of_aexp(env, lhs)?, kind_of_aexp(env, rhs)?)?;
            let ops = match ops {
                KindOf::Quantum(l) => l,
                KindOf::Scalar(_) => Locus::empty(),
            };
            Ok(KindOf::Quantum(union_disjoint(ops, Locus::new([t]))?))
        }
        BExp::CCmp { lhs, rhs, .. } => match combine(kind_of_aexp(env, lhs)?, kind_of_aexp(env, rhs)?)? {
            KindOf::Quantum(l) => Err(Error::KindMismatch(format!(
                "comparison reads qubits {l} but has no `@` result qubit"
            ))),
            k => Ok(k),
        },
        BExp::Not(x) => kind_of_bexp(env, x),
    }
}

/// Qubits of a kind-checked term (empty for scalar terms).
pub fn fv_bexp(env: &KindEnv, b: &BExp) -> Result<Locus> {
    Ok(match kind_of_bexp(env, b)? {
        KindOf::Quantum(l) => l,
        KindOf::Scalar(_) => Locus::empty(),
    })
}

/// Qubits of an arithmetic term.
pub fn fv_aexp(env: &KindEnv, e: &AExp) -> Result<Locus> {
    Ok(match kind_of_aexp(env, e)? {
        KindOf::Quantum(l) => l,
        KindOf::Scalar(_) => Locus::empty(),
    })
}

/// Collects qubits of a statement list in order of first mention.
pub fn fv_stmts(env: &KindEnv, body: &[Stmt]) -> Result<Locus> {
    let mut acc: Vec<Qubit> = Vec::new();
    for s in body {
        collect_stmt(env, s, &mut acc)?;
    }
    Ok(Locus::from_qubits(&acc))
}

/// Free-variable locus of a single statement.
pub fn fv_stmt(env: &KindEnv, s: &Stmt) -> Result<Locus> {
    fv_stmts(env, std::slice::from_ref(s))
}

fn add_locus(acc: &mut Vec<Qubit>, l: &Locus) {
    for q in l.qubits() {
        if !acc.contains(&q) {
            acc.push(q);
        }
    }
}

fn collect_stmt(env: &KindEnv, s: &Stmt, acc: &mut Vec<Qubit>) -> Result<()> {
    match s {
        Stmt::Skip | Stmt::Assert(_) => {}
        Stmt::Apply { locus, .. } => add_locus(acc, &resolve_locus(env, locus)?),
        Stmt::LetC { var, value, body } => {
            let v = eval_const(env, value)?;
            let inner = env.with_c(var, v)?;
            for s in body {
                collect_stmt(&inner, s, acc)?;
            }
        }
        Stmt::LetM { var, target, body } => {
            add_locus(acc, &env.whole(target)?);
            let inner = env.with_m(var, None)?;
            for s in body {
                collect_stmt(&inner, s, acc)?;
            }
        }
        Stmt::QIf { guard, body } => {
            add_locus(acc, &fv_bexp(env, guard)?);
            for s in body {
                collect_stmt(env, s, acc)?;
            }
        }
        Stmt::CIf { guard, then_branch, else_branch } => match eval_classical_bexp(env, guard) {
            Ok(true) => {
                for s in then_branch {
                    collect_stmt(env, s, acc)?;
                }
            }
            Ok(false) => {
                for s in else_branch {
                    collect_stmt(env, s, acc)?;
                }
            }
            Err(_) => {
                kind_of_bexp(env, guard)?;
                for s in then_branch.iter().chain(else_branch) {
                    collect_stmt(env, s, acc)?;
                }
            }
        },
        Stmt::For { var, lo, hi, guard, body } => {
            let (lo, hi) = loop_bounds(env, lo, hi)?;
            for j in lo..hi {
                let inner = env.with_c(var, j)?;
                if let Some(g) = guard {
                    if g.is_quantum() {
                        add_locus(acc, &fv_bexp(&inner, g)?);
                    } else if !eval_classical_bexp(&inner, g)? {
                        continue;
                    }
                }
                for s in body {
                    collect_stmt(&inner, s, acc)?;
                }
            }
        }
        Stmt::Call { name, .. } => return Err(Error::UnknownProcedure(name.clone())),
    }
    Ok(())
}

/// Evaluates loop bounds; they must be classical constants.
pub fn loop_bounds(env: &KindEnv, lo: &AExp, hi: &AExp) -> Result<(i64, i64)> {
    let eval = |e: &AExp| {
        eval_const(env, e).map_err(|err| match err {
            Error::Arithmetic(_) | Error::UnboundVariable(_) => err,
            _ => Error::SymbolicLoopBound(e.to_string()),
        })
    };
    Ok((eval(lo)?, eval(hi)?))
}

/// Checks that every range lies within its array's bounds and that the loci
/// are pairwise disjoint, internally and from each other.
pub fn wf_locus_domain(env: &KindEnv, loci: &[Locus]) -> Result<()> {
    for l in loci {
        for r in l.ranges() {
            let n = env.array_size(&r.var)?;
            if r.hi > n {
                return Err(Error::RangeOutOfBounds(format!("{r} of size {n}")));
            }
        }
        if !l.is_self_disjoint() {
            return Err(Error::OverlappingLoci(l.to_string()));
        }
    }
    for (i, a) in loci.iter().enumerate() {
        for b in &loci[i + 1..] {
            if a.intersects(b) {
                return Err(Error::OverlappingLoci(format!("{a} and {b}")));
            }
        }
    }
    Ok(())
}
