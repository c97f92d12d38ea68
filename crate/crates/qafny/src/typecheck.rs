//! Flow-sensitive locus type system with modes `C`/`M`, subtyping, and the
//! rewrite planner that brings a target locus to the front of one entry.
//!
//! Planning is deterministic and greedy:
//!
//! 1. find the entries holding qubits of the target;
//! 2. permute and split `Nor`/`Had` entries so only target qubits remain
//!    (`EN` entries are kept whole and carry their other qubits along);
//! 3. join the pieces in order of first mention in the target;
//! 4. permute the target qubits to the front.
//!
//! The caller adds a cast to `EN` where a rule requires it.  The same plan,
//! replayed on a quantum state, performs the matching state rewrites.

use std::fmt;

use crate::error::{Error, Result};
use crate::kinds::{
    eval_classical_bexp, eval_const, fv_bexp, fv_stmts, kind_of_bexp, loop_bounds, resolve_locus, KindEnv,
};
use crate::oqasm::{oq_typecheck, OqType};
use crate::qstate::{prefix_permutation, swap_segments, Locus, Qubit, State};
use crate::surface::{expand_calls, print_stmt, BExp, Oracle, Program, Stmt, Unitary};

/// Quantum types: `Nor ⊑ EN`, `Had ⊑ EN`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QType {
    Nor,
    Had,
    EN,
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QType::Nor => "Nor",
            QType::Had => "Had",
            QType::EN => "EN",
        })
    }
}

/// Typing context mode: `M` marks the inside of a quantum conditional or
/// loop body, where measurement is forbidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    C,
    M,
}

/// Checks `τ ⊑ τ'`.
pub fn subtype_cast(from: QType, to: QType) -> Result<()> {
    if from == to || to == QType::EN {
        Ok(())
    } else {
        Err(Error::NotASubtype(from.to_string(), to.to_string()))
    }
}

/// Type of a join of two pieces.
pub fn join_type(a: QType, b: QType) -> QType {
    match (a, b) {
        (QType::Nor, QType::Nor) => QType::Nor,
        (QType::Had, QType::Had) => QType::Had,
        _ => QType::EN,
    }
}

/// Ordered locus type environment σ.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeEnv {
    pub entries: Vec<(Locus, QType)>,
}

impl TypeEnv {
    /// One `Nor` entry per declared array.
    pub fn initial(env: &KindEnv) -> Self {
        TypeEnv {
            entries: env.arrays().iter().map(|(v, n)| (Locus::single(v.clone(), 0, *n), QType::Nor)).collect(),
        }
    }

    /// The environment describing a state.
    pub fn of_state(state: &State) -> Self {
        TypeEnv { entries: state.entries.iter().map(|e| (e.locus.clone(), e.value.qtype())).collect() }
    }

    fn find(&self, q: &Qubit) -> Option<usize> {
        self.entries.iter().position(|(l, _)| l.contains(q))
    }

    fn index_of(&self, locus: &Locus) -> Result<usize> {
        self.entries
            .iter()
            .position(|(l, _)| l == locus)
            .ok_or_else(|| Error::UnboundLocus(locus.to_string()))
    }

    pub fn type_of(&self, locus: &Locus) -> Option<QType> {
        self.entries.iter().find(|(l, _)| l == locus).map(|(_, t)| *t)
    }
}

impl fmt::Display for TypeEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (l, t)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}: {t}")?;
        }
        write!(f, "}}")
    }
}

/// One primitive environment/state rewrite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanStep {
    /// Cast the entry at `locus` to `EN`.
    Cast { locus: Locus, to: QType },
    /// Swap segments `[n,n+i)` and `[n+i,n+i+k)` of the entry at `locus`.
    Permute { locus: Locus, n: usize, i: usize, k: usize },
    /// Join the entries at `left` and `right` into `left ++ right`.
    Join { left: Locus, right: Locus },
    /// Split the entry at `locus` after `n` qubits.
    Split { locus: Locus, n: usize },
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStep::Cast { locus, to } => write!(f, "Cast({locus} -> {to})"),
            PlanStep::Permute { locus, n, i, k } => write!(f, "Permute({locus}, {n}, {i}, {k})"),
            PlanStep::Join { left, right } => write!(f, "Join({left}, {right})"),
            PlanStep::Split { locus, n } => write!(f, "Split({locus}, {n})"),
        }
    }
}

/// A sequence of rewrite steps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RewritePlan {
    pub steps: Vec<PlanStep>,
}

impl RewritePlan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Locus after swapping segments of its qubit list.
pub fn permute_locus(l: &Locus, n: usize, i: usize, k: usize) -> Locus {
    Locus::from_qubits(&swap_segments(&l.qubits(), n, i, k))
}

/// Replays one step on a type environment.
pub fn apply_step_env(sigma: &mut TypeEnv, step: &PlanStep) -> Result<()> {
    match step {
        PlanStep::Cast { locus, to } => {
            let i = sigma.index_of(locus)?;
            subtype_cast(sigma.entries[i].1, *to)?;
            sigma.entries[i].1 = *to;
        }
        PlanStep::Permute { locus, n, i, k } => {
            let idx = sigma.index_of(locus)?;
            if n + i + k > locus.width() {
                return Err(Error::WidthMismatch(format!("permutation exceeds {locus}")));
            }
            sigma.entries[idx].0 = permute_locus(locus, *n, *i, *k);
        }
        PlanStep::Join { left, right } => {
            let li = sigma.index_of(left)?;
            let ri = sigma.index_of(right)?;
            let t = join_type(sigma.entries[li].1, sigma.entries[ri].1);
            sigma.entries[li] = (left.concat(right), t);
            sigma.entries.remove(ri);
        }
        PlanStep::Split { locus, n } => {
            let i = sigma.index_of(locus)?;
            let t = sigma.entries[i].1;
            if t == QType::EN {
                return Err(Error::NotSeparable(*n));
            }
            let (a, b) = locus.split_at(*n);
            sigma.entries[i] = (a, t);
            sigma.entries.insert(i + 1, (b, t));
        }
    }
    Ok(())
}

fn push_step(sigma: &mut TypeEnv, plan: &mut RewritePlan, step: PlanStep) -> Result<()> {
    apply_step_env(sigma, &step)?;
    plan.steps.push(step);
    Ok(())
}

fn push_perms(sigma: &mut TypeEnv, plan: &mut RewritePlan, locus: &Locus, front: &[Qubit]) -> Result<Locus> {
    let mut cur = locus.clone();
    for (n, i, k) in prefix_permutation(&cur.qubits(), front)? {
        let step = PlanStep::Permute { locus: cur.clone(), n, i, k };
        cur = permute_locus(&cur, n, i, k);
        push_step(sigma, plan, step)?;
    }
    Ok(cur)
}

/// Rewrites `sigma` so that one entry has the form `target ++ rest`.
///
/// Returns the rewritten environment, the plan, and the resulting locus.
pub fn env_rewrite_to_prefix(sigma: &TypeEnv, target: &Locus) -> Result<(TypeEnv, RewritePlan, Locus)> {
    let mut s = sigma.clone();
    let mut plan = RewritePlan::default();
    let tq = target.qubits();
    // Involved entries in order of first mention.
    let mut involved: Vec<Locus> = Vec::new();
    for q in &tq {
        let i = s.find(q).ok_or_else(|| Error::UnboundLocus(format!("{}[{}]", q.0, q.1)))?;
        let l = s.entries[i].0.clone();
        if !involved.contains(&l) {
            involved.push(l);
        }
    }
    let mut pieces: Vec<Locus> = Vec::new();
    for l in involved {
        let t = s.type_of(&l).expect("entry present");
        let inside: Vec<Qubit> = tq.iter().filter(|q| l.contains(q)).cloned().collect();
        if t != QType::EN && inside.len() < l.width() {
            let cur = push_perms(&mut s, &mut plan, &l, &inside)?;
            push_step(&mut s, &mut plan, PlanStep::Split { locus: cur.clone(), n: inside.len() })?;
            pieces.push(cur.split_at(inside.len()).0);
        } else {
            pieces.push(l);
        }
    }
    let mut cur = match pieces.first() {
        Some(p) => p.clone(),
        None => return Ok((s, plan, Locus::empty())),
    };
    for p in &pieces[1..] {
        push_step(&mut s, &mut plan, PlanStep::Join { left: cur.clone(), right: p.clone() })?;
        cur = cur.concat(p);
    }
    let cur = push_perms(&mut s, &mut plan, &cur, &tq)?;
    Ok((s, plan, cur))
}

/// Casts the entry at `locus` to `EN` if needed.
pub fn cast_to_en(sigma: &mut TypeEnv, plan: &mut RewritePlan, locus: &Locus) -> Result<()> {
    if locus.is_empty() {
        return Ok(());
    }
    if sigma.type_of(locus) != Some(QType::EN) {
        push_step(sigma, plan, PlanStep::Cast { locus: locus.clone(), to: QType::EN })?;
    }
    Ok(())
}

/// Permutations putting every entry into canonical qubit order.
pub fn normalize_plan(env: &KindEnv, sigma: &TypeEnv) -> Result<(TypeEnv, RewritePlan)> {
    let mut s = sigma.clone();
    let mut plan = RewritePlan::default();
    for (l, _) in sigma.entries.clone() {
        let canon = env.canonical_qubits(&l);
        push_perms(&mut s, &mut plan, &l, &canon)?;
    }
    sort_entries(env, &mut s.entries, |e| &e.0);
    Ok((s, plan))
}

/// Sorts entries by the canonical key of their first qubit.
pub fn sort_entries<T>(env: &KindEnv, entries: &mut [T], locus: impl Fn(&T) -> &Locus) {
    entries.sort_by_key(|e| locus(e).qubits().first().map(|q| env.canonical_key(q)).unwrap_or((usize::MAX, 0)));
}

/// Result of type checking.
#[derive(Debug, Clone, Default)]
pub struct TypeReport {
    /// Final environment.
    pub sigma: TypeEnv,
    /// Rewrite plans in program order, labelled by site.
    pub plans: Vec<(String, RewritePlan)>,
    /// σ after each mode-`C` statement, for `--dump-types`.
    pub trace: Vec<String>,
}

/// Statically checks an oracle's parameters against a target width.
pub fn check_oracle(env: &KindEnv, locus: &Locus, o: &Oracle) -> Result<()> {
    let w = locus.width();
    match o {
        Oracle::AddConst(k) => {
            eval_const(env, k)?;
        }
        Oracle::MulMod { a, n } => {
            check_modulus(eval_const(env, a)?, eval_const(env, n)?, w)?;
        }
        Oracle::PowMod { a, n } => {
            let first = locus.ranges().first().map(|r| r.len()).unwrap_or(0);
            if first == 0 || first == w {
                return Err(Error::WidthMismatch(format!(
                    "powmod on {locus} needs an exponent range followed by a target"
                )));
            }
            check_modulus(eval_const(env, a)?, eval_const(env, n)?, w - first)?;
        }
        Oracle::Oqasm(ins) => {
            let (sizes, order) = crate::oqasm::sizes_of_locus(locus);
            let start = order.iter().map(|v| (v.clone(), OqType::Nor)).collect();
            let end = oq_typecheck(&sizes, &start, ins)?;
            if end.values().any(|t| *t != OqType::Nor) {
                return Err(Error::BasisMismatch("an oracle block must end in the Nor basis".into()));
            }
        }
    }
    Ok(())
}

/// Validates `mulmod`/`powmod` parameters: `1 ≤ N ≤ 2^w` and `gcd(a, N) = 1`.
pub fn check_modulus(a: i64, n: i64, width: usize) -> Result<()> {
    if n < 1 || (width < 63 && n > 1i64 << width) {
        return Err(Error::IrreversibleOracle(format!("modulus {n} does not fit {width} qubits")));
    }
    if gcd(a.rem_euclid(n), n) != 1 {
        return Err(Error::IrreversibleOracle(format!("gcd({a}, {n}) ≠ 1")));
    }
    Ok(())
}

pub(crate) fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

struct Checker {
    plans: Vec<(String, RewritePlan)>,
    trace: Vec<String>,
}

fn first_line(s: &Stmt) -> String {
    print_stmt(s).lines().next().unwrap_or("").trim_end_matches(" {").to_string()
}

impl Checker {
    fn record(&mut self, label: &str, plan: RewritePlan) {
        self.plans.push((label.to_string(), plan));
    }

    fn stmts(&mut self, env: &KindEnv, sigma: TypeEnv, mode: Mode, body: &[Stmt]) -> Result<TypeEnv> {
        let mut s = sigma;
        for st in body {
            s = self.stmt(env, s, mode, st)?;
            let (n, plan) = normalize_plan(env, &s)?;
            self.record("normalize", plan);
            s = n;
            if mode == Mode::C {
                self.trace.push(format!("{}  ⊢  {}", first_line(st), s));
            }
        }
        Ok(s)
    }

    fn stmt(&mut self, env: &KindEnv, sigma: TypeEnv, mode: Mode, st: &Stmt) -> Result<TypeEnv> {
        match st {
            Stmt::Skip | Stmt::Assert(_) => Ok(sigma),
            Stmt::Call { name, .. } => Err(Error::UnknownProcedure(name.clone())),
            Stmt::LetC { var, value, body } => {
                let v = eval_const(env, value)?;
                let inner = env.with_c(var, v)?;
                self.stmts(&inner, sigma, mode, body)
            }
            Stmt::LetM { var, target, body } => {
                if mode == Mode::M {
                    return Err(Error::MeasureInQuantumConditional(target.clone()));
                }
                let y = env.whole(target)?;
                let (mut s, mut plan, l) = env_rewrite_to_prefix(&sigma, &y)?;
                cast_to_en(&mut s, &mut plan, &l)?;
                self.record("measure", plan);
                let i = s.index_of(&l)?;
                let rest = l.split_at(y.width()).1;
                if rest.is_empty() {
                    s.entries.remove(i);
                } else {
                    s.entries[i] = (rest, QType::EN);
                }
                let inner = env.with_m(var, None)?;
                self.stmts(&inner, s, mode, body)
            }
            Stmt::Apply { locus, op } => {
                let target = resolve_locus(env, locus)?;
                if let Unitary::Reduce { bits, .. } = op {
                    if bits.len() != target.width() {
                        return Err(Error::WidthMismatch(format!(
                            "reduce basis has {} bits but {target} has {}",
                            bits.len(),
                            target.width()
                        )));
                    }
                }
                if let Unitary::Oracle(o) = op {
                    check_oracle(env, &target, o)?;
                }
                let (mut s, mut plan, l) = env_rewrite_to_prefix(&sigma, &target)?;
                let t = s.type_of(&l).unwrap_or(QType::EN);
                let exact = l.width() == target.width();
                let result = match (op, t) {
                    (Unitary::H, QType::Nor) if exact => Some(QType::Had),
                    (Unitary::H, QType::Had) if exact => Some(QType::Nor),
                    (Unitary::Oracle(_), QType::Nor) => Some(QType::Nor),
                    _ => None,
                };
                match result {
                    Some(t2) => {
                        let i = s.index_of(&l)?;
                        s.entries[i].1 = t2;
                    }
                    None => cast_to_en(&mut s, &mut plan, &l)?,
                }
                self.record("apply", plan);
                Ok(s)
            }
            Stmt::QIf { guard, body } => self.qif(env, sigma, guard, body),
            Stmt::CIf { guard, then_branch, else_branch } => match eval_classical_bexp(env, guard) {
                Ok(true) => self.stmts(env, sigma, mode, then_branch),
                Ok(false) => self.stmts(env, sigma, mode, else_branch),
                Err(_) => {
                    kind_of_bexp(env, guard)?;
                    let a = self.stmts(env, sigma.clone(), mode, then_branch)?;
                    let b = self.stmts(env, sigma, mode, else_branch)?;
                    if a != b {
                        return Err(Error::TypeMismatch(format!(
                            "branches of `if ({guard})` end in different environments {a} and {b}"
                        )));
                    }
                    Ok(a)
                }
            },
            Stmt::For { var, lo, hi, guard, body } => {
                let (lo, hi) = loop_bounds(env, lo, hi)?;
                let mut s = sigma;
                for j in lo..hi {
                    let inner = env.with_c(var, j)?;
                    s = match guard {
                        Some(g) if g.is_quantum() => self.qif(&inner, s, g, body)?,
                        Some(g) if !eval_classical_bexp(&inner, g)? => s,
                        _ => self.stmts(&inner, s, Mode::M, body)?,
                    };
                    let (n, plan) = normalize_plan(env, &s)?;
                    self.record("normalize", plan);
                    s = n;
                }
                Ok(s)
            }
        }
    }

    fn qif(&mut self, env: &KindEnv, sigma: TypeEnv, guard: &BExp, body: &[Stmt]) -> Result<TypeEnv> {
        let kb = fv_bexp(env, guard)?;
        let kbody = fv_stmts(env, body)?;
        if kb.intersects(&kbody) {
            return Err(Error::CloneViolation(format!("{kb} and {kbody}")));
        }
        let prefix = kb.concat(&kbody);
        let (mut s, mut plan, l) = env_rewrite_to_prefix(&sigma, &prefix)?;
        cast_to_en(&mut s, &mut plan, &l)?;
        self.record("if", plan);
        let sub_locus = l.split_at(kb.width()).1;
        let sub = TypeEnv { entries: vec![(sub_locus.clone(), QType::EN)] };
        let out = self.stmts(env, sub, Mode::M, body)?;
        match out.entries.as_slice() {
            [(l2, QType::EN)] if l2.same_qubits(&sub_locus) => {}
            [] if sub_locus.is_empty() => {}
            _ => {
                return Err(Error::TypeMismatch(format!(
                    "conditional body changed its locus {sub_locus} to {out}"
                )))
            }
        }
        Ok(s)
    }
}

/// Type checks a statement list from `sigma` in `mode`.
pub fn typecheck(env: &KindEnv, sigma: &TypeEnv, mode: Mode, body: &[Stmt]) -> Result<TypeReport> {
    let mut c = Checker { plans: Vec::new(), trace: Vec::new() };
    let s = c.stmts(env, sigma.clone(), mode, body)?;
    Ok(TypeReport { sigma: s, plans: c.plans, trace: c.trace })
}

/// Type checks a whole program from the all-`Nor` environment.
pub fn typecheck_program(prog: &Program) -> Result<TypeReport> {
    let prog = expand_calls(prog)?;
    let env = KindEnv::from_decls(&prog.decls)?;
    typecheck(&env, &TypeEnv::initial(&env), Mode::C, &prog.body)
}
