//! Predicate model checking and Hoare-triple checking.
//!
//! Predicates are evaluated against concrete symbolic states.  A locus
//! mapping compares the state's value on the locus with the evaluated ket
//! expression, ignoring frozen stacks.  The freeze (`F`), unfreeze (`U`) and
//! measurement (`M`) transformers delegate to the same primitives the
//! interpreter uses, so predicate-level and semantic-level transformers
//! coincide by construction.
//!
//! A triple `{P} e {Q}` is written as a program whose body starts with the
//! precondition asserts and ends with the postcondition assert.  It is
//! checked by building the state described by `P`, running the body along
//! every measurement path with nonzero probability, and checking every
//! assert on the way.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::interp::{
    apply_guard, eval, guard_holds, project_outcome, split_by_guard, Interp, MeasurePolicy, Observer,
};
use crate::kinds::{eval_const, fv_bexp, resolve_locus, KindEnv, Scalar};
use crate::qstate::{
    alpha, join_values, merge_kets, partition_kets, permute_value, pop_frozen, prefix_permutation, push_frozen,
    split_value, u64_to_bits, BasisKet, Bits, EnValue, Entry, Locus, QuantumValue, Range, State,
};
use crate::surface::{
    expand_calls, AmpExp, ArithOp, BExp, BasisExp, KetExp, LocusExp, Pred, PredLocus, Program, Stmt,
};
use crate::typecheck::{permute_locus, typecheck, Mode, TypeEnv};

/// Amplitude tolerance for predicate equality.
pub const PRED_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Ket expressions
// ---------------------------------------------------------------------------

/// Evaluates an amplitude expression; summation indices and classical
/// variables come from `env`.
pub fn eval_amp(env: &KindEnv, a: &AmpExp) -> Result<Complex64> {
    Ok(match a {
        AmpExp::Num(v) => Complex64::new(*v, 0.0),
        AmpExp::Var(v) => Complex64::new(eval_const(env, &crate::surface::AExp::Var(v.clone()))? as f64, 0.0),
        AmpExp::Neg(x) => -eval_amp(env, x)?,
        AmpExp::Sqrt(x) => eval_amp(env, x)?.sqrt(),
        AmpExp::Alpha(x) => {
            let r = eval_amp(env, x)?;
            if r.im.abs() > PRED_TOL {
                return Err(Error::IllFormedPredicate(format!("alpha of a non-real value {r}")));
            }
            alpha(r.re)
        }
        AmpExp::Bin(op, x, y) => {
            let (x, y) = (eval_amp(env, x)?, eval_amp(env, y)?);
            match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y.norm() == 0.0 {
                        return Err(Error::Arithmetic("division by zero in amplitude".into()));
                    }
                    x / y
                }
                ArithOp::Pow => {
                    if x.im == 0.0 && y.im == 0.0 {
                        Complex64::new(x.re.powf(y.re), 0.0)
                    } else {
                        x.powc(y)
                    }
                }
                ArithOp::Mod => {
                    return Err(Error::IllFormedPredicate("`%` is not an amplitude operator".into()));
                }
            }
        }
    })
}

fn eval_basis(env: &KindEnv, b: &BasisExp) -> Result<Bits> {
    let width = |e| {
        let n = eval_const(env, e)?;
        usize::try_from(n).map_err(|_| Error::IllFormedPredicate(format!("negative basis width {n}")))
    };
    Ok(match b {
        BasisExp::Lit(bits) => bits.clone(),
        BasisExp::Rep(d, n) => vec![eval_const(env, d)? != 0; width(n)?],
        BasisExp::Bits(v, n) => {
            let v = eval_const(env, v)?;
            let v = u64::try_from(v).map_err(|_| Error::IllFormedPredicate(format!("negative basis value {v}")))?;
            u64_to_bits(v, width(n)?)
        }
    })
}

/// Evaluates a ket expression to a list of kets (not merged).
pub fn eval_ket(env: &KindEnv, k: &KetExp) -> Result<Vec<(Complex64, Bits)>> {
    match k {
        KetExp::Term { amp, bases } => {
            let z = match amp {
                Some(a) => eval_amp(env, a)?,
                None => Complex64::new(1.0, 0.0),
            };
            let mut bits = Vec::new();
            for b in bases {
                bits.extend(eval_basis(env, b)?);
            }
            Ok(vec![(z, bits)])
        }
        KetExp::Sum { var, lo, hi, body } => {
            let (lo, hi) = (eval_const(env, lo)?, eval_const(env, hi)?);
            let mut out = Vec::new();
            for i in lo..hi {
                out.extend(eval_ket(&env.with_c(var, i)?, body)?);
            }
            Ok(out)
        }
        KetExp::Add(a, b) => {
            let mut out = eval_ket(env, a)?;
            out.extend(eval_ket(env, b)?);
            Ok(out)
        }
    }
}

/// Evaluates a ket expression to an `EN` value of the given width.
pub fn ket_value(env: &KindEnv, k: &KetExp, width: usize) -> Result<EnValue> {
    let kets = eval_ket(env, k)?;
    if let Some((_, b)) = kets.iter().find(|(_, b)| b.len() != width) {
        return Err(Error::IllFormedPredicate(format!(
            "ket basis has {} qubits but the locus has {width}",
            b.len()
        )));
    }
    Ok(merge_kets(&EnValue::new(width, kets.into_iter().map(|(z, b)| BasisKet::new(z, b)).collect())))
}

// ---------------------------------------------------------------------------
// Transformers
// ---------------------------------------------------------------------------

/// Freeze: applies the guard, keeps the satisfying kets and moves the guard
/// bits (the leading `kb.width()` bits) onto the frozen stack.
pub fn transform_f(env: &KindEnv, guard: &BExp, kb: &Locus, v: &EnValue) -> Result<EnValue> {
    let guarded = apply_guard(env, guard, kb, v)?;
    let (yes, _) = split_by_guard(env, guard, kb, &guarded)?;
    push_frozen(&yes, kb.width())
}

/// Unfreeze: restores the guard bits of the body's result `body_post` and
/// reassembles it with the kets of `pre` that do not satisfy the guard.
pub fn transform_u(env: &KindEnv, guard: &BExp, kb: &Locus, pre: &EnValue, body_post: &EnValue) -> Result<EnValue> {
    let guarded = apply_guard(env, guard, kb, pre)?;
    let (_, no) = split_by_guard(env, guard, kb, &guarded)?;
    let mut out =
        if body_post.kets.is_empty() { EnValue::new(body_post.width + kb.width(), Vec::new()) } else { pop_frozen(body_post)? };
    out.kets.extend(no.kets);
    Ok(merge_kets(&out))
}

/// Measurement filter: keeps the kets whose leading `n` bits read `outcome`,
/// drops those bits and renormalizes.  Returns the value and the probability.
pub fn transform_m(v: &EnValue, n: usize, outcome: u64) -> (EnValue, f64) {
    project_outcome(v, n, outcome)
}

/// Evaluates a quantum conditional on its entry purely through the
/// transformers: freeze, run the body on the frozen part, unfreeze.
///
/// `pre` must have the guard locus followed by the body locus as a prefix
/// of its locus, as the interpreter arranges before a conditional.
pub fn conditional_by_transformers(env: &KindEnv, guard: &BExp, body: &[Stmt], pre: &Entry) -> Result<Entry> {
    let kb = fv_bexp(env, guard)?;
    let QuantumValue::En(v) = &pre.value else {
        return Err(Error::TypeMismatch("conditional entry is not EN".into()));
    };
    let sub_locus = pre.locus.split_at(kb.width()).1;
    let frozen = transform_f(env, guard, &kb, v)?;
    let mut sub = State { entries: vec![Entry { locus: sub_locus.clone(), value: QuantumValue::En(frozen) }] };
    let mut obs = crate::interp::NoObserver;
    Interp::new(MeasurePolicy::Forced(Vec::new()), &mut obs).eval_stmts(env, &mut sub, Mode::M, body)?;
    let body_post = match sub.entries.len() {
        0 => EnValue::new(0, Vec::new()),
        1 => {
            let e = sub.entries.pop().expect("one entry");
            let (mut value, mut cur) = (e.value, e.locus);
            for (n, i, k) in prefix_permutation(&cur.qubits(), &sub_locus.qubits())? {
                value = permute_value(&value, n, i, k)?;
                cur = permute_locus(&cur, n, i, k);
            }
            value.to_en()
        }
        _ => return Err(Error::TypeMismatch("conditional body split its locus".into())),
    };
    let post = transform_u(env, guard, &kb, v, &body_post)?;
    Ok(Entry { locus: pre.locus.clone(), value: QuantumValue::En(post) })
}

// ---------------------------------------------------------------------------
// Predicate semantics
// ---------------------------------------------------------------------------

/// The state's value on `locus`, in `locus` order.
///
/// The entries covering `locus` are joined and permuted so that `locus` is a
/// prefix.  Any remaining qubits must hold the same basis in every ket (a
/// constant suffix), which is then dropped; otherwise `None` is returned
/// because the locus is entangled with qubits outside it.
pub fn value_on(state: &State, locus: &Locus) -> Result<Option<EnValue>> {
    let mut covering: Vec<&Entry> = Vec::new();
    for q in locus.qubits() {
        let i = state.find(&q).ok_or_else(|| {
            Error::IllFormedPredicate(format!("qubit {}[{}] is not in the state", q.0, q.1))
        })?;
        if !covering.iter().any(|e| std::ptr::eq(*e, &state.entries[i])) {
            covering.push(&state.entries[i]);
        }
    }
    let Some((first, rest)) = covering.split_first() else {
        return Ok(Some(EnValue::new(0, vec![BasisKet::new(Complex64::new(1.0, 0.0), Vec::new())])));
    };
    let (mut value, mut cur) = (first.value.clone(), first.locus.clone());
    for e in rest {
        value = join_values(&value, &e.value);
        cur = cur.concat(&e.locus);
    }
    for (n, i, k) in prefix_permutation(&cur.qubits(), &locus.qubits())? {
        value = permute_value(&value, n, i, k)?;
        cur = permute_locus(&cur, n, i, k);
    }
    let en = merge_kets(&value.to_en());
    let w = locus.width();
    if en.width == w {
        return Ok(Some(en));
    }
    let suffix = en.kets.first().map(|k| k.basis[w..].to_vec());
    if en.kets.iter().any(|k| Some(&k.basis[w..].to_vec()) != suffix.as_ref()) {
        return Ok(None);
    }
    let (head, _) = split_value(&QuantumValue::En(en), w)?;
    Ok(Some(head.to_en()))
}

fn pred_loci(env: &KindEnv, p: &Pred) -> Result<Vec<Locus>> {
    Ok(match p {
        Pred::True | Pred::Cmp { .. } => Vec::new(),
        Pred::Maps { locus, .. } => match locus {
            PredLocus::Plain(l) | PredLocus::M { locus: l, .. } => vec![resolve_locus(env, l)?],
            PredLocus::F { guard_locus, locus, .. } | PredLocus::U { guard_locus, locus, .. } => {
                vec![resolve_locus(env, guard_locus)?, resolve_locus(env, locus)?]
            }
        },
        Pred::And(a, b) | Pred::Sep(a, b) => {
            let mut v = pred_loci(env, a)?;
            v.extend(pred_loci(env, b)?);
            v
        }
    })
}

fn resolve(env: &KindEnv, l: &LocusExp) -> Result<Locus> {
    resolve_locus(env, l).map_err(|e| Error::IllFormedPredicate(e.to_string()))
}

/// Decides `state ⊨ pred` under the kind environment `env`, which carries
/// classical values and measurement results.
pub fn model_check_pred(env: &KindEnv, state: &State, pred: &Pred) -> Result<bool> {
    match pred {
        Pred::True => Ok(true),
        Pred::Cmp { op, lhs, rhs } => {
            let a = eval_const(env, lhs).map_err(|e| Error::IllFormedPredicate(e.to_string()))?;
            let b = eval_const(env, rhs).map_err(|e| Error::IllFormedPredicate(e.to_string()))?;
            Ok(op.eval(a, b))
        }
        Pred::And(a, b) => Ok(model_check_pred(env, state, a)? && model_check_pred(env, state, b)?),
        Pred::Sep(a, b) => {
            let (la, lb) = (pred_loci(env, a)?, pred_loci(env, b)?);
            if la.iter().any(|x| lb.iter().any(|y| x.intersects(y))) {
                return Err(Error::IllFormedPredicate(format!("separated conjuncts overlap in `{pred}`")));
            }
            Ok(model_check_pred(env, state, a)? && model_check_pred(env, state, b)?)
        }
        Pred::Maps { locus, ket } => {
            let actual = match locus {
                PredLocus::Plain(l) => value_on(state, &resolve(env, l)?)?,
                PredLocus::M { var, n, locus } => {
                    let Some(Scalar::M(Some(m))) = env.scalar(var) else {
                        return Err(Error::IllFormedPredicate(format!("`{var}` is not a measured variable")));
                    };
                    let n = usize::try_from(eval_const(env, n)?)
                        .map_err(|_| Error::IllFormedPredicate("negative measured width".into()))?;
                    let l = resolve(env, locus)?;
                    if n > l.width() {
                        return Err(Error::IllFormedPredicate(format!("cannot measure {n} qubits of {l}")));
                    }
                    value_on(state, &l)?.map(|v| transform_m(&v, n, m.outcome).0)
                }
                PredLocus::F { guard, guard_locus, locus } => {
                    let (kb, kr) = (resolve(env, guard_locus)?, resolve(env, locus)?);
                    match value_on(state, &kb.concat(&kr))? {
                        Some(v) => Some(transform_f(env, guard, &kb, &v)?),
                        None => None,
                    }
                }
                PredLocus::U { guard, guard_locus, locus } => {
                    let (kb, kr) = (resolve(env, guard_locus)?, resolve(env, locus)?);
                    match value_on(state, &kb.concat(&kr))? {
                        Some(v) => {
                            let (yes, _) = partition_kets(&v, kb.width(), |bits| guard_holds(env, guard, &kb, bits))?;
                            Some(push_frozen(&yes, kb.width())?)
                        }
                        None => None,
                    }
                }
            };
            let Some(actual) = actual else { return Ok(false) };
            let expected = ket_value(env, ket, actual.width)?;
            Ok(actual.approx_eq_ignoring_stack(&expected, PRED_TOL))
        }
    }
}

// ---------------------------------------------------------------------------
// Triples
// ---------------------------------------------------------------------------

/// Builds the state described by a state-literal precondition.  Qubits the
/// precondition does not mention start in `|0⟩`.
pub fn state_from_literal(env: &KindEnv, pre: &[&Pred]) -> Result<State> {
    fn collect<'a>(p: &'a Pred, out: &mut Vec<&'a Pred>) {
        match p {
            Pred::And(a, b) | Pred::Sep(a, b) => {
                collect(a, out);
                collect(b, out);
            }
            other => out.push(other),
        }
    }
    let mut atoms = Vec::new();
    pre.iter().for_each(|p| collect(p, &mut atoms));
    let mut state = State::new();
    for atom in atoms {
        match atom {
            Pred::True => {}
            Pred::Cmp { .. } => {
                if !model_check_pred(env, &state, atom)? {
                    return Err(Error::NonLiteralPrecondition(format!("`{atom}` is false")));
                }
            }
            Pred::Maps { locus: PredLocus::Plain(l), ket } => {
                let l = resolve(env, l)?;
                if state.entries.iter().any(|e| e.locus.intersects(&l)) {
                    return Err(Error::NonLiteralPrecondition(format!("locus {l} is described twice")));
                }
                let v = ket_value(env, ket, l.width())?;
                if (v.norm_sqr() - 1.0).abs() > PRED_TOL {
                    return Err(Error::NonLiteralPrecondition(format!("value of {l} is not normalized")));
                }
                let value = match v.kets.as_slice() {
                    [k] => QuantumValue::Nor { amp: k.amp, bits: k.basis.clone(), stack: Vec::new() },
                    _ => QuantumValue::En(v),
                };
                state.push(l, value);
            }
            other => return Err(Error::NonLiteralPrecondition(other.to_string())),
        }
    }
    for (var, n) in env.arrays() {
        let mut i = 0;
        while i < *n {
            if state.find(&(var.clone(), i)).is_some() {
                i += 1;
                continue;
            }
            let lo = i;
            while i < *n && state.find(&(var.clone(), i)).is_none() {
                i += 1;
            }
            state.push(Locus::new([Range::new(var.clone(), lo, i)]), QuantumValue::nor(vec![false; i - lo]));
        }
    }
    Ok(state)
}

/// The outcome of one executed assert.
#[derive(Debug, Clone, PartialEq)]
pub struct AssertResult {
    pub pred: String,
    /// Measurement outcomes of the path it was checked on.
    pub path: Vec<u64>,
    pub holds: bool,
}

/// Result of checking a triple.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripleReport {
    /// Number of measurement paths explored.
    pub paths: usize,
    pub asserts: Vec<AssertResult>,
}

impl TripleReport {
    pub fn passed(&self) -> bool {
        self.asserts.iter().all(|a| a.holds)
    }
}

#[derive(Default)]
struct AssertRecorder {
    results: Vec<(String, std::result::Result<bool, Error>)>,
}

impl Observer for AssertRecorder {
    fn assert(&mut self, env: &KindEnv, state: &State, pred: &Pred) -> Result<()> {
        let r = model_check_pred(env, state, pred);
        if let Err(e) = &r {
            if e.stage() == crate::error::Stage::Check {
                return Err(e.clone());
            }
        }
        self.results.push((pred.to_string(), r));
        Ok(())
    }
}

/// Checks every assert of `body` on every measurement path from `state`.
pub fn check_asserts(env: &KindEnv, state: &State, body: &[Stmt]) -> Result<TripleReport> {
    let mut report = TripleReport::default();
    let mut stack = vec![Vec::<u64>::new()];
    while let Some(prefix) = stack.pop() {
        let mut rec = AssertRecorder::default();
        match eval(env, state, body, MeasurePolicy::Forced(prefix.clone()), &mut rec) {
            Ok(_) => {
                report.paths += 1;
                for (pred, r) in rec.results {
                    report.asserts.push(AssertResult { pred, path: prefix.clone(), holds: r? });
                }
            }
            Err(Error::OutcomesExhausted { choices, .. }) => {
                for (c, _) in choices.iter().rev() {
                    let mut p = prefix.clone();
                    p.push(*c);
                    stack.push(p);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Checks a triple written as a program: the leading asserts form the
/// precondition, which must be a state literal, and every later assert
/// (the trailing one being the postcondition) must hold on every path.
pub fn check_triple(prog: &Program) -> Result<TripleReport> {
    let prog = expand_calls(prog)?;
    let env = KindEnv::from_decls(&prog.decls)?;
    let pre: Vec<&Pred> = prog
        .body
        .iter()
        .map_while(|s| if let Stmt::Assert(p) = s { Some(p) } else { None })
        .collect();
    let state = state_from_literal(&env, &pre)?;
    typecheck(&env, &TypeEnv::of_state(&state), Mode::C, &prog.body)?;
    check_asserts(&env, &state, &prog.body)
}
