//! Big-step symbolic interpreter.
//!
//! Every statement first computes the same rewrite plan the type checker
//! computes — from the environment read off the current state — and replays
//! it on the state, so the target locus is a prefix of one entry.  After
//! every statement the state is normalized exactly like the type
//! environment.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kinds::{
    eval_aexp_with, eval_classical_bexp, eval_const, fv_bexp, fv_stmts, loop_bounds, resolve_locus, KindEnv, MVal,
};
use crate::oqasm::apply_to_basis;
use crate::qstate::{
    alpha, bits_to_u64, join_values, merge_kets, partition_kets, permute_value, pop_frozen, prefix_permutation,
    push_frozen, split_value, u64_to_bits, BasisKet, Bits, EnValue, Entry, Locus, QuantumValue, Range, State,
};
use crate::surface::{expand_calls, BExp, Oracle, Pred, Program, Stmt, Unitary};
use crate::typecheck::{
    cast_to_en, check_modulus, check_oracle, env_rewrite_to_prefix, normalize_plan, permute_locus, sort_entries, Mode,
    PlanStep, QType, RewritePlan, TypeEnv,
};

/// How measurement outcomes are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurePolicy {
    /// Sample from the outcome distribution with a seeded generator.
    Seeded(u64),
    /// Use these outcomes, one per executed measurement, in order.
    Forced(Vec<u64>),
}

/// Measurement bindings in execution order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassicalStore {
    /// Bound variable and its outcome.
    pub bindings: Vec<(String, MVal)>,
    /// Measured array and its outcome, parallel to `bindings`.
    pub measured: Vec<(String, MVal)>,
}

impl ClassicalStore {
    pub fn get(&self, var: &str) -> Option<MVal> {
        self.bindings.iter().rev().find(|(v, _)| v == var).map(|(_, m)| *m)
    }
}

/// Callbacks invoked during evaluation.  All methods default to no-ops.
pub trait Observer {
    /// Called at every `assert`.
    fn assert(&mut self, _env: &KindEnv, _state: &State, _pred: &Pred) -> Result<()> {
        Ok(())
    }
    /// Called after a quantum conditional with its entry after the prefix
    /// rewrite (`pre`) and after the conditional (`post`).
    fn quantum_if(&mut self, _env: &KindEnv, _guard: &BExp, _body: &[Stmt], _pre: &Entry, _post: &Entry) -> Result<()> {
        Ok(())
    }
    /// Called after every statement evaluated in mode `C`.
    fn statement(&mut self, _env: &KindEnv, _stmt: &Stmt, _state: &State) {}
}

/// An observer that does nothing.
pub struct NoObserver;

impl Observer for NoObserver {}

/// Result of running a program.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: State,
    pub store: ClassicalStore,
    /// Rewrite plans in execution order, labelled like the type checker's.
    pub plans: Vec<(String, RewritePlan)>,
}

/// Replays one plan step on a state.
pub fn apply_step_state(state: &mut State, step: &PlanStep) -> Result<()> {
    let index = |s: &State, l: &Locus| {
        s.entries.iter().position(|e| &e.locus == l).ok_or_else(|| Error::UnboundLocus(l.to_string()))
    };
    match step {
        PlanStep::Cast { locus, to } => {
            let i = index(state, locus)?;
            if *to == QType::EN {
                let v = state.entries[i].value.to_en();
                state.entries[i].value = QuantumValue::En(v);
            } else if state.entries[i].value.qtype() != *to {
                return Err(Error::NotASubtype(state.entries[i].value.qtype().to_string(), to.to_string()));
            }
        }
        PlanStep::Permute { locus, n, i, k } => {
            let idx = index(state, locus)?;
            let e = &mut state.entries[idx];
            e.value = permute_value(&e.value, *n, *i, *k)?;
            e.locus = permute_locus(locus, *n, *i, *k);
        }
        PlanStep::Join { left, right } => {
            let li = index(state, left)?;
            let ri = index(state, right)?;
            let v = join_values(&state.entries[li].value, &state.entries[ri].value);
            state.entries[li] = Entry { locus: left.concat(right), value: v };
            state.entries.remove(ri);
        }
        PlanStep::Split { locus, n } => {
            let i = index(state, locus)?;
            let (a, b) = split_value(&state.entries[i].value, *n)?;
            let (la, lb) = locus.split_at(*n);
            state.entries[i] = Entry { locus: la, value: a };
            state.entries.insert(i + 1, Entry { locus: lb, value: b });
        }
    }
    Ok(())
}

/// Replays a whole plan on a state.
pub fn apply_plan_state(state: &mut State, plan: &RewritePlan) -> Result<()> {
    plan.steps.iter().try_for_each(|s| apply_step_state(state, s))
}

/// Rewrites `state` so that `target` is a prefix of one entry, which is cast
/// to `EN` when `cast` is set.  Returns the plan and the entry's locus.
pub fn rewrite_to_prefix(state: &mut State, target: &Locus, cast: bool) -> Result<(RewritePlan, Locus)> {
    let (mut sigma, mut plan, l) = env_rewrite_to_prefix(&TypeEnv::of_state(state), target)?;
    if cast {
        cast_to_en(&mut sigma, &mut plan, &l)?;
    }
    apply_plan_state(state, &plan)?;
    Ok((plan, l))
}

/// Normalizes a state exactly like the type environment is normalized.
pub fn normalize_state(env: &KindEnv, state: &mut State) -> Result<RewritePlan> {
    let (_, plan) = normalize_plan(env, &TypeEnv::of_state(state))?;
    apply_plan_state(state, &plan)?;
    sort_entries(env, &mut state.entries, |e| &e.locus);
    Ok(plan)
}

fn entry_index(state: &State, l: &Locus) -> Result<usize> {
    state.entries.iter().position(|e| &e.locus == l).ok_or_else(|| Error::UnboundLocus(l.to_string()))
}

/// Reads a range from the bits of a ket laid out over `qubits`, as a
/// little-endian integer.
pub fn read_range(locus: &Locus, bits: &[bool], r: &Range) -> Result<i64> {
    let mut v: i64 = 0;
    for (k, i) in (r.lo..r.hi).enumerate() {
        let q = (r.var.clone(), i);
        let pos = locus.position(&q).ok_or_else(|| Error::UnboundLocus(format!("{}[{}]", r.var, i)))?;
        if bits[pos] {
            if k >= 62 {
                return Err(Error::Arithmetic(format!("range {r} too wide to read")));
            }
            v |= 1 << k;
        }
    }
    Ok(v)
}

/// Single-qubit target of a guard, if it has one (`@ x[i]` or a bare bit).
fn guard_bit(env: &KindEnv, guard: &BExp) -> Result<Option<Range>> {
    Ok(match guard {
        BExp::Bit(r) => Some(crate::kinds::resolve_range(env, r)?),
        BExp::QCmp { target, .. } => Some(crate::kinds::resolve_range(env, target)?),
        BExp::Not(b) => guard_bit(env, b)?,
        _ => None,
    })
}

/// Applies a guard's side effect to one ket: a comparison is XORed into its
/// result qubit.  `kb` lays out the leading bits.
pub fn apply_guard_bits(env: &KindEnv, guard: &BExp, kb: &Locus, bits: &mut [bool]) -> Result<()> {
    match guard {
        BExp::QCmp { op, lhs, rhs, target } => {
            let mut read = |r: &Range| read_range(kb, bits, r);
            let a = eval_aexp_with(env, lhs, &mut read)?;
            let b = eval_aexp_with(env, rhs, &mut read)?;
            let t = crate::kinds::resolve_range(env, target)?;
            let pos = kb
                .position(&(t.var.clone(), t.lo))
                .ok_or_else(|| Error::UnboundLocus(t.to_string()))?;
            if op.eval(a, b) {
                bits[pos] = !bits[pos];
            }
            Ok(())
        }
        BExp::Not(b) => apply_guard_bits(env, b, kb, bits),
        _ => Ok(()),
    }
}

/// Tests a guard on a ket after its side effect was applied.
pub fn guard_holds(env: &KindEnv, guard: &BExp, kb: &Locus, bits: &[bool]) -> Result<bool> {
    match guard {
        BExp::Not(b) => Ok(!guard_holds(env, b, kb, bits)?),
        BExp::Bit(_) | BExp::QCmp { .. } => {
            let t = guard_bit(env, guard)?.expect("guard with a result qubit");
            Ok(read_range(kb, bits, &t)? == 1)
        }
        other => eval_classical_bexp(env, other),
    }
}

/// Applies a guard's side effect to every ket of `v`, whose leading bits are
/// laid out by `kb`.
pub fn apply_guard(env: &KindEnv, guard: &BExp, kb: &Locus, v: &EnValue) -> Result<EnValue> {
    let mut out = v.clone();
    for k in &mut out.kets {
        apply_guard_bits(env, guard, kb, &mut k.basis[..kb.width()])?;
    }
    Ok(merge_kets(&out))
}

/// Splits a guarded value into its satisfying and failing parts.
pub fn split_by_guard(env: &KindEnv, guard: &BExp, kb: &Locus, v: &EnValue) -> Result<(EnValue, EnValue)> {
    partition_kets(v, kb.width(), |bits| guard_holds(env, guard, kb, bits))
}

fn modpow(base: u128, mut e: u64, m: u128) -> u128 {
    let mut acc = 1 % m;
    let mut b = base % m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

/// The basis map of an oracle on the bits of `locus`: phase factor and
/// output bits.
pub fn oracle_map(env: &KindEnv, locus: &Locus, o: &Oracle, bits: &[bool]) -> Result<(Complex64, Bits)> {
    let w = bits.len();
    if w > 63 {
        return Err(Error::WidthMismatch(format!("oracle on {w} qubits is too wide")));
    }
    let one = Complex64::new(1.0, 0.0);
    match o {
        Oracle::AddConst(k) => {
            let k = eval_const(env, k)?;
            let m = 1i128 << w;
            let v = (bits_to_u64(bits) as i128 + k as i128).rem_euclid(m);
            Ok((one, u64_to_bits(v as u64, w)))
        }
        Oracle::MulMod { a, n } => {
            let (a, n) = (eval_const(env, a)?, eval_const(env, n)?);
            check_modulus(a, n, w)?;
            let v = bits_to_u64(bits) as u128;
            let n = n as u128;
            let out = if v < n { (a.rem_euclid(n as i64) as u128) * v % n } else { v };
            Ok((one, u64_to_bits(out as u64, w)))
        }
        Oracle::PowMod { a, n } => {
            let (a, n) = (eval_const(env, a)?, eval_const(env, n)?);
            let e_len = locus.ranges().first().map(|r| r.len()).unwrap_or(0);
            check_modulus(a, n, w - e_len)?;
            let e = bits_to_u64(&bits[..e_len]);
            let y = bits_to_u64(&bits[e_len..]) as u128;
            let n = n as u128;
            let out = if y < n { modpow(a.rem_euclid(n as i64) as u128, e, n) * y % n } else { y };
            let mut res = bits[..e_len].to_vec();
            res.extend(u64_to_bits(out as u64, w - e_len));
            Ok((one, res))
        }
        Oracle::Oqasm(ins) => apply_to_basis(locus, ins, bits),
    }
}

/// Applies a unitary to the leading `t` qubits of every ket of `v`.
pub fn apply_en(env: &KindEnv, target: &Locus, u: &Unitary, v: &EnValue) -> Result<EnValue> {
    let t = target.width();
    let mut kets = Vec::new();
    match u {
        Unitary::H | Unitary::Qft | Unitary::Rqft => {
            if t > 20 {
                return Err(Error::WidthMismatch(format!("{t}-qubit transform is too large")));
            }
            let scale = 1.0 / 2f64.powi(t as i32).sqrt();
            let m = 1u128 << t;
            for k in &v.kets {
                let x = bits_to_u64(&k.basis[..t]) as u128;
                for y in 0..(1u64 << t) {
                    let phase = match u {
                        Unitary::H => ((x as u64 & y).count_ones() % 2) as f64 / 2.0,
                        Unitary::Qft => ((x * y as u128) % m) as f64 / m as f64,
                        _ => -(((x * y as u128) % m) as f64) / m as f64,
                    };
                    let mut basis = u64_to_bits(y, t);
                    basis.extend_from_slice(&k.basis[t..]);
                    kets.push(BasisKet { amp: k.amp * alpha(phase) * scale, basis, stack: k.stack.clone() });
                }
            }
        }
        Unitary::Oracle(o) => {
            for k in &v.kets {
                let (phase, out) = oracle_map(env, target, o, &k.basis[..t])?;
                let mut basis = out;
                basis.extend_from_slice(&k.basis[t..]);
                kets.push(BasisKet { amp: k.amp * phase, basis, stack: k.stack.clone() });
            }
        }
        Unitary::Dis => return apply_dis(v, t),
        Unitary::Reduce { bits, n } => return apply_reduce(v, t, bits, *n),
    }
    Ok(merge_kets(&EnValue::new(v.width, kets)))
}

/// Groups kets by (suffix, stack), returning the dense prefix vector of each
/// group.
fn prefix_groups(v: &EnValue, t: usize) -> Result<Vec<((Bits, Vec<Bits>), Vec<Complex64>)>> {
    if t > 20 {
        return Err(Error::WidthMismatch(format!("{t}-qubit amplitude transform is too large")));
    }
    let mut groups: std::collections::BTreeMap<(Bits, Vec<Bits>), Vec<Complex64>> = Default::default();
    for k in &v.kets {
        let g = groups.entry((k.basis[t..].to_vec(), k.stack.clone())).or_insert_with(|| vec![Complex64::default(); 1 << t]);
        g[bits_to_u64(&k.basis[..t]) as usize] += k.amp;
    }
    Ok(groups.into_iter().collect())
}

fn ungroup(v: &EnValue, t: usize, groups: Vec<((Bits, Vec<Bits>), Vec<Complex64>)>) -> EnValue {
    let mut kets = Vec::new();
    for ((suffix, stack), zs) in groups {
        for (j, z) in zs.into_iter().enumerate() {
            let mut basis = u64_to_bits(j as u64, t);
            basis.extend_from_slice(&suffix);
            kets.push(BasisKet { amp: z, basis, stack: stack.clone() });
        }
    }
    merge_kets(&EnValue::new(v.width, kets))
}

/// Diffusion on the leading `t` qubits: every slot becomes
/// `(2/2^t)·Σ_u z_u − z_j` within its (suffix, stack) group.
pub fn apply_dis(v: &EnValue, t: usize) -> Result<EnValue> {
    let groups = prefix_groups(v, t)?
        .into_iter()
        .map(|(key, zs)| {
            let mean2 = zs.iter().sum::<Complex64>() * (2.0 / zs.len() as f64);
            (key, zs.iter().map(|z| mean2 - z).collect())
        })
        .collect();
    Ok(ungroup(v, t, groups))
}

/// Amplification on the leading `t` qubits relative to basis `c`:
/// `(2/2^t)·Σ_u w_u z_u − w_j z_j` with `w_u = 1/⁴√(2ⁿ)` when slot `u` is
/// `c` and `√(1 − 1/√(2ⁿ))` otherwise.
pub fn apply_reduce(v: &EnValue, t: usize, c: &[bool], n: u32) -> Result<EnValue> {
    if c.len() != t {
        return Err(Error::WidthMismatch(format!("reduce basis has {} bits, locus has {t}", c.len())));
    }
    let root = 2f64.powi(n as i32).sqrt();
    let w_c = 1.0 / root.sqrt();
    let w_o = (1.0 - 1.0 / root).sqrt();
    let cu = bits_to_u64(c) as usize;
    let w = |u: usize| if u == cu { w_c } else { w_o };
    let groups = prefix_groups(v, t)?
        .into_iter()
        .map(|(key, zs)| {
            let s = zs.iter().enumerate().map(|(u, z)| z * w(u)).sum::<Complex64>() * (2.0 / zs.len() as f64);
            (key, zs.iter().enumerate().map(|(j, z)| s - z * w(j)).collect())
        })
        .collect();
    Ok(ungroup(v, t, groups))
}

/// Outcomes of measuring the leading `n` qubits, sorted by value, with
/// their probabilities `Σ|z|²`.
pub fn outcome_distribution(v: &EnValue, n: usize) -> Vec<(u64, f64)> {
    let mut acc: std::collections::BTreeMap<u64, f64> = Default::default();
    for k in &v.kets {
        *acc.entry(bits_to_u64(&k.basis[..n])).or_default() += k.amp.norm_sqr();
    }
    acc.into_iter().collect()
}

/// Projects onto outcome `c` of the leading `n` qubits, strips them, and
/// rescales by `1/√r`.  Returns the remaining value and `r`.
pub fn project_outcome(v: &EnValue, n: usize, c: u64) -> (EnValue, f64) {
    let prefix = u64_to_bits(c, n);
    let kept: Vec<&BasisKet> = v.kets.iter().filter(|k| k.basis[..n] == prefix[..]).collect();
    let r: f64 = kept.iter().map(|k| k.amp.norm_sqr()).sum();
    let scale = if r > 0.0 { 1.0 / r.sqrt() } else { 0.0 };
    let kets = kept
        .into_iter()
        .map(|k| BasisKet { amp: k.amp * scale, basis: k.basis[n..].to_vec(), stack: k.stack.clone() })
        .collect();
    (EnValue::new(v.width - n, kets), r)
}

/// The interpreter.
pub struct Interp<'o> {
    policy: MeasurePolicy,
    rng: ChaCha8Rng,
    forced_next: usize,
    pub store: ClassicalStore,
    pub plans: Vec<(String, RewritePlan)>,
    observer: &'o mut dyn Observer,
}

impl<'o> Interp<'o> {
    pub fn new(policy: MeasurePolicy, observer: &'o mut dyn Observer) -> Self {
        let seed = match &policy {
            MeasurePolicy::Seeded(s) => *s,
            MeasurePolicy::Forced(_) => 0,
        };
        Interp {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            forced_next: 0,
            store: ClassicalStore::default(),
            plans: Vec::new(),
            observer,
        }
    }

    fn record(&mut self, label: &str, plan: RewritePlan) {
        self.plans.push((label.to_string(), plan));
    }

    /// Evaluates a statement list in `mode`, normalizing after each statement.
    pub fn eval_stmts(&mut self, env: &KindEnv, state: &mut State, mode: Mode, body: &[Stmt]) -> Result<()> {
        for st in body {
            self.eval_stmt(env, state, mode, st)?;
            let plan = normalize_state(env, state)?;
            self.record("normalize", plan);
            if mode == Mode::C {
                self.observer.statement(env, st, state);
            }
        }
        Ok(())
    }

    fn eval_stmt(&mut self, env: &KindEnv, state: &mut State, mode: Mode, st: &Stmt) -> Result<()> {
        match st {
            Stmt::Skip => Ok(()),
            Stmt::Assert(p) => self.observer.assert(env, state, p),
            Stmt::Call { name, .. } => Err(Error::UnknownProcedure(name.clone())),
            Stmt::LetC { var, value, body } => {
                let v = eval_const(env, value)?;
                let inner = env.with_c(var, v)?;
                self.eval_stmts(&inner, state, mode, body)
            }
            Stmt::LetM { var, target, body } => {
                if mode == Mode::M {
                    return Err(Error::MeasureInQuantumConditional(target.clone()));
                }
                let y = env.whole(target)?;
                let (plan, l) = rewrite_to_prefix(state, &y, true)?;
                self.record("measure", plan);
                let mval = self.measure(target, state, &l, y.width())?;
                self.store.bindings.push((var.clone(), mval));
                self.store.measured.push((target.clone(), mval));
                let inner = env.with_m(var, Some(mval))?;
                self.eval_stmts(&inner, state, mode, body)
            }
            Stmt::Apply { locus, op } => self.eval_apply(env, state, &resolve_locus(env, locus)?, op),
            Stmt::QIf { guard, body } => self.eval_if(env, state, guard, body),
            Stmt::CIf { guard, then_branch, else_branch } => {
                if eval_classical_bexp(env, guard)? {
                    self.eval_stmts(env, state, mode, then_branch)
                } else {
                    self.eval_stmts(env, state, mode, else_branch)
                }
            }
            Stmt::For { var, lo, hi, guard, body } => {
                let (lo, hi) = loop_bounds(env, lo, hi)?;
                for j in lo..hi {
                    let inner = env.with_c(var, j)?;
                    match guard {
                        Some(g) if g.is_quantum() => self.eval_if(&inner, state, g, body)?,
                        Some(g) if !eval_classical_bexp(&inner, g)? => {}
                        _ => self.eval_stmts(&inner, state, Mode::M, body)?,
                    }
                    let plan = normalize_state(env, state)?;
                    self.record("normalize", plan);
                }
                Ok(())
            }
        }
    }

    fn eval_apply(&mut self, env: &KindEnv, state: &mut State, target: &Locus, op: &Unitary) -> Result<()> {
        if let Unitary::Oracle(o) = op {
            check_oracle(env, target, o)?;
        }
        let sigma = TypeEnv::of_state(state);
        let (mut s2, mut plan, l) = env_rewrite_to_prefix(&sigma, target)?;
        let t = s2.type_of(&l).unwrap_or(QType::EN);
        let exact = l.width() == target.width();
        let shortcut = matches!(
            (op, t),
            (Unitary::H, QType::Nor) | (Unitary::H, QType::Had) | (Unitary::Oracle(_), QType::Nor)
        ) && (exact || matches!(op, Unitary::Oracle(_)));
        if !shortcut {
            cast_to_en(&mut s2, &mut plan, &l)?;
        }
        apply_plan_state(state, &plan)?;
        self.record("apply", plan);
        let i = entry_index(state, &l)?;
        let value = &state.entries[i].value;
        let new = match (op, value) {
            (Unitary::H, QuantumValue::Nor { bits, .. }) => {
                QuantumValue::Had { phases: bits.iter().map(|&b| if b { 0.5 } else { 0.0 }).collect() }
            }
            (Unitary::H, QuantumValue::Had { phases }) => {
                let bits = phases
                    .iter()
                    .map(|&r| {
                        let r = r.rem_euclid(1.0);
                        if r < 1e-9 || r > 1.0 - 1e-9 {
                            Ok(false)
                        } else if (r - 0.5).abs() < 1e-9 {
                            Ok(true)
                        } else {
                            Err(Error::TypeMismatch(format!("H on a Had value with phase {r} is not a basis state")))
                        }
                    })
                    .collect::<Result<Bits>>()?;
                QuantumValue::nor(bits)
            }
            (Unitary::Oracle(o), QuantumValue::Nor { amp, bits, stack }) => {
                let (phase, out) = oracle_map(env, target, o, bits)?;
                QuantumValue::Nor { amp: amp * phase, bits: out, stack: stack.clone() }
            }
            (_, QuantumValue::En(v)) => QuantumValue::En(apply_en(env, target, op, v)?),
            _ => return Err(Error::TypeMismatch(format!("cannot apply to {} value", value.qtype()))),
        };
        state.entries[i].value = new;
        Ok(())
    }

    fn measure(&mut self, var: &str, state: &mut State, l: &Locus, n: usize) -> Result<MVal> {
        let i = entry_index(state, l)?;
        let QuantumValue::En(v) = &state.entries[i].value else {
            return Err(Error::TypeMismatch("measured entry is not EN".into()));
        };
        let dist = outcome_distribution(v, n);
        let outcome = match &self.policy {
            MeasurePolicy::Seeded(_) => {
                let total: f64 = dist.iter().map(|(_, p)| p).sum();
                let x: f64 = self.rng.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = dist.last().map(|(c, _)| *c).ok_or_else(|| {
                    Error::TypeMismatch(format!("measured value of `{var}` has no kets"))
                })?;
                for (c, p) in &dist {
                    acc += p;
                    if x < acc {
                        pick = *c;
                        break;
                    }
                }
                pick
            }
            MeasurePolicy::Forced(list) => {
                let Some(&c) = list.get(self.forced_next) else {
                    return Err(Error::OutcomesExhausted { var: var.to_string(), choices: dist });
                };
                self.forced_next += 1;
                if !dist.iter().any(|(d, _)| *d == c) {
                    return Err(Error::ForcedOutcomeImpossible { var: var.to_string(), outcome: c });
                }
                c
            }
        };
        let (rest, r) = project_outcome(v, n, outcome);
        let rest_locus = l.split_at(n).1;
        if rest_locus.is_empty() {
            state.entries.remove(i);
        } else {
            state.entries[i] = Entry { locus: rest_locus, value: QuantumValue::En(rest) };
        }
        Ok(MVal { prob: r, outcome })
    }

    fn eval_if(&mut self, env: &KindEnv, state: &mut State, guard: &BExp, body: &[Stmt]) -> Result<()> {
        let kb = fv_bexp(env, guard)?;
        let kbody = fv_stmts(env, body)?;
        if kb.intersects(&kbody) {
            return Err(Error::CloneViolation(format!("{kb} and {kbody}")));
        }
        let (plan, l) = rewrite_to_prefix(state, &kb.concat(&kbody), true)?;
        self.record("if", plan);
        let i = entry_index(state, &l)?;
        let pre = state.entries[i].clone();
        let QuantumValue::En(v) = &pre.value else {
            return Err(Error::TypeMismatch("guarded entry is not EN".into()));
        };
        let guarded = apply_guard(env, guard, &kb, v)?;
        let (yes, no) = split_by_guard(env, guard, &kb, &guarded)?;
        let sub_locus = l.split_at(kb.width()).1;
        let mut sub = State { entries: vec![Entry { locus: sub_locus.clone(), value: QuantumValue::En(push_frozen(&yes, kb.width())?) }] };
        self.eval_stmts(env, &mut sub, Mode::M, body)?;
        let back = restore_entry(sub, &sub_locus)?;
        let mut merged = pop_frozen_or_empty(&back, kb.width())?;
        merged.kets.extend(no.kets);
        let post = Entry { locus: l.clone(), value: QuantumValue::En(merge_kets(&merged)) };
        state.entries[i] = post.clone();
        self.observer.quantum_if(env, guard, body, &pre, &post)
    }
}

/// Permutes the single entry of a conditional body's sub-state back to
/// `locus` order and returns its `EN` value.
fn restore_entry(sub: State, locus: &Locus) -> Result<EnValue> {
    let mut entries = sub.entries;
    if locus.is_empty() && entries.is_empty() {
        return Ok(EnValue::new(0, Vec::new()));
    }
    if entries.len() != 1 || !entries[0].locus.same_qubits(locus) {
        return Err(Error::TypeMismatch(format!("conditional body changed its locus {locus}")));
    }
    let e = entries.pop().expect("one entry");
    let mut value = e.value;
    let mut cur = e.locus;
    for (n, i, k) in prefix_permutation(&cur.qubits(), &locus.qubits())? {
        value = permute_value(&value, n, i, k)?;
        cur = permute_locus(&cur, n, i, k);
    }
    Ok(value.to_en())
}

fn pop_frozen_or_empty(v: &EnValue, n: usize) -> Result<EnValue> {
    if v.kets.is_empty() {
        Ok(EnValue::new(v.width + n, Vec::new()))
    } else {
        pop_frozen(v)
    }
}

/// The initial all-zero state of a program.
pub fn initial_state(env: &KindEnv) -> State {
    State::zeros(env.arrays().iter().map(|(v, n)| (v.as_str(), *n)))
}

/// Evaluates `body` from `state` in mode `C`.
pub fn eval(
    env: &KindEnv,
    state: &State,
    body: &[Stmt],
    policy: MeasurePolicy,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    let mut it = Interp::new(policy, observer);
    let mut s = state.clone();
    it.eval_stmts(env, &mut s, Mode::C, body)?;
    Ok(RunResult { state: s, store: it.store, plans: it.plans })
}

/// Runs a whole program from the all-zero state.
pub fn run_program(prog: &Program, policy: MeasurePolicy, observer: &mut dyn Observer) -> Result<RunResult> {
    let prog = expand_calls(prog)?;
    let env = KindEnv::from_decls(&prog.decls)?;
    eval(&env, &initial_state(&env), &prog.body, policy, observer)
}
