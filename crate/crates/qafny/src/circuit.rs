//! Compilation of Qafny statements to flat gate programs over concrete
//! qubits, and OpenQASM 2.0 emission/reading.
//!
//! Qubits are laid out in declaration order, each array in a contiguous
//! block; ancillas for multi-controlled gates are appended after all
//! declared qubits and always returned to `|0⟩`.  Every basis is little
//! endian: qubit `i` of a range has weight `2^i`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::kinds::{eval_aexp_with, eval_classical_bexp, eval_const, fv_bexp, loop_bounds, resolve_locus, KindEnv};
use crate::oqasm::{oq_lower, qft_big_endian, sizes_of_locus, swap_gates};
use crate::qstate::{bits_to_u64, u64_to_bits, Locus, Range};
use crate::surface::{expand_calls, BExp, Oracle, Program, Stmt, Unitary};
use crate::typecheck::{check_modulus, typecheck, Mode, TypeEnv};

/// A gate over concrete qubits.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    /// Phase gate `diag(1, e^{±iπ/2^k})`.
    Rz { k: u32, neg: bool, q: usize },
    /// `Cx(control, target)`.
    Cx(usize, usize),
    /// `Ccx(control, control, target)`.
    Ccx(usize, usize, usize),
    /// The body applied when `control` is `|1⟩`.
    Ctrl { control: usize, body: Vec<Gate> },
    /// Measurement of `q` into classical bit `c`.
    Measure { q: usize, c: usize },
}

impl Gate {
    /// Every qubit the gate touches, controls included.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Rz { q, .. } | Gate::Measure { q, .. } => vec![*q],
            Gate::Cx(a, b) => vec![*a, *b],
            Gate::Ccx(a, b, c) => vec![*a, *b, *c],
            Gate::Ctrl { control, body } => {
                let mut v = vec![*control];
                v.extend(body.iter().flat_map(|g| g.qubits()));
                v
            }
        }
    }
}

/// The inverse of a measurement-free gate list.
pub fn invert_gates(gates: &[Gate]) -> Vec<Gate> {
    gates
        .iter()
        .rev()
        .map(|g| match g {
            Gate::Rz { k, neg, q } => Gate::Rz { k: *k, neg: !neg, q: *q },
            Gate::Ctrl { control, body } => Gate::Ctrl { control: *control, body: invert_gates(body) },
            other => other.clone(),
        })
        .collect()
}

/// Multi-controlled X as nested control blocks.
pub fn mcx(controls: &[usize], target: usize) -> Gate {
    controls
        .iter()
        .rev()
        .fold(Gate::X(target), |g, &c| Gate::Ctrl { control: c, body: vec![g] })
}

/// Multi-controlled X that fires when the controls hold `values`.
pub fn mcx_on(controls: &[usize], values: &[bool], target: usize) -> Vec<Gate> {
    let flips: Vec<Gate> = controls.iter().zip(values).filter(|(_, v)| !**v).map(|(c, _)| Gate::X(*c)).collect();
    let mut out = flips.clone();
    out.push(mcx(controls, target));
    out.extend(flips);
    out
}

/// A flat gate program.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateProgram {
    /// Total qubits, ancillas included.
    pub num_qubits: usize,
    /// Declared (non-ancilla) qubits.
    pub num_declared: usize,
    pub gates: Vec<Gate>,
}

impl GateProgram {
    /// JSON form of the gate list.
    pub fn to_json(&self) -> Value {
        fn gate(g: &Gate) -> Value {
            match g {
                Gate::H(q) => json!({"gate": "h", "q": q}),
                Gate::X(q) => json!({"gate": "x", "q": q}),
                Gate::Rz { k, neg, q } => json!({"gate": "rz", "k": k, "neg": neg, "q": q}),
                Gate::Cx(a, b) => json!({"gate": "cx", "control": a, "target": b}),
                Gate::Ccx(a, b, c) => json!({"gate": "ccx", "controls": [a, b], "target": c}),
                Gate::Ctrl { control, body } => {
                    json!({"gate": "ctrl", "control": control, "body": body.iter().map(gate).collect::<Vec<_>>()})
                }
                Gate::Measure { q, c } => json!({"gate": "measure", "q": q, "c": c}),
            }
        }
        json!({
            "qubits": self.num_qubits,
            "declared": self.num_declared,
            "gates": self.gates.iter().map(gate).collect::<Vec<_>>(),
        })
    }
}

/// Map from `(array, index)` to concrete qubits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layout {
    blocks: Vec<(String, usize, usize)>,
}

impl Layout {
    /// Contiguous blocks in declaration order.
    pub fn from_env(env: &KindEnv) -> Self {
        let mut start = 0;
        let blocks = env
            .arrays()
            .iter()
            .map(|(v, n)| {
                let b = (v.clone(), start, *n);
                start += n;
                b
            })
            .collect();
        Layout { blocks }
    }

    pub fn num_declared(&self) -> usize {
        self.blocks.iter().map(|(_, _, n)| n).sum()
    }

    pub fn qubit(&self, var: &str, i: usize) -> Result<usize> {
        let (_, s, n) = self
            .blocks
            .iter()
            .find(|(v, _, _)| v == var)
            .ok_or_else(|| Error::UnboundVariable(var.to_string()))?;
        if i < *n {
            Ok(s + i)
        } else {
            Err(Error::RangeOutOfBounds(format!("{var}[{i}]")))
        }
    }

    pub fn locus(&self, l: &Locus) -> Result<Vec<usize>> {
        l.qubits().iter().map(|(v, i)| self.qubit(v, *i)).collect()
    }

    /// Inverse lookup for diagnostics and dense embedding.
    pub fn name_of(&self, q: usize) -> Option<(String, usize)> {
        self.blocks.iter().find(|(_, s, n)| q >= *s && q < s + n).map(|(v, s, _)| (v.clone(), q - s))
    }
}

struct Compiler {
    layout: Layout,
}

impl Compiler {
    fn stmts(&self, env: &KindEnv, body: &[Stmt], out: &mut Vec<Gate>) -> Result<()> {
        body.iter().try_for_each(|s| self.stmt(env, s, out))
    }

    fn stmt(&self, env: &KindEnv, st: &Stmt, out: &mut Vec<Gate>) -> Result<()> {
        match st {
            Stmt::Skip | Stmt::Assert(_) => Ok(()),
            Stmt::Call { name, .. } => Err(Error::UnknownProcedure(name.clone())),
            Stmt::LetC { var, value, body } => {
                let v = eval_const(env, value)?;
                self.stmts(&env.with_c(var, v)?, body, out)
            }
            Stmt::LetM { var, target, body } => {
                for q in self.layout.locus(&env.whole(target)?)? {
                    out.push(Gate::Measure { q, c: q });
                }
                self.stmts(&env.with_m(var, None)?, body, out)
            }
            Stmt::Apply { locus, op } => {
                let l = resolve_locus(env, locus)?;
                self.apply(env, &l, op, out)
            }
            Stmt::QIf { guard, body } => self.quantum_if(env, guard, body, out),
            Stmt::CIf { guard, then_branch, else_branch } => {
                let b = eval_classical_bexp(env, guard).map_err(|_| {
                    Error::UnsupportedOracleLowering(format!("classical branch on a measurement outcome: {guard}"))
                })?;
                self.stmts(env, if b { then_branch } else { else_branch }, out)
            }
            Stmt::For { var, lo, hi, guard, body } => {
                let (lo, hi) = loop_bounds(env, lo, hi)?;
                for j in lo..hi {
                    let inner = env.with_c(var, j)?;
                    match guard {
                        Some(g) if g.is_quantum() => self.quantum_if(&inner, g, body, out)?,
                        Some(g) if !eval_classical_bexp(&inner, g)? => {}
                        _ => self.stmts(&inner, body, out)?,
                    }
                }
                Ok(())
            }
        }
    }

    fn quantum_if(&self, env: &KindEnv, guard: &BExp, body: &[Stmt], out: &mut Vec<Gate>) -> Result<()> {
        let (control, negated) = self.guard(env, guard, out)?;
        let mut inner = Vec::new();
        self.stmts(env, body, &mut inner)?;
        if negated {
            out.push(Gate::X(control));
        }
        out.push(Gate::Ctrl { control, body: inner });
        if negated {
            out.push(Gate::X(control));
        }
        Ok(())
    }

    /// Emits the guard's comparison circuit; returns the control qubit and
    /// whether the guard is negated.
    fn guard(&self, env: &KindEnv, guard: &BExp, out: &mut Vec<Gate>) -> Result<(usize, bool)> {
        match guard {
            BExp::Not(b) => {
                let (c, n) = self.guard(env, b, out)?;
                Ok((c, !n))
            }
            BExp::Bit(r) => {
                let l = fv_bexp(env, &BExp::Bit(r.clone()))?;
                Ok((self.layout.locus(&l)?[0], false))
            }
            BExp::QCmp { op, lhs, rhs, .. } => {
                let kb = fv_bexp(env, guard)?;
                let qs = kb.qubits();
                let operands = Locus::from_qubits(&qs[..qs.len() - 1]);
                let phys = self.layout.locus(&operands)?;
                let t = self.layout.qubit(&qs[qs.len() - 1].0, qs[qs.len() - 1].1)?;
                let m = operands.width();
                if m > 16 {
                    return Err(Error::UnsupportedOracleLowering(format!("comparison over {m} qubits")));
                }
                for v in 0..(1u64 << m) {
                    let bits = u64_to_bits(v, m);
                    let mut read = |r: &Range| crate::interp::read_range(&operands, &bits, r);
                    let a = eval_aexp_with(env, lhs, &mut read)?;
                    let b = eval_aexp_with(env, rhs, &mut read)?;
                    if op.eval(a, b) {
                        out.extend(mcx_on(&phys, &bits, t));
                    }
                }
                Ok((t, false))
            }
            other => Err(Error::UnsupportedOracleLowering(format!("classical guard `{other}` in a quantum if"))),
        }
    }

    fn apply(&self, env: &KindEnv, l: &Locus, op: &Unitary, out: &mut Vec<Gate>) -> Result<()> {
        let qs = self.layout.locus(l)?;
        let w = qs.len();
        match op {
            Unitary::H => out.extend(qs.iter().map(|&q| Gate::H(q))),
            Unitary::Qft => out.extend(qft_little_endian(&qs)),
            Unitary::Rqft => out.extend(invert_gates(&qft_little_endian(&qs))),
            Unitary::Dis => out.extend(diffusion(&qs)),
            Unitary::Reduce { .. } => {
                return Err(Error::UnsupportedOracleLowering("reduce has no gate realization".into()))
            }
            Unitary::Oracle(Oracle::AddConst(k)) => {
                let k = eval_const(env, k)?.rem_euclid(1i64 << w.min(62)) as u64;
                for i in 0..w {
                    if k >> i & 1 == 1 {
                        out.extend(increment(&qs[i..]));
                    }
                }
            }
            Unitary::Oracle(Oracle::MulMod { a, n }) => {
                let (a, n) = (eval_const(env, a)?, eval_const(env, n)?);
                check_modulus(a, n, w)?;
                let perm: Vec<u64> = (0..1u64 << w)
                    .map(|v| if (v as i64) < n { (a.rem_euclid(n) as u128 * v as u128 % n as u128) as u64 } else { v })
                    .collect();
                out.extend(permutation_circuit(&qs, &perm)?);
            }
            Unitary::Oracle(o @ Oracle::PowMod { .. }) => {
                let env2 = env.clone();
                let perm: Vec<u64> = (0..1u64 << w)
                    .map(|v| {
                        crate::interp::oracle_map(&env2, l, o, &u64_to_bits(v, w)).map(|(_, b)| bits_to_u64(&b))
                    })
                    .collect::<Result<_>>()?;
                out.extend(permutation_circuit(&qs, &perm)?);
            }
            Unitary::Oracle(Oracle::Oqasm(ins)) => {
                let (sizes, _) = sizes_of_locus(l);
                let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
                for ((v, _), q) in l.qubits().iter().zip(&qs) {
                    map.entry(v.clone()).or_default().push(*q);
                }
                out.extend(oq_lower(&sizes, ins, &map)?);
            }
        }
        Ok(())
    }
}

/// QFT on little-endian qubits: the standard circuit on the reversed order
/// followed by the reversal swaps.
pub fn qft_little_endian(qs: &[usize]) -> Vec<Gate> {
    let rev: Vec<usize> = qs.iter().rev().copied().collect();
    let mut g = qft_big_endian(&rev);
    for j in 0..qs.len() / 2 {
        g.extend(swap_gates(qs[j], qs[qs.len() - 1 - j]));
    }
    g
}

/// `2|s⟩⟨s| − I` with `|s⟩` the uniform superposition.
pub fn diffusion(qs: &[usize]) -> Vec<Gate> {
    let mut g: Vec<Gate> = qs.iter().map(|&q| Gate::H(q)).collect();
    g.extend(qs.iter().map(|&q| Gate::X(q)));
    let (last, rest) = qs.split_last().expect("nonempty locus");
    let z = Gate::Rz { k: 0, neg: false, q: *last };
    g.push(rest.iter().rev().fold(z, |g, &c| Gate::Ctrl { control: c, body: vec![g] }));
    g.extend(qs.iter().map(|&q| Gate::X(q)));
    g.extend(qs.iter().map(|&q| Gate::H(q)));
    // X·Z·X·Z = −I turns I − 2|s⟩⟨s| into 2|s⟩⟨s| − I.
    let q = qs[0];
    g.extend([Gate::X(q), Gate::Rz { k: 0, neg: false, q }, Gate::X(q), Gate::Rz { k: 0, neg: false, q }]);
    g
}

/// Adds one to the little-endian register `qs`, modulo `2^|qs|`.
pub fn increment(qs: &[usize]) -> Vec<Gate> {
    (0..qs.len()).rev().map(|m| mcx(&qs[..m], qs[m])).collect()
}

/// Circuit for a basis permutation `v ↦ perm[v]` of little-endian `qs`,
/// built from cycle decompositions into transpositions, each realized along
/// a Gray path with fully controlled X gates.  Not optimized.
pub fn permutation_circuit(qs: &[usize], perm: &[u64]) -> Result<Vec<Gate>> {
    let w = qs.len();
    let mut seen = vec![false; perm.len()];
    let mut gates = Vec::new();
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = start;
        while !seen[v] {
            seen[v] = true;
            cycle.push(v as u64);
            v = perm[v] as usize;
        }
        if v != start {
            return Err(Error::IrreversibleOracle("basis map is not a permutation".into()));
        }
        for i in (0..cycle.len().saturating_sub(1)).rev() {
            gates.extend(transposition(qs, w, cycle[i], cycle[i + 1]));
        }
    }
    Ok(gates)
}

fn transposition(qs: &[usize], w: usize, a: u64, b: u64) -> Vec<Gate> {
    let mut path = vec![a];
    let mut cur = a;
    for bit in 0..w {
        if (a ^ b) >> bit & 1 == 1 {
            cur ^= 1 << bit;
            path.push(cur);
        }
    }
    let step = |x: u64, y: u64| -> Vec<Gate> {
        let bit = (x ^ y).trailing_zeros() as usize;
        let ctrls: Vec<usize> = (0..w).filter(|&i| i != bit).map(|i| qs[i]).collect();
        let vals: Vec<bool> = (0..w).filter(|&i| i != bit).map(|i| x >> i & 1 == 1).collect();
        mcx_on(&ctrls, &vals, qs[bit])
    };
    let m = path.len() - 1;
    let mut g = Vec::new();
    for i in 0..m {
        g.extend(step(path[i], path[i + 1]));
    }
    for i in (0..m.saturating_sub(1)).rev() {
        g.extend(step(path[i], path[i + 1]));
    }
    g
}

struct Flattener {
    next: usize,
    free: Vec<usize>,
    high: usize,
}

impl Flattener {
    fn alloc(&mut self) -> usize {
        if let Some(q) = self.free.pop() {
            return q;
        }
        let q = self.next;
        self.next += 1;
        self.high = self.high.max(self.next);
        q
    }

    /// Computes the AND of `controls` into a fresh ancilla; returns it and
    /// the ladder to undo afterwards.
    fn and_into(&mut self, controls: &[usize], out: &mut Vec<Gate>) -> (usize, Vec<Gate>, Vec<usize>) {
        let mut ladder = Vec::new();
        let mut used = Vec::new();
        let mut acc = controls[0];
        for &c in &controls[1..] {
            let a = self.alloc();
            used.push(a);
            ladder.push(Gate::Ccx(acc, c, a));
            acc = a;
        }
        out.extend(ladder.iter().cloned());
        (acc, ladder, used)
    }

    fn release(&mut self, ladder: Vec<Gate>, used: Vec<usize>, out: &mut Vec<Gate>) {
        out.extend(ladder.into_iter().rev());
        self.free.extend(used);
    }

    fn gates(&mut self, gates: &[Gate], controls: &[usize], out: &mut Vec<Gate>) -> Result<()> {
        gates.iter().try_for_each(|g| self.gate(g, controls, out))
    }

    fn gate(&mut self, g: &Gate, controls: &[usize], out: &mut Vec<Gate>) -> Result<()> {
        for q in g.qubits() {
            if controls.contains(&q) {
                return Err(Error::ControlTargetOverlap(q));
            }
        }
        match (g, controls) {
            (Gate::Measure { .. }, []) => out.push(g.clone()),
            (Gate::Measure { q, .. }, _) => {
                return Err(Error::UnsupportedOracleLowering(format!("controlled measurement of qubit {q}")))
            }
            (Gate::Ctrl { control, body }, _) => {
                let mut cs = controls.to_vec();
                cs.push(*control);
                if cs.len() > 2 {
                    let (a, ladder, used) = self.and_into(&cs, out);
                    self.gates(body, &[a], out)?;
                    self.release(ladder, used, out);
                } else {
                    self.gates(body, &cs, out)?;
                }
            }
            (Gate::Cx(a, b), _) => {
                self.gate(&Gate::Ctrl { control: *a, body: vec![Gate::X(*b)] }, controls, out)?;
            }
            (Gate::Ccx(a, b, c), _) => {
                let inner = Gate::Ctrl { control: *b, body: vec![Gate::X(*c)] };
                self.gate(&Gate::Ctrl { control: *a, body: vec![inner] }, controls, out)?;
            }
            (_, []) => out.push(g.clone()),
            (Gate::X(t), [c]) => out.push(Gate::Cx(*c, *t)),
            (Gate::X(t), [c1, c2]) => out.push(Gate::Ccx(*c1, *c2, *t)),
            (Gate::H(t), [c]) => out.extend(controlled_h(*c, *t)),
            (Gate::Rz { k, neg, q }, [c]) => out.extend(controlled_phase(*c, *q, *k, *neg)),
            (_, cs) => {
                let (a, ladder, used) = self.and_into(cs, out);
                self.gate(g, &[a], out)?;
                self.release(ladder, used, out);
            }
        }
        Ok(())
    }
}

/// Controlled Hadamard, exact including the global phase.
pub fn controlled_h(c: usize, t: usize) -> Vec<Gate> {
    let s = |q| Gate::Rz { k: 1, neg: false, q };
    let sdg = |q| Gate::Rz { k: 1, neg: true, q };
    let tg = |q| Gate::Rz { k: 2, neg: false, q };
    let tdg = |q| Gate::Rz { k: 2, neg: true, q };
    vec![
        Gate::H(t),
        sdg(t),
        Gate::Cx(c, t),
        Gate::H(t),
        tg(t),
        Gate::Cx(c, t),
        tg(t),
        Gate::H(t),
        s(t),
        Gate::X(t),
        s(c),
        // The sequence above is `ch` times e^{iπ/4}; X·T†·X·T† = e^{−iπ/4}·I
        // removes it so the block stays exact when nested.
        Gate::X(t),
        tdg(t),
        Gate::X(t),
        tdg(t),
    ]
}

/// Controlled `diag(1, e^{±iπ/2^k})`.
pub fn controlled_phase(c: usize, t: usize, k: u32, neg: bool) -> Vec<Gate> {
    vec![
        Gate::Rz { k: k + 1, neg, q: c },
        Gate::Cx(c, t),
        Gate::Rz { k: k + 1, neg: !neg, q: t },
        Gate::Cx(c, t),
        Gate::Rz { k: k + 1, neg, q: t },
    ]
}

/// Removes control blocks, drawing ancillas above `num_qubits`.
pub fn flatten(gates: &[Gate], num_qubits: usize) -> Result<GateProgram> {
    let mut f = Flattener { next: num_qubits, free: Vec::new(), high: num_qubits };
    let mut out = Vec::new();
    f.gates(gates, &[], &mut out)?;
    Ok(GateProgram { num_qubits: f.high, num_declared: num_qubits, gates: out })
}

/// `ctrl(control, ε)`: the flattened controlled version of a gate list.
pub fn ctrl_wrap(control: usize, gates: &[Gate], num_qubits: usize) -> Result<GateProgram> {
    flatten(&[Gate::Ctrl { control, body: gates.to_vec() }], num_qubits)
}

/// Compiles a statement list under Ω, without type checking.
pub fn compile(env: &KindEnv, body: &[Stmt]) -> Result<GateProgram> {
    let c = Compiler { layout: Layout::from_env(env) };
    let mut gates = Vec::new();
    c.stmts(env, body, &mut gates)?;
    flatten(&gates, c.layout.num_declared())
}

/// Type checks and compiles a whole program.
pub fn compile_program(prog: &Program) -> Result<GateProgram> {
    let prog = expand_calls(prog)?;
    let env = KindEnv::from_decls(&prog.decls)?;
    typecheck(&env, &TypeEnv::initial(&env), Mode::C, &prog.body)?;
    compile(&env, &prog.body)
}

/// OpenQASM 2.0 text of a flattened program.
pub fn emit_qasm(p: &GateProgram) -> Result<String> {
    let d = p.num_qubits;
    let mut s = String::new();
    let _ = writeln!(s, "OPENQASM 2.0;");
    let _ = writeln!(s, "include \"qelib1.inc\";");
    let _ = writeln!(s, "qreg q[{d}]; creg c[{d}];");
    for g in &p.gates {
        match g {
            Gate::H(q) => writeln!(s, "h q[{q}];"),
            Gate::X(q) => writeln!(s, "x q[{q}];"),
            Gate::Rz { k, neg, q } => writeln!(s, "rz({}pi/2^{k}) q[{q}];", if *neg { "-" } else { "" }),
            Gate::Cx(a, b) => writeln!(s, "cx q[{a}],q[{b}];"),
            Gate::Ccx(a, b, c) => writeln!(s, "ccx q[{a}],q[{b}],q[{c}];"),
            Gate::Measure { q, c } => writeln!(s, "measure q[{q}] -> c[{c}];"),
            Gate::Ctrl { .. } => {
                return Err(Error::UnsupportedOracleLowering("control block left in a flattened program".into()))
            }
        }
        .expect("writing to a String");
    }
    Ok(s)
}

/// Reads the OpenQASM 2.0 subset produced by [`emit_qasm`].
pub fn read_qasm(text: &str) -> Result<GateProgram> {
    let mut prog = GateProgram::default();
    let mut saw_header = false;
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let err = |msg: &str| Error::QasmRead { line: line_no, msg: msg.to_string() };
        let line = raw.split("//").next().unwrap_or("").trim();
        for stmt in line.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            if stmt == "OPENQASM 2.0" {
                saw_header = true;
                continue;
            }
            if stmt.starts_with("include") {
                continue;
            }
            if !saw_header {
                return Err(err("missing OPENQASM 2.0 header"));
            }
            let (head, args) = stmt.split_once(char::is_whitespace).ok_or_else(|| err("expected operands"))?;
            let qubit = |a: &str| -> Result<usize> {
                let a = a.trim();
                let inner = a
                    .strip_prefix("q[")
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| err(&format!("bad qubit `{a}`")))?;
                inner.parse().map_err(|_| err(&format!("bad index `{inner}`")))
            };
            let ops: Vec<&str> = args.split(',').collect();
            let g = match head {
                "qreg" => {
                    prog.num_qubits = parse_reg(args, "q").ok_or_else(|| err("bad qreg"))?;
                    prog.num_declared = prog.num_qubits;
                    continue;
                }
                "creg" => continue,
                "h" => Gate::H(qubit(args)?),
                "x" => Gate::X(qubit(args)?),
                "cx" if ops.len() == 2 => Gate::Cx(qubit(ops[0])?, qubit(ops[1])?),
                "ccx" if ops.len() == 3 => Gate::Ccx(qubit(ops[0])?, qubit(ops[1])?, qubit(ops[2])?),
                "measure" => {
                    let (q, c) = args.split_once("->").ok_or_else(|| err("bad measure"))?;
                    let c = c.trim();
                    let c = c
                        .strip_prefix("c[")
                        .and_then(|r| r.strip_suffix(']'))
                        .and_then(|r| r.parse().ok())
                        .ok_or_else(|| err("bad classical bit"))?;
                    Gate::Measure { q: qubit(q)?, c }
                }
                h if h.starts_with("rz(") => {
                    let (angle, rest) = stmt[3..].split_once(')').ok_or_else(|| err("bad rz"))?;
                    let (k, neg) = parse_angle(angle).ok_or_else(|| err(&format!("unsupported angle `{angle}`")))?;
                    Gate::Rz { k, neg, q: qubit(rest)? }
                }
                _ => return Err(err(&format!("unsupported statement `{stmt}`"))),
            };
            for q in g.qubits() {
                if q >= prog.num_qubits {
                    return Err(err(&format!("qubit {q} outside the register")));
                }
            }
            prog.gates.push(g);
        }
    }
    if !saw_header {
        return Err(Error::QasmRead { line: 1, msg: "missing OPENQASM 2.0 header".into() });
    }
    Ok(prog)
}

fn parse_reg(args: &str, name: &str) -> Option<usize> {
    args.trim().strip_prefix(name)?.strip_prefix('[')?.strip_suffix(']')?.parse().ok()
}

/// Parses `pi/2^k`, `-pi/2^k`, `pi`, or `pi/N` with `N` a power of two.
fn parse_angle(a: &str) -> Option<(u32, bool)> {
    let a = a.replace(' ', "");
    let (neg, a) = match a.strip_prefix('-') {
        Some(r) => (true, r.to_string()),
        None => (false, a),
    };
    let rest = a.strip_prefix("pi")?;
    if rest.is_empty() {
        return Some((0, neg));
    }
    let den = rest.strip_prefix('/')?;
    if let Some(k) = den.strip_prefix("2^") {
        return Some((k.parse().ok()?, neg));
    }
    let n: u64 = den.parse().ok()?;
    n.is_power_of_two().then(|| (n.trailing_zeros(), neg))
}
