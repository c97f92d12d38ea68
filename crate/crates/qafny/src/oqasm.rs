//! The reversible oracle sub-language: instructions, the `Nor`/`Phi` basis
//! type system, per-qubit semantics, inversion, the QFT-based adder builder,
//! and lowering to gates.
//!
//! Inside a Qafny `oqasm { … }` block a variable `x` names the qubits of `x`
//! that belong to the oracle's target locus, in locus order; `x[i]` is the
//! `i`-th of them.  Phases are measured in turns (`α(r) = e^{2πir}`) and
//! stored modulo 1.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::circuit::Gate;
use crate::error::{Error, Result};
use crate::qstate::{alpha, Bits, Locus};

/// A qubit position `x[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pos {
    pub var: String,
    pub idx: usize,
}

impl Pos {
    pub fn new(var: impl Into<String>, idx: usize) -> Self {
        Pos { var: var.into(), idx }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.var, self.idx)
    }
}

/// OQASM instructions.
///
/// `Seq` is kept flat: it never contains another `Seq` and never has exactly
/// one element; the empty `Seq` is the identity.  Use [`OqInstr::seq`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OqInstr {
    Id(Pos),
    X(Pos),
    /// `RZ q p`: phase `α(1/2^q)` on `|1⟩`.
    Rz(u32, Pos),
    Rzinv(u32, Pos),
    /// `SR m x`: adds `1/2^{m−i+1}` to qubit `i ≤ m` of a `Phi` variable.
    Sr(u32, String),
    Srinv(u32, String),
    /// `QFT n x`: approximate QFT of precision `n`.
    Qft(u32, String),
    Rqft(u32, String),
    Cu(Pos, Box<OqInstr>),
    Lshift(String),
    Rshift(String),
    Rev(String),
    Seq(Vec<OqInstr>),
}

impl OqInstr {
    /// Builds a normalized sequence.
    pub fn seq(items: impl IntoIterator<Item = OqInstr>) -> OqInstr {
        let mut flat = Vec::new();
        for i in items {
            match i {
                OqInstr::Seq(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().expect("one element")
        } else {
            OqInstr::Seq(flat)
        }
    }

    /// Variables mentioned, in first-mention order.
    pub fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        let mut add = |v: &str| {
            if !out.iter().any(|o| o == v) {
                out.push(v.to_string());
            }
        };
        match self {
            OqInstr::Id(p) | OqInstr::X(p) | OqInstr::Rz(_, p) | OqInstr::Rzinv(_, p) => add(&p.var),
            OqInstr::Sr(_, x)
            | OqInstr::Srinv(_, x)
            | OqInstr::Qft(_, x)
            | OqInstr::Rqft(_, x)
            | OqInstr::Lshift(x)
            | OqInstr::Rshift(x)
            | OqInstr::Rev(x) => add(x),
            OqInstr::Cu(p, body) => {
                add(&p.var);
                body.collect_vars(out);
            }
            OqInstr::Seq(items) => items.iter().for_each(|i| i.collect_vars(out)),
        }
    }

    /// Whether position `p` is untouched by this instruction (no use of the
    /// position itself and no whole-variable instruction on its variable).
    pub fn is_fresh(&self, p: &Pos) -> bool {
        match self {
            OqInstr::Id(q) | OqInstr::X(q) | OqInstr::Rz(_, q) | OqInstr::Rzinv(_, q) => q != p,
            OqInstr::Sr(_, x)
            | OqInstr::Srinv(_, x)
            | OqInstr::Qft(_, x)
            | OqInstr::Rqft(_, x)
            | OqInstr::Lshift(x)
            | OqInstr::Rshift(x)
            | OqInstr::Rev(x) => *x != p.var,
            OqInstr::Cu(q, body) => q != p && body.is_fresh(p),
            OqInstr::Seq(items) => items.iter().all(|i| i.is_fresh(p)),
        }
    }
}

impl fmt::Display for OqInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OqInstr::Id(p) => write!(f, "ID {p}"),
            OqInstr::X(p) => write!(f, "X {p}"),
            OqInstr::Rz(q, p) => write!(f, "RZ {q} {p}"),
            OqInstr::Rzinv(q, p) => write!(f, "RZinv {q} {p}"),
            OqInstr::Sr(m, x) => write!(f, "SR {m} {x}"),
            OqInstr::Srinv(m, x) => write!(f, "SRinv {m} {x}"),
            OqInstr::Qft(n, x) => write!(f, "QFT {n} {x}"),
            OqInstr::Rqft(n, x) => write!(f, "RQFT {n} {x}"),
            OqInstr::Cu(p, body) => write!(f, "CU {p} {{ {body} }}"),
            OqInstr::Lshift(x) => write!(f, "Lshift {x}"),
            OqInstr::Rshift(x) => write!(f, "Rshift {x}"),
            OqInstr::Rev(x) => write!(f, "Rev {x}"),
            OqInstr::Seq(items) => {
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{it}")?;
                }
                Ok(())
            }
        }
    }
}

/// Size environment Σ.
pub type Sizes = BTreeMap<String, usize>;

/// Basis type of an OQASM variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OqType {
    Nor,
    Phi(u32),
}

/// OQASM type environment Ω.
pub type OqEnv = BTreeMap<String, OqType>;

/// Σ and the variable order for an oracle applied to `locus`.
pub fn sizes_of_locus(locus: &Locus) -> (Sizes, Vec<String>) {
    let mut sizes = Sizes::new();
    let mut order = Vec::new();
    for (v, _) in locus.qubits() {
        if !sizes.contains_key(&v) {
            order.push(v.clone());
        }
        *sizes.entry(v).or_insert(0) += 1;
    }
    (sizes, order)
}

fn size_of(sizes: &Sizes, x: &str) -> Result<usize> {
    sizes.get(x).copied().ok_or_else(|| Error::UnboundVariable(x.to_string()))
}

fn check_pos(sizes: &Sizes, p: &Pos) -> Result<()> {
    if p.idx < size_of(sizes, &p.var)? {
        Ok(())
    } else {
        Err(Error::RangeOutOfBounds(p.to_string()))
    }
}

fn type_of(env: &OqEnv, x: &str) -> Result<OqType> {
    env.get(x).copied().ok_or_else(|| Error::UnboundVariable(x.to_string()))
}

fn need_nor(env: &OqEnv, x: &str, what: &str) -> Result<()> {
    match type_of(env, x)? {
        OqType::Nor => Ok(()),
        OqType::Phi(n) => Err(Error::BasisMismatch(format!("{what} needs `{x}` in Nor, found Phi({n})"))),
    }
}

/// Type checks `ins` under Σ and Ω, returning Ω′.
pub fn oq_typecheck(sizes: &Sizes, env: &OqEnv, ins: &OqInstr) -> Result<OqEnv> {
    let mut env = env.clone();
    match ins {
        OqInstr::Id(p) => check_pos(sizes, p)?,
        OqInstr::X(p) | OqInstr::Rz(_, p) | OqInstr::Rzinv(_, p) => {
            check_pos(sizes, p)?;
            need_nor(&env, &p.var, &ins.to_string())?;
        }
        OqInstr::Sr(m, x) | OqInstr::Srinv(m, x) => {
            size_of(sizes, x)?;
            match type_of(&env, x)? {
                OqType::Phi(n) if *m < n => {}
                t => return Err(Error::BasisMismatch(format!("`{ins}` needs Phi(n) with {m} < n, found {t:?}"))),
            }
        }
        OqInstr::Qft(n, x) => {
            if *n as usize > size_of(sizes, x)? {
                return Err(Error::RangeOutOfBounds(format!("QFT precision {n} exceeds `{x}`")));
            }
            need_nor(&env, x, "QFT")?;
            env.insert(x.clone(), OqType::Phi(*n));
        }
        OqInstr::Rqft(n, x) => {
            size_of(sizes, x)?;
            match type_of(&env, x)? {
                OqType::Phi(m) if m == *n => {}
                t => return Err(Error::BasisMismatch(format!("`{ins}` needs Phi({n}), found {t:?}"))),
            }
            env.insert(x.clone(), OqType::Nor);
        }
        OqInstr::Cu(p, body) => {
            check_pos(sizes, p)?;
            need_nor(&env, &p.var, "CU control")?;
            if !body.is_fresh(p) {
                return Err(Error::FreshnessViolation(format!("control {p} is used in the body")));
            }
            let out = oq_typecheck(sizes, &env, body)?;
            if out != env {
                return Err(Error::BasisMismatch(format!("body of CU {p} changes basis types")));
            }
            check_neutral(sizes, body)?;
        }
        OqInstr::Lshift(x) | OqInstr::Rshift(x) | OqInstr::Rev(x) => {
            size_of(sizes, x)?;
            need_nor(&env, x, &ins.to_string())?;
        }
        OqInstr::Seq(items) => {
            for i in items {
                env = oq_typecheck(sizes, &env, i)?;
            }
        }
    }
    Ok(env)
}

/// Slot permutation of one variable: `new[k] = old[perm[k]]`.
fn shift_perm(ins: &OqInstr, d: usize) -> Option<Vec<usize>> {
    match ins {
        OqInstr::Lshift(_) => Some((0..d).map(|k| (k + d - 1) % d).collect()),
        OqInstr::Rshift(_) => Some((0..d).map(|k| (k + 1) % d).collect()),
        OqInstr::Rev(_) => Some((0..d).map(|k| d - 1 - k).collect()),
        _ => None,
    }
}

fn track_shifts(sizes: &Sizes, ins: &OqInstr, perms: &mut BTreeMap<String, Vec<usize>>) -> Result<()> {
    match ins {
        OqInstr::Lshift(x) | OqInstr::Rshift(x) | OqInstr::Rev(x) => {
            let d = size_of(sizes, x)?;
            let cur = perms.entry(x.clone()).or_insert_with(|| (0..d).collect());
            let p = shift_perm(ins, d).expect("shift");
            *cur = p.iter().map(|&k| cur[k]).collect();
        }
        OqInstr::Cu(_, body) => track_shifts(sizes, body, perms)?,
        OqInstr::Seq(items) => {
            for i in items {
                track_shifts(sizes, i, perms)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// `neutral(ι)`: the net shift permutation of every variable is the identity.
pub fn check_neutral(sizes: &Sizes, ins: &OqInstr) -> Result<()> {
    let mut perms = BTreeMap::new();
    track_shifts(sizes, ins, &mut perms)?;
    for (x, p) in perms {
        if p.iter().enumerate().any(|(k, &v)| k != v) {
            return Err(Error::NonNeutralShiftUnderCU(x));
        }
    }
    Ok(())
}

/// Inverts an instruction.
pub fn oq_invert(ins: &OqInstr) -> OqInstr {
    match ins {
        OqInstr::Id(_) | OqInstr::X(_) | OqInstr::Rev(_) => ins.clone(),
        OqInstr::Rz(q, p) => OqInstr::Rzinv(*q, p.clone()),
        OqInstr::Rzinv(q, p) => OqInstr::Rz(*q, p.clone()),
        OqInstr::Sr(m, x) => OqInstr::Srinv(*m, x.clone()),
        OqInstr::Srinv(m, x) => OqInstr::Sr(*m, x.clone()),
        OqInstr::Qft(n, x) => OqInstr::Rqft(*n, x.clone()),
        OqInstr::Rqft(n, x) => OqInstr::Qft(*n, x.clone()),
        OqInstr::Lshift(x) => OqInstr::Rshift(x.clone()),
        OqInstr::Rshift(x) => OqInstr::Lshift(x.clone()),
        OqInstr::Cu(p, body) => OqInstr::Cu(p.clone(), Box::new(oq_invert(body))),
        OqInstr::Seq(items) => OqInstr::Seq(items.iter().rev().map(oq_invert).collect()),
    }
}

/// The QFT-based adder: adds little-endian `a` into little-endian `b`,
/// both of `n` qubits.
pub fn build_rz_adder(a: &str, b: &str, n: u32) -> OqInstr {
    let mut items = vec![OqInstr::Rev(a.into()), OqInstr::Rev(b.into()), OqInstr::Qft(n, b.into())];
    items.push(build_rz_adder_core(a, b, n));
    items.extend([OqInstr::Rqft(n, b.into()), OqInstr::Rev(b.into()), OqInstr::Rev(a.into())]);
    OqInstr::seq(items)
}

/// The controlled-`SR` cascade of the adder (`rz_adder'`).
pub fn build_rz_adder_core(a: &str, b: &str, n: u32) -> OqInstr {
    let mut items = Vec::new();
    for m in (0..n).rev() {
        items.push(OqInstr::Cu(Pos::new(a, m as usize), Box::new(OqInstr::Sr(m, b.into()))));
    }
    items.push(OqInstr::Id(Pos::new(a, 0)));
    OqInstr::seq(items)
}

/// Basis component of one OQASM qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OqBasis {
    /// `|b⟩`.
    Nor(bool),
    /// `Φ(r) = (|0⟩ + α(r)|1⟩)/√2`, with `r` in turns modulo 1.
    Phi(f64),
}

/// One qubit `α(phase) q̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OqQubit {
    pub phase: f64,
    pub basis: OqBasis,
}

impl OqQubit {
    pub fn nor(b: bool) -> Self {
        OqQubit { phase: 0.0, basis: OqBasis::Nor(b) }
    }
}

/// An OQASM state: per-variable qubit tuples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OqState {
    pub vars: BTreeMap<String, Vec<OqQubit>>,
}

/// Reduces a phase to `[0, 1)`.
pub fn frac(r: f64) -> f64 {
    let f = r.rem_euclid(1.0);
    if (1.0 - f).abs() < 1e-15 {
        0.0
    } else {
        f
    }
}

/// Distance of `r` to the nearest integer.
fn dist_int(r: f64) -> f64 {
    (r - r.round()).abs()
}

impl OqState {
    /// A `Nor` basis state from per-variable bit vectors.
    pub fn from_bits<'a>(vars: impl IntoIterator<Item = (&'a str, &'a [bool])>) -> Self {
        OqState {
            vars: vars.into_iter().map(|(v, b)| (v.to_string(), b.iter().map(|&x| OqQubit::nor(x)).collect())).collect(),
        }
    }

    /// Bits of a variable, if every qubit is in `Nor`.
    pub fn bits(&self, x: &str) -> Option<Bits> {
        self.vars.get(x)?.iter().map(|q| if let OqBasis::Nor(b) = q.basis { Some(b) } else { None }).collect()
    }

    /// Sum of all global phases.
    pub fn total_phase(&self) -> f64 {
        frac(self.vars.values().flatten().map(|q| q.phase).sum())
    }

    fn qubits_mut(&mut self, x: &str) -> Result<&mut Vec<OqQubit>> {
        self.vars.get_mut(x).ok_or_else(|| Error::UnboundVariable(x.to_string()))
    }

    fn qubit_mut(&mut self, p: &Pos) -> Result<&mut OqQubit> {
        self.qubits_mut(&p.var)?.get_mut(p.idx).ok_or_else(|| Error::RangeOutOfBounds(p.to_string()))
    }

    /// Approximate equality modulo 1 on all phases.
    pub fn approx_eq(&self, other: &OqState, tol: f64) -> bool {
        let close = |a: f64, b: f64| dist_int(a - b) < tol;
        self.vars.len() == other.vars.len()
            && self.vars.iter().all(|(x, qs)| {
                other.vars.get(x).is_some_and(|os| {
                    qs.len() == os.len()
                        && qs.iter().zip(os).all(|(a, b)| {
                            close(a.phase, b.phase)
                                && match (a.basis, b.basis) {
                                    (OqBasis::Nor(p), OqBasis::Nor(q)) => p == q,
                                    (OqBasis::Phi(p), OqBasis::Phi(q)) => close(p, q),
                                    _ => false,
                                }
                        })
                })
            })
    }
}

/// Checks well-formedness of `state` against Σ and Ω.
pub fn oq_well_formed(sizes: &Sizes, env: &OqEnv, state: &OqState) -> Result<()> {
    for (x, &d) in sizes {
        let qs = state.vars.get(x).ok_or_else(|| Error::IllFormedState(format!("missing `{x}`")))?;
        if qs.len() != d {
            return Err(Error::IllFormedState(format!("`{x}` has {} qubits, expected {d}", qs.len())));
        }
        match type_of(env, x)? {
            OqType::Nor => {
                if qs.iter().any(|q| !matches!(q.basis, OqBasis::Nor(_))) {
                    return Err(Error::IllFormedState(format!("`{x}` is not in Nor")));
                }
            }
            OqType::Phi(_) => {
                phi_value(x, qs)?;
            }
        }
    }
    Ok(())
}

/// `r_0` of a `Phi` variable after checking `r_k ≡ r_0·2^k`.
fn phi_value(x: &str, qs: &[OqQubit]) -> Result<f64> {
    let rs: Vec<f64> = qs
        .iter()
        .map(|q| match q.basis {
            OqBasis::Phi(r) => Ok(r),
            OqBasis::Nor(_) => Err(Error::IllFormedState(format!("`{x}` is not in Phi"))),
        })
        .collect::<Result<_>>()?;
    let r0 = rs.first().copied().unwrap_or(0.0);
    for (k, r) in rs.iter().enumerate() {
        if dist_int(r - r0 * (1u64 << k.min(62)) as f64) > 1e-7 {
            return Err(Error::IllFormedState(format!("qubits of `{x}` do not share one Phi value")));
        }
    }
    Ok(r0)
}

/// Evaluates `ins` on `state`.
pub fn oq_eval(sizes: &Sizes, ins: &OqInstr, state: &OqState) -> Result<OqState> {
    let mut s = state.clone();
    eval_in_place(sizes, ins, &mut s)?;
    Ok(s)
}

fn nor_bit(q: &OqQubit, p: &Pos) -> Result<bool> {
    match q.basis {
        OqBasis::Nor(b) => Ok(b),
        OqBasis::Phi(_) => Err(Error::IllFormedState(format!("{p} is not in Nor"))),
    }
}

fn eval_in_place(sizes: &Sizes, ins: &OqInstr, s: &mut OqState) -> Result<()> {
    match ins {
        OqInstr::Id(p) => {
            s.qubit_mut(p)?;
        }
        OqInstr::X(p) => {
            let q = s.qubit_mut(p)?;
            q.basis = OqBasis::Nor(!nor_bit(q, p)?);
        }
        OqInstr::Rz(k, p) | OqInstr::Rzinv(k, p) => {
            let sign = if matches!(ins, OqInstr::Rz(..)) { 1.0 } else { -1.0 };
            let q = s.qubit_mut(p)?;
            if nor_bit(q, p)? {
                q.phase = frac(q.phase + sign / 2f64.powi(*k as i32));
            }
        }
        OqInstr::Sr(m, x) | OqInstr::Srinv(m, x) => {
            let sign = if matches!(ins, OqInstr::Sr(..)) { 1.0 } else { -1.0 };
            let qs = s.qubits_mut(x)?;
            for (i, q) in qs.iter_mut().enumerate().take(*m as usize + 1) {
                match &mut q.basis {
                    OqBasis::Phi(r) => *r = frac(*r + sign / 2f64.powi(*m as i32 - i as i32 + 1)),
                    OqBasis::Nor(_) => return Err(Error::IllFormedState(format!("`{x}` is not in Phi"))),
                }
            }
        }
        OqInstr::Qft(n, x) => {
            let qs = s.qubits_mut(x)?;
            let d = qs.len();
            let mut y = 0f64;
            for (k, q) in qs.iter().enumerate() {
                if nor_bit(q, &Pos::new(x.as_str(), k))? {
                    y += 2f64.powi((d - 1 - k) as i32);
                }
            }
            for (k, q) in qs.iter_mut().enumerate() {
                q.basis = OqBasis::Phi(frac(y * 2f64.powi(k as i32 - *n as i32)));
            }
        }
        OqInstr::Rqft(n, x) => {
            let qs = s.qubits_mut(x)?;
            let d = qs.len();
            let r0 = phi_value(x, qs)?;
            let v = r0 * 2f64.powi(*n as i32);
            if dist_int(v) > 1e-7 {
                return Err(Error::IllFormedState(format!("Phi value of `{x}` is not a multiple of 2^-{n}")));
            }
            let modulus = 2f64.powi(*n as i32);
            let y = (v.round().rem_euclid(modulus)) as u64;
            for (k, q) in qs.iter_mut().enumerate() {
                let shift = d - 1 - k;
                let bit = shift < 64 && (y >> shift) & 1 == 1;
                q.basis = OqBasis::Nor(bit);
            }
        }
        OqInstr::Cu(p, body) => {
            let q = *s.qubit_mut(p)?;
            if nor_bit(&q, p)? {
                eval_in_place(sizes, body, s)?;
            }
        }
        OqInstr::Lshift(x) | OqInstr::Rshift(x) | OqInstr::Rev(x) => {
            let qs = s.qubits_mut(x)?;
            let perm = shift_perm(ins, qs.len()).expect("shift");
            let old = qs.clone();
            for (k, &src) in perm.iter().enumerate() {
                qs[k] = old[src];
            }
        }
        OqInstr::Seq(items) => {
            for i in items {
                eval_in_place(sizes, i, s)?;
            }
        }
    }
    Ok(())
}

/// Applies an oracle to one basis ket of `locus`.
///
/// Returns the phase factor and the output bits; the instruction must map
/// `Nor` inputs to `Nor` outputs.
pub fn apply_to_basis(locus: &Locus, ins: &OqInstr, bits: &[bool]) -> Result<(Complex64, Bits)> {
    let (sizes, _) = sizes_of_locus(locus);
    let qs = locus.qubits();
    let mut state = OqState::default();
    for ((v, _), &b) in qs.iter().zip(bits) {
        state.vars.entry(v.clone()).or_default().push(OqQubit::nor(b));
    }
    let out = oq_eval(&sizes, ins, &state)?;
    let mut cursor: BTreeMap<&str, usize> = BTreeMap::new();
    let mut result = Vec::with_capacity(bits.len());
    for (v, _) in &qs {
        let i = cursor.entry(v.as_str()).or_insert(0);
        let q = out.vars[v][*i];
        *i += 1;
        match q.basis {
            OqBasis::Nor(b) => result.push(b),
            OqBasis::Phi(_) => return Err(Error::BasisMismatch("oracle output is not in Nor".into())),
        }
    }
    Ok((alpha(out.total_phase()), result))
}

/// Lowers `ins` to gates.
///
/// `layout` maps each variable to the concrete qubits of its positions.
/// Shifts only permute a virtual copy of the layout; any residual
/// permutation at the end is undone with swaps.  `QFT`/`RQFT` are supported
/// at full precision only.
pub fn oq_lower(sizes: &Sizes, ins: &OqInstr, layout: &BTreeMap<String, Vec<usize>>) -> Result<Vec<Gate>> {
    let mut virt = layout.clone();
    let mut gates = Vec::new();
    lower_into(sizes, ins, &mut virt, &mut gates)?;
    for (x, orig) in layout {
        let cur = virt.get_mut(x).expect("same variables");
        restore_layout(cur, orig, &mut gates);
    }
    Ok(gates)
}

/// Emits swaps so that the content of logical slot `k`, now at `cur[k]`,
/// moves to `orig[k]`.
fn restore_layout(cur: &mut [usize], orig: &[usize], gates: &mut Vec<Gate>) {
    for k in 0..cur.len() {
        while cur[k] != orig[k] {
            let (p, t) = (cur[k], orig[k]);
            gates.extend(swap_gates(p, t));
            let j = cur.iter().position(|&c| c == t).expect("physical qubit in layout");
            cur[j] = p;
            cur[k] = t;
        }
    }
}

/// A swap as three CNOTs.
pub fn swap_gates(a: usize, b: usize) -> [Gate; 3] {
    [Gate::Cx(a, b), Gate::Cx(b, a), Gate::Cx(a, b)]
}

fn phys(virt: &BTreeMap<String, Vec<usize>>, p: &Pos) -> Result<usize> {
    virt.get(&p.var)
        .ok_or_else(|| Error::UnboundVariable(p.var.clone()))?
        .get(p.idx)
        .copied()
        .ok_or_else(|| Error::RangeOutOfBounds(p.to_string()))
}

fn lower_into(
    sizes: &Sizes,
    ins: &OqInstr,
    virt: &mut BTreeMap<String, Vec<usize>>,
    gates: &mut Vec<Gate>,
) -> Result<()> {
    let qubits = |virt: &BTreeMap<String, Vec<usize>>, x: &str| -> Result<Vec<usize>> {
        virt.get(x).cloned().ok_or_else(|| Error::UnboundVariable(x.to_string()))
    };
    match ins {
        OqInstr::Id(p) => {
            phys(virt, p)?;
        }
        OqInstr::X(p) => gates.push(Gate::X(phys(virt, p)?)),
        OqInstr::Rz(q, p) | OqInstr::Rzinv(q, p) => {
            let t = phys(virt, p)?;
            if *q > 0 {
                gates.push(Gate::Rz { k: q - 1, neg: matches!(ins, OqInstr::Rzinv(..)), q: t });
            }
        }
        OqInstr::Sr(m, x) | OqInstr::Srinv(m, x) => {
            let qs = qubits(virt, x)?;
            let neg = matches!(ins, OqInstr::Srinv(..));
            for (i, &t) in qs.iter().enumerate().take(*m as usize + 1) {
                gates.push(Gate::Rz { k: m - i as u32, neg, q: t });
            }
        }
        OqInstr::Qft(n, x) | OqInstr::Rqft(n, x) => {
            let qs = qubits(virt, x)?;
            if *n as usize != qs.len() {
                return Err(Error::UnsupportedOracleLowering(format!(
                    "approximate QFT of precision {n} on {} qubits",
                    qs.len()
                )));
            }
            let circuit = qft_big_endian(&qs);
            if matches!(ins, OqInstr::Qft(..)) {
                gates.extend(circuit);
            } else {
                gates.extend(crate::circuit::invert_gates(&circuit));
            }
        }
        OqInstr::Cu(p, body) => {
            let c = phys(virt, p)?;
            let mut inner = Vec::new();
            lower_into(sizes, body, virt, &mut inner)?;
            gates.push(Gate::Ctrl { control: c, body: inner });
        }
        OqInstr::Lshift(x) | OqInstr::Rshift(x) | OqInstr::Rev(x) => {
            let cur = virt.get_mut(x).ok_or_else(|| Error::UnboundVariable(x.clone()))?;
            let perm = shift_perm(ins, cur.len()).expect("shift");
            let old = cur.clone();
            for (k, &src) in perm.iter().enumerate() {
                cur[k] = old[src];
            }
        }
        OqInstr::Seq(items) => {
            for i in items {
                lower_into(sizes, i, virt, gates)?;
            }
        }
    }
    Ok(())
}

/// The QFT on qubits `qs` with `qs[0]` the most significant bit: qubit `k`
/// ends in `Φ(y/2^{n−k})`.  No final reversal is applied.
pub fn qft_big_endian(qs: &[usize]) -> Vec<Gate> {
    let mut gates = Vec::new();
    for k in 0..qs.len() {
        gates.push(Gate::H(qs[k]));
        for m in k + 1..qs.len() {
            gates.push(Gate::Ctrl { control: qs[m], body: vec![Gate::Rz { k: (m - k) as u32, neg: false, q: qs[k] }] });
        }
    }
    gates
}
