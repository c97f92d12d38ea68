//! Loci, quantum values, and the state algebra.
//!
//! A [`State`] maps disjoint [`Locus`] keys to [`QuantumValue`]s.  Values come
//! in three forms: `Nor` (a single computational-basis ket), `Had` (an
//! unentangled product of `|0⟩ + α(r)|1⟩` qubits), and `EN` (a general sum of
//! basis-kets, each carrying a frozen-basis stack used inside quantum
//! conditionals).
//!
//! Bitstrings are stored in locus order: position 0 is the first qubit of the
//! locus and, when read as an integer, the least significant bit.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::typecheck::{Mode, QType};

/// Amplitude equality tolerance.
pub const TOL: f64 = 1e-9;
/// Amplitudes with modulus below this are dropped by [`merge_kets`].
pub const ZERO_TOL: f64 = 1e-12;

/// `α(r) = e^{2πir}` for a phase `r` measured in turns.
pub fn alpha(r: f64) -> Complex64 {
    let r = r.rem_euclid(1.0);
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * r)
}

/// A bitstring in locus order.
pub type Bits = Vec<bool>;

/// Renders a bitstring as `0`/`1` characters.
pub fn bits_to_string(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

/// Parses a string of `0`/`1` characters.
pub fn bits_from_str(s: &str) -> Option<Bits> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// Little-endian integer value of a bitstring.
pub fn bits_to_u64(b: &[bool]) -> u64 {
    b.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &x)| if x { acc | (1u64 << i) } else { acc })
}

/// Little-endian bitstring of `v` with `width` positions (higher bits dropped).
pub fn u64_to_bits(v: u64, width: usize) -> Bits {
    (0..width).map(|i| i < 64 && (v >> i) & 1 == 1).collect()
}

/// A single qubit: array name and index.
pub type Qubit = (String, usize);

/// Half-open slice `var[lo, hi)` of a qubit array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Range {
    pub var: String,
    pub lo: usize,
    pub hi: usize,
}

impl Range {
    pub fn new(var: impl Into<String>, lo: usize, hi: usize) -> Self {
        Range { var: var.into(), lo, hi: hi.max(lo) }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    pub fn overlaps(&self, other: &Range) -> bool {
        self.var == other.var && self.lo < other.hi && other.lo < self.hi
    }

    pub fn contains(&self, q: &Qubit) -> bool {
        self.var == q.0 && self.lo <= q.1 && q.1 < self.hi
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{},{})", self.var, self.lo, self.hi)
    }
}

/// An ordered list of disjoint ranges, kept canonical: empty ranges are
/// dropped and adjacent ranges `x[a,b) ++ x[b,c)` are coalesced.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Locus {
    ranges: Vec<Range>,
}

impl Locus {
    /// Builds a canonical locus from ranges.
    pub fn new(ranges: impl IntoIterator<Item = Range>) -> Self {
        let mut out: Vec<Range> = Vec::new();
        for r in ranges {
            if r.is_empty() {
                continue;
            }
            if let Some(last) = out.last_mut() {
                if last.var == r.var && last.hi == r.lo {
                    last.hi = r.hi;
                    continue;
                }
            }
            out.push(r);
        }
        Locus { ranges: out }
    }

    pub fn empty() -> Self {
        Locus::default()
    }

    pub fn single(var: impl Into<String>, lo: usize, hi: usize) -> Self {
        Locus::new([Range::new(var, lo, hi)])
    }

    /// Builds the locus enumerating `qs` in order.
    pub fn from_qubits(qs: &[Qubit]) -> Self {
        Locus::new(qs.iter().map(|(v, i)| Range::new(v.clone(), *i, i + 1)))
    }

    pub fn ranges(&self) -> &[Range] {
        &self.ranges
    }

    pub fn width(&self) -> usize {
        self.ranges.iter().map(Range::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Qubits in locus order.
    pub fn qubits(&self) -> Vec<Qubit> {
        self.ranges
            .iter()
            .flat_map(|r| (r.lo..r.hi).map(move |i| (r.var.clone(), i)))
            .collect()
    }

    pub fn concat(&self, other: &Locus) -> Locus {
        Locus::new(self.ranges.iter().chain(other.ranges.iter()).cloned())
    }

    /// Splits after the first `n` qubits.
    pub fn split_at(&self, n: usize) -> (Locus, Locus) {
        let qs = self.qubits();
        let n = n.min(qs.len());
        (Locus::from_qubits(&qs[..n]), Locus::from_qubits(&qs[n..]))
    }

    pub fn contains(&self, q: &Qubit) -> bool {
        self.ranges.iter().any(|r| r.contains(q))
    }

    pub fn position(&self, q: &Qubit) -> Option<usize> {
        let mut off = 0;
        for r in &self.ranges {
            if r.contains(q) {
                return Some(off + q.1 - r.lo);
            }
            off += r.len();
        }
        None
    }

    pub fn intersects(&self, other: &Locus) -> bool {
        self.ranges
            .iter()
            .any(|a| other.ranges.iter().any(|b| a.overlaps(b)))
    }

    /// True when no qubit appears twice.
    pub fn is_self_disjoint(&self) -> bool {
        for (i, a) in self.ranges.iter().enumerate() {
            for b in &self.ranges[i + 1..] {
                if a.overlaps(b) {
                    return false;
                }
            }
        }
        true
    }

    /// True if both loci enumerate the same qubit set (in any order).
    pub fn same_qubits(&self, other: &Locus) -> bool {
        let mut a = self.qubits();
        let mut b = other.qubits();
        a.sort();
        b.sort();
        a == b
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ranges.is_empty() {
            return write!(f, "{{}}");
        }
        for (i, r) in self.ranges.iter().enumerate() {
            if i > 0 {
                write!(f, " ++ ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// One summand of an `EN` value.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisKet {
    pub amp: Complex64,
    pub basis: Bits,
    /// Frozen bases, top of the stack first.
    pub stack: Vec<Bits>,
}

impl BasisKet {
    pub fn new(amp: Complex64, basis: Bits) -> Self {
        BasisKet { amp, basis, stack: Vec::new() }
    }
}

/// A sum of basis-kets over `width` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct EnValue {
    pub width: usize,
    pub kets: Vec<BasisKet>,
}

impl EnValue {
    pub fn new(width: usize, kets: Vec<BasisKet>) -> Self {
        EnValue { width, kets }
    }

    /// Σ|z|² over all kets.
    pub fn norm_sqr(&self) -> f64 {
        self.kets.iter().map(|k| k.amp.norm_sqr()).sum()
    }

    /// Ket-for-ket equality after merging, with amplitude tolerance `tol`.
    pub fn approx_eq(&self, other: &EnValue, tol: f64) -> bool {
        if self.width != other.width {
            return false;
        }
        let a = merge_kets(self);
        let b = merge_kets(other);
        a.kets.len() == b.kets.len()
            && a.kets.iter().zip(&b.kets).all(|(x, y)| {
                x.basis == y.basis && x.stack == y.stack && (x.amp - y.amp).norm() <= tol
            })
    }

    /// Like [`EnValue::approx_eq`] but ignoring frozen stacks.
    pub fn approx_eq_ignoring_stack(&self, other: &EnValue, tol: f64) -> bool {
        let key = |v: &EnValue| {
            let mut ks: Vec<(Bits, Complex64)> = v
                .kets
                .iter()
                .filter(|k| k.amp.norm() >= ZERO_TOL)
                .map(|k| (k.basis.clone(), k.amp))
                .collect();
            ks.sort_by(|x, y| {
                x.0.cmp(&y.0)
                    .then(x.1.re.total_cmp(&y.1.re))
                    .then(x.1.im.total_cmp(&y.1.im))
            });
            ks
        };
        if self.width != other.width {
            return false;
        }
        let a = key(self);
        let b = key(other);
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.0 == y.0 && (x.1 - y.1).norm() <= tol)
    }
}

/// The three forms of quantum values.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumValue {
    Nor { amp: Complex64, bits: Bits, stack: Vec<Bits> },
    /// Phases `r_j` (in turns) of `(|0⟩ + α(r_j)|1⟩)/√2` per qubit.
    Had { phases: Vec<f64> },
    En(EnValue),
}

impl QuantumValue {
    /// Unit-amplitude basis value with an empty stack.
    pub fn nor(bits: Bits) -> Self {
        QuantumValue::Nor { amp: Complex64::new(1.0, 0.0), bits, stack: Vec::new() }
    }

    pub fn width(&self) -> usize {
        match self {
            QuantumValue::Nor { bits, .. } => bits.len(),
            QuantumValue::Had { phases } => phases.len(),
            QuantumValue::En(v) => v.width,
        }
    }

    pub fn qtype(&self) -> QType {
        match self {
            QuantumValue::Nor { .. } => QType::Nor,
            QuantumValue::Had { .. } => QType::Had,
            QuantumValue::En(_) => QType::EN,
        }
    }

    /// Converts any form to its `EN` equivalent.
    pub fn to_en(&self) -> EnValue {
        match self {
            QuantumValue::Nor { .. } => nor_to_en(self),
            QuantumValue::Had { .. } => had_to_en(self),
            QuantumValue::En(v) => v.clone(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        match self {
            QuantumValue::Nor { amp, .. } => amp.norm_sqr(),
            QuantumValue::Had { .. } => 1.0,
            QuantumValue::En(v) => v.norm_sqr(),
        }
    }

    fn has_stack(&self) -> bool {
        match self {
            QuantumValue::Nor { stack, .. } => !stack.is_empty(),
            QuantumValue::Had { .. } => false,
            QuantumValue::En(v) => v.kets.iter().any(|k| !k.stack.is_empty()),
        }
    }
}

/// `|c⟩ ≡` the singleton sum over `c`.
pub fn nor_to_en(v: &QuantumValue) -> EnValue {
    match v {
        QuantumValue::Nor { amp, bits, stack } => EnValue::new(
            bits.len(),
            vec![BasisKet { amp: *amp, basis: bits.clone(), stack: stack.clone() }],
        ),
        other => other.to_en(),
    }
}

/// Inverse of [`nor_to_en`] on singleton sums.
pub fn en_to_nor(v: &EnValue) -> Option<QuantumValue> {
    match v.kets.as_slice() {
        [k] => Some(QuantumValue::Nor { amp: k.amp, bits: k.basis.clone(), stack: k.stack.clone() }),
        _ => None,
    }
}

/// Expands a `Had` value into its `2ⁿ` basis-kets:
/// amplitude of `|j⟩` is `α(Σ_k r_k·j[k]) / √2ⁿ`.
pub fn had_to_en(v: &QuantumValue) -> EnValue {
    match v {
        QuantumValue::Had { phases } => {
            let n = phases.len();
            let scale = 1.0 / (2f64).powi(n as i32).sqrt();
            let kets = (0..1u64 << n)
                .map(|j| {
                    let basis = u64_to_bits(j, n);
                    let r: f64 = phases
                        .iter()
                        .zip(&basis)
                        .filter(|(_, &b)| b)
                        .map(|(r, _)| *r)
                        .sum();
                    BasisKet::new(alpha(r) * scale, basis)
                })
                .collect();
            EnValue::new(n, kets)
        }
        other => other.to_en(),
    }
}

/// Swaps the adjacent segments `[n, n+i)` and `[n+i, n+i+k)` of `v`.
pub fn swap_segments<T: Clone>(v: &[T], n: usize, i: usize, k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[..n]);
    out.extend_from_slice(&v[n + i..n + i + k]);
    out.extend_from_slice(&v[n..n + i]);
    out.extend_from_slice(&v[n + i + k..]);
    out
}

/// Swaps basis segments `[n, n+i)` and `[n+i, n+i+k)` in every ket.
pub fn permute_value(q: &QuantumValue, n: usize, i: usize, k: usize) -> Result<QuantumValue> {
    let w = q.width();
    if n + i + k > w {
        return Err(Error::WidthMismatch(format!(
            "permutation ({n},{i},{k}) exceeds width {w}"
        )));
    }
    Ok(match q {
        QuantumValue::Nor { amp, bits, stack } => QuantumValue::Nor {
            amp: *amp,
            bits: swap_segments(bits, n, i, k),
            stack: stack.clone(),
        },
        QuantumValue::Had { phases } => QuantumValue::Had { phases: swap_segments(phases, n, i, k) },
        QuantumValue::En(v) => {
            let kets = v
                .kets
                .iter()
                .map(|kt| BasisKet {
                    amp: kt.amp,
                    basis: swap_segments(&kt.basis, n, i, k),
                    stack: kt.stack.clone(),
                })
                .collect();
            QuantumValue::En(merge_kets(&EnValue::new(w, kets)))
        }
    })
}

fn join_stacks(a: &[Bits], b: &[Bits]) -> Vec<Bits> {
    if b.is_empty() {
        return a.to_vec();
    }
    if a.is_empty() {
        return b.to_vec();
    }
    let depth = a.len().max(b.len());
    (0..depth)
        .map(|d| {
            let mut s = a.get(d).cloned().unwrap_or_default();
            s.extend(b.get(d).cloned().unwrap_or_default());
            s
        })
        .collect()
}

/// Join product of the value of a left locus with the value of a right locus.
///
/// `Nor⋈Nor` and `Had⋈Had` stay in their form; every other combination is
/// the Cartesian product of ket lists with the left value as the outer loop.
pub fn join_values(q1: &QuantumValue, q2: &QuantumValue) -> QuantumValue {
    match (q1, q2) {
        (
            QuantumValue::Nor { amp: a1, bits: b1, stack: s1 },
            QuantumValue::Nor { amp: a2, bits: b2, stack: s2 },
        ) => {
            let mut bits = b1.clone();
            bits.extend_from_slice(b2);
            QuantumValue::Nor { amp: a1 * a2, bits, stack: join_stacks(s1, s2) }
        }
        (QuantumValue::Had { phases: p1 }, QuantumValue::Had { phases: p2 }) => {
            let mut phases = p1.clone();
            phases.extend_from_slice(p2);
            QuantumValue::Had { phases }
        }
        _ => {
            let e1 = q1.to_en();
            let e2 = q2.to_en();
            let mut kets = Vec::with_capacity(e1.kets.len() * e2.kets.len());
            for k1 in &e1.kets {
                for k2 in &e2.kets {
                    let mut basis = k1.basis.clone();
                    basis.extend_from_slice(&k2.basis);
                    kets.push(BasisKet {
                        amp: k1.amp * k2.amp,
                        basis,
                        stack: join_stacks(&k1.stack, &k2.stack),
                    });
                }
            }
            QuantumValue::En(merge_kets(&EnValue::new(e1.width + e2.width, kets)))
        }
    }
}

/// Splits a value into its first `n` qubits and the rest.
///
/// `EN` values split only when every ket shares the same suffix; the suffix
/// becomes a `Nor` value.
pub fn split_value(q: &QuantumValue, n: usize) -> Result<(QuantumValue, QuantumValue)> {
    let w = q.width();
    if n > w {
        return Err(Error::WidthMismatch(format!("split at {n} exceeds width {w}")));
    }
    match q {
        QuantumValue::Nor { amp, bits, stack } => Ok((
            QuantumValue::Nor { amp: *amp, bits: bits[..n].to_vec(), stack: stack.clone() },
            QuantumValue::nor(bits[n..].to_vec()),
        )),
        QuantumValue::Had { phases } => Ok((
            QuantumValue::Had { phases: phases[..n].to_vec() },
            QuantumValue::Had { phases: phases[n..].to_vec() },
        )),
        QuantumValue::En(v) => {
            let Some(first) = v.kets.first() else {
                return Err(Error::NotSeparable(n));
            };
            let suffix = first.basis[n..].to_vec();
            if v.kets.iter().any(|k| k.basis[n..] != suffix[..]) {
                return Err(Error::NotSeparable(n));
            }
            let kets = v
                .kets
                .iter()
                .map(|k| BasisKet { amp: k.amp, basis: k.basis[..n].to_vec(), stack: k.stack.clone() })
                .collect();
            Ok((QuantumValue::En(EnValue::new(n, kets)), QuantumValue::nor(suffix)))
        }
    }
}

/// Moves the leading `n` basis bits of every ket onto its frozen stack.
pub fn push_frozen(q: &EnValue, n: usize) -> Result<EnValue> {
    if n > q.width {
        return Err(Error::WidthMismatch(format!("cannot freeze {n} of {} qubits", q.width)));
    }
    let kets = q
        .kets
        .iter()
        .map(|k| {
            let mut stack = Vec::with_capacity(k.stack.len() + 1);
            stack.push(k.basis[..n].to_vec());
            stack.extend(k.stack.iter().cloned());
            BasisKet { amp: k.amp, basis: k.basis[n..].to_vec(), stack }
        })
        .collect();
    Ok(EnValue::new(q.width - n, kets))
}

/// Restores the top frozen entry of every ket as a basis prefix.
pub fn pop_frozen(q: &EnValue) -> Result<EnValue> {
    let Some(first) = q.kets.first() else {
        return Err(Error::EmptyStack);
    };
    let top = first.stack.first().ok_or(Error::EmptyStack)?.len();
    let mut kets = Vec::with_capacity(q.kets.len());
    for k in &q.kets {
        let (head, rest) = k.stack.split_first().ok_or(Error::EmptyStack)?;
        if head.len() != top {
            return Err(Error::WidthMismatch("frozen entries differ in width".into()));
        }
        let mut basis = head.clone();
        basis.extend_from_slice(&k.basis);
        kets.push(BasisKet { amp: k.amp, basis, stack: rest.to_vec() });
    }
    Ok(EnValue::new(q.width + top, kets))
}

/// Partitions kets by a test on their leading `width` bits:
/// satisfying kets go left, the rest right.
pub fn partition_kets(
    q: &EnValue,
    width: usize,
    mut test: impl FnMut(&[bool]) -> Result<bool>,
) -> Result<(EnValue, EnValue)> {
    if width > q.width {
        return Err(Error::WidthMismatch(format!("guard width {width} exceeds {}", q.width)));
    }
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for k in &q.kets {
        if test(&k.basis[..width])? {
            yes.push(k.clone());
        } else {
            no.push(k.clone());
        }
    }
    Ok((EnValue::new(q.width, yes), EnValue::new(q.width, no)))
}

/// Sums kets with identical `(basis, stack)`, drops near-zero amplitudes, and
/// sorts lexicographically by basis then stack.
pub fn merge_kets(q: &EnValue) -> EnValue {
    let mut acc: BTreeMap<(Bits, Vec<Bits>), Complex64> = BTreeMap::new();
    for k in &q.kets {
        *acc.entry((k.basis.clone(), k.stack.clone())).or_default() += k.amp;
    }
    let kets = acc
        .into_iter()
        .filter(|(_, z)| z.norm() >= ZERO_TOL)
        .map(|((basis, stack), amp)| BasisKet { amp, basis, stack })
        .collect();
    EnValue::new(q.width, kets)
}

/// Computes adjacent-segment swaps `(n, i, k)` that bring the qubits of
/// `front` (in that order) to the beginning of `current`, keeping the other
/// qubits in their relative order.
pub fn prefix_permutation(current: &[Qubit], front: &[Qubit]) -> Result<Vec<(usize, usize, usize)>> {
    let mut cur = current.to_vec();
    let mut steps = Vec::new();
    let mut p = 0;
    while p < front.len() {
        let s = cur
            .iter()
            .position(|q| *q == front[p])
            .ok_or_else(|| Error::UnboundLocus(format!("{}[{}]", front[p].0, front[p].1)))?;
        if s < p {
            return Err(Error::OverlappingLoci(format!("{}[{}] repeated", front[p].0, front[p].1)));
        }
        // Extend the block while following target qubits sit contiguously.
        let mut k = 1;
        while p + k < front.len() && s + k < cur.len() && cur[s + k] == front[p + k] {
            k += 1;
        }
        if s > p {
            steps.push((p, s - p, k));
            cur = swap_segments(&cur, p, s - p, k);
        }
        p += k;
    }
    Ok(steps)
}

/// An entry of the quantum heap.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub locus: Locus,
    pub value: QuantumValue,
}

/// The quantum heap: disjoint loci mapped to values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct State {
    pub entries: Vec<Entry>,
}

impl State {
    pub fn new() -> Self {
        State::default()
    }

    /// All-zero `Nor` state, one entry per declared array.
    pub fn zeros<'a>(decls: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let entries = decls
            .into_iter()
            .filter(|(_, n)| *n > 0)
            .map(|(v, n)| Entry { locus: Locus::single(v, 0, n), value: QuantumValue::nor(vec![false; n]) })
            .collect();
        State { entries }
    }

    pub fn push(&mut self, locus: Locus, value: QuantumValue) {
        self.entries.push(Entry { locus, value });
    }

    /// Index of the entry holding qubit `q`.
    pub fn find(&self, q: &Qubit) -> Option<usize> {
        self.entries.iter().position(|e| e.locus.contains(q))
    }

    /// Value stored under exactly `locus`, if any.
    pub fn get(&self, locus: &Locus) -> Option<&QuantumValue> {
        self.entries.iter().find(|e| &e.locus == locus).map(|e| &e.value)
    }

    pub fn qubit_count(&self) -> usize {
        self.entries.iter().map(|e| e.locus.width()).sum()
    }

    /// Checks state well-formedness: disjoint loci, matching widths, unique
    /// kets, and — in mode `C` — unit norm per locus with empty stacks.  In
    /// mode `M` the norm may be below one and stacks may be nonempty.
    pub fn check_well_formed(&self, mode: Mode) -> std::result::Result<(), String> {
        for (i, a) in self.entries.iter().enumerate() {
            if !a.locus.is_self_disjoint() {
                return Err(format!("locus {} repeats a qubit", a.locus));
            }
            for b in &self.entries[i + 1..] {
                if a.locus.intersects(&b.locus) {
                    return Err(format!("loci {} and {} overlap", a.locus, b.locus));
                }
            }
            if a.locus.width() != a.value.width() {
                return Err(format!(
                    "locus {} has width {} but value width {}",
                    a.locus,
                    a.locus.width(),
                    a.value.width()
                ));
            }
            if let QuantumValue::En(v) = &a.value {
                let mut seen = std::collections::BTreeSet::new();
                for k in &v.kets {
                    if k.basis.len() != v.width {
                        return Err(format!("ket of width {} in {}", k.basis.len(), a.locus));
                    }
                    if !seen.insert((k.basis.clone(), k.stack.clone())) {
                        return Err(format!("duplicate ket in {}", a.locus));
                    }
                }
            }
            let norm = a.value.norm_sqr();
            match mode {
                Mode::C => {
                    if (norm - 1.0).abs() > TOL {
                        return Err(format!("locus {} has norm² {norm}", a.locus));
                    }
                    if a.value.has_stack() {
                        return Err(format!("locus {} has a frozen stack in mode C", a.locus));
                    }
                }
                Mode::M => {
                    if norm > 1.0 + TOL {
                        return Err(format!("locus {} has norm² {norm} > 1", a.locus));
                    }
                }
            }
        }
        Ok(())
    }

    /// JSON dump: `{"loci":[{"ranges":[["x",0,2]],"type":"EN","kets":[…]}]}`.
    pub fn to_json(&self) -> Value {
        let loci: Vec<Value> = self
            .entries
            .iter()
            .map(|e| {
                let ranges: Vec<Value> =
                    e.locus.ranges().iter().map(|r| json!([r.var, r.lo, r.hi])).collect();
                match &e.value {
                    QuantumValue::Had { phases } => {
                        json!({"ranges": ranges, "type": "Had", "phases": phases})
                    }
                    v => {
                        let en = v.to_en();
                        let kets: Vec<Value> = en
                            .kets
                            .iter()
                            .map(|k| {
                                json!({
                                    "re": k.amp.re,
                                    "im": k.amp.im,
                                    "basis": bits_to_string(&k.basis),
                                    "stack": k.stack.iter().map(|s| bits_to_string(s)).collect::<Vec<_>>(),
                                })
                            })
                            .collect();
                        let ty = if matches!(v, QuantumValue::Nor { .. }) { "Nor" } else { "EN" };
                        json!({"ranges": ranges, "type": ty, "kets": kets})
                    }
                }
            })
            .collect();
        json!({ "loci": loci })
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            write!(f, "{}: ", e.locus)?;
            match &e.value {
                QuantumValue::Had { phases } => writeln!(f, "Had {phases:?}")?,
                v => {
                    let en = v.to_en();
                    let parts: Vec<String> = en
                        .kets
                        .iter()
                        .map(|k| format!("({:.6}{:+.6}i)|{}⟩", k.amp.re, k.amp.im, bits_to_string(&k.basis)))
                        .collect();
                    writeln!(f, "{} {}", v.qtype(), parts.join(" + "))?;
                }
            }
        }
        Ok(())
    }
}
