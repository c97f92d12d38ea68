//! Shared test helpers: seeded generators for OQASM programs, Qafny
//! programs and symbolic states, plus small oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use num_complex::Complex64;
use qafny::kinds::KindEnv;
use qafny::oqasm::{oq_typecheck, OqEnv, OqInstr, OqQubit, OqState, OqType, Pos, Sizes};
use qafny::qstate::{BasisKet, EnValue, Entry, Locus, QuantumValue, Range, State};
use qafny::surface::QubitDecl;
use qafny::typecheck::{PlanStep, QType};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("corpus")
}

/// `(name, source)` of every corpus program, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "qfy"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).expect("read corpus file"))
        })
        .collect()
}

pub fn kind_env(decls: &[(&str, usize)]) -> KindEnv {
    let decls: Vec<QubitDecl> =
        decls.iter().map(|(n, s)| QubitDecl { name: n.to_string(), size: *s }).collect();
    KindEnv::from_decls(&decls).expect("valid declarations")
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// ---------------------------------------------------------------------------
// OQASM
// ---------------------------------------------------------------------------

/// A random well-typed OQASM program over `sizes`, starting from all-`Nor`.
/// `QFT`/`RQFT` are generated at full precision only.
pub fn gen_oqasm(r: &mut ChaCha8Rng, sizes: &Sizes, len: usize) -> OqInstr {
    let mut env: OqEnv = sizes.keys().map(|k| (k.clone(), OqType::Nor)).collect();
    let mut items = Vec::new();
    let mut attempts = 0;
    while items.len() < len && attempts < 50 * len {
        attempts += 1;
        let cand = gen_oq_instr(r, sizes, &env, 0);
        if let Ok(next) = oq_typecheck(sizes, &env, &cand) {
            env = next;
            items.push(cand);
        }
    }
    OqInstr::seq(items)
}

fn random_pos(r: &mut ChaCha8Rng, sizes: &Sizes) -> Pos {
    let vars: Vec<&String> = sizes.keys().collect();
    let v = vars[r.gen_range(0..vars.len())];
    Pos::new(v.clone(), r.gen_range(0..sizes[v]))
}

fn gen_oq_instr(r: &mut ChaCha8Rng, sizes: &Sizes, env: &OqEnv, depth: usize) -> OqInstr {
    let vars: Vec<&String> = sizes.keys().collect();
    let x = vars[r.gen_range(0..vars.len())].clone();
    let n = sizes[&x] as u32;
    match r.gen_range(0..12) {
        0 | 1 => OqInstr::X(random_pos(r, sizes)),
        2 => OqInstr::Id(random_pos(r, sizes)),
        3 => OqInstr::Rz(r.gen_range(0..5), random_pos(r, sizes)),
        4 => OqInstr::Rzinv(r.gen_range(0..5), random_pos(r, sizes)),
        5 => OqInstr::Sr(r.gen_range(0..n), x),
        6 => OqInstr::Srinv(r.gen_range(0..n), x),
        7 => match env.get(&x) {
            Some(OqType::Phi(_)) => OqInstr::Rqft(n, x),
            _ => OqInstr::Qft(n, x),
        },
        8 => OqInstr::Lshift(x),
        9 => OqInstr::Rshift(x),
        10 => OqInstr::Rev(x),
        _ if depth < 2 => {
            let p = random_pos(r, sizes);
            let body: Vec<OqInstr> = (0..r.gen_range(1..3)).map(|_| gen_oq_instr(r, sizes, env, depth + 1)).collect();
            OqInstr::Cu(p, Box::new(OqInstr::seq(body)))
        }
        _ => OqInstr::X(random_pos(r, sizes)),
    }
}

/// A random `Nor` state with random per-qubit global phases.
pub fn random_oq_state(r: &mut ChaCha8Rng, sizes: &Sizes) -> OqState {
    OqState {
        vars: sizes
            .iter()
            .map(|(v, &n)| {
                let qs = (0..n)
                    .map(|_| OqQubit { phase: r.gen::<f64>(), ..OqQubit::nor(r.gen()) })
                    .collect();
                (v.clone(), qs)
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Qafny programs
// ---------------------------------------------------------------------------

type Q = (String, usize);

struct Gen<'a> {
    r: &'a mut ChaCha8Rng,
    sizes: Vec<(String, usize)>,
    next_var: usize,
}

fn indent(lines: Vec<String>) -> Vec<String> {
    lines.into_iter().map(|l| format!("    {l}")).collect()
}

impl Gen<'_> {
    /// Maximal runs of consecutive available indices, per array.
    fn runs(&self, avail: &BTreeSet<Q>) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for (v, n) in &self.sizes {
            let mut i = 0;
            while i < *n {
                if !avail.contains(&(v.clone(), i)) {
                    i += 1;
                    continue;
                }
                let lo = i;
                while i < *n && avail.contains(&(v.clone(), i)) {
                    i += 1;
                }
                out.push((v.clone(), lo, i));
            }
        }
        out
    }

    /// A random contiguous range of available qubits with width ≤ `max`.
    fn range(&mut self, avail: &BTreeSet<Q>, max: usize) -> Option<(String, usize, usize)> {
        let runs = self.runs(avail);
        let (v, lo, hi) = runs.choose(self.r)?.clone();
        let w = self.r.gen_range(1..=(hi - lo).min(max));
        let start = self.r.gen_range(lo..=hi - w);
        Some((v, start, start + w))
    }

    fn fresh(&mut self) -> String {
        self.next_var += 1;
        format!("k{}", self.next_var)
    }

    fn leaf(&mut self, avail: &BTreeSet<Q>) -> Option<String> {
        let (v, lo, hi) = self.range(avail, 3)?;
        let w = hi - lo;
        let rs = if w == 1 { format!("{v}[{lo}]") } else { format!("{v}[{lo},{hi})") };
        Some(match self.r.gen_range(0..9) {
            0..=2 => format!("{rs} *= H;"),
            3 => format!("{rs} += {};", self.r.gen_range(1..8)),
            4 => format!("{rs} *= QFT;"),
            5 => format!("{rs} *= RQFT;"),
            6 => format!("{rs} *= dis;"),
            7 if w >= 2 => {
                let max = 1i64 << w;
                let n = self.r.gen_range(2..=max);
                let coprime: Vec<i64> = (1..n).filter(|a| gcd(*a, n) == 1).collect();
                let a = coprime.choose(self.r).copied().unwrap_or(1);
                format!("{rs} := mulmod({a}, {n});")
            }
            _ => {
                let k = self.r.gen_range(0..w);
                format!("{rs} *= oqasm {{ X {v}[{k}] }};")
            }
        })
    }

    fn block(&mut self, avail: &BTreeSet<Q>, depth: usize, mode_c: bool, len: usize) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..len {
            let last = i + 1 == len;
            out.extend(self.stmt(avail, depth, mode_c, last));
        }
        if out.is_empty() {
            out.push("skip;".into());
        }
        out
    }

    fn stmt(&mut self, avail: &BTreeSet<Q>, depth: usize, mode_c: bool, last: bool) -> Vec<String> {
        let choice = self.r.gen_range(0..10);
        match choice {
            0..=3 => self.leaf(avail).into_iter().collect(),
            4 | 5 if depth < 3 => {
                // Quantum conditional on one qubit or a comparison.
                let Some((v, lo, _)) = self.range(avail, 1) else { return vec![] };
                let mut rest = avail.clone();
                rest.remove(&(v.clone(), lo));
                let neg = if self.r.gen_bool(0.2) { "!" } else { "" };
                let guard = if choice == 5 {
                    let Some((u, a, b)) = self.range(&rest, 2) else { return vec![] };
                    (a..b).for_each(|i| {
                        rest.remove(&(u.clone(), i));
                    });
                    let op = if self.r.gen_bool(0.5) { "<" } else { "==" };
                    format!("{neg}{u}[{a},{b}) {op} {} @ {v}[{lo}]", self.r.gen_range(0..4))
                } else {
                    format!("{neg}{v}[{lo}]")
                };
                if rest.is_empty() {
                    return vec![];
                }
                let len = self.r.gen_range(1..3);
                let body = self.block(&rest, depth + 1, false, len);
                let mut out = vec![format!("if ({guard}) {{")];
                out.extend(indent(body));
                out.push("}".into());
                out
            }
            6 if depth < 3 => {
                // Guarded loop over two arrays, or a plain loop.
                let arrays: Vec<(String, usize)> = self.sizes.clone();
                let (v, n) = arrays.choose(self.r).unwrap().clone();
                let others: Vec<&(String, usize)> = arrays.iter().filter(|(u, _)| *u != v).collect();
                let hi = self.r.gen_range(1..=n);
                let lo = self.r.gen_range(0..hi);
                let free = |u: &str, m: usize| (lo..hi).all(|j| j < m && avail.contains(&(u.to_string(), j)));
                let j = self.fresh();
                if let Some((w, m)) = others.choose(self.r).map(|x| (*x).clone()) {
                    if self.r.gen_bool(0.5) && free(&v, n) && free(&w, m) {
                        return vec![
                            format!("for {j} in [{lo},{hi}) && {v}[{j}] {{"),
                            format!("    {w}[{j}] += 1;"),
                            "}".into(),
                        ];
                    }
                }
                if free(&v, n) {
                    let op = if self.r.gen_bool(0.5) { "*= H" } else { "+= 1" };
                    vec![format!("for {j} in [{lo},{hi}) {{"), format!("    {v}[{j}] {op};"), "}".into()]
                } else {
                    vec![]
                }
            }
            7 => {
                let k = self.fresh();
                let val = self.r.gen_range(0..3);
                let body = self.block(avail, depth + 1, mode_c, 1);
                let mut out = vec![format!("let {k} = {val} in {{")];
                out.extend(indent(body));
                out.push("}".into());
                out
            }
            8 => {
                let (a, b) = (self.r.gen_range(0..3), self.r.gen_range(0..3));
                let t = self.block(avail, depth + 1, mode_c, 1);
                let e = self.block(avail, depth + 1, mode_c, 1);
                let mut out = vec![format!("if ({a} < {b}) {{")];
                out.extend(indent(t));
                out.push("} else {".into());
                out.extend(indent(e));
                out.push("}".into());
                out
            }
            9 if mode_c && last => {
                // Measure a whole, fully available array as the last statement.
                let cands: Vec<(String, usize)> = self
                    .sizes
                    .iter()
                    .filter(|(v, n)| (0..*n).all(|i| avail.contains(&(v.clone(), i))))
                    .cloned()
                    .collect();
                let Some((v, n)) = cands.choose(self.r).cloned() else { return vec![] };
                let mut rest = avail.clone();
                (0..n).for_each(|i| {
                    rest.remove(&(v.clone(), i));
                });
                let m = self.fresh();
                let body = if rest.is_empty() { vec!["skip;".into()] } else { self.block(&rest, depth, true, 1) };
                let mut out = vec![format!("let {m} = measure({v}) in {{")];
                out.extend(indent(body));
                out.push("}".into());
                out
            }
            _ => self.leaf(avail).into_iter().collect(),
        }
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Source text of a random program over at most `max_qubits` qubits with
/// conditionals nested at most three deep.  Not every output type checks;
/// callers filter.
pub fn gen_program(r: &mut ChaCha8Rng, max_qubits: usize) -> String {
    let names = ["a", "b", "c"];
    let count = r.gen_range(1..=3);
    let mut sizes = Vec::new();
    let mut left = max_qubits;
    for name in names.iter().take(count) {
        if left == 0 {
            break;
        }
        let n = r.gen_range(1..=left.min(4));
        left -= n;
        sizes.push((name.to_string(), n));
    }
    let avail: BTreeSet<Q> = sizes.iter().flat_map(|(v, n)| (0..*n).map(move |i| (v.clone(), i))).collect();
    let mut g = Gen { r, sizes: sizes.clone(), next_var: 0 };
    let len = g.r.gen_range(1..6);
    let body = g.block(&avail, 0, true, len);
    let mut src: String = sizes.iter().map(|(v, n)| format!("qubit {v}[{n}];\n")).collect();
    for l in body {
        src.push_str(&l);
        src.push('\n');
    }
    src
}

// ---------------------------------------------------------------------------
// Symbolic states
// ---------------------------------------------------------------------------

/// A random normalized `EN` value over `width` qubits with distinct bases.
pub fn random_en(r: &mut ChaCha8Rng, width: usize) -> EnValue {
    let total = 1usize << width;
    let count = r.gen_range(1..=total.min(6));
    let mut idx: Vec<usize> = (0..total).collect();
    idx.shuffle(r);
    let mut kets: Vec<BasisKet> = idx[..count]
        .iter()
        .map(|&i| {
            let basis = (0..width).map(|b| (i >> b) & 1 == 1).collect();
            BasisKet::new(c(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)), basis)
        })
        .collect();
    let norm: f64 = kets.iter().map(|k| k.amp.norm_sqr()).sum::<f64>().sqrt();
    kets.iter_mut().for_each(|k| k.amp /= norm);
    EnValue::new(width, kets)
}

/// A random value of a random type over `width` qubits.
pub fn random_value(r: &mut ChaCha8Rng, width: usize) -> QuantumValue {
    match r.gen_range(0..3) {
        0 => QuantumValue::Nor {
            amp: Complex64::from_polar(1.0, r.gen_range(0.0..std::f64::consts::TAU)),
            bits: (0..width).map(|_| r.gen()).collect(),
            stack: Vec::new(),
        },
        1 => QuantumValue::Had { phases: (0..width).map(|_| r.gen::<f64>()).collect() },
        _ => QuantumValue::En(random_en(r, width)),
    }
}

/// A random state covering every declared qubit with entries whose loci
/// list the qubits in a shuffled order.
pub fn random_state(r: &mut ChaCha8Rng, env: &KindEnv) -> State {
    let mut qubits: Vec<Q> =
        env.arrays().iter().flat_map(|(v, n)| (0..*n).map(move |i| (v.clone(), i))).collect();
    qubits.shuffle(r);
    let mut state = State::new();
    let mut i = 0;
    while i < qubits.len() {
        let w = r.gen_range(1..=(qubits.len() - i).min(4));
        let locus = Locus::new(qubits[i..i + w].iter().map(|(v, k)| Range::new(v.clone(), *k, k + 1)));
        state.entries.push(Entry { locus, value: random_value(r, w) });
        i += w;
    }
    state
}

/// A random equivalence rewrite applicable to one or two entries of `state`.
pub fn random_step(r: &mut ChaCha8Rng, state: &State) -> PlanStep {
    let pick = |r: &mut ChaCha8Rng| state.entries[r.gen_range(0..state.entries.len())].locus.clone();
    match r.gen_range(0..4) {
        0 => PlanStep::Cast { locus: pick(r), to: QType::EN },
        1 => {
            let locus = pick(r);
            let w = locus.width();
            let n = r.gen_range(0..w);
            let i = r.gen_range(0..=w - n);
            let k = r.gen_range(0..=w - n - i);
            PlanStep::Permute { locus, n, i, k }
        }
        2 if state.entries.len() >= 2 => {
            let mut idx: Vec<usize> = (0..state.entries.len()).collect();
            idx.shuffle(r);
            PlanStep::Join { left: state.entries[idx[0]].locus.clone(), right: state.entries[idx[1]].locus.clone() }
        }
        _ => {
            let locus = pick(r);
            let n = r.gen_range(0..=locus.width());
            PlanStep::Split { locus, n }
        }
    }
}
