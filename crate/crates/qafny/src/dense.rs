//! Dense state-vector reference simulator and the interpreter/circuit
//! cross-check.
//!
//! Qubit `q` of a [`StateVector`] is bit `q` of the amplitude index.  The
//! simulator applies control blocks natively (by masking indices), so it is
//! independent of the flattener that rewrites them into primitive gates.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::circuit::{compile, Gate, GateProgram, Layout};
use crate::error::{Error, Result};
use crate::interp::{eval, MeasurePolicy, NoObserver};
use crate::kinds::{KindEnv, MVal};
use crate::qstate::{bits_to_u64, Entry, Locus, QuantumValue, State};
use crate::surface::{expand_calls, parse_program, Stmt};
use crate::typecheck::{typecheck, Mode, TypeEnv};

/// Default bound on simulated qubits.
pub const DEFAULT_MAX_QUBITS: usize = 14;

/// Tolerance used by the cross-check.
pub const CROSSCHECK_TOL: f64 = 1e-7;

/// A dense vector of `2^n` amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub num_qubits: usize,
    pub amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` over `n` qubits.
    pub fn zeros(n: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { num_qubits: n, amps }
    }

    /// The computational basis state with index `index`.
    pub fn basis(n: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[index] = Complex64::new(1.0, 0.0);
        StateVector { num_qubits: n, amps }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies one gate; measurements are no-ops (deferred measurement).
    pub fn apply(&mut self, g: &Gate) -> Result<()> {
        self.apply_masked(g, 0)
    }

    /// Applies a gate list in order.
    pub fn apply_all(&mut self, gates: &[Gate]) -> Result<()> {
        gates.iter().try_for_each(|g| self.apply(g))
    }

    fn check(&self, q: usize) -> Result<usize> {
        if q >= self.num_qubits {
            return Err(Error::DimensionMismatch(format!(
                "qubit {q} out of range for {} qubits",
                self.num_qubits
            )));
        }
        Ok(1 << q)
    }

    fn apply_masked(&mut self, g: &Gate, mask: usize) -> Result<()> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match g {
            Gate::H(q) => {
                let b = self.check(*q)?;
                if mask & b != 0 {
                    return Err(Error::ControlTargetOverlap(*q));
                }
                for i in 0..self.amps.len() {
                    if i & b == 0 && i & mask == mask {
                        let (a0, a1) = (self.amps[i], self.amps[i | b]);
                        self.amps[i] = (a0 + a1) * h;
                        self.amps[i | b] = (a0 - a1) * h;
                    }
                }
            }
            Gate::X(q) => {
                let b = self.check(*q)?;
                if mask & b != 0 {
                    return Err(Error::ControlTargetOverlap(*q));
                }
                for i in 0..self.amps.len() {
                    if i & b == 0 && i & mask == mask {
                        self.amps.swap(i, i | b);
                    }
                }
            }
            Gate::Rz { k, neg, q } => {
                let b = self.check(*q)?;
                if mask & b != 0 {
                    return Err(Error::ControlTargetOverlap(*q));
                }
                let theta = std::f64::consts::PI / 2f64.powi(*k as i32);
                let phase = Complex64::from_polar(1.0, if *neg { -theta } else { theta });
                for i in 0..self.amps.len() {
                    if i & b != 0 && i & mask == mask {
                        self.amps[i] *= phase;
                    }
                }
            }
            Gate::Cx(c, t) => {
                let cb = self.check(*c)?;
                self.apply_masked(&Gate::X(*t), mask | cb)?;
            }
            Gate::Ccx(a, b, t) => {
                let m = self.check(*a)? | self.check(*b)?;
                self.apply_masked(&Gate::X(*t), mask | m)?;
            }
            Gate::Ctrl { control, body } => {
                let cb = self.check(*control)?;
                for g in body {
                    self.apply_masked(g, mask | cb)?;
                }
            }
            Gate::Measure { q, .. } => {
                self.check(*q)?;
            }
        }
        Ok(())
    }

    /// Projects onto the subspace where `qubits` read `values`, returning
    /// the probability and the normalized post-state (unchanged when the
    /// probability is zero).
    pub fn project(&self, qubits: &[(usize, bool)]) -> (f64, StateVector) {
        let mut out = self.clone();
        for (i, a) in out.amps.iter_mut().enumerate() {
            if qubits.iter().any(|&(q, v)| (i >> q) & 1 == 1 && !v || (i >> q) & 1 == 0 && v) {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        let p = out.norm_sqr();
        if p > 0.0 {
            let s = 1.0 / p.sqrt();
            out.amps.iter_mut().for_each(|a| *a *= s);
        }
        (p, out)
    }
}

/// Runs a gate list from a given state.
pub fn simulate_gates(gates: &[Gate], input: &StateVector) -> Result<StateVector> {
    let mut s = input.clone();
    s.apply_all(gates)?;
    Ok(s)
}

/// The unitary of a measurement-free gate list as columns: entry
/// `[col][row]` is `⟨row|U|col⟩`.
pub fn unitary_columns(gates: &[Gate], n: usize) -> Result<Vec<Vec<Complex64>>> {
    (0..1usize << n).map(|c| simulate_gates(gates, &StateVector::basis(n, c)).map(|s| s.amps)).collect()
}

/// `min_φ ‖e^{iφ}a − b‖₂`, with `φ` taken from the largest component of `a`.
pub fn distance_up_to_phase(a: &StateVector, b: &StateVector) -> f64 {
    if a.amps.len() != b.amps.len() {
        return f64::INFINITY;
    }
    let (i, _) = a
        .amps
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bm), (i, z)| if z.norm_sqr() > bm { (i, z.norm_sqr()) } else { (bi, bm) });
    let phase = if a.amps[i].norm() > 0.0 && b.amps[i].norm() > 0.0 {
        let r = b.amps[i] / a.amps[i];
        r / r.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    a.amps.iter().zip(&b.amps).map(|(x, y)| (x * phase - y).norm_sqr()).sum::<f64>().sqrt()
}

/// `max_i |a_i − b_i|` (no phase alignment).
pub fn linf_distance(a: &StateVector, b: &StateVector) -> f64 {
    a.amps.iter().zip(&b.amps).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Embeds a symbolic state into `total` qubits.  Every declared qubit must
/// be covered by exactly one entry; qubits at or above the layout's
/// declared count (ancillas) are `|0⟩`.
pub fn densify(state: &State, layout: &Layout, total: usize) -> Result<StateVector> {
    if total > 30 {
        return Err(Error::TooManyQubits { needed: total, limit: 30 });
    }
    let mut covered = vec![false; total];
    // Each factor: concrete qubits and a sparse list of (basis mask, amp).
    let mut factors: Vec<Vec<(usize, Complex64)>> = Vec::new();
    for Entry { locus, value } in &state.entries {
        let qs = layout.locus(locus)?;
        for &q in &qs {
            if q >= total {
                return Err(Error::DimensionMismatch(format!("qubit {q} outside {total} qubits")));
            }
            if covered[q] {
                return Err(Error::OverlappingLoci(locus.to_string()));
            }
            covered[q] = true;
        }
        let en = value.to_en();
        let mut terms = Vec::with_capacity(en.kets.len());
        for k in &en.kets {
            if !k.stack.is_empty() {
                return Err(Error::NonEmptyStack);
            }
            let mask = k.basis.iter().zip(&qs).filter(|(b, _)| **b).fold(0usize, |m, (_, q)| m | 1 << q);
            terms.push((mask, k.amp));
        }
        factors.push(terms);
    }
    let declared = layout.num_declared().min(total);
    if let Some(q) = (0..declared).find(|&q| !covered[q]) {
        let name = layout.name_of(q).map(|(v, i)| format!("{v}[{i}]")).unwrap_or_else(|| q.to_string());
        return Err(Error::IncompleteCoverage(name));
    }
    let mut acc: Vec<(usize, Complex64)> = vec![(0, Complex64::new(1.0, 0.0))];
    for f in &factors {
        acc = acc.iter().flat_map(|(m, a)| f.iter().map(move |(m2, a2)| (m | m2, a * a2))).collect();
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << total];
    for (m, a) in acc {
        amps[m] += a;
    }
    Ok(StateVector { num_qubits: total, amps })
}

/// One measurement path of the interpreter.
#[derive(Debug, Clone)]
pub struct OutcomePath {
    pub outcomes: Vec<u64>,
    pub state: State,
    /// Measured arrays with their outcomes, in execution order.
    pub measured: Vec<(String, MVal)>,
}

/// Enumerates every measurement path with nonzero probability by
/// depth-first search over forced outcomes.
pub fn enumerate_paths(env: &KindEnv, input: &State, body: &[Stmt]) -> Result<Vec<OutcomePath>> {
    let mut out = Vec::new();
    let mut stack = vec![Vec::<u64>::new()];
    while let Some(prefix) = stack.pop() {
        match eval(env, input, body, MeasurePolicy::Forced(prefix.clone()), &mut NoObserver) {
            Ok(r) => out.push(OutcomePath { outcomes: prefix, state: r.state, measured: r.store.measured }),
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
    Ok(out)
}

/// Result of cross-checking one program.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossReport {
    pub qubits: usize,
    pub gates: usize,
    pub paths: usize,
    /// Largest post-state distance (up to global phase) over all paths.
    pub max_state_err: f64,
    /// Largest path-probability difference.
    pub max_prob_err: f64,
    /// `|1 − Σ path probabilities|`.
    pub mass_err: f64,
}

impl CrossReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_state_err <= tol && self.max_prob_err <= tol && self.mass_err <= tol
    }
}

fn count_gates(gates: &[Gate]) -> usize {
    gates.iter().map(|g| if let Gate::Ctrl { body, .. } = g { count_gates(body) } else { 1 }).sum()
}

/// Cross-checks the interpreter against the compiled circuit from `input`.
///
/// The circuit is simulated once with measurements deferred.  For every
/// interpreter path the circuit state is projected onto the path's outcomes;
/// the projection probability must match the path probability and the
/// projected state must match the interpreter's final state, with measured
/// arrays restored as the basis states they collapsed to.
pub fn crosscheck_state(env: &KindEnv, input: &State, body: &[Stmt], max_qubits: usize) -> Result<CrossReport> {
    typecheck(env, &TypeEnv::of_state(input), Mode::C, body)?;
    let prog = compile(env, body)?;
    crosscheck_with_gates(env, input, body, &prog, max_qubits)
}

/// Like [`crosscheck_state`] but against a given gate program instead of
/// the compiler's output.
pub fn crosscheck_with_gates(
    env: &KindEnv,
    input: &State,
    body: &[Stmt],
    prog: &GateProgram,
    max_qubits: usize,
) -> Result<CrossReport> {
    let n = prog.num_qubits;
    if n > max_qubits {
        return Err(Error::TooManyQubits { needed: n, limit: max_qubits });
    }
    let layout = Layout::from_env(env);
    let circ = simulate_gates(&prog.gates, &densify(input, &layout, n)?)?;
    let paths = enumerate_paths(env, input, body)?;
    let mut report = CrossReport {
        qubits: n,
        gates: count_gates(&prog.gates),
        paths: paths.len(),
        max_state_err: 0.0,
        max_prob_err: 0.0,
        mass_err: 0.0,
    };
    let mut mass = 0.0;
    for p in &paths {
        let mut state = p.state.clone();
        let mut fixed = Vec::new();
        let mut prob = 1.0;
        for (arr, m) in &p.measured {
            let w = env.array_size(arr)?;
            let bits = crate::qstate::u64_to_bits(m.outcome, w);
            for (i, b) in bits.iter().enumerate() {
                fixed.push((layout.qubit(arr, i)?, *b));
            }
            state.entries.push(Entry { locus: Locus::single(arr.clone(), 0, w), value: QuantumValue::nor(bits) });
            prob *= m.prob;
        }
        mass += prob;
        let (cp, post) = circ.project(&fixed);
        let expect = densify(&state, &layout, n)?;
        report.max_prob_err = report.max_prob_err.max((cp - prob).abs());
        report.max_state_err = report.max_state_err.max(distance_up_to_phase(&expect, &post));
    }
    report.mass_err = (1.0 - mass).abs();
    Ok(report)
}

/// Cross-checks a program's source text from the all-zero state.
pub fn crosscheck_source(text: &str, max_qubits: usize) -> Result<CrossReport> {
    let prog = expand_calls(&parse_program(text)?)?;
    let env = KindEnv::from_decls(&prog.decls)?;
    crosscheck_state(&env, &crate::interp::initial_state(&env), &prog.body, max_qubits)
}

/// One row of a corpus report.
#[derive(Debug, Clone)]
pub struct CorpusRow {
    pub path: PathBuf,
    pub outcome: std::result::Result<CrossReport, String>,
}

impl CorpusRow {
    pub fn passed(&self, tol: f64) -> bool {
        matches!(&self.outcome, Ok(r) if r.passed(tol))
    }
}

/// Cross-checks every `.qfy` file under `dir` (sorted by path) in parallel.
pub fn crosscheck_corpus(dir: &Path, max_qubits: usize) -> Result<Vec<CorpusRow>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "qfy"))
        .collect();
    files.sort();
    Ok(files
        .into_par_iter()
        .map(|path| {
            let outcome = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| crosscheck_source(&t, max_qubits).map_err(|e| e.to_string()));
            CorpusRow { path, outcome }
        })
        .collect())
}

/// Tab-separated report: one header line and one line per program.
pub fn corpus_tsv(rows: &[CorpusRow], tol: f64) -> String {
    let mut s = String::from("program\tstatus\tqubits\tgates\tpaths\tstate_err\tprob_err\tmass_err\n");
    for r in rows {
        let name = r.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match &r.outcome {
            Ok(c) => s.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{}\t{:.3e}\t{:.3e}\t{:.3e}\n",
                if c.passed(tol) { "pass" } else { "FAIL" },
                c.qubits,
                c.gates,
                c.paths,
                c.max_state_err,
                c.max_prob_err,
                c.mass_err
            )),
            Err(e) => s.push_str(&format!("{name}\terror\t-\t-\t-\t-\t-\t{}\n", e.replace('\t', " "))),
        }
    }
    s
}

/// Reads the little-endian value of `qubits` from a basis index.
pub fn read_index(index: usize, qubits: &[usize]) -> u64 {
    bits_to_u64(&qubits.iter().map(|q| (index >> q) & 1 == 1).collect::<Vec<_>>())
}
