mod common;

use std::path::PathBuf;

use num_complex::Complex64;
use proptest::prelude::*;
use qafny::circuit::{compile, Gate, GateProgram, Layout};
use qafny::dense::{
    corpus_tsv, crosscheck_source, crosscheck_with_gates, densify, distance_up_to_phase, linf_distance, read_index,
    simulate_gates, CorpusRow, StateVector, CROSSCHECK_TOL,
};
use qafny::interp::{apply_step_state, initial_state};
use qafny::kinds::KindEnv;
use qafny::qstate::{merge_kets, permute_value, BasisKet, EnValue, Entry, Locus, QuantumValue, State};
use qafny::surface::{expand_calls, parse_program};
use qafny::Error;

fn h() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

fn one_entry(env: &KindEnv, locus: Locus, value: QuantumValue) -> StateVector {
    let mut s = State::new();
    s.push(locus, value);
    densify(&s, &Layout::from_env(env), env.arrays().iter().map(|(_, n)| n).sum()).unwrap()
}

#[test]
fn single_zero_qubit() {
    let env = common::kind_env(&[("x", 1)]);
    let v = one_entry(&env, Locus::single("x", 0, 1), QuantumValue::nor(vec![false]));
    assert_eq!(v.amps, vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
}

#[test]
fn ghz_state_densifies_to_two_amplitudes() {
    let env = common::kind_env(&[("x", 3)]);
    let ghz = EnValue::new(
        3,
        vec![
            BasisKet::new(Complex64::new(h(), 0.0), vec![false; 3]),
            BasisKet::new(Complex64::new(h(), 0.0), vec![true; 3]),
        ],
    );
    let v = one_entry(&env, Locus::single("x", 0, 3), QuantumValue::En(ghz));
    for (i, a) in v.amps.iter().enumerate() {
        let want = if i == 0 || i == 7 { h() } else { 0.0 };
        assert!((a - Complex64::new(want, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn separate_entries_form_a_tensor_product() {
    let env = common::kind_env(&[("x", 1), ("y", 1)]);
    let mut s = State::new();
    s.push(Locus::single("y", 0, 1), QuantumValue::nor(vec![true]));
    s.push(Locus::single("x", 0, 1), QuantumValue::Had { phases: vec![0.5] });
    let v = densify(&s, &Layout::from_env(&env), 2).unwrap();
    // y is qubit 1: only indices 2 and 3 carry weight, with H|1⟩ on x.
    let want = [0.0, 0.0, h(), -h()];
    for (a, w) in v.amps.iter().zip(want) {
        assert!((a - Complex64::new(w, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn densify_errors() {
    let env = common::kind_env(&[("x", 2)]);
    let layout = Layout::from_env(&env);
    let mut partial = State::new();
    partial.push(Locus::single("x", 0, 1), QuantumValue::nor(vec![false]));
    assert!(matches!(densify(&partial, &layout, 2), Err(Error::IncompleteCoverage(ref q)) if q == "x[1]"));
    let mut stacked = State::new();
    let mut k = BasisKet::new(Complex64::new(1.0, 0.0), vec![false, false]);
    k.stack = vec![vec![true]];
    stacked.push(Locus::single("x", 0, 2), QuantumValue::En(EnValue::new(2, vec![k])));
    assert!(matches!(densify(&stacked, &layout, 2), Err(Error::NonEmptyStack)));
    let mut twice = State::new();
    twice.push(Locus::single("x", 0, 2), QuantumValue::nor(vec![false, false]));
    twice.push(Locus::single("x", 1, 2), QuantumValue::nor(vec![false]));
    assert!(matches!(densify(&twice, &layout, 2), Err(Error::OverlappingLoci(_))));
}

#[test]
fn ancillas_start_in_zero() {
    let env = common::kind_env(&[("x", 1)]);
    let s = initial_state(&env);
    let v = densify(&s, &Layout::from_env(&env), 3).unwrap();
    assert_eq!(v.amps[0], Complex64::new(1.0, 0.0));
    assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
}

#[test]
fn gate_examples() {
    let v = simulate_gates(&[Gate::H(0)], &StateVector::zeros(1)).unwrap();
    assert!((v.amps[0].re - h()).abs() < 1e-12 && (v.amps[1].re - h()).abs() < 1e-12);
    // |10⟩ lists qubit 0 first: index 1.
    let v = simulate_gates(&[Gate::Cx(0, 1)], &StateVector::basis(2, 1)).unwrap();
    assert_eq!(v.amps[3], Complex64::new(1.0, 0.0));
    assert!(simulate_gates(&[Gate::H(3)], &StateVector::zeros(2)).is_err());
}

#[test]
fn phase_insensitive_distance() {
    let env = common::kind_env(&[("x", 2)]);
    let mut r = common::rng(7);
    let v = one_entry(&env, Locus::single("x", 0, 2), QuantumValue::En(common::random_en(&mut r, 2)));
    let mut w = v.clone();
    let phase = Complex64::from_polar(1.0, 1.234);
    w.amps.iter_mut().for_each(|a| *a *= phase);
    assert!(distance_up_to_phase(&v, &w) < 1e-12);
    assert!(linf_distance(&v, &w) > 1e-3);
    let mut u = v.clone();
    u.amps.swap(0, 3);
    assert!(u == v || distance_up_to_phase(&v, &u) > 1e-6);
}

#[test]
fn read_index_is_little_endian_over_the_listed_qubits() {
    assert_eq!(read_index(0b1010, &[1, 3]), 3);
    assert_eq!(read_index(0b1010, &[3, 0]), 1);
}

fn source(name: &str) -> String {
    std::fs::read_to_string(common::corpus_dir().join(name)).unwrap()
}

#[test]
fn skip_crosschecks_with_zero_distance() {
    let r = crosscheck_source("qubit x[2];\nskip;\n", 14).unwrap();
    assert_eq!(r.max_state_err, 0.0);
    assert_eq!((r.paths, r.gates), (1, 0));
}

#[test]
fn ghz_crosschecks_tightly() {
    for n in 2..=8 {
        let r = crosscheck_source(&source(&format!("ghz_{n}.qfy")), 14).unwrap();
        assert!(r.passed(1e-9), "n={n}: {r:?}");
        assert_eq!(r.qubits, n);
    }
}

#[test]
fn shor_fragment_crosschecks() {
    let r = crosscheck_source(&source("shor_15.qfy"), 14).unwrap();
    assert!(r.passed(CROSSCHECK_TOL), "{r:?}");
    assert!(r.paths > 1);
}

#[test]
fn adder_gates_add_exhaustively() {
    let src = "qubit a[2];\nqubit b[2];\na ++ b *= oqasm { Rev a; Rev b; QFT 2 b; CU a[1] { SR 1 b }; CU a[0] { SR 0 b }; RQFT 2 b; Rev b; Rev a };\n";
    let prog = expand_calls(&parse_program(src).unwrap()).unwrap();
    let env = KindEnv::from_decls(&prog.decls).unwrap();
    let gates = compile(&env, &prog.body).unwrap();
    for a in 0..4usize {
        for b in 0..4usize {
            let out = simulate_gates(&gates.gates, &StateVector::basis(gates.num_qubits, a | b << 2)).unwrap();
            let want = a | ((a + b) % 4) << 2;
            assert!((out.amps[want].norm() - 1.0).abs() < 1e-9, "a={a} b={b}");
        }
    }
}

#[test]
fn mutated_circuit_fails_the_crosscheck() {
    let prog = expand_calls(&parse_program(&source("ghz_3.qfy")).unwrap()).unwrap();
    let env = KindEnv::from_decls(&prog.decls).unwrap();
    let good = compile(&env, &prog.body).unwrap();
    let input = initial_state(&env);
    assert!(crosscheck_with_gates(&env, &input, &prog.body, &good, 14).unwrap().passed(1e-9));
    let mut bad = good.clone();
    bad.gates.pop();
    let r = crosscheck_with_gates(&env, &input, &prog.body, &bad, 14).unwrap();
    assert!(!r.passed(CROSSCHECK_TOL), "{r:?}");
    let mut phased = good;
    phased.gates.insert(1, Gate::Rz { k: 0, neg: false, q: 0 });
    assert!(!crosscheck_with_gates(&env, &input, &prog.body, &phased, 14).unwrap().passed(CROSSCHECK_TOL));
}

#[test]
fn measurement_paths_match_projective_probabilities() {
    let r = crosscheck_source(&source("two_measurements.qfy"), 14).unwrap();
    assert!(r.passed(CROSSCHECK_TOL), "{r:?}");
    assert!(r.paths >= 4 && r.mass_err < 1e-12, "{r:?}");
}

#[test]
fn qubit_limit_is_enforced() {
    let err = crosscheck_source(&source("ghz_8.qfy"), 4).unwrap_err();
    assert!(matches!(err, Error::TooManyQubits { needed: 8, limit: 4 }));
    let empty = GateProgram { num_qubits: 20, num_declared: 20, gates: Vec::new() };
    let env = common::kind_env(&[("x", 1)]);
    assert!(matches!(
        crosscheck_with_gates(&env, &initial_state(&env), &[], &empty, 14),
        Err(Error::TooManyQubits { .. })
    ));
}

#[test]
fn tsv_report_format() {
    let rows = vec![
        CorpusRow { path: PathBuf::from("dir/ghz_2.qfy"), outcome: crosscheck_source(&source("ghz_2.qfy"), 14).map_err(|e| e.to_string()) },
        CorpusRow { path: PathBuf::from("bad.qfy"), outcome: Err("syntax\terror".into()) },
    ];
    let tsv = corpus_tsv(&rows, CROSSCHECK_TOL);
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines[0], "program\tstatus\tqubits\tgates\tpaths\tstate_err\tprob_err\tmass_err");
    let cols: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!(&cols[..5], &["ghz_2.qfy", "pass", "2", "2", "1"]);
    let cols: Vec<&str> = lines[2].split('\t').collect();
    assert_eq!(cols.len(), 8);
    assert_eq!(&cols[..2], &["bad.qfy", "error"]);
    assert_eq!(cols[7], "syntax error");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn densify_is_linear_over_ket_lists(seed in any::<u64>(), w in 1usize..4) {
        let mut r = common::rng(seed);
        let env = common::kind_env(&[("x", w)]);
        let v = common::random_en(&mut r, w);
        let split = EnValue::new(w, v.kets.iter().flat_map(|k| {
            let t = BasisKet { amp: k.amp * 0.25, ..k.clone() };
            let u = BasisKet { amp: k.amp * 0.75, ..k.clone() };
            [t, u]
        }).collect());
        let a = one_entry(&env, Locus::single("x", 0, w), QuantumValue::En(split.clone()));
        let b = one_entry(&env, Locus::single("x", 0, w), QuantumValue::En(merge_kets(&split)));
        let c = one_entry(&env, Locus::single("x", 0, w), QuantumValue::En(v));
        prop_assert!(linf_distance(&a, &b) < 1e-12);
        prop_assert!(linf_distance(&a, &c) < 1e-12);
    }

    #[test]
    fn permuted_value_is_a_permuted_vector(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let env = common::kind_env(&[("x", 3)]);
        let v = QuantumValue::En(common::random_en(&mut r, 3));
        let (n, i, k) = [(0, 1, 1), (0, 1, 2), (0, 2, 1), (1, 1, 1)][(seed % 4) as usize];
        let l = Locus::single("x", 0, 3);
        let base = one_entry(&env, l.clone(), v.clone());
        let moved = one_entry(&env, l, permute_value(&v, n, i, k).unwrap());
        // New position p holds old position sigma(p).
        let sigma = |p: usize| if p < n || p >= n + i + k { p } else if p < n + k { p + i } else { p - k };
        for old in 0..8usize {
            let new = (0..3).fold(0, |acc, p| acc | ((old >> sigma(p)) & 1) << p);
            prop_assert!((moved.amps[new] - base.amps[old]).norm() < 1e-12);
        }
    }

    #[test]
    fn rewrites_leave_the_dense_state_unchanged(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let env = common::kind_env(&[("a", 2), ("b", 3)]);
        let layout = Layout::from_env(&env);
        let mut s = common::random_state(&mut r, &env);
        let before = densify(&s, &layout, 5).unwrap();
        let step = common::random_step(&mut r, &s);
        if apply_step_state(&mut s, &step).is_ok() {
            let after = densify(&s, &layout, 5).unwrap();
            prop_assert!(linf_distance(&before, &after) <= 1e-12, "{}", step);
        }
    }

    #[test]
    fn simulation_preserves_norm(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let env = common::kind_env(&[("a", 2), ("b", 2)]);
        let s = common::random_state(&mut r, &env);
        let v = densify(&s, &Layout::from_env(&env), 4).unwrap();
        let gates: Vec<Gate> = (0..12).map(|t| match (seed >> (t * 3)) % 4 {
            0 => Gate::H(t % 4),
            1 => Gate::Cx(t % 4, (t + 1) % 4),
            2 => Gate::Rz { k: (t % 3) as u32, neg: t % 2 == 0, q: (t + 2) % 4 },
            _ => Gate::Ccx(t % 4, (t + 1) % 4, (t + 2) % 4),
        }).collect();
        let out = simulate_gates(&gates, &v).unwrap();
        prop_assert!((out.norm_sqr() - v.norm_sqr()).abs() < 1e-9);
    }
}

#[test]
fn entries_without_cover_are_rejected_even_when_ordered() {
    let env = common::kind_env(&[("x", 1), ("y", 1)]);
    let s = State { entries: vec![Entry { locus: Locus::single("y", 0, 1), value: QuantumValue::nor(vec![true]) }] };
    assert!(matches!(densify(&s, &Layout::from_env(&env), 2), Err(Error::IncompleteCoverage(ref q)) if q == "x[0]"));
}
