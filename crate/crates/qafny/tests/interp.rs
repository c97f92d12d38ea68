mod common;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use qafny::interp::{
    apply_dis, apply_en, apply_reduce, oracle_map, run_program, MeasurePolicy, NoObserver,
};
use qafny::kinds::KindEnv;
use qafny::qstate::{bits_to_u64, u64_to_bits, BasisKet, EnValue, Locus, Range};
use qafny::surface::{parse_aexp, parse_program, Oracle, Program, Unitary};
use qafny::triples::value_on;
use qafny::Error;

fn prog(src: &str) -> Program {
    parse_program(src).unwrap()
}

fn corpus_prog(name: &str) -> Program {
    let (_, src) = common::corpus().into_iter().find(|(n, _)| n == name).expect("corpus program");
    prog(&src)
}

fn dense(v: &EnValue) -> DVector<Complex64> {
    let mut out = DVector::from_element(1 << v.width, Complex64::new(0.0, 0.0));
    for k in &v.kets {
        out[bits_to_u64(&k.basis) as usize] += k.amp;
    }
    out
}

fn basis_value(width: usize, x: u64) -> EnValue {
    EnValue::new(width, vec![BasisKet::new(Complex64::new(1.0, 0.0), u64_to_bits(x, width))])
}

fn max_diff(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn whole(env: &KindEnv, v: &str) -> Locus {
    env.whole(v).unwrap()
}

#[test]
fn ghz_states_are_exact() {
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    for n in 2..=8 {
        let r = run_program(&corpus_prog(&format!("ghz_{n}")), MeasurePolicy::Seeded(0), &mut NoObserver).unwrap();
        assert_eq!(r.state.entries.len(), 1);
        let v = r.state.entries[0].value.to_en();
        assert_eq!(v.kets.len(), 2, "n={n}");
        for k in &v.kets {
            assert!(k.basis.iter().all(|&b| b == k.basis[0]));
            assert!((k.amp - Complex64::new(amp, 0.0)).norm() <= 1e-9);
        }
    }
}

#[test]
fn order_finding_matches_brute_force() {
    let p = corpus_prog("order_finding");
    let env = KindEnv::from_decls(&p.decls).unwrap();
    let r = run_program(&p, MeasurePolicy::Seeded(0), &mut NoObserver).unwrap();
    let v = value_on(&r.state, &whole(&env, "x").concat(&whole(&env, "y"))).unwrap().unwrap();
    assert_eq!(v.kets.len(), 16);
    let mut pow = 1u64;
    for i in 0..16u64 {
        let mut bits = u64_to_bits(i, 4);
        bits.extend(u64_to_bits(pow, 4));
        let k = v.kets.iter().find(|k| k.basis == bits).unwrap_or_else(|| panic!("missing ket for i={i}"));
        assert!((k.amp - Complex64::new(0.25, 0.0)).norm() <= 1e-9);
        pow = pow * 7 % 15;
    }
}

#[test]
fn forced_measurement_projects_like_a_dense_measurement() {
    let p = corpus_prog("shor_15");
    let env = KindEnv::from_decls(&p.decls).unwrap();
    // Pre-measurement state, then a dense projection onto y = 4.
    let pre = run_program(&corpus_prog("order_finding"), MeasurePolicy::Seeded(0), &mut NoObserver).unwrap();
    let joint = value_on(&pre.state, &whole(&env, "x").concat(&whole(&env, "y"))).unwrap().unwrap();
    let d = dense(&joint);
    let mut proj = DVector::from_element(16, Complex64::new(0.0, 0.0));
    for x in 0..16usize {
        proj[x] = d[x | 4 << 4];
    }
    let prob = proj.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let expect = proj / Complex64::new(prob.sqrt(), 0.0);

    let r = run_program(&p, MeasurePolicy::Forced(vec![4]), &mut NoObserver).unwrap();
    let (var, m) = &r.store.bindings[0];
    assert_eq!(var, "u");
    assert_eq!(m.outcome, 4);
    assert!((m.prob - 0.25).abs() <= 1e-9);
    assert!((m.prob - prob).abs() <= 1e-9);
    let x = value_on(&r.state, &whole(&env, "x")).unwrap().unwrap();
    let mut xs: Vec<u64> = x.kets.iter().map(|k| bits_to_u64(&k.basis)).collect();
    xs.sort();
    assert_eq!(xs, vec![2, 6, 10, 14]);
    assert!(x.kets.iter().all(|k| (k.amp - Complex64::new(0.5, 0.0)).norm() <= 1e-9));
    assert!(max_diff(&dense(&x), &expect) <= 1e-9);
}

#[test]
fn forced_outcomes_are_validated() {
    let p = corpus_prog("shor_15");
    match run_program(&p, MeasurePolicy::Forced(vec![5]), &mut NoObserver) {
        Err(Error::ForcedOutcomeImpossible { outcome: 5, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    match run_program(&p, MeasurePolicy::Forced(vec![]), &mut NoObserver) {
        Err(Error::OutcomesExhausted { choices, .. }) => {
            let outs: Vec<u64> = choices.iter().map(|c| c.0).collect();
            assert_eq!(outs, vec![1, 4, 7, 13]);
            assert!(choices.iter().all(|c| (c.1 - 0.25).abs() < 1e-9));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn seeded_bell_measurements_are_balanced() {
    let p = corpus_prog("bell_measure");
    let trials = 10_000u64;
    let zeros = (0..trials)
        .filter(|&s| {
            let r = run_program(&p, MeasurePolicy::Seeded(s), &mut NoObserver).unwrap();
            r.store.bindings[0].1.outcome == 0
        })
        .count() as f64;
    // Binomial(10000, 1/2): four standard deviations are 200.
    assert!((zeros - 5000.0).abs() <= 200.0, "zeros = {zeros}");
}

#[test]
fn seeded_runs_are_deterministic() {
    let p = corpus_prog("two_measurements");
    let a = run_program(&p, MeasurePolicy::Seeded(42), &mut NoObserver).unwrap();
    let b = run_program(&p, MeasurePolicy::Seeded(42), &mut NoObserver).unwrap();
    assert_eq!(a.store, b.store);
    assert_eq!(a.state, b.state);
}

#[test]
fn qft_matches_dft_matrix() {
    for t in 1..=4usize {
        let env = common::kind_env(&[("x", t)]);
        let locus = whole(&env, "x");
        let dim = 1usize << t;
        let f = DMatrix::from_fn(dim, dim, |y, x| {
            Complex64::from_polar(1.0 / (dim as f64).sqrt(), std::f64::consts::TAU * (x * y) as f64 / dim as f64)
        });
        for x in 0..dim {
            let input = basis_value(t, x as u64);
            let out = apply_en(&env, &locus, &Unitary::Qft, &input).unwrap();
            assert!(max_diff(&dense(&out), &(&f * dense(&input))) <= 1e-12, "QFT t={t} x={x}");
            let back = apply_en(&env, &locus, &Unitary::Rqft, &input).unwrap();
            assert!(max_diff(&dense(&back), &(f.adjoint() * dense(&input))) <= 1e-12, "RQFT t={t} x={x}");
        }
    }
}

#[test]
fn hadamard_matches_tensor_power() {
    let env = common::kind_env(&[("x", 3)]);
    let h1 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0].map(|v| Complex64::new(v * 0.5f64.sqrt(), 0.0)));
    let h3 = h1.kronecker(&h1).kronecker(&h1);
    let mut r = common::rng(7);
    for _ in 0..20 {
        let v = common::random_en(&mut r, 3);
        let out = apply_en(&env, &whole(&env, "x"), &Unitary::H, &v).unwrap();
        assert!(max_diff(&dense(&out), &(&h3 * dense(&v))) <= 1e-12);
    }
}

#[test]
fn arithmetic_oracles_match_brute_force() {
    let env = common::kind_env(&[("x", 4), ("y", 3)]);
    let x = whole(&env, "x");
    let add = Oracle::AddConst(parse_aexp("11").unwrap());
    let mul = Oracle::MulMod { a: parse_aexp("7").unwrap(), n: parse_aexp("15").unwrap() };
    for v in 0..16u64 {
        let (_, out) = oracle_map(&env, &x, &add, &u64_to_bits(v, 4)).unwrap();
        assert_eq!(bits_to_u64(&out), (v + 11) % 16);
        let (_, out) = oracle_map(&env, &x, &mul, &u64_to_bits(v, 4)).unwrap();
        let expect = if v < 15 { v * 7 % 15 } else { v };
        assert_eq!(bits_to_u64(&out), expect);
    }
    let xy = x.concat(&whole(&env, "y"));
    let pow = Oracle::PowMod { a: parse_aexp("3").unwrap(), n: parse_aexp("7").unwrap() };
    for e in 0..16u64 {
        for y in 0..7u64 {
            let mut bits = u64_to_bits(e, 4);
            bits.extend(u64_to_bits(y, 3));
            let (_, out) = oracle_map(&env, &xy, &pow, &bits).unwrap();
            assert_eq!(bits_to_u64(&out[..4]), e);
            let mut acc = y;
            for _ in 0..e {
                acc = acc * 3 % 7;
            }
            assert_eq!(bits_to_u64(&out[4..]), acc, "e={e} y={y}");
        }
    }
}

/// Dense `2|s⟩⟨s| − I` over `t` qubits.
fn reflection(t: usize) -> DMatrix<Complex64> {
    let dim = 1usize << t;
    DMatrix::from_fn(dim, dim, |i, j| {
        Complex64::new(2.0 / dim as f64 - if i == j { 1.0 } else { 0.0 }, 0.0)
    })
}

/// Applies `m` to the leading `t` qubits of a dense vector over `w` qubits.
fn on_prefix(m: &DMatrix<Complex64>, v: &DVector<Complex64>, t: usize, w: usize) -> DVector<Complex64> {
    let mut out = v.clone();
    for suffix in 0..1usize << (w - t) {
        let block = DVector::from_fn(1 << t, |p, _| v[p | suffix << t]);
        let r = m * block;
        for p in 0..1usize << t {
            out[p | suffix << t] = r[p];
        }
    }
    out
}

#[test]
fn reduce_matches_weighted_reflection() {
    let mut r = common::rng(11);
    for t in 1..=2usize {
        for n in 1..=3u32 {
            let root = 2f64.powi(n as i32).sqrt();
            let c = vec![true; t];
            let cu = (1usize << t) - 1;
            let w = DMatrix::from_fn(1 << t, 1 << t, |i, j| {
                let val = if i != j { 0.0 } else if i == cu { 1.0 / root.sqrt() } else { (1.0 - 1.0 / root).sqrt() };
                Complex64::new(val, 0.0)
            });
            let m = reflection(t) * w;
            let v = common::random_en(&mut r, t + 1);
            let out = apply_reduce(&v, t, &c, n).unwrap();
            assert!(max_diff(&dense(&out), &on_prefix(&m, &dense(&v), t, t + 1)) <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn diffusion_is_the_reflection_about_the_uniform_state(seed in any::<u64>(), t in 1usize..4, extra in 0usize..3) {
        let w = t + extra;
        let v = common::random_en(&mut common::rng(seed), w);
        let out = apply_dis(&v, t).unwrap();
        prop_assert!(max_diff(&dense(&out), &on_prefix(&reflection(t), &dense(&v), t, w)) <= 1e-12);
    }

    #[test]
    fn unitaries_preserve_norm(seed in any::<u64>(), which in 0usize..4) {
        let env = common::kind_env(&[("x", 3)]);
        let v = common::random_en(&mut common::rng(seed), 3);
        let u = [Unitary::H, Unitary::Qft, Unitary::Rqft, Unitary::Dis][which].clone();
        let locus = Locus::new([Range::new("x", 0, 3)]);
        let out = apply_en(&env, &locus, &u, &v).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() <= 1e-9);
    }
}
