mod common;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use qafny::qstate::{
    alpha, bits_to_u64, had_to_en, join_values, merge_kets, permute_value, pop_frozen, push_frozen, split_value,
    u64_to_bits, BasisKet, EnValue, Entry, Locus, QuantumValue, State,
};
use qafny::typecheck::Mode;

/// Dense vector of a value; position `k` of a basis is bit `k` of the index.
fn dense(v: &QuantumValue) -> DVector<Complex64> {
    let en = v.to_en();
    let mut out = DVector::from_element(1 << en.width, Complex64::new(0.0, 0.0));
    for k in &en.kets {
        out[bits_to_u64(&k.basis) as usize] += k.amp;
    }
    out
}

/// `hi ⊗ lo` where `lo` holds the low index bits.
fn kron(hi: &DVector<Complex64>, lo: &DVector<Complex64>) -> DVector<Complex64> {
    let m = hi.kronecker(lo);
    DVector::from_column_slice(m.as_slice())
}

fn close(a: &DVector<Complex64>, b: &DVector<Complex64>, tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= tol)
}

#[test]
fn had_expansion_matches_tensor_product() {
    let phases = [0.0, 0.5, 0.125];
    let mut expect = DVector::from_element(1, Complex64::new(1.0, 0.0));
    for r in phases {
        let q = DVector::from_vec(vec![
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            alpha(r) * std::f64::consts::FRAC_1_SQRT_2,
        ]);
        // Later positions are higher index bits.
        expect = kron(&q, &expect);
    }
    let got = dense(&QuantumValue::En(had_to_en(&QuantumValue::Had { phases: phases.to_vec() })));
    assert!(close(&got, &expect, 1e-12));
}

#[test]
fn bits_conversions_are_little_endian() {
    assert_eq!(u64_to_bits(6, 4), vec![false, true, true, false]);
    assert_eq!(bits_to_u64(&[true, false, true]), 5);
    for v in 0..64 {
        assert_eq!(bits_to_u64(&u64_to_bits(v, 6)), v);
    }
}

#[test]
fn split_of_entangled_value_fails() {
    let bell = QuantumValue::En(EnValue::new(
        2,
        vec![
            BasisKet::new(Complex64::new(0.5f64.sqrt(), 0.0), vec![false, false]),
            BasisKet::new(Complex64::new(0.5f64.sqrt(), 0.0), vec![true, true]),
        ],
    ));
    assert!(matches!(split_value(&bell, 1), Err(qafny::Error::NotSeparable(1))));
}

#[test]
fn well_formedness_catches_overlap_and_norm() {
    let mut s = State::new();
    s.push(Locus::single("x", 0, 2), QuantumValue::nor(vec![false, false]));
    s.push(Locus::single("x", 1, 3), QuantumValue::nor(vec![false, false]));
    assert!(s.check_well_formed(Mode::C).is_err());
    let mut t = State::new();
    t.push(
        Locus::single("x", 0, 1),
        QuantumValue::En(EnValue::new(1, vec![BasisKet::new(Complex64::new(0.5, 0.0), vec![true])])),
    );
    assert!(t.check_well_formed(Mode::C).is_err());
    assert!(t.check_well_formed(Mode::M).is_ok());
}

#[test]
fn json_dump_has_fixed_schema() {
    let mut s = State::new();
    s.push(Locus::single("x", 0, 2), QuantumValue::nor(vec![true, false]));
    let j = s.to_json();
    assert_eq!(j["loci"][0]["ranges"][0], serde_json::json!(["x", 0, 2]));
    assert_eq!(j["loci"][0]["type"], "Nor");
    assert_eq!(j["loci"][0]["kets"][0]["basis"], "10");
    assert_eq!(j["loci"][0]["kets"][0]["re"], 1.0);
}

#[test]
fn entry_equality_is_structural() {
    let e = Entry { locus: Locus::single("x", 0, 1), value: QuantumValue::nor(vec![true]) };
    assert_eq!(e.clone(), e);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn join_is_kronecker_product(seed in any::<u64>(), w1 in 1usize..4, w2 in 1usize..4) {
        let mut r = common::rng(seed);
        let a = common::random_value(&mut r, w1);
        let b = common::random_value(&mut r, w2);
        let joined = join_values(&a, &b);
        prop_assert_eq!(joined.width(), w1 + w2);
        prop_assert!(close(&dense(&joined), &kron(&dense(&b), &dense(&a)), 1e-12));
    }

    #[test]
    fn split_inverts_join_for_products(seed in any::<u64>(), w1 in 1usize..4, w2 in 1usize..4) {
        let mut r = common::rng(seed);
        let a = common::random_value(&mut r, w1);
        let bits: Vec<bool> = (0..w2).map(|i| seed >> i & 1 == 1).collect();
        let b = QuantumValue::nor(bits);
        let (x, y) = split_value(&join_values(&a, &b), w1).expect("constant suffix splits");
        prop_assert!(close(&dense(&x), &dense(&a), 1e-12));
        prop_assert!(close(&dense(&y), &dense(&b), 1e-12));
    }

    #[test]
    fn permute_matches_permutation_matrix(seed in any::<u64>(), w in 2usize..6) {
        let mut r = common::rng(seed);
        let v = common::random_value(&mut r, w);
        let n = (seed as usize) % w;
        let i = 1 + (seed as usize >> 8) % (w - n).max(1);
        let i = i.min(w - n);
        let k = (seed as usize >> 16) % (w - n - i + 1);
        // New position p holds old position sigma(p).
        let sigma = |p: usize| {
            if p < n || p >= n + i + k {
                p
            } else if p < n + k {
                p + i
            } else {
                p - k
            }
        };
        let dim = 1 << w;
        let mut perm = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for old in 0..dim {
            let new = (0..w).fold(0, |acc, p| acc | ((old >> sigma(p)) & 1) << p);
            perm[(new, old)] = Complex64::new(1.0, 0.0);
        }
        let got = permute_value(&v, n, i, k).unwrap();
        prop_assert!(close(&dense(&got), &(perm * dense(&v)), 1e-12));
    }

    #[test]
    fn freeze_and_restore_are_inverse(seed in any::<u64>(), w in 2usize..5) {
        let mut r = common::rng(seed);
        let v = common::random_en(&mut r, w);
        let n = 1 + (seed as usize) % (w - 1);
        let frozen = push_frozen(&v, n).unwrap();
        prop_assert_eq!(frozen.width, w - n);
        prop_assert!(pop_frozen(&frozen).unwrap().approx_eq(&v, 1e-15));
    }

    #[test]
    fn merging_is_idempotent_and_preserves_the_vector(seed in any::<u64>(), w in 1usize..4) {
        let mut r = common::rng(seed);
        let mut v = common::random_en(&mut r, w);
        // Duplicate every ket with half its amplitude split over two copies.
        v.kets = v.kets.iter().flat_map(|k| {
            let h = BasisKet { amp: k.amp * 0.5, ..k.clone() };
            [h.clone(), h]
        }).collect();
        let m = merge_kets(&v);
        prop_assert_eq!(merge_kets(&m).kets.len(), m.kets.len());
        prop_assert!(close(&dense(&QuantumValue::En(m)), &dense(&QuantumValue::En(v)), 1e-12));
    }
}
