use qafny::kinds::{eval_const, resolve_locus, KindEnv};
use qafny::surface::{parse_aexp, parse_program, LocusExp, RangeExp};
use qafny::typecheck::typecheck_program;
use qafny::Error;

fn check(src: &str) -> Result<(), Error> {
    typecheck_program(&parse_program(src)?).map(|_| ())
}

#[test]
fn empty_array_is_a_kind_error() {
    assert!(matches!(check("qubit x[0];\nskip;\n"), Err(Error::KindMismatch(_))));
}

#[test]
fn overlapping_ranges_in_one_locus() {
    assert!(matches!(check("qubit x[3];\nx[0,2) ++ x[1,3) *= H;\n"), Err(Error::OverlappingLoci(_))));
}

#[test]
fn out_of_bounds_ranges() {
    assert!(matches!(check("qubit x[3];\nx[2,5) *= H;\n"), Err(Error::RangeOutOfBounds(_))));
    let src = "qubit x[3];\nlet k = 1 in {\n    x[k+5] *= H;\n}\n";
    assert!(matches!(check(src), Err(Error::RangeOutOfBounds(_))));
}

#[test]
fn unbound_names() {
    assert!(matches!(check("qubit x[3];\ny[0] *= H;\n"), Err(Error::UnboundVariable(_))));
    assert!(matches!(check("qubit x[2];\nx += m;\n"), Err(Error::UnboundVariable(_))));
}

#[test]
fn measured_values_are_not_compile_time_constants() {
    let src = "qubit x[2];\nqubit y[1];\nlet m = measure(x) in {\n    y[m] *= H;\n}\n";
    assert!(matches!(check(src), Err(Error::KindMismatch(_))));
    let src = "qubit x[2];\nqubit y[1];\nlet m = measure(x) in {\n    for j in [0,m) {\n        y[0] *= H;\n    }\n}\n";
    assert!(matches!(check(src), Err(Error::KindMismatch(_) | Error::SymbolicLoopBound(_))));
}

#[test]
fn classical_arithmetic() {
    let env = KindEnv::from_decls(&[]).unwrap().with_c("k", 3).unwrap();
    let v = |s: &str| eval_const(&env, &parse_aexp(s).unwrap());
    assert_eq!(v("k * 2 + 1").unwrap(), 7);
    assert_eq!(v("2 ^ k").unwrap(), 8);
    assert_eq!(v("7 ^ (2 ^ k) % 15").unwrap(), 7i64.pow(8) % 15);
    assert_eq!(v("(k - 5) % 4").unwrap().rem_euclid(4), 2);
    assert!(v("1 / 0").is_err());
}

#[test]
fn loci_resolve_to_concrete_ranges() {
    let env = KindEnv::from_decls(&parse_program("qubit x[4];\nqubit y[2];\n").unwrap().decls).unwrap();
    let l = resolve_locus(
        &env,
        &LocusExp(vec![RangeExp::Whole("y".into()), RangeExp::Slice("x".into(), parse_aexp("1").unwrap(), parse_aexp("3").unwrap())]),
    )
    .unwrap();
    assert_eq!(l.to_string(), "y[0,2) ++ x[1,3)");
    assert_eq!(l.width(), 4);
}
