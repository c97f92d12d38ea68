mod common;

use proptest::prelude::*;
use qafny::oqasm::Sizes;
use qafny::surface::{
    expand_calls, parse_bexp, parse_oqasm, parse_predicate, parse_program, print_oqasm, print_pred, print_program,
    Stmt,
};
use qafny::Error;

#[test]
fn corpus_print_parse_round_trip() {
    for (name, src) in common::corpus() {
        let p = parse_program(&src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = print_program(&p);
        let q = parse_program(&printed).unwrap_or_else(|e| panic!("{name} reprint: {e}\n{printed}"));
        assert_eq!(p, q, "{name}");
        assert_eq!(printed, print_program(&q), "{name}: printing is not a fixed point");
    }
}

#[test]
fn syntax_error_reports_position() {
    let err = parse_program("qubit x[2];\nx *= Q;\n").unwrap_err();
    match err {
        Error::Syntax { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn duplicate_declaration_is_rejected() {
    let err = parse_program("qubit x[2];\nqubit x[3];\n").unwrap_err();
    assert!(matches!(err, Error::DuplicateDeclaration(ref v) if v == "x"), "{err:?}");
}

#[test]
fn predicates_round_trip() {
    for text in [
        "x[0,3) |-> sum d in [0,2): 1 / sqrt(2) |rep(d, 3)>",
        "x[0,1) ++ y[0,2) |-> 1 / 2 |0, bits(3, 2)> + alpha(1 / 4) / 2 |111>",
        "M(u, 4, y[0,4) ++ x[0,4)) |-> sum i in [0,4): 1 / 2 |bits(4 * i + 2, 4)>",
        "F(x[0], x[0,1), y[0,2)) |-> |01> * k < 3",
        "U(!x[0], x[0,1), y[0,2)) |-> |01> && true",
    ] {
        let p = parse_predicate(text).unwrap_or_else(|e| panic!("{text}: {e}"));
        let printed = print_pred(&p);
        assert_eq!(parse_predicate(&printed).unwrap(), p, "{text} -> {printed}");
    }
}

#[test]
fn guard_forms_parse() {
    for text in ["x[0]", "!x[1]", "x[0,2) < 3 @ y[0]", "x == 1 @ z[0]", "k < 2", "true"] {
        parse_bexp(text).unwrap_or_else(|e| panic!("{text}: {e}"));
    }
}

#[test]
fn calls_are_inlined_with_renamed_arrays() {
    let src = "qubit a[1];\nqubit b[1];\ndef pair(p, q) {\n    p[0] *= H;\n    if (p[0]) {\n        q[0] += 1;\n    }\n}\npair(a, b);\n";
    let expanded = expand_calls(&parse_program(src).unwrap()).unwrap();
    let text = print_program(&expanded);
    assert!(text.contains("a[0] *= H;"), "{text}");
    assert!(text.contains("if (a[0])"), "{text}");
    assert!(text.contains("b[0] *= +1;") || text.contains("b[0] += 1;"), "{text}");
    assert!(!expanded.body.iter().any(|s| matches!(s, Stmt::Call { .. })));
}

#[test]
fn unknown_procedure_is_reported() {
    let p = parse_program("qubit a[1];\nnope(a);\n").unwrap();
    assert!(matches!(expand_calls(&p), Err(Error::UnknownProcedure(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_programs_round_trip(seed in any::<u64>()) {
        let src = common::gen_program(&mut common::rng(seed), 8);
        let p = parse_program(&src).expect("generator emits valid syntax");
        let printed = print_program(&p);
        prop_assert_eq!(parse_program(&printed).unwrap(), p);
    }

    #[test]
    fn generated_oqasm_round_trips(seed in any::<u64>()) {
        let sizes: Sizes = [("a".to_string(), 3), ("b".to_string(), 2)].into_iter().collect();
        let ins = common::gen_oqasm(&mut common::rng(seed), &sizes, 8);
        let printed = print_oqasm(&ins);
        prop_assert_eq!(parse_oqasm(&printed).unwrap(), ins);
    }
}
