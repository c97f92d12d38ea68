mod common;

use proptest::prelude::*;
use qafny::interp::{run_program, MeasurePolicy, NoObserver};
use qafny::surface::parse_program;
use qafny::typecheck::{typecheck_program, Mode, TypeEnv};
use qafny::Error;

fn sigma(src: &str) -> Result<String, Error> {
    typecheck_program(&parse_program(src)?).map(|r| r.sigma.to_string())
}

#[test]
fn hadamard_on_nor_gives_had_and_back() {
    assert_eq!(sigma("qubit x[3];\nx *= H;\n").unwrap(), "{x[0,3): Had}");
    assert_eq!(sigma("qubit x[3];\nx *= H;\nx *= H;\n").unwrap(), "{x[0,3): Nor}");
}

#[test]
fn ghz_ends_entangled() {
    let src = "qubit x[3];\nx[0] *= H;\nfor j in [1,3) && x[j-1] {\n    x[j] += 1;\n}\n";
    assert_eq!(sigma(src).unwrap(), "{x[0,3): EN}");
}

#[test]
fn oracle_on_nor_stays_nor() {
    assert_eq!(sigma("qubit x[3];\nx += 5;\n").unwrap(), "{x[0,3): Nor}");
}

#[test]
fn untouched_arrays_keep_their_entries() {
    let s = sigma("qubit x[2];\nqubit y[2];\nx *= QFT;\n").unwrap();
    assert_eq!(s, "{x[0,2): EN, y[0,2): Nor}");
}

#[test]
fn clone_violation() {
    let e = sigma("qubit x[2];\nif (x[0]) {\n    x[0] *= H;\n}\n").unwrap_err();
    assert!(matches!(e, Error::CloneViolation(_)), "{e:?}");
}

#[test]
fn no_measurement_inside_quantum_conditionals() {
    let src = "qubit x[2];\nqubit y[1];\nx *= H;\nif (x[0]) {\n    let m = measure(y) in {\n        skip;\n    }\n}\n";
    assert!(matches!(sigma(src), Err(Error::MeasureInQuantumConditional(_))));
}

#[test]
fn measured_arrays_leave_the_environment() {
    let src = "qubit x[2];\nqubit y[1];\nlet m = measure(x) in {\n    y *= H;\n}\n";
    assert_eq!(sigma(src).unwrap(), "{y[0,1): Had}");
    let bad = "qubit x[2];\nlet m = measure(x) in {\n    x *= H;\n}\n";
    assert!(matches!(sigma(bad), Err(Error::UnboundLocus(_))));
}

#[test]
fn oracle_validity() {
    assert!(matches!(sigma("qubit x[2];\nx := mulmod(2, 4);\n"), Err(Error::IrreversibleOracle(_))));
    assert!(matches!(sigma("qubit x[2];\nx := mulmod(3, 5);\n"), Err(Error::IrreversibleOracle(_))));
    assert!(sigma("qubit x[3];\nx := mulmod(3, 5);\n").is_ok());
}

#[test]
fn oqasm_block_typing() {
    let fresh = "qubit x[2];\nx *= oqasm { CU x[0] { X x[0] } };\n";
    assert!(matches!(sigma(fresh), Err(Error::FreshnessViolation(_))));
    let basis = "qubit x[2];\nx *= oqasm { QFT 2 x };\n";
    assert!(matches!(sigma(basis), Err(Error::BasisMismatch(_))));
    let shift = "qubit x[2];\nqubit y[2];\nx ++ y *= oqasm { CU x[0] { Lshift y } };\n";
    assert!(matches!(sigma(shift), Err(Error::NonNeutralShiftUnderCU(_))));
}

#[test]
fn dump_trace_has_one_line_per_statement() {
    let src = "qubit x[2];\nx *= H;\nx[0] += 1;\nskip;\n";
    let r = typecheck_program(&parse_program(src).unwrap()).unwrap();
    assert_eq!(r.trace.len(), 3);
}

/// Runs one generated program through the soundness checks; returns false
/// when it does not type check (and is skipped).
fn sound(seed: u64) -> Result<bool, String> {
    let src = common::gen_program(&mut common::rng(seed), 8);
    let prog = parse_program(&src).map_err(|e| format!("{e}\n{src}"))?;
    let Ok(report) = typecheck_program(&prog) else { return Ok(false) };
    let run = run_program(&prog, MeasurePolicy::Seeded(seed), &mut NoObserver)
        .map_err(|e| format!("well-typed program failed: {e}\n{src}"))?;
    run.state.check_well_formed(Mode::C).map_err(|e| format!("ill-formed result: {e}\n{src}"))?;
    if !src.contains("measure") {
        if report.plans != run.plans {
            return Err(format!("type checker and interpreter plans differ\n{src}"));
        }
        let actual = TypeEnv::of_state(&run.state);
        if actual != report.sigma {
            return Err(format!("final types {actual} differ from {}\n{src}", report.sigma));
        }
    }
    Ok(true)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn well_typed_programs_run_to_well_formed_states(seed in any::<u64>()) {
        if let Err(e) = sound(seed) {
            prop_assert!(false, "{}", e);
        }
    }
}
