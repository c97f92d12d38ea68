//! Error type shared by every stage of the toolchain.
//!
//! Each variant belongs to one [`Stage`], which the command-line front end
//! maps to a process exit code.

use thiserror::Error;

/// Pipeline stage an error originates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Lexing or parsing of surface text.
    Parse,
    /// Kind checking, locus well-formedness, or type checking.
    Type,
    /// Interpretation, compilation, or simulation.
    Runtime,
    /// Predicate or triple checking.
    Check,
}

/// Errors raised by the toolchain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("duplicate declaration of `{0}`")]
    DuplicateDeclaration(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown procedure `{0}`")]
    UnknownProcedure(String),
    #[error("overlapping quantum operands: {0}")]
    OverlappingQuantumOperands(String),
    #[error("range {0} out of bounds")]
    RangeOutOfBounds(String),
    #[error("overlapping loci: {0}")]
    OverlappingLoci(String),
    #[error("kind error: {0}")]
    KindMismatch(String),
    #[error("width mismatch: {0}")]
    WidthMismatch(String),
    #[error("value is not separable at position {0}")]
    NotSeparable(usize),
    #[error("frozen-basis stack is empty")]
    EmptyStack,
    #[error("clone violation: guard and body share qubits {0}")]
    CloneViolation(String),
    #[error("measurement of `{0}` inside a quantum conditional")]
    MeasureInQuantumConditional(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("unbound locus: {0}")]
    UnboundLocus(String),
    #[error("{0} is not a subtype of {1}")]
    NotASubtype(String, String),
    #[error("loop bound is not a classical constant: {0}")]
    SymbolicLoopBound(String),
    #[error("arithmetic error: {0}")]
    Arithmetic(String),
    #[error("oracle is not reversible: {0}")]
    IrreversibleOracle(String),
    #[error("forced outcome {outcome} is impossible when measuring `{var}`")]
    ForcedOutcomeImpossible { var: String, outcome: u64 },
    #[error("forced outcome list exhausted at measurement of `{var}`")]
    OutcomesExhausted {
        var: String,
        /// Every outcome with nonzero probability at this site.
        choices: Vec<(u64, f64)>,
    },
    #[error("OQASM freshness violation: {0}")]
    FreshnessViolation(String),
    #[error("OQASM shift under CU is not neutral on `{0}`")]
    NonNeutralShiftUnderCU(String),
    #[error("OQASM basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("ill-formed OQASM state: {0}")]
    IllFormedState(String),
    #[error("unsupported oracle lowering: {0}")]
    UnsupportedOracleLowering(String),
    #[error("control qubit {0} is also a target")]
    ControlTargetOverlap(usize),
    #[error("state does not cover qubit {0}")]
    IncompleteCoverage(String),
    #[error("state has a nonempty frozen-basis stack")]
    NonEmptyStack,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("too many qubits: {needed} > {limit}")]
    TooManyQubits { needed: usize, limit: usize },
    #[error("ill-formed predicate: {0}")]
    IllFormedPredicate(String),
    #[error("precondition is not a state literal: {0}")]
    NonLiteralPrecondition(String),
    #[error("QASM read error at line {line}: {msg}")]
    QasmRead { line: usize, msg: String },
    #[error("assertion failed: {0}")]
    AssertionFailed(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// The stage this error is attributed to.
    pub fn stage(&self) -> Stage {
        use Error::*;
        match self {
            Syntax { .. } | DuplicateDeclaration(_) | QasmRead { .. } => Stage::Parse,
            UnboundVariable(_)
            | UnknownProcedure(_)
            | OverlappingQuantumOperands(_)
            | RangeOutOfBounds(_)
            | OverlappingLoci(_)
            | KindMismatch(_)
            | CloneViolation(_)
            | MeasureInQuantumConditional(_)
            | TypeMismatch(_)
            | UnboundLocus(_)
            | NotASubtype(..)
            | SymbolicLoopBound(_)
            | FreshnessViolation(_)
            | NonNeutralShiftUnderCU(_)
            | BasisMismatch(_) => Stage::Type,
            IllFormedPredicate(_) | NonLiteralPrecondition(_) | AssertionFailed(_) => Stage::Check,
            _ => Stage::Runtime,
        }
    }

    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Syntax { line, col, msg: msg.into() }
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
