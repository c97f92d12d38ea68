//! Qafny: a quantum language with locus types.
//!
//! The crate provides the full toolchain for the core language: parsing
//! and printing ([`surface`]), kind checking ([`kinds`]), the symbolic state
//! model ([`qstate`]), the locus type system ([`typecheck`]), the symbolic
//! interpreter ([`interp`]), the reversible oracle sub-language ([`oqasm`]),
//! compilation to gates and OpenQASM 2.0 ([`circuit`]), a dense reference
//! simulator with the interpreter/circuit cross-check ([`dense`]), and
//! predicate model checking with Hoare-triple checking ([`triples`]).

pub mod circuit;
pub mod dense;
pub mod error;
pub mod interp;
pub mod kinds;
pub mod oqasm;
pub mod qstate;
pub mod surface;
pub mod triples;
pub mod typecheck;

pub use error::{Error, Result, Stage};
