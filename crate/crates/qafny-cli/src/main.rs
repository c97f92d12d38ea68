//! `qafny` command-line front end.
//!
//! Exit codes: 0 success, 1 parse error, 2 kind/type error, 3 runtime error,
//! 4 failed check (assertion, triple or cross-check), 64 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use qafny::circuit::{compile_program, emit_qasm};
use qafny::dense::{
    corpus_tsv, crosscheck_corpus, crosscheck_source, simulate_gates, CorpusRow, StateVector, CROSSCHECK_TOL,
    DEFAULT_MAX_QUBITS,
};
use qafny::interp::{run_program, MeasurePolicy, Observer};
use qafny::kinds::KindEnv;
use qafny::qstate::State;
use qafny::surface::{parse_program, print_program, Program, Stmt};
use qafny::triples::check_triple;
use qafny::typecheck::typecheck_program;
use qafny::{Error, Stage};

#[derive(Parser)]
#[command(name = "qafny", version, about = "Qafny toolchain: parse, type check, run, compile and check programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a program and print it back in canonical form.
    Parse { file: PathBuf },
    /// Type check a program and print the final type environment.
    Typecheck {
        file: PathBuf,
        /// Print the type environment after every statement.
        #[arg(long)]
        dump_types: bool,
    },
    /// Run a program and print the final state and classical store as JSON.
    Run {
        file: PathBuf,
        /// Seed for sampled measurement outcomes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated forced measurement outcomes (may be empty).
        #[arg(long, num_args = 0..=1, value_delimiter = ',')]
        force: Option<Vec<u64>>,
        /// Include the state after every top-level statement.
        #[arg(long)]
        trace: bool,
    },
    /// Compile a program to OpenQASM 2.0 or to the gate IR as JSON.
    Compile {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Emit::Qasm)]
        emit: Emit,
        /// Output file (standard output if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compile a program and simulate the circuit densely from |0…0⟩.
    Simulate {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_QUBITS)]
        max_qubits: usize,
    },
    /// Compare the interpreter with the simulated circuit; prints a TSV report.
    Crosscheck {
        /// A single program (omit when using --corpus).
        file: Option<PathBuf>,
        /// Check every `.qfy` file in this directory.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_QUBITS)]
        max_qubits: usize,
        /// Report file (standard output if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check a program's asserts as a Hoare triple.
    Check { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Qasm,
    IrJson,
}

/// A failure that is not an [`Error`]: a check that ran but did not pass.
enum Failure {
    Error(Error),
    CheckFailed(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Program, Error> {
    parse_program(&read(path)?)
}

fn write_out(output: Option<&Path>, text: &str) -> Result<(), Error> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Default)]
struct Tracer {
    steps: Vec<Value>,
}

impl Observer for Tracer {
    fn statement(&mut self, _env: &KindEnv, stmt: &Stmt, state: &State) {
        let text = print_program(&Program { decls: Vec::new(), procs: Vec::new(), body: vec![stmt.clone()] });
        self.steps.push(json!({"stmt": text.trim_end(), "state": state.to_json()}));
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Parse { file } => {
            print!("{}", print_program(&load(&file)?));
        }
        Command::Typecheck { file, dump_types } => {
            let report = typecheck_program(&load(&file)?)?;
            if dump_types {
                for line in &report.trace {
                    println!("{line}");
                }
            }
            println!("ok: {}", report.sigma);
        }
        Command::Run { file, seed, force, trace } => {
            let prog = load(&file)?;
            typecheck_program(&prog)?;
            let policy = match force {
                Some(v) => MeasurePolicy::Forced(v),
                None => MeasurePolicy::Seeded(seed),
            };
            let mut tracer = Tracer::default();
            let r = run_program(&prog, policy, &mut tracer)?;
            let store: Vec<Value> = r
                .store
                .bindings
                .iter()
                .zip(&r.store.measured)
                .map(|((var, m), (target, _))| {
                    json!({"var": var, "target": target, "outcome": m.outcome, "prob": m.prob})
                })
                .collect();
            let mut out = json!({"state": r.state.to_json(), "store": store});
            if trace {
                out["trace"] = Value::Array(tracer.steps);
            }
            println!("{}", serde_json::to_string_pretty(&out).expect("JSON serializes"));
        }
        Command::Compile { file, emit, output } => {
            let gates = compile_program(&load(&file)?)?;
            let text = match emit {
                Emit::Qasm => emit_qasm(&gates)?,
                Emit::IrJson => format!("{}\n", serde_json::to_string_pretty(&gates.to_json()).expect("JSON serializes")),
            };
            write_out(output.as_deref(), &text)?;
        }
        Command::Simulate { file, max_qubits } => {
            let gates = compile_program(&load(&file)?)?;
            if gates.num_qubits > max_qubits {
                return Err(Error::TooManyQubits { needed: gates.num_qubits, limit: max_qubits }.into());
            }
            let sv = simulate_gates(&gates.gates, &StateVector::zeros(gates.num_qubits))?;
            let amps: Vec<Value> = sv
                .amps
                .iter()
                .enumerate()
                .filter(|(_, z)| z.norm() > 1e-12)
                .map(|(i, z)| {
                    let basis: String =
                        (0..sv.num_qubits).map(|q| if (i >> q) & 1 == 1 { '1' } else { '0' }).collect();
                    json!({"basis": basis, "re": z.re, "im": z.im})
                })
                .collect();
            let out = json!({"qubits": sv.num_qubits, "declared": gates.num_declared, "amplitudes": amps});
            println!("{}", serde_json::to_string_pretty(&out).expect("JSON serializes"));
        }
        Command::Crosscheck { file, corpus, max_qubits, output } => {
            let rows = match (file, corpus) {
                (None, Some(dir)) => crosscheck_corpus(&dir, max_qubits)?,
                (Some(f), None) => {
                    let outcome = read(&f)
                        .and_then(|t| crosscheck_source(&t, max_qubits))
                        .map_err(|e| e.to_string());
                    vec![CorpusRow { path: f, outcome }]
                }
                _ => return Err(Failure::Usage("give exactly one of FILE or --corpus".into())),
            };
            write_out(output.as_deref(), &corpus_tsv(&rows, CROSSCHECK_TOL))?;
            let failed = rows.iter().filter(|r| !r.passed(CROSSCHECK_TOL)).count();
            if failed > 0 {
                return Err(Failure::CheckFailed(format!("{failed} of {} programs failed", rows.len())));
            }
        }
        Command::Check { file } => {
            let report = check_triple(&load(&file)?)?;
            for a in &report.asserts {
                let path: Vec<String> = a.path.iter().map(u64::to_string).collect();
                println!("{}\t[{}]\t{}", if a.holds { "pass" } else { "FAIL" }, path.join(","), a.pred);
            }
            if !report.passed() {
                return Err(Failure::CheckFailed("assertion failed".into()));
            }
            println!("ok: {} asserts on {} paths", report.asserts.len(), report.paths);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.stage() {
                Stage::Parse => 1,
                Stage::Type => 2,
                Stage::Runtime => 3,
                Stage::Check => 4,
            })
        }
        Err(Failure::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage: {msg}");
            ExitCode::from(64)
        }
    }
}
