//! `qam`: store, recall, analyze, tune and verify from the command line.
//!
//! Exit codes: 0 success (or recognized), 1 not recognized, 2 invalid input,
//! 3 scan does not bracket the transition, 4 infeasible tuning target,
//! 5 invariant failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qam_core::memory::{apply_memory_operator_to_zero, memory_state_analytic, store_sequential, MemoryModel, Pattern};
use qam_core::recall::{
    recall, retrieval_distribution, run_trials, CircuitMode, KnownMask, MissingBits, RetrievalMode, RetrievalParams,
};
use qam_core::thermo::{log_grid, scan_phase_transition, scan_to_csv, tune, AverageMode};
use qam_core::verify::{run_verification, Fault, Level};
use qam_core::QamError;

#[derive(Parser)]
#[command(name = "qam", version, about = "Quantum associative memory toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Store the patterns of a file and write the memory state as JSON.
    Store {
        patterns: PathBuf,
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = StoreMethod::Sequential)]
        method: StoreMethod,
    },
    /// Recall from the memory with a (possibly partial) input.
    Recall {
        patterns: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long)]
        b: usize,
        /// Repetition threshold (measured) or iteration count (amplified).
        #[arg(long = "T")]
        threshold: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Measured)]
        mode: ModeArg,
        #[arg(long)]
        seed: u64,
        /// Comma-separated indices of the known input bits.
        #[arg(long)]
        mask: Option<String>,
        #[arg(long, value_enum, default_value_t = MissingArg::Masked)]
        missing: MissingArg,
        /// Run this many independent recalls and print an empirical vs analytic table.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, value_enum, default_value_t = CircuitArg::Operator)]
        circuit: CircuitArg,
    },
    /// Scan the effective thermodynamics over a log-spaced grid of b.
    Analyze {
        #[arg(long)]
        n: u64,
        #[arg(long = "d-over-n")]
        d_over_n: f64,
        #[arg(long = "b-min")]
        b_min: f64,
        #[arg(long = "b-max")]
        b_max: f64,
        #[arg(long)]
        points: usize,
        out_csv: PathBuf,
        #[arg(long, value_enum, default_value_t = AverageArg::Integral)]
        mode: AverageArg,
    },
    /// Choose b and the repetition thresholds for an accuracy target.
    Tune {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        nu: f64,
        #[arg(long, value_enum, default_value_t = AverageArg::Integral)]
        mode: AverageArg,
    },
    /// Run the invariant suites.
    Verify {
        #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
        level: LevelArg,
        #[arg(long)]
        seed: u64,
        #[arg(long = "inject-fault", value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StoreMethod {
    Analytic,
    Sequential,
    Operator,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Measured,
    Amplified,
}

#[derive(Clone, Copy, ValueEnum)]
enum CircuitArg {
    Operator,
    Aux,
}

#[derive(Clone, Copy, ValueEnum)]
enum MissingArg {
    Masked,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum AverageArg {
    Sum,
    Integral,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    S2,
}

impl From<AverageArg> for AverageMode {
    fn from(a: AverageArg) -> Self {
        match a {
            AverageArg::Sum => AverageMode::Sum,
            AverageArg::Integral => AverageMode::Integral,
        }
    }
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<QamError> for Failure {
    fn from(e: QamError) -> Self {
        let code = match e {
            QamError::Bracket(_) => 3,
            QamError::Infeasible(_) => 4,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

fn load_model(path: &Path) -> Result<MemoryModel, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    MemoryModel::parse(&text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn cmd_store(patterns: &Path, out: &Path, method: StoreMethod) -> Result<u8, Failure> {
    let model = load_model(patterns)?;
    let (state, gates) = match method {
        StoreMethod::Analytic => (memory_state_analytic(&model)?, 0),
        StoreMethod::Sequential => {
            let s = store_sequential(&model)?;
            let g = s.record.total();
            (s.state, g)
        }
        StoreMethod::Operator => {
            let s = apply_memory_operator_to_zero(&model)?;
            let g = s.record.total();
            (s.state, g)
        }
    };
    fs::write(out, state.to_json()).map_err(|e| io_failure(out, e))?;
    println!("p={} n={} gates={}", model.p(), model.n(), gates);
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_recall(
    patterns: &Path,
    input: &str,
    b: usize,
    threshold: usize,
    mode: ModeArg,
    seed: u64,
    mask: Option<&str>,
    missing: MissingArg,
    trials: Option<u64>,
    circuit: CircuitArg,
) -> Result<u8, Failure> {
    let model = load_model(patterns)?;
    let input: Pattern = input.parse()?;
    let mask = mask.map(|m| KnownMask::parse(m, model.n())).transpose()?;
    let params = RetrievalParams {
        input: input.clone(),
        b,
        threshold,
        mask: mask.clone(),
        missing: match missing {
            MissingArg::Masked => MissingBits::Masked,
            MissingArg::Random => MissingBits::RandomFill,
        },
        mode: match mode {
            ModeArg::Measured => RetrievalMode::Measured,
            ModeArg::Amplified => RetrievalMode::Amplified,
        },
        circuit: match circuit {
            CircuitArg::Operator => CircuitMode::Operator,
            CircuitArg::Aux => CircuitMode::AuxRegister,
        },
    };

    let Some(trials) = trials else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = recall(&model, &params, &mut rng)?;
        println!("{}", outcome.to_json());
        return Ok(if outcome.recognized { 0 } else { 1 });
    };

    let summary = run_trials(&model, &params, trials, seed)?;
    let analytic_mask = match params.missing {
        MissingBits::Masked => mask.as_ref(),
        MissingBits::RandomFill => None,
    };
    let analytic = match (params.missing, &mask) {
        (MissingBits::RandomFill, Some(_)) => None,
        _ => match retrieval_distribution(&model, &input, b as f64, analytic_mask) {
            Ok(d) => Some(d),
            Err(QamError::DegenerateDistribution) => None,
            Err(e) => return Err(e.into()),
        },
    };
    println!("pattern,count,empirical,analytic");
    let denom = summary.recognized.max(1) as f64;
    for (k, pk) in model.patterns().iter().enumerate() {
        let c = summary.counts[pk.to_index()];
        let a = analytic.as_ref().map_or(f64::NAN, |d| d.probabilities[k]);
        println!("{pk},{c},{:.12e},{:.12e}", c as f64 / denom, a);
    }
    for (v, &c) in summary.counts.iter().enumerate() {
        let p = Pattern::from_index(v, model.n());
        if c > 0 && !model.contains(&p) {
            println!("{p},{c},{:.12e},{:.12e}", c as f64 / denom, 0.0);
        }
    }
    eprintln!(
        "trials={} recognized={} repetitions={}",
        summary.trials, summary.recognized, summary.total_repetitions
    );
    Ok(0)
}

fn cmd_analyze(n: u64, d_over_n: f64, b_min: f64, b_max: f64, points: usize, out: &Path, mode: AverageMode) -> Result<u8, Failure> {
    if !(0.0..=1.0).contains(&d_over_n) {
        return Err(QamError::InvalidParameter(format!("d/n must lie in [0, 1], got {d_over_n}")).into());
    }
    let d = (d_over_n * n as f64).round() as u64;
    let grid = log_grid(b_min, b_max, points)?;
    let scan = scan_phase_transition(n, d, &grid, mode)?;
    fs::write(out, scan_to_csv(&scan)).map_err(|e| io_failure(out, e))?;
    println!("b_cr={:.6e}", scan.b_cr);
    match scan.b_mid {
        Some(m) => println!("b_mid={m:.6e}"),
        None => println!("b_mid=none"),
    }
    println!("D_inf={:.12}", scan.d_inf);
    Ok(0)
}

fn cmd_tune(n: u64, epsilon: f64, nu: f64, mode: AverageMode) -> Result<u8, Failure> {
    let r = tune(n, epsilon, nu, mode)?;
    println!("{}", serde_json::to_string(&r).expect("tune result serializes"));
    Ok(0)
}

fn cmd_verify(level: LevelArg, seed: u64, fault: Option<FaultArg>) -> Result<u8, Failure> {
    let level = match level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let fault = fault.map(|FaultArg::S2| Fault::PerturbS2);
    let report = run_verification(level, seed, fault);
    println!("{report}");
    Ok(if report.passed() { 0 } else { 5 })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Store { patterns, out, method } => cmd_store(&patterns, &out, method),
        Command::Recall {
            patterns,
            input,
            b,
            threshold,
            mode,
            seed,
            mask,
            missing,
            trials,
            circuit,
        } => cmd_recall(&patterns, &input, b, threshold, mode, seed, mask.as_deref(), missing, trials, circuit),
        Command::Analyze {
            n,
            d_over_n,
            b_min,
            b_max,
            points,
            out_csv,
            mode,
        } => cmd_analyze(n, d_over_n, b_min, b_max, points, &out_csv, mode.into()),
        Command::Tune { n, epsilon, nu, mode } => cmd_tune(n, epsilon, nu, mode.into()),
        Command::Verify { level, seed, inject_fault } => cmd_verify(level, seed, inject_fault),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
