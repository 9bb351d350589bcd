//! Command-line interface. Exit codes: 0 = verdict true (or verify pass),
//! 2 = verdict false, 1 = error. Errors are emitted as machine-readable
//! JSON on stderr; the tool never panics on malformed input.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::certificate::CertificateFile;
use crate::pipeline::{
    default_precision, parse_matrix_input, run_expansive, run_shift, run_torus, run_verify,
    ExpansiveConfig, ExpansiveRunSpec, PipelineError, RunOutput, ShiftConfig, TorusConfig,
};
use crate::symbolic::SubshiftSpec;

#[derive(Parser)]
#[command(
    name = "hauslip",
    version,
    about = "Construct entropy-adapted metrics and certify HD * log+ Lip against entropy"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// cap on worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Certify a linear toral map given by an integer matrix
    Torus {
        /// JSON file: array-of-arrays of integers, or an object with
        /// "matrix" and optional "jordan_override"
        #[arg(long)]
        matrix: PathBuf,
        /// target slack in HD * log+ Lip <= h + epsilon
        #[arg(long)]
        epsilon: f64,
        /// fix eta instead of selecting it
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// sampled torus points for the empirical block
        #[arg(long, default_value_t = 400)]
        samples: usize,
        /// sampled index pairs for lip/skew
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        /// denominator bound for sampled rational coordinates
        #[arg(long, default_value_t = 64)]
        max_den: u32,
        /// write the certificate here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// export sampled pair distances as CSV
        #[arg(long)]
        distances_csv: Option<PathBuf>,
        /// export (eps, N(eps)) net counts as CSV
        #[arg(long)]
        counts_csv: Option<PathBuf>,
    },
    /// Certify a full shift or subshift of finite type
    Shift {
        /// JSON file: {r, kind, transitions?}
        #[arg(long)]
        subshift: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// deepest cylinder length in the dimension fit
        #[arg(long, default_value_t = 15)]
        n_max: usize,
        #[arg(long, default_value_t = 800)]
        samples: usize,
        #[arg(long, default_value_t = 20_000)]
        pairs: usize,
        /// preperiod length bound for sampled points
        #[arg(long, default_value_t = 10)]
        pre_len: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        counts_csv: Option<PathBuf>,
    },
    /// Certify a positively expansive map over a forward-closed sample
    Expansive {
        /// JSON file: {kind, subshift?, c, cap, sample:{count, seed,
        /// closure_depth}, alpha?, n, i}
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// export the rho / Frink distance tables as CSV
        #[arg(long)]
        table_csv: Option<PathBuf>,
    },
    /// Recompute the analytic block and re-run the empirical block of an
    /// existing certificate with a fresh seed
    Verify {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
}

fn read_json(path: &Path) -> Result<serde_json::Value, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(out: &Option<PathBuf>, file: &CertificateFile) -> Result<(), PipelineError> {
    match out {
        Some(path) => file.write(path).map_err(PipelineError::from),
        None => {
            println!("{}", file.to_json());
            Ok(())
        }
    }
}

fn emit_csv(path: &Option<PathBuf>, content: Option<&String>) -> Result<(), PipelineError> {
    if let (Some(p), Some(c)) = (path, content) {
        std::fs::write(p, c)?;
    }
    Ok(())
}

fn finish(
    output: RunOutput,
    out: &Option<PathBuf>,
    distances: &Option<PathBuf>,
    counts: &Option<PathBuf>,
) -> Result<i32, PipelineError> {
    emit(out, &output.file)?;
    emit_csv(distances, output.distances_csv.as_ref())?;
    emit_csv(counts, output.counts_csv.as_ref())?;
    Ok(if output.file.certificate.verdict { 0 } else { 2 })
}

fn dispatch(cli: Cli) -> Result<i32, PipelineError> {
    if let Some(threads) = cli.threads {
        // best effort: a global pool may already exist in library use
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match cli.command {
        Command::Torus {
            matrix,
            epsilon,
            eta,
            seed,
            samples,
            pairs,
            max_den,
            out,
            distances_csv,
            counts_csv,
        } => {
            let (rows, over) = parse_matrix_input(&read_json(&matrix)?)?;
            let mut cfg = TorusConfig::new(rows, epsilon, seed);
            cfg.jordan_override = over;
            cfg.eta_override = eta;
            cfg.precision_bits = default_precision();
            cfg.samples = samples;
            cfg.pairs = pairs;
            cfg.max_den = max_den;
            cfg.want_distances_csv = distances_csv.is_some();
            cfg.want_counts_csv = counts_csv.is_some();
            finish(run_torus(&cfg)?, &out, &distances_csv, &counts_csv)
        }
        Command::Shift {
            subshift,
            epsilon,
            seed,
            n_max,
            samples,
            pairs,
            pre_len,
            out,
            counts_csv,
        } => {
            let spec: SubshiftSpec = serde_json::from_value(read_json(&subshift)?)?;
            let mut cfg = ShiftConfig::new(spec, epsilon, seed);
            cfg.n_max = n_max;
            cfg.samples = samples;
            cfg.pairs = pairs;
            cfg.pre_len = pre_len;
            cfg.want_counts_csv = counts_csv.is_some();
            finish(run_shift(&cfg)?, &out, &None, &counts_csv)
        }
        Command::Expansive {
            system,
            epsilon,
            seed,
            out,
            table_csv,
        } => {
            let spec: ExpansiveRunSpec = serde_json::from_value(read_json(&system)?)?;
            let cfg = ExpansiveConfig {
                spec,
                epsilon,
                seed,
                want_table_csv: table_csv.is_some(),
            };
            finish(run_expansive(&cfg)?, &out, &table_csv, &None)
        }
        Command::Verify { cert, seed } => {
            let file = CertificateFile::read(&cert)?;
            let report = run_verify(&file, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.pass { 0 } else { 2 })
        }
    }
}

/// Entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            1
        }
        Err(_) => {
            eprintln!("{}", serde_json::json!({ "error": "internal panic" }));
            1
        }
    }
}
