use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xychain::oracle::oracle_check;
use xychain::scan::{emit_plot_data, load_config, load_products, run_scan, ProductKind, ScanConfig};
use xychain::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "xychain", version, about = "Fidelity-susceptibility scans of the disordered quantum XY chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scan described by a JSON config.
    Scan(RunArgs),
    /// Run a scan and fit distribution collapses at one axis value.
    Collapse(RunArgs),
    /// Compare the determinant fidelity and susceptibility with exact
    /// diagonalization on random 4-8 site chains.
    OracleCheck(OracleArgs),
    /// Re-emit plot CSVs from a saved products.json.
    EmitPlots(EmitArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `ensemble.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (all cores by default); results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 120)]
    realizations: usize,
    /// Directory for `oracle_check.json`; printed only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmitArgs {
    #[arg(long)]
    products: PathBuf,
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Argument(_) => EXIT_CONFIG,
        Error::NonFinite
        | Error::Decomposition { .. }
        | Error::StepTooLarge { .. }
        | Error::Statistics(_)
        | Error::Fit(_)
        | Error::Domain(_)
        | Error::Analysis(_)
        | Error::Degenerate { .. }
        | Error::Numeric(_)
        | Error::FailureThreshold { .. } => EXIT_NUMERIC,
        _ => EXIT_FAILURE,
    }
}

fn prepare(args: &RunArgs, collapse: bool) -> Result<ScanConfig, Error> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.ensemble.master_seed = seed;
    }
    if collapse {
        for kind in [ProductKind::ChiSummary, ProductKind::Collapse] {
            if !cfg.wants(kind) {
                cfg.outputs.push(kind);
            }
        }
        cfg.validate()?;
    }
    Ok(cfg)
}

fn scan(args: &RunArgs, collapse: bool) -> Result<(), Error> {
    let cfg = prepare(args, collapse)?;
    let manifest = run_scan(&cfg, &args.out, args.workers)?;
    let flagged: usize = manifest.points.iter().map(|p| p.n_flagged).sum();
    let total: usize = manifest.points.iter().map(|p| p.n_realizations).sum();
    say!(
        "{} points, {} realizations ({} flagged) in {:.1} s",
        manifest.points.len(),
        total,
        flagged,
        manifest.wall_clock_seconds
    );
    for f in &manifest.files {
        say!("{}", args.out.join(f).display());
    }
    Ok(())
}

fn oracle(args: &OracleArgs) -> Result<bool, Error> {
    let report = oracle_check(args.seed, args.realizations)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("oracle_check.json");
            fs::write(&path, json + "\n")?;
            say!("{}", path.display());
        }
        None => say!("{json}"),
    }
    say!(
        "fidelity: {} compared, {} degenerate, max error {:.3e}; chi: {} compared, max rel error {:.3e}; {}",
        report.compared,
        report.skipped,
        report.max_fidelity_error,
        report.chi_compared,
        report.max_chi_rel_error,
        if report.passed { "PASS" } else { "FAIL" }
    );
    Ok(report.passed)
}

fn emit(args: &EmitArgs) -> Result<(), Error> {
    let products = load_products(&args.products)?;
    for f in emit_plot_data(&products, &args.out)? {
        say!("{}", f.display());
    }
    Ok(())
}

fn report(e: &Error, context: &Path) -> ExitCode {
    eprintln!("error: {e} ({})", context.display());
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Scan(args) | Command::Collapse(args) => {
            let collapse = matches!(cli.command, Command::Collapse(_));
            match scan(args, collapse) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => report(&e, &args.config),
            }
        }
        Command::OracleCheck(args) => match oracle(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_NUMERIC),
            Err(e) => report(&e, Path::new("oracle-check")),
        },
        Command::EmitPlots(args) => match emit(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => report(&e, &args.products),
        },
    }
}
