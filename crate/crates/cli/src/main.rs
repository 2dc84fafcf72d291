//! `dbpmc`: experiment runner for decentralized mini-batch NAG-MCMC detection.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbp_mcmc::diagnostics::{AcceptanceRule, Suite};
use dbp_mcmc::harness::{self, ExperimentSpec};
use dbp_mcmc::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_DIAGNOSTIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "dbpmc", version, about = "Mini-batch NAG-MCMC MIMO detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment file (TOML). Takes precedence over --preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in experiment: fig3-desk, fig4-desk or oracle.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output directory for CSV/JSON files.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn spec(&self, default_preset: &str) -> dbp_mcmc::Result<ExperimentSpec> {
        let mut spec = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentSpec::load(path)?,
            (None, Some(name)) => ExperimentSpec::preset(name)?,
            (None, None) => ExperimentSpec::preset(default_preset)?,
        };
        if let Some(s) = self.seed {
            spec.run.seed = s;
        }
        if let Some(w) = self.workers {
            spec.run.workers = w;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BER/SER versus SNR for every configured detector.
    Ber(Common),
    /// BER versus the number of sampling iterations.
    Convergence(Common),
    /// Closed-form and measured interconnect bandwidth.
    Bandwidth(Common),
    /// Real-multiplication counts and scaling fits.
    Complexity(Common),
    /// Exact-kernel diagnostics on tiny built-in instances.
    Diagnose {
        /// Comma-separated suites (default: all).
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Replace the exact acceptance rule by a deliberately wrong one.
        #[arg(long, hide = true)]
        mutate: bool,
    },
    /// Parse and check an experiment file, printing the normalized form.
    ValidateConfig {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
    Diagnostic,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Capacity { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn write_ber(spec: &ExperimentSpec, out: &Path) -> Result<(), Failure> {
    let res = harness::run_ber_sweep(spec)?;
    res.write_outputs(out)?;
    println!(
        "{:<24} {:>7} {:>10} {:>10} {:>11}",
        "detector", "snr_db", "bits", "errors", "ber"
    );
    for r in &res.rows {
        println!(
            "{:<24} {:>7.2} {:>10} {:>10} {:>11.3e}",
            r.detector, r.snr_db, r.bits, r.bit_errors, r.ber
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ber(c) => write_ber(&c.spec("oracle")?, &c.out),
        Command::Convergence(c) => {
            let spec = c.spec("fig3-desk")?;
            let res = harness::run_convergence(&spec)?;
            std::fs::create_dir_all(&c.out).map_err(Error::from)?;
            res.write_csv(std::fs::File::create(c.out.join("convergence.csv")).map_err(Error::from)?)?;
            for r in &res.rows {
                println!("{:<24} S={:<3} ber={:.4e}", r.detector, r.samples, r.ber);
            }
            Ok(())
        }
        Command::Bandwidth(c) => {
            let spec = c.spec("fig4-desk")?;
            let rep = harness::run_bandwidth_report(&spec)?;
            rep.write_outputs(&c.out)?;
            for r in &rep.rows {
                println!(
                    "{:<12} B={:<5} bits={:<9} measured={}",
                    r.mode, r.params.b, r.bits, r.measured_bits
                );
            }
            if rep.rows.iter().any(|r| r.bits != r.measured_bits) {
                return Err(Failure::Runtime("ledger disagrees with the closed form".into()));
            }
            Ok(())
        }
        Command::Complexity(c) => {
            let spec = c.spec("fig4-desk")?;
            let rep = harness::run_complexity_report(&spec)?;
            rep.write_outputs(&c.out)?;
            for f in &rep.fits {
                println!(
                    "{:<24} {:<16} slope={:<12.4} r2={:.6}",
                    f.sweep, f.target, f.slope, f.r2
                );
            }
            Ok(())
        }
        Command::Diagnose { suites, out, mutate } => {
            let selected: Vec<Suite> = match suites {
                None => Suite::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .filter(|n| !n.trim().is_empty())
                    .map(|n| n.trim().parse::<Suite>())
                    .collect::<dbp_mcmc::Result<_>>()?,
            };
            if selected.is_empty() {
                return Err(Failure::Usage("no diagnostic suite selected".into()));
            }
            let rule = if mutate {
                AcceptanceRule::Tampered
            } else {
                AcceptanceRule::ExactMh
            };
            let report = harness::run_diagnostics(&selected, rule, Some(&out))?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Diagnostic)
            }
        }
        Command::ValidateConfig { config, preset } => {
            let spec = match (config, preset) {
                (Some(p), _) => ExperimentSpec::load(&p)?,
                (None, Some(n)) => ExperimentSpec::preset(&n)?,
                (None, None) => return Err(Failure::Usage("pass --config PATH or --preset NAME".into())),
            };
            print!("{}", spec.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Diagnostic) => {
            eprintln!("diagnostics failed");
            ExitCode::from(EXIT_DIAGNOSTIC)
        }
    }
}
