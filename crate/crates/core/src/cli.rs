//! `pocmab` command line.
//!
//! Exit codes: 0 success, 1 failed validation or runtime error, 2 usage
//! error (including unreadable or invalid config files).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::harness::validate::validate_config;
use crate::harness::{emit_csv, parse_config, run_experiment, ExperimentConfig};
use crate::metrics::estimate_constants;
use crate::rng::RandomStream;

const FILTER_SAMPLES: usize = 100_000;

#[derive(Debug, Parser)]
#[command(
    name = "pocmab",
    version,
    about = "Thompson Sampling for partially observable contextual bandits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured experiment and write aggregate CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_path` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate c_N = E[max of N standard normals] and k_N = E[max²].
    Constants {
        #[arg(long = "n")]
        n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Check the context filter and the posterior recursion.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(args, &mut stdout.lock(), &mut stderr.lock())
}

fn load_config(path: &PathBuf, err: &mut dyn Write) -> Option<ExperimentConfig> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            return None;
        }
    };
    match parse_config(&text) {
        Ok(cfg) => Some(cfg),
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", path.display());
            None
        }
    }
}

pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match cli.command {
        Command::Simulate {
            config,
            out: out_path,
        } => {
            let Some(mut cfg) = load_config(&config, err) else {
                return 2;
            };
            if let Some(p) = out_path {
                cfg.output_path = p.to_string_lossy().into_owned();
            }
            let records = match run_experiment(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            };
            if let Err(e) = emit_csv(&records, &cfg.output_path) {
                let _ = writeln!(err, "error: writing {}: {e}", cfg.output_path);
                return 1;
            }
            let _ = writeln!(out, "wrote {} rows to {}", records.len(), cfg.output_path);
            0
        }
        Command::Constants { n, samples, seed } => {
            if n == 0 {
                let _ = writeln!(err, "error: --n must be at least 1");
                return 2;
            }
            let mut rng = RandomStream::from_seed(seed).substream("constants");
            match estimate_constants(n, samples, &mut rng) {
                Ok(c) => {
                    let _ = writeln!(out, "N        {}", c.n_arms);
                    let _ = writeln!(out, "samples  {}", c.mc_samples);
                    let _ = writeln!(out, "c_N      {:.6}  (se {:.6})", c.c_n, c.std_error_c);
                    let _ = writeln!(out, "k_N      {:.6}  (se {:.6})", c.k_n, c.std_error_k);
                    0
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    2
                }
            }
        }
        Command::Validate { config } => {
            let Some(cfg) = load_config(&config, err) else {
                return 2;
            };
            let outcome = match validate_config(&cfg, FILTER_SAMPLES) {
                Ok(o) => o,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return 1;
                }
            };
            for (name, value, tol, ok) in outcome.checks() {
                let verdict = if ok { "PASS" } else { "FAIL" };
                let _ = writeln!(out, "{verdict}  {name}: {value:.3e} (tolerance {tol:.0e})");
            }
            let f = &outcome.filter;
            let _ = writeln!(
                out,
                "info  Cov(x_hat) vs D Sy D' (relative, operator norm): {:.3e}",
                f.literal_cov_relative_error()
            );
            if outcome.passed() {
                0
            } else {
                1
            }
        }
    }
}
