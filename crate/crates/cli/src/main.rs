mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Time-varying biquad-cascade speech filtering.
#[derive(Debug, Parser)]
#[command(name = "tvf", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a WAV file with a controller checkpoint or a stored trajectory.
    Filter(commands::FilterArgs),
    /// Export the per-frame cascade magnitude response as CSV.
    Response(commands::ResponseArgs),
    /// Train a controller and write its best checkpoint.
    Train(commands::TrainArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(commands::GradcheckArgs),
    /// Time the serial, systolic and streaming inference paths.
    Bench(commands::BenchArgs),
    /// Score a degraded file against a reference.
    Eval(commands::EvalArgs),
    /// Write an untrained checkpoint.
    Init(commands::InitArgs),
    /// Print the band plan as JSON.
    Bands(BandsArgs),
}

#[derive(Debug, Args)]
pub struct BandsArgs {}

/// Exit statuses: usage errors, bad input data, numerical failures.
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("TVF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("TVF_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
