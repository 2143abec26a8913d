use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conewalk::Error;

mod commands;
mod render;

#[derive(Parser, Debug)]
#[command(
    name = "conewalk",
    version,
    about = "Decay rates of random walks confined to cones"
)]
struct Cli {
    /// Emit a JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for enumeration and simulation.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimize the Laplace transform over the dual cone and print the certificate.
    Rate(RateArgs),
    /// Enumerate confined walks and estimate the decay rate.
    Enumerate(EnumerateArgs),
    /// Compare solver, enumeration and tilted simulation.
    Verify(VerifyArgs),
    /// Check the hypotheses and search for a valid shift.
    Check(CheckArgs),
    /// Closed form against enumeration for the three-step half-space family.
    Halfspace(HalfspaceArgs),
    /// Brownian decay rate from the distance of the drift to the cone.
    Brownian(BrownianArgs),
    /// Scan half-planes and compare with the growth constant.
    Scan(ScanArgs),
    /// Survival inside a diffusive band for a walk with drift in the cone.
    Band(BandArgs),
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[arg(long)]
    pub steps: PathBuf,
    #[arg(long, default_value = "orthant")]
    pub cone: String,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Exact,
    Log,
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub steps: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Log)]
    pub mode: ModeArg,
    #[arg(long, default_value = "orthant")]
    pub cone: String,
    /// Write the series table to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub steps: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 20_000)]
    pub trials: usize,
    /// Horizon of the simulation check.
    #[arg(long, default_value_t = 60)]
    pub mc_n: usize,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long)]
    pub steps: PathBuf,
    #[arg(long, default_value = "orthant")]
    pub cone: String,
    /// Interior direction for the shift search (defaults to the cone's own).
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    /// Longest path tried by the shift search.
    #[arg(long, default_value_t = 12)]
    pub depth: usize,
}

#[derive(Args, Debug)]
pub struct HalfspaceArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long = "N")]
    pub big_n: u32,
    #[arg(long)]
    pub n: usize,
    /// Start on the anti-diagonal; defaults to (N, N).
    #[arg(long)]
    pub start: Option<String>,
}

#[derive(Args, Debug)]
pub struct BrownianArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub drift: String,
    #[arg(long, default_value = "orthant")]
    pub cone: String,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(long)]
    pub steps: PathBuf,
    #[arg(long, default_value_t = 2001)]
    pub grid: usize,
}

#[derive(Args, Debug)]
pub struct BandArgs {
    #[arg(long)]
    pub steps: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub start: String,
    #[arg(long, allow_hyphen_values = true)]
    pub v: String,
    /// Band half-width scale; defaults to 4 sqrt of the top covariance eigenvalue.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value = "100,200,300,400,500,600,700,800")]
    pub horizons: String,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
}

pub struct Global {
    pub threads: usize,
    pub seed: u64,
}

pub struct Outcome {
    pub report: serde_json::Value,
    /// Text rendering when the generic one is not wanted.
    pub text: Option<String>,
    pub exit: u8,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::H1Violated | Error::Improper { .. } => 2,
        Error::NoConvergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let global = Global {
        threads: cli.threads.max(1),
        seed: cli.seed,
    };
    let result = match &cli.command {
        Command::Rate(a) => commands::rate(a, &global),
        Command::Enumerate(a) => commands::enumerate(a, &global),
        Command::Verify(a) => commands::verify(a, &global),
        Command::Check(a) => commands::check(a, &global),
        Command::Halfspace(a) => commands::halfspace(a, &global),
        Command::Brownian(a) => commands::brownian(a, &global),
        Command::Scan(a) => commands::scan(a, &global),
        Command::Band(a) => commands::band(a, &global),
    };
    let mut out = std::io::stdout().lock();
    match result {
        Ok(outcome) => {
            let body = if cli.json {
                serde_json::to_string_pretty(&outcome.report).expect("report serializes")
            } else {
                outcome
                    .text
                    .unwrap_or_else(|| render::text(&outcome.report))
            };
            let _ = writeln!(out, "{body}");
            ExitCode::from(outcome.exit)
        }
        Err(e) => {
            let code = exit_code(&e);
            if cli.json {
                let mut doc = serde_json::json!({ "error": e.to_string(), "exit_code": code });
                if let Error::Improper { witness } = &e {
                    doc["witness"] = serde_json::json!(witness);
                }
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&doc).expect("serializes")
                );
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code)
        }
    }
}
