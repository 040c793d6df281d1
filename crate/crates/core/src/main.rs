use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use zonelab::cli_io::{load_config, run, Mode, Workers};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Voronoi,
    Zone,
    OracleCompare,
    Bench,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Voronoi => Mode::Voronoi,
            ModeArg::Zone => Mode::Zone,
            ModeArg::OracleCompare => Mode::OracleCompare,
            ModeArg::Bench => Mode::Bench,
        }
    }
}

/// Voronoi, zone and double zone diagrams under general norms.
#[derive(Debug, Parser)]
#[command(name = "zonelab", version)]
struct Cli {
    mode: ModeArg,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Grid of the final outer tuple (oracle-compare only).
    #[arg(long)]
    pgm: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match load_config(&cli.config, Some(cli.mode.into())) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("zonelab: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("zonelab: --workers must be positive");
            return ExitCode::from(2);
        }
        config.workers = Workers::Count(n);
    }
    let out = &mut config.output;
    out.svg = cli.svg.or(out.svg.take());
    out.csv = cli.csv.or(out.csv.take());
    out.report = cli.report.or(out.report.take());
    out.pgm = cli.pgm.or(out.pgm.take());

    match run(&config) {
        Ok(result) => {
            let r = &result.report;
            for c in &r.checks {
                let status = if c.passed { "ok" } else { "FAIL" };
                let kind = if c.hard { "hard" } else { "soft" };
                println!("{status:>4} [{kind}] {}: {}", c.name, c.detail);
            }
            if !r.gaps.is_empty() {
                let last = r.gaps.last().map(|g| g.iter().copied().fold(0.0, f64::max));
                println!(
                    "iterations {} converged {} final max gap {:.6}",
                    r.iterations,
                    r.converged,
                    last.unwrap_or(0.0)
                );
            }
            if let Some(b) = &r.bench {
                println!("bench exponent {:.4}", b.exponent);
            }
            if r.failed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("zonelab: {e}");
            ExitCode::from(2)
        }
    }
}
