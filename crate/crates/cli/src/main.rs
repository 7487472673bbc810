use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use groupbuy::generate::{generate, GenParams};
use groupbuy::io::{parse_instance, parse_solution, to_pretty_json, InstanceDocument, SolutionDocument};
use groupbuy::model::Outcome;
use groupbuy::pipeline::{self, PipelineError, Solution};
use groupbuy::swm::{partition_count, SwmError, SwmOptions, DEFAULT_MAX_PARTITIONS, DEFAULT_ORACLE_CAP};
use groupbuy::transfers::TransferError;
use groupbuy::verify::{certify, CertificateReport};
use groupbuy::Market;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_UNSTABLE: u8 = 4;

/// Welfare-maximizing group buying with stabilizing prices.
#[derive(Parser)]
#[command(name = "gbb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve by partition enumeration and certify the result.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_PARTITIONS)]
        max_partitions: u128,
        /// Worker threads for partition evaluation.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve by enumerating every allocation.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        max_allocations: u128,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a seeded random instance.
    Gen {
        #[arg(long)]
        buyers: u32,
        #[arg(long)]
        vendors: u32,
        #[arg(long)]
        items: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        max_value: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a stored solution against its instance.
    Verify { instance: PathBuf, solution: PathBuf },
    /// Print the number of demand partitions the solver would enumerate.
    Partitions { instance: PathBuf },
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip certification.
    #[arg(long)]
    no_certify: bool,
    /// Record wall-clock stage timings in the output (breaks byte-for-byte reproducibility).
    #[arg(long)]
    timings: bool,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn read(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn load_instance(path: &Path) -> Result<(Market, Option<u64>), ExitCode> {
    let text = read(path)?;
    parse_instance(&text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), ExitCode> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pipeline_failure(err: PipelineError) -> ExitCode {
    match err {
        PipelineError::Swm(e @ SwmError::BudgetExceeded { .. }) => fail(EXIT_BUDGET, e),
        PipelineError::Transfer(e @ TransferError::Unstabilizable { .. }) => fail(EXIT_UNSTABLE, e),
        other => fail(EXIT_PARSE, other),
    }
}

fn print_report(report: &CertificateReport, to_stderr: bool) {
    let mut lines = Vec::new();
    for c in &report.checks {
        lines.push(format!("{}: {}", c.check, if c.verdict.passed { "pass" } else { "FAIL" }));
        for w in &c.verdict.witnesses {
            lines.push(format!("  {}: expected {}, got {} vs {}", w.subject, w.expected, w.lhs, w.rhs));
        }
    }
    lines.push(format!(
        "surplus totals: positive {}, needed {}",
        report.totals.positive, report.totals.needed
    ));
    for line in lines {
        if to_stderr {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
}

fn write_solution(market: &Market, sol: &Solution, seed: Option<u64>, output: &OutputArgs) -> ExitCode {
    let doc = SolutionDocument::from_solution(market, sol, seed, output.timings);
    if let Err(code) = emit(&to_pretty_json(&doc), output.out.as_deref()) {
        return code;
    }
    match &sol.stabilized.certificate {
        Some(report) if !report.passed => {
            print_report(report, true);
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        _ => ExitCode::SUCCESS,
    }
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    Ok(match cli.command {
        Command::Solve { instance, max_partitions, jobs, output } => {
            let (market, seed) = load_instance(&instance)?;
            let opts = SwmOptions { max_partitions, jobs, ..SwmOptions::default() };
            let sol = pipeline::solve(&market, &opts, !output.no_certify).map_err(pipeline_failure)?;
            write_solution(&market, &sol, seed, &output)
        }
        Command::Oracle { instance, max_allocations, output } => {
            let (market, seed) = load_instance(&instance)?;
            let sol = pipeline::solve_brute_force(&market, max_allocations, !output.no_certify)
                .map_err(pipeline_failure)?;
            write_solution(&market, &sol, seed, &output)
        }
        Command::Gen { buyers, vendors, items, seed, max_value, out } => {
            let params = GenParams { buyers, vendors, items, max_value, seed };
            let market = generate(&params).map_err(|e| fail(EXIT_PARSE, e))?;
            emit(&to_pretty_json(&InstanceDocument::from_market(&market, Some(seed))), out.as_deref())?;
            ExitCode::SUCCESS
        }
        Command::Verify { instance, solution } => {
            let (market, _) = load_instance(&instance)?;
            let text = read(&solution)?;
            let doc = parse_solution(&text).map_err(|e| fail(EXIT_PARSE, format!("{}: {e}", solution.display())))?;
            let loaded = doc.load(&market).map_err(|e| fail(EXIT_PARSE, e))?;
            let report = certify(&market, &loaded.allocation, &loaded.group_transfers, &loaded.transfers, &loaded.prices)
                .map_err(|e| fail(EXIT_PARSE, e))?;
            let welfare = Outcome::evaluate(&market, &loaded.allocation)
                .map_err(|e| fail(EXIT_PARSE, e))?
                .social_welfare();
            let welfare_ok = welfare == loaded.social_welfare;
            println!("social_welfare: {}", if welfare_ok { "pass" } else { "FAIL" });
            if !welfare_ok {
                println!("  stored {} vs recomputed {}", loaded.social_welfare, welfare);
            }
            print_report(&report, false);
            if report.passed && welfare_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Command::Partitions { instance } => {
            let (market, _) = load_instance(&instance)?;
            let n = market.buyer_count() as u64;
            let count = market
                .cell_count()
                .and_then(|cells| partition_count(n, cells as u64));
            match count {
                Some(c) => println!("{c}"),
                None => println!("more than 2^128"),
            }
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    run(Cli::parse()).unwrap_or_else(|code| code)
}
