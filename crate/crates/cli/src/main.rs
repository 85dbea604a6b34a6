use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use som::bench::{self, BenchMode, BenchResult, Suite, MIN_RUNS};
use som::explorer::{self, ExploreError, Limits, ParseOptions};
use som::trace;
use som::Mode;

/// Checks and explores programs under the shared ownership model.
#[derive(Parser)]
#[command(name = "som", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a `.somtrace` event log. Exit 0 clean, 1 violations, 2 unreadable.
    Check {
        file: PathBuf,
        /// full, partial or none. Defaults to $SOM_MODE, then full.
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Explore every interleaving of a `.som` program. Exit 0 race free,
    /// 1 witnesses or lemma failures, 2 unreadable or invalid, 3 state limit.
    Explore {
        file: PathBuf,
        #[arg(long, default_value_t = explorer::DEFAULT_MAX_STATES)]
        max_states: usize,
        #[arg(long, default_value_t = explorer::DEFAULT_REPEAT_BOUND)]
        repeat_bound: u32,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Time a workload in several checking modes.
    Bench {
        /// pingpong, quicksort or taskgraph.
        suite: Suite,
        #[arg(long, value_delimiter = ',', default_values_t = BenchMode::ALL)]
        modes: Vec<BenchMode>,
        #[arg(long, default_value_t = MIN_RUNS)]
        runs: usize,
        /// Parameter points; the suite's defaults when omitted.
        #[arg(long, value_delimiter = ',')]
        params: Vec<u64>,
        /// Directory receiving one `<suite>.<mode>.csv` file per mode.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check { file, mode } => check(&file, mode.unwrap_or_else(Mode::from_env)),
        Command::Explore { file, max_states, repeat_bound, json } => {
            explore(&file, Limits { max_states }, ParseOptions { repeat_bound }, json)
        }
        Command::Bench { suite, modes, runs, params, csv } => run_bench(suite, &modes, runs, params, csv.as_deref()),
    };
    ExitCode::from(code)
}

fn fail(file: &Path, err: impl std::fmt::Display) -> u8 {
    eprintln!("som: {}: {err}", file.display());
    2
}

fn check(file: &Path, mode: Mode) -> u8 {
    let events = match File::open(file) {
        Ok(f) => match trace::read_events(BufReader::new(f)) {
            Ok(events) => events,
            Err(e) => return fail(file, e),
        },
        Err(e) => return fail(file, e),
    };
    let report = trace::replay(&events, mode);
    print!("{report}");
    u8::from(!report.is_clean())
}

fn explore(file: &Path, limits: Limits, options: ParseOptions, json: bool) -> u8 {
    let text = match fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => return fail(file, e),
    };
    let program = match explorer::parse_with(&text, options) {
        Ok(p) => p,
        Err(e) => return fail(file, e),
    };
    let print = |r: &explorer::ExplorationReport| {
        if json {
            println!("{}", r.to_json());
        } else {
            print!("{r}");
        }
    };
    match explorer::explore(&program, limits) {
        Ok(report) => {
            print(&report);
            u8::from(!report.is_race_free() || !report.lemma_failures.is_empty())
        }
        Err(ExploreError::LimitExceeded(partial)) => {
            print(&partial);
            eprintln!("som: {}: state limit of {} reached", file.display(), limits.max_states);
            3
        }
        Err(e @ ExploreError::InvalidInitialGraph(_)) => fail(file, e),
    }
}

fn run_bench(suite: Suite, modes: &[BenchMode], runs: usize, params: Vec<u64>, csv: Option<&Path>) -> u8 {
    let params = if params.is_empty() { suite.parameters() } else { params };
    if let Some(dir) = csv {
        if let Err(e) = fs::create_dir_all(dir) {
            return fail(dir, e);
        }
    }
    println!("{:<10} {:<8} {:>10} {:>12} {:>12} {:>5} {:>10} {:>8}", "benchmark", "mode", "parameter", "mean_ms", "stddev_ms", "runs", "violations", "vs base");
    let mut results: Vec<BenchResult> = Vec::new();
    for &mode in modes {
        let mut series = Vec::new();
        for &p in &params {
            match bench::measure(suite, mode, p, runs) {
                Ok(r) => series.push(r),
                Err(e) => {
                    eprintln!("som: bench: {e}");
                    return 2;
                }
            }
        }
        if let Some(dir) = csv {
            let path = dir.join(bench::csv_file_name(suite, mode));
            let written = File::create(&path).map_err(bench::BenchError::from).and_then(|f| bench::write_csv(f, &series));
            if let Err(e) = written {
                return fail(&path, e);
            }
        }
        results.extend(series);
    }
    let base = |p: u64| results.iter().find(|r| r.mode == BenchMode::Base && r.parameter == p).map(|r| r.mean_ms);
    for r in &results {
        let ratio = base(r.parameter).map_or_else(|| "-".to_string(), |b| format!("{:.2}x", r.mean_ms / b));
        println!(
            "{:<10} {:<8} {:>10} {:>12.3} {:>12.3} {:>5} {:>10} {:>8}",
            r.benchmark, r.mode, r.parameter, r.mean_ms, r.stddev_ms, r.runs, r.violations, ratio
        );
    }
    u8::from(results.iter().any(|r| r.violations > 0))
}
