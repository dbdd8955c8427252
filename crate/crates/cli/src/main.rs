use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gridgame::{run, RunOptions};

#[derive(Parser)]
#[command(name = "gridgame", version, about = "Multi-attacker data-injection games on power grid markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json, lmps.csv, convergence.csv and summary.txt.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the day-ahead and ex-post LP tableaux.
        #[arg(long)]
        dump_lp: bool,
        /// Also write estimation.csv (index, z, z_hat, r).
        #[arg(long)]
        dump_estimation: bool,
    },
    /// Check a case file and print its dimensions and day-ahead congestion.
    Verify { case: PathBuf },
}

fn threads() -> Option<usize> {
    std::env::var("GRIDGAME_THREADS").ok()?.parse().ok().filter(|&n| n > 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = threads() {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            dump_lp,
            dump_estimation,
        } => {
            let opts = RunOptions {
                out,
                seed,
                dump_lp,
                dump_estimation,
            };
            run(&scenario, &opts).map(|status| {
                let summary = opts.out.join("summary.txt");
                if let Ok(text) = std::fs::read_to_string(summary) {
                    print!("{text}");
                }
                status.exit_code()
            })
        }
        Command::Verify { case } => gridgame::verify::verify(&case).map(|s| {
            print!("{s}");
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
