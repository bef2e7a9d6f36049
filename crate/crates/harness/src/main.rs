use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use gae_harness::report::cmd_report;
use gae_harness::run::{cmd_ablate, cmd_train, Mode, RunOptions};
use gae_harness::HarnessError;

#[derive(Parser)]
#[command(name = "gae", version, about = "Guided adversarial training on long-tailed data")]
struct Cli {
    /// Output directory, overriding `out_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads for independent seeds.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the cross-entropy baseline and/or the guided model for every seed.
    #[command(group(ArgGroup::new("mode").required(true).multiple(true).args(["baseline", "guided"])))]
    Train {
        config: PathBuf,
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        guided: bool,
    },
    /// Guided runs for several attack step budgets k.
    Ablate {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,9")]
        k: Vec<usize>,
    },
    /// Per-class comparison of the runs under a directory.
    Report { run_dir: PathBuf },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let opts = RunOptions {
        out: cli.out.clone(),
        seed_override: cli.seed_override,
        threads: cli.threads,
    };
    match cli.command {
        Command::Train {
            config,
            baseline,
            guided,
        } => {
            let modes: Vec<Mode> = [(baseline, Mode::Baseline), (guided, Mode::Guided)]
                .into_iter()
                .filter_map(|(on, m)| on.then_some(m))
                .collect();
            for m in cmd_train(&config, &modes, &opts)? {
                let gaes: usize = m.gae_series().iter().sum();
                println!(
                    "seed {} {:<8} accuracy {:.4}  head {:.4}  tail {:.4}  GAEs {gaes}",
                    m.seed,
                    m.mode.dir_name(),
                    m.final_eval.accuracy,
                    m.head_recall.unwrap_or(f64::NAN),
                    m.tail_recall.unwrap_or(f64::NAN),
                );
            }
        }
        Command::Ablate { config, k } => {
            let table = cmd_ablate(&config, &k, &opts)?;
            if table.deduplicated {
                eprintln!("warning: duplicate k values dropped; using {:?}", table.k_values);
            }
            for &k in &table.k_values {
                println!("k = {k}: mean accuracy {:.4}", table.mean_accuracy(k).unwrap_or(f64::NAN));
            }
        }
        Command::Report { run_dir } => {
            let report = cmd_report(&run_dir, cli.out.as_deref())?;
            if let Some(n) = report.notice() {
                eprintln!("notice: {n}");
            }
            print!("{}", report.text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
