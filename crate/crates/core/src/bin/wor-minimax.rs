use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wor_minimax::harness::{
    emit_plot_data, experiment, format_table, load_config_or_manifest, run_verify_suite,
    write_outputs, Method, Mode, Overrides,
};
use wor_minimax::shuffling::ScheduleKind;
use wor_minimax::Error;

/// Without-replacement stochastic minimax experiments.
#[derive(Parser)]
#[command(name = "wor-minimax", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single-instance experiment from a config or a manifest.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run the multi-instance protocol.
    Multi {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Execute the oracle suite and print a pass/fail table.
    Verify,
    /// Write plot data files and a gnuplot script next to summary.csv.
    Plot { summary_dir: PathBuf },
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    epochs: Option<usize>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods, e.g. GDA,AGDA.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    /// Comma-separated schedules, e.g. RR,SO,UNIFORM,AS:GREEDY_MAX_DIST.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<ScheduleKind>>,
    /// Use this γ instead of grid search.
    #[arg(long)]
    gamma: Option<f64>,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides {
            epochs: f.epochs,
            seed: f.seed,
            output: f.out,
            methods: f.method,
            schedules: f.schedule,
            gamma: f.gamma,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse(_)
        | Error::InvalidInput(_)
        | Error::Generation { .. }
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn run(config: PathBuf, flags: Flags, requested: Mode) -> Result<(), Error> {
    let (mut cfg, recorded) = load_config_or_manifest(&config)?;
    Overrides::from(flags).apply(&mut cfg);
    // A manifest replays in the mode it was produced with.
    let mode = match (requested, recorded) {
        (Mode::Run, Some(m)) => m,
        (m, _) => m,
    };
    let out = experiment(&cfg, mode)?;
    let files = write_outputs(&out, &cfg.output)?;
    for cell in &out.manifest.cells {
        match (&cell.omitted, cell.gamma) {
            (Some(reason), _) => {
                println!("{:<5} {:<20} omitted: {reason}", cell.method, cell.schedule)
            }
            (None, Some(g)) => println!(
                "{:<5} {:<20} gamma={g:<6} runs={} diverged={}",
                cell.method, cell.schedule, cell.runs, cell.diverged
            ),
            (None, None) => {}
        }
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, flags } => run(config, flags, Mode::Run),
        Command::Multi { config, flags } => run(config, flags, Mode::Multi),
        Command::Verify => {
            let results = run_verify_suite();
            print!("{}", format_table(&results));
            return if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
        Command::Plot { summary_dir } => emit_plot_data(&summary_dir).map(|files| {
            for f in files {
                println!("wrote {}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
