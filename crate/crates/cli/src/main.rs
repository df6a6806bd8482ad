mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CollectArgs, ControlArgs, EvalArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "pivot", version, about = "Gravitational pivoting simulator and toolkit")]
struct Cli {
    /// Worker threads for collection, training and studies (0 = all cores).
    /// Outputs do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Root directory for default output locations.
    #[arg(long, global = true, env = "PIVOT_OUT", default_value = "runs")]
    out_root: PathBuf,

    /// TOML file overlaid on the default configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Configuration override such as `model.train.epochs=30`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate collection protocols and write a dataset directory.
    Collect(CollectArgs),
    /// Train an estimator on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Run an evaluation study and write its tables.
    Eval(EvalArgs),
    /// Run one closed-loop episode and write its trace.
    Control(ControlArgs),
    /// Print the resolved configuration.
    Config(commands::ConfigArgs),
}

pub struct Globals {
    pub jobs: usize,
    pub out_root: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let g = Globals {
        jobs: rayon::current_num_threads(),
        out_root: cli.out_root,
        config: cli.config,
        overrides: cli.overrides,
    };
    let result = match cli.command {
        Command::Collect(a) => commands::collect(&g, a),
        Command::Train(a) => commands::train(&g, a),
        Command::Eval(a) => commands::eval(&g, a),
        Command::Control(a) => commands::control(&g, a),
        Command::Config(a) => commands::show_config(&g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
