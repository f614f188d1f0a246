use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geomtensor_cli::{cmd_run, cmd_search_report, cmd_train, cmd_workload, CliError, Mode, Optimizer, TrainOptions};

#[derive(Parser)]
#[command(name = "geomtensor", version, about = "Run, price and train tensor graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Session,
    Module,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a graph and write its outputs as a tensor document.
    Run {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Backend catalog; defaults to the reference CPU.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "session")]
        mode: ModeArg,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print per-backend costs, per-operator algorithm choices and the winner.
    SearchReport {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        /// Tensor document whose shapes override the graph's input declarations.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare naive and geometric operator workloads.
    Workload {
        #[arg(long, allow_negative_numbers = true)]
        aop: i64,
        #[arg(long, allow_negative_numbers = true)]
        top: i64,
        #[arg(long, allow_negative_numbers = true)]
        cop: i64,
        #[arg(long, allow_negative_numbers = true)]
        fop: i64,
        #[arg(long, allow_negative_numbers = true)]
        backends: i64,
    },
    /// Fit the graph's parameters to a data file.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "sgd")]
        optimizer: OptimizerArg,
        #[arg(long, default_value_t = 0.01)]
        lr: f32,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Where to write the trained parameters.
        #[arg(long)]
        params_out: PathBuf,
    },
}

fn dispatch(cmd: Command, out: &mut String) -> Result<(), CliError> {
    match cmd {
        Command::Run { graph, input, catalog, mode, output } => {
            let mode = match mode {
                ModeArg::Session => Mode::Session,
                ModeArg::Module => Mode::Module,
            };
            cmd_run(&graph, &input, catalog.as_deref(), mode, &output, out)
        }
        Command::SearchReport { graph, catalog, input } => cmd_search_report(&graph, &catalog, input.as_deref(), out),
        Command::Workload { aop, top, cop, fop, backends } => cmd_workload(aop, top, cop, fop, backends, out),
        Command::Train { graph, data, optimizer, lr, steps, params_out } => {
            let optimizer = match optimizer {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Adam => Optimizer::Adam,
            };
            cmd_train(&graph, &data, &TrainOptions { optimizer, lr, steps }, &params_out, out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let res = dispatch(cli.command, &mut out);
    print!("{out}");
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
