use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dvfsil::harness::{cmd_characterize, cmd_report, cmd_simulate, cmd_train_offline, resolve, Overrides};

#[derive(Parser)]
#[command(name = "dvfsil", version, about = "Online imitation learning for big.LITTLE configuration control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep every configuration of the training workloads and write traces.
    Characterize {
        #[command(flatten)]
        common: Common,
        /// Also characterize the evaluation workloads.
        #[arg(long)]
        include_evaluation: bool,
    },
    /// Label traces, fit models, train the policy and pretrain the DQN.
    TrainOffline {
        #[command(flatten)]
        common: Common,
        /// Write randomly initialized checkpoints instead.
        #[arg(long)]
        no_offline: bool,
    },
    /// Run the controllers over the evaluation stream.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Start from random checkpoints without reading offline outputs.
        #[arg(long)]
        no_offline: bool,
    },
    /// Consolidate a completed run into summary.json.
    Report {
        /// Output directory of the run.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated controller names.
    #[arg(long, value_delimiter = ',')]
    controllers: Option<Vec<String>>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            controllers: self.controllers.clone(),
            budget: self.budget,
            beta: self.beta,
        }
    }
}

fn run(cli: Cli) -> dvfsil::Result<()> {
    match cli.command {
        Command::Characterize { common, include_evaluation } => {
            let (spec, out) = resolve(&common.spec, &common.overrides())?;
            for p in cmd_characterize(&spec, &out, include_evaluation)? {
                println!("{}", p.display());
            }
        }
        Command::TrainOffline { common, no_offline } => {
            let (spec, out) = resolve(&common.spec, &common.overrides())?;
            let r = cmd_train_offline(&spec, &out, no_offline)?;
            println!("training min per-knob accuracy {:?}", r.min_knob_accuracy);
        }
        Command::Simulate { common, no_offline } => {
            let (spec, out) = resolve(&common.spec, &common.overrides())?;
            let s = cmd_simulate(&spec, &out, no_offline)?;
            for (name, acc) in &s.accuracy {
                let e = s.energy.row(name).and_then(|r| r.energy_vs_powersave);
                println!("{name}: accuracy {:?} convergence {:?} energy/powersave {:?}", acc.per_knob_mean, acc.convergence_epoch, e);
            }
        }
        Command::Report { out } => {
            let s = cmd_report(&out)?;
            println!("{} controllers over {} epochs", s.controllers.len(), s.total_epochs);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
