use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advloop::commands;
use advloop::config::Config;
use advloop::CliError;

#[derive(Parser)]
#[command(
    name = "advloop",
    about = "Desk-scale vehicle-cloud robustness testbed: adversarial attacks on a toy detector plus network impairment in a closed driving loop",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (key = value); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override: re-derives every per-subsystem seed
    #[arg(long)]
    seed: Option<u64>,
    /// Model checkpoint path (default: <out>/model.adnn)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<Config, CliError> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            cfg.override_master_seed(seed);
        }
        Ok(cfg)
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| commands::checkpoint_path(&self.out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the labeled synthetic dataset
    GenData(Common),
    /// Train the detector on the dataset's train split
    Train(Common),
    /// Evaluate clean + FGSM/PGD x epsilon over the test split
    Eval(Common),
    /// Run the closed-loop impairment grid (simulated transport)
    Run(Common),
    /// Build SVG plots and the compliance table from eval/run outputs
    Report(Common),
    /// Cloud side of the TCP loop: accept a vehicle and serve commands
    Serve {
        #[command(flatten)]
        common: Common,
        /// Address to bind, e.g. 127.0.0.1:5001
        #[arg(long)]
        bind: String,
    },
    /// Vehicle side of the TCP loop: stream frames, apply commands
    Drive {
        #[command(flatten)]
        common: Common,
        /// Cloud address to connect to, e.g. 127.0.0.1:5001
        #[arg(long)]
        connect: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData(c) => commands::cmd_gen_data(&c.config()?, &c.out),
        Command::Train(c) => commands::cmd_train(&c.config()?, &c.out),
        Command::Eval(c) => {
            let cfg = c.config()?;
            let ckpt = c.checkpoint_path();
            commands::cmd_eval(&cfg, &c.out, &ckpt)
        }
        Command::Run(c) => {
            let cfg = c.config()?;
            let ckpt = c.checkpoint_path();
            commands::cmd_run(&cfg, &c.out, &ckpt)
        }
        Command::Report(c) => commands::cmd_report(&c.config()?, &c.out),
        Command::Serve { common, bind } => {
            let cfg = common.config()?;
            let ckpt = common.checkpoint_path();
            commands::cmd_serve(&cfg, &bind, &ckpt)
        }
        Command::Drive { common, connect } => {
            let cfg = common.config()?;
            commands::cmd_drive(&cfg, &connect, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("advloop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
