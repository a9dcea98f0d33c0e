use std::path::PathBuf;
use std::process::ExitCode;

use autopv::workflow::{cmd_evaluate, cmd_generate, cmd_pretrain, cmd_report, cmd_simulate, RunConfig};
use autopv::Execution;
use clap::{Args, Parser, Subcommand};

/// Day-ahead PV forecasts for plants without known mounting configuration.
#[derive(Parser, Debug)]
#[command(name = "autopv", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic fleet (plant CSVs and manifest) to the data directory.
    Generate,
    /// Train one pipeline per plant on the pre-training period.
    Pretrain,
    /// Replay the test period for one plant with all other plants as the pool.
    Simulate {
        /// Plant id, e.g. pv07.
        #[arg(long)]
        target: String,
    },
    /// Leave-one-out comparison of all methods; writes the report files.
    Evaluate,
    /// Print the stored report.
    Report,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args, Debug)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,
    /// Fleet generator seed.
    #[arg(long, global = true)]
    fleet_seed: Option<u64>,
    /// Days of synthetic data.
    #[arg(long, global = true)]
    days: Option<usize>,
    /// Training and search seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Adaptation cycle length in days.
    #[arg(long, global = true)]
    cycle_days: Option<usize>,
    /// Samples in the weighting window.
    #[arg(long, global = true)]
    window_samples: Option<usize>,
    /// First instant of the test period (RFC 3339).
    #[arg(long, global = true)]
    test_start: Option<chrono::DateTime<chrono::Utc>>,
    #[arg(long, global = true)]
    max_trials: Option<usize>,
    #[arg(long, global = true)]
    max_train_rows: Option<usize>,
    /// Skip the incrementally retrained baseline.
    #[arg(long, global = true)]
    no_im_it: bool,
    /// Skip the own-model-in-pool run.
    #[arg(long, global = true)]
    no_consistency: bool,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        let paths = &mut cfg.paths;
        if let Some(p) = &self.data_dir {
            paths.data_dir = p.clone();
        }
        if let Some(p) = &self.model_dir {
            paths.model_dir = p.clone();
        }
        if let Some(p) = &self.report_dir {
            paths.report_dir = p.clone();
        }
        if let Some(v) = self.fleet_seed {
            cfg.fleet.seed = v;
        }
        if let Some(v) = self.days {
            cfg.fleet.days = v;
        }
        let run = &mut cfg.run;
        if let Some(v) = self.seed {
            run.seed = v;
        }
        if let Some(v) = self.cycle_days {
            run.cycle_days = v;
        }
        if let Some(v) = self.window_samples {
            run.window_samples = v;
        }
        if let Some(v) = self.test_start {
            run.test_start = v;
        }
        if let Some(v) = self.max_trials {
            run.max_trials = v;
        }
        if let Some(v) = self.max_train_rows {
            run.max_train_rows = Some(v);
        }
        if self.no_im_it {
            run.im_it = false;
        }
        if self.no_consistency {
            run.consistency = false;
        }
        if self.sequential {
            run.execution = Execution::Sequential;
        }
    }
}

fn run(cli: Cli) -> autopv::Result<()> {
    let mut cfg = match &cli.overrides.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    match cli.command {
        Command::Generate => {
            let files = cmd_generate(&cfg)?;
            println!("wrote {} files to {}", files.len(), cfg.paths.data_dir.display());
        }
        Command::Pretrain => {
            let files = cmd_pretrain(&cfg)?;
            println!("wrote {} model bundles to {}", files.len(), cfg.paths.model_dir.display());
        }
        Command::Simulate { target } => {
            let out = cmd_simulate(&cfg, &target)?;
            println!("{} adaptation cycles", out.entries.len());
            println!("forecast: {}", out.forecast.display());
            println!("weights:  {}", out.weight_log.display());
        }
        Command::Evaluate => {
            let report = cmd_evaluate(&cfg)?;
            print!("{}", report.to_table());
        }
        Command::Report => print!("{}", cmd_report(&cfg)?),
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
