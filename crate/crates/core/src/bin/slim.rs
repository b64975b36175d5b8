use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slim_core::bandwidth::max_message_dim;
use slim_core::baselines::AggregatorKind;
use slim_core::harness::{evaluate_checkpoint, run_sweep, train_run, Overrides, RunConfig, CellStatus};
use slim_core::trainer::ActionMode;
use slim_core::Error;

#[derive(Parser)]
#[command(name = "slim", version, about = "Bandwidth-constrained multi-agent RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Train(Common),
    /// Train the cross-product of the [sweep] section and summarise it.
    Sweep(Common),
    /// Roll out a trained checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Sample actions instead of taking the most likely one.
        #[arg(long)]
        sample: bool,
    },
    /// Check the bandwidth constraint for every configured beta.
    ValidateBudget(Common),
}

#[derive(Args)]
struct Common {
    /// Config file; for eval, defaults to config.toml beside the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    cache: Option<Switch>,
    #[arg(long)]
    aggregator: Option<AggregatorKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Common {
    fn load(&self, fallback: Option<&Path>) -> Result<RunConfig, Error> {
        let path = self
            .config
            .as_deref()
            .or(fallback)
            .ok_or_else(|| Error::Config("--config is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            beta: self.beta,
            cache: self.cache.map(|s| matches!(s, Switch::On)),
            aggregator: self.aggregator,
        });
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &RunConfig, default: impl FnOnce() -> String) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("runs").join(default()))
    }
}

fn train(c: &Common) -> Result<(), Error> {
    let cfg = c.load(None)?;
    let dir = c.out_dir(&cfg, || {
        format!(
            "{}_{}_{}_beta{}_seed{}",
            cfg.environment.name.as_str(),
            cfg.environment.difficulty.as_str(),
            cfg.model.aggregator,
            cfg.model.beta,
            cfg.train.seed
        )
    });
    let outcome = train_run(&cfg, &dir, |m| {
        eprintln!(
            "epoch {:>4}  steps {:7.3}  return {:8.4}  success {:.3}  entropy {:.3}",
            m.epoch, m.mean_steps, m.mean_return, m.success_rate, m.entropy
        );
    })?;
    for metric in ["mean_steps", "mean_return", "success_rate"] {
        if let Some(v) = outcome.final_value(metric) {
            println!("final_{metric},{v}");
        }
    }
    println!("run_dir,{}", outcome.dir.display());
    Ok(())
}

fn sweep(c: &Common) -> Result<(), Error> {
    let cfg = c.load(None)?;
    let dir = c.out_dir(&cfg, || {
        format!("sweep_{}_{}", cfg.environment.name.as_str(), cfg.environment.difficulty.as_str())
    });
    let report = run_sweep(&cfg, &dir)?;
    for cell in report.cells.iter().filter(|c| c.status != CellStatus::Ok) {
        eprintln!(
            "{:?}: {} beta {} cache {} seed {}: {}",
            cell.status, cell.aggregator, cell.beta, cell.cache_flag, cell.seed, cell.note
        );
    }
    println!("summary,{}", dir.join("summary.csv").display());
    Ok(())
}

fn eval(c: &Common, checkpoint: &Path, episodes: usize, sample: bool) -> Result<(), Error> {
    let snapshot = checkpoint.parent().map(|p| p.join("config.toml"));
    let cfg = c.load(snapshot.as_deref())?;
    let mode = if sample { ActionMode::Sample } else { ActionMode::Greedy };
    let m = evaluate_checkpoint(&cfg, checkpoint, episodes, c.seed.unwrap_or(0), mode)?;
    println!("episodes,{}", m.episodes);
    println!("mean_steps,{}", m.mean_steps);
    println!("success_rate,{}", m.success_rate);
    println!("mean_return,{}", m.mean_return);
    Ok(())
}

fn validate_budget(c: &Common) -> Result<bool, Error> {
    let cfg = c.load(None)?;
    let m = &cfg.model;
    let sigma = if m.aggregator.communicates() { m.graph_density } else { 0.0 };
    println!("beta,sigma,rounds,message_dim,load,status");
    let mut all_ok = true;
    for &beta in &cfg.sweep.betas {
        if !m.aggregator.communicates() {
            println!("{beta},0,0,0,0,feasible");
            continue;
        }
        let mut one = m.clone();
        one.beta = beta;
        match one.budget() {
            Ok(b) => println!("{beta},{sigma},{},{},{},feasible", b.rounds, b.dim, b.load()),
            Err(e) => {
                all_ok = false;
                let d = max_message_dim(beta, m.graph_density, m.rounds)?;
                println!(
                    "{beta},{sigma},{},{},,infeasible",
                    m.rounds,
                    m.message_dim.or(d).map_or(String::new(), |d| d.to_string())
                );
                eprintln!("beta {beta}: {e}");
            }
        }
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => train(c),
        Command::Sweep(c) => sweep(c),
        Command::Eval {
            common,
            checkpoint,
            episodes,
            sample,
        } => eval(common, checkpoint, *episodes, *sample),
        Command::ValidateBudget(c) => match validate_budget(c) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Toml(_) | Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
