use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use nerfpp::scene::{load_dataset, Split};
use nerfpp::train::TrainMode;
use nerfpp_cli::{cmd_eval, cmd_experiment, cmd_render, cmd_synth, cmd_train, load_trainer};
use nerfpp_cli::{ExperimentKind, Overrides, RunConfig};

/// Volume-rendered radiance fields with an inverted-sphere background.
#[derive(Parser)]
#[command(name = "nerfpp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene into a posed dataset.
    Synth {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit a radiance field to a dataset.
    Train {
        /// Dataset directory containing manifest.json.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Render dataset views from a checkpoint.
    Render {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only views of this split (train or test).
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        /// Also write unquantized little-endian f64 dumps.
        #[arg(long)]
        raw: bool,
    },
    /// Score a checkpoint on the test views of a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail unless the checkpoint was trained in this mode.
        #[arg(long)]
        mode: Option<TrainMode>,
    },
    /// Run a scripted comparison and write report.csv.
    Experiment {
        /// ambiguity, mlp_compare or param_compare (or `experiment` in the config).
        #[arg(long)]
        experiment: Option<ExperimentKind>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct TrainArgs {
    /// bounded_nerf, nerfpp or fixed_sphere_ambiguity.
    #[arg(long)]
    mode: Option<TrainMode>,
    #[arg(long)]
    iters: Option<usize>,
    /// Rays per batch.
    #[arg(long)]
    rays: Option<usize>,
    /// Coarse samples per ray and volume.
    #[arg(long)]
    coarse: Option<usize>,
    /// Fine samples per ray and volume.
    #[arg(long)]
    fine: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split '{s}' (expected train or test)")),
    }
}

fn resolve(run: &RunArgs, train: TrainArgs) -> anyhow::Result<RunConfig> {
    let overrides = Overrides {
        seed: run.seed,
        out: run.out.clone(),
        mode: train.mode,
        iterations: train.iters,
        batch_rays: train.rays,
        n_coarse: train.coarse,
        n_fine: train.fine,
        lr: train.lr,
    };
    RunConfig::resolve(run.config.as_deref(), &overrides)
}

fn usage(kind: ErrorKind, msg: &str) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn out_dir(config: &RunConfig) -> PathBuf {
    match &config.out {
        Some(p) => p.clone(),
        None => usage(ErrorKind::MissingRequiredArgument, "--out is required (or set `out` in the config)"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { run } => {
            let config = resolve(&run, TrainArgs::default())?;
            cmd_synth(&config, &out_dir(&config))?;
        }
        Command::Train { data, run, train } => {
            let config = resolve(&run, train)?;
            cmd_train(&config, &data, &out_dir(&config))?;
        }
        Command::Render {
            data,
            checkpoint,
            out,
            split,
            raw,
        } => {
            let trainer = load_trainer(&checkpoint, None)?;
            let dataset = load_dataset(&data)?;
            cmd_render(&trainer, &dataset, split, raw, &out)?;
        }
        Command::Eval {
            data,
            checkpoint,
            out,
            mode,
        } => {
            let trainer = load_trainer(&checkpoint, mode)?;
            let dataset = load_dataset(&data)?;
            let m = cmd_eval(&trainer, &dataset, &out)?;
            println!("psnr {:.4} ssim {:.4}", m.psnr, m.ssim);
        }
        Command::Experiment { experiment, run, train } => {
            let config = resolve(&run, train)?;
            let Some(kind) = experiment.or(config.experiment) else {
                usage(
                    ErrorKind::MissingRequiredArgument,
                    "--experiment is required (or set `experiment` in the config)",
                )
            };
            let report = cmd_experiment(kind, &config, &out_dir(&config))?;
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
