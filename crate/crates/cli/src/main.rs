use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use teleop_core::harness::{commands, ExperimentConfig};
use teleop_core::Result;

#[derive(Parser)]
#[command(name = "teleop", version, about = "Traded-control teleoperation toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled reach-and-grasp dataset (JSON lines).
    GenData {
        /// Scene file or builtin:desk.
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, default_value_t = 350)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the intent classifier.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Accuracy over normalized episode progress on a dataset.
    EvalIntent {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Initial pose estimates for every detected object.
    InitPose {
        #[arg(long)]
        scene: Option<String>,
        /// Parameter file; same format as --config.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track every object and report errors at the given times.
    Track {
        #[arg(long)]
        scene: Option<String>,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value = "1s,3s")]
        report_at: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare mask, mesh and tracker estimates over seeded runs.
    EvalPipeline {
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write every individual error.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Run the Early/Late episode grid.
    TeleopSim {
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated: normal,noisy,biased.
        #[arg(long)]
        users: Option<String>,
        /// Comma-separated: early,late.
        #[arg(long)]
        modes: Option<String>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve live sessions over TCP (JSON lines).
    Serve {
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        model: PathBuf,
        /// Defaults to the configuration or TELEOP_BIND.
        #[arg(long)]
        bind: Option<String>,
    },
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
}

fn load_config(path: Option<&PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let Cli { common, command } = cli;
    let config_path = match &command {
        Command::InitPose { params: Some(p), .. } => Some(p.clone()),
        _ => common.config.clone(),
    };
    let mut cfg = load_config(config_path.as_ref(), common.seed)?;
    match command {
        Command::GenData { scene, count, out } => {
            let path = commands::gen_data(&cfg, scene.as_deref(), count, &out)?;
            println!("wrote {count} trajectories to {}", path.display());
        }
        Command::Train { data, out, epochs } => {
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            let (path, params) = commands::train(&cfg, &data, &out)?;
            if let Some(loss) = params.metadata.final_loss {
                println!("final training loss {loss:.6}");
            }
            for w in &params.metadata.warnings {
                println!("warning: {w}");
            }
            println!("wrote model to {}", path.display());
        }
        Command::EvalIntent { model, data, bins, out } => {
            let (path, curve, (obj, dir)) = commands::eval_intent(&cfg, &model, &data, bins, &out)?;
            for b in &curve {
                println!("{:.2}-{:.2}  object {:.3}  direction {:.3}", b.progress_start, b.progress_end, b.object, b.direction);
            }
            println!("final 30%: object {obj:.3}  direction {dir:.3}");
            println!("wrote {}", path.display());
        }
        Command::InitPose { scene, out, .. } => {
            let path = commands::init_pose(&cfg, scene.as_deref(), &out)?;
            println!("wrote {}", path.display());
        }
        Command::Track { scene, frames, report_at, out } => {
            let times = commands::parse_report_times(&report_at)?;
            let path = commands::track(&cfg, scene.as_deref(), frames, &times, &out)?;
            println!("wrote {}", path.display());
        }
        Command::EvalPipeline { scene, runs, out, records } => {
            let (path, report) = commands::eval_pipeline(&cfg, scene.as_deref(), runs, &out, records.as_deref())?;
            for m in report.summary.iter().filter(|s| s.object == "mean") {
                println!("{:<12} AUC {:.4}  <2cm {:.3}", m.method, m.auc, m.below_2cm);
            }
            println!("wrote {}", path.display());
        }
        Command::TeleopSim { scene, model, users, modes, episodes, out } => {
            if let Some(u) = users {
                cfg.experiment.users = split_list(&u);
            }
            if let Some(m) = modes {
                cfg.experiment.modes = split_list(&m);
            }
            if let Some(e) = episodes {
                cfg.experiment.episodes = e;
            }
            let (path, rows) = commands::teleop_sim(&cfg, scene.as_deref(), &model, &out)?;
            for r in &rows {
                println!(
                    "{:<7} {:<6} time-until-execution {:.2}±{:.2}s  duration {:.2}±{:.2}s  object acc {:.2}  direction acc {:.2}",
                    r.user.as_str(),
                    r.mode.as_str(),
                    r.time_until_execution.0,
                    r.time_until_execution.1,
                    r.episode_duration.0,
                    r.episode_duration.1,
                    r.object_accuracy.0,
                    r.direction_accuracy.0
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Serve { scene, model, bind } => {
            if let Some(b) = bind {
                cfg.serve.bind = b;
            }
            commands::serve(&cfg, scene.as_deref(), &model)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
