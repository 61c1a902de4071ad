use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use pushrank::config::{parse_config, ExperimentConfig};
use pushrank::experiment::{evaluate_scorers, generate_training_log, run_experiment};
use pushrank::report::{emit_report, render_table, EvalReport, RUN_META};
use pushrank::scorer::{init_params, Scorer, ScorerParams};
use pushrank::simulator::{read_dataset, write_dataset};
use pushrank::stats::fit_beta_mle;
use pushrank::trainer::{load_training_set, train};
use pushrank::{Error, Result, N_USER_TYPES};
use serde_json::json;

/// Push-notification ranking lab: simulate logs, train scorers, compare losses.
#[derive(Parser)]
#[command(name = "pushrank", version)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training log (uniform or epsilon-greedy per `data_bias`).
    GenData {
        /// Log the epsilon-greedy policy around this checkpoint instead.
        #[arg(long)]
        scorer: Option<PathBuf>,
    },
    /// Fit Beta distributions to the latent CTRs of a dataset.
    FitDist {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train one configured variant on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "pointwise")]
        variant: String,
    },
    /// Greedy exact-regret evaluation of checkpoints on fresh candidate sets.
    Evaluate {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Render a saved report as a table.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
    /// Full pipeline over all seeds and variants.
    Run,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json value") + "\n"
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.sim.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    let out = config.output_dir.clone();
    let seed = config.sim.master_seed;
    match &cli.command {
        Command::GenData { scorer } => {
            let examples = match scorer {
                Some(path) => {
                    let params = ScorerParams::load(path)?;
                    let mut rng = pushrank::stats::SeededRng::with_stream(seed, 10);
                    pushrank::simulator::generate_log(
                        &config.sim,
                        pushrank::simulator::LoggingPolicy::EpsilonGreedy(&params),
                        &mut rng,
                    )?
                }
                None => generate_training_log(&config, seed)?.examples,
            };
            let path = out.join("data.csv");
            std::fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
            write_dataset(&path, &examples)?;
            let explored = examples.iter().filter(|e| e.explored).count();
            println!("wrote {} examples ({explored} explored) to {}", examples.len(), path.display());
        }
        Command::FitDist { data } => {
            let examples = read_dataset(data)?;
            let all: Vec<f64> = examples.iter().map(|e| e.latent_ctr).collect();
            let overall = fit_beta_mle(&all)?;
            let mut per_type = Vec::new();
            for t in 0..N_USER_TYPES {
                let xs: Vec<f64> = examples.iter().filter(|e| e.user_type == t).map(|e| e.latent_ctr).collect();
                per_type.push(if xs.len() >= 10 { Some(fit_beta_mle(&xs)?) } else { None });
            }
            let doc = json!({ "n_samples": all.len(), "overall": overall, "per_type": per_type });
            write(&out.join("beta_fit.json"), &pretty(&doc))?;
            println!("Beta(alpha = {:.4}, beta = {:.4}) from {} samples", overall.alpha_shape, overall.beta_shape, all.len());
        }
        Command::Train { data, variant } => {
            let v = config.variant(variant)?;
            let dataset = load_training_set(data)?;
            let init = init_params(&config.model.layer_dims(), config.model.activation, seed)?;
            let (params, history) = train(&dataset, init, &config.train_config(v.loss, seed))?;
            let ckpt = out.join(format!("{}.ckpt", v.name));
            write(&ckpt, &params.to_checkpoint_string())?;
            let hist = serde_json::to_value(&history).expect("history json");
            write(&out.join(format!("{}_history.json", v.name)), &pretty(&hist))?;
            println!(
                "trained '{}' for {} epochs (best {}), checkpoint {}",
                v.name,
                history.stopped_epoch,
                history.best_epoch,
                ckpt.display()
            );
        }
        Command::Evaluate { checkpoints } => {
            let params: Vec<ScorerParams> = checkpoints.iter().map(|p| ScorerParams::load(p)).collect::<Result<_>>()?;
            let scorers: Vec<&dyn Scorer> = params.iter().map(|p| p as &dyn Scorer).collect();
            let eval = evaluate_scorers(&config, seed, &scorers)?;
            let rows: Vec<_> = checkpoints
                .iter()
                .zip(&eval.mean_regret)
                .map(|(p, r)| json!({ "checkpoint": p, "mean_regret": r }))
                .collect();
            for (p, r) in checkpoints.iter().zip(&eval.mean_regret) {
                println!("{:<40} {r:.5}", p.display());
            }
            println!("{:<40} {:.5}", "uniform_random", eval.uniform_random_regret);
            let doc = json!({
                "seed": seed,
                "n_sets": eval.n_sets,
                "models": rows,
                "uniform_random_regret": eval.uniform_random_regret,
            });
            write(&out.join("evaluation.json"), &pretty(&doc))?;
        }
        Command::Report { report } => {
            let report = EvalReport::load(report)?;
            print!("{}", render_table(&report));
        }
        Command::Run => {
            let started = Instant::now();
            let report = run_experiment(&config)?;
            let written = emit_report(&report, &out)?;
            let meta = json!({
                "wall_clock_seconds": started.elapsed().as_secs_f64(),
                "finished_unix_seconds": std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                "threads": rayon::current_num_threads(),
            });
            write(&out.join(RUN_META), &pretty(&meta))?;
            print!("{}", render_table(&report));
            for path in written {
                log::info!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
