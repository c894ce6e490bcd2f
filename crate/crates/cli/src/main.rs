use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rd_core::config::{RunConfig, Setting};
use rd_core::pipeline;
use rd_core::report::summary_table;

#[derive(Parser, Debug)]
#[command(name = "rd", version, about = "Train, attack and defend a DQN driving agent")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory (falls back to RD_ARTIFACT_DIR, then ./artifacts).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    scenario: Option<Scenario>,
    /// Override any config key, e.g. `--set dqn.episodes=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Scenario {
    Highway,
    Merge,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the DQN policy; writes the checkpoint and training log.
    Train,
    /// Roll out the trained policy and save clean observations.
    Collect,
    /// Fit the autoencoder and PCA defenses on the collected observations.
    FitDefenses,
    /// Run the six standard evaluation configurations.
    Evaluate,
    /// Render the summary table and charts from evaluation CSVs.
    Report,
    /// All of the above, in order.
    FullPipeline,
}

fn settings(cli: &Cli) -> Result<(Vec<Setting>, Vec<Setting>), rd_core::Error> {
    let mut base = Vec::new();
    if let Some(dir) = std::env::var_os("RD_ARTIFACT_DIR").filter(|d| !d.is_empty()) {
        base.push(Setting::new("out_dir", dir.to_string_lossy(), "RD_ARTIFACT_DIR"));
    }
    let mut flags = Vec::new();
    if let Some(s) = cli.scenario {
        let name = match s {
            Scenario::Highway => "highway",
            Scenario::Merge => "merge",
        };
        flags.push(Setting::new("scenario", name, "--scenario"));
    }
    if let Some(seed) = cli.seed {
        flags.push(Setting::new("seed", seed.to_string(), "--seed"));
    }
    for o in &cli.overrides {
        flags.push(Setting::parse_override(o)?);
    }
    if let Some(out) = &cli.out {
        flags.push(Setting::new("out_dir", out.display().to_string(), "--out"));
    }
    Ok((base, flags))
}

fn run(cli: &Cli) -> Result<(), rd_core::Error> {
    let (base, flags) = settings(cli)?;
    let (cfg, warnings) = RunConfig::load(&base, cli.config.as_deref(), &flags)?;
    for w in warnings {
        log::warn!("{w}");
    }
    match cli.command {
        Command::Train => {
            let t = pipeline::cmd_train(&cfg)?;
            println!("trained {} episodes; final SMA({}) = {:.2}", t.episodes, cfg.train_sma_window, t.final_sma);
        }
        Command::Collect => {
            let n = pipeline::cmd_collect(&cfg)?;
            println!("collected {n} clean observations");
        }
        Command::FitDefenses => {
            let f = pipeline::cmd_fit_defenses(&cfg)?;
            println!(
                "autoencoder MSE {:.6} -> {:.6}; PCA keeps {} components ({:.1}% variance)",
                f.autoencoder_initial_mse,
                f.autoencoder_final_mse,
                f.pca_components,
                100.0 * f.pca_explained_fraction
            );
        }
        Command::Evaluate => {
            let ev = pipeline::cmd_evaluate(&cfg)?;
            println!("ε = {}, η = {}", ev.epsilon, ev.eta);
            print!("{}", summary_table(&ev.summaries));
        }
        Command::Report => {
            let s = pipeline::cmd_report(&cfg.out_dir)?;
            print!("{}", summary_table(&s));
        }
        Command::FullPipeline => {
            let out = pipeline::full_pipeline(&cfg)?;
            println!(
                "final training SMA {:.2}; ε = {}, η = {}; PCA k = {}",
                out.train.final_sma, out.evaluation.epsilon, out.evaluation.eta, out.fit.pca_components
            );
            print!("{}", summary_table(&out.evaluation.summaries));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!("\n  caused by: {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
