//! Pipeline stages: train → collect → fit-defenses → evaluate → report.
//!
//! Every stage reads and writes fixed file names inside the artifact
//! directory and records what it resolved in `manifest.txt`.

use std::path::{Path, PathBuf};

use crate::agent::{collect_clean_observations, train_with_progress, QNetwork};
use crate::config::{Manifest, RunConfig, RESOLVED_PREFIX};
use crate::defenses::{fit_autoencoder_with_progress, DefenseStack, DefenseTransform};
use crate::eval::{
    calibrate_epsilon, read_episodes_csv, read_summary_csv, run_episode_traced, run_eval, sma, summarize,
    write_episodes_csv, write_summary_csv, Calibration, EpisodeRecord, EvalConfig, EvalSummary,
    TrajectoryWriter,
};
use crate::numerics::{
    read_mlp, read_observations, read_pca, write_mlp, write_observations, write_pca, MlpParams, PcaModel,
};
use crate::report::{collision_chart, group_by_label, sma_chart, summary_table};
use crate::{Error, Result};

pub const POLICY_FILE: &str = "policy.rdnet";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const OBSERVATIONS_FILE: &str = "observations.rdobs";
pub const AUTOENCODER_FILE: &str = "autoencoder.rdnet";
pub const PCA_FILE: &str = "pca.rdpca";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TABLE_FILE: &str = "summary_table.txt";
pub const SMA_CHART_FILE: &str = "sma_rewards.svg";
pub const COLLISION_CHART_FILE: &str = "collision_rates.svg";

/// The six standard evaluation configurations, in report order.
pub const CONFIGURATIONS: [&str; 6] = ["baseline", "attack", "random_noise", "autoencoder", "pca", "ensemble"];

fn artifact(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.out_dir.join(name)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Rewrites the manifest: the current config plus every `resolved.*` value
/// already on disk, then `update` on top.
fn update_manifest(cfg: &RunConfig, update: impl FnOnce(&mut Manifest)) -> Result<()> {
    let path = artifact(cfg, MANIFEST_FILE);
    let mut m = Manifest::from_config(cfg);
    if path.exists() {
        for (k, v) in Manifest::read(&path)?.entries() {
            if k.starts_with(RESOLVED_PREFIX) && m.get(k).is_none() {
                m.set(k.clone(), v);
            }
        }
    }
    update(&mut m);
    m.write(&path)
}

fn load_policy(cfg: &RunConfig) -> Result<QNetwork> {
    QNetwork::from_params(read_mlp(&artifact(cfg, POLICY_FILE))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub episodes: usize,
    /// Moving average (`train.sma_window`) of the returns at the last episode.
    pub final_sma: f64,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let dqn = cfg.dqn_config();
    let window = cfg.train_sma_window.max(1);
    let mut recent = std::collections::VecDeque::with_capacity(window);
    let (q, log) = train_with_progress(&cfg.scenario, &dqn, |e| {
        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(e.episode_return);
        if (e.episode + 1) % 250 == 0 {
            let avg = recent.iter().sum::<f64>() / recent.len() as f64;
            log::info!("episode {}/{}: SMA {avg:.2}, ε {:.3}", e.episode + 1, dqn.episodes, e.epsilon);
        }
    })?;
    write_mlp(&artifact(cfg, POLICY_FILE), q.params())?;
    log.write_csv(&artifact(cfg, TRAIN_LOG_FILE))?;
    let final_sma = sma(&log.returns(), window).last().copied().unwrap_or(0.0);
    update_manifest(cfg, |m| {
        m.set("resolved.train.final_sma", final_sma);
        m.set("resolved.train.checkpoint", POLICY_FILE);
    })?;
    Ok(TrainOutcome {
        episodes: log.episodes.len(),
        final_sma,
    })
}

pub fn cmd_collect(cfg: &RunConfig) -> Result<usize> {
    ensure_dir(&cfg.out_dir)?;
    let q = load_policy(cfg)?;
    let data = collect_clean_observations(&q, &cfg.scenario, cfg.collect_observations, cfg.stage_seed("collect"))?;
    write_observations(&artifact(cfg, OBSERVATIONS_FILE), &data)?;
    update_manifest(cfg, |m| m.set("resolved.collect.rows", data.rows()))?;
    Ok(data.rows())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub autoencoder_initial_mse: f64,
    pub autoencoder_final_mse: f64,
    pub pca_components: usize,
    pub pca_explained_fraction: f64,
}

pub fn cmd_fit_defenses(cfg: &RunConfig) -> Result<FitOutcome> {
    ensure_dir(&cfg.out_dir)?;
    let data = read_observations(&artifact(cfg, OBSERVATIONS_FILE))?;
    let ae_cfg = cfg.autoencoder_config();
    let ae = fit_autoencoder_with_progress(&data, &ae_cfg, |epoch, mse| {
        if (epoch + 1) % 50 == 0 {
            log::info!("autoencoder epoch {}/{}: MSE {mse:.6}", epoch + 1, ae_cfg.epochs);
        }
    })?;
    let pca = PcaModel::fit(&data, cfg.pca_variance)?;
    write_mlp(&artifact(cfg, AUTOENCODER_FILE), &ae.params)?;
    write_pca(&artifact(cfg, PCA_FILE), &pca)?;
    let out = FitOutcome {
        autoencoder_initial_mse: ae.initial_mse,
        autoencoder_final_mse: ae.final_mse,
        pca_components: pca.k(),
        pca_explained_fraction: pca.explained_fraction(),
    };
    update_manifest(cfg, |m| {
        m.set("resolved.autoencoder.initial_mse", out.autoencoder_initial_mse);
        m.set("resolved.autoencoder.final_mse", out.autoencoder_final_mse);
        m.set("resolved.pca.k", out.pca_components);
        m.set("resolved.pca.explained_fraction", out.pca_explained_fraction);
        m.set("resolved.pca.degenerate", pca.degenerate);
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub epsilon: f64,
    pub eta: f64,
    /// Present when ε was calibrated rather than configured.
    pub calibration: Option<Calibration>,
    pub summaries: Vec<EvalSummary>,
    pub records: Vec<(String, Vec<EpisodeRecord>)>,
}

impl Evaluation {
    pub fn summary(&self, label: &str) -> Option<&EvalSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }
}

fn base_eval_config(cfg: &RunConfig, label: &str) -> EvalConfig {
    EvalConfig {
        episodes: cfg.eval.episodes,
        base_seed: cfg.stage_seed("eval"),
        collision_batch: cfg.eval.collision_batch,
        sma_window: cfg.eval.sma_window,
        ..EvalConfig::new(label, cfg.scenario.clone())
    }
}

/// Builds the six standard configurations for a resolved ε.
pub fn standard_configurations(
    cfg: &RunConfig,
    epsilon: f64,
    autoencoder: &MlpParams,
    pca: &PcaModel,
) -> Result<Vec<EvalConfig>> {
    let attack = Some(cfg.attack.fgsm(epsilon));
    let noise = cfg.noise_config(epsilon);
    let defenses = [
        DefenseStack::single(DefenseTransform::RandomNoise(noise))?,
        DefenseStack::single(DefenseTransform::Autoencoder(autoencoder.clone()))?,
        DefenseStack::single(DefenseTransform::Pca(pca.clone()))?,
        DefenseStack::ensemble(noise, autoencoder.clone(), pca.clone())?,
    ];
    let mut out = vec![
        base_eval_config(cfg, CONFIGURATIONS[0]),
        EvalConfig {
            attack,
            ..base_eval_config(cfg, CONFIGURATIONS[1])
        },
    ];
    for (label, d) in CONFIGURATIONS[2..].iter().zip(defenses) {
        out.push(EvalConfig {
            attack,
            defense: Some(d),
            ..base_eval_config(cfg, label)
        });
    }
    Ok(out)
}

/// Runs baseline, resolves ε (configured or calibrated), then the remaining
/// five configurations on the same episode seeds.
pub fn evaluate(cfg: &RunConfig, q: &QNetwork, autoencoder: &MlpParams, pca: &PcaModel) -> Result<Evaluation> {
    let baseline_cfg = base_eval_config(cfg, CONFIGURATIONS[0]);
    let (_, baseline) = run_eval(q, &baseline_cfg)?;
    let (epsilon, calibration) = match cfg.attack.epsilon {
        Some(e) => (e, None),
        None => {
            let c = calibrate_epsilon(
                q,
                &EvalConfig {
                    label: "calibration".into(),
                    ..baseline_cfg
                },
                &cfg.attack.fgsm(0.0),
                &cfg.attack.candidates,
                baseline.mean_reward,
                cfg.attack.target_fraction,
            )?;
            if !c.reached {
                log::warn!(
                    "no candidate ε brought the attacked reward to {}× baseline; using ε = {}",
                    cfg.attack.target_fraction,
                    c.epsilon
                );
            }
            (c.epsilon, Some(c))
        }
    };
    let mut summaries = Vec::new();
    let mut records = Vec::new();
    for ec in standard_configurations(cfg, epsilon, autoencoder, pca)? {
        let (recs, summary) = if cfg.eval.dump_trajectories {
            run_with_trajectories(cfg, q, &ec)?
        } else {
            run_eval(q, &ec)?
        };
        log::info!(
            "{}: reward {:.2} ± {:.2}, collision rate {:.2}",
            summary.label,
            summary.mean_reward,
            summary.std_reward,
            summary.mean_collision_rate
        );
        summaries.push(summary);
        records.push((ec.label.clone(), recs));
    }
    Ok(Evaluation {
        epsilon,
        eta: cfg.noise_config(epsilon).eta,
        calibration,
        summaries,
        records,
    })
}

fn run_with_trajectories(cfg: &RunConfig, q: &QNetwork, ec: &EvalConfig) -> Result<(Vec<EpisodeRecord>, EvalSummary)> {
    ec.validate()?;
    let mut writer = TrajectoryWriter::create(&artifact(cfg, &format!("trajectories_{}.csv", ec.label)))?;
    let mut records = Vec::with_capacity(ec.episodes);
    for e in 0..ec.episodes {
        let mut failure = None;
        let rec = run_episode_traced(q, ec, e, |t| {
            if failure.is_none() {
                failure = writer.write_step(e, t).err();
            }
        })?;
        if let Some(err) = failure {
            return Err(err);
        }
        records.push(rec);
    }
    writer.finish()?;
    let summary = summarize(&ec.label, &records, ec.collision_batch)?;
    Ok((records, summary))
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    ensure_dir(&cfg.out_dir)?;
    let q = load_policy(cfg)?;
    let ae = read_mlp(&artifact(cfg, AUTOENCODER_FILE))?;
    let pca = read_pca(&artifact(cfg, PCA_FILE))?;
    let ev = evaluate(cfg, &q, &ae, &pca)?;
    let episodes_path = artifact(cfg, EPISODES_FILE);
    for (i, (label, recs)) in ev.records.iter().enumerate() {
        write_episodes_csv(&episodes_path, label, recs, i > 0)?;
    }
    write_summary_csv(&artifact(cfg, SUMMARY_FILE), &ev.summaries)?;
    update_manifest(cfg, |m| {
        m.set("resolved.attack.epsilon", ev.epsilon);
        m.set("resolved.noise.eta", ev.eta);
        m.set("resolved.eval.base_seed", cfg.stage_seed("eval"));
        m.set("resolved.eval.std", "population");
        if let Some(c) = &ev.calibration {
            m.set("resolved.attack.calibration_reached", c.reached);
            let sweep: Vec<String> = c.sweep.iter().map(|(e, r)| format!("{e}:{r}")).collect();
            m.set("resolved.attack.calibration_sweep", sweep.join(","));
        }
    })?;
    Ok(ev)
}

/// Renders the table and charts from `summary.csv` / `episodes.csv` in `dir`.
/// SMA window and collision batch come from the manifest when present.
pub fn cmd_report(dir: &Path) -> Result<Vec<EvalSummary>> {
    let summaries = read_summary_csv(&dir.join(SUMMARY_FILE))?;
    let rows = read_episodes_csv(&dir.join(EPISODES_FILE))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        Manifest::read(&manifest_path)?
    } else {
        Manifest::default()
    };
    let get = |key: &str, default: usize| -> Result<usize> {
        match manifest.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::format(&manifest_path, format!("bad value '{v}' for {key}"))),
            None => Ok(default),
        }
    };
    let window = get("eval.sma_window", 10)?;
    let batch = get("eval.collision_batch", 10)?;
    let groups = group_by_label(&rows);
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(TABLE_FILE, summary_table(&summaries))?;
    write(SMA_CHART_FILE, sma_chart(&groups, window))?;
    write(COLLISION_CHART_FILE, collision_chart(&groups, batch))?;
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub train: TrainOutcome,
    pub fit: FitOutcome,
    pub evaluation: Evaluation,
}

/// The five stages in order; identical artifacts to running them one by one.
pub fn full_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome> {
    let train = cmd_train(cfg)?;
    cmd_collect(cfg)?;
    let fit = cmd_fit_defenses(cfg)?;
    let evaluation = cmd_evaluate(cfg)?;
    cmd_report(&cfg.out_dir)?;
    Ok(PipelineOutcome { train, fit, evaluation })
}
