use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TeacherMode};
use crate::data::{
    load_preferences, pair_key, sample_segment_ids, save_preferences, OfflineDataset,
    PreferenceDataset, PreferenceLabel, PreferenceTriple, Query, Segment,
};
use crate::embedding::{
    export_embeddings, train_embedding, EmbeddingCheckpoint, EmbeddingModel, LossRecord,
};
use crate::error::{Error, Result};
use crate::reward::{
    evaluate_reward, relabel_dataset, train_reward, EvalMetrics, HeldOut, RewardEnsemble,
};
use crate::seed::{self, streams, Rng};
use crate::selection::{
    estimate_densities, pair_distance, select_queries, DensityModel, SelectionContext,
    SelectionMode,
};
use crate::teacher::{perfect_label, scripted_label, HumanLabeler, TeacherConfig};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_FILE: &str = "final_metrics.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PREFERENCES_FILE: &str = "preferences.ndjson";
pub const CONFIG_COPY: &str = "config.copy";
pub const EMBEDDING_FILE: &str = "embedding.json";

/// Label counts of one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub first: usize,
    pub second: usize,
    pub skip: usize,
}

impl LabelCounts {
    pub fn of<'a>(triples: impl IntoIterator<Item = &'a PreferenceTriple<f64>>) -> Self {
        let mut c = Self::default();
        for t in triples {
            match t.label {
                PreferenceLabel::PreferFirst => c.first += 1,
                PreferenceLabel::PreferSecond => c.second += 1,
                PreferenceLabel::NoComparison => c.skip += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.first + self.second + self.skip
    }

    pub fn clear(&self) -> usize {
        self.first + self.second
    }
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub selection: SelectionMode,
    pub queries_issued: usize,
    pub labels: LabelCounts,
    pub clarity_ratio: f64,
    pub feedback_spent: usize,
    /// Density used to select this round's queries, relative to the artifacts directory.
    pub density_file: Option<String>,
    pub density_fallback: bool,
    pub embedding_file: Option<String>,
    pub embedding_loss: Vec<LossRecord>,
    pub reward_loss: Vec<f64>,
    pub metrics: EvalMetrics,
}

/// Contents of `final_metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub experiment_id: String,
    pub seed: u64,
    pub selection: SelectionMode,
    pub rounds: usize,
    pub feedback_spent: usize,
    pub labels: LabelCounts,
    pub clarity_ratio: f64,
    /// Clarity ratio of the rounds after the initial random one.
    pub selected_clarity_ratio: Option<f64>,
    pub eval: EvalMetrics,
}

/// Options that do not belong in the config file.
#[derive(Clone, Default)]
pub struct RunOptions {
    /// Continue from `checkpoint.json` if the directory has one.
    pub resume: bool,
    /// Label source for [`TeacherMode::Human`].
    pub labeler: Option<Arc<HumanLabeler<f64>>>,
    /// Return after this round is written, as if the process had stopped.
    pub stop_after_round: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    round: usize,
    feedback_spent: usize,
    queries_issued: usize,
    embedding: EmbeddingCheckpoint<f64>,
    ensemble: RewardEnsemble<f64>,
}

/// Everything derived from the config and seed before the first round.
pub struct Setup {
    pub dataset: OfflineDataset<f64>,
    pub held_out: HeldOut<f64>,
    pub teacher: TeacherConfig,
}

fn windows(
    data: &OfflineDataset<f64>,
    h: usize,
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Arc<Segment<f64>>>> {
    sample_segment_ids(data, h, n, rng)?
        .into_iter()
        .map(|id| data.segment(id, h).map(Arc::new))
        .collect()
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let dataset = cfg.env.generate::<f64>(
        &cfg.dataset.mix,
        cfg.dataset.n_episodes,
        seed::stream_seed(cfg.seed, 0, streams::DATASET),
    )?;
    let mut rng = seed::stream(cfg.seed, 0, streams::HELD_OUT);
    let segments = windows(&dataset, cfg.horizon, cfg.held_out_segments, &mut rng)?;
    let pairs = windows(&dataset, cfg.horizon, 2 * cfg.held_out_queries, &mut rng)?;
    let queries = pairs
        .chunks(2)
        .filter(|p| p[0].id != p[1].id)
        .map(|p| (Arc::clone(&p[0]), Arc::clone(&p[1])))
        .collect();
    let teacher = TeacherConfig::new(cfg.teacher.epsilon, cfg.horizon, dataset.r_avg)?;
    Ok(Setup {
        dataset,
        held_out: HeldOut { queries, segments },
        teacher,
    })
}

fn uniform_queries(
    data: &OfflineDataset<f64>,
    h: usize,
    prefs: &PreferenceDataset<f64>,
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<Query<f64>>> {
    let pool = crate::selection::sample_pool(data, h, prefs, m, rng)?;
    pool.into_iter()
        .map(|(a, b)| Ok((Arc::new(data.segment(a, h)?), Arc::new(data.segment(b, h)?))))
        .collect()
}

fn label_queries(
    cfg: &ExperimentConfig,
    setup: &Setup,
    opts: &RunOptions,
    queries: Vec<Query<f64>>,
    round: usize,
) -> Result<Vec<PreferenceTriple<f64>>> {
    match cfg.teacher.mode {
        TeacherMode::Scripted | TeacherMode::Perfect => queries
            .into_iter()
            .map(|(a, b)| {
                let label = match cfg.teacher.mode {
                    TeacherMode::Perfect => perfect_label(&a, &b),
                    _ => scripted_label(&a, &b, &setup.teacher)?,
                };
                PreferenceTriple::new(a, b, label, round)
            })
            .collect(),
        TeacherMode::Human => {
            let labeler = opts.labeler.as_ref().ok_or_else(|| {
                Error::Config("human teacher mode needs a running labeling service".into())
            })?;
            labeler.set_round(round);
            let ids: Vec<u64> = queries
                .into_iter()
                .map(|(a, b)| labeler.request(a, b, round))
                .collect();
            labeler.wait_all(&ids, cfg.teacher.timeout_secs.map(Duration::from_secs_f64))
        }
    }
}

fn fresh_model(cfg: &ExperimentConfig) -> EmbeddingModel<f64> {
    let mut rng = seed::stream(cfg.seed, 0, streams::EMBED_INIT);
    EmbeddingModel::encoder(
        cfg.env.state_dim(),
        cfg.env.action_dim(),
        cfg.dim,
        &cfg.encoder,
        &mut rng,
    )
}

fn fresh_ensemble(cfg: &ExperimentConfig) -> RewardEnsemble<f64> {
    let mut rng = seed::stream(cfg.seed, 0, streams::REWARD_INIT);
    RewardEnsemble::new(
        cfg.env.state_dim() + cfg.env.action_dim(),
        &cfg.reward,
        &mut rng,
    )
}

/// Density for the next selection, uniform when a label subset is still empty.
fn density_for(
    cfg: &ExperimentConfig,
    prefs: &PreferenceDataset<f64>,
    model: &EmbeddingModel<f64>,
) -> Result<(DensityModel, bool)> {
    match estimate_densities(prefs, model, cfg.embedding.metric, cfg.n_bin, cfg.eps_d) {
        Ok(d) => Ok((d, false)),
        Err(Error::InsufficientLabels) => {
            log::warn!(
                "density estimation needs clear and skipped labels; using a uniform density"
            );
            let max = prefs
                .triples()
                .iter()
                .map(|t| pair_distance(model, cfg.embedding.metric, &t.seg0, &t.seg1))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok((DensityModel::uniform(max, cfg.n_bin)?, true))
        }
        Err(e) => Err(e),
    }
}

fn read_logs(path: &Path) -> Result<Vec<RoundLog>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

pub fn read_round_logs(dir: &Path) -> Result<Vec<RoundLog>> {
    read_logs(&dir.join(METRICS_FILE))
}

fn write_logs(path: &Path, logs: &[RoundLog]) -> Result<()> {
    let mut f = File::create(path)?;
    for l in logs {
        writeln!(f, "{}", serde_json::to_string(l)?)?;
    }
    Ok(())
}

fn rel(dir: &str, round: usize) -> String {
    format!("{dir}/round_{round}.csv")
}

/// Runs the experiment loop, writing artifacts under `out`.
///
/// Round 0 labels uniformly random queries, pretrains the embedding for
/// `n_init` steps and fits the reward ensemble. Each later round selects
/// `m` queries, labels them and continues training both models from their
/// current parameters. The run ends once `n_total` feedback is spent; the
/// dataset is then relabeled and the final evaluation written. Returns `None`
/// when stopped early through [`RunOptions::stop_after_round`].
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    opts: &RunOptions,
) -> Result<Option<FinalMetrics>> {
    cfg.validate()?;
    for sub in ["densities", "embeddings"] {
        fs::create_dir_all(out.join(sub))?;
    }
    cfg.save(&out.join(CONFIG_COPY))?;
    let setup = setup(cfg)?;
    let use_embedding = cfg.selection == SelectionMode::Clarify;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let metrics_path = out.join(METRICS_FILE);

    let (
        mut model,
        mut emb_opt,
        mut ensemble,
        mut prefs,
        mut logs,
        mut feedback,
        mut issued,
        first_round,
    ) = if opts.resume && ckpt_path.exists() {
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(&ckpt_path)?))?;
        let mut prefs: PreferenceDataset<f64> = load_preferences(out.join(PREFERENCES_FILE))?;
        prefs.truncate_to_round(ck.round + 1);
        let mut logs = read_logs(&metrics_path)?;
        logs.retain(|l| l.round <= ck.round);
        let opt = ck
            .embedding
            .optimizer
            .unwrap_or_else(|| cfg.embedding.optimizer_for(&ck.embedding.model));
        log::info!("resuming after round {}", ck.round);
        (
            ck.embedding.model,
            opt,
            ck.ensemble,
            prefs,
            logs,
            ck.feedback_spent,
            ck.queries_issued,
            ck.round + 1,
        )
    } else {
        let model = fresh_model(cfg);
        let opt = cfg.embedding.optimizer_for(&model);
        (
            model,
            opt,
            fresh_ensemble(cfg),
            PreferenceDataset::new(),
            Vec::new(),
            0,
            0,
            0,
        )
    };
    write_logs(&metrics_path, &logs)?;

    // a run that never spends its budget (every answer skipped) stops here
    let max_queries = 10 * cfg.n_total;
    let mut round = first_round;
    while feedback < cfg.n_total && issued < max_queries {
        let want = cfg.m.min(cfg.n_total - feedback);
        let mut rng = seed::stream(cfg.seed, round as u64, streams::SELECTION);
        let (queries, density_file, density_fallback) = if round == 0 {
            let mut rng = seed::stream(cfg.seed, 0, streams::QUERIES);
            (
                uniform_queries(&setup.dataset, cfg.horizon, &prefs, want, &mut rng)?,
                None,
                false,
            )
        } else {
            let (density, fallback, file) = if use_embedding {
                let (d, fb) = density_for(cfg, &prefs, &model)?;
                let file = rel("densities", round);
                d.write_csv(&out.join(&file))?;
                (Some(d), fb, Some(file))
            } else {
                (None, false, None)
            };
            let ctx = SelectionContext {
                dataset: &setup.dataset,
                horizon: cfg.horizon,
                prefs: &prefs,
                model: &model,
                metric: cfg.embedding.metric,
                ensemble: &ensemble,
            };
            let sel = select_queries(
                &ctx,
                cfg.selection,
                density.as_ref(),
                want,
                cfg.pool_size,
                &mut rng,
            )?;
            (sel.queries, file, fallback)
        };
        let triples = label_queries(cfg, &setup, opts, queries, round)?;
        let labels = LabelCounts::of(&triples);
        for t in triples {
            debug_assert!(
                !prefs.contains_pair(t.seg0.id, t.seg1.id),
                "pair {:?} labeled twice",
                pair_key(t.seg0.id, t.seg1.id)
            );
            prefs.push(t);
        }
        issued += labels.total();
        feedback += if cfg.count_skips_toward_budget {
            labels.total()
        } else {
            labels.clear()
        };

        let mut embedding_loss = Vec::new();
        let mut embedding_file = None;
        if use_embedding {
            let steps = if round == 0 { cfg.n_init } else { cfg.n_emb };
            let seed = seed::stream_seed(cfg.seed, round as u64, streams::EMBED_TRAIN);
            embedding_loss = train_embedding(
                &mut model,
                &mut emb_opt,
                Some((&setup.dataset, cfg.horizon)),
                &prefs,
                steps,
                &cfg.embedding,
                seed,
            )?;
            let file = rel("embeddings", round);
            let segs: Vec<&Segment<f64>> =
                setup.held_out.segments.iter().map(|s| s.as_ref()).collect();
            match export_embeddings(&model, &segs, &out.join(&file)) {
                Ok(_) => embedding_file = Some(file),
                Err(Error::ZeroVariance) => {
                    log::warn!("round {round}: embeddings have zero variance; export skipped")
                }
                Err(e) => return Err(e),
            }
        }
        let reward_seed = seed::stream_seed(cfg.seed, round as u64, streams::REWARD_TRAIN);
        let reward_loss = match train_reward(
            &mut ensemble,
            &prefs,
            cfg.n_reward,
            cfg.reward.batch_size,
            reward_seed,
        ) {
            Ok(trace) => trace,
            Err(Error::NoTrainableLabels) => {
                log::warn!("round {round}: no clear labels yet; reward training skipped");
                Vec::new()
            }
            Err(e) => return Err(e),
        };
        let metrics = evaluate_reward(
            &ensemble,
            &setup.teacher,
            &setup.held_out,
            &cfg.env,
            None,
            round,
        )?;
        let log = RoundLog {
            round,
            selection: if round == 0 {
                SelectionMode::Random
            } else {
                cfg.selection
            },
            queries_issued: labels.total(),
            labels,
            clarity_ratio: labels.clear() as f64 / labels.total().max(1) as f64,
            feedback_spent: feedback,
            density_file,
            density_fallback,
            embedding_file,
            embedding_loss,
            reward_loss,
            metrics,
        };
        log::info!(
            "round {round}: {} queries, clarity {:.3}, spearman {:?}",
            log.queries_issued,
            log.clarity_ratio,
            log.metrics.spearman
        );
        let mut f = fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&metrics_path)?;
        writeln!(f, "{}", serde_json::to_string(&log)?)?;
        logs.push(log);

        save_preferences(out.join(PREFERENCES_FILE), &prefs)?;
        let ck = Checkpoint {
            schema_version: crate::data::SCHEMA_VERSION,
            round,
            feedback_spent: feedback,
            queries_issued: issued,
            embedding: EmbeddingCheckpoint::new(model.clone(), Some(emb_opt.clone())),
            ensemble: ensemble.clone(),
        };
        if use_embedding {
            ck.embedding.save(&out.join(EMBEDDING_FILE))?;
        }
        let tmp = out.join(format!("{CHECKPOINT_FILE}.tmp"));
        serde_json::to_writer(std::io::BufWriter::new(File::create(&tmp)?), &ck)?;
        fs::rename(&tmp, &ckpt_path)?;

        if opts.stop_after_round == Some(round) {
            return Ok(None);
        }
        round += 1;
    }
    if feedback < cfg.n_total {
        log::warn!(
            "stopped after {issued} queries with only {feedback} of {} feedback spent",
            cfg.n_total
        );
    }

    let relabeled = relabel_dataset(&ensemble, &setup.dataset);
    let eval = evaluate_reward(
        &ensemble,
        &setup.teacher,
        &setup.held_out,
        &cfg.env,
        Some(relabeled.scale),
        logs.len(),
    )?;
    let labels = LabelCounts::of(prefs.triples());
    let later: Vec<&RoundLog> = logs.iter().filter(|l| l.round > 0).collect();
    let later_total: usize = later.iter().map(|l| l.labels.total()).sum();
    let later_clear: usize = later.iter().map(|l| l.labels.clear()).sum();
    let fin = FinalMetrics {
        experiment_id: cfg.experiment_id.clone(),
        seed: cfg.seed,
        selection: cfg.selection,
        rounds: logs.len(),
        feedback_spent: feedback,
        labels,
        clarity_ratio: labels.clear() as f64 / labels.total().max(1) as f64,
        selected_clarity_ratio: (later_total > 0).then(|| later_clear as f64 / later_total as f64),
        eval,
    };
    fs::write(out.join(FINAL_FILE), serde_json::to_string_pretty(&fin)?)?;
    Ok(Some(fin))
}

/// Writes one CSV row per round log found in `dir`.
pub fn write_report(dir: &Path, out: &Path) -> Result<usize> {
    let logs = read_round_logs(dir)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record([
        "round",
        "selection",
        "queries_issued",
        "first",
        "second",
        "skip",
        "clarity_ratio",
        "feedback_spent",
        "final_embedding_loss",
        "final_reward_loss",
        "pref_accuracy",
        "spearman",
        "normalized_return",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for l in &logs {
        let sel = serde_json::to_value(l.selection)?;
        w.write_record([
            l.round.to_string(),
            sel.as_str().unwrap_or_default().to_string(),
            l.queries_issued.to_string(),
            l.labels.first.to_string(),
            l.labels.second.to_string(),
            l.labels.skip.to_string(),
            l.clarity_ratio.to_string(),
            l.feedback_spent.to_string(),
            opt(l.embedding_loss.last().map(|r| r.loss.total)),
            opt(l.reward_loss.last().copied()),
            opt(l.metrics.pref_accuracy),
            opt(l.metrics.spearman),
            opt(l.metrics.normalized_return),
        ])?;
    }
    w.flush()?;
    Ok(logs.len())
}
