use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clarify_core::data::PreferenceLabel;
use clarify_core::envs::{EnvSpec, GridNavEnv};
use clarify_core::harness::*;
use clarify_core::selection::SelectionMode;
use clarify_core::teacher::HumanLabeler;
use clarify_core::Error;

fn tiny(seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = seed;
    c.env = EnvSpec::Gridnav(GridNavEnv::new(4, (3, 3), 20).unwrap());
    c.dataset.n_episodes = 20;
    c.horizon = 5;
    c.m = 10;
    c.n_total = 30;
    c.n_init = 40;
    c.n_emb = 10;
    c.n_reward = 10;
    c.dim = 4;
    c.pool_size = 80;
    c.held_out_queries = 40;
    c.held_out_segments = 40;
    c.encoder.hidden = vec![8];
    c.encoder.decoder_hidden = vec![8];
    c.reward.hidden = vec![8];
    c.reward.batch_size = 16;
    for b in [
        &mut c.embedding.amb_batch,
        &mut c.embedding.quad_batch,
        &mut c.embedding.norm_batch,
        &mut c.embedding.recon_batch,
    ] {
        *b = 8;
    }
    c.embedding.log_every = 5;
    c
}

fn read(dir: &std::path::Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn single_round_never_selects() {
    let mut cfg = tiny(1);
    cfg.n_total = 10;
    let dir = tempfile::tempdir().unwrap();
    let fin = run_experiment(&cfg, dir.path(), &RunOptions::default())
        .unwrap()
        .unwrap();
    assert_eq!(fin.rounds, 1);
    assert_eq!(fin.selected_clarity_ratio, None);
    let logs = read_round_logs(dir.path()).unwrap();
    assert_eq!(logs.len(), 1);
    assert_eq!(logs[0].selection, SelectionMode::Random);
    assert_eq!(logs[0].density_file, None);
    assert!(!dir.path().join("densities/round_0.csv").exists());
}

#[test]
fn artifacts_and_feedback_accounting() {
    let cfg = tiny(2);
    let dir = tempfile::tempdir().unwrap();
    let fin = run_experiment(&cfg, dir.path(), &RunOptions::default())
        .unwrap()
        .unwrap();
    let logs = read_round_logs(dir.path()).unwrap();
    assert_eq!(logs.len(), 3);
    assert_eq!(
        logs.iter().map(|l| l.queries_issued).sum::<usize>(),
        cfg.n_total
    );
    assert_eq!(fin.feedback_spent, cfg.n_total);
    for l in &logs {
        assert_eq!(l.labels.total(), l.queries_issued);
        assert!(dir
            .path()
            .join(format!("embeddings/round_{}.csv", l.round))
            .exists());
    }
    for k in 1..3 {
        let csv =
            std::fs::read_to_string(dir.path().join(format!("densities/round_{k}.csv"))).unwrap();
        assert!(csv.starts_with("bin_left,bin_right,rho_clr,rho_amb,rho1,rho2,rho"));
        assert_eq!(csv.lines().count(), cfg.n_bin + 1);
    }
    let copy = ExperimentConfig::load(&dir.path().join(CONFIG_COPY)).unwrap();
    assert_eq!(copy, cfg);
    let prefs =
        clarify_core::data::load_preferences::<f64>(dir.path().join(PREFERENCES_FILE)).unwrap();
    let keys: std::collections::HashSet<_> = prefs.triples().iter().map(|t| t.key()).collect();
    assert_eq!(keys.len(), cfg.n_total);
    assert!(dir.path().join(FINAL_FILE).exists());

    let report = dir.path().join("report.csv");
    assert_eq!(write_report(dir.path(), &report).unwrap(), 3);
    assert_eq!(std::fs::read_to_string(report).unwrap().lines().count(), 4);
}

#[test]
fn scripted_runs_are_byte_identical() {
    let cfg = tiny(3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path(), &RunOptions::default()).unwrap();
    run_experiment(&cfg, b.path(), &RunOptions::default()).unwrap();
    assert_eq!(read(a.path(), METRICS_FILE), read(b.path(), METRICS_FILE));
    assert_eq!(read(a.path(), FINAL_FILE), read(b.path(), FINAL_FILE));
}

#[test]
fn resume_continues_identically() {
    let cfg = tiny(4);
    let (full, cut) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, full.path(), &RunOptions::default()).unwrap();
    let stopped = RunOptions {
        stop_after_round: Some(1),
        ..Default::default()
    };
    assert!(run_experiment(&cfg, cut.path(), &stopped)
        .unwrap()
        .is_none());
    assert_eq!(read_round_logs(cut.path()).unwrap().len(), 2);
    let resumed = RunOptions {
        resume: true,
        ..Default::default()
    };
    run_experiment(&cfg, cut.path(), &resumed).unwrap().unwrap();
    assert_eq!(
        read(full.path(), METRICS_FILE),
        read(cut.path(), METRICS_FILE)
    );
    assert_eq!(read(full.path(), FINAL_FILE), read(cut.path(), FINAL_FILE));
}

#[test]
fn baselines_run_and_skip_embedding() {
    for sel in [SelectionMode::Random, SelectionMode::Disagreement] {
        let mut cfg = tiny(5);
        cfg.selection = sel;
        let dir = tempfile::tempdir().unwrap();
        let fin = run_experiment(&cfg, dir.path(), &RunOptions::default())
            .unwrap()
            .unwrap();
        assert_eq!(fin.feedback_spent, cfg.n_total);
        let logs = read_round_logs(dir.path()).unwrap();
        assert!(logs
            .iter()
            .all(|l| l.embedding_file.is_none() && l.embedding_loss.is_empty()));
    }
}

#[test]
fn skips_can_be_excluded_from_budget() {
    let mut cfg = tiny(6);
    cfg.count_skips_toward_budget = false;
    let dir = tempfile::tempdir().unwrap();
    let fin = run_experiment(&cfg, dir.path(), &RunOptions::default())
        .unwrap()
        .unwrap();
    assert_eq!(fin.labels.clear(), cfg.n_total);
    assert!(fin.labels.total() >= cfg.n_total);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = tiny(0);
    cfg.m = cfg.n_total + 1;
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        run_experiment(&cfg, dir.path(), &RunOptions::default()),
        Err(Error::Config(_))
    ));
}

#[test]
fn human_mode_waits_for_labels() {
    let mut cfg = tiny(7);
    cfg.n_total = 20;
    cfg.teacher.mode = TeacherMode::Human;
    cfg.teacher.timeout_secs = Some(30.0);
    let labeler = Arc::new(HumanLabeler::new("human-test", cfg.n_total));
    let answerer = {
        let labeler = Arc::clone(&labeler);
        thread::spawn(move || {
            let mut answered = 0;
            while answered < 20 {
                match labeler.pending() {
                    Some(t) => {
                        let answer = if answered % 3 == 0 { "skip" } else { "first" };
                        labeler.resolve(t.id, answer).unwrap();
                        answered += 1;
                    }
                    None => thread::sleep(Duration::from_millis(2)),
                }
            }
        })
    };
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        labeler: Some(Arc::clone(&labeler)),
        ..Default::default()
    };
    let fin = run_experiment(&cfg, dir.path(), &opts).unwrap().unwrap();
    answerer.join().unwrap();
    assert_eq!(fin.labels.total(), 20);
    assert_eq!(fin.labels.skip, 7);
    let history = labeler.history();
    assert_eq!(
        history
            .iter()
            .filter(|t| t.label == PreferenceLabel::NoComparison)
            .count(),
        7
    );
    assert_eq!(labeler.status().labels_done, 20);
}

#[test]
fn human_mode_times_out_and_requires_a_labeler() {
    let mut cfg = tiny(8);
    cfg.teacher.mode = TeacherMode::Human;
    cfg.teacher.timeout_secs = Some(0.05);
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        run_experiment(&cfg, dir.path(), &RunOptions::default()),
        Err(Error::Config(_))
    ));
    let opts = RunOptions {
        labeler: Some(Arc::new(HumanLabeler::new("idle", cfg.n_total))),
        ..Default::default()
    };
    assert!(matches!(
        run_experiment(&cfg, dir.path(), &opts),
        Err(Error::Timeout)
    ));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
