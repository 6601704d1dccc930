use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clarify_core::data::{load_preferences, save_preferences, Segment};
use clarify_core::embedding::fixtures::{demo_quad, DemoQuadConfig};
use clarify_core::embedding::{export_embeddings, EmbeddingCheckpoint};
use clarify_core::gradcheck;
use clarify_core::harness::{
    run_experiment, write_report, ExperimentConfig, RunOptions, TeacherMode, PREFERENCES_FILE,
};
use clarify_core::teacher::HumanLabeler;
use clarify_core::Error;

use crate::server::{router, AppState};

/// Exit status for configuration errors.
pub const EXIT_CONFIG: i32 = 2;

/// Failure carrying the process exit status.
#[derive(Debug)]
pub struct Exit {
    pub code: i32,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Exit {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config(_)) => EXIT_CONFIG,
            _ => 1,
        };
        Self { code, error }
    }
}

pub type CmdResult = Result<(), Exit>;

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Exit> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>, resume: bool) -> CmdResult {
    let cfg = load_config(config, seed)?;
    if cfg.teacher.mode == TeacherMode::Human {
        return Err(anyhow!("human teacher mode runs through `serve`").into());
    }
    let out = out
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.experiment_id, cfg.seed)));
    let fin = run_experiment(
        &cfg,
        &out,
        &RunOptions {
            resume,
            ..Default::default()
        },
    )?
    .expect("runs without a stop round complete");
    println!("{}", serde_json::to_string_pretty(&fin)?);
    println!("artifacts: {}", out.display());
    Ok(())
}

pub fn gradcheck(seed: u64) -> CmdResult {
    let reports = gradcheck::run_all(seed)?;
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed { "ok" } else { "FAIL" };
        let extra = r
            .non_finite
            .map(|i| format!(" non-finite at param {i}"))
            .unwrap_or_default();
        println!(
            "{status:4} {:<16} fixture {:2} params {:2} max rel err {:.2e} (param {}){extra}",
            r.suite, r.fixture, r.n_params, r.max_rel_error, r.worst_param
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(anyhow!("{failed} of {} gradient checks failed", reports.len()).into());
    }
    println!("all {} gradient checks passed", reports.len());
    Ok(())
}

pub fn demo_quad_cmd(seed: u64, out: &Path, checkpoint: Option<&Path>) -> CmdResult {
    let res = demo_quad(&DemoQuadConfig::default(), seed)?;
    let segs: Vec<&Segment<f64>> = res.fixture.segments.iter().map(|s| s.as_ref()).collect();
    export_embeddings(&res.model, &segs, out)?;
    if let Some(path) = checkpoint {
        EmbeddingCheckpoint::new(res.model.clone(), None).save(path)?;
        save_preferences(
            path.parent()
                .unwrap_or(Path::new("."))
                .join(PREFERENCES_FILE),
            &res.fixture.prefs,
        )?;
    }
    println!("spearman {:.4}", res.spearman);
    if let Some(acc) = res.separation.train_accuracy {
        println!("centroid hyperplane accuracy {acc:.4}");
    }
    println!("embeddings: {}", out.display());
    Ok(())
}

pub fn export_emb(model: &Path, segments: Option<&Path>, out: &Path) -> CmdResult {
    let ck = EmbeddingCheckpoint::<f64>::load(model)?;
    let segments = match segments {
        Some(p) => p.to_path_buf(),
        None => model
            .parent()
            .unwrap_or(Path::new("."))
            .join(PREFERENCES_FILE),
    };
    let prefs = load_preferences::<f64>(&segments)
        .with_context(|| format!("reading segments from {}", segments.display()))?;
    let segs = prefs.segments();
    let refs: Vec<&Segment<f64>> = segs.iter().map(|s| s.as_ref()).collect();
    let rows = export_embeddings(&ck.model, &refs, out)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

pub fn report(dir: &Path, out: Option<PathBuf>) -> CmdResult {
    let out = out.unwrap_or_else(|| dir.join("report.csv"));
    let n = write_report(dir, &out)?;
    println!("wrote {n} rounds to {}", out.display());
    Ok(())
}

pub fn serve(config: &Path, port: u16, seed: Option<u64>, out: Option<PathBuf>) -> CmdResult {
    let mut cfg = load_config(config, seed)?;
    cfg.teacher.mode = TeacherMode::Human;
    cfg.validate()?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-human", cfg.experiment_id)));
    let labeler = Arc::new(HumanLabeler::new(cfg.experiment_id.clone(), cfg.n_total));
    let state = AppState {
        labeler: Arc::clone(&labeler),
        env: cfg.env.clone(),
    };
    let runner = std::thread::spawn(move || {
        let opts = RunOptions {
            labeler: Some(labeler),
            ..Default::default()
        };
        match run_experiment(&cfg, &out, &opts) {
            Ok(Some(fin)) => log::info!(
                "experiment finished: {}",
                serde_json::to_string(&fin).unwrap_or_default()
            ),
            Ok(None) => {}
            Err(e) => log::error!("experiment failed: {e}"),
        }
    });
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        log::info!("labeling service on {}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    drop(runner);
    Ok(())
}
