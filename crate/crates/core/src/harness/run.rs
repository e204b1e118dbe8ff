//! The work behind each CLI subcommand, as library calls.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::biamat::{train_observed, TrainOutcome};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gaussmodel::{
    verify_lemma2, verify_theorem1, verify_theorem2, verify_theorem3, verify_yer, TheoremReport,
};
use crate::harness::config::{ExperimentConfig, TheoryConfig};
use crate::harness::eval::{attack_name, evaluate_robustness};
use crate::harness::idx::{load_idx, write_idx_f64, write_idx_labels};
use crate::harness::metrics::MetricsWriter;
use crate::harness::robust::build_robust_dataset;
use crate::models::{self, MultiHeadNet};

/// Every theorem check at the configured parameters, each with a distinct file stem.
pub fn verify_theory(cfg: &TheoryConfig) -> Result<Vec<(String, TheoremReport)>> {
    let p = cfg.params;
    let sign_params = p.with_lambda(cfg.lambda_sign);
    let mut out = vec![
        ("lemma2".to_string(), verify_lemma2(&p, cfg.n, cfg.seed)?),
        (
            "theorem1".to_string(),
            verify_theorem1(&p, cfg.n, cfg.seed)?,
        ),
    ];
    for &g in &cfg.weak_gammas {
        out.push((
            format!("theorem1_weak_gamma_{g}"),
            verify_theorem1(&p.with_gamma(g), cfg.n, cfg.seed)?,
        ));
    }
    out.push((
        "theorem2".into(),
        verify_theorem2(&sign_params, cfg.n, cfg.seed)?,
    ));
    out.push((
        "theorem3".into(),
        verify_theorem3(&sign_params, cfg.robust_weight, cfg.n, cfg.seed)?,
    ));
    out.push(("yer".into(), verify_yer(&sign_params, cfg.n, cfg.seed)?));
    Ok(out)
}

/// Writes `<stem>.json` per report.
pub fn write_reports(reports: &[(String, TheoremReport)], out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    reports
        .iter()
        .map(|(stem, r)| {
            let path = out.join(format!("{stem}.json"));
            let text = serde_json::to_string_pretty(r)?;
            std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

pub fn read_report(path: impl AsRef<Path>) -> Result<TheoremReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug)]
pub struct TrainArtifacts {
    pub metrics: PathBuf,
    pub best: PathBuf,
    pub last: PathBuf,
    pub config: PathBuf,
    pub outcome: TrainOutcome,
}

/// Trains per `cfg`, writing `config.cfg`, `metrics.jsonl` (streamed), `best.ckpt` and
/// `last.ckpt` into `out`.
pub fn run_train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainArtifacts> {
    let data = cfg.data()?;
    let net = MultiHeadNet::new(cfg.architecture(&data), cfg.model.seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config = out.join("config.cfg");
    cfg.save(&config)?;
    let metrics = out.join("metrics.jsonl");
    let mut writer = MetricsWriter::create(&metrics)?;
    let outcome = train_observed(
        &net,
        &data.primary,
        data.aux.as_ref(),
        &data.heldout,
        &cfg.train,
        |r| writer.write(r),
    )?;
    let best = out.join("best.ckpt");
    let last = out.join("last.ckpt");
    models::save(&outcome.best.net, outcome.best.meta, &best)?;
    let last_meta = models::CheckpointMeta {
        epoch: cfg.train.epochs - 1,
        ..outcome.best.meta
    };
    models::save(&outcome.last, last_meta, &last)?;
    Ok(TrainArtifacts {
        metrics,
        best,
        last,
        config,
        outcome,
    })
}

/// One line of `evaluate` output, columns in reporting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub clean: f64,
    pub pgd_attack: String,
    pub pgd: f64,
    pub cw_attack: Option<String>,
    pub cw: Option<f64>,
}

pub fn summarize(
    net: &MultiHeadNet,
    data: &Dataset,
    pgd: &AttackConfig,
    cw: Option<&AttackConfig>,
    seed: u64,
) -> Result<EvalSummary> {
    let mut attacks = vec![pgd.clone()];
    attacks.extend(cw.cloned());
    let t = evaluate_robustness(net, data, &attacks, seed)?;
    Ok(EvalSummary {
        n: data.len(),
        clean: t.clean,
        pgd_attack: attack_name(pgd),
        pgd: t.robust[0].accuracy,
        cw_attack: cw.map(attack_name),
        cw: t.robust.get(1).map(|r| r.accuracy),
    })
}

/// Evaluates a checkpoint on the config's test split with its evaluation attacks.
pub fn run_evaluate(ckpt: &Path, cfg: &ExperimentConfig) -> Result<EvalSummary> {
    let c = models::load(ckpt)?;
    cfg.test.validate()?;
    let test = crate::harness::dataset::generate_dataset(&cfg.test)?;
    summarize(
        &c.net,
        &test,
        &cfg.train.eval.pgd,
        cfg.train.eval.cw.as_ref(),
        cfg.train.seed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustObjectives {
    pub initial: Vec<f64>,
    pub final_: Vec<f64>,
}

/// Builds a robust dataset from the config's primary split and writes `robust_x.idx`,
/// `robust_y.idx` and `objectives.json`.
pub fn run_robust_dataset(
    ckpt: &Path,
    cfg: &ExperimentConfig,
    steps: usize,
    step_size: f64,
    seed: u64,
    out: &Path,
) -> Result<(Dataset, PathBuf, PathBuf)> {
    let c = models::load(ckpt)?;
    cfg.primary.validate()?;
    let data = crate::harness::dataset::generate_dataset(&cfg.primary)?;
    let r = build_robust_dataset(&c.net, &data, steps, step_size, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let xp = out.join("robust_x.idx");
    let yp = out.join("robust_y.idx");
    write_idx_f64(&xp, r.data.x())?;
    write_idx_labels(&yp, r.data.labels())?;
    let obj = RobustObjectives {
        initial: r.initial_objective,
        final_: r.final_objective,
    };
    let op = out.join("objectives.json");
    std::fs::write(&op, serde_json::to_string(&obj)? + "\n").map_err(|e| Error::io(&op, e))?;
    // Read back through the importer so the written pair is known to load.
    let (x, labels) = load_idx(&xp, &yp)?;
    Ok((Dataset::new(x, labels, data.classes())?, xp, yp))
}
