//! Robust-dataset construction: match trunk embeddings by gradient descent on the input.

use biamat::biamat::train;
use biamat::harness::config::ExperimentConfig;
use biamat::harness::robust::build_robust_dataset;
use biamat::models::MultiHeadNet;

fn main() -> biamat::Result<()> {
    let mut cfg = ExperimentConfig::toy();
    cfg.train.epochs = 8;
    let data = cfg.data()?;
    let net = MultiHeadNet::new(cfg.architecture(&data), 0)?;
    let trained = train(
        &net,
        &data.primary,
        data.aux.as_ref(),
        &data.heldout,
        &cfg.train,
    )?
    .best
    .net;
    let r = build_robust_dataset(&trained, &data.primary, 500, 0.1, 0)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "{} samples, mean embedding mismatch {:.4} -> {:.6}",
        r.data.len(),
        mean(&r.initial_objective),
        mean(&r.final_objective)
    );
    Ok(())
}
