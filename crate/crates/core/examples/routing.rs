//! How the frozen confidence threshold splits a mixed auxiliary set: the first half is
//! drawn from the primary distribution, the second shares only non-robust features.

use biamat::biamat::{freeze_threshold, route, warmup};
use biamat::harness::config::ExperimentConfig;
use biamat::models::MultiHeadNet;

fn main() -> biamat::Result<()> {
    let cfg = ExperimentConfig::toy_routing();
    let data = cfg.data()?;
    let aux = data.aux.as_ref().expect("preset has auxiliary data");
    let half = cfg.aux.as_ref().map_or(0, |a| a.n);
    let net = warmup(
        &MultiHeadNet::new(cfg.architecture(&data), 0)?,
        &data.primary,
        &cfg.train,
    )?;
    let threshold = freeze_threshold(&net, data.primary.x(), cfg.train.pi, cfg.train.warmup)?;
    let r = route(&net, aux.x(), &threshold)?;
    let mut high = [0usize; 2];
    for &i in &r.high {
        high[usize::from(i >= half)] += 1;
    }
    println!("omega = {:.4}", threshold.omega());
    println!(
        "high-confidence rate: in-distribution {:.3}, conflicting {:.3}",
        high[0] as f64 / half as f64,
        high[1] as f64 / (aux.len() - half) as f64
    );
    Ok(())
}
