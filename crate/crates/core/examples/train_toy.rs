//! BiaMAT against plain adversarial training on the small toy task.
//!
//! `cargo run --release --example train_toy`

use biamat::biamat::train;
use biamat::harness::config::ExperimentConfig;
use biamat::harness::eval::evaluate_robustness;
use biamat::models::MultiHeadNet;

fn main() -> biamat::Result<()> {
    for alpha in [0.0, 1.0] {
        let mut cfg = ExperimentConfig::toy();
        cfg.train.alpha = alpha;
        let data = cfg.data()?;
        let net = MultiHeadNet::new(cfg.architecture(&data), cfg.model.seed)?;
        let out = train(
            &net,
            &data.primary,
            data.aux.as_ref(),
            &data.heldout,
            &cfg.train,
        )?;
        let t = evaluate_robustness(&out.best.net, &data.test, &cfg.eval_attacks(), 0)?;
        println!(
            "alpha {alpha}: clean {:.3}  PGD20 {:.3}  CW20 {:.3}  (best epoch {})",
            t.clean, t.robust[0].accuracy, t.robust[1].accuracy, out.best.meta.epoch
        );
    }
    Ok(())
}
