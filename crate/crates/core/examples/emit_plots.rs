//! Train briefly with a streamed metrics file, then turn it into CSV series.

use biamat::harness::config::ExperimentConfig;
use biamat::harness::metrics::{emit_plots, read_plot_csv};
use biamat::harness::run::run_train;

fn main() -> biamat::Result<()> {
    let dir = std::env::temp_dir().join("biamat-emit-plots");
    let mut cfg = ExperimentConfig::toy();
    cfg.train.epochs = 4;
    let artifacts = run_train(&cfg, &dir)?;
    for path in emit_plots(&artifacts.metrics, dir.join("plots"))? {
        let rows = read_plot_csv(&path)?;
        let defined = rows.iter().filter(|(_, v)| v.is_some()).count();
        println!(
            "{} ({defined}/{} steps defined)",
            path.display(),
            rows.len()
        );
    }
    Ok(())
}
