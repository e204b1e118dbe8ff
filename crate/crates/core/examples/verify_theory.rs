//! Monte Carlo checks of the Gaussian feature model at reduced sample size.
//!
//! `cargo run --release --example verify_theory`

use biamat::harness::config::TheoryConfig;
use biamat::harness::run::verify_theory;

fn main() -> biamat::Result<()> {
    let cfg = TheoryConfig {
        n: 50_000,
        ..TheoryConfig::default()
    };
    for (stem, report) in verify_theory(&cfg)? {
        print!("{stem}: {}", report.summary());
    }
    Ok(())
}
