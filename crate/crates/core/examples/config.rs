//! The flat `key = value` experiment format: overrides on top of the defaults.

use biamat::harness::config::ExperimentConfig;

const TEXT: &str = "\
run.name = mixed-aux
train.routing = confidence
train.epochs = 30
aux_extra.kind = gauss-conflicting
aux_extra.n = 1024
";

fn main() -> biamat::Result<()> {
    let cfg = ExperimentConfig::parse(TEXT)?;
    println!(
        "{} epochs, auxiliary {} + {:?}",
        cfg.train.epochs,
        cfg.aux.as_ref().map_or(0, |a| a.n),
        cfg.aux_extra.as_ref().map(|a| (a.kind, a.n))
    );
    print!("{}", cfg.serialize()?);
    Ok(())
}
