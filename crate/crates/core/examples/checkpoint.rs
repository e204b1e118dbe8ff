//! Save a network, load it back, and confirm the bytes describe the same model.

use biamat::models::{load, save, Architecture, CheckpointMeta, MultiHeadNet};

fn main() -> biamat::Result<()> {
    let net = MultiHeadNet::new(Architecture::desk(52), 3)?;
    let path = std::env::temp_dir().join("biamat-example.ckpt");
    let meta = CheckpointMeta {
        epoch: 7,
        robust_accuracy: 0.5,
        seed: 3,
    };
    save(&net, meta, &path)?;
    let back = load(&path)?;
    assert_eq!(back.net, net);
    println!(
        "{} bytes, meta {:?}",
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        back.meta
    );
    Ok(())
}
