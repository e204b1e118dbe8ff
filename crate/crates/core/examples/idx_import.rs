//! Write a generated dataset as IDX files and load it back through the importer.

use biamat::harness::config::toy_params;
use biamat::harness::dataset::{generate_dataset, DatasetKind, DatasetSpec};
use biamat::harness::idx::{write_idx_f64, write_idx_labels};

fn main() -> biamat::Result<()> {
    let dir = std::env::temp_dir();
    let data = generate_dataset(&DatasetSpec::gauss(
        DatasetKind::GaussPrimary,
        toy_params(),
        100,
        1,
    ))?;
    let (xp, yp) = (dir.join("biamat-x.idx"), dir.join("biamat-y.idx"));
    write_idx_f64(&xp, data.x())?;
    write_idx_labels(&yp, data.labels())?;
    let back = generate_dataset(&DatasetSpec::idx(&xp, &yp, 2))?;
    println!(
        "{} x {} loaded, identical: {}",
        back.len(),
        back.width(),
        back.x().bitwise_eq(data.x())
    );
    Ok(())
}
