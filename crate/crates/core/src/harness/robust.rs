//! Robust-dataset construction: for every sample `x`, find `x_r` whose trunk embedding
//! matches `g(x)` by plain gradient descent on `½‖g(x_r) − g(x)‖²`, starting from a
//! different randomly chosen sample, and pair it with `x`'s label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::MultiHeadNet;

/// Rows optimized together.
const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct RobustDataset {
    pub data: Dataset,
    /// Objective at the starting point, per sample.
    pub initial_objective: Vec<f64>,
    /// Objective at the returned `x_r`, per sample.
    pub final_objective: Vec<f64>,
}

pub fn build_robust_dataset(
    net: &MultiHeadNet,
    dataset: &Dataset,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<RobustDataset> {
    build_robust_dataset_observed(net, dataset, steps, step_size, seed, |_, _| {})
}

/// As [`build_robust_dataset`]; `observe(first_row, objectives)` sees every chunk's
/// objectives before each step and after the last one.
pub fn build_robust_dataset_observed<F>(
    net: &MultiHeadNet,
    dataset: &Dataset,
    steps: usize,
    step_size: f64,
    seed: u64,
    mut observe: F,
) -> Result<RobustDataset>
where
    F: FnMut(usize, &[f64]),
{
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "robust dataset needs at least one step".into(),
        ));
    }
    if !(step_size > 0.0 && step_size.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {step_size}"
        )));
    }
    let n = dataset.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // A uniformly chosen index other than i (i itself only for a single-sample set).
    let starts: Vec<usize> = (0..n)
        .map(|i| {
            if n < 2 {
                return i;
            }
            let j = rng.random_range(0..n - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(n * dataset.width());
    let mut initial = Vec::with_capacity(n);
    let mut last = Vec::with_capacity(n);
    for first in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (first..(first + CHUNK).min(n)).collect();
        let target = net.embed(&dataset.x().select_rows(&idx))?;
        let from: Vec<usize> = idx.iter().map(|&i| starts[i]).collect();
        let mut xr = dataset.x().select_rows(&from);
        let mut objective = Vec::new();
        for step in 0..=steps {
            let (obj, grad) = net.embedding_match_grad(&xr, &target)?;
            observe(first, &obj);
            if step == 0 {
                initial.extend_from_slice(&obj);
            }
            if step == steps {
                objective = obj;
                break;
            }
            xr.axpy(-step_size, &grad)?;
            xr.ensure_finite("build_robust_dataset")?;
        }
        last.extend_from_slice(&objective);
        rows.extend_from_slice(xr.data());
    }
    let x = crate::numerics::Tensor::matrix(n, dataset.width(), rows)?;
    Ok(RobustDataset {
        data: Dataset::new(x, dataset.labels().to_vec(), dataset.classes())?,
        initial_objective: initial,
        final_objective: last,
    })
}
