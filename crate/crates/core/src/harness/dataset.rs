//! Synthetic datasets over the Gaussian feature model, plus IDX ingestion.
//!
//! Synthetic inputs have width `d + 2`:
//!
//! | column | content |
//! |---|---|
//! | 0 | the primary robust feature `z₁` (0 for conflicting samples) |
//! | 1 | an extraneous robust feature only conflicting samples carry (0 elsewhere) |
//! | 2.. | the `d` non-robust features |
//!
//! Labels `±1` map to classes `0` (−1) and `1` (+1).

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gaussmodel::{FeatureStream, Role, SampleKind, TheoryParams};
use crate::harness::idx::load_idx;
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    GaussPrimary,
    GaussAuxiliary,
    GaussShuffled,
    /// Label-informative extraneous robust feature plus the primary task's non-robust
    /// features: shares only non-robust features with the primary data.
    GaussConflicting,
    IdxImport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub params: TheoryParams,
    pub classes: usize,
    pub n: usize,
    pub seed: u64,
    /// IDX data file (`idx-import` only).
    pub path: Option<PathBuf>,
    /// IDX label file (`idx-import` only).
    pub labels: Option<PathBuf>,
}

impl DatasetSpec {
    pub fn gauss(kind: DatasetKind, params: TheoryParams, n: usize, seed: u64) -> Self {
        Self {
            kind,
            params,
            classes: 2,
            n,
            seed,
            path: None,
            labels: None,
        }
    }

    pub fn idx(path: impl Into<PathBuf>, labels: impl Into<PathBuf>, classes: usize) -> Self {
        Self {
            kind: DatasetKind::IdxImport,
            params: TheoryParams::default(),
            classes,
            n: 0,
            seed: 0,
            path: Some(path.into()),
            labels: Some(labels.into()),
        }
    }

    /// Input width of the generated data, when known without reading files.
    pub fn width(&self) -> Option<usize> {
        (self.kind != DatasetKind::IdxImport).then_some(self.params.d + 2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.kind == DatasetKind::IdxImport {
            if self.path.is_none() || self.labels.is_none() {
                return bad("idx-import needs both path and labels".into());
            }
            if self.classes < 2 {
                return bad(format!("need at least 2 classes, got {}", self.classes));
            }
            return Ok(());
        }
        self.params.validate()?;
        if self.classes != 2 {
            return bad(format!(
                "Gaussian datasets are binary, got classes = {}",
                self.classes
            ));
        }
        if self.n == 0 {
            return bad("sample count must be positive".into());
        }
        Ok(())
    }
}

fn class_of(s: i8) -> usize {
    usize::from(s > 0)
}

fn sign<R: Rng>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

fn from_stream(spec: &DatasetSpec, kind: SampleKind) -> Result<Dataset> {
    let d = spec.params.d;
    let width = d + 2;
    let mut stream = FeatureStream::new(spec.params, kind, spec.seed)?;
    let mut x = vec![0.0; spec.n * width];
    let mut labels = Vec::with_capacity(spec.n);
    let mut z = vec![0.0; d + 1];
    for row in x.chunks_exact_mut(width) {
        let (y, role) = stream.next_into(&mut z);
        row[0] = z[0];
        row[2..].copy_from_slice(&z[1..]);
        let label = match role {
            Role::Primary => y,
            Role::Auxiliary { label } => label,
            Role::Shuffled { q } => q,
        };
        labels.push(class_of(label));
    }
    Dataset::new(Tensor::matrix(spec.n, width, x)?, labels, 2)
}

fn conflicting(spec: &DatasetSpec) -> Result<Dataset> {
    let p = &spec.params;
    let width = p.d + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = vec![0.0; spec.n * width];
    let mut labels = Vec::with_capacity(spec.n);
    for row in x.chunks_exact_mut(width) {
        let y = f64::from(sign(&mut rng));
        let conf = sign(&mut rng);
        let n1: f64 = rng.sample(StandardNormal);
        row[1] = f64::from(conf) + p.v * n1;
        for xi in &mut row[2..] {
            let n: f64 = rng.sample(StandardNormal);
            *xi = p.eta * y + n;
        }
        labels.push(class_of(conf));
    }
    Dataset::new(Tensor::matrix(spec.n, width, x)?, labels, 2)
}

/// Materializes a dataset. Synthetic kinds are a pure function of `(kind, params, n, seed)`.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    match spec.kind {
        DatasetKind::GaussPrimary => from_stream(spec, SampleKind::Primary),
        DatasetKind::GaussAuxiliary => from_stream(spec, SampleKind::Auxiliary),
        DatasetKind::GaussShuffled => from_stream(spec, SampleKind::Shuffled),
        DatasetKind::GaussConflicting => conflicting(spec),
        DatasetKind::IdxImport => {
            let (x, labels) = load_idx(
                spec.path.as_ref().expect("validated"),
                spec.labels.as_ref().expect("validated"),
            )?;
            let data = Dataset::new(x, labels, spec.classes)?;
            if spec.n > 0 && spec.n < data.len() {
                let idx: Vec<usize> = (0..spec.n).collect();
                return Ok(data.subset(&idx));
            }
            Ok(data)
        }
    }
}
