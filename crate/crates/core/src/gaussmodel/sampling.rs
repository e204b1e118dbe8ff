//! Samplers for the binary feature-space data models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gaussmodel::TheoryParams;

/// Which distribution a sample was drawn from, carrying the labels that distribution defines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Primary,
    /// Auxiliary sample with label `sign(gamma) * y`.
    Auxiliary {
        label: i8,
    },
    /// Auxiliary features with a label `q` drawn independently of `y`.
    Shuffled {
        q: i8,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    /// `z[0]` is the robust feature, `z[1..]` the non-robust ones.
    pub z: Vec<f64>,
    pub y: i8,
    pub role: Role,
}

impl FeatureSample {
    pub fn aux_label(&self) -> Option<i8> {
        match self.role {
            Role::Auxiliary { label } => Some(label),
            _ => None,
        }
    }

    pub fn shuffle_label(&self) -> Option<i8> {
        match self.role {
            Role::Shuffled { q } => Some(q),
            _ => None,
        }
    }

    /// The label the sample is trained on: `y`, `ỹ` or `q` depending on its role.
    pub fn task_label(&self) -> i8 {
        match self.role {
            Role::Primary => self.y,
            Role::Auxiliary { label } => label,
            Role::Shuffled { q } => q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Primary,
    Auxiliary,
    Shuffled,
}

fn sign_label<R: Rng>(rng: &mut R) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

/// Endless stream of i.i.d. feature samples of one kind.
///
/// Draw order per sample is fixed (label, robust feature, non-robust features, then
/// the shuffled label), so a seed fully determines the stream.
pub struct FeatureStream {
    rng: ChaCha8Rng,
    params: TheoryParams,
    kind: SampleKind,
}

impl FeatureStream {
    pub fn new(params: TheoryParams, kind: SampleKind, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params,
            kind,
        })
    }

    /// Writes the next sample's features into `z` (length `d + 1`) and returns `(y, role)`.
    pub fn next_into(&mut self, z: &mut [f64]) -> (i8, Role) {
        debug_assert_eq!(z.len(), self.params.d + 1);
        let p = &self.params;
        let y = sign_label(&mut self.rng);
        let yf = f64::from(y);
        let (robust_mean, robust_sd, nonrobust_mean) = match self.kind {
            SampleKind::Primary => (yf, p.u, p.eta * yf),
            SampleKind::Auxiliary | SampleKind::Shuffled => {
                let g = p.gamma.abs();
                (yf * g, p.v, p.eta * yf * g)
            }
        };
        let n0: f64 = self.rng.sample(StandardNormal);
        z[0] = robust_mean + robust_sd * n0;
        for zi in &mut z[1..] {
            let n: f64 = self.rng.sample(StandardNormal);
            *zi = nonrobust_mean + n;
        }
        let role = match self.kind {
            SampleKind::Primary => Role::Primary,
            SampleKind::Auxiliary => Role::Auxiliary {
                label: (p.gamma.signum() as i8) * y,
            },
            SampleKind::Shuffled => Role::Shuffled {
                q: sign_label(&mut self.rng),
            },
        };
        (y, role)
    }
}

impl Iterator for FeatureStream {
    type Item = FeatureSample;

    fn next(&mut self) -> Option<FeatureSample> {
        let mut z = vec![0.0; self.params.d + 1];
        let (y, role) = self.next_into(&mut z);
        Some(FeatureSample { z, y, role })
    }
}

fn collect(
    params: &TheoryParams,
    kind: SampleKind,
    n: usize,
    seed: u64,
) -> Result<Vec<FeatureSample>> {
    Ok(FeatureStream::new(*params, kind, seed)?.take(n).collect())
}

/// `y` uniform on ±1, `z₁ ~ N(y, u²)`, `z_i ~ N(ηy, 1)`.
pub fn sample_primary(params: &TheoryParams, n: usize, seed: u64) -> Result<Vec<FeatureSample>> {
    collect(params, SampleKind::Primary, n, seed)
}

/// `z̃₁ ~ N(y|γ|, v²)`, `z̃_i ~ N(ηy|γ|, 1)`, labelled `ỹ = sign(γ)·y`.
pub fn sample_auxiliary(params: &TheoryParams, n: usize, seed: u64) -> Result<Vec<FeatureSample>> {
    collect(params, SampleKind::Auxiliary, n, seed)
}

/// Auxiliary features with the label replaced by an independent uniform `q`.
pub fn sample_shuffled(params: &TheoryParams, n: usize, seed: u64) -> Result<Vec<FeatureSample>> {
    collect(params, SampleKind::Shuffled, n, seed)
}

/// A sample of the binary-robust-feature model: `x₁ = ±y` with probability `p` / `1-p`,
/// `x_i ~ N(ηy, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub y: i8,
}

pub fn sample_tsipras(params: &TheoryParams, n: usize, seed: u64) -> Result<Vec<LabeledPoint>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let y = sign_label(&mut rng);
        let yf = f64::from(y);
        let mut x = Vec::with_capacity(params.d + 1);
        let agree = rng.random::<f64>() < params.p;
        x.push(if agree { yf } else { -yf });
        for _ in 0..params.d {
            let e: f64 = rng.sample(StandardNormal);
            x.push(params.eta * yf + e);
        }
        out.push(LabeledPoint { x, y });
    }
    Ok(out)
}
