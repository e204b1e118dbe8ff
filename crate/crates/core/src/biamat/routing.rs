use serde::{Deserialize, Serialize};

use crate::biamat::config::Routing;
use crate::error::{Error, Result};
use crate::models::MultiHeadNet;
use crate::numerics::Tensor;

/// The confidence threshold `ω = π·E[max h_pri(x)]`, computed once after warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    omega: f64,
    frozen_at_epoch: usize,
}

impl ThresholdState {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn frozen_at_epoch(&self) -> usize {
        self.frozen_at_epoch
    }

    /// A threshold that does not come from a network, e.g. for ablations.
    pub fn fixed(omega: f64, frozen_at_epoch: usize) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "omega must be ≥ 0, got {omega}"
            )));
        }
        Ok(Self {
            omega,
            frozen_at_epoch,
        })
    }
}

/// `ω = π · mean confidence` over the rows of `x`.
pub fn freeze_threshold(
    net: &MultiHeadNet,
    x: &Tensor,
    pi: f64,
    epoch: usize,
) -> Result<ThresholdState> {
    if x.rank() != 2 || x.rows() == 0 {
        return Err(Error::InvalidArgument(
            "threshold needs at least one primary sample".into(),
        ));
    }
    let conf = net.confidence(x)?;
    let mean = conf.iter().sum::<f64>() / conf.len() as f64;
    ThresholdState::fixed(pi * mean, epoch)
}

/// Partition of an auxiliary minibatch into the two loss groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingResult {
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    /// `|high| / batch size`; zero for an empty batch.
    pub ratio: f64,
}

impl RoutingResult {
    fn from_mask(is_low: impl Iterator<Item = bool>) -> Self {
        let (mut high, mut low) = (Vec::new(), Vec::new());
        for (i, l) in is_low.enumerate() {
            if l {
                low.push(i);
            } else {
                high.push(i);
            }
        }
        let n = high.len() + low.len();
        let ratio = if n == 0 {
            0.0
        } else {
            high.len() as f64 / n as f64
        };
        Self { high, low, ratio }
    }

    pub fn len(&self) -> usize {
        self.high.len() + self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Disjoint and covering `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.high.iter().chain(&self.low) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Routes each natural auxiliary input: low iff its primary confidence is strictly below ω.
pub fn route(
    net: &MultiHeadNet,
    aux_x: &Tensor,
    threshold: &ThresholdState,
) -> Result<RoutingResult> {
    route_with(net, aux_x, threshold, Routing::Confidence)
}

pub fn route_with(
    net: &MultiHeadNet,
    aux_x: &Tensor,
    threshold: &ThresholdState,
    policy: Routing,
) -> Result<RoutingResult> {
    let n = aux_x.rows();
    let result = match policy {
        Routing::Confidence if n == 0 => RoutingResult::from_mask(std::iter::empty()),
        Routing::Confidence => {
            let conf = net.confidence(aux_x)?;
            RoutingResult::from_mask(conf.into_iter().map(|c| c < threshold.omega))
        }
        Routing::ForceHigh => RoutingResult::from_mask(std::iter::repeat_n(false, n)),
        Routing::ForceLow => RoutingResult::from_mask(std::iter::repeat_n(true, n)),
    };
    debug_assert!(result.is_partition_of(n));
    Ok(result)
}

/// The expectation of a random label over `c` primary classes, `[1/c, …, 1/c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct YerLabel {
    probs: Vec<f64>,
}

impl YerLabel {
    pub fn new(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "uniform label needs at least 2 classes, got {classes}"
            )));
        }
        Ok(Self {
            probs: vec![1.0 / classes as f64; classes],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `rows × c` matrix with this label in every row.
    pub fn batch(&self, rows: usize) -> Tensor {
        let mut t = Tensor::zeros(&[rows, self.probs.len()]);
        for i in 0..rows {
            t.row_mut(i).copy_from_slice(&self.probs);
        }
        t
    }
}
