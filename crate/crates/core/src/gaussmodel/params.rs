use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the Gaussian feature model.
///
/// Feature 1 is robust, features `2..=d+1` are non-robust with mean magnitude `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Number of non-robust features.
    pub d: usize,
    /// Mean magnitude of each non-robust feature.
    pub eta: f64,
    /// Per-coordinate adversarial step in feature space.
    pub lambda: f64,
    /// Correlation between primary and auxiliary task, in `[-1, 1] \ {0}`.
    pub gamma: f64,
    /// Standard deviation of the primary robust feature.
    pub u: f64,
    /// Standard deviation of the auxiliary robust feature.
    pub v: f64,
    /// Probability that the binary robust feature agrees with the label.
    pub p: f64,
}

impl Default for TheoryParams {
    fn default() -> Self {
        Self {
            d: 100,
            eta: 0.05,
            lambda: 0.2,
            gamma: 1.0,
            u: 0.25,
            v: 0.25,
            p: 0.9,
        }
    }
}

impl TheoryParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.eta > 0.0 && self.eta < self.lambda && self.lambda < 1.0) {
            return bad(format!(
                "need 0 < eta < lambda < 1, got eta={} lambda={}",
                self.eta, self.lambda
            ));
        }
        if self.gamma == 0.0 || !(-1.0..=1.0).contains(&self.gamma) {
            return bad(format!(
                "gamma must lie in [-1, 1] without 0, got {}",
                self.gamma
            ));
        }
        if !(self.u > 0.0 && self.v > 0.0) || !self.u.is_finite() || !self.v.is_finite() {
            return bad(format!(
                "u and v must be positive, got u={} v={}",
                self.u, self.v
            ));
        }
        if !(0.5..=1.0).contains(&self.p) {
            return bad(format!("p must lie in [0.5, 1], got {}", self.p));
        }
        Ok(())
    }

    pub fn gamma_sign(&self) -> f64 {
        self.gamma.signum()
    }

    pub fn has_unit_correlation(&self) -> bool {
        (self.gamma.abs() - 1.0).abs() < 1e-12
    }

    pub(crate) fn require_unit_correlation(&self, what: &str) -> Result<()> {
        if self.has_unit_correlation() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{what} requires |gamma| = 1, got {}",
                self.gamma
            )))
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }
}
