use crate::error::{Error, Result};
use crate::gaussmodel::TheoryParams;
use crate::numerics::ops::{sigmoid_scalar, sign};

/// Logistic classifier `p(+1 | z) = σ(γ·wᵀz)` over the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub w: Vec<f64>,
    /// Scale applied to the logit; `1` for the primary head, `γ` for the auxiliary one.
    pub gamma_scale: f64,
}

impl LinearClassifier {
    /// `w = [0, 1/d, …, 1/d]`.
    pub fn uniform(d: usize) -> Self {
        let mut w = vec![1.0 / d as f64; d + 1];
        w[0] = 0.0;
        Self {
            w,
            gamma_scale: 1.0,
        }
    }

    /// The uniform weights with a positive weight on the robust feature.
    pub fn with_robust_weight(d: usize, w1: f64) -> Result<Self> {
        if !(w1 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "robust weight must be positive, got {w1}"
            )));
        }
        let mut c = Self::uniform(d);
        c.w[0] = w1;
        Ok(c)
    }

    pub fn scaled(mut self, gamma: f64) -> Self {
        self.gamma_scale = gamma;
        self
    }

    pub fn logit(&self, z: &[f64]) -> f64 {
        self.gamma_scale * self.w.iter().zip(z).map(|(w, z)| w * z).sum::<f64>()
    }

    /// Gradient of `BCE(σ(γwᵀz), target)` with respect to `z`: `γ·w·(σ − target)`.
    pub fn loss_grad_into(&self, z: &[f64], target: f64, out: &mut [f64]) {
        let r = sigmoid_scalar(self.logit(z)) - target;
        let scale = self.gamma_scale * r;
        for (o, w) in out.iter_mut().zip(&self.w) {
            *o = scale * w;
        }
    }

    pub fn loss_grad(&self, z: &[f64], target: f64) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.loss_grad_into(z, target, &mut out);
        out
    }
}

/// Label the feature-space adversary attacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackLabel {
    /// A ±1 label, turned into the binary target `(label + 1) / 2`.
    Binary(i8),
    /// The uniform target `1/2` (expectation of a random label).
    Uniform,
}

impl AttackLabel {
    pub fn target(self) -> f64 {
        match self {
            AttackLabel::Binary(l) => (f64::from(l) + 1.0) / 2.0,
            AttackLabel::Uniform => 0.5,
        }
    }
}

/// One signed step of size `λ` along the loss gradient: `z + λ·sign(∇_z ℓ)`,
/// with `sign(0) = 0`. Writes the result into `out`.
pub fn feature_adversary_into(
    z: &[f64],
    classifier: &LinearClassifier,
    label: AttackLabel,
    lambda: f64,
    out: &mut [f64],
) {
    classifier.loss_grad_into(z, label.target(), out);
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = zi + lambda * sign(*o);
    }
}

pub fn feature_adversary(
    z: &[f64],
    classifier: &LinearClassifier,
    label: AttackLabel,
    params: &TheoryParams,
) -> Result<Vec<f64>> {
    if !(params.eta < params.lambda && params.lambda < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda {} outside (eta, 1) = ({}, 1)",
            params.lambda, params.eta
        )));
    }
    if z.len() != classifier.w.len() {
        return Err(Error::shape(
            "feature_adversary",
            format!("{} features vs {} weights", z.len(), classifier.w.len()),
        ));
    }
    let mut out = vec![0.0; z.len()];
    feature_adversary_into(z, classifier, label, params.lambda, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussmodel::sample_auxiliary;

    #[test]
    fn uniform_classifier_pushes_nonrobust_features_against_the_label() {
        let params = TheoryParams::default().with_d(10);
        let clf = LinearClassifier::uniform(params.d).scaled(params.gamma);
        for s in sample_auxiliary(&params, 500, 1).unwrap() {
            let adv = feature_adversary(
                &s.z,
                &clf,
                AttackLabel::Binary(s.aux_label().unwrap()),
                &params,
            )
            .unwrap();
            // w₁ = 0 leaves the robust coordinate untouched.
            assert_eq!(adv[0], s.z[0]);
            for i in 1..=params.d {
                assert_eq!(adv[i], s.z[i] - params.lambda * f64::from(s.y));
            }
        }
    }

    #[test]
    fn perturbation_stays_in_the_lambda_box() {
        let params = TheoryParams::default().with_d(20).with_gamma(-0.5);
        let clf = LinearClassifier::with_robust_weight(params.d, 0.3)
            .unwrap()
            .scaled(params.gamma);
        for s in sample_auxiliary(&params, 200, 2).unwrap() {
            let adv = feature_adversary(&s.z, &clf, AttackLabel::Uniform, &params).unwrap();
            let dist = adv
                .iter()
                .zip(&s.z)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dist <= params.lambda * (1.0 + 1e-12), "{dist}");
        }
    }

    #[test]
    fn rejects_lambda_outside_range() {
        let params = TheoryParams {
            lambda: 0.01,
            ..Default::default()
        };
        let clf = LinearClassifier::uniform(params.d);
        let z = vec![0.0; params.d + 1];
        assert!(feature_adversary(&z, &clf, AttackLabel::Binary(1), &params).is_err());
    }

    #[test]
    fn robust_weight_must_be_positive() {
        assert!(LinearClassifier::with_robust_weight(5, 0.0).is_err());
        assert!(LinearClassifier::with_robust_weight(5, -1.0).is_err());
    }
}
