//! The Gaussian feature-space model: samplers, the logistic classifiers, the one-step
//! feature adversary, and Monte Carlo verifiers that compare against closed forms.

mod classifier;
mod params;
pub mod report;
mod sampling;
pub mod stats;
pub mod verify;

pub use classifier::{feature_adversary, feature_adversary_into, AttackLabel, LinearClassifier};
pub use params::TheoryParams;
pub use report::{Check, Rule, TheoremReport};
pub use sampling::{
    sample_auxiliary, sample_primary, sample_shuffled, sample_tsipras, FeatureSample,
    FeatureStream, LabeledPoint, Role, SampleKind,
};
pub use verify::{
    standard_accuracy, verify_lemma2, verify_theorem1, verify_theorem2, verify_theorem3,
    verify_yer, HIGH_PROBABILITY,
};
