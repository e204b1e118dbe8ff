//! The biased multi-domain objective and its training loop: warm-up, a confidence
//! threshold frozen once, per-sample routing of auxiliary data, and the combined update.

pub mod config;
pub mod loss;
pub mod routing;
pub mod train;

pub use config::{
    AuxLoss, EvalConfig, LrSchedule, PrimaryLoss, Routing, ThresholdMode, TrainConfig,
};
pub use loss::{
    adversarial_loss, auxiliary_adv_loss, biamat_step, primary_adv_loss, step_gradients, AuxBatch,
    AuxTerms, LossTerm, Sgd, StepGradients, StepRngs,
};
pub use routing::{freeze_threshold, route, route_with, RoutingResult, ThresholdState, YerLabel};
pub use train::{
    train, train_observed, train_with, warmup, TrainObserver, TrainOutcome, TrainRngs,
};
