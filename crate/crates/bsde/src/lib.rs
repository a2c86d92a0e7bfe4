//! Deep BSDE solver: per-step networks stacked along an Euler–Maruyama path,
//! trained on the terminal mismatch with interchangeable gradient estimators.

pub mod gradient;
pub mod hybrid;
pub mod model;
pub mod pipeline;
pub mod problem;
pub mod reference;
pub mod rollout;
pub mod train;

pub use gradient::{estimate_gradient, Estimator, GradientEstimate};
pub use hybrid::{experiment_configs, hybrid_forward, hybrid_gradient, pqc_only_model, HybridLayout, HybridNet};
pub use model::{Architecture, BsdeModel, StepNet};
pub use pipeline::{pipeline_oracle_costs, MicroPipeline};
pub use problem::{make_allen_cahn, make_black_scholes_default, make_hjb, make_linear, PdeProblem};
pub use reference::{hjb_cole_hopf_mc, hjb_reference};
pub use rollout::{loss_batch, rollout, Rollout};
pub use train::{train, LossHistory, LossRecord, TrainConfig};
