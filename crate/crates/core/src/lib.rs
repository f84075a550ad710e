//! Agnostic learning of single-index models and generalized linear models
//! through matching losses and calibrated multiaccuracy.
//!
//! * [`fenchel`]: activations, links, matching losses and Bregman divergences.
//! * [`synth`]: synthetic marginals, planted label models and dataset files.
//! * [`learners`]: the linear weak learner, the omnipredictor, GLMtron,
//!   Isotron and projected matching-loss descent.
//! * [`transfer`]: error metrics and checks of the error-transfer bounds.

pub mod fenchel;
pub mod linalg;
pub mod synth;
pub mod learners;
pub mod transfer;
