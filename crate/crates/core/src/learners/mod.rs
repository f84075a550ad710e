//! Training algorithms.

mod descent;
mod glmtron;
mod isotron;
mod omni;
mod predictor;
mod weak;

use thiserror::Error;

use crate::fenchel::FenchelError;

pub use descent::{empirical_matching_loss, matching_loss_gradient, minimize_matching_loss, train_logistic, DescentConfig, MAX_HALVINGS};
pub use glmtron::{glmtron_step, train_glmtron, GlmtronConfig};
pub use isotron::{isotron_err2, lipschitz_isotonic, train_isotron, IsotronConfig, MonotoneFit};
pub use omni::{
    calibration_error, multiaccuracy_violation, train_omnipredictor, OmniConfig, DEFAULT_BUCKET_WIDTH, DEFAULT_ROUND_CAP,
    INITIAL_SCORE,
};
pub use predictor::{
    aggregate_updates, bucket_count, bucket_index, CalibrationTable, ConstantPredictor, GlmPredictor, GlmTrace, IsotronPredictor,
    OmniPredictor, OmniRound, OmniTrace, Predict, Predictor, Update, PREDICTOR_HEADER,
};
pub use weak::{
    correlation_vector, weak_learn, LinearWeakLearnerResult, Verdict, WeakLearnerConfig, DEFAULT_FAILURE_PROBABILITY,
    DEFAULT_SAMPLE_CONSTANT,
};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient samples: the weak learner needs at least {required}, got {available}")]
    InsufficientSamples { required: usize, available: usize },
    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },
    #[error("malformed predictor file: {0}")]
    MalformedPredictor(String),
    #[error(transparent)]
    Fenchel(#[from] FenchelError),
}
