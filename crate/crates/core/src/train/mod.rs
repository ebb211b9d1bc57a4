//! Joint training of the concept heads, aleatoric head and classifier, plus
//! eval-mode inference.

mod infer;
mod loss;
mod optim;
mod trainer;

pub use infer::{accuracy, infer, infer_dataset, Inference, Predictor};
pub use loss::{
    backward, draw_masks, loss_and_gradients, total_loss, trainable_slices_mut, uncertainty_target,
    uncertainty_targets, Gradients, LossBreakdown, Masks, MIN_SCALE, PROB_EPS,
};
pub use optim::{adamw_model_step, adamw_step, AdamWParams, OptimizerState, ADAM_EPS, BETA1, BETA2};
pub use trainer::{train_model, EpochRecord, TrainOutcome};
