//! Path selection: a dual encoder scores question/path pairs and the most
//! similar candidate goes into the planner prompt.

mod encoder;
mod loss;
mod pool;

pub use encoder::{Encoded, EncoderParams, Side, DEFAULT_TEMPERATURE, ENCODER_FORMAT_VERSION};
pub use loss::{
    ft_encodings, ft_loss, ft_step, pt_loss, pt_step, qpa_encodings, qpa_loss, qpm_batch, qpm_encodings, qpm_loss,
    FtItem, LossGrad, PtLoss, QuestionPath,
};
pub use pool::{evaluate_pool, path_scores, select_path, PathPool};
