//! Dense `f64` kernels shared by the backbone and the aggregation stages.

mod attention;
pub mod gradcheck;
mod ops;
mod tensor;

pub use attention::{
    attention_backward, scaled_dot_attention, AttentionGrads, AttentionTrace, MhaForward,
    MhaGrads, MultiHeadAttention, ScaleMode,
};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use ops::{
    affine, affine_backward, conv1d, relu, sigmoid, softmax_rows, AffineGrads, Conv1d, GluConv,
    Linear,
};
pub use tensor::Tensor;
