//! Convolutional network engine: layers, network assembly, training and
//! gradient verification.

pub mod conv;
pub mod gradcheck;
pub mod head;
pub mod lrn;
pub mod network;
pub mod pool;
pub mod relu;
pub mod spec;
pub mod train;

pub use conv::{conv_backward, conv_forward, conv_forward_cached, ConvCache, ConvGrads};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckOptions, GradCheckReport, Offender};
pub use head::{classify, cross_entropy, fc_forward, head_forward, softmax};
pub use lrn::{lrn_backward, lrn_backward_from_input, lrn_forward, lrn_forward_cached, LrnCache};
pub use network::{Gradients, Network, ParamTensor, Trace};
pub use pool::{maxpool_backward, maxpool_forward, PoolArgmax};
pub use relu::{relu_backward, relu_forward};
pub use spec::{ArchitectureSpec, BlockSpec, ConvSpec, InputShape, LayerKind, LayerShape, LrnSpec, PoolSpec};
pub use train::{train, train_step, Sgd, TrainConfig, TrainOutcome};
