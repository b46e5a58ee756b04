//! Differentiable building blocks shared by every block of the network.

mod conv;
mod norm;
mod ops;

pub use conv::{conv3d, conv_macs, dynamic_depthwise_conv, ConvSpec};
pub use norm::{
    batch_norm, layer_norm, layer_norm_channels, BnBatchStats, BnMode, BnRunning, BN_EPS, BN_MOMENTUM, LN_EPS,
};
pub use ops::{dropout, pool, softmax_spatial, upsample_trilinear, Activation, Pool};
