//! Layers, graph description, forward/backward execution and the
//! MobileNetV2-style classifier.

mod builder;
mod exec;
pub mod gradcheck;
mod graph;
pub mod ops;
mod params;
mod tensor;

pub use builder::{build_graph, build_micro_mobilenet, dense_init_limit, init_params, make_divisible, Architecture, Stage, BN_EPS};
pub use exec::{
    backward_from, backward_layers, forward, forward_checked, forward_layers, forward_layers_train, forward_train,
    update_running_stats, Mode, Trace,
};
pub use graph::{ActShape, InputSpec, InvertedResidual, Layer, LayerCost, ModelGraph, ParamRole, ParamSpec};
pub use params::ParameterSet;
pub use tensor::{Scalar, Tensor};

/// Running-statistic momentum for batch normalization.
pub const BN_MOMENTUM: f64 = 0.9;
