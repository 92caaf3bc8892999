pub mod autodiff;
pub mod controller;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod harness;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod space;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type ChildModel64 = gnn::ChildModel<f64>;
pub type ChildModel32 = gnn::ChildModel<f32>;
pub type Controller64 = controller::Controller<f64>;
pub type Controller32 = controller::Controller<f32>;
