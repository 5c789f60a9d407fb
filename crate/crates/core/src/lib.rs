pub mod actor;
pub mod arrangement;
pub mod config;
pub mod domain;
pub mod harness;
pub mod learning;
pub mod scalar;
pub mod selector;

pub type ValueModel = learning::LinearValueModel<f64>;
pub type ValueModelF32 = learning::LinearValueModel<f32>;
