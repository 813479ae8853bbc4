pub mod autodiff;
pub mod baselines;
pub mod commands;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod recurrent;
pub mod report;
pub mod runconfig;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
