//! Compiler and runtime for SQL inference queries: SQL and model pipelines
//! are lowered into one IR, rewritten across the data/model boundary, and
//! executed or re-emitted as SQL.

pub mod analysis;
pub mod codegen;
pub mod error;
pub mod exec;
pub mod frontend;
pub mod ir;
pub mod rules;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod workspace;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type TensorGraph = tensor::TensorGraph<f64>;
