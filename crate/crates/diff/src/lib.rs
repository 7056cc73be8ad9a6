//! Differentiable shadow execution of the learning core.
//!
//! A [`Tape`] records the unrolled network, trace and plasticity updates as
//! per-vector operations; [`Tape::backward`] then yields gradients for every
//! layer's shadow weights, including the second-order paths through in-sample
//! weight updates.

pub mod error;
pub mod gradcheck;
pub mod surrogate;
pub mod tape;
pub mod unroll;

pub use error::{Error, Result};
pub use gradcheck::{check_smoothed_network, grad_check, rel_error, GradCheckProblem, GradCheckReport, GradCheckSetup};
pub use surrogate::{surrogate_derivative, SurrogateConfig, SurrogateKind};
pub use tape::{GradientBundle, NodeId, Tape};
pub use unroll::{add_ce, forward_record, record_sample, DiffConfig, ForwardMode, InnerLearning, SampleRecord, WeightNodes};
