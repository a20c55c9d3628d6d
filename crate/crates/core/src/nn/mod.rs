//! Minimal neural-network substrate: a flat parameter store with a
//! logical-name registry (weight sharing as aliasing), a reverse-mode tape
//! over f64 matrices, and finite-difference gradient verification.

pub mod gradcheck;
pub mod store;
pub mod tape;

pub use gradcheck::{check_sampled, rel_error, GradCheckReport, DEFAULT_STEP, DEFAULT_TOLERANCE};
pub use store::{uniform_init, Param, ParamId, ParameterRegistry, ParameterStore};
pub use tape::{GradSink, Tape, Var};
