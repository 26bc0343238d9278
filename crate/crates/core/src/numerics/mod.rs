//! Dense forward/backward machinery, optimiser and schedule.

pub mod adam;
pub mod encoder;
pub mod gradcheck;
pub mod matrix;
pub mod prelu;
pub mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use encoder::{Dense, EncoderParams, EncoderShape, Tape, DEFAULT_LEAKY_SLOPE};
pub use gradcheck::{central_difference, max_relative_error};
pub use matrix::{dot, sq_dist, Matrix};
pub use prelu::{prelu, prelu_derivative, prelu_scalar};
pub use schedule::Schedule;
