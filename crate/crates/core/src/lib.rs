pub mod actuators;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod regression;
pub mod synth;
pub mod trajectory;

pub use error::{GaitError, Result};
