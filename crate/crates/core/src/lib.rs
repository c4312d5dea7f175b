//! Smooth-transition HYGARCH volatility model.

pub mod error;
pub mod fracdiff;
pub mod io;
pub mod model;

pub use error::{Error, Result};
pub use model::{Theta, TransitionSpec, VariancePath};
pub mod estimate;
pub mod evaluation;
pub mod experiments;
pub mod optim;
pub mod score_test;
pub mod simulate;
pub mod stability;
