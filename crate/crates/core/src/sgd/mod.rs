//! Stochastic gradient descent on the projected fixed-point objective.

mod driver;
mod gradient;
mod settings;

pub use driver::{
    initial_coeffs, run, IterateState, IterationRecord, RunReport, Termination, DIVERGENCE_NORM,
};
pub use gradient::{
    minibatch_gradient, sample_gradient, GradientContext, GradientSample, MinibatchGradient,
};
pub use settings::{learning_rate, InitMode, PlateauRule, SgdConfig};
