//! Incompressible flow of the relative velocity in the body frame.

pub mod functionals;
pub mod grid;
pub mod init;
pub mod ops;
pub mod poisson;
pub mod step;

pub use functionals::{
    angular_momentum, dissipation_rate, gradient_parts, kinetic_energy, mean_velocity,
};
pub use grid::{Array3, MacGrid, ScalarField, VelocityField};
pub use init::{initialize_velocity, InitSpec};
pub use poisson::{divergence_tolerance, Preconditioner, PressureSolver};
pub use step::{AffineStep, FluidParams, FluidState, FluidStepOutput, FluidStepper, StableStep};
