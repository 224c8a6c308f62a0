//! Free rotation of a rigid body whose cavity is filled with a viscous
//! incompressible fluid.
//!
//! The body-frame relative velocity is advanced by a projection method on a
//! staggered grid, the rigid side is carried by the total angular momentum,
//! and the angular velocity is reconstructed algebraically every step. The
//! diagnostics audit the energy ledger and the conserved momenta, and the
//! asymptotics module classifies which principal axis the rotation settles on.

pub mod asymptotics;
pub mod checkpoint;
pub mod config;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod fluid;
pub mod geometry;
pub mod reference;
pub mod simulation;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{
    compose_total_inertia, compute_mass_properties, principal_axes, quadrature_inertia_oracle,
    GeometrySpec, InertiaData, PrincipalAxes,
};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
