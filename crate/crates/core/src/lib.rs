//! Numerical laboratory for the N-body problem at fixed negative energy.

pub mod brake;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod families;
pub mod integrate;
pub mod jmgeom;
pub mod numeric;
pub mod sample;
pub mod shape;
pub mod system;
pub mod virial;

pub use error::{Error, Result};
pub use exec::Execution;
pub use system::{EnergyLevel, MassSystem, State};
