//! A numerical laboratory for the Schrodinger equation on polygons.
//!
//! The pipeline: double a polygon across its boundary into a closed flat
//! surface with cone points ([`geometry`]), triangulate it with grading toward
//! the cone points and assemble piecewise-linear stiffness/mass operators
//! ([`mesh`]), solve the generalized eigenproblem and build a spectral
//! functional calculus ([`spectral`]), decompose states into dyadic frequency
//! bands ([`littlewood_paley`]), drive the exact spectral Schrodinger flow and
//! measure space-time norms ([`evolution`]), and cross-check the surface heat
//! kernel against explicit flat-cone formulas ([`cone_heat`]).
//!
//! Most capabilities have a runnable demo under `examples/`; the `polywave`
//! binary batches the same experiments to CSV.

pub mod cli;
pub mod cone_heat;
mod error;
pub mod evolution;
pub mod geometry;
pub mod littlewood_paley;
pub mod mesh;
pub mod numerics;
pub mod spectral;

pub use error::{Error, Result};
