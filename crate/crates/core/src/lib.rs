//! Simulation and measurement-analysis toolkit for two-plane segmented ion traps.
//!
//! The crate models stacked-wafer traps in which electrodes are patterned on two
//! parallel conductor planes: analytic basis potentials for rectangular patches
//! (gapless-plane approximation with image-reflection correction for the second
//! plane), RF pseudopotential and Mathieu stability quantities, equilibrium /
//! normal-mode / trap-depth analysis, constrained least-squares voltage solving,
//! and fitting routines for stray-field and motional-heating datasets.
//!
//! All core math is generic over the scalar type through [`scalar::Real`];
//! concrete `f64` aliases are exported at the crate root. Lengths are in
//! meters, potentials in volts, and energies in joules unless a function says
//! otherwise; report-facing conversions to µm/eV/MHz happen at the boundary.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod measurement;
pub mod pseudo;
pub mod scalar;
pub mod voltage;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete aliases for the common double-precision instantiation.
pub type Vec3 = linalg::Vec3<f64>;
pub type SymMat3 = linalg::SymMat3<f64>;
pub type Rect = geometry::Rect<f64>;
pub type ElectrodePatch = geometry::ElectrodePatch<f64>;
pub type SpacerFacet = geometry::SpacerFacet<f64>;
pub type TrapGeometry = geometry::TrapGeometry<f64>;
pub type VoltageSet = voltage::VoltageSet<f64>;
pub type RfDrive = pseudo::RfDrive<f64>;
pub type IonSpecies = pseudo::IonSpecies<f64>;
pub type PotentialModel = pseudo::PotentialModel<f64>;
pub type ModeSolution = analysis::ModeSolution<f64>;
pub type DepthResult = analysis::depth::DepthResult<f64>;
