//! Field evaluation: analytic rectangular-patch basis potentials for the
//! two-plane stack and charged-facet fields.
//!
//! Every evaluator here is a pure function of immutable data; grid scans may
//! evaluate concurrently without synchronization.

pub mod basis;
pub mod facet;
pub mod rect;

pub use basis::{
    patch_image_order,
    assemble_field, rf_basis, BasisPotential, FieldSample, CONDUCTOR_STANDOFF, DEFAULT_IMAGE_ORDER,
};
pub use facet::{charged_facet_field, charged_facet_sample, FacetSample};
pub use rect::{halfspace_derivs, slab_derivs, PotentialDerivs, Third};
