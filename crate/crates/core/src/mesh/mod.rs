//! Discrete exterior calculus on uniform node-collocated grids.
//!
//! Scalar-valued and vector/covector-valued k-forms are stored per node in the
//! coordinate basis. Derivatives are second-order centered differences with
//! one-sided second-order closures on bounded faces.

mod boundary;
mod forms;
mod grid;
mod ops;
mod snapshot;

pub use boundary::{boundary_integral, trace_function, trace_normal, trace_scalar_normal, trace_vector, BoundaryField, FaceTrace};
pub use forms::{basis, basis_pos, binom, flux_slot, interior_sign, wedge_sign, BundleForm, MassForm, MetricField, ScalarForm, ValueKind};
pub use grid::{interpolate, FacePort, Grid, Topology, MIN_CELLS};
pub use ops::{
    covariant_gradient, exterior_covariant_d, exterior_d, hodge, hodge_inv, integrate, interior, interior_bundle, jacobian, lie_covector_top,
    lie_covector_top_direct, lie_metric_direct, lie_scalar, lie_top_direct, star_c, star_c_inv, wedge, wedge_dot,
};
pub use snapshot::Snapshot;
