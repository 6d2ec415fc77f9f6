//! STA-FEM: exact streaming maintenance of topology-dependent sparse
//! operators over dynamic tetrahedral meshes.
//!
//! A fixed superset mesh preallocates every tetrahedron a simulation could
//! activate; per-frame edit batches toggle an active mask. This crate
//! maintains two operators over that stream — a stabilized graph-Laplacian
//! proxy and a linear-tetrahedron elasticity stiffness matrix — under three
//! interchangeable policies (full rebuild, local recompute, streaming
//! update) that produce identical matrices every frame, and benchmarks them
//! inside a per-frame preconditioned-CG solve loop.

pub mod edits;
pub mod elasticity;
pub mod bench;
pub mod connectivity;
pub mod error;
pub mod footprint;
pub mod mesh;
pub mod proxy;
pub mod rng;
pub mod solver;
pub mod sparse;
pub mod tolerances;

pub use error::{Error, Result};
