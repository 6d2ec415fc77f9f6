//! Fixed per-entry cost constants for maintenance-state footprint estimates.
//!
//! Every policy's `maintenance_state_bytes` accounting is derived from these
//! numbers so that footprint reports are deterministic and comparable across
//! runs; they approximate the payload plus container overhead of the actual
//! structures rather than measuring the allocator.

/// One edge-multiplicity entry: u32 key + u32 count + hash-table overhead.
pub const MULTIPLICITY_ENTRY: usize = 16;

/// One accumulated 3x3 block entry: (u32,u32) key + 9 f64 values +
/// u32 contributing count + hash-table overhead.
pub const BLOCK_ENTRY: usize = 8 + 72 + 4 + 16;

/// One tet id inside a cached incidence list.
pub const INCIDENCE_ID: usize = 8;

/// Per-list overhead of a cached incidence list (Vec header).
pub const INCIDENCE_LIST: usize = 24;

/// Per-vertex cost of the maintained lumped-mass vector.
pub const MASS_PER_VERTEX: usize = 8;

/// Fixed baseline charged to every policy (mask bytes are charged per tet).
pub const MASK_PER_TET: usize = 1;

/// Fixed scratch baseline for the full-rebuild policy.
pub const REBUILD_SCRATCH: usize = 256;
