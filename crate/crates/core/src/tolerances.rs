//! Every tolerance and threshold used by parity checks, invariants, and the
//! acceptance suite, pinned in one place.

/// Proxy parity: integer-structured values with epsilon applied identically,
/// so any difference at all is a mismatch.
pub const PROXY_PARITY_ABS: f64 = 0.0;

/// Elasticity parity: machine-precision-scale bound on the maintained
/// operator versus a fresh rebuild, without assuming a summation order.
pub const ELASTICITY_PARITY_ABS: f64 = 1e-12;

/// Element stiffness symmetry, absolute (matrices are symmetrized on
/// construction, so this is a hard invariant).
pub const STIFFNESS_SYMMETRY_ABS: f64 = 1e-12;

/// Element stiffness versus the independent dense B^T D B oracle, absolute
/// (unit-scale material).
pub const STIFFNESS_ORACLE_ABS: f64 = 1e-12;

/// Rigid-body modes: `||K r||_inf <= RIGID_MODE_REL * ||K||_inf`.
pub const RIGID_MODE_REL: f64 = 1e-9;

/// Positive semidefiniteness: min eigenvalue >= -PSD_EIG_REL * ||K||_inf.
pub const PSD_EIG_REL: f64 = 1e-9;

/// Refinement child volumes versus parent volume, relative.
pub const VOLUME_CONSERVATION_REL: f64 = 1e-9;

/// Total lumped mass versus density * active volume, relative.
pub const MASS_CONSERVATION_REL: f64 = 1e-9;

/// CG solution versus a dense factorization oracle, relative.
pub const CG_ORACLE_REL: f64 = 1e-8;

/// Implicit Euler fixed points (zero state, rigid translation), absolute.
pub const DYNAMICS_FIXED_POINT_ABS: f64 = 1e-10;

/// Single dynamics step versus a dense oracle, relative.
pub const DYNAMICS_ORACLE_REL: f64 = 1e-8;

/// Per-step linear momentum conservation for free-floating dynamics,
/// relative.
pub const MOMENTUM_REL: f64 = 1e-6;

/// Update-time ratio floors at desk scale (criteria 3 and 4).
pub const SPEEDUP_REBUILD_OVER_STREAMING_MIN: f64 = 10.0;
pub const TEMPORAL_LOCAL_OVER_STREAMING_MIN: f64 = 3.0;

/// Memory-footprint linearity in active tets across mesh sizes.
pub const MEMORY_LINEAR_R2_MIN: f64 = 0.99;

/// CSV column means versus JSON summary means (arithmetic identity).
pub const REPORT_MEAN_ABS: f64 = 1e-12;

/// Criterion-1 wall-clock budget, seconds.
pub const PARITY_SUITE_BUDGET_S: f64 = 120.0;
