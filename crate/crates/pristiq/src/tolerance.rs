//! Global numeric tolerances. Single source of truth for tests and passes.

/// State-level tolerance: norms, amplitude comparisons.
pub const STATE_TOL: f64 = 1e-9;

/// Matrix-level tolerance: entrywise unitary comparisons (mod global phase).
pub const MATRIX_TOL: f64 = 1e-8;

/// Canonical-coordinate tolerance for special-case detection in two-qubit
/// synthesis (0/1/2-CNOT shortcuts). Must absorb the eigensolver noise in
/// the canonical coordinates (~1e-9 on dressed special-class inputs) while
/// staying well under MATRIX_TOL so snapped skeletons still verify.
pub const COORD_TOL: f64 = 2e-9;

/// A block unitary further from unitarity than this is rejected.
pub const UNITARY_INPUT_TOL: f64 = 1e-6;

/// Default qubit cap for full-unitary extraction.
pub const UNITARY_QUBIT_CAP: usize = 10;
