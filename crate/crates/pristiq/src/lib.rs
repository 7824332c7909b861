//! Secure quantum machine learning on a classical statevector simulator.
//!
//! The pipeline has three stages. An encryption subcircuit built from a
//! secret key (extra secure qubits rotated by random angles, followed by a
//! random CNOT permutation) scrambles amplitude-encoded data. A compiler
//! pass obfuscates the boundary between the data-encoding circuit and the
//! encryption circuit by inserting dummy CNOT pairs and re-synthesizing
//! two-qubit blocks from their unitaries. Finally, a policy-gradient
//! architecture search trains variational classifiers that stay accurate
//! on the encrypted data, and a threat evaluator quantifies what an
//! attacker recovers without the key.

pub mod circuit;
pub mod compiler;
pub mod data;
pub mod error;
pub mod pricircuit;
pub mod qnn;
pub mod search;
pub mod sim;
pub mod threat;
pub mod tolerance;

pub use circuit::{Circuit, CircuitMetrics, Gate, GateKind};
pub use error::{Error, Result};
pub use sim::{StateVector, UnitaryMatrix};
