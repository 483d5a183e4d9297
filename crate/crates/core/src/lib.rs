//! Simulation of generalized quantum measurements by dilation.
//!
//! A POVM `{M_j}` acting on a state `|ψ⟩` is turned into the joint
//! system-ancilla state `∑_j M_j|ψ⟩ ⊗ |j⟩`, that state is compiled into a
//! circuit of `RY`, `RZ`, phase and `CNOT` gates, the circuit is executed on a
//! state vector, and the ancilla is read out. Conditioning on an ancilla
//! outcome recovers the post-measurement state; Pauli tomography over the
//! output registers reconstructs the action of a quantum instrument.
//!
//! Registers are ordered with the system first and the ancilla second. In
//! every tensor product the left factor is the most significant, so qubit 0
//! is the leading bit of a basis-state index and bitstrings list qubit 0
//! first. A `d`-level subsystem occupies `⌈log₂ d⌉` qubits and level `l` is
//! stored as the binary number `l`.

pub mod circuit;
pub mod cli;
pub mod dilation;
pub mod error;
pub mod linalg;
pub mod povm;
pub mod presets;
pub mod qasm;
pub mod random;
pub mod sim;
pub mod stateprep;

pub use error::{Error, Result};
