//! Numerical laboratory for cavity-mediated cross-cross-resonance two-qubit
//! gates: closed-form phase-space dynamics, dispersive-cancellation pulse
//! scheduling (integer tuning, flower sequences, Uhrig sequences), a general
//! block Schrieffer–Wolff engine with always-on ZZ formulas, and
//! coupled-cavity-chain multi-mode feasibility analysis. Every analytic
//! result is cross-checked against brute-force truncated-Fock propagation or
//! exact diagonalization.

pub mod error;
pub mod flowers;
pub mod hilbert;
pub mod integers;
pub mod metamaterial;
pub mod perturbation;
pub mod phasespace;

pub use error::CcrError;
pub use hilbert::{Anharmonicity, Hamiltonian, HilbertSpec, OperatorMatrix, SystemSpec};
pub use integers::{IntegerSolution, Knob};
pub use metamaterial::{ChainSpec, DriveParams, ModeStructure, Scheme};
pub use perturbation::{SWProblem, SWResult, ZZReport};
pub use phasespace::{BranchHamiltonian, BranchLabel, ConditionalGate, TrajectoryResult};

/// Convenience alias used throughout.
pub type Result<T> = std::result::Result<T, CcrError>;
pub type C64 = num_complex::Complex64;

/// Cap the worker threads of the dense linear-algebra backend; 0 or 1 means
/// fully sequential.
pub fn set_worker_threads(n: usize) {
    let par = if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) };
    faer::set_global_parallelism(par);
}
