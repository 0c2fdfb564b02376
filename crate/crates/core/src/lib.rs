//! Clifford-initialized VQE on simulated trapped-ion hardware.
//!
//! The pipeline: a Pauli Hamiltonian is grouped into qubit-wise commuting
//! measurement bases; a discrete search over quarter-turn angles (where the
//! ansatz is Clifford and a stabilizer tableau evaluates it exactly) picks
//! the starting point; SPSA refines it on a shot-sampling backend, either
//! directly or through a file-based client/host broker that carries
//! circuits as OpenQASM 2.0 lowered to `{rx, ry, rz, rxx}`.
//!
//! Numeric kernels are generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

pub mod ansatz;
pub mod backend;
pub mod broker;
pub mod cafqa;
pub mod circuit;
pub mod config;
pub mod kv;
pub mod pauli;
pub mod qasm;
pub mod scalar;
pub mod spsa;
pub mod stabilizer;
pub mod transpile;
pub mod vqe;

pub type Hamiltonian = pauli::PauliHamiltonian<f64>;
pub type Params = ansatz::ParamPoint<f64>;
pub type Statevector = backend::StateVector<f64>;
pub type Simulator = backend::StatevectorBackend<f64>;
pub type CafqaResult = cafqa::SearchResult<f64>;
pub type SpsaSettings = spsa::SpsaConfig<f64>;
pub type SpsaRun = spsa::SpsaTrace<f64>;
