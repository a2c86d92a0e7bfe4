//! Dense statevector simulation of the quantum subroutines: oracles, state
//! loading, amplitude estimation, mean and inner-product estimation, and
//! hardware-efficient variational circuits.

pub mod ae;
pub mod encoding;
pub mod hamiltonian;
pub mod hea;
pub mod state;

pub use ae::{
    amplitude_estimate, inner_product_estimate, median_power, powering_runs, qamc_mean, qamc_mean_at,
    AmplitudeEstimator, OracleCosts, QamcTarget,
};
pub use encoding::{
    apply_grover_rudolph, grover_rudolph_angles, load_amplitudes, load_distribution, oracle_rotation,
    FixedPointFormat, FunctionOracle,
};
pub use hamiltonian::{entanglement_entropy, evolve_hamiltonian, hea_hamiltonian, EVOLVE_CAPACITY};
pub use hea::{hea_expectations, hea_gradients, param_shift_grad, sampled_expectations, HeaCircuit, HeaSpec};
pub use state::{gates, Register, StateVector, C64, MAX_QUBITS};
