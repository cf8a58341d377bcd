//! Quantum Fisher information of continuously monitored qubit frequency
//! sensors.

pub mod error;
pub mod estimator;
pub mod lindblad;
pub mod model;
pub mod qops;
pub mod trajectories;

pub use error::{Error, Result};
pub use estimator::{effective_qfi, maximize_q_over_t, EffectiveQfiEstimate};
pub use lindblad::{QfiCurve, QfiKind, TimeOptimum};
pub use model::{coherent_spin_state, ghz_state, FrequencyModel, NoiseAxis};
pub use qops::{ComplexMatrix, Ket, C64};
pub use trajectories::{run_trajectory, Simulation, SimulationPath, TrajectorySample, UnravelingKind, UnravelingSpec};
