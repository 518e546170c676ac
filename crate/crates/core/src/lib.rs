//! Single-ion quantum heat engine driven by resolved Raman sidebands.
//!
//! The spin and a single vibrational mode exchange `kappa` phonons per spin
//! flip. [`raman`] evolves the joint populations in closed form,
//! [`open_system`] supplies the reset and re-thermalization strokes,
//! [`cycle`] chains them into a full engine cycle and [`sweep`] looks for the
//! best operating point. [`oracle`] holds brute-force dense propagators used
//! only to check the fast paths.

pub mod cycle;
pub mod entropy;
pub mod error;
pub mod fock;
pub mod open_system;
pub mod oracle;
pub mod raman;
pub mod sweep;

pub use error::{Error, Result};
pub use fock::{choose_cutoff, coupling_table, thermal_distribution, CouplingTable, FockCutoff, ThermalDistribution};
pub use raman::{EngineParams, JointPopulations, RamanEngine, SpinInverseTemperature, WorkLedger};
