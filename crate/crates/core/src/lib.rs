//! Simulation and analysis of a circuit-QED single-photon transistor: a
//! single-sided gate cavity and a two-sided signal cavity dispersively
//! coupled to one three-level transmon.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cavity;
pub mod device;
pub mod error;
pub mod hilbert;
pub mod measurement;
pub mod protocol;
pub mod quad;
pub mod qubit;
pub mod semiclassical;

pub use analysis::{
    calibration_report, extinction_db, fit_eta, gain_db, predict_single_photon, solve_calibration,
    switching_probability, CalibrationFile, CalibrationInputs, CalibrationResult, EtaFit,
    SinglePhotonPrediction, TransistorReport,
};
pub use cavity::{CavityParams, PulseKind, PulseShape, SpectrumMode};
pub use device::{DeviceParams, Provenance};
pub use error::{Error, Result};
pub use hilbert::{QuantumState, QubitLevel};
pub use measurement::{Clustering, DetectionModel, Label, LabelCounts, PhasePoint};
pub use protocol::{
    conditional_gate_field, run_experiment, Experiment, GateChannel, GateSource, ProtocolConfig,
    ShotRecord, SignalTarget, Subspace,
};
pub use qubit::{QubitRates, Transition};
pub use semiclassical::{Branch, GainPoint, Regime, SaturableCavityModel, SaturationSettings};
