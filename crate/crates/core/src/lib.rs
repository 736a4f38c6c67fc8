//! Communication-aware safety controller synthesis for linear plants.
//!
//! A state-feedback gain K and an ellipsoidal invariant set {xᵀMx ≤ 1} are
//! designed jointly with Kalman-filter error bounds, so that the closed loop
//! stays safe despite bounded disturbances and an impaired sensor uplink
//! (loss, quantization, bandwidth limits, delay).
//!
//! Everything is generic over the scalar type ([`Real`]); the aliases below
//! fix it to `f64`.

pub mod chi2;
pub mod codesign;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod scalar;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

pub type LtiSystem = model::LtiSystem<f64>;
pub type BoxSet = model::BoxSet<f64>;
pub type BallBound = model::BallBound<f64>;
pub type PolytopeSafety = model::PolytopeSafety<f64>;
pub type InputLimit = model::InputLimit<f64>;
pub type Ellipsoid = model::Ellipsoid<f64>;

pub type NoiseSpec = kalman::NoiseSpec<f64>;
pub type KalmanState = kalman::KalmanState<f64>;
pub type CovBoundParams = kalman::CovBoundParams<f64>;
pub type ErrorBounds = kalman::ErrorBounds<f64>;

pub type OpInstance = synthesis::OpInstance<f64>;
pub type SdpSolution = synthesis::SdpSolution<f64>;
pub type SynthesisResult = synthesis::SynthesisResult<f64>;
pub type SolveOptions = synthesis::SolveOptions<f64>;

pub type SearchConfig = codesign::SearchConfig<f64>;
pub type CodesignOutcome = codesign::CodesignOutcome<f64>;
pub type CodesignError = codesign::CodesignError<f64>;
pub type TraceEntry = codesign::TraceEntry<f64>;

pub type ChannelConfig = sim::ChannelConfig<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type SimSummary = sim::SimSummary<f64>;
pub type TrajectoryRecord = sim::TrajectoryRecord<f64>;
