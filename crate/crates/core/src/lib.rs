//! Echo chains, norm inflation and stability checks for the two-dimensional
//! Boussinesq equations linearized around traveling waves.
//!
//! For a fixed vertical frequency `eta` the perturbation reduces to a
//! nearest-neighbor system in the horizontal modes `l = 1..=L`. The crate
//! integrates that system ([`modes`]), the wave amplitude ODE ([`wave`]),
//! evaluates the resonance diagnostics ([`diagnostics`]) and assembles
//! multi-frequency blow-up experiments ([`blowup`]).
//!
//! Everything is generic over the scalar type; the aliases at the crate root
//! fix it to `f64`.

pub mod blowup;
pub mod diagnostics;
pub mod error;
pub mod expo;
pub mod model;
pub mod modes;
pub mod quad;
pub mod scalar;
pub mod wave;

pub use error::{Error, Result};
pub use model::{
    validate_params, weight_eval, FSource, InitSpec, K1Rule, ModeState, PhysicalParams, RawParams,
    RegimeThresholds, SimConfig, ThresholdFactors, WeightSpec,
};
pub use scalar::Scalar;

pub type Params = PhysicalParams<f64>;
pub type State = ModeState<f64>;
pub type Config = SimConfig<f64>;
pub type Traj = modes::Trajectory<f64>;
pub type Thresholds = RegimeThresholds<f64>;
pub type Wave = wave::WaveState<f64>;
