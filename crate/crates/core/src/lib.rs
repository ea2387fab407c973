//! Over-the-air computation (AirComp) over fading multiple-access channels.
//!
//! Devices transmit analog, pre-processed data values simultaneously; the
//! channel adds them up and the server post-processes the superposition into
//! a function of the distributed data. The crate covers:
//!
//! * [`channel`]: block Rayleigh fading realizations and the OFDM timing-offset model.
//! * [`aircomp`]: nomographic functions, power-control policies, the closed-form
//!   computation error and a round simulator.
//! * [`mimo`]: aggregation beamforming at a multi-antenna server.
//! * [`digital`]: one-bit majority-vote AirComp, QAM amplitude quantization and the
//!   OFDMA latency baseline.
//! * [`apps`]: sensing, federated learning and consensus harnesses.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`, which is what the application layer uses.

pub mod aircomp;
pub mod apps;
pub mod channel;
pub mod digital;
mod error;
pub mod mimo;
pub mod rng;
mod scalar;

pub use error::{AirCompError, Result};
pub use scalar::Real;

pub use aircomp::{
    analytic_mse, binary_allocation, make_function, run_round, threshold_optimal_policy,
    truncated_inversion_policy, uniform_inversion_policy, AirCompRoundResult, AveragingMode,
    DeviceMode, FunctionKind, NomographicFunction, PolicyKind, PowerAllocation,
    SourceNormalization,
};
pub use channel::{
    apply_timing_offset, draw_mimo_rayleigh, draw_rayleigh, equalize_phase, ChannelRealization,
    MimoChannelRealization, OfdmTimingModel, TimedSymbol,
};
pub use mimo::{
    effective_gains, local_search_beamformer, mimo_mse, subspace_heuristic_beamformer,
    AggregationBeamformer, BeamformerConstruction,
};

/// Complex baseband sample in double precision.
pub type Complex64 = num_complex::Complex<f64>;

pub type Channel = ChannelRealization<f64>;
pub type MimoChannel = MimoChannelRealization<f64>;
pub type TimingModel = OfdmTimingModel<f64>;
pub type Function = NomographicFunction<f64>;
pub type Allocation = PowerAllocation<f64>;
pub type RoundResult = AirCompRoundResult<f64>;
pub type Beamformer = AggregationBeamformer<f64>;

/// Single-precision variants, mostly useful for memory-bound sweeps.
pub type Channel32 = ChannelRealization<f32>;
pub type Allocation32 = PowerAllocation<f32>;
