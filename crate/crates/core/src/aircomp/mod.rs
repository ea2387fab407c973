//! Scalar AirComp transceiver chain.

mod function;
mod policy;
mod round;

pub use function::{
    make_function, DataDomain, FunctionKind, NomographicFunction, SourceNormalization,
    FUNCTION_NAMES,
};
pub use policy::{
    alignment_search_interval, analytic_mse, apply_policy, binary_allocation,
    threshold_optimal_policy, truncated_inversion_policy, uniform_inversion_policy,
    AveragingMode, DeviceMode, PolicyKind, PowerAllocation,
};
pub use round::{aggregate_mean, exact_mean, run_round, AirCompRoundResult};
