use thiserror::Error;

pub type Result<T> = std::result::Result<T, AirCompError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AirCompError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate channel: device {device} has zero gain")]
    DegenerateChannel { device: usize },

    #[error("empty aggregation: every device was excluded")]
    EmptyAggregation,

    #[error("domain error: {function} is undefined for value {value} (device {device})")]
    Domain {
        function: &'static str,
        value: f64,
        device: usize,
    },

    #[error("unknown function `{0}`")]
    NotFound(String),

    #[error("insufficient sub-channels: {subchannels} sub-channels for {devices} devices")]
    InsufficientSubchannels { subchannels: usize, devices: usize },

    #[error("no square QAM order meets BER {target_ber} at receive SNR {snr}")]
    NoFeasibleModulation { target_ber: f64, snr: f64 },

    #[error("training diverged at round {round}: loss {loss} exceeds 1000x initial loss {initial}")]
    Diverged { round: usize, loss: f64, initial: f64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> AirCompError {
    AirCompError::InvalidArgument(msg.into())
}
