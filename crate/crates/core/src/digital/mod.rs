//! Digital AirComp and the OFDMA baseline.
//!
//! * [`one_bit_aircomp`]: devices send BPSK signs of their entries; the sign of
//!   the superposed signal is a majority vote.
//! * [`qam_quantize`]: QAM seen as analog modulation with quantized amplitudes.
//! * [`aircomp_round_latency`] / [`ofdma_round_latency`]: per-round
//!   multiple-access latency in symbol slots.
//! * [`ofdma_transmit`]: bit-level quantize / flip / dequantize channel of the
//!   digital baseline.

mod latency;
mod ofdma;
mod one_bit;
mod qam;

pub use latency::{aircomp_round_latency, ofdma_round_latency, LatencyModel, QAM_ORDERS};
pub use ofdma::{clip_range_for, dequantize_index, ofdma_transmit, ofdma_transmit_with_clip, quantize_index};
pub use one_bit::{one_bit_aircomp, sign_of, OneBitAggregate};
pub use qam::{qam_quantize, qam_quantize_pair};
