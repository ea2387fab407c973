use crate::error::invalid;
use crate::{AirCompError, Result};

/// Square QAM orders considered by adaptive modulation.
pub const QAM_ORDERS: [u32; 8] = [4, 16, 64, 256, 1024, 4096, 16_384, 65_536];

/// Broadband uplink shared by all devices: `S` orthogonal sub-channels, one
/// parameter per sub-channel per slot for AirComp, adaptive square QAM for
/// OFDMA.
///
/// The OFDMA bit error rate of `M`-QAM at receive SNR `γ` (linear) is
/// approximated as `c · exp(-1.5 γ / (M - 1))` with `c = 0.2` by default.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyModel {
    pub num_subchannels: usize,
    pub bits_per_parameter: u32,
    pub target_ber: f64,
    pub mean_rx_snr: f64,
    pub ber_constant: f64,
    /// Seconds per OFDM symbol slot, when known.
    pub symbol_duration: Option<f64>,
}

impl LatencyModel {
    pub fn new(
        num_subchannels: usize,
        bits_per_parameter: u32,
        target_ber: f64,
        mean_rx_snr: f64,
    ) -> Result<Self> {
        if num_subchannels == 0 {
            return Err(invalid("need at least one sub-channel"));
        }
        if bits_per_parameter == 0 {
            return Err(invalid("need at least one bit per parameter"));
        }
        if !(target_ber > 0.0 && target_ber < 1.0) {
            return Err(invalid(format!("target BER must lie in (0, 1), got {target_ber}")));
        }
        if !(mean_rx_snr > 0.0) || !mean_rx_snr.is_finite() {
            return Err(invalid(format!("receive SNR must be positive, got {mean_rx_snr}")));
        }
        Ok(Self {
            num_subchannels,
            bits_per_parameter,
            target_ber,
            mean_rx_snr,
            ber_constant: 0.2,
            symbol_duration: None,
        })
    }

    pub fn with_ber_constant(mut self, ber_constant: f64) -> Result<Self> {
        if !(ber_constant > 0.0) || !ber_constant.is_finite() {
            return Err(invalid("BER constant must be positive"));
        }
        self.ber_constant = ber_constant;
        Ok(self)
    }

    pub fn with_symbol_duration(mut self, seconds: f64) -> Result<Self> {
        if !(seconds > 0.0) || !seconds.is_finite() {
            return Err(invalid("symbol duration must be positive"));
        }
        self.symbol_duration = Some(seconds);
        Ok(self)
    }

    pub fn approximate_ber(&self, modulation_order: u32) -> f64 {
        self.ber_constant * (-1.5 * self.mean_rx_snr / (f64::from(modulation_order) - 1.0)).exp()
    }

    /// Largest order in [`QAM_ORDERS`] meeting the target BER.
    pub fn select_qam_order(&self) -> Result<u32> {
        QAM_ORDERS
            .iter()
            .copied()
            .filter(|&m| self.approximate_ber(m) <= self.target_ber)
            .max()
            .ok_or(AirCompError::NoFeasibleModulation {
                target_ber: self.target_ber,
                snr: self.mean_rx_snr,
            })
    }

    pub fn slots_to_millis(&self, slots: u64) -> Option<f64> {
        self.symbol_duration.map(|t| slots as f64 * t * 1e3)
    }
}

/// `ceil(D / S)` slots, independent of the number of devices.
pub fn aircomp_round_latency(num_parameters: usize, model: &LatencyModel) -> u64 {
    num_parameters.div_ceil(model.num_subchannels) as u64
}

/// `ceil(D · bits / (floor(S/K) · log2 M*))` slots: each device gets its own
/// `floor(S/K)` sub-channels and sends `log2 M*` bits per sub-channel per slot.
pub fn ofdma_round_latency(num_parameters: usize, num_devices: usize, model: &LatencyModel) -> Result<u64> {
    if num_devices == 0 {
        return Err(invalid("need at least one device"));
    }
    if model.num_subchannels < num_devices {
        return Err(AirCompError::InsufficientSubchannels {
            subchannels: model.num_subchannels,
            devices: num_devices,
        });
    }
    let order = model.select_qam_order()?;
    let bits_per_symbol = u64::from(order.trailing_zeros());
    let per_device = (model.num_subchannels / num_devices) as u64;
    let total_bits = num_parameters as u64 * u64::from(model.bits_per_parameter);
    Ok(total_bits.div_ceil(per_device * bits_per_symbol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(snr: f64) -> LatencyModel {
        LatencyModel::new(1000, 16, 1e-3, snr).unwrap()
    }

    #[test]
    fn aircomp_latency_examples() {
        let m = model(100.0);
        assert_eq!(aircomp_round_latency(1000, &m), 1);
        assert_eq!(aircomp_round_latency(1, &m), 1);
        assert_eq!(aircomp_round_latency(1001, &m), 2);
    }

    #[test]
    fn qam_order_selection() {
        // 0.2 exp(-1.5 γ/15) <= 1e-3  <=>  γ >= 10 ln 200 ≈ 52.98.
        assert_eq!(model(100.0).select_qam_order().unwrap(), 16);
        assert_eq!(model(53.0).select_qam_order().unwrap(), 16);
        assert_eq!(model(52.9).select_qam_order().unwrap(), 4);
        assert!(matches!(
            model(1.0).select_qam_order(),
            Err(AirCompError::NoFeasibleModulation { .. })
        ));
    }

    #[test]
    fn ofdma_single_device_formula() {
        let m = model(100.0);
        for d in [1, 250, 251, 4000, 12_345] {
            let expected = (16 * d as u64).div_ceil(4000);
            assert_eq!(ofdma_round_latency(d, 1, &m).unwrap(), expected);
        }
    }

    #[test]
    fn ofdma_doubles_with_devices() {
        let m = model(100.0);
        let a = ofdma_round_latency(10_000, 10, &m).unwrap();
        let b = ofdma_round_latency(10_000, 20, &m).unwrap();
        assert_eq!(b, 2 * a);
    }

    #[test]
    fn too_many_devices_rejected() {
        let m = LatencyModel::new(10, 16, 1e-3, 100.0).unwrap();
        assert_eq!(
            ofdma_round_latency(5, 11, &m).unwrap_err(),
            AirCompError::InsufficientSubchannels { subchannels: 10, devices: 11 }
        );
    }

    #[test]
    fn millis_conversion() {
        let m = model(100.0).with_symbol_duration(71.4e-6).unwrap();
        assert!((m.slots_to_millis(14).unwrap() - 0.9996).abs() < 1e-9);
        assert_eq!(model(100.0).slots_to_millis(3), None);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(LatencyModel::new(0, 16, 1e-3, 1.0).is_err());
        assert!(LatencyModel::new(10, 0, 1e-3, 1.0).is_err());
        assert!(LatencyModel::new(10, 16, 1.0, 1.0).is_err());
        assert!(LatencyModel::new(10, 16, 1e-3, 0.0).is_err());
    }
}
