//! Channel and noise realizations for one coherence block, plus the OFDM
//! timing-offset model.
//!
//! Fading is block Rayleigh: gains are i.i.d. `CN(0, 1)` and stay fixed for
//! one AirComp round. Perfect CSI is assumed throughout.
//!
//! `noise_variance` is the noise power in the data-bearing (in-phase)
//! quadrature of a received sample. AirComp detection in this crate reads the
//! real part only, so this is the variance that reaches the estimator.

use num_complex::Complex;

use crate::error::invalid;
use crate::rng::{complex_gaussian, seeded};
use crate::{Real, Result};

/// Per-device flat-fading gains and receiver noise for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    gains: Vec<Complex<T>>,
    noise_variance: T,
    seed_tag: u64,
}

impl<T: Real> ChannelRealization<T> {
    pub fn new(gains: Vec<Complex<T>>, noise_variance: T) -> Result<Self> {
        if gains.is_empty() {
            return Err(invalid("channel needs at least one device"));
        }
        check_noise(noise_variance)?;
        Ok(Self {
            gains,
            noise_variance,
            seed_tag: 0,
        })
    }

    /// Builds a channel from real, non-negative amplitudes (zero phase).
    pub fn from_amplitudes(amplitudes: &[T], noise_variance: T) -> Result<Self> {
        Self::new(
            amplitudes.iter().map(|&a| Complex::new(a, T::zero())).collect(),
            noise_variance,
        )
    }

    pub fn with_noise_variance(mut self, noise_variance: T) -> Result<Self> {
        check_noise(noise_variance)?;
        self.noise_variance = noise_variance;
        Ok(self)
    }

    pub fn gains(&self) -> &[Complex<T>] {
        &self.gains
    }

    /// `|h_k|^2` for every device.
    pub fn power_gains(&self) -> Vec<T> {
        self.gains.iter().map(|h| h.norm_sqr()).collect()
    }

    pub fn noise_variance(&self) -> T {
        self.noise_variance
    }

    pub fn seed_tag(&self) -> u64 {
        self.seed_tag
    }

    pub fn num_devices(&self) -> usize {
        self.gains.len()
    }
}

fn check_noise<T: Real>(noise_variance: T) -> Result<()> {
    if !(noise_variance >= T::zero()) || !noise_variance.is_finite() {
        return Err(invalid(format!(
            "noise variance must be finite and non-negative, got {noise_variance}"
        )));
    }
    Ok(())
}

/// Draws `num_devices` i.i.d. unit-power Rayleigh gains. Noise variance starts
/// at zero; set it with [`ChannelRealization::with_noise_variance`].
pub fn draw_rayleigh<T: Real>(num_devices: usize, rng_seed: u64) -> Result<ChannelRealization<T>> {
    if num_devices == 0 {
        return Err(invalid("num_devices must be at least 1"));
    }
    let mut rng = seeded(rng_seed);
    let gains = (0..num_devices)
        .map(|_| complex_gaussian(&mut rng, T::one()))
        .collect();
    Ok(ChannelRealization {
        gains,
        noise_variance: T::zero(),
        seed_tag: rng_seed,
    })
}

/// Channel vectors from single-antenna devices to an `N`-antenna server.
#[derive(Debug, Clone, PartialEq)]
pub struct MimoChannelRealization<T> {
    vectors: Vec<Vec<Complex<T>>>,
    noise_variance: T,
    seed_tag: u64,
}

impl<T: Real> MimoChannelRealization<T> {
    pub fn new(vectors: Vec<Vec<Complex<T>>>, noise_variance: T) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(invalid("MIMO channel needs at least one device"));
        };
        let n = first.len();
        if n == 0 {
            return Err(invalid("MIMO channel needs at least one antenna"));
        }
        if let Some(k) = vectors.iter().position(|v| v.len() != n) {
            return Err(invalid(format!(
                "device {k} has {} antennas, expected {n}",
                vectors[k].len()
            )));
        }
        check_noise(noise_variance)?;
        Ok(Self {
            vectors,
            noise_variance,
            seed_tag: 0,
        })
    }

    pub fn with_noise_variance(mut self, noise_variance: T) -> Result<Self> {
        check_noise(noise_variance)?;
        self.noise_variance = noise_variance;
        Ok(self)
    }

    pub fn vectors(&self) -> &[Vec<Complex<T>>] {
        &self.vectors
    }

    pub fn noise_variance(&self) -> T {
        self.noise_variance
    }

    pub fn seed_tag(&self) -> u64 {
        self.seed_tag
    }

    pub fn num_devices(&self) -> usize {
        self.vectors.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.vectors[0].len()
    }
}

/// Draws i.i.d. `CN(0, 1)` channel vectors. Entries are drawn device-major, so
/// with one antenna the gains coincide with [`draw_rayleigh`] for the same seed.
pub fn draw_mimo_rayleigh<T: Real>(
    num_devices: usize,
    num_antennas: usize,
    rng_seed: u64,
) -> Result<MimoChannelRealization<T>> {
    if num_devices == 0 || num_antennas == 0 {
        return Err(invalid(format!(
            "need at least one device and one antenna, got {num_devices}x{num_antennas}"
        )));
    }
    let mut rng = seeded(rng_seed);
    let vectors = (0..num_devices)
        .map(|_| {
            (0..num_antennas)
                .map(|_| complex_gaussian(&mut rng, T::one()))
                .collect()
        })
        .collect();
    Ok(MimoChannelRealization {
        vectors,
        noise_variance: T::zero(),
        seed_tag: rng_seed,
    })
}

/// Cyclic-prefix length, sub-carrier grid and per-device arrival offsets of an
/// OFDM uplink. Times are in seconds, spacing in hertz.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmTimingModel<T> {
    cp_duration: T,
    subcarrier_spacing: T,
    num_subcarriers: usize,
    timing_offsets: Vec<T>,
}

impl<T: Real> OfdmTimingModel<T> {
    pub fn new(
        cp_duration: T,
        subcarrier_spacing: T,
        num_subcarriers: usize,
        timing_offsets: Vec<T>,
    ) -> Result<Self> {
        if !(cp_duration > T::zero()) || !cp_duration.is_finite() {
            return Err(invalid("cyclic prefix duration must be positive"));
        }
        if !(subcarrier_spacing > T::zero()) || !subcarrier_spacing.is_finite() {
            return Err(invalid("sub-carrier spacing must be positive"));
        }
        if num_subcarriers == 0 {
            return Err(invalid("need at least one sub-carrier"));
        }
        if let Some(k) = timing_offsets
            .iter()
            .position(|t| !(*t >= T::zero()) || !t.is_finite())
        {
            return Err(invalid(format!("timing offset of device {k} must be finite and >= 0")));
        }
        Ok(Self {
            cp_duration,
            subcarrier_spacing,
            num_subcarriers,
            timing_offsets,
        })
    }

    pub fn cp_duration(&self) -> T {
        self.cp_duration
    }

    pub fn subcarrier_spacing(&self) -> T {
        self.subcarrier_spacing
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn timing_offsets(&self) -> &[T] {
        &self.timing_offsets
    }

    /// `1 / subcarrier_spacing`: OFDM symbol length without the prefix.
    pub fn useful_symbol_duration(&self) -> T {
        self.subcarrier_spacing.recip()
    }

    fn check(&self, device_index: usize, subcarrier_index: usize) -> Result<T> {
        let Some(&offset) = self.timing_offsets.get(device_index) else {
            return Err(invalid(format!(
                "device index {device_index} out of range (K = {})",
                self.timing_offsets.len()
            )));
        };
        if subcarrier_index >= self.num_subcarriers {
            return Err(invalid(format!(
                "sub-carrier index {subcarrier_index} out of range ({} sub-carriers)",
                self.num_subcarriers
            )));
        }
        Ok(offset)
    }

    /// Phase rotation `-2π · n · Δf · τ_k` seen on sub-carrier `n` from device `k`.
    pub fn phase_shift(&self, device_index: usize, subcarrier_index: usize) -> Result<T> {
        let offset = self.check(device_index, subcarrier_index)?;
        let n = T::from_usize(subcarrier_index).expect("index fits scalar");
        Ok(-T::TAU() * n * self.subcarrier_spacing * offset)
    }
}

/// Received sub-carrier symbol, flagged when the arrival offset overran the
/// cyclic prefix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedSymbol<T> {
    pub symbol: Complex<T>,
    pub isi_corrupted: bool,
}

/// Applies device `device_index`'s timing offset to a symbol on sub-carrier
/// `subcarrier_index`.
///
/// Within the cyclic prefix the offset is a pure phase rotation. Past it the
/// FFT window loses `τ - cp` seconds of the symbol: magnitude is scaled by
/// `1 - (τ - cp) / T_u` (floored at zero) and the result is marked ISI-corrupted.
pub fn apply_timing_offset<T: Real>(
    symbol: Complex<T>,
    device_index: usize,
    subcarrier_index: usize,
    model: &OfdmTimingModel<T>,
) -> Result<TimedSymbol<T>> {
    let offset = model.check(device_index, subcarrier_index)?;
    let phase = model.phase_shift(device_index, subcarrier_index)?;
    let rotated = symbol * Complex::from_polar(T::one(), phase);
    if offset < model.cp_duration {
        return Ok(TimedSymbol {
            symbol: rotated,
            isi_corrupted: false,
        });
    }
    let overrun = (offset - model.cp_duration) / model.useful_symbol_duration();
    let attenuation = (T::one() - overrun).max(T::zero());
    Ok(TimedSymbol {
        symbol: rotated * attenuation,
        isi_corrupted: true,
    })
}

/// One-tap sub-channel equalizer: rotates `symbol` by `-known_phase`.
pub fn equalize_phase<T: Real>(symbol: Complex<T>, known_phase: T) -> Complex<T> {
    symbol * Complex::from_polar(T::one(), -known_phase)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CP: f64 = 5e-6;
    const SPACING: f64 = 15e3;

    fn model(offsets: Vec<f64>) -> OfdmTimingModel<f64> {
        OfdmTimingModel::new(CP, SPACING, 1200, offsets).unwrap()
    }

    #[test]
    fn rayleigh_is_deterministic_per_seed() {
        let a = draw_rayleigh::<f64>(1, 99).unwrap();
        let b = draw_rayleigh::<f64>(1, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed_tag(), 99);
        assert_ne!(a, draw_rayleigh::<f64>(1, 100).unwrap());
    }

    #[test]
    fn rayleigh_has_unit_mean_power() {
        let ch = draw_rayleigh::<f64>(100_000, 5).unwrap();
        let mean = ch.power_gains().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.02, "mean |h|^2 = {mean}");
    }

    #[test]
    fn zero_devices_rejected() {
        assert!(matches!(
            draw_rayleigh::<f64>(0, 1),
            Err(crate::AirCompError::InvalidArgument(_))
        ));
        assert!(draw_mimo_rayleigh::<f64>(2, 0, 1).is_err());
        assert!(draw_mimo_rayleigh::<f64>(0, 2, 1).is_err());
    }

    #[test]
    fn single_antenna_mimo_matches_scalar_draw() {
        let scalar = draw_rayleigh::<f64>(3, 17).unwrap();
        let mimo = draw_mimo_rayleigh::<f64>(3, 1, 17).unwrap();
        for (h, v) in scalar.gains().iter().zip(mimo.vectors()) {
            assert_eq!(*h, v[0]);
        }
    }

    #[test]
    fn mimo_mean_norm_equals_antenna_count() {
        let ch = draw_mimo_rayleigh::<f64>(10_000, 4, 8).unwrap();
        let mean = ch
            .vectors()
            .iter()
            .map(|v| v.iter().map(|x| x.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / 10_000.0;
        assert!((mean - 4.0).abs() < 0.08, "mean ||h||^2 = {mean}");
    }

    #[test]
    fn f32_draws_work() {
        let ch = draw_rayleigh::<f32>(4, 1).unwrap();
        assert_eq!(ch.num_devices(), 4);
        assert!(ch.power_gains().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn negative_noise_rejected() {
        let ch = draw_rayleigh::<f64>(2, 1).unwrap();
        assert!(ch.with_noise_variance(-1.0).is_err());
    }

    #[test]
    fn zero_offset_is_identity() {
        let m = model(vec![0.0]);
        let s = Complex::new(0.3, -1.2);
        let out = apply_timing_offset(s, 0, 600, &m).unwrap();
        assert_eq!(out.symbol, s);
        assert!(!out.isi_corrupted);
    }

    #[test]
    fn typical_offset_is_pure_rotation() {
        let m = model(vec![0.1e-6]);
        let s = Complex::new(0.7, 0.4);
        let out = apply_timing_offset(s, 0, 1000, &m).unwrap();
        assert!(!out.isi_corrupted);
        assert!((out.symbol.norm() - s.norm()).abs() < 1e-15);
        let expected = -std::f64::consts::TAU * 1000.0 * SPACING * 0.1e-6;
        assert!((out.symbol / s - Complex::from_polar(1.0, expected)).norm() < 1e-12);
    }

    #[test]
    fn offset_past_prefix_flags_isi() {
        let m = model(vec![6e-6]);
        let s = Complex::new(1.0, 0.0);
        let out = apply_timing_offset(s, 0, 10, &m).unwrap();
        assert!(out.isi_corrupted);
        let expected = 1.0 - 1e-6 * SPACING;
        assert!((out.symbol.norm() - expected).abs() < 1e-12);
    }

    #[test]
    fn equalizer_inverts_rotation() {
        let m = model(vec![3e-6]);
        let s = Complex::new(-0.2, 0.9);
        let phase = m.phase_shift(0, 77).unwrap();
        let rx = apply_timing_offset(s, 0, 77, &m).unwrap().symbol;
        assert!((equalize_phase(rx, phase) - s).norm() < 1e-12);
        assert_eq!(equalize_phase(s, 0.0), s);
    }

    #[test]
    fn out_of_range_indices_rejected() {
        let m = model(vec![0.0, 0.0]);
        let s = Complex::new(1.0, 0.0);
        assert!(apply_timing_offset(s, 2, 0, &m).is_err());
        assert!(apply_timing_offset(s, 0, 1200, &m).is_err());
    }

    #[test]
    fn invalid_timing_model_rejected() {
        assert!(OfdmTimingModel::new(0.0, SPACING, 10, vec![]).is_err());
        assert!(OfdmTimingModel::new(CP, -1.0, 10, vec![]).is_err());
        assert!(OfdmTimingModel::new(CP, SPACING, 10, vec![-1e-7]).is_err());
    }
}
