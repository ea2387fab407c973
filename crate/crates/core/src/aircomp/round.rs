//! One AirComp round: pre-process, normalize, transmit, superpose, de-noise,
//! post-process.
//!
//! With perfect CSI every precoder cancels its channel phase, so the in-phase
//! component of `y = Σ h_k b_k s_k + n` scaled by `1/√η` equals
//! `Σ a_k s_k + n_I/√η` with the real amplitudes from
//! [`PowerAllocation::received_amplitudes`]. Only the in-phase quadrature
//! carries data.

use rand::Rng;

use super::function::NomographicFunction;
use super::policy::{AveragingMode, PowerAllocation};
use crate::channel::ChannelRealization;
use crate::error::invalid;
use crate::rng::standard_normal;
use crate::{AirCompError, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AirCompRoundResult<T> {
    pub estimate: T,
    pub ground_truth: T,
    pub squared_error: T,
    pub policy_name: String,
}

fn check_sizes<T: Real>(k: usize, channel: &ChannelRealization<T>, alloc: &PowerAllocation<T>) -> Result<()> {
    if k != channel.num_devices() || k != alloc.num_devices() {
        return Err(invalid(format!(
            "{k} data values, {} channel gains, {} allocations",
            channel.num_devices(),
            alloc.num_devices()
        )));
    }
    Ok(())
}

fn as_scalar<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count fits scalar")
}

/// Simulates one round for `func` over `data` and compares against direct
/// evaluation. One standard-normal noise sample is drawn from `rng` per
/// round regardless of the noise level.
pub fn run_round<T: Real, R: Rng + ?Sized>(
    data: &[T],
    func: &NomographicFunction<T>,
    channel: &ChannelRealization<T>,
    alloc: &PowerAllocation<T>,
    rng: &mut R,
) -> Result<AirCompRoundResult<T>> {
    let k = data.len();
    check_sizes(k, channel, alloc)?;
    func.check_domain(data)?;
    let active = alloc.num_active();
    if active == 0 {
        return Err(AirCompError::EmptyAggregation);
    }
    let amplitudes = alloc.received_amplitudes(channel)?;
    let norm = func.normalization();

    let superposed = data
        .iter()
        .zip(&amplitudes)
        .enumerate()
        .fold(T::zero(), |acc, (i, (&d, &a))| acc + a * norm.normalize(func.pre(i, d)));
    let z: T = standard_normal(rng);
    let received =
        superposed + channel.noise_variance().sqrt() * z / alloc.alignment_factor().sqrt();

    let sum_estimate = match alloc.averaging() {
        AveragingMode::AllDevices => norm.scale * received + norm.mean * as_scalar::<T>(k),
        AveragingMode::SurvivingDevices => {
            (norm.scale * received + norm.mean * as_scalar::<T>(active)) * as_scalar::<T>(k)
                / as_scalar::<T>(active)
        }
    };
    let estimate = func.post(sum_estimate, k);
    let ground_truth = func.evaluate_direct(data)?;
    let err = estimate - ground_truth;
    Ok(AirCompRoundResult {
        estimate,
        ground_truth,
        squared_error: err * err,
        policy_name: alloc.policy().name().to_string(),
    })
}

/// Element-wise mean of `K` equal-length vectors, summing devices in index order.
pub fn exact_mean<T: Real>(values: &[Vec<T>]) -> Result<Vec<T>> {
    let dim = check_matrix(values)?;
    let k = as_scalar::<T>(values.len());
    Ok((0..dim)
        .map(|d| values.iter().fold(T::zero(), |acc, v| acc + v[d]) / k)
        .collect())
}

fn check_matrix<T>(values: &[Vec<T>]) -> Result<usize> {
    let Some(first) = values.first() else {
        return Err(invalid("need at least one device"));
    };
    let dim = first.len();
    if let Some(k) = values.iter().position(|v| v.len() != dim) {
        return Err(invalid(format!("device {k} sends {} values, expected {dim}", values[k].len())));
    }
    Ok(dim)
}

/// Over-the-air mean of `K` vectors, one entry per channel use (sub-channel).
///
/// Entries are normalized by a shared power-of-two scale near their RMS, so
/// normalization and its inverse are exact. With zero noise and every active
/// device in inversion mode the result is bitwise equal to [`exact_mean`]
/// over the active devices.
pub fn aggregate_mean<T: Real, R: Rng + ?Sized>(
    values: &[Vec<T>],
    channel: &ChannelRealization<T>,
    alloc: &PowerAllocation<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    let dim = check_matrix(values)?;
    check_sizes(values.len(), channel, alloc)?;
    let active = alloc.num_active();
    if active == 0 {
        return Err(AirCompError::EmptyAggregation);
    }
    let amplitudes = alloc.received_amplitudes(channel)?;

    let count = as_scalar::<T>(values.len() * dim.max(1));
    let rms = (values.iter().flatten().map(|&v| v * v).sum::<T>() / count).sqrt();
    let scale = if rms > T::zero() && rms.is_finite() {
        let exp = rms.log2().round().to_i32().unwrap_or(0);
        T::lit(2.0).powi(exp)
    } else {
        T::one()
    };
    let noise_sd = channel.noise_variance().sqrt() / alloc.alignment_factor().sqrt();
    let denominator = match alloc.averaging() {
        AveragingMode::AllDevices => as_scalar::<T>(values.len()),
        AveragingMode::SurvivingDevices => as_scalar::<T>(active),
    };

    Ok((0..dim)
        .map(|d| {
            let superposed = values
                .iter()
                .zip(&amplitudes)
                .fold(T::zero(), |acc, (v, &a)| acc + a * (v[d] / scale));
            let z: T = standard_normal(rng);
            (superposed + noise_sd * z) * scale / denominator
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aircomp::{make_function, truncated_inversion_policy, uniform_inversion_policy};
    use crate::channel::draw_rayleigh;
    use crate::rng::seeded;

    #[test]
    fn noiseless_average_is_exact() {
        let ch = draw_rayleigh::<f64>(3, 11).unwrap();
        let alloc = uniform_inversion_policy(&ch, 1.0).unwrap();
        let f = make_function("arithmetic_mean").unwrap();
        let r = run_round(&[2.0, 4.0, 6.0], &f, &ch, &alloc, &mut seeded(0)).unwrap();
        assert_eq!(r.estimate, 4.0);
        assert_eq!(r.squared_error, 0.0);
        assert_eq!(r.policy_name, "uniform_inversion");
    }

    #[test]
    fn noiseless_geometric_mean() {
        let ch = draw_rayleigh::<f64>(3, 12).unwrap();
        let alloc = uniform_inversion_policy(&ch, 1.0).unwrap();
        let f = make_function("geometric_mean").unwrap();
        let r = run_round(&[1.0, 4.0, 16.0], &f, &ch, &alloc, &mut seeded(0)).unwrap();
        assert!((r.estimate - 4.0).abs() < 1e-12);
    }

    #[test]
    fn domain_violation_propagates() {
        let ch = draw_rayleigh::<f64>(2, 1).unwrap();
        let alloc = uniform_inversion_policy(&ch, 1.0).unwrap();
        let f = make_function("geometric_mean").unwrap();
        assert!(matches!(
            run_round(&[1.0, -1.0], &f, &ch, &alloc, &mut seeded(0)),
            Err(AirCompError::Domain { .. })
        ));
    }

    #[test]
    fn size_mismatch_rejected() {
        let ch = draw_rayleigh::<f64>(2, 1).unwrap();
        let alloc = uniform_inversion_policy(&ch, 1.0).unwrap();
        let f = make_function("arithmetic_mean").unwrap();
        assert!(run_round(&[1.0, 2.0, 3.0], &f, &ch, &alloc, &mut seeded(0)).is_err());
    }

    #[test]
    fn squared_error_consistent() {
        let ch = draw_rayleigh::<f64>(5, 2).unwrap().with_noise_variance(0.3).unwrap();
        let alloc = uniform_inversion_policy(&ch, 1.0).unwrap();
        let f = make_function("arithmetic_mean").unwrap();
        let mut rng = seeded(4);
        for _ in 0..100 {
            let r = run_round(&[0.1, -0.4, 1.2, 0.0, 0.7], &f, &ch, &alloc, &mut rng).unwrap();
            let e = (r.estimate - r.ground_truth).powi(2);
            assert!((r.squared_error - e).abs() <= 1e-12 * e.max(1e-300));
        }
    }

    #[test]
    fn surviving_average_is_conditional_mean() {
        let ch = ChannelRealization::from_amplitudes(&[1.0f64, 1.0, 0.01], 0.0).unwrap();
        let alloc = truncated_inversion_policy(&ch, 1.0, 0.5).unwrap();
        let f = make_function("arithmetic_mean").unwrap();
        let r = run_round(&[1.0, 3.0, 100.0], &f, &ch, &alloc, &mut seeded(0)).unwrap();
        assert!((r.estimate - 2.0).abs() < 1e-12);
        let all = alloc.with_averaging(AveragingMode::AllDevices);
        let r = run_round(&[1.0, 3.0, 100.0], &f, &ch, &all, &mut seeded(0)).unwrap();
        assert!((r.estimate - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_vector_aggregation_is_bitwise_exact() {
        let ch = draw_rayleigh::<f64>(4, 9).unwrap();
        let alloc = uniform_inversion_policy(&ch, 1.0).unwrap();
        let values = vec![
            vec![0.1, -2.5e-3, 7.0],
            vec![0.3, 1.1e-3, -1.0],
            vec![-0.7, 9.9e-3, 0.25],
            vec![1e-4, -3.3e-3, 2.0],
        ];
        let air = aggregate_mean(&values, &ch, &alloc, &mut seeded(1)).unwrap();
        let exact = exact_mean(&values).unwrap();
        assert_eq!(air, exact);
    }
}
