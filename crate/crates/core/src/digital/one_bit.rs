use rand::Rng;
use rayon::prelude::*;

use crate::aircomp::truncated_inversion_policy;
use crate::channel::ChannelRealization;
use crate::error::invalid;
use crate::rng::standard_normal;
use crate::{Real, Result};

/// Majority-vote decoding outcome over `D` dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneBitAggregate {
    pub decoded_signs: Vec<i8>,
    /// Sign of the exact vote sum over all `K` devices; `0` on a tie.
    pub true_majority: Vec<i8>,
    /// Positions where the decoded sign differs from a non-zero majority.
    pub flip_count: usize,
    /// Positions with a tied vote (excluded from `flip_count`).
    pub tie_count: usize,
}

/// One-bit quantizer: `+1` for `x >= 0`, `-1` otherwise.
pub fn sign_of<T: Real>(x: T) -> i8 {
    if x >= T::zero() {
        1
    } else {
        -1
    }
}

/// Over-the-air majority vote over `K` devices' sign vectors (`K x D`).
///
/// Devices transmit BPSK under truncated channel inversion with the given
/// threshold; the server decodes `sign(Re y_d)` per dimension, a zero
/// received value decoding to `+1`. One standard-normal noise sample per
/// dimension is drawn from `rng`, so noise scales linearly with `σ`.
pub fn one_bit_aircomp<T: Real, R: Rng + ?Sized>(
    sign_vectors: &[Vec<i8>],
    channel: &ChannelRealization<T>,
    power_budget: T,
    truncation_threshold: T,
    rng: &mut R,
) -> Result<OneBitAggregate> {
    let Some(first) = sign_vectors.first() else {
        return Err(invalid("need at least one device"));
    };
    let dim = first.len();
    if sign_vectors.len() != channel.num_devices() {
        return Err(invalid(format!(
            "{} sign vectors for {} channel gains",
            sign_vectors.len(),
            channel.num_devices()
        )));
    }
    for (k, v) in sign_vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(invalid(format!("device {k} sends {} signs, expected {dim}", v.len())));
        }
        if v.iter().any(|&s| s != 1 && s != -1) {
            return Err(invalid(format!("device {k} sends a value outside {{-1, +1}}")));
        }
    }
    let alloc = truncated_inversion_policy(channel, power_budget, truncation_threshold)?;
    let amplitudes = alloc.received_amplitudes(channel)?;
    let noise_sd = channel.noise_variance().sqrt() / alloc.alignment_factor().sqrt();
    let noise: Vec<T> = (0..dim).map(|_| standard_normal(rng)).collect();

    let per_dim: Vec<(i8, i8)> = (0..dim)
        .into_par_iter()
        .map(|d| {
            let received = sign_vectors
                .iter()
                .zip(&amplitudes)
                .fold(T::zero(), |acc, (v, &a)| acc + a * T::from_i8(v[d]).expect("sign"))
                + noise_sd * noise[d];
            let votes: i64 = sign_vectors.iter().map(|v| i64::from(v[d])).sum();
            (sign_of(received), votes.signum() as i8)
        })
        .collect();

    let (decoded_signs, true_majority): (Vec<i8>, Vec<i8>) = per_dim.into_iter().unzip();
    let flip_count = decoded_signs
        .iter()
        .zip(&true_majority)
        .filter(|(d, m)| **m != 0 && d != m)
        .count();
    let tie_count = true_majority.iter().filter(|m| **m == 0).count();
    Ok(OneBitAggregate {
        decoded_signs,
        true_majority,
        flip_count,
        tie_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn flat(k: usize, noise: f64) -> ChannelRealization<f64> {
        ChannelRealization::from_amplitudes(&vec![0.8; k], noise).unwrap()
    }

    #[test]
    fn noiseless_odd_k_recovers_majority() {
        let signs = vec![vec![1, -1, 1, -1], vec![1, 1, -1, -1], vec![-1, 1, 1, -1]];
        let out = one_bit_aircomp(&signs, &flat(3, 0.0), 1.0, 0.0, &mut seeded(0)).unwrap();
        assert_eq!(out.decoded_signs, vec![1, 1, 1, -1]);
        assert_eq!(out.decoded_signs, out.true_majority);
        assert_eq!(out.flip_count, 0);
    }

    #[test]
    fn single_voter_is_echoed() {
        let signs = vec![vec![1, -1, -1, 1, 1]];
        let out = one_bit_aircomp(&signs, &flat(1, 0.0), 1.0, 0.0, &mut seeded(0)).unwrap();
        assert_eq!(out.decoded_signs, signs[0]);
    }

    #[test]
    fn even_tie_decodes_plus_and_is_not_a_flip() {
        let signs = vec![vec![1, -1], vec![-1, -1]];
        let out = one_bit_aircomp(&signs, &flat(2, 0.0), 1.0, 0.0, &mut seeded(0)).unwrap();
        assert_eq!(out.true_majority, vec![0, -1]);
        assert_eq!(out.decoded_signs[1], -1);
        assert_eq!(out.tie_count, 1);
        assert_eq!(out.flip_count, 0);
    }

    #[test]
    fn truncated_single_voter_is_empty() {
        let ch = ChannelRealization::from_amplitudes(&[0.01], 0.0).unwrap();
        assert!(one_bit_aircomp(&[vec![1]], &ch, 1.0, 0.5, &mut seeded(0)).is_err());
    }

    #[test]
    fn rejects_non_sign_entries() {
        assert!(one_bit_aircomp(&[vec![0]], &flat(1, 0.0), 1.0, 0.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn flips_grow_with_noise_under_common_random_numbers() {
        let k = 9;
        let dim = 4000;
        let mut gen = seeded(7);
        let signs: Vec<Vec<i8>> = (0..k)
            .map(|_| (0..dim).map(|_| if gen.random::<bool>() { 1 } else { -1 }).collect())
            .collect();
        let mut previous = 0;
        for noise in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let out = one_bit_aircomp(&signs, &flat(k, noise), 1.0, 0.0, &mut seeded(99)).unwrap();
            assert!(out.flip_count >= previous, "{noise}: {} < {previous}", out.flip_count);
            previous = out.flip_count;
        }
        assert!(previous > 0);
    }
}
