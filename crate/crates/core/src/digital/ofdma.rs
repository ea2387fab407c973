use rand::Rng;
use rand_distr::{Bernoulli, Distribution};

use crate::error::invalid;
use crate::{Real, Result};

/// `4 ×` the population standard deviation of `values`, or the largest
/// magnitude (at least one) when the values are constant.
pub fn clip_range_for<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        return T::one();
    }
    let n = T::from_usize(values.len()).expect("length fits scalar");
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let clip = T::lit(4.0) * var.sqrt();
    if clip > T::zero() && clip.is_finite() {
        clip
    } else {
        values.iter().fold(T::one(), |acc, v| acc.max(v.abs()))
    }
}

/// Index of the `2^bits`-level mid-rise uniform quantizer on `[-clip, clip]`.
pub fn quantize_index<T: Real>(value: T, bits: u32, clip_range: T) -> u32 {
    let levels = T::lit((1u64 << bits) as f64);
    let step = T::lit(2.0) * clip_range / levels;
    let clipped = value.max(-clip_range).min(clip_range);
    ((clipped + clip_range) / step)
        .floor()
        .max(T::zero())
        .min(levels - T::one())
        .to_u32()
        .expect("index within level count")
}

pub fn dequantize_index<T: Real>(index: u32, bits: u32, clip_range: T) -> T {
    let levels = T::lit((1u64 << bits) as f64);
    let step = T::lit(2.0) * clip_range / levels;
    -clip_range + step * (T::from_u32(index).expect("index fits scalar") + T::lit(0.5))
}

/// Digital uplink of the OFDMA baseline: quantize to `bits_per_parameter`
/// bits over `[-clip, clip]` with `clip` from [`clip_range_for`], flip every bit
/// independently with probability `ber`, dequantize.
pub fn ofdma_transmit<T: Real, R: Rng + ?Sized>(
    values: &[T],
    bits_per_parameter: u32,
    rng: &mut R,
    ber: f64,
) -> Result<Vec<T>> {
    ofdma_transmit_with_clip(values, bits_per_parameter, clip_range_for(values), rng, ber)
}

pub fn ofdma_transmit_with_clip<T: Real, R: Rng + ?Sized>(
    values: &[T],
    bits_per_parameter: u32,
    clip_range: T,
    rng: &mut R,
    ber: f64,
) -> Result<Vec<T>> {
    if !(1..=32).contains(&bits_per_parameter) {
        return Err(invalid(format!(
            "bits per parameter must lie in [1, 32], got {bits_per_parameter}"
        )));
    }
    if !(clip_range > T::zero()) || !clip_range.is_finite() {
        return Err(invalid("clip range must be positive"));
    }
    let flip = Bernoulli::new(ber).map_err(|_| invalid(format!("BER must lie in [0, 1], got {ber}")))?;
    Ok(values
        .iter()
        .map(|&v| {
            let mut index = quantize_index(v, bits_per_parameter, clip_range);
            if ber > 0.0 {
                for bit in 0..bits_per_parameter {
                    if flip.sample(rng) {
                        index ^= 1 << bit;
                    }
                }
            }
            dequantize_index(index, bits_per_parameter, clip_range)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn noiseless_error_within_half_step() {
        let mut rng = seeded(2);
        let values: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin()).collect();
        let clip = 1.0;
        let out = ofdma_transmit_with_clip(&values, 8, clip, &mut rng, 0.0).unwrap();
        let step = 2.0 / 256.0;
        for (a, b) in values.iter().zip(&out) {
            assert!((a - b).abs() <= step / 2.0 + 1e-15);
        }
    }

    #[test]
    fn grid_points_round_trip_exactly() {
        let clip = 2.0;
        let grid: Vec<f64> = (0..16).map(|i| dequantize_index(i, 4, clip)).collect();
        let out = ofdma_transmit_with_clip(&grid, 4, clip, &mut seeded(0), 0.0).unwrap();
        assert_eq!(grid, out);
    }

    #[test]
    fn auto_clip_is_four_sigma() {
        let values = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(clip_range_for(&values), 4.0);
        assert_eq!(clip_range_for(&[3.0, 3.0]), 3.0);
        assert_eq!(clip_range_for(&[0.0]), 1.0);
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(ofdma_transmit(&[1.0], 0, &mut seeded(0), 0.0).is_err());
        assert!(ofdma_transmit(&[1.0], 33, &mut seeded(0), 0.0).is_err());
        assert!(ofdma_transmit(&[1.0], 8, &mut seeded(0), 1.5).is_err());
    }
}
