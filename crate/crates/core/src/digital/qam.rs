use num_complex::Complex;

use crate::error::invalid;
use crate::{Real, Result};

fn levels_per_axis(modulation_order: u32) -> Result<u32> {
    let root = (modulation_order as f64).sqrt().round() as u32;
    if modulation_order < 4 || root * root != modulation_order {
        return Err(invalid(format!(
            "QAM order must be a perfect square >= 4, got {modulation_order}"
        )));
    }
    Ok(root)
}

/// Nearest of `L` uniformly spaced mid-rise levels on `[-clip, clip]`:
/// `-clip + step (i + 1/2)` with `step = 2 clip / L`.
fn quantize_axis<T: Real>(value: T, levels: u32, clip_range: T) -> T {
    let l = T::from_u32(levels).expect("levels fit scalar");
    let step = T::lit(2.0) * clip_range / l;
    let clipped = value.max(-clip_range).min(clip_range);
    let index = ((clipped + clip_range) / step)
        .floor()
        .max(T::zero())
        .min(l - T::one());
    -clip_range + step * (index + T::lit(0.5))
}

/// Square `M`-QAM amplitude quantization of one real value on the in-phase axis.
/// `M = 4` leaves two levels per axis, `±clip/2`: a one-bit sign quantizer.
pub fn qam_quantize<T: Real>(value: T, modulation_order: u32, clip_range: T) -> Result<Complex<T>> {
    qam_quantize_pair(value, T::zero(), modulation_order, clip_range)
        .map(|c| Complex::new(c.re, T::zero()))
}

/// Quantizes two values at once, one per quadrature.
pub fn qam_quantize_pair<T: Real>(
    in_phase: T,
    quadrature: T,
    modulation_order: u32,
    clip_range: T,
) -> Result<Complex<T>> {
    let levels = levels_per_axis(modulation_order)?;
    if !(clip_range > T::zero()) || !clip_range.is_finite() {
        return Err(invalid("clip range must be positive"));
    }
    Ok(Complex::new(
        quantize_axis(in_phase, levels, clip_range),
        quantize_axis(quadrature, levels, clip_range),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digital::sign_of;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn grid_points_are_fixed() {
        // 16-QAM, clip 1: levels -0.75, -0.25, 0.25, 0.75.
        for v in [-0.75, -0.25, 0.25, 0.75] {
            assert_eq!(qam_quantize(v, 16, 1.0).unwrap().re, v);
        }
    }

    #[test]
    fn four_qam_is_sign_quantizer() {
        for v in [-3.0f64, -0.2, -1e-9, 0.0, 1e-9, 0.6, 5.0] {
            let q = qam_quantize(v, 4, 1.0).unwrap().re;
            assert_eq!(q.abs(), 0.5);
            assert_eq!(sign_of(q), sign_of(v));
        }
    }

    #[test]
    fn pair_uses_both_axes() {
        let q = qam_quantize_pair(0.3, -0.9, 16, 1.0).unwrap();
        assert_eq!(q, Complex::new(0.25, -0.75));
    }

    #[test]
    fn invalid_orders_rejected() {
        for m in [0, 1, 2, 3, 8, 32] {
            assert!(qam_quantize(0.0, m, 1.0).is_err(), "{m}");
        }
        assert!(qam_quantize(0.0, 9, 1.0).is_ok());
        assert!(qam_quantize(0.0, 16, 0.0).is_err());
    }

    #[test]
    fn error_bounded_by_half_step() {
        let mut rng = seeded(1);
        let step = 2.0 / 8.0;
        for _ in 0..10_000 {
            let v: f64 = rng.random_range(-1.0..1.0);
            let q = qam_quantize(v, 64, 1.0).unwrap().re;
            assert!((q - v).abs() <= step / 2.0 + 1e-15);
        }
    }
}
