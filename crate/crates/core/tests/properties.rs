use aircomp_core::aircomp::{binary_allocation, exact_mean, aggregate_mean};
use aircomp_core::apps::{consensus_round, ConsensusState};
use aircomp_core::digital::{dequantize_index, qam_quantize, quantize_index};
use aircomp_core::rng::seeded;
use aircomp_core::*;
use proptest::prelude::*;

fn channel(amps: &[f64], noise: f64) -> Channel {
    Channel::from_amplitudes(amps, noise).unwrap()
}

fn amplitudes() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..3.0, 1..16)
}

proptest! {
    #[test]
    fn uniform_inversion_aligns_every_device(amps in amplitudes(), p in 0.1f64..10.0) {
        let ch = channel(&amps, 0.0);
        let alloc = uniform_inversion_policy(&ch, p).unwrap();
        let received: Vec<f64> = ch.gains().iter().zip(alloc.tx_scalars()).map(|(h, b)| (h * b).norm()).collect();
        let first = received[0];
        for r in &received {
            prop_assert!((r - first).abs() <= 1e-9 * first);
        }
    }

    #[test]
    fn policies_respect_power_budget(amps in amplitudes(), p in 0.1f64..10.0, noise in 0.0f64..5.0, thr in 0.0f64..1.0) {
        let ch = channel(&amps, noise);
        let mut allocs = vec![
            uniform_inversion_policy(&ch, p).unwrap(),
            threshold_optimal_policy(&ch, p).unwrap(),
        ];
        if let Ok(a) = truncated_inversion_policy(&ch, p, thr) {
            allocs.push(a);
        }
        for alloc in allocs {
            for power in alloc.transmit_powers() {
                prop_assert!(power <= p * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn threshold_optimal_is_binary_and_dominant(amps in amplitudes(), p in 0.1f64..10.0, noise in 1e-3f64..10.0) {
        let ch = channel(&amps, noise);
        let opt = threshold_optimal_policy(&ch, p).unwrap();
        let eta = opt.alignment_factor();
        for ((g, power), mode) in ch.power_gains().iter().zip(opt.transmit_powers()).zip(opt.modes()) {
            let full = *g < eta / p;
            prop_assert_eq!(full, *mode == DeviceMode::FullPower);
            if full {
                prop_assert!((power - p).abs() <= 1e-9 * p);
            } else {
                prop_assert!((g * power - eta).abs() <= 1e-9 * eta);
            }
        }
        let uni = uniform_inversion_policy(&ch, p).unwrap();
        prop_assert!(analytic_mse(&ch, &opt).unwrap() <= analytic_mse(&ch, &uni).unwrap() + 1e-12);
    }

    #[test]
    fn optimal_beats_any_fixed_alignment(amps in amplitudes(), noise in 1e-3f64..10.0, t in 0.0f64..1.0) {
        let ch = channel(&amps, noise);
        let opt = threshold_optimal_policy(&ch, 1.0).unwrap();
        let gains = ch.power_gains();
        let (lo, hi) = (1e-6 * gains.iter().copied().fold(f64::INFINITY, f64::min), gains.iter().copied().fold(0.0, f64::max));
        let eta = (lo.ln() + t * (hi.ln() - lo.ln())).exp();
        let other = binary_allocation(&ch, 1.0, eta).unwrap();
        let best = analytic_mse(&ch, &opt).unwrap();
        prop_assert!(best <= analytic_mse(&ch, &other).unwrap() * (1.0 + 1e-9));
    }

    #[test]
    fn nomographic_form_equals_direct(data in prop::collection::vec(0.01f64..50.0, 1..30)) {
        let functions: Vec<Function> = vec![
            Function::arithmetic_mean(),
            Function::geometric_mean(),
            Function::euclidean_norm(),
            Function::polynomial(vec![1.0, -0.5, 0.25]),
            Function::weighted_sum(data.iter().map(|d| 1.0 / (1.0 + d)).collect()),
            Function::soft_max(2.0, 25.0).unwrap(),
        ];
        for f in functions {
            let a = f.evaluate_nomographic(&data).unwrap();
            let b = f.evaluate_direct(&data).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * b.abs(), "{}: {} vs {}", f.name(), a, b);
        }
    }

    #[test]
    fn noiseless_aggregation_is_exact(values in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..12), seed in any::<u64>()) {
        let ch = draw_rayleigh::<f64>(values.len(), seed).unwrap();
        let alloc = uniform_inversion_policy(&ch, 1.0).unwrap();
        let air = aggregate_mean(&values, &ch, &alloc, &mut seeded(seed)).unwrap();
        prop_assert_eq!(air, exact_mean(&values).unwrap());
    }

    #[test]
    fn consensus_preserves_mean(states in prop::collection::vec(-100f64..100.0, 2..20), alpha in 0.01f64..=1.0) {
        let mut s = ConsensusState::new(states, alpha).unwrap();
        let mut rng = seeded(0);
        for _ in 0..20 {
            let next = consensus_round(&s, None, 0.0, &mut rng).unwrap();
            prop_assert!((next.mean() - s.mean()).abs() <= 1e-12 * s.states().iter().fold(1.0f64, |m, x| m.max(x.abs())));
            prop_assert!(next.dispersion() <= s.dispersion() * (1.0 + 1e-12) + 1e-12);
            s = next;
        }
    }

    #[test]
    fn quantization_error_within_half_step(v in -10f64..10.0, bits in 1u32..16, clip in 0.5f64..20.0) {
        let q = dequantize_index(quantize_index(v, bits, clip), bits, clip);
        let step = 2.0 * clip / f64::from(1u32 << bits);
        let clipped = v.clamp(-clip, clip);
        prop_assert!((q - clipped).abs() <= step / 2.0 + 1e-12 * clip);
    }

    #[test]
    fn qam_points_stay_inside_clip(v in -10f64..10.0, order_exp in 1u32..8, clip in 0.5f64..5.0) {
        let m = 4u32.pow(order_exp);
        let q = qam_quantize(v, m, clip).unwrap();
        prop_assert!(q.re.abs() <= clip && q.im == 0.0);
    }

    #[test]
    fn f32_and_f64_policies_agree(amps in prop::collection::vec(0.05f64..3.0, 1..10), p in 0.5f64..4.0) {
        let ch64 = channel(&amps, 0.5);
        let amps32: Vec<f32> = amps.iter().map(|&a| a as f32).collect();
        let ch32 = Channel32::from_amplitudes(&amps32, 0.5).unwrap();
        let m64 = analytic_mse(&ch64, &uniform_inversion_policy(&ch64, p).unwrap()).unwrap();
        let m32 = analytic_mse(&ch32, &uniform_inversion_policy(&ch32, p as f32).unwrap()).unwrap();
        prop_assert!((f64::from(m32) - m64).abs() <= 1e-4 * m64);
    }
}
