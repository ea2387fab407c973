//! Checks against independent reference computations: Monte-Carlo sampling,
//! brute-force grids and a dense eigensolver.

use aircomp_core::aircomp::{binary_allocation, AveragingMode};
use aircomp_core::apps::{consensus_round, run_sensing, ConsensusState, PolicyConfig, SensingScenario};
use aircomp_core::rng::{complex_gaussian, seeded, standard_normal};
use aircomp_core::*;
use nalgebra::DMatrix;
use num_complex::Complex;

fn monte_carlo_mse(channel: &Channel, alloc: &Allocation, rounds: usize, seed: u64) -> f64 {
    let k = channel.num_devices();
    let f = Function::arithmetic_mean();
    let mut rng = seeded(seed);
    let mut total = 0.0;
    for _ in 0..rounds {
        let data: Vec<f64> = (0..k).map(|_| standard_normal(&mut rng)).collect();
        total += run_round(&data, &f, channel, alloc, &mut rng).unwrap().squared_error;
    }
    total / rounds as f64
}

#[test]
fn round_error_matches_closed_form() {
    for seed in 0..4 {
        let ch = draw_rayleigh::<f64>(6, seed).unwrap().with_noise_variance(0.2).unwrap();
        let allocs = [
            uniform_inversion_policy(&ch, 1.0).unwrap(),
            threshold_optimal_policy(&ch, 1.0).unwrap(),
            binary_allocation(&ch, 1.0, 0.7).unwrap(),
            truncated_inversion_policy(&ch, 1.0, 0.3)
                .unwrap()
                .with_averaging(AveragingMode::AllDevices),
        ];
        for alloc in &allocs {
            let analytic = analytic_mse(&ch, alloc).unwrap();
            let empirical = monte_carlo_mse(&ch, alloc, 100_000, 100 + seed);
            let rel = (empirical - analytic).abs() / analytic;
            assert!(rel < 0.02, "seed {seed} {:?}: {empirical} vs {analytic}", alloc.policy());
        }
    }
}

#[test]
fn weak_device_stays_at_full_power_on_grid() {
    let ch = Channel::from_amplitudes(&[1.0, 0.01], 1.0).unwrap();
    let opt = threshold_optimal_policy(&ch, 1.0).unwrap();
    let (lo, hi) = (1e-4_f64, 1.0_f64);
    let grid_best = (0..10_000)
        .map(|i| {
            let eta = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / 9_999.0).exp();
            (eta, analytic_mse(&ch, &binary_allocation(&ch, 1.0, eta).unwrap()).unwrap())
        })
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    assert!(grid_best.0 > 1e-4);
    assert!(opt.alignment_factor() > 1e-4);
    assert_eq!(opt.full_power_devices(), vec![1]);
    assert!(analytic_mse(&ch, &opt).unwrap() <= grid_best.1 * (1.0 + 1e-9));
}

#[test]
fn heuristic_matches_dense_eigenvector() {
    for seed in 0..20 {
        let (k, n) = (3 + seed as usize % 5, 2 + seed as usize % 4);
        let ch = draw_mimo_rayleigh::<f64>(k, n, seed).unwrap();
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n);
        for h in ch.vectors() {
            let v = DMatrix::from_column_slice(n, 1, h);
            let norm2 = h.iter().map(|x| x.norm_sqr()).sum::<f64>();
            m += &v * v.adjoint() / Complex::new(norm2 * norm2, 0.0);
        }
        let eig = m.clone().symmetric_eigen();
        let top = eig.eigenvalues.iamax();
        let reference = eig.eigenvectors.column(top).into_owned();
        let f = subspace_heuristic_beamformer(&ch).unwrap();
        let overlap: Complex<f64> = reference.iter().zip(f.vector()).map(|(a, b)| a.conj() * b).sum();
        let sorted = {
            let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            v
        };
        if n > 1 && (sorted[0] - sorted[1]) / sorted[0] < 1e-6 {
            continue;
        }
        assert!((overlap.norm() - 1.0).abs() < 1e-8, "seed {seed}: |<v, f>| = {}", overlap.norm());
    }
}

#[test]
fn sensing_error_shrinks_with_channel_noise() {
    let scenario = SensingScenario::new(10, 25.0, 0.5, Function::arithmetic_mean()).unwrap();
    let base = draw_rayleigh::<f64>(10, 42).unwrap();
    let policy = PolicyConfig::new(PolicyKind::UniformInversion, 1.0);
    let mse = |var: f64| {
        let ch = base.clone().with_noise_variance(var).unwrap();
        let mut rng = seeded(5);
        (0..5_000)
            .map(|_| run_sensing(&scenario, &ch, &policy, &mut rng).unwrap().squared_error)
            .sum::<f64>()
            / 5_000.0
    };
    let errors: Vec<f64> = [1.0, 0.3, 0.1, 0.03, 0.01, 0.0].into_iter().map(mse).collect();
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{errors:?}");
    assert!(errors[5] < 1e-20);
}

#[test]
fn consensus_noise_floor_grows_with_noise() {
    let floor = |noise: f64| {
        let mut rng = seeded(9);
        let initial: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut s = ConsensusState::new(initial, 0.5).unwrap();
        let mut acc = 0.0;
        for t in 0..600 {
            s = consensus_round(&s, None, noise, &mut rng).unwrap();
            if t >= 100 {
                acc += s.dispersion();
            }
        }
        acc / 500.0
    };
    let floors: Vec<f64> = [0.01, 0.1, 1.0].into_iter().map(floor).collect();
    assert!(floors[0] > 0.0 && floors[0] < floors[1] && floors[1] < floors[2], "{floors:?}");
}

#[test]
fn complex_gaussian_has_requested_variance() {
    let mut rng = seeded(77);
    let n = 200_000;
    let (mut re2, mut im2) = (0.0, 0.0);
    for _ in 0..n {
        let z: Complex<f64> = complex_gaussian(&mut rng, 2.0);
        re2 += z.re * z.re;
        im2 += z.im * z.im;
    }
    assert!((re2 / n as f64 - 1.0).abs() < 0.02);
    assert!((im2 / n as f64 - 1.0).abs() < 0.02);
}
