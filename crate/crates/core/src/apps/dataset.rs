use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::invalid;
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::Result;

/// Gradient oracle for federated training. Parameters are a flat vector.
pub trait FederatedTask: Sync {
    fn num_devices(&self) -> usize;
    fn num_parameters(&self) -> usize;
    /// Full-batch gradient of device `device`'s local loss.
    fn local_gradient(&self, device: usize, params: &[f64]) -> Vec<f64>;
    /// Training loss over the union of all local datasets.
    fn loss(&self, params: &[f64]) -> f64;
    /// Fraction of held-out samples classified correctly.
    fn accuracy(&self, params: &[f64]) -> f64;
}

/// Two-class Gaussian mixture: class means at `±separation/2` along a random
/// unit direction, identity covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixtureSpec {
    pub dim: usize,
    pub samples_per_device: usize,
    pub test_samples: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for GaussianMixtureSpec {
    fn default() -> Self {
        Self {
            dim: 10,
            samples_per_device: 50,
            test_samples: 2000,
            separation: 4.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct Samples {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Samples {
    fn draw(n: usize, direction: &[f64], half_gap: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut labels: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        labels.shuffle(&mut rng);
        let features = labels
            .iter()
            .map(|&y| {
                let sign = 2.0 * y - 1.0;
                direction
                    .iter()
                    .map(|&u| sign * half_gap * u + standard_normal::<f64, _>(&mut rng))
                    .collect()
            })
            .collect();
        Self { features, labels }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Logistic regression on a [`GaussianMixtureSpec`] partitioned across devices.
/// Parameters are `dim` weights followed by a bias.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTask {
    dim: usize,
    devices: Vec<Samples>,
    test: Samples,
}

impl GaussianMixtureSpec {
    pub fn build(&self, num_devices: usize) -> Result<GaussianMixtureTask> {
        if self.dim == 0 || num_devices == 0 || self.samples_per_device == 0 || self.test_samples == 0 {
            return Err(invalid("dataset sizes must be positive"));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(invalid("separation must be finite and non-negative"));
        }
        let mut rng = seeded(derive_seed(self.seed, u64::MAX));
        let raw: Vec<f64> = (0..self.dim).map(|_| standard_normal(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let direction: Vec<f64> = if norm > 0.0 {
            raw.iter().map(|v| v / norm).collect()
        } else {
            let mut e = vec![0.0; self.dim];
            e[0] = 1.0;
            e
        };
        let half = self.separation / 2.0;
        let devices = (0..num_devices)
            .map(|k| Samples::draw(self.samples_per_device, &direction, half, derive_seed(self.seed, k as u64)))
            .collect();
        let test = Samples::draw(self.test_samples, &direction, half, derive_seed(self.seed, u64::MAX - 1));
        Ok(GaussianMixtureTask {
            dim: self.dim,
            devices,
            test,
        })
    }
}

fn logit(params: &[f64], x: &[f64]) -> f64 {
    let (w, b) = params.split_at(x.len());
    w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[0]
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z) - y z`, stable for large `|z|`.
fn log_loss(z: f64, y: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z
}

impl FederatedTask for GaussianMixtureTask {
    fn num_devices(&self) -> usize {
        self.devices.len()
    }

    fn num_parameters(&self) -> usize {
        self.dim + 1
    }

    fn local_gradient(&self, device: usize, params: &[f64]) -> Vec<f64> {
        let data = &self.devices[device];
        let mut grad = vec![0.0; self.dim + 1];
        for (x, &y) in data.features.iter().zip(&data.labels) {
            let r = sigmoid(logit(params, x)) - y;
            for (g, &xi) in grad.iter_mut().zip(x) {
                *g += r * xi;
            }
            grad[self.dim] += r;
        }
        let n = data.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        grad
    }

    fn loss(&self, params: &[f64]) -> f64 {
        let (total, count) = self
            .devices
            .par_iter()
            .map(|d| {
                let s: f64 = d
                    .features
                    .iter()
                    .zip(&d.labels)
                    .map(|(x, &y)| log_loss(logit(params, x), y))
                    .sum();
                (s, d.len())
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
        total / count as f64
    }

    fn accuracy(&self, params: &[f64]) -> f64 {
        let correct = self
            .test
            .features
            .iter()
            .zip(&self.test.labels)
            .filter(|(x, &y)| (logit(params, x) >= 0.0) == (y == 1.0))
            .count();
        correct as f64 / self.test.len() as f64
    }
}
