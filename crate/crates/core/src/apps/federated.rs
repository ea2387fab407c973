use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use super::dataset::FederatedTask;
use crate::aircomp::{aggregate_mean, exact_mean, truncated_inversion_policy};
use crate::channel::{draw_rayleigh, ChannelRealization};
use crate::digital::{
    aircomp_round_latency, ofdma_round_latency, ofdma_transmit, one_bit_aircomp, sign_of, LatencyModel,
};
use crate::error::invalid;
use crate::rng::derive_seed;
use crate::{AirCompError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregationMode {
    /// Exact mean of the local gradients, no channel.
    Ideal,
    AnalogAirComp,
    /// Sign-SGD with majority vote over the air.
    OneBitAirComp,
    /// Quantized digital uploads on orthogonal sub-channels.
    Ofdma,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 4] = [
        AggregationMode::Ideal,
        AggregationMode::AnalogAirComp,
        AggregationMode::OneBitAirComp,
        AggregationMode::Ofdma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::Ideal => "ideal",
            AggregationMode::AnalogAirComp => "analog_aircomp",
            AggregationMode::OneBitAirComp => "one_bit_aircomp",
            AggregationMode::Ofdma => "ofdma",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationMode {
    type Err = AirCompError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| AirCompError::NotFound(format!("aggregation mode `{s}`")))
    }
}

/// Uplink conditions shared by the channel-based aggregation modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedChannel {
    pub noise_variance: f64,
    pub power_budget: f64,
    /// Truncated-inversion threshold on `|h_k|^2`; zero disables truncation.
    pub truncation_threshold: f64,
    pub latency: LatencyModel,
}

impl Default for FederatedChannel {
    fn default() -> Self {
        Self {
            noise_variance: 0.0,
            power_budget: 1.0,
            truncation_threshold: 0.0,
            latency: LatencyModel::new(1000, 16, 1e-3, 100.0).expect("valid default latency model"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedRun {
    pub num_devices: usize,
    /// Number of model parameters aggregated per round.
    pub model_dim: usize,
    pub rounds: usize,
    pub aggregation_mode: AggregationMode,
    pub learning_rate: f64,
    /// Server step for the sign-SGD update of one-bit aggregation.
    pub sign_step_size: f64,
    pub channel: FederatedChannel,
    pub accuracy_trace: Vec<f64>,
    /// Slots spent on the uplink each round; zero for ideal aggregation.
    pub latency_trace: Vec<u64>,
    pub loss_trace: Vec<f64>,
    pub final_params: Vec<f64>,
}

impl FederatedRun {
    pub fn new(
        num_devices: usize,
        model_dim: usize,
        rounds: usize,
        aggregation_mode: AggregationMode,
        learning_rate: f64,
    ) -> Result<Self> {
        if num_devices == 0 || model_dim == 0 {
            return Err(invalid("need at least one device and one parameter"));
        }
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        Ok(Self {
            num_devices,
            model_dim,
            rounds,
            aggregation_mode,
            learning_rate,
            sign_step_size: 0.01,
            channel: FederatedChannel::default(),
            accuracy_trace: Vec::new(),
            latency_trace: Vec::new(),
            loss_trace: Vec::new(),
            final_params: Vec::new(),
        })
    }

    pub fn with_channel(mut self, channel: FederatedChannel) -> Self {
        self.channel = channel;
        self
    }

    pub fn with_sign_step_size(mut self, step: f64) -> Self {
        self.sign_step_size = step;
        self
    }

    fn round_latency(&self) -> Result<u64> {
        match self.aggregation_mode {
            AggregationMode::Ideal => Ok(0),
            AggregationMode::AnalogAirComp | AggregationMode::OneBitAirComp => {
                Ok(aircomp_round_latency(self.model_dim, &self.channel.latency))
            }
            AggregationMode::Ofdma => ofdma_round_latency(self.model_dim, self.num_devices, &self.channel.latency),
        }
    }
}

/// Trains from the zero model for `run.rounds` rounds and fills the traces.
///
/// Round `t` sees a fresh Rayleigh channel seeded by `derive_seed(channel_seed, t)`.
/// Receiver noise and bit errors are drawn from `rng`.
pub fn train_federated<R: Rng + ?Sized>(
    run: FederatedRun,
    task: &dyn FederatedTask,
    channel_seed: u64,
    rng: &mut R,
) -> Result<FederatedRun> {
    let mut run = run;
    if task.num_devices() != run.num_devices || task.num_parameters() != run.model_dim {
        return Err(invalid(format!(
            "task has {} devices and {} parameters, run expects {} and {}",
            task.num_devices(),
            task.num_parameters(),
            run.num_devices,
            run.model_dim
        )));
    }
    let step_latency = run.round_latency()?;
    let ber = match run.aggregation_mode {
        AggregationMode::Ofdma => run.channel.latency.target_ber,
        _ => 0.0,
    };

    let mut params = vec![0.0; run.model_dim];
    let initial_loss = task.loss(&params);
    run.accuracy_trace.clear();
    run.latency_trace.clear();
    run.loss_trace.clear();

    for t in 0..run.rounds {
        let grads: Vec<Vec<f64>> = (0..run.num_devices)
            .into_par_iter()
            .map(|k| task.local_gradient(k, &params))
            .collect();
        let channel = || -> Result<ChannelRealization<f64>> {
            draw_rayleigh::<f64>(run.num_devices, derive_seed(channel_seed, t as u64))?
                .with_noise_variance(run.channel.noise_variance)
        };

        match run.aggregation_mode {
            AggregationMode::Ideal => descend(&mut params, &exact_mean(&grads)?, run.learning_rate),
            AggregationMode::AnalogAirComp => {
                let ch = channel()?;
                let alloc = truncated_inversion_policy(&ch, run.channel.power_budget, run.channel.truncation_threshold)?;
                descend(&mut params, &aggregate_mean(&grads, &ch, &alloc, rng)?, run.learning_rate);
            }
            AggregationMode::OneBitAirComp => {
                let ch = channel()?;
                let signs: Vec<Vec<i8>> = grads.iter().map(|g| g.iter().map(|&v| sign_of(v)).collect()).collect();
                let vote = one_bit_aircomp(&signs, &ch, run.channel.power_budget, run.channel.truncation_threshold, rng)?;
                let direction: Vec<f64> = vote.decoded_signs.iter().map(|&s| f64::from(s)).collect();
                descend(&mut params, &direction, run.sign_step_size);
            }
            AggregationMode::Ofdma => {
                let bits = run.channel.latency.bits_per_parameter;
                let received = grads
                    .iter()
                    .map(|g| ofdma_transmit(g, bits, rng, ber))
                    .collect::<Result<Vec<_>>>()?;
                descend(&mut params, &exact_mean(&received)?, run.learning_rate);
            }
        }

        let loss = task.loss(&params);
        if !loss.is_finite() || loss > 1e3 * initial_loss {
            return Err(AirCompError::Diverged {
                round: t,
                loss,
                initial: initial_loss,
            });
        }
        run.loss_trace.push(loss);
        run.accuracy_trace.push(task.accuracy(&params));
        run.latency_trace.push(step_latency);
    }
    run.final_params = params;
    Ok(run)
}

fn descend(params: &mut [f64], direction: &[f64], step: f64) {
    for (p, d) in params.iter_mut().zip(direction) {
        *p -= step * d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::GaussianMixtureSpec;
    use crate::rng::seeded;

    fn task(k: usize) -> crate::apps::GaussianMixtureTask {
        GaussianMixtureSpec {
            dim: 5,
            samples_per_device: 30,
            test_samples: 500,
            separation: 4.0,
            seed: 3,
        }
        .build(k)
        .unwrap()
    }

    #[test]
    fn ideal_training_learns_separable_task() {
        let t = task(5);
        let run = FederatedRun::new(5, 6, 100, AggregationMode::Ideal, 0.5).unwrap();
        let out = train_federated(run, &t, 1, &mut seeded(2)).unwrap();
        assert_eq!(out.accuracy_trace.len(), 100);
        assert_eq!(out.latency_trace, vec![0; 100]);
        assert!(*out.accuracy_trace.last().unwrap() >= 0.95);
    }

    #[test]
    fn noiseless_analog_matches_ideal_bitwise() {
        let t = task(6);
        let ideal = FederatedRun::new(6, 6, 40, AggregationMode::Ideal, 0.5).unwrap();
        let analog = FederatedRun {
            aggregation_mode: AggregationMode::AnalogAirComp,
            ..ideal.clone()
        };
        let a = train_federated(ideal, &t, 7, &mut seeded(8)).unwrap();
        let b = train_federated(analog, &t, 7, &mut seeded(8)).unwrap();
        assert_eq!(a.accuracy_trace, b.accuracy_trace);
        assert_eq!(a.final_params, b.final_params);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = task(2);
        let run = FederatedRun::new(2, 3, 1, AggregationMode::Ideal, 0.1).unwrap();
        assert!(train_federated(run, &t, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn divergence_guard_trips() {
        let t = task(2);
        let run = FederatedRun::new(2, 6, 50, AggregationMode::OneBitAirComp, 0.1)
            .unwrap()
            .with_sign_step_size(1e4);
        assert!(matches!(
            train_federated(run, &t, 0, &mut seeded(0)),
            Err(AirCompError::Diverged { .. })
        ));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in AggregationMode::ALL {
            assert_eq!(m.name().parse::<AggregationMode>().unwrap(), m);
        }
    }
}
