//! Average consensus over a complete graph with full-duplex AirComp: in each
//! round every agent receives the superposition of all peers' states in one
//! channel use.

use rand::Rng;

use crate::aircomp::uniform_inversion_policy;
use crate::channel::ChannelRealization;
use crate::error::invalid;
use crate::rng::standard_normal;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    states: Vec<f64>,
    round_index: usize,
    step_size: f64,
}

impl ConsensusState {
    pub const DEFAULT_STEP_SIZE: f64 = 0.5;

    pub fn new(states: Vec<f64>, step_size: f64) -> Result<Self> {
        if states.iter().any(|s| !s.is_finite()) {
            return Err(invalid("states must be finite"));
        }
        if !(step_size > 0.0 && step_size <= 1.0) {
            return Err(invalid(format!("step size {step_size} outside (0, 1]")));
        }
        Ok(Self {
            states,
            round_index: 0,
            step_size,
        })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn num_agents(&self) -> usize {
        self.states.len()
    }

    pub fn round_index(&self) -> usize {
        self.round_index
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn mean(&self) -> f64 {
        self.states.iter().sum::<f64>() / self.states.len() as f64
    }

    /// `max - min` of the states.
    pub fn dispersion(&self) -> f64 {
        let (lo, hi) = self
            .states
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if self.states.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// One synchronous round. Agent `i` receives
/// `(Σ_{j≠i} x_j + noise_std · z / √η_i) / (K - 1)` and moves a fraction
/// `step_size` of the way toward it.
///
/// `channel_draws`, when given, holds one realization per receiving agent
/// with the gains of its `K - 1` peers in index order; `η_i` then comes from
/// uniform inversion at unit power. Without draws the peers are perfectly
/// aligned with `η_i = 1`. One noise sample is drawn per agent.
pub fn consensus_round<R: Rng + ?Sized>(
    state: &ConsensusState,
    channel_draws: Option<&[ChannelRealization<f64>]>,
    noise_std: f64,
    rng: &mut R,
) -> Result<ConsensusState> {
    let k = state.num_agents();
    if k < 2 {
        return Err(invalid("consensus needs at least two agents"));
    }
    if !(noise_std >= 0.0) {
        return Err(invalid("noise std must be non-negative"));
    }
    let alignment: Vec<f64> = match channel_draws {
        None => vec![1.0; k],
        Some(draws) => {
            if draws.len() != k || draws.iter().any(|d| d.num_devices() != k - 1) {
                return Err(invalid(format!("need {k} channel draws of {} peers each", k - 1)));
            }
            draws
                .iter()
                .map(|d| uniform_inversion_policy(d, 1.0).map(|a| a.alignment_factor()))
                .collect::<Result<_>>()?
        }
    };
    let peers = (k - 1) as f64;
    let alpha = state.step_size;
    let x = &state.states;
    let next = (0..k)
        .map(|i| {
            let superposed = x
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(0.0, |acc, (_, &v)| acc + v);
            let z: f64 = standard_normal(rng);
            let peer_avg = (superposed + noise_std * z / alignment[i].sqrt()) / peers;
            (1.0 - alpha) * x[i] + alpha * peer_avg
        })
        .collect();
    Ok(ConsensusState {
        states: next,
        round_index: state.round_index + 1,
        step_size: alpha,
    })
}

/// Dispersion before the first round and after each of `rounds` aligned rounds.
pub fn run_consensus<R: Rng + ?Sized>(
    initial: &ConsensusState,
    rounds: usize,
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(state.dispersion());
    for _ in 0..rounds {
        state = consensus_round(&state, None, noise_std, rng)?;
        out.push(state.dispersion());
    }
    Ok(out)
}
