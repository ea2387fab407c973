use rand::Rng;

use crate::aircomp::{
    apply_policy, run_round, AirCompRoundResult, NomographicFunction, PolicyKind,
    PowerAllocation, SourceNormalization,
};
use crate::channel::ChannelRealization;
use crate::error::invalid;
use crate::rng::standard_normal;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SensingScenario {
    pub num_sensors: usize,
    /// Noise-free value of the monitored field.
    pub field_value: f64,
    pub measurement_noise_std: f64,
    pub target: NomographicFunction<f64>,
}

impl SensingScenario {
    pub fn new(
        num_sensors: usize,
        field_value: f64,
        measurement_noise_std: f64,
        target: NomographicFunction<f64>,
    ) -> Result<Self> {
        if num_sensors == 0 {
            return Err(invalid("need at least one sensor"));
        }
        if !field_value.is_finite() || !(measurement_noise_std >= 0.0) {
            return Err(invalid("field value must be finite and noise std non-negative"));
        }
        Ok(Self {
            num_sensors,
            field_value,
            measurement_noise_std,
            target,
        })
    }

    /// Prior of the pre-processed readings, used to normalize transmit symbols:
    /// centred at `pre(field)`, scaled by the spread that one measurement
    /// standard deviation induces.
    fn normalization(&self) -> Result<SourceNormalization<f64>> {
        let f = &self.target;
        let centre = f.pre(0, self.field_value);
        let sd = self.measurement_noise_std;
        let spread = if sd > 0.0 {
            let hi = self.field_value + sd;
            let lo = self.field_value - sd;
            let lo = if f.domain().contains(lo) { lo } else { self.field_value };
            let hi = if f.domain().contains(hi) { hi } else { self.field_value };
            (f.pre(0, hi) - f.pre(0, lo)).abs() / 2.0
        } else {
            0.0
        };
        let scale = if spread > 0.0 && spread.is_finite() {
            spread
        } else {
            centre.abs().max(1.0)
        };
        SourceNormalization::new(centre, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub power_budget: f64,
    pub truncation_threshold: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, power_budget: f64) -> Self {
        Self {
            kind,
            power_budget,
            truncation_threshold: 0.0,
        }
    }

    pub fn with_truncation_threshold(mut self, threshold: f64) -> Self {
        self.truncation_threshold = threshold;
        self
    }

    pub fn allocate(&self, channel: &ChannelRealization<f64>) -> Result<PowerAllocation<f64>> {
        apply_policy(self.kind, channel, self.power_budget, self.truncation_threshold)
    }
}

/// Draws sensor readings around the field value, aggregates the target
/// function in one AirComp round and scores it against the function of the
/// drawn readings. Readings are drawn from `rng` before the channel noise.
pub fn run_sensing<R: Rng + ?Sized>(
    scenario: &SensingScenario,
    channel: &ChannelRealization<f64>,
    policy: &PolicyConfig,
    rng: &mut R,
) -> Result<AirCompRoundResult<f64>> {
    if channel.num_devices() != scenario.num_sensors {
        return Err(invalid(format!(
            "{} sensors but {} channel gains",
            scenario.num_sensors,
            channel.num_devices()
        )));
    }
    let readings: Vec<f64> = (0..scenario.num_sensors)
        .map(|_| {
            let z: f64 = standard_normal(rng);
            scenario.field_value + scenario.measurement_noise_std * z
        })
        .collect();
    let func = scenario.target.clone().with_normalization(scenario.normalization()?);
    let alloc = policy.allocate(channel)?;
    run_round(&readings, &func, channel, &alloc, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aircomp::make_function;
    use crate::channel::draw_rayleigh;
    use crate::rng::seeded;

    #[test]
    fn doubly_noiseless_mean_recovers_field() {
        let scenario = SensingScenario::new(12, 21.5, 0.0, make_function("arithmetic_mean").unwrap()).unwrap();
        let ch = draw_rayleigh(12, 4).unwrap();
        for kind in [PolicyKind::UniformInversion, PolicyKind::ThresholdOptimal] {
            let r = run_sensing(&scenario, &ch, &PolicyConfig::new(kind, 1.0), &mut seeded(1)).unwrap();
            assert!((r.estimate - 21.5).abs() <= 1e-12 * 21.5, "{kind}: {}", r.estimate);
        }
    }

    #[test]
    fn soft_max_tracks_hottest_sensor() {
        let target = NomographicFunction::soft_max(50.0, 30.0).unwrap();
        let ch = draw_rayleigh(3, 9).unwrap();
        let alloc = crate::aircomp::uniform_inversion_policy(&ch, 1.0).unwrap();
        let r = run_round(&[10.0, 20.0, 30.0], &target, &ch, &alloc, &mut seeded(0)).unwrap();
        assert!(r.estimate >= 30.0 - 1e-12 && r.estimate - 30.0 <= 3f64.ln() / 50.0);
    }

    #[test]
    fn size_mismatch_rejected() {
        let scenario = SensingScenario::new(3, 1.0, 0.1, make_function("arithmetic_mean").unwrap()).unwrap();
        let ch = draw_rayleigh(4, 1).unwrap();
        let p = PolicyConfig::new(PolicyKind::UniformInversion, 1.0);
        assert!(run_sensing(&scenario, &ch, &p, &mut seeded(0)).is_err());
    }
}
