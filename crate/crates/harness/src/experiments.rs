//! One sweep point of each experiment kind, producing named metrics.

use std::collections::BTreeMap;

use aircomp_core::aircomp::{apply_policy, AveragingMode};
use aircomp_core::apps::{
    consensus_round, run_sensing, train_federated, AggregationMode, ConsensusState,
    FederatedChannel, FederatedRun, GaussianMixtureSpec, PolicyConfig, SensingScenario,
};
use aircomp_core::digital::{aircomp_round_latency, ofdma_round_latency, LatencyModel};
use aircomp_core::rng::{standard_normal, SimRng};
use aircomp_core::{
    analytic_mse, draw_mimo_rayleigh, draw_rayleigh, local_search_beamformer, make_function, mimo_mse,
    run_round, subspace_heuristic_beamformer, AirCompError, Channel, Function, PolicyKind,
};
use rand::Rng;

use crate::config::{ExperimentKind, Params};

pub type Metrics = BTreeMap<String, f64>;

type Result<T> = std::result::Result<T, AirCompError>;

pub fn run_point(kind: ExperimentKind, p: &Params, rng: &mut SimRng) -> Result<Metrics> {
    match kind {
        ExperimentKind::MseVsSnr => mse_vs_snr(p, rng),
        ExperimentKind::PolicyComparison => policy_comparison(p, rng),
        ExperimentKind::MimoBeamformer => mimo_beamformer(p, rng),
        ExperimentKind::LatencyVsDevices => latency_vs_devices(p),
        ExperimentKind::Federated => federated(p, rng),
        ExperimentKind::Consensus => consensus(p, rng),
        ExperimentKind::Sensing => sensing(p, rng),
    }
}

/// Noise variance giving `snr_db` at power `P`; infinite SNR means no noise.
fn noise_variance(p: &Params) -> f64 {
    p.real("power_budget") / 10f64.powf(p.real("snr_db") / 10.0)
}

fn scalar_channel(k: usize, p: &Params, rng: &mut SimRng) -> Result<Channel> {
    draw_rayleigh::<f64>(k, rng.random())?.with_noise_variance(noise_variance(p))
}

fn policy(p: &Params) -> Result<PolicyKind> {
    p.ident("policy").parse()
}

fn metrics<const N: usize>(pairs: [(&str, f64); N]) -> Metrics {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn mse_vs_snr(p: &Params, rng: &mut SimRng) -> Result<Metrics> {
    let k = p.count("num_devices");
    let ch = scalar_channel(k, p, rng)?;
    let alloc = apply_policy(policy(p)?, &ch, p.real("power_budget"), p.real("truncation_threshold"))?
        .with_averaging(AveragingMode::AllDevices);
    let mut out = metrics([
        ("mse", analytic_mse(&ch, &alloc)?),
        ("alignment_factor", alloc.alignment_factor()),
        ("num_full_power", alloc.full_power_devices().len() as f64),
        ("num_excluded", alloc.excluded_devices().len() as f64),
    ]);
    let rounds = p.count("mc_rounds");
    if rounds > 0 {
        let f = Function::arithmetic_mean();
        let mut total = 0.0;
        for _ in 0..rounds {
            let data: Vec<f64> = (0..k).map(|_| standard_normal(rng)).collect();
            total += run_round(&data, &f, &ch, &alloc, rng)?.squared_error;
        }
        out.insert("mse_empirical".into(), total / rounds as f64);
    }
    Ok(out)
}

fn policy_comparison(p: &Params, rng: &mut SimRng) -> Result<Metrics> {
    let ch = scalar_channel(p.count("num_devices"), p, rng)?;
    let power = p.real("power_budget");
    let mut out = Metrics::new();
    for kind in [PolicyKind::UniformInversion, PolicyKind::TruncatedInversion, PolicyKind::ThresholdOptimal] {
        let alloc = apply_policy(kind, &ch, power, p.real("truncation_threshold"))?
            .with_averaging(AveragingMode::AllDevices);
        out.insert(format!("mse_{}", kind.name()), analytic_mse(&ch, &alloc)?);
    }
    let gain = out["mse_uniform_inversion"] / out["mse_threshold_optimal"];
    out.insert("optimal_gain_db".into(), 10.0 * gain.log10());
    Ok(out)
}

fn mimo_beamformer(p: &Params, rng: &mut SimRng) -> Result<Metrics> {
    let ch = draw_mimo_rayleigh::<f64>(p.count("num_devices"), p.count("num_antennas"), rng.random())?
        .with_noise_variance(noise_variance(p))?;
    let power = p.real("power_budget");
    let heuristic = subspace_heuristic_beamformer(&ch)?;
    let searched = local_search_beamformer(&ch, p.count("restarts"), rng)?;
    let (oh, os) = (heuristic.objective(&ch)?, searched.objective(&ch)?);
    Ok(metrics([
        ("objective_heuristic", oh),
        ("objective_local_search", os),
        ("mse_heuristic", mimo_mse(&ch, &heuristic, power)?),
        ("mse_local_search", mimo_mse(&ch, &searched, power)?),
        ("gap_db", 10.0 * (os / oh).log10()),
    ]))
}

fn latency_model(p: &Params) -> Result<LatencyModel> {
    LatencyModel::new(
        p.count("num_subchannels"),
        u32::try_from(p.int("bits_per_parameter")).unwrap_or(u32::MAX),
        p.real("target_ber"),
        10f64.powf(p.real("mean_snr_db") / 10.0),
    )
}

fn latency_vs_devices(p: &Params) -> Result<Metrics> {
    let mut model = latency_model(p)?;
    let dim = p.count("model_dim");
    let air = aircomp_round_latency(dim, &model);
    let ofdma = ofdma_round_latency(dim, p.count("num_devices"), &model)?;
    let mut out = metrics([
        ("latency_slots_aircomp", air as f64),
        ("latency_slots_ofdma", ofdma as f64),
        ("latency_ratio", ofdma as f64 / air as f64),
        ("qam_order", f64::from(model.select_qam_order()?)),
    ]);
    let slot_us = p.real("symbol_duration_us");
    if slot_us > 0.0 {
        model = model.with_symbol_duration(slot_us * 1e-6)?;
        out.insert("latency_ms_aircomp".into(), model.slots_to_millis(air).expect("duration set"));
        out.insert("latency_ms_ofdma".into(), model.slots_to_millis(ofdma).expect("duration set"));
    }
    Ok(out)
}

fn federated(p: &Params, rng: &mut SimRng) -> Result<Metrics> {
    let k = p.count("num_devices");
    let features = p.count("num_features");
    let task = GaussianMixtureSpec {
        dim: features,
        samples_per_device: p.count("samples_per_device"),
        test_samples: p.count("test_samples"),
        separation: p.real("separation"),
        seed: rng.random(),
    }
    .build(k)?;
    let mode: AggregationMode = p.ident("aggregation_mode").parse()?;
    let run = FederatedRun::new(k, features + 1, p.count("rounds"), mode, p.real("learning_rate"))?
        .with_sign_step_size(p.real("sign_step_size"))
        .with_channel(FederatedChannel {
            noise_variance: noise_variance(p),
            power_budget: p.real("power_budget"),
            truncation_threshold: p.real("truncation_threshold"),
            latency: latency_model(p)?,
        });
    let channel_seed = rng.random();
    let done = train_federated(run, &task, channel_seed, rng)?;
    let per_round = done.latency_trace.first().copied().unwrap_or(0);
    Ok(metrics([
        ("final_accuracy", *done.accuracy_trace.last().expect("at least one round")),
        ("final_loss", *done.loss_trace.last().expect("at least one round")),
        ("latency_slots_per_round", per_round as f64),
        ("latency_slots_total", done.latency_trace.iter().sum::<u64>() as f64),
    ]))
}

fn consensus(p: &Params, rng: &mut SimRng) -> Result<Metrics> {
    let k = p.count("num_agents");
    let spread = p.real("initial_spread");
    let states: Vec<f64> = (0..k).map(|_| spread * (2.0 * rng.random::<f64>() - 1.0)).collect();
    let initial = ConsensusState::new(states, p.real("step_size"))?;
    let noise = p.real("noise_std");
    let faded = p.ident("fading") == "rayleigh";
    let mut s = initial.clone();
    for _ in 0..p.count("rounds") {
        let draws = if faded {
            Some(
                (0..k)
                    .map(|_| draw_rayleigh::<f64>(k - 1, rng.random()))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        s = consensus_round(&s, draws.as_deref(), noise, rng)?;
    }
    Ok(metrics([
        ("initial_dispersion", initial.dispersion()),
        ("final_dispersion", s.dispersion()),
        ("mean_drift", (s.mean() - initial.mean()).abs()),
    ]))
}

fn sensing(p: &Params, rng: &mut SimRng) -> Result<Metrics> {
    let field = p.real("field_value");
    let target = match p.ident("function") {
        "soft_max" => Function::soft_max(p.real("beta"), field)?,
        name => make_function(name)?,
    };
    let k = p.count("num_sensors");
    let scenario = SensingScenario::new(k, field, p.real("measurement_noise_std"), target)?;
    let ch = scalar_channel(k, p, rng)?;
    let policy = PolicyConfig::new(policy(p)?, p.real("power_budget"))
        .with_truncation_threshold(p.real("truncation_threshold"));
    let rounds = p.count("rounds");
    let (mut se, mut est) = (0.0, 0.0);
    for _ in 0..rounds {
        let r = run_sensing(&scenario, &ch, &policy, rng)?;
        se += r.squared_error;
        est += r.estimate;
    }
    Ok(metrics([
        ("mse", se / rounds as f64),
        ("mean_estimate", est / rounds as f64),
    ]))
}
