use std::collections::BTreeMap;

use aircomp_sim::config::ParamSetting;
use aircomp_sim::{export_results, parse_config, parse_results, ExperimentKind, Format, ParamValue, RunRecord};
use proptest::prelude::*;

fn key() -> impl Strategy<Value = String> {
    "[a-z][a-z_]{0,10}"
}

fn param_value() -> impl Strategy<Value = ParamValue> {
    prop_oneof![
        any::<i64>().prop_map(ParamValue::Int),
        any::<f64>().prop_filter("NaN never equals itself", |v| !v.is_nan()).prop_map(ParamValue::Real),
        "[a-z_]{1,12}".prop_map(ParamValue::Ident),
    ]
}

fn record() -> impl Strategy<Value = RunRecord> {
    (
        any::<u64>(),
        prop::collection::btree_map(key(), param_value(), 0..4),
        prop::collection::btree_map(key(), any::<f64>().prop_filter("finite or inf", |v| !v.is_nan()), 0..5),
        0usize..1000,
    )
        .prop_map(|(config_hash, sweep_point, metrics, trial_index)| RunRecord {
            config_hash,
            sweep_point,
            metrics,
            trial_index,
            toolkit_version: "0.1.0".into(),
        })
}

/// Records sharing keys, as produced by one run.
fn run_records() -> impl Strategy<Value = Vec<RunRecord>> {
    record().prop_flat_map(|template| {
        let n = 1..6usize;
        (Just(template), n).prop_flat_map(|(t, n)| {
            let sweep_keys: Vec<String> = t.sweep_point.keys().cloned().collect();
            let metric_keys: Vec<String> = t.metrics.keys().cloned().collect();
            prop::collection::vec(
                (
                    prop::collection::vec(param_value(), sweep_keys.len()),
                    prop::collection::vec(-1e300f64..1e300, metric_keys.len()),
                ),
                n,
            )
            .prop_map(move |rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (sv, mv))| RunRecord {
                        config_hash: t.config_hash,
                        sweep_point: sweep_keys.iter().cloned().zip(sv).collect::<BTreeMap<_, _>>(),
                        metrics: metric_keys.iter().cloned().zip(mv).collect(),
                        trial_index: i,
                        toolkit_version: t.toolkit_version.clone(),
                    })
                    .collect::<Vec<_>>()
            })
        })
    })
}

fn non_numeric_idents(records: &[RunRecord]) -> bool {
    records.iter().flat_map(|r| r.sweep_point.values()).all(|v| match v {
        ParamValue::Ident(s) => s.parse::<f64>().is_err(),
        _ => true,
    })
}

proptest! {
    #[test]
    fn csv_round_trip(records in run_records()) {
        prop_assume!(non_numeric_idents(&records));
        let text = export_results(&records, Format::Csv).unwrap();
        prop_assert_eq!(parse_results(&text, Format::Csv).unwrap(), records.clone());
        prop_assert_eq!(export_results(&records, Format::Csv).unwrap(), text);
    }

    #[test]
    fn jsonl_round_trip(records in prop::collection::vec(record(), 1..6)) {
        prop_assume!(non_numeric_idents(&records));
        let text = export_results(&records, Format::JsonLines).unwrap();
        prop_assert_eq!(text.lines().count(), records.len());
        prop_assert_eq!(parse_results(&text, Format::JsonLines).unwrap(), records);
    }

    #[test]
    fn config_round_trip(
        kind_index in 0usize..7,
        seed in any::<u64>(),
        trials in 1usize..100,
        picks in prop::collection::vec((any::<prop::sample::Index>(), 1usize..4, any::<u64>()), 0..6),
    ) {
        let kind = ExperimentKind::ALL[kind_index];
        let mut body = String::new();
        let specs = kind.params();
        let mut used = std::collections::BTreeSet::new();
        for (idx, len, salt) in picks {
            let spec = &specs[idx.index(specs.len())];
            if !used.insert(spec.name) {
                continue;
            }
            let sample = |j: u64| -> String {
                let x = salt.wrapping_add(j);
                match spec.ty {
                    aircomp_sim::config::ParamType::Int => format!("{}", 2 + x % 50),
                    aircomp_sim::config::ParamType::Real => {
                        let hi = spec.max.unwrap_or(1e3);
                        let v = (x % 1000) as f64 / 1000.0 * hi.min(1e3) + 1e-3;
                        format!("{:?}", v.min(hi))
                    }
                    aircomp_sim::config::ParamType::Ident => format!("{:?}", spec.choices[(x as usize) % spec.choices.len()]),
                }
            };
            if len == 1 {
                body.push_str(&format!("{} = {}\n", spec.name, sample(0)));
            } else {
                let items: Vec<String> = (0..len as u64).map(sample).collect();
                body.push_str(&format!("{} = [{}]\n", spec.name, items.join(", ")));
            }
        }
        if specs.iter().any(|s| matches!(s.default, aircomp_sim::config::DefaultValue::Required) && !used.contains(s.name)) {
            let req = specs.iter().find(|s| matches!(s.default, aircomp_sim::config::DefaultValue::Required)).unwrap();
            body.push_str(&format!("{} = 3\n", req.name));
        }
        let text = format!("experiment = \"{kind}\"\nseed = {seed}\nnum_trials = {trials}\noutput = \"o/x.csv\"\n[parameters]\n{body}");
        let c = parse_config(&text).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(again.config_hash(), c.config_hash());
        for (name, setting) in &c.parameters {
            if let ParamSetting::Sweep(v) = setting {
                prop_assert!(!v.is_empty(), "{}", name);
            }
        }
    }
}
