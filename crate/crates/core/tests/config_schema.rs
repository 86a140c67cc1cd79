use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use fedcorr::adaptive::{AdaConfig, PcaFedConfig};
use fedcorr::config::{DataSource, ExperimentConfig, ModelConfig, OutputConfig};
use fedcorr::fedsim::{FedConfig, ModelKind, Partition, ProbeConfig, Scheme};
use serde_json::Value;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn schema() -> Value {
    let text = std::fs::read_to_string(repo_root().join("docs/config.schema.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn full_config(data: DataSource, partition: Partition) -> ExperimentConfig {
    ExperimentConfig {
        data,
        model: ModelConfig {
            kind: ModelKind::Logreg,
            hidden: 8,
            compress: vec!["fc1.weight".into()],
            slice_rows: Some(3),
        },
        fed: FedConfig {
            clients: 2,
            tau: 1,
            gamma: 0.1,
            rounds: 1,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
            partition,
            validation_fraction: 0.2,
            scheme: Scheme::Pcafed,
            ada: AdaConfig::default(),
            pcafed: PcaFedConfig::default(),
        },
        target_accuracy: Some(0.5),
        probe: ProbeConfig::default(),
        output: OutputConfig::default(),
    }
}

fn branch_for<'a>(node: &'a Value, kind: &str) -> &'a Value {
    node["oneOf"]
        .as_array()
        .unwrap()
        .iter()
        .find(|b| b["properties"]["kind"]["const"] == kind)
        .unwrap_or_else(|| panic!("no schema branch for kind {kind}"))
}

/// Every object in `value` has exactly the keys its schema node declares.
fn assert_keys_match(path: &str, schema: &Value, value: &Value) {
    let node = match (schema.get("oneOf"), value.get("kind").and_then(Value::as_str)) {
        (Some(_), Some(kind)) => branch_for(schema, kind),
        _ => schema,
    };
    let Some(obj) = value.as_object() else { return };
    let Some(props) = node.get("properties").and_then(Value::as_object) else {
        panic!("{path}: schema has no properties for an object value");
    };
    let declared: BTreeSet<&String> = props.keys().collect();
    let actual: BTreeSet<&String> = obj.keys().collect();
    assert_eq!(declared, actual, "key mismatch at {path}");
    assert_eq!(node["additionalProperties"], Value::Bool(false), "{path} must reject unknown keys");
    for (k, v) in obj {
        assert_keys_match(&format!("{path}.{k}"), &props[k], v);
    }
}

#[test]
fn schema_matches_serialized_config() {
    let schema = schema();
    let sources = [
        DataSource::SynthLogreg { samples: 10, features: 3, margin: 0.1, seed: 1 },
        DataSource::SynthLinreg { samples: 10, features: 3, noise: 0.1, seed: 1 },
        DataSource::Libsvm { path: "x".into(), features: Some(3) },
        DataSource::Mnist { images: "i".into(), labels: "l".into(), side: 16 },
    ];
    for source in sources {
        for partition in [Partition::Iid, Partition::LabelLimited { labels_per_client: 1 }] {
            let value = serde_json::to_value(full_config(source.clone(), partition)).unwrap();
            assert_keys_match("$", &schema, &value);
        }
    }
}

#[test]
fn schema_defaults_match_serde_defaults() {
    let schema = schema();
    let fed = &schema["properties"]["fed"]["properties"];
    for (section, value) in [
        ("ada", serde_json::to_value(AdaConfig::default()).unwrap()),
        ("pcafed", serde_json::to_value(PcaFedConfig::default()).unwrap()),
    ] {
        for (k, v) in value.as_object().unwrap() {
            assert_eq!(&fed[section]["properties"][k]["default"], v, "fed.{section}.{k}");
        }
    }
    let probe = serde_json::to_value(ProbeConfig::default()).unwrap();
    for (k, v) in probe.as_object().unwrap() {
        assert_eq!(&schema["properties"]["probe"]["properties"][k]["default"], v, "probe.{k}");
    }
    assert_eq!(fed["validation_fraction"]["default"], 0.2);
}

#[test]
fn shipped_configs_load() {
    let dir = repo_root().join("configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let value = serde_json::to_value(&cfg).unwrap();
            assert_keys_match(&path.display().to_string(), &schema(), &value);
            count += 1;
        }
    }
    assert!(count >= 3);
}
