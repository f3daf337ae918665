use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use snr_core::harness::{
    last_fraction_accuracy, read_metrics, report, AccuracyMode, TAIL_FRACTION,
};

fn config(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/pm_snr.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    cfg["name"] = name.into();
    cfg
}

fn write_run(dir: &Path, file: &str, name: &str, online: &[f64]) -> PathBuf {
    let mut text = json!({ "type": "config", "config": config(name) }).to_string() + "\n";
    for (t, acc) in online.iter().enumerate() {
        let rec = json!({
            "type": "task", "task": t, "online_accuracy": acc, "final_epoch_accuracy": 1.0,
            "final_epoch_loss": 0.1, "dead_neurons": t, "weight_norms": [1.0, 2.0, 3.0],
            "resets_task": 0, "resets_total": 0, "steps": 100 * (t + 1)
        });
        text += &(rec.to_string() + "\n");
    }
    let path = dir.join(file);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn three_task_fixture_uses_last_task() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_run(dir.path(), "a.jsonl", "fixture", &[0.5, 0.6, 0.9]);
    let m = read_metrics(&path).unwrap();
    assert_eq!(m.records.len(), 3);
    assert!(!m.failed);
    // ceil(0.1 × 3) = 1 task.
    assert_eq!(
        last_fraction_accuracy(&m.records, AccuracyMode::Online, TAIL_FRACTION),
        Some(0.9)
    );
    assert_eq!(
        last_fraction_accuracy(&m.records, AccuracyMode::FinalEpoch, TAIL_FRACTION),
        Some(1.0)
    );
}

#[test]
fn seeds_aggregate_with_sample_std() {
    let dir = tempfile::tempdir().unwrap();
    let paths = vec![
        write_run(dir.path(), "s0.jsonl", "pair", &[0.1, 0.8]),
        write_run(dir.path(), "s1.jsonl", "pair", &[0.2, 0.9]),
        write_run(dir.path(), "c0.jsonl", "flat", &[0.9, 0.9]),
        write_run(dir.path(), "c1.jsonl", "flat", &[0.9, 0.9]),
    ];
    let mut csv = Vec::new();
    let rows = report(&paths, &mut csv).unwrap();
    assert_eq!(rows.len(), 2);
    let flat = rows.iter().find(|r| r.name == "flat").unwrap();
    assert!((flat.mean - 0.9).abs() < 1e-12 && flat.std == 0.0);
    let pair = rows.iter().find(|r| r.name == "pair").unwrap();
    assert_eq!(pair.runs, 2);
    assert!((pair.mean - 0.85).abs() < 1e-12);
    assert!((pair.std - 0.0707).abs() < 1e-4, "{}", pair.std);
    assert_eq!(pair.dead_final, 1.0);
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn empty_and_malformed_inputs_are_errors() {
    assert!(report(&[], Vec::new()).is_err());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    let err = read_metrics(&bad).unwrap_err().to_string();
    assert!(err.contains("bad.jsonl"), "{err}");
}
