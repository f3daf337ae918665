use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{load_base_dataset, ExperimentConfig};
use super::report::{last_fraction_accuracy, mean_std, TAIL_FRACTION};
use super::runner::{run_with_data, RunOptions};
use crate::error::{Error, Result};
use crate::tasks::Dataset;

/// One hyperparameter axis, addressed by a dotted path into the config JSON,
/// e.g. `intervention.eta` or `optimizer.learning_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub axis: Option<SweepAxis>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub name: String,
    pub value: Option<Value>,
    pub seed: u64,
    /// Tail accuracy, or `None` when the run failed.
    pub score: Option<f64>,
    pub error: Option<String>,
}

/// Table statistic for one axis value, aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub name: String,
    pub value: Option<Value>,
    pub runs: usize,
    pub failed: usize,
    pub mean: f64,
    pub std: f64,
}

/// Groups rows by value, keeping the order in which values first appear.
/// Failed runs are counted but excluded from the statistic.
pub fn aggregate(rows: &[SweepRow]) -> Vec<SweepCell> {
    let mut cells: Vec<(SweepCell, Vec<f64>)> = Vec::new();
    for r in rows {
        let pos = match cells.iter().position(|(c, _)| c.value == r.value) {
            Some(p) => p,
            None => {
                cells.push((
                    SweepCell {
                        name: r.name.clone(),
                        value: r.value.clone(),
                        runs: 0,
                        failed: 0,
                        mean: 0.0,
                        std: 0.0,
                    },
                    Vec::new(),
                ));
                cells.len() - 1
            }
        };
        let (cell, scores) = &mut cells[pos];
        cell.runs += 1;
        match r.score {
            Some(s) => scores.push(s),
            None => cell.failed += 1,
        }
    }
    cells
        .into_iter()
        .map(|(mut c, scores)| {
            (c.mean, c.std) = mean_std(&scores);
            c
        })
        .collect()
}

/// Sets the field at dotted `path` in `cfg` to `value`. The field must already exist
/// so that typos fail loudly instead of being ignored by serde defaults.
pub fn apply_override(
    cfg: &ExperimentConfig,
    path: &str,
    value: &Value,
) -> Result<ExperimentConfig> {
    let mut json = serde_json::to_value(cfg)?;
    let mut slot = &mut json;
    for key in path.split('.') {
        slot = slot
            .get_mut(key)
            .ok_or_else(|| Error::Config(format!("sweep parameter {path}: no field {key}")))?;
    }
    *slot = value.clone();
    let out: ExperimentConfig = serde_json::from_value(json)?;
    out.validate()?;
    Ok(out)
}

fn label(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

/// Runs every (value, seed) cell in parallel. Rows come back sorted by value
/// position and then seed, independent of scheduling.
pub fn sweep(
    spec: &SweepSpec,
    out: Option<&Path>,
    data_dir: Option<&Path>,
    force_synthetic: bool,
) -> Result<Vec<SweepRow>> {
    if spec.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    let values: Vec<Option<Value>> = match &spec.axis {
        Some(a) if a.values.is_empty() => {
            return Err(Error::Config("sweep axis has no values".into()))
        }
        Some(a) => a.values.iter().cloned().map(Some).collect(),
        None => vec![None],
    };
    let mut cells = Vec::new();
    for (vi, v) in values.iter().enumerate() {
        let mut cfg = match (v, &spec.axis) {
            (Some(v), Some(a)) => apply_override(&spec.base, &a.param, v)?,
            _ => spec.base.clone(),
        };
        if let (Some(v), Some(a)) = (v, &spec.axis) {
            cfg.name = format!("{}[{}={}]", spec.base.name, a.param, label(v));
        }
        for &seed in &spec.seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            cells.push((vi, c));
        }
    }
    // data is shared by every cell with the same source description
    let mut data: BTreeMap<String, Arc<Dataset>> = BTreeMap::new();
    for (_, c) in &cells {
        let key = serde_json::to_string(&c.task.data)?
            + &format!("{:?}{}", c.task.subset, c.task.data_seed);
        if !data.contains_key(&key) {
            data.insert(
                key.clone(),
                load_base_dataset(&c.task, data_dir, force_synthetic)?,
            );
        }
    }
    let mut rows: Vec<(usize, SweepRow)> = cells
        .par_iter()
        .map(|(vi, c)| {
            let key = serde_json::to_string(&c.task.data).unwrap_or_default()
                + &format!("{:?}{}", c.task.subset, c.task.data_seed);
            let base = data[&key].clone();
            let opts = RunOptions {
                out: out.map(|o| o.join(format!("v{vi}")).join(format!("seed{}", c.seed))),
                ..Default::default()
            };
            let result = run_with_data(c, base, &opts);
            let (score, error) = match result {
                Ok(r) => (
                    last_fraction_accuracy(&r.records, c.accuracy, TAIL_FRACTION),
                    None,
                ),
                Err(e) => (None, Some(e.to_string())),
            };
            (
                *vi,
                SweepRow {
                    name: c.name.clone(),
                    value: values[*vi].clone(),
                    seed: c.seed,
                    score,
                    error,
                },
            )
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.seed.cmp(&b.1.seed)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"name":"s","task":{"kind":"random_label","data":{"source":"synthetic","n":64,"dim":6,"classes":2},
                "num_tasks":2,"batch_size":8},
                "network":{"hidden":[8]},
                "optimizer":{"kind":"sgd","learning_rate":0.05},
                "intervention":{"method":"snr","eta":0.05,"window":20}}"#,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_sweep_matches_a_single_run() {
        let spec = SweepSpec {
            base: base(),
            axis: None,
            seeds: vec![4],
        };
        let rows = sweep(&spec, None, None, false).unwrap();
        let mut cfg = base();
        cfg.seed = 4;
        let run = crate::harness::run_experiment(&cfg, &RunOptions::default()).unwrap();
        let direct = last_fraction_accuracy(&run.records, cfg.accuracy, TAIL_FRACTION);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].score, direct);
    }

    #[test]
    fn override_reaches_nested_fields() {
        let c = apply_override(&base(), "intervention.eta", &json!(0.2)).unwrap();
        assert_eq!(c.intervention.snr().unwrap().config.eta, 0.2);
        assert!(apply_override(&base(), "intervention.etaa", &json!(0.2)).is_err());
        assert!(apply_override(&base(), "intervention.eta", &json!(2.0)).is_err());
    }

    #[test]
    fn rows_are_ordered_and_reproducible() {
        let spec = SweepSpec {
            base: base(),
            axis: Some(SweepAxis {
                param: "optimizer.learning_rate".into(),
                values: vec![json!(0.01), json!(0.1)],
            }),
            seeds: vec![3, 1, 2],
        };
        let a = sweep(&spec, None, None, false).unwrap();
        let b = sweep(&spec, None, None, false).unwrap();
        assert_eq!(a, b);
        let order: Vec<_> = a
            .iter()
            .map(|r| (r.value.clone().unwrap(), r.seed))
            .collect();
        assert_eq!(order[0], (json!(0.01), 1));
        assert_eq!(order[5], (json!(0.1), 3));
        assert!(a.iter().all(|r| r.score.is_some()));
        let cells = aggregate(&a);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[1].runs, 3);
        let manual: f64 = a[3..].iter().map(|r| r.score.unwrap()).sum::<f64>() / 3.0;
        assert!((cells[1].mean - manual).abs() < 1e-15);
    }
}
