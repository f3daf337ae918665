use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{load_base_dataset, AccuracyMode, ExperimentConfig, Intervention};
use crate::error::{Error, Result};
use crate::interventions::{
    apply_resets, cbp_step, penalty_gradient, redo_step, snp_apply, snr_select, ActivityTracker,
    CbpState, FiringMode, Regularizer, ResetEvent, ResetTrigger,
};
use crate::nn::{
    cross_entropy, gradients_from_sections, gradients_to_sections, net_from_sections,
    net_to_sections, read_sections, write_sections, DenseNet, OptimizerState, Section,
};
use crate::rng;
use crate::tasks::{Dataset, TaskStream};

/// Tracker window used for dead-neuron counting when SNR is not active.
const DEFAULT_WINDOW: usize = 1000;

/// Per-task summary line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task: usize,
    pub online_accuracy: f64,
    pub final_epoch_accuracy: f64,
    pub final_epoch_loss: f64,
    pub dead_neurons: usize,
    pub weight_norms: Vec<f64>,
    pub resets_task: usize,
    pub resets_total: usize,
    pub steps: u64,
}

impl MetricsRecord {
    pub fn accuracy(&self, mode: AccuracyMode) -> f64 {
        match mode {
            AccuracyMode::Online => self.online_accuracy,
            AccuracyMode::FinalEpoch => self.final_epoch_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub(crate) enum Line {
    Config {
        config: ExperimentConfig,
    },
    Task(MetricsRecord),
    Reset {
        task: usize,
        step: u64,
        layer: usize,
        neuron: usize,
        trigger: ResetTrigger,
    },
    Failure {
        task: usize,
        step: u64,
        reason: String,
    },
}

impl Line {
    fn task(&self) -> Option<usize> {
        match self {
            Line::Config { .. } => None,
            Line::Task(r) => Some(r.task),
            Line::Reset { task, .. } | Line::Failure { task, .. } => Some(*task),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory for metrics and checkpoints; nothing is written when absent.
    pub out: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub force_synthetic: bool,
    /// Continue from the checkpoint in `out` if one exists.
    pub resume: bool,
    /// Stop after this many tasks have completed, as if the process were killed.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<MetricsRecord>,
    pub resets: usize,
}

/// Steps covering `examples` training examples: `ceil(examples / batch)` when
/// one step is a batch.
pub fn dead_window_steps(examples: u64, batch_size: usize, mode: FiringMode) -> u64 {
    match mode {
        FiringMode::BatchAny => examples.div_ceil(batch_size as u64).max(1),
        FiringMode::PerExample => examples.max(1),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let base = load_base_dataset(&cfg.task, opts.data_dir.as_deref(), opts.force_synthetic)?;
    run_with_data(cfg, base, opts)
}

struct State {
    net: DenseNet,
    opt: OptimizerState,
    tracker: ActivityTracker,
    cbp: Option<CbpState>,
    step: u64,
    resets_total: usize,
    next_task: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    next_task: usize,
    step: u64,
    resets_total: usize,
    opt_step: u64,
    tracker: ActivityTracker,
    cbp_age: Option<Vec<Vec<u64>>>,
}

impl State {
    fn fresh(cfg: &ExperimentConfig, base: &Dataset) -> Result<State> {
        let mut sizes = vec![base.dim()];
        sizes.extend(&cfg.network.hidden);
        sizes.push(base.classes());
        let net = DenseNet::new(
            &sizes,
            rng::derive_seed(cfg.seed, "network", 0),
            cfg.network.init,
        )?
        .with_layer_norm(cfg.network.layer_norm);
        let opt = OptimizerState::new(cfg.optimizer.kind, cfg.optimizer.learning_rate, &net);
        let (window, grace, mode) = match cfg.intervention.snr() {
            Some(s) => (s.config.window, s.config.grace_steps(), s.firing),
            None => (DEFAULT_WINDOW, DEFAULT_WINDOW as u64, FiringMode::BatchAny),
        };
        let tracker = ActivityTracker::new(&net.hidden_widths(), window, grace, mode)?;
        let cbp = matches!(cfg.intervention, Intervention::Cbp(_))
            .then(|| CbpState::new(&net.hidden_widths()));
        Ok(State {
            net,
            opt,
            tracker,
            cbp,
            step: 0,
            resets_total: 0,
            next_task: 0,
        })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let mut sections = net_to_sections(&self.net);
        if let Some((m, v)) = self.opt.moments() {
            sections.extend(gradients_to_sections("adam_m", m));
            sections.extend(gradients_to_sections("adam_v", v));
        }
        if let Some(c) = &self.cbp {
            for (k, u) in c.utility.iter().enumerate() {
                sections.push(Section {
                    name: format!("cbp_utility{k}"),
                    shape: vec![u.len()],
                    values: u.clone(),
                });
            }
            sections.push(Section {
                name: "cbp_budget".into(),
                shape: vec![c.budget.len()],
                values: c.budget.clone(),
            });
        }
        let meta = CheckpointMeta {
            next_task: self.next_task,
            step: self.step,
            resets_total: self.resets_total,
            opt_step: self.opt.step,
            tracker: self.tracker.clone(),
            cbp_age: self.cbp.as_ref().map(|c| c.age.clone()),
        };
        let blob = dir.join("checkpoint.bin");
        let json = dir.join("checkpoint.json");
        let tmp_blob = dir.join("checkpoint.bin.tmp");
        let tmp_json = dir.join("checkpoint.json.tmp");
        let f = File::create(&tmp_blob).map_err(|e| Error::io(&tmp_blob, e))?;
        write_sections(BufWriter::new(f), &sections)?;
        fs::write(&tmp_json, serde_json::to_vec(&meta)?).map_err(|e| Error::io(&tmp_json, e))?;
        fs::rename(&tmp_blob, &blob).map_err(|e| Error::io(&blob, e))?;
        fs::rename(&tmp_json, &json).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }

    fn load(cfg: &ExperimentConfig, base: &Dataset, dir: &Path) -> Result<Option<State>> {
        let blob = dir.join("checkpoint.bin");
        let json = dir.join("checkpoint.json");
        if !blob.exists() || !json.exists() {
            return Ok(None);
        }
        let mut state = State::fresh(cfg, base)?;
        let f = File::open(&blob).map_err(|e| Error::io(&blob, e))?;
        let sections = read_sections(BufReader::new(f))?;
        let text = fs::read(&json).map_err(|e| Error::io(&json, e))?;
        let meta: CheckpointMeta = serde_json::from_slice(&text)?;
        state.net = net_from_sections(&sections, cfg.network.init, cfg.network.layer_norm)?;
        if state.net.layer_sizes() != State::fresh(cfg, base)?.net.layer_sizes() {
            return Err(Error::Shape(
                "checkpoint does not match the configured network".into(),
            ));
        }
        let layers = state.net.layers().len();
        if state.opt.moments().is_some() {
            let m = gradients_from_sections("adam_m", layers, &sections)?;
            let v = gradients_from_sections("adam_v", layers, &sections)?;
            state.opt.restore_moments(m, v);
        }
        state.opt.step = meta.opt_step;
        if let Some(c) = state.cbp.as_mut() {
            let find = |name: &str| {
                sections
                    .iter()
                    .find(|s| s.name == name)
                    .map(|s| s.values.clone())
                    .ok_or_else(|| Error::Input(format!("checkpoint lacks {name}")))
            };
            for k in 0..c.utility.len() {
                c.utility[k] = find(&format!("cbp_utility{k}"))?;
            }
            c.budget = find("cbp_budget")?;
            c.age = meta
                .cbp_age
                .ok_or_else(|| Error::Input("checkpoint lacks CBP ages".into()))?;
        }
        state.tracker = meta.tracker;
        state.step = meta.step;
        state.resets_total = meta.resets_total;
        state.next_task = meta.next_task;
        Ok(Some(state))
    }
}

struct Sink {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
    path: PathBuf,
}

const CSV_HEADER: &str = "task,online_accuracy,final_epoch_accuracy,final_epoch_loss,dead_neurons,resets_task,resets_total,steps,weight_norms";

impl Sink {
    /// Opens fresh files, or keeps only lines for tasks before `keep_before` when resuming.
    fn open(dir: &Path, cfg: &ExperimentConfig, keep_before: Option<usize>) -> Result<Sink> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("metrics.jsonl");
        let csv_path = dir.join("metrics.csv");
        let mut kept: Vec<Line> = Vec::new();
        if let (Some(limit), true) = (keep_before, path.exists()) {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: Line = serde_json::from_str(&line)?;
                if parsed.task().is_none_or(|t| t < limit) {
                    kept.push(parsed);
                }
            }
        }
        if kept.is_empty() {
            kept.push(Line::Config {
                config: cfg.clone(),
            });
        }
        let open = |p: &Path| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| Error::io(p, e))
        };
        let mut sink = Sink {
            jsonl: open(&path)?,
            csv: open(&csv_path)?,
            path,
        };
        writeln!(sink.csv, "{CSV_HEADER}").map_err(|e| Error::io(&csv_path, e))?;
        for l in &kept {
            sink.push(l)?;
        }
        sink.flush()?;
        Ok(sink)
    }

    fn push(&mut self, line: &Line) -> Result<()> {
        let text = serde_json::to_string(line)?;
        writeln!(self.jsonl, "{text}").map_err(|e| Error::io(&self.path, e))?;
        if let Line::Task(r) = line {
            let norms: Vec<String> = r.weight_norms.iter().map(|n| format!("{n:e}")).collect();
            writeln!(
                self.csv,
                "{},{},{},{},{},{},{},{},{}",
                r.task,
                r.online_accuracy,
                r.final_epoch_accuracy,
                r.final_epoch_loss,
                r.dead_neurons,
                r.resets_task,
                r.resets_total,
                r.steps,
                norms.join(";")
            )
            .map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.jsonl.flush().map_err(|e| Error::io(&self.path, e))?;
        self.csv.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn read_records(path: &Path) -> Result<Vec<MetricsRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Ok(Line::Task(r)) = serde_json::from_str(&line) {
            out.push(r);
        }
    }
    Ok(out)
}

/// Runs `cfg` on an already loaded base dataset.
pub fn run_with_data(
    cfg: &ExperimentConfig,
    base: Arc<Dataset>,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let resumed = match (&opts.out, opts.resume) {
        (Some(dir), true) => State::load(cfg, &base, dir)?,
        _ => None,
    };
    let mut sink = match &opts.out {
        Some(dir) => Some(Sink::open(dir, cfg, resumed.as_ref().map(|s| s.next_task))?),
        None => None,
    };
    let mut records = match (&resumed, &opts.out) {
        (Some(_), Some(dir)) => read_records(&dir.join("metrics.jsonl"))?,
        _ => Vec::new(),
    };
    let mut state = match resumed {
        Some(s) => s,
        None => State::fresh(cfg, &base)?,
    };
    let stream = TaskStream {
        kind: cfg.task.kind,
        base: base.clone(),
        num_tasks: cfg.task.num_tasks,
        seed: cfg.seed,
        epochs: cfg.task.epochs,
        batch_size: cfg.task.batch_size,
    };
    let dead_steps = dead_window_steps(
        cfg.dead_window_examples,
        cfg.task.batch_size,
        state.tracker.mode(),
    );
    let reg = cfg.intervention.regularizer();
    for (completed, t) in (state.next_task..cfg.task.num_tasks).enumerate() {
        if opts.stop_after.is_some_and(|k| completed >= k) {
            break;
        }
        let task = stream.task(t)?;
        let mut rng = rng::stream(cfg.seed, "interventions", t as u64);
        let mut events: Vec<ResetEvent> = Vec::new();
        let (mut online_correct, mut last_correct, mut last_loss) = (0usize, 0usize, 0.0);
        let mut last_batch = Vec::new();
        for epoch in 0..cfg.task.epochs {
            let final_epoch = epoch + 1 == cfg.task.epochs;
            for idx in stream.epoch_batches(t, epoch)? {
                let (x, y) = task.select(&idx);
                let trace = state.net.forward(x.view())?;
                let ce = cross_entropy(trace.logits.view(), &y)?;
                if !ce.loss.is_finite() {
                    let reason = format!("non-finite loss {} at step {}", ce.loss, state.step);
                    return fail(sink.as_mut(), t, state.step, reason);
                }
                if epoch == 0 {
                    online_correct += ce.correct;
                }
                if final_epoch {
                    last_correct += ce.correct;
                    last_loss += ce.loss * y.len() as f64;
                }
                state.tracker.update(&trace)?;
                let grads = state.net.backward(&trace, ce.grad_logits.view())?;
                let extra = reg.as_ref().and_then(|r| penalty_gradient(&state.net, r));
                state.opt.apply(&mut state.net, &grads, extra.as_ref())?;
                if let Some(Regularizer::ShrinkPerturb { shrink, sigma }) = reg {
                    snp_apply(&mut state.net, shrink, sigma, &mut rng);
                }
                if !state.net.all_finite() {
                    let reason = format!("non-finite parameters after step {}", state.step);
                    return fail(sink.as_mut(), t, state.step, reason);
                }
                if let Some(s) = cfg.intervention.snr() {
                    let targets = snr_select(&state.tracker, &s.config);
                    events.extend(apply_resets(
                        &mut state.net,
                        &mut state.opt,
                        &mut state.tracker,
                        &targets,
                        ResetTrigger::Snr,
                        state.step,
                        &mut rng,
                    )?);
                }
                if let (Intervention::Cbp(c), Some(cs)) = (&cfg.intervention, state.cbp.as_mut()) {
                    events.extend(cbp_step(
                        &mut state.net,
                        &mut state.opt,
                        &mut state.tracker,
                        &trace,
                        cs,
                        c,
                        state.step,
                        &mut rng,
                    )?);
                }
                state.step += 1;
                last_batch = idx;
            }
        }
        if let Intervention::Redo(r) = &cfg.intervention {
            if r.due(t) {
                let (x, _) = task.select(&last_batch);
                events.extend(redo_step(
                    &mut state.net,
                    &mut state.opt,
                    &mut state.tracker,
                    x.view(),
                    r,
                    state.step,
                    &mut rng,
                )?);
            }
        }
        state.resets_total += events.len();
        let n = task.len() as f64;
        let record = MetricsRecord {
            task: t,
            online_accuracy: online_correct as f64 / n,
            final_epoch_accuracy: last_correct as f64 / n,
            final_epoch_loss: last_loss / n,
            dead_neurons: state.tracker.dead_count(dead_steps),
            weight_norms: state.net.weight_norms(),
            resets_task: events.len(),
            resets_total: state.resets_total,
            steps: state.step,
        };
        state.next_task = t + 1;
        if let Some(s) = sink.as_mut() {
            if cfg.log_resets {
                for e in &events {
                    s.push(&Line::Reset {
                        task: t,
                        step: e.step,
                        layer: e.layer,
                        neuron: e.neuron,
                        trigger: e.trigger,
                    })?;
                }
            }
            s.push(&Line::Task(record.clone()))?;
            s.flush()?;
            if cfg.checkpoint {
                state.save(
                    opts.out
                        .as_deref()
                        .expect("sink implies an output directory"),
                )?;
            }
        }
        records.push(record);
    }
    Ok(RunOutcome {
        records,
        resets: state.resets_total,
    })
}

fn fail<T>(sink: Option<&mut Sink>, task: usize, step: u64, reason: String) -> Result<T> {
    if let Some(s) = sink {
        s.push(&Line::Failure {
            task,
            step,
            reason: reason.clone(),
        })?;
        s.flush()?;
    }
    Err(Error::Numeric(reason))
}
