use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ForwardTrace;

/// What counts as one observation step for the firing statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiringMode {
    /// One step per batch; a neuron fired if it was positive on any row.
    #[default]
    BatchAny,
    /// One step per example, processed in row order.
    PerExample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerActivity {
    since_fire: Vec<u64>,
    fire_count: Vec<u32>,
    grace: Vec<u64>,
    /// Neuron-major ring buffer of the last `window` firing indicators.
    history: Vec<bool>,
}

impl LayerActivity {
    fn new(width: usize, window: usize) -> Self {
        LayerActivity {
            since_fire: vec![0; width],
            fire_count: vec![0; width],
            grace: vec![0; width],
            history: vec![false; width * window],
        }
    }
}

/// Per-neuron firing statistics for every hidden layer: steps since the last
/// firing, a trailing-window firing-rate estimate and a post-reset grace
/// counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityTracker {
    window: usize,
    grace_steps: u64,
    mode: FiringMode,
    cursor: usize,
    steps: u64,
    layers: Vec<LayerActivity>,
}

impl ActivityTracker {
    pub fn new(
        hidden_widths: &[usize],
        window: usize,
        grace_steps: u64,
        mode: FiringMode,
    ) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("tracker window must be at least 1".into()));
        }
        Ok(ActivityTracker {
            window,
            grace_steps,
            mode,
            cursor: 0,
            steps: 0,
            layers: hidden_widths
                .iter()
                .map(|&w| LayerActivity::new(w, window))
                .collect(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn mode(&self) -> FiringMode {
        self.mode
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self, layer: usize) -> usize {
        self.layers[layer].since_fire.len()
    }

    /// Steps since neuron `i` of `layer` last fired.
    pub fn since_fire(&self, layer: usize, i: usize) -> u64 {
        self.layers[layer].since_fire[i]
    }

    pub fn fire_count(&self, layer: usize, i: usize) -> u32 {
        self.layers[layer].fire_count[i]
    }

    pub fn grace(&self, layer: usize, i: usize) -> u64 {
        self.layers[layer].grace[i]
    }

    /// Trailing-window firing rate, floored at `1/window`.
    pub fn rate(&self, layer: usize, i: usize) -> f64 {
        let w = self.window as f64;
        (f64::from(self.layers[layer].fire_count[i]) / w).max(1.0 / w)
    }

    /// Records one observation per neuron. `fired` is indexed `[layer][neuron]`.
    pub fn observe(&mut self, fired: &[Vec<bool>]) -> Result<()> {
        if fired.len() != self.layers.len()
            || fired
                .iter()
                .zip(&self.layers)
                .any(|(f, l)| f.len() != l.since_fire.len())
        {
            return Err(Error::Shape(
                "firing pattern does not match tracked layers".into(),
            ));
        }
        let (window, cursor) = (self.window, self.cursor);
        for (layer, f) in self.layers.iter_mut().zip(fired) {
            for (i, &on) in f.iter().enumerate() {
                let slot = &mut layer.history[i * window + cursor];
                if *slot {
                    layer.fire_count[i] -= 1;
                }
                *slot = on;
                if on {
                    layer.fire_count[i] += 1;
                    layer.since_fire[i] = 0;
                } else {
                    layer.since_fire[i] += 1;
                }
                layer.grace[i] = layer.grace[i].saturating_sub(1);
            }
        }
        self.cursor = (cursor + 1) % window;
        self.steps += 1;
        Ok(())
    }

    /// Updates the statistics from a forward pass.
    pub fn update(&mut self, trace: &ForwardTrace) -> Result<()> {
        if trace.num_hidden() != self.layers.len() {
            return Err(Error::Shape(format!(
                "trace has {} hidden layers, tracker {}",
                trace.num_hidden(),
                self.layers.len()
            )));
        }
        match self.mode {
            FiringMode::BatchAny => {
                let fired: Vec<Vec<bool>> = (0..trace.num_hidden())
                    .map(|k| {
                        let h = trace.hidden(k);
                        (0..h.ncols())
                            .map(|i| h.column(i).iter().any(|v| *v > 0.0))
                            .collect()
                    })
                    .collect();
                self.observe(&fired)
            }
            FiringMode::PerExample => {
                for r in 0..trace.batch_size() {
                    let fired: Vec<Vec<bool>> = (0..trace.num_hidden())
                        .map(|k| trace.hidden(k).row(r).iter().map(|v| *v > 0.0).collect())
                        .collect();
                    self.observe(&fired)?;
                }
                Ok(())
            }
        }
    }

    /// Forgets a neuron's history and starts its grace period.
    pub fn reset_neuron(&mut self, layer: usize, i: usize) {
        let window = self.window;
        let l = &mut self.layers[layer];
        l.since_fire[i] = 0;
        l.fire_count[i] = 0;
        l.grace[i] = self.grace_steps;
        l.history[i * window..(i + 1) * window].fill(false);
    }

    /// Number of hidden neurons silent for at least `steps` consecutive steps.
    pub fn dead_count(&self, steps: u64) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.since_fire.iter())
            .filter(|&&a| a >= steps)
            .count()
    }
}
