use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub loss: f64,
    pub grad_logits: Array2<f64>,
    /// Number of rows whose arg-max logit equals the label.
    pub correct: usize,
}

pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<CrossEntropy> {
    let (batch, classes) = logits.dim();
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Input(format!("label {bad} outside [0, {classes})")));
    }
    let scale = 1.0 / batch as f64;
    let mut grad = Array2::zeros((batch, classes));
    let mut total = 0.0;
    let mut correct = 0;
    for (r, (row, mut g)) in logits.outer_iter().zip(grad.outer_iter_mut()).enumerate() {
        let mut best = 0;
        let mut max = f64::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if v > max {
                max = v;
                best = c;
            }
        }
        if best == labels[r] {
            correct += 1;
        }
        let mut sum = 0.0;
        for (gv, &v) in g.iter_mut().zip(row.iter()) {
            *gv = (v - max).exp();
            sum += *gv;
        }
        let log_sum = sum.ln();
        total += log_sum - (row[labels[r]] - max);
        for gv in g.iter_mut() {
            *gv *= scale / sum;
        }
        g[labels[r]] -= scale;
    }
    Ok(CrossEntropy {
        loss: total * scale,
        grad_logits: grad,
        correct,
    })
}
