//! Single-hidden-layer network with logistic units, trained by full-batch
//! gradient descent on mean log-loss.

use rand::Rng;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::math::expit;
use crate::rng::SimRng;

pub const DEFAULT_HIDDEN: usize = 4;
pub const DEFAULT_EPOCHS: usize = 2000;
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Flat parameter layout: hidden weights (row per unit), hidden biases,
/// output weights, output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub inputs: usize,
    pub hidden: usize,
    pub values: Vec<f64>,
}

impl NetParams {
    pub fn len_for(inputs: usize, hidden: usize) -> usize {
        hidden * inputs + hidden + hidden + 1
    }

    fn w1(&self, unit: usize) -> &[f64] {
        &self.values[unit * self.inputs..(unit + 1) * self.inputs]
    }

    fn b1(&self, unit: usize) -> f64 {
        self.values[self.hidden * self.inputs + unit]
    }

    fn w2(&self, unit: usize) -> f64 {
        self.values[self.hidden * self.inputs + self.hidden + unit]
    }

    fn b2(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let mut out = self.b2();
        for (u, h) in hidden.iter_mut().enumerate() {
            let z = self.b1(u) + self.w1(u).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            *h = expit(z);
            out += self.w2(u) * *h;
        }
        expit(out)
    }
}

/// Mean log-loss and its gradient by backpropagation. `x` rows must already
/// be standardized.
pub fn loss_and_gradient(params: &NetParams, x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let mut grad = vec![0.0; params.values.len()];
    let loss = accumulate(params, &flat, y, &mut grad);
    (loss, grad)
}

/// Loss and gradient over row-major `x`; `grad` is overwritten.
fn accumulate(params: &NetParams, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
    let (p, h) = (params.inputs, params.hidden);
    let n = y.len() as f64;
    let v = &params.values;
    let (w1, rest) = v.split_at(h * p);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(h);
    let b2 = b2[0];
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut hidden = vec![0.0; h];
    let mut loss = 0.0;
    for (row, &target) in x.chunks_exact(p).zip(y) {
        let mut out = b2;
        for u in 0..h {
            let wu = &w1[u * p..(u + 1) * p];
            let mut z = b1[u];
            for k in 0..p {
                z += wu[k] * row[k];
            }
            let a = expit(z);
            hidden[u] = a;
            out += w2[u] * a;
        }
        let q = expit(out);
        let picked = if target > 0.5 { q } else { 1.0 - q };
        loss -= picked.max(1e-15).ln();
        let delta_out = (q - target) / n;
        let (gw1, rest) = grad.split_at_mut(h * p);
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(h);
        gb2[0] += delta_out;
        for u in 0..h {
            gw2[u] += delta_out * hidden[u];
            let delta_h = delta_out * w2[u] * hidden[u] * (1.0 - hidden[u]);
            gb1[u] += delta_h;
            let g = &mut gw1[u * p..(u + 1) * p];
            for k in 0..p {
                g[k] += delta_h * row[k];
            }
        }
    }
    loss / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    pub params: NetParams,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Mean training log-loss after each epoch.
    pub loss_trace: Vec<f64>,
}

impl NeuralNet {
    pub(crate) fn predict_row(&self, row: &[f64], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend(
            row.iter()
                .zip(self.center.iter().zip(&self.scale))
                .map(|(v, (c, s))| (v - c) / s),
        );
        let mut hidden = vec![0.0; self.params.hidden];
        self.params.forward(buf, &mut hidden)
    }
}

pub(crate) fn standardize(x: &FeatureMatrix) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = x.n_rows() as f64;
    let p = x.n_cols();
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col = x.column(j);
        let m = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        center[j] = m;
        scale[j] = if sd > 0.0 { sd } else { 1.0 };
    }
    let rows = (0..x.n_rows())
        .map(|i| {
            x.row(i)
                .iter()
                .enumerate()
                .map(|(j, v)| (v - center[j]) / scale[j])
                .collect()
        })
        .collect();
    (rows, center, scale)
}

pub(crate) fn fit(
    x: &FeatureMatrix,
    y: &[f64],
    hidden: usize,
    epochs: usize,
    learning_rate: f64,
    rng: &mut SimRng,
) -> Result<NeuralNet> {
    if hidden == 0 {
        return Err(Error::fit(
            "neural net",
            "hidden layer needs at least one unit",
        ));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::fit("neural net", "learning rate must be positive"));
    }
    let (rows, center, scale) = standardize(x);
    let inputs = x.n_cols();
    let mut params = NetParams {
        inputs,
        hidden,
        values: (0..NetParams::len_for(inputs, hidden))
            .map(|_| rng.random_range(-0.5..0.5))
            .collect(),
    };
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let mut grad = vec![0.0; params.values.len()];
    let mut loss_trace = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let loss = accumulate(&params, &flat, y, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::fit(
                "neural net",
                format!("non-finite loss at epoch {epoch}"),
            ));
        }
        for (w, g) in params.values.iter_mut().zip(&grad) {
            *w -= learning_rate * g;
        }
        loss_trace.push(loss);
    }
    Ok(NeuralNet {
        params,
        center,
        scale,
        loss_trace,
    })
}
