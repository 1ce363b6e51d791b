//! Fully connected softmax classifier trained with adam.
//!
//! Hidden layers use relu. The loss is the batch-mean cross-entropy plus
//! `(l2 / 2) * sum ||W||_F^2` over weight matrices (biases excluded).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub l2_lambda: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            layer_sizes: vec![FEATURE_DIM, 300, 200, 100, 6],
            l2_lambda: 1e-4,
        }
    }
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, l2_lambda: f64) -> Result<Self> {
        let spec = Self { layer_sizes, l2_lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!("bad layer sizes {:?}", self.layer_sizes)));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Config(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    /// `weights[r]` is `D_{r+1} x D_r`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

struct Activations {
    /// Layer inputs `A_0 .. A_{R-1}` (batch-major).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<f64>>,
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    z
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.iter().map(|v| v / sum).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut m = Array2::zeros((rows.len(), dim));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::Dimension(format!("input has {} features, network expects {dim}", r.len())));
        }
        m.row_mut(i).assign(&ndarray::ArrayView1::from(r.as_slice()));
    }
    Ok(m)
}

impl Network {
    /// He-scaled Gaussian weights, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in spec.layer_sizes.windows(2) {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
            weights.push(Array2::from_shape_simple_fn((w[1], w[0]), || normal.sample(&mut rng)));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Self {
            spec: spec.clone(),
            weights,
            biases,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>) -> Activations {
        let mut inputs = Vec::with_capacity(self.layer_count());
        let mut pre = Vec::with_capacity(self.layer_count());
        let mut a = x.to_owned();
        for (r, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(&w.t()) + b;
            inputs.push(a);
            a = if r + 1 < self.layer_count() { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            pre.push(z);
        }
        Activations { inputs, pre }
    }

    /// Output-layer pre-activations, one row per input row.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        Ok(self.run(x).pre.pop().unwrap())
    }

    pub fn probabilities(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(softmax_rows(self.logits(x)?))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = to_matrix(std::slice::from_ref(&x.to_vec()), self.spec.input_dim())?;
        Ok(self.probabilities(m.view())?.row(0).to_vec())
    }

    /// 1-based class index and the class probabilities.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let p = self.forward(x)?;
        Ok((argmax(&p) + 1, p))
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        let m = to_matrix(rows, self.spec.input_dim())?;
        let logits = self.logits(m.view())?;
        Ok(logits.rows().into_iter().map(|r| argmax(r.as_slice().unwrap()) + 1).collect())
    }

    fn l2_term(&self) -> f64 {
        0.5 * self.spec.l2_lambda * self.weights.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
    }

    fn check_labels(&self, y: &[usize], rows: usize) -> Result<()> {
        if y.len() != rows {
            return Err(Error::Dimension(format!("{} labels for {rows} rows", y.len())));
        }
        let m = self.spec.classes();
        if let Some(&bad) = y.iter().find(|&&l| l == 0 || l > m) {
            return Err(Error::BadIndex { index: bad, size: m });
        }
        Ok(())
    }

    /// Mean cross-entropy over the batch plus the L2 term; labels are 1-based.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<f64> {
        Ok(self.loss_and_accuracy(x, y)?.0)
    }

    pub fn loss_and_accuracy(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<(f64, f64)> {
        self.check_input(&x)?;
        self.check_labels(y, x.nrows())?;
        let logits = self.run(x).pre.pop().unwrap();
        let mut ce = 0.0;
        let mut correct = 0usize;
        for (row, &label) in logits.rows().into_iter().zip(y) {
            let row = row.as_slice().unwrap();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            ce += lse - row[label - 1];
            correct += usize::from(argmax(row) + 1 == label);
        }
        let n = x.nrows().max(1) as f64;
        Ok((ce / n + self.l2_term(), correct as f64 / n))
    }

    pub fn backward(&self, x: ArrayView2<f64>, y: &[usize]) -> Result<Gradients> {
        self.check_input(&x)?;
        self.check_labels(y, x.nrows())?;
        let acts = self.run(x);
        let n = x.nrows() as f64;
        let mut delta = softmax_rows(acts.pre.last().unwrap().clone());
        for (mut row, &label) in delta.rows_mut().into_iter().zip(y) {
            row[label - 1] -= 1.0;
        }
        delta /= n;
        let layers = self.layer_count();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        for r in (0..layers).rev() {
            let mut dw = delta.t().dot(&acts.inputs[r]);
            dw.scaled_add(self.spec.l2_lambda, &self.weights[r]);
            gw.push(dw);
            gb.push(delta.sum_axis(Axis(0)));
            if r > 0 {
                let mut d = delta.dot(&self.weights[r]);
                d.zip_mut_with(&acts.pre[r - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = d;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok(Gradients { weights: gw, biases: gb })
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn to_text(&self) -> String {
        let hex = |v: &f64| format!("{:016x}", v.to_bits());
        let sizes: Vec<String> = self.spec.layer_sizes.iter().map(usize::to_string).collect();
        let mut out = format!("{MODEL_HEADER}\nspec {} l2 {}\n", sizes.join(","), hex(&self.spec.l2_lambda));
        for (r, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let _ = writeln!(out, "layer {} {} {}", r + 1, w.nrows(), w.ncols());
            for row in w.rows() {
                out.push_str("w ");
                out.push_str(&row.iter().map(hex).collect::<Vec<_>>().join(" "));
                out.push('\n');
            }
            out.push_str("b ");
            out.push_str(&b.iter().map(hex).collect::<Vec<_>>().join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::ModelFormat(m);
        let mut lines = text.lines();
        match lines.next() {
            Some(MODEL_HEADER) => {}
            Some(h) if h.starts_with("numerolab-mlp") => return Err(bad(format!("unsupported version `{h}`"))),
            _ => return Err(bad("missing `numerolab-mlp v1` header".into())),
        }
        let parse_hex = |t: &str| -> Result<f64> {
            let v = u64::from_str_radix(t, 16)
                .map(f64::from_bits)
                .map_err(|_| bad(format!("bad value `{t}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad("non-finite parameter".into()))
            }
        };
        let spec_line = lines.next().ok_or_else(|| bad("missing spec line".into()))?;
        let parts: Vec<&str> = spec_line.split_whitespace().collect();
        let (sizes, l2) = match parts.as_slice() {
            ["spec", sizes, "l2", l2] => (*sizes, parse_hex(l2)?),
            _ => return Err(bad("malformed spec line".into())),
        };
        let sizes: Vec<usize> = sizes
            .split(',')
            .map(|s| s.parse().map_err(|_| bad(format!("bad layer size `{s}`"))))
            .collect::<Result<_>>()?;
        let spec = NetworkSpec::new(sizes, l2).map_err(|e| bad(e.to_string()))?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (r, w) in spec.layer_sizes.windows(2).enumerate() {
            let (rows, cols) = (w[1], w[0]);
            let expect = format!("layer {} {rows} {cols}", r + 1);
            if lines.next() != Some(expect.as_str()) {
                return Err(bad(format!("expected `{expect}`")));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| bad("truncated weights".into()))?;
                let vals = line.strip_prefix("w ").ok_or_else(|| bad("expected weight row".into()))?;
                let row: Vec<f64> = vals.split(' ').map(parse_hex).collect::<Result<_>>()?;
                if row.len() != cols {
                    return Err(bad(format!("weight row of {} values, expected {cols}", row.len())));
                }
                data.extend(row);
            }
            let line = lines.next().ok_or_else(|| bad("truncated biases".into()))?;
            let vals = line.strip_prefix("b ").ok_or_else(|| bad("expected bias row".into()))?;
            let b: Vec<f64> = vals.split(' ').map(parse_hex).collect::<Result<_>>()?;
            if b.len() != rows {
                return Err(bad(format!("bias row of {} values, expected {rows}", b.len())));
            }
            weights.push(Array2::from_shape_vec((rows, cols), data).expect("checked shape"));
            biases.push(Array1::from(b));
        }
        if lines.next() != Some("end") || lines.next().is_some() {
            return Err(bad("missing `end` marker".into()));
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

const MODEL_HEADER: &str = "numerolab-mlp v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 128,
            epochs: 100,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.beta1, self.beta2, self.epsilon];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("adam parameters must be positive (betas below 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros = Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        };
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if grads.weights.len() != net.weights.len() || state.m.weights.len() != net.weights.len() {
        return Err(Error::Dimension("optimizer state does not match the network".into()));
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    };
    for r in 0..net.weights.len() {
        ndarray::Zip::from(&mut net.weights[r])
            .and(&grads.weights[r])
            .and(&mut state.m.weights[r])
            .and(&mut state.v.weights[r])
            .for_each(|p, &g, m, v| update(p, g, m, v));
        ndarray::Zip::from(&mut net.biases[r])
            .and(&grads.biases[r])
            .and(&mut state.m.biases[r])
            .and(&mut state.v.biases[r])
            .for_each(|p, &g, m, v| update(p, g, m, v));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for h in history {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e}",
            h.epoch, h.train_loss, h.train_acc, h.val_loss, h.val_acc
        );
    }
    s
}

/// Labeled rows in network input space.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: Array2<f64>,
    /// 1-based labels.
    pub y: Vec<usize>,
}

impl LabeledSet {
    pub fn new(rows: &[Vec<f64>], y: Vec<usize>, dim: usize) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Dimension(format!("{} rows, {} labels", rows.len(), y.len())));
        }
        Ok(Self {
            x: to_matrix(rows, dim)?,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

pub struct TrainOutcome {
    /// Snapshot with the best validation accuracy (earliest on ties).
    pub best: Network,
    pub best_epoch: usize,
    pub last: Network,
    pub history: Vec<EpochRecord>,
}

/// Mini-batch adam over seeded per-epoch shuffles. With an empty `val`,
/// training accuracy selects the snapshot.
pub fn train(net: Network, train_set: &LabeledSet, val: &LabeledSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if cfg.batch_size > train_set.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} training samples",
            cfg.batch_size,
            train_set.len()
        )));
    }
    let mut net = net;
    let mut state = AdamState::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (net.clone(), 0usize, f64::NEG_INFINITY);
    let dim = train_set.x.ncols();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut xb = Array2::zeros((chunk.len(), dim));
            for (i, &j) in chunk.iter().enumerate() {
                xb.row_mut(i).assign(&train_set.x.row(j));
            }
            let yb: Vec<usize> = chunk.iter().map(|&j| train_set.y[j]).collect();
            let g = net.backward(xb.view(), &yb)?;
            adam_step(&mut net, &g, &mut state, cfg)?;
        }
        let (train_loss, train_acc) = net.loss_and_accuracy(train_set.x.view(), &train_set.y)?;
        let (val_loss, val_acc) = if val.is_empty() {
            (f64::NAN, train_acc)
        } else {
            net.loss_and_accuracy(val.x.view(), &val.y)?
        };
        if !train_loss.is_finite() || !net.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, loss: train_loss });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        if val_acc > best.2 {
            best = (net.clone(), epoch, val_acc);
        }
    }
    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        last: net,
        history,
    })
}

/// Largest relative error between backprop and central differences
/// (step 1e-5) over `coords` randomly chosen parameters. Coordinates whose
/// gradient magnitude is below 1e-7 are skipped.
pub fn gradient_check(net: &Network, x: ArrayView2<f64>, y: &[usize], coords: usize, seed: u64) -> Result<f64> {
    use rand::Rng;
    let g = net.backward(x, y)?;
    let mut probe = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let layer = rng.gen_range(0..net.layer_count());
        let (rows, cols) = net.weights[layer].dim();
        let row = rng.gen_range(0..rows);
        let col = rng.gen_range(0..cols);
        let is_bias = rng.gen_bool(0.25);
        let analytic = if is_bias { g.biases[layer][row] } else { g.weights[layer][(row, col)] };
        let mut eval = |delta: f64| -> Result<f64> {
            let p = if is_bias { &mut probe.biases[layer][row] } else { &mut probe.weights[layer][(row, col)] };
            let orig = *p;
            *p = orig + delta;
            let l = probe.loss(x, y);
            let p = if is_bias { &mut probe.biases[layer][row] } else { &mut probe.weights[layer][(row, col)] };
            *p = orig;
            l
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale > 1e-7 {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    Ok(worst)
}
