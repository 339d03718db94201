//! Siamese embedding network.
//!
//! Two twins share one parameter set and map an i-vector to a lower-dimensional
//! embedding. Training minimizes `(y - cos(G(a), G(b)))^2` over labeled pairs,
//! with `y = +1` for same-dialect pairs and `y = -1` otherwise. Gradients are
//! computed by hand-written backpropagation through both twins.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::types::{Domain, IVector, IVectorSet, LabelSet};

/// Embeddings with a smaller norm are treated as having no direction.
pub const MIN_EMBEDDING_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    /// Valid (unpadded) 1-D convolution over a `(channels, length)` signal.
    Conv1d {
        kernel: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
    },
    /// Dense layer over the flattened (channel-major) input.
    FullyConnected {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
}

impl Layer {
    fn activation(&self) -> Activation {
        match *self {
            Layer::Conv1d { activation, .. } | Layer::FullyConnected { activation, .. } => activation,
        }
    }

    fn shapes(&self) -> (usize, usize) {
        match *self {
            Layer::Conv1d {
                kernel,
                in_channels,
                out_channels,
                ..
            } => (out_channels * in_channels * kernel, out_channels),
            Layer::FullyConnected { inputs, outputs, .. } => (outputs * inputs, outputs),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            Layer::Conv1d { kernel, in_channels, .. } => kernel * in_channels,
            Layer::FullyConnected { inputs, .. } => inputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiameseArch {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<Layer>,
}

/// Signal shape flowing between layers: `(channels, length)`; flat vectors use one channel.
#[derive(Debug, Clone, Copy)]
struct Shape {
    channels: usize,
    length: usize,
}

impl SiameseArch {
    /// Two tanh conv layers (kernel 8, stride 2, channels 1 -> 4 -> 8) and a
    /// linear fully connected layer down to `output_dim`.
    pub fn conv_default(input_dim: usize, output_dim: usize) -> Result<Self> {
        let l1 = conv_len(input_dim, 8, 2)?;
        let l2 = conv_len(l1, 8, 2)?;
        let arch = SiameseArch {
            input_dim,
            output_dim,
            layers: vec![
                Layer::Conv1d {
                    kernel: 8,
                    stride: 2,
                    in_channels: 1,
                    out_channels: 4,
                    activation: Activation::Tanh,
                },
                Layer::Conv1d {
                    kernel: 8,
                    stride: 2,
                    in_channels: 4,
                    out_channels: 8,
                    activation: Activation::Tanh,
                },
                Layer::FullyConnected {
                    inputs: 8 * l2,
                    outputs: output_dim,
                    activation: Activation::Identity,
                },
            ],
        };
        arch.validate()?;
        Ok(arch)
    }

    fn shapes(&self) -> Result<Vec<Shape>> {
        let mut cur = Shape {
            channels: 1,
            length: self.input_dim,
        };
        let mut out = vec![cur];
        let mut flattened = false;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                Layer::Conv1d {
                    kernel,
                    stride,
                    in_channels,
                    out_channels,
                    ..
                } => {
                    if flattened {
                        return Err(arch_err(i, "conv1d after a fully connected layer"));
                    }
                    if kernel == 0 || stride == 0 || out_channels == 0 {
                        return Err(arch_err(i, "zero kernel, stride or channels"));
                    }
                    if in_channels != cur.channels {
                        return Err(arch_err(i, &format!("expects {in_channels} channels, gets {}", cur.channels)));
                    }
                    Shape {
                        channels: out_channels,
                        length: conv_len(cur.length, kernel, stride).map_err(|_| arch_err(i, "input shorter than kernel"))?,
                    }
                }
                Layer::FullyConnected { inputs, outputs, .. } => {
                    let flat = cur.channels * cur.length;
                    if inputs != flat {
                        return Err(arch_err(i, &format!("expects {inputs} inputs, gets {flat}")));
                    }
                    if outputs == 0 {
                        return Err(arch_err(i, "zero outputs"));
                    }
                    flattened = true;
                    Shape {
                        channels: 1,
                        length: outputs,
                    }
                }
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(arch_err(0, "zero input dim"));
        }
        match self.layers.last() {
            Some(Layer::FullyConnected {
                outputs,
                activation: Activation::Identity,
                ..
            }) if *outputs == self.output_dim => {}
            Some(Layer::FullyConnected {
                activation: Activation::Identity,
                ..
            }) => return Err(arch_err(self.layers.len() - 1, "final layer width differs from output dim")),
            _ => {
                return Err(Error::invalid(
                    "architecture must end with a fully connected layer without activation",
                ))
            }
        }
        self.shapes().map(|_| ())
    }
}

impl Default for SiameseArch {
    fn default() -> Self {
        SiameseArch::conv_default(400, 200).expect("default architecture is consistent")
    }
}

fn conv_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if len < kernel {
        return Err(Error::invalid(format!("signal length {len} shorter than kernel {kernel}")));
    }
    Ok((len - kernel) / stride + 1)
}

fn arch_err(layer: usize, msg: &str) -> Error {
    Error::invalid(format!("architecture layer {layer}: {msg}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Conv: `[out][in][k]`; fully connected: `[out][in]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros(layer: &Layer) -> Self {
        let (w, b) = layer.shapes();
        LayerParams {
            weights: vec![0.0; w],
            bias: vec![0.0; b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiameseParams {
    pub arch: SiameseArch,
    pub seed: u64,
    pub layers: Vec<LayerParams>,
}

/// Same shape as the parameters of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerParams>,
}

impl Gradient {
    fn zeros(arch: &SiameseArch) -> Self {
        Gradient {
            layers: arch.layers.iter().map(LayerParams::zeros).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x *= c);
        }
    }
}

impl SiameseParams {
    pub fn zeros(arch: SiameseArch) -> Result<Self> {
        arch.validate()?;
        let layers = arch.layers.iter().map(LayerParams::zeros).collect();
        Ok(SiameseParams { arch, seed: 0, layers })
    }

    pub fn num_values(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Checks shapes against the architecture and finiteness of every value.
    pub fn check(&self) -> Result<()> {
        self.arch.validate()?;
        check_dim(self.arch.layers.len(), self.layers.len())?;
        for (layer, p) in self.arch.layers.iter().zip(&self.layers) {
            let (w, b) = layer.shapes();
            check_dim(w, p.weights.len())?;
            check_dim(b, p.bias.len())?;
        }
        if self.values().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("siamese parameters".into()));
        }
        Ok(())
    }
}

/// Uniform fan-in scaled weights in `±sqrt(6 / fan_in)`, zero biases.
pub fn init_params(arch: &SiameseArch, seed: u64) -> Result<SiameseParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = arch
        .layers
        .iter()
        .map(|layer| {
            let mut p = LayerParams::zeros(layer);
            let limit = (6.0 / layer.fan_in() as f64).sqrt();
            for w in &mut p.weights {
                *w = rng.random_range(-limit..limit);
            }
            p
        })
        .collect();
    Ok(SiameseParams {
        arch: arch.clone(),
        seed,
        layers,
    })
}

/// Per-layer activations of one forward pass; `acts[0]` is the input.
struct Trace {
    acts: Vec<Vec<f64>>,
}

fn forward_trace(params: &SiameseParams, v: &[f64]) -> Result<Trace> {
    check_dim(params.arch.input_dim, v.len())?;
    let shapes = params.arch.shapes()?;
    let mut acts = Vec::with_capacity(params.layers.len() + 1);
    acts.push(v.to_vec());
    for (i, (layer, p)) in params.arch.layers.iter().zip(&params.layers).enumerate() {
        let x = &acts[i];
        let out_shape = shapes[i + 1];
        let mut y = vec![0.0; out_shape.channels * out_shape.length];
        match *layer {
            Layer::Conv1d {
                kernel,
                stride,
                in_channels,
                out_channels,
                ..
            } => {
                let in_len = shapes[i].length;
                let out_len = out_shape.length;
                for o in 0..out_channels {
                    for t in 0..out_len {
                        let mut acc = p.bias[o];
                        for c in 0..in_channels {
                            let w = &p.weights[(o * in_channels + c) * kernel..][..kernel];
                            let xs = &x[c * in_len + t * stride..][..kernel];
                            acc += linalg::dot(w, xs);
                        }
                        y[o * out_len + t] = acc;
                    }
                }
            }
            Layer::FullyConnected { inputs, .. } => {
                for (o, yo) in y.iter_mut().enumerate() {
                    *yo = p.bias[o] + linalg::dot(&p.weights[o * inputs..][..inputs], x);
                }
            }
        }
        let act = layer.activation();
        for yi in &mut y {
            *yi = act.apply(*yi);
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("activation of layer {i}")));
        }
        acts.push(y);
    }
    Ok(Trace { acts })
}

/// Backpropagates `grad_out` (gradient w.r.t. the network output) and accumulates into `grad`.
fn backward(params: &SiameseParams, trace: &Trace, grad_out: &[f64], grad: &mut Gradient) {
    let shapes = params.arch.shapes().expect("validated in forward");
    let mut g = grad_out.to_vec();
    for i in (0..params.layers.len()).rev() {
        let layer = &params.arch.layers[i];
        let p = &params.layers[i];
        let gp = &mut grad.layers[i];
        let y = &trace.acts[i + 1];
        let x = &trace.acts[i];
        let act = layer.activation();
        for (gi, yi) in g.iter_mut().zip(y) {
            *gi *= act.derivative_from_output(*yi);
        }
        let mut gx = vec![0.0; x.len()];
        match *layer {
            Layer::Conv1d {
                kernel,
                stride,
                in_channels,
                out_channels,
                ..
            } => {
                let in_len = shapes[i].length;
                let out_len = shapes[i + 1].length;
                for o in 0..out_channels {
                    for t in 0..out_len {
                        let go = g[o * out_len + t];
                        if go == 0.0 {
                            continue;
                        }
                        gp.bias[o] += go;
                        for c in 0..in_channels {
                            let base_w = (o * in_channels + c) * kernel;
                            let base_x = c * in_len + t * stride;
                            for k in 0..kernel {
                                gp.weights[base_w + k] += go * x[base_x + k];
                                gx[base_x + k] += go * p.weights[base_w + k];
                            }
                        }
                    }
                }
            }
            Layer::FullyConnected { inputs, outputs, .. } => {
                for o in 0..outputs {
                    let go = g[o];
                    gp.bias[o] += go;
                    let row = o * inputs;
                    for j in 0..inputs {
                        gp.weights[row + j] += go * x[j];
                        gx[j] += go * p.weights[row + j];
                    }
                }
            }
        }
        g = gx;
    }
}

/// Embedding `G_W(v)`.
pub fn forward(params: &SiameseParams, v: &IVector) -> Result<Vec<f64>> {
    let mut trace = forward_trace(params, &v.0)?;
    Ok(trace.acts.pop().expect("at least the input"))
}

/// Maps every vector of a set into the embedding space.
pub fn embed_set(params: &SiameseParams, set: &IVectorSet) -> Result<IVectorSet> {
    set.try_map(|v| forward(params, v).map(IVector))
}

/// Cosine similarity between two embeddings.
pub fn pair_distance(e1: &[f64], e2: &[f64]) -> Result<f64> {
    check_dim(e1.len(), e2.len())?;
    if linalg::norm(e1) < MIN_EMBEDDING_NORM || linalg::norm(e2) < MIN_EMBEDDING_NORM {
        return Err(Error::ZeroVector);
    }
    linalg::cosine(e1, e2)
}

/// `(y − D)^2` with `D` the cosine similarity of the embeddings.
pub fn pair_loss(e1: &[f64], e2: &[f64], y: f64) -> Result<f64> {
    let d = pair_distance(e1, e2)?;
    Ok((y - d).powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IVectorPair {
    pub a: IVector,
    pub b: IVector,
    /// `+1` same dialect, `-1` different.
    pub y: f64,
}

/// Analytic gradient of the mean pair loss over `batch`, and that mean loss.
///
/// Pairs whose embeddings have (near) zero norm are skipped. Fails if every
/// pair is skipped or the result is non-finite.
pub fn grad(params: &SiameseParams, batch: &[IVectorPair]) -> Result<(Gradient, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut g = Gradient::zeros(&params.arch);
    let mut total = 0.0;
    let mut used = 0usize;
    for pair in batch {
        let ta = forward_trace(params, &pair.a.0)?;
        let tb = forward_trace(params, &pair.b.0)?;
        let e1 = ta.acts.last().expect("output");
        let e2 = tb.acts.last().expect("output");
        let n1 = linalg::norm(e1);
        let n2 = linalg::norm(e2);
        if n1 < MIN_EMBEDDING_NORM || n2 < MIN_EMBEDDING_NORM {
            continue;
        }
        let d = linalg::dot(e1, e2) / (n1 * n2);
        total += (pair.y - d).powi(2);
        used += 1;
        let dl_dd = -2.0 * (pair.y - d);
        let g1: Vec<f64> = e1
            .iter()
            .zip(e2)
            .map(|(a, b)| dl_dd * (b / (n1 * n2) - d * a / (n1 * n1)))
            .collect();
        let g2: Vec<f64> = e1
            .iter()
            .zip(e2)
            .map(|(a, b)| dl_dd * (a / (n1 * n2) - d * b / (n2 * n2)))
            .collect();
        backward(params, &ta, &g1, &mut g);
        backward(params, &tb, &g2, &mut g);
    }
    if used == 0 {
        return Err(Error::ZeroVector);
    }
    g.scale(1.0 / used as f64);
    let loss = total / used as f64;
    if !loss.is_finite() || g.values().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("siamese gradient".into()));
    }
    Ok((g, loss))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairConfig {
    pub n_pairs: usize,
    pub positive_fraction: f64,
    /// DEV utterances are drawn with weight `1 + dev_emphasis` relative to the rest.
    pub dev_emphasis: f64,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            n_pairs: 2000,
            positive_fraction: 0.5,
            dev_emphasis: 0.0,
        }
    }
}

/// Draws labeled pairs: positives within a dialect, negatives across dialects.
///
/// Exactly `round(n_pairs * positive_fraction)` pairs are positive. The output
/// order is shuffled; identical arguments give identical pairs.
pub fn sample_pairs(
    data: &IVectorSet,
    labels: &LabelSet,
    n_pairs: usize,
    positive_fraction: f64,
    seed: u64,
    dev_emphasis: f64,
) -> Result<Vec<IVectorPair>> {
    if !(0.0..=1.0).contains(&positive_fraction) {
        return Err(Error::invalid(format!("positive_fraction must be in [0, 1], got {positive_fraction}")));
    }
    if !(dev_emphasis >= 0.0) || !dev_emphasis.is_finite() {
        return Err(Error::invalid(format!("dev_emphasis must be >= 0, got {dev_emphasis}")));
    }
    let idx = data.label_indices(labels)?;
    let weight = |i: usize| {
        if data.entries[i].utt.domain == Domain::Dev {
            1.0 + dev_emphasis
        } else {
            1.0
        }
    };
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, k) in idx.iter().enumerate() {
        if let Some(k) = k {
            by_label[*k].push(i);
        }
    }
    let present: Vec<usize> = (0..labels.len()).filter(|&k| !by_label[k].is_empty()).collect();
    let n_pos = (n_pairs as f64 * positive_fraction).round() as usize;
    let n_neg = n_pairs - n_pos;
    if present.is_empty() && n_pairs > 0 {
        return Err(Error::invalid("no labeled utterances to pair"));
    }
    if n_pos > 0 {
        if let Some(&k) = present.iter().find(|&&k| by_label[k].len() < 2) {
            return Err(Error::invalid(format!(
                "dialect `{}` has a single utterance; cannot form positive pairs",
                labels.get(k).unwrap()
            )));
        }
    }
    if n_neg > 0 && present.len() < 2 {
        return Err(Error::invalid("negative pairs need at least two dialects"));
    }

    let weighted = |members: &[usize]| {
        WeightedIndex::new(members.iter().map(|&i| weight(i))).map_err(|e| Error::invalid(e.to_string()))
    };
    let all: Vec<usize> = present.iter().flat_map(|&k| by_label[k].iter().copied()).collect();
    let all_dist = weighted(&all)?;
    let mut within = Vec::with_capacity(labels.len());
    let mut across = Vec::with_capacity(labels.len());
    let mut complements = Vec::with_capacity(labels.len());
    for k in 0..labels.len() {
        let members = &by_label[k];
        within.push(if members.is_empty() { None } else { Some(weighted(members)?) });
        let rest: Vec<usize> = all.iter().copied().filter(|&i| idx[i] != Some(k)).collect();
        across.push(if rest.is_empty() { None } else { Some(weighted(&rest)?) });
        complements.push(rest);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    let vec_of = |i: usize| data.entries[i].vector.clone();
    for _ in 0..n_pos {
        let a = all[all_dist.sample(&mut rng)];
        let k = idx[a].expect("labeled");
        let members = &by_label[k];
        let dist = within[k].as_ref().expect("present");
        let b = loop {
            let b = members[dist.sample(&mut rng)];
            if b != a {
                break b;
            }
        };
        pairs.push(IVectorPair {
            a: vec_of(a),
            b: vec_of(b),
            y: 1.0,
        });
    }
    for _ in 0..n_neg {
        let a = all[all_dist.sample(&mut rng)];
        let k = idx[a].expect("labeled");
        let b = complements[k][across[k].as_ref().expect("two dialects").sample(&mut rng)];
        pairs.push(IVectorPair {
            a: vec_of(a),
            b: vec_of(b),
            y: -1.0,
        });
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub pairs: PairConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            pairs: PairConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: SiameseParams,
    /// Mean pair loss of every epoch, measured before each batch update.
    pub history: Vec<f64>,
}

/// Mini-batch SGD with momentum (`v ← μv + g; p ← p − lr·v`).
///
/// Fresh pairs are drawn every epoch from a seed derived from `config.seed`.
pub fn train(
    params: &SiameseParams,
    data: &IVectorSet,
    labels: &LabelSet,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    params.check()?;
    check_dim(params.arch.input_dim, data.dim)?;
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::invalid("epochs and batch_size must be positive"));
    }
    if !(config.learning_rate >= 0.0) || !(0.0..1.0).contains(&config.momentum) {
        return Err(Error::invalid("learning_rate must be >= 0 and momentum in [0, 1)"));
    }
    let mut params = params.clone();
    let mut velocity = Gradient::zeros(&params.arch);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let epoch_seed = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64);
        let pairs = sample_pairs(
            data,
            labels,
            config.pairs.n_pairs,
            config.pairs.positive_fraction,
            epoch_seed,
            config.pairs.dev_emphasis,
        )?;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for batch in pairs.chunks(config.batch_size) {
            let (g, loss) = match grad(&params, batch) {
                Ok(r) => r,
                Err(Error::NonFinite(_)) => return Err(Error::Divergence { epoch, history }),
                Err(Error::ZeroVector) => continue,
                Err(e) => return Err(e),
            };
            loss_sum += loss * batch.len() as f64;
            batches += batch.len();
            for ((v, gv), p) in velocity
                .layers
                .iter_mut()
                .zip(&g.layers)
                .zip(params.layers.iter_mut())
            {
                for ((vi, gi), pi) in v
                    .weights
                    .iter_mut()
                    .chain(v.bias.iter_mut())
                    .zip(gv.weights.iter().chain(&gv.bias))
                    .zip(p.weights.iter_mut().chain(p.bias.iter_mut()))
                {
                    *vi = config.momentum * *vi + gi;
                    *pi -= config.learning_rate * *vi;
                }
            }
        }
        if batches == 0 {
            return Err(Error::ZeroVector);
        }
        let mean = loss_sum / batches as f64;
        history.push(mean);
        if !mean.is_finite() || params.values().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { epoch, history });
        }
    }
    Ok(TrainOutcome { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Utterance;

    fn tiny_arch() -> SiameseArch {
        SiameseArch {
            input_dim: 12,
            output_dim: 3,
            layers: vec![
                Layer::Conv1d {
                    kernel: 4,
                    stride: 2,
                    in_channels: 1,
                    out_channels: 2,
                    activation: Activation::Tanh,
                },
                Layer::Conv1d {
                    kernel: 2,
                    stride: 1,
                    in_channels: 2,
                    out_channels: 3,
                    activation: Activation::Tanh,
                },
                Layer::FullyConnected {
                    inputs: 12,
                    outputs: 3,
                    activation: Activation::Identity,
                },
            ],
        }
    }

    fn identity_arch(d: usize) -> SiameseParams {
        let arch = SiameseArch {
            input_dim: d,
            output_dim: d,
            layers: vec![Layer::FullyConnected {
                inputs: d,
                outputs: d,
                activation: Activation::Identity,
            }],
        };
        let mut p = SiameseParams::zeros(arch).unwrap();
        for i in 0..d {
            p.layers[0].weights[i * d + i] = 1.0;
        }
        p
    }

    #[test]
    fn default_arch_shapes() {
        let arch = SiameseArch::default();
        assert_eq!(arch.layers.len(), 3);
        assert_eq!(
            arch.layers[2],
            Layer::FullyConnected {
                inputs: 760,
                outputs: 200,
                activation: Activation::Identity
            }
        );
        let p = init_params(&arch, 1).unwrap();
        let e = forward(&p, &IVector(vec![0.1; 400])).unwrap();
        assert_eq!(e.len(), 200);
    }

    #[test]
    fn arch_validation() {
        let mut a = tiny_arch();
        a.layers[2] = Layer::FullyConnected {
            inputs: 11,
            outputs: 3,
            activation: Activation::Identity,
        };
        assert!(init_params(&a, 0).is_err());
        let mut a = tiny_arch();
        a.layers[2] = Layer::FullyConnected {
            inputs: 12,
            outputs: 3,
            activation: Activation::Tanh,
        };
        assert!(a.validate().is_err());
        let mut a = tiny_arch();
        a.layers[1] = Layer::Conv1d {
            kernel: 2,
            stride: 1,
            in_channels: 3,
            out_channels: 3,
            activation: Activation::Tanh,
        };
        assert!(a.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_seeded() {
        let a = init_params(&tiny_arch(), 7).unwrap();
        let b = init_params(&tiny_arch(), 7).unwrap();
        let c = init_params(&tiny_arch(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.layers, c.layers);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let limit = (6.0f64 / 4.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() < limit));
    }

    #[test]
    fn zero_params_give_zero_embedding() {
        let p = SiameseParams::zeros(tiny_arch()).unwrap();
        let e = forward(&p, &IVector((0..12).map(|i| i as f64).collect())).unwrap();
        assert_eq!(e, vec![0.0; 3]);
    }

    #[test]
    fn identity_layer_is_identity() {
        let p = identity_arch(3);
        let v = IVector(vec![1.5, -2.0, 0.25]);
        assert_eq!(forward(&p, &v).unwrap(), v.0);
        assert!(matches!(forward(&p, &IVector(vec![1.0])), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn distance_and_loss_values() {
        assert!((pair_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(pair_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((pair_distance(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(pair_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(pair_loss(&[1.0, 0.0], &[2.0, 0.0], 1.0).unwrap() < 1e-30);
        assert!(pair_loss(&[1.0, 0.0], &[-2.0, 0.0], -1.0).unwrap() < 1e-30);
        assert_eq!(pair_loss(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_loss_batch_has_zero_gradient() {
        let p = identity_arch(2);
        let batch = vec![IVectorPair {
            a: IVector(vec![1.0, 1.0]),
            b: IVector(vec![2.0, 2.0]),
            y: 1.0,
        }];
        let (g, loss) = grad(&p, &batch).unwrap();
        assert!(loss < 1e-30);
        assert!(g.values().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn duplicated_pair_matches_single() {
        let p = init_params(&tiny_arch(), 3).unwrap();
        let pair = IVectorPair {
            a: IVector((0..12).map(|i| (i as f64 * 0.3).sin()).collect()),
            b: IVector((0..12).map(|i| (i as f64 * 0.7).cos()).collect()),
            y: -1.0,
        };
        let (g1, l1) = grad(&p, std::slice::from_ref(&pair)).unwrap();
        let (g2, l2) = grad(&p, &[pair.clone(), pair]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    fn clustered(n_per: usize, labels: &LabelSet, dim: usize) -> IVectorSet {
        let mut s = IVectorSet::new(dim);
        for k in 0..labels.len() {
            for j in 0..n_per {
                let domain = if j % 2 == 0 { Domain::Trn } else { Domain::Dev };
                let v = (0..dim).map(|i| ((k * 7 + i) as f64).sin() + 0.01 * j as f64).collect();
                s.push(
                    Utterance::new(format!("{k}-{j}"), domain, Some(labels.get(k).unwrap().clone())),
                    IVector(v),
                );
            }
        }
        s
    }

    #[test]
    fn pair_composition() {
        let ls = LabelSet::new(["A", "B", "C"]).unwrap();
        let data = clustered(4, &ls, 12);
        let pos = sample_pairs(&data, &ls, 50, 1.0, 1, 0.0).unwrap();
        assert!(pos.iter().all(|p| p.y == 1.0 && p.a != p.b));
        let half = sample_pairs(&data, &ls, 1000, 0.5, 1, 0.0).unwrap();
        assert_eq!(half.iter().filter(|p| p.y == 1.0).count(), 500);
        assert_eq!(half, sample_pairs(&data, &ls, 1000, 0.5, 1, 0.0).unwrap());
        assert_ne!(half, sample_pairs(&data, &ls, 1000, 0.5, 2, 0.0).unwrap());
        // negatives never share a vector row with the same dialect
        let ids: std::collections::HashMap<Vec<u64>, usize> = data
            .entries
            .iter()
            .map(|e| (e.vector.0.iter().map(|x| x.to_bits()).collect(), ls.index_of(e.utt.label.as_ref().unwrap()).unwrap()))
            .collect();
        let key = |v: &IVector| v.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        for p in &half {
            assert_eq!(ids[&key(&p.a)] == ids[&key(&p.b)], p.y == 1.0);
        }
    }

    #[test]
    fn dev_emphasis_shifts_draws() {
        let ls = LabelSet::new(["A", "B"]).unwrap();
        let data = clustered(10, &ls, 12);
        let dev_vectors: std::collections::HashSet<Vec<u64>> = data
            .entries
            .iter()
            .filter(|e| e.utt.domain == Domain::Dev)
            .map(|e| e.vector.0.iter().map(|x| x.to_bits()).collect())
            .collect();
        let dev_share = |emph: f64| {
            let pairs = sample_pairs(&data, &ls, 4000, 0.5, 11, emph).unwrap();
            let hits = pairs
                .iter()
                .flat_map(|p| [&p.a, &p.b])
                .filter(|v| dev_vectors.contains(&v.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>()))
                .count();
            hits as f64 / 8000.0
        };
        // half the utterances are DEV: neutral weighting lands near 0.5
        assert!((dev_share(0.0) - 0.5).abs() < 0.03);
        // weight 4 vs 1 -> about 0.8
        assert!((dev_share(3.0) - 0.8).abs() < 0.03);
    }

    #[test]
    fn impossible_composition() {
        let ls = LabelSet::new(["A", "B"]).unwrap();
        let mut data = clustered(3, &ls, 12);
        data.entries.truncate(4); // B keeps one utterance
        assert!(sample_pairs(&data, &ls, 10, 0.5, 0, 0.0).is_err());
        assert!(sample_pairs(&data, &ls, 10, 0.0, 0, 0.0).is_ok());
        let only_a = IVectorSet {
            dim: 12,
            entries: data.entries[..3].to_vec(),
        };
        assert!(sample_pairs(&only_a, &ls, 10, 0.5, 0, 0.0).is_err());
        assert!(sample_pairs(&only_a, &ls, 10, 1.0, 0, 0.0).is_ok());
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let ls = LabelSet::new(["A", "B"]).unwrap();
        let data = clustered(4, &ls, 12);
        let p = init_params(&tiny_arch(), 5).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            pairs: PairConfig {
                n_pairs: 40,
                ..PairConfig::default()
            },
            ..TrainConfig::default()
        };
        let out = train(&p, &data, &ls, &cfg).unwrap();
        assert_eq!(out.params, p);
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn single_step_is_plain_gradient_step() {
        let ls = LabelSet::new(["A", "B"]).unwrap();
        let data = clustered(4, &ls, 12);
        let p = init_params(&tiny_arch(), 9).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 16,
            learning_rate: 0.05,
            momentum: 0.9,
            pairs: PairConfig {
                n_pairs: 16,
                positive_fraction: 0.5,
                dev_emphasis: 0.0,
            },
            seed: 4,
        };
        let out = train(&p, &data, &ls, &cfg).unwrap();
        // reproduce the epoch's pair draw and apply one manual step
        let epoch_seed = 4u64.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let pairs = sample_pairs(&data, &ls, 16, 0.5, epoch_seed, 0.0).unwrap();
        let (g, loss) = grad(&p, &pairs).unwrap();
        let expect: Vec<f64> = p.values().zip(g.values()).map(|(w, gi)| w - 0.05 * gi).collect();
        let got: Vec<f64> = out.params.values().collect();
        assert_eq!(got, expect);
        assert_eq!(out.history, vec![loss]);
    }
}
