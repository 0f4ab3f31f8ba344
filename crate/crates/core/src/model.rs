//! DGCNN over enclosing subgraphs: stacked graph convolutions, SortPooling,
//! a 1-D convolution stack and a dense head ending in one sigmoid unit.

use std::fmt;

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{LabeledPair, PairType};
use crate::error::{Error, Result};
use crate::graph::GraphSnapshot;
use crate::metrics::auc;
use crate::nn::layers::{ConvCache, GcnCache, PoolCache};
use crate::nn::{
    bce_loss, gcn_backward, gcn_forward, maxpool1d, maxpool1d_backward, sort_pooling,
    sort_pooling_backward, Activation, Conv1d, Dense, LayerParams, NadamConfig, OptimizerState,
    Tensor,
};
use crate::subgraph::{
    build_tensors, extract_enclosing_subgraph, pair_seed, SubgraphTensors, DEFAULT_KEEP_FRACTION,
    DEFAULT_L_MAX,
};

/// One stage of the convolution stack after SortPooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvStage {
    Conv { filters: usize },
    MaxPool,
}

impl fmt::Display for ConvStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvStage::Conv { filters } => write!(f, "{filters}"),
            ConvStage::MaxPool => write!(f, "M"),
        }
    }
}

impl std::str::FromStr for ConvStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("m") || s.eq_ignore_ascii_case("maxpool") {
            return Ok(ConvStage::MaxPool);
        }
        s.parse()
            .map(|filters| ConvStage::Conv { filters })
            .map_err(|_| Error::Config(format!("conv stage {s:?} is neither a filter count nor M")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureConfig {
    /// Output width of each graph convolution; the last one is the sort key.
    pub gcn_channels: Vec<usize>,
    pub sort_k: usize,
    /// The first conv stage reads one node row per step; later ones use `conv_kernel`.
    pub conv_stack: Vec<ConvStage>,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    /// Hidden layers use ReLU; the last entry must be 1 (sigmoid output).
    pub dense_sizes: Vec<usize>,
    pub l_max: u32,
    pub hops: usize,
    pub keep_fraction: f64,
}

impl ArchitectureConfig {
    /// The published architecture with SortPooling size `sort_k`.
    pub fn paper(sort_k: usize) -> Self {
        use ConvStage::*;
        Self {
            gcn_channels: vec![128, 128, 128, 128, 1],
            sort_k,
            conv_stack: vec![
                Conv { filters: 64 },
                Conv { filters: 128 },
                MaxPool,
                Conv { filters: 128 },
                Conv { filters: 64 },
            ],
            conv_kernel: 5,
            pool_window: 2,
            pool_stride: 2,
            dense_sizes: vec![256, 128, 1],
            l_max: DEFAULT_L_MAX,
            hops: 1,
            keep_fraction: DEFAULT_KEEP_FRACTION,
        }
    }

    pub fn feature_width(&self) -> usize {
        self.l_max as usize + 1
    }

    /// Width of the concatenated graph-convolution output.
    pub fn total_channels(&self) -> usize {
        self.gcn_channels.iter().sum()
    }

    /// Checks consistency and resolves every layer's geometry.
    pub fn plan(&self) -> Result<Plan> {
        let bad = |m: String| Err(Error::Config(m));
        if self.gcn_channels.is_empty() || self.gcn_channels.iter().any(|&c| c == 0) {
            return bad("gcn_channels must be non-empty and positive".into());
        }
        if *self.gcn_channels.last().expect("non-empty") != 1 {
            return bad("last graph convolution must have exactly 1 channel".into());
        }
        if self.sort_k == 0 {
            return bad("sort_k must be positive".into());
        }
        if self.dense_sizes.last() != Some(&1) || self.dense_sizes.iter().any(|&d| d == 0) {
            return bad("dense_sizes must be positive and end in 1".into());
        }
        if !matches!(self.conv_stack.first(), Some(ConvStage::Conv { .. })) {
            return bad("conv_stack must start with a convolution".into());
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad(format!("keep_fraction {} not in (0, 1]", self.keep_fraction));
        }
        if self.hops == 0 {
            return bad("hops must be at least 1".into());
        }

        let total = self.total_channels();
        let mut len = self.sort_k * total;
        let mut channels = 1;
        let mut stages = Vec::new();
        for (i, stage) in self.conv_stack.iter().enumerate() {
            match *stage {
                ConvStage::Conv { filters } => {
                    if filters == 0 {
                        return bad("conv filters must be positive".into());
                    }
                    let (kernel, stride) = if i == 0 {
                        (total, total)
                    } else {
                        (self.conv_kernel, 1)
                    };
                    let conv = Conv1d {
                        c_in: channels,
                        c_out: filters,
                        kernel,
                        stride,
                        activation: Activation::Relu,
                    };
                    len = match conv.output_len(len) {
                        Some(l) => l,
                        None => {
                            return bad(format!(
                                "conv stage {i}: sequence length {len} shorter than kernel {kernel}"
                            ))
                        }
                    };
                    channels = filters;
                    stages.push(PlannedStage::Conv(conv));
                }
                ConvStage::MaxPool => {
                    if self.pool_window == 0 || self.pool_stride == 0 || len < self.pool_window {
                        return bad(format!(
                            "pool stage {i}: length {len}, window {}",
                            self.pool_window
                        ));
                    }
                    len = (len - self.pool_window) / self.pool_stride + 1;
                    stages.push(PlannedStage::Pool {
                        window: self.pool_window,
                        stride: self.pool_stride,
                    });
                }
            }
        }
        let mut dense = Vec::new();
        let mut width = len * channels;
        for (i, &size) in self.dense_sizes.iter().enumerate() {
            let last = i + 1 == self.dense_sizes.len();
            dense.push(Dense {
                c_in: width,
                c_out: size,
                activation: if last {
                    Activation::Sigmoid
                } else {
                    Activation::Relu
                },
            });
            width = size;
        }
        Ok(Plan { stages, dense })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannedStage {
    Conv(Conv1d),
    Pool { window: usize, stride: usize },
}

/// Resolved layer geometry for an [`ArchitectureConfig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub stages: Vec<PlannedStage>,
    pub dense: Vec<Dense>,
}

/// DGCNN weights in architecture order: graph convolutions, conv stages,
/// dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ArchitectureConfig,
    pub seed: u64,
    pub layers: Vec<LayerParams>,
    plan: Plan,
}

/// Intermediate values of one forward pass, enough to run backward.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    gcn: Vec<GcnCache>,
    num_nodes: usize,
    selected: Vec<usize>,
    /// SortPooling output, `k × C`.
    pub pooled: Tensor,
    stages: Vec<StageCache>,
    dense_inputs: Vec<Vec<f64>>,
    dense_outputs: Vec<Vec<f64>>,
    /// Raw sigmoid output.
    pub probability: f64,
}

#[derive(Debug, Clone)]
enum StageCache {
    Conv { cache: ConvCache, input_len: usize },
    Pool(PoolCache),
}

/// Smallest and largest probabilities reported by [`ModelParams::forward`].
const PROB_FLOOR: f64 = f64::MIN_POSITIVE;
const PROB_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape")
}

impl ModelParams {
    /// Fresh Glorot-uniform weights and zero biases.
    pub fn build(config: ArchitectureConfig, seed: u64) -> Result<Self> {
        let plan = config.plan()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut c_in = config.feature_width();
        for &c_out in &config.gcn_channels {
            layers.push(LayerParams {
                weights: glorot(&mut rng, &[c_in, c_out], c_in, c_out),
                bias: None,
            });
            c_in = c_out;
        }
        for stage in &plan.stages {
            if let PlannedStage::Conv(conv) = stage {
                let span = conv.kernel * conv.c_in;
                // fans taken per window, as for a dense layer over it
                layers.push(LayerParams {
                    weights: glorot(&mut rng, &[conv.c_out, span], span, conv.c_out),
                    bias: Some(Tensor::zeros(&[conv.c_out])),
                });
            }
        }
        for d in &plan.dense {
            layers.push(LayerParams {
                weights: glorot(&mut rng, &[d.c_in, d.c_out], d.c_in, d.c_out),
                bias: Some(Tensor::zeros(&[d.c_out])),
            });
        }
        Ok(Self {
            config,
            seed,
            layers,
            plan,
        })
    }

    /// Rebuilds a model from stored layers, checking every shape.
    pub fn from_parts(config: ArchitectureConfig, seed: u64, layers: Vec<LayerParams>) -> Result<Self> {
        let template = Self::build(config, seed)?;
        if template.layers.len() != layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers, got {}",
                template.layers.len(),
                layers.len()
            )));
        }
        for (i, (want, got)) in template.layers.iter().zip(&layers).enumerate() {
            let ok = want.weights.shape() == got.weights.shape()
                && want.bias.as_ref().map(|b| b.shape().to_vec())
                    == got.bias.as_ref().map(|b| b.shape().to_vec());
            if !ok {
                return Err(Error::ShapeMismatch(format!("layer {i} shape differs from config")));
            }
        }
        Ok(Self { layers, ..template })
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    /// `(name, tensor)` for every parameter tensor in storage order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let n_gcn = self.config.gcn_channels.len();
        let n_conv = self.plan.stages.iter().filter(|s| matches!(s, PlannedStage::Conv(_))).count();
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let name = if i < n_gcn {
                format!("gcn{i}")
            } else if i < n_gcn + n_conv {
                format!("conv{}", i - n_gcn)
            } else {
                format!("dense{}", i - n_gcn - n_conv)
            };
            out.push((format!("{name}.weight"), &layer.weights));
            if let Some(b) = &layer.bias {
                out.push((format!("{name}.bias"), b));
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().flat_map(|l| l.tensors()).map(Tensor::len).sum()
    }

    fn check_input(&self, input: &SubgraphTensors) -> Result<()> {
        let n = input.num_nodes();
        if n == 0 {
            return Err(Error::ShapeMismatch("subgraph has no nodes".into()));
        }
        if input.features.cols() != self.config.feature_width() {
            return Err(Error::ShapeMismatch(format!(
                "feature width {} but model expects {}",
                input.features.cols(),
                self.config.feature_width()
            )));
        }
        if input.norm_adjacency.shape() != [n, n] {
            return Err(Error::ShapeMismatch(format!(
                "adjacency {:?} for {n} nodes",
                input.norm_adjacency.shape()
            )));
        }
        Ok(())
    }

    /// Graph convolutions plus SortPooling; returns the per-layer caches,
    /// the pooled `k × C` matrix, and the retained source rows.
    fn embed(&self, input: &SubgraphTensors) -> Result<(Vec<GcnCache>, Tensor, Vec<usize>)> {
        self.check_input(input)?;
        let n = input.num_nodes();
        let n_gcn = self.config.gcn_channels.len();
        let mut caches: Vec<GcnCache> = Vec::with_capacity(n_gcn);
        for (l, layer) in self.layers[..n_gcn].iter().enumerate() {
            let h = caches.last().map_or(&input.features, |c| &c.output);
            let cache = gcn_forward(&input.norm_adjacency, h, &layer.weights)?;
            cache.output.ensure_finite(&format!("gcn{l}"))?;
            caches.push(cache);
        }
        let total = self.config.total_channels();
        let mut concat = Tensor::zeros(&[n, total]);
        for i in 0..n {
            let row = concat.row_mut(i);
            let mut off = 0;
            for c in &caches {
                let src = c.output.row(i);
                row[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let keys: Vec<f64> = (0..n).map(|i| concat.at(i, total - 1)).collect();
        let (pooled, selected) = sort_pooling(&concat, &keys, self.config.sort_k)?;
        Ok((caches, pooled, selected))
    }

    /// SortPooling activations only, without running the rest of the network.
    pub fn sortpool_activations(&self, input: &SubgraphTensors) -> Result<Tensor> {
        Ok(self.embed(input)?.1)
    }

    pub fn forward_trace(&self, input: &SubgraphTensors) -> Result<ForwardTrace> {
        let (gcn, pooled, selected) = self.embed(input)?;
        let n_gcn = self.config.gcn_channels.len();
        let mut layer_idx = n_gcn;
        let mut x = pooled.clone().reshape(&[pooled.len(), 1])?;
        let mut stages = Vec::with_capacity(self.plan.stages.len());
        for (i, stage) in self.plan.stages.iter().enumerate() {
            match *stage {
                PlannedStage::Conv(conv) => {
                    let input_len = x.rows();
                    let cache = conv.forward(&x, &self.layers[layer_idx])?;
                    layer_idx += 1;
                    cache.output.ensure_finite(&format!("conv stage {i}"))?;
                    x = cache.output.clone();
                    stages.push(StageCache::Conv { cache, input_len });
                }
                PlannedStage::Pool { window, stride } => {
                    let cache = maxpool1d(&x, window, stride)?;
                    x = cache.output.clone();
                    stages.push(StageCache::Pool(cache));
                }
            }
        }
        let mut h = x.into_data();
        let mut dense_inputs = Vec::with_capacity(self.plan.dense.len());
        let mut dense_outputs = Vec::with_capacity(self.plan.dense.len());
        for (i, d) in self.plan.dense.iter().enumerate() {
            let y = d.forward(&h, &self.layers[layer_idx])?;
            layer_idx += 1;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("dense{i}")));
            }
            dense_inputs.push(h);
            h = y.clone();
            dense_outputs.push(y);
        }
        let probability = h[0];
        Ok(ForwardTrace {
            gcn,
            num_nodes: input.num_nodes(),
            selected,
            pooled,
            stages,
            dense_inputs,
            dense_outputs,
            probability,
        })
    }

    /// Link probability, strictly inside `(0, 1)`.
    pub fn forward(&self, input: &SubgraphTensors) -> Result<f64> {
        Ok(self.forward_trace(input)?.probability.clamp(PROB_FLOOR, PROB_CEIL))
    }

    /// Reverse pass from `∂L/∂p`; returns gradients shaped like `layers`.
    pub fn backward(&self, input: &SubgraphTensors, trace: &ForwardTrace, grad_p: f64) -> Result<Vec<LayerParams>> {
        let mut grads: Vec<LayerParams> = self.layers.iter().map(LayerParams::zeros_like).collect();
        let n_gcn = self.config.gcn_channels.len();
        let n_conv = self
            .plan
            .stages
            .iter()
            .filter(|s| matches!(s, PlannedStage::Conv(_)))
            .count();

        let mut g = vec![grad_p];
        for (j, d) in self.plan.dense.iter().enumerate().rev() {
            let li = n_gcn + n_conv + j;
            g = d.backward(
                &trace.dense_inputs[j],
                &trace.dense_outputs[j],
                &self.layers[li],
                &g,
                &mut grads[li],
            );
        }

        let mut conv_idx = n_gcn + n_conv;
        let mut grad = g;
        for (stage, cache) in self.plan.stages.iter().zip(&trace.stages).rev() {
            match (stage, cache) {
                (PlannedStage::Conv(conv), StageCache::Conv { cache, input_len }) => {
                    conv_idx -= 1;
                    let dx = conv
                        .backward(
                            cache,
                            &self.layers[conv_idx],
                            &grad,
                            &mut grads[conv_idx],
                            *input_len,
                            true,
                        )
                        .expect("input gradient requested");
                    grad = dx.into_data();
                }
                (PlannedStage::Pool { .. }, StageCache::Pool(cache)) => {
                    grad = maxpool1d_backward(cache, &grad).into_data();
                }
                _ => return Err(Error::ShapeMismatch("trace does not match plan".into())),
            }
        }

        let total = self.config.total_channels();
        let grad_pooled = Tensor::from_vec(&[self.config.sort_k, total], grad)?;
        let grad_concat = sort_pooling_backward(&grad_pooled, &trace.selected, trace.num_nodes);

        // Column offsets of each layer's slice in the concatenation.
        let mut offsets = Vec::with_capacity(n_gcn);
        let mut off = 0;
        for &c in &self.config.gcn_channels {
            offsets.push(off);
            off += c;
        }
        let n = trace.num_nodes;
        let mut upstream: Option<Tensor> = None;
        for l in (0..n_gcn).rev() {
            let c = self.config.gcn_channels[l];
            let mut g_out = Tensor::zeros(&[n, c]);
            for i in 0..n {
                g_out
                    .row_mut(i)
                    .copy_from_slice(&grad_concat.row(i)[offsets[l]..offsets[l] + c]);
            }
            if let Some(up) = upstream.take() {
                g_out.data_mut().iter_mut().zip(up.data()).for_each(|(a, b)| *a += b);
            }
            upstream = gcn_backward(
                &input.norm_adjacency,
                &self.layers[l].weights,
                &trace.gcn[l],
                g_out.data(),
                &mut grads[l].weights,
                l > 0,
            );
        }
        for (i, g) in grads.iter().enumerate() {
            for t in g.tensors() {
                t.ensure_finite(&format!("gradient of layer {i}"))?;
            }
        }
        Ok(grads)
    }

    /// Binary cross-entropy of one example and its parameter gradients.
    pub fn loss_and_grads(&self, input: &SubgraphTensors, label: u8) -> Result<(f64, Vec<LayerParams>)> {
        let trace = self.forward_trace(input)?;
        let (loss, dp) = bce_loss(trace.probability, label as f64);
        let grads = self.backward(input, &trace, dp)?;
        Ok((loss, grads))
    }

    /// Binary cross-entropy of one example, forward only.
    pub fn loss(&self, input: &SubgraphTensors, label: u8) -> Result<f64> {
        Ok(bce_loss(self.forward_trace(input)?.probability, label as f64).0)
    }

    /// Extracts and encodes the subgraph of `(u, v)`.
    pub fn encode_pair(&self, snapshot: &GraphSnapshot, u: usize, v: usize, seed: u64) -> Result<SubgraphTensors> {
        let sub = extract_enclosing_subgraph(
            snapshot,
            u,
            v,
            self.config.hops,
            self.config.keep_fraction,
            seed,
        )?;
        Ok(build_tensors(&sub, self.config.l_max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: NadamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation-AUC improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: NadamConfig::default(),
            batch_size: 1,
            epochs: 50,
            patience: 5,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl History {
    /// One `epoch<TAB>mean_loss<TAB>validation_auc` line per epoch; `nan` marks
    /// an undefined validation AUC.
    pub fn to_text(&self) -> String {
        self.epochs
            .iter()
            .map(|r| {
                let auc = r.validation_auc.map_or("nan".to_string(), |a| format!("{a:.6}"));
                format!("{}\t{:.6}\t{}\n", r.epoch, r.mean_loss, auc)
            })
            .collect()
    }
}

/// Seed for extracting pair `index` during `epoch` of training.
fn epoch_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    pair_seed(seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)), index)
}

/// Single-example NAdam training with a held-out validation split and
/// early stopping on validation AUC. Returns the best-validation model.
pub fn train(
    model: &ModelParams,
    pairs: &[LabeledPair],
    snapshot: &GraphSnapshot,
    config: &TrainConfig,
) -> Result<(ModelParams, History)> {
    if pairs.is_empty() {
        return Err(Error::domain("no training pairs"));
    }
    if config.batch_size != 1 {
        return Err(Error::Config(format!("batch_size must be 1, got {}", config.batch_size)));
    }
    if !(config.optimizer.learning_rate > 0.0) {
        return Err(Error::Config("learning_rate must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
    }
    let positives = pairs.iter().filter(|p| p.label == 1).count();
    if positives == 0 || positives == pairs.len() {
        return Err(Error::domain("training set contains a single class"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (config.validation_fraction * pairs.len() as f64).round() as usize;
    let n_val = n_val.min(pairs.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let val_inputs: Vec<(SubgraphTensors, u8)> = val_idx
        .iter()
        .map(|&i| {
            let p = &pairs[i];
            model
                .encode_pair(snapshot, p.u as usize, p.v as usize, pair_seed(config.seed, i))
                .map(|t| (t, p.label))
        })
        .collect::<Result<_>>()?;

    let mut current = model.clone();
    let mut opt = OptimizerState::new(config.optimizer, &current.layers);
    let mut history = History::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &train_idx {
            let p = &pairs[i];
            let input = current.encode_pair(
                snapshot,
                p.u as usize,
                p.v as usize,
                epoch_seed(config.seed, epoch, i),
            )?;
            let (loss, grads) = current.loss_and_grads(&input, p.label)?;
            total += loss;
            opt.nadam_step(&mut current.layers, &grads);
        }
        let mean_loss = total / train_idx.len() as f64;

        let validation_auc = if val_inputs.is_empty() {
            None
        } else {
            let scores = val_inputs
                .iter()
                .map(|(t, _)| current.forward(t))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<u8> = val_inputs.iter().map(|(_, y)| *y).collect();
            auc(&scores, &labels).ok()
        };
        history.epochs.push(EpochRecord {
            epoch,
            mean_loss,
            validation_auc,
        });

        let Some(score) = validation_auc else {
            best = Some((f64::NEG_INFINITY, current.clone()));
            history.best_epoch = Some(epoch);
            continue;
        };
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, current.clone()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let trained = best.map_or(current, |(_, m)| m);
    Ok((trained, history))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictConfig {
    pub seed: u64,
    /// Score pairs with two isolated endpoints as 0 instead of running the model.
    pub type2_zero: bool,
    pub workers: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            type2_zero: false,
            workers: 1,
        }
    }
}

/// One probability per pair, extraction seeded by pair index.
pub fn predict_pairs(
    model: &ModelParams,
    snapshot: &GraphSnapshot,
    pairs: &[(u32, u32)],
    config: &PredictConfig,
) -> Result<Vec<f64>> {
    let score = |i: usize, (u, v): (u32, u32)| -> Result<f64> {
        let (u, v) = (u as usize, v as usize);
        if config.type2_zero
            && crate::dataset::classify_pair(snapshot, u, v)? == PairType::Isolated
        {
            return Ok(0.0);
        }
        let input = model.encode_pair(snapshot, u, v, pair_seed(config.seed, i))?;
        model.forward(&input)
    };
    let workers = config.workers.max(1);
    if workers == 1 || pairs.len() < 2 {
        return pairs.iter().enumerate().map(|(i, &p)| score(i, p)).collect();
    }
    let chunk = pairs.len().div_ceil(workers);
    let results: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let score = &score;
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, &p)| score(c * chunk + j, p))
                        .collect::<Result<Vec<f64>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgraph::EnclosingSubgraph;

    fn toy_config() -> ArchitectureConfig {
        ArchitectureConfig {
            gcn_channels: vec![8, 8, 1],
            sort_k: 6,
            conv_stack: vec![
                ConvStage::Conv { filters: 4 },
                ConvStage::Conv { filters: 8 },
                ConvStage::MaxPool,
            ],
            conv_kernel: 5,
            pool_window: 2,
            pool_stride: 2,
            dense_sizes: vec![16, 1],
            l_max: 4,
            hops: 1,
            keep_fraction: 1.0,
        }
    }

    #[test]
    fn paper_shapes() {
        let cfg = ArchitectureConfig::paper(200);
        assert_eq!(cfg.total_channels(), 513);
        assert_eq!(cfg.feature_width(), 11);
        let m = ModelParams::build(cfg.clone(), 1).unwrap();
        let sub = EnclosingSubgraph {
            nodes: vec![0, 1, 2],
            edges: vec![(0, 2), (1, 2)],
            drnl_labels: vec![1, 1, 2],
            h: 1,
        };
        let t = build_tensors(&sub, cfg.l_max);
        assert_eq!(m.sortpool_activations(&t).unwrap().shape(), &[200, 513]);

        let m400 = ModelParams::build(ArchitectureConfig::paper(400), 1).unwrap();
        assert_eq!(m400.sortpool_activations(&t).unwrap().shape(), &[400, 513]);
        // only the first dense layer depends on k
        let differing: Vec<usize> = m
            .layers
            .iter()
            .zip(&m400.layers)
            .enumerate()
            .filter(|(_, (a, b))| a.weights.shape() != b.weights.shape())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(differing, vec![9]);
    }

    #[test]
    fn build_is_deterministic() {
        let a = ModelParams::build(toy_config(), 3).unwrap();
        assert_eq!(a, ModelParams::build(toy_config(), 3).unwrap());
        assert_ne!(a, ModelParams::build(toy_config(), 4).unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = toy_config();
        c.gcn_channels = vec![8, 2];
        assert!(ModelParams::build(c, 0).is_err());
        let mut c = toy_config();
        c.dense_sizes = vec![16, 2];
        assert!(ModelParams::build(c, 0).is_err());
        let mut c = toy_config();
        c.sort_k = 2; // conv with kernel 5 cannot fit
        assert!(ModelParams::build(c, 0).is_err());
    }

    #[test]
    fn degenerate_input_gives_probability() {
        let m = ModelParams::build(toy_config(), 5).unwrap();
        let sub = EnclosingSubgraph {
            nodes: vec![0, 1],
            edges: vec![],
            drnl_labels: vec![1, 1],
            h: 1,
        };
        let p = m.forward(&build_tensors(&sub, 4)).unwrap();
        assert!(p > 0.0 && p < 1.0);

        let wrong = build_tensors(&sub, 7);
        assert!(m.forward(&wrong).is_err());
    }

    #[test]
    fn one_step_changes_parameters() {
        let m = ModelParams::build(toy_config(), 5).unwrap();
        let sub = EnclosingSubgraph {
            nodes: vec![0, 1, 2, 3],
            edges: vec![(0, 2), (1, 2), (2, 3)],
            drnl_labels: vec![1, 1, 2, 3],
            h: 1,
        };
        let t = build_tensors(&sub, 4);
        let (_, grads) = m.loss_and_grads(&t, 1).unwrap();
        let mut updated = m.clone();
        let mut opt = OptimizerState::new(NadamConfig::default(), &updated.layers);
        opt.nadam_step(&mut updated.layers, &grads);
        assert_ne!(updated.layers, m.layers);
    }
}
