//! Feature-engineering baseline: 15 temporal topology features per pair and
//! a two-layer dense classifier.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::PairType;
use crate::error::{Error, Result};
use crate::graph::GraphSnapshot;
use crate::nn::{bce_loss, Activation, Dense, LayerParams, NadamConfig, OptimizerState, Tensor};

pub const NUM_FEATURES: usize = 15;

/// Layout: weighted degree of u, v at Y, Y−1, Y−2 (0..6); distinct-neighbor
/// count of u, v at Y, Y−1, Y−2 (6..12); common neighbors at Y, Y−1, Y−2
/// (12..15).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeatures(pub [f64; NUM_FEATURES]);

/// `snapshots` are ordered current year first.
pub fn compute_pair_features(snapshots: [&GraphSnapshot; 3], u: usize, v: usize) -> Result<PairFeatures> {
    let mut f = [0.0; NUM_FEATURES];
    for (t, s) in snapshots.iter().enumerate() {
        f[2 * t] = s.weighted_degree(u)? as f64;
        f[2 * t + 1] = s.weighted_degree(v)? as f64;
        f[6 + 2 * t] = s.degree(u)? as f64;
        f[6 + 2 * t + 1] = s.degree(v)? as f64;
        f[12 + t] = s.common_neighbors(u, v) as f64;
    }
    Ok(PairFeatures(f))
}

/// `15 tab-separated reals<TAB>label` per row.
pub fn features_to_text(features: &[PairFeatures], labels: &[u8]) -> String {
    let mut out = String::new();
    for (f, y) in features.iter().zip(labels) {
        for x in f.0 {
            write!(out, "{x}\t").expect("string write");
        }
        writeln!(out, "{y}").expect("string write");
    }
    out
}

/// Per-dimension affine standardization fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; NUM_FEATURES],
    pub scale: [f64; NUM_FEATURES],
}

impl Standardizer {
    /// Constant columns get scale 1.
    pub fn fit(features: &[PairFeatures]) -> Self {
        let n = features.len().max(1) as f64;
        let mut mean = [0.0; NUM_FEATURES];
        for f in features {
            mean.iter_mut().zip(&f.0).for_each(|(m, x)| *m += x / n);
        }
        let mut var = [0.0; NUM_FEATURES];
        for f in features {
            for j in 0..NUM_FEATURES {
                let d = f.0[j] - mean[j];
                var[j] += d * d / n;
            }
        }
        let scale = var.map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 });
        Self { mean, scale }
    }

    pub fn apply(&self, f: &PairFeatures) -> [f64; NUM_FEATURES] {
        let mut out = f.0;
        for j in 0..NUM_FEATURES {
            out[j] = (out[j] - self.mean[j]) / self.scale[j];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-3,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub standardizer: Standardizer,
    pub layers: Vec<LayerParams>,
}

fn dense_layers(hidden: usize) -> [Dense; 2] {
    [
        Dense {
            c_in: NUM_FEATURES,
            c_out: hidden,
            activation: Activation::Relu,
        },
        Dense {
            c_in: hidden,
            c_out: 1,
            activation: Activation::Sigmoid,
        },
    ]
}

impl BaselineParams {
    pub fn hidden(&self) -> usize {
        self.layers[0].weights.cols()
    }

    fn forward_raw(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let [d1, d2] = dense_layers(self.hidden());
        let h = d1.forward(x, &self.layers[0])?;
        let p = d2.forward(&h, &self.layers[1])?[0];
        Ok((h, p))
    }

    /// Score of one pair; pairs with two isolated endpoints score exactly 0.
    pub fn score(&self, features: &PairFeatures, pair_type: PairType) -> Result<f64> {
        if pair_type == PairType::Isolated {
            return Ok(0.0);
        }
        Ok(self.forward_raw(&self.standardizer.apply(features))?.1)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("baseline v1\n");
        let line = |s: &mut String, key: &str, xs: &[f64]| {
            s.push_str(key);
            for x in xs {
                write!(s, " {x}").expect("string write");
            }
            s.push('\n');
        };
        writeln!(s, "hidden {}", self.hidden()).expect("string write");
        line(&mut s, "mean", &self.standardizer.mean);
        line(&mut s, "scale", &self.standardizer.scale);
        for (i, l) in self.layers.iter().enumerate() {
            line(&mut s, &format!("w{i}"), l.weights.data());
            line(&mut s, &format!("b{i}"), l.bias.as_ref().expect("dense bias").data());
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "baseline v1")) => {}
            _ => return Err(bad(1, "missing `baseline v1` header".into())),
        }
        let mut fields: Vec<Vec<f64>> = Vec::new();
        let mut hidden = 0usize;
        for (i, l) in lines {
            let mut toks = l.split_whitespace();
            let key = toks.next().unwrap_or_default();
            if key == "hidden" {
                hidden = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(i + 1, "bad hidden size".into()))?;
                continue;
            }
            let vals = toks
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(i + 1, format!("{key}: {e}")))?;
            fields.push(vals);
        }
        let want = [
            NUM_FEATURES,
            NUM_FEATURES,
            NUM_FEATURES * hidden,
            hidden,
            hidden,
            1,
        ];
        if hidden == 0 || fields.len() != want.len() || fields.iter().zip(want).any(|(f, w)| f.len() != w) {
            return Err(Error::ShapeMismatch(format!("baseline file {} has wrong sizes", path.display())));
        }
        let mut it = fields.into_iter();
        let mut take = || it.next().expect("length checked");
        let mean: [f64; NUM_FEATURES] = take().try_into().expect("sized");
        let scale: [f64; NUM_FEATURES] = take().try_into().expect("sized");
        let w0 = Tensor::from_vec(&[NUM_FEATURES, hidden], take())?;
        let b0 = Tensor::from_vec(&[hidden], take())?;
        let w1 = Tensor::from_vec(&[hidden, 1], take())?;
        let b1 = Tensor::from_vec(&[1], take())?;
        Ok(Self {
            standardizer: Standardizer { mean, scale },
            layers: vec![
                LayerParams {
                    weights: w0,
                    bias: Some(b0),
                },
                LayerParams {
                    weights: w1,
                    bias: Some(b1),
                },
            ],
        })
    }
}

/// Per-epoch mean training loss.
pub type BaselineHistory = Vec<f64>;

/// Trains on every pair whose type is not [`PairType::Isolated`].
pub fn baseline_train(
    features: &[PairFeatures],
    labels: &[u8],
    types: &[PairType],
    config: &BaselineConfig,
) -> Result<(BaselineParams, BaselineHistory)> {
    if features.len() != labels.len() || features.len() != types.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len().min(types.len()),
        });
    }
    let idx: Vec<usize> = (0..features.len())
        .filter(|&i| types[i] != PairType::Isolated)
        .collect();
    let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
    if pos == 0 || pos == idx.len() {
        return Err(Error::domain("baseline training set contains a single class"));
    }
    if config.hidden == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("baseline hidden size and learning rate must be positive".into()));
    }
    let train_feats: Vec<PairFeatures> = idx.iter().map(|&i| features[i]).collect();
    let standardizer = Standardizer::fit(&train_feats);
    let inputs: Vec<[f64; NUM_FEATURES]> = train_feats.iter().map(|f| standardizer.apply(f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        use rand::distributions::{Distribution, Uniform};
        let lim = (6.0 / (r + c) as f64).sqrt();
        let d = Uniform::new_inclusive(-lim, lim);
        Tensor::from_vec(&[r, c], (0..r * c).map(|_| d.sample(rng)).collect()).expect("shape")
    };
    let mut params = BaselineParams {
        standardizer,
        layers: vec![
            LayerParams {
                weights: init(&mut rng, NUM_FEATURES, config.hidden),
                bias: Some(Tensor::zeros(&[config.hidden])),
            },
            LayerParams {
                weights: init(&mut rng, config.hidden, 1),
                bias: Some(Tensor::zeros(&[1])),
            },
        ],
    };
    let [d1, d2] = dense_layers(config.hidden);
    let mut opt = OptimizerState::new(
        NadamConfig {
            learning_rate: config.learning_rate,
            ..NadamConfig::default()
        },
        &params.layers,
    );
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &j in &order {
            let x = &inputs[j];
            let (h, p) = params.forward_raw(x)?;
            let (loss, dp) = bce_loss(p, labels[idx[j]] as f64);
            total += loss;
            let mut grads: Vec<LayerParams> = params.layers.iter().map(LayerParams::zeros_like).collect();
            let (g0, g1) = grads.split_at_mut(1);
            let dh = d2.backward(&h, &[p], &params.layers[1], &[dp], &mut g1[0]);
            d1.backward(x, &h, &params.layers[0], &dh, &mut g0[0]);
            opt.nadam_step(&mut params.layers, &grads);
        }
        history.push(total / order.len() as f64);
    }
    Ok((params, history))
}

pub fn baseline_predict(params: &BaselineParams, features: &[PairFeatures], types: &[PairType]) -> Result<Vec<f64>> {
    if features.len() != types.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: types.len(),
        });
    }
    features
        .iter()
        .zip(types)
        .map(|(f, &t)| params.score(f, t))
        .collect()
}
