//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `DGCNNCKP`, a little-endian `u16` version, a
//! little-endian `u32` header length, a UTF-8 header of `key = value` lines
//! (architecture, seed, and one `tensor <name> <d0>x<d1>...` line per
//! parameter tensor), then every tensor's values as little-endian `f64` in
//! header order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ArchitectureConfig, ConvStage, ModelParams};
use crate::nn::{LayerParams, Tensor};

pub const MAGIC: &[u8; 8] = b"DGCNNCKP";
pub const VERSION: u16 = 1;

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn header_text(model: &ModelParams) -> String {
    let c = &model.config;
    let mut h = String::new();
    h.push_str(&format!("seed = {}\n", model.seed));
    h.push_str(&format!("gcn_channels = {}\n", join(&c.gcn_channels)));
    h.push_str(&format!("sort_k = {}\n", c.sort_k));
    h.push_str(&format!("conv_stack = {}\n", join(&c.conv_stack)));
    h.push_str(&format!("conv_kernel = {}\n", c.conv_kernel));
    h.push_str(&format!("pool_window = {}\n", c.pool_window));
    h.push_str(&format!("pool_stride = {}\n", c.pool_stride));
    h.push_str(&format!("dense_sizes = {}\n", join(&c.dense_sizes)));
    h.push_str(&format!("l_max = {}\n", c.l_max));
    h.push_str(&format!("hops = {}\n", c.hops));
    h.push_str(&format!("keep_fraction = {}\n", c.keep_fraction));
    for (name, t) in model.named_tensors() {
        h.push_str(&format!("tensor {name} {}\n", join(t.shape()).replace(',', "x")));
    }
    h
}

pub fn to_bytes(model: &ModelParams) -> Vec<u8> {
    let header = header_text(model);
    let n_values = model.num_parameters();
    let mut out = Vec::with_capacity(14 + header.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for (_, t) in model.named_tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(model: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&to_bytes(model))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Loads a checkpoint and requires its architecture to equal `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ArchitectureConfig) -> Result<ModelParams> {
    let model = load_checkpoint(path)?;
    if &model.config != expected {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint architecture (k = {}, channels {:?}) differs from the configured one (k = {}, channels {:?})",
            model.config.sort_k, model.config.gcn_channels, expected.sort_k, expected.gcn_channels
        )));
    }
    Ok(model)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|_| corrupt(format!("bad {key} entry {s:?}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| corrupt(format!("bad {key} value {v:?}")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams> {
    if bytes.len() < 14 {
        return Err(corrupt("file shorter than fixed header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let body = &bytes[14..];
    if body.len() < header_len {
        return Err(corrupt("truncated header"));
    }
    let header = std::str::from_utf8(&body[..header_len]).map_err(|_| corrupt("header is not UTF-8"))?;
    let mut data = &body[header_len..];

    let mut seed = None;
    let mut cfg = ArchitectureConfig::paper(1);
    let mut seen = 0usize;
    let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
    for line in header.lines().filter(|l| !l.trim().is_empty()) {
        if let Some(rest) = line.strip_prefix("tensor ") {
            let mut parts = rest.split_whitespace();
            let (Some(name), Some(dims), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(corrupt(format!("bad tensor line {line:?}")));
            };
            let dims = dims
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|_| corrupt(format!("bad shape in {line:?}"))))
                .collect::<Result<Vec<_>>>()?;
            shapes.push((name.to_string(), dims));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("bad header line {line:?}")))?;
        let k = k.trim();
        match k {
            "seed" => seed = Some(parse_one(k, v)?),
            "gcn_channels" => cfg.gcn_channels = parse_list(k, v)?,
            "sort_k" => cfg.sort_k = parse_one(k, v)?,
            "conv_stack" => {
                cfg.conv_stack = v
                    .split(',')
                    .map(|s| s.parse::<ConvStage>().map_err(|_| corrupt(format!("bad conv stage {s:?}"))))
                    .collect::<Result<_>>()?
            }
            "conv_kernel" => cfg.conv_kernel = parse_one(k, v)?,
            "pool_window" => cfg.pool_window = parse_one(k, v)?,
            "pool_stride" => cfg.pool_stride = parse_one(k, v)?,
            "dense_sizes" => cfg.dense_sizes = parse_list(k, v)?,
            "l_max" => cfg.l_max = parse_one(k, v)?,
            "hops" => cfg.hops = parse_one(k, v)?,
            "keep_fraction" => cfg.keep_fraction = parse_one(k, v)?,
            other => return Err(corrupt(format!("unknown header key {other:?}"))),
        }
        seen += 1;
    }
    if seen != 11 {
        return Err(corrupt(format!("header has {seen} of 11 config keys")));
    }
    let seed = seed.ok_or_else(|| corrupt("missing seed"))?;

    let template = ModelParams::build(cfg.clone(), seed).map_err(|e| corrupt(e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = template
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected != shapes {
        return Err(Error::ShapeMismatch(
            "checkpoint tensor list does not match its architecture".into(),
        ));
    }

    let mut tensors = Vec::with_capacity(shapes.len());
    for (name, shape) in &shapes {
        let n: usize = shape.iter().product();
        if data.len() < 8 * n {
            return Err(corrupt(format!("truncated data in tensor {name}")));
        }
        let values: Vec<f64> = data[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        data = &data[8 * n..];
        tensors.push(Tensor::from_vec(shape, values)?);
    }
    if !data.is_empty() {
        return Err(corrupt(format!("{} trailing bytes", data.len())));
    }

    let mut it = tensors.into_iter();
    let layers = template
        .layers
        .iter()
        .map(|l| LayerParams {
            weights: it.next().expect("counted"),
            bias: l.bias.as_ref().map(|_| it.next().expect("counted")),
        })
        .collect();
    ModelParams::from_parts(cfg, seed, layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        let mut cfg = ArchitectureConfig::paper(12);
        cfg.gcn_channels = vec![4, 4, 1];
        cfg.conv_stack = vec![ConvStage::Conv { filters: 3 }, ConvStage::MaxPool, ConvStage::Conv { filters: 2 }];
        cfg.dense_sizes = vec![5, 1];
        ModelParams::build(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = small();
        let bytes = to_bytes(&m);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn corrupt_files() {
        let bytes = to_bytes(&small());
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::CorruptCheckpoint(_))));
        assert!(matches!(from_bytes(&bytes[..20]), Err(Error::CorruptCheckpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::CorruptCheckpoint(_))));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(from_bytes(&v2), Err(Error::CheckpointVersion { found: 2, .. })));
    }

    #[test]
    fn architecture_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = ModelParams::build(ArchitectureConfig::paper(200), 0).unwrap();
        save_checkpoint(&m, &path).unwrap();
        assert!(load_checkpoint_for(&path, &ArchitectureConfig::paper(200)).is_ok());
        assert!(matches!(
            load_checkpoint_for(&path, &ArchitectureConfig::paper(400)),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
