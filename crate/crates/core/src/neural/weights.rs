//! Named parameter bundles and their on-disk format.
//!
//! File layout: magic `AFWB`, `u32` format version, `u64` header length,
//! UTF-8 JSON header, then every parameter's values as little-endian `f64`
//! in row-major order, concatenated in the order the header lists them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use super::{Matrix, NeuralError};

pub const BUNDLE_MAGIC: &[u8; 4] = b"AFWB";
pub const BUNDLE_VERSION: u32 = 1;
pub const INIT_STD: f64 = 0.02;
pub const GENERATOR_NAME: &str = "xoshiro256**";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    /// Model dimension.
    pub d: usize,
    /// Attention heads.
    pub heads: usize,
    /// Transformer blocks per vision-language stream.
    pub layers: usize,
    pub seed: u64,
    pub generator: String,
    /// T-Net stages in the segmentation head.
    #[serde(default = "one")]
    pub tnet_layers: usize,
    /// Per-point encoder blocks in the segmentation head.
    #[serde(default = "two")]
    pub seg_encoder_blocks: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

impl BundleMeta {
    pub fn head_dim(&self) -> Result<usize, NeuralError> {
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(NeuralError::HeadDivisibility {
                d: self.d,
                heads: self.heads,
            });
        }
        Ok(self.d / self.heads)
    }
}

/// How a parameter is initialised during generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            init,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    meta: BundleMeta,
    params: BTreeMap<String, Matrix>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    meta: BundleMeta,
    params: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    shape: [usize; 2],
}

impl WeightBundle {
    pub fn new(meta: BundleMeta) -> Result<Self, NeuralError> {
        meta.head_dim()?;
        Ok(Self {
            meta,
            params: BTreeMap::new(),
        })
    }

    /// Draws every parameter from one seeded stream, visiting specs in name order.
    pub fn generate(meta: BundleMeta, specs: &[ParamSpec]) -> Result<Self, NeuralError> {
        let mut bundle = Self::new(meta)?;
        let mut sorted: Vec<&ParamSpec> = specs.iter().collect();
        sorted.sort_by(|a, b| a.name.cmp(&b.name));
        let mut rng = Xoshiro256StarStar::seed_from_u64(bundle.meta.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        for spec in sorted {
            let n = spec.rows * spec.cols;
            let data = match spec.init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            bundle.insert(&spec.name, Matrix::new(spec.rows, spec.cols, data)?);
        }
        Ok(bundle)
    }

    pub fn meta(&self) -> &BundleMeta {
        &self.meta
    }

    pub fn insert(&mut self, name: &str, m: Matrix) {
        self.params.insert(name.to_string(), m);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&Matrix, NeuralError> {
        self.params
            .get(name)
            .ok_or_else(|| NeuralError::MissingParam(name.to_string()))
    }

    /// Fetches a parameter and checks its exact shape.
    pub fn require(&self, name: &str, rows: usize, cols: usize) -> Result<&Matrix, NeuralError> {
        let m = self.get(name)?;
        if m.shape() != (rows, cols) {
            return Err(NeuralError::ShapeMismatch {
                op: "weights",
                detail: format!("{name}: expected {rows}x{cols}, found {:?}", m.shape()),
            });
        }
        Ok(m)
    }

    /// Checks every spec'd parameter exists with the expected shape.
    pub fn check(&self, specs: &[ParamSpec]) -> Result<(), NeuralError> {
        for s in specs {
            self.require(&s.name, s.rows, s.cols)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            meta: self.meta.clone(),
            params: self
                .params
                .iter()
                .map(|(name, m)| HeaderEntry {
                    name: name.clone(),
                    shape: [m.rows(), m.cols()],
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.params.values().map(|m| m.data().len() * 8).sum();
        let mut out = Vec::with_capacity(16 + json.len() + payload);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for m in self.params.values() {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let bad = |why: &str| NeuralError::Format(why.to_string());
        if bytes.len() < 16 || &bytes[..4] != BUNDLE_MAGIC {
            return Err(bad("missing AFWB magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != BUNDLE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let hend = 16usize.checked_add(hlen).ok_or_else(|| bad("header length"))?;
        let header: Header = serde_json::from_slice(bytes.get(16..hend).ok_or_else(|| bad("truncated header"))?)
            .map_err(|e| bad(&format!("header: {e}")))?;
        let mut bundle = Self::new(header.meta)?;
        let mut pos = hend;
        for entry in header.params {
            let n = entry.shape[0]
                .checked_mul(entry.shape[1])
                .ok_or_else(|| bad("shape overflow"))?;
            let end = pos
                .checked_add(n.checked_mul(8).ok_or_else(|| bad("shape overflow"))?)
                .ok_or_else(|| bad("payload length"))?;
            let block = bytes.get(pos..end).ok_or_else(|| bad("truncated payload"))?;
            let data = block
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            bundle.insert(&entry.name, Matrix::new(entry.shape[0], entry.shape[1], data)?);
            pos = end;
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        fs::write(path, self.to_bytes()).map_err(|e| NeuralError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let bytes = fs::read(path).map_err(|e| NeuralError::Format(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(seed: u64) -> BundleMeta {
        BundleMeta {
            d: 8,
            heads: 2,
            layers: 1,
            seed,
            generator: GENERATOR_NAME.into(),
            tnet_layers: 1,
            seg_encoder_blocks: 2,
        }
    }

    fn specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec::new("b.w", 3, 8, Init::Normal),
            ParamSpec::new("a.gain", 1, 8, Init::Ones),
            ParamSpec::new("a.bias", 1, 8, Init::Zeros),
        ]
    }

    #[test]
    fn generation_is_seeded_and_order_independent() {
        let a = WeightBundle::generate(meta(7), &specs()).unwrap();
        let mut rev = specs();
        rev.reverse();
        let b = WeightBundle::generate(meta(7), &rev).unwrap();
        assert_eq!(a, b);
        let c = WeightBundle::generate(meta(8), &specs()).unwrap();
        assert_ne!(a.get("b.w").unwrap(), c.get("b.w").unwrap());
        assert_eq!(a.get("a.gain").unwrap().data(), &[1.0; 8]);
        assert_eq!(a.get("a.bias").unwrap().data(), &[0.0; 8]);
    }

    #[test]
    fn head_divisibility() {
        let mut m = meta(1);
        m.heads = 3;
        assert!(matches!(
            WeightBundle::new(m),
            Err(NeuralError::HeadDivisibility { d: 8, heads: 3 })
        ));
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let a = WeightBundle::generate(meta(3), &specs()).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..4], b"AFWB");
        let b = WeightBundle::from_bytes(&bytes).unwrap();
        assert_eq!(a, b);
        assert!(WeightBundle::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(WeightBundle::from_bytes(&extra).is_err());
    }

    #[test]
    fn require_checks_shapes() {
        let a = WeightBundle::generate(meta(3), &specs()).unwrap();
        assert!(a.require("b.w", 3, 8).is_ok());
        assert!(matches!(a.require("b.w", 8, 3), Err(NeuralError::ShapeMismatch { .. })));
        assert!(matches!(a.require("nope", 1, 1), Err(NeuralError::MissingParam(_))));
        assert!(a.check(&specs()).is_ok());
    }
}
