//! Default model dimensions and the combined parameter layout.

use serde::{Deserialize, Serialize};

use crate::affordseg::affordseg_specs;
use crate::neural::weights::GENERATOR_NAME;
use crate::neural::{BundleMeta, NeuralError, ParamSpec, WeightBundle};
use crate::vlm::{vlm_specs, PATCH_DIM};

pub const DEFAULT_SEED: u64 = 20_241_024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    pub patch_dim: usize,
    pub vocab_size: usize,
    pub seg_encoder_blocks: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            layers: 2,
            patch_dim: PATCH_DIM,
            vocab_size: 1,
            seg_encoder_blocks: 2,
        }
    }
}

impl ModelDims {
    pub fn meta(&self, seed: u64) -> BundleMeta {
        BundleMeta {
            d: self.d,
            heads: self.heads,
            layers: self.layers,
            seed,
            generator: GENERATOR_NAME.to_string(),
            tnet_layers: 1,
            seg_encoder_blocks: self.seg_encoder_blocks,
        }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut specs = vlm_specs(self.d, self.layers, self.patch_dim, self.vocab_size);
        specs.extend(affordseg_specs(self.d, self.seg_encoder_blocks));
        specs
    }

    /// Dimensions implied by an existing bundle's metadata and embedding table.
    pub fn from_bundle(w: &WeightBundle) -> Result<Self, NeuralError> {
        let m = w.meta();
        Ok(Self {
            d: m.d,
            heads: m.heads,
            layers: m.layers,
            patch_dim: w.get("vlm.patch_proj.w")?.rows(),
            vocab_size: w.get("vlm.text.embed")?.rows(),
            seg_encoder_blocks: m.seg_encoder_blocks,
        })
    }
}

/// Seeded bundle covering both encoder streams and the segmentation head.
pub fn default_bundle(dims: &ModelDims, seed: u64) -> Result<WeightBundle, NeuralError> {
    WeightBundle::generate(dims.meta(seed), &dims.specs())
}

/// Checks a loaded bundle has every parameter the pipeline reads.
pub fn check_bundle(w: &WeightBundle, vocab_size: usize) -> Result<ModelDims, NeuralError> {
    let dims = ModelDims::from_bundle(w)?;
    if dims.vocab_size != vocab_size {
        return Err(NeuralError::ShapeMismatch {
            op: "weights",
            detail: format!(
                "text embedding has {} rows, tokenizer has {vocab_size} tokens",
                dims.vocab_size
            ),
        });
    }
    w.meta().head_dim()?;
    w.check(&dims.specs())?;
    Ok(dims)
}
