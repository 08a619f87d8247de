//! Deterministic dense linear algebra and transformer building blocks.

mod attention;
mod matrix;
pub mod ops;
pub mod weights;

use thiserror::Error;

pub use attention::{
    add_norm, add_norm_named, attention_param_names, feed_forward, multi_head_attention,
};
pub use matrix::Matrix;
pub use ops::{layer_norm, matmul, softmax_rows};
pub use weights::{BundleMeta, Init, ParamSpec, WeightBundle};

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("head count {heads} does not divide model dimension {d}")]
    HeadDivisibility { d: usize, heads: usize },
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("weight bundle format: {0}")]
    Format(String),
}

/// Specs for an attention block's projections under `prefix`.
pub fn attention_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    attention_param_names(prefix)
        .into_iter()
        .map(|(name, is_weight)| {
            if is_weight {
                ParamSpec::new(name, d, d, Init::Normal)
            } else {
                ParamSpec::new(name, 1, d, Init::Zeros)
            }
        })
        .collect()
}

/// Specs for a [`feed_forward`] block under `prefix`.
pub fn feed_forward_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new(format!("{prefix}.w1"), d, 4 * d, Init::Normal),
        ParamSpec::new(format!("{prefix}.b1"), 1, 4 * d, Init::Zeros),
        ParamSpec::new(format!("{prefix}.w2"), 4 * d, d, Init::Normal),
        ParamSpec::new(format!("{prefix}.b2"), 1, d, Init::Zeros),
    ]
}

/// Specs for a layer-norm gain/bias pair under `prefix`.
pub fn norm_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new(format!("{prefix}.gain"), 1, d, Init::Ones),
        ParamSpec::new(format!("{prefix}.bias"), 1, d, Init::Zeros),
    ]
}

/// A standard post-norm encoder block:
/// `x = LN(x + MHA(x, x, x)); x = LN(x + FFN(x))`.
pub fn encoder_block(x: &Matrix, w: &WeightBundle, prefix: &str) -> Result<Matrix, NeuralError> {
    let attn = multi_head_attention(x, x, x, w, &format!("{prefix}.attn"))?;
    let x = add_norm_named(x, &attn, w, &format!("{prefix}.ln1"))?;
    let ff = feed_forward(&x, w, &format!("{prefix}.ffn"))?;
    add_norm_named(&x, &ff, w, &format!("{prefix}.ln2"))
}

pub fn encoder_block_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    let mut specs = attention_specs(&format!("{prefix}.attn"), d);
    specs.extend(norm_specs(&format!("{prefix}.ln1"), d));
    specs.extend(feed_forward_specs(&format!("{prefix}.ffn"), d));
    specs.extend(norm_specs(&format!("{prefix}.ln2"), d));
    specs
}
