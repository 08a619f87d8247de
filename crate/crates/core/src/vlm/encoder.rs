use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::neural::ops::{linear, mean_rows};
use crate::neural::{encoder_block, encoder_block_specs, Init, Matrix, NeuralError, ParamSpec, WeightBundle};
use crate::query::{normalize_text, InteractionQuery};

use super::patch::ImagePatchGrid;

pub const UNK: &str = "<unk>";

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("query has no tokens")]
    EmptyQuery,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualToken(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    pub tokens: Vec<String>,
}

/// Whitespace tokenizer over a fixed vocabulary; id 0 is `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    vocab: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl Tokenizer {
    /// Builds a vocabulary from arbitrary phrases; words are normalized,
    /// deduplicated and sorted after the leading `<unk>`.
    pub fn from_phrases<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut words: Vec<String> = phrases
            .into_iter()
            .flat_map(|p| {
                normalize_text(p.as_ref())
                    .split_whitespace()
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .collect();
        words.sort();
        words.dedup();
        let mut vocab = vec![UNK.to_string()];
        vocab.extend(words);
        Self::from_vocab(vocab)
    }

    fn from_vocab(vocab: Vec<String>) -> Self {
        let ids = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { vocab, ids }
    }

    /// One token per line; `<unk>` is inserted at id 0 if the file lacks it.
    pub fn from_file_contents(text: &str) -> Self {
        let mut vocab: Vec<String> = vec![UNK.to_string()];
        vocab.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && *l != UNK)
                .map(str::to_string),
        );
        Self::from_vocab(vocab)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_file_contents(&fs::read_to_string(path)?))
    }

    pub fn to_file_contents(&self) -> String {
        let mut s = self.vocab.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        normalize_text(text).split_whitespace().map(|t| self.id(t)).collect()
    }
}

/// Parameter shapes for both encoder streams.
pub fn vlm_specs(d: usize, layers: usize, patch_dim: usize, vocab_size: usize) -> Vec<ParamSpec> {
    let mut specs = vec![
        ParamSpec::new("vlm.patch_proj.w", patch_dim, d, Init::Normal),
        ParamSpec::new("vlm.patch_proj.b", 1, d, Init::Zeros),
        ParamSpec::new("vlm.text.embed", vocab_size, d, Init::Normal),
    ];
    for i in 0..layers {
        specs.extend(encoder_block_specs(&format!("vlm.visual.block{i}"), d));
        specs.extend(encoder_block_specs(&format!("vlm.text.block{i}"), d));
    }
    specs
}

/// Patch projection, `layers` attention blocks, mean pool over patches.
pub fn encode_image(grid: &ImagePatchGrid, w: &WeightBundle) -> Result<VisualToken, EncodeError> {
    let d = w.meta().d;
    let proj = w.require("vlm.patch_proj.w", grid.patches.cols(), d)?;
    let mut x = linear(&grid.patches, proj, w.require("vlm.patch_proj.b", 1, d)?)?;
    for i in 0..w.meta().layers {
        x = encoder_block(&x, w, &format!("vlm.visual.block{i}"))?;
    }
    Ok(VisualToken(mean_rows(&x).into_data()))
}

/// Embedding lookup of the query's action and object tokens, `layers`
/// attention blocks, mean pool over tokens.
pub fn encode_text(
    query: &InteractionQuery,
    tokenizer: &Tokenizer,
    w: &WeightBundle,
) -> Result<TextEmbedding, EncodeError> {
    encode_tokens(&query.tokens(), tokenizer, w)
}

pub fn encode_tokens(
    tokens: &[String],
    tokenizer: &Tokenizer,
    w: &WeightBundle,
) -> Result<TextEmbedding, EncodeError> {
    if tokens.is_empty() {
        return Err(EncodeError::EmptyQuery);
    }
    let d = w.meta().d;
    let table = w.require("vlm.text.embed", tokenizer.len(), d)?;
    let ids: Vec<usize> = tokens.iter().map(|t| tokenizer.id(t)).collect();
    let mut x: Matrix = table.select_rows(&ids);
    for i in 0..w.meta().layers {
        x = encoder_block(&x, w, &format!("vlm.text.block{i}"))?;
    }
    Ok(TextEmbedding {
        vector: mean_rows(&x).into_data(),
        tokens: tokens.to_vec(),
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}
