//! Vision-language understanding: image patches and query text are encoded
//! by two transformer streams; a pluggable backend turns them into a
//! grounding result.

mod backend;
mod encoder;
mod patch;

pub use backend::{
    GroundingBackend, GroundingError, ImageInput, OracleBackend, RemoteBackend, ToyBackend,
    DEFAULT_REMOTE_TIMEOUT,
};
pub use encoder::{
    cosine, encode_image, encode_text, encode_tokens, vlm_specs, EncodeError, TextEmbedding,
    Tokenizer, VisualToken, UNK,
};
pub use patch::{
    decode_image, patchify, patchify_bytes, ImagePatchGrid, PatchError, IMAGE_SIDE, PATCH_COUNT,
    PATCH_DIM, PATCH_SIDE,
};

use crate::query::InteractionQuery;
use crate::types::GroundingResult;

/// Runs `backend` and re-checks the result's box and confidence invariants.
pub fn ground(
    backend: &dyn GroundingBackend,
    image: &ImageInput,
    query: &InteractionQuery,
) -> Result<GroundingResult, GroundingError> {
    let g = backend.ground(image, query)?;
    let b = g.bbox.as_array();
    let valid = b.iter().all(|v| (0.0..=1.0).contains(v))
        && b[0] < b[2]
        && b[1] < b[3]
        && (0.0..=1.0).contains(&g.confidence);
    if !valid {
        return Err(GroundingError::ProtocolError(format!(
            "{} backend produced an invalid grounding",
            backend.name()
        )));
    }
    Ok(g)
}
