//! Audio and text towers that project into the shared latent space, and
//! the file-backed store that carries embeddings from external models.

mod hashed;
mod melstat;
mod store;

pub use hashed::{fnv1a64, HashedTextEncoder};
pub use melstat::MelStatEncoder;
pub use store::{
    load_metadata, save_metadata, sidecar_path, EmbeddingStore, StoreMetadata, TCLP_MAGIC,
};

use ndarray::Array2;

use crate::audio::{AudioBuffer, Spectrogram};
use crate::embedding::Embedding;
use crate::error::Result;

/// Audio tower. Outputs unit-norm embeddings and is deterministic.
pub trait AudioEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn encode_audio(&self, audio: &AudioBuffer) -> Result<Embedding>;
}

/// An audio tower that works on STFT magnitudes and can back-propagate
/// through them.
pub trait SpectralEncoder: AudioEncoder {
    /// Analysis used by [`AudioEncoder::encode_audio`].
    fn analyze(&self, audio: &AudioBuffer) -> Result<Spectrogram>;

    fn encode(&self, spec: &Spectrogram) -> Result<Embedding>;

    /// Vector-Jacobian product: the gradient of `<upstream, encode(spec)>`
    /// with respect to `spec.magnitudes`.
    fn vjp(&self, spec: &Spectrogram, upstream: &[f64]) -> Result<Array2<f64>>;

    /// Encodes once and back-propagates the upstream gradient computed
    /// from the embedding. Implementations may share the forward pass.
    fn encode_with_vjp(
        &self,
        spec: &Spectrogram,
        upstream: &mut dyn FnMut(&Embedding) -> Result<Vec<f64>>,
    ) -> Result<(Embedding, Array2<f64>)> {
        let z = self.encode(spec)?;
        let g = upstream(&z)?;
        let grad = self.vjp(spec, &g)?;
        Ok((z, grad))
    }
}

/// Text tower.
pub trait TextEncoder {
    fn dim(&self) -> usize;

    fn encode_text(&self, text: &str) -> Result<Embedding>;
}
