//! File formats and image preprocessing.

pub mod embeddings;
pub mod image;
pub mod manifest;
pub mod preprocess;
pub mod weights;

pub use embeddings::{read_embeddings, write_embeddings, RowEmbedding};
pub use image::{decode_image, RawImage};
pub use manifest::{load_manifest, Manifest, ManifestEntry};
pub use preprocess::{preprocess_test, preprocess_train};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights};
