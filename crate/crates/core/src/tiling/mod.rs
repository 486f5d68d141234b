//! Tile enumeration over tissue masks, embedding bags, the binary embedding
//! store and the synthetic cohort generator.

mod bag;
mod mask;
mod store;
mod synth;

pub use bag::{assemble_bag, concat_embeddings, sample_training_slides, EmbeddingBag, Provenance};
pub use mask::{enumerate_tiles, read_mask_pgm, sidecar_path, write_mask_pgm, TileGrid, TissueMask};
pub use store::{
    decode_store, encode_store, load_store, read_store, save_store, write_store, STORE_MAGIC,
    STORE_VERSION,
};
pub use synth::{generate_synthetic_cohort, SyntheticCohort, SyntheticSignalSpec};
