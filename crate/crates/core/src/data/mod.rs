//! Dataset ingestion and experiment corpora.

mod collage;
mod idx;
mod image;
pub mod synth;

pub use collage::{
    build_collage, build_collage_with_fill, read_manifest, recall_on_manifest, sliding_windows,
    CollageFrame, PlacedTile, Recall, WindowGrid, DEFAULT_NONFACE_FILL, TILE_SIDE,
};
pub use idx::{
    load_idx, load_mnist_dir, read_idx_images, read_idx_labels, write_idx, LabeledImageSet,
    IMAGES_MAGIC, LABELS_MAGIC,
};
pub use image::{
    downscale_2x2, luma601, read_cifar_batch, read_pgm, read_pgm_dir, resize_area, write_pgm,
    GrayImage,
};
