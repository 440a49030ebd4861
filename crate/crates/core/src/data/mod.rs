//! Synthetic layouts, the pixel-ILT label oracle, and dataset storage.

mod ilt;
mod layout;

pub use ilt::{pixel_ilt, quantize16, IltConfig, IltResult};
pub use layout::{
    generate_tile, generate_tiles, rasterize, rect_gap, LayoutSpec, LayoutTile, Polygon, ShapeKind,
    ShapeMix,
};
mod io;

pub use io::{
    build_dataset, load_tile, read_manifest, save_tile, split_of, write_manifest, Dataset,
    LabeledTile, ManifestRow, Split, TileMeta,
};
