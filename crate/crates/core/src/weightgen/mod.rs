//! Foreground weight maps for the attention modules and the match filter,
//! and the light segmentation decoder that supplies them when boxes are
//! missing.
//!
//! Box rasterization is by cell center: a cell is inside a box when its
//! center `((c + 0.5) s, (r + 0.5) s)` lies strictly inside it.

mod decoder;
mod maps;
mod types;

pub use decoder::{
    box_projection_loss, box_projection_loss_var, light_decoder, light_decoder_var, DecoderParams,
    DICE_EPS,
};
pub use maps::{
    box_filter_maps, box_union_cells, cell_in_box, generate_wam_maps, generate_wsam_maps,
    map_from_boxes, map_from_mask, MapInputs, Setting, MASK_THRESHOLD,
};
pub use types::{BBox, SegMask, WeightMap};
