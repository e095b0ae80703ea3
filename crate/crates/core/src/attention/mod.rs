//! Weighted attention, weighted spatial attention and the stacked
//! two-view (WAM) and spatial (WSAM) modules built from them.
//!
//! Attention logits are the raw products of the weighted queries and keys;
//! there is no `1/sqrt(d)` temperature.

mod block;
mod grid;
mod modules;
mod ops;
mod twocomp;

pub use block::{
    transformer_block, AttentionMode, BlockContext, BlockParams, FFN_EXPANSION, INIT_GAIN, QK_INIT_GAIN,
};
pub use grid::FeatureGrid;
pub use modules::{wam_forward, wsam_forward, WamParams, WamRound, WsamParams};
pub use ops::{
    attention_weights, cross_attention, weighted_attention, weighted_attention_var, ws_attention,
    ws_attention_combined, ws_attention_combined_var, ws_attention_var,
};
pub use twocomp::{construct_two_component_pair, TwoComponentSpec};
