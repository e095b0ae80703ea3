//! Synthetic scene pairs: feature-grid scenes with planted objects, a random
//! perspective warp, warped boxes and cell-level ground-truth matches.

mod manifest;
mod pair;
mod scene;

pub use manifest::{read_grid_blob, read_manifest, write_grid_blob, write_manifest, MANIFEST_FILE};
pub use pair::{
    derive_gt_matches, homography_from_corners, make_pair, warp_box, SceneSample,
    MATCH_RADIUS, MAX_CORNER_TRIES,
};
pub use scene::{generate_scene, Scene, SceneCodes, SceneSpec, MAX_WARP_MAGNITUDE};

use crate::error::Result;
use crate::exec::map_indexed;

/// Sample `index` of the dataset defined by `spec`.
pub fn generate_sample(spec: &SceneSpec, index: u64) -> Result<SceneSample> {
    generate_sample_with(spec, &spec.codes(), index)
}

fn generate_sample_with(spec: &SceneSpec, codes: &SceneCodes, index: u64) -> Result<SceneSample> {
    let mut rng = spec.sample_rng(index);
    let scene = generate_scene(spec, codes, &mut rng)?;
    make_pair(&scene.grid, &scene.boxes, spec, &mut rng)
}

/// Samples `first..first + n`, generated in parallel when enabled.
pub fn generate_dataset(spec: &SceneSpec, first: u64, n: usize) -> Result<Vec<SceneSample>> {
    spec.validate()?;
    let codes = spec.codes();
    map_indexed(n, |k| generate_sample_with(spec, &codes, first + k as u64))
        .into_iter()
        .collect()
}
