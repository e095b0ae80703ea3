use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{WamParams, WsamParams};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Variant};
use crate::minidet::DetParams;
use crate::numerics::Matrix;
use crate::params::{orthogonal, ParamId, ParamStore};
use crate::weightgen::DecoderParams;

/// Shared per-cell linear projection applied to both grids.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub variant: Variant,
    pub store: ParamStore,
    pub backbone: Backbone,
    pub det: DetParams,
    pub decoder: Option<DecoderParams>,
    pub wam: Option<WamParams>,
    pub wsam: Option<WsamParams>,
}

impl Model {
    pub fn init(cfg: &ExperimentConfig, variant: Variant) -> Result<Self> {
        let c = cfg.scene.c;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let mut store = ParamStore::new();
        let backbone = Backbone {
            w: store.add("backbone.w", orthogonal(c, c, 1.0, &mut rng)),
            b: store.add("backbone.b", Matrix::zeros(1, c)),
        };
        let det = DetParams::init(&mut store, "det", c, cfg.scene.classes, &mut rng);
        let (decoder, wam) = if variant.uses_wam() {
            (
                Some(DecoderParams::init(&mut store, "decoder", c, &mut rng)),
                Some(WamParams::init(&mut store, "wam", c, cfg.n_wam, &mut rng)?),
            )
        } else {
            (None, None)
        };
        let wsam = if variant.uses_wsam() {
            Some(WsamParams::init(&mut store, "wsam", c, cfg.scene.classes, cfg.n_wsam, &mut rng)?)
        } else {
            None
        };
        Ok(Self {
            variant,
            store,
            backbone,
            det,
            decoder,
            wam,
            wsam,
        })
    }

    /// Same parameters under another variant with the same parameter set.
    pub fn as_variant(&self, variant: Variant) -> Result<Self> {
        if variant.trained_as() != self.variant.trained_as() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters cannot run as {}",
                self.variant, variant
            )));
        }
        let mut m = self.clone();
        m.variant = variant;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            variant: self.variant,
            params: self
                .store
                .iter()
                .map(|(name, m)| NamedParam {
                    name: name.to_owned(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().to_vec(),
                })
                .collect(),
        };
        std::fs::write(path, serde_json::to_string(&ck)?)?;
        Ok(())
    }

    /// Loads parameters saved by [`Model::save`] into a freshly built model.
    pub fn load(cfg: &ExperimentConfig, path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut model = Self::init(cfg, ck.variant)?;
        let named = ck
            .params
            .into_iter()
            .map(|p| Ok((p.name, Matrix::from_vec(p.rows, p.cols, p.data)?)))
            .collect::<Result<Vec<_>>>()?;
        model.store.load_from(&named)?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    variant: Variant,
    params: Vec<NamedParam>,
}

#[derive(Serialize, Deserialize)]
struct NamedParam {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}
