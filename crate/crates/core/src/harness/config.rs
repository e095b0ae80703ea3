use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matchhead::{DEFAULT_TAU, DEFAULT_THETA};
use crate::minidet::{DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESH};
use crate::synthdata::SceneSpec;
use crate::weightgen::Setting;

/// Pipeline variants. `Wam`, `WamBoxFilter` and `WamWsam` are the module
/// ablations between the two end points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[serde(rename = "mdbase")]
    MdBase,
    Wam,
    #[serde(rename = "wam-boxfilter")]
    WamBoxFilter,
    WamWsam,
    #[serde(rename = "matchdet")]
    MatchDet,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::MdBase,
        Variant::Wam,
        Variant::WamBoxFilter,
        Variant::WamWsam,
        Variant::MatchDet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::MdBase => "mdbase",
            Variant::Wam => "wam",
            Variant::WamBoxFilter => "wam-boxfilter",
            Variant::WamWsam => "wam-wsam",
            Variant::MatchDet => "matchdet",
        }
    }

    pub fn uses_wam(self) -> bool {
        self != Variant::MdBase
    }

    pub fn uses_wsam(self) -> bool {
        matches!(self, Variant::WamWsam | Variant::MatchDet)
    }

    pub fn uses_box_filter(self) -> bool {
        matches!(self, Variant::WamBoxFilter | Variant::MatchDet)
    }

    /// The variant whose trained parameters this one evaluates with. The Box
    /// Filter has no parameters and leaves the matcher gradient unchanged.
    pub fn trained_as(self) -> Variant {
        match self {
            Variant::WamBoxFilter => Variant::Wam,
            Variant::MatchDet => Variant::WamWsam,
            v => v,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_factor: f64,
    /// Epochs completed before the decay applies.
    pub decay_epoch: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.01,
            decay_factor: 0.1,
            decay_epoch: 8,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.initial * self.decay_factor
        } else {
            self.initial
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub setting: Setting,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub lambda: f64,
    pub lambda_reg: f64,
    /// Weight of the box-supervised decoder loss.
    pub mask_weight: f64,
    pub tau: f64,
    pub theta: f64,
    pub n_wam: usize,
    pub n_wsam: usize,
    pub lr: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_pairs: usize,
    pub eval_pairs: usize,
    pub eval_every_epoch: bool,
    pub ransac_iters: usize,
    pub ransac_inlier_px: f64,
    pub score_thresh: f64,
    /// Minimum score of a detection reused as a box for the Box Filter or
    /// as a PreBoxR reference box.
    pub box_score_thresh: f64,
    pub nms_iou: f64,
    /// Scale of the positional encoding added to the WAM inputs.
    pub pe_scale: f64,
    pub seed: u64,
    pub scene: SceneSpec,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::MatchDet,
            setting: Setting::GtBoxR,
            alpha1: 1.0,
            alpha2: 1.0,
            beta: 1.0,
            lambda: 1.0,
            lambda_reg: 1.0,
            mask_weight: 1.0,
            tau: DEFAULT_TAU,
            theta: DEFAULT_THETA,
            n_wam: 2,
            n_wsam: 1,
            lr: LrSchedule::default(),
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 12,
            batch_size: 8,
            train_pairs: 256,
            eval_pairs: 64,
            eval_every_epoch: true,
            ransac_iters: 1000,
            ransac_inlier_px: 1.0,
            score_thresh: DEFAULT_SCORE_THRESH,
            box_score_thresh: 0.3,
            nms_iou: DEFAULT_NMS_IOU,
            pe_scale: 0.0,
            seed: 0,
            scene: SceneSpec::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// First sample index of the held-out split.
pub const EVAL_OFFSET: u64 = 1 << 32;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("lambda_reg", self.lambda_reg),
            ("mask_weight", self.mask_weight),
            ("pe_scale", self.pe_scale),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("lr.decay_factor", self.lr.decay_factor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        for (name, v) in [
            ("tau", self.tau),
            ("lr.initial", self.lr.initial),
            ("ransac_inlier_px", self.ransac_inlier_px),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [("theta", self.theta), ("score_thresh", self.score_thresh), ("box_score_thresh", self.box_score_thresh), ("nms_iou", self.nms_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.batch_size == 0 || self.train_pairs == 0 || self.eval_pairs == 0 || self.ransac_iters == 0 {
            return bad("batch_size, train_pairs, eval_pairs and ransac_iters must be positive".into());
        }
        if self.variant.uses_wam() && self.n_wam == 0 {
            return bad("n_wam must be positive".into());
        }
        if self.variant.uses_wsam() && self.n_wsam == 0 {
            return bad("n_wsam must be positive".into());
        }
        self.scene.validate()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Dataset and initialization seed for a run with `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.scene.seed = seed;
        c
    }
}
