use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::geometry::{auc, corner_error};
use crate::harness::config::{ExperimentConfig, LrSchedule, Variant, EVAL_OFFSET};
use crate::harness::forward::{forward, predict};
use crate::harness::model::Model;
use crate::minidet::{average_precision, coco_thresholds, ApReport, EvalImage};
use crate::numerics::{Matrix, Tape};
use crate::synthdata::{generate_dataset, SceneSample};
use crate::weightgen::Setting;

/// AUC thresholds in pixels.
pub const AUC_THRESHOLDS: [f64; 3] = [3.0, 5.0, 10.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub matcher: f64,
    pub det_t: f64,
    pub det_r: f64,
    pub mask: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.total += o.total;
        self.matcher += o.matcher;
        self.det_t += o.det_t;
        self.det_r += o.det_r;
        self.mask += o.mask;
    }

    fn scaled(mut self, s: f64) -> Self {
        self.total *= s;
        self.matcher *= s;
        self.det_t *= s;
        self.det_r *= s;
        self.mask *= s;
        self
    }
}

/// Loss and parameter gradients for one pair.
pub fn sample_gradients(
    model: &Model,
    sample: &SceneSample,
    setting: Setting,
    cfg: &ExperimentConfig,
) -> Result<(LossParts, Vec<Matrix>)> {
    let mut t = Tape::new();
    let b = model.store.bind(&mut t, true);
    let out = forward(&mut t, &b, model, sample, setting, cfg, true)?;
    let l = out.loss.expect("losses requested");
    let v = |t: &Tape, x| t.scalar_value(x);
    let parts = LossParts {
        total: v(&t, l.total)?,
        matcher: v(&t, l.matcher)?,
        det_t: v(&t, l.det_t)?,
        det_r: v(&t, l.det_r)?,
        mask: l.mask.map(|m| v(&t, m)).transpose()?.unwrap_or(0.0),
    };
    let mut grads = t.backward(l.total)?;
    Ok((parts, b.gradients(&mut grads)))
}

/// SGD with momentum; weight decay is added to the gradient.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Matrix>,
}

impl Sgd {
    pub fn new(params: &[Matrix], momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix], lr: f64) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let (pd, gd) = (p.data_mut(), g.data());
            for ((x, &gx), vx) in pd.iter_mut().zip(gd).zip(v.data_mut()) {
                *vx = self.momentum * *vx + gx + self.weight_decay * *x;
                *x -= lr * *vx;
            }
        }
    }
}

/// One optimizer step over `batch`; returns the mean loss parts. Per-pair
/// gradients may run in parallel and are summed in batch order.
pub fn train_step(
    model: &mut Model,
    opt: &mut Sgd,
    batch: &[&SceneSample],
    setting: Setting,
    cfg: &ExperimentConfig,
    lr: f64,
    step: usize,
) -> Result<LossParts> {
    let results = map_indexed(batch.len(), |k| sample_gradients(model, batch[k], setting, cfg));
    let n = batch.len() as f64;
    let mut sum: Option<Vec<Matrix>> = None;
    let mut parts = LossParts::default();
    for (k, r) in results.into_iter().enumerate() {
        let (p, g) = r?;
        if !p.total.is_finite() || g.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!("pair {k} of the batch, loss parts {p:?}"),
            });
        }
        parts.add(&p);
        match &mut sum {
            None => sum = Some(g),
            Some(acc) => {
                for (a, x) in acc.iter_mut().zip(&g) {
                    *a = a.add(x)?;
                }
            }
        }
    }
    let grads: Vec<Matrix> = sum.unwrap_or_default().into_iter().map(|g| g.scale(1.0 / n)).collect();
    opt.step(model.store.values_mut(), &grads, lr);
    Ok(parts.scaled(1.0 / n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc3: f64,
    pub auc5: f64,
    pub auc10: f64,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// Pairs where no final homography could be estimated.
    pub failures: usize,
    /// Over pairs with an estimate; `None` when every pair failed.
    pub mean_corner_error: Option<f64>,
}

pub fn evaluate(model: &Model, samples: &[SceneSample], setting: Setting, cfg: &ExperimentConfig) -> Result<EvalMetrics> {
    let preds = map_indexed(samples.len(), |k| predict(model, &samples[k], setting, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (w, h) = (cfg.scene.w as f64, cfg.scene.h as f64);
    let errors: Vec<f64> = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| p.homography.map_or(f64::INFINITY, |est| corner_error(&est, &s.h_gt, w, h)))
        .collect();
    let images: Vec<EvalImage> = preds
        .into_iter()
        .zip(samples)
        .map(|(p, s)| EvalImage {
            detections: p.detections,
            ground_truth: s.boxes_t.clone(),
        })
        .collect();
    let ApReport { ap, ap50, ap75, .. } = average_precision(&images, &coco_thresholds());
    let finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    Ok(EvalMetrics {
        auc3: auc(&errors, AUC_THRESHOLDS[0])?,
        auc5: auc(&errors, AUC_THRESHOLDS[1])?,
        auc10: auc(&errors, AUC_THRESHOLDS[2])?,
        ap,
        ap50,
        ap75,
        failures: errors.len() - finite.len(),
        mean_corner_error: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train: LossParts,
    pub eval: Option<EvalMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub variant: Variant,
    pub setting: Setting,
    pub seed: u64,
    pub lr_schedule: LrSchedule,
    pub epochs: Vec<EpochLog>,
    pub wall_s: f64,
}

pub struct Datasets {
    pub train: Vec<SceneSample>,
    pub eval: Vec<SceneSample>,
}

impl Datasets {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            train: generate_dataset(&cfg.scene, 0, cfg.train_pairs)?,
            eval: generate_dataset(&cfg.scene, EVAL_OFFSET, cfg.eval_pairs)?,
        })
    }
}

/// Trains `cfg.variant` (or the variant it shares parameters with) under
/// `cfg.setting`.
pub fn train(cfg: &ExperimentConfig, data: &Datasets) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    let start = Instant::now();
    let variant = cfg.variant.trained_as();
    let mut model = Model::init(cfg, variant)?;
    let mut opt = Sgd::new(model.store.values(), cfg.momentum, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr.at(epoch);
        order.shuffle(&mut rng);
        let mut acc = LossParts::default();
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SceneSample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let parts = train_step(&mut model, &mut opt, &batch, cfg.setting, cfg, lr, step)?;
            acc.add(&parts);
            batches += 1;
            step += 1;
        }
        let eval = if cfg.eval_every_epoch || epoch + 1 == cfg.epochs {
            Some(evaluate(&model, &data.eval, cfg.setting, cfg)?)
        } else {
            None
        };
        epochs.push(EpochLog {
            epoch,
            lr,
            train: acc.scaled(1.0 / f64::from(batches.max(1))),
            eval,
        });
    }
    let log = TrainLog {
        variant,
        setting: cfg.setting,
        seed: cfg.seed,
        lr_schedule: cfg.lr,
        epochs,
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, log))
}
