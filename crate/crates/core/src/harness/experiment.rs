use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Variant};
use crate::harness::model::Model;
use crate::harness::report::{write_json, write_rows_csv, ResultRow, RunReport};
use crate::harness::train::{evaluate, train, Datasets};
use crate::weightgen::Setting;

pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_MEAN_CSV: &str = "ablation_mean.csv";
pub const ABLATION_JSON: &str = "ablation.json";
pub const RUN_CSV: &str = "run.csv";
pub const RUN_JSON: &str = "run.json";
pub const MODEL_JSON: &str = "model.json";

/// Trains `cfg.variant` under `cfg.setting` and evaluates it on the
/// held-out split.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Model, RunReport)> {
    let start = Instant::now();
    let data = Datasets::generate(cfg)?;
    let (trained, log) = train(cfg, &data)?;
    let model = trained.as_variant(cfg.variant)?;
    let metrics = match log.epochs.last().and_then(|e| e.eval.clone()) {
        Some(m) if model.variant == trained.variant => m,
        _ => evaluate(&model, &data.eval, cfg.setting, cfg)?,
    };
    let wall_s = start.elapsed().as_secs_f64();
    let report = RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        lr_schedule: cfg.lr,
        epochs: log.epochs,
        rows: vec![ResultRow::new(cfg.variant, cfg.setting, cfg.seed, &metrics, wall_s)],
        final_metrics: metrics,
        wall_s,
    };
    Ok((model, report))
}

/// Writes `run.csv`, `run.json` and the trained parameters under `dir`.
pub fn write_run(dir: &Path, model: &Model, report: &RunReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = [dir.join(RUN_CSV), dir.join(RUN_JSON), dir.join(MODEL_JSON)];
    write_rows_csv(&report.rows, BufWriter::new(fs::File::create(&paths[0])?))?;
    write_json(report, BufWriter::new(fs::File::create(&paths[1])?))?;
    model.save(&paths[2])?;
    Ok(paths.to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub variants: Vec<Variant>,
    pub settings: Vec<Setting>,
    pub seeds: Vec<u64>,
    /// Record wall-clock seconds; otherwise `wall_s` is 0 so reports are
    /// byte-stable.
    pub timing: bool,
}

impl AblationPlan {
    fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.settings.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("ablation needs variants, settings and seeds".into()));
        }
        Ok(())
    }
}

/// Seed means of one (variant, setting) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub variant: Variant,
    pub setting: Setting,
    #[serde(rename = "AP")]
    pub ap: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP75")]
    pub ap75: f64,
    #[serde(rename = "AUC3")]
    pub auc3: f64,
    #[serde(rename = "AUC5")]
    pub auc5: f64,
    #[serde(rename = "AUC10")]
    pub auc10: f64,
    pub seeds: usize,
    pub wall_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub name: String,
    /// `None` when the plan lacks a cell the check needs.
    pub passed: Option<bool>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: ExperimentConfig,
    pub plan: AblationPlan,
    pub rows: Vec<ResultRow>,
    pub means: Vec<MeanRow>,
    pub wall_s: f64,
}

/// Trains each parameter-sharing group once per seed (under
/// `base.setting`) and evaluates every requested variant in every setting.
/// Rows are ordered by seed, then plan variant order, then setting order.
pub fn run_ablation(base: &ExperimentConfig, plan: &AblationPlan) -> Result<AblationReport> {
    plan.validate()?;
    let start = Instant::now();
    let mut rows = Vec::new();
    for &seed in &plan.seeds {
        let cfg = base.with_seed(seed);
        let data = Datasets::generate(&cfg)?;
        let mut trained: BTreeMap<Variant, (Model, f64)> = BTreeMap::new();
        for &variant in &plan.variants {
            let group = variant.trained_as();
            if trained.contains_key(&group) {
                continue;
            }
            let mut c = cfg.clone();
            c.variant = group;
            c.eval_every_epoch = false;
            let (model, log) = train(&c, &data)?;
            info!("seed {seed}: trained {group} in {:.1}s", log.wall_s);
            trained.insert(group, (model, log.wall_s));
        }
        for &variant in &plan.variants {
            let (model, train_s) = &trained[&variant.trained_as()];
            let model = model.as_variant(variant)?;
            for &setting in &plan.settings {
                let t0 = Instant::now();
                let m = evaluate(&model, &data.eval, setting, &cfg)?;
                let wall_s = if plan.timing {
                    train_s + t0.elapsed().as_secs_f64()
                } else {
                    0.0
                };
                info!("seed {seed}: {variant} {setting} AUC3 {:.4} AP {:.4}", m.auc3, m.ap);
                rows.push(ResultRow::new(variant, setting, seed, &m, wall_s));
            }
        }
    }
    let means = seed_means(&rows, plan);
    Ok(AblationReport {
        config: base.clone(),
        plan: plan.clone(),
        rows,
        means,
        wall_s: if plan.timing { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}

fn seed_means(rows: &[ResultRow], plan: &AblationPlan) -> Vec<MeanRow> {
    let mut out = Vec::new();
    for &variant in &plan.variants {
        for &setting in &plan.settings {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.variant == variant && r.setting == setting).collect();
            if cell.is_empty() {
                continue;
            }
            let n = cell.len() as f64;
            let mean = |f: fn(&ResultRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
            out.push(MeanRow {
                variant,
                setting,
                ap: mean(|r| r.ap),
                ap50: mean(|r| r.ap50),
                ap75: mean(|r| r.ap75),
                auc3: mean(|r| r.auc3),
                auc5: mean(|r| r.auc5),
                auc10: mean(|r| r.auc10),
                seeds: cell.len(),
                wall_s: mean(|r| r.wall_s),
            });
        }
    }
    out
}

impl AblationReport {
    pub fn mean(&self, variant: Variant, setting: Setting) -> Option<&MeanRow> {
        self.means.iter().find(|m| m.variant == variant && m.setting == setting)
    }

    /// Module ordering in `self.config.setting` and the setting ordering
    /// of MatchDet against MDBase, both on seed means.
    pub fn ordering_checks(&self) -> Vec<OrderingCheck> {
        let home = self.config.setting;
        let metric = |name: &str, m: &MeanRow| if name == "AUC3" { m.auc3 } else { m.ap };
        let chain = |name: &str, metric_name: &str, cells: &[(Variant, Setting)], strict: bool| {
            let values: Option<Vec<f64>> = cells
                .iter()
                .map(|&(v, s)| self.mean(v, s).map(|m| metric(metric_name, m)))
                .collect();
            let rel = if strict { " < " } else { " <= " };
            match values {
                None => OrderingCheck {
                    name: name.to_string(),
                    passed: None,
                    detail: "required cells missing from the plan".into(),
                },
                Some(vals) => {
                    let passed = vals.windows(2).all(|w| if strict { w[0] < w[1] } else { w[0] <= w[1] });
                    let detail = cells
                        .iter()
                        .zip(&vals)
                        .map(|((v, s), x)| format!("{v}/{s} {x:.4}"))
                        .collect::<Vec<_>>()
                        .join(rel);
                    OrderingCheck {
                        name: name.to_string(),
                        passed: Some(passed),
                        detail: format!("{metric_name}: {detail}"),
                    }
                }
            }
        };
        let settings_up = [
            (Variant::MdBase, home),
            (Variant::MatchDet, Setting::NoBoxR),
            (Variant::MatchDet, Setting::PreBoxR),
            (Variant::MatchDet, Setting::GtBoxR),
        ];
        vec![
            chain(
                "modules_auc3",
                "AUC3",
                &[(Variant::MdBase, home), (Variant::Wam, home), (Variant::WamBoxFilter, home)],
                true,
            ),
            chain("modules_ap", "AP", &[(Variant::MdBase, home), (Variant::WamWsam, home)], true),
            chain("settings_auc3", "AUC3", &settings_up, false),
            chain("settings_ap", "AP", &settings_up, false),
        ]
    }
}

/// Writes the per-seed CSV, the seed-mean CSV and the JSON report.
pub fn write_ablation(dir: &Path, report: &AblationReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = [dir.join(ABLATION_CSV), dir.join(ABLATION_MEAN_CSV), dir.join(ABLATION_JSON)];
    write_rows_csv(&report.rows, BufWriter::new(fs::File::create(&paths[0])?))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(&paths[1])?));
    for m in &report.means {
        w.serialize(m)?;
    }
    w.flush()?;
    write_json(report, BufWriter::new(fs::File::create(&paths[2])?))?;
    Ok(paths.to_vec())
}
