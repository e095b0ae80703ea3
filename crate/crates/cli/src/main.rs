use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use matchdet::harness::{
    run_ablation, run_experiment, run_gradient_suite, write_ablation, write_run, AblationPlan, ExperimentConfig,
    Variant,
};
use matchdet::weightgen::Setting;

/// Exit status of `ablate --assert` when an ordering check fails.
const EXIT_ASSERT_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "matchdet", version, about = "Joint matching and detection on synthetic feature grids")]
struct Cli {
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override; for `ablate` the first of the consecutive seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration.
    Run {
        /// JSON file with ExperimentConfig fields; missing fields take defaults.
        #[arg(long)]
        config: PathBuf,
    },
    /// Train and evaluate a variant by setting by seed matrix.
    Ablate(AblateArgs),
    /// Compare tape gradients with finite differences for every operation.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
}

#[derive(Args)]
struct AblateArgs {
    /// Base configuration; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "gtboxr,preboxr,noboxr")]
    settings: Vec<Setting>,
    #[arg(long, value_delimiter = ',', default_value = "mdbase,matchdet")]
    variants: Vec<Variant>,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Check the module and setting orderings on seed means.
    #[arg(long = "assert")]
    assert_orderings: bool,
    /// Record wall-clock seconds in the reports.
    #[arg(long)]
    timing: bool,
}

fn load_config(path: Option<&PathBuf>, cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_json_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load_config(Some(config), cli)?;
            let (model, report) = run_experiment(&cfg)?;
            let m = &report.final_metrics;
            println!(
                "{} {} seed {}: AUC3 {:.4} AUC5 {:.4} AUC10 {:.4} AP {:.4} AP50 {:.4} AP75 {:.4} ({:.1}s)",
                cfg.variant, cfg.setting, cfg.seed, m.auc3, m.auc5, m.auc10, m.ap, m.ap50, m.ap75, report.wall_s
            );
            for p in write_run(&cfg.out_dir, &model, &report)? {
                info!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate(args) => {
            let cfg = load_config(args.config.as_ref(), cli)?;
            let first = cli.seed.unwrap_or(cfg.seed);
            let plan = AblationPlan {
                variants: args.variants.clone(),
                settings: args.settings.clone(),
                seeds: (first..first + args.seeds).collect(),
                timing: args.timing,
            };
            let report = run_ablation(&cfg, &plan)?;
            for m in &report.means {
                println!(
                    "{:14} {:8} AUC3 {:.4} AUC5 {:.4} AUC10 {:.4} AP {:.4} AP50 {:.4} AP75 {:.4}",
                    m.variant.as_str(),
                    m.setting.as_str(),
                    m.auc3,
                    m.auc5,
                    m.auc10,
                    m.ap,
                    m.ap50,
                    m.ap75
                );
            }
            for p in write_ablation(&cfg.out_dir, &report)? {
                info!("wrote {}", p.display());
            }
            if !args.assert_orderings {
                return Ok(ExitCode::SUCCESS);
            }
            let mut failed = false;
            for c in report.ordering_checks() {
                let tag = match c.passed {
                    Some(true) => "PASS",
                    Some(false) => {
                        failed = true;
                        "FAIL"
                    }
                    None => "SKIP",
                };
                println!("{tag} {}: {}", c.name, c.detail);
            }
            Ok(if failed {
                ExitCode::from(EXIT_ASSERT_FAILED)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Gradcheck { instances } => {
            let report = run_gradient_suite(*instances, cli.seed.unwrap_or(0))?;
            for e in &report.entries {
                let tag = if e.passed { "PASS" } else { "FAIL" };
                println!("{tag} {:24} {} instances, max rel. error {:.3e}", e.op, e.instances, e.max_relative_error);
            }
            println!("{:.2}s", report.wall_s);
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
