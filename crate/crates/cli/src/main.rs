//! `cmfd`: detect copy-move forgeries, evaluate on a dataset, or generate a
//! synthetic corpus.
//!
//! Exit codes: 0 success (and, for `detect`, an authentic verdict), 3 for a
//! `detect` run that found tampering, 1 for any error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use cmfd_core::config::keys_help;
use cmfd_core::eval::{report_paths, run_dataset};
use cmfd_core::forge::{gen_corpus, Scenario};
use cmfd_core::hybrid::{collect_evidence, Arm};
use cmfd_core::imagekit::{load_image, render_overlay, save_overlay};
use cmfd_core::DetectorConfig;

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "CMFD_WORKERS";

const EXIT_TAMPERED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "cmfd", version, about = "Copy-move forgery detection")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Flat `key = value` config file; keys not listed keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one config key (repeatable), e.g. `--set min_corr=0.8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<DetectorConfig> {
        let mut cfg = match &self.config {
            Some(path) => DetectorConfig::load(path)?,
            None => DetectorConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the detector on one image and print a JSON verdict.
    #[command(after_help = keys_help())]
    Detect {
        image: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the tamper mask (8-bit PNG, 255 = tampered).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Write a debug overlay: image, tinted mask and matched-pair lines.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Evaluate on a dataset directory holding manifest.csv.
    #[command(after_help = keys_help())]
    Eval {
        dataset: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Report base path; `.json` and `.csv` files are written.
        #[arg(long)]
        report: PathBuf,
        /// Evidence arm to score: block, keypoint, hybrid or all.
        #[arg(long, default_value = "hybrid")]
        arm: String,
    },
    /// Generate a synthetic forgery corpus.
    #[command(after_help = keys_help())]
    Forge {
        out_dir: PathBuf,
        /// flat, plain, rough, rotated, scaled or mixed.
        #[arg(long, default_value = "mixed")]
        scenario: String,
        #[arg(long, default_value_t = 10)]
        tampered: usize,
        #[arg(long, default_value_t = 10)]
        authentic: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn configure_workers() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{raw}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn cmd_detect(image: &Path, config: &ConfigArgs, mask: Option<&Path>, overlay: Option<&Path>) -> anyhow::Result<bool> {
    let cfg = config.resolve()?;
    let img = load_image(image)?;
    let evidence = collect_evidence(&img, &cfg)?;
    let result = evidence.fuse(&img, &cfg, Arm::Hybrid);
    if let Some(path) = mask {
        result.mask.save_png(path)?;
    }
    if let Some(path) = overlay {
        let segments: Vec<_> = result
            .clusters
            .iter()
            .flat_map(|c| c.members.iter())
            .map(|m| ((m.src_anchor().x, m.src_anchor().y), (m.dst_anchor().x, m.dst_anchor().y)))
            .collect();
        save_overlay(&render_overlay(&img, &result.mask, &segments), path)?;
    }
    let clusters: Vec<_> = result
        .clusters
        .iter()
        .map(|c| {
            serde_json::json!({
                "shift": [c.shift.0, c.shift.1],
                "block_support": c.block_support,
                "keypoint_support": c.keypoint_support,
            })
        })
        .collect();
    let line = serde_json::json!({
        "tampered": result.tampered,
        "mask_pixels": result.mask.count(),
        "pairs_examined": result.pairs_examined,
        "block_pairs": evidence.block_pairs.len(),
        "keypoint_pairs": evidence.keypoint_pairs.len(),
        "keypoints": evidence.keypoint_count,
        "clusters": clusters,
    });
    // A closed stdout (e.g. piped into `head`) must not turn a verdict into a crash.
    let _ = writeln!(std::io::stdout(), "{line}");
    Ok(result.tampered)
}

fn parse_arms(raw: &str) -> anyhow::Result<Vec<Arm>> {
    if raw == "all" {
        return Ok(Arm::ALL.to_vec());
    }
    match Arm::parse(raw) {
        Some(a) => Ok(vec![a]),
        None => bail!("unknown arm `{raw}`; valid: block, keypoint, hybrid, all"),
    }
}

fn cmd_eval(dataset: &Path, config: &ConfigArgs, report: &Path, arm: &str) -> anyhow::Result<()> {
    let arms = parse_arms(arm)?;
    let cfg = config.resolve()?;
    let rep = run_dataset(dataset, &cfg, &arms)?;
    let (json_path, csv_path) = report_paths(report);
    rep.write(&json_path, &csv_path)?;
    print!("{}", rep.table());
    for a in &rep.arms {
        if a.errors > 0 {
            eprintln!("{}: {} image(s) failed; see report", a.arm.name(), a.errors);
        }
    }
    Ok(())
}

fn cmd_forge(out_dir: &Path, scenario: &str, tampered: usize, authentic: usize, seed: u64) -> anyhow::Result<()> {
    let Some(sc) = Scenario::parse(scenario) else {
        let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
        bail!("unknown scenario `{scenario}`; valid: {}", names.join(", "));
    };
    let rows = gen_corpus(out_dir, tampered, authentic, sc, seed)?;
    println!("wrote {} images and manifest.csv to {}", rows.len(), out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    configure_workers()?;
    match cli.command {
        Command::Detect {
            image,
            config,
            mask,
            overlay,
        } => {
            let tampered = cmd_detect(&image, &config, mask.as_deref(), overlay.as_deref())?;
            Ok(if tampered {
                ExitCode::from(EXIT_TAMPERED)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Eval {
            dataset,
            config,
            report,
            arm,
        } => cmd_eval(&dataset, &config, &report, &arm).map(|_| ExitCode::SUCCESS),
        Command::Forge {
            out_dir,
            scenario,
            tampered,
            authentic,
            seed,
        } => cmd_forge(&out_dir, &scenario, tampered, authentic, seed).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
