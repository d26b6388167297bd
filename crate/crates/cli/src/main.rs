//! `authsim` — train adversarial attackers, generate collision scenarios,
//! compare methods, and replay logged episodes bit-exactly.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage/config error, 3 replay
//! divergence.

mod manifest;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use authsim_core::agent::{run_training, EpisodeStat, PolicySpec};
use authsim_core::checkpoint::Checkpoint;
use authsim_core::config::RunConfig;
use authsim_core::criticality::RewardKind;
use authsim_core::episode::{verify_replay, EpisodeLog, ReplayError};
use authsim_core::lab::{compare_methods, histogram_csv, run_batch, SummaryReport};
use authsim_core::region::build_region_layers;

use manifest::RunManifest;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "authsim", version, about = "Adversarial highway scenario generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an attacker policy and write a checkpoint plus training curve.
    Train(TrainArgs),
    /// Generate scenarios with a trained or scripted attacker and write a
    /// summary report plus per-episode logs.
    Generate(GenerateArgs),
    /// Compare summary reports against the ttc baseline and emit histograms.
    Report(ReportArgs),
    /// Re-simulate a logged episode and verify it reproduces bit-exactly.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reward kind: region, ttc, ttb, drac.
    #[arg(long)]
    reward: Option<String>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Trained checkpoint to drive the attacker greedily.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Attacker policy when no model is given (accepts: scripted-baseline).
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    scenarios: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel episode workers; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Method tag recorded in the report; defaults to the reward kind.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Skip writing per-episode logs (reports only).
    #[arg(long)]
    no_logs: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Directories containing report.json; one must be tagged ttc.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Episode log (JSONL) to verify.
    #[arg(long)]
    log: PathBuf,
    /// Print region distances at this step index.
    #[arg(long)]
    step: Option<u64>,
    #[arg(long)]
    print_regions: bool,
    /// Suppress the per-step listing.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("AUTHSIM_LOG_LEVEL", "warn")
            .write_style("AUTHSIM_LOG_STYLE"),
    )
    .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Report(args) => cmd_report(args),
        Command::Replay(args) => cmd_replay(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

/// Load and validate the run configuration, folding in CLI overrides.
/// Returns the config together with the digest of the file it came from.
fn load_config(
    path: Option<&Path>,
    seed: Option<u64>,
    reward: Option<&str>,
    episodes: Option<u64>,
) -> Result<(RunConfig, String), String> {
    let (mut config, digest) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            let config = RunConfig::parse(&text).map_err(|e| e.to_string())?;
            (config, manifest::sha256_hex(text.as_bytes()))
        }
        None => (RunConfig::default(), "none".to_string()),
    };
    if let Some(seed) = seed {
        config.scenario.seed = seed;
    }
    if let Some(kind) = reward {
        config.criticality.reward_kind = kind.parse::<RewardKind>()?;
    }
    if let Some(n) = episodes {
        config.train.episodes = n;
    }
    Ok((config, digest))
}

fn cmd_train(args: TrainArgs) -> Result<u8> {
    let started = Instant::now();
    let (config, digest) = match load_config(
        args.config.as_deref(),
        args.seed,
        args.reward.as_deref(),
        args.episodes,
    ) {
        Ok(ok) => ok,
        Err(message) => {
            eprintln!("config error: {message}");
            return Ok(EXIT_USAGE);
        }
    };
    std::fs::create_dir_all(&args.out)?;

    log::info!(
        "training {} episodes with the {} reward (seed {})",
        config.train.episodes,
        config.criticality.reward_kind,
        config.scenario.seed
    );
    let output = run_training(
        &config.scenario,
        &config.train,
        &config.criticality,
        &config.safety,
    )?;

    let ckpt_path = args.out.join("model.ckpt");
    Checkpoint::new(
        output.model,
        config.criticality.reward_kind,
        output.config.clone(),
    )
    .save(&ckpt_path)?;

    let curve_path = args.out.join("training_curve.csv");
    let mut curve = String::from(EpisodeStat::CSV_HEADER);
    curve.push('\n');
    for stat in &output.curve {
        curve.push_str(&stat.csv_row());
        curve.push('\n');
    }
    std::fs::write(&curve_path, curve)?;

    RunManifest::new("train", &digest, config.scenario.seed, started)
        .with_artifacts(&[&ckpt_path, &curve_path])
        .write(&args.out.join("manifest.json"))?;
    println!(
        "trained {} episodes; checkpoint at {}",
        output.curve.len(),
        ckpt_path.display()
    );
    Ok(0)
}

fn cmd_generate(args: GenerateArgs) -> Result<u8> {
    let started = Instant::now();
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .ok();
    }
    let (config, digest) =
        match load_config(args.config.as_deref(), args.seed, None, None) {
            Ok(ok) => ok,
            Err(message) => {
                eprintln!("config error: {message}");
                return Ok(EXIT_USAGE);
            }
        };

    let checkpoint = match (&args.model, args.policy.as_deref()) {
        (Some(path), _) => {
            if !path.exists() {
                eprintln!("checkpoint not found: {}", path.display());
                return Ok(EXIT_USAGE);
            }
            Some(Checkpoint::load(path)?)
        }
        (None, Some("scripted-baseline")) => None,
        (None, Some(other)) => {
            eprintln!("unknown policy '{other}'; valid policies: scripted-baseline");
            return Ok(EXIT_USAGE);
        }
        (None, None) => {
            eprintln!("either --model or --policy scripted-baseline is required");
            return Ok(EXIT_USAGE);
        }
    };
    let (spec, session_params, default_method) = match &checkpoint {
        Some(ckpt) => (
            PolicySpec::Greedy(&ckpt.model),
            ckpt.train_config.session_params(),
            ckpt.reward_kind.name().to_string(),
        ),
        None => (
            PolicySpec::Scripted,
            config.train.session_params(),
            "scripted-baseline".to_string(),
        ),
    };
    let method = args.method.clone().unwrap_or(default_method);

    std::fs::create_dir_all(&args.out)?;
    let episodes_dir = args.out.join("episodes");
    let mut artifacts = vec![args.out.join("report.json")];
    let mut episode_paths: Vec<PathBuf> = Vec::new();

    let batch = if args.no_logs {
        run_batch(
            spec,
            &config.scenario,
            &config.criticality,
            &config.safety,
            session_params,
            args.scenarios,
            &method,
            None,
        )?
    } else {
        std::fs::create_dir_all(&episodes_dir)?;
        let mut index = 0u64;
        let mut sink = |log: &EpisodeLog| -> std::io::Result<()> {
            let path = episodes_dir.join(format!("ep_{index:05}.jsonl"));
            let file = std::fs::File::create(&path)?;
            let mut writer = std::io::BufWriter::new(file);
            log.write_jsonl(&mut writer)?;
            writer.flush()?;
            episode_paths.push(path);
            index += 1;
            Ok(())
        };
        run_batch(
            spec,
            &config.scenario,
            &config.criticality,
            &config.safety,
            session_params,
            args.scenarios,
            &method,
            Some(&mut sink),
        )?
    };

    let report_path = args.out.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&batch.report)?)?;
    artifacts.extend(episode_paths);

    let refs: Vec<&Path> = artifacts.iter().map(PathBuf::as_path).collect();
    RunManifest::new("generate", &digest, config.scenario.seed, started)
        .with_artifacts(&refs)
        .write(&args.out.join("manifest.json"))?;
    println!(
        "{} scenarios: {} collisions, {} valid ({} report at {})",
        batch.report.tests,
        batch.report.all_collisions,
        batch.report.valid_collisions,
        method,
        report_path.display()
    );
    Ok(0)
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let started = Instant::now();
    let mut reports: Vec<SummaryReport> = Vec::new();
    for dir in &args.inputs {
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        reports.push(serde_json::from_str(&text)?);
    }
    let table = match compare_methods(&reports) {
        Ok(table) => table,
        Err(err) => {
            eprintln!("{err}");
            return Ok(EXIT_USAGE);
        }
    };

    std::fs::create_dir_all(&args.out)?;
    let comparison_path = args.out.join("comparison.csv");
    std::fs::write(&comparison_path, table.to_csv())?;
    let mut artifacts = vec![comparison_path];
    for report in &reports {
        let d_path = args.out.join(format!("{}_d_cut_in_hist.csv", report.method));
        let t_path = args.out.join(format!("{}_t_interval_hist.csv", report.method));
        std::fs::write(&d_path, histogram_csv(&report.d_cut_in_hist))?;
        std::fs::write(&t_path, histogram_csv(&report.t_interval_hist))?;
        artifacts.push(d_path);
        artifacts.push(t_path);
    }

    let refs: Vec<&Path> = artifacts.iter().map(PathBuf::as_path).collect();
    RunManifest::new("report", "none", 0, started)
        .with_artifacts(&refs)
        .write(&args.out.join("manifest.json"))?;
    print!("{}", table.to_csv());
    Ok(0)
}

fn cmd_replay(args: ReplayArgs) -> Result<u8> {
    let file = std::fs::File::open(&args.log)
        .with_context(|| format!("cannot open {}", args.log.display()))?;
    let log = EpisodeLog::read_jsonl(std::io::BufReader::new(file))
        .map_err(|e| anyhow!("failed to parse log: {e}"))?;

    match verify_replay(&log) {
        Ok(()) => {}
        Err(ReplayError::Divergence { step, detail }) => {
            eprintln!("replay diverged at step {step}: {detail}");
            return Ok(EXIT_DIVERGENCE);
        }
        Err(other) => return Err(other.into()),
    }

    if !args.quiet {
        for record in &log.steps {
            let ego = record
                .vehicles
                .iter()
                .find(|v| v.id == authsim_core::sim::VehicleId(0))
                .expect("ego in every record");
            println!(
                "step {:>4} t {:>6.2}: ego x {:>8.2} v {:>5.2} | attacker {} | reward {:.4} | events {}",
                record.step,
                record.t,
                ego.x,
                ego.v,
                record.attacker,
                record.reward,
                record.events.len()
            );
        }
    }

    if let Some(step) = args.step {
        let record = log
            .steps
            .iter()
            .find(|r| r.step == step)
            .ok_or_else(|| anyhow!("step {step} not in log"))?;
        if args.print_regions {
            println!(
                "step {step} regions: d_x_danger {:.6} d_x_boundary {:.6} d_x_safety {:.6} \
                 s_danger {:.6} s_boundary {:.6} s_safety {:.6}",
                record.region.d_x_danger,
                record.region.d_x_boundary,
                record.region.d_x_safety,
                record.region.s_danger,
                record.region.s_boundary,
                record.region.s_safety
            );
            // Cross-check the logged distances against a fresh evaluation.
            let states = record.vehicle_states(&log.header.config);
            let ego = states.iter().find(|v| v.id == authsim_core::sim::VehicleId(0));
            let npc = states.iter().find(|v| v.id == record.attacker);
            if let (Some(ego), Some(npc)) = (ego, npc) {
                let layers = build_region_layers(
                    ego,
                    npc.v,
                    npc.lateral_v,
                    &authsim_core::region::SafetyParams::default(),
                );
                println!(
                    "recomputed: d_x_danger {:.6} d_x_boundary {:.6} d_x_safety {:.6}",
                    layers.d_x_danger, layers.d_x_boundary, layers.d_x_safety
                );
            }
        }
    }

    println!(
        "replay ok: {} steps, terminal {:?} at t {:.2}",
        log.steps.len() - 1,
        log.terminal.kind,
        log.terminal.t
    );
    Ok(0)
}
