//! `stackrefine`: fuse, rank, refine and evaluate slice-stack segmentations, run
//! review sessions, and serve the session API.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::{Array3, Axis};
use serde_json::json;

use stackrefine_core::geodesic::likelihood_from_scribbles;
use stackrefine_core::metrics::evaluate_stack;
use stackrefine_core::pipeline::{
    generate_synthetic_stack, replay_session, run_session, Schedule, SessionLog, SimulatedUser, SynthSpec,
};
use stackrefine_core::refine::refine_slice;
use stackrefine_core::scribble::{rasterize_scribbles, ScribbleSet};
use stackrefine_core::ugstack::{self, Kind};
use stackrefine_core::uncertainty::{fuse_predictions, rank_slices, FusedResult, ScoreMode};
use stackrefine_core::{BinaryMask, RefineConfig, Stack};
use stackrefine_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "stackrefine", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Normalized,
    Naive,
}

impl From<Mode> for ScoreMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Normalized => ScoreMode::Normalized,
            Mode::Naive => ScoreMode::Naive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    /// Normalized uncertainty order.
    Guided,
    /// Summed uncertainty order.
    Naive,
    /// Every slice in index order.
    Exhaustive,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Guided => Schedule::Guided(ScoreMode::Normalized),
            ScheduleArg::Naive => Schedule::Guided(ScoreMode::Naive),
            ScheduleArg::Exhaustive => Schedule::Exhaustive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SessionMode {
    /// Scribbles drawn from the ground truth.
    Simulated,
    /// Re-run an existing session log.
    Replay,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a prediction ensemble into mean, variance and mask.
    Fuse {
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        out_mean: Option<PathBuf>,
        #[arg(long)]
        out_var: Option<PathBuf>,
        #[arg(long)]
        out_mask: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Order slices for review.
    Rank {
        #[arg(long)]
        var: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, value_enum, default_value = "normalized")]
        mode: Mode,
        #[arg(long, default_value_t = 0.6)]
        fraction: f64,
        #[arg(long, default_value_t = 1e-6)]
        zeta: f64,
        #[arg(long)]
        json: bool,
    },
    /// Scribble likelihood for one slice.
    Geodesic {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        slice: usize,
        #[arg(long)]
        scribbles: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long = "D", default_value_t = 4.0)]
        d: f64,
        #[arg(long)]
        out_eta: PathBuf,
    },
    /// Refine one slice of a mask from scribbles.
    Refine {
        #[arg(long)]
        image: PathBuf,
        /// Fused probability map, or a prediction ensemble to fuse.
        #[arg(long)]
        prob: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        slice: usize,
        #[arg(long)]
        scribbles: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predicted mask with ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        var: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1, requires = "var")]
        ueo_threshold: f64,
        #[arg(long)]
        json: bool,
    },
    /// Run or replay a review session.
    Session {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        probs: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "simulated")]
        mode: SessionMode,
        #[arg(long, value_enum, default_value = "guided")]
        schedule: ScheduleArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Written in simulated mode, read in replay mode.
        #[arg(long)]
        log: PathBuf,
    },
    /// Generate a synthetic stack, ground truth and prediction ensemble.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Seconds before an idle session is dropped from memory.
        #[arg(long, default_value_t = 3600)]
        idle_timeout: u64,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_config(path: Option<&Path>) -> Result<RefineConfig> {
    let cfg = match path {
        Some(p) => read_json(p)?,
        None => RefineConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn read_scribbles(path: &Path) -> Result<ScribbleSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScribbleSet::from_json(&text)?)
}

fn check_slice(stack: &Stack, k: usize) -> Result<()> {
    if k >= stack.num_slices() {
        bail!("slice {k} out of range for {} slices", stack.num_slices());
    }
    Ok(())
}

fn spacing(stack: &Stack) -> (f64, f64, f64) {
    let (r, c) = stack.pixel_spacing();
    (stack.slice_spacing(), r, c)
}

/// Fused probability from either a real-valued map or an ensemble.
fn read_probability(path: &Path, threshold: f64) -> Result<Array3<f64>> {
    let (header, payload) = ugstack::read_container(path)?;
    Ok(match header.kind {
        Kind::Probgroup => fuse_predictions(&ugstack::probability_group_from(&header, &payload)?, threshold)?.mean,
        _ => ugstack::uncertainty_from(&header, &payload)?,
    })
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fuse {
            probs,
            out_mean,
            out_var,
            out_mask,
            threshold,
        } => {
            let (header, payload) = ugstack::read_container(&probs)?;
            let pg = ugstack::probability_group_from(&header, &payload)?;
            let fused = fuse_predictions(&pg, threshold)?;
            let sp = header.spacing3();
            if let Some(p) = out_mean {
                ugstack::write_uncertainty(&fused.mean, sp, &p)?;
            }
            if let Some(p) = out_var {
                ugstack::write_uncertainty(&fused.variance, sp, &p)?;
            }
            if let Some(p) = out_mask {
                ugstack::write_mask(&fused.mask, sp, &p)?;
            }
            let (m, h, w) = fused.mask.dim();
            eprintln!("fused {} predictors over {m}x{h}x{w}", pg.num_predictors());
        }
        Command::Rank {
            var,
            mask,
            mode,
            fraction,
            zeta,
            json,
        } => {
            let variance = ugstack::read_uncertainty(&var)?;
            let mask = ugstack::read_mask(&mask)?;
            if variance.dim() != mask.dim() {
                bail!("variance {:?} and mask {:?} differ in shape", variance.dim(), mask.dim());
            }
            let cfg = RefineConfig {
                m_prime_fraction: fraction,
                zeta,
                ..RefineConfig::default()
            };
            cfg.validate()?;
            let fused = FusedResult {
                mean: Array3::zeros(variance.dim()),
                variance,
                mask,
            };
            let queue = rank_slices(&fused, &cfg, mode.into());
            if json {
                print_json(&queue.entries)?;
            } else {
                for (i, e) in queue.entries.iter().enumerate() {
                    let mark = if i < queue.cutoff { "*" } else { " " };
                    println!("{mark} {:>4}  {:.6e}", e.slice, e.score);
                }
                println!("review cutoff: {} of {}", queue.cutoff, queue.entries.len());
            }
        }
        Command::Geodesic {
            image,
            slice,
            scribbles,
            gamma,
            d,
            out_eta,
        } => {
            let stack = ugstack::read_stack(&image)?;
            check_slice(&stack, slice)?;
            let set = read_scribbles(&scribbles)?;
            let raster = rasterize_scribbles(&set, stack.height(), stack.width())?;
            let eta = likelihood_from_scribbles(stack.normalized_slice(slice).view(), &raster, gamma, d)?.eta;
            ugstack::write_probability_slice(eta.view(), &out_eta)?;
        }
        Command::Refine {
            image,
            prob,
            mask,
            slice,
            scribbles,
            config,
            out,
        } => {
            let cfg = read_config(config.as_deref())?;
            let stack = ugstack::read_stack(&image)?;
            check_slice(&stack, slice)?;
            let prob = read_probability(&prob, cfg.threshold)?;
            let mut mask = ugstack::read_mask(&mask)?;
            if prob.dim() != stack.dim() || mask.dim() != stack.dim() {
                bail!(
                    "image {:?}, probability {:?} and mask {:?} must have the same shape",
                    stack.dim(),
                    prob.dim(),
                    mask.dim()
                );
            }
            let set = read_scribbles(&scribbles)?;
            let refined = refine_slice(
                stack.normalized_slice(slice).view(),
                prob.index_axis(Axis(0), slice),
                mask.slice(slice),
                &set,
                &cfg,
            )?;
            mask.set_slice(slice, refined.mask.view())?;
            ugstack::write_mask(&mask, spacing(&stack), &out)?;
            print_json(&refined.stats)?;
        }
        Command::Eval {
            pred,
            gt,
            var,
            ueo_threshold,
            json,
        } => {
            let (header, payload) = ugstack::read_container(&pred)?;
            let pred = ugstack::mask_from(&header, payload.as_slice())?;
            let gt = ugstack::read_mask(&gt)?;
            let var = var.map(|p| ugstack::read_uncertainty(&p)).transpose()?;
            let (_, r, c) = header.spacing3();
            let report = evaluate_stack(
                pred.data(),
                gt.data(),
                var.as_ref().map(|v| (v.view(), ueo_threshold)),
                (r, c),
            )?;
            if json {
                print_json(&report)?;
            } else {
                println!("volume dice {:.4}", report.volume_dice);
                for (name, stat) in [("dice", report.dice), ("assd", report.assd), ("ueo", report.ueo), ("rve", report.rve)] {
                    if let Some(s) = stat {
                        println!("{name:<5} {:.4} ± {:.4} (n={})", s.mean, s.std, s.count);
                    }
                }
            }
        }
        Command::Session {
            image,
            probs,
            gt,
            mode,
            schedule,
            config,
            out,
            log,
        } => {
            let stack = ugstack::read_stack(&image)?;
            let probs = ugstack::read_probability_group(&probs)?;
            let gt = gt.map(|p| ugstack::read_mask(&p)).transpose()?;
            let (mask, log) = match mode {
                SessionMode::Simulated => {
                    let Some(gt) = gt.clone() else {
                        bail!("simulated sessions need --gt");
                    };
                    let cfg = read_config(config.as_deref())?;
                    let mut user = SimulatedUser::new(gt);
                    let outcome = run_session(&stack, &probs, &mut user, &cfg, schedule.into())?;
                    fs::write(&log, outcome.log.to_json()).with_context(|| format!("writing {}", log.display()))?;
                    (outcome.mask, outcome.log)
                }
                SessionMode::Replay => {
                    let text = fs::read_to_string(&log).with_context(|| format!("reading {}", log.display()))?;
                    let log = SessionLog::from_json(&text)?;
                    (replay_session(&stack, &probs, &log)?, log)
                }
            };
            ugstack::write_mask(&mask, spacing(&stack), &out)?;
            let initial = fuse_predictions(&probs, log.config.threshold)?.mask;
            let dice = |m: &BinaryMask| gt.as_ref().map(|g| stackrefine_core::metrics::dice(m.data(), g.data())).transpose();
            print_json(&json!({
                "slices": stack.num_slices(),
                "fetched": log.fetched(),
                "edited": log.edited(),
                "dice_initial": dice(&initial)?,
                "dice_final": dice(&mask)?,
            }))?;
        }
        Command::Synth { spec, seed, out_dir } => {
            let spec: SynthSpec = match spec {
                Some(p) => read_json(&p)?,
                None => SynthSpec::default(),
            };
            let case = generate_synthetic_stack(&spec, seed)?;
            fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let sp = spacing(&case.stack);
            ugstack::write_stack(&case.stack, &out_dir.join("image"))?;
            ugstack::write_mask(&case.gt, sp, &out_dir.join("gt"))?;
            ugstack::write_probability_group(&case.probs, sp, &out_dir.join("probs"))?;
            let hard: Vec<_> = case
                .hard_slices
                .iter()
                .map(|(k, c)| json!({ "slice": k, "corruption": c }))
                .collect();
            let meta = json!({ "seed": seed, "spec": spec, "hard_slices": hard });
            fs::write(out_dir.join("case.json"), serde_json::to_string_pretty(&meta)?)?;
        }
        Command::Serve {
            port,
            host,
            data_dir,
            idle_timeout,
        } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .init();
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
            if let Some(dir) = &data_dir {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let config = ServiceConfig {
                data_dir,
                idle_timeout: Some(Duration::from_secs(idle_timeout)),
                ..ServiceConfig::default()
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(stackrefine_service::serve(addr, config))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
