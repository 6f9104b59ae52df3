//! Command-line surface of the point cloud simplification pipeline.

use clap::{Parser, Subcommand, ValueEnum};
use pcs_core::error::Error;
use pcs_core::geom::{normalize_to_unit_sphere, Rng};
use pcs_core::io;
use pcs_core::metrics::{compute_report, MetricsReport};
use pcs_core::patching::{make_partition, write_patch_set, PartitionMode};
use pcs_core::pipeline::{
    add_gaussian_noise, baseline_select, simplify_cloud, BaselineMethod, PipelineConfig,
    SimplifyMode,
};
use pcs_core::saliency::{raw_saliency, smooth_saliency};
use pcs_core::trainer::{
    load_checkpoint, save_checkpoint, write_log_csv, ModelParams, PcsTrainer, SaliencyTrainer,
    TrainConfig,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pcs",
    about = "Point cloud simplification for surface reconstruction",
    version
)]
struct Cli {
    /// worker threads for parallel stages (1 forces a fully serial run)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Uniform,
    Adaptive,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatchModeArg {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fps,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dense point cloud from a mesh surface (area-weighted)
    SampleMesh {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute per-point geometric saliency and write it as a 4th column
    Saliency {
        #[arg(long = "in")]
        input: PathBuf,
        /// neighborhood size for the plane fits
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// Gaussian smoothing bandwidth (normalized units)
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        /// apply kernel smoothing after the raw computation
        #[arg(long)]
        smooth: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut a cloud into patches and write them with a manifest
    Patch {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 120)]
        patches: usize,
        #[arg(long, value_enum, default_value_t = PatchModeArg::Uniform)]
        mode: PatchModeArg,
        /// input points per patch
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Train the simplifier on a patch directory
    Train {
        #[arg(long = "patch-dir")]
        patch_dir: PathBuf,
        /// JSON training config; defaults apply for missing fields
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// also write the per-epoch loss log here
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the saliency prediction network on a patch directory
    TrainSaliency {
        #[arg(long = "data-dir")]
        data_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Simplify a cloud with a trained checkpoint
    Simplify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        target: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Uniform)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// saliency network checkpoint for adaptive mode
        #[arg(long = "saliency-ckpt")]
        saliency_ckpt: Option<PathBuf>,
        /// override the derived patch count
        #[arg(long)]
        patches: Option<usize>,
        /// override the patch input size from the checkpoint config
        #[arg(long)]
        n: Option<usize>,
    },
    /// Subset-selection baselines
    Baseline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        target: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add isotropic Gaussian noise sized by the bounding-sphere radius
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "amplitude-pct")]
        amplitude_pct: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score candidate points against a ground-truth mesh
    Metrics {
        #[arg(long = "gt-mesh")]
        gt_mesh: PathBuf,
        #[arg(long)]
        points: PathBuf,
        /// reconstructed mesh; enables the triangle-quality columns
        #[arg(long = "recon-mesh")]
        recon_mesh: Option<PathBuf>,
        /// dense sample count for the mesh distances
        #[arg(long, default_value_t = 10_000)]
        w: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// print the table with the conventional 1e-3/1e-2/1e-4 scaling
        #[arg(long)]
        scaled: bool,
    },
    /// Run the finite-difference gradient verification suites
    Gradcheck {
        /// more trials per primitive
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not errors
            if e.use_stderr() {
                eprint!("{e}");
                eprintln!("error: code=usage msg=\"invalid command line\"");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    if let Some(threads) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: code={} msg=\"{}\"", e.code(), e);
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load_train_config(path: &Option<PathBuf>) -> Result<TrainConfig, Error> {
    let cfg = match path {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
        None => TrainConfig::default(),
    };
    Ok(cfg)
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::SampleMesh {
            input,
            count,
            seed,
            out,
        } => {
            let (mesh, dropped) = io::read_mesh_with_stats(&input)?;
            if dropped > 0 {
                eprintln!("warning: dropped {dropped} degenerate faces");
            }
            let mut rng = Rng::from_seed(seed);
            let cloud = io::sample_mesh_surface(&mesh, count, &mut rng)?;
            io::write_cloud(&cloud, &out)?;
            println!("sampled {} points from {}", cloud.len(), input.display());
        }
        Command::Saliency {
            input,
            k,
            h,
            smooth,
            out,
        } => {
            let cloud = io::read_cloud(&input)?;
            let (normalized, _, _) = normalize_to_unit_sphere(&cloud)?;
            let raw = raw_saliency(&normalized, k)?;
            let field = if smooth {
                smooth_saliency(&normalized, &raw, k, h)?
            } else {
                raw
            };
            if field.degenerate_count > 0 {
                eprintln!(
                    "warning: {} degenerate neighborhoods got saliency 0",
                    field.degenerate_count
                );
            }
            let mut annotated = cloud;
            annotated.set_saliency(field.values)?;
            io::write_cloud(&annotated, &out)?;
            println!("wrote saliency for {} points", annotated.len());
        }
        Command::Patch {
            input,
            patches,
            mode,
            n,
            seed,
            out_dir,
        } => {
            let cloud = io::read_cloud(&input)?;
            let (normalized, _, _) = normalize_to_unit_sphere(&cloud)?;
            let mode = match mode {
                PatchModeArg::Uniform => PartitionMode::Uniform,
                PatchModeArg::Adaptive => PartitionMode::Adaptive,
            };
            let mut rng = Rng::from_seed(seed);
            let partition = make_partition(&normalized, patches, mode, &mut rng)?;
            let manifest = write_patch_set(&out_dir, &normalized, &partition, n, &mut rng)?;
            println!(
                "wrote {} patches of {} points to {}",
                manifest.patches.len(),
                n,
                out_dir.display()
            );
        }
        Command::Train {
            patch_dir,
            config,
            out,
            log,
        } => {
            let cfg = load_train_config(&config)?;
            let patches = pcs_core::patching::load_patch_set(&patch_dir)?;
            let mut trainer = PcsTrainer::new(cfg)?;
            let epoch_log = trainer.run(&patches)?;
            save_checkpoint(&out, &trainer.checkpoint())?;
            if let Some(log_path) = log {
                write_log_csv(&log_path, &epoch_log)?;
            }
            let last = epoch_log.last().map(|e| e.l).unwrap_or(f64::NAN);
            println!(
                "trained {} epochs on {} patches (final loss {last:.6})",
                epoch_log.len(),
                patches.len()
            );
        }
        Command::TrainSaliency {
            data_dir,
            config,
            out,
            log,
        } => {
            let cfg = load_train_config(&config)?;
            let patches = pcs_core::patching::load_patch_set(&data_dir)?;
            let mut trainer = SaliencyTrainer::new(cfg)?;
            let epoch_log = trainer.run(&patches)?;
            save_checkpoint(&out, &trainer.checkpoint())?;
            if let Some(log_path) = log {
                let mut csv = String::from("epoch,mse\n");
                for e in &epoch_log {
                    csv.push_str(&format!("{},{}\n", e.epoch, e.mse));
                }
                std::fs::write(log_path, csv)?;
            }
            let last = epoch_log.last().map(|e| e.mse).unwrap_or(f64::NAN);
            println!(
                "trained {} epochs on {} patches (final mse {last:.6})",
                epoch_log.len(),
                patches.len()
            );
        }
        Command::Simplify {
            input,
            ckpt,
            target,
            mode,
            seed,
            out,
            saliency_ckpt,
            patches,
            n,
        } => {
            let cloud = io::read_cloud(&input)?;
            let checkpoint = load_checkpoint(&ckpt)?;
            let params = match checkpoint.model {
                ModelParams::Simplifier(p) => p,
                ModelParams::Saliency(_) => {
                    return Err(Error::InvalidInput(
                        "checkpoint holds a saliency model, not a simplifier".into(),
                    ))
                }
            };
            let saliency_net = saliency_ckpt
                .map(|p| -> Result<_, Error> {
                    match load_checkpoint(&p)?.model {
                        ModelParams::Saliency(s) => Ok(s),
                        ModelParams::Simplifier(_) => Err(Error::InvalidInput(
                            "saliency checkpoint holds a simplifier".into(),
                        )),
                    }
                })
                .transpose()?;
            let mode = match mode {
                ModeArg::Uniform => SimplifyMode::Uniform,
                ModeArg::Adaptive => SimplifyMode::Adaptive,
                ModeArg::Baseline => SimplifyMode::Baseline,
            };
            let cfg = PipelineConfig {
                num_patches: patches,
                patch_input: n.unwrap_or(checkpoint.config.patch_input),
                temperature: checkpoint.config.t_end,
            };
            let mut rng = Rng::from_seed(seed);
            let simplified = simplify_cloud(
                &cloud,
                &params,
                mode,
                target,
                &cfg,
                saliency_net.as_ref(),
                &mut rng,
            )?;
            io::write_cloud(&simplified, &out)?;
            println!(
                "simplified {} -> {} points into {}",
                cloud.len(),
                simplified.len(),
                out.display()
            );
        }
        Command::Baseline {
            input,
            method,
            target,
            seed,
            out,
        } => {
            let cloud = io::read_cloud(&input)?;
            let method = match method {
                MethodArg::Fps => BaselineMethod::Fps,
                MethodArg::Random => BaselineMethod::Random,
            };
            let mut rng = Rng::from_seed(seed);
            let selected = baseline_select(&cloud, target, method, &mut rng)?;
            io::write_cloud(&selected, &out)?;
            println!("selected {} of {} points", selected.len(), cloud.len());
        }
        Command::Noise {
            input,
            amplitude_pct,
            seed,
            out,
        } => {
            let cloud = io::read_cloud(&input)?;
            let mut rng = Rng::from_seed(seed);
            let noisy = add_gaussian_noise(&cloud, amplitude_pct, &mut rng)?;
            io::write_cloud(&noisy, &out)?;
            println!("added {amplitude_pct}% noise to {} points", noisy.len());
        }
        Command::Metrics {
            gt_mesh,
            points,
            recon_mesh,
            w,
            seed,
            out,
            scaled,
        } => {
            let gt = io::read_mesh(&gt_mesh)?;
            let candidate = io::read_cloud(&points)?;
            let recon = recon_mesh.map(|p| io::read_mesh(&p)).transpose()?;
            let mut rng = Rng::from_seed(seed);
            let report = compute_report(&gt, &candidate, recon.as_ref(), w, &mut rng)?;
            write_report(&report, &out)?;
            println!("{}", report.table(scaled));
        }
        Command::Gradcheck { full, seed } => {
            let outcomes = pcs_core::gradsuite::run_all(full, seed)?;
            let mut failed = 0usize;
            for o in &outcomes {
                let status = if o.passed { "pass" } else { "FAIL" };
                println!(
                    "{status}  {:<28} max_rel_err {:.3e} (tol {:.0e})",
                    o.name, o.max_rel_err, o.tol
                );
                if !o.passed {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed", outcomes.len(), failed);
            if failed > 0 {
                let worst = outcomes
                    .iter()
                    .filter(|o| !o.passed)
                    .map(|o| o.max_rel_err)
                    .fold(0.0f64, f64::max);
                return Err(Error::GradCheckFailed {
                    max_rel_err: worst,
                    tol: 1e-4,
                });
            }
        }
    }
    Ok(())
}

fn write_report(report: &MetricsReport, path: &Path) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_vec_pretty(report)?)?;
    Ok(())
}
