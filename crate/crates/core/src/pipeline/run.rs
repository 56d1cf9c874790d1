use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::agents::{Agent, DenoiserSpec, ForwardAgent, NoiseParams};
use crate::linops::{block_average, Image};
use crate::mace::{initialize, mace_solve, two_agent_weights, MaceConfig, SolveReport};
use crate::metrics::{frc, psnr, speedup, FrcCurve, SpeedupInput, ThresholdKind};

use super::config::{ExperimentConfig, ForwardKind};
use super::io::{load_image, save_image};
use super::{PipelineError, Stage};

/// Block average of `hr` plus white Gaussian noise of standard deviation
/// `sigma_w` drawn from a ChaCha8 stream seeded with `seed`.
pub fn simulate_lr(hr: &Image, factor: usize, sigma_w: f64, seed: u64) -> Result<Image, PipelineError> {
    let clean = block_average(hr, factor)?;
    if sigma_w == 0.0 {
        return Ok(clean);
    }
    let normal = Normal::new(0.0, sigma_w)
        .map_err(|_| PipelineError::Config(format!("sigma_w must be non-negative, got {sigma_w}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = clean.data().iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(Image::new(clean.height(), clean.width(), data)?)
}

/// `||block_average(x, L) - y|| / ||y||`.
pub fn data_residual(x: &Image, y: &Image, factor: usize) -> Result<f64, PipelineError> {
    let diff = block_average(x, factor)?.sub(y)?;
    Ok(diff.norm() / y.norm())
}

/// Forward agent followed by the prior agent.
pub fn build_agents(
    lr: &Image,
    factor: usize,
    params: NoiseParams,
    kind: ForwardKind,
    prior: &DenoiserSpec,
) -> Result<Vec<Box<dyn Agent>>, PipelineError> {
    let forward = match kind {
        ForwardKind::Standard => ForwardAgent::standard(lr.clone(), factor, params)?,
        ForwardKind::Rap => ForwardAgent::rap(lr.clone(), factor, params)?,
    };
    Ok(vec![Box::new(forward), Box::new(prior.build()?)])
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Bicubic starting image.
    pub initial: Image,
    pub report: SolveReport,
}

/// Two-agent solve of `lr` with data weight `mu`, started from the clipped
/// bicubic upsampling.
pub fn reconstruct(
    lr: &Image,
    factor: usize,
    mu: f64,
    params: NoiseParams,
    kind: ForwardKind,
    prior: &DenoiserSpec,
    mace: &MaceConfig,
) -> Result<Reconstruction, PipelineError> {
    let weights = two_agent_weights(mu)?;
    let agents = build_agents(lr, factor, params, kind, prior).map_err(|e| e.at(Stage::Agents))?;
    let initial = initialize(lr, factor).map_err(|e| PipelineError::from(e).at(Stage::Solve))?;
    let report = mace_solve(&agents, &weights, &initial, mace).map_err(|e| PipelineError::from(e).at(Stage::Solve))?;
    Ok(Reconstruction { initial, report })
}

/// Files written by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub reconstruction: PathBuf,
    pub trace_csv: PathBuf,
    pub metrics_csv: PathBuf,
    pub config_snapshot: PathBuf,
    /// Simulated measurements, when the run generated them.
    pub lr_image: Option<PathBuf>,
    pub frc_csv: Option<PathBuf>,
}

impl Artifacts {
    pub fn paths(&self) -> Vec<&Path> {
        let mut out = vec![
            self.reconstruction.as_path(),
            self.trace_csv.as_path(),
            self.metrics_csv.as_path(),
            self.config_snapshot.as_path(),
        ];
        out.extend(self.lr_image.as_deref());
        out.extend(self.frc_csv.as_deref());
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub reconstruction: Image,
    pub convergence_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub data_residual: f64,
    /// Against the high-resolution reference, when one is available.
    pub psnr: Option<f64>,
    pub psnr_bicubic: Option<f64>,
    pub frc: Option<FrcCurve>,
    pub speedup: f64,
    pub duration: Duration,
    pub artifacts: Artifacts,
}

impl RunRecord {
    /// Name/value pairs as written to the metrics CSV.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut m = vec![
            ("iterations", self.iterations as f64),
            ("converged", if self.converged { 1.0 } else { 0.0 }),
            ("final_convergence_error", self.convergence_trace.last().copied().unwrap_or(f64::NAN)),
            ("data_residual", self.data_residual),
        ];
        if let Some(p) = self.psnr {
            m.push(("psnr", p));
        }
        if let Some(p) = self.psnr_bicubic {
            m.push(("psnr_bicubic", p));
        }
        if let Some(c) = self.frc.as_ref().and_then(|f| f.crossing_frequency) {
            m.push(("frc_crossing", c));
            m.push(("frc_crossing_nyquist", 2.0 * c));
        }
        m.push(("speedup", self.speedup));
        m.push(("duration_seconds", self.duration.as_secs_f64()));
        m
    }

    /// Whether the run counts as a success under the config's strictness.
    pub fn succeeded(&self) -> bool {
        self.converged || !self.config.strict
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<(Option<Image>, Option<Image>), PipelineError> {
    let hr = cfg.hr_input.as_deref().map(load_image).transpose()?;
    let lr = cfg.lr_input.as_deref().map(load_image).transpose()?;
    if let (Some(hr), Some(lr)) = (&hr, &lr) {
        let (h, w) = lr.shape();
        if hr.shape() != (h * cfg.factor, w * cfg.factor) {
            return Err(PipelineError::Config(format!(
                "reference shape {:?} is not {} times the measurement shape {:?}",
                hr.shape(),
                cfg.factor,
                lr.shape()
            )));
        }
    }
    Ok((hr, lr))
}

/// Runs one experiment and writes its artifacts into `config.output_dir`.
///
/// A run that does not converge still produces a record; see
/// [`RunRecord::succeeded`].
pub fn run_reconstruction(config: &ExperimentConfig) -> Result<RunRecord, PipelineError> {
    let start = Instant::now();
    config.validate().map_err(|e| e.at(Stage::Config))?;
    let factor = config.factor;
    let (hr, lr_file) = load_inputs(config).map_err(|e| e.at(Stage::Load))?;
    let simulated = lr_file.is_none();
    let lr = match lr_file {
        Some(lr) => lr,
        None => {
            let hr = hr.as_ref().expect("validated config has an input");
            simulate_lr(hr, factor, config.sigma_w, config.noise_seed).map_err(|e| e.at(Stage::Simulate))?
        }
    };

    let params = config.noise_params().map_err(|e| e.at(Stage::Config))?;
    let prior = config.denoiser_spec().map_err(|e| e.at(Stage::Config))?;
    let Reconstruction { initial, report } = reconstruct(
        &lr,
        factor,
        config.mu,
        params,
        config.forward_kind,
        &prior,
        &config.mace_config(),
    )?;
    let x = report.final_image;

    let metric_err = |e: PipelineError| e.at(Stage::Metrics);
    let residual = data_residual(&x, &lr, factor).map_err(metric_err)?;
    let (mut psnr_x, mut psnr_b, mut curve) = (None, None, None);
    if let Some(hr) = &hr {
        psnr_x = Some(psnr(hr, &x, config.peak).map_err(|e| metric_err(e.into()))?);
        psnr_b = Some(psnr(hr, &initial, config.peak).map_err(|e| metric_err(e.into()))?);
        if hr.height() == hr.width() {
            curve = Some(frc(hr, &x, ThresholdKind::HalfBit).map_err(|e| metric_err(e.into()))?);
        }
    }
    let (lh, lw) = lr.shape();
    let (xh, xw) = x.shape();
    let gain = speedup(&SpeedupInput {
        lr_pixels: (lh as u64, lw as u64),
        hr_train_pixels: config.training_shape.map_or((0, 0), |[h, w]| (h, w)),
        hr_recon_pixels: (xh as u64, xw as u64),
    })
    .map_err(|e| metric_err(e.into()))?;

    let dir = &config.output_dir;
    let write_err = |e: PipelineError| e.at(Stage::Write);
    std::fs::create_dir_all(dir)
        .map_err(|source| PipelineError::Io {
            path: dir.clone(),
            source,
        })
        .map_err(write_err)?;
    let artifacts = Artifacts {
        reconstruction: dir.join("reconstruction.png"),
        trace_csv: dir.join("trace.csv"),
        metrics_csv: dir.join("metrics.csv"),
        config_snapshot: dir.join("config.toml"),
        lr_image: simulated.then(|| dir.join("lr.png")),
        frc_csv: curve.as_ref().map(|_| dir.join("frc.csv")),
    };
    save_image(&x, &artifacts.reconstruction).map_err(write_err)?;
    if let Some(p) = &artifacts.lr_image {
        save_image(&lr, p).map_err(write_err)?;
    }
    if let (Some(p), Some(c)) = (&artifacts.frc_csv, &curve) {
        write_file(p, &c.to_csv()).map_err(write_err)?;
    }
    let mut trace = String::from("iteration,convergence_error\n");
    for (k, e) in report.convergence_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{e}", k + 1);
    }
    write_file(&artifacts.trace_csv, &trace).map_err(write_err)?;
    write_file(&artifacts.config_snapshot, &config.to_toml()).map_err(write_err)?;

    let mut record = RunRecord {
        config: config.clone(),
        reconstruction: x,
        iterations: report.iterations_run,
        convergence_trace: report.convergence_trace,
        converged: report.converged,
        data_residual: residual,
        psnr: psnr_x,
        psnr_bicubic: psnr_b,
        frc: curve,
        speedup: gain,
        duration: Duration::ZERO,
        artifacts,
    };
    record.duration = start.elapsed();
    let mut csv = String::from("name,value\n");
    for (name, value) in record.metrics() {
        let _ = writeln!(csv, "{name},{value}");
    }
    write_file(&record.artifacts.metrics_csv, &csv).map_err(write_err)?;
    Ok(record)
}

/// Runs experiments in parallel. Output directories must be distinct.
pub fn run_batch(configs: &[ExperimentConfig]) -> Result<Vec<Result<RunRecord, PipelineError>>, PipelineError> {
    let mut seen = HashSet::new();
    for cfg in configs {
        let key = std::path::absolute(&cfg.output_dir).unwrap_or_else(|_| cfg.output_dir.clone());
        if !seen.insert(key) {
            return Err(PipelineError::Config(format!(
                "output directory {} is used by more than one experiment",
                cfg.output_dir.display()
            )));
        }
    }
    Ok(configs.par_iter().map(run_reconstruction).collect())
}
