use std::fs;
use std::io::{self, Write as _};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mdf::agents::protocol::serve;
use mdf::agents::{gaussian_denoise, DenoiserVariant};
use mdf::metrics::{frc, psnr, speedup, SpeedupInput, ThresholdKind};
use mdf::pipeline::{
    load_image, make_phantom, run_batch, run_reconstruction, save_image, simulate_lr, ConfigOverrides,
    ExperimentConfig, ForwardKind, PhantomKind, RunRecord,
};
use mdf::theory::{records_to_csv, run_suite, SuiteConfig};
use mdf::Image;

/// Exit status when every run completed but one did not converge.
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "mdf", version, about = "Consensus-equilibrium super-resolution of block-averaged images")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more experiment configs; several run in parallel.
    Reconstruct(ReconstructArgs),
    /// Block-average a high-resolution image and add seeded Gaussian noise.
    Simulate {
        #[arg(long)]
        hr: PathBuf,
        #[arg(long)]
        factor: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma_w: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare images and report PSNR, FRC crossing and speed-up as name,value CSV.
    Metrics(MetricsArgs),
    /// Run the numerical checks of the operator theory and write a CSV report.
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic test image.
    Phantom {
        #[arg(long)]
        kind: PhantomKind,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a reference denoiser over the external-denoiser protocol.
    ServeDenoiser {
        #[arg(long, value_enum, default_value_t = ServeMode::Echo)]
        mode: ServeMode,
        /// Blur width for `--mode gaussian`.
        #[arg(long, default_value_t = 1.0)]
        sigma_blur: f64,
        /// Listen on this address instead of stdin/stdout.
        #[arg(long)]
        tcp: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ServeMode {
    Echo,
    Gaussian,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    #[arg(long)]
    hr_input: Option<PathBuf>,
    #[arg(long)]
    lr_input: Option<PathBuf>,
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    sigma_w: Option<f64>,
    #[arg(long)]
    sigma_lambda: Option<f64>,
    #[arg(long)]
    sigma_n: Option<f64>,
    #[arg(long, value_parser = parse_forward)]
    forward_kind: Option<ForwardKind>,
    /// Denoiser, e.g. `tv:0.02:50`, `nlm:2:5:0.1`, `external:tcp:host:port`.
    #[arg(long, value_parser = parse_prior)]
    prior: Option<DenoiserVariant>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    peak: Option<f64>,
    /// Exit with success even when a run does not converge.
    #[arg(long)]
    no_strict: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    /// Write the full FRC curve here.
    #[arg(long)]
    frc_csv: Option<PathBuf>,
    /// Low-resolution acquisition; with `--test` as the reconstruction gives the speed-up.
    #[arg(long)]
    lr: Option<PathBuf>,
    /// High-resolution training image counted as acquired data.
    #[arg(long)]
    training: Option<PathBuf>,
}

fn parse_forward(s: &str) -> Result<ForwardKind, String> {
    s.parse().map_err(|e: mdf::pipeline::PipelineError| e.to_string())
}

fn parse_prior(s: &str) -> Result<DenoiserVariant, String> {
    s.parse().map_err(|e: mdf::agents::AgentError| e.to_string())
}

impl ReconstructArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            hr_input: self.hr_input.clone(),
            lr_input: self.lr_input.clone(),
            factor: self.factor,
            mu: self.mu,
            rho: self.rho,
            tol: self.tol,
            max_iters: self.max_iters,
            sigma_w: self.sigma_w,
            sigma_lambda: self.sigma_lambda,
            sigma_n: self.sigma_n,
            forward_kind: self.forward_kind,
            prior: self.prior.clone(),
            noise_seed: self.noise_seed,
            output_dir: self.output_dir.clone(),
            strict: self.no_strict.then_some(false),
            peak: self.peak,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Reconstruct(args) => reconstruct(&args),
        Command::Simulate {
            hr,
            factor,
            sigma_w,
            seed,
            out,
        } => {
            let img = load_image(&hr)?;
            save_image(&simulate_lr(&img, factor, sigma_w, seed)?, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics(args) => metrics(&args),
        Command::VerifyTheory { seed, out } => verify_theory(seed, out.as_deref()),
        Command::Phantom { kind, size, seed, out } => {
            save_image(&make_phantom(kind, size, seed)?, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ServeDenoiser { mode, sigma_blur, tcp } => serve_denoiser(mode, sigma_blur, tcp.as_deref()),
    }
}

fn reconstruct(args: &ReconstructArgs) -> Result<ExitCode> {
    if args.configs.len() > 1 && args.output_dir.is_some() {
        bail!("--output-dir cannot be shared by several configs");
    }
    let overrides = args.overrides();
    let configs = args
        .configs
        .iter()
        .map(|p| {
            let mut cfg = ExperimentConfig::load(p)?;
            overrides.apply(&mut cfg);
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let results = if configs.len() == 1 {
        vec![run_reconstruction(&configs[0])]
    } else {
        run_batch(&configs)?
    };

    let mut failed = false;
    let mut unconverged = false;
    for (path, result) in args.configs.iter().zip(results) {
        match result {
            Ok(rec) => {
                println!("{}", summary(path, &rec));
                unconverged |= !rec.succeeded();
            }
            Err(e) => {
                eprintln!("{}: error: {e}", path.display());
                failed = true;
            }
        }
    }
    Ok(if failed {
        ExitCode::FAILURE
    } else if unconverged {
        ExitCode::from(EXIT_NOT_CONVERGED)
    } else {
        ExitCode::SUCCESS
    })
}

fn summary(path: &Path, rec: &RunRecord) -> String {
    let mut s = format!(
        "{}: {} after {} iterations (error {:.4}), data residual {:.4}",
        path.display(),
        if rec.converged { "converged" } else { "NOT converged" },
        rec.iterations,
        rec.convergence_trace.last().copied().unwrap_or(f64::NAN),
        rec.data_residual,
    );
    if let (Some(p), Some(b)) = (rec.psnr, rec.psnr_bicubic) {
        s += &format!(", PSNR {p:.2} dB (bicubic {b:.2} dB)");
    }
    s += &format!(" -> {}", rec.config.output_dir.display());
    s
}

fn dims(img: &Image) -> (u64, u64) {
    (img.height() as u64, img.width() as u64)
}

fn metrics(args: &MetricsArgs) -> Result<ExitCode> {
    let reference = args.reference.as_deref().map(load_image).transpose()?;
    let test = args.test.as_deref().map(load_image).transpose()?;
    let mut rows: Vec<(&str, f64)> = Vec::new();
    if let (Some(r), Some(t)) = (&reference, &test) {
        rows.push(("psnr", psnr(r, t, args.peak)?));
        if r.height() == r.width() {
            let curve = frc(r, t, ThresholdKind::HalfBit)?;
            if let Some(c) = curve.crossing_frequency {
                rows.push(("frc_crossing", c));
                rows.push(("frc_crossing_nyquist", 2.0 * c));
            }
            if let Some(p) = &args.frc_csv {
                fs::write(p, curve.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
        } else if args.frc_csv.is_some() {
            bail!("FRC needs square images");
        }
    } else if args.frc_csv.is_some() {
        bail!("--frc-csv needs --reference and --test");
    }
    if let Some(lr) = &args.lr {
        let Some(t) = &test else {
            bail!("speed-up needs --test as the reconstruction");
        };
        let training = args.training.as_deref().map(load_image).transpose()?;
        rows.push((
            "speedup",
            speedup(&SpeedupInput {
                lr_pixels: dims(&load_image(lr)?),
                hr_train_pixels: training.as_ref().map_or((0, 0), dims),
                hr_recon_pixels: dims(t),
            })?,
        ));
    }
    if rows.is_empty() {
        bail!("nothing to compute: give --reference and --test, or --lr and --test");
    }
    let mut out = io::stdout().lock();
    writeln!(out, "name,value")?;
    for (n, v) in rows {
        writeln!(out, "{n},{v}")?;
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_theory(seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let records = run_suite(&SuiteConfig {
        seed,
        ..SuiteConfig::default()
    });
    let csv = records_to_csv(&records);
    match out {
        Some(p) => fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    let failed: Vec<_> = records.iter().filter(|r| !r.passed).collect();
    eprintln!("{} checks, {} failed", records.len(), failed.len());
    for r in &failed {
        eprintln!("  {} seed {} ({}): measured {:e}, threshold {:e}", r.check, r.seed, r.instance, r.measured, r.threshold);
    }
    Ok(if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn handler(mode: ServeMode, sigma_blur: f64) -> impl Fn(Image) -> Image + Clone + Send + 'static {
    move |img| match mode {
        ServeMode::Echo => img,
        ServeMode::Gaussian => gaussian_denoise(&img, sigma_blur).expect("sigma_blur validated at startup"),
    }
}

fn serve_denoiser(mode: ServeMode, sigma_blur: f64, tcp: Option<&str>) -> Result<ExitCode> {
    if !(sigma_blur.is_finite() && sigma_blur > 0.0) {
        bail!("--sigma-blur must be positive");
    }
    let h = handler(mode, sigma_blur);
    match tcp {
        None => serve(io::stdin().lock(), io::stdout().lock(), h)?,
        Some(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                stream.set_nodelay(true)?;
                let h = h.clone();
                thread::spawn(move || {
                    let reader = stream.try_clone()?;
                    serve(reader, stream, h).map_err(io::Error::other)
                });
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
