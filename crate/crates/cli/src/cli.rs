use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use despeckle::metrics::{psnr, ratio_image, rescale_for_display, ssim, write_surface_csv, SsimParams};
use despeckle::noise::add_speckle;
use despeckle::solver::run_monitored;
use despeckle::synth::{synthesize, Phantom};
use despeckle::{Error, NoiseSpec, Result};

use crate::bench::{self, BenchConfig, Scale};
use crate::config::{sidecar_path, RunConfig, SEED_ENV};
use crate::pgm::{load_image, save_image};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGENCE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "despeckle", version, about = "Speckle removal by gray-level telegraph diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic test image.
    Synth {
        #[arg(long, default_value = "circles")]
        phantom: Phantom,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Multiply an image by Gamma(L, 1/L) speckle.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        looks: u32,
        /// Overridden by DESPECKLE_SEED.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one of the diffusion models on an image.
    Denoise(DenoiseArgs),
    /// PSNR and SSIM of an image against a reference.
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum, default_value_t = SsimMode::Global)]
        ssim_mode: SsimMode,
    },
    /// Phantoms x looks x {tde, shan} benchmark as CSV.
    Bench {
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Comma-separated looks values.
        #[arg(long, default_value = "1,3,5,10,33")]
        looks: String,
        /// Comma-separated phantom names.
        #[arg(long, default_value = "circles,stripes,checker")]
        phantoms: String,
        /// Base seed; each cell derives its own. Overridden by DESPECKLE_SEED.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
        #[arg(long, default_value_t = despeckle::solver::DEFAULT_PATIENCE)]
        patience: usize,
        /// Fill the wall_ms column (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SsimMode {
    Global,
    Windowed,
}

/// Every flag maps onto the config key of the same name.
#[derive(Debug, Args)]
struct DenoiseArgs {
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    output: Option<String>,
    /// tde | shan
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    /// best-psnr | fixed:N | reltol:T
    #[arg(long)]
    stop: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    /// conservative | paper-central
    #[arg(long)]
    stencil: Option<String>,
    /// Clean reference for best-psnr stopping and the trace metrics.
    #[arg(long)]
    reference: Option<String>,
    /// Apply speckle with this many looks to the input first; the clean
    /// input then serves as reference unless one is given.
    #[arg(long)]
    looks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Ratio image: display PGM, or raw values when the path ends in .csv.
    #[arg(long)]
    export_ratio: Option<String>,
    /// Restored image as an i,j,value CSV.
    #[arg(long)]
    export_surface: Option<String>,
    /// Per-iteration CSV: iteration, psnr, ssim, relative_change.
    #[arg(long)]
    trace: Option<String>,
}

impl DenoiseArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("input", &self.input),
            ("output", &self.output),
            ("model", &self.model),
            ("gamma", &self.gamma),
            ("nu", &self.nu),
            ("k", &self.k),
            ("beta", &self.beta),
            ("xi", &self.xi),
            ("tau", &self.tau),
            ("max-iter", &self.max_iter),
            ("stop", &self.stop),
            ("patience", &self.patience),
            ("stencil", &self.stencil),
            ("reference", &self.reference),
            ("looks", &self.looks),
            ("seed", &self.seed),
            ("export-ratio", &self.export_ratio),
            ("export-surface", &self.export_surface),
            ("trace", &self.trace),
        ];
        let mut over = RunConfig::default();
        for (key, value) in flags {
            if let Some(v) = value {
                over.set(key, v).map_err(|reason| Error::InvalidParameter {
                    name: "flag",
                    reason: format!("--{key}: {reason}"),
                })?;
            }
        }
        cfg = cfg.merge(over).with_env_seed()?;
        Ok(cfg)
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code: 0 on success, 1 on numerical divergence, 2 on usage or format errors.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_DIVERGENCE
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn env_seed(seed: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::param("seed", format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(seed),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { phantom, size, output } => {
            let img = synthesize(&phantom.spec(size))?;
            save_image(&img, &output)
        }
        Command::Noise {
            input,
            output,
            looks,
            seed,
        } => {
            let spec = NoiseSpec::new(looks, env_seed(seed)?)?;
            let clean = load_image(&input)?;
            save_image(&add_speckle(&clean, spec)?, &output)?;
            let record = format!(
                "input={}\nlooks={looks}\nseed={}\noutput={}\n",
                input.display(),
                spec.seed,
                output.display()
            );
            std::fs::write(sidecar_path(&output), record).map_err(|e| Error::io(sidecar_path(&output), e))
        }
        Command::Denoise(args) => denoise(&args.to_config()?),
        Command::Metrics {
            reference,
            image,
            ssim_mode,
        } => {
            let r = load_image(&reference)?;
            let x = load_image(&image)?;
            let params = match ssim_mode {
                SsimMode::Global => SsimParams::default(),
                SsimMode::Windowed => SsimParams::windowed(),
            };
            println!("psnr={:.4}", psnr(&r, &x)?);
            println!("ssim={:.6}", ssim(&r, &x, &params)?);
            Ok(())
        }
        Command::Bench {
            scale,
            looks,
            phantoms,
            seed,
            max_iter,
            patience,
            timing,
            output,
        } => {
            let cfg = BenchConfig {
                scale,
                phantoms: parse_list(&phantoms)?,
                looks: parse_list(&looks)?,
                seed: env_seed(seed)?,
                max_iter,
                patience,
                timing,
            };
            let rows = bench::run_bench(&cfg)?;
            match &output {
                Some(path) => {
                    bench::write_csv(&rows, create(path)?)?;
                    let sidecar = sidecar_path(path);
                    std::fs::write(&sidecar, cfg.record()).map_err(|e| Error::io(&sidecar, e))?;
                }
                None => bench::write_csv(&rows, std::io::stdout().lock())?,
            }
            eprint!("{}", bench::summary(&rows));
            Ok(())
        }
    }
}

fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: T::Err| Error::param("list", format!("`{s}`: {e}"))))
        .collect()
}

fn denoise(cfg: &RunConfig) -> Result<()> {
    let input = cfg.input.as_ref().ok_or_else(|| Error::param("input", "no input image given"))?;
    let output = cfg.output.as_ref().ok_or_else(|| Error::param("output", "no output path given"))?;
    let loaded = load_image(input)?;
    let (noisy, clean) = match cfg.noise()? {
        Some(spec) => (add_speckle(&loaded, spec)?, Some(loaded)),
        None => (loaded, None),
    };
    let reference = match &cfg.reference {
        Some(path) => Some(load_image(path)?),
        None => clean,
    };
    let model = cfg.resolve(reference.as_ref())?;
    let report = run_monitored(&noisy, &model, reference.as_ref())?;
    log::info!(
        "{}: {} steps, reporting step {}",
        model.name(),
        report.iterations_run,
        report.final_iteration
    );

    save_image(&report.final_image, output)?;
    let sidecar = sidecar_path(output);
    std::fs::write(&sidecar, cfg.record()).map_err(|e| Error::io(&sidecar, e))?;

    if let Some(path) = &cfg.trace {
        let mut w = create(path)?;
        let io = |e| Error::io(path, e);
        writeln!(w, "iteration,psnr,ssim,relative_change").map_err(io)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for t in &report.trace {
            writeln!(w, "{},{},{},{}", t.iteration, opt(t.psnr), opt(t.ssim), t.relative_change).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    if let Some(path) = &cfg.export_ratio {
        let ratio = ratio_image(&noisy, &report.final_image)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            write_surface_csv(&ratio, create(path)?)?;
        } else {
            save_image(&rescale_for_display(&ratio), path)?;
        }
    }
    if let Some(path) = &cfg.export_surface {
        write_surface_csv(&report.final_image, create(path)?)?;
    }
    Ok(())
}
