//! Benchmark grid: phantoms x looks x {tde, shan}, one CSV row per run.
//!
//! Both models of a cell see the same speckle realization. Parameters come
//! from [`TABLE`]; each phantom family borrows the rows of the image it
//! stands in for, and a looks value missing from the table takes the row of
//! the nearest tabulated one (ties go to the smaller).

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use despeckle::metrics::{psnr, ssim, SsimParams};
use despeckle::noise::add_speckle;
use despeckle::synth::{synthesize, Phantom};
use despeckle::{run, Error, Model, NoiseSpec, Result, ShanParams, StoppingPolicy, TdeParams};

/// One parameter row: looks, the parabolic model's `(nu, beta)` and the
/// telegraph model's `(gamma, nu, K)`. `tau = 0.2` and `xi = 1` throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub image: &'static str,
    pub looks: u32,
    pub shan_nu: f64,
    pub shan_beta: f64,
    pub gamma: f64,
    pub nu: f64,
    pub k: f64,
}

const fn row(image: &'static str, looks: u32, shan_nu: f64, shan_beta: f64, gamma: f64, nu: f64, k: f64) -> TableRow {
    TableRow {
        image,
        looks,
        shan_nu,
        shan_beta,
        gamma,
        nu,
        k,
    }
}

#[rustfmt::skip]
pub const TABLE: [TableRow; 15] = [
    row("Boat",   1,  1.0, 1.0,  5.0,  1.0, 2.0),
    row("Boat",   3,  1.2, 1.0,  4.0,  1.5, 2.0),
    row("Boat",   5,  1.3, 1.0,  2.0,  1.5, 1.0),
    row("Boat",   10, 1.4, 1.2,  2.0,  2.0, 1.0),
    row("Boat",   33, 1.5, 1.5,  2.0,  3.0, 1.0),
    row("Brick",  1,  1.0, 1.0,  5.0,  1.0, 4.0),
    row("Brick",  3,  1.2, 1.0,  4.0,  1.3, 3.0),
    row("Brick",  5,  1.4, 1.0,  2.0,  1.5, 2.0),
    row("Brick",  10, 1.6, 1.0,  2.0,  2.0, 1.0),
    row("Brick",  33, 1.7, 1.0,  2.0,  3.0, 1.0),
    row("Circle", 1,  1.5, 2.0,  10.0, 1.0, 1.0),
    row("Circle", 3,  1.5, 2.0,  10.0, 1.0, 1.0),
    row("Circle", 5,  2.0, 2.25, 5.0,  1.0, 1.0),
    row("Circle", 10, 2.0, 2.25, 2.0,  1.0, 1.0),
    row("Circle", 33, 2.0, 2.5,  2.0,  1.0, 1.0),
];

pub const DEFAULT_LOOKS: [u32; 5] = [1, 3, 5, 10, 33];

/// Table image whose parameters a phantom family uses.
pub fn table_image(p: Phantom) -> &'static str {
    match p {
        Phantom::Circles => "Circle",
        Phantom::Stripes => "Brick",
        Phantom::Checker => "Boat",
    }
}

pub fn table_row(p: Phantom, looks: u32) -> TableRow {
    let image = table_image(p);
    *TABLE
        .iter()
        .filter(|r| r.image == image)
        .min_by_key(|r| (r.looks.abs_diff(looks), r.looks))
        .expect("every image has rows")
}

impl TableRow {
    pub fn tde(&self, stop: StoppingPolicy) -> TdeParams {
        TdeParams {
            gamma: self.gamma,
            nu: self.nu,
            k_edge: self.k,
            stop,
            ..TdeParams::default()
        }
    }

    pub fn shan(&self, stop: StoppingPolicy) -> ShanParams {
        ShanParams {
            nu: self.shan_nu,
            beta_exp: self.shan_beta,
            stop,
            ..ShanParams::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 256 x 256.
    Desk,
    /// 64 x 64, for quick checks.
    Smoke,
}

impl Scale {
    pub fn size(self) -> usize {
        match self {
            Scale::Desk => 256,
            Scale::Smoke => 64,
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "smoke" => Ok(Scale::Smoke),
            other => Err(Error::param("scale", format!("unknown scale `{other}` (expected desk|smoke)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub scale: Scale,
    pub phantoms: Vec<Phantom>,
    pub looks: Vec<u32>,
    pub seed: u64,
    pub max_iter: usize,
    pub patience: usize,
    /// Fill the `wall_ms` column. Off by default so that reruns are
    /// byte-identical.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scale: Scale::Desk,
            phantoms: Phantom::ALL.to_vec(),
            looks: DEFAULT_LOOKS.to_vec(),
            seed: 0,
            max_iter: TdeParams::default().max_iter,
            patience: despeckle::solver::DEFAULT_PATIENCE,
            timing: false,
        }
    }
}

impl BenchConfig {
    /// `key=value` lines describing the run, written next to the CSV.
    pub fn record(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        format!(
            "scale={}\nphantoms={}\nlooks={}\nseed={}\nmax-iter={}\npatience={}\ntiming={}\n",
            match self.scale {
                Scale::Desk => "desk",
                Scale::Smoke => "smoke",
            },
            join(self.phantoms.iter().map(|p| p.name().to_string()).collect()),
            join(self.looks.iter().map(u32::to_string).collect()),
            self.seed,
            self.max_iter,
            self.patience,
            self.timing
        )
    }
}

/// Speckle seed of one (phantom, looks) cell.
pub fn cell_seed(base: u64, p: Phantom, looks: u32) -> u64 {
    let idx = Phantom::ALL.iter().position(|&q| q == p).expect("listed") as u64;
    base.wrapping_mul(1000).wrapping_add(100 * idx + looks as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub image: &'static str,
    pub looks: u32,
    pub model: &'static str,
    pub psnr_noisy: f64,
    pub psnr_restored: f64,
    pub ssim_restored: f64,
    /// Step at which the reported (best-PSNR) iterate was produced.
    pub iterations: usize,
    pub wall_ms: Option<u128>,
    pub seed: u64,
    pub winner: &'static str,
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.looks.is_empty() {
        return Err(Error::param("looks", "the list of looks is empty"));
    }
    if cfg.phantoms.is_empty() {
        return Err(Error::param("phantoms", "the list of phantoms is empty"));
    }
    let ssim_params = SsimParams::default();
    let mut rows = Vec::new();
    for &phantom in &cfg.phantoms {
        let clean = synthesize(&phantom.spec(cfg.scale.size()))?;
        for &looks in &cfg.looks {
            let seed = cell_seed(cfg.seed, phantom, looks);
            let noisy = add_speckle(&clean, NoiseSpec::new(looks, seed)?)?;
            let psnr_noisy = psnr(&clean, &noisy)?;
            let params = table_row(phantom, looks);
            let stop = StoppingPolicy::BestPsnr {
                reference: clean.clone(),
                patience: cfg.patience,
            };
            let models = [
                Model::Tde(TdeParams {
                    max_iter: cfg.max_iter,
                    ..params.tde(stop.clone())
                }),
                Model::Shan(ShanParams {
                    max_iter: cfg.max_iter,
                    ..params.shan(stop)
                }),
            ];
            let cell_start = rows.len();
            for model in &models {
                let t0 = Instant::now();
                let report = run(&noisy, model)?;
                let wall = t0.elapsed().as_millis();
                log::info!(
                    "{} L={looks} {}: {} steps, {wall} ms",
                    phantom.name(),
                    model.name(),
                    report.iterations_run
                );
                rows.push(BenchRow {
                    image: phantom.name(),
                    looks,
                    model: model.name(),
                    psnr_noisy,
                    psnr_restored: psnr(&clean, &report.final_image)?,
                    ssim_restored: ssim(&clean, &report.final_image, &ssim_params)?,
                    iterations: report.final_iteration,
                    wall_ms: cfg.timing.then_some(wall),
                    seed,
                    winner: "",
                });
            }
            let cell = &mut rows[cell_start..];
            let winner = winner_of(cell);
            for r in cell {
                r.winner = winner;
            }
        }
    }
    Ok(rows)
}

/// Model with the higher restored PSNR, or `tie`.
fn winner_of(cell: &[BenchRow]) -> &'static str {
    let best = cell.iter().map(|r| r.psnr_restored).fold(f64::NEG_INFINITY, f64::max);
    let mut leaders = cell.iter().filter(|r| r.psnr_restored == best);
    match (leaders.next(), leaders.next()) {
        (Some(r), None) => r.model,
        _ => "tie",
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "image",
    "L",
    "model",
    "PSNR_noisy",
    "PSNR_restored",
    "SSIM_restored",
    "iterations",
    "wall_ms",
    "seed",
    "winner",
];

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.image.to_string(),
            r.looks.to_string(),
            r.model.to_string(),
            format!("{:.4}", r.psnr_noisy),
            format!("{:.4}", r.psnr_restored),
            format!("{:.6}", r.ssim_restored),
            r.iterations.to_string(),
            r.wall_ms.map_or(String::new(), |ms| ms.to_string()),
            r.seed.to_string(),
            r.winner.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn csv_string(rows: &[BenchRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// Per-image win counts and the mean PSNR gain of each model.
pub fn summary(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let mut images: Vec<&str> = rows.iter().map(|r| r.image).collect();
    images.dedup();
    for image in images {
        let of = |model: &'static str| rows.iter().filter(move |r| r.image == image && r.model == model);
        let cells = of("tde").count();
        let tde_wins = of("tde").filter(|r| r.winner == "tde").count();
        let shan_wins = of("shan").filter(|r| r.winner == "shan").count();
        let gain = |model: &'static str| {
            let (n, s) = of(model).fold((0, 0.0), |(n, s), r| (n + 1, s + r.psnr_restored - r.psnr_noisy));
            if n == 0 {
                f64::NAN
            } else {
                s / n as f64
            }
        };
        let _ = writeln!(
            out,
            "{image}: tde wins {tde_wins}/{cells}, shan wins {shan_wins}/{cells}; mean gain tde {:+.2} dB, shan {:+.2} dB",
            gain("tde"),
            gain("shan")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_lookup() {
        let r = table_row(Phantom::Circles, 10);
        assert_eq!((r.gamma, r.nu, r.k, r.shan_nu, r.shan_beta), (2.0, 1.0, 1.0, 2.0, 2.25));
        assert_eq!(table_row(Phantom::Stripes, 33).nu, 3.0);
        assert_eq!(table_row(Phantom::Checker, 1).k, 2.0);
        // Untabulated looks fall back to the nearest row.
        assert_eq!(table_row(Phantom::Circles, 4).looks, 3);
        assert_eq!(table_row(Phantom::Circles, 7).looks, 5);
        assert_eq!(table_row(Phantom::Circles, 100).looks, 33);
        for r in TABLE {
            assert_eq!(table_row(Phantom::ALL[["Circle", "Brick", "Boat"].iter().position(|&i| i == r.image).unwrap()], r.looks), r);
        }
    }

    #[test]
    fn seeds_differ_per_cell() {
        let mut seen = std::collections::HashSet::new();
        for p in Phantom::ALL {
            for l in DEFAULT_LOOKS {
                assert!(seen.insert(cell_seed(5, p, l)));
            }
        }
    }

    fn fake(model: &'static str, psnr_restored: f64) -> BenchRow {
        BenchRow {
            image: "circles",
            looks: 10,
            model,
            psnr_noisy: 17.0,
            psnr_restored,
            ssim_restored: 0.9,
            iterations: 3,
            wall_ms: None,
            seed: 1,
            winner: "",
        }
    }

    #[test]
    fn winner_follows_psnr() {
        assert_eq!(winner_of(&[fake("tde", 30.0), fake("shan", 29.0)]), "tde");
        assert_eq!(winner_of(&[fake("tde", 28.0), fake("shan", 29.0)]), "shan");
        assert_eq!(winner_of(&[fake("tde", 29.0), fake("shan", 29.0)]), "tie");
    }

    #[test]
    fn empty_lists_are_rejected() {
        let cfg = BenchConfig {
            looks: vec![],
            ..BenchConfig::default()
        };
        assert!(matches!(run_bench(&cfg), Err(Error::InvalidParameter { name: "looks", .. })));
    }

    #[test]
    fn csv_layout() {
        let mut a = fake("tde", 30.0);
        a.winner = "tde";
        let text = csv_string(&[a]).unwrap();
        assert_eq!(
            text,
            "image,L,model,PSNR_noisy,PSNR_restored,SSIM_restored,iterations,wall_ms,seed,winner\n\
             circles,10,tde,17.0000,30.0000,0.900000,3,,1,tde\n"
        );
    }
}
