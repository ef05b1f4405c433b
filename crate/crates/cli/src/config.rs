//! Flat `key=value` run configuration.
//!
//! Keys are the long flag names of `despeckle denoise` without the leading
//! dashes. Blank lines and lines starting with `#` are ignored. The sidecar
//! written next to every output uses the same format, so it can be passed
//! back with `--config` to reproduce a run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use despeckle::{Error, ImageGrid, Model, NoiseSpec, Result, ShanParams, StencilMode, StoppingPolicy, TdeParams};

/// Environment variable that overrides any configured seed.
pub const SEED_ENV: &str = "DESPECKLE_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    #[default]
    Tde,
    Shan,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tde => "tde",
            ModelKind::Shan => "shan",
        }
    }
}

/// Stopping rule as written in a config, before the reference is loaded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopSpec {
    BestPsnr,
    Fixed(usize),
    RelTol(f64),
}

impl StopSpec {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "best-psnr" {
            return Ok(StopSpec::BestPsnr);
        }
        if let Some(n) = s.strip_prefix("fixed:") {
            return n
                .parse()
                .map(StopSpec::Fixed)
                .map_err(|_| format!("bad iteration count in `{s}`"));
        }
        if let Some(t) = s.strip_prefix("reltol:") {
            return match t.parse::<f64>() {
                Ok(t) if t.is_finite() && t > 0.0 => Ok(StopSpec::RelTol(t)),
                _ => Err(format!("bad tolerance in `{s}`")),
            };
        }
        Err(format!("unknown stop rule `{s}` (expected best-psnr|fixed:N|reltol:T)"))
    }

    pub fn label(self) -> String {
        match self {
            StopSpec::BestPsnr => "best-psnr".to_string(),
            StopSpec::Fixed(n) => format!("fixed:{n}"),
            StopSpec::RelTol(t) => format!("reltol:{t}"),
        }
    }
}

/// Every setting of a `denoise` run. `None` means "use the default".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelKind>,
    pub gamma: Option<f64>,
    pub nu: Option<f64>,
    pub k: Option<f64>,
    pub beta: Option<f64>,
    pub xi: Option<f64>,
    pub tau: Option<f64>,
    pub max_iter: Option<usize>,
    pub stop: Option<StopSpec>,
    pub patience: Option<usize>,
    pub stencil: Option<StencilMode>,
    /// When set, speckle with this many looks is applied to the input first.
    pub looks: Option<u32>,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub export_ratio: Option<PathBuf>,
    pub export_surface: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "model",
    "gamma",
    "nu",
    "k",
    "beta",
    "xi",
    "tau",
    "max-iter",
    "stop",
    "patience",
    "stencil",
    "looks",
    "seed",
    "input",
    "reference",
    "output",
    "export-ratio",
    "export-surface",
    "trace",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("`{value}` is not a valid value for {key}"))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let value = value.trim();
        match key {
            "model" => {
                self.model = Some(match value {
                    "tde" => ModelKind::Tde,
                    "shan" => ModelKind::Shan,
                    other => return Err(format!("unknown model `{other}` (expected tde|shan)")),
                })
            }
            "gamma" => self.gamma = Some(num(key, value)?),
            "nu" => self.nu = Some(num(key, value)?),
            "k" => self.k = Some(num(key, value)?),
            "beta" => self.beta = Some(num(key, value)?),
            "xi" => self.xi = Some(num(key, value)?),
            "tau" => self.tau = Some(num(key, value)?),
            "max-iter" => self.max_iter = Some(num(key, value)?),
            "stop" => self.stop = Some(StopSpec::parse(value)?),
            "patience" => self.patience = Some(num(key, value)?),
            "stencil" => self.stencil = Some(value.parse().map_err(|e: Error| e.to_string())?),
            "looks" => self.looks = Some(num(key, value)?),
            "seed" => self.seed = Some(num(key, value)?),
            "input" => self.input = Some(value.into()),
            "reference" => self.reference = Some(value.into()),
            "output" => self.output = Some(value.into()),
            "export-ratio" => self.export_ratio = Some(value.into()),
            "export-surface" => self.export_surface = Some(value.into()),
            "trace" => self.trace = Some(value.into()),
            other => return Err(format!("unknown key `{other}` (valid keys: {})", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: idx + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            cfg.set(key.trim(), value)
                .map_err(|message| Error::Config { line: idx + 1, message })?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(mut self, over: RunConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            model,
            gamma,
            nu,
            k,
            beta,
            xi,
            tau,
            max_iter,
            stop,
            patience,
            stencil,
            looks,
            seed,
            input,
            reference,
            output,
            export_ratio,
            export_surface,
            trace
        );
        self
    }

    /// Applies the seed override from the environment, if present.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v.trim().parse().map_err(|_| {
                Error::param("seed", format!("{SEED_ENV}=`{v}` is not an unsigned integer"))
            })?;
            self.seed = Some(seed);
        }
        Ok(self)
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.unwrap_or_default()
    }

    pub fn stop_spec(&self) -> StopSpec {
        self.stop.unwrap_or(StopSpec::RelTol(despeckle::solver::DEFAULT_RELATIVE_TOL))
    }

    pub fn patience_or_default(&self) -> usize {
        self.patience.unwrap_or(despeckle::solver::DEFAULT_PATIENCE)
    }

    /// Noise to apply to the input, if any. The seed defaults to 0.
    pub fn noise(&self) -> Result<Option<NoiseSpec>> {
        self.looks
            .map(|l| NoiseSpec::new(l, self.seed.unwrap_or(0)))
            .transpose()
    }

    /// Builds the model. `reference` is required by the best-PSNR rule.
    pub fn resolve(&self, reference: Option<&ImageGrid>) -> Result<Model> {
        let stop = match self.stop_spec() {
            StopSpec::BestPsnr => {
                let reference = reference
                    .ok_or_else(|| Error::param("stop", "best-psnr needs a reference image"))?
                    .clone();
                StoppingPolicy::BestPsnr {
                    reference,
                    patience: self.patience_or_default(),
                }
            }
            StopSpec::Fixed(n) => StoppingPolicy::FixedIterations(n),
            StopSpec::RelTol(t) => StoppingPolicy::RelativeChange(t),
        };
        let model = match self.model_kind() {
            ModelKind::Tde => {
                if self.beta.is_some() {
                    log::warn!("--beta only applies to the shan model; ignored");
                }
                let d = TdeParams::default();
                Model::Tde(TdeParams {
                    gamma: self.gamma.unwrap_or(d.gamma),
                    nu: self.nu.unwrap_or(d.nu),
                    k_edge: self.k.unwrap_or(d.k_edge),
                    xi: self.xi.unwrap_or(d.xi),
                    tau: self.tau.unwrap_or(d.tau),
                    max_iter: self.max_iter.unwrap_or(d.max_iter),
                    stencil: self.stencil.unwrap_or(d.stencil),
                    stop,
                })
            }
            ModelKind::Shan => {
                if self.gamma.is_some() || self.k.is_some() {
                    log::warn!("--gamma and --k only apply to the tde model; ignored");
                }
                let d = ShanParams::default();
                Model::Shan(ShanParams {
                    nu: self.nu.unwrap_or(d.nu),
                    beta_exp: self.beta.unwrap_or(d.beta_exp),
                    xi: self.xi.unwrap_or(d.xi),
                    tau: self.tau.unwrap_or(d.tau),
                    max_iter: self.max_iter.unwrap_or(d.max_iter),
                    stencil: self.stencil.unwrap_or(d.stencil),
                    stop,
                })
            }
        };
        model.validate()?;
        Ok(model)
    }

    /// Fully resolved record: every model parameter with its effective
    /// value, plus the noise settings and paths that were set. Parses back
    /// with [`RunConfig::parse`].
    pub fn record(&self) -> String {
        let mut out = String::new();
        let kind = self.model_kind();
        let _ = writeln!(out, "model={}", kind.as_str());
        let (tde, shan) = (TdeParams::default(), ShanParams::default());
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        match kind {
            ModelKind::Tde => {
                kv("gamma", self.gamma.unwrap_or(tde.gamma).to_string());
                kv("nu", self.nu.unwrap_or(tde.nu).to_string());
                kv("k", self.k.unwrap_or(tde.k_edge).to_string());
            }
            ModelKind::Shan => {
                kv("nu", self.nu.unwrap_or(shan.nu).to_string());
                kv("beta", self.beta.unwrap_or(shan.beta_exp).to_string());
            }
        }
        kv("xi", self.xi.unwrap_or(tde.xi).to_string());
        kv("tau", self.tau.unwrap_or(tde.tau).to_string());
        kv("max-iter", self.max_iter.unwrap_or(tde.max_iter).to_string());
        kv("stop", self.stop_spec().label());
        kv("patience", self.patience_or_default().to_string());
        kv("stencil", self.stencil.unwrap_or_default().as_str().to_string());
        if let Some(l) = self.looks {
            kv("looks", l.to_string());
        }
        if let Some(s) = self.seed.or(self.looks.map(|_| 0)) {
            kv("seed", s.to_string());
        }
        let paths = [
            ("input", &self.input),
            ("reference", &self.reference),
            ("output", &self.output),
            ("export-ratio", &self.export_ratio),
            ("export-surface", &self.export_surface),
            ("trace", &self.trace),
        ];
        for (k, p) in paths {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        out
    }
}

/// `<path>.run.txt`, the sidecar holding the resolved config of an output.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".run.txt");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_merge() {
        let file = RunConfig::parse("# comment\nmodel = shan\nnu=1.5\n\nstop=fixed:10\n").unwrap();
        let mut cli = RunConfig::default();
        cli.set("nu", "2.5").unwrap();
        let cfg = file.merge(cli);
        assert_eq!(cfg.model, Some(ModelKind::Shan));
        assert_eq!(cfg.nu, Some(2.5));
        assert_eq!(cfg.stop, Some(StopSpec::Fixed(10)));
    }

    #[test]
    fn bad_lines_report_their_number() {
        let err = RunConfig::parse("model=tde\ngamma\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        let err = RunConfig::parse("model=tde\n\nwhat=3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }));
        let err = RunConfig::parse("tau=fast\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 1, .. }));
    }

    #[test]
    fn stop_rules() {
        assert_eq!(StopSpec::parse("best-psnr"), Ok(StopSpec::BestPsnr));
        assert_eq!(StopSpec::parse("fixed:0"), Ok(StopSpec::Fixed(0)));
        assert_eq!(StopSpec::parse("reltol:1e-5"), Ok(StopSpec::RelTol(1e-5)));
        assert!(StopSpec::parse("reltol:-1").is_err());
        assert!(StopSpec::parse("forever").is_err());
    }

    #[test]
    fn record_round_trips() {
        let mut cfg = RunConfig::default();
        for (k, v) in [("model", "shan"), ("beta", "2.5"), ("looks", "3"), ("seed", "11"), ("output", "out.pgm")] {
            cfg.set(k, v).unwrap();
        }
        let text = cfg.record();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back.record(), text);
        assert_eq!(back.resolve(None).unwrap(), cfg.resolve(None).unwrap());
        assert!(text.contains("nu=2\n"), "{text}");
    }

    #[test]
    fn best_psnr_requires_reference() {
        let mut cfg = RunConfig::default();
        cfg.set("stop", "best-psnr").unwrap();
        assert!(cfg.resolve(None).is_err());
        let r = ImageGrid::filled(4, 4, 10.0).unwrap();
        assert!(matches!(cfg.resolve(Some(&r)).unwrap().stop(), StoppingPolicy::BestPsnr { patience: 20, .. }));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("a/out.pgm")), PathBuf::from("a/out.pgm.run.txt"));
    }
}
