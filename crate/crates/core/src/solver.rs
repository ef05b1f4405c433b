//! Explicit time stepping for both diffusion models.
//!
//! Telegraph model (`I_tt + gamma I_t = div(g grad I)`), centred in time:
//!
//! ```text
//! (1 + gamma tau) I[n+1] = (2 + gamma tau) I[n] - I[n-1] + tau^2 div(g[n] grad I[n])
//! ```
//!
//! started from `I[1] = I[0]` (zero initial velocity). The parabolic model
//! (`I_t = div(g grad I)`) uses forward Euler:
//! `I[n+1] = I[n] + tau div(g[n] grad I[n])`.
//!
//! The diffusivity is lagged: `g[n]` is computed from `I[n]`.

use log::warn;

use crate::diffusivity::{Scratch, ShanParams, TdeParams};
use crate::error::{Error, Result};
use crate::grid::{divergence_into, ImageGrid, StencilMode};
use crate::metrics::{psnr, ssim, SsimParams};

/// When to stop iterating.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingPolicy {
    /// Track PSNR against `reference`; halt after `patience` consecutive
    /// non-improving steps and return the best iterate seen (the input
    /// included).
    BestPsnr { reference: ImageGrid, patience: usize },
    /// Exactly this many steps; overrides `max_iter`.
    FixedIterations(usize),
    /// Halt once `mean|I[n+1] - I[n]| / mean|I[n]|` drops below the tolerance.
    RelativeChange(f64),
}

pub const DEFAULT_PATIENCE: usize = 20;
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-4;

impl Default for StoppingPolicy {
    fn default() -> Self {
        StoppingPolicy::RelativeChange(DEFAULT_RELATIVE_TOL)
    }
}

impl StoppingPolicy {
    pub fn best_psnr(reference: ImageGrid) -> Self {
        StoppingPolicy::BestPsnr {
            reference,
            patience: DEFAULT_PATIENCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingPolicy::BestPsnr { patience: 0, .. } => Err(Error::param("patience", "must be >= 1")),
            StoppingPolicy::RelativeChange(tol) if !(tol.is_finite() && *tol > 0.0) => {
                Err(Error::param("stop", format!("relative tolerance must be > 0, got {tol}")))
            }
            _ => Ok(()),
        }
    }

    /// Short textual form, `best-psnr`, `fixed:N` or `reltol:T`.
    pub fn label(&self) -> String {
        match self {
            StoppingPolicy::BestPsnr { .. } => "best-psnr".to_string(),
            StoppingPolicy::FixedIterations(n) => format!("fixed:{n}"),
            StoppingPolicy::RelativeChange(t) => format!("reltol:{t}"),
        }
    }

    pub fn reference(&self) -> Option<&ImageGrid> {
        match self {
            StoppingPolicy::BestPsnr { reference, .. } => Some(reference),
            _ => None,
        }
    }
}

/// Which model to run, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tde(TdeParams),
    Shan(ShanParams),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Tde(_) => "tde",
            Model::Shan(_) => "shan",
        }
    }

    pub fn stop(&self) -> &StoppingPolicy {
        match self {
            Model::Tde(p) => &p.stop,
            Model::Shan(p) => &p.stop,
        }
    }

    pub fn max_iter(&self) -> usize {
        match self {
            Model::Tde(p) => p.max_iter,
            Model::Shan(p) => p.max_iter,
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            Model::Tde(p) => p.tau,
            Model::Shan(p) => p.tau,
        }
    }

    pub fn stencil(&self) -> StencilMode {
        match self {
            Model::Tde(p) => p.stencil,
            Model::Shan(p) => p.stencil,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Tde(p) => p.validate(),
            Model::Shan(p) => p.validate(),
        }
    }

    /// Largest time step the guard accepts on a grid with spacing `h`,
    /// assuming `g <= 1`.
    ///
    /// Frozen-coefficient von Neumann analysis of the undamped telegraph
    /// scheme gives `tau <= h / sqrt(2)`; damping only widens the stable
    /// range. Forward Euler for the parabolic model needs `tau <= h^2 / 4`.
    pub fn stability_limit(&self, h: f64) -> f64 {
        match self {
            Model::Tde(_) => h / std::f64::consts::SQRT_2,
            Model::Shan(_) => h * h / 4.0,
        }
    }

    fn step(&self, state: SolverState, scratch: &mut Scratch) -> Result<SolverState> {
        match self {
            Model::Tde(p) => tde_step_with(state, p, scratch),
            Model::Shan(p) => shan_step_with(state, p, scratch),
        }
    }

    /// Flat `key=value` record of every parameter.
    pub fn record(&self) -> Vec<(String, String)> {
        let mut out = vec![("model".to_string(), self.name().to_string())];
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        match self {
            Model::Tde(p) => {
                push("gamma", p.gamma.to_string());
                push("nu", p.nu.to_string());
                push("k", p.k_edge.to_string());
                push("xi", p.xi.to_string());
                push("tau", p.tau.to_string());
                push("max-iter", p.max_iter.to_string());
                push("stencil", p.stencil.as_str().to_string());
                push("stop", p.stop.label());
            }
            Model::Shan(p) => {
                push("nu", p.nu.to_string());
                push("beta", p.beta_exp.to_string());
                push("xi", p.xi.to_string());
                push("tau", p.tau.to_string());
                push("max-iter", p.max_iter.to_string());
                push("stencil", p.stencil.as_str().to_string());
                push("stop", p.stop.label());
            }
        }
        if let StoppingPolicy::BestPsnr { patience, .. } = self.stop() {
            out.push(("patience".to_string(), patience.to_string()));
        }
        out
    }
}

/// Two consecutive time levels of the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// `I[n]`.
    pub current: ImageGrid,
    /// `I[n-1]`.
    pub previous: ImageGrid,
    /// Time level `n` of `current`; the initial state is `n = 1` with
    /// `I[1] = I[0]`.
    pub iteration: usize,
    pub best_psnr: Option<f64>,
    pub best_image: Option<ImageGrid>,
}

impl SolverState {
    pub fn new(initial: ImageGrid) -> Result<Self> {
        initial.ensure_solver_size()?;
        Ok(Self {
            previous: initial.clone(),
            current: initial,
            iteration: 1,
            best_psnr: None,
            best_image: None,
        })
    }

    /// Rotates the time levels: `update(cur, prev)` overwrites the buffer of
    /// `I[n-1]` in place with `I[n+1]`.
    fn overflowed(&self) -> Error {
        Error::Divergence {
            iteration: self.iteration + 1,
            max_abs: self.current.max_abs(),
        }
    }

    fn advance(self, update: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let SolverState {
            current,
            previous,
            iteration,
            best_psnr,
            best_image,
        } = self;
        let mut next = previous;
        update(current.data(), next.data_mut());
        if next.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: iteration + 1,
                max_abs: next.data().iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            });
        }
        Ok(Self {
            previous: current,
            current: next,
            iteration: iteration + 1,
            best_psnr,
            best_image,
        })
    }
}

/// One telegraph-scheme step.
///
/// Fails with [`Error::Divergence`] when the step produces a non-finite
/// value, an overflowing gradient magnitude inside the diffusivity included.
pub fn tde_step(state: SolverState, p: &TdeParams) -> Result<SolverState> {
    tde_step_with(state, p, &mut Scratch::default())
}

fn tde_step_with(state: SolverState, p: &TdeParams, scratch: &mut Scratch) -> Result<SolverState> {
    if !scratch.tde(&state.current, p)? {
        return Err(state.overflowed());
    }
    divergence_into(&scratch.coef, &state.current, p.stencil, &mut scratch.div);
    let denom = 1.0 + p.gamma * p.tau;
    let tau2 = p.tau * p.tau;
    let div = &scratch.div;
    // Increment form of the update; a constant image stays bit-exact.
    state.advance(|cur, next| {
        for ((n, &c), &d) in next.iter_mut().zip(cur).zip(div) {
            *n = c + ((c - *n) + tau2 * d) / denom;
        }
    })
}

/// One forward-Euler step of the parabolic model.
pub fn shan_step(state: SolverState, p: &ShanParams) -> Result<SolverState> {
    shan_step_with(state, p, &mut Scratch::default())
}

fn shan_step_with(state: SolverState, p: &ShanParams, scratch: &mut Scratch) -> Result<SolverState> {
    if !scratch.shan(&state.current, p)? {
        return Err(state.overflowed());
    }
    euler_step(state, p.tau, p.stencil, scratch)
}

/// `I[n+1] = I[n] + tau div(g grad I[n])` with a caller-supplied diffusivity.
pub fn explicit_diffusion_step(state: SolverState, g: &ImageGrid, tau: f64, stencil: StencilMode) -> Result<SolverState> {
    state.current.ensure_same_dims(g)?;
    let mut scratch = Scratch::with_coefficient(g);
    euler_step(state, tau, stencil, &mut scratch)
}

fn euler_step(state: SolverState, tau: f64, stencil: StencilMode, scratch: &mut Scratch) -> Result<SolverState> {
    divergence_into(&scratch.coef, &state.current, stencil, &mut scratch.div);
    let div = &scratch.div;
    state.advance(|cur, next| {
        for ((n, &c), &d) in next.iter_mut().zip(cur).zip(div) {
            *n = c + tau * d;
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// Number of steps taken so far (1-based).
    pub iteration: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub relative_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub iterations_run: usize,
    pub trace: Vec<TraceEntry>,
    pub final_image: ImageGrid,
    /// Step count at which `final_image` was produced (0 = the input).
    pub final_iteration: usize,
    pub model: Model,
    /// Speckle seed of the input, when known to the caller.
    pub seed: Option<u64>,
}

impl RunReport {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn params_record(&self) -> Vec<(String, String)> {
        let mut out = self.model.record();
        if let Some(seed) = self.seed {
            out.push(("seed".to_string(), seed.to_string()));
        }
        out
    }

    pub fn best_psnr(&self) -> Option<f64> {
        self.trace
            .iter()
            .filter_map(|t| t.psnr)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    }
}

/// Runs `model` from `initial` until its stopping policy fires.
pub fn run(initial: &ImageGrid, model: &Model) -> Result<RunReport> {
    run_monitored(initial, model, None)
}

/// As [`run`], additionally recording PSNR/SSIM against `monitor` in the
/// trace. A best-PSNR policy always monitors its own reference.
pub fn run_monitored(initial: &ImageGrid, model: &Model, monitor: Option<&ImageGrid>) -> Result<RunReport> {
    model.validate()?;
    let stop = model.stop();
    let reference = stop.reference().or(monitor);
    if let Some(r) = reference {
        initial.ensure_same_dims(r)?;
    }
    let limit = model.stability_limit(initial.spacing());
    if model.tau() > limit {
        warn!(
            "time step {} exceeds the stability guard {:.4} for the {} scheme",
            model.tau(),
            limit,
            model.name()
        );
    }
    if initial.min() <= 0.0 {
        warn!("initial image is not strictly positive (min {})", initial.min());
    }

    let max_steps = match stop {
        StoppingPolicy::FixedIterations(n) => *n,
        _ => model.max_iter(),
    };
    let ssim_params = SsimParams::default();
    let mut state = SolverState::new(initial.clone())?;
    let mut scratch = Scratch::default();
    let mut trace = Vec::new();
    let mut best_step = 0;
    let mut stale = 0;

    if let StoppingPolicy::BestPsnr { reference, .. } = stop {
        state.best_psnr = Some(psnr(reference, initial)?);
    }

    for step in 1..=max_steps {
        state = model.step(state, &mut scratch)?;
        let relative_change = relative_change(&state.previous, &state.current);
        let (psnr_v, ssim_v) = match reference {
            Some(r) => (Some(psnr(r, &state.current)?), Some(ssim(r, &state.current, &ssim_params)?)),
            None => (None, None),
        };
        trace.push(TraceEntry {
            iteration: step,
            psnr: psnr_v,
            ssim: ssim_v,
            relative_change,
        });

        match stop {
            StoppingPolicy::BestPsnr { patience, .. } => {
                let current = psnr_v.expect("best-psnr policy always has a reference");
                if state.best_psnr.is_none_or(|b| current > b) {
                    state.best_psnr = Some(current);
                    match &mut state.best_image {
                        Some(best) => best.data_mut().copy_from_slice(state.current.data()),
                        None => state.best_image = Some(state.current.clone()),
                    }
                    best_step = step;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= *patience {
                        break;
                    }
                }
            }
            StoppingPolicy::RelativeChange(tol) => {
                if relative_change < *tol {
                    break;
                }
            }
            StoppingPolicy::FixedIterations(_) => {}
        }
    }

    let iterations_run = trace.len();
    let (final_image, final_iteration) = match stop {
        StoppingPolicy::BestPsnr { .. } => match state.best_image {
            Some(img) => (img, best_step),
            None => (initial.clone(), 0),
        },
        _ => (state.current, iterations_run),
    };
    Ok(RunReport {
        iterations_run,
        trace,
        final_image,
        final_iteration,
        model: model.clone(),
        seed: None,
    })
}

/// `mean|next - prev| / mean|prev|`.
fn relative_change(prev: &ImageGrid, next: &ImageGrid) -> f64 {
    let num: f64 = prev.data().iter().zip(next.data()).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = prev.data().iter().map(|v| v.abs()).sum();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}
