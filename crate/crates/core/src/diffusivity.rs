//! Diffusion coefficients.
//!
//! The telegraph model uses
//!
//! ```text
//! g = b(s) * 1 / (1 + (|grad I_xi| / K)^2),   b(s) = 2 s^nu / (1 + s^nu),   s = |I_xi| / max|I_xi|
//! ```
//!
//! and the parabolic reference model uses
//!
//! ```text
//! g = (I_xi / max|I_xi|)^nu * 1 / (1 + |grad I_xi|^beta)
//! ```
//!
//! In both, `I_xi` is the Gaussian-smoothed current iterate and the maximum
//! is taken over the whole grid at every call.

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, StencilMode};
use crate::smoothing::{convolve_into, smooth_with_gradient, GaussianKernel};
use crate::solver::StoppingPolicy;

/// Below this the image is considered black and `s` is undefined.
pub const MIN_SMOOTHED_MAX: f64 = 1e-8;

/// Parameters of the gray-level telegraph diffusion model and its scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct TdeParams {
    /// Damping `gamma > 0`.
    pub gamma: f64,
    /// Gray-level exponent `nu >= 1`.
    pub nu: f64,
    /// Edge threshold `K > 0`.
    pub k_edge: f64,
    /// Pre-smoothing scale `xi > 0`.
    pub xi: f64,
    /// Time step `tau > 0`.
    pub tau: f64,
    pub max_iter: usize,
    pub stencil: StencilMode,
    pub stop: StoppingPolicy,
}

impl Default for TdeParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            nu: 1.0,
            k_edge: 1.0,
            xi: 1.0,
            tau: 0.2,
            max_iter: 2000,
            stencil: StencilMode::Conservative,
            stop: StoppingPolicy::default(),
        }
    }
}

impl TdeParams {
    pub fn validate(&self) -> Result<()> {
        positive("gamma", self.gamma)?;
        positive("k", self.k_edge)?;
        positive("xi", self.xi)?;
        positive("tau", self.tau)?;
        if !(self.nu.is_finite() && self.nu >= 1.0) {
            return Err(Error::param("nu", format!("must be >= 1, got {}", self.nu)));
        }
        self.stop.validate()
    }
}

/// Parameters of the parabolic reference model.
///
/// `nu` is the gray-level exponent; parameter tables sometimes label it
/// `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShanParams {
    pub nu: f64,
    pub beta_exp: f64,
    pub xi: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub stencil: StencilMode,
    pub stop: StoppingPolicy,
}

impl Default for ShanParams {
    fn default() -> Self {
        Self {
            nu: 2.0,
            beta_exp: 2.25,
            xi: 1.0,
            tau: 0.2,
            max_iter: 2000,
            stencil: StencilMode::Conservative,
            stop: StoppingPolicy::default(),
        }
    }
}

impl ShanParams {
    pub fn validate(&self) -> Result<()> {
        positive("nu", self.nu)?;
        positive("beta", self.beta_exp)?;
        positive("xi", self.xi)?;
        positive("tau", self.tau)?;
        self.stop.validate()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

/// `b(s) = 2 s^nu / (1 + s^nu)` for `s` in `[0, 1]`.
pub fn gray_indicator(s: f64, nu: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain {
            what: "gray-level indicator (s must lie in [0, 1])",
            value: s,
        });
    }
    Ok(gray_indicator_unchecked(s, nu))
}

#[inline]
fn gray_indicator_unchecked(s: f64, nu: f64) -> f64 {
    let p = pow(s, nu);
    2.0 * p / (1.0 + p)
}

/// `base^exp` for `base >= 0`, avoiding `powf` for exponents that are
/// multiples of 1/4 (which covers the parameter tables).
#[inline]
pub(crate) fn pow(base: f64, exp: f64) -> f64 {
    let quarters = exp * 4.0;
    if exp == 1.0 {
        base
    } else if exp == 2.0 {
        base * base
    } else if quarters.fract() == 0.0 && exp > 0.0 && exp <= 16.0 {
        let q = quarters as i32;
        let whole = base.powi(q / 4);
        match q % 4 {
            0 => whole,
            2 => whole * base.sqrt(),
            r => {
                let fourth = base.sqrt().sqrt();
                whole * if r == 1 { fourth } else { fourth * fourth * fourth }
            }
        }
    } else {
        base.powf(exp)
    }
}

/// `1 / (1 + (grad_mag / K)^2)`.
#[inline]
pub fn edge_stopper(grad_mag: f64, k: f64) -> f64 {
    let r = grad_mag / k;
    1.0 / (1.0 + r * r)
}

/// Smoothed image, its gradient magnitude and the grid maximum of `|I_xi|`.
struct Smoothed {
    abs_smoothed: Vec<f64>,
    grad_mag: Vec<f64>,
    max_abs: f64,
}

fn smooth(img: &ImageGrid, xi: f64) -> Result<Smoothed> {
    let kernel = GaussianKernel::new(xi)?;
    let (smoothed, grad) = smooth_with_gradient(img, &kernel);
    let abs_smoothed: Vec<f64> = smoothed.data().iter().map(|v| v.abs()).collect();
    let max_abs = abs_smoothed.iter().copied().fold(0.0, f64::max);
    if !(max_abs >= MIN_SMOOTHED_MAX) {
        return Err(Error::DegenerateImage {
            max_smoothed: max_abs,
            threshold: MIN_SMOOTHED_MAX,
        });
    }
    Ok(Smoothed {
        abs_smoothed,
        grad_mag: grad.magnitude,
        max_abs,
    })
}

/// Per-pixel telegraph-model diffusivity, in `[0, 1]`.
pub fn tde_coefficient(img: &ImageGrid, p: &TdeParams) -> Result<ImageGrid> {
    let mut scratch = Scratch::default();
    scratch.tde(img, p)?;
    Ok(img.like(scratch.coef))
}

/// Per-pixel parabolic-model diffusivity, in `[0, 1]`.
pub fn shan_coefficient(img: &ImageGrid, p: &ShanParams) -> Result<ImageGrid> {
    let mut scratch = Scratch::default();
    scratch.shan(img, p)?;
    Ok(img.like(scratch.coef))
}

/// Buffers reused across iterations by the solver.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    kernel: Option<GaussianKernel>,
    tmp: Vec<f64>,
    smoothed: Vec<f64>,
    /// Diffusivity written by the last [`Scratch::tde`] or [`Scratch::shan`].
    pub(crate) coef: Vec<f64>,
    pub(crate) div: Vec<f64>,
}

impl Scratch {
    /// Scratch whose `coef` is preset to `g`.
    pub(crate) fn with_coefficient(g: &ImageGrid) -> Self {
        Self {
            coef: g.data().to_vec(),
            ..Self::default()
        }
    }

    /// Returns `false` when some gradient magnitude overflowed to infinity.
    pub(crate) fn tde(&mut self, img: &ImageGrid, p: &TdeParams) -> Result<bool> {
        let (nu, k) = (p.nu, p.k_edge);
        self.fill(img, p.xi, |s, grad| gray_indicator_unchecked(s, nu) * edge_stopper(grad, k))
    }

    pub(crate) fn shan(&mut self, img: &ImageGrid, p: &ShanParams) -> Result<bool> {
        let (nu, beta) = (p.nu, p.beta_exp);
        self.fill(img, p.xi, |s, grad| shan_pointwise(s, grad, nu, beta))
    }

    /// Smooths `img`, then writes `f(s, |grad I_xi|)` per pixel into `coef`.
    fn fill(&mut self, img: &ImageGrid, xi: f64, f: impl Fn(f64, f64) -> f64) -> Result<bool> {
        if self.kernel.as_ref().is_none_or(|k| k.sigma() != xi) {
            self.kernel = Some(GaussianKernel::new(xi)?);
        }
        let kernel = self.kernel.as_ref().expect("kernel set above");
        let (w, h) = img.dims();
        convolve_into(img.data(), w, h, kernel, &mut self.tmp, &mut self.smoothed);
        let sm = &self.smoothed;
        let max_abs = sm.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !(max_abs >= MIN_SMOOTHED_MAX) {
            return Err(Error::DegenerateImage {
                max_smoothed: max_abs,
                threshold: MIN_SMOOTHED_MAX,
            });
        }
        // Same central differences as `grid::central_gradient`, fused.
        let inv = 1.0 / (2.0 * img.spacing());
        self.coef.clear();
        self.coef.reserve(w * h);
        let mut finite = true;
        for y in 0..h {
            let up = y.saturating_sub(1) * w;
            let down = (y + 1).min(h - 1) * w;
            let row = y * w;
            for x in 0..w {
                let left = x.saturating_sub(1);
                let right = (x + 1).min(w - 1);
                let dx = (sm[row + right] - sm[row + left]) * inv;
                let dy = (sm[down + x] - sm[up + x]) * inv;
                let grad = (dx * dx + dy * dy).sqrt();
                finite &= grad.is_finite();
                let s = (sm[row + x].abs() / max_abs).min(1.0);
                self.coef.push(f(s, grad));
            }
        }
        Ok(finite && max_abs.is_finite())
    }
}

#[inline]
fn shan_pointwise(s: f64, grad_mag: f64, nu: f64, beta: f64) -> f64 {
    pow(s, nu) / (1.0 + pow(grad_mag, beta))
}

/// Lower bound `kappa` on [`tde_coefficient`] from the smoothed image:
/// `b(min|I_xi| / M_xi) * edge_stopper(max|grad I_xi|, K)`.
///
/// Holds pixelwise because `b` is nondecreasing and the edge stopper is
/// decreasing.
pub fn tde_kappa(img: &ImageGrid, p: &TdeParams) -> Result<f64> {
    let sm = smooth(img, p.xi)?;
    let min_abs = sm.abs_smoothed.iter().copied().fold(f64::INFINITY, f64::min);
    let max_grad = sm.grad_mag.iter().copied().fold(0.0, f64::max);
    Ok(gray_indicator_unchecked(min_abs / sm.max_abs, p.nu) * edge_stopper(max_grad, p.k_edge))
}

/// A-priori lower bound on [`tde_coefficient`] that only uses the extrema of
/// `img` itself.
///
/// Smoothing is a convex combination, so `min I <= I_xi <= max I`; the
/// central differences of `I_xi` are then at most `range / 2h` per axis,
/// giving `|grad I_xi| <= range / (sqrt(2) h)`. Requires `min I > 0`.
pub fn a_priori_kappa(img: &ImageGrid, p: &TdeParams) -> Result<f64> {
    let (lo, hi) = (img.min(), img.max());
    if !(lo > 0.0) {
        return Err(Error::param("image", format!("a-priori bound needs min I > 0, got {lo}")));
    }
    let grad_bound = (hi - lo) / (std::f64::consts::SQRT_2 * img.spacing());
    Ok(gray_indicator_unchecked(lo / hi, p.nu) * edge_stopper(grad_bound, p.k_edge))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::{convolve, smoothed_gradient};

    #[test]
    fn indicator_values() {
        assert_eq!(gray_indicator(0.0, 1.0).unwrap(), 0.0);
        for nu in [1.0, 1.5, 2.0, 3.0] {
            assert_eq!(gray_indicator(1.0, nu).unwrap(), 1.0);
        }
        assert!((gray_indicator(0.5, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn indicator_domain() {
        assert!(matches!(gray_indicator(1.01, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(gray_indicator(-0.1, 1.0), Err(Error::Domain { .. })));
        assert!(gray_indicator(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn fast_pow_matches_powf() {
        for &b in &[0.0, 1e-6, 0.3, 0.5, 1.0, 2.0, 17.5, 300.0] {
            for &e in &[0.25, 0.5, 0.75, 1.0, 1.2, 1.5, 2.0, 2.25, 2.5, 3.0, 3.75, 7.0] {
                let want: f64 = f64::powf(b, e);
                let got = pow(b, e);
                assert!((got - want).abs() <= 1e-13 * want.max(1.0), "{b}^{e}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn edge_stopper_values() {
        assert_eq!(edge_stopper(0.0, 2.0), 1.0);
        assert_eq!(edge_stopper(2.0, 2.0), 0.5);
        assert!((edge_stopper(6.0, 2.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constant_image_has_unit_coefficients() {
        let img = ImageGrid::filled(8, 8, 77.0).unwrap();
        let g = tde_coefficient(&img, &TdeParams::default()).unwrap();
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let g = shan_coefficient(&img, &ShanParams::default()).unwrap();
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn black_image_is_degenerate() {
        let img = ImageGrid::filled(5, 5, 0.0).unwrap();
        assert!(matches!(
            tde_coefficient(&img, &TdeParams::default()),
            Err(Error::DegenerateImage { .. })
        ));
        assert!(shan_coefficient(&img, &ShanParams::default()).is_err());
    }

    #[test]
    fn tde_factors_recomputed_independently() {
        let img = ImageGrid::from_fn(16, 16, |x, y| 1.0 + ((x * 37 + y * 101) % 255) as f64).unwrap();
        let p = TdeParams::default();
        let g = tde_coefficient(&img, &p).unwrap();
        let k = GaussianKernel::new(p.xi).unwrap();
        let sm = convolve(&img, &k);
        let grad = smoothed_gradient(&img, &k);
        let m = sm.max_abs();
        for (i, &gv) in g.data().iter().enumerate() {
            let s = sm.data()[i].abs() / m;
            let b = 2.0 * s / (1.0 + s);
            let e = 1.0 / (1.0 + grad.magnitude[i].powi(2));
            assert!((gv - b * e).abs() < 1e-14);
            assert!(gv > 0.0 && gv <= 1.0);
        }
    }

    #[test]
    fn shan_half_max_unit_gradient() {
        assert_eq!(shan_pointwise(0.5, 1.0, 1.0, 1.0), 0.25);
    }

    #[test]
    fn shan_factors_recomputed_independently() {
        let img = ImageGrid::from_fn(16, 12, |x, y| 3.0 + ((x * 53 + y * 29) % 240) as f64).unwrap();
        let p = ShanParams::default();
        let g = shan_coefficient(&img, &p).unwrap();
        let k = GaussianKernel::new(p.xi).unwrap();
        let sm = convolve(&img, &k);
        let grad = smoothed_gradient(&img, &k);
        let m = sm.max_abs();
        for (i, &gv) in g.data().iter().enumerate() {
            let expected = (sm.data()[i] / m).powf(2.0) / (1.0 + grad.magnitude[i].powf(2.25));
            assert!((gv - expected).abs() < 1e-14);
            assert!((0.0..=1.0).contains(&gv));
        }
    }

    #[test]
    fn kappa_bounds_hold() {
        let img = ImageGrid::from_fn(20, 20, |x, y| 5.0 + ((x * 13 + y * 7) % 200) as f64).unwrap();
        let p = TdeParams::default();
        let g = tde_coefficient(&img, &p).unwrap();
        let kappa = tde_kappa(&img, &p).unwrap();
        let apriori = a_priori_kappa(&img, &p).unwrap();
        assert!(apriori > 0.0 && apriori <= kappa);
        assert!(g.min() >= kappa);
    }

    #[test]
    fn param_validation() {
        assert!(TdeParams::default().validate().is_ok());
        assert!(TdeParams { nu: 0.5, ..TdeParams::default() }.validate().is_err());
        assert!(TdeParams { gamma: 0.0, ..TdeParams::default() }.validate().is_err());
        assert!(ShanParams { beta_exp: -1.0, ..ShanParams::default() }.validate().is_err());
    }
}
