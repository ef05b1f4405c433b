//! Image container and the discrete differential operators used by the
//! diffusion schemes.
//!
//! Pixels are stored row-major: `data[y * width + x]`, where `x` is the
//! column (the `i` index of the difference formulas) and `y` the row.
//! Borders follow the homogeneous Neumann condition, realised with replicated
//! ghost cells (`I[-1] = I[0]`, `I[N] = I[N-1]`).

use crate::error::{Error, Result};

/// A 2D scalar field with uniform grid spacing `h`.
///
/// Also used for every derived per-pixel quantity (diffusivities, speckle
/// fields, divergence terms) so that dimensions travel with the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    spacing: f64,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_spacing(width, height, 1.0, data)
    }

    pub fn with_spacing(width: usize, height: usize, spacing: f64, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("dimensions", format!("{width}x{height} grid is empty")));
        }
        if data.len() != width * height {
            return Err(Error::param(
                "data",
                format!("length {} does not match {width}x{height}", data.len()),
            ));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::param("spacing", format!("must be finite and > 0, got {spacing}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "data",
                format!("non-finite value at ({}, {})", pos % width, pos / width),
            ));
        }
        Ok(Self {
            width,
            height,
            spacing,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Same shape and spacing as `self`, different values. Callers guarantee
    /// the length; finiteness is the caller's responsibility as well.
    pub(crate) fn like(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            width: self.width,
            height: self.height,
            spacing: self.spacing,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Reads with replicate (Neumann) extension for out-of-range indices.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.like(self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn ensure_same_dims(&self, other: &ImageGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    pub(crate) fn ensure_solver_size(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::param(
                "dimensions",
                format!("solvers need at least 3x3 pixels, got {}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }
}

/// Central-difference gradient of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl GradientField {
    pub fn max_magnitude(&self) -> f64 {
        self.magnitude.iter().copied().fold(0.0, f64::max)
    }
}

/// Discretisation of the flux divergence `div(g grad I)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StencilMode {
    /// Half-point flux form with arithmetic-mean face diffusivities. Sums to
    /// zero over the grid, so the scheme conserves the mean intensity.
    #[default]
    Conservative,
    /// Nested central differences `Dx(g Dx I) + Dy(g Dy I)` evaluated
    /// literally; couples only every other pixel along each axis.
    PaperCentral,
}

impl StencilMode {
    pub fn as_str(self) -> &'static str {
        match self {
            StencilMode::Conservative => "conservative",
            StencilMode::PaperCentral => "paper-central",
        }
    }
}

impl std::str::FromStr for StencilMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conservative" => Ok(StencilMode::Conservative),
            "paper-central" => Ok(StencilMode::PaperCentral),
            other => Err(Error::param(
                "stencil",
                format!("unknown stencil `{other}` (expected conservative|paper-central)"),
            )),
        }
    }
}

/// Pads `img` by `radius` pixels on every side, copying the nearest edge
/// pixel into the border.
pub fn extend_replicate(img: &ImageGrid, radius: usize) -> ImageGrid {
    assert!(radius >= 1, "extend_replicate: radius must be >= 1");
    let r = radius as isize;
    let w = img.width + 2 * radius;
    let h = img.height + 2 * radius;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            data.push(img.get_clamped(x - r, y - r));
        }
    }
    ImageGrid {
        width: w,
        height: h,
        spacing: img.spacing,
        data,
    }
}

/// Removes a `radius`-pixel border; inverse of [`extend_replicate`].
pub fn crop(img: &ImageGrid, radius: usize) -> Result<ImageGrid> {
    if img.width <= 2 * radius || img.height <= 2 * radius {
        return Err(Error::param(
            "radius",
            format!("cannot crop {radius} px from a {}x{} grid", img.width, img.height),
        ));
    }
    let w = img.width - 2 * radius;
    let h = img.height - 2 * radius;
    let mut data = Vec::with_capacity(w * h);
    for y in radius..radius + h {
        let row = y * img.width;
        data.extend_from_slice(&img.data[row + radius..row + radius + w]);
    }
    Ok(ImageGrid {
        width: w,
        height: h,
        spacing: img.spacing,
        data,
    })
}

/// Central differences `(I[i+1] - I[i-1]) / 2h` along both axes, replicate
/// ghosts at the border (so the normal derivative there is half the one-sided
/// difference, and zero for a flat edge).
pub fn central_gradient(img: &ImageGrid) -> GradientField {
    let (w, h) = img.dims();
    let inv = 1.0 / (2.0 * img.spacing);
    let n = w * h;
    let mut gx = Vec::with_capacity(n);
    let mut gy = Vec::with_capacity(n);
    let mut magnitude = Vec::with_capacity(n);
    for y in 0..h {
        let up = y.saturating_sub(1) * w;
        let down = (y + 1).min(h - 1) * w;
        let row = y * w;
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let dx = (img.data[row + right] - img.data[row + left]) * inv;
            let dy = (img.data[down + x] - img.data[up + x]) * inv;
            gx.push(dx);
            gy.push(dy);
            magnitude.push((dx * dx + dy * dy).sqrt());
        }
    }
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    }
}

/// Discrete `div(g grad I)` under the Neumann boundary.
///
/// `g` must be non-negative and finite and share `img`'s dimensions.
pub fn divergence_of_flux(g: &ImageGrid, img: &ImageGrid, mode: StencilMode) -> Result<ImageGrid> {
    img.ensure_same_dims(g)?;
    let mut out = Vec::new();
    divergence_into(&g.data, img, mode, &mut out);
    Ok(img.like(out))
}

/// Buffer-reusing core of [`divergence_of_flux`]; `c` holds the diffusivity
/// on the grid of `img`.
pub(crate) fn divergence_into(c: &[f64], img: &ImageGrid, mode: StencilMode, out: &mut Vec<f64>) {
    debug_assert_eq!(c.len(), img.data.len());
    match mode {
        StencilMode::Conservative => conservative_divergence(c, img, out),
        StencilMode::PaperCentral => *out = central_divergence(c, img),
    }
}

fn conservative_divergence(c: &[f64], img: &ImageGrid, out: &mut Vec<f64>) {
    let (w, h) = img.dims();
    let inv_h2 = 1.0 / (img.spacing * img.spacing);
    let u = &img.data;
    out.clear();
    out.resize(w * h, 0.0);

    // Each interior face flux is added to one side and subtracted from the
    // other; boundary faces carry no flux.
    for y in 0..h {
        let row = y * w;
        for x in 0..w - 1 {
            let (a, b) = (row + x, row + x + 1);
            let flux = 0.5 * (c[a] + c[b]) * (u[b] - u[a]);
            out[a] += flux;
            out[b] -= flux;
        }
    }
    for y in 0..h - 1 {
        let row = y * w;
        for x in 0..w {
            let (a, b) = (row + x, row + w + x);
            let flux = 0.5 * (c[a] + c[b]) * (u[b] - u[a]);
            out[a] += flux;
            out[b] -= flux;
        }
    }
    for v in out.iter_mut() {
        *v *= inv_h2;
    }
}

fn central_divergence(c: &[f64], img: &ImageGrid) -> Vec<f64> {
    let (w, h) = img.dims();
    let grad = central_gradient(img);
    let fx: Vec<f64> = grad.gx.iter().zip(c).map(|(d, c)| c * d).collect();
    let fy: Vec<f64> = grad.gy.iter().zip(c).map(|(d, c)| c * d).collect();
    let inv = 1.0 / (2.0 * img.spacing);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let up = y.saturating_sub(1) * w;
        let down = (y + 1).min(h - 1) * w;
        let row = y * w;
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let ddx = (fx[row + right] - fx[row + left]) * inv;
            let ddy = (fy[down + x] - fy[up + x]) * inv;
            out.push(ddx + ddy);
        }
    }
    out
}
