//! Gaussian pre-smoothing `I_xi = G_xi * I` used inside the diffusivities.

use crate::error::{Error, Result};
use crate::grid::{central_gradient, GradientField, ImageGrid};

/// Sampled, truncated and renormalised 2D Gaussian.
///
/// The kernel is separable: `weight(dx, dy) = taps[dx] * taps[dy]`, with the
/// 1D taps normalised to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("xi", format!("Gaussian sigma must be > 0, got {sigma}")));
        }
        let radius = ((3.0 * sigma).ceil() as usize).max(1);
        let r = radius as isize;
        let two_var = 2.0 * sigma * sigma;
        let mut taps: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / two_var).exp()).collect();
        let sum: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= sum;
        }
        Ok(Self { sigma, radius, taps })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Side length `2r + 1`.
    pub fn size(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Weight at offset `(dx, dy)` from the centre, both in `[-r, r]`.
    pub fn weight(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.taps[(dx + r) as usize] * self.taps[(dy + r) as usize]
    }

    /// Dense `(2r+1) x (2r+1)` weights, row-major.
    pub fn weights(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size() * self.size());
        for wy in &self.taps {
            for wx in &self.taps {
                out.push(wx * wy);
            }
        }
        out
    }
}

pub fn build_kernel(sigma: f64) -> Result<GaussianKernel> {
    GaussianKernel::new(sigma)
}

/// Same-size convolution with replicate padding, as two 1D passes.
pub fn convolve(img: &ImageGrid, kernel: &GaussianKernel) -> ImageGrid {
    let (w, h) = img.dims();
    let mut tmp = Vec::new();
    let mut out = Vec::new();
    convolve_into(img.data(), w, h, kernel, &mut tmp, &mut out);
    img.like(out)
}

/// Buffer-reusing core of [`convolve`]; `tmp` and `out` are resized as needed.
pub(crate) fn convolve_into(src: &[f64], w: usize, h: usize, kernel: &GaussianKernel, tmp: &mut Vec<f64>, out: &mut Vec<f64>) {
    let r = kernel.radius as isize;
    let ru = kernel.radius;
    let taps = kernel.taps();
    tmp.resize(w * h, 0.0);
    out.clear();
    out.resize(w * h, 0.0);

    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        for (x, o) in dst.iter_mut().enumerate() {
            *o = if x >= ru && x + ru < w {
                let window = &row[x - ru..=x + ru];
                taps.iter().zip(window).map(|(t, v)| t * v).sum()
            } else {
                taps.iter()
                    .enumerate()
                    .map(|(k, t)| t * row[(x as isize + k as isize - r).clamp(0, w as isize - 1) as usize])
                    .sum()
            };
        }
    }

    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[yy * w..(yy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
}

/// `central_gradient(convolve(img, kernel))`, also returning the smoothed image.
pub fn smooth_with_gradient(img: &ImageGrid, kernel: &GaussianKernel) -> (ImageGrid, GradientField) {
    let smoothed = convolve(img, kernel);
    let grad = central_gradient(&smoothed);
    (smoothed, grad)
}

pub fn smoothed_gradient(img: &ImageGrid, kernel: &GaussianKernel) -> GradientField {
    smooth_with_gradient(img, kernel).1
}
