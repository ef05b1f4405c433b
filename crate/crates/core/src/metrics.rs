//! Restoration quality measures and evaluation exports.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Returned by [`psnr`] for identical images.
pub const PSNR_CAP_DB: f64 = 999.0;

/// Pixels below this make the ratio image undefined.
pub const RATIO_FLOOR: f64 = 1e-6;

/// Peak signal-to-noise ratio in dB, using the maximum of `reference` as the
/// peak. Capped at [`PSNR_CAP_DB`].
pub fn psnr(reference: &ImageGrid, test: &ImageGrid) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let peak = reference.max();
    if !(peak > 0.0) {
        return Err(Error::param("reference", "PSNR needs a reference with a positive maximum"));
    }
    let mse = mse(reference, test);
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> f64 {
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    sum / a.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SsimWindow {
    /// One window covering the whole image.
    #[default]
    Global,
    /// Gaussian-weighted local windows (`size` x `size`, `sigma`), averaged
    /// over every position where the window fits inside the image.
    Gaussian { size: usize, sigma: f64 },
}

impl SsimWindow {
    pub fn gaussian() -> Self {
        SsimWindow::Gaussian { size: 11, sigma: 1.5 }
    }
}

/// SSIM stabilisers: `c1 = (k1 L)^2`, `c2 = (k2 L)^2` with `L` the dynamic range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub window: SsimWindow,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
            window: SsimWindow::Global,
        }
    }
}

impl SsimParams {
    pub fn windowed() -> Self {
        Self {
            window: SsimWindow::gaussian(),
            ..Self::default()
        }
    }

    fn constants(&self) -> Result<(f64, f64)> {
        for (name, v) in [("k1", self.k1), ("k2", self.k2), ("dynamic_range", self.dynamic_range)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "ssim",
                    reason: format!("{name} must be > 0, got {v}"),
                });
            }
        }
        Ok(((self.k1 * self.dynamic_range).powi(2), (self.k2 * self.dynamic_range).powi(2)))
    }
}

#[inline]
fn ssim_index(mx: f64, my: f64, vx: f64, vy: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Structural similarity between `x` and `y`.
pub fn ssim(x: &ImageGrid, y: &ImageGrid, p: &SsimParams) -> Result<f64> {
    x.ensure_same_dims(y)?;
    let (c1, c2) = p.constants()?;
    match p.window {
        SsimWindow::Global => Ok(global_ssim(x.data(), y.data(), c1, c2)),
        SsimWindow::Gaussian { size, sigma } => {
            if size == 0 || size % 2 == 0 {
                return Err(Error::param("ssim", format!("window size must be odd, got {size}")));
            }
            if x.width() < size || x.height() < size {
                // No window fits; the whole image is the only window.
                return Ok(global_ssim(x.data(), y.data(), c1, c2));
            }
            windowed_ssim(x, y, size, sigma, c1, c2)
        }
    }
}

fn global_ssim(x: &[f64], y: &[f64], c1: f64, c2: f64) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        vx += da * da;
        vy += db * db;
        cov += da * db;
    }
    ssim_index(mx, my, vx / n, vy / n, cov / n, c1, c2)
}

fn windowed_ssim(x: &ImageGrid, y: &ImageGrid, size: usize, sigma: f64, c1: f64, c2: f64) -> Result<f64> {
    let r = size / 2;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("ssim", format!("window sigma must be > 0, got {sigma}")));
    }
    let ri = r as isize;
    let raw: Vec<f64> = (-ri..=ri).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = raw.iter().sum();
    let taps: Vec<f64> = raw.into_iter().map(|v| v / norm).collect();
    let (w, h) = x.dims();
    let (xd, yd) = (x.data(), y.data());

    // Local moments via separable filtering on the valid region only.
    let ow = w - size + 1;
    let oh = h - size + 1;
    let fields: [Vec<f64>; 5] = [
        xd.to_vec(),
        yd.to_vec(),
        xd.iter().map(|v| v * v).collect(),
        yd.iter().map(|v| v * v).collect(),
        xd.iter().zip(yd).map(|(a, b)| a * b).collect(),
    ];
    let filtered: Vec<Vec<f64>> = fields
        .iter()
        .map(|f| {
            let mut horiz = vec![0.0; ow * h];
            for yy in 0..h {
                for xx in 0..ow {
                    horiz[yy * ow + xx] = taps.iter().enumerate().map(|(k, t)| t * f[yy * w + xx + k]).sum();
                }
            }
            let mut out = vec![0.0; ow * oh];
            for yy in 0..oh {
                for xx in 0..ow {
                    out[yy * ow + xx] = taps.iter().enumerate().map(|(k, t)| t * horiz[(yy + k) * ow + xx]).sum();
                }
            }
            out
        })
        .collect();

    let mut total = 0.0;
    for i in 0..ow * oh {
        let mx = filtered[0][i];
        let my = filtered[1][i];
        let vx = filtered[2][i] - mx * mx;
        let vy = filtered[3][i] - my * my;
        let cov = filtered[4][i] - mx * my;
        total += ssim_index(mx, my, vx, vy, cov, c1, c2);
    }
    Ok(total / (ow * oh) as f64)
}

/// Pixelwise `degraded / restored`.
pub fn ratio_image(degraded: &ImageGrid, restored: &ImageGrid) -> Result<ImageGrid> {
    degraded.ensure_same_dims(restored)?;
    let w = restored.width();
    if let Some(pos) = restored.data().iter().position(|&v| !(v >= RATIO_FLOOR)) {
        return Err(Error::RatioDivision {
            x: pos % w,
            y: pos / w,
            value: restored.data()[pos],
        });
    }
    let data = degraded.data().iter().zip(restored.data()).map(|(d, r)| d / r).collect();
    Ok(degraded.like(data))
}

/// Min-max rescale to `[0, 255]` for display; a flat image maps to 128.
pub fn rescale_for_display(img: &ImageGrid) -> ImageGrid {
    let (lo, hi) = (img.min(), img.max());
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return img.map(|_| 128.0);
    }
    let scale = 255.0 / (hi - lo);
    img.map(|v| (v - lo) * scale)
}

/// One `(i, j, value)` row of the surface/contour export; `i` is the column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Every pixel as a row, in row-major order.
pub fn surface_rows(img: &ImageGrid) -> Vec<SurfaceRow> {
    let w = img.width();
    img.data()
        .iter()
        .enumerate()
        .map(|(k, &value)| SurfaceRow {
            i: k % w,
            j: k / w,
            value,
        })
        .collect()
}

/// Formats `v` with 9 significant digits, then prints the shortest decimal
/// that parses back to that rounded value (`100`, `0.123456789`, `1e-5`).
pub fn format_sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Writes the `i,j,value` CSV (LF line endings).
pub fn write_surface_csv<W: Write>(img: &ImageGrid, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    wtr.write_record(["i", "j", "value"])?;
    for row in surface_rows(img) {
        wtr.write_record([row.i.to_string(), row.j.to_string(), format_sig9(row.value)])?;
    }
    wtr.flush().map_err(|e| Error::io("<surface csv>", e))?;
    Ok(())
}

/// Reads an `i,j,value` CSV back into a grid. Every pixel must appear once.
pub fn read_surface_csv<R: Read>(input: R) -> Result<ImageGrid> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["i", "j", "value"] {
        return Err(Error::Format {
            offset: 0,
            message: format!("expected header `i,j,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        let bad = |what: &str| Error::Format {
            offset,
            message: format!("invalid {what} in surface row"),
        };
        let i: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("i"))?;
        let j: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("j"))?;
        let value: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("value"))?;
        rows.push(SurfaceRow { i, j, value });
    }
    let width = rows.iter().map(|r| r.i + 1).max().unwrap_or(0);
    let height = rows.iter().map(|r| r.j + 1).max().unwrap_or(0);
    if rows.len() != width * height {
        return Err(Error::Format {
            offset: 0,
            message: format!("{} rows cannot fill a {width}x{height} grid", rows.len()),
        });
    }
    let mut data = vec![f64::NAN; width * height];
    for r in rows {
        data[r.j * width + r.i] = r.value;
    }
    ImageGrid::new(width, height, data)
}
