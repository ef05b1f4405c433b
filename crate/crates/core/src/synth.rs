//! Deterministic piecewise-constant test images.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

#[derive(Debug, Clone, PartialEq)]
pub enum SynthKind {
    /// Hard-edged discs laid out on a near-square grid of cells, disc `k` in
    /// cell `k` (row-major), centred in its cell.
    Circles {
        radii: Vec<f64>,
        intensities: Vec<f64>,
        background: f64,
    },
    /// Vertical stripes: `period / 2` columns at `low`, then `period / 2` at `high`.
    Stripes { period: usize, low: f64, high: f64 },
    /// Square cells of side `cell`, `low` at the origin.
    Checker { cell: usize, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub width: usize,
    pub height: usize,
    pub min_intensity: f64,
}

/// Phantom families used by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phantom {
    Circles,
    Stripes,
    Checker,
}

impl Phantom {
    pub const ALL: [Phantom; 3] = [Phantom::Circles, Phantom::Stripes, Phantom::Checker];

    pub fn name(self) -> &'static str {
        match self {
            Phantom::Circles => "circles",
            Phantom::Stripes => "stripes",
            Phantom::Checker => "checker",
        }
    }

    /// Default spec of this family on a `size x size` canvas. The circle
    /// radii scale with the canvas (the 256 px layout is the reference).
    pub fn spec(self, size: usize) -> SynthSpec {
        let kind = match self {
            Phantom::Circles => {
                let scale = size as f64 / 256.0;
                SynthKind::Circles {
                    radii: [20.0, 28.0, 36.0, 44.0].iter().map(|r| r * scale).collect(),
                    intensities: vec![90.0, 140.0, 190.0, 240.0],
                    background: 40.0,
                }
            }
            Phantom::Stripes => SynthKind::Stripes {
                period: 16,
                low: 60.0,
                high: 220.0,
            },
            Phantom::Checker => SynthKind::Checker {
                cell: 8,
                low: 50.0,
                high: 200.0,
            },
        };
        SynthSpec {
            kind,
            width: size,
            height: size,
            min_intensity: 1.0,
        }
    }
}

impl std::str::FromStr for Phantom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circles" | "circle" => Ok(Phantom::Circles),
            "stripes" => Ok(Phantom::Stripes),
            "checker" => Ok(Phantom::Checker),
            other => Err(Error::param(
                "phantom",
                format!("unknown phantom `{other}` (expected circles|stripes|checker)"),
            )),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("size", "canvas must be non-empty"));
        }
        if !(self.min_intensity >= 1.0 && self.min_intensity <= 255.0) {
            return Err(Error::param(
                "min_intensity",
                format!("must lie in [1, 255], got {}", self.min_intensity),
            ));
        }
        let check = |name: &'static str, v: f64| {
            if v.is_finite() && v >= self.min_intensity && v <= 255.0 {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("intensity {v} outside [{}, 255]", self.min_intensity),
                ))
            }
        };
        match &self.kind {
            SynthKind::Circles {
                radii,
                intensities,
                background,
            } => {
                check("background", *background)?;
                if radii.is_empty() || radii.len() != intensities.len() {
                    return Err(Error::param(
                        "circles",
                        format!("{} radii for {} intensities", radii.len(), intensities.len()),
                    ));
                }
                for &v in intensities {
                    check("intensities", v)?;
                }
                let (cols, rows) = layout(radii.len());
                let cell_w = self.width as f64 / cols as f64;
                let cell_h = self.height as f64 / rows as f64;
                for &r in radii {
                    if !(r > 0.0) || 2.0 * r > cell_w || 2.0 * r > cell_h {
                        return Err(Error::param(
                            "radii",
                            format!("disc radius {r} does not fit a {cell_w}x{cell_h} cell"),
                        ));
                    }
                }
            }
            SynthKind::Stripes { period, low, high } => {
                check("low", *low)?;
                check("high", *high)?;
                if *period < 2 || *period > self.width {
                    return Err(Error::param("period", format!("must lie in [2, {}], got {period}", self.width)));
                }
            }
            SynthKind::Checker { cell, low, high } => {
                check("low", *low)?;
                check("high", *high)?;
                if *cell == 0 || *cell > self.width.min(self.height) {
                    return Err(Error::param("cell", format!("cell {cell} does not fit the canvas")));
                }
            }
        }
        Ok(())
    }
}

/// Columns and rows of the disc layout.
fn layout(count: usize) -> (usize, usize) {
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    (cols, rows)
}

/// Disc centres (pixel-centre coordinates) for `count` discs on the canvas.
pub fn disc_centres(count: usize, width: usize, height: usize) -> Vec<(f64, f64)> {
    let (cols, rows) = layout(count);
    let cell_w = width as f64 / cols as f64;
    let cell_h = height as f64 / rows as f64;
    (0..count)
        .map(|k| ((k % cols) as f64 * cell_w + cell_w / 2.0, (k / cols) as f64 * cell_h + cell_h / 2.0))
        .collect()
}

pub fn synthesize(spec: &SynthSpec) -> Result<ImageGrid> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    match &spec.kind {
        SynthKind::Circles {
            radii,
            intensities,
            background,
        } => {
            let centres = disc_centres(radii.len(), w, h);
            ImageGrid::from_fn(w, h, |x, y| {
                // Pixel (x, y) covers [x, x+1) x [y, y+1); test its centre.
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                centres
                    .iter()
                    .zip(radii.iter().zip(intensities))
                    .find(|((cx, cy), (r, _))| (px - cx).powi(2) + (py - cy).powi(2) <= *r * *r)
                    .map_or(*background, |(_, (_, &v))| v)
            })
        }
        SynthKind::Stripes { period, low, high } => {
            let half = period / 2;
            ImageGrid::from_fn(w, h, |x, _| if (x % period) < half { *low } else { *high })
        }
        SynthKind::Checker { cell, low, high } => {
            ImageGrid::from_fn(w, h, |x, y| if (x / cell + y / cell) % 2 == 0 { *low } else { *high })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_disc_matches_area() {
        let spec = SynthSpec {
            kind: SynthKind::Circles {
                radii: vec![32.0],
                intensities: vec![200.0],
                background: 50.0,
            },
            width: 256,
            height: 256,
            min_intensity: 1.0,
        };
        let img = synthesize(&spec).unwrap();
        assert_eq!(img.get(128, 128), 200.0);
        assert_eq!(img.get(0, 0), 50.0);
        assert_eq!(img.get(255, 255), 50.0);
        let inside = img.data().iter().filter(|&&v| v == 200.0).count() as f64;
        let area = std::f64::consts::PI * 32.0 * 32.0;
        // Lattice-point count differs from the area by less than one boundary ring.
        assert!((inside - area).abs() < 2.0 * std::f64::consts::PI * 32.0, "{inside} vs {area}");
        // Disc is symmetric about the canvas centre.
        for y in 0..256 {
            for x in 0..256 {
                assert_eq!(img.get(x, y), img.get(255 - x, y));
                assert_eq!(img.get(x, y), img.get(x, 255 - y));
            }
        }
    }

    #[test]
    fn default_circles_have_five_levels() {
        let img = synthesize(&Phantom::Circles.spec(256)).unwrap();
        let mut levels: Vec<f64> = img.data().to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert_eq!(levels, vec![40.0, 90.0, 140.0, 190.0, 240.0]);
        let centres = disc_centres(4, 256, 256);
        assert_eq!(centres, vec![(64.0, 64.0), (192.0, 64.0), (64.0, 192.0), (192.0, 192.0)]);
        assert_eq!(img.get(64, 64), 90.0);
        assert_eq!(img.get(192, 192), 240.0);
    }

    #[test]
    fn checker_period() {
        let spec = SynthSpec {
            kind: SynthKind::Checker {
                cell: 8,
                low: 30.0,
                high: 180.0,
            },
            width: 64,
            height: 48,
            min_intensity: 1.0,
        };
        let img = synthesize(&spec).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                if x + 8 < 64 {
                    assert_ne!(img.get(x, y), img.get(x + 8, y));
                }
                if x + 16 < 64 {
                    assert_eq!(img.get(x, y), img.get(x + 16, y));
                }
                if y + 16 < 48 {
                    assert_eq!(img.get(x, y), img.get(x, y + 16));
                }
                if y + 8 < 48 {
                    assert_ne!(img.get(x, y), img.get(x, y + 8));
                }
            }
        }
    }

    #[test]
    fn stripes_are_two_valued() {
        let spec = SynthSpec {
            kind: SynthKind::Stripes {
                period: 16,
                low: 60.0,
                high: 220.0,
            },
            width: 64,
            height: 8,
            min_intensity: 1.0,
        };
        let img = synthesize(&spec).unwrap();
        let lows = img.data().iter().filter(|&&v| v == 60.0).count();
        let highs = img.data().iter().filter(|&&v| v == 220.0).count();
        assert_eq!(lows + highs, 64 * 8);
        assert_eq!(lows, highs);
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = Phantom::Circles.spec(256);
        spec.kind = SynthKind::Circles {
            radii: vec![100.0],
            intensities: vec![200.0],
            background: 50.0,
        };
        // A single cell is 256 wide, so r = 100 fits but r = 129 does not.
        assert!(synthesize(&spec).is_ok());
        spec.kind = SynthKind::Circles {
            radii: vec![129.0],
            intensities: vec![200.0],
            background: 50.0,
        };
        assert!(synthesize(&spec).is_err());

        let mut spec = Phantom::Stripes.spec(64);
        spec.kind = SynthKind::Stripes {
            period: 16,
            low: 0.0,
            high: 220.0,
        };
        assert!(synthesize(&spec).is_err());

        let mut spec = Phantom::Checker.spec(64);
        spec.min_intensity = 0.5;
        assert!(synthesize(&spec).is_err());
    }

    #[test]
    fn outputs_respect_bounds() {
        for p in Phantom::ALL {
            let img = synthesize(&p.spec(128)).unwrap();
            assert!(img.min() >= 1.0 && img.max() <= 255.0);
            assert_eq!(img, synthesize(&p.spec(128)).unwrap());
        }
    }
}
