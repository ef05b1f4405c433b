//! Brute-force reference evaluations shared by the test targets.

pub fn at(img: &[f64], w: usize, h: usize, x: isize, y: isize) -> f64 {
    let x = x.clamp(0, w as isize - 1) as usize;
    let y = y.clamp(0, h as isize - 1) as usize;
    img[y * w + x]
}

/// Dense 2D Gaussian convolution straight from the definition.
pub fn dense_smooth(img: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = ((3.0 * sigma).ceil() as isize).max(1);
    let weight = |dx: isize, dy: isize| (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            total += weight(dx, dy);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    acc += weight(dx, dy) * at(img, w, h, x + dx, y + dy);
                }
            }
            out[y as usize * w + x as usize] = acc / total;
        }
    }
    out
}

/// Scalar evaluation of the diffusivity and the flux-form divergence,
/// written out per pixel without any library helper.
pub fn brute_force_divergence(img: &[f64], w: usize, h: usize, g_of: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let sm = dense_smooth(img, w, h, 1.0);
    let m = sm.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut g = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(&sm, w, h, x + 1, y) - at(&sm, w, h, x - 1, y)) / 2.0;
            let gy = (at(&sm, w, h, x, y + 1) - at(&sm, w, h, x, y - 1)) / 2.0;
            let i = y as usize * w + x as usize;
            g[i] = g_of(sm[i].abs() / m, (gx * gx + gy * gy).sqrt());
        }
    }
    let mut div = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let mut acc = 0.0;
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x + dx, y + dy);
                // Ghost neighbours replicate the pixel, so their flux is zero.
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                acc += 0.5 * (g[i] + g[j]) * (img[j] - img[i]);
            }
            div[i] = acc;
        }
    }
    div
}
