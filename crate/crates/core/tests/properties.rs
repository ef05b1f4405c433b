use despeckle::diffusivity::{edge_stopper, gray_indicator, shan_coefficient, tde_coefficient};
use despeckle::grid::{central_gradient, crop, divergence_of_flux, extend_replicate};
use despeckle::metrics::{psnr, ratio_image, read_surface_csv, ssim, write_surface_csv, SsimParams};
use despeckle::noise::{apply_multiplicative, sample_speckle_field};
use despeckle::smoothing::{build_kernel, convolve};
use despeckle::solver::{shan_step, tde_step, SolverState};
use despeckle::synth::{synthesize, SynthKind, SynthSpec};
use despeckle::{ImageGrid, NoiseSpec, ShanParams, StencilMode, TdeParams};
use proptest::prelude::*;

fn grid(w: usize, h: usize, lo: f64, hi: f64) -> impl Strategy<Value = ImageGrid> {
    prop::collection::vec(lo..hi, w * h).prop_map(move |d| ImageGrid::new(w, h, d).unwrap())
}

fn any_grid(max: usize, lo: f64, hi: f64) -> impl Strategy<Value = ImageGrid> {
    (3..=max, 3..=max).prop_flat_map(move |(w, h)| grid(w, h, lo, hi))
}

fn pair(max: usize, lo: f64, hi: f64) -> impl Strategy<Value = (ImageGrid, ImageGrid)> {
    (3..=max, 3..=max).prop_flat_map(move |(w, h)| (grid(w, h, lo, hi), grid(w, h, lo, hi)))
}

proptest! {
    #[test]
    fn conservative_divergence_sums_to_zero((g, img) in pair(12, 0.0, 1.0), scale in 1.0..255.0f64) {
        let img = img.map(|v| v * scale);
        let div = divergence_of_flux(&g, &img, StencilMode::Conservative).unwrap();
        let sum: f64 = div.data().iter().sum();
        let (w, h) = img.dims();
        prop_assert!(sum.abs() <= 1e-9 * (w * h) as f64 * img.max_abs(), "sum {}", sum);
    }

    #[test]
    fn gradient_of_constant_vanishes(w in 1..10usize, h in 1..10usize, c in -300.0..300.0f64) {
        let g = central_gradient(&ImageGrid::filled(w, h, c).unwrap());
        prop_assert!(g.gx.iter().chain(&g.gy).chain(&g.magnitude).all(|&v| v == 0.0));
    }

    #[test]
    fn extend_then_crop_is_identity(img in any_grid(9, -50.0, 50.0), r in 1..5usize) {
        let ext = extend_replicate(&img, r);
        prop_assert_eq!(ext.dims(), (img.width() + 2 * r, img.height() + 2 * r));
        prop_assert_eq!(crop(&ext, r).unwrap(), img);
    }

    #[test]
    fn convolution_is_linear(
        (x, y) in (grid(16, 16, -100.0, 100.0), grid(16, 16, -100.0, 100.0)),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        sigma in 0.2..3.0f64,
    ) {
        let k = build_kernel(sigma).unwrap();
        let combo = ImageGrid::new(16, 16, x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
        let lhs = convolve(&combo, &k);
        let (cx, cy) = (convolve(&x, &k), convolve(&y, &k));
        for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            prop_assert!((l - (a * p + b * q)).abs() < 1e-9);
        }
    }

    #[test]
    fn convolution_stays_within_input_range(img in any_grid(14, 1.0, 255.0), sigma in 0.2..4.0f64) {
        let out = convolve(&img, &build_kernel(sigma).unwrap());
        prop_assert!(out.max() <= img.max() + 1e-12);
        prop_assert!(out.min() >= img.min() - 1e-12);
    }

    #[test]
    fn gray_indicator_is_monotone(s1 in 0.0..=1.0f64, s2 in 0.0..=1.0f64, nu in 1.0..5.0f64) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let (blo, bhi) = (gray_indicator(lo, nu).unwrap(), gray_indicator(hi, nu).unwrap());
        prop_assert!(blo <= bhi);
        prop_assert!((0.0..=1.0).contains(&blo) && (0.0..=1.0).contains(&bhi));
    }

    #[test]
    fn edge_stopper_is_decreasing(a in 0.0..1e3f64, b in 0.0..1e3f64, k in 0.01..100.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (elo, ehi) = (edge_stopper(lo, k), edge_stopper(hi, k));
        prop_assert!(ehi <= elo);
        prop_assert!(ehi > 0.0 && elo <= 1.0);
    }

    #[test]
    fn coefficients_lie_in_unit_interval(
        img in any_grid(12, 1.0, 255.0),
        nu in 1.0..3.0f64,
        k in 0.5..4.0f64,
        beta in 0.5..3.0f64,
    ) {
        let g = tde_coefficient(&img, &TdeParams { nu, k_edge: k, ..TdeParams::default() }).unwrap();
        // Positive input means positive I_xi everywhere, hence g > 0.
        prop_assert!(g.data().iter().all(|&v| v > 0.0 && v <= 1.0));
        let g = shan_coefficient(&img, &ShanParams { nu, beta_exp: beta, ..ShanParams::default() }).unwrap();
        prop_assert!(g.data().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn ssim_is_symmetric_and_reflexive((x, y) in pair(16, 1.0, 255.0), windowed in any::<bool>()) {
        let p = if windowed { SsimParams::windowed() } else { SsimParams::default() };
        prop_assert!((ssim(&x, &y, &p).unwrap() - ssim(&y, &x, &p).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&x, &x, &p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_matches_two_pass_oracle((r, t) in pair(16, 1.0, 255.0)) {
        let n = r.len() as f64;
        let diffs: Vec<f64> = r.data().iter().zip(t.data()).map(|(a, b)| a - b).collect();
        let mse = diffs.iter().map(|d| d * d).sum::<f64>() / n;
        let peak = r.data().iter().copied().fold(f64::MIN, f64::max);
        let want = 10.0 * (peak * peak / mse).log10();
        prop_assert!((psnr(&r, &t).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn ratio_round_trips((degraded, restored) in pair(12, 1.0, 255.0)) {
        let ratio = ratio_image(&degraded, &restored).unwrap();
        for ((q, r), d) in ratio.data().iter().zip(restored.data()).zip(degraded.data()) {
            prop_assert!((q * r - d).abs() <= 1e-9 * d.abs());
        }
    }

    #[test]
    fn surface_csv_round_trips(img in any_grid(10, -1e3, 1e3)) {
        // Values representable in 9 significant digits survive exactly.
        let img = img.map(|v| format!("{v:.3e}").parse().unwrap());
        let mut buf = Vec::new();
        write_surface_csv(&img, &mut buf).unwrap();
        prop_assert_eq!(read_surface_csv(buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn speckle_is_positive_and_multiplication_exact(
        clean in any_grid(12, 1.0, 255.0),
        looks in 1..40u32,
        seed in any::<u64>(),
    ) {
        let eta = sample_speckle_field(NoiseSpec::new(looks, seed).unwrap(), clean.width(), clean.height()).unwrap();
        prop_assert!(eta.data().iter().all(|&v| v > 0.0 && v.is_finite()));
        let noisy = apply_multiplicative(&clean, &eta).unwrap();
        for ((j, i), e) in noisy.data().iter().zip(clean.data()).zip(eta.data()) {
            prop_assert_eq!(*j, i * e);
        }
    }

    #[test]
    fn synth_respects_bounds(
        low in 1.0..255.0f64,
        high in 1.0..255.0f64,
        cell in 1..9usize,
        period in 2..17usize,
    ) {
        for kind in [SynthKind::Checker { cell, low, high }, SynthKind::Stripes { period, low, high }] {
            let spec = SynthSpec { kind, width: 32, height: 24, min_intensity: 1.0 };
            let img = synthesize(&spec).unwrap();
            prop_assert!(img.min() >= low.min(high) && img.max() <= low.max(high));
            prop_assert_eq!(&img, &synthesize(&spec).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constant_is_an_exact_fixed_point(
        c in 1.0..255.0f64,
        gamma in 0.5..10.0f64,
        nu in 1.0..3.0f64,
        k in 0.5..4.0f64,
        beta in 0.5..3.0f64,
        central in any::<bool>(),
    ) {
        let img = ImageGrid::filled(7, 5, c).unwrap();
        let stencil = if central { StencilMode::PaperCentral } else { StencilMode::Conservative };
        let mut s = SolverState::new(img.clone()).unwrap();
        let mut p = SolverState::new(img.clone()).unwrap();
        for _ in 0..5 {
            s = tde_step(s, &TdeParams { gamma, nu, k_edge: k, stencil, ..TdeParams::default() }).unwrap();
            p = shan_step(p, &ShanParams { nu, beta_exp: beta, stencil, ..ShanParams::default() }).unwrap();
        }
        prop_assert_eq!(&s.current, &img);
        prop_assert_eq!(&p.current, &img);
    }

    #[test]
    fn mean_is_preserved_in_conservative_mode(img in grid(32, 32, 1.0, 255.0), gamma in 1.0..10.0f64) {
        let mean0 = img.mean();
        let mut t = SolverState::new(img.clone()).unwrap();
        let mut s = SolverState::new(img).unwrap();
        for _ in 0..50 {
            t = tde_step(t, &TdeParams { gamma, ..TdeParams::default() }).unwrap();
            s = shan_step(s, &ShanParams::default()).unwrap();
        }
        prop_assert!((t.current.mean() - mean0).abs() <= 1e-9 * mean0);
        prop_assert!((s.current.mean() - mean0).abs() <= 1e-9 * mean0);
    }
}
