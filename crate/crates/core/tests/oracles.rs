use ddnoise::bounds::FlashScheme;
use ddnoise::coeffs::CoeffSeq;
use ddnoise::divergence::{
    flash_densities, gaussian_kl, mixture_kl_mc, mixture_kl_quadrature_1d, mixture_slope_mc,
    mixture_slope_quadrature_1d, DiagGaussian, TwoComponentMixture,
};
use ddnoise::quad;
use proptest::prelude::*;

struct Row {
    on: (f64, f64),
    off: (f64, f64),
    delta: f64,
    slope: bool,
    value: f64,
}

fn fixture() -> Vec<Row> {
    include_str!("fixtures/mixture_kl_oracle.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let n = |i: usize| f[i].parse::<f64>().unwrap();
            Row {
                on: (n(0), n(1)),
                off: (n(2), n(3)),
                delta: n(4),
                slope: f[5] == "slope",
                value: n(6),
            }
        })
        .collect()
}

fn mixture(r: &Row) -> TwoComponentMixture {
    TwoComponentMixture::new(
        r.delta,
        DiagGaussian::new(vec![r.on.0], vec![r.on.1]).unwrap(),
        DiagGaussian::new(vec![r.off.0], vec![r.off.1]).unwrap(),
    )
    .unwrap()
}

#[test]
fn quadrature_reproduces_high_precision_table() {
    for r in fixture() {
        let mix = mixture(&r);
        let slope = mixture_slope_quadrature_1d(&mix, 1e-13 * r.value / r.delta.min(1.0)).unwrap();
        let got = if r.slope { slope } else { slope * r.delta };
        let rel = (got - r.value).abs() / r.value;
        assert!(
            rel < 1e-9,
            "δ={} on={:?}: {got} vs {} (rel {rel:e})",
            r.delta,
            r.on,
            r.value
        );
        if !r.slope {
            let direct = mixture_kl_quadrature_1d(&mix, 1e-13 * r.value).unwrap();
            assert!((direct - r.value).abs() / r.value < 1e-9);
        }
    }
}

#[test]
fn monte_carlo_agrees_with_table() {
    for (i, r) in fixture().iter().enumerate() {
        let mix = mixture(r);
        let est = mixture_slope_mc(&mix, 200_000, 1000 + i as u64).unwrap();
        let target = if r.slope { r.value } else { r.value / r.delta };
        assert!(
            (est.slope - target).abs() <= 3.0 * est.std_error,
            "δ={} on={:?}: {} ± {} vs {target}",
            r.delta,
            r.on,
            est.slope,
            est.std_error
        );
    }
}

#[test]
fn binary_input_information() {
    // I(X;Y) for X ∈ {0, 2} equiprobable, unit-variance Gaussian noise.
    let mix = mixture(&fixture()[0]);
    let kl = gaussian_kl(mix.on(), mix.off()).unwrap();
    let mi = 0.5 * kl - mixture_kl_quadrature_1d(&mix, 1e-14).unwrap();
    assert!((mi - 0.336_830_820_346_832).abs() < 1e-12, "{mi}");
}

/// `D(mix‖off)` for a two-dimensional mixture by nested quadrature.
fn mixture_kl_2d(mix: &TwoComponentMixture) -> f64 {
    let window = |i: usize| {
        let (a, b) = (mix.on(), mix.off());
        let lo =
            (a.mean()[i] - 12.0 * a.var()[i].sqrt()).min(b.mean()[i] - 12.0 * b.var()[i].sqrt());
        let hi =
            (a.mean()[i] + 12.0 * a.var()[i].sqrt()).max(b.mean()[i] + 12.0 * b.var()[i].sqrt());
        (lo, hi)
    };
    let (a0, b0) = window(0);
    let (a1, b1) = window(1);
    let f = |y: [f64; 2]| {
        let lm = mix.log_density(&y);
        lm.exp() * (lm - mix.off().log_density(&y))
    };
    quad::integrate(
        |y0| quad::integrate(|y1| f([y0, y1]), a1, b1, 1e-11),
        a0,
        b0,
        1e-10,
    )
}

#[test]
fn two_dimensional_flash_block() {
    let g = CoeffSeq::geometric(0.5).unwrap();
    for (x, delta) in [(9.0, 0.05), (16.0, 0.2), (4.0, 0.5)] {
        let scheme = FlashScheme::new(2, x, delta).unwrap();
        let (on, off) = flash_densities(&scheme, 1.0, &g, &[]).unwrap();
        let mix = TwoComponentMixture::new(delta, on, off).unwrap();
        let oracle = mixture_kl_2d(&mix);
        let est = mixture_kl_mc(&mix, 200_000, 42).unwrap();
        assert!(
            (est.value - oracle).abs() <= 3.0 * est.std_error,
            "ξ²={x} δ={delta}: {est:?} vs {oracle}"
        );
    }
}

fn diag(dim: usize) -> impl Strategy<Value = DiagGaussian> {
    (
        prop::collection::vec(-3.0f64..3.0, dim),
        prop::collection::vec(0.1f64..5.0, dim),
    )
        .prop_map(|(m, v)| DiagGaussian::new(m, v).unwrap())
}

fn pair() -> impl Strategy<Value = (DiagGaussian, DiagGaussian)> {
    (1usize..5).prop_flat_map(|d| (diag(d), diag(d)))
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_on_self((p, q) in pair()) {
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= 0.0);
        prop_assert_eq!(gaussian_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_adds_over_coordinates((p, q) in pair()) {
        let total = gaussian_kl(&p, &q).unwrap();
        let parts: f64 = (0..p.dim())
            .map(|i| {
                let pi = DiagGaussian::new(vec![p.mean()[i]], vec![p.var()[i]]).unwrap();
                let qi = DiagGaussian::new(vec![q.mean()[i]], vec![q.var()[i]]).unwrap();
                gaussian_kl(&pi, &qi).unwrap()
            })
            .sum();
        prop_assert!((total - parts).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn mixture_penalty_is_below_convex_bound(m in 0.5f64..4.0, v in 0.5f64..3.0, ld in -12.0f64..0.0, seed in 0u64..1000) {
        // D(δ·on + (1−δ)·off ‖ off) ≤ δ·D(on‖off) by convexity.
        let on = DiagGaussian::new(vec![m], vec![v]).unwrap();
        let off = DiagGaussian::new(vec![0.0], vec![1.0]).unwrap();
        let kl = gaussian_kl(&on, &off).unwrap();
        let mix = TwoComponentMixture::new(10f64.powf(ld), on, off).unwrap();
        let est = mixture_slope_mc(&mix, 4000, seed).unwrap();
        prop_assert!(est.slope >= 0.0);
        prop_assert!(est.slope <= kl + 3.0 * est.std_error + 1e-12);
        let q = mixture_slope_quadrature_1d(&mix, 1e-10).unwrap();
        prop_assert!(q >= 0.0 && q <= kl * (1.0 + 1e-9));
    }
}
