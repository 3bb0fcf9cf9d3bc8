use proptest::prelude::*;
use rdp_audit::divergence::{
    normal_pdf, plugin_estimate, renyi_bernoulli, renyi_gaussian, renyi_numeric_oracle, GaussianLogRatio, Grid, Order,
};
use rdp_audit::mechanisms::{gaussian_pair_samples, GaussianMechanismSpec};

const ORDERS: [f64; 5] = [1.05, 1.25, 1.5, 2.0, 4.0];

fn ord(a: f64) -> Order {
    Order::new(a).unwrap()
}

#[test]
fn closed_forms_nonnegative_and_zero_on_identical_pairs() {
    for &a in &ORDERS {
        assert_eq!(renyi_gaussian(0.3, 0.3, 1.7, ord(a)).unwrap(), 0.0);
        assert!(renyi_bernoulli(0.4, 0.4, ord(a)).unwrap().value().abs() < 1e-15);
        for (mp, mq, s) in [(1.0, 0.0, 1.0), (-2.0, 0.5, 0.3), (0.0, 1e-3, 5.0)] {
            assert!(renyi_gaussian(mp, mq, s, ord(a)).unwrap() > 0.0);
        }
        for (p, q) in [(0.8, 0.2), (0.01, 0.5), (0.5, 0.51)] {
            assert!(renyi_bernoulli(p, q, ord(a)).unwrap().value() > 0.0);
        }
    }
}

#[test]
fn nondecreasing_in_order() {
    let gauss: Vec<f64> = ORDERS
        .iter()
        .map(|&a| renyi_gaussian(1.0, 0.0, 1.0, ord(a)).unwrap())
        .collect();
    let bern: Vec<f64> = ORDERS
        .iter()
        .map(|&a| renyi_bernoulli(0.8, 0.2, ord(a)).unwrap().value())
        .collect();
    for w in gauss.windows(2).chain(bern.windows(2)) {
        assert!(w[1] >= w[0], "{w:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gaussian_agrees_with_quadrature(
        mu_p in -1.0f64..1.0,
        mu_q in -1.0f64..1.0,
        sigma in 0.5f64..2.0,
        alpha in 1.05f64..4.0,
    ) {
        let closed = renyi_gaussian(mu_p, mu_q, sigma, ord(alpha)).unwrap();
        // The integrand p^α q^{1−α} is a Gaussian bump centred here.
        let centre = alpha * mu_p + (1.0 - alpha) * mu_q;
        let grid = Grid::Uniform { start: centre - 10.0 * sigma, end: centre + 10.0 * sigma, step: 1e-3 * sigma };
        let numeric = renyi_numeric_oracle(
            |x| normal_pdf(x, mu_p, sigma),
            |x| normal_pdf(x, mu_q, sigma),
            ord(alpha),
            &grid,
        )
        .unwrap()
        .value();
        prop_assert!((closed - numeric).abs() <= 1e-5, "{closed} vs {numeric}");
    }

    #[test]
    fn bernoulli_agrees_with_atom_sum(p in 0.01f64..0.99, q in 0.01f64..0.99, alpha in 1.05f64..4.0) {
        let closed = renyi_bernoulli(p, q, ord(alpha)).unwrap().value();
        let mass = |r: f64| move |x: f64| if x == 1.0 { r } else { 1.0 - r };
        let numeric = renyi_numeric_oracle(mass(p), mass(q), ord(alpha), &Grid::Atoms(vec![0.0, 1.0]))
            .unwrap()
            .value();
        prop_assert!((closed - numeric).abs() <= 1e-5, "{closed} vs {numeric}");
    }
}

#[test]
fn plugin_error_shrinks_as_n_doubles() {
    let spec = GaussianMechanismSpec::new(0.0, 1.0, 1.0).unwrap();
    let truth = spec.true_divergence(ord(2.0)).unwrap();
    let oracle = GaussianLogRatio {
        mu_p: 1.0,
        mu_q: 0.0,
        sigma: 1.0,
    };
    let seeds = 201;
    let mut previous = f64::INFINITY;
    let mut n = 1000;
    while n <= 1_024_000 {
        let mut errors: Vec<f64> = (0..seeds)
            .map(|s| {
                let (q, _) = gaussian_pair_samples(&spec, n, 500 + s).unwrap();
                (plugin_estimate(&q, &oracle, ord(2.0)).unwrap().d_hat - truth).abs()
            })
            .collect();
        errors.sort_by(f64::total_cmp);
        let median = errors[seeds as usize / 2];
        assert!(
            median < previous,
            "n = {n}: median error {median} did not fall below {previous}"
        );
        previous = median;
        n *= 2;
    }
}
