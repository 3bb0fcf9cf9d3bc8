use proptest::prelude::*;
use rdp_audit::accounting::{
    approx_dp_to_gdp, gdp_to_approx_dp_delta, gdp_to_approx_dp_eps, gdp_to_rdp, group_privacy, rdp_to_approx_dp, Gdp,
    Rdp,
};

const MUS: [f64; 5] = [0.5, 1.0, std::f64::consts::SQRT_2, 2.0, 3.1622776601683795];

#[test]
fn rdp_route_is_looser_than_direct_gdp_curve() {
    for mu in MUS {
        let g = Gdp::new(mu).unwrap();
        let via_rdp = rdp_to_approx_dp(gdp_to_rdp(g, 2.0).unwrap(), 1e-5).unwrap().eps;
        let direct = gdp_to_approx_dp_eps(g, 1e-5).unwrap().eps;
        assert!(via_rdp >= direct, "mu {mu}: {via_rdp} < {direct}");
    }
}

#[test]
fn inversion_is_identity_on_grid() {
    let eps_values = [0.5, 1.0, 2.0, 5.0, 10.0];
    for i in 0..10 {
        let mu = 0.3 + 0.3 * i as f64;
        for &eps in &eps_values {
            let delta = gdp_to_approx_dp_delta(Gdp::new(mu).unwrap(), eps).unwrap();
            let back = approx_dp_to_gdp(eps, delta).unwrap().mu;
            assert!((back - mu).abs() <= 1e-6, "mu {mu}, eps {eps}: got {back}");
        }
    }
}

proptest! {
    #[test]
    fn conversions_monotone_in_privacy_loss(a in 0.01f64..5.0, b in 0.01f64..5.0, alpha in 1.01f64..16.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let rdp = |mu: f64| gdp_to_rdp(Gdp::new(mu).unwrap(), alpha).unwrap().eps_alpha;
        prop_assert!(rdp(lo) <= rdp(hi));

        let dp = |eps: f64| rdp_to_approx_dp(Rdp::new(alpha, eps).unwrap(), 1e-5).unwrap().eps;
        prop_assert!(dp(lo) <= dp(hi));

        let delta = |mu: f64| gdp_to_approx_dp_delta(Gdp::new(mu).unwrap(), 1.0).unwrap();
        prop_assert!(delta(lo) <= delta(hi));

        let group = |eps: f64| group_privacy(Rdp::new(16.0, eps).unwrap(), 2).unwrap().eps_alpha;
        prop_assert!(group(lo) <= group(hi));
    }

    #[test]
    fn mu_from_dp_nondecreasing_in_eps(a in 0.5f64..15.0, b in 0.5f64..15.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mu = |eps: f64| approx_dp_to_gdp(eps, 1e-5).unwrap().mu;
        prop_assert!(mu(lo) <= mu(hi) + 1e-12);
    }
}
