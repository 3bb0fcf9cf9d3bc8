//! Conversions between RDP, (ε, δ)-DP and μ-GDP, plus RDP group privacy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `(α, ε_α)`-RDP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rdp {
    pub alpha: f64,
    pub eps_alpha: f64,
}

/// `(ε, δ)`-DP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxDp {
    pub eps: f64,
    pub delta: f64,
}

/// `μ`-GDP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gdp {
    pub mu: f64,
}

impl Rdp {
    pub fn new(alpha: f64, eps_alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::invalid(
                "alpha",
                format!("RDP order must be finite and > 1, got {alpha}"),
            ));
        }
        if !(eps_alpha >= 0.0 && eps_alpha.is_finite()) {
            return Err(Error::invalid(
                "eps_alpha",
                format!("must be finite and >= 0, got {eps_alpha}"),
            ));
        }
        Ok(Rdp { alpha, eps_alpha })
    }
}

impl ApproxDp {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::invalid("eps", format!("must be finite and >= 0, got {eps}")));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::invalid("delta", format!("must lie in [0, 1], got {delta}")));
        }
        Ok(ApproxDp { eps, delta })
    }
}

impl Gdp {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::invalid("mu", format!("must be finite and >= 0, got {mu}")));
        }
        Ok(Gdp { mu })
    }
}

/// A privacy claim in any of the three accounting languages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrivacyGuarantee {
    Rdp(Rdp),
    ApproxDp(ApproxDp),
    Gdp(Gdp),
}

impl PrivacyGuarantee {
    /// The `ε_α` this claim implies at order `alpha`.
    ///
    /// RDP claims transfer to any lower order (`D_α` is nondecreasing in α).
    /// GDP claims convert exactly. (ε, δ)-DP claims are first mapped to the
    /// μ-GDP curve through that point and then to RDP, the chain used to
    /// compare DP-SGD claims across languages.
    pub fn rdp_epsilon_at(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 1.0) {
            return Err(Error::invalid("alpha", format!("audit order must be > 1, got {alpha}")));
        }
        match *self {
            PrivacyGuarantee::Rdp(r) if alpha <= r.alpha => Ok(r.eps_alpha),
            PrivacyGuarantee::Rdp(r) => Err(Error::Precondition(format!(
                "an RDP claim at order {} says nothing about order {alpha}; audit at an order <= {}",
                r.alpha, r.alpha
            ))),
            PrivacyGuarantee::Gdp(g) => Ok(gdp_to_rdp(g, alpha)?.eps_alpha),
            PrivacyGuarantee::ApproxDp(d) => {
                let g = approx_dp_to_gdp(d.eps, d.delta)?;
                Ok(gdp_to_rdp(g, alpha)?.eps_alpha)
            }
        }
    }
}

impl fmt::Display for PrivacyGuarantee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrivacyGuarantee::Rdp(r) => write!(f, "rdp:{},{}", r.alpha, r.eps_alpha),
            PrivacyGuarantee::ApproxDp(d) => write!(f, "dp:{},{}", d.eps, d.delta),
            PrivacyGuarantee::Gdp(g) => write!(f, "gdp:{}", g.mu),
        }
    }
}

impl FromStr for PrivacyGuarantee {
    type Err = Error;

    /// Parses `rdp:ALPHA,EPS`, `dp:EPS,DELTA` or `gdp:MU`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::invalid(
                "claim",
                format!("expected rdp:ALPHA,EPS | dp:EPS,DELTA | gdp:MU, got `{s}`"),
            )
        };
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match (kind.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("rdp", &[a, e]) => Ok(PrivacyGuarantee::Rdp(Rdp::new(a, e)?)),
            ("dp", &[e, d]) => Ok(PrivacyGuarantee::ApproxDp(ApproxDp::new(e, d)?)),
            ("gdp", &[m]) => Ok(PrivacyGuarantee::Gdp(Gdp::new(m)?)),
            _ => Err(bad()),
        }
    }
}

/// Standard normal CDF, `Φ(x) = erfc(−x/√2) / 2`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `log Φ(x)`, accurate in the far lower tail where `Φ` underflows.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return normal_cdf(x).ln();
    }
    // Mills-ratio asymptotic series.
    let x2 = x * x;
    -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)).ln()
}

/// RDP to (ε, δ)-DP: `ε = ε_α + log(1/δ)/(α − 1)`.
pub fn rdp_to_approx_dp(g: Rdp, delta: f64) -> Result<ApproxDp> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    ApproxDp::new(g.eps_alpha + (1.0 / delta).ln() / (g.alpha - 1.0), delta)
}

/// μ-GDP implies `(α, μ²α/2)`-RDP.
pub fn gdp_to_rdp(g: Gdp, alpha: f64) -> Result<Rdp> {
    Rdp::new(alpha, 0.5 * g.mu * g.mu * alpha)
}

/// The δ(ε) curve of μ-GDP: `Φ(−ε/μ + μ/2) − e^ε Φ(−ε/μ − μ/2)`.
pub fn gdp_to_approx_dp_delta(g: Gdp, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::invalid("eps", format!("must be >= 0, got {eps}")));
    }
    if g.mu == 0.0 {
        return Ok(0.0);
    }
    if eps.is_infinite() {
        return Ok(0.0);
    }
    let mu = g.mu;
    let first = normal_cdf(-eps / mu + mu / 2.0);
    let second = (eps + log_normal_cdf(-eps / mu - mu / 2.0)).exp();
    Ok((first - second).max(0.0))
}

/// Smallest ε with `δ(ε) ≤ delta` on the μ-GDP curve (the curve decreases in ε).
pub fn gdp_to_approx_dp_eps(g: Gdp, delta: f64) -> Result<ApproxDp> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let delta_at = |eps: f64| gdp_to_approx_dp_delta(g, eps).expect("eps >= 0");
    if delta_at(0.0) <= delta {
        return ApproxDp::new(0.0, delta);
    }
    let mut hi = 1.0;
    while delta_at(hi) > delta {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Infeasible(format!(
                "no eps <= 1e6 reaches delta = {delta} for mu = {}",
                g.mu
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if delta_at(mid) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ApproxDp::new(hi, delta)
}

const MU_BRACKET: (f64, f64) = (1e-6, 100.0);

/// Inverts [`gdp_to_approx_dp_delta`] in μ by bisection on `[1e-6, 100]`.
pub fn approx_dp_to_gdp(eps: f64, delta: f64) -> Result<Gdp> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be finite and >= 0, got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    let delta_at = |mu: f64| gdp_to_approx_dp_delta(Gdp { mu }, eps).expect("valid eps");
    let (mut lo, mut hi) = MU_BRACKET;
    if delta_at(lo) > delta || delta_at(hi) < delta {
        return Err(Error::Infeasible(format!(
            "no mu in [{lo}, {hi}] has delta({eps}) = {delta}"
        )));
    }
    // δ(ε; μ) is increasing in μ.
    while hi - lo > 1e-13 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if delta_at(mid) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Gdp::new(0.5 * (lo + hi))
}

/// Group privacy for `c` doublings: `(α, ε)`-RDP gives `(α/2^c, 3^c ε)`-RDP
/// for groups of size `2^c`, provided `α ≥ 2^{c+1}`.
pub fn group_privacy(g: Rdp, c: u32) -> Result<Rdp> {
    let required = 2f64.powi(c as i32 + 1);
    if c > 0 && g.alpha < required {
        return Err(Error::Precondition(format!(
            "group privacy with c = {c} needs alpha >= {required}, got {}",
            g.alpha
        )));
    }
    if c == 0 {
        return Ok(g);
    }
    Rdp::new(g.alpha / 2f64.powi(c as i32), 3f64.powi(c as i32) * g.eps_alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        // High-precision references (mpmath).
        assert!((normal_cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-12);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-15);
        assert!((normal_cdf(0.5) - normal_cdf(-0.5) - 0.382_924_922_548_026).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_branches_agree() {
        let near = log_normal_cdf(-29.999);
        let far = log_normal_cdf(-30.001);
        assert!((near - far).abs() < 0.07);
        assert!(log_normal_cdf(-40.0).is_finite());
        assert!((log_normal_cdf(-5.0) - normal_cdf(-5.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn rdp_to_dp_examples() {
        let d = rdp_to_approx_dp(Rdp::new(2.0, 0.0).unwrap(), (-1f64).exp()).unwrap();
        assert!((d.eps - 1.0).abs() < 1e-12);
        let d = rdp_to_approx_dp(Rdp::new(2.0, 2.0).unwrap(), 1e-5).unwrap();
        assert!((d.eps - (2.0 + 1e5f64.ln())).abs() < 1e-12);
        assert!((d.eps - 13.513).abs() < 1e-3);
        let d = rdp_to_approx_dp(Rdp::new(3.0, 0.7).unwrap(), 1.0 - 1e-12).unwrap();
        assert!((d.eps - 0.7).abs() < 1e-9);
        assert!(rdp_to_approx_dp(Rdp::new(2.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn gdp_to_rdp_examples() {
        let r = gdp_to_rdp(Gdp::new(2f64.sqrt()).unwrap(), 2.0).unwrap();
        assert!((r.eps_alpha - 2.0).abs() < 1e-12);
        let r = gdp_to_rdp(Gdp::new(2f64.sqrt()).unwrap(), 1.25).unwrap();
        assert!((r.eps_alpha - 1.25).abs() < 1e-12);
        assert_eq!(gdp_to_rdp(Gdp::new(0.0).unwrap(), 2.0).unwrap().eps_alpha, 0.0);
    }

    #[test]
    fn gdp_delta_examples() {
        let d = gdp_to_approx_dp_delta(Gdp::new(1.0).unwrap(), 0.0).unwrap();
        assert!((d - 0.382_924_922_548_026).abs() < 1e-12);
        let d = gdp_to_approx_dp_delta(Gdp::new(2.0).unwrap(), 10.0).unwrap();
        assert!((d - 1e-5).abs() < 1e-6, "{d}");
        assert_eq!(gdp_to_approx_dp_delta(Gdp::new(0.0).unwrap(), 1.0).unwrap(), 0.0);
        assert!(gdp_to_approx_dp_delta(Gdp::new(1.0).unwrap(), 200.0).unwrap() < 1e-300);
    }

    #[test]
    fn epsilon_inversion() {
        for mu in [0.5, 1.0, 2f64.sqrt(), 2.0, 10f64.sqrt()] {
            let dp = gdp_to_approx_dp_eps(Gdp::new(mu).unwrap(), 1e-5).unwrap();
            let back = gdp_to_approx_dp_delta(Gdp::new(mu).unwrap(), dp.eps).unwrap();
            assert!((back - 1e-5).abs() < 1e-12);
        }
        assert_eq!(gdp_to_approx_dp_eps(Gdp::new(0.0).unwrap(), 1e-5).unwrap().eps, 0.0);
        let e = gdp_to_approx_dp_eps(Gdp::new(2.0).unwrap(), 1e-5).unwrap().eps;
        assert!((e - 10.0).abs() < 0.05, "{e}");
    }

    #[test]
    fn inversion_round_trip() {
        let delta = gdp_to_approx_dp_delta(Gdp::new(1.3).unwrap(), 3.0).unwrap();
        let mu = approx_dp_to_gdp(3.0, delta).unwrap().mu;
        assert!((mu - 1.3).abs() < 1e-6);
        assert!((approx_dp_to_gdp(10.0, 1e-5).unwrap().mu - 2.0).abs() < 0.01);
        assert!((approx_dp_to_gdp(2.0, 1e-5).unwrap().mu - 0.5).abs() < 0.01);
    }

    #[test]
    fn inversion_reports_infeasible() {
        // δ(0; μ) = 2Φ(μ/2) − 1 ≈ 0.4μ near zero, so δ = 1e-9 needs μ below the bracket.
        assert!(matches!(approx_dp_to_gdp(0.0, 1e-9), Err(Error::Infeasible(_))));
    }

    #[test]
    fn group_privacy_examples() {
        let g = Rdp::new(8.0, 1.0).unwrap();
        assert_eq!(group_privacy(g, 0).unwrap(), g);
        assert_eq!(
            group_privacy(g, 2).unwrap(),
            Rdp {
                alpha: 2.0,
                eps_alpha: 9.0
            }
        );
        let err = group_privacy(Rdp::new(4.0, 1.0).unwrap(), 2).unwrap_err();
        assert!(err.to_string().contains("alpha >= 8"));
    }

    #[test]
    fn claim_parsing() {
        let c: PrivacyGuarantee = "rdp:2,0.25".parse().unwrap();
        assert_eq!(
            c,
            PrivacyGuarantee::Rdp(Rdp {
                alpha: 2.0,
                eps_alpha: 0.25
            })
        );
        assert_eq!(c.to_string(), "rdp:2,0.25");
        assert!("gdp:1.4142".parse::<PrivacyGuarantee>().is_ok());
        assert!("dp:10,1e-5".parse::<PrivacyGuarantee>().is_ok());
        assert!("rdp:1,0.2".parse::<PrivacyGuarantee>().is_err());
        assert!("gdp:-1".parse::<PrivacyGuarantee>().is_err());
        assert!("foo:1".parse::<PrivacyGuarantee>().is_err());
        assert!("rdp:2".parse::<PrivacyGuarantee>().is_err());
    }

    #[test]
    fn claims_convert_to_audit_order() {
        let rdp: PrivacyGuarantee = "rdp:2,1.0".parse().unwrap();
        assert_eq!(rdp.rdp_epsilon_at(2.0).unwrap(), 1.0);
        assert_eq!(rdp.rdp_epsilon_at(1.25).unwrap(), 1.0);
        assert!(rdp.rdp_epsilon_at(3.0).is_err());
        let gdp: PrivacyGuarantee = "gdp:1".parse().unwrap();
        assert!((gdp.rdp_epsilon_at(2.0).unwrap() - 1.0).abs() < 1e-12);
        let dp: PrivacyGuarantee = "dp:10,1e-5".parse().unwrap();
        assert!((dp.rdp_epsilon_at(2.0).unwrap() - 4.0).abs() < 0.05);
    }
}
