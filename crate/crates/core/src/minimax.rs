//! The hard family behind the sample-complexity lower bound, made concrete.
//!
//! On `Ω = {1, …, d}` with `P` uniform, each balanced sign vector `u` defines
//! `Q_u(i) = (1 + δ u_i)/d` and a critic `T_{θ^u}(i) = τ u_i` (parameters
//! `θ^u = u`). The population objective of critic `v` under `Q_u` has the
//! closed form
//!
//! ```text
//! V_u(θ^v) = log(cosh a + δ sinh a · ρ(u, v))/(α−1) − log(cosh b)/α,
//! a = (α−1)τ,  b = ατ,  ρ(u, v) = ⟨u, v⟩/d.
//! ```
//!
//! Codewords are kept pairwise at Hamming distance in `[d/4, 3d/4]`, which
//! keeps `ρ ≤ 1/2` off the diagonal and separates the hypotheses.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::divergence::Order;
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.5;
const PACKING_STREAM: u64 = 0x9ac4;

pub type Codeword = Vec<i8>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingInstance {
    pub d: usize,
    pub codewords: Vec<Codeword>,
    pub delta: f64,
    pub tau: f64,
}

pub fn hamming(u: &[i8], v: &[i8]) -> usize {
    u.iter().zip(v).filter(|(a, b)| a != b).count()
}

pub fn correlation(u: &[i8], v: &[i8]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| (a * b) as f64).sum::<f64>() / u.len() as f64
}

fn in_window(d: usize, dist: usize) -> bool {
    d <= 4 * dist && 4 * dist <= 3 * d
}

fn check_codeword(u: &[i8], d: usize) -> Result<()> {
    if u.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: u.len(),
        });
    }
    if u.iter().any(|&x| x != 1 && x != -1) {
        return Err(Error::invalid("codeword", "entries must be +1 or -1"));
    }
    if u.iter().map(|&x| x as i64).sum::<i64>() != 0 {
        return Err(Error::invalid("codeword", "must be balanced (sum to zero)"));
    }
    Ok(())
}

fn check_params(alpha: f64, tau: f64, delta: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", format!("must be finite and > 1, got {alpha}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("tau", format!("must lie in (0, 1], got {tau}")));
    }
    if !(0.0..=0.5).contains(&delta) {
        return Err(Error::invalid("delta", format!("must lie in [0, 1/2], got {delta}")));
    }
    Ok(())
}

/// Greedy randomized packing: draw balanced vectors and keep each one whose
/// distance to every kept vector lies in `[d/4, 3d/4]`.
///
/// Stops at `target_count` codewords or after `50·target_count + 1000`
/// consecutive rejections.
pub fn build_balanced_packing(d: usize, target_count: usize, seed: u64) -> Result<Vec<Codeword>> {
    if d < 8 || !d.is_multiple_of(2) {
        return Err(Error::invalid("d", format!("must be even and >= 8, got {d}")));
    }
    if target_count < 2 {
        return Err(Error::invalid("target_count", "must be >= 2"));
    }
    let mut rng = rng::stream(seed, &[PACKING_STREAM]);
    let stall = 50 * target_count + 1000;
    let mut base: Codeword = (0..d).map(|i| if i < d / 2 { 1 } else { -1 }).collect();
    let mut kept: Vec<Codeword> = Vec::new();
    let mut misses = 0;
    let mut attempts = 0;
    while kept.len() < target_count && misses < stall {
        attempts += 1;
        base.shuffle(&mut rng);
        if kept.iter().all(|k| in_window(d, hamming(k, &base))) {
            kept.push(base.clone());
            misses = 0;
        } else {
            misses += 1;
        }
    }
    if kept.len() < 2 {
        return Err(Error::Construction {
            attempts,
            reason: format!("found {} codeword(s) in dimension {d}", kept.len()),
        });
    }
    Ok(kept)
}

/// Closed-form `V_{P,Q_u}(θ^v)`.
pub fn population_dv_value(u: &[i8], v: &[i8], alpha: f64, tau: f64, delta: f64) -> Result<f64> {
    check_params(alpha, tau, delta)?;
    check_codeword(u, u.len())?;
    check_codeword(v, u.len())?;
    let a = (alpha - 1.0) * tau;
    let b = alpha * tau;
    let arg = a.cosh() + delta * a.sinh() * correlation(u, v);
    if !(arg > 0.0) {
        return Err(Error::Precondition(format!("log argument {arg} is not positive")));
    }
    Ok(arg.ln() / (alpha - 1.0) - b.cosh().ln() / alpha)
}

/// `KL(Q_u ‖ Q_v) = (2mδ/d) log((1+δ)/(1−δ))` with `m = d_H(u, v)/2`.
pub fn hypothesis_kl(u: &[i8], v: &[i8], delta: f64, d: usize) -> Result<f64> {
    check_codeword(u, d)?;
    check_codeword(v, d)?;
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::invalid("delta", format!("must lie in [0, 1), got {delta}")));
    }
    let m = hamming(u, v) as f64 / 2.0;
    Ok(2.0 * m * delta / d as f64 * ((1.0 + delta) / (1.0 - delta)).ln())
}

fn f_value(alpha: f64, tau: f64, delta: f64, r: f64) -> f64 {
    let a = (alpha - 1.0) * tau;
    (a.cosh() + delta * a.sinh() * r).ln() / (alpha - 1.0)
}

/// `F(1) − F(1/2)`, the least margin by which the true critic beats any
/// other codeword's critic.
pub fn separation_gap(alpha: f64, tau: f64, delta: f64) -> Result<f64> {
    check_params(alpha, tau, delta)?;
    let gap = f_value(alpha, tau, delta, 1.0) - f_value(alpha, tau, delta, 0.5);
    if delta > 0.0 && !(gap > 0.0) {
        return Err(Error::Precondition(format!("separation gap {gap} is not positive")));
    }
    Ok(gap)
}

/// `c_α = min F′(r)/δ` over a grid of `r ∈ [−1, 1]` and `δ ∈ (0, 1/2]`.
pub fn slope_constant(alpha: f64, tau: f64) -> Result<f64> {
    check_params(alpha, tau, 0.5)?;
    let a = (alpha - 1.0) * tau;
    let mut best = f64::INFINITY;
    for j in 1..=50 {
        let delta = 0.5 * j as f64 / 50.0;
        for i in 0..=200 {
            let r = -1.0 + 2.0 * i as f64 / 200.0;
            let slope = a.sinh() / ((alpha - 1.0) * (a.cosh() + delta * a.sinh() * r));
            best = best.min(slope);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerCheck {
    pub d: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub tau: f64,
    pub n: u64,
    pub c_alpha: f64,
    pub delta: f64,
    pub codewords: usize,
    pub log_packing_size: f64,
    pub max_pair_kl: f64,
    /// `n · max KL`, bounding the mutual information between the index and
    /// the sample.
    pub mutual_information_bound: f64,
    /// `log|𝒰|/d` of the packing actually built.
    pub c_gv: f64,
    /// `½ c_GV d`.
    pub fano_threshold: f64,
    /// `d/ε²`, with the unknown constant set to 1.
    pub sample_floor: f64,
    pub fano_binding: bool,
    pub separation_gap: f64,
}

/// Assembles the hard instance for `(d, ε)` with `δ = 8ε/c_α` and reports
/// whether `n` samples keep Fano's bound binding.
pub fn planner_consistency_check(
    d: usize,
    epsilon: f64,
    n: u64,
    order: Order,
    tau: f64,
    target_count: usize,
    seed: u64,
) -> Result<PlannerCheck> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(
            "epsilon",
            format!("must be finite and > 0, got {epsilon}"),
        ));
    }
    let alpha = order.alpha();
    let c_alpha = slope_constant(alpha, tau)?;
    let delta = 8.0 * epsilon / c_alpha;
    if delta > 0.5 {
        return Err(Error::Infeasible(format!(
            "delta = 8 eps / c_alpha = {delta:.4} exceeds 1/2; use eps <= {:.4e}",
            c_alpha / 16.0
        )));
    }
    let codewords = build_balanced_packing(d, target_count, seed)?;
    let mut max_pair_kl: f64 = 0.0;
    for (i, u) in codewords.iter().enumerate() {
        for v in &codewords[i + 1..] {
            max_pair_kl = max_pair_kl.max(hypothesis_kl(u, v, delta, d)?.max(hypothesis_kl(v, u, delta, d)?));
        }
    }
    let log_packing_size = (codewords.len() as f64).ln();
    let c_gv = log_packing_size / d as f64;
    let fano_threshold = 0.5 * c_gv * d as f64;
    let mutual_information_bound = n as f64 * max_pair_kl;
    Ok(PlannerCheck {
        d,
        epsilon,
        alpha,
        tau,
        n,
        c_alpha,
        delta,
        codewords: codewords.len(),
        log_packing_size,
        max_pair_kl,
        mutual_information_bound,
        c_gv,
        fano_threshold,
        sample_floor: d as f64 / (epsilon * epsilon),
        fano_binding: mutual_information_bound <= fano_threshold,
        separation_gap: separation_gap(alpha, tau, delta)?,
    })
}

/// Outcome of checking every invariant of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub codewords: usize,
    pub min_hamming: usize,
    pub max_hamming: usize,
    pub balanced: bool,
    pub distance_window: bool,
    pub q_valid: bool,
    pub closed_form_max_error: f64,
    pub kl_max_error: f64,
    pub separation_gap: f64,
    pub min_decoding_margin: f64,
    pub decoding_separation: bool,
    pub lipschitz_witness: bool,
}

impl InstanceCheck {
    pub fn all_pass(&self) -> bool {
        self.balanced
            && self.distance_window
            && self.q_valid
            && self.closed_form_max_error <= 1e-12
            && self.kl_max_error <= 1e-12
            && self.separation_gap > 0.0
            && self.decoding_separation
            && self.lipschitz_witness
    }
}

/// `Q_u(i) = (1 + δ u_i)/d`.
pub fn hypothesis_distribution(u: &[i8], delta: f64) -> Vec<f64> {
    let d = u.len() as f64;
    u.iter().map(|&x| (1.0 + delta * x as f64) / d).collect()
}

/// Direct summation of the population objective over `Ω`.
pub fn brute_force_dv_value(u: &[i8], v: &[i8], alpha: f64, tau: f64, delta: f64) -> f64 {
    let q = hypothesis_distribution(u, delta);
    let d = u.len() as f64;
    let eq: f64 = q
        .iter()
        .zip(v)
        .map(|(qi, &vi)| qi * ((alpha - 1.0) * tau * vi as f64).exp())
        .sum();
    let ep: f64 = v.iter().map(|&vi| (alpha * tau * vi as f64).exp() / d).sum();
    eq.ln() / (alpha - 1.0) - ep.ln() / alpha
}

/// Direct summation of `KL(Q_u ‖ Q_v)`.
pub fn brute_force_kl(u: &[i8], v: &[i8], delta: f64) -> f64 {
    let qu = hypothesis_distribution(u, delta);
    let qv = hypothesis_distribution(v, delta);
    qu.iter().zip(&qv).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Verifies every invariant of the instance by direct computation.
pub fn check_instance(inst: &PackingInstance, order: Order) -> Result<InstanceCheck> {
    let alpha = order.alpha();
    check_params(alpha, inst.tau, inst.delta)?;
    let cw = &inst.codewords;
    let d = inst.d;
    let balanced = cw.iter().all(|u| check_codeword(u, d).is_ok());
    if !balanced {
        return Err(Error::invalid(
            "codewords",
            "every codeword must be a balanced sign vector",
        ));
    }
    let (mut min_h, mut max_h) = (usize::MAX, 0);
    let mut cf_err: f64 = 0.0;
    let mut kl_err: f64 = 0.0;
    let mut lipschitz = true;
    let mut min_margin = f64::INFINITY;
    for (i, u) in cw.iter().enumerate() {
        let own = population_dv_value(u, u, alpha, inst.tau, inst.delta)?;
        let mut best_other = f64::NEG_INFINITY;
        for (j, v) in cw.iter().enumerate() {
            let closed = population_dv_value(u, v, alpha, inst.tau, inst.delta)?;
            cf_err = cf_err.max((closed - brute_force_dv_value(u, v, alpha, inst.tau, inst.delta)).abs());
            let kl = hypothesis_kl(u, v, inst.delta, d)?;
            kl_err = kl_err.max((kl - brute_force_kl(u, v, inst.delta)).abs());
            let sup = u
                .iter()
                .zip(v)
                .map(|(&a, &b)| (inst.tau * (a - b) as f64).abs())
                .fold(0.0, f64::max);
            let param_dist = (4.0 * hamming(u, v) as f64).sqrt();
            lipschitz &= sup <= 2.0 * inst.tau * param_dist + 1e-15;
            if i != j {
                let h = hamming(u, v);
                min_h = min_h.min(h);
                max_h = max_h.max(h);
                best_other = best_other.max(closed);
            }
        }
        min_margin = min_margin.min(own - best_other);
    }
    let gap = separation_gap(alpha, inst.tau, inst.delta)?;
    let q_valid = cw.iter().all(|u| {
        let q = hypothesis_distribution(u, inst.delta);
        q.iter().all(|&x| x > 0.0) && (q.iter().sum::<f64>() - 1.0).abs() < 1e-12
    });
    Ok(InstanceCheck {
        codewords: cw.len(),
        min_hamming: min_h,
        max_hamming: max_h,
        balanced,
        distance_window: cw.len() < 2 || (in_window(d, min_h) && in_window(d, max_h)),
        q_valid,
        closed_form_max_error: cf_err,
        kl_max_error: kl_err,
        separation_gap: gap,
        min_decoding_margin: min_margin,
        decoding_separation: min_margin >= gap - 1e-12,
        lipschitz_witness: lipschitz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced_vectors(d: usize) -> Vec<Codeword> {
        (0u32..1 << d)
            .filter(|m| m.count_ones() as usize == d / 2)
            .map(|m| (0..d).map(|i| if m >> i & 1 == 1 { 1 } else { -1 }).collect())
            .collect()
    }

    /// Exact maximum independent set by branching; a vertex of degree at
    /// most one can always be taken.
    fn max_independent_set(adj: &[Vec<bool>], alive: &mut Vec<bool>) -> usize {
        let live: Vec<usize> = (0..adj.len()).filter(|&i| alive[i]).collect();
        let Some(&v) = live
            .iter()
            .min_by_key(|&&i| live.iter().filter(|&&j| adj[i][j]).count())
        else {
            return 0;
        };
        let nbrs: Vec<usize> = live.iter().copied().filter(|&j| adj[v][j]).collect();
        let take = |alive: &mut Vec<bool>| {
            let mut removed = vec![v];
            removed.extend(&nbrs);
            removed.iter().for_each(|&r| alive[r] = false);
            let s = 1 + max_independent_set(adj, alive);
            removed.iter().for_each(|&r| alive[r] = true);
            s
        };
        let with_v = take(alive);
        if nbrs.len() <= 1 {
            return with_v;
        }
        alive[v] = false;
        let without_v = max_independent_set(adj, alive);
        alive[v] = true;
        with_v.max(without_v)
    }

    #[test]
    fn greedy_never_beats_exhaustive_at_d8() {
        let all = balanced_vectors(8);
        assert_eq!(all.len(), 70);
        let conflict: Vec<Vec<bool>> = all
            .iter()
            .map(|u| all.iter().map(|v| u != v && !in_window(8, hamming(u, v))).collect())
            .collect();
        let best = max_independent_set(&conflict, &mut vec![true; 70]);
        assert_eq!(best, 35);
        for seed in 0..5 {
            let greedy = build_balanced_packing(8, 100, seed).unwrap();
            assert!(greedy.len() <= best);
        }
    }

    #[test]
    fn packing_invariants() {
        let p = build_balanced_packing(8, 4, 1).unwrap();
        assert_eq!(p.len(), 4);
        for (i, u) in p.iter().enumerate() {
            assert_eq!(u.iter().map(|&x| x as i32).sum::<i32>(), 0);
            for v in &p[i + 1..] {
                assert!((2..=6).contains(&hamming(u, v)));
                assert!(correlation(u, v) <= 0.5);
            }
        }
        assert_eq!(
            build_balanced_packing(64, 32, 7).unwrap(),
            build_balanced_packing(64, 32, 7).unwrap()
        );
        assert!(build_balanced_packing(7, 4, 1).is_err());
    }

    #[test]
    fn dv_values() {
        let p = build_balanced_packing(8, 6, 2).unwrap();
        let zero: Vec<f64> = p
            .iter()
            .map(|v| population_dv_value(&p[0], v, 2.0, 0.5, 0.0).unwrap())
            .collect();
        assert!(zero.iter().all(|&z| (z - zero[0]).abs() < 1e-15));
        let own = population_dv_value(&p[0], &p[0], 2.0, 0.5, 0.3).unwrap();
        for v in &p[1..] {
            assert!(population_dv_value(&p[0], v, 2.0, 0.5, 0.3).unwrap() < own);
        }
        for u in &p {
            for v in &p {
                let c = population_dv_value(u, v, 2.0, 0.5, 0.3).unwrap();
                assert!((c - brute_force_dv_value(u, v, 2.0, 0.5, 0.3)).abs() < 1e-12);
            }
        }
        assert!(population_dv_value(&p[0], &[1, -1], 2.0, 0.5, 0.3).is_err());
    }

    #[test]
    fn kl_values() {
        let u: Codeword = vec![1, 1, 1, 1, -1, -1, -1, -1];
        let v: Codeword = vec![1, 1, -1, -1, 1, 1, -1, -1];
        assert_eq!(hamming(&u, &v), 4);
        assert_eq!(hypothesis_kl(&u, &u, 0.25, 8).unwrap(), 0.0);
        let kl = hypothesis_kl(&u, &v, 0.25, 8).unwrap();
        assert!((kl - 0.125 * (5.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((kl - 0.0639).abs() < 1e-4);
        assert!((kl - brute_force_kl(&u, &v, 0.25)).abs() < 1e-12);
        assert!(hypothesis_kl(&u, &[1, 1, 1, 1, 1, -1, -1, -1], 0.25, 8).is_err());
        // log((1+δ)/(1−δ)) ≤ Cδ on (0, 1/2] with C = 2 log 3, its chord slope.
        let c = 2.0 * 3f64.ln();
        for i in 1..=100 {
            let delta = 0.005 * i as f64;
            assert!(hypothesis_kl(&u, &v, delta, 8).unwrap() <= 0.5 * c * delta * delta + 1e-15);
        }
    }

    #[test]
    fn gap_properties() {
        assert_eq!(separation_gap(2.0, 0.5, 0.0).unwrap(), 0.0);
        for alpha in [1.25, 2.0, 4.0] {
            let c = slope_constant(alpha, 0.5).unwrap();
            let a: f64 = (alpha - 1.0) * 0.5;
            let closed = a.sinh() / ((alpha - 1.0) * (a.cosh() + 0.5 * a.sinh()));
            assert!((c - closed).abs() < 1e-12);
            let mut prev = 0.0;
            for i in 1..=50 {
                let delta = 0.01 * i as f64;
                let gap = separation_gap(alpha, 0.5, delta).unwrap();
                assert!(gap >= 0.5 * c * delta - 1e-15);
                assert!(gap > prev);
                prev = gap;
            }
        }
    }

    #[test]
    fn instance_check_at_d8() {
        let codewords = build_balanced_packing(8, 35, 4).unwrap();
        let inst = PackingInstance {
            d: 8,
            codewords,
            delta: 0.25,
            tau: DEFAULT_TAU,
        };
        let check = check_instance(&inst, Order::new(2.0).unwrap()).unwrap();
        assert!(check.all_pass(), "{check:?}");
    }

    #[test]
    fn planner_check() {
        let two = Order::new(2.0).unwrap();
        let c = planner_consistency_check(16, 0.001, 1, two, 0.5, 16, 1).unwrap();
        assert!(c.fano_binding);
        assert!((c.delta - 8.0 * 0.001 / c.c_alpha).abs() < 1e-15);
        let huge = planner_consistency_check(16, 0.001, u64::MAX / 2, two, 0.5, 16, 1).unwrap();
        assert!(!huge.fano_binding);
        assert!(matches!(
            planner_consistency_check(16, 1.0, 1, two, 0.5, 16, 1),
            Err(Error::Infeasible(_))
        ));
        let double = planner_consistency_check(32, 0.001, 1, two, 0.5, 16, 1).unwrap();
        assert!((double.sample_floor - 2.0 * c.sample_floor).abs() < 1e-6);
    }
}
