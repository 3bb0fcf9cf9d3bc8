//! Prints the audit estimate for a range of master seeds on the default
//! single-step DP-SGD instance.
use rdp_audit::audit::{run_audit, AuditConfig, AuditSource, DpSgdSource};
use rdp_audit::divergence::Order;
use rdp_audit::dv::DvConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trials: usize = args.get(1).map_or(10_000, |s| s.parse().unwrap());
    let seeds: u64 = args.get(2).map_or(10, |s| s.parse().unwrap());
    for seed in 0..seeds {
        let dv = DvConfig::new(Order::new(2.0).unwrap()).with_seed(seed);
        let mut cfg = AuditConfig::new(
            AuditSource::DpSgd(DpSgdSource::default()),
            "rdp:2,0.25".parse().unwrap(),
            dv,
        );
        cfg.trials = trials;
        cfg.master_seed = seed;
        let r = run_audit(&cfg).unwrap();
        println!(
            "seed {seed}: eps_hat {:.4} dirs {:.4} {:.4} markov {:.4} reject {} truth {:?}",
            r.eps_hat,
            r.per_direction[0].d_hat,
            r.per_direction[1].d_hat,
            r.markov_lcb,
            r.decision.reject_null,
            r.provenance.source.reference_divergence
        );
    }
}
