//! Seed sweep of the variational estimator on the Gaussian oracle instance.
//!
//! Usage: calibrate_dv <alpha> <n> <epochs> <step> [seeds] [shift]

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rdp_audit::divergence::{renyi_gaussian, Order, SampleSet};
use rdp_audit::dv::{train, DvConfig};
use rdp_audit::rng;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let alpha: f64 = args[0].parse().unwrap();
    let n: usize = args[1].parse().unwrap();
    let epochs: usize = args[2].parse().unwrap();
    let step: f64 = args[3].parse().unwrap();
    let seeds: u64 = args.get(4).map_or(10, |s| s.parse().unwrap());
    let shift: f64 = args.get(5).map_or(1.0, |s| s.parse().unwrap());
    let order = Order::new(alpha).unwrap();
    let truth = renyi_gaussian(shift, 0.0, 1.0, order).unwrap();
    let mut results = Vec::new();
    let first: u64 = std::env::var("FIRST").map_or(0, |s| s.parse().unwrap());
    for seed in first..first + seeds {
        let mut r = rng::stream(seed, &[77]);
        let q: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal) + shift).collect();
        let p: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let mut cfg = DvConfig::new(order)
            .with_seed(seed)
            .with_epochs(epochs)
            .with_step_size(step);
        if let Ok(m) = std::env::var("CLAMP") {
            cfg.clamp_bound = m.parse().ok();
        }
        let t = Instant::now();
        let est = train(&SampleSet::new(q, "q").unwrap(), &SampleSet::new(p, "p").unwrap(), &cfg);
        match est {
            Ok(e) => {
                let tr = &e.objective_trace;
                println!(
                    "seed {seed}: d_hat {:.4} (truth {truth}) train-obj first {:.4} last {:.4} [{:.1}s]",
                    e.d_hat,
                    alpha * tr[0],
                    alpha * tr[tr.len() - 1],
                    t.elapsed().as_secs_f64()
                );
                results.push(e.d_hat);
            }
            Err(err) => println!("seed {seed}: {err}"),
        }
    }
    results.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("sorted: {results:.3?}");
}
