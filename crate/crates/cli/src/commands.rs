use std::path::{Path, PathBuf};

use rdp_audit::accounting::{
    approx_dp_to_gdp, gdp_to_approx_dp_eps, gdp_to_rdp, group_privacy, rdp_to_approx_dp, PrivacyGuarantee, Rdp,
};
use rdp_audit::audit::{
    self, AuditConfig, AuditSource, DpSgdSource, Pairing, DEFAULT_BETA, DEFAULT_CONVERSION_DELTA, DEFAULT_DELTA_CI,
    DEFAULT_TRIALS,
};
use rdp_audit::bounds::{self, CriticClassSpec};
use rdp_audit::divergence::{plugin_estimate, GaussianLogRatio, Order, SampleSet};
use rdp_audit::dv::{self, DvConfig};
use rdp_audit::mechanisms::{gaussian_pair_samples, GaussianMechanismSpec};
use rdp_audit::minimax::{self, PackingInstance};
use serde_json::{json, Value};

use crate::args::{AuditArgs, ConvertArgs, DpSgdFlags, DvFlags, EstimateArgs, MinimaxArgs, PlanArgs, SimulateArgs};
use crate::output::{sig6, write_report};
use crate::{CliError, Outcome};

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn order(alpha: f64) -> Result<Order, CliError> {
    Ok(Order::new(alpha)?)
}

fn dv_config(order: Order, flags: &DvFlags, default_seed: u64) -> Result<DvConfig, CliError> {
    let mut c = DvConfig::new(order).with_seed(flags.dv_seed.unwrap_or(default_seed));
    if let Some(b) = flags.batch_size {
        c.batch_size = b;
    }
    if let Some(e) = flags.epochs {
        c.epochs = e;
    }
    if let Some(s) = flags.step_size {
        c.step_size = s;
    }
    if let Some(r) = flags.ema_rate {
        c.ema_rate = r;
    }
    if let Some(f) = flags.train_fraction {
        c.train_fraction = f;
    }
    if let Some(m) = flags.clamp_bound {
        c.clamp_bound = (m > 0.0).then_some(m);
    }
    c.param_radius = flags.param_radius;
    if let Some(layers) = &flags.layers {
        c.layer_sizes = layers
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("--layers expects comma-separated sizes, got `{layers}`")))?;
    }
    if let Some(s) = flags.standardize {
        c.standardize = s;
    }
    c.validate()?;
    Ok(c)
}

fn pairing(s: &Option<String>) -> Result<Pairing, CliError> {
    match s.as_deref() {
        None | Some("independent") => Ok(Pairing::Independent),
        Some("paired") => Ok(Pairing::Paired),
        Some(other) => Err(CliError::Usage(format!(
            "--pairing must be independent or paired, got `{other}`"
        ))),
    }
}

fn dpsgd_source(f: &DpSgdFlags) -> Result<DpSgdSource, CliError> {
    let d = DpSgdSource::default();
    Ok(DpSgdSource {
        dataset_size: f.dataset_size.unwrap_or(d.dataset_size),
        data_seed: f.data_seed.unwrap_or(d.data_seed),
        warm_start_epochs: f.warm_start_epochs.unwrap_or(d.warm_start_epochs),
        warm_start_lr: f.warm_start_lr.unwrap_or(d.warm_start_lr),
        iterations: f.iterations.unwrap_or(d.iterations),
        clip: f.clip.unwrap_or(d.clip),
        noise_multiplier: f.noise_multiplier.unwrap_or(d.noise_multiplier),
        sample_prob: f.sample_prob.unwrap_or(d.sample_prob),
        learning_rate: f.learning_rate.unwrap_or(d.learning_rate),
        pairing: pairing(&f.pairing)?,
    })
}

fn gaussian_spec(s: &str) -> Result<Option<GaussianMechanismSpec>, CliError> {
    match s.split_once(':') {
        Some(("gaussian", rest)) => Ok(Some(GaussianMechanismSpec::parse(rest)?)),
        _ => Ok(None),
    }
}

fn simulated_source(sim: &str, dpsgd: &DpSgdFlags) -> Result<AuditSource, CliError> {
    if let Some(spec) = gaussian_spec(sim)? {
        return Ok(AuditSource::Gaussian(spec));
    }
    if sim == "dpsgd" {
        return Ok(AuditSource::DpSgd(dpsgd_source(dpsgd)?));
    }
    Err(CliError::Usage(format!(
        "--simulate expects gaussian:MU0,MU1,SIGMA or dpsgd, got `{sim}`"
    )))
}

fn read_samples(path: &Path, label: &str) -> Result<(SampleSet, String), CliError> {
    let (values, digest) = audit::read_losses(path)?;
    Ok((SampleSet::new(values, label)?, digest))
}

pub fn estimate(args: EstimateArgs, resolved: Value) -> Result<Outcome, CliError> {
    let ord = order(required(&args.alpha, "alpha")?)?;
    let seed = args.seed.unwrap_or(0);
    let method = args.method.clone().unwrap_or_else(|| "dv".into());
    let (q, p, source, reference, gaussian) = match (&args.simulate, &args.q_file, &args.p_file) {
        (Some(sim), None, None) => {
            let spec = gaussian_spec(sim)?
                .ok_or_else(|| CliError::Usage(format!("--simulate expects gaussian:MU_P,MU_Q,SIGMA, got `{sim}`")))?;
            let n = args.n.unwrap_or(10_000);
            let (p, q) = gaussian_pair_samples(&spec, n, seed)?;
            let reference = spec.true_divergence(ord).ok();
            (
                q,
                p,
                json!({ "kind": "gaussian", "spec": spec, "n": n }),
                reference,
                Some(spec),
            )
        }
        (None, Some(qf), Some(pf)) => {
            let (q, dq) = read_samples(qf, "q")?;
            let (p, dp) = read_samples(pf, "p")?;
            (q, p, json!({ "kind": "files", "digests": [dq, dp] }), None, None)
        }
        _ => {
            return Err(CliError::Usage(
                "give either --simulate or both --q-file and --p-file".into(),
            ))
        }
    };

    let (result, d_hat) = match method.as_str() {
        "dv" => {
            let config = dv_config(ord, &args.dv, seed)?;
            let est = dv::train(&q, &p, &config)?;
            let d_hat = est.d_hat;
            (
                json!({
                    "method": "dv",
                    "d_hat": est.d_hat,
                    "r_hat": est.r_hat,
                    "objective_trace": est.objective_trace,
                    "n_train": [est.n_train_q, est.n_train_p],
                    "n_validation": [est.n_validation_q, est.n_validation_p],
                    "dv_config": est.config,
                }),
                d_hat,
            )
        }
        "plugin" => {
            let spec =
                gaussian.ok_or_else(|| CliError::Usage("--method plugin needs a simulated Gaussian source".into()))?;
            // D_α(Q‖P) from draws of P with the exact log(q/p).
            let oracle = GaussianLogRatio {
                mu_p: spec.value_with,
                mu_q: spec.value_without,
                sigma: spec.sigma,
            };
            let est = plugin_estimate(&p, &oracle, ord)?;
            (
                json!({ "method": "plugin", "d_hat": est.d_hat, "log_z_hat": est.log_z_hat, "n": est.n }),
                est.d_hat,
            )
        }
        other => return Err(CliError::Usage(format!("--method must be dv or plugin, got `{other}`"))),
    };

    println!("alpha      {}", sig6(ord.alpha()));
    println!("d_hat      {}", sig6(d_hat));
    if let Some(r) = reference {
        println!("reference  {}", sig6(r));
    }
    let report = json!({
        "command": "estimate",
        "alpha": ord.alpha(),
        "d_hat": d_hat,
        "result": result,
        "reference_divergence": reference,
        "source": source,
        "configuration": resolved,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_report(args.out.as_deref(), &report)?;
    Ok(Outcome::Success)
}

pub fn audit(args: AuditArgs, resolved: Value) -> Result<Outcome, CliError> {
    let claimed: PrivacyGuarantee = required(&args.claim, "claim")?.parse()?;
    let ord = order(args.alpha.unwrap_or(2.0))?;
    let master_seed = args.seed.unwrap_or(0);
    let source = match (&args.simulate, &args.without_file, &args.with_file) {
        (Some(sim), None, None) => simulated_source(sim, &args.dpsgd)?,
        (None, Some(a), Some(b)) => AuditSource::Files {
            without: a.clone(),
            with: b.clone(),
        },
        _ => {
            return Err(CliError::Usage(
                "give either --simulate or both --without-file and --with-file".into(),
            ))
        }
    };
    let mut config = AuditConfig::new(source, claimed, dv_config(ord, &args.dv, master_seed)?);
    config.trials = args.trials.unwrap_or(DEFAULT_TRIALS);
    config.beta = args.beta.unwrap_or(DEFAULT_BETA);
    config.delta_ci = args.delta_ci.unwrap_or(DEFAULT_DELTA_CI);
    config.conversion_delta = args.conversion_delta.unwrap_or(DEFAULT_CONVERSION_DELTA);
    config.master_seed = master_seed;
    config.class_spec = args.class_spec.as_deref().map(CriticClassSpec::parse).transpose()?;
    // An unconvertible claim is a usage error, not an estimation failure.
    config
        .claimed
        .rdp_epsilon_at(ord.alpha())
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let report = audit::run_audit(&config)?;
    println!("alpha          {}", sig6(report.alpha));
    println!("eps_hat        {}", sig6(report.eps_hat));
    for d in &report.per_direction {
        println!("  {:<12} {}", d.direction, sig6(d.d_hat));
    }
    println!("markov_lcb     {}", sig6(report.markov_lcb));
    if let Some(dv) = &report.dv_lcb {
        println!("dv_lcb         {}", sig6(dv.value));
    }
    println!(
        "claimed        {} (eps_alpha {})",
        report.claimed,
        sig6(report.conversions.claimed_eps_alpha)
    );
    let reject = report.decision.reject_null;
    println!("decision       {}", if reject { "REJECT" } else { "fail to reject" });
    let mut value = serde_json::to_value(&report).map_err(rdp_audit::Error::from)?;
    if let Value::Object(m) = &mut value {
        m.insert("configuration".into(), resolved);
    }
    write_report(args.out.as_deref(), &value)?;
    Ok(if reject { Outcome::Reject } else { Outcome::Success })
}

pub fn simulate(args: SimulateArgs, resolved: Value) -> Result<Outcome, CliError> {
    let sim = required(&args.simulate, "simulate")?;
    let trials = args.trials.unwrap_or(DEFAULT_TRIALS);
    let seed = args.seed.unwrap_or(0);
    let without_out: PathBuf = required(&args.without_out, "without-out")?;
    let with_out: PathBuf = required(&args.with_out, "with-out")?;
    let (without, with) = match simulated_source(&sim, &args.dpsgd)? {
        AuditSource::Gaussian(spec) => gaussian_pair_samples(&spec, trials, seed)?,
        AuditSource::DpSgd(src) => {
            let (task, dp) = src.build()?;
            audit::collect_observations(&task, &dp, trials, seed, src.pairing)?
        }
        AuditSource::Files { .. } => unreachable!("simulated source"),
    };
    audit::write_losses(&without_out, &without)?;
    audit::write_losses(&with_out, &with)?;
    println!("trials         {trials}");
    println!("mean without   {}", sig6(without.mean()));
    println!("mean with      {}", sig6(with.mean()));
    eprintln!(
        "wrote {} and {} ({resolved})",
        without_out.display(),
        with_out.display()
    );
    Ok(Outcome::Success)
}

struct Row {
    target: &'static str,
    value: Value,
    text: String,
    via: &'static str,
}

pub fn convert(args: ConvertArgs, resolved: Value) -> Result<Outcome, CliError> {
    let source: PrivacyGuarantee = required(&args.guarantee, "guarantee")?.parse()?;
    let to = args.to.clone().unwrap_or_else(|| "all".into());
    if !["rdp", "dp", "gdp", "all"].contains(&to.as_str()) {
        return Err(CliError::Usage(format!("--to must be rdp, dp, gdp or all, got `{to}`")));
    }
    let delta = args.delta.unwrap_or(DEFAULT_CONVERSION_DELTA);
    let mut rows: Vec<Row> = Vec::new();
    let rdp_row = |r: Rdp, via| Row {
        target: "rdp",
        value: json!({ "alpha": r.alpha, "eps_alpha": r.eps_alpha }),
        text: format!(
            "({}, {})-RDP  eps_alpha = {}",
            sig6(r.alpha),
            sig6(r.eps_alpha),
            sig6(r.eps_alpha)
        ),
        via,
    };
    let dp_row = |eps: f64, delta: f64, via| Row {
        target: "dp",
        value: json!({ "eps": eps, "delta": delta }),
        text: format!("({}, {})-DP  eps = {}", sig6(eps), sig6(delta), sig6(eps)),
        via,
    };
    let gdp_row = |mu: f64, via| Row {
        target: "gdp",
        value: json!({ "mu": mu }),
        text: format!("{}-GDP  mu = {}", sig6(mu), sig6(mu)),
        via,
    };
    match source {
        PrivacyGuarantee::Gdp(g) => {
            let alpha = args.alpha.unwrap_or(2.0);
            rows.push(rdp_row(gdp_to_rdp(g, alpha)?, "gdp_to_rdp"));
            let direct = gdp_to_approx_dp_eps(g, delta)?;
            rows.push(dp_row(direct.eps, delta, "gdp_delta_curve"));
            let chained = rdp_to_approx_dp(gdp_to_rdp(g, alpha)?, delta)?;
            rows.push(dp_row(chained.eps, delta, "gdp_to_rdp+rdp_to_approx_dp"));
        }
        PrivacyGuarantee::Rdp(r) => {
            let alpha = args.alpha.unwrap_or(r.alpha);
            if alpha > r.alpha {
                return Err(CliError::Usage(format!(
                    "an RDP guarantee at order {} does not transfer to order {alpha}",
                    r.alpha
                )));
            }
            rows.push(rdp_row(Rdp::new(alpha, r.eps_alpha)?, "monotone_in_order"));
            rows.push(dp_row(rdp_to_approx_dp(r, delta)?.eps, delta, "rdp_to_approx_dp"));
            if let Some(c) = args.group {
                let g = group_privacy(r, c).map_err(|e| CliError::Usage(e.to_string()))?;
                rows.push(rdp_row(g, "group_privacy"));
            }
            if to == "gdp" {
                return Err(CliError::Usage("no conversion from rdp to gdp".into()));
            }
        }
        PrivacyGuarantee::ApproxDp(d) => {
            let g = approx_dp_to_gdp(d.eps, d.delta)?;
            rows.push(gdp_row(g.mu, "approx_dp_to_gdp"));
            let alpha = args.alpha.unwrap_or(2.0);
            rows.push(rdp_row(gdp_to_rdp(g, alpha)?, "approx_dp_to_gdp+gdp_to_rdp"));
        }
    }
    if args.group.is_some() && !matches!(source, PrivacyGuarantee::Rdp(_)) {
        return Err(CliError::Usage("--group applies to rdp sources".into()));
    }
    rows.retain(|r| to == "all" || r.target == to);
    if rows.is_empty() {
        return Err(CliError::Usage(format!("no conversion from {source} to {to}")));
    }
    println!("source  {source}");
    for r in &rows {
        println!("{:<4}    {}  [{}]", r.target, r.text, r.via);
    }
    let report = json!({
        "command": "convert",
        "source": source,
        "conversions": rows.iter().map(|r| json!({ "target": r.target, "value": r.value, "via": r.via })).collect::<Vec<_>>(),
        "configuration": resolved,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_report(args.out.as_deref(), &report)?;
    Ok(Outcome::Success)
}

pub fn plan(args: PlanArgs, resolved: Value) -> Result<Outcome, CliError> {
    let target = required(&args.target_eps, "target-eps")?;
    let spec = CriticClassSpec::parse(&required(&args.class_spec, "class-spec")?)?;
    let ord = order(args.alpha.unwrap_or(2.0))?;
    let delta = args.delta_ci.unwrap_or(DEFAULT_DELTA_CI);
    let plan = bounds::required_samples(target, &spec, ord, delta)?;
    println!("n_upper        {}", plan.n_upper);
    println!(
        "n_floor        {}  (minimax floor d/eps^2, constant set to 1)",
        plan.n_floor
    );
    println!("C_alpha_M      {}", sig6(plan.constant_c_alpha_m));
    println!("radius(n_upper) {}", sig6(plan.radius_at_n_upper));
    let report = json!({
        "command": "plan",
        "plan": plan,
        "class_spec": spec,
        "alpha": ord.alpha(),
        "delta_ci": delta,
        "configuration": resolved,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_report(args.out.as_deref(), &report)?;
    Ok(Outcome::Success)
}

pub fn minimax_check(args: MinimaxArgs, resolved: Value) -> Result<Outcome, CliError> {
    let d = args.d.unwrap_or(8);
    let alpha = args.alpha.unwrap_or(2.0);
    let delta = args.delta.unwrap_or(0.25);
    let tau = args.tau.unwrap_or(minimax::DEFAULT_TAU);
    let seed = args.seed.unwrap_or(0);
    let count = args.count.unwrap_or(32);
    if delta > 0.5 {
        return Err(rdp_audit::Error::Infeasible(format!(
            "delta = {delta} exceeds 1/2; Q_u would not be a valid hypothesis"
        ))
        .into());
    }
    let ord = order(alpha)?;
    let codewords = minimax::build_balanced_packing(d, count, seed)?;
    let inst = PackingInstance {
        d,
        codewords,
        delta,
        tau,
    };
    let check = minimax::check_instance(&inst, ord)?;
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    println!("codewords             {}", check.codewords);
    println!("hamming range         [{}, {}]", check.min_hamming, check.max_hamming);
    println!("separation gap        {}", sig6(check.separation_gap));
    println!("min decoding margin   {}", sig6(check.min_decoding_margin));
    println!("closed-form max error {}", sig6(check.closed_form_max_error));
    println!("KL max error          {}", sig6(check.kl_max_error));
    println!("balanced              {}", mark(check.balanced));
    println!("distance window       {}", mark(check.distance_window));
    println!("Q_u valid             {}", mark(check.q_valid));
    println!("decoding separation   {}", mark(check.decoding_separation));
    println!("Lipschitz witness     {}", mark(check.lipschitz_witness));
    let planner = match args.epsilon {
        Some(eps) => {
            let n = args.n.unwrap_or_else(|| (d as f64 / (eps * eps)).ceil() as u64);
            let p = minimax::planner_consistency_check(d, eps, n, ord, tau, count, seed)?;
            println!("planner delta         {}", sig6(p.delta));
            println!("n * max KL            {}", sig6(p.mutual_information_bound));
            println!("Fano threshold        {}", sig6(p.fano_threshold));
            println!("Fano binding          {}", p.fano_binding);
            Some(p)
        }
        None => None,
    };
    let all_pass = check.all_pass();
    println!("all invariants        {}", mark(all_pass));
    let report = json!({
        "command": "minimax-check",
        "instance": inst,
        "check": check,
        "all_pass": all_pass,
        "planner": planner,
        "configuration": resolved,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_report(args.out.as_deref(), &report)?;
    Ok(if all_pass {
        Outcome::Success
    } else {
        Outcome::VerificationFailed
    })
}
