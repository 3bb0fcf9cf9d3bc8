//! Black-box audit orchestration.
//!
//! An audit collects canary losses from runs without the canary (`O`) and
//! with it (`O′`), estimates `D_α` in both directions with the variational
//! estimator, keeps the larger value, and attaches confidence bounds and a
//! decision against the claimed guarantee.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accounting::{rdp_to_approx_dp, PrivacyGuarantee, Rdp};
use crate::bounds::{self, AuditDecision, CriticClassSpec};
use crate::divergence::{Order, SampleSet};
use crate::dv::{self, DvConfig};
use crate::mechanisms::{
    self, blank_canary_single_step_divergence, dp_sgd_train, warm_start_params, DpSgdConfig, GaussianMechanismSpec,
    SyntheticTask,
};
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_TRIALS: usize = 500;
pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_DELTA_CI: f64 = 0.05;
/// δ used to express RDP and GDP claims on the (ε, δ) scale.
pub const DEFAULT_CONVERSION_DELTA: f64 = 1e-5;
/// The two orders reported by default for multi-order audits.
pub const DEFAULT_ORDERS: [f64; 2] = [1.25, 2.0];

/// Whether the runs with and without the canary share randomness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Every run has its own seed.
    #[default]
    Independent,
    /// Trial `t` uses one seed for both runs, so their noise coincides.
    Paired,
}

/// Miniature DP-SGD with a blank canary on the two-blob task.
///
/// The model is warm-started on the first half of the data and trained
/// privately on the second half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSgdSource {
    pub dataset_size: usize,
    pub data_seed: u64,
    pub warm_start_epochs: usize,
    pub warm_start_lr: f64,
    pub iterations: usize,
    pub clip: f64,
    pub noise_multiplier: f64,
    pub sample_prob: f64,
    pub learning_rate: f64,
    #[serde(default)]
    pub pairing: Pairing,
}

impl Default for DpSgdSource {
    /// One full-batch step with clip 0.1 and noise multiplier 1; the blank
    /// canary then has `D₂ = 1` exactly.
    fn default() -> Self {
        DpSgdSource {
            dataset_size: 400,
            data_seed: 0,
            warm_start_epochs: 5,
            warm_start_lr: 0.1,
            iterations: 1,
            clip: 0.1,
            noise_multiplier: 1.0,
            sample_prob: 1.0,
            learning_rate: 1.0,
            pairing: Pairing::Independent,
        }
    }
}

impl DpSgdSource {
    /// The private-phase task and the DP-SGD configuration (seed unset).
    pub fn build(&self) -> Result<(SyntheticTask, DpSgdConfig)> {
        let full = SyntheticTask::blobs(self.dataset_size, self.data_seed)?;
        let init = warm_start_params(&full, self.warm_start_epochs, self.warm_start_lr, self.data_seed)?;
        let config = DpSgdConfig {
            iterations: self.iterations,
            clip: self.clip,
            noise_multiplier: self.noise_multiplier,
            sample_prob: self.sample_prob,
            learning_rate: self.learning_rate,
            init,
            seed: 0,
        };
        config.validate()?;
        Ok((full.second_half()?, config))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AuditSource {
    /// Scalar Gaussian mechanism; `O` draws from `value_without`.
    Gaussian(GaussianMechanismSpec),
    DpSgd(DpSgdSource),
    /// Loss files for the runs without and with the canary.
    Files {
        without: PathBuf,
        with: PathBuf,
    },
}

impl AuditSource {
    fn is_simulated(&self) -> bool {
        !matches!(self, AuditSource::Files { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub trials: usize,
    pub dv: DvConfig,
    pub claimed: PrivacyGuarantee,
    pub beta: f64,
    pub delta_ci: f64,
    pub master_seed: u64,
    pub source: AuditSource,
    pub class_spec: Option<CriticClassSpec>,
    pub conversion_delta: f64,
}

impl AuditConfig {
    pub fn new(source: AuditSource, claimed: PrivacyGuarantee, dv: DvConfig) -> Self {
        AuditConfig {
            trials: DEFAULT_TRIALS,
            dv,
            claimed,
            beta: DEFAULT_BETA,
            delta_ci: DEFAULT_DELTA_CI,
            master_seed: 0,
            source,
            class_spec: None,
            conversion_delta: DEFAULT_CONVERSION_DELTA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dv.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be positive"));
        }
        let needed = (2.0 * self.dv.batch_size as f64 / self.dv.train_fraction).ceil() as usize;
        if self.source.is_simulated() && self.trials < needed {
            return Err(Error::invalid(
                "trials",
                format!(
                    "{} trials cannot feed batch size {} at train fraction {}; need at least {needed}",
                    self.trials, self.dv.batch_size, self.dv.train_fraction
                ),
            ));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("delta_ci", self.delta_ci),
            ("conversion_delta", self.conversion_delta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> Result<String> {
        Ok(hex_digest(serde_json::to_string(self)?.as_bytes()))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn trial_seed(master_seed: u64, trial: usize, canary: bool, pairing: Pairing) -> u64 {
    match pairing {
        Pairing::Independent => rng::derive_seed(master_seed, &[trial as u64, canary as u64]),
        Pairing::Paired => rng::derive_seed(master_seed, &[trial as u64]),
    }
}

/// Runs `trials` trainings without and with the canary and records the
/// canary's final loss; `O` holds the canary-absent losses.
pub fn collect_observations(
    task: &SyntheticTask,
    dp_config: &DpSgdConfig,
    trials: usize,
    master_seed: u64,
    pairing: Pairing,
) -> Result<(SampleSet, SampleSet)> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    let mut without = Vec::with_capacity(trials);
    let mut with = Vec::with_capacity(trials);
    let mut config = dp_config.clone();
    for t in 0..trials {
        let wrap = |e: Error| Error::Trial {
            trial: t,
            source: Box::new(e),
        };
        for (canary, out) in [(false, &mut without), (true, &mut with)] {
            config.seed = trial_seed(master_seed, t, canary, pairing);
            out.push(dp_sgd_train(task, &config, canary).map_err(wrap)?.canary_loss);
        }
    }
    Ok((SampleSet::new(without, "without")?, SampleSet::new(with, "with")?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionEstimate {
    /// `"with||without"` estimates `D_α(O′‖O)`.
    pub direction: String,
    pub d_hat: f64,
    pub r_hat: f64,
    pub seed: u64,
    pub n_validation: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdpEstimate {
    pub eps_hat: f64,
    pub per_direction: [DirectionEstimate; 2],
    pub max_direction: usize,
}

impl RdpEstimate {
    pub fn max(&self) -> &DirectionEstimate {
        &self.per_direction[self.max_direction]
    }
}

fn content_seed(base: u64, q: &SampleSet, p: &SampleSet) -> u64 {
    let mut h = Sha256::new();
    for v in q.values() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(b"|");
    for v in p.values() {
        h.update(v.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    let word = u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"));
    rng::derive_seed(base, &[word])
}

/// Estimates `D_α` in both orderings and keeps the larger.
///
/// Each direction's training seed is derived from `dv.seed` and the ordered
/// data, so swapping the inputs reproduces the same pair of estimates.
pub fn estimate_rdp(without: &SampleSet, with: &SampleSet, dv_config: &DvConfig) -> Result<RdpEstimate> {
    let run = |q: &SampleSet, p: &SampleSet, label: &str| -> Result<DirectionEstimate> {
        let seed = content_seed(dv_config.seed, q, p);
        let est = dv::train(q, p, &dv_config.clone().with_seed(seed)).map_err(|e| Error::Direction {
            direction: label.to_string(),
            source: Box::new(e),
        })?;
        Ok(DirectionEstimate {
            direction: label.to_string(),
            d_hat: est.d_hat,
            r_hat: est.r_hat,
            seed,
            n_validation: est.n_validation_q.min(est.n_validation_p),
        })
    };
    let forward = run(with, without, &format!("{}||{}", with.label(), without.label()))?;
    let backward = run(without, with, &format!("{}||{}", without.label(), with.label()))?;
    let max_direction = if backward.d_hat > forward.d_hat { 1 } else { 0 };
    let eps_hat = forward.d_hat.max(backward.d_hat);
    Ok(RdpEstimate {
        eps_hat,
        per_direction: [forward, backward],
        max_direction,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DvLowerBound {
    /// `α · (R̂ − radius)`, on the `D_α` scale.
    pub value: f64,
    /// `R̂ − radius`, on the variational scale.
    pub variational_lcb: f64,
    pub r_hat: f64,
    pub radius: f64,
    /// Per-side count fed to the radius, the smaller validation split.
    pub n: usize,
    pub class_spec: CriticClassSpec,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conversions {
    pub claimed_eps_alpha: f64,
    pub delta: f64,
    /// The claim restated as `(ε, δ)`-DP through the RDP conversion.
    pub claimed_eps_at_delta: f64,
    /// Any `(ε, δ)` claim with ε below this is refuted by the Markov bound.
    pub violation_epsilon_markov: f64,
    /// The same from the variational certificate, when available.
    pub violation_epsilon_dv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub kind: String,
    pub n_without: usize,
    pub n_with: usize,
    pub digests: Option<[String; 2]>,
    /// Closed-form `D_α` of the simulated instance, when one exists.
    pub reference_divergence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub dv_seed: u64,
    pub direction_seeds: [u64; 2],
    pub direction_labels: [String; 2],
    pub max_direction: String,
    pub config_digest: String,
    pub source: SourceRecord,
    pub version: String,
    pub config: AuditConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub alpha: f64,
    pub eps_hat: f64,
    pub per_direction: [DirectionEstimate; 2],
    /// Markov correction applied to the audit output `ε̂`.
    pub markov_lcb: f64,
    pub dv_lcb: Option<DvLowerBound>,
    pub decision: AuditDecision,
    pub claimed: PrivacyGuarantee,
    pub conversions: Conversions,
    pub provenance: Provenance,
}

impl AuditReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Parsed observation files with their SHA-256 digests.
#[derive(Clone, Debug, PartialEq)]
pub struct Ingested {
    pub without: SampleSet,
    pub with: SampleSet,
    pub digests: [String; 2],
}

fn gather(config: &AuditConfig) -> Result<(SampleSet, SampleSet, SourceRecord)> {
    let order = config.dv.order;
    let record = |kind: &str, o: &SampleSet, o2: &SampleSet, digests, reference| SourceRecord {
        kind: kind.to_string(),
        n_without: o.len(),
        n_with: o2.len(),
        digests,
        reference_divergence: reference,
    };
    match &config.source {
        AuditSource::Gaussian(spec) => {
            let (o, o2) = mechanisms::gaussian_pair_samples(spec, config.trials, config.master_seed)?;
            let truth = spec.true_divergence(order).ok();
            let r = record("gaussian", &o, &o2, None, truth);
            Ok((o, o2, r))
        }
        AuditSource::DpSgd(src) => {
            let (task, dp) = src.build()?;
            let (o, o2) = collect_observations(&task, &dp, config.trials, config.master_seed, src.pairing)?;
            let truth = blank_canary_single_step_divergence(&task, &dp, order).ok();
            let r = record("dp_sgd", &o, &o2, None, truth);
            Ok((o, o2, r))
        }
        AuditSource::Files { without, with } => {
            let ing = ingest_losses(without, with)?;
            let r = record("files", &ing.without, &ing.with, Some(ing.digests.clone()), None);
            Ok((ing.without, ing.with, r))
        }
    }
}

/// Gathers observations, estimates, bounds and decides.
pub fn run_audit(config: &AuditConfig) -> Result<AuditReport> {
    config.validate()?;
    let order = config.dv.order;
    let alpha = order.alpha();
    // Fail on an unconvertible claim before doing any work.
    let claimed_eps_alpha = config.claimed.rdp_epsilon_at(alpha)?;

    let (without, with, source) = gather(config)?;
    audit_observations(config, claimed_eps_alpha, &without, &with, source)
}

/// Audits already-collected observations (the tail of [`run_audit`]).
pub fn audit_observations(
    config: &AuditConfig,
    claimed_eps_alpha: f64,
    without: &SampleSet,
    with: &SampleSet,
    source: SourceRecord,
) -> Result<AuditReport> {
    let order = config.dv.order;
    let alpha = order.alpha();
    let est = estimate_rdp(without, with, &config.dv)?;
    let markov_lcb = bounds::markov_lower_bound(est.eps_hat, order, config.beta)?.value();

    let dv_lcb = match &config.class_spec {
        None => None,
        Some(spec) => {
            let top = est.max();
            let radius = bounds::dv_ci_radius(top.n_validation, spec, order, config.delta_ci, 0.0)?;
            let cert = bounds::dv_certificate(top.r_hat, radius, config.delta_ci)?;
            Some(DvLowerBound {
                value: alpha * cert.value(),
                variational_lcb: cert.value(),
                r_hat: top.r_hat,
                radius,
                n: top.n_validation,
                class_spec: *spec,
                level: cert.level,
            })
        }
    };

    let decision = bounds::hypothesis_test(est.eps_hat, claimed_eps_alpha, order, config.beta)?;
    let delta = match config.claimed {
        PrivacyGuarantee::ApproxDp(d) if d.delta > 0.0 && d.delta < 1.0 => d.delta,
        _ => config.conversion_delta,
    };
    let conversions = Conversions {
        claimed_eps_alpha,
        delta,
        claimed_eps_at_delta: rdp_to_approx_dp(Rdp::new(alpha, claimed_eps_alpha)?, delta)?.eps,
        violation_epsilon_markov: bounds::violation_epsilon(markov_lcb, order, delta)?,
        violation_epsilon_dv: match &dv_lcb {
            Some(b) => Some(bounds::violation_epsilon(b.value, order, delta)?),
            None => None,
        },
    };
    let provenance = Provenance {
        master_seed: config.master_seed,
        dv_seed: config.dv.seed,
        direction_seeds: [est.per_direction[0].seed, est.per_direction[1].seed],
        direction_labels: [
            est.per_direction[0].direction.clone(),
            est.per_direction[1].direction.clone(),
        ],
        max_direction: est.max().direction.clone(),
        config_digest: config.digest()?,
        source,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
    };
    Ok(AuditReport {
        alpha,
        eps_hat: est.eps_hat,
        per_direction: est.per_direction,
        markov_lcb,
        dv_lcb,
        decision,
        claimed: config.claimed,
        conversions,
        provenance,
    })
}

/// Audits at each order in `orders`, sharing one set of observations.
pub fn run_multi_order_audit(config: &AuditConfig, orders: &[Order]) -> Result<Vec<AuditReport>> {
    let mut base = config.clone();
    base.validate()?;
    let (without, with, source) = gather(&base)?;
    orders
        .iter()
        .map(|&order| {
            base.dv.order = order;
            let claimed = base.claimed.rdp_epsilon_at(order.alpha())?;
            audit_observations(&base, claimed, &without, &with, source.clone())
        })
        .collect()
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn parse_value(path: &Path, line_no: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(path, line_no, format!("`{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line_no, format!("non-finite value `{field}`")));
    }
    Ok(v)
}

/// Parses a loss-observation file and returns the values and the file's
/// SHA-256 digest.
///
/// Accepted layouts: one number per line, or a delimited table whose header
/// row names a `loss` column (and optionally a `trial` column). Blank lines
/// and lines starting with `#` are skipped.
pub fn read_losses(path: &Path) -> Result<(Vec<f64>, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| parse_err(path, 0, format!("not UTF-8: {e}")))?;
    let mut column: Option<(usize, Option<usize>)> = None;
    let mut first = true;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        if first {
            first = false;
            if fields.iter().any(|f| f.parse::<f64>().is_err()) {
                let find = |name: &str| fields.iter().position(|f| f.eq_ignore_ascii_case(name));
                let loss = find("loss").ok_or_else(|| parse_err(path, line_no, "header has no `loss` column"))?;
                column = Some((loss, find("trial")));
                continue;
            }
        }
        match column {
            None => {
                if fields.len() != 1 {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("expected one value, found {}", fields.len()),
                    ));
                }
                values.push(parse_value(path, line_no, fields[0])?);
            }
            Some((loss, trial)) => {
                let get = |k: usize| {
                    fields
                        .get(k)
                        .copied()
                        .ok_or_else(|| parse_err(path, line_no, format!("missing column {}", k + 1)))
                };
                if let Some(t) = trial {
                    let f = get(t)?;
                    f.parse::<u64>()
                        .map_err(|_| parse_err(path, line_no, format!("trial `{f}` is not a nonnegative integer")))?;
                }
                values.push(parse_value(path, line_no, get(loss)?)?);
            }
        }
    }
    if values.is_empty() {
        return Err(parse_err(path, 0, "no observations"));
    }
    Ok((values, hex_digest(&bytes)))
}

/// Reads the canary-absent and canary-present loss files. Unequal lengths
/// are accepted.
pub fn ingest_losses(path_without: &Path, path_with: &Path) -> Result<Ingested> {
    let (a, da) = read_losses(path_without)?;
    let (b, db) = read_losses(path_with)?;
    Ok(Ingested {
        without: SampleSet::new(a, "without")?,
        with: SampleSet::new(b, "with")?,
        digests: [da, db],
    })
}

/// Writes a loss file with a `trial,loss` header. Values are written in
/// shortest round-trip form, so reading the file back is exact.
pub fn write_losses(path: &Path, samples: &SampleSet) -> Result<()> {
    let mut out = String::from("trial,loss\n");
    for (t, v) in samples.values().iter().enumerate() {
        out.push_str(&format!("{t},{v:?}\n"));
    }
    write_atomic(path, out.as_bytes())
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("path", format!("`{}` has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
