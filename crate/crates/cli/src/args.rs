use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Rényi-divergence privacy auditing.
///
/// Exit codes: 0 success or fail-to-reject, 2 usage/parse/config error,
/// 3 estimation failure, 4 infeasible request or construction failure,
/// 5 minimax verification failure, 10 audit REJECT.
#[derive(Debug, Parser)]
#[command(name = "rdp-audit", version)]
pub struct Cli {
    /// TOML config file with one table per subcommand (default: $RDP_AUDIT_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)] // parsed once per process
pub enum Command {
    /// Estimate D_alpha between two sample sets.
    Estimate(EstimateArgs),
    /// Audit a mechanism against a claimed guarantee.
    Audit(AuditArgs),
    /// Write simulated loss-observation files.
    Simulate(SimulateArgs),
    /// Convert a guarantee between RDP, (eps, delta)-DP and GDP.
    Convert(ConvertArgs),
    /// Sample budget for a target confidence radius.
    Plan(PlanArgs),
    /// Verify the minimax lower-bound construction.
    MinimaxCheck(MinimaxArgs),
}

/// Variational-estimator hyperparameters.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DvFlags {
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub ema_rate: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Critic output bound; 0 disables clamping.
    #[arg(long)]
    pub clamp_bound: Option<f64>,
    #[arg(long)]
    pub param_radius: Option<f64>,
    /// Critic layer sizes, e.g. 1,100,100,1.
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Estimator seed (defaults to --seed).
    #[arg(long)]
    pub dv_seed: Option<u64>,
}

/// Parameters of the miniature DP-SGD source.
#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DpSgdFlags {
    #[arg(long)]
    pub dataset_size: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub warm_start_epochs: Option<usize>,
    #[arg(long)]
    pub warm_start_lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub noise_multiplier: Option<f64>,
    #[arg(long)]
    pub sample_prob: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// independent | paired
    #[arg(long)]
    pub pairing: Option<String>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EstimateArgs {
    /// Samples of Q (the first argument of D_alpha).
    #[arg(long)]
    pub q_file: Option<PathBuf>,
    /// Samples of P.
    #[arg(long)]
    pub p_file: Option<PathBuf>,
    /// gaussian:MU_P,MU_Q,SIGMA draws P ~ N(MU_P), Q ~ N(MU_Q).
    #[arg(long)]
    pub simulate: Option<String>,
    /// Samples per side when simulating.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// dv | plugin (plugin needs a simulated Gaussian source).
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub dv: DvFlags,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AuditArgs {
    /// Canary-absent loss file.
    #[arg(long)]
    pub without_file: Option<PathBuf>,
    /// Canary-present loss file.
    #[arg(long)]
    pub with_file: Option<PathBuf>,
    /// gaussian:MU0,MU1,SIGMA or dpsgd.
    #[arg(long)]
    pub simulate: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// rdp:ALPHA,EPS | dp:EPS,DELTA | gdp:MU
    #[arg(long)]
    pub claim: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub delta_ci: Option<f64>,
    /// d,K,M[,L] enables the variational certificate.
    #[arg(long)]
    pub class_spec: Option<String>,
    /// δ for expressing the result as (eps, delta)-DP.
    #[arg(long)]
    pub conversion_delta: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub dv: DvFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub dpsgd: DpSgdFlags,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// gaussian:MU0,MU1,SIGMA or dpsgd.
    #[arg(long)]
    pub simulate: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub without_out: Option<PathBuf>,
    #[arg(long)]
    pub with_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub dpsgd: DpSgdFlags,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConvertArgs {
    /// rdp:ALPHA,EPS | dp:EPS,DELTA | gdp:MU
    pub guarantee: Option<String>,
    /// rdp | dp | gdp | all
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Group privacy for groups of 2^c records (RDP sources).
    #[arg(long)]
    pub group: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PlanArgs {
    #[arg(long)]
    pub target_eps: Option<f64>,
    /// d,K,M[,L]
    #[arg(long)]
    pub class_spec: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta_ci: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MinimaxArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target number of codewords.
    #[arg(long)]
    pub count: Option<usize>,
    /// Run the planner check at this epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sample size for the planner check (default d/eps^2).
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
