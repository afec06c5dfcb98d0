//! JSON report shapes. Every run embeds the resolved configuration and its
//! content hash; field order is fixed by the struct definitions, so reports
//! are byte-reproducible for deterministic commands.

use std::collections::BTreeMap;

use serde::Serialize;
use torus_mfg::scheme::ValueReport;

#[derive(Serialize)]
pub struct Report<T: Serialize> {
    pub schema: String,
    pub command: String,
    pub config: ConfigEcho,
    pub result: T,
}

#[derive(Serialize)]
pub struct ConfigEcho {
    pub resolved: BTreeMap<String, BTreeMap<String, String>>,
    pub content_hash: String,
}

#[derive(Serialize)]
pub struct ValueJson {
    pub total: f64,
    pub kinetic_entropy: f64,
    pub potential: f64,
    #[serde(rename = "final")]
    pub final_value: f64,
    pub normalization: f64,
}

impl From<ValueReport<f64>> for ValueJson {
    fn from(v: ValueReport<f64>) -> Self {
        ValueJson {
            total: v.total,
            kinetic_entropy: v.kinetic_entropy,
            potential: v.potential,
            final_value: v.final_value,
            normalization: v.normalization,
        }
    }
}

#[derive(Serialize)]
pub struct SolveResult {
    pub converged: bool,
    pub fp_iterations: usize,
    pub fp_residual: f64,
    pub value: ValueJson,
    pub replay_recursion: f64,
    pub replay_propagation: f64,
    pub mass_error_max: f64,
    pub endpoint_density_min: f64,
    pub wall_ms: u64,
}

#[derive(Serialize)]
pub struct StepResult {
    pub value: ValueJson,
    pub converged: bool,
    pub fp_iterations: usize,
    pub row_mass_error_max: f64,
    /// Empirical two-sided kernel bound: max row value and min central row
    /// value, and the single constant dominating both.
    pub row_max: f64,
    pub row_min_central: f64,
    pub empirical_bound_constant: f64,
    pub pushforward_min: f64,
    /// Largest gap between kernel row moments and the Gaussian surrogate
    /// (drift and covariance), over sampled nodes.
    pub moment_mean_gap: f64,
    pub moment_cov_gap: f64,
}

#[derive(Serialize)]
pub struct ConvergeRow {
    pub n: usize,
    pub sup_err_f: f64,
    pub w1_err_mu_final: f64,
    pub value: f64,
    pub fp_iters: usize,
    pub wall_ms: u64,
}

#[derive(Serialize)]
pub struct ConvergeResult {
    pub nu: f64,
    pub rows: Vec<ConvergeRow>,
}

#[derive(Serialize)]
pub struct FkRow {
    pub node: usize,
    pub x: f64,
    pub recursion: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub sigma_gap: f64,
}

#[derive(Serialize)]
pub struct FkResult {
    pub rng_algorithm: &'static str,
    pub paths: usize,
    pub seed: u64,
    pub horizon_index: i64,
    pub rows: Vec<FkRow>,
    pub max_sigma_gap: f64,
}

#[derive(Serialize)]
pub struct OracleResult {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub objective_gap_vs_gibbs: f64,
    pub row_l1_max_vs_gibbs: f64,
    pub one_step_value: f64,
}

#[derive(Serialize)]
pub struct W1Result {
    pub d1: f64,
    pub file_a: String,
    pub file_b: String,
    pub hash_a: String,
    pub hash_b: String,
    pub method: &'static str,
}

#[derive(Serialize)]
pub struct SemigroupResult {
    pub split_early: usize,
    pub split_late: usize,
    pub residual: f64,
}
