//! JSON run configuration. Every field has a default, so `{}` is a valid
//! config; unknown keys are rejected to catch typos early.

use std::path::PathBuf;

use serde::Deserialize;

use dpmkit_core::predictor::{GaussianProblem, NoisePredictor};
use dpmkit_core::schedule::NoiseSchedule;
use dpmkit_core::solver::{AdaptiveConfig, AdaptivePair};

use crate::CliError;

fn default_beta0() -> f64 {
    0.1
}
fn default_beta1() -> f64 {
    20.0
}
fn default_cosine_s() -> f64 {
    0.008
}
fn default_scale() -> f64 {
    1.0
}
fn default_dim() -> usize {
    4
}
fn default_n_samples() -> usize {
    4
}
fn default_m_list() -> Vec<usize> {
    vec![5, 10, 20, 40, 80]
}
fn default_nfe_list() -> Vec<u64> {
    vec![12, 24, 48]
}
fn default_nfe() -> u64 {
    10
}
fn default_r1_mid() -> f64 {
    0.5
}
fn default_r1_third() -> f64 {
    1.0 / 3.0
}
fn default_r2() -> f64 {
    2.0 / 3.0
}
fn default_rtol() -> f64 {
    0.05
}
fn default_atol() -> f64 {
    0.0078
}
fn default_h_init() -> f64 {
    0.05
}
fn default_theta() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleName {
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Gaussian data `N(mean, scale^2 I)`; `mean` defaults to zeros of the
    /// configured dimension (the stationary toy when `scale` is 1).
    Gaussian {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Isotropic Gaussian mixture; weights must sum to 1.
    Mixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
    },
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Gaussian {
            mean: None,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairName {
    Order12,
    Order23,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    Dpm1,
    Dpm2 {
        #[serde(default = "default_r1_mid")]
        r1: f64,
    },
    Dpm3 {
        #[serde(default = "default_r1_third")]
        r1: f64,
        #[serde(default = "default_r2")]
        r2: f64,
    },
    Ddim,
    Rk2T,
    Rk2Lambda,
    Rk3T,
    Rk3Lambda,
    /// Fixed NFE budget spent through the remainder-based step plan.
    Fast,
    Adaptive {
        #[serde(default = "default_pair")]
        pair: PairName,
        #[serde(default = "default_rtol")]
        rtol: f64,
        #[serde(default = "default_atol")]
        atol: f64,
        #[serde(default = "default_h_init")]
        h_init: f64,
        #[serde(default = "default_theta")]
        theta: f64,
    },
}

fn default_pair() -> PairName {
    PairName::Order23
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::Dpm3 {
            r1: default_r1_third(),
            r2: default_r2(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// "linear" (default) or "cosine".
    pub schedule: Option<ScheduleName>,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub cosine_s: Option<f64>,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    /// Defaults to the schedule's maximum usable time.
    pub t_start: Option<f64>,
    /// Default: 1e-3 for convergence sweeps; for budgeted runs 1e-3 when the
    /// budget is at most 15 NFE and 1e-4 otherwise.
    pub eps: Option<f64>,
    pub dim: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Output CSV path; each command has its own default file name.
    pub output: Option<PathBuf>,
    /// Segment counts swept by `convergence`.
    pub m_list: Vec<usize>,
    /// Shared NFE values used by `compare`.
    pub nfe_list: Vec<u64>,
    /// NFE budget used by `sample` with the `fast` solver.
    pub nfe: u64,
}

// serde(default) on the struct requires Default; spell out the documented
// defaults for the plain fields.
impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.dim == 0 {
            cfg.dim = default_dim();
        }
        if cfg.n_samples == 0 {
            cfg.n_samples = default_n_samples();
        }
        if cfg.m_list.is_empty() {
            cfg.m_list = default_m_list();
        }
        if cfg.nfe_list.is_empty() {
            cfg.nfe_list = default_nfe_list();
        }
        if cfg.nfe == 0 {
            cfg.nfe = default_nfe();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let sched = self.build_schedule();
        let t_start = self.t_start_or_default();
        if !(t_start > 0.0 && t_start <= sched.t_max()) {
            return Err(CliError::Config(format!(
                "t_start {t_start} outside (0, {}]",
                sched.t_max()
            )));
        }
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps < t_start) {
                return Err(CliError::Config(format!(
                    "eps {eps} must lie in (0, t_start)"
                )));
            }
        }
        Ok(())
    }

    pub fn schedule_name(&self) -> &'static str {
        match self.schedule.unwrap_or(ScheduleName::Linear) {
            ScheduleName::Linear => "linear",
            ScheduleName::Cosine => "cosine",
        }
    }

    pub fn problem_name(&self) -> &'static str {
        match self.problem {
            ProblemConfig::Gaussian { .. } => "gaussian",
            ProblemConfig::Mixture { .. } => "mixture",
        }
    }

    pub fn build_schedule(&self) -> NoiseSchedule<f64> {
        match self.schedule.unwrap_or(ScheduleName::Linear) {
            ScheduleName::Linear => NoiseSchedule::linear(
                self.beta0.unwrap_or_else(default_beta0),
                self.beta1.unwrap_or_else(default_beta1),
            ),
            ScheduleName::Cosine => {
                NoiseSchedule::cosine(self.cosine_s.unwrap_or_else(default_cosine_s))
            }
        }
    }

    pub fn t_start_or_default(&self) -> f64 {
        self.t_start
            .unwrap_or_else(|| self.build_schedule().t_max())
    }

    /// End time rule: explicit value wins; otherwise 1e-3 up to 15 NFE and
    /// 1e-4 beyond.
    pub fn eps_for_budget(&self, nfe: u64) -> f64 {
        self.eps.unwrap_or(if nfe <= 15 { 1e-3 } else { 1e-4 })
    }

    /// Convergence sweeps keep one end time across the whole M sweep so the
    /// order fit is meaningful.
    pub fn eps_for_convergence(&self) -> f64 {
        self.eps.unwrap_or(1e-3)
    }

    /// Dimension implied by the problem's vectors, falling back to `dim`.
    pub fn effective_dim(&self) -> usize {
        match &self.problem {
            ProblemConfig::Gaussian { mean: Some(m), .. } => m.len(),
            ProblemConfig::Gaussian { mean: None, .. } => self.dim,
            ProblemConfig::Mixture { means, .. } => {
                means.first().map(|m| m.len()).unwrap_or(self.dim)
            }
        }
    }

    pub fn build_predictor(
        &self,
        sched: &NoiseSchedule<f64>,
    ) -> Result<NoisePredictor<f64>, CliError> {
        match &self.problem {
            ProblemConfig::Gaussian { mean, scale } => {
                let mean = mean.clone().unwrap_or_else(|| vec![0.0; self.dim]);
                let prob = GaussianProblem::new(mean, *scale)?;
                Ok(NoisePredictor::gaussian(sched, &prob))
            }
            ProblemConfig::Mixture {
                weights,
                means,
                scales,
            } => Ok(NoisePredictor::mixture(
                sched,
                weights.clone(),
                means.clone(),
                scales.clone(),
            )?),
        }
    }

    /// The Gaussian problem when the config describes one; used to pick the
    /// closed-form oracle over the fine-step reference.
    pub fn gaussian_problem(&self) -> Option<GaussianProblem<f64>> {
        match &self.problem {
            ProblemConfig::Gaussian { mean, scale } => {
                let mean = mean.clone().unwrap_or_else(|| vec![0.0; self.dim]);
                GaussianProblem::new(mean, *scale).ok()
            }
            ProblemConfig::Mixture { .. } => None,
        }
    }

    pub fn build_adaptive_config(&self) -> Option<AdaptiveConfig<f64>> {
        match &self.solver {
            SolverConfig::Adaptive {
                pair,
                rtol,
                atol,
                h_init,
                theta,
            } => Some(AdaptiveConfig {
                rtol: *rtol,
                atol: *atol,
                h_init: *h_init,
                theta: *theta,
                pair: match pair {
                    PairName::Order12 => AdaptivePair::Order12,
                    PairName::Order23 => AdaptivePair::Order23,
                },
            }),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.schedule_name(), "linear");
        assert_eq!(cfg.problem_name(), "gaussian");
        assert_eq!(cfg.dim, 4);
        assert_eq!(cfg.n_samples, 4);
        assert_eq!(cfg.m_list, vec![5, 10, 20, 40, 80]);
        assert_eq!(cfg.nfe_list, vec![12, 24, 48]);
        assert_eq!(cfg.eps_for_budget(10), 1e-3);
        assert_eq!(cfg.eps_for_budget(20), 1e-4);
        assert_eq!(cfg.t_start_or_default(), 1.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"shedule": "linear"}"#).is_err());
    }

    #[test]
    fn cosine_default_t_start() {
        let cfg = RunConfig::from_json(r#"{"schedule": "cosine"}"#).unwrap();
        assert_eq!(cfg.t_start_or_default(), 0.9946);
    }

    #[test]
    fn explicit_eps_wins() {
        let cfg = RunConfig::from_json(r#"{"eps": 0.01}"#).unwrap();
        assert_eq!(cfg.eps_for_budget(50), 0.01);
        assert_eq!(cfg.eps_for_convergence(), 0.01);
    }

    #[test]
    fn bad_ranges_are_config_errors() {
        assert!(RunConfig::from_json(r#"{"t_start": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"eps": 2.0}"#).is_err());
    }

    #[test]
    fn mixture_dim_comes_from_means() {
        let cfg = RunConfig::from_json(
            r#"{"problem": {"kind": "mixture", "weights": [0.5, 0.5],
                "means": [[0.0, 1.0, 2.0], [1.0, 0.0, -1.0]], "scales": [0.5, 0.5]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.effective_dim(), 3);
        assert!(cfg.gaussian_problem().is_none());
    }
}
