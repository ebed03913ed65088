//! Declarative experiment configuration: a TOML file with nested sections,
//! overridable by command-line flags (flags win). Unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use ergodens::sim::DiffusionModel;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
}

fn default_replications() -> usize {
    100
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Ou {
        theta: f64,
        dimension: usize,
    },
    DoubleWell {
        well: f64,
        scale: f64,
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
}

fn default_substeps() -> usize {
    16
}

impl ModelConfig {
    pub fn dimension(&self) -> usize {
        match self {
            ModelConfig::Ou { dimension, .. } => *dimension,
            ModelConfig::DoubleWell { .. } => 1,
        }
    }

    pub fn build(&self) -> Result<DiffusionModel> {
        Ok(match self {
            ModelConfig::Ou { theta, dimension } => DiffusionModel::ou(*theta, *dimension)?,
            ModelConfig::DoubleWell { well, scale, .. } => {
                DiffusionModel::double_well(*well, *scale)?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub n: usize,
    pub delta: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_kind")]
    pub kind: EstimatorKindConfig,
    /// Kernel and debiasing order.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_p_policy")]
    pub p_policy: PPolicy,
    #[serde(default = "default_h_policy")]
    pub h_policy: HPolicy,
    /// Assumed smoothness per coordinate (for the closed-form rules).
    #[serde(default)]
    pub holder_alpha: Option<Vec<f64>>,
    /// Penalty constant of the adaptive selection.
    #[serde(default = "default_omega_bar")]
    pub omega_bar: f64,
    /// Proportionality constant in the pΔ ≤ c·w regime comparison.
    #[serde(default = "default_w_constant")]
    pub w_constant: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            order: default_order(),
            p_policy: default_p_policy(),
            h_policy: default_h_policy(),
            holder_alpha: None,
            omega_bar: default_omega_bar(),
            w_constant: default_w_constant(),
        }
    }
}

fn default_kind() -> EstimatorKindConfig {
    EstimatorKindConfig::Preaveraged
}

fn default_order() -> usize {
    2
}

fn default_p_policy() -> PPolicy {
    PPolicy::Named(PPolicyName::Numeric)
}

fn default_h_policy() -> HPolicy {
    HPolicy::Named(HPolicyName::Star)
}

fn default_omega_bar() -> f64 {
    4.0
}

fn default_w_constant() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKindConfig {
    Naive,
    Preaveraged,
    Debiased,
}

/// Block-size policy: a fixed value, or one of the closed-form rules.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PPolicy {
    Named(PPolicyName),
    Fixed { fixed: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PPolicyName {
    Numeric,
    Debias,
}

/// Bandwidth policy: fixed values, the closed-form star rule, or the
/// adaptive selection (d >= 3).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum HPolicy {
    Named(HPolicyName),
    Fixed { fixed: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HPolicyName {
    Star,
    Gl,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Evaluation points; defaults to the origin.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme.n == 0 {
            bail!("scheme.n must be >= 1");
        }
        if !(self.scheme.delta > 0.0) {
            bail!("scheme.delta must be positive");
        }
        if !(self.scheme.tau >= 0.0) {
            bail!("scheme.tau must be nonnegative");
        }
        if self.estimator.order == 0 {
            bail!("estimator.order must be >= 1");
        }
        if self.replications == 0 {
            bail!("replications must be >= 1");
        }
        let d = self.model.dimension();
        if let Some(alpha) = &self.estimator.holder_alpha {
            if alpha.len() != d {
                bail!("estimator.holder_alpha must have one entry per dimension ({d})");
            }
        }
        for p in &self.eval.points {
            if p.len() != d {
                bail!("eval point {:?} does not match model dimension {d}", p);
            }
        }
        if let PPolicy::Fixed { fixed } = self.estimator.p_policy {
            if fixed == 0 || fixed > self.scheme.n {
                bail!("fixed block size must satisfy 1 <= p <= n");
            }
        }
        if let HPolicy::Fixed { fixed } = &self.estimator.h_policy {
            if fixed.len() != d {
                bail!("fixed bandwidths must have one entry per dimension ({d})");
            }
            if fixed.iter().any(|&h| !(h > 0.0)) {
                bail!("fixed bandwidths must be positive");
            }
        }
        Ok(())
    }

    /// Evaluation points, defaulting to the origin.
    pub fn eval_points(&self) -> Vec<Vec<f64>> {
        if self.eval.points.is_empty() {
            vec![vec![0.0; self.model.dimension()]]
        } else {
            self.eval.points.clone()
        }
    }

    /// Smoothness vector: configured, or 2.0 in every coordinate.
    pub fn holder_alpha(&self) -> Vec<f64> {
        self.estimator
            .holder_alpha
            .clone()
            .unwrap_or_else(|| vec![2.0; self.model.dimension()])
    }
}

/// Scalar flag overrides; flags win over file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub replications: Option<usize>,
    pub order: Option<usize>,
    pub p_fixed: Option<usize>,
    pub h_fixed: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.master_seed = s;
        }
        if let Some(n) = o.n {
            self.scheme.n = n;
        }
        if let Some(d) = o.delta {
            self.scheme.delta = d;
        }
        if let Some(t) = o.tau {
            self.scheme.tau = t;
        }
        if let Some(r) = o.replications {
            self.replications = r;
        }
        if let Some(l) = o.order {
            self.estimator.order = l;
        }
        if let Some(p) = o.p_fixed {
            self.estimator.p_policy = PPolicy::Fixed { fixed: p };
        }
        if let Some(h) = &o.h_fixed {
            self.estimator.h_policy = HPolicy::Fixed { fixed: h.clone() };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"
            replications = 50
            master_seed = 7

            [model]
            kind = "ou"
            theta = 0.5
            dimension = 1

            [scheme]
            n = 16384
            delta = 0.0078125
            tau = 1.0

            [estimator]
            kind = "preaveraged"
            order = 2
            p_policy = "numeric"
            h_policy = { fixed = [0.0078125] }

            [eval]
            points = [[0.0], [0.5]]
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.replications, 50);
        assert_eq!(cfg.model.dimension(), 1);
        assert_eq!(cfg.estimator.p_policy, PPolicy::Named(PPolicyName::Numeric));
        assert_eq!(cfg.eval_points().len(), 2);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"
            [model]
            kind = "ou"
            theta = 0.5
            dimension = 1
            typo_key = 3

            [scheme]
            n = 10
            delta = 0.1
            tau = 0.0
        "#;
        assert!(toml::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn overrides_win() {
        let text = r#"
            [model]
            kind = "ou"
            theta = 0.5
            dimension = 1

            [scheme]
            n = 10
            delta = 0.1
            tau = 0.0
        "#;
        let mut cfg: ExperimentConfig = toml::from_str(text).unwrap();
        cfg.apply(&Overrides {
            seed: Some(99),
            tau: Some(2.0),
            p_fixed: Some(4),
            ..Default::default()
        });
        assert_eq!(cfg.master_seed, 99);
        assert_eq!(cfg.scheme.tau, 2.0);
        assert_eq!(cfg.estimator.p_policy, PPolicy::Fixed { fixed: 4 });
    }
}
