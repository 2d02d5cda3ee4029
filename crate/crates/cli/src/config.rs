//! The TOML run configuration and its translation into a [`TrialConfig`].

use std::path::Path;

use fsde_core::estimators::Target;
use fsde_core::experiments::{DimPolicy, EpsilonPolicy};
use fsde_core::{BasisSpec, DriftModel, TrialConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub sample: SampleSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub density: DensitySection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Registry name: `linear`, `ou`, `zero`, `damped_sine`, `shifted_tanh`.
    pub drift: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default = "default_x0")]
    pub x0: f64,
    pub sigma: f64,
    pub hurst: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    /// Number of training paths `N`.
    pub paths: usize,
    /// Held-out paths for risk evaluation; defaults to `paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_paths: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetName {
    B,
    Bprime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimName {
    Fixed,
    Opt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub target: TargetName,
    /// `trig(l,r,m)` or `hermite(m)`.
    pub basis: String,
    pub kappa: f64,
    /// Fixed gap of the coupled paths; the `ε_{N,T}` rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// `fixed` keeps the basis dimension, `opt` uses `m_opt(N)`.
    pub dim: DimName,
    pub smoothness: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            target: TargetName::B,
            basis: "trig(-2,2,3)".into(),
            kappa: 0.0,
            epsilon: None,
            dim: DimName::Opt,
            smoothness: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub replications: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { sizes: vec![50, 100, 200, 400], replications: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    /// Histogram range; the basis support (or `[-4, 4]`) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    pub bins: usize,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self { lo: None, hi: None, bins: 40 }
    }
}

fn default_x0() -> f64 {
    1.0
}

fn default_seed() -> u64 {
    1
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(invalid)?;
        config.trial()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn basis(&self) -> Result<BasisSpec, CliError> {
        self.estimator.basis.parse().map_err(invalid)
    }

    pub fn trial(&self) -> Result<TrialConfig, CliError> {
        let drift = DriftModel::from_name(&self.model.drift, &self.model.params).map_err(invalid)?;
        let trial = TrialConfig {
            drift,
            x0: self.model.x0,
            sigma: self.model.sigma,
            hurst: self.model.hurst,
            horizon: self.grid.horizon,
            steps: self.grid.steps,
            n_train: self.sample.paths,
            n_eval: self.sample.eval_paths.unwrap_or(self.sample.paths),
            basis: self.basis()?,
            kappa: self.estimator.kappa,
            epsilon: match self.estimator.epsilon {
                Some(eps) => EpsilonPolicy::Fixed(eps),
                None => EpsilonPolicy::Rule,
            },
            dim: match self.estimator.dim {
                DimName::Fixed => DimPolicy::Fixed,
                DimName::Opt => DimPolicy::Opt { smoothness: self.estimator.smoothness },
            },
            target: match self.estimator.target {
                TargetName::B => Target::Drift,
                TargetName::Bprime => Target::DriftDerivative,
            },
            seed: self.sample.seed,
        };
        trial.validate().map_err(invalid)?;
        trial.resolved_epsilon().map_err(invalid)?;
        trial.resolved_basis().map_err(invalid)?;
        Ok(trial)
    }

    pub fn check_sweep(&self) -> Result<(), CliError> {
        let s = &self.sweep;
        if s.sizes.len() < 4 {
            return Err(CliError::Config(format!("sweep.sizes needs at least 4 values, got {}", s.sizes.len())));
        }
        if s.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("sweep.sizes must be strictly increasing".into()));
        }
        if s.replications < 20 {
            return Err(CliError::Config(format!("sweep.replications must be at least 20, got {}", s.replications)));
        }
        let trial = self.trial()?;
        for &n in &s.sizes {
            let t = trial.with_paths(n);
            t.resolved_epsilon().map_err(invalid)?;
            t.resolved_basis().map_err(invalid)?;
        }
        Ok(())
    }

    /// Histogram edges for `density.csv`.
    pub fn density_edges(&self) -> Result<Vec<f64>, CliError> {
        let (lo, hi) = self.basis()?.support().unwrap_or((-4.0, 4.0));
        let lo = self.density.lo.unwrap_or(lo);
        let hi = self.density.hi.unwrap_or(hi);
        if !(lo < hi) || self.density.bins == 0 {
            return Err(CliError::Config(format!("density range [{lo}, {hi}] with {} bins", self.density.bins)));
        }
        let bins = self.density.bins;
        Ok((0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
drift = "linear"
params = [-1.0]
sigma = 0.5
hurst = 0.75

[grid]
horizon = 1.0
steps = 64

[sample]
paths = 20
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model.x0, 1.0);
        assert_eq!(c.sample.seed, 1);
        assert_eq!(c.estimator, EstimatorSection::default());
        let t = c.trial().unwrap();
        assert_eq!(t.n_eval, 20);
        assert_eq!(t.target, Target::Drift);
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace("hurst = 0.75\n", "");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("hurst"), "{err}");
    }

    #[test]
    fn bad_values_are_config_errors() {
        for (from, to) in
            [("hurst = 0.75", "hurst = 0.4"), ("drift = \"linear\"", "drift = \"cubic\""), ("steps = 64", "steps = 1")]
        {
            let err = RunConfig::parse(&MINIMAL.replace(from, to)).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{from}");
        }
        let bad_basis = format!("{MINIMAL}\n[estimator]\ntarget = \"b\"\nbasis = \"trig(2,1,3)\"\nkappa = 0.0\ndim = \"opt\"\nsmoothness = 1.0\n");
        assert!(matches!(RunConfig::parse(&bad_basis), Err(CliError::Config(_))));
    }

    #[test]
    fn sweep_checks() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        assert!(c.check_sweep().is_ok());
        c.sweep.replications = 0;
        assert!(c.check_sweep().is_err());
        c.sweep.replications = 20;
        c.sweep.sizes = vec![10, 20, 20, 30];
        assert!(c.check_sweep().is_err());
    }

    #[test]
    fn density_edges_follow_basis_support() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        let edges = c.density_edges().unwrap();
        assert_eq!(edges.len(), 41);
        assert_eq!(edges[0], -2.0);
        assert_eq!(edges[40], 2.0);
    }
}
