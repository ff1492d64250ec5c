//! Run configuration: JSON schema and resolution into a problem.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use momentfit::dist::SpecDoc;
use momentfit::encoding::{Encoding, Slot};
use momentfit::inference::{McmcOptions, NelderMeadOptions};
use momentfit::models::{BuiltinModel, ObservationPlan};
use momentfit::ode::OdeOptions;
use momentfit::pipeline::Forward;
use momentfit::scenarios::Scenario;
use momentfit::surrogate::{CopulaGrid, CopulaTable, SurrogateKind};
use momentfit::{DistSpec, Model, Problem};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Preset supplying defaults for every problem field below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<ObservationPlan>,
    /// Model parameter names in model order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<String>>,
    /// True distribution; also the template the slots act on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<SpecDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<Slot>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surrogate: Option<SurrogateKind>,
    /// Encoded hyperparameters; defaults to the encoding of `truth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copula_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_per_time: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub profile: ProfileConfig,
    #[serde(default)]
    pub mcmc: McmcOptions,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub copula: CopulaGrid,
    #[serde(default)]
    pub validate: ValidateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub starts: usize,
    pub optimizer: NelderMeadOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            optimizer: NelderMeadOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    /// Slot names to profile; all when empty.
    pub parameters: Vec<String>,
    pub points: usize,
    pub optimizer: NelderMeadOptions,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        let o = momentfit::inference::ProfileOptions::default();
        Self {
            parameters: Vec::new(),
            points: o.points,
            optimizer: o.optimizer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// Grid points per output.
    pub points: usize,
    /// Half-width of the grid in standard deviations.
    pub width: f64,
    /// Grid points per axis of the joint density for bivariate outputs.
    pub joint_points: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            points: 200,
            width: 5.0,
            joint_points: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Monte Carlo samples for the moment comparison.
    pub samples: usize,
    /// Jackknife groups for standard errors.
    pub groups: usize,
    /// Fresh samples per KS test.
    pub ks_samples: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            groups: 200,
            ks_samples: 1000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::schema(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A configuration turned into runnable objects.
pub struct Resolved {
    pub problem: Problem<BuiltinModel>,
    pub truth: DistSpec,
    pub encoding: Encoding,
    pub kind: SurrogateKind,
    pub n_per_time: usize,
    pub xi: Vec<f64>,
}

impl Resolved {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let preset = cfg.scenario.as_deref().map(Scenario::by_name).transpose()?;
        let need = |field: &str| CliError::schema(format!("`{field}` is required without a `scenario`"));
        let problem = match (&preset, &cfg.model) {
            (Some(s), None) if cfg.plan.is_none() && cfg.parameters.is_none() && cfg.ode.is_none() => s.problem.clone(),
            _ => {
                let name = cfg
                    .model
                    .clone()
                    .or_else(|| preset.as_ref().map(|s| s.problem.model.name().to_string()))
                    .ok_or_else(|| need("model"))?;
                let model = BuiltinModel::by_name(&name, cfg.ode.unwrap_or_default())?;
                let plan = cfg
                    .plan
                    .clone()
                    .or_else(|| preset.as_ref().map(|s| s.problem.plan.clone()))
                    .ok_or_else(|| need("plan"))?;
                let names = cfg
                    .parameters
                    .clone()
                    .or_else(|| preset.as_ref().map(|s| s.problem.names.clone()))
                    .ok_or_else(|| need("parameters"))?;
                Problem::new(model, plan, names)?
            }
        };
        let truth = match (&cfg.truth, &preset) {
            (Some(doc), _) => DistSpec::try_from(doc)?,
            (None, Some(s)) => s.truth.clone(),
            (None, None) => return Err(need("truth")),
        };
        let slots = match (&cfg.slots, &preset) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => s.slots.clone(),
            (None, None) => return Err(need("slots")),
        };
        let encoding = Encoding::new(truth.clone(), slots)?;
        let xi = match &cfg.xi {
            Some(x) if x.len() != encoding.dim() => {
                return Err(CliError::schema(format!("`xi` has {} entries for {} slots", x.len(), encoding.dim())))
            }
            Some(x) => x.clone(),
            None => encoding.initial()?,
        };
        Ok(Self {
            problem,
            truth,
            encoding,
            kind: cfg.surrogate.or(preset.as_ref().map(|s| s.kind)).unwrap_or_default(),
            n_per_time: cfg.n_per_time.or(preset.as_ref().map(|s| s.n_per_time)).unwrap_or(100),
            xi,
        })
    }

    /// `cfg` with every problem field spelled out.
    pub fn fill(&self, mut cfg: RunConfig) -> RunConfig {
        cfg.model = Some(self.problem.model.name().to_string());
        cfg.plan = Some(self.problem.plan.clone());
        cfg.parameters = Some(self.problem.names.clone());
        cfg.truth = Some(SpecDoc::from(&self.truth));
        cfg.slots = Some(self.encoding.slots().to_vec());
        cfg.surrogate = Some(self.kind);
        cfg.xi = Some(self.xi.clone());
        cfg.n_per_time = Some(self.n_per_time);
        cfg
    }

    pub fn needs_table(&self) -> bool {
        self.kind == SurrogateKind::Gamma && self.problem.n_outputs() == 2
    }

    pub fn forward(&self, cfg: &RunConfig) -> Result<Forward<BuiltinModel>, CliError> {
        let table = if self.needs_table() {
            let path = cfg.copula_table.as_ref().ok_or_else(|| {
                CliError::missing_table("the gamma surrogate for two outputs needs `copula_table` (build one with `copula-table`)")
            })?;
            if !path.exists() {
                return Err(CliError::missing_table(format!("copula table {} does not exist", path.display())));
            }
            Some(Arc::new(CopulaTable::load(path)?))
        } else {
            None
        };
        Ok(Forward::new(self.problem.clone(), self.encoding.clone(), self.kind, table)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let e = serde_json::from_str::<RunConfig>(r#"{"scenario": "logistic", "sceanrio": 1}"#).unwrap_err();
        assert!(e.to_string().contains("unknown field"));
        let e = serde_json::from_str::<RunConfig>(r#"{"fit": {"start": 3}}"#).unwrap_err();
        assert!(e.to_string().contains("unknown field"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig {
            scenario: Some("logistic".into()),
            ..RunConfig::default()
        };
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn preset_resolves_with_overrides() {
        let cfg: RunConfig = serde_json::from_str(r#"{"scenario": "linear_two_pool", "surrogate": "normal", "n_per_time": 5}"#).unwrap();
        let r = Resolved::new(&cfg).unwrap();
        assert_eq!(r.kind, SurrogateKind::Normal);
        assert_eq!(r.n_per_time, 5);
        assert_eq!(r.xi.len(), 5);
    }

    #[test]
    fn explicit_problem_needs_all_fields() {
        let cfg: RunConfig = serde_json::from_str(r#"{"model": "logistic"}"#).unwrap();
        assert!(matches!(Resolved::new(&cfg), Err(e) if e.code == crate::error::EXIT_SCHEMA));
    }
}
