//! Scenario files: which workflow and catalog to use, which schedulers to
//! run, the event trace and overrides of the default parameters.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{CatalogError, CloudCatalog};
use crate::events::{generate_events, EventSpec, VelocityChangeEvent};
use crate::experiment::{run_paired, PairedRun, RepOutcome};
use crate::ga::GaParams;
use crate::greedy::GreedyParams;
use crate::problem::Problem;
use crate::scalar::Scalar;
use crate::seed;
use crate::sim::{SchedulerKind, SimError};
use crate::workflow::{generate, GeneratorParams, Size, Structure, StreamWorkflow, WorkflowError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario not found: {0}")]
    NotFound(PathBuf),
    #[error("scenario schema error: {0}")]
    Schema(#[from] toml::de::Error),
    #[error("workflow: {0}")]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub structure: Structure,
    pub size: Size,
    #[serde(default)]
    pub seed: u64,
}

/// Either a workflow file or generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

/// Explicit events, or settings to draw them per repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EventsConfig {
    List { list: Vec<VelocityChangeEvent> },
    Spec(EventSpec),
}

impl Default for EventsConfig {
    fn default() -> Self {
        EventsConfig::Spec(EventSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub workflow: WorkflowRef,
    /// Catalog file; the built-in catalog when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    #[serde(default = "all_schedulers")]
    pub schedulers: Vec<SchedulerKind>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Rate of every external source at second 0, in units. Defaults to
    /// 5 for increase traces and 10 for decrease traces when events are
    /// drawn, else to the workflow's declared rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_source_units: Option<u64>,
    #[serde(default)]
    pub events: EventsConfig,
    #[serde(default)]
    pub ga: GaParams,
    #[serde(default)]
    pub greedy: GreedyParams,
}

fn all_schedulers() -> Vec<SchedulerKind> {
    SchedulerKind::ALL.to_vec()
}

fn default_horizon() -> u64 {
    180
}

fn default_reps() -> usize {
    10
}

fn default_seed() -> u64 {
    1
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Loads a scenario; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|_| ScenarioError::NotFound(path.to_path_buf()))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.workflow.path.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = cfg.catalog.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
        match (&self.workflow.path, &self.workflow.generate) {
            (Some(_), Some(_)) => return bad("workflow needs exactly one of `path` and `generate`"),
            (None, None) => return bad("workflow needs `path` or `generate`"),
            _ => {}
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.reps == 0 {
            return bad("reps must be positive");
        }
        if self.schedulers.is_empty() {
            return bad("at least one scheduler is required");
        }
        if let EventsConfig::List { list } = &self.events {
            if list.windows(2).any(|w| w[0].at_second >= w[1].at_second) {
                return bad("events must be sorted with at most one per second");
            }
        }
        self.ga.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn load_catalog<T: Scalar>(&self) -> Result<CloudCatalog<T>, ScenarioError> {
        Ok(match &self.catalog {
            Some(p) => CloudCatalog::load(p)?,
            None => CloudCatalog::default_catalog(),
        })
    }

    /// The workflow with the initial source rates applied.
    pub fn load_workflow<T: Scalar>(&self, catalog: &CloudCatalog<T>) -> Result<StreamWorkflow<T>, ScenarioError> {
        let w = match (&self.workflow.path, &self.workflow.generate) {
            (Some(p), _) => StreamWorkflow::load(p)?,
            (None, Some(g)) => generate(g.structure, g.size, &catalog.cloud_ids(), &GeneratorParams::default(), g.seed),
            (None, None) => unreachable!("checked"),
        };
        let units = match (self.initial_source_units, &self.events) {
            (Some(u), _) => Some(u),
            (None, EventsConfig::Spec(spec)) => Some(spec.direction.default_source_units()),
            (None, EventsConfig::List { .. }) => None,
        };
        match units {
            Some(u) => {
                let mut d = w.document().clone();
                for s in &mut d.sources {
                    s.rate_units = u;
                }
                Ok(StreamWorkflow::try_from(d)?)
            }
            None => Ok(w),
        }
    }

    /// Seed of repetition `rep`.
    pub fn rep_seed(&self, rep: usize) -> u64 {
        seed::derive(self.seed, "rep", rep as u64)
    }

    /// Events of repetition `rep`.
    pub fn events_for<T: Scalar>(&self, w: &StreamWorkflow<T>, rep: usize) -> Vec<VelocityChangeEvent> {
        match &self.events {
            EventsConfig::List { list } => list.clone(),
            EventsConfig::Spec(spec) => generate_events(
                w,
                &w.default_source_units(),
                spec,
                seed::derive(self.rep_seed(rep), "events", 0),
            ),
        }
    }
}

/// Runs every repetition of a scenario, in parallel. Outcomes come back in
/// repetition order.
pub fn run_scenario<T: Scalar>(p: &Problem<'_, T>, cfg: &ScenarioConfig) -> Result<Vec<RepOutcome<T>>, SimError> {
    let run_cfg = PairedRun {
        schedulers: &cfg.schedulers,
        horizon: cfg.horizon,
        ga: &cfg.ga,
        greedy: cfg.greedy,
    };
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_paired(p, &run_cfg, &cfg.events_for(p.workflow, rep), rep, cfg.rep_seed(rep)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Direction, Range};

    const MINIMAL: &str = r#"
schedulers = ["adaptive", "baseline"]
reps = 2

[workflow.generate]
structure = "montage"
size = "small"
seed = 4

[events]
direction = "decrease"
range = "high"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.horizon, 180);
        assert_eq!(c.ga, GaParams::default());
        let EventsConfig::Spec(spec) = &c.events else { panic!("spec expected") };
        assert_eq!((spec.direction, spec.range, spec.count, spec.spacing), (Direction::Decrease, Range::High, 2, 10));
        let cat = c.load_catalog::<f64>().unwrap();
        let w = c.load_workflow(&cat).unwrap();
        assert_eq!(w.service_count(), 25);
        assert!(w.sources().iter().all(|s| s.rate_units == 10));
        assert_eq!(c.events_for(&w, 1), c.events_for(&w, 1));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn explicit_event_list() {
        let text = r#"
[workflow.generate]
structure = "inspiral"
size = "small"

[[events.list]]
at_second = 5
source = "ex_0"
direction = "increase"
range = "low"
delta_units = 1
"#;
        let c = ScenarioConfig::from_toml(text).unwrap();
        let cat = c.load_catalog::<f64>().unwrap();
        let w = c.load_workflow(&cat).unwrap();
        assert_eq!(c.events_for(&w, 0).len(), 1);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(matches!(ScenarioConfig::from_toml("horizon = 5"), Err(ScenarioError::Schema(_))));
        let both = "[workflow]\npath = \"a.json\"\n[workflow.generate]\nstructure = \"montage\"\nsize = \"small\"\n";
        assert!(matches!(ScenarioConfig::from_toml(both), Err(ScenarioError::Invalid(_))));
        let zero = format!("horizon = 0\n{MINIMAL}");
        assert!(matches!(ScenarioConfig::from_toml(&zero), Err(ScenarioError::Invalid(_))));
        assert!(matches!(
            ScenarioConfig::load(Path::new("/nonexistent/scenario.toml")),
            Err(ScenarioError::NotFound(_))
        ));
    }

    #[test]
    fn missing_catalog_is_reported() {
        let text = format!("catalog = \"/nonexistent/catalog.toml\"\n{MINIMAL}");
        let c = ScenarioConfig::from_toml(&text).unwrap();
        let err = c.load_catalog::<f64>().unwrap_err();
        assert!(err.to_string().contains("catalog not found"), "{err}");
    }
}
