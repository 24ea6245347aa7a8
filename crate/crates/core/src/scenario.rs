//! Scenario documents: a capability library, the robots built from it, a
//! task, and a schedule of capability changes.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{AgentError, Capability, Modification, RobotModel};
use crate::omega::{translate, BuchiAutomaton, OmegaError};
use crate::product::ProductAutomaton;
use crate::schema;
use crate::sim::Horizon;
use crate::spec_lang::{parse_task, rewrite, SpecError, Task};
use crate::synth::{SynthConfig, TeamPlan, DEFAULT_BOUND};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Schema(String),
    #[error("task: {0}")]
    Task(#[from] SpecError),
    #[error("automaton: {0}")]
    Automaton(#[from] OmegaError),
    #[error("robot `{robot}`: {source}")]
    Robot { robot: String, source: AgentError },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotDoc {
    pub name: String,
    /// Names from the capability library.
    pub capabilities: Vec<String>,
    /// Initial state per capability, overriding the library default.
    #[serde(default)]
    pub initial: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    /// Task file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    /// Task text given inline instead of a file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_text: Option<String>,
    /// Hand-written automaton file used instead of translating the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub automaton: Option<String>,
    /// Props that several capabilities of one robot may share.
    #[serde(default)]
    pub shared_props: BTreeSet<String>,
    pub capabilities: Vec<Capability>,
    pub robots: Vec<RobotDoc>,
    #[serde(default)]
    pub schedule: Vec<Modification>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<String>,
}

/// A loaded and checked scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub task_text: String,
    pub task: Task,
    pub buchi: Arc<BuchiAutomaton>,
    pub models: Vec<RobotModel>,
    pub schedule: Vec<Modification>,
    pub seed: u64,
    pub bound: usize,
    pub horizon: Horizon,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::from_json(&text, base)
    }

    /// Parse a scenario whose relative file references resolve against
    /// `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let tag = probe.get("schema").and_then(|v| v.as_str()).unwrap_or("");
        schema::check(tag, schema::SCENARIO).map_err(ScenarioError::Schema)?;
        let doc: ScenarioDoc = serde_json::from_value(probe)?;
        Scenario::from_doc(doc, base)
    }

    pub fn from_doc(doc: ScenarioDoc, base: &Path) -> Result<Scenario, ScenarioError> {
        let task_text = match (&doc.task, &doc.task_text) {
            (Some(f), None) => read(&base.join(f))?,
            (None, Some(t)) => t.clone(),
            _ => return Err(ScenarioError::Invalid("give exactly one of `task` and `task_text`".into())),
        };
        let task = parse_task(&task_text)?;
        let buchi = match &doc.automaton {
            Some(f) => {
                let v: serde_json::Value = serde_json::from_str(&read(&base.join(f))?)?;
                BuchiAutomaton::from_json(&v)?
            }
            None => translate(&rewrite(&task))?,
        };
        let models = build_models(&doc)?;
        check_schedule(&doc.schedule, &models)?;
        let horizon = match &doc.horizon {
            Some(h) => h.parse().map_err(ScenarioError::Invalid)?,
            None => Horizon::default(),
        };
        Ok(Scenario {
            name: doc.name,
            task_text,
            task,
            buchi: Arc::new(buchi),
            models,
            schedule: doc.schedule,
            seed: doc.seed,
            bound: doc.bound.unwrap_or(DEFAULT_BOUND),
            horizon,
        })
    }

    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            bound: self.bound,
            seed: self.seed,
        }
    }

    /// Products of every robot from its initial state.
    pub fn products(&self) -> Vec<ProductAutomaton> {
        use rayon::prelude::*;
        self.models
            .par_iter()
            .map(|m| ProductAutomaton::build(m.clone(), self.buchi.clone(), self.task.context()))
            .collect()
    }

    /// Fingerprint of everything a plan depends on: task, automaton and
    /// robot models. The schedule, seed and horizon are left out so one plan
    /// serves several runs.
    pub fn hash(&self) -> String {
        let doc = serde_json::json!({
            "task": self.task_text.trim(),
            "automaton": self.buchi.to_json(),
            "models": self.models,
        });
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&doc).expect("scenario parts serialize"));
        hex::encode(h.finalize())
    }
}

fn build_models(doc: &ScenarioDoc) -> Result<Vec<RobotModel>, ScenarioError> {
    let library: BTreeMap<&str, &Capability> = doc.capabilities.iter().map(|c| (c.name(), c)).collect();
    if library.len() != doc.capabilities.len() {
        return Err(ScenarioError::Invalid("capability library lists a name twice".into()));
    }
    let mut names = BTreeSet::new();
    let mut out = Vec::new();
    for r in &doc.robots {
        if !names.insert(&r.name) {
            return Err(ScenarioError::Invalid(format!("robot `{}` is declared twice", r.name)));
        }
        let err = |source| ScenarioError::Robot {
            robot: r.name.clone(),
            source,
        };
        if let Some(c) = r.initial.keys().find(|c| !r.capabilities.contains(c)) {
            return Err(err(AgentError::UnknownCapability(c.clone())));
        }
        let mut caps = Vec::new();
        for name in &r.capabilities {
            let cap = library
                .get(name.as_str())
                .ok_or_else(|| err(AgentError::UnknownCapability(name.clone())))?;
            caps.push(match r.initial.get(name) {
                Some(s) => with_initial(cap, s).map_err(err)?,
                None => (*cap).clone(),
            });
        }
        out.push(RobotModel::compose(&r.name, caps, &doc.shared_props).map_err(err)?);
    }
    if out.is_empty() {
        return Err(ScenarioError::Invalid("scenario has no robots".into()));
    }
    Ok(out)
}

fn with_initial(cap: &Capability, state: &str) -> Result<Capability, AgentError> {
    cap.id(state)?;
    let mut v = serde_json::to_value(cap).expect("capabilities serialize");
    v["initial"] = serde_json::Value::String(state.to_string());
    serde_json::from_value(v).map_err(|e| AgentError::Invalid {
        cap: cap.name().to_string(),
        msg: e.to_string(),
    })
}

fn check_schedule(schedule: &[Modification], models: &[RobotModel]) -> Result<(), ScenarioError> {
    let mut current: BTreeMap<&str, RobotModel> = models.iter().map(|m| (m.robot(), m.clone())).collect();
    let mut last: Option<u64> = None;
    for m in schedule {
        if last.is_some_and(|l| m.time <= l) {
            return Err(ScenarioError::Invalid(format!(
                "schedule times must strictly increase (t={} after t={})",
                m.time,
                last.unwrap_or(0)
            )));
        }
        last = Some(m.time);
        let model = current
            .get_mut(m.robot.as_str())
            .ok_or_else(|| ScenarioError::Invalid(format!("schedule names unknown robot `{}`", m.robot)))?;
        *model = model.apply(m).map_err(|source| ScenarioError::Robot {
            robot: m.robot.clone(),
            source,
        })?;
    }
    Ok(())
}

/// A team plan as written to disk, tied to the scenario it was made for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub schema: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub bound: usize,
    pub automaton: serde_json::Value,
    pub plan: TeamPlan,
}

impl PlanFile {
    pub fn new(scenario: &Scenario, cfg: SynthConfig, plan: TeamPlan) -> PlanFile {
        PlanFile {
            schema: schema::PLAN.to_string(),
            scenario_hash: scenario.hash(),
            seed: cfg.seed,
            bound: cfg.bound,
            automaton: scenario.buchi.to_json(),
            plan,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plans serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<PlanFile, ScenarioError> {
        let probe: serde_json::Value = serde_json::from_str(text)?;
        let tag = probe.get("schema").and_then(|v| v.as_str()).unwrap_or("");
        schema::check(tag, schema::PLAN).map_err(ScenarioError::Schema)?;
        Ok(serde_json::from_value(probe)?)
    }

    /// Refuse a plan made for different robots, task or automaton.
    pub fn check_matches(&self, scenario: &Scenario) -> Result<(), ScenarioError> {
        if self.scenario_hash != scenario.hash() {
            return Err(ScenarioError::Invalid(
                "plan was made for a different scenario (hash mismatch)".into(),
            ));
        }
        Ok(())
    }
}
