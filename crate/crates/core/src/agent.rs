//! Capabilities, robot models as capability products, runtime capability
//! modifications and the delta models used for incremental product updates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("capability `{0}` is not part of this robot")]
    UnknownCapability(String),
    #[error("capability `{cap}` has no state `{state}`")]
    UnknownState { cap: String, state: String },
    #[error("capability `{cap}` has no transition {from} -> {to} to remove")]
    MissingTransition { cap: String, from: String, to: String },
    #[error("capability `{cap}` already has transition {from} -> {to}")]
    DuplicateTransition { cap: String, from: String, to: String },
    #[error("capability `{cap}` declares state `{state}` twice")]
    DuplicateState { cap: String, state: String },
    #[error("capabilities `{a}` and `{b}` both use prop `{prop}`, which is not declared shared")]
    PropOverlap { a: String, b: String, prop: String },
    #[error("modification targets robot `{found}`, expected `{expected}`")]
    WrongRobot { expected: String, found: String },
    #[error("invalid capability `{cap}`: {msg}")]
    Invalid { cap: String, msg: String },
}

/// A capability state with its label set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapState {
    pub name: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTransition {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionRef {
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CapabilityDoc {
    name: String,
    states: Vec<CapState>,
    initial: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    props: Option<BTreeSet<String>>,
    #[serde(default)]
    transitions: Vec<WeightedTransition>,
}

/// A weighted labeled transition system over one robot faculty. State ids
/// are indices into the state list and are never reused, so they stay valid
/// across modifications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CapabilityDoc", into = "CapabilityDoc")]
pub struct Capability {
    name: String,
    states: Vec<CapState>,
    index: BTreeMap<String, u32>,
    initial: u32,
    props: BTreeSet<String>,
    transitions: BTreeMap<(u32, u32), f64>,
}

impl TryFrom<CapabilityDoc> for Capability {
    type Error = AgentError;

    fn try_from(doc: CapabilityDoc) -> Result<Self, AgentError> {
        let mut cap = Capability {
            name: doc.name.clone(),
            states: Vec::new(),
            index: BTreeMap::new(),
            initial: 0,
            props: doc.props.clone().unwrap_or_default(),
            transitions: BTreeMap::new(),
        };
        for s in doc.states {
            cap.push_state(s)?;
        }
        if doc.props.is_none() {
            cap.props = cap.states.iter().flat_map(|s| s.labels.iter().cloned()).collect();
        }
        for s in &cap.states {
            if let Some(l) = s.labels.iter().find(|l| !cap.props.contains(*l)) {
                return Err(AgentError::Invalid {
                    cap: cap.name.clone(),
                    msg: format!("label `{l}` of state `{}` is not a declared prop", s.name),
                });
            }
        }
        cap.initial = cap.id(&doc.initial)?;
        for t in doc.transitions {
            cap.add_transition(&t)?;
        }
        Ok(cap)
    }
}

impl From<Capability> for CapabilityDoc {
    fn from(c: Capability) -> Self {
        let transitions = c
            .transitions
            .iter()
            .map(|(&(a, b), &w)| WeightedTransition {
                from: c.states[a as usize].name.clone(),
                to: c.states[b as usize].name.clone(),
                weight: w,
            })
            .collect();
        CapabilityDoc {
            name: c.name.clone(),
            initial: c.states[c.initial as usize].name.clone(),
            props: Some(c.props.clone()),
            states: c.states,
            transitions,
        }
    }
}

impl Capability {
    pub fn new(
        name: &str,
        states: Vec<CapState>,
        initial: &str,
        transitions: Vec<WeightedTransition>,
    ) -> Result<Capability, AgentError> {
        Capability::try_from(CapabilityDoc {
            name: name.to_string(),
            states,
            initial: initial.to_string(),
            props: None,
            transitions,
        })
    }

    fn push_state(&mut self, s: CapState) -> Result<u32, AgentError> {
        if self.index.contains_key(&s.name) {
            return Err(AgentError::DuplicateState {
                cap: self.name.clone(),
                state: s.name,
            });
        }
        let id = self.states.len() as u32;
        self.index.insert(s.name.clone(), id);
        self.states.push(s);
        Ok(id)
    }

    fn add_transition(&mut self, t: &WeightedTransition) -> Result<(), AgentError> {
        if !(t.weight.is_finite() && t.weight >= 0.0) {
            return Err(AgentError::Invalid {
                cap: self.name.clone(),
                msg: format!("weight of {} -> {} must be finite and nonnegative", t.from, t.to),
            });
        }
        let key = (self.id(&t.from)?, self.id(&t.to)?);
        if self.transitions.insert(key, t.weight).is_some() {
            return Err(AgentError::DuplicateTransition {
                cap: self.name.clone(),
                from: t.from.clone(),
                to: t.to.clone(),
            });
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn id(&self, state: &str) -> Result<u32, AgentError> {
        self.index.get(state).copied().ok_or_else(|| AgentError::UnknownState {
            cap: self.name.clone(),
            state: state.to_string(),
        })
    }

    pub fn state(&self, id: u32) -> &CapState {
        &self.states[id as usize]
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> u32 {
        self.initial
    }

    pub fn props(&self) -> &BTreeSet<String> {
        &self.props
    }

    pub fn transitions(&self) -> &BTreeMap<(u32, u32), f64> {
        &self.transitions
    }

    /// Proper moves out of `x`; declared self-loops are covered by staying.
    fn moves_from(&self, x: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.transitions
            .range((x, 0)..=(x, u32::MAX))
            .filter(|((a, b), _)| a != b)
            .map(|(&(_, b), &w)| (b, w))
    }
}

/// A robot-model state: one state id per capability, in capability order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelState(pub Vec<u32>);

/// An explicit fragment of a robot model: a state set and weighted edges.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExplicitModel {
    pub states: BTreeSet<ModelState>,
    pub edges: BTreeMap<(ModelState, ModelState), f64>,
}

impl ExplicitModel {
    pub fn is_empty(&self) -> bool {
        self.states.is_empty() && self.edges.is_empty()
    }
}

/// The parts of the product touched by a modification: edges removed from the
/// current model, and edges present only after applying it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelDelta {
    pub removal: ExplicitModel,
    pub addition: ExplicitModel,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapabilityAddition {
    #[serde(default)]
    pub states: Vec<CapState>,
    #[serde(default)]
    pub transitions: Vec<WeightedTransition>,
}

/// A runtime change to one robot's capabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modification {
    pub robot: String,
    pub time: u64,
    #[serde(default)]
    pub add: BTreeMap<String, CapabilityAddition>,
    #[serde(default)]
    pub remove: BTreeMap<String, Vec<TransitionRef>>,
}

impl Modification {
    pub fn has_additions(&self) -> bool {
        self.add.values().any(|a| !a.transitions.is_empty() || !a.states.is_empty())
    }

    pub fn has_removals(&self) -> bool {
        self.remove.values().any(|r| !r.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        !self.has_additions() && !self.has_removals()
    }
}

/// Product of a robot's capabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    robot: String,
    capabilities: Vec<Capability>,
}

impl RobotModel {
    /// Compose capabilities. Props may be shared between capabilities only
    /// when listed in `shared_props`.
    pub fn compose(
        robot: &str,
        capabilities: Vec<Capability>,
        shared_props: &BTreeSet<String>,
    ) -> Result<RobotModel, AgentError> {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for c in &capabilities {
            if !seen.insert(&c.name) {
                return Err(AgentError::Invalid {
                    cap: c.name.clone(),
                    msg: "capability listed twice".into(),
                });
            }
        }
        for (i, a) in capabilities.iter().enumerate() {
            for b in &capabilities[i + 1..] {
                if let Some(p) = a.props.intersection(&b.props).find(|p| !shared_props.contains(*p)) {
                    return Err(AgentError::PropOverlap {
                        a: a.name.clone(),
                        b: b.name.clone(),
                        prop: p.clone(),
                    });
                }
            }
        }
        Ok(RobotModel {
            robot: robot.to_string(),
            capabilities,
        })
    }

    pub fn robot(&self) -> &str {
        &self.robot
    }

    pub fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    pub fn capability(&self, name: &str) -> Result<(usize, &Capability), AgentError> {
        self.capabilities
            .iter()
            .enumerate()
            .find(|(_, c)| c.name == name)
            .ok_or_else(|| AgentError::UnknownCapability(name.to_string()))
    }

    pub fn initial(&self) -> ModelState {
        ModelState(self.capabilities.iter().map(|c| c.initial).collect())
    }

    pub fn num_states(&self) -> usize {
        self.capabilities.iter().map(|c| c.num_states()).product()
    }

    pub fn props(&self) -> BTreeSet<String> {
        self.capabilities.iter().flat_map(|c| c.props.iter().cloned()).collect()
    }

    pub fn labels(&self, s: &ModelState) -> BTreeSet<String> {
        self.capabilities
            .iter()
            .zip(&s.0)
            .flat_map(|(c, &x)| c.state(x).labels.iter().cloned())
            .collect()
    }

    /// Human-readable state name: component names joined by `|`.
    pub fn state_name(&self, s: &ModelState) -> String {
        self.capabilities
            .iter()
            .zip(&s.0)
            .map(|(c, &x)| c.state(x).name.as_str())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn parse_state(&self, name: &str) -> Result<ModelState, AgentError> {
        let parts: Vec<&str> = name.split('|').collect();
        if parts.len() != self.capabilities.len() {
            return Err(AgentError::Invalid {
                cap: self.robot.clone(),
                msg: format!("state `{name}` does not have one component per capability"),
            });
        }
        self.capabilities
            .iter()
            .zip(parts)
            .map(|(c, p)| c.id(p))
            .collect::<Result<_, _>>()
            .map(ModelState)
    }

    /// Moves out of `s`: every nonempty subset of components advances along a
    /// proper transition, the others stay. The weight sums the movers.
    pub fn successors(&self, s: &ModelState) -> Vec<(ModelState, f64)> {
        let mut out = vec![(Vec::with_capacity(s.0.len()), 0.0, false)];
        for (c, &x) in self.capabilities.iter().zip(&s.0) {
            let mut next = Vec::new();
            for (prefix, w, moved) in &out {
                let mut stay = prefix.clone();
                stay.push(x);
                next.push((stay, *w, *moved));
                for (y, wy) in c.moves_from(x) {
                    let mut mv = prefix.clone();
                    mv.push(y);
                    next.push((mv, w + wy, true));
                }
            }
            out = next;
        }
        out.into_iter()
            .filter(|(_, _, moved)| *moved)
            .map(|(v, w, _)| (ModelState(v), w))
            .collect()
    }

    pub fn weight(&self, s: &ModelState, t: &ModelState) -> Option<f64> {
        self.successors(s).into_iter().find(|(u, _)| u == t).map(|(_, w)| w)
    }

    pub fn all_states(&self) -> Vec<ModelState> {
        let mut out = vec![Vec::new()];
        for c in &self.capabilities {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..c.num_states() as u32).map(move |x| {
                        let mut v = p.clone();
                        v.push(x);
                        v
                    })
                })
                .collect();
        }
        out.into_iter().map(ModelState).collect()
    }

    /// The whole model as an explicit graph.
    pub fn explicit(&self) -> ExplicitModel {
        let states: BTreeSet<ModelState> = self.all_states().into_iter().collect();
        let mut edges = BTreeMap::new();
        for s in &states {
            for (t, w) in self.successors(s) {
                edges.insert((s.clone(), t), w);
            }
        }
        ExplicitModel { states, edges }
    }

    fn check_target(&self, m: &Modification) -> Result<(), AgentError> {
        if m.robot != self.robot {
            return Err(AgentError::WrongRobot {
                expected: self.robot.clone(),
                found: m.robot.clone(),
            });
        }
        Ok(())
    }

    /// Apply a modification: removals first, then additions.
    pub fn apply(&self, m: &Modification) -> Result<RobotModel, AgentError> {
        self.check_target(m)?;
        let mut out = self.clone();
        for (cap, removed) in &m.remove {
            let (i, _) = self.capability(cap)?;
            let c = &mut out.capabilities[i];
            for t in removed {
                let key = (c.id(&t.from)?, c.id(&t.to)?);
                if c.transitions.remove(&key).is_none() {
                    return Err(AgentError::MissingTransition {
                        cap: cap.clone(),
                        from: t.from.clone(),
                        to: t.to.clone(),
                    });
                }
            }
        }
        for (cap, added) in &m.add {
            let (i, _) = self.capability(cap)?;
            let c = &mut out.capabilities[i];
            for s in &added.states {
                c.push_state(s.clone())?;
                c.props.extend(s.labels.iter().cloned());
            }
            for t in &added.transitions {
                c.add_transition(t)?;
            }
        }
        Ok(out)
    }

    /// Delta model of a modification. The removal part holds every current
    /// edge in which some component takes a removed proper transition,
    /// together with its endpoints. The addition part is the product of each
    /// added transition set with the other capabilities of the modified
    /// model, restricted to edges that take an added transition.
    pub fn delta_model(&self, m: &Modification) -> Result<ModelDelta, AgentError> {
        let after = self.apply(m)?;
        let mut delta = ModelDelta::default();

        let mut removed: Vec<BTreeSet<(u32, u32)>> = vec![BTreeSet::new(); self.capabilities.len()];
        for (cap, ts) in &m.remove {
            let (i, c) = self.capability(cap)?;
            for t in ts {
                let (a, b) = (c.id(&t.from)?, c.id(&t.to)?);
                if a != b {
                    removed[i].insert((a, b));
                }
            }
        }
        if removed.iter().any(|r| !r.is_empty()) {
            for s in self.all_states() {
                for (t, w) in self.successors(&s) {
                    let hit = (0..s.0.len()).any(|i| removed[i].contains(&(s.0[i], t.0[i])));
                    if hit {
                        delta.removal.states.insert(s.clone());
                        delta.removal.states.insert(t.clone());
                        delta.removal.edges.insert((s.clone(), t), w);
                    }
                }
            }
        }

        let mut added: Vec<BTreeSet<(u32, u32)>> = vec![BTreeSet::new(); self.capabilities.len()];
        for (cap, a) in &m.add {
            let (i, c) = after.capability(cap)?;
            for t in &a.transitions {
                let (x, y) = (c.id(&t.from)?, c.id(&t.to)?);
                if x != y {
                    added[i].insert((x, y));
                }
            }
        }
        if added.iter().any(|a| !a.is_empty()) {
            for s in after.all_states() {
                let touches = (0..s.0.len()).any(|i| added[i].iter().any(|(x, _)| *x == s.0[i]));
                if !touches {
                    continue;
                }
                for (t, w) in after.successors(&s) {
                    let hit = (0..s.0.len()).any(|i| added[i].contains(&(s.0[i], t.0[i])));
                    if hit {
                        delta.addition.states.insert(s.clone());
                        delta.addition.states.insert(t.clone());
                        delta.addition.edges.insert((s.clone(), t), w);
                    }
                }
            }
        }
        Ok(delta)
    }
}

impl fmt::Display for ModelState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}
