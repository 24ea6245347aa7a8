//! Online adaptation: decide how to react when one robot's capabilities
//! change, from doing nothing up to resynthesizing the whole team.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, Modification, RobotModel};
use crate::alloc::{allocate, changed_robots, AllocationProblem, Assignment};
use crate::binding::BindingSet;
use crate::omega::{BuchiAutomaton, Lasso};
use crate::product::{failed_bindings, feasible_bindings, slice_for, LayerNode, ProductAutomaton, ProductState, ProgressSlice};
use crate::spec_lang::Task;
use crate::synth::{
    extract_behavior, local_resynthesize, sync_obligations, synthesize, Behavior, SynthConfig, SynthError,
    SyncObligation, TeamPlan,
};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("unknown robot {0}")]
    UnknownRobot(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("plan does not fit the team: {0}")]
    Mismatch(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Continue,
    /// The changed robot was replanned and now holds `r_new`.
    Local { r_new: BindingSet },
    Reallocate { assignment: Assignment },
    Full { assignment: Assignment, beta: Lasso },
    TaskFailed,
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Continue => "CONTINUE",
            Outcome::Local { .. } => "LOCAL",
            Outcome::Reallocate { .. } => "REALLOCATE",
            Outcome::Full { .. } => "FULL",
            Outcome::TaskFailed => "TASK_FAILED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub t: u64,
    pub robot: String,
    /// Escalation step that produced the outcome, 1 to 4.
    pub step: u8,
    #[serde(flatten)]
    pub outcome: Outcome,
    pub r_fail: Option<BindingSet>,
    /// Robots whose binding set changed.
    pub changed: Vec<String>,
    /// Robots whose behavior was replaced.
    pub resynthesized: Vec<String>,
    pub rationale: Vec<String>,
    /// Per-robot feasible sets computed during reallocation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub feasible: BTreeMap<String, Vec<BindingSet>>,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

/// One robot as seen by the coordinator.
#[derive(Clone, Debug)]
pub struct RobotRuntime {
    pub name: String,
    /// Capabilities as they really are, stored changes included.
    pub model: RobotModel,
    pub product: ProductAutomaton,
    /// Changes not yet folded into `product`.
    pub ledger: Vec<Modification>,
    pub behavior: Behavior,
    /// Bumped each time `behavior` is replaced.
    pub version: u64,
    /// Index into `behavior.nodes`.
    pub position: usize,
    pub slice: ProgressSlice,
}

impl RobotRuntime {
    pub fn node(&self) -> &LayerNode {
        &self.behavior.nodes[self.position]
    }

    fn replace_behavior(&mut self, b: Behavior, slice: ProgressSlice) {
        self.behavior = b;
        self.position = 0;
        self.slice = slice;
        self.version += 1;
    }
}

#[derive(Clone, Debug)]
pub struct Team {
    pub task: Task,
    pub buchi: Arc<BuchiAutomaton>,
    pub beta: Lasso,
    pub assignment: Assignment,
    pub obligations: Vec<SyncObligation>,
    pub robots: Vec<RobotRuntime>,
    pub cfg: SynthConfig,
    /// Bumped whenever the assignment or lasso changes.
    pub epoch: u64,
}

impl Team {
    /// Start executing `plan`. `products` are the ones the plan was made
    /// from, in robot order.
    pub fn new(task: Task, products: Vec<ProductAutomaton>, plan: TeamPlan, cfg: SynthConfig) -> Result<Team, RuntimeError> {
        let buchi = products
            .first()
            .map(|g| g.buchi_arc())
            .ok_or_else(|| RuntimeError::Mismatch("no robots".into()))?;
        let mut robots = Vec::new();
        for g in products {
            let name = g.model().robot().to_string();
            let behavior = plan
                .behaviors
                .get(&name)
                .cloned()
                .ok_or_else(|| RuntimeError::Mismatch(format!("no behavior for {name}")))?;
            let slice = ProgressSlice::initial(&name, g.initial().s.clone(), &plan.beta, &buchi);
            if behavior.nodes.first().map(|n| n.s != slice.state.s).unwrap_or(true) {
                return Err(RuntimeError::Mismatch(format!("behavior of {name} does not start at its initial state")));
            }
            robots.push(RobotRuntime {
                name,
                model: g.model().clone(),
                product: g,
                ledger: Vec::new(),
                behavior,
                version: 0,
                position: 0,
                slice,
            });
        }
        Ok(Team {
            task,
            buchi,
            beta: plan.beta,
            assignment: plan.assignment,
            obligations: plan.obligations,
            robots,
            cfg,
            epoch: 0,
        })
    }

    pub fn robot(&self, name: &str) -> Option<&RobotRuntime> {
        self.robots.iter().find(|r| r.name == name)
    }

    fn index(&self, name: &str) -> Result<usize, RuntimeError> {
        self.robots
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| RuntimeError::UnknownRobot(name.to_string()))
    }

    /// Slice of robot `j` for its current behavior position.
    pub fn slice_at(&self, j: usize) -> &ProgressSlice {
        &self.robots[j].slice
    }

    /// React to a change of one robot's capabilities.
    pub fn handle(&mut self, m: &Modification) -> Result<Decision, RuntimeError> {
        let started = Instant::now();
        let mi = self.index(&m.robot)?;
        let mut d = self.escalate(mi, m)?;
        d.elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        log::info!("t={} {} -> {} (step {})", d.t, m.robot, d.outcome.name(), d.step);
        Ok(d)
    }

    fn decision(&self, m: &Modification, step: u8, outcome: Outcome, rationale: Vec<String>) -> Decision {
        Decision {
            t: m.time,
            robot: m.robot.clone(),
            step,
            outcome,
            r_fail: None,
            changed: Vec::new(),
            resynthesized: Vec::new(),
            rationale,
            feasible: BTreeMap::new(),
            elapsed_ms: 0.0,
        }
    }

    fn escalate(&mut self, mi: usize, m: &Modification) -> Result<Decision, RuntimeError> {
        let mut why = Vec::new();

        // Step 1: nothing the robot still has to do is affected.
        let before = self.robots[mi].model.clone();
        let after = before.apply(m)?;
        let broken = behavior_broken(&self.robots[mi].behavior, self.robots[mi].position, m, &before)?;
        self.robots[mi].model = after;
        if !broken {
            why.push(if m.has_removals() {
                "step 1: removed transitions are not used by the rest of the behavior; stored".to_string()
            } else {
                "step 1: capabilities only grew; stored".to_string()
            });
            self.robots[mi].ledger.push(m.clone());
            return Ok(self.decision(m, 1, Outcome::Continue, why));
        }
        why.push("step 1: the remaining behavior uses a removed transition".into());

        // Step 2: drop what the robot can no longer do if others cover it.
        let (beta, slice_m) = (self.beta.clone(), self.robots[mi].slice.clone());
        {
            let r = &mut self.robots[mi];
            let pending: Vec<Modification> = r.ledger.drain(..).chain([m.clone()]).collect();
            for p in &pending {
                r.product.fold(p, &beta, &slice_m)?;
            }
            r.product.expand_from(&slice_m.state);
        }
        let feasible_m = feasible_bindings(&self.robots[mi].product, &slice_m, &beta);
        let r_m = self.assignment[&m.robot].clone();
        let r_fail = failed_bindings(&feasible_m, &r_m);
        let r_new = r_m.difference(&r_fail);
        let covered = coverage_ok(&r_fail, &m.robot, &r_new, &self.assignment, &self.task);
        let admissible = r_new.is_empty() || feasible_m.contains(&r_new);
        if covered && admissible {
            match local_resynthesize(&self.robots[mi].product, &beta, &slice_m, &r_new) {
                Ok(b) => {
                    why.push(format!("step 2: failed bindings {r_fail} are covered by other robots"));
                    let r = &mut self.robots[mi];
                    r.replace_behavior(b, slice_m);
                    let changed = if r_fail.is_empty() { vec![] } else { vec![m.robot.clone()] };
                    if !r_fail.is_empty() {
                        self.assignment.insert(m.robot.clone(), r_new.clone());
                        self.obligations = sync_obligations(&self.buchi, &self.beta, &self.assignment);
                        self.epoch += 1;
                    }
                    let mut d = self.decision(
                        m,
                        2,
                        Outcome::Local { r_new },
                        why,
                    );
                    d.r_fail = Some(r_fail);
                    d.changed = changed;
                    d.resynthesized = vec![m.robot.clone()];
                    return Ok(d);
                }
                Err(e) => why.push(format!("step 2: local resynthesis failed ({e})")),
            }
        } else if !covered {
            why.push(format!("step 2: failed bindings {r_fail} are not covered by the rest of the team"));
        } else {
            why.push(format!("step 2: the robot cannot hold the remaining set {r_new}"));
        }

        // Step 3: reallocate bindings with everyone's stored changes folded in.
        // Robots without bindings never advance, so they join at m's layer.
        let slices: Vec<ProgressSlice> = self
            .robots
            .iter()
            .map(|r| {
                if self.assignment[&r.name].is_empty() {
                    ProgressSlice {
                        robot: r.name.clone(),
                        layer: slice_m.layer,
                        state: ProductState {
                            s: r.slice.state.s.clone(),
                            z: slice_m.state.z,
                        },
                        progress: slice_m.progress,
                    }
                } else {
                    slice_for(&r.slice, &slice_m)
                }
            })
            .collect();
        self.robots.par_iter_mut().zip(&slices).try_for_each(|(r, s)| -> Result<(), AgentError> {
            for p in r.ledger.drain(..) {
                r.product.fold(&p, &beta, s)?;
            }
            r.product.expand_from(&s.state);
            Ok(())
        })?;
        let feasible: Vec<Vec<BindingSet>> = self
            .robots
            .par_iter()
            .zip(&slices)
            .map(|(r, s)| feasible_bindings(&r.product, s, &beta))
            .collect();
        let problem = AllocationProblem {
            bindings: self.task.bindings(),
            robots: self.robots.iter().map(|r| r.name.clone()).collect(),
            candidates: feasible.clone(),
            original: self.robots.iter().map(|r| self.assignment[&r.name].clone()).collect(),
            min: self.task.min.clone(),
            distinct: self.task.distinct.clone(),
        };
        let feasible_map: BTreeMap<String, Vec<BindingSet>> = problem.robots.iter().cloned().zip(feasible).collect();
        if let Some(new) = allocate(&problem, self.cfg.seed) {
            let changed = changed_robots(&self.assignment, &new);
            let redo: BTreeSet<usize> = (0..self.robots.len())
                .filter(|&j| j == mi || changed.contains(&self.robots[j].name))
                .collect();
            let fresh: Result<Vec<(usize, Behavior)>, SynthError> = redo
                .par_iter()
                .map(|&j| {
                    let r = &self.robots[j];
                    extract_behavior(&r.product, &beta, &slices[j], &new[&r.name]).map(|b| (j, b))
                })
                .collect();
            match fresh {
                Ok(fresh) => {
                    why.push(format!("step 3: reallocation changed {} robots", changed.len()));
                    let resynthesized = fresh.iter().map(|(j, _)| self.robots[*j].name.clone()).collect();
                    for (j, b) in fresh {
                        let s = slices[j].clone();
                        self.robots[j].replace_behavior(b, s);
                    }
                    self.assignment = new.clone();
                    self.obligations = sync_obligations(&self.buchi, &self.beta, &self.assignment);
                    self.epoch += 1;
                    let mut d = self.decision(m, 3, Outcome::Reallocate { assignment: new }, why);
                    d.r_fail = Some(r_fail);
                    d.changed = changed;
                    d.resynthesized = resynthesized;
                    d.feasible = feasible_map;
                    return Ok(d);
                }
                Err(e) => why.push(format!("step 3: behavior extraction failed ({e})")),
            }
        } else {
            why.push("step 3: no reallocation covers every binding".into());
        }

        // Step 4: synthesize a new team plan from where everyone stands.
        let products: Vec<ProductAutomaton> = self
            .robots
            .par_iter()
            .map(|r| {
                let start = ProductState {
                    s: r.node().s.clone(),
                    z: self.buchi.initial(),
                };
                ProductAutomaton::build_from(r.model.clone(), self.buchi.clone(), self.task.context(), start)
            })
            .collect();
        match synthesize(&products, &self.task, self.cfg) {
            Ok(plan) => {
                why.push("step 4: a new team plan was found".into());
                let changed = changed_robots(&self.assignment, &plan.assignment);
                for (r, g) in self.robots.iter_mut().zip(products) {
                    let slice = ProgressSlice::initial(&r.name, g.initial().s.clone(), &plan.beta, &self.buchi);
                    r.product = g;
                    r.replace_behavior(plan.behaviors[&r.name].clone(), slice);
                }
                self.beta = plan.beta.clone();
                self.assignment = plan.assignment.clone();
                self.obligations = plan.obligations;
                self.epoch += 1;
                let mut d = self.decision(
                    m,
                    4,
                    Outcome::Full {
                        assignment: plan.assignment,
                        beta: plan.beta,
                    },
                    why,
                );
                d.r_fail = Some(r_fail);
                d.changed = changed;
                d.resynthesized = self.robots.iter().map(|r| r.name.clone()).collect();
                d.feasible = plan.feasible;
                Ok(d)
            }
            Err(e) => {
                why.push(format!("step 4: {e}"));
                let mut d = self.decision(m, 4, Outcome::TaskFailed, why);
                d.r_fail = Some(r_fail);
                Ok(d)
            }
        }
    }
}

/// Whether a step of `b` not yet executed from `position` on crosses a
/// transition that `m` removes. `model` is the robot before the change.
pub fn behavior_broken(b: &Behavior, position: usize, m: &Modification, model: &RobotModel) -> Result<bool, AgentError> {
    let mut removed: BTreeSet<(usize, u32, u32)> = BTreeSet::new();
    for (cap, ts) in &m.remove {
        let (ci, c) = model.capability(cap)?;
        for t in ts {
            removed.insert((ci, c.id(&t.from)?, c.id(&t.to)?));
        }
    }
    if removed.is_empty() || b.is_empty() {
        return Ok(false);
    }
    Ok(b.remaining_steps(position).into_iter().any(|(from, _, to)| {
        from.s.0.iter().zip(&to.s.0).enumerate().any(|(ci, (&x, &y))| x != y && removed.contains(&(ci, x, y)))
    }))
}

/// Whether the team still meets coverage and `cmin` once `robot` holds only
/// `r_new` instead of its current set.
pub fn coverage_ok(r_fail: &BindingSet, robot: &str, r_new: &BindingSet, assignment: &Assignment, task: &Task) -> bool {
    let others_cover = r_fail
        .iter()
        .all(|rho| assignment.iter().any(|(j, r)| j != robot && r.contains(rho)));
    let mut after = assignment.clone();
    after.insert(robot.to_string(), r_new.clone());
    let mins_hold = task
        .min
        .iter()
        .all(|(rho, k)| after.values().filter(|r| r.contains(*rho)).count() >= *k as usize);
    others_cover && mins_hold
}
