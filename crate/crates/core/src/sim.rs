//! Lock-step execution of a team plan with barrier synchronization and
//! scripted capability changes, plus a validator for the resulting
//! transcript.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::agent::{Modification, RobotModel};
use crate::alloc::Assignment;
use crate::binding::BindingSet;
use crate::checker::{satisfies, CheckOptions, Counterexample, LassoWord};
use crate::omega::{BuchiAutomaton, Lasso};
use crate::product::{binding_options, ProductState};
use crate::runtime::{Decision, Outcome, RuntimeError, Team};
use crate::schema;
use crate::spec_lang::Task;
use crate::synth::SyncObligation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    /// Run exactly this many steps.
    Steps(u64),
    /// Run until the final loop has been seen this many times.
    Loops(u32),
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Loops(3)
    }
}

impl std::str::FromStr for Horizon {
    type Err = String;

    /// `40` is a step count, `3x` a number of loop passes.
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("horizon `{s}` should look like `40` (steps) or `3x` (loop passes)");
        match s.strip_suffix('x') {
            Some(n) => n.parse().ok().filter(|&n| n >= 1).map(Horizon::Loops).ok_or_else(bad),
            None => s.parse().ok().filter(|&n| n >= 1).map(Horizon::Steps).ok_or_else(bad),
        }
    }
}

/// Safety cap on steps when looking for a loop.
pub const MAX_STEPS: u64 = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Move,
    Wait,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotStep {
    pub robot: String,
    pub event: Event,
    pub state: String,
    pub labels: BTreeSet<String>,
    /// Lasso layer after the step.
    pub layer: usize,
    pub progress: u64,
    pub buchi_edge: Option<usize>,
    /// Lasso layer completed by this step.
    pub completed: Option<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub epoch: u64,
    pub robots: Vec<RobotStep>,
    /// Lasso layers whose barrier opened at this step.
    pub released: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// First step executed under this epoch.
    pub t: u64,
    pub epoch: u64,
    pub beta: Lasso,
    pub assignment: Assignment,
    pub obligations: Vec<SyncObligation>,
    /// Lasso layer of each robot when the epoch starts.
    pub layers: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub modification: Modification,
    #[serde(flatten)]
    pub decision: Decision,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Horizon,
    TaskFailed,
    Deadlock,
    NoLoop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub steps: u64,
    pub reason: EndReason,
    /// Steps `loop_start..loop_end` repeat forever.
    pub loop_start: Option<u64>,
    pub loop_end: Option<u64>,
    /// First step of the part of the run that the task is checked on.
    pub segment_start: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema: String,
    pub task: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub automaton: serde_json::Value,
    pub models: Vec<RobotModel>,
    pub initial: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header(Header),
    Epoch(EpochRecord),
    Decision(DecisionRecord),
    Step(StepRecord),
    End(EndRecord),
}

// Derived internally tagged enums buffer their fields and then cannot read
// integer map keys back, so dispatch on `kind` by hand.
impl<'de> Deserialize<'de> for Record {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut v = serde_json::Value::deserialize(d)?;
        let kind = v
            .as_object_mut()
            .and_then(|o| o.remove("kind"))
            .ok_or_else(|| D::Error::missing_field("kind"))?;
        let r = match kind.as_str().unwrap_or("") {
            "header" => serde_json::from_value(v).map(Record::Header),
            "epoch" => serde_json::from_value(v).map(Record::Epoch),
            "decision" => serde_json::from_value(v).map(Record::Decision),
            "step" => serde_json::from_value(v).map(Record::Step),
            "end" => serde_json::from_value(v).map(Record::End),
            other => return Err(D::Error::unknown_variant(other, &["header", "epoch", "decision", "step", "end"])),
        };
        r.map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Transcript {
    pub records: Vec<Record>,
}

impl Transcript {
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Transcript, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: Record = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            records.push(r);
        }
        match records.first() {
            Some(Record::Header(h)) => schema::check(&h.schema, schema::TRANSCRIPT)?,
            _ => return Err("transcript does not start with a header".into()),
        }
        Ok(Transcript { records })
    }

    pub fn header(&self) -> Option<&Header> {
        match self.records.first() {
            Some(Record::Header(h)) => Some(h),
            _ => None,
        }
    }

    pub fn end(&self) -> Option<&EndRecord> {
        self.records.iter().rev().find_map(|r| match r {
            Record::End(e) => Some(e),
            _ => None,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Decision(d) => Some(d),
            _ => None,
        })
    }

    /// `step,robot,state,labels` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows = std::iter::once(["step".to_string(), "robot".into(), "state".into(), "labels".into()]).chain(
            self.steps().flat_map(|s| {
                s.robots.iter().map(move |r| {
                    let labels: Vec<&str> = r.labels.iter().map(|l| l.as_str()).collect();
                    [s.t.to_string(), r.robot.clone(), r.state.clone(), labels.join(";")]
                })
            }),
        );
        for row in rows {
            w.write_record(&row).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("fields are utf-8")
    }
}

pub struct RunMeta {
    pub task: String,
    pub scenario_hash: String,
    pub seed: u64,
}

pub struct RunResult {
    pub transcript: Transcript,
    pub decisions: Vec<Decision>,
    pub team: Team,
}

fn epoch_record(team: &Team, t: u64) -> Record {
    Record::Epoch(EpochRecord {
        t,
        epoch: team.epoch,
        beta: team.beta.clone(),
        assignment: team.assignment.clone(),
        obligations: team.obligations.clone(),
        layers: team.robots.iter().map(|r| (r.name.clone(), r.slice.layer)).collect(),
    })
}

/// Execute the team, handling each scheduled change before the step at its
/// time.
pub fn run(mut team: Team, schedule: &[Modification], horizon: Horizon, meta: RunMeta) -> Result<RunResult, RuntimeError> {
    let mut schedule: Vec<Modification> = schedule.to_vec();
    schedule.sort_by_key(|m| m.time);
    let last_change = schedule.last().map(|m| m.time);
    let mut records = vec![
        Record::Header(Header {
            schema: schema::TRANSCRIPT.to_string(),
            task: meta.task,
            scenario_hash: meta.scenario_hash,
            seed: meta.seed,
            automaton: team.buchi.to_json(),
            models: team.robots.iter().map(|r| r.model.clone()).collect(),
            initial: team
                .robots
                .iter()
                .map(|r| (r.name.clone(), r.model.state_name(&r.node().s)))
                .collect(),
        }),
        epoch_record(&team, 0),
    ];
    let mut decisions = Vec::new();
    let mut history: Vec<LoopKey> = Vec::new();
    let mut last_seen: HashMap<LoopKey, u64> = HashMap::new();
    let mut lasso: Option<(u64, u64)> = None;
    let mut segment_start = 0;
    let mut waits: Vec<u64> = vec![0; team.robots.len()];
    let wait_bound: u64 = team.robots.iter().map(|r| r.behavior.len() as u64).sum::<u64>() * 4 + 16;
    let mut next_mod = 0;
    let mut t = 0u64;

    let reason = loop {
        match horizon {
            Horizon::Steps(n) if t >= n => break EndReason::Horizon,
            Horizon::Loops(k) => {
                if let Some((a, b)) = lasso {
                    if t >= b + (k as u64 - 1) * (b - a) {
                        break EndReason::Horizon;
                    }
                }
                if t >= MAX_STEPS {
                    break EndReason::NoLoop;
                }
            }
            _ => {}
        }

        let mut failed = false;
        while next_mod < schedule.len() && schedule[next_mod].time <= t {
            let mut m = schedule[next_mod].clone();
            m.time = t;
            next_mod += 1;
            let epoch = team.epoch;
            let d = team.handle(&m)?;
            records.push(Record::Decision(DecisionRecord {
                modification: m,
                decision: d.clone(),
            }));
            failed = d.outcome == Outcome::TaskFailed;
            decisions.push(d);
            if team.epoch != epoch {
                records.push(epoch_record(&team, t));
                segment_start = t;
            }
            if failed {
                break;
            }
        }
        if failed {
            break EndReason::TaskFailed;
        }

        if lasso.is_none() {
            let key: LoopKey = (team.epoch, team.robots.iter().map(|r| (r.version, r.position)).collect());
            if let Some(&prev) = last_seen.get(&key) {
                if last_change.map(|c| t > c).unwrap_or(true) {
                    lasso = Some(earliest_loop(&history, prev as usize, t as usize));
                }
            }
            last_seen.insert(key.clone(), t);
            history.push(key);
        }

        let (rec, progressed) = step(&mut team, t);
        for (j, moved) in progressed.iter().enumerate() {
            waits[j] = if *moved { 0 } else { waits[j] + 1 };
        }
        records.push(Record::Step(rec));
        t += 1;
        if waits.iter().any(|&w| w > wait_bound) {
            break EndReason::Deadlock;
        }
    };

    records.push(Record::End(EndRecord {
        steps: t,
        reason,
        loop_start: lasso.map(|l| l.0),
        loop_end: lasso.map(|l| l.1),
        segment_start,
    }));
    Ok(RunResult {
        transcript: Transcript { records },
        decisions,
        team,
    })
}

type LoopKey = (u64, Vec<(u64, usize)>);

/// The state at `t` repeats the one at `prev`. Slide the loop back as far
/// as the history agrees so the reported loop does not depend on when
/// detection started.
fn earliest_loop(history: &[LoopKey], prev: usize, t: usize) -> (u64, u64) {
    let p = t - prev;
    let mut start = prev;
    while start > 0 && history[start - 1] == history[start - 1 + p] {
        start -= 1;
    }
    (start as u64, (start + p) as u64)
}

/// One lock-step transition of the whole team.
fn step(team: &mut Team, t: u64) -> (StepRecord, Vec<bool>) {
    let barrier: BTreeMap<usize, &SyncObligation> = team.obligations.iter().map(|o| (o.layer, o)).collect();
    let wants: Vec<Option<usize>> = team
        .robots
        .iter()
        .map(|r| r.behavior.moves[r.position].progress)
        .collect();
    let mut released = BTreeSet::new();
    let go: Vec<bool> = team
        .robots
        .iter()
        .zip(&wants)
        .map(|(r, w)| match w.and_then(|k| barrier.get(&k).map(|o| (k, o))) {
            Some((k, o)) if o.robots.contains(&r.name) => {
                let open = o.robots.iter().all(|name| {
                    team.robots
                        .iter()
                        .zip(&wants)
                        .any(|(q, wq)| &q.name == name && *wq == Some(k))
                });
                if open {
                    released.insert(k);
                }
                open
            }
            _ => true,
        })
        .collect();

    let beta = team.beta.clone();
    let buchi = team.buchi.clone();
    let mut robots = Vec::new();
    for (r, &moving) in team.robots.iter_mut().zip(&go) {
        let mv = r.behavior.moves[r.position].clone();
        if moving {
            r.position = r.behavior.next_index(r.position);
            if let Some(k) = mv.progress {
                r.slice.progress += 1;
                r.slice.layer = beta.next_layer(k);
            }
            let s = r.behavior.nodes[r.position].s.clone();
            r.slice.state = ProductState {
                s,
                z: buchi.edge(beta.edge(r.slice.layer)).from,
            };
        }
        let s = &r.slice.state.s;
        robots.push(RobotStep {
            robot: r.name.clone(),
            event: if moving { Event::Move } else { Event::Wait },
            state: r.model.state_name(s),
            labels: r.model.labels(s),
            layer: r.slice.layer,
            progress: r.slice.progress,
            buchi_edge: if moving { mv.buchi_edge } else { None },
            completed: if moving { mv.progress } else { None },
            weight: if moving { mv.weight } else { 0.0 },
        });
    }
    (
        StepRecord {
            t,
            epoch: team.epoch,
            robots,
            released: released.into_iter().collect(),
        },
        go,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: Option<u64>,
    pub robot: Option<String>,
    pub kind: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub accepted: bool,
    pub violations: Vec<Violation>,
    pub checker: Option<Counterexample>,
    pub word_len: usize,
    pub loop_start: Option<usize>,
}

/// Check a transcript against its own header and the task: moves follow
/// the robot models, every move respects its guard and lasso order,
/// barriers hold, and the final segment satisfies the task.
pub fn validate(tr: &Transcript, task: &Task, opts: CheckOptions) -> Report {
    let mut v: Vec<Violation> = Vec::new();
    let mut push = |t: Option<u64>, robot: Option<&str>, kind: &str, detail: String| {
        v.push(Violation {
            t,
            robot: robot.map(|s| s.to_string()),
            kind: kind.to_string(),
            detail,
        })
    };
    let Some(h) = tr.header() else {
        push(None, None, "format", "missing header".into());
        return finish(v, None, 0, None);
    };
    let buchi = match BuchiAutomaton::from_json(&h.automaton) {
        Ok(b) => b,
        Err(e) => {
            push(None, None, "format", format!("automaton: {e}"));
            return finish(v, None, 0, None);
        }
    };
    let ctx = task.context();
    let mut models: BTreeMap<String, RobotModel> =
        h.models.iter().map(|m| (m.robot().to_string(), m.clone())).collect();
    let mut state: BTreeMap<String, String> = h.initial.clone();
    let mut layer: BTreeMap<String, usize> = BTreeMap::new();
    let mut epoch: Option<&EpochRecord> = None;
    let mut fresh_epoch = false;
    let mut resynthesized: BTreeSet<String> = BTreeSet::new();
    let mut word_rows: Vec<&StepRecord> = Vec::new();
    let mut segment_assignment: Option<&Assignment> = None;

    for rec in &tr.records {
        match rec {
            Record::Header(_) | Record::End(_) => {}
            Record::Epoch(e) => {
                epoch = Some(e);
                fresh_epoch = true;
                layer = e.layers.clone();
            }
            Record::Decision(d) => {
                let m = &d.modification;
                match models.get(&m.robot).map(|model| model.apply(m)) {
                    Some(Ok(after)) => {
                        models.insert(m.robot.clone(), after);
                    }
                    _ => push(Some(m.time), Some(&m.robot), "modification", "cannot be applied".into()),
                }
                resynthesized.extend(d.decision.resynthesized.iter().cloned());
            }
            Record::Step(s) => {
                let Some(e) = epoch else {
                    push(Some(s.t), None, "format", "step before any epoch".into());
                    continue;
                };
                if fresh_epoch {
                    word_rows.clear();
                    segment_assignment = Some(&e.assignment);
                    fresh_epoch = false;
                }
                word_rows.push(s);
                check_step(s, e, &buchi, &ctx, &models, &mut state, &mut layer, &resynthesized, &mut push);
                resynthesized.clear();
            }
        }
    }

    let end = tr.end();
    let mut checker = None;
    let mut word_len = 0;
    let mut loop_start = None;
    match end {
        None => push(None, None, "format", "missing end record".into()),
        Some(end) => {
            match end.reason {
                EndReason::Horizon => {}
                EndReason::TaskFailed => push(None, None, "outcome", "task failed".into()),
                EndReason::Deadlock => push(None, None, "liveness", "a barrier never released".into()),
                EndReason::NoLoop => push(None, None, "liveness", "no loop within the step cap".into()),
            }
            match (end.loop_start, end.loop_end, segment_assignment) {
                (Some(a), Some(b), Some(assignment)) if a >= end.segment_start && b > a => {
                    let rows: Vec<&StepRecord> = word_rows
                        .iter()
                        .copied()
                        .filter(|s| s.t >= end.segment_start && s.t < b)
                        .collect();
                    let robots: Vec<String> = h.models.iter().map(|m| m.robot().to_string()).collect();
                    let labels = robots
                        .iter()
                        .map(|name| {
                            rows.iter()
                                .map(|s| {
                                    s.robots.iter().find(|r| &r.robot == name).map(|r| r.labels.clone()).unwrap_or_default()
                                })
                                .collect()
                        })
                        .collect();
                    let ls = (a - end.segment_start) as usize;
                    match LassoWord::new(robots, labels, ls) {
                        Ok(word) => {
                            word_len = word.len();
                            loop_start = Some(ls);
                            if let Err(c) = satisfies(&word, assignment, task, opts) {
                                checker = Some(c);
                            }
                        }
                        Err(e) => push(None, None, "word", e),
                    }
                }
                _ if end.reason == EndReason::Horizon => {
                    push(None, None, "word", "run ended before a loop was found".into())
                }
                _ => {}
            }
        }
    }
    finish(v, checker, word_len, loop_start)
}

fn finish(violations: Vec<Violation>, checker: Option<Counterexample>, word_len: usize, loop_start: Option<usize>) -> Report {
    Report {
        schema: schema::REPORT.to_string(),
        accepted: violations.is_empty() && checker.is_none() && word_len > 0,
        violations,
        checker,
        word_len,
        loop_start,
    }
}

#[allow(clippy::too_many_arguments)]
fn check_step(
    s: &StepRecord,
    e: &EpochRecord,
    buchi: &BuchiAutomaton,
    ctx: &crate::binding::BindingContext,
    models: &BTreeMap<String, RobotModel>,
    state: &mut BTreeMap<String, String>,
    layer: &mut BTreeMap<String, usize>,
    resynthesized: &BTreeSet<String>,
    push: &mut impl FnMut(Option<u64>, Option<&str>, &str, String),
) {
    let beta = &e.beta;
    let z_of = |k: usize| buchi.edge(beta.edge(k)).from;
    for r in &s.robots {
        let name = r.robot.as_str();
        let Some(model) = models.get(name) else {
            push(Some(s.t), Some(name), "format", "unknown robot".into());
            continue;
        };
        let held = e.assignment.get(name).cloned().unwrap_or_default();
        let (Ok(cur), Some(prev_name)) = (model.parse_state(&r.state), state.get(name)) else {
            push(Some(s.t), Some(name), "state", format!("unknown state {}", r.state));
            continue;
        };
        let prev = model.parse_state(prev_name).ok();
        if model.labels(&cur) != r.labels {
            push(Some(s.t), Some(name), "labels", format!("labels {:?} do not match state {}", r.labels, r.state));
        }
        let before = layer.get(name).copied().unwrap_or(0);
        match r.event {
            Event::Wait => {
                if prev.as_ref() != Some(&cur) {
                    push(Some(s.t), Some(name), "motion", "moved while waiting".into());
                }
                if !held.is_empty() && !idle_ok(buchi, ctx, z_of(before), &held, &r.labels) {
                    push(Some(s.t), Some(name), "guard", "no self-loop admits waiting here".into());
                }
            }
            Event::Move => {
                if let Some(p) = &prev {
                    if p != &cur && model.weight(p, &cur) != Some(r.weight) {
                        push(Some(s.t), Some(name), "motion", format!("no transition {} -> {}", prev_name, r.state));
                    }
                }
                if !held.is_empty() {
                    match (r.buchi_edge, r.completed) {
                        (Some(id), Some(k)) => {
                            if k != before && !resynthesized.contains(name) {
                                push(Some(s.t), Some(name), "order", format!("completed layer {k} while at layer {before}"));
                            }
                            if beta.edge(k) != id {
                                push(Some(s.t), Some(name), "order", format!("edge {id} is not lasso edge {k}"));
                            }
                            if !binding_options(ctx, &buchi.edge(id).guard, &r.labels).contains(&held) {
                                push(Some(s.t), Some(name), "guard", format!("labels violate edge {id}"));
                            }
                            if r.layer != beta.next_layer(k) {
                                push(Some(s.t), Some(name), "order", "layer did not advance".into());
                            }
                        }
                        (Some(id), None) => {
                            let ok = buchi.is_self_loop(id) && buchi.edge(id).from == z_of(before);
                            if !ok || !binding_options(ctx, &buchi.edge(id).guard, &r.labels).contains(&held) {
                                push(Some(s.t), Some(name), "guard", format!("idle move on edge {id} not allowed"));
                            }
                        }
                        (None, _) => push(Some(s.t), Some(name), "guard", "robot with bindings moved off the automaton".into()),
                    }
                }
            }
        }
        state.insert(name.to_string(), r.state.clone());
        layer.insert(name.to_string(), r.layer);
    }

    for o in &e.obligations {
        let takers: BTreeSet<&str> = s
            .robots
            .iter()
            .filter(|r| r.completed == Some(o.layer))
            .map(|r| r.robot.as_str())
            .collect();
        let involved: BTreeSet<&str> = o.robots.iter().map(|r| r.as_str()).collect();
        let partial: Vec<&&str> = takers.intersection(&involved).collect();
        if !partial.is_empty() && partial.len() != involved.len() {
            let missing: Vec<&&str> = involved.difference(&takers).collect();
            push(Some(s.t), None, "barrier", format!("layer {} taken without {:?}", o.layer, missing));
        }
        if !partial.is_empty() {
            let guard = &buchi.edge(o.buchi_edge).guard;
            for (rho, w) in &o.witnesses {
                let labels = s.robots.iter().find(|r| &r.robot == w).map(|r| &r.labels);
                let c = guard.project(*rho);
                let ok = labels
                    .map(|l| c.ex_t.iter().all(|p| l.contains(p)) && c.ex_f.iter().all(|p| !l.contains(p)))
                    .unwrap_or(false);
                if !ok {
                    push(Some(s.t), Some(w), "witness", format!("does not vouch for binding {rho} on layer {}", o.layer));
                }
            }
        }
    }
}

fn idle_ok(
    buchi: &BuchiAutomaton,
    ctx: &crate::binding::BindingContext,
    z: usize,
    held: &BindingSet,
    labels: &BTreeSet<String>,
) -> bool {
    buchi
        .out_edges(z)
        .iter()
        .any(|&e| buchi.is_self_loop(e) && binding_options(ctx, &buchi.edge(e).guard, labels).contains(held))
}
