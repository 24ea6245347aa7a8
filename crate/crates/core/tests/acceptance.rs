//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always print.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use ltlpsi::agent::Modification;
use ltlpsi::alloc::{allocate, allocate_optimal, changed_robots};
use ltlpsi::binding::BindingSet;
use ltlpsi::checker::{constraints_hold, CheckOptions};
use ltlpsi::runtime::{Outcome, Team};
use ltlpsi::scenario::Scenario;
use ltlpsi::sim::{self, Record, RunMeta, Transcript};

use common::*;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn assignment_of(pairs: &[(&str, &[u32])]) -> BTreeMap<String, BindingSet> {
    pairs
        .iter()
        .map(|(r, bs)| (r.to_string(), bs.iter().map(|&b| ltlpsi::binding::Binding(b)).collect()))
        .collect()
}

fn accepted(s: &Scenario, tr: &Transcript) -> Result<(), String> {
    let report = sim::validate(tr, &s.task, CheckOptions::default());
    ensure(report.accepted, format!("validator rejected: {:?}", report.violations))
}

fn without_decisions(tr: &Transcript) -> String {
    Transcript {
        records: tr.records.iter().filter(|r| !matches!(r, Record::Decision(_))).cloned().collect(),
    }
    .to_ndjson()
}

fn criterion_1() -> Check {
    let s = warehouse();
    let start = Instant::now();
    let products = s.products();
    let (first, _) = plan_with_seed(&s, &products, 0);
    let synth_time = start.elapsed();
    ensure(synth_time < Duration::from_secs(10), format!("synthesis took {synth_time:?}"))?;
    drop(first);

    let reference = assignment_of(&[("green", &[1]), ("blue", &[1, 3]), ("orange", &[1]), ("pink", &[2, 3])]);
    let mut seeds_with_reference = Vec::new();
    for seed in 0..32u64 {
        let (plan, cfg) = plan_with_seed(&s, &products, seed);
        let a = &plan.assignment;
        let held = a.values().fold(BindingSet::new(), |acc, r| acc.union(r));
        ensure(held == BindingSet::from([1, 2, 3]), format!("seed {seed}: bindings held {held}"))?;
        let on_1 = a.values().filter(|r| r.contains(ltlpsi::binding::Binding(1))).count();
        ensure(on_1 >= 2, format!("seed {seed}: {on_1} robots on binding 1"))?;
        constraints_hold(a, &s.task).map_err(|e| format!("seed {seed}: {e:?}"))?;
        let team = Team::new(s.task.clone(), products.clone(), plan.clone(), cfg).map_err(|e| e.to_string())?;
        let meta = RunMeta {
            task: s.task_text.clone(),
            scenario_hash: s.hash(),
            seed,
        };
        let run = sim::run(team, &[], s.horizon, meta).map_err(|e| e.to_string())?;
        accepted(&s, &run.transcript).map_err(|e| format!("seed {seed}: {e}"))?;
        if *a == reference {
            seeds_with_reference.push(seed);
        }
    }
    ensure(!seeds_with_reference.is_empty(), "reference assignment not reached for seeds 0-31")?;
    Ok(format!(
        "32 seeds valid and accepted; reference assignment at seeds {seeds_with_reference:?}; synthesis {} ms",
        synth_time.as_millis()
    ))
}

fn mods(s: &Scenario, n: usize) -> Vec<Modification> {
    s.schedule[..n].to_vec()
}

fn criterion_2() -> Check {
    let s = warehouse();
    let plain = run_with(&s, REFERENCE_SEED, &[]);
    let modified = run_with(&s, REFERENCE_SEED, &mods(&s, 1));
    let d = &modified.decisions[0];
    ensure(d.robot == "blue" && d.outcome == Outcome::Continue, format!("decision {:?}", d.outcome))?;
    ensure(
        without_decisions(&modified.transcript) == plain.transcript.to_ndjson(),
        "transcript differs beyond the decision entry",
    )?;
    ensure(d.elapsed_ms < 50.0, format!("handling took {} ms", d.elapsed_ms))?;
    Ok(format!("CONTINUE; transcripts identical apart from the decision; {:.3} ms", d.elapsed_ms))
}

fn criterion_3() -> Check {
    let s = warehouse();
    let before = run_with(&s, REFERENCE_SEED, &mods(&s, 1));
    let run = run_with(&s, REFERENCE_SEED, &mods(&s, 2));
    let d = &run.decisions[1];
    ensure(
        d.robot == "orange" && matches!(d.outcome, Outcome::Local { .. }),
        format!("decision {} for {}", d.outcome.name(), d.robot),
    )?;
    let changed: Vec<&str> = run
        .team
        .robots
        .iter()
        .zip(&before.team.robots)
        .filter(|(a, b)| a.behavior != b.behavior)
        .map(|(a, _)| a.name.as_str())
        .collect();
    ensure(changed == ["orange"], format!("behaviors changed: {changed:?}"))?;
    let t_mod = s.schedule[1].time;
    let mut states = Vec::new();
    let mut reached_b = false;
    for step in run.transcript.steps().filter(|st| st.t >= t_mod) {
        let r = step.robots.iter().find(|r| r.robot == "orange").ok_or("orange missing from a step")?;
        states.push(r.state.clone());
        reached_b |= r.labels.contains("roomB_c");
    }
    let forbidden = ["roomD_c,hall", "hall_c,roomD"];
    ensure(
        !states.iter().any(|x| forbidden.contains(&x.as_str())),
        "orange still uses the roomD-hall door",
    )?;
    ensure(reached_b, "orange never reaches roomB")?;
    accepted(&s, &run.transcript)?;
    Ok(format!("LOCAL(orange); only orange's behavior changed; new route reaches roomB; ACCEPT ({:.1} ms)", d.elapsed_ms))
}

fn criterion_4() -> Check {
    let s = warehouse();
    let before = run_with(&s, REFERENCE_SEED, &mods(&s, 2));
    let run = run_with(&s, REFERENCE_SEED, &mods(&s, 3));
    let d = &run.decisions[2];
    let mut problems = Vec::new();
    if d.r_fail != Some(BindingSet::from([2])) {
        problems.push(format!("r_fail {:?}", d.r_fail));
    }
    if !matches!(d.outcome, Outcome::Reallocate { .. }) {
        problems.push(format!("decision {}", d.outcome.name()));
    }
    let expected: BTreeMap<&str, Vec<BindingSet>> = [
        ("green", vec![BindingSet::from([1]), BindingSet::from([2])]),
        ("blue", vec![BindingSet::from([1])]),
        ("orange", vec![BindingSet::from([1])]),
        ("pink", vec![BindingSet::from([1]), BindingSet::from([3]), BindingSet::from([1, 3])]),
    ]
    .into();
    for (robot, want) in &expected {
        let got: BTreeSet<&BindingSet> = d.feasible.get(*robot).map(|v| v.iter().collect()).unwrap_or_default();
        let want: BTreeSet<&BindingSet> = want.iter().collect();
        if got != want {
            problems.push(format!("R_{robot} = {got:?}, expected {want:?}"));
        }
    }
    let changed = changed_robots(&before.team.assignment, &run.team.assignment);
    if changed != ["green", "pink"] {
        problems.push(format!("changed robots {changed:?}"));
    }
    let want_after = assignment_of(&[("green", &[2]), ("blue", &[1, 3]), ("orange", &[1]), ("pink", &[1, 3])]);
    if run.team.assignment != want_after {
        problems.push(format!("assignment after {:?}", run.team.assignment));
    }
    for name in ["blue", "orange"] {
        let b0 = before.team.robot(name).map(|r| &r.behavior);
        let b1 = run.team.robot(name).map(|r| &r.behavior);
        if b0 != b1 {
            problems.push(format!("{name}'s behavior changed"));
        }
    }
    if let Err(e) = accepted(&s, &run.transcript) {
        problems.push(e);
    }
    if d.elapsed_ms >= 2000.0 {
        problems.push(format!("handling took {} ms", d.elapsed_ms));
    }
    if problems.is_empty() {
        Ok(format!("REALLOCATE; R-sets match; green->{{2}}, pink->{{1,3}}; ACCEPT ({:.1} ms)", d.elapsed_ms))
    } else {
        Err(problems.join("; "))
    }
}

fn criterion_5() -> Check {
    let mut runner = runner(5);
    let strategy = arb_update_instance();
    let (mut compared, mut mismatches, mut attempts) = (0, 0, 0);
    while compared < 500 && attempts < 20_000 {
        attempts += 1;
        let inst = sample(&strategy, &mut runner);
        match update_matches_rebuild(&inst) {
            Some(true) => compared += 1,
            Some(false) => {
                compared += 1;
                mismatches += 1;
            }
            None => {}
        }
    }
    ensure(compared >= 500, format!("only {compared} usable instances"))?;
    ensure(mismatches == 0, format!("{mismatches} mismatches in {compared} instances"))?;
    Ok(format!("{compared} instances, 0 mismatches"))
}

fn criterion_6() -> Check {
    let mut rng = chacha(6);
    let mut failures = Vec::new();
    for _ in 0..1000 {
        if let Err(e) = semantics_agree(&semantics_instance(&mut rng)) {
            failures.push(e);
        }
    }
    ensure(
        failures.is_empty(),
        format!("{} mismatches, first: {}", failures.len(), failures.first().cloned().unwrap_or_default()),
    )?;
    Ok("1000 instances, 0 mismatches".into())
}

fn criterion_7() -> Check {
    let mut rng = chacha(7);
    let (mut solved, mut kept, mut greedy_gaps) = (0, 0, 0);
    for i in 0..1000 {
        let p = allocation_problem(&mut rng);
        let seed = i as u64;
        let a = allocate(&p, seed);
        ensure(a == allocate(&p, seed), format!("problem {i}: rerun differs"))?;
        if let Some(a) = &a {
            solved += 1;
            assignment_valid(&p, a).map_err(|e| format!("problem {i}: {e}"))?;
        } else if allocate_optimal(&p).map_err(|e| e.to_string())?.is_some() {
            // Greedy incompleteness; full resynthesis covers these at runtime.
            greedy_gaps += 1;
        }
        let original = p.original_assignment();
        let originals_ok = p.original.iter().all(|r| !r.is_empty()) && assignment_valid(&p, &original).is_ok();
        if originals_ok {
            kept += 1;
            let a = a.ok_or_else(|| format!("problem {i}: valid originals but no assignment"))?;
            let changed = changed_robots(&original, &a);
            ensure(changed.is_empty(), format!("problem {i}: valid originals but {changed:?} changed"))?;
        }
    }
    Ok(format!(
        "1000 problems, {solved} solved and valid, {kept} with valid originals kept unchanged, \
         {greedy_gaps} greedy failures the exhaustive allocator could solve"
    ))
}

fn criterion_8() -> Check {
    let mut seen: BTreeMap<&'static str, Vec<String>> = BTreeMap::new();
    for rel in ["warehouse/scenario.json", "line/scenario.json", "storage/scenario.json"] {
        let s = Scenario::load(&fixture(rel)).map_err(|e| e.to_string())?;
        let seed = if rel.starts_with("warehouse") { REFERENCE_SEED } else { s.seed };
        for d in run_with(&s, seed, &s.schedule).decisions {
            let tag = format!("step {}:", d.step);
            ensure(
                d.rationale.last().is_some_and(|r| r.starts_with(&tag)),
                format!("{rel} t={}: rationale {:?} does not end at {tag}", d.t, d.rationale),
            )?;
            seen.entry(d.outcome.name()).or_default().push(format!("{rel}@{}", d.t));
        }
    }
    let missing: Vec<&str> = ["CONTINUE", "LOCAL", "REALLOCATE", "FULL", "TASK_FAILED"]
        .into_iter()
        .filter(|o| !seen.contains_key(o))
        .collect();
    ensure(missing.is_empty(), format!("never produced: {missing:?}"))?;
    Ok(seen.keys().cloned().collect::<Vec<_>>().join(", "))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 8] = [
        (1, "scenario reproduction", criterion_1),
        (2, "capability addition", criterion_2),
        (3, "local replanning", criterion_3),
        (4, "reallocation", criterion_4),
        (5, "incremental product update", criterion_5),
        (6, "semantics cross-validation", criterion_6),
        (7, "allocation soundness", criterion_7),
        (8, "escalation coverage", criterion_8),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("criterion {n} ({name}): PASS - {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {msg} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
