use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use ltlpsi::checker::CheckOptions;
use ltlpsi::runtime::Team;
use ltlpsi::scenario::{PlanFile, Scenario};
use ltlpsi::schema;
use ltlpsi::sim::{self, EndReason, Horizon, Report, RunMeta, Transcript};
use ltlpsi::spec_lang::{parse_task, Task};
use ltlpsi::synth::{synthesize, SynthError};

const EXIT_USAGE: u8 = 1;
const EXIT_UNSAT: u8 = 2;
const EXIT_TASK_FAILED: u8 = 3;
const EXIT_INVALID: u8 = 4;

#[derive(Parser)]
#[command(name = "ltlpsi", version, about = "Plan, run and check multi-robot tasks with binding-annotated LTL")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Find a team plan for a scenario and write plan.json.
    Synth(SynthArgs),
    /// Execute a plan, handling the scenario's schedule of changes.
    Run(RunArgs),
    /// Validate a transcript against a task.
    Check(CheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Task file overriding the scenario's own task.
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Longest lasso considered, in edges.
    #[arg(long)]
    bound: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    task: Option<PathBuf>,
    /// Seed for reallocation; defaults to the plan's.
    #[arg(long)]
    seed: Option<u64>,
    /// `40` for a step count, `3x` for loop passes.
    #[arg(long)]
    horizon: Option<Horizon>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Read negated always-blocks as requiring a witness at every step.
    #[arg(long)]
    strict_always: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Task file; defaults to the task recorded in the transcript.
    #[arg(long)]
    task: Option<PathBuf>,
    #[arg(long)]
    strict_always: bool,
    /// Also write report.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LTLPSI_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Check(a) => cmd_check(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load_scenario(path: &Path, task: Option<&Path>) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut doc: ltlpsi::scenario::ScenarioDoc = {
        let probe: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let tag = probe.get("schema").and_then(|v| v.as_str()).unwrap_or("");
        schema::check(tag, schema::SCENARIO).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        serde_json::from_value(probe).with_context(|| format!("parsing {}", path.display()))?
    };
    if let Some(t) = task {
        let text = fs::read_to_string(t).with_context(|| format!("reading {}", t.display()))?;
        doc.task = None;
        doc.task_text = Some(text);
        // A hand-written automaton belongs to the original task.
        doc.automaton = None;
    }
    Scenario::from_doc(doc, base).with_context(|| format!("loading {}", path.display()))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

fn cmd_synth(a: SynthArgs) -> Result<u8> {
    let scenario = load_scenario(&a.scenario, a.task.as_deref())?;
    let mut cfg = scenario.config();
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.bound {
        cfg.bound = b;
    }
    let start = Instant::now();
    let products = scenario.products();
    let plan = match synthesize(&products, &scenario.task, cfg) {
        Ok(p) => p,
        Err(e @ SynthError::Unsat { .. }) | Err(e @ SynthError::Infeasible { .. }) => {
            eprintln!("UNSAT: {e}");
            return Ok(EXIT_UNSAT);
        }
    };
    let elapsed = start.elapsed();
    let file = PlanFile::new(&scenario, cfg, plan);
    let out = write(&a.out_dir, "plan.json", &file.to_json())?;
    println!("lasso: {} prefix + {} cycle edges", file.plan.beta.prefix.len(), file.plan.beta.cycle.len());
    for (robot, r) in &file.plan.assignment {
        let cost = file.plan.behaviors.get(robot).map(|b| b.cost()).unwrap_or(0.0);
        println!("{robot}: {r} (cost {cost})");
    }
    println!("wrote {} in {} ms", out.display(), elapsed.as_millis());
    Ok(0)
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let scenario = load_scenario(&a.scenario, a.task.as_deref())?;
    let text = fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let file = PlanFile::from_json(&text).map_err(|e| anyhow!("{}: {e}", a.plan.display()))?;
    file.check_matches(&scenario).map_err(|e| anyhow!("{}: {e}", a.plan.display()))?;
    let mut cfg = scenario.config();
    cfg.bound = file.bound;
    cfg.seed = a.seed.unwrap_or(file.seed);
    let team = Team::new(scenario.task.clone(), scenario.products(), file.plan, cfg)?;
    let meta = RunMeta {
        task: scenario.task_text.clone(),
        scenario_hash: scenario.hash(),
        seed: cfg.seed,
    };
    let horizon = a.horizon.unwrap_or(scenario.horizon);
    let result = sim::run(team, &scenario.schedule, horizon, meta)?;
    let tr = &result.transcript;

    let mut decisions = String::new();
    for (d, m) in result.decisions.iter().zip(&scenario.schedule) {
        let mut v = serde_json::to_value(d)?;
        v["schema"] = schema::DECISION.into();
        v["modification"] = serde_json::to_value(m)?;
        v["elapsed_ms"] = d.elapsed_ms.into();
        decisions.push_str(&serde_json::to_string(&v)?);
        decisions.push('\n');
        println!("t={} {}: {} (step {}, {:.1} ms)", d.t, d.robot, d.outcome.name(), d.step, d.elapsed_ms);
    }
    write(&a.out_dir, "transcript.ndjson", &tr.to_ndjson())?;
    write(&a.out_dir, "transcript.csv", &tr.to_csv())?;
    write(&a.out_dir, "decisions.ndjson", &decisions)?;

    let opts = CheckOptions {
        strict_always: a.strict_always,
    };
    let report = sim::validate(tr, &scenario.task, opts);
    write(&a.out_dir, "report.json", &report_json(&report)?)?;
    print_report(&report);
    if tr.end().is_some_and(|e| e.reason == EndReason::TaskFailed) {
        println!("TASK_FAILED");
        return Ok(EXIT_TASK_FAILED);
    }
    Ok(if report.accepted { 0 } else { EXIT_INVALID })
}

fn cmd_check(a: CheckArgs) -> Result<u8> {
    let text = fs::read_to_string(&a.transcript).with_context(|| format!("reading {}", a.transcript.display()))?;
    let tr = Transcript::from_ndjson(&text).map_err(|e| anyhow!("{}: {e}", a.transcript.display()))?;
    let task: Task = match &a.task {
        Some(p) => parse_task(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => {
            let h = tr.header().ok_or_else(|| anyhow!("transcript has no header"))?;
            parse_task(&h.task)?
        }
    };
    let report = sim::validate(
        &tr,
        &task,
        CheckOptions {
            strict_always: a.strict_always,
        },
    );
    if let Some(dir) = &a.out_dir {
        write(dir, "report.json", &report_json(&report)?)?;
    }
    print_report(&report);
    Ok(if report.accepted { 0 } else { EXIT_INVALID })
}

fn report_json(r: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(r)?;
    s.push('\n');
    Ok(s)
}

fn print_report(r: &Report) {
    for v in &r.violations {
        let at = v.t.map(|t| format!("t={t} ")).unwrap_or_default();
        let who = v.robot.as_deref().map(|x| format!("{x} ")).unwrap_or_default();
        println!("violation: {at}{who}[{}] {}", v.kind, v.detail);
    }
    println!("{}", if r.accepted { "ACCEPT" } else { "REJECT" });
}
