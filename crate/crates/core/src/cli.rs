//! Command-line front end: `run`, `check`, `replay` and `export-tla`.
//!
//! Exit codes: 0 success, 1 check or violation failure, 2 usage or
//! configuration error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::Policy;
use crate::harness::{example::run_example, memcached::run_memcached, Mode, Mutant, RunOptions, RunOutcome, SchedulerConfig};
use crate::ltl::{holds_in_state, Formula, Verdict};
use crate::model::{ExampleModel, ExampleVariant, MemcachedModel, Model, OracleBounds, ToyModel};
use crate::oracle::{
    build_graph_with_cap, check_example_lemma, check_guard_stability, check_invariant, check_ltl_bounded,
    fairness_preset, Counterexample, LemmaFailure, LtlOutcome, DEFAULT_STATE_CAP,
};
use crate::trace::{read_log, replay, write_log};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ghostlock", version, about = "Refinement and liveness checking against abstract models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a node program under the seeded scheduler.
    Run(RunArgs),
    /// Explicit-state oracle checks on a bounded model instance.
    Check(CheckArgs),
    /// Re-validate a trace log offline.
    Replay(ReplayArgs),
    /// Print the model as a TLA+ module.
    ExportTla(ExportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key=value` or JSON file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub loss: Option<f64>,
    #[arg(long)]
    pub loss_a_to_b: Option<f64>,
    #[arg(long)]
    pub loss_b_to_a: Option<f64>,
    #[arg(long)]
    pub fairness_window: Option<u32>,
    /// `checked` or `erased`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Comma-separated property ids, e.g. `1,2,3` or `mc`.
    #[arg(long, value_delimiter = ',')]
    pub liveness: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mutant: Option<String>,
    #[arg(long)]
    pub clients: Option<u64>,
    #[arg(long)]
    pub threaded: bool,
    /// `fail-fast` or `record-and-continue`.
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("what").required(true).args(["invariant", "guard_stability", "ltl"])))]
pub struct CheckArgs {
    #[arg(long, default_value = "example")]
    pub model: String,
    #[arg(long, default_value = "max_value=1,max_channel=1")]
    pub bounds: String,
    /// Example model only: `faithful` or `asend-plus-one`.
    #[arg(long, default_value = "faithful")]
    pub variant: String,
    /// A lemma name (`step1`..`step5`) or a closed state formula.
    #[arg(long)]
    pub invariant: Option<String>,
    /// `KIND[,KIND..]:PRED`, PRED an atom name (free arguments range over
    /// `0..=max_value`) or a closed state formula.
    #[arg(long)]
    pub guard_stability: Option<String>,
    #[arg(long)]
    pub ltl: Option<String>,
    #[arg(long, default_value = "none")]
    pub fair: String,
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    pub state_cap: usize,
    /// Directory for `counterexample.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value = "faithful")]
    pub variant: String,
    #[arg(long, default_value_t = 2)]
    pub connections: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Contents of a `--config` file. Every field is optional; defaults are
/// seed 0, steps 1000, loss 0.1, mode checked.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_a_to_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_b_to_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fairness_window: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub liveness: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clients: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threaded: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<Policy>,
}

impl RunConfigFile {
    /// JSON object or one `key=value` per line (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self, String> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).map_err(|e| e.to_string());
        }
        let mut obj = Map::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            let value = match k {
                "liveness" => Value::Array(v.split(',').map(|p| Value::String(p.trim().to_string())).collect()),
                "model" | "mode" | "out" | "mutant" | "policy" => Value::String(v.to_string()),
                _ => serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string())),
            };
            if obj.insert(k.to_string(), value).is_some() {
                return Err(format!("line {}: duplicate key `{k}`", n + 1));
            }
        }
        serde_json::from_value(Value::Object(obj)).map_err(|e| e.to_string())
    }
}

fn parse_named<T: for<'de> Deserialize<'de>>(what: &str, s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown {what} `{s}`"))
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let r = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Replay(a) => cmd_replay(a, out),
        Command::ExportTla(a) => cmd_export(a, out),
    };
    match r {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Io(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

enum CliError {
    Usage(String),
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(msg.to_string())
}

// ---- run ------------------------------------------------------------------

fn merged_config(a: &RunArgs) -> Result<RunConfigFile, CliError> {
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            RunConfigFile::parse(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfigFile::default(),
    };
    macro_rules! over {
        ($($f:ident),*) => { $( if a.$f.is_some() { c.$f = a.$f.clone(); } )* };
    }
    over!(model, seed, steps, loss, loss_a_to_b, loss_b_to_a, fairness_window, liveness, out, mutant, clients);
    if let Some(m) = &a.mode {
        c.mode = Some(parse_named("mode", m).map_err(usage)?);
    }
    if let Some(p) = &a.policy {
        c.policy = Some(parse_named("policy", p).map_err(usage)?);
    }
    if a.threaded {
        c.threaded = Some(true);
    }
    Ok(c)
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let c = merged_config(&a)?;
    let d = SchedulerConfig::default();
    let cfg = SchedulerConfig {
        seed: c.seed.unwrap_or(d.seed),
        max_steps: c.steps.unwrap_or(d.max_steps),
        loss: c.loss.unwrap_or(d.loss),
        loss_a_to_b: c.loss_a_to_b,
        loss_b_to_a: c.loss_b_to_a,
        fairness_window: c.fairness_window.unwrap_or(d.fairness_window),
        mode: c.mode.unwrap_or_default(),
    };
    let mutant = c.mutant.as_deref().map(str::parse::<Mutant>).transpose().map_err(usage)?;
    let opts = RunOptions {
        liveness: c.liveness.clone(),
        mutant,
        policy: c.policy.unwrap_or_default(),
        clients: c.clients.unwrap_or(RunOptions::default().clients),
        threaded: c.threaded.unwrap_or(false),
    };
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("ghostlock-out"));
    let model = c.model.clone().unwrap_or_else(|| "example".into());
    let code = match model.as_str() {
        "example" => finish_run(run_example(&cfg, &opts).map_err(usage)?, &c, &dir, out)?,
        "memcached" => finish_run(run_memcached(&cfg, &opts).map_err(usage)?, &c, &dir, out)?,
        other => return Err(usage(format!("unknown model `{other}`"))),
    };
    Ok(code)
}

fn finish_run<M: Model>(
    r: RunOutcome<M>,
    c: &RunConfigFile,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    fs::create_dir_all(dir)?;
    let trace_path = dir.join("trace.jsonl");
    let mut buf = Vec::new();
    write_log(&r.trace.records, &r.aux, &mut buf)?;
    fs::write(&trace_path, buf)?;
    let mut vbuf = String::new();
    for v in &r.violations {
        vbuf.push_str(&serde_json::to_string(&v.record()).expect("violation records serialize"));
        vbuf.push('\n');
    }
    fs::write(dir.join("violations.jsonl"), vbuf)?;
    fs::write(dir.join("observable.jsonl"), r.observable.to_text())?;
    let report = r.report(Some(&trace_path.display().to_string()));
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report).expect("reports serialize"))?;
    if let Some(m) = r.model.tla_module() {
        fs::write(dir.join("model.tla"), m.render())?;
    }
    let mut effective = c.clone();
    effective.model = Some(r.model.name().to_string());
    effective.seed = Some(r.config.seed);
    effective.steps = Some(r.config.max_steps);
    effective.loss = Some(r.config.loss);
    effective.fairness_window = Some(r.config.fairness_window);
    effective.mode = Some(r.config.mode);
    effective.out = Some(dir.to_path_buf());
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&effective).expect("configs serialize"))?;

    let kinds: BTreeSet<&str> = r.violations.iter().map(|v| v.kind()).collect();
    writeln!(
        out,
        "{} model={} seed={} steps={} sections={} violations={}{}",
        if r.passed() { "PASS" } else { "FAIL" },
        r.model.name(),
        r.config.seed,
        r.steps_executed,
        r.trace.len(),
        r.violations.len(),
        if kinds.is_empty() { String::new() } else { format!(" [{}]", kinds.into_iter().collect::<Vec<_>>().join(",")) },
    )?;
    if let Some(l) = &r.liveness {
        writeln!(
            out,
            "liveness: discharged={} pending={} violated={}",
            l.discharged_total(),
            l.pending.len(),
            l.violated.len()
        )?;
    }
    writeln!(out, "artifacts: {}", dir.display())?;
    Ok(if r.passed() { EXIT_OK } else { EXIT_FAIL })
}

// ---- check ----------------------------------------------------------------

fn state_pred<M: Model>(model: &M, f: &Formula<M>) -> impl Fn(&M::State) -> bool {
    let model = model.clone();
    let f = f.clone();
    move |s: &M::State| holds_in_state(&model, &f, s) == Ok(Verdict::True)
}

/// A closed formula, or every instance of a bare atom name with its
/// arguments drawn from `0..=max_value`.
fn predicates<M: Model>(model: &M, text: &str, bounds: &OracleBounds) -> Result<Vec<(String, Formula<M>)>, CliError> {
    let text = text.trim();
    if text.starts_with('(') {
        let f = model.parse_formula(text).map_err(usage)?;
        return Ok(vec![(text.to_string(), f)]);
    }
    let arity = model
        .atoms()
        .states
        .get(text)
        .map(|(n, _)| *n)
        .ok_or_else(|| usage(format!("unknown state atom `{text}`")))?;
    let mut tuples: Vec<Vec<u64>> = vec![vec![]];
    for _ in 0..arity {
        tuples = tuples.into_iter().flat_map(|t| (0..=bounds.max_value).map(move |v| [t.clone(), vec![v]].concat())).collect();
    }
    tuples
        .into_iter()
        .map(|args| {
            let src = if args.is_empty() {
                format!("(state {text})")
            } else {
                format!("(state {text} {})", args.iter().map(u64::to_string).collect::<Vec<_>>().join(" "))
            };
            let f = model.parse_formula(&src).map_err(usage)?;
            Ok((src, f))
        })
        .collect()
}

/// `NodeA` or `Connection(0)` as a guard kind of `M`.
fn parse_guard_kind<M: Model>(s: &str) -> Result<M::GuardKind, CliError> {
    let s = s.trim();
    let v = match s.split_once('(') {
        Some((name, rest)) => {
            let n: u64 = rest.trim_end_matches(')').trim().parse().map_err(|_| usage(format!("bad guard kind `{s}`")))?;
            serde_json::json!({ name: n })
        }
        None => Value::String(s.to_string()),
    };
    serde_json::from_value(v).map_err(|_| usage(format!("unknown guard kind `{s}`")))
}

fn print_counterexample<M: Model>(
    cx: &Counterexample<M>,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_log(&cx.to_trace().records, &cx.markers(), &mut buf)?;
    match cx.cycle_start {
        Some(k) => writeln!(out, "Counterexample: lasso of {} steps, cycle from step {k}", cx.len())?,
        None => writeln!(out, "Counterexample: {} steps", cx.len())?,
    }
    out.write_all(&buf)?;
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        fs::write(d.join("counterexample.jsonl"), &buf)?;
    }
    Ok(())
}

fn cmd_check(a: CheckArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let bounds: OracleBounds = a.bounds.parse().map_err(usage)?;
    match a.model.as_str() {
        "example" => {
            let variant: ExampleVariant = parse_named("variant", &a.variant).map_err(usage)?;
            check_model(ExampleModel::new(variant), &a, &bounds, out)
        }
        "memcached" => check_model(MemcachedModel::new(bounds.connections), &a, &bounds, out),
        "toy" => check_model(ToyModel, &a, &bounds, out),
        other => Err(usage(format!("unknown model `{other}`"))),
    }
}

fn check_model<M: Model>(model: M, a: &CheckArgs, bounds: &OracleBounds, out: &mut dyn Write) -> Result<i32, CliError> {
    let dir = a.out.as_deref();
    if let Some(name) = &a.invariant {
        if let Some(ex) = (&model as &dyn std::any::Any).downcast_ref::<ExampleModel>() {
            if name.starts_with("step") {
                return match check_example_lemma(ex, bounds, name) {
                    Ok(o) => {
                        writeln!(
                            out,
                            "Ok: {} ({:?}) over {} reachable states, {} transitions checked",
                            o.name, o.proof, o.reachable_states, o.transitions
                        )?;
                        Ok(EXIT_OK)
                    }
                    Err(LemmaFailure::UnknownLemma(n)) => Err(usage(format!("unknown invariant `{n}`"))),
                    Err(LemmaFailure::Oracle(e)) => Err(usage(e)),
                    Err(LemmaFailure::Reachable(cx)) => {
                        writeln!(out, "{name} fails on a reachable state")?;
                        print_counterexample(&cx, dir, out)?;
                        Ok(EXIT_FAIL)
                    }
                    Err(LemmaFailure::Inductive(f)) => {
                        writeln!(out, "{name} holds on reachable states but is not inductive: {f:?}")?;
                        Ok(EXIT_FAIL)
                    }
                    Err(LemmaFailure::Transition(t)) => {
                        writeln!(out, "{name} fails on a transition")?;
                        print_counterexample(&t.to_counterexample(), dir, out)?;
                        Ok(EXIT_FAIL)
                    }
                };
            }
        }
        let graph = build_graph_with_cap(&model, bounds, a.state_cap).map_err(usage)?;
        let preds = predicates(&model, name, bounds)?;
        for (src, f) in preds {
            if let Err(cx) = check_invariant(&graph, state_pred(&model, &f)) {
                writeln!(out, "{src} fails on a reachable state")?;
                print_counterexample(&cx, dir, out)?;
                return Ok(EXIT_FAIL);
            }
        }
        writeln!(out, "Ok: {name} holds on all {} reachable states", graph.len())?;
        return Ok(EXIT_OK);
    }
    if let Some(spec) = &a.guard_stability {
        let (kinds, pred) = spec.split_once(':').ok_or_else(|| usage("expected KINDS:PRED"))?;
        let held = kinds.split(',').map(parse_guard_kind::<M>).collect::<Result<BTreeSet<_>, _>>()?;
        for (src, f) in predicates(&model, pred, bounds)? {
            match check_guard_stability(&model, bounds, &held, state_pred(&model, &f)) {
                Ok(n) => writeln!(out, "Ok: {src} stable under held={kinds} ({n} transitions)")?,
                Err(t) => {
                    writeln!(out, "{src} is not stable under held={kinds}: broken by {:?}", t.action)?;
                    print_counterexample(&t.to_counterexample(), dir, out)?;
                    return Ok(EXIT_FAIL);
                }
            }
        }
        return Ok(EXIT_OK);
    }
    let text = a.ltl.as_deref().expect("clap requires one check");
    let f = model.parse_formula(text).map_err(usage)?;
    let fairness = fairness_preset(&model, &a.fair).map_err(usage)?;
    let graph = build_graph_with_cap(&model, bounds, a.state_cap).map_err(usage)?;
    match check_ltl_bounded(&model, &graph, &f, &fairness).map_err(usage)? {
        LtlOutcome::Holds => {
            writeln!(out, "Ok: {text} holds under fairness `{}` on {} states", a.fair, graph.len())?;
            Ok(EXIT_OK)
        }
        LtlOutcome::Violated(lasso) => {
            writeln!(out, "{text} is violated under fairness `{}`", a.fair)?;
            print_counterexample(&lasso, dir, out)?;
            Ok(EXIT_FAIL)
        }
    }
}

// ---- replay ---------------------------------------------------------------

fn cmd_replay(a: ReplayArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    match a.model.as_str() {
        "example" => replay_file(&ExampleModel::default(), &a.trace, out),
        "memcached" => {
            // the connection count is read off the first record
            let file = fs::File::open(&a.trace).map_err(|e| usage(format!("{}: {e}", a.trace.display())))?;
            match read_log::<MemcachedModel, _>(BufReader::new(file)) {
                Ok(log) => {
                    let n = log.records.first().map_or(1, |r| r.pre.con_state.len() as u64);
                    replay_log(&MemcachedModel::new(n), log, out)
                }
                Err(e) => {
                    writeln!(out, "invalid: {e}")?;
                    Ok(EXIT_FAIL)
                }
            }
        }
        "toy" => replay_file(&ToyModel, &a.trace, out),
        other => Err(usage(format!("unknown model `{other}`"))),
    }
}

fn replay_file<M: Model>(model: &M, path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    match read_log::<M, _>(BufReader::new(file)) {
        Ok(log) => replay_log(model, log, out),
        Err(e) => {
            writeln!(out, "invalid: {e}")?;
            Ok(EXIT_FAIL)
        }
    }
}

fn replay_log<M: Model>(model: &M, log: crate::trace::TraceLog<M>, out: &mut dyn Write) -> Result<i32, CliError> {
    match replay(model, &log) {
        Ok(s) => {
            writeln!(
                out,
                "valid: {} records ({} actions, {} stutters), {} guard events",
                s.records, s.actions, s.stutters, s.guard_events
            )?;
            Ok(EXIT_OK)
        }
        Err(e) => {
            writeln!(out, "invalid: {e}")?;
            Ok(EXIT_FAIL)
        }
    }
}

// ---- export-tla -----------------------------------------------------------

fn cmd_export(a: ExportArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let module = match a.model.as_str() {
        "example" => {
            let variant: ExampleVariant = parse_named("variant", &a.variant).map_err(usage)?;
            ExampleModel::new(variant).tla_module()
        }
        "memcached" => MemcachedModel::new(a.connections).tla_module(),
        "toy" => ToyModel.tla_module(),
        other => return Err(usage(format!("unknown model `{other}`"))),
    };
    let module = module.ok_or_else(|| usage(format!("model `{}` has no TLA+ rendering", a.model)))?;
    let text = module.render();
    match &a.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, &text)?;
            writeln!(out, "wrote {}", p.display())?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(EXIT_OK)
}
