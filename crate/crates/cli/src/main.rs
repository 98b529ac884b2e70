//! `stlcbf` command-line front end.
//!
//! Exit codes: 0 success or satisfied, 2 configuration or parse error,
//! 3 specification violated, 4 integration fault.

mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use stlcbf::cbf::NodeParams;
use stlcbf::monitor::{monitor, SampledSignal, Verdict};
use stlcbf::scenario::{prepare, transform_stage, tree_stage, ScenarioConfig};
use stlcbf::sim::{flags, run_pipeline, SimError, TrajectoryLog};
use stlcbf::stl::{parse_formula, Formula, PredicateTable};
use stlcbf::tree::{NodeKind, TimedTree};

#[derive(Parser)]
#[command(name = "stlcbf", version, about = "STL specifications to barrier-function controllers")]
struct Cli {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized corpora; echoed in the report.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the integration step of the scenario.
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the formula and print its syntax tree.
    Parse(StageArgs),
    /// Rewrite the formula into the desired form and print the rule trace.
    Transform(StageArgs),
    /// Build the specification tree with timing and release information.
    Tree(StageArgs),
    /// Synthesize the barrier function and print its coefficient table.
    Synth(StageArgs),
    /// Run the closed loop, write the CSV log and monitor the original formula.
    Simulate(SimulateArgs),
    /// Evaluate a formula on a CSV trajectory.
    Monitor(MonitorArgs),
    /// Render a CSV log as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Formula to use instead of the one in the config.
    #[arg(long)]
    formula: Option<String>,
    /// Also print the stage artifact as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Run several scenario files concurrently.
    #[arg(long, num_args = 1..)]
    batch: Vec<PathBuf>,
    /// Print the effective configuration with defaults resolved and exit.
    #[arg(long)]
    emit_config: bool,
    /// Write an SVG even when the config names none.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Formula to check; the config formula when absent.
    #[arg(long)]
    formula: Option<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Output file; `<csv stem>.svg` in the output directory when absent.
    #[arg(long)]
    svg: Option<PathBuf>,
}

/// A failed invocation and its exit code.
enum Failure {
    Config(anyhow::Error),
    Violated,
    Fault(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Violated => 3,
            Failure::Fault(_) => 4,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<stlcbf::scenario::ScenarioError> for Failure {
    fn from(e: stlcbf::scenario::ScenarioError) -> Self {
        Failure::Config(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(seed) = cli.seed {
        println!("REPORT: seed={seed}");
    }
    let result = match &cli.command {
        Command::Parse(a) => cmd_parse(&cli, a),
        Command::Transform(a) => cmd_transform(&cli, a),
        Command::Tree(a) => cmd_tree(&cli, a),
        Command::Synth(a) => cmd_synth(&cli, a),
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::Monitor(a) => cmd_monitor(&cli, a),
        Command::Plot(a) => cmd_plot(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) | Failure::Fault(e) => eprintln!("error: {e:#}"),
                Failure::Violated => {}
            }
            ExitCode::from(f.code())
        }
    }
}

fn load_config(cli: &Cli, path: Option<&Path>) -> anyhow::Result<ScenarioConfig> {
    let path = path.or(cli.config.as_deref()).ok_or_else(|| anyhow!("--config is required"))?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(dt) = cli.dt {
        cfg.sim.dt = dt;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn stage_config(cli: &Cli, args: &StageArgs) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = load_config(cli, None)?;
    if let Some(f) = &args.formula {
        cfg.formula = f.clone();
    }
    Ok(cfg)
}

fn ast_label(f: &Formula) -> String {
    match f {
        Formula::True => "T".into(),
        Formula::Pred(n) => n.clone(),
        Formula::NotPred(n) => format!("!{n}"),
        Formula::And(_) => "&".into(),
        Formula::Always(i, _) => format!("G{i}"),
        Formula::Eventually(i, _) => format!("F{i}"),
        Formula::Until(i, _, _) => format!("U{i}"),
    }
}

fn render_ast(f: &Formula, depth: usize, out: &mut String) {
    let _ = writeln!(out, "{:indent$}{}", "", ast_label(f), indent = 2 * depth);
    for c in f.children() {
        render_ast(c, depth + 1, out);
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn cmd_parse(cli: &Cli, args: &StageArgs) -> CmdResult {
    let cfg = stage_config(cli, args)?;
    let f = parse_formula(&cfg.formula, &cfg.predicates).context("cannot parse formula")?;
    let mut ast = String::new();
    render_ast(&f, 0, &mut ast);
    print!("{ast}");
    println!("REPORT: formula={f}");
    println!("REPORT: size={} depth={} horizon={}", f.size(), f.temporal_depth(), f.horizon());
    if args.json {
        print_json(&json!({ "formula": f.to_string(), "ast": f }));
    }
    Ok(())
}

fn cmd_transform(cli: &Cli, args: &StageArgs) -> CmdResult {
    let cfg = stage_config(cli, args)?;
    let (original, desired) = transform_stage(&cfg)?;
    println!("input   {original}");
    for (k, e) in desired.trace.entries.iter().enumerate() {
        println!("{k:3}  {}: {}  =>  {}", e.rule, e.source, e.result);
    }
    for w in &desired.warnings {
        println!("warning: {w}");
    }
    println!("REPORT: desired={}", desired.formula);
    println!("REPORT: rules_applied={} warnings={}", desired.trace.entries.len(), desired.warnings.len());
    if args.json {
        let trace: Vec<_> = desired
            .trace
            .entries
            .iter()
            .map(|e| json!({ "rule": e.rule.to_string(), "source": e.source.to_string(), "result": e.result.to_string() }))
            .collect();
        print_json(&json!({
            "original": original.to_string(),
            "desired": desired.formula.to_string(),
            "predicates": desired.predicates,
            "trace": trace,
            "warnings": desired.warnings,
        }));
    }
    Ok(())
}

fn timed_json(timed: &TimedTree) -> serde_json::Value {
    let nodes: Vec<_> = timed
        .tree
        .nodes()
        .iter()
        .zip(&timed.timings)
        .map(|(n, t)| {
            json!({
                "index": n.index,
                "formula": n.formula.to_string(),
                "parent": n.parent,
                "children": n.children,
                "active": t.active,
                "terminal": t.terminal,
                "t_star": t.t_star,
                "release": t.release,
            })
        })
        .collect();
    json!({ "nodes": nodes, "horizon": timed.horizon, "switching": timed.switching })
}

fn cmd_tree(cli: &Cli, args: &StageArgs) -> CmdResult {
    let cfg = stage_config(cli, args)?;
    let (_, desired, timed) = tree_stage(&cfg)?;
    println!("desired {}", desired.formula);
    print!("{}", timed.render());
    println!("REPORT: nodes={} horizon={}", timed.tree.len(), timed.horizon);
    if args.json {
        print_json(&timed_json(&timed));
    }
    Ok(())
}

fn node_label(kind: &NodeKind, formula: &Formula) -> String {
    match kind {
        NodeKind::Temporal { op, interval } => format!("{}{}", op.symbol(), interval),
        _ => ast_label(formula),
    }
}

fn cmd_synth(cli: &Cli, args: &StageArgs) -> CmdResult {
    let cfg = stage_config(cli, args)?;
    let p = prepare(&cfg)?;
    println!("desired {}", p.desired.formula);
    println!("{:>4}  {:<12} {:>8} {:>8} {:>8} {:>8} {:>8}", "node", "kind", "active", "term", "a", "b", "release");
    let mut rows = Vec::new();
    for (n, t) in p.timed.tree.nodes().iter().zip(&p.timed.timings) {
        let (a, b) = p.spec.slope_margin(n.index).unwrap_or((0.0, 0.0));
        let release = t.release.map_or("-".to_string(), |r| r.to_string());
        println!(
            "{:>4}  {:<12} {:>8} {:>8} {:>8.2} {:>8.2} {:>8}",
            n.index,
            node_label(&n.kind, &n.formula),
            t.active,
            t.terminal,
            a,
            b,
            release
        );
        let kind = match &p.spec.params[n.index] {
            NodeParams::Temporal { .. } => "temporal",
            NodeParams::Conjunction { .. } => "conjunction",
            NodeParams::Predicate(_) => "predicate",
            NodeParams::True => "true",
        };
        rows.push(json!({
            "index": n.index,
            "kind": kind,
            "formula": n.formula.to_string(),
            "active": t.active,
            "terminal": t.terminal,
            "a": a,
            "b": b,
            "release": t.release,
        }));
    }
    println!("REPORT: nodes={} horizon={} kappa={}", rows.len(), p.timed.horizon, cfg.transform.kappa);
    if args.json {
        print_json(&json!({ "desired": p.desired.formula.to_string(), "kappa": cfg.transform.kappa, "nodes": rows }));
    }
    Ok(())
}

/// Outcome of one simulated scenario.
struct RunOutcome {
    lines: Vec<String>,
    result: CmdResult,
}

fn scenario_name(path: &Path) -> String {
    path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn signal_of(log: &TrajectoryLog) -> anyhow::Result<SampledSignal> {
    let times = log.rows.iter().map(|r| r.t).collect();
    let states = log.rows.iter().map(|r| r.x.clone()).collect();
    Ok(SampledSignal::new(times, states)?)
}

fn write_outputs(
    cfg: &ScenarioConfig,
    name: &str,
    out: &Path,
    force_svg: bool,
    log: &TrajectoryLog,
    lines: &mut Vec<String>,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let csv_path = out.join(cfg.outputs.csv.clone().unwrap_or_else(|| format!("{name}.csv")));
    let file = std::fs::File::create(&csv_path).with_context(|| format!("cannot write {}", csv_path.display()))?;
    log.write_csv(std::io::BufWriter::new(file))?;
    lines.push(format!("REPORT: scenario={name} csv={}", csv_path.display()));
    if cfg.outputs.svg.is_some() || force_svg {
        let svg_path = out.join(cfg.outputs.svg.clone().unwrap_or_else(|| format!("{name}.svg")));
        std::fs::write(&svg_path, svg::render(log, &cfg.predicates))
            .with_context(|| format!("cannot write {}", svg_path.display()))?;
        lines.push(format!("REPORT: scenario={name} svg={}", svg_path.display()));
    }
    Ok(())
}

fn report_line(name: &str, verdict: &Verdict, log: &TrajectoryLog, wall: f64) -> String {
    format!(
        "REPORT: scenario={name} satisfied={} robustness={:.6} min_hhat={:.6} max_e_over_rho={:.6} \
         steps={} guard_clamps={} qp_saturated={} resets={} reset_faults={} funnel_violations={} \
         unenforceable={} wall_s={wall:.3}",
        verdict.satisfied,
        verdict.robustness,
        log.min_hhat(),
        log.max_error_ratio(),
        log.rows.len(),
        log.count(flags::GUARD_CLAMP),
        log.count(flags::QP_SATURATED),
        log.count(flags::RELEASE_RESET),
        log.count(flags::RESET_FAULT),
        log.count(flags::FUNNEL_VIOLATION),
        log.count(flags::UNENFORCEABLE),
    )
}

fn simulate_one(cli: &Cli, path: Option<&Path>, force_svg: bool) -> RunOutcome {
    let mut lines = Vec::new();
    let result = (|| -> CmdResult {
        let cfg = load_config(cli, path)?;
        let name = scenario_name(path.or(cli.config.as_deref()).unwrap_or(Path::new("scenario")));
        let start = Instant::now();
        let pipeline = prepare(&cfg)?;
        match run_pipeline(&cfg, &pipeline) {
            Ok(log) => {
                let wall = start.elapsed().as_secs_f64();
                write_outputs(&cfg, &name, &cli.out, force_svg, &log, &mut lines)?;
                let verdict = monitor(&pipeline.original, &cfg.predicates, &signal_of(&log)?)
                    .context("cannot monitor the trajectory")?;
                lines.push(report_line(&name, &verdict, &log, wall));
                if verdict.satisfied {
                    Ok(())
                } else {
                    Err(Failure::Violated)
                }
            }
            Err(SimError::Fault { t, partial }) => {
                write_outputs(&cfg, &name, &cli.out, force_svg, &partial, &mut lines)?;
                lines.push(format!("REPORT: scenario={name} fault_t={t} steps={}", partial.rows.len()));
                Err(Failure::Fault(anyhow!("integration fault at t = {t}")))
            }
            Err(SimError::Scenario(e)) => Err(Failure::Config(e.into())),
            Err(e) => Err(Failure::Fault(e.into())),
        }
    })();
    RunOutcome { lines, result }
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> CmdResult {
    if args.emit_config {
        let cfg = load_config(cli, None)?;
        println!("{}", cfg.effective().to_json());
        return Ok(());
    }
    if args.batch.is_empty() {
        let outcome = simulate_one(cli, None, args.svg);
        outcome.lines.iter().for_each(|l| println!("{l}"));
        return outcome.result;
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(args.batch.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new((0..args.batch.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = args.batch.get(k) else { break };
                let outcome = simulate_one(cli, Some(path), args.svg);
                slots.lock().expect("no worker panicked")[k] = Some(outcome);
            });
        }
    });
    let mut worst: CmdResult = Ok(());
    for (path, outcome) in args.batch.iter().zip(slots.into_inner().expect("no worker panicked")) {
        let outcome = outcome.expect("every scenario ran");
        outcome.lines.iter().for_each(|l| println!("{l}"));
        if let Err(f) = outcome.result {
            match &f {
                Failure::Config(e) | Failure::Fault(e) => eprintln!("error: {}: {e:#}", path.display()),
                Failure::Violated => {}
            }
            if worst.as_ref().err().map_or(0, Failure::code) < f.code() {
                worst = Err(f);
            }
        }
    }
    match worst {
        Err(Failure::Config(_)) => Err(Failure::Config(anyhow!("some scenarios could not be loaded"))),
        Err(Failure::Fault(_)) => Err(Failure::Fault(anyhow!("some scenarios faulted"))),
        other => other,
    }
}

fn predicates_for_monitor(cli: &Cli) -> anyhow::Result<(PredicateTable, String)> {
    let cfg = load_config(cli, None).context("monitor needs --config for the predicate table")?;
    Ok((cfg.predicates, cfg.formula))
}

fn cmd_monitor(cli: &Cli, args: &MonitorArgs) -> CmdResult {
    let (predicates, config_formula) = predicates_for_monitor(cli)?;
    let text = args.formula.clone().unwrap_or(config_formula);
    let f = parse_formula(&text, &predicates).context("cannot parse formula")?;
    let file = std::fs::File::open(&args.csv).with_context(|| format!("cannot read {}", args.csv.display()))?;
    let signal = SampledSignal::from_csv(file).with_context(|| format!("malformed trajectory {}", args.csv.display()))?;
    let verdict = monitor(&f, &predicates, &signal).context("cannot evaluate")?;
    println!("REPORT: formula={f}");
    println!("REPORT: satisfied={} robustness={:.6}", verdict.satisfied, verdict.robustness);
    if verdict.satisfied {
        Ok(())
    } else {
        Err(Failure::Violated)
    }
}

fn cmd_plot(cli: &Cli, args: &PlotArgs) -> CmdResult {
    let predicates = match &cli.config {
        Some(_) => load_config(cli, None)?.predicates,
        None => PredicateTable::new(),
    };
    let file = std::fs::File::open(&args.csv).with_context(|| format!("cannot read {}", args.csv.display()))?;
    let log = TrajectoryLog::read_csv(file).map_err(|e| anyhow!("malformed log {}: {e}", args.csv.display()))?;
    if log.rows.is_empty() {
        return Err(anyhow!("log {} has no rows", args.csv.display()).into());
    }
    let path = match &args.svg {
        Some(p) => p.clone(),
        None => {
            std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
            cli.out.join(format!("{}.svg", scenario_name(&args.csv)))
        }
    };
    std::fs::write(&path, svg::render(&log, &predicates)).with_context(|| format!("cannot write {}", path.display()))?;
    println!("REPORT: svg={}", path.display());
    Ok(())
}
