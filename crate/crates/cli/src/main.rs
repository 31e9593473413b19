//! `combicbf` command-line front end.
//!
//! Exit codes: 0 clean, 1 usage/parse/validation error, 2 safety violation
//! (run) or audit findings (audit, gradcheck), 3 QP infeasibility halt.

mod overrides;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use combicbf::naive_combination_count;
use combicbf::primitives::check_gradient;
use combicbf::sim::{
    self, demos, AuditOptions, BoundOrders, InfeasiblePolicy, RunOutcome, RunOutput, Scenario,
    ScenarioConfig, TrajectoryFormat,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OUT_DIR_ENV: &str = "COMBICBF_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "combicbf", version, about = "Combinatorial barrier safety filter: run, audit and inspect scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write its trajectory and summary.
    Run(RunArgs),
    /// Re-check a trajectory file against its scenario.
    Audit(AuditArgs),
    /// Run an embedded demo scenario, or print it with --emit.
    Demo(DemoArgs),
    /// Compare analytic and finite-difference barrier gradients.
    Gradcheck(GradcheckArgs),
    /// Print enforced rows against the naive clause count.
    Count(ScenarioArg),
    /// Run several scenarios on a worker pool.
    Batch(BatchArgs),
}

#[derive(Args, Debug)]
struct ScenarioArg {
    /// Scenario file (JSON).
    #[arg(value_name = "SCENARIO", required_unless_present = "scenario")]
    path: Option<PathBuf>,
    #[arg(long, value_name = "PATH", conflicts_with = "path")]
    scenario: Option<PathBuf>,
    /// Dotted-path override applied to the scenario document, e.g. sim.dt=0.005.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ScenarioArg {
    fn path(&self) -> &Path {
        self.scenario.as_deref().or(self.path.as_deref()).expect("clap requires one")
    }
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    /// Trajectory file. Defaults to <out-dir>/<scenario name>.<format>.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Directory for default output paths.
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    /// Summary file. Defaults to the trajectory path with a .summary.json suffix.
    #[arg(long, value_name = "PATH")]
    summary: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Pivot values below -TOL count as safety violations.
    #[arg(long, value_name = "TOL")]
    tol_safety: Option<f64>,
    #[arg(long, value_enum)]
    on_infeasible: Option<PolicyArg>,
    /// Suppress the summary on stdout.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Trajectory file produced by `run`.
    #[arg(long, short, value_name = "PATH")]
    trajectory: PathBuf,
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Satisfaction tolerance. Defaults to the scenario's sim.safety_tol.
    #[arg(long, value_name = "TOL")]
    tol_safety: Option<f64>,
    /// Decay-bound slack constant C in C*dt^2.
    #[arg(long, default_value_t = 10.0)]
    bound_slack_c: f64,
    /// Order statistics checked on flat trees: up-to-pivot, from-pivot, all,
    /// or a comma-separated list such as 2,3,4.
    #[arg(long, default_value = "up-to-pivot", value_parser = parse_bound_orders)]
    bound_orders: BoundOrders,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(demos::DEMO_NAMES))]
    name: Option<String>,
    /// Print the scenario JSON to stdout instead of running it.
    #[arg(long, requires = "name")]
    emit: bool,
    /// Write every demo scenario as demo-<name>.json into DIR.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["name", "emit"])]
    emit_all: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of the sampling box around the initial state.
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

#[derive(Args, Debug)]
struct BatchArgs {
    #[arg(required = true, value_name = "SCENARIO")]
    paths: Vec<PathBuf>,
    /// Worker threads (0 = available parallelism).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, value_name = "DIR", env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Jsonl,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PolicyArg {
    Halt,
    Flag,
}

fn parse_bound_orders(s: &str) -> Result<BoundOrders, String> {
    match s {
        "up-to-pivot" => Ok(BoundOrders::UpToPivot),
        "from-pivot" => Ok(BoundOrders::FromPivot),
        "all" => Ok(BoundOrders::All),
        list => list
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad order `{t}`")))
            .collect::<Result<Vec<_>, _>>()
            .map(BoundOrders::Explicit),
    }
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<combicbf::Error> for Failure {
    fn from(e: combicbf::Error) -> Self {
        Failure::input(e.to_string())
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Demo(a) => cmd_demo(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Count(a) => cmd_count(a),
        Command::Batch(a) => cmd_batch(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Reads a scenario document, applies `--set` overrides and deserializes
/// it. Syntax errors report line and column, schema errors the field path.
fn load_config(path: &Path, sets: &[String]) -> Result<ScenarioConfig, Failure> {
    let shown = path.display();
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{shown}: {e}")))?;
    if sets.is_empty() {
        let de = &mut serde_json::Deserializer::from_str(&text);
        return serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            Failure::input(format!("{shown}: field `{field}`: {inner}"))
        });
    }
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{shown}: {e}")))?;
    for s in sets {
        let ov = overrides::parse(s).map_err(Failure::input)?;
        overrides::apply(&mut doc, &ov).map_err(Failure::input)?;
    }
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let field = e.path().to_string();
        Failure::input(format!("{shown} (after --set): field `{field}`: {}", e.into_inner()))
    })
}

fn compile(cfg: ScenarioConfig, origin: &str) -> Result<Scenario, Failure> {
    cfg.compile().map_err(|e| Failure::input(format!("{origin}: {e}")))
}

/// Dedicated flags win over `--set`, which wins over the file.
fn apply_output_flags(cfg: &mut ScenarioConfig, o: &OutputArgs) {
    if let Some(f) = o.format {
        cfg.output.format = match f {
            FormatArg::Jsonl => TrajectoryFormat::Jsonl,
            FormatArg::Csv => TrajectoryFormat::Csv,
        };
    }
    if let Some(t) = o.tol_safety {
        cfg.sim.safety_tol = t;
    }
    if let Some(p) = o.on_infeasible {
        cfg.on_infeasible = match p {
            PolicyArg::Halt => InfeasiblePolicy::Halt,
            PolicyArg::Flag => InfeasiblePolicy::Flag,
        };
    }
}

fn extension(f: TrajectoryFormat) -> &'static str {
    match f {
        TrajectoryFormat::Jsonl => "jsonl",
        TrajectoryFormat::Csv => "csv",
    }
}

fn default_out(dir: Option<&Path>, name: &str, format: TrajectoryFormat) -> PathBuf {
    dir.unwrap_or(Path::new(".")).join(format!("{name}.{}", extension(format)))
}

fn summary_path_for(traj: &Path) -> PathBuf {
    let stem = traj.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    traj.with_file_name(format!("{stem}.summary.json"))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_outputs(out: &RunOutput, format: TrajectoryFormat, traj_path: &Path, summary_path: &Path) -> Result<(), Failure> {
    let w = create(traj_path)?;
    match format {
        TrajectoryFormat::Jsonl => sim::write_jsonl(w, &out.trajectory)?,
        TrajectoryFormat::Csv => sim::write_csv(w, &out.trajectory)?,
    }
    let mut w = create(summary_path)?;
    let body = serde_json::to_string_pretty(&out.summary).map_err(combicbf::Error::from)?;
    writeln!(w, "{body}").map_err(combicbf::Error::from)?;
    w.flush().map_err(combicbf::Error::from)?;
    Ok(())
}

fn exit_code(outcome: RunOutcome) -> u8 {
    match outcome {
        RunOutcome::Clean => 0,
        RunOutcome::SafetyViolation => 2,
        RunOutcome::InfeasibleHalt => 3,
    }
}

fn print_summary(out: &RunOutput, traj_path: &Path) {
    let s = &out.summary;
    println!("scenario {}: {} steps, {} rows/step", s.scenario, s.steps, s.rows_per_step);
    println!("min pivot {:.6e} at t={}", s.min_pivot, s.min_pivot_t);
    println!("violation steps {}, infeasible steps {}", s.violation_steps, s.infeasible_steps);
    if let Some(t) = s.halted_at {
        println!("halted at t={t} (QP infeasible)");
    }
    for r in &s.region_min_counts {
        println!("region {} min count {}", r.name, r.min_count);
    }
    if let Some(n) = s.max_outside_all {
        println!("max outside all regions {n}");
    }
    println!("qp iterations {}, wall clock {:.3} s", s.qp_iterations, s.wall_clock_s);
    println!("trajectory {}", traj_path.display());
}

fn run_config(cfg: ScenarioConfig, origin: &str, o: &OutputArgs) -> CliResult {
    let scn = compile(cfg, origin)?;
    let format = scn.config().output.format;
    let traj_path = o
        .out
        .clone()
        .unwrap_or_else(|| default_out(o.out_dir.as_deref(), &scn.config().name, format));
    let summary_path = o.summary.clone().unwrap_or_else(|| summary_path_for(&traj_path));
    let out = sim::run(&scn)?;
    write_outputs(&out, format, &traj_path, &summary_path)?;
    if !o.quiet {
        print_summary(&out, &traj_path);
    }
    Ok(exit_code(out.summary.outcome()))
}

fn cmd_run(a: RunArgs) -> CliResult {
    let path = a.scenario.path();
    let mut cfg = load_config(path, &a.scenario.sets)?;
    apply_output_flags(&mut cfg, &a.output);
    run_config(cfg, &path.display().to_string(), &a.output)
}

fn cmd_demo(a: DemoArgs) -> CliResult {
    if let Some(dir) = a.emit_all {
        std::fs::create_dir_all(&dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
        for name in demos::DEMO_NAMES {
            let path = dir.join(demos::demo_file_name(name));
            let cfg = demos::demo(name).expect("listed demo exists");
            std::fs::write(&path, cfg.to_json_pretty())
                .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            if !a.output.quiet {
                println!("{}", path.display());
            }
        }
        return Ok(0);
    }
    let Some(name) = a.name else {
        return Err(Failure::input(format!(
            "demo name required, one of: {}",
            demos::DEMO_NAMES.join(", ")
        )));
    };
    let mut cfg = demos::demo(&name).expect("clap restricts names");
    if a.emit {
        print!("{}", cfg.to_json_pretty());
        return Ok(0);
    }
    apply_output_flags(&mut cfg, &a.output);
    run_config(cfg, &format!("demo {name}"), &a.output)
}

fn cmd_audit(a: AuditArgs) -> CliResult {
    let path = a.scenario.path();
    let cfg = load_config(path, &a.scenario.sets)?;
    let scn = compile(cfg, &path.display().to_string())?;
    let shown = a.trajectory.display();
    let file = File::open(&a.trajectory).map_err(|e| Failure::input(format!("{shown}: {e}")))?;
    let traj = sim::read_trajectory(BufReader::new(file)).map_err(|e| Failure::input(format!("{shown}: {e}")))?;
    if traj.header.scenario != scn.config().name {
        return Err(Failure::input(format!(
            "{shown}: produced by scenario `{}`, not `{}`",
            traj.header.scenario,
            scn.config().name
        )));
    }
    if traj.header.state_dim != scn.system().state_dim() {
        return Err(Failure::input(format!(
            "{shown}: state dimension {} does not match the scenario ({})",
            traj.header.state_dim,
            scn.system().state_dim()
        )));
    }
    let opts = AuditOptions {
        tol: a.tol_safety.unwrap_or(scn.config().sim.safety_tol),
        bound_slack_c: a.bound_slack_c,
        bound_orders: a.bound_orders,
    };
    let report = sim::audit(&traj.records, scn.barrier(), &opts).map_err(|e| Failure::input(format!("{shown}: {e}")))?;

    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(combicbf::Error::from)?);
    } else if !a.quiet {
        println!(
            "audited {} steps, min pivot {:.6e}, {} violations",
            report.steps,
            report.min_pivot,
            report.violations.len()
        );
        const SHOWN: usize = 20;
        for v in report.violations.iter().take(SHOWN) {
            let what = match &v.finding {
                sim::AuditFinding::Pivot { pivot } => format!("pivot {pivot:.6e} below tolerance"),
                sim::AuditFinding::Membership => "specification not satisfied".to_string(),
                sim::AuditFinding::Bound { order, value, required } => {
                    format!("order {order} value {value:.6e} below bound {required:.6e}")
                }
            };
            println!("step {} t={}: {what}", v.step, v.t);
        }
        if report.violations.len() > SHOWN {
            println!("... {} more", report.violations.len() - SHOWN);
        }
    }
    Ok(if report.is_clean() { 0 } else { 2 })
}

fn cmd_count(a: ScenarioArg) -> CliResult {
    let path = a.path();
    let cfg = load_config(path, &a.sets)?;
    let scn = compile(cfg, &path.display().to_string())?;
    let naive = naive_combination_count(scn.barrier().tree());
    println!("{} rows vs {} naive combinations", scn.rows_per_step(), naive);
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    let path = a.scenario.path();
    let cfg = load_config(path, &a.scenario.sets)?;
    let scn = compile(cfg, &path.display().to_string())?;
    let x0 = &scn.config().initial_state;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut failed = 0;
    for (k, b) in scn.barrier().barriers().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for _ in 0..a.samples {
            let x: Vec<f64> = x0.iter().map(|c| c + rng.gen_range(-a.radius..=a.radius)).collect();
            worst = worst.max(check_gradient(b, &x, a.step));
        }
        let ok = worst < a.tol;
        if !ok {
            failed += 1;
        }
        println!("{k:>4} {:<24} max error {worst:.3e} {}", b.label(), if ok { "ok" } else { "FAIL" });
    }
    println!("{failed} of {} primitives failed", scn.barrier().primitive_count());
    Ok(if failed == 0 { 0 } else { 2 })
}

fn cmd_batch(a: BatchArgs) -> CliResult {
    let mut scenarios = Vec::with_capacity(a.paths.len());
    for path in &a.paths {
        let mut cfg = load_config(path, &a.sets)?;
        if let Some(f) = a.format {
            cfg.output.format = match f {
                FormatArg::Jsonl => TrajectoryFormat::Jsonl,
                FormatArg::Csv => TrajectoryFormat::Csv,
            };
        }
        scenarios.push(compile(cfg, &path.display().to_string())?);
    }
    let workers = if a.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        a.workers
    };
    let mut code = 0;
    for (scn, out) in scenarios.iter().zip(sim::run_batch(&scenarios, workers)) {
        let out = out?;
        let format = scn.config().output.format;
        let traj = default_out(a.out_dir.as_deref(), &scn.config().name, format);
        write_outputs(&out, format, &traj, &summary_path_for(&traj))?;
        let c = exit_code(out.summary.outcome());
        code = code.max(c);
        if !a.quiet {
            println!(
                "{}: {:?}, min pivot {:.6e}, {}",
                out.summary.scenario,
                out.summary.outcome(),
                out.summary.min_pivot,
                traj.display()
            );
        }
    }
    Ok(code)
}
