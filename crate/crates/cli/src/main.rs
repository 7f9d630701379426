mod load;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shasmc::predictor::{ArrivalWindow, Thresholds, INTERVALS};
use shasmc::query::{evaluate_all, query_lines, BoundQuery, CheckConfig, CompiledQuery, Verdict};
use shasmc::sim::{map_trials, simulate_trial, Execution, Monitor, SimConfig, Trace};

use load::{load, parse_thresholds};
use report::{check_args, simulate_args, with_queries, CheckEcho, Row, RunReport, SimulateEcho, SimulateSummary, TrialSummary};

pub const TOOL: &str = "shasmc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "shasmc", version, about = "Statistical model checking of stochastic hybrid automata networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate queries against a model and write a report.
    Check(CheckArgs),
    /// Record trajectories as CSV traces.
    Simulate(SimulateArgs),
    /// Replay an arrival log through the batch predictor.
    Predictor(PredictorArgs),
    /// Print a model definition in the model-file schema.
    Export(ExportArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// `casestudy`, `casestudy-compare`, or a .toml/.json model file.
    #[arg(long)]
    model: String,
    /// Case-study configuration (TOML) for the built-in models.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Predictor thresholds t1,t2,t3,t4. Built-in models move their gap ranges onto them.
    #[arg(long, value_parser = parse_thresholds)]
    thresholds: Option<Thresholds>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
    Csv,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Table => "table",
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Args)]
pub struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Query file: one query per line, `#` starts a comment.
    #[arg(long = "queries")]
    query_files: Vec<PathBuf>,
    /// A single query; may be repeated. Evaluated after the query files.
    #[arg(long = "query")]
    queries: Vec<String>,
    /// Run count for every query, overriding the per-query defaults.
    #[arg(long)]
    runs: Option<u64>,
    /// Runs of `A[]`, `E<>`, `-->` and deadlock queries.
    #[arg(long, default_value_t = 1000)]
    monitored_runs: u64,
    /// Horizon of `A[]`, `E<>`, `-->` and deadlock queries.
    #[arg(long, default_value_t = 10_800.0)]
    horizon: f64,
    /// Base seed; a random one is drawn and printed when absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Level of the expectation intervals.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Extra time after the horizon in which leads-to obligations may still be met. Defaults to one horizon.
    #[arg(long)]
    grace: Option<f64>,
    /// Count leads-to obligations still open when a run ends as met.
    #[arg(long)]
    vacuous_pending: bool,
    /// Skip re-simulating counterexample and witness traces.
    #[arg(long)]
    no_evidence: bool,
    /// Directory for report.json, timings.json and evidence traces.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
    /// Exit 0 even when an `A[]` or deadlock query is falsified.
    #[arg(long)]
    allow_falsified: bool,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long, default_value_t = 10_800.0)]
    horizon: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Expression to record as a trace column; may be repeated. Defaults to the
    /// global variables except the predictor buffer.
    #[arg(long = "monitor")]
    monitors: Vec<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct PredictorArgs {
    /// Arrival log: one non-negative number per line.
    arrivals: PathBuf,
    #[arg(long, value_parser = parse_thresholds)]
    thresholds: Option<Thresholds>,
    /// Sort each completed batch before histogramming.
    #[arg(long)]
    sort: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelFormat {
    Toml,
    Json,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "toml")]
    format: ModelFormat,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_FALSIFIED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

trait OrExit<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).or_exit(EXIT_RUNTIME)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).or_exit(EXIT_RUNTIME)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn collect_queries(args: &CheckArgs, net: &shasmc::network::Network) -> Result<Vec<BoundQuery>, Failure> {
    let mut sources: Vec<(String, String)> = Vec::new();
    for path in &args.query_files {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).or_exit(EXIT_INPUT)?;
        for (line, q) in query_lines(&text) {
            sources.push((format!("{}:{line}", path.display()), q.to_string()));
        }
    }
    for (i, q) in args.queries.iter().enumerate() {
        sources.push((format!("--query #{}", i + 1), q.trim().to_string()));
    }
    let mut bound = Vec::new();
    let mut errors = Vec::new();
    for (origin, q) in sources {
        match BoundQuery::new(net, &q) {
            Ok(b) => bound.push(b),
            Err(e) => errors.push(format!("{origin}: {e}\n    {q}")),
        }
    }
    if errors.is_empty() {
        Ok(bound)
    } else {
        Err(Failure { code: EXIT_INPUT, error: anyhow!("{}", errors.join("\n")) })
    }
}

fn run_check(args: CheckArgs) -> Result<u8, Failure> {
    let started = Instant::now();
    let seed = resolve_seed(args.seed);
    let model = load(&args.model.model, args.model.config.as_deref(), args.model.thresholds).or_exit(EXIT_INPUT)?;
    let queries = collect_queries(&args, &model.net)?;
    let cfg = CheckConfig {
        sim: SimConfig { horizon: args.horizon, seed, ..SimConfig::default() },
        runs: args.runs,
        monitored_runs: args.monitored_runs,
        epsilon: args.epsilon,
        alpha: args.alpha,
        confidence: args.confidence,
        execution: if args.sequential { Execution::Sequential } else { Execution::Parallel },
        leads_to_grace: args.grace,
        pending_is_vacuous: args.vacuous_pending,
        evidence: !args.no_evidence,
    };
    cfg.validate().or_exit(EXIT_INPUT)?;
    let prepared = started.elapsed();

    let eval_start = Instant::now();
    let results = evaluate_all(&model.net, &queries, &cfg);
    let evaluated = eval_start.elapsed();

    let query_texts: Vec<String> = queries.iter().map(|q| q.text.clone()).collect();
    let echo = CheckEcho {
        model: args.model.model.clone(),
        config_file: args.model.config.clone(),
        case_study: model.case_study.clone(),
        thresholds: args.model.thresholds.map(|t| t.values()),
        queries: query_texts.clone(),
        check: cfg.clone(),
        allow_falsified: args.allow_falsified,
        args: with_queries(check_args(&args, seed), &query_texts),
    };

    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
    }
    let mut rows = Vec::with_capacity(results.len());
    for (k, (q, r)) in queries.iter().zip(&results).enumerate() {
        let index = k + 1;
        match r {
            Ok(res) => {
                let mut evidence_file = None;
                if let (Some(dir), Some(trace)) = (&args.out_dir, res.evidence.as_ref().and_then(|e| e.trace.as_ref())) {
                    let name = format!("evidence_{index}.csv");
                    write_file(&dir.join(&name), &trace.to_csv())?;
                    evidence_file = Some(name);
                }
                rows.push(Row::Done { index, result: res, evidence_file });
            }
            Err(e) => rows.push(Row::Failed { index, query: &q.text, error: e.to_string() }),
        }
    }
    let report = RunReport { tool: TOOL, version: VERSION, config: echo, results: rows };
    let json = to_json(&report);
    let rendered = match args.format {
        Format::Table => report.table(),
        Format::Json => json.clone(),
        Format::Csv => report.csv(),
    };
    let timings = report::Timings {
        prepare_ms: prepared.as_secs_f64() * 1e3,
        evaluate_ms: evaluated.as_secs_f64() * 1e3,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    if let Some(dir) = &args.out_dir {
        write_file(&dir.join("report.json"), &json)?;
        write_file(&dir.join(format!("results.{}", if args.format == Format::Table { "txt" } else { args.format.name() })), &rendered)?;
        write_file(&dir.join("timings.json"), &to_json(&timings))?;
    }
    io::stdout().write_all(rendered.as_bytes()).or_exit(EXIT_RUNTIME)?;
    eprintln!(
        "{} queries in {:.1} ms (prepare {:.1} ms, evaluate {:.1} ms)",
        queries.len(),
        timings.total_ms,
        timings.prepare_ms,
        timings.evaluate_ms
    );

    let mut code = 0;
    for (q, r) in queries.iter().zip(&results) {
        match r {
            Err(e) => {
                eprintln!("error: {}: {e}", q.text);
                code = EXIT_RUNTIME;
            }
            Ok(res) => {
                let safety = matches!(q.compiled, CompiledQuery::Always(_) | CompiledQuery::NoDeadlock);
                if safety && matches!(res.verdict, Verdict::Falsified { .. }) && !args.allow_falsified && code == 0 {
                    code = EXIT_FALSIFIED;
                }
            }
        }
    }
    Ok(code)
}

fn go_idle_history(trace: &Trace) -> Option<Vec<u8>> {
    let d = trace.monitors.iter().position(|m| m == "decisions")?;
    let g = trace.monitors.iter().position(|m| m == "goIdle")?;
    let mut seen = 0.0;
    let mut out = Vec::new();
    for e in &trace.events {
        if e.values[d] > seen {
            seen = e.values[d];
            out.push(u8::from(e.values[g] != 0.0));
        }
    }
    Some(out)
}

fn run_simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let seed = resolve_seed(args.seed);
    let model = load(&args.model.model, args.model.config.as_deref(), args.model.thresholds).or_exit(EXIT_INPUT)?;
    let net = &model.net;
    let sim = SimConfig { horizon: args.horizon, seed, ..SimConfig::default() };
    sim.validate().or_exit(EXIT_INPUT)?;
    if args.runs == 0 {
        return Err(Failure { code: EXIT_INPUT, error: anyhow!("--runs must be positive") });
    }
    let mut monitors: Vec<Monitor> = if args.monitors.is_empty() {
        Monitor::globals(net).into_iter().filter(|m| !m.name.starts_with("env_")).collect()
    } else {
        args.monitors.iter().map(|m| Monitor::new(net, m)).collect::<Result<_, _>>().or_exit(EXIT_INPUT)?
    };
    for name in ["decisions", "goIdle"] {
        if !monitors.iter().any(|m| m.name == name) {
            if let Ok(m) = Monitor::new(net, name) {
                monitors.push(m);
            }
        }
    }
    let execution = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let traces = map_trials(args.runs, execution, |trial| simulate_trial(net, &sim, &monitors, trial));

    create_dir(&args.out_dir)?;
    let mut trials = Vec::new();
    for (trial, trace) in traces.into_iter().enumerate() {
        let trace = trace.map_err(|e| anyhow!("trial {trial}: {e}")).or_exit(EXIT_RUNTIME)?;
        let file = format!("run_{trial}.csv");
        write_file(&args.out_dir.join(&file), &trace.to_csv())?;
        let final_values: BTreeMap<String, f64> =
            monitors.iter().map(|m| (m.name.clone(), m.eval(&trace.final_state))).collect();
        trials.push(TrialSummary {
            trial: trial as u64,
            file,
            terminated_by: trace.terminated_by,
            final_time: trace.final_state.time,
            steps: trace.steps,
            arrivals: final_values.get("arrivals").map(|v| *v as u64),
            go_idle_history: go_idle_history(&trace),
            final_values,
        });
    }
    let summary = SimulateSummary {
        tool: TOOL,
        version: VERSION,
        config: SimulateEcho {
            model: args.model.model.clone(),
            config_file: args.model.config.clone(),
            case_study: model.case_study.clone(),
            thresholds: args.model.thresholds.map(|t| t.values()),
            sim,
            runs: args.runs,
            monitors: monitors.iter().map(|m| m.name.clone()).collect(),
            args: simulate_args(&args, seed),
        },
        runs: trials,
    };
    write_file(&args.out_dir.join("summary.json"), &to_json(&summary))?;
    eprintln!("wrote {} trace(s) to {}", args.runs, args.out_dir.display());
    Ok(0)
}

/// Parses an arrival log, skipping blank lines.
fn read_arrivals(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() {
            continue;
        }
        match l.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => out.push(v),
            _ => return Err(anyhow!("{}:{}: malformed line `{l}`: expected a non-negative number", path.display(), i + 1)),
        }
    }
    Ok(out)
}

fn run_predictor(args: PredictorArgs) -> Result<u8, Failure> {
    let arrivals = read_arrivals(&args.arrivals).or_exit(EXIT_INPUT)?;
    let mut w = ArrivalWindow::new(args.thresholds.unwrap_or_default(), [4; INTERVALS], true).with_sorting(args.sort);
    let mut csv = csv::Writer::from_writer(Vec::new());
    let header = ["batch", "TI1", "TI2", "TI3", "TI4", "TI5", "q2", "q3", "goIdle"];
    csv.write_record(header).or_exit(EXIT_RUNTIME)?;
    let mut batch = 0;
    for v in arrivals {
        w = w.record_arrival(v);
        if w.counter == 0 {
            let d = w.last_decision.expect("completed batch has a decision");
            batch += 1;
            let mut rec = vec![batch.to_string()];
            rec.extend(w.counts.iter().map(|c| c.to_string()));
            rec.extend([d.q2.to_string(), d.q3.to_string(), u8::from(d.go_idle).to_string()]);
            csv.write_record(&rec).or_exit(EXIT_RUNTIME)?;
        }
    }
    let bytes = csv.into_inner().map_err(|e| anyhow!("{e}")).or_exit(EXIT_RUNTIME)?;
    match &args.out {
        Some(p) => fs::write(p, &bytes).with_context(|| format!("writing {}", p.display())).or_exit(EXIT_RUNTIME)?,
        None => io::stdout().write_all(&bytes).or_exit(EXIT_RUNTIME)?,
    }
    Ok(0)
}

fn run_export(args: ExportArgs) -> Result<u8, Failure> {
    let model = load(&args.model.model, args.model.config.as_deref(), args.model.thresholds).or_exit(EXIT_INPUT)?;
    let text = match args.format {
        ModelFormat::Toml => toml::to_string(&model.def).or_exit(EXIT_RUNTIME)?,
        ModelFormat::Json => to_json(&model.def),
    };
    io::stdout().write_all(text.as_bytes()).or_exit(EXIT_RUNTIME)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check(a) => run_check(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Predictor(a) => run_predictor(a),
        Command::Export(a) => run_export(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
