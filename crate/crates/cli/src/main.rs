use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use otcd_core::ci::omega_report;
use otcd_core::experiment::{run_experiment, ExperimentPlan, MethodConfig};
use otcd_core::graph::{structural_metrics, Dag, Pdag};
use otcd_core::io::{load_csv, write_csv, LoadOptions, Provenance};
use otcd_core::pcot::run_pc_ot;
use otcd_core::scores::{select_ordering, write_scores_csv, LossKind};
use otcd_core::sem::{preset, sample, SemSpec};
use otcd_core::{fit_map, SampleMatrix, TriangularMapSpec};
use serde::Serialize;
use serde_json::{json, Value};

mod config;

#[derive(Parser)]
#[command(name = "otcd", version, about = "Causal discovery with triangular transport maps")]
struct Cli {
    /// Seed for sampling and any randomized option (env OTCD_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (env OTCD_WORKERS); defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config file (env OTCD_CONFIG); OTCD_<KEY> variables override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Take the natural log of every entry.
    #[arg(long)]
    log: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a preset or a SEM given as JSON and write CSV.
    Gen {
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<String>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the SEM as JSON.
        #[arg(long)]
        sem_out: Option<PathBuf>,
    },
    /// Fit a triangular map and write it as JSON.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise conditional-independence scores on a column subset.
    Citest {
        #[command(flatten)]
        data: DataArgs,
        /// 1-based column indices, e.g. `1,3,4`; all columns when omitted.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a CPDAG with PC-OT.
    Pcot {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long)]
        max_level: Option<usize>,
        /// `.dot` writes Graphviz, anything else JSON; stdout JSON when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the execution trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score every ordering of a CPDAG's equivalence class.
    OrderSelect {
        #[command(flatten)]
        data: DataArgs,
        /// CPDAG JSON, or the JSON output of `pcot`.
        #[arg(long)]
        cpdag: PathBuf,
        #[arg(long, default_value = "anm")]
        loss: LossKind,
        /// One weight for all components, or one per component.
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        /// Selection JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Score table CSV; stdout when omitted.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Structural error of an estimated CPDAG against a true DAG.
    Eval {
        #[arg(long)]
        estimate: PathBuf,
        /// DAG JSON.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        truth: Option<PathBuf>,
        /// Use a preset's DAG as the truth.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment plan.
    Experiment {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        table_csv: Option<PathBuf>,
        #[arg(long)]
        table_json: Option<PathBuf>,
        #[arg(long)]
        summary_csv: Option<PathBuf>,
    },
}

struct Env {
    seed: u64,
    config: MethodConfig,
    provenance: Provenance,
}

fn env_var<T: std::str::FromStr>(name: &str) -> Result<Option<T>> {
    match std::env::var(name) {
        Ok(v) => v.parse().map(Some).map_err(|_| anyhow::anyhow!("cannot parse {name}={v:?}")),
        Err(_) => Ok(None),
    }
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// JSON document with the provenance record alongside the result.
fn write_json(path: Option<&Path>, provenance: &Provenance, result: impl Serialize) -> Result<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, &json!({ "provenance": provenance, "result": result }))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load(data: &DataArgs) -> Result<SampleMatrix<f64>> {
    load_csv(&data.data, &LoadOptions { log_transform: data.log })
        .with_context(|| format!("loading {}", data.data.display()))
}

/// Accepts a bare graph, a `{"result": ...}` wrapper, or a PC-OT result with a `cpdag` field.
fn read_graph<G: serde::de::DeserializeOwned>(path: &Path) -> Result<G> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(r) = v.get("result") {
        v = r.clone();
    }
    if let Some(c) = v.get("cpdag") {
        v = c.clone();
    }
    serde_json::from_value(v).with_context(|| format!("{} does not hold a graph", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    let workers = cli.workers.or(env_var("OTCD_WORKERS")?);
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().context("configuring worker threads")?;
    }
    let config_path = cli.config.clone().or_else(|| std::env::var_os("OTCD_CONFIG").map(PathBuf::from));
    let config = config::load(config_path.as_deref(), std::env::vars())?;
    let seed = cli.seed.or(env_var("OTCD_SEED")?).unwrap_or(0);
    let args: Vec<String> = std::env::args().collect();
    let provenance = Provenance::new(json!({ "command": args, "seed": seed, "config": config }))?;
    let env = Env { seed, config, provenance };
    dispatch(cli.command, env)
}

fn dispatch(command: Command, env: Env) -> Result<ExitCode> {
    let Env { seed, mut config, provenance } = env;
    match command {
        Command::Gen { preset: name, spec, n, out, sem_out } => {
            let sem: SemSpec = match (name, spec) {
                (Some(name), _) => preset(&name)?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing SEM {}", path.display()))?
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            let data = sample(&sem, n, seed)?;
            let mut w = writer(out.as_deref())?;
            write_csv(&data, Some(&provenance), &mut w)?;
            w.flush()?;
            if let Some(p) = sem_out {
                write_json(Some(&p), &provenance, &sem)?;
            }
        }
        Command::Fit { data, degree, out } => {
            let samples = load(&data)?;
            let degree = degree.unwrap_or(if config.degree == 0 { 2 } else { config.degree });
            let opts = otcd_core::FitOptions { seed, ..config.ci.fit.clone() };
            let fitted = fit_map(&TriangularMapSpec::new(samples.d(), degree), &samples, &opts)?;
            for w in &fitted.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            write_json(out.as_deref(), &provenance, &fitted)?;
        }
        Command::Citest { data, subset, delta, degree, out } => {
            let samples = load(&data)?;
            let subset: Vec<usize> = if subset.is_empty() {
                (0..samples.d()).collect()
            } else {
                if subset.iter().any(|&c| c == 0 || c > samples.d()) {
                    bail!("subset indices are 1-based and must not exceed {}", samples.d());
                }
                subset.iter().map(|c| c - 1).collect()
            };
            let mut opts = config.ci.clone();
            opts.seed = seed;
            opts.delta = delta.unwrap_or(opts.delta);
            opts.degree = degree.unwrap_or(opts.degree);
            let report = omega_report(&samples, &subset, &opts)?;
            write_json(out.as_deref(), &provenance, &report)?;
        }
        Command::Pcot { data, delta, degree, max_level, out, trace } => {
            let samples = load(&data)?;
            let cfg = &mut config.pcot;
            cfg.seed = seed;
            cfg.delta = delta.unwrap_or(cfg.delta);
            cfg.degree = degree.unwrap_or(cfg.degree);
            cfg.max_level = max_level.or(cfg.max_level);
            let result = run_pc_ot(&samples, cfg)?;
            if let Some(p) = trace {
                let mut w = writer(Some(&p))?;
                for ev in &result.trace {
                    serde_json::to_writer(&mut w, ev)?;
                    writeln!(w)?;
                }
                w.flush()?;
            }
            match out {
                Some(p) if p.extension().is_some_and(|e| e == "dot") => {
                    let mut w = writer(Some(&p))?;
                    writeln!(w, "// {}", serde_json::to_string(&provenance)?)?;
                    write!(w, "{}", result.cpdag.to_dot(Some(samples.names())))?;
                    w.flush()?;
                }
                p => write_json(p.as_deref(), &provenance, &result)?,
            }
        }
        Command::OrderSelect { data, cpdag, loss, gamma, out, scores } => {
            let samples = load(&data)?;
            let cpdag: Pdag = read_graph(&cpdag)?;
            let gamma = if !gamma.is_empty() { gamma } else { config.gamma.clone() };
            let gamma = match gamma.len() {
                0 => vec![1.0; samples.d()],
                1 => vec![gamma[0]; samples.d()],
                _ => gamma,
            };
            let mut opts = config.score.clone();
            opts.fit.seed = seed;
            let sel = select_ordering(&cpdag, &samples, loss, &gamma, &opts)?;
            if let Some(msg) = &sel.diagnostic {
                eprintln!("warning: {msg}");
            }
            let mut w = writer(scores.as_deref())?;
            writeln!(w, "{}", provenance.header_line())?;
            write_scores_csv(&sel.scores, samples.names(), &mut w)?;
            w.flush()?;
            drop(w);
            if let Some(p) = out {
                write_json(Some(&p), &provenance, &sel)?;
            }
            eprintln!("selected {}", sel.scores[sel.best].ordering.label(samples.names()));
        }
        Command::Eval { estimate, truth, preset: name, out } => {
            let est: Pdag = read_graph(&estimate)?;
            let truth: Dag = match (truth, name) {
                (Some(p), _) => read_graph(&p)?,
                (None, Some(name)) => preset(&name)?.dag().clone(),
                (None, None) => unreachable!("clap requires one source"),
            };
            let m = structural_metrics(&est, &truth)?;
            write_json(out.as_deref(), &provenance, m)?;
        }
        Command::Experiment { plan, table_csv, table_json, summary_csv } => {
            let text = std::fs::read_to_string(&plan).with_context(|| format!("reading {}", plan.display()))?;
            let mut plan: ExperimentPlan =
                serde_json::from_str(&text).with_context(|| format!("parsing plan {}", plan.display()))?;
            plan.outputs.table_csv = table_csv.or(plan.outputs.table_csv);
            plan.outputs.table_json = table_json.or(plan.outputs.table_json);
            plan.outputs.summary_csv = summary_csv.or(plan.outputs.summary_csv);
            let table = run_experiment(&plan)?;
            for f in &table.failures {
                eprintln!("repetition {} (seed {}) failed: {}", f.repetition, f.seed, f.error);
            }
            let mut out = io::stdout().lock();
            table.write_summary_csv(&mut out)?;
            if table.all_failed() {
                eprintln!("all repetitions failed");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
