//! Repeated runs of one method on one data source, with summary statistics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{omega_report, CiOptions};
use crate::data::SampleMatrix;
use crate::error::{Error, Result};
use crate::graph::{essential_graph, structural_metrics, Dag, Pdag};
use crate::io::{load_csv, LoadOptions, Provenance};
use crate::pcot::{run_pc_ot, PcOtConfig};
use crate::scores::{select_ordering, LossKind, ScoreOptions};
use crate::sem::{preset, sample};
use crate::transport::{fit_map, TriangularMapSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Fresh draws of size `n` per repetition, seeded with the repetition seed.
    Preset { name: String, n: usize },
    /// The same file for every repetition.
    Csv {
        path: PathBuf,
        #[serde(default)]
        log_transform: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pcot,
    Anm,
    Pnl,
    Citest,
    Fit,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcot" => Ok(Method::Pcot),
            "anm" => Ok(Method::Anm),
            "pnl" => Ok(Method::Pnl),
            "citest" => Ok(Method::Citest),
            "fit" => Ok(Method::Fit),
            other => Err(Error::Config(format!("unknown method {other:?}; expected pcot, anm, pnl, citest or fit"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub pcot: PcOtConfig,
    pub ci: CiOptions,
    pub score: ScoreOptions,
    /// Per-component weights for ordering scores; empty means all ones.
    pub gamma: Vec<f64>,
    /// CPDAG for ordering selection. Defaults to the essential graph of the
    /// preset's DAG, or to a PC-OT estimate for CSV data.
    pub cpdag: Option<Pdag>,
    /// Ground truth for structural metrics on CSV data.
    pub truth: Option<Dag>,
    /// Columns tested by `citest`; empty means all.
    pub subset: Vec<usize>,
    /// Map degree for `fit`.
    pub degree: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub table_csv: Option<PathBuf>,
    pub table_json: Option<PathBuf>,
    pub summary_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dataset: DatasetSource,
    pub method: Method,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed_base: u64,
    /// Concurrent repetitions; `None` uses the global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Store wall-clock time per row. Timings are the only nondeterministic field.
    #[serde(default = "yes")]
    pub record_timing: bool,
    #[serde(default)]
    pub config: MethodConfig,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl ExperimentPlan {
    pub fn new(dataset: DatasetSource, method: Method) -> Self {
        Self {
            dataset,
            method,
            repetitions: 1,
            seed_base: 0,
            workers: None,
            record_timing: true,
            config: MethodConfig::default(),
            outputs: OutputPaths::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        match &self.dataset {
            DatasetSource::Preset { name, n } => {
                preset(name)?;
                if *n == 0 {
                    return Err(Error::Config("preset sample size must be at least 1".into()));
                }
            }
            DatasetSource::Csv { path, .. } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("data file {} does not exist", path.display())));
                }
            }
        }
        self.config.pcot.validate()
    }
}

/// One output row. `label` names the ordering or pair for per-item methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub repetition: usize,
    pub seed: u64,
    pub n: usize,
    pub label: String,
    pub values: Vec<f64>,
    pub wall_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionFailure {
    pub repetition: usize,
    pub seed: u64,
    pub error: String,
}

/// Statistics of one value column over rows sharing a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub label: String,
    pub column: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub provenance: Provenance,
    pub method: Method,
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
    pub failures: Vec<RepetitionFailure>,
    pub summary: Vec<SummaryStat>,
}

impl ResultTable {
    pub fn all_failed(&self) -> bool {
        self.rows.is_empty() && !self.failures.is_empty()
    }

    /// Index of a value column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.provenance.header_line())?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["repetition".to_string(), "seed".into(), "n".into(), "label".into()];
        header.extend(self.columns.iter().cloned());
        header.push("wall_seconds".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.repetition.to_string(), r.seed.to_string(), r.n.to_string(), r.label.clone()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            rec.push(r.wall_seconds.map(|t| t.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.provenance.header_line())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "column", "count", "mean", "median", "q1", "q3"])?;
        for s in &self.summary {
            w.write_record([
                s.label.clone(),
                s.column.clone(),
                s.count.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.q1.to_string(),
                s.q3.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_outputs(&self, paths: &OutputPaths) -> Result<()> {
        if let Some(p) = &paths.table_csv {
            self.write_csv(BufWriter::new(File::create(p)?))?;
        }
        if let Some(p) = &paths.summary_csv {
            self.write_summary_csv(BufWriter::new(File::create(p)?))?;
        }
        if let Some(p) = &paths.table_json {
            let mut w = BufWriter::new(File::create(p)?);
            serde_json::to_writer_pretty(&mut w, self)?;
            w.flush()?;
        }
        Ok(())
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(columns: &[String], rows: &[ResultRow]) -> Vec<SummaryStat> {
    let mut labels: Vec<&str> = Vec::new();
    for r in rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let mut out = Vec::new();
    for label in labels {
        for (j, column) in columns.iter().enumerate() {
            let mut v: Vec<f64> = rows.iter().filter(|r| r.label == label).map(|r| r.values[j]).collect();
            v.sort_by(f64::total_cmp);
            out.push(SummaryStat {
                label: label.to_string(),
                column: column.clone(),
                count: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
            });
        }
    }
    out
}

struct Context {
    data: Option<SampleMatrix<f64>>,
    truth: Option<Dag>,
}

fn value_columns(method: Method, d: usize, has_truth: bool) -> Vec<String> {
    let s = |v: &[&str]| v.iter().map(|c| c.to_string()).collect();
    match method {
        Method::Pcot if has_truth => s(&["missing", "extra", "misoriented", "overall", "directed", "undirected"]),
        Method::Pcot => s(&["directed", "undirected"]),
        Method::Anm | Method::Pnl => {
            let mut c: Vec<String> = (1..=d).map(|k| format!("loss_{k}")).collect();
            c.extend(["total".to_string(), "rank".into(), "selected".into()]);
            if has_truth {
                c.push("compatible".into());
            }
            c
        }
        Method::Citest => s(&["omega", "sigma", "tau", "independent"]),
        Method::Fit => s(&["objective", "grad_norm", "iterations", "converged"]),
    }
}

/// `(label, values)` per row for one repetition.
fn run_once(plan: &ExperimentPlan, ctx: &Context, seed: u64) -> Result<(usize, Vec<(String, Vec<f64>)>)> {
    let data = match (&ctx.data, &plan.dataset) {
        (Some(d), _) => d.clone(),
        (None, DatasetSource::Preset { name, n }) => sample(&preset(name)?, *n, seed)?,
        (None, DatasetSource::Csv { .. }) => unreachable!("CSV data is loaded once"),
    };
    let n = data.n();
    let d = data.d();
    let cfg = &plan.config;
    let rows = match plan.method {
        Method::Pcot => {
            let res = run_pc_ot(&data, &PcOtConfig { seed, ..cfg.pcot.clone() })?;
            let mut v = Vec::new();
            if let Some(truth) = &ctx.truth {
                let m = structural_metrics(&res.cpdag, truth)?;
                v.extend([m.missing, m.extra, m.misoriented, m.overall].map(|x| x as f64));
            }
            v.extend([res.cpdag.directed().len() as f64, res.cpdag.undirected().len() as f64]);
            vec![(String::new(), v)]
        }
        Method::Anm | Method::Pnl => {
            let kind = if plan.method == Method::Anm { LossKind::Anm } else { LossKind::Pnl };
            let cpdag = match (&cfg.cpdag, &ctx.truth) {
                (Some(c), _) => c.clone(),
                (None, Some(t)) => essential_graph(t),
                (None, None) => run_pc_ot(&data, &PcOtConfig { seed, ..cfg.pcot.clone() })?.cpdag,
            };
            let gamma = if cfg.gamma.is_empty() { vec![1.0; d] } else { cfg.gamma.clone() };
            let score = ScoreOptions {
                fit: crate::transport::FitOptions { seed, ..cfg.score.fit.clone() },
                ..cfg.score.clone()
            };
            let sel = select_ordering(&cpdag, &data, kind, &gamma, &score)?;
            sel.scores
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut v = s.losses.clone();
                    v.push(s.total);
                    v.push(sel.rank_of(&s.ordering).expect("scored") as f64);
                    v.push(if i == sel.best { 1.0 } else { 0.0 });
                    if let Some(t) = &ctx.truth {
                        v.push(if s.ordering.is_compatible(t) { 1.0 } else { 0.0 });
                    }
                    (s.ordering.label(data.names()), v)
                })
                .collect()
        }
        Method::Citest => {
            let subset: Vec<usize> = if cfg.subset.is_empty() { (0..d).collect() } else { cfg.subset.clone() };
            let report = omega_report(&data, &subset, &CiOptions { seed, ..cfg.ci.clone() })?;
            let mut rows = Vec::new();
            for a in 0..subset.len() {
                for b in a + 1..subset.len() {
                    let label = format!("{}|{}", data.names()[subset[a]], data.names()[subset[b]]);
                    let indep = if report.decisions[a][b] { 1.0 } else { 0.0 };
                    rows.push((label, vec![report.omega[a][b], report.sigma[a][b], report.tau[a][b], indep]));
                }
            }
            rows
        }
        Method::Fit => {
            let degree = if cfg.degree == 0 { 2 } else { cfg.degree };
            let fitted = fit_map(
                &TriangularMapSpec::new(d, degree),
                &data,
                &crate::transport::FitOptions { seed, ..cfg.ci.fit.clone() },
            )?;
            let g = &fitted.diagnostics;
            vec![(
                String::new(),
                vec![g.objective, g.grad_norm, g.iterations as f64, if g.converged { 1.0 } else { 0.0 }],
            )]
        }
    };
    Ok((n, rows))
}

/// Run every repetition (seed `seed_base + i`), merge rows in repetition
/// order, and write the configured outputs. Failed repetitions are recorded
/// and do not stop the run.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.validate()?;
    let (ctx, d) = match &plan.dataset {
        DatasetSource::Preset { name, .. } => {
            let spec = preset(name)?;
            let d = spec.d();
            (Context { data: None, truth: Some(plan.config.truth.clone().unwrap_or_else(|| spec.dag().clone())) }, d)
        }
        DatasetSource::Csv { path, log_transform } => {
            let data = load_csv(path, &LoadOptions { log_transform: *log_transform })?;
            let d = data.d();
            (Context { data: Some(data), truth: plan.config.truth.clone() }, d)
        }
    };
    if let Some(t) = &ctx.truth {
        if t.d() != d {
            return Err(Error::Dimension { expected: d, got: t.d() });
        }
    }
    let columns = value_columns(plan.method, d, ctx.truth.is_some());

    let run_all = || -> Vec<Result<(usize, Vec<(String, Vec<f64>)>, f64)>> {
        (0..plan.repetitions)
            .into_par_iter()
            .map(|i| {
                let start = Instant::now();
                let (n, rows) = run_once(plan, &ctx, plan.seed_base + i as u64)?;
                Ok((n, rows, start.elapsed().as_secs_f64()))
            })
            .collect()
    };
    let outcomes = match plan.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let seed = plan.seed_base + i as u64;
        match outcome {
            Ok((n, items, secs)) => {
                for (label, values) in items {
                    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
                        failures.push(RepetitionFailure {
                            repetition: i,
                            seed,
                            error: format!("non-finite {} for {label:?}", columns[j]),
                        });
                        continue;
                    }
                    let wall_seconds = plan.record_timing.then_some(secs);
                    rows.push(ResultRow { repetition: i, seed, n, label, values, wall_seconds });
                }
            }
            Err(e) => failures.push(RepetitionFailure { repetition: i, seed, error: e.to_string() }),
        }
    }
    let summary = summarize(&columns, &rows);
    let table =
        ResultTable { provenance: Provenance::new(plan)?, method: plan.method, columns, rows, failures, summary };
    table.write_outputs(&plan.outputs)?;
    Ok(table)
}
