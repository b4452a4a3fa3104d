//! Experiment specs, per-(seed × configuration) tasks and CSV/JSON reports.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::generate_spectral_matrix;
use crate::adapter::{merge, pissa_init, pissa_init_fast, reconstruction_error};
use crate::error::{Error, Result};
use crate::linalg::{exact_svd, load_matrix, write_atomic, Matrix};
use crate::quant::{
    distribution_diagnostics, layer_error, loftq_init, qlora_error, qlora_init, qpissa_init, reduction_ratio,
    QuantConfig,
};
use crate::rng::{split_seed, RandomSource, GENERATOR};
use crate::train::{gradcheck, save_model_adapters, MlpModel, Strategy, ToyProtocol};

/// Environment variable capping the worker pool size.
pub const WORKERS_ENV: &str = "PISSA_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Decompose,
    QuantBench,
    Converge,
    FastsvdBench,
    Gradcheck,
    Ablation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Decompose,
        ExperimentKind::QuantBench,
        ExperimentKind::Converge,
        ExperimentKind::FastsvdBench,
        ExperimentKind::Gradcheck,
        ExperimentKind::Ablation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Decompose => "decompose",
            ExperimentKind::QuantBench => "quant-bench",
            ExperimentKind::Converge => "converge",
            ExperimentKind::FastsvdBench => "fastsvd-bench",
            ExperimentKind::Gradcheck => "gradcheck",
            ExperimentKind::Ablation => "ablation",
        }
    }

    /// Kind-specific report columns, after the common ones.
    fn columns(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Decompose => &["rank", "recon_rel_error", "w_std", "wres_std", "w_t_dof", "wres_t_dof"],
            ExperimentKind::QuantBench => &[
                "method",
                "rank",
                "iters",
                "block_size",
                "nuclear_error",
                "frobenius_error",
                "reduction_ratio_percent",
            ],
            ExperimentKind::Converge => &[
                "strategy",
                "rank",
                "steps",
                "step1_loss",
                "step1_grad_norm",
                "final_loss",
                "trace_file",
            ],
            ExperimentKind::FastsvdBench => {
                &["rank", "niter", "init_error_l1", "init_error_fro", "max_sv_rel_error"]
            }
            ExperimentKind::Gradcheck => &[
                "strategy",
                "dims",
                "rank",
                "max_rel_error",
                "checked",
                "skipped",
                "perturbed_inputs",
            ],
            ExperimentKind::Ablation => &["strategy", "rank", "steps", "final_loss", "min_loss"],
        }
    }

    fn default_strategies(self) -> Vec<String> {
        let names: &[&str] = match self {
            ExperimentKind::Converge | ExperimentKind::Gradcheck => &["pissa", "lora"],
            ExperimentKind::Ablation => &["principal", "medium", "minor"],
            _ => &[],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format '{other}'"))),
        }
    }
}

pub const COMMON_COLUMNS: [&str; 5] = ["seed", "generator", "config_hash", "status", "error"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub m: usize,
    pub n: usize,
    /// Spectrum exponent for synthetic matrices.
    pub alpha: f64,
    pub ranks: Vec<usize>,
    /// Alternating rounds `T` for quantized initializations.
    pub iters: Vec<usize>,
    /// Subspace iterations for the randomized SVD.
    pub niters: Vec<usize>,
    pub seeds: Vec<u64>,
    pub block_size: usize,
    /// Adapter rank in the toy MLP experiments.
    pub toy_rank: usize,
    /// Fine-tuning steps in the toy MLP experiments.
    pub steps: usize,
    /// Finite-difference step for gradcheck.
    pub eps: f64,
    /// Strategy names; empty selects the kind's defaults.
    pub strategies: Vec<String>,
    /// Stored matrix used instead of a synthetic one.
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
    /// Where converge writes initial and trained adapter directories.
    pub checkpoint_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            m: 256,
            n: 256,
            alpha: 1.0,
            ranks: (0..8).map(|i| 1 << i).collect(),
            iters: vec![1, 5],
            niters: vec![1, 2, 4, 8, 16],
            seeds: (0..10).collect(),
            block_size: crate::quant::DEFAULT_BLOCK_SIZE,
            toy_rank: 4,
            steps: 300,
            eps: 1e-5,
            strategies: Vec::new(),
            input: None,
            output: None,
            format: ReportFormat::Csv,
            checkpoint_dir: None,
        }
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        let names = if self.strategies.is_empty() {
            self.kind.default_strategies()
        } else {
            self.strategies.clone()
        };
        names.iter().map(|s| s.parse()).collect()
    }

    /// Shape of the matrix under study: the stored input if any, else `m×n`.
    fn matrix_shape(&self) -> Result<(usize, usize)> {
        match &self.input {
            Some(p) => Ok(load_matrix(p)?.shape()),
            None => Ok((self.m, self.n)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        match self.kind {
            ExperimentKind::Decompose | ExperimentKind::QuantBench | ExperimentKind::FastsvdBench => {
                let (m, n) = self.matrix_shape()?;
                if m == 0 || n == 0 {
                    return bad(format!("matrix dimensions must be positive, got {m}x{n}"));
                }
                if self.ranks.is_empty() {
                    return bad("at least one rank is required".into());
                }
                let k = m.min(n);
                if let Some(r) = self.ranks.iter().find(|&&r| r == 0 || r > k) {
                    return bad(format!("rank {r} outside 1..={k} for a {m}x{n} matrix"));
                }
                if self.kind == ExperimentKind::QuantBench {
                    if self.iters.is_empty() || self.iters.contains(&0) {
                        return bad("iteration counts must be non-empty and positive".into());
                    }
                    QuantConfig::new(self.block_size)?;
                }
                if self.kind == ExperimentKind::FastsvdBench && self.niters.is_empty() {
                    return bad("at least one niter value is required".into());
                }
            }
            ExperimentKind::Converge | ExperimentKind::Ablation => {
                let proto = ToyProtocol::default();
                if self.toy_rank == 0 || self.toy_rank > proto.hidden.min(proto.classes) {
                    return bad(format!(
                        "toy rank {} outside 1..={}",
                        self.toy_rank,
                        proto.hidden.min(proto.classes)
                    ));
                }
                if self.steps == 0 {
                    return bad("steps must be positive".into());
                }
                self.strategies()?;
            }
            ExperimentKind::Gradcheck => {
                if !(self.eps > 0.0) {
                    return bad(format!("eps must be positive, got {}", self.eps));
                }
                self.strategies()?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the JSON spec with output locations cleared, so the same
    /// experiment written to different places hashes identically.
    pub fn config_hash(&self) -> String {
        let mut view = self.clone();
        view.output = None;
        view.checkpoint_dir = None;
        view.format = ReportFormat::Csv;
        let json = serde_json::to_string(&view).expect("spec serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// 17 significant digits for floats.
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => format!("{f:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Int(i) => (*i).into(),
            Cell::Float(f) => serde_json::Number::from_f64(*f).map_or(serde_json::Value::Null, Into::into),
            Cell::Text(s) => s.clone().into(),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Flat key → value record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportRow {
    values: Vec<(String, Cell)>,
}

impl ReportRow {
    pub fn set(&mut self, key: &str, value: impl Into<Cell>) -> &mut Self {
        let value = value.into();
        match self.values.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.values.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&Cell> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn float(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Cell::as_f64)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(Cell::Text(s)) => Some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub spec: ExperimentSpec,
    pub config_hash: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<ReportRow>,
}

pub const CONFIG_PREFIX: &str = "# config: ";

impl Report {
    /// Header comment lines echoing the config, then an RFC 4180 table.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(&format!("# pissa {} report\n", self.spec.kind));
        out.push_str(CONFIG_PREFIX);
        out.push_str(&serde_json::to_string(&self.spec).expect("spec serializes"));
        out.push('\n');
        out.push_str(&format!("# config_hash: {}\n", self.config_hash));
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding failed: {e}"));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(self.columns.iter().map(|c| row.get(c).map_or(String::new(), Cell::render)))
                .map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv encoding failed: {e}")))?;
        out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let map: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .map(|c| (c.to_string(), row.get(c).map_or(serde_json::Value::Null, Cell::json)))
                    .collect();
                serde_json::Value::Object(map)
            })
            .collect();
        let doc = serde_json::json!({
            "config": self.spec,
            "config_hash": self.config_hash,
            "rows": rows,
        });
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => Ok(self.to_json()),
        }
    }

    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<()> {
        write_atomic(path, self.render(format)?.as_bytes())
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.text("status") != Some("ok")).count()
    }
}

/// Recovers the `ExperimentSpec` embedded in a CSV or JSON report.
pub fn spec_from_report(text: &str) -> Result<ExperimentSpec> {
    let bad = |detail: String| Error::Format {
        format: "report",
        offset: 0,
        detail,
    };
    if let Some(line) = text.lines().find(|l| l.starts_with(CONFIG_PREFIX)) {
        return serde_json::from_str(&line[CONFIG_PREFIX.len()..]).map_err(|e| bad(e.to_string()));
    }
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    serde_json::from_value(doc["config"].clone()).map_err(|e| bad(e.to_string()))
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn worker_limit() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

/// Runs every task of `f` in a pool capped by [`worker_limit`], preserving
/// input order.
pub fn run_tasks<T: Sync, R: Send>(tasks: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_limit()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(&f).collect()))
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    hash: &'a str,
    input: Option<&'a Matrix>,
}

impl Ctx<'_> {
    fn row(&self, seed: u64) -> ReportRow {
        let mut row = ReportRow::default();
        row.set("seed", Cell::Int(seed as i64))
            .set("generator", GENERATOR)
            .set("config_hash", self.hash)
            .set("status", "ok")
            .set("error", Cell::Empty);
        row
    }

    fn error_row(&self, seed: u64, err: &Error) -> ReportRow {
        let mut row = self.row(seed);
        row.set("status", "error").set("error", err.to_string());
        row
    }

    fn matrix(&self, seed: u64) -> Result<Matrix> {
        match self.input {
            Some(m) => Ok(m.clone()),
            None => generate_spectral_matrix(self.spec.m, self.spec.n, self.spec.alpha, seed),
        }
    }
}

/// Validates `spec`, runs every (seed × configuration) task and assembles the
/// report. Task failures become `status=error` rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let hash = spec.config_hash();
    let input = spec.input.as_ref().map(load_matrix).transpose()?;
    let ctx = Ctx {
        spec,
        hash: &hash,
        input: input.as_ref(),
    };
    let rows: Vec<ReportRow> = match spec.kind {
        ExperimentKind::Decompose => grid(&ctx, &spec.ranks, decompose_task)?,
        ExperimentKind::QuantBench => grid(&ctx, &spec.ranks, quant_task)?,
        ExperimentKind::FastsvdBench => grid(&ctx, &spec.ranks, fastsvd_task)?,
        ExperimentKind::Converge => grid(&ctx, &[spec.toy_rank], converge_task)?,
        ExperimentKind::Ablation => grid(&ctx, &[spec.toy_rank], ablation_task)?,
        ExperimentKind::Gradcheck => grid(&ctx, &[0], gradcheck_task)?,
    };
    let mut columns: Vec<&'static str> = COMMON_COLUMNS.to_vec();
    columns.extend_from_slice(spec.kind.columns());
    Ok(Report {
        spec: spec.clone(),
        config_hash: hash,
        columns,
        rows,
    })
}

/// Runs `spec` and writes the report to `spec.output` when set.
pub fn run_experiment_to_file(spec: &ExperimentSpec) -> Result<Report> {
    let report = run_experiment(spec)?;
    if let Some(path) = &spec.output {
        report.write(path, spec.format)?;
    }
    Ok(report)
}

type TaskFn = fn(&Ctx, u64, usize, usize) -> Result<Vec<ReportRow>>;

/// One task per (seed, configuration index); each yields one or more rows.
fn grid(ctx: &Ctx, configs: &[usize], f: TaskFn) -> Result<Vec<ReportRow>> {
    let tasks: Vec<(u64, usize, usize)> = ctx
        .spec
        .seeds
        .iter()
        .flat_map(|&s| configs.iter().enumerate().map(move |(i, &c)| (s, i, c)))
        .collect();
    let results = run_tasks(&tasks, |&(seed, idx, config)| {
        f(ctx, seed, idx, config).unwrap_or_else(|e| vec![ctx.error_row(seed, &e)])
    })?;
    Ok(results.into_iter().flatten().collect())
}

fn decompose_task(ctx: &Ctx, seed: u64, _idx: usize, r: usize) -> Result<Vec<ReportRow>> {
    let w = ctx.matrix(seed)?;
    let layer = pissa_init(&w, r)?;
    let w_fit = distribution_diagnostics(&w)?;
    let res_fit = distribution_diagnostics(layer.base().dense())?;
    let mut row = ctx.row(seed);
    row.set("rank", r)
        .set("recon_rel_error", reconstruction_error(&w, &layer)?)
        .set("w_std", w_fit.gaussian_std)
        .set("wres_std", res_fit.gaussian_std)
        .set("w_t_dof", w_fit.student_t_dof)
        .set("wres_t_dof", res_fit.student_t_dof);
    Ok(vec![row])
}

fn quant_task(ctx: &Ctx, seed: u64, idx: usize, r: usize) -> Result<Vec<ReportRow>> {
    let w = ctx.matrix(seed)?;
    let cfg = QuantConfig::new(ctx.spec.block_size)?;
    let baseline = qlora_error(&w, &cfg)?;
    let mut rows = Vec::new();
    let mut push = |method: &str, iters: usize, layer: &crate::adapter::DecomposedLayer| -> Result<()> {
        let err = layer_error(&w, layer)?;
        let mut row = ctx.row(seed);
        row.set("method", method)
            .set("rank", r)
            .set("iters", iters)
            .set("block_size", cfg.block_size)
            .set("nuclear_error", err.nuclear)
            .set("frobenius_error", err.frobenius)
            .set("reduction_ratio_percent", reduction_ratio(err.nuclear, baseline)?);
        rows.push(row);
        Ok(())
    };
    let mut rng = RandomSource::new(split_seed(seed, idx as u64));
    push("qlora", 0, &qlora_init(&w, r, &cfg, &mut rng)?)?;
    for &t in &ctx.spec.iters {
        push("loftq", t, &loftq_init(&w, r, t, &cfg)?)?;
        push("qpissa", t, &qpissa_init(&w, r, t, &cfg)?)?;
    }
    Ok(rows)
}

fn fastsvd_task(ctx: &Ctx, seed: u64, idx: usize, r: usize) -> Result<Vec<ReportRow>> {
    let w = ctx.matrix(seed)?;
    let exact = exact_svd(&w)?.truncate(r);
    let exact_delta = exact.reconstruct();
    let mut rows = Vec::new();
    for &niter in &ctx.spec.niters {
        // the same sketch for every niter of this (seed, rank)
        let mut rng = RandomSource::new(split_seed(seed, idx as u64));
        let layer = pissa_init_fast(&w, r, niter, &mut rng)?;
        let diff = exact_delta.sub(&layer.adapter().delta())?;
        let fast_s = crate::linalg::singular_values(&layer.adapter().delta())?;
        let max_sv_rel = exact
            .s
            .iter()
            .zip(&fast_s)
            .map(|(e, f)| if *e > 0.0 { (e - f).abs() / e } else { (e - f).abs() })
            .fold(0.0, f64::max);
        let mut row = ctx.row(seed);
        row.set("rank", r)
            .set("niter", niter)
            .set("init_error_l1", diff.l1_norm())
            .set("init_error_fro", diff.frobenius_norm())
            .set("max_sv_rel_error", max_sv_rel);
        rows.push(row);
    }
    Ok(rows)
}

fn toy_protocol(ctx: &Ctx, r: usize) -> ToyProtocol {
    let mut proto = ToyProtocol::default().with_steps(ctx.spec.steps);
    proto.rank = r;
    proto
}

fn trace_dir(output: &Path) -> PathBuf {
    let stem = output.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}_traces"))
}

fn converge_task(ctx: &Ctx, seed: u64, _idx: usize, r: usize) -> Result<Vec<ReportRow>> {
    let proto = toy_protocol(ctx, r);
    let task = proto.pretrained(seed)?;
    let mut rows = Vec::new();
    for strategy in ctx.spec.strategies()? {
        let run = proto.finetune(&task, seed, strategy)?;
        let label = strategy.label();
        let trace_file = match &ctx.spec.output {
            Some(out) => {
                let dir = trace_dir(out);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let path = dir.join(format!("seed{seed}_{label}.csv"));
                write_atomic(&path, run.trace.to_csv().as_bytes())?;
                path.to_string_lossy().into_owned()
            }
            None => String::new(),
        };
        if let Some(dir) = &ctx.spec.checkpoint_dir {
            let base = dir.join(format!("seed{seed}_{label}"));
            save_model_adapters(&base.join("init"), &run.initial, Some(seed))?;
            save_model_adapters(&base.join("trained"), &run.model, Some(seed))?;
        }
        let mut row = ctx.row(seed);
        row.set("strategy", label.as_str())
            .set("rank", r)
            .set("steps", run.trace.len())
            .set("step1_loss", run.trace.loss[0])
            .set("step1_grad_norm", run.trace.grad_norm[0])
            .set("final_loss", *run.trace.loss.last().expect("non-empty trace"))
            .set("trace_file", trace_file);
        rows.push(row);
    }
    Ok(rows)
}

fn ablation_task(ctx: &Ctx, seed: u64, _idx: usize, r: usize) -> Result<Vec<ReportRow>> {
    let proto = toy_protocol(ctx, r);
    let task = proto.pretrained(seed)?;
    let mut rows = Vec::new();
    for strategy in ctx.spec.strategies()? {
        let run = proto.finetune(&task, seed, strategy)?;
        let mut row = ctx.row(seed);
        row.set("strategy", strategy.label())
            .set("rank", r)
            .set("steps", run.trace.len())
            .set("final_loss", *run.trace.loss.last().expect("non-empty trace"))
            .set("min_loss", run.trace.loss.iter().copied().fold(f64::INFINITY, f64::min));
        rows.push(row);
    }
    Ok(rows)
}

/// Random small MLP, three-sample batch, every strategy.
fn gradcheck_task(ctx: &Ctx, seed: u64, _idx: usize, _config: usize) -> Result<Vec<ReportRow>> {
    let mut rng = RandomSource::new(split_seed(seed, 0));
    let (d, h, c) = (3 + rng.index(6), 3 + rng.index(6), 2 + rng.index(4));
    let r = 1 + rng.index(h.min(d).min(c));
    let model = MlpModel::random(d, h, c, &mut rng);
    let x = rng.normal_matrix(3, d, 1.0);
    let labels: Vec<usize> = (0..3).map(|_| rng.index(c)).collect();
    let mut rows = Vec::new();
    for strategy in ctx.spec.strategies()? {
        let adapted = strategy.inject(&model, r, &mut rng)?;
        let rep = gradcheck(&adapted, &x, &labels, ctx.spec.eps)?;
        let mut row = ctx.row(seed);
        row.set("strategy", strategy.label())
            .set("dims", format!("{d}x{h}x{c}"))
            .set("rank", r)
            .set("max_rel_error", rep.max_rel_error)
            .set("checked", rep.checked)
            .set("skipped", rep.skipped)
            .set("perturbed_inputs", rep.perturbed_inputs);
        rows.push(row);
    }
    Ok(rows)
}

/// Merged-weight residual check used by the CLI's decompose command.
pub fn decomposition_residual(w: &Matrix, layer: &crate::adapter::DecomposedLayer) -> Result<f64> {
    Ok(w.sub(&merge(layer))?.frobenius_norm())
}
