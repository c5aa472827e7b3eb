//! Command-line front end.
//!
//! Every command computes all of its outputs in memory and only then writes
//! them, so a failing run leaves no files behind. Exit codes: 0 success,
//! 2 configuration error, 3 numerical failure, 4 degenerate statistics.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::catalog::{self, coherent_state, CatalogError};
use crate::darkstates::{certify_trace_preservation_with, DarkStateError};
use crate::jumptime::{evolve_with, slowest_decay_rate, waiting_time, JumptimeError, JumptimeMap};
use crate::linalg::{c, real, trace_distance, Operator, StateVector, ONE};
use crate::model::{
    load_model, pairs_to_matrix, DensityMatrix, LindbladModel, ModelError, ModelFile, MomentumGridMetadata, Tolerances,
};
use crate::phase_space::{wigner, GridSpec};
use crate::trajectories::{
    empirical_waiting_times, ensemble_averages, write_trajectory_log, AverageKind, Histogram, InitialState, TrajectoryError, RNG_STREAM_VERSION,
};
use crate::walltime::{evolve_walltime, WalltimeError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "JUMPTIME_THREADS";

#[derive(Debug, Parser)]
#[command(name = "jumptime", version, about = "Walltime and jumptime evolution of Lindblad models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Catalog name or path to a model JSON file.
    #[arg(long)]
    pub model: String,
    /// Catalog parameter, repeatable.
    #[arg(long = "set", value_name = "K=V")]
    pub set: Vec<String>,
    /// Tolerance override (herm, psd, trace, spec, dark, halt), repeatable.
    #[arg(long = "tol", value_name = "K=V")]
    pub tol: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    /// basis:K | K | plus | minus | mixed | bloch:X,Y,Z | coherent:RE,IM |
    /// coherent-polar:R,PHI | file:PATH
    #[arg(long, default_value = "basis:0")]
    pub state: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deterministic jumptime sequence ρ_0 … ρ_N.
    EvolveJumptime {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Master-equation solution at the given times.
    EvolveWalltime {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Quantum-jump trajectory ensembles.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Walltime averages at these times.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// Jumptime averages at these jump counts.
        #[arg(long, value_delimiter = ',')]
        jumps: Vec<usize>,
        /// Cutoff time for jumptime averages (default 60 over the slowest decay rate).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Also write the trajectory log.
        #[arg(long)]
        log: bool,
        /// Add trace distances to the deterministic evolution.
        #[arg(long)]
        reference: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Dark-state and trace-preservation report.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        /// Also write the report to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Waiting-time density after the given number of jumps.
    WaitingTime {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 0)]
        jumps: usize,
        #[arg(long, value_delimiter = ',')]
        taus: Vec<f64>,
        /// Grid end (default 40 over the slowest decay rate).
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Wigner functions of jumptime states.
    Wigner {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        jumps: Vec<usize>,
        /// XMIN,XMAX,NX,PMIN,PMAX,NP
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Vec<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Writes the resolved model as a JSON model file.
    Export {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<JumptimeError> for CliError {
    fn from(e: JumptimeError) -> Self {
        match e {
            JumptimeError::DimensionMismatch { .. } | JumptimeError::InvalidGrid { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<WalltimeError> for CliError {
    fn from(e: WalltimeError) -> Self {
        match e {
            WalltimeError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<DarkStateError> for CliError {
    fn from(e: DarkStateError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        match e {
            TrajectoryError::InvalidInput(m) => CliError::Config(m),
            TrajectoryError::IntegrationFailure { .. } => CliError::Numeric(e.to_string()),
            TrajectoryError::Degenerate(m) => CliError::Degenerate(m),
        }
    }
}

/// Files to write plus text for stdout.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(PathBuf, String)>,
    pub stdout: String,
}

/// Ordered `key = value` header shared by every output file of a run.
#[derive(Debug, Clone, Default)]
struct Metadata(Vec<(String, String)>);

impl Metadata {
    fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn with(&self, key: &str, value: impl ToString) -> Self {
        let mut m = self.clone();
        m.push(key, value);
        m
    }

    fn json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect())
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => fmt_real(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Real(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }
}

/// 17 significant digits.
fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn render(&self, meta: &Metadata, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = String::new();
                for (k, v) in &meta.0 {
                    writeln!(s, "# {k} = {v}").unwrap();
                }
                writeln!(s, "{}", self.columns.join(",")).unwrap();
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    writeln!(s, "{}", cells.join(",")).unwrap();
                }
                s
            }
            Format::Json => {
                let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
                let v = json!({ "metadata": meta.json(), "columns": self.columns, "rows": rows });
                serde_json::to_string_pretty(&v).unwrap() + "\n"
            }
        }
    }
}

fn matrix_table(m: &Operator) -> Table {
    let mut rows = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rows.push(vec![Cell::Int(i as u64), Cell::Int(j as u64), Cell::Real(m[(i, j)].re), Cell::Real(m[(i, j)].im)]);
        }
    }
    Table { columns: vec!["row", "col", "re", "im"], rows }
}

/// Matrix dump; the JSON form (`dim` plus row-major `[re, im]` pairs) is also
/// accepted by `--state file:PATH`.
fn render_matrix(m: &Operator, meta: &Metadata, format: Format) -> String {
    match format {
        Format::Csv => matrix_table(m).render(meta, format),
        Format::Json => {
            let v = json!({
                "metadata": meta.json(),
                "dim": m.nrows(),
                "matrix": crate::model::matrix_to_pairs(m),
            });
            serde_json::to_string_pretty(&v).unwrap() + "\n"
        }
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn parse_kv(items: &[String], what: &str) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("{what} `{item}` is not K=V")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{what} `{item}`: `{v}` is not a number")))?;
        out.insert(k.trim().to_string(), value);
    }
    Ok(out)
}

struct ResolvedModel {
    model: LindbladModel,
    tol: Tolerances,
    meta: Metadata,
}

fn resolve_model(args: &ModelArgs, command: &str) -> Result<ResolvedModel, CliError> {
    let params = parse_kv(&args.set, "--set")?;
    let tol_overrides = parse_kv(&args.tol, "--tol")?;
    let mut tol = Tolerances::default();
    for (k, v) in &tol_overrides {
        tol.set(k, *v).map_err(CliError::Config)?;
    }
    let path = Path::new(&args.model);
    let model = if path.is_file() {
        if !params.is_empty() {
            return Err(CliError::Config("--set applies to catalog models only".into()));
        }
        let m = load_model(path)?;
        let rebuilt = LindbladModel::with_tolerances(m.hamiltonian().clone(), m.jump_ops().to_vec(), m.gamma(), &tol)?;
        match m.label() {
            Some(label) => rebuilt.with_label(label),
            None => rebuilt,
        }
    } else if catalog::MODEL_NAMES.contains(&args.model.as_str()) {
        catalog::by_name(&args.model, &params)?
    } else {
        return Err(CliError::Config(format!(
            "`{}` is neither a model file nor a catalog model ({})",
            args.model,
            catalog::MODEL_NAMES.join(", ")
        )));
    };
    let mut meta = Metadata::default();
    meta.push("tool", format!("jumptime {VERSION}"));
    meta.push("command", command);
    meta.push("model", &args.model);
    meta.push("model_hash", model.fingerprint());
    let join = |m: &BTreeMap<String, f64>| m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
    meta.push("set", join(&params));
    meta.push("tol", join(&tol_overrides));
    Ok(ResolvedModel { model, tol, meta })
}

fn numbers(text: &str, count: usize, spec: &str) -> Result<Vec<f64>, CliError> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == count => Ok(v),
        _ => Err(CliError::Config(format!("state `{spec}` needs {count} comma-separated numbers"))),
    }
}

/// Parsed `--state`; `pure` is kept when the spec names a state vector.
struct InitialSpec {
    rho: DensityMatrix,
    pure: Option<StateVector>,
}

fn parse_state(spec: &str, dim: usize, tol: &Tolerances) -> Result<InitialSpec, CliError> {
    let bad = |msg: String| CliError::Config(format!("state `{spec}`: {msg}"));
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let vector = |psi: StateVector| {
        let norm = psi.norm();
        let psi = psi / real(norm);
        InitialSpec { rho: DensityMatrix::pure(&psi), pure: Some(psi) }
    };
    let qubit = || if dim == 2 { Ok(()) } else { Err(bad(format!("needs a qubit model, model has dimension {dim}"))) };
    let out = match kind {
        "basis" | "fock" => {
            let k: usize = arg.trim().parse().map_err(|_| bad("expected an integer".into()))?;
            if k >= dim {
                return Err(bad(format!("index {k} out of range for dimension {dim}")));
            }
            let mut v = StateVector::zeros(dim);
            v[k] = ONE;
            vector(v)
        }
        k if !k.is_empty() && k.chars().all(|ch| ch.is_ascii_digit()) && arg.is_empty() => {
            return parse_state(&format!("basis:{k}"), dim, tol);
        }
        "plus" | "minus" => {
            qubit()?;
            let s = if kind == "plus" { 1.0 } else { -1.0 };
            vector(StateVector::from_vec(vec![ONE, real(s)]))
        }
        "mixed" => InitialSpec { rho: DensityMatrix::maximally_mixed(dim), pure: None },
        "bloch" => {
            qubit()?;
            let r = numbers(arg, 3, spec)?;
            let rho = DensityMatrix::from_bloch([r[0], r[1], r[2]]).map_err(|e| bad(e.to_string()))?;
            InitialSpec { rho, pure: None }
        }
        "coherent" | "coherent-polar" => {
            let v = numbers(arg, 2, spec)?;
            let alpha = if kind == "coherent" { c(v[0], v[1]) } else { Complex64::from_polar(v[0], v[1]) };
            vector(coherent_state(alpha, dim))
        }
        "file" => {
            let text = fs::read_to_string(arg).map_err(|e| bad(e.to_string()))?;
            let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let d = value["dim"].as_u64().ok_or_else(|| bad("missing `dim`".into()))? as usize;
            let pairs: Vec<[f64; 2]> =
                serde_json::from_value(value["matrix"].clone()).map_err(|e| bad(e.to_string()))?;
            let m = pairs_to_matrix("matrix", &pairs, d)?;
            if d != dim {
                return Err(bad(format!("dimension {d} does not match model dimension {dim}")));
            }
            InitialSpec { rho: DensityMatrix::from_matrix_unchecked(m), pure: None }
        }
        _ => return Err(bad("unknown state kind".into())),
    };
    let report = out.rho.validate(tol);
    if !report.passed() {
        return Err(bad(format!("invalid density matrix: {:?}", report.violations)));
    }
    Ok(out)
}

fn trace_table<T: Copy>(label: &'static str, keys: &[T], traces: &[f64], key: impl Fn(T) -> Cell) -> Table {
    Table {
        columns: vec![label, "trace"],
        rows: keys.iter().zip(traces).map(|(&k, &t)| vec![key(k), Cell::Real(t)]).collect(),
    }
}

fn invocation(parts: &[String]) -> String {
    parts.iter().filter(|p| !p.is_empty()).cloned().collect::<Vec<_>>().join(" ")
}

fn model_flags(args: &ModelArgs) -> String {
    let mut s = format!("--model {}", args.model);
    for v in &args.set {
        write!(s, " --set {v}").unwrap();
    }
    for v in &args.tol {
        write!(s, " --tol {v}").unwrap();
    }
    s
}

fn join_list<T: ToString>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::EvolveJumptime { model, state, n_max, output } => {
            let r = resolve_model(model, "evolve-jumptime")?;
            let init = parse_state(&state.state, r.model.dim(), &r.tol)?;
            let map = JumptimeMap::with_tolerances(&r.model, &r.tol)?;
            let seq = evolve_with(&map, &init.rho, *n_max)?;
            let mut meta = r.meta;
            meta.push("state", &state.state);
            meta.push("n_max", n_max);
            meta.push(
                "invocation",
                invocation(&[
                    "jumptime evolve-jumptime".into(),
                    model_flags(model),
                    format!("--state {} --n-max {n_max} --format {}", state.state, ext(output.format)),
                ]),
            );
            let mut out = Outcome::default();
            let ns: Vec<usize> = (0..seq.len()).collect();
            let table = trace_table("n", &ns, &seq.traces, |n| Cell::Int(n as u64));
            out.files.push((output.out.join(format!("traces.{}", ext(output.format))), table.render(&meta, output.format)));
            for (n, rho) in seq.states.iter().enumerate() {
                let m = meta.with("n", n).with("trace", fmt_real(seq.traces[n]));
                out.files.push((
                    output.out.join(format!("state_{n:04}.{}", ext(output.format))),
                    render_matrix(rho.matrix(), &m, output.format),
                ));
            }
            if let Some(h) = seq.halted_at {
                writeln!(out.stdout, "halted at n = {h}").unwrap();
            }
            Ok(out)
        }
        Command::EvolveWalltime { model, state, times, output } => {
            let r = resolve_model(model, "evolve-walltime")?;
            let init = parse_state(&state.state, r.model.dim(), &r.tol)?;
            let states = evolve_walltime(&r.model, &init.rho, times)?;
            let mut meta = r.meta;
            meta.push("state", &state.state);
            meta.push("times", join_list(times));
            meta.push(
                "invocation",
                invocation(&[
                    "jumptime evolve-walltime".into(),
                    model_flags(model),
                    format!("--state {} --times {} --format {}", state.state, join_list(times), ext(output.format)),
                ]),
            );
            let traces: Vec<f64> = states.iter().map(|s| s.trace()).collect();
            let mut out = Outcome::default();
            let table = trace_table("t", times, &traces, Cell::Real);
            out.files.push((output.out.join(format!("traces.{}", ext(output.format))), table.render(&meta, output.format)));
            for (k, rho) in states.iter().enumerate() {
                let m = meta.with("t", fmt_real(times[k]));
                out.files.push((
                    output.out.join(format!("state_{k:04}.{}", ext(output.format))),
                    render_matrix(rho.matrix(), &m, output.format),
                ));
            }
            Ok(out)
        }
        Command::Sample { model, state, samples, seed, times, jumps, horizon, bins, log, reference, output } => {
            cmd_sample(model, state, *samples, *seed, times, jumps, *horizon, *bins, *log, *reference, output)
        }
        Command::Check { model, out, format } => {
            let r = resolve_model(model, "check")?;
            let cert = certify_trace_preservation_with(&r.model, &r.tol)?;
            let rep = &cert.report;
            let mut text = String::new();
            writeln!(text, "dim = {}", r.model.dim()).unwrap();
            writeln!(text, "kernel_dim = {}", rep.kernel_dim).unwrap();
            writeln!(text, "spectral_dark_count = {}", rep.spectral_dark_count).unwrap();
            writeln!(text, "min_imag = {}", fmt_real(rep.min_imag)).unwrap();
            writeln!(text, "completeness_deficiency = {}", fmt_real(cert.deficiency)).unwrap();
            writeln!(text, "dark_localization = {}", fmt_real(cert.dark_localization)).unwrap();
            for (k, e) in rep.dark_energies.iter().enumerate() {
                writeln!(text, "dark_energy[{k}] = {}", fmt_real(*e)).unwrap();
            }
            writeln!(
                text,
                "dark_dim = {}, trace-preserving: {}",
                rep.dark_dim,
                if cert.is_tp { "yes" } else { "no" }
            )
            .unwrap();
            let mut outcome = Outcome { stdout: text, ..Default::default() };
            if let Some(dir) = out {
                let mut meta = r.meta;
                meta.push("invocation", invocation(&["jumptime check".into(), model_flags(model)]));
                let table = Table {
                    columns: vec!["quantity", "value"],
                    rows: vec![
                        vec![Cell::Text("dim".into()), Cell::Int(r.model.dim() as u64)],
                        vec![Cell::Text("kernel_dim".into()), Cell::Int(rep.kernel_dim as u64)],
                        vec![Cell::Text("dark_dim".into()), Cell::Int(rep.dark_dim as u64)],
                        vec![Cell::Text("spectral_dark_count".into()), Cell::Int(rep.spectral_dark_count as u64)],
                        vec![Cell::Text("min_imag".into()), Cell::Real(rep.min_imag)],
                        vec![Cell::Text("completeness_deficiency".into()), Cell::Real(cert.deficiency)],
                        vec![Cell::Text("dark_localization".into()), Cell::Real(cert.dark_localization)],
                        vec![Cell::Text("trace_preserving".into()), Cell::Int(cert.is_tp as u64)],
                    ],
                };
                outcome.files.push((dir.join(format!("check.{}", ext(*format))), table.render(&meta, *format)));
            }
            Ok(outcome)
        }
        Command::WaitingTime { model, state, jumps, taus, horizon, points, output } => {
            let r = resolve_model(model, "waiting-time")?;
            let init = parse_state(&state.state, r.model.dim(), &r.tol)?;
            let map = JumptimeMap::with_tolerances(&r.model, &r.tol)?;
            let seq = evolve_with(&map, &init.rho, *jumps)?;
            let rho_n = &seq.states[*jumps];
            let grid: Vec<f64> = if taus.is_empty() {
                if *points < 2 {
                    return Err(CliError::Config("--points must be at least 2".into()));
                }
                let end = match horizon {
                    Some(h) => *h,
                    None => {
                        let rate = slowest_decay_rate(&r.model);
                        40.0 / if rate.is_finite() { rate.min(r.model.gamma()) } else { r.model.gamma() }
                    }
                };
                (0..*points).map(|k| end * k as f64 / (*points - 1) as f64).collect()
            } else {
                taus.clone()
            };
            let curve = match waiting_time(&r.model, rho_n, &grid) {
                Err(JumptimeError::ZeroTrace) => {
                    return Err(CliError::Degenerate(format!("no trajectory reaches jump {jumps}")))
                }
                other => other?,
            }
            .labeled(*jumps);
            let mut meta = r.meta;
            meta.push("state", &state.state);
            meta.push("jumps", jumps);
            meta.push("integral", fmt_real(curve.integral()));
            meta.push(
                "invocation",
                invocation(&[
                    "jumptime waiting-time".into(),
                    model_flags(model),
                    format!(
                        "--state {} --jumps {jumps} --taus {} --format {}",
                        state.state,
                        join_list(&grid),
                        ext(output.format)
                    ),
                ]),
            );
            let table = Table {
                columns: vec!["tau", "density"],
                rows: curve.taus.iter().zip(&curve.densities).map(|(&t, &w)| vec![Cell::Real(t), Cell::Real(w)]).collect(),
            };
            Ok(Outcome {
                files: vec![(output.out.join(format!("waiting_time.{}", ext(output.format))), table.render(&meta, output.format))],
                stdout: String::new(),
            })
        }
        Command::Wigner { model, state, jumps, grid, output } => {
            let r = resolve_model(model, "wigner")?;
            let init = parse_state(&state.state, r.model.dim(), &r.tol)?;
            let spec = match grid.as_slice() {
                [] => GridSpec::default(),
                [x0, x1, nx, p0, p1, np] => {
                    let count = |v: f64| {
                        if v.fract() == 0.0 && v >= 2.0 {
                            Ok(v as usize)
                        } else {
                            Err(CliError::Config(format!("grid point count {v} must be an integer ≥ 2")))
                        }
                    };
                    GridSpec { x_min: *x0, x_max: *x1, nx: count(*nx)?, p_min: *p0, p_max: *p1, np: count(*np)? }
                }
                _ => return Err(CliError::Config("--grid needs XMIN,XMAX,NX,PMIN,PMAX,NP".into())),
            };
            spec.validate().map_err(CliError::Config)?;
            let n_max = jumps.iter().copied().max().unwrap_or(0);
            let map = JumptimeMap::with_tolerances(&r.model, &r.tol)?;
            let seq = evolve_with(&map, &init.rho, n_max)?;
            let mut meta = r.meta;
            meta.push("state", &state.state);
            meta.push(
                "invocation",
                invocation(&[
                    "jumptime wigner".into(),
                    model_flags(model),
                    format!(
                        "--state {} --jumps {} --grid={},{},{},{},{},{} --format {}",
                        state.state,
                        join_list(jumps),
                        spec.x_min,
                        spec.x_max,
                        spec.nx,
                        spec.p_min,
                        spec.p_max,
                        spec.np,
                        ext(output.format)
                    ),
                ]),
            );
            let mut out = Outcome::default();
            for &n in jumps {
                let w = wigner(&seq.states[n], &spec).map_err(CliError::Config)?;
                let m = meta.with("n", n).with("trace", fmt_real(seq.traces[n]));
                let body = match output.format {
                    Format::Csv => {
                        let lines: Vec<String> = m.0.iter().map(|(k, v)| format!("{k} = {v}")).collect();
                        let mut buf = Vec::new();
                        w.write_text(&lines, &mut buf).map_err(|e| CliError::Config(e.to_string()))?;
                        String::from_utf8(buf).expect("utf-8")
                    }
                    Format::Json => {
                        let rows: Vec<Vec<f64>> =
                            w.values.row_iter().map(|row| row.iter().copied().collect()).collect();
                        let v = json!({
                            "metadata": m.json(),
                            "xs": w.xs,
                            "ps": w.ps,
                            "max": w.max(),
                            "min": w.min(),
                            "integral": w.integral(),
                            "imag_residue": w.imag_residue,
                            "warnings": w.warnings,
                            "values": rows,
                        });
                        serde_json::to_string(&v).unwrap() + "\n"
                    }
                };
                let name = match output.format {
                    Format::Csv => format!("wigner_n{n:03}.txt"),
                    Format::Json => format!("wigner_n{n:03}.json"),
                };
                writeln!(out.stdout, "n = {n}: trace = {}, integral = {}", fmt_real(seq.traces[n]), fmt_real(w.integral()))
                    .unwrap();
                out.files.push((output.out.join(name), body));
            }
            Ok(out)
        }
        Command::Export { model, out } => {
            let r = resolve_model(model, "export")?;
            let mut file = ModelFile::from(&r.model);
            if model.model == "collisional" {
                let g = *catalog::collisional_by_name(&parse_kv(&model.set, "--set")?)?.grid();
                file.momentum_grid = Some(MomentumGridMetadata { p_min: g.p_min, dp: g.dp, size: g.size });
            }
            let text = serde_json::to_string_pretty(&file).expect("model serializes") + "\n";
            Ok(Outcome { files: vec![(out.join("model.json"), text)], stdout: String::new() })
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    model: &ModelArgs,
    state: &StateArgs,
    samples: usize,
    seed: u64,
    times: &[f64],
    jumps: &[usize],
    horizon: Option<f64>,
    bins: usize,
    log: bool,
    reference: bool,
    output: &OutputArgs,
) -> Result<Outcome, CliError> {
    let r = resolve_model(model, "sample")?;
    let init = parse_state(&state.state, r.model.dim(), &r.tol)?;
    if times.is_empty() && jumps.is_empty() {
        return Err(CliError::Config("sample needs --times and/or --jumps".into()));
    }
    if samples == 0 || bins == 0 {
        return Err(CliError::Config("--samples and --bins must be positive".into()));
    }
    let initial = match &init.pure {
        Some(psi) => InitialState::pure(psi)?,
        None => InitialState::mixed(&init.rho)?,
    };

    let mut meta = r.meta.clone();
    meta.push("state", &state.state);
    meta.push("samples", samples);
    meta.push("seed", seed);
    meta.push("rng_stream", RNG_STREAM_VERSION);
    meta.push("times", join_list(times));
    meta.push("jumps", join_list(jumps));
    meta.push("horizon", horizon.map(fmt_real).unwrap_or_default());
    meta.push("bins", bins);
    let mut flags = format!(
        "--state {} --samples {samples} --seed {seed} --bins {bins} --format {}",
        state.state,
        ext(output.format)
    );
    if !times.is_empty() {
        write!(flags, " --times {}", join_list(times)).unwrap();
    }
    if !jumps.is_empty() {
        write!(flags, " --jumps {}", join_list(jumps)).unwrap();
    }
    if let Some(h) = horizon {
        write!(flags, " --horizon {h}").unwrap();
    }
    if log {
        flags.push_str(" --log");
    }
    if reference {
        flags.push_str(" --reference");
    }
    meta.push("invocation", invocation(&["jumptime sample".into(), model_flags(model), flags]));

    let mut averages = Vec::new();
    let mut logs = String::new();
    let mut histograms = Vec::new();
    let mut run = |kinds: Vec<AverageKind>, tag: &str| -> Result<(), CliError> {
        if kinds.is_empty() {
            return Ok(());
        }
        let (records, avgs) = ensemble_averages(&r.model, &initial, &kinds, samples, seed, horizon)?;
        if log {
            let mut buf = Vec::new();
            write_trajectory_log(&records, &mut buf).map_err(|e| CliError::Config(e.to_string()))?;
            logs.push_str(&String::from_utf8(buf).expect("utf-8"));
        }
        if tag == "jumptime" {
            let max_n = kinds
                .iter()
                .filter_map(|k| match k {
                    AverageKind::Jumptime(n) => Some(*n),
                    _ => None,
                })
                .max()
                .unwrap_or(0);
            for order in 0..max_n {
                if let Ok(waits) = empirical_waiting_times(&records, order) {
                    let hi = waits.iter().copied().fold(0.0, f64::max) * (1.0 + 1e-12);
                    histograms.push((order, Histogram::new(&waits, 0.0, hi.max(f64::MIN_POSITIVE), bins)));
                }
            }
        }
        averages.extend(kinds.into_iter().zip(avgs));
        Ok(())
    };
    run(times.iter().map(|&t| AverageKind::Walltime(t)).collect(), "walltime")?;
    run(jumps.iter().map(|&n| AverageKind::Jumptime(n)).collect(), "jumptime")?;

    let mut references = Vec::new();
    if reference {
        let walltime_ref = if times.is_empty() { Vec::new() } else { evolve_walltime(&r.model, &init.rho, times)? };
        let n_max = jumps.iter().copied().max().unwrap_or(0);
        let map = JumptimeMap::with_tolerances(&r.model, &r.tol)?;
        let seq = evolve_with(&map, &init.rho, n_max)?;
        for (kind, avg) in &averages {
            let oracle = match kind {
                AverageKind::Walltime(t) => {
                    let k = times.iter().position(|x| x == t).expect("requested time");
                    walltime_ref[k].matrix().clone()
                }
                AverageKind::Jumptime(n) => seq.states[*n].matrix().clone(),
            };
            references.push(trace_distance(avg.mean_state.matrix(), &oracle));
        }
    }

    let mut out = Outcome::default();
    let mut columns = vec!["kind", "value", "n_samples", "n_contributing", "trace", "stderr_scale"];
    if reference {
        columns.push("reference_trace_distance");
    }
    let mut rows = Vec::new();
    for (k, (kind, avg)) in averages.iter().enumerate() {
        let (label, value, file) = match kind {
            AverageKind::Walltime(t) => ("walltime", Cell::Real(*t), format!("average_walltime_{k:03}")),
            AverageKind::Jumptime(n) => ("jumptime", Cell::Int(*n as u64), format!("average_jumptime_{n:03}")),
        };
        let mut row = vec![
            Cell::Text(label.into()),
            value.clone(),
            Cell::Int(avg.n_samples as u64),
            Cell::Int(avg.n_contributing as u64),
            Cell::Real(avg.mean_state.trace()),
            Cell::Real(avg.stderr_scale),
        ];
        if reference {
            row.push(Cell::Real(references[k]));
        }
        rows.push(row);
        let m = meta.with("kind", label).with("value", value.csv());
        out.files.push((
            output.out.join(format!("{file}.{}", ext(output.format))),
            render_matrix(avg.mean_state.matrix(), &m, output.format),
        ));
    }
    out.files.insert(
        0,
        (output.out.join(format!("averages.{}", ext(output.format))), Table { columns, rows }.render(&meta, output.format)),
    );
    if !histograms.is_empty() {
        let mut rows = Vec::new();
        for (order, h) in &histograms {
            for ((e, &count), d) in h.edges.windows(2).zip(&h.counts).zip(h.densities()) {
                rows.push(vec![
                    Cell::Int(*order as u64),
                    Cell::Real(e[0]),
                    Cell::Real(e[1]),
                    Cell::Int(count),
                    Cell::Real(d),
                ]);
            }
        }
        let table = Table { columns: vec!["order", "bin_lo", "bin_hi", "count", "density"], rows };
        out.files.push((output.out.join(format!("waiting_times.{}", ext(output.format))), table.render(&meta, output.format)));
    }
    if log {
        out.files.push((output.out.join("trajectories.jsonl"), logs));
    }
    Ok(out)
}

/// Writes all files or none: each goes to a temporary name first and is
/// renamed once every write has succeeded.
pub fn write_outputs(files: &[(PathBuf, String)]) -> std::io::Result<()> {
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| {
        for (path, body) in files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut tmp = path.clone().into_os_string();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            fs::write(&tmp, body)?;
            staged.push((tmp, path.clone()));
        }
        for (tmp, path) in &staged {
            fs::rename(tmp, path)?;
        }
        Ok(())
    })();
    if result.is_err() {
        for (tmp, path) in &staged {
            let _ = fs::remove_file(tmp);
            let _ = fs::remove_file(path);
        }
    }
    result
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let n: usize = value
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
        // An already-initialized pool (e.g. in tests) is left as is.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|_| execute(&cli.command)).and_then(|outcome| {
        write_outputs(&outcome.files).map_err(|e| CliError::Config(format!("writing outputs: {e}")))?;
        print!("{}", outcome.stdout);
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("jumptime: {e}");
            e.exit_code()
        }
    }
}
