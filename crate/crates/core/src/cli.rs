//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or consistency error,
//! 3 every replicate failed. Verdicts never affect the exit code.
//!
//! Every command writes `manifest.json` into `--out`: the tool version, the
//! command, the arguments (minus `--out` and `--workers`), a hash of the
//! parsed configuration, the model hash, the seed and a SHA-256 per output
//! file. `--workers` only sizes the thread pool; outputs do not depend on it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::conditions::{
    check_alpha_moment, check_complex, check_harmonic, essinf_offspring, exponential_profile,
    ConditionReport,
};
use crate::engine::{write_file, Caps, SampleBatch, Simulator, DEFAULT_POPULATION_CAP};
use crate::error::Error;
use crate::estimate::{
    cis_overlap, decay_curve, estimate_harmonic, estimate_moment, fit_power_decay,
    fit_stretched_exponential, fixed_point_check, geometric_grid, laplace_ray, tail_curve,
    DecayFit, FixedPointVariant, MomentEstimate, Target,
};
use crate::mbrw::{build_cascade_from_mbrw, mbrw_condition_report, mbrw_spectral, MbrwSpec};
use crate::model::{load_model, validate_model, CascadeModel, Field};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ALL_FAILED: i32 = 3;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "mcascade",
    version,
    about = "Matrix Mandelbrot cascades: condition checks and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a model and evaluate the moment conditions.
    Check(CheckArgs),
    /// Simulate replicated draws of Y_n.
    Simulate(SimulateArgs),
    /// Estimate moments, Laplace decay and tails from a batch.
    Estimate(EstimateArgs),
    /// Build a cascade model file from a multitype branching random walk spec.
    MbrwBuild(MbrwBuildArgs),
    /// Conditions, fresh estimates and the fixed-point check in one report.
    Report(ReportArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "mcascade-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads; affects wall time only.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub workers: Option<u32>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CheckArgs {
    /// Model file (JSON).
    #[arg(long, required_unless_present = "mbrw", conflicts_with = "mbrw")]
    pub model: Option<PathBuf>,
    /// MBRW spec file; the cascade is built at `--t`.
    #[arg(long)]
    pub mbrw: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub epsilon: Vec<f64>,
    /// Largest depth for the n-step moment matrices.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    pub n_max: u32,
    /// β grid for complex models with α > 2.
    #[arg(long, value_delimiter = ',', default_value = "1.5,2")]
    pub beta: Vec<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Generations.
    #[arg(long)]
    pub n: u32,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: u64,
    #[arg(long)]
    pub seed: u64,
    /// Population cap per generation.
    #[arg(long, default_value_t = DEFAULT_POPULATION_CAP as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub cap: u64,
    /// Simulate the tilted martingale at this order.
    #[arg(long)]
    pub tilt: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory holding batch.csv and batch.meta.json.
    #[arg(long, required_unless_present = "fresh", conflicts_with = "fresh")]
    pub batch: Option<PathBuf>,
    /// Simulate fresh batches at each of `--n-list` instead of reading one.
    #[arg(long, requires_all = ["replicates", "seed"])]
    pub fresh: bool,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Vec<u32>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub replicates: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_POPULATION_CAP as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub cap: u64,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub lambda: Vec<f64>,
    /// Projection vector (defaults to all ones).
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<f64>,
    /// Exponent of x in the tail ratio (defaults to essinf N · λ).
    #[arg(long)]
    pub tail_exponent: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub n_max: u32,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MbrwBuildArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub t: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub n: u32,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub replicates: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_POPULATION_CAP as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub cap: u64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3)]
    pub n_max: u32,
    #[command(flatten)]
    #[serde(skip)]
    pub output: OutputArgs,
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_INPUT,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, &args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn output_args(cmd: &Command) -> &OutputArgs {
    match cmd {
        Command::Check(a) => &a.output,
        Command::Simulate(a) => &a.output,
        Command::Estimate(a) => &a.output,
        Command::MbrwBuild(a) => &a.output,
        Command::Report(a) => &a.output,
    }
}

pub fn execute(cli: &Cli, argv: &[OsString]) -> CliResult<()> {
    let out = output_args(&cli.command);
    let job = || match &cli.command {
        Command::Check(a) => cmd_check(a, argv),
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Estimate(a) => cmd_estimate(a, argv),
        Command::MbrwBuild(a) => cmd_mbrw_build(a, argv),
        Command::Report(a) => cmd_report(a, argv),
    };
    match out.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w as usize)
            .build()
            .map_err(|e| CliError {
                code: EXIT_USAGE,
                message: e.to_string(),
            })?
            .install(job),
        None => job(),
    }
}

// ---------- shared plumbing ----------

struct Outputs {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_file(&self.dir.join(name), bytes)?;
        self.written
            .insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Hashes files written by other routines (batch files).
    fn record_existing(&mut self, name: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(|source| Error::Io { path, source })?;
        self.written
            .insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn manifest(
        mut self,
        command: &str,
        argv: &[OsString],
        config: &impl Serialize,
        model_hash: Option<String>,
        seed: Option<u64>,
    ) -> CliResult<()> {
        let config_json = serde_json::to_string(config).expect("config serializes");
        let manifest = json!({
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "tool": "mcascade",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "args": recorded_args(argv),
            "config": serde_json::from_str::<Value>(&config_json).expect("round trip"),
            "config_hash": hex::encode(Sha256::digest(config_json.as_bytes())),
            "model_hash": model_hash,
            "seed": seed,
            "outputs": self.written,
        });
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        write_file(&self.dir.join("manifest.json"), text.as_bytes())?;
        self.written.clear();
        Ok(())
    }
}

/// Command-line arguments without the program name, `--out` and `--workers`.
fn recorded_args(argv: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip_next = false;
    for a in argv.iter().skip(1) {
        let s = a.to_string_lossy().into_owned();
        if skip_next {
            skip_next = false;
            continue;
        }
        if s == "--out" || s == "--workers" {
            skip_next = true;
            continue;
        }
        if s.starts_with("--out=") || s.starts_with("--workers=") {
            continue;
        }
        out.push(s);
    }
    out
}

fn load(path: &Path) -> CliResult<CascadeModel> {
    Ok(load_model(path)?)
}

fn fmt_num(x: f64) -> String {
    // Adding zero turns -0 into +0.
    let x = x + 0.0;
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        x.to_string()
    }
}

fn id_name<T: Serialize>(x: &T) -> String {
    match serde_json::to_value(x).expect("serializes") {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

/// A condition evaluation or the reason it could not be evaluated.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum ConditionEntry {
    Report {
        parameter: BTreeMap<String, f64>,
        #[serde(flatten)]
        report: Box<ConditionReport>,
    },
    Skipped {
        condition: String,
        parameter: BTreeMap<String, f64>,
        skipped: String,
    },
}

fn entry(
    condition: &str,
    params: &[(&str, f64)],
    r: crate::error::Result<ConditionReport>,
) -> ConditionEntry {
    let parameter = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    match r {
        Ok(report) => ConditionEntry::Report {
            parameter,
            report: Box::new(report),
        },
        Err(e) => ConditionEntry::Skipped {
            condition: condition.into(),
            parameter,
            skipped: e.to_string(),
        },
    }
}

fn condition_entries(
    model: &CascadeModel,
    alphas: &[f64],
    lambdas: &[f64],
    epsilons: &[f64],
    n_max: u32,
    betas: &[f64],
) -> Vec<ConditionEntry> {
    let mut entries = Vec::new();
    if !model.is_finite_atom() {
        entries.push(ConditionEntry::Skipped {
            condition: "all".into(),
            parameter: BTreeMap::new(),
            skipped: "condition checks need a finite-atom model".into(),
        });
        return entries;
    }
    if model.field() == Field::Complex {
        for &a in alphas {
            entries.push(entry(
                "complex-alpha-moment",
                &[("alpha", a)],
                check_complex(model, a, betas),
            ));
        }
        return entries;
    }
    for &a in alphas {
        entries.push(entry(
            "alpha-moment",
            &[("alpha", a)],
            check_alpha_moment(model, a, n_max as usize),
        ));
    }
    for &l in lambdas {
        entries.push(entry(
            "harmonic",
            &[("lambda", l)],
            check_harmonic(model, l),
        ));
    }
    let eps_grid: Vec<f64> = if epsilons.is_empty() {
        vec![0.0]
    } else {
        epsilons.to_vec()
    };
    for &e in &eps_grid {
        match exponential_profile(model, e) {
            Ok(p) => {
                entries.push(entry("exponential-upper", &[("epsilon", e)], Ok(p.upper)));
                entries.push(entry("exponential-lower", &[("epsilon", e)], Ok(p.lower)));
            }
            Err(err) => entries.push(ConditionEntry::Skipped {
                condition: "exponential".into(),
                parameter: [("epsilon".to_string(), e)].into(),
                skipped: err.to_string(),
            }),
        }
    }
    entries
}

fn conditions_table(entries: &[ConditionEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        match e {
            ConditionEntry::Report { parameter, report } => {
                let params: Vec<String> =
                    parameter.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!(
                    "{} ({}): {}{}\n",
                    id_name(&report.condition),
                    params.join(", "),
                    id_name(&report.verdict),
                    report
                        .conclusion
                        .map(|c| format!(", conclusion {}", id_name(&c)))
                        .unwrap_or_default()
                ));
                for (k, v) in &report.quantities {
                    out.push_str(&format!("    {k:<52} {}\n", fmt_num(*v)));
                }
                for a in &report.assumptions_checked {
                    out.push_str(&format!(
                        "    [{}] {}: {}\n",
                        id_name(&a.status),
                        a.assumption,
                        a.detail
                    ));
                }
                for (k, v) in &report.alternate_verdicts {
                    out.push_str(&format!("    alternate {k}: {}\n", id_name(v)));
                }
                for n in &report.notes {
                    out.push_str(&format!("    note: {n}\n"));
                }
            }
            ConditionEntry::Skipped {
                condition,
                parameter,
                skipped,
            } => {
                let params: Vec<String> =
                    parameter.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!(
                    "{condition} ({}): not evaluated: {skipped}\n",
                    params.join(", ")
                ));
            }
        }
    }
    out
}

fn conditions_csv(entries: &[ConditionEntry]) -> String {
    let mut out = String::from("condition,parameter,verdict,conclusion,quantity,value\n");
    for e in entries {
        match e {
            ConditionEntry::Report { parameter, report } => {
                let params: Vec<String> =
                    parameter.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let conclusion = report.conclusion.map(|c| id_name(&c)).unwrap_or_default();
                for (k, v) in &report.quantities {
                    out.push_str(&format!(
                        "{},{},{},{},\"{}\",{:?}\n",
                        id_name(&report.condition),
                        params.join(" "),
                        id_name(&report.verdict),
                        conclusion,
                        k,
                        v
                    ));
                }
            }
            ConditionEntry::Skipped {
                condition,
                parameter,
                ..
            } => {
                let params: Vec<String> =
                    parameter.iter().map(|(k, v)| format!("{k}={v}")).collect();
                out.push_str(&format!(
                    "{condition},{},not-evaluated,,,\n",
                    params.join(" ")
                ));
            }
        }
    }
    out
}

// ---------- commands ----------

fn cmd_check(a: &CheckArgs, argv: &[OsString]) -> CliResult<()> {
    let (model, mbrw) = match (&a.model, &a.mbrw) {
        (Some(path), _) => (load(path)?, None),
        (None, Some(path)) => {
            let spec = MbrwSpec::load(path)?;
            (build_cascade_from_mbrw(&spec, a.t)?, Some(spec))
        }
        (None, None) => unreachable!("clap enforces one of --model/--mbrw"),
    };
    let validation = validate_model(&model);
    let mut entries = condition_entries(&model, &a.alpha, &a.lambda, &a.epsilon, a.n_max, &a.beta);
    if let Some(spec) = &mbrw {
        let eps = a.epsilon.first().copied().unwrap_or(0.1);
        for &alpha in &a.alpha {
            for &lambda in &a.lambda {
                let params = [
                    ("alpha", alpha),
                    ("lambda", lambda),
                    ("epsilon", eps),
                    ("t", a.t),
                ];
                match mbrw_condition_report(spec, a.t, alpha, lambda, eps) {
                    Ok(r) => {
                        entries.push(entry("mbrw-alpha-moment", &params, Ok(r.alpha_moment)));
                        entries.push(entry("mbrw-harmonic", &params, Ok(r.harmonic)));
                    }
                    Err(e) => entries.push(entry("mbrw", &params, Err(e))),
                }
            }
        }
    }
    let table = conditions_table(&entries);
    print!("{table}");

    let mut out = Outputs::new(&a.output.out)?;
    out.json("validation.json", &validation)?;
    match a.output.format {
        Format::Json => out.json(
            "conditions.json",
            &json!({"schema_version": REPORT_SCHEMA_VERSION, "model_id": model.model_id(), "reports": entries}),
        )?,
        Format::Csv => out.write("conditions.csv", conditions_csv(&entries).as_bytes())?,
    }
    out.write("conditions.txt", table.as_bytes())?;
    out.manifest("check", argv, a, Some(model.model_id()), None)
}

fn simulate_model(
    model: &CascadeModel,
    n: usize,
    replicates: usize,
    seed: u64,
    caps: Caps,
    tilt: Option<f64>,
) -> CliResult<SampleBatch> {
    let batch = match (model.field(), tilt) {
        (Field::Complex, None) => Simulator::complex(model)?
            .with_caps(caps)
            .batch(n, replicates, seed)?,
        (Field::Complex, Some(_)) => {
            return Err(CliError::input("tilted simulation needs a real model"))
        }
        (Field::Real, None) => Simulator::new(model)?
            .with_caps(caps)
            .batch(n, replicates, seed)?,
        (Field::Real, Some(t)) => Simulator::tilted(model, t)?
            .with_caps(caps)
            .batch(n, replicates, seed)?,
    };
    Ok(batch)
}

fn all_failed(batch: &SampleBatch) -> CliResult<()> {
    if batch.cap_breaches() == batch.replicates() {
        return Err(CliError {
            code: EXIT_ALL_FAILED,
            message: format!(
                "all {} replicates exceeded the population cap",
                batch.replicates()
            ),
        });
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, argv: &[OsString]) -> CliResult<()> {
    let model = load(&a.model)?;
    let caps = Caps {
        population: a.cap as usize,
    };
    let batch = simulate_model(
        &model,
        a.n as usize,
        a.replicates as usize,
        a.seed,
        caps,
        a.tilt,
    )?;
    let mut out = Outputs::new(&a.output.out)?;
    batch.write_dir(&out.dir)?;
    for name in [
        crate::engine::BATCH_CSV,
        crate::engine::BATCH_BIN,
        crate::engine::BATCH_META,
    ] {
        out.record_existing(name)?;
    }
    if let Some(raw) = &batch.raw_values {
        let mut raw_batch = batch.clone();
        raw_batch.values = raw.clone();
        out.write("batch_raw.csv", raw_batch.to_csv().as_bytes())?;
    }
    let meta = batch.meta();
    println!(
        "simulated {} replicates of Y_{} (extinct {}, cap breaches {})",
        meta.replicates, meta.n, meta.extinct_count, meta.cap_breaches
    );
    out.manifest("simulate", argv, a, Some(model.model_id()), Some(a.seed))?;
    all_failed(&batch)
}

/// Everything `estimate` computes for one batch.
#[derive(Clone, Debug, Serialize)]
pub struct BatchEstimates {
    pub n: usize,
    pub replicates: usize,
    pub moments: Vec<MomentEstimate>,
    pub harmonic: Vec<MomentEstimate>,
    pub laplace: Vec<(f64, f64)>,
    pub power_fit: Result<DecayFit, String>,
    pub stretched_fit: Result<DecayFit, String>,
    pub tail: Option<crate::estimate::TailCurve>,
    pub notes: Vec<String>,
}

fn estimate_batch(
    batch: &SampleBatch,
    alphas: &[f64],
    lambdas: &[f64],
    y: &[f64],
    tail_exponent: f64,
) -> CliResult<BatchEstimates> {
    let mut notes = Vec::new();
    let mut moments = Vec::new();
    for &alpha in alphas {
        moments.push(estimate_moment(batch, alpha, Target::Norm)?);
    }
    let mut harmonic = Vec::new();
    let mut laplace = Vec::new();
    let mut power_fit = Err("real batch required".to_string());
    let mut stretched_fit = Err("real batch required".to_string());
    let mut tail = None;
    if batch.field() == Field::Real {
        for &lambda in lambdas {
            match estimate_harmonic(batch, lambda, y) {
                Ok(h) => harmonic.push(h),
                Err(e) => notes.push(format!("harmonic lambda={lambda}: {e}")),
            }
        }
        let proj = batch.projections(y)?;
        let mut sorted: Vec<f64> = proj.iter().copied().filter(|x| x.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let scale = sorted.iter().sum::<f64>() / sorted.len().max(1) as f64;
        if scale > 0.0 {
            let curve = laplace_ray(batch, y, &geometric_grid(1e-2 / scale, 1e4 / scale, 61))?;
            laplace = decay_curve(&curve);
            let r = batch.replicates() - batch.cap_breaches();
            power_fit = fit_power_decay(&laplace, r).map_err(|e| e.to_string());
            stretched_fit = fit_stretched_exponential(&laplace, r).map_err(|e| e.to_string());
            let q = sorted[(sorted.len() / 10).min(sorted.len() - 1)];
            if q > 0.0 {
                let grid = geometric_grid(q / 10.0, q, 10);
                tail = tail_curve(batch, y, &grid, tail_exponent).ok();
            } else {
                notes.push("lower decile of y.Y_n is zero; tail curve skipped".into());
            }
        } else {
            notes.push("mean projection is zero; Laplace and tail diagnostics skipped".into());
        }
    }
    Ok(BatchEstimates {
        n: batch.n,
        replicates: batch.replicates(),
        moments,
        harmonic,
        laplace,
        power_fit,
        stretched_fit,
        tail,
        notes,
    })
}

fn default_tail_exponent(model: &CascadeModel, lambda: f64) -> f64 {
    match model.real_atoms() {
        Ok(atoms) => essinf_offspring(atoms).max(1) as f64 * lambda,
        Err(_) => lambda,
    }
}

fn write_estimates(
    out: &mut Outputs,
    format: Format,
    model: &CascadeModel,
    entries: &[ConditionEntry],
    per_n: &[BatchEstimates],
    stability: &Value,
) -> CliResult<()> {
    match format {
        Format::Json => out.json(
            "estimates.json",
            &json!({
                "schema_version": REPORT_SCHEMA_VERSION,
                "model_id": model.model_id(),
                "conditions": entries,
                "estimates": per_n,
                "stability": stability,
            }),
        )?,
        Format::Csv => {
            let mut m = format!("kind,{}\n", MomentEstimate::CSV_HEADER);
            let mut fits = format!("n,{}\n", DecayFit::CSV_HEADER);
            for e in per_n {
                for x in &e.moments {
                    m.push_str(&format!("moment,{}\n", x.csv_row()));
                }
                for x in &e.harmonic {
                    m.push_str(&format!("harmonic,{}\n", x.csv_row()));
                }
                for f in [&e.power_fit, &e.stretched_fit].into_iter().flatten() {
                    fits.push_str(&format!("{},{}\n", e.n, f.csv_row()));
                }
            }
            out.write("moments.csv", m.as_bytes())?;
            out.write("fits.csv", fits.as_bytes())?;
            out.write("conditions.csv", conditions_csv(entries).as_bytes())?;
        }
    }
    // Per-n curves and plot files are always CSV.
    for e in per_n {
        let mut lap = String::from("norm,phi\n");
        for (t, phi) in &e.laplace {
            lap.push_str(&format!("{t:?},{phi:?}\n"));
        }
        out.write(&format!("laplace_n{}.csv", e.n), lap.as_bytes())?;
        if let Ok(f) = &e.power_fit {
            out.write(
                &format!("fit_power_n{}.plot.csv", e.n),
                f.plot_columns().as_bytes(),
            )?;
        }
        if let Ok(f) = &e.stretched_fit {
            out.write(
                &format!("fit_stretched_n{}.plot.csv", e.n),
                f.plot_columns().as_bytes(),
            )?;
        }
        if let Some(t) = &e.tail {
            out.write(&format!("tail_n{}.csv", e.n), t.to_csv().as_bytes())?;
        }
    }
    Ok(())
}

fn stability_summary(per_n: &[BatchEstimates], alphas: &[f64], lambdas: &[f64]) -> Value {
    if per_n.len() < 2 {
        return json!({"note": "single depth; cross-n stability needs --fresh with several --n-list values"});
    }
    let mut moments = BTreeMap::new();
    for (i, &a) in alphas.iter().enumerate() {
        let ests: Vec<MomentEstimate> = per_n
            .iter()
            .filter_map(|e| e.moments.get(i).cloned())
            .collect();
        moments.insert(format!("alpha={a}"), cis_overlap(&ests));
    }
    let mut harmonic = BTreeMap::new();
    for (i, &l) in lambdas.iter().enumerate() {
        let ests: Vec<MomentEstimate> = per_n
            .iter()
            .filter_map(|e| e.harmonic.get(i).cloned())
            .collect();
        if ests.len() == per_n.len() {
            harmonic.insert(format!("lambda={l}"), cis_overlap(&ests));
        }
    }
    json!({"moment_cis_overlap": moments, "harmonic_cis_overlap": harmonic})
}

fn cmd_estimate(a: &EstimateArgs, argv: &[OsString]) -> CliResult<()> {
    let model = load(&a.model)?;
    let y = if a.y.is_empty() {
        vec![1.0; model.p()]
    } else {
        a.y.clone()
    };
    if y.len() != model.p() {
        return Err(CliError {
            code: EXIT_USAGE,
            message: format!("--y needs {} entries", model.p()),
        });
    }
    let tail_exponent = a
        .tail_exponent
        .unwrap_or_else(|| default_tail_exponent(&model, a.lambda[0]));
    let caps = Caps {
        population: a.cap as usize,
    };

    let batches: Vec<SampleBatch> = if a.fresh {
        let ns: Vec<u32> = if a.n_list.is_empty() {
            vec![6, 8, 10]
        } else {
            a.n_list.clone()
        };
        let (r, seed) = (
            a.replicates.expect("clap requires") as usize,
            a.seed.expect("clap requires"),
        );
        ns.iter()
            .map(|&n| simulate_model(&model, n as usize, r, seed, caps, None))
            .collect::<CliResult<_>>()?
    } else {
        let dir = a
            .batch
            .as_ref()
            .expect("clap requires --batch without --fresh");
        let batch = SampleBatch::read_dir(dir)?;
        if batch.model_id != model.model_id() {
            return Err(CliError::input(format!(
                "batch in {} was generated from model {} but --model hashes to {}; stale data",
                dir.display(),
                batch.model_id,
                model.model_id()
            )));
        }
        vec![batch]
    };
    for b in &batches {
        all_failed(b)?;
    }

    let entries = condition_entries(&model, &a.alpha, &a.lambda, &[], a.n_max, &[2.0]);
    let per_n: Vec<BatchEstimates> = batches
        .iter()
        .map(|b| estimate_batch(b, &a.alpha, &a.lambda, &y, tail_exponent))
        .collect::<CliResult<_>>()?;
    let stability = stability_summary(&per_n, &a.alpha, &a.lambda);

    print!("{}", conditions_table(&entries));
    for e in &per_n {
        for m in &e.moments {
            println!(
                "n={} E||Y||^{} = {} (se {}, ci95 [{}, {}])",
                e.n,
                m.order,
                fmt_num(m.point),
                fmt_num(m.stderr),
                fmt_num(m.ci95.0),
                fmt_num(m.ci95.1)
            );
        }
    }
    let mut out = Outputs::new(&a.output.out)?;
    write_estimates(
        &mut out,
        a.output.format,
        &model,
        &entries,
        &per_n,
        &stability,
    )?;
    out.manifest(
        "estimate",
        argv,
        a,
        Some(model.model_id()),
        a.seed.or(batches.first().map(|b| b.master_seed)),
    )
}

fn cmd_mbrw_build(a: &MbrwBuildArgs, argv: &[OsString]) -> CliResult<()> {
    let spec = MbrwSpec::load(&a.spec)?;
    let spectral = mbrw_spectral(&spec, a.t)?;
    let model = build_cascade_from_mbrw(&spec, a.t)?;
    let mut out = Outputs::new(&a.output.out)?;
    let mut text = model.to_json_string();
    text.push('\n');
    out.write("model.json", text.as_bytes())?;
    out.json("spectral.json", &spectral)?;
    println!(
        "built cascade at t = {} (rho~ = {})",
        a.t, spectral.rho_tilde
    );
    out.manifest("mbrw-build", argv, a, Some(model.model_id()), None)
}

fn cmd_report(a: &ReportArgs, argv: &[OsString]) -> CliResult<()> {
    let model = load(&a.model)?;
    let validation = validate_model(&model);
    let entries = condition_entries(&model, &[a.alpha], &[a.lambda], &[], a.n_max, &[2.0]);
    let caps = Caps {
        population: a.cap as usize,
    };
    let y = vec![1.0; model.p()];
    let tail_exponent = default_tail_exponent(&model, a.lambda);
    let n = a.n as usize;
    let per_n: Vec<BatchEstimates> = [n.saturating_sub(2), n, n + 2]
        .iter()
        .map(|&k| {
            let b = simulate_model(&model, k, a.replicates as usize, a.seed, caps, None)?;
            all_failed(&b)?;
            estimate_batch(&b, &[a.alpha], &[a.lambda], &y, tail_exponent)
        })
        .collect::<CliResult<_>>()?;
    let stability = stability_summary(&per_n, &[a.alpha], &[a.lambda]);
    let fixed_point = if model.field() == Field::Real {
        match fixed_point_check(
            &model,
            n,
            a.replicates as usize,
            a.seed,
            caps,
            FixedPointVariant::Correct,
        ) {
            Ok(r) => serde_json::to_value(r).expect("serializes"),
            Err(e) => json!({"skipped": e.to_string()}),
        }
    } else {
        json!({"skipped": "fixed-point check needs a real model"})
    };

    let mut text = conditions_table(&entries);
    for e in &per_n {
        for m in &e.moments {
            text.push_str(&format!(
                "n={} E||Y||^{} = {} (ci95 [{}, {}])\n",
                e.n,
                m.order,
                fmt_num(m.point),
                fmt_num(m.ci95.0),
                fmt_num(m.ci95.1)
            ));
        }
    }
    text.push_str(&format!("stability: {stability}\n"));
    if let Some(p) = fixed_point.get("min_p_value") {
        text.push_str(&format!("fixed-point KS min p-value: {p}\n"));
    }
    print!("{text}");

    let mut out = Outputs::new(&a.output.out)?;
    out.json(
        "report.json",
        &json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "model_id": model.model_id(),
            "validation": validation,
            "conditions": entries,
            "estimates": per_n,
            "stability": stability,
            "fixed_point": fixed_point,
        }),
    )?;
    out.write("report.txt", text.as_bytes())?;
    out.manifest("report", argv, a, Some(model.model_id()), Some(a.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recorded_args_drop_out_and_workers() {
        let argv: Vec<OsString> = [
            "mcascade",
            "simulate",
            "--out",
            "x",
            "--workers=3",
            "--seed",
            "1",
            "--workers",
            "2",
        ]
        .iter()
        .map(Into::into)
        .collect();
        assert_eq!(recorded_args(&argv), vec!["simulate", "--seed", "1"]);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(
            run([
                "mcascade",
                "simulate",
                "--model",
                "m.json",
                "--n",
                "3",
                "--replicates",
                "0",
                "--seed",
                "1"
            ]),
            EXIT_USAGE
        );
        assert_eq!(
            run([
                "mcascade",
                "simulate",
                "--model",
                "m.json",
                "--n",
                "3",
                "--replicates",
                "5"
            ]),
            EXIT_USAGE
        );
        assert_eq!(run(["mcascade", "--version"]), EXIT_OK);
    }
}
