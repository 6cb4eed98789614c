//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on any input or numerical error, 2 when a
//! fit stops before converging (its result is still written).

use std::collections::{BTreeSet, HashMap};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, RunConfig, INTERCEPT};
use crate::error::{Error, Result};
use crate::inference::{predict_random_effects, prediction_error, InferenceReport};
use crate::model::{GroupBlock, MixedModelData, VarianceSpec, VarianceStructure};
use crate::penalty::{PenaltyFamily, PenaltySpec, DEFAULT_SCAD_A};
use crate::selection::{bic, degrees_of_freedom, fit_path, PathConfig};
use crate::simulation::{compare_penalties, run_scenario, SimulationScenario};
use crate::solver::{cgd_fit, lasso_init, FitResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Exponent used when `--penalty lq` is given without a config file saying otherwise.
const DEFAULT_LQ: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "pllmm", version, about = "Penalized likelihood fitting for linear mixed models")]
pub struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true, env = "PLLMM_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at a single penalty level from the cross-validated Lasso start.
    Fit(FitArgs),
    /// Fit a regularization path and select the penalty level by BIC.
    Path(FitArgs),
    /// Run a replicated simulation study.
    Simulate(SimulateArgs),
    /// Predict random effects and conditional fitted values from a saved fit.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    L1,
    L2,
    Lq,
    Hard,
    Scad,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured penalty family.
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    /// Penalty level for `fit`; ignored by `path`.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// SCAD shape parameter (default 3.7).
    #[arg(long)]
    pub scad_a: Option<f64>,
    /// Seed for the cross-validation folds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file: fit JSON for `fit`, per-λ CSV for `path`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "scad")]
    pub penalty: PenaltyArg,
    #[arg(long)]
    pub scad_a: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Number of groups.
    #[arg(long, default_value_t = 25)]
    pub groups: usize,
    /// Fit at this penalty level instead of selecting it by BIC.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Run SCAD and L1 on the same datasets and report paired differences.
    #[arg(long)]
    pub compare: bool,
    /// Warm-start each `λ` from its predecessor instead of the Lasso start.
    #[arg(long)]
    pub warm_start: bool,
    /// Machine-readable summary file (printed to stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// CSV with the same columns as the one that was fitted.
    #[arg(long)]
    pub data: PathBuf,
    /// Result file written by `fit` or `path`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Prediction CSV (default predictions.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidInput("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Path(a) => cmd_path(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Predict(a) => cmd_predict(&a),
    }
}

fn family_from(arg: PenaltyArg, scad_a: Option<f64>, fallback: PenaltyFamily) -> PenaltyFamily {
    match arg {
        PenaltyArg::L1 => PenaltyFamily::L1,
        PenaltyArg::L2 => PenaltyFamily::L2,
        PenaltyArg::Hard => PenaltyFamily::Hard,
        PenaltyArg::Lq => match fallback {
            f @ PenaltyFamily::Lq { .. } => f,
            _ => PenaltyFamily::Lq { q: DEFAULT_LQ },
        },
        PenaltyArg::Scad => PenaltyFamily::Scad {
            a: scad_a.unwrap_or(match fallback {
                PenaltyFamily::Scad { a } => a,
                _ => DEFAULT_SCAD_A,
            }),
        },
    }
}

/// Config file with command-line overrides applied.
fn resolve_config(a: &FitArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&a.config)?;
    let base = cfg.penalty.family;
    if let Some(p) = a.penalty {
        cfg.penalty.family = family_from(p, a.scad_a, base);
    } else if let (Some(new_a), PenaltyFamily::Scad { .. }) = (a.scad_a, base) {
        cfg.penalty.family = PenaltyFamily::Scad { a: new_a };
    }
    if let Some(l) = a.lambda {
        cfg.penalty.lambda = Some(l);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.path.seed = cfg.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn output_path(out: &Option<PathBuf>, cfg: Option<&RunConfig>, default: &str) -> PathBuf {
    out.clone()
        .or_else(|| cfg.and_then(|c| c.output.file.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from(default))
}

/// Grouped data plus the bookkeeping needed to map results back to the CSV.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: MixedModelData,
    pub fixed_effects: Vec<String>,
    pub random_effects: Vec<String>,
    pub group_labels: Vec<String>,
    /// 1-based data-row numbers of each group's observations, in order.
    pub rows: Vec<Vec<usize>>,
}

/// Reads a CSV with a header row and assembles groups in order of first
/// appearance. Fixed effects are the listed columns, or every column except
/// the response and group; the optional intercept column comes first.
pub fn load_csv(path: &Path, cfg: &DataConfig) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str, role: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::InvalidInput(format!("{role} column '{name}' not found in {}", path.display()))
        })
    };
    let response = find(&cfg.response, "response")?;
    let group = find(&cfg.group, "group")?;
    if cfg.intercept && headers.iter().any(|h| h == INTERCEPT) {
        return Err(Error::InvalidInput(format!(
            "column name '{INTERCEPT}' is reserved when intercept = true"
        )));
    }
    let mut fixed: Vec<String> = Vec::new();
    if cfg.intercept {
        fixed.push(INTERCEPT.to_string());
    }
    match &cfg.fixed_effects {
        Some(list) => {
            for name in list {
                if name != INTERCEPT || !cfg.intercept {
                    find(name, "fixed-effect")?;
                    fixed.push(name.clone());
                }
            }
        }
        None => fixed.extend(
            headers
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != response && *k != group)
                .map(|(_, h)| h.clone()),
        ),
    }
    let source = |name: &str, role: &str| -> Result<Option<usize>> {
        if cfg.intercept && name == INTERCEPT {
            Ok(None)
        } else {
            find(name, role).map(Some)
        }
    };
    let fixed_src = fixed
        .iter()
        .map(|n| source(n, "fixed-effect"))
        .collect::<Result<Vec<_>>>()?;
    let random_src = cfg
        .random_effects
        .iter()
        .map(|n| source(n, "random-effect"))
        .collect::<Result<Vec<_>>>()?;
    let mut unpenalized = BTreeSet::new();
    for name in &cfg.unpenalized {
        let j = fixed.iter().position(|f| f == name).ok_or_else(|| {
            Error::InvalidInput(format!("unpenalized column '{name}' is not a fixed effect"))
        })?;
        unpenalized.insert(j);
    }

    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    let mut xs: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut zs: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Csv(format!("{} line {line}: {e}", path.display()))
        })?;
        let line = rec.position().map_or(k as u64 + 2, |p| p.line());
        let num = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::Csv(format!(
                        "{} line {line}, column {} ('{}'): '{raw}' is not a finite number",
                        path.display(),
                        c + 1,
                        headers[c]
                    ))
                })
        };
        let label = rec.get(group).unwrap_or("").to_string();
        if label.is_empty() {
            return Err(Error::Csv(format!(
                "{} line {line}, column {} ('{}'): empty group label",
                path.display(),
                group + 1,
                headers[group]
            )));
        }
        let g = *index.entry(label.clone()).or_insert_with(|| {
            labels.push(label);
            ys.push(Vec::new());
            xs.push(Vec::new());
            zs.push(Vec::new());
            rows.push(Vec::new());
            labels.len() - 1
        });
        ys[g].push(num(response)?);
        let value = |s: &Option<usize>| s.map_or(Ok(1.0), num);
        xs[g].push(fixed_src.iter().map(value).collect::<Result<Vec<f64>>>()?);
        zs[g].push(random_src.iter().map(value).collect::<Result<Vec<f64>>>()?);
        rows[g].push(k + 1);
    }
    if labels.is_empty() {
        return Err(Error::Csv(format!("{}: no data rows", path.display())));
    }
    let groups = (0..labels.len())
        .map(|g| GroupBlock::from_rows(&ys[g], &xs[g], &zs[g]))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedData {
        data: MixedModelData::new(groups, unpenalized)?,
        fixed_effects: fixed,
        random_effects: cfg.random_effects.clone(),
        group_labels: labels,
        rows,
    })
}

/// Everything `predict` needs to reuse a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub format: String,
    pub version: u32,
    pub response: String,
    pub group_column: String,
    pub intercept: bool,
    pub fixed_effects: Vec<String>,
    pub random_effects: Vec<String>,
    pub unpenalized: Vec<String>,
    pub variance: VarianceSpec,
    pub groups: Vec<String>,
    /// "fixed" for `fit`, "bic" for `path`.
    pub lambda_selection: String,
    pub bic: f64,
    pub fit: FitResult,
    pub report: InferenceReport,
}

pub const FIT_FORMAT: &str = "pllmm-fit";

impl FitFile {
    fn new(
        cfg: &RunConfig,
        loaded: &LoadedData,
        spec: VarianceSpec,
        fit: FitResult,
        selection: &str,
    ) -> Result<Self> {
        let report = InferenceReport::build(&loaded.data, &spec, &fit)?;
        Ok(Self {
            format: FIT_FORMAT.into(),
            version: 1,
            response: cfg.data.response.clone(),
            group_column: cfg.data.group.clone(),
            intercept: cfg.data.intercept,
            fixed_effects: loaded.fixed_effects.clone(),
            random_effects: loaded.random_effects.clone(),
            unpenalized: cfg.data.unpenalized.clone(),
            variance: spec,
            groups: loaded.group_labels.clone(),
            lambda_selection: selection.into(),
            bic: bic(&fit, &loaded.data, &spec),
            fit,
            report,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let f: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: not a valid fit file: {e}", path.display())))?;
        if f.format != FIT_FORMAT {
            return Err(Error::InvalidInput(format!("{}: unknown format '{}'", path.display(), f.format)));
        }
        Ok(f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig {
            response: self.response.clone(),
            group: self.group_column.clone(),
            intercept: self.intercept,
            random_effects: self.random_effects.clone(),
            unpenalized: self.unpenalized.clone(),
            fixed_effects: Some(
                self.fixed_effects
                    .iter()
                    .filter(|n| !(self.intercept && n.as_str() == INTERCEPT))
                    .cloned()
                    .collect(),
            ),
        }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn variance_spec(cfg: &RunConfig) -> VarianceSpec {
    let q = cfg.data.random_effects.len();
    match cfg.variance.structure {
        VarianceStructure::Isotropic => VarianceSpec::isotropic(q),
        VarianceStructure::Diagonal => VarianceSpec::diagonal(q),
    }
}

fn print_fit(file: &FitFile) {
    let fit = &file.fit;
    println!(
        "penalty {} lambda = {}  converged = {} after {} iterations",
        fit.penalty.family.name(),
        fit.lambda(),
        fit.converged,
        fit.iterations
    );
    println!("-2 log-likelihood = {:.6}  BIC = {:.6}", 2.0 * fit.neg_loglik, file.bic);
    let se: HashMap<usize, f64> = file
        .report
        .active_set
        .iter()
        .copied()
        .zip(file.report.se_beta_active.iter().copied())
        .collect();
    for (j, name) in file.fixed_effects.iter().enumerate() {
        let b = fit.params.beta[j];
        match se.get(&j) {
            Some(s) => println!("  {name:<16} {b:>12.6}  (se {s:.6})"),
            None => println!("  {name:<16} {b:>12.6}"),
        }
    }
    println!("  sigma2           {:>12.6}", fit.params.sigma2);
    for (k, t) in fit.params.theta2.iter().enumerate() {
        println!("  theta2[{k}]        {t:>12.6}");
    }
}

fn exit_for(fit: &FitResult) -> i32 {
    if fit.converged {
        EXIT_OK
    } else {
        eprintln!("warning: solver stopped after {} iterations without converging", fit.iterations);
        EXIT_NOT_CONVERGED
    }
}

fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let cfg = resolve_config(a)?;
    let lambda = cfg
        .penalty
        .lambda
        .ok_or_else(|| Error::InvalidInput("fit needs --lambda or penalty.lambda in the config".into()))?;
    let loaded = load_csv(&a.data, &cfg.data)?;
    let spec = variance_spec(&cfg);
    let penalty = PenaltySpec::new(cfg.penalty.family, lambda)?;
    let init = lasso_init(&loaded.data, &spec, cfg.path.folds, cfg.seed, &cfg.solver)?;
    let fit = cgd_fit(&loaded.data, &spec, &penalty, &init.params, &cfg.solver)?;
    let code = exit_for(&fit);
    let file = FitFile::new(&cfg, &loaded, spec, fit, "fixed")?;
    let out = output_path(&a.out, Some(&cfg), "fit.json");
    write_atomic(&out, &file.to_json()?)?;
    print_fit(&file);
    println!("wrote {}", out.display());
    Ok(code)
}

/// Per-`λ` rows of a path report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub lambda: f64,
    pub neg2loglik: Option<f64>,
    pub df: Option<usize>,
    pub bic: f64,
    pub active_size: Option<usize>,
    pub converged: Option<bool>,
    pub selected: bool,
    pub n: usize,
}

pub fn read_path_csv(path: &Path) -> Result<Vec<PathRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Csv(format!("{}: {e}", path.display()))))
        .collect()
}

fn path_csv(rows: &[PathRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// `report.csv` → `report.selected.json`.
pub fn selected_fit_path(out: &Path) -> PathBuf {
    out.with_extension("selected.json")
}

fn cmd_path(a: &FitArgs) -> Result<i32> {
    let cfg = resolve_config(a)?;
    let loaded = load_csv(&a.data, &cfg.data)?;
    let spec = variance_spec(&cfg);
    let result = fit_path(&loaded.data, &spec, cfg.penalty.family, &cfg.solver, &cfg.path)?;
    let n = loaded.data.n();
    let rows: Vec<PathRow> = result
        .grid
        .iter()
        .zip(&result.fits)
        .zip(&result.bic_values)
        .enumerate()
        .map(|(k, ((lambda, fit), b))| PathRow {
            lambda: *lambda,
            neg2loglik: fit.as_ref().map(|f| 2.0 * f.neg_loglik),
            df: fit.as_ref().map(|f| degrees_of_freedom(f, &spec)),
            bic: *b,
            active_size: fit.as_ref().map(|f| f.active_size()),
            converged: fit.as_ref().map(|f| f.converged),
            selected: k == result.selected_index,
            n,
        })
        .collect();
    for (k, msg) in &result.failures {
        eprintln!("warning: fit at lambda = {} failed: {msg}", result.grid[*k]);
    }
    let selected = result.selected_fit().clone();
    let code = exit_for(&selected);
    let file = FitFile::new(&cfg, &loaded, spec, selected, "bic")?;
    let out = output_path(&a.out, Some(&cfg), "path.csv");
    let fit_out = selected_fit_path(&out);
    write_atomic(&fit_out, &file.to_json()?)?;
    write_atomic(&out, &path_csv(&rows)?)?;
    println!("{:>14} {:>14} {:>4} {:>14} {:>4}", "lambda", "-2loglik", "df", "BIC", "|S|");
    for r in &rows {
        println!(
            "{:>14.6e} {:>14.4} {:>4} {:>14.4} {:>4}{}",
            r.lambda,
            r.neg2loglik.unwrap_or(f64::NAN),
            r.df.map_or("-".into(), |d| d.to_string()),
            r.bic,
            r.active_size.map_or("-".into(), |d| d.to_string()),
            if r.selected { "  <- selected" } else { "" }
        );
    }
    print_fit(&file);
    println!("wrote {} and {}", out.display(), fit_out.display());
    Ok(code)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let scenario = SimulationScenario {
        p: a.p,
        rho: a.rho,
        replicates: a.reps,
        seed: a.seed,
        groups: a.groups,
        penalty: family_from(a.penalty, a.scad_a, PenaltyFamily::scad()),
        lambda_override: a.lambda,
        ..SimulationScenario::default()
    };
    let scenario = SimulationScenario {
        path: PathConfig {
            cold_start: !a.warm_start,
            ..scenario.path.clone()
        },
        ..scenario
    };
    scenario.validate()?;
    let (table, kv) = if a.compare {
        let c = compare_penalties(&scenario)?;
        (c.to_table(), c.to_key_value())
    } else {
        let s = run_scenario(&scenario)?;
        (s.to_table(), s.to_key_value())
    };
    print!("{table}");
    match &a.out {
        Some(path) => {
            write_atomic(path, &kv)?;
            println!("wrote {}", path.display());
        }
        None => print!("{kv}"),
    }
    Ok(EXIT_OK)
}

/// One output row per observation.
pub fn prediction_csv(
    loaded: &LoadedData,
    effects: &[DVector<f64>],
    fitted: &[DVector<f64>],
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string(), "row".to_string()];
    header.extend(loaded.random_effects.iter().map(|n| format!("b_{n}")));
    header.push("fitted".into());
    w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    for (g, label) in loaded.group_labels.iter().enumerate() {
        for (t, row) in loaded.rows[g].iter().enumerate() {
            let mut rec = vec![label.clone(), row.to_string()];
            rec.extend(effects[g].iter().map(|v| v.to_string()));
            rec.push(fitted[g][t].to_string());
            w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let file = FitFile::load(&a.fit)?;
    let loaded = load_csv(&a.data, &file.data_config())?;
    let known: BTreeSet<&str> = file.groups.iter().map(String::as_str).collect();
    if let Some(bad) = loaded.group_labels.iter().find(|l| !known.contains(l.as_str())) {
        return Err(Error::InvalidInput(format!("group '{bad}' does not appear in the fitted model")));
    }
    let spec = file.variance;
    let params = &file.fit.params;
    let effects = predict_random_effects(&loaded.data, &spec, params)?;
    let fitted = crate::inference::conditional_fitted(&loaded.data, &params.beta, &effects)?;
    let pe = prediction_error(&loaded.data, &params.beta, &effects)?;
    let out = output_path(&a.out, None, "predictions.csv");
    write_atomic(&out, &prediction_csv(&loaded, &effects, &fitted)?)?;
    println!("prediction error (conditional mean squared error) = {pe:.6}");
    println!("wrote {}", out.display());
    Ok(EXIT_OK)
}

/// Design matrices with named columns, for callers that build data in memory.
pub fn stack_columns(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, columns.len(), |r, c| columns[c][r])
}
