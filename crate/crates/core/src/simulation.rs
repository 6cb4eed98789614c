//! Replicated simulation studies: data generation, per-replicate fitting and
//! Monte-Carlo summaries in the layout of the usual variable-selection tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{prediction_error, predict_random_effects};
use crate::model::{GroupBlock, MixedModelData, VarianceSpec};
use crate::penalty::{PenaltyFamily, PenaltySpec};
use crate::rng::{stream_rng, Stream};
use crate::selection::{fit_path, PathConfig};
use crate::solver::{cgd_fit, lasso_init, FitResult, SolverConfig};

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationScenario {
    pub groups: usize,
    pub group_size: usize,
    pub p: usize,
    /// Size of the true support; the first `s` coefficients of `beta0`.
    pub s: usize,
    /// Leading true coefficients; padded with zeros up to `p`.
    pub beta0: Vec<f64>,
    pub rho: f64,
    pub theta2: f64,
    pub sigma2: f64,
    /// Random-effect columns are the first `q` columns of `X`.
    pub q: usize,
    pub penalty: PenaltyFamily,
    pub replicates: usize,
    pub seed: u64,
    /// Fit at this `λ` instead of selecting it by BIC.
    pub lambda_override: Option<f64>,
    /// Every `λ` starts from the cross-validated Lasso by default, on a
    /// 100-point grid: at `p > n` the sparse local minima of L1 can occupy a
    /// `λ` window narrower than one step of a 30-point grid.
    pub path: PathConfig,
    pub solver: SolverConfig,
}

impl Default for SimulationScenario {
    fn default() -> Self {
        Self {
            groups: 25,
            group_size: 6,
            p: 10,
            s: 5,
            beta0: vec![1.0, 2.0, 4.0, 3.0, 3.0],
            rho: 0.0,
            theta2: 0.56,
            sigma2: 0.25,
            q: 2,
            penalty: PenaltyFamily::scad(),
            replicates: 100,
            seed: 1,
            lambda_override: None,
            path: PathConfig {
                cold_start: true,
                n_points: 100,
                ..PathConfig::default()
            },
            solver: SolverConfig::default(),
        }
    }
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.groups == 0 || self.group_size == 0 {
            return bad("need at least one group and one observation per group".into());
        }
        if self.p < 2 {
            return bad(format!("p = {} leaves no covariate besides the intercept", self.p));
        }
        if self.s > self.p {
            return bad(format!("s = {} exceeds p = {}", self.s, self.p));
        }
        if self.beta0.len() > self.p {
            return bad(format!("{} true coefficients for p = {}", self.beta0.len(), self.p));
        }
        if self.beta0.iter().skip(self.s).any(|b| *b != 0.0)
            || self.beta0.iter().take(self.s).any(|b| *b == 0.0)
            || self.beta0.len() < self.s
        {
            return bad("beta0 must be nonzero exactly on its first s entries".into());
        }
        if self.q == 0 || self.q > self.p {
            return bad(format!("q = {} must lie in 1..=p", self.q));
        }
        if !(self.rho.abs() < 1.0) {
            return bad(format!("rho = {} outside (-1, 1)", self.rho));
        }
        if !(self.theta2 >= 0.0 && self.sigma2 > 0.0) || !self.theta2.is_finite() || !self.sigma2.is_finite() {
            return bad("variance components must be finite with theta2 >= 0 and sigma2 > 0".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        if let Some(l) = self.lambda_override {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("lambda override {l} must be finite and nonnegative"));
            }
        }
        PenaltySpec::new(self.penalty, 0.0).map_err(|e| Error::Scenario(e.to_string()))?;
        self.solver.validate()
    }

    pub fn true_beta(&self) -> Vec<f64> {
        let mut b = self.beta0.clone();
        b.resize(self.p, 0.0);
        b
    }

    pub fn variance_spec(&self) -> VarianceSpec {
        VarianceSpec::isotropic(self.q)
    }

    /// The first two coefficients are never penalized.
    pub fn unpenalized(&self) -> BTreeSet<usize> {
        (0..2.min(self.p)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub data: MixedModelData,
    pub beta0: Vec<f64>,
    pub effects: Vec<DVector<f64>>,
}

/// Draws replicate `replicate` of the scenario. Column 0 of `X` is the
/// intercept; the remaining columns are `N(0, C)` with `C_ij = ρ^|i−j|`,
/// generated through the exact Cholesky factor of that AR(1) matrix.
pub fn generate_dataset(scenario: &SimulationScenario, replicate: u64) -> Result<SimulatedDataset> {
    scenario.validate()?;
    let mut design_rng = stream_rng(scenario.seed, replicate, Stream::Design);
    let mut effect_rng = stream_rng(scenario.seed, replicate, Stream::RandomEffects);
    let mut noise_rng = stream_rng(scenario.seed, replicate, Stream::Noise);
    let (p, q, m) = (scenario.p, scenario.q, scenario.group_size);
    let beta0 = scenario.true_beta();
    let beta = DVector::from_column_slice(&beta0);
    let rho = scenario.rho;
    let innovation = (1.0 - rho * rho).sqrt();
    let theta = scenario.theta2.sqrt();
    let sigma = scenario.sigma2.sqrt();

    let mut groups = Vec::with_capacity(scenario.groups);
    let mut effects = Vec::with_capacity(scenario.groups);
    for _ in 0..scenario.groups {
        let mut x = DMatrix::zeros(m, p);
        for r in 0..m {
            x[(r, 0)] = 1.0;
            let mut prev = 0.0;
            for c in 1..p {
                let e: f64 = StandardNormal.sample(&mut design_rng);
                let v = if c == 1 { e } else { rho * prev + innovation * e };
                x[(r, c)] = v;
                prev = v;
            }
        }
        let z = x.columns(0, q).into_owned();
        let b = DVector::from_fn(q, |_, _| theta * Distribution::<f64>::sample(&StandardNormal, &mut effect_rng));
        let eps = DVector::from_fn(m, |_, _| sigma * Distribution::<f64>::sample(&StandardNormal, &mut noise_rng));
        let y = &x * &beta + &z * &b + eps;
        groups.push(GroupBlock::new(y, x, z)?);
        effects.push(b);
    }
    let data = MixedModelData::new(groups, scenario.unpenalized())?;
    Ok(SimulatedDataset { data, beta0, effects })
}

/// What one replicate contributes to the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub theta2: Vec<f64>,
    pub active_size: usize,
    pub true_positives: usize,
    /// The estimated support equals the true one.
    pub exact_support: bool,
    pub prediction_error: f64,
    pub converged: bool,
    pub max_objective_increase: f64,
}

fn path_config_for(scenario: &SimulationScenario, replicate: u64) -> PathConfig {
    PathConfig {
        seed: scenario
            .seed
            .wrapping_add(replicate.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        ..scenario.path.clone()
    }
}

fn fit_replicate(
    scenario: &SimulationScenario,
    family: PenaltyFamily,
    set: &SimulatedDataset,
    replicate: u64,
) -> Result<FitResult> {
    let spec = scenario.variance_spec();
    let path = path_config_for(scenario, replicate);
    match scenario.lambda_override {
        Some(lambda) => {
            let init = lasso_init(&set.data, &spec, path.folds, path.seed, &scenario.solver)?;
            let pen = PenaltySpec::new(family, lambda)?;
            cgd_fit(&set.data, &spec, &pen, &init.params, &scenario.solver)
        }
        None => {
            let result = fit_path(&set.data, &spec, family, &scenario.solver, &path)?;
            Ok(result.selected_fit().clone())
        }
    }
}

fn outcome(
    scenario: &SimulationScenario,
    set: &SimulatedDataset,
    fit: &FitResult,
    replicate: u64,
) -> Result<ReplicateOutcome> {
    let spec = scenario.variance_spec();
    let effects = predict_random_effects(&set.data, &spec, &fit.params)?;
    let pe = prediction_error(&set.data, &fit.params.beta, &effects)?;
    let true_support: BTreeSet<usize> = (0..scenario.s).collect();
    let support: BTreeSet<usize> = fit.active_set.iter().copied().collect();
    Ok(ReplicateOutcome {
        replicate,
        lambda: fit.lambda(),
        beta: fit.params.beta.clone(),
        sigma2: fit.params.sigma2,
        theta2: fit.params.theta2.clone(),
        active_size: support.len(),
        true_positives: support.intersection(&true_support).count(),
        exact_support: support == true_support,
        prediction_error: pe,
        converged: fit.converged,
        max_objective_increase: fit.max_objective_increase,
    })
}

/// Fits every replicate in parallel; results come back in replicate order.
pub fn run_replicates(scenario: &SimulationScenario) -> Result<Vec<Result<ReplicateOutcome>>> {
    scenario.validate()?;
    Ok((0..scenario.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let set = generate_dataset(scenario, r)?;
            let fit = fit_replicate(scenario, scenario.penalty, &set, r)?;
            outcome(scenario, &set, &fit, r)
        })
        .collect())
}

/// Mean, SD (divisor `R`) and, where a true value exists, MSE over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub mse: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64], truth: Option<f64>) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().sum::<f64>() / r;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r;
        let mse = truth.map(|t| values.iter().map(|v| (v - t).powi(2)).sum::<f64>() / r);
        Self {
            mean,
            sd: var.sqrt(),
            mse,
        }
    }

    fn average(stats: &[Stat]) -> Self {
        let k = stats.len() as f64;
        Self {
            mean: stats.iter().map(|s| s.mean).sum::<f64>() / k,
            sd: stats.iter().map(|s| s.sd).sum::<f64>() / k,
            mse: Some(stats.iter().map(|s| s.mse.unwrap_or(0.0)).sum::<f64>() / k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub penalty: String,
    pub p: usize,
    pub rho: f64,
    pub groups: usize,
    pub replicates: usize,
    pub successful: usize,
    /// `(replicate, message)` for every failed replicate.
    pub failures: Vec<(u64, String)>,
    /// SDs are meaningful only with at least two replicates.
    pub sd_defined: bool,
    pub active_size: Stat,
    pub true_positives: Stat,
    pub prediction_error: Stat,
    /// One entry per true-support coefficient.
    pub beta_active: Vec<Stat>,
    /// Per-coordinate statistics averaged over the true zeros.
    pub beta_inactive: Option<Stat>,
    pub sigma2: Stat,
    /// One entry per `θ²` parameter.
    pub theta2: Vec<Stat>,
    pub support_recovery_rate: f64,
    pub nonconverged: usize,
    pub max_objective_increase: f64,
    pub pe_definition: String,
}

pub fn summarize(scenario: &SimulationScenario, results: Vec<Result<ReplicateOutcome>>) -> Result<ScenarioSummary> {
    let total = results.len();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => ok.push(o),
            Err(e) => failures.push((r as u64, e.to_string())),
        }
    }
    if ok.is_empty() || failures.len() as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::Scenario(format!(
            "{} of {} replicates failed{}",
            failures.len(),
            total,
            failures
                .first()
                .map(|(r, m)| format!(" (replicate {r}: {m})"))
                .unwrap_or_default()
        )));
    }
    let beta0 = scenario.true_beta();
    let col = |f: &dyn Fn(&ReplicateOutcome) -> f64| ok.iter().map(f).collect::<Vec<f64>>();
    let coord = |j: usize| Stat::of(&col(&|o| o.beta[j]), Some(beta0[j]));
    let beta_active = (0..scenario.s).map(coord).collect();
    let inactive: Vec<Stat> = (scenario.s..scenario.p).map(coord).collect();
    let theta_dim = scenario.variance_spec().theta_dim();
    Ok(ScenarioSummary {
        penalty: scenario.penalty.name().to_string(),
        p: scenario.p,
        rho: scenario.rho,
        groups: scenario.groups,
        replicates: total,
        successful: ok.len(),
        failures,
        sd_defined: ok.len() >= 2,
        active_size: Stat::of(&col(&|o| o.active_size as f64), None),
        true_positives: Stat::of(&col(&|o| o.true_positives as f64), None),
        prediction_error: Stat::of(&col(&|o| o.prediction_error), None),
        beta_active,
        beta_inactive: (!inactive.is_empty()).then(|| Stat::average(&inactive)),
        sigma2: Stat::of(&col(&|o| o.sigma2), Some(scenario.sigma2)),
        theta2: (0..theta_dim)
            .map(|k| Stat::of(&col(&|o| o.theta2[k]), Some(scenario.theta2)))
            .collect(),
        support_recovery_rate: ok.iter().filter(|o| o.exact_support).count() as f64 / ok.len() as f64,
        nonconverged: ok.iter().filter(|o| !o.converged).count(),
        max_objective_increase: ok
            .iter()
            .map(|o| o.max_objective_increase)
            .fold(f64::NEG_INFINITY, f64::max),
        pe_definition: crate::inference::PE_DEFINITION.to_string(),
    })
}

pub fn run_scenario(scenario: &SimulationScenario) -> Result<ScenarioSummary> {
    let results = run_replicates(scenario)?;
    summarize(scenario, results)
}

/// SCAD and L1 on identical datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub scad: ScenarioSummary,
    pub l1: ScenarioSummary,
    /// Replicates where both fits succeeded.
    pub pairs: usize,
    /// Statistics of the per-replicate difference L1 − SCAD.
    pub diff_active_size: Stat,
    pub diff_true_positives: Stat,
    /// Difference of `‖β̂ − β₀‖²`.
    pub diff_squared_error: Stat,
    pub diff_prediction_error: Stat,
}

pub fn compare_penalties(base: &SimulationScenario) -> Result<PairedComparison> {
    base.validate()?;
    let scad_scenario = SimulationScenario {
        penalty: match base.penalty {
            f @ PenaltyFamily::Scad { .. } => f,
            _ => PenaltyFamily::scad(),
        },
        ..base.clone()
    };
    let l1_scenario = SimulationScenario {
        penalty: PenaltyFamily::L1,
        ..base.clone()
    };
    let pairs: Vec<(Result<ReplicateOutcome>, Result<ReplicateOutcome>)> = (0..base.replicates as u64)
        .into_par_iter()
        .map(|r| match generate_dataset(base, r) {
            Ok(set) => {
                let a = fit_replicate(&scad_scenario, scad_scenario.penalty, &set, r)
                    .and_then(|f| outcome(&scad_scenario, &set, &f, r));
                let b = fit_replicate(&l1_scenario, PenaltyFamily::L1, &set, r)
                    .and_then(|f| outcome(&l1_scenario, &set, &f, r));
                (a, b)
            }
            Err(e) => {
                let msg = e.to_string();
                (Err(Error::Scenario(msg.clone())), Err(Error::Scenario(msg)))
            }
        })
        .collect();

    let beta0 = base.true_beta();
    let sq_err = |o: &ReplicateOutcome| o.beta.iter().zip(&beta0).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let mut d_size = Vec::new();
    let mut d_tp = Vec::new();
    let mut d_se = Vec::new();
    let mut d_pe = Vec::new();
    for (a, b) in &pairs {
        if let (Ok(s), Ok(l)) = (a, b) {
            d_size.push(l.active_size as f64 - s.active_size as f64);
            d_tp.push(l.true_positives as f64 - s.true_positives as f64);
            d_se.push(sq_err(l) - sq_err(s));
            d_pe.push(l.prediction_error - s.prediction_error);
        }
    }
    let (scad_results, l1_results): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let scad = summarize(&scad_scenario, scad_results)?;
    let l1 = summarize(&l1_scenario, l1_results)?;
    Ok(PairedComparison {
        scad,
        l1,
        pairs: d_size.len(),
        diff_active_size: Stat::of(&d_size, None),
        diff_true_positives: Stat::of(&d_tp, None),
        diff_squared_error: Stat::of(&d_se, None),
        diff_prediction_error: Stat::of(&d_pe, None),
    })
}

/// `v` with 10 significant digits.
/// Picks one statistic of a column for a table row.
type Cell<'a> = dyn Fn(&Stat) -> Option<f64> + 'a;

pub fn sig10(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9e}")
    } else {
        v.to_string()
    }
}

fn push_stat(out: &mut String, key: &str, s: &Stat, sd_defined: bool) {
    let _ = writeln!(out, "{key}.mean = {}", sig10(s.mean));
    if sd_defined {
        let _ = writeln!(out, "{key}.sd = {}", sig10(s.sd));
    } else {
        let _ = writeln!(out, "{key}.sd = NA");
    }
    if let Some(m) = s.mse {
        let _ = writeln!(out, "{key}.mse = {}", sig10(m));
    }
}

impl ScenarioSummary {
    /// Machine-readable `key = value` lines, one statistic per line.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "penalty = {}", self.penalty);
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "rho = {}", sig10(self.rho));
        let _ = writeln!(out, "groups = {}", self.groups);
        let _ = writeln!(out, "replicates = {}", self.replicates);
        let _ = writeln!(out, "successful = {}", self.successful);
        let _ = writeln!(out, "failed = {}", self.failures.len());
        let _ = writeln!(out, "nonconverged = {}", self.nonconverged);
        let _ = writeln!(out, "sd_defined = {}", self.sd_defined);
        let _ = writeln!(out, "pe_definition = {}", self.pe_definition);
        let _ = writeln!(out, "beta_n.definition = average of per-coordinate statistics over true zeros");
        push_stat(&mut out, "active_size", &self.active_size, self.sd_defined);
        push_stat(&mut out, "true_positives", &self.true_positives, self.sd_defined);
        push_stat(&mut out, "pe", &self.prediction_error, self.sd_defined);
        for (j, s) in self.beta_active.iter().enumerate() {
            push_stat(&mut out, &format!("beta{}", j + 1), s, self.sd_defined);
        }
        if let Some(s) = &self.beta_inactive {
            push_stat(&mut out, "beta_n", s, self.sd_defined);
        }
        push_stat(&mut out, "sigma2", &self.sigma2, self.sd_defined);
        for (k, s) in self.theta2.iter().enumerate() {
            let key = if self.theta2.len() == 1 { "theta2".to_string() } else { format!("theta2_{}", k + 1) };
            push_stat(&mut out, &key, s, self.sd_defined);
        }
        let _ = writeln!(out, "support_recovery_rate = {}", sig10(self.support_recovery_rate));
        let _ = writeln!(out, "max_objective_increase = {}", sig10(self.max_objective_increase));
        out
    }

    /// Fixed-width table with rows Mean/SD/MSE.
    pub fn to_table(&self) -> String {
        let mut headers = vec!["|S|".to_string(), "TP".into(), "PE".into()];
        let mut cols: Vec<&Stat> = vec![&self.active_size, &self.true_positives, &self.prediction_error];
        for (j, s) in self.beta_active.iter().enumerate() {
            headers.push(format!("b{}", j + 1));
            cols.push(s);
        }
        if let Some(s) = &self.beta_inactive {
            headers.push("bN".into());
            cols.push(s);
        }
        headers.push("s2".into());
        cols.push(&self.sigma2);
        for (k, s) in self.theta2.iter().enumerate() {
            headers.push(if self.theta2.len() == 1 { "t2".into() } else { format!("t2_{}", k + 1) });
            cols.push(s);
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} (p = {}, rho = {}, I = {}, {} of {} replicates)",
            self.penalty.to_uppercase(),
            self.p,
            self.rho,
            self.groups,
            self.successful,
            self.replicates
        );
        let _ = write!(out, "{:<5}", "");
        for h in &headers {
            let _ = write!(out, "{h:>8}");
        }
        out.push('\n');
        let rows: [(&str, &Cell<'_>); 3] = [
            ("Mean", &|s| Some(s.mean)),
            ("SD", &|s| self.sd_defined.then_some(s.sd)),
            ("MSE", &|s| s.mse),
        ];
        for (name, get) in rows {
            let _ = write!(out, "{name:<5}");
            for s in &cols {
                match get(s) {
                    Some(v) => {
                        let _ = write!(out, "{v:>8.2}");
                    }
                    None => {
                        let _ = write!(out, "{:>8}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

impl PairedComparison {
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        for (prefix, s) in [("scad", &self.scad), ("l1", &self.l1)] {
            for line in s.to_key_value().lines() {
                let _ = writeln!(out, "{prefix}.{line}");
            }
        }
        let _ = writeln!(out, "paired.count = {}", self.pairs);
        let sd = self.pairs >= 2;
        push_stat(&mut out, "paired.diff_active_size", &self.diff_active_size, sd);
        push_stat(&mut out, "paired.diff_true_positives", &self.diff_true_positives, sd);
        push_stat(&mut out, "paired.diff_squared_error", &self.diff_squared_error, sd);
        push_stat(&mut out, "paired.diff_pe", &self.diff_prediction_error, sd);
        out
    }

    pub fn to_table(&self) -> String {
        format!(
            "{}\n{}\nL1 - SCAD over {} paired replicates: |S| {:+.2}, TP {:+.2}, squared error {:+.4}, PE {:+.4}\n",
            self.scad.to_table(),
            self.l1.to_table(),
            self.pairs,
            self.diff_active_size.mean,
            self.diff_true_positives.mean,
            self.diff_squared_error.mean,
            self.diff_prediction_error.mean
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn column(data: &MixedModelData, j: usize) -> Vec<f64> {
        data.stacked_x().column(j).iter().copied().collect()
    }

    #[test]
    fn design_layout() {
        let sc = SimulationScenario::default();
        let set = generate_dataset(&sc, 0).unwrap();
        let d = &set.data;
        assert_eq!((d.n(), d.p(), d.q(), d.n_groups()), (150, 10, 2, 25));
        assert!(column(d, 0).iter().all(|v| *v == 1.0));
        for g in d.groups() {
            assert_eq!(g.z(), &g.x().columns(0, 2).into_owned());
        }
        assert_eq!(d.unpenalized(), &BTreeSet::from([0, 1]));
        assert_eq!(set.beta0, vec![1.0, 2.0, 4.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn correlation_structure() {
        let independent = generate_dataset(&SimulationScenario::default(), 3).unwrap();
        for (a, b) in [(1, 2), (2, 3), (4, 7)] {
            let c = corr(&column(&independent.data, a), &column(&independent.data, b));
            assert!(c.abs() < 0.15, "rho=0 corr({a},{b}) = {c}");
        }
        let sc = SimulationScenario {
            rho: 0.5,
            ..SimulationScenario::default()
        };
        let correlated = generate_dataset(&sc, 3).unwrap();
        let c = corr(&column(&correlated.data, 1), &column(&correlated.data, 2));
        assert!((c - 0.5).abs() < 0.15, "corr = {c}");
    }

    #[test]
    fn reproducible_per_replicate() {
        let sc = SimulationScenario::default();
        let a = generate_dataset(&sc, 5).unwrap();
        let b = generate_dataset(&sc, 5).unwrap();
        assert_eq!(a.data.stacked_y(), b.data.stacked_y());
        assert_eq!(a.data.stacked_x(), b.data.stacked_x());
        let c = generate_dataset(&sc, 6).unwrap();
        assert_ne!(a.data.stacked_y(), c.data.stacked_y());
    }

    #[test]
    fn invalid_scenarios() {
        let base = SimulationScenario::default();
        for sc in [
            SimulationScenario { s: 11, ..base.clone() },
            SimulationScenario { p: 4, ..base.clone() },
            SimulationScenario { rho: 1.0, ..base.clone() },
            SimulationScenario { replicates: 0, ..base.clone() },
            SimulationScenario { q: 0, ..base.clone() },
            SimulationScenario { sigma2: 0.0, ..base.clone() },
        ] {
            assert!(matches!(sc.validate(), Err(Error::Scenario(_))), "{sc:?}");
        }
    }

    #[test]
    fn stat_mse_decomposes() {
        let v = [0.9, 1.3, 1.1, 0.7, 1.25];
        let s = Stat::of(&v, Some(1.05));
        let bias = s.mean - 1.05;
        assert!((s.mse.unwrap() - (bias * bias + s.sd * s.sd)).abs() < 1e-12);
        let one = Stat::of(&[2.0], Some(1.0));
        assert_eq!((one.mean, one.sd, one.mse), (2.0, 0.0, Some(1.0)));
    }

    fn fake(r: u64, size: usize, tp: usize) -> Result<ReplicateOutcome> {
        Ok(ReplicateOutcome {
            replicate: r,
            lambda: 0.1,
            beta: vec![1.0, 2.0, 4.0, 3.0, 3.0 + r as f64 * 0.01, 0.0, 0.0, 0.0, 0.0, 0.0],
            sigma2: 0.25,
            theta2: vec![0.5],
            active_size: size,
            true_positives: tp,
            exact_support: size == 5 && tp == 5,
            prediction_error: 0.2,
            converged: true,
            max_objective_increase: -1.0,
        })
    }

    #[test]
    fn summary_failure_rule_and_order_invariance() {
        let sc = SimulationScenario::default();
        let mut results: Vec<_> = (0..10).map(|r| fake(r, 5 + (r % 2) as usize, 5)).collect();
        let a = summarize(&sc, results.iter().map(|r| r.as_ref().cloned().map_err(|_| Error::PathFailed)).collect()).unwrap();
        results.reverse();
        let b = summarize(&sc, results).unwrap();
        assert!((a.active_size.mean - b.active_size.mean).abs() < 1e-15);
        assert!((a.beta_active[4].sd - b.beta_active[4].sd).abs() < 1e-15);
        assert_eq!(a.support_recovery_rate, 0.5);

        let mut one_bad: Vec<_> = (0..10).map(|r| fake(r, 5, 5)).collect();
        one_bad[3] = Err(Error::PathFailed);
        let s = summarize(&sc, one_bad).unwrap();
        assert_eq!((s.successful, s.failures.len()), (9, 1));
        let mut two_bad: Vec<_> = (0..10).map(|r| fake(r, 5, 5)).collect();
        two_bad[3] = Err(Error::PathFailed);
        two_bad[4] = Err(Error::PathFailed);
        assert!(matches!(summarize(&sc, two_bad), Err(Error::Scenario(_))));
    }

    #[test]
    fn single_replicate_flags_sd() {
        let sc = SimulationScenario::default();
        let s = summarize(&sc, vec![fake(0, 5, 5)]).unwrap();
        assert!(!s.sd_defined);
        assert!(s.to_key_value().contains("active_size.sd = NA"));
        assert!(s.to_table().contains("SD"));
    }

    #[test]
    fn small_scenario_end_to_end() {
        let sc = SimulationScenario {
            replicates: 3,
            seed: 11,
            ..SimulationScenario::default()
        };
        let s = run_scenario(&sc).unwrap();
        assert_eq!(s.successful, 3);
        assert!(s.true_positives.mean <= s.active_size.mean);
        assert!(s.max_objective_increase <= 1e-10);
        let again = run_scenario(&sc).unwrap();
        assert_eq!(s.to_key_value(), again.to_key_value());
    }
}
