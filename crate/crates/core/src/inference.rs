//! Sandwich covariances and random-effect prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hess_eta, GroupFactors, MixedModelData, ModelParameters, VarianceSpec, SIGMA2_FLOOR};
use crate::penalty::PenaltySpec;
use crate::solver::{FitResult, SolverConfig};

/// How the prediction error in reports is defined.
pub const PE_DEFINITION: &str = "conditional in-sample mean squared error";

const RIDGE: f64 = 1e-8;
/// `θ²_k` at or below this fraction of `σ̂²` counts as on the boundary.
const BOUNDARY_RATIO: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCovariance {
    /// Coordinates of `β` the matrix refers to, in order.
    pub active_set: Vec<usize>,
    pub matrix: DMatrix<f64>,
    /// The bracket `H + nW` was singular and a ridge term was added.
    pub ridge: bool,
}

impl SandwichCovariance {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// `(H + nW)⁻¹ S (H + nW)⁻¹` over the active set, where `H = Σ_i X_iᵀV_i⁻¹X_i`
/// is the `β`-Hessian of `−l_n`, `W = diag(p'_λ(|β̂_j|)/|β̂_j|)` on penalized
/// coordinates, and `S = Σ_i (s_i − s̄)(s_i − s̄)ᵀ` is built from the
/// per-group scores `s_i = X_iᵀ V_i⁻¹ (y_i − X_i β̂)`.
pub fn sandwich_cov_beta(
    data: &MixedModelData,
    spec: &VarianceSpec,
    fit: &FitResult,
    penalty: &PenaltySpec,
) -> Result<SandwichCovariance> {
    let params = &fit.params;
    params.check_against(data, spec)?;
    let active = fit.active_set.clone();
    let k = active.len();
    if k == 0 {
        return Ok(SandwichCovariance {
            active_set: active,
            matrix: DMatrix::zeros(0, 0),
            ridge: false,
        });
    }
    let factors = GroupFactors::new(data, spec, &params.eta())?;
    let beta = DVector::from_column_slice(&params.beta);
    let mut h = DMatrix::zeros(k, k);
    let mut scores = Vec::with_capacity(data.n_groups());
    for (g, vinv) in data.groups().iter().zip(&factors.vinv) {
        let xa = g.x().select_columns(&active);
        let vx = vinv * &xa;
        h += xa.transpose() * &vx;
        let r = g.y() - g.x() * &beta;
        scores.push(vx.transpose() * r);
    }
    let groups = scores.len() as f64;
    let mean = scores.iter().fold(DVector::zeros(k), |acc, s| acc + s) / groups;
    let mut meat = DMatrix::zeros(k, k);
    for s in &scores {
        let c = s - &mean;
        meat += &c * c.transpose();
    }

    let n = data.n() as f64;
    let zero_clamp = SolverConfig::default().zero_clamp;
    for (a, &j) in active.iter().enumerate() {
        if data.is_penalized(j) {
            h[(a, a)] += n * penalty.lqa_weight_with(params.beta[j], zero_clamp)?;
        }
    }
    let (bread, ridge) = match h.clone().cholesky() {
        Some(c) => (c.inverse(), false),
        None => {
            let scale = h.diagonal().amax().max(1.0);
            let mut reg = h.clone();
            for a in 0..k {
                reg[(a, a)] += RIDGE * scale;
            }
            let inv = reg
                .try_inverse()
                .ok_or_else(|| Error::Domain("sandwich bracket is singular".into()))?;
            (inv, true)
        }
    };
    let cov = symmetrize(&bread * meat * &bread);
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sandwich covariance".into()));
    }
    Ok(SandwichCovariance {
        active_set: active,
        matrix: cov,
        ridge,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaCovariance {
    /// Entries for unavailable components are NaN.
    pub matrix: DMatrix<f64>,
    /// Component `k` of `η = (σ², θ²…)` is interior and has a covariance.
    pub available: Vec<bool>,
}

impl EtaCovariance {
    pub fn standard_errors(&self) -> Vec<Option<f64>> {
        (0..self.available.len())
            .map(|k| self.available[k].then(|| self.matrix[(k, k)].max(0.0).sqrt()))
            .collect()
    }
}

/// Inverse observed information `[∇²_η(−l_n)]⁻¹` restricted to the interior
/// components of `η̂`. Boundary components (`θ²_k = 0`, `σ² at its floor`)
/// are flagged unavailable rather than extrapolated.
pub fn cov_eta(data: &MixedModelData, spec: &VarianceSpec, params: &ModelParameters) -> Result<EtaCovariance> {
    params.check_against(data, spec)?;
    let eta = params.eta();
    let dim = eta.len();
    let available = interior_components(&eta);
    let idx: Vec<usize> = (0..dim).filter(|&k| available[k]).collect();
    let mut matrix = DMatrix::from_element(dim, dim, f64::NAN);
    if !idx.is_empty() {
        let h = hess_eta(data, params, spec)?;
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| h[(idx[a], idx[b])]);
        let inv = sub
            .cholesky()
            .ok_or_else(|| Error::Domain("variance-component information is not positive definite".into()))?
            .inverse();
        let inv = symmetrize(inv);
        for (a, &ka) in idx.iter().enumerate() {
            for (b, &kb) in idx.iter().enumerate() {
                matrix[(ka, kb)] = inv[(a, b)];
            }
        }
    }
    Ok(EtaCovariance { matrix, available })
}

fn interior_components(eta: &[f64]) -> Vec<bool> {
    eta.iter()
        .enumerate()
        .map(|(k, &v)| {
            if k == 0 {
                v > SIGMA2_FLOOR * (1.0 + 1e-6)
            } else {
                v > BOUNDARY_RATIO * eta[0]
            }
        })
        .collect()
}

/// Posterior mode `b̂_i = Ψ Z_iᵀ V_i⁻¹ (y_i − X_i β̂)` of each group's random
/// effects under the fitted Gaussian model.
pub fn predict_random_effects(
    data: &MixedModelData,
    spec: &VarianceSpec,
    params: &ModelParameters,
) -> Result<Vec<DVector<f64>>> {
    params.check_against(data, spec)?;
    let factors = GroupFactors::new(data, spec, &params.eta())?;
    let psi = DVector::from_vec(spec.psi_diag(&params.theta2));
    let beta = DVector::from_column_slice(&params.beta);
    let out: Vec<DVector<f64>> = data
        .groups()
        .iter()
        .zip(&factors.vinv)
        .map(|(g, vinv)| {
            let r = g.y() - g.x() * &beta;
            (g.z().transpose() * (vinv * r)).component_mul(&psi)
        })
        .collect();
    if out.iter().flat_map(|b| b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("predicted random effects".into()));
    }
    Ok(out)
}

fn check_effects(data: &MixedModelData, effects: &[DVector<f64>]) -> Result<()> {
    if effects.len() != data.n_groups() {
        return Err(Error::Dimension(format!(
            "{} predicted effect vectors for {} groups",
            effects.len(),
            data.n_groups()
        )));
    }
    if let Some(i) = effects.iter().position(|b| b.len() != data.q()) {
        return Err(Error::Dimension(format!(
            "group {i}: effect vector has length {}, expected {}",
            effects[i].len(),
            data.q()
        )));
    }
    Ok(())
}

/// `X_i β̂ + Z_i b̂_i` per group.
pub fn conditional_fitted(
    data: &MixedModelData,
    beta: &[f64],
    effects: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    check_effects(data, effects)?;
    if beta.len() != data.p() {
        return Err(Error::Dimension("coefficient vector does not match the design".into()));
    }
    let b = DVector::from_column_slice(beta);
    Ok(data
        .groups()
        .iter()
        .zip(effects)
        .map(|(g, e)| g.x() * &b + g.z() * e)
        .collect())
}

/// `(1/n) Σ_i ‖y_i − X_i β̂ − Z_i b̂_i‖²`.
pub fn prediction_error(data: &MixedModelData, beta: &[f64], effects: &[DVector<f64>]) -> Result<f64> {
    let fitted = conditional_fitted(data, beta, effects)?;
    let sse: f64 = data
        .groups()
        .iter()
        .zip(&fitted)
        .map(|(g, f)| (g.y() - f).norm_squared())
        .sum();
    Ok(sse / data.n() as f64)
}

/// Everything reported alongside a fit, in plain serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub active_set: Vec<usize>,
    pub cov_beta_active: Vec<Vec<f64>>,
    pub se_beta_active: Vec<f64>,
    pub sandwich_ridge: bool,
    /// `None` entries belong to boundary components.
    pub cov_eta: Vec<Vec<Option<f64>>>,
    pub se_eta: Vec<Option<f64>>,
    pub predicted_effects: Vec<Vec<f64>>,
    pub conditional_fitted: Vec<Vec<f64>>,
    pub prediction_error: f64,
    pub pe_definition: String,
    /// Problems that left parts of the report empty.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl InferenceReport {
    /// Builds the report. Failures of the covariance estimators are recorded
    /// as warnings; failures of prediction are errors.
    pub fn build(data: &MixedModelData, spec: &VarianceSpec, fit: &FitResult) -> Result<Self> {
        let mut warnings = Vec::new();
        let dim = spec.eta_dim();
        let (cov_beta_active, se_beta_active, sandwich_ridge) =
            match sandwich_cov_beta(data, spec, fit, &fit.penalty) {
                Ok(s) => {
                    if s.ridge {
                        warnings.push("sandwich bracket was singular; ridge added".into());
                    }
                    (rows(&s.matrix), s.standard_errors(), s.ridge)
                }
                Err(e) => {
                    warnings.push(format!("sandwich covariance unavailable: {e}"));
                    (Vec::new(), Vec::new(), false)
                }
            };
        let (cov_eta, se_eta) = match cov_eta(data, spec, &fit.params) {
            Ok(c) => {
                let m = (0..dim)
                    .map(|a| {
                        (0..dim)
                            .map(|b| (c.available[a] && c.available[b]).then(|| c.matrix[(a, b)]))
                            .collect()
                    })
                    .collect();
                (m, c.standard_errors())
            }
            Err(e) => {
                warnings.push(format!("variance-component covariance unavailable: {e}"));
                (vec![vec![None; dim]; dim], vec![None; dim])
            }
        };
        let effects = predict_random_effects(data, spec, &fit.params)?;
        let fitted = conditional_fitted(data, &fit.params.beta, &effects)?;
        let pe = prediction_error(data, &fit.params.beta, &effects)?;
        Ok(Self {
            active_set: fit.active_set.clone(),
            cov_beta_active,
            se_beta_active,
            sandwich_ridge,
            cov_eta,
            se_eta,
            predicted_effects: effects.iter().map(|b| b.as_slice().to_vec()).collect(),
            conditional_fitted: fitted.iter().map(|f| f.as_slice().to_vec()).collect(),
            prediction_error: pe,
            pe_definition: PE_DEFINITION.to_string(),
            warnings,
        })
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
