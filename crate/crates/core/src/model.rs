//! Grouped linear mixed-model data and the marginal Gaussian likelihood.
//!
//! For group `i` the response satisfies `y_i ~ N(X_i β, V_i)` with
//! `V_i = Z_i Ψ_θ Z_iᵀ + σ² I`. Everything here works per group: each `V_i`
//! is small, so it is factorized on its own and the stacked block-diagonal
//! matrix is never formed (except by [`neg_log_likelihood_stacked`], which
//! exists as a cross-check).
//!
//! Variance components are held on the variance scale, `η = (σ², θ²…)`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard lower bound on the error variance.
pub const SIGMA2_FLOOR: f64 = 1e-10;

/// One group of observations: response, fixed-effect design and
/// random-effect design, all with the same number of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBlock {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

impl GroupBlock {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n_i = y.len();
        if n_i == 0 {
            return Err(Error::InvalidInput("group has no observations".into()));
        }
        if x.nrows() != n_i || z.nrows() != n_i {
            return Err(Error::Dimension(format!(
                "group with {} responses has X with {} rows and Z with {} rows",
                n_i,
                x.nrows(),
                z.nrows()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fixed-effect design".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("random-effect design".into()));
        }
        Ok(Self { y, x, z })
    }

    /// Builds a block from row-major slices.
    pub fn from_rows(y: &[f64], x_rows: &[Vec<f64>], z_rows: &[Vec<f64>]) -> Result<Self> {
        let n_i = y.len();
        if x_rows.len() != n_i || z_rows.len() != n_i {
            return Err(Error::Dimension(format!(
                "{} responses but {} X rows and {} Z rows",
                n_i,
                x_rows.len(),
                z_rows.len()
            )));
        }
        let p = x_rows.first().map_or(0, Vec::len);
        let q = z_rows.first().map_or(0, Vec::len);
        if x_rows.iter().any(|r| r.len() != p) || z_rows.iter().any(|r| r.len() != q) {
            return Err(Error::Dimension("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(n_i, p, |r, c| x_rows[r][c]);
        let z = DMatrix::from_fn(n_i, q, |r, c| z_rows[r][c]);
        Self::new(DVector::from_column_slice(y), x, z)
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn residual(&self, beta: &[f64]) -> DVector<f64> {
        &self.y - &self.x * DVector::from_column_slice(beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedModelData {
    groups: Vec<GroupBlock>,
    n: usize,
    p: usize,
    q: usize,
    unpenalized: BTreeSet<usize>,
}

impl MixedModelData {
    /// `unpenalized` holds zero-based column indices that are never penalized.
    pub fn new(groups: Vec<GroupBlock>, unpenalized: BTreeSet<usize>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| Error::InvalidInput("no groups".into()))?;
        let p = first.x.ncols();
        let q = first.z.ncols();
        if p == 0 {
            return Err(Error::InvalidInput("no fixed-effect columns".into()));
        }
        if q == 0 {
            return Err(Error::InvalidInput("no random-effect columns".into()));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.x.ncols() != p || g.z.ncols() != q {
                return Err(Error::Dimension(format!(
                    "group {i} has {}×{} X and {}×{} Z, expected p={p}, q={q}",
                    g.x.nrows(),
                    g.x.ncols(),
                    g.z.nrows(),
                    g.z.ncols()
                )));
            }
        }
        if let Some(&j) = unpenalized.iter().find(|&&j| j >= p) {
            return Err(Error::InvalidInput(format!(
                "unpenalized index {j} out of range for p={p}"
            )));
        }
        let n = groups.iter().map(GroupBlock::len).sum();
        Ok(Self {
            groups,
            n,
            p,
            q,
            unpenalized,
        })
    }

    pub fn groups(&self) -> &[GroupBlock] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn unpenalized(&self) -> &BTreeSet<usize> {
        &self.unpenalized
    }

    pub fn is_penalized(&self, j: usize) -> bool {
        !self.unpenalized.contains(&j)
    }

    /// Starting row of each group in the stacked layout.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.groups
            .iter()
            .map(|g| {
                let o = acc;
                acc += g.len();
                o
            })
            .collect()
    }

    pub fn stacked_x(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.p);
        let mut row = 0;
        for g in &self.groups {
            out.rows_mut(row, g.len()).copy_from(&g.x);
            row += g.len();
        }
        out
    }

    pub fn stacked_y(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        let mut row = 0;
        for g in &self.groups {
            out.rows_mut(row, g.len()).copy_from(&g.y);
            row += g.len();
        }
        out
    }

    /// Same data with every response multiplied by `c`.
    pub fn scale_response(&self, c: f64) -> Result<Self> {
        let groups = self
            .groups
            .iter()
            .map(|g| GroupBlock::new(&g.y * c, g.x.clone(), g.z.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups, self.unpenalized.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceStructure {
    /// `Ψ = θ² I_q`
    Isotropic,
    /// `Ψ = diag(θ₁², …, θ_q²)`
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarianceSpec {
    pub structure: VarianceStructure,
    pub q: usize,
}

impl VarianceSpec {
    pub fn isotropic(q: usize) -> Self {
        Self {
            structure: VarianceStructure::Isotropic,
            q,
        }
    }

    pub fn diagonal(q: usize) -> Self {
        Self {
            structure: VarianceStructure::Diagonal,
            q,
        }
    }

    /// Number of parameters in `Ψ_θ`.
    pub fn theta_dim(&self) -> usize {
        match self.structure {
            VarianceStructure::Isotropic => 1,
            VarianceStructure::Diagonal => self.q,
        }
    }

    /// `dim(η) = q* + 1`.
    pub fn eta_dim(&self) -> usize {
        self.theta_dim() + 1
    }

    pub fn psi_diag(&self, theta2: &[f64]) -> Vec<f64> {
        match self.structure {
            VarianceStructure::Isotropic => vec![theta2[0]; self.q],
            VarianceStructure::Diagonal => theta2.to_vec(),
        }
    }

    /// Random-effect columns whose variance is `θ²_k`.
    fn component_columns(&self, k: usize) -> std::ops::Range<usize> {
        match self.structure {
            VarianceStructure::Isotropic => 0..self.q,
            VarianceStructure::Diagonal => k..k + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub theta2: Vec<f64>,
}

impl ModelParameters {
    pub fn new(beta: Vec<f64>, sigma2: f64, theta2: Vec<f64>) -> Result<Self> {
        let params = Self {
            beta,
            sigma2,
            theta2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("coefficients".into()));
        }
        if !self.sigma2.is_finite() || self.sigma2 < SIGMA2_FLOOR {
            return Err(Error::Domain(format!(
                "sigma2 = {} must be finite and at least {SIGMA2_FLOOR:e}",
                self.sigma2
            )));
        }
        if self.theta2.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Domain(format!(
                "theta2 = {:?} must be finite and nonnegative",
                self.theta2
            )));
        }
        Ok(())
    }

    /// `(σ², θ²₁, …)`.
    pub fn eta(&self) -> Vec<f64> {
        let mut eta = Vec::with_capacity(self.theta2.len() + 1);
        eta.push(self.sigma2);
        eta.extend_from_slice(&self.theta2);
        eta
    }

    pub fn set_eta(&mut self, eta: &[f64]) {
        self.sigma2 = eta[0];
        self.theta2.copy_from_slice(&eta[1..]);
    }

    pub(crate) fn check_against(&self, data: &MixedModelData, spec: &VarianceSpec) -> Result<()> {
        self.validate()?;
        if self.beta.len() != data.p() {
            return Err(Error::Dimension(format!(
                "beta has length {}, data has p={}",
                self.beta.len(),
                data.p()
            )));
        }
        if spec.q != data.q() {
            return Err(Error::Dimension(format!(
                "variance spec has q={}, data has q={}",
                spec.q,
                data.q()
            )));
        }
        if self.theta2.len() != spec.theta_dim() {
            return Err(Error::Dimension(format!(
                "theta2 has length {}, structure needs {}",
                self.theta2.len(),
                spec.theta_dim()
            )));
        }
        Ok(())
    }
}

fn covariance_from(z: &DMatrix<f64>, sigma2: f64, psi: &[f64]) -> DMatrix<f64> {
    let n_i = z.nrows();
    let mut v = DMatrix::from_diagonal_element(n_i, n_i, sigma2);
    for (c, &psi_c) in psi.iter().enumerate() {
        if psi_c == 0.0 {
            continue;
        }
        let col = z.column(c);
        for b in 0..n_i {
            for a in 0..n_i {
                v[(a, b)] += psi_c * col[a] * col[b];
            }
        }
    }
    v
}

/// `V_i = Z_i Ψ_θ Z_iᵀ + σ² I`.
pub fn group_covariance(
    block: &GroupBlock,
    params: &ModelParameters,
    spec: &VarianceSpec,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    if params.theta2.len() != spec.theta_dim() || block.z.ncols() != spec.q {
        return Err(Error::Dimension(
            "variance parameters do not match the random-effect design".into(),
        ));
    }
    let v = covariance_from(&block.z, params.sigma2, &spec.psi_diag(&params.theta2));
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("marginal covariance".into()));
    }
    Ok(v)
}

/// Smallest accepted `L_kk² / max_k V_kk` in a covariance factorization;
/// below it `V` is singular to working precision.
const PIVOT_RATIO: f64 = 1e-14;

fn factor_covariance(v: DMatrix<f64>, group: usize) -> Result<Cholesky<f64, Dyn>> {
    let scale = v.diagonal().amax();
    let chol = v.cholesky().ok_or(Error::NonPdCovariance { group })?;
    let min_pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, d| m.min(d * d));
    if !(min_pivot > PIVOT_RATIO * scale) {
        return Err(Error::NonPdCovariance { group });
    }
    Ok(chol)
}

/// Per-group inverse covariance and log-determinant at a fixed `η`.
#[derive(Debug, Clone)]
pub(crate) struct GroupFactors {
    pub vinv: Vec<DMatrix<f64>>,
    pub logdet: Vec<f64>,
}

impl GroupFactors {
    pub fn new(data: &MixedModelData, spec: &VarianceSpec, eta: &[f64]) -> Result<Self> {
        let psi = spec.psi_diag(&eta[1..]);
        let mut vinv = Vec::with_capacity(data.n_groups());
        let mut logdet = Vec::with_capacity(data.n_groups());
        for (i, g) in data.groups().iter().enumerate() {
            let v = covariance_from(&g.z, eta[0], &psi);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("covariance of group {i}")));
            }
            let chol = factor_covariance(v, i)?;
            let ld = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            if !ld.is_finite() {
                return Err(Error::NonPdCovariance { group: i });
            }
            logdet.push(ld);
            vinv.push(chol.inverse());
        }
        Ok(Self { vinv, logdet })
    }
}

/// `−l_n` evaluated from per-group residuals at variance components `eta`.
pub(crate) fn nll_from_residuals(
    data: &MixedModelData,
    spec: &VarianceSpec,
    eta: &[f64],
    residuals: &[DVector<f64>],
) -> Result<f64> {
    let psi = spec.psi_diag(&eta[1..]);
    let mut total = data.n() as f64 * (2.0 * PI).ln();
    for (i, (g, r)) in data.groups().iter().zip(residuals).enumerate() {
        let v = covariance_from(&g.z, eta[0], &psi);
        let chol = factor_covariance(v, i)?;
        let ld = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let w = chol.solve(r);
        total += ld + r.dot(&w);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("negative log-likelihood".into()));
    }
    Ok(0.5 * total)
}

pub(crate) fn residuals(data: &MixedModelData, beta: &[f64]) -> Vec<DVector<f64>> {
    let b = DVector::from_column_slice(beta);
    data.groups().iter().map(|g| &g.y - &g.x * &b).collect()
}

/// Marginal negative log-likelihood
/// `½ Σ_i [n_i log 2π + log|V_i| + r_iᵀ V_i⁻¹ r_i]`, `r_i = y_i − X_i β`.
pub fn neg_log_likelihood(
    data: &MixedModelData,
    params: &ModelParameters,
    spec: &VarianceSpec,
) -> Result<f64> {
    params.check_against(data, spec)?;
    nll_from_residuals(data, spec, &params.eta(), &residuals(data, &params.beta))
}

/// The same likelihood computed from the stacked `n × n` block-diagonal
/// covariance with a single dense factorization.
pub fn neg_log_likelihood_stacked(
    data: &MixedModelData,
    params: &ModelParameters,
    spec: &VarianceSpec,
) -> Result<f64> {
    params.check_against(data, spec)?;
    let n = data.n();
    let mut v = DMatrix::zeros(n, n);
    let mut row = 0;
    for g in data.groups() {
        let vi = group_covariance(g, params, spec)?;
        v.view_mut((row, row), (g.len(), g.len())).copy_from(&vi);
        row += g.len();
    }
    let r = data.stacked_y() - data.stacked_x() * DVector::from_column_slice(&params.beta);
    let chol = v.cholesky().ok_or(Error::NonPdCovariance { group: 0 })?;
    let ld = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(&r));
    Ok(0.5 * (n as f64 * (2.0 * PI).ln() + ld + quad))
}

/// `∇_β(−l_n) = −Σ_i X_iᵀ V_i⁻¹ r_i`.
pub fn grad_beta(
    data: &MixedModelData,
    params: &ModelParameters,
    spec: &VarianceSpec,
) -> Result<Vec<f64>> {
    params.check_against(data, spec)?;
    let factors = GroupFactors::new(data, spec, &params.eta())?;
    let res = residuals(data, &params.beta);
    let mut grad = DVector::zeros(data.p());
    for ((g, r), vinv) in data.groups().iter().zip(&res).zip(&factors.vinv) {
        grad -= g.x.transpose() * (vinv * r);
    }
    Ok(grad.as_slice().to_vec())
}

/// `∂V_i/∂η_k` for the group's random-effect design.
pub(crate) fn covariance_derivative(z: &DMatrix<f64>, spec: &VarianceSpec, k: usize) -> DMatrix<f64> {
    let n_i = z.nrows();
    if k == 0 {
        return DMatrix::identity(n_i, n_i);
    }
    let mut d = DMatrix::zeros(n_i, n_i);
    for c in spec.component_columns(k - 1) {
        let col = z.column(c);
        d += col * col.transpose();
    }
    d
}

/// Score of `−l_n` with respect to `(σ², θ²…)`:
/// `½ Σ_i [tr(V_i⁻¹ D_k) − r_iᵀ V_i⁻¹ D_k V_i⁻¹ r_i]`, `D_k = ∂V_i/∂η_k`.
pub fn grad_eta(
    data: &MixedModelData,
    params: &ModelParameters,
    spec: &VarianceSpec,
) -> Result<Vec<f64>> {
    params.check_against(data, spec)?;
    eta_score_from_residuals(data, spec, &params.eta(), &residuals(data, &params.beta))
}

pub(crate) fn eta_score_from_residuals(
    data: &MixedModelData,
    spec: &VarianceSpec,
    eta: &[f64],
    residuals: &[DVector<f64>],
) -> Result<Vec<f64>> {
    let psi = spec.psi_diag(&eta[1..]);
    let dim = spec.eta_dim();
    let mut grad = vec![0.0; dim];
    for (i, (g, r)) in data.groups().iter().zip(residuals).enumerate() {
        let v = covariance_from(&g.z, eta[0], &psi);
        let vinv = factor_covariance(v, i)?.inverse();
        let w = &vinv * r;
        grad[0] += 0.5 * (vinv.trace() - w.dot(&w));
        for (k, gk) in grad.iter_mut().enumerate().skip(1) {
            for c in spec.component_columns(k - 1) {
                let zc = g.z.column(c);
                let vz = &vinv * zc;
                let zw = zc.dot(&w);
                *gk += 0.5 * (zc.dot(&vz) - zw * zw);
            }
        }
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("variance-component score".into()));
    }
    Ok(grad)
}

/// Hessian of `−l_n` in `η`. `V` is linear in `η`, so
/// `H_ab = ½ Σ_i [−tr(V⁻¹D_a V⁻¹D_b) + 2 rᵀV⁻¹D_a V⁻¹D_b V⁻¹r]`.
pub fn hess_eta(
    data: &MixedModelData,
    params: &ModelParameters,
    spec: &VarianceSpec,
) -> Result<DMatrix<f64>> {
    params.check_against(data, spec)?;
    let factors = GroupFactors::new(data, spec, &params.eta())?;
    let res = residuals(data, &params.beta);
    let dim = spec.eta_dim();
    let mut h = DMatrix::zeros(dim, dim);
    for ((g, r), vinv) in data.groups().iter().zip(&res).zip(&factors.vinv) {
        let w = vinv * r;
        let vd: Vec<DMatrix<f64>> = (0..dim)
            .map(|k| vinv * covariance_derivative(&g.z, spec, k))
            .collect();
        let dw: Vec<DVector<f64>> = (0..dim)
            .map(|k| covariance_derivative(&g.z, spec, k) * &w)
            .collect();
        for a in 0..dim {
            for b in a..dim {
                let tr = (&vd[a] * &vd[b]).trace();
                let quad = dw[a].dot(&(vinv * &dw[b]));
                let v = 0.5 * (-tr + 2.0 * quad);
                h[(a, b)] += v;
                if a != b {
                    h[(b, a)] += v;
                }
            }
        }
    }
    Ok(h)
}

/// `Σ_i X_iᵀ V_i⁻¹ X_i`, the exact `β`-Hessian of `−l_n`.
pub fn fisher_info_beta(
    data: &MixedModelData,
    params: &ModelParameters,
    spec: &VarianceSpec,
) -> Result<DMatrix<f64>> {
    params.check_against(data, spec)?;
    let factors = GroupFactors::new(data, spec, &params.eta())?;
    let p = data.p();
    let mut info = DMatrix::zeros(p, p);
    for (g, vinv) in data.groups().iter().zip(&factors.vinv) {
        info += g.x.transpose() * (vinv * &g.x);
    }
    Ok(info)
}
