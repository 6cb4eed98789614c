//! Coordinate gradient descent.
//!
//! Each outer iteration sweeps `j = 1..p` once, solving the penalized
//! quadratic model of coordinate `j` exactly and choosing the step length by
//! the Armijo rule, then updates the variance components coordinate-wise.
//! The loss is exactly quadratic in `β` for fixed `η`, so the objective along
//! a coordinate is evaluated in closed form from the gradient and the
//! diagonal of `XᵀV⁻¹X`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{GroupFactors, MixedModelData, ModelParameters, VarianceSpec};
use crate::penalty::PenaltySpec;

use super::{
    active_set, armijo_step, penalty_sum, update_variance_components, ArmijoOutcome,
    ConvergenceMonitor, FitResult, SolverConfig, DESCENT_TOLERANCE,
};

/// Minimizes `Q(β, η)` by coordinate gradient descent from `init`.
pub fn cgd_fit(
    data: &MixedModelData,
    spec: &VarianceSpec,
    penalty: &PenaltySpec,
    init: &ModelParameters,
    config: &SolverConfig,
) -> Result<FitResult> {
    run(data, spec, penalty, init, config, None)
}

/// Fit with every penalized coefficient held at zero.
pub(crate) fn cgd_null_fit(
    data: &MixedModelData,
    spec: &VarianceSpec,
    init: &ModelParameters,
    config: &SolverConfig,
) -> Result<FitResult> {
    let frozen: Vec<bool> = (0..data.p()).map(|j| data.is_penalized(j)).collect();
    let mut start = init.clone();
    for (j, b) in start.beta.iter_mut().enumerate() {
        if frozen[j] {
            *b = 0.0;
        }
    }
    let penalty = PenaltySpec::new(crate::penalty::PenaltyFamily::L1, 0.0)?;
    run(data, spec, &penalty, &start, config, Some(&frozen))
}

/// Per-`η` quantities shared by one sweep.
struct Sweep {
    /// `V⁻¹X` stacked by group.
    vinv_x: DMatrix<f64>,
    /// `diag(XᵀV⁻¹X)`.
    info_diag: Vec<f64>,
    /// `V⁻¹ r` stacked by group.
    w: DVector<f64>,
    neg_loglik: f64,
}

impl Sweep {
    fn new(
        data: &MixedModelData,
        spec: &VarianceSpec,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        params: &ModelParameters,
    ) -> Result<Self> {
        let factors = GroupFactors::new(data, spec, &params.eta())?;
        let r = y - x * DVector::from_column_slice(&params.beta);
        let mut vinv_x = DMatrix::zeros(data.n(), data.p());
        let mut w = DVector::zeros(data.n());
        let mut total = data.n() as f64 * (2.0 * PI).ln();
        let mut row = 0;
        for (g, (vinv, ld)) in data
            .groups()
            .iter()
            .zip(factors.vinv.iter().zip(&factors.logdet))
        {
            let n_i = g.len();
            vinv_x
                .rows_mut(row, n_i)
                .copy_from(&(vinv * x.rows(row, n_i)));
            let ri = r.rows(row, n_i);
            let wi = vinv * ri;
            total += ld + ri.dot(&wi);
            w.rows_mut(row, n_i).copy_from(&wi);
            row += n_i;
        }
        let info_diag = (0..data.p())
            .map(|j| x.column(j).dot(&vinv_x.column(j)))
            .collect();
        Ok(Self {
            vinv_x,
            info_diag,
            w,
            neg_loglik: 0.5 * total,
        })
    }
}

fn run(
    data: &MixedModelData,
    spec: &VarianceSpec,
    penalty: &PenaltySpec,
    init: &ModelParameters,
    config: &SolverConfig,
    frozen: Option<&[bool]>,
) -> Result<FitResult> {
    config.validate()?;
    init.check_against(data, spec)?;
    let n = data.n() as f64;
    let x = data.stacked_x();
    let y = data.stacked_y();
    let penalized: Vec<bool> = (0..data.p()).map(|j| data.is_penalized(j)).collect();
    let is_frozen = |j: usize| frozen.is_some_and(|f| f[j]);

    let mut params = init.clone();
    let mut sweep = Sweep::new(data, spec, &x, &y, &params)?;
    let mut objective = sweep.neg_loglik + penalty_sum(data, penalty, &params.beta);
    let mut trace = vec![objective];
    let mut max_increase = f64::NEG_INFINITY;
    let mut monitor = ConvergenceMonitor::default();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_outer_iterations {
        iterations += 1;
        let start_objective = objective;
        let mut q_cur = objective;

        for j in 0..data.p() {
            if is_frozen(j) {
                continue;
            }
            let xj = x.column(j);
            let grad = -xj.dot(&sweep.w);
            let exact_h = sweep.info_diag[j];
            let h = exact_h.clamp(config.c_min, config.c_max);
            let bj = params.beta[j];
            let d = if penalized[j] {
                penalty.threshold_unchecked(bj - grad / h, h / n) - bj
            } else {
                -grad / h
            };
            if d == 0.0 || !d.is_finite() {
                continue;
            }
            let pen_weight = penalized[j].then_some((penalty, n));
            let coord_q = |b: f64| {
                let t = b - bj;
                let pen = pen_weight.map_or(0.0, |(p, w)| w * (p.eval(b.abs()) - p.eval(bj.abs())));
                q_cur + t * grad + 0.5 * t * t * exact_h + pen
            };
            let (mut new_b, mut new_q) =
                match armijo_step(coord_q, q_cur, bj, d, h, grad, pen_weight, config) {
                    ArmijoOutcome::Accepted { alpha, objective, .. } => (bj + alpha * d, objective),
                    ArmijoOutcome::Stationary | ArmijoOutcome::Rejected => continue,
                };
            if penalized[j] && new_b != 0.0 && new_b.abs() < config.zero_clamp {
                let q0 = coord_q(0.0);
                if q0 <= new_q {
                    new_b = 0.0;
                    new_q = q0;
                }
            }
            let step = new_b - bj;
            if step == 0.0 {
                continue;
            }
            max_increase = max_increase.max(new_q - q_cur);
            sweep.w.axpy(-step, &sweep.vinv_x.column(j), 1.0);
            params.beta[j] = new_b;
            q_cur = new_q;
        }

        let eta = update_variance_components(data, spec, &params.beta, &params.eta(), config)?;
        params.set_eta(&eta);
        sweep = Sweep::new(data, spec, &x, &y, &params)?;
        objective = sweep.neg_loglik + penalty_sum(data, penalty, &params.beta);
        let increase = objective - start_objective;
        max_increase = max_increase.max(increase);
        if increase > DESCENT_TOLERANCE {
            return Err(Error::Internal(format!(
                "objective increased by {increase:e} in outer iteration {iterations}"
            )));
        }
        trace.push(objective);
        if monitor.update(start_objective, objective, &params.beta, config.objective_tolerance) {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        active_set: active_set(&params.beta),
        objective_trace: trace,
        objective,
        neg_loglik: sweep.neg_loglik,
        converged,
        iterations,
        penalty: *penalty,
        n: data.n(),
        max_objective_increase: max_increase,
        ridge_fallback: false,
        params,
    })
}
