//! Newton–Raphson on the local quadratic approximation (LQA) of the
//! penalty, alternating a full `β` step with an `η` step.
//!
//! The penalty near a nonzero `β_j` is replaced by the quadratic with
//! curvature `p'(|β_j|)/|β_j|`; coefficients that fall below the zero clamp
//! are set to zero and dropped from the system for good. Only sensible when
//! `p < n`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    fisher_info_beta, grad_beta, grad_eta, hess_eta, neg_log_likelihood, MixedModelData,
    ModelParameters, VarianceSpec, SIGMA2_FLOOR,
};
use crate::penalty::PenaltySpec;

use super::{
    active_set, penalty_sum, update_variance_components, ConvergenceMonitor, FitResult,
    SolverConfig, DESCENT_TOLERANCE,
};

const RIDGE: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

pub fn newton_lqa_fit(
    data: &MixedModelData,
    spec: &VarianceSpec,
    penalty: &PenaltySpec,
    init: &ModelParameters,
    config: &SolverConfig,
) -> Result<FitResult> {
    config.validate()?;
    init.check_against(data, spec)?;
    let n = data.n() as f64;
    let p = data.p();
    let objective_at = |params: &ModelParameters| -> Result<f64> {
        Ok(neg_log_likelihood(data, params, spec)? + penalty_sum(data, penalty, &params.beta))
    };

    let mut params = init.clone();
    let mut objective = objective_at(&params)?;
    let mut trace = vec![objective];
    let mut monitor = ConvergenceMonitor::default();
    let mut max_increase = f64::NEG_INFINITY;
    let mut ridge_fallback = false;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_outer_iterations {
        iterations += 1;
        let start_objective = objective;

        // Clamp tiny penalized coefficients to zero when that does not hurt.
        let mut clamped = params.clone();
        for j in 0..p {
            if data.is_penalized(j) && clamped.beta[j].abs() < config.zero_clamp {
                clamped.beta[j] = 0.0;
            }
        }
        if clamped.beta != params.beta {
            let q = objective_at(&clamped)?;
            if q <= objective {
                params = clamped;
                objective = q;
            }
        }

        // β step on the free coordinates.
        let free: Vec<usize> = (0..p)
            .filter(|&j| !data.is_penalized(j) || params.beta[j] != 0.0)
            .collect();
        if !free.is_empty() {
            let info = fisher_info_beta(data, &params, spec)?;
            let grad = grad_beta(data, &params, spec)?;
            let k = free.len();
            let mut system = DMatrix::from_fn(k, k, |a, b| info[(free[a], free[b])]);
            let mut rhs = DVector::from_fn(k, |a, _| -grad[free[a]]);
            for (a, &j) in free.iter().enumerate() {
                if data.is_penalized(j) {
                    let w = n * penalty.lqa_weight_with(params.beta[j], config.zero_clamp)?;
                    system[(a, a)] += w;
                    rhs[a] -= w * params.beta[j];
                }
            }
            let step = match system.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => {
                    ridge_fallback = true;
                    let scale = system.diagonal().amax().max(1.0);
                    for a in 0..k {
                        system[(a, a)] += RIDGE * scale;
                    }
                    system
                        .lu()
                        .solve(&rhs)
                        .ok_or_else(|| Error::Internal("singular LQA system".into()))?
                }
            };
            let mut t = 1.0;
            for _ in 0..MAX_HALVINGS {
                let mut trial = params.clone();
                for (a, &j) in free.iter().enumerate() {
                    trial.beta[j] += t * step[a];
                }
                if let Ok(q) = objective_at(&trial) {
                    if q <= objective {
                        params = trial;
                        objective = q;
                        break;
                    }
                }
                t *= 0.5;
            }
        }

        // η step: Newton when the Hessian is PD and the step stays feasible
        // and descends, else a coordinate-wise line search.
        let eta = params.eta();
        let newton_eta = hess_eta(data, &params, spec).ok().and_then(|h| {
            let g = grad_eta(data, &params, spec).ok()?;
            let step = h.cholesky()?.solve(&DVector::from_vec(g));
            let cand: Vec<f64> = eta.iter().zip(step.iter()).map(|(e, s)| e - s).collect();
            let feasible = cand[0] >= SIGMA2_FLOOR && cand[1..].iter().all(|t| *t >= 0.0);
            feasible.then_some(cand)
        });
        let mut eta_done = false;
        if let Some(cand) = newton_eta {
            let mut trial = params.clone();
            trial.set_eta(&cand);
            if let Ok(q) = objective_at(&trial) {
                if q <= objective {
                    params = trial;
                    objective = q;
                    eta_done = true;
                }
            }
        }
        if !eta_done {
            let cand = update_variance_components(data, spec, &params.beta, &eta, config)?;
            let mut trial = params.clone();
            trial.set_eta(&cand);
            let q = objective_at(&trial)?;
            if q <= objective {
                params = trial;
                objective = q;
            }
        }

        let increase = objective - start_objective;
        max_increase = max_increase.max(increase);
        if increase > DESCENT_TOLERANCE {
            return Err(Error::Internal(format!(
                "LQA objective increased by {increase:e}"
            )));
        }
        trace.push(objective);
        if monitor.update(start_objective, objective, &params.beta, config.objective_tolerance) {
            converged = true;
            break;
        }
    }

    let neg_loglik = neg_log_likelihood(data, &params, spec)?;
    Ok(FitResult {
        active_set: active_set(&params.beta),
        objective_trace: trace,
        objective,
        neg_loglik,
        converged,
        iterations,
        penalty: *penalty,
        n: data.n(),
        max_objective_increase: max_increase,
        ridge_fallback,
        params,
    })
}
