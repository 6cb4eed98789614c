use crate::penalty::PenaltySpec;

use super::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmijoOutcome {
    /// `alpha` satisfied the sufficient-decrease inequality; `objective` is
    /// the objective at the new coordinate value.
    Accepted {
        alpha: f64,
        objective: f64,
        backtracks: usize,
    },
    /// `Δ_j ≥ 0`: the direction predicts no decrease, skip the coordinate.
    Stationary,
    /// No step was accepted within the backtracking budget.
    Rejected,
}

/// Backtracking step size for a single coordinate move `β_j + α d_j`.
///
/// `objective(b)` evaluates `Q` with coordinate `j` set to `b` and all else
/// fixed; `current` is `Q` at `b = beta_j`. The accepted `α` is the largest
/// `α₀ δ^r` with `Q(β + α d e_j) ≤ Q(β) + α ρ Δ`, where
/// `Δ = g d + γ d² h + w [p(|β_j + d|) − p(|β_j|)]` and `penalty` carries
/// the penalty together with its weight `w` (`None` for unpenalized
/// coordinates).
#[allow(clippy::too_many_arguments)]
pub fn armijo_step(
    objective: impl Fn(f64) -> f64,
    current: f64,
    beta_j: f64,
    d_j: f64,
    h_j: f64,
    grad_j: f64,
    penalty: Option<(&PenaltySpec, f64)>,
    config: &SolverConfig,
) -> ArmijoOutcome {
    let pen_change = penalty.map_or(0.0, |(p, w)| {
        w * (p.eval((beta_j + d_j).abs()) - p.eval(beta_j.abs()))
    });
    let delta = grad_j * d_j + config.armijo_gamma * d_j * d_j * h_j + pen_change;
    if !(delta < 0.0) {
        return ArmijoOutcome::Stationary;
    }
    let mut alpha = config.armijo_alpha0;
    for r in 0..=config.max_backtracks {
        let q = objective(beta_j + alpha * d_j);
        if q <= current + alpha * config.armijo_rho * delta {
            return ArmijoOutcome::Accepted {
                alpha,
                objective: q,
                backtracks: r,
            };
        }
        alpha *= config.armijo_delta;
    }
    ArmijoOutcome::Rejected
}
