use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{
    eta_score_from_residuals, nll_from_residuals, residuals, MixedModelData, VarianceSpec,
    SIGMA2_FLOOR,
};

use super::SolverConfig;

const BRACKET_LIMIT: f64 = 1e12;

/// One Gauss–Seidel pass over `(σ², θ²…)`: each component is replaced by
/// the minimizer of `−l_n` along that coordinate with `β` and the other
/// components held fixed. Never increases `−l_n`.
pub fn update_variance_components(
    data: &MixedModelData,
    spec: &VarianceSpec,
    beta: &[f64],
    eta_current: &[f64],
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    if beta.len() != data.p() || eta_current.len() != spec.eta_dim() || spec.q != data.q() {
        return Err(Error::Dimension(
            "coefficients or variance components do not match the data".into(),
        ));
    }
    let res = residuals(data, beta);
    let mut eta = eta_current.to_vec();
    for k in 0..eta.len() {
        eta[k] = minimize_component(data, spec, &res, &eta, k, config)?;
    }
    Ok(eta)
}

fn minimize_component(
    data: &MixedModelData,
    spec: &VarianceSpec,
    res: &[DVector<f64>],
    eta: &[f64],
    k: usize,
    config: &SolverConfig,
) -> Result<f64> {
    let search = &config.eta_search;
    let mut evals = 0usize;
    let mut work = eta.to_vec();
    let mut f = |x: f64| -> f64 {
        work[k] = x;
        nll_from_residuals(data, spec, &work, res).unwrap_or(f64::INFINITY)
    };
    let mut work2 = eta.to_vec();
    let mut score = |x: f64| -> f64 {
        work2[k] = x;
        eta_score_from_residuals(data, spec, &work2, res).map_or(f64::NAN, |s| s[k])
    };

    let lb = if k == 0 { SIGMA2_FLOOR } else { 0.0 };
    let cur = eta[k];
    let f_cur = f(cur);
    if !f_cur.is_finite() {
        return Err(Error::NonFinite(format!(
            "likelihood at current variance component {k}"
        )));
    }
    let scale = eta[0].max(1e-8);
    let floor = if k == 0 { lb } else { 1e-10 * scale };
    let e = search.expansion;

    let mut mid = if cur > lb { cur } else { 0.1 * scale };
    let mut lo = (mid / e).max(lb);
    let mut hi = mid * e;
    let (mut flo, mut fm, mut fhi) = (f(lo), f(mid), f(hi));
    evals += 3;

    while fhi < fm {
        lo = mid;
        flo = fm;
        mid = hi;
        fm = fhi;
        hi *= e;
        if hi > BRACKET_LIMIT {
            return Err(Error::UnboundedVariance {
                component: k,
                limit: BRACKET_LIMIT,
            });
        }
        fhi = f(hi);
        evals += 1;
    }
    while flo < fm && lo > lb {
        hi = mid;
        mid = lo;
        fm = flo;
        lo = if lo / e < floor { lb } else { lo / e };
        flo = f(lo);
        evals += 1;
    }
    let _ = fhi;

    // Bisection on the analytic partial derivative inside the bracket.
    let (mut a, mut b) = (lo, hi);
    let ga = score(a);
    let gb = score(b);
    evals += 2;
    let candidate = if !(ga < 0.0) {
        a
    } else if !(gb > 0.0) {
        b
    } else {
        loop {
            let m = 0.5 * (a + b);
            if m <= a || m >= b || evals >= search.max_evaluations {
                break m;
            }
            if b - a <= 1e-2 * search.tolerance * (m + search.tolerance) {
                break m;
            }
            let gm = score(m);
            evals += 1;
            if gm.is_nan() {
                break m;
            }
            if gm < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
    };

    let mut best = cur;
    let mut best_val = f_cur;
    for x in [candidate, mid, lo] {
        let fx = f(x);
        if fx < best_val {
            best = x;
            best_val = fx;
        }
    }
    Ok(best)
}
