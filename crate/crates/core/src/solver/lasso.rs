//! Starting values: a cross-validated ordinary Lasso that ignores the
//! random-effect structure, followed by one variance-component pass.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::{MixedModelData, ModelParameters, VarianceSpec, SIGMA2_FLOOR};
use crate::rng::{stream_rng, Stream};

use super::{update_variance_components, SolverConfig};

const GRID_POINTS: usize = 50;
const GRID_RATIO: f64 = 1e-3;
const CD_TOLERANCE: f64 = 1e-9;
const CD_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoInit {
    pub params: ModelParameters,
    /// Cross-validation-selected Lasso penalty.
    pub lambda: f64,
}

/// Ordinary Lasso by cyclic coordinate descent:
/// minimizes `(1/2n)‖y − Xβ‖² + λ Σ_{j penalized} |β_j|` starting from `beta`.
pub fn plain_lasso(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalized: &[bool],
    lambda: f64,
    beta: &mut [f64],
) {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / n).collect();
    let mut r = y - x * DVector::from_column_slice(beta);
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let xj = x.column(j);
            let rho = xj.dot(&r) / n + col_sq[j] * beta[j];
            let new = if penalized[j] {
                soft(rho, lambda) / col_sq[j]
            } else {
                rho / col_sq[j]
            };
            let delta = new - beta[j];
            if delta != 0.0 {
                r.axpy(-delta, &xj, 1.0);
                beta[j] = new;
                max_change = max_change.max(delta.abs() * col_sq[j].sqrt());
            }
        }
        if max_change < CD_TOLERANCE {
            break;
        }
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Least-squares residual of `y` on the unpenalized columns.
fn unpenalized_residual(x: &DMatrix<f64>, y: &DVector<f64>, penalized: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..x.ncols()).filter(|&j| !penalized[j]).collect();
    if cols.is_empty() {
        return y.clone();
    }
    let xu = x.select_columns(&cols);
    let coef = xu
        .clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    y - xu * coef
}

fn lasso_grid(x: &DMatrix<f64>, y: &DVector<f64>, penalized: &[bool]) -> Vec<f64> {
    let n = x.nrows() as f64;
    let r = unpenalized_residual(x, y, penalized);
    let lambda_max = (0..x.ncols())
        .filter(|&j| penalized[j])
        .map(|j| (x.column(j).dot(&r) / n).abs())
        .fold(0.0, f64::max);
    if lambda_max <= 0.0 {
        return vec![0.0];
    }
    crate::selection::log_grid(lambda_max, GRID_POINTS, GRID_RATIO)
}

/// `β⁰` from a `folds`-fold cross-validated ordinary Lasso; `η⁰` from one
/// variance-component pass at `β⁰` started from `σ² = var(residuals)`,
/// `θ² = σ²/2`.
pub fn lasso_init(
    data: &MixedModelData,
    spec: &VarianceSpec,
    folds: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<LassoInit> {
    let n = data.n();
    if folds < 2 || n < folds {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs 2 ≤ folds ≤ n, got folds={folds}, n={n}"
        )));
    }
    let x = data.stacked_x();
    let y = data.stacked_y();
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateData("response is identically zero".into()));
    }
    let p = data.p();
    let penalized: Vec<bool> = (0..p).map(|j| data.is_penalized(j)).collect();
    let grid = lasso_grid(&x, &y, &penalized);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 0, Stream::CrossValidation));
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }

    let mut cv_error = vec![0.0; grid.len()];
    for k in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
        let xt = x.select_rows(&train);
        let yt = y.select_rows(&train);
        let xv = x.select_rows(&test);
        let yv = y.select_rows(&test);
        let mut beta = vec![0.0; p];
        for (l, &lam) in grid.iter().enumerate() {
            plain_lasso(&xt, &yt, &penalized, lam, &mut beta);
            let resid = &yv - &xv * DVector::from_column_slice(&beta);
            cv_error[l] += resid.norm_squared();
        }
    }
    // first minimum: ties go to the larger λ
    let best = cv_error
        .iter()
        .enumerate()
        .fold(0, |b, (l, e)| if *e < cv_error[b] { l } else { b });
    let lambda = grid[best];

    let mut beta = vec![0.0; p];
    for &lam in &grid[..=best] {
        plain_lasso(&x, &y, &penalized, lam, &mut beta);
    }

    let resid = &y - &x * DVector::from_column_slice(&beta);
    let mean = resid.mean();
    let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let sigma2 = var.max(SIGMA2_FLOOR);
    let eta0: Vec<f64> = std::iter::once(sigma2)
        .chain(std::iter::repeat_n(sigma2 / 2.0, spec.theta_dim()))
        .collect();
    let eta = update_variance_components(data, spec, &beta, &eta0, config)?;
    let params = ModelParameters::new(beta, eta[0], eta[1..].to_vec())?;
    Ok(LassoInit { params, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GroupBlock;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::collections::BTreeSet;

    fn data_from(x: &DMatrix<f64>, y: &DVector<f64>, group_size: usize) -> MixedModelData {
        let groups = (0..x.nrows() / group_size)
            .map(|g| {
                let rows: Vec<usize> = (g * group_size..(g + 1) * group_size).collect();
                GroupBlock::new(
                    y.select_rows(&rows),
                    x.select_rows(&rows),
                    DMatrix::from_element(group_size, 1, 1.0),
                )
                .unwrap()
            })
            .collect();
        MixedModelData::new(groups, BTreeSet::new()).unwrap()
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        // columns scaled so xᵀx / n = 1 and mutually orthogonal
        let n = 8;
        let h = [
            [1., 1., 1., 1., 1., 1., 1., 1.],
            [1., -1., 1., -1., 1., -1., 1., -1.],
            [1., 1., -1., -1., 1., 1., -1., -1.],
            [1., -1., -1., 1., 1., -1., -1., 1.],
        ];
        let x = DMatrix::from_fn(n, 4, |r, c| h[c][r]);
        let truth = [3.0, -2.0, 0.0, 0.5];
        let y = &x * DVector::from_column_slice(&truth);
        let mut beta = vec![0.0; 4];
        plain_lasso(&x, &y, &[true; 4], 0.7, &mut beta);
        let expected: Vec<f64> = truth.iter().map(|b| soft(*b, 0.7)).collect();
        for j in 0..4 {
            assert!((beta[j] - expected[j]).abs() < 1e-10, "{beta:?}");
        }
    }

    #[test]
    fn strong_signal_sign_pattern_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let n = 120;
        let p = 8;
        let truth = [2.0, -3.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0];
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let noise = DVector::from_fn(n, |_, _| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let y = &x * DVector::from_column_slice(&truth) + noise;
        let data = data_from(&x, &y, 6);
        let init = lasso_init(&data, &VarianceSpec::isotropic(1), 10, 1, &SolverConfig::default()).unwrap();
        for j in 0..p {
            if truth[j] != 0.0 {
                assert_eq!(init.params.beta[j].signum(), truth[j].signum());
            }
        }
        assert!(init.lambda < 0.1);
    }

    #[test]
    fn pure_noise_gives_near_zero_start() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 120;
        let p = 10;
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let data = data_from(&x, &y, 6);
        let init = lasso_init(&data, &VarianceSpec::isotropic(1), 10, 3, &SolverConfig::default()).unwrap();
        let l1: f64 = init.params.beta.iter().map(|b| b.abs()).sum();
        assert!(l1 < 0.5, "{:?}", init.params.beta);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(60, 5, |_, _| StandardNormal.sample(&mut rng));
        let y = DVector::from_fn(60, |r, _| x[(r, 0)] + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let data = data_from(&x, &y, 6);
        let spec = VarianceSpec::isotropic(1);
        let a = lasso_init(&data, &spec, 10, 42, &SolverConfig::default()).unwrap();
        let b = lasso_init(&data, &spec, 10, 42, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_inputs() {
        let x = DMatrix::from_element(12, 2, 1.0);
        let y = DVector::zeros(12);
        let data = data_from(&x, &y, 6);
        let spec = VarianceSpec::isotropic(1);
        assert!(matches!(
            lasso_init(&data, &spec, 10, 1, &SolverConfig::default()),
            Err(Error::DegenerateData(_))
        ));
        let y = DVector::from_element(12, 1.0);
        let data = data_from(&x, &y, 6);
        assert!(lasso_init(&data, &spec, 20, 1, &SolverConfig::default()).is_err());
    }
}
