//! Oracles and instance generators shared by the integration tests and the
//! acceptance harness.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use pllmm::model::{fisher_info_beta, grad_beta, grad_eta, neg_log_likelihood};
use pllmm::{GroupBlock, MixedModelData, ModelParameters, PenaltyFamily, PenaltySpec, VarianceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    Distribution::<f64>::sample(&StandardNormal, rng)
}

/// Small random problem with unequal group sizes, an intercept in column 0
/// and `Z` equal to the first `q` columns of `X`.
pub fn random_instance(seed: u64) -> (MixedModelData, VarianceSpec, ModelParameters) {
    let mut r = rng(seed);
    let groups = r.random_range(3..7);
    let p = r.random_range(2..5);
    let q = r.random_range(1..3).min(p);
    let spec = if r.random_bool(0.5) {
        VarianceSpec::diagonal(q)
    } else {
        VarianceSpec::isotropic(q)
    };
    let beta: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
    let sigma2 = r.random_range(0.2..2.0);
    let theta2: Vec<f64> = (0..spec.theta_dim()).map(|_| r.random_range(0.1..1.5)).collect();
    let blocks = (0..groups)
        .map(|_| {
            let n_i = r.random_range(2..6);
            let x: Vec<Vec<f64>> = (0..n_i)
                .map(|_| {
                    let mut row = vec![1.0];
                    row.extend((1..p).map(|_| normal(&mut r)));
                    row
                })
                .collect();
            let z: Vec<Vec<f64>> = x.iter().map(|row| row[..q].to_vec()).collect();
            let y: Vec<f64> = (0..n_i).map(|_| 3.0 * normal(&mut r)).collect();
            GroupBlock::from_rows(&y, &x, &z).unwrap()
        })
        .collect();
    let data = MixedModelData::new(blocks, BTreeSet::from([0])).unwrap();
    let params = ModelParameters::new(beta, sigma2, theta2).unwrap();
    (data, spec, params)
}

/// Random-intercept data generated from the model itself.
pub fn simulated(
    seed: u64,
    groups: usize,
    n_i: usize,
    beta: &[f64],
    theta2: f64,
    sigma2: f64,
) -> MixedModelData {
    let mut r = rng(seed);
    let p = beta.len();
    let blocks = (0..groups)
        .map(|_| {
            let b = normal(&mut r) * theta2.sqrt();
            let x: Vec<Vec<f64>> = (0..n_i)
                .map(|_| {
                    let mut row = vec![1.0];
                    row.extend((1..p).map(|_| normal(&mut r)));
                    row
                })
                .collect();
            let y: Vec<f64> = x
                .iter()
                .map(|row| {
                    row.iter().zip(beta).map(|(a, c)| a * c).sum::<f64>()
                        + b
                        + normal(&mut r) * sigma2.sqrt()
                })
                .collect();
            GroupBlock::from_rows(&y, &x, &vec![vec![1.0]; n_i]).unwrap()
        })
        .collect();
    MixedModelData::new(blocks, BTreeSet::from([0])).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest relative error of `grad_beta` and `grad_eta` against central
/// differences of the negative log-likelihood.
pub fn gradient_fd_error(data: &MixedModelData, spec: &VarianceSpec, params: &ModelParameters) -> f64 {
    let f = |p: &ModelParameters| neg_log_likelihood(data, p, spec).unwrap();
    let mut worst: f64 = 0.0;
    let gb = grad_beta(data, params, spec).unwrap();
    for j in 0..params.beta.len() {
        let h = 1e-5 * params.beta[j].abs().max(1.0);
        let (mut up, mut dn) = (params.clone(), params.clone());
        up.beta[j] += h;
        dn.beta[j] -= h;
        worst = worst.max(rel_err((f(&up) - f(&dn)) / (2.0 * h), gb[j]));
    }
    let ge = grad_eta(data, params, spec).unwrap();
    let eta = params.eta();
    for k in 0..eta.len() {
        let h = 1e-6 * eta[k].abs().max(1e-3);
        let (mut up, mut dn) = (params.clone(), params.clone());
        let mut e = eta.clone();
        e[k] += h;
        up.set_eta(&e);
        e[k] -= 2.0 * h;
        dn.set_eta(&e);
        worst = worst.max(rel_err((f(&up) - f(&dn)) / (2.0 * h), ge[k]));
    }
    worst
}

/// Largest relative error of `fisher_info_beta` against central differences
/// of `grad_beta`.
pub fn fisher_fd_error(data: &MixedModelData, spec: &VarianceSpec, params: &ModelParameters) -> f64 {
    let info = fisher_info_beta(data, params, spec).unwrap();
    let p = params.beta.len();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let h = 1e-4 * params.beta[j].abs().max(1.0);
        let (mut up, mut dn) = (params.clone(), params.clone());
        up.beta[j] += h;
        dn.beta[j] -= h;
        let gu = grad_beta(data, &up, spec).unwrap();
        let gd = grad_beta(data, &dn, spec).unwrap();
        for i in 0..p {
            worst = worst.max(rel_err((gu[i] - gd[i]) / (2.0 * h), info[(i, j)]));
        }
    }
    worst
}

/// Penalty value and right derivative on `t ≥ 0`, written out independently
/// of the library.
fn pen_value(family: PenaltyFamily, lam: f64, t: f64) -> f64 {
    match family {
        PenaltyFamily::L1 => lam * t,
        PenaltyFamily::L2 => lam * t * t,
        PenaltyFamily::Lq { q } => lam * t.powf(q),
        PenaltyFamily::Hard => {
            if t < lam {
                lam * lam - (t - lam) * (t - lam)
            } else {
                lam * lam
            }
        }
        PenaltyFamily::Scad { a } => {
            if t <= lam {
                lam * t
            } else if t <= a * lam {
                -(t * t - 2.0 * a * lam * t + lam * lam) / (2.0 * (a - 1.0))
            } else {
                (a + 1.0) * lam * lam / 2.0
            }
        }
    }
}

fn pen_slope(family: PenaltyFamily, lam: f64, t: f64) -> f64 {
    match family {
        PenaltyFamily::L1 => lam,
        PenaltyFamily::L2 => 2.0 * lam * t,
        PenaltyFamily::Lq { q } => q * lam * t.powf(q - 1.0),
        PenaltyFamily::Hard => 2.0 * (lam - t).max(0.0),
        PenaltyFamily::Scad { a } => {
            if t <= lam {
                lam
            } else {
                (a * lam - t).max(0.0) / (a - 1.0)
            }
        }
    }
}

pub fn scalar_objective(family: PenaltyFamily, lam: f64, z: f64, h: f64, g: f64) -> f64 {
    0.5 * h * (z - g) * (z - g) + pen_value(family, lam, g.abs())
}

/// Brute-force minimizer of `½h(z−γ)² + p_λ(|γ|)`: a grid of `points` values
/// on `[0, |z|]` (the minimizer never leaves it) refined by bisection on the
/// derivative inside the neighbouring cells.
pub fn threshold_oracle(family: PenaltyFamily, lam: f64, z: f64, h: f64, points: usize) -> f64 {
    let u = z.abs();
    if u == 0.0 {
        return 0.0;
    }
    let f = |g: f64| 0.5 * h * (u - g) * (u - g) + pen_value(family, lam, g);
    let step = u / points as f64;
    let mut best = 0usize;
    let mut best_val = f(0.0);
    for k in 1..=points {
        let v = f(step * k as f64);
        if v < best_val {
            best = k;
            best_val = v;
        }
    }
    let lo = step * best.saturating_sub(1) as f64;
    let hi = (step * (best + 1) as f64).min(u);
    let d = |g: f64| h * (g - u) + pen_slope(family, lam, g);
    let refined = if best == 0 && d(f64::MIN_POSITIVE.max(lo)) >= 0.0 {
        0.0
    } else {
        let (mut a, mut b) = (lo.max(f64::MIN_POSITIVE), hi);
        if d(a) >= 0.0 {
            a
        } else if d(b) <= 0.0 {
            b
        } else {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if d(m) < 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        }
    };
    // the refinement can only improve on the best grid point
    let g = if f(refined) <= best_val { refined } else { step * best as f64 };
    let g = if f(0.0) <= f(g) { 0.0 } else { g };
    g.copysign(z)
}

/// Checks one random `(z, h, λ[, shape])` tuple; returns the discrepancy
/// (0 when both minimizers tie in objective).
pub fn threshold_discrepancy(family: PenaltyFamily, lam: f64, z: f64, h: f64, points: usize) -> f64 {
    let pen = PenaltySpec::new(family, lam).unwrap();
    let got = pen.threshold(z, h).unwrap();
    let want = threshold_oracle(family, lam, z, h, points);
    let diff = (got - want).abs();
    if diff <= 1e-8 {
        return diff;
    }
    let fg = scalar_objective(family, lam, z, h, got);
    let fw = scalar_objective(family, lam, z, h, want);
    if (fg - fw).abs() <= 1e-12 * (1.0 + fw.abs()) {
        0.0
    } else {
        diff
    }
}

pub fn random_family(r: &mut ChaCha8Rng, name: &str) -> PenaltyFamily {
    match name {
        "l1" => PenaltyFamily::L1,
        "l2" => PenaltyFamily::L2,
        "lq" => PenaltyFamily::Lq { q: r.random_range(0.2..1.9) },
        "hard" => PenaltyFamily::Hard,
        "scad" => PenaltyFamily::Scad { a: r.random_range(2.1..6.0) },
        _ => unreachable!(),
    }
}

pub const FAMILIES: [&str; 5] = ["l1", "l2", "lq", "hard", "scad"];

/// Worst discrepancy over `tuples` random tuples of one family.
pub fn threshold_family_check(name: &str, tuples: usize, points: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..tuples {
        let family = random_family(&mut r, name);
        let z = r.random_range(-5.0..5.0);
        let h = r.random_range(0.2..5.0);
        let lam = r.random_range(0.01..2.0);
        worst = worst.max(threshold_discrepancy(family, lam, z, h, points));
    }
    worst
}

/// Maximizes the joint density of `(y_i, b_i)` over `b_i` by cyclic
/// coordinate moves, each fitted through three objective evaluations.
pub fn map_oracle(z: &DMatrix<f64>, r: &DVector<f64>, psi_diag: &[f64], sigma2: f64) -> DVector<f64> {
    let q = z.ncols();
    let f = |b: &DVector<f64>| {
        let e = r - z * b;
        e.dot(&e) / (2.0 * sigma2)
            + b.iter().zip(psi_diag).map(|(v, s)| v * v / (2.0 * s)).sum::<f64>()
    };
    let mut b = DVector::zeros(q);
    for _ in 0..10_000 {
        let mut moved: f64 = 0.0;
        for k in 0..q {
            let step = 1.0;
            let f0 = f(&b);
            let mut up = b.clone();
            up[k] += step;
            let mut dn = b.clone();
            dn[k] -= step;
            let (fu, fd) = (f(&up), f(&dn));
            let curv = (fu - 2.0 * f0 + fd) / (step * step);
            let slope = (fu - fd) / (2.0 * step);
            let delta = -slope / curv;
            b[k] += delta;
            moved = moved.max(delta.abs());
        }
        if moved < 1e-15 {
            break;
        }
    }
    b
}
