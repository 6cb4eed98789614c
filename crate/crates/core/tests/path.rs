mod common;

use common::*;
use pllmm::selection::{bic_from, degrees_of_freedom, fit_path, PathConfig};
use pllmm::simulation::{generate_dataset, SimulationScenario};
use pllmm::solver::{cgd_fit, newton_lqa_fit};
use pllmm::{GroupBlock, MixedModelData, ModelParameters, PenaltyFamily, PenaltySpec, SolverConfig, VarianceSpec};
use std::collections::BTreeSet;

fn scenario_data(rep: u64) -> (MixedModelData, VarianceSpec) {
    let sc = SimulationScenario::default();
    (generate_dataset(&sc, rep).unwrap().data, sc.variance_spec())
}

fn warm() -> PathConfig {
    PathConfig::default()
}

#[test]
fn first_grid_point_is_the_null_model() {
    for rep in 0..3 {
        let (data, spec) = scenario_data(rep);
        for fam in [PenaltyFamily::L1, PenaltyFamily::scad()] {
            let res = fit_path(&data, &spec, fam, &SolverConfig::default(), &warm()).unwrap();
            let first = res.fits[0].as_ref().unwrap();
            assert!(first.active_set.iter().all(|j| !data.is_penalized(*j)), "{fam:?}");
        }
    }
}

#[test]
fn stored_bic_recomputes_exactly() {
    let (data, spec) = scenario_data(4);
    let res = fit_path(&data, &spec, PenaltyFamily::scad(), &SolverConfig::default(), &warm()).unwrap();
    assert_eq!(res.grid.len(), res.fits.len());
    assert_eq!(res.grid.len(), res.bic_values.len());
    for (fit, b) in res.fits.iter().zip(&res.bic_values) {
        if let Some(f) = fit {
            assert_eq!(bic_from(f.neg_loglik, degrees_of_freedom(f, &spec), data.n()), *b);
        }
    }
    let min = res.bic_values.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(res.bic_values[res.selected_index], min);
}

#[test]
fn pure_noise_selects_the_null_model() {
    for seed in 0..5 {
        let data = simulated(seed, 25, 6, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.5, 1.0);
        let spec = VarianceSpec::isotropic(1);
        let res = fit_path(&data, &spec, PenaltyFamily::scad(), &SolverConfig::default(), &warm()).unwrap();
        assert_eq!(res.selected_fit().active_set, vec![0], "seed {seed}");
    }
}

#[test]
fn warm_objective_never_worse_than_cold() {
    for seed in 0..20 {
        let data = simulated(seed, 12, 5, &[1.0, 2.0, 0.0, -1.0, 0.0, 0.5], 0.5, 0.5);
        let spec = VarianceSpec::isotropic(1);
        let path = PathConfig { n_points: 10, folds: 5, seed, ..PathConfig::default() };
        let cold = PathConfig { cold_start: true, ..path.clone() };
        let cfg = SolverConfig::default();
        let a = fit_path(&data, &spec, PenaltyFamily::scad(), &cfg, &path).unwrap();
        let b = fit_path(&data, &spec, PenaltyFamily::scad(), &cfg, &cold).unwrap();
        assert_eq!(a.grid, b.grid);
        for (w, c) in a.fits.iter().zip(&b.fits) {
            if let (Some(w), Some(c)) = (w, c) {
                assert!(w.objective <= c.objective + 1e-8, "instance {seed}");
            }
        }
    }
}

#[test]
fn cold_and_warm_paths_select_the_same_model() {
    for rep in 0..5 {
        let (data, spec) = scenario_data(10 + rep);
        let cfg = SolverConfig::default();
        let a = fit_path(&data, &spec, PenaltyFamily::scad(), &cfg, &warm()).unwrap();
        let cold = PathConfig { cold_start: true, ..warm() };
        let b = fit_path(&data, &spec, PenaltyFamily::scad(), &cfg, &cold).unwrap();
        assert_eq!(a.selected_fit().active_set, b.selected_fit().active_set, "replicate {rep}");
    }
}

#[test]
fn l1_active_set_grows_along_the_path() {
    let (mut steps, mut monotone) = (0, 0);
    for rep in 0..5 {
        let (data, spec) = scenario_data(20 + rep);
        let res = fit_path(&data, &spec, PenaltyFamily::L1, &SolverConfig::default(), &warm()).unwrap();
        let sizes: Vec<usize> = res.fits.iter().flatten().map(|f| f.active_size()).collect();
        for w in sizes.windows(2) {
            steps += 1;
            monotone += usize::from(w[1] >= w[0]);
        }
    }
    assert!(monotone as f64 >= 0.9 * steps as f64, "{monotone}/{steps}");
}

#[test]
fn degenerate_fits_are_cut_from_high_dimensional_paths() {
    let sc = SimulationScenario { p: 120, groups: 15, ..SimulationScenario::default() };
    let set = generate_dataset(&sc, 0).unwrap();
    let spec = sc.variance_spec();
    let path = PathConfig { cold_start: true, ..PathConfig::default() };
    let res = fit_path(&set.data, &spec, sc.penalty, &SolverConfig::default(), &path).unwrap();
    let n = set.data.n();
    for f in res.fits.iter().flatten() {
        assert!(f.active_size() <= n / 2);
        assert!(f.params.sigma2 > 1e-6);
    }
    let chosen = &res.selected_fit().active_set;
    assert!((0..5).all(|j| chosen.contains(&j)), "{chosen:?}");
    assert!(chosen.len() < 10, "{chosen:?}");
}

#[test]
fn solvers_agree_on_low_dimensional_problems() {
    for seed in 0..20 {
        let data = simulated(500 + seed, 15, 6, &[1.0, 2.5, 0.0, -1.5, 0.0, 0.0], 0.4, 0.3);
        let spec = VarianceSpec::isotropic(1);
        let pen = PenaltySpec::new(PenaltyFamily::scad(), 0.25).unwrap();
        let init = ModelParameters::new(vec![0.1; 6], 1.0, vec![0.5]).unwrap();
        let cfg = SolverConfig::tight();
        let a = cgd_fit(&data, &spec, &pen, &init, &cfg).unwrap();
        let b = newton_lqa_fit(&data, &spec, &pen, &init, &cfg).unwrap();
        assert_eq!(a.active_set, b.active_set, "instance {seed}");
        assert!(rel_err(a.objective, b.objective) < 1e-4, "instance {seed}");
    }
}

#[test]
fn permuting_columns_permutes_the_estimate() {
    let data = simulated(77, 15, 6, &[1.0, 2.0, 0.0, -1.0, 0.5], 0.5, 0.3);
    let perm = [0usize, 3, 1, 4, 2];
    let blocks: Vec<GroupBlock> = data
        .groups()
        .iter()
        .map(|b| {
            let x = b.x().select_columns(perm.iter());
            GroupBlock::new(b.y().clone(), x, b.z().clone()).unwrap()
        })
        .collect();
    let permuted = MixedModelData::new(blocks, BTreeSet::from([0])).unwrap();
    let spec = VarianceSpec::isotropic(1);
    let cfg = SolverConfig::tight();
    let init = ModelParameters::new(vec![0.0; 5], 1.0, vec![0.5]).unwrap();
    for fam in [PenaltyFamily::L1, PenaltyFamily::scad()] {
        let pen = PenaltySpec::new(fam, 0.1).unwrap();
        let a = cgd_fit(&data, &spec, &pen, &init, &cfg).unwrap();
        let b = cgd_fit(&permuted, &spec, &pen, &init, &cfg).unwrap();
        for (k, &j) in perm.iter().enumerate() {
            assert!((b.params.beta[k] - a.params.beta[j]).abs() < 1e-6, "{fam:?}");
            assert_eq!(b.params.beta[k] == 0.0, a.params.beta[j] == 0.0);
        }
    }
}
