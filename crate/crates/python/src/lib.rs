//! Python bindings: build a grouped dataset, fit at one `λ` or along a
//! BIC-selected path, predict random effects and run simulation scenarios.
//! Structured results come back as plain dicts.

use std::collections::BTreeSet;

use pllmm::inference::{predict_random_effects, InferenceReport};
use pllmm::selection::{fit_path, PathConfig};
use pllmm::simulation::{compare_penalties, run_scenario, SimulationScenario};
use pllmm::solver::{cgd_fit, lasso_init};
use pllmm::{
    GroupBlock, MixedModelData, ModelParameters, PenaltyFamily, PenaltySpec, SolverConfig,
    VarianceSpec,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyAny;

fn err(e: pllmm::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn family(name: &str, a: Option<f64>, q: Option<f64>) -> PyResult<PenaltyFamily> {
    Ok(match name {
        "scad" => PenaltyFamily::Scad { a: a.unwrap_or(pllmm::penalty::DEFAULT_SCAD_A) },
        "l1" | "lasso" => PenaltyFamily::L1,
        "l2" | "ridge" => PenaltyFamily::L2,
        "hard" => PenaltyFamily::Hard,
        "lq" | "bridge" => PenaltyFamily::Lq { q: q.unwrap_or(0.5) },
        other => return Err(PyValueError::new_err(format!("unknown penalty '{other}'"))),
    })
}

fn variance(structure: &str, q: usize) -> PyResult<VarianceSpec> {
    match structure {
        "isotropic" => Ok(VarianceSpec::isotropic(q)),
        "diagonal" => Ok(VarianceSpec::diagonal(q)),
        other => Err(PyValueError::new_err(format!("unknown variance structure '{other}'"))),
    }
}

/// Converts any serializable value into Python objects through `json`.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Grouped data. Rows sharing a group label form one group, in order of
/// first appearance.
#[pyclass(module = "pllmm_py", frozen)]
struct Dataset {
    data: MixedModelData,
    labels: Vec<String>,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (y, x, z, groups, unpenalized = vec![0]))]
    fn new(
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        groups: Vec<String>,
        unpenalized: Vec<usize>,
    ) -> PyResult<Self> {
        let n = y.len();
        if x.len() != n || z.len() != n || groups.len() != n {
            return Err(PyValueError::new_err("y, x, z and groups need the same number of rows"));
        }
        let mut labels: Vec<String> = Vec::new();
        let mut rows: Vec<Vec<usize>> = Vec::new();
        for (i, g) in groups.iter().enumerate() {
            match labels.iter().position(|l| l == g) {
                Some(k) => rows[k].push(i),
                None => {
                    labels.push(g.clone());
                    rows.push(vec![i]);
                }
            }
        }
        let blocks = rows
            .iter()
            .map(|idx| {
                let yy: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                let xx: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
                let zz: Vec<Vec<f64>> = idx.iter().map(|&i| z[i].clone()).collect();
                GroupBlock::from_rows(&yy, &xx, &zz)
            })
            .collect::<pllmm::Result<Vec<_>>>()
            .map_err(err)?;
        let data = MixedModelData::new(blocks, unpenalized.into_iter().collect::<BTreeSet<_>>())
            .map_err(err)?;
        Ok(Self { data, labels })
    }

    #[getter]
    fn n(&self) -> usize {
        self.data.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.data.p()
    }

    #[getter]
    fn q(&self) -> usize {
        self.data.q()
    }

    #[getter]
    fn groups(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, p={}, q={}, groups={})",
            self.data.n(),
            self.data.p(),
            self.data.q(),
            self.data.n_groups()
        )
    }
}

/// Penalty value `p_λ(|t|)`.
#[pyfunction]
#[pyo3(signature = (penalty, lam, t, a = None, q = None))]
fn penalty_value(penalty: &str, lam: f64, t: f64, a: Option<f64>, q: Option<f64>) -> PyResult<f64> {
    let spec = PenaltySpec::new(family(penalty, a, q)?, lam).map_err(err)?;
    spec.value(t.abs()).map_err(err)
}

/// Minimizer of `½h(z−γ)² + p_λ(|γ|)`.
#[pyfunction]
#[pyo3(signature = (penalty, lam, z, h = 1.0, a = None, q = None))]
fn threshold(penalty: &str, lam: f64, z: f64, h: f64, a: Option<f64>, q: Option<f64>) -> PyResult<f64> {
    let spec = PenaltySpec::new(family(penalty, a, q)?, lam).map_err(err)?;
    spec.threshold(z, h).map_err(err)
}

/// Fit at one penalty level from the cross-validated Lasso start. Returns
/// the fit and its inference report.
#[pyfunction]
#[pyo3(signature = (data, lam, penalty = "scad", structure = "isotropic", a = None, q = None, folds = 10, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    data: &Dataset,
    lam: f64,
    penalty: &str,
    structure: &str,
    a: Option<f64>,
    q: Option<f64>,
    folds: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = variance(structure, data.data.q())?;
    let pen = PenaltySpec::new(family(penalty, a, q)?, lam).map_err(err)?;
    let cfg = SolverConfig::default();
    let result = py
        .detach(|| {
            let init = lasso_init(&data.data, &spec, folds, seed, &cfg)?;
            let fit = cgd_fit(&data.data, &spec, &pen, &init.params, &cfg)?;
            let report = InferenceReport::build(&data.data, &spec, &fit)?;
            Ok::<_, pllmm::Error>((fit, report))
        })
        .map_err(err)?;
    to_py(py, &serde_json::json!({ "fit": result.0, "report": result.1 }))
}

/// BIC-selected regularization path.
#[pyfunction]
#[pyo3(signature = (data, penalty = "scad", structure = "isotropic", a = None, q = None, n_points = 30, ratio = 1e-3, seed = 0, cold_start = false))]
#[allow(clippy::too_many_arguments)]
fn path<'py>(
    py: Python<'py>,
    data: &Dataset,
    penalty: &str,
    structure: &str,
    a: Option<f64>,
    q: Option<f64>,
    n_points: usize,
    ratio: f64,
    seed: u64,
    cold_start: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = variance(structure, data.data.q())?;
    let fam = family(penalty, a, q)?;
    let config = PathConfig { n_points, ratio, seed, cold_start, ..PathConfig::default() };
    let res = py
        .detach(|| fit_path(&data.data, &spec, fam, &SolverConfig::default(), &config))
        .map_err(err)?;
    let out = serde_json::json!({
        "grid": res.grid,
        "bic": res.bic_values.iter().map(|b| b.is_finite().then_some(*b)).collect::<Vec<_>>(),
        "selected_index": res.selected_index,
        "selected_lambda": res.selected_lambda(),
        "selected": res.selected_fit(),
        "failures": res.failures,
        "lasso_lambda": res.lasso_lambda,
    });
    to_py(py, &out)
}

/// Posterior modes of the random effects, one list per group.
#[pyfunction]
#[pyo3(signature = (data, beta, sigma2, theta2, structure = "isotropic"))]
fn predict(
    data: &Dataset,
    beta: Vec<f64>,
    sigma2: f64,
    theta2: Vec<f64>,
    structure: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let spec = variance(structure, data.data.q())?;
    let params = ModelParameters::new(beta, sigma2, theta2).map_err(err)?;
    let effects = predict_random_effects(&data.data, &spec, &params).map_err(err)?;
    Ok(effects.iter().map(|b| b.iter().copied().collect()).collect())
}

/// Replicated simulation of the grouped design with `β₀ = (1, 2, 4, 3, 3, 0, …)`.
/// With `compare` both SCAD and L1 run on the same datasets.
#[pyfunction]
#[pyo3(signature = (p = 10, rho = 0.0, reps = 100, seed = 1, groups = 25, penalty = "scad", compare = false))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    p: usize,
    rho: f64,
    reps: usize,
    seed: u64,
    groups: usize,
    penalty: &str,
    compare: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let scenario = SimulationScenario {
        p,
        rho,
        replicates: reps,
        seed,
        groups,
        penalty: family(penalty, None, None)?,
        ..SimulationScenario::default()
    };
    if compare {
        let c = py.detach(|| compare_penalties(&scenario)).map_err(err)?;
        to_py(py, &c)
    } else {
        let s = py.detach(|| run_scenario(&scenario)).map_err(err)?;
        to_py(py, &s)
    }
}

#[pymodule]
fn pllmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Adds the classes and functions to `m`; lets an embedded interpreter load
/// the bindings without the shared library.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(penalty_value, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(path, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
