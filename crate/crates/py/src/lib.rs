//! Python bindings: a `Fabric` handle over the store plus the stateless
//! helpers and the command-line entry point.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyList;

use datafabric::cli::{self, load_fabric};
use datafabric::fedsim;
use datafabric::governance::{self, Aggregate, Policy, UserContext};
use datafabric::navigate::{EdgeWeight, HyperPath, SimilarityWeight, StepWeight, UnitWeight};
use datafabric::store;
use datafabric::transform::Value;
use datafabric::vectorize;

create_exception!(datafabric, FabricError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    FabricError::new_err(e.to_string())
}

fn value_to_py(py: Python<'_>, v: Option<&Value>) -> PyResult<Py<PyAny>> {
    Ok(match v {
        None => py.None(),
        Some(Value::Num(x)) => x.into_pyobject(py)?.into_any().unbind(),
        Some(Value::Cat(s)) => s.into_pyobject(py)?.into_any().unbind(),
    })
}

/// A loaded fabric. Mutations either keep it valid or raise and leave it
/// unchanged.
#[pyclass(name = "Fabric", module = "datafabric")]
struct PyFabric {
    inner: store::Fabric,
}

impl PyFabric {
    fn path_dict(&self, p: &HyperPath) -> (f64, Vec<String>, Vec<String>) {
        let edges = p.edges.iter().map(|&e| self.inner.edge_name(e).to_owned()).collect();
        let vertices = p.vertices.iter().map(|&v| self.inner.name_of(v).to_owned()).collect();
        (p.cost, edges, vertices)
    }
}

#[pymethods]
impl PyFabric {
    /// Parses fabric-file text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let (_, inner) = load_fabric(text).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| err(format!("{path}: {e}")))?;
        Self::from_toml(&text)
    }

    fn datasets(&self) -> Vec<String> {
        cli::dataset_names(&self.inner).into_iter().collect()
    }

    fn schema(&self, dataset: &str) -> PyResult<Vec<String>> {
        let d = self.inner.dataset_named(dataset).map_err(err)?;
        Ok(d.schema().names().map(str::to_owned).collect())
    }

    /// Rows of the dataset; missing values are `None`.
    fn records<'py>(&self, py: Python<'py>, dataset: &str) -> PyResult<Bound<'py, PyList>> {
        let d = self.inner.dataset_named(dataset).map_err(err)?;
        let out = PyList::empty(py);
        for row in d.records() {
            let cells = row.iter().map(|c| value_to_py(py, c.as_ref())).collect::<PyResult<Vec<_>>>()?;
            out.append(cells)?;
        }
        Ok(out)
    }

    /// `(condition, element, detail)` per violation; empty when valid.
    #[pyo3(signature = (strict = false))]
    fn validate(&self, strict: bool) -> Vec<(String, String, String)> {
        self.inner
            .validate_with(strict)
            .into_iter()
            .map(|v| (v.condition.numeral().to_owned(), v.element, v.detail))
            .collect()
    }

    fn functorial_consistency(&self) -> bool {
        self.inner.functorial_consistency()
    }

    /// `(cost, edges, vertices)` of the cheapest hyperpath, or `None`.
    #[pyo3(signature = (source, target, weight = "unit"))]
    fn navigate(&self, source: &str, target: &str, weight: &str) -> PyResult<Option<(f64, Vec<String>, Vec<String>)>> {
        let w: Box<dyn StepWeight> = match weight {
            "unit" => Box::new(UnitWeight),
            "edge" => Box::new(EdgeWeight),
            "similarity" => Box::new(SimilarityWeight::new(self.inner.attribute_sets())),
            other => return Err(err(format!("unknown weight `{other}`"))),
        };
        let p = self.inner.navigate(source, target, w.as_ref()).map_err(err)?;
        Ok(p.map(|p| self.path_dict(&p)))
    }

    /// `(transforms, ancestors, edges)` reached backwards from `dataset`.
    fn trace(&self, dataset: &str) -> PyResult<(Vec<String>, Vec<String>, Vec<String>)> {
        let t = self.inner.trace(dataset).map_err(err)?;
        let ancestors = t.ancestors.iter().map(|&v| self.inner.name_of(v).to_owned()).collect();
        let edges = t.edges.iter().map(|&e| self.inner.edge_name(e).to_owned()).collect();
        Ok((t.transforms.into_iter().collect(), ancestors, edges))
    }

    /// `(granted, failing policy ids)`.
    #[pyo3(signature = (dataset, user, role, clearance = 0, at = 0.0))]
    fn evaluate(&self, dataset: &str, user: &str, role: &str, clearance: u64, at: f64) -> PyResult<(bool, Vec<String>)> {
        let ctx = UserContext::new(user, role, clearance, at).map_err(err)?;
        let d = self.inner.evaluate(dataset, &ctx).map_err(err)?;
        Ok((d.granted, d.failing.into_iter().map(|x| x.policy).collect()))
    }

    fn add_policy(&mut self, id: &str, predicate: &str) -> PyResult<()> {
        let p = Policy::parse(id, predicate).map_err(err)?;
        self.inner.add_policy(p).map_err(err)
    }

    fn record(&mut self, meta: &str, transform_id: &str, at: f64) -> PyResult<()> {
        self.inner.record(meta, transform_id, at).map_err(err)
    }

    /// Integrates `right` into `left`, stores the result as `into` and
    /// returns `(transformation id, objective, unified schema)`.
    #[pyo3(signature = (left, right, into, meta, at, lam = 0.5, theta = 0.5))]
    #[allow(clippy::too_many_arguments)]
    fn integrate(
        &mut self,
        left: &str,
        right: &str,
        into: &str,
        meta: &str,
        at: f64,
        lam: f64,
        theta: f64,
    ) -> PyResult<(String, f64, Vec<String>)> {
        let r = self.inner.integrate(left, right, into, meta, at, lam, theta).map_err(err)?;
        let schema = r.unified.schema().names().map(str::to_owned).collect();
        Ok((r.transformation.id, r.objective, schema))
    }

    /// Noisy `sum` or `mean` of a numeric attribute.
    #[pyo3(signature = (dataset, attribute, epsilon, aggregate = "sum", sensitivity = 1.0, seed = 0))]
    fn dp_aggregate(&self, dataset: &str, attribute: &str, epsilon: f64, aggregate: &str, sensitivity: f64, seed: u64) -> PyResult<f64> {
        let d = self.inner.dataset_named(dataset).map_err(err)?;
        let col = d
            .schema()
            .names()
            .position(|n| n == attribute)
            .ok_or_else(|| err(format!("no attribute `{attribute}` in {dataset}")))?;
        let values: Vec<f64> = d
            .records()
            .iter()
            .filter_map(|r| match r[col] {
                Some(Value::Num(x)) => Some(x),
                _ => None,
            })
            .collect();
        governance::dp_aggregate(&values, parse_aggregate(aggregate)?, epsilon, sensitivity, seed).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Fabric(datasets={:?})", self.datasets())
    }
}

fn parse_aggregate(s: &str) -> PyResult<Aggregate> {
    match s {
        "sum" => Ok(Aggregate::Sum),
        "mean" => Ok(Aggregate::Mean),
        other => Err(err(format!("unknown aggregate `{other}`"))),
    }
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    vectorize::cosine_similarity(&a, &b).map_err(err)
}

#[pyfunction]
fn ks_statistic(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    fedsim::ks_statistic(&a, &b).map_err(err)
}

/// `(drifted, statistic, threshold)`.
#[pyfunction]
#[pyo3(signature = (a, b, alpha = 0.05))]
fn drift_detect(a: Vec<f64>, b: Vec<f64>, alpha: f64) -> PyResult<(bool, f64, f64)> {
    let r = fedsim::drift_detect(&a, &b, alpha).map_err(err)?;
    Ok((r.drifted, r.statistic, r.threshold))
}

/// Noisy aggregate of raw values.
#[pyfunction]
#[pyo3(signature = (values, epsilon, aggregate = "sum", sensitivity = 1.0, seed = 0))]
fn dp_aggregate(values: Vec<f64>, epsilon: f64, aggregate: &str, sensitivity: f64, seed: u64) -> PyResult<f64> {
    governance::dp_aggregate(&values, parse_aggregate(aggregate)?, epsilon, sensitivity, seed).map_err(err)
}

/// Runs the command line on `args` (without the program name) and returns
/// `(exit code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let argv = std::iter::once("datafabric".to_owned()).chain(args);
    let o = cli::dispatch(argv);
    (o.code, o.stdout, o.stderr)
}

/// Policy evaluation without a fabric: `data` maps property names to numbers
/// or strings.
#[pyfunction]
#[pyo3(signature = (predicates, data, user, role, clearance = 0, at = 0.0))]
fn evaluate_policies(
    predicates: BTreeMap<String, String>,
    data: BTreeMap<String, Bound<'_, PyAny>>,
    user: &str,
    role: &str,
    clearance: u64,
    at: f64,
) -> PyResult<(bool, Vec<String>)> {
    let policies = predicates
        .iter()
        .map(|(id, text)| Policy::parse(id.as_str(), text).map_err(err))
        .collect::<PyResult<Vec<_>>>()?;
    let mut values = BTreeMap::new();
    for (k, v) in data {
        let v = match v.extract::<f64>() {
            Ok(x) => Value::Num(x),
            Err(_) => Value::Cat(v.extract::<String>()?),
        };
        values.insert(k, v);
    }
    let ctx = UserContext::new(user, role, clearance, at).map_err(err)?;
    let d = governance::evaluate_request(&values, &ctx, &policies).map_err(err)?;
    Ok((d.granted, d.failing.into_iter().map(|x| x.policy).collect()))
}

#[pymodule]
#[pyo3(name = "datafabric")]
pub fn datafabric_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFabric>()?;
    m.add("FabricError", m.py().get_type::<FabricError>())?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(ks_statistic, m)?)?;
    m.add_function(wrap_pyfunction!(drift_detect, m)?)?;
    m.add_function(wrap_pyfunction!(dp_aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_policies, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
