//! Python bindings: knowledge bases, datasets, trained models, classification
//! and explanation.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use plkb::data::{load_csv, Dataset};
use plkb::direct::MaxArity;
use plkb::eval;
use plkb::explain::{explain as explain_query, Direction};
use plkb::inference::{self, InferenceResult};
use plkb::kb::{merge, parse_clause, parse_kb, serialize_kb, KnowledgeBase, WeightedClause};
use plkb::model::{Method, Model};
use plkb::query::{Domains, Query};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_query(s: &str) -> PyResult<Query> {
    s.parse().map_err(err)
}

fn domains_of(dataset: Option<PyRef<'_, PyDataset>>) -> Domains {
    dataset.map(|d| d.inner.domains()).unwrap_or_default()
}

/// Weighted clauses, one `probability clause` per line.
#[pyclass(name = "KnowledgeBase", module = "plkb_py")]
pub struct PyKb {
    inner: KnowledgeBase,
}

#[pymethods]
impl PyKb {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyKb {
            inner: parse_kb(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(err)?;
        PyKb::new(&text)
    }

    fn serialize(&self) -> String {
        serialize_kb(&self.inner)
    }

    /// `(probability, clause)` pairs in order.
    fn clauses(&self) -> Vec<(f64, String)> {
        self.inner.iter().map(|wc| (wc.probability, wc.clause.to_string())).collect()
    }

    fn probability_of(&self, clause: &str) -> PyResult<Option<f64>> {
        Ok(self.inner.probability_of(&parse_clause(clause).map_err(err)?))
    }

    /// A copy with `other`'s clauses added; equal clauses take `other`'s probability.
    fn merge(&self, other: PyRef<'_, PyKb>) -> PyResult<PyKb> {
        let extra: Vec<WeightedClause> = other.inner.iter().cloned().collect();
        Ok(PyKb {
            inner: merge(&self.inner, &extra).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("KnowledgeBase({} clauses)", self.inner.len())
    }
}

#[pyclass(name = "Dataset", module = "plkb_py")]
pub struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (path, label_col = "label", pos_label = "pos"))]
    fn from_csv(path: &str, label_col: &str, pos_label: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: load_csv(path, label_col, pos_label).map_err(err)?,
        })
    }

    /// Rows of single-character values named `a1, a2, ...`.
    #[staticmethod]
    fn from_strings(rows: Vec<(String, bool)>) -> PyResult<Self> {
        Ok(PyDataset {
            inner: Dataset::from_strings(&rows).map_err(err)?,
        })
    }

    #[getter]
    fn features(&self) -> Vec<String> {
        self.inner.features().to_vec()
    }

    #[getter]
    fn n_positive(&self) -> usize {
        self.inner.n_positive()
    }

    /// Each row as a query string with its label.
    fn rows(&self) -> Vec<(String, bool)> {
        self.inner
            .instances()
            .iter()
            .map(|i| (self.inner.query_of(i).to_string(), i.label))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Result", module = "plkb_py", get_all, frozen)]
pub struct PyInference {
    label: bool,
    p_lower: f64,
    p_upper: f64,
    p_avg: f64,
    objective_min: f64,
}

impl From<InferenceResult> for PyInference {
    fn from(r: InferenceResult) -> Self {
        PyInference {
            label: r.label,
            p_lower: r.p_lower,
            p_upper: r.p_upper,
            p_avg: r.p_avg,
            objective_min: r.objective_min,
        }
    }
}

#[pymethods]
impl PyInference {
    fn __repr__(&self) -> String {
        format!(
            "Result(label={}, p_lower={}, p_upper={}, p_avg={}, objective_min={})",
            self.label, self.p_lower, self.p_upper, self.p_avg, self.objective_min
        )
    }
}

#[pyclass(name = "Explanation", module = "plkb_py", get_all, frozen)]
pub struct PyExplanation {
    sub_query: String,
    score: f64,
    /// `"max"` for a positive query, `"min"` for a negative one.
    direction: &'static str,
    label: bool,
    /// Every scored sub-query with its `p_avg`.
    scores: Vec<(String, f64)>,
}

#[pymethods]
impl PyExplanation {
    fn __repr__(&self) -> String {
        format!("Explanation({}, score={}, {})", self.sub_query, self.score, self.direction)
    }
}

#[pyclass(name = "Model", module = "plkb_py")]
pub struct PyModel {
    inner: Model,
}

#[pymethods]
impl PyModel {
    /// `method` is `tree`, `tree-all` or `direct`.
    #[staticmethod]
    #[pyo3(signature = (dataset, method = "direct", max_arity = None))]
    fn train(dataset: PyRef<'_, PyDataset>, method: &str, max_arity: Option<usize>) -> PyResult<Self> {
        let method: Method = method.parse().map_err(err)?;
        let arity = max_arity.map_or(MaxArity::Unbounded, MaxArity::Limited);
        Ok(PyModel {
            inner: Model::train(&dataset.inner, method, arity).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (kb, relevant = false))]
    fn from_kb(kb: PyRef<'_, PyKb>, relevant: bool) -> Self {
        let kb = kb.inner.clone();
        PyModel {
            inner: if relevant { Model::Relevant(kb) } else { Model::Full(kb) },
        }
    }

    fn with_knowledge(&self, kb: PyRef<'_, PyKb>) -> PyResult<PyModel> {
        let extra: Vec<WeightedClause> = kb.inner.iter().cloned().collect();
        Ok(PyModel {
            inner: self.inner.clone().with_knowledge(&extra).map_err(err)?,
        })
    }

    fn kb_for(&self, query: &str) -> PyResult<PyKb> {
        Ok(PyKb {
            inner: self.inner.kb_for(&parse_query(query)?).map_err(err)?,
        })
    }

    fn full_kb(&self) -> PyResult<PyKb> {
        Ok(PyKb {
            inner: self.inner.full_kb().map_err(err)?,
        })
    }

    /// Domains come from `dataset` when given.
    #[pyo3(signature = (query, dataset = None))]
    fn classify(&self, py: Python<'_>, query: &str, dataset: Option<PyRef<'_, PyDataset>>) -> PyResult<PyInference> {
        let query = parse_query(query)?;
        let domains = domains_of(dataset);
        let r = py.detach(|| self.inner.classify(&query, &domains)).map_err(err)?;
        Ok(r.into())
    }

    #[pyo3(signature = (query, k, dataset = None))]
    fn explain(&self, py: Python<'_>, query: &str, k: usize, dataset: Option<PyRef<'_, PyDataset>>) -> PyResult<PyExplanation> {
        let query = parse_query(query)?;
        let domains = domains_of(dataset);
        let report = py
            .detach(|| explain_query(&self.inner, &query, k, &domains))
            .map_err(err)?;
        let e = report.explanation;
        Ok(PyExplanation {
            sub_query: e.sub_query.to_string(),
            score: e.score,
            direction: match e.direction {
                Direction::Max => "max",
                Direction::Min => "min",
            },
            label: report.full.label,
            scores: report.scores.iter().map(|(q, s)| (q.to_string(), *s)).collect(),
        })
    }
}

/// Bounds on `target` (default the class atom `pos`) given the query.
#[pyfunction]
#[pyo3(signature = (kb, query = "", target = "pos", dataset = None))]
fn classify(kb: PyRef<'_, PyKb>, query: &str, target: &str, dataset: Option<PyRef<'_, PyDataset>>) -> PyResult<PyInference> {
    let clause = parse_clause(target).map_err(err)?;
    let atom = match clause.literals() {
        [lit] if !lit.negated => lit.atom.clone(),
        _ => return Err(PyValueError::new_err(format!("target {target:?} is not a single atom"))),
    };
    let r = inference::infer_atom(&kb.inner, &parse_query(query)?, &domains_of(dataset), &atom).map_err(err)?;
    Ok(r.into())
}

#[pyfunction]
#[pyo3(signature = (kb, query, k, dataset = None))]
fn explain(py: Python<'_>, kb: PyRef<'_, PyKb>, query: &str, k: usize, dataset: Option<PyRef<'_, PyDataset>>) -> PyResult<PyExplanation> {
    let model = PyModel {
        inner: Model::Full(kb.inner.clone()),
    };
    model.explain(py, query, k, dataset)
}

/// `(consistent_hint, objective_min)`; a false hint proves inconsistency.
#[pyfunction]
fn check_consistency(kb: PyRef<'_, PyKb>) -> PyResult<(bool, f64)> {
    let c = inference::check_consistency(&kb.inner).map_err(err)?;
    Ok((c.consistent_hint, c.objective_min))
}

/// `(f1, precision, recall)` with `pos` as the positive class.
#[pyfunction]
fn f1_score(predictions: Vec<bool>, labels: Vec<bool>) -> PyResult<(f64, f64, f64)> {
    let r = eval::f1_score(&predictions, &labels).map_err(err)?;
    Ok((r.f1, r.precision, r.recall))
}

#[pymodule]
pub fn plkb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKb>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyInference>()?;
    m.add_class::<PyExplanation>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(check_consistency, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    Ok(())
}
