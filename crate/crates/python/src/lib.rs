//! Python bindings: tables, programs, decompilation and synthesis.
//!
//! Structured values (elements, configs, Vega-Lite documents) cross the
//! boundary as plain Python dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde_json::Value;

use vizsynth_core::compile::{render_json, Candidate as CoreCandidate};
use vizsynth_core::decompile::decompile as core_decompile;
use vizsynth_core::grammar::ExampleElement;
use vizsynth_core::lang::parse;
use vizsynth_core::pipeline::{run, run_request, ConfigOverrides, SynthesisRequest};
use vizsynth_core::synth::SearchConfig;
use vizsynth_core::{contains as core_contains, eval, load_csv, Table as CoreTable, TransformProgram};

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(value_error)
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> PyResult<T> {
    serde_json::from_value(v).map_err(|e| value_error(format!("{what}: {e}")))
}

/// A typed table.
#[pyclass(module = "vizsynth", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct Table {
    inner: CoreTable,
}

#[pymethods]
impl Table {
    /// Parses CSV text with a header row.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Table> {
        let inner = load_csv(text.as_bytes(), true).map_err(value_error)?;
        Ok(Table { inner })
    }

    /// Reads `{"columns": [{"name", "type"?}], "rows": [[...]]}`.
    #[staticmethod]
    fn from_json(obj: &Bound<'_, PyAny>) -> PyResult<Table> {
        let v = match obj.cast::<PyString>() {
            Ok(s) => serde_json::from_str(s.to_str()?).map_err(value_error)?,
            Err(_) => from_py(obj)?,
        };
        let inner = CoreTable::from_json(&v).map_err(value_error)?;
        Ok(Table { inner })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_json<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.to_json())
    }

    /// `(name, type)` pairs.
    #[getter]
    fn columns(&self) -> Vec<(String, String)> {
        self.inner
            .columns()
            .iter()
            .map(|c| (c.name.clone(), c.ty.as_str().to_string()))
            .collect()
    }

    #[getter]
    fn num_rows(&self) -> usize {
        self.inner.num_rows()
    }

    #[getter]
    fn num_cols(&self) -> usize {
        self.inner.num_cols()
    }

    fn __len__(&self) -> usize {
        self.inner.num_rows()
    }

    fn __repr__(&self) -> String {
        let names: Vec<&str> = self.inner.column_names().collect();
        format!("Table({} rows, columns={:?})", self.inner.num_rows(), names)
    }
}

/// A transformation program in pipe syntax.
#[pyclass(module = "vizsynth", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct Program {
    inner: TransformProgram,
}

#[pymethods]
impl Program {
    #[new]
    fn new(text: &str) -> PyResult<Program> {
        let inner = parse(text).map_err(value_error)?;
        Ok(Program { inner })
    }

    #[getter]
    fn complexity(&self) -> usize {
        self.inner.complexity()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Runs the program; errors name the failing operator.
    fn eval(&self, table: &Table) -> PyResult<Table> {
        let inner = eval(&self.inner, &table.inner).map_err(value_error)?;
        Ok(Table { inner })
    }

    fn __str__(&self) -> String {
        self.inner.serialize()
    }

    fn __repr__(&self) -> String {
        format!("Program({:?})", self.inner.serialize())
    }
}

/// One synthesized visualization.
#[pyclass(module = "vizsynth", frozen)]
pub struct Candidate {
    inner: CoreCandidate,
}

#[pymethods]
impl Candidate {
    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn complexity(&self) -> usize {
        self.inner.complexity
    }

    /// Serialized program per layer.
    #[getter]
    fn programs(&self) -> Vec<String> {
        self.inner.program_texts()
    }

    /// Per layer, the output column chosen for each example column.
    #[getter]
    fn mappings(&self) -> Vec<Vec<String>> {
        self.inner.mappings.iter().map(|m| m.targets.clone()).collect()
    }

    #[getter]
    fn marks(&self) -> Vec<String> {
        self.inner
            .group_key
            .marks
            .iter()
            .filter_map(|m| serde_json::to_value(m).ok())
            .filter_map(|v| v.as_str().map(String::from))
            .collect()
    }

    #[getter]
    fn vegalite<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.vegalite)
    }

    /// The Vega-Lite document as canonical JSON text.
    fn vegalite_json(&self) -> String {
        self.inner.vegalite_text()
    }

    /// Transformed data of each layer.
    fn tables(&self) -> Vec<Table> {
        self.inner
            .rendered
            .iter()
            .map(|t| Table {
                inner: (**t).clone(),
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("Candidate({}, {:?})", &self.inner.id[..12], self.programs())
    }
}

fn elements_from(obj: &Bound<'_, PyAny>) -> PyResult<Vec<ExampleElement>> {
    from_value(from_py(obj)?, "elements")
}

fn config_from(obj: Option<&Bound<'_, PyAny>>) -> PyResult<SearchConfig> {
    let overrides: ConfigOverrides = match obj {
        Some(o) if !o.is_none() => from_value(from_py(o)?, "config")?,
        _ => ConfigOverrides::default(),
    };
    let cfg = overrides.apply(&SearchConfig::default());
    cfg.validate().map_err(value_error)?;
    Ok(cfg)
}

/// Synthesizes ranked candidates for example elements.
///
/// `config` keys: max_depth, max_candidates, worker_budgets_ms (list, None
/// for unbounded), rel_tol, memoize.
#[pyfunction]
#[pyo3(signature = (table, elements, config=None))]
fn synthesize(
    py: Python<'_>,
    table: &Table,
    elements: &Bound<'_, PyAny>,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<Vec<Candidate>> {
    let elements = elements_from(elements)?;
    let cfg = config_from(config)?;
    let input = table.inner.clone();
    let out = py
        .detach(move || run(&input, &elements, &cfg))
        .map_err(value_error)?;
    Ok(out
        .candidates
        .into_iter()
        .map(|inner| Candidate { inner })
        .collect())
}

/// Runs a service-style request (JSON text) and returns the response JSON.
#[pyfunction]
fn synthesize_json(py: Python<'_>, request: &str) -> PyResult<String> {
    let req: SynthesisRequest = serde_json::from_str(request).map_err(value_error)?;
    let out = py
        .detach(move || run_request(&req, &SearchConfig::default(), None))
        .map_err(value_error)?;
    let v = serde_json::to_value(out.response()).map_err(value_error)?;
    Ok(render_json(&v))
}

/// Layer sketches and example tables for example elements.
#[pyfunction]
fn decompile<'py>(py: Python<'py>, elements: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let sketches = core_decompile(&elements_from(elements)?).map_err(value_error)?;
    to_py(py, &serde_json::to_value(&sketches).map_err(value_error)?)
}

/// Every column mapping under which `example` is contained in `table`.
#[pyfunction]
#[pyo3(signature = (table, example, rel_tol=1e-6))]
fn contains(table: &Table, example: &Table, rel_tol: f64) -> Vec<Vec<String>> {
    core_contains(&table.inner, &example.inner, rel_tol)
        .into_iter()
        .map(|m| m.targets)
        .collect()
}

#[pymodule]
pub fn vizsynth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Table>()?;
    m.add_class::<Program>()?;
    m.add_class::<Candidate>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_json, m)?)?;
    m.add_function(wrap_pyfunction!(decompile, m)?)?;
    m.add_function(wrap_pyfunction!(contains, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn with_python(f: impl for<'py> FnOnce(Python<'py>)) {
        Python::initialize();
        Python::attach(f);
    }

    #[test]
    fn json_values_roundtrip_through_python() {
        with_python(|py| {
            let v = json!({"a": [1, 2.5, "x", null, true], "b": {"c": []}});
            let obj = to_py(py, &v).unwrap();
            assert_eq!(from_py(&obj).unwrap(), v);
        });
    }

    #[test]
    fn config_overrides_apply_to_defaults() {
        with_python(|py| {
            assert_eq!(config_from(None).unwrap(), SearchConfig::default());
            let obj = to_py(py, &json!({"max_depth": 2, "worker_budgets_ms": [null]})).unwrap();
            let cfg = config_from(Some(&obj)).unwrap();
            assert_eq!(cfg.max_depth, 2);
            assert_eq!(cfg.worker_budgets_ms, vec![None]);
            let bad = to_py(py, &json!({"max_depth": 0})).unwrap();
            assert!(config_from(Some(&bad)).is_err());
            let unknown = to_py(py, &json!({"depth": 2})).unwrap();
            assert!(config_from(Some(&unknown)).is_err());
        });
    }

    #[test]
    fn elements_parse_from_dicts() {
        with_python(|py| {
            let obj = to_py(py, &json!([{"kind": "bar", "props": {"x": "a", "y": 1}}])).unwrap();
            let els = elements_from(&obj).unwrap();
            assert_eq!(els.len(), 1);
            let bad = to_py(py, &json!([{"kind": "pie", "props": {}}])).unwrap();
            assert!(elements_from(&bad).is_err());
        });
    }
}
