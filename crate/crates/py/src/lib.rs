//! Python bindings. Reports come back as plain dicts and lists with the same
//! keys as the CLI's JSON output.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use ropescale_core as rs;
use serde::Serialize;
use serde_json::Value;

fn value_error(e: rs::RopeError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

fn stack(text: &str) -> PyResult<Vec<rs::VariantSpec>> {
    rs::parse_stack(text).map_err(value_error)
}

/// Rotary configuration: head dimension, base and context lengths.
#[pyclass(name = "RopeConfig", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyRopeConfig {
    inner: rs::RopeConfig,
}

#[pymethods]
impl PyRopeConfig {
    #[new]
    #[pyo3(signature = (head_dim = 128, base = 10000.0, train_len = 4096, tune_len = None))]
    fn new(head_dim: usize, base: f64, train_len: u64, tune_len: Option<u64>) -> PyResult<Self> {
        let mut inner = rs::RopeConfig::new(head_dim, base, train_len).map_err(value_error)?;
        if let Some(t) = tune_len {
            inner = inner.with_tune_len(t).map_err(value_error)?;
        }
        Ok(Self { inner })
    }

    #[getter]
    fn head_dim(&self) -> usize {
        self.inner.head_dim
    }

    #[getter]
    fn base(&self) -> f64 {
        self.inner.base
    }

    #[getter]
    fn train_len(&self) -> u64 {
        self.inner.train_len
    }

    /// Tuning length, falling back to the training length.
    #[getter]
    fn tune_len(&self) -> u64 {
        self.inner.tune_len()
    }

    fn pairs(&self) -> usize {
        self.inner.pairs()
    }

    fn with_base(&self, base: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_base(base).map_err(value_error)?,
        })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "RopeConfig(head_dim={}, base={:?}, train_len={}, tune_len={})",
            c.head_dim,
            c.base,
            c.train_len,
            c.tune_len.map_or("None".to_string(), |t| t.to_string())
        )
    }
}

/// A variant stack resolved against a configuration.
#[pyclass(name = "Schedule", frozen)]
struct PySchedule {
    inner: rs::Schedule,
}

#[pymethods]
impl PySchedule {
    #[new]
    #[pyo3(signature = (config, variant = "vanilla"))]
    fn new(config: &PyRopeConfig, variant: &str) -> PyResult<Self> {
        let inner = rs::Schedule::new(&stack(variant)?, &config.inner).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[getter]
    fn base(&self) -> f64 {
        self.inner.base()
    }

    fn alpha_at(&self, t: f64) -> f64 {
        self.inner.alpha_at(t)
    }

    fn post_scale(&self, t: f64) -> f64 {
        self.inner.post_scale(t)
    }

    fn angles_at<'py>(&self, py: Python<'py>, t: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.angles_at(t).map_err(value_error)?)
    }

    /// Score breakdown `{"total", "per_dim"}` for query position `t`, key position `s`.
    fn score<'py>(
        &self,
        py: Python<'py>,
        q: Vec<f64>,
        k: Vec<f64>,
        t: f64,
        s: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let b = self
            .inner
            .score(&q.into(), &k.into(), t, s)
            .map_err(value_error)?;
        to_py(py, &b)
    }
}

#[pyfunction]
fn rotary_angles<'py>(py: Python<'py>, config: &PyRopeConfig) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &rs::rotary_angles(&config.inner).map_err(value_error)?)
}

#[pyfunction]
fn apply_rotation(v: Vec<f64>, position: f64, config: &PyRopeConfig) -> PyResult<Vec<f64>> {
    let angles = rs::rotary_angles(&config.inner).map_err(value_error)?;
    Ok(rs::apply_rotation(&v.into(), position, &angles)
        .map_err(value_error)?
        .into_inner())
}

#[pyfunction]
fn relative_phase(t: f64, s: f64, config: &PyRopeConfig) -> PyResult<Vec<f64>> {
    let angles = rs::rotary_angles(&config.inner).map_err(value_error)?;
    rs::relative_phase(t, s, &angles).map_err(value_error)
}

#[pyfunction]
fn attention_score<'py>(
    py: Python<'py>,
    q: Vec<f64>,
    k: Vec<f64>,
    t: f64,
    s: f64,
    config: &PyRopeConfig,
) -> PyResult<Bound<'py, PyAny>> {
    let angles = rs::rotary_angles(&config.inner).map_err(value_error)?;
    to_py(
        py,
        &rs::attention_score_real(&q.into(), &k.into(), t, s, &angles).map_err(value_error)?,
    )
}

#[pyfunction]
fn attention_score_complex(
    q: Vec<f64>,
    k: Vec<f64>,
    t: f64,
    s: f64,
    config: &PyRopeConfig,
) -> PyResult<f64> {
    let angles = rs::rotary_angles(&config.inner).map_err(value_error)?;
    rs::attention_score_complex(&q.into(), &k.into(), t, s, &angles).map_err(value_error)
}

#[pyfunction]
fn period(n: usize, config: &PyRopeConfig) -> PyResult<f64> {
    rs::period(n, &config.inner).map_err(value_error)
}

#[pyfunction]
fn critical_dimension(head_dim: usize, base: f64, context: f64) -> PyResult<usize> {
    rs::critical_dimension(head_dim, base, context).map_err(value_error)
}

/// `(beta1, beta2, beta3)` for a context length.
#[pyfunction]
fn smaller_base_pivots(context: f64) -> PyResult<(f64, f64, f64)> {
    let p = rs::smaller_base_pivots(context).map_err(value_error)?;
    Ok((p.beta1, p.beta2, p.beta3))
}

#[pyfunction]
fn extrapolation_bound(head_dim: usize, base: f64, critical_dim: usize) -> PyResult<f64> {
    rs::extrapolation_bound(head_dim, base, critical_dim).map_err(value_error)
}

#[pyfunction]
fn critical_base(train_len: f64, tune_len: f64) -> PyResult<f64> {
    rs::critical_base(train_len, tune_len).map_err(value_error)
}

#[pyfunction]
fn extended_law<'py>(py: Python<'py>, config: &PyRopeConfig) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &rs::extended_law(&config.inner).map_err(value_error)?)
}

/// Parses variant shorthand such as `"ntk-fixed:8"` or `"base:500+log-scaled"`.
#[pyfunction]
fn parse_variant<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &stack(text)?)
}

#[pyfunction]
fn list_variants<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &rs::list_variants())
}

#[pyfunction]
#[pyo3(signature = (q, k, t, s, config, variant = "vanilla"))]
fn score<'py>(
    py: Python<'py>,
    q: Vec<f64>,
    k: Vec<f64>,
    t: f64,
    s: f64,
    config: &PyRopeConfig,
    variant: &str,
) -> PyResult<Bound<'py, PyAny>> {
    PySchedule::new(config, variant)?.score(py, q, k, t, s)
}

#[pyfunction]
fn dynamic_ntk_alpha(t: f64, t_extra_ref: f64) -> f64 {
    rs::dynamic_ntk_alpha(t, t_extra_ref)
}

#[pyfunction]
fn log_scale_factor(t: f64, t_extra_ref: f64) -> f64 {
    rs::log_scale_factor(t, t_extra_ref)
}

#[pyfunction]
#[pyo3(signature = (n, rel, config, t_extra_ref, gamma = 0.4))]
fn xpos_decay(
    n: usize,
    rel: f64,
    config: &PyRopeConfig,
    t_extra_ref: f64,
    gamma: f64,
) -> PyResult<f64> {
    rs::xpos_decay(n, rel, &config.inner, gamma, t_extra_ref).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (config, context_len = None))]
fn phase_coverage<'py>(
    py: Python<'py>,
    config: &PyRopeConfig,
    context_len: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let context = context_len.unwrap_or(config.inner.train_len);
    to_py(
        py,
        &rs::phase_coverage(&config.inner, context).map_err(value_error)?,
    )
}

/// `(reliable, ood)` parts of the vanilla score split at dimension `d_split`.
#[pyfunction]
fn ood_split(
    q: Vec<f64>,
    k: Vec<f64>,
    t: f64,
    s: f64,
    config: &PyRopeConfig,
    d_split: usize,
) -> PyResult<(f64, f64)> {
    rs::ood_split(&q.into(), &k.into(), t, s, &config.inner, d_split).map_err(value_error)
}

#[pyfunction]
fn unseen_phase_flags(config: &PyRopeConfig, rel: u64) -> PyResult<Vec<bool>> {
    rs::unseen_phase_flags(&config.inner, rel).map_err(value_error)
}

#[pyfunction]
fn synthetic_probes(head_dim: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    rs::synthetic_probes(head_dim, count, seed)
        .into_iter()
        .map(|(q, k)| (q.into_inner(), k.into_inner()))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (config, variant = "vanilla", max_len = 32768, stride = 256, sample_count = 16, seed = 42))]
fn score_trace<'py>(
    py: Python<'py>,
    config: &PyRopeConfig,
    variant: &str,
    max_len: u64,
    stride: u64,
    sample_count: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let stack = stack(variant)?;
    let options = rs::TraceOptions {
        max_len,
        stride,
        sample_count,
        seed,
    };
    let config = config.inner;
    let trace = py
        .detach(|| rs::score_trace(&config, &stack, &options))
        .map_err(value_error)?;
    to_py(py, &trace)
}

#[pymodule]
fn ropescale(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRopeConfig>()?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(rotary_angles, m)?)?;
    m.add_function(wrap_pyfunction!(apply_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(relative_phase, m)?)?;
    m.add_function(wrap_pyfunction!(attention_score, m)?)?;
    m.add_function(wrap_pyfunction!(attention_score_complex, m)?)?;
    m.add_function(wrap_pyfunction!(period, m)?)?;
    m.add_function(wrap_pyfunction!(critical_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(smaller_base_pivots, m)?)?;
    m.add_function(wrap_pyfunction!(extrapolation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(critical_base, m)?)?;
    m.add_function(wrap_pyfunction!(extended_law, m)?)?;
    m.add_function(wrap_pyfunction!(parse_variant, m)?)?;
    m.add_function(wrap_pyfunction!(list_variants, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(dynamic_ntk_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(log_scale_factor, m)?)?;
    m.add_function(wrap_pyfunction!(xpos_decay, m)?)?;
    m.add_function(wrap_pyfunction!(phase_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(ood_split, m)?)?;
    m.add_function(wrap_pyfunction!(unseen_phase_flags, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_probes, m)?)?;
    m.add_function(wrap_pyfunction!(score_trace, m)?)?;
    Ok(())
}
