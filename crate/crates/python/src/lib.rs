//! Python bindings. Graphs, catalogs and tensor maps cross the boundary as the
//! same JSON documents the CLI reads; tensors are `Tensor` objects.

use std::collections::BTreeMap;

use geomtensor::autodiff::backward as engine_backward;
use geomtensor::document::{graph_from_json, graph_to_json};
use geomtensor::geometry::{decompose_transform, raster_execute, Transform};
use geomtensor::graph::{
    module_run, module_split, session_run, workload_report as engine_workload, Graph, OperatorRegistry,
};
use geomtensor::search::{backend_power as engine_power, optimize_tile as engine_tile, BackendSpec, Catalog};
use geomtensor::{Error, Tensor};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(geomtensor, GeomError, PyException, "Engine error.");
create_exception!(geomtensor, ModeError, GeomError, "Control flow reached session mode.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Mode(_) => ModeError::new_err(e.to_string()),
        _ => GeomError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Tensor", from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f32>) -> PyResult<Self> {
        Ok(PyTensor { inner: Tensor::new(shape, data).map_err(to_py)? })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> PyResult<Self> {
        Ok(PyTensor { inner: Tensor::zeros(shape).map_err(to_py)? })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn numel(&self) -> usize {
        self.inner.numel()
    }

    fn __len__(&self) -> usize {
        self.inner.numel()
    }

    fn __eq__(&self, other: &PyTensor) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

#[pyclass(name = "Graph")]
struct PyGraph {
    inner: Graph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGraph { inner: graph_from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        graph_to_json(&self.inner).map_err(to_py)
    }

    #[getter]
    fn inputs(&self) -> Vec<String> {
        self.inner.inputs.clone()
    }

    #[getter]
    fn outputs(&self) -> Vec<String> {
        self.inner.outputs.clone()
    }

    #[getter]
    fn loss(&self) -> Option<String> {
        self.inner.loss.clone()
    }

    fn has_control_flow(&self) -> bool {
        self.inner.has_control_flow()
    }

    /// Operator counts per category after the geometric pass.
    fn census(&self) -> PyResult<BTreeMap<String, usize>> {
        let g = geomtensor::graph::geometric_pass(&self.inner).map_err(to_py)?;
        Ok(g.census().into_iter().map(|(c, n)| (format!("{c:?}").to_lowercase(), n)).collect())
    }

    fn __repr__(&self) -> String {
        format!("Graph({} operators)", self.inner.operators.len())
    }
}

fn unwrap_inputs(inputs: BTreeMap<String, PyTensor>) -> BTreeMap<String, Tensor> {
    inputs.into_iter().map(|(k, v)| (k, v.inner)).collect()
}

fn wrap(outputs: BTreeMap<String, Tensor>) -> BTreeMap<String, PyTensor> {
    outputs.into_iter().map(|(k, v)| (k, PyTensor { inner: v })).collect()
}

fn catalog(json: Option<&str>) -> PyResult<Vec<BackendSpec>> {
    match json {
        Some(text) => Ok(Catalog::from_json(text).map_err(to_py)?.backends),
        None => Ok(Vec::new()),
    }
}

/// Runs a control-flow-free graph. Returns `(outputs, selected, executed)`.
#[pyfunction]
#[pyo3(signature = (graph, inputs, catalog_json=None))]
fn run_session(
    graph: &PyGraph,
    inputs: BTreeMap<String, PyTensor>,
    catalog_json: Option<&str>,
) -> PyResult<(BTreeMap<String, PyTensor>, String, String)> {
    let out = session_run(&graph.inner, &unwrap_inputs(inputs), &catalog(catalog_json)?).map_err(to_py)?;
    Ok((wrap(out.outputs), out.selected, out.executed))
}

/// Runs any graph by splitting it at control-flow operators.
#[pyfunction]
#[pyo3(signature = (graph, inputs, catalog_json=None))]
fn run_module(
    graph: &PyGraph,
    inputs: BTreeMap<String, PyTensor>,
    catalog_json: Option<&str>,
) -> PyResult<BTreeMap<String, PyTensor>> {
    let prog = module_split(&graph.inner).map_err(to_py)?;
    Ok(wrap(module_run(&prog, &unwrap_inputs(inputs), &catalog(catalog_json)?).map_err(to_py)?))
}

/// Loss value and gradients of `loss` with respect to `wrt`.
#[pyfunction]
fn backward(
    graph: &PyGraph,
    inputs: BTreeMap<String, PyTensor>,
    loss: &str,
    wrt: Vec<String>,
) -> PyResult<(f32, BTreeMap<String, PyTensor>)> {
    let g = engine_backward(&graph.inner, &unwrap_inputs(inputs), loss, &wrt).map_err(to_py)?;
    Ok((g.loss, wrap(g.grads)))
}

/// `(naive, geometric, reduction)`; reduction is `None` when naive is zero.
#[pyfunction]
fn workload_report(aop: u64, top: u64, cop: u64, fop: u64, backends: u64) -> (u64, u64, Option<f64>) {
    let r = engine_workload(&OperatorRegistry { aop, top, cop, fop, ba: backends });
    (r.naive, r.geometric, r.reduction)
}

#[pyfunction]
fn optimize_tile(a: usize, e: usize, b: usize, registers: usize) -> PyResult<(usize, usize)> {
    engine_tile(a, e, b, registers).map_err(to_py)
}

/// Throughput of the first backend in a catalog document.
#[pyfunction]
fn backend_power(catalog_json: &str) -> PyResult<f64> {
    Ok(engine_power(&catalog(Some(catalog_json))?[0]))
}

/// Slices `x` through a single raster: `begin` and `size` per axis.
#[pyfunction]
fn slice(x: &PyTensor, begin: Vec<usize>, size: Vec<usize>) -> PyResult<PyTensor> {
    let r = decompose_transform(&Transform::Slice { begin, size }, &[x.inner.shape().to_vec()]).map_err(to_py)?;
    Ok(PyTensor { inner: raster_execute(&r, &[&x.inner]).map_err(to_py)? })
}

#[pymodule]
#[pyo3(name = "geomtensor")]
fn geomtensor_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(run_module, m)?)?;
    m.add_function(wrap_pyfunction!(backward, m)?)?;
    m.add_function(wrap_pyfunction!(workload_report, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_tile, m)?)?;
    m.add_function(wrap_pyfunction!(backend_power, m)?)?;
    m.add_function(wrap_pyfunction!(slice, m)?)?;
    m.add("GeomError", m.py().get_type::<GeomError>())?;
    m.add("ModeError", m.py().get_type::<ModeError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
