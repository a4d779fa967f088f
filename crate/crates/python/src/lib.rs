//! Python module `forler`: the experiment commands plus a few readers.
//!
//! Config errors raise `ValueError`, everything else `RuntimeError`.

use std::path::{Path, PathBuf};

use forler_core::env_suite::io::read_dataset;
use forler_core::federation::envelope::ParamEnvelope;
use forler_core::harness::{self, ArmResult, BoundTable, ExperimentConfig, RunSummary, Study};
use forler_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(m) => PyValueError::new_err(m),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn setup(config: &Path, seeds: Option<Vec<u64>>) -> PyResult<(ExperimentConfig, Vec<u64>)> {
    let cfg = ExperimentConfig::load(config).map_err(py_err)?;
    let seeds = seeds.unwrap_or_else(|| cfg.seeds.clone());
    if seeds.is_empty() {
        return Err(PyValueError::new_err("seed list is empty"));
    }
    Ok((cfg, seeds))
}

fn run_dict<'py>(py: Python<'py>, r: &RunSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("algorithm", r.algorithm.as_str())?;
    d.set_item("seed", r.seed)?;
    d.set_item("final_global_return", r.final_global_return)?;
    d.set_item("final_device_mean_return", r.final_device_mean_return)?;
    d.set_item("q_evals_total", r.q_evals_total)?;
    d.set_item("log_path", r.log_path.display().to_string())?;
    d.set_item("global_curve", r.global_curve.clone())?;
    Ok(d)
}

/// Writes device and server datasets; returns the `.ford` paths.
#[pyfunction]
#[pyo3(signature = (config, out, seeds=None))]
fn gen_data(py: Python<'_>, config: PathBuf, out: PathBuf, seeds: Option<Vec<u64>>) -> PyResult<Vec<String>> {
    let (cfg, seeds) = setup(&config, seeds)?;
    let files = py.detach(|| harness::gen_data(&cfg, &out, &seeds)).map_err(py_err)?;
    Ok(files.iter().map(|p| p.display().to_string()).collect())
}

/// Trains every seed; returns one summary dict per seed.
#[pyfunction]
#[pyo3(signature = (config, out, seeds=None))]
fn train<'py>(py: Python<'py>, config: PathBuf, out: PathBuf, seeds: Option<Vec<u64>>) -> PyResult<Bound<'py, PyList>> {
    let (cfg, seeds) = setup(&config, seeds)?;
    let runs = py.detach(|| harness::train(&cfg, &out, &seeds)).map_err(py_err)?;
    let items = runs.iter().map(|r| run_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

/// Runs a study; returns one dict per arm with its per-seed runs.
#[pyfunction]
#[pyo3(signature = (config, study, out, seeds=None))]
fn ablate<'py>(
    py: Python<'py>,
    config: PathBuf,
    study: &str,
    out: PathBuf,
    seeds: Option<Vec<u64>>,
) -> PyResult<Bound<'py, PyList>> {
    let (cfg, seeds) = setup(&config, seeds)?;
    let study: Study = study.parse().map_err(py_err)?;
    let arms: Vec<ArmResult> = py.detach(|| harness::ablate(&cfg, study, &out, &seeds)).map_err(py_err)?;
    let mut items = Vec::with_capacity(arms.len());
    for arm in &arms {
        let d = PyDict::new(py);
        let (mean, std) = arm.mean_std_final();
        d.set_item("arm", &arm.arm)?;
        d.set_item("mean_final_return", mean)?;
        d.set_item("std_final_return", std)?;
        let runs = arm.runs.iter().map(|r| run_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
        d.set_item("runs", runs)?;
        items.push(d);
    }
    PyList::new(py, items)
}

/// Bound grid per seed; each cell dict carries the status and, when the
/// bound applies, lhs, rhs and holds.
#[pyfunction]
#[pyo3(signature = (config, out, seeds=None))]
fn verify<'py>(py: Python<'py>, config: PathBuf, out: PathBuf, seeds: Option<Vec<u64>>) -> PyResult<Bound<'py, PyList>> {
    let (cfg, seeds) = setup(&config, seeds)?;
    let tables: Vec<BoundTable> = py.detach(|| harness::verify(&cfg, &out, &seeds)).map_err(py_err)?;
    let mut items = Vec::with_capacity(tables.len());
    for t in &tables {
        let d = PyDict::new(py);
        d.set_item("seed", t.seed)?;
        d.set_item("env_id", &t.env_id)?;
        d.set_item("learned_policy", t.learned_policy.clone())?;
        let mut cells = Vec::with_capacity(t.cells.len());
        for c in &t.cells {
            let cell = PyDict::new(py);
            cell.set_item("kind", format!("{:?}", c.kind).to_lowercase())?;
            cell.set_item("alpha", c.alpha)?;
            cell.set_item("eta", c.eta)?;
            match c.outcome.report() {
                Some(r) => {
                    cell.set_item("status", "report")?;
                    cell.set_item("lhs", r.lhs)?;
                    cell.set_item("rhs", r.rhs)?;
                    cell.set_item("holds", r.holds)?;
                    cell.set_item("self_consistent", r.is_self_consistent())?;
                }
                None => cell.set_item("status", "inapplicable")?,
            }
            cells.push(cell);
        }
        d.set_item("cells", cells)?;
        items.push(d);
    }
    PyList::new(py, items)
}

/// The config with every default filled in, as TOML text.
#[pyfunction]
fn effective_config(config: PathBuf) -> PyResult<String> {
    ExperimentConfig::load(&config).and_then(|c| c.to_toml()).map_err(py_err)
}

/// Header facts of a `.ford` dataset file.
#[pyfunction]
fn dataset_info<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let ds = read_dataset(&path).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("env_id", ds.env_id())?;
    d.set_item("quality", ds.quality().as_str())?;
    d.set_item("seed", ds.seed())?;
    d.set_item("transitions", ds.len())?;
    d.set_item("episodes", ds.episode_starts().len())?;
    d.set_item("mean_reward", ds.mean_reward())?;
    Ok(d)
}

/// Decodes a checkpoint envelope, checking its CRC.
#[pyfunction]
fn read_envelope<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let env = ParamEnvelope::read(&path).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("sender_id", env.sender_id)?;
    d.set_item("round", env.round)?;
    d.set_item("kind", format!("{:?}", env.kind))?;
    let tensors: Vec<Vec<f64>> = env.params.iter().map(|p| p.values().to_vec()).collect();
    d.set_item("tensors", tensors)?;
    Ok(d)
}

#[pymodule]
fn forler(m: &Bound<'_, PyModule>) -> PyResult<()> {
    harness::init_threads_from_env().map_err(py_err)?;
    m.add_function(wrap_pyfunction!(gen_data, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(effective_config, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_info, m)?)?;
    m.add_function(wrap_pyfunction!(read_envelope, m)?)?;
    m.add("CSV_HEADER", forler_core::federation::METRICS_HEADER.join(","))?;
    Ok(())
}
