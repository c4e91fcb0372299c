//! Python bindings. Long-running calls release the interpreter lock.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use unlearn::data::{self, LabeledDataset, SplitPlan};
use unlearn::eval::{self, SweepTable};
use unlearn::mia::{self, AttackModel};
use unlearn::nn::{self, AdamConfig, ArchitectureConfig, Checkpoint, TrainConfig};
use unlearn::redaction::{self, RedactionConfig, RedactionOutcome, RedactionRequest};
use unlearn::Error;

fn py_err(err: Error) -> PyErr {
    match err {
        Error::Io { .. } | Error::CifarBatch { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(err: serde_json::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

#[pyclass(name = "Dataset", frozen)]
struct PyDataset(LabeledDataset);

#[pymethods]
impl PyDataset {
    #[getter]
    fn id(&self) -> &str {
        &self.0.id
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.0.class_count
    }

    #[getter]
    fn image_shape(&self) -> (usize, usize, usize) {
        self.0.image_shape()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.0.labels.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "SplitPlan", frozen)]
struct PySplitPlan(SplitPlan);

#[pymethods]
impl PySplitPlan {
    #[getter]
    fn members(&self) -> Vec<usize> {
        self.0.distinct_members()
    }

    #[getter]
    fn member_multiset(&self) -> Vec<usize> {
        self.0.member_indices.clone()
    }

    #[getter]
    fn nonmembers(&self) -> Vec<usize> {
        self.0.nonmember_indices.clone()
    }

    fn without(&self, records: Vec<usize>) -> PyResult<Self> {
        self.0.without(&records).map(Self).map_err(py_err)
    }

    fn complement(&self) -> PyResult<Self> {
        self.0.complement().map(Self).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SplitPlan::from_json(text).map(Self).map_err(py_err)
    }
}

#[pyclass(name = "Architecture", frozen)]
struct PyArchitecture(ArchitectureConfig);

#[pymethods]
impl PyArchitecture {
    /// The 32x32x3, 10-class CIFAR topology.
    #[new]
    fn new() -> Self {
        Self(ArchitectureConfig::default())
    }

    #[staticmethod]
    fn desk() -> Self {
        Self(ArchitectureConfig::desk())
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let arch: ArchitectureConfig = serde_json::from_str(text).map_err(json_err)?;
        arch.validate().map_err(py_err)?;
        Ok(Self(arch))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(json_err)
    }

    fn param_count(&self) -> usize {
        nn::count_params(&self.0)
    }
}

#[pyclass(name = "Checkpoint", frozen)]
struct PyCheckpoint(Checkpoint);

#[pymethods]
impl PyCheckpoint {
    #[getter]
    fn id(&self) -> String {
        self.0.id()
    }

    #[getter]
    fn events(&self) -> Vec<String> {
        self.0.provenance.events.clone()
    }

    fn descends_from(&self, ancestor_id: &str) -> bool {
        self.0.descends_from(ancestor_id)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Checkpoint::load(path).map(Self).map_err(py_err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.encode()
    }

    /// Class probabilities, one row per record.
    fn predict(&self, py: Python<'_>, dataset: &PyDataset, records: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        py.detach(|| nn::predict(&self.0, &dataset.0, &records)).map_err(py_err)
    }

    fn accuracy(&self, py: Python<'_>, dataset: &PyDataset, records: Vec<usize>) -> PyResult<f64> {
        py.detach(|| nn::accuracy(&self.0, &dataset.0, &records)).map_err(py_err)
    }
}

#[pyclass(name = "AttackModel", frozen)]
struct PyAttackModel(AttackModel);

#[pymethods]
impl PyAttackModel {
    /// Membership scores; positive means "In".
    fn scores(&self, py: Python<'_>, victim: &PyCheckpoint, dataset: &PyDataset, records: Vec<usize>) -> PyResult<Vec<f64>> {
        let scores = py
            .detach(|| mia::attack_scores(&self.0, &victim.0, &dataset.0, &records))
            .map_err(py_err)?;
        Ok(scores.into_iter().map(|s| s.value()).collect())
    }

    fn accuracy(&self, py: Python<'_>, victim: &PyCheckpoint, dataset: &PyDataset, plan: &PySplitPlan) -> PyResult<f64> {
        py.detach(|| mia::attack_accuracy(&self.0, &victim.0, &dataset.0, &plan.0)).map_err(py_err)
    }

    /// Per class, `(record, score)` pairs for the `top_n` highest-scoring
    /// members.
    fn ranking(
        &self,
        py: Python<'_>,
        victim: &PyCheckpoint,
        dataset: &PyDataset,
        plan: &PySplitPlan,
        top_n: usize,
    ) -> PyResult<Vec<Vec<(usize, f64)>>> {
        let ranked = py
            .detach(|| mia::vulnerability_ranking(&self.0, &victim.0, &dataset.0, &plan.0, top_n))
            .map_err(py_err)?;
        Ok(ranked
            .into_iter()
            .map(|class| class.into_iter().map(|(r, s)| (r, s.value())).collect())
            .collect())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        AttackModel::load(path).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(py_err)
    }
}

#[pyclass(name = "RedactionOutcome", frozen)]
struct PyOutcome(RedactionOutcome);

#[pymethods]
impl PyOutcome {
    #[getter]
    fn record(&self) -> usize {
        self.0.record_index
    }

    #[getter]
    fn poison_label(&self) -> usize {
        self.0.poison_label
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps_used
    }

    #[getter]
    fn final_score(&self) -> f64 {
        self.0.final_score.value()
    }

    #[getter]
    fn score_trace(&self) -> Vec<f64> {
        self.0.score_trace.iter().map(|s| s.value()).collect()
    }

    #[getter]
    fn pre_accuracy(&self) -> f64 {
        self.0.pre_accuracy
    }

    #[getter]
    fn post_accuracy(&self) -> f64 {
        self.0.post_accuracy
    }

    #[getter]
    fn success(&self) -> bool {
        self.0.success
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RedactionOutcome(record={}, steps={}, final_score={:.4}, success={})",
            self.0.record_index,
            self.0.steps_used,
            self.0.final_score.value(),
            self.0.success
        )
    }
}

#[pyclass(name = "SweepTable", frozen)]
struct PySweepTable(SweepTable);

#[pymethods]
impl PySweepTable {
    #[getter]
    fn points(&self) -> Vec<usize> {
        self.0.points.clone()
    }

    /// `(k, mean score, mean accuracy, mean steps)` per row.
    fn rows(&self) -> Vec<(usize, f64, f64, f64)> {
        self.0
            .rows
            .iter()
            .map(|r| (r.k, r.mean_score, r.mean_accuracy, r.mean_steps))
            .collect()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(py_err)
    }
}

fn redaction_config(k: usize, max_steps: usize, threshold: f64, learning_rate: f64) -> RedactionConfig {
    RedactionConfig {
        k,
        max_steps,
        stop_threshold: threshold,
        optimizer: AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        },
    }
}

#[pyfunction]
fn make_synthetic(
    class_count: usize,
    per_class: usize,
    image_shape: (usize, usize, usize),
    separation: f64,
    seed: u64,
) -> PyResult<PyDataset> {
    data::make_synthetic(class_count, per_class, image_shape, separation, seed)
        .map(PyDataset)
        .map_err(py_err)
}

#[pyfunction]
fn load_cifar10(py: Python<'_>, path: &str) -> PyResult<PyDataset> {
    py.detach(|| data::load_cifar10(path)).map(PyDataset).map_err(py_err)
}

#[pyfunction]
fn split_half(dataset: &PyDataset, seed: u64, with_replacement: bool) -> PyResult<PySplitPlan> {
    data::split_half(&dataset.0, seed, with_replacement)
        .map(PySplitPlan)
        .map_err(py_err)
}

/// `(epoch, train accuracy, held-out accuracy)`.
type EpochRow = (usize, f64, f64);

/// Trains a fresh model; returns the checkpoint and per-epoch
/// `(epoch, train accuracy, held-out accuracy)`.
#[pyfunction]
#[pyo3(signature = (arch, dataset, plan, batch_size=128, epochs=25, learning_rate=1e-3, shuffle_seed=0, init_seed=0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    arch: &PyArchitecture,
    dataset: &PyDataset,
    plan: &PySplitPlan,
    batch_size: usize,
    epochs: usize,
    learning_rate: f64,
    shuffle_seed: u64,
    init_seed: u64,
) -> PyResult<(PyCheckpoint, Vec<EpochRow>)> {
    let cfg = TrainConfig {
        batch_size,
        epochs,
        optimizer: AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        },
        shuffle_seed,
        init_seed,
    };
    let (ckpt, history) = py.detach(|| nn::train(&arch.0, &dataset.0, &plan.0, &cfg)).map_err(py_err)?;
    let epochs = history
        .epochs
        .iter()
        .map(|e| (e.epoch, e.train_accuracy, e.heldout_accuracy))
        .collect();
    Ok((PyCheckpoint(ckpt), epochs))
}

/// Fits a per-class attack on a shadow model's members and non-members.
#[pyfunction]
#[pyo3(signature = (shadow, dataset, plan, reg_strength=mia::DEFAULT_REG_STRENGTH, seed=0))]
fn train_attack(
    py: Python<'_>,
    shadow: &PyCheckpoint,
    dataset: &PyDataset,
    plan: &PySplitPlan,
    reg_strength: f64,
    seed: u64,
) -> PyResult<PyAttackModel> {
    py.detach(|| {
        let set = mia::build_attack_training_set(&shadow.0, &dataset.0, &plan.0)?;
        mia::train_attack(&set, reg_strength, seed)
    })
    .map(PyAttackModel)
    .map_err(py_err)
}

/// Redacts one member record; returns the new checkpoint and the outcome.
#[pyfunction]
#[pyo3(signature = (ckpt, dataset, plan, record, attack, k=10, max_steps=25, threshold=0.0, learning_rate=1e-3, seed=0))]
#[allow(clippy::too_many_arguments)]
fn redact_point(
    py: Python<'_>,
    ckpt: &PyCheckpoint,
    dataset: &PyDataset,
    plan: &PySplitPlan,
    record: usize,
    attack: &PyAttackModel,
    k: usize,
    max_steps: usize,
    threshold: f64,
    learning_rate: f64,
    seed: u64,
) -> PyResult<(PyCheckpoint, PyOutcome)> {
    let cfg = redaction_config(k, max_steps, threshold, learning_rate);
    py.detach(|| {
        let request = RedactionRequest::for_record(&dataset.0, record, seed)?;
        redaction::redact_point(&ckpt.0, &dataset.0, &plan.0, &request, &attack.0, &cfg)
    })
    .map(|(c, o)| (PyCheckpoint(c), PyOutcome(o)))
    .map_err(py_err)
}

/// Redacts `records` in order; returns the final checkpoint, the outcomes
/// and the records still scored "In" at the end. Request seeds are
/// `seed + position`.
#[pyfunction]
#[pyo3(signature = (ckpt, dataset, plan, records, attack, k=10, max_steps=25, threshold=0.0, learning_rate=1e-3, seed=0))]
#[allow(clippy::too_many_arguments)]
fn sequential_redact(
    py: Python<'_>,
    ckpt: &PyCheckpoint,
    dataset: &PyDataset,
    plan: &PySplitPlan,
    records: Vec<usize>,
    attack: &PyAttackModel,
    k: usize,
    max_steps: usize,
    threshold: f64,
    learning_rate: f64,
    seed: u64,
) -> PyResult<(PyCheckpoint, Vec<PyOutcome>, Vec<usize>)> {
    let cfg = redaction_config(k, max_steps, threshold, learning_rate);
    let (out, outcomes, report) = py
        .detach(|| {
            let queue = records
                .iter()
                .enumerate()
                .map(|(i, &r)| RedactionRequest::for_record(&dataset.0, r, seed.wrapping_add(i as u64)))
                .collect::<unlearn::Result<Vec<_>>>()?;
            redaction::sequential_redact(&ckpt.0, &dataset.0, &plan.0, &queue, &attack.0, &cfg)
        })
        .map_err(py_err)?;
    Ok((PyCheckpoint(out), outcomes.into_iter().map(PyOutcome).collect(), report.still_in))
}

/// Redacts `points_per_class` initially-positive members per class from
/// the target once for every `k`.
#[pyfunction]
#[pyo3(signature = (target, dataset, plan, attack, k_values, points_per_class, seed=0, max_steps=25, workers=1))]
#[allow(clippy::too_many_arguments)]
fn sweep_batch_size(
    py: Python<'_>,
    target: &PyCheckpoint,
    dataset: &PyDataset,
    plan: &PySplitPlan,
    attack: &PyAttackModel,
    k_values: Vec<usize>,
    points_per_class: usize,
    seed: u64,
    max_steps: usize,
    workers: usize,
) -> PyResult<PySweepTable> {
    let base = RedactionConfig {
        max_steps,
        ..RedactionConfig::default()
    };
    py.detach(|| {
        eval::sweep_batch_size(
            &dataset.0,
            &plan.0,
            &target.0,
            &attack.0,
            &k_values,
            points_per_class,
            seed,
            &base,
            workers,
        )
    })
    .map(PySweepTable)
    .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "unlearn")]
fn unlearn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PySplitPlan>()?;
    m.add_class::<PyArchitecture>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_class::<PyAttackModel>()?;
    m.add_class::<PyOutcome>()?;
    m.add_class::<PySweepTable>()?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_cifar10, m)?)?;
    m.add_function(wrap_pyfunction!(split_half, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(train_attack, m)?)?;
    m.add_function(wrap_pyfunction!(redact_point, m)?)?;
    m.add_function(wrap_pyfunction!(sequential_redact, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_batch_size, m)?)?;
    Ok(())
}
