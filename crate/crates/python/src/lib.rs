//! Python module `sfpn` exposing the embedding network and the verification harness.

use std::collections::HashSet;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use sfpn_core::io::{decode_image, load_weights, preprocess_test, save_weights};
use sfpn_core::metrics::{self, EvalReport, ReportMetadata};
use sfpn_core::training::{self, toy_dataset, toy_train_config, TOY_IMAGE_SIZE};
use sfpn_core::verification::{self, EmbeddingRecord, PoseLabel};
use sfpn_core::{Embedding, Error, Init, NetworkConfig, ParamScope, Shape, Tensor, Variant};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Dimension { .. } | Error::State(_) | Error::Output(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_variant(s: &str) -> PyResult<Variant> {
    s.parse().map_err(py_err)
}

fn parse_scope(s: &str) -> PyResult<ParamScope> {
    match s {
        "backbone" => Ok(ParamScope::Backbone),
        "full" => Ok(ParamScope::Full),
        _ => Err(PyValueError::new_err(format!("scope must be \"backbone\" or \"full\", got {s:?}"))),
    }
}

/// Learnable parameter count of a configuration.
#[pyfunction]
#[pyo3(signature = (variant, classes = 8631, scope = "backbone"))]
fn count_params(variant: &str, classes: usize, scope: &str) -> PyResult<usize> {
    Ok(sfpn_core::count_params(&NetworkConfig::new(parse_variant(variant)?, classes), parse_scope(scope)?))
}

/// Layer names and output shapes as `(name, height, width, channels)`.
#[pyfunction]
#[pyo3(signature = (variant, classes = 8631))]
fn describe(variant: &str, classes: usize) -> PyResult<Vec<(String, usize, usize, usize)>> {
    let rows = NetworkConfig::new(parse_variant(variant)?, classes).shape_trace().map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.name, r.height, r.width, r.channels)).collect())
}

/// Face embedding network.
#[pyclass(name = "Network")]
struct PyNetwork {
    inner: sfpn_core::Network,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (variant = "base", classes = 8631, seed = 0))]
    fn new(variant: &str, classes: usize, seed: u64) -> PyResult<Self> {
        let inner = sfpn_core::Network::build(NetworkConfig::new(parse_variant(variant)?, classes), Init::Random { seed })
            .map_err(py_err)?;
        Ok(PyNetwork { inner })
    }

    /// Loads an SFPN weight file; variant and class count come from the file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let store = sfpn_core::io::weights::read_weight_store(&path).map_err(py_err)?;
        let cfg = NetworkConfig::new(Variant::from_flags(store.use_dwc, store.use_gdc), store.num_classes);
        let inner = load_weights(&path, cfg).map_err(py_err)?;
        Ok(PyNetwork { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_weights(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.config().variant().as_str()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.config().num_classes
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.inner.config().input_size
    }

    /// Embeds a batch given as flat NCHW floats of length `batch × 3 × size × size`.
    fn embed(&self, py: Python<'_>, pixels: Vec<f32>, batch: usize) -> PyResult<Vec<Vec<f32>>> {
        let shape: Shape = self.inner.input_shape(batch);
        let x = Tensor::from_vec(shape, pixels).map_err(py_err)?;
        let out = py.detach(|| self.inner.embed(&x)).map_err(py_err)?;
        Ok(out.into_iter().map(Embedding::into_vec).collect())
    }

    /// Embeds one PPM or PNG file after test-time preprocessing.
    fn embed_image(&self, py: Python<'_>, path: PathBuf) -> PyResult<Vec<f32>> {
        let out = py
            .detach(|| {
                let x = preprocess_test(&decode_image(&path)?)?;
                self.inner.embed(&x)
            })
            .map_err(py_err)?;
        Ok(out.into_iter().next().map(Embedding::into_vec).unwrap_or_default())
    }

    /// Class logits for a flat NCHW batch, inference mode.
    fn logits(&self, py: Python<'_>, pixels: Vec<f32>, batch: usize) -> PyResult<Vec<Vec<f32>>> {
        let x = Tensor::from_vec(self.inner.input_shape(batch), pixels).map_err(py_err)?;
        let out = py
            .detach(|| self.inner.forward(&x, sfpn_core::Mode::Inference))
            .map_err(py_err)?;
        Ok((0..batch).map(|n| out.sample(n).to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Network(variant={:?}, classes={})", self.variant(), self.classes())
    }
}

/// χ² distance between two equal-length vectors.
#[pyfunction]
fn chi2(a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
    verification::chi2(&a, &b).map_err(py_err)
}

#[pyfunction]
fn eer(genuine: Vec<f64>, impostor: Vec<f64>) -> PyResult<f64> {
    metrics::eer(&genuine, &impostor).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (genuine, impostor, far_target = metrics::DEFAULT_FAR_TARGET))]
fn frr_at_far(genuine: Vec<f64>, impostor: Vec<f64>, far_target: f64) -> PyResult<f64> {
    metrics::frr_at_far(&genuine, &impostor, far_target).map_err(py_err)
}

/// DET operating points as `(threshold, far, frr)`.
#[pyfunction]
fn det_curve(genuine: Vec<f64>, impostor: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let points = metrics::det_curve(&genuine, &impostor).map_err(py_err)?;
    Ok(points.into_iter().map(|p| (p.threshold, p.far, p.frr)).collect())
}

/// Runs the verification protocols over `(subject_id, pose, image_index, embedding)`
/// records and returns the evaluation report as JSON.
#[pyfunction]
#[pyo3(signature = (records, template_size = 5, protocol = "all", far_target = metrics::DEFAULT_FAR_TARGET, variant = None))]
fn evaluate(
    py: Python<'_>,
    records: Vec<(String, String, usize, Vec<f32>)>,
    template_size: usize,
    protocol: &str,
    far_target: f64,
    variant: Option<String>,
) -> PyResult<String> {
    let (same, cross) = match protocol {
        "same-pose" => (true, false),
        "cross-pose" => (false, true),
        "all" => (true, true),
        _ => return Err(PyValueError::new_err(format!("unknown protocol {protocol:?}"))),
    };
    let records = records
        .into_iter()
        .map(|(subject_id, pose, image_index, values)| {
            Ok(EmbeddingRecord {
                subject_id,
                pose: pose.parse::<PoseLabel>()?,
                image_index,
                embedding: Embedding::new(values)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(py_err)?;
    let subjects = records.iter().map(|r| r.subject_id.as_str()).collect::<HashSet<_>>().len();
    py.detach(|| {
        let mut sets = Vec::new();
        if same {
            sets.extend(verification::gen_same_pose_scores(&records, template_size)?);
        }
        if cross {
            sets.extend(verification::gen_cross_pose_scores(&records, template_size)?);
        }
        let meta = ReportMetadata::new(variant, template_size, far_target, subjects);
        Ok(EvalReport::from_score_sets(meta, &sets)?.to_json())
    })
    .map_err(py_err)
}

/// Finite-difference gradient check on the miniature network; returns the
/// report as JSON.
#[pyfunction]
#[pyo3(signature = (variant = "base", seed = 0, step = training::GRADCHECK_STEP))]
fn gradcheck(py: Python<'_>, variant: &str, seed: u64, step: f64) -> PyResult<String> {
    let cfg = NetworkConfig::tiny(parse_variant(variant)?);
    let report = py.detach(|| training::gradcheck_with_step(&cfg, seed, step)).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Trains a fresh network on the synthetic colour-class set and returns the
/// line-delimited JSON epoch log.
#[pyfunction]
#[pyo3(signature = (variant = "base", classes = 10, per_class = 40, epochs = 20, seed = 0, size = TOY_IMAGE_SIZE))]
fn train_toy(py: Python<'_>, variant: &str, classes: usize, per_class: usize, epochs: usize, seed: u64, size: usize) -> PyResult<String> {
    let mut cfg = NetworkConfig::new(parse_variant(variant)?, classes);
    cfg.input_size = size;
    py.detach(|| {
        let data = toy_dataset(classes, per_class, size, seed)?;
        let mut net = training::toy_network(cfg, seed)?;
        let mut config = toy_train_config(seed);
        config.epochs = epochs;
        Ok(training::fit(&mut net, &data, &config)?.to_jsonl())
    })
    .map_err(py_err)
}

#[pymodule]
fn sfpn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(describe, m)?)?;
    m.add_function(wrap_pyfunction!(chi2, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(frr_at_far, m)?)?;
    m.add_function(wrap_pyfunction!(det_curve, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(train_toy, m)?)?;
    m.add("EMBEDDING_DIM", sfpn_core::network::EMBEDDING_DIM)?;
    Ok(())
}
