//! Python bindings: frames and sequences, occlusion synthesis, the loss
//! functions, GEI/PCA features, the forest classifier and the toy walker.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use rgait_core::eval;
use rgait_core::features::{self, PcaProjector};
use rgait_core::losses;
use rgait_core::manifest::Role;
use rgait_core::occlusion::{self, OcclusionSpec};
use rgait_core::recognizer::{self, GaitClassifier, RankedPrediction};
use rgait_core::silhouette::{SilhouetteFrame, SilhouetteSequence};
use rgait_core::toy::{self, ToyWalkerSpec};

fn err(e: rgait_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Frame", module = "rgait", skip_from_py_object)]
#[derive(Clone)]
struct PyFrame {
    inner: SilhouetteFrame,
}

#[pymethods]
impl PyFrame {
    #[new]
    fn new(height: usize, width: usize, pixels: Vec<f32>) -> PyResult<Self> {
        Ok(Self {
            inner: SilhouetteFrame::new(height, width, pixels).map_err(err)?,
        })
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn pixels(&self) -> Vec<f32> {
        self.inner.pixels().to_vec()
    }

    fn foreground_count(&self) -> usize {
        self.inner.foreground_count()
    }

    fn __repr__(&self) -> String {
        format!("Frame({}x{})", self.inner.height(), self.inner.width())
    }
}

#[pyclass(name = "Sequence", module = "rgait", skip_from_py_object)]
#[derive(Clone)]
struct PySequence {
    inner: SilhouetteSequence,
}

#[pymethods]
impl PySequence {
    #[new]
    #[pyo3(signature = (frames, subject_id, sequence_id, mask = None))]
    fn new(frames: Vec<PyRef<'_, PyFrame>>, subject_id: String, sequence_id: String, mask: Option<Vec<bool>>) -> PyResult<Self> {
        let frames = frames.iter().map(|f| f.inner.clone()).collect();
        let mut seq = SilhouetteSequence::new(frames, subject_id, sequence_id).map_err(err)?;
        if let Some(m) = mask {
            seq = seq.with_mask(m).map_err(err)?;
        }
        Ok(Self { inner: seq })
    }

    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id.clone()
    }

    #[getter]
    fn sequence_id(&self) -> String {
        self.inner.sequence_id.clone()
    }

    #[getter]
    fn mask(&self) -> Option<Vec<bool>> {
        self.inner.mask().map(<[bool]>::to_vec)
    }

    #[getter]
    fn frames(&self) -> Vec<PyFrame> {
        self.inner.frames().iter().map(|f| PyFrame { inner: f.clone() }).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Sequence({}/{}, {} frames)",
            self.inner.subject_id,
            self.inner.sequence_id,
            self.inner.len()
        )
    }
}

#[pyfunction]
fn dice_coeff(pred: Vec<f64>, gt: Vec<f64>) -> PyResult<f64> {
    losses::dice_coeff(&pred, &gt).map_err(err)
}

#[pyfunction]
fn rec_loss(pred: Vec<f64>, gt: Vec<f64>) -> PyResult<f64> {
    losses::rec_loss(&pred, &gt).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, lambda_rec = 1.0, lambda_dice = -1.0))]
fn total_loss(pred: Vec<f64>, gt: Vec<f64>, lambda_rec: f64, lambda_dice: f64) -> PyResult<f64> {
    losses::total_loss(&pred, &gt, lambda_rec, lambda_dice).map_err(err)
}

#[pyfunction]
fn detection_loss(p_occluded: f64, p_clean: f64, label: u8) -> f64 {
    losses::detection_loss(p_occluded, p_clean, label)
}

/// Returns a copy of `seq` with frames blackened and the mask attached.
#[pyfunction]
fn occlude(seq: &PySequence, degree_low: f64, degree_high: f64, n_initial_clean: usize, seed: u64) -> PyResult<PySequence> {
    let spec = OcclusionSpec::new(degree_low, degree_high, n_initial_clean, seed).map_err(err)?;
    Ok(PySequence {
        inner: occlusion::occlude_sequence(&seq.inner, &spec).map_err(err)?,
    })
}

#[pyfunction]
fn degree_bin(mask: Vec<bool>) -> PyResult<String> {
    Ok(occlusion::degree_bin(&mask).map_err(err)?.label().to_string())
}

/// `(height, width, pixels)` of the sequence's gait energy image.
#[pyfunction]
fn compute_gei(seq: &PySequence) -> PyResult<(usize, usize, Vec<f64>)> {
    let g = features::compute_gei(&seq.inner).map_err(err)?;
    Ok((g.height, g.width, g.pixels().to_vec()))
}

#[pyclass(name = "Pca", module = "rgait")]
struct PyPca {
    inner: PcaProjector,
}

#[pymethods]
impl PyPca {
    #[staticmethod]
    #[pyo3(signature = (samples, variance_threshold = 0.98))]
    fn fit(samples: Vec<Vec<f64>>, variance_threshold: f64) -> PyResult<Self> {
        Ok(Self {
            inner: PcaProjector::fit(&samples, variance_threshold).map_err(err)?,
        })
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    #[getter]
    fn retained_variance(&self) -> f64 {
        self.inner.retained_variance
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project_vec(&x).map_err(err)
    }

    fn reconstruct(&self, coords: Vec<f64>) -> Vec<f64> {
        self.inner.reconstruct(&coords)
    }
}

#[pyclass(name = "Classifier", module = "rgait")]
struct PyClassifier {
    inner: GaitClassifier,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    #[pyo3(signature = (features, labels, n_trees = 100, seed = 0))]
    fn train(features: Vec<Vec<f64>>, labels: Vec<String>, n_trees: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: recognizer::train_classifier(&features, &labels, n_trees, seed).map_err(err)?,
        })
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.inner.classes().to_vec()
    }

    /// Every class with its vote share, best first.
    fn predict_ranked(&self, feature: Vec<f64>) -> PyResult<Vec<(String, f64)>> {
        Ok(self.inner.predict_ranked(&feature).map_err(err)?.ranking)
    }
}

/// CMC curve from rankings (lists of labels, best first) and true labels.
#[pyfunction]
fn cmc(rankings: Vec<Vec<String>>, truths: Vec<String>, max_rank: usize) -> PyResult<Vec<f64>> {
    if rankings.len() != truths.len() {
        return Err(PyValueError::new_err("rankings and truths differ in length"));
    }
    let preds: Vec<RankedPrediction> = rankings
        .into_iter()
        .zip(truths)
        .map(|(r, t)| {
            let n = r.len() as f64;
            let scores = r.into_iter().enumerate().map(|(i, l)| (l, n - i as f64)).collect();
            RankedPrediction::from_scores(scores, Some(t))
        })
        .collect();
    Ok(eval::cmc(&preds, max_rank).map_err(err)?.0)
}

/// Toy walker sequences as `(sequence, role)` pairs.
#[pyfunction]
#[pyo3(signature = (identities = 20, seed = 0, height = 32, width = 32))]
fn toy_sequences(identities: usize, seed: u64, height: usize, width: usize) -> PyResult<Vec<(PySequence, String)>> {
    let spec = ToyWalkerSpec {
        identities,
        seed,
        height,
        width,
        ..Default::default()
    };
    Ok(toy::generate_sequences(&spec)
        .map_err(err)?
        .into_iter()
        .map(|(s, r)| {
            let role = match r {
                Role::Gallery => "gallery",
                Role::Probe => "probe",
                Role::DetectorTrain => "detector-train",
            };
            (PySequence { inner: s }, role.to_string())
        })
        .collect())
}

#[pymodule]
fn rgait(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_class::<PySequence>()?;
    m.add_class::<PyPca>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(dice_coeff, m)?)?;
    m.add_function(wrap_pyfunction!(rec_loss, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(detection_loss, m)?)?;
    m.add_function(wrap_pyfunction!(occlude, m)?)?;
    m.add_function(wrap_pyfunction!(degree_bin, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gei, m)?)?;
    m.add_function(wrap_pyfunction!(cmc, m)?)?;
    m.add_function(wrap_pyfunction!(toy_sequences, m)?)?;
    Ok(())
}
