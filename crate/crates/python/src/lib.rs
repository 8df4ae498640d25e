//! Python bindings for the pipeline: cubes, raw captures, reconstruction,
//! PCA and INR codecs, feature statistics and normal-map spread.
//!
//! Arrays cross the boundary as flat lists; angles are in degrees unless a
//! name says otherwise. I/O failures raise `OSError`, numerical failures
//! `ArithmeticError` and everything else `ValueError`.

use std::path::PathBuf;

use polarcube::analysis::{
    feature_gradient_histograms, feature_plane, normal_spectral_stddev, pol_unpol_histograms, stokes_histograms,
    wrap_aolp_diff, Feature, Histogram, Item, LabelFilter, NormalMapStack,
};
use polarcube::camera::{
    simulate_hyperspectral as sim_hyper, simulate_trichromatic as sim_tri, CaptureConfig, Measurement, MosaicLayout,
    NoiseModel, RawCapture, RawLayout,
};
use polarcube::codecs::inr::{inr_decode, inr_init, inr_train, InrConfig, InrModel, TrainOptions};
use polarcube::codecs::pca::{
    extract_patches_mode, pca_decode, pca_encode, pca_fit as fit, stack_patches, variance_spectrum, PatchMode,
    PcaCodebook,
};
use polarcube::io::spsi::{
    read_codebook, read_cube, read_inr, read_normals, read_raw, write_spsi, write_spsi_with, Dtype, SpsiObject,
};
use polarcube::reconstruct::{
    burst_average_captures, quality as quality_report, reconstruct_image_with, ReconstructOptions, SystemMatrix,
};
use polarcube::stokes::{self, MuellerMatrix};
use polarcube::synth::{smooth_scene as scene, synthetic_normals as normals, SceneSpec};
use polarcube::{Error, StokesImage, StokesVector};
use pyo3::exceptions::{PyArithmeticError, PyIndexError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Stokes = (f64, f64, f64, f64);
type Mueller = [[f64; 4]; 4];

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    if e.is_io() {
        PyOSError::new_err(msg)
    } else if e.is_numerical() {
        PyArithmeticError::new_err(msg)
    } else {
        PyValueError::new_err(msg)
    }
}

fn sv(s: Stokes) -> StokesVector {
    StokesVector::new(s.0, s.1, s.2, s.3)
}

fn tuple(s: StokesVector) -> Stokes {
    (s.s0, s.s1, s.s2, s.s3)
}

fn radians(deg: &[f64]) -> Vec<f64> {
    deg.iter().map(|d| d.to_radians()).collect()
}

fn qwp_radians(angles: Option<Vec<f64>>) -> Vec<f64> {
    radians(&angles.unwrap_or_else(|| vec![30.0, -45.0, 60.0, -90.0]))
}

/// A Stokes image cube of `channels` spectral channels.
#[pyclass(name = "StokesCube", module = "polarcube_py", skip_from_py_object)]
#[derive(Clone)]
struct PyCube {
    inner: StokesImage,
}

impl PyCube {
    fn check(&self, x: usize, y: usize, c: usize) -> PyResult<()> {
        let i = &self.inner;
        if x >= i.width || y >= i.height || c >= i.channels {
            return Err(PyIndexError::new_err(format!(
                "({x}, {y}, {c}) outside {}x{}x{}",
                i.width, i.height, i.channels
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl PyCube {
    #[new]
    fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            inner: StokesImage::new(width, height, channels),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_cube(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_spsi(path, &SpsiObject::Cube(self.inner.clone())).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }

    #[getter]
    fn wavelengths(&self) -> Vec<f32> {
        self.inner.wavelengths.clone()
    }

    fn get(&self, x: usize, y: usize, c: usize) -> PyResult<Stokes> {
        self.check(x, y, c)?;
        Ok(tuple(self.inner.get(x, y, c)))
    }

    fn set(&mut self, x: usize, y: usize, c: usize, s: Stokes) -> PyResult<()> {
        self.check(x, y, c)?;
        self.inner.set(x, y, c, sv(s));
        Ok(())
    }

    fn is_valid(&self, x: usize, y: usize, c: usize) -> PyResult<bool> {
        self.check(x, y, c)?;
        Ok(self.inner.is_valid_at(x, y, c))
    }

    fn valid_fraction(&self) -> f64 {
        self.inner.valid_fraction()
    }

    /// Flat values ordered (channel, Stokes element, row, column).
    fn data(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    /// Flat validity ordered (channel, row, column).
    fn mask(&self) -> Vec<bool> {
        self.inner.mask.clone()
    }

    /// One feature of one channel as rows of values; NaN where undefined.
    fn feature(&self, name: &str, channel: usize) -> PyResult<Vec<Vec<f64>>> {
        let f = Feature::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown feature {name:?}")))?;
        if channel >= self.inner.channels {
            return Err(PyIndexError::new_err(format!("channel {channel} out of range")));
        }
        let plane = feature_plane(&self.inner, channel, f);
        Ok(plane.outer_iter().map(|r| r.to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "StokesCube({}x{}x{})",
            self.inner.width, self.inner.height, self.inner.channels
        )
    }
}

/// Raw sensor frames from either camera.
#[pyclass(name = "RawCapture", module = "polarcube_py", skip_from_py_object)]
#[derive(Clone)]
struct PyRaw {
    inner: RawCapture,
}

#[pymethods]
impl PyRaw {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_raw(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_spsi(path, &SpsiObject::Raw(self.inner.clone())).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn layout(&self) -> &'static str {
        match self.inner.layout {
            RawLayout::Sequential { .. } => "sequential",
            RawLayout::Mosaic(_) => "mosaic",
        }
    }

    fn frame_count(&self) -> usize {
        self.inner.frames.len()
    }

    /// Row-major intensities of the frame for `(channel, config)`.
    fn frame(&self, channel: usize, config: usize) -> PyResult<Vec<f32>> {
        self.inner
            .frame(channel, config)
            .map(|f| f.frame.data.clone())
            .ok_or_else(|| err(Error::MissingFrame { channel, config }))
    }

    fn __repr__(&self) -> String {
        format!(
            "RawCapture({}x{}, {} frames, {})",
            self.inner.width,
            self.inner.height,
            self.inner.frames.len(),
            self.layout()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (width=64, height=64, channels=3, seed=0, max_dop=0.6))]
fn smooth_scene(width: usize, height: usize, channels: usize, seed: u64, max_dop: f64) -> PyCube {
    let spec = SceneSpec {
        width,
        height,
        channels,
        max_dop,
        ..SceneSpec::default()
    };
    PyCube {
        inner: scene(&spec, seed),
    }
}

#[pyfunction]
fn features(py: Python<'_>, s: Stokes) -> PyResult<Bound<'_, PyDict>> {
    let f = stokes::features(sv(s)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("dop", f.rho)?;
    d.set_item("dolp", f.dolp)?;
    d.set_item("docp", f.docp)?;
    d.set_item("aolp", f.psi)?;
    d.set_item("chi", f.chi)?;
    d.set_item("cop", f.cop)?;
    d.set_item("aolp_degenerate", f.aolp_degenerate)?;
    Ok(d)
}

/// Polarized and unpolarized intensity `(P, U)`.
#[pyfunction]
#[pyo3(signature = (s, tol=1e-3))]
fn decompose(s: Stokes, tol: f64) -> PyResult<(f64, f64)> {
    stokes::decompose_with_tol(sv(s), tol).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (s, tol=1e-3))]
fn is_valid(s: Stokes, tol: f64) -> bool {
    stokes::is_valid(sv(s), tol)
}

#[pyfunction]
fn linear_polarizer(theta_deg: f64) -> Mueller {
    stokes::lp_mueller(theta_deg.to_radians()).0
}

#[pyfunction]
fn retarder(theta_deg: f64, retardance_deg: f64) -> Mueller {
    stokes::retarder_mueller(theta_deg.to_radians(), retardance_deg.to_radians()).0
}

#[pyfunction]
fn quarter_wave_plate(theta_deg: f64) -> Mueller {
    stokes::qwp_mueller(theta_deg.to_radians()).0
}

#[pyfunction]
fn apply_mueller(m: Mueller, s: Stokes) -> Stokes {
    tuple(stokes::apply(&MuellerMatrix(m), sv(s)))
}

/// Rank, singular values and condition number of a QWP + polarizer camera.
#[pyfunction]
#[pyo3(signature = (qwp_angles_deg=None, lp_angle_deg=0.0))]
fn system_matrix(py: Python<'_>, qwp_angles_deg: Option<Vec<f64>>, lp_angle_deg: f64) -> PyResult<Bound<'_, PyDict>> {
    let lp = lp_angle_deg.to_radians();
    let rows = qwp_radians(qwp_angles_deg)
        .into_iter()
        .map(|q| Measurement::qwp_lp(q, lp).mueller(&MuellerMatrix::IDENTITY).row(0))
        .collect();
    let a = SystemMatrix::new(rows).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("rank", a.rank)?;
    d.set_item("singular_values", a.singular_values.clone())?;
    d.set_item("condition_number", a.condition_number)?;
    Ok(d)
}

fn noise_model(sigma: f64, shot_gain: f64, seed: u64) -> NoiseModel {
    NoiseModel {
        shot_gain,
        ..NoiseModel::gaussian(sigma, seed)
    }
}

#[pyfunction]
#[pyo3(signature = (scene, qwp_angles_deg=None, lp_angle_deg=0.0, noise_sigma=0.0, shot_gain=0.0, seed=0))]
fn simulate_hyperspectral(
    scene: &PyCube,
    qwp_angles_deg: Option<Vec<f64>>,
    lp_angle_deg: f64,
    noise_sigma: f64,
    shot_gain: f64,
    seed: u64,
) -> PyResult<PyRaw> {
    let raw = sim_hyper(
        &scene.inner,
        &qwp_radians(qwp_angles_deg),
        lp_angle_deg.to_radians(),
        &noise_model(noise_sigma, shot_gain, seed),
    )
    .map_err(err)?;
    Ok(PyRaw { inner: raw })
}

#[pyfunction]
#[pyo3(signature = (scene, noise_sigma=0.0, shot_gain=0.0, seed=0))]
fn simulate_trichromatic(scene: &PyCube, noise_sigma: f64, shot_gain: f64, seed: u64) -> PyResult<PyRaw> {
    let raw = sim_tri(
        &scene.inner,
        &MosaicLayout::default(),
        &noise_model(noise_sigma, shot_gain, seed),
    )
    .map_err(err)?;
    Ok(PyRaw { inner: raw })
}

/// Least-squares reconstruction. Sequential captures use the given QWP angles;
/// mosaic captures carry their own layout.
#[pyfunction]
#[pyo3(signature = (raw, qwp_angles_deg=None, lp_angle_deg=0.0, dop_tol=1e-3))]
fn reconstruct(raw: &PyRaw, qwp_angles_deg: Option<Vec<f64>>, lp_angle_deg: f64, dop_tol: f64) -> PyResult<PyCube> {
    let config = match &raw.inner.layout {
        RawLayout::Sequential { channels, .. } => {
            CaptureConfig::hyperspectral(*channels, &qwp_radians(qwp_angles_deg), lp_angle_deg.to_radians())
                .map_err(err)?
        }
        RawLayout::Mosaic(layout) => CaptureConfig::from_layout(layout),
    };
    let opts = ReconstructOptions {
        dop_tol,
        ..ReconstructOptions::default()
    };
    Ok(PyCube {
        inner: reconstruct_image_with(&raw.inner, &config, &opts).map_err(err)?,
    })
}

#[pyfunction]
fn burst_average(captures: Vec<PyRef<'_, PyRaw>>) -> PyResult<PyRaw> {
    let raws: Vec<RawCapture> = captures.iter().map(|r| r.inner.clone()).collect();
    Ok(PyRaw {
        inner: burst_average_captures(&raws).map_err(err)?,
    })
}

/// MSE, PSNR and peak of `test` against `reference` over jointly valid sites.
#[pyfunction]
fn quality<'py>(py: Python<'py>, reference: &PyCube, test: &PyCube) -> PyResult<Bound<'py, PyDict>> {
    let q = quality_report(&reference.inner, &test.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mse", q.mse)?;
    d.set_item("psnr", q.psnr)?;
    d.set_item("peak", q.peak)?;
    d.set_item("valid_fraction", q.valid_fraction)?;
    d.set_item("psnr_per_channel", q.psnr_per_channel)?;
    Ok(d)
}

/// Patch PCA codebook.
#[pyclass(name = "PcaCodebook", module = "polarcube_py")]
struct PyCodebook {
    inner: PcaCodebook,
}

#[pymethods]
impl PyCodebook {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_codebook(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_spsi(path, &SpsiObject::Codebook(self.inner.clone())).map_err(err)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn variance_spectrum(&self) -> Vec<f64> {
        variance_spectrum(&self.inner)
    }

    fn truncated(&self, k: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.truncated(k).map_err(err)?,
        })
    }

    /// Encodes and decodes `cube`; returns `(decoded, bpp, bpp_with_codebook)`.
    fn code(&self, cube: &PyCube) -> PyResult<(PyCube, f64, f64)> {
        let enc = pca_encode(&cube.inner, &self.inner).map_err(err)?;
        let dec = pca_decode(&enc, &self.inner).map_err(err)?;
        Ok((PyCube { inner: dec }, enc.bpp(), enc.bpp_with_codebook(&self.inner)))
    }
}

#[pyfunction]
#[pyo3(signature = (cubes, patch=10, bases=93, mode="joint"))]
fn pca_fit(cubes: Vec<PyRef<'_, PyCube>>, patch: usize, bases: usize, mode: &str) -> PyResult<PyCodebook> {
    let mode = match mode {
        "joint" => PatchMode::Joint,
        "s0" => PatchMode::Element(0),
        "s1" => PatchMode::Element(1),
        "s2" => PatchMode::Element(2),
        "s3" => PatchMode::Element(3),
        m => return Err(PyValueError::new_err(format!("unknown patch mode {m:?}"))),
    };
    let sets = cubes
        .iter()
        .map(|c| extract_patches_mode(&c.inner, patch, mode))
        .collect::<polarcube::Result<Vec<_>>>()
        .map_err(err)?;
    let all = stack_patches(&sets).map_err(err)?;
    Ok(PyCodebook {
        inner: fit(&all, bases).map_err(err)?,
    })
}

/// Coordinate network `(x, y, channel) → Stokes vector`.
#[pyclass(name = "InrModel", module = "polarcube_py")]
struct PyInr {
    inner: InrModel,
}

#[pymethods]
impl PyInr {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_inr(path).map_err(err)?,
        })
    }

    #[pyo3(signature = (path, f64=false))]
    fn save(&self, path: PathBuf, f64: bool) -> PyResult<()> {
        let dtype = if f64 { Dtype::F64 } else { Dtype::F32 };
        write_spsi_with(path, &SpsiObject::Inr(self.inner.clone()), dtype).map_err(err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn bpp(&self, width: usize, height: usize) -> f64 {
        self.inner.bpp(width, height)
    }

    fn decode(&self, width: usize, height: usize, channels: usize) -> PyCube {
        PyCube {
            inner: inr_decode(&self.inner, width, height, channels),
        }
    }
}

/// Trains a network on `cube`; returns the model and a report dict.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (cube, layers=8, hidden=256, steps=2000, lr=1e-3, batch_pixels=1024, seed=0))]
fn inr_fit<'py>(
    py: Python<'py>,
    cube: &PyCube,
    layers: usize,
    hidden: usize,
    steps: usize,
    lr: f64,
    batch_pixels: usize,
    seed: u64,
) -> PyResult<(PyInr, Bound<'py, PyDict>)> {
    let opts = TrainOptions {
        steps,
        lr,
        batch_pixels,
        seed,
        ..TrainOptions::default()
    };
    let model = inr_init(InrConfig::new(layers, hidden), seed).map_err(err)?;
    let (model, report) = py.detach(|| inr_train(model, &cube.inner, &opts)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("final_mse", report.final_mse)?;
    d.set_item("final_psnr", report.final_psnr)?;
    d.set_item("steps", report.steps)?;
    d.set_item("loss_curve", report.loss_curve)?;
    Ok((PyInr { inner: model }, d))
}

fn hist_dict<'py>(py: Python<'py>, h: &Histogram) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("edges", h.edges.clone())?;
    d.set_item("counts", h.counts.clone())?;
    d.set_item("total", h.total)?;
    d.set_item("dropped", h.dropped)?;
    d.set_item("mean", h.mean())?;
    Ok(d)
}

/// Histogram of a feature, or of its forward differences with `gradient=True`.
#[pyfunction]
#[pyo3(signature = (cubes, feature, bins=201, gradient=false, direction="pooled"))]
fn histogram<'py>(
    py: Python<'py>,
    cubes: Vec<PyRef<'py, PyCube>>,
    feature: &str,
    bins: usize,
    gradient: bool,
    direction: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let f = Feature::parse(feature).ok_or_else(|| PyValueError::new_err(format!("unknown feature {feature:?}")))?;
    let items: Vec<Item> = cubes.iter().map(|c| Item::new(&c.inner)).collect();
    let any = LabelFilter::any();
    let h = if gradient {
        let g = feature_gradient_histograms(&items, f, bins, &any).map_err(err)?;
        match direction {
            "pooled" => g.pooled,
            "horizontal" => g.horizontal,
            "vertical" => g.vertical,
            d => return Err(PyValueError::new_err(format!("unknown direction {d:?}"))),
        }
    } else {
        stokes_histograms(&items, f, bins, &any).map_err(err)?
    };
    hist_dict(py, &h)
}

/// Histograms of polarized and unpolarized intensity on a shared axis.
#[pyfunction]
#[pyo3(signature = (cubes, bins=201))]
fn pol_unpol<'py>(
    py: Python<'py>,
    cubes: Vec<PyRef<'py, PyCube>>,
    bins: usize,
) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let items: Vec<Item> = cubes.iter().map(|c| Item::new(&c.inner)).collect();
    let (p, u) = pol_unpol_histograms(&items, bins, &LabelFilter::any()).map_err(err)?;
    Ok((hist_dict(py, &p)?, hist_dict(py, &u)?))
}

/// Difference of two angles of linear polarization folded into `[-π/2, π/2]` (radians).
#[pyfunction]
fn aolp_difference(d: f64) -> f64 {
    wrap_aolp_diff(d)
}

/// Per-channel surface normals of one view.
#[pyclass(name = "NormalStack", module = "polarcube_py")]
struct PyNormals {
    inner: NormalMapStack,
}

#[pymethods]
impl PyNormals {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_normals(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_spsi(path, &SpsiObject::Normals(self.inner.clone())).map_err(err)
    }

    fn get(&self, x: usize, y: usize, c: usize) -> PyResult<[f64; 3]> {
        let n = &self.inner;
        if x >= n.width || y >= n.height || c >= n.channels {
            return Err(PyIndexError::new_err(format!("({x}, {y}, {c}) out of range")));
        }
        Ok(n.get(x, y, c))
    }

    /// Per-pixel spectral standard deviations (x, y, z, azimuth, elevation).
    #[pyo3(signature = (bins=201))]
    fn spectral_stddev<'py>(&self, py: Python<'py>, bins: usize) -> PyResult<Bound<'py, PyDict>> {
        let st = normal_spectral_stddev(&self.inner, bins).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("x", st.std_x)?;
        d.set_item("y", st.std_y)?;
        d.set_item("z", st.std_z)?;
        d.set_item("azimuth", st.std_azimuth)?;
        d.set_item("elevation", st.std_elevation)?;
        Ok(d)
    }
}

#[pyfunction]
#[pyo3(signature = (width, height, channels, jitter_deg=2.0, seed=0))]
fn synthetic_normals(width: usize, height: usize, channels: usize, jitter_deg: f64, seed: u64) -> PyResult<PyNormals> {
    Ok(PyNormals {
        inner: normals(width, height, channels, jitter_deg, seed).map_err(err)?,
    })
}

#[pymodule]
fn polarcube_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCube>()?;
    m.add_class::<PyRaw>()?;
    m.add_class::<PyCodebook>()?;
    m.add_class::<PyInr>()?;
    m.add_class::<PyNormals>()?;
    m.add_function(wrap_pyfunction!(smooth_scene, m)?)?;
    m.add_function(wrap_pyfunction!(features, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(is_valid, m)?)?;
    m.add_function(wrap_pyfunction!(linear_polarizer, m)?)?;
    m.add_function(wrap_pyfunction!(retarder, m)?)?;
    m.add_function(wrap_pyfunction!(quarter_wave_plate, m)?)?;
    m.add_function(wrap_pyfunction!(apply_mueller, m)?)?;
    m.add_function(wrap_pyfunction!(system_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_hyperspectral, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_trichromatic, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(burst_average, m)?)?;
    m.add_function(wrap_pyfunction!(quality, m)?)?;
    m.add_function(wrap_pyfunction!(pca_fit, m)?)?;
    m.add_function(wrap_pyfunction!(inr_fit, m)?)?;
    m.add_function(wrap_pyfunction!(histogram, m)?)?;
    m.add_function(wrap_pyfunction!(pol_unpol, m)?)?;
    m.add_function(wrap_pyfunction!(aolp_difference, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_normals, m)?)?;
    Ok(())
}
