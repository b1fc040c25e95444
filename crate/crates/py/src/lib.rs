//! Python bindings: `import evsparse`.

use std::path::{Path, PathBuf};

use evsparse_core::ablation::{run_ablation as core_ablation, Sweep};
use evsparse_core::binning::{segment_into_bins as core_segment, EventBin as CoreBin};
use evsparse_core::error::Error;
use evsparse_core::events::{Event, EventStream as CoreStream, Polarity, SensorGeometry};
use evsparse_core::intensity::{self, GridResolution, KernelParams};
use evsparse_core::io::{load_events, save_events, EventFormat};
use evsparse_core::pipeline::{run_pipeline as core_run, PipelineConfig as CoreConfig, TauSetting};
use evsparse_core::probe::{capacity_probe as core_probe, DEFAULT_MEMORY_BUDGET_BYTES};
use evsparse_core::synth::{generate_synthetic, SyntheticSpec};
use evsparse_core::temporal::{merging_score as core_score, window_similarity as core_similarity, MetaWindow};
use evsparse_core::{rasterize, Encoder as CoreEncoder, EncoderConfig};
use ndarray::Array2;
use pyo3::exceptions::{PyMemoryError, PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Resource(_) => PyMemoryError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips through JSON so reports arrive as plain dicts and lists.
fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn format_of(path: &Path, format: Option<&str>) -> PyResult<EventFormat> {
    match format {
        Some(f) => f.parse().map_err(to_py),
        None => Ok(EventFormat::from_path(path)),
    }
}

type EventTuple = (u64, u16, u16, i8);

fn to_event((t, x, y, p): EventTuple) -> PyResult<Event> {
    let p = Polarity::from_sign(p.into())
        .ok_or_else(|| PyValueError::new_err(format!("polarity must be 1 or -1, got {p}")))?;
    Ok(Event::new(t, x, y, p))
}

fn to_tuple(e: &Event) -> EventTuple {
    (e.t, e.x, e.y, e.p.sign())
}

/// A validated, time-ordered event stream.
#[pyclass(name = "EventStream", module = "evsparse", from_py_object)]
#[derive(Clone)]
struct PyEventStream {
    inner: CoreStream,
}

#[pymethods]
impl PyEventStream {
    /// Build from `(t, x, y, p)` tuples; out-of-range pixels raise ValueError.
    #[new]
    fn new(width: u32, height: u32, events: Vec<EventTuple>) -> PyResult<Self> {
        let geometry = SensorGeometry::new(width, height).map_err(to_py)?;
        let events = events.into_iter().map(to_event).collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: CoreStream::new(geometry, events).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let format = format_of(&path, format)?;
        Ok(Self {
            inner: load_events(&path, format).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (path, format=None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let format = format_of(&path, format)?;
        save_events(&path, format, &self.inner).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.geometry().width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.geometry().height
    }

    #[getter]
    fn was_resorted(&self) -> bool {
        self.inner.was_resorted()
    }

    fn events(&self) -> Vec<EventTuple> {
        self.inner.events().iter().map(to_tuple).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        let g = self.inner.geometry();
        format!("EventStream({}x{}, {} events)", g.width, g.height, self.inner.len())
    }
}

/// A fixed-duration slice of a stream.
#[pyclass(name = "EventBin", module = "evsparse", from_py_object)]
#[derive(Clone)]
struct PyEventBin {
    inner: CoreBin,
}

#[pymethods]
impl PyEventBin {
    #[new]
    fn new(index: usize, t_start: u64, t_end: u64, events: Vec<EventTuple>) -> PyResult<Self> {
        if t_start >= t_end {
            return Err(PyValueError::new_err("t_start must precede t_end"));
        }
        let events = events.into_iter().map(to_event).collect::<PyResult<Vec<_>>>()?;
        if events.iter().any(|e| e.t < t_start || e.t >= t_end) {
            return Err(PyValueError::new_err("event outside [t_start, t_end)"));
        }
        Ok(Self {
            inner: CoreBin::new(index, t_start, t_end, events),
        })
    }

    #[getter]
    fn index(&self) -> usize {
        self.inner.index
    }

    #[getter]
    fn t_start(&self) -> u64 {
        self.inner.t_start
    }

    #[getter]
    fn t_end(&self) -> u64 {
        self.inner.t_end
    }

    fn events(&self) -> Vec<EventTuple> {
        self.inner.events.iter().map(to_tuple).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn segment_into_bins(stream: &PyEventStream, bin_duration_us: u64) -> PyResult<Vec<PyEventBin>> {
    Ok(core_segment(&stream.inner, bin_duration_us)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyEventBin { inner })
        .collect())
}

fn kernel(sigma_x: f64, sigma_y: f64, sigma_t: f64) -> PyResult<KernelParams> {
    KernelParams::new(sigma_x, sigma_y, sigma_t).map_err(to_py)
}

/// Polarity-weighted Gaussian intensity of `bin` at absolute `(x, y, t)`.
#[pyfunction]
#[pyo3(signature = (bin, x, y, t, sigma_x=2.0, sigma_y=2.0, sigma_t=2500.0))]
fn intensity_at(bin: &PyEventBin, x: f64, y: f64, t: f64, sigma_x: f64, sigma_y: f64, sigma_t: f64) -> PyResult<f64> {
    Ok(intensity::intensity_at(
        &bin.inner,
        &kernel(sigma_x, sigma_y, sigma_t)?,
        (x, y, t),
    ))
}

/// L2 distance between the two bins' fields, each sampled relative to its
/// own start on an `nx × ny × nt` grid over `width × height × duration`.
#[pyfunction]
#[pyo3(signature = (a, b, width, height, grid=(16, 16, 8), sigma_x=2.0, sigma_y=2.0, sigma_t=None))]
#[allow(clippy::too_many_arguments)]
fn bin_distance(
    a: &PyEventBin,
    b: &PyEventBin,
    width: u32,
    height: u32,
    grid: (usize, usize, usize),
    sigma_x: f64,
    sigma_y: f64,
    sigma_t: Option<f64>,
) -> PyResult<f64> {
    let duration = a.inner.duration();
    let geometry = SensorGeometry::new(width, height).map_err(to_py)?;
    let spec = GridResolution::new(grid.0, grid.1, grid.2)
        .map_err(to_py)?
        .over(geometry, duration);
    let k = kernel(sigma_x, sigma_y, sigma_t.unwrap_or(duration as f64 / 4.0))?;
    Ok(intensity::bin_distance(&a.inner, &b.inner, &k, &spec))
}

#[pyfunction]
fn window_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("embedding dimensions differ"));
    }
    Ok(core_similarity(&a, &b))
}

#[pyfunction]
fn merging_score(similarity: f64, density: f64, alpha: f64) -> f64 {
    core_score(similarity, density, alpha)
}

/// Returns `(kept_indices, importance)`.
#[pyfunction]
fn token_selector(outputs: Vec<Vec<f64>>, weights: Vec<Vec<f64>>, rho: f64) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let to_array = |rows: Vec<Vec<f64>>| -> PyResult<Array2<f64>> {
        let cols = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    };
    let sel = evsparse_core::token_selector(&to_array(outputs)?, &to_array(weights)?, rho).map_err(to_py)?;
    Ok((sel.kept_indices, sel.importance.to_vec()))
}

/// Pipeline settings; `tau=None` calibrates at `tau_percentile`.
#[pyclass(name = "PipelineConfig", module = "evsparse", from_py_object)]
#[derive(Clone)]
struct PyPipelineConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyPipelineConfig {
    #[new]
    #[pyo3(signature = (
        bin_ms=10.0, tau=None, tau_percentile=25.0, alpha=0.1, score_threshold=0.85, rho=0.25,
        temporal=true, spatial=true, grid=(16, 16, 8), patch_size=16, embed_dim=64, heads=4,
        layers=2, seed=42, sdga_seed=7
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        bin_ms: f64,
        tau: Option<f64>,
        tau_percentile: f64,
        alpha: f64,
        score_threshold: f64,
        rho: f64,
        temporal: bool,
        spatial: bool,
        grid: (usize, usize, usize),
        patch_size: usize,
        embed_dim: usize,
        heads: usize,
        layers: usize,
        seed: u64,
        sdga_seed: u64,
    ) -> PyResult<Self> {
        let inner = CoreConfig {
            bin_duration_us: (bin_ms * 1e3).round() as u64,
            grid: GridResolution::new(grid.0, grid.1, grid.2).map_err(to_py)?,
            tau: tau.map_or(TauSetting::Percentile(tau_percentile), TauSetting::Fixed),
            alpha,
            score_threshold,
            encoder: EncoderConfig {
                patch_size,
                embed_dim,
                heads,
                layers,
                seed,
            },
            rho,
            sdga_seed,
            temporal_on: temporal,
            spatial_on: spatial,
            ..CoreConfig::default()
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "PipelineConfig({})",
            serde_json::to_string(&self.inner).unwrap_or_default()
        )
    }
}

fn config_or_default(config: Option<&PyPipelineConfig>) -> CoreConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

#[pyfunction]
#[pyo3(signature = (kind, duration_ms=1000.0, seed=7, rate=20_000.0, width=128, height=128, period_ms=5.0))]
fn synthesize(
    kind: &str,
    duration_ms: f64,
    seed: u64,
    rate: f64,
    width: u32,
    height: u32,
    period_ms: f64,
) -> PyResult<PyEventStream> {
    let spec = SyntheticSpec {
        kind: kind.parse().map_err(to_py)?,
        duration_us: (duration_ms * 1e3).round() as u64,
        rate,
        geometry: SensorGeometry::new(width, height).map_err(to_py)?,
        seed,
        period_us: (period_ms * 1e3).round() as u64,
    };
    Ok(PyEventStream {
        inner: generate_synthetic(&spec).map_err(to_py)?,
    })
}

/// Runs the pipeline; returns `{"report", "windows", "trace"}`.
#[pyfunction]
#[pyo3(signature = (stream, config=None, vectors=false))]
fn run_pipeline<'py>(
    py: Python<'py>,
    stream: &PyEventStream,
    config: Option<&PyPipelineConfig>,
    vectors: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_or_default(config);
    let out = py.detach(|| core_run(&stream.inner, &cfg)).map_err(to_py)?;
    let mut lines = Vec::new();
    evsparse_core::pipeline::write_tokens(&mut lines, &out.windows, vectors)
        .map_err(|e| PyOSError::new_err(e.to_string()))?;
    let windows: Vec<serde_json::Value> = lines
        .split(|&b| b == b'\n')
        .filter(|l| !l.is_empty())
        .map(serde_json::from_slice)
        .collect::<Result<_, _>>()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = serde_json::json!({
        "report": out.report,
        "windows": windows,
        "trace": out.trace,
    });
    to_python(py, &result)
}

/// `sweep` is "components", "interval" or "alpha".
#[pyfunction]
#[pyo3(signature = (stream, sweep, config=None, values=None))]
fn run_ablation<'py>(
    py: Python<'py>,
    stream: &PyEventStream,
    sweep: &str,
    config: Option<&PyPipelineConfig>,
    values: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let sweep: Sweep = sweep.parse().map_err(to_py)?;
    let cfg = config_or_default(config);
    let table = py
        .detach(|| core_ablation(&stream.inner, &cfg, sweep, values.as_deref()))
        .map_err(to_py)?;
    to_python(py, &table)
}

#[pyfunction]
#[pyo3(signature = (bins, config=None, seed=7, memory_budget_mb=None))]
fn capacity_probe<'py>(
    py: Python<'py>,
    bins: usize,
    config: Option<&PyPipelineConfig>,
    seed: u64,
    memory_budget_mb: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_or_default(config);
    let budget = memory_budget_mb.map_or(DEFAULT_MEMORY_BUDGET_BYTES, |mb| mb << 20);
    let report = py.detach(|| core_probe(bins, &cfg, seed, budget)).map_err(to_py)?;
    to_python(py, &report)
}

/// Seeded toy patch encoder.
#[pyclass(name = "Encoder", module = "evsparse", frozen)]
struct PyEncoder {
    inner: CoreEncoder,
}

#[pymethods]
impl PyEncoder {
    #[new]
    #[pyo3(signature = (patch_size=16, embed_dim=64, heads=4, layers=2, seed=42))]
    fn new(patch_size: usize, embed_dim: usize, heads: usize, layers: usize, seed: u64) -> PyResult<Self> {
        let config = EncoderConfig {
            patch_size,
            embed_dim,
            heads,
            layers,
            seed,
        };
        Ok(Self {
            inner: CoreEncoder::new(config).map_err(to_py)?,
        })
    }

    /// Encodes the bin's events on a `width × height` sensor; returns
    /// `(cls, patches)`.
    fn encode(&self, bin: &PyEventBin, width: u32, height: u32) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let geometry = SensorGeometry::new(width, height).map_err(to_py)?;
        if bin.inner.events.iter().any(|e| !geometry.contains(e.x, e.y)) {
            return Err(PyValueError::new_err("bin has events outside the sensor"));
        }
        let tokens = self
            .inner
            .encode(&rasterize(&MetaWindow::from_bin(&bin.inner), geometry));
        let patches = tokens.patches.rows().into_iter().map(|r| r.to_vec()).collect();
        Ok((tokens.cls.to_vec(), patches))
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.config().fingerprint()
    }
}

#[pymodule]
#[pyo3(name = "evsparse")]
fn evsparse_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEventStream>()?;
    m.add_class::<PyEventBin>()?;
    m.add_class::<PyPipelineConfig>()?;
    m.add_class::<PyEncoder>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(segment_into_bins, m)?)?;
    m.add_function(wrap_pyfunction!(intensity_at, m)?)?;
    m.add_function(wrap_pyfunction!(bin_distance, m)?)?;
    m.add_function(wrap_pyfunction!(window_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(merging_score, m)?)?;
    m.add_function(wrap_pyfunction!(token_selector, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(run_ablation, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_probe, m)?)?;
    Ok(())
}
