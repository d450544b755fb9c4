//! Python bindings for the `stgp` crate.
//!
//! Points are passed as `(x_km, y_km, t_hours)` tuples.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use stgp::data::{bin_events, SpatialExtent, SpatioTemporalGrid};
use stgp::harness::config::FileConfig;
use stgp::harness::report::persist_report;
use stgp::harness::run_backtest;
use stgp::kernels::KernelExpr;
use stgp::medic::{medic_predict, MedicConfig, TestBin};
use stgp::metrics::{mae, poisson_loglik, BinnedSurface, EvalConfig, ScoreWindow};
use stgp::optimize::OptimizerConfig;
use stgp::svgp::{self, ModelConfig, ModelFile, TrainingData, VariationalState};
use stgp::synth::{Bump, IntensitySpec};
use stgp::{Error, Point};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn points(raw: Vec<(f64, f64, f64)>) -> Vec<Point> {
    raw.into_iter().map(|(x, y, t)| Point::new(x, y, t)).collect()
}

fn tuples(points: &[Point]) -> Vec<(f64, f64, f64)> {
    points.iter().map(|p| (p.x, p.y, p.t)).collect()
}

/// The composed kernel with fixed lengthscales and trainable variances.
#[pyclass(name = "Kernel")]
struct PyKernel {
    inner: KernelExpr,
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (variances = None))]
    fn new(variances: Option<Vec<f64>>) -> PyResult<Self> {
        let mut inner = KernelExpr::default_composed();
        if let Some(v) = variances {
            if v.len() != inner.num_leaves() {
                return Err(PyValueError::new_err(format!("expected {} variances", inner.num_leaves())));
            }
            inner.set_variances(&v);
        }
        inner.validate().map_err(to_py)?;
        Ok(PyKernel { inner })
    }

    #[getter]
    fn variances(&self) -> Vec<f64> {
        self.inner.variances()
    }

    fn matrix(&self, a: Vec<(f64, f64, f64)>, b: Vec<(f64, f64, f64)>) -> PyResult<Vec<Vec<f64>>> {
        let k = self.inner.eval_matrix(&points(a), &points(b)).map_err(to_py)?;
        Ok(k.row_iter().map(|r| r.iter().copied().collect()).collect())
    }
}

/// A fitted sparse variational model.
#[pyclass(name = "Model")]
struct PyModel {
    state: VariationalState,
    bin_volume: f64,
    #[pyo3(get)]
    elbo: f64,
}

#[pymethods]
impl PyModel {
    /// Fits on training bin centres and counts.
    #[staticmethod]
    #[pyo3(signature = (points, counts, bin_volume, num_inducing = 180, seed = 0, max_iters = 500))]
    fn train(
        py: Python<'_>,
        points: Vec<(f64, f64, f64)>,
        counts: Vec<u32>,
        bin_volume: f64,
        num_inducing: usize,
        seed: u64,
        max_iters: usize,
    ) -> PyResult<Self> {
        let data = TrainingData::new(self::points(points), counts).map_err(to_py)?;
        let config = ModelConfig {
            num_inducing,
            seed,
            ..Default::default()
        };
        let opt = OptimizerConfig {
            max_iters,
            ..Default::default()
        };
        let out = py.detach(|| svgp::train(&config, &data, &opt)).map_err(to_py)?;
        Ok(PyModel {
            state: out.state,
            bin_volume,
            elbo: out.final_elbo,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = ModelFile::load(&path).map_err(to_py)?;
        Ok(PyModel {
            bin_volume: file.grid.bin_volume(),
            elbo: file.final_elbo,
            state: file.state,
        })
    }

    #[getter]
    fn inducing(&self) -> Vec<(f64, f64, f64)> {
        tuples(&self.state.inducing)
    }

    #[getter]
    fn mean_const(&self) -> f64 {
        self.state.mean_const
    }

    #[getter]
    fn kernel_variances(&self) -> Vec<f64> {
        self.state.kernel.variances()
    }

    /// Returns `(rate, latent_mean, latent_var)` lists.
    fn predict(&self, points: Vec<(f64, f64, f64)>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let f = svgp::predict_rate(&self.state, &self::points(points), self.bin_volume).map_err(to_py)?;
        Ok((f.rate, f.latent_mean, f.latent_var))
    }

    fn elbo_on(&self, points: Vec<(f64, f64, f64)>, counts: Vec<u32>) -> PyResult<f64> {
        let data = TrainingData::new(self::points(points), counts).map_err(to_py)?;
        svgp::elbo(&self.state, &data).map_err(to_py)
    }
}

#[pyfunction]
fn expected_poisson_loglik(y: u64, mean: f64, var: f64) -> f64 {
    svgp::expected_poisson_loglik(y, mean, var)
}

/// Samples events from `exp(log_base + b sin(2πt/24 + phase) + bumps)`.
///
/// `bumps` holds `(center_x, center_y, width, height)`; `extent` is
/// `(x_min, x_max, y_min, y_max)`.
#[pyfunction]
#[pyo3(signature = (log_base, diurnal_amplitude, extent, t_start, t_end, phase = 0.0, bumps = vec![], seed = 0))]
#[allow(clippy::too_many_arguments)]
fn sample_events(
    log_base: f64,
    diurnal_amplitude: f64,
    extent: (f64, f64, f64, f64),
    t_start: f64,
    t_end: f64,
    phase: f64,
    bumps: Vec<(f64, f64, f64, f64)>,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let spec = IntensitySpec {
        log_base,
        diurnal_amplitude,
        phase,
        bumps: bumps
            .into_iter()
            .map(|(center_x, center_y, width, height)| Bump {
                center_x,
                center_y,
                width,
                height,
            })
            .collect(),
        extent: SpatialExtent::new(extent.0, extent.1, extent.2, extent.3).map_err(to_py)?,
        t_start,
        t_end,
        seed,
    };
    Ok(tuples(&stgp::synth::sample_events(&spec).map_err(to_py)?))
}

/// Counts per bin, ordered `(time, y_cell, x_cell)`, and the bin centres.
#[pyfunction]
fn bin_counts(
    events: Vec<(f64, f64, f64)>,
    extent: (f64, f64, f64, f64),
    nx: usize,
    ny: usize,
    t_start: f64,
    t_end: f64,
    t_bin: f64,
) -> PyResult<(Vec<u32>, Vec<(f64, f64, f64)>)> {
    let e = SpatialExtent::new(extent.0, extent.1, extent.2, extent.3).map_err(to_py)?;
    let grid = SpatioTemporalGrid::new(e, nx, ny, t_start, t_end, t_bin).map_err(to_py)?;
    let binned = bin_events(&points(events), &grid);
    let centers = binned.bin_centers();
    Ok((binned.counts, tuples(&centers)))
}

/// MEDIC forecast for every bin of `[t_start, t_start + n_test_bins·t_bin)`,
/// from history counts covering `[history_start, t_start)` on the same cells.
#[pyfunction]
#[pyo3(signature = (history, nx, ny, history_start, t_start, n_test_bins, t_bin = 4.0, weeks_back = 4))]
#[allow(clippy::too_many_arguments)]
fn medic_forecast(
    history: Vec<u32>,
    nx: usize,
    ny: usize,
    history_start: f64,
    t_start: f64,
    n_test_bins: usize,
    t_bin: f64,
    weeks_back: usize,
) -> PyResult<Vec<f64>> {
    let e = SpatialExtent::new(0.0, nx as f64, 0.0, ny as f64).map_err(to_py)?;
    let grid = SpatioTemporalGrid::new(e, nx, ny, history_start, t_start, t_bin).map_err(to_py)?;
    if history.len() != grid.num_bins() {
        return Err(PyValueError::new_err(format!("history must have {} bins", grid.num_bins())));
    }
    let mut h = stgp::data::BinnedCounts::zeros(grid);
    h.counts = history;
    let bins: Vec<TestBin> = (0..n_test_bins)
        .flat_map(|k| (0..ny).flat_map(move |j| (0..nx).map(move |i| (k, j, i))))
        .map(|(k, j, i)| TestBin {
            t: t_start + k as f64 * t_bin,
            j,
            i,
        })
        .collect();
    let cfg = MedicConfig {
        weeks_back,
        years_back: None,
        t_bin,
    };
    Ok(medic_predict(&h, &bins, &cfg).map_err(to_py)?.counts)
}

/// Mean absolute error between expected and observed counts.
#[pyfunction]
fn mean_absolute_error(predicted: Vec<f64>, counts: Vec<u32>) -> PyResult<f64> {
    let e = SpatialExtent::new(0.0, 1.0, 0.0, 1.0).map_err(to_py)?;
    let grid = SpatioTemporalGrid::new(e, 1, 1, 0.0, counts.len() as f64, 1.0).map_err(to_py)?;
    let mut actual = stgp::data::BinnedCounts::zeros(grid);
    actual.counts = counts;
    Ok(mae(&predicted, &actual, None).map_err(to_py)?.value())
}

/// Poisson log-likelihood of events under a piecewise-constant rate on a grid.
#[pyfunction]
#[pyo3(signature = (rates, events, extent, nx, ny, t_start, t_end, t_bin, rate_floor = 1e-4))]
#[allow(clippy::too_many_arguments)]
fn binned_loglik(
    rates: Vec<f64>,
    events: Vec<(f64, f64, f64)>,
    extent: (f64, f64, f64, f64),
    nx: usize,
    ny: usize,
    t_start: f64,
    t_end: f64,
    t_bin: f64,
    rate_floor: f64,
) -> PyResult<f64> {
    let e = SpatialExtent::new(extent.0, extent.1, extent.2, extent.3).map_err(to_py)?;
    let grid = SpatioTemporalGrid::new(e, nx, ny, t_start, t_end, t_bin).map_err(to_py)?;
    let cfg = EvalConfig {
        rate_floor,
        ..Default::default()
    };
    let window = ScoreWindow {
        extent: e,
        t_start,
        t_end,
    };
    let surface = BinnedSurface {
        grid: &grid,
        rates: &rates,
    };
    Ok(poisson_loglik(&surface, &points(events), &window, &cfg).map_err(to_py)?.total())
}

/// Runs the backtest described by a TOML config on projected events and
/// writes the report; returns `(stgp_mae, stgp_loglik, medic_mae, medic_loglik)`.
#[pyfunction]
#[pyo3(signature = (config_path, events, out_dir, overrides = vec![]))]
fn backtest(
    py: Python<'_>,
    config_path: PathBuf,
    events: Vec<(f64, f64, f64)>,
    out_dir: PathBuf,
    overrides: Vec<String>,
) -> PyResult<(f64, f64, f64, f64)> {
    let cfg = FileConfig::load(Some(&config_path), &overrides)
        .and_then(|c| c.backtest())
        .map_err(to_py)?;
    let pts = points(events);
    let report = py.detach(|| run_backtest(&cfg, &pts)).map_err(to_py)?;
    persist_report(&report, &out_dir).map_err(to_py)?;
    let s = &report.summary;
    Ok((s.stgp.mae.value(), s.stgp.loglik.total(), s.medic.mae.value(), s.medic.loglik.total()))
}

#[pymodule]
fn stgp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(expected_poisson_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(sample_events, m)?)?;
    m.add_function(wrap_pyfunction!(bin_counts, m)?)?;
    m.add_function(wrap_pyfunction!(medic_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(mean_absolute_error, m)?)?;
    m.add_function(wrap_pyfunction!(binned_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    Ok(())
}
