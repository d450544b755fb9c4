//! Spatiotemporal event-demand forecasting with a log-Gaussian Cox process.
//!
//! The latent log-intensity is a Gaussian process over `(x km, y km, t hours)`
//! with a periodic-in-time / RBF-in-space kernel, fitted to binned counts by
//! sparse variational inference (fixed inducing inputs, Poisson likelihood).
//! Forecasts are scored against the MEDIC historical-average baseline with
//! the inhomogeneous Poisson log-likelihood and the per-bin MAE in a rolling
//! weekly backtest.
//!
//! Module map:
//!
//! * [`data`]: CSV ingest, bounding-box filter, local projection, binning.
//! * [`kernels`]: periodic and RBF leaves, sum/product composition.
//! * [`svgp`]: variational state, ELBO and its gradient, training, prediction.
//! * [`optimize`]: L-BFGS with a strong-Wolfe line search.
//! * [`medic`]: the same-timebin historical average baseline.
//! * [`metrics`]: Poisson log-likelihood density, MAE, residual breakdowns.
//! * [`synth`]: thinning sampler for a known intensity.
//! * [`harness`]: configuration, rolling backtest, report persistence.

pub mod data;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod medic;
pub mod metrics;
pub mod optimize;
pub mod svgp;
pub mod synth;

pub use error::{Error, Result, RowError};

/// A location in projected space (km) and time (hours since the epoch).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, t: f64) -> Self {
        Point { x, y, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.t.is_finite()
    }
}
