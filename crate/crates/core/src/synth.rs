//! Ground-truth event generation from a closed-form intensity
//!
//! `λ*(s, t) = exp(a + b·sin(2πt/24 + φ) + Σ h·exp(−|s − c|²/w²))`
//!
//! sampled by thinning a dominating homogeneous process.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{unproject, write_csv, CsvSchema, EventSet, Projection, SpatialExtent};
use crate::error::{Error, Result};
use crate::metrics::{poisson_loglik, EvalConfig, FnSurface, LoglikParts, ScoreWindow};
use crate::Point;

/// Lattice used to bound the intensity: `(x, y, t)` points per axis.
pub const BOUND_LATTICE: (usize, usize, usize) = (200, 200, 96);
pub const BOUND_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySpec {
    /// Log of the base rate, km⁻² h⁻¹.
    pub log_base: f64,
    pub diurnal_amplitude: f64,
    /// Radians.
    pub phase: f64,
    #[serde(default)]
    pub bumps: Vec<Bump>,
    pub extent: SpatialExtent,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
}

impl IntensitySpec {
    pub fn validate(&self) -> Result<()> {
        let mut scalars = vec![self.log_base, self.diurnal_amplitude, self.phase, self.t_start, self.t_end];
        for b in &self.bumps {
            scalars.extend([b.center_x, b.center_y, b.width, b.height]);
            if !(b.width > 0.0) {
                return Err(Error::UnboundedIntensity(format!("bump width {} must be positive", b.width)));
            }
        }
        if !scalars.iter().all(|v| v.is_finite()) {
            return Err(Error::UnboundedIntensity("non-finite intensity parameter".into()));
        }
        if !(self.t_end > self.t_start) {
            return Err(Error::InvalidConfig("intensity time range is empty".into()));
        }
        SpatialExtent::new(self.extent.x_min, self.extent.x_max, self.extent.y_min, self.extent.y_max)?;
        Ok(())
    }

    fn spatial_log(&self, x: f64, y: f64) -> f64 {
        self.bumps
            .iter()
            .map(|b| {
                let d2 = (x - b.center_x).powi(2) + (y - b.center_y).powi(2);
                b.height * (-d2 / (b.width * b.width)).exp()
            })
            .sum()
    }

    fn temporal_log(&self, t: f64) -> f64 {
        self.diurnal_amplitude * (2.0 * PI * t / 24.0 + self.phase).sin()
    }

    pub fn intensity(&self, p: &Point) -> f64 {
        (self.log_base + self.temporal_log(p.t) + self.spatial_log(p.x, p.y)).exp()
    }

    pub fn window(&self) -> ScoreWindow {
        ScoreWindow {
            extent: self.extent,
            t_start: self.t_start,
            t_end: self.t_end,
        }
    }

    /// Lattice maximum times the safety factor.
    ///
    /// The log-intensity is a sum of a spatial and a temporal part, so the
    /// lattice maximum factorizes.
    pub fn upper_bound(&self) -> Result<f64> {
        self.validate()?;
        let (nx, ny, nt) = BOUND_LATTICE;
        let e = &self.extent;
        let lattice = |lo: f64, hi: f64, n: usize, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let mut s_max = f64::NEG_INFINITY;
        for j in 0..ny {
            for i in 0..nx {
                let v = self.spatial_log(lattice(e.x_min, e.x_max, nx, i), lattice(e.y_min, e.y_max, ny, j));
                s_max = s_max.max(v);
            }
        }
        let t_max = (0..nt)
            .map(|k| self.temporal_log(lattice(self.t_start, self.t_end, nt, k)))
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = (self.log_base + s_max + t_max).exp() * BOUND_SAFETY;
        if !bound.is_finite() {
            return Err(Error::UnboundedIntensity(format!("bound {bound}")));
        }
        Ok(bound)
    }

    pub fn volume(&self) -> f64 {
        self.extent.area() * (self.t_end - self.t_start)
    }
}

/// Events in time order, thinned from a homogeneous process at the bound.
pub fn sample_events(spec: &IntensitySpec) -> Result<Vec<Point>> {
    let bound = spec.upper_bound()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mean = bound * spec.volume();
    let n = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::UnboundedIntensity(e.to_string()))?
            .sample(&mut rng) as u64
    } else {
        0
    };
    let e = spec.extent;
    let mut out = Vec::new();
    for _ in 0..n {
        let p = Point::new(
            rng.random_range(e.x_min..e.x_max),
            rng.random_range(e.y_min..e.y_max),
            rng.random_range(spec.t_start..spec.t_end),
        );
        let lambda = spec.intensity(&p);
        if lambda > bound {
            return Err(Error::UnboundedIntensity(format!(
                "intensity {lambda} at ({}, {}, {}) exceeds bound {bound}",
                p.x, p.y, p.t
            )));
        }
        if rng.random::<f64>() * bound < lambda {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(out)
}

/// Log-likelihood of `events` under the true intensity.
pub fn true_loglik(spec: &IntensitySpec, events: &[Point], cfg: &EvalConfig) -> Result<LoglikParts> {
    poisson_loglik(&FnSurface(|p: &Point| spec.intensity(p)), events, &spec.window(), cfg)
}

/// Writes events in the ingest CSV format, times rounded to whole seconds.
pub fn write_events_csv(path: &Path, events: &[Point], proj: &Projection, schema: &CsvSchema) -> Result<()> {
    let set: EventSet = unproject(events, proj);
    write_csv(path, &set, schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(log_base: f64, seed: u64) -> IntensitySpec {
        IntensitySpec {
            log_base,
            diurnal_amplitude: 0.0,
            phase: 0.0,
            bumps: vec![],
            extent: SpatialExtent::new(0.0, 2.0, 0.0, 3.0).unwrap(),
            t_start: 0.0,
            t_end: 10.0,
            seed,
        }
    }

    #[test]
    fn vanishing_intensity() {
        assert!(sample_events(&flat(-30.0, 1)).unwrap().is_empty());
    }

    #[test]
    fn seeded_and_inside() {
        let s = flat(0.0, 3);
        let a = sample_events(&s).unwrap();
        assert_eq!(a, sample_events(&s).unwrap());
        assert!(a.iter().all(|p| s.extent.contains(p.x, p.y) && p.t >= 0.0 && p.t < 10.0));
        assert!(a.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn bound_dominates() {
        let s = IntensitySpec {
            diurnal_amplitude: 0.8,
            bumps: vec![Bump { center_x: 1.0, center_y: 1.5, width: 0.5, height: 1.0 }],
            ..flat(0.0, 0)
        };
        let b = s.upper_bound().unwrap();
        assert!(b >= s.intensity(&Point::new(1.0, 1.5, 6.0)));
        assert!((b / 1.05 / (1.8f64).exp() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn invalid_specs() {
        let mut s = flat(f64::INFINITY, 0);
        assert!(matches!(sample_events(&s), Err(Error::UnboundedIntensity(_))));
        s.log_base = 800.0;
        assert!(matches!(sample_events(&s), Err(Error::UnboundedIntensity(_))));
    }

    #[test]
    fn constant_truth_score() {
        let s = flat(0.0, 0);
        let ll = true_loglik(&s, &[Point::new(1.0, 1.0, 1.0)], &EvalConfig::default()).unwrap();
        assert!((ll.total() + 60.0).abs() < 1e-9);
    }
}
