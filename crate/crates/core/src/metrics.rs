//! Scoring: Poisson log-likelihood density of observed events, per-bin MAE,
//! residual summaries and per-week tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{BinnedCounts, LandMask, SpatialExtent, SpatioTemporalGrid};
use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, log_factorial};
use crate::svgp::{predict_rate, VariationalState};
use crate::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub integration_nx: usize,
    pub integration_ny: usize,
    /// Hours per integration step.
    pub integration_t_res: f64,
    /// Lower clip on the rate at each event, km⁻² h⁻¹.
    pub rate_floor: f64,
    #[serde(skip)]
    pub land_mask: Option<LandMask>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            integration_nx: 50,
            integration_ny: 50,
            integration_t_res: 4.0,
            rate_floor: 1e-4,
            land_mask: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_floor > 0.0) {
            return Err(Error::InvalidConfig("rate_floor must be positive".into()));
        }
        if self.integration_nx == 0 || self.integration_ny == 0 || !(self.integration_t_res > 0.0) {
            return Err(Error::InvalidConfig("integration grid must be non-empty".into()));
        }
        Ok(())
    }

    fn is_land(&self, x: f64, y: f64) -> bool {
        self.land_mask.as_ref().is_none_or(|m| m.is_land_at(x, y))
    }
}

/// Anything that yields an intensity (km⁻² h⁻¹) at arbitrary points.
pub trait RateSurface {
    fn rates(&self, points: &[Point]) -> Result<Vec<f64>>;
}

/// A trained model, converting per-bin counts to density by `bin_volume`.
pub struct ModelSurface<'a> {
    pub state: &'a VariationalState,
    pub bin_volume: f64,
}

impl RateSurface for ModelSurface<'_> {
    fn rates(&self, points: &[Point]) -> Result<Vec<f64>> {
        Ok(predict_rate(self.state, points, self.bin_volume)?.rate)
    }
}

/// Piecewise constant over the bins of a grid; zero outside it.
pub struct BinnedSurface<'a> {
    pub grid: &'a SpatioTemporalGrid,
    /// One density per grid bin.
    pub rates: &'a [f64],
}

impl RateSurface for BinnedSurface<'_> {
    fn rates(&self, points: &[Point]) -> Result<Vec<f64>> {
        if self.rates.len() != self.grid.num_bins() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} bins", self.grid.num_bins()),
                found: format!("{} rates", self.rates.len()),
            });
        }
        Ok(points
            .iter()
            .map(|p| self.grid.bin_of(p).map_or(0.0, |b| self.rates[b]))
            .collect())
    }
}

pub struct ConstantSurface(pub f64);

impl RateSurface for ConstantSurface {
    fn rates(&self, points: &[Point]) -> Result<Vec<f64>> {
        Ok(vec![self.0; points.len()])
    }
}

/// Wraps a closure `&Point -> rate`.
pub struct FnSurface<F>(pub F);

impl<F: Fn(&Point) -> f64> RateSurface for FnSurface<F> {
    fn rates(&self, points: &[Point]) -> Result<Vec<f64>> {
        Ok(points.iter().map(&self.0).collect())
    }
}

/// The region and time window being scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWindow {
    pub extent: SpatialExtent,
    pub t_start: f64,
    pub t_end: f64,
}

/// Parts of the log-likelihood; `total = event_term - integral - log_k_factorial`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoglikParts {
    pub event_term: f64,
    pub integral: f64,
    pub log_k_factorial: f64,
    pub events: u64,
    /// Events whose rate was below the floor.
    pub clipped: u64,
}

impl LoglikParts {
    pub fn total(&self) -> f64 {
        self.event_term - self.integral - self.log_k_factorial
    }

    /// Pools several windows into one score over their union.
    pub fn combine(parts: &[LoglikParts]) -> LoglikParts {
        let events = parts.iter().map(|p| p.events).sum();
        LoglikParts {
            event_term: compensated_sum(parts.iter().map(|p| p.event_term)),
            integral: compensated_sum(parts.iter().map(|p| p.integral)),
            log_k_factorial: log_factorial(events),
            events,
            clipped: parts.iter().map(|p| p.clipped).sum(),
        }
    }
}

/// Midpoints and volumes of the land part of the integration grid.
pub fn integration_nodes(window: &ScoreWindow, cfg: &EvalConfig) -> Result<(Vec<Point>, Vec<f64>)> {
    cfg.validate()?;
    if !(window.t_end >= window.t_start) {
        return Err(Error::InvalidConfig("score window ends before it starts".into()));
    }
    let e = &window.extent;
    let dx = e.width() / cfg.integration_nx as f64;
    let dy = e.height() / cfg.integration_ny as f64;
    let mut cells = Vec::new();
    for j in 0..cfg.integration_ny {
        for i in 0..cfg.integration_nx {
            let x = e.x_min + (i as f64 + 0.5) * dx;
            let y = e.y_min + (j as f64 + 0.5) * dy;
            if cfg.is_land(x, y) {
                cells.push((x, y));
            }
        }
    }
    let mut points = Vec::new();
    let mut volumes = Vec::new();
    let mut k = 0usize;
    loop {
        let t0 = window.t_start + k as f64 * cfg.integration_t_res;
        if t0 >= window.t_end {
            break;
        }
        let tau = (window.t_end - t0).min(cfg.integration_t_res);
        for &(x, y) in &cells {
            points.push(Point::new(x, y, t0 + 0.5 * tau));
            volumes.push(dx * dy * tau);
        }
        k += 1;
    }
    Ok((points, volumes))
}

/// `Σ log max(λ(event), floor) − ∫λ − log k!` with the integral taken by the
/// midpoint rule over land cells of the integration grid.
pub fn poisson_loglik(rate: &dyn RateSurface, events: &[Point], window: &ScoreWindow, cfg: &EvalConfig) -> Result<LoglikParts> {
    for p in events {
        let inside = window.extent.contains(p.x, p.y) && p.t >= window.t_start && p.t < window.t_end;
        if !inside {
            return Err(Error::EventOutsideDomain { x: p.x, y: p.y, t: p.t });
        }
    }
    let integral = rate_integral(rate, window, cfg)?;
    let at_events = rate.rates(events)?;
    Ok(loglik_from_rates(&at_events, integral, cfg.rate_floor))
}

/// Assembles the score from the rate at each event and the integral.
pub fn loglik_from_rates(event_rates: &[f64], integral: f64, rate_floor: f64) -> LoglikParts {
    let clipped = event_rates.iter().filter(|&&r| !(r >= rate_floor)).count() as u64;
    let event_term = compensated_sum(event_rates.iter().map(|&r| r.max(rate_floor).ln()));
    let k = event_rates.len() as u64;
    LoglikParts {
        event_term,
        integral,
        log_k_factorial: log_factorial(k),
        events: k,
        clipped,
    }
}

/// Midpoint-rule integral of `rate` over the window.
pub fn rate_integral(rate: &dyn RateSurface, window: &ScoreWindow, cfg: &EvalConfig) -> Result<f64> {
    let (nodes, volumes) = integration_nodes(window, cfg)?;
    let at_nodes = rate.rates(&nodes)?;
    Ok(compensated_sum(at_nodes.iter().zip(&volumes).map(|(r, v)| r * v)))
}

/// Sum and count of absolute errors over land bins.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaeScore {
    pub sum_abs: f64,
    pub n: usize,
}

impl MaeScore {
    pub fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum_abs / self.n as f64
        }
    }

    pub fn combine(parts: &[MaeScore]) -> MaeScore {
        MaeScore {
            sum_abs: compensated_sum(parts.iter().map(|p| p.sum_abs)),
            n: parts.iter().map(|p| p.n).sum(),
        }
    }
}

fn check_shape(predicted: &[f64], actual: &BinnedCounts, mask: Option<&LandMask>) -> Result<()> {
    if predicted.len() != actual.counts.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} bins", actual.counts.len()),
            found: format!("{} predictions", predicted.len()),
        });
    }
    if let Some(m) = mask.filter(|m| !m.matches(&actual.grid)) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} mask", actual.grid.ny, actual.grid.nx),
            found: format!("{}x{}", m.ny, m.nx),
        });
    }
    Ok(())
}

/// MAE between predicted expected counts and observed counts over land bins.
///
/// `predicted` holds `λ·A·τ` per bin of `actual.grid`.
pub fn mae(predicted: &[f64], actual: &BinnedCounts, mask: Option<&LandMask>) -> Result<MaeScore> {
    check_shape(predicted, actual, mask)?;
    let mut n = 0;
    let sum_abs = compensated_sum(
        (0..predicted.len())
            .filter(|&b| mask.is_none_or(|m| m.is_land_bin(&actual.grid, b)))
            .map(|b| {
                n += 1;
                (predicted[b] - f64::from(actual.counts[b])).abs()
            }),
    );
    Ok(MaeScore { sum_abs, n })
}

/// Expected counts per bin of `grid` from densities at its bin centres.
pub fn expected_counts(rate: &dyn RateSurface, grid: &SpatioTemporalGrid) -> Result<Vec<f64>> {
    let centers: Vec<Point> = (0..grid.num_bins()).map(|b| grid.bin_center(b)).collect();
    let v = grid.bin_volume();
    Ok(rate.rates(&centers)?.into_iter().map(|r| r * v).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub n: usize,
    pub mean: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

impl ResidualSummary {
    fn of(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        ResidualSummary {
            n: values.len(),
            mean: compensated_sum(values.iter().copied()) / values.len() as f64,
            q05: quantile(&values, 0.05),
            q25: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            q75: quantile(&values, 0.75),
            q95: quantile(&values, 0.95),
        }
    }
}

/// Linear-interpolation quantile of sorted, non-empty data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Residuals `predicted − observed` grouped by observed count and by cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBreakdown {
    pub by_count: BTreeMap<u32, ResidualSummary>,
    /// Mean residual per cell, row-major from the south; `None` for sea or empty cells.
    pub cell_mean: Vec<Option<f64>>,
    pub nx: usize,
    pub ny: usize,
    pub overall_mean: f64,
    pub n: usize,
}

pub fn residual_breakdown(predicted: &[f64], actual: &BinnedCounts, mask: Option<&LandMask>) -> Result<ResidualBreakdown> {
    check_shape(predicted, actual, mask)?;
    let grid = &actual.grid;
    let records = predicted
        .iter()
        .enumerate()
        .filter(|&(b, _)| mask.is_none_or(|m| m.is_land_bin(grid, b)))
        .map(|(b, &pred)| {
            let (_, j, i) = grid.unravel(b);
            (pred, actual.counts[b], j * grid.nx + i)
        });
    Ok(ResidualBreakdown::from_records(records, grid.nx, grid.ny))
}

impl ResidualBreakdown {
    /// From `(predicted, observed, cell)` triples, `cell = j·nx + i`.
    pub fn from_records<I: IntoIterator<Item = (f64, u32, usize)>>(records: I, nx: usize, ny: usize) -> Self {
        let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let mut cell_sum = vec![0.0; nx * ny];
        let mut cell_n = vec![0usize; nx * ny];
        let mut all = Vec::new();
        for (pred, c, cell) in records {
            let r = pred - f64::from(c);
            groups.entry(c).or_default().push(r);
            cell_sum[cell] += r;
            cell_n[cell] += 1;
            all.push(r);
        }
        let n = all.len();
        ResidualBreakdown {
            by_count: groups.into_iter().map(|(c, v)| (c, ResidualSummary::of(v))).collect(),
            cell_mean: cell_sum
                .iter()
                .zip(&cell_n)
                .map(|(&s, &k)| (k > 0).then(|| s / k as f64))
                .collect(),
            nx,
            ny,
            overall_mean: if n == 0 { 0.0 } else { compensated_sum(all) / n as f64 },
            n,
        }
    }
}

/// One week's inputs for [`weekly_scores`].
pub struct WeekInput<'a> {
    pub rate: &'a dyn RateSurface,
    pub counts: &'a BinnedCounts,
    pub events: &'a [Point],
    pub window: ScoreWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyScore {
    pub fold_start: f64,
    pub fold_end: f64,
    pub mae: MaeScore,
    pub loglik: LoglikParts,
}

pub fn weekly_scores(weeks: &[WeekInput<'_>], cfg: &EvalConfig) -> Result<Vec<WeeklyScore>> {
    weeks
        .iter()
        .map(|w| {
            let predicted = expected_counts(w.rate, &w.counts.grid)?;
            Ok(WeeklyScore {
                fold_start: w.window.t_start,
                fold_end: w.window.t_end,
                mae: mae(&predicted, w.counts, cfg.land_mask.as_ref())?,
                loglik: poisson_loglik(w.rate, w.events, &w.window, cfg)?,
            })
        })
        .collect()
}

/// Global scores over all weeks: pooled MAE and pooled log-likelihood.
pub fn combine_weeks(rows: &[WeeklyScore]) -> (MaeScore, LoglikParts) {
    let maes: Vec<MaeScore> = rows.iter().map(|r| r.mae).collect();
    let lls: Vec<LoglikParts> = rows.iter().map(|r| r.loglik).collect();
    (MaeScore::combine(&maes), LoglikParts::combine(&lls))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_window() -> ScoreWindow {
        ScoreWindow {
            extent: SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap(),
            t_start: 0.0,
            t_end: 1.0,
        }
    }

    #[test]
    fn unit_rate_single_event() {
        let ll = poisson_loglik(&ConstantSurface(1.0), &[Point::new(0.5, 0.5, 0.5)], &unit_window(), &EvalConfig::default()).unwrap();
        assert!((ll.total() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_events_gives_minus_integral() {
        let w = ScoreWindow { t_end: 10.0, ..unit_window() };
        let ll = poisson_loglik(&ConstantSurface(0.3), &[], &w, &EvalConfig::default()).unwrap();
        assert!((ll.total() + 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_is_clipped() {
        let ll = poisson_loglik(&ConstantSurface(0.0), &[Point::new(0.5, 0.5, 0.5)], &unit_window(), &EvalConfig::default()).unwrap();
        assert_eq!(ll.event_term, 1e-4f64.ln());
        assert!((ll.event_term + 9.2103).abs() < 1e-4);
        assert_eq!(ll.clipped, 1);
    }

    #[test]
    fn outside_events_rejected() {
        let r = poisson_loglik(&ConstantSurface(1.0), &[Point::new(0.5, 0.5, 1.0)], &unit_window(), &EvalConfig::default());
        assert!(matches!(r, Err(Error::EventOutsideDomain { .. })));
    }

    #[test]
    fn partial_last_step() {
        let w = ScoreWindow { t_end: 6.0, ..unit_window() };
        let (pts, vols) = integration_nodes(&w, &EvalConfig { integration_nx: 1, integration_ny: 1, ..Default::default() }).unwrap();
        assert_eq!(vols, vec![4.0, 2.0]);
        assert_eq!(pts[1].t, 5.0);
    }

    #[test]
    fn doubling_rate() {
        let w = ScoreWindow { t_end: 8.0, ..unit_window() };
        let ev = [Point::new(0.1, 0.2, 1.0), Point::new(0.7, 0.9, 5.5), Point::new(0.3, 0.3, 7.9)];
        let cfg = EvalConfig::default();
        let a = poisson_loglik(&ConstantSurface(0.7), &ev, &w, &cfg).unwrap();
        let b = poisson_loglik(&ConstantSurface(1.4), &ev, &w, &cfg).unwrap();
        assert!((b.total() - a.total() - (3.0 * 2f64.ln() - a.integral)).abs() < 1e-12);
    }

    #[test]
    fn mae_examples() {
        let e = SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let g = SpatioTemporalGrid::new(e, 2, 1, 0.0, 8.0, 4.0).unwrap();
        let mut c = BinnedCounts::zeros(g.clone());
        assert_eq!(mae(&[0.0; 4], &c, None).unwrap().value(), 0.0);
        c.counts = vec![0, 2, 0, 2];
        assert_eq!(mae(&[1.0; 4], &c, None).unwrap().value(), 1.0);
        let mask = LandMask::from_cells(&g, vec![true, false]).unwrap();
        let s = mae(&[1.0, 9.0, 1.0, 9.0], &c, Some(&mask)).unwrap();
        assert_eq!((s.n, s.value()), (2, 1.0));
        assert!(matches!(mae(&[1.0; 3], &c, None), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn residual_single_bin() {
        let e = SpatialExtent::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let g = SpatioTemporalGrid::new(e, 1, 1, 0.0, 4.0, 4.0).unwrap();
        let mut c = BinnedCounts::zeros(g);
        c.counts = vec![2];
        let r = residual_breakdown(&[0.5], &c, None).unwrap();
        assert_eq!(r.by_count[&2].mean, -1.5);
        assert_eq!(r.cell_mean, vec![Some(-1.5)]);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.1), 1.4);
    }
}
