//! MEDIC baseline: the average count of the same cell and time-of-week slot
//! over the preceding weeks, repeated for earlier years.

use serde::{Deserialize, Serialize};

use crate::data::{BinnedCounts, HOURS_PER_WEEK};
use crate::error::{Error, Result};

/// 52 weeks in hours.
pub const HOURS_PER_LOOKBACK_YEAR: f64 = 52.0 * HOURS_PER_WEEK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MedicConfig {
    pub weeks_back: usize,
    /// Earlier years to include; `None` uses every year the history covers.
    pub years_back: Option<usize>,
    /// Bin length in hours.
    pub t_bin: f64,
}

impl Default for MedicConfig {
    fn default() -> Self {
        MedicConfig {
            weeks_back: 4,
            years_back: None,
            t_bin: 4.0,
        }
    }
}

impl MedicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weeks_back == 0 {
            return Err(Error::InvalidConfig("weeks_back must be at least 1".into()));
        }
        if !(self.t_bin > 0.0) {
            return Err(Error::InvalidConfig("t_bin must be positive".into()));
        }
        Ok(())
    }
}

/// A test bin: its start time and the `(y_cell, x_cell)` it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestBin {
    pub t: f64,
    pub j: usize,
    pub i: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedicPrediction {
    /// Mean gathered count per test bin.
    pub counts: Vec<f64>,
    /// How many historical values went into each mean.
    pub gathered: Vec<usize>,
    /// Test bins with nothing to average (predicted 0).
    pub no_history: usize,
}

impl MedicPrediction {
    /// Counts per bin divided by `bin_volume`, in km⁻² h⁻¹.
    pub fn densities(&self, bin_volume: f64) -> Vec<f64> {
        self.counts.iter().map(|c| c / bin_volume).collect()
    }
}

fn history_slot(history: &BinnedCounts, t: f64) -> Result<Option<usize>> {
    let grid = &history.grid;
    if t >= grid.t_end() {
        return Err(Error::Leakage { time: t });
    }
    if t < grid.t_start {
        return Ok(None);
    }
    let offset = (t - grid.t_start) / grid.t_bin;
    let k = offset.round();
    if (offset - k).abs() > 1e-6 {
        return Err(Error::Malformed(format!("t = {t} h is not aligned with the history bins")));
    }
    Ok(Some(k as usize))
}

/// Predicts each test bin from `history`, which must end before every test bin.
pub fn medic_predict(history: &BinnedCounts, test_bins: &[TestBin], cfg: &MedicConfig) -> Result<MedicPrediction> {
    cfg.validate()?;
    let grid = &history.grid;
    if (grid.t_bin - cfg.t_bin).abs() > 1e-9 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} h history bins", cfg.t_bin),
            found: format!("{} h", grid.t_bin),
        });
    }
    let mut counts = Vec::with_capacity(test_bins.len());
    let mut gathered = Vec::with_capacity(test_bins.len());
    let mut no_history = 0;
    for bin in test_bins {
        if bin.t < grid.t_end() {
            return Err(Error::Leakage { time: bin.t });
        }
        if bin.j >= grid.ny || bin.i >= grid.nx {
            return Err(Error::ShapeMismatch {
                expected: format!("cell within {}x{}", grid.ny, grid.nx),
                found: format!("({}, {})", bin.j, bin.i),
            });
        }
        let mut sum = 0u64;
        let mut n = 0usize;
        let mut year = 0usize;
        loop {
            if cfg.years_back.is_some_and(|y| year > y) {
                break;
            }
            let year_shift = bin.t - year as f64 * HOURS_PER_LOOKBACK_YEAR;
            // Without an explicit limit, stop once even the nearest week of this year predates the history.
            if cfg.years_back.is_none() && year_shift - HOURS_PER_WEEK < grid.t_start {
                break;
            }
            for w in 1..=cfg.weeks_back {
                if let Some(k) = history_slot(history, year_shift - w as f64 * HOURS_PER_WEEK)? {
                    sum += u64::from(history.get(k, bin.j, bin.i));
                    n += 1;
                }
            }
            year += 1;
        }
        if n == 0 {
            no_history += 1;
            counts.push(0.0);
        } else {
            counts.push(sum as f64 / n as f64);
        }
        gathered.push(n);
    }
    if no_history > 0 {
        log::info!("{no_history} test bins had no MEDIC history");
    }
    Ok(MedicPrediction {
        counts,
        gathered,
        no_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SpatialExtent, SpatioTemporalGrid};

    fn history(weeks: usize) -> BinnedCounts {
        let e = SpatialExtent::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let g = SpatioTemporalGrid::new(e, 2, 1, 0.0, weeks as f64 * HOURS_PER_WEEK, 4.0).unwrap();
        BinnedCounts::zeros(g)
    }

    #[test]
    fn four_week_average() {
        let mut h = history(4);
        let per_week = 42;
        for (w, c) in [2u32, 0, 1, 1].iter().enumerate() {
            // slot 3 of week (3 - w), counting back from the test week
            let idx = h.grid.index((3 - w) * per_week + 3, 0, 1);
            h.counts[idx] = *c;
        }
        let test = [TestBin { t: 4.0 * HOURS_PER_WEEK + 12.0, j: 0, i: 1 }];
        let p = medic_predict(&h, &test, &MedicConfig::default()).unwrap();
        assert_eq!(p.counts, vec![1.0]);
        assert_eq!(p.gathered, vec![4]);
    }

    #[test]
    fn zero_history_and_missing_slots() {
        let h = history(2);
        let test = [TestBin { t: 2.0 * HOURS_PER_WEEK, j: 0, i: 0 }];
        let p = medic_predict(&h, &test, &MedicConfig::default()).unwrap();
        assert_eq!(p.counts, vec![0.0]);
        assert_eq!(p.gathered, vec![2]);
        assert_eq!(p.no_history, 0);

        let empty = history(0);
        let p = medic_predict(&empty, &[TestBin { t: 0.0, j: 0, i: 0 }], &MedicConfig::default()).unwrap();
        assert_eq!(p.no_history, 1);
        assert_eq!(p.counts, vec![0.0]);
    }

    #[test]
    fn leakage_is_rejected() {
        let h = history(4);
        let inside = [TestBin { t: 3.0 * HOURS_PER_WEEK, j: 0, i: 0 }];
        assert!(matches!(medic_predict(&h, &inside, &MedicConfig::default()), Err(Error::Leakage { .. })));
        // two weeks past the end: the one-week lookback lands after the history
        let gap = [TestBin { t: 6.0 * HOURS_PER_WEEK, j: 0, i: 0 }];
        assert!(matches!(medic_predict(&h, &gap, &MedicConfig::default()), Err(Error::Leakage { .. })));
    }

    #[test]
    fn previous_years_are_gathered() {
        let mut h = history(60);
        let t = 60.0 * HOURS_PER_WEEK;
        for w in 1..=4 {
            for y in 0..2 {
                let k = ((t - y as f64 * HOURS_PER_LOOKBACK_YEAR - w as f64 * HOURS_PER_WEEK) / 4.0) as usize;
                h.counts[h.grid.index(k, 0, 0)] = (1 + y * 2) as u32;
            }
        }
        let p = medic_predict(&h, &[TestBin { t, j: 0, i: 0 }], &MedicConfig::default()).unwrap();
        assert_eq!(p.gathered, vec![8]);
        assert_eq!(p.counts, vec![2.0]);
        let cfg = MedicConfig { years_back: Some(0), ..Default::default() };
        let p = medic_predict(&h, &[TestBin { t, j: 0, i: 0 }], &cfg).unwrap();
        assert_eq!(p.counts, vec![1.0]);
    }

    #[test]
    fn density_conversion() {
        let p = MedicPrediction { counts: vec![2.0], gathered: vec![4], no_history: 0 };
        assert_eq!(p.densities(4.0), vec![0.5]);
    }
}
