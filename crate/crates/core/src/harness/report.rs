//! Backtest results: raw per-bin and per-event predictions, scores derived
//! from them, and their on-disk form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::BacktestConfig;
use crate::error::{Error, Result};
use crate::metrics::{loglik_from_rates, LoglikParts, MaeScore, ResidualBreakdown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub train_start: f64,
    pub train_bins: usize,
    /// Latest training event time; always before `start`.
    pub train_max_t: f64,
    pub elbo: f64,
    pub accepted_attempt: usize,
    pub attempts: usize,
    /// `;`-separated ELBO of every attempt.
    pub attempt_elbos: String,
    pub flagged: bool,
    pub stgp_integral: f64,
    pub medic_integral: f64,
    pub medic_no_history: usize,
}

/// One test bin: observed count and each method's expected count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRecord {
    pub fold: usize,
    /// Bin start, hours.
    pub t: f64,
    pub j: usize,
    pub i: usize,
    pub land: bool,
    pub count: u32,
    pub stgp: f64,
    pub medic: f64,
}

/// One test event and each method's rate there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub fold: usize,
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub stgp_rate: f64,
    pub medic_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub mae: MaeScore,
    pub loglik: LoglikParts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub stgp: MethodScore,
    pub medic: MethodScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub folds: Vec<FoldScore>,
    pub stgp: MethodScore,
    pub medic: MethodScore,
    pub stgp_residuals: ResidualBreakdown,
    pub medic_residuals: ResidualBreakdown,
}

impl Summary {
    /// Table of global scores followed by one row per fold.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>10} {:>16}", "method", "MAE", "log-likelihood");
        for (name, m) in [("STGP", &self.stgp), ("MEDIC", &self.medic)] {
            let _ = writeln!(s, "{:<8} {:>10.4} {:>16.2}", name, m.mae.value(), m.loglik.total());
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>5} {:>10} {:>10} {:>10} {:>14} {:>10} {:>14}",
            "fold", "start", "end", "stgp_mae", "stgp_loglik", "medic_mae", "medic_loglik"
        );
        for f in &self.folds {
            let _ = writeln!(
                s,
                "{:>5} {:>10} {:>10} {:>10.4} {:>14.2} {:>10.4} {:>14.2}",
                f.index,
                f.start,
                f.end,
                f.stgp.mae.value(),
                f.stgp.loglik.total(),
                f.medic.mae.value(),
                f.medic.loglik.total()
            );
        }
        s
    }
}

/// Recomputes every score from the raw records.
pub fn rescore(folds: &[FoldRecord], bins: &[BinRecord], events: &[EventRecord], rate_floor: f64, nx: usize, ny: usize) -> Summary {
    let mut fold_scores = Vec::with_capacity(folds.len());
    for f in folds {
        let fb: Vec<&BinRecord> = bins.iter().filter(|b| b.fold == f.index && b.land).collect();
        let fe: Vec<&EventRecord> = events.iter().filter(|e| e.fold == f.index).collect();
        let mae_of = |pred: fn(&BinRecord) -> f64| {
            let abs: Vec<f64> = fb.iter().map(|b| (pred(b) - f64::from(b.count)).abs()).collect();
            MaeScore {
                sum_abs: crate::linalg::compensated_sum(abs),
                n: fb.len(),
            }
        };
        let stgp_rates: Vec<f64> = fe.iter().map(|e| e.stgp_rate).collect();
        let medic_rates: Vec<f64> = fe.iter().map(|e| e.medic_rate).collect();
        fold_scores.push(FoldScore {
            index: f.index,
            start: f.start,
            end: f.end,
            stgp: MethodScore {
                mae: mae_of(|b| b.stgp),
                loglik: loglik_from_rates(&stgp_rates, f.stgp_integral, rate_floor),
            },
            medic: MethodScore {
                mae: mae_of(|b| b.medic),
                loglik: loglik_from_rates(&medic_rates, f.medic_integral, rate_floor),
            },
        });
    }
    let pool = |pick: fn(&FoldScore) -> MethodScore| {
        let parts: Vec<MethodScore> = fold_scores.iter().map(pick).collect();
        MethodScore {
            mae: MaeScore::combine(&parts.iter().map(|p| p.mae).collect::<Vec<_>>()),
            loglik: LoglikParts::combine(&parts.iter().map(|p| p.loglik).collect::<Vec<_>>()),
        }
    };
    let residuals = |pred: fn(&BinRecord) -> f64| {
        ResidualBreakdown::from_records(
            bins.iter().filter(|b| b.land).map(|b| (pred(b), b.count, b.j * nx + b.i)),
            nx,
            ny,
        )
    };
    Summary {
        stgp: pool(|f| f.stgp),
        medic: pool(|f| f.medic),
        stgp_residuals: residuals(|b| b.stgp),
        medic_residuals: residuals(|b| b.medic),
        folds: fold_scores,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    /// Wall-clock time the report was assembled (RFC 3339).
    pub generated_at: String,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub provenance: Provenance,
    pub folds: Vec<FoldRecord>,
    pub bins: Vec<BinRecord>,
    pub events: Vec<EventRecord>,
    pub summary: Summary,
}

impl BacktestReport {
    pub fn assemble(cfg: &BacktestConfig, folds: Vec<FoldRecord>, bins: Vec<BinRecord>, events: Vec<EventRecord>) -> Self {
        let summary = rescore(&folds, &bins, &events, cfg.eval.rate_floor, cfg.grid.nx, cfg.grid.ny);
        BacktestReport {
            provenance: Provenance {
                config_hash: cfg.hash(),
                seed: cfg.seed,
                generated_at: chrono::Utc::now().to_rfc3339(),
            },
            config: cfg.clone(),
            folds,
            bins,
            events,
            summary,
        }
    }

    /// Flagged folds, where no training attempt met the threshold.
    pub fn flagged_folds(&self) -> Vec<usize> {
        self.folds.iter().filter(|f| f.flagged).map(|f| f.index).collect()
    }
}

pub const SUMMARY_TXT: &str = "summary.txt";
pub const SUMMARY_JSON: &str = "summary.json";
pub const FOLDS_CSV: &str = "folds.csv";
pub const BINS_CSV: &str = "bins.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const RESIDUALS_CSV: &str = "residuals.csv";
pub const CELL_RESIDUALS_CSV: &str = "cell_residuals.csv";
pub const CONFIG_TOML: &str = "config.toml";

fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serialization(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct ResidualRow {
    method: &'static str,
    count: u32,
    n: usize,
    mean: f64,
    q05: f64,
    q25: f64,
    median: f64,
    q75: f64,
    q95: f64,
}

#[derive(Serialize)]
struct CellRow {
    method: &'static str,
    j: usize,
    i: usize,
    mean_residual: Option<f64>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    provenance: &'a Provenance,
    stgp_mae: f64,
    stgp_loglik: f64,
    medic_mae: f64,
    medic_loglik: f64,
    flagged_folds: Vec<usize>,
    summary: &'a Summary,
}

/// Writes the summary, per-fold scores, raw predictions, residual tables and
/// the resolved configuration to `out_dir`.
pub fn persist_report(report: &BacktestReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let s = &report.summary;
    write_text(&out_dir.join(SUMMARY_TXT), &s.render())?;
    let json = serde_json::to_string_pretty(&SummaryFile {
        provenance: &report.provenance,
        stgp_mae: s.stgp.mae.value(),
        stgp_loglik: s.stgp.loglik.total(),
        medic_mae: s.medic.mae.value(),
        medic_loglik: s.medic.loglik.total(),
        flagged_folds: report.flagged_folds(),
        summary: s,
    })
    .map_err(|e| Error::Serialization(e.to_string()))?;
    write_text(&out_dir.join(SUMMARY_JSON), &json)?;
    write_records(&out_dir.join(FOLDS_CSV), &report.folds)?;
    write_records(&out_dir.join(BINS_CSV), &report.bins)?;
    write_records(&out_dir.join(EVENTS_CSV), &report.events)?;

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (method, r) in [("stgp", &s.stgp_residuals), ("medic", &s.medic_residuals)] {
        for (&count, g) in &r.by_count {
            rows.push(ResidualRow {
                method,
                count,
                n: g.n,
                mean: g.mean,
                q05: g.q05,
                q25: g.q25,
                median: g.median,
                q75: g.q75,
                q95: g.q95,
            });
        }
        for (idx, m) in r.cell_mean.iter().enumerate() {
            cells.push(CellRow {
                method,
                j: idx / r.nx,
                i: idx % r.nx,
                mean_residual: *m,
            });
        }
    }
    write_records(&out_dir.join(RESIDUALS_CSV), &rows)?;
    write_records(&out_dir.join(CELL_RESIDUALS_CSV), &cells)?;
    let config = toml::to_string(&report.config).map_err(|e| Error::Serialization(e.to_string()))?;
    write_text(&out_dir.join(CONFIG_TOML), &config)?;
    Ok(())
}

/// Raw records and configuration read back from a report directory.
#[derive(Debug, Clone)]
pub struct RawReport {
    pub config: BacktestConfig,
    pub folds: Vec<FoldRecord>,
    pub bins: Vec<BinRecord>,
    pub events: Vec<EventRecord>,
}

impl RawReport {
    pub fn rescore(&self) -> Summary {
        rescore(
            &self.folds,
            &self.bins,
            &self.events,
            self.config.eval.rate_floor,
            self.config.grid.nx,
            self.config.grid.ny,
        )
    }
}

pub fn load_raw(dir: &Path) -> Result<RawReport> {
    let path = dir.join(CONFIG_TOML);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let config = toml::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    Ok(RawReport {
        config,
        folds: read_records(&dir.join(FOLDS_CSV))?,
        bins: read_records(&dir.join(BINS_CSV))?,
        events: read_records(&dir.join(EVENTS_CSV))?,
    })
}
