use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stgp::data::{bin_events, filter_events, ingest_csv, project, write_csv, SpatioTemporalGrid};
use stgp::harness::config::FileConfig;
use stgp::harness::report::{load_raw, persist_report, SUMMARY_TXT};
use stgp::harness::{mask_for_grid, run_backtest};
use stgp::metrics::{mae, poisson_loglik, BinnedSurface, ScoreWindow};
use stgp::svgp::{predict_rate, train, ModelFile, TrainingData};
use stgp::synth::{sample_events, true_loglik, write_events_csv};
use stgp::{Error, Point, Result};

/// Spatiotemporal demand forecasting: sparse variational LGCP vs MEDIC.
#[derive(Parser)]
#[command(name = "stgp", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set model.num_inducing=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, filter and normalize a raw call CSV.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Sample events from the `[synth]` intensity and write them as CSV.
    Synth {
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit one model on a time window and save it.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        output: PathBuf,
    },
    /// Predict rates on the model grid over a window.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a prediction table against events.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the rolling weekly backtest.
    Backtest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rescore and re-render a persisted backtest.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Window {
    /// Window start (timestamp).
    #[arg(long)]
    start: String,
    /// Window end, exclusive (timestamp).
    #[arg(long)]
    end: String,
}

fn load_config(cli: &Cli) -> Result<FileConfig> {
    let mut cfg = FileConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Ingests, filters and projects a CSV.
fn load_points(cfg: &FileConfig, path: &Path) -> Result<Vec<Point>> {
    let report = ingest_csv(path, &cfg.schema()?)?;
    for row in &report.malformed {
        log::warn!("skipped {row}");
    }
    let events = filter_events(&report.events, &cfg.bbox()?, cfg.data.emergencies_only);
    Ok(project(&events, &cfg.projection()?))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct PredictionRow {
    t: f64,
    j: usize,
    i: usize,
    x: f64,
    y: f64,
    rate: f64,
    expected_count: f64,
    latent_mean: f64,
    latent_var: f64,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { input, output } => {
            let report = ingest_csv(&input, &cfg.schema()?)?;
            for row in &report.malformed {
                eprintln!("skipped {row}");
            }
            let kept = filter_events(&report.events, &cfg.bbox()?, cfg.data.emergencies_only);
            write_csv(&output, &kept, &cfg.schema()?)?;
            println!(
                "read {} rows: {} valid, {} malformed, {} kept after filtering",
                report.events.len() + report.malformed.len(),
                report.events.len(),
                report.malformed.len(),
                kept.len()
            );
        }
        Command::Synth { output } => {
            let spec = cfg.intensity()?;
            let events = sample_events(&spec)?;
            write_events_csv(&output, &events, &cfg.projection()?, &cfg.schema()?)?;
            let truth = true_loglik(&spec, &events, &cfg.eval)?;
            println!("wrote {} events; true-intensity log-likelihood {:.3}", events.len(), truth.total());
        }
        Command::Train { input, window, output } => {
            let points = load_points(&cfg, &input)?;
            let (t0, t1) = (cfg.hours(&window.start)?, cfg.hours(&window.end)?);
            let spec = cfg.grid_spec()?;
            let grid = spec.grid(t0, t1)?;
            let binned = bin_events(&points, &grid);
            let mask = mask_for_grid(cfg.land_mask()?.as_ref(), &grid);
            let training = TrainingData::from_binned(&binned, Some(&mask));
            let mut model = cfg.model.clone();
            model.seed = cfg.seed;
            let out = train(&model, &training, &cfg.optimizer)?;
            ModelFile::new(out.state, grid, out.final_elbo).save(&output)?;
            println!(
                "trained on {} bins ({} events): ELBO {:.3}, {:?} after {} iterations",
                training.len(),
                binned.total(),
                out.final_elbo,
                out.optimizer.status,
                out.optimizer.iterations
            );
        }
        Command::Predict { model, window, output } => {
            let file = ModelFile::load(&model)?;
            let (t0, t1) = (cfg.hours(&window.start)?, cfg.hours(&window.end)?);
            let g = &file.grid;
            let grid = SpatioTemporalGrid::new(g.extent, g.nx, g.ny, t0, t1, g.t_bin)?;
            let centers: Vec<Point> = (0..grid.num_bins()).map(|b| grid.bin_center(b)).collect();
            let field = predict_rate(&file.state, &centers, file.grid.bin_volume())?;
            let mut w = csv::Writer::from_path(&output).map_err(|e| Error::Serialization(e.to_string()))?;
            for (b, p) in centers.iter().enumerate() {
                let (k, j, i) = grid.unravel(b);
                w.serialize(PredictionRow {
                    t: grid.time_edge(k),
                    j,
                    i,
                    x: p.x,
                    y: p.y,
                    rate: field.rate[b],
                    expected_count: field.rate[b] * grid.bin_volume(),
                    latent_mean: field.latent_mean[b],
                    latent_var: field.latent_var[b],
                })
                .map_err(|e| Error::Serialization(e.to_string()))?;
            }
            w.flush().map_err(|e| Error::io(&output, e))?;
            println!("wrote {} bins", grid.num_bins());
        }
        Command::Evaluate { predictions, input } => {
            let mut r = csv::Reader::from_path(&predictions).map_err(|e| Error::Serialization(e.to_string()))?;
            let rows: Vec<PredictionRow> = r
                .deserialize()
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Malformed(format!("{}: {e}", predictions.display())))?;
            let spec = cfg.grid_spec()?;
            let t0 = rows.iter().map(|r| r.t).fold(f64::INFINITY, f64::min);
            let t1 = rows.iter().map(|r| r.t).fold(f64::NEG_INFINITY, f64::max) + spec.t_bin;
            if rows.is_empty() {
                return Err(Error::EmptyInput { malformed: vec![] });
            }
            let grid = spec.grid(t0, t1)?;
            let mut rates = vec![0.0; grid.num_bins()];
            if rows.len() != rates.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} bins on the configured grid", rates.len()),
                    found: format!("{} rows", rows.len()),
                });
            }
            for row in &rows {
                let k = grid
                    .time_bin_of(row.t + 0.5 * spec.t_bin)
                    .ok_or_else(|| Error::Malformed(format!("row at t = {} off the grid", row.t)))?;
                rates[grid.index(k, row.j, row.i)] = row.rate;
            }
            let points: Vec<Point> = load_points(&cfg, &input)?
                .into_iter()
                .filter(|p| p.t >= t0 && p.t < t1)
                .collect();
            let actual = bin_events(&points, &grid);
            let mask = mask_for_grid(cfg.land_mask()?.as_ref(), &grid);
            let predicted: Vec<f64> = rates.iter().map(|r| r * grid.bin_volume()).collect();
            let score = mae(&predicted, &actual, Some(&mask))?;
            let mut eval = cfg.eval.clone();
            eval.land_mask = cfg.land_mask()?;
            let window = ScoreWindow {
                extent: spec.extent,
                t_start: t0,
                t_end: t1,
            };
            let ll = poisson_loglik(&BinnedSurface { grid: &grid, rates: &rates }, &points, &window, &eval)?;
            println!("bins {}  events {}  MAE {:.6}  log-likelihood {:.6}", score.n, ll.events, score.value(), ll.total());
        }
        Command::Backtest { input, out } => {
            let points = load_points(&cfg, &input)?;
            let bt = cfg.backtest()?;
            let report = run_backtest(&bt, &points)?;
            persist_report(&report, &out)?;
            print!("{}", report.summary.render());
            let flagged = report.flagged_folds();
            if !flagged.is_empty() {
                println!("folds below the ELBO threshold after retraining: {flagged:?}");
            }
        }
        Command::Report { dir } => {
            let raw = load_raw(&dir)?;
            let text = raw.rescore().render();
            std::fs::write(dir.join(SUMMARY_TXT), &text).map_err(|e| Error::io(dir.join(SUMMARY_TXT), e))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
