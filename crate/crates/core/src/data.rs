//! Call records, spatial filtering, projection to km and spatiotemporal binning.
//!
//! Conventions used throughout:
//!
//! * Timestamps are hours since a configurable epoch.
//! * Bounding-box filtering is strict: an event on the box edge is dropped.
//! * Bins are half-open `[low, high)` on every axis, so an event on an
//!   interior edge lands in the higher-index bin and nothing is counted twice.
//! * Counts are stored row-major as `(time_bin, y_cell, x_cell)`, with
//!   `y_cell = 0` the southernmost row.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};
use crate::Point;

pub const HOURS_PER_WEEK: f64 = 168.0;

/// Mean Earth radius times pi/180.
pub const KM_PER_DEG_LAT: f64 = 6371.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    /// Hours since the configured epoch.
    pub timestamp: f64,
    pub lat: f64,
    pub lon: f64,
    pub is_emergency: bool,
}

impl CallRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.timestamp.is_finite() {
            return Err("timestamp is not finite".into());
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(format!("latitude {} out of range", self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(format!("longitude {} out of range", self.lon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSet {
    pub records: Vec<CallRecord>,
}

impl EventSet {
    pub fn new(records: Vec<CallRecord>) -> Self {
        EventSet { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        let mut it = self.records.iter().map(|r| r.timestamp);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }
}

/// Names of the CSV columns holding each field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    /// Optional 0/1 column; when absent every row is an emergency.
    pub emergency: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            timestamp: "timestamp".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            emergency: Some("emergency".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub columns: ColumnMapping,
    pub epoch: DateTime<Utc>,
}

impl CsvSchema {
    pub fn new(columns: ColumnMapping, epoch: DateTime<Utc>) -> Self {
        CsvSchema { columns, epoch }
    }

    /// Default columns with the given epoch (ISO-8601, `Z` optional).
    pub fn with_epoch(epoch: &str) -> Result<Self> {
        let epoch = parse_timestamp(epoch)
            .map_err(|e| Error::InvalidConfig(format!("epoch {epoch:?}: {e}")))?;
        Ok(CsvSchema::new(ColumnMapping::default(), epoch))
    }

    fn epoch_seconds(&self) -> i64 {
        self.epoch.timestamp()
    }

    /// Converts a parsed timestamp to hours since the epoch.
    pub fn hours_since_epoch(&self, at: DateTime<Utc>) -> f64 {
        let secs = at.timestamp() - self.epoch_seconds();
        let nanos = i64::from(at.timestamp_subsec_nanos()) - i64::from(self.epoch.timestamp_subsec_nanos());
        (secs as f64 + nanos as f64 * 1e-9) / 3600.0
    }

    /// Whole epoch seconds for an hour offset, as written by [`write_csv`].
    pub fn epoch_seconds_for(&self, hours: f64) -> i64 {
        self.epoch_seconds() + (hours * 3600.0).round() as i64
    }
}

/// Parses ISO-8601 (UTC; trailing `Z` or offset optional) or integer epoch seconds.
pub fn parse_timestamp(raw: &str) -> std::result::Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return DateTime::from_timestamp(secs, 0).ok_or_else(|| format!("epoch seconds {secs} out of range"));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(naive.and_utc());
        }
    }
    if let Ok(date) = chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Ok(date.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(format!("unparseable timestamp {raw:?}"))
}

/// Result of [`ingest_csv`]: the valid records plus every rejected row.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub events: EventSet,
    pub malformed: Vec<RowError>,
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Malformed(format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let cols = &schema.columns;
    let missing: Vec<&str> = [&cols.timestamp, &cols.lat, &cols.lon]
        .into_iter()
        .filter(|c| find(c).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Malformed(format!("missing required columns {missing:?}")));
    }
    let ts_col = find(&cols.timestamp).unwrap();
    let lat_col = find(&cols.lat).unwrap();
    let lon_col = find(&cols.lon).unwrap();
    let em_col = cols.emergency.as_deref().and_then(find);

    let mut records = Vec::new();
    let mut malformed = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            let field = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {i}"));
            let at = parse_timestamp(field(ts_col)?)?;
            let lat: f64 = field(lat_col)?
                .parse()
                .map_err(|e| format!("latitude: {e}"))?;
            let lon: f64 = field(lon_col)?
                .parse()
                .map_err(|e| format!("longitude: {e}"))?;
            let is_emergency = match em_col {
                None => true,
                Some(i) => match field(i)? {
                    "1" | "true" | "True" | "TRUE" => true,
                    "0" | "false" | "False" | "FALSE" => false,
                    other => return Err(format!("emergency flag {other:?} is not 0/1")),
                },
            };
            let record = CallRecord {
                timestamp: schema.hours_since_epoch(at),
                lat,
                lon,
                is_emergency,
            };
            record.validate()?;
            Ok(record)
        });
        match parsed {
            Ok(r) => records.push(r),
            Err(reason) => malformed.push(RowError { row, reason }),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyInput { malformed });
    }
    Ok(IngestReport {
        events: EventSet::new(records),
        malformed,
    })
}

/// Writes events in the ingest format with integer epoch-second timestamps.
///
/// Timestamps are rounded to whole seconds; records whose timestamps are whole
/// seconds round-trip through [`ingest_csv`] exactly.
pub fn write_csv(path: &Path, events: &EventSet, schema: &CsvSchema) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_events(file, events, schema).map_err(|e| Error::io(path, e))
}

pub fn write_events<W: Write>(writer: W, events: &EventSet, schema: &CsvSchema) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    let cols = &schema.columns;
    let em = cols.emergency.as_deref().unwrap_or("emergency");
    writeln!(w, "{},{},{},{}", cols.timestamp, cols.lat, cols.lon, em)?;
    for r in &events.records {
        writeln!(
            w,
            "{},{},{},{}",
            schema.epoch_seconds_for(r.timestamp),
            r.lat,
            r.lon,
            u8::from(r.is_emergency)
        )?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lon_min: f64,
    pub lat_max: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn new(lat_min: f64, lon_min: f64, lat_max: f64, lon_max: f64) -> Result<Self> {
        let bbox = BoundingBox {
            lat_min,
            lon_min,
            lat_max,
            lon_max,
        };
        bbox.validate()?;
        Ok(bbox)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lon_min, self.lat_max, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::InvalidConfig(format!("degenerate bounding box {self:?}")));
        }
        Ok(())
    }

    /// The rectangle given for the Cape Town study area: lower-left
    /// (-34.98, 17.09), upper-right (-30.16, 24.27).
    pub fn cape_town() -> Self {
        BoundingBox {
            lat_min: -34.98,
            lon_min: 17.09,
            lat_max: -30.16,
            lon_max: 24.27,
        }
    }

    /// Strict interior test; points on the boundary are outside.
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat > self.lat_min && lat < self.lat_max && lon > self.lon_min && lon < self.lon_max
    }

    pub fn centroid(&self) -> (f64, f64) {
        (
            0.5 * (self.lat_min + self.lat_max),
            0.5 * (self.lon_min + self.lon_max),
        )
    }
}

pub fn filter_events(events: &EventSet, bbox: &BoundingBox, emergencies_only: bool) -> EventSet {
    EventSet::new(
        events
            .records
            .iter()
            .filter(|r| bbox.contains(r.lat, r.lon) && (!emergencies_only || r.is_emergency))
            .copied()
            .collect(),
    )
}

/// Local equirectangular projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub km_per_deg_lat: f64,
    pub km_per_deg_lon: f64,
}

impl Projection {
    /// `km_per_deg_lon` is derived as `km_per_deg_lat * cos(origin_lat)`.
    pub fn new(origin_lat: f64, origin_lon: f64, km_per_deg_lat: f64) -> Result<Self> {
        let km_per_deg_lon = km_per_deg_lat * origin_lat.to_radians().cos();
        if !(km_per_deg_lat > 0.0 && km_per_deg_lon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "projection scale factors must be positive (origin lat {origin_lat})"
            )));
        }
        Ok(Projection {
            origin_lat,
            origin_lon,
            km_per_deg_lat,
            km_per_deg_lon,
        })
    }

    /// Projection centred on the box centroid.
    pub fn centered_on(bbox: &BoundingBox) -> Result<Self> {
        let (lat, lon) = bbox.centroid();
        Projection::new(lat, lon, KM_PER_DEG_LAT)
    }

    pub fn forward(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) * self.km_per_deg_lon,
            (lat - self.origin_lat) * self.km_per_deg_lat,
        )
    }

    /// Returns `(lat, lon)`.
    pub fn inverse(&self, x_km: f64, y_km: f64) -> (f64, f64) {
        (
            self.origin_lat + y_km / self.km_per_deg_lat,
            self.origin_lon + x_km / self.km_per_deg_lon,
        )
    }

    pub fn extent_of(&self, bbox: &BoundingBox) -> SpatialExtent {
        let (x_min, y_min) = self.forward(bbox.lat_min, bbox.lon_min);
        let (x_max, y_max) = self.forward(bbox.lat_max, bbox.lon_max);
        SpatialExtent {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }
}

/// Projects every record to `(x_km, y_km, t)`, preserving order.
pub fn project(events: &EventSet, proj: &Projection) -> Vec<Point> {
    events
        .records
        .iter()
        .map(|r| {
            let (x, y) = proj.forward(r.lat, r.lon);
            Point::new(x, y, r.timestamp)
        })
        .collect()
}

/// Inverse of [`project`]; every record is flagged as an emergency.
pub fn unproject(points: &[Point], proj: &Projection) -> EventSet {
    EventSet::new(
        points
            .iter()
            .map(|p| {
                let (lat, lon) = proj.inverse(p.x, p.y);
                CallRecord {
                    timestamp: p.t,
                    lat,
                    lon,
                    is_emergency: true,
                }
            })
            .collect(),
    )
}

/// Axis-aligned rectangle in projected km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialExtent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SpatialExtent {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let e = SpatialExtent {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        if !(x_min < x_max && y_min < y_max) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(format!("degenerate spatial extent {e:?}")));
        }
        Ok(e)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Half-open containment `[min, max)` on both axes.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }
}

/// Index of the half-open interval `[edge(i), edge(i+1))` containing `v`, where
/// `edge(i) = lo + i * step` for `i < n` and `edge(n) = hi`.
pub(crate) fn interval_index(v: f64, lo: f64, hi: f64, step: f64, n: usize) -> Option<usize> {
    if !(v >= lo && v < hi) {
        return None;
    }
    let edge = |i: usize| if i == n { hi } else { lo + i as f64 * step };
    let mut i = (((v - lo) / step).floor().max(0.0) as usize).min(n - 1);
    while i + 1 < n && v >= edge(i + 1) {
        i += 1;
    }
    while i > 0 && v < edge(i) {
        i -= 1;
    }
    Some(i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalGrid {
    pub extent: SpatialExtent,
    pub nx: usize,
    pub ny: usize,
    pub t_start: f64,
    /// Hours per time bin.
    pub t_bin: f64,
    /// Number of time bins; the end is `t_start + n_t * t_bin`.
    pub n_t: usize,
}

impl SpatioTemporalGrid {
    /// Builds a grid over `[t_start, t_end)`, clamping `t_end` down to a whole
    /// number of bins.
    pub fn new(extent: SpatialExtent, nx: usize, ny: usize, t_start: f64, t_end: f64, t_bin: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidConfig("grid needs at least one cell per axis".into()));
        }
        if !(t_bin > 0.0) || !t_start.is_finite() || !t_end.is_finite() || t_end < t_start {
            return Err(Error::InvalidConfig(format!(
                "invalid time axis [{t_start}, {t_end}) with bin {t_bin}"
            )));
        }
        SpatialExtent::new(extent.x_min, extent.x_max, extent.y_min, extent.y_max)?;
        let n_t = ((t_end - t_start) / t_bin + 1e-9).floor() as usize;
        Ok(SpatioTemporalGrid {
            extent,
            nx,
            ny,
            t_start,
            t_bin,
            n_t,
        })
    }

    pub fn from_bbox(
        bbox: &BoundingBox,
        proj: &Projection,
        nx: usize,
        ny: usize,
        t_start: f64,
        t_end: f64,
        t_bin: f64,
    ) -> Result<Self> {
        bbox.validate()?;
        SpatioTemporalGrid::new(proj.extent_of(bbox), nx, ny, t_start, t_end, t_bin)
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.n_t as f64 * self.t_bin
    }

    pub fn cell_dx(&self) -> f64 {
        self.extent.width() / self.nx as f64
    }

    pub fn cell_dy(&self) -> f64 {
        self.extent.height() / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_dx() * self.cell_dy()
    }

    /// `A * tau` in km^2 * hours.
    pub fn bin_volume(&self) -> f64 {
        self.cell_area() * self.t_bin
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_bins(&self) -> usize {
        self.n_t * self.num_cells()
    }

    pub fn index(&self, k: usize, j: usize, i: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    /// Inverse of [`index`](Self::index): `(time_bin, y_cell, x_cell)`.
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / self.num_cells();
        (k, j, i)
    }

    pub fn time_edge(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.t_bin
    }

    pub fn time_bin_of(&self, t: f64) -> Option<usize> {
        if self.n_t == 0 {
            return None;
        }
        interval_index(t, self.t_start, self.t_end(), self.t_bin, self.n_t)
    }

    /// `(y_cell, x_cell)` containing the point, half-open.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let e = &self.extent;
        let i = interval_index(x, e.x_min, e.x_max, self.cell_dx(), self.nx)?;
        let j = interval_index(y, e.y_min, e.y_max, self.cell_dy(), self.ny)?;
        Some((j, i))
    }

    pub fn bin_of(&self, p: &Point) -> Option<usize> {
        let k = self.time_bin_of(p.t)?;
        let (j, i) = self.cell_of(p.x, p.y)?;
        Some(self.index(k, j, i))
    }

    pub fn cell_center(&self, j: usize, i: usize) -> (f64, f64) {
        (
            self.extent.x_min + (i as f64 + 0.5) * self.cell_dx(),
            self.extent.y_min + (j as f64 + 0.5) * self.cell_dy(),
        )
    }

    pub fn bin_center(&self, idx: usize) -> Point {
        let (k, j, i) = self.unravel(idx);
        let (x, y) = self.cell_center(j, i);
        Point::new(x, y, self.t_start + (k as f64 + 0.5) * self.t_bin)
    }

    /// The same spatial grid over time bins `[k0, k1)`.
    pub fn time_slice(&self, k0: usize, k1: usize) -> SpatioTemporalGrid {
        assert!(k0 <= k1 && k1 <= self.n_t, "time slice out of range");
        SpatioTemporalGrid {
            t_start: self.time_edge(k0),
            n_t: k1 - k0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedCounts {
    pub grid: SpatioTemporalGrid,
    /// Indexed by [`SpatioTemporalGrid::index`].
    pub counts: Vec<u32>,
    /// Events that fell outside the spatial or temporal extent.
    pub dropped: usize,
}

impl BinnedCounts {
    pub fn zeros(grid: SpatioTemporalGrid) -> Self {
        let n = grid.num_bins();
        BinnedCounts {
            grid,
            counts: vec![0; n],
            dropped: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn get(&self, k: usize, j: usize, i: usize) -> u32 {
        self.counts[self.grid.index(k, j, i)]
    }

    pub fn bin_centers(&self) -> Vec<Point> {
        (0..self.counts.len()).map(|b| self.grid.bin_center(b)).collect()
    }

    /// Bins `[k0, k1)` only, as a standalone tensor.
    pub fn time_slice(&self, k0: usize, k1: usize) -> BinnedCounts {
        let grid = self.grid.time_slice(k0, k1);
        let cells = self.grid.num_cells();
        BinnedCounts {
            counts: self.counts[k0 * cells..k1 * cells].to_vec(),
            grid,
            dropped: 0,
        }
    }
}

/// Counts projected events per half-open bin.
pub fn bin_events(events: &[Point], grid: &SpatioTemporalGrid) -> BinnedCounts {
    let mut out = BinnedCounts::zeros(grid.clone());
    for p in events {
        match grid.bin_of(p) {
            Some(b) => out.counts[b] += 1,
            None => out.dropped += 1,
        }
    }
    out
}

/// Grid-aligned raster, `true` where a cell covers any land.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandMask {
    pub extent: SpatialExtent,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, row 0 southernmost.
    pub land: Vec<bool>,
}

impl LandMask {
    pub fn all_land(grid: &SpatioTemporalGrid) -> Self {
        LandMask {
            extent: grid.extent,
            nx: grid.nx,
            ny: grid.ny,
            land: vec![true; grid.num_cells()],
        }
    }

    pub fn from_cells(grid: &SpatioTemporalGrid, land: Vec<bool>) -> Result<Self> {
        if land.len() != grid.num_cells() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} cells", grid.num_cells()),
                found: format!("{} cells", land.len()),
            });
        }
        Ok(LandMask {
            extent: grid.extent,
            nx: grid.nx,
            ny: grid.ny,
            land,
        })
    }

    pub fn is_land_cell(&self, j: usize, i: usize) -> bool {
        self.land[j * self.nx + i]
    }

    /// Land flag of the cell containing `(x, y)`; `false` outside the extent.
    pub fn is_land_at(&self, x: f64, y: f64) -> bool {
        let e = &self.extent;
        let dx = e.width() / self.nx as f64;
        let dy = e.height() / self.ny as f64;
        match (
            interval_index(x, e.x_min, e.x_max, dx, self.nx),
            interval_index(y, e.y_min, e.y_max, dy, self.ny),
        ) {
            (Some(i), Some(j)) => self.is_land_cell(j, i),
            _ => false,
        }
    }

    pub fn land_count(&self) -> usize {
        self.land.iter().filter(|&&l| l).count()
    }

    pub fn masked_count(&self) -> usize {
        self.land.len() - self.land_count()
    }

    pub fn matches(&self, grid: &SpatioTemporalGrid) -> bool {
        self.nx == grid.nx && self.ny == grid.ny
    }

    /// Whether the bin at flat index `idx` of `grid` is land.
    pub fn is_land_bin(&self, grid: &SpatioTemporalGrid, idx: usize) -> bool {
        let (_, j, i) = grid.unravel(idx);
        self.is_land_cell(j, i)
    }
}

/// Reads a plain-text 0/1 raster (first line is the southernmost row).
///
/// A missing file yields an all-land mask.
pub fn load_land_mask(path: Option<&Path>, grid: &SpatioTemporalGrid) -> Result<LandMask> {
    let Some(path) = path.filter(|p| p.exists()) else {
        log::info!("no land mask file; treating every cell as land");
        return Ok(LandMask::all_land(grid));
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut land = Vec::with_capacity(grid.num_cells());
    let mut rows = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<bool> = line
            .split_whitespace()
            .map(|tok| match tok {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Malformed(format!("land mask token {other:?}"))),
            })
            .collect::<Result<_>>()?;
        if row.len() != grid.nx {
            return Err(Error::ShapeMismatch {
                expected: format!("{} columns", grid.nx),
                found: format!("{} columns in row {rows}", row.len()),
            });
        }
        land.extend(row);
        rows += 1;
    }
    if rows != grid.ny {
        return Err(Error::ShapeMismatch {
            expected: format!("{} rows", grid.ny),
            found: format!("{rows} rows"),
        });
    }
    LandMask::from_cells(grid, land)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_grid(nx: usize, ny: usize, hours: f64, t_bin: f64) -> SpatioTemporalGrid {
        let extent = SpatialExtent::new(0.0, nx as f64, 0.0, ny as f64).unwrap();
        SpatioTemporalGrid::new(extent, nx, ny, 0.0, hours, t_bin).unwrap()
    }

    #[test]
    fn ingest_epoch_identity() {
        let schema = CsvSchema::with_epoch("2015-03-17T00:00:00").unwrap();
        let data = "timestamp,lat,lon,emergency\n2015-03-17T00:00:00,-33.9,18.5,1\n";
        let rep = ingest_reader(data.as_bytes(), &schema).unwrap();
        assert_eq!(rep.events.len(), 1);
        assert_eq!(rep.events.records[0].timestamp, 0.0);
        assert!(rep.malformed.is_empty());
    }

    #[test]
    fn ingest_span_in_hours() {
        let schema = CsvSchema::with_epoch("2015-01-01T00:00:00Z").unwrap();
        let data = "timestamp,lat,lon\n2015-03-17T06:00:00Z,-33.9,18.5\n1426658400,-33.9,18.5\n";
        let rep = ingest_reader(data.as_bytes(), &schema).unwrap();
        let (lo, hi) = rep.events.time_range().unwrap();
        assert_eq!(hi - lo, 24.0);
        // emergency column absent: every row counts
        assert!(rep.events.records.iter().all(|r| r.is_emergency));
    }

    #[test]
    fn ingest_collects_malformed_rows() {
        let schema = CsvSchema::with_epoch("2015-01-01").unwrap();
        let data = "timestamp,lat,lon,emergency\nnope,1,1,1\n0,95,1,1\n0,1,1,2\n3600,1,1,0\n";
        let rep = ingest_reader(data.as_bytes(), &schema).unwrap();
        assert_eq!(rep.events.len(), 1);
        let rows: Vec<usize> = rep.malformed.iter().map(|r| r.row).collect();
        assert_eq!(rows, vec![0, 1, 2]);
    }

    #[test]
    fn ingest_errors() {
        let schema = CsvSchema::with_epoch("2015-01-01").unwrap();
        let err = ingest_reader("timestamp,lat,lon\nx,1,1\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::EmptyInput { .. }));
        let err = ingest_reader("time,lat,lon\n0,1,1\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::Malformed(_)));
        let err = ingest_csv(Path::new("/nonexistent/calls.csv"), &schema).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn bbox_corner_is_excluded() {
        let bbox = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let ev = EventSet::new(vec![
            CallRecord { timestamp: 0.0, lat: 0.0, lon: 0.0, is_emergency: true },
            CallRecord { timestamp: 1.0, lat: 0.5, lon: 0.5, is_emergency: true },
            CallRecord { timestamp: 2.0, lat: 0.5, lon: 1.0, is_emergency: true },
            CallRecord { timestamp: 3.0, lat: 0.2, lon: 0.2, is_emergency: false },
        ]);
        let kept = filter_events(&ev, &bbox, true);
        assert_eq!(kept.records, vec![ev.records[1]]);
        assert_eq!(filter_events(&ev, &bbox, false).len(), 2);
    }

    #[test]
    fn filter_identity_when_all_inside() {
        let bbox = BoundingBox::new(-1.0, -1.0, 1.0, 1.0).unwrap();
        let ev = EventSet::new(
            (0..10)
                .map(|i| CallRecord { timestamp: i as f64, lat: 0.05 * i as f64, lon: -0.05 * i as f64, is_emergency: true })
                .collect(),
        );
        assert_eq!(filter_events(&ev, &bbox, true), ev);
    }

    #[test]
    fn degenerate_bbox_rejected() {
        assert!(BoundingBox::new(1.0, 0.0, 1.0, 2.0).is_err());
        assert!(BoundingBox::new(0.0, 3.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let p = Projection {
            origin_lat: -33.9,
            origin_lon: 18.5,
            km_per_deg_lat: 111.19,
            km_per_deg_lon: 111.19 * (-33.9f64).to_radians().cos(),
        };
        assert_eq!(p.forward(-33.9, 18.5), (0.0, 0.0));
        let (_, y) = p.forward(-32.9, 18.5);
        assert!((y - 111.19).abs() < 1e-9);
        let derived = Projection::new(-33.9, 18.5, 111.19).unwrap();
        assert_eq!(derived.km_per_deg_lon, p.km_per_deg_lon);
    }

    #[test]
    fn projection_round_trip() {
        let bbox = BoundingBox::cape_town();
        let proj = Projection::centered_on(&bbox).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let lat = rng.random_range(bbox.lat_min..bbox.lat_max);
            let lon = rng.random_range(bbox.lon_min..bbox.lon_max);
            let (x, y) = proj.forward(lat, lon);
            let (lat2, lon2) = proj.inverse(x, y);
            let (x2, y2) = proj.forward(lat2, lon2);
            assert!((x - x2).abs() < 1e-9 && (y - y2).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_geometry() {
        let grid = unit_grid(6, 6, 170.0, 4.0);
        assert_eq!(grid.n_t, 42);
        assert_eq!(grid.t_end(), 168.0);
        assert_eq!(grid.cell_area(), 1.0);
        assert_eq!(grid.bin_volume(), 4.0);
        for idx in [0, 5, 36, 1000, grid.num_bins() - 1] {
            let (k, j, i) = grid.unravel(idx);
            assert_eq!(grid.index(k, j, i), idx);
            assert_eq!(grid.bin_of(&grid.bin_center(idx)), Some(idx));
        }
        let x_extent = grid.extent.width();
        assert!((grid.nx as f64 * grid.cell_dx() - x_extent).abs() <= 1e-9 * x_extent);
    }

    #[test]
    fn single_event_single_bin() {
        let grid = unit_grid(6, 6, 4.0, 4.0);
        let c = grid.bin_center(grid.index(0, 2, 3));
        let b = bin_events(&[c], &grid);
        assert_eq!(b.get(0, 2, 3), 1);
        assert_eq!(b.total(), 1);
        assert_eq!(bin_events(&[], &grid).total(), 0);
    }

    #[test]
    fn interior_edges_go_up_and_outer_edges_drop() {
        let grid = unit_grid(3, 3, 12.0, 4.0);
        let b = bin_events(
            &[
                Point::new(1.0, 2.0, 4.0),
                Point::new(3.0, 0.5, 0.0),
                Point::new(0.5, 0.5, 12.0),
                Point::new(0.0, 0.0, 0.0),
            ],
            &grid,
        );
        assert_eq!(b.get(1, 2, 1), 1);
        assert_eq!(b.get(0, 0, 0), 1);
        assert_eq!(b.dropped, 2);
    }

    #[test]
    fn time_slice_keeps_counts() {
        let grid = unit_grid(2, 2, 12.0, 4.0);
        let pts = [Point::new(0.5, 0.5, 1.0), Point::new(1.5, 0.5, 5.0), Point::new(1.5, 1.5, 9.0)];
        let b = bin_events(&pts, &grid);
        let s = b.time_slice(1, 3);
        assert_eq!(s.grid.t_start, 4.0);
        assert_eq!(s.total(), 2);
        assert_eq!(s.get(0, 0, 1), 1);
    }

    #[test]
    fn land_mask_defaults_and_shapes() {
        let grid = unit_grid(6, 6, 4.0, 4.0);
        let m = load_land_mask(None, &grid).unwrap();
        assert_eq!(m.land_count(), 36);
        let m = load_land_mask(Some(Path::new("/nonexistent/mask.txt")), &grid).unwrap();
        assert_eq!(m.masked_count(), 0);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.txt");
        let mut text = String::new();
        let mut zeros = 0;
        for j in 0..6 {
            let row: Vec<&str> = (0..6)
                .map(|i| if zeros < 10 && (i + j) % 2 == 0 { zeros += 1; "0" } else { "1" })
                .collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        std::fs::write(&path, &text).unwrap();
        let m = load_land_mask(Some(&path), &grid).unwrap();
        assert_eq!(m.masked_count(), 10);
        // first line is row 0 (south)
        assert!(!m.is_land_cell(0, 0));
        assert!(!m.is_land_at(0.5, 0.5));

        std::fs::write(&path, "1 1 1\n1 1 1\n").unwrap();
        assert!(matches!(load_land_mask(Some(&path), &grid), Err(Error::ShapeMismatch { .. })));
    }
}
