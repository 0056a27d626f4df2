//! GPS log ingestion and trip segmentation.
//!
//! Raw logs are CSV files with a `truck_id,timestamp,x,y` header. Each truck's
//! samples become one [`RawTrace`]; forward differences give every point a
//! speed and heading; [`segment_trips`] then cuts the stream at stops and data
//! gaps and keeps only runs that are long enough to describe a road.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use geo::Coord;
use log::warn;
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::scalar::{wrap_angle, Real};

const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("missing column `{0}` in header")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsPoint<T: Real> {
    /// Seconds since the epoch. Kept in `f64` regardless of `T`.
    pub timestamp: f64,
    pub position: Coord<T>,
    /// m/s, set by [`derive_kinematics`].
    pub speed: Option<T>,
    /// Radians in `[0, 2π)`, set by [`derive_kinematics`].
    pub heading: Option<T>,
}

impl<T: Real> GpsPoint<T> {
    pub fn new(timestamp: f64, x: T, y: T) -> Self {
        GpsPoint {
            timestamp,
            position: Coord { x, y },
            speed: None,
            heading: None,
        }
    }
}

/// Time-ordered samples of a single truck.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace<T: Real> {
    pub truck_id: String,
    pub points: Vec<GpsPoint<T>>,
}

/// A maximal stretch of continuous movement.
#[derive(Debug, Clone, PartialEq)]
pub struct Trip<T: Real> {
    pub trip_id: u64,
    pub truck_id: String,
    pub points: Vec<GpsPoint<T>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Interpret x/y as lon/lat degrees and project them to local metres.
    pub latlon: bool,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome<T: Real> {
    pub traces: Vec<RawTrace<T>>,
    /// Rows dropped because their truck already had a sample at that time.
    pub duplicates_dropped: usize,
    /// (lon, lat) origin of the local projection when `latlon` was requested.
    pub projection_origin: Option<(f64, f64)>,
}

/// Totals produced while segmenting a batch of traces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentStats {
    pub candidate_runs: usize,
    pub slow_points: usize,
    pub undersized_points: usize,
}

struct Row {
    line: u64,
    truck: String,
    timestamp: f64,
    x: f64,
    y: f64,
    trip: Option<u64>,
}

fn column(headers: &csv::StringRecord, name: &'static str) -> Result<usize, TraceError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or(TraceError::MissingColumn(name))
}

fn read_rows<R: Read>(source: R, want_trip: bool) -> Result<Vec<Row>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let truck_col = column(&headers, "truck_id")?;
    let time_col = column(&headers, "timestamp")?;
    let x_col = column(&headers, "x")?;
    let y_col = column(&headers, "y")?;
    let trip_col = if want_trip {
        Some(column(&headers, "trip_id")?)
    } else {
        None
    };

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            TraceError::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize, name: &str| {
            record.get(idx).ok_or_else(|| TraceError::Parse {
                line,
                message: format!("missing field `{name}`"),
            })
        };
        let number = |idx: usize, name: &str| -> Result<f64, TraceError> {
            let raw = field(idx, name)?;
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(TraceError::Parse {
                    line,
                    message: format!("`{name}` is not a finite number: `{raw}`"),
                }),
            }
        };
        let truck = field(truck_col, "truck_id")?.to_string();
        let timestamp = number(time_col, "timestamp")?;
        let x = number(x_col, "x")?;
        let y = number(y_col, "y")?;
        let trip = match trip_col {
            Some(idx) => {
                let raw = field(idx, "trip_id")?;
                Some(raw.parse::<u64>().map_err(|_| TraceError::Parse {
                    line,
                    message: format!("`trip_id` is not an integer: `{raw}`"),
                })?)
            }
            None => None,
        };
        rows.push(Row {
            line,
            truck,
            timestamp,
            x,
            y,
            trip,
        });
    }
    Ok(rows)
}

/// Local equirectangular projection about the centroid of all samples.
fn project_latlon(rows: &mut [Row]) -> Option<(f64, f64)> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let lon0 = rows.iter().map(|r| r.x).sum::<f64>() / n;
    let lat0 = rows.iter().map(|r| r.y).sum::<f64>() / n;
    let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let cos0 = lat0.to_radians().cos();
    for r in rows.iter_mut() {
        let (lon, lat) = (r.x, r.y);
        r.x = (lon - lon0) * cos0 * k;
        r.y = (lat - lat0) * k;
    }
    Some((lon0, lat0))
}

/// Reads a GPS log into one trace per truck.
///
/// Traces come out in lexicographic truck order with points sorted by time.
/// When a truck has several rows with the same timestamp, the first row in
/// file order wins and the rest are counted in `duplicates_dropped`.
pub fn load_points<T: Real, R: Read>(
    source: R,
    options: LoadOptions,
) -> Result<LoadOutcome<T>, TraceError> {
    let mut rows = read_rows(source, false)?;
    let projection_origin = if options.latlon {
        project_latlon(&mut rows)
    } else {
        None
    };

    let mut by_truck: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    for row in rows {
        by_truck.entry(row.truck.clone()).or_default().push(row);
    }

    let mut duplicates_dropped = 0;
    let mut traces = Vec::with_capacity(by_truck.len());
    for (truck_id, mut rows) in by_truck {
        // stable sort keeps file order among equal timestamps
        rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let before = rows.len();
        rows.dedup_by(|later, first| later.timestamp == first.timestamp);
        duplicates_dropped += before - rows.len();
        let points = rows
            .iter()
            .map(|r| GpsPoint::new(r.timestamp, T::lit(r.x), T::lit(r.y)))
            .collect();
        traces.push(RawTrace { truck_id, points });
    }
    if duplicates_dropped > 0 {
        warn!("dropped {duplicates_dropped} samples with duplicate timestamps");
    }
    Ok(LoadOutcome {
        traces,
        duplicates_dropped,
        projection_origin,
    })
}

/// Reads a trips file (input schema plus `trip_id`) back into trips.
///
/// Kinematics are re-derived per trip. Trips come out in ascending id order.
pub fn read_trips<T: Real, R: Read>(source: R) -> Result<Vec<Trip<T>>, TraceError> {
    let rows = read_rows(source, true)?;
    let mut by_trip: BTreeMap<u64, (String, Vec<GpsPoint<T>>, u64)> = BTreeMap::new();
    for row in rows {
        let trip_id = row.trip.expect("trip column requested");
        let entry = by_trip
            .entry(trip_id)
            .or_insert_with(|| (row.truck.clone(), Vec::new(), row.line));
        if entry.0 != row.truck {
            return Err(TraceError::Parse {
                line: row.line,
                message: format!("trip {trip_id} spans several trucks"),
            });
        }
        if let Some(last) = entry.1.last() {
            if row.timestamp <= last.timestamp {
                return Err(TraceError::Parse {
                    line: row.line,
                    message: format!("timestamps of trip {trip_id} are not increasing"),
                });
            }
        }
        entry
            .1
            .push(GpsPoint::new(row.timestamp, T::lit(row.x), T::lit(row.y)));
    }
    Ok(by_trip
        .into_iter()
        .map(|(trip_id, (truck_id, mut points, _))| {
            derive_point_kinematics(&mut points);
            Trip {
                trip_id,
                truck_id,
                points,
            }
        })
        .collect())
}

/// Writes traces in the input CSV format.
pub fn write_traces_csv<T: Real, W: Write>(
    sink: W,
    traces: &[RawTrace<T>],
) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["truck_id", "timestamp", "x", "y"])?;
    for trace in traces {
        for p in &trace.points {
            w.write_record([
                trace.truck_id.clone(),
                p.timestamp.to_string(),
                p.position.x.to_string(),
                p.position.y.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes trips in the input CSV format with an extra `trip_id` column.
pub fn write_trips_csv<T: Real, W: Write>(sink: W, trips: &[Trip<T>]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["truck_id", "timestamp", "x", "y", "trip_id"])?;
    for trip in trips {
        for p in &trip.points {
            w.write_record([
                trip.truck_id.clone(),
                p.timestamp.to_string(),
                p.position.x.to_string(),
                p.position.y.to_string(),
                trip.trip_id.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn derive_point_kinematics<T: Real>(points: &mut [GpsPoint<T>]) {
    let n = points.len();
    if n == 0 {
        return;
    }
    if n == 1 {
        points[0].speed = Some(T::zero());
        points[0].heading = Some(T::zero());
        return;
    }
    for i in 0..n - 1 {
        let d = points[i + 1].position - points[i].position;
        let dt = T::lit(points[i + 1].timestamp - points[i].timestamp);
        points[i].speed = Some(d.x.hypot(d.y) / dt);
        points[i].heading = Some(wrap_angle(d.y.atan2(d.x)));
    }
    points[n - 1].speed = points[n - 2].speed;
    points[n - 1].heading = points[n - 2].heading;
}

/// Fills in speed and heading by forward difference.
///
/// The last point copies its predecessor; a lone point gets zero speed and
/// heading.
pub fn derive_kinematics<T: Real>(mut trace: RawTrace<T>) -> RawTrace<T> {
    derive_point_kinematics(&mut trace.points);
    trace
}

pub fn polyline_length<T: Real>(points: &[GpsPoint<T>]) -> T {
    points
        .windows(2)
        .map(|w| {
            let d = w[1].position - w[0].position;
            d.x.hypot(d.y)
        })
        .fold(T::zero(), |a, b| a + b)
}

fn split_runs<'a, T: Real>(
    points: &'a [GpsPoint<T>],
    cfg: &PipelineConfig<T>,
    stats: &mut SegmentStats,
) -> Vec<&'a [GpsPoint<T>]> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        let speed = p.speed.expect("kinematics must be derived before segmentation");
        if speed < cfg.stop_speed {
            stats.slow_points += 1;
            if let Some(s) = start.take() {
                runs.push(&points[s..i]);
            }
            continue;
        }
        match start {
            None => start = Some(i),
            Some(s) => {
                if p.timestamp - points[i - 1].timestamp > cfg.gap_threshold {
                    runs.push(&points[s..i]);
                    start = Some(i);
                }
            }
        }
    }
    if let Some(s) = start {
        runs.push(&points[s..]);
    }
    runs
}

fn segment_with_stats<T: Real>(
    trace: &RawTrace<T>,
    cfg: &PipelineConfig<T>,
    stats: &mut SegmentStats,
) -> Vec<Trip<T>> {
    let runs = split_runs(&trace.points, cfg, stats);
    stats.candidate_runs += runs.len();
    let mut trips = Vec::new();
    for run in runs {
        if run.len() < cfg.min_points || polyline_length(run) < cfg.min_length {
            stats.undersized_points += run.len();
            continue;
        }
        trips.push(Trip {
            trip_id: trips.len() as u64,
            truck_id: trace.truck_id.clone(),
            points: run.to_vec(),
        });
    }
    trips
}

/// Splits one kinematic trace into trips.
///
/// Slow points are dropped and end the current run, as does any time gap
/// larger than `gap_threshold`. Runs with fewer than `min_points` points or
/// shorter than `min_length` are discarded. Trip ids count from zero within
/// the trace; [`segment_all`] renumbers them globally.
pub fn segment_trips<T: Real>(trace: &RawTrace<T>, cfg: &PipelineConfig<T>) -> Vec<Trip<T>> {
    segment_with_stats(trace, cfg, &mut SegmentStats::default())
}

/// Segments every trace, numbering trips consecutively in input order.
pub fn segment_all<T: Real>(
    traces: &[RawTrace<T>],
    cfg: &PipelineConfig<T>,
) -> (Vec<Trip<T>>, SegmentStats) {
    let mut stats = SegmentStats::default();
    let mut trips = Vec::new();
    for trace in traces {
        for mut trip in segment_with_stats(trace, cfg, &mut stats) {
            trip.trip_id = trips.len() as u64;
            trips.push(trip);
        }
    }
    (trips, stats)
}

impl<T: Real> Trip<T> {
    /// Checks the four trip invariants, naming the first one violated.
    pub fn check(&self, cfg: &PipelineConfig<T>) -> Result<(), String> {
        if self.points.len() < cfg.min_points {
            return Err(format!(
                "trip {} has {} points, needs {}",
                self.trip_id,
                self.points.len(),
                cfg.min_points
            ));
        }
        if polyline_length(&self.points) < cfg.min_length {
            return Err(format!("trip {} is shorter than min_length", self.trip_id));
        }
        for p in &self.points {
            match p.speed {
                Some(s) if s >= cfg.stop_speed => {}
                _ => return Err(format!("trip {} contains a slow point", self.trip_id)),
            }
        }
        for w in self.points.windows(2) {
            let dt = w[1].timestamp - w[0].timestamp;
            if dt > cfg.gap_threshold || dt <= 0.0 {
                return Err(format!("trip {} contains a gap of {dt} s", self.trip_id));
            }
        }
        Ok(())
    }

    pub fn length(&self) -> T {
        polyline_length(&self.points)
    }
}
