//! Synthetic ground-truth scenarios and graph-quality metrics.
//!
//! Scenarios are built in `f64` metres. Generation is a pure function of the
//! scenario, including its seed, so every run reproduces the same traces.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;

use geo::{Coord, LineString, Polygon};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::graph::RoadGraph;
use crate::scalar::Real;
use crate::trace::{GpsPoint, RawTrace};

/// Timestamp of the first sample of the first trip.
const EPOCH: f64 = 1_700_000_000.0;
/// Spacing between trip start times (s).
const TRIP_SPACING: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    /// A ground-truth lane.
    Lane(usize),
    /// A free-drive path, which is not part of the road network.
    Wander(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripPlan {
    pub legs: Vec<Leg>,
    /// Constant travel speed (m/s).
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Directed ground-truth lane centrelines.
    pub lanes: Vec<LineString<f64>>,
    pub wander: Vec<LineString<f64>>,
    /// Free-drive regions the wander paths stay in.
    pub regions: Vec<Polygon<f64>>,
    pub plans: Vec<TripPlan>,
    pub noise_sigma: f64,
    pub sample_period: f64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Straight,
    Loop,
    YMerge,
    FourWay,
    Bench,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Straight,
        ScenarioKind::Loop,
        ScenarioKind::YMerge,
        ScenarioKind::FourWay,
        ScenarioKind::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Straight => "straight",
            ScenarioKind::Loop => "loop",
            ScenarioKind::YMerge => "y_merge",
            ScenarioKind::FourWay => "four_way",
            ScenarioKind::Bench => "bench",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("scenario file has no `kind`")]
    MissingKind,
    #[error("invalid scenario: {0}")]
    Invariant(String),
}

/// Parameters of a library scenario, as read from a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub rng_seed: u64,
    pub noise_sigma: f64,
    pub sample_period: f64,
    pub trip_count: usize,
    /// Nominal speed; each trip deviates by up to ten percent.
    pub speed: f64,
    pub lane_separation: f64,
    /// Road length, arm length or loop radius depending on the kind.
    pub size: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        let (trip_count, size) = match kind {
            ScenarioKind::Straight => (50, 1000.0),
            ScenarioKind::Loop => (20, 200.0),
            ScenarioKind::YMerge => (40, 400.0),
            ScenarioKind::FourWay => (60, 400.0),
            ScenarioKind::Bench => (20, 300.0),
        };
        ScenarioSpec {
            kind,
            rng_seed: 7,
            noise_sigma: 1.0,
            sample_period: 6.0,
            trip_count,
            speed: 8.0,
            lane_separation: 15.0,
            size,
        }
    }

    /// Parses `key = value` lines. `kind` is required and every other key
    /// falls back to the kind's default.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or(ScenarioError::Syntax { line })?;
            pairs.push((line, k.trim().to_string(), v.trim().to_string()));
        }
        let (line, _, kind) = pairs
            .iter()
            .find(|(_, k, _)| k == "kind")
            .ok_or(ScenarioError::MissingKind)?;
        let kind = ScenarioKind::parse(kind).ok_or_else(|| ScenarioError::BadValue {
            line: *line,
            key: "kind".into(),
            value: kind.clone(),
        })?;
        let mut spec = Self::new(kind);
        for (line, key, value) in &pairs {
            let bad = || ScenarioError::BadValue {
                line: *line,
                key: key.clone(),
                value: value.clone(),
            };
            let float = || value.parse::<f64>().map_err(|_| bad());
            match key.as_str() {
                "kind" => {}
                "rng_seed" => spec.rng_seed = value.parse().map_err(|_| bad())?,
                "trip_count" => spec.trip_count = value.parse().map_err(|_| bad())?,
                "noise_sigma" => spec.noise_sigma = float()?,
                "sample_period" => spec.sample_period = float()?,
                "speed" => spec.speed = float()?,
                "lane_separation" => spec.lane_separation = float()?,
                "size" => spec.size = float()?,
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        line: *line,
                        key: key.clone(),
                    })
                }
            }
        }
        Ok(spec)
    }

    pub fn to_spec_string(&self) -> String {
        format!(
            "kind = {}\nrng_seed = {}\nnoise_sigma = {}\nsample_period = {}\ntrip_count = {}\nspeed = {}\nlane_separation = {}\nsize = {}\n",
            self.kind,
            self.rng_seed,
            self.noise_sigma,
            self.sample_period,
            self.trip_count,
            self.speed,
            self.lane_separation,
            self.size
        )
    }

    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let positive = [
            ("sample_period", self.sample_period),
            ("speed", self.speed),
            ("lane_separation", self.lane_separation),
            ("size", self.size),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Invariant(format!("{name} must be positive")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(ScenarioError::Invariant("noise_sigma must be non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let mut speed = || self.speed * rng.random_range(0.9..1.1);
        let mut s = Scenario {
            kind: self.kind,
            lanes: Vec::new(),
            wander: Vec::new(),
            regions: Vec::new(),
            plans: Vec::new(),
            noise_sigma: self.noise_sigma,
            sample_period: self.sample_period,
            rng_seed: self.rng_seed,
        };
        let half = self.lane_separation / 2.0;
        match self.kind {
            ScenarioKind::Straight => {
                let l = self.size;
                s.lanes.push(line(&[(0.0, -half), (l, -half)]));
                s.lanes.push(line(&[(l, half), (0.0, half)]));
                for k in 0..self.trip_count {
                    s.plans.push(TripPlan {
                        legs: vec![Leg::Lane(k % 2)],
                        speed: speed(),
                    });
                }
            }
            ScenarioKind::Loop => {
                let r = self.size;
                let n = 180;
                let pts: Vec<(f64, f64)> = (0..=n)
                    .map(|i| {
                        let a = TAU * i as f64 / n as f64;
                        (r * a.cos(), r * a.sin())
                    })
                    .collect();
                s.lanes.push(line(&pts));
                for _ in 0..self.trip_count {
                    s.plans.push(TripPlan {
                        legs: vec![Leg::Lane(0), Leg::Lane(0)],
                        speed: speed(),
                    });
                }
            }
            ScenarioKind::YMerge => {
                let l = self.size;
                s.lanes.push(line(&[(-l, 0.4 * l), (0.0, 0.0)]));
                s.lanes.push(line(&[(-l, -0.4 * l), (0.0, 0.0)]));
                s.lanes.push(line(&[(0.0, 0.0), (l, 0.0)]));
                for k in 0..self.trip_count {
                    s.plans.push(TripPlan {
                        legs: vec![Leg::Lane(k % 2), Leg::Lane(2)],
                        speed: speed(),
                    });
                }
            }
            ScenarioKind::FourWay => {
                four_way(&mut s, self.size, half);
                let movements = 12;
                for k in 0..self.trip_count {
                    let m = k % movements;
                    let (from, turn) = (m / 3, m % 3 + 1);
                    let to = (from + turn) % 4;
                    s.plans.push(TripPlan {
                        legs: vec![
                            Leg::Lane(from * 2),
                            Leg::Lane(8 + from * 3 + turn - 1),
                            Leg::Lane(to * 2 + 1),
                        ],
                        speed: speed(),
                    });
                }
            }
            ScenarioKind::Bench => {
                let l = self.size;
                let side = 100.0;
                s.lanes.push(line(&[(-l, -half), (0.0, -half)]));
                s.lanes.push(line(&[(0.0, half), (-l, half)]));
                s.regions.push(Polygon::new(
                    line(&[
                        (0.0, -side / 2.0),
                        (side, -side / 2.0),
                        (side, side / 2.0),
                        (0.0, side / 2.0),
                        (0.0, -side / 2.0),
                    ]),
                    vec![],
                ));
                let mut wander_rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                wander_rng.set_stream(2);
                for k in 0..self.trip_count {
                    let mut pts = vec![(0.0, -half)];
                    let stops = wander_rng.random_range(4..8);
                    for _ in 0..stops {
                        pts.push((
                            wander_rng.random_range(8.0..side - 8.0),
                            wander_rng.random_range(-side / 2.0 + 8.0..side / 2.0 - 8.0),
                        ));
                    }
                    pts.push((0.0, half));
                    s.wander.push(line(&pts));
                    s.plans.push(TripPlan {
                        legs: vec![Leg::Lane(0), Leg::Wander(k), Leg::Lane(1)],
                        speed: speed(),
                    });
                }
            }
        }
        Ok(s)
    }
}

fn line(pts: &[(f64, f64)]) -> LineString<f64> {
    LineString::new(pts.iter().map(|&(x, y)| Coord { x, y }).collect())
}

/// Four two-lane arms meeting at the origin, with right-hand traffic.
///
/// Lanes `2i` and `2i + 1` are the inbound and outbound lanes of arm `i`
/// (east, north, west, south). Lanes `8 + 3i + t - 1` connect arm `i`'s
/// inbound lane to the outbound lane of arm `(i + t) % 4`.
fn four_way(s: &mut Scenario, arm: f64, half: f64) {
    let mouth = 2.0 * half;
    let dirs: Vec<(Coord<f64>, Coord<f64>)> = (0..4)
        .map(|i| {
            let a = FRAC_PI_2 * i as f64;
            let u = Coord { x: a.cos(), y: a.sin() };
            (u, Coord { x: -u.y, y: u.x })
        })
        .collect();
    let inbound_end = |i: usize| dirs[i].0 * mouth + dirs[i].1 * half;
    let outbound_start = |i: usize| dirs[i].0 * mouth - dirs[i].1 * half;
    for (u, n) in &dirs {
        let (u, n) = (*u, *n);
        s.lanes.push(LineString::new(vec![u * arm + n * half, u * mouth + n * half]));
        s.lanes.push(LineString::new(vec![u * mouth - n * half, u * arm - n * half]));
    }
    for i in 0..4 {
        for t in 1..=3 {
            let j = (i + t) % 4;
            let (a, b) = (inbound_end(i), outbound_start(j));
            // quadratic curve through the corner where the two lanes would meet
            let control = if t == 2 {
                (a + b) * 0.5
            } else {
                intersect(a, dirs[i].0 * -1.0, b, dirs[j].0)
            };
            let pts = (0..=8)
                .map(|k| {
                    let t = k as f64 / 8.0;
                    a * ((1.0 - t) * (1.0 - t)) + control * (2.0 * t * (1.0 - t)) + b * (t * t)
                })
                .collect();
            s.lanes.push(LineString::new(pts));
        }
    }
}

/// Intersection of the lines `p + s·d` and `q + t·e`.
fn intersect(p: Coord<f64>, d: Coord<f64>, q: Coord<f64>, e: Coord<f64>) -> Coord<f64> {
    let den = d.x * e.y - d.y * e.x;
    let w = q - p;
    let s = (w.x * e.y - w.y * e.x) / den;
    p + d * s
}

impl Scenario {
    /// Polyline driven by one trip, legs concatenated.
    pub fn plan_path(&self, plan: &TripPlan) -> Vec<Coord<f64>> {
        let mut pts: Vec<Coord<f64>> = Vec::new();
        for leg in &plan.legs {
            let l = match *leg {
                Leg::Lane(i) => &self.lanes[i],
                Leg::Wander(i) => &self.wander[i],
            };
            for c in &l.0 {
                if pts.last() != Some(c) {
                    pts.push(*c);
                }
            }
        }
        pts
    }

    /// Total ground-truth lane length (m).
    pub fn lane_length(&self) -> f64 {
        self.lanes.iter().map(|l| crate::graph::polyline_length(l)).sum()
    }
}

/// Point at arc length `s` along a polyline.
fn point_at(pts: &[Coord<f64>], cumulative: &[f64], s: f64) -> Coord<f64> {
    let i = cumulative.partition_point(|&c| c <= s).clamp(1, pts.len() - 1);
    let seg = cumulative[i] - cumulative[i - 1];
    let t = if seg > 0.0 {
        ((s - cumulative[i - 1]) / seg).clamp(0.0, 1.0)
    } else {
        0.0
    };
    pts[i - 1] + (pts[i] - pts[i - 1]) * t
}

fn cumulative(pts: &[Coord<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for w in pts.windows(2) {
        let d = w[1] - w[0];
        acc.push(acc[acc.len() - 1] + d.x.hypot(d.y));
    }
    acc
}

/// Samples every trip plan at its speed, one trace per trip.
///
/// Trip `k` is logged as truck `truckNNN` starting at `EPOCH + k·3600` s;
/// samples sit at arc lengths `v·period·i` up to the path length, each
/// displaced by isotropic Gaussian noise.
pub fn generate_trips<T: Real>(scenario: &Scenario) -> Vec<RawTrace<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    rng.set_stream(1);
    let noise = Normal::new(0.0, scenario.noise_sigma).expect("sigma is finite and non-negative");
    let mut traces = Vec::with_capacity(scenario.plans.len());
    for (k, plan) in scenario.plans.iter().enumerate() {
        let path = scenario.plan_path(plan);
        let cum = cumulative(&path);
        let total = cum[cum.len() - 1];
        let step = plan.speed * scenario.sample_period;
        let start = EPOCH + k as f64 * TRIP_SPACING;
        let mut points = Vec::new();
        let mut i = 0usize;
        loop {
            let s = step * i as f64;
            // tolerate rounding when the path length is an exact multiple
            if s > total + 1e-9 {
                break;
            }
            let c = point_at(&path, &cum, s.min(total));
            let (dx, dy) = if scenario.noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            points.push(GpsPoint::new(
                start + scenario.sample_period * i as f64,
                T::lit(c.x + dx),
                T::lit(c.y + dy),
            ));
            i += 1;
        }
        traces.push(RawTrace {
            truck_id: format!("truck{k:03}"),
            points,
        });
    }
    traces
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub coverage: f64,
    pub precision: f64,
    /// Length-weighted mean distance from inferred edges to the nearest
    /// lane; absent for an empty graph.
    pub mean_offset: Option<f64>,
}

/// Splits a polyline into pieces of at most 1 m and returns each piece's
/// midpoint with its length.
fn samples(line: &[Coord<f64>]) -> Vec<(Coord<f64>, f64)> {
    let mut out = Vec::new();
    for w in line.windows(2) {
        let d = w[1] - w[0];
        let len = d.x.hypot(d.y);
        let n = len.ceil().max(1.0) as usize;
        let piece = len / n as f64;
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            out.push((w[0] + d * t, piece));
        }
    }
    out
}

fn segment_distance(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.x * ab.x + ab.y * ab.y;
    let t = if len_sq > 0.0 {
        (((p - a).x * ab.x + (p - a).y * ab.y) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = a + ab * t;
    (p - q).x.hypot((p - q).y)
}

fn nearest(p: Coord<f64>, lines: &[Vec<Coord<f64>>]) -> f64 {
    lines
        .iter()
        .flat_map(|l| l.windows(2))
        .map(|w| segment_distance(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Scores `graph` against the scenario's lanes using 1 m samples.
pub fn evaluate<T: Real>(graph: &RoadGraph<T>, scenario: &Scenario, tolerance: f64) -> Metrics {
    let edges: Vec<Vec<Coord<f64>>> = graph
        .edges()
        .map(|e| {
            e.polyline
                .0
                .iter()
                .map(|c| Coord {
                    x: c.x.as_f64(),
                    y: c.y.as_f64(),
                })
                .collect()
        })
        .collect();
    let lanes: Vec<Vec<Coord<f64>>> = scenario.lanes.iter().map(|l| l.0.clone()).collect();
    weighted_metrics(&edges, &lanes, tolerance)
}

fn weighted_metrics(edges: &[Vec<Coord<f64>>], lanes: &[Vec<Coord<f64>>], tolerance: f64) -> Metrics {
    if edges.is_empty() {
        return Metrics {
            coverage: 0.0,
            precision: 1.0,
            mean_offset: None,
        };
    }
    let mut covered = 0.0;
    let mut lane_total = 0.0;
    for l in lanes {
        for (p, w) in samples(l) {
            lane_total += w;
            if nearest(p, edges) <= tolerance {
                covered += w;
            }
        }
    }
    let (mut precise, mut edge_total, mut offset) = (0.0, 0.0, 0.0);
    for e in edges {
        for (p, w) in samples(e) {
            let d = nearest(p, lanes);
            edge_total += w;
            offset += d * w;
            if d <= tolerance {
                precise += w;
            }
        }
    }
    Metrics {
        coverage: if lane_total > 0.0 { covered / lane_total } else { 0.0 },
        precision: if edge_total > 0.0 { precise / edge_total } else { 1.0 },
        mean_offset: (edge_total > 0.0).then(|| offset / edge_total),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_lane(length: f64, speed: f64, sigma: f64) -> Scenario {
        Scenario {
            kind: ScenarioKind::Straight,
            lanes: vec![line(&[(0.0, 0.0), (length, 0.0)])],
            wander: vec![],
            regions: vec![],
            plans: vec![TripPlan {
                legs: vec![Leg::Lane(0)],
                speed,
            }],
            noise_sigma: sigma,
            sample_period: 6.0,
            rng_seed: 1,
        }
    }

    #[test]
    fn noise_free_kinematics() {
        let t = generate_trips::<f64>(&straight_lane(120.0, 2.0, 0.0));
        assert_eq!(t.len(), 1);
        let pts = &t[0].points;
        assert_eq!(pts.len(), 11);
        for (i, p) in pts.iter().enumerate() {
            assert!((p.position.x - 12.0 * i as f64).abs() < 1e-9);
            assert_eq!(p.position.y, 0.0);
            assert_eq!(p.timestamp, EPOCH + 6.0 * i as f64);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in ScenarioKind::ALL {
            let s = ScenarioSpec::new(kind).build().unwrap();
            assert_eq!(generate_trips::<f64>(&s), generate_trips::<f64>(&s), "{kind}");
        }
        let mut s = straight_lane(120.0, 2.0, 0.0);
        s.plans.clear();
        assert!(generate_trips::<f64>(&s).is_empty());
    }

    #[test]
    fn noise_has_requested_spread() {
        let mut s = straight_lane(100_000.0, 10.0, 2.0);
        s.rng_seed = 99;
        let t = generate_trips::<f64>(&s);
        let ys: Vec<f64> = t[0].points.iter().map(|p| p.position.y).collect();
        let var = ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64;
        assert!((var.sqrt() - 2.0).abs() < 0.15, "{}", var.sqrt());
    }

    #[test]
    fn library_lanes_are_valid() {
        for kind in ScenarioKind::ALL {
            let s = ScenarioSpec::new(kind).build().unwrap();
            assert!(s.lanes.iter().all(|l| crate::graph::polyline_length(l) > 0.0));
            for plan in &s.plans {
                let ends: Vec<(Coord<f64>, Coord<f64>)> = plan
                    .legs
                    .iter()
                    .map(|leg| {
                        let l = match *leg {
                            Leg::Lane(i) => &s.lanes[i],
                            Leg::Wander(i) => &s.wander[i],
                        };
                        (l.0[0], l.0[l.0.len() - 1])
                    })
                    .collect();
                for w in ends.windows(2) {
                    let gap = w[1].0 - w[0].1;
                    assert!(gap.x.hypot(gap.y) < 1e-9, "{kind}: legs do not meet");
                }
            }
        }
        let four = ScenarioSpec::new(ScenarioKind::FourWay).build().unwrap();
        assert_eq!(four.lanes.len(), 20);
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = ScenarioSpec::parse("kind = four_way\nrng_seed = 3 # comment\nnoise_sigma = 0.5\n").unwrap();
        assert_eq!(spec.kind, ScenarioKind::FourWay);
        assert_eq!(spec.rng_seed, 3);
        assert_eq!(spec.trip_count, 60);
        assert_eq!(ScenarioSpec::parse(&spec.to_spec_string()).unwrap(), spec);
        assert_eq!(
            ScenarioSpec::parse("kind = bench\ncolour = red\n"),
            Err(ScenarioError::UnknownKey {
                line: 2,
                key: "colour".into()
            })
        );
        assert_eq!(ScenarioSpec::parse("rng_seed = 3\n"), Err(ScenarioError::MissingKind));
        assert!(ScenarioSpec::parse("kind = moon\n").is_err());
        let mut bad = ScenarioSpec::new(ScenarioKind::Loop);
        bad.sample_period = 0.0;
        assert!(bad.build().is_err());
    }

    fn graph_of(lines: &[LineString<f64>]) -> RoadGraph<f64> {
        let mut g = RoadGraph::new();
        for l in lines {
            let a = g.add_vertex(l.0[0]).unwrap();
            let b = g.add_vertex(l.0[l.0.len() - 1]).unwrap();
            g.add_edge(a, b, l.clone(), 1).unwrap();
        }
        g
    }

    #[test]
    fn metrics_examples() {
        let s = ScenarioSpec::new(ScenarioKind::Straight).build().unwrap();
        let m = evaluate(&graph_of(&s.lanes), &s, 10.0);
        assert_eq!((m.coverage, m.precision), (1.0, 1.0));
        assert!(m.mean_offset.unwrap() < 1e-9);

        let m = evaluate(&graph_of(&s.lanes[..1]), &s, 10.0);
        assert!((m.coverage - 0.5).abs() <= 0.02, "{m:?}");
        assert_eq!(m.precision, 1.0);

        let mut s1 = s.clone();
        s1.lanes = vec![line(&[(0.0, 0.0), (900.0, 0.0)])];
        let g = graph_of(&[s1.lanes[0].clone(), line(&[(0.0, 5000.0), (100.0, 5000.0)])]);
        let m = evaluate(&g, &s1, 10.0);
        assert!((m.precision - 0.9).abs() < 1e-9, "{m:?}");
        assert_eq!(m.coverage, 1.0);

        let m = evaluate(&RoadGraph::<f64>::new(), &s, 10.0);
        assert_eq!((m.coverage, m.precision, m.mean_offset), (0.0, 1.0, None));
    }
}
