//! Pipeline parameters and the plain-text `key = value` format they are stored in.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Real;

const DEFAULT_CONFIG: &str = include_str!("../default.conf");

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
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
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invariant(String),
}

/// Every tunable number of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig<T> {
    /// Points slower than this (m/s) are treated as stops.
    pub stop_speed: T,
    /// Largest tolerated time between consecutive samples of one trip (s).
    pub gap_threshold: f64,
    /// Minimum number of points in a trip.
    pub min_points: usize,
    /// Minimum polyline length of a trip (m).
    pub min_length: T,
    pub seed_radius: T,
    /// Largest circular heading difference for a point to join a cluster (rad).
    pub heading_tolerance: T,
    pub marker_radius: T,
    /// Opening angle of the marker sector (rad).
    pub marker_angle: T,
    /// Segments per marker arc; buffers use this many per quarter turn.
    pub arc_segments: usize,
    pub area_dilate: T,
    pub area_erode: T,
    pub path_buffer: T,
    pub area_merge_distance: T,
    pub opposite_lane_distance: T,
    pub opposite_lane_angle: T,
    pub round_cap: usize,
    pub sparsify_corridor: T,
    pub min_edge_support: u32,
    /// Input x/y columns are lon/lat degrees.
    pub latlon: bool,
    /// Matching tolerance used by evaluation (m).
    pub tolerance: T,
}

#[derive(Clone, Copy)]
enum Kind {
    Distance,
    Angle,
    Count,
    Flag,
}

const KEYS: &[(&str, Kind)] = &[
    ("stop_speed", Kind::Distance),
    ("gap_threshold", Kind::Distance),
    ("min_points", Kind::Count),
    ("min_length", Kind::Distance),
    ("seed_radius", Kind::Distance),
    ("heading_tolerance", Kind::Angle),
    ("marker_radius", Kind::Distance),
    ("marker_angle", Kind::Angle),
    ("arc_segments", Kind::Count),
    ("area_dilate", Kind::Distance),
    ("area_erode", Kind::Distance),
    ("path_buffer", Kind::Distance),
    ("area_merge_distance", Kind::Distance),
    ("opposite_lane_distance", Kind::Distance),
    ("opposite_lane_angle", Kind::Angle),
    ("round_cap", Kind::Count),
    ("sparsify_corridor", Kind::Distance),
    ("min_edge_support", Kind::Count),
    ("latlon", Kind::Flag),
    ("tolerance", Kind::Distance),
];

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        let mut cfg = Self::zeroed();
        cfg.apply_str(DEFAULT_CONFIG)
            .expect("bundled default.conf is well-formed");
        cfg
    }
}

impl<T: Real> PipelineConfig<T> {
    fn zeroed() -> Self {
        let z = T::zero();
        PipelineConfig {
            stop_speed: z,
            gap_threshold: 0.0,
            min_points: 0,
            min_length: z,
            seed_radius: z,
            heading_tolerance: z,
            marker_radius: z,
            marker_angle: z,
            arc_segments: 0,
            area_dilate: z,
            area_erode: z,
            path_buffer: z,
            area_merge_distance: z,
            opposite_lane_distance: z,
            opposite_lane_angle: z,
            round_cap: 0,
            sparsify_corridor: z,
            min_edge_support: 0,
            latlon: false,
            tolerance: z,
        }
    }

    /// Parses a config file on top of the defaults and validates the result.
    pub fn from_config_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides fields from `key = value` lines. Keys may appear once per call.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            let value = value.trim();
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(key);
            self.set(key, value).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line, key },
                ConfigError::BadValue { key, value, .. } => ConfigError::BadValue { line, key, value },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Sets a single field by name, as the CLI flags do.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let kind = KEYS
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, kind)| *kind)
            .ok_or_else(|| ConfigError::UnknownKey {
                line: 0,
                key: key.to_string(),
            })?;
        let bad = || ConfigError::BadValue {
            line: 0,
            key: key.to_string(),
            value: value.to_string(),
        };
        match kind {
            Kind::Flag => {
                let flag = match value {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    _ => return Err(bad()),
                };
                self.latlon = flag;
            }
            Kind::Count => {
                let n: u64 = value.parse().map_err(|_| bad())?;
                match key {
                    "min_points" => self.min_points = n as usize,
                    "arc_segments" => self.arc_segments = n as usize,
                    "round_cap" => self.round_cap = n as usize,
                    "min_edge_support" => {
                        self.min_edge_support = u32::try_from(n).map_err(|_| bad())?
                    }
                    _ => unreachable!("count key table out of sync"),
                }
            }
            Kind::Distance | Kind::Angle => {
                let (number, degrees) = match value.strip_suffix("deg") {
                    Some(rest) if matches!(kind, Kind::Angle) => (rest.trim(), true),
                    _ => (value, false),
                };
                let mut v: f64 = number.parse().map_err(|_| bad())?;
                if !v.is_finite() {
                    return Err(bad());
                }
                if degrees {
                    v = v.to_radians();
                }
                let t = T::lit(v);
                match key {
                    "stop_speed" => self.stop_speed = t,
                    "gap_threshold" => self.gap_threshold = v,
                    "min_length" => self.min_length = t,
                    "seed_radius" => self.seed_radius = t,
                    "heading_tolerance" => self.heading_tolerance = t,
                    "marker_radius" => self.marker_radius = t,
                    "marker_angle" => self.marker_angle = t,
                    "area_dilate" => self.area_dilate = t,
                    "area_erode" => self.area_erode = t,
                    "path_buffer" => self.path_buffer = t,
                    "area_merge_distance" => self.area_merge_distance = t,
                    "opposite_lane_distance" => self.opposite_lane_distance = t,
                    "opposite_lane_angle" => self.opposite_lane_angle = t,
                    "sparsify_corridor" => self.sparsify_corridor = t,
                    "tolerance" => self.tolerance = t,
                    _ => unreachable!("real key table out of sync"),
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError::Invariant(msg.to_string()));
        let z = T::zero();
        let positive = [
            ("stop_speed", self.stop_speed),
            ("min_length", self.min_length),
            ("seed_radius", self.seed_radius),
            ("heading_tolerance", self.heading_tolerance),
            ("marker_radius", self.marker_radius),
            ("area_dilate", self.area_dilate),
            ("area_erode", self.area_erode),
            ("path_buffer", self.path_buffer),
            ("area_merge_distance", self.area_merge_distance),
            ("opposite_lane_distance", self.opposite_lane_distance),
            ("opposite_lane_angle", self.opposite_lane_angle),
            ("sparsify_corridor", self.sparsify_corridor),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in positive {
            if !(v > z) {
                return Err(ConfigError::Invariant(format!("{name} must be > 0")));
            }
        }
        if !(self.gap_threshold > 0.0) {
            return fail("gap_threshold must be > 0");
        }
        if self.area_dilate <= self.area_erode {
            return fail("area_dilate must exceed area_erode");
        }
        if self.marker_angle > T::PI() {
            return fail("marker_angle must lie in (0, pi]");
        }
        if self.heading_tolerance > T::PI() {
            return fail("heading_tolerance must lie in (0, pi]");
        }
        if self.arc_segments < 2 {
            return fail("arc_segments must be >= 2");
        }
        if self.min_points == 0 {
            return fail("min_points must be >= 1");
        }
        if self.round_cap == 0 {
            return fail("round_cap must be >= 1");
        }
        if self.min_edge_support == 0 {
            return fail("min_edge_support must be >= 1");
        }
        Ok(())
    }

    /// Renders every key in canonical order; parsing the output reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let value = match *key {
                "stop_speed" => self.stop_speed.to_string(),
                "gap_threshold" => self.gap_threshold.to_string(),
                "min_points" => self.min_points.to_string(),
                "min_length" => self.min_length.to_string(),
                "seed_radius" => self.seed_radius.to_string(),
                "heading_tolerance" => self.heading_tolerance.to_string(),
                "marker_radius" => self.marker_radius.to_string(),
                "marker_angle" => self.marker_angle.to_string(),
                "arc_segments" => self.arc_segments.to_string(),
                "area_dilate" => self.area_dilate.to_string(),
                "area_erode" => self.area_erode.to_string(),
                "path_buffer" => self.path_buffer.to_string(),
                "area_merge_distance" => self.area_merge_distance.to_string(),
                "opposite_lane_distance" => self.opposite_lane_distance.to_string(),
                "opposite_lane_angle" => self.opposite_lane_angle.to_string(),
                "round_cap" => self.round_cap.to_string(),
                "sparsify_corridor" => self.sparsify_corridor.to_string(),
                "min_edge_support" => self.min_edge_support.to_string(),
                "latlon" => self.latlon.to_string(),
                "tolerance" => self.tolerance.to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}
