//! Road-network inference and free-drive area marking for haul-truck GPS
//! logs.
//!
//! [`trace`] cuts raw logs into trips and [`inference`] clusters their
//! points into a directed [`graph::RoadGraph`]. [`areas`] then marks
//! intersections and free-drive regions, reducing the graph inside them.
//! Everything is generic over the coordinate scalar; the aliases below fix it
//! to `f64`.

pub mod areas;
pub mod config;
pub mod geometry;
pub mod graph;
pub mod inference;
pub mod io;
pub mod scalar;
pub mod synth;
pub mod trace;

pub use scalar::Real;

pub type Config = config::PipelineConfig<f64>;
pub type Graph = graph::RoadGraph<f64>;
pub type Trip = trace::Trip<f64>;
pub type Trace = trace::RawTrace<f64>;
pub type Map = areas::MarkedMap<f64>;
pub type MapArea = areas::Area<f64>;
