//! GeoJSON exchange format for road graphs and marked maps.
//!
//! A document is one FeatureCollection whose features each carry a `kind`
//! property naming what they hold. Marked maps end with a geometry-less
//! `map` feature recording the round count. Features are written in id order
//! so identical maps give identical bytes.

use std::collections::BTreeSet;

use geo::{Coord, LineString, Polygon};
use geojson::{Feature, FeatureCollection, GeoJson, Geometry, GeometryValue, JsonObject, JsonValue};
use thiserror::Error;

use crate::areas::{Area, MarkedMap};
use crate::graph::{EdgeId, GraphError, RoadGraph, VertexId};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed GeoJSON: {0}")]
    Json(#[from] geojson::Error),
    #[error("feature {index}: {message}")]
    Feature { index: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Everything read back from a document.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDocument<T: Real> {
    pub graph: RoadGraph<T>,
    pub areas: Vec<Area<T>>,
    /// Present only for marked maps.
    pub rounds: Option<usize>,
}

fn position<T: Real>(c: Coord<T>) -> Vec<f64> {
    vec![c.x.as_f64(), c.y.as_f64()]
}

fn feature(geometry: GeometryValue, props: JsonObject) -> Feature {
    Feature {
        geometry: Some(Geometry::new(geometry)),
        properties: Some(props),
        ..Feature::default()
    }
}

fn ids<I: IntoIterator<Item = VertexId>>(set: I) -> JsonValue {
    JsonValue::Array(set.into_iter().map(|v| v.0.into()).collect())
}

fn graph_features<T: Real>(graph: &RoadGraph<T>) -> Vec<Feature> {
    let mut out = Vec::with_capacity(graph.vertex_count() + graph.edge_count());
    for v in graph.vertices() {
        let mut p = JsonObject::new();
        p.insert("kind".into(), "vertex".into());
        p.insert("id".into(), v.id.0.into());
        out.push(feature(GeometryValue::new_point(position(v.position)), p));
    }
    for e in graph.edges() {
        let mut p = JsonObject::new();
        p.insert("kind".into(), "edge".into());
        p.insert("id".into(), e.id.0.into());
        p.insert("from".into(), e.from.0.into());
        p.insert("to".into(), e.to.0.into());
        p.insert("support".into(), e.support.into());
        out.push(feature(
            GeometryValue::new_line_string(e.polyline.0.iter().map(|&c| position(c))),
            p,
        ));
    }
    out
}

fn render(features: Vec<Feature>) -> String {
    let mut text = GeoJson::from(FeatureCollection::new(features)).to_string();
    text.push('\n');
    text
}

pub fn graph_to_geojson<T: Real>(graph: &RoadGraph<T>) -> String {
    render(graph_features(graph))
}

pub fn marked_to_geojson<T: Real>(map: &MarkedMap<T>) -> String {
    let mut features = graph_features(&map.graph);
    for (i, a) in map.areas.iter().enumerate() {
        let mut p = JsonObject::new();
        p.insert("kind".into(), "area".into());
        p.insert("id".into(), i.into());
        p.insert("entry_nodes".into(), ids(a.entry_nodes.iter().copied()));
        p.insert("exit_nodes".into(), ids(a.exit_nodes.iter().copied()));
        p.insert("rounds_to_converge".into(), map.rounds.into());
        let ring = a.polygon.exterior().0.iter().map(|&c| position(c)).collect::<Vec<_>>();
        features.push(feature(GeometryValue::new_polygon([ring]), p));
    }
    let mut p = JsonObject::new();
    p.insert("kind".into(), "map".into());
    p.insert("rounds_to_converge".into(), map.rounds.into());
    features.push(Feature {
        properties: Some(p),
        ..Feature::default()
    });
    render(features)
}

struct Props<'a> {
    index: usize,
    map: &'a JsonObject,
}

impl Props<'_> {
    fn err(&self, message: impl Into<String>) -> IoError {
        IoError::Feature {
            index: self.index,
            message: message.into(),
        }
    }

    fn uint(&self, key: &str) -> Result<u64, IoError> {
        self.map
            .get(key)
            .and_then(JsonValue::as_u64)
            .ok_or_else(|| self.err(format!("missing or non-integer `{key}`")))
    }

    fn id_set(&self, key: &str) -> Result<BTreeSet<VertexId>, IoError> {
        let arr = self
            .map
            .get(key)
            .and_then(JsonValue::as_array)
            .ok_or_else(|| self.err(format!("missing `{key}` list")))?;
        arr.iter()
            .map(|v| v.as_u64().map(VertexId).ok_or_else(|| self.err(format!("bad id in `{key}`"))))
            .collect()
    }
}

fn coord<T: Real>(p: &geojson::Position, props: &Props<'_>) -> Result<Coord<T>, IoError> {
    let s = p.as_slice();
    if s.len() < 2 || !s[0].is_finite() || !s[1].is_finite() {
        return Err(props.err("bad coordinate"));
    }
    Ok(Coord {
        x: T::lit(s[0]),
        y: T::lit(s[1]),
    })
}

/// Reads a graph or marked-map document, keeping vertex and edge ids.
pub fn read_geojson<T: Real>(text: &str) -> Result<MapDocument<T>, IoError> {
    let fc = FeatureCollection::try_from(text.parse::<GeoJson>()?)?;
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    let mut areas = Vec::new();
    let mut rounds = None;
    let empty = JsonObject::new();
    for (index, f) in fc.features.iter().enumerate() {
        let props = Props {
            index,
            map: f.properties.as_ref().unwrap_or(&empty),
        };
        let kind = props.map.get("kind").and_then(JsonValue::as_str);
        let geometry = f.geometry.as_ref().map(|g| &g.value);
        match (kind, geometry) {
            (Some("vertex"), Some(GeometryValue::Point { coordinates })) => {
                vertices.push((VertexId(props.uint("id")?), coord::<T>(coordinates, &props)?));
            }
            (Some("edge"), Some(GeometryValue::LineString { coordinates })) => {
                let line = coordinates
                    .iter()
                    .map(|c| coord::<T>(c, &props))
                    .collect::<Result<Vec<_>, _>>()?;
                let support = u32::try_from(props.uint("support")?)
                    .map_err(|_| props.err("support out of range"))?;
                edges.push((
                    EdgeId(props.uint("id")?),
                    VertexId(props.uint("from")?),
                    VertexId(props.uint("to")?),
                    LineString::new(line),
                    support,
                ));
            }
            (Some("area"), Some(GeometryValue::Polygon { coordinates })) => {
                let ring = coordinates
                    .first()
                    .ok_or_else(|| props.err("polygon without ring"))?
                    .iter()
                    .map(|c| coord::<T>(c, &props))
                    .collect::<Result<Vec<_>, _>>()?;
                if coordinates.len() > 1 {
                    return Err(props.err("areas cannot have holes"));
                }
                let id = props.uint("id")? as usize;
                if id != areas.len() {
                    return Err(props.err("area ids must run 0, 1, 2, ..."));
                }
                rounds = Some(props.uint("rounds_to_converge")? as usize);
                areas.push(Area {
                    polygon: Polygon::new(LineString::new(ring), vec![]),
                    entry_nodes: props.id_set("entry_nodes")?,
                    exit_nodes: props.id_set("exit_nodes")?,
                });
            }
            (Some("map"), None) => rounds = Some(props.uint("rounds_to_converge")? as usize),
            _ => return Err(props.err("unrecognised feature")),
        }
    }
    let mut graph = RoadGraph::new();
    for (id, pos) in vertices {
        graph.insert_vertex(id, pos)?;
    }
    for (id, from, to, line, support) in edges {
        if graph.find_edge(from, to).is_some() {
            return Err(GraphError::Invariant(format!("duplicate edge {from} -> {to}")).into());
        }
        graph.insert_edge(id, from, to, line, support)?;
    }
    Ok(MapDocument {
        graph,
        areas,
        rounds,
    })
}
