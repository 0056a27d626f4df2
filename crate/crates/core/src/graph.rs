//! Directed geometric road graph.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use geo::{Coord, LineString};
use num_traits::Float;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u64);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(VertexId),
    #[error("self-loop at {0}")]
    SelfLoop(VertexId),
    #[error("non-finite vertex position")]
    NonFinite,
    #[error("edge polyline is invalid: {0}")]
    BadPolyline(&'static str),
    #[error("edge support must be at least 1")]
    ZeroSupport,
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex<T: Real> {
    pub id: VertexId,
    pub position: Coord<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge<T: Real> {
    pub id: EdgeId,
    pub from: VertexId,
    pub to: VertexId,
    pub polyline: LineString<T>,
    /// Number of trips that traversed this edge.
    pub support: u32,
}

impl<T: Real> Edge<T> {
    pub fn length(&self) -> T {
        polyline_length(&self.polyline)
    }

    /// Direction of travel leaving `from`.
    pub fn start_heading(&self) -> T {
        let c = &self.polyline.0;
        let d = c[1] - c[0];
        d.y.atan2(d.x)
    }

    /// Direction of travel arriving at `to`.
    pub fn end_heading(&self) -> T {
        let c = &self.polyline.0;
        let n = c.len();
        let d = c[n - 1] - c[n - 2];
        d.y.atan2(d.x)
    }
}

/// Arc length of a polyline.
pub fn polyline_length<T: Real>(line: &LineString<T>) -> T {
    line.0
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            d.x.hypot(d.y)
        })
        .fold(T::zero(), |a, b| a + b)
}

/// A path found by [`RoadGraph::shortest_path`].
#[derive(Debug, Clone, PartialEq)]
pub struct Path<T> {
    pub edges: Vec<EdgeId>,
    pub length: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadGraph<T: Real> {
    vertices: BTreeMap<VertexId, Vertex<T>>,
    edges: BTreeMap<EdgeId, Edge<T>>,
    outgoing: BTreeMap<VertexId, BTreeSet<EdgeId>>,
    incoming: BTreeMap<VertexId, BTreeSet<EdgeId>>,
    by_pair: HashMap<(VertexId, VertexId), EdgeId>,
    next_vertex: u64,
    next_edge: u64,
}

impl<T: Real> Default for RoadGraph<T> {
    fn default() -> Self {
        RoadGraph {
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            outgoing: BTreeMap::new(),
            incoming: BTreeMap::new(),
            by_pair: HashMap::new(),
            next_vertex: 0,
            next_edge: 0,
        }
    }
}

#[derive(Clone, Copy)]
struct QueueEntry<T> {
    dist: T,
    vertex: VertexId,
}

impl<T: PartialOrd> PartialEq for QueueEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: PartialOrd> Eq for QueueEntry<T> {}
impl<T: PartialOrd> PartialOrd for QueueEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: PartialOrd> Ord for QueueEntry<T> {
    // reversed for a min-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl<T: Real> RoadGraph<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex<T>> {
        self.vertices.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge<T>> {
        self.edges.values()
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex<T>> {
        self.vertices.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge<T>> {
        self.edges.get(&id)
    }

    pub fn position(&self, id: VertexId) -> Option<Coord<T>> {
        self.vertices.get(&id).map(|v| v.position)
    }

    pub fn find_edge(&self, from: VertexId, to: VertexId) -> Option<EdgeId> {
        self.by_pair.get(&(from, to)).copied()
    }

    pub fn out_edges(&self, v: VertexId) -> impl Iterator<Item = &Edge<T>> + '_ {
        self.outgoing
            .get(&v)
            .into_iter()
            .flatten()
            .map(move |e| &self.edges[e])
    }

    pub fn in_edges(&self, v: VertexId) -> impl Iterator<Item = &Edge<T>> + '_ {
        self.incoming
            .get(&v)
            .into_iter()
            .flatten()
            .map(move |e| &self.edges[e])
    }

    pub fn add_vertex(&mut self, position: Coord<T>) -> Result<VertexId, GraphError> {
        let id = VertexId(self.next_vertex);
        self.insert_vertex(id, position)?;
        Ok(id)
    }

    /// Inserts a vertex under a caller-chosen id (used when importing).
    pub fn insert_vertex(&mut self, id: VertexId, position: Coord<T>) -> Result<(), GraphError> {
        if !(position.x.is_finite() && position.y.is_finite()) {
            return Err(GraphError::NonFinite);
        }
        if self.vertices.contains_key(&id) {
            return Err(GraphError::DuplicateVertex(id));
        }
        self.vertices.insert(id, Vertex { id, position });
        self.outgoing.insert(id, BTreeSet::new());
        self.incoming.insert(id, BTreeSet::new());
        self.next_vertex = self.next_vertex.max(id.0 + 1);
        Ok(())
    }

    /// Adds a straight edge between the two vertex positions.
    pub fn add_straight_edge(
        &mut self,
        from: VertexId,
        to: VertexId,
        support: u32,
    ) -> Result<EdgeId, GraphError> {
        let a = self.position(from).ok_or(GraphError::UnknownVertex(from))?;
        let b = self.position(to).ok_or(GraphError::UnknownVertex(to))?;
        self.add_edge(from, to, LineString::new(vec![a, b]), support)
    }

    /// Adds a directed edge, or folds `support` into the existing `(from, to)` edge.
    ///
    /// The polyline must run from the `from` position to the `to` position.
    /// When the pair already exists its polyline is kept.
    pub fn add_edge(
        &mut self,
        from: VertexId,
        to: VertexId,
        polyline: LineString<T>,
        support: u32,
    ) -> Result<EdgeId, GraphError> {
        let id = EdgeId(self.next_edge);
        self.insert_edge(id, from, to, polyline, support)
    }

    /// Like [`add_edge`](Self::add_edge) but with a caller-chosen id for new edges.
    pub fn insert_edge(
        &mut self,
        id: EdgeId,
        from: VertexId,
        to: VertexId,
        polyline: LineString<T>,
        support: u32,
    ) -> Result<EdgeId, GraphError> {
        let a = self.position(from).ok_or(GraphError::UnknownVertex(from))?;
        let b = self.position(to).ok_or(GraphError::UnknownVertex(to))?;
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        if support == 0 {
            return Err(GraphError::ZeroSupport);
        }
        if let Some(existing) = self.find_edge(from, to) {
            let e = self.edges.get_mut(&existing).expect("pair index in sync");
            e.support = e.support.saturating_add(support);
            return Ok(existing);
        }
        let coords = &polyline.0;
        if coords.len() < 2 {
            return Err(GraphError::BadPolyline("fewer than two points"));
        }
        if coords[0] != a || coords[coords.len() - 1] != b {
            return Err(GraphError::BadPolyline("endpoints do not match vertices"));
        }
        if coords.iter().any(|c| !(c.x.is_finite() && c.y.is_finite())) {
            return Err(GraphError::BadPolyline("non-finite coordinate"));
        }
        if !(polyline_length(&polyline) > T::zero()) {
            return Err(GraphError::BadPolyline("zero length"));
        }
        if self.edges.contains_key(&id) {
            return Err(GraphError::Invariant(format!("edge id {id} already used")));
        }
        self.edges.insert(
            id,
            Edge {
                id,
                from,
                to,
                polyline,
                support,
            },
        );
        self.outgoing.get_mut(&from).expect("vertex exists").insert(id);
        self.incoming.get_mut(&to).expect("vertex exists").insert(id);
        self.by_pair.insert((from, to), id);
        self.next_edge = self.next_edge.max(id.0 + 1);
        Ok(id)
    }

    pub fn add_support(&mut self, id: EdgeId, support: u32) -> Result<(), GraphError> {
        let e = self.edges.get_mut(&id).ok_or(GraphError::UnknownEdge(id))?;
        e.support = e.support.saturating_add(support);
        Ok(())
    }

    pub fn remove_edge(&mut self, id: EdgeId) -> Result<Edge<T>, GraphError> {
        let e = self.edges.remove(&id).ok_or(GraphError::UnknownEdge(id))?;
        self.outgoing.get_mut(&e.from).expect("vertex exists").remove(&id);
        self.incoming.get_mut(&e.to).expect("vertex exists").remove(&id);
        self.by_pair.remove(&(e.from, e.to));
        Ok(e)
    }

    /// Removes a vertex together with all incident edges.
    pub fn remove_vertex(&mut self, id: VertexId) -> Result<Vertex<T>, GraphError> {
        if !self.vertices.contains_key(&id) {
            return Err(GraphError::UnknownVertex(id));
        }
        let incident: Vec<EdgeId> = self.outgoing[&id]
            .iter()
            .chain(self.incoming[&id].iter())
            .copied()
            .collect();
        for e in incident {
            // an edge cannot be both in and out of the same vertex, so each removal succeeds once
            self.remove_edge(e)?;
        }
        self.outgoing.remove(&id);
        self.incoming.remove(&id);
        Ok(self.vertices.remove(&id).expect("checked above"))
    }

    /// Drops every vertex without incident edges; returns how many went.
    pub fn remove_isolated_vertices(&mut self) -> usize {
        let isolated: Vec<VertexId> = self
            .vertices
            .keys()
            .filter(|v| self.outgoing[v].is_empty() && self.incoming[v].is_empty())
            .copied()
            .collect();
        for v in &isolated {
            self.remove_vertex(*v).expect("listed vertex exists");
        }
        isolated.len()
    }

    /// `(in_degree, out_degree)` of a vertex.
    pub fn degrees(&self, v: VertexId) -> Result<(usize, usize), GraphError> {
        match (self.incoming.get(&v), self.outgoing.get(&v)) {
            (Some(i), Some(o)) => Ok((i.len(), o.len())),
            _ => Err(GraphError::UnknownVertex(v)),
        }
    }

    pub fn edge_length(&self, id: EdgeId) -> Result<T, GraphError> {
        self.edges
            .get(&id)
            .map(Edge::length)
            .ok_or(GraphError::UnknownEdge(id))
    }

    pub fn total_length(&self) -> T {
        self.edges
            .values()
            .map(Edge::length)
            .fold(T::zero(), |a, b| a + b)
    }

    /// Minimum-length path over edges accepted by `filter`.
    ///
    /// Among paths of equal length the one with the lexicographically smallest
    /// edge-id sequence wins. `src == dst` yields an empty path; an unreachable
    /// destination yields `None`.
    pub fn shortest_path<F>(&self, src: VertexId, dst: VertexId, filter: F) -> Option<Path<T>>
    where
        F: Fn(&Edge<T>) -> bool,
    {
        if !self.vertices.contains_key(&src) || !self.vertices.contains_key(&dst) {
            return None;
        }
        if src == dst {
            return Some(Path {
                edges: Vec::new(),
                length: T::zero(),
            });
        }
        let lengths: HashMap<EdgeId, T> = self
            .edges
            .values()
            .filter(|e| filter(e))
            .map(|e| (e.id, e.length()))
            .collect();

        let mut dist: HashMap<VertexId, T> = HashMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(src, T::zero());
        heap.push(QueueEntry {
            dist: T::zero(),
            vertex: src,
        });
        while let Some(QueueEntry { dist: d, vertex }) = heap.pop() {
            if d > dist[&vertex] {
                continue;
            }
            for e in &self.outgoing[&vertex] {
                let Some(&w) = lengths.get(e) else { continue };
                let to = self.edges[e].to;
                let nd = d + w;
                if dist.get(&to).is_none_or(|&old| nd < old) {
                    dist.insert(to, nd);
                    heap.push(QueueEntry { dist: nd, vertex: to });
                }
            }
        }
        let total = *dist.get(&dst)?;

        // Tight edges lie on some shortest path from src. Walk them greedily
        // from src, taking the smallest edge id that can still reach dst.
        let eps = |v: T| T::lit(1e-9) * (T::one() + Float::abs(v));
        let is_tight = |e: &EdgeId| -> bool {
            let Some(&w) = lengths.get(e) else { return false };
            let edge = &self.edges[e];
            match (dist.get(&edge.from), dist.get(&edge.to)) {
                (Some(&a), Some(&b)) => Float::abs(a + w - b) <= eps(b),
                _ => false,
            }
        };
        let mut reaches_dst: BTreeSet<VertexId> = BTreeSet::new();
        reaches_dst.insert(dst);
        let mut stack = vec![dst];
        while let Some(v) = stack.pop() {
            for e in &self.incoming[&v] {
                if is_tight(e) {
                    let from = self.edges[e].from;
                    if reaches_dst.insert(from) {
                        stack.push(from);
                    }
                }
            }
        }
        let mut edges = Vec::new();
        let mut at = src;
        while at != dst {
            let next = self.outgoing[&at]
                .iter()
                .find(|e| is_tight(e) && reaches_dst.contains(&self.edges[*e].to))?;
            edges.push(*next);
            at = self.edges[next].to;
            if edges.len() > self.edges.len() {
                return None;
            }
        }
        Some(Path {
            edges,
            length: total,
        })
    }

    /// Vertices reachable from `src` along edges accepted by `filter`.
    pub fn reachable_from<F>(&self, src: VertexId, filter: F) -> BTreeSet<VertexId>
    where
        F: Fn(&Edge<T>) -> bool,
    {
        let mut seen = BTreeSet::new();
        if !self.vertices.contains_key(&src) {
            return seen;
        }
        seen.insert(src);
        let mut stack = vec![src];
        while let Some(v) = stack.pop() {
            for e in self.out_edges(v) {
                if filter(e) && seen.insert(e.to) {
                    stack.push(e.to);
                }
            }
        }
        seen
    }

    /// Verifies id uniqueness, adjacency consistency and edge geometry.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        let fail = |m: String| Err(GraphError::Invariant(m));
        if self.outgoing.len() != self.vertices.len() || self.incoming.len() != self.vertices.len()
        {
            return fail("adjacency maps and vertex set differ in size".into());
        }
        let mut pairs = BTreeSet::new();
        for (id, e) in &self.edges {
            if *id != e.id {
                return fail(format!("edge keyed {id} carries id {}", e.id));
            }
            let (Some(a), Some(b)) = (self.position(e.from), self.position(e.to)) else {
                return fail(format!("edge {id} references a missing vertex"));
            };
            let c = &e.polyline.0;
            if c.len() < 2 || c[0] != a || c[c.len() - 1] != b {
                return fail(format!("edge {id} polyline endpoints mismatch"));
            }
            if !(e.length() > T::zero()) || e.support == 0 {
                return fail(format!("edge {id} has zero length or support"));
            }
            if !pairs.insert((e.from, e.to)) {
                return fail(format!("parallel edge {id}"));
            }
            if self.by_pair.get(&(e.from, e.to)) != Some(id) {
                return fail(format!("pair index misses edge {id}"));
            }
            if !self.outgoing[&e.from].contains(id) || !self.incoming[&e.to].contains(id) {
                return fail(format!("adjacency misses edge {id}"));
            }
        }
        if self.by_pair.len() != self.edges.len() {
            return fail("pair index has stale entries".into());
        }
        let listed: usize = self.outgoing.values().map(BTreeSet::len).sum();
        let listed_in: usize = self.incoming.values().map(BTreeSet::len).sum();
        if listed != self.edges.len() || listed_in != self.edges.len() {
            return fail("adjacency lists stale edges".into());
        }
        for (id, v) in &self.vertices {
            if *id != v.id || !(v.position.x.is_finite() && v.position.y.is_finite()) {
                return fail(format!("vertex {id} malformed"));
            }
        }
        Ok(())
    }
}
