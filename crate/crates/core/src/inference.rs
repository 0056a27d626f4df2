//! Heading-aware incremental clustering of trip points into a directed graph.
//!
//! Points are visited in trip order. Each one joins the nearest cluster whose
//! centroid is within `seed_radius` and whose mean heading is within
//! `heading_tolerance`, or seeds a new cluster. Consecutive distinct clusters
//! along a trip become directed edges. Two-hop shortcuts caused by sparse
//! sampling are folded away by [`sparsify`].

use std::collections::{BTreeSet, HashMap};

use geo::Coord;
use num_traits::Float;

use crate::config::PipelineConfig;
use crate::graph::{RoadGraph, VertexId};
use crate::scalar::{angle_between, wrap_angle, Real};
use crate::trace::Trip;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T: Real> {
    pub id: usize,
    /// Running mean of member positions.
    pub centroid: Coord<T>,
    /// Direction of the summed member heading vectors.
    pub mean_heading: T,
    pub count: usize,
    heading_sum: Coord<T>,
}

impl<T: Real> Cluster<T> {
    fn seed(id: usize, position: Coord<T>, heading: T) -> Self {
        Cluster {
            id,
            centroid: position,
            mean_heading: wrap_angle(heading),
            count: 1,
            heading_sum: Coord {
                x: Float::cos(heading),
                y: Float::sin(heading),
            },
        }
    }

    fn absorb(&mut self, position: Coord<T>, heading: T) {
        self.count += 1;
        let n = T::lit(self.count as f64);
        self.centroid = self.centroid + (position - self.centroid) / n;
        self.heading_sum = self.heading_sum
            + Coord {
                x: Float::cos(heading),
                y: Float::sin(heading),
            };
        // opposite headings can cancel exactly; keep the previous mean then
        if self.heading_sum.x != T::zero() || self.heading_sum.y != T::zero() {
            self.mean_heading = wrap_angle(self.heading_sum.y.atan2(self.heading_sum.x));
        }
    }
}

/// Clusters plus, per trip, the cluster index of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T: Real> {
    pub clusters: Vec<Cluster<T>>,
    pub assignment: Vec<Vec<usize>>,
}

/// Uniform grid over cluster centroids with cell size equal to the seed radius.
struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn key<T: Real>(&self, p: Coord<T>) -> (i64, i64) {
        (
            (p.x.as_f64() / self.cell).floor() as i64,
            (p.y.as_f64() / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, key: (i64, i64), id: usize) {
        self.cells.entry(key).or_default().push(id);
    }

    fn remove(&mut self, key: (i64, i64), id: usize) {
        if let Some(ids) = self.cells.get_mut(&key) {
            ids.retain(|&c| c != id);
        }
    }

    fn around(&self, key: (i64, i64)) -> impl Iterator<Item = usize> + '_ {
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                self.cells
                    .get(&(key.0 + dx, key.1 + dy))
                    .into_iter()
                    .flatten()
                    .copied()
            })
        })
    }
}

/// Assigns every trip point to a cluster.
///
/// Order matters: trips are processed in slice order and points in time
/// order, so identical input yields identical clusters.
pub fn cluster_points<T: Real>(trips: &[Trip<T>], cfg: &PipelineConfig<T>) -> Clustering<T> {
    let mut clusters: Vec<Cluster<T>> = Vec::new();
    let mut grid = Grid {
        cell: cfg.seed_radius.as_f64(),
        cells: HashMap::new(),
    };
    let radius_sq = cfg.seed_radius * cfg.seed_radius;
    let mut assignment = Vec::with_capacity(trips.len());

    for trip in trips {
        let mut labels = Vec::with_capacity(trip.points.len());
        for p in &trip.points {
            let heading = p
                .heading
                .expect("kinematics must be derived before clustering");
            let key = grid.key(p.position);
            let mut best: Option<(T, usize)> = None;
            for id in grid.around(key) {
                let c = &clusters[id];
                let d = c.centroid - p.position;
                let dist_sq = d.x * d.x + d.y * d.y;
                if dist_sq > radius_sq
                    || angle_between(c.mean_heading, heading) >= cfg.heading_tolerance
                {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bd, bid)) => dist_sq < bd || (dist_sq == bd && id < bid),
                };
                if better {
                    best = Some((dist_sq, id));
                }
            }
            let id = match best {
                Some((_, id)) => {
                    let old = grid.key(clusters[id].centroid);
                    clusters[id].absorb(p.position, heading);
                    let new = grid.key(clusters[id].centroid);
                    if old != new {
                        grid.remove(old, id);
                        grid.insert(new, id);
                    }
                    id
                }
                None => {
                    let id = clusters.len();
                    clusters.push(Cluster::seed(id, p.position, heading));
                    grid.insert(key, id);
                    id
                }
            };
            labels.push(id);
        }
        assignment.push(labels);
    }
    Clustering {
        clusters,
        assignment,
    }
}

/// Links clusters along each trip's point sequence.
///
/// Vertex ids equal cluster ids. Repeated visits to the same cluster collapse
/// and each consecutive distinct pair adds one unit of support to a straight
/// centroid-to-centroid edge.
pub fn build_edges<T: Real>(clustering: &Clustering<T>) -> RoadGraph<T> {
    let mut graph = RoadGraph::new();
    for c in &clustering.clusters {
        graph
            .insert_vertex(VertexId(c.id as u64), c.centroid)
            .expect("cluster ids are unique and centroids finite");
    }
    for labels in &clustering.assignment {
        let mut seq = labels.clone();
        seq.dedup();
        for w in seq.windows(2) {
            let (a, b) = (VertexId(w[0] as u64), VertexId(w[1] as u64));
            // identical centroids cannot form an edge; skip the degenerate pair
            if graph.position(a) == graph.position(b) {
                continue;
            }
            graph
                .add_straight_edge(a, b, 1)
                .expect("distinct existing vertices");
        }
    }
    graph
}

fn point_segment_distance<T: Real>(p: Coord<T>, a: Coord<T>, b: Coord<T>) -> T {
    let ab = b - a;
    let ap = p - a;
    let len_sq = ab.x * ab.x + ab.y * ab.y;
    let t = if len_sq > T::zero() {
        Float::min(Float::max((ap.x * ab.x + ap.y * ab.y) / len_sq, T::zero()), T::one())
    } else {
        T::zero()
    };
    let q = a + ab * t;
    let d = p - q;
    d.x.hypot(d.y)
}

/// Removes shortcut edges `a→c` that have a two-hop detour `a→b→c` with `b`
/// inside the corridor around segment `a–c`.
///
/// The shortcut's support is added to both hops. Edges are examined in
/// ascending id order and the sweep repeats until nothing changes. When
/// several detours qualify, the one whose middle vertex is closest to the
/// segment wins (ties by vertex id).
pub fn sparsify<T: Real>(mut graph: RoadGraph<T>, cfg: &PipelineConfig<T>) -> RoadGraph<T> {
    loop {
        let mut changed = false;
        let ids: Vec<_> = graph.edges().map(|e| e.id).collect();
        for id in ids {
            let Some(edge) = graph.edge(id) else { continue };
            let (a, c, support) = (edge.from, edge.to, edge.support);
            let pa = graph.position(a).expect("edge endpoint");
            let pc = graph.position(c).expect("edge endpoint");
            let mut best: Option<(T, VertexId)> = None;
            let middles: BTreeSet<VertexId> = graph.out_edges(a).map(|e| e.to).collect();
            for b in middles {
                if b == c || graph.find_edge(b, c).is_none() {
                    continue;
                }
                let pb = graph.position(b).expect("edge endpoint");
                let d = point_segment_distance(pb, pa, pc);
                if d <= cfg.sparsify_corridor && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, b));
                }
            }
            if let Some((_, b)) = best {
                let ab = graph.find_edge(a, b).expect("checked");
                let bc = graph.find_edge(b, c).expect("checked");
                graph.remove_edge(id).expect("edge exists");
                graph.add_support(ab, support).expect("edge exists");
                graph.add_support(bc, support).expect("edge exists");
                changed = true;
            }
        }
        if !changed {
            return graph;
        }
    }
}

/// Drops edges below `min_edge_support`, then any vertex left without edges.
pub fn prune_low_support<T: Real>(mut graph: RoadGraph<T>, cfg: &PipelineConfig<T>) -> RoadGraph<T> {
    let weak: Vec<_> = graph
        .edges()
        .filter(|e| e.support < cfg.min_edge_support)
        .map(|e| e.id)
        .collect();
    for id in weak {
        graph.remove_edge(id).expect("listed edge exists");
    }
    graph.remove_isolated_vertices();
    graph
}

/// The whole inference stage in one call.
pub fn infer_graph<T: Real>(trips: &[Trip<T>], cfg: &PipelineConfig<T>) -> (RoadGraph<T>, usize) {
    let clustering = cluster_points(trips, cfg);
    let clusters = clustering.clusters.len();
    let graph = build_edges(&clustering);
    let graph = sparsify(graph, cfg);
    (prune_low_support(graph, cfg), clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeId;
    use crate::trace::GpsPoint;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pt(x: f64, y: f64, heading: f64) -> GpsPoint<f64> {
        GpsPoint {
            timestamp: 0.0,
            position: Coord { x, y },
            speed: Some(5.0),
            heading: Some(heading),
        }
    }

    fn trip(points: Vec<GpsPoint<f64>>) -> Trip<f64> {
        Trip {
            trip_id: 0,
            truck_id: "A".into(),
            points,
        }
    }

    fn cfg() -> PipelineConfig<f64> {
        PipelineConfig::default()
    }

    #[test]
    fn single_point_single_cluster() {
        let c = cluster_points(&[trip(vec![pt(3.0, 4.0, 1.0)])], &cfg());
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].centroid, Coord { x: 3.0, y: 4.0 });
        assert_eq!(c.assignment, vec![vec![0]]);
    }

    #[test]
    fn nearby_same_heading_merge_at_midpoint() {
        let c = cluster_points(&[trip(vec![pt(0.0, 0.0, 0.0), pt(10.0, 0.0, 0.0)])], &cfg());
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].centroid, Coord { x: 5.0, y: 0.0 });
        assert_eq!(c.clusters[0].count, 2);
    }

    #[test]
    fn opposite_headings_stay_apart() {
        let c = cluster_points(&[trip(vec![pt(0.0, 0.0, 0.0), pt(10.0, 0.0, PI)])], &cfg());
        assert_eq!(c.clusters.len(), 2);
    }

    #[test]
    fn heading_mean_wraps() {
        let c = cluster_points(
            &[trip(vec![pt(0.0, 0.0, 0.1), pt(1.0, 0.0, 2.0 * PI - 0.1)])],
            &cfg(),
        );
        assert_eq!(c.clusters.len(), 1);
        let h = c.clusters[0].mean_heading;
        assert!(h.abs() < 1e-12 || (2.0 * PI - h).abs() < 1e-12, "{h}");
    }

    fn clustering(assign: Vec<Vec<usize>>, n: usize) -> Clustering<f64> {
        Clustering {
            clusters: (0..n)
                .map(|i| Cluster::seed(i, Coord { x: 40.0 * i as f64, y: 0.0 }, 0.0))
                .collect(),
            assignment: assign,
        }
    }

    #[test]
    fn edges_collapse_repeats() {
        let g = build_edges(&clustering(vec![vec![0, 0, 1, 1, 2]], 3));
        let pairs: Vec<_> = g.edges().map(|e| (e.from.0, e.to.0, e.support)).collect();
        assert_eq!(pairs, vec![(0, 1, 1), (1, 2, 1)]);

        let g = build_edges(&clustering(vec![vec![0, 1], vec![0, 1]], 2));
        assert_eq!(g.edges().next().unwrap().support, 2);

        let g = build_edges(&clustering(vec![vec![1, 1, 1]], 2));
        assert_eq!(g.edge_count(), 0);
    }

    fn graph(points: &[(f64, f64)], edges: &[(u64, u64)]) -> RoadGraph<f64> {
        let mut g = RoadGraph::new();
        for &(x, y) in points {
            g.add_vertex(Coord { x, y }).unwrap();
        }
        for &(a, b) in edges {
            g.add_straight_edge(VertexId(a), VertexId(b), 1).unwrap();
        }
        g
    }

    #[test]
    fn collinear_shortcut_is_folded() {
        let g = graph(&[(0.0, 0.0), (30.0, 1.0), (60.0, 0.0)], &[(0, 1), (1, 2), (0, 2)]);
        let s = sparsify(g, &cfg());
        assert_eq!(s.edge_count(), 2);
        assert!(s.find_edge(VertexId(0), VertexId(2)).is_none());
        assert_eq!(s.edge(EdgeId(0)).unwrap().support, 2);
        assert_eq!(s.edge(EdgeId(1)).unwrap().support, 2);
    }

    #[test]
    fn offset_detour_is_kept() {
        let g = graph(&[(0.0, 0.0), (30.0, 50.0), (60.0, 0.0)], &[(0, 1), (1, 2), (0, 2)]);
        let s = sparsify(g.clone(), &cfg());
        assert_eq!(s, g);
    }

    #[test]
    fn no_two_hop_parallel_is_fixpoint() {
        let g = graph(&[(0.0, 0.0), (30.0, 0.0), (60.0, 0.0)], &[(0, 1), (1, 2)]);
        assert_eq!(sparsify(g.clone(), &cfg()), g);
    }

    #[test]
    fn long_shortcut_chains_collapse() {
        // 0 -> 1 -> 2 -> 3 along a line, with shortcuts 0->2, 1->3 and 0->3.
        // Only two-hop detours fold, and by the time 0->3 is visited both of
        // its detours have been folded away, so it survives.
        let g = graph(
            &[(0.0, 0.0), (30.0, 0.0), (60.0, 0.0), (90.0, 0.0)],
            &[(0, 1), (1, 2), (2, 3), (0, 2), (1, 3), (0, 3)],
        );
        let s = sparsify(g, &cfg());
        let pairs: Vec<_> = s.edges().map(|e| (e.from.0, e.to.0)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert_eq!(s.find_edge(VertexId(0), VertexId(1)).map(|e| s.edge(e).unwrap().support), Some(2));
    }

    #[test]
    fn pruning() {
        let g = graph(&[(0.0, 0.0), (30.0, 0.0), (60.0, 0.0)], &[(0, 1), (1, 2)]);
        assert_eq!(prune_low_support(g.clone(), &cfg()), g);
        let mut g = g;
        g.add_support(EdgeId(0), 2).unwrap();
        let mut c = cfg();
        c.min_edge_support = 2;
        let p = prune_low_support(g, &c);
        assert_eq!(p.edge_count(), 1);
        assert_eq!(p.vertex_count(), 2);
        assert!(p.vertex(VertexId(2)).is_none());
    }

    #[test]
    fn centroid_is_member_mean() {
        let pts: Vec<_> = (0..7).map(|i| pt(i as f64 * 3.3, (i % 3) as f64, 0.2)).collect();
        let c = cluster_points(&[trip(pts.clone())], &cfg());
        assert_eq!(c.clusters.len(), 1);
        let mx = pts.iter().map(|p| p.position.x).sum::<f64>() / 7.0;
        let my = pts.iter().map(|p| p.position.y).sum::<f64>() / 7.0;
        assert!((c.clusters[0].centroid.x - mx).abs() < 1e-6);
        assert!((c.clusters[0].centroid.y - my).abs() < 1e-6);
    }

    fn random_graph() -> impl Strategy<Value = RoadGraph<f64>> {
        (3usize..=8)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec((0.0..100.0f64, 0.0..30.0f64), n),
                    prop::collection::vec((0..n, 0..n), 0..25),
                )
            })
            .prop_map(|(pts, pairs)| {
                let mut g = RoadGraph::new();
                for &(x, y) in &pts {
                    g.add_vertex(Coord { x, y }).unwrap();
                }
                for (a, b) in pairs {
                    if a != b && pts[a] != pts[b] {
                        g.add_straight_edge(VertexId(a as u64), VertexId(b as u64), 1)
                            .unwrap();
                    }
                }
                g
            })
    }

    proptest! {
        #[test]
        fn sparsify_preserves_reachability(g in random_graph()) {
            let s = sparsify(g.clone(), &cfg());
            s.check_invariants().unwrap();
            for v in g.vertices() {
                let before = g.reachable_from(v.id, |_| true);
                let after = s.reachable_from(v.id, |_| true);
                prop_assert_eq!(before, after);
            }
            let total_before: u64 = g.edges().map(|e| e.support as u64).sum();
            let total_after: u64 = s.edges().map(|e| e.support as u64).sum();
            prop_assert!(total_after >= total_before);
        }

        #[test]
        fn clustering_respects_radius_and_mean(
            pts in prop::collection::vec((0.0..200.0f64, 0.0..200.0f64, 0.0..6.28f64), 1..80)
        ) {
            let points: Vec<_> = pts.iter().map(|&(x, y, h)| pt(x, y, h)).collect();
            let c = cluster_points(&[trip(points.clone())], &cfg());
            let mut sums = vec![(0.0, 0.0, 0usize); c.clusters.len()];
            for (p, &id) in points.iter().zip(&c.assignment[0]) {
                sums[id].0 += p.position.x;
                sums[id].1 += p.position.y;
                sums[id].2 += 1;
            }
            for (cl, (sx, sy, n)) in c.clusters.iter().zip(sums) {
                prop_assert_eq!(cl.count, n);
                prop_assert!((cl.centroid.x - sx / n as f64).abs() < 1e-6);
                prop_assert!((cl.centroid.y - sy / n as f64).abs() < 1e-6);
            }
        }
    }
}
