use geo::{Coord, LineString};
use haulmap::graph::RoadGraph;
use haulmap::inference::infer_graph;
use haulmap::synth::{evaluate, generate_trips, Leg, Scenario, ScenarioKind, ScenarioSpec, TripPlan};
use haulmap::trace::{derive_kinematics, segment_all};
use haulmap::Config;
use proptest::prelude::*;

fn random_graph() -> impl Strategy<Value = RoadGraph<f64>> {
    prop::collection::vec(((-100.0..1100.0f64, -60.0..60.0f64), (-100.0..1100.0f64, -60.0..60.0f64)), 0..8)
        .prop_map(|segs| {
            let mut g = RoadGraph::new();
            for ((ax, ay), (bx, by)) in segs {
                if (ax - bx).hypot(ay - by) < 1.0 {
                    continue;
                }
                let a = g.add_vertex(Coord { x: ax, y: ay }).unwrap();
                let b = g.add_vertex(Coord { x: bx, y: by }).unwrap();
                g.add_straight_edge(a, b, 1).unwrap();
            }
            g
        })
}

proptest! {
    #[test]
    fn metrics_are_bounded(g in random_graph(), tol in 1.0..30.0f64) {
        let s = ScenarioSpec::new(ScenarioKind::Straight).build().unwrap();
        let m = evaluate(&g, &s, tol);
        prop_assert!((0.0..=1.0).contains(&m.coverage));
        prop_assert!((0.0..=1.0).contains(&m.precision));
        if m.precision == 1.0 {
            if let Some(off) = m.mean_offset {
                prop_assert!(off <= tol);
            }
        }
        prop_assert_eq!(m.mean_offset.is_none(), g.edge_count() == 0);
    }
}

#[test]
fn noise_free_straight_lane_round_trip() {
    let s = Scenario {
        kind: ScenarioKind::Straight,
        lanes: vec![LineString::from(vec![(0.0, 0.0), (800.0, 0.0)])],
        wander: vec![],
        regions: vec![],
        plans: (0..5).map(|_| TripPlan { legs: vec![Leg::Lane(0)], speed: 8.0 }).collect(),
        noise_sigma: 0.0,
        sample_period: 6.0,
        rng_seed: 3,
    };
    let cfg = Config::default();
    let traces: Vec<_> = generate_trips::<f64>(&s).into_iter().map(derive_kinematics).collect();
    let (trips, _) = segment_all(&traces, &cfg);
    assert_eq!(trips.len(), 5);
    let (graph, _) = infer_graph(&trips, &cfg);
    let m = evaluate(&graph, &s, 10.0);
    assert!(m.coverage >= 0.95, "{m:?}");
    assert_eq!(m.precision, 1.0);
}
