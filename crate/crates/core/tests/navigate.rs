mod common;

use std::collections::{BTreeMap, BTreeSet};

use datafabric::hypergraph::{EdgeLabel, Hyperedge, Hypergraph, VertexId, VertexKind};
use datafabric::navigate::{
    diameter_bound_check, hop_diameter, resolve_query, shortest_path, shortest_paths_from, EdgeWeight, Query,
    SimilarityWeight, StepWeight, UnitWeight,
};
use datafabric::schema::Schema;
use datafabric::transform::{DiscreteDataset, Value};
use proptest::prelude::*;

fn graph(seed: u64) -> Hypergraph {
    let mut r = common::rng(seed);
    let n = 2 + (seed % 9) as usize;
    common::random_hypergraph(&mut r, n, n + (seed / 9 % 6) as usize, 3)
}

proptest! {
    #[test]
    fn unit_paths_match_enumeration(seed in any::<u64>()) {
        let g = graph(seed);
        for t in 0..g.num_vertices() {
            let got = shortest_path(&g, VertexId(0), VertexId(t), &UnitWeight).unwrap();
            let want = common::brute_force_path(&g, VertexId(0), VertexId(t), |_, _, _| 1.0);
            prop_assert_eq!(got.as_ref().map(|p| (p.cost, p.edges.iter().map(|e| e.0).collect::<Vec<_>>())),
                want.map(|(c, _, e)| (c, e)));
            if let Some(p) = got {
                prop_assert!(p.is_valid_in(&g, &UnitWeight));
                prop_assert_eq!(p.vertices.first(), Some(&VertexId(0)));
                prop_assert_eq!(p.vertices.last(), Some(&VertexId(t)));
            }
        }
    }

    #[test]
    fn tree_agrees_with_single_queries(seed in any::<u64>()) {
        let g = graph(seed);
        let tree = shortest_paths_from(&g, VertexId(1), &EdgeWeight).unwrap();
        for t in 0..g.num_vertices() {
            let single = shortest_path(&g, VertexId(1), VertexId(t), &EdgeWeight).unwrap();
            prop_assert_eq!(tree.path_to(VertexId(t)), single.clone());
            prop_assert_eq!(tree.cost(VertexId(t)), single.map(|p| p.cost));
        }
    }

    #[test]
    fn prefixes_of_optimal_paths_are_optimal(seed in any::<u64>()) {
        let g = graph(seed);
        for t in 0..g.num_vertices() {
            let Some(p) = shortest_path(&g, VertexId(0), VertexId(t), &EdgeWeight).unwrap() else { continue };
            let mut acc = 0.0;
            for (i, e) in p.edges.iter().enumerate() {
                acc += g.edge(*e).unwrap().weight;
                let mid = p.vertices[i + 1];
                let best = shortest_path(&g, VertexId(0), mid, &EdgeWeight).unwrap().unwrap();
                prop_assert_eq!(best.cost, acc);
            }
        }
    }

    #[test]
    fn unit_costs_respect_the_hop_diameter(seed in any::<u64>()) {
        let g = graph(seed);
        prop_assert!(diameter_bound_check(&g, &UnitWeight).unwrap());
        let d = hop_diameter(&g) as f64;
        for s in 0..g.num_vertices() {
            let tree = shortest_paths_from(&g, VertexId(s), &UnitWeight).unwrap();
            for v in tree.reachable() {
                prop_assert!(tree.cost(v).unwrap() <= d);
            }
        }
    }

    #[test]
    fn similarity_weights_lie_in_the_unit_interval(
        a in prop::collection::btree_set("[a-e]", 0..5),
        b in prop::collection::btree_set("[a-e]", 0..5),
    ) {
        let w = SimilarityWeight::new(vec![a.clone(), b.clone()]);
        let e = Hyperedge::new(0, [VertexId(0)], [VertexId(1)], EdgeLabel::Navigation, 1.0);
        let x = w.weight(&e, VertexId(0), VertexId(1));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(x, w.weight(&e, VertexId(1), VertexId(0)));
        prop_assert_eq!(x == 0.0, a == b);
    }
}

#[test]
fn query_results_are_ordered_by_cost() {
    let spec = [
        ("m", VertexKind::Metadata),
        ("near", VertexKind::Dataset),
        ("far", VertexKind::Dataset),
        ("dry", VertexKind::Dataset),
    ];
    let v = VertexId;
    let g = Hypergraph::construct(
        Hypergraph::vertices_from(&spec),
        vec![
            Hyperedge::new(0, [v(0)], [v(1), v(3)], EdgeLabel::Navigation, 1.0),
            Hyperedge::new(1, [v(1)], [v(2)], EdgeLabel::Navigation, 1.0),
        ],
        false,
    )
    .unwrap();
    let rows = |qs: &[f64]| {
        DiscreteDataset::new(
            Schema::numeric(&["quantity"]).unwrap(),
            qs.iter().map(|q| vec![Value::Num(*q)]).collect(),
            BTreeMap::new(),
        )
        .unwrap()
    };
    let store = BTreeMap::from([(v(1), rows(&[5.0, 50.0])), (v(2), rows(&[20.0])), (v(3), rows(&[1.0]))]);
    let q = Query::parse("data.quantity > 10", v(0)).unwrap();
    let hits: Vec<(VertexId, f64)> = resolve_query(&g, &q, &store, &UnitWeight)
        .unwrap()
        .into_iter()
        .map(|(d, p)| (d, p.cost))
        .collect();
    assert_eq!(hits, [(v(1), 1.0), (v(2), 2.0)]);
}

#[test]
fn unknown_endpoints_are_errors() {
    let g = Hypergraph::construct(Hypergraph::vertices_from(&[("a", VertexKind::Dataset)]), vec![], false).unwrap();
    assert!(shortest_path(&g, VertexId(0), VertexId(5), &UnitWeight).is_err());
    let trivial = shortest_path(&g, VertexId(0), VertexId(0), &UnitWeight).unwrap().unwrap();
    assert!(trivial.is_empty() && trivial.cost == 0.0);
    let _: BTreeSet<VertexId> = shortest_paths_from(&g, VertexId(0), &UnitWeight).unwrap().reachable().collect();
}
