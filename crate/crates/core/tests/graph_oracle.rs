mod common;

use cellgraph::graph::{build_graph, derive_edges, Relation};
use cellgraph::radio::simulate;
use cellgraph::scenario::{Bounds, Scenario};
use common::{cell, recount_interference};

fn cluster() -> Scenario {
    // three sites on a 1.5 km triangle, each pointing at the centroid
    let cells = vec![
        cell("a", "s1", 2000.0, 1500.0, 30.0, 2100, 43.0),
        cell("b", "s2", 3500.0, 1500.0, 330.0, 2100, 43.0),
        cell("c", "s3", 2750.0, 2800.0, 180.0, 2100, 43.0),
    ];
    Scenario::new("cluster", Bounds::square(5000.0), 50.0, cells).unwrap()
}

#[test]
fn interference_strengths_match_pixel_recount() {
    let s = cluster();
    let sim = simulate(&s).unwrap();
    let reference = recount_interference(&s, &sim);
    let edges = derive_edges(&s, &sim);
    assert_eq!(edges.len(), 6);
    for e in &edges {
        assert_eq!(e.attr.relation(), Some(Relation::Interfering));
        assert_eq!(e.attr.strength, reference[e.src][e.dst], "{} -> {}", e.src, e.dst);
        assert!(e.attr.strength > 0.0 && e.attr.strength <= 1.0);
    }
}

#[test]
fn big_cell_interferes_more_than_it_suffers() {
    let cells = vec![
        cell("big", "s1", 1500.0, 2000.0, 90.0, 800, 46.0),
        cell("small", "s2", 3000.0, 2000.0, 270.0, 800, 30.0),
    ];
    let s = Scenario::new("pair", Bounds::square(4500.0), 50.0, cells).unwrap();
    let sim = simulate(&s).unwrap();
    let edges = derive_edges(&s, &sim);
    let strength = |src: usize, dst: usize| edges.iter().find(|e| e.src == src && e.dst == dst).unwrap().attr.strength;
    let (big, small) = (s.index_of("big").unwrap(), s.index_of("small").unwrap());
    assert!(strength(big, small) > strength(small, big));
    let reference = recount_interference(&s, &sim);
    assert_eq!(strength(big, small), reference[big][small]);
    assert_eq!(strength(small, big), reference[small][big]);
}

#[test]
fn generated_graph_is_consistent_with_its_scenario() {
    let s = common::small_scenario(21, 8, 3, &[800, 2100], 5000.0, 100.0);
    let sim = simulate(&s).unwrap();
    let reference = recount_interference(&s, &sim);
    let g = build_graph(&s, &sim, true, 21).unwrap();
    g.validate().unwrap();
    assert_eq!(g.n_nodes(), s.len());
    for e in &g.edges {
        let reverse = g.edges.iter().find(|r| r.src == e.dst && r.dst == e.src).unwrap();
        assert_eq!(reverse.attr.relation_onehot, e.attr.relation_onehot);
        assert_eq!(reverse.geom, e.geom);
        if e.attr.relation() != Some(Relation::Complementing) {
            assert_eq!(e.attr.strength, reference[e.src][e.dst]);
        }
    }
    let mut split: Vec<usize> = g.masks.train.iter().chain(&g.masks.test).copied().collect();
    split.sort_unstable();
    assert_eq!(split, (0..s.len()).collect::<Vec<_>>());
}
