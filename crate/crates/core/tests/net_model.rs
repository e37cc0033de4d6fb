mod common;

use divcode::net::{
    decompose_by_destination, disjoint_path_pair, gravity_traffic, parse_network, parse_traffic, shortest_path,
    uniform_traffic, GravityWeight, NetError,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fixtures_round_trip_through_text() {
    for name in common::FIXTURES {
        let net = common::fixture(name);
        let again = parse_network(&net.to_text()).unwrap();
        assert_eq!(again.to_text(), net.to_text(), "{name}");
        assert_eq!(again.link_count(), 2 * again.span_count());
    }
}

#[test]
fn link_numbering_pairs_directions() {
    let net = common::fixture("cost239.net");
    for span in 0..net.span_count() {
        let (f, b) = (net.link(divcode::SpanId(span).forward()), net.link(divcode::SpanId(span).backward()));
        assert_eq!((f.from, f.to), (b.to, b.from));
        assert_eq!(f.id.reverse(), b.id);
        assert_eq!(f.cost, b.cost);
    }
}

#[test]
fn parse_errors_carry_line_numbers() {
    let cases = ["A B 1\nA A 2", "A B 1\nB A 3", "A B 1\nA C -4", "A B 1\n# note\nA C"];
    for (text, line) in cases.into_iter().zip([2, 2, 2, 3]) {
        match parse_network(text) {
            Err(NetError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn traffic_text_round_trip_and_errors() {
    let net = common::fixture("desk5.net");
    let tm = gravity_traffic(&net, 0.5, GravityWeight::NodalDegree, 0).unwrap();
    let again = parse_traffic(&tm.to_text(&net), &net).unwrap();
    assert_eq!(again, tm);
    assert!(parse_traffic("N1 N1 1", &net).is_err());
    assert!(parse_traffic("N1 Z 1", &net).is_err());
    assert!(parse_traffic("N1 N2 x", &net).is_err());
}

#[test]
fn gravity_weights() {
    let net = common::fixture("usa28.net");
    let tm = gravity_traffic(&net, 1.0, GravityWeight::NodalDegree, 99).unwrap();
    for ((s, d), u) in tm.iter() {
        let w = (net.nodal_degree(s).unwrap() * net.nodal_degree(d).unwrap()) as u64;
        assert_eq!(u, w);
    }
    let w = GravityWeight::SeededUniform { min: 1, max: 5 };
    let a = gravity_traffic(&net, 0.5, w, 3).unwrap();
    assert_eq!(a, gravity_traffic(&net, 0.5, w, 3).unwrap());
    assert_ne!(a, gravity_traffic(&net, 0.5, w, 4).unwrap());
    assert!(gravity_traffic(&net, 0.0, w, 3).is_err());
    assert!(gravity_traffic(&net, f64::NAN, w, 3).is_err());
}

#[test]
fn decomposition_keeps_volume() {
    let net = common::fixture("cost239.net");
    let tm = uniform_traffic(&net, 2);
    let parts = decompose_by_destination(&tm);
    assert_eq!(parts.len(), net.node_count());
    let total: u64 = parts.values().flat_map(|v| v.values()).sum();
    assert_eq!(total, tm.total());
    for (d, v) in &parts {
        assert!(!v.contains_key(d));
        assert_eq!(v.len(), net.node_count() - 1);
    }
}

#[test]
fn paths_on_fixtures_match_enumeration() {
    for name in ["triangle.net", "desk5.net", "desk6.net", "coding7.net"] {
        let net = common::fixture(name);
        for s in net.nodes() {
            for d in net.nodes().filter(|&d| d != s) {
                let (p, c) = shortest_path(&net, s, d).unwrap();
                assert_eq!(Some(c), common::shortest_cost(&net, s, d), "{name}");
                assert_eq!((p.source(), p.target(), p.cost(&net)), (s, d, c));
                let (a, b, c2) = disjoint_path_pair(&net, s, d).unwrap();
                assert_eq!(Some(c2), common::disjoint_pair_cost(&net, s, d), "{name}");
                assert!(!a.shares_span_with(&b));
                assert!(a.cost(&net) <= b.cost(&net));
                assert_eq!(a.cost(&net) + b.cost(&net), c2);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn paths_on_random_graphs(seed in any::<u64>(), nodes in 3usize..8, extra in 0usize..6) {
        let net = common::random_network(&mut ChaCha8Rng::seed_from_u64(seed), nodes, extra);
        for s in net.nodes() {
            for d in net.nodes().filter(|&d| d != s) {
                let (p, c) = shortest_path(&net, s, d).unwrap();
                prop_assert_eq!(Some(c), common::shortest_cost(&net, s, d));
                prop_assert_eq!(p.cost(&net), c);
                match (disjoint_path_pair(&net, s, d), common::disjoint_pair_cost(&net, s, d)) {
                    (Ok((a, b, c)), Some(best)) => {
                        prop_assert_eq!(c, best);
                        prop_assert!(!a.shares_span_with(&b));
                    }
                    (Err(NetError::NoDisjointPair { .. }), None) => {}
                    (got, want) => prop_assert!(false, "{:?} vs {:?}", got, want),
                }
            }
        }
    }

    #[test]
    fn text_round_trip(seed in any::<u64>(), nodes in 2usize..10, extra in 0usize..10) {
        let net = common::random_network(&mut ChaCha8Rng::seed_from_u64(seed), nodes, extra);
        let again = parse_network(&net.to_text()).unwrap();
        prop_assert_eq!(again.to_text(), net.to_text());
    }
}
