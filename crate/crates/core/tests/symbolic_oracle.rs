//! The symbolic fibre engine against brute-force slice counting, plus the
//! repair soundness property on randomized inputs.

mod common;

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use corrlab::cofinite::{
    eventual_fibres, materialize_map, materialize_set, sym_graph_corr, Loc, SymbolicMap,
    SymbolicSet,
};
use corrlab::repair::{classify, repair, verify};

/// Count in-slice preimages per target from the materialized table.
fn slice_counts(m: &SymbolicMap, depth: usize) -> BTreeMap<Loc, usize> {
    let mut counts = BTreeMap::new();
    for (_, img, _) in materialize_map(m, depth).entries {
        *counts.entry(img).or_insert(0usize) += 1;
    }
    counts
}

/// Depth sufficient to contain the whole fibre of any ray target with
/// index at most `horizon`, derived only from the map's coarsest
/// parameters.
fn sufficient_depth(m: &SymbolicMap, horizon: usize) -> usize {
    let max_prefix = m.rules().values().map(|r| r.prefix).max().unwrap_or(0);
    let max_block = m.rules().values().map(|r| r.block).max().unwrap_or(1);
    m.stability_bound() + max_prefix + max_block * (horizon + 1) + 1
}

/// Symbolic claims (eventual size per ray, exact exceptional sizes) match
/// counting over a slice that provably contains each checked fibre.
fn check_against_slices(m: &SymbolicMap, horizon: usize, extra_depths: &[usize]) {
    let ef = eventual_fibres(m);
    let exceptional: BTreeMap<Loc, usize> = ef.exceptional.iter().cloned().collect();
    for &extra in extra_depths {
        let depth = sufficient_depth(m, horizon) + extra;
        let counts = slice_counts(m, depth);
        for tray in m.target().rays() {
            let eventual = ef.per_ray[&tray.label];
            for j in 0..=horizon {
                if tray.deleted.contains(&j) {
                    continue;
                }
                let loc = Loc::ray(&tray.label, j);
                let expected = exceptional.get(&loc).copied().unwrap_or(eventual);
                let actual = counts.get(&loc).copied().unwrap_or(0);
                assert_eq!(actual, expected, "fibre of {loc} at depth {depth}");
            }
        }
        for p in m.target().points() {
            let loc = Loc::point(p);
            let expected = exceptional
                .get(&loc)
                .copied()
                .unwrap_or_else(|| ef.uniform.expect("point baseline needs a uniform size"));
            let actual = counts.get(&loc).copied().unwrap_or(0);
            assert_eq!(actual, expected, "fibre of point {loc} at depth {depth}");
        }
    }
}

#[test]
fn builders_match_slice_counting() {
    let (_, tree) = corrlab::cofinite::sym_tree();
    check_against_slices(&tree, 12, &[0, 3, 11]);
    let (_, tree_inf) = corrlab::cofinite::sym_tree_infty();
    check_against_slices(&tree_inf, 12, &[0, 5]);
    let (_, halving) = corrlab::cofinite::sym_halving();
    check_against_slices(&halving, 12, &[0, 7]);
}

#[test]
fn random_maps_match_slice_counting() {
    let mut rng = StdRng::seed_from_u64(0xf1b2e5);
    for case in 0..60 {
        let m = common::symbolic::random_map(&mut rng);
        let horizon = rng.gen_range(4..=10);
        check_against_slices(&m, horizon, &[0, 1, 5]);
        let _ = case;
    }
}

#[test]
fn symbolic_graph_corr_matches_slice_pairs() {
    // Pair the correspondence's symbolic fibres against explicit pair
    // enumeration over a slice: (a, a') related iff f(a) = g(a').
    let (set, g) = corrlab::cofinite::sym_tree();
    let f = SymbolicMap::identity(&set);
    let c = sym_graph_corr(&f, &g).unwrap();
    let depth = 40;
    let left = materialize_set(c.f.source(), depth);
    let right = materialize_set(c.g.source(), depth);
    for a in left.iter().take(12) {
        let expected: Vec<Loc> = right
            .iter()
            .filter(|a2| g.apply(a2).unwrap() == f.apply(a).unwrap())
            .cloned()
            .collect();
        assert_eq!(c.left_fibre(a).unwrap(), expected, "left fibre of {a}");
    }
    for a2 in right.iter().take(12) {
        let expected: Vec<Loc> = left
            .iter()
            .filter(|a| f.apply(a).unwrap() == g.apply(a2).unwrap())
            .cloned()
            .collect();
        assert_eq!(c.right_fibre(a2).unwrap(), expected, "right fibre of {a2}");
    }
}

/// Random eventually-uniform pairs with k != l; repair must always emit a
/// certificate the verifier accepts.
#[test]
fn randomized_repair_soundness() {
    let mut rng = StdRng::seed_from_u64(0xabc123);
    let mut swapped_seen = 0;
    let mut case1_seen = 0;
    let mut case2_seen = 0;
    for i in 0..24 {
        let (f, g) = random_uniformish_pair(&mut rng);
        let a = classify(&f, &g).unwrap();
        if a.k == a.l {
            continue;
        }
        let cert = repair(&f, &g).unwrap();
        if cert.swapped {
            swapped_seen += 1;
        }
        if cert.internal_case == 1 {
            case1_seen += 1;
        } else {
            case2_seen += 1;
        }
        let report = verify(&cert, 600).unwrap_or_else(|e| panic!("case {i}: {e}"));
        assert!(report.sources_checked > 0);
    }
    assert!(case1_seen > 0 && case2_seen > 0, "both construction cases exercised");
    assert!(swapped_seen > 0, "the swapped normalization path is exercised");
}

/// Source = target = one ray; f is eventually k-to-1 and g eventually
/// l-to-1 with random finite perturbations.
fn random_uniformish_pair(rng: &mut StdRng) -> (SymbolicMap, SymbolicMap) {
    use corrlab::cofinite::RayRule;
    let set = SymbolicSet::single_ray("x");
    let k = rng.gen_range(2..=4usize);
    let l = rng.gen_range(1..k);
    let make = |block: usize| {
        let rules = [(
            "x".to_string(),
            RayRule { target: "x".into(), block, prefix: 0, offset: 0 },
        )]
        .into();
        SymbolicMap::new(set.clone(), set.clone(), rules, BTreeMap::new()).unwrap()
    };
    let mut f = make(k);
    let mut g = make(l);
    for _ in 0..rng.gen_range(0..=2usize) {
        let at = Loc::ray("x", rng.gen_range(0..6));
        let to = Loc::ray("x", rng.gen_range(0..6));
        f = f.with_overrides(&[(at, to)].into()).unwrap();
    }
    for _ in 0..rng.gen_range(0..=2usize) {
        let at = Loc::ray("x", rng.gen_range(0..6));
        let to = Loc::ray("x", rng.gen_range(0..6));
        g = g.with_overrides(&[(at, to)].into()).unwrap();
    }
    (f, g)
}
