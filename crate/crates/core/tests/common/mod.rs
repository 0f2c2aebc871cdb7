//! Shared oracles and randomized generators for the integration suites.
//!
//! Everything in here recomputes results from first principles (exhaustive
//! permutation enumeration, direct table lookups, slice counting) and
//! stays independent of the library's search and symbolic machinery.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::Rng;

use corrlab::corrcalc::{Correspondence, Elem};
use corrlab::finstruct::Structure;

/// All permutations of `0..n` in lexicographic order.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        out.push(perm.clone());
        // Next lexicographic permutation.
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| perm[j] > perm[i]).unwrap();
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    out
}

/// Direct check against the interpretation tables, written independently
/// of the library's internal table flattening.
pub fn is_automorphism_direct(s: &Structure, perm: &[usize]) -> bool {
    for r in s.relations() {
        for t in &r.tuples {
            let image: Vec<usize> = t.iter().map(|&e| perm[e]).collect();
            if !r.tuples.contains(&image) {
                return false;
            }
        }
    }
    for f in s.functions() {
        for (args, &v) in &f.table {
            let image_args: Vec<usize> = args.iter().map(|&e| perm[e]).collect();
            if f.table[&image_args] != perm[v] {
                return false;
            }
        }
    }
    true
}

/// The full automorphism group over the empty parameter set, by
/// exhaustive enumeration. Usable up to universe 7 or so.
pub fn brute_force_group(s: &Structure) -> Vec<Vec<usize>> {
    all_permutations(s.universe())
        .into_iter()
        .filter(|p| is_automorphism_direct(s, p))
        .collect()
}

/// Members of `group` fixing every element of `fixed`.
pub fn fix_subgroup(group: &[Vec<usize>], fixed: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    group
        .iter()
        .filter(|p| fixed.iter().all(|&a| p[a] == a))
        .cloned()
        .collect()
}

/// Element orbits under an explicitly listed group, as sorted blocks
/// listed by least element.
pub fn orbits_from_group(n: usize, group: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut blocks = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut orbit: BTreeSet<usize> = group.iter().map(|p| p[start]).collect();
        orbit.insert(start);
        for &e in &orbit {
            seen[e] = true;
        }
        blocks.push(orbit.into_iter().collect());
    }
    blocks
}

/// Ordered-pair orbits under the diagonal action of an explicit group.
pub fn pair_orbits_from_group(n: usize, group: &[Vec<usize>]) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; n * n];
    let mut blocks = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if seen[x * n + y] {
                continue;
            }
            let mut orbit: BTreeSet<(usize, usize)> =
                group.iter().map(|p| (p[x], p[y])).collect();
            orbit.insert((x, y));
            for &(a, b) in &orbit {
                seen[a * n + b] = true;
            }
            blocks.push(orbit.into_iter().collect());
        }
    }
    blocks
}

/// Closure of a generator list into the full group element set.
pub fn closure(n: usize, gens: &[Vec<usize>]) -> BTreeSet<Vec<usize>> {
    let identity: Vec<usize> = (0..n).collect();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    seen.insert(identity.clone());
    let mut stack = vec![identity];
    while let Some(p) = stack.pop() {
        for g in gens {
            let q: Vec<usize> = (0..n).map(|x| g[p[x]]).collect();
            if seen.insert(q.clone()) {
                stack.push(q);
            }
        }
    }
    seen
}

/// A random structure with universe at most `max_n`, up to 3 relations of
/// arity at most 2 and at most one unary function.
pub fn random_structure(rng: &mut StdRng, max_n: usize) -> Structure {
    let n = rng.gen_range(1..=max_n);
    let mut s = Structure::new(format!("rnd{n}"), n);
    let rel_count = rng.gen_range(0..=3usize);
    for r in 0..rel_count {
        let arity = rng.gen_range(1..=2usize);
        let density = rng.gen_range(0.05..0.6f64);
        let mut tuples = Vec::new();
        if arity == 1 {
            for e in 0..n {
                if rng.gen_bool(density) {
                    tuples.push(vec![e]);
                }
            }
        } else {
            for x in 0..n {
                for y in 0..n {
                    if rng.gen_bool(density) {
                        tuples.push(vec![x, y]);
                    }
                }
            }
        }
        s.add_relation(format!("R{r}"), arity, tuples).unwrap();
    }
    if rng.gen_bool(0.5) {
        let table: Vec<(Vec<usize>, usize)> =
            (0..n).map(|e| (vec![e], rng.gen_range(0..n))).collect();
        s.add_function("f", 1, table).unwrap();
    }
    s
}

/// A random uniform `(k, l)`-correspondence between disjoint atom
/// carriers: a modular biregular pattern with shuffled labels, checked
/// uniform before returning.
pub fn random_biregular(rng: &mut StdRng) -> (Correspondence, usize, usize) {
    loop {
        let k = rng.gen_range(1..=3usize);
        let l = rng.gen_range(1..=3usize);
        let t = rng.gen_range(1..=3usize);
        let a = l * t; // |X|
        let b = k * t; // |Y|
        // x_i -> y_{(i*k + j) mod b} for j < k, then random relabeling.
        let mut xs: Vec<usize> = (0..a).collect();
        let mut ys: Vec<usize> = (a..a + b).collect();
        shuffle(rng, &mut xs);
        shuffle(rng, &mut ys);
        let mut pairs = BTreeSet::new();
        for i in 0..a {
            for j in 0..k {
                pairs.insert((Elem::atom(xs[i]), Elem::atom(ys[(i * k + j) % b])));
            }
        }
        let domain: BTreeSet<Elem> = xs.iter().map(|&x| Elem::atom(x)).collect();
        let codomain: BTreeSet<Elem> = ys.iter().map(|&y| Elem::atom(y)).collect();
        let c = Correspondence::new(domain, codomain, pairs).unwrap();
        if corrlab::corrcalc::is_uniform(&c) == Some((k, l)) {
            return (c, k, l);
        }
        // The wrapped intervals can collide for some (k, t); retry.
    }
}

pub fn shuffle<T>(rng: &mut StdRng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

pub mod symbolic {
    use super::*;
    use corrlab::cofinite::{Loc, Ray, RayRule, SymbolicMap, SymbolicSet};

    /// A random valid symbolic map: full random rays, one rule per source
    /// ray, exceptions filling the prefixes and points, then a few random
    /// overrides to roughen the exception pattern.
    pub fn random_map(rng: &mut StdRng) -> SymbolicMap {
        let src_rays = rng.gen_range(1..=2usize);
        let src_points = rng.gen_range(0..=2usize);
        let dst_rays = rng.gen_range(1..=2usize);
        let dst_points = rng.gen_range(0..=1usize);
        let source = SymbolicSet::new(
            (0..src_rays).map(|i| Ray { label: format!("s{i}"), deleted: BTreeSet::new() }),
            (0..src_points).map(|i| format!("sp{i}")),
        )
        .unwrap();
        let target = SymbolicSet::new(
            (0..dst_rays).map(|i| Ray { label: format!("t{i}"), deleted: BTreeSet::new() }),
            (0..dst_points).map(|i| format!("tp{i}")),
        )
        .unwrap();

        let mut random_target = |rng: &mut StdRng| -> Loc {
            if dst_points > 0 && rng.gen_bool(0.2) {
                Loc::point(format!("tp{}", rng.gen_range(0..dst_points)))
            } else {
                Loc::ray(format!("t{}", rng.gen_range(0..dst_rays)), rng.gen_range(0..6))
            }
        };

        let mut rules = BTreeMap::new();
        let mut exceptions = BTreeMap::new();
        for i in 0..src_rays {
            let prefix = rng.gen_range(0..=4usize);
            rules.insert(format!("s{i}"), RayRule {
                target: format!("t{}", rng.gen_range(0..dst_rays)),
                block: rng.gen_range(1..=4),
                prefix,
                offset: rng.gen_range(0..=3),
            });
            for idx in 0..prefix {
                exceptions.insert(Loc::ray(format!("s{i}"), idx), random_target(rng));
            }
        }
        for p in 0..src_points {
            exceptions.insert(Loc::point(format!("sp{p}")), random_target(rng));
        }
        let mut map = SymbolicMap::new(source, target, rules, exceptions).unwrap();

        for _ in 0..rng.gen_range(0..=3usize) {
            let at = Loc::ray(format!("s{}", rng.gen_range(0..src_rays)), rng.gen_range(0..8));
            let to = random_target(rng);
            map = map.with_overrides(&[(at, to)].into()).unwrap();
        }
        map
    }
}
