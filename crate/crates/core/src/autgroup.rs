//! Automorphism generators and orbits of finite structures relative to a
//! pointwise-fixed parameter set.
//!
//! On a finite structure the complete types over a parameter set `A` are
//! exactly the orbits of `Aut(S/A)`, the group of automorphisms fixing
//! every element of `A`; the multiplicity `m(a/A)` is the size of the
//! orbit of `a`. Throughout the crate "definable over A" is read as
//! "invariant under `Aut(S/A)`", which on finite structures is the
//! computable semantics the automorphism arguments actually use.
//!
//! The group is found by backtracking over partial bijections, pruned by
//! iterated colour refinement (1-dimensional Weisfeiler-Leman over the
//! relation and function tables; functions take part through their
//! graphs). The recursion over base points yields one coset
//! representative per orbit point, so the returned list generates the
//! group exactly and is canonically sorted.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::finstruct::Structure;

/// Generators of a permutation group on `0..degree`, each stored as an
/// image array. The list is sorted lexicographically and deduplicated,
/// so equal groups produced by equal inputs render identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermGenSet {
    degree: usize,
    generators: Vec<Vec<usize>>,
}

impl PermGenSet {
    fn new(degree: usize, mut generators: Vec<Vec<usize>>) -> PermGenSet {
        generators.sort();
        generators.dedup();
        PermGenSet { degree, generators }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn generators(&self) -> &[Vec<usize>] {
        &self.generators
    }

    pub fn is_trivial(&self) -> bool {
        self.generators.is_empty()
    }

    /// Orbit of `point` under the generated group, sorted.
    pub fn orbit_of(&self, point: usize) -> Vec<usize> {
        assert!(point < self.degree);
        let mut seen = vec![false; self.degree];
        seen[point] = true;
        let mut stack = vec![point];
        while let Some(x) = stack.pop() {
            for g in &self.generators {
                let y = g[x];
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        (0..self.degree).filter(|&x| seen[x]).collect()
    }
}

/// A partition of `0..degree` into orbits. Blocks are sorted internally
/// and listed by their least element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitPartition {
    degree: usize,
    blocks: Vec<Vec<usize>>,
    index: Vec<usize>,
}

impl OrbitPartition {
    fn from_union_find(mut parent: Vec<usize>) -> OrbitPartition {
        let degree = parent.len();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            let mut cur = x;
            while parent[cur] != root {
                let next = parent[cur];
                parent[cur] = root;
                cur = next;
            }
            root
        }
        let mut roots: Vec<usize> = (0..degree).map(|x| find(&mut parent, x)).collect();
        let mut block_of_root = vec![usize::MAX; degree];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for x in 0..degree {
            let r = roots[x];
            if block_of_root[r] == usize::MAX {
                block_of_root[r] = blocks.len();
                blocks.push(Vec::new());
            }
            blocks[block_of_root[r]].push(x);
        }
        for x in 0..degree {
            roots[x] = block_of_root[roots[x]];
        }
        OrbitPartition { degree, blocks, index: roots }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Index of the block containing `x`.
    pub fn block_of(&self, x: usize) -> usize {
        self.index[x]
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    /// Every block of `self` is contained in a block of `coarser`.
    pub fn refines(&self, coarser: &OrbitPartition) -> bool {
        self.degree == coarser.degree
            && self
                .blocks
                .iter()
                .all(|b| b.iter().all(|&x| coarser.block_of(x) == coarser.block_of(b[0])))
    }
}

/// Encode the ordered pair `(x, y)` over a universe of size `n` as a
/// point of `0..n*n`, as used by [`pair_orbits`].
pub fn pair_id(n: usize, x: usize, y: usize) -> usize {
    x * n + y
}

/// Inverse of [`pair_id`].
pub fn pair_of_id(n: usize, id: usize) -> (usize, usize) {
    (id / n, id % n)
}

/// All relation and function interpretations flattened to tuple tables;
/// a function table appears as its graph (arguments followed by value).
struct Tables {
    n: usize,
    /// tuple lists per table
    tuples: Vec<Vec<Vec<usize>>>,
    /// tuple membership per table, for the exact automorphism check
    sets: Vec<BTreeSet<Vec<usize>>>,
    /// per element: (table, position, tuple index) occurrences
    occurrences: Vec<Vec<(usize, usize, usize)>>,
}

impl Tables {
    fn new(s: &Structure) -> Tables {
        let n = s.universe();
        let mut tuples: Vec<Vec<Vec<usize>>> = Vec::new();
        for r in s.relations() {
            tuples.push(r.tuples.iter().cloned().collect());
        }
        for f in s.functions() {
            tuples.push(
                f.table
                    .iter()
                    .map(|(args, &v)| {
                        let mut t = args.clone();
                        t.push(v);
                        t
                    })
                    .collect(),
            );
        }
        let sets: Vec<BTreeSet<Vec<usize>>> =
            tuples.iter().map(|ts| ts.iter().cloned().collect()).collect();
        let mut occurrences = vec![Vec::new(); n];
        for (ti, ts) in tuples.iter().enumerate() {
            for (idx, t) in ts.iter().enumerate() {
                for (pos, &e) in t.iter().enumerate() {
                    occurrences[e].push((ti, pos, idx));
                }
            }
        }
        Tables { n, tuples, sets, occurrences }
    }

    /// Exact check: `perm` preserves every table. Since tables are finite
    /// and `perm` is a bijection, `perm(T) subset of T` already forces
    /// equality.
    fn is_automorphism(&self, perm: &[usize]) -> bool {
        self.sets.iter().zip(&self.tuples).all(|(set, ts)| {
            ts.iter().all(|t| {
                let image: Vec<usize> = t.iter().map(|&e| perm[e]).collect();
                set.contains(&image)
            })
        })
    }
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Refine `colours` to a stable colouring preserved by every
/// colour-respecting automorphism. Signatures are hashed (the multiset of
/// occurrence patterns combines by wrapping addition, so the result does
/// not depend on enumeration order); a hash collision can only merge
/// classes, which weakens pruning but never soundness, and the final
/// bijections are checked exactly. Colour ids are renumbered by signature
/// value, so two sides of a search refined separately stay aligned
/// whenever their histograms agree.
fn refine(tables: &Tables, colours: &mut Vec<u32>) {
    let n = tables.n;
    if n == 0 {
        return;
    }
    let mut sigs: Vec<(u64, usize)> = Vec::with_capacity(n);
    loop {
        sigs.clear();
        for e in 0..n {
            let mut acc = 0u64;
            for &(ti, pos, idx) in &tables.occurrences[e] {
                let mut h = mix((ti as u64) << 32 | pos as u64);
                for &x in &tables.tuples[ti][idx] {
                    h = mix(h ^ (colours[x] as u64).wrapping_add(0x51_7c_c1_b7));
                }
                acc = acc.wrapping_add(h);
            }
            sigs.push((mix((colours[e] as u64) << 1).wrapping_add(acc), e));
        }
        sigs.sort_unstable();
        let old_classes = distinct(colours);
        let mut current = 0u32;
        let mut prev = sigs[0].0;
        for &(sig, e) in &sigs {
            if sig != prev {
                current += 1;
                prev = sig;
            }
            colours[e] = current;
        }
        if current as usize + 1 == old_classes {
            return;
        }
    }
}

fn distinct(colours: &[u32]) -> usize {
    let mut seen: Vec<u32> = colours.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Sorted (colour, count) histogram.
fn histogram(colours: &[u32]) -> Vec<(u32, usize)> {
    let mut h: Vec<(u32, usize)> = Vec::new();
    let mut sorted = colours.to_vec();
    sorted.sort_unstable();
    for c in sorted {
        match h.last_mut() {
            Some((last, count)) if *last == c => *count += 1,
            _ => h.push((c, 1)),
        }
    }
    h
}

/// Depth-first search for an automorphism satisfying `pins` exactly
/// (every `(a, b)` pin forces the image of `a` to be `b`). The two
/// colourings individualize the pins on their own sides; whenever a
/// pin-consistent automorphism exists, canonical renumbering keeps the
/// two sides' colour ids aligned, so the search finds it. Leaves are
/// checked exactly against both the tables and the pins, so hash
/// collisions or misaligned ids on dead branches never produce a wrong
/// generator.
fn search(tables: &Tables, pins: &[(usize, usize)], src: Vec<u32>, dst: Vec<u32>) -> Option<Vec<usize>> {
    let n = tables.n;
    if histogram(&src) != histogram(&dst) {
        return None;
    }
    // Find the first colour class with at least two members.
    let max_colour = src.iter().copied().max().unwrap_or(0);
    let mut cell_colour = None;
    for c in 0..=max_colour {
        if src.iter().filter(|&&x| x == c).count() >= 2 {
            cell_colour = Some(c);
            break;
        }
    }
    let Some(c) = cell_colour else {
        // Discrete: read the bijection colour by colour and verify.
        let mut perm = vec![usize::MAX; n];
        let mut by_colour = vec![usize::MAX; max_colour as usize + 1];
        for (e, &col) in dst.iter().enumerate() {
            by_colour[col as usize] = e;
        }
        for (e, &col) in src.iter().enumerate() {
            perm[e] = by_colour[col as usize];
        }
        let ok = pins.iter().all(|&(a, b)| perm[a] == b) && tables.is_automorphism(&perm);
        return if ok { Some(perm) } else { None };
    };

    let x = (0..n).find(|&e| src[e] == c).expect("nonempty cell");
    let fresh = max_colour + 1;
    // The source side is the same for every target candidate.
    let mut src2 = src.clone();
    src2[x] = fresh;
    refine(tables, &mut src2);
    for y in (0..n).filter(|&e| dst[e] == c) {
        let mut dst2 = dst.clone();
        dst2[y] = fresh;
        refine(tables, &mut dst2);
        if let Some(found) = search(tables, pins, src2.clone(), dst2) {
            return Some(found);
        }
    }
    None
}

/// Orbit closure of `seed` under `gens`, as a membership mask.
fn orbit_mask(n: usize, gens: &[Vec<usize>], seed: usize) -> Vec<bool> {
    let mut seen = vec![false; n];
    seen[seed] = true;
    let mut stack = vec![seed];
    while let Some(x) = stack.pop() {
        for g in gens {
            let y = g[x];
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

/// Generators of `Aut(S/A)`: all permutations of the universe preserving
/// every relation and function table and fixing `fixed` pointwise. The
/// trivial group is returned as an empty generator list.
pub fn automorphisms(s: &Structure, fixed: &BTreeSet<usize>) -> PermGenSet {
    let n = s.universe();
    assert!(fixed.iter().all(|&a| a < n), "parameter outside universe");
    let tables = Tables::new(s);
    let mut pinned_mask = vec![false; n];
    let mut pinned: Vec<usize> = Vec::new();
    // Individualize the parameters once; the stable base colouring is
    // shared by both sides of every search below.
    let mut base = vec![0u32; n];
    for (i, &a) in fixed.iter().enumerate() {
        pinned_mask[a] = true;
        pinned.push(a);
        base[a] = (i + 1) as u32;
    }
    refine(&tables, &mut base);
    let gens = generators_rec(&tables, &mut pinned, &mut pinned_mask, &base);
    PermGenSet::new(n, gens)
}

/// Recursive orbit-stabilizer scheme: with `v` the least unpinned point,
/// the group is generated by the pointwise stabilizer of `v` together
/// with one representative mapping `v` to each further point of its
/// orbit. `base` is the stable colouring with all pinned points
/// individualized.
fn generators_rec(
    tables: &Tables,
    pinned: &mut Vec<usize>,
    pinned_mask: &mut Vec<bool>,
    base: &[u32],
) -> Vec<Vec<usize>> {
    let n = tables.n;
    let Some(v) = (0..n).find(|&e| !pinned_mask[e]) else {
        return Vec::new();
    };
    let fresh = base.iter().copied().max().unwrap_or(0) + 1;
    let mut with_v = base.to_vec();
    with_v[v] = fresh;
    refine(tables, &mut with_v);

    pinned.push(v);
    pinned_mask[v] = true;
    let mut gens = generators_rec(tables, pinned, pinned_mask, &with_v);
    pinned.pop();
    pinned_mask[v] = false;

    let mut pins: Vec<(usize, usize)> = pinned.iter().map(|&a| (a, a)).collect();
    pins.push((v, v));
    for u in v + 1..n {
        if pinned_mask[u] {
            continue;
        }
        if orbit_mask(n, &gens, v)[u] {
            continue;
        }
        let mut with_u = base.to_vec();
        with_u[u] = fresh;
        refine(tables, &mut with_u);
        *pins.last_mut().unwrap() = (v, u);
        if let Some(g) = search(tables, &pins, with_v.clone(), with_u) {
            debug_assert!(tables.is_automorphism(&g));
            gens.push(g);
        }
    }
    gens
}

/// The partition of the universe into `Aut(S/A)`-orbits: the finite
/// semantics of the complete 1-types over `A`.
pub fn element_orbits(s: &Structure, fixed: &BTreeSet<usize>) -> OrbitPartition {
    let gens = automorphisms(s, fixed);
    element_orbits_under(gens.degree(), gens.generators())
}

/// Element orbits under explicitly given generators; lets callers with a
/// generator set in hand (or an oracle group) build the same partition.
pub fn element_orbits_under(n: usize, gens: &[Vec<usize>]) -> OrbitPartition {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        root
    }
    for g in gens {
        for x in 0..n {
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, g[x]));
            if rx != ry {
                parent[rx.max(ry)] = rx.min(ry);
            }
        }
    }
    OrbitPartition::from_union_find(parent)
}

/// The partition of all ordered pairs (encoded with [`pair_id`]) into
/// orbits of the diagonal action: the finite semantics of the complete
/// 2-types over `A`.
pub fn pair_orbits(s: &Structure, fixed: &BTreeSet<usize>) -> OrbitPartition {
    let gens = automorphisms(s, fixed);
    pair_orbits_under(gens.degree(), gens.generators())
}

/// Orbit partition of ordered pairs under explicitly given generators;
/// split out so tests can feed the brute-force group through the same
/// closure.
pub fn pair_orbits_under(n: usize, gens: &[Vec<usize>]) -> OrbitPartition {
    let lifted: Vec<Vec<usize>> = gens
        .iter()
        .map(|g| {
            let mut image = vec![0usize; n * n];
            for x in 0..n {
                for y in 0..n {
                    image[pair_id(n, x, y)] = pair_id(n, g[x], g[y]);
                }
            }
            image
        })
        .collect();
    element_orbits_under(n * n, &lifted)
}

/// `m(a/A)`: the number of realizations of the type of `a` over `A`,
/// i.e. the size of the `Aut(S/A)`-orbit of `a`.
pub fn multiplicity(s: &Structure, fixed: &BTreeSet<usize>, a: usize) -> usize {
    assert!(a < s.universe(), "element outside universe");
    let orbits = element_orbits(s, fixed);
    orbits.block(orbits.block_of(a)).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finstruct::gen_tree;

    fn three_cycle() -> Structure {
        let mut s = Structure::new("c3", 3);
        s.add_relation("E", 2, [vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
        s
    }

    fn star() -> Structure {
        let mut s = Structure::new("star", 3);
        s.add_relation("E", 2, [vec![0, 1], vec![0, 2]]).unwrap();
        s
    }

    /// Order of the generated group by explicit closure; fine below
    /// degree 8.
    fn group_order(gens: &PermGenSet) -> usize {
        let n = gens.degree();
        let identity: Vec<usize> = (0..n).collect();
        let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
        seen.insert(identity.clone());
        let mut stack = vec![identity];
        while let Some(p) = stack.pop() {
            for g in gens.generators() {
                let q: Vec<usize> = (0..n).map(|x| g[p[x]]).collect();
                if seen.insert(q.clone()) {
                    stack.push(q);
                }
            }
        }
        seen.len()
    }

    #[test]
    fn three_cycle_group_has_order_three() {
        let s = three_cycle();
        let g = automorphisms(&s, &BTreeSet::new());
        assert_eq!(group_order(&g), 3);
    }

    #[test]
    fn star_group_has_order_two() {
        let s = star();
        let g = automorphisms(&s, &BTreeSet::new());
        assert_eq!(group_order(&g), 2);
        assert_eq!(g.generators(), &[vec![0, 2, 1]]);
    }

    #[test]
    fn fixing_everything_gives_trivial_group() {
        let s = three_cycle();
        let all: BTreeSet<usize> = (0..3).collect();
        assert!(automorphisms(&s, &all).is_trivial());
    }

    #[test]
    fn star_orbits() {
        let s = star();
        let o = element_orbits(&s, &BTreeSet::new());
        assert_eq!(o.blocks(), &[vec![0], vec![1, 2]]);
    }

    #[test]
    fn three_cycle_orbits_with_fixed_point_are_singletons() {
        let s = three_cycle();
        let o = element_orbits(&s, &[0].into_iter().collect());
        assert_eq!(o.block_count(), 3);
    }

    #[test]
    fn all_fixed_gives_singletons() {
        let s = star();
        let o = element_orbits(&s, &(0..3).collect());
        assert_eq!(o.block_count(), 3);
    }

    #[test]
    fn three_cycle_pair_orbits() {
        let s = three_cycle();
        let o = pair_orbits(&s, &BTreeSet::new());
        // Diagonal, edges, reversed edges.
        assert_eq!(o.block_count(), 3);
        let n = 3;
        assert_eq!(o.block_of(pair_id(n, 0, 0)), o.block_of(pair_id(n, 1, 1)));
        assert_eq!(o.block_of(pair_id(n, 0, 1)), o.block_of(pair_id(n, 1, 2)));
        assert_eq!(o.block_of(pair_id(n, 1, 0)), o.block_of(pair_id(n, 2, 1)));
        assert_ne!(o.block_of(pair_id(n, 0, 1)), o.block_of(pair_id(n, 1, 0)));
    }

    #[test]
    fn star_has_five_pair_orbits() {
        let s = star();
        let o = pair_orbits(&s, &BTreeSet::new());
        assert_eq!(o.block_count(), 5);
    }

    #[test]
    fn degree_one_structure_has_single_pair_orbit() {
        let s = Structure::new("pt", 1);
        let o = pair_orbits(&s, &BTreeSet::new());
        assert_eq!(o.blocks(), &[vec![0]]);
    }

    #[test]
    fn star_multiplicities() {
        let s = star();
        assert_eq!(multiplicity(&s, &[2].into_iter().collect(), 1), 1);
        assert_eq!(multiplicity(&s, &BTreeSet::new(), 1), 2);
        assert_eq!(multiplicity(&s, &[1].into_iter().collect(), 1), 1);
    }

    #[test]
    fn enlarging_parameters_refines_orbits() {
        let s = gen_tree(3);
        let coarse = element_orbits(&s, &BTreeSet::new());
        let fine = element_orbits(&s, &[1].into_iter().collect());
        assert!(fine.refines(&coarse));
        let pc = pair_orbits(&s, &BTreeSet::new());
        let pf = pair_orbits(&s, &[1].into_iter().collect());
        assert!(pf.refines(&pc));
    }

    #[test]
    fn pair_blocks_project_onto_element_blocks() {
        let s = gen_tree(3);
        let n = s.universe();
        let eo = element_orbits(&s, &BTreeSet::new());
        let po = pair_orbits(&s, &BTreeSet::new());
        for block in po.blocks() {
            let (x0, y0) = pair_of_id(n, block[0]);
            for &id in block {
                let (x, y) = pair_of_id(n, id);
                assert_eq!(eo.block_of(x), eo.block_of(x0));
                assert_eq!(eo.block_of(y), eo.block_of(y0));
            }
        }
    }

    #[test]
    fn orbit_sizes_divide_group_order_small() {
        for s in [three_cycle(), star(), gen_tree(3)] {
            let g = automorphisms(&s, &BTreeSet::new());
            let order = group_order(&g);
            for block in element_orbits(&s, &BTreeSet::new()).blocks() {
                assert_eq!(order % block.len(), 0);
            }
        }
    }
}
