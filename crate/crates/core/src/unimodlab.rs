//! Measurability, commensurability and unimodularity checkers over orbit
//! semantics, and the block-ledger arithmetic for correspondences on
//! unions of orbits.
//!
//! With complete types read as orbits, a pair orbit inside `p x q` is a
//! complete correspondence and is automatically uniform; `m(a/Ab)` and
//! `m(b/Aa)` are its two fibre sizes. On finite structures
//! interalgebraicity over any parameter set is automatic, so no extra
//! condition is imposed on the checked pairs.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::autgroup::{self, pair_of_id};
use crate::corrcalc::{self, Correspondence, CorrError, Ratio};
use crate::finstruct::Structure;

#[derive(Debug, Error)]
pub enum UnimodError {
    #[error("element {0} is outside the universe")]
    ElementOutOfRange(usize),
    #[error("domain and codomain must be the same union of orbits")]
    CarrierMismatch,
    #[error("domain is not a union of orbits: orbit of {0} is only partially covered")]
    NotOrbitUnion(usize),
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error("internal inconsistency (library bug): {0}")]
    Internal(String),
}

/// One checked pair orbit inside a single element orbit.
#[derive(Debug, Clone, Serialize)]
pub struct UnimodEntry {
    /// Pointwise-fixed parameter set.
    pub params: Vec<usize>,
    /// Least pair of the orbit.
    pub orbit_repr: (usize, usize),
    /// Number of pairs in the orbit.
    pub orbit_size: usize,
    /// Left fibre size, which is `m(b/Aa)`.
    pub k: usize,
    /// Right fibre size, which is `m(a/Ab)`.
    pub l: usize,
    pub balanced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnimodCounterexample {
    pub params: Vec<usize>,
    pub a: usize,
    pub b: usize,
    pub m_a_over_b: usize,
    pub m_b_over_a: usize,
}

/// Result of sweeping all parameter sets up to a size bound.
#[derive(Debug, Clone, Serialize)]
pub struct UnimodReport {
    pub structure: String,
    pub max_params: usize,
    pub entries: Vec<UnimodEntry>,
    pub verdict: bool,
    pub counterexample: Option<UnimodCounterexample>,
}

/// `(m(a/Ab), m(b/Aa))`: orbit sizes after adjoining the opposite element
/// to the parameter set.
pub fn multiplicities(
    s: &Structure,
    fixed: &BTreeSet<usize>,
    a: usize,
    b: usize,
) -> (usize, usize) {
    let mut with_b = fixed.clone();
    with_b.insert(b);
    let mut with_a = fixed.clone();
    with_a.insert(a);
    let m_ab = autgroup::multiplicity(s, &with_b, a);
    let m_ba = autgroup::multiplicity(s, &with_a, b);
    (m_ab, m_ba)
}

fn subsets_up_to(n: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for size in 1..=max_size {
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        while let Some(prefix) = stack.pop() {
            if prefix.len() == size {
                out.push(prefix);
                continue;
            }
            let start = prefix.last().map_or(0, |&x| x + 1);
            // Reverse push keeps lexicographic emission order.
            for first in (start..n).rev() {
                let mut next = prefix.clone();
                next.push(first);
                stack.push(next);
            }
        }
    }
    out
}

/// Check unimodularity over every parameter set of size at most
/// `max_params`: for each pair orbit whose coordinates lie in one element
/// orbit, report the two fibre sizes and whether they balance.
///
/// On finite structures the verdict is always true (orbit double counting
/// forces balance), so a false verdict from this function indicates a bug
/// in the orbit engine rather than a property of the input.
pub fn check_unimodular(s: &Structure, max_params: usize) -> UnimodReport {
    let n = s.universe();
    let mut entries = Vec::new();
    let mut counterexample = None;
    for params in subsets_up_to(n, max_params) {
        let fixed: BTreeSet<usize> = params.iter().copied().collect();
        let gens = autgroup::automorphisms(s, &fixed);
        let elem_orbits = autgroup::element_orbits_under(n, gens.generators());
        let pair_orbits = autgroup::pair_orbits_under(n, gens.generators());
        for block in pair_orbits.blocks() {
            let (a, b) = pair_of_id(n, block[0]);
            if elem_orbits.block_of(a) != elem_orbits.block_of(b) {
                continue;
            }
            // Left fibre at a, right fibre at b; constant over the block
            // by invariance.
            let k = block
                .iter()
                .filter(|&&id| pair_of_id(n, id).0 == a)
                .count();
            let l = block
                .iter()
                .filter(|&&id| pair_of_id(n, id).1 == b)
                .count();
            let balanced = k == l;
            if !balanced && counterexample.is_none() {
                counterexample = Some(UnimodCounterexample {
                    params: params.clone(),
                    a,
                    b,
                    m_a_over_b: l,
                    m_b_over_a: k,
                });
            }
            entries.push(UnimodEntry {
                params: params.clone(),
                orbit_repr: (a, b),
                orbit_size: block.len(),
                k,
                l,
                balanced,
            });
        }
    }
    let verdict = counterexample.is_none();
    UnimodReport {
        structure: s.name().to_string(),
        max_params,
        entries,
        verdict,
        counterexample,
    }
}

/// One complete correspondence on an orbit, with its fibre sizes.
#[derive(Debug, Clone, Serialize)]
pub struct MeasurableEntry {
    pub orbit_repr: (usize, usize),
    pub k: usize,
    pub l: usize,
    pub balanced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasurableReport {
    pub params: Vec<usize>,
    pub orbit: Vec<usize>,
    pub entries: Vec<MeasurableEntry>,
    pub verdict: bool,
}

/// Measurability of the orbit of `element` over `fixed`: every pair orbit
/// inside `p x p` is a complete correspondence and must be balanced.
/// Checking the complete ones suffices for all invariant correspondences
/// on `p`.
pub fn measurable(s: &Structure, fixed: &BTreeSet<usize>, element: usize) -> MeasurableReport {
    let n = s.universe();
    assert!(element < n, "element outside universe");
    let gens = autgroup::automorphisms(s, fixed);
    let elem_orbits = autgroup::element_orbits_under(n, gens.generators());
    let pair_orbits = autgroup::pair_orbits_under(n, gens.generators());
    let p = elem_orbits.block_of(element);
    let orbit: Vec<usize> = elem_orbits.block(p).to_vec();
    let mut entries = Vec::new();
    for block in pair_orbits.blocks() {
        let (a, b) = pair_of_id(n, block[0]);
        if elem_orbits.block_of(a) != p || elem_orbits.block_of(b) != p {
            continue;
        }
        let k = block.iter().filter(|&&id| pair_of_id(n, id).0 == a).count();
        let l = block.iter().filter(|&&id| pair_of_id(n, id).1 == b).count();
        entries.push(MeasurableEntry { orbit_repr: (a, b), k, l, balanced: k == l });
    }
    let verdict = entries.iter().all(|e| e.balanced);
    MeasurableReport { params: fixed.iter().copied().collect(), orbit, entries, verdict }
}

/// The common ratio `m_p^q` of all complete correspondences between the
/// orbits of `p_elem` and `q_elem`; on finite structures it is exactly
/// `|q|/|p|`, and any disagreement between pair orbits is an internal
/// inconsistency.
pub fn commensurability(
    s: &Structure,
    fixed: &BTreeSet<usize>,
    p_elem: usize,
    q_elem: usize,
) -> Result<Ratio, UnimodError> {
    let n = s.universe();
    if p_elem >= n {
        return Err(UnimodError::ElementOutOfRange(p_elem));
    }
    if q_elem >= n {
        return Err(UnimodError::ElementOutOfRange(q_elem));
    }
    let gens = autgroup::automorphisms(s, fixed);
    let elem_orbits = autgroup::element_orbits_under(n, gens.generators());
    let pair_orbits = autgroup::pair_orbits_under(n, gens.generators());
    let p = elem_orbits.block_of(p_elem);
    let q = elem_orbits.block_of(q_elem);
    let expected = Ratio::of_counts(elem_orbits.block(q).len(), elem_orbits.block(p).len());
    let mut seen_any = false;
    for block in pair_orbits.blocks() {
        let (a, b) = pair_of_id(n, block[0]);
        if elem_orbits.block_of(a) != p || elem_orbits.block_of(b) != q {
            continue;
        }
        seen_any = true;
        let k = block.iter().filter(|&&id| pair_of_id(n, id).0 == a).count();
        let l = block.iter().filter(|&&id| pair_of_id(n, id).1 == b).count();
        let m = Ratio::of_counts(k, l);
        if m != expected {
            return Err(UnimodError::Internal(format!(
                "pair orbit at ({a},{b}) has ratio {m}, expected {expected}"
            )));
        }
    }
    if !seen_any {
        // p x q itself is invariant and nonempty, so some orbit meets it.
        return Err(UnimodError::Internal(format!(
            "no pair orbit found between the orbits of {p_elem} and {q_elem}"
        )));
    }
    Ok(expected)
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitivityReport {
    pub m_pq: Ratio,
    pub m_qr: Ratio,
    pub m_pr: Ratio,
}

/// Verify `m_p^q * m_q^r = m_p^r` exactly; a violation is an internal
/// inconsistency.
pub fn transitivity_check(
    s: &Structure,
    fixed: &BTreeSet<usize>,
    p_elem: usize,
    q_elem: usize,
    r_elem: usize,
) -> Result<TransitivityReport, UnimodError> {
    let m_pq = commensurability(s, fixed, p_elem, q_elem)?;
    let m_qr = commensurability(s, fixed, q_elem, r_elem)?;
    let m_pr = commensurability(s, fixed, p_elem, r_elem)?;
    if m_pq * m_qr != m_pr {
        return Err(UnimodError::Internal(format!(
            "transitivity violated: {m_pq} * {m_qr} != {m_pr}"
        )));
    }
    Ok(TransitivityReport { m_pq, m_qr, m_pr })
}

/// One nonzero block of a block ledger.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlockEntry {
    pub k: usize,
    pub l: usize,
    pub pairs: usize,
}

/// The arithmetic of a uniform invariant correspondence decomposed over
/// the orbits of its carrier: per-orbit commensurability constants `m_i`
/// (relative to the first orbit), per-block fibre sizes, and the three
/// verified identities that force `k_C = l_C`:
///
/// * row and column sums: `sum_j k_{C_ij} = k_C`, `sum_i l_{C_ij} = l_C`;
/// * cross identities: `m_j * l_{C_ij} = m_i * k_{C_ij}`;
/// * `mu * k_C = mu * l_C` with `mu = sum_i m_i`.
#[derive(Debug, Clone, Serialize)]
pub struct BlockLedger {
    /// Least elements of the carrier orbits, in order.
    pub orbit_reprs: Vec<usize>,
    pub orbit_sizes: Vec<usize>,
    /// `m_i = m_{p_1}^{p_i} = |p_i| / |p_1|`.
    pub m: Vec<Ratio>,
    /// Blocks indexed by positions into `orbit_reprs`; empty blocks are
    /// omitted and count as zero.
    pub blocks: BTreeMap<(usize, usize), BlockEntry>,
    pub k_c: usize,
    pub l_c: usize,
    pub mu: Ratio,
}

/// Decompose a uniform invariant correspondence whose carrier is a union
/// of orbits into blocks `C_ij = C /\ (p_i x p_j)` and verify the ledger
/// identities exactly.
pub fn block_ledger(
    s: &Structure,
    fixed: &BTreeSet<usize>,
    c: &Correspondence,
) -> Result<BlockLedger, UnimodError> {
    let n = s.universe();
    let mut atoms: BTreeSet<usize> = BTreeSet::new();
    for x in c.domain() {
        atoms.insert(x.as_atom().ok_or(CorrError::NotAtomic)?);
    }
    let mut cod_atoms: BTreeSet<usize> = BTreeSet::new();
    for y in c.codomain() {
        cod_atoms.insert(y.as_atom().ok_or(CorrError::NotAtomic)?);
    }
    if atoms != cod_atoms {
        return Err(UnimodError::CarrierMismatch);
    }
    if let Some(&bad) = atoms.iter().find(|&&e| e >= n) {
        return Err(UnimodError::ElementOutOfRange(bad));
    }

    let (k_c, l_c) = corrcalc::is_uniform(c).ok_or_else(|| {
        UnimodError::Corr(corrcalc::ratio(c).expect_err("non-uniform"))
    })?;

    let gens = autgroup::automorphisms(s, fixed);
    let elem_orbits = autgroup::element_orbits_under(n, gens.generators());
    // Carrier must be a union of whole orbits.
    for &e in &atoms {
        if !elem_orbits.block(elem_orbits.block_of(e)).iter().all(|x| atoms.contains(x)) {
            return Err(UnimodError::NotOrbitUnion(e));
        }
    }
    let mut orbit_ids: Vec<usize> = atoms.iter().map(|&e| elem_orbits.block_of(e)).collect();
    orbit_ids.sort_unstable();
    orbit_ids.dedup();

    // Invariance of the pair set.
    let pair_set: BTreeSet<(usize, usize)> = c
        .pairs()
        .iter()
        .map(|(x, y)| (x.as_atom().unwrap(), y.as_atom().unwrap()))
        .collect();
    for g in gens.generators() {
        for &(x, y) in &pair_set {
            if !pair_set.contains(&(g[x], g[y])) {
                return Err(UnimodError::Corr(CorrError::NotInvariant(
                    corrcalc::Elem::atom(x),
                    corrcalc::Elem::atom(y),
                )));
            }
        }
    }

    let orbit_reprs: Vec<usize> = orbit_ids.iter().map(|&b| elem_orbits.block(b)[0]).collect();
    let orbit_sizes: Vec<usize> = orbit_ids.iter().map(|&b| elem_orbits.block(b).len()).collect();
    let m: Vec<Ratio> =
        orbit_sizes.iter().map(|&sz| Ratio::of_counts(sz, orbit_sizes[0])).collect();

    // Per-block fibre sizes; invariance makes them constant, which is
    // asserted while counting.
    let mut blocks: BTreeMap<(usize, usize), BlockEntry> = BTreeMap::new();
    for (i, &bi) in orbit_ids.iter().enumerate() {
        for (j, &bj) in orbit_ids.iter().enumerate() {
            let block_pairs: Vec<(usize, usize)> = pair_set
                .iter()
                .filter(|&&(x, y)| {
                    elem_orbits.block_of(x) == bi && elem_orbits.block_of(y) == bj
                })
                .copied()
                .collect();
            if block_pairs.is_empty() {
                continue;
            }
            let pi = elem_orbits.block(bi);
            let pj = elem_orbits.block(bj);
            let k = block_pairs.iter().filter(|&&(x, _)| x == pi[0]).count();
            let l = block_pairs.iter().filter(|&&(_, y)| y == pj[0]).count();
            for &x in pi {
                let kx = block_pairs.iter().filter(|&&(x2, _)| x2 == x).count();
                if kx != k {
                    return Err(UnimodError::Internal(format!(
                        "block ({i},{j}) left fibre varies: {kx} at {x}, {k} at {}",
                        pi[0]
                    )));
                }
            }
            for &y in pj {
                let ly = block_pairs.iter().filter(|&&(_, y2)| y2 == y).count();
                if ly != l {
                    return Err(UnimodError::Internal(format!(
                        "block ({i},{j}) right fibre varies: {ly} at {y}, {l} at {}",
                        pj[0]
                    )));
                }
            }
            blocks.insert((i, j), BlockEntry { k, l, pairs: block_pairs.len() });
        }
    }

    // Row and column sums.
    for i in 0..orbit_ids.len() {
        let row: usize = (0..orbit_ids.len())
            .map(|j| blocks.get(&(i, j)).map_or(0, |b| b.k))
            .sum();
        if row != k_c {
            return Err(UnimodError::Internal(format!(
                "row {i} sums to {row}, expected k_C = {k_c}"
            )));
        }
        let col: usize = (0..orbit_ids.len())
            .map(|j| blocks.get(&(j, i)).map_or(0, |b| b.l))
            .sum();
        if col != l_c {
            return Err(UnimodError::Internal(format!(
                "column {i} sums to {col}, expected l_C = {l_c}"
            )));
        }
    }
    // Cross identities on nonzero blocks.
    for (&(i, j), b) in &blocks {
        if m[j].times(b.l) != m[i].times(b.k) {
            return Err(UnimodError::Internal(format!(
                "cross identity violated on block ({i},{j})"
            )));
        }
    }
    // mu * k_C = mu * l_C, hence k_C = l_C.
    let mu = m.iter().skip(1).fold(m[0], |acc, &r| acc + r);
    if mu.times(k_c) != mu.times(l_c) || k_c != l_c {
        return Err(UnimodError::Internal(format!(
            "block ledger does not balance: k_C = {k_c}, l_C = {l_c}"
        )));
    }

    Ok(BlockLedger { orbit_reprs, orbit_sizes, m, blocks, k_c, l_c, mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrcalc::Elem;
    use crate::finstruct::{gen_levels, gen_shift, gen_tree};

    fn star() -> Structure {
        let mut s = Structure::new("star", 3);
        s.add_relation("E", 2, [vec![0, 1], vec![0, 2]]).unwrap();
        s
    }

    fn three_cycle() -> Structure {
        let mut s = Structure::new("c3", 3);
        s.add_relation("E", 2, [vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
        s
    }

    #[test]
    fn multiplicities_examples() {
        let s = star();
        assert_eq!(multiplicities(&s, &BTreeSet::new(), 1, 2), (1, 1));
        assert_eq!(multiplicities(&s, &BTreeSet::new(), 1, 1), (1, 1));
        let t = gen_tree(3);
        assert_eq!(multiplicities(&t, &BTreeSet::new(), 1, 2), (1, 1));
    }

    #[test]
    fn subsets_are_complete_and_ordered() {
        let subs = subsets_up_to(4, 2);
        assert_eq!(subs.len(), 1 + 4 + 6);
        assert_eq!(subs[0], Vec::<usize>::new());
        assert_eq!(subs[1], vec![0]);
        assert!(subs.contains(&vec![2, 3]));
    }

    #[test]
    fn check_unimodular_trivial_and_generated() {
        let one = Structure::new("pt", 1);
        assert!(check_unimodular(&one, 1).verdict);

        for s in [gen_tree(3), gen_levels(3), gen_shift(4, 1).unwrap(), star(), three_cycle()] {
            let report = check_unimodular(&s, 1);
            assert!(report.verdict, "structure {}", s.name());
            assert!(report.counterexample.is_none());
            assert!(report.entries.iter().all(|e| e.balanced));
        }
    }

    #[test]
    fn measurable_examples() {
        let one = Structure::new("pt", 1);
        let r = measurable(&one, &BTreeSet::new(), 0);
        assert!(r.verdict);
        assert_eq!(r.entries.len(), 1);
        assert_eq!((r.entries[0].k, r.entries[0].l), (1, 1));

        let s = three_cycle();
        let r = measurable(&s, &BTreeSet::new(), 0);
        assert_eq!(r.entries.len(), 3);
        assert!(r.entries.iter().all(|e| e.k == 1 && e.l == 1));

        let s = gen_shift(4, 1).unwrap();
        for e in 0..s.universe() {
            let r = measurable(&s, &BTreeSet::new(), e);
            assert!(r.verdict);
        }
    }

    #[test]
    fn commensurability_examples() {
        let s = star();
        let none = BTreeSet::new();
        assert!(commensurability(&s, &none, 1, 1).unwrap().is_one());
        assert_eq!(commensurability(&s, &none, 0, 1).unwrap(), Ratio::new(2, 1));

        let s = gen_levels(3);
        let r2 = s.relation("R2").unwrap().tuples.iter().next().unwrap()[0];
        let r3 = s.relation("R3").unwrap().tuples.iter().next().unwrap()[0];
        assert_eq!(commensurability(&s, &none, r2, r3).unwrap(), Ratio::new(1, 2));
    }

    #[test]
    fn transitivity_examples() {
        let none = BTreeSet::new();
        // Star with an isolated fourth element: orbits {0}, {1,2}, {3}.
        let mut s = Structure::new("star_plus", 4);
        s.add_relation("E", 2, [vec![0, 1], vec![0, 2]]).unwrap();
        let rep = transitivity_check(&s, &none, 0, 1, 3).unwrap();
        assert_eq!(rep.m_pq, Ratio::new(2, 1));
        assert_eq!(rep.m_qr, Ratio::new(1, 2));
        assert!(rep.m_pr.is_one());

        let s = gen_levels(4);
        let lvl = |i: usize| s.relation(&format!("R{i}")).unwrap().tuples.iter().next().unwrap()[0];
        let rep = transitivity_check(&s, &none, lvl(4), lvl(3), lvl(2)).unwrap();
        assert_eq!(rep.m_pq * rep.m_qr, rep.m_pr);

        let rep = transitivity_check(&s, &none, lvl(2), lvl(2), lvl(2)).unwrap();
        assert!(rep.m_pr.is_one());
    }

    fn identity_on(atoms: &BTreeSet<usize>) -> Correspondence {
        let carrier: BTreeSet<Elem> = atoms.iter().map(|&e| Elem::atom(e)).collect();
        Correspondence::new(
            carrier.clone(),
            carrier,
            atoms.iter().map(|&e| (Elem::atom(e), Elem::atom(e))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn block_ledger_identity_single_orbit() {
        let s = three_cycle();
        let all: BTreeSet<usize> = (0..3).collect();
        let ledger = block_ledger(&s, &BTreeSet::new(), &identity_on(&all)).unwrap();
        assert_eq!(ledger.orbit_reprs, vec![0]);
        assert_eq!((ledger.k_c, ledger.l_c), (1, 1));
        assert!(ledger.mu.is_one());
    }

    #[test]
    fn block_ledger_on_shift_relation() {
        let s = gen_shift(4, 1).unwrap();
        let f = Correspondence::from_relation(&s, "F").unwrap();
        let ledger = block_ledger(&s, &BTreeSet::new(), &f).unwrap();
        assert_eq!((ledger.k_c, ledger.l_c), (2, 2));
        let row: usize = (0..ledger.orbit_reprs.len())
            .map(|j| ledger.blocks.get(&(0, j)).map_or(0, |b| b.k))
            .sum();
        assert_eq!(row, 2);
    }

    #[test]
    fn block_ledger_on_cycle_union() {
        let s = three_cycle();
        let e = Correspondence::from_relation(&s, "E").unwrap();
        let rev = corrcalc::inverse(&e);
        let pairs = e.pairs().union(rev.pairs()).cloned().collect();
        let union =
            Correspondence::new(e.domain().clone(), e.codomain().clone(), pairs).unwrap();
        let ledger = block_ledger(&s, &BTreeSet::new(), &union).unwrap();
        assert_eq!((ledger.k_c, ledger.l_c), (2, 2));
        assert_eq!(ledger.orbit_reprs.len(), 1);
    }

    #[test]
    fn block_ledger_rejects_non_uniform() {
        let s = gen_tree(3);
        let c = Correspondence::from_relation(&s, "S").unwrap();
        assert!(block_ledger(&s, &BTreeSet::new(), &c).is_err());
    }

    #[test]
    fn block_ledger_rejects_partial_orbit_carrier() {
        let s = star();
        // Carrier {0,1} cuts the orbit {1,2} in half.
        let atoms: BTreeSet<usize> = [0, 1].into_iter().collect();
        let c = identity_on(&atoms);
        assert!(matches!(
            block_ledger(&s, &BTreeSet::new(), &c),
            Err(UnimodError::NotOrbitUnion(_))
        ));
    }
}
