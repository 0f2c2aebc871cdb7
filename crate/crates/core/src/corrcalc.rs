//! The correspondence calculus: fibre analysis, uniformity, exact ratios,
//! inverse, composition with its multiplicity ledger, orbit
//! decomposition, products, graphs and coordinate projections.
//!
//! A correspondence is a nonempty set of pairs inside an explicit
//! rectangle `X x Y`; on finite carriers all fibres are automatically
//! finite. Elements are either atoms (structure elements) or explicit
//! ordered pairs, so product correspondences are first-class values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::autgroup::{pair_id, OrbitPartition};
use crate::finstruct::Structure;

/// An element of a correspondence carrier: an atom of a structure
/// universe, or an explicit ordered pair. The derived order (atoms first,
/// then pairs lexicographically) is the canonical order used everywhere.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Elem {
    Atom(usize),
    Pair(Box<Elem>, Box<Elem>),
}

impl Elem {
    pub fn atom(i: usize) -> Elem {
        Elem::Atom(i)
    }

    pub fn pair(a: Elem, b: Elem) -> Elem {
        Elem::Pair(Box::new(a), Box::new(b))
    }

    /// The atom index, if this element is an atom.
    pub fn as_atom(&self) -> Option<usize> {
        match self {
            Elem::Atom(i) => Some(*i),
            Elem::Pair(..) => None,
        }
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Elem::Atom(i) => write!(f, "{i}"),
            Elem::Pair(a, b) => write!(f, "({a},{b})"),
        }
    }
}

impl Serialize for Elem {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// An exact positive rational, always fully reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ratio {
    num: u64,
    den: u64,
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    /// Reduced `num/den`; both sides must be positive.
    pub fn new(num: u64, den: u64) -> Ratio {
        assert!(num > 0 && den > 0, "ratios are positive");
        let g = gcd(num as u128, den as u128) as u64;
        Ratio { num: num / g, den: den / g }
    }

    pub fn of_counts(k: usize, l: usize) -> Ratio {
        Ratio::new(k as u64, l as u64)
    }

    pub fn one() -> Ratio {
        Ratio { num: 1, den: 1 }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn inv(&self) -> Ratio {
        Ratio { num: self.den, den: self.num }
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }

    /// Multiply by a positive integer count.
    pub fn times(&self, count: usize) -> Ratio {
        assert!(count > 0, "scaling a ratio by zero");
        let num = self.num as u128 * count as u128;
        let g = gcd(num, self.den as u128);
        Ratio { num: (num / g) as u64, den: (self.den as u128 / g) as u64 }
    }
}

impl std::ops::Mul for Ratio {
    type Output = Ratio;
    fn mul(self, rhs: Ratio) -> Ratio {
        let num = self.num as u128 * rhs.num as u128;
        let den = self.den as u128 * rhs.den as u128;
        let g = gcd(num, den);
        Ratio { num: (num / g) as u64, den: (den / g) as u64 }
    }
}

impl std::ops::Add for Ratio {
    type Output = Ratio;
    fn add(self, rhs: Ratio) -> Ratio {
        let num = self.num as u128 * rhs.den as u128 + rhs.num as u128 * self.den as u128;
        let den = self.den as u128 * rhs.den as u128;
        let g = gcd(num, den);
        Ratio { num: (num / g) as u64, den: (den / g) as u64 }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorrError {
    #[error("a correspondence must contain at least one pair")]
    Empty,
    #[error("pair ({0},{1}) lies outside the declared rectangle")]
    PairOutsideRectangle(Elem, Elem),
    #[error("not uniform: {side:?} fibre of {witness} has size {size}, expected {expected}")]
    NotUniform {
        side: Side,
        witness: Elem,
        size: usize,
        expected: usize,
    },
    #[error("codomain of the first correspondence differs from the domain of the second")]
    ComposeMismatch,
    #[error("composite correspondence is empty")]
    EmptyComposite,
    #[error("graph correspondence is empty: the two maps have disjoint images")]
    EmptyGraph,
    #[error("the two function tables do not share a codomain")]
    CodomainMismatch,
    #[error("operation requires atomic elements of a structure universe")]
    NotAtomic,
    #[error("domain is not a single orbit of the automorphism group")]
    DomainNotSingleOrbit,
    #[error("pair set is not invariant: a generator moves ({0},{1}) outside the set")]
    NotInvariant(Elem, Elem),
    #[error("witness count inside a component is not constant: {got} at ({x},{z}), {expected} elsewhere (partition is not orbit-fine)")]
    WitnessCountNotConstant {
        x: Elem,
        z: Elem,
        expected: usize,
        got: usize,
    },
    #[error("function table is not total on its declared domain")]
    PartialTable,
    #[error("internal inconsistency (library bug): {0}")]
    Internal(String),
}

/// A binary correspondence inside an explicit rectangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    domain: BTreeSet<Elem>,
    codomain: BTreeSet<Elem>,
    pairs: BTreeSet<(Elem, Elem)>,
}

impl Correspondence {
    pub fn new(
        domain: BTreeSet<Elem>,
        codomain: BTreeSet<Elem>,
        pairs: BTreeSet<(Elem, Elem)>,
    ) -> Result<Correspondence, CorrError> {
        if pairs.is_empty() {
            return Err(CorrError::Empty);
        }
        for (x, y) in &pairs {
            if !domain.contains(x) || !codomain.contains(y) {
                return Err(CorrError::PairOutsideRectangle(x.clone(), y.clone()));
            }
        }
        Ok(Correspondence { domain, codomain, pairs })
    }

    /// A binary structure relation as a correspondence on the full
    /// universe.
    pub fn from_relation(s: &Structure, relation: &str) -> Result<Correspondence, CorrError> {
        let r = s
            .relation(relation)
            .ok_or_else(|| CorrError::Internal(format!("no relation `{relation}`")))?;
        if r.arity != 2 {
            return Err(CorrError::Internal(format!("relation `{relation}` is not binary")));
        }
        let universe: BTreeSet<Elem> = (0..s.universe()).map(Elem::atom).collect();
        let pairs = r
            .tuples
            .iter()
            .map(|t| (Elem::atom(t[0]), Elem::atom(t[1])))
            .collect();
        Correspondence::new(universe.clone(), universe, pairs)
    }

    pub fn domain(&self) -> &BTreeSet<Elem> {
        &self.domain
    }

    pub fn codomain(&self) -> &BTreeSet<Elem> {
        &self.codomain
    }

    pub fn pairs(&self) -> &BTreeSet<(Elem, Elem)> {
        &self.pairs
    }

    pub fn contains(&self, x: &Elem, y: &Elem) -> bool {
        self.pairs.contains(&(x.clone(), y.clone()))
    }
}

/// Exact per-element fibre counts on both sides, with histograms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FibreSummary {
    pub left: BTreeMap<Elem, usize>,
    pub right: BTreeMap<Elem, usize>,
    pub left_hist: BTreeMap<usize, usize>,
    pub right_hist: BTreeMap<usize, usize>,
}

/// Per-element fibre counts; domain or codomain elements hit by no pair
/// report 0.
pub fn fibres(c: &Correspondence) -> FibreSummary {
    let mut left: BTreeMap<Elem, usize> = c.domain.iter().map(|x| (x.clone(), 0)).collect();
    let mut right: BTreeMap<Elem, usize> = c.codomain.iter().map(|y| (y.clone(), 0)).collect();
    for (x, y) in &c.pairs {
        *left.get_mut(x).expect("pair in rectangle") += 1;
        *right.get_mut(y).expect("pair in rectangle") += 1;
    }
    let mut left_hist = BTreeMap::new();
    for &v in left.values() {
        *left_hist.entry(v).or_insert(0) += 1;
    }
    let mut right_hist = BTreeMap::new();
    for &v in right.values() {
        *right_hist.entry(v).or_insert(0) += 1;
    }
    debug_assert_eq!(left.values().sum::<usize>(), c.pairs.len());
    debug_assert_eq!(right.values().sum::<usize>(), c.pairs.len());
    FibreSummary { left, right, left_hist, right_hist }
}

/// `Some((k, l))` iff every left fibre has size `k >= 1` and every right
/// fibre size `l >= 1`.
pub fn is_uniform(c: &Correspondence) -> Option<(usize, usize)> {
    let f = fibres(c);
    let k = *f.left.values().next()?;
    if k == 0 || f.left.values().any(|&v| v != k) {
        return None;
    }
    let l = *f.right.values().next()?;
    if l == 0 || f.right.values().any(|&v| v != l) {
        return None;
    }
    Some((k, l))
}

fn not_uniform_error(c: &Correspondence) -> CorrError {
    let f = fibres(c);
    let k = *f.left.values().next().expect("nonempty domain");
    for (x, &v) in &f.left {
        if v != k {
            return CorrError::NotUniform {
                side: Side::Left,
                witness: x.clone(),
                size: v,
                expected: k,
            };
        }
    }
    if k == 0 {
        let x = f.left.keys().next().expect("nonempty").clone();
        return CorrError::NotUniform { side: Side::Left, witness: x, size: 0, expected: 1 };
    }
    let l = *f.right.values().next().expect("nonempty codomain");
    for (y, &v) in &f.right {
        if v != l {
            return CorrError::NotUniform {
                side: Side::Right,
                witness: y.clone(),
                size: v,
                expected: l,
            };
        }
    }
    if l == 0 {
        let y = f.right.keys().next().expect("nonempty").clone();
        return CorrError::NotUniform { side: Side::Right, witness: y, size: 0, expected: 1 };
    }
    CorrError::Internal("uniform correspondence treated as non-uniform".into())
}

/// The exact ratio `k/l` of a uniform correspondence; the correspondence
/// is balanced iff the result is 1. Non-uniform input is rejected with an
/// offending element.
pub fn ratio(c: &Correspondence) -> Result<Ratio, CorrError> {
    match is_uniform(c) {
        Some((k, l)) => Ok(Ratio::of_counts(k, l)),
        None => Err(not_uniform_error(c)),
    }
}

/// Transpose: pairs flipped, domain and codomain swapped. An involution;
/// a uniform `(k,l)` correspondence inverts to a uniform `(l,k)` one.
pub fn inverse(c: &Correspondence) -> Correspondence {
    Correspondence {
        domain: c.codomain.clone(),
        codomain: c.domain.clone(),
        pairs: c.pairs.iter().map(|(x, y)| (y.clone(), x.clone())).collect(),
    }
}

/// Relational composition of `c: X <-> Y` then `d: Y <-> Z`.
pub fn compose(c: &Correspondence, d: &Correspondence) -> Result<Correspondence, CorrError> {
    if c.codomain != d.domain {
        return Err(CorrError::ComposeMismatch);
    }
    let mut successors: BTreeMap<&Elem, Vec<&Elem>> = BTreeMap::new();
    for (y, z) in &d.pairs {
        successors.entry(y).or_default().push(z);
    }
    let mut pairs = BTreeSet::new();
    for (x, y) in &c.pairs {
        if let Some(zs) = successors.get(y) {
            for z in zs {
                pairs.insert((x.clone(), (*z).clone()));
            }
        }
    }
    if pairs.is_empty() {
        return Err(CorrError::EmptyComposite);
    }
    Correspondence::new(c.domain.clone(), d.codomain.clone(), pairs)
}

/// One component of a composition ledger: a pair-orbit block of the
/// composite together with its constant middle-witness multiplicity.
#[derive(Debug, Clone)]
pub struct LedgerComponent {
    pub component: Correspondence,
    pub multiplicity: usize,
    pub k: usize,
    pub l: usize,
}

/// The multiplicity ledger of a composition: components `D_i` with
/// witness multiplicities `r_i` satisfying
/// `k_C * k_C' = sum_i r_i * k_{D_i}` and
/// `l_C * l_C' = sum_i r_i * l_{D_i}` exactly.
#[derive(Debug, Clone)]
pub struct CompositionLedger {
    pub components: Vec<LedgerComponent>,
    pub k_c: usize,
    pub l_c: usize,
    pub k_cp: usize,
    pub l_cp: usize,
}

impl CompositionLedger {
    /// `(k_C * k_C', sum r_i * k_{D_i})`.
    pub fn left_identity(&self) -> (usize, usize) {
        let sum = self.components.iter().map(|c| c.multiplicity * c.k).sum();
        (self.k_c * self.k_cp, sum)
    }

    /// `(l_C * l_C', sum r_i * l_{D_i})`.
    pub fn right_identity(&self) -> (usize, usize) {
        let sum = self.components.iter().map(|c| c.multiplicity * c.l).sum();
        (self.l_c * self.l_cp, sum)
    }
}

/// Compose two uniform correspondences over atoms and account for every
/// middle witness, grouping the composite by the supplied pair-orbit
/// partition. The partition is an argument (rather than recomputed) so
/// the same ledger can be run against an oracle partition.
pub fn compose_ledger(
    c: &Correspondence,
    d: &Correspondence,
    universe: usize,
    pairs: &OrbitPartition,
) -> Result<CompositionLedger, CorrError> {
    assert_eq!(pairs.degree(), universe * universe, "partition is not over universe pairs");
    let (k_c, l_c) = is_uniform(c).ok_or_else(|| not_uniform_error(c))?;
    let (k_cp, l_cp) = is_uniform(d).ok_or_else(|| not_uniform_error(d))?;
    let composite = compose(c, d)?;

    // Witness counts r(x, z) = |{y : (x,y) in C, (y,z) in C'}|.
    let mut successors: BTreeMap<&Elem, Vec<&Elem>> = BTreeMap::new();
    for (y, z) in &d.pairs {
        successors.entry(y).or_default().push(z);
    }
    let mut witness: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (x, y) in &c.pairs {
        let xi = x.as_atom().ok_or(CorrError::NotAtomic)?;
        if let Some(zs) = successors.get(y) {
            for z in zs {
                let zi = z.as_atom().ok_or(CorrError::NotAtomic)?;
                *witness.entry((xi, zi)).or_insert(0) += 1;
            }
        }
    }

    // Group the composite by partition block and demand one multiplicity
    // per block.
    let mut by_block: BTreeMap<usize, BTreeSet<(Elem, Elem)>> = BTreeMap::new();
    let mut block_witness: BTreeMap<usize, usize> = BTreeMap::new();
    for (x, z) in composite.pairs() {
        let (xi, zi) = (
            x.as_atom().ok_or(CorrError::NotAtomic)?,
            z.as_atom().ok_or(CorrError::NotAtomic)?,
        );
        let b = pairs.block_of(pair_id(universe, xi, zi));
        let r = witness[&(xi, zi)];
        match block_witness.get(&b) {
            None => {
                block_witness.insert(b, r);
            }
            Some(&expected) if expected != r => {
                return Err(CorrError::WitnessCountNotConstant {
                    x: x.clone(),
                    z: z.clone(),
                    expected,
                    got: r,
                });
            }
            Some(_) => {}
        }
        by_block.entry(b).or_default().insert((x.clone(), z.clone()));
    }

    let mut components = Vec::new();
    for (b, block_pairs) in by_block {
        let comp = Correspondence::new(
            composite.domain().clone(),
            composite.codomain().clone(),
            block_pairs,
        )?;
        let (k, l) = is_uniform(&comp).ok_or_else(|| {
            CorrError::Internal("composition component is not uniform".into())
        })?;
        components.push(LedgerComponent { component: comp, multiplicity: block_witness[&b], k, l });
    }

    let ledger = CompositionLedger { components, k_c, l_c, k_cp, l_cp };
    let (lhs, rhs) = ledger.left_identity();
    if lhs != rhs {
        return Err(CorrError::Internal(format!(
            "composition ledger k-identity violated: {lhs} != {rhs}"
        )));
    }
    let (lhs, rhs) = ledger.right_identity();
    if lhs != rhs {
        return Err(CorrError::Internal(format!(
            "composition ledger l-identity violated: {lhs} != {rhs}"
        )));
    }
    Ok(ledger)
}

/// One complete component of an invariant correspondence, with its
/// (always defined) fibre sizes.
#[derive(Debug, Clone)]
pub struct CompleteComponent {
    pub corr: Correspondence,
    pub k: usize,
    pub l: usize,
}

/// Split an `Aut(S/A)`-invariant correspondence whose domain is a single
/// orbit into its complete components (the pair-orbit blocks). The
/// components partition the pair set, each is uniform between the domain
/// orbit and the orbit of its second coordinates, and there are at most
/// `min_x |C_x|` of them.
pub fn decompose_complete(
    s: &Structure,
    fixed: &BTreeSet<usize>,
    c: &Correspondence,
) -> Result<Vec<CompleteComponent>, CorrError> {
    let n = s.universe();
    let mut pair_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (x, y) in &c.pairs {
        pair_set.insert((
            x.as_atom().ok_or(CorrError::NotAtomic)?,
            y.as_atom().ok_or(CorrError::NotAtomic)?,
        ));
    }
    let domain_atoms: BTreeSet<usize> = c
        .domain
        .iter()
        .map(|x| x.as_atom().ok_or(CorrError::NotAtomic))
        .collect::<Result<_, _>>()?;

    let gens = crate::autgroup::automorphisms(s, fixed);
    let elem_orbits = crate::autgroup::element_orbits_under(n, gens.generators());

    // The domain must be exactly one orbit.
    let first = *domain_atoms.iter().next().ok_or(CorrError::Empty)?;
    let orbit: BTreeSet<usize> =
        elem_orbits.block(elem_orbits.block_of(first)).iter().copied().collect();
    if domain_atoms != orbit {
        return Err(CorrError::DomainNotSingleOrbit);
    }

    // Invariance of the pair set under the computed generators.
    for g in gens.generators() {
        for &(x, y) in &pair_set {
            if !pair_set.contains(&(g[x], g[y])) {
                return Err(CorrError::NotInvariant(Elem::atom(x), Elem::atom(y)));
            }
        }
    }

    let pair_part = crate::autgroup::pair_orbits_under(n, gens.generators());
    let mut by_block: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for &(x, y) in &pair_set {
        by_block.entry(pair_part.block_of(pair_id(n, x, y))).or_default().insert((x, y));
    }

    let mut out = Vec::new();
    for (_, block) in by_block {
        let second: BTreeSet<Elem> = block.iter().map(|&(_, y)| Elem::atom(y)).collect();
        let corr = Correspondence::new(
            c.domain.clone(),
            second,
            block.iter().map(|&(x, y)| (Elem::atom(x), Elem::atom(y))).collect(),
        )?;
        let (k, l) = is_uniform(&corr)
            .ok_or_else(|| CorrError::Internal("complete component is not uniform".into()))?;
        out.push(CompleteComponent { corr, k, l });
    }

    let min_fibre = fibres(c).left.values().copied().min().unwrap_or(0);
    if out.len() > min_fibre {
        return Err(CorrError::Internal(format!(
            "{} components exceed the minimum fibre size {min_fibre}",
            out.len()
        )));
    }
    Ok(out)
}

/// The product of two uniform correspondences `C1: X1 <-> Y1` and
/// `C2: X2 <-> Y2`: the correspondence between `X1 x Y2` and `X2 x Y1`
/// relating `(a1,b1)` to `(a2,b2)` iff `a1 C1 b2` and `a2 C2 b1`. It is
/// uniform with `k = k1*l2` and `l = k2*l1`.
pub fn product(c1: &Correspondence, c2: &Correspondence) -> Result<Correspondence, CorrError> {
    is_uniform(c1).ok_or_else(|| not_uniform_error(c1))?;
    is_uniform(c2).ok_or_else(|| not_uniform_error(c2))?;
    let mut domain = BTreeSet::new();
    for a1 in &c1.domain {
        for b1 in &c2.codomain {
            domain.insert(Elem::pair(a1.clone(), b1.clone()));
        }
    }
    let mut codomain = BTreeSet::new();
    for a2 in &c2.domain {
        for b2 in &c1.codomain {
            codomain.insert(Elem::pair(a2.clone(), b2.clone()));
        }
    }
    let mut pairs = BTreeSet::new();
    for (a1, b2) in &c1.pairs {
        for (a2, b1) in &c2.pairs {
            pairs.insert((
                Elem::pair(a1.clone(), b1.clone()),
                Elem::pair(a2.clone(), b2.clone()),
            ));
        }
    }
    Correspondence::new(domain, codomain, pairs)
}

/// A total function table between explicit carriers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FnTable {
    domain: BTreeSet<Elem>,
    codomain: BTreeSet<Elem>,
    map: BTreeMap<Elem, Elem>,
}

impl FnTable {
    pub fn new(
        domain: BTreeSet<Elem>,
        codomain: BTreeSet<Elem>,
        map: BTreeMap<Elem, Elem>,
    ) -> Result<FnTable, CorrError> {
        for x in &domain {
            match map.get(x) {
                Some(y) if codomain.contains(y) => {}
                Some(y) => return Err(CorrError::PairOutsideRectangle(x.clone(), y.clone())),
                None => return Err(CorrError::PartialTable),
            }
        }
        if map.len() != domain.len() {
            return Err(CorrError::PartialTable);
        }
        Ok(FnTable { domain, codomain, map })
    }

    /// The table of a unary structure function restricted to explicit
    /// atom sets.
    pub fn from_function(
        s: &Structure,
        function: &str,
        domain: impl IntoIterator<Item = usize>,
        codomain: impl IntoIterator<Item = usize>,
    ) -> Result<FnTable, CorrError> {
        let f = s
            .function(function)
            .ok_or_else(|| CorrError::Internal(format!("no function `{function}`")))?;
        if f.arity != 1 {
            return Err(CorrError::Internal(format!("function `{function}` is not unary")));
        }
        let dom: BTreeSet<Elem> = domain.into_iter().map(Elem::atom).collect();
        let cod: BTreeSet<Elem> = codomain.into_iter().map(Elem::atom).collect();
        let mut map = BTreeMap::new();
        for x in &dom {
            let xi = x.as_atom().expect("atoms");
            map.insert(x.clone(), Elem::atom(f.table[&vec![xi]]));
        }
        FnTable::new(dom, cod, map)
    }

    pub fn domain(&self) -> &BTreeSet<Elem> {
        &self.domain
    }

    pub fn codomain(&self) -> &BTreeSet<Elem> {
        &self.codomain
    }

    pub fn apply(&self, x: &Elem) -> &Elem {
        &self.map[x]
    }

    pub fn entries(&self) -> &BTreeMap<Elem, Elem> {
        &self.map
    }

    /// Fibre sizes over every codomain element.
    pub fn fibre_sizes(&self) -> BTreeMap<Elem, usize> {
        let mut sizes: BTreeMap<Elem, usize> =
            self.codomain.iter().map(|y| (y.clone(), 0)).collect();
        for y in self.map.values() {
            *sizes.get_mut(y).expect("image in codomain") += 1;
        }
        sizes
    }

    /// `Some(k)` iff the table is surjective with every fibre of size
    /// exactly `k`.
    pub fn constant_fibre(&self) -> Option<usize> {
        let sizes = self.fibre_sizes();
        let k = *sizes.values().next()?;
        if k >= 1 && sizes.values().all(|&v| v == k) {
            Some(k)
        } else {
            None
        }
    }

    /// The graph of the table as a correspondence.
    pub fn graph(&self) -> Result<Correspondence, CorrError> {
        Correspondence::new(
            self.domain.clone(),
            self.codomain.clone(),
            self.map.iter().map(|(x, y)| (x.clone(), y.clone())).collect(),
        )
    }
}

/// The equalizer correspondence of two function tables into a shared
/// codomain: `(a, a')` related iff `f(a) = g(a')`. If `f` is `k`-to-1 and
/// `g` is `l`-to-1 (both surjective), the result is a uniform
/// `(l, k)`-correspondence.
pub fn graph_corr(f: &FnTable, g: &FnTable) -> Result<Correspondence, CorrError> {
    if f.codomain != g.codomain {
        return Err(CorrError::CodomainMismatch);
    }
    let mut by_image: BTreeMap<&Elem, Vec<&Elem>> = BTreeMap::new();
    for (x, y) in &g.map {
        by_image.entry(y).or_default().push(x);
    }
    let mut pairs = BTreeSet::new();
    for (a, y) in &f.map {
        if let Some(xs) = by_image.get(y) {
            for a2 in xs {
                pairs.insert((a.clone(), (*a2).clone()));
            }
        }
    }
    if pairs.is_empty() {
        return Err(CorrError::EmptyGraph);
    }
    Correspondence::new(f.domain.clone(), g.domain.clone(), pairs)
}

/// The two coordinate projections of a correspondence, as function tables
/// whose domain is the pair set itself. `p1` is `|C_x|`-to-1, `p2` is
/// `|C^y|`-to-1.
pub fn projections(c: &Correspondence) -> (FnTable, FnTable) {
    let carrier: BTreeSet<Elem> = c
        .pairs
        .iter()
        .map(|(x, y)| Elem::pair(x.clone(), y.clone()))
        .collect();
    let p1: BTreeMap<Elem, Elem> = c
        .pairs
        .iter()
        .map(|(x, y)| (Elem::pair(x.clone(), y.clone()), x.clone()))
        .collect();
    let p2: BTreeMap<Elem, Elem> = c
        .pairs
        .iter()
        .map(|(x, y)| (Elem::pair(x.clone(), y.clone()), y.clone()))
        .collect();
    let p1 = FnTable::new(carrier.clone(), c.domain.clone(), p1).expect("projection is total");
    let p2 = FnTable::new(carrier, c.codomain.clone(), p2).expect("projection is total");
    (p1, p2)
}

/// The three numbers of the double-counting identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DoubleCount {
    pub pairs: usize,
    pub domain_size: usize,
    pub k: usize,
    pub codomain_size: usize,
    pub l: usize,
}

/// Check `|C| = |X| * k = |Y| * l` for a uniform correspondence. The
/// identity is forced by counting, so a failure is an internal
/// inconsistency, not a property of the input.
pub fn double_count_check(c: &Correspondence) -> Result<DoubleCount, CorrError> {
    let (k, l) = is_uniform(c).ok_or_else(|| not_uniform_error(c))?;
    let dc = DoubleCount {
        pairs: c.pairs.len(),
        domain_size: c.domain.len(),
        k,
        codomain_size: c.codomain.len(),
        l,
    };
    if dc.pairs != dc.domain_size * dc.k || dc.pairs != dc.codomain_size * dc.l {
        return Err(CorrError::Internal(format!(
            "double counting violated: |C|={} |X|*k={} |Y|*l={}",
            dc.pairs,
            dc.domain_size * dc.k,
            dc.codomain_size * dc.l
        )));
    }
    Ok(dc)
}

/// A named correspondence as stored in a `.corr` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrFile {
    pub name: String,
    pub structure: String,
    pub corr: Correspondence,
}

/// Parse a correspondence file:
///
/// ```text
/// corr <name> <structureName>
/// dom <e> <e> ...
/// cod <e> ...
/// pair <x> <y>
/// end
/// ```
///
/// `dom`/`cod` lines may repeat; elements are atom indices.
pub fn parse_corr_file(text: &str) -> Result<CorrFile, crate::finstruct::ParseError> {
    use crate::finstruct::ParseError;
    let err = |line: usize, message: String| ParseError { line, message };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty file; expected `corr <name> <structure>`".into()))?;
    let (name, structure) = match header.split_whitespace().collect::<Vec<_>>()[..] {
        ["corr", name, structure] => (name.to_string(), structure.to_string()),
        _ => return Err(err(hline, "expected `corr <name> <structure>`".into())),
    };

    let mut domain = BTreeSet::new();
    let mut codomain = BTreeSet::new();
    let mut pairs = BTreeSet::new();
    let mut closed = false;
    let mut last = hline;
    for (line, l) in lines {
        last = line;
        if l == "end" {
            closed = true;
            break;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        let parse = |tok: &str| {
            tok.parse::<usize>()
                .map_err(|_| err(line, format!("expected an element index, got `{tok}`")))
        };
        match toks.split_first() {
            Some((&"dom", rest)) if !rest.is_empty() => {
                for tok in rest {
                    domain.insert(Elem::atom(parse(tok)?));
                }
            }
            Some((&"cod", rest)) if !rest.is_empty() => {
                for tok in rest {
                    codomain.insert(Elem::atom(parse(tok)?));
                }
            }
            Some((&"pair", [x, y])) => {
                pairs.insert((Elem::atom(parse(x)?), Elem::atom(parse(y)?)));
            }
            _ => return Err(err(line, format!("unrecognized line `{l}`"))),
        }
    }
    if !closed {
        return Err(err(last, "correspondence not closed by `end`".into()));
    }
    let corr =
        Correspondence::new(domain, codomain, pairs).map_err(|e| err(last, e.to_string()))?;
    Ok(CorrFile { name, structure, corr })
}

/// Canonical rendering of a correspondence file; `parse_corr_file`
/// inverts it bit-exactly. Long carriers wrap at 16 elements per line.
pub fn render_corr_file(cf: &CorrFile) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    writeln!(out, "corr {} {}", cf.name, cf.structure).unwrap();
    for (tag, set) in [("dom", &cf.corr.domain), ("cod", &cf.corr.codomain)] {
        let elems: Vec<String> = set.iter().map(|e| e.to_string()).collect();
        for chunk in elems.chunks(16) {
            writeln!(out, "{tag} {}", chunk.join(" ")).unwrap();
        }
    }
    for (x, y) in &cf.corr.pairs {
        writeln!(out, "pair {x} {y}").unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}
