//! Finitely presented countably infinite sets and eventually-uniform maps
//! with finite exception tables.
//!
//! A [`SymbolicSet`] is a disjoint union of *rays* (copies of the natural
//! numbers, each possibly with finitely many indices deleted) and finitely
//! many extra *points*. A [`SymbolicMap`] sends each source ray through
//! one block rule — index `i >= s` goes to `(targetRay, o + (i-s)/k)` —
//! with an explicit exception entry for every live index below the prefix
//! `s` and for every point. This class is closed under everything the
//! fibre-repair construction needs: finite unions, crossing with a finite
//! index set, deleting or adjoining finitely many points, and `k`-to-1 ray
//! maps.
//!
//! Everything symbolic can be cross-checked by brute force on a finite
//! slice via [`materialize_set`] / [`materialize_map`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

/// An element of a symbolic set: a point label, or an index on a ray.
/// The derived order (points before ray elements, then lexicographic) is
/// the canonical order for all deterministic choices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Loc {
    Point(String),
    Ray(String, usize),
}

impl Loc {
    pub fn point(label: impl Into<String>) -> Loc {
        Loc::Point(label.into())
    }

    pub fn ray(label: impl Into<String>, index: usize) -> Loc {
        Loc::Ray(label.into(), index)
    }

    /// Parse the textual forms `p:<label>` and `r:<label>:<index>`.
    pub fn parse(text: &str) -> Result<Loc, SymbolicError> {
        let parts: Vec<&str> = text.split(':').collect();
        match parts[..] {
            ["p", label] if !label.is_empty() => Ok(Loc::point(label)),
            ["r", label, idx] if !label.is_empty() => idx
                .parse::<usize>()
                .map(|i| Loc::ray(label, i))
                .map_err(|_| SymbolicError::BadLocation(text.to_string())),
            _ => Err(SymbolicError::BadLocation(text.to_string())),
        }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Point(p) => write!(f, "p:{p}"),
            Loc::Ray(r, i) => write!(f, "r:{r}:{i}"),
        }
    }
}

impl Serialize for Loc {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SymbolicError {
    #[error("bad location `{0}`; expected `p:<label>` or `r:<label>:<index>`")]
    BadLocation(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("label `{0}` contains `:` or whitespace")]
    BadLabel(String),
    #[error("a symbolic set needs at least one ray or point")]
    EmptySet,
    #[error("{0} is not an element of the set")]
    NoSuchElement(Loc),
    #[error("no such ray `{0}`")]
    NoSuchRay(String),
    #[error("source ray `{0}` has no rule")]
    MissingRule(String),
    #[error("rule block size must be at least 1 on ray `{0}`")]
    ZeroBlock(String),
    #[error("source element {0} has no image (missing exception below the prefix)")]
    MissingException(Loc),
    #[error("exception source {0} is not an element, or lies at or above the rule prefix")]
    BadExceptionSource(Loc),
    #[error("image {0} is not an element of the target set")]
    BadImage(Loc),
    #[error("rule on ray `{src}` sends live index {index} to deleted target {target}")]
    RuleHitsDeletedTarget {
        src: String,
        index: usize,
        target: Loc,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One ray: a copy of the natural numbers minus finitely many deleted
/// indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ray {
    pub label: String,
    pub deleted: BTreeSet<usize>,
}

/// A finitely presented countably infinite (or finite) set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicSet {
    rays: Vec<Ray>,
    points: Vec<String>,
}

fn check_label(label: &str) -> Result<(), SymbolicError> {
    if label.is_empty() || label.contains(':') || label.chars().any(char::is_whitespace) {
        return Err(SymbolicError::BadLabel(label.to_string()));
    }
    Ok(())
}

impl SymbolicSet {
    /// Build a set from ray and point labels; labels are sorted into
    /// canonical order and must be unique across both kinds.
    pub fn new(
        rays: impl IntoIterator<Item = Ray>,
        points: impl IntoIterator<Item = String>,
    ) -> Result<SymbolicSet, SymbolicError> {
        let mut rays: Vec<Ray> = rays.into_iter().collect();
        let mut points: Vec<String> = points.into_iter().collect();
        rays.sort_by(|a, b| a.label.cmp(&b.label));
        points.sort();
        let mut seen = BTreeSet::new();
        for label in rays.iter().map(|r| &r.label).chain(points.iter()) {
            check_label(label)?;
            if !seen.insert(label.clone()) {
                return Err(SymbolicError::DuplicateLabel(label.clone()));
            }
        }
        if rays.is_empty() && points.is_empty() {
            return Err(SymbolicError::EmptySet);
        }
        Ok(SymbolicSet { rays, points })
    }

    /// A single full ray.
    pub fn single_ray(label: impl Into<String>) -> SymbolicSet {
        SymbolicSet::new([Ray { label: label.into(), deleted: BTreeSet::new() }], [])
            .expect("valid single ray")
    }

    pub fn rays(&self) -> &[Ray] {
        &self.rays
    }

    pub fn points(&self) -> &[String] {
        &self.points
    }

    pub fn ray(&self, label: &str) -> Option<&Ray> {
        self.rays.iter().find(|r| r.label == label)
    }

    pub fn has_rays(&self) -> bool {
        !self.rays.is_empty()
    }

    pub fn contains(&self, loc: &Loc) -> bool {
        match loc {
            Loc::Point(p) => self.points.iter().any(|q| q == p),
            Loc::Ray(r, i) => self.ray(r).is_some_and(|ray| !ray.deleted.contains(i)),
        }
    }

    /// The set with finitely many elements removed.
    pub fn delete(&self, removed: &BTreeSet<Loc>) -> Result<SymbolicSet, SymbolicError> {
        let mut rays = self.rays.clone();
        let mut points = self.points.clone();
        for loc in removed {
            if !self.contains(loc) {
                return Err(SymbolicError::NoSuchElement(loc.clone()));
            }
            match loc {
                Loc::Point(p) => points.retain(|q| q != p),
                Loc::Ray(r, i) => {
                    rays.iter_mut().find(|ray| &ray.label == r).expect("ray exists").deleted
                        .insert(*i);
                }
            }
        }
        SymbolicSet::new(rays, points)
    }

    /// The set with fresh points adjoined.
    pub fn adjoin_points(
        &self,
        labels: impl IntoIterator<Item = String>,
    ) -> Result<SymbolicSet, SymbolicError> {
        let mut points = self.points.clone();
        points.extend(labels);
        SymbolicSet::new(self.rays.clone(), points)
    }
}

/// The rule for one source ray: index `i >= prefix` maps to
/// `(target, offset + (i - prefix) / block)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RayRule {
    pub target: String,
    pub block: usize,
    pub prefix: usize,
    pub offset: usize,
}

/// A total map between symbolic sets: one rule per source ray and a
/// finite exception table covering every live index below the rule
/// prefix and every source point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicMap {
    source: SymbolicSet,
    target: SymbolicSet,
    rules: BTreeMap<String, RayRule>,
    exceptions: BTreeMap<Loc, Loc>,
}

impl SymbolicMap {
    pub fn new(
        source: SymbolicSet,
        target: SymbolicSet,
        rules: BTreeMap<String, RayRule>,
        exceptions: BTreeMap<Loc, Loc>,
    ) -> Result<SymbolicMap, SymbolicError> {
        // Every source ray needs a rule with a live target ray.
        for ray in source.rays() {
            let rule = rules
                .get(&ray.label)
                .ok_or_else(|| SymbolicError::MissingRule(ray.label.clone()))?;
            if rule.block == 0 {
                return Err(SymbolicError::ZeroBlock(ray.label.clone()));
            }
            if target.ray(&rule.target).is_none() {
                return Err(SymbolicError::NoSuchRay(rule.target.clone()));
            }
        }
        for label in rules.keys() {
            if source.ray(label).is_none() {
                return Err(SymbolicError::NoSuchRay(label.clone()));
            }
        }
        // Exceptions live strictly below the prefix (or at points) and
        // map to elements of the target.
        for (src, img) in &exceptions {
            let valid_src = match src {
                Loc::Point(_) => source.contains(src),
                Loc::Ray(r, i) => {
                    source.contains(src)
                        && rules.get(r).is_some_and(|rule| *i < rule.prefix)
                }
            };
            if !valid_src {
                return Err(SymbolicError::BadExceptionSource(src.clone()));
            }
            if !target.contains(img) {
                return Err(SymbolicError::BadImage(img.clone()));
            }
        }
        // Totality below the prefix and on points.
        for ray in source.rays() {
            let rule = &rules[&ray.label];
            for i in 0..rule.prefix {
                let loc = Loc::ray(&ray.label, i);
                if !ray.deleted.contains(&i) && !exceptions.contains_key(&loc) {
                    return Err(SymbolicError::MissingException(loc));
                }
            }
        }
        for p in source.points() {
            let loc = Loc::point(p);
            if !exceptions.contains_key(&loc) {
                return Err(SymbolicError::MissingException(loc));
            }
        }
        // Rule images of live sources must be live. A target index is
        // produced by the window of `block` consecutive source indices,
        // so it suffices to check the windows of deleted target indices.
        for tray in target.rays() {
            for &j in &tray.deleted {
                for (src_label, rule) in &rules {
                    if rule.target != tray.label || j < rule.offset {
                        continue;
                    }
                    let src_ray = source.ray(src_label).expect("validated");
                    let lo = rule.prefix + (j - rule.offset) * rule.block;
                    for i in lo..lo + rule.block {
                        if !src_ray.deleted.contains(&i) {
                            return Err(SymbolicError::RuleHitsDeletedTarget {
                                src: src_label.clone(),
                                index: i,
                                target: Loc::ray(&tray.label, j),
                            });
                        }
                    }
                }
            }
        }
        Ok(SymbolicMap { source, target, rules, exceptions })
    }

    /// The identity map on a set.
    pub fn identity(set: &SymbolicSet) -> SymbolicMap {
        let rules = set
            .rays()
            .iter()
            .map(|r| {
                (r.label.clone(), RayRule {
                    target: r.label.clone(),
                    block: 1,
                    prefix: 0,
                    offset: 0,
                })
            })
            .collect();
        let exceptions = set
            .points()
            .iter()
            .map(|p| (Loc::point(p), Loc::point(p)))
            .collect();
        SymbolicMap::new(set.clone(), set.clone(), rules, exceptions)
            .expect("identity is total")
    }

    pub fn source(&self) -> &SymbolicSet {
        &self.source
    }

    pub fn target(&self) -> &SymbolicSet {
        &self.target
    }

    pub fn rules(&self) -> &BTreeMap<String, RayRule> {
        &self.rules
    }

    pub fn exceptions(&self) -> &BTreeMap<Loc, Loc> {
        &self.exceptions
    }

    /// The image of a source element.
    pub fn apply(&self, x: &Loc) -> Result<Loc, SymbolicError> {
        if !self.source.contains(x) {
            return Err(SymbolicError::NoSuchElement(x.clone()));
        }
        if let Some(img) = self.exceptions.get(x) {
            return Ok(img.clone());
        }
        match x {
            Loc::Ray(r, i) => {
                let rule = &self.rules[r];
                debug_assert!(*i >= rule.prefix);
                Ok(Loc::ray(&rule.target, rule.offset + (i - rule.prefix) / rule.block))
            }
            Loc::Point(_) => unreachable!("points are covered by exceptions"),
        }
    }

    /// The exact (finite) preimage of a target element.
    pub fn preimage(&self, y: &Loc) -> Vec<Loc> {
        let mut out: Vec<Loc> = self
            .exceptions
            .iter()
            .filter(|(_, img)| *img == y)
            .map(|(src, _)| src.clone())
            .collect();
        if let Loc::Ray(tr, j) = y {
            for (src_label, rule) in &self.rules {
                if &rule.target != tr || *j < rule.offset {
                    continue;
                }
                let src_ray = self.source.ray(src_label).expect("validated");
                let lo = rule.prefix + (j - rule.offset) * rule.block;
                for i in lo..lo + rule.block {
                    if !src_ray.deleted.contains(&i) {
                        out.push(Loc::ray(src_label, i));
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// A conservative depth below which nothing irregular remains: the
    /// largest rule prefix plus one full block, and every index touched by
    /// a deletion or an exception entry.
    pub fn stability_bound(&self) -> usize {
        let mut bound = 1;
        for rule in self.rules.values() {
            bound = bound.max(rule.prefix + rule.block).max(rule.offset + 1);
        }
        for ray in self.source.rays().iter().chain(self.target.rays()) {
            if let Some(&max) = ray.deleted.iter().next_back() {
                bound = bound.max(max + 1);
            }
        }
        for (src, img) in &self.exceptions {
            for loc in [src, img] {
                if let Loc::Ray(_, i) = loc {
                    bound = bound.max(i + 1);
                }
            }
        }
        bound
    }

    /// A copy of the map with finitely many entries overridden. Rule
    /// prefixes are lifted (in whole blocks, preserving all other images)
    /// past the overridden indices, which become ordinary exceptions.
    pub fn with_overrides(
        &self,
        overrides: &BTreeMap<Loc, Loc>,
    ) -> Result<SymbolicMap, SymbolicError> {
        let mut need_prefix: BTreeMap<String, usize> = BTreeMap::new();
        for src in overrides.keys() {
            if !self.source.contains(src) {
                return Err(SymbolicError::NoSuchElement(src.clone()));
            }
            if let Loc::Ray(r, i) = src {
                let e = need_prefix.entry(r.clone()).or_insert(0);
                *e = (*e).max(i + 1);
            }
        }
        let mut rules = self.rules.clone();
        let mut exceptions = self.exceptions.clone();
        for (label, needed) in need_prefix {
            let rule = rules.get_mut(&label).expect("source ray has a rule");
            if needed <= rule.prefix {
                continue;
            }
            // Lift in whole blocks so images beyond the new prefix are
            // unchanged.
            let blocks = (needed - rule.prefix).div_ceil(rule.block);
            let new_prefix = rule.prefix + blocks * rule.block;
            let ray = self.source.ray(&label).expect("validated");
            for i in rule.prefix..new_prefix {
                if ray.deleted.contains(&i) {
                    continue;
                }
                let img = Loc::ray(&rule.target, rule.offset + (i - rule.prefix) / rule.block);
                exceptions.insert(Loc::ray(&label, i), img);
            }
            rule.offset += blocks;
            rule.prefix = new_prefix;
        }
        for (src, img) in overrides {
            exceptions.insert(src.clone(), img.clone());
        }
        SymbolicMap::new(self.source.clone(), self.target.clone(), rules, exceptions)
    }
}

/// The symbolic fibre profile of a map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventualFibres {
    /// Eventual fibre size per target ray: the sum of the block sizes of
    /// the rules into it.
    pub per_ray: BTreeMap<String, usize>,
    /// The single eventual size, when every target ray agrees (and point
    /// fibres are measured against it).
    pub uniform: Option<usize>,
    /// Targets whose exact fibre size differs from the eventual one, with
    /// their sizes.
    pub exceptional: Vec<(Loc, usize)>,
}

/// Compute the eventual fibre sizes of a map and enumerate every
/// exceptional fibre exactly.
///
/// A ray target far enough out has fibre size equal to the sum of the
/// incoming block sizes; the finitely many targets below the rule offsets,
/// near deleted indices, or hit by exception entries are compared one by
/// one against that eventual value. Point targets are compared against the
/// common eventual size when the target rays agree on one (a point can
/// only be hit by exception entries).
pub fn eventual_fibres(m: &SymbolicMap) -> EventualFibres {
    let mut per_ray: BTreeMap<String, usize> = m
        .target()
        .rays()
        .iter()
        .map(|r| (r.label.clone(), 0usize))
        .collect();
    for rule in m.rules().values() {
        *per_ray.get_mut(&rule.target).expect("validated target ray") += rule.block;
    }
    let mut sizes: BTreeSet<usize> = per_ray.values().copied().collect();
    let uniform = if sizes.len() == 1 { sizes.pop_first() } else { None };

    let mut exceptional = Vec::new();
    // Horizon per target ray: indices that any irregularity can reach.
    for tray in m.target().rays() {
        let eventual = per_ray[&tray.label];
        let mut horizon = 0usize;
        for (src_label, rule) in m.rules() {
            if rule.target != tray.label {
                continue;
            }
            horizon = horizon.max(rule.offset + 1);
            let src_ray = m.source().ray(src_label).expect("validated");
            if let Some(&max_del) = src_ray.deleted.iter().next_back() {
                if max_del >= rule.prefix {
                    horizon = horizon.max(rule.offset + (max_del - rule.prefix) / rule.block + 2);
                }
            }
        }
        for img in m.exceptions().values() {
            if let Loc::Ray(r, j) = img {
                if r == &tray.label {
                    horizon = horizon.max(j + 1);
                }
            }
        }
        if let Some(&max_del) = tray.deleted.iter().next_back() {
            horizon = horizon.max(max_del + 1);
        }
        for j in 0..horizon {
            if tray.deleted.contains(&j) {
                continue;
            }
            let loc = Loc::ray(&tray.label, j);
            let size = m.preimage(&loc).len();
            if size != eventual {
                exceptional.push((loc, size));
            }
        }
    }
    for p in m.target().points() {
        let loc = Loc::point(p);
        let size = m.preimage(&loc).len();
        if uniform != Some(size) {
            exceptional.push((loc, size));
        }
    }
    exceptional.sort();
    EventualFibres { per_ray, uniform, exceptional }
}

/// A symbolic correspondence between the sources of two maps into a
/// shared target: `(a, a')` related iff `f(a) = g(a')`. Eventually this is
/// a `(k, l)`-correspondence with `k` the eventual fibre size of `g` and
/// `l` that of `f`; the finitely many irregular columns and rows are
/// enumerated exactly.
#[derive(Debug, Clone)]
pub struct SymbolicCorr {
    pub f: SymbolicMap,
    pub g: SymbolicMap,
    /// Eventual `(k, l)`.
    pub eventual: (usize, usize),
    /// Left elements `a` whose fibre `C_a` differs from `k`, with sizes.
    pub left_exceptions: Vec<(Loc, usize)>,
    /// Right elements `a'` whose fibre differs from `l`, with sizes.
    pub right_exceptions: Vec<(Loc, usize)>,
}

impl SymbolicCorr {
    /// Exact fibre of a left element: all `a'` with `g(a') = f(a)`.
    pub fn left_fibre(&self, a: &Loc) -> Result<Vec<Loc>, SymbolicError> {
        Ok(self.g.preimage(&self.f.apply(a)?))
    }

    /// Exact fibre of a right element.
    pub fn right_fibre(&self, a2: &Loc) -> Result<Vec<Loc>, SymbolicError> {
        Ok(self.f.preimage(&self.g.apply(a2)?))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorrBuildError {
    #[error("the two maps do not share a target set")]
    TargetMismatch,
    #[error("{0} map is not eventually uniform across target rays")]
    NotEventuallyUniform(&'static str),
}

/// Build the equalizer correspondence of two eventually-uniform maps into
/// the same target set.
pub fn sym_graph_corr(f: &SymbolicMap, g: &SymbolicMap) -> Result<SymbolicCorr, CorrBuildError> {
    if f.target() != g.target() {
        return Err(CorrBuildError::TargetMismatch);
    }
    let ff = eventual_fibres(f);
    let gf = eventual_fibres(g);
    let k_f = ff.uniform.ok_or(CorrBuildError::NotEventuallyUniform("first"))?;
    let l_g = gf.uniform.ok_or(CorrBuildError::NotEventuallyUniform("second"))?;

    // The fibre over a left element a is g^{-1}(f(a)), so a is
    // exceptional iff f(a) is a g-exceptional target.
    let mut left_exceptions = Vec::new();
    for (y, size) in &gf.exceptional {
        for a in f.preimage(y) {
            left_exceptions.push((a, *size));
        }
    }
    left_exceptions.sort();
    let mut right_exceptions = Vec::new();
    for (y, size) in &ff.exceptional {
        for a2 in g.preimage(y) {
            right_exceptions.push((a2, *size));
        }
    }
    right_exceptions.sort();

    Ok(SymbolicCorr {
        f: f.clone(),
        g: g.clone(),
        eventual: (l_g, k_f),
        left_exceptions,
        right_exceptions,
    })
}

/// The infinite binary tree (one ray, BFS indexing so finite truncations
/// are literal prefixes) with its predecessor map: `f(0) = 0`,
/// `f(i) = (i-1)/2`. The fibre at the root is `{0, 1, 2}`, of size 3;
/// every other fibre has size 2.
pub fn sym_tree() -> (SymbolicSet, SymbolicMap) {
    let set = SymbolicSet::single_ray("t");
    let rules = [(
        "t".to_string(),
        RayRule { target: "t".into(), block: 2, prefix: 1, offset: 0 },
    )]
    .into();
    let exceptions = [(Loc::ray("t", 0), Loc::ray("t", 0))].into();
    let map = SymbolicMap::new(set.clone(), set.clone(), rules, exceptions)
        .expect("tree predecessor is total");
    (set, map)
}

/// The tree predecessor extended by a fresh point at infinity:
/// `f'(0) = f'(inf) = inf` and `f' = f` elsewhere. Surjective and exactly
/// 2-to-1 everywhere.
pub fn sym_tree_infty() -> (SymbolicSet, SymbolicMap) {
    let set = SymbolicSet::new(
        [Ray { label: "t".into(), deleted: BTreeSet::new() }],
        ["inf".to_string()],
    )
    .expect("valid set");
    let rules = [(
        "t".to_string(),
        RayRule { target: "t".into(), block: 2, prefix: 1, offset: 0 },
    )]
    .into();
    let exceptions = [
        (Loc::ray("t", 0), Loc::point("inf")),
        (Loc::point("inf"), Loc::point("inf")),
    ]
    .into();
    let map = SymbolicMap::new(set.clone(), set.clone(), rules, exceptions)
        .expect("extended predecessor is total");
    (set, map)
}

/// The halving map `i -> floor(i/2)` on one ray: surjective with every
/// fibre of size exactly two, no exceptions.
pub fn sym_halving() -> (SymbolicSet, SymbolicMap) {
    let set = SymbolicSet::single_ray("h");
    let rules = [(
        "h".to_string(),
        RayRule { target: "h".into(), block: 2, prefix: 0, offset: 0 },
    )]
    .into();
    let map = SymbolicMap::new(set.clone(), set.clone(), rules, BTreeMap::new())
        .expect("halving is total");
    (set, map)
}

/// The first `depth` indices of every ray (live ones only) plus all
/// points, in canonical order.
pub fn materialize_set(set: &SymbolicSet, depth: usize) -> Vec<Loc> {
    let mut out: Vec<Loc> = set.points().iter().map(Loc::point).collect();
    for ray in set.rays() {
        for i in 0..depth {
            if !ray.deleted.contains(&i) {
                out.push(Loc::ray(&ray.label, i));
            }
        }
    }
    out.sort();
    out
}

/// A map restricted to a finite slice of its source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MaterializedMap {
    pub depth: usize,
    /// `(source, image, image inside the slice)`.
    pub entries: Vec<(Loc, Loc, bool)>,
}

/// Evaluate the map on the depth-`depth` slice of its source; images that
/// fall outside the slice of the target are flagged rather than dropped.
pub fn materialize_map(m: &SymbolicMap, depth: usize) -> MaterializedMap {
    let slice: BTreeSet<Loc> = materialize_set(m.target(), depth).into_iter().collect();
    let entries = materialize_set(m.source(), depth)
        .into_iter()
        .map(|x| {
            let img = m.apply(&x).expect("slice elements are in the source");
            let inside = slice.contains(&img);
            (x, img, inside)
        })
        .collect();
    MaterializedMap { depth, entries }
}

/// A parsed symbolic spec file: named sets and named maps.
#[derive(Debug, Clone, Default)]
pub struct SymSpec {
    pub sets: Vec<(String, SymbolicSet)>,
    pub maps: Vec<(String, SymbolicMap)>,
}

impl SymSpec {
    pub fn set(&self, name: &str) -> Option<&SymbolicSet> {
        self.sets.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn map(&self, name: &str) -> Option<&SymbolicMap> {
        self.maps.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// Parse a symbolic spec file:
///
/// ```text
/// symset <name>
/// ray <label> [minus <i> <i> ...]
/// point <label>
/// end
/// symmap <name> <src> <dst>
/// rule <srcRay> -> <dstRay> block <k> prefix <s> offset <o>
/// except <loc> -> <loc>
/// end
/// ```
///
/// `#` begins a comment line. Maps refer to previously declared sets and
/// embed copies of them.
pub fn parse_symspec(text: &str) -> Result<SymSpec, SymbolicError> {
    let err = |line: usize, message: String| SymbolicError::Parse { line, message };
    let mut spec = SymSpec::default();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .peekable();

    while let Some((line, l)) = lines.next() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[..] {
            ["symset", name] => {
                let mut rays = Vec::new();
                let mut points = Vec::new();
                let mut closed = false;
                let mut last = line;
                for (bline, bl) in lines.by_ref() {
                    last = bline;
                    if bl == "end" {
                        closed = true;
                        break;
                    }
                    let btoks: Vec<&str> = bl.split_whitespace().collect();
                    match btoks.split_first() {
                        Some((&"ray", [label])) => {
                            rays.push(Ray { label: label.to_string(), deleted: BTreeSet::new() })
                        }
                        Some((&"ray", [label, minus, idxs @ ..]))
                            if *minus == "minus" && !idxs.is_empty() =>
                        {
                            let mut deleted = BTreeSet::new();
                            for tok in idxs {
                                deleted.insert(tok.parse::<usize>().map_err(|_| {
                                    err(bline, format!("bad deleted index `{tok}`"))
                                })?);
                            }
                            rays.push(Ray { label: label.to_string(), deleted });
                        }
                        Some((&"point", [label])) => points.push(label.to_string()),
                        _ => return Err(err(bline, format!("unrecognized set line `{bl}`"))),
                    }
                }
                if !closed {
                    return Err(err(last, format!("symset `{name}` not closed by `end`")));
                }
                let set = SymbolicSet::new(rays, points)
                    .map_err(|e| err(last, e.to_string()))?;
                spec.sets.push((name.to_string(), set));
            }
            ["symmap", name, src, dst] => {
                let source = spec
                    .set(src)
                    .ok_or_else(|| err(line, format!("unknown source set `{src}`")))?
                    .clone();
                let target = spec
                    .set(dst)
                    .ok_or_else(|| err(line, format!("unknown target set `{dst}`")))?
                    .clone();
                let mut rules = BTreeMap::new();
                let mut exceptions = BTreeMap::new();
                let mut closed = false;
                let mut last = line;
                for (bline, bl) in lines.by_ref() {
                    last = bline;
                    if bl == "end" {
                        closed = true;
                        break;
                    }
                    let btoks: Vec<&str> = bl.split_whitespace().collect();
                    match btoks[..] {
                        ["rule", sray, "->", dray, "block", k, "prefix", s, "offset", o] => {
                            let parse = |tok: &str| {
                                tok.parse::<usize>().map_err(|_| {
                                    err(bline, format!("bad rule number `{tok}`"))
                                })
                            };
                            rules.insert(sray.to_string(), RayRule {
                                target: dray.to_string(),
                                block: parse(k)?,
                                prefix: parse(s)?,
                                offset: parse(o)?,
                            });
                        }
                        ["except", from, "->", to] => {
                            let from =
                                Loc::parse(from).map_err(|e| err(bline, e.to_string()))?;
                            let to = Loc::parse(to).map_err(|e| err(bline, e.to_string()))?;
                            exceptions.insert(from, to);
                        }
                        _ => return Err(err(bline, format!("unrecognized map line `{bl}`"))),
                    }
                }
                if !closed {
                    return Err(err(last, format!("symmap `{name}` not closed by `end`")));
                }
                let map = SymbolicMap::new(source, target, rules, exceptions)
                    .map_err(|e| err(last, e.to_string()))?;
                spec.maps.push((name.to_string(), map));
            }
            _ => return Err(err(line, format!("unrecognized directive `{l}`"))),
        }
    }
    Ok(spec)
}

/// Canonical rendering of a set block.
pub fn render_symset(name: &str, set: &SymbolicSet) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    writeln!(out, "symset {name}").unwrap();
    for ray in set.rays() {
        if ray.deleted.is_empty() {
            writeln!(out, "ray {}", ray.label).unwrap();
        } else {
            let idxs: Vec<String> = ray.deleted.iter().map(|i| i.to_string()).collect();
            writeln!(out, "ray {} minus {}", ray.label, idxs.join(" ")).unwrap();
        }
    }
    for p in set.points() {
        writeln!(out, "point {p}").unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}

/// Canonical rendering of a map block (set blocks are rendered
/// separately).
pub fn render_symmap(name: &str, src: &str, dst: &str, map: &SymbolicMap) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    writeln!(out, "symmap {name} {src} {dst}").unwrap();
    for (ray, rule) in map.rules() {
        writeln!(
            out,
            "rule {ray} -> {} block {} prefix {} offset {}",
            rule.target, rule.block, rule.prefix, rule.offset
        )
        .unwrap();
    }
    for (from, to) in map.exceptions() {
        writeln!(out, "except {from} -> {to}").unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loc_parse_and_display() {
        assert_eq!(Loc::parse("p:inf").unwrap(), Loc::point("inf"));
        assert_eq!(Loc::parse("r:t:12").unwrap(), Loc::ray("t", 12));
        assert_eq!(Loc::ray("t", 3).to_string(), "r:t:3");
        assert!(Loc::parse("t:5").is_err());
    }

    #[test]
    fn materialize_single_ray() {
        let set = SymbolicSet::single_ray("r");
        assert_eq!(
            materialize_set(&set, 3),
            vec![Loc::ray("r", 0), Loc::ray("r", 1), Loc::ray("r", 2)]
        );
        // Idempotent: materializing a slice again changes nothing.
        assert_eq!(materialize_set(&set, 3), materialize_set(&set, 3));
    }

    #[test]
    fn tree_predecessor_materializes_to_parent_table() {
        let (_, f) = sym_tree();
        let m = materialize_map(&f, 7);
        for (x, img, inside) in &m.entries {
            let Loc::Ray(_, i) = x else { panic!("ray only") };
            let expected = if *i == 0 { 0 } else { (i - 1) / 2 };
            assert_eq!(img, &Loc::ray("t", expected));
            assert!(inside);
        }
        assert_eq!(m.entries.len(), 7);
    }

    #[test]
    fn tree_fibres() {
        let (_, f) = sym_tree();
        let ef = eventual_fibres(&f);
        assert_eq!(ef.uniform, Some(2));
        assert_eq!(ef.exceptional, vec![(Loc::ray("t", 0), 3)]);
        assert_eq!(
            f.preimage(&Loc::ray("t", 0)),
            vec![Loc::ray("t", 0), Loc::ray("t", 1), Loc::ray("t", 2)]
        );
    }

    #[test]
    fn tree_infty_is_two_to_one_everywhere() {
        let (_, f) = sym_tree_infty();
        let ef = eventual_fibres(&f);
        assert_eq!(ef.uniform, Some(2));
        assert!(ef.exceptional.is_empty());
        assert_eq!(
            f.preimage(&Loc::point("inf")),
            vec![Loc::point("inf"), Loc::ray("t", 0)]
        );
    }

    #[test]
    fn halving_fibres() {
        let (_, h) = sym_halving();
        let ef = eventual_fibres(&h);
        assert_eq!(ef.uniform, Some(2));
        assert!(ef.exceptional.is_empty());
        for j in 0..5 {
            assert_eq!(
                h.preimage(&Loc::ray("h", j)),
                vec![Loc::ray("h", 2 * j), Loc::ray("h", 2 * j + 1)]
            );
        }
    }

    #[test]
    fn identity_map_fibres() {
        let set = SymbolicSet::single_ray("x");
        let id = SymbolicMap::identity(&set);
        let ef = eventual_fibres(&id);
        assert_eq!(ef.uniform, Some(1));
        assert!(ef.exceptional.is_empty());
    }

    #[test]
    fn graph_corr_identity_vs_tree() {
        let (set, g) = sym_tree();
        let f = SymbolicMap::identity(&set);
        let c = sym_graph_corr(&f, &g).unwrap();
        assert_eq!(c.eventual, (2, 1));
        // The irregular column sits over the root.
        assert_eq!(c.left_exceptions, vec![(Loc::ray("t", 0), 3)]);
        assert_eq!(
            c.left_fibre(&Loc::ray("t", 0)).unwrap(),
            vec![Loc::ray("t", 0), Loc::ray("t", 1), Loc::ray("t", 2)]
        );
        assert_eq!(
            c.left_fibre(&Loc::ray("t", 1)).unwrap(),
            vec![Loc::ray("t", 3), Loc::ray("t", 4)]
        );
    }

    #[test]
    fn graph_corr_halving_squared() {
        let (_, h) = sym_halving();
        let c = sym_graph_corr(&h, &h).unwrap();
        assert_eq!(c.eventual, (2, 2));
        assert!(c.left_exceptions.is_empty());
        assert!(c.right_exceptions.is_empty());
        // Same-floor-half relation pairs {2j, 2j+1} with itself.
        assert_eq!(
            c.left_fibre(&Loc::ray("h", 4)).unwrap(),
            vec![Loc::ray("h", 4), Loc::ray("h", 5)]
        );
    }

    #[test]
    fn graph_corr_identity_pair_is_diagonal() {
        let set = SymbolicSet::single_ray("x");
        let id = SymbolicMap::identity(&set);
        let c = sym_graph_corr(&id, &id).unwrap();
        assert_eq!(c.eventual, (1, 1));
        assert!(c.left_exceptions.is_empty());
    }

    #[test]
    fn validation_rejects_partial_maps() {
        let set = SymbolicSet::single_ray("x");
        // Prefix 2 with no exceptions below it.
        let rules = [(
            "x".to_string(),
            RayRule { target: "x".into(), block: 1, prefix: 2, offset: 0 },
        )]
        .into();
        let err = SymbolicMap::new(set.clone(), set, rules, BTreeMap::new()).unwrap_err();
        assert!(matches!(err, SymbolicError::MissingException(_)));
    }

    #[test]
    fn validation_rejects_exception_above_prefix() {
        let set = SymbolicSet::single_ray("x");
        let rules = [(
            "x".to_string(),
            RayRule { target: "x".into(), block: 1, prefix: 0, offset: 0 },
        )]
        .into();
        let exceptions = [(Loc::ray("x", 5), Loc::ray("x", 0))].into();
        let err = SymbolicMap::new(set.clone(), set, rules, exceptions).unwrap_err();
        assert!(matches!(err, SymbolicError::BadExceptionSource(_)));
    }

    #[test]
    fn with_overrides_lifts_prefix_and_preserves_elsewhere() {
        let (_, f) = sym_tree();
        let overrides = [(Loc::ray("t", 5), Loc::ray("t", 9))].into();
        let g = f.with_overrides(&overrides).unwrap();
        assert_eq!(g.apply(&Loc::ray("t", 5)).unwrap(), Loc::ray("t", 9));
        for i in [0usize, 1, 2, 3, 4, 6, 7, 8, 20, 100] {
            assert_eq!(
                g.apply(&Loc::ray("t", i)).unwrap(),
                f.apply(&Loc::ray("t", i)).unwrap(),
                "image at {i}"
            );
        }
    }

    #[test]
    fn delete_produces_consistent_sets() {
        let (set, _) = sym_tree();
        let removed: BTreeSet<Loc> = [Loc::ray("t", 0)].into();
        let pruned = set.delete(&removed).unwrap();
        assert!(!pruned.contains(&Loc::ray("t", 0)));
        assert!(pruned.contains(&Loc::ray("t", 1)));
        assert_eq!(materialize_set(&pruned, 3).len(), 2);
    }

    #[test]
    fn symspec_round_trip() {
        let (set, map) = sym_tree();
        let text = format!("{}{}", render_symset("T", &set), render_symmap("f", "T", "T", &map));
        let spec = parse_symspec(&text).unwrap();
        assert_eq!(spec.set("T").unwrap(), &set);
        assert_eq!(spec.map("f").unwrap(), &map);
        // Canonical rendering is stable.
        let again = format!(
            "{}{}",
            render_symset("T", spec.set("T").unwrap()),
            render_symmap("f", "T", "T", spec.map("f").unwrap())
        );
        assert_eq!(again, text);
    }

    #[test]
    fn symspec_rejects_unknown_set() {
        let text = "symmap f A A\nend\n";
        assert!(parse_symspec(text).is_err());
    }

    #[test]
    fn stability_bound_covers_irregularities() {
        let (_, f) = sym_tree();
        assert!(f.stability_bound() >= 3);
        let (_, h) = sym_halving();
        assert!(h.stability_bound() >= 1);
    }
}
