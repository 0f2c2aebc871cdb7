//! Constructive fibre repair: given two eventually-uniform maps
//! `f, g : X -> Y` with finitely many exceptional finite fibres and
//! distinct eventual fibre sizes `k != l`, build sets `X'`, `Y'` and maps
//! `f', g' : X' -> Y'` whose fibres have exactly constant sizes `k` and
//! `l`, packaged as a certificate that an independent verifier checks by
//! brute-force counting on a materialized slice.
//!
//! The construction removes the finite bad part (`Y0` the exceptional
//! targets, `F` and `G` the two preimages of `Y0`), crosses the clean part
//! with a finite index set, and re-attaches a finite auxiliary gadget
//! (`P`, `Q`) sized so that both maps come out exactly regular. Every
//! "arbitrary" choice is replaced by a sorted round-robin assignment, so
//! repairing the same input twice yields the bit-identical certificate.
//!
//! Finite inputs are rejected: constant fibres `k` and `l` onto one
//! finite target set would force `k*|Y'| = |X'| = l*|Y'|`, impossible for
//! `k != l`.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::cofinite::{
    eventual_fibres, materialize_set, parse_symspec, render_symmap, render_symset, Loc, Ray,
    RayRule, SymbolicError, SymbolicMap, SymbolicSet,
};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("the two maps do not share source and target sets")]
    MismatchedSpaces,
    #[error("the {0} map has no single eventual fibre size (not eventually uniform)")]
    NotEventuallyUniform(&'static str),
    #[error("fibre sizes already agree (k = l = {0}); nothing to repair")]
    AlreadyBalanced(usize),
    #[error(
        "the source set is finite; constant fibres k and l onto the same finite target \
         would force k*|Y'| = |X'| = l*|Y'|, impossible for k != l"
    )]
    FiniteDomain,
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error("internal inconsistency (library bug): {0}")]
    Internal(String),
}

/// One recorded modification of an input map during normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Modification {
    /// `"f"` or `"g"`.
    pub map: &'static str,
    pub at: Loc,
    pub new_image: Loc,
}

/// The exception analysis of a pair of maps, normalized so that the lead
/// preimage is contained in the follow preimage.
///
/// `Y0` collects every target whose fibre deviates under either map
/// (possibly padded with finitely many regular targets, which is
/// harmless: the construction only needs `Y0` to contain the deviations).
/// Normalization reaches `F <= G` by precomposing the lead map with a
/// finite involution, never changing any fibre size. When `k > l` and `F`
/// is strictly larger than `G`, no finite modification of `f` alone can
/// reach that state, so the roles lead/follow are swapped internally and
/// recorded; the output maps keep their original names and fibre sizes.
#[derive(Debug, Clone)]
pub struct ExceptionAnalysis {
    /// Eventual fibre size of `f`.
    pub k: usize,
    /// Eventual fibre size of `g`.
    pub l: usize,
    /// Exceptional (plus padded) targets.
    pub y0: BTreeSet<Loc>,
    /// Regular targets adjoined to `y0` during normalization.
    pub y0_padding: BTreeSet<Loc>,
    /// `f`, possibly modified on finitely many points.
    pub f: SymbolicMap,
    /// `g`, possibly modified on finitely many points.
    pub g: SymbolicMap,
    /// `F = f^{-1}(Y0)` for the final `f`.
    pub f_pre: BTreeSet<Loc>,
    /// `G = g^{-1}(Y0)` for the final `g`.
    pub g_pre: BTreeSet<Loc>,
    /// Which map leads the construction (`true` means `g`).
    pub lead_is_g: bool,
    pub modifications: Vec<Modification>,
    /// Always true on success: lead preimage inside follow preimage.
    pub normalized: bool,
}

impl ExceptionAnalysis {
    /// `G' = follow preimage minus lead preimage`, the set the
    /// construction has to re-house.
    pub fn residue(&self) -> BTreeSet<Loc> {
        if self.lead_is_g {
            self.f_pre.difference(&self.g_pre).cloned().collect()
        } else {
            self.g_pre.difference(&self.f_pre).cloned().collect()
        }
    }
}

fn preimage_of_set(m: &SymbolicMap, targets: &BTreeSet<Loc>) -> BTreeSet<Loc> {
    targets.iter().flat_map(|y| m.preimage(y)).collect()
}

/// Targets of a set in canonical enumeration order: points first, then
/// ray indices diagonally (all rays at index 0, then index 1, ...).
fn enumerate_targets(set: &SymbolicSet) -> impl Iterator<Item = Loc> + '_ {
    let points = set.points().iter().map(Loc::point);
    let mut idx = 0usize;
    let mut ray_pos = 0usize;
    let rays = set.rays();
    let ray_iter = std::iter::from_fn(move || {
        if rays.is_empty() {
            return None;
        }
        loop {
            if ray_pos == rays.len() {
                ray_pos = 0;
                idx += 1;
            }
            let ray = &rays[ray_pos];
            ray_pos += 1;
            if !ray.deleted.contains(&idx) {
                return Some(Loc::ray(&ray.label, idx));
            }
        }
    });
    points.chain(ray_iter)
}

/// Precompose `m` with the involution exchanging `out[i]` and `into[i]`.
/// Fibre sizes are unchanged; the preimage of any target set is carried
/// across the swap.
fn swap_sources(
    m: &SymbolicMap,
    out: &[Loc],
    into: &[Loc],
    name: &'static str,
    modifications: &mut Vec<Modification>,
) -> Result<SymbolicMap, RepairError> {
    let mut overrides = BTreeMap::new();
    for (a, b) in out.iter().zip(into) {
        let img_a = m.apply(a)?;
        let img_b = m.apply(b)?;
        overrides.insert(a.clone(), img_b.clone());
        overrides.insert(b.clone(), img_a.clone());
        modifications.push(Modification { map: name, at: a.clone(), new_image: img_b });
        modifications.push(Modification { map: name, at: b.clone(), new_image: img_a });
    }
    Ok(m.with_overrides(&overrides)?)
}

/// Read off `k`, `l`, `Y0`, `F`, `G` and normalize deterministically so
/// that the lead preimage is contained in the follow preimage.
pub fn classify(f: &SymbolicMap, g: &SymbolicMap) -> Result<ExceptionAnalysis, RepairError> {
    if f.source() != g.source() || f.target() != g.target() {
        return Err(RepairError::MismatchedSpaces);
    }
    let ef = eventual_fibres(f);
    let eg = eventual_fibres(g);
    let k = ef.uniform.ok_or(RepairError::NotEventuallyUniform("first"))?;
    let l = eg.uniform.ok_or(RepairError::NotEventuallyUniform("second"))?;

    let mut y0: BTreeSet<Loc> = ef
        .exceptional
        .iter()
        .chain(eg.exceptional.iter())
        .map(|(loc, _)| loc.clone())
        .collect();
    let mut y0_padding = BTreeSet::new();
    let mut f = f.clone();
    let mut g = g.clone();
    let mut modifications = Vec::new();

    let mut f_pre = preimage_of_set(&f, &y0);
    let mut g_pre = preimage_of_set(&g, &y0);

    // Pad Y0 with regular targets while F spills more than G can absorb;
    // each padded target adds k sources to F and l to G, so this applies
    // exactly when k < l.
    if k < l {
        let mut fresh = enumerate_targets(f.target());
        while f_pre.difference(&g_pre).count() > g_pre.difference(&f_pre).count() {
            let y = fresh
                .next()
                .ok_or_else(|| RepairError::Internal("target enumeration ended".into()))?;
            if y0.contains(&y) {
                continue;
            }
            y0.insert(y.clone());
            y0_padding.insert(y.clone());
            f_pre.extend(f.preimage(&y));
            g_pre.extend(g.preimage(&y));
        }
    }

    let lead_is_g = {
        let spill = f_pre.difference(&g_pre).count();
        let room = g_pre.difference(&f_pre).count();
        spill > room
    };

    if lead_is_g {
        // Mirror: g leads. Its preimage G plays F; normalize G <= F by
        // swapping g on G \ F into F \ G.
        let out: Vec<Loc> = g_pre.difference(&f_pre).cloned().collect();
        let into: Vec<Loc> = f_pre.difference(&g_pre).cloned().collect();
        if !out.is_empty() {
            g = swap_sources(&g, &out, &into, "g", &mut modifications)?;
            g_pre = preimage_of_set(&g, &y0);
        }
    } else {
        let out: Vec<Loc> = f_pre.difference(&g_pre).cloned().collect();
        let into: Vec<Loc> = g_pre.difference(&f_pre).cloned().collect();
        if !out.is_empty() {
            f = swap_sources(&f, &out, &into, "f", &mut modifications)?;
            f_pre = preimage_of_set(&f, &y0);
        }
    }

    let normalized = if lead_is_g {
        g_pre.is_subset(&f_pre)
    } else {
        f_pre.is_subset(&g_pre)
    };
    if !normalized {
        return Err(RepairError::Internal("normalization failed to nest preimages".into()));
    }

    Ok(ExceptionAnalysis {
        k,
        l,
        y0,
        y0_padding,
        f,
        g,
        f_pre,
        g_pre,
        lead_is_g,
        modifications,
        normalized,
    })
}

/// A repair certificate: the constructed sets and maps plus the full
/// arithmetic of the construction, independently checkable by
/// [`verify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairCertificate {
    /// 1 iff `k < l` (in the original roles), else 2.
    pub case: u8,
    /// The construction that actually ran; differs from `case` only when
    /// the roles were swapped during normalization.
    pub internal_case: u8,
    pub swapped: bool,
    /// Eventual fibre size of the original `f`; `f'` has exactly this
    /// constant fibre size.
    pub k: usize,
    /// Eventual fibre size of the original `g` and constant fibre size of
    /// `g'`.
    pub l: usize,
    /// `n = |G'|`.
    pub n: usize,
    /// Case 1: `l - k`; case 2: `k - l - 1` (in lead/follow terms).
    pub n_prime: usize,
    pub p_members: Vec<Loc>,
    pub q_members: Vec<Loc>,
    pub y0: Vec<Loc>,
    pub x_prime: SymbolicSet,
    pub y_prime: SymbolicSet,
    pub f_prime: SymbolicMap,
    pub g_prime: SymbolicMap,
    /// Constructed label -> origin, for human inspection.
    pub provenance: Vec<(String, String)>,
}

fn cross_label(label: &str, copy: usize) -> String {
    format!("{label}#{copy}")
}

fn cross_loc(loc: &Loc, copy: usize) -> Loc {
    match loc {
        Loc::Point(p) => Loc::point(cross_label(p, copy)),
        Loc::Ray(r, i) => Loc::ray(cross_label(r, copy), *i),
    }
}

/// `base x copies`, with extra per-copy deletions (given as base-level
/// locations).
fn cross_set(
    base: &SymbolicSet,
    copies: usize,
    extra_deleted: &[BTreeSet<Loc>],
) -> Result<SymbolicSet, SymbolicError> {
    debug_assert_eq!(extra_deleted.len(), copies);
    let mut rays = Vec::new();
    let mut points = Vec::new();
    for i in 0..copies {
        for ray in base.rays() {
            let mut deleted = ray.deleted.clone();
            for loc in &extra_deleted[i] {
                if let Loc::Ray(r, idx) = loc {
                    if r == &ray.label {
                        deleted.insert(*idx);
                    }
                }
            }
            rays.push(Ray { label: cross_label(&ray.label, i), deleted });
        }
        for p in base.points() {
            if !extra_deleted[i].contains(&Loc::point(p)) {
                points.push(cross_label(p, i));
            }
        }
    }
    SymbolicSet::new(rays, points)
}

/// Translate `m` componentwise onto crossed sets, rerouting the sources in
/// `overrides` (keyed by crossed location) and adding `extra_entries` for
/// adjoined points. Rule prefixes are lifted in whole blocks past every
/// overridden index.
fn cross_translate(
    m: &SymbolicMap,
    new_source: &SymbolicSet,
    new_target: &SymbolicSet,
    copies: usize,
    overrides: &BTreeMap<Loc, Loc>,
    extra_entries: &BTreeMap<Loc, Loc>,
) -> Result<SymbolicMap, RepairError> {
    let mut rules: BTreeMap<String, RayRule> = BTreeMap::new();
    let mut exceptions: BTreeMap<Loc, Loc> = BTreeMap::new();

    // Required prefix per crossed source ray, from the overrides.
    let mut need: BTreeMap<String, usize> = BTreeMap::new();
    for src in overrides.keys() {
        if let Loc::Ray(r, i) = src {
            let e = need.entry(r.clone()).or_insert(0);
            *e = (*e).max(i + 1);
        }
    }

    for i in 0..copies {
        for (label, rule) in m.rules() {
            let crossed = cross_label(label, i);
            if new_source.ray(&crossed).is_none() {
                continue;
            }
            let mut lifted = RayRule {
                target: cross_label(&rule.target, i),
                block: rule.block,
                prefix: rule.prefix,
                offset: rule.offset,
            };
            if let Some(&needed) = need.get(&crossed) {
                if needed > lifted.prefix {
                    let blocks = (needed - lifted.prefix).div_ceil(lifted.block);
                    lifted.offset += blocks;
                    lifted.prefix += blocks * lifted.block;
                }
            }
            // Materialize the window between the old and the lifted
            // prefix as exceptions following the original rule.
            let src_ray = new_source.ray(&crossed).expect("checked above");
            for w in rule.prefix..lifted.prefix {
                if src_ray.deleted.contains(&w) {
                    continue;
                }
                let crossed_src = Loc::ray(&crossed, w);
                if overrides.contains_key(&crossed_src) {
                    continue;
                }
                let img = Loc::ray(
                    cross_label(&rule.target, i),
                    rule.offset + (w - rule.prefix) / rule.block,
                );
                if !new_target.contains(&img) {
                    return Err(RepairError::Internal(format!(
                        "lift window source {crossed_src} maps to removed target {img}"
                    )));
                }
                exceptions.insert(crossed_src, img);
            }
            rules.insert(crossed, lifted);
        }
        for (src, img) in m.exceptions() {
            let crossed_src = cross_loc(src, i);
            if !new_source.contains(&crossed_src) || overrides.contains_key(&crossed_src) {
                continue;
            }
            let crossed_img = cross_loc(img, i);
            if !new_target.contains(&crossed_img) {
                return Err(RepairError::Internal(format!(
                    "exception source {crossed_src} maps to removed target {crossed_img}"
                )));
            }
            exceptions.insert(crossed_src, crossed_img);
        }
    }
    for (src, img) in overrides.iter().chain(extra_entries) {
        exceptions.insert(src.clone(), img.clone());
    }
    SymbolicMap::new(new_source.clone(), new_target.clone(), rules, exceptions)
        .map_err(RepairError::from)
}

fn provenance_for(
    base_src: &SymbolicSet,
    base_dst: &SymbolicSet,
    copies: usize,
) -> Vec<(String, String)> {
    let mut prov = Vec::new();
    for i in 0..copies {
        for ray in base_src.rays() {
            prov.push((
                cross_label(&ray.label, i),
                format!("copy {i} of source ray {} (bad part removed)", ray.label),
            ));
        }
        for p in base_src.points() {
            prov.push((cross_label(p, i), format!("copy {i} of source point {p}")));
        }
        for ray in base_dst.rays() {
            prov.push((
                cross_label(&ray.label, i),
                format!("copy {i} of target ray {} (exceptional targets removed)", ray.label),
            ));
        }
        for p in base_dst.points() {
            prov.push((cross_label(p, i), format!("copy {i} of target point {p}")));
        }
    }
    prov.sort();
    prov.dedup();
    prov
}

/// Run the repair construction. The certificate's `f'` always has
/// constant fibre size `k` (the eventual size of the input `f`) and `g'`
/// constant size `l`.
pub fn repair(f: &SymbolicMap, g: &SymbolicMap) -> Result<RepairCertificate, RepairError> {
    if !f.source().has_rays() {
        return Err(RepairError::FiniteDomain);
    }
    let analysis = classify(f, g)?;
    let (k, l) = (analysis.k, analysis.l);
    if k == l {
        return Err(RepairError::AlreadyBalanced(k));
    }

    // Lead map L with eventual size kk, follow map M with size ll;
    // normalization guarantees L^{-1}(Y0) <= M^{-1}(Y0).
    let (lead, follow, kk, ll, lead_pre) = if analysis.lead_is_g {
        (&analysis.g, &analysis.f, l, k, &analysis.g_pre)
    } else {
        (&analysis.f, &analysis.g, k, l, &analysis.f_pre)
    };
    let residue: Vec<Loc> = analysis.residue().into_iter().collect();
    let n = residue.len();

    let x2 = lead.source().delete(lead_pre)?;
    let y2 = lead.target().delete(&analysis.y0)?;

    let built = if kk < ll {
        build_case1(lead, follow, kk, ll, &x2, &y2, &residue)?
    } else {
        build_case2(lead, follow, kk, ll, &x2, &y2, &residue)?
    };

    let (lead_prime, follow_prime) = (built.lead_prime, built.follow_prime);
    let (f_prime, g_prime) = if analysis.lead_is_g {
        (follow_prime, lead_prime)
    } else {
        (lead_prime, follow_prime)
    };

    let mut provenance = provenance_for(&x2, &y2, built.copies);
    provenance.extend(built.provenance);

    Ok(RepairCertificate {
        case: if k < l { 1 } else { 2 },
        internal_case: if kk < ll { 1 } else { 2 },
        swapped: analysis.lead_is_g,
        k,
        l,
        n,
        n_prime: built.n_prime,
        p_members: built.p_members,
        q_members: built.q_members,
        y0: analysis.y0.iter().cloned().collect(),
        x_prime: built.x_prime,
        y_prime: built.y_prime,
        f_prime,
        g_prime,
        provenance,
    })
}

struct Built {
    x_prime: SymbolicSet,
    y_prime: SymbolicSet,
    lead_prime: SymbolicMap,
    follow_prime: SymbolicMap,
    n_prime: usize,
    copies: usize,
    p_members: Vec<Loc>,
    q_members: Vec<Loc>,
    provenance: Vec<(String, String)>,
}

/// Case `kk < ll`: cross the clean part with `n' = ll - kk` copies and
/// adjoin fresh points `P` (|P| = kk*n) and `Q` (|Q| = n). The lead map
/// sends `P` onto `Q` kk-regularly; the follow map sends the residue
/// copies together with `P` onto `Q` ll-regularly, which is possible
/// since `n*n' + kk*n = ll*n`.
fn build_case1(
    lead: &SymbolicMap,
    follow: &SymbolicMap,
    kk: usize,
    ll: usize,
    x2: &SymbolicSet,
    y2: &SymbolicSet,
    residue: &[Loc],
) -> Result<Built, RepairError> {
    let n_prime = ll - kk;
    let n = residue.len();
    let no_extra = vec![BTreeSet::new(); n_prime];

    let p_members: Vec<Loc> = (0..kk * n).map(|j| Loc::point(format!("P{j}"))).collect();
    let q_members: Vec<Loc> = (0..n).map(|j| Loc::point(format!("Q{j}"))).collect();

    let x_prime = cross_set(x2, n_prime, &no_extra)?.adjoin_points(
        p_members.iter().map(|p| match p {
            Loc::Point(s) => s.clone(),
            Loc::Ray(..) => unreachable!(),
        }),
    )?;
    let y_prime = cross_set(y2, n_prime, &no_extra)?.adjoin_points(
        q_members.iter().map(|q| match q {
            Loc::Point(s) => s.clone(),
            Loc::Ray(..) => unreachable!(),
        }),
    )?;

    // Lead: componentwise copies plus the kk-regular map P -> Q.
    let lead_extra: BTreeMap<Loc, Loc> = p_members
        .iter()
        .enumerate()
        .map(|(j, p)| (p.clone(), q_members[j / kk].clone()))
        .collect();
    let lead_prime =
        cross_translate(lead, &x_prime, &y_prime, n_prime, &BTreeMap::new(), &lead_extra)?;

    // Follow: componentwise off the residue; the residue copies and P go
    // onto Q ll-regularly in sorted round-robin order.
    let mut to_assign: Vec<Loc> = Vec::with_capacity(n * n_prime + kk * n);
    for x in residue {
        for i in 0..n_prime {
            to_assign.push(cross_loc(x, i));
        }
    }
    to_assign.extend(p_members.iter().cloned());
    to_assign.sort();
    debug_assert_eq!(to_assign.len(), ll * n);
    let mut overrides = BTreeMap::new();
    let mut extra = BTreeMap::new();
    for (j, src) in to_assign.iter().enumerate() {
        let target = q_members[j / ll].clone();
        if p_members.binary_search(src).is_ok() {
            extra.insert(src.clone(), target);
        } else {
            overrides.insert(src.clone(), target);
        }
    }
    let follow_prime = cross_translate(follow, &x_prime, &y_prime, n_prime, &overrides, &extra)?;

    let mut provenance: Vec<(String, String)> = p_members
        .iter()
        .enumerate()
        .map(|(j, p)| (p.to_string(), format!("auxiliary source point {j} of P")))
        .collect();
    provenance.extend(
        q_members
            .iter()
            .enumerate()
            .map(|(j, q)| (q.to_string(), format!("auxiliary target point {j} of Q"))),
    );

    Ok(Built {
        x_prime,
        y_prime,
        lead_prime,
        follow_prime,
        n_prime,
        copies: n_prime,
        p_members,
        q_members,
        provenance,
    })
}

/// Case `kk > ll`: choose `n` regular targets `Q` inside the clean target
/// whose lead preimage `P` avoids the residue, cross with `n' + 1 = kk - ll`
/// copies, and drop `P` and `Q` from the last copy. The lead map stays
/// componentwise and exactly kk-regular; the follow map reroutes the
/// residue copies and the orphaned sources over `Q` into the fibres that
/// lost their `P` members.
fn build_case2(
    lead: &SymbolicMap,
    follow: &SymbolicMap,
    kk: usize,
    ll: usize,
    x2: &SymbolicSet,
    y2: &SymbolicSet,
    residue: &[Loc],
) -> Result<Built, RepairError> {
    let n_prime = kk - ll - 1;
    let copies = n_prime + 1;
    let n = residue.len();
    let residue_set: BTreeSet<Loc> = residue.iter().cloned().collect();

    // Select Q: the first n clean targets whose lead fibre avoids the
    // residue. Only |residue| targets can ever be excluded, so the
    // enumeration terminates.
    let mut q_members: Vec<Loc> = Vec::with_capacity(n);
    let mut p_members: Vec<Loc> = Vec::new();
    for y in enumerate_targets(y2) {
        if q_members.len() == n {
            break;
        }
        let pre = lead.preimage(&y);
        if pre.iter().any(|x| residue_set.contains(x)) {
            continue;
        }
        debug_assert_eq!(pre.len(), kk, "clean targets have regular lead fibres");
        p_members.extend(pre);
        q_members.push(y);
    }
    p_members.sort();
    let p_set: BTreeSet<Loc> = p_members.iter().cloned().collect();
    let q_set: BTreeSet<Loc> = q_members.iter().cloned().collect();
    if p_members.len() != kk * n {
        return Err(RepairError::Internal(format!(
            "selected P has {} members, expected {}",
            p_members.len(),
            kk * n
        )));
    }

    let mut x_extra = vec![BTreeSet::new(); copies];
    x_extra[n_prime] = p_set.clone();
    let mut y_extra = vec![BTreeSet::new(); copies];
    y_extra[n_prime] = q_set.clone();
    let x_prime = cross_set(x2, copies, &x_extra)?;
    let y_prime = cross_set(y2, copies, &y_extra)?;

    let lead_prime =
        cross_translate(lead, &x_prime, &y_prime, copies, &BTreeMap::new(), &BTreeMap::new())?;

    // Sources the follow map must re-house: every copy of the residue,
    // plus the sources whose images sat over Q in the last copy (their
    // target was deleted there).
    let mut todo: Vec<Loc> = Vec::new();
    for x in residue {
        for i in 0..copies {
            todo.push(cross_loc(x, i));
        }
    }
    for q in &q_members {
        for x in follow.preimage(q) {
            if !p_set.contains(&x) && !residue_set.contains(&x) {
                todo.push(cross_loc(&x, n_prime));
            }
        }
    }
    todo.sort();
    todo.dedup();

    // Fibres that lost members: images of P under the follow map in the
    // last copy, each short by the number of P members it contained.
    let mut deficit: BTreeMap<Loc, usize> = BTreeMap::new();
    for p in &p_members {
        let y = follow.apply(p)?;
        if !q_set.contains(&y) {
            *deficit.entry(y).or_insert(0) += 1;
        }
    }
    let mut slots: Vec<Loc> = Vec::new();
    for (y, d) in &deficit {
        for _ in 0..*d {
            slots.push(cross_loc(y, n_prime));
        }
    }
    if todo.len() != slots.len() {
        return Err(RepairError::Internal(format!(
            "rehousing mismatch: {} sources for {} slots",
            todo.len(),
            slots.len()
        )));
    }
    let overrides: BTreeMap<Loc, Loc> =
        todo.into_iter().zip(slots).collect();
    let follow_prime =
        cross_translate(follow, &x_prime, &y_prime, copies, &overrides, &BTreeMap::new())?;

    let provenance = vec![
        (
            "P".to_string(),
            format!("lead preimage of Q, removed from copy {n_prime} of the source"),
        ),
        (
            "Q".to_string(),
            format!("{n} regular targets removed from copy {n_prime} of the target"),
        ),
    ];

    Ok(Built {
        x_prime,
        y_prime,
        lead_prime,
        follow_prime,
        n_prime,
        copies,
        p_members,
        q_members,
        provenance,
    })
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("depth {depth} is below the stability bound {required}")]
    DepthBelowBound { depth: usize, required: usize },
    #[error("certificate maps are not over the certificate sets")]
    SpaceMismatch,
    #[error("map `{map}` is not total: no image for {at}")]
    Totality { map: &'static str, at: Loc },
    #[error("map `{map}` sends {at} to {image}, outside the target set")]
    ImageOutsideTarget {
        map: &'static str,
        at: Loc,
        image: Loc,
    },
    #[error("map `{map}`: fibre of {target} has size {actual}, expected {expected}")]
    WrongFibre {
        map: &'static str,
        target: Loc,
        expected: usize,
        actual: usize,
    },
    #[error("bookkeeping mismatch: {0}")]
    Bookkeeping(String),
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
}

/// The verified counts of a certificate check.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub depth: usize,
    pub sources_checked: usize,
    pub complete_fibres_f: usize,
    pub complete_fibres_g: usize,
}

/// Count fibres of `m` by brute force over the depth-`depth` slice and
/// check every fibre that is provably complete within the slice.
fn check_map_fibres(
    m: &SymbolicMap,
    name: &'static str,
    expected: usize,
    depth: usize,
) -> Result<usize, VerifyError> {
    let mut counts: BTreeMap<Loc, usize> = BTreeMap::new();
    for x in materialize_set(m.source(), depth) {
        let img = m.apply(&x).map_err(|_| VerifyError::Totality { map: name, at: x.clone() })?;
        if !m.target().contains(&img) {
            return Err(VerifyError::ImageOutsideTarget { map: name, at: x, image: img });
        }
        *counts.entry(img).or_insert(0) += 1;
    }

    // Complete fibres: all point targets, and ray targets up to the
    // horizon where every contributing rule window fits in the slice.
    let mut incoming: BTreeMap<String, Vec<&RayRule>> = BTreeMap::new();
    for rule in m.rules().values() {
        incoming.entry(rule.target.clone()).or_default().push(rule);
    }
    let mut checked = 0usize;
    for p in m.target().points() {
        let loc = Loc::point(p);
        let actual = counts.get(&loc).copied().unwrap_or(0);
        if actual != expected {
            return Err(VerifyError::WrongFibre { map: name, target: loc, expected, actual });
        }
        checked += 1;
    }
    for tray in m.target().rays() {
        let horizon = match incoming.get(&tray.label) {
            None => Some(depth.saturating_sub(1)),
            Some(rules) => {
                let mut h: Option<usize> = Some(depth.saturating_sub(1));
                for rule in rules {
                    if depth >= rule.prefix + rule.block {
                        let jr = rule.offset + (depth - rule.prefix) / rule.block - 1;
                        h = Some(h.map_or(jr, |cur| cur.min(jr)));
                    } else {
                        h = None;
                        break;
                    }
                }
                h
            }
        };
        let Some(horizon) = horizon else { continue };
        for j in 0..=horizon.min(depth.saturating_sub(1)) {
            if tray.deleted.contains(&j) {
                continue;
            }
            let loc = Loc::ray(&tray.label, j);
            let actual = counts.get(&loc).copied().unwrap_or(0);
            if actual != expected {
                return Err(VerifyError::WrongFibre { map: name, target: loc, expected, actual });
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Independently verify a certificate at materialization depth `depth`:
/// totality, images inside the target presentation, exactly-constant
/// fibre sizes on every fibre fully contained in the slice, and the
/// cardinality bookkeeping of the case equations.
pub fn verify(cert: &RepairCertificate, depth: usize) -> Result<VerifyReport, VerifyError> {
    let required = cert.f_prime.stability_bound().max(cert.g_prime.stability_bound());
    if depth < required {
        return Err(VerifyError::DepthBelowBound { depth, required });
    }
    if cert.f_prime.source() != &cert.x_prime
        || cert.g_prime.source() != &cert.x_prime
        || cert.f_prime.target() != &cert.y_prime
        || cert.g_prime.target() != &cert.y_prime
    {
        return Err(VerifyError::SpaceMismatch);
    }

    // Bookkeeping of the case arithmetic.
    if cert.k == cert.l {
        return Err(VerifyError::Bookkeeping("k = l needs no repair".into()));
    }
    if (cert.case == 1) != (cert.k < cert.l) {
        return Err(VerifyError::Bookkeeping("case tag contradicts k vs l".into()));
    }
    let (lead_k, follow_l) = if cert.swapped { (cert.l, cert.k) } else { (cert.k, cert.l) };
    match cert.internal_case {
        1 => {
            if cert.n_prime != follow_l - lead_k {
                return Err(VerifyError::Bookkeeping(format!(
                    "case-1 n' = {} but follow - lead = {}",
                    cert.n_prime,
                    follow_l - lead_k
                )));
            }
        }
        2 => {
            if cert.n_prime != lead_k - follow_l - 1 {
                return Err(VerifyError::Bookkeeping(format!(
                    "case-2 n' = {} but lead - follow - 1 = {}",
                    cert.n_prime,
                    lead_k - follow_l - 1
                )));
            }
            // X' is short of the full crossing by exactly follow_l * n
            // points: kk*n - n*(n'+1) = ll*n.
            if lead_k * cert.n != cert.n * (cert.n_prime + 1) + follow_l * cert.n {
                return Err(VerifyError::Bookkeeping("case-2 point-count identity fails".into()));
            }
        }
        c => return Err(VerifyError::Bookkeeping(format!("unknown internal case {c}"))),
    }
    if cert.p_members.len() != lead_k * cert.n {
        return Err(VerifyError::Bookkeeping(format!(
            "|P| = {} but lead*n = {}",
            cert.p_members.len(),
            lead_k * cert.n
        )));
    }
    if cert.q_members.len() != cert.n {
        return Err(VerifyError::Bookkeeping(format!(
            "|Q| = {} but n = {}",
            cert.q_members.len(),
            cert.n
        )));
    }

    let sources_checked = materialize_set(&cert.x_prime, depth).len();
    let complete_fibres_f = check_map_fibres(&cert.f_prime, "f'", cert.k, depth)?;
    let complete_fibres_g = check_map_fibres(&cert.g_prime, "g'", cert.l, depth)?;
    Ok(VerifyReport { depth, sources_checked, complete_fibres_f, complete_fibres_g })
}

/// Render a certificate as a self-contained text file: header numbers,
/// member and provenance lines, and the four symbolic blocks in the
/// symbolic spec format.
pub fn render_certificate(cert: &RepairCertificate) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    writeln!(out, "repaircert v1").unwrap();
    writeln!(out, "case {}", cert.case).unwrap();
    writeln!(out, "internalcase {}", cert.internal_case).unwrap();
    writeln!(out, "swapped {}", u8::from(cert.swapped)).unwrap();
    writeln!(out, "k {}", cert.k).unwrap();
    writeln!(out, "l {}", cert.l).unwrap();
    writeln!(out, "n {}", cert.n).unwrap();
    writeln!(out, "nprime {}", cert.n_prime).unwrap();
    for p in &cert.p_members {
        writeln!(out, "pmember {p}").unwrap();
    }
    for q in &cert.q_members {
        writeln!(out, "qmember {q}").unwrap();
    }
    for y in &cert.y0 {
        writeln!(out, "y0 {y}").unwrap();
    }
    out.push_str(&render_symset("Xprime", &cert.x_prime));
    out.push_str(&render_symset("Yprime", &cert.y_prime));
    out.push_str(&render_symmap("fprime", "Xprime", "Yprime", &cert.f_prime));
    out.push_str(&render_symmap("gprime", "Xprime", "Yprime", &cert.g_prime));
    for (label, origin) in &cert.provenance {
        writeln!(out, "prov {label} {origin}").unwrap();
    }
    writeln!(out, "endcert").unwrap();
    out
}

/// Parse a certificate file rendered by [`render_certificate`].
pub fn parse_certificate(text: &str) -> Result<RepairCertificate, SymbolicError> {
    let err = |line: usize, message: String| SymbolicError::Parse { line, message };
    let mut case = None;
    let mut internal_case = None;
    let mut swapped = None;
    let mut k = None;
    let mut l = None;
    let mut n = None;
    let mut n_prime = None;
    let mut p_members = Vec::new();
    let mut q_members = Vec::new();
    let mut y0 = Vec::new();
    let mut provenance = Vec::new();
    let mut blocks = String::new();
    let mut in_block = false;
    let mut saw_terminator = false;

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'));
    let (hline, header) =
        lines.next().ok_or_else(|| err(1, "empty certificate".into()))?;
    if header != "repaircert v1" {
        return Err(err(hline, "expected `repaircert v1`".into()));
    }

    for (line, text_line) in lines {
        if in_block {
            blocks.push_str(text_line);
            blocks.push('\n');
            if text_line == "end" {
                in_block = false;
            }
            continue;
        }
        let toks: Vec<&str> = text_line.split_whitespace().collect();
        let parse_num = |tok: &str| {
            tok.parse::<usize>()
                .map_err(|_| err(line, format!("bad number `{tok}`")))
        };
        match toks.split_first() {
            Some((&"case", [v])) => case = Some(parse_num(v)? as u8),
            Some((&"internalcase", [v])) => internal_case = Some(parse_num(v)? as u8),
            Some((&"swapped", [v])) => swapped = Some(parse_num(v)? != 0),
            Some((&"k", [v])) => k = Some(parse_num(v)?),
            Some((&"l", [v])) => l = Some(parse_num(v)?),
            Some((&"n", [v])) => n = Some(parse_num(v)?),
            Some((&"nprime", [v])) => n_prime = Some(parse_num(v)?),
            Some((&"pmember", [v])) => p_members.push(Loc::parse(v)?),
            Some((&"qmember", [v])) => q_members.push(Loc::parse(v)?),
            Some((&"y0", [v])) => y0.push(Loc::parse(v)?),
            Some((&"prov", rest)) if !rest.is_empty() => {
                provenance.push((rest[0].to_string(), rest[1..].join(" ")));
            }
            Some((&"symset", _)) | Some((&"symmap", _)) => {
                blocks.push_str(text_line);
                blocks.push('\n');
                in_block = true;
            }
            Some((&"endcert", [])) => {
                saw_terminator = true;
                break;
            }
            _ => return Err(err(line, format!("unrecognized certificate line `{text_line}`"))),
        }
    }
    if !saw_terminator {
        return Err(err(0, "certificate not closed by `endcert`".into()));
    }

    let spec = parse_symspec(&blocks)?;
    let missing = |what: &str| err(0, format!("certificate is missing {what}"));
    let x_prime = spec.set("Xprime").ok_or_else(|| missing("symset Xprime"))?.clone();
    let y_prime = spec.set("Yprime").ok_or_else(|| missing("symset Yprime"))?.clone();
    let f_prime = spec.map("fprime").ok_or_else(|| missing("symmap fprime"))?.clone();
    let g_prime = spec.map("gprime").ok_or_else(|| missing("symmap gprime"))?.clone();

    Ok(RepairCertificate {
        case: case.ok_or_else(|| missing("case"))?,
        internal_case: internal_case.ok_or_else(|| missing("internalcase"))?,
        swapped: swapped.ok_or_else(|| missing("swapped"))?,
        k: k.ok_or_else(|| missing("k"))?,
        l: l.ok_or_else(|| missing("l"))?,
        n: n.ok_or_else(|| missing("n"))?,
        n_prime: n_prime.ok_or_else(|| missing("nprime"))?,
        p_members,
        q_members,
        y0,
        x_prime,
        y_prime,
        f_prime,
        g_prime,
        provenance,
    })
}
