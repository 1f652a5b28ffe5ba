//! The coherent locally-cartesian-closed structure on presheaves over
//! finite posets: pullback along a natural transformation, dependent sum
//! and dependent product along a projection, the currying bijection between
//! sections, and composition of sections with fibrations.
//!
//! The point of these particular constructions is that the coherence laws —
//! pullback identity/composition, and the Beck–Chevalley conditions for
//! both adjoints — hold as structural *equalities* of indexed sets, not
//! just isomorphisms. For the dependent product this hinges on the
//! restricted families being keyed by tuples in which the base-fiber
//! component is replaced with the empty tuple, so the key sets on both
//! sides of a pullback coincide literally.

use crate::indexed::{
    grot_pair, grothendieck, indexed_elements, Elem, FinPoset, IndexedError, IndexedSet, NatTrans,
    PosetMap, Section,
};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Cap on the number of candidate families materialized for a single
/// dependent-product fiber. Nested products grow doubly exponentially; the
/// cap turns a would-be blowup into a clean error.
pub const FIBER_BUDGET: usize = 100_000;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum LccError {
    #[error(transparent)]
    Indexed(#[from] IndexedError),
    #[error("base mismatch: {0}")]
    BaseMismatch(String),
    #[error("dependent-product fiber at {at} would exceed the budget ({bound} candidate families)")]
    Budget { at: Elem, bound: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("enumeration exceeded cap of {0}")]
    EnumerationCap(usize),
}

/// Reindex an indexed set along a monotone map into its base.
pub fn precompose(f: &PosetMap, a: &IndexedSet) -> Result<IndexedSet, LccError> {
    if f.dst() != a.base() {
        return Err(LccError::BaseMismatch(
            "precomposition target is not the indexed set's base".to_string(),
        ));
    }
    let fiber: BTreeMap<Elem, BTreeSet<Elem>> = f
        .src()
        .elems()
        .iter()
        .map(|q| (q.clone(), a.fiber(f.apply(q)).clone()))
        .collect();
    let transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = f
        .src()
        .pairs()
        .iter()
        .map(|(q, q2)| {
            (
                (q.clone(), q2.clone()),
                a.transports()[&(f.apply(q).clone(), f.apply(q2).clone())].clone(),
            )
        })
        .collect();
    Ok(IndexedSet::new(f.src().clone(), fiber, transport)?)
}

/// The fibration of a natural transformation: the induced monotone map
/// between the categories of elements.
pub fn nat_fibration(h: &NatTrans) -> PosetMap {
    crate::indexed::nat_to_fibration_map(h)
}

/// The fibration of a section of an indexed set over `Q`: the map
/// `q ↦ (q, s_q)` from `Q` into the category of elements of the owner.
pub fn section_fibration(s: &Section) -> Result<PosetMap, LccError> {
    let q = s.owner().base().clone();
    let int = grothendieck(s.owner());
    let map = q
        .elems()
        .iter()
        .map(|p| (p.clone(), Elem::pair(p.clone(), s.at(p).clone())))
        .collect();
    Ok(PosetMap::new(q, int, map)?)
}

/// The associativity reshaping `((p,a),b) ↦ (p,(a,b))` from the category of
/// elements of `B` (over the category of elements of `A`) to the category
/// of elements of `A ⋉ B`.
pub fn assoc_map(b: &IndexedSet, target: &FinPoset) -> Result<PosetMap, LccError> {
    let int_b = grothendieck(b);
    let mut map = BTreeMap::new();
    for e in int_b.elems() {
        let x = e
            .fst()
            .ok_or_else(|| LccError::Shape("element of the domain is not a pair".to_string()))?;
        let bv = e.snd().expect("pair element");
        let p = x.fst().ok_or_else(|| {
            LccError::Shape("base element is not itself a pair (p,a)".to_string())
        })?;
        let av = x.snd().expect("pair element");
        map.insert(
            e.clone(),
            Elem::pair(p.clone(), Elem::pair(av.clone(), bv.clone())),
        );
    }
    Ok(PosetMap::new(int_b, target.clone(), map)?)
}

/// Pullback along `h : A2 -> A1` of an indexed set over the category of
/// elements of `A1`: precomposition with the fibration of `h`. The second
/// result is the mediating transformation `A2 ⋉ h*B -> A1 ⋉ B`,
/// `(a2, b) ↦ (h(a2), b)`.
pub fn pullback(h: &NatTrans, b: &IndexedSet) -> Result<(IndexedSet, NatTrans), LccError> {
    if b.base() != &grothendieck(h.dst()) {
        return Err(LccError::BaseMismatch(
            "pullback subject is not indexed over the category of elements of the target"
                .to_string(),
        ));
    }
    let hb = precompose(&nat_fibration(h), b)?;
    let (src_pair, _) = grot_pair(h.src(), &hb)?;
    let (dst_pair, _) = grot_pair(h.dst(), b)?;
    let component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = src_pair
        .fibers()
        .iter()
        .map(|(p, fib)| {
            (
                p.clone(),
                fib.iter()
                    .map(|e| {
                        let a2 = e.fst().expect("pair fiber");
                        let bv = e.snd().expect("pair fiber");
                        (
                            e.clone(),
                            Elem::pair(h.apply(p, a2).clone(), bv.clone()),
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    let pbf = NatTrans::new(src_pair, dst_pair, component)?;
    Ok((hb, pbf))
}

/// Dependent sum along the projection of `B`: for `B` over the category of
/// elements of `A` and `C` over the category of elements of `A ⋉ B`, the
/// fiber at `(p,a)` is the set of pairs `(b, c)` with `c` in `C(p,(a,b))`.
pub fn dep_sum(b: &IndexedSet, c: &IndexedSet) -> Result<IndexedSet, LccError> {
    let assoc = assoc_map(b, c.base())?;
    let c_over_int_b = precompose(&assoc, c)?;
    Ok(grot_pair(b, &c_over_int_b)?.0)
}

/// The per-point restriction data used by the dependent product: for
/// `x = (p, a)` in the category of elements of `A`, the Yoneda fiber of `p`
/// with its inclusion into `A`, the pullbacks of `B` and `C` along it, and
/// the resulting index poset of restricted families.
pub struct AuxRestriction {
    pub ax: IndexedSet,
    pub ix: NatTrans,
    pub bx: IndexedSet,
    pub cx: IndexedSet,
    pub dx: FinPoset,
}

pub fn aux_restriction(
    a: &IndexedSet,
    b: &IndexedSet,
    c: &IndexedSet,
    x: &Elem,
) -> Result<AuxRestriction, LccError> {
    let p = x
        .fst()
        .ok_or_else(|| LccError::Shape("dependent-product index is not a pair".to_string()))?;
    let av = x.snd().expect("pair element");
    let mut fiber: BTreeMap<Elem, BTreeSet<Elem>> = BTreeMap::new();
    for q in a.base().elems() {
        let f: BTreeSet<Elem> = if a.base().le(p, q) {
            [Elem::Unit].into_iter().collect()
        } else {
            BTreeSet::new()
        };
        fiber.insert(q.clone(), f);
    }
    let transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = a
        .base()
        .pairs()
        .iter()
        .map(|(q, q2)| {
            let m: BTreeMap<Elem, Elem> = if a.base().le(p, q) {
                [(Elem::Unit, Elem::Unit)].into_iter().collect()
            } else {
                BTreeMap::new()
            };
            ((q.clone(), q2.clone()), m)
        })
        .collect();
    let ax = IndexedSet::new(a.base().clone(), fiber, transport)?;
    let component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = a
        .base()
        .elems()
        .iter()
        .map(|q| {
            let m: BTreeMap<Elem, Elem> = if a.base().le(p, q) {
                [(Elem::Unit, a.transport(p, q, av).clone())]
                    .into_iter()
                    .collect()
            } else {
                BTreeMap::new()
            };
            (q.clone(), m)
        })
        .collect();
    let ix = NatTrans::new(ax.clone(), a.clone(), component)?;
    let (bx, pbf_ix) = pullback(&ix, b)?;
    let (cx, _) = pullback(&pbf_ix, c)?;
    let dx = grothendieck(&grot_pair(&ax, &bx)?.0);
    Ok(AuxRestriction { ax, ix, bx, cx, dx })
}

/// Encode a family keyed by poset elements as a canonical value: the
/// left-nested tuple of key/value pairs in ascending key order.
pub fn encode_family(entries: &BTreeMap<Elem, Elem>) -> Elem {
    let items: Vec<Elem> = entries
        .iter()
        .map(|(k, v)| Elem::pair(k.clone(), v.clone()))
        .collect();
    Elem::tuple(&items)
}

/// Decode a family back into its key/value entries.
pub fn decode_family(e: &Elem) -> Result<BTreeMap<Elem, Elem>, LccError> {
    let mut out = BTreeMap::new();
    let mut cur = e;
    loop {
        match cur {
            Elem::Unit => return Ok(out),
            Elem::Pair(rest, entry) => {
                match &**entry {
                    Elem::Pair(k, v) => {
                        out.insert((**k).clone(), (**v).clone());
                    }
                    other => {
                        return Err(LccError::Shape(format!(
                            "family entry {} is not a key/value pair",
                            other
                        )))
                    }
                }
                cur = rest;
            }
            other => {
                return Err(LccError::Shape(format!(
                    "value {} is not an encoded family",
                    other
                )))
            }
        }
    }
}

/// Dependent product along the projection of `B`: the fiber at `x = (p,a)`
/// is the set of sections of the restricted family `Cˣ`, stored as
/// canonical sorted association lists keyed by the elements of `dˣ`;
/// transport restricts a family to the smaller key set.
pub fn dep_prod(
    a: &IndexedSet,
    b: &IndexedSet,
    c: &IndexedSet,
) -> Result<IndexedSet, LccError> {
    let int_a = grothendieck(a);
    if b.base() != &int_a {
        return Err(LccError::BaseMismatch(
            "B must be indexed over the category of elements of A".to_string(),
        ));
    }
    let (ab, _) = grot_pair(a, b)?;
    if c.base() != &grothendieck(&ab) {
        return Err(LccError::BaseMismatch(
            "C must be indexed over the category of elements of A ⋉ B".to_string(),
        ));
    }
    let mut fiber: BTreeMap<Elem, BTreeSet<Elem>> = BTreeMap::new();
    let mut key_sets: BTreeMap<Elem, BTreeSet<Elem>> = BTreeMap::new();
    for x in int_a.elems() {
        let aux = aux_restriction(a, b, c, x)?;
        // Candidate families are products of the fibers at the minimal
        // elements of dˣ; bail out before materializing a blowup.
        let mut bound: usize = 1;
        for m in aux.dx.minimals() {
            bound = bound.saturating_mul(aux.cx.fiber(&m).len().max(1));
            if bound > FIBER_BUDGET {
                return Err(LccError::Budget {
                    at: x.clone(),
                    bound,
                });
            }
        }
        let sections = indexed_elements(&aux.cx);
        let fams: BTreeSet<Elem> = sections
            .iter()
            .map(|s| encode_family(s.choices()))
            .collect();
        key_sets.insert(x.clone(), aux.dx.elems().clone());
        fiber.insert(x.clone(), fams);
    }
    let mut transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = BTreeMap::new();
    for (x, x2) in int_a.pairs() {
        let keys2 = &key_sets[x2];
        let mut m = BTreeMap::new();
        for fam in &fiber[x] {
            let entries = decode_family(fam)?;
            let restricted: BTreeMap<Elem, Elem> = entries
                .into_iter()
                .filter(|(k, _)| keys2.contains(k))
                .collect();
            m.insert(fam.clone(), encode_family(&restricted));
        }
        transport.insert((x.clone(), x2.clone()), m);
    }
    Ok(IndexedSet::new(int_a, fiber, transport)?)
}

/// Currying: turn a section of `C` (over the category of elements of
/// `A ⋉ B`) into a section of the dependent product, splitting it into the
/// restricted families.
pub fn split(
    a: &IndexedSet,
    b: &IndexedSet,
    c: &IndexedSet,
    t: &Section,
) -> Result<Section, LccError> {
    if t.owner() != c {
        return Err(LccError::Shape(
            "section to split is not a section of C".to_string(),
        ));
    }
    let prod = dep_prod(a, b, c)?;
    let int_a = grothendieck(a);
    let mut choice: BTreeMap<Elem, Elem> = BTreeMap::new();
    for x in int_a.elems() {
        let p = x.fst().expect("pair element");
        let av = x.snd().expect("pair element");
        let aux = aux_restriction(a, b, c, x)?;
        let mut entries: BTreeMap<Elem, Elem> = BTreeMap::new();
        for y in aux.dx.elems() {
            let p2 = y.fst().expect("pair element");
            let inner = y.snd().expect("pair element");
            let bv = inner.snd().expect("pair element");
            let a2 = a.transport(p, p2, av);
            let orig = Elem::pair(p2.clone(), Elem::pair(a2.clone(), bv.clone()));
            entries.insert(y.clone(), t.at(&orig).clone());
        }
        choice.insert(x.clone(), encode_family(&entries));
    }
    Ok(Section::new(prod, choice)?)
}

/// Uncurrying: evaluate a section of the dependent product back into a
/// section of `C`.
pub fn unsplit(
    a: &IndexedSet,
    b: &IndexedSet,
    c: &IndexedSet,
    f: &Section,
) -> Result<Section, LccError> {
    let prod = dep_prod(a, b, c)?;
    if f.owner() != &prod {
        return Err(LccError::Shape(
            "section to unsplit is not a section of the dependent product".to_string(),
        ));
    }
    let mut choice: BTreeMap<Elem, Elem> = BTreeMap::new();
    for y in c.base().elems() {
        let p = y.fst().expect("pair element");
        let inner = y.snd().expect("pair element");
        let av = inner.fst().expect("pair element");
        let bv = inner.snd().expect("pair element");
        let x = Elem::pair(p.clone(), av.clone());
        let fam = decode_family(f.at(&x))?;
        let key = Elem::pair(p.clone(), Elem::pair(Elem::Unit, bv.clone()));
        let value = fam.get(&key).ok_or_else(|| {
            LccError::Shape(format!("family at {} lacks the key {}", x, key))
        })?;
        choice.insert(y.clone(), value.clone());
    }
    Ok(Section::new(c.clone(), choice)?)
}

/// Precompose a section with a fibration: the section over `Q` whose value
/// at `q` is the original value at `f(q)`, owned by the reindexed set.
pub fn compose_section(f: &PosetMap, a: &Section) -> Result<Section, LccError> {
    if f.dst() != a.owner().base() {
        return Err(LccError::BaseMismatch(
            "fibration does not land in the section's base".to_string(),
        ));
    }
    f.check_fibration()?;
    let owner = precompose(f, a.owner())?;
    let choice = f
        .src()
        .elems()
        .iter()
        .map(|q| (q.clone(), a.at(f.apply(q)).clone()))
        .collect();
    Ok(Section::new(owner, choice)?)
}

/// Exhaustively enumerate the natural transformations between two indexed
/// sets over the same base, in deterministic order, failing if more than
/// `cap` exist.
pub fn enumerate_nat_trans(
    src: &IndexedSet,
    dst: &IndexedSet,
    cap: usize,
) -> Result<Vec<NatTrans>, LccError> {
    if src.base() != dst.base() {
        return Err(LccError::BaseMismatch(
            "hom-set of indexed sets over different posets".to_string(),
        ));
    }
    let order = src.base().linear_extension();
    // Process fiber elements point by point in a linear extension; values
    // forced by naturality from below are checked, free ones branch.
    let mut slots: Vec<(Elem, Elem)> = Vec::new();
    for p in &order {
        for e in src.fiber(p) {
            slots.push((p.clone(), e.clone()));
        }
    }
    let mut results: Vec<BTreeMap<(Elem, Elem), Elem>> = vec![BTreeMap::new()];
    for (p, e) in &slots {
        let mut next: Vec<BTreeMap<(Elem, Elem), Elem>> = Vec::new();
        for partial in &results {
            // Forced candidates from already-assigned predecessors.
            let mut forced: Option<Elem> = None;
            let mut consistent = true;
            for ((p0, e0), v0) in partial.iter() {
                if src.base().le(p0, p) && src.transport(p0, p, e0) == e {
                    let req = dst.transport(p0, p, v0).clone();
                    match &forced {
                        Some(f) if f != &req => {
                            consistent = false;
                            break;
                        }
                        _ => forced = Some(req),
                    }
                }
            }
            if !consistent {
                continue;
            }
            let candidates: Vec<Elem> = match forced {
                Some(f) => {
                    if dst.fiber(p).contains(&f) {
                        vec![f]
                    } else {
                        vec![]
                    }
                }
                None => dst.fiber(p).iter().cloned().collect(),
            };
            for v in candidates {
                let mut extended = partial.clone();
                extended.insert((p.clone(), e.clone()), v);
                next.push(extended);
                if next.len() > cap {
                    return Err(LccError::EnumerationCap(cap));
                }
            }
        }
        results = next;
    }
    let mut out = Vec::new();
    for assignment in results {
        let mut component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = src
            .base()
            .elems()
            .iter()
            .map(|p| (p.clone(), BTreeMap::new()))
            .collect();
        for ((p, e), v) in assignment {
            component.get_mut(&p).expect("base element").insert(e, v);
        }
        out.push(NatTrans::new(src.clone(), dst.clone(), component)?);
    }
    Ok(out)
}

/// A sub-indexed-set generated by choosing seed elements and closing under
/// transport; the second result is the inclusion.
pub fn sub_generated(
    a: &IndexedSet,
    seeds: &BTreeMap<Elem, BTreeSet<Elem>>,
) -> Result<(IndexedSet, NatTrans), LccError> {
    let mut chosen: BTreeMap<Elem, BTreeSet<Elem>> = a
        .base()
        .elems()
        .iter()
        .map(|p| (p.clone(), seeds.get(p).cloned().unwrap_or_default()))
        .collect();
    loop {
        let mut grew = false;
        for (p, q) in a.base().pairs() {
            let sources: Vec<Elem> = chosen[p].iter().cloned().collect();
            for e in sources {
                let te = a.transport(p, q, &e).clone();
                if chosen.get_mut(q).expect("base element").insert(te) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    let transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = a
        .base()
        .pairs()
        .iter()
        .map(|(p, q)| {
            (
                (p.clone(), q.clone()),
                chosen[p]
                    .iter()
                    .map(|e| (e.clone(), a.transport(p, q, e).clone()))
                    .collect(),
            )
        })
        .collect();
    let sub = IndexedSet::new(a.base().clone(), chosen.clone(), transport)?;
    let component = chosen
        .iter()
        .map(|(p, fib)| {
            (
                p.clone(),
                fib.iter().map(|e| (e.clone(), e.clone())).collect(),
            )
        })
        .collect();
    let incl = NatTrans::new(sub.clone(), a.clone(), component)?;
    Ok((sub, incl))
}

/// Per-instance law outcome: how many inner checks ran and the first
/// counterexample, if any.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceLaw {
    pub law: String,
    pub checks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl InstanceLaw {
    fn ok(law: &str, checks: usize) -> InstanceLaw {
        InstanceLaw {
            law: law.to_string(),
            checks,
            failure: None,
        }
    }

    fn fail(law: &str, checks: usize, msg: String) -> InstanceLaw {
        InstanceLaw {
            law: law.to_string(),
            checks,
            failure: Some(msg),
        }
    }
}

/// Check the adjunction and coherence laws for one `(A, B, C)` instance:
///
/// 1. hom-set bijection for the dependent sum (exhaustively counted);
/// 2. hom-set bijection for the dependent product (exhaustively counted);
/// 3. Beck–Chevalley for the sum, as a structural equality;
/// 4. Beck–Chevalley for the product, as a structural equality;
/// 5. split/unsplit mutual inversion;
/// 6. the split-coherence law relating split and pullback.
///
/// Auxiliary data (the `D` on the adjunction sides, the `g : A' -> A` on
/// the Beck–Chevalley sides) is either supplied or derived canonically.
pub fn check_adjunctions(
    a: &IndexedSet,
    b: &IndexedSet,
    c: &IndexedSet,
    ds: &[IndexedSet],
    gs: &[NatTrans],
    hom_cap: usize,
) -> Result<Vec<InstanceLaw>, LccError> {
    let mut out = Vec::new();
    let (ab, proj) = grot_pair(a, b)?;
    let int_ab = grothendieck(&ab);
    if c.base() != &int_ab {
        return Err(LccError::BaseMismatch(
            "C must be indexed over the category of elements of A ⋉ B".to_string(),
        ));
    }
    let sum = dep_sum(b, c)?;
    let prod = dep_prod(a, b, c)?;

    // (1) Hom(Σ_B C, D) ≅ Hom(C, proj*D) via explicit transposition.
    {
        let mut checks = 0;
        let mut failure = None;
        'dloop: for d in ds {
            let (proj_d, _) = pullback(&proj, d)?;
            let left = enumerate_nat_trans(&sum, d, hom_cap)?;
            let right = enumerate_nat_trans(c, &proj_d, hom_cap)?;
            checks += 1;
            if left.len() != right.len() {
                failure = Some(format!(
                    "hom-set sizes differ: |Hom(ΣBC,D)| = {}, |Hom(C,proj*D)| = {}",
                    left.len(),
                    right.len()
                ));
                break;
            }
            let mut seen: BTreeSet<Vec<u8>> = BTreeSet::new();
            for phi in &left {
                let psi = transpose_sum(a, b, c, d, &proj_d, phi)?;
                if !right.contains(&psi) {
                    failure = Some("transpose left the right-hand hom-set".to_string());
                    break 'dloop;
                }
                let back = untranspose_sum(a, b, c, d, &sum, &psi)?;
                if &back != phi {
                    failure = Some("untranspose(transpose(φ)) differs from φ".to_string());
                    break 'dloop;
                }
                seen.insert(format!("{:?}", psi.components()).into_bytes());
            }
            if seen.len() != left.len() {
                failure = Some("transposition is not injective".to_string());
                break;
            }
            for psi in &right {
                let phi = untranspose_sum(a, b, c, d, &sum, psi)?;
                let again = transpose_sum(a, b, c, d, &proj_d, &phi)?;
                if &again != psi {
                    failure = Some("transpose(untranspose(ψ)) differs from ψ".to_string());
                    break 'dloop;
                }
            }
        }
        out.push(match failure {
            None => InstanceLaw::ok("sum_adjunction", checks),
            Some(msg) => InstanceLaw::fail("sum_adjunction", checks, msg),
        });
    }

    // (2) Hom(proj*D, C) ≅ Hom(D, Π_B C) via explicit transposition.
    {
        let mut checks = 0;
        let mut failure = None;
        'dloop2: for d in ds {
            let (proj_d, _) = pullback(&proj, d)?;
            let left = enumerate_nat_trans(&proj_d, c, hom_cap)?;
            let right = enumerate_nat_trans(d, &prod, hom_cap)?;
            checks += 1;
            if left.len() != right.len() {
                failure = Some(format!(
                    "hom-set sizes differ: |Hom(proj*D,C)| = {}, |Hom(D,ΠBC)| = {}",
                    left.len(),
                    right.len()
                ));
                break;
            }
            for phi in &left {
                let psi = transpose_prod(a, b, c, d, &prod, phi)?;
                if !right.contains(&psi) {
                    failure = Some("transpose left the right-hand hom-set".to_string());
                    break 'dloop2;
                }
                let back = untranspose_prod(a, b, c, d, &proj_d, &psi)?;
                if &back != phi {
                    failure = Some("untranspose(transpose(φ)) differs from φ".to_string());
                    break 'dloop2;
                }
            }
            for psi in &right {
                let phi = untranspose_prod(a, b, c, d, &proj_d, psi)?;
                let again = transpose_prod(a, b, c, d, &prod, &phi)?;
                if &again != psi {
                    failure = Some("transpose(untranspose(ψ)) differs from ψ".to_string());
                    break 'dloop2;
                }
            }
        }
        out.push(match failure {
            None => InstanceLaw::ok("prod_adjunction", checks),
            Some(msg) => InstanceLaw::fail("prod_adjunction", checks, msg),
        });
    }

    // (3)+(4) Beck–Chevalley, as exact structural equalities.
    {
        let mut checks = 0;
        let mut failure_sum = None;
        let mut failure_prod = None;
        for g in gs {
            if g.dst() != a {
                return Err(LccError::BaseMismatch(
                    "Beck–Chevalley transformation must land in A".to_string(),
                ));
            }
            checks += 1;
            let (gb, pbf_g) = pullback(g, b)?;
            let (gc, _) = pullback(&pbf_g, c)?;
            let lhs_sum = precompose(&nat_fibration(g), &sum)?;
            let rhs_sum = dep_sum(&gb, &gc)?;
            if failure_sum.is_none() && lhs_sum != rhs_sum {
                failure_sum = Some(format!(
                    "g*(Σ_B C) differs from Σ_(g*B)((pbf g B)*C) over {:?}",
                    g.src().base()
                ));
            }
            let lhs_prod = precompose(&nat_fibration(g), &prod)?;
            let rhs_prod = dep_prod(g.src(), &gb, &gc)?;
            if failure_prod.is_none() && lhs_prod != rhs_prod {
                failure_prod = Some(format!(
                    "g*(Π_B C) differs from Π_(g*B)((pbf g B)*C) over {:?}",
                    g.src().base()
                ));
            }
        }
        out.push(match failure_sum {
            None => InstanceLaw::ok("beck_chevalley_sum", checks),
            Some(msg) => InstanceLaw::fail("beck_chevalley_sum", checks, msg),
        });
        out.push(match failure_prod {
            None => InstanceLaw::ok("beck_chevalley_prod", checks),
            Some(msg) => InstanceLaw::fail("beck_chevalley_prod", checks, msg),
        });
    }

    // (5) split and unsplit are mutually inverse.
    {
        let mut checks = 0;
        let mut failure = None;
        for t in indexed_elements(c) {
            checks += 1;
            let f = split(a, b, c, &t)?;
            let back = unsplit(a, b, c, &f)?;
            if back != t {
                failure = Some("unsplit(split(t)) differs from t".to_string());
                break;
            }
        }
        if failure.is_none() {
            for f in indexed_elements(&prod) {
                checks += 1;
                let t = unsplit(a, b, c, &f)?;
                let again = split(a, b, c, &t)?;
                if again != f {
                    failure = Some("split(unsplit(f)) differs from f".to_string());
                    break;
                }
            }
        }
        out.push(match failure {
            None => InstanceLaw::ok("split_unsplit_inverse", checks),
            Some(msg) => InstanceLaw::fail("split_unsplit_inverse", checks, msg),
        });
    }

    // (6) split coherence: splitting a pulled-back section agrees with the
    // pullback of the split, pointwise along the fibration of g.
    {
        let mut checks = 0;
        let mut failure = None;
        'gloop: for g in gs {
            let (gb, pbf_g) = pullback(g, b)?;
            let (gc, _) = pullback(&pbf_g, c)?;
            let fib_pbf = nat_fibration(&pbf_g);
            let fib_g = nat_fibration(g);
            for t in indexed_elements(c) {
                checks += 1;
                let pulled = compose_section(&fib_pbf, &t)?;
                // The pulled-back section lives over ∫(A' ⋉ g*B) with owner
                // (pbf g)*C, which is exactly gc.
                let pulled = Section::new(gc.clone(), pulled.choices().clone())?;
                let lhs = split(g.src(), &gb, &gc, &pulled)?;
                let rhs = split(a, b, c, &t)?;
                for x2 in grothendieck(g.src()).elems() {
                    let lhs_fam = decode_family(lhs.at(x2))?;
                    let rhs_fam = decode_family(rhs.at(fib_g.apply(x2)))?;
                    if lhs_fam != rhs_fam {
                        failure = Some(format!(
                            "split coherence fails at {}: {:?} vs {:?}",
                            x2, lhs_fam, rhs_fam
                        ));
                        break 'gloop;
                    }
                }
            }
        }
        out.push(match failure {
            None => InstanceLaw::ok("split_coherence", checks),
            Some(msg) => InstanceLaw::fail("split_coherence", checks, msg),
        });
    }

    Ok(out)
}

fn transpose_sum(
    a: &IndexedSet,
    _b: &IndexedSet,
    c: &IndexedSet,
    _d: &IndexedSet,
    proj_d: &IndexedSet,
    phi: &NatTrans,
) -> Result<NatTrans, LccError> {
    let _ = a;
    let mut component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = BTreeMap::new();
    for y in c.base().elems() {
        let p = y.fst().expect("pair element");
        let inner = y.snd().expect("pair element");
        let av = inner.fst().expect("pair element");
        let bv = inner.snd().expect("pair element");
        let x = Elem::pair(p.clone(), av.clone());
        let mut m = BTreeMap::new();
        for cv in c.fiber(y) {
            let sv = Elem::pair(bv.clone(), cv.clone());
            m.insert(cv.clone(), phi.apply(&x, &sv).clone());
        }
        component.insert(y.clone(), m);
    }
    Ok(NatTrans::new(c.clone(), proj_d.clone(), component)?)
}

fn untranspose_sum(
    _a: &IndexedSet,
    _b: &IndexedSet,
    c: &IndexedSet,
    d: &IndexedSet,
    sum: &IndexedSet,
    psi: &NatTrans,
) -> Result<NatTrans, LccError> {
    let mut component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = BTreeMap::new();
    for x in sum.base().elems() {
        let p = x.fst().expect("pair element");
        let av = x.snd().expect("pair element");
        let mut m = BTreeMap::new();
        for sv in sum.fiber(x) {
            let bv = sv.fst().expect("pair fiber");
            let cv = sv.snd().expect("pair fiber");
            let y = Elem::pair(p.clone(), Elem::pair(av.clone(), bv.clone()));
            let _ = c;
            m.insert(sv.clone(), psi.apply(&y, cv).clone());
        }
        component.insert(x.clone(), m);
    }
    Ok(NatTrans::new(sum.clone(), d.clone(), component)?)
}

fn transpose_prod(
    a: &IndexedSet,
    b: &IndexedSet,
    c: &IndexedSet,
    d: &IndexedSet,
    prod: &IndexedSet,
    phi: &NatTrans,
) -> Result<NatTrans, LccError> {
    let int_a = grothendieck(a);
    let mut component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = BTreeMap::new();
    for x in int_a.elems() {
        let p = x.fst().expect("pair element");
        let av = x.snd().expect("pair element");
        let aux = aux_restriction(a, b, c, x)?;
        let mut m = BTreeMap::new();
        for dv in d.fiber(x) {
            let mut entries: BTreeMap<Elem, Elem> = BTreeMap::new();
            for y in aux.dx.elems() {
                let p2 = y.fst().expect("pair element");
                let inner = y.snd().expect("pair element");
                let bv = inner.snd().expect("pair element");
                let a2 = a.transport(p, p2, av);
                let x2 = Elem::pair(p2.clone(), a2.clone());
                let orig = Elem::pair(p2.clone(), Elem::pair(a2.clone(), bv.clone()));
                let dv2 = d.transport(x, &x2, dv);
                entries.insert(y.clone(), phi.apply(&orig, dv2).clone());
            }
            m.insert(dv.clone(), encode_family(&entries));
        }
        component.insert(x.clone(), m);
    }
    Ok(NatTrans::new(d.clone(), prod.clone(), component)?)
}

fn untranspose_prod(
    _a: &IndexedSet,
    _b: &IndexedSet,
    c: &IndexedSet,
    _d: &IndexedSet,
    proj_d: &IndexedSet,
    psi: &NatTrans,
) -> Result<NatTrans, LccError> {
    let mut component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = BTreeMap::new();
    for y in c.base().elems() {
        let p = y.fst().expect("pair element");
        let inner = y.snd().expect("pair element");
        let av = inner.fst().expect("pair element");
        let bv = inner.snd().expect("pair element");
        let x = Elem::pair(p.clone(), av.clone());
        let key = Elem::pair(p.clone(), Elem::pair(Elem::Unit, bv.clone()));
        let mut m = BTreeMap::new();
        for dv in proj_d.fiber(y) {
            let fam = decode_family(psi.apply(&x, dv))?;
            let cv = fam.get(&key).ok_or_else(|| {
                LccError::Shape(format!("family at {} lacks the key {}", x, key))
            })?;
            m.insert(dv.clone(), cv.clone());
        }
        component.insert(y.clone(), m);
    }
    Ok(NatTrans::new(proj_d.clone(), c.clone(), component)?)
}

/// Pullback-square laws for a given `h : A2 -> A1` and `B`: the square
/// commutes, identity and composition coherence hold structurally, and the
/// square is universal (every commuting cone has exactly one mediating
/// transformation, searched exhaustively).
pub fn check_pullback_laws(
    h: &NatTrans,
    b: &IndexedSet,
    g: Option<&NatTrans>,
    cones: &[IndexedSet],
    hom_cap: usize,
) -> Result<Vec<InstanceLaw>, LccError> {
    let mut out = Vec::new();
    let (hb, pbf) = pullback(h, b)?;
    let (_, proj_b) = grot_pair(h.dst(), b)?;
    let (a2_pair, proj_hb) = grot_pair(h.src(), &hb)?;

    // Square commutes.
    {
        let left = proj_hb.then(h)?;
        let right = pbf.then(&proj_b)?;
        out.push(if left == right {
            InstanceLaw::ok("pullback_square_commutes", 1)
        } else {
            InstanceLaw::fail(
                "pullback_square_commutes",
                1,
                "projections do not commute with the mediating map".to_string(),
            )
        });
    }

    // Identity coherence: pulling back along the identity is the identity.
    {
        let idn = NatTrans::identity(h.dst());
        let (idb, idf) = pullback(&idn, b)?;
        let (dst_pair, _) = grot_pair(h.dst(), b)?;
        let ok = idb == *b && idf == NatTrans::identity(&dst_pair);
        out.push(if ok {
            InstanceLaw::ok("pullback_id_coherence", 1)
        } else {
            InstanceLaw::fail(
                "pullback_id_coherence",
                1,
                "identity pullback is not the identity".to_string(),
            )
        });
    }

    // Composition coherence, when a composable g : A3 -> A2 is supplied.
    {
        let mut checks = 0;
        let mut failure = None;
        if let Some(g) = g {
            if g.dst() != h.src() {
                return Err(LccError::BaseMismatch(
                    "composition coherence requires g composable with h".to_string(),
                ));
            }
            checks = 1;
            let gh = g.then(h)?;
            let (ghb, ghf) = pullback(&gh, b)?;
            let (g_hb, gf) = pullback(g, &hb)?;
            if ghb != g_hb {
                failure = Some("(g;h)*B differs from g*(h*B)".to_string());
            } else {
                let composite = gf.then(&pbf)?;
                if ghf != composite {
                    failure =
                        Some("pbf(g;h, B) differs from pbf(g, h*B); pbf(h, B)".to_string());
                }
            }
        }
        out.push(match failure {
            None => InstanceLaw::ok("pullback_comp_coherence", checks),
            Some(msg) => InstanceLaw::fail("pullback_comp_coherence", checks, msg),
        });
    }

    // Universal property: for every commuting cone from the sample objects,
    // exactly one mediating transformation exists.
    {
        let mut checks = 0;
        let mut failure = None;
        'outer: for x in cones {
            let us = enumerate_nat_trans(x, h.src(), hom_cap)?;
            let vs = enumerate_nat_trans(x, h.dst().clone().into_pair_with(b)?.as_ref(), hom_cap);
            // Work around borrowck: build target object first.
            let (a1b, _) = grot_pair(h.dst(), b)?;
            let vs = match vs {
                Ok(v) => v,
                Err(_) => enumerate_nat_trans(x, &a1b, hom_cap)?,
            };
            for u in &us {
                for v in &vs {
                    let left = u.then(h)?;
                    let right = v.then(&proj_b)?;
                    if left != right {
                        continue;
                    }
                    checks += 1;
                    let mediators = enumerate_nat_trans(x, &a2_pair, hom_cap)?;
                    let matching: Vec<&NatTrans> = mediators
                        .iter()
                        .filter(|m| {
                            m.then(&proj_hb).map(|mu| &mu == u).unwrap_or(false)
                                && m.then(&pbf).map(|mv| &mv == v).unwrap_or(false)
                        })
                        .collect();
                    if matching.len() != 1 {
                        failure = Some(format!(
                            "cone has {} mediating transformations (expected exactly 1)",
                            matching.len()
                        ));
                        break 'outer;
                    }
                }
            }
        }
        out.push(match failure {
            None => InstanceLaw::ok("pullback_universal", checks.max(1)),
            Some(msg) => InstanceLaw::fail("pullback_universal", checks.max(1), msg),
        });
    }

    Ok(out)
}

// Small helper used above; keeps the cone enumeration readable.
trait IntoPairWith {
    fn into_pair_with(self, b: &IndexedSet) -> Result<Box<IndexedSet>, LccError>;
}

impl IntoPairWith for IndexedSet {
    fn into_pair_with(self, b: &IndexedSet) -> Result<Box<IndexedSet>, LccError> {
        Ok(Box::new(grot_pair(&self, b)?.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexed::testutil::{chain, constant};
    use crate::indexed::one_point;

    /// B over the category of elements of A with the given constant fiber.
    fn constant_over(int_a: &FinPoset, atoms: &[&str]) -> IndexedSet {
        constant(int_a, atoms)
    }

    #[test]
    fn pullback_along_identity_is_identity() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["x", "y"]);
        let b = constant_over(&grothendieck(&a), &["0", "1"]);
        let idn = NatTrans::identity(&a);
        let (hb, pbf) = pullback(&idn, &b).expect("pullback");
        assert_eq!(hb, b);
        let (ab, _) = grot_pair(&a, &b).expect("pairing");
        assert_eq!(pbf, NatTrans::identity(&ab));
    }

    #[test]
    fn pullback_of_one_point_is_one_point() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["x", "y"]);
        let sub_seed: BTreeMap<Elem, BTreeSet<Elem>> = p
            .elems()
            .iter()
            .map(|e| (e.clone(), [Elem::atom("x")].into_iter().collect()))
            .collect();
        let (a2, incl) = sub_generated(&a, &sub_seed).expect("subfunctor");
        let b = one_point(&grothendieck(&a));
        let (hb, _) = pullback(&incl, &b).expect("pullback");
        assert_eq!(hb, one_point(&grothendieck(&a2)));
    }

    #[test]
    fn dep_sum_counts_fibers() {
        let p = FinPoset::singleton("p");
        let a = one_point(&p);
        let int_a = grothendieck(&a);
        let b = constant_over(&int_a, &["0", "1"]);
        let (ab, _) = grot_pair(&a, &b).expect("pairing");
        let c = constant_over(&grothendieck(&ab), &["u", "v", "w"]);
        let sum = dep_sum(&b, &c).expect("sum");
        // |Σ(x)| = Σ_b |C(p,(a,b))| = 2 * 3.
        let x = Elem::pair(Elem::atom("p"), Elem::Unit);
        assert_eq!(sum.fiber(&x).len(), 6);
    }

    #[test]
    fn dep_sum_with_one_point_c_mirrors_b() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["x"]);
        let int_a = grothendieck(&a);
        let b = constant_over(&int_a, &["0", "1"]);
        let (ab, _) = grot_pair(&a, &b).expect("pairing");
        let c = one_point(&grothendieck(&ab));
        let sum = dep_sum(&b, &c).expect("sum");
        for x in int_a.elems() {
            assert_eq!(sum.fiber(x).len(), b.fiber(x).len());
            for e in sum.fiber(x) {
                assert_eq!(e.snd(), Some(&Elem::Unit));
            }
        }
    }

    #[test]
    fn dep_prod_over_a_point_is_the_function_space() {
        // P = {p}, A = one point, B fiber {0,1}, C constant {u,v}:
        // the product fiber has the 4 functions {0,1} -> {u,v}.
        let p = FinPoset::singleton("p");
        let a = one_point(&p);
        let int_a = grothendieck(&a);
        let b = constant_over(&int_a, &["0", "1"]);
        let (ab, _) = grot_pair(&a, &b).expect("pairing");
        let c = constant_over(&grothendieck(&ab), &["u", "v"]);
        let prod = dep_prod(&a, &b, &c).expect("product");
        let x = Elem::pair(Elem::atom("p"), Elem::Unit);
        assert_eq!(prod.fiber(&x).len(), 4);
        // Keys carry the empty tuple, not the A-fiber element.
        let fam = decode_family(prod.fiber(&x).iter().next().unwrap()).unwrap();
        for k in fam.keys() {
            assert_eq!(k.snd().and_then(|i| i.fst()), Some(&Elem::Unit));
        }
    }

    #[test]
    fn dep_prod_of_empty_b_is_a_singleton() {
        let p = FinPoset::singleton("p");
        let a = one_point(&p);
        let int_a = grothendieck(&a);
        // B with empty fibers everywhere.
        let fiber: BTreeMap<Elem, BTreeSet<Elem>> = int_a
            .elems()
            .iter()
            .map(|e| (e.clone(), BTreeSet::new()))
            .collect();
        let transport = int_a
            .pairs()
            .iter()
            .map(|(x, y)| ((x.clone(), y.clone()), BTreeMap::new()))
            .collect();
        let b = IndexedSet::new(int_a.clone(), fiber, transport).expect("validates");
        let (ab, _) = grot_pair(&a, &b).expect("pairing");
        let c_base = grothendieck(&ab);
        let c = one_point(&c_base);
        let prod = dep_prod(&a, &b, &c).expect("product");
        let x = Elem::pair(Elem::atom("p"), Elem::Unit);
        assert_eq!(prod.fiber(&x).len(), 1);
        assert_eq!(prod.fiber(&x).iter().next(), Some(&Elem::Unit));
    }

    #[test]
    fn split_and_unsplit_are_mutually_inverse() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["x"]);
        let int_a = grothendieck(&a);
        let b = constant_over(&int_a, &["0", "1"]);
        let (ab, _) = grot_pair(&a, &b).expect("pairing");
        let c = constant_over(&grothendieck(&ab), &["u", "v"]);
        let prod = dep_prod(&a, &b, &c).expect("product");
        for t in indexed_elements(&c) {
            let f = split(&a, &b, &c, &t).expect("split");
            assert_eq!(f.owner(), &prod);
            let back = unsplit(&a, &b, &c, &f).expect("unsplit");
            assert_eq!(back, t);
        }
        for f in indexed_elements(&prod) {
            let t = unsplit(&a, &b, &c, &f).expect("unsplit");
            let again = split(&a, &b, &c, &t).expect("split");
            assert_eq!(again, f);
        }
    }

    #[test]
    fn compose_section_along_identity_is_identity() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["0", "1"]);
        let s = indexed_elements(&a).into_iter().next().expect("a section");
        let idm = PosetMap::identity(&p);
        let s2 = compose_section(&idm, &s).expect("compose");
        assert_eq!(s2.choices(), s.choices());
    }

    #[test]
    fn compose_section_looks_up_pointwise() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["0", "1"]);
        let s = indexed_elements(&a).into_iter().next().expect("a section");
        let one = one_point(&p);
        let f = to_fibration_of(&one);
        let pulled = compose_section(&f, &s).expect("compose");
        for q in f.src().elems() {
            assert_eq!(pulled.at(q), s.at(f.apply(q)));
        }
    }

    fn to_fibration_of(a: &IndexedSet) -> PosetMap {
        crate::indexed::to_fibration(a)
    }

    #[test]
    fn beck_chevalley_holds_on_a_small_instance() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["x", "y"]);
        let int_a = grothendieck(&a);
        let b = constant_over(&int_a, &["0"]);
        let (ab, _) = grot_pair(&a, &b).expect("pairing");
        let c = constant_over(&grothendieck(&ab), &["u", "v"]);
        let seeds: BTreeMap<Elem, BTreeSet<Elem>> = p
            .elems()
            .iter()
            .map(|e| (e.clone(), [Elem::atom("x")].into_iter().collect()))
            .collect();
        let (_, incl) = sub_generated(&a, &seeds).expect("subfunctor");
        let ds = vec![one_point(&int_a), b.clone()];
        let gs = vec![NatTrans::identity(&a), incl];
        let report = check_adjunctions(&a, &b, &c, &ds, &gs, 100_000).expect("laws run");
        for law in &report {
            assert!(law.failure.is_none(), "{}: {:?}", law.law, law.failure);
            assert!(law.checks > 0, "{} ran no checks", law.law);
        }
    }

    #[test]
    fn corrupted_transport_is_caught_with_a_witness() {
        // One bad map on a 3-chain breaks functoriality against the
        // composite, and validation reports the offending element.
        let p = chain(&["p", "q", "r"]);
        let a = constant(&p, &["x"]);
        let int_a = grothendieck(&a);
        let mut b = constant_over(&int_a, &["0", "1"]);
        b.corrupt_transport(
            &Elem::pair(Elem::atom("p"), Elem::atom("x")),
            &Elem::pair(Elem::atom("q"), Elem::atom("x")),
            &Elem::atom("0"),
            Elem::atom("1"),
        );
        let rebuilt = IndexedSet::new(
            b.base().clone(),
            b.fibers().clone(),
            b.transports().clone(),
        );
        match rebuilt {
            Err(IndexedError::IndexedSet(msg)) => {
                assert!(msg.contains("functoriality"), "{}", msg);
                assert!(msg.contains("(p,x)"), "{}", msg);
            }
            other => panic!("expected a functoriality failure, got {:?}", other),
        }
    }

    #[test]
    fn enumerate_nat_trans_counts_function_spaces() {
        let p = FinPoset::singleton("p");
        let a = constant(&p, &["0", "1"]);
        let b = constant(&p, &["u", "v", "w"]);
        let homs = enumerate_nat_trans(&a, &b, 1000).expect("enumerable");
        assert_eq!(homs.len(), 9);

        // Over a chain with identity transports, naturality forces the
        // components to agree, leaving 3^2 maps again at the minimal point.
        let p2 = chain(&["p", "q"]);
        let a2 = constant(&p2, &["0", "1"]);
        let b2 = constant(&p2, &["u", "v", "w"]);
        let homs2 = enumerate_nat_trans(&a2, &b2, 1000).expect("enumerable");
        assert_eq!(homs2.len(), 9);
    }

    #[test]
    fn pullback_laws_pass_on_a_small_instance() {
        let p = chain(&["p", "q"]);
        let a1 = constant(&p, &["x", "y"]);
        let b = constant_over(&grothendieck(&a1), &["0", "1"]);
        let seeds: BTreeMap<Elem, BTreeSet<Elem>> = p
            .elems()
            .iter()
            .map(|e| (e.clone(), [Elem::atom("x")].into_iter().collect()))
            .collect();
        let (a2, h) = sub_generated(&a1, &seeds).expect("subfunctor");
        let (a3, g) = sub_generated(&a2, &seeds).expect("subfunctor");
        let _ = a3;
        let cones = vec![one_point(&p)];
        let report =
            check_pullback_laws(&h, &b, Some(&g), &cones, 100_000).expect("laws run");
        for law in &report {
            assert!(law.failure.is_none(), "{}: {:?}", law.law, law.failure);
        }
    }
}
