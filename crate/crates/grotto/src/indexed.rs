//! Finite posets, indexed sets (functors into finite sets), natural
//! transformations, sections (indexed elements), the category of elements,
//! and the isomorphism between indexed sets and canonical fibrations.
//!
//! Everything is stored in ordered maps keyed by canonical element values,
//! so structural equality of two constructions is decidable, deterministic,
//! and — crucially for the coherence laws — exact: the dependent sum and
//! product of the `lcc` module are required to commute with pullback as
//! *equalities*, not isomorphisms.

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// A canonical set-theoretic value: an atom, the empty tuple, or a pair.
/// Tuples are left-associatively nested pairs.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Elem {
    Atom(String),
    Unit,
    Pair(Box<Elem>, Box<Elem>),
}

impl Elem {
    pub fn atom(s: &str) -> Elem {
        Elem::Atom(s.to_string())
    }

    pub fn pair(l: Elem, r: Elem) -> Elem {
        Elem::Pair(Box::new(l), Box::new(r))
    }

    /// Left-nested tuple with the empty tuple as seed: `(…((), e1)…, en)`.
    pub fn tuple(items: &[Elem]) -> Elem {
        items
            .iter()
            .fold(Elem::Unit, |acc, e| Elem::pair(acc, e.clone()))
    }

    pub fn fst(&self) -> Option<&Elem> {
        match self {
            Elem::Pair(l, _) => Some(l),
            _ => None,
        }
    }

    pub fn snd(&self) -> Option<&Elem> {
        match self {
            Elem::Pair(_, r) => Some(r),
            _ => None,
        }
    }
}

impl fmt::Display for Elem {
    /// Canonical printing: atoms verbatim, `()` for the empty tuple,
    /// `(l,r)` with no spaces for pairs. Injective on canonical values.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Elem::Atom(s) => f.write_str(s),
            Elem::Unit => f.write_str("()"),
            Elem::Pair(l, r) => write!(f, "({},{})", l, r),
        }
    }
}

impl Serialize for Elem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Parse the canonical element syntax.
pub fn parse_elem(text: &str) -> Result<Elem, String> {
    let chars: Vec<char> = text.chars().collect();
    let (e, used) = parse_elem_at(&chars, 0)?;
    if used != chars.len() {
        return Err(format!("trailing input in element `{}`", text));
    }
    Ok(e)
}

fn parse_elem_at(chars: &[char], at: usize) -> Result<(Elem, usize), String> {
    match chars.get(at) {
        Some('(') => {
            if chars.get(at + 1) == Some(&')') {
                return Ok((Elem::Unit, at + 2));
            }
            let (l, mid) = parse_elem_at(chars, at + 1)?;
            if chars.get(mid) != Some(&',') {
                return Err("expected `,` in pair".to_string());
            }
            let (r, end) = parse_elem_at(chars, mid + 1)?;
            if chars.get(end) != Some(&')') {
                return Err("expected `)` closing pair".to_string());
            }
            Ok((Elem::pair(l, r), end + 1))
        }
        Some(_) => {
            let mut end = at;
            while end < chars.len() && !matches!(chars[end], '(' | ')' | ',') {
                end += 1;
            }
            if end == at {
                return Err("empty atom".to_string());
            }
            Ok((Elem::Atom(chars[at..end].iter().collect()), end))
        }
        None => Err("unexpected end of element".to_string()),
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum IndexedError {
    #[error("invalid poset: {0}")]
    Poset(String),
    #[error("invalid indexed set: {0}")]
    IndexedSet(String),
    #[error("naturality violation: {0}")]
    Naturality(String),
    #[error("invalid section: {0}")]
    Section(String),
    #[error("invalid monotone map: {0}")]
    Map(String),
    #[error("not a fibration: no unique lift of {at} over {target}: {reason}")]
    NotFibration {
        target: Elem,
        at: Elem,
        reason: String,
    },
    #[error("not a canonical fibration: element {0} is not a pair projected to its first component")]
    NonCanonical(Elem),
    #[error("base mismatch: {0}")]
    BaseMismatch(String),
}

/// A finite poset. The order relation is stored in full (reflexive and
/// transitive pairs included) and validated on construction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FinPoset {
    elems: BTreeSet<Elem>,
    leq: BTreeSet<(Elem, Elem)>,
}

impl FinPoset {
    pub fn new(
        elems: BTreeSet<Elem>,
        leq: BTreeSet<(Elem, Elem)>,
    ) -> Result<FinPoset, IndexedError> {
        for (a, b) in &leq {
            if !elems.contains(a) || !elems.contains(b) {
                return Err(IndexedError::Poset(format!(
                    "relation mentions non-element in ({},{})",
                    a, b
                )));
            }
        }
        for a in &elems {
            if !leq.contains(&(a.clone(), a.clone())) {
                return Err(IndexedError::Poset(format!("not reflexive at {}", a)));
            }
        }
        for (a, b) in &leq {
            if a != b && leq.contains(&(b.clone(), a.clone())) {
                return Err(IndexedError::Poset(format!(
                    "antisymmetry fails on {} and {}",
                    a, b
                )));
            }
        }
        for (a, b) in &leq {
            for (c, d) in &leq {
                if b == c && !leq.contains(&(a.clone(), d.clone())) {
                    return Err(IndexedError::Poset(format!(
                        "transitivity fails: {} <= {} <= {} but not {} <= {}",
                        a, b, d, a, d
                    )));
                }
            }
        }
        Ok(FinPoset { elems, leq })
    }

    /// Build from generators: the reflexive-transitive closure is applied
    /// before validation (antisymmetry can still fail and is reported).
    pub fn from_generators(
        elems: BTreeSet<Elem>,
        gens: &[(Elem, Elem)],
    ) -> Result<FinPoset, IndexedError> {
        let mut leq: BTreeSet<(Elem, Elem)> = BTreeSet::new();
        for e in &elems {
            leq.insert((e.clone(), e.clone()));
        }
        for (a, b) in gens {
            leq.insert((a.clone(), b.clone()));
        }
        loop {
            let mut grew = false;
            let snapshot: Vec<(Elem, Elem)> = leq.iter().cloned().collect();
            for (a, b) in &snapshot {
                for (c, d) in &snapshot {
                    if b == c && leq.insert((a.clone(), d.clone())) {
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        FinPoset::new(elems, leq)
    }

    pub fn singleton(name: &str) -> FinPoset {
        let e = Elem::atom(name);
        let mut elems = BTreeSet::new();
        elems.insert(e.clone());
        let mut leq = BTreeSet::new();
        leq.insert((e.clone(), e));
        FinPoset { elems, leq }
    }

    pub fn elems(&self) -> &BTreeSet<Elem> {
        &self.elems
    }

    pub fn le(&self, a: &Elem, b: &Elem) -> bool {
        self.leq.contains(&(a.clone(), b.clone()))
    }

    pub fn pairs(&self) -> &BTreeSet<(Elem, Elem)> {
        &self.leq
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn minimals(&self) -> Vec<Elem> {
        self.elems
            .iter()
            .filter(|p| self.elems.iter().all(|q| q == *p || !self.le(q, p)))
            .cloned()
            .collect()
    }

    pub fn least(&self) -> Option<Elem> {
        self.elems
            .iter()
            .find(|p| self.elems.iter().all(|q| self.le(p, q)))
            .cloned()
    }

    /// Elements in an order compatible with the partial order (ties broken
    /// by element order, so the result is deterministic).
    pub fn linear_extension(&self) -> Vec<Elem> {
        let mut remaining: BTreeSet<Elem> = self.elems.clone();
        let mut out = Vec::new();
        while !remaining.is_empty() {
            let next = remaining
                .iter()
                .find(|p| remaining.iter().all(|q| q == *p || !self.le(q, p)))
                .cloned()
                .expect("finite poset always has a minimal element");
            remaining.remove(&next);
            out.push(next);
        }
        out
    }
}

/// A functor from a finite poset to finite sets: a fiber per element and a
/// transport function per related pair (all pairs, reflexive included).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct IndexedSet {
    base: FinPoset,
    fiber: BTreeMap<Elem, BTreeSet<Elem>>,
    transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>>,
}

impl IndexedSet {
    pub fn new(
        base: FinPoset,
        fiber: BTreeMap<Elem, BTreeSet<Elem>>,
        transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>>,
    ) -> Result<IndexedSet, IndexedError> {
        {
            let keys: BTreeSet<&Elem> = fiber.keys().collect();
            let elems: BTreeSet<&Elem> = base.elems().iter().collect();
            if keys != elems {
                return Err(IndexedError::IndexedSet(
                    "fibers must be keyed by exactly the base elements".to_string(),
                ));
            }
            let tkeys: BTreeSet<&(Elem, Elem)> = transport.keys().collect();
            let pairs: BTreeSet<&(Elem, Elem)> = base.pairs().iter().collect();
            if tkeys != pairs {
                return Err(IndexedError::IndexedSet(
                    "transports must be keyed by exactly the related pairs".to_string(),
                ));
            }
        }
        for ((p, q), map) in &transport {
            let dom: BTreeSet<&Elem> = map.keys().collect();
            let fib: BTreeSet<&Elem> = fiber[p].iter().collect();
            if dom != fib {
                return Err(IndexedError::IndexedSet(format!(
                    "transport {} <= {} is not total on the fiber",
                    p, q
                )));
            }
            for (e, v) in map {
                if !fiber[q].contains(v) {
                    return Err(IndexedError::IndexedSet(format!(
                        "transport {} <= {} sends {} to {} outside the target fiber",
                        p, q, e, v
                    )));
                }
            }
            if p == q {
                for (e, v) in map {
                    if e != v {
                        return Err(IndexedError::IndexedSet(format!(
                            "identity transport at {} moves {} to {}",
                            p, e, v
                        )));
                    }
                }
            }
        }
        // Functoriality: transports along composable pairs compose.
        for (p, q) in base.pairs() {
            for (q2, r) in base.pairs() {
                if q == q2 {
                    let first = &transport[&(p.clone(), q.clone())];
                    let second = &transport[&(q.clone(), r.clone())];
                    let direct = &transport[&(p.clone(), r.clone())];
                    for e in &fiber[p] {
                        let via = &second[&first[e]];
                        if via != &direct[e] {
                            return Err(IndexedError::IndexedSet(format!(
                                "functoriality fails on {} in fiber({}): via {} gives {}, direct gives {}",
                                e, p, q, via, direct[e]
                            )));
                        }
                    }
                }
            }
        }
        Ok(IndexedSet {
            base,
            fiber,
            transport,
        })
    }

    pub fn base(&self) -> &FinPoset {
        &self.base
    }

    pub fn fiber(&self, p: &Elem) -> &BTreeSet<Elem> {
        &self.fiber[p]
    }

    pub fn fibers(&self) -> &BTreeMap<Elem, BTreeSet<Elem>> {
        &self.fiber
    }

    pub fn transport(&self, p: &Elem, q: &Elem, e: &Elem) -> &Elem {
        &self.transport[&(p.clone(), q.clone())][e]
    }

    pub fn transports(&self) -> &BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> {
        &self.transport
    }

    pub fn total_elems(&self) -> usize {
        self.fiber.values().map(|f| f.len()).sum()
    }

    /// Test hook: break one transport entry, bypassing validation.
    #[cfg(test)]
    pub(crate) fn corrupt_transport(&mut self, p: &Elem, q: &Elem, e: &Elem, to: Elem) {
        self.transport
            .get_mut(&(p.clone(), q.clone()))
            .expect("pair exists")
            .insert(e.clone(), to);
    }
}

/// A natural transformation between indexed sets over the same base.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct NatTrans {
    src: IndexedSet,
    dst: IndexedSet,
    component: BTreeMap<Elem, BTreeMap<Elem, Elem>>,
}

impl NatTrans {
    pub fn new(
        src: IndexedSet,
        dst: IndexedSet,
        component: BTreeMap<Elem, BTreeMap<Elem, Elem>>,
    ) -> Result<NatTrans, IndexedError> {
        if src.base() != dst.base() {
            return Err(IndexedError::BaseMismatch(
                "natural transformation between indexed sets over different posets".to_string(),
            ));
        }
        {
            let keys: BTreeSet<&Elem> = component.keys().collect();
            let elems: BTreeSet<&Elem> = src.base().elems().iter().collect();
            if keys != elems {
                return Err(IndexedError::Naturality(
                    "components must be keyed by exactly the base elements".to_string(),
                ));
            }
        }
        for (p, map) in &component {
            let dom: BTreeSet<&Elem> = map.keys().collect();
            let fib: BTreeSet<&Elem> = src.fiber(p).iter().collect();
            if dom != fib {
                return Err(IndexedError::Naturality(format!(
                    "component at {} is not total on the source fiber",
                    p
                )));
            }
            for (e, v) in map {
                if !dst.fiber(p).contains(v) {
                    return Err(IndexedError::Naturality(format!(
                        "component at {} sends {} outside the target fiber",
                        p, e
                    )));
                }
            }
        }
        for (p, q) in src.base().pairs() {
            for e in src.fiber(p) {
                let around = dst.transport(p, q, &component[p][e]);
                let across = &component[q][src.transport(p, q, e)];
                if around != across {
                    return Err(IndexedError::Naturality(format!(
                        "square at {} <= {} fails on {}: {} vs {}",
                        p, q, e, around, across
                    )));
                }
            }
        }
        Ok(NatTrans {
            src,
            dst,
            component,
        })
    }

    pub fn src(&self) -> &IndexedSet {
        &self.src
    }

    pub fn dst(&self) -> &IndexedSet {
        &self.dst
    }

    pub fn apply(&self, p: &Elem, e: &Elem) -> &Elem {
        &self.component[p][e]
    }

    pub fn components(&self) -> &BTreeMap<Elem, BTreeMap<Elem, Elem>> {
        &self.component
    }

    pub fn identity(a: &IndexedSet) -> NatTrans {
        let component = a
            .fibers()
            .iter()
            .map(|(p, fib)| {
                (
                    p.clone(),
                    fib.iter().map(|e| (e.clone(), e.clone())).collect(),
                )
            })
            .collect();
        NatTrans {
            src: a.clone(),
            dst: a.clone(),
            component,
        }
    }

    /// Diagrammatic composition: `self` then `next`.
    pub fn then(&self, next: &NatTrans) -> Result<NatTrans, IndexedError> {
        if self.dst != next.src {
            return Err(IndexedError::BaseMismatch(
                "composition of incompatible natural transformations".to_string(),
            ));
        }
        let component = self
            .component
            .iter()
            .map(|(p, map)| {
                (
                    p.clone(),
                    map.iter()
                        .map(|(e, v)| (e.clone(), next.component[p][v].clone()))
                        .collect(),
                )
            })
            .collect();
        NatTrans::new(self.src.clone(), next.dst.clone(), component)
    }
}

/// A transport-compatible choice of one fiber element per base element: an
/// indexed element (global section) of an indexed set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Section {
    owner: IndexedSet,
    choice: BTreeMap<Elem, Elem>,
}

impl Section {
    pub fn new(owner: IndexedSet, choice: BTreeMap<Elem, Elem>) -> Result<Section, IndexedError> {
        {
            let keys: BTreeSet<&Elem> = choice.keys().collect();
            let elems: BTreeSet<&Elem> = owner.base().elems().iter().collect();
            if keys != elems {
                return Err(IndexedError::Section(
                    "a section must choose at every base element".to_string(),
                ));
            }
        }
        for (p, e) in &choice {
            if !owner.fiber(p).contains(e) {
                return Err(IndexedError::Section(format!(
                    "choice {} at {} is not in the fiber",
                    e, p
                )));
            }
        }
        for (p, q) in owner.base().pairs() {
            let transported = owner.transport(p, q, &choice[p]);
            if transported != &choice[q] {
                return Err(IndexedError::Section(format!(
                    "incompatible with transport {} <= {}: {} transports to {}, chose {}",
                    p, q, choice[p], transported, choice[q]
                )));
            }
        }
        Ok(Section { owner, choice })
    }

    pub fn owner(&self) -> &IndexedSet {
        &self.owner
    }

    pub fn at(&self, p: &Elem) -> &Elem {
        &self.choice[p]
    }

    pub fn choices(&self) -> &BTreeMap<Elem, Elem> {
        &self.choice
    }

    /// Test hook: break one choice, bypassing validation.
    #[cfg(test)]
    pub(crate) fn corrupt_choice(&mut self, p: &Elem, to: Elem) {
        self.choice.insert(p.clone(), to);
    }
}

/// A monotone map between finite posets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PosetMap {
    src: FinPoset,
    dst: FinPoset,
    map: BTreeMap<Elem, Elem>,
}

impl PosetMap {
    pub fn new(
        src: FinPoset,
        dst: FinPoset,
        map: BTreeMap<Elem, Elem>,
    ) -> Result<PosetMap, IndexedError> {
        {
            let keys: BTreeSet<&Elem> = map.keys().collect();
            let elems: BTreeSet<&Elem> = src.elems().iter().collect();
            if keys != elems {
                return Err(IndexedError::Map(
                    "map must be total on the source poset".to_string(),
                ));
            }
        }
        for v in map.values() {
            if !dst.elems().contains(v) {
                return Err(IndexedError::Map(format!(
                    "value {} is not an element of the target poset",
                    v
                )));
            }
        }
        for (a, b) in src.pairs() {
            if !dst.le(&map[a], &map[b]) {
                return Err(IndexedError::Map(format!(
                    "not monotone: {} <= {} but {} is not <= {}",
                    a, b, map[a], map[b]
                )));
            }
        }
        Ok(PosetMap { src, dst, map })
    }

    pub fn identity(p: &FinPoset) -> PosetMap {
        PosetMap {
            src: p.clone(),
            dst: p.clone(),
            map: p.elems().iter().map(|e| (e.clone(), e.clone())).collect(),
        }
    }

    pub fn src(&self) -> &FinPoset {
        &self.src
    }

    pub fn dst(&self) -> &FinPoset {
        &self.dst
    }

    pub fn apply(&self, e: &Elem) -> &Elem {
        &self.map[e]
    }

    pub fn mapping(&self) -> &BTreeMap<Elem, Elem> {
        &self.map
    }

    pub fn then(&self, next: &PosetMap) -> Result<PosetMap, IndexedError> {
        if self.dst != next.src {
            return Err(IndexedError::Map(
                "composition of incompatible monotone maps".to_string(),
            ));
        }
        PosetMap::new(
            self.src.clone(),
            next.dst.clone(),
            self.map
                .iter()
                .map(|(e, v)| (e.clone(), next.map[v].clone()))
                .collect(),
        )
    }

    /// Discrete-opfibration property: for every source element `q` and every
    /// `p'` above its image there is exactly one lift of `q` over `p'`.
    /// The witness on failure is the pair `(p', q)`.
    pub fn check_fibration(&self) -> Result<(), IndexedError> {
        for q in self.src.elems() {
            let fq = self.apply(q).clone();
            for p2 in self.dst.elems() {
                if !self.dst.le(&fq, p2) {
                    continue;
                }
                let lifts: Vec<&Elem> = self
                    .src
                    .elems()
                    .iter()
                    .filter(|q2| self.src.le(q, q2) && self.apply(q2) == p2)
                    .collect();
                match lifts.len() {
                    1 => {}
                    0 => {
                        return Err(IndexedError::NotFibration {
                            target: p2.clone(),
                            at: q.clone(),
                            reason: "no lift".to_string(),
                        })
                    }
                    n => {
                        return Err(IndexedError::NotFibration {
                            target: p2.clone(),
                            at: q.clone(),
                            reason: format!("{} lifts", n),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_fibration(&self) -> bool {
        self.check_fibration().is_ok()
    }
}

/// The constant indexed set with fiber `{()}` everywhere.
pub fn one_point(p: &FinPoset) -> IndexedSet {
    let mut fiber = BTreeMap::new();
    let mut transport = BTreeMap::new();
    for e in p.elems() {
        let mut f = BTreeSet::new();
        f.insert(Elem::Unit);
        fiber.insert(e.clone(), f);
    }
    for (a, b) in p.pairs() {
        let mut m = BTreeMap::new();
        m.insert(Elem::Unit, Elem::Unit);
        transport.insert((a.clone(), b.clone()), m);
    }
    IndexedSet {
        base: p.clone(),
        fiber,
        transport,
    }
}

/// The category of elements of `A`: the poset of pairs `(p, a)` with
/// `(p,a) <= (p',a')` iff `p <= p'` and transport sends `a` to `a'`.
pub fn grothendieck(a: &IndexedSet) -> FinPoset {
    let mut elems = BTreeSet::new();
    for (p, fib) in a.fibers() {
        for e in fib {
            elems.insert(Elem::pair(p.clone(), e.clone()));
        }
    }
    let mut leq = BTreeSet::new();
    for (p, q) in a.base().pairs() {
        for e in a.fiber(p) {
            let te = a.transport(p, q, e);
            leq.insert((
                Elem::pair(p.clone(), e.clone()),
                Elem::pair(q.clone(), te.clone()),
            ));
        }
    }
    FinPoset { elems, leq }
}

/// Pairing of an indexed set `A` over `P` with an indexed set `B` over the
/// category of elements of `A`: fibers are pairs `(a, b)` with `b` in
/// `B(p, a)`; the second result is the projection onto `A`.
pub fn grot_pair(a: &IndexedSet, b: &IndexedSet) -> Result<(IndexedSet, NatTrans), IndexedError> {
    let int_a = grothendieck(a);
    if b.base() != &int_a {
        return Err(IndexedError::BaseMismatch(
            "second argument must be indexed over the category of elements of the first"
                .to_string(),
        ));
    }
    let mut fiber: BTreeMap<Elem, BTreeSet<Elem>> = BTreeMap::new();
    for p in a.base().elems() {
        let mut f = BTreeSet::new();
        for av in a.fiber(p) {
            let key = Elem::pair(p.clone(), av.clone());
            for bv in b.fiber(&key) {
                f.insert(Elem::pair(av.clone(), bv.clone()));
            }
        }
        fiber.insert(p.clone(), f);
    }
    let mut transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = BTreeMap::new();
    for (p, q) in a.base().pairs() {
        let mut m = BTreeMap::new();
        for pairv in &fiber[p] {
            let av = pairv.fst().expect("pair fiber");
            let bv = pairv.snd().expect("pair fiber");
            let a2 = a.transport(p, q, av);
            let b2 = b.transport(
                &Elem::pair(p.clone(), av.clone()),
                &Elem::pair(q.clone(), a2.clone()),
                bv,
            );
            m.insert(pairv.clone(), Elem::pair(a2.clone(), b2.clone()));
        }
        transport.insert((p.clone(), q.clone()), m);
    }
    let paired = IndexedSet::new(a.base().clone(), fiber, transport)?;
    let component = paired
        .fibers()
        .iter()
        .map(|(p, fib)| {
            (
                p.clone(),
                fib.iter()
                    .map(|e| (e.clone(), e.fst().expect("pair fiber").clone()))
                    .collect(),
            )
        })
        .collect();
    let proj = NatTrans::new(paired.clone(), a.clone(), component)?;
    Ok((paired, proj))
}

/// All sections of an indexed set, exhaustively, in deterministic order.
/// A section is determined by its values at the minimal elements; the
/// enumeration filters the compatible combinations.
pub fn indexed_elements(a: &IndexedSet) -> Vec<Section> {
    if a.base().is_empty() {
        return vec![Section {
            owner: a.clone(),
            choice: BTreeMap::new(),
        }];
    }
    let minimals = a.base().minimals();
    let mut combos: Vec<Vec<Elem>> = vec![vec![]];
    for m in &minimals {
        let mut next = Vec::new();
        for combo in &combos {
            for v in a.fiber(m) {
                let mut c = combo.clone();
                c.push(v.clone());
                next.push(c);
            }
        }
        combos = next;
    }
    let mut out = Vec::new();
    'combo: for combo in combos {
        let mut choice: BTreeMap<Elem, Elem> = BTreeMap::new();
        for p in a.base().elems() {
            let mut candidate: Option<Elem> = None;
            for (m, v) in minimals.iter().zip(&combo) {
                if a.base().le(m, p) {
                    let forced = a.transport(m, p, v).clone();
                    match &candidate {
                        Some(c) if c != &forced => continue 'combo,
                        _ => candidate = Some(forced),
                    }
                }
            }
            match candidate {
                Some(c) => {
                    choice.insert(p.clone(), c);
                }
                None => continue 'combo,
            }
        }
        if let Ok(s) = Section::new(a.clone(), choice) {
            out.push(s);
        }
    }
    out
}

/// The canonical fibration of an indexed set: the first projection out of
/// its category of elements.
pub fn to_fibration(a: &IndexedSet) -> PosetMap {
    let int_a = grothendieck(a);
    let map = int_a
        .elems()
        .iter()
        .map(|e| (e.clone(), e.fst().expect("pair element").clone()))
        .collect();
    PosetMap {
        src: int_a,
        dst: a.base().clone(),
        map,
    }
}

/// Recover an indexed set from a canonical fibration. Rejects maps that are
/// not first projections of a category of elements or lack unique lifts.
pub fn from_fibration(f: &PosetMap) -> Result<IndexedSet, IndexedError> {
    for q in f.src().elems() {
        match q {
            Elem::Pair(p, _) if f.apply(q) == &**p => {}
            _ => return Err(IndexedError::NonCanonical(q.clone())),
        }
    }
    f.check_fibration()?;
    let mut fiber: BTreeMap<Elem, BTreeSet<Elem>> = BTreeMap::new();
    for p in f.dst().elems() {
        fiber.insert(p.clone(), BTreeSet::new());
    }
    for q in f.src().elems() {
        let p = f.apply(q).clone();
        let a = q.snd().expect("canonical element").clone();
        fiber.get_mut(&p).expect("element of target").insert(a);
    }
    let mut transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = BTreeMap::new();
    for (p, p2) in f.dst().pairs() {
        let mut m = BTreeMap::new();
        for a in &fiber[p] {
            let q = Elem::pair(p.clone(), a.clone());
            let lift = f
                .src()
                .elems()
                .iter()
                .find(|q2| f.src().le(&q, q2) && f.apply(q2) == p2)
                .expect("fibration property verified above");
            m.insert(a.clone(), lift.snd().expect("canonical element").clone());
        }
        transport.insert((p.clone(), p2.clone()), m);
    }
    IndexedSet::new(f.dst().clone(), fiber, transport)
}

/// The action of the indexed-sets-to-fibrations isomorphism on morphisms: a
/// natural transformation becomes a monotone map between the categories of
/// elements commuting with the projections.
pub fn nat_to_fibration_map(eta: &NatTrans) -> PosetMap {
    let src = grothendieck(eta.src());
    let dst = grothendieck(eta.dst());
    let map = src
        .elems()
        .iter()
        .map(|e| {
            let p = e.fst().expect("pair element");
            let a = e.snd().expect("pair element");
            (e.clone(), Elem::pair(p.clone(), eta.apply(p, a).clone()))
        })
        .collect();
    PosetMap { src, dst, map }
}

/// Inverse morphism action: a map of canonical fibrations (commuting with
/// the projections) becomes a natural transformation.
pub fn fibration_map_to_nat(
    phi: &PosetMap,
    src: &IndexedSet,
    dst: &IndexedSet,
) -> Result<NatTrans, IndexedError> {
    if phi.src() != &grothendieck(src) || phi.dst() != &grothendieck(dst) {
        return Err(IndexedError::BaseMismatch(
            "map is not between the categories of elements of the given indexed sets".to_string(),
        ));
    }
    let mut component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = BTreeMap::new();
    for p in src.base().elems() {
        component.insert(p.clone(), BTreeMap::new());
    }
    for q in phi.src().elems() {
        let p = q.fst().expect("pair element").clone();
        let a = q.snd().expect("pair element").clone();
        let image = phi.apply(q);
        if image.fst() != Some(&p) {
            return Err(IndexedError::Map(format!(
                "map does not commute with the projections at {}",
                q
            )));
        }
        let a2 = image.snd().expect("pair element").clone();
        component.get_mut(&p).expect("base element").insert(a, a2);
    }
    NatTrans::new(src.clone(), dst.clone(), component)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn chain(names: &[&str]) -> FinPoset {
        let elems: BTreeSet<Elem> = names.iter().map(|n| Elem::atom(n)).collect();
        let gens: Vec<(Elem, Elem)> = names
            .windows(2)
            .map(|w| (Elem::atom(w[0]), Elem::atom(w[1])))
            .collect();
        FinPoset::from_generators(elems, &gens).expect("chain is a poset")
    }

    /// Constant indexed set: same atoms at every element, identity
    /// transports.
    pub fn constant(p: &FinPoset, atoms: &[&str]) -> IndexedSet {
        let fib: BTreeSet<Elem> = atoms.iter().map(|a| Elem::atom(a)).collect();
        let fiber = p.elems().iter().map(|e| (e.clone(), fib.clone())).collect();
        let transport = p
            .pairs()
            .iter()
            .map(|(a, b)| {
                (
                    (a.clone(), b.clone()),
                    fib.iter().map(|e| (e.clone(), e.clone())).collect(),
                )
            })
            .collect();
        IndexedSet::new(p.clone(), fiber, transport).expect("constant indexed set validates")
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::{chain, constant};
    use super::*;

    #[test]
    fn poset_validation_catches_violations() {
        let elems: BTreeSet<Elem> = [Elem::atom("a"), Elem::atom("b")].into_iter().collect();
        let mut leq = BTreeSet::new();
        leq.insert((Elem::atom("a"), Elem::atom("a")));
        // missing reflexivity at b
        assert!(FinPoset::new(elems.clone(), leq.clone()).is_err());
        leq.insert((Elem::atom("b"), Elem::atom("b")));
        leq.insert((Elem::atom("a"), Elem::atom("b")));
        leq.insert((Elem::atom("b"), Elem::atom("a")));
        // antisymmetry
        assert!(FinPoset::new(elems, leq).is_err());
    }

    #[test]
    fn elem_printing_and_parsing_roundtrip() {
        let e = Elem::pair(Elem::pair(Elem::Unit, Elem::atom("0")), Elem::atom("1"));
        assert_eq!(e.to_string(), "(((),0),1)");
        assert_eq!(parse_elem("(((),0),1)").unwrap(), e);
        assert_eq!(parse_elem("()").unwrap(), Elem::Unit);
        assert_eq!(parse_elem("q0").unwrap(), Elem::atom("q0"));
    }

    #[test]
    fn one_point_has_exactly_one_section() {
        for p in [FinPoset::singleton("p"), chain(&["p", "q", "r"])] {
            let one = one_point(&p);
            assert_eq!(indexed_elements(&one).len(), 1);
        }
    }

    #[test]
    fn grothendieck_of_a_singleton_base_two_fiber() {
        let p = FinPoset::singleton("p");
        let a = constant(&p, &["a", "b"]);
        let g = grothendieck(&a);
        assert_eq!(g.len(), 2);
        // Two-element antichain: only reflexive pairs.
        assert_eq!(g.pairs().len(), 2);
    }

    #[test]
    fn grothendieck_of_a_two_chain_collapse() {
        // A(p) = {0,1}, A(q) = {0}, transport constant 0, over p <= q.
        let p = chain(&["p", "q"]);
        let fiber: BTreeMap<Elem, BTreeSet<Elem>> = [
            (
                Elem::atom("p"),
                [Elem::atom("0"), Elem::atom("1")].into_iter().collect(),
            ),
            (Elem::atom("q"), [Elem::atom("0")].into_iter().collect()),
        ]
        .into_iter()
        .collect();
        let mut transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = BTreeMap::new();
        for (a, b) in p.pairs() {
            let m: BTreeMap<Elem, Elem> = if a == b {
                fiber[a].iter().map(|e| (e.clone(), e.clone())).collect()
            } else {
                fiber[a]
                    .iter()
                    .map(|e| (e.clone(), Elem::atom("0")))
                    .collect()
            };
            transport.insert((a.clone(), b.clone()), m);
        }
        let a = IndexedSet::new(p, fiber, transport).expect("validates");
        let g = grothendieck(&a);
        let pairs: Vec<(String, String)> = g
            .pairs()
            .iter()
            .map(|(x, y)| (x.to_string(), y.to_string()))
            .collect();
        assert_eq!(
            pairs,
            vec![
                ("(p,0)".to_string(), "(p,0)".to_string()),
                ("(p,0)".to_string(), "(q,0)".to_string()),
                ("(p,1)".to_string(), "(p,1)".to_string()),
                ("(p,1)".to_string(), "(q,0)".to_string()),
                ("(q,0)".to_string(), "(q,0)".to_string()),
            ]
        );
        // Sections: the q-component is forced, so exactly |A(p)| of them.
        assert_eq!(indexed_elements(&a).len(), 2);
    }

    #[test]
    fn grothendieck_of_one_point_is_order_isomorphic_to_the_base() {
        let p = chain(&["p", "q", "r"]);
        let g = grothendieck(&one_point(&p));
        assert_eq!(g.len(), p.len());
        for (a, b) in p.pairs() {
            assert!(g.le(
                &Elem::pair(a.clone(), Elem::Unit),
                &Elem::pair(b.clone(), Elem::Unit)
            ));
        }
    }

    #[test]
    fn grot_pair_with_one_point_mirrors_the_first_component() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["x", "y"]);
        let b = one_point(&grothendieck(&a));
        let (ab, proj) = grot_pair(&a, &b).expect("compatible bases");
        for pt in p.elems() {
            assert_eq!(ab.fiber(pt).len(), a.fiber(pt).len());
            for e in ab.fiber(pt) {
                assert_eq!(e.snd(), Some(&Elem::Unit));
                assert_eq!(proj.apply(pt, e), e.fst().unwrap());
            }
        }
    }

    #[test]
    fn grot_pair_counts_sum_over_fibers() {
        // |(A ⋉ B)(p)| must equal the sum over a in A(p) of |B(p, a)|.
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["x", "y"]);
        let int_a = grothendieck(&a);
        // B with fiber sizes differing per (p, a).
        let mut fiber: BTreeMap<Elem, BTreeSet<Elem>> = BTreeMap::new();
        for e in int_a.elems() {
            let n = if e.snd() == Some(&Elem::atom("x")) {
                2
            } else {
                1
            };
            fiber.insert(
                e.clone(),
                (0..n).map(|i| Elem::atom(&i.to_string())).collect(),
            );
        }
        let transport = int_a
            .pairs()
            .iter()
            .map(|(x, y)| {
                (
                    (x.clone(), y.clone()),
                    fiber[x]
                        .iter()
                        .map(|e| {
                            let v = if fiber[y].contains(e) {
                                e.clone()
                            } else {
                                Elem::atom("0")
                            };
                            (e.clone(), v)
                        })
                        .collect(),
                )
            })
            .collect();
        let b = IndexedSet::new(int_a.clone(), fiber, transport).expect("validates");
        let (ab, _) = grot_pair(&a, &b).expect("compatible");
        for pt in p.elems() {
            let expected: usize = a
                .fiber(pt)
                .iter()
                .map(|av| b.fiber(&Elem::pair(pt.clone(), av.clone())).len())
                .sum();
            assert_eq!(ab.fiber(pt).len(), expected);
        }
    }

    #[test]
    fn sections_of_a_constant_two_element_fiber_over_a_chain() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["0", "1"]);
        assert_eq!(indexed_elements(&a).len(), 2);
    }

    #[test]
    fn section_count_equals_least_fiber_size() {
        let p = chain(&["p", "q", "r"]);
        let a = constant(&p, &["0", "1"]);
        let least = p.least().expect("chain has a least element");
        assert_eq!(indexed_elements(&a).len(), a.fiber(&least).len());
    }

    #[test]
    fn fibration_roundtrip_identities() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["0", "1"]);
        let f = to_fibration(&a);
        assert!(f.is_fibration());
        let back = from_fibration(&f).expect("canonical fibration");
        assert_eq!(back, a);
        let again = to_fibration(&back);
        assert_eq!(again, f);
    }

    #[test]
    fn missing_lift_is_rejected_with_its_witness() {
        // Q = {(p, 0)} over P = {p <= q}: no lift of (p,0) over q.
        let p = chain(&["p", "q"]);
        let q_elems: BTreeSet<Elem> = [Elem::pair(Elem::atom("p"), Elem::atom("0"))]
            .into_iter()
            .collect();
        let q_poset = FinPoset::from_generators(q_elems.clone(), &[]).unwrap();
        let map = q_elems
            .iter()
            .map(|e| (e.clone(), Elem::atom("p")))
            .collect();
        let f = PosetMap::new(q_poset, p, map).unwrap();
        match from_fibration(&f) {
            Err(IndexedError::NotFibration { target, at, .. }) => {
                assert_eq!(target, Elem::atom("q"));
                assert_eq!(at, Elem::pair(Elem::atom("p"), Elem::atom("0")));
            }
            other => panic!("expected a fibration failure, got {:?}", other),
        }
    }

    #[test]
    fn naturality_is_validated() {
        let p = chain(&["p", "q"]);
        let a = constant(&p, &["0", "1"]);
        let b = constant(&p, &["0", "1"]);
        // Break naturality with a non-constant family over a poset with a
        // twisted transport on the target side.
        let mut b_twisted = b.clone();
        b_twisted.corrupt_transport(
            &Elem::atom("p"),
            &Elem::atom("q"),
            &Elem::atom("0"),
            Elem::atom("1"),
        );
        b_twisted.corrupt_transport(
            &Elem::atom("p"),
            &Elem::atom("q"),
            &Elem::atom("1"),
            Elem::atom("0"),
        );
        let component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = p
            .elems()
            .iter()
            .map(|pt| {
                (
                    pt.clone(),
                    a.fiber(pt)
                        .iter()
                        .map(|e| (e.clone(), e.clone()))
                        .collect(),
                )
            })
            .collect();
        assert!(matches!(
            NatTrans::new(a, b_twisted, component),
            Err(IndexedError::Naturality(_))
        ));
    }
}
