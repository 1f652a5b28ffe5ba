//! Generators, exhaustive law suites, soundness fuzzing, and countermodel
//! search: the empirical verification layer.
//!
//! Everything here is deterministic: poset enumeration is canonical up to
//! isomorphism, random data is driven by explicit seeds through a fixed
//! stream cipher, and all aggregation follows ordered containers, so
//! reports are byte-identical across runs.

use crate::indexed::{
    from_fibration, grot_pair, grothendieck, indexed_elements, nat_to_fibration_map, one_point,
    to_fibration, Elem, FinPoset, IndexedError, IndexedSet, NatTrans, Section,
};
use crate::interp::{
    check_substitution_theorem, interp_context, interp_term_at, interp_type, save_model,
    satisfied, InterpError, Model, SubstSubject,
};
use crate::kernel::{self, Kernel};
use crate::indexed::fibration_map_to_nat;
use crate::lcc::{
    check_adjunctions, check_pullback_laws, enumerate_nat_trans, sub_generated, LccError,
};
use crate::subst::apply_subst;
use crate::syntax::{print_context, print_expr, Context, Decl, Expr, Signature, Subst};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Lcc(#[from] LccError),
    #[error(transparent)]
    Indexed(#[from] IndexedError),
    #[error("kernel: {0}")]
    Kernel(String),
    #[error("no model within bounds after {0} attempts")]
    NoModelWithinBounds(usize),
}

/// Configurations sampled per canonical poset by the law suite. Instance
/// counts per law are `LAW_CONFIGS_PER_POSET * (number of posets up to
/// isomorphism)`, which the tests pin against the poset census.
pub const LAW_CONFIGS_PER_POSET: usize = 3;

/// Cap on hom-set enumerations inside the law suite.
pub const HOM_CAP: usize = 20_000;

const MODEL_RETRY_BUDGET: usize = 60;

// --- canonical poset enumeration ---

/// All posets with `1..=max_size` elements, one representative per
/// isomorphism class, in a canonical deterministic order. Elements are
/// atoms `q0, q1, …`.
pub fn enumerate_posets(max_size: usize) -> Vec<FinPoset> {
    let mut out = Vec::new();
    for n in 1..=max_size {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let mut seen: BTreeSet<Vec<bool>> = BTreeSet::new();
        let mut canons: Vec<Vec<bool>> = Vec::new();
        for mask in 0u32..(1 << pairs.len()) {
            let mut le = vec![vec![false; n]; n];
            for (i, row) in le.iter_mut().enumerate() {
                row[i] = true;
            }
            for (k, (i, j)) in pairs.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    le[*i][*j] = true;
                }
            }
            transitive_close(&mut le);
            let canon = canonical_matrix(&le);
            if seen.insert(canon.clone()) {
                canons.push(canon);
            }
        }
        canons.sort();
        for canon in canons {
            out.push(poset_from_matrix(&canon, n));
        }
    }
    out
}

fn transitive_close(le: &mut [Vec<bool>]) {
    let n = le.len();
    loop {
        let mut grew = false;
        for i in 0..n {
            for j in 0..n {
                if le[i][j] {
                    for k in 0..n {
                        if le[j][k] && !le[i][k] {
                            le[i][k] = true;
                            grew = true;
                        }
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
}

/// Minimal row-major encoding of the relation matrix over all relabelings.
fn canonical_matrix(le: &[Vec<bool>]) -> Vec<bool> {
    let n = le.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best: Option<Vec<bool>> = None;
    permute_all(&mut perm, 0, &mut |p| {
        let mut enc = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                enc.push(le[p[i]][p[j]]);
            }
        }
        match &best {
            Some(b) if *b <= enc => {}
            _ => best = Some(enc),
        }
    });
    best.expect("at least the identity permutation")
}

fn permute_all(perm: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
    if at == perm.len() {
        visit(perm);
        return;
    }
    for i in at..perm.len() {
        perm.swap(at, i);
        permute_all(perm, at + 1, visit);
        perm.swap(at, i);
    }
}

fn poset_from_matrix(enc: &[bool], n: usize) -> FinPoset {
    let elems: BTreeSet<Elem> = (0..n).map(|i| Elem::atom(&format!("q{}", i))).collect();
    let mut gens = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if enc[i * n + j] && i != j {
                gens.push((
                    Elem::atom(&format!("q{}", i)),
                    Elem::atom(&format!("q{}", j)),
                ));
            }
        }
    }
    FinPoset::from_generators(elems, &gens).expect("canonical matrix is a poset")
}

// --- exhaustive indexed-set enumeration ---

/// All indexed sets over `p` with fiber sizes up to `max_fiber`,
/// exhaustively and in deterministic order. Fibers are atom prefixes
/// `{0, 1, …}`; transports are enumerated on covering pairs and completed
/// by composition, keeping the functorial ones.
pub fn enumerate_indexed_sets(p: &FinPoset, max_fiber: usize) -> Vec<IndexedSet> {
    let elems: Vec<Elem> = p.elems().iter().cloned().collect();
    let covers = covering_pairs(p);
    let mut out = Vec::new();
    let mut sizes = vec![0usize; elems.len()];
    loop {
        // Fibers for this size assignment.
        let fiber: BTreeMap<Elem, BTreeSet<Elem>> = elems
            .iter()
            .zip(&sizes)
            .map(|(e, n)| {
                (
                    e.clone(),
                    (0..*n).map(|i| Elem::atom(&i.to_string())).collect(),
                )
            })
            .collect();
        enumerate_cover_maps(p, &covers, &fiber, &mut out);
        // Next size assignment (mixed-radix counter).
        let mut i = 0;
        loop {
            if i == sizes.len() {
                return out;
            }
            sizes[i] += 1;
            if sizes[i] > max_fiber {
                sizes[i] = 0;
                i += 1;
            } else {
                break;
            }
        }
    }
}

fn covering_pairs(p: &FinPoset) -> Vec<(Elem, Elem)> {
    p.pairs()
        .iter()
        .filter(|(a, b)| {
            a != b
                && !p
                    .elems()
                    .iter()
                    .any(|c| c != a && c != b && p.le(a, c) && p.le(c, b))
        })
        .cloned()
        .collect()
}

fn enumerate_cover_maps(
    p: &FinPoset,
    covers: &[(Elem, Elem)],
    fiber: &BTreeMap<Elem, BTreeSet<Elem>>,
    out: &mut Vec<IndexedSet>,
) {
    // Enumerate every assignment of functions along the covering pairs.
    let mut choices: Vec<Vec<BTreeMap<Elem, Elem>>> = Vec::new();
    for (a, b) in covers {
        let dom: Vec<Elem> = fiber[a].iter().cloned().collect();
        let cod: Vec<Elem> = fiber[b].iter().cloned().collect();
        if dom.is_empty() {
            choices.push(vec![BTreeMap::new()]);
            continue;
        }
        if cod.is_empty() {
            return; // no function from a nonempty fiber into an empty one
        }
        let mut maps = Vec::new();
        let mut idx = vec![0usize; dom.len()];
        loop {
            let m: BTreeMap<Elem, Elem> = dom
                .iter()
                .zip(&idx)
                .map(|(e, i)| (e.clone(), cod[*i].clone()))
                .collect();
            maps.push(m);
            let mut k = 0;
            loop {
                if k == idx.len() {
                    break;
                }
                idx[k] += 1;
                if idx[k] == cod.len() {
                    idx[k] = 0;
                    k += 1;
                } else {
                    break;
                }
            }
            if idx.iter().all(|i| *i == 0) {
                break;
            }
        }
        choices.push(maps);
    }
    let mut pick = vec![0usize; choices.len()];
    loop {
        let cover_maps: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = covers
            .iter()
            .cloned()
            .zip(pick.iter().map(|i| &choices[..]).zip(0..))
            .map(|(pair, _)| pair)
            .zip(pick.iter().enumerate().map(|(k, i)| choices[k][*i].clone()))
            .collect();
        if let Some(is) = complete_transports(p, fiber, &cover_maps) {
            out.push(is);
        }
        // advance
        let mut k = 0;
        loop {
            if k == pick.len() {
                return;
            }
            pick[k] += 1;
            if pick[k] == choices[k].len() {
                pick[k] = 0;
                k += 1;
            } else {
                break;
            }
        }
        if pick.iter().all(|i| *i == 0) && !choices.is_empty() {
            return;
        }
        if choices.is_empty() {
            return;
        }
    }
}

/// Complete cover transports to all related pairs by path composition and
/// validate; diamonds with inconsistent completions drop out here.
fn complete_transports(
    p: &FinPoset,
    fiber: &BTreeMap<Elem, BTreeSet<Elem>>,
    cover_maps: &BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>>,
) -> Option<IndexedSet> {
    let mut transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = BTreeMap::new();
    for (a, b) in p.pairs() {
        let m = if a == b {
            fiber[a].iter().map(|e| (e.clone(), e.clone())).collect()
        } else if let Some(m) = cover_maps.get(&(a.clone(), b.clone())) {
            m.clone()
        } else {
            compose_along_path(p, cover_maps, fiber, a, b)?
        };
        transport.insert((a.clone(), b.clone()), m);
    }
    IndexedSet::new(p.clone(), fiber.clone(), transport).ok()
}

fn compose_along_path(
    p: &FinPoset,
    cover_maps: &BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>>,
    fiber: &BTreeMap<Elem, BTreeSet<Elem>>,
    a: &Elem,
    b: &Elem,
) -> Option<BTreeMap<Elem, Elem>> {
    // First covering step from a towards b, then recurse.
    for ((x, y), m) in cover_maps {
        if x == a && p.le(y, b) && y != b {
            let rest = if cover_maps.contains_key(&(y.clone(), b.clone())) {
                cover_maps[&(y.clone(), b.clone())].clone()
            } else {
                compose_along_path(p, cover_maps, fiber, y, b)?
            };
            return Some(
                m.iter()
                    .map(|(e, v)| (e.clone(), rest[v].clone()))
                    .collect(),
            );
        }
        if x == a && y == b {
            return Some(m.clone());
        }
    }
    // No covering path: only possible when the fiber at a is empty.
    if fiber[a].is_empty() {
        Some(BTreeMap::new())
    } else {
        None
    }
}

// --- random generation ---

fn random_indexed_set(rng: &mut ChaCha8Rng, p: &FinPoset, max_fiber: usize) -> Option<IndexedSet> {
    let covers = covering_pairs(p);
    let fiber: BTreeMap<Elem, BTreeSet<Elem>> = p
        .elems()
        .iter()
        .map(|e| {
            // Bias towards small nonempty fibers.
            let roll = rng.random_range(0..10u32);
            let n = if roll == 0 {
                0
            } else if roll < 7 {
                1.min(max_fiber)
            } else {
                max_fiber
            };
            (
                e.clone(),
                (0..n).map(|i| Elem::atom(&i.to_string())).collect(),
            )
        })
        .collect();
    let mut cover_maps: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = BTreeMap::new();
    for (a, b) in &covers {
        let dom: Vec<Elem> = fiber[a].iter().cloned().collect();
        let cod: Vec<Elem> = fiber[b].iter().cloned().collect();
        if !dom.is_empty() && cod.is_empty() {
            return None;
        }
        let m: BTreeMap<Elem, Elem> = dom
            .iter()
            .map(|e| (e.clone(), cod[rng.random_range(0..cod.len())].clone()))
            .collect();
        cover_maps.insert((a.clone(), b.clone()), m);
    }
    complete_transports(p, &fiber, &cover_maps)
}

/// Upper bound on the size of the hom-set between two indexed sets
/// (ignoring naturality, so always an over-approximation).
fn hom_bound(src: &IndexedSet, dst: &IndexedSet) -> usize {
    let mut bound: usize = 1;
    for (p, f) in src.fibers() {
        let d = dst.fiber(p).len();
        if f.is_empty() {
            continue;
        }
        if d == 0 {
            return 0;
        }
        for _ in f {
            bound = bound.saturating_mul(d);
            if bound > HOM_CAP {
                return bound;
            }
        }
    }
    bound
}

/// Deterministic random model: a random poset, functorial random fibers
/// per type constant, and randomly chosen sections per term constant,
/// retried within a budget and falling back to the one-element
/// interpretation (which always validates).
pub fn gen_random_model(
    sig: &Signature,
    seed: u64,
    max_poset: usize,
    max_fiber: usize,
) -> Result<Model, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MODEL_RETRY_BUDGET {
        if let Some(model) = try_gen_model(sig, &mut rng, max_poset, max_fiber) {
            return Ok(model);
        }
    }
    trivial_model(sig)
}

fn try_gen_model(
    sig: &Signature,
    rng: &mut ChaCha8Rng,
    max_poset: usize,
    max_fiber: usize,
) -> Option<Model> {
    let n = rng.random_range(1..=max_poset.max(1));
    let elems: BTreeSet<Elem> = (0..n).map(|i| Elem::atom(&format!("p{}", i))).collect();
    let mut gens = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                gens.push((
                    Elem::atom(&format!("p{}", i)),
                    Elem::atom(&format!("p{}", j)),
                ));
            }
        }
    }
    let base = FinPoset::from_generators(elems, &gens).ok()?;
    let mut model = Model {
        base: base.clone(),
        type_interp: BTreeMap::new(),
        term_interp: BTreeMap::new(),
    };
    for decl in &sig.decls {
        match decl {
            Decl::Type { name, arg_ctx } => {
                let ctx_is = interp_context(&model, sig, arg_ctx).ok()?;
                let target = grothendieck(&ctx_is);
                let is = random_indexed_set(rng, &target, max_fiber)?;
                model.type_interp.insert(name.clone(), is);
            }
            Decl::Term { name, ty } => {
                let owner = interp_type(&model, sig, &Context::default(), ty).ok()?;
                let sections = indexed_elements(&owner);
                if sections.is_empty() {
                    return None;
                }
                let pick = rng.random_range(0..sections.len());
                model
                    .term_interp
                    .insert(name.clone(), sections[pick].clone());
            }
        }
    }
    Some(model)
}

/// The one-element interpretation: a singleton poset, singleton fibers for
/// every type constant, and the forced sections. Always a valid model.
pub fn trivial_model(sig: &Signature) -> Result<Model, HarnessError> {
    let base = FinPoset::singleton("p0");
    let mut model = Model {
        base: base.clone(),
        type_interp: BTreeMap::new(),
        term_interp: BTreeMap::new(),
    };
    for decl in &sig.decls {
        match decl {
            Decl::Type { name, arg_ctx } => {
                let ctx_is = interp_context(&model, sig, arg_ctx)?;
                let target = grothendieck(&ctx_is);
                let fiber: BTreeMap<Elem, BTreeSet<Elem>> = target
                    .elems()
                    .iter()
                    .map(|e| (e.clone(), [Elem::atom("0")].into_iter().collect()))
                    .collect();
                let transport = target
                    .pairs()
                    .iter()
                    .map(|(a, b)| {
                        (
                            (a.clone(), b.clone()),
                            [(Elem::atom("0"), Elem::atom("0"))].into_iter().collect(),
                        )
                    })
                    .collect();
                let is = IndexedSet::new(target, fiber, transport)?;
                model.type_interp.insert(name.clone(), is);
            }
            Decl::Term { name, ty } => {
                let owner = interp_type(&model, sig, &Context::default(), ty)?;
                let sections = indexed_elements(&owner);
                let first = sections
                    .into_iter()
                    .next()
                    .ok_or(HarnessError::NoModelWithinBounds(MODEL_RETRY_BUDGET))?;
                model.term_interp.insert(name.clone(), first);
            }
        }
    }
    Ok(model)
}

// --- law suite ---

#[derive(Clone, Debug, Serialize)]
pub struct LawSummary {
    pub name: String,
    pub instances: usize,
    pub checks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LawsReport {
    pub max_poset: usize,
    pub max_fiber: usize,
    pub posets: usize,
    pub laws: Vec<LawSummary>,
}

impl LawsReport {
    pub fn all_pass(&self) -> bool {
        self.laws.iter().all(|l| l.counterexample.is_none())
    }
}

/// Drive the pullback and adjunction law checks over every canonical poset
/// within the bound, with `LAW_CONFIGS_PER_POSET` deterministic
/// configurations per poset.
pub fn run_lcc_laws(
    max_poset: usize,
    max_fiber: usize,
    law_filter: Option<&str>,
) -> Result<LawsReport, HarnessError> {
    let posets = enumerate_posets(max_poset);
    let mut agg: BTreeMap<String, LawSummary> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (pi, p) in posets.iter().enumerate() {
        for cfg in 0..LAW_CONFIGS_PER_POSET {
            let instance = law_instance(p, pi, cfg, max_fiber)?;
            let mut results = check_adjunctions(
                &instance.a,
                &instance.b,
                &instance.c,
                &instance.ds,
                &instance.gs,
                HOM_CAP,
            )?;
            results.extend(check_pullback_laws(
                &instance.h,
                &instance.b,
                Some(&instance.g_comp),
                &instance.cones,
                HOM_CAP,
            )?);
            for law in results {
                if let Some(f) = law_filter {
                    if law.law != f {
                        continue;
                    }
                }
                if !agg.contains_key(&law.law) {
                    order.push(law.law.clone());
                }
                let entry = agg.entry(law.law.clone()).or_insert_with(|| LawSummary {
                    name: law.law.clone(),
                    instances: 0,
                    checks: 0,
                    counterexample: None,
                });
                entry.instances += 1;
                entry.checks += law.checks;
                if entry.counterexample.is_none() {
                    if let Some(f) = law.failure {
                        entry.counterexample =
                            Some(format!("poset #{} config #{}: {}", pi, cfg, f));
                    }
                }
            }
        }
    }
    Ok(LawsReport {
        max_poset,
        max_fiber,
        posets: posets.len(),
        laws: order.into_iter().map(|n| agg.remove(&n).expect("aggregated")).collect(),
    })
}

struct LawInstance {
    a: IndexedSet,
    b: IndexedSet,
    c: IndexedSet,
    ds: Vec<IndexedSet>,
    gs: Vec<NatTrans>,
    h: NatTrans,
    g_comp: NatTrans,
    cones: Vec<IndexedSet>,
}

/// Deterministically sample one law configuration, retrying with a salted
/// seed until the hom-set bounds fit under the enumeration cap.
fn law_instance(
    p: &FinPoset,
    poset_index: usize,
    cfg: usize,
    max_fiber: usize,
) -> Result<LawInstance, HarnessError> {
    for salt in 0u64..200 {
        let seed = 0x67726F74u64
            .wrapping_mul(31)
            .wrapping_add(poset_index as u64)
            .wrapping_mul(1_000_003)
            .wrapping_add(cfg as u64)
            .wrapping_mul(7919)
            .wrapping_add(salt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Some(a) = random_indexed_set(&mut rng, p, max_fiber) else {
            continue;
        };
        let int_a = grothendieck(&a);
        let Some(b) = random_indexed_set(&mut rng, &int_a, max_fiber) else {
            continue;
        };
        let Ok((ab, proj)) = grot_pair(&a, &b) else {
            continue;
        };
        let int_ab = grothendieck(&ab);
        let Some(c) = random_indexed_set(&mut rng, &int_ab, max_fiber) else {
            continue;
        };
        let Some(d_rand) = random_indexed_set(&mut rng, &int_a, max_fiber) else {
            continue;
        };
        let ds = vec![one_point(&int_a), d_rand];
        // Sub-indexed-sets give nontrivial g / h; identity covers the
        // degenerate case.
        let seeds: BTreeMap<Elem, BTreeSet<Elem>> = a
            .base()
            .minimals()
            .into_iter()
            .filter_map(|m| {
                a.fiber(&m)
                    .iter()
                    .next()
                    .cloned()
                    .map(|e| (m, [e].into_iter().collect()))
            })
            .collect();
        let Ok((a_sub, incl)) = sub_generated(&a, &seeds) else {
            continue;
        };
        let gs = vec![NatTrans::identity(&a), incl.clone()];
        let h = incl;
        let sub_seeds2: BTreeMap<Elem, BTreeSet<Elem>> = a_sub
            .base()
            .minimals()
            .into_iter()
            .filter_map(|m| {
                a_sub
                    .fiber(&m)
                    .iter()
                    .next()
                    .cloned()
                    .map(|e| (m, [e].into_iter().collect()))
            })
            .collect();
        let Ok((_, g_comp)) = sub_generated(&a_sub, &sub_seeds2) else {
            continue;
        };
        let cones = vec![one_point(p)];

        // Enumeration budgets for every hom-set the adjunction checks walk.
        let sum = match crate::lcc::dep_sum(&b, &c) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let prod = match crate::lcc::dep_prod(&a, &b, &c) {
            Ok(pr) => pr,
            Err(_) => continue,
        };
        let mut fits = true;
        for d in &ds {
            let Ok((proj_d, _)) = crate::lcc::pullback(&proj, d) else {
                fits = false;
                break;
            };
            if hom_bound(&sum, d) > HOM_CAP
                || hom_bound(&c, &proj_d) > HOM_CAP
                || hom_bound(&proj_d, &c) > HOM_CAP
                || hom_bound(d, &prod) > HOM_CAP
            {
                fits = false;
                break;
            }
        }
        if !fits {
            continue;
        }
        return Ok(LawInstance {
            a,
            b,
            c,
            ds,
            gs,
            h,
            g_comp,
            cones,
        });
    }
    Err(HarnessError::Kernel(format!(
        "could not sample a law configuration under the hom cap for poset #{}",
        poset_index
    )))
}

// --- isomorphism suite ---

#[derive(Clone, Debug, Serialize)]
pub struct IsoReport {
    pub indexed_sets: usize,
    pub morphisms: usize,
    pub section_law_instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

/// Exhaustive check of the indexed-set/fibration isomorphism and the
/// section-counting law on every indexed set within the bounds.
pub fn run_iso_suite(max_poset: usize, max_fiber: usize) -> Result<IsoReport, HarnessError> {
    let mut n_sets = 0;
    let mut n_mors = 0;
    let mut n_sections = 0;
    for p in enumerate_posets(max_poset) {
        let all = enumerate_indexed_sets(&p, max_fiber);
        for a in &all {
            n_sets += 1;
            let f = to_fibration(a);
            if !f.is_fibration() {
                return Ok(IsoReport {
                    indexed_sets: n_sets,
                    morphisms: n_mors,
                    section_law_instances: n_sections,
                    counterexample: Some(format!(
                        "canonical projection of {:?} is not a fibration",
                        a.base()
                    )),
                });
            }
            let back = from_fibration(&f)?;
            if &back != a {
                return Ok(IsoReport {
                    indexed_sets: n_sets,
                    morphisms: n_mors,
                    section_law_instances: n_sections,
                    counterexample: Some("from(to(A)) differs from A".to_string()),
                });
            }
            if to_fibration(&back) != f {
                return Ok(IsoReport {
                    indexed_sets: n_sets,
                    morphisms: n_mors,
                    section_law_instances: n_sections,
                    counterexample: Some("to(from(f)) differs from f".to_string()),
                });
            }
            if let Some(least) = p.least() {
                n_sections += 1;
                let count = indexed_elements(a).len();
                if count != a.fiber(&least).len() {
                    return Ok(IsoReport {
                        indexed_sets: n_sets,
                        morphisms: n_mors,
                        section_law_instances: n_sections,
                        counterexample: Some(format!(
                            "section count {} differs from least-fiber size {}",
                            count,
                            a.fiber(&least).len()
                        )),
                    });
                }
            }
        }
        // Morphism round-trips on the hom-sets of the first few pairs.
        for a in all.iter().take(6) {
            for b in all.iter().take(6) {
                let homs = match enumerate_nat_trans(a, b, 512) {
                    Ok(h) => h,
                    Err(_) => continue,
                };
                for eta in homs.into_iter().take(8) {
                    n_mors += 1;
                    let phi = nat_to_fibration_map(&eta);
                    let back = fibration_map_to_nat(&phi, a, b)?;
                    if back != eta {
                        return Ok(IsoReport {
                            indexed_sets: n_sets,
                            morphisms: n_mors,
                            section_law_instances: n_sections,
                            counterexample: Some(
                                "I(F(η)) differs from η on a morphism".to_string(),
                            ),
                        });
                    }
                    let again = nat_to_fibration_map(&back);
                    if again != phi {
                        return Ok(IsoReport {
                            indexed_sets: n_sets,
                            morphisms: n_mors,
                            section_law_instances: n_sections,
                            counterexample: Some(
                                "F(I(φ)) differs from φ on a morphism".to_string(),
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(IsoReport {
        indexed_sets: n_sets,
        morphisms: n_mors,
        section_law_instances: n_sections,
        counterexample: None,
    })
}

// --- soundness fuzzing ---

#[derive(Clone, Debug, Serialize)]
pub struct FuzzReport {
    pub seed: u64,
    pub iterations: u32,
    pub counts: BTreeMap<String, usize>,
    pub failures: Vec<FuzzFailure>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzFailure {
    pub iteration: u32,
    pub kind: String,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl FuzzReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Per iteration: generate a model and well-typed data by rule-directed
/// synthesis, then check (a) denotation well-typedness, (b) kernel-accepted
/// equalities denote equal sections, (c) the substitution-theorem clauses
/// (including the auxiliary extension law), and (d) conversion-rule
/// instances semantically.
pub fn run_soundness_fuzz(
    sig: &Signature,
    theory_src: &str,
    seed: u64,
    iterations: u32,
) -> Result<FuzzReport, HarnessError> {
    let sig_report = kernel::check_signature(sig);
    if !sig_report.accepted() {
        return Err(HarnessError::Kernel(format!(
            "signature rejected: {}",
            sig_report.message.unwrap_or_default()
        )));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut failures: Vec<FuzzFailure> = Vec::new();
    let kernel = Kernel::new(sig);

    for iter in 0..iterations {
        let iter_seed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(iter as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(iter_seed);
        let model = gen_random_model(sig, iter_seed ^ 0xA5A5, 2, 2)?;
        let model_json = || {
            serde_json::to_string_pretty(&save_model(&model, sig)).unwrap_or_default()
        };

        let mut fail = |kind: &str, detail: String, failures: &mut Vec<FuzzFailure>| {
            failures.push(FuzzFailure {
                iteration: iter,
                kind: kind.to_string(),
                detail,
                theory: Some(theory_src.to_string()),
                model: Some(model_json()),
            });
        };

        let mut synth = Synth { sig, rng: &mut rng };
        let ctx_len = synth.rng.random_range(0..=2usize);
        let Some(ctx) = synth.gen_context(ctx_len, 2) else {
            *counts.entry("skipped_generation".to_string()).or_default() += 1;
            continue;
        };
        if !kernel.check_context(&ctx).accepted() {
            fail(
                "generator",
                format!("generated context rejected: {}", print_context(&ctx)),
                &mut failures,
            );
            continue;
        }

        // (a) denotation well-typedness.
        let Some(goal_ty) = synth.gen_type(&ctx, 3) else {
            *counts.entry("skipped_generation".to_string()).or_default() += 1;
            continue;
        };
        let Some(term) = synth.gen_term_at(&ctx, &goal_ty, 3) else {
            *counts.entry("skipped_generation".to_string()).or_default() += 1;
            continue;
        };
        let tyrep = kernel.check_type_wf(&ctx, &goal_ty);
        let trep = kernel.check_term(&ctx, &term, &goal_ty);
        if !tyrep.accepted() || !trep.accepted() {
            fail(
                "generator",
                format!(
                    "generated judgment rejected: {} |- {} : {}",
                    print_context(&ctx),
                    print_expr(&term),
                    print_expr(&goal_ty)
                ),
                &mut failures,
            );
            continue;
        }
        match interp_term_at(&model, sig, &ctx, &term, &goal_ty) {
            Ok(sec) => {
                let expected = interp_type(&model, sig, &ctx, &goal_ty)?;
                if sec.owner() != &expected {
                    fail(
                        "denotation_well_typed",
                        format!(
                            "owner of ⟦{}⟧ differs from ⟦{}⟧",
                            print_expr(&term),
                            print_expr(&goal_ty)
                        ),
                        &mut failures,
                    );
                } else {
                    *counts.entry("denotation_well_typed".to_string()).or_default() += 1;
                }
            }
            Err(e) if is_budget(&e) => {
                *counts.entry("skipped_budget".to_string()).or_default() += 1;
                continue;
            }
            Err(e) => {
                fail(
                    "denotation_well_typed",
                    format!("interpretation failed: {}", e),
                    &mut failures,
                );
            }
        }

        // (b)+(d) conversion-rule instances: kernel acceptance and
        // semantic equality of both sides.
        let pairs = synth.gen_equal_pairs(&ctx, 2);
        for (kind, lhs, rhs, at_ty) in pairs {
            let eq = kernel.equal_terms(&ctx, &lhs, &rhs, None);
            if !eq.accepted() {
                fail(
                    "kernel_equality",
                    format!(
                        "{} instance not accepted: {} == {} ({:?})",
                        kind,
                        print_expr(&lhs),
                        print_expr(&rhs),
                        eq.message
                    ),
                    &mut failures,
                );
                continue;
            }
            let ls = interp_term_at(&model, sig, &ctx, &lhs, &at_ty);
            let rs = interp_term_at(&model, sig, &ctx, &rhs, &at_ty);
            match (ls, rs) {
                (Ok(ls), Ok(rs)) => {
                    if ls.choices() != rs.choices() {
                        fail(
                            "equality_preserved",
                            format!(
                                "{}: ⟦{}⟧ differs from ⟦{}⟧",
                                kind,
                                print_expr(&lhs),
                                print_expr(&rhs)
                            ),
                            &mut failures,
                        );
                    } else {
                        *counts.entry("equality_preserved".to_string()).or_default() += 1;
                        *counts.entry(format!("rule_{}", kind)).or_default() += 1;
                    }
                }
                (Err(e), _) | (_, Err(e)) => {
                    if is_budget(&e) {
                        *counts.entry("skipped_budget".to_string()).or_default() += 1;
                    } else {
                        fail(
                            "equality_preserved",
                            format!("{}: interpretation failed: {}", kind, e),
                            &mut failures,
                        );
                    }
                }
            }
        }

        // (c) substitution theorem clauses.
        let dst_len = synth.rng.random_range(0..=2usize);
        let Some(dst) = synth.gen_context(dst_len, 2) else {
            *counts.entry("skipped_generation".to_string()).or_default() += 1;
            continue;
        };
        let Some(gamma) = synth.gen_subst(&ctx, &dst, 2) else {
            *counts.entry("skipped_generation".to_string()).or_default() += 1;
            continue;
        };
        if !kernel.check_subst(&ctx, &dst, &gamma).accepted() {
            fail(
                "generator",
                format!(
                    "generated substitution rejected: [{}]",
                    crate::syntax::print_subst(&gamma)
                ),
                &mut failures,
            );
            continue;
        }
        let mut subjects: Vec<SubstSubject> = vec![SubstSubject::Type(goal_ty.clone())];
        if kernel.infer_type(&ctx, &term).is_ok() {
            subjects.push(SubstSubject::Term(term.clone()));
        }
        if let Some(delta_src) = synth.gen_context(1, 2) {
            if let Some(delta) = synth.gen_subst(&delta_src, &ctx, 2) {
                if kernel.check_subst(&delta_src, &ctx, &delta).accepted() {
                    subjects.push(SubstSubject::Subst { delta_src, delta });
                }
            }
        }
        for subject in &subjects {
            match check_substitution_theorem(&model, sig, &ctx, &dst, &gamma, subject) {
                Ok(results) => {
                    for r in results {
                        if r.holds {
                            *counts.entry(r.clause.clone()).or_default() += 1;
                        } else {
                            fail(
                                &r.clause.clone(),
                                r.counterexample.unwrap_or_default(),
                                &mut failures,
                            );
                        }
                    }
                }
                Err(e) => {
                    if is_budget(&e) {
                        *counts.entry("skipped_budget".to_string()).or_default() += 1;
                    } else {
                        fail(
                            "substitution_theorem",
                            format!("check failed to run: {}", e),
                            &mut failures,
                        );
                    }
                }
            }
        }
    }

    Ok(FuzzReport {
        seed,
        iterations,
        counts,
        failures,
    })
}

fn is_budget(e: &InterpError) -> bool {
    matches!(e, InterpError::Lcc(LccError::Budget { .. }))
}

// --- countermodel search ---

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CountermodelOutcome {
    Found {
        tried: usize,
        #[serde(skip)]
        model: Model,
        model_file: crate::interp::ModelFile,
    },
    Exhausted {
        tried: usize,
    },
}

/// Enumerate models within the bounds in canonical order; return the first
/// in which the goal type's interpretation has no section, or how many
/// valid models were exhausted.
pub fn search_countermodel(
    sig: &Signature,
    ctx: &Context,
    goal: &Expr,
    max_poset: usize,
    max_fiber: usize,
) -> Result<CountermodelOutcome, HarnessError> {
    let mut tried = 0usize;
    for base in enumerate_posets(max_poset) {
        let mut model = Model {
            base: base.clone(),
            type_interp: BTreeMap::new(),
            term_interp: BTreeMap::new(),
        };
        if let Some(found) =
            search_decls(sig, ctx, goal, &mut model, 0, max_fiber, &mut tried)?
        {
            let model_file = save_model(&found, sig);
            return Ok(CountermodelOutcome::Found {
                tried,
                model: found,
                model_file,
            });
        }
    }
    Ok(CountermodelOutcome::Exhausted { tried })
}

fn search_decls(
    sig: &Signature,
    ctx: &Context,
    goal: &Expr,
    model: &mut Model,
    decl_idx: usize,
    max_fiber: usize,
    tried: &mut usize,
) -> Result<Option<Model>, HarnessError> {
    if decl_idx == sig.decls.len() {
        *tried += 1;
        if !satisfied(model, sig, ctx, goal)? {
            return Ok(Some(model.clone()));
        }
        return Ok(None);
    }
    match &sig.decls[decl_idx] {
        Decl::Type { name, arg_ctx } => {
            let ctx_is = interp_context(model, sig, arg_ctx)?;
            let target = grothendieck(&ctx_is);
            for candidate in enumerate_indexed_sets(&target, max_fiber) {
                model.type_interp.insert(name.clone(), candidate);
                if let Some(found) =
                    search_decls(sig, ctx, goal, model, decl_idx + 1, max_fiber, tried)?
                {
                    return Ok(Some(found));
                }
            }
            model.type_interp.remove(name);
            Ok(None)
        }
        Decl::Term { name, ty } => {
            let owner = interp_type(model, sig, &Context::default(), ty)?;
            for sec in indexed_elements(&owner) {
                model.term_interp.insert(name.clone(), sec);
                if let Some(found) =
                    search_decls(sig, ctx, goal, model, decl_idx + 1, max_fiber, tried)?
                {
                    return Ok(Some(found));
                }
            }
            model.term_interp.remove(name);
            Ok(None)
        }
    }
}

// --- rule-directed synthesis ---

struct Synth<'a> {
    sig: &'a Signature,
    rng: &'a mut ChaCha8Rng,
}

impl<'a> Synth<'a> {
    fn kernel(&self) -> Kernel<'a> {
        Kernel::new(self.sig)
    }

    fn gen_context(&mut self, len: usize, depth: usize) -> Option<Context> {
        let mut ctx = Context::default();
        for i in 0..len {
            let ty = self.gen_type(&ctx, depth)?;
            ctx.decls.push((format!("g{}", i), ty));
        }
        Some(ctx)
    }

    fn gen_type(&mut self, ctx: &Context, depth: usize) -> Option<Expr> {
        let type_decls: Vec<(&str, &Context)> = self
            .sig
            .decls
            .iter()
            .filter_map(|d| match d {
                Decl::Type { name, arg_ctx } => Some((name.as_str(), arg_ctx)),
                _ => None,
            })
            .collect();
        let max_choice = if depth <= 1 { 4 } else { 6 };
        for _ in 0..6 {
            match self.rng.random_range(0..max_choice) {
                0 => return Some(Expr::Unit),
                1 | 2 => {
                    if type_decls.is_empty() {
                        return Some(Expr::Unit);
                    }
                    let (name, arg_ctx) =
                        type_decls[self.rng.random_range(0..type_decls.len())];
                    let mut assigns: Vec<(String, Expr)> = Vec::new();
                    let mut ok = true;
                    for (x, s) in &arg_ctx.decls {
                        let prefix = Subst {
                            assigns: assigns.clone(),
                        };
                        let expected = apply_subst(&prefix, s).ok()?;
                        match self.gen_term_at(ctx, &expected, depth.saturating_sub(1)) {
                            Some(t) => assigns.push((x.clone(), t)),
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        return Some(Expr::TypeApp {
                            head: name.to_string(),
                            args: Subst { assigns },
                        });
                    }
                }
                3 => {
                    // Identity type over inferable sides.
                    let s = self.gen_type(ctx, depth.saturating_sub(1))?;
                    let a = self.gen_term_at(ctx, &s, depth.saturating_sub(1))?;
                    if self.kernel().infer_type(ctx, &a).is_err() {
                        continue;
                    }
                    let b = if self.rng.random_bool(0.6) {
                        a.clone()
                    } else {
                        match self.gen_term_at(ctx, &s, depth.saturating_sub(1)) {
                            Some(b) if self.kernel().infer_type(ctx, &b).is_ok() => b,
                            _ => a.clone(),
                        }
                    };
                    return Some(Expr::id(a, b));
                }
                4 | 5 => {
                    // Binder domains shrink two levels so nested products
                    // stay at desk scale.
                    let dom = self.gen_type(ctx, depth.saturating_sub(2))?;
                    let x = format!("g{}", ctx.len());
                    let ext = ctx.extended(&x, dom.clone());
                    let cod = self.gen_type(&ext, depth.saturating_sub(1))?;
                    let body = cod.close(&x);
                    return Some(if self.rng.random_bool(0.5) {
                        Expr::sigma(dom, body)
                    } else {
                        Expr::pi(dom, body)
                    });
                }
                _ => unreachable!(),
            }
        }
        Some(Expr::Unit)
    }

    fn gen_term_at(&mut self, ctx: &Context, ty: &Expr, depth: usize) -> Option<Expr> {
        match ty {
            Expr::Unit => {
                if depth >= 2 && self.rng.random_bool(0.25) {
                    // A beta redex at Unit keeps the normalizer honest.
                    Some(Expr::app(
                        Expr::lam(Expr::Unit, Expr::BVar(0)),
                        Expr::Star,
                    ))
                } else {
                    Some(Expr::Star)
                }
            }
            Expr::Id(l, _) => {
                let refl = Expr::refl((**l).clone());
                if self.kernel().check_term(ctx, &refl, ty).accepted() {
                    Some(refl)
                } else {
                    None
                }
            }
            Expr::Sigma { dom, cod } => {
                let s = self.gen_term_at(ctx, dom, depth.saturating_sub(1))?;
                let snd_ty = cod.instantiate(&s);
                let t = self.gen_term_at(ctx, &snd_ty, depth.saturating_sub(1))?;
                Some(Expr::pair(s, t))
            }
            Expr::Pi { dom, cod } => {
                let x = format!("g{}", ctx.len());
                let ext = ctx.extended(&x, (**dom).clone());
                let body = self.gen_term_at(&ext, &cod.open_with(&x), depth.saturating_sub(1))?;
                Some(Expr::lam((**dom).clone(), body.close(&x)))
            }
            Expr::TypeApp { .. } => {
                // Head candidates: context variables and term constants
                // whose telescopes can end at the goal.
                let mut candidates: Vec<(Expr, Expr)> = Vec::new();
                for (x, s) in &ctx.decls {
                    candidates.push((Expr::fvar(x), s.clone()));
                }
                for d in &self.sig.decls {
                    if let Decl::Term { name, ty } = d {
                        candidates.push((Expr::cnst(name), ty.clone()));
                    }
                }
                // Deterministic shuffle.
                for i in (1..candidates.len()).rev() {
                    let j = self.rng.random_range(0..=i);
                    candidates.swap(i, j);
                }
                let kernel = self.kernel();
                for (head, head_ty) in candidates.into_iter().take(8) {
                    if let Some(t) = self.saturate(ctx, head, head_ty, ty, depth, &kernel) {
                        return Some(t);
                    }
                }
                None
            }
            _ => None,
        }
    }

    /// Apply a candidate head to synthesized arguments until its telescope
    /// is exhausted, then keep it if the result type matches the goal.
    fn saturate(
        &mut self,
        ctx: &Context,
        head: Expr,
        head_ty: Expr,
        goal: &Expr,
        depth: usize,
        kernel: &Kernel<'a>,
    ) -> Option<Expr> {
        let mut term = head;
        let mut ty = head_ty;
        let mut budget = 6;
        loop {
            if kernel.equal_types(ctx, &ty, goal).accepted() {
                return Some(term);
            }
            match ty {
                Expr::Pi { ref dom, ref cod } => {
                    if budget == 0 || depth == 0 {
                        return None;
                    }
                    budget -= 1;
                    let arg = self.gen_term_at(ctx, dom, depth.saturating_sub(1))?;
                    let next = cod.instantiate(&arg);
                    term = Expr::app(term, arg);
                    ty = next;
                }
                _ => return None,
            }
        }
    }

    /// Pairs of terms related by the conversion rules, together with a type
    /// to compare them at: beta and projection contractions, functional
    /// extensionality (eta), and the unit rule.
    fn gen_equal_pairs(&mut self, ctx: &Context, depth: usize) -> Vec<(String, Expr, Expr, Expr)> {
        let mut out = Vec::new();
        let kernel = self.kernel();

        // beta: (fun x:S => t) s == t[x := s]
        if let Some(dom) = self.gen_type(ctx, depth) {
            if let Some(arg) = self.gen_term_at(ctx, &dom, depth) {
                let x = format!("g{}", ctx.len());
                let ext = ctx.extended(&x, dom.clone());
                if let Some(cod) = self.gen_type(&ext, depth) {
                    if let Some(body) = self.gen_term_at(&ext, &cod, depth) {
                        let lam = Expr::lam(dom.clone(), body.close(&x));
                        let redex = Expr::app(lam, arg.clone());
                        if let Ok(subbed) =
                            crate::subst::subst_one(ctx, &x, &arg, &body)
                        {
                            let at_ty = cod.close(&x).instantiate(&arg);
                            if kernel.check_term(ctx, &redex, &at_ty).accepted() {
                                out.push(("beta".to_string(), redex, subbed, at_ty));
                            }
                        }
                    }
                }
            }
        }

        // pi1/pi2: projections of a literal pair.
        if let Some(s_ty) = self.gen_type(ctx, depth) {
            if let Some(t_ty) = self.gen_type(ctx, depth) {
                if let (Some(s), Some(t)) = (
                    self.gen_term_at(ctx, &s_ty, depth),
                    self.gen_term_at(ctx, &t_ty, depth),
                ) {
                    let inferable = kernel.infer_type(ctx, &s).is_ok()
                        && kernel.infer_type(ctx, &t).is_ok();
                    if inferable {
                        let pair = Expr::pair(s.clone(), t.clone());
                        out.push((
                            "pi1".to_string(),
                            Expr::proj1(pair.clone()),
                            s,
                            s_ty,
                        ));
                        out.push(("pi2".to_string(), Expr::proj2(pair), t, t_ty));
                    }
                }
            }
        }

        // eta / functional extensionality: f == fun x:S => f x
        if let Some(dom) = self.gen_type(ctx, depth) {
            let cod = self.gen_type(ctx, depth).unwrap_or(Expr::Unit);
            let pi_ty = Expr::pi(dom.clone(), cod.clone());
            if let Some(f) = self.gen_term_at(ctx, &pi_ty, depth) {
                if kernel.infer_type(ctx, &f).is_ok() {
                    let eta = Expr::lam(dom, Expr::app(f.clone(), Expr::BVar(0)));
                    out.push(("eta".to_string(), f, eta, pi_ty));
                }
            }
        }

        // unit: any term of Unit type equals star.
        if let Some(u) = self.gen_term_at(ctx, &Expr::Unit, depth) {
            out.push(("unit".to_string(), u, Expr::Star, Expr::Unit));
        }

        out
    }

    fn gen_subst(&mut self, src: &Context, dst: &Context, depth: usize) -> Option<Subst> {
        let mut assigns: Vec<(String, Expr)> = Vec::new();
        for (x, s) in &src.decls {
            let prefix = Subst {
                assigns: assigns.clone(),
            };
            let expected = apply_subst(&prefix, s).ok()?;
            let t = self.gen_term_at(dst, &expected, depth)?;
            assigns.push((x.clone(), t));
        }
        Some(Subst { assigns })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_context, parse_expr_in, parse_theory};

    #[test]
    fn poset_census_up_to_isomorphism() {
        assert_eq!(enumerate_posets(1).len(), 1);
        assert_eq!(enumerate_posets(2).len(), 1 + 2);
        // 1 + 2 + 5: the five 3-element posets up to isomorphism.
        assert_eq!(enumerate_posets(3).len(), 1 + 2 + 5);
    }

    #[test]
    fn indexed_set_enumeration_is_exhaustive_on_a_point() {
        let p = FinPoset::singleton("q0");
        // Sizes 0, 1, 2 with no transports to choose.
        assert_eq!(enumerate_indexed_sets(&p, 2).len(), 3);
    }

    #[test]
    fn indexed_set_enumeration_counts_functor_choices() {
        // Two-chain, fibers up to 2: sum over size pairs of |maps|:
        // (0,0):1 (0,1):1 (0,2):1 (1,0):0 (1,1):1 (1,2):2 (2,0):0 (2,1):1 (2,2):4
        let posets = enumerate_posets(2);
        let chain = posets
            .iter()
            .find(|p| p.pairs().len() == 3)
            .expect("the two-chain");
        assert_eq!(enumerate_indexed_sets(chain, 2).len(), 11);
    }

    #[test]
    fn model_generation_is_deterministic() {
        let sig = parse_theory("theory T { type b() const c : b() }")
            .unwrap()
            .signature;
        let m1 = gen_random_model(&sig, 7, 2, 2).unwrap();
        let m2 = gen_random_model(&sig, 7, 2, 2).unwrap();
        assert_eq!(m1, m2);
        let m3 = gen_random_model(&sig, 8, 2, 2).unwrap();
        let _ = m3; // different seed may or may not differ; determinism is the claim
    }

    #[test]
    fn generated_model_interprets_nonempty_b() {
        let sig = parse_theory("theory T { type b() }").unwrap().signature;
        let m = gen_random_model(&sig, 3, 2, 2).unwrap();
        assert!(m.type_interp.contains_key("b"));
    }

    #[test]
    fn category_signature_gets_a_model_and_the_trivial_fallback_validates() {
        let th = parse_theory(crate::kernel::tests::CAT_SRC).unwrap();
        let sig = th.signature;
        let m = gen_random_model(&sig, 42, 2, 2).expect("model within bounds");
        // Every axiom constant has a section in the generated model.
        for name in ["id", "comp", "assoc", "neutr_r", "neutr_l"] {
            assert!(m.term_interp.contains_key(name), "missing {}", name);
        }
        let t = trivial_model(&sig).expect("trivial model");
        assert_eq!(t.base.len(), 1);
    }

    #[test]
    fn countermodel_for_distinguishable_constants() {
        let th = parse_theory("theory T { type b() const c : b() const d : b() }").unwrap();
        let sig = th.signature;
        let ctx = Context::default();
        let goal = parse_expr_in(&sig, &ctx, "Id(c, d)").unwrap();
        match search_countermodel(&sig, &ctx, &goal, 1, 2).unwrap() {
            CountermodelOutcome::Found { model, .. } => {
                assert_eq!(model.base.len(), 1);
                assert_eq!(model.type_interp["b"].total_elems(), 2);
                let c = model.term_interp["c"].choices().values().next().unwrap();
                let d = model.term_interp["d"].choices().values().next().unwrap();
                assert_ne!(c, d);
                assert!(!satisfied(&model, &sig, &ctx, &goal).unwrap());
            }
            other => panic!("expected a countermodel, got {:?}", other),
        }
    }

    #[test]
    fn unit_and_unit_functions_are_valid_everywhere() {
        let th = parse_theory("theory T { type b() const c : b() const d : b() }").unwrap();
        let sig = th.signature;
        let ctx = Context::default();
        for goal_src in ["Unit", "Pi x : Unit . Unit"] {
            let goal = parse_expr_in(&sig, &ctx, goal_src).unwrap();
            match search_countermodel(&sig, &ctx, &goal, 1, 2).unwrap() {
                CountermodelOutcome::Exhausted { tried } => {
                    assert!(tried > 0, "search must actually try models");
                }
                other => panic!("{} should be valid, got {:?}", goal_src, other),
            }
        }
    }

    #[test]
    fn laws_pass_at_the_smallest_bound() {
        let report = run_lcc_laws(1, 1, None).expect("laws run");
        assert!(report.all_pass(), "{:?}", report);
        for law in &report.laws {
            assert_eq!(law.instances, LAW_CONFIGS_PER_POSET * report.posets);
        }
    }

    #[test]
    fn fuzz_zero_iterations_is_an_empty_pass() {
        let sig = parse_theory("theory T { type b() }").unwrap().signature;
        let report = run_soundness_fuzz(&sig, "theory T { type b() }", 1, 0).unwrap();
        assert!(report.ok());
        assert!(report.counts.is_empty());
    }

    #[test]
    fn fuzz_comparator_catches_a_corrupted_denotation() {
        // A mutant interpreter (wrong lambda clause) shows up as unequal
        // sections; emulate one by corrupting a valid denotation.
        let sig = parse_theory("theory T { type b() const c : b() }")
            .unwrap()
            .signature;
        let model = gen_random_model(&sig, 11, 1, 2).unwrap();
        let ctx = Context::default();
        let lhs = parse_expr_in(&sig, &ctx, "(fun x : b() => x) c").unwrap();
        let rhs = parse_expr_in(&sig, &ctx, "c").unwrap();
        let ls = crate::interp::interp_term(&model, &sig, &ctx, &lhs).unwrap();
        let mut rs = crate::interp::interp_term(&model, &sig, &ctx, &rhs).unwrap();
        assert_eq!(ls.choices(), rs.choices());
        let (p, v) = rs.choices().iter().next().map(|(p, v)| (p.clone(), v.clone())).unwrap();
        let other = model.type_interp["b"]
            .fiber(&p)
            .iter()
            .find(|e| **e != v)
            .cloned();
        if let Some(other) = other {
            rs.corrupt_choice(&p, other);
            assert_ne!(ls.choices(), rs.choices());
        }
    }

    #[test]
    fn small_fuzz_run_is_clean() {
        let src = "theory T { type b() const c : b() const d : b() }";
        let sig = parse_theory(src).unwrap().signature;
        let report = run_soundness_fuzz(&sig, src, 5, 25).unwrap();
        assert!(report.ok(), "failures: {:?}", report.failures);
        assert!(report.counts.get("denotation_well_typed").copied().unwrap_or(0) > 0);
        assert!(report.counts.get("equality_preserved").copied().unwrap_or(0) > 0);
        assert!(report.counts.get("type_substitution").copied().unwrap_or(0) > 0);
    }

    #[test]
    fn iso_suite_passes_at_small_bounds() {
        let report = run_iso_suite(2, 1).expect("iso suite runs");
        assert!(report.counterexample.is_none(), "{:?}", report.counterexample);
        assert!(report.indexed_sets > 0);
    }
}
