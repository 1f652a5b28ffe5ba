//! Models of a signature over a finite poset and the interpretation of
//! contexts, substitutions, types, and terms as indexed sets, natural
//! transformations, and sections.
//!
//! The interpretation clauses, in outline: the empty context is the
//! one-point indexed set and context extension is pairing; a type
//! application reindexes the constant's interpretation along the fibration
//! of the interpreted argument substitution; `Unit` is one-point; the
//! identity type is the subsingleton of pointwise agreement of the two
//! sections; Sigma and Pi are the dependent sum and product; lambda is
//! `split` of the body's section; application composes the unsplit function
//! section with the fibration of the argument's section. Substitutions
//! interpret to natural transformations built from the pointwise tuples of
//! their term sections.

use crate::indexed::{
    grot_pair, grothendieck, indexed_elements, one_point, parse_elem, Elem, FinPoset,
    IndexedError, IndexedSet, NatTrans, PosetMap, Section,
};
use crate::kernel::{self, Kernel};
use crate::lcc::{
    assoc_map, compose_section, dep_prod, dep_sum, nat_fibration, precompose, pullback,
    section_fibration, split, unsplit, LccError,
};
use crate::subst::apply_subst;
use crate::syntax::{print_expr, Context, Decl, Expr, Signature, Subst};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Clone, Debug, Error)]
pub enum InterpError {
    #[error("kernel: {0}")]
    Kernel(String),
    #[error(transparent)]
    Indexed(#[from] IndexedError),
    #[error(transparent)]
    Lcc(#[from] LccError),
    #[error("model: {0}")]
    Model(String),
    #[error("model file: {0}")]
    File(String),
}

/// A model: a finite poset, one indexed set per type constant (over the
/// category of elements of the interpreted argument context), and one
/// section per term constant (of the interpreted declared type).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub base: FinPoset,
    pub type_interp: BTreeMap<String, IndexedSet>,
    pub term_interp: BTreeMap<String, Section>,
}

/// On-disk model format. Fibers are keyed by the canonical printing of the
/// elements of the relevant category of elements; transports by
/// `"e1<=e2"`; constants by base poset element. All data is explicit;
/// nothing except reflexive transports and the closure of the order
/// relation is inferred.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub poset: PosetFile,
    #[serde(default)]
    pub types: BTreeMap<String, TypeInterpFile>,
    #[serde(default)]
    pub consts: BTreeMap<String, BTreeMap<String, String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosetFile {
    pub elems: Vec<String>,
    #[serde(default)]
    pub leq: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypeInterpFile {
    pub fibers: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub maps: BTreeMap<String, BTreeMap<String, String>>,
}

/// Interpreter handle for one signature and model. Interpretation is a
/// pure function of its inputs; the caches only avoid recomputing the
/// context and type denotations the recursion revisits at every node.
pub struct Interp<'a> {
    pub sig: &'a Signature,
    pub model: &'a Model,
    ctx_cache: RefCell<BTreeMap<Context, IndexedSet>>,
    ty_cache: RefCell<BTreeMap<(Context, Expr), IndexedSet>>,
    term_cache: RefCell<BTreeMap<(Context, Expr), Section>>,
}

impl<'a> Interp<'a> {
    pub fn new(sig: &'a Signature, model: &'a Model) -> Self {
        Interp {
            sig,
            model,
            ctx_cache: RefCell::new(BTreeMap::new()),
            ty_cache: RefCell::new(BTreeMap::new()),
            term_cache: RefCell::new(BTreeMap::new()),
        }
    }

    fn kernel(&self) -> Kernel<'a> {
        Kernel::new(self.sig)
    }

    fn fresh(&self, ctx: &Context) -> String {
        format!("%i{}", ctx.len())
    }

    /// Interpret a context as an indexed set over the model's poset.
    pub fn context(&self, ctx: &Context) -> Result<IndexedSet, InterpError> {
        if let Some(hit) = self.ctx_cache.borrow().get(ctx) {
            return Ok(hit.clone());
        }
        let mut acc = one_point(&self.model.base);
        for i in 0..ctx.decls.len() {
            let prefix = Context {
                decls: ctx.decls[..i].to_vec(),
            };
            let s_is = self.ty(&prefix, &ctx.decls[i].1)?;
            acc = grot_pair(&acc, &s_is)?.0;
        }
        self.ctx_cache
            .borrow_mut()
            .insert(ctx.clone(), acc.clone());
        Ok(acc)
    }

    /// Interpret a substitution `src -> dst` as a natural transformation
    /// from the interpreted target to the interpreted source context.
    pub fn subst(
        &self,
        src: &Context,
        dst: &Context,
        gamma: &Subst,
    ) -> Result<NatTrans, InterpError> {
        let dst_is = self.context(dst)?;
        let src_is = self.context(src)?;
        let mut sections = Vec::new();
        for i in 0..gamma.assigns.len() {
            // The i-th term must be seen at the substituted type of the
            // i-th source variable (pairs need the expected type).
            let prefix = Subst {
                assigns: gamma.assigns[..i].to_vec(),
            };
            let expected = apply_subst(&prefix, &src.decls[i].1)
                .map_err(|e| InterpError::Kernel(e.to_string()))?;
            sections.push(self.term_at(dst, &gamma.assigns[i].1, &expected)?);
        }
        let component: BTreeMap<Elem, BTreeMap<Elem, Elem>> = self
            .model
            .base
            .elems()
            .iter()
            .map(|p| {
                let m: BTreeMap<Elem, Elem> = dst_is
                    .fiber(p)
                    .iter()
                    .map(|alpha| {
                        let point = Elem::pair(p.clone(), alpha.clone());
                        let items: Vec<Elem> =
                            sections.iter().map(|s| s.at(&point).clone()).collect();
                        (alpha.clone(), Elem::tuple(&items))
                    })
                    .collect();
                (p.clone(), m)
            })
            .collect();
        Ok(NatTrans::new(dst_is, src_is, component)?)
    }

    /// Interpret a well-formed type as an indexed set over the category of
    /// elements of the interpreted context.
    pub fn ty(&self, ctx: &Context, s: &Expr) -> Result<IndexedSet, InterpError> {
        let key = (ctx.clone(), s.clone());
        if let Some(hit) = self.ty_cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let out = self.ty_uncached(ctx, s)?;
        self.ty_cache.borrow_mut().insert(key, out.clone());
        Ok(out)
    }

    fn ty_uncached(&self, ctx: &Context, s: &Expr) -> Result<IndexedSet, InterpError> {
        match s {
            Expr::Unit => {
                let ctx_is = self.context(ctx)?;
                Ok(one_point(&grothendieck(&ctx_is)))
            }
            Expr::TypeApp { head, args } => {
                let arg_ctx = self.sig.type_decl(head).ok_or_else(|| {
                    InterpError::Kernel(format!("unbound type constant `{}`", head))
                })?;
                let a_interp = self.model.type_interp.get(head).ok_or_else(|| {
                    InterpError::Model(format!("model does not interpret `{}`", head))
                })?;
                let gamma_nat = self.subst(arg_ctx, ctx, args)?;
                Ok(precompose(&nat_fibration(&gamma_nat), a_interp)?)
            }
            Expr::Id(a, b) => {
                let sa = self.term(ctx, a)?;
                let sb = self.term(ctx, b)?;
                let base = grothendieck(&self.context(ctx)?);
                let fiber: BTreeMap<Elem, BTreeSet<Elem>> = base
                    .elems()
                    .iter()
                    .map(|x| {
                        let f: BTreeSet<Elem> = if sa.at(x) == sb.at(x) {
                            [Elem::Unit].into_iter().collect()
                        } else {
                            BTreeSet::new()
                        };
                        (x.clone(), f)
                    })
                    .collect();
                let transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = base
                    .pairs()
                    .iter()
                    .map(|(x, y)| {
                        let m: BTreeMap<Elem, Elem> = if !fiber[x].is_empty() {
                            [(Elem::Unit, Elem::Unit)].into_iter().collect()
                        } else {
                            BTreeMap::new()
                        };
                        ((x.clone(), y.clone()), m)
                    })
                    .collect();
                Ok(IndexedSet::new(base, fiber, transport)?)
            }
            Expr::Sigma { dom, cod } => {
                let b = self.ty(ctx, dom)?;
                let x = self.fresh(ctx);
                let ext = ctx.extended(&x, (**dom).clone());
                let c = self.ty(&ext, &cod.open_with(&x))?;
                Ok(dep_sum(&b, &c)?)
            }
            Expr::Pi { dom, cod } => {
                let a_is = self.context(ctx)?;
                let b = self.ty(ctx, dom)?;
                let x = self.fresh(ctx);
                let ext = ctx.extended(&x, (**dom).clone());
                let c = self.ty(&ext, &cod.open_with(&x))?;
                Ok(dep_prod(&a_is, &b, &c)?)
            }
            other => Err(InterpError::Kernel(format!(
                "`{}` is not a type",
                print_expr(other)
            ))),
        }
    }

    /// Interpret an inferable term as a section of its interpreted type.
    pub fn term(&self, ctx: &Context, t: &Expr) -> Result<Section, InterpError> {
        let key = (ctx.clone(), t.clone());
        if let Some(hit) = self.term_cache.borrow().get(&key) {
            return Ok(hit.clone());
        }
        let out = self.term_uncached(ctx, t)?;
        self.term_cache.borrow_mut().insert(key, out.clone());
        Ok(out)
    }

    fn term_uncached(&self, ctx: &Context, t: &Expr) -> Result<Section, InterpError> {
        match t {
            Expr::Star => {
                let owner = self.ty(ctx, &Expr::Unit)?;
                let choice = owner
                    .base()
                    .elems()
                    .iter()
                    .map(|x| (x.clone(), Elem::Unit))
                    .collect();
                Ok(Section::new(owner, choice)?)
            }
            Expr::FVar(name) => {
                let position = ctx
                    .decls
                    .iter()
                    .position(|(x, _)| x == name)
                    .ok_or_else(|| {
                        InterpError::Kernel(format!("unbound variable `{}`", name))
                    })?;
                let owner = self.ty(ctx, &ctx.decls[position].1.clone())?;
                let peel = ctx.decls.len() - 1 - position;
                let choice = owner
                    .base()
                    .elems()
                    .iter()
                    .map(|x| {
                        let alpha = x.snd().expect("context point");
                        let mut cur = alpha;
                        for _ in 0..peel {
                            cur = cur.fst().expect("context tuple");
                        }
                        (x.clone(), cur.snd().expect("context tuple").clone())
                    })
                    .collect();
                Ok(Section::new(owner, choice)?)
            }
            Expr::Const(c) => {
                let decl_ty = self
                    .sig
                    .term_decl(c)
                    .ok_or_else(|| InterpError::Kernel(format!("unbound constant `{}`", c)))?
                    .clone();
                let sec = self.model.term_interp.get(c).ok_or_else(|| {
                    InterpError::Model(format!("model does not interpret `{}`", c))
                })?;
                let owner = self.ty(ctx, &decl_ty)?;
                let choice = owner
                    .base()
                    .elems()
                    .iter()
                    .map(|x| {
                        let p = x.fst().expect("context point");
                        (
                            x.clone(),
                            sec.at(&Elem::pair(p.clone(), Elem::Unit)).clone(),
                        )
                    })
                    .collect();
                Ok(Section::new(owner, choice)?)
            }
            Expr::Refl(s) => {
                let owner = self.ty(ctx, &Expr::id((**s).clone(), (**s).clone()))?;
                let choice = owner
                    .base()
                    .elems()
                    .iter()
                    .map(|x| (x.clone(), Elem::Unit))
                    .collect();
                Ok(Section::new(owner, choice)?)
            }
            Expr::Pair(_, _) => Err(InterpError::Kernel(
                "pair needs an expected Sigma type (cannot be inferred)".to_string(),
            )),
            Expr::Proj1(u) => {
                if let Expr::Pair(a, _) = &**u {
                    return self.term(ctx, a);
                }
                let su = self.term(ctx, u)?;
                let u_ty = self
                    .kernel()
                    .infer_type(ctx, u)
                    .map_err(|e| InterpError::Kernel(e.to_string()))?;
                match u_ty {
                    Expr::Sigma { dom, .. } => {
                        let owner = self.ty(ctx, &dom)?;
                        let choice = su
                            .choices()
                            .iter()
                            .map(|(x, v)| {
                                (x.clone(), v.fst().expect("sigma value").clone())
                            })
                            .collect();
                        Ok(Section::new(owner, choice)?)
                    }
                    other => Err(InterpError::Kernel(format!(
                        "projection of non-Sigma type `{}`",
                        print_expr(&other)
                    ))),
                }
            }
            Expr::Proj2(u) => {
                if let Expr::Pair(_, b) = &**u {
                    return self.term(ctx, b);
                }
                let su = self.term(ctx, u)?;
                let u_ty = self
                    .kernel()
                    .infer_type(ctx, u)
                    .map_err(|e| InterpError::Kernel(e.to_string()))?;
                match u_ty {
                    Expr::Sigma { cod, .. } => {
                        let snd_ty = cod.instantiate(&Expr::proj1((**u).clone()));
                        let owner = self.ty(ctx, &snd_ty)?;
                        let choice = su
                            .choices()
                            .iter()
                            .map(|(x, v)| {
                                (x.clone(), v.snd().expect("sigma value").clone())
                            })
                            .collect();
                        Ok(Section::new(owner, choice)?)
                    }
                    other => Err(InterpError::Kernel(format!(
                        "projection of non-Sigma type `{}`",
                        print_expr(&other)
                    ))),
                }
            }
            Expr::Lam { dom, body } => {
                let a_is = self.context(ctx)?;
                let b = self.ty(ctx, dom)?;
                let x = self.fresh(ctx);
                let ext = ctx.extended(&x, (**dom).clone());
                let body_sec = self.term(&ext, &body.open_with(&x))?;
                let c = body_sec.owner().clone();
                Ok(split(&a_is, &b, &c, &body_sec)?)
            }
            Expr::App(f, s) => {
                let f_ty = self
                    .kernel()
                    .infer_type(ctx, f)
                    .map_err(|e| InterpError::Kernel(e.to_string()))?;
                let (dom, cod) = match f_ty {
                    Expr::Pi { dom, cod } => (dom, cod),
                    other => {
                        return Err(InterpError::Kernel(format!(
                            "application of non-Pi type `{}`",
                            print_expr(&other)
                        )))
                    }
                };
                let a_is = self.context(ctx)?;
                let b = self.ty(ctx, &dom)?;
                let x = self.fresh(ctx);
                let ext = ctx.extended(&x, (*dom).clone());
                let c = self.ty(&ext, &cod.open_with(&x))?;
                let f_sec = self.term(ctx, f)?;
                let opened = unsplit(&a_is, &b, &c, &f_sec)?;
                let s_sec = self.term_at(ctx, s, &dom)?;
                let fib = section_fibration(&s_sec)?.then(&assoc_map(&b, c.base())?)?;
                Ok(compose_section(&fib, &opened)?)
            }
            Expr::BVar(i) => Err(InterpError::Kernel(format!(
                "dangling bound variable #{}",
                i
            ))),
            other => Err(InterpError::Kernel(format!(
                "`{}` is a type, not a term",
                print_expr(other)
            ))),
        }
    }

    /// Interpret a term in checking mode against an expected type; this is
    /// where annotation-free pairs get their meaning.
    pub fn term_at(&self, ctx: &Context, t: &Expr, ty: &Expr) -> Result<Section, InterpError> {
        match (t, ty) {
            (Expr::Pair(a, b), Expr::Sigma { dom, cod }) => {
                let sa = self.term_at(ctx, a, dom)?;
                let snd_ty = cod.instantiate(a);
                let sb = self.term_at(ctx, b, &snd_ty)?;
                let owner = self.ty(ctx, ty)?;
                let choice = owner
                    .base()
                    .elems()
                    .iter()
                    .map(|x| {
                        (
                            x.clone(),
                            Elem::pair(sa.at(x).clone(), sb.at(x).clone()),
                        )
                    })
                    .collect();
                Ok(Section::new(owner, choice)?)
            }
            _ => {
                let sec = self.term(ctx, t)?;
                let expected = self.ty(ctx, ty)?;
                if sec.owner() == &expected {
                    Ok(sec)
                } else {
                    // Judgmentally equal types must denote equal indexed
                    // sets (that is the soundness claim, tested at scale by
                    // the harness); a mismatch here is a genuine finding.
                    Err(InterpError::Model(format!(
                        "denotation owner differs from the expected type `{}`",
                        print_expr(ty)
                    )))
                }
            }
        }
    }
}

pub fn interp_context(
    model: &Model,
    sig: &Signature,
    ctx: &Context,
) -> Result<IndexedSet, InterpError> {
    Interp::new(sig, model).context(ctx)
}

pub fn interp_subst(
    model: &Model,
    sig: &Signature,
    src: &Context,
    dst: &Context,
    gamma: &Subst,
) -> Result<NatTrans, InterpError> {
    Interp::new(sig, model).subst(src, dst, gamma)
}

pub fn interp_type(
    model: &Model,
    sig: &Signature,
    ctx: &Context,
    s: &Expr,
) -> Result<IndexedSet, InterpError> {
    Interp::new(sig, model).ty(ctx, s)
}

pub fn interp_term(
    model: &Model,
    sig: &Signature,
    ctx: &Context,
    t: &Expr,
) -> Result<Section, InterpError> {
    Interp::new(sig, model).term(ctx, t)
}

pub fn interp_term_at(
    model: &Model,
    sig: &Signature,
    ctx: &Context,
    t: &Expr,
    ty: &Expr,
) -> Result<Section, InterpError> {
    Interp::new(sig, model).term_at(ctx, t, ty)
}

/// Propositions-as-types: a type holds in a model when its interpretation
/// has a section.
pub fn satisfied(
    model: &Model,
    sig: &Signature,
    ctx: &Context,
    s: &Expr,
) -> Result<bool, InterpError> {
    let is = interp_type(model, sig, ctx, s)?;
    Ok(!indexed_elements(&is).is_empty())
}

/// Load and fully validate a model file against a signature: functoriality,
/// naturality of nothing less than every transport, and section
/// compatibility are all checked; nothing is inferred beyond reflexive
/// transports and the closure of the order relation.
pub fn load_model(sig: &Signature, text: &str) -> Result<Model, InterpError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| InterpError::File(e.to_string()))?;
    model_from_file(sig, &file)
}

pub fn model_from_file(sig: &Signature, file: &ModelFile) -> Result<Model, InterpError> {
    let sig_report = kernel::check_signature(sig);
    if !sig_report.accepted() {
        return Err(InterpError::Kernel(format!(
            "signature rejected: {}",
            sig_report.message.unwrap_or_default()
        )));
    }
    let elems: BTreeSet<Elem> = file.poset.elems.iter().map(|s| Elem::atom(s)).collect();
    let gens: Vec<(Elem, Elem)> = file
        .poset
        .leq
        .iter()
        .map(|(a, b)| (Elem::atom(a), Elem::atom(b)))
        .collect();
    let base = FinPoset::from_generators(elems, &gens)?;

    for name in file.types.keys() {
        if sig.type_decl(name).is_none() {
            return Err(InterpError::Model(format!(
                "model interprets unknown type constant `{}`",
                name
            )));
        }
    }
    for name in file.consts.keys() {
        if sig.term_decl(name).is_none() {
            return Err(InterpError::Model(format!(
                "model interprets unknown term constant `{}`",
                name
            )));
        }
    }

    let mut model = Model {
        base: base.clone(),
        type_interp: BTreeMap::new(),
        term_interp: BTreeMap::new(),
    };

    for decl in &sig.decls {
        match decl {
            Decl::Type { name, arg_ctx } => {
                let entry = file.types.get(name).ok_or_else(|| {
                    InterpError::Model(format!("model gives no interpretation for `{}`", name))
                })?;
                let ctx_is = interp_context(&model, sig, arg_ctx)?;
                let expect_base = grothendieck(&ctx_is);
                let mut fiber: BTreeMap<Elem, BTreeSet<Elem>> = BTreeMap::new();
                for (key, atoms) in &entry.fibers {
                    let e = parse_elem(key).map_err(InterpError::File)?;
                    if !expect_base.elems().contains(&e) {
                        return Err(InterpError::Model(format!(
                            "`{}`: fiber keyed by `{}`, which is not an element of the argument-context interpretation",
                            name, key
                        )));
                    }
                    fiber.insert(e, atoms.iter().map(|a| Elem::atom(a)).collect());
                }
                for e in expect_base.elems() {
                    fiber.entry(e.clone()).or_default();
                }
                let mut transport: BTreeMap<(Elem, Elem), BTreeMap<Elem, Elem>> = BTreeMap::new();
                for (key, entries) in &entry.maps {
                    let (lo, hi) = key.split_once("<=").ok_or_else(|| {
                        InterpError::File(format!("transport key `{}` lacks `<=`", key))
                    })?;
                    let lo = parse_elem(lo).map_err(InterpError::File)?;
                    let hi = parse_elem(hi).map_err(InterpError::File)?;
                    let m: BTreeMap<Elem, Elem> = entries
                        .iter()
                        .map(|(a, b)| (parse_elem(a), parse_elem(b)))
                        .map(|(a, b)| Ok((a.map_err(InterpError::File)?, b.map_err(InterpError::File)?)))
                        .collect::<Result<_, InterpError>>()?;
                    transport.insert((lo, hi), m);
                }
                for (x, y) in expect_base.pairs() {
                    if x == y {
                        let idm = fiber
                            .get(x)
                            .map(|f| f.iter().map(|e| (e.clone(), e.clone())).collect())
                            .unwrap_or_default();
                        transport.insert((x.clone(), y.clone()), idm);
                    } else if !transport.contains_key(&(x.clone(), y.clone())) {
                        if fiber.get(x).map(|f| f.is_empty()).unwrap_or(true) {
                            transport.insert((x.clone(), y.clone()), BTreeMap::new());
                        } else {
                            return Err(InterpError::Model(format!(
                                "`{}`: missing transport for {} <= {}",
                                name, x, y
                            )));
                        }
                    }
                }
                let interp = IndexedSet::new(expect_base, fiber, transport)?;
                model.type_interp.insert(name.clone(), interp);
            }
            Decl::Term { name, ty } => {
                let entry = file.consts.get(name).ok_or_else(|| {
                    InterpError::Model(format!("model gives no interpretation for `{}`", name))
                })?;
                let owner = interp_type(&model, sig, &Context::default(), ty)?;
                let mut choice: BTreeMap<Elem, Elem> = BTreeMap::new();
                for (pname, val) in entry {
                    let p = Elem::atom(pname);
                    if !base.elems().contains(&p) {
                        return Err(InterpError::Model(format!(
                            "`{}`: `{}` is not a poset element",
                            name, pname
                        )));
                    }
                    let v = parse_elem(val).map_err(InterpError::File)?;
                    choice.insert(Elem::pair(p, Elem::Unit), v);
                }
                let sec = Section::new(owner, choice)?;
                model.term_interp.insert(name.clone(), sec);
            }
        }
    }
    Ok(model)
}

/// Serialize a model back to the file format.
pub fn save_model(model: &Model, sig: &Signature) -> ModelFile {
    let elems: Vec<String> = model.base.elems().iter().map(|e| e.to_string()).collect();
    let leq: Vec<(String, String)> = model
        .base
        .pairs()
        .iter()
        .filter(|(a, b)| a != b)
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let mut types = BTreeMap::new();
    let mut consts = BTreeMap::new();
    for decl in &sig.decls {
        match decl {
            Decl::Type { name, .. } => {
                if let Some(interp) = model.type_interp.get(name) {
                    let fibers: BTreeMap<String, Vec<String>> = interp
                        .fibers()
                        .iter()
                        .map(|(k, f)| {
                            (
                                k.to_string(),
                                f.iter().map(|e| e.to_string()).collect(),
                            )
                        })
                        .collect();
                    let maps: BTreeMap<String, BTreeMap<String, String>> = interp
                        .transports()
                        .iter()
                        .filter(|((a, b), _)| a != b)
                        .map(|((a, b), m)| {
                            (
                                format!("{}<={}", a, b),
                                m.iter()
                                    .map(|(x, y)| (x.to_string(), y.to_string()))
                                    .collect(),
                            )
                        })
                        .collect();
                    types.insert(name.clone(), TypeInterpFile { fibers, maps });
                }
            }
            Decl::Term { name, .. } => {
                if let Some(sec) = model.term_interp.get(name) {
                    let m: BTreeMap<String, String> = sec
                        .choices()
                        .iter()
                        .map(|(x, v)| {
                            (
                                x.fst().expect("base point").to_string(),
                                v.to_string(),
                            )
                        })
                        .collect();
                    consts.insert(name.clone(), m);
                }
            }
        }
    }
    ModelFile {
        poset: PosetFile { elems, leq },
        types,
        consts,
    }
}

/// What the substitution-theorem check is applied to.
#[derive(Clone, Debug)]
pub enum SubstSubject {
    /// A further substitution `delta` from `delta_src` into the source
    /// context.
    Subst { delta_src: Context, delta: Subst },
    Type(Expr),
    Term(Expr),
}

#[derive(Clone, Debug, Serialize)]
pub struct ClauseResult {
    pub clause: String,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

/// Check the substitution-theorem clauses that apply to the given subject,
/// pointwise and structurally:
///
/// - composition: the interpretation of a composed substitution is the
///   composite of the interpretations;
/// - types: the interpretation of a substituted type is the reindexing of
///   the interpretation along the substitution's fibration;
/// - terms: likewise for term sections;
/// - the auxiliary law: extending a substitution with a fresh variable
///   interprets to the mediating transformation of the pullback square.
pub fn check_substitution_theorem(
    model: &Model,
    sig: &Signature,
    src: &Context,
    dst: &Context,
    gamma: &Subst,
    subject: &SubstSubject,
) -> Result<Vec<ClauseResult>, InterpError> {
    let interp = Interp::new(sig, model);
    let gamma_nat = interp.subst(src, dst, gamma)?;
    let mut out = Vec::new();
    match subject {
        SubstSubject::Subst { delta_src, delta } => {
            let composed = crate::subst::compose_subst(delta, gamma)
                .map_err(|e| InterpError::Kernel(e.to_string()))?;
            let lhs = interp.subst(delta_src, dst, &composed)?;
            let delta_nat = interp.subst(delta_src, src, delta)?;
            let rhs = gamma_nat.then(&delta_nat)?;
            let mut counterexample = None;
            for (p, m) in lhs.components() {
                for (e, v) in m {
                    let rv = rhs.apply(p, e);
                    if rv != v {
                        counterexample = Some(format!(
                            "at ({},{}): composed gives {}, composite gives {}",
                            p, e, v, rv
                        ));
                        break;
                    }
                }
            }
            out.push(ClauseResult {
                clause: "substitution_composition".to_string(),
                holds: counterexample.is_none() && lhs == rhs,
                counterexample,
            });
        }
        SubstSubject::Type(s) => {
            let substituted = apply_subst(gamma, s)
                .map_err(|e| InterpError::Kernel(e.to_string()))?;
            let lhs = interp.ty(dst, &substituted)?;
            let rhs = precompose(&nat_fibration(&gamma_nat), &interp.ty(src, s)?)?;
            let counterexample = first_indexed_set_difference(&lhs, &rhs);
            out.push(ClauseResult {
                clause: "type_substitution".to_string(),
                holds: counterexample.is_none(),
                counterexample,
            });

            // Auxiliary law: γ, x:=x interprets to the mediating map of the
            // pullback square of ⟦γ⟧ against ⟦S⟧.
            let fresh = format!("%s{}", src.len().max(dst.len()));
            let ext_src = src.extended(&fresh, s.clone());
            let ext_dst = dst.extended(&fresh, substituted.clone());
            let mut ext_gamma = gamma.clone();
            ext_gamma
                .assigns
                .push((fresh.clone(), Expr::FVar(fresh.clone())));
            let lhs_nat = interp.subst(&ext_src, &ext_dst, &ext_gamma)?;
            let lhs_map = nat_fibration(&lhs_nat);
            let s_is = interp.ty(src, s)?;
            let (_, pbf) = pullback(&gamma_nat, &s_is)?;
            let rhs_map = nat_fibration(&pbf);
            let counterexample = if lhs_map.src() != rhs_map.src() {
                Some("domains of the two fibrations differ".to_string())
            } else if lhs_map.dst() != rhs_map.dst() {
                Some("codomains of the two fibrations differ".to_string())
            } else {
                lhs_map
                    .mapping()
                    .iter()
                    .find(|(k, v)| rhs_map.apply(k) != *v)
                    .map(|(k, v)| {
                        format!(
                            "at {}: extension gives {}, mediating map gives {}",
                            k,
                            v,
                            rhs_map.apply(k)
                        )
                    })
            };
            out.push(ClauseResult {
                clause: "substitution_extension_aux".to_string(),
                holds: counterexample.is_none(),
                counterexample,
            });
        }
        SubstSubject::Term(t) => {
            let substituted = apply_subst(gamma, t)
                .map_err(|e| InterpError::Kernel(e.to_string()))?;
            let lhs = interp.term(dst, &substituted)?;
            let rhs = compose_section(
                &nat_fibration(&gamma_nat),
                &interp.term(src, t)?,
            )?;
            let counterexample = lhs
                .choices()
                .iter()
                .find(|(x, v)| rhs.at(x) != *v)
                .map(|(x, v)| {
                    format!(
                        "at {}: substituted term gives {}, composed section gives {}",
                        x,
                        v,
                        rhs.at(x)
                    )
                });
            out.push(ClauseResult {
                clause: "term_substitution".to_string(),
                holds: counterexample.is_none(),
                counterexample,
            });
        }
    }
    Ok(out)
}

fn first_indexed_set_difference(lhs: &IndexedSet, rhs: &IndexedSet) -> Option<String> {
    if lhs.base() != rhs.base() {
        return Some("bases differ".to_string());
    }
    for (x, f) in lhs.fibers() {
        if rhs.fiber(x) != f {
            return Some(format!(
                "fibers at {} differ: {:?} vs {:?}",
                x,
                f.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                rhs.fiber(x).iter().map(|e| e.to_string()).collect::<Vec<_>>()
            ));
        }
    }
    for ((x, y), m) in lhs.transports() {
        let rm = &rhs.transports()[&(x.clone(), y.clone())];
        if m != rm {
            return Some(format!("transports at {} <= {} differ", x, y));
        }
    }
    if lhs != rhs {
        return Some("indexed sets differ".to_string());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_context, parse_expr_in, parse_theory};

    const CD_SRC: &str = "theory T { type b() const c : b() const d : b() }";

    const CD_MODEL: &str = r#"{
        "poset": {"elems": ["p", "q"], "leq": [["p", "q"]]},
        "types": {"b": {
            "fibers": {"(p,())": ["0", "1"], "(q,())": ["0", "1"]},
            "maps": {"(p,())<=(q,())": {"0": "0", "1": "1"}}
        }},
        "consts": {"c": {"p": "0", "q": "0"}, "d": {"p": "1", "q": "1"}}
    }"#;

    fn cd() -> (Signature, Model) {
        let sig = parse_theory(CD_SRC).unwrap().signature;
        let model = load_model(&sig, CD_MODEL).expect("model loads");
        (sig, model)
    }

    #[test]
    fn minimal_model_loads() {
        let sig = parse_theory("theory T { type b() }").unwrap().signature;
        let text = r#"{
            "poset": {"elems": ["p"]},
            "types": {"b": {"fibers": {"(p,())": ["0"]}}}
        }"#;
        let model = load_model(&sig, text).expect("loads");
        assert_eq!(model.type_interp["b"].total_elems(), 1);
    }

    #[test]
    fn incompatible_section_is_rejected_with_a_witness() {
        let sig = parse_theory(CD_SRC).unwrap().signature;
        let bad = CD_MODEL.replace(
            r#""d": {"p": "1", "q": "1"}"#,
            r#""d": {"p": "1", "q": "0"}"#,
        );
        match load_model(&sig, &bad) {
            Err(InterpError::Indexed(IndexedError::Section(msg))) => {
                assert!(msg.contains("transport"), "{}", msg);
            }
            other => panic!("expected a section failure, got {:?}", other),
        }
    }

    #[test]
    fn context_interpretation_sizes() {
        let (sig, model) = cd();
        let empty = interp_context(&model, &sig, &Context::default()).unwrap();
        assert_eq!(empty, one_point(&model.base));

        let ctx = parse_context(&sig, "x : b()").unwrap();
        let one_var = interp_context(&model, &sig, &ctx).unwrap();
        for p in model.base.elems() {
            let expected: BTreeSet<Elem> = ["0", "1"]
                .iter()
                .map(|v| Elem::pair(Elem::Unit, Elem::atom(v)))
                .collect();
            assert_eq!(one_var.fiber(p), &expected);
        }

        let ctx2 = parse_context(&sig, "x : b(), y : b()").unwrap();
        let two_vars = interp_context(&model, &sig, &ctx2).unwrap();
        for p in model.base.elems() {
            assert_eq!(two_vars.fiber(p).len(), 4);
        }
    }

    #[test]
    fn subst_interpretation_clauses() {
        let (sig, model) = cd();
        let ctx = parse_context(&sig, "x : b()").unwrap();

        // Empty substitution: unique map to the one-point interpretation.
        let empty_nat = interp_subst(
            &model,
            &sig,
            &Context::default(),
            &ctx,
            &Subst::default(),
        )
        .unwrap();
        for (p, m) in empty_nat.components() {
            for (e, v) in m {
                let _ = (p, e);
                assert_eq!(v, &Elem::Unit);
            }
        }

        // Identity substitution: the identity transformation.
        let idsub = crate::subst::id_subst(&ctx);
        let id_nat = interp_subst(&model, &sig, &ctx, &ctx, &idsub).unwrap();
        assert_eq!(&id_nat, &NatTrans::identity(id_nat.src()));

        // gamma = [x := c] into (x : b): alpha' = () maps to ((), ⟦c⟧_p).
        let gamma = Subst {
            assigns: vec![("x".to_string(), Expr::cnst("c"))],
        };
        let nat = interp_subst(&model, &sig, &ctx, &Context::default(), &gamma).unwrap();
        for p in model.base.elems() {
            let v = nat.apply(p, &Elem::Unit);
            assert_eq!(
                v,
                &Elem::pair(
                    Elem::Unit,
                    model.term_interp["c"]
                        .at(&Elem::pair(p.clone(), Elem::Unit))
                        .clone()
                )
            );
        }
    }

    #[test]
    fn identity_type_is_the_agreement_subsingleton() {
        let (sig, model) = cd();
        let ctx = Context::default();
        let id_cd = parse_expr_in(&sig, &ctx, "Id(c, d)").unwrap();
        let id_cc = parse_expr_in(&sig, &ctx, "Id(c, c)").unwrap();
        let cd_is = interp_type(&model, &sig, &ctx, &id_cd).unwrap();
        let cc_is = interp_type(&model, &sig, &ctx, &id_cc).unwrap();
        for x in cd_is.base().elems() {
            assert!(cd_is.fiber(x).is_empty());
            assert_eq!(cc_is.fiber(x).len(), 1);
        }
        assert!(!satisfied(&model, &sig, &ctx, &id_cd).unwrap());
        assert!(satisfied(&model, &sig, &ctx, &id_cc).unwrap());
    }

    #[test]
    fn unit_interpretation_is_one_point() {
        let (sig, model) = cd();
        let ctx = parse_context(&sig, "x : b()").unwrap();
        let u = interp_type(&model, &sig, &ctx, &Expr::Unit).unwrap();
        let ctx_is = interp_context(&model, &sig, &ctx).unwrap();
        assert_eq!(u, one_point(&grothendieck(&ctx_is)));
    }

    #[test]
    fn pi_over_a_point_has_the_function_space_fiber() {
        let sig = parse_theory("theory T { type b() }").unwrap().signature;
        let text = r#"{
            "poset": {"elems": ["p"]},
            "types": {"b": {"fibers": {"(p,())": ["0", "1"]}}}
        }"#;
        let model = load_model(&sig, text).unwrap();
        let ctx = Context::default();
        let ty = parse_expr_in(&sig, &ctx, "Pi x : b() . b()").unwrap();
        let is = interp_type(&model, &sig, &ctx, &ty).unwrap();
        let x = Elem::pair(Elem::atom("p"), Elem::Unit);
        assert_eq!(is.fiber(&x).len(), 4);
    }

    #[test]
    fn star_and_beta_soundness_instances() {
        let (sig, model) = cd();
        let ctx = Context::default();
        let star_sec = interp_term(&model, &sig, &ctx, &Expr::Star).unwrap();
        for v in star_sec.choices().values() {
            assert_eq!(v, &Elem::Unit);
        }

        let lhs = parse_expr_in(&sig, &ctx, "(fun x : b() => x) c").unwrap();
        let rhs = parse_expr_in(&sig, &ctx, "c").unwrap();
        let lhs_sec = interp_term(&model, &sig, &ctx, &lhs).unwrap();
        let rhs_sec = interp_term(&model, &sig, &ctx, &rhs).unwrap();
        assert_eq!(lhs_sec.choices(), rhs_sec.choices());
    }

    #[test]
    fn projections_of_pairs_are_componentwise() {
        let (sig, model) = cd();
        let ctx = Context::default();
        let t = parse_expr_in(&sig, &ctx, "proj1 pair(c, d)").unwrap();
        let sec = interp_term(&model, &sig, &ctx, &t).unwrap();
        let c_sec = interp_term(&model, &sig, &ctx, &Expr::cnst("c")).unwrap();
        assert_eq!(sec, c_sec);
    }

    #[test]
    fn lambda_owner_is_the_dependent_product_of_the_inferred_type() {
        let (sig, model) = cd();
        let ctx = Context::default();
        let t = parse_expr_in(&sig, &ctx, "fun x : b() => x").unwrap();
        let sec = interp_term(&model, &sig, &ctx, &t).unwrap();
        let kernel = Kernel::new(&sig);
        let ty = kernel.infer_type(&ctx, &t).unwrap();
        let expected = interp_type(&model, &sig, &ctx, &ty).unwrap();
        assert_eq!(sec.owner(), &expected);
    }

    #[test]
    fn substitution_theorem_clauses_on_identity_are_reflexive() {
        let (sig, model) = cd();
        let ctx = parse_context(&sig, "x : b()").unwrap();
        let gamma = crate::subst::id_subst(&ctx);
        let s = parse_expr_in(&sig, &ctx, "Id(x, c)").unwrap();
        let results = check_substitution_theorem(
            &model,
            &sig,
            &ctx,
            &ctx,
            &gamma,
            &SubstSubject::Type(s),
        )
        .unwrap();
        for r in &results {
            assert!(r.holds, "{}: {:?}", r.clause, r.counterexample);
        }
    }

    #[test]
    fn substitution_theorem_on_a_real_instance() {
        let (sig, model) = cd();
        let src = parse_context(&sig, "x : b()").unwrap();
        let dst = Context::default();
        let gamma = Subst {
            assigns: vec![("x".to_string(), Expr::cnst("c"))],
        };
        let s = parse_expr_in(&sig, &src, "Id(x, c)").unwrap();
        let results = check_substitution_theorem(
            &model,
            &sig,
            &src,
            &dst,
            &gamma,
            &SubstSubject::Type(s),
        )
        .unwrap();
        for r in &results {
            assert!(r.holds, "{}: {:?}", r.clause, r.counterexample);
        }

        let t = parse_expr_in(&sig, &src, "x").unwrap();
        let results = check_substitution_theorem(
            &model,
            &sig,
            &src,
            &dst,
            &gamma,
            &SubstSubject::Term(t),
        )
        .unwrap();
        for r in &results {
            assert!(r.holds, "{}: {:?}", r.clause, r.counterexample);
        }

        let delta = Subst {
            assigns: vec![("y".to_string(), Expr::fvar("x"))],
        };
        let delta_src = parse_context(&sig, "y : b()").unwrap();
        let results = check_substitution_theorem(
            &model,
            &sig,
            &src,
            &dst,
            &gamma,
            &SubstSubject::Subst { delta_src, delta },
        )
        .unwrap();
        for r in &results {
            assert!(r.holds, "{}: {:?}", r.clause, r.counterexample);
        }
    }

    #[test]
    fn save_and_reload_roundtrip() {
        let (sig, model) = cd();
        let file = save_model(&model, &sig);
        let text = serde_json::to_string(&file).unwrap();
        let back = load_model(&sig, &text).expect("reloads");
        assert_eq!(back, model);
    }
}
