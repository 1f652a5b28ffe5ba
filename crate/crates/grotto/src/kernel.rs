//! The proof kernel: deciding (a sound approximation of) the seven
//! judgments of the theory — signature, context, and substitution
//! well-formedness, type well-formedness, term typing, and term/type
//! equality.
//!
//! Judgmental equality in the extensional theory is undecidable (the
//! reflection rule turns any inhabitant of `Id(s, s')` into an equation), so
//! the equality checker is deliberately incomplete: it combines beta/pi
//! normalization, type-directed eta/unit/identity-uniqueness rules, explicit
//! user hints, and user-designated rewrite axioms. The verdict
//! `undetermined` (fuel ran out, or a hint might be missing) is distinct
//! from `rejected`.

use crate::subst::{apply_subst, SubstError};
use crate::syntax::{
    parse_context, parse_expr_in, parse_subst, print_context, print_expr, print_subst, Context,
    Decl, Expr, Goal, Signature, Subst,
};
use serde::Serialize;
use std::fmt;

/// Default normalization budget (reduction steps per normalization run).
pub const DEFAULT_FUEL: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
    Undetermined,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accepted => write!(f, "accepted"),
            Verdict::Rejected => write!(f, "rejected"),
            Verdict::Undetermined => write!(f, "undetermined"),
        }
    }
}

/// Which of the seven judgments a report is about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentKind {
    Signature,
    Context,
    Substitution,
    TypeWf,
    TermTyping,
    TypeEq,
    TermEq,
    Inhabited,
}

/// Outcome of a judgment check. The trace lists the rules applied, in the
/// order the checker fired them; accepted reports replay: re-running the
/// same judgment reproduces the identical trace.
#[derive(Clone, Debug, Serialize)]
pub struct JudgmentReport {
    pub kind: JudgmentKind,
    pub subjects: Vec<String>,
    pub verdict: Verdict,
    pub trace: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl JudgmentReport {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

impl fmt::Display for JudgmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} [{}]", self.kind, self.verdict)?;
        if !self.subjects.is_empty() {
            write!(f, " {}", self.subjects.join(" ; "))?;
        }
        if let Some(m) = &self.message {
            write!(f, " — {}", m)?;
        }
        Ok(())
    }
}

/// Error type for operations returning values (inference, normalization).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelError {
    pub undetermined: bool,
    pub msg: String,
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for KernelError {}

/// Result of normalization; `exhausted` marks fuel running out with redexes
/// remaining (an undetermined, never a rejected, outcome).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Normalized {
    pub expr: Expr,
    pub exhausted: bool,
}

#[derive(Clone, Debug)]
enum Fail {
    Rejected(String),
    Undetermined(String),
}

type JResult<T> = Result<T, Fail>;

/// A rewrite-marked axiom `name : Pi x1:S1. … Pi xn:Sn. Id(l, r)` oriented
/// left to right. `lhs`/`rhs` are stored under `n_binders` binders; their
/// dangling indices are the pattern variables.
#[derive(Clone, Debug)]
struct RewriteRule {
    name: String,
    n_binders: usize,
    lhs: Expr,
    rhs: Expr,
}

/// Kernel handle: a signature plus configuration.
pub struct Kernel<'a> {
    sig: &'a Signature,
    pub fuel: u64,
    rules: Vec<RewriteRule>,
}

impl<'a> Kernel<'a> {
    pub fn new(sig: &'a Signature) -> Self {
        Kernel::with_fuel(sig, DEFAULT_FUEL)
    }

    pub fn with_fuel(sig: &'a Signature, fuel: u64) -> Self {
        // Invalid marks are diagnosed by check_signature; here they are
        // simply not compiled.
        let rules = sig
            .rewrites
            .iter()
            .filter_map(|name| {
                sig.term_decl(name)
                    .and_then(|ty| compile_rewrite(name, ty).ok())
            })
            .collect();
        Kernel { sig, fuel, rules }
    }

    fn ck(&self) -> Ck<'_> {
        Ck {
            sig: self.sig,
            visible: self.sig.decls.len(),
            rules: &self.rules,
            trace: Vec::new(),
            fresh: 0,
            fuel: self.fuel,
        }
    }

    fn report(
        &self,
        kind: JudgmentKind,
        subjects: Vec<String>,
        run: impl FnOnce(&mut Ck<'_>) -> JResult<()>,
    ) -> JudgmentReport {
        let mut ck = self.ck();
        let (verdict, message) = match run(&mut ck) {
            Ok(()) => (Verdict::Accepted, None),
            Err(Fail::Rejected(m)) => (Verdict::Rejected, Some(m)),
            Err(Fail::Undetermined(m)) => (Verdict::Undetermined, Some(m)),
        };
        JudgmentReport {
            kind,
            subjects,
            verdict,
            trace: ck.trace,
            message,
        }
    }

    pub fn check_signature(&self) -> JudgmentReport {
        self.report(JudgmentKind::Signature, vec![], |ck| ck.ck_signature())
    }

    pub fn check_context(&self, ctx: &Context) -> JudgmentReport {
        self.report(
            JudgmentKind::Context,
            vec![print_context(ctx)],
            |ck| ck.ck_context(ctx),
        )
    }

    pub fn check_subst(
        &self,
        src: &Context,
        dst: &Context,
        gamma: &Subst,
    ) -> JudgmentReport {
        self.report(
            JudgmentKind::Substitution,
            vec![print_context(src), print_context(dst), print_subst(gamma)],
            |ck| ck.ck_subst(src, dst, gamma),
        )
    }

    pub fn check_type_wf(&self, ctx: &Context, ty: &Expr) -> JudgmentReport {
        self.report(
            JudgmentKind::TypeWf,
            vec![print_context(ctx), print_expr(ty)],
            |ck| ck.ck_type(ctx, ty),
        )
    }

    pub fn infer_type(&self, ctx: &Context, t: &Expr) -> Result<Expr, KernelError> {
        let mut ck = self.ck();
        ck.infer(ctx, t).map_err(|f| match f {
            Fail::Rejected(msg) => KernelError {
                undetermined: false,
                msg,
            },
            Fail::Undetermined(msg) => KernelError {
                undetermined: true,
                msg,
            },
        })
    }

    /// Inference wrapped as a report (subjects gain the inferred type on
    /// acceptance).
    pub fn infer_report(&self, ctx: &Context, t: &Expr) -> JudgmentReport {
        let mut ck = self.ck();
        let (verdict, message, ty) = match ck.infer(ctx, t) {
            Ok(ty) => (Verdict::Accepted, None, Some(ty)),
            Err(Fail::Rejected(m)) => (Verdict::Rejected, Some(m), None),
            Err(Fail::Undetermined(m)) => (Verdict::Undetermined, Some(m), None),
        };
        let mut subjects = vec![print_context(ctx), print_expr(t)];
        if let Some(ty) = ty {
            subjects.push(print_expr(&ty));
        }
        JudgmentReport {
            kind: JudgmentKind::TermTyping,
            subjects,
            verdict,
            trace: ck.trace,
            message,
        }
    }

    pub fn check_term(&self, ctx: &Context, t: &Expr, ty: &Expr) -> JudgmentReport {
        self.report(
            JudgmentKind::TermTyping,
            vec![print_context(ctx), print_expr(t), print_expr(ty)],
            |ck| ck.ck_term(ctx, t, ty),
        )
    }

    pub fn equal_terms(
        &self,
        ctx: &Context,
        s: &Expr,
        s2: &Expr,
        hint: Option<&Expr>,
    ) -> JudgmentReport {
        let mut subjects = vec![print_context(ctx), print_expr(s), print_expr(s2)];
        if let Some(h) = hint {
            subjects.push(print_expr(h));
        }
        self.report(JudgmentKind::TermEq, subjects, |ck| {
            ck.eq_terms(ctx, s, s2, hint)
        })
    }

    pub fn equal_types(&self, ctx: &Context, s: &Expr, s2: &Expr) -> JudgmentReport {
        self.report(
            JudgmentKind::TypeEq,
            vec![print_context(ctx), print_expr(s), print_expr(s2)],
            |ck| ck.eq_types(ctx, s, s2),
        )
    }

    /// Contract beta/pi redexes and rewrite-marked equations,
    /// outermost-first, until no redex remains or fuel runs out.
    pub fn normalize(&self, _ctx: &Context, e: &Expr, fuel: u64) -> Normalized {
        let mut ck = self.ck();
        let mut budget = fuel;
        let (expr, exhausted) = ck.norm(e, &mut budget);
        Normalized { expr, exhausted }
    }

    pub fn run_goal(&self, goal: &Goal) -> JudgmentReport {
        match goal {
            Goal::CheckType { ctx, ty } => self.check_type_wf(ctx, ty),
            Goal::Infer { ctx, term } => self.infer_report(ctx, term),
            Goal::CheckEqual {
                ctx,
                lhs,
                rhs,
                hint,
            } => {
                // Establish the precondition: both sides typed at a common
                // type.
                let mut ck = self.ck();
                let pre = ck
                    .infer(ctx, lhs)
                    .and_then(|ty| ck.ck_term(ctx, rhs, &ty));
                if let Err(f) = pre {
                    let (verdict, message) = fail_parts(f);
                    return JudgmentReport {
                        kind: JudgmentKind::TermEq,
                        subjects: vec![print_context(ctx), print_expr(lhs), print_expr(rhs)],
                        verdict,
                        trace: ck.trace,
                        message: message
                            .map(|m| format!("sides are not well-typed at a common type: {}", m)),
                    };
                }
                self.equal_terms(ctx, lhs, rhs, hint.as_ref())
            }
            Goal::CheckInhabited { ctx, ty, witness } => {
                let mut subjects =
                    vec![print_context(ctx), print_expr(ty), print_expr(witness)];
                subjects.rotate_left(0);
                self.report(JudgmentKind::Inhabited, subjects, |ck| {
                    ck.ck_type(ctx, ty)?;
                    ck.ck_term(ctx, witness, ty)
                })
            }
        }
    }

    pub fn run_goals(&self, goals: &[Goal]) -> Vec<JudgmentReport> {
        goals.iter().map(|g| self.run_goal(g)).collect()
    }
}

fn fail_parts(f: Fail) -> (Verdict, Option<String>) {
    match f {
        Fail::Rejected(m) => (Verdict::Rejected, Some(m)),
        Fail::Undetermined(m) => (Verdict::Undetermined, Some(m)),
    }
}

// Free-function forms of the kernel operations.

pub fn check_signature(sig: &Signature) -> JudgmentReport {
    Kernel::new(sig).check_signature()
}

pub fn check_context(sig: &Signature, ctx: &Context) -> JudgmentReport {
    Kernel::new(sig).check_context(ctx)
}

pub fn check_subst(
    sig: &Signature,
    src: &Context,
    dst: &Context,
    gamma: &Subst,
) -> JudgmentReport {
    Kernel::new(sig).check_subst(src, dst, gamma)
}

pub fn check_type_wf(sig: &Signature, ctx: &Context, ty: &Expr) -> JudgmentReport {
    Kernel::new(sig).check_type_wf(ctx, ty)
}

pub fn infer_type(sig: &Signature, ctx: &Context, t: &Expr) -> Result<Expr, KernelError> {
    Kernel::new(sig).infer_type(ctx, t)
}

pub fn check_term(sig: &Signature, ctx: &Context, t: &Expr, ty: &Expr) -> JudgmentReport {
    Kernel::new(sig).check_term(ctx, t, ty)
}

pub fn equal_terms(
    sig: &Signature,
    ctx: &Context,
    s: &Expr,
    s2: &Expr,
    hint: Option<&Expr>,
) -> JudgmentReport {
    Kernel::new(sig).equal_terms(ctx, s, s2, hint)
}

pub fn equal_types(sig: &Signature, ctx: &Context, s: &Expr, s2: &Expr) -> JudgmentReport {
    Kernel::new(sig).equal_types(ctx, s, s2)
}

pub fn normalize(sig: &Signature, ctx: &Context, e: &Expr, fuel: u64) -> Normalized {
    Kernel::new(sig).normalize(ctx, e, fuel)
}

/// Re-run an accepted report's judgment from its printed subjects and
/// require the identical verdict and trace. This is the derivation-replay
/// check: the checker is deterministic, so a replayed accepted judgment
/// reproduces its rule applications step for step.
pub fn replay_report(sig: &Signature, report: &JudgmentReport) -> Result<bool, String> {
    let kernel = Kernel::new(sig);
    let rerun = match report.kind {
        JudgmentKind::Signature => kernel.check_signature(),
        JudgmentKind::Context => {
            let ctx = parse_context(sig, &report.subjects[0]).map_err(|e| e.to_string())?;
            kernel.check_context(&ctx)
        }
        JudgmentKind::Substitution => {
            let src = parse_context(sig, &report.subjects[0]).map_err(|e| e.to_string())?;
            let dst = parse_context(sig, &report.subjects[1]).map_err(|e| e.to_string())?;
            let gamma =
                parse_subst(sig, &dst, &report.subjects[2]).map_err(|e| e.to_string())?;
            kernel.check_subst(&src, &dst, &gamma)
        }
        JudgmentKind::TypeWf => {
            let ctx = parse_context(sig, &report.subjects[0]).map_err(|e| e.to_string())?;
            let ty = parse_expr_in(sig, &ctx, &report.subjects[1]).map_err(|e| e.to_string())?;
            kernel.check_type_wf(&ctx, &ty)
        }
        JudgmentKind::TermTyping => {
            let ctx = parse_context(sig, &report.subjects[0]).map_err(|e| e.to_string())?;
            let t = parse_expr_in(sig, &ctx, &report.subjects[1]).map_err(|e| e.to_string())?;
            if report.subjects.len() >= 3 {
                let ty =
                    parse_expr_in(sig, &ctx, &report.subjects[2]).map_err(|e| e.to_string())?;
                // Either a checking report or an inference report that
                // recorded its result; inference replay must re-derive the
                // same type.
                let inferred = kernel.infer_report(&ctx, &t);
                if inferred.accepted()
                    && inferred.subjects.get(2) == Some(&report.subjects[2])
                    && inferred.trace == report.trace
                {
                    return Ok(true);
                }
                kernel.check_term(&ctx, &t, &ty)
            } else {
                kernel.infer_report(&ctx, &t)
            }
        }
        JudgmentKind::TypeEq => {
            let ctx = parse_context(sig, &report.subjects[0]).map_err(|e| e.to_string())?;
            let a = parse_expr_in(sig, &ctx, &report.subjects[1]).map_err(|e| e.to_string())?;
            let b = parse_expr_in(sig, &ctx, &report.subjects[2]).map_err(|e| e.to_string())?;
            kernel.equal_types(&ctx, &a, &b)
        }
        JudgmentKind::TermEq => {
            let ctx = parse_context(sig, &report.subjects[0]).map_err(|e| e.to_string())?;
            let a = parse_expr_in(sig, &ctx, &report.subjects[1]).map_err(|e| e.to_string())?;
            let b = parse_expr_in(sig, &ctx, &report.subjects[2]).map_err(|e| e.to_string())?;
            let hint = if report.subjects.len() > 3 {
                Some(parse_expr_in(sig, &ctx, &report.subjects[3]).map_err(|e| e.to_string())?)
            } else {
                None
            };
            kernel.equal_terms(&ctx, &a, &b, hint.as_ref())
        }
        JudgmentKind::Inhabited => {
            let ctx = parse_context(sig, &report.subjects[0]).map_err(|e| e.to_string())?;
            let ty = parse_expr_in(sig, &ctx, &report.subjects[1]).map_err(|e| e.to_string())?;
            let w = parse_expr_in(sig, &ctx, &report.subjects[2]).map_err(|e| e.to_string())?;
            let kernel = Kernel::new(sig);
            let mut subjects = vec![
                print_context(&ctx),
                print_expr(&ty),
                print_expr(&w),
            ];
            subjects.truncate(3);
            kernel.report(JudgmentKind::Inhabited, subjects, |ck| {
                ck.ck_type(&ctx, &ty)?;
                ck.ck_term(&ctx, &w, &ty)
            })
        }
    };
    Ok(rerun.verdict == report.verdict && rerun.trace == report.trace)
}

/// Internal checker state for one judgment run.
struct Ck<'a> {
    sig: &'a Signature,
    /// How many leading declarations of the signature are in scope (the
    /// signature rules check each declaration against its prefix).
    visible: usize,
    rules: &'a [RewriteRule],
    trace: Vec<String>,
    fresh: usize,
    fuel: u64,
}

impl<'a> Ck<'a> {
    fn tr(&mut self, rule: &str) {
        self.trace.push(rule.to_string());
    }

    fn fresh_var(&mut self) -> String {
        let v = format!("%{}", self.fresh);
        self.fresh += 1;
        v
    }

    fn lookup_type_decl(&self, name: &str) -> Option<&'a Context> {
        self.sig.decls[..self.visible.min(self.sig.decls.len())]
            .iter()
            .find_map(|d| match d {
                Decl::Type { name: n, arg_ctx } if n == name => Some(arg_ctx),
                _ => None,
            })
    }

    fn lookup_term_decl(&self, name: &str) -> Option<&'a Expr> {
        self.sig.decls[..self.visible.min(self.sig.decls.len())]
            .iter()
            .find_map(|d| match d {
                Decl::Term { name: n, ty } if n == name => Some(ty),
                _ => None,
            })
    }

    fn subst_err(e: SubstError) -> Fail {
        Fail::Rejected(e.to_string())
    }

    // --- signatures, contexts, substitutions ---

    fn ck_signature(&mut self) -> JResult<()> {
        self.tr("sig_nil");
        for i in 0..self.sig.decls.len() {
            self.visible = i;
            let d = &self.sig.decls[i];
            let name = Signature::decl_name(d);
            if self.lookup_type_decl(name).is_some() || self.lookup_term_decl(name).is_some() {
                return Err(Fail::Rejected(format!(
                    "duplicate declaration `{}` (declaration {})",
                    name,
                    i + 1
                )));
            }
            match d {
                Decl::Term { ty, .. } => {
                    self.tr("sig_const");
                    self.ck_type(&Context::default(), ty).map_err(|f| {
                        prefix_fail(f, &format!("in declaration of `{}`", name))
                    })?;
                }
                Decl::Type { arg_ctx, .. } => {
                    self.tr("sig_type");
                    self.ck_context(arg_ctx).map_err(|f| {
                        prefix_fail(f, &format!("in declaration of `{}`", name))
                    })?;
                }
            }
        }
        self.visible = self.sig.decls.len();
        // Rewrite marks: each must orient a closed identity axiom.
        for name in &self.sig.rewrites {
            match self.lookup_term_decl(name) {
                None => {
                    return Err(Fail::Rejected(format!(
                        "`rewrite {}` does not name a term constant",
                        name
                    )))
                }
                Some(ty) => {
                    compile_rewrite(name, ty).map_err(Fail::Rejected)?;
                }
            }
        }
        Ok(())
    }

    fn ck_context(&mut self, ctx: &Context) -> JResult<()> {
        self.tr("ctx_nil");
        for i in 0..ctx.decls.len() {
            let (x, ty) = &ctx.decls[i];
            if ctx.decls[..i].iter().any(|(y, _)| y == x) {
                return Err(Fail::Rejected(format!(
                    "duplicate variable `{}` in context",
                    x
                )));
            }
            self.tr("ctx_var");
            let prefix = Context {
                decls: ctx.decls[..i].to_vec(),
            };
            self.ck_type(&prefix, ty)
                .map_err(|f| prefix_fail(f, &format!("in the type of `{}`", x)))?;
        }
        Ok(())
    }

    fn ck_subst(&mut self, src: &Context, dst: &Context, gamma: &Subst) -> JResult<()> {
        if gamma.assigns.len() != src.decls.len() {
            return Err(Fail::Rejected(format!(
                "substitution has {} assignment(s) but the source context declares {}",
                gamma.assigns.len(),
                src.decls.len()
            )));
        }
        self.tr("subst_nil");
        for i in 0..src.decls.len() {
            let (x, ty) = &src.decls[i];
            let (y, term) = &gamma.assigns[i];
            if x != y {
                return Err(Fail::Rejected(format!(
                    "substitution assigns `{}` where the source context declares `{}`",
                    y, x
                )));
            }
            self.tr("subst_cons");
            let prefix = Subst {
                assigns: gamma.assigns[..i].to_vec(),
            };
            let expected = apply_subst(&prefix, ty).map_err(Ck::subst_err)?;
            self.ck_term(dst, term, &expected)
                .map_err(|f| prefix_fail(f, &format!("in the assignment for `{}`", x)))?;
        }
        Ok(())
    }

    // --- types ---

    fn ck_type(&mut self, ctx: &Context, ty: &Expr) -> JResult<()> {
        match ty {
            Expr::TypeApp { head, args } => {
                self.tr("ty_app");
                let arg_ctx = self
                    .lookup_type_decl(head)
                    .ok_or_else(|| Fail::Rejected(format!("unbound type constant `{}`", head)))?;
                let arg_ctx = arg_ctx.clone();
                self.ck_subst(&arg_ctx, ctx, args)
            }
            Expr::Unit => {
                self.tr("ty_unit");
                Ok(())
            }
            Expr::Id(a, b) => {
                self.tr("ty_id");
                let sa = self.infer(ctx, a)?;
                let sb = self.infer(ctx, b)?;
                self.eq_types(ctx, &sa, &sb).map_err(|f| {
                    prefix_fail(
                        f,
                        "the two sides of the identity type have unequal types",
                    )
                })
            }
            Expr::Sigma { dom, cod } => {
                self.tr("ty_sigma");
                self.ck_type(ctx, dom)?;
                let x = self.fresh_var();
                let ext = ctx.extended(&x, (**dom).clone());
                self.ck_type(&ext, &cod.open_with(&x))
            }
            Expr::Pi { dom, cod } => {
                self.tr("ty_pi");
                self.ck_type(ctx, dom)?;
                let x = self.fresh_var();
                let ext = ctx.extended(&x, (**dom).clone());
                self.ck_type(&ext, &cod.open_with(&x))
            }
            other => Err(Fail::Rejected(format!(
                "`{}` is a term, not a type",
                print_expr(other)
            ))),
        }
    }

    // --- terms ---

    fn infer(&mut self, ctx: &Context, t: &Expr) -> JResult<Expr> {
        match t {
            Expr::Const(c) => {
                self.tr("tm_const");
                self.lookup_term_decl(c)
                    .cloned()
                    .ok_or_else(|| Fail::Rejected(format!("unbound constant `{}`", c)))
            }
            Expr::FVar(x) => {
                self.tr("tm_var");
                ctx.lookup(x)
                    .cloned()
                    .ok_or_else(|| Fail::Rejected(format!("unbound variable `{}`", x)))
            }
            Expr::Star => {
                self.tr("tm_star");
                Ok(Expr::Unit)
            }
            Expr::Refl(s) => {
                self.tr("tm_refl");
                self.infer(ctx, s)?;
                Ok(Expr::id((**s).clone(), (**s).clone()))
            }
            Expr::Pair(_, _) => Err(Fail::Rejected(
                "pair needs an expected Sigma type (cannot be inferred)".to_string(),
            )),
            Expr::Proj1(u) => {
                self.tr("tm_proj1");
                match self.infer(ctx, u)? {
                    Expr::Sigma { dom, .. } => Ok(*dom),
                    other => Err(Fail::Rejected(format!(
                        "first projection of a non-Sigma type `{}`",
                        print_expr(&other)
                    ))),
                }
            }
            Expr::Proj2(u) => {
                self.tr("tm_proj2");
                match self.infer(ctx, u)? {
                    Expr::Sigma { cod, .. } => Ok(cod.instantiate(&Expr::proj1((**u).clone()))),
                    other => Err(Fail::Rejected(format!(
                        "second projection of a non-Sigma type `{}`",
                        print_expr(&other)
                    ))),
                }
            }
            Expr::Lam { dom, body } => {
                self.tr("tm_lam");
                self.ck_type(ctx, dom)?;
                let x = self.fresh_var();
                let ext = ctx.extended(&x, (**dom).clone());
                let body_ty = self.infer(&ext, &body.open_with(&x))?;
                Ok(Expr::pi((**dom).clone(), body_ty.close(&x)))
            }
            Expr::App(f, s) => {
                self.tr("tm_app");
                match self.infer(ctx, f)? {
                    Expr::Pi { dom, cod } => {
                        self.ck_term(ctx, s, &dom)?;
                        Ok(cod.instantiate(s))
                    }
                    other => Err(Fail::Rejected(format!(
                        "application of a non-Pi head: `{}` has type `{}`",
                        print_expr(f),
                        print_expr(&other)
                    ))),
                }
            }
            Expr::BVar(i) => Err(Fail::Rejected(format!(
                "dangling bound variable #{} (ill-scoped input)",
                i
            ))),
            other => Err(Fail::Rejected(format!(
                "`{}` is a type, not a term",
                print_expr(other)
            ))),
        }
    }

    fn ck_term(&mut self, ctx: &Context, t: &Expr, ty: &Expr) -> JResult<()> {
        match (t, ty) {
            (Expr::Pair(a, b), Expr::Sigma { dom, cod }) => {
                self.tr("tm_pair");
                self.ck_term(ctx, a, dom)?;
                let snd_ty = cod.instantiate(a);
                self.ck_term(ctx, b, &snd_ty)
            }
            (Expr::Pair(_, _), other) => Err(Fail::Rejected(format!(
                "pair checked against non-Sigma type `{}`",
                print_expr(other)
            ))),
            (Expr::Lam { dom: ann, body }, Expr::Pi { dom, cod }) => {
                self.tr("tm_lam");
                self.ck_type(ctx, ann)?;
                self.eq_types(ctx, ann, dom)?;
                let x = self.fresh_var();
                let ext = ctx.extended(&x, (**ann).clone());
                self.ck_term(&ext, &body.open_with(&x), &cod.open_with(&x))
            }
            _ => {
                let inferred = self.infer(ctx, t)?;
                self.tr("eq_typing");
                self.eq_types(ctx, &inferred, ty).map_err(|f| {
                    prefix_fail(
                        f,
                        &format!(
                            "`{}` has type `{}`, expected `{}`",
                            print_expr(t),
                            print_expr(&inferred),
                            print_expr(ty)
                        ),
                    )
                })
            }
        }
    }

    // --- equality of types ---

    fn eq_types(&mut self, ctx: &Context, a: &Expr, b: &Expr) -> JResult<()> {
        match (a, b) {
            (Expr::Unit, Expr::Unit) => {
                self.tr("tyeq_unit");
                Ok(())
            }
            (Expr::Id(a1, a2), Expr::Id(b1, b2)) => {
                self.tr("tyeq_id");
                let common = self.infer(ctx, a1)?;
                self.eq_at(ctx, a1, b1, &common)?;
                self.eq_at(ctx, a2, b2, &common)
            }
            (
                Expr::Sigma { dom, cod },
                Expr::Sigma {
                    dom: dom2,
                    cod: cod2,
                },
            ) => {
                self.tr("tyeq_sigma");
                self.eq_types(ctx, dom, dom2)?;
                let x = self.fresh_var();
                let ext = ctx.extended(&x, (**dom).clone());
                self.eq_types(&ext, &cod.open_with(&x), &cod2.open_with(&x))
            }
            (
                Expr::Pi { dom, cod },
                Expr::Pi {
                    dom: dom2,
                    cod: cod2,
                },
            ) => {
                self.tr("tyeq_pi");
                self.eq_types(ctx, dom, dom2)?;
                let x = self.fresh_var();
                let ext = ctx.extended(&x, (**dom).clone());
                self.eq_types(&ext, &cod.open_with(&x), &cod2.open_with(&x))
            }
            (
                Expr::TypeApp { head, args },
                Expr::TypeApp {
                    head: head2,
                    args: args2,
                },
            ) => {
                if head != head2 {
                    return Err(Fail::Rejected(format!(
                        "type constants differ: `{}` vs `{}`",
                        head, head2
                    )));
                }
                self.tr("tyeq_app");
                let arg_ctx = self
                    .lookup_type_decl(head)
                    .ok_or_else(|| Fail::Rejected(format!("unbound type constant `{}`", head)))?
                    .clone();
                for i in 0..arg_ctx.decls.len() {
                    let prefix = Subst {
                        assigns: args.assigns[..i].to_vec(),
                    };
                    let expected =
                        apply_subst(&prefix, &arg_ctx.decls[i].1).map_err(Ck::subst_err)?;
                    let (_, s) = &args.assigns[i];
                    let (_, s2) = &args2.assigns[i];
                    self.eq_at(ctx, s, s2, &expected).map_err(|f| {
                        prefix_fail(
                            f,
                            &format!("at argument {} of `{}`", i + 1, head),
                        )
                    })?;
                }
                Ok(())
            }
            _ => Err(Fail::Rejected(format!(
                "type formers differ: `{}` vs `{}`",
                print_expr(a),
                print_expr(b)
            ))),
        }
    }

    // --- equality of terms ---

    fn eq_terms(
        &mut self,
        ctx: &Context,
        s: &Expr,
        s2: &Expr,
        hint: Option<&Expr>,
    ) -> JResult<()> {
        // The compared terms share a type; recover it from either side, or
        // from a normal form when neither is inferable directly (pairs
        // under projections).
        let ty = match self.infer(ctx, s) {
            Ok(ty) => ty,
            Err(first) => match self.infer(ctx, s2) {
                Ok(ty) => ty,
                Err(_) => {
                    let mut budget = self.fuel;
                    let (ns, exhausted) = self.norm(s, &mut budget);
                    if exhausted {
                        return Err(Fail::Undetermined(
                            "fuel exhausted while normalizing for type recovery".to_string(),
                        ));
                    }
                    self.infer(ctx, &ns).map_err(|_| first)?
                }
            },
        };
        match self.eq_at(ctx, s, s2, &ty) {
            Ok(()) => Ok(()),
            Err(first) => {
                if let Some(h) = hint {
                    let hint_ty = self.infer(ctx, h).map_err(|f| {
                        prefix_fail(f, "ill-typed hint")
                    })?;
                    if !matches!(hint_ty, Expr::Id(_, _)) {
                        return Err(Fail::Rejected(format!(
                            "ill-typed hint: `{}` has type `{}`, not an identity type",
                            print_expr(h),
                            print_expr(&hint_ty)
                        )));
                    }
                    let goal = Expr::id(s.clone(), s2.clone());
                    let flipped = Expr::id(s2.clone(), s.clone());
                    let direct = self.eq_types(ctx, &hint_ty, &goal);
                    let ok = match direct {
                        Ok(()) => true,
                        Err(_) => self.eq_types(ctx, &hint_ty, &flipped).is_ok(),
                    };
                    if ok {
                        self.tr("eq_reflect");
                        Ok(())
                    } else {
                        Err(Fail::Rejected(format!(
                            "hint proves `{}`, which does not relate the goal sides",
                            print_expr(&hint_ty)
                        )))
                    }
                } else {
                    // Without a hint, a structural failure in a theory that
                    // declares identity axioms may just mean the hint is
                    // missing; that is undetermined, not refuted.
                    match first {
                        Fail::Rejected(m) if self.sig_has_identity_axioms() => {
                            Err(Fail::Undetermined(format!(
                                "{} (no hint given; the signature declares identity axioms that may apply)",
                                m
                            )))
                        }
                        other => Err(other),
                    }
                }
            }
        }
    }

    fn sig_has_identity_axioms(&self) -> bool {
        self.sig.decls.iter().any(|d| match d {
            Decl::Term { ty, .. } => {
                let mut cur = ty;
                while let Expr::Pi { cod, .. } = cur {
                    cur = cod;
                }
                matches!(cur, Expr::Id(_, _))
            }
            _ => false,
        })
    }

    /// Type-directed equality at a given common type.
    fn eq_at(&mut self, ctx: &Context, s: &Expr, s2: &Expr, ty: &Expr) -> JResult<()> {
        match ty {
            Expr::Unit => {
                self.tr("eq_unit");
                Ok(())
            }
            Expr::Id(_, _) => {
                self.tr("eq_id_uniq");
                Ok(())
            }
            Expr::Pi { dom, cod } => {
                self.tr("eq_funcext");
                let y = self.fresh_var();
                let ext = ctx.extended(&y, (**dom).clone());
                let var = Expr::fvar(&y);
                self.eq_at(
                    &ext,
                    &Expr::app(s.clone(), var.clone()),
                    &Expr::app(s2.clone(), var),
                    &cod.open_with(&y),
                )
            }
            Expr::Sigma { dom, cod } => {
                self.tr("eq_pair_eta");
                self.eq_at(
                    ctx,
                    &Expr::proj1(s.clone()),
                    &Expr::proj1(s2.clone()),
                    dom,
                )?;
                let snd_ty = cod.instantiate(&Expr::proj1(s.clone()));
                self.eq_at(
                    ctx,
                    &Expr::proj2(s.clone()),
                    &Expr::proj2(s2.clone()),
                    &snd_ty,
                )
            }
            Expr::TypeApp { .. } => {
                let mut budget = self.fuel;
                let (ns, ex1) = self.norm(s, &mut budget);
                let (ns2, ex2) = self.norm(s2, &mut budget);
                if ex1 || ex2 {
                    return Err(Fail::Undetermined(
                        "fuel exhausted during normalization".to_string(),
                    ));
                }
                if ns == ns2 {
                    self.tr("eq_refl");
                    return Ok(());
                }
                self.eq_neutral(ctx, &ns, &ns2).map(|_| ())
            }
            other => Err(Fail::Rejected(format!(
                "cannot compare terms at non-type `{}`",
                print_expr(other)
            ))),
        }
    }

    /// Head-structural comparison of normal terms at a base type; returns
    /// the (syntactic) type of the compared spine.
    fn eq_neutral(&mut self, ctx: &Context, s: &Expr, s2: &Expr) -> JResult<Expr> {
        match (s, s2) {
            (Expr::Const(c), Expr::Const(c2)) if c == c2 => self
                .lookup_term_decl(c)
                .cloned()
                .ok_or_else(|| Fail::Rejected(format!("unbound constant `{}`", c))),
            (Expr::FVar(x), Expr::FVar(x2)) if x == x2 => ctx
                .lookup(x)
                .cloned()
                .ok_or_else(|| Fail::Rejected(format!("unbound variable `{}`", x))),
            (Expr::Star, Expr::Star) => Ok(Expr::Unit),
            (Expr::App(f, a), Expr::App(f2, a2)) => {
                self.tr("eq_app");
                let fty = self.eq_neutral(ctx, f, f2)?;
                match fty {
                    Expr::Pi { dom, cod } => {
                        self.eq_at(ctx, a, a2, &dom)?;
                        Ok(cod.instantiate(a))
                    }
                    other => Err(Fail::Rejected(format!(
                        "application head has non-Pi type `{}`",
                        print_expr(&other)
                    ))),
                }
            }
            (Expr::Proj1(u), Expr::Proj1(u2)) => {
                self.tr("eq_proj1_cong");
                match self.eq_neutral(ctx, u, u2)? {
                    Expr::Sigma { dom, .. } => Ok(*dom),
                    other => Err(Fail::Rejected(format!(
                        "projection subject has non-Sigma type `{}`",
                        print_expr(&other)
                    ))),
                }
            }
            (Expr::Proj2(u), Expr::Proj2(u2)) => {
                self.tr("eq_proj2_cong");
                match self.eq_neutral(ctx, u, u2)? {
                    Expr::Sigma { cod, .. } => Ok(cod.instantiate(&Expr::proj1((**u).clone()))),
                    other => Err(Fail::Rejected(format!(
                        "projection subject has non-Sigma type `{}`",
                        print_expr(&other)
                    ))),
                }
            }
            _ => Err(Fail::Rejected(format!(
                "terms differ: `{}` vs `{}`",
                print_expr(s),
                print_expr(s2)
            ))),
        }
    }

    // --- normalization ---

    /// Reduce `e` outermost-first; returns the reduct and whether fuel ran
    /// out with redexes remaining.
    fn norm(&mut self, e: &Expr, budget: &mut u64) -> (Expr, bool) {
        let mut cur = e.clone();
        loop {
            match self.step(&cur) {
                Some(next) => {
                    if *budget == 0 {
                        return (cur, true);
                    }
                    *budget -= 1;
                    cur = next;
                }
                None => return (cur, false),
            }
        }
    }

    /// One leftmost-outermost contraction, if any.
    fn step(&mut self, e: &Expr) -> Option<Expr> {
        if let Some(next) = self.step_root(e) {
            return Some(next);
        }
        match e {
            Expr::App(f, a) => self
                .step(f)
                .map(|f2| Expr::app(f2, (**a).clone()))
                .or_else(|| self.step(a).map(|a2| Expr::app((**f).clone(), a2))),
            Expr::Pair(a, b) => self
                .step(a)
                .map(|a2| Expr::pair(a2, (**b).clone()))
                .or_else(|| self.step(b).map(|b2| Expr::pair((**a).clone(), b2))),
            Expr::Id(a, b) => self
                .step(a)
                .map(|a2| Expr::id(a2, (**b).clone()))
                .or_else(|| self.step(b).map(|b2| Expr::id((**a).clone(), b2))),
            Expr::Refl(a) => self.step(a).map(Expr::refl),
            Expr::Proj1(a) => self.step(a).map(Expr::proj1),
            Expr::Proj2(a) => self.step(a).map(Expr::proj2),
            Expr::Lam { dom, body } => self
                .step(dom)
                .map(|d| Expr::lam(d, (**body).clone()))
                .or_else(|| self.step(body).map(|b| Expr::lam((**dom).clone(), b))),
            Expr::Sigma { dom, cod } => self
                .step(dom)
                .map(|d| Expr::sigma(d, (**cod).clone()))
                .or_else(|| self.step(cod).map(|c| Expr::sigma((**dom).clone(), c))),
            Expr::Pi { dom, cod } => self
                .step(dom)
                .map(|d| Expr::pi(d, (**cod).clone()))
                .or_else(|| self.step(cod).map(|c| Expr::pi((**dom).clone(), c))),
            Expr::TypeApp { head, args } => {
                for (i, (x, t)) in args.assigns.iter().enumerate() {
                    if let Some(t2) = self.step(t) {
                        let mut assigns = args.assigns.clone();
                        assigns[i] = (x.clone(), t2);
                        return Some(Expr::TypeApp {
                            head: head.clone(),
                            args: Subst { assigns },
                        });
                    }
                }
                None
            }
            Expr::Const(_) | Expr::FVar(_) | Expr::BVar(_) | Expr::Unit | Expr::Star => None,
        }
    }

    fn step_root(&mut self, e: &Expr) -> Option<Expr> {
        match e {
            Expr::App(f, a) => {
                if let Expr::Lam { body, .. } = &**f {
                    self.tr("eq_beta");
                    return Some(body.instantiate(a));
                }
            }
            Expr::Proj1(u) => {
                if let Expr::Pair(a, _) = &**u {
                    self.tr("eq_proj1");
                    return Some((**a).clone());
                }
            }
            Expr::Proj2(u) => {
                if let Expr::Pair(_, b) = &**u {
                    self.tr("eq_proj2");
                    return Some((**b).clone());
                }
            }
            _ => {}
        }
        for rule in self.rules {
            let mut binds: Vec<Option<Expr>> = vec![None; rule.n_binders];
            if match_pattern(&rule.lhs, e, 0, &mut binds) {
                let name = rule.name.clone();
                let out = instantiate_rhs(&rule.rhs, 0, &binds);
                self.trace.push(format!("rw:{}", name));
                return Some(out);
            }
        }
        None
    }
}

fn prefix_fail(f: Fail, context: &str) -> Fail {
    match f {
        Fail::Rejected(m) => Fail::Rejected(format!("{}: {}", context, m)),
        Fail::Undetermined(m) => Fail::Undetermined(format!("{}: {}", context, m)),
    }
}

/// Validate and compile a rewrite mark: the axiom type must be a closed
/// telescope `Pi x1:S1. … Pi xn:Sn. Id(l, r)` with `l` not a bare variable
/// and the variables of `r` contained in those of `l`.
fn compile_rewrite(name: &str, ty: &Expr) -> Result<RewriteRule, String> {
    if !ty.free_vars().is_empty() {
        return Err(format!(
            "rewrite axiom `{}` must have a closed type",
            name
        ));
    }
    let mut n = 0usize;
    let mut cur = ty;
    while let Expr::Pi { cod, .. } = cur {
        n += 1;
        cur = cod;
    }
    let (lhs, rhs) = match cur {
        Expr::Id(l, r) => ((**l).clone(), (**r).clone()),
        other => {
            return Err(format!(
                "rewrite axiom `{}` must conclude in an identity type, found `{}`",
                name,
                print_expr(other)
            ))
        }
    };
    if matches!(lhs, Expr::BVar(_)) {
        return Err(format!(
            "rewrite axiom `{}` has a bare variable as left-hand side",
            name
        ));
    }
    let lv = pattern_vars(&lhs, 0, n);
    let rv = pattern_vars(&rhs, 0, n);
    if !rv.is_subset(&lv) {
        return Err(format!(
            "rewrite axiom `{}` has right-hand-side variables not bound on the left",
            name
        ));
    }
    Ok(RewriteRule {
        name: name.to_string(),
        n_binders: n,
        lhs,
        rhs,
    })
}

/// Telescope variables (as de Bruijn distances past local binders) that
/// occur in a pattern stored under `n` telescope binders.
fn pattern_vars(e: &Expr, depth: usize, n: usize) -> std::collections::BTreeSet<usize> {
    let mut out = std::collections::BTreeSet::new();
    collect_pattern_vars(e, depth, n, &mut out);
    out
}

fn collect_pattern_vars(
    e: &Expr,
    depth: usize,
    n: usize,
    out: &mut std::collections::BTreeSet<usize>,
) {
    match e {
        Expr::BVar(i) => {
            if *i >= depth && *i - depth < n {
                out.insert(*i - depth);
            }
        }
        Expr::FVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => {}
        Expr::TypeApp { args, .. } => {
            for (_, t) in &args.assigns {
                collect_pattern_vars(t, depth, n, out);
            }
        }
        Expr::Id(a, b) | Expr::Pair(a, b) | Expr::App(a, b) => {
            collect_pattern_vars(a, depth, n, out);
            collect_pattern_vars(b, depth, n, out);
        }
        Expr::Sigma { dom, cod } | Expr::Pi { dom, cod } => {
            collect_pattern_vars(dom, depth, n, out);
            collect_pattern_vars(cod, depth + 1, n, out);
        }
        Expr::Lam { dom, body } => {
            collect_pattern_vars(dom, depth, n, out);
            collect_pattern_vars(body, depth + 1, n, out);
        }
        Expr::Refl(t) | Expr::Proj1(t) | Expr::Proj2(t) => collect_pattern_vars(t, depth, n, out),
    }
}

/// First-order matching of a rewrite pattern against a subject at the same
/// depth. Pattern indices below `pdepth` are pattern-local binders and must
/// match exactly; higher indices are telescope (pattern) variables. A
/// telescope variable cannot capture subject subterms that reference
/// pattern-local binders.
fn match_pattern(pat: &Expr, subject: &Expr, pdepth: usize, binds: &mut Vec<Option<Expr>>) -> bool {
    match pat {
        Expr::BVar(j) => {
            if *j < pdepth {
                subject == &Expr::BVar(*j)
            } else {
                let v = j - pdepth;
                if v >= binds.len() {
                    return false;
                }
                if !free_indices_at_least(subject, 0, pdepth) {
                    return false;
                }
                let captured = subject.shift(-(pdepth as isize), 0);
                match &binds[v] {
                    Some(prev) => prev == &captured,
                    None => {
                        binds[v] = Some(captured);
                        true
                    }
                }
            }
        }
        Expr::FVar(x) => subject == &Expr::FVar(x.clone()),
        Expr::Const(c) => subject == &Expr::Const(c.clone()),
        Expr::Unit => subject == &Expr::Unit,
        Expr::Star => subject == &Expr::Star,
        Expr::TypeApp { head, args } => match subject {
            Expr::TypeApp {
                head: h2,
                args: args2,
            } if head == h2 && args.assigns.len() == args2.assigns.len() => args
                .assigns
                .iter()
                .zip(&args2.assigns)
                .all(|((_, p), (_, s))| match_pattern(p, s, pdepth, binds)),
            _ => false,
        },
        Expr::Id(a, b) => match subject {
            Expr::Id(a2, b2) => {
                match_pattern(a, a2, pdepth, binds) && match_pattern(b, b2, pdepth, binds)
            }
            _ => false,
        },
        Expr::Pair(a, b) => match subject {
            Expr::Pair(a2, b2) => {
                match_pattern(a, a2, pdepth, binds) && match_pattern(b, b2, pdepth, binds)
            }
            _ => false,
        },
        Expr::App(a, b) => match subject {
            Expr::App(a2, b2) => {
                match_pattern(a, a2, pdepth, binds) && match_pattern(b, b2, pdepth, binds)
            }
            _ => false,
        },
        Expr::Sigma { dom, cod } => match subject {
            Expr::Sigma {
                dom: dom2,
                cod: cod2,
            } => {
                match_pattern(dom, dom2, pdepth, binds)
                    && match_pattern(cod, cod2, pdepth + 1, binds)
            }
            _ => false,
        },
        Expr::Pi { dom, cod } => match subject {
            Expr::Pi {
                dom: dom2,
                cod: cod2,
            } => {
                match_pattern(dom, dom2, pdepth, binds)
                    && match_pattern(cod, cod2, pdepth + 1, binds)
            }
            _ => false,
        },
        Expr::Lam { dom, body } => match subject {
            Expr::Lam {
                dom: dom2,
                body: body2,
            } => {
                match_pattern(dom, dom2, pdepth, binds)
                    && match_pattern(body, body2, pdepth + 1, binds)
            }
            _ => false,
        },
        Expr::Refl(a) => match subject {
            Expr::Refl(a2) => match_pattern(a, a2, pdepth, binds),
            _ => false,
        },
        Expr::Proj1(a) => match subject {
            Expr::Proj1(a2) => match_pattern(a, a2, pdepth, binds),
            _ => false,
        },
        Expr::Proj2(a) => match subject {
            Expr::Proj2(a2) => match_pattern(a, a2, pdepth, binds),
            _ => false,
        },
    }
}

/// All indices free at the subject's root level are at least `min` (i.e. the
/// subterm does not reach into the pattern's local binders).
fn free_indices_at_least(e: &Expr, depth: usize, min: usize) -> bool {
    match e {
        Expr::BVar(i) => *i < depth || *i - depth >= min,
        Expr::FVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => true,
        Expr::TypeApp { args, .. } => args
            .assigns
            .iter()
            .all(|(_, t)| free_indices_at_least(t, depth, min)),
        Expr::Id(a, b) | Expr::Pair(a, b) | Expr::App(a, b) => {
            free_indices_at_least(a, depth, min) && free_indices_at_least(b, depth, min)
        }
        Expr::Sigma { dom, cod } | Expr::Pi { dom, cod } => {
            free_indices_at_least(dom, depth, min) && free_indices_at_least(cod, depth + 1, min)
        }
        Expr::Lam { dom, body } => {
            free_indices_at_least(dom, depth, min) && free_indices_at_least(body, depth + 1, min)
        }
        Expr::Refl(t) | Expr::Proj1(t) | Expr::Proj2(t) => free_indices_at_least(t, depth, min),
    }
}

/// Instantiate a rewrite right-hand side with the captured bindings.
fn instantiate_rhs(rhs: &Expr, depth: usize, binds: &[Option<Expr>]) -> Expr {
    match rhs {
        Expr::BVar(j) => {
            if *j < depth {
                Expr::BVar(*j)
            } else {
                let v = j - depth;
                match binds.get(v).and_then(|b| b.as_ref()) {
                    Some(t) => t.shift(depth as isize, 0),
                    // Unreachable for compiled rules (rhs vars are a subset
                    // of lhs vars); keep the index rather than panic.
                    None => Expr::BVar(*j),
                }
            }
        }
        Expr::FVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => rhs.clone(),
        Expr::TypeApp { head, args } => Expr::TypeApp {
            head: head.clone(),
            args: Subst {
                assigns: args
                    .assigns
                    .iter()
                    .map(|(x, t)| (x.clone(), instantiate_rhs(t, depth, binds)))
                    .collect(),
            },
        },
        Expr::Id(a, b) => Expr::id(
            instantiate_rhs(a, depth, binds),
            instantiate_rhs(b, depth, binds),
        ),
        Expr::Pair(a, b) => Expr::pair(
            instantiate_rhs(a, depth, binds),
            instantiate_rhs(b, depth, binds),
        ),
        Expr::App(a, b) => Expr::app(
            instantiate_rhs(a, depth, binds),
            instantiate_rhs(b, depth, binds),
        ),
        Expr::Sigma { dom, cod } => Expr::sigma(
            instantiate_rhs(dom, depth, binds),
            instantiate_rhs(cod, depth + 1, binds),
        ),
        Expr::Pi { dom, cod } => Expr::pi(
            instantiate_rhs(dom, depth, binds),
            instantiate_rhs(cod, depth + 1, binds),
        ),
        Expr::Lam { dom, body } => Expr::lam(
            instantiate_rhs(dom, depth, binds),
            instantiate_rhs(body, depth + 1, binds),
        ),
        Expr::Refl(t) => Expr::refl(instantiate_rhs(t, depth, binds)),
        Expr::Proj1(t) => Expr::proj1(instantiate_rhs(t, depth, binds)),
        Expr::Proj2(t) => Expr::proj2(instantiate_rhs(t, depth, binds)),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::syntax::parse_theory;

    pub(crate) const CAT_SRC: &str = r#"
theory Cat {
  type Ob()
  type Mor(x : Ob(), y : Ob())
  const id : Pi x : Ob() . Mor(x, x)
  const comp : Pi x : Ob() . Pi y : Ob() . Pi z : Ob() . Pi g : Mor(y, z) . Pi f : Mor(x, y) . Mor(x, z)
  const assoc : Pi w : Ob() . Pi x : Ob() . Pi y : Ob() . Pi z : Ob() . Pi f : Mor(w, x) . Pi g : Mor(x, y) . Pi h : Mor(y, z) . Id(comp w y z h (comp w x y g f), comp w x z (comp x y z h g) f)
  const neutr_r : Pi x : Ob() . Pi y : Ob() . Pi f : Mor(x, y) . Id(comp x x y f (id x), f)
  const neutr_l : Pi x : Ob() . Pi y : Ob() . Pi f : Mor(x, y) . Id(comp x y y (id y) f, f)
}
"#;

    fn cat_sig() -> Signature {
        parse_theory(CAT_SRC).expect("category theory parses").signature
    }

    fn parse_in(sig: &Signature, ctx: &Context, s: &str) -> Expr {
        parse_expr_in(sig, ctx, s).expect("expression parses")
    }

    fn ctx_of(sig: &Signature, s: &str) -> Context {
        parse_context(sig, s).expect("context parses")
    }

    #[test]
    fn empty_signature_is_accepted() {
        let report = check_signature(&Signature::default());
        assert!(report.accepted());
        assert_eq!(report.trace, vec!["sig_nil"]);
    }

    #[test]
    fn category_signature_is_accepted() {
        let report = check_signature(&cat_sig());
        assert!(report.accepted(), "{:?}", report.message);
    }

    #[test]
    fn unbound_constant_in_declaration_is_rejected() {
        // `const c : Mor(c, c)` before `c` exists — built programmatically,
        // since the parser would already refuse it.
        let sig0 = cat_sig();
        let mor_cc = Expr::TypeApp {
            head: "Mor".into(),
            args: Subst {
                assigns: vec![
                    ("x".into(), Expr::cnst("c")),
                    ("y".into(), Expr::cnst("c")),
                ],
            },
        };
        let mut sig = Signature::default();
        sig.decls = sig0.decls[..2].to_vec();
        sig.decls.push(Decl::Term {
            name: "c".into(),
            ty: mor_cc,
        });
        let report = check_signature(&sig);
        assert_eq!(report.verdict, Verdict::Rejected);
        assert!(
            report.message.as_deref().unwrap_or("").contains("unbound constant `c`"),
            "{:?}",
            report.message
        );
    }

    #[test]
    fn category_context_is_accepted() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob(), y : Ob(), f : Mor(x, y)");
        assert!(check_context(&sig, &ctx).accepted());
        assert!(check_context(&sig, &Context::default()).accepted());
    }

    #[test]
    fn self_referential_context_is_rejected() {
        // `x : Mor(x, x)` — x is not yet bound; built programmatically.
        let sig = cat_sig();
        let mor_xx = Expr::TypeApp {
            head: "Mor".into(),
            args: Subst {
                assigns: vec![
                    ("x".into(), Expr::fvar("x")),
                    ("y".into(), Expr::fvar("x")),
                ],
            },
        };
        let ctx = Context {
            decls: vec![("x".into(), mor_xx)],
        };
        let report = check_context(&sig, &ctx);
        assert_eq!(report.verdict, Verdict::Rejected);
    }

    #[test]
    fn substitution_checks_by_replaying_its_rule() {
        let sig = cat_sig();
        let src = ctx_of(&sig, "x : Ob(), y : Ob()");
        let dst = ctx_of(&sig, "a : Ob()");
        let gamma = Subst {
            assigns: vec![
                ("x".into(), Expr::fvar("a")),
                ("y".into(), Expr::fvar("a")),
            ],
        };
        let report = check_subst(&sig, &src, &dst, &gamma);
        assert!(report.accepted(), "{:?}", report.message);
        // Rule fires once per assignment.
        assert_eq!(
            report.trace.iter().filter(|r| *r == "subst_cons").count(),
            2
        );

        let short = Subst {
            assigns: vec![("x".into(), Expr::fvar("a"))],
        };
        let report = check_subst(&sig, &src, &dst, &short);
        assert_eq!(report.verdict, Verdict::Rejected);

        assert!(check_subst(&sig, &Context::default(), &dst, &Subst::default()).accepted());
    }

    #[test]
    fn neutrality_type_is_well_formed() {
        let sig = cat_sig();
        let ctx = Context::default();
        let ty = parse_in(
            &sig,
            &ctx,
            "Pi x : Ob() . Pi y : Ob() . Pi f : Mor(x, y) . Id(comp x x y f (id x), f)",
        );
        assert!(check_type_wf(&sig, &ctx, &ty).accepted());
        assert!(check_type_wf(&sig, &ctx, &Expr::Unit).accepted());
    }

    #[test]
    fn identity_type_requires_a_common_type() {
        let sig = cat_sig();
        let ctx = Context::default();
        let ty = Expr::id(Expr::Star, Expr::cnst("id"));
        let report = check_type_wf(&sig, &ctx, &ty);
        assert_eq!(report.verdict, Verdict::Rejected);
    }

    #[test]
    fn infer_id_x() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob()");
        let t = parse_in(&sig, &ctx, "id x");
        let ty = infer_type(&sig, &ctx, &t).expect("infers");
        assert_eq!(ty, parse_in(&sig, &ctx, "Mor(x, x)"));
    }

    #[test]
    fn infer_star_and_beta_redex() {
        let sig = Signature::default();
        let ctx = Context::default();
        assert_eq!(infer_type(&sig, &ctx, &Expr::Star).unwrap(), Expr::Unit);

        let t = parse_in(&sig, &ctx, "(fun x : Unit => refl(x)) star");
        let ty = infer_type(&sig, &ctx, &t).expect("infers");
        assert_eq!(ty, Expr::id(Expr::Star, Expr::Star));
    }

    #[test]
    fn check_pair_against_sigma() {
        let sig = Signature::default();
        let ctx = Context::default();
        let ty = parse_in(&sig, &ctx, "Sig x : Unit . Id(x, star)");
        let t = parse_in(&sig, &ctx, "pair(star, refl(star))");
        let report = check_term(&sig, &ctx, &t, &ty);
        assert!(report.accepted(), "{:?}", report.message);

        assert!(check_term(&sig, &ctx, &Expr::Star, &Expr::Unit).accepted());
    }

    #[test]
    fn star_does_not_check_against_ob() {
        let sig = cat_sig();
        let ctx = Context::default();
        let ob = parse_in(&sig, &ctx, "Ob()");
        let report = check_term(&sig, &ctx, &Expr::Star, &ob);
        assert_eq!(report.verdict, Verdict::Rejected);
    }

    #[test]
    fn beta_equality_at_base_type() {
        let th = parse_theory("theory T { type b() const c : b() }").unwrap();
        let sig = th.signature;
        let ctx = Context::default();
        let lhs = parse_in(&sig, &ctx, "(fun x : b() => x) c");
        let rhs = parse_in(&sig, &ctx, "c");
        let report = equal_terms(&sig, &ctx, &lhs, &rhs, None);
        assert!(report.accepted(), "{:?}", report.message);
        assert!(report.trace.iter().any(|r| r == "eq_beta"));
    }

    #[test]
    fn reflexivity_for_any_well_typed_term() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob(), y : Ob(), f : Mor(x, y)");
        let f = parse_in(&sig, &ctx, "f");
        assert!(equal_terms(&sig, &ctx, &f, &f, None).accepted());
    }

    #[test]
    fn neutrality_accepted_via_reflection_hint() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob(), y : Ob(), f : Mor(x, y)");
        let lhs = parse_in(&sig, &ctx, "comp x x y f (id x)");
        let rhs = parse_in(&sig, &ctx, "f");
        let hint = parse_in(&sig, &ctx, "neutr_r x y f");
        let report = equal_terms(&sig, &ctx, &lhs, &rhs, Some(&hint));
        assert!(report.accepted(), "{:?}", report.message);
        assert!(report.trace.iter().any(|r| r == "eq_reflect"));
    }

    #[test]
    fn missing_hint_in_axiomatic_theory_is_undetermined() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob(), y : Ob(), f : Mor(x, y)");
        let lhs = parse_in(&sig, &ctx, "comp x x y f (id x)");
        let rhs = parse_in(&sig, &ctx, "f");
        let report = equal_terms(&sig, &ctx, &lhs, &rhs, None);
        assert_eq!(report.verdict, Verdict::Undetermined);
    }

    #[test]
    fn distinct_constants_without_axioms_are_rejected() {
        let th = parse_theory("theory T { type b() const c : b() const d : b() }").unwrap();
        let sig = th.signature;
        let ctx = Context::default();
        let report = equal_terms(
            &sig,
            &ctx,
            &Expr::cnst("c"),
            &Expr::cnst("d"),
            None,
        );
        assert_eq!(report.verdict, Verdict::Rejected);
    }

    #[test]
    fn type_equality_through_argument_beta() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob(), y : Ob()");
        let a = parse_in(&sig, &ctx, "Mor(x, (fun u : Ob() => u) y)");
        let b = parse_in(&sig, &ctx, "Mor(x, y)");
        let report = equal_types(&sig, &ctx, &a, &b);
        assert!(report.accepted(), "{:?}", report.message);
        assert!(report.trace.iter().any(|r| r == "tyeq_app"));

        assert!(equal_types(&sig, &ctx, &Expr::Unit, &Expr::Unit).accepted());
    }

    #[test]
    fn sigma_and_pi_formers_do_not_match() {
        let sig = Signature::default();
        let ctx = Context::default();
        let a = parse_in(&sig, &ctx, "Sig x : Unit . Unit");
        let b = parse_in(&sig, &ctx, "Pi x : Unit . Unit");
        let report = equal_types(&sig, &ctx, &a, &b);
        assert_eq!(report.verdict, Verdict::Rejected);
    }

    #[test]
    fn normalize_contracts_projections_and_is_idempotent() {
        let sig = Signature::default();
        let ctx = Context::default();
        let e = parse_in(&sig, &ctx, "proj1 pair(star, refl(star))");
        let n = normalize(&sig, &ctx, &e, DEFAULT_FUEL);
        assert!(!n.exhausted);
        assert_eq!(n.expr, Expr::Star);
        let again = normalize(&sig, &ctx, &n.expr, DEFAULT_FUEL);
        assert_eq!(again.expr, n.expr);
    }

    #[test]
    fn rewrite_marked_neutrality_normalizes() {
        let src = CAT_SRC.trim_end();
        let src = src.strip_suffix('}').expect("closing brace");
        let with_rewrite = format!("{} rewrite neutr_r }}", src);
        let th = parse_theory(&with_rewrite).expect("parses");
        let sig = th.signature;
        assert!(check_signature(&sig).accepted());
        let ctx = ctx_of(&sig, "x : Ob(), y : Ob(), f : Mor(x, y)");
        let e = parse_in(&sig, &ctx, "comp x x y f (id x)");
        let n = normalize(&sig, &ctx, &e, DEFAULT_FUEL);
        assert_eq!(n.expr, parse_in(&sig, &ctx, "f"));
    }

    #[test]
    fn fuel_exhaustion_is_undetermined_not_rejected() {
        // A rewrite rule that loops: sym : Id(c, d) plus dys : Id(d, c),
        // both oriented, cycle forever.
        let th = parse_theory(
            "theory T { type b() const c : b() const d : b() const ax1 : Id(c, d) const ax2 : Id(d, c) rewrite ax1 rewrite ax2 }",
        )
        .unwrap();
        let sig = th.signature;
        let ctx = Context::default();
        let n = normalize(&sig, &ctx, &Expr::cnst("c"), 7);
        assert!(n.exhausted);
        let kernel = Kernel::with_fuel(&sig, 7);
        let report = kernel.equal_terms(&ctx, &Expr::cnst("c"), &Expr::cnst("d"), None);
        assert_eq!(report.verdict, Verdict::Undetermined);
    }

    #[test]
    fn subexpression_property_on_an_inferred_type() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob()");
        let t = parse_in(&sig, &ctx, "id x");
        let ty = infer_type(&sig, &ctx, &t).unwrap();
        assert!(check_type_wf(&sig, &ctx, &ty).accepted());
        assert!(check_context(&sig, &ctx).accepted());
        assert!(check_signature(&sig).accepted());
    }

    #[test]
    fn accepted_reports_replay() {
        let sig = cat_sig();
        let ctx = ctx_of(&sig, "x : Ob(), y : Ob(), f : Mor(x, y)");
        let lhs = parse_in(&sig, &ctx, "comp x x y f (id x)");
        let rhs = parse_in(&sig, &ctx, "f");
        let hint = parse_in(&sig, &ctx, "neutr_r x y f");
        let report = equal_terms(&sig, &ctx, &lhs, &rhs, Some(&hint));
        assert!(report.accepted());
        assert!(replay_report(&sig, &report).expect("replays"));

        let report = check_context(&sig, &ctx);
        assert!(replay_report(&sig, &report).expect("replays"));
    }

    #[test]
    fn run_goals_on_a_theory_file() {
        let src = format!(
            "{}\nequal w : Ob(), x : Ob(), y : Ob(), z : Ob(), f : Mor(w, x), g : Mor(x, y), h : Mor(y, z) |- comp w y z h (comp w x y g f) == comp w x z (comp x y z h g) f by assoc w x y z f g h\n",
            CAT_SRC.trim_end()
        );
        let th = parse_theory(&src).expect("parses");
        let kernel = Kernel::new(&th.signature);
        let reports = kernel.run_goals(&th.goals);
        assert_eq!(reports.len(), 1);
        assert!(reports[0].accepted(), "{:?}", reports[0].message);
    }
}
