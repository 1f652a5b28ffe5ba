//! Abstract syntax for the type theory: expressions, signatures, contexts,
//! substitutions, theory files, and the canonical printer.
//!
//! Expressions use nameless (de Bruijn) binders internally: `BVar(i)` counts
//! enclosing binders from the innermost one, while variables bound by a
//! context or signature stay named (`FVar`). Alpha-equivalent expressions are
//! therefore structurally equal, and capture-avoiding substitution of named
//! variables never needs renaming.

mod lex;
mod parse;

pub use parse::{parse_context, parse_expr_in, parse_subst, parse_theory, ParseError};

use std::collections::BTreeSet;
use std::fmt;

pub type VarName = String;
pub type TypeConstName = String;
pub type TermConstName = String;

/// Terms and types share one syntax tree; the kernel sorts them out.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    /// Application `a(γ)` of a type constant to arguments for its declared
    /// argument context.
    TypeApp {
        head: TypeConstName,
        args: Subst,
    },
    Unit,
    Id(Box<Expr>, Box<Expr>),
    /// `Sig x:dom. cod`; `cod` lives under one binder.
    Sigma {
        dom: Box<Expr>,
        cod: Box<Expr>,
    },
    /// `Pi x:dom. cod`; `cod` lives under one binder.
    Pi {
        dom: Box<Expr>,
        cod: Box<Expr>,
    },
    Const(TermConstName),
    /// Context variable (free by name).
    FVar(VarName),
    /// Bound variable (de Bruijn index, innermost binder = 0).
    BVar(usize),
    Star,
    Refl(Box<Expr>),
    Pair(Box<Expr>, Box<Expr>),
    Proj1(Box<Expr>),
    Proj2(Box<Expr>),
    /// `fun x:dom => body`; `body` lives under one binder.
    Lam {
        dom: Box<Expr>,
        body: Box<Expr>,
    },
    App(Box<Expr>, Box<Expr>),
}

/// An ordered assignment of terms to the variables of a source context.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subst {
    pub assigns: Vec<(VarName, Expr)>,
}

/// An ordered list of typed variable declarations; each type may mention
/// only earlier variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context {
    pub decls: Vec<(VarName, Expr)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decl {
    /// `type a(Γ)` — a type-valued constant applicable to arguments typed by
    /// its argument context.
    Type {
        name: TypeConstName,
        arg_ctx: Context,
    },
    /// `const c : S` — a term constant of closed type `S`.
    Term {
        name: TermConstName,
        ty: Expr,
    },
}

/// A signature: ordered declarations plus the set of term constants whose
/// identity-typed axioms are oriented left-to-right by the normalizer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    pub decls: Vec<Decl>,
    pub rewrites: BTreeSet<TermConstName>,
}

impl Signature {
    pub fn type_decl(&self, name: &str) -> Option<&Context> {
        self.decls.iter().find_map(|d| match d {
            Decl::Type { name: n, arg_ctx } if n == name => Some(arg_ctx),
            _ => None,
        })
    }

    pub fn term_decl(&self, name: &str) -> Option<&Expr> {
        self.decls.iter().find_map(|d| match d {
            Decl::Term { name: n, ty } if n == name => Some(ty),
            _ => None,
        })
    }

    pub fn decl_name(d: &Decl) -> &str {
        match d {
            Decl::Type { name, .. } | Decl::Term { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Goal {
    CheckType {
        ctx: Context,
        ty: Expr,
    },
    Infer {
        ctx: Context,
        term: Expr,
    },
    CheckEqual {
        ctx: Context,
        lhs: Expr,
        rhs: Expr,
        hint: Option<Expr>,
    },
    CheckInhabited {
        ctx: Context,
        ty: Expr,
        witness: Expr,
    },
}

/// A parsed theory file: a signature and the goals to run against it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TheoryFile {
    pub name: String,
    pub signature: Signature,
    pub goals: Vec<Goal>,
}

impl Expr {
    pub fn id(lhs: Expr, rhs: Expr) -> Expr {
        Expr::Id(Box::new(lhs), Box::new(rhs))
    }
    pub fn sigma(dom: Expr, cod: Expr) -> Expr {
        Expr::Sigma {
            dom: Box::new(dom),
            cod: Box::new(cod),
        }
    }
    pub fn pi(dom: Expr, cod: Expr) -> Expr {
        Expr::Pi {
            dom: Box::new(dom),
            cod: Box::new(cod),
        }
    }
    pub fn lam(dom: Expr, body: Expr) -> Expr {
        Expr::Lam {
            dom: Box::new(dom),
            body: Box::new(body),
        }
    }
    pub fn app(f: Expr, s: Expr) -> Expr {
        Expr::App(Box::new(f), Box::new(s))
    }
    pub fn pair(a: Expr, b: Expr) -> Expr {
        Expr::Pair(Box::new(a), Box::new(b))
    }
    pub fn proj1(e: Expr) -> Expr {
        Expr::Proj1(Box::new(e))
    }
    pub fn proj2(e: Expr) -> Expr {
        Expr::Proj2(Box::new(e))
    }
    pub fn refl(e: Expr) -> Expr {
        Expr::Refl(Box::new(e))
    }
    pub fn fvar(name: &str) -> Expr {
        Expr::FVar(name.to_string())
    }
    pub fn cnst(name: &str) -> Expr {
        Expr::Const(name.to_string())
    }

    /// Free (named) variables, in sorted order.
    pub fn free_vars(&self) -> BTreeSet<VarName> {
        let mut acc = BTreeSet::new();
        self.collect_free(&mut acc);
        acc
    }

    fn collect_free(&self, acc: &mut BTreeSet<VarName>) {
        match self {
            Expr::FVar(x) => {
                acc.insert(x.clone());
            }
            Expr::TypeApp { args, .. } => {
                for (_, t) in &args.assigns {
                    t.collect_free(acc);
                }
            }
            Expr::Id(a, b) | Expr::Pair(a, b) | Expr::App(a, b) => {
                a.collect_free(acc);
                b.collect_free(acc);
            }
            Expr::Sigma { dom, cod } | Expr::Pi { dom, cod } => {
                dom.collect_free(acc);
                cod.collect_free(acc);
            }
            Expr::Lam { dom, body } => {
                dom.collect_free(acc);
                body.collect_free(acc);
            }
            Expr::Refl(e) | Expr::Proj1(e) | Expr::Proj2(e) => e.collect_free(acc),
            Expr::Unit | Expr::Star | Expr::Const(_) | Expr::BVar(_) => {}
        }
    }

    /// True when every bound variable points at an actual enclosing binder
    /// (given `depth` binders already in scope).
    pub fn well_scoped(&self, depth: usize) -> bool {
        match self {
            Expr::BVar(i) => *i < depth,
            Expr::FVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => true,
            Expr::TypeApp { args, .. } => args.assigns.iter().all(|(_, t)| t.well_scoped(depth)),
            Expr::Id(a, b) | Expr::Pair(a, b) | Expr::App(a, b) => {
                a.well_scoped(depth) && b.well_scoped(depth)
            }
            Expr::Sigma { dom, cod } | Expr::Pi { dom, cod } => {
                dom.well_scoped(depth) && cod.well_scoped(depth + 1)
            }
            Expr::Lam { dom, body } => dom.well_scoped(depth) && body.well_scoped(depth + 1),
            Expr::Refl(e) | Expr::Proj1(e) | Expr::Proj2(e) => e.well_scoped(depth),
        }
    }

    /// An expression with no dangling bound variables.
    pub fn is_locally_closed(&self) -> bool {
        self.well_scoped(0)
    }

    /// Shift bound variables `>= cutoff` by `delta` (used by the rewriter,
    /// which traverses under binders without opening them).
    pub fn shift(&self, delta: isize, cutoff: usize) -> Expr {
        self.map_bvars(&mut |i, c| {
            if i >= c {
                Expr::BVar((i as isize + delta) as usize)
            } else {
                Expr::BVar(i)
            }
        }, cutoff)
    }

    fn map_bvars(&self, f: &mut impl FnMut(usize, usize) -> Expr, cutoff: usize) -> Expr {
        match self {
            Expr::BVar(i) => f(*i, cutoff),
            Expr::FVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => self.clone(),
            Expr::TypeApp { head, args } => Expr::TypeApp {
                head: head.clone(),
                args: Subst {
                    assigns: args
                        .assigns
                        .iter()
                        .map(|(x, t)| (x.clone(), t.map_bvars(f, cutoff)))
                        .collect(),
                },
            },
            Expr::Id(a, b) => Expr::id(a.map_bvars(f, cutoff), b.map_bvars(f, cutoff)),
            Expr::Pair(a, b) => Expr::pair(a.map_bvars(f, cutoff), b.map_bvars(f, cutoff)),
            Expr::App(a, b) => Expr::app(a.map_bvars(f, cutoff), b.map_bvars(f, cutoff)),
            Expr::Sigma { dom, cod } => {
                Expr::sigma(dom.map_bvars(f, cutoff), cod.map_bvars(f, cutoff + 1))
            }
            Expr::Pi { dom, cod } => {
                Expr::pi(dom.map_bvars(f, cutoff), cod.map_bvars(f, cutoff + 1))
            }
            Expr::Lam { dom, body } => {
                Expr::lam(dom.map_bvars(f, cutoff), body.map_bvars(f, cutoff + 1))
            }
            Expr::Refl(e) => Expr::refl(e.map_bvars(f, cutoff)),
            Expr::Proj1(e) => Expr::proj1(e.map_bvars(f, cutoff)),
            Expr::Proj2(e) => Expr::proj2(e.map_bvars(f, cutoff)),
        }
    }

    /// Replace the binder variable of a body (`BVar(0)` at the outermost
    /// level) with `arg`. `arg` may itself contain bound variables; they are
    /// shifted appropriately, so this is the general beta instantiation.
    pub fn instantiate(&self, arg: &Expr) -> Expr {
        self.subst_bvar(0, arg)
    }

    fn subst_bvar(&self, j: usize, arg: &Expr) -> Expr {
        match self {
            Expr::BVar(i) => {
                if *i == j {
                    arg.shift(j as isize, 0)
                } else if *i > j {
                    Expr::BVar(i - 1)
                } else {
                    Expr::BVar(*i)
                }
            }
            Expr::FVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => self.clone(),
            Expr::TypeApp { head, args } => Expr::TypeApp {
                head: head.clone(),
                args: Subst {
                    assigns: args
                        .assigns
                        .iter()
                        .map(|(x, t)| (x.clone(), t.subst_bvar(j, arg)))
                        .collect(),
                },
            },
            Expr::Id(a, b) => Expr::id(a.subst_bvar(j, arg), b.subst_bvar(j, arg)),
            Expr::Pair(a, b) => Expr::pair(a.subst_bvar(j, arg), b.subst_bvar(j, arg)),
            Expr::App(a, b) => Expr::app(a.subst_bvar(j, arg), b.subst_bvar(j, arg)),
            Expr::Sigma { dom, cod } => {
                Expr::sigma(dom.subst_bvar(j, arg), cod.subst_bvar(j + 1, arg))
            }
            Expr::Pi { dom, cod } => Expr::pi(dom.subst_bvar(j, arg), cod.subst_bvar(j + 1, arg)),
            Expr::Lam { dom, body } => {
                Expr::lam(dom.subst_bvar(j, arg), body.subst_bvar(j + 1, arg))
            }
            Expr::Refl(e) => Expr::refl(e.subst_bvar(j, arg)),
            Expr::Proj1(e) => Expr::proj1(e.subst_bvar(j, arg)),
            Expr::Proj2(e) => Expr::proj2(e.subst_bvar(j, arg)),
        }
    }

    /// Open a binder body with a named variable.
    pub fn open_with(&self, name: &str) -> Expr {
        self.instantiate(&Expr::FVar(name.to_string()))
    }

    /// Abstract a named variable back into a binder body (inverse of
    /// `open_with` for names not already bound).
    pub fn close(&self, name: &str) -> Expr {
        self.close_at(name, 0)
    }

    fn close_at(&self, name: &str, depth: usize) -> Expr {
        match self {
            Expr::FVar(x) if x == name => Expr::BVar(depth),
            Expr::FVar(_) | Expr::BVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => {
                self.clone()
            }
            Expr::TypeApp { head, args } => Expr::TypeApp {
                head: head.clone(),
                args: Subst {
                    assigns: args
                        .assigns
                        .iter()
                        .map(|(x, t)| (x.clone(), t.close_at(name, depth)))
                        .collect(),
                },
            },
            Expr::Id(a, b) => Expr::id(a.close_at(name, depth), b.close_at(name, depth)),
            Expr::Pair(a, b) => Expr::pair(a.close_at(name, depth), b.close_at(name, depth)),
            Expr::App(a, b) => Expr::app(a.close_at(name, depth), b.close_at(name, depth)),
            Expr::Sigma { dom, cod } => {
                Expr::sigma(dom.close_at(name, depth), cod.close_at(name, depth + 1))
            }
            Expr::Pi { dom, cod } => {
                Expr::pi(dom.close_at(name, depth), cod.close_at(name, depth + 1))
            }
            Expr::Lam { dom, body } => {
                Expr::lam(dom.close_at(name, depth), body.close_at(name, depth + 1))
            }
            Expr::Refl(e) => Expr::refl(e.close_at(name, depth)),
            Expr::Proj1(e) => Expr::proj1(e.close_at(name, depth)),
            Expr::Proj2(e) => Expr::proj2(e.close_at(name, depth)),
        }
    }
}

impl Context {
    pub fn lookup(&self, name: &str) -> Option<&Expr> {
        self.decls
            .iter()
            .find_map(|(x, t)| if x == name { Some(t) } else { None })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.decls.iter().any(|(x, _)| x == name)
    }

    pub fn extended(&self, name: &str, ty: Expr) -> Context {
        let mut decls = self.decls.clone();
        decls.push((name.to_string(), ty));
        Context { decls }
    }

    pub fn len(&self) -> usize {
        self.decls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }
}

impl Subst {
    pub fn lookup(&self, name: &str) -> Option<&Expr> {
        self.assigns
            .iter()
            .find_map(|(x, t)| if x == name { Some(t) } else { None })
    }
}

/// Canonical, fully parenthesized printer. Binders print as `v0`, `v1`, …
/// by nesting depth, so alpha-equivalent expressions print identically;
/// parsing the output against the same scope yields the input expression.
pub fn print_expr(e: &Expr) -> String {
    // Free variables named like our generated binder names would shadow
    // them; start numbering above any such name.
    let base = e
        .free_vars()
        .iter()
        .filter_map(|v| {
            v.strip_prefix('v')
                .and_then(|d| if d.is_empty() { None } else { d.parse::<usize>().ok() })
                .map(|n| n + 1)
        })
        .max()
        .unwrap_or(0);
    let mut names: Vec<String> = Vec::new();
    print_rec(e, base, &mut names)
}

fn print_rec(e: &Expr, base: usize, names: &mut Vec<String>) -> String {
    match e {
        Expr::TypeApp { head, args } => {
            let parts: Vec<String> = args
                .assigns
                .iter()
                .map(|(_, t)| print_rec(t, base, names))
                .collect();
            format!("{}({})", head, parts.join(", "))
        }
        Expr::Unit => "Unit".to_string(),
        Expr::Id(a, b) => format!(
            "Id({}, {})",
            print_rec(a, base, names),
            print_rec(b, base, names)
        ),
        Expr::Sigma { dom, cod } => {
            let d = print_rec(dom, base, names);
            let v = format!("v{}", base + names.len());
            names.push(v.clone());
            let c = print_rec(cod, base, names);
            names.pop();
            format!("(Sig {} : {} . {})", v, d, c)
        }
        Expr::Pi { dom, cod } => {
            let d = print_rec(dom, base, names);
            let v = format!("v{}", base + names.len());
            names.push(v.clone());
            let c = print_rec(cod, base, names);
            names.pop();
            format!("(Pi {} : {} . {})", v, d, c)
        }
        Expr::Const(c) => format!("({})", c),
        Expr::FVar(x) => x.clone(),
        Expr::BVar(i) => {
            // Out-of-scope indices only arise when printing open fragments
            // in diagnostics; render them recognizably.
            if *i < names.len() {
                names[names.len() - 1 - i].clone()
            } else {
                format!("?b{}", i)
            }
        }
        Expr::Star => "(star)".to_string(),
        Expr::Refl(t) => format!("refl({})", print_rec(t, base, names)),
        Expr::Pair(a, b) => format!(
            "pair({}, {})",
            print_rec(a, base, names),
            print_rec(b, base, names)
        ),
        Expr::Proj1(t) => format!("(proj1 {})", print_rec(t, base, names)),
        Expr::Proj2(t) => format!("(proj2 {})", print_rec(t, base, names)),
        Expr::Lam { dom, body } => {
            let d = print_rec(dom, base, names);
            let v = format!("v{}", base + names.len());
            names.push(v.clone());
            let b = print_rec(body, base, names);
            names.pop();
            format!("(fun {} : {} => {})", v, d, b)
        }
        Expr::App(f, s) => format!(
            "({} {})",
            print_rec(f, base, names),
            print_rec(s, base, names)
        ),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_expr(self))
    }
}

pub fn print_context(ctx: &Context) -> String {
    ctx.decls
        .iter()
        .map(|(x, t)| format!("{} : {}", x, print_expr(t)))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn print_subst(gamma: &Subst) -> String {
    gamma
        .assigns
        .iter()
        .map(|(x, t)| format!("{} := {}", x, print_expr(t)))
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_context(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lam_prints_with_canonical_binder_name() {
        // Two alpha-variants built nameless are literally equal and print
        // the same.
        let e = Expr::lam(Expr::Unit, Expr::BVar(0));
        assert_eq!(print_expr(&e), "(fun v0 : Unit => v0)");
    }

    #[test]
    fn golden_parenthesization() {
        let e = Expr::id(
            Expr::cnst("c"),
            Expr::app(Expr::cnst("f"), Expr::Star),
        );
        assert_eq!(print_expr(&e), "Id((c), ((f) (star)))");
    }

    #[test]
    fn nested_binders_number_by_depth() {
        let e = Expr::lam(
            Expr::Unit,
            Expr::lam(Expr::Unit, Expr::app(Expr::BVar(1), Expr::BVar(0))),
        );
        assert_eq!(
            print_expr(&e),
            "(fun v0 : Unit => (fun v1 : Unit => (v0 v1)))"
        );
    }

    #[test]
    fn binder_names_avoid_free_variable_collisions() {
        let e = Expr::lam(Expr::Unit, Expr::app(Expr::BVar(0), Expr::fvar("v0")));
        assert_eq!(print_expr(&e), "(fun v1 : Unit => (v1 v0))");
    }

    #[test]
    fn instantiate_shifts_open_arguments() {
        // (fun x => fun y => x applied-to-BVar-from-outside) exercising shift:
        // body = BVar(1), instantiate with an argument mentioning BVar(0).
        let body = Expr::lam(Expr::Unit, Expr::BVar(1));
        let arg = Expr::BVar(0);
        let out = body.instantiate(&arg);
        // The argument must be shifted under the remaining binder.
        assert_eq!(out, Expr::lam(Expr::Unit, Expr::BVar(1)));
    }

    #[test]
    fn open_close_roundtrip() {
        let body = Expr::app(Expr::BVar(0), Expr::fvar("y"));
        let opened = body.open_with("x");
        assert_eq!(opened, Expr::app(Expr::fvar("x"), Expr::fvar("y")));
        assert_eq!(opened.close("x"), body);
    }
}
