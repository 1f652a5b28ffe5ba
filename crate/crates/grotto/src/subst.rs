//! Application and composition of substitutions on types and terms.
//!
//! Substitution replaces named (context) variables by terms. Because bound
//! variables are nameless indices and substituted terms are locally closed,
//! replacement is purely homomorphic: no binder can capture a free variable
//! of a substituted term.

use crate::syntax::{Context, Expr, Subst};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SubstError {
    #[error("unbound variable `{0}` not assigned by the substitution")]
    Unbound(String),
}

/// Apply `gamma` to `e`. Every free variable of `e` must be assigned.
pub fn apply_subst(gamma: &Subst, e: &Expr) -> Result<Expr, SubstError> {
    match e {
        Expr::FVar(x) => gamma
            .lookup(x)
            .cloned()
            .ok_or_else(|| SubstError::Unbound(x.clone())),
        Expr::BVar(_) | Expr::Const(_) | Expr::Unit | Expr::Star => Ok(e.clone()),
        Expr::TypeApp { head, args } => Ok(Expr::TypeApp {
            head: head.clone(),
            // `a(δ)` under γ becomes `a(δ;γ)`: apply γ to each argument term.
            args: compose_subst(args, gamma)?,
        }),
        Expr::Id(a, b) => Ok(Expr::id(apply_subst(gamma, a)?, apply_subst(gamma, b)?)),
        Expr::Pair(a, b) => Ok(Expr::pair(apply_subst(gamma, a)?, apply_subst(gamma, b)?)),
        Expr::App(a, b) => Ok(Expr::app(apply_subst(gamma, a)?, apply_subst(gamma, b)?)),
        Expr::Sigma { dom, cod } => Ok(Expr::sigma(
            apply_subst(gamma, dom)?,
            apply_subst(gamma, cod)?,
        )),
        Expr::Pi { dom, cod } => Ok(Expr::pi(
            apply_subst(gamma, dom)?,
            apply_subst(gamma, cod)?,
        )),
        Expr::Lam { dom, body } => Ok(Expr::lam(
            apply_subst(gamma, dom)?,
            apply_subst(gamma, body)?,
        )),
        Expr::Refl(t) => Ok(Expr::refl(apply_subst(gamma, t)?)),
        Expr::Proj1(t) => Ok(Expr::proj1(apply_subst(gamma, t)?)),
        Expr::Proj2(t) => Ok(Expr::proj2(apply_subst(gamma, t)?)),
    }
}

/// Compose substitutions: the result assigns `x := gamma̅(delta(x))` for each
/// assignment of `delta`, preserving order.
pub fn compose_subst(delta: &Subst, gamma: &Subst) -> Result<Subst, SubstError> {
    let mut assigns = Vec::with_capacity(delta.assigns.len());
    for (x, t) in &delta.assigns {
        assigns.push((x.clone(), apply_subst(gamma, t)?));
    }
    Ok(Subst { assigns })
}

/// The identity substitution of a context: `x := x` for each declared
/// variable, in order.
pub fn id_subst(ctx: &Context) -> Subst {
    Subst {
        assigns: ctx
            .decls
            .iter()
            .map(|(x, _)| (x.clone(), Expr::FVar(x.clone())))
            .collect(),
    }
}

/// Substitute a single variable: `e[x := s]`, which is application of the
/// identity substitution extended with `x := s`.
pub fn subst_one(ctx: &Context, x: &str, s: &Expr, e: &Expr) -> Result<Expr, SubstError> {
    let mut gamma = id_subst(ctx);
    gamma.assigns.push((x.to_string(), s.clone()));
    apply_subst(&gamma, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::Subst;

    fn s(pairs: &[(&str, Expr)]) -> Subst {
        Subst {
            assigns: pairs
                .iter()
                .map(|(x, t)| (x.to_string(), t.clone()))
                .collect(),
        }
    }

    #[test]
    fn single_point_substitution() {
        let gamma = s(&[("x", Expr::cnst("c"))]);
        assert_eq!(
            apply_subst(&gamma, &Expr::fvar("x")).unwrap(),
            Expr::cnst("c")
        );
    }

    #[test]
    fn type_application_arguments_compose() {
        // Mor(x, y) under [x := s, y := t] becomes Mor(s, t).
        let mor = Expr::TypeApp {
            head: "Mor".into(),
            args: s(&[("x", Expr::fvar("x")), ("y", Expr::fvar("y"))]),
        };
        let gamma = s(&[("x", Expr::cnst("s")), ("y", Expr::cnst("t"))]);
        assert_eq!(
            apply_subst(&gamma, &mor).unwrap(),
            Expr::TypeApp {
                head: "Mor".into(),
                args: s(&[("x", Expr::cnst("s")), ("y", Expr::cnst("t"))]),
            }
        );
    }

    #[test]
    fn binders_never_capture() {
        // gamma = [x := y], e = fun y:Unit => x. The nameless binder cannot
        // capture the substituted `y`.
        let gamma = s(&[("x", Expr::fvar("y"))]);
        let e = Expr::lam(Expr::Unit, Expr::fvar("x"));
        let out = apply_subst(&gamma, &e).unwrap();
        assert_eq!(out, Expr::lam(Expr::Unit, Expr::fvar("y")));
        // The free `y` is untouched by the binder: it is a named variable,
        // not an index.
        assert!(out.is_locally_closed());
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let gamma = s(&[("x", Expr::cnst("c"))]);
        assert_eq!(
            apply_subst(&gamma, &Expr::fvar("z")),
            Err(SubstError::Unbound("z".into()))
        );
    }

    #[test]
    fn compose_of_renaming_and_constant() {
        // delta = [x := y], gamma = [y := c]  =>  [x := c]
        let delta = s(&[("x", Expr::fvar("y"))]);
        let gamma = s(&[("y", Expr::cnst("c"))]);
        assert_eq!(
            compose_subst(&delta, &gamma).unwrap(),
            s(&[("x", Expr::cnst("c"))])
        );
    }

    #[test]
    fn constants_unaffected_by_composition() {
        let delta = s(&[("x", Expr::cnst("c"))]);
        let gamma = s(&[]);
        assert_eq!(
            compose_subst(&delta, &gamma).unwrap(),
            s(&[("x", Expr::cnst("c"))])
        );
    }

    #[test]
    fn id_subst_of_two_variables() {
        let ctx = Context {
            decls: vec![
                ("x".to_string(), Expr::Unit),
                ("y".to_string(), Expr::Unit),
            ],
        };
        assert_eq!(
            id_subst(&ctx),
            s(&[("x", Expr::fvar("x")), ("y", Expr::fvar("y"))])
        );
        assert_eq!(id_subst(&Context::default()), s(&[]));
    }
}
