//! Recursive-descent parser for theory files, with elaboration of named
//! surface syntax into the nameless internal representation.

use super::lex::{lex, Pos, Tok, Token};
use super::{Context, Decl, Expr, Goal, Signature, Subst, TheoryFile};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    fn at(pos: Pos, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: pos.line,
            col: pos.col,
            msg: msg.into(),
        }
    }
}

/// Named surface expression, before scope resolution.
#[derive(Clone, Debug)]
enum SExpr {
    Name(String, Pos),
    Call(String, Vec<SExpr>, Pos),
    Unit,
    Star,
    Id(Box<SExpr>, Box<SExpr>),
    Refl(Box<SExpr>),
    Pair(Box<SExpr>, Box<SExpr>),
    Proj1(Box<SExpr>),
    Proj2(Box<SExpr>),
    Sig(String, Box<SExpr>, Box<SExpr>),
    Pi(String, Box<SExpr>, Box<SExpr>),
    Fun(String, Box<SExpr>, Box<SExpr>),
    App(Box<SExpr>, Box<SExpr>),
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
    /// Type constants in scope. `IDENT(args)` is type-application syntax
    /// only for these; any other identifier followed by `(` is a term head
    /// juxtaposed with a parenthesized expression.
    type_consts: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ParseError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::at(
                self.pos(),
                format!("expected {}, found {}", want.describe(), self.peek().describe()),
            ))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Ident(s) => Ok((s, pos)),
            other => Err(ParseError::at(
                pos,
                format!("expected identifier, found {}", other.describe()),
            )),
        }
    }

    fn starts_primary(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Ident(_) | Tok::LParen | Tok::Unit | Tok::Star | Tok::Id | Tok::Refl | Tok::Pair
        )
    }

    fn expr(&mut self) -> Result<SExpr, ParseError> {
        match self.peek() {
            Tok::Sig | Tok::Pi | Tok::Fun => {
                let binder = self.bump();
                let (name, _) = self.expect_ident()?;
                self.expect(&Tok::Colon)?;
                let dom = self.expr_no_binder_body()?;
                match binder {
                    Tok::Sig | Tok::Pi => self.expect(&Tok::Dot)?,
                    Tok::Fun => self.expect(&Tok::FatArrow)?,
                    _ => unreachable!(),
                }
                let body = self.expr()?;
                Ok(match binder {
                    Tok::Sig => SExpr::Sig(name, Box::new(dom), Box::new(body)),
                    Tok::Pi => SExpr::Pi(name, Box::new(dom), Box::new(body)),
                    Tok::Fun => SExpr::Fun(name, Box::new(dom), Box::new(body)),
                    _ => unreachable!(),
                })
            }
            _ => self.app(),
        }
    }

    /// Binder domains: an application chain, stopping before `.` / `=>`.
    fn expr_no_binder_body(&mut self) -> Result<SExpr, ParseError> {
        self.app()
    }

    fn app(&mut self) -> Result<SExpr, ParseError> {
        match self.peek() {
            Tok::Proj1 => {
                self.bump();
                Ok(SExpr::Proj1(Box::new(self.app()?)))
            }
            Tok::Proj2 => {
                self.bump();
                Ok(SExpr::Proj2(Box::new(self.app()?)))
            }
            _ => {
                let mut head = self.primary()?;
                while self.starts_primary() {
                    let arg = self.primary()?;
                    head = SExpr::App(Box::new(head), Box::new(arg));
                }
                Ok(head)
            }
        }
    }

    fn primary(&mut self) -> Result<SExpr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Unit => {
                self.bump();
                Ok(SExpr::Unit)
            }
            Tok::Star => {
                self.bump();
                Ok(SExpr::Star)
            }
            Tok::Id => {
                self.bump();
                self.expect(&Tok::LParen)?;
                let a = self.expr()?;
                self.expect(&Tok::Comma)?;
                let b = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(SExpr::Id(Box::new(a), Box::new(b)))
            }
            Tok::Refl => {
                self.bump();
                self.expect(&Tok::LParen)?;
                let a = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(SExpr::Refl(Box::new(a)))
            }
            Tok::Pair => {
                self.bump();
                self.expect(&Tok::LParen)?;
                let a = self.expr()?;
                self.expect(&Tok::Comma)?;
                let b = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(SExpr::Pair(Box::new(a), Box::new(b)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                // `IDENT(…)` is type application for declared type
                // constants. `IDENT()` with an unknown head also parses as
                // one (an empty parenthesis is never an expression), so the
                // elaborator can report the unbound name.
                let call_syntax = self.peek() == &Tok::LParen
                    && (self.type_consts.contains(&name)
                        || self.toks[self.at + 1].tok == Tok::RParen);
                if call_syntax {
                    self.bump();
                    let mut args = Vec::new();
                    if self.peek() != &Tok::RParen {
                        args.push(self.expr()?);
                        while self.peek() == &Tok::Comma {
                            self.bump();
                            args.push(self.expr()?);
                        }
                    }
                    self.expect(&Tok::RParen)?;
                    Ok(SExpr::Call(name, args, pos))
                } else {
                    Ok(SExpr::Name(name, pos))
                }
            }
            other => Err(ParseError::at(
                pos,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    /// `IDENT : expr (, IDENT : expr)*` — used for declaration argument
    /// contexts and goal contexts.
    fn ctx_items(&mut self) -> Result<Vec<(String, Pos, SExpr)>, ParseError> {
        let mut items = Vec::new();
        loop {
            let (name, pos) = self.expect_ident()?;
            self.expect(&Tok::Colon)?;
            let ty = self.expr()?;
            items.push((name, pos, ty));
            if self.peek() == &Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok(items)
    }
}

/// Scope for elaborating a surface expression into the nameless core.
struct Scope<'a> {
    sig: &'a Signature,
    frees: &'a [String],
    bound: Vec<String>,
}

impl<'a> Scope<'a> {
    fn elab(&mut self, e: &SExpr) -> Result<Expr, ParseError> {
        match e {
            SExpr::Unit => Ok(Expr::Unit),
            SExpr::Star => Ok(Expr::Star),
            SExpr::Id(a, b) => Ok(Expr::id(self.elab(a)?, self.elab(b)?)),
            SExpr::Refl(a) => Ok(Expr::refl(self.elab(a)?)),
            SExpr::Pair(a, b) => Ok(Expr::pair(self.elab(a)?, self.elab(b)?)),
            SExpr::Proj1(a) => Ok(Expr::proj1(self.elab(a)?)),
            SExpr::Proj2(a) => Ok(Expr::proj2(self.elab(a)?)),
            SExpr::App(f, s) => Ok(Expr::app(self.elab(f)?, self.elab(s)?)),
            SExpr::Sig(x, dom, cod) => {
                let d = self.elab(dom)?;
                self.bound.push(x.clone());
                let c = self.elab(cod)?;
                self.bound.pop();
                Ok(Expr::sigma(d, c))
            }
            SExpr::Pi(x, dom, cod) => {
                let d = self.elab(dom)?;
                self.bound.push(x.clone());
                let c = self.elab(cod)?;
                self.bound.pop();
                Ok(Expr::pi(d, c))
            }
            SExpr::Fun(x, dom, body) => {
                let d = self.elab(dom)?;
                self.bound.push(x.clone());
                let b = self.elab(body)?;
                self.bound.pop();
                Ok(Expr::lam(d, b))
            }
            SExpr::Name(x, pos) => self.resolve_name(x, *pos),
            SExpr::Call(name, args, pos) => {
                if let Some(arg_ctx) = self.sig.type_decl(name) {
                    if args.len() != arg_ctx.len() {
                        return Err(ParseError::at(
                            *pos,
                            format!(
                                "type constant `{}` expects {} argument(s), got {}",
                                name,
                                arg_ctx.len(),
                                args.len()
                            ),
                        ));
                    }
                    let mut assigns = Vec::new();
                    for ((var, _), arg) in arg_ctx.decls.iter().zip(args) {
                        assigns.push((var.clone(), self.elab(arg)?));
                    }
                    Ok(Expr::TypeApp {
                        head: name.clone(),
                        args: Subst { assigns },
                    })
                } else {
                    // Term-level head applied to parenthesized arguments:
                    // plain left-associated application.
                    let mut acc = self.resolve_name(name, *pos)?;
                    for arg in args {
                        acc = Expr::app(acc, self.elab(arg)?);
                    }
                    Ok(acc)
                }
            }
        }
    }

    fn resolve_name(&self, x: &str, pos: Pos) -> Result<Expr, ParseError> {
        if let Some(i) = self.bound.iter().rev().position(|b| b == x) {
            return Ok(Expr::BVar(i));
        }
        if self.frees.iter().any(|f| f == x) {
            return Ok(Expr::FVar(x.to_string()));
        }
        if self.sig.term_decl(x).is_some() {
            return Ok(Expr::Const(x.to_string()));
        }
        if self.sig.type_decl(x).is_some() {
            return Err(ParseError::at(
                pos,
                format!("type constant `{}` needs an argument list: `{}(...)`", x, x),
            ));
        }
        Err(ParseError::at(pos, format!("unbound name `{}`", x)))
    }
}

fn elab_context(
    sig: &Signature,
    items: &[(String, Pos, SExpr)],
) -> Result<Context, ParseError> {
    let mut ctx = Context::default();
    let mut frees: Vec<String> = Vec::new();
    for (name, pos, sty) in items {
        if ctx.contains(name) {
            return Err(ParseError::at(
                *pos,
                format!("duplicate variable `{}` in context", name),
            ));
        }
        let ty = Scope {
            sig,
            frees: &frees,
            bound: Vec::new(),
        }
        .elab(sty)?;
        ctx.decls.push((name.clone(), ty));
        frees.push(name.clone());
    }
    Ok(ctx)
}

/// Parse a full theory file: `theory NAME { decl* } goal*`.
pub fn parse_theory(text: &str) -> Result<TheoryFile, ParseError> {
    let toks = lex(text).map_err(|(pos, msg)| ParseError::at(pos, msg))?;
    let mut p = Parser {
        toks,
        at: 0,
        type_consts: BTreeSet::new(),
    };

    p.expect(&Tok::Theory)?;
    let (name, _) = p.expect_ident()?;
    p.expect(&Tok::LBrace)?;

    let mut sig = Signature::default();
    loop {
        match p.peek() {
            Tok::Type => {
                p.bump();
                let (tname, tpos) = p.expect_ident()?;
                if sig.type_decl(&tname).is_some() || sig.term_decl(&tname).is_some() {
                    return Err(ParseError::at(
                        tpos,
                        format!("duplicate declaration `{}`", tname),
                    ));
                }
                p.expect(&Tok::LParen)?;
                let arg_ctx = if p.peek() == &Tok::RParen {
                    Context::default()
                } else {
                    let items = p.ctx_items()?;
                    elab_context(&sig, &items)?
                };
                p.expect(&Tok::RParen)?;
                p.type_consts.insert(tname.clone());
                sig.decls.push(Decl::Type {
                    name: tname,
                    arg_ctx,
                });
            }
            Tok::Const => {
                p.bump();
                let (cname, cpos) = p.expect_ident()?;
                if sig.type_decl(&cname).is_some() || sig.term_decl(&cname).is_some() {
                    return Err(ParseError::at(
                        cpos,
                        format!("duplicate declaration `{}`", cname),
                    ));
                }
                p.expect(&Tok::Colon)?;
                let sty = p.expr()?;
                let ty = Scope {
                    sig: &sig,
                    frees: &[],
                    bound: Vec::new(),
                }
                .elab(&sty)?;
                sig.decls.push(Decl::Term { name: cname, ty });
            }
            Tok::Rewrite => {
                p.bump();
                let (rname, rpos) = p.expect_ident()?;
                if sig.term_decl(&rname).is_none() {
                    return Err(ParseError::at(
                        rpos,
                        format!("`rewrite {}` does not name a declared term constant", rname),
                    ));
                }
                sig.rewrites.insert(rname);
            }
            Tok::RBrace => {
                p.bump();
                break;
            }
            other => {
                return Err(ParseError::at(
                    p.pos(),
                    format!(
                        "expected a declaration (`type`, `const`, `rewrite`) or `}}`, found {}",
                        other.describe()
                    ),
                ));
            }
        }
    }

    let mut goals = Vec::new();
    loop {
        match p.peek() {
            Tok::Eof => break,
            Tok::Check => {
                p.bump();
                let ctx = parse_goal_ctx(&mut p, &sig)?;
                let ty = parse_goal_expr(&mut p, &sig, &ctx)?;
                p.expect(&Tok::Type)?;
                goals.push(Goal::CheckType { ctx, ty });
            }
            Tok::Infer => {
                p.bump();
                let ctx = parse_goal_ctx(&mut p, &sig)?;
                let term = parse_goal_expr(&mut p, &sig, &ctx)?;
                goals.push(Goal::Infer { ctx, term });
            }
            Tok::Equal => {
                p.bump();
                let ctx = parse_goal_ctx(&mut p, &sig)?;
                let lhs = parse_goal_expr(&mut p, &sig, &ctx)?;
                p.expect(&Tok::EqEq)?;
                let rhs = parse_goal_expr(&mut p, &sig, &ctx)?;
                let hint = if p.peek() == &Tok::By {
                    p.bump();
                    Some(parse_goal_expr(&mut p, &sig, &ctx)?)
                } else {
                    None
                };
                goals.push(Goal::CheckEqual {
                    ctx,
                    lhs,
                    rhs,
                    hint,
                });
            }
            Tok::Inhabit => {
                p.bump();
                let ctx = parse_goal_ctx(&mut p, &sig)?;
                let ty = parse_goal_expr(&mut p, &sig, &ctx)?;
                p.expect(&Tok::By)?;
                let witness = parse_goal_expr(&mut p, &sig, &ctx)?;
                goals.push(Goal::CheckInhabited { ctx, ty, witness });
            }
            other => {
                return Err(ParseError::at(
                    p.pos(),
                    format!(
                        "expected a goal (`check`, `infer`, `equal`, `inhabit`), found {}",
                        other.describe()
                    ),
                ));
            }
        }
    }

    Ok(TheoryFile {
        name,
        signature: sig,
        goals,
    })
}

fn parse_goal_ctx(p: &mut Parser, sig: &Signature) -> Result<Context, ParseError> {
    if p.peek() == &Tok::Turnstile {
        p.bump();
        Ok(Context::default())
    } else {
        let items = p.ctx_items()?;
        let ctx = elab_context(sig, &items)?;
        p.expect(&Tok::Turnstile)?;
        Ok(ctx)
    }
}

fn parse_goal_expr(p: &mut Parser, sig: &Signature, ctx: &Context) -> Result<Expr, ParseError> {
    let se = p.expr()?;
    let frees: Vec<String> = ctx.decls.iter().map(|(x, _)| x.clone()).collect();
    Scope {
        sig,
        frees: &frees,
        bound: Vec::new(),
    }
    .elab(&se)
}

fn sig_type_consts(sig: &Signature) -> BTreeSet<String> {
    sig.decls
        .iter()
        .filter_map(|d| match d {
            Decl::Type { name, .. } => Some(name.clone()),
            _ => None,
        })
        .collect()
}

/// Parse a bare expression against a signature and context (used by the CLI
/// and tests).
pub fn parse_expr_in(sig: &Signature, ctx: &Context, text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text).map_err(|(pos, msg)| ParseError::at(pos, msg))?;
    let mut p = Parser {
        toks,
        at: 0,
        type_consts: sig_type_consts(sig),
    };
    let se = p.expr()?;
    if p.peek() != &Tok::Eof {
        return Err(ParseError::at(
            p.pos(),
            format!("unexpected trailing {}", p.peek().describe()),
        ));
    }
    let frees: Vec<String> = ctx.decls.iter().map(|(x, _)| x.clone()).collect();
    Scope {
        sig,
        frees: &frees,
        bound: Vec::new(),
    }
    .elab(&se)
}

/// Parse a bare substitution like `x := c, y := d` against a signature and
/// the context its terms live over (used for replaying reports).
pub fn parse_subst(sig: &Signature, over: &Context, text: &str) -> Result<Subst, ParseError> {
    let toks = lex(text).map_err(|(pos, msg)| ParseError::at(pos, msg))?;
    let mut p = Parser {
        toks,
        at: 0,
        type_consts: sig_type_consts(sig),
    };
    let mut assigns = Vec::new();
    let frees: Vec<String> = over.decls.iter().map(|(x, _)| x.clone()).collect();
    if p.peek() != &Tok::Eof {
        loop {
            let (name, _) = p.expect_ident()?;
            p.expect(&Tok::ColonEq)?;
            let se = p.expr()?;
            let term = Scope {
                sig,
                frees: &frees,
                bound: Vec::new(),
            }
            .elab(&se)?;
            assigns.push((name, term));
            if p.peek() == &Tok::Comma {
                p.bump();
            } else {
                break;
            }
        }
    }
    if p.peek() != &Tok::Eof {
        return Err(ParseError::at(
            p.pos(),
            format!("unexpected trailing {}", p.peek().describe()),
        ));
    }
    Ok(Subst { assigns })
}

/// Parse a bare context like `x : Ob(), y : Ob()`; empty input is the empty
/// context.
pub fn parse_context(sig: &Signature, text: &str) -> Result<Context, ParseError> {
    let toks = lex(text).map_err(|(pos, msg)| ParseError::at(pos, msg))?;
    let mut p = Parser {
        toks,
        at: 0,
        type_consts: sig_type_consts(sig),
    };
    if p.peek() == &Tok::Eof {
        return Ok(Context::default());
    }
    let items = p.ctx_items()?;
    if p.peek() != &Tok::Eof {
        return Err(ParseError::at(
            p.pos(),
            format!("unexpected trailing {}", p.peek().describe()),
        ));
    }
    elab_context(sig, &items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::print_expr;

    #[test]
    fn smallest_nonempty_theory() {
        let th = parse_theory("theory T { type Ob() }").expect("parses");
        assert_eq!(th.name, "T");
        assert_eq!(th.signature.decls.len(), 1);
        match &th.signature.decls[0] {
            Decl::Type { name, arg_ctx } => {
                assert_eq!(name, "Ob");
                assert!(arg_ctx.is_empty());
            }
            other => panic!("expected a type declaration, got {:?}", other),
        }
    }

    #[test]
    fn category_theory_file_declares_everything() {
        let src = r#"
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
        let th = parse_theory(src).expect("parses");
        let names: Vec<&str> = th
            .signature
            .decls
            .iter()
            .map(Signature::decl_name)
            .collect();
        assert_eq!(
            names,
            vec!["Ob", "Mor", "id", "comp", "assoc", "neutr_r", "neutr_l"]
        );
    }

    #[test]
    fn duplicate_declaration_reports_position() {
        let err = parse_theory("theory T { type Ob() const c : Ob() const c : Ob() }")
            .expect_err("must fail");
        assert!(err.msg.contains("duplicate declaration `c`"), "{}", err);
        assert_eq!((err.line, err.col), (1, 43));
    }

    #[test]
    fn unbound_name_in_const_type() {
        let err = parse_theory("theory T { type Mor(x : Ob()) }").expect_err("must fail");
        assert!(err.msg.contains("unbound name `Ob`") || err.msg.contains("`Ob`"), "{}", err);
    }

    #[test]
    fn type_application_is_positional() {
        let th = parse_theory(
            "theory T { type Ob() type Mor(x : Ob(), y : Ob()) } check a : Ob(), b : Ob() |- Mor(b, a) type",
        )
        .expect("parses");
        match &th.goals[0] {
            Goal::CheckType { ty, .. } => match ty {
                Expr::TypeApp { head, args } => {
                    assert_eq!(head, "Mor");
                    assert_eq!(
                        args.assigns,
                        vec![
                            ("x".to_string(), Expr::fvar("b")),
                            ("y".to_string(), Expr::fvar("a")),
                        ]
                    );
                }
                other => panic!("expected type application, got {:?}", other),
            },
            other => panic!("expected check goal, got {:?}", other),
        }
    }

    #[test]
    fn parse_print_roundtrip_on_closed_expr() {
        let sig = Signature::default();
        let ctx = Context::default();
        let e = Expr::lam(
            Expr::Unit,
            Expr::lam(Expr::Unit, Expr::app(Expr::BVar(1), Expr::BVar(0))),
        );
        let printed = print_expr(&e);
        let back = parse_expr_in(&sig, &ctx, &printed).expect("reparses");
        assert_eq!(back, e);
    }

    #[test]
    fn application_is_left_associative() {
        let th = parse_theory(
            "theory T { type B() const f : Pi x : B() . Pi y : B() . B() const a : B() } infer |- f a a",
        )
        .expect("parses");
        match &th.goals[0] {
            Goal::Infer { term, .. } => {
                assert_eq!(
                    *term,
                    Expr::app(
                        Expr::app(Expr::cnst("f"), Expr::cnst("a")),
                        Expr::cnst("a")
                    )
                );
            }
            other => panic!("unexpected goal {:?}", other),
        }
    }

    #[test]
    fn rewrite_must_name_a_term_constant() {
        let err =
            parse_theory("theory T { type Ob() rewrite Ob }").expect_err("must fail");
        assert!(err.msg.contains("rewrite"), "{}", err);
    }
}
