//! grotto: a proof-checking kernel for extensional dependent type theory
//! (signatures, contexts, substitutions, Unit/Id/Sigma/Pi) together with a
//! finite Kripke-style semantics that interprets well-typed syntax as sets
//! indexed over finite posets, plus a harness that machine-checks the
//! coherence, substitution, and soundness laws on small instances.

pub mod harness;
pub mod indexed;
pub mod interp;
pub mod kernel;
pub mod lcc;
pub mod subst;
pub mod syntax;
