//! Static analysis of conjunctive queries under tgds and egds.
//!
//! The crate covers the whole pipeline: a small Datalog-style text format,
//! hypergraph acyclicity and join trees, the chase, syntactic classification
//! of dependency sets, containment (by chase and by UCQ rewriting), the
//! semantic-acyclicity decision procedure with its small-witness bounds,
//! acyclic approximations, and evaluation (naive, Yannakakis, and the
//! existential 1-cover game).
//!
//! ```
//! use semacyc::parser::parse_program;
//! use semacyc::semacyc::{decide_semacyc, SemAcOptions};
//!
//! let prog = parse_program(
//!     "Interest(X,Z), Class(Y,Z) -> Owns(X,Y).
//!      q(X,Y) :- Interest(X,Z), Class(Y,Z), Owns(X,Y).",
//! )
//! .unwrap();
//! let q = prog.cq("q").unwrap();
//! let answer = decide_semacyc(&q, &prog.deps, &SemAcOptions::default()).unwrap();
//! assert!(answer.is_yes());
//! ```

pub mod acyclicity;
pub mod chase;
pub mod classify;
pub mod containment;
pub mod eval;
pub mod model;
pub mod parser;
pub mod semacyc;

pub use model::{Atom, Cq, DependencySet, Egd, Instance, Name, Term, Tgd, Ucq};
