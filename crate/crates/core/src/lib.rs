//! Incremental learner for a CCG lexicon and word-order preferences from
//! utterance/logical-form pairs.
//!
//! The learner observes each training pair once, in corpus order. For every
//! pair it enumerates the set of CCG derivations connecting the utterance to
//! the logical form (running the combinators in reverse), scores each
//! derivation under five count-based Dirichlet-process distributions, and
//! adds fractional co-occurrence counts in proportion to each derivation's
//! posterior probability. After training, bare utterances can be parsed with
//! a beam-seeded CYK chart to recover the most probable meaning.
//!
//! The crate is `no_std`-compatible (requires `alloc`); everything involving
//! files, processes, and command lines lives in the companion `ccglearn`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod corpus;
pub mod dist;
pub mod engine;
pub mod eval;
pub mod grammar;
pub mod infer;
pub mod lf;

mod math;

pub use dist::{BaseKind, DirichletProcess, Model};
pub use engine::{DerivationTree, ExampleReport, TrainConfig};
pub use grammar::{Atom, Category, RuleLabel};
pub use lf::{Marking, PosTag, SemType, ShellTerm, Term};
