//! Run-time contract checking for a small logic-programming language, with
//! memoized regular-type checks.
//!
//! The crate provides:
//!
//! - Herbrand terms, a trail-based binding store and unification ([`term`]);
//! - a parser and program representation with normalized clause heads
//!   ([`parse`], [`program`]);
//! - `pred` assertions normalized into labeled calls/success conditions
//!   ([`assertion`]);
//! - regular types compiled into deterministic top-down tree automata
//!   ([`regtype`]);
//! - a bounded memo cache of verified `(node, type)` facts with LRU and
//!   direct-mapped replacement ([`cache`]);
//! - the wrapper transformation with reified, shared, bitwise-evaluated
//!   check formulas ([`transform`]);
//! - the interpreter with assertion checking, the error set and the cached
//!   regular-type checker ([`engine`]);
//! - the benchmark suite and measurement harness ([`bench`]).

pub mod assertion;
pub mod bench;
pub mod cache;
pub mod engine;
pub mod error;
pub mod parse;
pub mod program;
pub mod regtype;
pub mod symbol;
pub mod term;
pub mod transform;

pub use assertion::{AsrInstance, CondId, CondKind, PropClass};
pub use cache::{CacheConfig, CacheStats, CheckCache, InvalidationMode, Policy};
pub use engine::{
    load_program, solve, Answer, CheckedProgram, ConditionMode, Engine, ErrorMode, SolveOptions,
    SolveOutcome, Violation,
};
pub use error::{Error, Result};
pub use program::{PredKey, Program};
pub use regtype::{brute_force_recognize, StateId, TypeUniverse};
pub use symbol::{SymbolId, SymbolTable};
pub use term::{Epoch, Store, TermId};
