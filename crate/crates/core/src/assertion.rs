//! `pred` assertions, their normalization into labeled calls/success
//! assertion conditions, and property classification by cacheability.
//!
//! A set of assertions `:- pred Head : Pre_i => Post_i.` for one predicate
//! normalizes into one calls condition over the disjunction of all
//! preconditions plus one success condition per assertion that has a
//! nontrivial postcondition. Conditions carry program-wide unique ids; each
//! evaluation at a call site mints a fresh labeled instance.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::parse::Ast;
use crate::program::{PredKey, Program, Template};
use crate::regtype::{StateId, TypeUniverse};
use crate::symbol::{SymbolId, SymbolTable};

/// A property literal over the head variables of an assertion.
#[derive(Debug, Clone, PartialEq)]
pub struct PropLit {
    pub name: SymbolId,
    pub args: Vec<Template>,
}

/// DNF formula: disjunction of conjunctions of prop literals. `true` is the
/// single empty conjunction; the empty disjunction is unsatisfiable.
pub type Conj = Vec<PropLit>;
pub type Dnf = Vec<Conj>;

pub fn dnf_is_true(f: &Dnf) -> bool {
    f.iter().any(|c| c.is_empty())
}

/// One `:- pred` assertion after formula normalization.
#[derive(Debug, Clone)]
pub struct PredAssertion {
    pub arity: u32,
    /// Print names of the head variables.
    pub head_vars: Vec<String>,
    pub pre: Dnf,
    pub post: Dnf,
    /// True when the source had no `=> Post` part (as opposed to `=> true`).
    pub post_absent: bool,
    pub line: u32,
}

/// Cacheability classes for prop literals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropClass {
    /// Non-monotonic under instantiation (`var/1`); never cached.
    Never,
    /// Atomic primitive tests; monotonic but cheaper to recompute than cache.
    Cheap(CheapTest),
    /// Groundness; monotonic and traversal-shaped, cached under a reserved
    /// pseudo type id.
    Ground,
    /// Membership in a compiled regular type instance.
    Regtype(StateId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheapTest {
    Int,
    Flt,
    Num,
    Atm,
    /// `term/1`: true of every term.
    Any,
}

impl PropClass {
    pub fn cacheable(&self) -> bool {
        matches!(self, PropClass::Ground | PropClass::Regtype(_))
    }
}

/// Kind discriminator for assertion conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondKind {
    Calls,
    Success,
}

/// Program-wide identifier of an assertion condition: `C_0` is the calls
/// condition, `C_i` (i >= 1) the i-th success condition of the predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CondId {
    pub pred: PredKey,
    pub index: u32,
}

/// A normalized assertion condition for one predicate.
#[derive(Debug, Clone)]
pub struct AssertionCondition {
    pub id: CondId,
    pub kind: CondKind,
    pub arity: u32,
    pub head_vars: Vec<String>,
    /// For calls: the disjunction of all preconditions. For success: the
    /// single (possibly disjunctive) precondition.
    pub pre: Dnf,
    /// Success only; empty for calls conditions.
    pub post: Dnf,
    /// Source line of the originating assertion (calls: first assertion).
    pub line: u32,
}

/// A labeled instance of a condition at one call site. Serial numbers are
/// unique across a whole engine run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AsrInstance {
    pub cond: CondId,
    pub serial: u64,
}

fn formula_to_dnf(
    ast: &Ast,
    head_map: &HashMap<String, u16>,
    symbols: &mut SymbolTable,
    line: u32,
) -> Result<Dnf> {
    match ast {
        Ast::Struct(op, args) if op == ";" && args.len() == 2 => {
            let mut left = formula_to_dnf(&args[0], head_map, symbols, line)?;
            let right = formula_to_dnf(&args[1], head_map, symbols, line)?;
            left.extend(right);
            Ok(left)
        }
        Ast::Struct(op, args) if op == "," && args.len() == 2 => {
            let left = formula_to_dnf(&args[0], head_map, symbols, line)?;
            let right = formula_to_dnf(&args[1], head_map, symbols, line)?;
            // Distribute: (A1 v A2) ^ (B1 v B2) = v_{i,j} (Ai ^ Bj)
            let mut out = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    let mut c = l.clone();
                    for lit in r {
                        if !c.contains(lit) {
                            c.push(lit.clone());
                        }
                    }
                    out.push(c);
                }
            }
            Ok(out)
        }
        Ast::Atom(a) if a == "true" => Ok(vec![Vec::new()]),
        Ast::Atom(name) | Ast::Struct(name, _) => {
            let args = match ast {
                Ast::Struct(_, args) => args.as_slice(),
                _ => &[],
            };
            let mut ts = Vec::with_capacity(args.len());
            for a in args {
                ts.push(prop_arg_template(a, head_map, symbols, line)?);
            }
            Ok(vec![vec![PropLit { name: symbols.intern(name), args: ts }]])
        }
        other => Err(Error::parse(line, format!("invalid assertion formula: {other:?}"))),
    }
}

fn prop_arg_template(
    ast: &Ast,
    head_map: &HashMap<String, u16>,
    symbols: &mut SymbolTable,
    line: u32,
) -> Result<Template> {
    Ok(match ast {
        Ast::Var(v) => match head_map.get(v) {
            Some(&slot) => Template::Var(slot),
            None => {
                return Err(Error::parse(
                    line,
                    format!("assertion variable {v} does not occur in the head"),
                ));
            }
        },
        Ast::Int(v) => Template::Int(*v),
        Ast::Float(v) => Template::Float(*v),
        Ast::Atom(a) => Template::Atom(symbols.intern(a)),
        Ast::Struct(f, args) => {
            let mut ts = Vec::with_capacity(args.len());
            for a in args {
                ts.push(prop_arg_template(a, head_map, symbols, line)?);
            }
            Template::Struct(symbols.intern(f), ts.into_boxed_slice())
        }
        Ast::VarCall(..) => {
            return Err(Error::parse(line, "unexpected term in assertion formula".to_string()));
        }
    })
}

/// Build one assertion from a `:- pred` directive.
pub fn build_assertion(
    head: &Ast,
    pre: Option<&Ast>,
    post: Option<&Ast>,
    line: u32,
    symbols: &mut SymbolTable,
) -> Result<(PredKey, PredAssertion)> {
    let (name, args) = match head {
        Ast::Atom(n) => (n.as_str(), &[][..]),
        Ast::Struct(n, args) => (n.as_str(), args.as_slice()),
        other => {
            return Err(Error::parse(line, format!("assertion head must be an atom: {other:?}")));
        }
    };
    let mut head_vars = Vec::with_capacity(args.len());
    let mut head_map = HashMap::new();
    for (i, a) in args.iter().enumerate() {
        match a {
            Ast::Var(v) if v != "_" && !head_map.contains_key(v) => {
                head_map.insert(v.clone(), i as u16);
                head_vars.push(v.clone());
            }
            _ => {
                return Err(Error::parse(
                    line,
                    "assertion head arguments must be distinct variables".to_string(),
                ));
            }
        }
    }
    // Absent `: Pre` means Pre = true; absent `=> Post` yields no success
    // condition downstream.
    let pre = match pre {
        Some(f) => formula_to_dnf(f, &head_map, symbols, line)?,
        None => vec![Vec::new()],
    };
    let post_absent = post.is_none();
    let post = match post {
        Some(f) => formula_to_dnf(f, &head_map, symbols, line)?,
        None => vec![Vec::new()],
    };
    let key = PredKey { name: symbols.intern(name), arity: args.len() as u32 };
    Ok((
        key,
        PredAssertion { arity: args.len() as u32, head_vars, pre, post, post_absent, line },
    ))
}

/// Normalize the assertions of one predicate into its condition set
/// `{C_0, C_1, ..., C_n}`. Returns an empty vector when the predicate has no
/// assertions. Success conditions with trivial postconditions are omitted.
pub fn normalize_assertions(key: PredKey, assertions: &[PredAssertion]) -> Vec<AssertionCondition> {
    if assertions.is_empty() {
        return Vec::new();
    }
    let head_vars = assertions[0].head_vars.clone();
    let arity = assertions[0].arity;
    let mut conditions = Vec::new();
    // C_0: calls(Head, v_j Pre_j), with duplicate conjunctions merged.
    let mut calls_pre: Dnf = Vec::new();
    for a in assertions {
        for conj in &a.pre {
            if !calls_pre.contains(conj) {
                calls_pre.push(conj.clone());
            }
        }
    }
    conditions.push(AssertionCondition {
        id: CondId { pred: key, index: 0 },
        kind: CondKind::Calls,
        arity,
        head_vars: head_vars.clone(),
        pre: calls_pre,
        post: Vec::new(),
        line: assertions[0].line,
    });
    // C_i: success(Head, Pre_i, Post_i) for assertions with nontrivial posts.
    for (i, a) in assertions.iter().enumerate() {
        if a.post_absent || dnf_is_true(&a.post) {
            continue;
        }
        conditions.push(AssertionCondition {
            id: CondId { pred: key, index: (i + 1) as u32 },
            kind: CondKind::Success,
            arity,
            head_vars: head_vars.clone(),
            pre: a.pre.clone(),
            post: a.post.clone(),
            line: a.line,
        });
    }
    // A trivially-true calls condition is itself omitted.
    if dnf_is_true(&conditions[0].pre) {
        conditions.remove(0);
    }
    conditions
}

/// Classify a prop literal. User regtypes resolve through the compiled type
/// universe; the first argument is the checked term and the remaining
/// arguments must be concrete type expressions.
pub fn classify_prop(
    lit: &PropLit,
    program: &Program,
    universe: &mut TypeUniverse,
) -> Result<PropClass> {
    let name = program.symbols.name(lit.name);
    match (name, lit.args.len()) {
        ("var", 1) => Ok(PropClass::Never),
        ("int", 1) => Ok(PropClass::Cheap(CheapTest::Int)),
        ("flt", 1) => Ok(PropClass::Cheap(CheapTest::Flt)),
        ("num", 1) => Ok(PropClass::Cheap(CheapTest::Num)),
        ("atm", 1) => Ok(PropClass::Cheap(CheapTest::Atm)),
        ("term", 1) => Ok(PropClass::Cheap(CheapTest::Any)),
        ("ground", 1) => Ok(PropClass::Ground),
        _ => {
            let key = PredKey { name: lit.name, arity: lit.args.len() as u32 };
            let is_regtype = program.predicate(key).map(|d| d.is_regtype).unwrap_or(false);
            if !is_regtype {
                return Err(Error::definition(format!(
                    "undeclared property {}/{} in assertion",
                    name,
                    lit.args.len()
                )));
            }
            let state = universe.instantiate_prop(key, &lit.args[1..], program)?;
            Ok(PropClass::Regtype(state))
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

pub fn render_dnf(f: &Dnf, names: &[String], symbols: &SymbolTable) -> String {
    if dnf_is_true(f) {
        return "true".to_string();
    }
    let conjs: Vec<String> = f
        .iter()
        .map(|c| {
            let lits: Vec<String> = c
                .iter()
                .map(|l|

                    {
                        let t = Template::Struct(l.name, l.args.clone().into_boxed_slice());
                        if l.args.is_empty() {
                            symbols.name(l.name).to_string()
                        } else {
                            crate::program::render_template(&t, names, symbols)
                        }
                    })
                .collect();
            if lits.len() == 1 {
                lits[0].clone()
            } else {
                format!("({})", lits.join(", "))
            }
        })
        .collect();
    if conjs.len() == 1 {
        conjs[0].clone()
    } else {
        format!("({})", conjs.join(" ; "))
    }
}

pub fn render_assertion(pred: &str, a: &PredAssertion, symbols: &SymbolTable) -> String {
    let head = if a.arity == 0 {
        pred.to_string()
    } else {
        format!("{}({})", pred, a.head_vars.join(","))
    };
    let mut out = format!(":- pred {head}");
    if !dnf_is_true(&a.pre) {
        out.push_str(&format!(" : {}", render_dnf(&a.pre, &a.head_vars, symbols)));
    }
    if !a.post_absent {
        out.push_str(&format!(" => {}", render_dnf(&a.post, &a.head_vars, symbols)));
    }
    out.push('.');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_source;
    use crate::program::build_program;

    pub(crate) const EXAMPLE1: &str = "\
:- pred p(X,Y) : (int(X), var(Y)) => (int(X), int(Y)).
:- pred p(X,Y) : (int(X), var(Y)) => (int(X), atm(Y)).
:- pred p(X,Y) : (atm(X), var(Y)) => (atm(X), atm(Y)).

p(1,42).  p(2,gamma).  p(a,alpha).
";

    fn conditions_for(src: &str, pred: &str, arity: u32) -> Vec<AssertionCondition> {
        let p = build_program(&parse_source(src).unwrap()).unwrap();
        let key = PredKey { name: p.symbols.lookup(pred).unwrap(), arity };
        let def = p.predicate(key).unwrap();
        normalize_assertions(key, &def.assertions)
    }

    #[test]
    fn example1_conditions() {
        // Three assertions normalize into C_0..C_3; verified by hand against
        // the calls/success construction rule.
        let conds = conditions_for(EXAMPLE1, "p", 2);
        assert_eq!(conds.len(), 4);
        assert_eq!(conds[0].kind, CondKind::Calls);
        // C_0 pre: two distinct conjunctions (A1 and A2 share one).
        assert_eq!(conds[0].pre.len(), 2);
        assert_eq!(conds[0].pre[0].len(), 2);
        for c in &conds[1..] {
            assert_eq!(c.kind, CondKind::Success);
            assert_eq!(c.pre.len(), 1);
            assert_eq!(c.post.len(), 1);
            assert_eq!(c.post[0].len(), 2);
        }
        // Labels are distinct.
        let ids: std::collections::HashSet<_> = conds.iter().map(|c| c.id).collect();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn no_assertions_empty_set() {
        let conds = conditions_for("q(1).", "q", 1);
        assert!(conds.is_empty());
    }

    #[test]
    fn calls_only_assertion() {
        // ":- pred q(X) : int(X)." gives only the calls condition; checked by
        // hand: Pre = int(X), no Post, so the success condition is trivial.
        let conds = conditions_for(":- pred q(X) : int(X).\nq(1).", "q", 1);
        assert_eq!(conds.len(), 1);
        assert_eq!(conds[0].kind, CondKind::Calls);
        assert_eq!(conds[0].pre.len(), 1);
        assert_eq!(conds[0].pre[0].len(), 1);
    }

    #[test]
    fn trivial_pre_means_true() {
        let conds = conditions_for(":- pred q(X) => int(X).\nq(1).", "q", 1);
        // Calls condition is trivially true and omitted; one success cond.
        assert_eq!(conds.len(), 1);
        assert_eq!(conds[0].kind, CondKind::Success);
        assert!(dnf_is_true(&conds[0].pre));
    }

    #[test]
    fn counts_bound_by_assertion_count() {
        // 1 calls condition, <= n success conditions.
        let src = "\
:- pred q(X) : int(X) => int(X).
:- pred q(X) : atm(X).
q(1).
";
        let conds = conditions_for(src, "q", 1);
        assert_eq!(conds.iter().filter(|c| c.kind == CondKind::Calls).count(), 1);
        assert!(conds.iter().filter(|c| c.kind == CondKind::Success).count() <= 2);
    }

    #[test]
    fn dnf_distribution() {
        let src = ":- pred q(X,Y) : ((int(X) ; atm(X)), var(Y)).\nq(1,_).";
        let conds = conditions_for(src, "q", 2);
        assert_eq!(conds[0].pre.len(), 2);
        assert!(conds[0].pre.iter().all(|c| c.len() == 2));
    }

    #[test]
    fn head_var_discipline() {
        let err = build_program(&parse_source(":- pred q(X) : int(Z).\nq(1).").unwrap());
        assert!(err.is_err());
        let err2 = build_program(&parse_source(":- pred q(f(X)).\nq(1).").unwrap());
        assert!(err2.is_err());
    }
}
