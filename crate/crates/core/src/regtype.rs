//! Regular programs and their compilation into deterministic top-down tree
//! automata.
//!
//! A regular type `p/(n+1)` is defined by clauses `p(x, V1, ..., Vn) :- B1,
//! ..., Bk` where `x` is a linear term, heads of different clauses do not
//! unify, and every body literal constrains one term variable of `x` with a
//! regular type expression. Instances with concrete parameters compile to an
//! automaton state plus a constructor table; instances are memoized so the
//! same expression always yields the identical state.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::program::{GoalNode, PredKey, Program, Template};
use crate::symbol::{CtorKey, SymbolTable};
use crate::term::{Store, TermId, TermNode};

/// Dense automaton state id, also used as the type id in cache keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u32);

pub const STATE_ANY: StateId = StateId(0);
pub const STATE_INT: StateId = StateId(1);
pub const STATE_FLT: StateId = StateId(2);
pub const STATE_NUM: StateId = StateId(3);
pub const STATE_ATM: StateId = StateId(4);
/// Reserved pseudo-type for groundness checks.
pub const STATE_GROUND: StateId = StateId(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimClass {
    Any,
    Int,
    Flt,
    Num,
    Atm,
}

/// Constructor dispatch table of one state. Small tables use a linear scan;
/// larger ones a hash map.
#[derive(Debug, Clone)]
pub enum CtorTable {
    Small(Vec<(CtorKey, Box<[StateId]>)>),
    Large(HashMap<CtorKey, Box<[StateId]>>),
}

const SMALL_TABLE_MAX: usize = 8;

impl CtorTable {
    pub fn lookup(&self, key: &CtorKey) -> Option<&[StateId]> {
        match self {
            CtorTable::Small(v) => {
                v.iter().find(|(k, _)| k == key).map(|(_, s)| s.as_ref())
            }
            CtorTable::Large(m) => m.get(key).map(|s| s.as_ref()),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = (&CtorKey, &[StateId])> + '_> {
        match self {
            CtorTable::Small(v) => Box::new(v.iter().map(|(k, s)| (k, s.as_ref()))),
            CtorTable::Large(m) => Box::new(m.iter().map(|(k, s)| (k, s.as_ref()))),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            CtorTable::Small(v) => v.len(),
            CtorTable::Large(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub enum StateDef {
    Primitive(PrimClass),
    Ground,
    Table(CtorTable),
}

/// Constructors of a state, as exposed to checkers: either an explicit
/// transition table or an implicit primitive class rule.
pub enum Constructors<'a> {
    Primitive(PrimClass),
    Ground,
    Table(&'a CtorTable),
}

/// A concrete regular type expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeExpr {
    Prim(PrimClass),
    Ground,
    Instance(PredKey, Vec<TypeExpr>),
}

/// Type expression over the parameter variables of a regular clause.
#[derive(Debug, Clone, PartialEq)]
pub enum TypeExprT {
    Param(u16),
    Prim(PrimClass),
    Ground,
    Apply(PredKey, Vec<TypeExprT>),
}

/// One validated clause of a regular program.
#[derive(Debug, Clone)]
pub struct RegClause {
    /// The head term `x`, over the clause slot space.
    pub head_term: Template,
    /// Parameter indices: slot of V_i for i in 0..n.
    pub param_slots: Vec<u16>,
    /// Assigned type for each term variable of `x`.
    pub var_types: HashMap<u16, TypeExprT>,
    pub line: u32,
}

#[derive(Debug, Clone)]
pub struct RegularProgram {
    pub key: PredKey,
    pub clauses: Vec<RegClause>,
}

/// A violated regular-program constraint; names the constraint and the clause.
#[derive(Debug, Clone)]
pub struct RegViolation {
    pub constraint: &'static str,
    pub line: u32,
    pub detail: String,
}

impl std::fmt::Display for RegViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (clause at line {}): {}", self.constraint, self.line, self.detail)
    }
}

fn prim_of_name(name: &str) -> Option<PrimClass> {
    Some(match name {
        "int" => PrimClass::Int,
        "flt" => PrimClass::Flt,
        "num" => PrimClass::Num,
        "atm" => PrimClass::Atm,
        "term" => PrimClass::Any,
        _ => return None,
    })
}

pub fn is_builtin_prop_name(name: &str) -> bool {
    matches!(name, "int" | "flt" | "num" | "atm" | "term" | "var" | "ground")
}

fn flatten_literals<'a>(g: &'a GoalNode, out: &mut Vec<&'a GoalNode>) -> bool {
    match g {
        GoalNode::True => true,
        GoalNode::Conj(a, b) => flatten_literals(a, out) && flatten_literals(b, out),
        GoalNode::Call(_) | GoalNode::VarCall(..) => {
            out.push(g);
            true
        }
        _ => false,
    }
}

/// Check the shape constraints of a regular program: linear head terms,
/// distinct parameter variables, pairwise non-unifiable heads, and body
/// literals that each constrain a distinct term variable of the head.
pub fn validate_regular_program(
    program: &Program,
    key: PredKey,
) -> std::result::Result<RegularProgram, RegViolation> {
    let def = program.predicate(key).expect("regtype predicate exists");
    let nparams = key.arity as usize - 1;
    let mut clauses = Vec::new();
    for clause in &def.clauses {
        let line = clause.line;
        let head_term = clause.orig_head[0].clone();
        if matches!(head_term, Template::Var(_)) {
            return Err(RegViolation {
                constraint: "head term must not be a variable",
                line,
                detail: "first head argument is an unconstrained variable".into(),
            });
        }
        // Parameters: distinct variables, disjoint from the head-term vars.
        let mut param_slots = Vec::with_capacity(nparams);
        for i in 0..nparams {
            match &clause.orig_head[1 + i] {
                Template::Var(s) if !param_slots.contains(s) => param_slots.push(*s),
                _ => {
                    return Err(RegViolation {
                        constraint: "parametric variables must be distinct variables",
                        line,
                        detail: format!("head argument {}", i + 2),
                    });
                }
            }
        }
        // Linearity of x.
        let mut term_vars = Vec::new();
        let mut linear = true;
        head_term.visit_vars(&mut |v| {
            if term_vars.contains(&v) {
                linear = false;
            } else {
                term_vars.push(v);
            }
        });
        if !linear {
            return Err(RegViolation {
                constraint: "non-linear head",
                line,
                detail: "a variable occurs twice in the head term".into(),
            });
        }
        if term_vars.iter().any(|v| param_slots.contains(v)) {
            return Err(RegViolation {
                constraint: "parametric variable occurs in the head term",
                line,
                detail: String::new(),
            });
        }
        // Body literals.
        let mut lits = Vec::new();
        if !flatten_literals(&clause.body, &mut lits) {
            return Err(RegViolation {
                constraint: "body must be a conjunction of type literals",
                line,
                detail: "control constructs or non-literal goals present".into(),
            });
        }
        let mut var_types: HashMap<u16, TypeExprT> = HashMap::new();
        for lit in lits {
            let (z, texpr) = match lit {
                GoalNode::VarCall(slot, args) => {
                    if !param_slots.contains(slot) {
                        return Err(RegViolation {
                            constraint: "variable-headed literal must use a parametric variable",
                            line,
                            detail: String::new(),
                        });
                    }
                    let [Template::Var(z)] = args.as_ref() else {
                        return Err(RegViolation {
                            constraint: "parametric application must have one term-variable argument",
                            line,
                            detail: String::new(),
                        });
                    };
                    let pidx = param_slots.iter().position(|s| s == slot).unwrap() as u16;
                    (*z, TypeExprT::Param(pidx))
                }
                GoalNode::Call(Template::Struct(name, args)) => {
                    let Some(Template::Var(z)) = args.first() else {
                        return Err(RegViolation {
                            constraint: "body literal must apply to a term variable",
                            line,
                            detail: String::new(),
                        });
                    };
                    let mut texprs = Vec::new();
                    for a in &args[1..] {
                        texprs.push(type_expr_template(a, &param_slots, program, line)?);
                    }
                    let tname = program.symbols.name(*name);
                    let texpr = if args.len() == 1 {
                        if let Some(p) = prim_of_name(tname) {
                            TypeExprT::Prim(p)
                        } else if tname == "ground" {
                            TypeExprT::Ground
                        } else {
                            resolve_regtype_name(*name, 0, program, line)?
                        }
                    } else {
                        let k = PredKey { name: *name, arity: args.len() as u32 };
                        if program.predicate(k).map(|d| d.is_regtype).unwrap_or(false) {
                            TypeExprT::Apply(k, texprs)
                        } else {
                            return Err(RegViolation {
                                constraint: "body literal is not a declared regular type",
                                line,
                                detail: format!("{}/{}", tname, args.len()),
                            });
                        }
                    };
                    (*z, texpr)
                }
                _ => {
                    return Err(RegViolation {
                        constraint: "body literal is not a type literal",
                        line,
                        detail: String::new(),
                    });
                }
            };
            if !term_vars.contains(&z) {
                return Err(RegViolation {
                    constraint: "body literal must constrain a head term variable",
                    line,
                    detail: String::new(),
                });
            }
            if var_types.insert(z, texpr).is_some() {
                return Err(RegViolation {
                    constraint: "term variable constrained twice",
                    line,
                    detail: String::new(),
                });
            }
        }
        clauses.push(RegClause { head_term, param_slots, var_types, line });
    }
    // Pairwise non-unifiability of head terms.
    for i in 0..clauses.len() {
        for j in (i + 1)..clauses.len() {
            if templates_unify(&clauses[i].head_term, &clauses[j].head_term) {
                return Err(RegViolation {
                    constraint: "clause head terms unify",
                    line: clauses[j].line,
                    detail: format!(
                        "heads of clauses at lines {} and {}",
                        clauses[i].line, clauses[j].line
                    ),
                });
            }
        }
    }
    Ok(RegularProgram { key, clauses })
}

fn resolve_regtype_name(
    name: crate::symbol::SymbolId,
    nargs: u32,
    program: &Program,
    line: u32,
) -> std::result::Result<TypeExprT, RegViolation> {
    let k = PredKey { name, arity: nargs + 1 };
    if program.predicate(k).map(|d| d.is_regtype).unwrap_or(false) {
        Ok(TypeExprT::Apply(k, Vec::new()))
    } else {
        Err(RegViolation {
            constraint: "body literal is not a declared regular type",
            line,
            detail: program.symbols.name(name).to_string(),
        })
    }
}

fn type_expr_template(
    t: &Template,
    param_slots: &[u16],
    program: &Program,
    line: u32,
) -> std::result::Result<TypeExprT, RegViolation> {
    match t {
        Template::Var(s) => match param_slots.iter().position(|p| p == s) {
            Some(i) => Ok(TypeExprT::Param(i as u16)),
            None => Err(RegViolation {
                constraint: "type expression variable is not a parameter",
                line,
                detail: String::new(),
            }),
        },
        Template::Atom(name) => {
            let n = program.symbols.name(*name);
            if let Some(p) = prim_of_name(n) {
                Ok(TypeExprT::Prim(p))
            } else if n == "ground" {
                Ok(TypeExprT::Ground)
            } else {
                resolve_regtype_name(*name, 0, program, line)
            }
        }
        Template::Struct(name, args) => {
            let k = PredKey { name: *name, arity: args.len() as u32 + 1 };
            if !program.predicate(k).map(|d| d.is_regtype).unwrap_or(false) {
                return Err(RegViolation {
                    constraint: "type expression is not a declared regular type",
                    line,
                    detail: program.symbols.name(*name).to_string(),
                });
            }
            let mut ts = Vec::new();
            for a in args.iter() {
                ts.push(type_expr_template(a, param_slots, program, line)?);
            }
            Ok(TypeExprT::Apply(k, ts))
        }
        _ => Err(RegViolation {
            constraint: "invalid type expression",
            line,
            detail: String::new(),
        }),
    }
}

/// True iff the two templates (with disjoint variable scopes) unify.
fn templates_unify(a: &Template, b: &Template) -> bool {
    let mut store = Store::new();
    let max_slot = |t: &Template| {
        let mut m = 0u16;
        t.visit_vars(&mut |v| m = m.max(v + 1));
        m
    };
    let fa: Vec<TermId> = (0..max_slot(a)).map(|_| store.new_var()).collect();
    let fb: Vec<TermId> = (0..max_slot(b)).map(|_| store.new_var()).collect();
    let ta = crate::program::instantiate(a, &fa, &mut store);
    let tb = crate::program::instantiate(b, &fb, &mut store);
    store.unify(ta, tb)
}

// ---------------------------------------------------------------------------
// Type universe: compiled automata
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct StateInfo {
    name: String,
    def: StateDef,
}

/// Registry of compiled automaton states. Immutable once the program and its
/// assertions are compiled; shared read-only by engines.
#[derive(Debug)]
pub struct TypeUniverse {
    states: Vec<StateInfo>,
    programs: HashMap<PredKey, RegularProgram>,
    instances: HashMap<TypeExpr, StateId>,
    /// Expansion bound for ill-founded parametric definitions.
    pub max_instantiation_depth: u32,
}

impl TypeUniverse {
    pub fn new() -> Self {
        let mut u = TypeUniverse {
            states: Vec::new(),
            programs: HashMap::new(),
            instances: HashMap::new(),
            max_instantiation_depth: 64,
        };
        for (name, def) in [
            ("term", StateDef::Primitive(PrimClass::Any)),
            ("int", StateDef::Primitive(PrimClass::Int)),
            ("flt", StateDef::Primitive(PrimClass::Flt)),
            ("num", StateDef::Primitive(PrimClass::Num)),
            ("atm", StateDef::Primitive(PrimClass::Atm)),
            ("ground", StateDef::Ground),
        ] {
            u.states.push(StateInfo { name: name.to_string(), def });
        }
        u
    }

    /// Validate and register every declared regular type of the program.
    pub fn from_program(program: &Program) -> Result<Self> {
        let mut u = Self::new();
        for def in program.predicates() {
            if !def.is_regtype {
                continue;
            }
            let name = program.symbols.name(def.key.name);
            if is_builtin_prop_name(name) {
                return Err(Error::definition(format!(
                    "regtype {name} shadows a built-in property"
                )));
            }
            if def.key.arity == 0 {
                return Err(Error::definition(format!("regtype {name} must have arity >= 1")));
            }
            let rp = validate_regular_program(program, def.key)
                .map_err(|v| Error::definition(format!("invalid regular program {name}: {v}")))?;
            u.programs.insert(def.key, rp);
        }
        Ok(u)
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.0 as usize].name
    }

    pub fn state_def(&self, s: StateId) -> &StateDef {
        &self.states[s.0 as usize].def
    }

    /// All transitions targeting `t`, or the implicit primitive rule.
    pub fn constructors(&self, t: StateId) -> Result<Constructors<'_>> {
        let info = self
            .states
            .get(t.0 as usize)
            .ok_or_else(|| Error::internal(format!("unknown automaton state {}", t.0)))?;
        Ok(match &info.def {
            StateDef::Primitive(p) => Constructors::Primitive(*p),
            StateDef::Ground => Constructors::Ground,
            StateDef::Table(t) => Constructors::Table(t),
        })
    }

    /// Already-compiled instance for a concrete expression, if any.
    pub fn find_instance(&self, expr: &TypeExpr) -> Option<StateId> {
        match expr {
            TypeExpr::Prim(PrimClass::Any) => Some(STATE_ANY),
            TypeExpr::Prim(PrimClass::Int) => Some(STATE_INT),
            TypeExpr::Prim(PrimClass::Flt) => Some(STATE_FLT),
            TypeExpr::Prim(PrimClass::Num) => Some(STATE_NUM),
            TypeExpr::Prim(PrimClass::Atm) => Some(STATE_ATM),
            TypeExpr::Ground => Some(STATE_GROUND),
            TypeExpr::Instance(..) => self.instances.get(expr).copied(),
        }
    }

    /// Instantiate a parametric regtype from assertion-side type arguments.
    /// Arguments must be concrete type expressions.
    pub fn instantiate_prop(
        &mut self,
        key: PredKey,
        type_args: &[Template],
        program: &Program,
    ) -> Result<StateId> {
        let mut args = Vec::with_capacity(type_args.len());
        for t in type_args {
            args.push(self.template_to_type_expr(t, program)?);
        }
        self.instantiate(key, args, program, 0)
    }

    fn template_to_type_expr(&self, t: &Template, program: &Program) -> Result<TypeExpr> {
        match t {
            Template::Atom(name) => {
                let n = program.symbols.name(*name);
                if let Some(p) = prim_of_name(n) {
                    Ok(TypeExpr::Prim(p))
                } else if n == "ground" {
                    Ok(TypeExpr::Ground)
                } else {
                    let k = PredKey { name: *name, arity: 1 };
                    if program.predicate(k).map(|d| d.is_regtype).unwrap_or(false) {
                        Ok(TypeExpr::Instance(k, Vec::new()))
                    } else {
                        Err(Error::definition(format!("unknown type expression {n}")))
                    }
                }
            }
            Template::Struct(name, args) => {
                let k = PredKey { name: *name, arity: args.len() as u32 + 1 };
                if !program.predicate(k).map(|d| d.is_regtype).unwrap_or(false) {
                    return Err(Error::definition(format!(
                        "unknown parametric type {}/{}",
                        program.symbols.name(*name),
                        args.len()
                    )));
                }
                let mut ts = Vec::new();
                for a in args.iter() {
                    ts.push(self.template_to_type_expr(a, program)?);
                }
                Ok(TypeExpr::Instance(k, ts))
            }
            Template::Var(_) => Err(Error::definition(
                "type parameters must be instantiated with concrete types".to_string(),
            )),
            _ => Err(Error::definition("invalid type expression".to_string())),
        }
    }

    fn expr_state(&mut self, expr: &TypeExpr, program: &Program, depth: u32) -> Result<StateId> {
        match expr {
            TypeExpr::Prim(PrimClass::Any) => Ok(STATE_ANY),
            TypeExpr::Prim(PrimClass::Int) => Ok(STATE_INT),
            TypeExpr::Prim(PrimClass::Flt) => Ok(STATE_FLT),
            TypeExpr::Prim(PrimClass::Num) => Ok(STATE_NUM),
            TypeExpr::Prim(PrimClass::Atm) => Ok(STATE_ATM),
            TypeExpr::Ground => Ok(STATE_GROUND),
            TypeExpr::Instance(key, args) => {
                self.instantiate(*key, args.clone(), program, depth)
            }
        }
    }

    fn render_expr(&self, expr: &TypeExpr, program: &Program) -> String {
        match expr {
            TypeExpr::Prim(PrimClass::Any) => "term".into(),
            TypeExpr::Prim(PrimClass::Int) => "int".into(),
            TypeExpr::Prim(PrimClass::Flt) => "flt".into(),
            TypeExpr::Prim(PrimClass::Num) => "num".into(),
            TypeExpr::Prim(PrimClass::Atm) => "atm".into(),
            TypeExpr::Ground => "ground".into(),
            TypeExpr::Instance(key, args) => {
                let name = program.symbols.name(key.name);
                if args.is_empty() {
                    name.to_string()
                } else {
                    let args: Vec<String> =
                        args.iter().map(|a| self.render_expr(a, program)).collect();
                    format!("{}({})", name, args.join(","))
                }
            }
        }
    }

    /// Compile (or fetch) the automaton instance for `key` applied to
    /// concrete `args`. Repeated instantiation returns the identical state.
    pub fn instantiate(
        &mut self,
        key: PredKey,
        args: Vec<TypeExpr>,
        program: &Program,
        depth: u32,
    ) -> Result<StateId> {
        let expr = TypeExpr::Instance(key, args.clone());
        if let Some(&s) = self.instances.get(&expr) {
            return Ok(s);
        }
        if depth >= self.max_instantiation_depth {
            return Err(Error::definition(format!(
                "instantiation depth exceeded while expanding {}",
                self.render_expr(&expr, program)
            )));
        }
        if args.len() as u32 + 1 != key.arity {
            return Err(Error::definition(format!(
                "type {} applied to {} arguments",
                key.render(&program.symbols),
                args.len()
            )));
        }
        let rp = self
            .programs
            .get(&key)
            .ok_or_else(|| {
                Error::definition(format!("{} is not a regular type", key.render(&program.symbols)))
            })?
            .clone();
        // Register the state before compiling clause bodies so recursive
        // references resolve to it.
        let state = StateId(self.states.len() as u32);
        let name = self.render_expr(&expr, program);
        self.states.push(StateInfo { name, def: StateDef::Table(CtorTable::Small(Vec::new())) });
        self.instances.insert(expr, state);

        let mut transitions: Vec<(CtorKey, Box<[StateId]>)> = Vec::new();
        for clause in &rp.clauses {
            let child = self.compile_head_term(
                &clause.head_term,
                clause,
                &args,
                program,
                depth,
                state,
                &mut transitions,
                true,
            )?;
            debug_assert_eq!(child, None);
        }
        let def = if transitions.len() <= SMALL_TABLE_MAX {
            StateDef::Table(CtorTable::Small(transitions))
        } else {
            StateDef::Table(CtorTable::Large(transitions.into_iter().collect()))
        };
        self.states[state.0 as usize].def = def;
        Ok(state)
    }

    /// Compile one head term position. At the top level the transition is
    /// added to `transitions` (targeting the instance state); nested non-var
    /// positions allocate anonymous intermediate states.
    #[allow(clippy::too_many_arguments)]
    fn compile_head_term(
        &mut self,
        t: &Template,
        clause: &RegClause,
        args: &[TypeExpr],
        program: &Program,
        depth: u32,
        target: StateId,
        transitions: &mut Vec<(CtorKey, Box<[StateId]>)>,
        top: bool,
    ) -> Result<Option<StateId>> {
        let ctor = t.ctor_key().expect("head term is not a variable");
        let child_states: Vec<StateId> = match t {
            Template::Struct(_, children) => {
                let mut out = Vec::with_capacity(children.len());
                for c in children.iter() {
                    match c {
                        Template::Var(z) => {
                            let texpr = clause.var_types.get(z);
                            let state = match texpr {
                                None => STATE_ANY,
                                Some(te) => {
                                    let concrete = resolve_type_expr_t(te, args);
                                    self.expr_state(&concrete, program, depth + 1)?
                                }
                            };
                            out.push(state);
                        }
                        nested => {
                            // Anonymous intermediate state for a nested term.
                            let anon = StateId(self.states.len() as u32);
                            let name = format!("{}'", self.states[target.0 as usize].name);
                            self.states.push(StateInfo {
                                name,
                                def: StateDef::Table(CtorTable::Small(Vec::new())),
                            });
                            let mut sub = Vec::new();
                            self.compile_head_term(
                                nested, clause, args, program, depth, anon, &mut sub, true,
                            )?;
                            self.states[anon.0 as usize].def =
                                StateDef::Table(CtorTable::Small(sub));
                            out.push(anon);
                        }
                    }
                }
                out
            }
            _ => Vec::new(),
        };
        if transitions.iter().any(|(k, _)| *k == ctor) {
            return Err(Error::definition(format!(
                "regular type {} is not top-down deterministic: duplicate constructor {}",
                self.states[target.0 as usize].name,
                ctor.render(&program.symbols)
            )));
        }
        let _ = top;
        transitions.push((ctor, child_states.into_boxed_slice()));
        Ok(None)
    }

    /// Assert top-down determinism over the whole compiled table set.
    pub fn check_determinism(&self) -> Result<()> {
        for (i, info) in self.states.iter().enumerate() {
            if let StateDef::Table(t) = &info.def {
                let mut seen = HashSet::new();
                for (k, _) in t.iter() {
                    if !seen.insert(*k) {
                        return Err(Error::internal(format!(
                            "state {} has duplicate constructor transitions",
                            self.states[i].name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Debug dump: one transition per line, `f/n(q_i,...) -> q_t`, for every
    /// table state reachable from `root`, states printed with type names.
    pub fn dump(&self, root: StateId, symbols: &SymbolTable) -> String {
        let mut out = String::new();
        let mut seen = HashSet::new();
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(root);
        seen.insert(root);
        while let Some(s) = queue.pop_front() {
            if let StateDef::Table(table) = &self.states[s.0 as usize].def {
                for (ctor, kids) in table.iter() {
                    let lhs = if kids.is_empty() {
                        ctor.render(symbols)
                    } else {
                        let kid_names: Vec<&str> =
                            kids.iter().map(|k| self.state_name(*k)).collect();
                        format!("{}({})", ctor.render(symbols), kid_names.join(","))
                    };
                    out.push_str(&format!("{} -> {}\n", lhs, self.state_name(s)));
                    for k in kids {
                        if seen.insert(*k) {
                            queue.push_back(*k);
                        }
                    }
                }
            }
        }
        out
    }
}

impl Default for TypeUniverse {
    fn default() -> Self {
        Self::new()
    }
}

fn resolve_type_expr_t(t: &TypeExprT, args: &[TypeExpr]) -> TypeExpr {
    match t {
        TypeExprT::Param(i) => args[*i as usize].clone(),
        TypeExprT::Prim(p) => TypeExpr::Prim(*p),
        TypeExprT::Ground => TypeExpr::Ground,
        TypeExprT::Apply(k, sub) => {
            TypeExpr::Instance(*k, sub.iter().map(|s| resolve_type_expr_t(s, args)).collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Brute-force recognizer: the testing oracle
// ---------------------------------------------------------------------------

/// Direct implementation of a tree-automaton run, with no cache and no
/// counters. Free variables fail structural states (regtype membership is an
/// instantiation check); `term` accepts anything including variables.
pub fn brute_force_recognize(
    store: &Store,
    universe: &TypeUniverse,
    term: TermId,
    state: StateId,
) -> bool {
    let t = store.deref(term);
    match universe.state_def(state) {
        StateDef::Primitive(PrimClass::Any) => true,
        StateDef::Primitive(p) => match store.node(t) {
            TermNode::Int(_) => matches!(p, PrimClass::Int | PrimClass::Num),
            TermNode::Float(_) => matches!(p, PrimClass::Flt | PrimClass::Num),
            TermNode::Atom(_) => matches!(p, PrimClass::Atm),
            _ => false,
        },
        StateDef::Ground => store.is_ground(t),
        StateDef::Table(table) => {
            let Some(key) = store.ctor_key(t) else {
                return false;
            };
            let Some(child_states) = table.lookup(&key) else {
                return false;
            };
            match store.node(t) {
                TermNode::Struct { args, .. } => {
                    let args = args.clone();
                    args.iter()
                        .zip(child_states.iter())
                        .all(|(a, s)| brute_force_recognize(store, universe, *a, *s))
                }
                _ => true,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_source;
    use crate::program::build_program;

    pub(crate) const BINTREE_SRC: &str = "\
:- regtype bintree/2.
bintree(empty,T).
bintree(tree(LC,X,RC),T) :- bintree(LC,T), T(X), bintree(RC,T).
";

    pub(crate) const LIST_SRC: &str = "\
:- regtype list/2.
list([],T).
list([X|Xs],T) :- T(X), list(Xs,T).
";

    fn load(src: &str) -> (Program, TypeUniverse) {
        let p = build_program(&parse_source(src).unwrap()).unwrap();
        let u = TypeUniverse::from_program(&p).unwrap();
        (p, u)
    }

    fn instance(p: &Program, u: &mut TypeUniverse, name: &str, args: Vec<TypeExpr>) -> StateId {
        let key = PredKey { name: p.symbols.lookup(name).unwrap(), arity: args.len() as u32 + 1 };
        u.instantiate(key, args, p, 0).unwrap()
    }

    #[test]
    fn bintree_int_compiles_to_two_transitions() {
        let (p, mut u) = load(BINTREE_SRC);
        let q = instance(&p, &mut u, "bintree", vec![TypeExpr::Prim(PrimClass::Int)]);
        let dump = u.dump(q, &p.symbols);
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2, "dump:\n{dump}");
        assert_eq!(lines[0], "empty/0 -> bintree(int)");
        assert_eq!(lines[1], "tree/3(bintree(int),int,bintree(int)) -> bintree(int)");
        u.check_determinism().unwrap();
    }

    #[test]
    fn list_int_compiles_like_bintree() {
        // Hand translation following the same pattern: [] -> q_l,
        // '.'(q_int, q_l) -> q_l.
        let (p, mut u) = load(LIST_SRC);
        let q = instance(&p, &mut u, "list", vec![TypeExpr::Prim(PrimClass::Int)]);
        let dump = u.dump(q, &p.symbols);
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "[]/0 -> list(int)");
        assert_eq!(lines[1], "./2(int,list(int)) -> list(int)");
    }

    #[test]
    fn instantiation_is_memoized() {
        let (p, mut u) = load(BINTREE_SRC);
        let q1 = instance(&p, &mut u, "bintree", vec![TypeExpr::Prim(PrimClass::Int)]);
        let q2 = instance(&p, &mut u, "bintree", vec![TypeExpr::Prim(PrimClass::Int)]);
        assert_eq!(q1, q2);
        let q3 = instance(&p, &mut u, "bintree", vec![TypeExpr::Prim(PrimClass::Atm)]);
        assert_ne!(q1, q3);
    }

    #[test]
    fn identical_heads_violate() {
        let src = ":- regtype t/1.\nt(a).\nt(a).\n";
        let p = build_program(&parse_source(src).unwrap()).unwrap();
        let err = TypeUniverse::from_program(&p).unwrap_err();
        assert!(err.to_string().contains("unify"), "{err}");
    }

    #[test]
    fn nonlinear_head_violates() {
        let src = ":- regtype t/1.\nt(f(X,X)).\n";
        let p = build_program(&parse_source(src).unwrap()).unwrap();
        let err = TypeUniverse::from_program(&p).unwrap_err();
        assert!(err.to_string().contains("non-linear"), "{err}");
    }

    #[test]
    fn bintree_clauses_validate() {
        let (p, u) = load(BINTREE_SRC);
        let key = PredKey { name: p.symbols.lookup("bintree").unwrap(), arity: 2 };
        assert!(u.programs.contains_key(&key));
    }

    #[test]
    fn recognizer_on_bintree() {
        let (p, mut u) = load(BINTREE_SRC);
        let q = instance(&p, &mut u, "bintree", vec![TypeExpr::Prim(PrimClass::Int)]);
        let mut st = Store::new();
        let mut sy = p.symbols.clone();
        let empty = sy.intern("empty");
        let tree = sy.intern("tree");
        let a = sy.intern("a");

        let e1 = st.atom(empty);
        assert!(brute_force_recognize(&st, &u, e1, q));

        // tree(empty, a, empty) fails: a is not an int.
        let e2 = st.atom(empty);
        let e3 = st.atom(empty);
        let at = st.atom(a);
        let bad = st.structure(tree, vec![e2, at, e3]);
        assert!(!brute_force_recognize(&st, &u, bad, q));

        let e4 = st.atom(empty);
        let e5 = st.atom(empty);
        let five = st.int(5);
        let good = st.structure(tree, vec![e4, five, e5]);
        assert!(brute_force_recognize(&st, &u, good, q));

        // Unbound variable fails any structural state.
        let v = st.new_var();
        assert!(!brute_force_recognize(&st, &u, v, q));
        // But `term` accepts it.
        assert!(brute_force_recognize(&st, &u, v, STATE_ANY));
        // ground(X) with X unbound is false.
        assert!(!brute_force_recognize(&st, &u, v, STATE_GROUND));
    }

    #[test]
    fn unknown_functor_is_false() {
        let (p, mut u) = load(BINTREE_SRC);
        let q = instance(&p, &mut u, "bintree", vec![TypeExpr::Prim(PrimClass::Int)]);
        let mut st = Store::new();
        let mut sy = p.symbols.clone();
        let g = sy.intern("unrelated");
        let one = st.int(1);
        let t = st.structure(g, vec![one]);
        assert!(!brute_force_recognize(&st, &u, t, q));
    }

    #[test]
    fn constructors_queries() {
        let (p, mut u) = load(BINTREE_SRC);
        let q = instance(&p, &mut u, "bintree", vec![TypeExpr::Prim(PrimClass::Int)]);
        match u.constructors(q).unwrap() {
            Constructors::Table(t) => assert_eq!(t.len(), 2),
            _ => panic!("expected table"),
        }
        match u.constructors(STATE_INT).unwrap() {
            Constructors::Primitive(PrimClass::Int) => {}
            _ => panic!("expected primitive class"),
        }
        // Empty regtype: constructors are the empty set.
        let src = ":- regtype none/1.\n";
        let p2 = build_program(&parse_source(src).unwrap()).unwrap();
        let mut u2 = TypeUniverse::from_program(&p2).unwrap();
        let key = PredKey { name: p2.symbols.lookup("none").unwrap(), arity: 1 };
        let q2 = u2.instantiate(key, vec![], &p2, 0).unwrap();
        match u2.constructors(q2).unwrap() {
            Constructors::Table(t) => assert!(t.is_empty()),
            _ => panic!(),
        }
        assert!(u.constructors(StateId(9999)).is_err());
    }

    #[test]
    fn ill_founded_instantiation_bounded() {
        let src = "\
:- regtype list/2.
list([],T).
list([X|Xs],T) :- T(X), list(Xs,T).
:- regtype spiral/2.
spiral(s(X),T) :- spiral(X,list(T)).
";
        let (p, mut u) = load(src);
        let key = PredKey { name: p.symbols.lookup("spiral").unwrap(), arity: 2 };
        let err = u.instantiate(key, vec![TypeExpr::Prim(PrimClass::Int)], &p, 0).unwrap_err();
        assert!(err.to_string().contains("instantiation depth"), "{err}");
    }

    #[test]
    fn nested_head_terms_compile() {
        let src = ":- regtype t/1.\nt(f(g(X))) :- int(X).\nt(h).\n";
        let (p, mut u) = load(src);
        let key = PredKey { name: p.symbols.lookup("t").unwrap(), arity: 1 };
        let q = u.instantiate(key, vec![], &p, 0).unwrap();
        let mut st = Store::new();
        let mut sy = p.symbols.clone();
        let f = sy.intern("f");
        let g = sy.intern("g");
        let one = st.int(1);
        let gt = st.structure(g, vec![one]);
        let ft = st.structure(f, vec![gt]);
        assert!(brute_force_recognize(&st, &u, ft, q));
        let a = sy.intern("a");
        let at = st.atom(a);
        let gbad = st.structure(g, vec![at]);
        let fbad = st.structure(f, vec![gbad]);
        assert!(!brute_force_recognize(&st, &u, fbad, q));
        u.check_determinism().unwrap();
    }
}
