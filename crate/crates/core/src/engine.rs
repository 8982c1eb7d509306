//! The interpreter: reductions with assertions and cache store.
//!
//! A machine state is the goal sequence, the binding store with its trail,
//! the memo cache, the error set of falsified assertion-condition instances,
//! and a choice-point stack. Atom reduction of a predicate with assertions
//! evaluates its compiled calls check and schedules a success-check literal
//! behind the body; consuming that literal evaluates the postconditions in
//! the success store. Backtracking undoes trail segments and feeds the
//! unbound variables to cache invalidation.
//!
//! Two condition placements are provided: `Wrapper` evaluates the calls
//! condition once per call (the transformation's placement) and `PerClause`
//! re-evaluates it at every clause resolution, which follows the reduction
//! rule literally. Outcomes agree on answers and error sets; instance serials
//! differ.

use std::collections::HashMap;
use std::rc::Rc;

use crate::assertion::{CheapTest, CondId, CondKind, PropClass};
use crate::cache::{CacheConfig, CacheStats, CheckCache, InvalidateEvent};
use crate::error::{Error, Result};
use crate::parse::{parse_goal, parse_source, Ast};
use crate::program::{
    build_program, instantiate, unify_template, Clause, CmpOp, GoalNode, PredDef, PredKey,
    Program, Template,
};
use crate::regtype::{
    brute_force_recognize, PrimClass, StateDef, StateId, TypeExpr, TypeUniverse, STATE_GROUND,
};
use crate::symbol::{SymbolId, SymbolTable};
use crate::term::{Store, TermId, TermNode};
use crate::transform::{build_plan, eval_assigns, CheckPlan, CompiledWrapper, PreBit, PropCheck};

/// A loaded program: parsed, head-normalized, regular types compiled, and
/// assertion conditions transformed into executable wrappers.
#[derive(Debug)]
pub struct CheckedProgram {
    pub program: Program,
    pub universe: TypeUniverse,
    pub plan: CheckPlan,
}

/// Parse and prepare a source program.
pub fn load_program(src: &str) -> Result<CheckedProgram> {
    let items = parse_source(src)?;
    let program = build_program(&items)?;
    let mut universe = TypeUniverse::from_program(&program)?;
    let plan = build_plan(&program, &mut universe)?;
    precompile_reify_instances(&program, &mut universe)?;
    universe.check_determinism()?;
    Ok(CheckedProgram { program, universe, plan })
}

/// Pre-instantiate regtype instances mentioned by `reify_check/2` literals in
/// clause bodies, so printed transformed programs run unmodified.
fn precompile_reify_instances(program: &Program, universe: &mut TypeUniverse) -> Result<()> {
    let Some(reify) = program.symbols.lookup("reify_check") else {
        return Ok(());
    };
    let mut props: Vec<Template> = Vec::new();
    for def in program.predicates() {
        for clause in &def.clauses {
            collect_reify_props(&clause.body, reify, &mut props);
        }
    }
    for prop in props {
        if let Template::Struct(name, args) = &prop {
            if !args.is_empty() {
                let key = PredKey { name: *name, arity: args.len() as u32 };
                let is_regtype = program.predicate(key).map(|d| d.is_regtype).unwrap_or(false);
                if is_regtype {
                    // Ignore failures here: non-concrete parameters are
                    // rejected at run time instead.
                    let _ = universe.instantiate_prop(key, &args[1..], program);
                }
            }
        }
    }
    Ok(())
}

fn collect_reify_props(g: &GoalNode, reify: SymbolId, out: &mut Vec<Template>) {
    match g {
        GoalNode::Conj(a, b) | GoalNode::Disj(a, b) => {
            collect_reify_props(a, reify, out);
            collect_reify_props(b, reify, out);
        }
        GoalNode::IfThenElse(c, t, e) => {
            collect_reify_props(c, reify, out);
            collect_reify_props(t, reify, out);
            collect_reify_props(e, reify, out);
        }
        GoalNode::Call(Template::Struct(name, args)) if *name == reify && args.len() == 2 => {
            out.push(args[0].clone());
        }
        _ => {}
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionMode {
    /// Calls condition evaluated once per call, at the wrapper.
    Wrapper,
    /// Calls condition re-evaluated at each clause resolution.
    PerClause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// Record violations in the error set and keep going.
    Continue,
    /// Stop the derivation at the first violation.
    Abort,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub rtchecks: bool,
    pub cache: CacheConfig,
    pub error_mode: ErrorMode,
    pub condition_mode: ConditionMode,
    /// Skip reifying postcondition literals whose guarding precondition bit
    /// is 0 (all bits are computed straight-line by default).
    pub short_circuit: bool,
    /// Verify every cache hit and insertion against the brute-force
    /// recognizer, and sweep the cache after invalidations.
    pub audit: bool,
    pub max_solutions: Option<usize>,
    pub step_limit: Option<u64>,
    pub occurs_check: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rtchecks: true,
            cache: CacheConfig::default(),
            error_mode: ErrorMode::Continue,
            condition_mode: ConditionMode::Wrapper,
            short_circuit: false,
            audit: false,
            max_solutions: None,
            step_limit: None,
            occurs_check: false,
        }
    }
}

/// A falsified assertion-condition instance (a negated label in the error
/// set), plus diagnostics.
#[derive(Debug, Clone)]
pub struct Violation {
    pub instance: crate::assertion::AsrInstance,
    pub kind: CondKind,
    /// `pred/arity` text.
    pub pred: String,
    /// Source line of the originating assertion.
    pub line: u32,
    /// The call, rendered with its bindings at violation time.
    pub call: String,
}

impl Violation {
    pub fn render(&self) -> String {
        let what = match self.kind {
            CondKind::Calls => "calls condition",
            CondKind::Success => "success condition",
        };
        format!(
            "#{} {} C{} of {} (assertion at line {}) violated at {}",
            self.instance.serial, what, self.instance.cond.index, self.pred, self.line, self.call
        )
    }
}

/// One answer: the query variables' bindings and the size of the error set
/// when the answer was produced.
#[derive(Debug, Clone)]
pub struct Answer {
    pub bindings: Vec<(String, String)>,
    pub errors_at: usize,
}

impl Answer {
    pub fn render(&self) -> String {
        if self.bindings.is_empty() {
            return "true".to_string();
        }
        let parts: Vec<String> = self.bindings.iter().map(|(v, t)| format!("{v} = {t}")).collect();
        parts.join(", ")
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub reductions: u64,
    pub cache: CacheStats,
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub answers: Vec<Answer>,
    /// The error set, in insertion order.
    pub errors: Vec<Violation>,
    pub stats: RunStats,
    /// True when error-mode abort stopped the run.
    pub aborted: bool,
    /// True when the step budget ran out.
    pub step_limited: bool,
}

impl SolveOutcome {
    pub fn error_set(&self) -> Vec<crate::assertion::AsrInstance> {
        self.errors.iter().map(|v| v.instance).collect()
    }

    /// 0: clean; 1: violations recorded.
    pub fn exit_code(&self) -> i32 {
        if self.errors.is_empty() {
            0
        } else {
            1
        }
    }

    /// Canonical rendering of answers plus error labels, for equivalence
    /// comparisons.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for a in &self.answers {
            s.push_str(&a.render());
            s.push('\n');
        }
        s.push_str("-- errors --\n");
        for v in &self.errors {
            s.push_str(&format!("{}#{}:{}\n", v.pred, v.instance.cond.index, v.instance.serial));
        }
        if self.step_limited {
            s.push_str("-- step limited --\n");
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Goal list and choice points
// ---------------------------------------------------------------------------

type Frame = Rc<Vec<TermId>>;

#[derive(Clone)]
enum GoalEntry<'p> {
    /// Walk a body node of a clause.
    Run { node: &'p GoalNode, frame: Frame },
    /// Solve a runtime term (query literal or instantiated call).
    CallTerm(TermId),
    /// Deferred success check of a completed call.
    CheckSuccess(Rc<PendingSuccess<'p>>),
    /// Commit an if-then-else: drop choice points above the barrier.
    Commit(usize),
}

struct PendingSuccess<'p> {
    wrapper: &'p CompiledWrapper,
    /// Bit frame after the call stage (pre-conjunction statuses are live).
    bits: Vec<u8>,
    args: Vec<TermId>,
    /// Pre-minted labeled instances, one per success condition.
    instances: Vec<crate::assertion::AsrInstance>,
}

struct GoalCons<'p> {
    entry: GoalEntry<'p>,
    next: GoalList<'p>,
}

type GoalList<'p> = Option<Rc<GoalCons<'p>>>;

fn push_goal<'p>(list: &mut GoalList<'p>, entry: GoalEntry<'p>) {
    let next = list.take();
    *list = Some(Rc::new(GoalCons { entry, next }));
}

enum Alt<'p> {
    /// Remaining clause alternatives of a user call.
    Clauses {
        def: &'p PredDef,
        args: Rc<Vec<TermId>>,
        candidates: Vec<u32>,
        next: usize,
        /// PerClause mode: re-evaluate the calls condition per try.
        strict: Option<&'p CompiledWrapper>,
    },
    /// Right branch of a body disjunction / else branch of if-then-else.
    Goal { node: &'p GoalNode, frame: Frame },
    /// Right branch of a runtime disjunction.
    CallGoal(TermId),
}

struct ChoicePoint<'p> {
    goals: GoalList<'p>,
    mark: crate::term::Epoch,
    alt: Alt<'p>,
}

// ---------------------------------------------------------------------------
// The engine
// ---------------------------------------------------------------------------

struct BuiltinSyms {
    comma: SymbolId,
    semicolon: SymbolId,
    arrow: SymbolId,
    unify: SymbolId,
    is_: SymbolId,
    lt: SymbolId,
    gt: SymbolId,
    le: SymbolId,
    ge: SymbolId,
    true_: SymbolId,
    fail: SymbolId,
    reify_check: SymbolId,
    error_if_false: SymbolId,
    int_: SymbolId,
    flt: SymbolId,
    num: SymbolId,
    atm: SymbolId,
    var_: SymbolId,
    ground: SymbolId,
    term_: SymbolId,
}

pub struct Engine<'p> {
    checked: &'p CheckedProgram,
    symbols: SymbolTable,
    syms: BuiltinSyms,
    store: Store,
    cache: CheckCache,
    goals: GoalList<'p>,
    cps: Vec<ChoicePoint<'p>>,
    errors: Vec<Violation>,
    opts: SolveOptions,
    next_serial: u64,
    reductions: u64,
    /// Variables dereferenced by the current top-level check (dependency
    /// bookkeeping for trail-selective invalidation).
    deref_log: Vec<TermId>,
    query_vars: Vec<(String, TermId)>,
    abort_now: bool,
    step_limited: bool,
}

enum Step {
    Ok,
    Fail,
}

impl<'p> Engine<'p> {
    pub fn new(checked: &'p CheckedProgram, opts: SolveOptions) -> Self {
        let mut symbols = checked.program.symbols.clone();
        let syms = BuiltinSyms {
            comma: symbols.intern(","),
            semicolon: symbols.intern(";"),
            arrow: symbols.intern("->"),
            unify: symbols.intern("="),
            is_: symbols.intern("is"),
            lt: symbols.intern("<"),
            gt: symbols.intern(">"),
            le: symbols.intern("=<"),
            ge: symbols.intern(">="),
            true_: symbols.intern("true"),
            fail: symbols.intern("fail"),
            reify_check: symbols.intern("reify_check"),
            error_if_false: symbols.intern("error_if_false"),
            int_: symbols.intern("int"),
            flt: symbols.intern("flt"),
            num: symbols.intern("num"),
            atm: symbols.intern("atm"),
            var_: symbols.intern("var"),
            ground: symbols.intern("ground"),
            term_: symbols.intern("term"),
        };
        let mut store = Store::new();
        store.occurs_check = opts.occurs_check;
        let cache = CheckCache::new(opts.cache.clone());
        Engine {
            checked,
            symbols,
            syms,
            store,
            cache,
            goals: None,
            cps: Vec::new(),
            errors: Vec::new(),
            opts,
            next_serial: 0,
            reductions: 0,
            deref_log: Vec::new(),
            query_vars: Vec::new(),
            abort_now: false,
            step_limited: false,
        }
    }

    fn build_query_term(&mut self, ast: &Ast, vars: &mut HashMap<String, TermId>) -> Result<TermId> {
        Ok(match ast {
            Ast::Var(name) => {
                if name == "_" {
                    self.store.new_var()
                } else if let Some(&t) = vars.get(name) {
                    t
                } else {
                    let sym = self.symbols.intern(name);
                    let t = self.store.new_named_var(sym);
                    vars.insert(name.clone(), t);
                    self.query_vars.push((name.clone(), t));
                    t
                }
            }
            Ast::Int(v) => self.store.int(*v),
            Ast::Float(v) => self.store.float(*v),
            Ast::Atom(a) => {
                let s = self.symbols.intern(a);
                self.store.atom(s)
            }
            Ast::Struct(f, args) => {
                let s = self.symbols.intern(f);
                let mut ids = Vec::with_capacity(args.len());
                for a in args {
                    ids.push(self.build_query_term(a, vars)?);
                }
                self.store.structure(s, ids)
            }
            Ast::VarCall(..) => {
                return Err(Error::runtime("variable-headed goal in query"));
            }
        })
    }

    /// Run a query to exhaustion (or to the solution/step budget).
    pub fn solve_text(&mut self, goal: &str) -> Result<SolveOutcome> {
        let ast = parse_goal(goal)?;
        let mut vars = HashMap::new();
        let g = self.build_query_term(&ast, &mut vars)?;
        self.goals = None;
        push_goal(&mut self.goals, GoalEntry::CallTerm(g));
        self.run()
    }

    fn run(&mut self) -> Result<SolveOutcome> {
        let mut answers: Vec<Answer> = Vec::new();
        'main: loop {
            if self.abort_now {
                break;
            }
            if let Some(limit) = self.opts.step_limit {
                if self.reductions >= limit {
                    self.step_limited = true;
                    break;
                }
            }
            let entry = match self.goals.as_ref() {
                Some(cons) => {
                    let e = cons.entry.clone();
                    self.goals = cons.next.clone();
                    e
                }
                None => {
                    answers.push(self.project_answer());
                    if let Some(max) = self.opts.max_solutions {
                        if answers.len() >= max {
                            break 'main;
                        }
                    }
                    if !self.backtrack()? {
                        break 'main;
                    }
                    continue;
                }
            };
            match self.execute(entry)? {
                Step::Ok => {}
                Step::Fail => {
                    if !self.backtrack()? {
                        break 'main;
                    }
                }
            }
        }
        if self.opts.audit {
            self.audit_sweep()?;
        }
        Ok(SolveOutcome {
            answers,
            errors: std::mem::take(&mut self.errors),
            stats: RunStats { reductions: self.reductions, cache: self.cache.stats.clone() },
            aborted: self.abort_now,
            step_limited: self.step_limited,
        })
    }

    fn project_answer(&self) -> Answer {
        let bindings = self
            .query_vars
            .iter()
            .map(|(name, t)| (name.clone(), self.store.render(*t, &self.symbols)))
            .collect();
        Answer { bindings, errors_at: self.errors.len() }
    }

    fn backtrack(&mut self) -> Result<bool> {
        'outer: loop {
            let Some(top) = self.cps.last() else {
                return Ok(false);
            };
            let mark = top.mark;
            let is_goal_alt = matches!(top.alt, Alt::Goal { .. } | Alt::CallGoal(_));
            self.undo_with_invalidation(mark)?;
            if is_goal_alt {
                let cp = self.cps.pop().unwrap();
                self.goals = cp.goals;
                match cp.alt {
                    Alt::Goal { node, frame } => {
                        push_goal(&mut self.goals, GoalEntry::Run { node, frame });
                    }
                    Alt::CallGoal(t) => {
                        push_goal(&mut self.goals, GoalEntry::CallTerm(t));
                    }
                    _ => unreachable!(),
                }
                return Ok(true);
            }
            // Clause alternatives: keep trying until one resolves or the
            // point is exhausted.
            loop {
                let (def, args, cand, strict, goals_snapshot, was_last) = {
                    let top = self.cps.last_mut().unwrap();
                    let Alt::Clauses { def, args, candidates, next, strict } = &mut top.alt else {
                        unreachable!()
                    };
                    if *next >= candidates.len() {
                        self.cps.pop();
                        continue 'outer;
                    }
                    let idx = candidates[*next];
                    *next += 1;
                    let was_last = *next >= candidates.len();
                    (*def, Rc::clone(args), idx, *strict, top.goals.clone(), was_last)
                };
                self.goals = goals_snapshot;
                if was_last {
                    self.cps.pop();
                }
                if let Some(w) = strict {
                    self.eval_call_stage(w, &args)?;
                    if self.abort_now {
                        return Ok(true);
                    }
                }
                if self.try_clause(def, cand, &args)? {
                    return Ok(true);
                }
                self.undo_with_invalidation(mark)?;
                if was_last {
                    continue 'outer;
                }
            }
        }
    }

    fn undo_with_invalidation(&mut self, mark: crate::term::Epoch) -> Result<()> {
        let unbound = self.store.undo_to(mark)?;
        if !unbound.is_empty() {
            self.cache.invalidate(InvalidateEvent::Backtrack(&unbound));
            if self.opts.audit {
                self.audit_sweep()?;
            }
        }
        Ok(())
    }

    fn execute(&mut self, entry: GoalEntry<'p>) -> Result<Step> {
        match entry {
            GoalEntry::Commit(barrier) => {
                debug_assert!(self.cps.len() > barrier);
                self.cps.truncate(barrier);
                Ok(Step::Ok)
            }
            GoalEntry::CheckSuccess(ps) => {
                self.reductions += 1;
                self.eval_success_stage(&ps)?;
                Ok(Step::Ok)
            }
            GoalEntry::Run { node, frame } => self.run_node(node, frame),
            GoalEntry::CallTerm(t) => self.dispatch_call(t),
        }
    }

    fn run_node(&mut self, node: &'p GoalNode, frame: Frame) -> Result<Step> {
        match node {
            GoalNode::True => {
                self.reductions += 1;
                Ok(Step::Ok)
            }
            GoalNode::Fail => {
                self.reductions += 1;
                Ok(Step::Fail)
            }
            GoalNode::Conj(a, b) => {
                push_goal(&mut self.goals, GoalEntry::Run { node: b, frame: Rc::clone(&frame) });
                push_goal(&mut self.goals, GoalEntry::Run { node: a, frame });
                Ok(Step::Ok)
            }
            GoalNode::Disj(a, b) => {
                self.cps.push(ChoicePoint {
                    goals: self.goals.clone(),
                    mark: self.store.epoch(),
                    alt: Alt::Goal { node: b, frame: Rc::clone(&frame) },
                });
                push_goal(&mut self.goals, GoalEntry::Run { node: a, frame });
                Ok(Step::Ok)
            }
            GoalNode::IfThenElse(c, t, e) => {
                let barrier = self.cps.len();
                self.cps.push(ChoicePoint {
                    goals: self.goals.clone(),
                    mark: self.store.epoch(),
                    alt: Alt::Goal { node: e, frame: Rc::clone(&frame) },
                });
                push_goal(&mut self.goals, GoalEntry::Run { node: t, frame: Rc::clone(&frame) });
                push_goal(&mut self.goals, GoalEntry::Commit(barrier));
                push_goal(&mut self.goals, GoalEntry::Run { node: c, frame });
                Ok(Step::Ok)
            }
            GoalNode::Unify(a, b) => {
                self.reductions += 1;
                let lhs = match a {
                    Template::Var(s) => frame[*s as usize],
                    t => instantiate(t, &frame, &mut self.store),
                };
                if unify_template(lhs, b, &frame, &mut self.store) {
                    Ok(Step::Ok)
                } else {
                    Ok(Step::Fail)
                }
            }
            GoalNode::Is(lhs, rhs) => {
                self.reductions += 1;
                let v = self.eval_arith_template(rhs, &frame)?;
                let n = self.store.int(v);
                if unify_template(n, lhs, &frame, &mut self.store) {
                    Ok(Step::Ok)
                } else {
                    Ok(Step::Fail)
                }
            }
            GoalNode::Cmp(op, a, b) => {
                self.reductions += 1;
                let x = self.eval_number_template(a, &frame)?;
                let y = self.eval_number_template(b, &frame)?;
                Ok(if compare(*op, x, y) { Step::Ok } else { Step::Fail })
            }
            GoalNode::Call(tmpl) => {
                let t = instantiate(tmpl, &frame, &mut self.store);
                self.dispatch_call(t)
            }
            GoalNode::VarCall(slot, args) => {
                let f = self.store.deref(frame[*slot as usize]);
                match self.store.node(f).clone() {
                    TermNode::Atom(sym) => {
                        let t = if args.is_empty() {
                            self.store.atom(sym)
                        } else {
                            let ids: Vec<TermId> =
                                args.iter().map(|a| instantiate(a, &frame, &mut self.store)).collect();
                            self.store.structure(sym, ids)
                        };
                        self.dispatch_call(t)
                    }
                    TermNode::Var { .. } => Err(Error::runtime("insufficiently instantiated goal")),
                    _ => Err(Error::runtime("goal functor is not an atom")),
                }
            }
        }
    }

    fn dispatch_call(&mut self, t: TermId) -> Result<Step> {
        self.reductions += 1;
        let t = self.store.deref(t);
        let (name, args): (SymbolId, Vec<TermId>) = match self.store.node(t) {
            TermNode::Atom(s) => (*s, Vec::new()),
            TermNode::Struct { functor, args } => (*functor, args.to_vec()),
            TermNode::Var { .. } => {
                return Err(Error::runtime("insufficiently instantiated goal"));
            }
            _ => return Err(Error::runtime("goal is not callable")),
        };
        let s = &self.syms;
        match (name, args.len()) {
            (n, 2) if n == s.comma => {
                push_goal(&mut self.goals, GoalEntry::CallTerm(args[1]));
                push_goal(&mut self.goals, GoalEntry::CallTerm(args[0]));
                Ok(Step::Ok)
            }
            (n, 2) if n == s.semicolon => {
                let lhs = self.store.deref(args[0]);
                if let TermNode::Struct { functor, args: ct } = self.store.node(lhs) {
                    if *functor == s.arrow && ct.len() == 2 {
                        let (c, th) = (ct[0], ct[1]);
                        let barrier = self.cps.len();
                        self.cps.push(ChoicePoint {
                            goals: self.goals.clone(),
                            mark: self.store.epoch(),
                            alt: Alt::CallGoal(args[1]),
                        });
                        push_goal(&mut self.goals, GoalEntry::CallTerm(th));
                        push_goal(&mut self.goals, GoalEntry::Commit(barrier));
                        push_goal(&mut self.goals, GoalEntry::CallTerm(c));
                        return Ok(Step::Ok);
                    }
                }
                self.cps.push(ChoicePoint {
                    goals: self.goals.clone(),
                    mark: self.store.epoch(),
                    alt: Alt::CallGoal(args[1]),
                });
                push_goal(&mut self.goals, GoalEntry::CallTerm(args[0]));
                Ok(Step::Ok)
            }
            (n, 2) if n == s.arrow => {
                let barrier = self.cps.len();
                let fail_atom = self.store.atom(s.fail);
                self.cps.push(ChoicePoint {
                    goals: self.goals.clone(),
                    mark: self.store.epoch(),
                    alt: Alt::CallGoal(fail_atom),
                });
                push_goal(&mut self.goals, GoalEntry::CallTerm(args[1]));
                push_goal(&mut self.goals, GoalEntry::Commit(barrier));
                push_goal(&mut self.goals, GoalEntry::CallTerm(args[0]));
                Ok(Step::Ok)
            }
            (n, 0) if n == s.true_ => Ok(Step::Ok),
            (n, 0) if n == s.fail => Ok(Step::Fail),
            (n, 2) if n == s.unify => {
                Ok(if self.store.unify(args[0], args[1]) { Step::Ok } else { Step::Fail })
            }
            (n, 2) if n == s.is_ => {
                let v = self.eval_arith_term(args[1])?;
                let num = self.store.int(v);
                Ok(if self.store.unify(args[0], num) { Step::Ok } else { Step::Fail })
            }
            (n, 2) if n == s.lt || n == s.gt || n == s.le || n == s.ge => {
                let op = if n == s.lt {
                    CmpOp::Lt
                } else if n == s.gt {
                    CmpOp::Gt
                } else if n == s.le {
                    CmpOp::Le
                } else {
                    CmpOp::Ge
                };
                let x = self.eval_number_term(args[0])?;
                let y = self.eval_number_term(args[1])?;
                Ok(if compare(op, x, y) { Step::Ok } else { Step::Fail })
            }
            (n, 1) if n == s.var_ => {
                Ok(if self.store.is_unbound_var(args[0]) { Step::Ok } else { Step::Fail })
            }
            (n, 1) if n == s.int_ => Ok(self.kind_test(args[0], CheapTest::Int)),
            (n, 1) if n == s.flt => Ok(self.kind_test(args[0], CheapTest::Flt)),
            (n, 1) if n == s.num => Ok(self.kind_test(args[0], CheapTest::Num)),
            (n, 1) if n == s.atm => Ok(self.kind_test(args[0], CheapTest::Atm)),
            (n, 1) if n == s.term_ => Ok(Step::Ok),
            (n, 1) if n == s.ground => {
                Ok(if self.store.is_ground(args[0]) { Step::Ok } else { Step::Fail })
            }
            (n, 2) if n == s.reify_check => {
                let bit = self.reify_check_dynamic(args[0])?;
                let b = self.store.int(bit as i64);
                Ok(if self.store.unify(args[1], b) { Step::Ok } else { Step::Fail })
            }
            (n, 1) if n == s.error_if_false => {
                let v = self.store.deref(args[0]);
                match self.store.node(v) {
                    TermNode::Int(0) => {
                        // A user-level check without a condition label.
                        let serial = self.mint_serial();
                        let call = self.store.render(t, &self.symbols);
                        self.push_violation(Violation {
                            instance: crate::assertion::AsrInstance {
                                cond: CondId { pred: PredKey { name, arity: 1 }, index: 0 },
                                serial,
                            },
                            kind: CondKind::Calls,
                            pred: "error_if_false/1".to_string(),
                            line: 0,
                            call,
                        });
                        Ok(Step::Ok)
                    }
                    TermNode::Int(_) => Ok(Step::Ok),
                    _ => Err(Error::runtime("error_if_false/1 expects a bit")),
                }
            }
            _ => {
                let key = PredKey { name, arity: args.len() as u32 };
                self.resolve_user_call(key, args)
            }
        }
    }

    fn kind_test(&self, t: TermId, k: CheapTest) -> Step {
        let node = self.store.node(self.store.deref(t));
        let ok = match k {
            CheapTest::Int => matches!(node, TermNode::Int(_)),
            CheapTest::Flt => matches!(node, TermNode::Float(_)),
            CheapTest::Num => matches!(node, TermNode::Int(_) | TermNode::Float(_)),
            CheapTest::Atm => matches!(node, TermNode::Atom(_)),
            CheapTest::Any => true,
        };
        if ok {
            Step::Ok
        } else {
            Step::Fail
        }
    }

    fn resolve_user_call(&mut self, key: PredKey, args: Vec<TermId>) -> Result<Step> {
        let Some(def) = self.checked.program.predicate(key) else {
            // No definition: the reduction does not apply.
            return Ok(Step::Fail);
        };
        let wrapper = if self.opts.rtchecks { self.checked.plan.wrapper(key) } else { None };
        let args = Rc::new(args);
        let strict = self.opts.condition_mode == ConditionMode::PerClause;

        if let Some(w) = wrapper {
            if !strict {
                self.eval_call_stage(w, &args)?;
                if self.abort_now {
                    return Ok(Step::Ok);
                }
            }
        }
        // PerClause mode tries every clause of the definition so the calls
        // condition is re-evaluated per resolution; first-argument indexing
        // is only sound when checks are hoisted to the wrapper.
        let candidates = if strict && wrapper.is_some() {
            (0..def.clauses.len() as u32).collect()
        } else {
            self.candidate_clauses(def, &args)
        };
        if candidates.is_empty() {
            return Ok(Step::Fail);
        }
        let first = candidates[0];
        if candidates.len() > 1 {
            self.cps.push(ChoicePoint {
                goals: self.goals.clone(),
                mark: self.store.epoch(),
                alt: Alt::Clauses {
                    def,
                    args: Rc::clone(&args),
                    candidates,
                    next: 1,
                    strict: if strict { wrapper } else { None },
                },
            });
        }
        if strict {
            if let Some(w) = wrapper {
                self.eval_call_stage(w, &args)?;
                if self.abort_now {
                    return Ok(Step::Ok);
                }
            }
        }
        Ok(if self.try_clause(def, first, &args)? { Step::Ok } else { Step::Fail })
    }

    fn candidate_clauses(&self, def: &PredDef, args: &[TermId]) -> Vec<u32> {
        if args.is_empty() {
            return (0..def.clauses.len() as u32).collect();
        }
        match self.store.ctor_key(args[0]) {
            None => (0..def.clauses.len() as u32).collect(),
            Some(k) => def
                .clauses
                .iter()
                .enumerate()
                .filter(|(_, c)| c.first_arg_key.is_none() || c.first_arg_key == Some(k))
                .map(|(i, _)| i as u32)
                .collect(),
        }
    }

    /// Resolve one clause: bind head slots to the call arguments, run the
    /// head equations, push the body. Rolls back its own bindings on failure.
    fn try_clause(&mut self, def: &'p PredDef, idx: u32, args: &[TermId]) -> Result<bool> {
        let clause: &'p Clause = &def.clauses[idx as usize];
        self.reductions += 1;
        let mark = self.store.epoch();
        let mut frame = Vec::with_capacity(clause.nvars as usize);
        frame.extend_from_slice(args);
        for _ in args.len()..clause.nvars as usize {
            frame.push(self.store.new_var());
        }
        for (slot, tmpl) in &clause.prologue {
            if !unify_template(frame[*slot as usize], tmpl, &frame, &mut self.store) {
                self.undo_with_invalidation(mark)?;
                return Ok(false);
            }
        }
        push_goal(&mut self.goals, GoalEntry::Run { node: &clause.body, frame: Rc::new(frame) });
        Ok(true)
    }

    // -- Checks ---------------------------------------------------------------

    fn mint_serial(&mut self) -> u64 {
        let s = self.next_serial;
        self.next_serial += 1;
        s
    }

    fn push_violation(&mut self, v: Violation) {
        self.errors.push(v);
        if self.opts.error_mode == ErrorMode::Abort {
            self.abort_now = true;
        }
    }

    /// Evaluate the call stage of a wrapper: reify the calls/pre literals,
    /// update the error set on a falsified calls condition, and schedule the
    /// success check behind the body.
    fn eval_call_stage(&mut self, w: &'p CompiledWrapper, args: &[TermId]) -> Result<()> {
        let mut bits = vec![0u8; w.nbits as usize];
        for pc in &w.call_reify {
            bits[pc.bit.0 as usize] = self.eval_prop_check(pc, args)? as u8;
        }
        eval_assigns(&w.call_assigns, &mut bits);
        if let Some((cond, rc, line)) = w.calls_cond {
            let serial = self.mint_serial();
            if bits[rc.0 as usize] == 0 {
                let call = self.render_call(w, args);
                self.push_violation(Violation {
                    instance: crate::assertion::AsrInstance { cond, serial },
                    kind: CondKind::Calls,
                    pred: w.pred.render(&self.symbols),
                    line,
                    call,
                });
                if self.abort_now {
                    return Ok(());
                }
            }
        }
        if w.has_success_stage() {
            let instances = w
                .success_conds
                .iter()
                .map(|sc| crate::assertion::AsrInstance { cond: sc.id, serial: self.mint_serial() })
                .collect();
            let pending =
                PendingSuccess { wrapper: w, bits, args: args.to_vec(), instances };
            push_goal(&mut self.goals, GoalEntry::CheckSuccess(Rc::new(pending)));
        }
        Ok(())
    }

    /// Consume a success-check literal: evaluate postconditions in the
    /// success store and extend the error set per violated condition.
    fn eval_success_stage(&mut self, ps: &PendingSuccess<'p>) -> Result<()> {
        let w = ps.wrapper;
        let mut bits = ps.bits.clone();
        if self.opts.short_circuit {
            let mut needed = vec![false; w.nbits as usize];
            for sc in &w.success_conds {
                let live = match sc.pre {
                    PreBit::Const1 => true,
                    PreBit::Bit(b) => bits[b.0 as usize] == 1,
                };
                if live {
                    for b in &sc.post_bits {
                        needed[b.0 as usize] = true;
                    }
                }
            }
            for pc in &w.success_reify {
                if needed[pc.bit.0 as usize] {
                    bits[pc.bit.0 as usize] = self.eval_prop_check(pc, &ps.args)? as u8;
                }
            }
        } else {
            for pc in &w.success_reify {
                bits[pc.bit.0 as usize] = self.eval_prop_check(pc, &ps.args)? as u8;
            }
        }
        eval_assigns(&w.success_assigns, &mut bits);
        for (sc, inst) in w.success_conds.iter().zip(ps.instances.iter()) {
            if bits[sc.impl_bit.0 as usize] == 0 {
                let call = self.render_call(w, &ps.args);
                self.push_violation(Violation {
                    instance: *inst,
                    kind: CondKind::Success,
                    pred: w.pred.render(&self.symbols),
                    line: sc.line,
                    call,
                });
                if self.abort_now {
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn render_call(&self, w: &CompiledWrapper, args: &[TermId]) -> String {
        let name = self.symbols.name(w.pred.name);
        if args.is_empty() {
            return name.to_string();
        }
        let rendered: Vec<String> =
            args.iter().map(|a| self.store.render(*a, &self.symbols)).collect();
        format!("{}({})", name, rendered.join(","))
    }

    fn eval_prop_check(&mut self, pc: &PropCheck, args: &[TermId]) -> Result<bool> {
        let term = match &pc.term_arg {
            Template::Var(s) => args[*s as usize],
            t => instantiate(t, args, &mut self.store),
        };
        self.eval_prop_class(pc.class, term)
    }

    /// `succeeds_trivially` for a classified property: evaluation never binds
    /// store variables (type tests and automaton runs are read-only).
    fn eval_prop_class(&mut self, class: PropClass, t: TermId) -> Result<bool> {
        Ok(match class {
            PropClass::Never => self.store.is_unbound_var(t),
            PropClass::Cheap(k) => matches!(self.kind_test(t, k), Step::Ok),
            PropClass::Ground => self.cached_check(t, STATE_GROUND)?,
            PropClass::Regtype(state) => self.cached_check(t, state)?,
        })
    }

    /// Dynamic property dispatch for the `reify_check/2` builtin.
    fn reify_check_dynamic(&mut self, prop: TermId) -> Result<bool> {
        let p = self.store.deref(prop);
        let (name, args) = match self.store.node(p) {
            TermNode::Struct { functor, args } => (*functor, args.to_vec()),
            _ => return Err(Error::runtime("reify_check/2 expects a property with arguments")),
        };
        let s = &self.syms;
        let class = if name == s.var_ && args.len() == 1 {
            PropClass::Never
        } else if name == s.int_ && args.len() == 1 {
            PropClass::Cheap(CheapTest::Int)
        } else if name == s.flt && args.len() == 1 {
            PropClass::Cheap(CheapTest::Flt)
        } else if name == s.num && args.len() == 1 {
            PropClass::Cheap(CheapTest::Num)
        } else if name == s.atm && args.len() == 1 {
            PropClass::Cheap(CheapTest::Atm)
        } else if name == s.term_ && args.len() == 1 {
            PropClass::Cheap(CheapTest::Any)
        } else if name == s.ground && args.len() == 1 {
            PropClass::Ground
        } else {
            let key = PredKey { name, arity: args.len() as u32 };
            let is_regtype =
                self.checked.program.predicate(key).map(|d| d.is_regtype).unwrap_or(false);
            if !is_regtype {
                return Err(Error::Definition(format!(
                    "unknown property {}/{}",
                    self.symbols.name(name),
                    args.len()
                )));
            }
            let mut expr_args = Vec::new();
            for a in &args[1..] {
                expr_args.push(self.term_to_type_expr(*a)?);
            }
            let expr = TypeExpr::Instance(key, expr_args);
            match self.checked.universe.find_instance(&expr) {
                Some(state) => PropClass::Regtype(state),
                None => {
                    return Err(Error::Definition(format!(
                        "regtype instance {} was not compiled at load time",
                        self.store.render(p, &self.symbols)
                    )));
                }
            }
        };
        self.eval_prop_class(class, args[0])
    }

    fn term_to_type_expr(&self, t: TermId) -> Result<TypeExpr> {
        let t = self.store.deref(t);
        match self.store.node(t) {
            TermNode::Atom(s) => {
                let name = self.symbols.name(*s);
                Ok(match name {
                    "int" => TypeExpr::Prim(PrimClass::Int),
                    "flt" => TypeExpr::Prim(PrimClass::Flt),
                    "num" => TypeExpr::Prim(PrimClass::Num),
                    "atm" => TypeExpr::Prim(PrimClass::Atm),
                    "term" => TypeExpr::Prim(PrimClass::Any),
                    "ground" => TypeExpr::Ground,
                    _ => TypeExpr::Instance(PredKey { name: *s, arity: 1 }, Vec::new()),
                })
            }
            TermNode::Struct { functor, args } => {
                let mut sub = Vec::new();
                for a in args.iter() {
                    sub.push(self.term_to_type_expr(*a)?);
                }
                Ok(TypeExpr::Instance(PredKey { name: *functor, arity: args.len() as u32 + 1 }, sub))
            }
            _ => Err(Error::runtime("type parameters must be concrete type expressions")),
        }
    }

    // -- Cached regular type checking ------------------------------------------

    /// Top-level cached membership check.
    fn cached_check(&mut self, t: TermId, state: StateId) -> Result<bool> {
        let mut max_depth = 0u32;
        self.deref_log.clear();
        let r = self.reg_check(t, state, 0, &mut max_depth)?;
        self.cache.stats.record_check_depth(max_depth);
        Ok(r)
    }

    fn deref_logged(&mut self, t: TermId) -> TermId {
        if !self.cache.wants_deps() {
            return self.store.deref(t);
        }
        let mut cur = t;
        loop {
            match self.store.node(cur) {
                TermNode::Var { binding: Some(next), .. } => {
                    self.deref_log.push(cur);
                    cur = *next;
                }
                _ => return cur,
            }
        }
    }

    /// Check that the term at `x` inhabits `state`, at depth `d`: find the
    /// constructor matching the term's functor (else false); atomic values
    /// succeed uncached; a cache hit returns immediately; otherwise check all
    /// arguments at depth d+1 and cache the fact when d is under the limit.
    fn reg_check(&mut self, x: TermId, state: StateId, d: u32, max_depth: &mut u32) -> Result<bool> {
        self.cache.stats.node_visits += 1;
        *max_depth = (*max_depth).max(d);
        let deps_from = self.deref_log.len();
        let x = self.deref_logged(x);
        let child_states: Vec<StateId>;
        let args: Vec<TermId>;
        match self.checked.universe.state_def(state) {
            StateDef::Primitive(PrimClass::Any) => return Ok(true),
            StateDef::Primitive(p) => {
                let ok = match self.store.node(x) {
                    TermNode::Int(_) => matches!(p, PrimClass::Int | PrimClass::Num),
                    TermNode::Float(_) => matches!(p, PrimClass::Flt | PrimClass::Num),
                    TermNode::Atom(_) => matches!(p, PrimClass::Atm),
                    _ => false,
                };
                return Ok(ok);
            }
            StateDef::Ground => match self.store.node(x) {
                TermNode::Var { .. } => return Ok(false),
                TermNode::Int(_) | TermNode::Float(_) | TermNode::Atom(_) => return Ok(true),
                TermNode::Struct { args: a, .. } => {
                    args = a.to_vec();
                    child_states = vec![STATE_GROUND; args.len()];
                }
            },
            StateDef::Table(table) => {
                let Some(key) = self.store.ctor_key(x) else {
                    return Ok(false);
                };
                let Some(states) = table.lookup(&key) else {
                    return Ok(false);
                };
                match self.store.node(x) {
                    TermNode::Struct { args: a, .. } => {
                        args = a.to_vec();
                        child_states = states.to_vec();
                    }
                    _ => return Ok(true), // atomic value, not cached
                }
            }
        }
        let key = crate::cache::CacheKey { node: x, type_id: state };
        if self.cache.lookup(key) {
            if self.opts.audit
                && !brute_force_recognize(&self.store, &self.checked.universe, x, state)
            {
                return Err(Error::internal(format!(
                    "audit: stale cache entry (node {}, {})",
                    x.0,
                    self.checked.universe.state_name(state)
                )));
            }
            if self.cache.wants_deps() {
                // The enclosing check depends on whatever this entry did.
                if let Some(deps) = self.cache.deps_of(key) {
                    let deps = deps.to_vec();
                    self.deref_log.extend(deps);
                }
            }
            if self.cache.config.hit_propagation {
                self.propagate_hit(key, &args, &child_states, d);
            }
            return Ok(true);
        }
        for (a, s) in args.iter().zip(child_states.iter()) {
            if !self.reg_check(*a, *s, d + 1, max_depth)? {
                return Ok(false);
            }
        }
        if self.opts.audit && !brute_force_recognize(&self.store, &self.checked.universe, x, state) {
            return Err(Error::internal("audit: inserting an unverified fact".to_string()));
        }
        let deps = if self.cache.wants_deps() {
            self.deref_log[deps_from..].to_vec()
        } else {
            Vec::new()
        };
        self.cache.insert(key, d, &deps);
        Ok(true)
    }

    /// On a hit, re-insert the hit entry's compound argument facts one level
    /// down (subject to the depth gate). The entry's own validity entails
    /// them; the entry's dependency set, which covers the whole subtree, is
    /// inherited.
    fn propagate_hit(
        &mut self,
        key: crate::cache::CacheKey,
        args: &[TermId],
        states: &[StateId],
        d: u32,
    ) {
        if args.is_empty() {
            return;
        }
        if let Some(limit) = self.cache.config.depth_limit {
            if d + 1 >= limit {
                return;
            }
        }
        let parent_deps: Vec<TermId> = if self.cache.wants_deps() {
            self.cache.deps_of(key).map(|d| d.to_vec()).unwrap_or_default()
        } else {
            Vec::new()
        };
        for (a, s) in args.iter().zip(states.iter()) {
            let sdef = self.checked.universe.state_def(*s);
            if !matches!(sdef, StateDef::Table(_) | StateDef::Ground) {
                continue;
            }
            let a = self.store.deref(*a);
            if matches!(self.store.node(a), TermNode::Struct { .. }) {
                self.cache
                    .insert(crate::cache::CacheKey { node: a, type_id: *s }, d + 1, &parent_deps);
            }
        }
    }

    /// Verify every resident entry against the brute-force recognizer.
    fn audit_sweep(&mut self) -> Result<()> {
        for key in self.cache.resident_keys() {
            if !brute_force_recognize(&self.store, &self.checked.universe, key.node, key.type_id) {
                return Err(Error::internal(format!(
                    "audit: resident entry (node {}, {}) fails the oracle",
                    key.node.0,
                    self.checked.universe.state_name(key.type_id)
                )));
            }
        }
        Ok(())
    }

    // -- Arithmetic -------------------------------------------------------------

    fn eval_arith_template(&mut self, t: &Template, frame: &[TermId]) -> Result<i64> {
        match t {
            Template::Int(v) => Ok(*v),
            Template::Var(s) => self.eval_arith_term(frame[*s as usize]),
            Template::Struct(f, args) if args.len() == 2 => {
                let name = self.symbols.name(*f).to_string();
                let a = self.eval_arith_template(&args[0], frame)?;
                let b = self.eval_arith_template(&args[1], frame)?;
                arith_op(&name, a, b)
            }
            Template::Struct(f, args) if args.len() == 1 && self.symbols.name(*f) == "-" => {
                let a = self.eval_arith_template(&args[0], frame)?;
                a.checked_neg().ok_or_else(|| Error::runtime("integer overflow"))
            }
            _ => Err(Error::runtime("invalid arithmetic expression")),
        }
    }

    fn eval_arith_term(&mut self, t: TermId) -> Result<i64> {
        let t = self.store.deref(t);
        match self.store.node(t).clone() {
            TermNode::Int(v) => Ok(v),
            TermNode::Float(_) => Err(Error::runtime("float in integer arithmetic")),
            TermNode::Var { .. } => Err(Error::runtime("unbound variable in arithmetic")),
            TermNode::Struct { functor, args } if args.len() == 2 => {
                let name = self.symbols.name(functor).to_string();
                let a = self.eval_arith_term(args[0])?;
                let b = self.eval_arith_term(args[1])?;
                arith_op(&name, a, b)
            }
            TermNode::Struct { functor, args }
                if args.len() == 1 && self.symbols.name(functor) == "-" =>
            {
                let a = self.eval_arith_term(args[0])?;
                a.checked_neg().ok_or_else(|| Error::runtime("integer overflow"))
            }
            _ => Err(Error::runtime("invalid arithmetic expression")),
        }
    }

    fn eval_number_template(&mut self, t: &Template, frame: &[TermId]) -> Result<f64> {
        match t {
            Template::Int(v) => Ok(*v as f64),
            Template::Float(v) => Ok(*v),
            Template::Var(s) => self.eval_number_term(frame[*s as usize]),
            _ => self.eval_arith_template(t, frame).map(|v| v as f64),
        }
    }

    fn eval_number_term(&mut self, t: TermId) -> Result<f64> {
        let d = self.store.deref(t);
        match self.store.node(d) {
            TermNode::Int(v) => Ok(*v as f64),
            TermNode::Float(v) => Ok(*v),
            _ => self.eval_arith_term(d).map(|v| v as f64),
        }
    }

    // -- Test hooks ---------------------------------------------------------------

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn cache(&self) -> &CheckCache {
        &self.cache
    }
}

fn arith_op(name: &str, a: i64, b: i64) -> Result<i64> {
    let ov = || Error::runtime("integer overflow");
    match name {
        "+" => a.checked_add(b).ok_or_else(ov),
        "-" => a.checked_sub(b).ok_or_else(ov),
        "*" => a.checked_mul(b).ok_or_else(ov),
        "//" => {
            if b == 0 {
                Err(Error::runtime("division by zero"))
            } else {
                a.checked_div(b).ok_or_else(ov)
            }
        }
        "mod" => {
            if b == 0 {
                Err(Error::runtime("division by zero"))
            } else {
                Ok(a.rem_euclid(b))
            }
        }
        "#" => Ok(a ^ b),
        "/\\" => Ok(a & b),
        "\\/" => Ok(a | b),
        _ => Err(Error::runtime(format!("unknown arithmetic operator {name}"))),
    }
}

fn compare(op: CmpOp, a: f64, b: f64) -> bool {
    match op {
        CmpOp::Lt => a < b,
        CmpOp::Gt => a > b,
        CmpOp::Le => a <= b,
        CmpOp::Ge => a >= b,
    }
}

/// Convenience entry point: run `goal` against a loaded program.
pub fn solve(checked: &CheckedProgram, goal: &str, opts: SolveOptions) -> Result<SolveOutcome> {
    let mut engine = Engine::new(checked, opts);
    engine.solve_text(goal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::Policy;

    const EXAMPLE1: &str = "\
:- pred p(X,Y) : (int(X), var(Y)) => (int(X), int(Y)).
:- pred p(X,Y) : (int(X), var(Y)) => (int(X), atm(Y)).
:- pred p(X,Y) : (atm(X), var(Y)) => (atm(X), atm(Y)).

p(1,42).  p(2,gamma).  p(a,alpha).
";

    fn run(src: &str, goal: &str, opts: SolveOptions) -> SolveOutcome {
        let checked = load_program(src).unwrap();
        solve(&checked, goal, opts).unwrap()
    }

    fn answers(out: &SolveOutcome) -> Vec<String> {
        out.answers.iter().map(|a| a.render()).collect()
    }

    #[test]
    fn plain_resolution_and_backtracking() {
        let out = run(EXAMPLE1, "p(X, Y)", SolveOptions { rtchecks: false, ..Default::default() });
        assert_eq!(
            answers(&out),
            vec!["X = 1, Y = 42", "X = 2, Y = gamma", "X = a, Y = alpha"]
        );
        assert!(out.errors.is_empty());
    }

    #[test]
    fn worked_example_success_violation() {
        // Hand evaluation (done before the engine was written): query p(1,Y)
        // gives Y=42. C_0 holds (int(1), var(Y)); C_1 pre holds, post
        // (int(1), int(42)) holds; C_2 pre holds, post needs atm(42): false,
        // so the error set carries exactly C_2's instance; C_3 pre fails.
        let out = run(EXAMPLE1, "p(1, Y)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["Y = 42"]);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].kind, CondKind::Success);
        assert_eq!(out.errors[0].instance.cond.index, 2);
    }

    #[test]
    fn worked_example_calls_violation() {
        // p(3.5, Y): 3.5 is neither int nor atm, so the calls condition C_0
        // is falsified; no clause matches so there are no answers, but the
        // violation remains observable.
        let out = run(EXAMPLE1, "p(3.5, Y)", SolveOptions::default());
        assert!(out.answers.is_empty());
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].kind, CondKind::Calls);
        assert_eq!(out.errors[0].instance.cond.index, 0);
    }

    #[test]
    fn no_assertions_behaves_standard() {
        let out = run("q(1). q(2).", "q(X)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["X = 1", "X = 2"]);
        assert!(out.errors.is_empty());
        assert_eq!(out.stats.cache.lookups, 0);
    }

    #[test]
    fn append_with_list_assertions() {
        let src = "\
:- regtype list/2.
list([],T).
list([X|Xs],T) :- T(X), list(Xs,T).

:- pred append(A,B,C) : (list(A,int), list(B,int)) => list(C,int).
append([],L,L).
append([H|T],L,[H|R]) :- append(T,L,R).
";
        let out = run(src, "append([1],[2],Z)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["Z = [1,2]"]);
        assert!(out.errors.is_empty());
    }

    #[test]
    fn if_then_else_commits() {
        let src = "max(X,Y,Z) :- ( X > Y -> Z = X ; Z = Y ).";
        let out = run(src, "max(3,5,Z)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["Z = 5"]);
        let out = run(src, "max(7,5,Z)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["Z = 7"]);
        // No leftover choice point: exactly one answer each.
    }

    #[test]
    fn arithmetic_and_bitops() {
        let out = run("go(R) :- R is (1 # 1) \\/ (1 /\\ 1).", "go(R)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["R = 1"]);
        let out = run("go(R) :- R is 7 mod 3 + 10 // 2.", "go(R)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["R = 6"]);
        let err = solve(
            &load_program("go(R) :- R is X + 1.").unwrap(),
            "go(R)",
            SolveOptions::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn float_comparison_allowed() {
        let out = run("go :- 1.5 < 2, 3 > 2.5.", "go", SolveOptions::default());
        assert_eq!(out.answers.len(), 1);
    }

    #[test]
    fn disjunction_enumerates() {
        let out = run("d(X) :- ( X = 1 ; X = 2 ; X = 3 ).", "d(X)", SolveOptions::default());
        assert_eq!(answers(&out), vec!["X = 1", "X = 2", "X = 3"]);
    }

    #[test]
    fn unknown_predicate_fails() {
        let out = run("q(1).", "missing(2)", SolveOptions::default());
        assert!(out.answers.is_empty());
        assert!(out.errors.is_empty());
    }

    #[test]
    fn abort_mode_stops_at_first_violation() {
        let opts = SolveOptions { error_mode: ErrorMode::Abort, ..Default::default() };
        let out = run(EXAMPLE1, "p(3.5, Y)", opts);
        assert!(out.aborted);
        assert_eq!(out.errors.len(), 1);
    }

    #[test]
    fn wrapper_and_per_clause_agree_on_answers_and_conds() {
        for goal in ["p(1,Y)", "p(a,Y)", "p(X,Y)", "p(3.5,Y)"] {
            let w = run(EXAMPLE1, goal, SolveOptions::default());
            let s = run(
                EXAMPLE1,
                goal,
                SolveOptions { condition_mode: ConditionMode::PerClause, ..Default::default() },
            );
            assert_eq!(answers(&w), answers(&s), "goal {goal}");
            let conds = |o: &SolveOutcome| {
                let mut c: Vec<(PredKey, u32)> =
                    o.errors.iter().map(|v| (v.instance.cond.pred, v.instance.cond.index)).collect();
                c.sort();
                c.dedup();
                c
            };
            assert_eq!(conds(&w), conds(&s), "goal {goal}");
        }
    }

    #[test]
    fn rtchecks_off_identical_answers_no_check_cost() {
        let on = run(EXAMPLE1, "p(X,Y)", SolveOptions::default());
        let off = run(EXAMPLE1, "p(X,Y)", SolveOptions { rtchecks: false, ..Default::default() });
        assert_eq!(answers(&on), answers(&off));
        assert_eq!(off.stats.cache.node_visits, 0);
        assert_eq!(off.stats.cache.lookups, 0);
    }

    #[test]
    fn succeeds_trivially_samples() {
        // int(1) holds; list(int) on a partial list does not (it would
        // constrain the tail); term(X) holds for a free variable while
        // ground(X) does not.
        let src = "\
:- regtype list/2.
list([],T).
list([X|Xs],T) :- T(X), list(Xs,T).
:- pred probe(A,B,C,D) : (int(A), list(B,int), term(C), ground(D)).
probe(_,_,_,_).
";
        let checked = load_program(src).unwrap();
        let out = solve(&checked, "probe(1, [1|T], C, D)", SolveOptions::default()).unwrap();
        assert_eq!(out.answers.len(), 1);
        // Exactly one violation: the calls condition (list check fails on the
        // partial list; ground fails on D; they share C_0).
        assert_eq!(out.errors.len(), 1);
        let ok = solve(&checked, "probe(1, [1,2], C, 5)", SolveOptions::default()).unwrap();
        assert!(ok.errors.is_empty());
    }

    #[test]
    fn transformed_print_runs_with_error_sink() {
        // Print the transformed program, reload it, and run the wrapper
        // entry: answers agree with the stripped program; reified checks run
        // through reify_check/2 and error_if_false/1.
        let checked = load_program(EXAMPLE1).unwrap();
        let printed = crate::transform::render_transformed(&checked.program, &checked.plan);
        let reloaded = load_program(&printed).unwrap();
        let out = solve(&reloaded, "p(1,Y)", SolveOptions::default()).unwrap();
        assert_eq!(answers(&out), vec!["Y = 42"]);
        // The combined Rs collapses the three conditions into one error.
        assert_eq!(out.errors.len(), 1);
    }

    #[test]
    fn label_injectivity() {
        let out = run(EXAMPLE1, "p(X,Y)", SolveOptions::default());
        let mut serials: Vec<u64> = out.errors.iter().map(|v| v.instance.serial).collect();
        let before = serials.len();
        serials.sort_unstable();
        serials.dedup();
        assert_eq!(serials.len(), before);
    }

    #[test]
    fn cache_config_equivalence_spot() {
        let src = "\
:- regtype list/2.
list([],T).
list([X|Xs],T) :- T(X), list(Xs,T).
:- pred len(L,N) : (list(L,int), var(N)).
len([],0).
len([_|T],N) :- len(T,N0), N is N0 + 1.
";
        let mut base = None;
        for cfg in [
            CacheConfig::none(),
            CacheConfig::lru(1, Some(1)),
            CacheConfig::lru(8, Some(2)),
            CacheConfig::dm(8, None),
            CacheConfig {
                chaos: Some(crate::cache::ChaosConfig { seed: 3, flush_per_mille: 200 }),
                ..CacheConfig::lru(8, Some(2))
            },
        ] {
            let out = run(src, "len([1,2,3,4,5], N)", SolveOptions { cache: cfg, ..Default::default() });
            let canon = out.canonical();
            match &base {
                None => base = Some(canon),
                Some(b) => assert_eq!(&canon, b),
            }
        }
    }

    #[test]
    fn reg_check_visit_counters() {
        // Second check of the same tree hits the root: strictly fewer visits,
        // and the hit costs a single node visit.
        let src = "\
:- regtype bintree/2.
bintree(empty,T).
bintree(tree(LC,X,RC),T) :- bintree(LC,T), T(X), bintree(RC,T).
:- pred touch(T) : bintree(T,int).
touch(_).
twice(T) :- touch(T), touch(T).
";
        let checked = load_program(src).unwrap();
        let mut eng = Engine::new(&checked, SolveOptions::default());
        let t = "tree(tree(empty,1,empty),2,tree(empty,3,empty))";
        let out = eng.solve_text(&format!("touch({t})")).unwrap();
        assert!(out.errors.is_empty());
        let first = eng.cache().stats.node_visits;
        assert!(first > 1);
        // Checking the same term (same node ids) twice: the second check hits
        // the root and costs a single node visit.
        let mut eng2 = Engine::new(&checked, SolveOptions::default());
        let out2 = eng2.solve_text(&format!("twice({t})")).unwrap();
        assert!(out2.errors.is_empty());
        let both = eng2.cache().stats.node_visits;
        assert_eq!(both, first + 1);
        assert_eq!(eng2.cache().stats.hits, 1);
    }

    #[test]
    fn audit_runs_clean() {
        let src = "\
:- regtype list/2.
list([],T).
list([X|Xs],T) :- T(X), list(Xs,T).
:- pred len(L,N) : (list(L,int), var(N)).
len([],0).
len([_|T],N) :- len(T,N0), N is N0 + 1.
";
        let opts = SolveOptions { audit: true, ..Default::default() };
        let out = run(src, "len([1,2,3,4], N)", opts);
        assert_eq!(answers(&out), vec!["N = 4"]);
    }

    #[test]
    fn step_limit_reports() {
        let src = "loop(X) :- loop(X).";
        let opts = SolveOptions { step_limit: Some(1000), ..Default::default() };
        let out = run(src, "loop(1)", opts);
        assert!(out.step_limited);
    }

    #[test]
    fn policy_none_equals_uncached_counters() {
        let src = "\
:- regtype list/2.
list([],T).
list([X|Xs],T) :- T(X), list(Xs,T).
:- pred len(L,N) : (list(L,int), var(N)).
len([],0).
len([_|T],N) :- len(T,N0), N is N0 + 1.
";
        let none = run(
            src,
            "len([1,2,3,4,5,6], N)",
            SolveOptions { cache: CacheConfig::none(), ..Default::default() },
        );
        assert_eq!(none.stats.cache.hits, 0);
        assert!(none.stats.cache.node_visits > 0);
        let lru = run(src, "len([1,2,3,4,5,6], N)", SolveOptions::default());
        assert!(lru.stats.cache.node_visits < none.stats.cache.node_visits);
    }

    #[test]
    fn regtype_clauses_run_as_logic_program() {
        // The definitional clauses of a regtype execute as ordinary
        // predicates (the clause-level oracle path).
        let src = "\
:- regtype bintree/2.
bintree(empty,T).
bintree(tree(LC,X,RC),T) :- bintree(LC,T), T(X), bintree(RC,T).
";
        let out = run(src, "bintree(tree(empty,5,empty), int)", SolveOptions::default());
        assert_eq!(out.answers.len(), 1);
        let out2 = run(src, "bintree(tree(empty,a,empty), int)", SolveOptions::default());
        assert!(out2.answers.is_empty());
    }
}
