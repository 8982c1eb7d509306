//! Program representation: predicates, clauses with normalized heads, goal
//! trees and templates, plus a printer whose output re-parses to a
//! structurally identical program.
//!
//! Heads are normalized at build time: every clause head of `p/n` becomes
//! `p(X1,...,Xn)` with distinct fresh variables, and the original argument
//! terms turn into leading equations (the clause "prologue"). The original
//! head argument shapes are kept for clause indexing and for regular-program
//! validation.

use std::collections::HashMap;

use crate::assertion::PredAssertion;
use crate::error::{Error, Result};
use crate::parse::{Ast, Item};
use crate::symbol::{CtorKey, SymbolId, SymbolTable};
use crate::term::{Store, TermId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredKey {
    pub name: SymbolId,
    pub arity: u32,
}

impl PredKey {
    pub fn render(&self, symbols: &SymbolTable) -> String {
        format!("{}/{}", symbols.name(self.name), self.arity)
    }
}

/// A term over the variable slots of one clause (or one assertion head).
#[derive(Debug, Clone, PartialEq)]
pub enum Template {
    Var(u16),
    Int(i64),
    Float(f64),
    Atom(SymbolId),
    Struct(SymbolId, Box<[Template]>),
}

impl Template {
    pub fn ctor_key(&self) -> Option<CtorKey> {
        match self {
            Template::Var(_) => None,
            Template::Int(i) => Some(CtorKey::Int(*i)),
            Template::Float(f) => Some(CtorKey::Float(f.to_bits())),
            Template::Atom(s) => Some(CtorKey::Atom(*s)),
            Template::Struct(s, args) => Some(CtorKey::Struct(*s, args.len() as u32)),
        }
    }

    pub fn visit_vars(&self, f: &mut impl FnMut(u16)) {
        match self {
            Template::Var(v) => f(*v),
            Template::Struct(_, args) => {
                for a in args.iter() {
                    a.visit_vars(f);
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
}

impl CmpOp {
    pub fn text(&self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "=<",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone)]
pub enum GoalNode {
    True,
    Fail,
    Conj(Box<GoalNode>, Box<GoalNode>),
    Disj(Box<GoalNode>, Box<GoalNode>),
    IfThenElse(Box<GoalNode>, Box<GoalNode>, Box<GoalNode>),
    Unify(Template, Template),
    Is(Template, Template),
    Cmp(CmpOp, Template, Template),
    /// Call of an atom or structure goal.
    Call(Template),
    /// Call with a variable in functor position, e.g. `T(X)`.
    VarCall(u16, Box<[Template]>),
}

#[derive(Debug, Clone)]
pub struct Clause {
    pub nvars: u16,
    /// Print names per slot; `None` for invented slots.
    pub var_names: Vec<Option<String>>,
    /// Original head argument terms over the clause slot space.
    pub orig_head: Box<[Template]>,
    /// Head-normalization equations `slot = template`, in argument order.
    pub prologue: Vec<(u16, Template)>,
    pub body: GoalNode,
    pub line: u32,
    /// Principal functor of the original first argument, for indexing.
    pub first_arg_key: Option<CtorKey>,
}

#[derive(Debug)]
pub struct PredDef {
    pub key: PredKey,
    pub clauses: Vec<Clause>,
    pub assertions: Vec<PredAssertion>,
    pub is_regtype: bool,
    pub decl_line: u32,
}

#[derive(Debug, Default)]
pub struct Program {
    pub symbols: SymbolTable,
    preds: Vec<PredDef>,
    index: HashMap<PredKey, usize>,
}

impl Program {
    pub fn predicate(&self, key: PredKey) -> Option<&PredDef> {
        self.index.get(&key).map(|&i| &self.preds[i])
    }

    pub fn predicates(&self) -> impl Iterator<Item = &PredDef> {
        self.preds.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    fn pred_entry(&mut self, key: PredKey, line: u32) -> &mut PredDef {
        if let Some(&i) = self.index.get(&key) {
            return &mut self.preds[i];
        }
        let i = self.preds.len();
        self.preds.push(PredDef {
            key,
            clauses: Vec::new(),
            assertions: Vec::new(),
            is_regtype: false,
            decl_line: line,
        });
        self.index.insert(key, i);
        &mut self.preds[i]
    }
}

/// Per-clause variable scope during building.
struct VarScope {
    names: Vec<Option<String>>,
    by_name: HashMap<String, u16>,
}

impl VarScope {
    fn new() -> Self {
        VarScope { names: Vec::new(), by_name: HashMap::new() }
    }

    fn fresh(&mut self, name: Option<String>) -> u16 {
        let slot = self.names.len() as u16;
        self.names.push(name);
        slot
    }

    fn slot(&mut self, name: &str) -> u16 {
        if name == "_" {
            return self.fresh(None);
        }
        if let Some(&s) = self.by_name.get(name) {
            return s;
        }
        let s = self.fresh(Some(name.to_string()));
        self.by_name.insert(name.to_string(), s);
        s
    }

    /// Bind `name` to an already-existing slot (head aliasing).
    fn alias(&mut self, name: &str, slot: u16) {
        self.by_name.insert(name.to_string(), slot);
        self.names[slot as usize] = Some(name.to_string());
    }
}

fn ast_to_template(ast: &Ast, scope: &mut VarScope, symbols: &mut SymbolTable) -> Result<Template> {
    Ok(match ast {
        Ast::Var(name) => Template::Var(scope.slot(name)),
        Ast::Int(v) => Template::Int(*v),
        Ast::Float(v) => Template::Float(*v),
        Ast::Atom(name) => Template::Atom(symbols.intern(name)),
        Ast::Struct(name, args) => {
            let mut ts = Vec::with_capacity(args.len());
            for a in args {
                ts.push(ast_to_template(a, scope, symbols)?);
            }
            Template::Struct(symbols.intern(name), ts.into_boxed_slice())
        }
        Ast::VarCall(..) => {
            return Err(Error::definition(
                "variable-headed term is only allowed as a body literal".to_string(),
            ));
        }
    })
}

fn compile_goal(ast: &Ast, scope: &mut VarScope, symbols: &mut SymbolTable) -> Result<GoalNode> {
    Ok(match ast {
        Ast::Atom(a) if a == "true" => GoalNode::True,
        Ast::Atom(a) if a == "fail" => GoalNode::Fail,
        Ast::Struct(op, args) if op == "," && args.len() == 2 => GoalNode::Conj(
            Box::new(compile_goal(&args[0], scope, symbols)?),
            Box::new(compile_goal(&args[1], scope, symbols)?),
        ),
        Ast::Struct(op, args) if op == ";" && args.len() == 2 => {
            if let Ast::Struct(arrow, ct) = &args[0] {
                if arrow == "->" && ct.len() == 2 {
                    return Ok(GoalNode::IfThenElse(
                        Box::new(compile_goal(&ct[0], scope, symbols)?),
                        Box::new(compile_goal(&ct[1], scope, symbols)?),
                        Box::new(compile_goal(&args[1], scope, symbols)?),
                    ));
                }
            }
            GoalNode::Disj(
                Box::new(compile_goal(&args[0], scope, symbols)?),
                Box::new(compile_goal(&args[1], scope, symbols)?),
            )
        }
        Ast::Struct(op, args) if op == "->" && args.len() == 2 => GoalNode::IfThenElse(
            Box::new(compile_goal(&args[0], scope, symbols)?),
            Box::new(compile_goal(&args[1], scope, symbols)?),
            Box::new(GoalNode::Fail),
        ),
        Ast::Struct(op, args) if op == "=" && args.len() == 2 => GoalNode::Unify(
            ast_to_template(&args[0], scope, symbols)?,
            ast_to_template(&args[1], scope, symbols)?,
        ),
        Ast::Struct(op, args) if op == "is" && args.len() == 2 => GoalNode::Is(
            ast_to_template(&args[0], scope, symbols)?,
            ast_to_template(&args[1], scope, symbols)?,
        ),
        Ast::Struct(op, args) if args.len() == 2 && matches!(op.as_str(), "<" | ">" | "=<" | ">=") => {
            let cmp = match op.as_str() {
                "<" => CmpOp::Lt,
                ">" => CmpOp::Gt,
                "=<" => CmpOp::Le,
                _ => CmpOp::Ge,
            };
            GoalNode::Cmp(
                cmp,
                ast_to_template(&args[0], scope, symbols)?,
                ast_to_template(&args[1], scope, symbols)?,
            )
        }
        Ast::VarCall(name, args) => {
            let slot = scope.slot(name);
            let mut ts = Vec::with_capacity(args.len());
            for a in args {
                ts.push(ast_to_template(a, scope, symbols)?);
            }
            GoalNode::VarCall(slot, ts.into_boxed_slice())
        }
        Ast::Var(name) => GoalNode::VarCall(scope.slot(name), Box::new([])),
        other => GoalNode::Call(ast_to_template(other, scope, symbols)?),
    })
}

fn build_clause(
    head: &Ast,
    body: Option<&Ast>,
    line: u32,
    symbols: &mut SymbolTable,
) -> Result<(PredKey, Clause)> {
    let (name, args) = match head {
        Ast::Atom(n) => (n.clone(), Vec::new()),
        Ast::Struct(n, args) => (n.clone(), args.clone()),
        other => {
            return Err(Error::parse(line, format!("clause head must be an atom, found {other:?}")));
        }
    };
    let key = PredKey { name: symbols.intern(&name), arity: args.len() as u32 };
    let mut scope = VarScope::new();
    // Reserve head slots 0..n-1.
    for _ in 0..args.len() {
        scope.fresh(None);
    }
    let mut prologue = Vec::new();
    for (i, arg) in args.iter().enumerate() {
        match arg {
            Ast::Var(v) if v != "_" && !scope.by_name.contains_key(v) => {
                scope.alias(v, i as u16);
            }
            _ => {
                let tmpl = ast_to_template(arg, &mut scope, symbols)?;
                prologue.push((i as u16, tmpl));
            }
        }
    }
    let body = match body {
        Some(b) => compile_goal(b, &mut scope, symbols)?,
        None => GoalNode::True,
    };
    let orig_head: Vec<Template> = {
        // Re-derive original arg templates: aliased vars print back as the slot.
        let mut ts = Vec::with_capacity(args.len());
        let mut eqs = prologue.iter();
        let mut next_eq = eqs.next();
        for (i, arg) in args.iter().enumerate() {
            match next_eq {
                Some((slot, tmpl)) if *slot == i as u16 => {
                    ts.push(tmpl.clone());
                    next_eq = eqs.next();
                }
                _ => {
                    debug_assert!(matches!(arg, Ast::Var(_)));
                    ts.push(Template::Var(i as u16));
                }
            }
        }
        ts
    };
    let first_arg_key = orig_head.first().and_then(|t| t.ctor_key());
    Ok((
        key,
        Clause {
            nvars: scope.names.len() as u16,
            var_names: scope.names,
            orig_head: orig_head.into_boxed_slice(),
            prologue,
            body,
            line,
            first_arg_key,
        },
    ))
}

/// Build a [`Program`] from parsed items. Assertion formulas are normalized in
/// [`crate::assertion`]; property classification happens later, once regular
/// types are compiled.
pub fn build_program(items: &[Item]) -> Result<Program> {
    let mut program = Program::default();
    let mut symbols = SymbolTable::new();
    // Seed common symbols so they get stable low ids.
    for s in ["[]", ".", "true", "fail"] {
        symbols.intern(s);
    }
    program.symbols = symbols;

    for item in items {
        match item {
            Item::RegtypeDirective { name, arity, line } => {
                let key = PredKey {
                    name: program.symbols.intern(name),
                    arity: *arity,
                };
                let entry = program.pred_entry(key, *line);
                if entry.is_regtype {
                    return Err(Error::definition(format!(
                        "duplicate regtype declaration for {name}/{arity} at line {line}"
                    )));
                }
                entry.is_regtype = true;
            }
            Item::Clause { head, body, line } => {
                let mut symbols = std::mem::take(&mut program.symbols);
                let built = build_clause(head, body.as_ref(), *line, &mut symbols);
                program.symbols = symbols;
                let (key, clause) = built?;
                program.pred_entry(key, *line).clauses.push(clause);
            }
            Item::PredDirective { head, pre, post, line } => {
                let mut symbols = std::mem::take(&mut program.symbols);
                let built = crate::assertion::build_assertion(head, pre.as_ref(), post.as_ref(), *line, &mut symbols);
                program.symbols = symbols;
                let (key, assertion) = built?;
                program.pred_entry(key, *line).assertions.push(assertion);
            }
        }
    }

    // An assertion must target a predicate that exists at that arity when the
    // same name is defined at another one.
    let mut issues = Vec::new();
    for def in &program.preds {
        if !def.assertions.is_empty() && def.clauses.is_empty() {
            let name = def.key.name;
            let other_arity_exists = program
                .preds
                .iter()
                .any(|d| d.key.name == name && d.key.arity != def.key.arity && !d.clauses.is_empty());
            if other_arity_exists {
                issues.push(format!(
                    "assertion head arity mismatch: {} has assertions but no clauses",
                    def.key.render(&program.symbols)
                ));
            }
        }
    }
    if let Some(msg) = issues.into_iter().next() {
        return Err(Error::definition(msg));
    }
    Ok(program)
}

/// Instantiate a template against a frame, allocating fresh structure.
pub fn instantiate(tmpl: &Template, frame: &[TermId], store: &mut Store) -> TermId {
    match tmpl {
        Template::Var(s) => frame[*s as usize],
        Template::Int(v) => store.int(*v),
        Template::Float(v) => store.float(*v),
        Template::Atom(s) => store.atom(*s),
        Template::Struct(f, args) => {
            let ids: Vec<TermId> = args.iter().map(|a| instantiate(a, frame, store)).collect();
            store.structure(*f, ids)
        }
    }
}

/// Unify an existing term against a template without building the template
/// structure first when the term is already instantiated.
pub fn unify_template(t: TermId, tmpl: &Template, frame: &[TermId], store: &mut Store) -> bool {
    use crate::term::TermNode;
    let t = store.deref(t);
    match tmpl {
        Template::Var(s) => {
            let other = frame[*s as usize];
            store.unify(t, other)
        }
        Template::Int(v) => match store.node(t) {
            TermNode::Int(x) => x == v,
            TermNode::Var { .. } => {
                let id = store.int(*v);
                store.bind(t, id);
                true
            }
            _ => false,
        },
        Template::Float(v) => match store.node(t) {
            TermNode::Float(x) => x.to_bits() == v.to_bits(),
            TermNode::Var { .. } => {
                let id = store.float(*v);
                store.bind(t, id);
                true
            }
            _ => false,
        },
        Template::Atom(s) => match store.node(t) {
            TermNode::Atom(x) => x == s,
            TermNode::Var { .. } => {
                let id = store.atom(*s);
                store.bind(t, id);
                true
            }
            _ => false,
        },
        Template::Struct(f, sub) => match store.node(t) {
            TermNode::Struct { functor, args } if functor == f && args.len() == sub.len() => {
                let args: Vec<TermId> = args.to_vec();
                for (a, st) in args.iter().zip(sub.iter()) {
                    if !unify_template(*a, st, frame, store) {
                        return false;
                    }
                }
                true
            }
            TermNode::Var { .. } => {
                let id = instantiate(tmpl, frame, store);
                store.bind(t, id);
                true
            }
            _ => false,
        },
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// Choose collision-free print names for every slot of a clause.
pub fn print_names(var_names: &[Option<String>]) -> Vec<String> {
    let mut used: std::collections::HashSet<String> =
        var_names.iter().flatten().cloned().collect();
    var_names
        .iter()
        .enumerate()
        .map(|(i, n)| match n {
            Some(n) => n.clone(),
            None => {
                let mut cand = format!("_{i}");
                while used.contains(&cand) {
                    cand.insert(0, '_');
                }
                used.insert(cand.clone());
                cand
            }
        })
        .collect()
}

pub fn render_template(tmpl: &Template, names: &[String], symbols: &SymbolTable) -> String {
    match tmpl {
        Template::Var(s) => names[*s as usize].clone(),
        Template::Int(v) => format!("{v}"),
        Template::Float(v) => format!("{v:?}"),
        Template::Atom(s) => symbols.name(*s).to_string(),
        Template::Struct(f, args) => {
            if symbols.name(*f) == "." && args.len() == 2 {
                let mut elems = vec![render_template(&args[0], names, symbols)];
                let mut tail = &args[1];
                loop {
                    match tail {
                        Template::Atom(s) if symbols.name(*s) == "[]" => {
                            return format!("[{}]", elems.join(","));
                        }
                        Template::Struct(f, args) if symbols.name(*f) == "." && args.len() == 2 => {
                            elems.push(render_template(&args[0], names, symbols));
                            tail = &args[1];
                        }
                        other => {
                            return format!(
                                "[{}|{}]",
                                elems.join(","),
                                render_template(other, names, symbols)
                            );
                        }
                    }
                }
            }
            let args: Vec<String> =
                args.iter().map(|a| render_template(a, names, symbols)).collect();
            format!("{}({})", symbols.name(*f), args.join(","))
        }
    }
}

fn render_goal(goal: &GoalNode, names: &[String], symbols: &SymbolTable, out: &mut Vec<String>) {
    match goal {
        GoalNode::True => out.push("true".to_string()),
        GoalNode::Fail => out.push("fail".to_string()),
        GoalNode::Conj(a, b) => {
            render_goal(a, names, symbols, out);
            render_goal(b, names, symbols, out);
        }
        GoalNode::Disj(a, b) => {
            let mut la = Vec::new();
            render_goal(a, names, symbols, &mut la);
            let mut lb = Vec::new();
            render_goal(b, names, symbols, &mut lb);
            out.push(format!("( {} ; {} )", la.join(", "), lb.join(", ")));
        }
        GoalNode::IfThenElse(c, t, e) => {
            let mut lc = Vec::new();
            render_goal(c, names, symbols, &mut lc);
            let mut lt = Vec::new();
            render_goal(t, names, symbols, &mut lt);
            let mut le = Vec::new();
            render_goal(e, names, symbols, &mut le);
            out.push(format!(
                "( {} -> {} ; {} )",
                lc.join(", "),
                lt.join(", "),
                le.join(", ")
            ));
        }
        GoalNode::Unify(a, b) => out.push(format!(
            "{} = {}",
            render_template(a, names, symbols),
            render_template(b, names, symbols)
        )),
        GoalNode::Is(a, b) => out.push(format!(
            "{} is {}",
            render_template(a, names, symbols),
            render_is_expr(b, names, symbols)
        )),
        GoalNode::Cmp(op, a, b) => out.push(format!(
            "{} {} {}",
            render_template(a, names, symbols),
            op.text(),
            render_template(b, names, symbols)
        )),
        GoalNode::Call(t) => out.push(render_template(t, names, symbols)),
        GoalNode::VarCall(slot, args) => {
            if args.is_empty() {
                out.push(names[*slot as usize].clone());
            } else {
                let args: Vec<String> =
                    args.iter().map(|a| render_template(a, names, symbols)).collect();
                out.push(format!("{}({})", names[*slot as usize], args.join(",")));
            }
        }
    }
}

/// Arithmetic expressions print with explicit parens so precedence survives.
fn render_is_expr(tmpl: &Template, names: &[String], symbols: &SymbolTable) -> String {
    match tmpl {
        Template::Struct(f, args) if args.len() == 2 => {
            let name = symbols.name(*f);
            if matches!(name, "+" | "-" | "*" | "//" | "mod" | "#" | "/\\" | "\\/") {
                return format!(
                    "({} {} {})",
                    render_is_expr(&args[0], names, symbols),
                    name,
                    render_is_expr(&args[1], names, symbols)
                );
            }
            render_template(tmpl, names, symbols)
        }
        _ => render_template(tmpl, names, symbols),
    }
}

/// Print a clause in source shape: head-normalization equations are folded
/// back into the head (re-parsing re-normalizes to the identical clause).
pub fn render_clause(pred: &str, clause: &Clause, symbols: &SymbolTable) -> String {
    let names = print_names(&clause.var_names);
    let arity = clause.orig_head.len();
    let head = if arity == 0 {
        pred.to_string()
    } else {
        let args: Vec<String> = clause
            .orig_head
            .iter()
            .map(|t| render_template(t, &names, symbols))
            .collect();
        format!("{}({})", pred, args.join(","))
    };
    let mut parts = Vec::new();
    if !matches!(clause.body, GoalNode::True) {
        render_goal(&clause.body, &names, symbols, &mut parts);
    }
    if parts.is_empty() {
        format!("{head}.")
    } else {
        format!("{} :-\n    {}.", head, parts.join(",\n    "))
    }
}

/// Print the whole program; the output parses back to a structurally
/// identical program.
pub fn render_program(program: &Program) -> String {
    let mut out = String::new();
    for def in program.predicates() {
        let name = program.symbols.name(def.key.name).to_string();
        if def.is_regtype {
            out.push_str(&format!(":- regtype {}/{}.\n", name, def.key.arity));
        }
        for a in &def.assertions {
            out.push_str(&crate::assertion::render_assertion(&name, a, &program.symbols));
            out.push('\n');
        }
        for c in &def.clauses {
            out.push_str(&render_clause(&name, c, &program.symbols));
            out.push('\n');
        }
        if !def.clauses.is_empty() || !def.assertions.is_empty() || def.is_regtype {
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Structural comparison (alpha-equivalence on the slot space)
// ---------------------------------------------------------------------------

fn templates_isomorphic(a: &Template, b: &Template, map: &mut HashMap<u16, u16>) -> bool {
    match (a, b) {
        (Template::Var(x), Template::Var(y)) => match map.get(x) {
            Some(m) => m == y,
            None => {
                map.insert(*x, *y);
                true
            }
        },
        (Template::Int(x), Template::Int(y)) => x == y,
        (Template::Float(x), Template::Float(y)) => x.to_bits() == y.to_bits(),
        (Template::Atom(x), Template::Atom(y)) => x == y,
        (Template::Struct(f, xs), Template::Struct(g, ys)) => {
            f == g
                && xs.len() == ys.len()
                && xs.iter().zip(ys.iter()).all(|(x, y)| templates_isomorphic(x, y, map))
        }
        _ => false,
    }
}

fn flatten_goals<'a>(g: &'a GoalNode, out: &mut Vec<&'a GoalNode>) {
    match g {
        GoalNode::Conj(a, b) => {
            flatten_goals(a, out);
            flatten_goals(b, out);
        }
        GoalNode::True => {}
        other => out.push(other),
    }
}

fn goals_isomorphic(a: &GoalNode, b: &GoalNode, map: &mut HashMap<u16, u16>) -> bool {
    let mut fa = Vec::new();
    flatten_goals(a, &mut fa);
    let mut fb = Vec::new();
    flatten_goals(b, &mut fb);
    if fa.len() != fb.len() {
        return false;
    }
    fa.iter().zip(fb.iter()).all(|(x, y)| goal_isomorphic(x, y, map))
}

fn goal_isomorphic(a: &GoalNode, b: &GoalNode, map: &mut HashMap<u16, u16>) -> bool {
    match (a, b) {
        (GoalNode::True, GoalNode::True) | (GoalNode::Fail, GoalNode::Fail) => true,
        (GoalNode::Disj(a1, a2), GoalNode::Disj(b1, b2)) => {
            goals_isomorphic(a1, b1, map) && goals_isomorphic(a2, b2, map)
        }
        (GoalNode::IfThenElse(c1, t1, e1), GoalNode::IfThenElse(c2, t2, e2)) => {
            goals_isomorphic(c1, c2, map)
                && goals_isomorphic(t1, t2, map)
                && goals_isomorphic(e1, e2, map)
        }
        (GoalNode::Unify(x1, y1), GoalNode::Unify(x2, y2))
        | (GoalNode::Is(x1, y1), GoalNode::Is(x2, y2)) => {
            templates_isomorphic(x1, x2, map) && templates_isomorphic(y1, y2, map)
        }
        (GoalNode::Cmp(o1, x1, y1), GoalNode::Cmp(o2, x2, y2)) => {
            o1 == o2 && templates_isomorphic(x1, x2, map) && templates_isomorphic(y1, y2, map)
        }
        (GoalNode::Call(x), GoalNode::Call(y)) => templates_isomorphic(x, y, map),
        (GoalNode::VarCall(v1, xs), GoalNode::VarCall(v2, ys)) => {
            let vt = templates_isomorphic(&Template::Var(*v1), &Template::Var(*v2), map);
            vt && xs.len() == ys.len()
                && xs.iter().zip(ys.iter()).all(|(x, y)| templates_isomorphic(x, y, map))
        }
        _ => false,
    }
}

fn clauses_isomorphic(a: &Clause, b: &Clause) -> bool {
    let mut map = HashMap::new();
    // Head slots correspond positionally.
    for i in 0..a.orig_head.len() {
        map.insert(i as u16, i as u16);
    }
    // Compare the flattened (prologue ++ body) sequences so a printed fact
    // and its equation form compare equal.
    let seq = |c: &Clause| {
        let mut goals: Vec<GoalNode> = c
            .prologue
            .iter()
            .map(|(s, t)| GoalNode::Unify(Template::Var(*s), t.clone()))
            .collect();
        goals.push(c.body.clone());
        goals
    };
    let ga = seq(a);
    let gb = seq(b);
    let conj_a = ga.into_iter().reduce(|x, y| GoalNode::Conj(Box::new(x), Box::new(y))).unwrap();
    let conj_b = gb.into_iter().reduce(|x, y| GoalNode::Conj(Box::new(x), Box::new(y))).unwrap();
    goals_isomorphic(&conj_a, &conj_b, &mut map)
}

/// Structural identity of programs modulo variable renaming. Symbol ids are
/// compared by name so the programs may come from different tables.
pub fn programs_isomorphic(a: &Program, b: &Program) -> bool {
    let a_keys: Vec<String> = a.predicates().map(|d| d.key.render(&a.symbols)).collect();
    let b_keys: Vec<String> = b.predicates().map(|d| d.key.render(&b.symbols)).collect();
    if a_keys != b_keys {
        return false;
    }
    for (da, db) in a.predicates().zip(b.predicates()) {
        if da.is_regtype != db.is_regtype
            || da.clauses.len() != db.clauses.len()
            || da.assertions.len() != db.assertions.len()
        {
            return false;
        }
        for (ca, cb) in da.clauses.iter().zip(db.clauses.iter()) {
            // Renaming may change symbol ids; compare via printed form of the
            // templates. Cheap and robust: re-render both clauses.
            let ra = render_clause("q", ca, &a.symbols);
            let rb = render_clause("q", cb, &b.symbols);
            if ra != rb && !clauses_equal_across_tables(ca, cb, &a.symbols, &b.symbols) {
                return false;
            }
        }
        for (aa, ab) in da.assertions.iter().zip(db.assertions.iter()) {
            if crate::assertion::render_assertion("q", aa, &a.symbols)
                != crate::assertion::render_assertion("q", ab, &b.symbols)
            {
                return false;
            }
        }
    }
    true
}

fn clauses_equal_across_tables(
    a: &Clause,
    b: &Clause,
    _sa: &SymbolTable,
    _sb: &SymbolTable,
) -> bool {
    clauses_isomorphic(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_source;

    fn load(src: &str) -> Program {
        build_program(&parse_source(src).unwrap()).unwrap()
    }

    #[test]
    fn fact_normalizes_to_equations() {
        // "p(1,42)." becomes p(X,Y) :- X=1, Y=42.
        let p = load("p(1,42).");
        let key = PredKey { name: p.symbols.lookup("p").unwrap(), arity: 2 };
        let def = p.predicate(key).unwrap();
        assert_eq!(def.clauses.len(), 1);
        let c = &def.clauses[0];
        assert_eq!(c.prologue.len(), 2);
        assert_eq!(c.prologue[0], (0, Template::Int(1)));
        assert_eq!(c.prologue[1], (1, Template::Int(42)));
        assert!(matches!(c.body, GoalNode::True));
        assert_eq!(c.first_arg_key, Some(CtorKey::Int(1)));
    }

    #[test]
    fn head_vars_alias_without_equations() {
        let p = load("p(X, f(X), X).");
        let key = PredKey { name: p.symbols.lookup("p").unwrap(), arity: 3 };
        let c = &p.predicate(key).unwrap().clauses[0];
        // arg0 aliases X to slot 0; arg1 is an equation; arg2 repeats X.
        assert_eq!(c.prologue.len(), 2);
        assert_eq!(c.prologue[0].0, 1);
        assert_eq!(c.prologue[1], (2, Template::Var(0)));
        assert_eq!(c.nvars, 3);
    }

    #[test]
    fn empty_program() {
        let p = load("");
        assert!(p.is_empty());
    }

    #[test]
    fn roundtrip_parse_print_parse() {
        let src = "\
:- regtype bintree/2.
bintree(empty,T).
bintree(tree(LC,X,RC),T) :- bintree(LC,T), T(X), bintree(RC,T).

:- pred p(X,Y) : (int(X), var(Y)) => (int(X), int(Y)).
p(1,42).
p(2,gamma).

q(X,Z) :- ( X > 0 -> Z = pos ; Z is 0 - 1 ), p(X, _).
r([]).
r([H|T]) :- int(H), r(T).
";
        let p1 = load(src);
        let printed = render_program(&p1);
        let p2 = load(&printed);
        assert!(programs_isomorphic(&p1, &p2), "printed form:\n{printed}");
        // And printing is a fixed point.
        let printed2 = render_program(&p2);
        assert_eq!(printed, printed2);
    }
}
