//! Herbrand terms, the binding store and unification.
//!
//! Terms live in an arena owned by [`Store`]; a [`TermId`] is both the handle
//! and the node id used as a cache key. Ids are assigned by a monotone counter
//! and are never reused within a session, so a cache entry can hold one safely
//! as long as it is invalidated when a binding it depends on is undone.
//! Variables keep their id when bound; dereferencing is dynamic.

use crate::error::{Error, Result};
use crate::symbol::{CtorKey, SymbolId, SymbolTable};

/// Node id of a term in its [`Store`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(pub u32);

#[derive(Debug, Clone)]
pub enum TermNode {
    Var { binding: Option<TermId>, name: Option<SymbolId> },
    Int(i64),
    Float(f64),
    Atom(SymbolId),
    Struct { functor: SymbolId, args: Box<[TermId]> },
}

/// Trail position; issued by [`Store::epoch`] and consumed by
/// [`Store::undo_to`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch(pub usize);

/// Term arena plus the binding store theta with a trail for backtracking.
pub struct Store {
    nodes: Vec<TermNode>,
    trail: Vec<TermId>,
    pub occurs_check: bool,
}

impl Store {
    pub fn new() -> Self {
        Store { nodes: Vec::new(), trail: Vec::new(), occurs_check: false }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, node: TermNode) -> TermId {
        let id = TermId(self.nodes.len() as u32);
        self.nodes.push(node);
        id
    }

    pub fn new_var(&mut self) -> TermId {
        self.push(TermNode::Var { binding: None, name: None })
    }

    pub fn new_named_var(&mut self, name: SymbolId) -> TermId {
        self.push(TermNode::Var { binding: None, name: Some(name) })
    }

    pub fn int(&mut self, v: i64) -> TermId {
        self.push(TermNode::Int(v))
    }

    pub fn float(&mut self, v: f64) -> TermId {
        self.push(TermNode::Float(v))
    }

    pub fn atom(&mut self, s: SymbolId) -> TermId {
        self.push(TermNode::Atom(s))
    }

    pub fn structure(&mut self, functor: SymbolId, args: Vec<TermId>) -> TermId {
        debug_assert!(!args.is_empty(), "structs have arity >= 1");
        self.push(TermNode::Struct { functor, args: args.into_boxed_slice() })
    }

    pub fn node(&self, t: TermId) -> &TermNode {
        &self.nodes[t.0 as usize]
    }

    /// Follow variable bindings to the representative node.
    pub fn deref(&self, mut t: TermId) -> TermId {
        loop {
            match &self.nodes[t.0 as usize] {
                TermNode::Var { binding: Some(next), .. } => t = *next,
                _ => return t,
            }
        }
    }

    pub fn is_unbound_var(&self, t: TermId) -> bool {
        matches!(self.node(self.deref(t)), TermNode::Var { .. })
    }

    /// Functor key of a dereferenced node; `None` for unbound variables.
    pub fn ctor_key(&self, t: TermId) -> Option<CtorKey> {
        match self.node(self.deref(t)) {
            TermNode::Var { .. } => None,
            TermNode::Int(i) => Some(CtorKey::Int(*i)),
            TermNode::Float(f) => Some(CtorKey::Float(f.to_bits())),
            TermNode::Atom(s) => Some(CtorKey::Atom(*s)),
            TermNode::Struct { functor, args } => {
                Some(CtorKey::Struct(*functor, args.len() as u32))
            }
        }
    }

    /// Bind an unbound variable node. The binding is trailed.
    pub fn bind(&mut self, var: TermId, value: TermId) {
        match &mut self.nodes[var.0 as usize] {
            TermNode::Var { binding: b @ None, .. } => *b = Some(value),
            _ => panic!("bind target is not an unbound variable"),
        }
        self.trail.push(var);
    }

    pub fn epoch(&self) -> Epoch {
        Epoch(self.trail.len())
    }

    /// Undo all bindings made after `epoch`. Returns the node ids of the
    /// variables that became unbound, newest first; the caller is responsible
    /// for forwarding them to cache invalidation.
    pub fn undo_to(&mut self, epoch: Epoch) -> Result<Vec<TermId>> {
        if epoch.0 > self.trail.len() {
            return Err(Error::internal(format!(
                "undo to epoch {} but trail length is {}",
                epoch.0,
                self.trail.len()
            )));
        }
        let mut unbound = Vec::with_capacity(self.trail.len() - epoch.0);
        while self.trail.len() > epoch.0 {
            let var = self.trail.pop().unwrap();
            match &mut self.nodes[var.0 as usize] {
                TermNode::Var { binding, .. } => *binding = None,
                _ => unreachable!("trail entry is always a variable"),
            }
            unbound.push(var);
        }
        Ok(unbound)
    }

    fn occurs(&self, var: TermId, t: TermId) -> bool {
        let mut work = vec![t];
        while let Some(t) = work.pop() {
            let t = self.deref(t);
            if t == var {
                return true;
            }
            if let TermNode::Struct { args, .. } = self.node(t) {
                work.extend(args.iter().copied());
            }
        }
        false
    }

    /// Unify two terms. On success all new bindings are trailed; on failure
    /// the store is left exactly as it was.
    pub fn unify(&mut self, a: TermId, b: TermId) -> bool {
        let mark = self.trail.len();
        if self.unify_inner(a, b) {
            return true;
        }
        // Roll back the partial attempt. No invalidation event is needed:
        // checks never run mid-unification, so no cache entry can depend on
        // a binding younger than `mark`.
        while self.trail.len() > mark {
            let var = self.trail.pop().unwrap();
            if let TermNode::Var { binding, .. } = &mut self.nodes[var.0 as usize] {
                *binding = None;
            }
        }
        false
    }

    fn unify_inner(&mut self, a: TermId, b: TermId) -> bool {
        let mut work = vec![(a, b)];
        while let Some((a, b)) = work.pop() {
            let a = self.deref(a);
            let b = self.deref(b);
            if a == b {
                continue;
            }
            match (self.node(a).clone(), self.node(b).clone()) {
                (TermNode::Var { .. }, _) => {
                    if self.occurs_check && self.occurs(a, b) {
                        return false;
                    }
                    self.bind(a, b);
                }
                (_, TermNode::Var { .. }) => {
                    if self.occurs_check && self.occurs(b, a) {
                        return false;
                    }
                    self.bind(b, a);
                }
                (TermNode::Int(x), TermNode::Int(y)) => {
                    if x != y {
                        return false;
                    }
                }
                (TermNode::Float(x), TermNode::Float(y)) => {
                    if x.to_bits() != y.to_bits() {
                        return false;
                    }
                }
                (TermNode::Atom(x), TermNode::Atom(y)) => {
                    if x != y {
                        return false;
                    }
                }
                (
                    TermNode::Struct { functor: f, args: xs },
                    TermNode::Struct { functor: g, args: ys },
                ) => {
                    if f != g || xs.len() != ys.len() {
                        return false;
                    }
                    work.extend(xs.iter().copied().zip(ys.iter().copied()));
                }
                _ => return false,
            }
        }
        true
    }

    /// True iff the term contains no unbound variables.
    pub fn is_ground(&self, t: TermId) -> bool {
        let mut work = vec![t];
        while let Some(t) = work.pop() {
            match self.node(self.deref(t)) {
                TermNode::Var { .. } => return false,
                TermNode::Struct { args, .. } => work.extend(args.iter().copied()),
                _ => {}
            }
        }
        true
    }

    /// Structural equality modulo dereferencing (variables equal only to
    /// themselves).
    pub fn terms_equal(&self, a: TermId, b: TermId) -> bool {
        let mut work = vec![(a, b)];
        while let Some((a, b)) = work.pop() {
            let a = self.deref(a);
            let b = self.deref(b);
            if a == b {
                continue;
            }
            match (self.node(a), self.node(b)) {
                (TermNode::Int(x), TermNode::Int(y)) if x == y => {}
                (TermNode::Float(x), TermNode::Float(y)) if x.to_bits() == y.to_bits() => {}
                (TermNode::Atom(x), TermNode::Atom(y)) if x == y => {}
                (
                    TermNode::Struct { functor: f, args: xs },
                    TermNode::Struct { functor: g, args: ys },
                ) if f == g && xs.len() == ys.len() => {
                    work.extend(xs.iter().copied().zip(ys.iter().copied()));
                }
                _ => return false,
            }
        }
        true
    }

    /// All distinct unbound variables reachable from `t`, in first-visit order.
    pub fn free_vars(&self, t: TermId) -> Vec<TermId> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        let mut work = vec![t];
        while let Some(t) = work.pop() {
            let t = self.deref(t);
            match self.node(t) {
                TermNode::Var { .. } => {
                    if seen.insert(t) {
                        out.push(t);
                    }
                }
                TermNode::Struct { args, .. } => {
                    // Preserve left-to-right order under the LIFO worklist.
                    work.extend(args.iter().rev().copied());
                }
                _ => {}
            }
        }
        out
    }

    /// Render a term using operator-free canonical syntax with list sugar.
    pub fn render(&self, t: TermId, symbols: &SymbolTable) -> String {
        let mut out = String::new();
        self.render_into(t, symbols, &mut out);
        out
    }

    fn render_into(&self, t: TermId, symbols: &SymbolTable, out: &mut String) {
        use std::fmt::Write;
        let t = self.deref(t);
        match self.node(t) {
            TermNode::Var { name, .. } => match name {
                Some(s) => {
                    let _ = write!(out, "{}", symbols.name(*s));
                }
                None => {
                    let _ = write!(out, "_G{}", t.0);
                }
            },
            TermNode::Int(i) => {
                let _ = write!(out, "{i}");
            }
            TermNode::Float(f) => {
                let _ = write!(out, "{f:?}");
            }
            TermNode::Atom(s) => {
                let _ = write!(out, "{}", symbols.name(*s));
            }
            TermNode::Struct { functor, args } => {
                if symbols.name(*functor) == "." && args.len() == 2 {
                    out.push('[');
                    self.render_into(args[0], symbols, out);
                    let mut tail = self.deref(args[1]);
                    loop {
                        match self.node(tail) {
                            TermNode::Atom(s) if symbols.name(*s) == "[]" => break,
                            TermNode::Struct { functor, args }
                                if symbols.name(*functor) == "." && args.len() == 2 =>
                            {
                                out.push(',');
                                self.render_into(args[0], symbols, out);
                                tail = self.deref(args[1]);
                            }
                            _ => {
                                out.push('|');
                                self.render_into(tail, symbols, out);
                                break;
                            }
                        }
                    }
                    out.push(']');
                } else {
                    let _ = write!(out, "{}(", symbols.name(*functor));
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        self.render_into(*a, symbols, out);
                    }
                    out.push(')');
                }
            }
        }
    }
}

impl Default for Store {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Store, SymbolTable) {
        (Store::new(), SymbolTable::new())
    }

    #[test]
    fn fresh_variable_binding() {
        // unify(X, f(a), empty) -> {X -> f(a)}
        let (mut st, mut sy) = setup();
        let x = st.new_var();
        let a = sy.intern("a");
        let a = st.atom(a);
        let f = sy.intern("f");
        let fa = st.structure(f, vec![a]);
        assert!(st.unify(x, fa));
        assert_eq!(st.deref(x), fa);
    }

    #[test]
    fn functor_clash_leaves_store_unchanged() {
        // unify(f(a), g(a), theta) -> failure, theta unchanged
        let (mut st, mut sy) = setup();
        let a = sy.intern("a");
        let f = sy.intern("f");
        let g = sy.intern("g");
        let x = st.new_var();
        let y = st.new_var();
        assert!(st.unify(x, y));
        let trail_before = st.epoch();
        let a1 = st.atom(a);
        let a2 = st.atom(a);
        let fa = st.structure(f, vec![a1]);
        let ga = st.structure(g, vec![a2]);
        assert!(!st.unify(fa, ga));
        assert_eq!(st.epoch(), trail_before);
        assert_eq!(st.deref(x), st.deref(y));
    }

    #[test]
    fn textbook_unification() {
        // unify(f(X,b), f(a,Y)) -> {X -> a, Y -> b}; worked on paper first.
        let (mut st, mut sy) = setup();
        let (a, b, f) = (sy.intern("a"), sy.intern("b"), sy.intern("f"));
        let x = st.new_var();
        let y = st.new_var();
        let bt = st.atom(b);
        let at = st.atom(a);
        let lhs = st.structure(f, vec![x, bt]);
        let rhs = st.structure(f, vec![at, y]);
        assert!(st.unify(lhs, rhs));
        assert!(matches!(st.node(st.deref(x)), TermNode::Atom(s) if *s == a));
        assert!(matches!(st.node(st.deref(y)), TermNode::Atom(s) if *s == b));
    }

    #[test]
    fn partial_failure_rolls_back() {
        // unify(f(Y, b), f(a, c)) binds Y then fails on b/c; Y must be free after.
        let (mut st, mut sy) = setup();
        let (a, b, c, f) = (sy.intern("a"), sy.intern("b"), sy.intern("c"), sy.intern("f"));
        let y = st.new_var();
        let bt = st.atom(b);
        let at = st.atom(a);
        let ct = st.atom(c);
        let lhs = st.structure(f, vec![y, bt]);
        let rhs = st.structure(f, vec![at, ct]);
        assert!(!st.unify(lhs, rhs));
        assert!(st.is_unbound_var(y));
    }

    #[test]
    fn undo_restores_exactly() {
        let (mut st, _sy) = setup();
        let x = st.new_var();
        let y = st.new_var();
        let e = st.epoch();
        let one = st.int(1);
        let two = st.int(2);
        assert!(st.unify(x, one));
        assert!(st.unify(y, two));
        let unbound = st.undo_to(e).unwrap();
        assert!(st.is_unbound_var(x));
        assert!(st.is_unbound_var(y));
        // Hook payload carries both node ids.
        assert_eq!(unbound.len(), 2);
        assert!(unbound.contains(&x) && unbound.contains(&y));
    }

    #[test]
    fn undo_to_current_epoch_is_identity() {
        let (mut st, _sy) = setup();
        let x = st.new_var();
        let one = st.int(1);
        assert!(st.unify(x, one));
        let e = st.epoch();
        let unbound = st.undo_to(e).unwrap();
        assert!(unbound.is_empty());
        assert!(!st.is_unbound_var(x));
    }

    #[test]
    fn unknown_epoch_is_internal_error() {
        let (mut st, _sy) = setup();
        assert!(st.undo_to(Epoch(5)).is_err());
    }

    #[test]
    fn occurs_check_flag() {
        let (mut st, mut sy) = setup();
        let f = sy.intern("f");
        let x = st.new_var();
        let fx = st.structure(f, vec![x]);
        assert!(st.unify(x, fx)); // default: off, cyclic binding allowed
        let mut st2 = Store::new();
        st2.occurs_check = true;
        let y = st2.new_var();
        let fy = st2.structure(f, vec![y]);
        assert!(!st2.unify(y, fy));
    }

    #[test]
    fn list_rendering() {
        let (mut st, mut sy) = setup();
        let cons = sy.intern(".");
        let nil = sy.intern("[]");
        let nil_t = st.atom(nil);
        let two = st.int(2);
        let l1 = st.structure(cons, vec![two, nil_t]);
        let one = st.int(1);
        let l0 = st.structure(cons, vec![one, l1]);
        assert_eq!(st.render(l0, &sy), "[1,2]");
        let v = st.new_var();
        let three = st.int(3);
        let l2 = st.structure(cons, vec![three, v]);
        assert_eq!(st.render(l2, &sy), format!("[3|_G{}]", v.0));
    }
}
