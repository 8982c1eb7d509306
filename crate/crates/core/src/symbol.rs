//! Interned atom and functor names.

use std::collections::HashMap;
use std::fmt;

/// Handle to an interned name. Ids are dense and stable for the lifetime of
/// the table that issued them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(pub u32);

#[derive(Debug, Default, Clone)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, SymbolId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> SymbolId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = SymbolId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// A functor key: the shape of a term node, used both for clause indexing and
/// as the constructor alphabet of type automata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CtorKey {
    Atom(SymbolId),
    Int(i64),
    /// Bit pattern of the float, so the key is hashable.
    Float(u64),
    Struct(SymbolId, u32),
}

impl CtorKey {
    pub fn arity(&self) -> u32 {
        match self {
            CtorKey::Struct(_, n) => *n,
            _ => 0,
        }
    }

    pub fn render(&self, symbols: &SymbolTable) -> String {
        match self {
            CtorKey::Atom(s) => format!("{}/0", symbols.name(*s)),
            CtorKey::Int(i) => format!("{i}/0"),
            CtorKey::Float(bits) => format!("{}/0", f64::from_bits(*bits)),
            CtorKey::Struct(s, n) => format!("{}/{}", symbols.name(*s), n),
        }
    }
}

impl fmt::Display for SymbolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sym#{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_is_idempotent() {
        let mut t = SymbolTable::new();
        let a = t.intern("foo");
        let b = t.intern("foo");
        assert_eq!(a, b);
        assert_eq!(t.name(a), "foo");
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn clone_preserves_ids() {
        let mut t = SymbolTable::new();
        let a = t.intern("a");
        let mut u = t.clone();
        let b = u.intern("b");
        assert_eq!(u.name(a), "a");
        assert_eq!(u.name(b), "b");
        assert_eq!(t.len(), 1);
    }
}
