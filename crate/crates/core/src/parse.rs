//! Lexer and parser for the source language.
//!
//! The grammar is a Prolog subset: clauses `H.` and `H :- B.`, conjunction,
//! disjunction, if-then-else, list sugar, `:- pred Head : Pre => Post.`
//! directives (both condition parts optional) and `:- regtype name/arity.`
//! declarations. `%` starts a comment running to end of line.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Atom(String),
    Var(String),
    Int(i64),
    Float(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Bar,
    Comma,
    /// End-of-clause dot.
    Dot,
    /// Operator token (also covers `:-`, `=>`, `:`).
    Op(&'static str),
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: u32,
}

const OPERATORS: &[&str] = &[
    ":-", "=>", "=<", ">=", "->", "//", "/\\", "\\/", ";", ":", "=", "<", ">", "+", "-", "*",
    "/", "#", "|",
];

fn lex(src: &str) -> Result<Vec<SpannedTok>> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line: u32 = 1;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c == '\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '%' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                i += 1;
            }
            // A float needs a digit after the dot; otherwise the dot ends a clause.
            if i + 1 < bytes.len()
                && bytes[i] == b'.'
                && (bytes[i + 1] as char).is_ascii_digit()
            {
                i += 1;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::parse(line, format!("bad float literal `{text}`")))?;
                toks.push(SpannedTok { tok: Tok::Float(v), line });
            } else {
                let text = &src[start..i];
                let v: i64 = text
                    .parse()
                    .map_err(|_| Error::parse(line, format!("integer literal `{text}` out of range")))?;
                toks.push(SpannedTok { tok: Tok::Int(v), line });
            }
            continue;
        }
        if c.is_ascii_lowercase() {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            // Trailing primes are part of the atom (used by renamed inner
            // predicates in transformed output).
            while i < bytes.len() && bytes[i] == b'\'' {
                i += 1;
            }
            toks.push(SpannedTok { tok: Tok::Atom(src[start..i].to_string()), line });
            continue;
        }
        if c.is_ascii_uppercase() || c == '_' {
            let start = i;
            while i < bytes.len()
                && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
            {
                i += 1;
            }
            toks.push(SpannedTok { tok: Tok::Var(src[start..i].to_string()), line });
            continue;
        }
        match c {
            '(' => {
                toks.push(SpannedTok { tok: Tok::LParen, line });
                i += 1;
                continue;
            }
            ')' => {
                toks.push(SpannedTok { tok: Tok::RParen, line });
                i += 1;
                continue;
            }
            '[' => {
                toks.push(SpannedTok { tok: Tok::LBracket, line });
                i += 1;
                continue;
            }
            ']' => {
                toks.push(SpannedTok { tok: Tok::RBracket, line });
                i += 1;
                continue;
            }
            ',' => {
                toks.push(SpannedTok { tok: Tok::Comma, line });
                i += 1;
                continue;
            }
            '.' => {
                // End-of-clause only when followed by layout or EOF.
                let next = bytes.get(i + 1).copied();
                let ends = match next {
                    None => true,
                    Some(b) => (b as char).is_whitespace() || b == b'%',
                };
                if ends {
                    toks.push(SpannedTok { tok: Tok::Dot, line });
                    i += 1;
                    continue;
                }
                return Err(Error::parse(line, "unexpected `.`".to_string()));
            }
            _ => {}
        }
        // Operators by maximal munch.
        let rest = &src[i..];
        let mut matched = None;
        for op in OPERATORS {
            if rest.starts_with(op) {
                matched = Some(*op);
                break;
            }
        }
        match matched {
            Some("|") => {
                toks.push(SpannedTok { tok: Tok::Bar, line });
                i += 1;
            }
            Some(op) => {
                toks.push(SpannedTok { tok: Tok::Op(op), line });
                i += op.len();
            }
            None => {
                return Err(Error::parse(line, format!("unexpected character `{c}`")));
            }
        }
    }
    Ok(toks)
}

/// Parsed term, before name resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Var(String),
    Int(i64),
    Float(f64),
    Atom(String),
    Struct(String, Vec<Ast>),
    /// `T(X)` with a variable in functor position (regular-program bodies).
    VarCall(String, Vec<Ast>),
}

impl Ast {
    pub fn functor(&self) -> Option<(&str, usize)> {
        match self {
            Ast::Atom(n) => Some((n, 0)),
            Ast::Struct(n, args) => Some((n, args.len())),
            _ => None,
        }
    }
}

/// One top-level item of a source file.
#[derive(Debug, Clone)]
pub enum Item {
    Clause { head: Ast, body: Option<Ast>, line: u32 },
    PredDirective { head: Ast, pre: Option<Ast>, post: Option<Ast>, line: u32 },
    RegtypeDirective { name: String, arity: u32, line: u32 },
}

struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
}

/// Binding priorities: a term of priority p may not contain an unparenthesized
/// operator with priority > p. Mirrors the usual Prolog operator table.
fn infix_priority(op: &str) -> Option<(u32, u32, u32)> {
    // (priority, left max, right max)
    Some(match op {
        ":-" => (1200, 1199, 1199),
        ";" => (1100, 1099, 1100),
        "->" => (1050, 1049, 1050),
        "," => (1000, 999, 1000),
        "=" | "<" | ">" | "=<" | ">=" | "is" => (700, 699, 699),
        "+" | "-" | "/\\" | "\\/" | "#" => (500, 500, 499),
        "*" | "//" | "mod" | "/" => (400, 400, 399),
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn line(&self) -> u32 {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.line)
            .unwrap_or(1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<()> {
        let line = self.line();
        match self.next() {
            Some(t) if &t == want => Ok(()),
            other => Err(Error::parse(
                line,
                format!("expected {what}, found {other:?}"),
            )),
        }
    }

    fn primary(&mut self, max_priority: u32) -> Result<Ast> {
        let line = self.line();
        match self.next() {
            Some(Tok::Int(v)) => Ok(Ast::Int(v)),
            Some(Tok::Float(v)) => Ok(Ast::Float(v)),
            Some(Tok::Var(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.next();
                    let args = self.arg_list()?;
                    Ok(Ast::VarCall(name, args))
                } else {
                    Ok(Ast::Var(name))
                }
            }
            Some(Tok::Atom(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.next();
                    let args = self.arg_list()?;
                    Ok(Ast::Struct(name, args))
                } else {
                    Ok(Ast::Atom(name))
                }
            }
            Some(Tok::LParen) => {
                let t = self.term(1200)?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(t)
            }
            Some(Tok::LBracket) => self.list_tail(),
            Some(Tok::Op("-")) if max_priority >= 200 => {
                // Unary minus; fold numeric literals.
                let t = self.primary(200)?;
                match t {
                    Ast::Int(v) => Ok(Ast::Int(-v)),
                    Ast::Float(v) => Ok(Ast::Float(-v)),
                    other => Ok(Ast::Struct("-".into(), vec![other])),
                }
            }
            other => Err(Error::parse(line, format!("expected a term, found {other:?}"))),
        }
    }

    fn arg_list(&mut self) -> Result<Vec<Ast>> {
        let mut args = Vec::new();
        loop {
            args.push(self.term(999)?);
            match self.peek() {
                Some(Tok::Comma) => {
                    self.next();
                }
                Some(Tok::RParen) => {
                    self.next();
                    return Ok(args);
                }
                _ => {
                    return Err(Error::parse(self.line(), "expected `,` or `)`".to_string()));
                }
            }
        }
    }

    fn list_tail(&mut self) -> Result<Ast> {
        if matches!(self.peek(), Some(Tok::RBracket)) {
            self.next();
            return Ok(Ast::Atom("[]".into()));
        }
        let mut elems = Vec::new();
        loop {
            elems.push(self.term(999)?);
            match self.peek() {
                Some(Tok::Comma) => {
                    self.next();
                }
                Some(Tok::Bar) => {
                    self.next();
                    let tail = self.term(999)?;
                    self.expect(&Tok::RBracket, "`]`")?;
                    return Ok(build_list(elems, tail));
                }
                Some(Tok::RBracket) => {
                    self.next();
                    return Ok(build_list(elems, Ast::Atom("[]".into())));
                }
                _ => {
                    return Err(Error::parse(
                        self.line(),
                        "expected `,`, `|` or `]`".to_string(),
                    ));
                }
            }
        }
    }

    fn term(&mut self, max_priority: u32) -> Result<Ast> {
        let mut lhs = self.primary(max_priority)?;
        loop {
            let op: &str = match self.peek() {
                Some(Tok::Comma) => ",",
                Some(Tok::Op(op)) => op,
                Some(Tok::Atom(a)) if a == "is" || a == "mod" => {
                    if a == "is" {
                        "is"
                    } else {
                        "mod"
                    }
                }
                _ => break,
            };
            let Some((prio, _lmax, rmax)) = infix_priority(op) else {
                break;
            };
            if prio > max_priority {
                break;
            }
            let op_name = op.to_string();
            self.next();
            let rhs = self.term(rmax)?;
            lhs = Ast::Struct(op_name, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn directive(&mut self, line: u32) -> Result<Item> {
        match self.peek() {
            Some(Tok::Atom(a)) if a == "pred" => {
                self.next();
                // Head is a plain atom/struct; conditions follow behind `:` / `=>`.
                let head = self.primary(0)?;
                let mut pre = None;
                let mut post = None;
                if matches!(self.peek(), Some(Tok::Op(":"))) {
                    self.next();
                    pre = Some(self.term(999)?);
                }
                if matches!(self.peek(), Some(Tok::Op("=>"))) {
                    self.next();
                    post = Some(self.term(999)?);
                }
                self.expect(&Tok::Dot, "`.` after pred directive")?;
                Ok(Item::PredDirective { head, pre, post, line })
            }
            Some(Tok::Atom(a)) if a == "regtype" => {
                self.next();
                let l = self.line();
                let name = match self.next() {
                    Some(Tok::Atom(n)) => n,
                    other => {
                        return Err(Error::parse(l, format!("expected regtype name, found {other:?}")));
                    }
                };
                self.expect(&Tok::Op("/"), "`/` in regtype declaration")?;
                let l = self.line();
                let arity = match self.next() {
                    Some(Tok::Int(n)) if n >= 1 => n as u32,
                    other => {
                        return Err(Error::parse(l, format!("expected regtype arity, found {other:?}")));
                    }
                };
                self.expect(&Tok::Dot, "`.` after regtype declaration")?;
                Ok(Item::RegtypeDirective { name, arity, line })
            }
            _ => Err(Error::parse(
                self.line(),
                "unknown directive (expected `pred` or `regtype`)".to_string(),
            )),
        }
    }

    fn item(&mut self) -> Result<Item> {
        let line = self.line();
        if matches!(self.peek(), Some(Tok::Op(":-"))) {
            self.next();
            return self.directive(line);
        }
        let t = self.term(1200)?;
        self.expect(&Tok::Dot, "`.` at end of clause")?;
        match t {
            Ast::Struct(name, args) if name == ":-" && args.len() == 2 => {
                let mut it = args.into_iter();
                let head = it.next().unwrap();
                let body = it.next().unwrap();
                Ok(Item::Clause { head, body: Some(body), line })
            }
            head => Ok(Item::Clause { head, body: None, line }),
        }
    }
}

fn build_list(elems: Vec<Ast>, tail: Ast) -> Ast {
    let mut t = tail;
    for e in elems.into_iter().rev() {
        t = Ast::Struct(".".into(), vec![e, t]);
    }
    t
}

/// Parse a whole source file into items.
pub fn parse_source(src: &str) -> Result<Vec<Item>> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let mut items = Vec::new();
    while p.peek().is_some() {
        items.push(p.item()?);
    }
    Ok(items)
}

/// Parse a single goal (query text without the trailing dot).
pub fn parse_goal(src: &str) -> Result<Ast> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    let t = p.term(1200)?;
    if matches!(p.peek(), Some(Tok::Dot)) {
        p.next();
    }
    if p.peek().is_some() {
        return Err(Error::parse(p.line(), "trailing input after goal".to_string()));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty_program() {
        assert!(parse_source("").unwrap().is_empty());
    }

    #[test]
    fn facts_and_rules() {
        let items = parse_source("p(1,42).  p(2,gamma).\nq(X) :- p(X, _), X > 0.").unwrap();
        assert_eq!(items.len(), 3);
        match &items[2] {
            Item::Clause { head, body: Some(body), line } => {
                assert_eq!(head.functor(), Some(("q", 1)));
                assert_eq!(*line, 2);
                assert_eq!(body.functor(), Some((",", 2)));
            }
            other => panic!("unexpected item {other:?}"),
        }
    }

    #[test]
    fn unclosed_term_reports_line() {
        let err = parse_source("p(X :-").unwrap_err();
        match err {
            crate::error::Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pred_directive_forms() {
        let items = parse_source(
            ":- pred p(X,Y) : (int(X), var(Y)) => (int(X), int(Y)).\n\
             :- pred q(X) : int(X).\n\
             :- pred r(X) => int(X).\n\
             :- pred s(X).\n",
        )
        .unwrap();
        assert_eq!(items.len(), 4);
        match &items[0] {
            Item::PredDirective { head, pre: Some(pre), post: Some(_), .. } => {
                assert_eq!(head.functor(), Some(("p", 2)));
                assert_eq!(pre.functor(), Some((",", 2)));
            }
            other => panic!("unexpected {other:?}"),
        }
        match &items[1] {
            Item::PredDirective { pre: Some(_), post: None, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
        match &items[3] {
            Item::PredDirective { pre: None, post: None, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn regtype_directive_and_varcall() {
        let items = parse_source(
            ":- regtype bintree/2.\n\
             bintree(empty,T).\n\
             bintree(tree(LC,X,RC),T) :- bintree(LC,T), T(X), bintree(RC,T).\n",
        )
        .unwrap();
        assert_eq!(items.len(), 3);
        match &items[0] {
            Item::RegtypeDirective { name, arity, .. } => {
                assert_eq!(name, "bintree");
                assert_eq!(*arity, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        match &items[2] {
            Item::Clause { body: Some(body), .. } => {
                // body is a conjunction containing T(X)
                let printed = format!("{body:?}");
                assert!(printed.contains("VarCall"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lists_and_operators() {
        let items = parse_source("go([1,2|T], X) :- X is 3 + 4 * 2, ( X > 0 -> t ; f ).").unwrap();
        assert_eq!(items.len(), 1);
        let Item::Clause { head, body: Some(body), .. } = &items[0] else {
            panic!()
        };
        match head {
            Ast::Struct(_, args) => {
                assert_eq!(args[0].functor(), Some((".", 2)));
            }
            _ => panic!(),
        }
        // `is` parses with + over *
        let printed = format!("{body:?}");
        assert!(printed.contains("is"));
        assert!(printed.contains("->"));
    }

    #[test]
    fn negative_numbers_fold() {
        let items = parse_source("p(-3, -2.5).").unwrap();
        let Item::Clause { head: Ast::Struct(_, args), .. } = &items[0] else {
            panic!()
        };
        assert_eq!(args[0], Ast::Int(-3));
        assert_eq!(args[1], Ast::Float(-2.5));
    }

    #[test]
    fn bitwise_ops_in_is() {
        let items = parse_source("p(R) :- R is (1 # 1) \\/ 0, Q is 1 /\\ 1, Q = R.").unwrap();
        assert_eq!(items.len(), 1);
    }

    #[test]
    fn primed_atoms() {
        let items = parse_source("p'(1,42).").unwrap();
        let Item::Clause { head, .. } = &items[0] else { panic!() };
        assert_eq!(head.functor(), Some(("p'", 2)));
    }
}
