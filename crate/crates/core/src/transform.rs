//! The optimized definitional transformation: for every predicate with
//! assertion conditions, a wrapper runs a compiled calls check, the renamed
//! original predicate, and a compiled success check. Property checks are
//! reified into 0/1 bits once per distinct literal and combined with bitwise
//! operations; the status bits of each precondition conjunction are shared
//! between the calls stage and the success stage.

use std::collections::HashMap;

use crate::assertion::{
    classify_prop, dnf_is_true, normalize_assertions, AssertionCondition, CondId, CondKind, Conj,
    PropClass, PropLit,
};
use crate::error::Result;
use crate::program::{PredKey, Program, Template};
use crate::regtype::TypeUniverse;
use crate::symbol::SymbolTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitRef(pub u16);

/// Bit expression over already-computed bits; mirrors the `is/2` encoding
/// (`/\`, `\/`, `# 1`).
#[derive(Debug, Clone)]
pub enum BitExpr {
    Bit(BitRef),
    Const(u8),
    And(Box<BitExpr>, Box<BitExpr>),
    Or(Box<BitExpr>, Box<BitExpr>),
    Xor1(Box<BitExpr>),
}

#[derive(Debug, Clone)]
pub struct BitAssign {
    pub dst: BitRef,
    pub expr: BitExpr,
}

/// One reify step: evaluate a property literal to a bit.
#[derive(Debug, Clone)]
pub struct PropCheck {
    pub lit: PropLit,
    pub class: PropClass,
    /// The checked term (the literal's first argument).
    pub term_arg: Template,
    pub bit: BitRef,
}

/// Precondition status of one success condition, as seen from the success
/// stage. `Const1` encodes an absent (`true`) precondition.
#[derive(Debug, Clone, Copy)]
pub enum PreBit {
    Const1,
    Bit(BitRef),
}

#[derive(Debug, Clone)]
pub struct SuccessCond {
    pub id: CondId,
    pub pre: PreBit,
    /// The implication bit `(Pre # 1) \/ Post`, recorded per condition so the
    /// error set stays label-precise even though the combined expression
    /// collapses them.
    pub impl_bit: BitRef,
    /// Bits of the post literals of this condition (short-circuit support).
    pub post_bits: Vec<BitRef>,
    pub line: u32,
}

/// Compiled checks of one predicate: the wrapper in executable form.
#[derive(Debug, Clone)]
pub struct CompiledWrapper {
    pub pred: PredKey,
    pub arity: u32,
    pub head_vars: Vec<String>,
    pub nbits: u16,
    /// Reify steps evaluated at call time, in first-occurrence order.
    pub call_reify: Vec<PropCheck>,
    pub call_assigns: Vec<BitAssign>,
    /// The calls condition (`Rc` bit); absent when trivially true.
    pub calls_cond: Option<(CondId, BitRef, u32)>,
    /// Precondition-conjunction bits referenced by the success stage.
    pub shared_bits: Vec<BitRef>,
    pub success_reify: Vec<PropCheck>,
    pub success_assigns: Vec<BitAssign>,
    pub success_conds: Vec<SuccessCond>,
    /// The combined `Rs` bit; absent when there are no success conditions.
    pub success_result: Option<BitRef>,
}

impl CompiledWrapper {
    pub fn has_call_stage(&self) -> bool {
        self.calls_cond.is_some() || !self.call_reify.is_empty()
    }

    pub fn has_success_stage(&self) -> bool {
        !self.success_conds.is_empty()
    }
}

/// Evaluate a bit expression over a frame of computed bits.
pub fn eval_expr(expr: &BitExpr, bits: &[u8]) -> u8 {
    match expr {
        BitExpr::Bit(b) => bits[b.0 as usize],
        BitExpr::Const(c) => *c,
        BitExpr::And(a, b) => eval_expr(a, bits) & eval_expr(b, bits),
        BitExpr::Or(a, b) => eval_expr(a, bits) | eval_expr(b, bits),
        BitExpr::Xor1(a) => eval_expr(a, bits) ^ 1,
    }
}

/// Run a straight-line assignment sequence over the frame.
pub fn eval_assigns(assigns: &[BitAssign], bits: &mut [u8]) {
    for a in assigns {
        bits[a.dst.0 as usize] = eval_expr(&a.expr, bits);
    }
}

struct Compiler<'a> {
    program: &'a Program,
    universe: &'a mut TypeUniverse,
    nbits: u16,
    reify: Vec<PropCheck>,
    assigns: Vec<BitAssign>,
    /// Distinct literal registry of the current stage.
    lit_bits: Vec<(PropLit, BitRef)>,
    /// Distinct conjunction registry (call stage only).
    conj_bits: Vec<(Conj, BitRef)>,
}

impl<'a> Compiler<'a> {
    fn fresh(&mut self) -> BitRef {
        let b = BitRef(self.nbits);
        self.nbits += 1;
        b
    }

    fn lit_bit(&mut self, lit: &PropLit) -> Result<BitRef> {
        if let Some((_, b)) = self.lit_bits.iter().find(|(l, _)| l == lit) {
            return Ok(*b);
        }
        let class = classify_prop(lit, self.program, self.universe)?;
        let bit = self.fresh();
        self.reify.push(PropCheck {
            lit: lit.clone(),
            class,
            term_arg: lit.args[0].clone(),
            bit,
        });
        self.lit_bits.push((lit.clone(), bit));
        Ok(bit)
    }

    /// Bit of one conjunction; registered for cross-stage sharing.
    fn conj_bit(&mut self, conj: &Conj) -> Result<BitRef> {
        debug_assert!(!conj.is_empty());
        if let Some((_, b)) = self.conj_bits.iter().find(|(c, _)| c == conj) {
            return Ok(*b);
        }
        let mut bits = Vec::with_capacity(conj.len());
        for lit in conj {
            bits.push(self.lit_bit(lit)?);
        }
        let bit = if bits.len() == 1 {
            bits[0]
        } else {
            let expr = bits[1..]
                .iter()
                .fold(BitExpr::Bit(bits[0]), |acc, b| {
                    BitExpr::And(Box::new(acc), Box::new(BitExpr::Bit(*b)))
                });
            let dst = self.fresh();
            self.assigns.push(BitAssign { dst, expr });
            dst
        };
        self.conj_bits.push((conj.clone(), bit));
        Ok(bit)
    }

    /// Bit of a DNF formula: OR over its conjunction bits.
    fn dnf_bit(&mut self, dnf: &[Conj]) -> Result<PreBit> {
        if dnf_is_true(&dnf.to_vec()) {
            return Ok(PreBit::Const1);
        }
        let mut bits = Vec::with_capacity(dnf.len());
        for conj in dnf {
            bits.push(self.conj_bit(conj)?);
        }
        if bits.len() == 1 {
            return Ok(PreBit::Bit(bits[0]));
        }
        let expr = bits[1..]
            .iter()
            .fold(BitExpr::Bit(bits[0]), |acc, b| {
                BitExpr::Or(Box::new(acc), Box::new(BitExpr::Bit(*b)))
            });
        let dst = self.fresh();
        self.assigns.push(BitAssign { dst, expr });
        Ok(PreBit::Bit(dst))
    }

    fn take_stage(&mut self) -> (Vec<PropCheck>, Vec<BitAssign>) {
        self.lit_bits.clear();
        self.conj_bits.clear();
        (std::mem::take(&mut self.reify), std::mem::take(&mut self.assigns))
    }
}

/// Compile the assertion conditions of one predicate into a wrapper. Returns
/// `None` when the predicate has no (nontrivial) conditions, in which case
/// its definition is untouched.
pub fn wrap(
    key: PredKey,
    conditions: &[AssertionCondition],
    program: &Program,
    universe: &mut TypeUniverse,
) -> Result<Option<CompiledWrapper>> {
    if conditions.is_empty() {
        return Ok(None);
    }
    let arity = conditions[0].arity;
    let head_vars = conditions[0].head_vars.clone();
    let mut c = Compiler {
        program,
        universe,
        nbits: 0,
        reify: Vec::new(),
        assigns: Vec::new(),
        lit_bits: Vec::new(),
        conj_bits: Vec::new(),
    };

    // Call stage: the calls condition plus every success precondition (whose
    // status bits carry over to the success stage).
    let calls = conditions.iter().find(|x| x.kind == CondKind::Calls);
    let successes: Vec<&AssertionCondition> =
        conditions.iter().filter(|x| x.kind == CondKind::Success).collect();

    let calls_cond = match calls {
        Some(cond) => match c.dnf_bit(&cond.pre)? {
            PreBit::Const1 => None,
            PreBit::Bit(b) => Some((cond.id, b, cond.line)),
        },
        None => None,
    };
    let mut pre_bits = Vec::with_capacity(successes.len());
    for s in &successes {
        pre_bits.push(c.dnf_bit(&s.pre)?);
    }
    // Statuses shared between the stages: the distinct pre bits.
    let mut shared_bits = Vec::new();
    for pb in &pre_bits {
        if let PreBit::Bit(b) = pb {
            if !shared_bits.contains(b) {
                shared_bits.push(*b);
            }
        }
    }
    let (call_reify, call_assigns) = c.take_stage();

    // Success stage: post literals are re-reified (they must be evaluated in
    // the success store); pre bits are reused through the status variables.
    let mut success_conds = Vec::new();
    let mut impl_bits = Vec::new();
    for (s, pre) in successes.iter().zip(pre_bits) {
        let post = c.dnf_bit(&s.post)?;
        let post_bits: Vec<BitRef> = s
            .post
            .iter()
            .flat_map(|conj| conj.iter())
            .filter_map(|lit| c.lit_bits.iter().find(|(l, _)| l == lit).map(|(_, b)| *b))
            .collect();
        let post_expr = match post {
            PreBit::Const1 => BitExpr::Const(1),
            PreBit::Bit(b) => BitExpr::Bit(b),
        };
        let expr = match pre {
            PreBit::Const1 => post_expr,
            PreBit::Bit(p) => {
                BitExpr::Or(Box::new(BitExpr::Xor1(Box::new(BitExpr::Bit(p)))), Box::new(post_expr))
            }
        };
        let dst = c.fresh();
        c.assigns.push(BitAssign { dst, expr });
        impl_bits.push(dst);
        success_conds.push(SuccessCond {
            id: s.id,
            pre,
            impl_bit: dst,
            post_bits,
            line: s.line,
        });
    }
    let success_result = match impl_bits.len() {
        0 => None,
        1 => Some(impl_bits[0]),
        _ => {
            let expr = impl_bits[1..]
                .iter()
                .fold(BitExpr::Bit(impl_bits[0]), |acc, b| {
                    BitExpr::And(Box::new(acc), Box::new(BitExpr::Bit(*b)))
                });
            let dst = c.fresh();
            c.assigns.push(BitAssign { dst, expr });
            Some(dst)
        }
    };
    let nbits = c.nbits;
    let (success_reify, success_assigns) = c.take_stage();

    if calls_cond.is_none() && success_conds.is_empty() {
        return Ok(None);
    }
    Ok(Some(CompiledWrapper {
        pred: key,
        arity,
        head_vars,
        nbits,
        call_reify,
        call_assigns,
        calls_cond,
        shared_bits,
        success_reify,
        success_assigns,
        success_conds,
        success_result,
    }))
}

/// The compiled checks of a whole program.
#[derive(Debug, Default)]
pub struct CheckPlan {
    map: HashMap<PredKey, CompiledWrapper>,
}

impl CheckPlan {
    pub fn wrapper(&self, key: PredKey) -> Option<&CompiledWrapper> {
        self.map.get(&key)
    }

    pub fn wrappers(&self) -> impl Iterator<Item = &CompiledWrapper> {
        self.map.values()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn build_plan(program: &Program, universe: &mut TypeUniverse) -> Result<CheckPlan> {
    let mut plan = CheckPlan::default();
    for def in program.predicates() {
        if def.assertions.is_empty() {
            continue;
        }
        let conditions = normalize_assertions(def.key, &def.assertions);
        if let Some(w) = wrap(def.key, &conditions, program, universe)? {
            plan.map.insert(def.key, w);
        }
    }
    Ok(plan)
}

// ---------------------------------------------------------------------------
// Printing the transformed program
// ---------------------------------------------------------------------------

fn bit_name(b: BitRef, w: &CompiledWrapper) -> String {
    if w.calls_cond.map(|(_, rc, _)| rc) == Some(b) {
        "Rc".to_string()
    } else if w.success_result == Some(b) {
        "Rs".to_string()
    } else {
        format!("R{}", b.0)
    }
}

fn render_expr_src(e: &BitExpr, w: &CompiledWrapper) -> String {
    match e {
        BitExpr::Bit(b) => bit_name(*b, w),
        BitExpr::Const(c) => format!("{c}"),
        BitExpr::And(a, b) => format!("{}/\\{}", render_expr_src(a, w), render_expr_src(b, w)),
        BitExpr::Or(a, b) => {
            format!("({}\\/{})", render_expr_src(a, w), render_expr_src(b, w))
        }
        BitExpr::Xor1(a) => format!("({}#1)", render_expr_src(a, w)),
    }
}

fn render_prop_src(lit: &PropLit, names: &[String], symbols: &SymbolTable) -> String {
    if lit.args.is_empty() {
        return symbols.name(lit.name).to_string();
    }
    let t = Template::Struct(lit.name, lit.args.clone().into_boxed_slice());
    crate::program::render_template(&t, names, symbols)
}

/// Print the full transformed program in source syntax: wrapper clauses,
/// check predicates, renamed originals, and unchanged predicates verbatim.
pub fn render_transformed(program: &Program, plan: &CheckPlan) -> String {
    let mut out = String::new();
    for def in program.predicates() {
        let name = program.symbols.name(def.key.name).to_string();
        if def.is_regtype {
            out.push_str(&format!(":- regtype {}/{}.\n", name, def.key.arity));
        }
        let Some(w) = plan.wrapper(def.key) else {
            for cl in &def.clauses {
                out.push_str(&crate::program::render_clause(&name, cl, &program.symbols));
                out.push('\n');
            }
            if !def.clauses.is_empty() || def.is_regtype {
                out.push('\n');
            }
            continue;
        };
        let inner = inner_name(&name, program);
        let hv = w.head_vars.join(",");
        let status: Vec<String> = w.shared_bits.iter().map(|b| bit_name(*b, w)).collect();
        let args_with_status = if status.is_empty() {
            hv.clone()
        } else {
            format!("{},{}", hv, status.join(","))
        };
        // Wrapper clause.
        let mut body = Vec::new();
        if w.has_call_stage() {
            body.push(format!("{name}_c({args_with_status})"));
        }
        body.push(format!("{inner}({hv})"));
        if w.has_success_stage() {
            body.push(format!("{name}_s({args_with_status})"));
        }
        out.push_str(&format!("{name}({hv}) :-\n    {}.\n\n", body.join(",\n    ")));
        // Calls-check predicate.
        if w.has_call_stage() {
            let mut lines = Vec::new();
            for pc in &w.call_reify {
                lines.push(format!(
                    "reify_check({},{})",
                    render_prop_src(&pc.lit, &w.head_vars, &program.symbols),
                    bit_name(pc.bit, w)
                ));
            }
            for a in &w.call_assigns {
                lines.push(format!("{} is {}", bit_name(a.dst, w), render_expr_src(&a.expr, w)));
            }
            if w.calls_cond.is_some() {
                lines.push("error_if_false(Rc)".to_string());
            }
            out.push_str(&format!(
                "{name}_c({args_with_status}) :-\n    {}.\n\n",
                lines.join(",\n    ")
            ));
        }
        // Success-check predicate.
        if w.has_success_stage() {
            let mut lines = Vec::new();
            for pc in &w.success_reify {
                lines.push(format!(
                    "reify_check({},{})",
                    render_prop_src(&pc.lit, &w.head_vars, &program.symbols),
                    bit_name(pc.bit, w)
                ));
            }
            for a in &w.success_assigns {
                lines.push(format!("{} is {}", bit_name(a.dst, w), render_expr_src(&a.expr, w)));
            }
            let rs = w.success_result.expect("success stage has a result bit");
            lines.push(format!("error_if_false({})", bit_name(rs, w)));
            out.push_str(&format!(
                "{name}_s({args_with_status}) :-\n    {}.\n\n",
                lines.join(",\n    ")
            ));
        }
        // Renamed original clauses; call sites elsewhere stay untouched.
        for cl in &def.clauses {
            out.push_str(&crate::program::render_clause(&inner, cl, &program.symbols));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Inner (renamed) predicate: the original name with a prime appended,
/// primed further if the program already uses that name.
pub fn inner_name(name: &str, program: &Program) -> String {
    let mut candidate = format!("{name}'");
    loop {
        let taken = program
            .symbols
            .lookup(&candidate)
            .map(|s| program.predicates().any(|d| d.key.name == s))
            .unwrap_or(false);
        if !taken {
            return candidate;
        }
        candidate.push('\'');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_source;
    use crate::program::build_program;

    const EXAMPLE1: &str = "\
:- pred p(X,Y) : (int(X), var(Y)) => (int(X), int(Y)).
:- pred p(X,Y) : (int(X), var(Y)) => (int(X), atm(Y)).
:- pred p(X,Y) : (atm(X), var(Y)) => (atm(X), atm(Y)).

p(1,42).  p(2,gamma).  p(a,alpha).
";

    fn plan_for(src: &str) -> (Program, TypeUniverse, CheckPlan) {
        let p = build_program(&parse_source(src).unwrap()).unwrap();
        let mut u = TypeUniverse::from_program(&p).unwrap();
        let plan = build_plan(&p, &mut u).unwrap();
        (p, u, plan)
    }

    fn example1_wrapper() -> (Program, CheckPlan, PredKey) {
        let (p, _u, plan) = plan_for(EXAMPLE1);
        let key = PredKey { name: p.symbols.lookup("p").unwrap(), arity: 2 };
        (p, plan, key)
    }

    #[test]
    fn example1_structure() {
        // Golden structural facts, worked out by hand from the three
        // assertions: 3 distinct literals in the calls disjunction, 3 bit
        // operations (two conjunction bits and the disjunction), 4 fresh
        // reify steps on the success side, and the two conjunction bits are
        // shared between the stages.
        let (_p, plan, key) = example1_wrapper();
        let w = plan.wrapper(key).unwrap();
        assert_eq!(w.call_reify.len(), 3);
        assert_eq!(w.call_assigns.len(), 3);
        assert!(w.calls_cond.is_some());
        assert_eq!(w.success_reify.len(), 4);
        assert_eq!(w.shared_bits.len(), 2);
        assert_eq!(w.success_conds.len(), 3);
        // C1 and C2 have identical preconditions: same status bit.
        let pre_bit = |i: usize| match w.success_conds[i].pre {
            PreBit::Bit(b) => b,
            PreBit::Const1 => panic!("expected a bit"),
        };
        assert_eq!(pre_bit(0), pre_bit(1));
        assert_ne!(pre_bit(0), pre_bit(2));
        // All success pre bits are shared (came from the call stage).
        for i in 0..3 {
            assert!(w.shared_bits.contains(&pre_bit(i)));
        }
    }

    #[test]
    fn example1_truth_table() {
        // The compiled Rs expression agrees with the direct evaluation of
        // /\ (Pre_i -> Post_i) on all 2^6 assignments to the six free bits
        // (two shared pre bits, four success reify bits).
        let (_p, plan, key) = example1_wrapper();
        let w = plan.wrapper(key).unwrap();
        let free: Vec<BitRef> = w
            .shared_bits
            .iter()
            .copied()
            .chain(w.success_reify.iter().map(|pc| pc.bit))
            .collect();
        assert_eq!(free.len(), 6);
        let rs = w.success_result.unwrap();
        for assignment in 0..(1u32 << free.len()) {
            let mut bits = vec![0u8; w.nbits as usize];
            for (i, b) in free.iter().enumerate() {
                bits[b.0 as usize] = ((assignment >> i) & 1) as u8;
            }
            eval_assigns(&w.success_assigns, &mut bits);
            let got = bits[rs.0 as usize];
            // Direct evaluation: for each success condition find pre and the
            // conjunction of its post literal bits.
            let mut want = 1u8;
            for sc in &w.success_conds {
                let pre = match sc.pre {
                    PreBit::Const1 => 1,
                    PreBit::Bit(b) => bits[b.0 as usize],
                };
                let post = sc.post_bits.iter().fold(1u8, |acc, b| acc & bits[b.0 as usize]);
                let implication = (pre ^ 1) | post;
                want &= implication;
            }
            assert_eq!(got, want, "assignment {assignment:06b}");
        }
    }

    #[test]
    fn single_literal_compiles_to_one_step() {
        let (p, plan, _) = {
            let (p, _u, plan) = plan_for(":- pred q(X) : int(X).\nq(1).");
            (p, plan, ())
        };
        let key = PredKey { name: p.symbols.lookup("q").unwrap(), arity: 1 };
        let w = plan.wrapper(key).unwrap();
        assert_eq!(w.call_reify.len(), 1);
        assert!(w.call_assigns.is_empty());
        let (_, rc, _) = w.calls_cond.unwrap();
        assert_eq!(rc, w.call_reify[0].bit);
        assert!(!w.has_success_stage());
    }

    #[test]
    fn no_assertions_no_wrapper() {
        let (p, _u, plan) = plan_for("q(1).\nq(2).");
        let key = PredKey { name: p.symbols.lookup("q").unwrap(), arity: 1 };
        assert!(plan.wrapper(key).is_none());
    }

    #[test]
    fn trivial_conditions_are_omitted() {
        // An assertion with no parts at all produces no wrapper.
        let (p, _u, plan) = plan_for(":- pred q(X).\nq(1).");
        let key = PredKey { name: p.symbols.lookup("q").unwrap(), arity: 1 };
        assert!(plan.wrapper(key).is_none());
        // Post-only assertion: p_C carries no error check but computes
        // nothing either (pre is true), success stage present.
        let (p2, _u2, plan2) = plan_for(":- pred q(X) => int(X).\nq(1).");
        let key2 = PredKey { name: p2.symbols.lookup("q").unwrap(), arity: 1 };
        let w = plan2.wrapper(key2).unwrap();
        assert!(w.calls_cond.is_none());
        assert!(w.has_success_stage());
        assert!(matches!(w.success_conds[0].pre, PreBit::Const1));
    }

    #[test]
    fn undeclared_property_is_definition_error() {
        let p = build_program(&parse_source(":- pred q(X) : mystery(X).\nq(1).").unwrap()).unwrap();
        let mut u = TypeUniverse::from_program(&p).unwrap();
        let err = build_plan(&p, &mut u).unwrap_err();
        assert!(err.to_string().contains("undeclared property"), "{err}");
    }

    #[test]
    fn printed_shape_matches_example() {
        let (p, _u, plan) = plan_for(EXAMPLE1);
        let printed = render_transformed(&p, &plan);
        // Wrapper with both check predicates and the renamed inner predicate.
        assert!(printed.contains("p(X,Y) :-"), "{printed}");
        assert!(printed.contains("p_c(X,Y,"));
        assert!(printed.contains("p'(X,Y)"));
        assert!(printed.contains("p_s(X,Y,"));
        assert!(printed.contains("error_if_false(Rc)"));
        assert!(printed.contains("error_if_false(Rs)"));
        assert!(printed.contains("p'(1,42)"));
        assert_eq!(printed.matches("reify_check(").count(), 7);
        // The printed transformed program still parses.
        let reparsed = parse_source(&printed).unwrap();
        assert!(!reparsed.is_empty());
    }

    #[test]
    fn evaluate_formula_basics() {
        // or(1,0) = 1; implication with A=1,B=0: (A#1) \/ B = 0.
        let one = BitExpr::Const(1);
        let zero = BitExpr::Const(0);
        assert_eq!(eval_expr(&BitExpr::Or(Box::new(one.clone()), Box::new(zero.clone())), &[]), 1);
        let imp = BitExpr::Or(
            Box::new(BitExpr::Xor1(Box::new(BitExpr::Const(1)))),
            Box::new(BitExpr::Const(0)),
        );
        assert_eq!(eval_expr(&imp, &[]), 0);
    }
}
