//! The two discrete backends.
//!
//! * **Finite structures** — an explicit finite universe with a designated
//!   base subset containing `c0`/`c1` and optional relation tables.  Every
//!   question is decided by brute force over the universe, so this backend
//!   doubles as the ground-truth oracle for everything the engine computes:
//!   the counting measure of a definable set is literally the length of its
//!   enumeration.
//! * **Pure sets** — an infinite set with no structure beyond equality and a
//!   few distinguished pairwise-distinct constants.  Quantifiers are
//!   eliminated by substitution (a positive equation pins the variable) or
//!   dropped (finitely many disequalities never exhaust an infinite set).
//!   Morley rank is computed by recursing along the last coordinate, and
//!   [`diagrams`] enumerates the finitely many equality types of a tuple,
//!   which is exactly the level-set skeleton the engine needs here.

use crate::logic::{
    Atom, ConstValue, DefinableSet, Element, Formula, LogicError, ModelOps, Point, Signature,
    SimpleTerm, Theory, Var, normalize_eq,
};
use num::BigUint;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiscreteError {
    #[error("invalid finite structure: {0}")]
    BadStructure(String),
    #[error("invalid structure JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

// ---------------------------------------------------------------------------
// Finite structures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
struct RawStructure {
    universe: Vec<String>,
    base: Vec<String>,
    c0: String,
    c1: String,
    #[serde(default)]
    relations: BTreeMap<String, BTreeSet<Vec<String>>>,
}

/// A finite model: universe, base sort, designated base elements and
/// relation tables.  Instances are always validated, whether built directly
/// or deserialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawStructure")]
pub struct FiniteStructure {
    universe: Vec<String>,
    base: Vec<String>,
    c0: String,
    c1: String,
    relations: BTreeMap<String, BTreeSet<Vec<String>>>,
}

impl TryFrom<RawStructure> for FiniteStructure {
    type Error = DiscreteError;

    fn try_from(raw: RawStructure) -> Result<FiniteStructure, DiscreteError> {
        FiniteStructure::new(raw.universe, raw.base, raw.c0, raw.c1, raw.relations)
    }
}

/// Names the formula language reserves; universe elements may not use them.
fn reserved_name(name: &str) -> bool {
    matches!(name, "true" | "false" | "base" | "E" | "A" | "c0" | "c1")
        || matches!(name, "x" | "y" | "z" | "u" | "v" | "w")
        || (name.starts_with('x') && name[1..].chars().all(|c| c.is_ascii_digit()) && name.len() > 1)
}

impl FiniteStructure {
    pub fn new(
        universe: Vec<String>,
        base: Vec<String>,
        c0: String,
        c1: String,
        relations: BTreeMap<String, BTreeSet<Vec<String>>>,
    ) -> Result<FiniteStructure, DiscreteError> {
        let bad = |msg: String| Err(DiscreteError::BadStructure(msg));
        if universe.is_empty() {
            return bad("empty universe".into());
        }
        let mut seen = BTreeSet::new();
        for e in &universe {
            if e.is_empty() || reserved_name(e) {
                return bad(format!("unusable element name `{e}`"));
            }
            if !seen.insert(e.clone()) {
                return bad(format!("duplicate element `{e}`"));
            }
        }
        let universe_set: BTreeSet<&String> = universe.iter().collect();
        for e in &base {
            if !universe_set.contains(e) {
                return bad(format!("base element `{e}` is not in the universe"));
            }
        }
        let base_set: BTreeSet<&String> = base.iter().collect();
        if base_set.len() != base.len() {
            return bad("duplicate base element".into());
        }
        if base.len() < 2 {
            return bad("base sort needs at least two elements".into());
        }
        if c0 == c1 {
            return bad("designated elements c0 and c1 must be distinct".into());
        }
        for c in [&c0, &c1] {
            if !base_set.contains(c) {
                return bad(format!("designated element `{c}` is not in the base sort"));
            }
        }
        for (name, tuples) in &relations {
            if name.is_empty() || reserved_name(name) || universe_set.contains(name) {
                return bad(format!("unusable relation name `{name}`"));
            }
            let mut arity = None;
            for t in tuples {
                match arity {
                    None => arity = Some(t.len()),
                    Some(a) if a != t.len() => {
                        return bad(format!("relation `{name}` mixes tuple lengths"))
                    }
                    _ => {}
                }
                if t.is_empty() {
                    return bad(format!("relation `{name}` has an empty tuple"));
                }
                for e in t {
                    if !universe_set.contains(e) {
                        return bad(format!("relation `{name}` mentions unknown `{e}`"));
                    }
                }
            }
            if arity.is_none() {
                return bad(format!("relation `{name}` has no tuples; omit it instead"));
            }
        }
        Ok(FiniteStructure {
            universe,
            base,
            c0,
            c1,
            relations,
        })
    }

    pub fn from_json(text: &str) -> Result<FiniteStructure, DiscreteError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn base(&self) -> &[String] {
        &self.base
    }

    pub fn c0(&self) -> &str {
        &self.c0
    }

    pub fn c1(&self) -> &str {
        &self.c1
    }

    pub fn is_base(&self, e: &str) -> bool {
        self.base.iter().any(|b| b == e)
    }

    /// The signature this structure interprets: `c0`, `c1`, one constant per
    /// element, and the relation symbols with their arities.
    pub fn signature(&self) -> Signature {
        let relations = self
            .relations
            .iter()
            .map(|(name, tuples)| {
                let arity = tuples.iter().next().map(|t| t.len()).unwrap_or(1);
                (name.clone(), arity)
            })
            .collect();
        Signature::finite(&self.universe, &self.c0, &self.c1, relations)
            .expect("validated structure yields a signature")
    }

    fn resolve(
        &self,
        sig: &Signature,
        term: &SimpleTerm,
        env: &BTreeMap<Var, String>,
    ) -> Result<String, LogicError> {
        match term {
            SimpleTerm::Var(v) => env
                .get(v)
                .cloned()
                .ok_or_else(|| LogicError::Arity(format!("no value for x{v}"))),
            SimpleTerm::Const(idx) => match sig.const_value(*idx) {
                Some(ConstValue::Elem(e)) => Ok(e.clone()),
                _ => Err(LogicError::Sort("constant is not a finite element".into())),
            },
        }
    }

    fn eval_env(
        &self,
        sig: &Signature,
        phi: &Formula,
        env: &mut BTreeMap<Var, String>,
    ) -> Result<bool, LogicError> {
        match phi {
            Formula::True => Ok(true),
            Formula::False => Ok(false),
            Formula::Not(x) => Ok(!self.eval_env(sig, x, env)?),
            Formula::And(a, b) => Ok(self.eval_env(sig, a, env)? && self.eval_env(sig, b, env)?),
            Formula::Or(a, b) => Ok(self.eval_env(sig, a, env)? || self.eval_env(sig, b, env)?),
            Formula::Atom(Atom::Eq(s, t)) => {
                Ok(self.resolve(sig, s, env)? == self.resolve(sig, t, env)?)
            }
            Formula::Atom(Atom::InBase(t)) => {
                let e = self.resolve(sig, t, env)?;
                Ok(self.is_base(&e))
            }
            Formula::Atom(Atom::Rel(name, args)) => {
                let table = self.relations.get(name).ok_or_else(|| {
                    LogicError::Sort(format!("structure has no relation `{name}`"))
                })?;
                let mut tuple = Vec::with_capacity(args.len());
                for a in args {
                    tuple.push(self.resolve(sig, a, env)?);
                }
                Ok(table.contains(&tuple))
            }
            Formula::Atom(Atom::Lin(_)) => Err(LogicError::Sort(
                "ordered atoms do not belong to the finite theory".into(),
            )),
            Formula::Exists(v, b) | Formula::Forall(v, b) => {
                let universal = matches!(phi, Formula::Forall(..));
                let saved = env.get(v).cloned();
                let mut acc = universal;
                for e in &self.universe {
                    env.insert(*v, e.clone());
                    let hit = self.eval_env(sig, b, env)?;
                    if hit != universal {
                        acc = !universal;
                        break;
                    }
                }
                match saved {
                    Some(s) => env.insert(*v, s),
                    None => env.remove(v),
                };
                Ok(acc)
            }
        }
    }

    /// Evaluates a set's formula at a point of matching arity.
    pub fn eval_at(&self, set: &DefinableSet, point: &[Element]) -> Result<bool, LogicError> {
        if point.len() != set.arity {
            return Err(LogicError::Arity(format!(
                "point length {} does not match arity {}",
                point.len(),
                set.arity
            )));
        }
        let mut env = BTreeMap::new();
        for (i, e) in point.iter().enumerate() {
            match e {
                Element::Fin(s) => env.insert(i + 1, s.clone()),
                other => {
                    return Err(LogicError::Sort(format!(
                        "finite evaluation at non-finite element {other:?}"
                    )))
                }
            };
        }
        self.eval_env(&set.sig, &set.phi, &mut env)
    }

    /// All points of the set in lexicographic universe order.
    pub fn enumerate(&self, set: &DefinableSet) -> Result<Vec<Point>, LogicError> {
        let mut out = Vec::new();
        self.scan(set, &mut |p| {
            out.push(p.to_vec());
            true
        })?;
        Ok(out)
    }

    /// Drives a visitor over the set's points in lexicographic order until
    /// the visitor returns `false`.
    fn scan(
        &self,
        set: &DefinableSet,
        visit: &mut dyn FnMut(&[Element]) -> bool,
    ) -> Result<(), LogicError> {
        if set.sig.theory != Theory::Finite {
            return Err(LogicError::Sort("enumeration needs a finite theory".into()));
        }
        let n = set.arity;
        let k = self.universe.len();
        let mut idx = vec![0usize; n];
        let mut env: BTreeMap<Var, String> = (1..=n)
            .map(|v| (v, self.universe[0].clone()))
            .collect();
        loop {
            if self.eval_env(&set.sig, &set.phi, &mut env)? {
                let point: Point = (1..=n)
                    .map(|v| Element::Fin(env[&v].clone()))
                    .collect();
                if !visit(&point) {
                    return Ok(());
                }
            }
            // advance the odometer, least significant coordinate last
            let mut pos = n;
            loop {
                if pos == 0 {
                    return Ok(());
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < k {
                    env.insert(pos + 1, self.universe[idx[pos]].clone());
                    break;
                }
                idx[pos] = 0;
                env.insert(pos + 1, self.universe[0].clone());
            }
        }
    }
}

/// The counting measure: the number of points of a definable set.  This is
/// the brute-force reference value, defined for every definable set, not
/// just subsets of powers of the base sort.
pub fn counting_measure(structure: &FiniteStructure, set: &DefinableSet) -> Result<BigUint, LogicError> {
    let mut n = 0u64;
    structure.scan(set, &mut |_| {
        n += 1;
        true
    })?;
    Ok(BigUint::from(n))
}

impl ModelOps for FiniteStructure {
    fn theory(&self) -> Theory {
        Theory::Finite
    }

    fn decide(&self, sig: &Signature, sentence: &Formula) -> Result<bool, LogicError> {
        self.eval_env(sig, sentence, &mut BTreeMap::new())
    }

    fn find_point(&self, set: &DefinableSet) -> Result<Option<Point>, LogicError> {
        let mut found = None;
        self.scan(set, &mut |p| {
            found = Some(p.to_vec());
            false
        })?;
        Ok(found)
    }
}

// ---------------------------------------------------------------------------
// Pure sets
// ---------------------------------------------------------------------------

/// Largest number of conjuncts tolerated while normalising; mirrors the
/// semilinear limit.
const DNF_LIMIT: usize = 200_000;

/// One equality literal: `positive` means `s = t`, otherwise `s ≠ t`.
type EqLiteral = (bool, SimpleTerm, SimpleTerm);

/// Quantifier elimination over an infinite pure set.  An existential is
/// resolved per disjunct: a positive equation on the variable substitutes it
/// away; failing that, the finitely many disequalities on it are dropped,
/// because an infinite set always has an element avoiding them.
pub fn pure_qe(sig: &Signature, phi: &Formula) -> Result<Formula, LogicError> {
    if sig.theory != Theory::PureSet {
        return Err(LogicError::Sort(
            "pure-set elimination requires the pure-set theory".into(),
        ));
    }
    pure_qe_inner(sig, phi)
}

fn pure_qe_inner(sig: &Signature, phi: &Formula) -> Result<Formula, LogicError> {
    match phi {
        Formula::True => Ok(Formula::True),
        Formula::False => Ok(Formula::False),
        Formula::Atom(Atom::InBase(_)) => Ok(Formula::True),
        Formula::Atom(Atom::Eq(s, t)) => Ok(normalize_eq(sig, s.clone(), t.clone())),
        Formula::Atom(_) => Err(LogicError::Sort(
            "only equality atoms belong to the pure-set theory".into(),
        )),
        Formula::Not(x) => Ok(Formula::not(pure_qe_inner(sig, x)?)),
        Formula::And(a, b) => Ok(Formula::and(
            pure_qe_inner(sig, a)?,
            pure_qe_inner(sig, b)?,
        )),
        Formula::Or(a, b) => Ok(Formula::or(
            pure_qe_inner(sig, a)?,
            pure_qe_inner(sig, b)?,
        )),
        Formula::Exists(v, x) => {
            let body = pure_qe_inner(sig, x)?;
            pure_exists(sig, *v, &body)
        }
        Formula::Forall(v, x) => {
            let body = pure_qe_inner(sig, x)?;
            Ok(Formula::not(pure_exists(sig, *v, &Formula::not(body))?))
        }
    }
}

fn pure_exists(sig: &Signature, v: Var, body: &Formula) -> Result<Formula, LogicError> {
    if !body.free_vars().contains(&v) {
        return Ok(body.clone());
    }
    let conjuncts = dnf_eq(body, false)?;
    Ok(Formula::disjoin_all(
        conjuncts.into_iter().map(|c| pure_elim_conjunct(sig, v, c)),
    ))
}

fn dnf_eq(phi: &Formula, negated: bool) -> Result<Vec<Vec<EqLiteral>>, LogicError> {
    let out = match (phi, negated) {
        (Formula::True, false) | (Formula::False, true) => vec![vec![]],
        (Formula::True, true) | (Formula::False, false) => vec![],
        (Formula::Atom(Atom::InBase(_)), false) => vec![vec![]],
        (Formula::Atom(Atom::InBase(_)), true) => vec![],
        (Formula::Atom(Atom::Eq(s, t)), n) => vec![vec![(!n, s.clone(), t.clone())]],
        (Formula::Atom(_), _) => {
            return Err(LogicError::Sort(
                "only equality atoms belong to the pure-set theory".into(),
            ))
        }
        (Formula::Not(x), n) => dnf_eq(x, !n)?,
        (Formula::And(a, b), false) | (Formula::Or(a, b), true) => {
            let left = dnf_eq(a, negated)?;
            let right = dnf_eq(b, negated)?;
            if left.len().saturating_mul(right.len()) > DNF_LIMIT {
                return Err(LogicError::Sort("formula too large to eliminate".into()));
            }
            let mut out = Vec::with_capacity(left.len() * right.len());
            for l in &left {
                for r in &right {
                    let mut c = l.clone();
                    c.extend(r.iter().cloned());
                    out.push(c);
                }
            }
            out
        }
        (Formula::Or(a, b), false) | (Formula::And(a, b), true) => {
            let mut out = dnf_eq(a, negated)?;
            out.extend(dnf_eq(b, negated)?);
            out
        }
        (Formula::Exists(..), _) | (Formula::Forall(..), _) => {
            unreachable!("inner quantifiers are eliminated first")
        }
    };
    Ok(out)
}

fn literal_formula(sig: &Signature, l: &EqLiteral) -> Formula {
    let eq = normalize_eq(sig, l.1.clone(), l.2.clone());
    if l.0 {
        eq
    } else {
        Formula::not(eq)
    }
}

fn mentions(term: &SimpleTerm, v: Var) -> bool {
    *term == SimpleTerm::Var(v)
}

fn pure_elim_conjunct(sig: &Signature, v: Var, literals: Vec<EqLiteral>) -> Formula {
    let mut rest = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (sign, s, t) in literals {
        let (sv, tv) = (mentions(&s, v), mentions(&t, v));
        if !sv && !tv {
            rest.push((sign, s, t));
            continue;
        }
        if sv && tv {
            // v = v is vacuous, v ≠ v kills the conjunct
            if !sign {
                return Formula::False;
            }
            continue;
        }
        let other = if sv { t } else { s };
        if sign {
            pos.push(other);
        } else {
            neg.push(other);
        }
    }
    if let Some(t) = pos.first() {
        // pinning equation: substitute t for v throughout the conjunct
        let mut out = Formula::conjoin_all(rest.iter().map(|l| literal_formula(sig, l)));
        for other in pos.iter().skip(1) {
            out = Formula::and(
                out,
                literal_formula(sig, &(true, t.clone(), other.clone())),
            );
        }
        for other in &neg {
            out = Formula::and(
                out,
                literal_formula(sig, &(false, t.clone(), other.clone())),
            );
        }
        out
    } else {
        // only disequalities constrain v: an infinite set evades them all
        Formula::conjoin_all(rest.iter().map(|l| literal_formula(sig, l)))
    }
}

/// Evaluates a quantifier-free pure-set formula with variables resolved to
/// element ids (named constants carry their own ids; anything larger is a
/// fresh element).
fn eval_pure_qf(
    sig: &Signature,
    phi: &Formula,
    env: &BTreeMap<Var, usize>,
) -> Result<bool, LogicError> {
    let resolve = |t: &SimpleTerm| -> Result<usize, LogicError> {
        match t {
            SimpleTerm::Var(v) => env
                .get(v)
                .copied()
                .ok_or_else(|| LogicError::Arity(format!("no value for x{v}"))),
            SimpleTerm::Const(idx) => match sig.const_value(*idx) {
                Some(ConstValue::Sym(id)) => Ok(*id),
                // beyond the named constants the index is the element id
                None => Ok(*idx),
                _ => Err(LogicError::Sort("constant is not a pure-set element".into())),
            },
        }
    };
    match phi {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Not(x) => Ok(!eval_pure_qf(sig, x, env)?),
        Formula::And(a, b) => Ok(eval_pure_qf(sig, a, env)? && eval_pure_qf(sig, b, env)?),
        Formula::Or(a, b) => Ok(eval_pure_qf(sig, a, env)? || eval_pure_qf(sig, b, env)?),
        Formula::Atom(Atom::Eq(s, t)) => Ok(resolve(s)? == resolve(t)?),
        Formula::Atom(Atom::InBase(_)) => Ok(true),
        Formula::Atom(_) => Err(LogicError::Sort(
            "only equality atoms belong to the pure-set theory".into(),
        )),
        Formula::Exists(..) | Formula::Forall(..) => Err(LogicError::Sort(
            "pure-set evaluation expects a quantifier-free formula".into(),
        )),
    }
}

/// The pure-set backend as a decision provider.
#[derive(Debug, Clone, Copy, Default)]
pub struct PureSetOps;

impl ModelOps for PureSetOps {
    fn theory(&self) -> Theory {
        Theory::PureSet
    }

    fn decide(&self, sig: &Signature, sentence: &Formula) -> Result<bool, LogicError> {
        let q = pure_qe(sig, sentence)?;
        eval_pure_qf(sig, &q, &BTreeMap::new())
    }

    fn find_point(&self, set: &DefinableSet) -> Result<Option<Point>, LogicError> {
        // a nonempty pure-set definable set of arity n has a point whose
        // coordinates are named constants or at most n fresh elements; scan
        // that pool lexicographically, named constants first
        let phi = pure_qe(&set.sig, &set.phi)?;
        let named: Vec<usize> = sym_ids(&set.sig);
        let fresh_base = set.sig.sym_count();
        let pool: Vec<usize> = named
            .into_iter()
            .chain((0..set.arity).map(|i| fresh_base + i))
            .collect();
        let n = set.arity;
        if n == 0 {
            return Ok(if eval_pure_qf(&set.sig, &phi, &BTreeMap::new())? {
                Some(vec![])
            } else {
                None
            });
        }
        let k = pool.len();
        let mut idx = vec![0usize; n];
        loop {
            let env: BTreeMap<Var, usize> =
                (1..=n).map(|v| (v, pool[idx[v - 1]])).collect();
            if eval_pure_qf(&set.sig, &phi, &env)? {
                return Ok(Some((1..=n).map(|v| Element::Sym(env[&v])).collect()));
            }
            let mut pos = n;
            loop {
                if pos == 0 {
                    return Ok(None);
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < k {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

fn sym_ids(sig: &Signature) -> Vec<usize> {
    (0..sig.const_count())
        .filter_map(|i| match sig.const_value(i) {
            Some(ConstValue::Sym(id)) => Some(*id),
            _ => None,
        })
        .collect()
}

fn const_index_of_sym(sig: &Signature, id: usize) -> Option<usize> {
    (0..sig.const_count()).find(|&i| sig.const_value(i) == Some(&ConstValue::Sym(id)))
}

// ---------------------------------------------------------------------------
// Diagrams: the equality types of a tuple
// ---------------------------------------------------------------------------

/// How one coordinate of a diagram is pinned: to a named constant (by
/// constant index) or to an anonymous class of mutually equal fresh
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagramSlot {
    Named(usize),
    Class(usize),
}

/// A complete equality type over the named constants: which coordinates are
/// constants, which are fresh, and which fresh coordinates coincide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagram {
    pub slots: Vec<DiagramSlot>,
}

impl Diagram {
    /// The defining formula of the diagram as a subset of `M^arity`.
    pub fn formula(&self, sig: &Signature) -> Formula {
        let named = sym_ids(sig);
        let mut parts = Vec::new();
        let mut class_rep: BTreeMap<usize, Var> = BTreeMap::new();
        for (i, slot) in self.slots.iter().enumerate() {
            let xi = SimpleTerm::Var(i + 1);
            match slot {
                DiagramSlot::Named(cidx) => {
                    parts.push(normalize_eq(sig, xi, SimpleTerm::Const(*cidx)));
                }
                DiagramSlot::Class(k) => match class_rep.get(k) {
                    Some(&rep) => {
                        parts.push(normalize_eq(sig, xi, SimpleTerm::Var(rep)));
                    }
                    None => {
                        class_rep.insert(*k, i + 1);
                        for id in &named {
                            if let Some(cidx) = const_index_of_sym(sig, *id) {
                                parts.push(Formula::not(normalize_eq(
                                    sig,
                                    xi.clone(),
                                    SimpleTerm::Const(cidx),
                                )));
                            }
                        }
                    }
                },
            }
        }
        let reps: Vec<Var> = class_rep.values().copied().collect();
        for (a, &ra) in reps.iter().enumerate() {
            for &rb in &reps[a + 1..] {
                parts.push(Formula::not(normalize_eq(
                    sig,
                    SimpleTerm::Var(ra),
                    SimpleTerm::Var(rb),
                )));
            }
        }
        Formula::conjoin_all(parts)
    }

    /// A representative point: constants stand for themselves, classes are
    /// realised by distinct fresh elements.
    pub fn point(&self, sig: &Signature) -> Point {
        let fresh_base = sig.sym_count();
        self.slots
            .iter()
            .map(|slot| match slot {
                DiagramSlot::Named(cidx) => match sig.const_value(*cidx) {
                    Some(ConstValue::Sym(id)) => Element::Sym(*id),
                    _ => unreachable!("diagram slots name pure-set constants"),
                },
                DiagramSlot::Class(k) => Element::Sym(fresh_base + k),
            })
            .collect()
    }
}

/// All consistent diagrams of the given arity, in a canonical order: slots
/// choose a named constant or join a class, classes numbered by first use.
/// The diagrams partition `M^arity`.
pub fn diagrams(sig: &Signature, arity: usize) -> Vec<Diagram> {
    let named: Vec<usize> = sym_ids(sig)
        .into_iter()
        .filter_map(|id| const_index_of_sym(sig, id))
        .collect();
    let mut out = Vec::new();
    let mut slots = Vec::with_capacity(arity);
    fill_slots(&named, arity, &mut slots, 0, &mut out);
    out
}

fn fill_slots(
    named: &[usize],
    arity: usize,
    slots: &mut Vec<DiagramSlot>,
    classes: usize,
    out: &mut Vec<Diagram>,
) {
    if slots.len() == arity {
        out.push(Diagram {
            slots: slots.clone(),
        });
        return;
    }
    for cidx in named {
        slots.push(DiagramSlot::Named(*cidx));
        fill_slots(named, arity, slots, classes, out);
        slots.pop();
    }
    for k in 0..=classes {
        slots.push(DiagramSlot::Class(k));
        fill_slots(named, arity, slots, classes.max(k + 1), out);
        slots.pop();
    }
}

// ---------------------------------------------------------------------------
// Morley rank
// ---------------------------------------------------------------------------

/// Morley rank of a pure-set definable set; `None` is the rank of the empty
/// set.  In one variable a definable set is finite (rank 0) or cofinite
/// (rank 1); in more variables the set is fibered along its last coordinate
/// and the rank is the maximum of fiber rank plus base rank.
pub fn morley_rank(set: &DefinableSet) -> Result<Option<usize>, LogicError> {
    if set.sig.theory != Theory::PureSet {
        return Err(LogicError::Sort("Morley rank needs the pure-set theory".into()));
    }
    let ops = PureSetOps;
    if crate::logic::is_empty(&ops, set)? {
        return Ok(None);
    }
    let n = set.arity;
    if n == 0 {
        return Ok(Some(0));
    }
    // does the set meet a "generic" last coordinate: one avoiding every
    // named constant and every other coordinate of the point?
    let mut generic = set.phi.clone();
    for id in sym_ids(&set.sig) {
        if let Some(cidx) = const_index_of_sym(&set.sig, id) {
            generic = Formula::and(
                generic,
                Formula::not(normalize_eq(
                    &set.sig,
                    SimpleTerm::Var(n),
                    SimpleTerm::Const(cidx),
                )),
            );
        }
    }
    for i in 1..n {
        generic = Formula::and(
            generic,
            Formula::not(normalize_eq(
                &set.sig,
                SimpleTerm::Var(n),
                SimpleTerm::Var(i),
            )),
        );
    }
    if n == 1 {
        let cofinite = DefinableSet::new(set.sig.clone(), 1, generic)?;
        return Ok(Some(if !crate::logic::is_empty(&ops, &cofinite)? {
            1
        } else {
            0
        }));
    }
    let infinite_fibers =
        DefinableSet::new(set.sig.clone(), n - 1, Formula::exists(n, generic))?;
    let image = set.project_onto_prefix(n - 1);
    let finite_fibers = image.minus(&infinite_fibers)?;
    let mut best: Option<usize> = None;
    if let Some(r) = morley_rank(&infinite_fibers)? {
        best = Some(r + 1);
    }
    if let Some(r) = morley_rank(&finite_fibers)? {
        best = Some(best.map_or(r, |b| b.max(r)));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse;

    fn small_graph() -> FiniteStructure {
        FiniteStructure::new(
            vec!["a".into(), "b".into(), "m".into()],
            vec!["a".into(), "b".into()],
            "a".into(),
            "b".into(),
            BTreeMap::from([(
                "edge".into(),
                BTreeSet::from([
                    vec!["a".into(), "b".into()],
                    vec!["b".into(), "m".into()],
                ]),
            )]),
        )
        .unwrap()
    }

    #[test]
    fn structure_json_round_trip() {
        let s = small_graph();
        let text = serde_json::to_string(&s).unwrap();
        let back = FiniteStructure::from_json(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn structure_validation_rejects_breakage() {
        let err = |r: Result<FiniteStructure, DiscreteError>| r.unwrap_err().to_string();
        assert!(err(FiniteStructure::new(
            vec!["a".into(), "a".into()],
            vec!["a".into()],
            "a".into(),
            "a".into(),
            BTreeMap::new(),
        ))
        .contains("duplicate element"));
        assert!(err(FiniteStructure::new(
            vec!["a".into(), "b".into()],
            vec!["a".into()],
            "a".into(),
            "b".into(),
            BTreeMap::new(),
        ))
        .contains("at least two"));
        assert!(err(FiniteStructure::new(
            vec!["a".into(), "b".into()],
            vec!["a".into(), "b".into()],
            "a".into(),
            "b".into(),
            BTreeMap::from([(
                "edge".into(),
                BTreeSet::from([vec!["a".into()], vec!["a".into(), "b".into()]]),
            )]),
        ))
        .contains("mixes tuple lengths"));
        assert!(err(FiniteStructure::new(
            vec!["a".into(), "x2".into()],
            vec!["a".into(), "x2".into()],
            "a".into(),
            "x2".into(),
            BTreeMap::new(),
        ))
        .contains("unusable element name"));
    }

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let s = small_graph();
        let sig = s.signature();
        let set = DefinableSet::parse(&sig, 2, "edge(x,y)").unwrap();
        let pts = s.enumerate(&set).unwrap();
        assert_eq!(
            pts,
            vec![
                vec![Element::Fin("a".into()), Element::Fin("b".into())],
                vec![Element::Fin("b".into()), Element::Fin("m".into())],
            ]
        );
        let full = DefinableSet::full(sig.clone(), 2);
        assert_eq!(counting_measure(&s, &full).unwrap(), BigUint::from(9u32));
        let base2 = DefinableSet::parse(&sig, 2, "base(x) & base(y)").unwrap();
        assert_eq!(counting_measure(&s, &base2).unwrap(), BigUint::from(4u32));
    }

    #[test]
    fn finite_quantifiers_sweep_the_universe() {
        let s = small_graph();
        let sig = s.signature();
        // some vertex reaches m in one step
        assert!(s.decide(&sig, &parse(&sig, "E x edge(x,m)").unwrap()).unwrap());
        // not every vertex has an outgoing edge
        assert!(!s
            .decide(&sig, &parse(&sig, "A x (E y edge(x,y))").unwrap())
            .unwrap());
        let set = DefinableSet::parse(&sig, 1, "E y edge(x,y)").unwrap();
        let p = s.find_point(&set).unwrap().unwrap();
        assert_eq!(p, vec![Element::Fin("a".into())]);
    }

    #[test]
    fn pure_qe_substitutes_or_drops() {
        let sig = Signature::pure_set(&[]);
        // an infinite set evades finitely many disequalities
        let phi = parse(&sig, "E y (!(y = x) & !(y = c0))").unwrap();
        assert_eq!(pure_qe(&sig, &phi).unwrap(), Formula::True);
        // a pinned variable is substituted
        let phi = parse(&sig, "E y (y = x & y = c0)").unwrap();
        let q = pure_qe(&sig, &phi).unwrap();
        assert_eq!(q, parse(&sig, "x = c0").unwrap());
        // contradiction collapses
        let phi = parse(&sig, "E y (y = x & !(y = x))").unwrap();
        assert_eq!(pure_qe(&sig, &phi).unwrap(), Formula::False);
        // universal over an infinite set
        let phi = parse(&sig, "A y (y = c0 | !(y = c1))").unwrap();
        let ops = PureSetOps;
        assert!(!ops.decide(&sig, &phi).unwrap());
    }

    #[test]
    fn pure_find_point_prefers_constants() {
        let sig = Signature::pure_set(&[]);
        let ops = PureSetOps;
        let s = DefinableSet::parse(&sig, 1, "!(x = c0)").unwrap();
        assert_eq!(ops.find_point(&s).unwrap().unwrap(), vec![Element::Sym(1)]);
        let s = DefinableSet::parse(&sig, 2, "!(x = y) & !(x = c0) & !(x = c1)").unwrap();
        let p = ops.find_point(&s).unwrap().unwrap();
        assert_eq!(p, vec![Element::Sym(2), Element::Sym(0)]);
        let s = DefinableSet::parse(&sig, 1, "!(x = x)").unwrap();
        assert!(ops.find_point(&s).unwrap().is_none());
    }

    #[test]
    fn diagram_census_and_partition() {
        let sig = Signature::pure_set(&[]);
        // arity 1: c0, c1 or fresh
        assert_eq!(diagrams(&sig, 1).len(), 3);
        // arity 2: 3 choices over a constant first slot, 4 over a fresh one
        let ds = diagrams(&sig, 2);
        assert_eq!(ds.len(), 10);
        let ops = PureSetOps;
        // pairwise disjoint and jointly exhaustive
        let mut union = Formula::False;
        for d in &ds {
            union = Formula::or(union, d.formula(&sig));
        }
        let union_set = DefinableSet::new(sig.clone(), 2, union).unwrap();
        let full = DefinableSet::full(sig.clone(), 2);
        assert!(crate::logic::sets_equivalent(&ops, &union_set, &full).unwrap());
        for (i, a) in ds.iter().enumerate() {
            for b in &ds[i + 1..] {
                let both = DefinableSet::new(
                    sig.clone(),
                    2,
                    Formula::and(a.formula(&sig), b.formula(&sig)),
                )
                .unwrap();
                assert!(crate::logic::is_empty(&ops, &both).unwrap());
            }
        }
        // each representative point lies in its own diagram
        for d in &ds {
            let pt = d.point(&sig);
            let env: BTreeMap<Var, usize> = pt
                .iter()
                .enumerate()
                .map(|(i, e)| match e {
                    Element::Sym(id) => (i + 1, *id),
                    _ => unreachable!(),
                })
                .collect();
            assert!(eval_pure_qf(&sig, &d.formula(&sig), &env).unwrap());
        }
    }

    #[test]
    fn morley_rank_counts_free_coordinates() {
        let sig = Signature::pure_set(&[]);
        let rank = |arity, text: &str| {
            morley_rank(&DefinableSet::parse(&sig, arity, text).unwrap()).unwrap()
        };
        assert_eq!(rank(1, "false"), None);
        assert_eq!(rank(1, "x = c0"), Some(0));
        assert_eq!(rank(1, "!(x = c0)"), Some(1));
        assert_eq!(rank(2, "true"), Some(2));
        assert_eq!(rank(2, "x = y"), Some(1));
        assert_eq!(rank(2, "x = c0 & !(y = c1)"), Some(1));
        assert_eq!(rank(2, "!(x = y)"), Some(2));
        assert_eq!(rank(3, "x = y & y = z"), Some(1));
        assert_eq!(rank(3, "x = c0 | (y = c1 & z = y)"), Some(2));
        assert_eq!(rank(0, "true"), Some(0));
        let empty2 = DefinableSet::empty(sig.clone(), 2);
        assert_eq!(morley_rank(&empty2).unwrap(), None);
    }
}
