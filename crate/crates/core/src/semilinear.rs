//! The semilinear backend: an ordered vector space over the rationals.
//!
//! The reference model is `ℚ` with the usual order; every formula is decided
//! relative to the complete theory of ordered rational vector spaces, so the
//! answers are model-independent.  Two independent decision routes are
//! provided:
//!
//! * [`qe`] — quantifier elimination by iterated Fourier–Motzkin projection,
//!   innermost quantifier first.  This is the route the engine uses.
//! * [`lw_qe`] — elimination by Loos–Weispfenning virtual substitution of
//!   test points (`-∞`, exact bounds, `t + ε`).  This route exists to check
//!   the first one and is only consulted by [`sample_equiv`] and the oracle
//!   suites.
//!
//! [`decompose`] builds a cylindrical cell decomposition: coordinates are
//! processed last-to-first, each cell is a point or an open interval over a
//! cell of the previous coordinates, and every cell is decorated with an
//! exact rational sample point.  The Euler characteristic is the alternating
//! cell count `Σ (-1)^dim(cell)` and the dimension is the maximal cell
//! dimension; both are invariants of the set, not of the chosen ordering,
//! which the test suites exercise by decomposing along the reversed
//! coordinate order (permute the coordinates, decompose again, compare).

use crate::logic::{
    Atom, DefinableSet, Element, Formula, LinComb, LinRel, LinearAtom, LogicError, ModelOps,
    Point, Signature, Theory, Var,
};
use num::rational::BigRational;
use num::{BigInt, One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Largest number of conjuncts a disjunctive normal form may reach during
/// elimination before we give up; keeps runaway inputs from looping forever.
const DNF_LIMIT: usize = 200_000;

// ---------------------------------------------------------------------------
// Ground evaluation
// ---------------------------------------------------------------------------

/// Evaluates a quantifier-free formula at a rational point (`env[i]` is the
/// value of `x_{i+1}`).
pub fn eval_qf(phi: &Formula, env: &[BigRational]) -> Result<bool, LogicError> {
    match phi {
        Formula::True => Ok(true),
        Formula::False => Ok(false),
        Formula::Not(x) => Ok(!eval_qf(x, env)?),
        Formula::And(a, b) => Ok(eval_qf(a, env)? && eval_qf(b, env)?),
        Formula::Or(a, b) => Ok(eval_qf(a, env)? || eval_qf(b, env)?),
        Formula::Exists(..) | Formula::Forall(..) => Err(LogicError::Sort(
            "eval_qf expects a quantifier-free formula".into(),
        )),
        Formula::Atom(Atom::InBase(_)) => Ok(true),
        Formula::Atom(Atom::Lin(a)) => {
            if let Some(&v) = a.lhs.coeffs.keys().find(|&&v| v > env.len()) {
                return Err(LogicError::Arity(format!("no value for x{v}")));
            }
            let val = a.lhs.eval(&|v: Var| env[v - 1].clone());
            Ok(match a.rel {
                LinRel::Lt => val.is_negative(),
                LinRel::Eq => val.is_zero(),
            })
        }
        Formula::Atom(_) => Err(LogicError::Sort(
            "equality/relation atoms do not belong to the ordered theory".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Fourier–Motzkin elimination
// ---------------------------------------------------------------------------

/// Quantifier elimination over ordered rational vector spaces.  The result
/// is quantifier-free and equivalent to the input in every model.
pub fn qe(sig: &Signature, phi: &Formula) -> Result<Formula, LogicError> {
    if sig.theory != Theory::OrderedQvs {
        return Err(LogicError::Sort(
            "semilinear elimination requires the ordered theory".into(),
        ));
    }
    qe_inner(phi)
}

fn qe_inner(phi: &Formula) -> Result<Formula, LogicError> {
    match phi {
        Formula::True => Ok(Formula::True),
        Formula::False => Ok(Formula::False),
        Formula::Atom(Atom::InBase(_)) => Ok(Formula::True),
        Formula::Atom(Atom::Lin(_)) => Ok(phi.clone()),
        Formula::Atom(_) => Err(LogicError::Sort(
            "equality/relation atoms do not belong to the ordered theory".into(),
        )),
        Formula::Not(x) => Ok(Formula::not(qe_inner(x)?)),
        Formula::And(a, b) => Ok(Formula::and(qe_inner(a)?, qe_inner(b)?)),
        Formula::Or(a, b) => Ok(Formula::or(qe_inner(a)?, qe_inner(b)?)),
        Formula::Exists(v, x) => {
            let body = qe_inner(x)?;
            exists_qf(*v, &body)
        }
        Formula::Forall(v, x) => {
            let body = qe_inner(x)?;
            Ok(Formula::not(exists_qf(*v, &Formula::not(body))?))
        }
    }
}

/// Eliminates `∃v` from a quantifier-free body.  The result is minimized
/// before it is returned: elimination otherwise snowballs, because each
/// negation re-expands the previous stage's disjunction.
fn exists_qf(v: Var, body: &Formula) -> Result<Formula, LogicError> {
    if !body.free_vars().contains(&v) {
        return Ok(body.clone());
    }
    let conjuncts = minimize(dnf(body, false)?);
    let eliminated = Formula::disjoin_all(conjuncts.into_iter().map(|c| elim_conjunct(v, c)));
    Ok(rebuild(minimize(dnf(&eliminated, false)?)))
}

/// Disjunctive normal form as a list of atom conjunctions; `negated` tracks
/// parity while pushing negations to the leaves, where they expand by
/// density: `¬(l < 0)` is `-l < 0 ∨ l = 0` and `¬(l = 0)` is `l < 0 ∨ -l < 0`.
fn dnf(phi: &Formula, negated: bool) -> Result<Vec<Vec<LinearAtom>>, LogicError> {
    let out = match (phi, negated) {
        (Formula::True, false) | (Formula::False, true) => vec![vec![]],
        (Formula::True, true) | (Formula::False, false) => vec![],
        (Formula::Atom(Atom::InBase(_)), false) => vec![vec![]],
        (Formula::Atom(Atom::InBase(_)), true) => vec![],
        (Formula::Atom(Atom::Lin(a)), false) => vec![vec![a.clone()]],
        (Formula::Atom(Atom::Lin(a)), true) => match a.rel {
            LinRel::Lt => vec![
                vec![linear_atom(a.lhs.scale(&-BigRational::one()), LinRel::Lt)],
                vec![linear_atom(a.lhs.clone(), LinRel::Eq)],
            ],
            LinRel::Eq => vec![
                vec![linear_atom(a.lhs.clone(), LinRel::Lt)],
                vec![linear_atom(a.lhs.scale(&-BigRational::one()), LinRel::Lt)],
            ],
        },
        (Formula::Atom(_), _) => {
            return Err(LogicError::Sort(
                "equality/relation atoms do not belong to the ordered theory".into(),
            ))
        }
        (Formula::Not(x), n) => dnf(x, !n)?,
        (Formula::And(a, b), false) | (Formula::Or(a, b), true) => {
            let left = dnf(a, negated)?;
            let right = dnf(b, negated)?;
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
            let mut out = dnf(a, negated)?;
            out.extend(dnf(b, negated)?);
            out
        }
        (Formula::Exists(..), _) | (Formula::Forall(..), _) => {
            unreachable!("inner quantifiers are eliminated first")
        }
    };
    Ok(out)
}

/// Rebuilds a linear atom whose left-hand side is known to be non-constant.
fn linear_atom(lhs: LinComb, rel: LinRel) -> LinearAtom {
    match LinearAtom::formula(lhs, rel) {
        Formula::Atom(Atom::Lin(a)) => a,
        other => unreachable!("non-constant lhs cannot fold to {other:?}"),
    }
}

/// `∃v ⋀atoms` for a single conjunct, by substitution through an equation
/// when one mentions `v`, otherwise by pairing lower and upper bounds
/// (density: a nonempty open interval needs exactly `lo < hi`).
fn elim_conjunct(v: Var, atoms: Vec<LinearAtom>) -> Formula {
    let (with_v, without): (Vec<_>, Vec<_>) = atoms
        .into_iter()
        .partition(|a| a.lhs.coeffs.contains_key(&v));
    let passthrough = Formula::conjoin_all(
        without
            .into_iter()
            .map(|a| Formula::Atom(Atom::Lin(a))),
    );
    if with_v.is_empty() {
        return passthrough;
    }
    if let Some(pos) = with_v.iter().position(|a| a.rel == LinRel::Eq) {
        // v = t: substitute into the remaining atoms of the conjunct
        let eq = &with_v[pos];
        let c = eq.lhs.coeffs[&v].clone();
        let rest = eq.lhs.add(&LinComb::var(v).scale(&-c.clone()));
        let t = rest.scale(&(-c.recip()));
        let mut out = passthrough;
        for (i, a) in with_v.iter().enumerate() {
            if i == pos {
                continue;
            }
            let d = a.lhs.coeffs[&v].clone();
            let lhs = a
                .lhs
                .add(&LinComb::var(v).scale(&-d.clone()))
                .add(&t.scale(&d));
            out = Formula::and(out, LinearAtom::formula(lhs, a.rel));
        }
        return out;
    }
    // only strict bounds remain: c·v + r < 0 is v < -r/c when c > 0 and
    // v > -r/c when c < 0
    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    for a in &with_v {
        let c = a.lhs.coeffs[&v].clone();
        let rest = a.lhs.add(&LinComb::var(v).scale(&-c.clone()));
        let bound = rest.scale(&(-c.recip()));
        if c.is_positive() {
            uppers.push(bound);
        } else {
            lowers.push(bound);
        }
    }
    let mut out = passthrough;
    for lo in &lowers {
        for hi in &uppers {
            out = Formula::and(out, LinearAtom::formula(lo.sub(hi), LinRel::Lt));
        }
    }
    out
}

/// Expression-count cap for semantic minimization; past it only the
/// syntactic pass runs, so elimination still terminates (or refuses via the
/// size limit) instead of stalling inside an enormous arrangement.
const MINIMIZE_EXPR_LIMIT: usize = 48;

/// A disjunction of atom conjunctions as a formula again.
fn rebuild(conjuncts: Vec<Vec<LinearAtom>>) -> Formula {
    Formula::disjoin_all(conjuncts.into_iter().map(|c| {
        Formula::conjoin_all(c.into_iter().map(|a| Formula::Atom(Atom::Lin(a))))
    }))
}

/// Does the atom hold at the sample point?
fn atom_holds(a: &LinearAtom, sample: &[BigRational]) -> bool {
    let val = a.lhs.eval(&|v: Var| sample[v - 1].clone());
    match a.rel {
        LinRel::Lt => val.is_negative(),
        LinRel::Eq => val.is_zero(),
    }
}

/// Minimizes a disjunction of atom conjunctions without changing its truth
/// set.  Syntactic passes fold constant atoms, deduplicate, and drop
/// infeasible or subsumed disjuncts; a semantic pass then arranges the
/// surviving distinct expressions once — one sample per sign class — and
/// greedily drops every disjunct, and every atom inside a kept disjunct,
/// whose removal the samples certify as harmless.  The certificate is exact
/// because every candidate region is a union of sign classes.
/// Exact satisfiability of one conjunction of linear atoms, by eliminating
/// every mentioned variable in turn.  Pure conjunctions never branch, so
/// this stays a single pass per variable; if an elimination nevertheless
/// overflows the size limit the conjunct is conservatively kept.
fn feasible(mut atoms: Vec<LinearAtom>) -> bool {
    while let Some(v) = atoms
        .iter()
        .flat_map(|a| a.lhs.coeffs.keys())
        .next()
        .copied()
    {
        match dnf(&elim_conjunct(v, atoms), false) {
            Ok(ds) => match ds.into_iter().next() {
                Some(c) => atoms = c,
                None => return false,
            },
            Err(_) => return true,
        }
    }
    true
}

fn minimize(raw: Vec<Vec<LinearAtom>>) -> Vec<Vec<LinearAtom>> {
    let mut conjuncts: Vec<BTreeSet<LinearAtom>> = Vec::new();
    'next: for c in raw {
        let mut atoms = BTreeSet::new();
        for a in c {
            match LinearAtom::formula(a.lhs, a.rel) {
                Formula::True => {}
                Formula::False => continue 'next,
                Formula::Atom(Atom::Lin(a)) => {
                    atoms.insert(a);
                }
                other => unreachable!("linear atom folded to {other:?}"),
            }
        }
        if atoms.is_empty() {
            // one empty conjunct is the whole space
            return vec![vec![]];
        }
        conjuncts.push(atoms);
    }
    conjuncts.sort();
    conjuncts.dedup();
    conjuncts.retain(|c| feasible(c.iter().cloned().collect()));
    // a conjunct strictly extending another is subsumed by it
    let subsumed: Vec<bool> = conjuncts
        .iter()
        .enumerate()
        .map(|(i, c)| {
            conjuncts
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && other.is_subset(c))
        })
        .collect();
    let mut keep_it = subsumed.iter().map(|s| !s);
    conjuncts.retain(|_| keep_it.next().unwrap());
    // compress the mentioned variables so the arrangement works in as few
    // dimensions as the disjunction actually spans
    let vars: Vec<Var> = conjuncts
        .iter()
        .flatten()
        .flat_map(|a| a.lhs.coeffs.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let down: BTreeMap<Var, Var> = vars.iter().enumerate().map(|(i, &v)| (v, i + 1)).collect();
    let compressed: Vec<Vec<LinearAtom>> = conjuncts
        .into_iter()
        .map(|c| {
            c.into_iter()
                .map(|a| LinearAtom {
                    lhs: a.lhs.map_vars(&|v| down[&v]),
                    rel: a.rel,
                })
                .collect()
        })
        .collect();
    let exprs: BTreeSet<LinComb> = compressed
        .iter()
        .flatten()
        .map(|a| canonical_expr(&a.lhs))
        .collect();
    if exprs.len() > MINIMIZE_EXPR_LIMIT {
        return compressed
            .into_iter()
            .map(|c| c.into_iter().map(|a| LinearAtom {
                lhs: a.lhs.map_vars(&|v| vars[v - 1]),
                rel: a.rel,
            }).collect())
            .collect();
    }
    let samples: Vec<Vec<BigRational>> = arrangement(&exprs, vars.len())
        .into_iter()
        .map(|c| c.sample)
        .collect();
    // each exact evaluation happens once: a truth row per distinct atom,
    // conjunct rows by intersection
    let atom_index: BTreeMap<&LinearAtom, usize> = compressed
        .iter()
        .flatten()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, a)| (a, i))
        .collect();
    let atom_truth: Vec<Vec<bool>> = atom_index
        .keys()
        .map(|a| samples.iter().map(|s| atom_holds(a, s)).collect())
        .collect();
    let row = |c: &[LinearAtom]| -> Vec<bool> {
        let mut out = vec![true; samples.len()];
        for a in c {
            for (slot, &b) in out.iter_mut().zip(&atom_truth[atom_index[a]]) {
                *slot &= b;
            }
        }
        out
    };
    let rows: Vec<Vec<bool>> = compressed.iter().map(|c| row(c)).collect();
    let mut total = vec![false; samples.len()];
    for r in &rows {
        for (slot, &b) in total.iter_mut().zip(r) {
            *slot |= b;
        }
    }
    // drop disjuncts already covered by the rest
    let mut suffix = vec![vec![false; samples.len()]; compressed.len() + 1];
    for i in (0..compressed.len()).rev() {
        suffix[i] = suffix[i + 1].clone();
        for (slot, &b) in suffix[i].iter_mut().zip(&rows[i]) {
            *slot |= b;
        }
    }
    let mut kept: Vec<Vec<LinearAtom>> = Vec::new();
    let mut covered_so_far = vec![false; samples.len()];
    for (i, c) in compressed.iter().enumerate() {
        let covered = rows[i]
            .iter()
            .enumerate()
            .all(|(k, &b)| !b || covered_so_far[k] || suffix[i + 1][k]);
        if !covered {
            for (slot, &b) in covered_so_far.iter_mut().zip(&rows[i]) {
                *slot |= b;
            }
            kept.push(c.clone());
        }
    }
    // drop atoms whose removal stays inside the original truth set
    for c in &mut kept {
        let mut i = 0;
        while i < c.len() {
            if c.len() == 1 {
                break;
            }
            let mut shorter = c.clone();
            shorter.remove(i);
            let r = row(&shorter);
            let safe = r.iter().zip(&total).all(|(&b, &t)| !b || t);
            if safe {
                *c = shorter;
            } else {
                i += 1;
            }
        }
    }
    kept.sort();
    kept.dedup();
    kept.into_iter()
        .map(|c| {
            c.into_iter()
                .map(|a| LinearAtom {
                    lhs: a.lhs.map_vars(&|v| vars[v - 1]),
                    rel: a.rel,
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Loos–Weispfenning virtual substitution (the checking route)
// ---------------------------------------------------------------------------

/// Test points for the virtual substitution of an eliminated variable.
enum TestPoint {
    NegInf,
    Exact(LinComb),
    JustAbove(LinComb),
}

/// Quantifier elimination by virtual substitution.  Independent of [`qe`]:
/// existentials are resolved by evaluating the matrix at `-∞`, at every
/// equational bound, and just above every lower bound.
pub fn lw_qe(phi: &Formula) -> Result<Formula, LogicError> {
    match phi {
        Formula::True | Formula::False | Formula::Atom(_) => Ok(phi.clone()),
        Formula::Not(x) => Ok(Formula::not(lw_qe(x)?)),
        Formula::And(a, b) => Ok(Formula::and(lw_qe(a)?, lw_qe(b)?)),
        Formula::Or(a, b) => Ok(Formula::or(lw_qe(a)?, lw_qe(b)?)),
        Formula::Exists(v, x) => {
            let body = lw_qe(x)?;
            lw_exists(*v, &body)
        }
        Formula::Forall(v, x) => {
            let body = lw_qe(x)?;
            Ok(Formula::not(lw_exists(*v, &Formula::not(body))?))
        }
    }
}

fn lw_exists(v: Var, body: &Formula) -> Result<Formula, LogicError> {
    if !body.free_vars().contains(&v) {
        return Ok(body.clone());
    }
    let matrix = positive_nnf(body, false)?;
    let mut points = vec![TestPoint::NegInf];
    collect_test_points(&matrix, v, &mut points);
    Ok(Formula::disjoin_all(
        points.iter().map(|tp| vsubst(&matrix, v, tp)),
    ))
}

/// Negation-free normal form: negations are expanded into the atoms.
fn positive_nnf(phi: &Formula, negated: bool) -> Result<Formula, LogicError> {
    Ok(match (phi, negated) {
        (Formula::True, false) | (Formula::False, true) => Formula::True,
        (Formula::True, true) | (Formula::False, false) => Formula::False,
        (Formula::Atom(Atom::InBase(_)), n) => {
            if n {
                Formula::False
            } else {
                Formula::True
            }
        }
        (Formula::Atom(Atom::Lin(a)), false) => Formula::Atom(Atom::Lin(a.clone())),
        (Formula::Atom(Atom::Lin(a)), true) => match a.rel {
            LinRel::Lt => Formula::or(
                LinearAtom::formula(a.lhs.scale(&-BigRational::one()), LinRel::Lt),
                LinearAtom::formula(a.lhs.clone(), LinRel::Eq),
            ),
            LinRel::Eq => Formula::or(
                LinearAtom::formula(a.lhs.clone(), LinRel::Lt),
                LinearAtom::formula(a.lhs.scale(&-BigRational::one()), LinRel::Lt),
            ),
        },
        (Formula::Atom(_), _) => {
            return Err(LogicError::Sort(
                "equality/relation atoms do not belong to the ordered theory".into(),
            ))
        }
        (Formula::Not(x), n) => positive_nnf(x, !n)?,
        (Formula::And(a, b), false) | (Formula::Or(a, b), true) => Formula::and(
            positive_nnf(a, negated)?,
            positive_nnf(b, negated)?,
        ),
        (Formula::Or(a, b), false) | (Formula::And(a, b), true) => Formula::or(
            positive_nnf(a, negated)?,
            positive_nnf(b, negated)?,
        ),
        (Formula::Exists(..), _) | (Formula::Forall(..), _) => {
            unreachable!("inner quantifiers are eliminated first")
        }
    })
}

fn collect_test_points(matrix: &Formula, v: Var, out: &mut Vec<TestPoint>) {
    match matrix {
        Formula::Atom(Atom::Lin(a)) => {
            if let Some(c) = a.lhs.coeffs.get(&v) {
                let rest = a.lhs.add(&LinComb::var(v).scale(&-c.clone()));
                let bound = rest.scale(&(-c.recip()));
                match a.rel {
                    LinRel::Eq => out.push(TestPoint::Exact(bound)),
                    LinRel::Lt if c.is_negative() => out.push(TestPoint::JustAbove(bound)),
                    LinRel::Lt => {}
                }
            }
        }
        Formula::And(a, b) | Formula::Or(a, b) => {
            collect_test_points(a, v, out);
            collect_test_points(b, v, out);
        }
        _ => {}
    }
}

/// Virtual substitution of a test point for `v` through a negation-free
/// matrix.
fn vsubst(matrix: &Formula, v: Var, tp: &TestPoint) -> Formula {
    match matrix {
        Formula::True => Formula::True,
        Formula::False => Formula::False,
        Formula::And(a, b) => Formula::and(vsubst(a, v, tp), vsubst(b, v, tp)),
        Formula::Or(a, b) => Formula::or(vsubst(a, v, tp), vsubst(b, v, tp)),
        Formula::Atom(Atom::Lin(a)) => {
            let c = match a.lhs.coeffs.get(&v) {
                None => return Formula::Atom(Atom::Lin(a.clone())),
                Some(c) => c.clone(),
            };
            let rest = a.lhs.add(&LinComb::var(v).scale(&-c.clone()));
            match tp {
                TestPoint::NegInf => match a.rel {
                    // c·(-∞) + r: the sign at -∞ is the sign of -c
                    LinRel::Lt => {
                        if c.is_positive() {
                            Formula::True
                        } else {
                            Formula::False
                        }
                    }
                    LinRel::Eq => Formula::False,
                },
                TestPoint::Exact(t) => {
                    let lhs = rest.add(&t.scale(&c));
                    LinearAtom::formula(lhs, a.rel)
                }
                TestPoint::JustAbove(t) => {
                    // value c·(t+ε) + r = s + c·ε with s = c·t + r
                    let s = rest.add(&t.scale(&c));
                    match a.rel {
                        LinRel::Eq => Formula::False,
                        LinRel::Lt => {
                            if c.is_negative() {
                                Formula::or(
                                    LinearAtom::formula(s.clone(), LinRel::Lt),
                                    LinearAtom::formula(s, LinRel::Eq),
                                )
                            } else {
                                LinearAtom::formula(s, LinRel::Lt)
                            }
                        }
                    }
                }
            }
        }
        other => unreachable!("matrix is negation-free and quantifier-free: {other:?}"),
    }
}

// ---------------------------------------------------------------------------
// Cylindrical cell decomposition
// ---------------------------------------------------------------------------

/// One coordinate of a cell: a point section `x_i = t` or an open sector
/// `a < x_i < b` (with `None` for an unbounded side).  Terms only mention
/// earlier coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoordPattern {
    Point(LinComb),
    Interval(Option<LinComb>, Option<LinComb>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub coords: Vec<CoordPattern>,
    pub sample: Vec<BigRational>,
}

impl Cell {
    /// Number of interval coordinates: the dimension of the cell.
    pub fn dim(&self) -> usize {
        self.coords
            .iter()
            .filter(|c| matches!(c, CoordPattern::Interval(..)))
            .count()
    }

    /// The cell as a quantifier-free formula.
    pub fn formula(&self) -> Formula {
        let mut out = Formula::True;
        for (i, c) in self.coords.iter().enumerate() {
            let xi = LinComb::var(i + 1);
            match c {
                CoordPattern::Point(t) => {
                    out = Formula::and(out, LinearAtom::formula(xi.sub(t), LinRel::Eq));
                }
                CoordPattern::Interval(lo, hi) => {
                    if let Some(lo) = lo {
                        out = Formula::and(out, LinearAtom::formula(lo.sub(&xi), LinRel::Lt));
                    }
                    if let Some(hi) = hi {
                        out = Formula::and(out, LinearAtom::formula(xi.sub(hi), LinRel::Lt));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellDecomposition {
    pub arity: usize,
    pub cells: Vec<Cell>,
}

impl CellDecomposition {
    /// Euler characteristic: the alternating cell count.
    pub fn euler(&self) -> BigInt {
        let mut acc = BigInt::zero();
        for c in &self.cells {
            if c.dim() % 2 == 0 {
                acc += 1;
            } else {
                acc -= 1;
            }
        }
        acc
    }

    /// Dimension: the maximal cell dimension, `None` for the empty set.
    pub fn dim(&self) -> Option<usize> {
        self.cells.iter().map(Cell::dim).max()
    }
}

/// Canonical representative of a linear expression up to positive scaling
/// and sign: integral coefficients, gcd 1, positive leading coefficient.
fn canonical_expr(l: &LinComb) -> LinComb {
    let mut denom_lcm = BigInt::one();
    for q in l.coeffs.values().chain([&l.constant]) {
        denom_lcm = num::integer::lcm(denom_lcm, q.denom().clone());
    }
    let mut scaled = l.scale(&BigRational::from(denom_lcm));
    let mut gcd = BigInt::zero();
    for q in scaled.coeffs.values().chain([&scaled.constant]) {
        gcd = num::integer::gcd(gcd, q.numer().clone());
    }
    if !gcd.is_zero() && !gcd.is_one() {
        scaled = scaled.scale(&BigRational::new(BigInt::one(), gcd));
    }
    if scaled
        .coeffs
        .values()
        .next()
        .map(|q| q.is_negative())
        .unwrap_or(false)
    {
        scaled = scaled.scale(&-BigRational::one());
    }
    scaled
}

fn collect_exprs(phi: &Formula, out: &mut BTreeSet<LinComb>) -> Result<(), LogicError> {
    match phi {
        Formula::True | Formula::False => Ok(()),
        Formula::Atom(Atom::Lin(a)) => {
            if !a.lhs.coeffs.is_empty() {
                out.insert(canonical_expr(&a.lhs));
            }
            Ok(())
        }
        Formula::Atom(Atom::InBase(_)) => Ok(()),
        Formula::Atom(_) => Err(LogicError::Sort(
            "equality/relation atoms do not belong to the ordered theory".into(),
        )),
        Formula::Not(x) => collect_exprs(x, out),
        Formula::And(a, b) | Formula::Or(a, b) => {
            collect_exprs(a, out)?;
            collect_exprs(b, out)
        }
        Formula::Exists(..) | Formula::Forall(..) => Err(LogicError::Sort(
            "decomposition expects a quantifier-free formula".into(),
        )),
    }
}

/// Cells of `M^n` on which every listed expression has constant sign.
fn arrangement(exprs: &BTreeSet<LinComb>, n: usize) -> Vec<Cell> {
    if n == 0 {
        return vec![Cell {
            coords: vec![],
            sample: vec![],
        }];
    }
    // expressions mentioning x_n turn into section terms; the rest, together
    // with pairwise differences of the section terms, shape the base
    let mut sections: BTreeSet<LinComb> = BTreeSet::new();
    let mut base_exprs: BTreeSet<LinComb> = BTreeSet::new();
    for e in exprs {
        match e.coeffs.get(&n) {
            Some(c) => {
                let rest = e.add(&LinComb::var(n).scale(&-c.clone()));
                sections.insert(rest.scale(&(-c.recip())));
            }
            None => {
                base_exprs.insert(e.clone());
            }
        }
    }
    let section_list: Vec<&LinComb> = sections.iter().collect();
    for (i, s) in section_list.iter().enumerate() {
        for t in &section_list[i + 1..] {
            let d = s.sub(t);
            if !d.coeffs.is_empty() {
                base_exprs.insert(canonical_expr(&d));
            }
        }
    }
    let base = arrangement(&base_exprs, n - 1);
    let mut out = Vec::new();
    for b in base {
        // order the section terms over this base cell by their exact values
        let mut valued: Vec<(BigRational, &LinComb)> = section_list
            .iter()
            .map(|t| {
                let val = t.eval(&|v: Var| b.sample[v - 1].clone());
                (val, *t)
            })
            .collect();
        valued.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        // group equal values, keep the first (canonical) representative
        let mut reps: Vec<(BigRational, &LinComb)> = Vec::new();
        for (val, t) in valued {
            match reps.last() {
                Some((last, _)) if *last == val => {}
                _ => reps.push((val, t)),
            }
        }
        let mut push = |pattern: CoordPattern, value: BigRational, b: &Cell| {
            let mut coords = b.coords.clone();
            coords.push(pattern);
            let mut sample = b.sample.clone();
            sample.push(value);
            out.push(Cell { coords, sample });
        };
        if reps.is_empty() {
            push(
                CoordPattern::Interval(None, None),
                BigRational::zero(),
                &b,
            );
            continue;
        }
        push(
            CoordPattern::Interval(None, Some(reps[0].1.clone())),
            &reps[0].0 - BigRational::one(),
            &b,
        );
        for i in 0..reps.len() {
            push(
                CoordPattern::Point(reps[i].1.clone()),
                reps[i].0.clone(),
                &b,
            );
            if i + 1 < reps.len() {
                push(
                    CoordPattern::Interval(
                        Some(reps[i].1.clone()),
                        Some(reps[i + 1].1.clone()),
                    ),
                    (&reps[i].0 + &reps[i + 1].0) / BigRational::from(BigInt::from(2)),
                    &b,
                );
            }
        }
        push(
            CoordPattern::Interval(Some(reps[reps.len() - 1].1.clone()), None),
            &reps[reps.len() - 1].0 + BigRational::one(),
            &b,
        );
    }
    out
}

/// Cylindrical cell decomposition of a definable set.  Quantifiers are
/// eliminated first, so any formula is accepted.
pub fn decompose(set: &DefinableSet) -> Result<CellDecomposition, LogicError> {
    let phi = if set.phi.is_quantifier_free() {
        set.phi.clone()
    } else {
        qe(&set.sig, &set.phi)?
    };
    let mut exprs = BTreeSet::new();
    collect_exprs(&phi, &mut exprs)?;
    let all = arrangement(&exprs, set.arity);
    let mut cells = Vec::new();
    for c in all {
        if eval_qf(&phi, &c.sample)? {
            cells.push(c);
        }
    }
    Ok(CellDecomposition {
        arity: set.arity,
        cells,
    })
}

/// Euler characteristic of a semilinear set.
pub fn euler(set: &DefinableSet) -> Result<BigInt, LogicError> {
    Ok(decompose(set)?.euler())
}

/// Dimension of a semilinear set (`None` when empty).
pub fn dim(set: &DefinableSet) -> Result<Option<usize>, LogicError> {
    Ok(decompose(set)?.dim())
}

/// Euler characteristic through the second documented cell ordering: the
/// set is transported along the coordinate reversal of `M^n`, decomposed
/// cylindrically there — so sections are sliced in the opposite variable
/// order — and the alternating count taken.  Reversal is a definable
/// bijection and the alternating sum is invariant under it, so any
/// disagreement with [`euler`] exposes a decomposition-dependent bug.
pub fn euler_reversed(set: &DefinableSet) -> Result<BigInt, LogicError> {
    let perm: Vec<Var> = (1..=set.arity).rev().collect();
    euler(&set.permute(&perm)?)
}

/// A cell of the first `k` coordinates together with the dimensions of the
/// section cells lying over it.  See [`param_decompose`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub base: Cell,
    pub section_dims: Vec<usize>,
}

/// Decomposes a set of arity `k + q` cylindrically and groups its cells by
/// their projection to the first `k` coordinates.  The construction of
/// [`decompose`] works last coordinate first and inserts the pairwise
/// differences of all section terms into the next stage, so every returned
/// cell projects *onto* a cell of the first `k` coordinates and its sections
/// there have constant shape.  Consequently the blocks partition the whole
/// parameter space `M^k`, and over every point of a block's base the section
/// of the set decomposes into cells of exactly `section_dims` dimensions.
/// Blocks with empty `section_dims` carry the parameters with empty section.
pub fn param_decompose(set: &DefinableSet, params: usize) -> Result<Vec<ParamBlock>, LogicError> {
    if params > set.arity {
        return Err(LogicError::Arity(format!(
            "cannot treat {params} of {} coordinates as parameters",
            set.arity
        )));
    }
    let phi = if set.phi.is_quantifier_free() {
        set.phi.clone()
    } else {
        qe(&set.sig, &set.phi)?
    };
    let mut exprs = BTreeSet::new();
    collect_exprs(&phi, &mut exprs)?;
    let all = arrangement(&exprs, set.arity);
    let mut blocks: BTreeMap<Vec<BigRational>, ParamBlock> = BTreeMap::new();
    for c in all {
        let entry = blocks
            .entry(c.sample[..params].to_vec())
            .or_insert_with(|| ParamBlock {
                base: Cell {
                    coords: c.coords[..params].to_vec(),
                    sample: c.sample[..params].to_vec(),
                },
                section_dims: Vec::new(),
            });
        if eval_qf(&phi, &c.sample)? {
            let d = c.coords[params..]
                .iter()
                .filter(|p| matches!(p, CoordPattern::Interval(..)))
                .count();
            entry.section_dims.push(d);
        }
    }
    Ok(blocks.into_values().collect())
}

// ---------------------------------------------------------------------------
// Seeded sample equivalence (the QE oracle surface)
// ---------------------------------------------------------------------------

/// Compares two formulas on `trials` pseudorandom rational points of
/// `ℚ^arity` and returns the first disagreement, if any.  Quantified inputs
/// are decided through the virtual-substitution route, so checking a
/// Fourier–Motzkin output against its input genuinely crosses two
/// independent eliminations.
pub fn sample_equiv(
    a: &Formula,
    b: &Formula,
    arity: usize,
    trials: u32,
    seed: u64,
) -> Result<Option<Point>, LogicError> {
    let a_qf = if a.is_quantifier_free() {
        a.clone()
    } else {
        lw_qe(a)?
    };
    let b_qf = if b.is_quantifier_free() {
        b.clone()
    } else {
        lw_qe(b)?
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let pt: Vec<BigRational> = (0..arity)
            .map(|_| {
                let num: i64 = rng.gen_range(-12..=12);
                let den: i64 = rng.gen_range(1..=4);
                BigRational::new(BigInt::from(num), BigInt::from(den))
            })
            .collect();
        if eval_qf(&a_qf, &pt)? != eval_qf(&b_qf, &pt)? {
            return Ok(Some(pt.into_iter().map(Element::Rat).collect()));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Backend decision services
// ---------------------------------------------------------------------------

/// The semilinear backend as a decision provider.
#[derive(Debug, Clone, Copy, Default)]
pub struct SemilinearOps;

impl ModelOps for SemilinearOps {
    fn theory(&self) -> Theory {
        Theory::OrderedQvs
    }

    fn decide(&self, sig: &Signature, sentence: &Formula) -> Result<bool, LogicError> {
        let q = qe(sig, sentence)?;
        eval_qf(&q, &[])
    }

    fn find_point(&self, set: &DefinableSet) -> Result<Option<Point>, LogicError> {
        let cells = decompose(set)?;
        Ok(cells
            .cells
            .first()
            .map(|c| c.sample.iter().cloned().map(Element::Rat).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse;

    fn sig() -> Signature {
        Signature::ordered_qvs()
    }

    fn set(arity: usize, text: &str) -> DefinableSet {
        DefinableSet::parse(&sig(), arity, text).unwrap()
    }

    #[test]
    fn qe_interval_projection() {
        // ∃y (x < y ∧ y < 1)  ⟺  x < 1
        let s = sig();
        let phi = parse(&s, "E y (x < y & y < c1)").unwrap();
        let q = qe(&s, &phi).unwrap();
        assert!(q.is_quantifier_free());
        let expected = parse(&s, "x < 1").unwrap();
        assert_eq!(q, expected);
    }

    #[test]
    fn qe_unbounded_projection_is_trivial() {
        let s = sig();
        let phi = parse(&s, "E y (x < y)").unwrap();
        assert_eq!(qe(&s, &phi).unwrap(), Formula::True);
    }

    #[test]
    fn qe_with_equation() {
        let s = sig();
        // ∃y (y = x + 1 ∧ y < 0) ⟺ x + 1 < 0
        let phi = parse(&s, "E y (y = x + 1 & y < 0)").unwrap();
        let q = qe(&s, &phi).unwrap();
        assert_eq!(q, parse(&s, "x < -1").unwrap());
    }

    #[test]
    fn qe_forall() {
        let s = sig();
        // ∀y (y < x | x < y | y = x) is valid
        let phi = parse(&s, "A y (y < x | x < y | y = x)").unwrap();
        assert_eq!(qe(&s, &phi).unwrap(), Formula::True);
        // ∀y (y < x) is unsatisfiable
        let phi = parse(&s, "A y (y < x)").unwrap();
        assert_eq!(qe(&s, &phi).unwrap(), Formula::False);
    }

    #[test]
    fn lw_agrees_with_fm_on_samples() {
        let s = sig();
        for text in [
            "E y (x < y & y < c1)",
            "E y (y = x + 1 & y < 0)",
            "A y (x < y | y < 1/2)",
            "E y (A z (z < y | z = y | x + z < 3))",
            "E y (x + y < 1 & -1 < y & (y < x | x < 2*y))",
        ] {
            let phi = parse(&s, text).unwrap();
            let fm = qe(&s, &phi).unwrap();
            assert!(fm.is_quantifier_free());
            let disagreement = sample_equiv(&phi, &fm, 1, 500, 7).unwrap();
            assert_eq!(disagreement, None, "mismatch on {text}");
        }
    }

    #[test]
    fn euler_and_dim_of_basic_sets() {
        // the open interval: one 1-dimensional cell
        assert_eq!(euler(&set(1, "0 < x & x < 1")).unwrap(), BigInt::from(-1));
        assert_eq!(dim(&set(1, "0 < x & x < 1")).unwrap(), Some(1));
        // the whole line
        assert_eq!(euler(&set(1, "true")).unwrap(), BigInt::from(-1));
        // a point
        assert_eq!(euler(&set(1, "x = 1/2")).unwrap(), BigInt::from(1));
        assert_eq!(dim(&set(1, "x = 1/2")).unwrap(), Some(0));
        // line minus a point: two rays
        assert_eq!(euler(&set(1, "!(x = 0)")).unwrap(), BigInt::from(-2));
        // the empty set
        assert_eq!(euler(&set(1, "false")).unwrap(), BigInt::zero());
        assert_eq!(dim(&set(1, "false")).unwrap(), None);
        // closed interval [0,1]: two points and an open interval
        assert_eq!(
            euler(&set(1, "(0 < x & x < 1) | x = 0 | x = 1")).unwrap(),
            BigInt::one()
        );
    }

    #[test]
    fn euler_multiplies_on_boxes() {
        // open square: (-1)^2
        assert_eq!(
            euler(&set(2, "0 < x1 & x1 < 1 & 0 < x2 & x2 < 1")).unwrap(),
            BigInt::one()
        );
        assert_eq!(
            dim(&set(2, "0 < x1 & x1 < 1 & 0 < x2 & x2 < 1")).unwrap(),
            Some(2)
        );
        // plane
        assert_eq!(euler(&set(2, "true")).unwrap(), BigInt::one());
        // diagonal line in the plane
        assert_eq!(euler(&set(2, "x1 = x2")).unwrap(), BigInt::from(-1));
        assert_eq!(dim(&set(2, "x1 = x2")).unwrap(), Some(1));
    }

    #[test]
    fn decomposition_cells_partition_the_set() {
        let s = set(2, "0 < x1 & x2 < x1 & !(x2 = 0)");
        let cells = decompose(&s).unwrap();
        // every sample satisfies the formula
        for c in &cells.cells {
            assert!(eval_qf(&s.phi, &c.sample).unwrap());
        }
        // cells are pairwise disjoint and cover: spot-check via the formulas
        let ops = SemilinearOps;
        let mut union = Formula::False;
        for c in &cells.cells {
            union = Formula::or(union, c.formula());
        }
        let union_set = DefinableSet::new(sig(), 2, union).unwrap();
        assert!(crate::logic::sets_equivalent(&ops, &union_set, &s).unwrap());
        for (i, a) in cells.cells.iter().enumerate() {
            for b in &cells.cells[i + 1..] {
                let both = DefinableSet::new(
                    sig(),
                    2,
                    Formula::and(a.formula(), b.formula()),
                )
                .unwrap();
                assert!(crate::logic::is_empty(&ops, &both).unwrap());
            }
        }
    }

    #[test]
    fn parametric_blocks_split_by_section_shape() {
        // sections over x1: the open interval (0, x1), empty unless 0 < x1
        let s = set(2, "0 < x2 & x2 < x1");
        let blocks = param_decompose(&s, 1).unwrap();
        // parameter line splits at 0
        assert_eq!(blocks.len(), 3);
        let nonempty: Vec<&ParamBlock> = blocks
            .iter()
            .filter(|b| !b.section_dims.is_empty())
            .collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].section_dims, vec![1]);
        assert!(nonempty[0].base.sample[0] > BigRational::zero());
        // block bases cover the parameter line
        let ops = SemilinearOps;
        let mut union = Formula::False;
        for b in &blocks {
            union = Formula::or(union, b.base.formula());
        }
        let union_set = DefinableSet::new(sig(), 1, union).unwrap();
        let line = DefinableSet::full(sig(), 1);
        assert!(crate::logic::sets_equivalent(&ops, &union_set, &line).unwrap());
    }

    #[test]
    fn parametric_blocks_respect_quantified_input() {
        // ∃z (x2 < z < x1): nonempty section iff x2 < x1, sections are points?
        // no — the set of (x1,x2) with that property is an open half plane;
        // treat x1 as the parameter and the x2-sections are open rays
        let s = DefinableSet::parse(&sig(), 2, "E z (x2 < z & z < x1)").unwrap();
        let blocks = param_decompose(&s, 1).unwrap();
        for b in &blocks {
            assert_eq!(b.section_dims, vec![1], "ray below every x1");
        }
    }

    #[test]
    fn euler_invariant_under_coordinate_reversal() {
        for text in [
            "0 < x1 & x2 < x1",
            "x1 = x2 | (0 < x1 & x1 < 1)",
            "!(x1 = 0) & (x2 < x1 | x2 = 1)",
        ] {
            let s = set(2, text);
            let r = s.permute(&[2, 1]).unwrap();
            assert_eq!(euler(&s).unwrap(), euler(&r).unwrap(), "{text}");
            assert_eq!(dim(&s).unwrap(), dim(&r).unwrap(), "{text}");
            assert_eq!(euler(&s).unwrap(), euler_reversed(&s).unwrap(), "{text}");
        }
        let q = DefinableSet::parse(&sig(), 3, "E u (x1 < u & u < x2 & x3 = u + u)").unwrap();
        assert_eq!(euler(&q).unwrap(), euler_reversed(&q).unwrap());
    }

    #[test]
    fn decide_and_find_point() {
        let ops = SemilinearOps;
        let s = sig();
        assert!(ops
            .decide(&s, &parse(&s, "E x (0 < x & x < 1/4)").unwrap())
            .unwrap());
        assert!(!ops
            .decide(&s, &parse(&s, "E x (x < 0 & 1 < x)").unwrap())
            .unwrap());
        let p = ops.find_point(&set(1, "3 < x")).unwrap().unwrap();
        match &p[0] {
            Element::Rat(q) => assert!(*q > BigRational::from(BigInt::from(3))),
            other => panic!("expected rational, got {other:?}"),
        }
        assert!(ops.find_point(&set(1, "x < x")).unwrap().is_none());
    }
}
