//! Seeded generators for structures, formulas, maps and fiberings.
//!
//! Everything here is a pure function of its seed, so oracle comparisons,
//! audits and regression runs reproduce exactly.  The finite fiberings are
//! built top-down — each level's slice is constructed before the stage
//! graphs are glued behind their parameter blocks — which makes them valid
//! by construction and leaves exhaustive enumeration of the base as a
//! fully independent cardinality oracle.

use std::collections::{BTreeMap, BTreeSet};

use num::{BigInt, BigRational};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::discrete::FiniteStructure;
use crate::engine::AuditCorpus;
use crate::fibering::Fibering;
use crate::logic::{
    Atom, DefinableMap, DefinableSet, Element, Formula, LinComb, LinRel, LinearAtom, Signature,
    SimpleTerm,
};

// ---------------------------------------------------------------------------
// Finite structures and fiberings
// ---------------------------------------------------------------------------

const NAMES: [&str; 6] = ["a", "b", "c", "d", "f", "g"];

/// Seeded random finite structures: two to six elements, a base sort of at
/// least two of them, and up to two nonempty relations of arity at most 3.
pub fn structures(seed: u64, count: usize) -> Vec<FiniteStructure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| one_structure(&mut rng)).collect()
}

fn one_structure(rng: &mut ChaCha8Rng) -> FiniteStructure {
    let n = rng.gen_range(2..=NAMES.len());
    let universe: Vec<String> = NAMES[..n].iter().map(|s| s.to_string()).collect();
    let mut base = universe.clone();
    base.shuffle(rng);
    base.truncate(rng.gen_range(2..=n));
    base.sort();
    let mut designated = base.clone();
    designated.shuffle(rng);
    let mut relations = BTreeMap::new();
    for name in ["R", "S"] {
        if rng.gen_bool(0.5) {
            continue;
        }
        let arity = rng.gen_range(1..=3);
        let rows = rng.gen_range(1..=4);
        let mut table = BTreeSet::new();
        for _ in 0..rows {
            table.insert(
                (0..arity)
                    .map(|_| universe.choose(rng).unwrap().clone())
                    .collect::<Vec<_>>(),
            );
        }
        relations.insert(name.to_string(), table);
    }
    FiniteStructure::new(
        universe,
        base,
        designated[0].clone(),
        designated[1].clone(),
        relations,
    )
    .expect("generated structures are well formed")
}

/// All `k`-tuples over the given elements, in a deterministic order.
fn tuples(elems: &[String], k: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = vec![vec![]];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|t| {
                elems.iter().map(move |e| {
                    let mut next = t.clone();
                    next.push(e.clone());
                    next
                })
            })
            .collect();
    }
    out
}

fn concat(a: &[String], b: &[String]) -> Vec<String> {
    a.iter().chain(b.iter()).cloned().collect()
}

/// Builds the stage tables of a fibering of `base` (tuples over the base
/// sort, ambient equal to their common length) with level arities
/// `n_list`.  Each level of the first stage recursively receives its own
/// witness tables, prefixed by the level tuple, which doubles as the
/// fibering parameter.  `None` when the innermost injection runs out of
/// codes, in which case the caller redraws.
fn stage_tables(
    rng: &mut ChaCha8Rng,
    base_elems: &[String],
    base: &[Vec<String>],
    n_list: &[usize],
) -> Option<Vec<Vec<Vec<String>>>> {
    let n1 = n_list[0];
    let codes = tuples(base_elems, n1);
    if n_list.len() == 1 {
        if codes.len() < base.len() {
            return None;
        }
        let mut codes = codes;
        codes.shuffle(rng);
        return Some(vec![base
            .iter()
            .zip(codes)
            .map(|(b, v)| concat(b, &v))
            .collect()]);
    }
    let assignment: Vec<(Vec<String>, Vec<String>)> = base
        .iter()
        .map(|b| (b.clone(), codes.choose(rng).unwrap().clone()))
        .collect();
    let image: BTreeSet<Vec<String>> = assignment.iter().map(|(_, v)| v.clone()).collect();
    let mut stages: Vec<Vec<Vec<String>>> =
        vec![assignment.iter().map(|(b, v)| concat(b, v)).collect()];
    stages.extend(std::iter::repeat(Vec::new()).take(n_list.len() - 1));
    for y in &image {
        let fiber: Vec<&Vec<String>> = assignment
            .iter()
            .filter(|(_, v)| v == y)
            .map(|(b, _)| b)
            .collect();
        let sub_base: Vec<Vec<String>> = fiber
            .iter()
            .flat_map(|u| image.iter().map(|w| concat(u, w)))
            .collect();
        let sub = stage_tables(rng, base_elems, &sub_base, &n_list[1..])?;
        for (k, rows) in sub.into_iter().enumerate() {
            stages[k + 1].extend(rows.into_iter().map(|row| concat(y, &row)));
        }
    }
    Some(stages)
}

fn point_disjunction(sig: &Signature, rows: &[Vec<String>]) -> Formula {
    Formula::disjoin_all(rows.iter().map(|row| {
        let p: Vec<Element> = row.iter().map(|e| Element::Fin(e.clone())).collect();
        Formula::point_formula(sig, &p).expect("structure elements name themselves")
    }))
}

/// Largest ambient arity whose full enumeration stays cheap: the finite
/// validator decides functionality and injectivity by scanning `|M|^a`
/// points for a check at arity `a`.
fn arity_budget(k: usize) -> usize {
    let mut a = 0;
    let mut pow = 1usize;
    while pow.saturating_mul(k) <= 8_000 {
        pow *= k;
        a += 1;
    }
    a
}

/// Shapes `(m, n_list)` at depth `r` whose widest validator scan — the
/// functionality check of the glued last stage, or the injectivity check
/// of the deepest slice — fits the arity budget.
fn shapes(r: usize, amax: usize) -> Vec<(usize, Vec<usize>)> {
    let mut out = Vec::new();
    let inners: Vec<Vec<usize>> = (0..r).fold(vec![vec![]], |acc, _| {
        acc.into_iter()
            .flat_map(|v| {
                [1, 2].map(|n| {
                    let mut w = v.clone();
                    w.push(n);
                    w
                })
            })
            .collect()
    });
    for m in 1..=2 {
        for inner in &inners {
            let path: usize = inner.iter().sum();
            for nb in 1..=3 {
                let widest = (2 * path + m + 2 * nb).max(2 * (m + path) + nb);
                if widest <= amax {
                    let mut n_list = inner.clone();
                    n_list.push(nb);
                    out.push((m, n_list));
                }
            }
        }
    }
    out
}

/// Seeded valid fiberings over the structure, depths up to `max_r`.
///
/// Bases are random subsets of a base-sort power, smaller at higher depth;
/// stage maps are tables, so every graph is a disjunction of point
/// formulas the finite evaluator sweeps directly.  Depth is throttled by
/// the universe size so that exact validation of every generated fibering
/// stays cheap.
pub fn finite_fiberings(
    s: &FiniteStructure,
    seed: u64,
    count: usize,
    max_r: usize,
) -> Vec<Fibering> {
    let sig = s.signature();
    let elems: Vec<String> = s.base().to_vec();
    let amax = arity_budget(s.universe().len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut misses = 0usize;
    while out.len() < count {
        let r = if misses > 50 { 0 } else { rng.gen_range(0..=max_r) };
        let menu = shapes(r, amax);
        let Some((m, n_list)) = menu.choose(&mut rng).cloned() else {
            misses += 1;
            continue;
        };
        let cap = [9, 6, 4, 3][r.min(3)].min(tuples(&elems, m).len());
        let size = rng.gen_range(1..=cap);
        let mut base = tuples(&elems, m);
        base.shuffle(&mut rng);
        base.truncate(size);
        base.sort();
        let Some(stages) = stage_tables(&mut rng, &elems, &base, &n_list) else {
            misses += 1;
            continue;
        };
        misses = 0;
        let base_set = DefinableSet::new(sig.clone(), m, point_disjunction(&sig, &base))
            .expect("point formulas fit their arity");
        let maps: Vec<DefinableMap> = stages
            .iter()
            .enumerate()
            .map(|(j, rows)| {
                let path: usize = n_list[..j].iter().sum();
                let dom = path + m + path;
                DefinableMap::new(
                    DefinableSet::new(
                        sig.clone(),
                        dom + n_list[j],
                        point_disjunction(&sig, rows),
                    )
                    .expect("rows share one arity"),
                    dom,
                    n_list[j],
                    None,
                    None,
                )
                .expect("table graphs are well formed")
            })
            .collect();
        let fib = Fibering::new(
            base_set,
            maps,
            n_list[..r].to_vec(),
            n_list.clone(),
        )
        .expect("generated shapes are consistent");
        out.push(fib);
    }
    out
}

// ---------------------------------------------------------------------------
// Semilinear formulas
// ---------------------------------------------------------------------------

fn lin_atom(rng: &mut ChaCha8Rng, arity: usize) -> Formula {
    loop {
        let mut l = LinComb::constant_term(BigRational::from(BigInt::from(
            rng.gen_range(-3i64..=3),
        )));
        for v in 1..=arity {
            let c = rng.gen_range(-2i64..=2);
            if c != 0 {
                l = l.add(&LinComb::var(v).scale(&BigRational::from(BigInt::from(c))));
            }
        }
        let rel = if rng.gen_bool(0.3) { LinRel::Eq } else { LinRel::Lt };
        // constant combinations fold to ⊤/⊥; redraw those
        if let f @ Formula::Atom(_) = LinearAtom::formula(l, rel) {
            return f;
        }
    }
}

fn boolean_shape(
    rng: &mut ChaCha8Rng,
    depth: usize,
    atom: &mut dyn FnMut(&mut ChaCha8Rng) -> Formula,
) -> Formula {
    if depth == 0 || rng.gen_bool(0.4) {
        return atom(rng);
    }
    match rng.gen_range(0..3) {
        0 => Formula::and(
            boolean_shape(rng, depth - 1, atom),
            boolean_shape(rng, depth - 1, atom),
        ),
        1 => Formula::or(
            boolean_shape(rng, depth - 1, atom),
            boolean_shape(rng, depth - 1, atom),
        ),
        _ => Formula::not(boolean_shape(rng, depth - 1, atom)),
    }
}

/// Seeded quantifier-free semilinear sets of arity `1..=max_arity`.
pub fn semilinear_sets(seed: u64, count: usize, max_arity: usize) -> Vec<DefinableSet> {
    let sig = Signature::ordered_qvs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let arity = rng.gen_range(1..=max_arity);
            let phi = boolean_shape(&mut rng, 2, &mut |rng| lin_atom(rng, arity));
            DefinableSet::new(sig.clone(), arity, phi).expect("generated atoms fit the arity")
        })
        .collect()
}

/// Seeded quantified semilinear sets: at most four variables in all, and a
/// prefix of up to three alternating quantifier blocks closing the upper
/// variables over a random quantifier-free matrix.
pub fn quantified_sets(seed: u64, count: usize) -> Vec<DefinableSet> {
    let sig = Signature::ordered_qvs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let total = rng.gen_range(2..=4usize);
            let bound = rng.gen_range(1..=(total - 1).min(3));
            let free = total - bound;
            let mut phi = boolean_shape(&mut rng, 2, &mut |rng| lin_atom(rng, total));
            let mut exists = rng.gen_bool(0.5);
            for v in (free + 1..=total).rev() {
                phi = if exists {
                    Formula::exists(v, phi)
                } else {
                    Formula::forall(v, phi)
                };
                if rng.gen_bool(0.6) {
                    exists = !exists;
                }
            }
            DefinableSet::new(sig.clone(), free, phi).expect("bound variables stay above the arity")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Pure-set formulas
// ---------------------------------------------------------------------------

fn eq_atom(rng: &mut ChaCha8Rng, arity: usize) -> Formula {
    let term = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.75) {
            SimpleTerm::Var(rng.gen_range(1..=arity))
        } else {
            SimpleTerm::Const(rng.gen_range(0..2))
        }
    };
    Formula::Atom(Atom::Eq(term(rng), term(rng)))
}

/// Seeded pure-set definable sets: boolean combinations of equalities
/// among variables and the two named constants.
pub fn pure_sets(seed: u64, count: usize, max_arity: usize) -> Vec<DefinableSet> {
    let sig = Signature::pure_set(&[]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let arity = rng.gen_range(1..=max_arity);
            let phi = boolean_shape(&mut rng, 2, &mut |rng| eq_atom(rng, arity));
            DefinableSet::new(sig.clone(), arity, phi).expect("equality atoms fit the arity")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Audit corpora
// ---------------------------------------------------------------------------

/// Audit corpus over a finite structure: every subset of the base line,
/// seeded subsets of the base square, every base point as a singleton, and
/// seeded table maps (injective and arbitrary) with the pairings the law
/// checks consume.
pub fn counting_audit(s: &FiniteStructure, seed: u64) -> AuditCorpus {
    let sig = s.signature();
    let elems: Vec<String> = s.base().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = AuditCorpus::empty(sig.clone());
    let line = tuples(&elems, 1);
    let square = tuples(&elems, 2);
    let set_of = |rows: &[Vec<String>], arity: usize| {
        DefinableSet::new(sig.clone(), arity, point_disjunction(&sig, rows))
            .expect("point formulas fit their arity")
    };
    // the full power set of the line when small, seeded subsets otherwise
    if line.len() <= 4 {
        for mask in 0..(1u32 << line.len()) {
            let rows: Vec<Vec<String>> = line
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, t)| t.clone())
                .collect();
            corpus.sets.push(set_of(&rows, 1));
        }
    } else {
        corpus.sets.push(set_of(&[], 1));
        for _ in 0..12 {
            let mut rows = line.clone();
            rows.shuffle(&mut rng);
            rows.truncate(rng.gen_range(1..=line.len()));
            rows.sort();
            corpus.sets.push(set_of(&rows, 1));
        }
    }
    for _ in 0..8 {
        let mut rows = square.clone();
        rows.shuffle(&mut rng);
        rows.truncate(rng.gen_range(1..=square.len().min(6)));
        rows.sort();
        corpus.sets.push(set_of(&rows, 2));
    }
    for t in &line {
        corpus.singletons.push(set_of(std::slice::from_ref(t), 1));
    }
    for _ in 0..4 {
        corpus
            .singletons
            .push(set_of(std::slice::from_ref(square.choose(&mut rng).unwrap()), 2));
    }
    // injective table maps from subsets of the line into the square
    for _ in 0..6 {
        let mut dom = line.clone();
        dom.shuffle(&mut rng);
        dom.truncate(rng.gen_range(1..=line.len()));
        let mut codes = square.clone();
        codes.shuffle(&mut rng);
        let rows: Vec<Vec<String>> = dom
            .iter()
            .zip(&codes)
            .map(|(d, v)| concat(d, v))
            .collect();
        corpus.injections.push(
            DefinableMap::new(set_of(&rows, 3), 1, 2, None, None)
                .expect("table graphs are well formed"),
        );
    }
    // arbitrary table maps from the square onto the line
    for _ in 0..6 {
        let mut dom = square.clone();
        dom.shuffle(&mut rng);
        dom.truncate(rng.gen_range(1..=square.len().min(8)));
        let rows: Vec<Vec<String>> = dom
            .iter()
            .map(|d| concat(d, line.choose(&mut rng).unwrap()))
            .collect();
        corpus.maps.push(
            DefinableMap::new(set_of(&rows, 3), 2, 1, None, None)
                .expect("table graphs are well formed"),
        );
    }
    pair_up(&mut corpus, &mut rng);
    corpus
}

/// Audit corpus over the semilinear backend: seeded sets, rational point
/// singletons, translations and coordinate swaps as injections, and
/// projections, sums, and a piecewise minimum as maps.
pub fn semilinear_audit(seed: u64) -> AuditCorpus {
    let sig = Signature::ordered_qvs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = AuditCorpus::empty(sig.clone());
    corpus.sets = semilinear_sets(seed.wrapping_add(1), 60, 2);
    for _ in 0..24 {
        let arity = rng.gen_range(1..=2usize);
        let point: Vec<Element> = (0..arity)
            .map(|_| {
                Element::Rat(BigRational::new(
                    BigInt::from(rng.gen_range(-6i64..=6)),
                    BigInt::from(rng.gen_range(1i64..=3)),
                ))
            })
            .collect();
        let phi = Formula::point_formula(&sig, &point).expect("rationals are constants");
        corpus
            .singletons
            .push(DefinableSet::new(sig.clone(), arity, phi).expect("points fit their arity"));
    }
    let parse = |arity: usize, text: &str| {
        DefinableSet::parse(&sig, arity, text).expect("audit formulas parse")
    };
    let map = |arity: usize, dom: usize, text: &str| {
        DefinableMap::new(parse(arity, text), dom, arity - dom, None, None)
            .expect("audit graphs are well formed")
    };
    for set in corpus.sets.iter().take(20) {
        let k = set.arity;
        // translate by a small rational vector on the set itself
        let mut graph = set.phi.clone();
        for i in 1..=k {
            let c = BigRational::new(
                BigInt::from(rng.gen_range(-4i64..=4)),
                BigInt::from(rng.gen_range(1i64..=2)),
            );
            graph = Formula::and(
                graph,
                LinearAtom::formula(
                    LinComb::var(k + i)
                        .sub(&LinComb::var(i))
                        .sub(&LinComb::constant_term(c)),
                    LinRel::Eq,
                ),
            );
        }
        corpus.injections.push(
            DefinableMap::new(
                DefinableSet::new(sig.clone(), 2 * k, graph).expect("shift graphs fit"),
                k,
                k,
                None,
                None,
            )
            .expect("translations are maps"),
        );
    }
    for set in corpus.sets.iter().filter(|s| s.arity == 2).take(8) {
        let swap = Formula::and(
            set.phi.clone(),
            Formula::and(
                LinearAtom::formula(LinComb::var(3).sub(&LinComb::var(2)), LinRel::Eq),
                LinearAtom::formula(LinComb::var(4).sub(&LinComb::var(1)), LinRel::Eq),
            ),
        );
        corpus.injections.push(
            DefinableMap::new(
                DefinableSet::new(sig.clone(), 4, swap).expect("swap graphs fit"),
                2,
                2,
                None,
                None,
            )
            .expect("coordinate swaps are maps"),
        );
    }
    corpus.maps.push(map(3, 2, "x3 = x1"));
    corpus.maps.push(map(3, 2, "x3 = x1 + x2"));
    corpus.maps.push(map(
        3,
        2,
        "(x1 < x2 & x3 = x1) | (!(x1 < x2) & x3 = x2)",
    ));
    corpus.maps.push(map(2, 1, "0 < x1 & x2 = x1 + x1"));
    pair_up(&mut corpus, &mut rng);
    corpus
}

/// Audit corpus over the pure-set backend: seeded equality sets, constant
/// and fresh-point singletons, a constant-swapping involution among the
/// injections, and collapse/projection maps.
pub fn pure_audit(seed: u64) -> AuditCorpus {
    let sig = Signature::pure_set(&[]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = AuditCorpus::empty(sig.clone());
    corpus.sets = pure_sets(seed.wrapping_add(1), 60, 2);
    for id in 0..2usize {
        let phi = Formula::point_formula(&sig, &[Element::Sym(id)]).expect("constants are named");
        corpus
            .singletons
            .push(DefinableSet::new(sig.clone(), 1, phi).expect("points fit their arity"));
    }
    let parse = |arity: usize, text: &str| {
        DefinableSet::parse(&sig, arity, text).expect("audit formulas parse")
    };
    let map = |arity: usize, dom: usize, text: &str| {
        DefinableMap::new(parse(arity, text), dom, arity - dom, None, None)
            .expect("audit graphs are well formed")
    };
    // the involution swapping the two named constants
    corpus.injections.push(map(
        2,
        1,
        "(x1 = c0 & x2 = c1) | (x1 = c1 & x2 = c0) | (!(x1 = c0) & !(x1 = c1) & x2 = x1)",
    ));
    for set in corpus.sets.iter().filter(|s| s.arity == 2).take(8) {
        let swap = Formula::and(
            set.phi.clone(),
            Formula::and(
                Formula::Atom(Atom::Eq(SimpleTerm::Var(3), SimpleTerm::Var(2))),
                Formula::Atom(Atom::Eq(SimpleTerm::Var(4), SimpleTerm::Var(1))),
            ),
        );
        corpus.injections.push(
            DefinableMap::new(
                DefinableSet::new(sig.clone(), 4, swap).expect("swap graphs fit"),
                2,
                2,
                None,
                None,
            )
            .expect("coordinate swaps are maps"),
        );
    }
    corpus.maps.push(map(3, 2, "x3 = x1"));
    corpus.maps.push(map(2, 1, "x2 = c0"));
    corpus.maps.push(map(
        3,
        2,
        "(x1 = x2 & x3 = c0) | (!(x1 = x2) & x3 = c1)",
    ));
    pair_up(&mut corpus, &mut rng);
    corpus
}

/// Fills the pair lists from the set list: same-arity pairs for additivity
/// and inclusion–exclusion, arbitrary pairs for the product law.
fn pair_up(corpus: &mut AuditCorpus, rng: &mut ChaCha8Rng) {
    let sets = corpus.sets.clone();
    for _ in 0..sets.len().min(40) {
        let a = sets.choose(rng).unwrap();
        let b = sets.choose(rng).unwrap();
        if a.arity == b.arity {
            corpus.pairs.push((a.clone(), b.clone()));
        }
        let c = sets.choose(rng).unwrap();
        let d = sets.choose(rng).unwrap();
        corpus.cross_pairs.push((c.clone(), d.clone()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{extend, MeasureAssignment};
    use crate::fibering::Backend;
    use crate::semiring::SemiringValue;

    #[test]
    fn generation_is_deterministic() {
        let a = structures(7, 4);
        let b = structures(7, 4);
        assert_eq!(a, b);
        let s = &a[0];
        let fa = finite_fiberings(s, 11, 3, 2);
        let fb = finite_fiberings(s, 11, 3, 2);
        assert_eq!(
            fa.iter().map(Fibering::to_spec).collect::<Vec<_>>(),
            fb.iter().map(Fibering::to_spec).collect::<Vec<_>>()
        );
    }

    #[test]
    fn generated_fiberings_validate_and_count_their_bases() {
        for (i, s) in structures(3, 3).into_iter().enumerate() {
            let mu = MeasureAssignment::counting(s.clone());
            for fib in finite_fiberings(&s, 100 + i as u64, 4, 3) {
                let n = s.enumerate(fib.base()).unwrap().len() as u64;
                let report = extend(&fib, &mu).unwrap();
                assert_eq!(report.value, SemiringValue::count(n), "{:?}", fib.to_spec());
            }
        }
    }

    #[test]
    fn quantified_sets_stay_inside_their_arity() {
        for set in quantified_sets(5, 30) {
            assert!(set.arity >= 1 && set.arity <= 3);
            assert!(set.phi.free_vars().iter().all(|&v| v <= set.arity));
        }
    }

    #[test]
    fn audit_corpora_have_material_for_every_law() {
        let s = structures(1, 1).remove(0);
        for corpus in [
            counting_audit(&s, 2),
            semilinear_audit(2),
            pure_audit(2),
        ] {
            assert!(!corpus.sets.is_empty());
            assert!(!corpus.singletons.is_empty());
            assert!(!corpus.injections.is_empty());
            assert!(!corpus.maps.is_empty());
            assert!(!corpus.pairs.is_empty());
            assert!(!corpus.cross_pairs.is_empty());
        }
    }

    #[test]
    fn generated_structures_expose_their_backend() {
        for s in structures(9, 5) {
            assert!(s.base().len() >= 2);
            let backend = Backend::Finite(&s);
            let sig = s.signature();
            let full = DefinableSet::parse(&sig, 1, "base(x1)").unwrap();
            assert_eq!(s.enumerate(&full).unwrap().len(), s.base().len());
            let _ = backend;
        }
    }
}
