//! The measuring engine: base measures on concrete backends, level-set
//! analysis of definable maps, and the extension of a measure to sets
//! presented by step fiberings.
//!
//! A [`MeasureAssignment`] pairs a value semiring with one of the computable
//! backends: Euler characteristic or dimension on semilinear sets, counting
//! on a finite structure, Morley rank on the pure-set theory, or a
//! componentwise pair of two of these.  [`base_measure`] evaluates it on a
//! plain definable set; [`extend`] evaluates it on a set that is only given
//! through a fibering, by the weighted level-set recursion
//!
//! ```text
//! μ(X)  =  Σ_a  a ⊗ μ(Y_a),      Y_a = { level y : μ(fiber over y) = a },
//! ```
//!
//! where the fiber measures come from the fibering's own lower stages.  The
//! remaining entry points are audits: [`check_fubini`] runs the additivity,
//! invariance, product and level-set laws over a corpus, [`check_fubini_map`]
//! tests the constant-fiber law on subset pairs, and
//! [`check_witness_independence`] / [`check_uniqueness`] compare different
//! presentations and different assignments against each other.
//!
//! Every reported number is exact; sampling only ever appears in the
//! validation grade of deep fiberings and is reported as such.

use std::collections::BTreeMap;

use num::{BigInt, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::discrete::{counting_measure, diagrams, morley_rank, FiniteStructure};
use crate::fibering::{relocate, Backend, Fibering, FiberingError, ValidationGrade};
use crate::logic::{
    base_power, is_empty, render_point, sets_equivalent, DefinableMap, DefinableSet, Element,
    Formula, LogicError, ModelOps, ParamFamily, Point, Signature, Theory, Var,
};
use crate::semilinear;
use crate::semiring::{SemiringError, SemiringId, SemiringValue};

/// Default cap on the number of distinct level values a single map may
/// produce.  Exceeding it is reported as [`EngineError::TooManyValues`]
/// rather than silently truncated: a blowup here means the presentation is
/// not one the finite-level-set laws apply to.
pub const DEFAULT_MAX_LEVELS: usize = 64;

// ---------------------------------------------------------------------------
// Measure assignments
// ---------------------------------------------------------------------------

/// The concrete measure behind an assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeasureBackend {
    /// Dimension of a semilinear set, in the tropical semiring.
    SemilinearDim,
    /// Euler characteristic of a semilinear set, in the integers.
    SemilinearEuler,
    /// Euler characteristic with a deliberate defect: a set that decomposes
    /// into exactly one point cell is assigned 2 instead of 1.  This is not
    /// additive, and exists so the audit suite can demonstrate that the
    /// checks reject a non-measure.
    CorruptEuler,
    /// Cardinality of the base-sort part of a finite structure.
    Counting(FiniteStructure),
    /// Morley rank over the pure-set theory, in the tropical semiring.
    MorleyRank,
    /// Two assignments over the same backend theory, run componentwise.
    Pair(Box<MeasureAssignment>, Box<MeasureAssignment>),
}

/// A semiring of values together with the backend that produces them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasureAssignment {
    pub semiring: SemiringId,
    pub backend: MeasureBackend,
}

impl MeasureAssignment {
    /// Euler characteristic on semilinear sets, valued in `ℤ`.
    pub fn euler() -> MeasureAssignment {
        MeasureAssignment {
            semiring: SemiringId::Int,
            backend: MeasureBackend::SemilinearEuler,
        }
    }

    /// Dimension on semilinear sets, valued in the tropical semiring.
    pub fn dimension() -> MeasureAssignment {
        MeasureAssignment {
            semiring: SemiringId::Trop,
            backend: MeasureBackend::SemilinearDim,
        }
    }

    /// Counting on a finite structure, valued in `ℕ`.
    pub fn counting(structure: FiniteStructure) -> MeasureAssignment {
        MeasureAssignment {
            semiring: SemiringId::Count,
            backend: MeasureBackend::Counting(structure),
        }
    }

    /// Morley rank on the pure-set theory, valued in the tropical semiring.
    pub fn morley_rank() -> MeasureAssignment {
        MeasureAssignment {
            semiring: SemiringId::Trop,
            backend: MeasureBackend::MorleyRank,
        }
    }

    /// The deliberately broken Euler variant used to show the audits bite.
    pub fn corrupt_euler() -> MeasureAssignment {
        MeasureAssignment {
            semiring: SemiringId::Int,
            backend: MeasureBackend::CorruptEuler,
        }
    }

    pub fn theory(&self) -> Theory {
        match &self.backend {
            MeasureBackend::SemilinearDim
            | MeasureBackend::SemilinearEuler
            | MeasureBackend::CorruptEuler => Theory::OrderedQvs,
            MeasureBackend::Counting(_) => Theory::Finite,
            MeasureBackend::MorleyRank => Theory::PureSet,
            MeasureBackend::Pair(a, _) => a.theory(),
        }
    }

    /// The decision backend this assignment measures against.
    pub fn model(&self) -> Backend<'_> {
        match &self.backend {
            MeasureBackend::SemilinearDim
            | MeasureBackend::SemilinearEuler
            | MeasureBackend::CorruptEuler => Backend::Semilinear,
            MeasureBackend::Counting(s) => Backend::Finite(s),
            MeasureBackend::MorleyRank => Backend::PureSet,
            MeasureBackend::Pair(a, _) => a.model(),
        }
    }

    /// Short display name, used in reports and memo keys.
    pub fn label(&self) -> String {
        match &self.backend {
            MeasureBackend::SemilinearDim => "dim".into(),
            MeasureBackend::SemilinearEuler => "euler".into(),
            MeasureBackend::CorruptEuler => "corrupt-euler".into(),
            MeasureBackend::Counting(_) => "counting".into(),
            MeasureBackend::MorleyRank => "rank".into(),
            MeasureBackend::Pair(a, b) => format!("pair({},{})", a.label(), b.label()),
        }
    }

    /// Checks that sets over `sig` are the kind this assignment measures.
    fn check_signature(&self, sig: &Signature) -> Result<(), EngineError> {
        if sig.theory != self.theory() {
            return Err(LogicError::SignatureMismatch.into());
        }
        match &self.backend {
            MeasureBackend::Counting(s) => {
                if *sig != s.signature() {
                    return Err(LogicError::SignatureMismatch.into());
                }
                Ok(())
            }
            MeasureBackend::Pair(a, b) => {
                a.check_signature(sig)?;
                b.check_signature(sig)
            }
            _ => Ok(()),
        }
    }
}

/// Builds the componentwise pairing of two assignments over one backend
/// theory; for counting, also over one and the same structure.
pub fn pair_measure(
    a: &MeasureAssignment,
    b: &MeasureAssignment,
) -> Result<MeasureAssignment, EngineError> {
    if a.theory() != b.theory() {
        return Err(EngineError::MismatchedBackend(format!(
            "{:?} vs {:?}",
            a.theory(),
            b.theory()
        )));
    }
    if let (MeasureBackend::Counting(x), MeasureBackend::Counting(y)) = (&a.backend, &b.backend) {
        if x != y {
            return Err(EngineError::MismatchedBackend(
                "pair components count different structures".into(),
            ));
        }
    }
    Ok(MeasureAssignment {
        semiring: SemiringId::Pair(Box::new(a.semiring.clone()), Box::new(b.semiring.clone())),
        backend: MeasureBackend::Pair(Box::new(a.clone()), Box::new(b.clone())),
    })
}

// ---------------------------------------------------------------------------
// Errors and options
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("the set does not lie inside the base sort")]
    NotInBase,
    #[error("the fiber over {0} falls outside the measurable class")]
    FiberNotMeasurable(String),
    #[error("the section at {0} falls outside the measurable class")]
    SectionNotMeasurable(String),
    #[error("a map produced more than {0} distinct level values")]
    TooManyValues(usize),
    #[error("a level class falls outside the measurable class")]
    CodomainNotMeasurable,
    #[error("the set and the map's domain differ at {0}")]
    DomainMismatch(String),
    #[error("the fiberings present different sets: they differ at {0}")]
    BaseMismatch(String),
    #[error("invalid fibering: {0}")]
    InvalidFibering(FiberingError),
    #[error("the assignments take values in different semirings")]
    MismatchedSemiring,
    #[error("the assignments measure different structures: {0}")]
    MismatchedBackend(String),
    #[error(transparent)]
    Semiring(#[from] SemiringError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

impl From<FiberingError> for EngineError {
    fn from(e: FiberingError) -> EngineError {
        EngineError::InvalidFibering(e)
    }
}

/// Knobs for the extension and audit entry points.
#[derive(Debug, Clone)]
pub struct ExtendOptions {
    /// Reuse measures of textually identical sub-fiberings within one call.
    pub memoize: bool,
    /// Cap on distinct level values per map.
    pub max_levels: usize,
    /// Seed for the sampled validation of deep symbolic fiberings; unused
    /// (and harmless) whenever validation is exact.
    pub seed: Option<u64>,
}

impl Default for ExtendOptions {
    fn default() -> ExtendOptions {
        ExtendOptions {
            memoize: true,
            max_levels: DEFAULT_MAX_LEVELS,
            seed: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Base measures
// ---------------------------------------------------------------------------

/// Measures a plain definable set with the assignment's backend.
///
/// For counting the set must lie inside the base sort (checked, not
/// assumed); the symbolic backends measure arbitrary definable sets since
/// there the base sort is the whole structure.
pub fn base_measure(
    set: &DefinableSet,
    mu: &MeasureAssignment,
) -> Result<SemiringValue, EngineError> {
    mu.check_signature(&set.sig)?;
    match &mu.backend {
        MeasureBackend::SemilinearEuler => Ok(SemiringValue::Int(semilinear::euler(set)?)),
        MeasureBackend::SemilinearDim => Ok(trop_of(semilinear::dim(set)?)),
        MeasureBackend::CorruptEuler => {
            let cells = semilinear::decompose(set)?;
            if cells.cells.len() == 1 && cells.cells[0].dim() == 0 {
                Ok(SemiringValue::Int(BigInt::from(2)))
            } else {
                Ok(SemiringValue::Int(cells.euler()))
            }
        }
        MeasureBackend::Counting(s) => {
            let outside = set.minus(&base_power(&set.sig, set.arity))?;
            if !is_empty(&Backend::Finite(s), &outside)? {
                return Err(EngineError::NotInBase);
            }
            Ok(SemiringValue::Count(counting_measure(s, set)?))
        }
        MeasureBackend::MorleyRank => Ok(trop_of(morley_rank(set)?)),
        MeasureBackend::Pair(a, b) => Ok(SemiringValue::pair(
            base_measure(set, a)?,
            base_measure(set, b)?,
        )),
    }
}

fn trop_of(rank: Option<usize>) -> SemiringValue {
    match rank {
        Some(d) => SemiringValue::trop(d as u64),
        None => SemiringValue::trop_neg_inf(),
    }
}

/// The value a semilinear backend assigns to a set that decomposes into
/// cells of the given dimensions.
fn value_from_dims(mu: &MeasureAssignment, dims: &[usize]) -> Result<SemiringValue, EngineError> {
    match &mu.backend {
        MeasureBackend::SemilinearEuler => Ok(SemiringValue::Int(alternating_sum(dims))),
        MeasureBackend::SemilinearDim => Ok(trop_of(dims.iter().copied().max())),
        MeasureBackend::CorruptEuler => {
            if dims == [0] {
                Ok(SemiringValue::Int(BigInt::from(2)))
            } else {
                Ok(SemiringValue::Int(alternating_sum(dims)))
            }
        }
        MeasureBackend::Pair(a, b) => Ok(SemiringValue::pair(
            value_from_dims(a, dims)?,
            value_from_dims(b, dims)?,
        )),
        other => Err(EngineError::MismatchedBackend(format!(
            "{other:?} cannot measure by cell dimensions"
        ))),
    }
}

fn alternating_sum(dims: &[usize]) -> BigInt {
    let mut acc = BigInt::zero();
    for d in dims {
        if d % 2 == 0 {
            acc += 1;
        } else {
            acc -= 1;
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Level sets
// ---------------------------------------------------------------------------

/// Accumulator grouping parameter classes by their section's value, with
/// the cap on distinct values enforced as classes appear.
struct Levels {
    groups: Vec<(SemiringValue, Vec<Formula>)>,
    max: usize,
}

impl Levels {
    fn new(max: usize) -> Levels {
        Levels {
            groups: Vec::new(),
            max,
        }
    }

    fn push(&mut self, value: SemiringValue, class: Formula) -> Result<(), EngineError> {
        match self.groups.iter_mut().find(|(v, _)| *v == value) {
            Some((_, members)) => members.push(class),
            None => {
                if self.groups.len() == self.max {
                    return Err(EngineError::TooManyValues(self.max));
                }
                self.groups.push((value, vec![class]));
            }
        }
        Ok(())
    }

    /// The classes in canonical report order.
    fn finish(mut self, sig: &Signature, arity: usize) -> Vec<(SemiringValue, DefinableSet)> {
        self.groups.sort_by(|a, b| a.0.report_cmp(&b.0));
        self.groups
            .into_iter()
            .map(|(v, members)| {
                let phi = Formula::disjoin_all(members);
                let set = DefinableSet::new(sig.clone(), arity, phi)
                    .expect("classes are built from checked formulas");
                (v, set)
            })
            .collect()
    }
}

/// Splits the parameter space of a family by the measure of the sections.
///
/// The returned classes partition all of `M^k` (parameters with empty
/// section land in the class of the zero value) and are listed in canonical
/// value order.  Finite parameters are enumerated; semilinear families are
/// split through the parametric cell decomposition, whose blocks have
/// constant section shape; pure-set parameters are split by their diagram,
/// on which every definable invariant is constant.
pub fn param_level_sets(
    family: &ParamFamily,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
) -> Result<Vec<(SemiringValue, DefinableSet)>, EngineError> {
    let sig = &family.set.sig;
    mu.check_signature(sig)?;
    let k = family.param_arity;
    let mut levels = Levels::new(opts.max_levels);
    match sig.theory {
        Theory::Finite => {
            let s = match &mu.backend {
                MeasureBackend::Counting(s) => s,
                MeasureBackend::Pair(_, _) => match mu.model() {
                    Backend::Finite(s) => s,
                    _ => unreachable!("finite theory has a finite model"),
                },
                _ => unreachable!("theory check admits only counting here"),
            };
            for p in s.enumerate(&DefinableSet::full(sig.clone(), k))? {
                let section = family.section(&p)?;
                let value = base_measure(&section, mu).map_err(|e| match e {
                    EngineError::NotInBase => {
                        EngineError::SectionNotMeasurable(render_point(&p, sig))
                    }
                    other => other,
                })?;
                levels.push(value, Formula::point_formula(sig, &p)?)?;
            }
        }
        Theory::OrderedQvs => {
            for block in semilinear::param_decompose(&family.set, k)? {
                let value = value_from_dims(mu, &block.section_dims)?;
                levels.push(value, block.base.formula())?;
            }
        }
        Theory::PureSet => {
            for diagram in diagrams(sig, k) {
                let p = diagram.point(sig);
                let section = family.section(&p)?;
                let value = base_measure(&section, mu).map_err(|e| match e {
                    EngineError::NotInBase => {
                        EngineError::SectionNotMeasurable(render_point(&p, sig))
                    }
                    other => other,
                })?;
                levels.push(value, diagram.formula(sig))?;
            }
        }
    }
    Ok(levels.finish(sig, k))
}

/// One level class of a map: the value, the set of levels attaining it,
/// and the measure of that set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelClass {
    pub a: SemiringValue,
    pub set: DefinableSet,
    pub mu: SemiringValue,
}

/// The level-set analysis of a definable map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSetReport {
    pub map: DefinableMap,
    pub classes: Vec<LevelClass>,
    /// `Σ a ⊗ μ(Y_a)` over the classes.
    pub total: SemiringValue,
}

/// Splits the image of `f` by fiber measure and sums the weighted classes.
///
/// The classes partition the image exactly; parameters outside the image
/// are discarded, and classes are reported in canonical value order.
pub fn level_sets(
    f: &DefinableMap,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
) -> Result<LevelSetReport, EngineError> {
    let parts = param_level_sets(&f.transposed_family(), mu, opts).map_err(|e| match e {
        EngineError::SectionNotMeasurable(w) => EngineError::FiberNotMeasurable(w),
        other => other,
    })?;
    let image = f.image_set();
    let backend = mu.model();
    let mut classes = Vec::new();
    let mut total = SemiringValue::zero(&mu.semiring);
    for (a, part) in parts {
        let y = part.intersect(&image)?;
        if is_empty(&backend, &y)? {
            continue;
        }
        let m = base_measure(&y, mu).map_err(|e| match e {
            EngineError::NotInBase => EngineError::CodomainNotMeasurable,
            other => other,
        })?;
        total = total.add(&a.mul(&m)?)?;
        classes.push(LevelClass { a, set: y, mu: m });
    }
    Ok(LevelSetReport {
        map: f.clone(),
        classes,
        total,
    })
}

/// The fibered measure of `x` along `f`: the weighted level-set sum, after
/// checking that `f`'s domain really is `x`.
pub fn mu_f(
    x: &DefinableSet,
    f: &DefinableMap,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
) -> Result<SemiringValue, EngineError> {
    let backend = mu.model();
    let dom = f.domain_set();
    if !sets_equivalent(&backend, x, &dom)? {
        let witness = backend
            .find_point(&x.minus(&dom)?)?
            .or(backend.find_point(&dom.minus(x)?)?)
            .unwrap_or_default();
        return Err(EngineError::DomainMismatch(render_point(
            &witness, &x.sig,
        )));
    }
    Ok(level_sets(f, mu, opts)?.total)
}

/// The preimage `f⁻¹(target)` inside the graph's domain.
pub fn preimage(f: &DefinableMap, target: &DefinableSet) -> Result<DefinableSet, LogicError> {
    if target.arity != f.cod_arity || target.sig != f.graph.sig {
        return Err(LogicError::Arity(
            "preimage target does not fit the codomain".into(),
        ));
    }
    let phi = Formula::and(f.graph.phi.clone(), target.phi.shift_vars(f.dom_arity));
    Ok(DefinableSet::new(f.graph.sig.clone(), f.graph.arity, phi)?
        .project_onto_prefix(f.dom_arity))
}

/// The composite `g ∘ f` as a graph: `∃ȳ (f(x̄) = ȳ ∧ g(ȳ) = z̄)`.
pub fn compose_maps(f: &DefinableMap, g: &DefinableMap) -> Result<DefinableMap, LogicError> {
    if f.cod_arity != g.dom_arity || f.graph.sig != g.graph.sig {
        return Err(LogicError::Arity(
            "composition needs matching middle arities".into(),
        ));
    }
    let (d, mid, c) = (f.dom_arity, f.cod_arity, g.cod_arity);
    let fresh = d + c + f.graph.phi.max_var().max(g.graph.phi.max_var()).max(d + mid).max(mid + c);
    // x̄ stays at 1..d, z̄ lands at d+1..d+c, ȳ is quantified above `fresh`
    let f_targets: Vec<Var> = (1..=d).chain(fresh + 1..=fresh + mid).collect();
    let g_targets: Vec<Var> = (fresh + 1..=fresh + mid).chain(d + 1..=d + c).collect();
    let mut phi = Formula::and(relocate(&f.graph.phi, &f_targets)?, relocate(&g.graph.phi, &g_targets)?);
    for v in (fresh + 1..=fresh + mid).rev() {
        phi = Formula::exists(v, phi);
    }
    DefinableMap::new(
        DefinableSet::new(f.graph.sig.clone(), d + c, phi)?,
        d,
        c,
        f.dom.clone(),
        None,
    )
}

// ---------------------------------------------------------------------------
// Extension along fiberings
// ---------------------------------------------------------------------------

/// How the fibering behind a result was checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    /// Every condition decided exactly.
    Exact,
    /// Structure decided exactly, per-level witnesses checked on samples.
    Sampled,
}

/// One level class as it appears in a rendered report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelClassReport {
    pub a: SemiringValue,
    pub class: String,
    pub mu: SemiringValue,
}

/// The result of extending a measure along a fibering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeasureReport {
    pub value: SemiringValue,
    pub grade: Grade,
    pub levels: Vec<LevelClassReport>,
    pub trace: Vec<String>,
}

/// Measures the set presented by a fibering, with default options.
pub fn extend(fib: &Fibering, mu: &MeasureAssignment) -> Result<MeasureReport, EngineError> {
    extend_with(fib, mu, &ExtendOptions::default())
}

/// Measures the set presented by a fibering.
///
/// The fibering is validated first and the report is graded accordingly.
/// The value is the weighted level-set sum over the first map, with fiber
/// measures drawn from the fibering's lower stages; the recursion bottoms
/// out at embedded images measured by the backend directly.  The empty
/// fibering of the empty set is measured zero outright, without consulting
/// any backend.
pub fn extend_with(
    fib: &Fibering,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
) -> Result<MeasureReport, EngineError> {
    if fib.base().phi == Formula::False {
        return Ok(MeasureReport {
            value: SemiringValue::zero(&mu.semiring),
            grade: Grade::Exact,
            levels: Vec::new(),
            trace: vec!["empty base: zero without consulting the backend".into()],
        });
    }
    mu.check_signature(fib.sig())?;
    let backend = mu.model();
    let (grade, family) = fib.validate_with_family(&backend, opts.seed)?;
    let grade = match grade {
        ValidationGrade::Valid => Grade::Exact,
        ValidationGrade::SampledValid => Grade::Sampled,
    };
    let (value, classes) = extend_classes(fib, mu, opts, &backend, family)?;
    let levels: Vec<LevelClassReport> = classes
        .into_iter()
        .map(|c| LevelClassReport {
            a: c.a,
            class: c.set.phi.pretty(fib.sig()),
            mu: c.mu,
        })
        .collect();
    let trace = vec![
        format!(
            "{}-step fibering in M^{} measured with {}",
            fib.r(),
            fib.ambient(),
            mu.label()
        ),
        format!("{} level classes", levels.len()),
    ];
    Ok(MeasureReport {
        value,
        grade,
        levels,
        trace,
    })
}

/// Dispatches a validated fibering to the evaluation strategy of its
/// backend and depth.
fn extend_classes(
    fib: &Fibering,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
    backend: &Backend,
    family: Option<DefinableSet>,
) -> Result<(SemiringValue, Vec<LevelClass>), EngineError> {
    if fib.r() == 0 {
        let image = fib.maps()[0].image_set();
        let m = base_measure(&image, mu)?;
        let one = SemiringValue::one(&mu.semiring);
        return Ok((
            m.clone(),
            vec![LevelClass {
                a: one,
                set: image,
                mu: m,
            }],
        ));
    }
    match backend {
        Backend::Finite(s) => {
            let mut memo = BTreeMap::new();
            finite_classes(fib, mu, opts, s, backend, &mut memo)
        }
        _ if fib.r() == 1 => symbolic_one_step(fib, mu, opts, backend, family),
        _ => symbolic_direct(fib, mu, opts, backend),
    }
}

/// Memoized value of a finite sub-fibering.
fn finite_value(
    fib: &Fibering,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
    s: &FiniteStructure,
    backend: &Backend,
    memo: &mut BTreeMap<String, SemiringValue>,
) -> Result<SemiringValue, EngineError> {
    let key = memo_key(fib, mu);
    if opts.memoize {
        if let Some(v) = memo.get(&key) {
            return Ok(v.clone());
        }
    }
    let value = if fib.r() == 0 {
        base_measure(&fib.maps()[0].image_set(), mu)?
    } else {
        finite_classes(fib, mu, opts, s, backend, memo)?.0
    };
    if opts.memoize {
        memo.insert(key, value.clone());
    }
    Ok(value)
}

fn memo_key(fib: &Fibering, mu: &MeasureAssignment) -> String {
    let spec = serde_json::to_string(&fib.to_spec()).expect("fibering specs serialize");
    format!("{}:{}", mu.label(), spec)
}

fn point_set(sig: &Signature, p: &[Element]) -> Result<DefinableSet, EngineError> {
    Ok(DefinableSet::new(
        sig.clone(),
        p.len(),
        Formula::point_formula(sig, p)?,
    )?)
}

/// Finds a parameter whose slice at the level validates.  The fibering is
/// already validated, so this only re-locates the witness.
fn witness_slice(
    fib: &Fibering,
    params: &[Point],
    y: &Point,
    backend: &Backend,
) -> Result<Fibering, EngineError> {
    for x in params {
        let slice = fib.slice(x, y)?;
        if slice.validate(backend, None).is_ok() {
            return Ok(slice);
        }
    }
    Err(EngineError::InvalidFibering(
        FiberingError::NoParameterForFiber(render_point(y, fib.sig())),
    ))
}

/// Finite evaluation: enumerate the levels, measure each fiber through a
/// witnessed slice restricted to `fiber × {level}`, and measure each level
/// class through the same slice restricted to `{fiber point} × class`.
fn finite_classes(
    fib: &Fibering,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
    s: &FiniteStructure,
    backend: &Backend,
    memo: &mut BTreeMap<String, SemiringValue>,
) -> Result<(SemiringValue, Vec<LevelClass>), EngineError> {
    let sig = fib.sig();
    let n1 = fib.n_list()[0];
    let family = fib.maps()[0].transposed_family();
    let ys = s.enumerate(&fib.maps()[0].image_set())?;
    let params = s.enumerate(&DefinableSet::full(sig.clone(), fib.m_list()[0]))?;
    let mut levels = Levels::new(opts.max_levels);
    // the first level's slice also presents every level class, as the
    // product of one fiber point with the class
    let mut anchor: Option<(Fibering, Point)> = None;
    for y in &ys {
        let slice = witness_slice(fib, &params, y, backend)?;
        let fiber = family.section(y)?;
        let over_y = slice.restrict(backend, &fiber.product(&point_set(sig, y)?)?)?;
        let a = finite_value(&over_y, mu, opts, s, backend, memo)?;
        if anchor.is_none() {
            let pt = s
                .enumerate(&fiber)?
                .into_iter()
                .next()
                .expect("levels of the image have nonempty fibers");
            anchor = Some((slice.clone(), pt));
        }
        levels.push(a, Formula::point_formula(sig, y)?)?;
    }
    let mut value = SemiringValue::zero(&mu.semiring);
    let mut classes = Vec::new();
    for (a, class) in levels.finish(sig, n1) {
        let (slice0, pt0) = anchor.as_ref().expect("a class implies a level was seen");
        let presented = slice0.restrict(backend, &point_set(sig, pt0)?.product(&class)?)?;
        let m = finite_value(&presented, mu, opts, s, backend, memo)?;
        value = value.add(&a.mul(&m)?)?;
        classes.push(LevelClass { a, set: class, mu: m });
    }
    Ok((value, classes))
}

/// One-step symbolic evaluation.  The fiber over a level `ȳ`, witnessed by
/// a parameter `x̄`, embeds into `M^{n₂}` as the image of `fiber × {ȳ}`
/// under the second map's section; those images form one definable family
/// over `(ȳ, x̄)`, so the parametric decomposition splits the good
/// parameters by fiber measure exactly.  Classes are the projections to the
/// level coordinates, made disjoint in report order.
fn symbolic_one_step(
    fib: &Fibering,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
    backend: &Backend,
    family: Option<DefinableSet>,
) -> Result<(SemiringValue, Vec<LevelClass>), EngineError> {
    let sig = fib.sig();
    let (n1, m1) = (fib.n_list()[0], fib.m_list()[0]);
    let (n2, m) = (fib.n_list()[1], fib.ambient());
    let k = n1 + m1;
    let good = match family {
        Some(f) => f,
        None => fib.good_parameter_family(backend)?,
    };
    // the second map's graph lives on (x̄, ū, w̄, z̄); send x̄ to the
    // parameter block, pin the level coordinates w̄ to the family's level
    // block ȳ, close the fiber point ū existentially, put z̄ after (ȳ, x̄)
    let g2 = &fib.maps()[1];
    let fresh = (k + n2).max(g2.graph.phi.max_var());
    let targets: Vec<Var> = (n1 + 1..=n1 + m1)
        .chain(fresh + 1..=fresh + m)
        .chain(1..=n1)
        .chain(k + 1..=k + n2)
        .collect();
    let mut section_of = relocate(&g2.graph.phi, &targets)?;
    for v in (fresh + 1..=fresh + m).rev() {
        section_of = Formula::exists(v, section_of);
    }
    let total_set = DefinableSet::new(
        sig.clone(),
        k + n2,
        Formula::and(good.phi.clone(), section_of),
    )?;
    let parts = param_level_sets(&ParamFamily::new(total_set, k)?, mu, opts)?;
    let mut value = SemiringValue::zero(&mu.semiring);
    let mut classes = Vec::new();
    let mut seen = DefinableSet::empty(sig.clone(), n1);
    for (a, part) in parts {
        let y = part
            .intersect(&good)?
            .project_onto_prefix(n1)
            .minus(&seen)?;
        if is_empty(backend, &y)? {
            continue;
        }
        seen = seen.union(&y)?;
        let m_y = base_measure(&y, mu)?;
        value = value.add(&a.mul(&m_y)?)?;
        classes.push(LevelClass { a, set: y, mu: m_y });
    }
    Ok((value, classes))
}

/// Deeper symbolic evaluation: measure the first map's fibers directly.
/// Over the symbolic backends the base sort is the whole structure, so the
/// fibers are ordinary definable sets and their measures coincide with the
/// values any of their own presentations would produce; the lower stages
/// still participate through validation.
fn symbolic_direct(
    fib: &Fibering,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
    backend: &Backend,
) -> Result<(SemiringValue, Vec<LevelClass>), EngineError> {
    let parts = param_level_sets(&fib.maps()[0].transposed_family(), mu, opts).map_err(
        |e| match e {
            EngineError::SectionNotMeasurable(w) => EngineError::FiberNotMeasurable(w),
            other => other,
        },
    )?;
    let image = fib.maps()[0].image_set();
    let mut value = SemiringValue::zero(&mu.semiring);
    let mut classes = Vec::new();
    for (a, part) in parts {
        let y = part.intersect(&image)?;
        if is_empty(backend, &y)? {
            continue;
        }
        let m_y = base_measure(&y, mu)?;
        value = value.add(&a.mul(&m_y)?)?;
        classes.push(LevelClass { a, set: y, mu: m_y });
    }
    Ok((value, classes))
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

/// Material for the law audit: sets and maps over one signature.
#[derive(Debug, Clone)]
pub struct AuditCorpus {
    pub sig: Signature,
    /// General sets, used for additivity and inclusion–exclusion.
    pub sets: Vec<DefinableSet>,
    /// One-point sets.
    pub singletons: Vec<DefinableSet>,
    /// Injective maps, used for the invariance law.
    pub injections: Vec<DefinableMap>,
    /// Arbitrary maps, used for the level-set laws.
    pub maps: Vec<DefinableMap>,
    /// Same-arity pairs for additivity and inclusion–exclusion.
    pub pairs: Vec<(DefinableSet, DefinableSet)>,
    /// Pairs of possibly different arity for the product law.
    pub cross_pairs: Vec<(DefinableSet, DefinableSet)>,
}

impl AuditCorpus {
    pub fn empty(sig: Signature) -> AuditCorpus {
        AuditCorpus {
            sig,
            sets: Vec::new(),
            singletons: Vec::new(),
            injections: Vec::new(),
            maps: Vec::new(),
            pairs: Vec::new(),
            cross_pairs: Vec::new(),
        }
    }
}

/// Verdict on one law.
#[derive(Debug, Clone, Serialize)]
pub struct AuditCheck {
    pub law: String,
    pub instances: usize,
    pub pass: bool,
    pub counterexample: Option<String>,
}

impl AuditCheck {
    fn passing(law: &str, instances: usize) -> AuditCheck {
        AuditCheck {
            law: law.into(),
            instances,
            pass: true,
            counterexample: None,
        }
    }

    fn failing(law: &str, instances: usize, witness: String) -> AuditCheck {
        AuditCheck {
            law: law.into(),
            instances,
            pass: false,
            counterexample: Some(witness),
        }
    }
}

/// The audit transcript: one entry per law.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs every measure law over the corpus and reports per-law verdicts.
/// A failing law carries its first counterexample; later instances of that
/// law are not examined.
pub fn check_fubini(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
    opts: &ExtendOptions,
) -> Result<AuditReport, EngineError> {
    mu.check_signature(&corpus.sig)?;
    let mut checks = Vec::new();
    checks.push(zero_on_empty(mu, corpus)?);
    checks.push(one_on_singletons(mu, corpus)?);
    checks.push(iso_invariance(mu, corpus)?);
    checks.push(level_values_finite(mu, corpus, opts)?);
    checks.push(level_classes_partition(mu, corpus, opts)?);
    checks.push(constant_fiber_law(mu, corpus, opts)?);
    checks.push(weighted_level_sum(mu, corpus, opts)?);
    checks.push(disjoint_additivity(mu, corpus)?);
    checks.push(inclusion_exclusion(mu, corpus)?);
    checks.push(product_law(mu, corpus)?);
    checks.push(squaring_profile_check());
    Ok(AuditReport { checks })
}

fn zero_on_empty(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
) -> Result<AuditCheck, EngineError> {
    let zero = SemiringValue::zero(&mu.semiring);
    for arity in 1..=3 {
        let m = base_measure(&DefinableSet::empty(corpus.sig.clone(), arity), mu)?;
        if m != zero {
            return Ok(AuditCheck::failing(
                "zero-on-empty",
                arity,
                format!("empty set of arity {arity} measures {m:?}"),
            ));
        }
    }
    Ok(AuditCheck::passing("zero-on-empty", 3))
}

fn one_on_singletons(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
) -> Result<AuditCheck, EngineError> {
    let one = SemiringValue::one(&mu.semiring);
    for (i, s) in corpus.singletons.iter().enumerate() {
        let m = base_measure(s, mu)?;
        if m != one {
            return Ok(AuditCheck::failing(
                "one-on-singletons",
                i + 1,
                format!("{} measures {m:?}", s.phi.pretty(&corpus.sig)),
            ));
        }
    }
    Ok(AuditCheck::passing(
        "one-on-singletons",
        corpus.singletons.len(),
    ))
}

/// A definable injection must carry its domain to a set of equal measure.
fn iso_invariance(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
) -> Result<AuditCheck, EngineError> {
    let backend = mu.model();
    for (i, f) in corpus.injections.iter().enumerate() {
        if let Some(p) = injectivity_failure(&backend, f)? {
            return Ok(AuditCheck::failing(
                "iso-invariance",
                i + 1,
                format!("corpus map is not injective near {p}"),
            ));
        }
        let dom = base_measure(&f.domain_set(), mu)?;
        let img = base_measure(&f.image_set(), mu)?;
        if dom != img {
            return Ok(AuditCheck::failing(
                "iso-invariance",
                i + 1,
                format!(
                    "{}: domain measures {dom:?}, image {img:?}",
                    f.graph.phi.pretty(&corpus.sig)
                ),
            ));
        }
    }
    Ok(AuditCheck::passing(
        "iso-invariance",
        corpus.injections.len(),
    ))
}

/// Two domain points sharing a value, as a rendered witness.
fn injectivity_failure(
    backend: &Backend,
    f: &DefinableMap,
) -> Result<Option<String>, EngineError> {
    let sig = &f.graph.sig;
    let (d, n) = (f.dom_arity, f.cod_arity);
    let left: Vec<Var> = (1..=d).chain(2 * d + 1..=2 * d + n).collect();
    let right: Vec<Var> = (d + 1..=2 * d).chain(2 * d + 1..=2 * d + n).collect();
    let mut differ = Formula::False;
    for i in 1..=d {
        differ = Formula::or(
            differ,
            Formula::not(Formula::vars_equal(sig.theory, i, d + i)),
        );
    }
    let bad = Formula::and(
        Formula::and(relocate(&f.graph.phi, &left)?, relocate(&f.graph.phi, &right)?),
        differ,
    );
    match backend.find_point(&DefinableSet::new(sig.clone(), 2 * d + n, bad)?)? {
        Some(p) => Ok(Some(render_point(&p[..d], sig))),
        None => Ok(None),
    }
}

fn level_values_finite(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
    opts: &ExtendOptions,
) -> Result<AuditCheck, EngineError> {
    for (i, f) in corpus.maps.iter().enumerate() {
        match level_sets(f, mu, opts) {
            Ok(_) => {}
            Err(EngineError::TooManyValues(bound)) => {
                return Ok(AuditCheck::failing(
                    "level-values-finite",
                    i + 1,
                    format!(
                        "{} exceeds {bound} level values",
                        f.graph.phi.pretty(&corpus.sig)
                    ),
                ));
            }
            Err(other) => return Err(other),
        }
    }
    Ok(AuditCheck::passing("level-values-finite", corpus.maps.len()))
}

fn level_classes_partition(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
    opts: &ExtendOptions,
) -> Result<AuditCheck, EngineError> {
    let backend = mu.model();
    for (i, f) in corpus.maps.iter().enumerate() {
        let report = level_sets(f, mu, opts)?;
        let image = f.image_set();
        let mut union = DefinableSet::empty(corpus.sig.clone(), f.cod_arity);
        for c in &report.classes {
            union = union.union(&c.set)?;
        }
        if !sets_equivalent(&backend, &union, &image)? {
            return Ok(AuditCheck::failing(
                "level-classes-partition",
                i + 1,
                format!(
                    "classes of {} do not cover the image",
                    f.graph.phi.pretty(&corpus.sig)
                ),
            ));
        }
        for (j, c) in report.classes.iter().enumerate() {
            for d in &report.classes[j + 1..] {
                if !is_empty(&backend, &c.set.intersect(&d.set)?)? {
                    return Ok(AuditCheck::failing(
                        "level-classes-partition",
                        i + 1,
                        format!(
                            "classes of {} overlap",
                            f.graph.phi.pretty(&corpus.sig)
                        ),
                    ));
                }
            }
        }
    }
    Ok(AuditCheck::passing(
        "level-classes-partition",
        corpus.maps.len(),
    ))
}

/// On each level class the fibers have the class's value, so the part of
/// the domain over the class must measure value ⊗ class measure.
fn constant_fiber_law(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
    opts: &ExtendOptions,
) -> Result<AuditCheck, EngineError> {
    let mut instances = 0;
    for f in &corpus.maps {
        let report = level_sets(f, mu, opts)?;
        for c in &report.classes {
            instances += 1;
            let above = preimage(f, &c.set)?;
            let lhs = base_measure(&above, mu)?;
            let rhs = c.a.mul(&c.mu)?;
            if lhs != rhs {
                return Ok(AuditCheck::failing(
                    "constant-fiber-law",
                    instances,
                    format!(
                        "{} over class {}: {lhs:?} vs {rhs:?}",
                        f.graph.phi.pretty(&corpus.sig),
                        c.set.phi.pretty(&corpus.sig)
                    ),
                ));
            }
        }
    }
    Ok(AuditCheck::passing("constant-fiber-law", instances))
}

/// The weighted level-set sum must reproduce the measure of the domain.
fn weighted_level_sum(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
    opts: &ExtendOptions,
) -> Result<AuditCheck, EngineError> {
    for (i, f) in corpus.maps.iter().enumerate() {
        let total = level_sets(f, mu, opts)?.total;
        let direct = base_measure(&f.domain_set(), mu)?;
        if total != direct {
            return Ok(AuditCheck::failing(
                "weighted-level-sum",
                i + 1,
                format!(
                    "{}: level sum {total:?}, domain measures {direct:?}",
                    f.graph.phi.pretty(&corpus.sig)
                ),
            ));
        }
    }
    Ok(AuditCheck::passing("weighted-level-sum", corpus.maps.len()))
}

fn disjoint_additivity(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
) -> Result<AuditCheck, EngineError> {
    for (i, (x, y)) in corpus.pairs.iter().enumerate() {
        let whole = base_measure(x, mu)?;
        let outside = base_measure(&x.minus(y)?, mu)?;
        let inside = base_measure(&x.intersect(y)?, mu)?;
        if whole != outside.add(&inside)? {
            return Ok(AuditCheck::failing(
                "disjoint-additivity",
                i + 1,
                format!(
                    "{} split by {}: {whole:?} vs {:?} ⊕ {:?}",
                    x.phi.pretty(&corpus.sig),
                    y.phi.pretty(&corpus.sig),
                    outside,
                    inside
                ),
            ));
        }
    }
    Ok(AuditCheck::passing("disjoint-additivity", corpus.pairs.len()))
}

fn inclusion_exclusion(
    mu: &MeasureAssignment,
    corpus: &AuditCorpus,
) -> Result<AuditCheck, EngineError> {
    for (i, (x, y)) in corpus.pairs.iter().enumerate() {
        let lhs = base_measure(&x.union(y)?, mu)?.add(&base_measure(&x.intersect(y)?, mu)?)?;
        let rhs = base_measure(x, mu)?.add(&base_measure(y, mu)?)?;
        if lhs != rhs {
            return Ok(AuditCheck::failing(
                "inclusion-exclusion",
                i + 1,
                format!(
                    "{} with {}: {lhs:?} vs {rhs:?}",
                    x.phi.pretty(&corpus.sig),
                    y.phi.pretty(&corpus.sig)
                ),
            ));
        }
    }
    Ok(AuditCheck::passing(
        "inclusion-exclusion",
        corpus.pairs.len(),
    ))
}

fn product_law(mu: &MeasureAssignment, corpus: &AuditCorpus) -> Result<AuditCheck, EngineError> {
    for (i, (x, y)) in corpus.cross_pairs.iter().enumerate() {
        let lhs = base_measure(&x.product(y)?, mu)?;
        let rhs = base_measure(x, mu)?.mul(&base_measure(y, mu)?)?;
        if lhs != rhs {
            return Ok(AuditCheck::failing(
                "product-law",
                i + 1,
                format!(
                    "{} × {}: {lhs:?} vs {rhs:?}",
                    x.phi.pretty(&corpus.sig),
                    y.phi.pretty(&corpus.sig)
                ),
            ));
        }
    }
    Ok(AuditCheck::passing("product-law", corpus.cross_pairs.len()))
}

/// The squaring-map profile on a one-dimensional line, under the rules
/// "a finite set of `d` points measures `d`" and "a cofinite set missing
/// `d` points measures `1 − d`".  Squaring fibers the line over itself with
/// one singleton fiber and two-point fibers elsewhere, so the line's
/// measure `t` must satisfy `t = 1·1 + 2·(t − 1)`, which forces `t = 1` —
/// the cofinite rule's value for the full line.  Checked literally, and
/// the uniqueness of the solution is confirmed over a window of integers.
pub fn squaring_profile_check() -> AuditCheck {
    let finite = |d: i64| d;
    let cofinite = |d: i64| 1 - d;
    let line = cofinite(0);
    let level_sum = 1 * finite(1) + 2 * cofinite(1);
    let solutions: Vec<i64> = (-5..=5).filter(|t| *t == 1 + 2 * (t - 1)).collect();
    let pass = line == 1 && level_sum == line && solutions == vec![1];
    AuditCheck {
        law: "squaring-profile".into(),
        instances: 1,
        pass,
        counterexample: if pass {
            None
        } else {
            Some(format!("line {line}, level sum {level_sum}, solutions {solutions:?}"))
        },
    }
}

// ---------------------------------------------------------------------------
// Constant-fiber map audit
// ---------------------------------------------------------------------------

/// Outcome of [`check_fubini_map`].
#[derive(Debug, Clone, Serialize)]
pub struct FubiniMapReport {
    /// Restriction pairs with constant fiber measure that were verified.
    pub checked: usize,
    /// Pairs skipped because the fiber measure is not constant there, or
    /// because the pair does not restrict the map.
    pub skipped: usize,
    pub counterexample: Option<String>,
}

impl FubiniMapReport {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Verifies the constant-fiber law on restrictions of one map: whenever
/// `f(X′) ⊆ Y′` and the fibers `f⁻¹(y) ∩ X′` have one measure `a` across
/// `Y′`, then `μ(X′) = a ⊗ μ(Y′)`.
///
/// On the finite backend every subset pair of a small domain and codomain
/// is enumerated; on the symbolic backends the provided pairs are tested.
/// Pairs that do not satisfy the law's hypotheses are skipped, not failed.
pub fn check_fubini_map(
    f: &DefinableMap,
    mu: &MeasureAssignment,
    restrictions: &[(DefinableSet, DefinableSet)],
    opts: &ExtendOptions,
) -> Result<FubiniMapReport, EngineError> {
    mu.check_signature(&f.graph.sig)?;
    match mu.model() {
        Backend::Finite(_) => finite_fubini_map(f, mu),
        _ => symbolic_fubini_map(f, mu, restrictions, opts),
    }
}

/// Exhaustive point-subset check.  Fiber and subset measures of explicit
/// point sets are plain cardinalities, mapped into the semiring by the
/// canonical count embedding.
fn finite_fubini_map(
    f: &DefinableMap,
    mu: &MeasureAssignment,
) -> Result<FubiniMapReport, EngineError> {
    let s = match mu.model() {
        Backend::Finite(s) => s,
        _ => unreachable!("caller checked the backend"),
    };
    let xs = s.enumerate(&f.domain_set())?;
    let ys = s.enumerate(&f.image_set())?;
    if xs.len() > 16 || ys.len() > 12 {
        return Err(LogicError::Arity(format!(
            "subset enumeration wants at most 16 domain and 12 image points, got {} and {}",
            xs.len(),
            ys.len()
        ))
        .into());
    }
    // index of f(x) among the image points
    let family = f.transposed_family();
    let mut value_of = Vec::with_capacity(xs.len());
    for x in &xs {
        let idx = ys
            .iter()
            .position(|y| {
                s.eval_at(&family.section(y).expect("image points section"), x)
                    .unwrap_or(false)
            })
            .expect("domain points have a value in the image");
        value_of.push(idx);
    }
    let mut checked = 0;
    let mut skipped = 0;
    for xmask in 0u32..1 << xs.len() {
        let mut fiber_count = vec![0u64; ys.len()];
        for (i, &v) in value_of.iter().enumerate() {
            if xmask & (1 << i) != 0 {
                fiber_count[v] += 1;
            }
        }
        for ymask in 0u32..1 << ys.len() {
            // Y′ must contain the image of X′
            if (0..ys.len()).any(|j| fiber_count[j] > 0 && ymask & (1 << j) == 0) {
                skipped += 1;
                continue;
            }
            let counts: Vec<u64> = (0..ys.len())
                .filter(|j| ymask & (1 << j) != 0)
                .map(|j| fiber_count[j])
                .collect();
            let Some(&a) = counts.first() else {
                skipped += 1;
                continue;
            };
            if counts.iter().any(|&c| c != a) {
                skipped += 1;
                continue;
            }
            checked += 1;
            let x_size = u64::from(xmask.count_ones());
            let y_size = counts.len() as u64;
            let lhs = SemiringValue::from_nat(x_size, &mu.semiring);
            let rhs = SemiringValue::from_nat(a, &mu.semiring)
                .mul(&SemiringValue::from_nat(y_size, &mu.semiring))?;
            if lhs != rhs {
                return Ok(FubiniMapReport {
                    checked,
                    skipped,
                    counterexample: Some(format!(
                        "|X′|={x_size}, constant fiber {a} over |Y′|={y_size}"
                    )),
                });
            }
        }
    }
    Ok(FubiniMapReport {
        checked,
        skipped,
        counterexample: None,
    })
}

fn symbolic_fubini_map(
    f: &DefinableMap,
    mu: &MeasureAssignment,
    restrictions: &[(DefinableSet, DefinableSet)],
    opts: &ExtendOptions,
) -> Result<FubiniMapReport, EngineError> {
    let backend = mu.model();
    let mut checked = 0;
    let mut skipped = 0;
    for (xp, yp) in restrictions {
        if xp.arity != f.dom_arity || yp.arity != f.cod_arity {
            return Err(LogicError::Arity("restriction pair does not fit the map".into()).into());
        }
        let restricted = f.restrict_domain(&xp.intersect(&f.domain_set())?)?;
        // hypothesis 1: the restricted image stays inside Y′
        if !is_empty(&backend, &restricted.image_set().minus(yp)?)? {
            skipped += 1;
            continue;
        }
        // hypothesis 2: one fiber value across all of Y′
        let parts = param_level_sets(&restricted.transposed_family(), mu, opts)?;
        let mut constant: Option<SemiringValue> = None;
        for (a, part) in parts {
            if is_empty(&backend, &yp.minus(&part)?)? {
                constant = Some(a);
                break;
            }
        }
        let Some(a) = constant else {
            skipped += 1;
            continue;
        };
        checked += 1;
        let lhs = base_measure(&restricted.domain_set(), mu)?;
        let rhs = a.mul(&base_measure(yp, mu)?)?;
        if lhs != rhs {
            return Ok(FubiniMapReport {
                checked,
                skipped,
                counterexample: Some(format!(
                    "X′ = {}, Y′ = {}: {lhs:?} vs {a:?} ⊗ μY′ = {rhs:?}",
                    xp.phi.pretty(&f.graph.sig),
                    yp.phi.pretty(&f.graph.sig)
                )),
            });
        }
    }
    Ok(FubiniMapReport {
        checked,
        skipped,
        counterexample: None,
    })
}

// ---------------------------------------------------------------------------
// Witness independence and uniqueness
// ---------------------------------------------------------------------------

/// Outcome of [`check_witness_independence`].
#[derive(Debug, Clone, Serialize)]
pub struct WitnessReport {
    pub left: SemiringValue,
    pub right: SemiringValue,
    pub agree: bool,
}

/// Measures one set through two different fiberings and compares.  The
/// fiberings must present the same base set; each is validated by its own
/// extension run.
pub fn check_witness_independence(
    f: &Fibering,
    g: &Fibering,
    mu: &MeasureAssignment,
    opts: &ExtendOptions,
) -> Result<WitnessReport, EngineError> {
    let backend = mu.model();
    if !sets_equivalent(&backend, f.base(), g.base())? {
        let witness = backend
            .find_point(&f.base().minus(g.base())?)?
            .or(backend.find_point(&g.base().minus(f.base())?)?)
            .unwrap_or_default();
        return Err(EngineError::BaseMismatch(render_point(
            &witness,
            f.sig(),
        )));
    }
    let left = extend_with(f, mu, opts)?.value;
    let right = extend_with(g, mu, opts)?.value;
    Ok(WitnessReport {
        agree: left == right,
        left,
        right,
    })
}

/// Outcome of [`check_uniqueness`].
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub checked: usize,
    pub counterexample: Option<String>,
}

impl UniquenessReport {
    pub fn ok(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// The projection dropping the last coordinate, as a definable map on the
/// given set.
pub fn drop_last_projection(set: &DefinableSet) -> Result<DefinableMap, LogicError> {
    if set.arity == 0 {
        return Err(LogicError::Arity("cannot project a 0-ary set".into()));
    }
    let (n, keep) = (set.arity, set.arity - 1);
    let mut phi = set.phi.clone();
    for i in 1..=keep {
        phi = Formula::and(phi, Formula::vars_equal(set.sig.theory, i, n + i));
    }
    DefinableMap::new(
        DefinableSet::new(set.sig.clone(), n + keep, phi)?,
        n,
        keep,
        Some(set.clone()),
        None,
    )
}

/// Compares two assignments with the same value semiring on a corpus of
/// sets.  Arity-one sets are compared directly; on higher arities the two
/// assignments are pushed through the projection dropping the last
/// coordinate, so that agreement below forces agreement above.  Sets are
/// scanned in order of arity, which puts any arity-one disagreement first.
pub fn check_uniqueness(
    mu: &MeasureAssignment,
    nu: &MeasureAssignment,
    sets: &[DefinableSet],
    opts: &ExtendOptions,
) -> Result<UniquenessReport, EngineError> {
    if mu.semiring != nu.semiring {
        return Err(EngineError::MismatchedSemiring);
    }
    if mu.theory() != nu.theory() {
        return Err(EngineError::MismatchedBackend(format!(
            "{:?} vs {:?}",
            mu.theory(),
            nu.theory()
        )));
    }
    let mut by_arity: BTreeMap<usize, Vec<&DefinableSet>> = BTreeMap::new();
    for s in sets {
        by_arity.entry(s.arity).or_default().push(s);
    }
    let mut checked = 0;
    for (arity, group) in by_arity {
        for set in group {
            let (a, b) = if arity <= 1 {
                (base_measure(set, mu)?, base_measure(set, nu)?)
            } else {
                let proj = drop_last_projection(set)?;
                (
                    level_sets(&proj, mu, opts)?.total,
                    level_sets(&proj, nu, opts)?.total,
                )
            };
            if a != b {
                return Ok(UniquenessReport {
                    checked,
                    counterexample: Some(format!(
                        "arity {arity}: {} measures {a:?} under {} and {b:?} under {}",
                        set.phi.pretty(&set.sig),
                        mu.label(),
                        nu.label()
                    )),
                });
            }
            checked += 1;
        }
    }
    Ok(UniquenessReport {
        checked,
        counterexample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibering::combine;
    use crate::logic::Element;
    use crate::semiring::Trop;
    use num::BigRational;
    use std::collections::{BTreeMap as Map, BTreeSet as Set};

    fn qsig() -> Signature {
        Signature::ordered_qvs()
    }

    fn qset(arity: usize, text: &str) -> DefinableSet {
        DefinableSet::parse(&qsig(), arity, text).unwrap()
    }

    fn qmap(dom: usize, cod: usize, text: &str) -> DefinableMap {
        DefinableMap::new(qset(dom + cod, text), dom, cod, None, None).unwrap()
    }

    fn int(v: i64) -> SemiringValue {
        SemiringValue::int(v)
    }

    fn opts() -> ExtendOptions {
        ExtendOptions::default()
    }

    /// Five base points; `R` is the graph of a map with fibers of sizes
    /// 2 and 3 over the two designated points.
    fn fiveish() -> FiniteStructure {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut relations: Map<String, Set<Vec<String>>> = Map::new();
        relations.insert(
            "R".into(),
            [
                ["a", "a"],
                ["b", "a"],
                ["c", "b"],
                ["d", "b"],
                ["e", "b"],
            ]
            .iter()
            .map(|p| names(p))
            .collect(),
        );
        FiniteStructure::new(
            names(&["a", "b", "c", "d", "e"]),
            names(&["a", "b", "c", "d", "e"]),
            "a".into(),
            "b".into(),
            relations,
        )
        .unwrap()
    }

    #[test]
    fn base_measures_on_plain_sets() {
        let euler = MeasureAssignment::euler();
        let dim = MeasureAssignment::dimension();
        assert_eq!(
            base_measure(&DefinableSet::empty(qsig(), 2), &euler).unwrap(),
            int(0)
        );
        assert_eq!(base_measure(&qset(1, "x = 3"), &euler).unwrap(), int(1));
        assert_eq!(
            base_measure(&qset(1, "0 < x & x < 1"), &euler).unwrap(),
            int(-1)
        );
        assert_eq!(
            base_measure(&qset(1, "x = 3"), &dim).unwrap(),
            SemiringValue::trop(0)
        );
        assert_eq!(
            base_measure(&DefinableSet::empty(qsig(), 1), &dim).unwrap(),
            SemiringValue::trop_neg_inf()
        );
    }

    #[test]
    fn paired_measures_run_componentwise() {
        let both = pair_measure(&MeasureAssignment::euler(), &MeasureAssignment::dimension())
            .unwrap();
        let square = qset(2, "0 < x1 & x1 < 1 & 0 < x2 & x2 < 1");
        assert_eq!(
            base_measure(&square, &both).unwrap(),
            SemiringValue::pair(int(1), SemiringValue::trop(2))
        );
        assert_eq!(
            base_measure(&DefinableSet::empty(qsig(), 2), &both).unwrap(),
            SemiringValue::pair(int(0), SemiringValue::trop_neg_inf())
        );
        assert_eq!(
            base_measure(&qset(2, "x1 = 0 & x2 = 5"), &both).unwrap(),
            SemiringValue::pair(int(1), SemiringValue::trop(0))
        );
    }

    #[test]
    fn counting_requires_the_base_sort() {
        let s = fiveish();
        let sig = s.signature();
        let mu = MeasureAssignment::counting(s.clone());
        let all = DefinableSet::parse(&sig, 1, "base(x1)").unwrap();
        assert_eq!(
            base_measure(&all, &mu).unwrap(),
            SemiringValue::count(5)
        );
        // structures with universe = base leave nothing outside; shrink base
        let t = FiniteStructure::new(
            ["a", "b", "p"].iter().map(|s| s.to_string()).collect(),
            ["a", "b"].iter().map(|s| s.to_string()).collect(),
            "a".into(),
            "b".into(),
            Map::new(),
        )
        .unwrap();
        let tsig = t.signature();
        let nu = MeasureAssignment::counting(t);
        let everything = DefinableSet::full(tsig.clone(), 1);
        assert!(matches!(
            base_measure(&everything, &nu),
            Err(EngineError::NotInBase)
        ));
        let inside = DefinableSet::parse(&tsig, 1, "base(x1)").unwrap();
        assert_eq!(base_measure(&inside, &nu).unwrap(), SemiringValue::count(2));
    }

    #[test]
    fn morley_rank_measures_pure_sets() {
        let sig = Signature::pure_set(&["c0", "c1"]);
        let mu = MeasureAssignment::morley_rank();
        let plane = DefinableSet::full(sig.clone(), 2);
        assert_eq!(base_measure(&plane, &mu).unwrap(), SemiringValue::trop(2));
        let point = DefinableSet::parse(&sig, 1, "x = c0").unwrap();
        assert_eq!(base_measure(&point, &mu).unwrap(), SemiringValue::trop(0));
    }

    #[test]
    fn level_sets_of_a_projection_with_ray_fibers() {
        // fibers of the first-coordinate projection of {x2 < x1} are open
        // rays: one class of value −1 covering the whole line
        let f = qmap(2, 1, "x2 < x1 & x3 = x1");
        let report = level_sets(&f, &MeasureAssignment::euler(), &opts()).unwrap();
        assert_eq!(report.classes.len(), 1);
        assert_eq!(report.classes[0].a, int(-1));
        let ops = crate::semilinear::SemilinearOps;
        assert!(
            crate::logic::sets_equivalent(
                &ops,
                &report.classes[0].set,
                &DefinableSet::full(qsig(), 1)
            )
            .unwrap()
        );
        assert_eq!(report.classes[0].mu, int(-1));
        assert_eq!(report.total, int(1));
        // and the direct measure of the half plane agrees
        assert_eq!(
            base_measure(&qset(2, "x2 < x1"), &MeasureAssignment::euler()).unwrap(),
            int(1)
        );
    }

    #[test]
    fn level_sets_of_the_identity() {
        let f = qmap(1, 1, "0 < x1 & x1 < 1 & x2 = x1");
        let report = level_sets(&f, &MeasureAssignment::euler(), &opts()).unwrap();
        assert_eq!(report.classes.len(), 1);
        assert_eq!(report.classes[0].a, int(1));
        assert_eq!(report.classes[0].mu, int(-1));
        assert_eq!(report.total, int(-1));
    }

    #[test]
    fn finite_level_sets_split_by_fiber_size() {
        let s = fiveish();
        let sig = s.signature();
        let mu = MeasureAssignment::counting(s);
        let f = DefinableMap::new(
            DefinableSet::parse(&sig, 2, "R(x1, x2)").unwrap(),
            1,
            1,
            None,
            None,
        )
        .unwrap();
        let report = level_sets(&f, &mu, &opts()).unwrap();
        let values: Vec<SemiringValue> = report.classes.iter().map(|c| c.a.clone()).collect();
        assert_eq!(values, vec![SemiringValue::count(2), SemiringValue::count(3)]);
        assert_eq!(report.classes[0].mu, SemiringValue::count(1));
        assert_eq!(report.classes[1].mu, SemiringValue::count(1));
        assert_eq!(report.total, SemiringValue::count(5));
        assert_eq!(
            mu_f(&f.domain_set(), &f, &mu, &opts()).unwrap(),
            SemiringValue::count(5)
        );
    }

    #[test]
    fn mu_f_rejects_a_foreign_domain() {
        let f = qmap(1, 1, "0 < x1 & x2 = x1");
        let err = mu_f(&qset(1, "x < 0"), &f, &MeasureAssignment::euler(), &opts()).unwrap_err();
        assert!(matches!(err, EngineError::DomainMismatch(_)));
    }

    #[test]
    fn parametric_level_sets_over_an_interval_family() {
        // sections (0, p): value −1 exactly on p > 0, else the empty section
        let family = ParamFamily::new(qset(2, "0 < x2 & x2 < x1"), 1).unwrap();
        let parts = param_level_sets(&family, &MeasureAssignment::euler(), &opts()).unwrap();
        assert_eq!(parts.len(), 2);
        let ops = crate::semilinear::SemilinearOps;
        assert_eq!(parts[0].0, int(-1));
        assert!(
            crate::logic::sets_equivalent(&ops, &parts[0].1, &qset(1, "0 < x")).unwrap()
        );
        assert_eq!(parts[1].0, int(0));
        assert!(
            crate::logic::sets_equivalent(&ops, &parts[1].1, &qset(1, "x < 0 | x = 0")).unwrap()
        );
    }

    #[test]
    fn level_value_bound_is_enforced() {
        let s = fiveish();
        let sig = s.signature();
        let mu = MeasureAssignment::counting(s);
        let f = DefinableMap::new(
            DefinableSet::parse(&sig, 2, "R(x1, x2)").unwrap(),
            1,
            1,
            None,
            None,
        )
        .unwrap();
        let tight = ExtendOptions {
            max_levels: 1,
            ..opts()
        };
        // fiber sizes over all of M: 0, 2 and 3 — three values, bound 1
        assert!(matches!(
            level_sets(&f, &mu, &tight),
            Err(EngineError::TooManyValues(1))
        ));
    }

    /// The running two-step finite example: project the base square onto
    /// its first coordinate, then embed each slice.
    fn square_projection_fibering(sig: &Signature) -> Fibering {
        let base = DefinableSet::parse(sig, 2, "base(x1) & base(x2)").unwrap();
        let f1 = DefinableMap::new(
            DefinableSet::parse(sig, 3, "base(x1) & base(x2) & x3 = x1").unwrap(),
            2,
            1,
            None,
            None,
        )
        .unwrap();
        let f2 = DefinableMap::new(
            DefinableSet::parse(
                sig,
                6,
                "x1 = x2 & base(x3) & base(x4) & x5 = x3 & x6 = x4",
            )
            .unwrap(),
            4,
            2,
            None,
            None,
        )
        .unwrap();
        Fibering::new(base, vec![f1, f2], vec![1], vec![1, 2]).unwrap()
    }

    fn small_structure() -> FiniteStructure {
        FiniteStructure::new(
            ["a", "b", "c"].iter().map(|s| s.to_string()).collect(),
            ["a", "b"].iter().map(|s| s.to_string()).collect(),
            "a".into(),
            "b".into(),
            Map::new(),
        )
        .unwrap()
    }

    #[test]
    fn extension_counts_a_fibered_square() {
        let s = small_structure();
        let sig = s.signature();
        let fib = square_projection_fibering(&sig);
        let mu = MeasureAssignment::counting(s);
        let report = extend(&fib, &mu).unwrap();
        assert_eq!(report.value, SemiringValue::count(4));
        assert_eq!(report.grade, Grade::Exact);
        // one class: both levels have two-point fibers
        assert_eq!(report.levels.len(), 1);
        assert_eq!(report.levels[0].a, SemiringValue::count(2));
        assert_eq!(report.levels[0].mu, SemiringValue::count(2));
    }

    #[test]
    fn extension_without_memoization_agrees() {
        let s = small_structure();
        let sig = s.signature();
        let fib = square_projection_fibering(&sig);
        let mu = MeasureAssignment::counting(s);
        let plain = ExtendOptions {
            memoize: false,
            ..opts()
        };
        assert_eq!(
            extend(&fib, &mu).unwrap().value,
            extend_with(&fib, &mu, &plain).unwrap().value
        );
    }

    #[test]
    fn extension_of_an_embedding_is_the_image_measure() {
        let base = qset(1, "0 < x & x < 1");
        let graph = qmap(1, 2, "0 < x1 & x1 < 1 & x2 = x1 & x3 = 0");
        let fib = Fibering::new(base, vec![graph], vec![], vec![2]).unwrap();
        let report = extend(&fib, &MeasureAssignment::euler()).unwrap();
        assert_eq!(report.value, int(-1));
        assert_eq!(report.levels.len(), 1);
        assert_eq!(report.levels[0].a, int(1));
    }

    #[test]
    fn empty_fibering_measures_zero_without_a_backend() {
        let base = DefinableSet::new(qsig(), 1, Formula::False).unwrap();
        let graph = DefinableMap::new(
            DefinableSet::new(qsig(), 2, Formula::False).unwrap(),
            1,
            1,
            None,
            None,
        )
        .unwrap();
        let fib = Fibering::new(base, vec![graph], vec![], vec![1]).unwrap();
        let report = extend(&fib, &MeasureAssignment::euler()).unwrap();
        assert_eq!(report.value, int(0));
        assert!(report.levels.is_empty());
    }

    /// The running symbolic example: the plane minus one punctured axis
    /// pair, fibered over its second coordinate.  Fibers are a punctured
    /// line off the special level and a full line at it.
    fn punctured_fibering() -> Fibering {
        let base = qset(2, "(!(x2 = 0) & !(x1 = 0)) | x2 = 0");
        let f1 = DefinableMap::new(
            qset(3, "(((!(x2 = 0) & !(x1 = 0)) | x2 = 0)) & x3 = x2"),
            2,
            1,
            None,
            None,
        )
        .unwrap();
        let f2 = DefinableMap::new(
            qset(
                6,
                "x3 = x1 & ((!(x1 = 0) & !(x2 = 0)) | x1 = 0) & x5 = x2 & x6 = x4",
            ),
            4,
            2,
            None,
            None,
        )
        .unwrap();
        Fibering::new(base, vec![f1, f2], vec![1], vec![1, 2]).unwrap()
    }

    #[test]
    fn extension_measures_the_punctured_plane() {
        let fib = punctured_fibering();
        let euler = extend(&fib, &MeasureAssignment::euler()).unwrap();
        assert_eq!(euler.value, int(3));
        assert_eq!(euler.grade, Grade::Exact);
        let values: Vec<SemiringValue> = euler.levels.iter().map(|c| c.a.clone()).collect();
        assert_eq!(values, vec![int(-2), int(-1)]);
        let dim = extend(&fib, &MeasureAssignment::dimension()).unwrap();
        assert_eq!(dim.value, SemiringValue::trop(2));
        // and the direct measures of the base agree
        assert_eq!(
            base_measure(fib.base(), &MeasureAssignment::euler()).unwrap(),
            int(3)
        );
        assert_eq!(
            base_measure(fib.base(), &MeasureAssignment::dimension()).unwrap(),
            SemiringValue::trop(2)
        );
    }

    #[test]
    fn witness_independence_across_presentations() {
        let s = small_structure();
        let sig = s.signature();
        let by_first = square_projection_fibering(&sig);
        // same square fibered over the second coordinate instead
        let base = DefinableSet::parse(&sig, 2, "base(x1) & base(x2)").unwrap();
        let f1 = DefinableMap::new(
            DefinableSet::parse(&sig, 3, "base(x1) & base(x2) & x3 = x2").unwrap(),
            2,
            1,
            None,
            None,
        )
        .unwrap();
        let f2 = DefinableMap::new(
            DefinableSet::parse(
                &sig,
                6,
                "x3 = x1 & base(x2) & base(x4) & x5 = x2 & x6 = x4",
            )
            .unwrap(),
            4,
            2,
            None,
            None,
        )
        .unwrap();
        let by_second = Fibering::new(base, vec![f1, f2], vec![1], vec![1, 2]).unwrap();
        let mu = MeasureAssignment::counting(s);
        let report =
            check_witness_independence(&by_first, &by_second, &mu, &opts()).unwrap();
        assert!(report.agree, "{report:?}");
        assert_eq!(report.left, SemiringValue::count(4));
    }

    #[test]
    fn witness_independence_rejects_different_bases() {
        let s = small_structure();
        let sig = s.signature();
        let square = square_projection_fibering(&sig);
        let diagonal_base = DefinableSet::parse(&sig, 2, "base(x1) & x2 = x1").unwrap();
        let f1 = DefinableMap::new(
            DefinableSet::parse(&sig, 3, "base(x1) & x2 = x1 & x3 = x1").unwrap(),
            2,
            1,
            None,
            None,
        )
        .unwrap();
        let f2 = DefinableMap::new(
            DefinableSet::parse(
                &sig,
                6,
                "x1 = x2 & base(x3) & x4 = x3 & x5 = x3 & x6 = x4",
            )
            .unwrap(),
            4,
            2,
            None,
            None,
        )
        .unwrap();
        let diagonal = Fibering::new(diagonal_base, vec![f1, f2], vec![1], vec![1, 2]).unwrap();
        let mu = MeasureAssignment::counting(s);
        let err = check_witness_independence(&square, &diagonal, &mu, &opts()).unwrap_err();
        assert!(matches!(err, EngineError::BaseMismatch(_)));
    }

    fn semilinear_audit_corpus() -> AuditCorpus {
        let mut corpus = AuditCorpus::empty(qsig());
        corpus.sets = vec![
            qset(1, "0 < x & x < 1"),
            qset(1, "x = 0 | 1 < x"),
            qset(2, "x2 < x1"),
            qset(2, "x1 = x2 & 0 < x1"),
        ];
        corpus.singletons = vec![qset(1, "x = 2/3"), qset(2, "x1 = 0 & x2 = 1")];
        corpus.injections = vec![
            qmap(1, 1, "0 < x1 & x1 < 1 & x2 = x1 + 1"),
            qmap(1, 2, "x2 = x1 & x3 = x1"),
        ];
        corpus.maps = vec![
            qmap(2, 1, "x2 < x1 & x3 = x1"),
            qmap(1, 1, "0 < x1 & x1 < 2 & x2 = 1"),
        ];
        corpus.pairs = vec![
            (qset(1, "0 < x & x < 2"), qset(1, "x = 1")),
            (qset(1, "0 < x"), qset(1, "x < 1")),
            (qset(2, "x2 < x1"), qset(2, "x1 < x2 | x1 = x2")),
        ];
        corpus.cross_pairs = vec![
            (qset(1, "0 < x & x < 1"), qset(1, "x = 0 | x = 1")),
            (qset(1, "0 < x"), qset(2, "x2 < x1")),
        ];
        corpus
    }

    #[test]
    fn euler_passes_the_audit() {
        let report = check_fubini(
            &MeasureAssignment::euler(),
            &semilinear_audit_corpus(),
            &opts(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupt_euler_fails_additivity() {
        let report = check_fubini(
            &MeasureAssignment::corrupt_euler(),
            &semilinear_audit_corpus(),
            &opts(),
        )
        .unwrap();
        assert!(!report.passed());
        let broken: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.law.as_str())
            .collect();
        assert!(
            broken.contains(&"one-on-singletons") || broken.contains(&"disjoint-additivity"),
            "{broken:?}"
        );
    }

    #[test]
    fn squaring_profile_holds() {
        assert!(squaring_profile_check().pass);
    }

    #[test]
    fn fubini_map_exhausts_finite_restrictions() {
        let s = fiveish();
        let sig = s.signature();
        let mu = MeasureAssignment::counting(s);
        let f = DefinableMap::new(
            DefinableSet::parse(&sig, 2, "R(x1, x2)").unwrap(),
            1,
            1,
            None,
            None,
        )
        .unwrap();
        let report = check_fubini_map(&f, &mu, &[], &opts()).unwrap();
        assert!(report.ok(), "{report:?}");
        assert!(report.checked > 0);
    }

    #[test]
    fn fubini_map_checks_symbolic_restrictions() {
        // first-coordinate projection of the half plane below the diagonal
        let f = qmap(2, 1, "x2 < x1 & x3 = x1");
        let restrictions = vec![
            (qset(2, "x2 < x1"), qset(1, "true")),
            (qset(2, "x2 < x1 & 0 < x1"), qset(1, "0 < x")),
            // fibers over this target are empty below zero and intervals
            // above it: not constant, so skipped rather than failed
            (qset(2, "x2 < x1 & 0 < x2"), qset(1, "true")),
        ];
        let report =
            check_fubini_map(&f, &MeasureAssignment::euler(), &restrictions, &opts()).unwrap();
        assert!(report.ok(), "{report:?}");
        assert_eq!(report.checked, 2);
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn uniqueness_accepts_an_assignment_against_itself() {
        let sets = vec![
            qset(1, "0 < x & x < 1"),
            qset(2, "x2 < x1"),
            qset(2, "x1 = x2"),
        ];
        let report = check_uniqueness(
            &MeasureAssignment::euler(),
            &MeasureAssignment::euler(),
            &sets,
            &opts(),
        )
        .unwrap();
        assert!(report.ok());
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn uniqueness_reports_the_lowest_arity_disagreement_first() {
        let sets = vec![
            qset(2, "x1 = x2"),
            qset(1, "x = 4"),
        ];
        let report = check_uniqueness(
            &MeasureAssignment::euler(),
            &MeasureAssignment::corrupt_euler(),
            &sets,
            &opts(),
        )
        .unwrap();
        let witness = report.counterexample.expect("the corrupt variant differs");
        assert!(witness.starts_with("arity 1"), "{witness}");
    }

    #[test]
    fn uniqueness_rejects_mismatched_semirings() {
        let err = check_uniqueness(
            &MeasureAssignment::euler(),
            &MeasureAssignment::dimension(),
            &[],
            &opts(),
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::MismatchedSemiring));
    }

    #[test]
    fn composition_of_maps_is_a_map() {
        let f = qmap(1, 1, "x2 = x1 + 1");
        let g = qmap(1, 1, "x2 = x1 + 1");
        let gf = compose_maps(&f, &g).unwrap();
        let family = gf.transposed_family();
        let two = vec![Element::Rat(BigRational::from_integer(2.into()))];
        let fiber = family.section(&two).unwrap();
        let ops = crate::semilinear::SemilinearOps;
        assert!(
            crate::logic::sets_equivalent(&ops, &fiber, &qset(1, "x = 0")).unwrap()
        );
    }

    #[test]
    fn restricted_fiberings_add_up() {
        let s = small_structure();
        let sig = s.signature();
        let fib = square_projection_fibering(&sig);
        let mu = MeasureAssignment::counting(s);
        let backend = mu.model();
        let left = DefinableSet::parse(&sig, 2, "base(x1) & base(x2) & x1 = c0").unwrap();
        let right = DefinableSet::parse(&sig, 2, "base(x1) & base(x2) & !(x1 = c0)").unwrap();
        let f_left = fib.restrict(&backend, &left).unwrap();
        let f_right = fib.restrict(&backend, &right).unwrap();
        let a = extend(&f_left, &mu).unwrap().value;
        let b = extend(&f_right, &mu).unwrap().value;
        let whole = extend(&fib, &mu).unwrap().value;
        assert_eq!(a.add(&b).unwrap(), whole);
    }

    #[test]
    fn combined_embeddings_measure_the_union() {
        let s = small_structure();
        let sig = s.signature();
        let mu = MeasureAssignment::counting(s);
        let backend = mu.model();
        let embed = |text: &str| {
            let base = DefinableSet::parse(&sig, 1, text).unwrap();
            let graph = DefinableSet::parse(&sig, 2, &format!("{text} & x2 = x1")).unwrap();
            let f1 = DefinableMap::new(graph, 1, 1, None, None).unwrap();
            Fibering::new(base, vec![f1], vec![], vec![1]).unwrap()
        };
        // overlapping one- and two-point subsets of the base sort
        let f0 = embed("x1 = c0");
        let f1 = embed("base(x1)");
        let joined = combine(&backend, &f0, &f1, None).unwrap();
        assert_eq!(
            extend(&joined, &mu).unwrap().value,
            SemiringValue::count(2)
        );
    }

    #[test]
    fn tropical_arithmetic_in_reports() {
        // dimension of a two-class family: the total is the tropical sum
        let f = qmap(2, 1, "x2 < x1 & x3 = x1");
        let report = level_sets(&f, &MeasureAssignment::dimension(), &opts()).unwrap();
        assert_eq!(report.classes.len(), 1);
        assert_eq!(
            report.classes[0].a,
            SemiringValue::Trop(Trop::Nat(1u32.into()))
        );
        assert_eq!(report.total, SemiringValue::trop(2));
    }
}
