//! r-step fiberings: witness structures that present a definable set
//! through iterated definable families whose innermost pieces embed into
//! powers of the base sort.
//!
//! A fibering of `X ⊆ M^m` records maps `f₁..f_{r+1}` together with arity
//! vectors `(m₁..m_r; n₁..n_{r+1})`.  For `r = 0` the single map injects
//! `X` into `C^{n₁}`.  For `r ≥ 1`, `f₁ : X → M^{n₁}` and, for every value
//! `y` of `f₁`, some parameter `x ∈ M^{m₁}` turns the later maps, with `x`
//! pinned, into an `(r−1)`-step fibering of `f₁⁻¹(y) × f₁(X) ⊆ M^{m+n₁}`.
//! The parameter prefixes keep the whole witness uniformly definable,
//! which is what the measure extension engine consumes.
//!
//! The module provides [`Fibering::validate`] (exhaustive on the finite
//! backend, exact through quantifier elimination at small depth on the
//! symbolic ones, sampled beyond that), [`Fibering::restrict`] to a
//! definable subset, and [`combine`]/[`n_ary_combine`] for merging
//! fiberings of several sets into one fibering of their union.

use std::collections::BTreeMap;

use num::rational::BigRational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::{diagrams, FiniteStructure, PureSetOps};
use crate::logic::{
    base_power, render_point, validate_map, ConstValue, DefinableMap, DefinableSet, Element,
    Formula, LogicError, MapError, ModelOps, ParamFamily, Point, Repl, Signature, Theory, Var,
};
use crate::semilinear::{self, SemilinearOps};

/// How many seeded sample levels are added on top of the deterministic
/// representatives when validating beyond the exactly decidable depth.
const EXTRA_SAMPLES: usize = 16;

/// Backend selector: the concrete finite structure, or one of the two
/// symbolic reference models.  Implements [`ModelOps`] by dispatch, so the
/// calculus below never branches on the theory except where the decision
/// procedure genuinely differs.
#[derive(Debug, Clone, Copy)]
pub enum Backend<'a> {
    Finite(&'a FiniteStructure),
    Semilinear,
    PureSet,
}

impl ModelOps for Backend<'_> {
    fn theory(&self) -> Theory {
        match self {
            Backend::Finite(_) => Theory::Finite,
            Backend::Semilinear => Theory::OrderedQvs,
            Backend::PureSet => Theory::PureSet,
        }
    }

    fn decide(&self, sig: &Signature, sentence: &Formula) -> Result<bool, LogicError> {
        match self {
            Backend::Finite(s) => s.decide(sig, sentence),
            Backend::Semilinear => SemilinearOps.decide(sig, sentence),
            Backend::PureSet => PureSetOps.decide(sig, sentence),
        }
    }

    fn find_point(&self, set: &DefinableSet) -> Result<Option<Point>, LogicError> {
        match self {
            Backend::Finite(s) => s.find_point(set),
            Backend::Semilinear => SemilinearOps.find_point(set),
            Backend::PureSet => PureSetOps.find_point(set),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FiberingError {
    #[error("malformed fibering: {0}")]
    Shape(String),
    #[error("ambient arity mismatch: {0}")]
    AmbientMismatch(String),
    #[error("step-0 map is not injective: {0}")]
    NotInjective(String),
    #[error("step-0 image leaves the base power at {0}")]
    ImageEscapesBase(String),
    #[error("first map's domain disagrees with the base at {0}")]
    DomainMismatch(String),
    #[error("no parameter fibers the level {0}")]
    NoParameterForFiber(String),
    #[error("cannot certify a {r}-step fibering over {theory:?} without a sampling seed")]
    UnsupportedDepth { theory: Theory, r: usize },
    #[error("restriction target is not a subset of the base: {0} escapes")]
    NotASubset(String),
    #[error("nothing to combine")]
    EmptyCombine,
    #[error("signature lacks the designated constants c0, c1")]
    MissingDesignatedConstants,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

/// How strong a certificate [`Fibering::validate`] produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ValidationGrade {
    /// Every defining condition was decided exactly.
    Valid,
    /// Structural conditions decided exactly, but the per-level witness
    /// condition was only checked at representative and seeded sample
    /// levels.  Never upgraded to [`ValidationGrade::Valid`].
    SampledValid,
}

/// An r-step fibering presentation of `base ⊆ M^m`.
///
/// Maps are stored graph-only: every [`DefinableMap`] carries `dom: None`
/// (the domain is whatever the graph projects to) and a trivial codomain,
/// so the serialized form stays a bare list of graph formulas and the
/// domain bookkeeping cannot drift from the graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fibering {
    r: usize,
    m: usize,
    m_list: Vec<usize>,
    n_list: Vec<usize>,
    base: DefinableSet,
    maps: Vec<DefinableMap>,
}

/// Serialized form of a fibering: explicit step count and arity vectors
/// plus formula strings.  Nothing is inferred when reading back; a spec
/// whose declared arities disagree with its formulas is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberingSpec {
    pub r: usize,
    pub m: usize,
    pub m_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub base: String,
    pub maps: Vec<String>,
}

impl Fibering {
    pub fn new(
        base: DefinableSet,
        maps: Vec<DefinableMap>,
        m_list: Vec<usize>,
        n_list: Vec<usize>,
    ) -> Result<Fibering, FiberingError> {
        if maps.is_empty() {
            return Err(FiberingError::Shape("a fibering needs at least one map".into()));
        }
        let r = maps.len() - 1;
        if m_list.len() != r {
            return Err(FiberingError::Shape(format!(
                "{} maps need {r} parameter arities, got {}",
                maps.len(),
                m_list.len()
            )));
        }
        if n_list.len() != r + 1 {
            return Err(FiberingError::Shape(format!(
                "{} maps need {} target arities, got {}",
                maps.len(),
                r + 1,
                n_list.len()
            )));
        }
        let m = base.arity;
        let f = Fibering {
            r,
            m,
            m_list,
            n_list,
            base,
            maps,
        };
        f.check_shape()?;
        Ok(f)
    }

    pub fn from_spec(sig: &Signature, spec: &FiberingSpec) -> Result<Fibering, FiberingError> {
        if spec.maps.len() != spec.r + 1
            || spec.m_list.len() != spec.r
            || spec.n_list.len() != spec.r + 1
        {
            return Err(FiberingError::Shape(format!(
                "declared r = {} disagrees with {} maps, {} parameter arities, {} target arities",
                spec.r,
                spec.maps.len(),
                spec.m_list.len(),
                spec.n_list.len()
            )));
        }
        let base = DefinableSet::parse(sig, spec.m, &spec.base)?;
        let mut maps = Vec::with_capacity(spec.maps.len());
        let mut params = 0;
        let mut ambient = spec.m;
        for (j, text) in spec.maps.iter().enumerate() {
            let dom = params + ambient;
            let cod = spec.n_list[j];
            let graph = DefinableSet::parse(sig, dom + cod, text)?;
            maps.push(DefinableMap::new(graph, dom, cod, None, None)?);
            if j < spec.r {
                params += spec.m_list[j];
                ambient += spec.n_list[j];
            }
        }
        Fibering::new(base, maps, spec.m_list.clone(), spec.n_list.clone())
    }

    pub fn to_spec(&self) -> FiberingSpec {
        let sig = self.sig();
        FiberingSpec {
            r: self.r,
            m: self.m,
            m_list: self.m_list.clone(),
            n_list: self.n_list.clone(),
            base: self.base.phi.pretty(sig),
            maps: self.maps.iter().map(|f| f.graph.phi.pretty(sig)).collect(),
        }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Ambient arity of the base: `base ⊆ M^m`.
    pub fn ambient(&self) -> usize {
        self.m
    }

    pub fn m_list(&self) -> &[usize] {
        &self.m_list
    }

    pub fn n_list(&self) -> &[usize] {
        &self.n_list
    }

    pub fn base(&self) -> &DefinableSet {
        &self.base
    }

    pub fn maps(&self) -> &[DefinableMap] {
        &self.maps
    }

    pub fn sig(&self) -> &Signature {
        &self.base.sig
    }

    /// Sum of the parameter arities consumed before map `j` (1-based).
    fn param_prefix(&self, j: usize) -> usize {
        self.m_list[..j - 1].iter().sum()
    }

    /// Ambient arity of the sets map `j` fibers: `m + n₁ + … + n_{j−1}`.
    fn stage_arity(&self, j: usize) -> usize {
        self.m + self.n_list[..j - 1].iter().sum::<usize>()
    }

    fn check_shape(&self) -> Result<(), FiberingError> {
        for (j, f) in self.maps.iter().enumerate() {
            let j1 = j + 1;
            if f.graph.sig != self.base.sig {
                return Err(FiberingError::Logic(LogicError::SignatureMismatch));
            }
            if f.dom.is_some() || f.cod.phi != Formula::True {
                return Err(FiberingError::Shape(format!(
                    "map {j1} must be presented graph-only"
                )));
            }
            let want = self.param_prefix(j1) + self.stage_arity(j1);
            if f.dom_arity != want {
                return Err(FiberingError::Shape(format!(
                    "map {j1} has domain arity {}, expected {want}",
                    f.dom_arity
                )));
            }
            if f.cod_arity != self.n_list[j] {
                return Err(FiberingError::Shape(format!(
                    "map {j1} has target arity {}, expected {}",
                    f.cod_arity, self.n_list[j]
                )));
            }
        }
        Ok(())
    }

    /// The `(r−1)`-step fibering obtained by pinning the first parameter
    /// block to `x` and fixing the level `y` of the first map: the base
    /// becomes `f₁⁻¹(y) × f₁(X)` and the later maps lose their leading
    /// parameter block.
    pub fn slice(&self, x: &[Element], y: &[Element]) -> Result<Fibering, FiberingError> {
        if self.r == 0 {
            return Err(FiberingError::Shape("a 0-step fibering has no slices".into()));
        }
        let (m1, n1) = (self.m_list[0], self.n_list[0]);
        if x.len() != m1 || y.len() != n1 {
            return Err(FiberingError::Shape(format!(
                "slice wants parameter/level arities {m1}/{n1}, got {}/{}",
                x.len(),
                y.len()
            )));
        }
        let fiber = self.maps[0].transposed_family().section(y)?;
        let image = self.maps[0].image_set();
        let base = fiber.product(&image)?;
        let mut maps = Vec::with_capacity(self.r);
        for f in &self.maps[1..] {
            let graph = ParamFamily::new(f.graph.clone(), m1)?.section(x)?;
            maps.push(DefinableMap::new(graph, f.dom_arity - m1, f.cod_arity, None, None)?);
        }
        Fibering::new(base, maps, self.m_list[1..].to_vec(), self.n_list[1..].to_vec())
    }

    // ---- validation --------------------------------------------------------

    /// Checks the defining conditions.
    ///
    /// The finite backend decides everything by enumeration.  The symbolic
    /// backends decide depths `r ≤ 2` exactly through quantifier
    /// elimination; beyond that the structural conditions are still decided
    /// exactly but the per-level witness condition is checked only at
    /// representative and seeded sample levels, and the answer is graded
    /// [`ValidationGrade::SampledValid`].  A missing seed at such depth is
    /// refused with [`FiberingError::UnsupportedDepth`] rather than passed.
    pub fn validate(
        &self,
        backend: &Backend,
        seed: Option<u64>,
    ) -> Result<ValidationGrade, FiberingError> {
        self.validate_with_family(backend, seed).map(|(g, _)| g)
    }

    /// [`Fibering::validate`], additionally handing back the symbolic
    /// good-parameter family when the check computed one, so measurement
    /// straight after validation does not repeat its most expensive step.
    pub(crate) fn validate_with_family(
        &self,
        backend: &Backend,
        seed: Option<u64>,
    ) -> Result<(ValidationGrade, Option<DefinableSet>), FiberingError> {
        self.check_shape()?;
        for f in &self.maps {
            validate_map(backend, f)?;
        }
        let sig = self.sig();
        let dom = self.maps[0].domain_set();
        if let Some(p) = backend.find_point(&dom.minus(&self.base)?)? {
            return Err(FiberingError::DomainMismatch(render_point(&p, sig)));
        }
        if let Some(p) = backend.find_point(&self.base.minus(&dom)?)? {
            return Err(FiberingError::DomainMismatch(render_point(&p, sig)));
        }
        if self.r == 0 {
            self.validate_injection(backend)?;
            return Ok((ValidationGrade::Valid, None));
        }
        match backend {
            Backend::Finite(s) => Ok((self.validate_finite(backend, s)?, None)),
            _ if self.r <= 2 => Ok((
                ValidationGrade::Valid,
                Some(self.symbolic_family(backend)?),
            )),
            _ => Ok((self.validate_sampled(backend, seed)?, None)),
        }
    }

    /// Step-0 conditions: the single map embeds the base into `C^{n₁}`.
    fn validate_injection(&self, backend: &Backend) -> Result<(), FiberingError> {
        let sig = self.sig();
        let f1 = &self.maps[0];
        let (d, n) = (f1.dom_arity, f1.cod_arity);
        let g = &f1.graph.phi;
        // two domain copies sharing a value: g(u,v) ∧ g(u',v) ∧ u ≠ u'
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
            Formula::and(relocate(g, &left)?, relocate(g, &right)?),
            differ,
        );
        let bad = DefinableSet::new(sig.clone(), 2 * d + n, bad)?;
        if let Some(p) = backend.find_point(&bad)? {
            return Err(FiberingError::NotInjective(format!(
                "{} and {} share a value",
                render_point(&p[..d], sig),
                render_point(&p[d..2 * d], sig)
            )));
        }
        let escaped = f1.image_set().minus(&base_power(sig, n))?;
        if let Some(p) = backend.find_point(&escaped)? {
            return Err(FiberingError::ImageEscapesBase(render_point(&p, sig)));
        }
        Ok(())
    }

    /// Enumerates every level and searches the parameter space for a
    /// witness whose slice validates recursively.
    fn validate_finite(
        &self,
        backend: &Backend,
        s: &FiniteStructure,
    ) -> Result<ValidationGrade, FiberingError> {
        let sig = self.sig();
        let levels = s.enumerate(&self.maps[0].image_set())?;
        let params = s.enumerate(&DefinableSet::full(sig.clone(), self.m_list[0]))?;
        'levels: for y in &levels {
            for x in &params {
                let slice = self.slice(x, y)?;
                if slice.validate(backend, None).is_ok() {
                    continue 'levels;
                }
            }
            return Err(FiberingError::NoParameterForFiber(render_point(y, sig)));
        }
        Ok(ValidationGrade::Valid)
    }

    /// Exact symbolic check at small depth: the good-parameter family is
    /// definable, and levels in the image that its projection misses are
    /// exactly the counterexamples to the step condition.  The family is
    /// returned so a measurement right after validation can reuse it.
    pub(crate) fn symbolic_family(
        &self,
        backend: &Backend,
    ) -> Result<DefinableSet, FiberingError> {
        let sig = self.sig();
        let n1 = self.n_list[0];
        let family = self.good_parameter_family(backend)?;
        let bad = self
            .maps[0]
            .image_set()
            .minus(&family.project_onto_prefix(n1))?;
        if let Some(p) = backend.find_point(&bad)? {
            return Err(FiberingError::NoParameterForFiber(render_point(&p, sig)));
        }
        Ok(family)
    }

    /// Sampled symbolic check beyond the exactly decidable depth: the
    /// witness condition is verified exactly at each sampled level, but
    /// level coverage is only representative, so the grade caps at
    /// [`ValidationGrade::SampledValid`].
    fn validate_sampled(
        &self,
        backend: &Backend,
        seed: Option<u64>,
    ) -> Result<ValidationGrade, FiberingError> {
        let Some(seed) = seed else {
            return Err(FiberingError::UnsupportedDepth {
                theory: backend.theory(),
                r: self.r,
            });
        };
        let sig = self.sig();
        let levels = representative_points(backend, &self.maps[0].image_set(), seed)?;
        let family = self.good_parameter_family(backend)?;
        let n1 = self.n_list[0];
        for y in &levels {
            let good = ParamFamily::new(family.clone(), n1)?.section(y)?;
            if backend.find_point(&good)?.is_none() {
                return Err(FiberingError::NoParameterForFiber(render_point(y, sig)));
            }
        }
        Ok(ValidationGrade::SampledValid)
    }

    /// `{(ȳ, x̄) : ȳ ∈ f₁(X) and x̄ fibers the level ȳ}`, levels first, so
    /// sections at a concrete level are the good parameter sets.
    pub(crate) fn good_parameter_family(
        &self,
        backend: &Backend,
    ) -> Result<DefinableSet, FiberingError> {
        let sig = self.sig();
        let (n1, m1) = (self.n_list[0], self.m_list[0]);
        let root = SymSlice::root(self);
        let mut alloc = self.allocator();
        let y = alloc.take(n1);
        let x = alloc.take(m1);
        let im = norm_formula(backend, sig, root.image_at(&y, &mut alloc)?)?;
        let sub = root.child(&x, &y, &mut alloc)?;
        let good = sub.validity(&mut alloc, backend)?;
        let order: Vec<Var> = y.iter().chain(x.iter()).copied().collect();
        let phi = pull_down(&Formula::and(im, good), &order)?;
        Ok(DefinableSet::new(sig.clone(), n1 + m1, phi)?)
    }

    /// Fresh-variable allocator starting above every index the fibering's
    /// formulas and arities touch.
    fn allocator(&self) -> Alloc {
        let mut high = self.base.phi.max_var().max(self.base.arity);
        for f in &self.maps {
            high = high.max(f.graph.phi.max_var()).max(f.graph.arity);
        }
        Alloc(high)
    }

    // ---- restriction -------------------------------------------------------

    /// Restricts the fibering to a definable subset of its base.
    ///
    /// The first map keeps its graph intersected with the new base; each
    /// later map is additionally confined, on each segment of its ambient
    /// block, to the image of the previous restricted stage.  At parameters
    /// that fiber a surviving level this reproduces the recursive
    /// restriction of the slice; at parameters that never fibered anything
    /// the leftover domains are harmless junk, since validity and
    /// measurement only ever consult witnessing parameters.
    pub fn restrict(
        &self,
        backend: &Backend,
        sub: &DefinableSet,
    ) -> Result<Fibering, FiberingError> {
        let sig = self.sig();
        if sub.sig != *sig {
            return Err(FiberingError::Logic(LogicError::SignatureMismatch));
        }
        if sub.arity != self.m {
            return Err(FiberingError::AmbientMismatch(format!(
                "restriction target has arity {}, the base has {}",
                sub.arity, self.m
            )));
        }
        if let Some(p) = backend.find_point(&sub.minus(&self.base)?)? {
            return Err(FiberingError::NotASubset(render_point(&p, sig)));
        }
        let mut maps = Vec::with_capacity(self.maps.len());
        let g1 = Formula::and(self.maps[0].graph.phi.clone(), sub.phi.clone());
        let g1 = normalize_graph(backend, DefinableSet::new(sig.clone(), self.m + self.n_list[0], g1)?)?;
        maps.push(DefinableMap::new(g1, self.m, self.n_list[0], None, None)?);
        let image = maps[0].image_set();
        // zones[k−2] = image of the restricted stage-k map with its
        // parameter prefix kept: what the `n_k` ambient segments of deeper
        // maps must fall into
        let mut zones: Vec<DefinableSet> = Vec::new();
        for j in 2..=self.r + 1 {
            let f = &self.maps[j - 1];
            let pp = self.param_prefix(j);
            let mut phi = f.graph.phi.clone();
            phi = Formula::and(phi, sub.phi.shift_vars(pp));
            phi = Formula::and(phi, image.phi.shift_vars(pp + self.m));
            for k in 2..j {
                let zone = &zones[k - 2];
                let pk = self.param_prefix(k);
                let nk = self.n_list[k - 1];
                let at = pp + self.m + self.n_list[..k - 1].iter().sum::<usize>();
                let subst: BTreeMap<Var, Repl> =
                    (1..=nk).map(|i| (pk + i, Repl::Var(at + i))).collect();
                phi = Formula::and(phi, zone.phi.substitute(&subst)?);
            }
            let graph =
                normalize_graph(backend, DefinableSet::new(sig.clone(), f.graph.arity, phi)?)?;
            let map = DefinableMap::new(graph, f.dom_arity, f.cod_arity, None, None)?;
            if j <= self.r {
                zones.push(param_image(&map, pp, self.n_list[j - 1]));
            }
            maps.push(map);
        }
        Fibering::new(sub.clone(), maps, self.m_list.clone(), self.n_list.clone())
    }

    // ---- padding (for `combine`) -------------------------------------------

    /// Widens the arity vectors to `m_hat`/`n_hat`, pinning every inserted
    /// coordinate to `c0` except the last inserted coordinate of each
    /// `n₁`-derived block, which is pinned to the given tag constant so
    /// that images of differently tagged fiberings cannot meet.
    fn pad(&self, m_hat: &[usize], n_hat: &[usize], tag_idx: usize) -> Result<Fibering, FiberingError> {
        let sig = self.sig();
        let c0 = sig.c0();
        let mut maps = Vec::with_capacity(self.maps.len());
        for j in 1..=self.r + 1 {
            let f = &self.maps[j - 1];
            // (old width, new width, carries the image tag)
            let mut blocks: Vec<(usize, usize, bool)> = Vec::new();
            for k in 1..j {
                blocks.push((self.m_list[k - 1], m_hat[k - 1], false));
            }
            blocks.push((self.m, self.m, false));
            for k in 1..j {
                blocks.push((self.n_list[k - 1], n_hat[k - 1], k == 1));
            }
            blocks.push((self.n_list[j - 1], n_hat[j - 1], j == 1));
            let mut subst: BTreeMap<Var, Repl> = BTreeMap::new();
            let mut pins = Vec::new();
            let (mut old_pos, mut new_pos) = (0usize, 0usize);
            for &(w_old, w_new, tagged) in &blocks {
                for i in 1..=w_old {
                    if old_pos + i != new_pos + i {
                        subst.insert(old_pos + i, Repl::Var(new_pos + i));
                    }
                }
                for i in w_old + 1..=w_new {
                    let idx = if tagged && i == w_new { tag_idx } else { c0 };
                    pins.push(pin_formula(sig, new_pos + i, idx)?);
                }
                old_pos += w_old;
                new_pos += w_new;
            }
            let phi = Formula::and(f.graph.phi.substitute(&subst)?, Formula::conjoin_all(pins));
            let graph = DefinableSet::new(sig.clone(), new_pos, phi)?;
            let cod = n_hat[j - 1];
            maps.push(DefinableMap::new(graph, new_pos - cod, cod, None, None)?);
        }
        Fibering::new(self.base.clone(), maps, m_hat.to_vec(), n_hat.to_vec())
    }
}

/// Merges two fiberings of the same step count into one fibering of the
/// union of their bases: the second is first cut down to its share of the
/// union, arities are padded to agree (with a fresh tag coordinate keeping
/// the two images apart), the first maps' graphs are united, and for
/// `r ≥ 1` the later maps gain a leading c0/c1 coordinate selecting which
/// constituent's parameters they read.
///
/// The result is validated before it is returned, so a combination whose
/// slices cannot satisfy the step condition — which happens whenever both
/// constituents contribute levels at `r ≥ 1`, since each slice only covers
/// its own constituent's share of the united image — is reported as the
/// validation error instead of being handed back unsound.
pub fn combine(
    backend: &Backend,
    f0: &Fibering,
    f1: &Fibering,
    seed: Option<u64>,
) -> Result<Fibering, FiberingError> {
    if f0.r != f1.r {
        return Err(FiberingError::Shape(format!(
            "cannot combine a {}-step with a {}-step fibering",
            f0.r, f1.r
        )));
    }
    if f0.m != f1.m {
        return Err(FiberingError::AmbientMismatch(format!(
            "{} vs {}",
            f0.m, f1.m
        )));
    }
    let sig = f0.sig();
    if f1.sig() != sig {
        return Err(FiberingError::Logic(LogicError::SignatureMismatch));
    }
    if sig.const_index("c0").is_none() || sig.const_index("c1").is_none() {
        return Err(FiberingError::MissingDesignatedConstants);
    }
    let r = f0.r;
    let residue = f1.base.minus(&f0.base)?;
    let f1d = f1.restrict(backend, &residue)?;
    let m_hat: Vec<usize> = (0..r).map(|k| f0.m_list[k].max(f1.m_list[k])).collect();
    let mut n_hat: Vec<usize> = (0..=r).map(|k| f0.n_list[k].max(f1.n_list[k])).collect();
    n_hat[0] += 1; // room for the image tag
    let p0 = f0.pad(&m_hat, &n_hat, sig.c0())?;
    let p1 = f1d.pad(&m_hat, &n_hat, sig.c1())?;
    let base = f0.base.union(&f1.base)?;
    let g1 = p0.maps[0].graph.union(&p1.maps[0].graph)?;
    let first = DefinableMap::new(g1, f0.m, n_hat[0], None, None)?;
    let result = if r == 0 {
        Fibering::new(base, vec![first], vec![], n_hat)?
    } else {
        let mut m_list = m_hat;
        m_list[0] += 1; // the selector joins the first parameter block
        let mut maps = vec![first];
        for j in 2..=r + 1 {
            let a = Formula::and(
                pin_formula(sig, 1, sig.c0())?,
                p0.maps[j - 1].graph.phi.shift_vars(1),
            );
            let b = Formula::and(
                pin_formula(sig, 1, sig.c1())?,
                p1.maps[j - 1].graph.phi.shift_vars(1),
            );
            let arity = p0.maps[j - 1].graph.arity + 1;
            let graph = DefinableSet::new(sig.clone(), arity, Formula::or(a, b))?;
            let cod = n_hat[j - 1];
            maps.push(DefinableMap::new(graph, arity - cod, cod, None, None)?);
        }
        Fibering::new(base, maps, m_list, n_hat)?
    };
    result.validate(backend, seed)?;
    Ok(result)
}

/// Left fold of [`combine`] over a nonempty list.
pub fn n_ary_combine(
    backend: &Backend,
    items: &[Fibering],
    seed: Option<u64>,
) -> Result<Fibering, FiberingError> {
    let (first, rest) = items.split_first().ok_or(FiberingError::EmptyCombine)?;
    let mut acc = first.clone();
    for f in rest {
        acc = combine(backend, &acc, f, seed)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Moves the free coordinates `1..=targets.len()` of a set formula to the
/// given positions (which must be pairwise distinct).  Capture-avoiding;
/// bound variables are untouched.
pub(crate) fn relocate(phi: &Formula, targets: &[Var]) -> Result<Formula, LogicError> {
    let subst: BTreeMap<Var, Repl> = targets
        .iter()
        .enumerate()
        .filter(|&(i, &t)| t != i + 1)
        .map(|(i, &t)| (i + 1, Repl::Var(t)))
        .collect();
    phi.substitute(&subst)
}

/// Renames the given free variables to `1..=vars.len()`, in order.
fn pull_down(phi: &Formula, vars: &[Var]) -> Result<Formula, LogicError> {
    let subst: BTreeMap<Var, Repl> = vars
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, Repl::Var(i + 1)))
        .collect();
    phi.substitute(&subst)
}

fn implies(a: Formula, b: Formula) -> Formula {
    Formula::or(Formula::not(a), b)
}

fn iff(a: Formula, b: Formula) -> Formula {
    Formula::and(
        implies(a.clone(), b.clone()),
        implies(b, a),
    )
}

/// The element a declared constant denotes.
fn const_element(sig: &Signature, idx: usize) -> Result<Element, LogicError> {
    match sig.const_value(idx) {
        Some(ConstValue::Rat(q)) => Ok(Element::Rat(q.clone())),
        Some(ConstValue::Sym(id)) => Ok(Element::Sym(*id)),
        Some(ConstValue::Elem(e)) => Ok(Element::Fin(e.clone())),
        None => Err(LogicError::Sort(format!("constant {idx} is not declared"))),
    }
}

/// `x_v = <constant>` in the signature's theory.
fn pin_formula(sig: &Signature, v: Var, const_idx: usize) -> Result<Formula, LogicError> {
    let e = const_element(sig, const_idx)?;
    Formula::var_equals_element(sig, v, &e)
}

/// Quantifier-eliminates a graph formula on the symbolic backends so that
/// restricted fiberings stay readable; the finite backend keeps the raw
/// conjunctions, whose quantifiers its evaluator sweeps directly.
fn normalize_graph(backend: &Backend, set: DefinableSet) -> Result<DefinableSet, LogicError> {
    let phi = norm_formula(backend, &set.sig, set.phi.clone())?;
    DefinableSet::new(set.sig, set.arity, phi)
}

/// Eliminates quantifiers per backend.  The symbolic validity conditions
/// are assembled from alternating blocks; normalizing each block as it is
/// closed keeps every elimination working on a quantifier-free matrix,
/// which is what makes the exact small-depth validation affordable.  The
/// finite backend decides by enumeration and keeps formulas raw.
fn norm_formula(backend: &Backend, sig: &Signature, phi: Formula) -> Result<Formula, LogicError> {
    match backend.theory() {
        Theory::OrderedQvs => semilinear::qe(sig, &phi),
        Theory::PureSet => crate::discrete::pure_qe(sig, &phi),
        Theory::Finite => Ok(phi),
    }
}

/// The image of a map whose leading `params` coordinates are parameters:
/// `{(x̄, z̄) : ∃ambient  graph(x̄, ambient, z̄)}`, of arity `params + cod`.
fn param_image(f: &DefinableMap, params: usize, cod: usize) -> DefinableSet {
    let total = f.graph.arity;
    let amb = total - params - cod;
    let mut perm: Vec<Var> = Vec::with_capacity(total);
    for i in 1..=params {
        perm.push(i);
    }
    for i in 1..=amb {
        perm.push(params + cod + i);
    }
    for i in 1..=cod {
        perm.push(params + i);
    }
    f.graph
        .permute(&perm)
        .expect("block permutation is valid")
        .project_onto_prefix(params + cod)
}

/// Representative levels of a symbolic set: one sample per decomposition
/// cell (semilinear) or per equality diagram (pure set), topped up with
/// seeded random members.
fn representative_points(
    backend: &Backend,
    set: &DefinableSet,
    seed: u64,
) -> Result<Vec<Point>, LogicError> {
    let mut out: Vec<Point> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match backend {
        Backend::Semilinear => {
            for cell in &semilinear::decompose(set)?.cells {
                out.push(cell.sample.iter().cloned().map(Element::Rat).collect());
            }
            let qf = semilinear::qe(&set.sig, &set.phi)?;
            let mut drawn = 0;
            for _ in 0..200 {
                if drawn >= EXTRA_SAMPLES {
                    break;
                }
                let p: Vec<BigRational> = (0..set.arity)
                    .map(|_| {
                        let num: i64 = rng.gen_range(-12..=12);
                        let den: i64 = rng.gen_range(1..=4);
                        BigRational::new(num.into(), den.into())
                    })
                    .collect();
                if semilinear::eval_qf(&qf, &p)? {
                    out.push(p.into_iter().map(Element::Rat).collect());
                    drawn += 1;
                }
            }
        }
        Backend::PureSet => {
            let member = |p: &Point| -> Result<bool, LogicError> {
                let s = ParamFamily::new(set.clone(), set.arity)?.section(p)?;
                backend.decide(&set.sig, &s.phi)
            };
            for d in diagrams(&set.sig, set.arity) {
                let p = d.point(&set.sig);
                if member(&p)? {
                    out.push(p);
                }
            }
            let pool = set.sig.sym_count() + set.arity.max(1);
            let mut drawn = 0;
            for _ in 0..200 {
                if drawn >= EXTRA_SAMPLES {
                    break;
                }
                let p: Point = (0..set.arity)
                    .map(|_| Element::Sym(rng.gen_range(0..pool)))
                    .collect();
                if member(&p)? {
                    out.push(p);
                    drawn += 1;
                }
            }
        }
        Backend::Finite(_) => {
            return Err(LogicError::Sort(
                "sampling is reserved for the symbolic backends".into(),
            ));
        }
    }
    Ok(out)
}

/// Allocates fresh variable indices above everything already in play.
struct Alloc(Var);

impl Alloc {
    fn take(&mut self, k: usize) -> Vec<Var> {
        let out: Vec<Var> = (self.0 + 1..=self.0 + k).collect();
        self.0 += k;
        out
    }
}

/// One level of the symbolic validation recursion: the current base and
/// the remaining graphs, with every already-chosen parameter and level
/// tuple left as free variables above the coordinate range.
struct SymSlice<'a> {
    sig: &'a Signature,
    r: usize,
    amb: usize,
    m_list: &'a [usize],
    n_list: &'a [usize],
    base: Formula,
    graphs: Vec<(Formula, usize, usize)>,
}

impl<'a> SymSlice<'a> {
    fn root(f: &'a Fibering) -> SymSlice<'a> {
        SymSlice {
            sig: f.sig(),
            r: f.r,
            amb: f.m,
            m_list: &f.m_list,
            n_list: &f.n_list,
            base: f.base.phi.clone(),
            graphs: f
                .maps
                .iter()
                .map(|g| (g.graph.phi.clone(), g.dom_arity, g.cod_arity))
                .collect(),
        }
    }

    /// `ȳ` lies in the image of the first map.
    fn image_at(&self, y: &[Var], alloc: &mut Alloc) -> Result<Formula, LogicError> {
        let (g, d, _) = &self.graphs[0];
        let w = alloc.take(*d);
        let targets: Vec<Var> = w.iter().chain(y.iter()).copied().collect();
        let mut phi = relocate(g, &targets)?;
        for &v in w.iter().rev() {
            phi = Formula::exists(v, phi);
        }
        Ok(phi)
    }

    /// The slice at symbolic parameters `x̄` and level `ȳ`: base
    /// `f₁⁻¹(ȳ) × f₁(X)` and the later graphs with `x̄` pinned.
    fn child(&self, x: &[Var], y: &[Var], alloc: &mut Alloc) -> Result<SymSlice<'a>, LogicError> {
        let (g1, _, n1) = self.graphs[0].clone();
        let fiber_targets: Vec<Var> = (1..=self.amb).chain(y.iter().copied()).collect();
        let fiber = relocate(&g1, &fiber_targets)?;
        let e = alloc.take(self.amb);
        let img_targets: Vec<Var> = e
            .iter()
            .copied()
            .chain(self.amb + 1..=self.amb + n1)
            .collect();
        let mut img = relocate(&g1, &img_targets)?;
        for &v in e.iter().rev() {
            img = Formula::exists(v, img);
        }
        let base = Formula::and(fiber, img);
        let m1 = self.m_list[0];
        let mut graphs = Vec::with_capacity(self.graphs.len() - 1);
        for (g, d, c) in &self.graphs[1..] {
            let mut subst: BTreeMap<Var, Repl> = BTreeMap::new();
            for (i, &xv) in x.iter().enumerate() {
                subst.insert(i + 1, Repl::Var(xv));
            }
            for i in m1 + 1..=d + c {
                subst.insert(i, Repl::Var(i - m1));
            }
            graphs.push((g.substitute(&subst)?, d - m1, *c));
        }
        Ok(SymSlice {
            sig: self.sig,
            r: self.r - 1,
            amb: self.amb + n1,
            m_list: &self.m_list[1..],
            n_list: &self.n_list[1..],
            base,
            graphs,
        })
    }

    /// The defining conditions of this slice as one formula over its
    /// pinned free variables: exact at every depth (base sort checks are
    /// trivial symbolically), though only cheap to decide at small depth.
    /// Each quantified condition is normalized as soon as it is closed.
    fn validity(&self, alloc: &mut Alloc, backend: &Backend) -> Result<Formula, LogicError> {
        let (g1, d1, n1) = self.graphs[0].clone();
        debug_assert_eq!(d1, self.amb);
        // the first map's domain is exactly the base
        let w = alloc.take(d1);
        let v = alloc.take(n1);
        let targets: Vec<Var> = w.iter().chain(v.iter()).copied().collect();
        let mut proj = relocate(&g1, &targets)?;
        for &vv in v.iter().rev() {
            proj = Formula::exists(vv, proj);
        }
        let mut dom_eq = iff(proj, relocate(&self.base, &w)?);
        for &vv in w.iter().rev() {
            dom_eq = Formula::forall(vv, dom_eq);
        }
        let dom_eq = norm_formula(backend, self.sig, dom_eq)?;
        if self.r == 0 {
            let u = alloc.take(d1);
            let u2 = alloc.take(d1);
            let c = alloc.take(n1);
            let ga = relocate(&g1, &[u.as_slice(), c.as_slice()].concat())?;
            let gb = relocate(&g1, &[u2.as_slice(), c.as_slice()].concat())?;
            let mut same = Formula::True;
            for i in 0..d1 {
                same = Formula::and(same, Formula::vars_equal(self.sig.theory, u[i], u2[i]));
            }
            let mut inj = implies(Formula::and(ga, gb), same);
            for &vv in c.iter().rev().chain(u2.iter().rev()).chain(u.iter().rev()) {
                inj = Formula::forall(vv, inj);
            }
            let inj = norm_formula(backend, self.sig, inj)?;
            return Ok(Formula::and(dom_eq, inj));
        }
        let y = alloc.take(n1);
        let x = alloc.take(self.m_list[0]);
        let im = self.image_at(&y, alloc)?;
        let sub = self.child(&x, &y, alloc)?;
        let mut good = sub.validity(alloc, backend)?;
        for &vv in x.iter().rev() {
            good = Formula::exists(vv, good);
        }
        let mut cond = implies(im, norm_formula(backend, self.sig, good)?);
        for &vv in y.iter().rev() {
            cond = Formula::forall(vv, cond);
        }
        let cond = norm_formula(backend, self.sig, cond)?;
        Ok(Formula::and(dom_eq, cond))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::counting_measure;
    use crate::logic::{is_empty, sets_equivalent};
    use num::BigUint;

    fn structure() -> FiniteStructure {
        FiniteStructure::new(
            ["a", "b", "c"].iter().map(|s| s.to_string()).collect(),
            ["a", "b"].iter().map(|s| s.to_string()).collect(),
            "a".into(),
            "b".into(),
            BTreeMap::new(),
        )
        .unwrap()
    }

    fn map(sig: &Signature, dom: usize, cod: usize, text: &str) -> DefinableMap {
        let graph = DefinableSet::parse(sig, dom + cod, text).unwrap();
        DefinableMap::new(graph, dom, cod, None, None).unwrap()
    }

    /// The running finite example: `X = C²` fibered by the first
    /// projection, with the level itself as the witness parameter.
    fn projection_fibering(sig: &Signature) -> Fibering {
        let base = DefinableSet::parse(sig, 2, "base(x1) & base(x2)").unwrap();
        let f1 = map(sig, 2, 1, "base(x1) & base(x2) & x3 = x1");
        let f2 = map(sig, 4, 2, "x1 = x2 & base(x3) & base(x4) & x5 = x3 & x6 = x4");
        Fibering::new(base, vec![f1, f2], vec![1], vec![1, 2]).unwrap()
    }

    #[test]
    fn identity_embedding_validates() {
        let s = structure();
        let sig = s.signature();
        let base = base_power(&sig, 1);
        let f1 = map(&sig, 1, 1, "base(x1) & x2 = x1");
        let fib = Fibering::new(base, vec![f1], vec![], vec![1]).unwrap();
        let grade = fib.validate(&Backend::Finite(&s), None).unwrap();
        assert_eq!(grade, ValidationGrade::Valid);
    }

    #[test]
    fn collapsing_map_is_rejected_with_witness() {
        let s = structure();
        let sig = s.signature();
        let base = base_power(&sig, 1);
        let f1 = map(&sig, 1, 1, "base(x1) & x2 = a");
        let fib = Fibering::new(base, vec![f1], vec![], vec![1]).unwrap();
        match fib.validate(&Backend::Finite(&s), None) {
            Err(FiberingError::NotInjective(w)) => assert!(w.contains("(a)") && w.contains("(b)")),
            other => panic!("expected an injectivity failure, got {other:?}"),
        }
    }

    #[test]
    fn image_outside_the_base_is_rejected() {
        let s = structure();
        let sig = s.signature();
        let base = DefinableSet::parse(&sig, 1, "x1 = a").unwrap();
        let f1 = map(&sig, 1, 1, "x1 = a & x2 = c");
        let fib = Fibering::new(base, vec![f1], vec![], vec![1]).unwrap();
        match fib.validate(&Backend::Finite(&s), None) {
            Err(FiberingError::ImageEscapesBase(w)) => assert!(w.contains('c')),
            other => panic!("expected an image escape, got {other:?}"),
        }
    }

    #[test]
    fn projection_fibering_validates_exhaustively() {
        let s = structure();
        let sig = s.signature();
        let fib = projection_fibering(&sig);
        let grade = fib.validate(&Backend::Finite(&s), None).unwrap();
        assert_eq!(grade, ValidationGrade::Valid);
    }

    #[test]
    fn unpinned_witness_map_leaves_a_level_unfibered() {
        let s = structure();
        let sig = s.signature();
        let base = DefinableSet::parse(&sig, 2, "base(x1) & base(x2)").unwrap();
        let f1 = map(&sig, 2, 1, "base(x1) & base(x2) & x3 = x1");
        // the witness no longer pins the fiber coordinate to the level
        let f2 = map(&sig, 4, 2, "base(x3) & base(x4) & x5 = x3 & x6 = x4");
        let fib = Fibering::new(base, vec![f1, f2], vec![1], vec![1, 2]).unwrap();
        assert!(matches!(
            fib.validate(&Backend::Finite(&s), None),
            Err(FiberingError::NoParameterForFiber(_))
        ));
    }

    #[test]
    fn slices_fiber_the_level_times_the_image() {
        let s = structure();
        let sig = s.signature();
        let fib = projection_fibering(&sig);
        let slice = fib
            .slice(&[Element::Fin("a".into())], &[Element::Fin("a".into())])
            .unwrap();
        assert_eq!(slice.r(), 0);
        assert_eq!(slice.ambient(), 3);
        // fiber {a}×C times image C
        assert_eq!(
            counting_measure(&s, slice.base()).unwrap(),
            BigUint::from(4u32)
        );
        assert_eq!(
            slice.validate(&Backend::Finite(&s), None).unwrap(),
            ValidationGrade::Valid
        );
    }

    #[test]
    fn restriction_to_the_empty_set_empties_every_domain() {
        let s = structure();
        let sig = s.signature();
        let fib = projection_fibering(&sig);
        let backend = Backend::Finite(&s);
        let restricted = fib
            .restrict(&backend, &DefinableSet::empty(sig.clone(), 2))
            .unwrap();
        for f in restricted.maps() {
            assert!(is_empty(&backend, &f.domain_set()).unwrap());
        }
        assert_eq!(
            restricted.validate(&backend, None).unwrap(),
            ValidationGrade::Valid
        );
    }

    #[test]
    fn restriction_to_the_base_changes_nothing() {
        let s = structure();
        let sig = s.signature();
        let fib = projection_fibering(&sig);
        let backend = Backend::Finite(&s);
        let restricted = fib.restrict(&backend, &fib.base().clone()).unwrap();
        assert!(sets_equivalent(
            &backend,
            &restricted.maps()[0].domain_set(),
            fib.base()
        )
        .unwrap());
        assert_eq!(
            restricted.validate(&backend, None).unwrap(),
            ValidationGrade::Valid
        );
    }

    #[test]
    fn restriction_splits_the_base_count() {
        let s = structure();
        let sig = s.signature();
        let fib = projection_fibering(&sig);
        let backend = Backend::Finite(&s);
        let left = DefinableSet::parse(&sig, 2, "x1 = a & base(x2)").unwrap();
        let right = fib.base().minus(&left).unwrap();
        let a = fib.restrict(&backend, &left).unwrap();
        let b = fib.restrict(&backend, &right).unwrap();
        let count = |f: &Fibering| counting_measure(&s, &f.maps()[0].domain_set()).unwrap();
        assert_eq!(
            count(&a) + count(&b),
            counting_measure(&s, fib.base()).unwrap()
        );
        assert_eq!(a.validate(&backend, None).unwrap(), ValidationGrade::Valid);
        assert_eq!(b.validate(&backend, None).unwrap(), ValidationGrade::Valid);
    }

    #[test]
    fn restriction_needs_a_subset() {
        let s = structure();
        let sig = s.signature();
        let fib = projection_fibering(&sig);
        let too_big = DefinableSet::full(sig.clone(), 2);
        match fib.restrict(&Backend::Finite(&s), &too_big) {
            Err(FiberingError::NotASubset(w)) => assert!(w.contains('c')),
            other => panic!("expected a subset failure, got {other:?}"),
        }
    }

    #[test]
    fn combine_merges_overlapping_embeddings() {
        let s = structure();
        let sig = s.signature();
        let backend = Backend::Finite(&s);
        let base0 = DefinableSet::parse(&sig, 1, "x1 = a").unwrap();
        let f0 = Fibering::new(
            base0,
            vec![map(&sig, 1, 1, "x1 = a & x2 = x1")],
            vec![],
            vec![1],
        )
        .unwrap();
        let f1 = Fibering::new(
            base_power(&sig, 1),
            vec![map(&sig, 1, 1, "base(x1) & x2 = x1")],
            vec![],
            vec![1],
        )
        .unwrap();
        let merged = combine(&backend, &f0, &f1, None).unwrap();
        assert_eq!(merged.r(), 0);
        assert_eq!(merged.n_list(), &[2]);
        assert_eq!(
            counting_measure(&s, merged.base()).unwrap(),
            BigUint::from(2u32)
        );
        assert_eq!(
            merged.validate(&backend, None).unwrap(),
            ValidationGrade::Valid
        );
    }

    #[test]
    fn combine_with_an_empty_constituent_keeps_the_other() {
        let s = structure();
        let sig = s.signature();
        let backend = Backend::Finite(&s);
        let fib = projection_fibering(&sig);
        let empty = Fibering::new(
            DefinableSet::empty(sig.clone(), 2),
            vec![
                DefinableMap::new(DefinableSet::empty(sig.clone(), 3), 2, 1, None, None).unwrap(),
                DefinableMap::new(DefinableSet::empty(sig.clone(), 6), 4, 2, None, None).unwrap(),
            ],
            vec![1],
            vec![1, 2],
        )
        .unwrap();
        let merged = combine(&backend, &fib, &empty, None).unwrap();
        // the paper's padding equations, including the extra selector slot
        assert_eq!(merged.m_list(), &[2]);
        assert_eq!(merged.n_list(), &[2, 2]);
        assert_eq!(
            counting_measure(&s, merged.base()).unwrap(),
            counting_measure(&s, fib.base()).unwrap()
        );
        assert_eq!(
            merged.validate(&backend, None).unwrap(),
            ValidationGrade::Valid
        );
    }

    #[test]
    fn combine_refuses_an_unfiberable_merge() {
        // both constituents contribute levels at r = 1, so no slice can
        // cover the united image; the self-check reports it
        let s = structure();
        let sig = s.signature();
        let backend = Backend::Finite(&s);
        let fib = projection_fibering(&sig);
        let other_base = DefinableSet::parse(&sig, 2, "x1 = c & x2 = c").unwrap();
        let g1 = map(&sig, 2, 1, "x1 = c & x2 = c & x3 = a");
        let g2 = map(&sig, 4, 2, "x2 = c & x3 = c & x4 = a & x5 = a & x6 = a");
        let other = Fibering::new(other_base, vec![g1, g2], vec![1], vec![1, 2]).unwrap();
        assert_eq!(
            other.validate(&backend, None).unwrap(),
            ValidationGrade::Valid
        );
        assert!(matches!(
            combine(&backend, &fib, &other, None),
            Err(FiberingError::NoParameterForFiber(_))
        ));
    }

    #[test]
    fn n_ary_combine_unions_disjoint_bases() {
        let universe: Vec<String> = ["a", "b", "c", "d", "e", "f", "g"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let base: Vec<String> = universe[..6].to_vec();
        let s = FiniteStructure::new(universe, base, "a".into(), "b".into(), BTreeMap::new())
            .unwrap();
        let sig = s.signature();
        let backend = Backend::Finite(&s);
        let embed = |phi: &str| {
            let base = DefinableSet::parse(&sig, 1, phi).unwrap();
            let graph = format!("({phi}) & x2 = x1");
            Fibering::new(base, vec![map(&sig, 1, 1, &graph)], vec![], vec![1]).unwrap()
        };
        let parts = vec![
            embed("x1 = a"),
            embed("x1 = b | x1 = c"),
            embed("x1 = d | x1 = e | x1 = f"),
        ];
        let merged = n_ary_combine(&backend, &parts, None).unwrap();
        assert_eq!(
            counting_measure(&s, merged.base()).unwrap(),
            BigUint::from(6u32)
        );
        assert_eq!(
            merged.validate(&backend, None).unwrap(),
            ValidationGrade::Valid
        );
        assert_eq!(n_ary_combine(&backend, &parts[..1], None).unwrap(), parts[0]);
        assert!(matches!(
            n_ary_combine(&backend, &[], None),
            Err(FiberingError::EmptyCombine)
        ));
    }

    #[test]
    fn semilinear_level_fibering_validates_exactly() {
        let sig = Signature::ordered_qvs();
        let base = DefinableSet::full(sig.clone(), 1);
        let f1 = map(&sig, 1, 1, "x2 = 0");
        let f2 = map(&sig, 3, 1, "x3 = 0 & x4 = x2");
        let fib = Fibering::new(base, vec![f1, f2], vec![1], vec![1, 1]).unwrap();
        assert_eq!(
            fib.validate(&Backend::Semilinear, None).unwrap(),
            ValidationGrade::Valid
        );
    }

    #[test]
    fn semilinear_domain_drift_is_caught_symbolically() {
        let sig = Signature::ordered_qvs();
        let base = DefinableSet::full(sig.clone(), 1);
        let f1 = map(&sig, 1, 1, "x2 = 0");
        // the witness map's domain is all of M², not the required M×{0}
        let f2 = map(&sig, 3, 1, "x4 = x2");
        let fib = Fibering::new(base, vec![f1, f2], vec![1], vec![1, 1]).unwrap();
        assert!(matches!(
            fib.validate(&Backend::Semilinear, None),
            Err(FiberingError::NoParameterForFiber(_))
        ));
    }

    #[test]
    fn pure_set_embedding_validates() {
        let sig = Signature::pure_set(&[]);
        let base = DefinableSet::parse(&sig, 1, "!(x1 = c0)").unwrap();
        let f1 = map(&sig, 1, 1, "!(x1 = c0) & x2 = x1");
        let fib = Fibering::new(base, vec![f1], vec![], vec![1]).unwrap();
        assert_eq!(
            fib.validate(&Backend::PureSet, None).unwrap(),
            ValidationGrade::Valid
        );
    }

    #[test]
    fn deep_symbolic_validation_needs_a_seed_and_stays_graded() {
        let sig = Signature::ordered_qvs();
        let base = DefinableSet::full(sig.clone(), 1);
        let f1 = map(&sig, 1, 1, "x2 = 0");
        let f2 = map(&sig, 3, 1, "x3 = 0 & x4 = 0");
        let f3 = map(&sig, 5, 1, "x4 = 0 & x5 = 0 & x6 = 0");
        let f4 = map(&sig, 7, 1, "x5 = 0 & x6 = 0 & x7 = 0 & x8 = x4");
        let fib = Fibering::new(
            base,
            vec![f1, f2, f3, f4],
            vec![1, 1, 1],
            vec![1, 1, 1, 1],
        )
        .unwrap();
        assert!(matches!(
            fib.validate(&Backend::Semilinear, None),
            Err(FiberingError::UnsupportedDepth { r: 3, .. })
        ));
        assert_eq!(
            fib.validate(&Backend::Semilinear, Some(5)).unwrap(),
            ValidationGrade::SampledValid
        );
    }

    #[test]
    fn spec_round_trip() {
        let s = structure();
        let sig = s.signature();
        let fib = projection_fibering(&sig);
        let text = serde_json::to_string(&fib.to_spec()).unwrap();
        let spec: FiberingSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(Fibering::from_spec(&sig, &spec).unwrap(), fib);
    }

    #[test]
    fn spec_with_wrong_arities_is_rejected() {
        let s = structure();
        let sig = s.signature();
        let mut spec = projection_fibering(&sig).to_spec();
        spec.m_list = vec![];
        assert!(matches!(
            Fibering::from_spec(&sig, &spec),
            Err(FiberingError::Shape(_))
        ));
    }
}
