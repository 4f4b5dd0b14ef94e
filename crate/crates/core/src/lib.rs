//! Semiring-valued measures on definable sets.
//!
//! The crate is organised around three tame "backends" — semilinear sets over
//! an ordered vector space, definable sets in a pure infinite set, and
//! explicit finite structures — each carrying one or more computable measures
//! (Euler characteristic, dimension, counting, rank).  On top of the backends
//! sits an engine that evaluates a measure on sets presented by step
//! fiberings, by the level-set recursion, and audits the measure axioms.
//!
//! Modules:
//! * [`semiring`] — the value semirings (integers, tropical, counting, pairs);
//! * [`logic`] — formulas, signatures, definable sets and maps;
//! * [`semilinear`] — quantifier elimination and cell decomposition over an
//!   ordered vector space, with the dimension and Euler measures;
//! * [`discrete`] — explicit finite structures with the counting measure, and
//!   the pure-set backend with rank;
//! * [`fibering`] — step fiberings: validation, restriction, combination;
//! * [`engine`] — measure assignments, level sets, the extension algorithm,
//!   and the axiom/lemma audit entry points;
//! * [`corpus`] — seeded generators for structures, formulas, maps and
//!   fiberings, used by the audit commands and the test suites.

pub mod corpus;
pub mod discrete;
pub mod engine;
pub mod fibering;
pub mod logic;
pub mod semilinear;
pub mod semiring;

pub use engine::{
    base_measure, check_fubini, check_fubini_map, check_uniqueness,
    check_witness_independence, extend, extend_with, level_sets, mu_f, pair_measure,
    param_level_sets, AuditCorpus, AuditReport, EngineError, ExtendOptions, Grade,
    LevelSetReport, MeasureAssignment, MeasureBackend, MeasureReport,
};
pub use fibering::{Backend, Fibering, FiberingError, FiberingSpec, ValidationGrade};
pub use logic::{DefinableMap, DefinableSet, Formula, ParamFamily, Signature, Theory};
pub use semiring::{SemiringId, SemiringValue};
