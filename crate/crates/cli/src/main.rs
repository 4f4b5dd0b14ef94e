//! `fubini` — measure definable sets, extend measures along fiberings, and
//! audit the laws both are expected to satisfy.
//!
//! Reports go to stdout as JSON; `--format table` renders the same report
//! for reading.  For a fixed (scenario, seed, flags) triple the JSON output
//! is byte-identical across runs.  Exit status: 0 on success, 1 when a
//! check ran to completion and failed (the report carries the
//! counterexample), 2 on usage or input errors.

mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use fubini_core::corpus;
use fubini_core::discrete::{self, FiniteStructure};
use fubini_core::engine::{self, AuditCheck};
use fubini_core::logic::{parse, render_point};
use fubini_core::semilinear;
use fubini_core::{
    base_measure, check_fubini, check_uniqueness, check_witness_independence, extend_with,
    level_sets, DefinableSet, ExtendOptions, Fibering, Grade, MeasureAssignment, SemiringId,
    SemiringValue, Signature, Theory,
};

use output::{emit, Format};

#[derive(Parser)]
#[command(name = "fubini", version, about = "Fubini measures on definable sets")]
struct Cli {
    /// Output format; JSON is the stable contract, tables are for reading.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eliminate quantifiers and print an equivalent formula.
    Qe {
        /// Theory the formula is read in.
        #[arg(long, value_enum, default_value = "ordered-qvs")]
        theory: TheoryArg,
        /// Formula text, e.g. "E u (x1 < u & u < x2)".
        #[arg(long)]
        formula: String,
    },
    /// Evaluate a base measure on a definable set.
    Measure {
        /// Measure tag: euler | dim | rank | counting | corrupt-euler |
        /// pair(a,b), nested as needed.
        #[arg(long)]
        backend: String,
        #[arg(long)]
        formula: String,
        /// Ambient arity; defaults to the highest free variable.
        #[arg(long)]
        arity: Option<usize>,
        /// Finite structure file; required by the counting backend.
        #[arg(long)]
        structure: Option<PathBuf>,
    },
    /// Evaluate a measure on the set a fibering presents.
    Extend {
        #[arg(long)]
        scenario: PathBuf,
        /// Measure tag; see `measure --backend`.
        #[arg(long)]
        measure: String,
        /// Fibering name; defaults to the scenario's only fibering.
        #[arg(long)]
        fibering: Option<String>,
        /// Seed for sampled validation of deep symbolic fiberings.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable memoisation of repeated sub-fiberings.
        #[arg(long)]
        no_memo: bool,
    },
    /// Split a map's image by fiber measure and total the level classes.
    Levels {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        measure: String,
        /// Map name; defaults to the scenario's only map.
        #[arg(long)]
        map: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Audit the measure laws on a generated corpus for one backend.
    CheckAxioms {
        #[arg(long)]
        backend: String,
        /// Finite structure file; required by the counting backend.
        #[arg(long)]
        structure: Option<PathBuf>,
        /// Corpus seed.  Each generated instance is still decided exactly,
        /// so the verdict is a proof for the corpus the seed names.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure one set through two fiberings of it and compare.
    CheckWitness {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        measure: String,
        /// Left fibering; defaults to the first of exactly two.
        #[arg(long)]
        left: Option<String>,
        /// Right fibering; defaults to the second of exactly two.
        #[arg(long)]
        right: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two measure assignments on a corpus of sets, or run the
    /// one-dimensional squaring-profile identity.
    CheckUnique {
        /// Check the squaring-profile identity and exit.
        #[arg(long, conflicts_with_all = ["left", "right", "scenario"])]
        squaring_profile: bool,
        /// Left measure tag.
        #[arg(long, required_unless_present = "squaring_profile")]
        left: Option<String>,
        /// Right measure tag.
        #[arg(long, required_unless_present = "squaring_profile")]
        right: Option<String>,
        /// Scenario whose named sets form the comparison corpus; without
        /// one a corpus is generated for the backend theory.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the engine against an independent oracle.
    Oracle {
        #[arg(long, value_enum)]
        kind: OracleKind,
        /// Seed for the generated cases; oracle runs are refused without
        /// one so every comparison is reproducible.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenario supplying the cases instead of generated ones.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Number of generated cases.
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Sample points per case (sample-equiv).
        #[arg(long, default_value_t = 10_000)]
        trials: u32,
        /// Maximum fibering depth (enumeration).
        #[arg(long, default_value_t = 3)]
        max_r: usize,
        /// Maximum set arity (cell-alternating-sum).
        #[arg(long, default_value_t = 3)]
        max_arity: usize,
        /// Euler-type measure tag under test (cell-alternating-sum).
        #[arg(long, default_value = "euler")]
        backend: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TheoryArg {
    OrderedQvs,
    PureSet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleKind {
    /// `extend` against exhaustive enumeration of finite fibered bases.
    Enumeration,
    /// Euler via the standard and the reversed cell orderings.
    CellAlternatingSum,
    /// Eliminated formulas against their inputs at sampled points.
    SampleEquiv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (report, ok) = match cli.command {
        Command::Qe { theory, formula } => cmd_qe(theory, &formula)?,
        Command::Measure {
            backend,
            formula,
            arity,
            structure,
        } => cmd_measure(&backend, &formula, arity, structure.as_deref())?,
        Command::Extend {
            scenario,
            measure,
            fibering,
            seed,
            no_memo,
        } => cmd_extend(&scenario, &measure, fibering.as_deref(), seed, no_memo)?,
        Command::Levels {
            scenario,
            measure,
            map,
            seed,
        } => cmd_levels(&scenario, &measure, map.as_deref(), seed)?,
        Command::CheckAxioms {
            backend,
            structure,
            seed,
        } => cmd_check_axioms(&backend, structure.as_deref(), seed)?,
        Command::CheckWitness {
            scenario,
            measure,
            left,
            right,
            seed,
        } => cmd_check_witness(&scenario, &measure, left.as_deref(), right.as_deref(), seed)?,
        Command::CheckUnique {
            squaring_profile,
            left,
            right,
            scenario,
            seed,
        } => cmd_check_unique(
            squaring_profile,
            left.as_deref(),
            right.as_deref(),
            scenario.as_deref(),
            seed,
        )?,
        Command::Oracle {
            kind,
            seed,
            scenario,
            count,
            trials,
            max_r,
            max_arity,
            backend,
        } => {
            let seed = seed.context("oracle comparisons are seeded samples; pass --seed")?;
            match kind {
                OracleKind::Enumeration => {
                    oracle_enumeration(scenario.as_deref(), seed, count, max_r)?
                }
                OracleKind::CellAlternatingSum => {
                    oracle_cells(scenario.as_deref(), seed, count, max_arity, &backend)?
                }
                OracleKind::SampleEquiv => {
                    oracle_sample_equiv(scenario.as_deref(), seed, count, trials)?
                }
            }
        }
    };
    emit(cli.format, &report);
    Ok(ok)
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

/// Parses a measure tag — the same labels reports print.  Counting needs
/// the structure it counts in.
fn measure_tag(tag: &str, structure: Option<&FiniteStructure>) -> Result<MeasureAssignment> {
    let (mu, rest) = measure_prefix(tag, structure)?;
    if !rest.trim().is_empty() {
        bail!("trailing input `{}` after measure tag", rest.trim());
    }
    Ok(mu)
}

fn measure_prefix<'a>(
    input: &'a str,
    structure: Option<&FiniteStructure>,
) -> Result<(MeasureAssignment, &'a str)> {
    let s = input.trim_start();
    if let Some(rest) = s.strip_prefix("pair(") {
        let (left, rest) = measure_prefix(rest, structure)?;
        let rest = rest
            .trim_start()
            .strip_prefix(',')
            .context("expected `,` between pair components")?;
        let (right, rest) = measure_prefix(rest, structure)?;
        let rest = rest
            .trim_start()
            .strip_prefix(')')
            .context("expected `)` after pair components")?;
        return Ok((engine::pair_measure(&left, &right)?, rest));
    }
    let end = s
        .find(|c: char| !c.is_ascii_alphanumeric() && c != '-')
        .unwrap_or(s.len());
    let (head, rest) = s.split_at(end);
    let mu = match head {
        "euler" => MeasureAssignment::euler(),
        "dim" => MeasureAssignment::dimension(),
        "rank" => MeasureAssignment::morley_rank(),
        "corrupt-euler" => MeasureAssignment::corrupt_euler(),
        "counting" => MeasureAssignment::counting(
            structure
                .context("the counting measure needs a finite structure or scenario")?
                .clone(),
        ),
        other => bail!(
            "unknown measure tag `{other}`; use euler, dim, rank, counting, corrupt-euler or pair(a,b)"
        ),
    };
    Ok((mu, rest))
}

fn sig_for(mu: &MeasureAssignment, structure: Option<&FiniteStructure>) -> Signature {
    match structure {
        Some(s) => s.signature(),
        None => match mu.theory() {
            Theory::OrderedQvs => Signature::ordered_qvs(),
            Theory::PureSet => Signature::pure_set(&[]),
            Theory::Finite => unreachable!("counting always carries its structure"),
        },
    }
}

fn load_structure(path: &Path) -> Result<FiniteStructure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read structure {}", path.display()))?;
    FiniteStructure::from_json(&text).map_err(|e| anyhow!("structure {}: {e}", path.display()))
}

/// Engine options from the command line, with the `FUBINI_MAX_LEVELS`
/// environment variable overriding the level-set cap.
fn extend_options(seed: Option<u64>, memoize: bool) -> Result<ExtendOptions> {
    let mut opts = ExtendOptions {
        memoize,
        seed,
        ..ExtendOptions::default()
    };
    if let Ok(raw) = std::env::var("FUBINI_MAX_LEVELS") {
        opts.max_levels = raw
            .parse()
            .map_err(|_| anyhow!("FUBINI_MAX_LEVELS must be a positive integer, not `{raw}`"))?;
    }
    Ok(opts)
}

fn grade_str(grade: Grade) -> &'static str {
    match grade {
        Grade::Exact => "exact",
        Grade::Sampled => "sampled",
    }
}

fn checks_json(checks: &[AuditCheck]) -> Vec<Value> {
    checks
        .iter()
        .map(|c| {
            json!({
                "law": c.law,
                "instances": c.instances,
                "pass": c.pass,
                "counterexample": c.counterexample,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_qe(theory: TheoryArg, formula: &str) -> Result<(Value, bool)> {
    let (sig, eliminated) = match theory {
        TheoryArg::OrderedQvs => {
            let sig = Signature::ordered_qvs();
            let out = semilinear::qe(&sig, &parse(&sig, formula)?)?;
            (sig, out)
        }
        TheoryArg::PureSet => {
            let sig = Signature::pure_set(&[]);
            let out = discrete::pure_qe(&sig, &parse(&sig, formula)?)?;
            (sig, out)
        }
    };
    let report = json!({
        "input": formula,
        "output": eliminated.pretty(&sig),
        "quantifier_free": eliminated.is_quantifier_free(),
    });
    Ok((report, true))
}

fn cmd_measure(
    backend: &str,
    formula: &str,
    arity: Option<usize>,
    structure: Option<&Path>,
) -> Result<(Value, bool)> {
    let structure = structure.map(load_structure).transpose()?;
    let mu = measure_tag(backend, structure.as_ref())?;
    let sig = sig_for(&mu, structure.as_ref());
    let phi = parse(&sig, formula)?;
    let arity = arity.unwrap_or_else(|| phi.free_vars().into_iter().max().unwrap_or(0).max(1));
    let set = DefinableSet::new(sig, arity, phi)?;
    let value = base_measure(&set, &mu)?;
    let report = json!({
        "backend": mu.label(),
        "formula": formula,
        "arity": arity,
        "semiring": value.id().to_string(),
        "value": value.value_json(),
        "display": value.to_string(),
    });
    Ok((report, true))
}

fn cmd_extend(
    path: &Path,
    measure: &str,
    fibering: Option<&str>,
    seed: Option<u64>,
    no_memo: bool,
) -> Result<(Value, bool)> {
    let sc = scenario::load(path)?;
    let (name, fib) = scenario::pick(&sc.fiberings, fibering, "fibering")?;
    let mu = measure_tag(measure, sc.structure.as_ref())?;
    let opts = extend_options(seed, !no_memo)?;
    let report = extend_with(fib, &mu, &opts)?;
    let levels: Vec<Value> = report
        .levels
        .iter()
        .map(|c| {
            json!({
                "a": c.a.value_json(),
                "class": c.class,
                "mu": c.mu.value_json(),
            })
        })
        .collect();
    let out = json!({
        "fibering": name,
        "measure": mu.label(),
        "semiring": report.value.id().to_string(),
        "value": report.value.value_json(),
        "grade": grade_str(report.grade),
        "levels": levels,
        "trace": report.trace,
    });
    Ok((out, true))
}

fn cmd_levels(
    path: &Path,
    measure: &str,
    map: Option<&str>,
    seed: Option<u64>,
) -> Result<(Value, bool)> {
    let sc = scenario::load(path)?;
    let (name, f) = scenario::pick(&sc.maps, map, "map")?;
    let mu = measure_tag(measure, sc.structure.as_ref())?;
    let opts = extend_options(seed, true)?;
    let report = level_sets(f, &mu, &opts)?;
    let classes: Vec<Value> = report
        .classes
        .iter()
        .map(|c| {
            json!({
                "a": c.a.value_json(),
                "class": c.set.phi.pretty(&sc.sig),
                "mu": c.mu.value_json(),
            })
        })
        .collect();
    let out = json!({
        "map": name,
        "measure": mu.label(),
        "classes": classes,
        "semiring": report.total.id().to_string(),
        "total": report.total.value_json(),
    });
    Ok((out, true))
}

fn cmd_check_axioms(backend: &str, structure: Option<&Path>, seed: u64) -> Result<(Value, bool)> {
    let structure = structure.map(load_structure).transpose()?;
    let mu = measure_tag(backend, structure.as_ref())?;
    let corpus = match mu.theory() {
        Theory::OrderedQvs => corpus::semilinear_audit(seed),
        Theory::PureSet => corpus::pure_audit(seed),
        Theory::Finite => corpus::counting_audit(
            structure.as_ref().expect("counting carries its structure"),
            seed,
        ),
    };
    let opts = extend_options(Some(seed), true)?;
    let report = check_fubini(&mu, &corpus, &opts)?;
    let out = json!({
        "backend": mu.label(),
        "seed": seed,
        "passed": report.passed(),
        "checks": checks_json(&report.checks),
    });
    Ok((out, report.passed()))
}

fn cmd_check_witness(
    path: &Path,
    measure: &str,
    left: Option<&str>,
    right: Option<&str>,
    seed: Option<u64>,
) -> Result<(Value, bool)> {
    let sc = scenario::load(path)?;
    let (lname, rname) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        (None, None) if sc.fiberings.len() == 2 => {
            let mut names = sc.fiberings.keys();
            let l = names.next().expect("len checked").as_str();
            let r = names.next().expect("len checked").as_str();
            (l, r)
        }
        _ => bail!("pass both --left and --right, or a scenario with exactly two fiberings"),
    };
    let (lname, f) = scenario::pick(&sc.fiberings, Some(lname), "fibering")?;
    let (rname, g) = scenario::pick(&sc.fiberings, Some(rname), "fibering")?;
    let mu = measure_tag(measure, sc.structure.as_ref())?;
    let opts = extend_options(seed, true)?;
    let report = check_witness_independence(f, g, &mu, &opts)?;
    let out = json!({
        "left_fibering": lname,
        "right_fibering": rname,
        "measure": mu.label(),
        "left": report.left.value_json(),
        "right": report.right.value_json(),
        "agree": report.agree,
    });
    Ok((out, report.agree))
}

fn cmd_check_unique(
    squaring_profile: bool,
    left: Option<&str>,
    right: Option<&str>,
    scenario_path: Option<&Path>,
    seed: u64,
) -> Result<(Value, bool)> {
    if squaring_profile {
        let check = engine::squaring_profile_check();
        let out = json!({
            "law": check.law,
            "instances": check.instances,
            "pass": check.pass,
            "counterexample": check.counterexample,
        });
        return Ok((out, check.pass));
    }
    let left = left.expect("clap enforces --left");
    let right = right.expect("clap enforces --right");
    let (named_sets, structure) = match scenario_path {
        Some(p) => {
            let sc = scenario::load(p)?;
            (sc.sets.into_values().collect::<Vec<_>>(), sc.structure)
        }
        None => (Vec::new(), None),
    };
    let mu = measure_tag(left, structure.as_ref())?;
    let nu = measure_tag(right, structure.as_ref())?;
    let sets = if named_sets.is_empty() {
        match mu.theory() {
            Theory::OrderedQvs => corpus::semilinear_sets(seed, 60, 2),
            Theory::PureSet => corpus::pure_sets(seed, 60, 2),
            Theory::Finite => {
                let s = structure
                    .as_ref()
                    .context("comparing counting measures needs a finite scenario")?;
                corpus::counting_audit(s, seed).sets
            }
        }
    } else {
        named_sets
    };
    let opts = extend_options(Some(seed), true)?;
    let report = check_uniqueness(&mu, &nu, &sets, &opts)?;
    let ok = report.ok();
    let out = json!({
        "left": mu.label(),
        "right": nu.label(),
        "checked": report.checked,
        "counterexample": report.counterexample,
    });
    Ok((out, ok))
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

fn oracle_enumeration(
    scenario_path: Option<&Path>,
    seed: u64,
    count: usize,
    max_r: usize,
) -> Result<(Value, bool)> {
    let mut cases: Vec<(String, FiniteStructure, Fibering)> = Vec::new();
    match scenario_path {
        Some(p) => {
            let sc = scenario::load(p)?;
            let s = sc
                .structure
                .context("the enumeration oracle needs a finite scenario")?;
            for (name, fib) in &sc.fiberings {
                cases.push((name.clone(), s.clone(), fib.clone()));
            }
            if cases.is_empty() {
                bail!("scenario has no fiberings to compare");
            }
        }
        None => {
            let structures = corpus::structures(seed, count.div_ceil(20).max(1));
            let per = count.div_ceil(structures.len());
            'outer: for (i, s) in structures.iter().enumerate() {
                let fibs =
                    corpus::finite_fiberings(s, seed.wrapping_add(1 + 1000 * i as u64), per, max_r);
                for (j, fib) in fibs.into_iter().enumerate() {
                    cases.push((format!("s{i}/f{j}"), s.clone(), fib));
                    if cases.len() >= count {
                        break 'outer;
                    }
                }
            }
        }
    }
    let mut mismatches = Vec::new();
    for (label, s, fib) in &cases {
        let mu = MeasureAssignment::counting(s.clone());
        let engine = extend_with(fib, &mu, &ExtendOptions::default())?.value;
        let oracle = s.enumerate(fib.base())?.len();
        if engine != SemiringValue::count(oracle as u64) {
            mismatches.push(json!({
                "case": label,
                "engine": engine.value_json(),
                "oracle": oracle,
            }));
        }
    }
    let ok = mismatches.is_empty();
    let out = json!({
        "kind": "enumeration",
        "seed": seed,
        "cases": cases.len(),
        "mismatches": mismatches,
    });
    Ok((out, ok))
}

fn oracle_cells(
    scenario_path: Option<&Path>,
    seed: u64,
    count: usize,
    max_arity: usize,
    backend: &str,
) -> Result<(Value, bool)> {
    let mu = measure_tag(backend, None)?;
    if mu.theory() != Theory::OrderedQvs || mu.semiring != SemiringId::Int {
        bail!(
            "the cell-alternating-sum oracle tests Euler-type measures; `{}` is not one",
            mu.label()
        );
    }
    let sets: Vec<(String, DefinableSet)> = match scenario_path {
        Some(p) => {
            let sc = scenario::load(p)?;
            if sc.sig != Signature::ordered_qvs() {
                bail!("the cell-alternating-sum oracle reads ordered-qvs scenarios");
            }
            if sc.sets.is_empty() {
                bail!("scenario has no sets to compare");
            }
            sc.sets.into_iter().collect()
        }
        None => corpus::semilinear_sets(seed, count, max_arity)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("set {i}"), s))
            .collect(),
    };
    let mut mismatches = Vec::new();
    for (label, set) in &sets {
        let engine = base_measure(set, &mu)?;
        let oracle = SemiringValue::Int(semilinear::euler_reversed(set)?);
        if engine != oracle {
            mismatches.push(json!({
                "case": label,
                "formula": set.phi.pretty(&set.sig),
                "engine": engine.value_json(),
                "oracle": oracle.value_json(),
            }));
        }
    }
    let ok = mismatches.is_empty();
    let out = json!({
        "kind": "cell-alternating-sum",
        "backend": mu.label(),
        "seed": seed,
        "cases": sets.len(),
        "mismatches": mismatches,
    });
    Ok((out, ok))
}

fn oracle_sample_equiv(
    scenario_path: Option<&Path>,
    seed: u64,
    count: usize,
    trials: u32,
) -> Result<(Value, bool)> {
    let sig = Signature::ordered_qvs();
    let sets: Vec<(String, DefinableSet)> = match scenario_path {
        Some(p) => {
            let sc = scenario::load(p)?;
            if sc.sig != sig {
                bail!("the sample-equiv oracle reads ordered-qvs scenarios");
            }
            if sc.sets.is_empty() {
                bail!("scenario has no sets to compare");
            }
            sc.sets.into_iter().collect()
        }
        None => corpus::quantified_sets(seed, count)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("formula {i}"), s))
            .collect(),
    };
    let mut mismatches = Vec::new();
    for (i, (label, set)) in sets.iter().enumerate() {
        let out = semilinear::qe(&sig, &set.phi)?;
        if !out.is_quantifier_free() {
            mismatches.push(json!({
                "case": label,
                "formula": set.phi.pretty(&sig),
                "problem": "quantifier left after elimination",
            }));
            continue;
        }
        let point = semilinear::sample_equiv(
            &set.phi,
            &out,
            set.arity,
            trials,
            seed.wrapping_add(i as u64),
        )?;
        if let Some(p) = point {
            mismatches.push(json!({
                "case": label,
                "formula": set.phi.pretty(&sig),
                "eliminated": out.pretty(&sig),
                "point": render_point(&p, &sig),
            }));
        }
    }
    let ok = mismatches.is_empty();
    let out = json!({
        "kind": "sample-equiv",
        "seed": seed,
        "cases": sets.len(),
        "trials": trials,
        "mismatches": mismatches,
    });
    Ok((out, ok))
}
