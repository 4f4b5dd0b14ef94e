//! Scenario files.
//!
//! A scenario is a versioned JSON document that fixes one backend theory
//! and names the objects a run works with: definable sets and maps given
//! by formula strings, and fiberings given as structured records.  Finite
//! scenarios embed the structure they are interpreted in.
//!
//! Loading resolves every formula against the scenario's signature, so a
//! scenario that loads is one whose objects are all well-formed.  The
//! optional `tasks` list names the commands a fixture is meant to be run
//! with; its object references are checked here so a checked-in fixture
//! cannot drift out of sync with its own definitions.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use fubini_core::discrete::FiniteStructure;
use fubini_core::fibering::FiberingSpec;
use fubini_core::{DefinableMap, DefinableSet, Fibering, Signature};

/// The one schema revision this build reads.
pub const SCHEMA_VERSION: u64 = 1;

const COMMANDS: [&str; 8] = [
    "qe",
    "measure",
    "extend",
    "levels",
    "check-axioms",
    "check-witness",
    "check-unique",
    "oracle",
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u64,
    theory: String,
    #[serde(default)]
    structure: Option<FiniteStructure>,
    #[serde(default)]
    sets: BTreeMap<String, SetSpec>,
    #[serde(default)]
    maps: BTreeMap<String, MapSpec>,
    #[serde(default)]
    fiberings: BTreeMap<String, FiberingSpec>,
    #[serde(default)]
    tasks: Vec<Task>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetSpec {
    arity: usize,
    formula: String,
}

/// A map is stored as the formula of its graph in `x1..x_{dom+cod}`,
/// domain coordinates first.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSpec {
    dom: usize,
    cod: usize,
    graph: String,
}

/// A command invocation a fixture intends to be run with.  Only the
/// object references are validated; flags are passed through as-is.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Task {
    command: String,
    #[serde(default)]
    args: BTreeMap<String, String>,
}

/// A loaded scenario: every named object resolved against one signature.
pub struct Scenario {
    pub sig: Signature,
    pub structure: Option<FiniteStructure>,
    pub sets: BTreeMap<String, DefinableSet>,
    pub maps: BTreeMap<String, DefinableMap>,
    pub fiberings: BTreeMap<String, Fibering>,
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario {}", path.display()))?;
    let raw: ScenarioFile = serde_json::from_str(&text)
        .with_context(|| format!("scenario {} does not parse", path.display()))?;
    if raw.schema_version != SCHEMA_VERSION {
        bail!(
            "scenario {} has schema_version {}; this build reads version {}",
            path.display(),
            raw.schema_version,
            SCHEMA_VERSION
        );
    }
    if raw.theory != "finite" && raw.structure.is_some() {
        bail!("only finite scenarios embed a structure");
    }
    let (sig, structure) = match raw.theory.as_str() {
        "ordered-qvs" => (Signature::ordered_qvs(), None),
        "pure-set" => (Signature::pure_set(&[]), None),
        "finite" => {
            let s = raw
                .structure
                .context("a finite scenario must embed its structure")?;
            (s.signature(), Some(s))
        }
        other => bail!("unknown theory `{other}`; use ordered-qvs, pure-set or finite"),
    };

    let mut sets = BTreeMap::new();
    for (name, spec) in &raw.sets {
        let set = DefinableSet::parse(&sig, spec.arity, &spec.formula)
            .map_err(|e| anyhow!("set `{name}`: {e}"))?;
        sets.insert(name.clone(), set);
    }
    let mut maps = BTreeMap::new();
    for (name, spec) in &raw.maps {
        let graph = DefinableSet::parse(&sig, spec.dom + spec.cod, &spec.graph)
            .map_err(|e| anyhow!("map `{name}`: {e}"))?;
        let map = DefinableMap::new(graph, spec.dom, spec.cod, None, None)
            .map_err(|e| anyhow!("map `{name}`: {e}"))?;
        maps.insert(name.clone(), map);
    }
    let mut fiberings = BTreeMap::new();
    for (name, spec) in &raw.fiberings {
        let fib = Fibering::from_spec(&sig, spec).map_err(|e| anyhow!("fibering `{name}`: {e}"))?;
        fiberings.insert(name.clone(), fib);
    }

    for task in &raw.tasks {
        if !COMMANDS.contains(&task.command.as_str()) {
            bail!("task command `{}` is not a subcommand", task.command);
        }
        for (key, value) in &task.args {
            let resolves = match key.as_str() {
                "set" => sets.contains_key(value),
                "map" => maps.contains_key(value),
                "fibering" | "left" | "right" if task.command != "check-unique" => {
                    fiberings.contains_key(value)
                }
                _ => true,
            };
            if !resolves {
                bail!(
                    "task `{}` references unknown {key} `{value}`",
                    task.command
                );
            }
        }
    }

    Ok(Scenario {
        sig,
        structure,
        sets,
        maps,
        fiberings,
    })
}

/// Resolves `--<kind> NAME` against a name table, defaulting to the sole
/// entry when the scenario has exactly one.
pub fn pick<'a, T>(
    table: &'a BTreeMap<String, T>,
    name: Option<&str>,
    kind: &str,
) -> Result<(&'a str, &'a T)> {
    match name {
        Some(n) => table
            .get_key_value(n)
            .map(|(k, v)| (k.as_str(), v))
            .ok_or_else(|| {
                anyhow!(
                    "no {kind} named `{n}`; scenario has: {}",
                    table
                        .keys()
                        .map(String::as_str)
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            }),
        None if table.len() == 1 => {
            let (k, v) = table.iter().next().expect("len checked");
            Ok((k.as_str(), v))
        }
        None => bail!(
            "scenario has {} {kind}s; pick one with --{kind}",
            table.len()
        ),
    }
}
