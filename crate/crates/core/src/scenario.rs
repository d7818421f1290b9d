//! Scenario files: a versioned JSON document describing one market, the
//! signals students may receive, and solver settings.
//!
//! ```json
//! {
//!   "schema": "probmatch-scenario/1",
//!   "students": ["s1", "s2"],
//!   "programs": [{"name": "p1", "capacity": 1}, {"name": "p2", "capacity": 1}],
//!   "priorities": {"p1": ["s1", "s2"], "p2": ["s1", "s2"]},
//!   "states": [{"name": "w1", "prob": 0.5}, {"name": "w2", "prob": 0.5}],
//!   "preferences": {
//!     "w1": {"s1": ["p1", "p2"], "s2": ["p1", "p2"]},
//!     "w2": {"s1": ["p2", "p1"], "s2": ["p1", "p2"]}
//!   },
//!   "utilities": {"kind": "rank", "values": [2, 1]},
//!   "signals": {"full": {"kind": "full"}, "null": {"kind": "null"}}
//! }
//! ```
//!
//! Rankings may be partial; missing programs are appended in program order
//! and the completion is recorded on the loaded [`Scenario`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clearing::{ClearingConfig, UpdateScheme};
use crate::decision::TieBreak;
use crate::demand::Coupling;
use crate::error::{Error, Result};
use crate::information::{Signal, SignalProfile};
use crate::model::{validate_instance, InstanceParts, MarketInstance, UtilityModel, ValidationReport};

pub const SCHEMA: &str = "probmatch-scenario/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    students: Vec<String>,
    programs: Vec<RawProgram>,
    priorities: BTreeMap<String, Vec<String>>,
    states: Vec<RawState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preferences: Option<BTreeMap<String, BTreeMap<String, Vec<String>>>>,
    utilities: RawUtilities,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    program_utilities: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    #[serde(default)]
    unmatched_utility: f64,
    #[serde(default)]
    signals: BTreeMap<String, RawSignal>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    profiles: BTreeMap<String, ProfileSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<RawSolver>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProgram {
    name: String,
    capacity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    name: String,
    prob: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawUtilities {
    /// Payoff by position in the realized ranking.
    Rank { values: Vec<f64> },
    /// student -> state -> program -> payoff
    Explicit {
        values: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawSignal {
    Full,
    Null,
    Partition {
        cells: Vec<Vec<String>>,
    },
    Explicit {
        realizations: Vec<String>,
        /// state -> probability of each realization
        likelihood: BTreeMap<String, Vec<f64>>,
    },
}

/// A signal profile by signal name: one default plus per-student overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub default: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub students: BTreeMap<String, String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clearing_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_point_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheme: Option<UpdateScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coupling: Option<Coupling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tie_break: Option<TieBreak>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolverSettings {
    pub clearing: ClearingConfig,
    pub tie_break: TieBreak,
}

/// A ranking that listed fewer programs than the market has.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub student: String,
    pub state: String,
    pub appended: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: Option<String>,
    pub instance: MarketInstance,
    pub signals: BTreeMap<String, Signal>,
    pub profiles: BTreeMap<String, ProfileSpec>,
    pub solver: SolverSettings,
    pub completions: Vec<Completion>,
    /// Non-fatal findings from instance validation.
    pub warnings: ValidationReport,
    raw_signals: BTreeMap<String, RawSignal>,
}

impl Scenario {
    /// Resolves a name to a signal profile: a named profile first, otherwise
    /// a signal given to every student.
    pub fn profile(&self, name: &str) -> Result<SignalProfile> {
        if let Some(spec) = self.profiles.get(name) {
            return self.build_profile(name, spec);
        }
        match self.signals.get(name) {
            Some(signal) => Ok(SignalProfile::uniform(signal.clone(), self.instance.num_students())),
            None => Err(Error::UnknownIdentifier {
                kind: "signal",
                name: name.to_string(),
            }),
        }
    }

    /// Profile and signal names, profiles first.
    pub fn signal_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.profiles.keys().map(String::as_str).collect();
        names.extend(
            self.signals
                .keys()
                .map(String::as_str)
                .filter(|n| !self.profiles.contains_key(*n)),
        );
        names
    }

    fn build_profile(&self, name: &str, spec: &ProfileSpec) -> Result<SignalProfile> {
        let field = format!("profiles.{name}");
        let lookup = |signal: &str| {
            self.signals
                .get(signal)
                .cloned()
                .ok_or_else(|| Error::scenario(&field, format!("unknown signal `{signal}`")))
        };
        let default = lookup(&spec.default)?;
        let mut signals = vec![default; self.instance.num_students()];
        for (student, signal) in &spec.students {
            let k = self
                .instance
                .student_index(student)
                .map_err(|_| Error::scenario(&field, format!("unknown student `{student}`")))?;
            signals[k] = lookup(signal)?;
        }
        SignalProfile::new(signals)
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    build(raw)
}

fn index_of(names: &[String], field: &str, kind: &str, name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::scenario(field, format!("unknown {kind} `{name}`")))
}

fn unique(names: &[String], field: &str) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::scenario(field, format!("duplicate name `{a}`")));
        }
    }
    Ok(())
}

fn build(raw: RawScenario) -> Result<Scenario> {
    if raw.schema != SCHEMA {
        return Err(Error::scenario(
            "schema",
            format!("expected `{SCHEMA}`, found `{}`", raw.schema),
        ));
    }
    let students = raw.students.clone();
    let programs: Vec<String> = raw.programs.iter().map(|p| p.name.clone()).collect();
    let states: Vec<String> = raw.states.iter().map(|w| w.name.clone()).collect();
    unique(&students, "students")?;
    unique(&programs, "programs")?;
    unique(&states, "states")?;
    if students.is_empty() || programs.is_empty() || states.is_empty() {
        return Err(Error::scenario(
            "students",
            "students, programs and states must be nonempty",
        ));
    }
    if programs.len() > crate::model::ChoiceSet::MAX_PROGRAMS {
        return Err(Error::scenario("programs", "too many programs"));
    }

    let mut priorities = Vec::with_capacity(programs.len());
    for (p, name) in programs.iter().enumerate() {
        let field = format!("priorities.{name}");
        let list = raw
            .priorities
            .get(name)
            .ok_or_else(|| Error::scenario(&field, "missing priority list"))?;
        let order = list
            .iter()
            .map(|s| index_of(&students, &field, "student", s))
            .collect::<Result<Vec<_>>>()?;
        debug_assert_eq!(priorities.len(), p);
        priorities.push(order);
    }
    if let Some(extra) = raw.priorities.keys().find(|k| !programs.contains(k)) {
        return Err(Error::scenario("priorities", format!("unknown program `{extra}`")));
    }

    let mut completions = Vec::new();
    let utilities = match &raw.utilities {
        RawUtilities::Rank { values } => {
            if values.len() != programs.len() {
                return Err(Error::scenario(
                    "utilities.values",
                    format!("{} values for {} programs", values.len(), programs.len()),
                ));
            }
            let prefs = raw
                .preferences
                .as_ref()
                .ok_or_else(|| Error::scenario("preferences", "required with rank utilities"))?;
            if let Some(extra) = prefs.keys().find(|k| !states.contains(k)) {
                return Err(Error::scenario("preferences", format!("unknown state `{extra}`")));
            }
            let mut rankings = vec![Vec::with_capacity(states.len()); students.len()];
            for state in &states {
                let per_state = prefs
                    .get(state)
                    .ok_or_else(|| Error::scenario(format!("preferences.{state}"), "missing state"))?;
                if let Some(extra) = per_state.keys().find(|k| !students.contains(k)) {
                    return Err(Error::scenario(
                        format!("preferences.{state}"),
                        format!("unknown student `{extra}`"),
                    ));
                }
                for (k, student) in students.iter().enumerate() {
                    let field = format!("preferences.{state}.{student}");
                    let listed = per_state
                        .get(student)
                        .ok_or_else(|| Error::scenario(&field, "missing ranking"))?;
                    let mut order = listed
                        .iter()
                        .map(|p| index_of(&programs, &field, "program", p))
                        .collect::<Result<Vec<_>>>()?;
                    let missing: Vec<usize> = (0..programs.len()).filter(|p| !order.contains(p)).collect();
                    if !missing.is_empty() && !order.is_empty() {
                        completions.push(Completion {
                            student: student.clone(),
                            state: state.clone(),
                            appended: missing.iter().map(|&p| programs[p].clone()).collect(),
                        });
                    }
                    order.extend(missing);
                    rankings[k].push(order);
                }
            }
            UtilityModel::RankBased {
                values: values.clone(),
                rankings,
            }
        }
        RawUtilities::Explicit { values } => {
            let mut matrix = Vec::with_capacity(students.len());
            for student in &students {
                let per_student = values
                    .get(student)
                    .ok_or_else(|| Error::scenario(format!("utilities.values.{student}"), "missing student"))?;
                let mut rows = Vec::with_capacity(states.len());
                for state in &states {
                    let field = format!("utilities.values.{student}.{state}");
                    let per_state = per_student
                        .get(state)
                        .ok_or_else(|| Error::scenario(&field, "missing state"))?;
                    if let Some(extra) = per_state.keys().find(|k| !programs.contains(k)) {
                        return Err(Error::scenario(&field, format!("unknown program `{extra}`")));
                    }
                    let row = programs
                        .iter()
                        .map(|p| {
                            per_state
                                .get(p)
                                .copied()
                                .ok_or_else(|| Error::scenario(&field, format!("missing program `{p}`")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    rows.push(row);
                }
                matrix.push(rows);
            }
            UtilityModel::Explicit { matrix }
        }
    };

    let program_utilities = match &raw.program_utilities {
        None => None,
        Some(map) => {
            let mut table = Vec::with_capacity(programs.len());
            for program in &programs {
                let field = format!("program_utilities.{program}");
                let row = map
                    .get(program)
                    .ok_or_else(|| Error::scenario(&field, "missing program"))?;
                table.push(
                    students
                        .iter()
                        .map(|s| {
                            row.get(s)
                                .copied()
                                .ok_or_else(|| Error::scenario(&field, format!("missing student `{s}`")))
                        })
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            Some(table)
        }
    };

    let instance = MarketInstance::new(InstanceParts {
        students: students.clone(),
        programs: programs.clone(),
        capacities: raw.programs.iter().map(|p| p.capacity).collect(),
        priorities,
        states: states.clone(),
        prior: raw.states.iter().map(|w| w.prob).collect(),
        utilities,
        program_utilities,
        unmatched_utility: raw.unmatched_utility,
    })?;
    let report = validate_instance(&instance);
    if !report.failures.is_empty() {
        return Err(Error::Validation(report));
    }

    let mut signals = BTreeMap::new();
    for (name, spec) in &raw.signals {
        signals.insert(name.clone(), build_signal(name, spec, &states)?);
    }

    let solver = raw.solver.unwrap_or_default();
    let defaults = ClearingConfig::default();
    let scenario = Scenario {
        name: raw.name,
        instance,
        signals,
        profiles: raw.profiles,
        solver: SolverSettings {
            clearing: ClearingConfig {
                clearing_tol: solver.clearing_tol.unwrap_or(defaults.clearing_tol),
                fixed_point_tol: solver.fixed_point_tol.unwrap_or(defaults.fixed_point_tol),
                max_sweeps: solver.max_sweeps.unwrap_or(defaults.max_sweeps),
                scheme: solver.scheme.unwrap_or(defaults.scheme),
                coupling: solver.coupling.unwrap_or(defaults.coupling),
            },
            tie_break: solver.tie_break.unwrap_or_default(),
        },
        completions,
        warnings: report,
        raw_signals: raw.signals,
    };
    // surface bad profile references at load time
    for (name, spec) in &scenario.profiles {
        scenario.build_profile(name, spec)?;
    }
    Ok(scenario)
}

fn build_signal(name: &str, spec: &RawSignal, states: &[String]) -> Result<Signal> {
    let field = format!("signals.{name}");
    let m = states.len();
    let wrap = |e: Error| Error::scenario(&field, e.to_string());
    match spec {
        RawSignal::Full => Signal::full_disclosure(m).with_labels(states.to_vec()).map_err(wrap),
        RawSignal::Null => Ok(Signal::null(m)),
        RawSignal::Partition { cells } => {
            let idx = cells
                .iter()
                .map(|cell| {
                    cell.iter()
                        .map(|w| index_of(states, &field, "state", w))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let labels = cells.iter().map(|c| c.join("+")).collect();
            Signal::partition(m, &idx)
                .and_then(|s| s.with_labels(labels))
                .map_err(wrap)
        }
        RawSignal::Explicit {
            realizations,
            likelihood,
        } => {
            if let Some(extra) = likelihood.keys().find(|k| !states.contains(k)) {
                return Err(Error::scenario(&field, format!("unknown state `{extra}`")));
            }
            let rows = states
                .iter()
                .map(|w| {
                    likelihood
                        .get(w)
                        .cloned()
                        .ok_or_else(|| Error::scenario(&field, format!("missing likelihood for state `{w}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            Signal::new(realizations.clone(), rows).map_err(wrap)
        }
    }
}

/// Emits a scenario as JSON. Rankings are written completed, so reloading
/// gives the same instance with no completions.
pub fn emit_scenario(scenario: &Scenario) -> Result<String> {
    let inst = &scenario.instance;
    let programs = inst.programs();
    let students = inst.students();
    let states = inst.states();
    let priorities = (0..inst.num_programs())
        .map(|p| {
            (
                programs[p].clone(),
                inst.priorities()[p].iter().map(|&k| students[k].clone()).collect(),
            )
        })
        .collect();
    let (preferences, utilities) = match inst.utility_model() {
        UtilityModel::RankBased { values, rankings } => {
            let mut prefs: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
            for (w, state) in states.iter().enumerate() {
                let per_state = prefs.entry(state.clone()).or_default();
                for (k, student) in students.iter().enumerate() {
                    per_state.insert(
                        student.clone(),
                        rankings[k][w].iter().map(|&p| programs[p].clone()).collect(),
                    );
                }
            }
            (Some(prefs), RawUtilities::Rank { values: values.clone() })
        }
        UtilityModel::Explicit { matrix } => {
            let values = students
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let per_state = states
                        .iter()
                        .enumerate()
                        .map(|(w, st)| {
                            let row = programs
                                .iter()
                                .enumerate()
                                .map(|(p, name)| (name.clone(), matrix[k][w][p]))
                                .collect();
                            (st.clone(), row)
                        })
                        .collect();
                    (s.clone(), per_state)
                })
                .collect();
            (None, RawUtilities::Explicit { values })
        }
    };
    let program_utilities = inst.program_utilities().map(|table| {
        programs
            .iter()
            .enumerate()
            .map(|(p, name)| {
                (
                    name.clone(),
                    students
                        .iter()
                        .enumerate()
                        .map(|(k, s)| (s.clone(), table[p][k]))
                        .collect(),
                )
            })
            .collect()
    });
    let cfg = &scenario.solver;
    let raw = RawScenario {
        schema: SCHEMA.to_string(),
        name: scenario.name.clone(),
        students: students.to_vec(),
        programs: programs
            .iter()
            .zip(inst.capacities())
            .map(|(name, &capacity)| RawProgram {
                name: name.clone(),
                capacity,
            })
            .collect(),
        priorities,
        states: states
            .iter()
            .zip(inst.prior())
            .map(|(name, &prob)| RawState {
                name: name.clone(),
                prob,
            })
            .collect(),
        preferences,
        utilities,
        program_utilities,
        unmatched_utility: inst.unmatched_utility(),
        signals: scenario.raw_signals.clone(),
        profiles: scenario.profiles.clone(),
        solver: Some(RawSolver {
            clearing_tol: Some(cfg.clearing.clearing_tol),
            fixed_point_tol: Some(cfg.clearing.fixed_point_tol),
            max_sweeps: Some(cfg.clearing.max_sweeps),
            scheme: Some(cfg.clearing.scheme),
            coupling: Some(cfg.clearing.coupling),
            tie_break: Some(cfg.tie_break),
        }),
    };
    serde_json::to_string_pretty(&raw).map_err(|e| Error::scenario("<emit>", e.to_string()))
}

/// Parses a comma-separated list of reals such as `2,4,1.7,1`. Whitespace
/// around entries is ignored.
pub fn parse_cutoff(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    let mut column = 1;
    for piece in text.trim_end_matches(['\n', '\r']).split(',') {
        let entry = piece.trim();
        let value: f64 = entry.parse().map_err(|_| Error::Parse {
            line: 1,
            column: column + (piece.len() - piece.trim_start().len()),
            message: format!("`{entry}` is not a number"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line: 1,
                column,
                message: format!("`{entry}` is not finite"),
            });
        }
        values.push(value);
        column += piece.chars().count() + 1;
    }
    Ok(values)
}
