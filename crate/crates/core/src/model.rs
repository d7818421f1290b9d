//! Market primitives: students, programs, priorities, capacities, states,
//! the common prior and cardinal utilities.
//!
//! Students, programs and states are addressed by their index in the
//! instance's ordered lists; names are kept for I/O.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Probability mass tolerance used by instance validation.
pub const PROB_TOL: f64 = 1e-9;

/// Expected utilities closer than this are a tie.
pub const TIE_TOL: f64 = 1e-9;

/// A subset of programs encoded as a bit mask (program `p` is bit `p`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ChoiceSet(u64);

impl ChoiceSet {
    pub const MAX_PROGRAMS: usize = 63;

    pub const fn empty() -> Self {
        ChoiceSet(0)
    }

    pub fn full(n: usize) -> Self {
        assert!(n <= Self::MAX_PROGRAMS);
        ChoiceSet((1u64 << n) - 1)
    }

    pub const fn from_bits(bits: u64) -> Self {
        ChoiceSet(bits)
    }

    pub fn from_programs(programs: impl IntoIterator<Item = usize>) -> Self {
        programs.into_iter().fold(ChoiceSet(0), |c, p| c.with(p))
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn with(self, p: usize) -> Self {
        ChoiceSet(self.0 | (1 << p))
    }

    pub fn without(self, p: usize) -> Self {
        ChoiceSet(self.0 & !(1 << p))
    }

    pub fn contains(self, p: usize) -> bool {
        p < 64 && self.0 & (1 << p) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset_of(self, other: ChoiceSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |p| bits & (1 << p) != 0)
    }

    /// All nonempty subsets of the first `n` programs, in mask order.
    pub fn all_nonempty(n: usize) -> impl Iterator<Item = ChoiceSet> {
        (1..(1u64 << n)).map(ChoiceSet)
    }
}

impl Serialize for ChoiceSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ChoiceSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let programs = Vec::<usize>::deserialize(deserializer)?;
        if let Some(&p) = programs.iter().find(|&&p| p >= Self::MAX_PROGRAMS) {
            return Err(serde::de::Error::custom(format!("program index {p} too large")));
        }
        Ok(ChoiceSet::from_programs(programs))
    }
}

impl fmt::Debug for ChoiceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Student utilities over programs in every state.
#[derive(Clone, Debug, PartialEq)]
pub enum UtilityModel {
    /// `values[i]` is the payoff of the student's `i`-th ranked program in
    /// the realized state. `rankings[k][w]` lists programs best first.
    RankBased {
        values: Vec<f64>,
        rankings: Vec<Vec<Vec<usize>>>,
    },
    /// `matrix[k][w][p]` is the payoff of program `p` to student `k` in state `w`.
    Explicit { matrix: Vec<Vec<Vec<f64>>> },
}

/// Raw ingredients of a [`MarketInstance`].
#[derive(Clone, Debug)]
pub struct InstanceParts {
    pub students: Vec<String>,
    pub programs: Vec<String>,
    pub capacities: Vec<f64>,
    /// Per program, students from highest to lowest priority.
    pub priorities: Vec<Vec<usize>>,
    pub states: Vec<String>,
    pub prior: Vec<f64>,
    pub utilities: UtilityModel,
    /// Per program, value of each student (`[p][k]`).
    pub program_utilities: Option<Vec<Vec<f64>>>,
    pub unmatched_utility: f64,
}

/// A complete problem statement. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketInstance {
    students: Vec<String>,
    programs: Vec<String>,
    capacities: Vec<f64>,
    priorities: Vec<Vec<usize>>,
    states: Vec<String>,
    prior: Vec<f64>,
    utilities: UtilityModel,
    program_utilities: Option<Vec<Vec<f64>>>,
    unmatched_utility: f64,
    // [p][k], 1-based; 0 when the student is missing from the priority list.
    rank_table: Vec<Vec<usize>>,
    // [k][w][p]; NaN when the student's ranking omits the program.
    utility_table: Vec<Vec<Vec<f64>>>,
}

impl MarketInstance {
    /// Builds an instance after checking that every table has the right
    /// shape. Semantic invariants are left to [`validate_instance`].
    pub fn new(parts: InstanceParts) -> Result<Self> {
        let InstanceParts {
            students,
            programs,
            capacities,
            priorities,
            states,
            prior,
            utilities,
            program_utilities,
            unmatched_utility,
        } = parts;
        let t = students.len();
        let n = programs.len();
        let m = states.len();
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));

        if t == 0 || n == 0 || m == 0 {
            return mismatch("students, programs and states must be nonempty".into());
        }
        if n > ChoiceSet::MAX_PROGRAMS {
            return mismatch(format!("at most {} programs supported", ChoiceSet::MAX_PROGRAMS));
        }
        if capacities.len() != n {
            return mismatch(format!("{} capacities for {n} programs", capacities.len()));
        }
        if priorities.len() != n {
            return mismatch(format!("{} priority lists for {n} programs", priorities.len()));
        }
        if prior.len() != m {
            return mismatch(format!("prior has {} entries for {m} states", prior.len()));
        }
        for (p, list) in priorities.iter().enumerate() {
            if let Some(&k) = list.iter().find(|&&k| k >= t) {
                return mismatch(format!("priority of program {p} names student index {k} of {t}"));
            }
        }

        let utility_table = match &utilities {
            UtilityModel::RankBased { values, rankings } => {
                if values.len() != n {
                    return mismatch(format!("{} rank values for {n} programs", values.len()));
                }
                if rankings.len() != t {
                    return mismatch(format!("{} ranking lists for {t} students", rankings.len()));
                }
                let mut table = vec![vec![vec![f64::NAN; n]; m]; t];
                for (k, per_state) in rankings.iter().enumerate() {
                    if per_state.len() != m {
                        return mismatch(format!("student {k}: rankings for {} states", per_state.len()));
                    }
                    for (w, ranking) in per_state.iter().enumerate() {
                        if ranking.len() > n || ranking.iter().any(|&p| p >= n) {
                            return mismatch(format!("student {k}, state {w}: bad ranking"));
                        }
                        for (pos, &p) in ranking.iter().enumerate() {
                            if table[k][w][p].is_nan() {
                                table[k][w][p] = values[pos];
                            }
                        }
                    }
                }
                table
            }
            UtilityModel::Explicit { matrix } => {
                if matrix.len() != t
                    || matrix
                        .iter()
                        .any(|s| s.len() != m || s.iter().any(|row| row.len() != n))
                {
                    return mismatch("explicit utility matrix must be students x states x programs".into());
                }
                matrix.clone()
            }
        };

        if let Some(pu) = &program_utilities {
            if pu.len() != n || pu.iter().any(|row| row.len() != t) {
                return mismatch("program utilities must be programs x students".into());
            }
        }

        let rank_table = priorities
            .iter()
            .map(|list| {
                let mut ranks = vec![0; t];
                for (pos, &k) in list.iter().enumerate() {
                    if ranks[k] == 0 {
                        ranks[k] = pos + 1;
                    }
                }
                ranks
            })
            .collect();

        Ok(MarketInstance {
            students,
            programs,
            capacities,
            priorities,
            states,
            prior,
            utilities,
            program_utilities,
            unmatched_utility,
            rank_table,
            utility_table,
        })
    }

    pub fn num_students(&self) -> usize {
        self.students.len()
    }

    pub fn num_programs(&self) -> usize {
        self.programs.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn students(&self) -> &[String] {
        &self.students
    }

    pub fn programs(&self) -> &[String] {
        &self.programs
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn capacity(&self, p: usize) -> f64 {
        self.capacities[p]
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn priorities(&self) -> &[Vec<usize>] {
        &self.priorities
    }

    pub fn utility_model(&self) -> &UtilityModel {
        &self.utilities
    }

    pub fn program_utilities(&self) -> Option<&[Vec<f64>]> {
        self.program_utilities.as_deref()
    }

    pub fn unmatched_utility(&self) -> f64 {
        self.unmatched_utility
    }

    /// `t` as a real number: the upper end of every cutoff range.
    pub fn t(&self) -> f64 {
        self.students.len() as f64
    }

    /// Payoff `u_k(p, w)`.
    pub fn utility(&self, k: usize, p: usize, w: usize) -> f64 {
        self.utility_table[k][w][p]
    }

    /// Student `k`'s programs in state `w`, best first.
    pub fn ranking(&self, k: usize, w: usize) -> Vec<usize> {
        match &self.utilities {
            UtilityModel::RankBased { rankings, .. } => rankings[k][w].clone(),
            UtilityModel::Explicit { .. } => {
                let row = &self.utility_table[k][w];
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                order
            }
        }
    }

    /// Position (0-based) of `p` in student `k`'s ranking for state `w`.
    pub fn preference_position(&self, k: usize, p: usize, w: usize) -> Option<usize> {
        self.ranking(k, w).iter().position(|&q| q == p)
    }

    pub fn student_index(&self, name: &str) -> Result<usize> {
        lookup(&self.students, name, "student")
    }

    pub fn program_index(&self, name: &str) -> Result<usize> {
        lookup(&self.programs, name, "program")
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        lookup(&self.states, name, "state")
    }

    /// 1-based rank of student `k` at program `p`: the number of students
    /// with strictly higher priority, plus one.
    pub fn rank(&self, p: usize, k: usize) -> Result<usize> {
        self.check_program(p)?;
        self.check_student(k)?;
        match self.rank_table[p][k] {
            0 => Err(Error::UnknownIdentifier {
                kind: "student in priority list",
                name: self.students[k].clone(),
            }),
            r => Ok(r),
        }
    }

    /// Rank of the student point `(k, e)` in the continuum formulation:
    /// higher-priority students plus `e`.
    pub fn rank_continuum(&self, p: usize, k: usize, e: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::OutOfRange {
                what: "student point offset e".into(),
                value: e,
            });
        }
        Ok((self.rank(p, k)? - 1) as f64 + e)
    }

    /// Unchecked rank lookup for hot loops over validated instances.
    pub(crate) fn rank_unchecked(&self, p: usize, k: usize) -> usize {
        self.rank_table[p][k]
    }

    /// The shared priority order, if all programs use the same one.
    pub fn common_priority(&self) -> Option<&[usize]> {
        let first = &self.priorities[0];
        self.priorities
            .iter()
            .all(|list| list == first)
            .then_some(first.as_slice())
    }

    /// Replaces the prior, keeping everything else.
    pub fn with_prior(&self, prior: Vec<f64>) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.prior = prior;
        MarketInstance::new(parts)
    }

    /// Replaces the utility model, keeping everything else.
    pub fn with_utilities(&self, utilities: UtilityModel) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.utilities = utilities;
        MarketInstance::new(parts)
    }

    pub fn to_parts(&self) -> InstanceParts {
        InstanceParts {
            students: self.students.clone(),
            programs: self.programs.clone(),
            capacities: self.capacities.clone(),
            priorities: self.priorities.clone(),
            states: self.states.clone(),
            prior: self.prior.clone(),
            utilities: self.utilities.clone(),
            program_utilities: self.program_utilities.clone(),
            unmatched_utility: self.unmatched_utility,
        }
    }

    pub(crate) fn check_student(&self, k: usize) -> Result<()> {
        check_index(k, self.students.len(), "student")
    }

    pub(crate) fn check_program(&self, p: usize) -> Result<()> {
        check_index(p, self.programs.len(), "program")
    }
}

fn lookup(names: &[String], name: &str, kind: &'static str) -> Result<usize> {
    names
        .iter()
        .position(|s| s == name)
        .ok_or_else(|| Error::UnknownIdentifier {
            kind,
            name: name.to_string(),
        })
}

fn check_index(index: usize, size: usize, kind: &'static str) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { kind, index, size })
    }
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Outcome of [`validate_instance`]. Failures make the instance unusable;
/// warnings flag assumptions that only matter for some signal profiles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub failures: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }

    /// Converts a failing report into an error.
    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(self))
        }
    }

    fn fail(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.failures.push(Issue {
            location: location.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.failures {
            writeln!(f, "error: {issue}")?;
        }
        for issue in &self.warnings {
            writeln!(f, "warning: {issue}")?;
        }
        Ok(())
    }
}

/// Checks every semantic invariant of the instance.
///
/// Expected-utility ties under the prior are reported as warnings: they only
/// bite when some student's signal leaves her at the prior (see
/// [`expected_utility_ties`], which the decision rules call eagerly).
pub fn validate_instance(inst: &MarketInstance) -> ValidationReport {
    let mut report = ValidationReport::default();
    let t = inst.num_students();
    let n = inst.num_programs();

    if inst.prior.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        report.fail("prior", "entries must be finite and nonnegative");
    }
    let total: f64 = inst.prior.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        report.fail("prior", format!("prior not normalized (sums to {total})"));
    }

    for (p, &cap) in inst.capacities.iter().enumerate() {
        if !(cap > 0.0) || !cap.is_finite() {
            report.fail(
                format!("capacities[{}]", inst.programs[p]),
                format!("capacity must be positive, got {cap}"),
            );
        }
    }

    for (p, list) in inst.priorities.iter().enumerate() {
        let mut seen = vec![false; t];
        let mut ok = list.len() == t;
        for &k in list {
            ok &= !std::mem::replace(&mut seen[k], true);
        }
        if !ok {
            report.fail(
                format!("priorities[{}]", inst.programs[p]),
                "priority order is not a permutation of the students",
            );
        }
    }

    match &inst.utilities {
        UtilityModel::RankBased { values, rankings } => {
            if values.windows(2).any(|w| !(w[0] > w[1])) {
                report.fail("utilities.values", "rank values are not strictly decreasing");
            }
            for (k, per_state) in rankings.iter().enumerate() {
                for (w, ranking) in per_state.iter().enumerate() {
                    let mut seen = vec![false; n];
                    let mut ok = ranking.len() == n;
                    for &p in ranking {
                        ok &= !std::mem::replace(&mut seen[p], true);
                    }
                    if !ok {
                        report.fail(
                            format!("preferences[{}][{}]", inst.states[w], inst.students[k]),
                            "ranking is not a permutation of the programs",
                        );
                    }
                }
            }
        }
        UtilityModel::Explicit { matrix } => {
            for (k, per_state) in matrix.iter().enumerate() {
                for (w, row) in per_state.iter().enumerate() {
                    let location = || format!("utilities[{}][{}]", inst.students[k], inst.states[w]);
                    if row.iter().any(|u| !u.is_finite()) {
                        report.fail(location(), "utilities must be finite");
                        continue;
                    }
                    let mut sorted = row.clone();
                    sorted.sort_by(f64::total_cmp);
                    if sorted.windows(2).any(|w| w[0] == w[1]) {
                        report.fail(location(), "two programs share a utility value");
                    }
                }
            }
        }
    }

    if let Some(pu) = &inst.program_utilities {
        for (p, values) in pu.iter().enumerate() {
            let order = &inst.priorities[p];
            let consistent = order.windows(2).all(|w| values[w[0]] > values[w[1]]);
            if !consistent {
                report.fail(
                    format!("program_utilities[{}]", inst.programs[p]),
                    "values must strictly decrease along the priority order",
                );
            }
        }
    }

    if report.is_ok() {
        for k in 0..t {
            if let Some((a, b, _)) = expected_utility_ties(inst, k, &inst.prior).first() {
                report.warnings.push(Issue {
                    location: format!("student {}", inst.students[k]),
                    message: format!(
                        "programs {} and {} tie in expected utility under the prior",
                        inst.programs[*a], inst.programs[*b]
                    ),
                });
            }
        }
    }
    report
}

/// Expected utility of every program for student `k` under `belief`.
pub fn expected_utilities(inst: &MarketInstance, k: usize, belief: &[f64]) -> Vec<f64> {
    (0..inst.num_programs())
        .map(|p| {
            belief
                .iter()
                .enumerate()
                .map(|(w, &mu)| if mu == 0.0 { 0.0 } else { mu * inst.utility(k, p, w) })
                .sum()
        })
        .collect()
}

/// Pairs of programs whose expected utilities under `belief` are within
/// [`TIE_TOL`], with the gap.
pub fn expected_utility_ties(inst: &MarketInstance, k: usize, belief: &[f64]) -> Vec<(usize, usize, f64)> {
    let eu = expected_utilities(inst, k, belief);
    let mut ties = Vec::new();
    for a in 0..eu.len() {
        for b in a + 1..eu.len() {
            let gap = (eu[a] - eu[b]).abs();
            if gap <= TIE_TOL {
                ties.push((a, b, gap));
            }
        }
    }
    ties
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(prior: Vec<f64>, values: Vec<f64>) -> MarketInstance {
        MarketInstance::new(InstanceParts {
            students: vec!["s1".into(), "s2".into()],
            programs: vec!["p1".into(), "p2".into()],
            capacities: vec![1.0, 1.0],
            priorities: vec![vec![0, 1], vec![1, 0]],
            states: vec!["w1".into(), "w2".into()],
            prior,
            utilities: UtilityModel::RankBased {
                values,
                rankings: vec![vec![vec![0, 1], vec![1, 0]], vec![vec![0, 1], vec![0, 1]]],
            },
            program_utilities: None,
            unmatched_utility: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn unnormalized_prior_fails() {
        let report = validate_instance(&tiny(vec![0.6, 0.6], vec![2.0, 1.0]));
        assert!(!report.is_ok());
        assert!(report.failures[0].message.contains("not normalized"));
    }

    #[test]
    fn flat_rank_values_fail() {
        let report = validate_instance(&tiny(vec![0.3, 0.7], vec![1.0, 1.0]));
        assert!(report
            .failures
            .iter()
            .any(|i| i.message.contains("strictly decreasing")));
    }

    #[test]
    fn ranks_are_one_based() {
        let inst = tiny(vec![0.3, 0.7], vec![2.0, 1.0]);
        assert_eq!(inst.rank(0, 0).unwrap(), 1);
        assert_eq!(inst.rank(1, 0).unwrap(), 2);
        assert_eq!(inst.rank_continuum(1, 0, 0.25).unwrap(), 1.25);
        assert!(inst.rank_continuum(1, 0, 1.5).is_err());
        assert!(inst.rank(2, 0).is_err());
    }

    #[test]
    fn prior_tie_is_only_a_warning() {
        let report = validate_instance(&tiny(vec![0.5, 0.5], vec![2.0, 1.0]));
        assert!(report.is_ok());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn choice_set_ops() {
        let c = ChoiceSet::from_programs([0, 2]);
        assert!(c.contains(2) && !c.contains(1));
        assert_eq!(c.len(), 2);
        assert!(c.is_subset_of(ChoiceSet::full(3)));
        assert_eq!(c.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(ChoiceSet::all_nonempty(3).count(), 7);
    }
}
