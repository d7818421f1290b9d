//! Student decision rules: the naive expected-utility maximizer, general
//! stochastic decision profiles, and the obedience and gross-substitutes
//! verifiers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::information::{posterior, Belief, SignalProfile};
use crate::model::{expected_utilities, ChoiceSet, MarketInstance, PROB_TOL, TIE_TOL};

/// A decision profile: for student `k` facing nonempty choice set `C` after
/// realization `i` in state `w`, a distribution over programs supported in `C`.
pub trait DecisionRule {
    /// Probability of each program (length `n`).
    fn probabilities(&self, student: usize, choice: ChoiceSet, realization: usize, state: usize) -> Vec<f64>;

    /// Number of programs the rule is defined over.
    fn num_programs(&self) -> usize;
}

/// How the naive rule treats expected-utility ties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// A tie is an instance error.
    #[default]
    Error,
    /// Lowest program index wins. Exploratory only.
    Index,
}

/// The naive rule: pick the program with the highest expected utility under
/// the posterior, ignoring the state.
#[derive(Clone, Debug)]
pub struct NaiveRule {
    n: usize,
    // [k][i] expected utility of every program
    expected: Vec<Vec<Vec<f64>>>,
    // [k][i] realization has positive marginal
    reachable: Vec<Vec<bool>>,
    tie_break: TieBreak,
}

impl NaiveRule {
    /// Precomputes posterior expected utilities. With [`TieBreak::Error`],
    /// any pair of programs tying under a reachable posterior is rejected
    /// here, since every pair is a possible choice set.
    pub fn new(inst: &MarketInstance, profile: &SignalProfile, tie_break: TieBreak) -> Result<Self> {
        profile.check_against(inst.num_students(), inst.num_states())?;
        let prior = Belief::new(inst.prior().to_vec())?;
        let prior_eu: Vec<Vec<f64>> = (0..inst.num_students())
            .map(|k| expected_utilities(inst, k, prior.probs()))
            .collect();
        let mut expected = Vec::with_capacity(inst.num_students());
        let mut reachable = Vec::with_capacity(inst.num_students());
        for (k, signal) in profile.signals().iter().enumerate() {
            let mut per_i = Vec::with_capacity(signal.num_realizations());
            let mut reach = Vec::with_capacity(signal.num_realizations());
            for i in 0..signal.num_realizations() {
                match posterior(&prior, signal, i) {
                    Ok(mu) => {
                        let eu = expected_utilities(inst, k, mu.probs());
                        if tie_break == TieBreak::Error {
                            if let Some((a, b, gap)) = first_tie(&eu) {
                                return Err(Error::Tie {
                                    student: k,
                                    realization: i,
                                    first: a,
                                    second: b,
                                    gap,
                                });
                            }
                        }
                        per_i.push(eu);
                        reach.push(true);
                    }
                    Err(Error::ZeroMarginal { .. }) => {
                        // never weighted; fall back to the prior
                        per_i.push(prior_eu[k].clone());
                        reach.push(false);
                    }
                    Err(e) => return Err(e),
                }
            }
            expected.push(per_i);
            reachable.push(reach);
        }
        Ok(NaiveRule {
            n: inst.num_programs(),
            expected,
            reachable,
            tie_break,
        })
    }

    pub fn tie_break(&self) -> TieBreak {
        self.tie_break
    }

    /// Expected utility of each program for student `k` after realization `i`.
    pub fn expected_utilities(&self, k: usize, i: usize) -> &[f64] {
        &self.expected[k][i]
    }

    fn argmax(&self, k: usize, choice: ChoiceSet, i: usize) -> usize {
        let eu = &self.expected[k][i];
        let mut best = usize::MAX;
        for p in choice.iter() {
            // strict improvement beyond the tie tolerance keeps the lowest index
            if best == usize::MAX || eu[p] > eu[best] + TIE_TOL {
                best = p;
            }
        }
        best
    }
}

fn first_tie(eu: &[f64]) -> Option<(usize, usize, f64)> {
    for a in 0..eu.len() {
        for b in a + 1..eu.len() {
            let gap = (eu[a] - eu[b]).abs();
            if gap <= TIE_TOL {
                return Some((a, b, gap));
            }
        }
    }
    None
}

impl DecisionRule for NaiveRule {
    fn probabilities(&self, k: usize, choice: ChoiceSet, i: usize, _state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        if !choice.is_empty() {
            out[self.argmax(k, choice, i)] = 1.0;
        }
        out
    }

    fn num_programs(&self) -> usize {
        self.n
    }
}

/// The program the naive rule picks.
pub fn naive_decide(rule: &NaiveRule, student: usize, choice: ChoiceSet, realization: usize) -> Result<usize> {
    if choice.is_empty() {
        return Err(Error::EmptyChoiceSet);
    }
    let reach = rule.reachable.get(student).ok_or(Error::IndexOutOfRange {
        kind: "student",
        index: student,
        size: rule.reachable.len(),
    })?;
    match reach.get(realization) {
        None => Err(Error::IndexOutOfRange {
            kind: "realization",
            index: realization,
            size: reach.len(),
        }),
        Some(false) => Err(Error::ZeroMarginal { realization }),
        Some(true) => {
            if choice.iter().any(|p| p >= rule.n) {
                return Err(Error::IndexOutOfRange {
                    kind: "program",
                    index: choice.iter().last().unwrap_or(0),
                    size: rule.n,
                });
            }
            Ok(rule.argmax(student, choice, realization))
        }
    }
}

/// A decision profile stored as an explicit table over every nonempty
/// choice set.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralDecisionProfile {
    n: usize,
    num_states: usize,
    // [k][mask - 1][i][w] -> distribution over programs
    table: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

/// Largest `n` for which a full table is built.
pub const MAX_TABLE_PROGRAMS: usize = 12;

impl GeneralDecisionProfile {
    /// Tabulates `rule(k, C, i, w)` for every student, nonempty choice set,
    /// realization and state, checking each entry is a distribution on `C`.
    pub fn from_fn<F>(inst: &MarketInstance, profile: &SignalProfile, rule: F) -> Result<Self>
    where
        F: Fn(usize, ChoiceSet, usize, usize) -> Vec<f64>,
    {
        let n = inst.num_programs();
        let m = inst.num_states();
        if n > MAX_TABLE_PROGRAMS {
            return Err(Error::OutOfRange {
                what: "programs in a tabulated decision profile".into(),
                value: n as f64,
            });
        }
        profile.check_against(inst.num_students(), m)?;
        let mut table = Vec::with_capacity(inst.num_students());
        for (k, signal) in profile.signals().iter().enumerate() {
            let mut per_c = Vec::with_capacity((1 << n) - 1);
            for c in ChoiceSet::all_nonempty(n) {
                let mut per_i = Vec::with_capacity(signal.num_realizations());
                for i in 0..signal.num_realizations() {
                    let mut per_w = Vec::with_capacity(m);
                    for w in 0..m {
                        let dist = rule(k, c, i, w);
                        check_distribution(&dist, n, c).map_err(|msg| {
                            Error::InvalidSignal(format!(
                                "decision rule for student {k}, set {c:?}, realization {i}, state {w}: {msg}"
                            ))
                        })?;
                        per_w.push(dist);
                    }
                    per_i.push(per_w);
                }
                per_c.push(per_i);
            }
            table.push(per_c);
        }
        Ok(GeneralDecisionProfile {
            n,
            num_states: m,
            table,
        })
    }

    pub fn from_rule(inst: &MarketInstance, profile: &SignalProfile, rule: &dyn DecisionRule) -> Result<Self> {
        GeneralDecisionProfile::from_fn(inst, profile, |k, c, i, w| rule.probabilities(k, c, i, w))
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// True when no entry depends on the state.
    pub fn is_state_independent(&self) -> bool {
        self.table
            .iter()
            .flatten()
            .flatten()
            .all(|per_w| per_w.windows(2).all(|w| w[0] == w[1]))
    }

    /// True when every entry is a point mass.
    pub fn is_degenerate(&self) -> bool {
        self.table
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .all(|dist| dist.iter().all(|&x| x == 0.0 || x == 1.0))
    }
}

fn check_distribution(dist: &[f64], n: usize, c: ChoiceSet) -> std::result::Result<(), String> {
    if dist.len() != n {
        return Err(format!("{} entries for {n} programs", dist.len()));
    }
    if dist.iter().any(|&x| !(x >= 0.0)) {
        return Err("negative probability".into());
    }
    if dist.iter().enumerate().any(|(p, &x)| x > 0.0 && !c.contains(p)) {
        return Err("mass outside the choice set".into());
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(format!("sums to {total}"));
    }
    Ok(())
}

impl DecisionRule for GeneralDecisionProfile {
    fn probabilities(&self, k: usize, choice: ChoiceSet, i: usize, w: usize) -> Vec<f64> {
        if choice.is_empty() {
            return vec![0.0; self.n];
        }
        self.table[k][choice.bits() as usize - 1][i][w].clone()
    }

    fn num_programs(&self) -> usize {
        self.n
    }
}

/// The naive rule as a (degenerate, state-independent) general profile.
pub fn lift_naive(inst: &MarketInstance, profile: &SignalProfile, rule: &NaiveRule) -> Result<GeneralDecisionProfile> {
    GeneralDecisionProfile::from_rule(inst, profile, rule)
}

/// Which form of the obedience inequality to check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ObedienceForm {
    /// `sum_w psi pi sigma(p) [u(p) - u(p')] >= 0`: following a recommendation
    /// to take `p` beats switching to `p'`.
    #[default]
    Standard,
    /// `sum_w psi pi sigma(p) u(p) >= sum_w psi pi sigma(p') u(p')`, the
    /// variant that weights each side by its own recommendation probability.
    Printed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObedienceViolation {
    pub student: usize,
    pub choice: ChoiceSet,
    pub realization: usize,
    pub recommended: usize,
    pub deviation: usize,
    pub slack: f64,
}

/// Checks obedience for every student, nonempty choice set, realization with
/// positive marginal and ordered pair of programs in the set. Returns the
/// violations (empty means pass).
pub fn check_obedience(
    rule: &dyn DecisionRule,
    inst: &MarketInstance,
    profile: &SignalProfile,
    form: ObedienceForm,
    tol: f64,
) -> Result<Vec<ObedienceViolation>> {
    profile.check_against(inst.num_students(), inst.num_states())?;
    let n = inst.num_programs();
    let m = inst.num_states();
    let prior = inst.prior();
    let mut violations = Vec::new();
    for (k, signal) in profile.signals().iter().enumerate() {
        for i in 0..signal.num_realizations() {
            if signal.marginal(prior, i) <= 0.0 {
                continue;
            }
            for c in ChoiceSet::all_nonempty(n) {
                let sigma: Vec<Vec<f64>> = (0..m).map(|w| rule.probabilities(k, c, i, w)).collect();
                for p in c.iter() {
                    for q in c.iter().filter(|&q| q != p) {
                        let slack: f64 = (0..m)
                            .map(|w| {
                                let weight = prior[w] * signal.prob(i, w);
                                match form {
                                    ObedienceForm::Standard => {
                                        weight * sigma[w][p] * (inst.utility(k, p, w) - inst.utility(k, q, w))
                                    }
                                    ObedienceForm::Printed => {
                                        weight
                                            * (sigma[w][p] * inst.utility(k, p, w)
                                                - sigma[w][q] * inst.utility(k, q, w))
                                    }
                                }
                            })
                            .sum();
                        if slack < -tol {
                            violations.push(ObedienceViolation {
                                student: k,
                                choice: c,
                                realization: i,
                                recommended: p,
                                deviation: q,
                                slack,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(violations)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutesViolation {
    pub student: usize,
    pub smaller: ChoiceSet,
    pub larger: ChoiceSet,
    pub realization: usize,
    pub state: usize,
    pub program: usize,
    pub slack: f64,
}

/// Checks `sigma(C)(p) >= sigma(C')(p)` for every nested pair `C ⊆ C'`,
/// realization with positive marginal, state and `p ∈ C`.
pub fn check_gross_substitutes(
    rule: &dyn DecisionRule,
    inst: &MarketInstance,
    profile: &SignalProfile,
    tol: f64,
) -> Result<Vec<SubstitutesViolation>> {
    profile.check_against(inst.num_students(), inst.num_states())?;
    let n = inst.num_programs();
    let m = inst.num_states();
    let sets: Vec<ChoiceSet> = ChoiceSet::all_nonempty(n).collect();
    let mut violations = Vec::new();
    for (k, signal) in profile.signals().iter().enumerate() {
        for i in 0..signal.num_realizations() {
            if signal.marginal(inst.prior(), i) <= 0.0 {
                continue;
            }
            for w in 0..m {
                let sigma: Vec<Vec<f64>> = sets.iter().map(|&c| rule.probabilities(k, c, i, w)).collect();
                for (a, &small) in sets.iter().enumerate() {
                    for (b, &large) in sets.iter().enumerate() {
                        if a == b || !small.is_subset_of(large) {
                            continue;
                        }
                        for p in small.iter() {
                            let slack = sigma[a][p] - sigma[b][p];
                            if slack < -tol {
                                violations.push(SubstitutesViolation {
                                    student: k,
                                    smaller: small,
                                    larger: large,
                                    realization: i,
                                    state: w,
                                    program: p,
                                    slack,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(violations)
}
