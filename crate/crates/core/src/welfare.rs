//! Student and program welfare, Pareto comparison of signal profiles and
//! the serial-dictatorship allocation under a common priority.

use serde::{Deserialize, Serialize};

use crate::clearing::{greatest_market_clearing, verify_market_clearing, ClearingConfig};
use crate::decision::{DecisionRule, NaiveRule, TieBreak};
use crate::demand::{check_inputs, lottery_unchecked, student_state_outcome, Coupling, ExAnteCutoff};
use crate::error::{Error, Result};
use crate::information::{profile_more_informative, Belief, SignalProfile};
use crate::lp::{self, LinearProgram, LpStatus};
use crate::model::MarketInstance;

fn state_table(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(inst, profile, rule, b)?;
    inst.check_student(k)?;
    let lottery = lottery_unchecked(inst, k, b.values(), coupling);
    Ok(student_state_outcome(inst, profile, rule, k, &lottery))
}

fn utility_from_table(inst: &MarketInstance, k: usize, table: &[Vec<f64>]) -> f64 {
    let n = inst.num_programs();
    table
        .iter()
        .enumerate()
        .map(|(w, row)| {
            let matched: f64 = (0..n)
                .filter(|&p| row[p] != 0.0)
                .map(|p| row[p] * inst.utility(k, p, w))
                .sum();
            matched + row[n] * inst.unmatched_utility()
        })
        .sum()
}

fn ranks_from_table(inst: &MarketInstance, k: usize, table: &[Vec<f64>]) -> Vec<f64> {
    let n = inst.num_programs();
    let mut dist = vec![0.0; n + 1];
    for (w, row) in table.iter().enumerate() {
        for (pos, &p) in inst.ranking(k, w).iter().enumerate() {
            dist[pos] += row[p];
        }
        dist[n] += row[n];
    }
    dist
}

/// `U_k`: student `k`'s expected utility at cutoff `b`. Being unmatched pays
/// the instance's unmatched utility.
pub fn expected_utility(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    k: usize,
) -> Result<f64> {
    let table = state_table(inst, profile, rule, b, coupling, k)?;
    Ok(utility_from_table(inst, k, &table))
}

/// Probability that student `k` ends up at their `i`-th ranked program in
/// the realized state (entry `i - 1`), with unmatched last.
pub fn rank_distribution(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    k: usize,
) -> Result<Vec<f64>> {
    let table = state_table(inst, profile, rule, b, coupling, k)?;
    Ok(ranks_from_table(inst, k, &table))
}

/// `U_p`: program `p`'s expected value of the students it enrols.
pub fn expected_program_utility(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    p: usize,
) -> Result<f64> {
    inst.check_program(p)?;
    let values = inst.program_utilities().ok_or(Error::MissingProgramUtilities)?;
    let mut total = 0.0;
    for k in 0..inst.num_students() {
        let table = state_table(inst, profile, rule, b, coupling, k)?;
        let share: f64 = table.iter().map(|row| row[p]).sum();
        total += share * values[p][k];
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub student_utilities: Vec<f64>,
    /// `[k]`: own-rank distribution, unmatched last.
    pub rank_distributions: Vec<Vec<f64>>,
    pub program_utilities: Option<Vec<f64>>,
}

pub fn welfare_report(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
) -> Result<WelfareReport> {
    check_inputs(inst, profile, rule, b)?;
    let n = inst.num_programs();
    let mut student_utilities = Vec::with_capacity(inst.num_students());
    let mut rank_distributions = Vec::with_capacity(inst.num_students());
    let mut shares = vec![vec![0.0; n]; inst.num_students()];
    for k in 0..inst.num_students() {
        let lottery = lottery_unchecked(inst, k, b.values(), coupling);
        let table = student_state_outcome(inst, profile, rule, k, &lottery);
        student_utilities.push(utility_from_table(inst, k, &table));
        rank_distributions.push(ranks_from_table(inst, k, &table));
        for row in &table {
            for p in 0..n {
                shares[k][p] += row[p];
            }
        }
    }
    let program_utilities = inst.program_utilities().map(|values| {
        (0..n)
            .map(|p| (0..inst.num_students()).map(|k| shares[k][p] * values[p][k]).sum())
            .collect()
    });
    Ok(WelfareReport {
        student_utilities,
        rank_distributions,
        program_utilities,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `U_k(high) - U_k(low)`.
    pub student_deltas: Vec<f64>,
    pub student_violations: Vec<usize>,
    /// `U_p(low) - U_p(high)`, present when both cutoffs clear the market
    /// and the instance has program utilities.
    pub program_deltas: Option<Vec<f64>>,
    pub program_violations: Vec<usize>,
}

impl MonotonicityReport {
    pub fn passes(&self) -> bool {
        self.student_violations.is_empty() && self.program_violations.is_empty()
    }
}

/// Students weakly gain from raising cutoffs. Between two market-clearing
/// cutoffs, programs weakly gain from the lower one.
pub fn welfare_monotonicity_check(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    high: &ExAnteCutoff,
    low: &ExAnteCutoff,
    coupling: Coupling,
    tol: f64,
) -> Result<MonotonicityReport> {
    check_inputs(inst, profile, rule, high)?;
    check_inputs(inst, profile, rule, low)?;
    if !low.le(high) {
        return Err(Error::IncomparableCutoffs);
    }
    let hi = welfare_report(inst, profile, rule, high, coupling)?;
    let lo = welfare_report(inst, profile, rule, low, coupling)?;
    let student_deltas: Vec<f64> = hi
        .student_utilities
        .iter()
        .zip(&lo.student_utilities)
        .map(|(a, b)| a - b)
        .collect();
    let student_violations = (0..student_deltas.len())
        .filter(|&k| student_deltas[k] < -tol)
        .collect();

    let both_clear = verify_market_clearing(inst, profile, rule, high, coupling, tol)?.passes()
        && verify_market_clearing(inst, profile, rule, low, coupling, tol)?.passes();
    let program_deltas: Option<Vec<f64>> = match (both_clear, &hi.program_utilities, &lo.program_utilities) {
        (true, Some(h), Some(l)) => Some(l.iter().zip(h).map(|(a, b)| a - b).collect()),
        _ => None,
    };
    let program_violations = program_deltas
        .as_ref()
        .map(|d| (0..d.len()).filter(|&p| d[p] < -tol).collect())
        .unwrap_or_default();
    Ok(MonotonicityReport {
        student_deltas,
        student_violations,
        program_deltas,
        program_violations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParetoVerdict {
    LeftDominates,
    RightDominates,
    Equivalent,
    Incomparable,
}

/// Verdict from per-student deltas `right - left`.
pub fn pareto_verdict(deltas: &[f64], tol: f64) -> ParetoVerdict {
    let right_better = deltas.iter().any(|&d| d > tol);
    let left_better = deltas.iter().any(|&d| d < -tol);
    match (left_better, right_better) {
        (false, false) => ParetoVerdict::Equivalent,
        (true, false) => ParetoVerdict::LeftDominates,
        (false, true) => ParetoVerdict::RightDominates,
        (true, true) => ParetoVerdict::Incomparable,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoComparison {
    pub verdict: ParetoVerdict,
    pub left_cutoff: ExAnteCutoff,
    pub right_cutoff: ExAnteCutoff,
    pub left_utilities: Vec<f64>,
    pub right_utilities: Vec<f64>,
    /// `right - left` per student.
    pub deltas: Vec<f64>,
}

/// Compares two signal profiles by every student's expected utility at the
/// greatest market-clearing cutoff each induces under the naive rule.
pub fn pareto_compare(
    inst: &MarketInstance,
    left: &SignalProfile,
    right: &SignalProfile,
    tie_break: TieBreak,
    cfg: &ClearingConfig,
    tol: f64,
) -> Result<ParetoComparison> {
    let (left_cutoff, left_utilities) = utilities_at_greatest(inst, left, tie_break, cfg)?;
    let (right_cutoff, right_utilities) = utilities_at_greatest(inst, right, tie_break, cfg)?;
    let deltas: Vec<f64> = right_utilities
        .iter()
        .zip(&left_utilities)
        .map(|(r, l)| r - l)
        .collect();
    Ok(ParetoComparison {
        verdict: pareto_verdict(&deltas, tol),
        left_cutoff,
        right_cutoff,
        left_utilities,
        right_utilities,
        deltas,
    })
}

fn utilities_at_greatest(
    inst: &MarketInstance,
    profile: &SignalProfile,
    tie_break: TieBreak,
    cfg: &ClearingConfig,
) -> Result<(ExAnteCutoff, Vec<f64>)> {
    let rule = NaiveRule::new(inst, profile, tie_break)?;
    let top = greatest_market_clearing(inst, profile, &rule, cfg)?;
    let report = welfare_report(inst, profile, &rule, &top.cutoff, cfg.coupling)?;
    Ok((top.cutoff, report.student_utilities))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlackwellDominanceReport {
    /// `left` is at least as informative as `right` for every student.
    pub more_informative: bool,
    /// Greatest cutoff under `left` is coordinate-wise at least the one under `right`.
    pub cutoffs_ordered: bool,
    pub comparison: ParetoComparison,
}

impl BlackwellDominanceReport {
    pub fn premises_hold(&self) -> bool {
        self.more_informative && self.cutoffs_ordered
    }

    /// When both premises hold, `left` must not be dominated by `right`.
    pub fn conclusion_holds(&self) -> bool {
        !self.premises_hold() || self.comparison.verdict != ParetoVerdict::RightDominates
    }
}

/// A more informative profile that also supports weakly higher cutoffs is
/// never Pareto dominated.
pub fn blackwell_dominance_check(
    inst: &MarketInstance,
    left: &SignalProfile,
    right: &SignalProfile,
    tie_break: TieBreak,
    cfg: &ClearingConfig,
    tol: f64,
) -> Result<BlackwellDominanceReport> {
    let more_informative = profile_more_informative(left, right, tol)?;
    let comparison = pareto_compare(inst, left, right, tie_break, cfg, tol)?;
    let cutoffs_ordered = comparison
        .right_cutoff
        .values()
        .iter()
        .zip(comparison.left_cutoff.values())
        .all(|(r, l)| *r <= l + tol);
    Ok(BlackwellDominanceReport {
        more_informative,
        cutoffs_ordered,
        comparison,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerialDictatorship {
    /// Students in the shared priority order.
    pub order: Vec<usize>,
    /// `[k][w][p]`: probability student `k` is placed at `p` in state `w`.
    pub allocations: Vec<Vec<Vec<f64>>>,
    pub utilities: Vec<f64>,
    /// Capacity left after the last student.
    pub remaining: Vec<f64>,
}

impl SerialDictatorship {
    /// `[k][p]` match probabilities with unmatched last, weighted by the prior.
    pub fn marginals(&self, prior: &[f64]) -> Vec<Vec<f64>> {
        self.allocations
            .iter()
            .map(|per_w| {
                let n = per_w.first().map_or(0, Vec::len);
                let mut row = vec![0.0; n + 1];
                for (w, alloc) in per_w.iter().enumerate() {
                    for p in 0..n {
                        row[p] += prior[w] * alloc[p];
                    }
                }
                row[n] = 1.0 - row[..n].iter().sum::<f64>();
                row
            })
            .collect()
    }
}

/// Students in priority order each pick the state-contingent allocation
/// that maximizes their expected utility, subject to one unit of mass per
/// state and the expected capacity left by higher-priority students.
pub fn serial_dictatorship(inst: &MarketInstance, tol: f64) -> Result<SerialDictatorship> {
    let order = inst.common_priority().ok_or(Error::PrioritiesNotCommon)?.to_vec();
    Belief::new(inst.prior().to_vec())?;
    let n = inst.num_programs();
    let m = inst.num_states();
    let prior = inst.prior();
    let u0 = inst.unmatched_utility();
    let mut remaining = inst.capacities().to_vec();
    let mut allocations = vec![Vec::new(); inst.num_students()];
    let mut utilities = vec![0.0; inst.num_students()];
    let var = |w: usize, p: usize| w * n + p;
    for &k in &order {
        let mut lp = LinearProgram::new(n * m);
        let mut objective = vec![0.0; n * m];
        for w in 0..m {
            for p in 0..n {
                objective[var(w, p)] = prior[w] * (inst.utility(k, p, w) - u0);
            }
        }
        lp = lp.maximize(objective);
        for w in 0..m {
            let mut row = vec![0.0; n * m];
            for p in 0..n {
                row[var(w, p)] = 1.0;
            }
            lp = lp.le(row, 1.0);
        }
        for (p, &left) in remaining.iter().enumerate() {
            let mut row = vec![0.0; n * m];
            for w in 0..m {
                row[var(w, p)] = prior[w];
            }
            lp = lp.le(row, left.max(0.0));
        }
        let (x, value) = match lp::maximize(&lp, tol)? {
            LpStatus::Optimal { x, value } => (x, value),
            other => return Err(Error::Lp(format!("allocation for student {k}: {other:?}"))),
        };
        let alloc: Vec<Vec<f64>> = (0..m)
            .map(|w| (0..n).map(|p| x[var(w, p)].max(0.0)).collect())
            .collect();
        for (p, left) in remaining.iter_mut().enumerate() {
            *left -= (0..m).map(|w| prior[w] * alloc[w][p]).sum::<f64>();
        }
        utilities[k] = value + u0;
        allocations[k] = alloc;
    }
    Ok(SerialDictatorship {
        order,
        allocations,
        utilities,
        remaining,
    })
}
