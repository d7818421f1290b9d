//! Cutoffs, their randomization, choice sets, demand and matching
//! distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decision::DecisionRule;
use crate::error::{Error, Result};
use crate::information::SignalProfile;
use crate::model::{ChoiceSet, MarketInstance};

/// Default cap on the number of joint outcomes a matching distribution lists.
pub const DEFAULT_JOINT_CAP: usize = 1_000_000;

/// Integer cutoff vector: program `p` admits the students ranked `1..=b̄_p`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeterministicCutoff(Vec<usize>);

impl DeterministicCutoff {
    pub fn new(values: Vec<usize>, t: usize) -> Result<Self> {
        if let Some(&v) = values.iter().find(|&&v| v > t) {
            return Err(Error::OutOfRange {
                what: format!("deterministic cutoff entry (t = {t})"),
                value: v as f64,
            });
        }
        Ok(DeterministicCutoff(values))
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn to_ex_ante(&self) -> ExAnteCutoff {
        ExAnteCutoff(self.0.iter().map(|&v| v as f64).collect())
    }
}

/// Real cutoff vector in `[0, t]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExAnteCutoff(Vec<f64>);

impl ExAnteCutoff {
    pub fn new(values: Vec<f64>, t: f64) -> Result<Self> {
        for &v in &values {
            if !(0.0..=t).contains(&v) {
                return Err(Error::OutOfRange {
                    what: format!("cutoff entry (t = {t})"),
                    value: v,
                });
            }
        }
        Ok(ExAnteCutoff(values))
    }

    /// Every program at `value`.
    pub fn constant(n: usize, value: f64) -> Self {
        ExAnteCutoff(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, p: usize) -> f64 {
        self.0[p]
    }

    /// Copy with coordinate `p` replaced.
    pub fn with(&self, p: usize, value: f64) -> Self {
        let mut v = self.0.clone();
        v[p] = value;
        ExAnteCutoff(v)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Coordinate-wise `self <= other`.
    pub fn le(&self, other: &ExAnteCutoff) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn sup_distance(&self, other: &ExAnteCutoff) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check(&self, inst: &MarketInstance) -> Result<()> {
        if self.0.len() != inst.num_programs() {
            return Err(Error::DimensionMismatch(format!(
                "cutoff has {} entries for {} programs",
                self.0.len(),
                inst.num_programs()
            )));
        }
        ExAnteCutoff::new(self.0.clone(), inst.t()).map(|_| ())
    }
}

/// How programs' cutoff randomizations are correlated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Each program draws its integer cutoff independently.
    #[default]
    Independent,
    /// Each student is a continuum of points `e ∈ [0, 1]`; a point is
    /// admitted at `p` when its rank `(rank - 1) + e` is at most `b_p`.
    Continuum,
}

/// The per-program two-point randomization of an ex-ante cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffDistribution {
    // [p] -> (integer cutoff, probability), one or two points
    per_program: Vec<Vec<(usize, f64)>>,
}

impl CutoffDistribution {
    pub fn per_program(&self) -> &[Vec<(usize, f64)>] {
        &self.per_program
    }

    /// Number of integer cutoff vectors with positive probability.
    pub fn support_size(&self) -> u128 {
        self.per_program.iter().map(|d| d.len() as u128).product()
    }

    /// Joint support under independent randomization, in lexicographic order
    /// of the per-program points.
    pub fn support(&self) -> Vec<(DeterministicCutoff, f64)> {
        let mut out = vec![(Vec::with_capacity(self.per_program.len()), 1.0)];
        for dist in &self.per_program {
            let mut next = Vec::with_capacity(out.len() * dist.len());
            for (prefix, weight) in &out {
                for &(v, q) in dist {
                    let mut c = prefix.clone();
                    c.push(v);
                    next.push((c, weight * q));
                }
            }
            out = next;
        }
        out.into_iter().map(|(v, q)| (DeterministicCutoff(v), q)).collect()
    }

    /// Probability of one integer cutoff vector.
    pub fn prob(&self, cutoff: &DeterministicCutoff) -> f64 {
        self.per_program
            .iter()
            .zip(cutoff.values())
            .map(|(dist, v)| dist.iter().find(|(x, _)| x == v).map_or(0.0, |&(_, q)| q))
            .product()
    }
}

/// `b_p = 1.7` becomes cutoff 1 with probability 0.3 and 2 with 0.7.
pub fn cutoff_distribution(b: &ExAnteCutoff, t: usize) -> Result<CutoffDistribution> {
    let b = ExAnteCutoff::new(b.values().to_vec(), t as f64)?;
    let per_program = b
        .values()
        .iter()
        .map(|&x| {
            let lo = x.floor();
            let frac = x - lo;
            if frac == 0.0 {
                vec![(lo as usize, 1.0)]
            } else {
                vec![(lo as usize, 1.0 - frac), (lo as usize + 1, frac)]
            }
        })
        .collect();
    Ok(CutoffDistribution { per_program })
}

/// Programs whose cutoff admits student `k`.
pub fn choice_set(inst: &MarketInstance, k: usize, cutoff: &DeterministicCutoff) -> Result<ChoiceSet> {
    inst.check_student(k)?;
    if cutoff.values().len() != inst.num_programs() {
        return Err(Error::DimensionMismatch(format!(
            "cutoff has {} entries for {} programs",
            cutoff.values().len(),
            inst.num_programs()
        )));
    }
    Ok(choice_set_unchecked(inst, k, cutoff.values()))
}

pub(crate) fn choice_set_unchecked(inst: &MarketInstance, k: usize, cutoff: &[usize]) -> ChoiceSet {
    let mut c = ChoiceSet::empty();
    for (p, &v) in cutoff.iter().enumerate() {
        if inst.rank_unchecked(p, k) <= v {
            c = c.with(p);
        }
    }
    c
}

/// Probability that student `k` is admitted at `p`: `clamp(b_p - rank + 1, 0, 1)`.
/// The same under both couplings.
pub fn admission_probability(inst: &MarketInstance, k: usize, p: usize, b: &ExAnteCutoff) -> Result<f64> {
    b.check(inst)?;
    Ok(admission_unchecked(inst, k, p, b.get(p)))
}

fn admission_unchecked(inst: &MarketInstance, k: usize, p: usize, bp: f64) -> f64 {
    (bp - inst.rank_unchecked(p, k) as f64 + 1.0).clamp(0.0, 1.0)
}

/// Distribution of student `k`'s choice set under cutoff `b`. Sets are
/// listed once each, in increasing bit order; weights sum to one.
pub fn choice_set_lottery(
    inst: &MarketInstance,
    k: usize,
    b: &ExAnteCutoff,
    coupling: Coupling,
) -> Result<Vec<(ChoiceSet, f64)>> {
    inst.check_student(k)?;
    b.check(inst)?;
    Ok(lottery_unchecked(inst, k, b.values(), coupling))
}

pub(crate) fn lottery_unchecked(
    inst: &MarketInstance,
    k: usize,
    b: &[f64],
    coupling: Coupling,
) -> Vec<(ChoiceSet, f64)> {
    let admit: Vec<f64> = (0..b.len()).map(|p| admission_unchecked(inst, k, p, b[p])).collect();
    let mut lottery: BTreeMap<u64, f64> = BTreeMap::new();
    match coupling {
        Coupling::Independent => {
            let mut sure = ChoiceSet::empty();
            let mut fractional = Vec::new();
            for (p, &a) in admit.iter().enumerate() {
                if a >= 1.0 {
                    sure = sure.with(p);
                } else if a > 0.0 {
                    fractional.push(p);
                }
            }
            for mask in 0u64..(1 << fractional.len()) {
                let mut c = sure;
                let mut weight = 1.0;
                for (j, &p) in fractional.iter().enumerate() {
                    if mask & (1 << j) != 0 {
                        c = c.with(p);
                        weight *= admit[p];
                    } else {
                        weight *= 1.0 - admit[p];
                    }
                }
                *lottery.entry(c.bits()).or_insert(0.0) += weight;
            }
        }
        Coupling::Continuum => {
            for (c, weight) in continuum_segments(&admit) {
                *lottery.entry(c.bits()).or_insert(0.0) += weight;
            }
        }
    }
    lottery
        .into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|(bits, w)| (ChoiceSet::from_bits(bits), w))
        .collect()
}

/// Segments of `e ∈ [0, 1]` with a constant choice set, given each
/// program's threshold. A point `e` is admitted wherever `e <= x_p`.
fn continuum_segments(thresholds: &[f64]) -> Vec<(ChoiceSet, f64)> {
    let mut cuts: Vec<f64> = thresholds.iter().copied().filter(|&x| x > 0.0 && x < 1.0).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let c = ChoiceSet::from_programs((0..thresholds.len()).filter(|&p| thresholds[p] >= hi));
            (c, hi - lo)
        })
        .collect()
}

/// Expected enrolment at each program plus the expected unmatched mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandVector {
    pub per_program: Vec<f64>,
    pub unmatched: f64,
}

impl DemandVector {
    pub fn matched(&self) -> f64 {
        self.per_program.iter().sum()
    }
}

/// Joint probabilities of (state, outcome) for student `k`: `[w][p]`, with
/// the last column unmatched.
pub(crate) fn student_state_outcome(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    k: usize,
    lottery: &[(ChoiceSet, f64)],
) -> Vec<Vec<f64>> {
    let n = inst.num_programs();
    let signal = profile.get(k);
    let mut table = vec![vec![0.0; n + 1]; inst.num_states()];
    for (w, row) in table.iter_mut().enumerate() {
        let psi = inst.prior()[w];
        if psi == 0.0 {
            continue;
        }
        for &(c, q) in lottery {
            if c.is_empty() {
                row[n] += q * psi;
                continue;
            }
            for i in 0..signal.num_realizations() {
                let weight = q * psi * signal.prob(i, w);
                if weight == 0.0 {
                    continue;
                }
                let sigma = rule.probabilities(k, c, i, w);
                for p in c.iter() {
                    row[p] += weight * sigma[p];
                }
            }
        }
    }
    table
}

fn student_outcome(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    k: usize,
    lottery: &[(ChoiceSet, f64)],
) -> Vec<f64> {
    let table = student_state_outcome(inst, profile, rule, k, lottery);
    let mut row = vec![0.0; inst.num_programs() + 1];
    for per_w in table {
        for (acc, x) in row.iter_mut().zip(per_w) {
            *acc += x;
        }
    }
    row
}

pub(crate) fn check_inputs(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
) -> Result<()> {
    profile.check_against(inst.num_students(), inst.num_states())?;
    if rule.num_programs() != inst.num_programs() {
        return Err(Error::DimensionMismatch(format!(
            "decision rule covers {} programs, instance has {}",
            rule.num_programs(),
            inst.num_programs()
        )));
    }
    b.check(inst)
}

/// Expected demand at cutoff `b`.
pub fn demand(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
) -> Result<DemandVector> {
    check_inputs(inst, profile, rule, b)?;
    Ok(demand_unchecked(inst, profile, rule, b.values(), coupling))
}

pub(crate) fn demand_unchecked(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &[f64],
    coupling: Coupling,
) -> DemandVector {
    let n = inst.num_programs();
    let mut total = vec![0.0; n + 1];
    for k in 0..inst.num_students() {
        let lottery = lottery_unchecked(inst, k, b, coupling);
        let row = student_outcome(inst, profile, rule, k, &lottery);
        for (acc, x) in total.iter_mut().zip(row) {
            *acc += x;
        }
    }
    let unmatched = total.pop().unwrap_or(0.0);
    DemandVector {
        per_program: total,
        unmatched,
    }
}

/// One cell of the joint outcome distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointOutcome {
    /// Realized integer cutoff; `None` under the continuum coupling, where
    /// only the choice sets are meaningful.
    pub cutoff: Option<DeterministicCutoff>,
    pub choice_sets: Vec<ChoiceSet>,
    pub state: usize,
    pub realizations: Vec<usize>,
    /// Program of each student, `None` when unmatched.
    pub matching: Vec<Option<usize>>,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingDistribution {
    /// `[k][p]` match probabilities; the last column is unmatched.
    pub marginals: Vec<Vec<f64>>,
    pub joint: Option<Vec<JointOutcome>>,
}

impl MatchingDistribution {
    pub fn column_sums(&self) -> Vec<f64> {
        let cols = self.marginals.first().map_or(0, Vec::len);
        (0..cols)
            .map(|p| self.marginals.iter().map(|row| row[p]).sum())
            .collect()
    }

    /// Joint probabilities aggregated by deterministic matching.
    pub fn matching_probabilities(&self) -> Option<BTreeMap<Vec<Option<usize>>, f64>> {
        self.joint.as_ref().map(|joint| {
            let mut out = BTreeMap::new();
            for o in joint {
                *out.entry(o.matching.clone()).or_insert(0.0) += o.probability;
            }
            out
        })
    }
}

/// Marginal match probabilities, plus the joint outcome list when
/// `joint_cap` is given. Requesting a joint larger than the cap fails with
/// [`Error::JointTooLarge`].
pub fn matching_distribution(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    joint_cap: Option<usize>,
) -> Result<MatchingDistribution> {
    check_inputs(inst, profile, rule, b)?;
    let lotteries: Vec<Vec<(ChoiceSet, f64)>> = (0..inst.num_students())
        .map(|k| lottery_unchecked(inst, k, b.values(), coupling))
        .collect();
    let marginals = lotteries
        .iter()
        .enumerate()
        .map(|(k, lottery)| student_outcome(inst, profile, rule, k, lottery))
        .collect();
    let joint = match joint_cap {
        None => None,
        Some(cap) => Some(joint_outcomes(inst, profile, rule, b, coupling, &lotteries, cap)?),
    };
    Ok(MatchingDistribution { marginals, joint })
}

fn joint_outcomes(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    lotteries: &[Vec<(ChoiceSet, f64)>],
    cap: usize,
) -> Result<Vec<JointOutcome>> {
    // (cutoff, per-student choice sets, weight)
    let scenarios: Vec<(Option<DeterministicCutoff>, Vec<ChoiceSet>, f64)> = match coupling {
        Coupling::Independent => {
            let dist = cutoff_distribution(b, inst.num_students())?;
            let size = dist.support_size();
            if size > cap as u128 {
                return Err(Error::JointTooLarge { size, cap });
            }
            dist.support()
                .into_iter()
                .map(|(c, q)| {
                    let sets = (0..inst.num_students())
                        .map(|k| choice_set_unchecked(inst, k, c.values()))
                        .collect();
                    (Some(c), sets, q)
                })
                .collect()
        }
        Coupling::Continuum => {
            let size: u128 = lotteries.iter().map(|l| l.len() as u128).product();
            if size > cap as u128 {
                return Err(Error::JointTooLarge { size, cap });
            }
            let mut out = vec![(Vec::new(), 1.0)];
            for lottery in lotteries {
                let mut next = Vec::with_capacity(out.len() * lottery.len());
                for (sets, q) in &out {
                    for &(c, r) in lottery {
                        let mut s: Vec<ChoiceSet> = sets.clone();
                        s.push(c);
                        next.push((s, q * r));
                    }
                }
                out = next;
            }
            out.into_iter().map(|(s, q)| (None, s, q)).collect()
        }
    };

    let realizations: u128 = profile.signals().iter().map(|s| s.num_realizations() as u128).product();
    let bound = scenarios.len() as u128 * inst.num_states() as u128 * realizations;
    if bound > cap as u128 {
        return Err(Error::JointTooLarge { size: bound, cap });
    }

    let t = inst.num_students();
    let mut outcomes = Vec::new();
    for (cutoff, sets, q) in &scenarios {
        for w in 0..inst.num_states() {
            let psi = inst.prior()[w];
            if psi * q == 0.0 {
                continue;
            }
            // odometer over realization vectors
            let mut real = vec![0usize; t];
            loop {
                let weight: f64 = psi
                    * q
                    * real
                        .iter()
                        .enumerate()
                        .map(|(k, &i)| profile.get(k).prob(i, w))
                        .product::<f64>();
                if weight > 0.0 {
                    expand_choices(rule, inst, sets, w, &real, weight, |matching, prob| {
                        outcomes.push(JointOutcome {
                            cutoff: cutoff.clone(),
                            choice_sets: sets.clone(),
                            state: w,
                            realizations: real.clone(),
                            matching,
                            probability: prob,
                        });
                    });
                    if outcomes.len() > cap {
                        return Err(Error::JointTooLarge {
                            size: outcomes.len() as u128,
                            cap,
                        });
                    }
                }
                if !advance(&mut real, |k| profile.get(k).num_realizations()) {
                    break;
                }
            }
        }
    }
    Ok(outcomes)
}

/// Branches over each student's (possibly random) choice.
fn expand_choices(
    rule: &dyn DecisionRule,
    inst: &MarketInstance,
    sets: &[ChoiceSet],
    w: usize,
    real: &[usize],
    weight: f64,
    mut emit: impl FnMut(Vec<Option<usize>>, f64),
) {
    let mut partial: Vec<(Vec<Option<usize>>, f64)> = vec![(Vec::with_capacity(sets.len()), weight)];
    for (k, &c) in sets.iter().enumerate() {
        let options: Vec<(Option<usize>, f64)> = if c.is_empty() {
            vec![(None, 1.0)]
        } else {
            let sigma = rule.probabilities(k, c, real[k], w);
            (0..inst.num_programs())
                .filter(|&p| sigma[p] > 0.0)
                .map(|p| (Some(p), sigma[p]))
                .collect()
        };
        let mut next = Vec::with_capacity(partial.len() * options.len());
        for (m, q) in &partial {
            for &(choice, r) in &options {
                let mut m2 = m.clone();
                m2.push(choice);
                next.push((m2, q * r));
            }
        }
        partial = next;
    }
    for (m, q) in partial {
        emit(m, q);
    }
}

/// Mixed-radix increment; false once every digit has wrapped.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for (k, d) in digits.iter_mut().enumerate() {
        *d += 1;
        if *d < radix(k) {
            return true;
        }
        *d = 0;
    }
    false
}
