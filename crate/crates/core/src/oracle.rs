//! Brute-force reference computations: exact enumeration of every source
//! of randomness, and seeded Monte Carlo simulation of the matching process.
//!
//! Nothing here calls the demand or welfare routines; choice sets are
//! rebuilt from the priority lists directly.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decision::DecisionRule;
use crate::demand::Coupling;
use crate::error::{Error, Result};
use crate::information::SignalProfile;
use crate::model::{ChoiceSet, MarketInstance};

/// Default cap on enumerated outcomes.
pub const DEFAULT_ORACLE_CAP: usize = 2_000_000;

/// Number of students ahead of `k` in `p`'s priority list.
fn ahead(inst: &MarketInstance, p: usize, k: usize) -> usize {
    inst.priorities()[p]
        .iter()
        .position(|&s| s == k)
        .expect("validated priority lists contain every student")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub probability: f64,
    pub state: usize,
    pub matching: Vec<Option<usize>>,
}

/// Exact distribution over (state, deterministic matching) pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub num_programs: usize,
    pub outcomes: Vec<Outcome>,
}

impl OutcomeDistribution {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    pub fn demand(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_programs];
        for o in &self.outcomes {
            for p in o.matching.iter().flatten() {
                d[*p] += o.probability;
            }
        }
        d
    }

    /// `[k][p]` with unmatched last.
    pub fn marginals(&self, num_students: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.num_programs + 1]; num_students];
        for o in &self.outcomes {
            for (k, slot) in o.matching.iter().enumerate() {
                let col = slot.unwrap_or(self.num_programs);
                m[k][col] += o.probability;
            }
        }
        m
    }

    pub fn expected_utilities(&self, inst: &MarketInstance) -> Vec<f64> {
        let mut u = vec![0.0; inst.num_students()];
        for o in &self.outcomes {
            for (k, slot) in o.matching.iter().enumerate() {
                let payoff = match slot {
                    Some(p) => inst.utility(k, *p, o.state),
                    None => inst.unmatched_utility(),
                };
                u[k] += o.probability * payoff;
            }
        }
        u
    }

    /// Probability of each deterministic matching, ignoring the state.
    pub fn matching_probability(&self, matching: &[Option<usize>]) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| o.matching == matching)
            .map(|o| o.probability)
            .sum()
    }
}

/// Per-student (choice set, weight) atoms under the continuum coupling,
/// found by probing the midpoint of each interval between thresholds.
fn continuum_atoms(inst: &MarketInstance, k: usize, b: &[f64]) -> Vec<(ChoiceSet, f64)> {
    let mut edges = vec![0.0, 1.0];
    for (p, &bp) in b.iter().enumerate() {
        let x = bp - ahead(inst, p, k) as f64;
        if x > 0.0 && x < 1.0 {
            edges.push(x);
        }
    }
    edges.sort_by(|a, c| a.partial_cmp(c).unwrap());
    let mut atoms = Vec::new();
    for pair in edges.windows(2) {
        if pair[1] <= pair[0] {
            continue;
        }
        let e = 0.5 * (pair[0] + pair[1]);
        let set = (0..b.len()).fold(ChoiceSet::empty(), |set, p| {
            if ahead(inst, p, k) as f64 + e <= b[p] {
                set.with(p)
            } else {
                set
            }
        });
        atoms.push((set, pair[1] - pair[0]));
    }
    atoms
}

/// Enumerates every realized cutoff (or, under the continuum coupling, every
/// combination of per-student choice-set atoms), state, realization vector
/// and choice, with product weights.
pub fn enumerate_outcomes(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &[f64],
    coupling: Coupling,
    cap: usize,
) -> Result<OutcomeDistribution> {
    let n = inst.num_programs();
    let t = inst.num_students();
    profile.check_against(t, inst.num_states())?;
    if b.len() != n || b.iter().any(|&x| !(0.0..=t as f64).contains(&x)) {
        return Err(Error::DimensionMismatch(format!(
            "cutoff {b:?} for {n} programs and {t} students"
        )));
    }

    // Each "cutoff scenario" fixes every student's choice set.
    let mut scenarios: Vec<(Vec<ChoiceSet>, f64)> = Vec::new();
    match coupling {
        Coupling::Independent => {
            let points: Vec<Vec<(usize, f64)>> = b
                .iter()
                .map(|&x| {
                    let lo = x.floor() as usize;
                    let hi = x.ceil() as usize;
                    if lo == hi {
                        vec![(lo, 1.0)]
                    } else {
                        vec![(lo, hi as f64 - x), (hi, x - lo as f64)]
                    }
                })
                .collect();
            let count: usize = points.iter().map(Vec::len).product();
            if count > cap {
                return Err(Error::JointTooLarge {
                    size: count as u128,
                    cap,
                });
            }
            for flat in 0..count {
                let mut rest = flat;
                let mut cut = vec![0usize; n];
                let mut weight = 1.0;
                for p in 0..n {
                    let (v, q) = points[p][rest % points[p].len()];
                    rest /= points[p].len();
                    cut[p] = v;
                    weight *= q;
                }
                let sets = (0..t)
                    .map(|k| {
                        let mut set = ChoiceSet::empty();
                        for (p, list) in inst.priorities().iter().enumerate() {
                            if list[..cut[p]].contains(&k) {
                                set = set.with(p);
                            }
                        }
                        set
                    })
                    .collect();
                scenarios.push((sets, weight));
            }
        }
        Coupling::Continuum => {
            let atoms: Vec<Vec<(ChoiceSet, f64)>> = (0..t).map(|k| continuum_atoms(inst, k, b)).collect();
            let count: usize = atoms.iter().map(Vec::len).product();
            if count > cap {
                return Err(Error::JointTooLarge {
                    size: count as u128,
                    cap,
                });
            }
            for flat in 0..count {
                let mut rest = flat;
                let mut sets = Vec::with_capacity(t);
                let mut weight = 1.0;
                for per_k in &atoms {
                    let (set, q) = per_k[rest % per_k.len()];
                    rest /= per_k.len();
                    sets.push(set);
                    weight *= q;
                }
                scenarios.push((sets, weight));
            }
        }
    }

    let radix: Vec<usize> = profile.signals().iter().map(|s| s.num_realizations()).collect();
    let signal_count: usize = radix.iter().product();
    if scenarios
        .len()
        .saturating_mul(inst.num_states())
        .saturating_mul(signal_count)
        > cap
    {
        return Err(Error::JointTooLarge {
            size: scenarios.len() as u128 * inst.num_states() as u128 * signal_count as u128,
            cap,
        });
    }

    let mut outcomes = Vec::new();
    for (sets, q) in &scenarios {
        for (w, &psi) in inst.prior().iter().enumerate() {
            for flat in 0..signal_count {
                let mut rest = flat;
                let mut real = Vec::with_capacity(t);
                let mut weight = q * psi;
                for (k, &r) in radix.iter().enumerate() {
                    let i = rest % r;
                    rest /= r;
                    weight *= profile.get(k).likelihood()[w][i];
                    real.push(i);
                }
                if weight == 0.0 {
                    continue;
                }
                // branch over each student's choice
                let mut partial = vec![(Vec::with_capacity(t), weight)];
                for k in 0..t {
                    let mut next = Vec::new();
                    for (m, wt) in partial {
                        if sets[k].is_empty() {
                            let mut m2: Vec<Option<usize>> = m;
                            m2.push(None);
                            next.push((m2, wt));
                            continue;
                        }
                        let sigma = rule.probabilities(k, sets[k], real[k], w);
                        for (p, &s) in sigma.iter().enumerate() {
                            if s > 0.0 {
                                let mut m2 = m.clone();
                                m2.push(Some(p));
                                next.push((m2, wt * s));
                            }
                        }
                    }
                    partial = next;
                }
                for (matching, probability) in partial {
                    outcomes.push(Outcome {
                        probability,
                        state: w,
                        matching,
                    });
                }
                if outcomes.len() > cap {
                    return Err(Error::JointTooLarge {
                        size: outcomes.len() as u128,
                        cap,
                    });
                }
            }
        }
    }
    Ok(OutcomeDistribution {
        num_programs: n,
        outcomes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub draws: u64,
    pub seed: u64,
    pub coupling: Coupling,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            draws: 100_000,
            seed: 0,
            coupling: Coupling::Independent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub draws: u64,
    pub seed: u64,
    pub coupling: Coupling,
    pub demand_mean: Vec<f64>,
    pub demand_std_err: Vec<f64>,
    pub unmatched_mean: f64,
    pub utility_mean: Vec<f64>,
    pub utility_std_err: Vec<f64>,
    /// Share of draws in which a program enrolled more than its capacity.
    pub over_capacity_freq: Vec<f64>,
}

#[derive(Clone, Default)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean_and_err(&self, n: f64) -> (f64, f64) {
        let mean = self.sum / n;
        if n < 2.0 {
            return (mean, f64::NAN);
        }
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Draws the cutoff, the state, every signal and every choice `draws`
/// times. The same seed gives the same report.
pub fn simulate(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &[f64],
    cfg: &SimulationConfig,
) -> Result<SimulationReport> {
    let n = inst.num_programs();
    let t = inst.num_students();
    profile.check_against(t, inst.num_states())?;
    if cfg.draws == 0 {
        return Err(Error::OutOfRange {
            what: "draw count".into(),
            value: 0.0,
        });
    }
    if b.len() != n || b.iter().any(|&x| !(0.0..=t as f64).contains(&x)) {
        return Err(Error::DimensionMismatch(format!(
            "cutoff {b:?} for {n} programs and {t} students"
        )));
    }
    let weights_err = |e: rand::distr::weighted::Error| Error::InvalidSignal(e.to_string());
    let state_dist = WeightedIndex::new(inst.prior()).map_err(weights_err)?;
    // [k][w]
    let mut signal_dist: Vec<Vec<WeightedIndex<f64>>> = Vec::with_capacity(t);
    for signal in profile.signals() {
        signal_dist.push(
            signal
                .likelihood()
                .iter()
                .map(WeightedIndex::new)
                .collect::<std::result::Result<_, _>>()
                .map_err(weights_err)?,
        );
    }
    let positions: Vec<Vec<f64>> = (0..t)
        .map(|k| (0..n).map(|p| ahead(inst, p, k) as f64).collect())
        .collect();
    let mut choice_cache: HashMap<(usize, u64, usize, usize), WeightedIndex<f64>> = HashMap::new();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut demand = vec![Moments::default(); n];
    let mut utility: Vec<Moments> = (0..t).map(|_| Moments::default()).collect();
    let mut over = vec![0u64; n];
    let mut unmatched = 0u64;
    let mut cut = vec![0.0; n];
    let mut counts = vec![0u32; n];
    for _ in 0..cfg.draws {
        if cfg.coupling == Coupling::Independent {
            for (p, &bp) in b.iter().enumerate() {
                let lo = bp.floor();
                cut[p] = if bp > lo && rng.random_bool(bp - lo) {
                    lo + 1.0
                } else {
                    lo
                };
            }
        }
        let w = state_dist.sample(&mut rng);
        counts.iter_mut().for_each(|c| *c = 0);
        for k in 0..t {
            let i = signal_dist[k][w].sample(&mut rng);
            let set = match cfg.coupling {
                // admitted when fewer than cut[p] students are ahead
                Coupling::Independent => {
                    (0..n).fold(
                        ChoiceSet::empty(),
                        |s, p| {
                            if positions[k][p] < cut[p] {
                                s.with(p)
                            } else {
                                s
                            }
                        },
                    )
                }
                Coupling::Continuum => {
                    let e: f64 = rng.random();
                    (0..n).fold(ChoiceSet::empty(), |s, p| {
                        if positions[k][p] + e <= b[p] {
                            s.with(p)
                        } else {
                            s
                        }
                    })
                }
            };
            let payoff = if set.is_empty() {
                unmatched += 1;
                inst.unmatched_utility()
            } else {
                let dist = match choice_cache.entry((k, set.bits(), i, w)) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        let sigma = rule.probabilities(k, set, i, w);
                        e.insert(WeightedIndex::new(&sigma).map_err(weights_err)?)
                    }
                };
                let p = dist.sample(&mut rng);
                counts[p] += 1;
                inst.utility(k, p, w)
            };
            utility[k].push(payoff);
        }
        for p in 0..n {
            demand[p].push(counts[p] as f64);
            if counts[p] as f64 > inst.capacity(p) {
                over[p] += 1;
            }
        }
    }
    let draws = cfg.draws as f64;
    let (demand_mean, demand_std_err) = demand.iter().map(|m| m.mean_and_err(draws)).unzip();
    let (utility_mean, utility_std_err) = utility.iter().map(|m| m.mean_and_err(draws)).unzip();
    Ok(SimulationReport {
        draws: cfg.draws,
        seed: cfg.seed,
        coupling: cfg.coupling,
        demand_mean,
        demand_std_err,
        unmatched_mean: unmatched as f64 / draws,
        utility_mean,
        utility_std_err,
        over_capacity_freq: over.iter().map(|&c| c as f64 / draws).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{NaiveRule, TieBreak};
    use crate::information::Signal;
    use crate::model::{InstanceParts, UtilityModel};

    fn lone_student() -> MarketInstance {
        MarketInstance::new(InstanceParts {
            students: vec!["a".into()],
            programs: vec!["x".into(), "y".into()],
            capacities: vec![1.0, 1.0],
            priorities: vec![vec![0], vec![0]],
            states: vec!["w".into()],
            prior: vec![1.0],
            utilities: UtilityModel::RankBased {
                values: vec![2.0, 1.0],
                rankings: vec![vec![vec![1, 0]]],
            },
            program_utilities: None,
            unmatched_utility: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn integer_cutoff_and_null_signal_give_one_outcome() {
        let inst = lone_student();
        let profile = SignalProfile::uniform(Signal::null(1), 1);
        let rule = NaiveRule::new(&inst, &profile, TieBreak::Error).unwrap();
        let dist = enumerate_outcomes(&inst, &profile, &rule, &[1.0, 1.0], Coupling::Independent, 10).unwrap();
        assert_eq!(dist.outcomes.len(), 1);
        assert_eq!(dist.outcomes[0].probability, 1.0);
        assert_eq!(dist.outcomes[0].matching, vec![Some(1)]);
    }

    #[test]
    fn cap_is_enforced() {
        let inst = lone_student();
        let profile = SignalProfile::uniform(Signal::null(1), 1);
        let rule = NaiveRule::new(&inst, &profile, TieBreak::Error).unwrap();
        assert!(matches!(
            enumerate_outcomes(&inst, &profile, &rule, &[0.5, 0.5], Coupling::Independent, 3),
            Err(Error::JointTooLarge { size: 4, cap: 3 })
        ));
    }

    #[test]
    fn single_draw_is_a_valid_matching() {
        let inst = lone_student();
        let profile = SignalProfile::uniform(Signal::null(1), 1);
        let rule = NaiveRule::new(&inst, &profile, TieBreak::Error).unwrap();
        let cfg = SimulationConfig {
            draws: 1,
            seed: 7,
            coupling: Coupling::Independent,
        };
        let r = simulate(&inst, &profile, &rule, &[0.5, 0.5], &cfg).unwrap();
        let matched: f64 = r.demand_mean.iter().sum();
        assert_eq!(matched + r.unmatched_mean, 1.0);
        assert!(r.demand_mean.iter().all(|&d| d == 0.0 || d == 1.0));
    }

    #[test]
    fn zero_draws_rejected() {
        let inst = lone_student();
        let profile = SignalProfile::uniform(Signal::null(1), 1);
        let rule = NaiveRule::new(&inst, &profile, TieBreak::Error).unwrap();
        let cfg = SimulationConfig {
            draws: 0,
            ..SimulationConfig::default()
        };
        assert!(simulate(&inst, &profile, &rule, &[1.0, 1.0], &cfg).is_err());
    }
}
