//! Random small markets for integration tests.
#![allow(dead_code)]

use probmatch::decision::{GeneralDecisionProfile, NaiveRule, TieBreak};
use probmatch::demand::ExAnteCutoff;
use probmatch::information::{Signal, SignalProfile};
use probmatch::model::{InstanceParts, MarketInstance, UtilityModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Market {
    pub instance: MarketInstance,
    pub profile: SignalProfile,
    pub rule: NaiveRule,
}

#[derive(Clone, Copy)]
pub struct Shape {
    pub max_students: usize,
    pub max_programs: usize,
    pub max_states: usize,
    pub max_realizations: usize,
    pub common_priority: bool,
    pub full_disclosure: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_students: 4,
            max_programs: 3,
            max_states: 3,
            max_realizations: 3,
            common_priority: false,
            full_disclosure: false,
        }
    }
}

fn distribution(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn random_signal(rng: &mut ChaCha8Rng, states: usize, max_realizations: usize) -> Signal {
    let r = rng.random_range(1..=max_realizations);
    let rows = (0..states).map(|_| distribution(rng, r)).collect();
    Signal::from_matrix(rows).unwrap()
}

pub fn random_instance(rng: &mut ChaCha8Rng, shape: &Shape) -> MarketInstance {
    let t = rng.random_range(1..=shape.max_students);
    let n = rng.random_range(1..=shape.max_programs);
    let m = rng.random_range(1..=shape.max_states);
    let students: Vec<usize> = (0..t).collect();
    let shared = {
        let mut order = students.clone();
        order.shuffle(rng);
        order
    };
    let priorities: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            if shape.common_priority {
                shared.clone()
            } else {
                let mut order = students.clone();
                order.shuffle(rng);
                order
            }
        })
        .collect();
    // strictly decreasing payoffs by rank
    let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..10.0)).collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for i in 1..n {
        if values[i] >= values[i - 1] - 1e-3 {
            values[i] = values[i - 1] - 0.1;
        }
    }
    let shift = values.last().map_or(0.0, |v| 0.5 - v.min(0.5));
    values.iter_mut().for_each(|v| *v += shift);
    let rankings = (0..t)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(rng);
                    order
                })
                .collect()
        })
        .collect();
    let capacities = (0..n)
        .map(|_| [0.5, 1.0, 1.0, 1.5, 2.0][rng.random_range(0..5)])
        .collect();
    let program_utilities = Some(
        (0..n)
            .map(|p| {
                let list = &priorities[p];
                let mut row = vec![0.0; t];
                for (pos, &k) in list.iter().enumerate() {
                    row[k] = (t - pos) as f64;
                }
                row
            })
            .collect(),
    );
    MarketInstance::new(InstanceParts {
        students: (0..t).map(|k| format!("s{}", k + 1)).collect(),
        programs: (0..n).map(|p| format!("p{}", p + 1)).collect(),
        capacities,
        priorities,
        states: (0..m).map(|w| format!("w{}", w + 1)).collect(),
        prior: distribution(rng, m),
        utilities: UtilityModel::RankBased { values, rankings },
        program_utilities,
        unmatched_utility: 0.0,
    })
    .unwrap()
}

/// A random market whose naive rule has no ties. Redraws until one is found.
pub fn random_market(seed: u64, shape: &Shape) -> Market {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let instance = random_instance(&mut rng, shape);
        let t = instance.num_students();
        let m = instance.num_states();
        let profile = if shape.full_disclosure {
            SignalProfile::uniform(Signal::full_disclosure(m), t)
        } else {
            SignalProfile::new(
                (0..t)
                    .map(|_| random_signal(&mut rng, m, shape.max_realizations))
                    .collect(),
            )
            .unwrap()
        };
        if let Ok(rule) = NaiveRule::new(&instance, &profile, TieBreak::Error) {
            return Market {
                instance,
                profile,
                rule,
            };
        }
    }
}

pub fn random_cutoff(rng: &mut ChaCha8Rng, inst: &MarketInstance) -> ExAnteCutoff {
    let t = inst.t();
    let values = (0..inst.num_programs())
        .map(|_| match rng.random_range(0..4) {
            0 => rng.random_range(0..=inst.num_students()) as f64,
            _ => rng.random_range(0.0..=t),
        })
        .collect();
    ExAnteCutoff::new(values, t).unwrap()
}

/// `low <= high`, both random.
pub fn random_pair(rng: &mut ChaCha8Rng, inst: &MarketInstance) -> (ExAnteCutoff, ExAnteCutoff) {
    let a = random_cutoff(rng, inst);
    let b = random_cutoff(rng, inst);
    let low = a.values().iter().zip(b.values()).map(|(x, y)| x.min(*y)).collect();
    let high = a.values().iter().zip(b.values()).map(|(x, y)| x.max(*y)).collect();
    (
        ExAnteCutoff::new(low, inst.t()).unwrap(),
        ExAnteCutoff::new(high, inst.t()).unwrap(),
    )
}

/// Luce choice with random positive weights per (student, realization,
/// state, program). Always has gross substitutes.
pub fn luce_profile(rng: &mut ChaCha8Rng, market: &Market) -> GeneralDecisionProfile {
    let inst = &market.instance;
    let n = inst.num_programs();
    let weights: Vec<Vec<Vec<Vec<f64>>>> = (0..inst.num_students())
        .map(|k| {
            (0..market.profile.get(k).num_realizations())
                .map(|_| {
                    (0..inst.num_states())
                        .map(|_| (0..n).map(|_| rng.random_range(0.1..1.0)).collect())
                        .collect()
                })
                .collect()
        })
        .collect();
    GeneralDecisionProfile::from_fn(inst, &market.profile, |k, c, i, w| {
        let v = &weights[k][i][w];
        let total: f64 = c.iter().map(|p| v[p]).sum();
        (0..n).map(|p| if c.contains(p) { v[p] / total } else { 0.0 }).collect()
    })
    .unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
