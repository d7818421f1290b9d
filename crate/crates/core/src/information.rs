//! Signals, Bayes posteriors, belief distributions and the Blackwell order.

use crate::error::{Error, Result};
use crate::lp::{self, Feasibility, LinearProgram};
use crate::model::PROB_TOL;

/// Posteriors closer than this in max-norm are identified.
pub const POSTERIOR_MERGE_TOL: f64 = 1e-9;

/// A probability vector over states.
#[derive(Clone, Debug, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::OutOfRange {
                what: "belief entry".into(),
                value: probs.iter().copied().find(|x| !(*x >= 0.0)).unwrap_or(f64::NAN),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::OutOfRange {
                what: "belief total".into(),
                value: total,
            });
        }
        Ok(Belief(probs))
    }

    pub fn point_mass(num_states: usize, state: usize) -> Self {
        let mut v = vec![0.0; num_states];
        v[state] = 1.0;
        Belief(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn distance(&self, other: &Belief) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A state-conditional distribution over a finite set of realizations.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    labels: Vec<String>,
    // [state][realization]
    likelihood: Vec<Vec<f64>>,
}

impl Signal {
    /// `likelihood[w][i]` is the probability of realization `i` in state `w`.
    pub fn new(labels: Vec<String>, likelihood: Vec<Vec<f64>>) -> Result<Self> {
        if likelihood.is_empty() {
            return Err(Error::InvalidSignal("no states".into()));
        }
        let width = labels.len();
        if width == 0 {
            return Err(Error::InvalidSignal("no realizations".into()));
        }
        for (w, row) in likelihood.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidSignal(format!(
                    "state {w} has {} entries for {width} realizations",
                    row.len()
                )));
            }
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidSignal(format!("state {w} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidSignal(format!("state {w} row sums to {total}")));
            }
        }
        Ok(Signal { labels, likelihood })
    }

    /// Like [`Signal::new`] with labels `i1`, `i2`, ...
    pub fn from_matrix(likelihood: Vec<Vec<f64>>) -> Result<Self> {
        let width = likelihood.first().map_or(0, Vec::len);
        Signal::new(default_labels(width), likelihood)
    }

    /// Reveals the state exactly.
    pub fn full_disclosure(num_states: usize) -> Self {
        let likelihood = (0..num_states)
            .map(|w| (0..num_states).map(|i| if i == w { 1.0 } else { 0.0 }).collect())
            .collect();
        Signal {
            labels: default_labels(num_states),
            likelihood,
        }
    }

    /// Reveals which cell of `cells` contains the state.
    pub fn partition(num_states: usize, cells: &[Vec<usize>]) -> Result<Self> {
        let mut owner = vec![None; num_states];
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::InvalidPartition(format!("cell {c} is empty")));
            }
            for &w in cell {
                if w >= num_states {
                    return Err(Error::InvalidPartition(format!("state {w} out of range")));
                }
                if owner[w].replace(c).is_some() {
                    return Err(Error::InvalidPartition(format!("state {w} appears twice")));
                }
            }
        }
        if let Some(w) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidPartition(format!("state {w} is not covered")));
        }
        let likelihood = owner
            .iter()
            .map(|cell| {
                let cell = cell.expect("covered");
                (0..cells.len()).map(|c| if c == cell { 1.0 } else { 0.0 }).collect()
            })
            .collect();
        Ok(Signal {
            labels: default_labels(cells.len()),
            likelihood,
        })
    }

    /// One realization in every state: no information.
    pub fn null(num_states: usize) -> Self {
        Signal {
            labels: default_labels(1),
            likelihood: vec![vec![1.0]; num_states],
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::InvalidSignal("label count mismatch".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_states(&self) -> usize {
        self.likelihood.len()
    }

    pub fn num_realizations(&self) -> usize {
        self.labels.len()
    }

    /// `pi(i | w)`.
    pub fn prob(&self, realization: usize, state: usize) -> f64 {
        self.likelihood[state][realization]
    }

    pub fn likelihood(&self) -> &[Vec<f64>] {
        &self.likelihood
    }

    /// Unconditional probability of `realization` under `prior`.
    pub fn marginal(&self, prior: &[f64], realization: usize) -> f64 {
        prior
            .iter()
            .zip(&self.likelihood)
            .map(|(psi, row)| psi * row[realization])
            .sum()
    }
}

fn default_labels(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("i{i}")).collect()
}

/// One signal per student, in instance order.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalProfile(Vec<Signal>);

impl SignalProfile {
    pub fn new(signals: Vec<Signal>) -> Result<Self> {
        if let Some(first) = signals.first() {
            if signals.iter().any(|s| s.num_states() != first.num_states()) {
                return Err(Error::InvalidSignal("signals disagree on the state count".into()));
            }
        }
        Ok(SignalProfile(signals))
    }

    /// The same signal for each of `t` students.
    pub fn uniform(signal: Signal, t: usize) -> Self {
        SignalProfile(vec![signal; t])
    }

    pub fn signals(&self) -> &[Signal] {
        &self.0
    }

    pub fn get(&self, k: usize) -> &Signal {
        &self.0[k]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks the profile against an instance's student and state counts.
    pub fn check_against(&self, t: usize, num_states: usize) -> Result<()> {
        if self.0.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "signal profile has {} signals for {t} students",
                self.0.len()
            )));
        }
        if self.0.iter().any(|s| s.num_states() != num_states) {
            return Err(Error::DimensionMismatch(format!(
                "signals must be defined over {num_states} states"
            )));
        }
        Ok(())
    }
}

/// A finite distribution over posterior beliefs.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefDistribution {
    pub support: Vec<(Belief, f64)>,
}

/// Bayes posterior after observing `realization`.
pub fn posterior(prior: &Belief, signal: &Signal, realization: usize) -> Result<Belief> {
    if prior.len() != signal.num_states() {
        return Err(Error::DimensionMismatch("prior and signal state counts differ".into()));
    }
    if realization >= signal.num_realizations() {
        return Err(Error::IndexOutOfRange {
            kind: "realization",
            index: realization,
            size: signal.num_realizations(),
        });
    }
    let joint: Vec<f64> = prior
        .probs()
        .iter()
        .enumerate()
        .map(|(w, &psi)| signal.prob(realization, w) * psi)
        .collect();
    let marginal: f64 = joint.iter().sum();
    if !(marginal > 0.0) {
        return Err(Error::ZeroMarginal { realization });
    }
    Ok(Belief(joint.into_iter().map(|x| x / marginal).collect()))
}

/// Distribution over posteriors induced by `signal`; realizations with the
/// same posterior are merged.
pub fn belief_distribution(prior: &Belief, signal: &Signal) -> Result<BeliefDistribution> {
    let mut support: Vec<(Belief, f64)> = Vec::new();
    for i in 0..signal.num_realizations() {
        let weight = signal.marginal(prior.probs(), i);
        if weight <= 0.0 {
            continue;
        }
        let mu = posterior(prior, signal, i)?;
        match support.iter_mut().find(|(b, _)| b.distance(&mu) < POSTERIOR_MERGE_TOL) {
            Some((_, w)) => *w += weight,
            None => support.push((mu, weight)),
        }
    }
    Ok(BeliefDistribution { support })
}

/// True iff the weighted average of the posteriors equals `prior` within
/// `tol` in every component.
pub fn check_bayes_plausible(dist: &BeliefDistribution, prior: &Belief, tol: f64) -> bool {
    let mut mean = vec![0.0; prior.len()];
    for (mu, weight) in &dist.support {
        if mu.len() != prior.len() {
            return false;
        }
        for (m, x) in mean.iter_mut().zip(mu.probs()) {
            *m += weight * x;
        }
    }
    mean.iter().zip(prior.probs()).all(|(a, b)| (a - b).abs() <= tol)
}

/// Row-stochastic matrix `T(i' | i)`, rows indexed by the finer signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Garbling(Vec<Vec<f64>>);

impl Garbling {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let width = matrix.first().map_or(0, Vec::len);
        for (i, row) in matrix.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.len() != width || width == 0 {
                return Err(Error::DimensionMismatch(format!("garbling row {i} is ragged")));
            }
            if row.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidSignal(format!("garbling row {i} is not stochastic")));
            }
        }
        Ok(Garbling(matrix))
    }

    pub fn identity(n: usize) -> Self {
        Garbling(
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    /// Sends realization `i` to output `map[i]`.
    pub fn deterministic(map: &[usize], outputs: usize) -> Result<Self> {
        Garbling::new(
            map.iter()
                .map(|&o| (0..outputs).map(|j| if j == o { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn inputs(&self) -> usize {
        self.0.len()
    }

    pub fn outputs(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Garbling) -> Result<Garbling> {
        if self.outputs() != next.inputs() {
            return Err(Error::DimensionMismatch("garblings do not compose".into()));
        }
        let m = next.outputs();
        Ok(Garbling(
            self.0
                .iter()
                .map(|row| {
                    (0..m)
                        .map(|j| row.iter().zip(&next.0).map(|(a, r)| a * r[j]).sum())
                        .collect()
                })
                .collect(),
        ))
    }
}

/// The garbled signal `pi'(i'|w) = sum_i pi(i|w) T(i'|i)`.
pub fn apply_garbling(signal: &Signal, g: &Garbling) -> Result<Signal> {
    if g.inputs() != signal.num_realizations() {
        return Err(Error::DimensionMismatch(format!(
            "garbling has {} inputs for {} realizations",
            g.inputs(),
            signal.num_realizations()
        )));
    }
    let likelihood = signal
        .likelihood
        .iter()
        .map(|row| {
            (0..g.outputs())
                .map(|j| row.iter().zip(&g.0).map(|(p, t)| p * t[j]).sum())
                .collect()
        })
        .collect();
    Ok(Signal {
        labels: default_labels(g.outputs()),
        likelihood,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Informativeness {
    /// The coarse signal is a garbling of the fine one, witnessed by `T`.
    Yes(Garbling),
    No,
}

impl Informativeness {
    pub fn holds(&self) -> bool {
        matches!(self, Informativeness::Yes(_))
    }
}

/// Decides whether `fine` is Blackwell more informative than `coarse` by
/// solving for a garbling with a linear feasibility program.
pub fn is_more_informative(fine: &Signal, coarse: &Signal, tol: f64) -> Result<Informativeness> {
    if fine.num_states() != coarse.num_states() {
        return Err(Error::DimensionMismatch("signals over different state sets".into()));
    }
    let rows = fine.num_realizations();
    let cols = coarse.num_realizations();
    let var = |i: usize, j: usize| i * cols + j;
    let mut lp = LinearProgram::new(rows * cols);
    for i in 0..rows {
        let mut row = vec![0.0; rows * cols];
        (0..cols).for_each(|j| row[var(i, j)] = 1.0);
        lp = lp.eq(row, 1.0);
    }
    for w in 0..fine.num_states() {
        for j in 0..cols {
            let mut row = vec![0.0; rows * cols];
            (0..rows).for_each(|i| row[var(i, j)] = fine.prob(i, w));
            lp = lp.eq(row, coarse.prob(j, w));
        }
    }
    match lp::feasible(&lp, tol)? {
        Feasibility::Infeasible { .. } => Ok(Informativeness::No),
        Feasibility::Feasible(x) => {
            let matrix = (0..rows)
                .map(|i| {
                    let row: Vec<f64> = (0..cols).map(|j| x[var(i, j)].max(0.0)).collect();
                    let total: f64 = row.iter().sum();
                    row.into_iter().map(|a| a / total).collect()
                })
                .collect();
            Ok(Informativeness::Yes(Garbling(matrix)))
        }
    }
}

/// Largest deviation between `coarse` and `fine` garbled by `g`.
pub fn garbling_residual(fine: &Signal, coarse: &Signal, g: &Garbling) -> Result<f64> {
    let garbled = apply_garbling(fine, g)?;
    if garbled.num_realizations() != coarse.num_realizations() {
        return Err(Error::DimensionMismatch("witness has the wrong output size".into()));
    }
    Ok(garbled
        .likelihood
        .iter()
        .flatten()
        .zip(coarse.likelihood.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Profile-level order: every student's signal is more informative.
pub fn profile_more_informative(fine: &SignalProfile, coarse: &SignalProfile, tol: f64) -> Result<bool> {
    if fine.len() != coarse.len() {
        return Err(Error::DimensionMismatch("profiles of different length".into()));
    }
    for (a, b) in fine.signals().iter().zip(coarse.signals()) {
        if !is_more_informative(a, b, tol)?.holds() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> Belief {
        Belief::new(vec![0.3, 0.4, 0.3]).unwrap()
    }

    fn cell_partition() -> Signal {
        Signal::partition(3, &[vec![0], vec![1, 2]]).unwrap()
    }

    #[test]
    fn partition_cell_posterior() {
        let mu = posterior(&prior(), &cell_partition(), 1).unwrap();
        let expected = [0.0, 4.0 / 7.0, 3.0 / 7.0];
        for (a, b) in mu.probs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn full_and_null_posteriors() {
        let mu = posterior(&prior(), &Signal::full_disclosure(3), 0).unwrap();
        assert_eq!(mu, Belief::point_mass(3, 0));
        let mu = posterior(&prior(), &Signal::null(3), 0).unwrap();
        assert_eq!(mu, prior());
    }

    #[test]
    fn zero_marginal_realization_is_an_error() {
        let s = Signal::from_matrix(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            posterior(&prior(), &s, 1),
            Err(Error::ZeroMarginal { realization: 1 })
        ));
    }

    #[test]
    fn partition_belief_distribution() {
        let dist = belief_distribution(&prior(), &cell_partition()).unwrap();
        assert_eq!(dist.support.len(), 2);
        assert_eq!(dist.support[0].0, Belief::point_mass(3, 0));
        assert!((dist.support[0].1 - 0.3).abs() < 1e-15);
        assert!((dist.support[1].1 - 0.7).abs() < 1e-15);
        assert!(check_bayes_plausible(&dist, &prior(), 1e-12));
    }

    #[test]
    fn merges_equal_posteriors() {
        // two realizations that are each uninformative
        let s = Signal::from_matrix(vec![vec![0.5, 0.5]; 3]).unwrap();
        let dist = belief_distribution(&prior(), &s).unwrap();
        assert_eq!(dist.support.len(), 1);
        assert!((dist.support[0].1 - 1.0).abs() < 1e-15);
        assert_eq!(dist.support[0].0, prior());
    }

    #[test]
    fn point_mass_is_not_plausible() {
        let dist = BeliefDistribution {
            support: vec![(Belief::point_mass(3, 0), 1.0)],
        };
        assert!(!check_bayes_plausible(&dist, &prior(), 1e-9));
    }

    #[test]
    fn constructors() {
        assert_eq!(
            cell_partition().likelihood(),
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]
        );
        assert_eq!(Signal::null(3).likelihood(), vec![vec![1.0]; 3].as_slice());
        assert!(Signal::partition(3, &[vec![0], vec![0, 1, 2]]).is_err());
        assert!(Signal::partition(3, &[vec![0], vec![1]]).is_err());
    }

    #[test]
    fn merging_columns_of_full_disclosure() {
        let g = Garbling::deterministic(&[0, 1, 1], 2).unwrap();
        let garbled = apply_garbling(&Signal::full_disclosure(3), &g).unwrap();
        assert_eq!(garbled.likelihood(), cell_partition().likelihood());
        let id = apply_garbling(&cell_partition(), &Garbling::identity(2)).unwrap();
        assert_eq!(id, cell_partition());
        let one = Garbling::deterministic(&[0, 0], 1).unwrap();
        assert_eq!(apply_garbling(&cell_partition(), &one).unwrap(), Signal::null(3));
        assert!(apply_garbling(&cell_partition(), &Garbling::identity(3)).is_err());
    }

    #[test]
    fn blackwell_full_vs_partition() {
        let full = Signal::full_disclosure(3);
        let part = cell_partition();
        match is_more_informative(&full, &part, 1e-9).unwrap() {
            Informativeness::Yes(g) => {
                assert!(garbling_residual(&full, &part, &g).unwrap() < 1e-9);
            }
            Informativeness::No => panic!("full disclosure garbles to the partition"),
        }
        assert_eq!(is_more_informative(&part, &full, 1e-9).unwrap(), Informativeness::No);
        assert!(is_more_informative(&part, &part, 1e-9).unwrap().holds());
    }
}
