//! Market-clearing cutoffs: the coordinate operator, its extreme fixed
//! points, and clearing checks.

use serde::{Deserialize, Serialize};

use crate::decision::DecisionRule;
use crate::demand::{demand, demand_unchecked, Coupling, DemandVector, DeterministicCutoff, ExAnteCutoff};
use crate::error::{Error, Result};
use crate::information::SignalProfile;
use crate::model::MarketInstance;

/// Demand within this of capacity counts as equal during root finding.
const ROOT_EPS: f64 = 1e-12;

/// Largest number of integer cutoffs the deterministic scan will try.
pub const DEFAULT_SCAN_CAP: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateScheme {
    /// Every coordinate is updated from the previous vector.
    #[default]
    Simultaneous,
    /// Coordinates are updated in order, each seeing the ones before it.
    Sequential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingConfig {
    pub clearing_tol: f64,
    pub fixed_point_tol: f64,
    pub max_sweeps: usize,
    pub scheme: UpdateScheme,
    pub coupling: Coupling,
}

impl Default for ClearingConfig {
    fn default() -> Self {
        ClearingConfig {
            clearing_tol: 1e-6,
            fixed_point_tol: 1e-10,
            max_sweeps: 10_000,
            scheme: UpdateScheme::Simultaneous,
            coupling: Coupling::Independent,
        }
    }
}

impl ClearingConfig {
    fn check(&self) -> Result<()> {
        for (what, v) in [
            ("clearing tolerance", self.clearing_tol),
            ("fixed-point tolerance", self.fixed_point_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::OutOfRange {
                    what: what.into(),
                    value: v,
                });
            }
        }
        if self.max_sweeps == 0 {
            return Err(Error::OutOfRange {
                what: "max sweeps".into(),
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub cutoff: ExAnteCutoff,
    pub demand: DemandVector,
    pub converged: bool,
    pub sweeps: usize,
    /// `D_p(b) - M_p`.
    pub residuals: Vec<f64>,
    /// Every iterate, starting point included.
    pub trajectory: Vec<Vec<f64>>,
    /// Whether the iterates moved monotonically in the expected direction.
    pub monotone: bool,
}

/// `T_p(b)`: the largest `x` with `D_p(x, b_-p) <= M_p`, with equality
/// unless `x = t`.
pub fn coordinate_update(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    p: usize,
    b: &ExAnteCutoff,
    coupling: Coupling,
) -> Result<f64> {
    inst.check_program(p)?;
    demand(inst, profile, rule, b, coupling)?;
    Ok(update_unchecked(inst, profile, rule, p, b.values(), coupling))
}

fn update_unchecked(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    p: usize,
    b: &[f64],
    coupling: Coupling,
) -> f64 {
    let t = inst.t();
    let cap = inst.capacity(p);
    let mut point = b.to_vec();
    let mut eval = |x: f64| {
        point[p] = x;
        demand_unchecked(inst, profile, rule, &point, coupling).per_program[p]
    };
    let knots = breakpoints(inst, p, b, coupling);
    let mut hi = *knots.last().expect("knots include 0 and t");
    let mut d_hi = eval(hi);
    if d_hi <= cap + ROOT_EPS {
        return t;
    }
    for &lo in knots.iter().rev().skip(1) {
        let d_lo = eval(lo);
        if d_lo <= cap + ROOT_EPS {
            // D is linear on [lo, hi] and crosses M_p from below
            if d_lo >= cap {
                return lo;
            }
            let x = lo + (cap - d_lo) * (hi - lo) / (d_hi - d_lo);
            return x.clamp(lo, hi);
        }
        hi = lo;
        d_hi = d_lo;
    }
    // D_p(0, .) is zero, so the loop always returns
    0.0
}

/// Points between which `D_p(., b_-p)` is linear.
fn breakpoints(inst: &MarketInstance, p: usize, b: &[f64], coupling: Coupling) -> Vec<f64> {
    let t = inst.num_students();
    let mut knots: Vec<f64> = (0..=t).map(|j| j as f64).collect();
    if coupling == Coupling::Continuum {
        for k in 0..t {
            let below = inst.rank_unchecked(p, k) as f64 - 1.0;
            for (q, &bq) in b.iter().enumerate() {
                if q == p {
                    continue;
                }
                let x = (bq - inst.rank_unchecked(q, k) as f64 + 1.0).clamp(0.0, 1.0);
                if x > 0.0 && x < 1.0 {
                    knots.push(below + x);
                }
            }
        }
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
}

/// One application of `T` (or a sequential sweep).
pub fn apply_operator(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    scheme: UpdateScheme,
) -> Result<ExAnteCutoff> {
    demand(inst, profile, rule, b, coupling)?;
    Ok(
        ExAnteCutoff::new(sweep(inst, profile, rule, b.values(), coupling, scheme), inst.t())
            .expect("updates stay in [0, t]"),
    )
}

fn sweep(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &[f64],
    coupling: Coupling,
    scheme: UpdateScheme,
) -> Vec<f64> {
    let mut next = b.to_vec();
    for p in 0..b.len() {
        let base = match scheme {
            UpdateScheme::Simultaneous => b,
            UpdateScheme::Sequential => next.as_slice(),
        };
        let x = update_unchecked(inst, profile, rule, p, base, coupling);
        next[p] = x;
    }
    next
}

/// Iterates `T` from `(t, ..., t)`; the limit is the greatest
/// market-clearing cutoff.
pub fn greatest_market_clearing(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    cfg: &ClearingConfig,
) -> Result<ClearingResult> {
    let start = vec![inst.t(); inst.num_programs()];
    iterate(inst, profile, rule, cfg, start, Direction::Down)
}

/// Iterates `T` from the zero vector; the limit is the least
/// market-clearing cutoff.
pub fn least_market_clearing(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    cfg: &ClearingConfig,
) -> Result<ClearingResult> {
    let start = vec![0.0; inst.num_programs()];
    iterate(inst, profile, rule, cfg, start, Direction::Up)
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Down,
    Up,
}

fn iterate(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    cfg: &ClearingConfig,
    start: Vec<f64>,
    direction: Direction,
) -> Result<ClearingResult> {
    cfg.check()?;
    let start = ExAnteCutoff::new(start, inst.t())?;
    demand(inst, profile, rule, &start, cfg.coupling)?;
    let mut b = start.into_vec();
    let mut trajectory = vec![b.clone()];
    let mut monotone = true;
    let mut residual = f64::INFINITY;
    for sweeps in 1..=cfg.max_sweeps {
        let next = sweep(inst, profile, rule, &b, cfg.coupling, cfg.scheme);
        residual = next.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        monotone &= next.iter().zip(&b).all(|(x, y)| match direction {
            Direction::Down => *x <= y + ROOT_EPS,
            Direction::Up => *x >= y - ROOT_EPS,
        });
        trajectory.push(next.clone());
        b = next;
        if residual <= cfg.fixed_point_tol {
            let demand = demand_unchecked(inst, profile, rule, &b, cfg.coupling);
            let residuals = demand
                .per_program
                .iter()
                .zip(inst.capacities())
                .map(|(d, m)| d - m)
                .collect();
            return Ok(ClearingResult {
                cutoff: ExAnteCutoff::new(b, inst.t())?,
                demand,
                converged: true,
                sweeps,
                residuals,
                trajectory,
                monotone,
            });
        }
    }
    Err(Error::NonConvergence {
        sweeps: cfg.max_sweeps,
        residual,
        trajectory,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    OverCapacity,
    /// Demand below capacity while the cutoff is below `t`.
    UnderDemanded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingViolation {
    pub program: usize,
    pub kind: ViolationKind,
    pub demand: f64,
    pub capacity: f64,
    pub cutoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingCheck {
    pub demand: DemandVector,
    pub violations: Vec<ClearingViolation>,
}

impl ClearingCheck {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `D_p(b) <= M_p + tol` everywhere and `|D_p(b) - M_p| <= tol`
/// wherever `b_p < t - tol`.
pub fn verify_market_clearing(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    coupling: Coupling,
    tol: f64,
) -> Result<ClearingCheck> {
    let demand = demand(inst, profile, rule, b, coupling)?;
    let t = inst.t();
    let mut violations = Vec::new();
    for (p, (&d, &m)) in demand.per_program.iter().zip(inst.capacities()).enumerate() {
        let bp = b.get(p);
        let kind = if d > m + tol {
            Some(ViolationKind::OverCapacity)
        } else if bp < t - tol && (d - m).abs() > tol {
            Some(ViolationKind::UnderDemanded)
        } else {
            None
        };
        if let Some(kind) = kind {
            violations.push(ClearingViolation {
                program: p,
                kind,
                demand: d,
                capacity: m,
                cutoff: bp,
            });
        }
    }
    Ok(ClearingCheck { demand, violations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuralHospitalReport {
    /// `|D_p(b) - D_p(b')|` per program.
    pub demand_gaps: Vec<f64>,
    /// For programs filled below capacity: largest gap between the two
    /// cutoffs' per-student match probabilities.
    pub under_filled_gaps: Vec<(usize, f64)>,
    pub passes: bool,
}

/// Compares two market-clearing cutoffs: demands must agree, and programs
/// short of capacity must receive the same students with the same
/// probabilities.
pub fn rural_hospital_check(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    b: &ExAnteCutoff,
    b2: &ExAnteCutoff,
    coupling: Coupling,
    tol: f64,
) -> Result<RuralHospitalReport> {
    for (label, cut) in [("first", b), ("second", b2)] {
        let check = verify_market_clearing(inst, profile, rule, cut, coupling, tol)?;
        if !check.passes() {
            return Err(Error::NotMarketClearing(format!(
                "{label} cutoff {:?} violates clearing at programs {:?}",
                cut.values(),
                check.violations.iter().map(|v| v.program).collect::<Vec<_>>()
            )));
        }
    }
    let left = crate::demand::matching_distribution(inst, profile, rule, b, coupling, None)?;
    let right = crate::demand::matching_distribution(inst, profile, rule, b2, coupling, None)?;
    let dl = left.column_sums();
    let dr = right.column_sums();
    let n = inst.num_programs();
    let demand_gaps: Vec<f64> = (0..n).map(|p| (dl[p] - dr[p]).abs()).collect();
    let mut under_filled_gaps = Vec::new();
    for p in 0..n {
        if dl[p] < inst.capacity(p) - tol {
            let gap = left
                .marginals
                .iter()
                .zip(&right.marginals)
                .map(|(a, c)| (a[p] - c[p]).abs())
                .fold(0.0, f64::max);
            under_filled_gaps.push((p, gap));
        }
    }
    let passes = demand_gaps.iter().all(|&g| g <= tol) && under_filled_gaps.iter().all(|&(_, g)| g <= tol);
    Ok(RuralHospitalReport {
        demand_gaps,
        under_filled_gaps,
        passes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicScan {
    pub checked: u128,
    /// Integer cutoffs that clear the market, in lexicographic order.
    pub clearing: Vec<DeterministicCutoff>,
}

/// Tries every integer cutoff in `{0, ..., t}^n`.
pub fn deterministic_clearing_scan(
    inst: &MarketInstance,
    profile: &SignalProfile,
    rule: &dyn DecisionRule,
    tol: f64,
    cap: u128,
) -> Result<DeterministicScan> {
    let t = inst.num_students();
    let n = inst.num_programs();
    let count = (t as u128 + 1).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::TooLargeForEnumeration { count, cap });
    }
    let mut digits = vec![0usize; n];
    let mut clearing = Vec::new();
    loop {
        let b = ExAnteCutoff::new(digits.iter().map(|&d| d as f64).collect(), inst.t())?;
        if verify_market_clearing(inst, profile, rule, &b, Coupling::Independent, tol)?.passes() {
            clearing.push(DeterministicCutoff::new(digits.clone(), t)?);
        }
        // last program varies fastest
        let mut j = n;
        loop {
            if j == 0 {
                return Ok(DeterministicScan {
                    checked: count,
                    clearing,
                });
            }
            j -= 1;
            digits[j] += 1;
            if digits[j] <= t {
                break;
            }
            digits[j] = 0;
        }
    }
}
