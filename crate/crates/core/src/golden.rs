//! Reference checks on the bundled example scenarios. Each check recomputes
//! a published figure and reports whether it matches.

use crate::clearing::{deterministic_clearing_scan, greatest_market_clearing, ClearingConfig, DEFAULT_SCAN_CAP};
use crate::decision::{NaiveRule, TieBreak};
use crate::demand::{demand, matching_distribution, Coupling, ExAnteCutoff};
use crate::error::Result;
use crate::fixtures::{ex_a, ex_b, ex_b_with_prior, ex_c};
use crate::information::is_more_informative;
use crate::oracle::{enumerate_outcomes, DEFAULT_ORACLE_CAP};
use crate::welfare::{pareto_compare, welfare_report, ParetoVerdict};

#[derive(Clone, Debug, PartialEq)]
pub struct GoldenCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> GoldenCheck {
    match run() {
        Ok((passed, detail)) => GoldenCheck { name, passed, detail },
        Err(e) => GoldenCheck {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every reference check; none of them panics.
pub fn run_golden_checks() -> Vec<GoldenCheck> {
    let cfg = ClearingConfig::default();
    vec![
        check("four-program market, partition signal: greatest cutoff", || {
            let s = ex_a();
            let profile = s.profile("partition")?;
            let rule = NaiveRule::new(&s.instance, &profile, TieBreak::Error)?;
            let top = greatest_market_clearing(&s.instance, &profile, &rule, &cfg)?;
            let b = top.cutoff.values();
            Ok((close(b, &[4.0, 4.0, 4.0, 4.0], 1e-6), format!("{b:?}")))
        }),
        check("four-program market, full disclosure: greatest cutoff", || {
            let s = ex_a();
            let profile = s.profile("full")?;
            let rule = NaiveRule::new(&s.instance, &profile, TieBreak::Error)?;
            let top = greatest_market_clearing(&s.instance, &profile, &rule, &cfg)?;
            let b = top.cutoff.values();
            Ok((close(b, &[2.0, 4.0, 1.7, 1.0], 1e-6), format!("{b:?}")))
        }),
        check("four-program market: own-rank distributions", || {
            let s = ex_a();
            let expected = [
                (
                    "partition",
                    [
                        [0.7, 0.3, 0.0, 0.0],
                        [1.0, 0.0, 0.0, 0.0],
                        [1.0, 0.0, 0.0, 0.0],
                        [1.0, 0.0, 0.0, 0.0],
                    ],
                ),
                (
                    "full",
                    [
                        [0.7, 0.0, 0.3, 0.0],
                        [1.0, 0.0, 0.0, 0.0],
                        [0.7, 0.3, 0.0, 0.0],
                        [1.0, 0.0, 0.0, 0.0],
                    ],
                ),
            ];
            let mut ok = true;
            let mut detail = String::new();
            for (name, rows) in expected {
                let profile = s.profile(name)?;
                let rule = NaiveRule::new(&s.instance, &profile, TieBreak::Error)?;
                let top = greatest_market_clearing(&s.instance, &profile, &rule, &cfg)?;
                let report = welfare_report(&s.instance, &profile, &rule, &top.cutoff, cfg.coupling)?;
                for (k, row) in rows.iter().enumerate() {
                    let got = &report.rank_distributions[k];
                    if !close(&got[..4], row, 1e-9) || got[4].abs() > 1e-9 {
                        ok = false;
                        detail.push_str(&format!("{name} s{}: {got:?}; ", k + 1));
                    }
                }
            }
            Ok((ok, if ok { "all rows match".into() } else { detail }))
        }),
        check("four-program market: full disclosure is Pareto dominated", || {
            let s = ex_a();
            let cmp = pareto_compare(
                &s.instance,
                &s.profile("full")?,
                &s.profile("partition")?,
                TieBreak::Error,
                &cfg,
                1e-9,
            )?;
            Ok((
                cmp.verdict == ParetoVerdict::RightDominates,
                format!("{:?}, deltas {:?}", cmp.verdict, cmp.deltas),
            ))
        }),
        check("four-program market: full disclosure is more informative", || {
            let s = ex_a();
            let fine = &s.signals["full"];
            let coarse = &s.signals["partition"];
            let forward = is_more_informative(fine, coarse, 1e-9)?.holds();
            let backward = is_more_informative(coarse, fine, 1e-9)?.holds();
            Ok((forward && !backward, format!("forward {forward}, backward {backward}")))
        }),
        check("two-program market: no integer cutoff clears", || {
            let s = ex_b();
            let profile = s.profile("full")?;
            let rule = NaiveRule::new(&s.instance, &profile, TieBreak::Error)?;
            let scan = deterministic_clearing_scan(&s.instance, &profile, &rule, cfg.clearing_tol, DEFAULT_SCAN_CAP)?;
            let b = ExAnteCutoff::new(vec![1.0, 2.0], 2.0)?;
            let d = demand(&s.instance, &profile, &rule, &b, Coupling::Independent)?;
            let ok = scan.clearing.is_empty() && close(&d.per_program, &[0.5, 1.5], 1e-12);
            Ok((
                ok,
                format!(
                    "{} clearing of {}; demand at (1, 2) = {:?}",
                    scan.clearing.len(),
                    scan.checked,
                    d.per_program
                ),
            ))
        }),
        check("two-program market: greatest cutoff is (1 + psi2, 2)", || {
            let mut ok = true;
            let mut detail = Vec::new();
            for prior in [[0.5, 0.5], [0.3, 0.7], [0.8, 0.2]] {
                let s = ex_b_with_prior(prior)?;
                let profile = s.profile("full")?;
                let rule = NaiveRule::new(&s.instance, &profile, TieBreak::Error)?;
                let top = greatest_market_clearing(&s.instance, &profile, &rule, &cfg)?;
                ok &= close(top.cutoff.values(), &[1.0 + prior[1], 2.0], 1e-9);
                detail.push(format!("{:?}", top.cutoff.values()));
            }
            Ok((ok, detail.join(" ")))
        }),
        check("randomized cutoff: matching distribution", || {
            let s = ex_c();
            let profile = s.profile("full")?;
            let rule = NaiveRule::new(&s.instance, &profile, TieBreak::Error)?;
            let b = ExAnteCutoff::new(vec![1.75, 2.0], 2.0)?;
            let dist = matching_distribution(&s.instance, &profile, &rule, &b, Coupling::Independent, None)?;
            let oracle = enumerate_outcomes(
                &s.instance,
                &profile,
                &rule,
                b.values(),
                Coupling::Independent,
                DEFAULT_ORACLE_CAP,
            )?;
            // low cutoff 1 with weight 0.25, high cutoff 2 with weight 0.75
            let expected = [[0.4, 0.6, 0.0], [0.75, 0.25, 0.0]];
            let reference = oracle.marginals(2);
            let ok = (0..2)
                .all(|k| close(&dist.marginals[k], &expected[k], 1e-12) && close(&reference[k], &expected[k], 1e-12))
                && (oracle.matching_probability(&[Some(0), Some(1)]) - 0.25 * 0.4).abs() <= 1e-12;
            Ok((ok, format!("{:?}", dist.marginals)))
        }),
    ]
}
