//! `probmatch`: cutoffs, demand and welfare for scenario files.

mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use probmatch::clearing::{
    greatest_market_clearing, least_market_clearing, rural_hospital_check, verify_market_clearing, ClearingConfig,
    ClearingResult,
};
use probmatch::decision::{check_gross_substitutes, check_obedience, NaiveRule, ObedienceForm, TieBreak};
use probmatch::demand::{demand, Coupling, ExAnteCutoff};
use probmatch::golden::run_golden_checks;
use probmatch::information::{profile_more_informative, SignalProfile};
use probmatch::oracle::{simulate, SimulationConfig};
use probmatch::scenario::{load_scenario, parse_cutoff, Scenario};
use probmatch::welfare::{pareto_compare, welfare_monotonicity_check, welfare_report, ParetoVerdict};
use probmatch::Error;
use render::{list, num, sig, Format, Table};
use serde_json::json;

/// Tolerance for the utility, informativeness and invariant checks.
const CHECK_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "probmatch",
    version,
    about = "Ex-ante market clearing with probabilistic offers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Greatest and least market-clearing cutoffs with their demand.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signal: Option<String>,
        /// Print the cutoff after every sweep.
        #[arg(long)]
        trace: bool,
        /// Emit the least cutoff instead of the greatest in CSV mode.
        #[arg(long)]
        least: bool,
    },
    /// Expected demand at a given cutoff.
    Demand {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signal: Option<String>,
        /// Comma-separated cutoff, one entry per program.
        #[arg(long)]
        cutoff: String,
    },
    /// Own-rank distributions and expected utilities.
    Welfare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signal: Option<String>,
        /// Defaults to the greatest market-clearing cutoff.
        #[arg(long)]
        cutoff: Option<String>,
    },
    /// Informativeness and Pareto comparison of two signals.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
    /// Monte Carlo estimate of demand and utilities.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signal: Option<String>,
        /// Defaults to the greatest market-clearing cutoff.
        #[arg(long)]
        cutoff: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        draws: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Obedience, substitutes, clearing, rural hospital and monotonicity checks.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        signal: Option<String>,
    },
    /// Reference checks on the bundled example markets.
    #[command(alias = "paper")]
    Reference {
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    /// Market-clearing tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    tie_break: Option<TieBreakArg>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Independent,
    Continuum,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    Error,
    Index,
}

struct Context {
    scenario: Scenario,
    cfg: ClearingConfig,
    tie_break: TieBreak,
    format: Format,
}

impl Context {
    fn load(common: &Common) -> Result<Self, Error> {
        let scenario = load_scenario(&common.scenario).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(
                io.kind(),
                format!("{}: {io}", common.scenario.display()),
            )),
            other => other,
        })?;
        for c in &scenario.completions {
            eprintln!(
                "note: ranking of {} in {} completed with {}",
                c.student,
                c.state,
                c.appended.join(", ")
            );
        }
        for w in &scenario.warnings.warnings {
            eprintln!("warning: {w}");
        }
        let mut cfg = scenario.solver.clearing;
        if let Some(c) = common.coupling {
            cfg.coupling = match c {
                CouplingArg::Independent => Coupling::Independent,
                CouplingArg::Continuum => Coupling::Continuum,
            };
        }
        if let Some(tol) = common.tol {
            cfg.clearing_tol = tol;
        }
        let tie_break = match common.tie_break {
            Some(TieBreakArg::Error) => TieBreak::Error,
            Some(TieBreakArg::Index) => TieBreak::Index,
            None => scenario.solver.tie_break,
        };
        Ok(Context {
            scenario,
            cfg,
            tie_break,
            format: common.format,
        })
    }

    fn signal_name(&self, requested: Option<&str>) -> Result<String, Error> {
        match requested {
            Some(name) => Ok(name.to_string()),
            None => self
                .scenario
                .signal_names()
                .first()
                .map(|s| s.to_string())
                .ok_or_else(|| Error::UnknownIdentifier {
                    kind: "signal",
                    name: String::new(),
                }),
        }
    }

    fn market(&self, requested: Option<&str>) -> Result<(String, SignalProfile, NaiveRule), Error> {
        let name = self.signal_name(requested)?;
        let profile = self.scenario.profile(&name)?;
        let rule = NaiveRule::new(&self.scenario.instance, &profile, self.tie_break).inspect_err(|e| {
            if let Error::Tie {
                student, first, second, ..
            } = e
            {
                eprintln!(
                    "note: {} cannot rank {} against {} under signal `{name}`; --tie-break index picks the lower index",
                    self.students()[*student],
                    self.programs()[*first],
                    self.programs()[*second]
                );
            }
        })?;
        Ok((name, profile, rule))
    }

    fn cutoff(&self, text: &str) -> Result<ExAnteCutoff, Error> {
        let values = parse_cutoff(text)?;
        let n = self.scenario.instance.num_programs();
        if values.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "cutoff has {} entries for {n} programs",
                values.len()
            )));
        }
        ExAnteCutoff::new(values, self.scenario.instance.t())
    }

    fn greatest(&self, profile: &SignalProfile, rule: &NaiveRule) -> Result<ClearingResult, Error> {
        greatest_market_clearing(&self.scenario.instance, profile, rule, &self.cfg)
    }

    fn programs(&self) -> &[String] {
        self.scenario.instance.programs()
    }

    fn students(&self) -> &[String] {
        self.scenario.instance.students()
    }
}

fn coupling_name(c: Coupling) -> &'static str {
    match c {
        Coupling::Independent => "independent",
        Coupling::Continuum => "continuum",
    }
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json values always serialize") + "\n"
}

fn program_table(ctx: &Context, cutoff: &[f64], demand: &[f64]) -> Table {
    let fmt = num(ctx.format);
    let mut table = Table::new(["program", "demand", "capacity", "cutoff"]);
    for (p, name) in ctx.programs().iter().enumerate() {
        table.row(vec![
            name.clone(),
            fmt(demand[p]),
            fmt(ctx.scenario.instance.capacities()[p]),
            fmt(cutoff[p]),
        ]);
    }
    table
}

fn solve(ctx: &Context, signal: Option<&str>, trace: bool, least: bool) -> Result<String, Error> {
    let (name, profile, rule) = ctx.market(signal)?;
    let inst = &ctx.scenario.instance;
    let top = ctx.greatest(&profile, &rule)?;
    let bottom = least_market_clearing(inst, &profile, &rule, &ctx.cfg)?;
    Ok(match ctx.format {
        Format::Json => pretty(&json!({
            "signal": name,
            "coupling": ctx.cfg.coupling,
            "programs": ctx.programs(),
            "greatest": top,
            "least": bottom,
        })),
        Format::Csv => {
            let point = if least { &bottom } else { &top };
            program_table(ctx, point.cutoff.values(), &point.demand.per_program).csv()
        }
        Format::Table => {
            let mut out = format!("signal: {name}, coupling: {}\n", coupling_name(ctx.cfg.coupling));
            for (label, point) in [("greatest", &top), ("least", &bottom)] {
                let last = point.residuals.last().copied().unwrap_or(0.0);
                out += &format!(
                    "\n{label} market-clearing cutoff {} ({} sweeps, last step {})\n",
                    list(point.cutoff.values()),
                    point.sweeps,
                    sig(last)
                );
                out += &program_table(ctx, point.cutoff.values(), &point.demand.per_program).text();
                out += &format!("unmatched: {}\n", sig(point.demand.unmatched));
                if trace {
                    let mut header = vec!["sweep".to_string()];
                    header.extend(ctx.programs().iter().cloned());
                    let mut table = Table::new(header);
                    for (i, b) in point.trajectory.iter().enumerate() {
                        let mut row = vec![i.to_string()];
                        row.extend(b.iter().map(|&x| sig(x)));
                        table.row(row);
                    }
                    out += &table.text();
                }
            }
            out
        }
    })
}

fn demand_cmd(ctx: &Context, signal: Option<&str>, cutoff: &str) -> Result<String, Error> {
    let (name, profile, rule) = ctx.market(signal)?;
    let b = ctx.cutoff(cutoff)?;
    let d = demand(&ctx.scenario.instance, &profile, &rule, &b, ctx.cfg.coupling)?;
    Ok(match ctx.format {
        Format::Json => pretty(&json!({
            "signal": name,
            "coupling": ctx.cfg.coupling,
            "programs": ctx.programs(),
            "cutoff": b,
            "demand": d,
        })),
        Format::Csv => program_table(ctx, b.values(), &d.per_program).csv(),
        Format::Table => format!(
            "signal: {name}, coupling: {}\n{}unmatched: {}\n",
            coupling_name(ctx.cfg.coupling),
            program_table(ctx, b.values(), &d.per_program).text(),
            sig(d.unmatched)
        ),
    })
}

fn welfare_cmd(ctx: &Context, signal: Option<&str>, cutoff: Option<&str>) -> Result<String, Error> {
    let (name, profile, rule) = ctx.market(signal)?;
    let inst = &ctx.scenario.instance;
    let b = match cutoff {
        Some(text) => ctx.cutoff(text)?,
        None => ctx.greatest(&profile, &rule)?.cutoff,
    };
    let report = welfare_report(inst, &profile, &rule, &b, ctx.cfg.coupling)?;
    if ctx.format == Format::Json {
        return Ok(pretty(&json!({
            "signal": name,
            "coupling": ctx.cfg.coupling,
            "students": ctx.students(),
            "programs": ctx.programs(),
            "cutoff": b,
            "welfare": report,
        })));
    }
    let fmt = num(ctx.format);
    let n = inst.num_programs();
    let mut header = vec!["student".to_string()];
    header.extend((1..=n).map(|i| format!("rank-{i}")));
    header.extend(["unmatched".to_string(), "EU".to_string()]);
    let mut students = Table::new(header);
    for (k, student) in ctx.students().iter().enumerate() {
        let mut row = vec![student.clone()];
        row.extend(report.rank_distributions[k].iter().map(|&x| fmt(x)));
        row.push(fmt(report.student_utilities[k]));
        students.row(row);
    }
    if ctx.format == Format::Csv {
        return Ok(students.csv());
    }
    let mut out = format!("signal: {name}, cutoff {}\n{}", list(b.values()), students.text());
    if let Some(values) = &report.program_utilities {
        let mut programs = Table::new(["program", "utility"]);
        for (p, name) in ctx.programs().iter().enumerate() {
            programs.row(vec![name.clone(), sig(values[p])]);
        }
        out += "\n";
        out += &programs.text();
    }
    Ok(out)
}

fn pareto_phrase(verdict: ParetoVerdict) -> &'static str {
    match verdict {
        ParetoVerdict::LeftDominates => "left Pareto dominates right",
        ParetoVerdict::RightDominates => "left Pareto dominated by right",
        ParetoVerdict::Equivalent => "left and right Pareto equivalent",
        ParetoVerdict::Incomparable => "left and right Pareto incomparable",
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn compare(ctx: &Context, left: &str, right: &str) -> Result<String, Error> {
    let inst = &ctx.scenario.instance;
    let lp = ctx.scenario.profile(left)?;
    let rp = ctx.scenario.profile(right)?;
    let left_more = profile_more_informative(&lp, &rp, CHECK_TOL)?;
    let right_more = profile_more_informative(&rp, &lp, CHECK_TOL)?;
    let cmp = pareto_compare(inst, &lp, &rp, ctx.tie_break, &ctx.cfg, CHECK_TOL)?;
    if ctx.format == Format::Json {
        return Ok(pretty(&json!({
            "left": left,
            "right": right,
            "students": ctx.students(),
            "left_more_informative": left_more,
            "right_more_informative": right_more,
            "comparison": cmp,
        })));
    }
    let fmt = num(ctx.format);
    let mut table = Table::new(["student", "left EU", "right EU", "delta"]);
    for (k, student) in ctx.students().iter().enumerate() {
        table.row(vec![
            student.clone(),
            fmt(cmp.left_utilities[k]),
            fmt(cmp.right_utilities[k]),
            fmt(cmp.deltas[k]),
        ]);
    }
    if ctx.format == Format::Csv {
        return Ok(table.csv());
    }
    Ok(format!(
        "left more informative: {}; {}\nright more informative: {}\nleft ({left}) cutoff {}\nright ({right}) cutoff {}\n{}",
        yes_no(left_more),
        pareto_phrase(cmp.verdict),
        yes_no(right_more),
        list(cmp.left_cutoff.values()),
        list(cmp.right_cutoff.values()),
        table.text()
    ))
}

fn simulate_cmd(
    ctx: &Context,
    signal: Option<&str>,
    cutoff: Option<&str>,
    draws: u64,
    seed: u64,
) -> Result<String, Error> {
    let (name, profile, rule) = ctx.market(signal)?;
    let inst = &ctx.scenario.instance;
    let b = match cutoff {
        Some(text) => ctx.cutoff(text)?,
        None => ctx.greatest(&profile, &rule)?.cutoff,
    };
    let cfg = SimulationConfig {
        draws,
        seed,
        coupling: ctx.cfg.coupling,
    };
    let report = simulate(inst, &profile, &rule, b.values(), &cfg)?;
    if ctx.format == Format::Json {
        return Ok(pretty(&json!({
            "signal": name,
            "students": ctx.students(),
            "programs": ctx.programs(),
            "cutoff": b,
            "simulation": report,
        })));
    }
    let fmt = num(ctx.format);
    let mut programs = Table::new(["program", "demand", "std_err", "capacity", "cutoff", "over_capacity"]);
    for (p, program) in ctx.programs().iter().enumerate() {
        programs.row(vec![
            program.clone(),
            fmt(report.demand_mean[p]),
            fmt(report.demand_std_err[p]),
            fmt(inst.capacities()[p]),
            fmt(b.get(p)),
            fmt(report.over_capacity_freq[p]),
        ]);
    }
    if ctx.format == Format::Csv {
        return Ok(programs.csv());
    }
    let mut students = Table::new(["student", "EU", "std_err"]);
    for (k, student) in ctx.students().iter().enumerate() {
        students.row(vec![
            student.clone(),
            sig(report.utility_mean[k]),
            sig(report.utility_std_err[k]),
        ]);
    }
    Ok(format!(
        "signal: {name}, coupling: {}, draws: {draws}, seed: {seed}\n{}unmatched: {}\n\n{}",
        coupling_name(ctx.cfg.coupling),
        programs.text(),
        sig(report.unmatched_mean),
        students.text()
    ))
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

impl Check {
    fn from(name: &'static str, outcome: Result<(bool, String), Error>) -> Self {
        match outcome {
            Ok((passed, detail)) => Check { name, passed, detail },
            Err(e) => Check {
                name,
                passed: false,
                detail: e.to_string(),
            },
        }
    }
}

fn verify(ctx: &Context, signal: Option<&str>) -> Result<(String, bool), Error> {
    let (name, profile, rule) = ctx.market(signal)?;
    let inst = &ctx.scenario.instance;
    let coupling = ctx.cfg.coupling;
    let tol = ctx.cfg.clearing_tol;
    let top = ctx.greatest(&profile, &rule)?;
    let bottom = least_market_clearing(inst, &profile, &rule, &ctx.cfg)?;
    let count = |n: usize, what: &str| (n == 0, format!("{n} {what}"));
    let checks = vec![
        Check::from(
            "obedience",
            check_obedience(&rule, inst, &profile, ObedienceForm::Standard, CHECK_TOL)
                .map(|v| count(v.len(), "violations")),
        ),
        Check::from(
            "gross substitutes",
            check_gross_substitutes(&rule, inst, &profile, CHECK_TOL).map(|v| count(v.len(), "violations")),
        ),
        Check::from(
            "greatest cutoff clears",
            verify_market_clearing(inst, &profile, &rule, &top.cutoff, coupling, tol).map(|c| {
                (
                    c.passes(),
                    format!(
                        "{} at {}",
                        count(c.violations.len(), "violations").1,
                        list(top.cutoff.values())
                    ),
                )
            }),
        ),
        Check::from(
            "least cutoff clears",
            verify_market_clearing(inst, &profile, &rule, &bottom.cutoff, coupling, tol).map(|c| {
                (
                    c.passes(),
                    format!(
                        "{} at {}",
                        count(c.violations.len(), "violations").1,
                        list(bottom.cutoff.values())
                    ),
                )
            }),
        ),
        Check::from(
            "rural hospital",
            rural_hospital_check(inst, &profile, &rule, &top.cutoff, &bottom.cutoff, coupling, tol)
                .map(|r| (r.passes, format!("demand gaps {}", list(&r.demand_gaps)))),
        ),
        Check::from(
            "welfare monotonicity",
            welfare_monotonicity_check(inst, &profile, &rule, &top.cutoff, &bottom.cutoff, coupling, CHECK_TOL).map(
                |r| {
                    (
                        r.passes(),
                        format!(
                            "{} student and {} program violations",
                            r.student_violations.len(),
                            r.program_violations.len()
                        ),
                    )
                },
            ),
        ),
    ];
    let all = checks.iter().all(|c| c.passed);
    let out = match ctx.format {
        Format::Json => pretty(&json!({
            "signal": name,
            "checks": checks
                .iter()
                .map(|c| json!({"check": c.name, "passed": c.passed, "detail": c.detail}))
                .collect::<Vec<_>>(),
        })),
        Format::Csv | Format::Table => {
            let mut table = Table::new(["check", "result", "detail"]);
            for c in &checks {
                let result = if c.passed { "pass" } else { "fail" };
                table.row(vec![c.name.to_string(), result.into(), c.detail.clone()]);
            }
            if ctx.format == Format::Csv {
                table.csv()
            } else {
                format!("signal: {name}\n{}", table.text())
            }
        }
    };
    Ok((out, all))
}

fn reference(format: Format) -> (String, bool) {
    let checks = run_golden_checks();
    let passed = checks.iter().filter(|c| c.passed).count();
    let out = match format {
        Format::Json => pretty(&json!(checks
            .iter()
            .map(|c| json!({"check": c.name, "passed": c.passed, "detail": c.detail}))
            .collect::<Vec<_>>())),
        Format::Csv => {
            let mut table = Table::new(["check", "result", "detail"]);
            for c in &checks {
                table.row(vec![
                    c.name.into(),
                    if c.passed { "pass" } else { "fail" }.into(),
                    c.detail.clone(),
                ]);
            }
            table.csv()
        }
        Format::Table => {
            let mut out = String::new();
            for c in &checks {
                out += &format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            out + &format!("{passed}/{} checks passed\n", checks.len())
        }
    };
    (out, passed == checks.len())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } => 3,
        Error::Tie { .. } => 4,
        Error::Validation(_)
        | Error::Parse { .. }
        | Error::Scenario { .. }
        | Error::UnknownIdentifier { .. }
        | Error::IndexOutOfRange { .. }
        | Error::DimensionMismatch(_)
        | Error::InvalidSignal(_)
        | Error::InvalidPartition(_)
        | Error::ZeroMarginal { .. }
        | Error::OutOfRange { .. }
        | Error::Io(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(String, bool), Error> {
    let done = |out: String| (out, true);
    match cli.command {
        Command::Solve {
            common,
            signal,
            trace,
            least,
        } => solve(&Context::load(&common)?, signal.as_deref(), trace, least).map(done),
        Command::Demand { common, signal, cutoff } => {
            demand_cmd(&Context::load(&common)?, signal.as_deref(), &cutoff).map(done)
        }
        Command::Welfare { common, signal, cutoff } => {
            welfare_cmd(&Context::load(&common)?, signal.as_deref(), cutoff.as_deref()).map(done)
        }
        Command::Compare { common, left, right } => compare(&Context::load(&common)?, &left, &right).map(done),
        Command::Simulate {
            common,
            signal,
            cutoff,
            draws,
            seed,
        } => simulate_cmd(
            &Context::load(&common)?,
            signal.as_deref(),
            cutoff.as_deref(),
            draws,
            seed,
        )
        .map(done),
        Command::Verify { common, signal } => verify(&Context::load(&common)?, signal.as_deref()),
        Command::Reference { format } => Ok(reference(format)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((out, ok)) => {
            print!("{out}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
