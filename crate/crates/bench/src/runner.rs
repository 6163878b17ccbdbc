//! Single runs from a config, their output files, replay verification and
//! the summary report.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use leading_core::engine::{RoundDiagnostics, RoundMode};
use leading_core::leaders::{Family, Leader};
use leading_core::protocol::{run_protocol, Forecaster, PredictionStrategy, Reality, Situation, Stateless, Trace};
use serde::{Deserialize, Serialize};

use crate::bounds::{
    budget_ceiling, check_bound, potential_report, quadratic_identity_residual, BoundReport, BoundSpec,
    PotentialReport,
};
use crate::config::Config;
use crate::error::{BenchError, Result};
use crate::experiments::{hoeffding_check, jeffreys_experiment, ForecasterFactory, StochasticSetup};
use crate::setup::Setup;

pub const TRACE_FILE: &str = "trace.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const DIAGNOSTICS_HEADER: [&str; 9] = [
    "n",
    "mu",
    "residual",
    "kdiag",
    "increment",
    "budget",
    "slack",
    "potential_sq",
    "mode",
];

/// At most this many mismatch messages are kept by [`verify`].
const MAX_PROBLEMS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub name: String,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub label: String,
    pub benchmark: String,
    pub final_lhs: f64,
    pub final_rhs: f64,
    pub min_margin: f64,
    pub min_relative_margin: f64,
    pub violations: usize,
}

impl From<&BoundReport> for BoundSummary {
    fn from(r: &BoundReport) -> Self {
        let last = r.rows.last();
        Self {
            label: r.label.clone(),
            benchmark: r.benchmark.clone(),
            final_lhs: last.map_or(0.0, |row| row.lhs),
            final_rhs: last.map_or(0.0, |row| row.rhs),
            min_margin: r.min_margin,
            min_relative_margin: r.min_relative_margin,
            violations: r.violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSummary {
    pub potential_sq: f64,
    pub cumulative_budget: f64,
    pub cumulative_slack: f64,
    pub excursions: usize,
    pub max_round_excess: f64,
    pub budget_limit: f64,
    pub within_limit: bool,
}

impl From<&PotentialReport> for PotentialSummary {
    fn from(p: &PotentialReport) -> Self {
        Self {
            potential_sq: p.potential_sq,
            cumulative_budget: p.cumulative_budget,
            cumulative_slack: p.cumulative_slack,
            excursions: p.excursions,
            max_round_excess: p.max_round_excess,
            budget_limit: p.budget_limit,
            within_limit: p.within_limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Runtimes {
    pub run_seconds: f64,
    pub check_seconds: f64,
    pub experiment_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: Option<String>,
    pub family: String,
    pub seed: u64,
    pub rounds: usize,
    pub c_f: f64,
    pub benchmarks: Vec<BenchmarkSummary>,
    pub bounds: Vec<BoundSummary>,
    pub potential: PotentialSummary,
    /// Quadratic family only: worst relative residual of the three-term identity.
    pub identity_residual: Option<f64>,
    /// Smallest interval holding every prediction.
    pub effective_range: Option<(f64, f64)>,
    pub sup_norms: Option<String>,
    pub experiment: Option<serde_json::Value>,
    pub runtimes: Option<Runtimes>,
    pub config: Config,
}

impl Summary {
    pub fn violations(&self) -> usize {
        self.bounds.iter().map(|b| b.violations).sum()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| BenchError::io(path, e))?;
        serde_json::from_reader(BufReader::new(f)).map_err(|e| BenchError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub struct RunOutput {
    pub trace: Trace,
    pub diagnostics: Vec<RoundDiagnostics>,
    pub summary: Summary,
}

/// Runs the protocol once with a fresh leader and the config's generator.
pub fn execute(setup: &Setup, seed: u64) -> Result<(Trace, Leader)> {
    let mut leader = setup.make_leader()?;
    let mut generator = setup.make_generator(seed)?;
    let trace = run_protocol(
        &mut generator,
        &mut leader,
        &setup.named_benchmarks(),
        setup.config.rounds,
        setup.space,
    )?;
    Ok((trace, leader))
}

/// Bound reports for every benchmark, in registration order.
pub fn check_all(setup: &Setup, leader: &Leader, trace: &Trace, diags: &[RoundDiagnostics]) -> Result<Vec<BoundReport>> {
    let mut out = Vec::new();
    for (i, b) in setup.benchmarks.iter().enumerate() {
        let spec = BoundSpec::for_family(leader.loss(), leader.c_f(), b.norm());
        out.push(check_bound(trace, i, &spec, Some(diags)));
        if setup.family == Family::Quadratic {
            let spec = BoundSpec::quadratic_as_bregman(setup.config.loss.y_max, leader.c_f(), b.norm())?;
            out.push(check_bound(trace, i, &spec, Some(diags)));
        }
    }
    Ok(out)
}

fn run_experiment(setup: &Setup) -> Result<Option<serde_json::Value>> {
    let Some(exp) = &setup.config.experiment else {
        return Ok(None);
    };
    if setup.family != Family::Quadratic {
        return Err(BenchError::Config("experiments need the quadratic family".into()));
    }
    let truth = setup.benchmark(&exp.truth)?.clone();
    let stochastic = StochasticSetup {
        y_max: setup.config.loss.y_max,
        noise: exp.noise.unwrap_or(setup.generator_params().noise),
        side_dim: setup.config.side_dim,
        rounds: setup.config.rounds,
        delta: setup.config.delta,
        runs: setup.config.runs,
        seed: setup.config.seed,
    };
    let leader = || setup.make_leader().map(|l| Box::new(l) as Box<dyn Forecaster + Send>);
    let zero = || Ok(Box::new(Stateless(|_: &Situation| 0.0)) as Box<dyn Forecaster + Send>);
    let value = match exp.kind.as_str() {
        "hoeffding" => {
            let factory: &ForecasterFactory = match exp.strategy.as_deref().unwrap_or("leader") {
                "leader" => &leader,
                "zero" => &zero,
                other => return Err(BenchError::Config(format!("unknown strategy {other:?}"))),
            };
            serde_json::to_value(hoeffding_check(truth.clone(), factory, &stochastic)?)?
        }
        "jeffreys" => {
            let checkpoints = if exp.checkpoints.is_empty() {
                vec![setup.config.rounds]
            } else {
                exp.checkpoints.clone()
            };
            let c_f = setup.make_leader()?.c_f();
            serde_json::to_value(jeffreys_experiment(
                truth.clone(),
                truth.norm(),
                c_f,
                &leader,
                &stochastic,
                &checkpoints,
            )?)?
        }
        other => return Err(BenchError::Config(format!("unknown experiment kind {other:?}"))),
    };
    Ok(Some(value))
}

/// One full run: protocol, bound checks, potential accounting and the
/// optional experiment. `timing` adds wall-clock runtimes to the summary.
pub fn run(config: Config, timing: bool) -> Result<RunOutput> {
    let setup = Setup::new(config)?;
    let t0 = Instant::now();
    let (trace, leader) = execute(&setup, setup.config.seed)?;
    let t1 = Instant::now();
    let diagnostics = leader.diagnostics().to_vec();
    let reports = check_all(&setup, &leader, &trace, &diagnostics)?;
    let potential = potential_report(&diagnostics, budget_ceiling(leader.loss(), leader.c_f()));
    let identity_residual = (setup.family == Family::Quadratic).then(|| {
        (0..setup.benchmarks.len())
            .map(|i| quadratic_identity_residual(&trace, i))
            .fold(0.0, f64::max)
    });
    let t2 = Instant::now();
    let experiment = run_experiment(&setup)?;
    let t3 = Instant::now();
    let summary = Summary {
        name: setup.config.name.clone(),
        family: setup.family.as_str().into(),
        seed: setup.config.seed,
        rounds: trace.len(),
        c_f: leader.c_f(),
        benchmarks: setup
            .benchmarks
            .iter()
            .map(|b| BenchmarkSummary {
                name: b.name().into(),
                norm: b.norm(),
            })
            .collect(),
        bounds: reports.iter().map(BoundSummary::from).collect(),
        potential: PotentialSummary::from(&potential),
        identity_residual,
        effective_range: leader.effective_range(),
        sup_norms: setup.sup_norm_source.map(|s| s.as_str().into()),
        experiment,
        runtimes: timing.then(|| Runtimes {
            run_seconds: (t1 - t0).as_secs_f64(),
            check_seconds: (t2 - t1).as_secs_f64(),
            experiment_seconds: (t3 - t2).as_secs_f64(),
        }),
        config: setup.config.clone(),
    };
    Ok(RunOutput {
        trace,
        diagnostics,
        summary,
    })
}

pub fn write_diagnostics_csv<W: std::io::Write>(diags: &[RoundDiagnostics], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let to_err = |e: csv::Error| BenchError::Config(format!("writing diagnostics: {e}"));
    csv.write_record(DIAGNOSTICS_HEADER).map_err(to_err)?;
    for d in diags {
        csv.write_record([
            d.n.to_string(),
            d.mu.to_string(),
            d.residual.to_string(),
            d.kdiag.to_string(),
            d.increment.to_string(),
            d.budget.to_string(),
            d.slack.to_string(),
            d.potential_sq.to_string(),
            d.mode.as_str().to_string(),
        ])
        .map_err(to_err)?;
    }
    csv.flush().map_err(|e| BenchError::Config(format!("writing diagnostics: {e}")))?;
    Ok(())
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<RoundDiagnostics>> {
    let parse_err = |message: String| BenchError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut csv = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let header = csv.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    if header.iter().ne(DIAGNOSTICS_HEADER) {
        return Err(parse_err(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in csv.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| parse_err(format!("row {}: bad {} {:?}", i + 1, DIAGNOSTICS_HEADER[j], &rec[j])))
        };
        out.push(RoundDiagnostics {
            n: rec[0].parse().map_err(|_| parse_err(format!("row {}: bad n", i + 1)))?,
            mu: num(1)?,
            residual: num(2)?,
            kdiag: num(3)?,
            increment: num(4)?,
            budget: num(5)?,
            slack: num(6)?,
            potential_sq: num(7)?,
            mode: RoundMode::parse(&rec[8]).ok_or_else(|| parse_err(format!("row {}: bad mode", i + 1)))?,
        });
    }
    Ok(out)
}

/// Writes `trace.csv`, `diagnostics.csv` and `summary.json` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let create = |name: &str| -> Result<(PathBuf, File)> {
        let p = dir.join(name);
        let f = File::create(&p).map_err(|e| BenchError::io(&p, e))?;
        Ok((p, f))
    };
    let (_, f) = create(TRACE_FILE)?;
    out.trace.write_csv(std::io::BufWriter::new(f))?;
    let (_, f) = create(DIAGNOSTICS_FILE)?;
    write_diagnostics_csv(&out.diagnostics, std::io::BufWriter::new(f))?;
    let (p, f) = create(SUMMARY_FILE)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &out.summary)?;
    let _ = p;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub rounds: usize,
    /// Total number of mismatches found; `problems` keeps the first few.
    pub mismatches: usize,
    pub problems: Vec<String>,
    pub bound_violations: usize,
    pub diagnostics_checked: bool,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches == 0 && self.bound_violations == 0
    }

    fn flag(&mut self, message: String) {
        self.mismatches += 1;
        if self.problems.len() < MAX_PROBLEMS {
            self.problems.push(message);
        }
    }
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a == b)
}

/// Replays a recorded trace against its config.
///
/// The leader is rerun on the recorded situations and must reproduce every
/// prediction exactly; the generator is rerun with the config seed and must
/// reproduce every `x` and `y`; the bounds are checked again; and a
/// `diagnostics.csv` next to the trace, if present, must match the replayed
/// potential.
pub fn verify(trace_path: &Path, config: Config) -> Result<VerifyReport> {
    let setup = Setup::new(config)?;
    let f = File::open(trace_path).map_err(|e| BenchError::io(trace_path, e))?;
    let trace = Trace::read_csv(BufReader::new(f), setup.space).map_err(|e| BenchError::Parse {
        path: trace_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut report = VerifyReport {
        rounds: trace.len(),
        ..VerifyReport::default()
    };
    let names: Vec<String> = setup.benchmarks.iter().map(|b| b.name().to_string()).collect();
    if trace.benchmarks != names {
        report.flag(format!("benchmarks {:?} do not match the config's {:?}", trace.benchmarks, names));
        return Ok(report);
    }
    if trace.side_dim != setup.config.side_dim {
        report.flag(format!(
            "side_dim {} does not match the config's {}",
            trace.side_dim, setup.config.side_dim
        ));
        return Ok(report);
    }
    if trace.len() != setup.config.rounds {
        report.flag(format!("{} rounds recorded, config asks for {}", trace.len(), setup.config.rounds));
    }
    for (i, r) in trace.rounds.iter().enumerate() {
        if !setup.space.contains(r.y) {
            report.flag(format!("round {}: y = {} lies outside the outcome space", i + 1, r.y));
        }
    }

    let mut leader = setup.make_leader()?;
    let mut generator = setup.make_generator(setup.config.seed)?;
    let situations = trace.situations();
    let mut x = generator.side_info(1);
    for (i, (r, s)) in trace.rounds.iter().zip(&situations).enumerate() {
        let n = i + 1;
        if x.len() != r.x.len() || x.iter().zip(&r.x).any(|(a, b)| !same(*a, *b)) {
            report.flag(format!("round {n}: x = {:?}, replay gives {:?}", r.x, x));
        }
        let mu = leader.forecast(s)?;
        if !same(mu, r.mu) {
            report.flag(format!("round {n}: mu = {}, replay gives {mu}", r.mu));
        }
        for (j, b) in setup.benchmarks.iter().enumerate() {
            let phi = b.predict(s);
            if !same(phi, r.phi[j]) {
                report.flag(format!("round {n}: phi_{} = {}, replay gives {phi}", b.name(), r.phi[j]));
            }
        }
        let y = generator.outcome(s, r.mu);
        if !same(y, r.y) {
            report.flag(format!("round {n}: y = {}, generator gives {y}", r.y));
        }
        leader.observe(s, mu, r.y)?;
        if n < trace.len() {
            x = generator.side_info(n + 1);
        }
    }

    let diags = leader.diagnostics().to_vec();
    for b in check_all(&setup, &leader, &trace, &diags)? {
        report.bound_violations += b.violations;
        if b.violations > 0 {
            report.flag(format!(
                "{} against {}: {} violations, min margin {}",
                b.label, b.benchmark, b.violations, b.min_margin
            ));
        }
    }

    let sibling = trace_path.with_file_name(DIAGNOSTICS_FILE);
    if sibling.exists() {
        report.diagnostics_checked = true;
        let recorded = read_diagnostics_csv(&sibling)?;
        if recorded.len() != diags.len() {
            report.flag(format!(
                "{} diagnostics rows, replay gives {}",
                recorded.len(),
                diags.len()
            ));
        }
        for (a, b) in recorded.iter().zip(&diags) {
            if !same(a.potential_sq, b.potential_sq) || a.mode != b.mode {
                report.flag(format!(
                    "round {}: potential_sq = {} ({}), replay gives {} ({})",
                    a.n,
                    a.potential_sq,
                    a.mode.as_str(),
                    b.potential_sq,
                    b.mode.as_str()
                ));
            }
        }
    }
    Ok(report)
}

/// Plain-text rendering of a summary.
pub fn render_report(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} family, {} rounds, seed {}, c_F = {:.6}",
        s.family, s.rounds, s.seed, s.c_f
    );
    if let Some(name) = &s.name {
        let _ = writeln!(out, "run: {name}");
    }
    let _ = writeln!(
        out,
        "{:<14} {:<12} {:>14} {:>14} {:>14} {:>6}",
        "bound", "benchmark", "final |lhs|", "final rhs", "min margin", "viol"
    );
    for b in &s.bounds {
        let _ = writeln!(
            out,
            "{:<14} {:<12} {:>14.6} {:>14.6} {:>14.6} {:>6}",
            b.label,
            b.benchmark,
            b.final_lhs.abs(),
            b.final_rhs,
            b.min_margin,
            b.violations
        );
    }
    let p = &s.potential;
    let _ = writeln!(
        out,
        "potential^2 {:.6}, budget {:.6} (limit {:.6}), slack {:.6}, excursions {}",
        p.potential_sq, p.cumulative_budget, p.budget_limit, p.cumulative_slack, p.excursions
    );
    if let Some((lo, hi)) = s.effective_range {
        let _ = writeln!(out, "predictions in [{lo}, {hi}]");
    }
    if let Some(r) = s.identity_residual {
        let _ = writeln!(out, "identity residual {r:.3e}");
    }
    if let Some(e) = &s.experiment {
        let _ = writeln!(out, "experiment: {e}");
    }
    if let Some(t) = &s.runtimes {
        let _ = writeln!(
            out,
            "runtime: run {:.3}s, checks {:.3}s, experiment {:.3}s",
            t.run_seconds, t.check_seconds, t.experiment_seconds
        );
    }
    let _ = writeln!(out, "total violations: {}", s.violations());
    out
}
