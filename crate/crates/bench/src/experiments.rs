//! Stochastic-reality experiments and the pure identities of the Jeffreys
//! discussion.

use std::sync::Arc;

use leading_core::protocol::{run_protocol, Forecaster, Named, OutcomeSpace, PredictionStrategy, Trace};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{bound_rhs, hoeffding_rhs, jeffreys_rhs, is_violation, BoundParams};
use crate::error::Result;
use crate::generators::{Generator, GeneratorKind, GeneratorParams};
use leading_core::leaders::Family;

/// Builds a fresh forecaster for one run.
pub type ForecasterFactory<'a> = dyn Fn() -> Result<Box<dyn Forecaster + Send>> + Send + Sync + 'a;

/// Seed of run `i` derived from a base seed.
pub fn run_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticSetup {
    pub y_max: f64,
    /// Half width of the uniform noise around the truth.
    pub noise: f64,
    pub side_dim: usize,
    pub rounds: usize,
    pub delta: f64,
    pub runs: usize,
    pub seed: u64,
}

fn stochastic_trace(
    truth: &Arc<dyn PredictionStrategy>,
    forecaster: &mut dyn Forecaster,
    setup: &StochasticSetup,
    seed: u64,
) -> Result<Trace> {
    let space = OutcomeSpace::symmetric(setup.y_max)?;
    let params = GeneratorParams {
        noise: setup.noise,
        ..GeneratorParams::default()
    };
    let mut reality = Generator::new(
        GeneratorKind::StochasticTruth,
        space,
        setup.side_dim,
        params,
        Some(truth.clone()),
        seed,
    )?;
    let benchmarks = [Named::new("truth", truth.clone())];
    Ok(run_protocol(&mut reality, forecaster, &benchmarks, setup.rounds, space)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoeffdingReport {
    pub runs: usize,
    pub rounds: usize,
    pub delta: f64,
    pub rhs: f64,
    pub violations: usize,
    pub violation_rate: f64,
    pub max_abs_lhs: f64,
}

/// `sum (y - phi)^2 + sum (phi - mu)^2 - sum (y - mu)^2` at the last round.
pub fn hoeffding_lhs(trace: &Trace, truth: usize) -> f64 {
    trace
        .rounds
        .iter()
        .map(|r| {
            let phi = r.phi[truth];
            (r.y - phi).powi(2) + (phi - r.mu).powi(2) - (r.y - r.mu).powi(2)
        })
        .sum()
}

/// Fraction of runs in which the true strategy and `g` differ by more than
/// the Hoeffding term.
pub fn hoeffding_check(
    truth: Arc<dyn PredictionStrategy>,
    g: &ForecasterFactory,
    setup: &StochasticSetup,
) -> Result<HoeffdingReport> {
    let lhs: Vec<f64> = (0..setup.runs)
        .into_par_iter()
        .map(|i| {
            let mut forecaster = g()?;
            let trace = stochastic_trace(&truth, forecaster.as_mut(), setup, run_seed(setup.seed, i))?;
            Ok(hoeffding_lhs(&trace, 0))
        })
        .collect::<Result<_>>()?;
    let rhs = hoeffding_rhs(setup.y_max, setup.delta, setup.rounds);
    let violations = lhs.iter().filter(|l| l.abs() > rhs).count();
    Ok(HoeffdingReport {
        runs: setup.runs,
        rounds: setup.rounds,
        delta: setup.delta,
        rhs,
        violations,
        violation_rate: violations as f64 / setup.runs.max(1) as f64,
        max_abs_lhs: lhs.iter().fold(0.0, |m, l| m.max(l.abs())),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JeffreysCheckpoint {
    pub n: usize,
    pub rhs: f64,
    /// Runs in which the loss inequality or the proximity inequality fails.
    pub joint_violations: usize,
    pub joint_violation_rate: f64,
    /// Median over runs of `sum (phi - mu)^2 / N`.
    pub median_proximity: f64,
    pub max_loss_gap: f64,
    pub max_proximity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JeffreysReport {
    pub runs: usize,
    pub delta: f64,
    pub truth_norm: f64,
    pub c_f: f64,
    pub checkpoints: Vec<JeffreysCheckpoint>,
}

impl JeffreysReport {
    pub fn at(&self, n: usize) -> Option<&JeffreysCheckpoint> {
        self.checkpoints.iter().find(|c| c.n == n)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Runs a leader against a noisy true strategy `F` with known `||F||` and
/// evaluates both Jeffreys inequalities at each checkpoint. The run length
/// is the largest checkpoint.
pub fn jeffreys_experiment(
    truth: Arc<dyn PredictionStrategy>,
    truth_norm: f64,
    c_f: f64,
    leader: &ForecasterFactory,
    setup: &StochasticSetup,
    checkpoints: &[usize],
) -> Result<JeffreysReport> {
    let rounds = checkpoints.iter().copied().max().unwrap_or(setup.rounds);
    let setup_n = StochasticSetup {
        rounds,
        ..setup.clone()
    };
    // per run, per checkpoint: (loss gap, proximity)
    let per_run: Vec<Vec<(f64, f64)>> = (0..setup.runs)
        .into_par_iter()
        .map(|i| {
            let mut forecaster = leader()?;
            let trace = stochastic_trace(&truth, forecaster.as_mut(), &setup_n, run_seed(setup.seed, i))?;
            let (mut loss_gap, mut prox) = (0.0, 0.0);
            let mut out = Vec::with_capacity(checkpoints.len());
            for (j, r) in trace.rounds.iter().enumerate() {
                let phi = r.phi[0];
                loss_gap += (r.y - r.mu).powi(2) - (r.y - phi).powi(2);
                prox += (phi - r.mu).powi(2);
                if checkpoints.contains(&(j + 1)) {
                    out.push((loss_gap, prox));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut sorted: Vec<usize> = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut reports = Vec::with_capacity(sorted.len());
    for (k, &n) in sorted.iter().enumerate() {
        let rhs = jeffreys_rhs(setup.y_max, c_f, truth_norm, setup.delta, n);
        let values: Vec<(f64, f64)> = per_run.iter().map(|r| r[k]).collect();
        let joint = values
            .iter()
            .filter(|(gap, prox)| gap.abs() > rhs || *prox > rhs)
            .count();
        reports.push(JeffreysCheckpoint {
            n,
            rhs,
            joint_violations: joint,
            joint_violation_rate: joint as f64 / setup.runs.max(1) as f64,
            median_proximity: median(values.iter().map(|(_, p)| p / n as f64).collect()),
            max_loss_gap: values.iter().fold(0.0, |m, (g, _)| m.max(g.abs())),
            max_proximity: values.iter().fold(0.0, |m, (_, p)| m.max(*p)),
        });
    }
    Ok(JeffreysReport {
        runs: setup.runs,
        delta: setup.delta,
        truth_norm,
        c_f,
        checkpoints: reports,
    })
}

/// `((phi1 + phi2)/2 - y)^2 - [((phi1 - y)^2 + (phi2 - y)^2)/2 - ((phi1 - phi2)/2)^2]`.
pub fn mixing_identity_check(phi1: f64, phi2: f64, y: f64) -> f64 {
    let mix = (0.5 * (phi1 + phi2) - y).powi(2);
    let avg = 0.5 * ((phi1 - y).powi(2) + (phi2 - y).powi(2));
    mix - (avg - (0.5 * (phi1 - phi2)).powi(2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PureJeffreysReport {
    pub rounds: usize,
    /// Prefixes at which `sum (phi_i - mu)^2 > excess loss + rhs`, per benchmark.
    pub violations: [usize; 2],
    /// Prefixes at which `sum (phi1 - phi2)^2 > 2 (sum (phi1 - mu)^2 + sum (phi2 - mu)^2)`.
    pub pair_violations: usize,
    pub min_margin: [f64; 2],
    pub final_distance: f64,
}

/// Checks, on every prefix, that each benchmark's predictions can be far
/// from the leader's only at the price of excess loss.
pub fn pure_jeffreys_check(
    trace: &Trace,
    benchmarks: [usize; 2],
    norms: [f64; 2],
    y_max: f64,
    c_f: f64,
) -> PureJeffreysReport {
    let mut prox = [0.0f64; 2];
    let mut loss_f = [0.0f64; 2];
    let mut loss_leader = 0.0;
    let mut pair = 0.0;
    let mut violations = [0usize; 2];
    let mut pair_violations = 0;
    let mut min_margin = [f64::INFINITY; 2];
    for (i, r) in trace.rounds.iter().enumerate() {
        let n = i + 1;
        loss_leader += (r.y - r.mu).powi(2);
        let phis = [r.phi[benchmarks[0]], r.phi[benchmarks[1]]];
        for j in 0..2 {
            prox[j] += (phis[j] - r.mu).powi(2);
            loss_f[j] += (r.y - phis[j]).powi(2);
            let rhs = bound_rhs(
                Family::Quadratic,
                &BoundParams {
                    scale: y_max,
                    c_f,
                    bench_norm: norms[j],
                    aux_norm: 0.0,
                    n,
                },
            );
            let margin = (loss_f[j] - loss_leader) + rhs - prox[j];
            min_margin[j] = min_margin[j].min(margin);
            if is_violation(margin, rhs) {
                violations[j] += 1;
            }
        }
        pair += (phis[0] - phis[1]).powi(2);
        if pair > 2.0 * (prox[0] + prox[1]) * (1.0 + 1e-12) + 1e-12 {
            pair_violations += 1;
        }
    }
    PureJeffreysReport {
        rounds: trace.len(),
        violations,
        pair_violations,
        min_margin,
        final_distance: pair,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use leading_core::protocol::{Situation, Stateless};

    #[test]
    fn mixing_identity_examples() {
        assert_eq!(mixing_identity_check(0.0, 1.0, 1.0), 0.0);
        assert_eq!(mixing_identity_check(0.4, 0.4, -0.2).abs(), 0.0);
    }

    #[test]
    fn zero_noise_and_g_equal_to_f() {
        let truth: Arc<dyn PredictionStrategy> = Arc::new(|s: &Situation| 0.5 * s.current()[0]);
        let t2 = truth.clone();
        let g: Box<ForecasterFactory> = Box::new(move || {
            let t = t2.clone();
            Ok(Box::new(Stateless(move |s: &Situation| t.predict(s))) as Box<dyn Forecaster + Send>)
        });
        let setup = StochasticSetup {
            y_max: 1.0,
            noise: 0.0,
            side_dim: 1,
            rounds: 50,
            delta: 0.05,
            runs: 5,
            seed: 3,
        };
        let report = hoeffding_check(truth, g.as_ref(), &setup).unwrap();
        assert_eq!(report.max_abs_lhs, 0.0);
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let truth: Arc<dyn PredictionStrategy> = Arc::new(|s: &Situation| s.current()[0] - 0.5);
        let g: Box<ForecasterFactory> =
            Box::new(|| Ok(Box::new(Stateless(|_: &Situation| 0.0)) as Box<dyn Forecaster + Send>));
        let setup = StochasticSetup {
            y_max: 1.0,
            noise: 0.3,
            side_dim: 1,
            rounds: 40,
            delta: 0.05,
            runs: 8,
            seed: 11,
        };
        let a = hoeffding_check(truth.clone(), g.as_ref(), &setup).unwrap();
        let b = hoeffding_check(truth, g.as_ref(), &setup).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
