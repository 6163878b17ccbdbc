//! Left-hand sides, right-hand sides and per-prefix margins of the bounds.

use leading_core::engine::RoundDiagnostics;
use leading_core::leaders::{Family, FamilyLoss};
use leading_core::losses::{quadratic_loss, BregmanLoss, ScoringRule};
use leading_core::protocol::Trace;
use serde::Serialize;

use crate::error::{BenchError, Result};

/// Relative tolerance below which a negative margin counts as a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-6;

/// Inputs to a right-hand side. `scale` is `Y` for the quadratic bound and
/// `diam(Y)` for the Bregman bound; `aux_norm` is `||Psi'||_C` or
/// `||Exp||_C`. Unused fields are ignored.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundParams {
    pub scale: f64,
    pub c_f: f64,
    pub bench_norm: f64,
    pub aux_norm: f64,
    pub n: usize,
}

pub fn bound_rhs(family: Family, p: &BoundParams) -> f64 {
    let sqrt_n = (p.n as f64).sqrt();
    let c2 = p.c_f * p.c_f;
    match family {
        Family::Quadratic => 2.0 * p.scale * (c2 + 1.0).sqrt() * (p.bench_norm + p.scale) * sqrt_n,
        Family::Bregman => p.scale * (c2 + 1.0).sqrt() * (p.bench_norm + p.aux_norm) * sqrt_n,
        Family::Scoring => 0.5 * (c2 + 1.0).sqrt() * (p.bench_norm + p.aux_norm) * sqrt_n,
        Family::LogLoss => 0.5 * (c2 + 1.8).sqrt() * (p.bench_norm + 1.0) * sqrt_n,
    }
}

/// [`bound_rhs`] with the family given by name.
pub fn bound_rhs_named(family: &str, p: &BoundParams) -> Result<f64> {
    let family: Family = family
        .parse()
        .map_err(|_| BenchError::Config(format!("unknown family {family:?}")))?;
    Ok(bound_rhs(family, p))
}

/// Stochastic term `4 Y^2 sqrt(2 ln(2/delta)) sqrt(N)`.
pub fn hoeffding_rhs(y_max: f64, delta: f64, n: usize) -> f64 {
    4.0 * y_max * y_max * (2.0 * (2.0 / delta).ln()).sqrt() * (n as f64).sqrt()
}

/// Shared right-hand side of both Jeffreys inequalities.
pub fn jeffreys_rhs(y_max: f64, c_f: f64, norm: f64, delta: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    y_max * (c_f * c_f + 1.0).sqrt() * (norm + y_max) * sqrt_n
        + 2.0 * y_max * y_max * (2.0 * (2.0 / delta).ln()).sqrt() * sqrt_n
}

/// Which inequality a report certifies.
#[derive(Clone, Debug)]
pub struct BoundSpec {
    pub label: String,
    pub family: Family,
    pub loss: FamilyLoss,
    pub c_f: f64,
    pub bench_norm: f64,
}

impl BoundSpec {
    /// The bound a leader of `loss`'s family carries.
    pub fn for_family(loss: &FamilyLoss, c_f: f64, bench_norm: f64) -> Self {
        let (family, label) = match loss {
            FamilyLoss::Quadratic { .. } => (Family::Quadratic, "quadratic"),
            FamilyLoss::Bregman(_) => (Family::Bregman, "bregman"),
            FamilyLoss::Scoring(_) => (Family::Scoring, "scoring"),
            FamilyLoss::LogLoss(_) => (Family::LogLoss, "logloss"),
        };
        Self {
            label: label.into(),
            family,
            loss: loss.clone(),
            c_f,
            bench_norm,
        }
    }

    /// The Bregman bound for `Psi(y) = y^2` on `[-Y, Y]`, where
    /// `Psi'(F) = 2F` doubles the benchmark norm.
    pub fn quadratic_as_bregman(y_max: f64, c_f: f64, bench_norm: f64) -> Result<Self> {
        Ok(Self {
            label: "quadratic_as_bregman".into(),
            family: Family::Bregman,
            loss: FamilyLoss::Bregman(quadratic_loss(y_max)?),
            c_f,
            bench_norm: 2.0 * bench_norm,
        })
    }

    pub fn params(&self, n: usize) -> BoundParams {
        let (scale, aux_norm) = match &self.loss {
            FamilyLoss::Quadratic { y } => (*y, 0.0),
            FamilyLoss::Bregman(l) => (l.diameter(), l.psi_prime_sup()),
            FamilyLoss::Scoring(r) => (0.0, r.exposure_sup()),
            FamilyLoss::LogLoss(_) => (0.0, 0.0),
        };
        BoundParams {
            scale,
            c_f: self.c_f,
            bench_norm: self.bench_norm,
            aux_norm,
            n,
        }
    }

    pub fn rhs(&self, n: usize) -> f64 {
        bound_rhs(self.family, &self.params(n))
    }
}

fn bregman_round(l: &BregmanLoss, y: f64, mu: f64, phi: f64) -> f64 {
    l.divergence_unchecked(y, mu) + l.divergence_unchecked(mu, phi) - l.divergence_unchecked(y, phi)
}

fn scoring_round(r: &ScoringRule, y: f64, mu: f64, phi: f64) -> f64 {
    r.extend(y, mu) + r.divergence(mu, phi) - r.extend(y, phi)
}

/// One round's contribution to the three-term expression for `loss`.
pub fn gap_term(loss: &FamilyLoss, y: f64, mu: f64, phi: f64) -> f64 {
    match loss {
        FamilyLoss::Quadratic { .. } => (y - mu).powi(2) + (mu - phi).powi(2) - (y - phi).powi(2),
        FamilyLoss::Bregman(l) => bregman_round(l, y, mu, phi),
        FamilyLoss::Scoring(r) | FamilyLoss::LogLoss(r) => scoring_round(r, y, mu, phi),
    }
}

/// Cumulative signed three-term expression at every prefix.
pub fn three_term_gap(trace: &Trace, benchmark: usize, loss: &FamilyLoss) -> Vec<f64> {
    let mut total = 0.0;
    trace
        .rounds
        .iter()
        .map(|r| {
            total += gap_term(loss, r.y, r.mu, r.phi[benchmark]);
            total
        })
        .collect()
}

/// Largest relative deviation, over prefixes, between the quadratic
/// three-term expression and `2 sum (phi - mu)(y - mu)`.
pub fn quadratic_identity_residual(trace: &Trace, benchmark: usize) -> f64 {
    let (mut gap, mut cross, mut scale) = (0.0, 0.0, 0.0);
    let mut worst: f64 = 0.0;
    for r in &trace.rounds {
        let phi = r.phi[benchmark];
        let (a, b, c) = ((r.y - r.mu).powi(2), (r.mu - phi).powi(2), (r.y - phi).powi(2));
        gap += a + b - c;
        cross += 2.0 * (phi - r.mu) * (r.y - r.mu);
        scale += a + b + c;
        if scale > 0.0 {
            worst = worst.max((gap - cross).abs() / scale);
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrefixRow {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub potential: Option<f64>,
    pub slack: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub label: String,
    pub benchmark: String,
    pub rows: Vec<PrefixRow>,
    pub min_margin: f64,
    /// `min margin / rhs`.
    pub min_relative_margin: f64,
    pub violations: usize,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

pub fn is_violation(margin: f64, rhs: f64) -> bool {
    margin < -VIOLATION_TOLERANCE * rhs
}

/// `margin = rhs - |lhs|` on every prefix, with potential and cumulative
/// slack taken from the engine diagnostics when given.
pub fn check_bound(
    trace: &Trace,
    benchmark: usize,
    spec: &BoundSpec,
    diagnostics: Option<&[RoundDiagnostics]>,
) -> BoundReport {
    let lhs = three_term_gap(trace, benchmark, &spec.loss);
    let mut rows = Vec::with_capacity(lhs.len());
    let mut slack = 0.0;
    let (mut min_margin, mut min_rel, mut violations) = (f64::INFINITY, f64::INFINITY, 0);
    for (i, &l) in lhs.iter().enumerate() {
        let n = i + 1;
        let rhs = spec.rhs(n);
        let margin = rhs - l.abs();
        let d = diagnostics.and_then(|d| d.get(i));
        if let Some(d) = d {
            slack += d.slack;
        }
        if is_violation(margin, rhs) {
            violations += 1;
        }
        min_margin = min_margin.min(margin);
        if rhs > 0.0 {
            min_rel = min_rel.min(margin / rhs);
        }
        rows.push(PrefixRow {
            n,
            lhs: l,
            rhs,
            margin,
            potential: d.map(|d| d.potential_sq),
            slack: d.map(|_| slack),
        });
    }
    BoundReport {
        label: spec.label.clone(),
        benchmark: trace.benchmarks.get(benchmark).cloned().unwrap_or_default(),
        rows,
        min_margin,
        min_relative_margin: min_rel,
        violations,
    }
}

/// Budget accounting of the engine over a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialReport {
    pub rounds: usize,
    pub potential_sq: f64,
    pub cumulative_budget: f64,
    pub cumulative_slack: f64,
    /// Rounds whose increment exceeded the budget by more than `1e-9 (1 + budget)`.
    pub excursions: usize,
    pub max_round_excess: f64,
    /// Upper limit on the cumulative budget implied by the family's constant.
    pub budget_limit: f64,
    pub within_limit: bool,
}

/// `limit_per_round` is the family's per-round budget ceiling, e.g.
/// `(c_F^2 + 1.8) / 4` for the log-loss leader.
pub fn potential_report(diagnostics: &[RoundDiagnostics], limit_per_round: f64) -> PotentialReport {
    let (mut budget, mut slack, mut excursions, mut worst) = (0.0, 0.0, 0, 0.0f64);
    for d in diagnostics {
        budget += d.budget;
        slack += d.slack;
        if d.increment > d.budget + 1e-9 * (1.0 + d.budget) {
            excursions += 1;
        }
        worst = worst.max(d.increment - d.budget);
    }
    let n = diagnostics.len();
    let limit = limit_per_round * n as f64;
    PotentialReport {
        rounds: n,
        potential_sq: diagnostics.last().map_or(0.0, |d| d.potential_sq),
        cumulative_budget: budget,
        cumulative_slack: slack,
        excursions,
        max_round_excess: worst,
        budget_limit: limit,
        within_limit: budget <= limit + VIOLATION_TOLERANCE * n as f64,
    }
}

/// Per-round ceiling on the engine budget for each family, given `c_F`.
pub fn budget_ceiling(loss: &FamilyLoss, c_f: f64) -> f64 {
    let c2 = c_f * c_f;
    match loss {
        // (B - mu)(mu - A) <= diam^2 / 4 with psi^2 <= 1
        FamilyLoss::Quadratic { y } => y * y * (c2 + 1.0),
        FamilyLoss::Bregman(l) => l.diameter().powi(2) * (c2 + 1.0),
        FamilyLoss::Scoring(_) => 0.25 * (c2 + 1.0),
        FamilyLoss::LogLoss(_) => 0.25 * (c2 + 1.8),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use leading_core::losses::{brier, log_loss, negative_entropy_loss};
    use leading_core::protocol::{OutcomeSpace, TraceRound};

    fn one_round(y: f64, mu: f64, phi: f64, space: OutcomeSpace) -> Trace {
        let mut t = Trace::new(space, 1, vec!["f".into()]);
        t.rounds.push(TraceRound {
            x: vec![0.0],
            mu,
            y,
            phi: vec![phi],
        });
        t
    }

    #[test]
    fn rhs_examples() {
        let p = BoundParams {
            scale: 1.0,
            c_f: 1.0,
            n: 100,
            ..Default::default()
        };
        assert!((bound_rhs(Family::Quadratic, &p) - 20.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((bound_rhs(Family::Quadratic, &p) - 28.284).abs() < 1e-3);
        let p = BoundParams {
            aux_norm: 1.0,
            n: 4,
            ..Default::default()
        };
        assert_eq!(bound_rhs(Family::Scoring, &p), 1.0);
        let p = BoundParams {
            n: 1,
            ..Default::default()
        };
        assert!((bound_rhs(Family::LogLoss, &p) - 1.8f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((bound_rhs(Family::LogLoss, &p) - 0.6708).abs() < 1e-4);
        assert!(bound_rhs_named("mystery", &p).is_err());
        assert_eq!(bound_rhs_named("scoring", &p).unwrap(), 0.5 * 1f64.sqrt() * 0.0);
    }

    #[test]
    fn stochastic_rhs_examples() {
        let v = hoeffding_rhs(1.0, 0.05, 100);
        assert!((v - 40.0 * (2.0 * 40f64.ln()).sqrt()).abs() < 1e-12);
        assert!((v - 108.648).abs() < 1e-3);
        let j = jeffreys_rhs(1.0, 1.0, 1.0, 0.05, 400);
        assert!((j - (2f64.sqrt() * 2.0 * 20.0 + 2.0 * (2.0 * 40f64.ln()).sqrt() * 20.0)).abs() < 1e-12);
        assert!((j - 165.217).abs() < 1e-3);
    }

    #[test]
    fn single_round_gap() {
        let t = one_round(1.0, 0.5, 0.2, OutcomeSpace::symmetric(1.0).unwrap());
        let gap = three_term_gap(&t, 0, &FamilyLoss::Quadratic { y: 1.0 });
        assert!((gap[0] + 0.3).abs() < 1e-15);
        assert!((2.0 * (0.2 - 0.5) * (1.0 - 0.5) - gap[0]).abs() < 1e-15);
        assert!(quadratic_identity_residual(&t, 0) < 1e-15);
    }

    #[test]
    fn gap_vanishes_when_benchmark_equals_leader() {
        let losses = [
            FamilyLoss::Quadratic { y: 1.0 },
            FamilyLoss::Bregman(negative_entropy_loss(0.05).unwrap()),
            FamilyLoss::Scoring(brier()),
            FamilyLoss::LogLoss(log_loss()),
        ];
        for loss in &losses {
            for y in [0.0, 1.0] {
                let y = if matches!(loss, FamilyLoss::Bregman(_)) { 0.05 + 0.9 * y } else { y };
                assert!(gap_term(loss, y, 0.3, 0.3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn kl_gap_matches_the_cross_term() {
        let l = negative_entropy_loss(0.05).unwrap();
        let (y, mu, phi) = (0.9, 0.4, 0.2);
        let gap = gap_term(&FamilyLoss::Bregman(l.clone()), y, mu, phi);
        let cross = (l.psi_prime(phi) - l.psi_prime(mu)) * (y - mu);
        assert!((gap - cross).abs() < 1e-12);
    }

    #[test]
    fn trivial_trace_has_no_violation() {
        let t = one_round(1.0, 0.5, 0.5, OutcomeSpace::binary());
        let spec = BoundSpec::for_family(&FamilyLoss::Scoring(brier()), 1.0, 0.0);
        let report = check_bound(&t, 0, &spec, None);
        assert_eq!(report.violations, 0);
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].lhs, 0.0);
    }

    #[test]
    fn quadratic_as_bregman_doubles_the_rhs() {
        let q = BoundSpec::for_family(&FamilyLoss::Quadratic { y: 1.0 }, 1.0, 0.7);
        let b = BoundSpec::quadratic_as_bregman(1.0, 1.0, 0.7).unwrap();
        for n in [1, 10, 1000] {
            assert!((b.rhs(n) - 2.0 * q.rhs(n)).abs() < 1e-9 * q.rhs(n));
        }
    }
}
