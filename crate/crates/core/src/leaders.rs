//! The four leading strategies and the benchmarks they are compared to.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::engine::{Engine, ForecastFeatureMap, PredictionInterval, RoundDiagnostics, RoundRule};
use crate::error::{Error, Result};
use crate::kernels::{RkhsElement, SituationKernel};
use crate::losses::{logistic, BregmanLoss, RealFn, ScoringRule};
use crate::protocol::{Forecaster, OutcomeSpace, PredictionStrategy, Situation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Quadratic,
    Bregman,
    Scoring,
    LogLoss,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Quadratic => "quadratic",
            Family::Bregman => "bregman",
            Family::Scoring => "scoring",
            Family::LogLoss => "logloss",
        }
    }

    pub fn rule(&self) -> RoundRule {
        match self {
            Family::Bregman => RoundRule::K29,
            _ => RoundRule::K29Star,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quadratic" => Ok(Family::Quadratic),
            "bregman" => Ok(Family::Bregman),
            "scoring" => Ok(Family::Scoring),
            "logloss" | "log_loss" => Ok(Family::LogLoss),
            other => Err(Error::InvalidParameter(format!("unknown leader family {other:?}"))),
        }
    }
}

/// Maps a transformed benchmark value `G(s)` back to a prediction.
#[derive(Clone)]
pub struct Link {
    name: &'static str,
    forward: RealFn,
    inverse: RealFn,
    /// Largest `|G|` whose image stays in the prediction range.
    half_width: f64,
    range: (f64, f64),
}

impl fmt::Debug for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Link")
            .field("name", &self.name)
            .field("half_width", &self.half_width)
            .field("range", &self.range)
            .finish()
    }
}

impl Link {
    pub fn new(name: &'static str, forward: RealFn, inverse: RealFn, half_width: f64, range: (f64, f64)) -> Self {
        Self {
            name,
            forward,
            inverse,
            half_width,
            range,
        }
    }

    pub fn identity() -> Self {
        Self::new(
            "identity",
            Arc::new(|x| x),
            Arc::new(|g| g),
            f64::INFINITY,
            (f64::NEG_INFINITY, f64::INFINITY),
        )
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Prediction to transformed value.
    pub fn forward(&self, phi: f64) -> f64 {
        (self.forward)(phi)
    }

    /// Transformed value to prediction, kept inside the range.
    pub fn inverse(&self, g: f64) -> f64 {
        (self.inverse)(g).clamp(self.range.0, self.range.1)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }
}

/// A benchmark strategy `phi = link^{-1}(G)` with `G` in the RKHS.
#[derive(Clone)]
pub struct Benchmark {
    name: String,
    element: Arc<dyn RkhsElement>,
    link: Link,
}

impl fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .field("norm", &self.element.norm())
            .field("link", &self.link.name)
            .finish()
    }
}

impl Benchmark {
    /// Rejects elements that could leave the link's range: requires
    /// `||G|| c_F <= half width`.
    pub fn new(name: impl Into<String>, element: Arc<dyn RkhsElement>, link: Link, c_f: f64) -> Result<Self> {
        let name = name.into();
        let reach = element.norm() * c_f;
        if reach > link.half_width * (1.0 + 1e-12) {
            return Err(Error::Benchmark(format!(
                "{name}: ||G|| c_F = {reach} exceeds the {} link half width {}",
                link.name, link.half_width
            )));
        }
        Ok(Self { name, element, link })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `||G||_F`.
    pub fn norm(&self) -> f64 {
        self.element.norm()
    }

    pub fn element(&self) -> &Arc<dyn RkhsElement> {
        &self.element
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn transformed(&self, s: &Situation) -> f64 {
        self.element.eval(s)
    }
}

impl PredictionStrategy for Benchmark {
    fn predict(&self, s: &Situation) -> f64 {
        self.link.inverse(self.element.eval(s))
    }
}

/// The loss each family is judged by.
#[derive(Clone, Debug)]
pub enum FamilyLoss {
    Quadratic { y: f64 },
    Bregman(BregmanLoss),
    Scoring(ScoringRule),
    LogLoss(ScoringRule),
}

pub struct Leader {
    family: Family,
    loss: FamilyLoss,
    engine: Engine,
    outcomes: OutcomeSpace,
    link: Link,
    diagnostics: Vec<RoundDiagnostics>,
}

impl fmt::Debug for Leader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Leader")
            .field("family", &self.family)
            .field("rounds", &self.diagnostics.len())
            .field("interval", &self.engine.interval())
            .finish()
    }
}

impl Leader {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn loss(&self) -> &FamilyLoss {
        &self.loss
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn outcome_space(&self) -> &OutcomeSpace {
        &self.outcomes
    }

    /// The declared prediction space.
    pub fn prediction_interval(&self) -> PredictionInterval {
        self.engine.interval()
    }

    /// `c_F` of the situation kernel.
    pub fn c_f(&self) -> f64 {
        self.engine.map().kernel().embedding_constant_bound()
    }

    pub fn kernel(&self) -> &Arc<dyn SituationKernel> {
        self.engine.map().kernel()
    }

    /// The link benchmarks for this leader are expressed through.
    pub fn benchmark_link(&self) -> &Link {
        &self.link
    }

    pub fn benchmark(&self, name: impl Into<String>, element: Arc<dyn RkhsElement>) -> Result<Benchmark> {
        Benchmark::new(name, element, self.link.clone(), self.c_f())
    }

    pub fn diagnostics(&self) -> &[RoundDiagnostics] {
        &self.diagnostics
    }

    /// The smallest and largest prediction issued so far.
    pub fn effective_range(&self) -> Option<(f64, f64)> {
        self.diagnostics.iter().map(|d| d.mu).fold(None, |acc, mu| match acc {
            None => Some((mu, mu)),
            Some((lo, hi)) => Some((lo.min(mu), hi.max(mu))),
        })
    }
}

impl Forecaster for Leader {
    fn forecast(&mut self, s: &Situation) -> Result<f64> {
        self.engine.propose(s)
    }

    fn observe(&mut self, s: &Situation, mu: f64, y: f64) -> Result<()> {
        let d = self.engine.potential_update(s, mu, y)?;
        self.diagnostics.push(d);
        Ok(())
    }
}

fn build(
    family: Family,
    loss: FamilyLoss,
    map: ForecastFeatureMap,
    interval: PredictionInterval,
    outcomes: OutcomeSpace,
    link: Link,
) -> Leader {
    Leader {
        family,
        loss,
        engine: Engine::new(map, family.rule(), interval, &outcomes),
        outcomes,
        link,
        diagnostics: Vec::new(),
    }
}

/// `psi(mu) = mu / Y` on `[-Y, Y]`.
pub fn quadratic_leader(kernel: Arc<dyn SituationKernel>, y: f64) -> Result<Leader> {
    let outcomes = OutcomeSpace::symmetric(y)?;
    let map = ForecastFeatureMap::new(Arc::new(move |mu| mu / y), 1.0, kernel)?;
    Ok(build(
        Family::Quadratic,
        FamilyLoss::Quadratic { y },
        map,
        PredictionInterval::closed(-y, y)?,
        outcomes,
        Link::identity(),
    ))
}

/// `psi = Psi' / ||Psi'||_C` on the loss domain, which is also the outcome
/// space.
pub fn bregman_leader(loss: BregmanLoss, kernel: Arc<dyn SituationKernel>) -> Result<Leader> {
    let (lo, hi) = loss.domain();
    let Some(inverse) = loss.psi_prime_inverse().cloned() else {
        return Err(Error::Benchmark(format!(
            "{}: Psi' has no registered inverse on the domain",
            loss.name()
        )));
    };
    let sup = loss.psi_prime_sup();
    let pp = loss.psi_prime_fn();
    let mut map = ForecastFeatureMap::new(Arc::new(move |mu| pp(mu) / sup), 1.0, kernel)?;
    let inv = inverse.clone();
    map = map.with_inverse(Arc::new(move |t| inv(t * sup)));
    let link = Link::new("psi_prime", loss.psi_prime_fn(), inverse, sup, (lo, hi));
    Ok(build(
        Family::Bregman,
        FamilyLoss::Bregman(loss),
        map,
        PredictionInterval::closed(lo, hi)?,
        OutcomeSpace::interval(lo, hi)?,
        link,
    ))
}

fn exposure_link(rule: &ScoringRule) -> Result<Link> {
    let Some(inverse) = rule.exposure_inverse().cloned() else {
        return Err(Error::Benchmark(format!("{}: exposure has no registered inverse", rule.name())));
    };
    let (lo, hi) = rule.prediction_space();
    let half_width = rule.exposure(lo).abs().min(rule.exposure(hi).abs());
    let r = rule.clone();
    let range = if rule.is_open() {
        (lo.next_up(), hi.next_down())
    } else {
        (lo, hi)
    };
    Ok(Link::new("exposure", Arc::new(move |mu| r.exposure(mu)), inverse, half_width, range))
}

/// `psi = Exp / ||Exp||_C` on a closed prediction space, binary outcomes.
pub fn scoring_leader(rule: ScoringRule, kernel: Arc<dyn SituationKernel>) -> Result<Leader> {
    let sup = rule.exposure_sup();
    if rule.is_open() || !sup.is_finite() || sup <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{}: the scoring leader needs a closed prediction space with finite sup |Exp|",
            rule.name()
        )));
    }
    let (lo, hi) = rule.prediction_space();
    let link = exposure_link(&rule)?;
    let r = rule.clone();
    let map = ForecastFeatureMap::new(Arc::new(move |mu| r.exposure(mu) / sup), 1.0, kernel)?;
    Ok(build(
        Family::Scoring,
        FamilyLoss::Scoring(rule),
        map,
        PredictionInterval::closed(lo, hi)?,
        OutcomeSpace::binary(),
        link,
    ))
}

/// Unnormalized `psi(mu) = ln((1 - mu) / mu)` on the open interval (0, 1).
pub fn logloss_leader(kernel: Arc<dyn SituationKernel>) -> Result<Leader> {
    let rule = crate::losses::log_loss();
    let link = Link::new(
        "exposure",
        Arc::new(|mu| crate::losses::log_loss().exposure(mu)),
        Arc::new(|g: f64| logistic(-g)),
        f64::INFINITY,
        (0f64.next_up(), 1f64.next_down()),
    );
    let map = ForecastFeatureMap::new(
        Arc::new(|mu: f64| (-mu).ln_1p() - mu.ln()),
        f64::INFINITY,
        kernel,
    )?;
    Ok(build(
        Family::LogLoss,
        FamilyLoss::LogLoss(rule),
        map,
        PredictionInterval::open(0.0, 1.0)?,
        OutcomeSpace::binary(),
        link,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ConstantKernel, KernelExpansion, RbfWindowKernel};
    use crate::losses::{brier, log_loss, negative_entropy_loss};

    fn constant() -> Arc<dyn SituationKernel> {
        Arc::new(ConstantKernel::new(1.0).unwrap())
    }

    fn s0() -> Situation {
        Situation::initial(vec![0.0])
    }

    #[test]
    fn first_predictions_are_midpoints() {
        let mut q = quadratic_leader(constant(), 1.0).unwrap();
        assert_eq!(q.forecast(&s0()).unwrap(), 0.0);
        let mut b = bregman_leader(negative_entropy_loss(0.05).unwrap(), constant()).unwrap();
        assert_eq!(b.forecast(&s0()).unwrap(), 0.5);
        let mut s = scoring_leader(brier(), constant()).unwrap();
        assert_eq!(s.forecast(&s0()).unwrap(), 0.5);
        let mut l = logloss_leader(constant()).unwrap();
        assert_eq!(l.forecast(&s0()).unwrap(), 0.5);
    }

    #[test]
    fn quadratic_leader_follows_constant_reality() {
        let mut q = quadratic_leader(constant(), 1.0).unwrap();
        let mut s = s0();
        let mut last = f64::NEG_INFINITY;
        for _ in 0..50 {
            let mu = q.forecast(&s).unwrap();
            assert!(mu >= last - 1e-12);
            assert!((-1.0..=1.0).contains(&mu));
            last = mu;
            q.observe(&s, mu, 1.0).unwrap();
            s = s.advance(1.0, vec![0.0]);
        }
        assert!(last > 0.9, "{last}");
    }

    #[test]
    fn logloss_leader_second_round() {
        let mut l = logloss_leader(constant()).unwrap();
        let mu = l.forecast(&s0()).unwrap();
        l.observe(&s0(), mu, 1.0).unwrap();
        let mu2 = l.forecast(&s0().advance(1.0, vec![0.0])).unwrap();
        assert!((mu2 - 0.7397).abs() < 5e-4);
    }

    #[test]
    fn families_parse() {
        for f in [Family::Quadratic, Family::Bregman, Family::Scoring, Family::LogLoss] {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("nope".parse::<Family>().is_err());
        assert_eq!(Family::Bregman.rule(), RoundRule::K29);
        assert_eq!(Family::LogLoss.rule(), RoundRule::K29Star);
    }

    #[test]
    fn scoring_leader_needs_a_closed_space() {
        assert!(scoring_leader(log_loss(), constant()).is_err());
        assert!(scoring_leader(log_loss().restricted(0.05, 0.95).unwrap(), constant()).is_ok());
    }

    #[test]
    fn benchmark_links() {
        let space = OutcomeSpace::binary();
        let kernel: Arc<dyn SituationKernel> = Arc::new(RbfWindowKernel::for_space(1, 1.0, &space).unwrap());
        let b = scoring_leader(brier().restricted(0.05, 0.95).unwrap(), kernel.clone()).unwrap();
        assert!((b.benchmark_link().half_width() - 0.9).abs() < 1e-12);
        let g = KernelExpansion::new(kernel.clone(), vec![s0()], vec![0.4]).unwrap();
        let bench = b.benchmark("g", Arc::new(g)).unwrap();
        // Brier exposure is 1 - 2 phi
        assert!((bench.predict(&s0()) - 0.3).abs() < 1e-15);
        let big = KernelExpansion::new(kernel.clone(), vec![s0()], vec![2.0]).unwrap();
        assert!(matches!(b.benchmark("big", Arc::new(big.clone())), Err(Error::Benchmark(_))));

        let l = logloss_leader(kernel.clone()).unwrap();
        let bench = l.benchmark("big", Arc::new(big)).unwrap();
        let phi = bench.predict(&s0());
        assert!((phi - logistic(-2.0)).abs() < 1e-15);

        let kl = bregman_leader(negative_entropy_loss(0.05).unwrap(), kernel).unwrap();
        assert!((kl.benchmark_link().half_width() - 19f64.ln()).abs() < 1e-12);
        let inv = kl.benchmark_link().inverse(0.0);
        assert_eq!(inv, 0.5);
    }
}
