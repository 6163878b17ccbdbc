//! Defensive forecasting over the combined feature map
//! `Phi(mu, s) = (psi(mu), k_s)`.
//!
//! The engine keeps `V_{n-1} = sum_i r_i Phi(mu_i, s_i)` implicitly through
//! the history and the running coefficient `A = sum_i r_i psi(mu_i)`. The
//! crossing function of round `n` is `f(mu) = psi(mu) A + B` with
//! `B = sum_i r_i k(s_i, s_n)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{Features, SituationKernel};
use crate::losses::RealFn;
use crate::protocol::{OutcomeSpace, Situation};
use crate::roots::{self, Scan};

/// The forecast coordinate `psi` together with the situation kernel.
#[derive(Clone)]
pub struct ForecastFeatureMap {
    psi: RealFn,
    psi_inverse: Option<RealFn>,
    psi_sup: f64,
    kernel: Arc<dyn SituationKernel>,
}

impl fmt::Debug for ForecastFeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForecastFeatureMap")
            .field("psi_sup", &self.psi_sup)
            .field("c_f", &self.kernel.embedding_constant_bound())
            .field("fast_path", &self.psi_inverse.is_some())
            .finish()
    }
}

impl ForecastFeatureMap {
    /// `psi_sup` bounds `|psi|` on the prediction space and may be infinite.
    pub fn new(psi: RealFn, psi_sup: f64, kernel: Arc<dyn SituationKernel>) -> Result<Self> {
        if psi_sup.is_nan() || psi_sup < 0.0 {
            return Err(Error::InvalidParameter(format!("sup |psi| = {psi_sup}")));
        }
        Ok(Self {
            psi,
            psi_inverse: None,
            psi_sup,
            kernel,
        })
    }

    /// Registers the inverse of a strictly monotone `psi`, enabling the
    /// closed-form K29 root.
    pub fn with_inverse(mut self, inverse: RealFn) -> Self {
        self.psi_inverse = Some(inverse);
        self
    }

    pub fn psi(&self, mu: f64) -> f64 {
        (self.psi)(mu)
    }

    pub fn psi_sup(&self) -> f64 {
        self.psi_sup
    }

    pub fn kernel(&self) -> &Arc<dyn SituationKernel> {
        &self.kernel
    }

    /// `c_Phi = sqrt(sup psi^2 + c_F^2)`.
    pub fn embedding_constant(&self) -> f64 {
        let c = self.kernel.embedding_constant_bound();
        (self.psi_sup * self.psi_sup + c * c).sqrt()
    }

    /// `K((mu, s), (mu', s'))`.
    pub fn combined(&self, mu: f64, s: &Situation, mu2: f64, s2: &Situation) -> f64 {
        self.psi(mu) * self.psi(mu2) + self.kernel.eval(s, s2)
    }

    /// `psi(mu)^2 + k(s, s)` given the features of `s`.
    pub fn kdiag(&self, mu: f64, features: &[f64]) -> f64 {
        let p = self.psi(mu);
        p * p + self.kernel.eval_features(features, features)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundRule {
    /// Root of the crossing function.
    K29,
    /// Root of the crossing function minus `(mu - m) Kdiag(mu)`.
    K29Star,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub open: bool,
}

impl PredictionInterval {
    pub fn closed(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, false)
    }

    pub fn open(lower: f64, upper: f64) -> Result<Self> {
        Self::new(lower, upper, true)
    }

    fn new(lower: f64, upper: f64, open: bool) -> Result<Self> {
        if !(lower < upper && lower.is_finite() && upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prediction interval [{lower}, {upper}] is empty or unbounded"
            )));
        }
        Ok(Self { lower, upper, open })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, mu: f64) -> bool {
        if self.open {
            mu > self.lower && mu < self.upper
        } else {
            mu >= self.lower && mu <= self.upper
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig {
    pub grid_points: usize,
    /// Initial relative inset for open intervals.
    pub initial_delta: f64,
    /// Factor applied to the inset while no sign change is found.
    pub delta_factor: f64,
    pub min_delta: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            grid_points: 1025,
            initial_delta: 1e-9,
            delta_factor: 1e-3,
            min_delta: 1e-300,
        }
    }
}

/// How the prediction of a round was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundMode {
    Root,
    /// Closed-form K29 root through the inverse of `psi`.
    FastPath,
    /// No sign change, the function was positive: upper end.
    UpperEndpoint,
    /// No sign change, the function was negative: lower end.
    LowerEndpoint,
    /// Prediction supplied from outside the engine.
    External,
}

impl RoundMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RoundMode::Root => "root",
            RoundMode::FastPath => "fast_path",
            RoundMode::UpperEndpoint => "upper",
            RoundMode::LowerEndpoint => "lower",
            RoundMode::External => "external",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "root" => RoundMode::Root,
            "fast_path" => RoundMode::FastPath,
            "upper" => RoundMode::UpperEndpoint,
            "lower" => RoundMode::LowerEndpoint,
            "external" => RoundMode::External,
            _ => return None,
        })
    }
}

/// Per-round potential accounting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundDiagnostics {
    pub n: usize,
    pub mu: f64,
    /// `f(mu)` for K29, `h(mu)` for K29*.
    pub residual: f64,
    pub kdiag: f64,
    pub increment: f64,
    pub budget: f64,
    /// `max(0, increment - budget)`.
    pub slack: f64,
    pub potential_sq: f64,
    pub mode: RoundMode,
}

/// The crossing function of one round.
#[derive(Clone)]
pub struct CrossingFunction {
    psi: RealFn,
    pub a: f64,
    pub b: f64,
}

impl CrossingFunction {
    pub fn eval(&self, mu: f64) -> f64 {
        (self.psi)(mu) * self.a + self.b
    }
}

#[derive(Clone, Debug)]
pub struct HistoryEntry {
    pub features: Features,
    pub mu: f64,
    pub r: f64,
    pub psi: f64,
}

#[derive(Clone, Debug)]
struct Pending {
    round: usize,
    features: Features,
    b: f64,
    mu: f64,
    mode: RoundMode,
}

#[derive(Clone, Debug)]
pub struct Engine {
    map: ForecastFeatureMap,
    rule: RoundRule,
    interval: PredictionInterval,
    hull: (f64, f64),
    config: EngineConfig,
    history: Vec<HistoryEntry>,
    a: f64,
    potential_sq: f64,
    cumulative_budget: f64,
    cumulative_slack: f64,
    pending: Option<Pending>,
}

impl Engine {
    /// `outcomes` fixes the centre `m` and the extremes used by the K29*
    /// budget.
    pub fn new(
        map: ForecastFeatureMap,
        rule: RoundRule,
        interval: PredictionInterval,
        outcomes: &OutcomeSpace,
    ) -> Self {
        Self::with_config(map, rule, interval, outcomes, EngineConfig::default())
    }

    pub fn with_config(
        map: ForecastFeatureMap,
        rule: RoundRule,
        interval: PredictionInterval,
        outcomes: &OutcomeSpace,
        config: EngineConfig,
    ) -> Self {
        Self {
            map,
            rule,
            interval,
            hull: (outcomes.lower(), outcomes.upper()),
            config,
            history: Vec::new(),
            a: 0.0,
            potential_sq: 0.0,
            cumulative_budget: 0.0,
            cumulative_slack: 0.0,
            pending: None,
        }
    }

    pub fn map(&self) -> &ForecastFeatureMap {
        &self.map
    }

    pub fn rule(&self) -> RoundRule {
        self.rule
    }

    pub fn interval(&self) -> PredictionInterval {
        self.interval
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// `A = sum_i r_i psi(mu_i)`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// `||V_N||^2`, updated incrementally.
    pub fn potential_sq(&self) -> f64 {
        self.potential_sq
    }

    pub fn cumulative_budget(&self) -> f64 {
        self.cumulative_budget
    }

    pub fn cumulative_slack(&self) -> f64 {
        self.cumulative_slack
    }

    fn b_for(&self, features: &[f64]) -> f64 {
        let k = self.map.kernel.as_ref();
        self.history
            .iter()
            .map(|h| h.r * k.eval_features(&h.features, features))
            .sum()
    }

    pub fn crossing_function(&self, s: &Situation) -> CrossingFunction {
        let features = self.map.kernel.features(s);
        CrossingFunction {
            psi: self.map.psi.clone(),
            a: self.a,
            b: self.b_for(&features),
        }
    }

    fn midpoint(&self) -> f64 {
        0.5 * (self.hull.0 + self.hull.1)
    }

    fn search<G: FnMut(f64) -> f64>(&self, mut g: G) -> Result<(f64, f64, RoundMode)> {
        let PredictionInterval { lower, upper, open } = self.interval;
        let points = self.config.grid_points;
        if !open {
            return Ok(match roots::scan(&mut g, lower, upper, points)? {
                Scan::Root { mu, value } => (mu, value, RoundMode::Root),
                Scan::AllPositive { at_upper } => (upper, at_upper, RoundMode::UpperEndpoint),
                Scan::AllNegative { at_lower } => (lower, at_lower, RoundMode::LowerEndpoint),
            });
        }
        let width = upper - lower;
        let mut delta = self.config.initial_delta;
        loop {
            let mut lo = lower + delta * width;
            let mut hi = upper - delta * width;
            if lo <= lower {
                lo = lower.next_up();
            }
            if hi >= upper {
                hi = upper.next_down();
            }
            if let Scan::Root { mu, value } = roots::scan(&mut g, lo, hi, points)? {
                return Ok((mu, value, RoundMode::Root));
            }
            if delta <= self.config.min_delta {
                return Err(Error::NoSignChange { lower: lo, upper: hi });
            }
            delta = (delta * self.config.delta_factor).max(self.config.min_delta);
        }
    }

    fn fast_path(&self, cf: &CrossingFunction, inverse: &RealFn) -> Option<(f64, f64, RoundMode)> {
        let PredictionInterval { lower, upper, open } = self.interval;
        if open {
            return None;
        }
        if cf.a == 0.0 {
            return Some(if cf.b > 0.0 {
                (upper, cf.b, RoundMode::UpperEndpoint)
            } else if cf.b < 0.0 {
                (lower, cf.b, RoundMode::LowerEndpoint)
            } else {
                (self.interval.midpoint(), 0.0, RoundMode::FastPath)
            });
        }
        let (fl, fu) = (cf.eval(lower), cf.eval(upper));
        if fl > 0.0 && fu > 0.0 {
            return Some((upper, fu, RoundMode::UpperEndpoint));
        }
        if fl < 0.0 && fu < 0.0 {
            return Some((lower, fl, RoundMode::LowerEndpoint));
        }
        let mu = inverse(-cf.b / cf.a);
        if !mu.is_finite() {
            return None;
        }
        let mu = mu.clamp(lower, upper);
        Some((mu, cf.eval(mu), RoundMode::FastPath))
    }

    fn prepare(&mut self, s: &Situation, rule: RoundRule) -> Result<f64> {
        let features = self.map.kernel.features(s);
        let b = self.b_for(&features);
        let cf = CrossingFunction {
            psi: self.map.psi.clone(),
            a: self.a,
            b,
        };
        let (mu, _, mode) = match rule {
            RoundRule::K29 => {
                let fast = self.map.psi_inverse.as_ref().and_then(|inv| self.fast_path(&cf, inv));
                match fast {
                    Some(found) => found,
                    None => self.search(|mu| cf.eval(mu))?,
                }
            }
            RoundRule::K29Star => {
                let m = self.midpoint();
                let kss = self.map.kernel.eval_features(&features, &features);
                let psi = self.map.psi.clone();
                let a = self.a;
                self.search(|mu| {
                    let p = psi(mu);
                    p * a + b - (mu - m) * (p * p + kss)
                })?
            }
        };
        self.pending = Some(Pending {
            round: self.history.len(),
            features,
            b,
            mu,
            mode,
        });
        Ok(mu)
    }

    pub fn k29_round(&mut self, s: &Situation) -> Result<f64> {
        self.prepare(s, RoundRule::K29)
    }

    pub fn k29star_round(&mut self, s: &Situation) -> Result<f64> {
        self.prepare(s, RoundRule::K29Star)
    }

    /// Next prediction under the engine's rule.
    pub fn propose(&mut self, s: &Situation) -> Result<f64> {
        self.prepare(s, self.rule)
    }

    /// Adds `r Phi(mu, s)` to `V`. Reuses the work of the preceding
    /// proposal when `mu` is the proposed value.
    pub fn potential_update(&mut self, s: &Situation, mu: f64, y: f64) -> Result<RoundDiagnostics> {
        let round = self.history.len();
        let pending = self.pending.take().filter(|p| p.round == round && p.mu == mu);
        let (features, b, mode) = match pending {
            Some(p) => (p.features, p.b, p.mode),
            None => {
                let features = self.map.kernel.features(s);
                let b = self.b_for(&features);
                (features, b, RoundMode::External)
            }
        };
        let psi = self.map.psi(mu);
        if !psi.is_finite() {
            return Err(Error::NonFinite { at: mu });
        }
        let kss = self.map.kernel.eval_features(&features, &features);
        let kdiag = psi * psi + kss;
        let f = psi * self.a + b;
        let r = y - mu;
        let increment = 2.0 * r * f + r * r * kdiag;
        let (residual, budget) = match self.rule {
            RoundRule::K29 => (f, r * r * kdiag),
            RoundRule::K29Star => {
                let (lo, hi) = self.hull;
                (
                    f - (mu - self.midpoint()) * kdiag,
                    ((hi - mu) * (mu - lo)).max(0.0) * kdiag,
                )
            }
        };
        let slack = (increment - budget).max(0.0);
        self.potential_sq += increment;
        self.a += r * psi;
        self.cumulative_budget += budget;
        self.cumulative_slack += slack;
        self.history.push(HistoryEntry { features, mu, r, psi });
        Ok(RoundDiagnostics {
            n: round + 1,
            mu,
            residual,
            kdiag,
            increment,
            budget,
            slack,
            potential_sq: self.potential_sq,
            mode,
        })
    }
}
