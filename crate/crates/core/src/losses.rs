//! Bregman divergences and strictly proper scoring rules.
//!
//! Both families are described by plain real functions so that callers can
//! register their own. Positivity and strict propriety are validated on
//! grids.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default number of grid points for validity checks.
pub const DEFAULT_GRID: usize = 2048;

/// Inputs to open-interval scoring rules are clamped to `[2^-52, 1 - 2^-52]`
/// by [`ScoringRule::loss_clamped`].
pub const LOG_CLAMP: f64 = f64::EPSILON;

/// A residual that should vanish, with the magnitude of the quantities that
/// were combined to produce it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.value.abs() / self.scale
        } else {
            self.value.abs()
        }
    }
}

fn grid(lower: f64, upper: f64, points: usize) -> impl Iterator<Item = f64> {
    let points = points.max(2);
    let step = (upper - lower) / (points - 1) as f64;
    (0..points).map(move |i| if i + 1 == points { upper } else { lower + step * i as f64 })
}

/// Interior grid of an open interval: excludes both endpoints.
fn open_grid(lower: f64, upper: f64, points: usize) -> impl Iterator<Item = f64> {
    let step = (upper - lower) / (points + 1) as f64;
    (1..=points).map(move |i| lower + step * i as f64)
}

/// `d(y, z) = Psi(y) - Psi(z) - Psi'(z)(y - z)` on an interval.
///
/// `psi_prime` need not be the derivative of `psi`; only positivity off the
/// diagonal is required.
#[derive(Clone)]
pub struct BregmanLoss {
    name: String,
    psi: RealFn,
    psi_prime: RealFn,
    psi_prime_inverse: Option<RealFn>,
    lower: f64,
    upper: f64,
    psi_prime_sup: f64,
}

impl fmt::Debug for BregmanLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BregmanLoss")
            .field("name", &self.name)
            .field("domain", &(self.lower, self.upper))
            .field("psi_prime_sup", &self.psi_prime_sup)
            .finish()
    }
}

impl BregmanLoss {
    pub fn new(
        name: impl Into<String>,
        psi: RealFn,
        psi_prime: RealFn,
        lower: f64,
        upper: f64,
        psi_prime_sup: f64,
    ) -> Result<Self> {
        if !(lower < upper && lower.is_finite() && upper.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Bregman domain [{lower}, {upper}] must be a bounded interval"
            )));
        }
        if !(psi_prime_sup > 0.0 && psi_prime_sup.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sup |Psi'| = {psi_prime_sup} must be positive and finite"
            )));
        }
        Ok(Self {
            name: name.into(),
            psi,
            psi_prime,
            psi_prime_inverse: None,
            lower,
            upper,
            psi_prime_sup,
        })
    }

    /// Registers the inverse of `Psi'`, needed to turn `Psi'(F)` back into
    /// predictions.
    pub fn with_inverse(mut self, inverse: RealFn) -> Self {
        self.psi_prime_inverse = Some(inverse);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn diameter(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn psi_prime_sup(&self) -> f64 {
        self.psi_prime_sup
    }

    pub fn psi(&self, y: f64) -> f64 {
        (self.psi)(y)
    }

    pub fn psi_prime(&self, z: f64) -> f64 {
        (self.psi_prime)(z)
    }

    pub fn psi_prime_fn(&self) -> RealFn {
        self.psi_prime.clone()
    }

    pub fn psi_prime_inverse(&self) -> Option<&RealFn> {
        self.psi_prime_inverse.as_ref()
    }

    fn check(&self, v: f64) -> Result<()> {
        if v >= self.lower && v <= self.upper {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                value: v,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    pub fn divergence(&self, y: f64, z: f64) -> Result<f64> {
        self.check(y)?;
        self.check(z)?;
        Ok(self.divergence_unchecked(y, z))
    }

    pub fn divergence_unchecked(&self, y: f64, z: f64) -> f64 {
        self.psi(y) - self.psi(z) - self.psi_prime(z) * (y - z)
    }

    /// `d(y, phi) - d(mu, phi) - d(y, mu) + (Psi'(phi) - Psi'(mu))(y - mu)`.
    pub fn law_of_cosines_residual(&self, y: f64, mu: f64, phi: f64) -> Result<Residual> {
        let d_y_phi = self.divergence(y, phi)?;
        let d_mu_phi = self.divergence(mu, phi)?;
        let d_y_mu = self.divergence(y, mu)?;
        let cross = (self.psi_prime(phi) - self.psi_prime(mu)) * (y - mu);
        let scale = self.psi(y).abs()
            + self.psi(mu).abs()
            + self.psi(phi).abs()
            + (self.psi_prime(phi).abs() + self.psi_prime(mu).abs()) * self.diameter();
        Ok(Residual {
            value: d_y_phi - d_mu_phi - d_y_mu + cross,
            scale,
        })
    }

    /// `d(y, z) > 0` for all distinct grid points.
    pub fn check_positivity(&self, points: usize) -> Result<()> {
        let pts: Vec<f64> = grid(self.lower, self.upper, points).collect();
        for &y in &pts {
            for &z in &pts {
                if y != z && !(self.divergence_unchecked(y, z) > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{}: d({y}, {z}) is not positive",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// `sup |Psi'| >= |Psi'(z)|` on the grid.
    pub fn check_psi_prime_sup(&self, points: usize) -> Result<()> {
        for z in grid(self.lower, self.upper, points) {
            if self.psi_prime(z).abs() > self.psi_prime_sup * (1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "{}: |Psi'({z})| exceeds the declared sup {}",
                    self.name, self.psi_prime_sup
                )));
            }
        }
        Ok(())
    }
}

pub fn bregman_div(loss: &BregmanLoss, y: f64, z: f64) -> Result<f64> {
    loss.divergence(y, z)
}

pub fn law_of_cosines_residual(loss: &BregmanLoss, y: f64, mu: f64, phi: f64) -> Result<Residual> {
    loss.law_of_cosines_residual(y, mu, phi)
}

/// `Psi(y) = y^2` on `[-Y, Y]`, giving `d(y, z) = (y - z)^2`.
pub fn quadratic_loss(y_max: f64) -> Result<BregmanLoss> {
    if !(y_max > 0.0) {
        return Err(Error::InvalidParameter(format!("Y = {y_max} must be positive")));
    }
    Ok(BregmanLoss::new(
        "quadratic",
        Arc::new(|y| y * y),
        Arc::new(|y| 2.0 * y),
        -y_max,
        y_max,
        2.0 * y_max,
    )?
    .with_inverse(Arc::new(|g| 0.5 * g)))
}

/// Negative entropy on `[eps, 1 - eps]`; its divergence is the
/// Kullback-Leibler divergence `D(y || z)`.
pub fn negative_entropy_loss(eps: f64) -> Result<BregmanLoss> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1/2)")));
    }
    Ok(BregmanLoss::new(
        "negative_entropy",
        Arc::new(|y: f64| y * y.ln() + (1.0 - y) * (-y).ln_1p()),
        Arc::new(logit),
        eps,
        1.0 - eps,
        logit(1.0 - eps),
    )?
    .with_inverse(Arc::new(logistic)))
}

/// `ln(p / (1 - p))`.
pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// `1 / (1 + e^-t)`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `D(y || z)`, computed directly.
pub fn kl_divergence(y: f64, z: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(y, z) + term(1.0 - y, 1.0 - z)
}

/// A loss on binary outcomes, `lambda(1, mu)` and `lambda(0, mu)`, over a
/// prediction interval inside `[0, 1]`.
#[derive(Clone)]
pub struct ScoringRule {
    name: String,
    loss_one: RealFn,
    loss_zero: RealFn,
    exposure_inverse: Option<RealFn>,
    lower: f64,
    upper: f64,
    open: bool,
    exposure_sup: f64,
}

impl fmt::Debug for ScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScoringRule")
            .field("name", &self.name)
            .field("prediction_space", &(self.lower, self.upper, self.open))
            .field("exposure_sup", &self.exposure_sup)
            .finish()
    }
}

impl ScoringRule {
    /// `open` marks `(lower, upper)`; otherwise the interval is closed.
    pub fn new(
        name: impl Into<String>,
        loss_one: RealFn,
        loss_zero: RealFn,
        lower: f64,
        upper: f64,
        open: bool,
    ) -> Result<Self> {
        if !(0.0 <= lower && lower < upper && upper <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "prediction space [{lower}, {upper}] must lie inside [0, 1]"
            )));
        }
        let mut rule = Self {
            name: name.into(),
            loss_one,
            loss_zero,
            exposure_inverse: None,
            lower,
            upper,
            open,
            exposure_sup: f64::INFINITY,
        };
        rule.exposure_sup = rule.grid_exposure_sup(DEFAULT_GRID);
        Ok(rule)
    }

    pub fn with_inverse(mut self, inverse: RealFn) -> Self {
        self.exposure_inverse = Some(inverse);
        self
    }

    /// The same rule on a closed sub-interval of its prediction space.
    pub fn restricted(&self, lower: f64, upper: f64) -> Result<Self> {
        let inside = if self.open {
            lower > self.lower && upper < self.upper
        } else {
            lower >= self.lower && upper <= self.upper
        };
        if !inside || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "[{lower}, {upper}] is not inside the prediction space of {}",
                self.name
            )));
        }
        let mut rule = Self::new(
            self.name.clone(),
            self.loss_one.clone(),
            self.loss_zero.clone(),
            lower,
            upper,
            false,
        )?;
        rule.exposure_inverse = self.exposure_inverse.clone();
        Ok(rule)
    }

    fn grid_exposure_sup(&self, points: usize) -> f64 {
        if self.open {
            // a finite sup over the open interval cannot be certified on a grid
            let interior = open_grid(self.lower, self.upper, points).map(|m| self.exposure(m).abs());
            let sup = interior.fold(0.0, f64::max);
            let edge = self.exposure(self.lower + LOG_CLAMP).abs().max(self.exposure(self.upper - LOG_CLAMP).abs());
            if edge > 2.0 * sup || !edge.is_finite() {
                return f64::INFINITY;
            }
            return sup.max(edge);
        }
        grid(self.lower, self.upper, points)
            .map(|m| self.exposure(m).abs())
            .fold(0.0, f64::max)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn prediction_space(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    /// `|Exp|_C` over the prediction space (infinite for the log loss on (0, 1)).
    pub fn exposure_sup(&self) -> f64 {
        self.exposure_sup
    }

    pub fn exposure_inverse(&self) -> Option<&RealFn> {
        self.exposure_inverse.as_ref()
    }

    pub fn contains(&self, mu: f64) -> bool {
        if self.open {
            mu > self.lower && mu < self.upper
        } else {
            mu >= self.lower && mu <= self.upper
        }
    }

    pub fn loss_given_one(&self, mu: f64) -> f64 {
        (self.loss_one)(mu)
    }

    pub fn loss_given_zero(&self, mu: f64) -> f64 {
        (self.loss_zero)(mu)
    }

    /// `lambda(p, mu) = p lambda(1, mu) + (1 - p) lambda(0, mu)`.
    pub fn extend(&self, p: f64, mu: f64) -> f64 {
        let mut total = 0.0;
        if p != 0.0 {
            total += p * self.loss_given_one(mu);
        }
        if p != 1.0 {
            total += (1.0 - p) * self.loss_given_zero(mu);
        }
        total
    }

    /// `lambda(y, mu)` with a signal for infinite loss at the edge of an
    /// open prediction space.
    pub fn loss(&self, y: f64, mu: f64) -> Result<f64> {
        if !(mu >= self.lower && mu <= self.upper) {
            return Err(Error::OutOfDomain {
                value: mu,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let v = self.extend(y, mu);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InfiniteLoss { prediction: mu })
        }
    }

    /// Clamps `mu` to `[lower + 2^-52, upper - 2^-52]` for open spaces and
    /// reports whether the clamp fired.
    pub fn loss_clamped(&self, y: f64, mu: f64) -> (f64, bool) {
        if !self.open {
            return (self.extend(y, mu), false);
        }
        let lo = self.lower + LOG_CLAMP;
        let hi = self.upper - LOG_CLAMP;
        let clamped = mu.clamp(lo, hi);
        (self.extend(y, clamped), clamped != mu)
    }

    /// `Exp(mu) = lambda(1, mu) - lambda(0, mu)`.
    pub fn exposure(&self, mu: f64) -> f64 {
        self.loss_given_one(mu) - self.loss_given_zero(mu)
    }

    /// `d(mu, phi) = lambda(mu, phi) - lambda(mu, mu)`.
    pub fn divergence(&self, mu: f64, phi: f64) -> f64 {
        self.extend(mu, phi) - self.extend(mu, mu)
    }

    /// `(a, b)` with `lambda(y, phi) = a + lambda(y, mu) + b (y - mu)` for `y` in {0, 1}.
    pub fn decompose_ab(&self, mu: f64, phi: f64) -> (f64, f64) {
        (self.divergence(mu, phi), self.exposure(phi) - self.exposure(mu))
    }

    pub fn decomposition_residual(&self, y: f64, mu: f64, phi: f64) -> Residual {
        let (a, b) = self.decompose_ab(mu, phi);
        let lhs = self.extend(y, phi);
        let rhs = a + self.extend(y, mu) + b * (y - mu);
        let scale = self.loss_given_one(mu).abs()
            + self.loss_given_zero(mu).abs()
            + self.loss_given_one(phi).abs()
            + self.loss_given_zero(phi).abs();
        Residual {
            value: lhs - rhs,
            scale,
        }
    }

    /// `lambda(p, p) < lambda(p, mu)` for all distinct grid points.
    pub fn check_strict_propriety(&self, points: usize) -> Result<()> {
        let pts: Vec<f64> = if self.open {
            open_grid(self.lower, self.upper, points).collect()
        } else {
            grid(self.lower, self.upper, points).collect()
        };
        for &p in &pts {
            let own = self.extend(p, p);
            for &mu in &pts {
                if mu != p && !(own < self.extend(p, mu)) {
                    return Err(Error::InvalidParameter(format!(
                        "{}: lambda({p}, {p}) is not below lambda({p}, {mu})",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Brier score `(y - mu)^2` on `[0, 1]`; its exposure is `1 - 2 mu`.
pub fn brier() -> ScoringRule {
    ScoringRule::new(
        "brier",
        Arc::new(|mu| (1.0 - mu) * (1.0 - mu)),
        Arc::new(|mu| mu * mu),
        0.0,
        1.0,
        false,
    )
    .expect("static parameters")
    .with_inverse(Arc::new(|g| 0.5 * (1.0 - g)))
}

/// Log loss on `(0, 1)`; its exposure is `ln((1 - mu) / mu)`.
pub fn log_loss() -> ScoringRule {
    ScoringRule::new(
        "log",
        Arc::new(|mu: f64| -mu.ln()),
        Arc::new(|mu: f64| -(-mu).ln_1p()),
        0.0,
        1.0,
        true,
    )
    .expect("static parameters")
    .with_inverse(Arc::new(|g: f64| logistic(-g)))
}

/// `4 mu (1 - mu) ln^2(mu / (1 - mu))` maximised over an interior grid of
/// `(0, 1)`. Returns `(argmax, max)`.
pub fn log_loss_variance_supremum(points: usize) -> (f64, f64) {
    open_grid(0.0, 1.0, points)
        .map(|mu| {
            let l = logit(mu);
            (mu, 4.0 * mu * (1.0 - mu) * l * l)
        })
        .fold((0.5, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}
