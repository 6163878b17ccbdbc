//! Seeded data sources for the protocol.
//!
//! Side information is `d` coordinates drawn uniformly from `[0, 1]` in all
//! generators. Streams are ChaCha8 seeded from a `u64`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use leading_core::protocol::{OutcomeSpace, PredictionStrategy, Reality, SideInfo, Situation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    IidUniform,
    Ar1Clipped,
    Sinusoid,
    AdversarialSign,
    StochasticTruth,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 5] = [
        GeneratorKind::IidUniform,
        GeneratorKind::Ar1Clipped,
        GeneratorKind::Sinusoid,
        GeneratorKind::AdversarialSign,
        GeneratorKind::StochasticTruth,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorKind::IidUniform => "iid_uniform",
            GeneratorKind::Ar1Clipped => "ar1_clipped",
            GeneratorKind::Sinusoid => "sinusoid",
            GeneratorKind::AdversarialSign => "adversarial_sign",
            GeneratorKind::StochasticTruth => "stochastic_truth",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| BenchError::Config(format!("unknown generator kind {s:?}")))
    }
}

/// Tunables shared by the generator kinds; each kind reads the ones it needs.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    /// AR(1) coefficient.
    pub rho: f64,
    /// Half width of the uniform innovation, as a fraction of the half
    /// diameter of the space.
    pub sigma: f64,
    pub period: f64,
    /// Amplitude as a fraction of the half diameter.
    pub amplitude: f64,
    /// Half width of the stochastic-truth noise, in outcome units.
    pub noise: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            rho: 0.8,
            sigma: 0.3,
            period: 50.0,
            amplitude: 0.8,
            noise: 0.3,
        }
    }
}

pub struct Generator {
    kind: GeneratorKind,
    space: OutcomeSpace,
    side_dim: usize,
    params: GeneratorParams,
    target: Option<Arc<dyn PredictionStrategy>>,
    rng: ChaCha8Rng,
    state: f64,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("kind", &self.kind)
            .field("space", &self.space)
            .field("side_dim", &self.side_dim)
            .field("params", &self.params)
            .field("target", &self.target.is_some())
            .finish()
    }
}

impl Generator {
    /// `target` is the benchmark the adversary plays against, or the truth
    /// `F` for the stochastic generator (required there).
    pub fn new(
        kind: GeneratorKind,
        space: OutcomeSpace,
        side_dim: usize,
        params: GeneratorParams,
        target: Option<Arc<dyn PredictionStrategy>>,
        seed: u64,
    ) -> Result<Self> {
        if kind == GeneratorKind::StochasticTruth && target.is_none() {
            return Err(BenchError::Config("stochastic_truth needs a truth strategy".into()));
        }
        if params.noise < 0.0 || params.sigma < 0.0 || params.period <= 0.0 {
            return Err(BenchError::Config(format!("invalid generator parameters {params:?}")));
        }
        Ok(Self {
            kind,
            space,
            side_dim,
            params,
            target,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: 0.0,
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    fn half(&self) -> f64 {
        0.5 * self.space.diameter()
    }

    /// Maps a latent value in `[-1, 1]` to an outcome: directly for
    /// intervals, as a success probability for binary spaces.
    fn emit(&mut self, latent: f64) -> f64 {
        let latent = latent.clamp(-1.0, 1.0);
        if self.space.is_binary() {
            let p = 0.5 * (1.0 + latent);
            if self.rng.random_bool(p) {
                1.0
            } else {
                0.0
            }
        } else {
            self.space.clamp(self.space.midpoint() + latent * self.half())
        }
    }

    fn uniform_noise(&mut self, w: f64) -> f64 {
        if w > 0.0 {
            self.rng.random_range(-w..=w)
        } else {
            0.0
        }
    }
}

impl Reality for Generator {
    fn side_info(&mut self, _round: usize) -> SideInfo {
        (0..self.side_dim).map(|_| self.rng.random::<f64>()).collect()
    }

    fn outcome(&mut self, s: &Situation, mu: f64) -> f64 {
        let (lo, hi) = (self.space.lower(), self.space.upper());
        match self.kind {
            GeneratorKind::IidUniform => {
                if self.space.is_binary() {
                    self.emit(0.0)
                } else {
                    self.rng.random_range(lo..=hi)
                }
            }
            GeneratorKind::Ar1Clipped => {
                let eps = self.uniform_noise(self.params.sigma);
                self.state = (self.params.rho * self.state + eps).clamp(-1.0, 1.0);
                self.emit(self.state)
            }
            GeneratorKind::Sinusoid => {
                let phase = std::f64::consts::TAU * s.round() as f64 / self.params.period;
                let shift = s.current().first().copied().unwrap_or(0.0);
                let eps = self.uniform_noise(0.1);
                self.emit(self.params.amplitude * (phase + shift).sin() + eps)
            }
            GeneratorKind::AdversarialSign => match &self.target {
                None => {
                    if mu - lo > hi - mu {
                        lo
                    } else {
                        hi
                    }
                }
                Some(target) => {
                    let phi = target.predict(s);
                    if phi > mu {
                        hi
                    } else if phi < mu {
                        lo
                    } else if mu - lo > hi - mu {
                        lo
                    } else {
                        hi
                    }
                }
            },
            GeneratorKind::StochasticTruth => {
                let truth = self.target.as_ref().expect("checked in new").predict(s);
                if self.space.is_binary() {
                    let p = truth.clamp(0.0, 1.0);
                    if self.rng.random_bool(p) {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let f = truth.clamp(lo, hi);
                    let w = self.params.noise.min(hi - f).min(f - lo);
                    f + self.uniform_noise(w)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(g: &mut Generator, n: usize, mu: f64) -> Vec<f64> {
        let mut s = Situation::initial(g.side_info(1));
        let mut ys = Vec::new();
        for i in 0..n {
            let y = g.outcome(&s, mu);
            ys.push(y);
            s = s.advance(y, g.side_info(i + 2));
        }
        ys
    }

    #[test]
    fn outputs_stay_in_the_space() {
        let truth: Arc<dyn PredictionStrategy> = Arc::new(|s: &Situation| s.current()[0] * 2.0 - 1.0);
        for space in [OutcomeSpace::symmetric(1.0).unwrap(), OutcomeSpace::binary()] {
            for kind in GeneratorKind::ALL {
                let truth = if space.is_binary() {
                    Arc::new(|s: &Situation| s.current()[0]) as Arc<dyn PredictionStrategy>
                } else {
                    truth.clone()
                };
                let mut g = Generator::new(kind, space, 1, GeneratorParams::default(), Some(truth), 4).unwrap();
                for y in drive(&mut g, 500, 0.3) {
                    assert!(space.contains(y), "{kind}: {y}");
                }
            }
        }
    }

    #[test]
    fn seeds_reproduce() {
        let space = OutcomeSpace::symmetric(1.0).unwrap();
        let mk = |seed| Generator::new(GeneratorKind::Ar1Clipped, space, 2, GeneratorParams::default(), None, seed).unwrap();
        assert_eq!(drive(&mut mk(9), 100, 0.0), drive(&mut mk(9), 100, 0.0));
        assert_ne!(drive(&mut mk(9), 100, 0.0), drive(&mut mk(10), 100, 0.0));
    }

    #[test]
    fn adversary_without_target_maximises_the_residual() {
        let space = OutcomeSpace::symmetric(1.0).unwrap();
        let mut g = Generator::new(GeneratorKind::AdversarialSign, space, 1, GeneratorParams::default(), None, 1).unwrap();
        let s = Situation::initial(vec![0.0]);
        assert_eq!(g.outcome(&s, 0.2), -1.0);
        assert_eq!(g.outcome(&s, -0.2), 1.0);
        assert_eq!(g.outcome(&s, 0.0), 1.0);
    }

    #[test]
    fn adversary_with_target_follows_the_benchmark() {
        let space = OutcomeSpace::binary();
        let target: Arc<dyn PredictionStrategy> = Arc::new(|_: &Situation| 0.7);
        let mut g = Generator::new(GeneratorKind::AdversarialSign, space, 1, GeneratorParams::default(), Some(target), 1).unwrap();
        let s = Situation::initial(vec![0.0]);
        assert_eq!(g.outcome(&s, 0.5), 1.0);
        assert_eq!(g.outcome(&s, 0.9), 0.0);
    }

    #[test]
    fn stochastic_noise_is_centred_on_the_truth() {
        let space = OutcomeSpace::symmetric(1.0).unwrap();
        let truth: Arc<dyn PredictionStrategy> = Arc::new(|_: &Situation| 0.5);
        let params = GeneratorParams {
            noise: 0.3,
            ..GeneratorParams::default()
        };
        let mut g = Generator::new(GeneratorKind::StochasticTruth, space, 1, params, Some(truth), 2).unwrap();
        let ys = drive(&mut g, 20000, 0.0);
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        assert!(ys.iter().all(|y| (0.2..=0.8).contains(y)));
    }

    #[test]
    fn stochastic_truth_requires_a_truth() {
        let space = OutcomeSpace::binary();
        assert!(Generator::new(GeneratorKind::StochasticTruth, space, 1, GeneratorParams::default(), None, 0).is_err());
        assert_eq!("ADVERSARIAL_SIGN".parse::<GeneratorKind>().unwrap(), GeneratorKind::AdversarialSign);
    }
}
