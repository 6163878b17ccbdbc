//! Turns a [`Config`] into kernels, leaders, benchmarks and generators.

use std::sync::Arc;

use leading_core::kernels::{
    estimate_sup_norm, ConstantKernel, KernelExpansion, LinearWindowKernel, RbfWindowKernel, RkhsElement,
    SituationKernel, TruncatedUniversalKernel,
};
use leading_core::leaders::{
    bregman_leader, logloss_leader, quadratic_leader, scoring_leader, Benchmark, Family, Leader,
};
use leading_core::losses::{brier, log_loss, negative_entropy_loss};
use leading_core::protocol::{markov_lift, Named, OutcomeSpace, PredictionStrategy, Situation, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BenchmarkConfig, Config};
use crate::error::{BenchError, Result};
use crate::generators::{Generator, GeneratorKind, GeneratorParams};

/// Where the sup norms of a universal kernel came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupNormSource {
    Supplied,
    /// Exact formulas of the built-in members.
    Formula,
    /// Sampled maxima, which are lower bounds.
    SampledLowerBound,
}

impl SupNormSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupNormSource::Supplied => "supplied",
            SupNormSource::Formula => "formula",
            SupNormSource::SampledLowerBound => "sampled_lower_bound",
        }
    }
}

pub struct Setup {
    pub config: Config,
    pub family: Family,
    pub space: OutcomeSpace,
    pub kernel: Arc<dyn SituationKernel>,
    pub universal: Option<Arc<TruncatedUniversalKernel>>,
    pub sup_norm_source: Option<SupNormSource>,
    pub benchmarks: Vec<Arc<Benchmark>>,
}

fn outcome_bound(space: &OutcomeSpace) -> f64 {
    space.lower().abs().max(space.upper().abs())
}

fn window_outcome(w: &Window<'_>, j: usize) -> f64 {
    w.outcome_back(j).unwrap_or(0.0)
}

fn parse_numbers(spec: &str, arg: &str) -> Result<Vec<f64>> {
    arg.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| BenchError::Config(format!("member {spec:?}: bad number {v:?}")))
        })
        .collect()
}

/// A built-in limited-memory strategy and its sup norm over `space`.
///
/// `echo`, `neg_echo`, `const:c`, `affine:a,b` (`a y_{n-1} + b`),
/// `mean:k`, `side:i` (`2 x_i - 1`), `sin:f` (`sin(f x_0)`).
pub fn parse_member(spec: &str, space: &OutcomeSpace) -> Result<(Arc<dyn PredictionStrategy>, f64)> {
    let y = outcome_bound(space);
    let (head, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let bad = || BenchError::Config(format!("unknown universal member {spec:?}"));
    Ok(match head {
        "echo" => (Arc::new(markov_lift(|w: &Window<'_>| window_outcome(w, 1), 1, 0.0)), y),
        "neg_echo" => (Arc::new(markov_lift(|w: &Window<'_>| -window_outcome(w, 1), 1, 0.0)), y),
        "const" => {
            let c = parse_numbers(spec, arg)?.first().copied().ok_or_else(bad)?;
            (Arc::new(move |_: &Situation| c), c.abs())
        }
        "affine" => {
            let v = parse_numbers(spec, arg)?;
            let [a, b] = v[..] else { return Err(bad()) };
            (
                Arc::new(markov_lift(move |w: &Window<'_>| a * window_outcome(w, 1) + b, 1, b)),
                a.abs() * y + b.abs(),
            )
        }
        "mean" => {
            let k: usize = arg.parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            let f = move |w: &Window<'_>| (1..=k).map(|j| window_outcome(w, j)).sum::<f64>() / k as f64;
            (Arc::new(markov_lift(f, k, 0.0)), y)
        }
        "side" => {
            let i: usize = arg.parse().map_err(|_| bad())?;
            (
                Arc::new(move |s: &Situation| 2.0 * s.current().get(i).copied().unwrap_or(0.5) - 1.0),
                1.0,
            )
        }
        "sin" => {
            let f = parse_numbers(spec, arg)?.first().copied().ok_or_else(bad)?;
            let sup = if f.abs() >= std::f64::consts::FRAC_PI_2 { 1.0 } else { f.abs().sin() };
            (
                Arc::new(move |s: &Situation| (f * s.current().first().copied().unwrap_or(0.0)).sin()),
                sup,
            )
        }
        _ => return Err(bad()),
    })
}

/// A situation with `history` random pairs: `x` uniform on `[0, 1]^d`,
/// `y` uniform on the space (a fair coin for binary spaces).
pub fn random_situation(rng: &mut ChaCha8Rng, space: &OutcomeSpace, side_dim: usize, history: usize) -> Situation {
    let draw_x = |rng: &mut ChaCha8Rng| (0..side_dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    let mut pairs = Vec::with_capacity(history);
    for _ in 0..history {
        let x = draw_x(rng);
        let y = if space.is_binary() {
            if rng.random_bool(0.5) {
                1.0
            } else {
                0.0
            }
        } else {
            rng.random_range(space.lower()..=space.upper())
        };
        pairs.push((x, y));
    }
    let current = draw_x(rng);
    Situation::from_history(pairs, current)
}

/// Reads `x_1, y_1, ..., x_m, y_m, x_current`.
pub fn situation_from_flat(values: &[f64], side_dim: usize) -> Result<Situation> {
    let stride = side_dim + 1;
    if values.len() < side_dim || (values.len() - side_dim) % stride != 0 {
        return Err(BenchError::Config(format!(
            "center of length {} does not fit side_dim = {side_dim}",
            values.len()
        )));
    }
    let m = (values.len() - side_dim) / stride;
    let pairs = (0..m).map(|i| {
        let chunk = &values[i * stride..(i + 1) * stride];
        (chunk[..side_dim].to_vec(), chunk[side_dim])
    });
    Ok(Situation::from_history(pairs, values[m * stride..].to_vec()))
}

impl Setup {
    pub fn new(config: Config) -> Result<Self> {
        let family: Family = config.family.parse()?;
        let space = match family {
            Family::Quadratic => OutcomeSpace::symmetric(config.loss.y_max)?,
            Family::Bregman => OutcomeSpace::interval(config.loss.eps, 1.0 - config.loss.eps)?,
            Family::Scoring | Family::LogLoss => OutcomeSpace::binary(),
        };
        if let Some(declared) = &config.space {
            let expected = if space.is_binary() { "binary" } else { "interval" };
            if declared != expected {
                return Err(BenchError::Config(format!(
                    "space = {declared:?} but the {family} family uses a {expected} space"
                )));
            }
        }
        if config.side_dim == 0 {
            return Err(BenchError::Config("side_dim must be at least 1".into()));
        }
        let (kernel, universal, sup_norm_source) = Self::build_kernel(&config, &space)?;
        let mut setup = Self {
            config,
            family,
            space,
            kernel,
            universal,
            sup_norm_source,
            benchmarks: Vec::new(),
        };
        setup.benchmarks = setup.build_benchmarks()?;
        Ok(setup)
    }

    fn build_kernel(
        config: &Config,
        space: &OutcomeSpace,
    ) -> Result<(Arc<dyn SituationKernel>, Option<Arc<TruncatedUniversalKernel>>, Option<SupNormSource>)> {
        let k = &config.kernel;
        Ok(match k.kind.as_str() {
            "rbf" => (Arc::new(RbfWindowKernel::for_space(k.order, k.gamma, space)?), None, None),
            "linear" => (
                Arc::new(LinearWindowKernel::new(k.order, config.side_dim, k.coordinate_bound)?),
                None,
                None,
            ),
            "constant" => (Arc::new(ConstantKernel::new(k.value)?), None, None),
            "universal" => {
                let parsed = k
                    .members
                    .iter()
                    .map(|m| parse_member(m, space))
                    .collect::<Result<Vec<_>>>()?;
                let (members, formula): (Vec<_>, Vec<_>) = parsed.into_iter().unzip();
                let (sups, source) = if let Some(s) = &k.sup_norms {
                    (s.clone(), SupNormSource::Supplied)
                } else if let Some(samples) = k.sup_samples {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5u64);
                    let sups = members
                        .iter()
                        .map(|m| {
                            estimate_sup_norm(
                                m.as_ref(),
                                || {
                                    let h = rng.random_range(0..=4);
                                    random_situation(&mut rng, space, config.side_dim, h)
                                },
                                samples,
                            )
                        })
                        .collect();
                    (sups, SupNormSource::SampledLowerBound)
                } else {
                    (formula, SupNormSource::Formula)
                };
                let u = Arc::new(TruncatedUniversalKernel::new(members, sups)?);
                (u.clone() as Arc<dyn SituationKernel>, Some(u), Some(source))
            }
            other => return Err(BenchError::Config(format!("unknown kernel type {other:?}"))),
        })
    }

    /// A fresh leader for one run.
    pub fn make_leader(&self) -> Result<Leader> {
        let kernel = self.kernel.clone();
        let loss = &self.config.loss;
        Ok(match self.family {
            Family::Quadratic => quadratic_leader(kernel, loss.y_max)?,
            Family::Bregman => bregman_leader(negative_entropy_loss(loss.eps)?, kernel)?,
            Family::Scoring => {
                let rule = match loss.rule.as_str() {
                    "brier" => brier(),
                    "log" => log_loss(),
                    other => return Err(BenchError::Config(format!("unknown scoring rule {other:?}"))),
                };
                let (lo, hi) = rule.prediction_space();
                let lower = loss.p_lower.unwrap_or(if rule.is_open() { 0.05 } else { lo });
                let upper = loss.p_upper.unwrap_or(if rule.is_open() { 0.95 } else { hi });
                scoring_leader(rule.restricted(lower, upper)?, kernel)?
            }
            Family::LogLoss => logloss_leader(kernel)?,
        })
    }

    fn build_benchmarks(&self) -> Result<Vec<Arc<Benchmark>>> {
        let template = self.make_leader()?;
        let link = template.benchmark_link();
        let c_f = template.c_f();
        let mut out = Vec::new();
        for b in &self.config.benchmarks {
            out.push(Arc::new(self.explicit_benchmark(b, &template)?));
        }
        if let Some(r) = &self.config.random_benchmarks {
            let cap = if link.half_width().is_finite() && c_f > 0.0 {
                link.half_width() / c_f * (1.0 - 1e-9)
            } else {
                f64::INFINITY
            };
            let mut rng = ChaCha8Rng::seed_from_u64(r.seed.unwrap_or(self.config.seed ^ 0xBE4C));
            for i in 0..r.count {
                let centers: Vec<Situation> = (0..r.centers.max(1))
                    .map(|_| {
                        let h = rng.random_range(0..=r.history);
                        random_situation(&mut rng, &self.space, self.config.side_dim, h)
                    })
                    .collect();
                let coeffs: Vec<f64> = centers.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
                let target = (rng.random::<f64>() * r.norm_max).min(cap);
                let e = KernelExpansion::new(self.kernel.clone(), centers, coeffs)?;
                let e = if e.norm() > 0.0 { e.with_norm(target)? } else { e };
                out.push(Arc::new(template.benchmark(format!("r{i}"), Arc::new(e))?));
            }
        }
        let mut names: Vec<&str> = out.iter().map(|b| b.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Config("benchmark names must be unique".into()));
        }
        Ok(out)
    }

    fn explicit_benchmark(&self, b: &BenchmarkConfig, template: &Leader) -> Result<Benchmark> {
        if let Some(link) = &b.link {
            if link != template.benchmark_link().name() {
                return Err(BenchError::Config(format!(
                    "{}: link {link:?} does not match the {} family link {:?}",
                    b.name,
                    self.family,
                    template.benchmark_link().name()
                )));
            }
        }
        let element: Arc<dyn RkhsElement> = match b.member {
            Some(n) => {
                let u = self.universal.as_ref().ok_or_else(|| {
                    BenchError::Config(format!("{}: member benchmarks need a universal kernel", b.name))
                })?;
                Arc::new(u.member(n)?)
            }
            None => {
                let centers = b
                    .centers
                    .iter()
                    .map(|c| situation_from_flat(c, self.config.side_dim))
                    .collect::<Result<Vec<_>>>()?;
                let e = KernelExpansion::new(self.kernel.clone(), centers, b.coeffs.clone())?;
                match b.norm {
                    Some(target) => Arc::new(e.with_norm(target)?),
                    None => Arc::new(e),
                }
            }
        };
        Ok(template.benchmark(b.name.clone(), element)?)
    }

    pub fn benchmark(&self, name: &str) -> Result<&Arc<Benchmark>> {
        self.benchmarks
            .iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| BenchError::Config(format!("no benchmark named {name:?}")))
    }

    pub fn named_benchmarks(&self) -> Vec<Named> {
        self.benchmarks
            .iter()
            .map(|b| Named::new(b.name(), b.clone() as Arc<dyn PredictionStrategy>))
            .collect()
    }

    pub fn generator_params(&self) -> GeneratorParams {
        let g = &self.config.generator;
        let d = GeneratorParams::default();
        GeneratorParams {
            rho: g.rho.unwrap_or(d.rho),
            sigma: g.sigma.unwrap_or(d.sigma),
            period: g.period.unwrap_or(d.period),
            amplitude: g.amplitude.unwrap_or(d.amplitude),
            noise: g.noise.unwrap_or(d.noise),
        }
    }

    pub fn make_generator(&self, seed: u64) -> Result<Generator> {
        let g = &self.config.generator;
        let kind: GeneratorKind = g.kind.parse()?;
        let target = match &g.target {
            Some(name) => Some(self.benchmark(name)?.clone() as Arc<dyn PredictionStrategy>),
            None => None,
        };
        Generator::new(kind, self.space, self.config.side_dim, self.generator_params(), target, seed)
    }
}
