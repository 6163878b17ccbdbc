//! The on-line prediction protocol.
//!
//! On every round Reality announces side information `x_n`, Predictor
//! announces `mu_n`, and Reality announces the outcome `y_n`. A strategy sees
//! the situation `s_n = (x_1, y_1, ..., x_{n-1}, y_{n-1}, x_n)`.
//!
//! Situations share their history through a persistent list, so advancing a
//! situation by one round is O(1) and old situations stay valid.

use std::fmt;
use std::io;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Side information announced at the start of a round.
pub type SideInfo = Vec<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutcomeKind {
    Interval,
    Binary,
}

/// The observation space: a closed interval or the binary set {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeSpace {
    lower: f64,
    upper: f64,
    kind: OutcomeKind,
}

impl OutcomeSpace {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "outcome interval [{lower}, {upper}] must satisfy lower < upper"
            )));
        }
        Ok(Self {
            lower,
            upper,
            kind: OutcomeKind::Interval,
        })
    }

    /// `[-y, y]`.
    pub fn symmetric(y: f64) -> Result<Self> {
        if !(y > 0.0) {
            return Err(Error::InvalidParameter(format!("Y = {y} must be positive")));
        }
        Self::interval(-y, y)
    }

    pub fn binary() -> Self {
        Self {
            lower: 0.0,
            upper: 1.0,
            kind: OutcomeKind::Binary,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn is_binary(&self) -> bool {
        self.kind == OutcomeKind::Binary
    }

    pub fn diameter(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, y: f64) -> bool {
        match self.kind {
            OutcomeKind::Binary => y == 0.0 || y == 1.0,
            OutcomeKind::Interval => y >= self.lower && y <= self.upper,
        }
    }

    /// Clamps into the convex hull of the space.
    pub fn clamp(&self, y: f64) -> f64 {
        y.clamp(self.lower, self.upper)
    }
}

struct Node<X> {
    x: X,
    y: f64,
    prev: Option<Arc<Node<X>>>,
}

// Unlink iteratively so that dropping a long history cannot overflow the stack.
impl<X> Drop for Node<X> {
    fn drop(&mut self) {
        let mut next = self.prev.take();
        while let Some(node) = next {
            match Arc::try_unwrap(node) {
                Ok(mut inner) => next = inner.prev.take(),
                Err(_) => break,
            }
        }
    }
}

/// A situation `s_n`: the full past and the current side information.
pub struct Situation<X = SideInfo> {
    last: Option<Arc<Node<X>>>,
    len: usize,
    current: X,
}

impl<X: Clone> Clone for Situation<X> {
    fn clone(&self) -> Self {
        Self {
            last: self.last.clone(),
            len: self.len,
            current: self.current.clone(),
        }
    }
}

impl<X> Situation<X> {
    /// The first-round situation `s_1 = (x_1)`.
    pub fn initial(current: X) -> Self {
        Self {
            last: None,
            len: 0,
            current,
        }
    }

    /// Builds a situation from history pairs given oldest first.
    pub fn from_history<I>(pairs: I, current: X) -> Self
    where
        I: IntoIterator<Item = (X, f64)>,
    {
        let mut last = None;
        let mut len = 0;
        for (x, y) in pairs {
            last = Some(Arc::new(Node { x, y, prev: last }));
            len += 1;
        }
        Self { last, len, current }
    }

    /// The situation of the next round after `y` is observed.
    pub fn advance(&self, y: f64, next: X) -> Self
    where
        X: Clone,
    {
        Self {
            last: Some(Arc::new(Node {
                x: self.current.clone(),
                y,
                prev: self.last.clone(),
            })),
            len: self.len + 1,
            current: next,
        }
    }

    /// Round index `n` (history length plus one).
    pub fn round(&self) -> usize {
        self.len + 1
    }

    pub fn history_len(&self) -> usize {
        self.len
    }

    pub fn current(&self) -> &X {
        &self.current
    }

    /// History pairs, newest first.
    pub fn recent(&self) -> Recent<'_, X> {
        Recent {
            node: self.last.as_deref(),
        }
    }

    /// History pairs, oldest first.
    pub fn history(&self) -> Vec<(&X, f64)> {
        let mut pairs: Vec<_> = self.recent().collect();
        pairs.reverse();
        pairs
    }

    /// The last `min(k, n - 1)` history pairs and the current side information.
    pub fn window(&self, k: usize) -> Window<'_, X> {
        let mut pairs: Vec<_> = self.recent().take(k).collect();
        pairs.reverse();
        Window {
            pairs,
            current: &self.current,
        }
    }

    /// Every situation `s_1, ..., s_n` leading to this one.
    pub fn prefixes(&self) -> Vec<Situation<X>>
    where
        X: Clone,
    {
        let mut out = Vec::with_capacity(self.len + 1);
        out.push(self.clone());
        let mut node = self.last.clone();
        let mut len = self.len;
        while let Some(n) = node {
            len -= 1;
            out.push(Situation {
                last: n.prev.clone(),
                len,
                current: n.x.clone(),
            });
            node = n.prev.clone();
        }
        out.reverse();
        out
    }
}

impl<X: PartialEq> PartialEq for Situation<X> {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len
            && self.current == other.current
            && self
                .recent()
                .zip(other.recent())
                .all(|((xa, ya), (xb, yb))| ya.to_bits() == yb.to_bits() && xa == xb)
    }
}

impl<X: fmt::Debug> fmt::Debug for Situation<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Situation")
            .field("history", &self.history())
            .field("current", &self.current)
            .finish()
    }
}

pub struct Recent<'a, X> {
    node: Option<&'a Node<X>>,
}

impl<'a, X> Iterator for Recent<'a, X> {
    type Item = (&'a X, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.node?;
        self.node = node.prev.as_deref();
        Some((&node.x, node.y))
    }
}

/// An order-k window `(x_{n-k}, y_{n-k}, ..., x_{n-1}, y_{n-1}, x_n)`.
#[derive(Debug, PartialEq)]
pub struct Window<'a, X = SideInfo> {
    /// Oldest first.
    pub pairs: Vec<(&'a X, f64)>,
    pub current: &'a X,
}

impl<X> Window<'_, X> {
    pub fn is_full(&self, k: usize) -> bool {
        self.pairs.len() == k
    }

    /// Outcome `j` steps back (`j = 1` is the previous outcome).
    pub fn outcome_back(&self, j: usize) -> Option<f64> {
        self.pairs
            .len()
            .checked_sub(j)
            .map(|i| self.pairs[i].1)
    }
}

/// A deterministic prediction strategy.
pub trait PredictionStrategy<X = SideInfo>: Send + Sync {
    fn predict(&self, s: &Situation<X>) -> f64;
}

impl<X, F> PredictionStrategy<X> for F
where
    F: Fn(&Situation<X>) -> f64 + Send + Sync,
{
    fn predict(&self, s: &Situation<X>) -> f64 {
        self(s)
    }
}

type WindowFn<X> = dyn Fn(&Window<'_, X>) -> f64 + Send + Sync;

/// An order-k Markov strategy lifted from a function on full windows.
pub struct MarkovStrategy<X = SideInfo> {
    order: usize,
    default: f64,
    f: Arc<WindowFn<X>>,
}

impl<X> Clone for MarkovStrategy<X> {
    fn clone(&self) -> Self {
        Self {
            order: self.order,
            default: self.default,
            f: self.f.clone(),
        }
    }
}

impl<X> MarkovStrategy<X> {
    pub fn order(&self) -> usize {
        self.order
    }
}

/// Outputs `default` while `n <= k` and `f(window)` afterwards.
pub fn markov_lift<X, F>(f: F, k: usize, default: f64) -> MarkovStrategy<X>
where
    F: Fn(&Window<'_, X>) -> f64 + Send + Sync + 'static,
{
    MarkovStrategy {
        order: k,
        default,
        f: Arc::new(f),
    }
}

impl<X: Send + Sync> PredictionStrategy<X> for MarkovStrategy<X> {
    fn predict(&self, s: &Situation<X>) -> f64 {
        if s.round() <= self.order {
            self.default
        } else {
            (self.f)(&s.window(self.order))
        }
    }
}

/// Redefines the side information as the whole situation, `x_n := s_n`.
pub fn markov_reduce<X: Clone>(s: &Situation<X>) -> Situation<Situation<X>> {
    let prefixes = s.prefixes();
    let outcomes: Vec<f64> = s.recent().map(|(_, y)| y).collect();
    let mut pairs = Vec::with_capacity(s.history_len());
    for (prefix, y) in prefixes.iter().zip(outcomes.iter().rev()) {
        pairs.push((prefix.clone(), *y));
    }
    Situation::from_history(pairs, s.clone())
}

/// An order-0 Markov strategy on reduced situations that applies `inner` to
/// the current object.
pub struct MarkovReduced<S>(pub S);

impl<X, S> PredictionStrategy<Situation<X>> for MarkovReduced<S>
where
    X: Send + Sync,
    S: PredictionStrategy<X>,
{
    fn predict(&self, s: &Situation<Situation<X>>) -> f64 {
        self.0.predict(s.current())
    }
}

/// A predictor that may keep state between rounds.
pub trait Forecaster {
    fn forecast(&mut self, s: &Situation) -> Result<f64>;

    fn observe(&mut self, s: &Situation, mu: f64, y: f64) -> Result<()>;
}

/// Adapts a stateless strategy to [`Forecaster`].
pub struct Stateless<S>(pub S);

impl<S: PredictionStrategy> Forecaster for Stateless<S> {
    fn forecast(&mut self, s: &Situation) -> Result<f64> {
        Ok(self.0.predict(s))
    }

    fn observe(&mut self, _: &Situation, _: f64, _: f64) -> Result<()> {
        Ok(())
    }
}

/// The data source. Outcome generation sees `mu_n`, so adversarial
/// realities can react to the prediction.
pub trait Reality {
    fn side_info(&mut self, round: usize) -> SideInfo;

    fn outcome(&mut self, s: &Situation, mu: f64) -> f64;
}

/// A registered benchmark strategy.
#[derive(Clone)]
pub struct Named {
    pub name: String,
    pub strategy: Arc<dyn PredictionStrategy>,
}

impl Named {
    pub fn new(name: impl Into<String>, strategy: Arc<dyn PredictionStrategy>) -> Self {
        Self {
            name: name.into(),
            strategy,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRound {
    pub x: SideInfo,
    pub mu: f64,
    pub y: f64,
    /// One entry per registered benchmark, in registration order.
    pub phi: Vec<f64>,
}

/// Per-round record of a protocol run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub space: OutcomeSpace,
    pub side_dim: usize,
    pub benchmarks: Vec<String>,
    pub rounds: Vec<TraceRound>,
}

impl Trace {
    pub fn new(space: OutcomeSpace, side_dim: usize, benchmarks: Vec<String>) -> Self {
        Self {
            space,
            side_dim,
            benchmarks,
            rounds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn benchmark_index(&self, name: &str) -> Option<usize> {
        self.benchmarks.iter().position(|b| b == name)
    }

    pub fn mus(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.mu).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.y).collect()
    }

    pub fn phis(&self, benchmark: usize) -> Vec<f64> {
        self.rounds.iter().map(|r| r.phi[benchmark]).collect()
    }

    /// The situations `s_1, ..., s_N` the strategies saw.
    pub fn situations(&self) -> Vec<Situation> {
        let mut out: Vec<Situation> = Vec::with_capacity(self.rounds.len());
        for (i, round) in self.rounds.iter().enumerate() {
            let s = match out.last() {
                None => Situation::initial(round.x.clone()),
                Some(prev) => prev.advance(self.rounds[i - 1].y, round.x.clone()),
            };
            out.push(s);
        }
        out
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut header = vec!["n".to_string()];
        header.extend((0..self.side_dim).map(|i| format!("x{i}")));
        header.push("mu".into());
        header.push("y".into());
        header.extend(self.benchmarks.iter().map(|b| format!("phi_{b}")));
        header
    }

    /// Columns `n, x0..x{d-1}, mu, y, phi_<name>...` in round order.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.csv_header()).map_err(csv_err)?;
        for (i, r) in self.rounds.iter().enumerate() {
            let mut rec = Vec::with_capacity(3 + r.x.len() + r.phi.len());
            rec.push((i + 1).to_string());
            rec.extend(r.x.iter().map(|v| v.to_string()));
            rec.push(r.mu.to_string());
            rec.push(r.y.to_string());
            rec.extend(r.phi.iter().map(|v| v.to_string()));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Trace(e.to_string()))?;
        Ok(())
    }

    /// Parses a trace written by [`Trace::write_csv`]. Outcomes are not
    /// validated against `space` here.
    pub fn read_csv<R: io::Read>(r: R, space: OutcomeSpace) -> Result<Self> {
        let mut input = csv::Reader::from_reader(r);
        let header: Vec<String> = input
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let mu_col = header
            .iter()
            .position(|h| h == "mu")
            .ok_or_else(|| Error::Trace("missing mu column".into()))?;
        if header.first().map(String::as_str) != Some("n")
            || header.get(mu_col + 1).map(String::as_str) != Some("y")
        {
            return Err(Error::Trace("header must read n, x*, mu, y, phi_*".into()));
        }
        let side_dim = mu_col - 1;
        for (i, h) in header[1..mu_col].iter().enumerate() {
            if *h != format!("x{i}") {
                return Err(Error::Trace(format!("unexpected column {h}")));
            }
        }
        let mut benchmarks = Vec::new();
        for h in &header[mu_col + 2..] {
            let name = h
                .strip_prefix("phi_")
                .ok_or_else(|| Error::Trace(format!("unexpected column {h}")))?;
            benchmarks.push(name.to_string());
        }
        let mut trace = Trace::new(space, side_dim, benchmarks);
        for (i, rec) in input.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let num = |j: usize| -> Result<f64> {
                rec.get(j)
                    .ok_or_else(|| Error::Trace(format!("row {}: missing field {j}", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Trace(format!("row {}: {e}", i + 1)))
            };
            let n = num(0)?;
            if n != (i + 1) as f64 {
                return Err(Error::Trace(format!("row {} has n = {n}", i + 1)));
            }
            let x = (1..mu_col).map(num).collect::<Result<Vec<_>>>()?;
            let phi = (mu_col + 2..header.len())
                .map(num)
                .collect::<Result<Vec<_>>>()?;
            trace.rounds.push(TraceRound {
                x,
                mu: num(mu_col)?,
                y: num(mu_col + 1)?,
                phi,
            });
        }
        Ok(trace)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Trace(e.to_string())
}

/// Drives `rounds` rounds of the protocol in the order x, mu, y.
///
/// Benchmarks are evaluated on the same situation the forecaster sees. An
/// outcome outside `space` aborts the run.
pub fn run_protocol<R, F>(
    reality: &mut R,
    leader: &mut F,
    benchmarks: &[Named],
    rounds: usize,
    space: OutcomeSpace,
) -> Result<Trace>
where
    R: Reality + ?Sized,
    F: Forecaster + ?Sized,
{
    if rounds == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let names = benchmarks.iter().map(|b| b.name.clone()).collect();
    let mut situation = Situation::initial(reality.side_info(1));
    let mut trace = Trace::new(space, situation.current().len(), names);
    for n in 1..=rounds {
        if situation.current().len() != trace.side_dim {
            return Err(Error::Trace(format!(
                "round {n}: side information has length {}, expected {}",
                situation.current().len(),
                trace.side_dim
            )));
        }
        let mu = leader.forecast(&situation)?;
        let phi: Vec<f64> = benchmarks
            .iter()
            .map(|b| b.strategy.predict(&situation))
            .collect();
        let y = reality.outcome(&situation, mu);
        if !space.contains(y) {
            return Err(Error::OutcomeOutOfSpace {
                round: n,
                value: y,
                lower: space.lower(),
                upper: space.upper(),
            });
        }
        leader.observe(&situation, mu, y)?;
        trace.rounds.push(TraceRound {
            x: situation.current().clone(),
            mu,
            y,
            phi,
        });
        if n < rounds {
            situation = situation.advance(y, reality.side_info(n + 1));
        }
    }
    Ok(trace)
}
