//! Kernels on situations and finite kernel expansions.
//!
//! Every kernel here factors through a finite feature summary of the
//! situation (a flattened order-k window, or the coordinates of a truncated
//! feature map), which lets the engine cache one summary per past round.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::protocol::{OutcomeSpace, PredictionStrategy, Situation};

/// A finite summary of a situation, sufficient to evaluate a kernel.
pub type Features = Vec<f64>;

/// Relative tolerance for the smallest Gram eigenvalue.
pub const PSD_RELATIVE_TOLERANCE: f64 = 1e-8;

/// Quadratic forms below this are rejected instead of clamped to zero.
pub const NORM_NEGATIVE_TOLERANCE: f64 = 1e-6;

/// A symmetric positive-semidefinite kernel on situations.
pub trait SituationKernel: Send + Sync {
    fn features(&self, s: &Situation) -> Features;

    fn eval_features(&self, a: &[f64], b: &[f64]) -> f64;

    fn eval(&self, a: &Situation, b: &Situation) -> f64 {
        self.eval_features(&self.features(a), &self.features(b))
    }

    /// Declared upper bound `c_F` on `sup_s sqrt(K(s, s))`.
    fn embedding_constant_bound(&self) -> f64;
}

/// Flattens `window(s, k)` into `[x_{n-k}, y_{n-k}, ..., x_{n-1}, y_{n-1}, x_n]`,
/// filling missing pairs with `pad`.
pub fn flatten_window(s: &Situation, k: usize, pad: f64) -> Features {
    let d = s.current().len();
    let w = s.window(k);
    let mut out = Vec::with_capacity(k * (d + 1) + d);
    for _ in w.pairs.len()..k {
        out.extend(std::iter::repeat_n(pad, d + 1));
    }
    for (x, y) in &w.pairs {
        out.extend_from_slice(x);
        out.push(*y);
    }
    out.extend_from_slice(w.current);
    out
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `exp(-gamma * |w(s) - w(s')|^2)` on flattened order-k windows.
#[derive(Clone, Debug)]
pub struct RbfWindowKernel {
    order: usize,
    gamma: f64,
    sentinel: f64,
}

impl RbfWindowKernel {
    pub fn new(order: usize, gamma: f64, sentinel: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")));
        }
        Ok(Self {
            order,
            gamma,
            sentinel,
        })
    }

    /// Uses `lower - diameter` as the padding sentinel.
    pub fn for_space(order: usize, gamma: f64, space: &OutcomeSpace) -> Result<Self> {
        Self::new(order, gamma, space.lower() - space.diameter())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }
}

impl SituationKernel for RbfWindowKernel {
    fn features(&self, s: &Situation) -> Features {
        flatten_window(s, self.order, self.sentinel)
    }

    fn eval_features(&self, a: &[f64], b: &[f64]) -> f64 {
        (-self.gamma * squared_distance(a, b)).exp()
    }

    fn embedding_constant_bound(&self) -> f64 {
        1.0
    }
}

/// `<w(s), w(s')>` on zero-padded windows whose coordinates are bounded by
/// `coordinate_bound`.
#[derive(Clone, Debug)]
pub struct LinearWindowKernel {
    order: usize,
    side_dim: usize,
    coordinate_bound: f64,
}

impl LinearWindowKernel {
    pub fn new(order: usize, side_dim: usize, coordinate_bound: f64) -> Result<Self> {
        if !(coordinate_bound >= 0.0 && coordinate_bound.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coordinate bound {coordinate_bound} must be finite and non-negative"
            )));
        }
        Ok(Self {
            order,
            side_dim,
            coordinate_bound,
        })
    }

    pub fn window_dim(&self) -> usize {
        self.order * (self.side_dim + 1) + self.side_dim
    }
}

impl SituationKernel for LinearWindowKernel {
    fn features(&self, s: &Situation) -> Features {
        flatten_window(s, self.order, 0.0)
    }

    fn eval_features(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b)
    }

    fn embedding_constant_bound(&self) -> f64 {
        (self.window_dim() as f64).sqrt() * self.coordinate_bound
    }
}

/// `K(s, s') = c` for all situations; `c = 0` gives the trivial class.
#[derive(Clone, Debug)]
pub struct ConstantKernel {
    value: f64,
}

impl ConstantKernel {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "constant kernel value {value} must be non-negative"
            )));
        }
        Ok(Self { value })
    }
}

impl SituationKernel for ConstantKernel {
    fn features(&self, _: &Situation) -> Features {
        Vec::new()
    }

    fn eval_features(&self, _: &[f64], _: &[f64]) -> f64 {
        self.value
    }

    fn embedding_constant_bound(&self) -> f64 {
        self.value.sqrt()
    }
}

/// The kernel `sum_n 4^-n F_n(s) F_n(s') / |F_n|_C^2` built from a finite
/// family of bounded strategies.
///
/// Its feature map has coordinates `Phi_n = 2^-n F_n / |F_n|_C`; members with
/// zero sup norm contribute the zero coordinate.
pub struct TruncatedUniversalKernel {
    members: Vec<Arc<dyn PredictionStrategy>>,
    sup_norms: Vec<f64>,
    bound: f64,
}

impl TruncatedUniversalKernel {
    pub fn new(members: Vec<Arc<dyn PredictionStrategy>>, sup_norms: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter(
                "universal kernel needs at least one member".into(),
            ));
        }
        if members.len() != sup_norms.len() {
            return Err(Error::InvalidParameter(format!(
                "{} members but {} sup norms",
                members.len(),
                sup_norms.len()
            )));
        }
        let mut weight_sum = 0.0;
        for (i, &norm) in sup_norms.iter().enumerate() {
            if !(norm >= 0.0 && norm.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "member {} has non-positive sup norm {norm}",
                    i + 1
                )));
            }
            if norm > 0.0 {
                weight_sum += 4f64.powi(-(i as i32 + 1));
            }
        }
        Ok(Self {
            members,
            sup_norms,
            bound: weight_sum.sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Coordinate `Phi_n(s)`, 1-based.
    pub fn coordinate(&self, n: usize, s: &Situation) -> f64 {
        let norm = self.sup_norms[n - 1];
        if norm == 0.0 {
            0.0
        } else {
            2f64.powi(-(n as i32)) * self.members[n - 1].predict(s) / norm
        }
    }

    /// Member `F_n` as the element `<2^n |F_n|_C e_n, Phi(.)>`.
    pub fn member(self: &Arc<Self>, n: usize) -> Result<UniversalMember> {
        if n == 0 || n > self.members.len() {
            return Err(Error::InvalidParameter(format!("no member {n}")));
        }
        Ok(UniversalMember {
            kernel: self.clone(),
            index: n,
        })
    }
}

impl SituationKernel for TruncatedUniversalKernel {
    fn features(&self, s: &Situation) -> Features {
        (1..=self.members.len())
            .map(|n| self.coordinate(n, s))
            .collect()
    }

    fn eval_features(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b)
    }

    fn eval(&self, a: &Situation, b: &Situation) -> f64 {
        let mut total = 0.0;
        for (i, (member, &norm)) in self.members.iter().zip(&self.sup_norms).enumerate() {
            if norm > 0.0 {
                total += 4f64.powi(-(i as i32 + 1)) * member.predict(a) * member.predict(b)
                    / (norm * norm);
            }
        }
        total
    }

    fn embedding_constant_bound(&self) -> f64 {
        self.bound
    }
}

/// A function in the RKHS of some kernel, with a known norm bound.
pub trait RkhsElement: Send + Sync {
    fn eval(&self, s: &Situation) -> f64;

    /// Upper bound on the RKHS norm; exact for kernel expansions.
    fn norm(&self) -> f64;
}

/// One member of a [`TruncatedUniversalKernel`].
pub struct UniversalMember {
    kernel: Arc<TruncatedUniversalKernel>,
    index: usize,
}

impl RkhsElement for UniversalMember {
    fn eval(&self, s: &Situation) -> f64 {
        let n = self.index;
        let norm = self.kernel.sup_norms[n - 1];
        if norm == 0.0 {
            return 0.0;
        }
        2f64.powi(n as i32) * norm * self.kernel.coordinate(n, s)
    }

    fn norm(&self) -> f64 {
        2f64.powi(self.index as i32) * self.kernel.sup_norms[self.index - 1]
    }
}

/// `G = sum_j c_j K(z_j, .)`.
#[derive(Clone)]
pub struct KernelExpansion {
    kernel: Arc<dyn SituationKernel>,
    centers: Vec<Situation>,
    center_features: Vec<Features>,
    coeffs: Vec<f64>,
    norm: f64,
}

impl KernelExpansion {
    pub fn new(
        kernel: Arc<dyn SituationKernel>,
        centers: Vec<Situation>,
        coeffs: Vec<f64>,
    ) -> Result<Self> {
        if centers.len() != coeffs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} centers but {} coefficients",
                centers.len(),
                coeffs.len()
            )));
        }
        let center_features: Vec<Features> = centers.iter().map(|c| kernel.features(c)).collect();
        let mut form = 0.0;
        for (i, fi) in center_features.iter().enumerate() {
            for (j, fj) in center_features.iter().enumerate() {
                form += coeffs[i] * coeffs[j] * kernel.eval_features(fi, fj);
            }
        }
        let norm = clamp_quadratic_form(form)?.sqrt();
        Ok(Self {
            kernel,
            centers,
            center_features,
            coeffs,
            norm,
        })
    }

    pub fn kernel(&self) -> &Arc<dyn SituationKernel> {
        &self.kernel
    }

    pub fn centers(&self) -> &[Situation] {
        &self.centers
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn eval(&self, s: &Situation) -> f64 {
        let f = self.kernel.features(s);
        self.eval_features(&f)
    }

    pub fn eval_features(&self, f: &[f64]) -> f64 {
        self.center_features
            .iter()
            .zip(&self.coeffs)
            .map(|(z, c)| c * self.kernel.eval_features(z, f))
            .sum()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            kernel: self.kernel.clone(),
            centers: self.centers.clone(),
            center_features: self.center_features.clone(),
            coeffs: self.coeffs.iter().map(|c| alpha * c).collect(),
            norm: alpha.abs() * self.norm,
        }
    }

    /// Rescales to the given norm. A zero expansion stays zero.
    pub fn with_norm(&self, target: f64) -> Result<Self> {
        if !(target >= 0.0) {
            return Err(Error::InvalidParameter(format!("target norm {target} < 0")));
        }
        if self.norm == 0.0 {
            if target == 0.0 {
                return Ok(self.clone());
            }
            return Err(Error::InvalidParameter(
                "cannot rescale a zero expansion to a positive norm".into(),
            ));
        }
        Ok(self.scaled(target / self.norm))
    }
}

impl RkhsElement for KernelExpansion {
    fn eval(&self, s: &Situation) -> f64 {
        KernelExpansion::eval(self, s)
    }

    fn norm(&self) -> f64 {
        self.norm
    }
}

fn clamp_quadratic_form(form: f64) -> Result<f64> {
    if form.is_nan() || form < -NORM_NEGATIVE_TOLERANCE {
        return Err(Error::PsdViolation { value: form });
    }
    Ok(form.max(0.0))
}

/// `sqrt(c^T G c)` for an explicit Gram matrix.
pub fn quadratic_norm(gram: &DMatrix<f64>, coeffs: &[f64]) -> Result<f64> {
    let c = nalgebra::DVector::from_column_slice(coeffs);
    let form = c.dot(&(gram * &c));
    Ok(clamp_quadratic_form(form)?.sqrt())
}

pub fn expansion_norm(e: &KernelExpansion) -> f64 {
    e.norm()
}

pub fn expansion_eval(e: &KernelExpansion, s: &Situation) -> f64 {
    e.eval(s)
}

/// `G[i][j] = K(s_i, s_j)`, filled from the upper triangle.
pub fn gram(kernel: &dyn SituationKernel, situations: &[Situation]) -> Result<DMatrix<f64>> {
    if situations.is_empty() {
        return Err(Error::InvalidParameter("gram needs at least one situation".into()));
    }
    let feats: Vec<Features> = situations.iter().map(|s| kernel.features(s)).collect();
    let n = feats.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval_features(&feats[i], &feats[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Checks `lambda_min >= -tol * lambda_max` and returns `(lambda_min, lambda_max)`.
pub fn check_psd(gram: &DMatrix<f64>, relative_tolerance: f64) -> Result<(f64, f64)> {
    let eig = SymmetricEigen::new(gram.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if min < -relative_tolerance * max.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite {
            min,
            max,
            tolerance: relative_tolerance,
        });
    }
    Ok((min, max))
}

/// `max sqrt(K(s, s))` over sampled situations: a lower bound on `c_F`.
pub fn embedding_constant_estimate<F>(kernel: &dyn SituationKernel, mut sampler: F, trials: usize) -> f64
where
    F: FnMut() -> Situation,
{
    (0..trials.max(1))
        .map(|_| {
            let s = sampler();
            kernel.eval(&s, &s).max(0.0).sqrt()
        })
        .fold(0.0, f64::max)
}

/// `max |F(s)|` over sampled situations: a lower bound on `|F|_C`.
pub fn estimate_sup_norm<F>(strategy: &dyn PredictionStrategy, mut sampler: F, trials: usize) -> f64
where
    F: FnMut() -> Situation,
{
    (0..trials.max(1))
        .map(|_| strategy.predict(&sampler()).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{markov_lift, SideInfo, Window};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_situation(rng: &mut ChaCha8Rng, max_len: usize) -> Situation {
        let len = rng.random_range(0..=max_len);
        let pairs: Vec<(SideInfo, f64)> = (0..len)
            .map(|_| (vec![rng.random_range(-1.0..1.0)], rng.random_range(-1.0..1.0)))
            .collect();
        Situation::from_history(pairs, vec![rng.random_range(-1.0..1.0)])
    }

    fn rbf() -> RbfWindowKernel {
        RbfWindowKernel::for_space(2, 1.0, &OutcomeSpace::symmetric(1.0).unwrap()).unwrap()
    }

    #[test]
    fn rbf_diagonal_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = rbf();
        for _ in 0..20 {
            let s = random_situation(&mut rng, 4);
            assert_eq!(k.eval(&s, &s), 1.0);
        }
        assert!(RbfWindowKernel::new(1, 0.0, -3.0).is_err());
    }

    #[test]
    fn rbf_matches_distance() {
        let k = RbfWindowKernel::new(1, 1.0, -3.0).unwrap();
        let a = Situation::from_history(vec![(vec![0.0], 0.0)], vec![0.0]);
        let b = Situation::from_history(vec![(vec![0.3], 0.4)], vec![0.0]);
        // d^2 = 0.09 + 0.16
        assert!((k.eval(&a, &b) - (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn padding_uses_sentinel() {
        let s = Situation::from_history(vec![(vec![0.5], 0.25)], vec![0.75]);
        assert_eq!(flatten_window(&s, 2, -3.0), vec![-3.0, -3.0, 0.5, 0.25, 0.75]);
    }

    #[test]
    fn gram_small_cases() {
        let k = rbf();
        let s = Situation::initial(vec![0.2]);
        let g = gram(&k, std::slice::from_ref(&s)).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(1, 1, &[1.0]));
        let g = gram(&k, &[s.clone(), s]).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(gram(&k, &[]).is_err());
    }

    #[test]
    fn gram_matches_pairwise_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = rbf();
        let ss: Vec<_> = (0..30).map(|_| random_situation(&mut rng, 5)).collect();
        let g = gram(&k, &ss).unwrap();
        for i in 0..ss.len() {
            for j in 0..ss.len() {
                assert_eq!(g[(i, j)], k.eval(&ss[i], &ss[j]));
                assert!((g[(i, j)] - g[(j, i)]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gram_of_random_situations_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let space = OutcomeSpace::symmetric(1.0).unwrap();
        let kernels: Vec<Box<dyn SituationKernel>> = vec![
            Box::new(rbf()),
            Box::new(RbfWindowKernel::for_space(0, 4.0, &space).unwrap()),
            Box::new(LinearWindowKernel::new(2, 1, 1.0).unwrap()),
            Box::new(ConstantKernel::new(0.7).unwrap()),
        ];
        for k in &kernels {
            let ss: Vec<_> = (0..50).map(|_| random_situation(&mut rng, 4)).collect();
            let g = gram(k.as_ref(), &ss).unwrap();
            check_psd(&g, PSD_RELATIVE_TOLERANCE).unwrap();
        }
    }

    #[test]
    fn check_psd_rejects_indefinite() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            check_psd(&g, PSD_RELATIVE_TOLERANCE),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn expansion_norm_examples() {
        let k: Arc<dyn SituationKernel> = Arc::new(rbf());
        let z = Situation::initial(vec![0.0]);
        let e = KernelExpansion::new(k.clone(), vec![z.clone()], vec![2.0]).unwrap();
        assert_eq!(expansion_norm(&e), 2.0);
        let e = KernelExpansion::new(k.clone(), vec![z.clone()], vec![0.0]).unwrap();
        assert_eq!(expansion_norm(&e), 0.0);
        assert_eq!(expansion_eval(&e, &z), 0.0);
        let e = KernelExpansion::new(k, vec![z.clone()], vec![1.0]).unwrap();
        assert_eq!(expansion_eval(&e, &z), 1.0);

        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!((quadratic_norm(&g, &[1.0, -1.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    struct Negative;

    impl SituationKernel for Negative {
        fn features(&self, _: &Situation) -> Features {
            Vec::new()
        }
        fn eval_features(&self, _: &[f64], _: &[f64]) -> f64 {
            -1.0
        }
        fn embedding_constant_bound(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn negative_quadratic_form_is_rejected() {
        let z = Situation::initial(vec![0.0]);
        let err = KernelExpansion::new(Arc::new(Negative), vec![z], vec![1.0]).err();
        assert!(matches!(err, Some(Error::PsdViolation { .. })));
        let g = DMatrix::from_row_slice(1, 1, &[-1e-9]);
        assert_eq!(quadratic_norm(&g, &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn reproducing_bound_on_random_situations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k: Arc<dyn SituationKernel> = Arc::new(rbf());
        let centers: Vec<_> = (0..6).map(|_| random_situation(&mut rng, 3)).collect();
        let coeffs: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let e = KernelExpansion::new(k.clone(), centers, coeffs).unwrap();
        for _ in 0..100 {
            let s = random_situation(&mut rng, 3);
            let bound = e.norm() * k.eval(&s, &s).sqrt();
            assert!(e.eval(&s).abs() <= bound * (1.0 + 1e-12));
            assert!(e.eval(&s).abs() <= e.norm() * k.embedding_constant_bound() * (1.0 + 1e-12));
        }
    }

    fn constant(c: f64) -> Arc<dyn PredictionStrategy> {
        Arc::new(move |_: &Situation| c)
    }

    #[test]
    fn universal_kernel_examples() {
        let u = TruncatedUniversalKernel::new(vec![constant(-3.0)], vec![3.0]).unwrap();
        let s = Situation::initial(vec![0.0]);
        assert!((u.eval(&s, &s) - 0.25).abs() < 1e-15);

        let u = TruncatedUniversalKernel::new(
            vec![constant(1.0), constant(2.0), constant(3.0)],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        assert!((u.embedding_constant_bound() - 0.328125f64.sqrt()).abs() < 1e-15);

        let many: Vec<_> = (0..40).map(|_| constant(1.0)).collect();
        let u = TruncatedUniversalKernel::new(many, vec![1.0; 40]).unwrap();
        assert!((u.embedding_constant_bound() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);

        assert!(TruncatedUniversalKernel::new(vec![constant(1.0)], vec![-1.0]).is_err());
        assert!(TruncatedUniversalKernel::new(vec![], vec![]).is_err());
    }

    #[test]
    fn universal_zero_member_is_dropped() {
        let u = TruncatedUniversalKernel::new(vec![constant(0.0), constant(1.0)], vec![0.0, 1.0])
            .unwrap();
        assert!((u.embedding_constant_bound() - 1.0 / 4.0).abs() < 1e-15);
        let s = Situation::initial(vec![0.0]);
        assert!((u.eval(&s, &s) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn universal_members_reproduce_strategies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let echo = markov_lift(|w: &Window| w.outcome_back(1).unwrap(), 1, 0.0);
        let half_x = markov_lift(|w: &Window| 0.5 * w.current[0], 0, 0.0);
        let members: Vec<Arc<dyn PredictionStrategy>> = vec![Arc::new(echo), Arc::new(half_x)];
        let u = Arc::new(TruncatedUniversalKernel::new(members.clone(), vec![1.0, 0.5]).unwrap());
        for _ in 0..50 {
            let s = random_situation(&mut rng, 3);
            for n in 1..=2 {
                let m = u.member(n).unwrap();
                assert!((m.eval(&s) - members[n - 1].predict(&s)).abs() < 1e-14);
                // the unit vector e_n picks out Phi_n = 2^-n F_n / |F_n|_C
                let phi_n = u.features(&s)[n - 1];
                let expected = 2f64.powi(-(n as i32)) * members[n - 1].predict(&s)
                    / [1.0, 0.5][n - 1];
                assert_eq!(phi_n, expected);
            }
            assert!((u.eval(&s, &s) - u.eval_features(&u.features(&s), &u.features(&s))).abs() < 1e-15);
        }
        assert_eq!(u.member(2).unwrap().norm(), 4.0 * 0.5);
        assert!(u.member(3).is_err());
    }

    #[test]
    fn embedding_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = rbf();
        let est = embedding_constant_estimate(&k, || random_situation(&mut rng, 3), 50);
        assert_eq!(est, 1.0);

        let u = TruncatedUniversalKernel::new(
            vec![
                Arc::new(markov_lift(|w: &Window| w.outcome_back(1).unwrap(), 1, 0.0)),
                constant(0.3),
            ],
            vec![1.0, 0.3],
        )
        .unwrap();
        let est = embedding_constant_estimate(&u, || random_situation(&mut rng, 3), 100);
        assert!(est <= u.embedding_constant_bound() + 1e-12);

        let lin = LinearWindowKernel::new(2, 1, 1.0).unwrap();
        let est = embedding_constant_estimate(&lin, || random_situation(&mut rng, 4), 200);
        assert!(est <= (5.0f64).sqrt() * 1.0);
        assert_eq!(lin.embedding_constant_bound(), 5.0f64.sqrt());
    }

    #[test]
    fn sup_norm_estimate_is_a_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let echo = markov_lift(|w: &Window| w.outcome_back(1).unwrap(), 1, 0.0);
        let est = estimate_sup_norm(&echo, || random_situation(&mut rng, 3), 200);
        assert!(est <= 1.0 && est > 0.9);
    }

    proptest! {
        #[test]
        fn norm_is_absolutely_homogeneous(alpha in -10.0f64..10.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k: Arc<dyn SituationKernel> = Arc::new(rbf());
            let centers: Vec<_> = (0..5).map(|_| random_situation(&mut rng, 3)).collect();
            let coeffs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e = KernelExpansion::new(k.clone(), centers.clone(), coeffs.clone()).unwrap();
            let scaled = e.scaled(alpha);
            let direct = KernelExpansion::new(k, centers, coeffs.iter().map(|c| alpha * c).collect()).unwrap();
            prop_assert!((scaled.norm() - alpha.abs() * e.norm()).abs() <= 1e-12 * (1.0 + scaled.norm()));
            prop_assert!((direct.norm() - scaled.norm()).abs() <= 1e-12 * (1.0 + scaled.norm()));
        }

        #[test]
        fn kernels_are_symmetric(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_situation(&mut rng, 4);
            let b = random_situation(&mut rng, 4);
            let k = rbf();
            prop_assert_eq!(k.eval(&a, &b), k.eval(&b, &a));
            let lin = LinearWindowKernel::new(3, 1, 1.0).unwrap();
            prop_assert_eq!(lin.eval(&a, &b), lin.eval(&b, &a));
        }
    }
}
