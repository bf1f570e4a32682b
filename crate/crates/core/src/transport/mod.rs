//! Smoothed Wasserstein distances.
//!
//! The workhorse is the stochastic dual solver: behavioral test
//! functions `lambda(x) = <p, phi(x)>` live in the span of a random
//! Fourier feature map, and the pair of coefficient vectors
//! `(p_mu, p_nu)` ascends the smoothed dual objective
//!
//! ```text
//! Psi(l_mu, l_nu) = E_mu[l_mu(x)] - E_nu[l_nu(y)] - E_C(l_mu, l_nu)
//! E_C = gamma * E_xi[ exp((l_mu(x) - l_nu(y) - C(x, y)) / gamma) ]
//! ```
//!
//! one sampled pair at a time. Three independent oracles (exact
//! assignment, exact discrete OT via min-cost flow, Sinkhorn) validate
//! the solver; they are also the only route to the unsmoothed
//! `gamma = 0` distance.

mod assignment;
mod flow;
mod sinkhorn;

pub use assignment::exact_emd_assignment;
pub use flow::{exact_ot_discrete, OtPlan};
pub use sinkhorn::{sinkhorn_oracle, SinkhornResult};

use crate::error::{Error, Result};
use crate::rff::FeatureMap;
use crate::rng::{self, ChaCha8Rng};

/// Exponent clamp for the soft-constraint term; `exp(30)` is ~1e13,
/// far outside any regime where the gradient is still informative.
pub const EXP_CLAMP: f64 = 30.0;

/// Ground cost between embedding points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostFn {
    /// `sum_i |x_i - y_i|`
    L1,
    /// `||x - y||_2`
    L2,
    /// `||x - y||_2^2`
    SquaredL2,
    /// `(sum_i |x_i - y_i|)^2`; on scalar embeddings this is the
    /// squared absolute value difference.
    SquaredAbsScalar,
}

impl CostFn {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            CostFn::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
            CostFn::L2 => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            CostFn::SquaredL2 => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            CostFn::SquaredAbsScalar => {
                let l1: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
                l1 * l1
            }
        }
    }

    pub fn parse(s: &str) -> Result<CostFn> {
        match s {
            "l1" => Ok(CostFn::L1),
            "l2" => Ok(CostFn::L2),
            "sql2" => Ok(CostFn::SquaredL2),
            "sqabs" => Ok(CostFn::SquaredAbsScalar),
            other => Err(Error::invalid(format!(
                "unknown cost '{other}' (expected l1, l2, sql2 or sqabs)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostFn::L1 => "l1",
            CostFn::L2 => "l2",
            CostFn::SquaredL2 => "sql2",
            CostFn::SquaredAbsScalar => "sqabs",
        }
    }
}

/// Weighted finite set of embedding points; the empirical form of a
/// policy embedding distribution.
#[derive(Debug, Clone)]
pub struct EmpiricalEmbedding {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl EmpiricalEmbedding {
    /// Uniform weights over the given points; exact duplicates are
    /// merged with their weights summed.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<EmpiricalEmbedding> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyDistribution("empirical embedding"));
        }
        let w = 1.0 / n as f64;
        EmpiricalEmbedding::weighted(points, vec![w; n])
    }

    /// Explicit nonnegative weights summing to 1 (within 1e-9).
    /// Duplicate points are merged.
    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<EmpiricalEmbedding> {
        if points.is_empty() {
            return Err(Error::EmptyDistribution("empirical embedding"));
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("embedding points have mixed dimensions"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "weights must sum to 1 within 1e-9, got {total}"
            )));
        }
        // Merge bitwise-equal points.
        let mut merged_pts: Vec<Vec<f64>> = Vec::new();
        let mut merged_w: Vec<f64> = Vec::new();
        for (p, w) in points.into_iter().zip(weights) {
            if let Some(k) = merged_pts.iter().position(|q| q == &p) {
                merged_w[k] += w;
            } else {
                merged_pts.push(p);
                merged_w.push(w);
            }
        }
        Ok(EmpiricalEmbedding {
            points: merged_pts,
            weights: merged_w,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws one support point according to the weights.
    pub fn sample<'a>(&'a self, rng: &mut ChaCha8Rng) -> &'a [f64] {
        let u = rng::uniform(rng);
        let mut acc = 0.0;
        for (p, w) in self.points.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return p;
            }
        }
        self.points.last().unwrap()
    }

    /// Union of several embeddings with equal total weight per part.
    pub fn union_uniform(parts: &[&EmpiricalEmbedding]) -> Result<EmpiricalEmbedding> {
        if parts.is_empty() {
            return Err(Error::EmptyDistribution("embedding union"));
        }
        let share = 1.0 / parts.len() as f64;
        let mut pts = Vec::new();
        let mut ws = Vec::new();
        for part in parts {
            for (p, w) in part.points.iter().zip(&part.weights) {
                pts.push(p.clone());
                ws.push(w * share);
            }
        }
        EmpiricalEmbedding::weighted(pts, ws)
    }
}

/// Source of sample points for the stochastic solver.
pub trait PointSampler {
    fn dim(&self) -> usize;
    fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

impl PointSampler for EmpiricalEmbedding {
    fn dim(&self) -> usize {
        EmpiricalEmbedding::dim(self)
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.sample(rng).to_vec()
    }
}

/// Continuous sampler defined by a closure.
pub struct FnSampler<F: Fn(&mut ChaCha8Rng) -> Vec<f64>> {
    dim: usize,
    f: F,
}

impl<F: Fn(&mut ChaCha8Rng) -> Vec<f64>> FnSampler<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnSampler { dim, f }
    }
}

impl<F: Fn(&mut ChaCha8Rng) -> Vec<f64>> PointSampler for FnSampler<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (self.f)(rng)
    }
}

/// Which test function of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Mu,
    Nu,
}

/// Paired dual coefficient vectors defining the behavioral test
/// functions `l_mu(x) = <p_mu, phi_mu(x)>` and `l_nu(y) = <p_nu, phi_nu(y)>`.
///
/// Single-writer: concurrent sample generation is fine, but
/// [`DualPotentials::sgd_step`] applications must be serialized.
/// Potentials persist across outer optimization iterations so solver
/// calls warm-start from the previous state.
#[derive(Debug, Clone)]
pub struct DualPotentials {
    p_mu: Vec<f64>,
    p_nu: Vec<f64>,
    map_mu: FeatureMap,
    map_nu: FeatureMap,
    gamma: f64,
    alpha: f64,
    t: u64,
    saturations: u64,
}

impl DualPotentials {
    /// Zero-initialized potentials. `gamma` and `alpha` must be positive;
    /// `gamma = 0` is served only by the exact oracles.
    pub fn new(map_mu: FeatureMap, map_nu: FeatureMap, gamma: f64, alpha: f64) -> Result<DualPotentials> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid("smoothed solver requires gamma > 0"));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid("dual step scale alpha must be positive"));
        }
        let p_mu = vec![0.0; map_mu.num_features()];
        let p_nu = vec![0.0; map_nu.num_features()];
        Ok(DualPotentials {
            p_mu,
            p_nu,
            map_mu,
            map_nu,
            gamma,
            alpha,
            t: 0,
            saturations: 0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Number of clamped exponents seen by `sgd_step` so far.
    pub fn saturation_count(&self) -> u64 {
        self.saturations
    }

    pub fn reset_saturations(&mut self) {
        self.saturations = 0;
    }

    pub fn coefficients(&self, side: Side) -> &[f64] {
        match side {
            Side::Mu => &self.p_mu,
            Side::Nu => &self.p_nu,
        }
    }

    pub fn set_coefficients(&mut self, side: Side, coeffs: Vec<f64>) -> Result<()> {
        let expected = self.feature_map(side).num_features();
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: coeffs.len(),
            });
        }
        match side {
            Side::Mu => self.p_mu = coeffs,
            Side::Nu => self.p_nu = coeffs,
        }
        Ok(())
    }

    pub fn feature_map(&self, side: Side) -> &FeatureMap {
        match side {
            Side::Mu => &self.map_mu,
            Side::Nu => &self.map_nu,
        }
    }

    /// Evaluates the behavioral test function `<p_side, phi_side(x)>`.
    pub fn test_fn(&self, side: Side, x: &[f64]) -> Result<f64> {
        let phi = self.feature_map(side).eval(x)?;
        Ok(dot(self.coefficients(side), &phi))
    }

    /// Gradient of the test function value with respect to the
    /// embedding point, `d lambda(x) / d x`. Used for pathwise
    /// gradients through differentiable embeddings.
    pub fn test_fn_input_grad(&self, side: Side, x: &[f64]) -> Result<Vec<f64>> {
        let map = self.feature_map(side);
        if x.len() != map.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: map.input_dim(),
                got: x.len(),
            });
        }
        // lambda(x) = sum_i p_i sqrt(2/m) cos(<G_i, x> + b_i)
        // d/dx = -sum_i p_i sqrt(2/m) sin(<G_i, x> + b_i) G_i
        Ok(map.eval_input_grad(x, self.coefficients(side)))
    }

    /// `F(p_mu, p_nu, x, y) = exp((l_mu(x) - l_nu(y) - C(x, y)) / gamma)`
    /// with the exponent clamped to `[-EXP_CLAMP, EXP_CLAMP]`.
    pub fn soft_constraint(&self, x: &[f64], y: &[f64], cost: CostFn) -> Result<f64> {
        let lx = self.test_fn(Side::Mu, x)?;
        let ly = self.test_fn(Side::Nu, y)?;
        Ok(clamped_exp((lx - ly - cost.eval(x, y)) / self.gamma).0)
    }

    /// One stochastic ascent step on the dual objective from a fresh
    /// sample pair `(x, y) ~ mu (x) nu`:
    ///
    /// ```text
    /// F = exp((l_mu(x) - l_nu(y) - C(x, y)) / gamma)
    /// (p_mu, p_nu) += alpha / sqrt(t + 1) * (1 - F) * (phi_mu(x), -phi_nu(y))
    /// ```
    ///
    /// and increments `t`. Clamped exponents are counted in the
    /// saturation diagnostic.
    pub fn sgd_step(&mut self, x: &[f64], y: &[f64], cost: CostFn) -> Result<()> {
        let phi_x = self.map_mu.eval(x)?;
        let phi_y = self.map_nu.eval(y)?;
        self.sgd_step_features(&phi_x, &phi_y, cost.eval(x, y));
        Ok(())
    }

    /// Same step given precomputed features and cost (hot path for
    /// empirical clouds whose features are evaluated once).
    pub fn sgd_step_features(&mut self, phi_x: &[f64], phi_y: &[f64], cost_xy: f64) {
        let lx = dot(&self.p_mu, phi_x);
        let ly = dot(&self.p_nu, phi_y);
        let (f, saturated) = clamped_exp((lx - ly - cost_xy) / self.gamma);
        if saturated {
            self.saturations += 1;
        }
        let rate = self.alpha / ((self.t + 1) as f64).sqrt();
        let scale = rate * (1.0 - f);
        for (p, phi) in self.p_mu.iter_mut().zip(phi_x) {
            *p += scale * phi;
        }
        for (p, phi) in self.p_nu.iter_mut().zip(phi_y) {
            *p -= scale * phi;
        }
        self.t += 1;
    }

    /// Sampled dual objective (the smoothed-distance estimator): the
    /// empirical mean over pairs `(x_i, y_i) ~ mu (x) nu` of
    /// `l_mu(x_i) - l_nu(y_i) - gamma * F(x_i, y_i)`.
    pub fn estimate_pairs(&self, xs: &[Vec<f64>], ys: &[Vec<f64>], cost: CostFn) -> Result<f64> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid("estimator needs k >= 1 sample pairs"));
        }
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let lx = self.test_fn(Side::Mu, x)?;
            let ly = self.test_fn(Side::Nu, y)?;
            let (f, _) = clamped_exp((lx - ly - cost.eval(x, y)) / self.gamma);
            total += lx - ly - self.gamma * f;
        }
        Ok(total / xs.len() as f64)
    }

    /// Same estimator taken exactly over the product of two empirical
    /// distributions (weighted double sum instead of sampled pairs).
    pub fn estimate_product(
        &self,
        mu: &EmpiricalEmbedding,
        nu: &EmpiricalEmbedding,
        cost: CostFn,
    ) -> Result<f64> {
        let lx: Vec<f64> = mu
            .points()
            .iter()
            .map(|p| self.test_fn(Side::Mu, p))
            .collect::<Result<_>>()?;
        let ly: Vec<f64> = nu
            .points()
            .iter()
            .map(|p| self.test_fn(Side::Nu, p))
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for (i, (x, wx)) in mu.points().iter().zip(mu.weights()).enumerate() {
            for (j, (y, wy)) in nu.points().iter().zip(nu.weights()).enumerate() {
                let (f, _) = clamped_exp((lx[i] - ly[j] - cost.eval(x, y)) / self.gamma);
                total += wx * wy * (lx[i] - ly[j] - self.gamma * f);
            }
        }
        Ok(total)
    }
}

/// Runs `steps` iterations of the stochastic dual ascent on fresh
/// sample pairs from `mu (x) nu`. Deterministic given `seed`; the
/// potentials' existing state is the warm start.
pub fn wd_solve(
    pot: &mut DualPotentials,
    mu: &dyn PointSampler,
    nu: &dyn PointSampler,
    cost: CostFn,
    steps: usize,
    seed: u64,
) -> Result<()> {
    if steps == 0 {
        return Err(Error::invalid("wd_solve requires at least one step"));
    }
    let mut rng = rng::stream(rng::derive_seed(seed, "wd.solve", pot.t));
    for _ in 0..steps {
        let x = mu.sample_point(&mut rng);
        let y = nu.sample_point(&mut rng);
        pot.sgd_step(&x, &y, cost)?;
    }
    Ok(())
}

/// Solver specialization for empirical clouds: features of every
/// support point are evaluated once, then steps cost `O(m)` each.
pub fn wd_solve_empirical(
    pot: &mut DualPotentials,
    mu: &EmpiricalEmbedding,
    nu: &EmpiricalEmbedding,
    cost: CostFn,
    steps: usize,
    seed: u64,
) -> Result<()> {
    if steps == 0 {
        return Err(Error::invalid("wd_solve requires at least one step"));
    }
    let feats_mu: Vec<Vec<f64>> = mu
        .points()
        .iter()
        .map(|p| pot.map_mu.eval(p))
        .collect::<Result<_>>()?;
    let feats_nu: Vec<Vec<f64>> = nu
        .points()
        .iter()
        .map(|p| pot.map_nu.eval(p))
        .collect::<Result<_>>()?;
    let mut rng = rng::stream(rng::derive_seed(seed, "wd.solve", pot.t));
    for _ in 0..steps {
        let i = sample_index(mu.weights(), &mut rng);
        let j = sample_index(nu.weights(), &mut rng);
        let c = cost.eval(&mu.points()[i], &nu.points()[j]);
        pot.sgd_step_features(&feats_mu[i], &feats_nu[j], c);
    }
    Ok(())
}

/// Reference-measure choice for the damping (soft-constraint) term.
pub enum DampingSpec<'a> {
    /// `xi = mu (x) nu`, estimated by Monte Carlo over the given
    /// sample pairs.
    ProductMeasure {
        xs: &'a [Vec<f64>],
        ys: &'a [Vec<f64>],
    },
    /// Uniform over `E x E` for a finite enumerated embedding space,
    /// each pair weighted `1/|E|^2`.
    UniformDiscrete { space: &'a [Vec<f64>] },
}

/// The damping term `E_C = gamma * E_xi[exp((l_mu(x) - l_nu(y) - C(x, y)) / gamma)]`,
/// with exponents clamped as in the solver step.
pub fn damping_penalty(pot: &DualPotentials, spec: &DampingSpec, cost: CostFn) -> Result<f64> {
    match spec {
        DampingSpec::ProductMeasure { xs, ys } => {
            if xs.is_empty() || xs.len() != ys.len() {
                return Err(Error::invalid("product-measure damping needs paired samples"));
            }
            let mut total = 0.0;
            for (x, y) in xs.iter().zip(*ys) {
                total += pot.soft_constraint(x, y, cost)?;
            }
            Ok(pot.gamma * total / xs.len() as f64)
        }
        DampingSpec::UniformDiscrete { space } => {
            if space.is_empty() {
                return Err(Error::EmptyDistribution("damping enumeration"));
            }
            let mut total = 0.0;
            for x in *space {
                for y in *space {
                    total += pot.soft_constraint(x, y, cost)?;
                }
            }
            Ok(pot.gamma * total / (space.len() * space.len()) as f64)
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp` of the clamped argument plus whether clamping fired.
pub(crate) fn clamped_exp(arg: f64) -> (f64, bool) {
    if arg > EXP_CLAMP {
        (EXP_CLAMP.exp(), true)
    } else if arg < -EXP_CLAMP {
        ((-EXP_CLAMP).exp(), true)
    } else {
        (arg.exp(), false)
    }
}

pub(crate) fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u = rng::uniform(rng);
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
