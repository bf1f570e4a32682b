//! Comparison regularizers: vanilla ES, Euclidean novelty on mean
//! embeddings, and histogram divergences (KL, JS, Hellinger, TV)
//! between embedding samples.
//!
//! Likelihood ratios between embedding pushforwards are generally
//! unavailable, so the divergences are estimated from epsilon-smoothed
//! normalized histograms; the smoothing keeps KL finite when supports
//! do not overlap.

use crate::algo::{es_direction, es_population, IterationRecord};
use crate::embed::Bem;
use crate::envsim::Env;
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::rng;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceKind {
    KL,
    JS,
    Hellinger,
    TV,
}

impl DivergenceKind {
    pub fn parse(s: &str) -> Result<DivergenceKind> {
        match s {
            "kl" => Ok(DivergenceKind::KL),
            "js" => Ok(DivergenceKind::JS),
            "hellinger" => Ok(DivergenceKind::Hellinger),
            "tv" => Ok(DivergenceKind::TV),
            other => Err(Error::invalid(format!(
                "unknown divergence '{other}' (expected kl, js, hellinger or tv)"
            ))),
        }
    }
}

/// Binned divergence estimator configuration.
#[derive(Debug, Clone)]
pub struct HistogramDivergenceCfg {
    pub kind: DivergenceKind,
    /// Bins per dimension.
    pub bins: usize,
    /// Per-dimension (lo, hi) ranges; out-of-range samples clip into
    /// the edge bins.
    pub range: Vec<(f64, f64)>,
    /// Additive smoothing mass per cell (> 0 so KL is well defined).
    pub epsilon: f64,
}

impl HistogramDivergenceCfg {
    pub fn new(kind: DivergenceKind, bins: usize, range: Vec<(f64, f64)>, epsilon: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::invalid("histogram needs bins >= 2"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid("histogram smoothing epsilon must be > 0"));
        }
        if range.is_empty() || range.iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(Error::invalid("histogram ranges must be nonempty with hi > lo"));
        }
        Ok(HistogramDivergenceCfg { kind, bins, range, epsilon })
    }

    fn cell_count(&self) -> usize {
        self.bins.pow(self.range.len() as u32)
    }

    fn cell_of(&self, sample: &[f64]) -> usize {
        let mut cell = 0;
        for (d, (lo, hi)) in self.range.iter().enumerate() {
            let t = ((sample[d] - lo) / (hi - lo) * self.bins as f64).floor();
            let idx = (t as isize).clamp(0, self.bins as isize - 1) as usize;
            cell = cell * self.bins + idx;
        }
        cell
    }

    fn smoothed_histogram(&self, samples: &[Vec<f64>]) -> Vec<f64> {
        let cells = self.cell_count();
        let mut h = vec![0.0; cells];
        for s in samples {
            h[self.cell_of(s)] += 1.0;
        }
        let total: f64 = samples.len() as f64;
        let denom = 1.0 + cells as f64 * self.epsilon;
        for v in h.iter_mut() {
            *v = (*v / total + self.epsilon) / denom;
        }
        h
    }
}

/// Divergence between the epsilon-smoothed histograms of two sample
/// sets. KL and JS use natural logs; Hellinger is the squared variant.
pub fn histogram_divergence(
    cfg: &HistogramDivergenceCfg,
    samples_a: &[Vec<f64>],
    samples_b: &[Vec<f64>],
) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::EmptyDistribution("histogram samples"));
    }
    let dim = cfg.range.len();
    if samples_a.iter().chain(samples_b).any(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: samples_a[0].len(),
        });
    }
    let p = cfg.smoothed_histogram(samples_a);
    let q = cfg.smoothed_histogram(samples_b);
    Ok(match cfg.kind {
        DivergenceKind::KL => kl(&p, &q),
        DivergenceKind::JS => {
            let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
            0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)
        }
        DivergenceKind::Hellinger => {
            // Squared Hellinger: 1 - sum sqrt(p q).
            1.0 - p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).sum::<f64>()
        }
        DivergenceKind::TV => 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>(),
    })
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

/// Novelty signal for the ES baselines.
#[derive(Debug, Clone)]
pub enum EsNovelty {
    /// Plain evolution strategies: centered reward only.
    None,
    /// Euclidean distance between mean embeddings (deterministic
    /// behavior-characterization novelty).
    Euclidean,
    /// Histogram divergence between embedding samples.
    Histogram(HistogramDivergenceCfg),
}

/// ES baseline loop state.
#[derive(Debug, Clone)]
pub struct EsBaselineState {
    pub policy: PolicyParams,
    pub iter: usize,
}

impl EsBaselineState {
    pub fn new(policy: PolicyParams) -> EsBaselineState {
        EsBaselineState { policy, iter: 0 }
    }
}

/// One ES iteration with the configured novelty signal standing in for
/// the smoothed-distance score. `EsNovelty::None` ignores `beta` and
/// reduces to vanilla ES, which by the update formula equals the
/// behavior-guided step at `beta = 0`.
#[allow(clippy::too_many_arguments)]
pub fn es_step_with_divergence(
    state: &mut EsBaselineState,
    env: &Env,
    bem: &Bem,
    novelty: &EsNovelty,
    n_perturbations: usize,
    sigma: f64,
    eta: f64,
    beta: f64,
    seed: u64,
) -> Result<IterationRecord> {
    let start = Instant::now();
    if n_perturbations < 2 {
        return Err(Error::invalid("ES needs at least 2 perturbations"));
    }
    let iter_seed = rng::derive_seed(seed, "bges.iter", state.iter as u64);
    let (eps, taus, rewards) = es_population(&state.policy, env, n_perturbations, sigma, iter_seed)?;
    let baseline_reward = rewards[n_perturbations];

    let current_point = bem.embed(&taus[n_perturbations])?;
    let mut scores = vec![0.0; n_perturbations];
    let mut beta_eff = beta;
    match novelty {
        EsNovelty::None => beta_eff = 0.0,
        EsNovelty::Euclidean => {
            for (k, tau) in taus[..n_perturbations].iter().enumerate() {
                let p = bem.embed(tau)?;
                scores[k] = p
                    .iter()
                    .zip(&current_point)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
        }
        EsNovelty::Histogram(cfg) => {
            let cur = std::slice::from_ref(&current_point);
            for (k, tau) in taus[..n_perturbations].iter().enumerate() {
                let p = bem.embed(tau)?;
                scores[k] = histogram_divergence(cfg, std::slice::from_ref(&p), cur)?;
            }
        }
    }

    let grad = es_direction(&eps, &rewards[..n_perturbations], baseline_reward, &scores, beta_eff, sigma);
    for (t, g) in state.policy.theta_mut().iter_mut().zip(&grad) {
        *t += eta * g;
    }

    let (mean_reward, reward_std) = crate::algo::mean_and_std(&rewards[..n_perturbations]);
    let (score_mean, _) = crate::algo::mean_and_std(&scores);
    state.iter += 1;
    Ok(IterationRecord {
        iter: state.iter - 1,
        mean_reward,
        reward_std,
        wd_estimate: score_mean,
        dual_objective: 0.0,
        saturations: 0,
        ratio_clips: 0,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
