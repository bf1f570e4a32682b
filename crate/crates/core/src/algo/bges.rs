//! Behavior-guided evolution strategies.
//!
//! Each iteration rolls out `n` Gaussian-perturbed copies of the
//! current policy, scores every perturbation by a mix of centered
//! reward and a smoothed-distance estimate against a base behavior
//! distribution, and ascends
//!
//! ```text
//! grad = (1/sigma) * sum_k [ (1 - beta) (R_k - R_t) + beta * WD_k ] eps_k
//! ```
//!
//! With `beta > 0` the distance term repels the search from the base
//! behaviors (novelty); with `beta < 0` and an expert base it attracts
//! (imitation).

use super::{mean_and_std, IterationRecord, RegularizedObjectiveCfg};
use crate::embed::{embedding_distribution, Bem};
use crate::envsim::{rollout_batch, Env};
use crate::error::Result;
use crate::policy::{Policy, PolicyParams};
use crate::rff::FeatureMap;
use crate::rng;
use crate::transport::{wd_solve_empirical, CostFn, DualPotentials, EmpiricalEmbedding};
use std::collections::VecDeque;
use std::time::Instant;

/// What the behavioral distance is measured against.
#[derive(Debug, Clone)]
pub enum BgesBase {
    /// The embedding clouds of the last `base_policy_window` iterations'
    /// perturbed populations.
    PreviousPolicies,
    /// A fixed expert embedding distribution (imitation).
    Expert(EmpiricalEmbedding),
}

/// Loop state carried across iterations.
#[derive(Debug, Clone)]
pub struct BgesState {
    pub policy: PolicyParams,
    pub pot: DualPotentials,
    /// Embedding clouds of previous iterations' populations, newest last.
    prev_clouds: VecDeque<EmpiricalEmbedding>,
    pub iter: usize,
}

impl BgesState {
    /// Initializes potentials and seeds the base window with the
    /// initial policy's own embedding.
    pub fn new(
        policy: PolicyParams,
        env: &Env,
        bem: &Bem,
        cfg: &RegularizedObjectiveCfg,
        seed: u64,
    ) -> Result<BgesState> {
        cfg.validate()?;
        let dim = bem.output_dim(env.state_dim(), env.action_dim(), env.horizon());
        let map_mu = FeatureMap::new(dim, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "bges.map.mu", 0))?;
        let map_nu = FeatureMap::new(dim, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "bges.map.nu", 0))?;
        let pot = DualPotentials::new(map_mu, map_nu, cfg.gamma, cfg.alpha_dual)?;
        let wrapped = Policy::Gaussian(policy.clone());
        let tau = crate::envsim::rollout(env, &wrapped, rng::derive_seed(seed, "bges.init", 0))?;
        let cloud = embedding_distribution(bem, std::slice::from_ref(&tau))?;
        let mut prev_clouds = VecDeque::new();
        prev_clouds.push_back(cloud);
        Ok(BgesState {
            policy,
            pot,
            prev_clouds,
            iter: 0,
        })
    }

    /// Union of the windowed base clouds.
    fn base_cloud(&self) -> Result<EmpiricalEmbedding> {
        let parts: Vec<&EmpiricalEmbedding> = self.prev_clouds.iter().collect();
        EmpiricalEmbedding::union_uniform(&parts)
    }
}

/// Draws the perturbation directions and rolls out the population plus
/// the unperturbed policy. Index `n` of the returned trajectories is
/// the unperturbed one. Shared by the behavior-guided step and the
/// divergence baselines so both see identical randomness.
pub fn es_population(
    policy: &PolicyParams,
    env: &Env,
    n_perturbations: usize,
    sigma: f64,
    iter_seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<crate::envsim::Trajectory>, Vec<f64>)> {
    let theta_len = policy.theta().len();
    let mut eps_rng = rng::stream(rng::derive_seed(iter_seed, "bges.eps", 0));
    let eps: Vec<Vec<f64>> = (0..n_perturbations)
        .map(|_| rng::standard_normal_vec(&mut eps_rng, theta_len))
        .collect();
    let perturbed: Vec<Policy> = eps
        .iter()
        .map(|e| policy.perturb(sigma, e).map(Policy::Gaussian))
        .collect::<Result<_>>()?;
    let mut all: Vec<&Policy> = perturbed.iter().collect();
    let unperturbed = Policy::Gaussian(policy.clone());
    all.push(&unperturbed);
    let taus = rollout_batch(env, &all, rng::derive_seed(iter_seed, "bges.roll", 0))?;
    let rewards: Vec<f64> = taus.iter().map(|t| t.total_reward()).collect();
    Ok((eps, taus, rewards))
}

/// The ES ascent direction
/// `(1/sigma) sum_k [(1 - beta)(R_k - R_t) + beta * score_k] eps_k`.
/// Adding one constant to every reward and the baseline leaves it
/// unchanged exactly.
pub fn es_direction(
    eps: &[Vec<f64>],
    rewards: &[f64],
    baseline: f64,
    scores: &[f64],
    beta: f64,
    sigma: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; eps[0].len()];
    for (k, e) in eps.iter().enumerate() {
        let weight = (1.0 - beta) * (rewards[k] - baseline) + beta * scores[k];
        for (g, ek) in grad.iter_mut().zip(e) {
            *g += weight * ek / sigma;
        }
    }
    grad
}

/// One outer iteration. Returns the per-iteration record; the state's
/// policy, potentials and base window advance in place.
pub fn bges_step(
    state: &mut BgesState,
    env: &Env,
    bem: &Bem,
    cfg: &RegularizedObjectiveCfg,
    cost: CostFn,
    n_perturbations: usize,
    sigma: f64,
    eta: f64,
    base: &BgesBase,
    seed: u64,
) -> Result<IterationRecord> {
    let start = Instant::now();
    cfg.validate()?;
    if n_perturbations < 2 {
        return Err(crate::Error::invalid("BGES needs at least 2 perturbations"));
    }
    let iter_seed = rng::derive_seed(seed, "bges.iter", state.iter as u64);

    // (i)-(ii) perturbation directions, population and baseline rollouts
    let (eps, taus, rewards) = es_population(&state.policy, env, n_perturbations, sigma, iter_seed)?;
    let baseline_reward = rewards[n_perturbations];

    // Embeddings: one point per perturbation, one for the baseline.
    let population_cloud = embedding_distribution(bem, &taus[..n_perturbations])?;
    let current_point = embedding_distribution(bem, std::slice::from_ref(&taus[n_perturbations]))?;

    // (iii) dual updates: mu = the windowed past populations, nu = this
    // population (or the fixed expert cloud when imitating).
    let mu_cloud = state.base_cloud()?;
    let nu_cloud = match base {
        BgesBase::PreviousPolicies => population_cloud.clone(),
        BgesBase::Expert(e) => e.clone(),
    };
    let sat_before = state.pot.saturation_count();
    if cfg.warm_start_steps > 0 {
        wd_solve_empirical(
            &mut state.pot,
            &mu_cloud,
            &nu_cloud,
            cost,
            cfg.warm_start_steps,
            rng::derive_seed(iter_seed, "bges.dual", 0),
        )?;
    }

    // (iv) per-perturbation smoothed-distance estimates: each
    // perturbation's own rollout paired with the estimation base (the
    // unperturbed rollout, or the expert embedding for imitation).
    let estimate_base = match base {
        BgesBase::PreviousPolicies => &current_point,
        BgesBase::Expert(e) => e,
    };
    let mut wd_estimates = Vec::with_capacity(n_perturbations);
    for tau in &taus[..n_perturbations] {
        let point = embedding_distribution(bem, std::slice::from_ref(tau))?;
        wd_estimates.push(state.pot.estimate_product(&point, estimate_base, cost)?);
    }

    // (v) the ES ascent direction, exactly as written.
    let grad = es_direction(&eps, &rewards[..n_perturbations], baseline_reward, &wd_estimates, cfg.beta, sigma);
    {
        let theta = state.policy.theta_mut();
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t += eta * g;
        }
    }

    // Advance the base window (imitation also tracks its own
    // population: it is the mu side the potentials train against).
    state.prev_clouds.push_back(population_cloud);
    while state.prev_clouds.len() > cfg.base_policy_window {
        state.prev_clouds.pop_front();
    }

    let (mean_reward, reward_std) = mean_and_std(&rewards[..n_perturbations]);
    let (wd_mean, _) = mean_and_std(&wd_estimates);
    let dual_objective = state.pot.estimate_product(&mu_cloud, &nu_cloud, cost)?;
    state.iter += 1;
    Ok(IterationRecord {
        iter: state.iter - 1,
        mean_reward,
        reward_std,
        wd_estimate: wd_mean,
        dual_objective,
        saturations: state.pot.saturation_count() - sat_before,
        ratio_clips: 0,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Imitation learning: BGES with the base distribution fixed to an
/// expert's embedding and an attracting weight (`beta < 0`). Only the
/// embedded trajectories of the expert are consumed, never its
/// parameters.
#[allow(clippy::too_many_arguments)]
pub fn imitation_run(
    policy: PolicyParams,
    env: &Env,
    bem: &Bem,
    cfg: &RegularizedObjectiveCfg,
    cost: CostFn,
    expert: EmpiricalEmbedding,
    n_perturbations: usize,
    sigma: f64,
    eta: f64,
    iterations: usize,
    seed: u64,
) -> Result<(BgesState, Vec<IterationRecord>)> {
    if cfg.beta >= 0.0 {
        return Err(crate::Error::invalid("imitation requires beta < 0"));
    }
    let mut state = BgesState::new(policy, env, bem, cfg, seed)?;
    let base = BgesBase::Expert(expert);
    let mut records = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        records.push(bges_step(
            &mut state,
            env,
            bem,
            cfg,
            cost,
            n_perturbations,
            sigma,
            eta,
            &base,
            seed,
        )?);
    }
    Ok((state, records))
}
