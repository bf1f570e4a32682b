//! Joint repulsion (or attraction) learning for a pair of policies.
//!
//! Both policies collect trajectory batches; each is updated by a
//! REINFORCE step on a surrogate reward mixing the task reward with
//! behavioral test-function scores over paired samples:
//!
//! ```text
//! R~_a(t1, t2) = R(t1) + beta * l1(Phi(t1)) + beta * gamma * exp((l1 - l2 - C)/gamma)
//! R~_b(t1, t2) = R(t2) - beta * l2(Phi(t2)) + beta * gamma * exp((l1 - l2 - C)/gamma)
//! ```
//!
//! `beta > 0` drives the two behavior distributions apart, `beta < 0`
//! pulls them together. The test functions then take dual steps on the
//! same paired samples.

use super::{mean_and_std, IterationRecord, RegularizedObjectiveCfg};
use crate::embed::{embedding_distribution, Bem};
use crate::envsim::{rollout_batch, Env};
use crate::error::Result;
use crate::policy::{Policy, PolicyParams};
use crate::rff::FeatureMap;
use crate::rng;
use crate::transport::{clamped_exp, wd_solve_empirical, CostFn, DualPotentials, Side};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct RepulsionState {
    pub policy_a: PolicyParams,
    pub policy_b: PolicyParams,
    pub pot: DualPotentials,
    pub iter: usize,
}

impl RepulsionState {
    pub fn new(
        policy_a: PolicyParams,
        policy_b: PolicyParams,
        env: &Env,
        bem: &Bem,
        cfg: &RegularizedObjectiveCfg,
        seed: u64,
    ) -> Result<RepulsionState> {
        cfg.validate()?;
        let dim = bem.output_dim(env.state_dim(), env.action_dim(), env.horizon());
        let map_mu = FeatureMap::new(dim, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "rep.map.mu", 0))?;
        let map_nu = FeatureMap::new(dim, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "rep.map.nu", 0))?;
        let pot = DualPotentials::new(map_mu, map_nu, cfg.gamma, cfg.alpha_dual)?;
        Ok(RepulsionState {
            policy_a,
            policy_b,
            pot,
            iter: 0,
        })
    }
}

/// One joint iteration; both policies and the potential pair advance.
#[allow(clippy::too_many_arguments)]
pub fn repulsion_step(
    state: &mut RepulsionState,
    env: &Env,
    bem: &Bem,
    cfg: &RegularizedObjectiveCfg,
    cost: CostFn,
    batch: usize,
    eta: f64,
    seed: u64,
) -> Result<IterationRecord> {
    let start = Instant::now();
    cfg.validate()?;
    if batch < 2 {
        return Err(crate::Error::invalid("repulsion needs a batch of >= 2"));
    }
    let iter_seed = rng::derive_seed(seed, "rep.iter", state.iter as u64);

    // 1. Batches for both policies.
    let wrapped_a = Policy::Gaussian(state.policy_a.clone());
    let wrapped_b = Policy::Gaussian(state.policy_b.clone());
    let policies_a: Vec<&Policy> = (0..batch).map(|_| &wrapped_a).collect();
    let policies_b: Vec<&Policy> = (0..batch).map(|_| &wrapped_b).collect();
    let taus_a = rollout_batch(env, &policies_a, rng::derive_seed(iter_seed, "rep.roll.a", 0))?;
    let taus_b = rollout_batch(env, &policies_b, rng::derive_seed(iter_seed, "rep.roll.b", 0))?;

    let points_a: Vec<Vec<f64>> = taus_a.iter().map(|t| bem.embed(t)).collect::<Result<_>>()?;
    let points_b: Vec<Vec<f64>> = taus_b.iter().map(|t| bem.embed(t)).collect::<Result<_>>()?;
    let lam1: Vec<f64> = points_a
        .iter()
        .map(|p| state.pot.test_fn(Side::Mu, p))
        .collect::<Result<_>>()?;
    let lam2: Vec<f64> = points_b
        .iter()
        .map(|p| state.pot.test_fn(Side::Nu, p))
        .collect::<Result<_>>()?;
    let rewards_a: Vec<f64> = taus_a.iter().map(|t| t.total_reward()).collect();
    let rewards_b: Vec<f64> = taus_b.iter().map(|t| t.total_reward()).collect();

    // 2. Surrogate rewards over the paired empirical product. For the
    // REINFORCE weight of one trajectory, the partner trajectory
    // averages out: w_a(i) = mean_j R~_a(i, j).
    let mut damp = vec![vec![0.0; batch]; batch];
    for i in 0..batch {
        for j in 0..batch {
            let c = cost.eval(&points_a[i], &points_b[j]);
            let (f, _) = clamped_exp((lam1[i] - lam2[j] - c) / cfg.gamma);
            damp[i][j] = cfg.gamma * f;
        }
    }
    let w_a: Vec<f64> = (0..batch)
        .map(|i| {
            let mean_damp: f64 = damp[i].iter().sum::<f64>() / batch as f64;
            rewards_a[i] + cfg.beta * lam1[i] + cfg.beta * mean_damp
        })
        .collect();
    let w_b: Vec<f64> = (0..batch)
        .map(|j| {
            let mean_damp: f64 = (0..batch).map(|i| damp[i][j]).sum::<f64>() / batch as f64;
            rewards_b[j] - cfg.beta * lam2[j] + cfg.beta * mean_damp
        })
        .collect();

    // 3. REINFORCE with a mean baseline (keeps the estimator unbiased;
    // the expected update is unchanged by the score identity).
    let (base_a, _) = mean_and_std(&w_a);
    let (base_b, _) = mean_and_std(&w_b);
    let mut grad_a = vec![0.0; state.policy_a.theta().len()];
    let mut grad_b = vec![0.0; state.policy_b.theta().len()];
    for i in 0..batch {
        let score = super::score_sum(&wrapped_a, &taus_a[i])?;
        super::axpy(&mut grad_a, (w_a[i] - base_a) / batch as f64, &score);
    }
    for j in 0..batch {
        let score = super::score_sum(&wrapped_b, &taus_b[j])?;
        super::axpy(&mut grad_b, (w_b[j] - base_b) / batch as f64, &score);
    }
    for (t, g) in state.policy_a.theta_mut().iter_mut().zip(&grad_a) {
        *t += eta * g;
    }
    for (t, g) in state.policy_b.theta_mut().iter_mut().zip(&grad_b) {
        *t += eta * g;
    }

    // 4. Dual updates on the same paired samples.
    let cloud_a = embedding_distribution(bem, &taus_a)?;
    let cloud_b = embedding_distribution(bem, &taus_b)?;
    let sat_before = state.pot.saturation_count();
    if cfg.warm_start_steps > 0 {
        wd_solve_empirical(
            &mut state.pot,
            &cloud_a,
            &cloud_b,
            cost,
            cfg.warm_start_steps,
            rng::derive_seed(iter_seed, "rep.dual", 0),
        )?;
    }

    let all_rewards: Vec<f64> = rewards_a.iter().chain(&rewards_b).copied().collect();
    let (mean_reward, reward_std) = mean_and_std(&all_rewards);
    let wd_estimate = state.pot.estimate_product(&cloud_a, &cloud_b, cost)?;
    state.iter += 1;
    Ok(IterationRecord {
        iter: state.iter - 1,
        mean_reward,
        reward_std,
        wd_estimate,
        dual_objective: wd_estimate,
        saturations: state.pot.saturation_count() - sat_before,
        ratio_clips: 0,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Mean first-coordinate displacement of a policy's behavior,
/// estimated from fresh rollouts. Used to read out which goal each
/// repulsion policy settled on.
pub fn mean_x_displacement(env: &Env, policy: &PolicyParams, rollouts: usize, seed: u64) -> Result<f64> {
    let wrapped = Policy::Gaussian(policy.clone());
    let policies: Vec<&Policy> = (0..rollouts).map(|_| &wrapped).collect();
    let taus = rollout_batch(env, &policies, seed)?;
    let bem = Bem::MeanXDisplacement;
    let mut total = 0.0;
    for tau in &taus {
        total += bem.embed(tau)?[0];
    }
    Ok(total / rollouts as f64)
}
