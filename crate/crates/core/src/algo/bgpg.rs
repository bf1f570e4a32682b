//! Behavior-guided policy gradient: a Wasserstein trust region.
//!
//! Each outer iteration collects a batch under the previous policy,
//! estimates advantages, then runs several inner rounds alternating
//! (a) fresh rollouts of the current policy, (b) an ascent step on the
//! surrogate-plus-distance objective, and (c) dual updates of the test
//! functions on samples from the previous-by-current product.
//!
//! The distance term follows the pairing mu = previous policy,
//! nu = current policy: trajectories of the current policy are scored
//! by the nu-side test function (score-function gradient on-policy,
//! pathwise through the policy head off-policy), and the damping term
//! `beta * gamma * exp((l_mu - l_nu - C) / gamma)` contributes through
//! the same estimators.

use super::{advantage_estimates, axpy, mean_and_std, score_sum, IterationRecord, RegularizedObjectiveCfg};
use crate::embed::{embedding_distribution, Bem, ProbeDistribution};
use crate::envsim::{rollout, Env, Trajectory};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rff::FeatureMap;
use crate::rng;
use crate::transport::{clamped_exp, wd_solve_empirical, CostFn, DualPotentials, EmpiricalEmbedding, Side};
use std::time::Instant;

const RATIO_CLIP: f64 = 1e3;

/// Loop state carried across outer iterations.
#[derive(Debug, Clone)]
pub struct BgpgState {
    pub policy: Policy,
    pub pot: DualPotentials,
    pub iter: usize,
    /// Off-policy probe buffer (filled lazily by the off-policy step).
    pub probe: Option<ProbeDistribution>,
}

impl BgpgState {
    pub fn new(
        policy: Policy,
        embedding_dim: usize,
        cfg: &RegularizedObjectiveCfg,
        seed: u64,
    ) -> Result<BgpgState> {
        cfg.validate()?;
        let map_mu = FeatureMap::new(
            embedding_dim,
            cfg.rff_features,
            cfg.rff_sigma,
            rng::derive_seed(seed, "bgpg.map.mu", 0),
        )?;
        let map_nu = FeatureMap::new(
            embedding_dim,
            cfg.rff_features,
            cfg.rff_sigma,
            rng::derive_seed(seed, "bgpg.map.nu", 0),
        )?;
        let pot = DualPotentials::new(map_mu, map_nu, cfg.gamma, cfg.alpha_dual)?;
        Ok(BgpgState {
            policy,
            pot,
            iter: 0,
            probe: None,
        })
    }

    /// Dimension helper for the on-policy variant.
    pub fn for_env(
        policy: Policy,
        env: &Env,
        bem: &Bem,
        cfg: &RegularizedObjectiveCfg,
        seed: u64,
    ) -> Result<BgpgState> {
        let dim = bem.output_dim(env.state_dim(), env.action_dim(), env.horizon());
        BgpgState::new(policy, dim, cfg, seed)
    }
}

/// Surrogate ascent direction `E[sum_i A_i ratio_i grad log pi(a_i|s_i)]`
/// over the collected batch, with ratio clipping counted.
fn surrogate_gradient(
    policy: &Policy,
    prev_logps: &[Vec<f64>],
    taus: &[Trajectory],
    advantages: &[Vec<f64>],
    clips: &mut u64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; policy.theta_len()];
    for (j, tau) in taus.iter().enumerate() {
        for (i, (s, a)) in tau.states.iter().zip(&tau.actions).enumerate() {
            let (logp, glogp) = policy.log_prob_grad(s, a)?;
            let mut ratio = (logp - prev_logps[j][i]).exp();
            if ratio > RATIO_CLIP {
                ratio = RATIO_CLIP;
                *clips += 1;
            }
            axpy(&mut grad, advantages[j][i] * ratio / taus.len() as f64, &glogp);
        }
    }
    Ok(grad)
}

/// One outer iteration with on-policy (trajectory) embeddings.
#[allow(clippy::too_many_arguments)]
pub fn bgpg_step_onpolicy(
    state: &mut BgpgState,
    env: &Env,
    bem: &Bem,
    cfg: &RegularizedObjectiveCfg,
    cost: CostFn,
    batch: usize,
    inner_rounds: usize,
    eta: f64,
    seed: u64,
) -> Result<IterationRecord> {
    let start = Instant::now();
    cfg.validate()?;
    if batch < 2 || inner_rounds == 0 {
        return Err(Error::invalid("BGPG needs batch >= 2 and inner_rounds >= 1"));
    }
    let iter_seed = rng::derive_seed(seed, "bgpg.iter", state.iter as u64);
    let prev_policy = state.policy.clone();

    // 1. Batch under the previous policy, advantages from reward-to-go
    //    minus the per-timestep batch mean.
    let taus: Vec<Trajectory> = (0..batch)
        .map(|j| rollout(env, &prev_policy, rng::derive_seed(iter_seed, "bgpg.prev", j as u64)))
        .collect::<Result<_>>()?;
    let advantages = advantage_estimates(&taus);
    let prev_logps: Vec<Vec<f64>> = taus
        .iter()
        .map(|tau| {
            tau.states
                .iter()
                .zip(&tau.actions)
                .map(|(s, a)| prev_policy.log_prob(s, a))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let prev_cloud = embedding_distribution(bem, &taus)?;
    let prev_points: Vec<Vec<f64>> = taus.iter().map(|t| bem.embed(t)).collect::<Result<_>>()?;

    let sat_before = state.pot.saturation_count();
    let mut clips = 0u64;
    let mut last_cloud = prev_cloud.clone();

    // 2. Inner alternating rounds.
    for round in 0..inner_rounds {
        // (a) fresh trajectories from the current policy
        let fresh: Vec<Trajectory> = (0..batch)
            .map(|j| {
                rollout(
                    env,
                    &state.policy,
                    rng::derive_seed(iter_seed, "bgpg.fresh", (round * batch + j) as u64),
                )
            })
            .collect::<Result<_>>()?;
        let fresh_points: Vec<Vec<f64>> = fresh.iter().map(|t| bem.embed(t)).collect::<Result<_>>()?;
        // mu-side values under the current potentials (they move every
        // round, so these cannot be hoisted out of the loop).
        let prev_lambda1: Vec<f64> = prev_points
            .iter()
            .map(|p| state.pot.test_fn(Side::Mu, p))
            .collect::<Result<_>>()?;

        // (b) ascent on surrogate + beta * (distance terms).
        let mut grad = surrogate_gradient(&state.policy, &prev_logps, &taus, &advantages, &mut clips)?;
        // Score-function gradient through the fresh trajectories:
        // weight_j = beta * (-l_nu(phi_j) + gamma * mean_i exp(...)).
        for (j, tau2) in fresh.iter().enumerate() {
            let l2 = state.pot.test_fn(Side::Nu, &fresh_points[j])?;
            let mut damp = 0.0;
            for (i, p1) in prev_points.iter().enumerate() {
                let c = cost.eval(p1, &fresh_points[j]);
                let (f, _) = clamped_exp((prev_lambda1[i] - l2 - c) / cfg.gamma);
                damp += f / prev_points.len() as f64;
            }
            let weight = cfg.beta * (-l2 + cfg.gamma * damp);
            let score = score_sum(&state.policy, tau2)?;
            axpy(&mut grad, weight / fresh.len() as f64, &score);
        }
        for (t, g) in state.policy.theta_mut().iter_mut().zip(&grad) {
            *t += eta * g;
        }

        // (c) dual updates on samples from previous x current.
        let fresh_cloud = embedding_distribution(bem, &fresh)?;
        wd_solve_empirical(
            &mut state.pot,
            &prev_cloud,
            &fresh_cloud,
            cost,
            cfg.dual_steps_per_iter,
            rng::derive_seed(iter_seed, "bgpg.dual", round as u64),
        )?;
        last_cloud = fresh_cloud;
    }

    let rewards: Vec<f64> = taus.iter().map(|t| t.total_reward()).collect();
    let (mean_reward, reward_std) = mean_and_std(&rewards);
    let wd_estimate = state.pot.estimate_product(&prev_cloud, &last_cloud, cost)?;
    state.iter += 1;
    Ok(IterationRecord {
        iter: state.iter - 1,
        mean_reward,
        reward_std,
        wd_estimate,
        dual_objective: wd_estimate,
        saturations: state.pot.saturation_count() - sat_before,
        ratio_clips: clips,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// One outer iteration with off-policy (probe state) embeddings: the
/// distance terms act on `[s ; mean_action(s)]` pairs for probe states,
/// and the current policy's term is differentiated pathwise through the
/// policy head instead of by the score function.
#[allow(clippy::too_many_arguments)]
pub fn bgpg_step_offpolicy(
    state: &mut BgpgState,
    env: &Env,
    cfg: &RegularizedObjectiveCfg,
    cost: CostFn,
    batch: usize,
    inner_rounds: usize,
    eta: f64,
    probe_capacity: usize,
    seed: u64,
) -> Result<IterationRecord> {
    let start = Instant::now();
    cfg.validate()?;
    if batch < 2 || inner_rounds == 0 {
        return Err(Error::invalid("BGPG needs batch >= 2 and inner_rounds >= 1"));
    }
    let Policy::Gaussian(_) = &state.policy else {
        return Err(Error::invalid("off-policy embeddings require a Gaussian policy"));
    };
    let iter_seed = rng::derive_seed(seed, "bgpg.iter", state.iter as u64);
    let prev_policy = state.policy.clone();

    // 1. Batch under the previous policy; fills the probe buffer.
    let taus: Vec<Trajectory> = (0..batch)
        .map(|j| rollout(env, &prev_policy, rng::derive_seed(iter_seed, "bgpg.prev", j as u64)))
        .collect::<Result<_>>()?;
    let advantages = advantage_estimates(&taus);
    let prev_logps: Vec<Vec<f64>> = taus
        .iter()
        .map(|tau| {
            tau.states
                .iter()
                .zip(&tau.actions)
                .map(|(s, a)| prev_policy.log_prob(s, a))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    if state.probe.is_none() {
        state.probe = Some(ProbeDistribution::new(probe_capacity)?);
    }
    {
        let probe = state.probe.as_mut().unwrap();
        for tau in &taus {
            probe.insert_trajectory(tau)?;
        }
    }
    let probe = state.probe.as_ref().unwrap();
    let Policy::Gaussian(prev_gauss) = &prev_policy else { unreachable!() };

    // Previous-policy probe pairs are fixed across rounds; they are the
    // nu side here (the current policy owns the mu-side test function,
    // whose pathwise gradient flows through the policy head).
    let prev_states = probe.sample_states(batch, rng::derive_seed(iter_seed, "bgpg.s2", 0))?;
    let prev_pairs: Vec<Vec<f64>> = prev_states
        .iter()
        .map(|s| {
            let mut p = s.clone();
            p.extend(prev_gauss.mean(s)?);
            Ok(p)
        })
        .collect::<Result<_>>()?;
    let prev_cloud = EmpiricalEmbedding::uniform(prev_pairs.clone())?;

    let sat_before = state.pot.saturation_count();
    let mut clips = 0u64;
    let mut last_cloud = prev_cloud.clone();

    for round in 0..inner_rounds {
        // (a) probe states for the current policy's side.
        let cur_states = probe.sample_states(
            batch,
            rng::derive_seed(iter_seed, "bgpg.s1", round as u64),
        )?;
        let Policy::Gaussian(cur_gauss) = &state.policy else { unreachable!() };
        let state_dim = env.state_dim();
        let prev_lambda2: Vec<f64> = prev_pairs
            .iter()
            .map(|p| state.pot.test_fn(Side::Nu, p))
            .collect::<Result<_>>()?;

        // (b) surrogate plus pathwise distance gradient; the objective
        // terms in theta are beta * l_mu(s, pi_theta(s)) plus the
        // damping term beta * gamma * exp((l_mu - l_nu - C)/gamma).
        let mut grad = surrogate_gradient(&state.policy, &prev_logps, &taus, &advantages, &mut clips)?;
        let mut cur_pairs = Vec::with_capacity(batch);
        for s in &cur_states {
            let mut point = s.clone();
            point.extend(cur_gauss.mean(s)?);
            cur_pairs.push(point);
        }
        for (j, s) in cur_states.iter().enumerate() {
            let point = &cur_pairs[j];
            let lam_grad = state.pot.test_fn_input_grad(Side::Mu, point)?;
            let l1 = state.pot.test_fn(Side::Mu, point)?;
            // The theta-dependence is carried entirely by the test
            // function: both the direct beta * l_mu term and the damping
            // term differentiate through l_mu(s, pi_theta(s)), so zero
            // coefficients give a zero distance gradient.
            let mut damp_mean = 0.0;
            for (i, p2) in prev_pairs.iter().enumerate() {
                let c = cost.eval(point, p2);
                let (f, _) = clamped_exp((l1 - prev_lambda2[i] - c) / cfg.gamma);
                damp_mean += f / prev_pairs.len() as f64;
            }
            let scale = cfg.beta * (1.0 + damp_mean);
            let dpoint: Vec<f64> = lam_grad.iter().map(|g| scale * g).collect();
            let (_, gtheta) = cur_gauss.reparam_vjp(s, &vec![0.0; env.action_dim()], &dpoint[state_dim..])?;
            axpy(&mut grad, 1.0 / batch as f64, &gtheta);
        }
        for (t, g) in state.policy.theta_mut().iter_mut().zip(&grad) {
            *t += eta * g;
        }

        // (c) dual updates on the probe-pair samples: mu = current
        // policy pairs, nu = previous policy pairs.
        let cur_cloud = EmpiricalEmbedding::uniform(cur_pairs)?;
        wd_solve_empirical(
            &mut state.pot,
            &cur_cloud,
            &prev_cloud,
            cost,
            cfg.dual_steps_per_iter,
            rng::derive_seed(iter_seed, "bgpg.dual", round as u64),
        )?;
        last_cloud = cur_cloud;
    }

    let rewards: Vec<f64> = taus.iter().map(|t| t.total_reward()).collect();
    let (mean_reward, reward_std) = mean_and_std(&rewards);
    let wd_estimate = state.pot.estimate_product(&last_cloud, &prev_cloud, cost)?;
    state.iter += 1;
    Ok(IterationRecord {
        iter: state.iter - 1,
        mean_reward,
        reward_std,
        wd_estimate,
        dual_objective: wd_estimate,
        saturations: state.pot.saturation_count() - sat_before,
        ratio_clips: clips,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

