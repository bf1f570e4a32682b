//! Behavior-guided optimization loops.
//!
//! Every algorithm alternates two phases per outer iteration: policy
//! parameters move with the behavioral test functions held fixed, then
//! the test functions take stochastic dual steps on fresh embedding
//! samples. Potential updates never read policy gradients and policy
//! updates never mutate potentials.

mod bges;
mod bgpg;
mod repulsion;

pub use bges::{bges_step, es_direction, es_population, imitation_run, BgesBase, BgesState};
pub use bgpg::{bgpg_step_offpolicy, bgpg_step_onpolicy, BgpgState};
pub use repulsion::{mean_x_displacement, repulsion_step, RepulsionState};

use crate::envsim::Trajectory;
use crate::error::{Error, Result};
use crate::policy::Policy;

/// Shared knobs of the regularized objective
/// `F(theta) = L(theta) + beta * WD_gamma(P_theta, P_base)`.
#[derive(Debug, Clone)]
pub struct RegularizedObjectiveCfg {
    /// Regularizer weight; positive repels from the base distribution,
    /// negative attracts toward it.
    pub beta: f64,
    /// Entropic smoothing of the Wasserstein objective; must be positive.
    pub gamma: f64,
    /// Dual step scale (the solver decays it by 1/sqrt(t)).
    pub alpha_dual: f64,
    /// Dual steps per inner alternating round (policy-gradient loops).
    pub dual_steps_per_iter: usize,
    /// Dual steps at each outer iteration (ES-style loops).
    pub warm_start_steps: usize,
    /// How many previous policies' embedding clouds form the base
    /// distribution.
    pub base_policy_window: usize,
    /// Random-feature count of each test-function map.
    pub rff_features: usize,
    /// RBF bandwidth of the feature maps.
    pub rff_sigma: f64,
}

impl Default for RegularizedObjectiveCfg {
    fn default() -> Self {
        RegularizedObjectiveCfg {
            beta: 0.0,
            gamma: 0.1,
            alpha_dual: 0.01,
            dual_steps_per_iter: 10,
            warm_start_steps: 100,
            base_policy_window: 2,
            rff_features: 100,
            rff_sigma: 0.1,
        }
    }
}

impl RegularizedObjectiveCfg {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("smoothed solver requires gamma > 0"));
        }
        if self.dual_steps_per_iter == 0 {
            return Err(Error::invalid("dual_steps_per_iter must be >= 1"));
        }
        if self.rff_features == 0 || !(self.rff_sigma > 0.0) {
            return Err(Error::invalid("feature map fields must be positive"));
        }
        if self.base_policy_window == 0 {
            return Err(Error::invalid("base_policy_window must be >= 1"));
        }
        Ok(())
    }
}

/// Per-iteration metrics emitted by every algorithm.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub mean_reward: f64,
    pub reward_std: f64,
    /// The smoothed-distance estimate the algorithm consumed this
    /// iteration (averaged where there are several).
    pub wd_estimate: f64,
    /// Sampled dual objective of the potentials on this iteration's
    /// training clouds.
    pub dual_objective: f64,
    /// Exponent clamps hit by the dual solver this iteration.
    pub saturations: u64,
    /// Importance-ratio clips this iteration (policy-gradient loops).
    pub ratio_clips: u64,
    pub wall_ms: u64,
}

pub(crate) fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `sum_t grad log pi(a_t | s_t)` over one trajectory.
pub(crate) fn score_sum(policy: &Policy, tau: &Trajectory) -> Result<Vec<f64>> {
    let mut total = vec![0.0; policy.theta_len()];
    for (s, a) in tau.states.iter().zip(&tau.actions) {
        let (_, grad) = policy.log_prob_grad(s, a)?;
        axpy(&mut total, 1.0, &grad);
    }
    Ok(total)
}

/// Reward-to-go advantage estimates with a per-timestep mean baseline
/// computed from the batch: `A_i^j = rtg_i^j - mean_j rtg_i^j`.
pub(crate) fn advantage_estimates(taus: &[Trajectory]) -> Vec<Vec<f64>> {
    let horizon = taus[0].rewards.len();
    let mut rtgs: Vec<Vec<f64>> = Vec::with_capacity(taus.len());
    for tau in taus {
        let mut rtg = vec![0.0; horizon];
        let mut acc = 0.0;
        for (i, r) in tau.rewards.iter().enumerate().rev() {
            acc += r;
            rtg[i] = acc;
        }
        rtgs.push(rtg);
    }
    let mut baseline = vec![0.0; horizon];
    for rtg in &rtgs {
        for (b, v) in baseline.iter_mut().zip(rtg) {
            *b += v / taus.len() as f64;
        }
    }
    for rtg in &mut rtgs {
        for (v, b) in rtg.iter_mut().zip(&baseline) {
            *v -= b;
        }
    }
    rtgs
}

pub(crate) fn axpy(dst: &mut [f64], scale: f64, src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

#[cfg(test)]
mod tests;
