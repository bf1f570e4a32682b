//! Behavioral embedding maps and empirical embedding distributions.
//!
//! A behavioral embedding map sends a trajectory to a point in an
//! embedding space; the empirical pushforward of a batch of rollouts
//! through the map is the policy's (on-policy) embedding distribution.
//! Maps need not be injective: distinct trajectories may share an
//! embedding point, and merged support points accumulate weight.
//!
//! The off-policy variant embeds `(state, policy-mean-action)` pairs
//! for states drawn from a probe buffer of previously visited states,
//! making the comparison independent of the policy's own trajectory
//! distribution.

use crate::envsim::{Action, State, Trajectory};
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::rng;
use crate::transport::EmpiricalEmbedding;
use std::collections::VecDeque;

/// Behavioral embedding map kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bem {
    /// Final state `s_H` (continuous states).
    FinalState,
    /// Concatenated actions `[a_0, ..., a_H]`; discrete actions embed
    /// as their numeric ids.
    ActionConcat,
    /// Scalar total reward.
    TotalReward,
    /// Vector with component `i = sum_{t >= i} r_t`.
    RewardToGo,
    /// Per-state visit counts (discrete states only).
    StateVisitCount { num_states: usize },
    /// Per-(state, action) counts (discrete only).
    StateActionCount { num_states: usize, num_actions: usize },
    /// Scalar visit count of one fixed state (discrete only).
    FixedStateFreq { state: usize },
    /// Mean per-step displacement along the first state coordinate.
    MeanXDisplacement,
}

impl Bem {
    /// Embedding dimension for trajectories with the given shape.
    pub fn output_dim(&self, state_dim: usize, action_dim: usize, horizon: usize) -> usize {
        match self {
            Bem::FinalState => state_dim,
            Bem::ActionConcat => action_dim * (horizon + 1),
            Bem::TotalReward => 1,
            Bem::RewardToGo => horizon + 1,
            Bem::StateVisitCount { num_states } => *num_states,
            Bem::StateActionCount { num_states, num_actions } => num_states * num_actions,
            Bem::FixedStateFreq { .. } => 1,
            Bem::MeanXDisplacement => 1,
        }
    }

    pub fn parse(s: &str) -> Result<Bem> {
        match s {
            "final-state" => Ok(Bem::FinalState),
            "action-concat" => Ok(Bem::ActionConcat),
            "total-reward" => Ok(Bem::TotalReward),
            "reward-to-go" => Ok(Bem::RewardToGo),
            "mean-x-displacement" => Ok(Bem::MeanXDisplacement),
            other => Err(Error::invalid(format!(
                "unknown embedding '{other}' (expected final-state, action-concat, \
                 total-reward, reward-to-go or mean-x-displacement)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Bem::FinalState => "final-state",
            Bem::ActionConcat => "action-concat",
            Bem::TotalReward => "total-reward",
            Bem::RewardToGo => "reward-to-go",
            Bem::StateVisitCount { .. } => "state-visit-count",
            Bem::StateActionCount { .. } => "state-action-count",
            Bem::FixedStateFreq { .. } => "fixed-state-freq",
            Bem::MeanXDisplacement => "mean-x-displacement",
        }
    }

    /// Maps one trajectory to its embedding point.
    pub fn embed(&self, tau: &Trajectory) -> Result<Vec<f64>> {
        match self {
            Bem::FinalState => match tau.states.last().unwrap() {
                State::Cont(v) => Ok(v.clone()),
                State::Disc(_) => Err(Error::invalid(
                    "final-state embedding requires continuous states",
                )),
            },
            Bem::ActionConcat => {
                let mut out = Vec::new();
                for a in &tau.actions {
                    match a {
                        Action::Cont(v) => out.extend_from_slice(v),
                        Action::Disc(id) => out.push(*id as f64),
                    }
                }
                Ok(out)
            }
            Bem::TotalReward => Ok(vec![tau.total_reward()]),
            Bem::RewardToGo => {
                let mut out = vec![0.0; tau.rewards.len()];
                let mut acc = 0.0;
                for (i, r) in tau.rewards.iter().enumerate().rev() {
                    acc += r;
                    out[i] = acc;
                }
                Ok(out)
            }
            Bem::StateVisitCount { num_states } => {
                let mut counts = vec![0.0; *num_states];
                for s in &tau.states {
                    let id = s.as_disc().map_err(|_| Error::DiscreteOnlyEmbedding {
                        kind: "state-visit-count",
                    })?;
                    if id >= *num_states {
                        return Err(Error::invalid("state id outside embedding range"));
                    }
                    counts[id] += 1.0;
                }
                Ok(counts)
            }
            Bem::StateActionCount { num_states, num_actions } => {
                let mut counts = vec![0.0; num_states * num_actions];
                for (s, a) in tau.states.iter().zip(&tau.actions) {
                    let sid = s.as_disc().map_err(|_| Error::DiscreteOnlyEmbedding {
                        kind: "state-action-count",
                    })?;
                    let aid = a.as_disc().map_err(|_| Error::DiscreteOnlyEmbedding {
                        kind: "state-action-count",
                    })?;
                    if sid >= *num_states || aid >= *num_actions {
                        return Err(Error::invalid("state or action id outside embedding range"));
                    }
                    counts[sid * num_actions + aid] += 1.0;
                }
                Ok(counts)
            }
            Bem::FixedStateFreq { state } => {
                let mut count = 0.0;
                for s in &tau.states {
                    let id = s.as_disc().map_err(|_| Error::DiscreteOnlyEmbedding {
                        kind: "fixed-state-freq",
                    })?;
                    if id == *state {
                        count += 1.0;
                    }
                }
                Ok(vec![count])
            }
            Bem::MeanXDisplacement => {
                let xs: Result<Vec<f64>> = tau
                    .states
                    .iter()
                    .map(|s| s.as_cont().map(|v| v[0]))
                    .collect();
                let xs = xs.map_err(|_| Error::invalid(
                    "mean-x-displacement embedding requires continuous states",
                ))?;
                let steps = xs.len() - 1;
                if steps == 0 {
                    return Ok(vec![0.0]);
                }
                let total: f64 = xs.windows(2).map(|w| w[1] - w[0]).sum();
                Ok(vec![total / steps as f64])
            }
        }
    }
}

/// Uniform empirical pushforward of a trajectory batch; duplicate
/// embedding points merge with summed weight.
pub fn embedding_distribution(bem: &Bem, taus: &[Trajectory]) -> Result<EmpiricalEmbedding> {
    if taus.is_empty() {
        return Err(Error::EmptyDistribution("embedding distribution"));
    }
    let points: Vec<Vec<f64>> = taus.iter().map(|t| bem.embed(t)).collect::<Result<_>>()?;
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("trajectories embed to mixed dimensions"));
    }
    EmpiricalEmbedding::uniform(points)
}

/// FIFO buffer of visited (continuous) states backing the off-policy
/// probe distribution. Insertion is single-writer; sampling reads a
/// snapshot.
#[derive(Debug, Clone)]
pub struct ProbeDistribution {
    buffer: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl ProbeDistribution {
    pub fn new(capacity: usize) -> Result<ProbeDistribution> {
        if capacity == 0 {
            return Err(Error::invalid("probe buffer capacity must be >= 1"));
        }
        Ok(ProbeDistribution {
            buffer: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Inserts every state of the trajectory, evicting oldest first.
    pub fn insert_trajectory(&mut self, tau: &Trajectory) -> Result<()> {
        for s in &tau.states {
            let v = s.as_cont()?.to_vec();
            if self.buffer.len() == self.capacity {
                self.buffer.pop_front();
            }
            self.buffer.push_back(v);
        }
        Ok(())
    }

    /// `n` states drawn uniformly with replacement; deterministic given
    /// the seed and buffer contents.
    pub fn sample_states(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if self.buffer.is_empty() {
            return Err(Error::EmptyDistribution("probe buffer"));
        }
        let mut r = rng::stream(rng::derive_seed(seed, "probe.sample", 0));
        Ok((0..n)
            .map(|_| {
                let idx = (rng::uniform(&mut r) * self.buffer.len() as f64) as usize;
                self.buffer[idx.min(self.buffer.len() - 1)].clone()
            })
            .collect())
    }
}

/// Off-policy embedding distribution: `n` points `[s ; mean_action(s)]`
/// for probe states `s`, with the policy summarized by its
/// deterministic head.
pub fn probe_embedding(
    probe: &ProbeDistribution,
    policy: &PolicyParams,
    n: usize,
    seed: u64,
) -> Result<EmpiricalEmbedding> {
    let states = probe.sample_states(n, seed)?;
    let mut points = Vec::with_capacity(n);
    for s in states {
        let mean = policy.mean(&s)?;
        let mut point = s;
        point.extend_from_slice(&mean);
        points.push(point);
    }
    EmpiricalEmbedding::uniform(points)
}
