//! Episodic environments, trajectory recording and exact tabular solvers.
//!
//! Continuous environments are pure step functions `(state, action) ->
//! (state', reward)`; all randomness enters through the seeded initial
//! state and the policy's own action noise, so a `(spec, seed, action
//! sequence)` triple reproduces the state sequence bitwise.
//!
//! The tabular side provides layered finite-horizon MDPs (states are
//! time-indexed, so no state recurs across time), exact backward
//! induction for values/advantages/visitation, full trajectory
//! enumeration, and the policy-improvement report used to check the
//! Wasserstein trust-region bound.

use crate::error::{Error, Result};
use crate::policy::{Policy, TabularPolicy};
use crate::rng::{self, ChaCha8Rng};
use crate::transport::{exact_ot_discrete, CostFn, EmpiricalEmbedding};

/// A state of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Cont(Vec<f64>),
    Disc(usize),
}

impl State {
    pub fn as_cont(&self) -> Result<&[f64]> {
        match self {
            State::Cont(v) => Ok(v),
            State::Disc(_) => Err(Error::invalid("expected continuous state")),
        }
    }

    pub fn as_disc(&self) -> Result<usize> {
        match self {
            State::Disc(s) => Ok(*s),
            State::Cont(_) => Err(Error::invalid("expected discrete state")),
        }
    }
}

/// An action of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Cont(Vec<f64>),
    Disc(usize),
}

impl Action {
    pub fn as_cont(&self) -> Result<&[f64]> {
        match self {
            Action::Cont(v) => Ok(v),
            Action::Disc(_) => Err(Error::invalid("expected continuous action")),
        }
    }

    pub fn as_disc(&self) -> Result<usize> {
        match self {
            Action::Disc(a) => Ok(*a),
            Action::Cont(_) => Err(Error::invalid("expected discrete action")),
        }
    }
}

/// One episode: `H + 1` states, actions and rewards.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.rewards.len() - 1
    }

    /// `R(tau) = sum_t r_t`.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Environment description; stepping is a pure function, so the
/// description doubles as the instance.
#[derive(Debug, Clone)]
pub enum Env {
    /// Particle on the plane moving by its action; reward
    /// `-30 ||a||^2 - min(d(s, G1), d(s, G2))^2`; start near the origin.
    MultiGoal {
        goals: [[f64; 2]; 2],
        init_std: f64,
        horizon: usize,
    },
    /// Point agent penalized by distance to a goal behind a wall.
    DeceptivePoint {
        start: [f64; 2],
        goal: [f64; 2],
        /// Horizontal wall segment: endpoints share the y coordinate.
        wall: [[f64; 2]; 2],
        horizon: usize,
        max_step: f64,
    },
    /// Same geometry with a velocity-integrator body: state is
    /// `(position, velocity)`, actions are accelerations.
    DeceptiveQuadLite {
        start: [f64; 2],
        goal: [f64; 2],
        wall: [[f64; 2]; 2],
        horizon: usize,
        accel_gain: f64,
        drag: f64,
    },
    /// 1-D corridor: reward 1 for every step spent at or beyond the
    /// goal position, 0 otherwise. Sparse enough that undirected search
    /// is slow, dense enough to be solvable.
    Chain {
        goal: f64,
        horizon: usize,
        max_step: f64,
    },
    /// Finite layered MDP.
    Tabular(TabularMDP),
}

impl Env {
    pub fn multigoal_default() -> Env {
        Env::MultiGoal {
            goals: [[-1.0, 0.0], [1.0, 0.0]],
            init_std: 0.1f64.sqrt(),
            horizon: 10,
        }
    }

    pub fn deceptive_point_default() -> Env {
        Env::DeceptivePoint {
            start: [0.0, 0.0],
            goal: [0.0, 3.0],
            wall: [[-2.0, 1.5], [2.0, 1.5]],
            horizon: 50,
            max_step: 1.0,
        }
    }

    pub fn deceptive_quad_default() -> Env {
        Env::DeceptiveQuadLite {
            start: [0.0, 0.0],
            goal: [0.0, 3.0],
            wall: [[-2.0, 1.5], [2.0, 1.5]],
            horizon: 100,
            accel_gain: 0.3,
            drag: 0.8,
        }
    }

    pub fn chain_default() -> Env {
        Env::Chain {
            goal: 5.0,
            horizon: 20,
            max_step: 1.0,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Env::MultiGoal { horizon, .. }
            | Env::DeceptivePoint { horizon, .. }
            | Env::DeceptiveQuadLite { horizon, .. }
            | Env::Chain { horizon, .. } => *horizon,
            Env::Tabular(mdp) => mdp.horizon,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Env::MultiGoal { .. } | Env::DeceptivePoint { .. } => 2,
            Env::DeceptiveQuadLite { .. } => 4,
            Env::Chain { .. } => 1,
            Env::Tabular(mdp) => mdp.num_states,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Env::MultiGoal { .. } | Env::DeceptivePoint { .. } | Env::DeceptiveQuadLite { .. } => 2,
            Env::Chain { .. } => 1,
            Env::Tabular(mdp) => mdp.num_actions,
        }
    }

    /// Seeded initial state.
    pub fn reset(&self, rng: &mut ChaCha8Rng) -> State {
        match self {
            Env::MultiGoal { init_std, .. } => State::Cont(vec![
                init_std * rng::standard_normal(rng),
                init_std * rng::standard_normal(rng),
            ]),
            Env::DeceptivePoint { start, .. } => State::Cont(start.to_vec()),
            Env::DeceptiveQuadLite { start, .. } => {
                State::Cont(vec![start[0], start[1], 0.0, 0.0])
            }
            Env::Chain { .. } => State::Cont(vec![0.0]),
            Env::Tabular(mdp) => State::Disc(sample_categorical(&mdp.init, rng)),
        }
    }

    /// Pure transition: `(state, action) -> (state', reward)`.
    /// Tabular transitions draw the successor from the given stream.
    pub fn step(&self, s: &State, a: &Action, rng: &mut ChaCha8Rng) -> Result<(State, f64)> {
        match self {
            Env::MultiGoal { goals, .. } => {
                let s = s.as_cont()?;
                let a = a.as_cont()?;
                let r = multigoal_reward(s, a, goals);
                Ok((State::Cont(vec![s[0] + a[0], s[1] + a[1]]), r))
            }
            Env::DeceptivePoint { goal, wall, max_step, .. } => {
                let s = s.as_cont()?;
                let a = a.as_cont()?;
                let clipped = [
                    a[0].clamp(-max_step, *max_step),
                    a[1].clamp(-max_step, *max_step),
                ];
                let (next, r) = deceptive_point_step(
                    &[s[0], s[1]],
                    &clipped,
                    (&[wall[0][0], wall[0][1]], &[wall[1][0], wall[1][1]]),
                    &[goal[0], goal[1]],
                );
                Ok((State::Cont(next.to_vec()), r))
            }
            Env::DeceptiveQuadLite { goal, wall, accel_gain, drag, .. } => {
                let s = s.as_cont()?;
                let a = a.as_cont()?;
                let vx = (drag * s[2] + accel_gain * a[0].clamp(-1.0, 1.0)).clamp(-1.0, 1.0);
                let vy = (drag * s[3] + accel_gain * a[1].clamp(-1.0, 1.0)).clamp(-1.0, 1.0);
                let (pos, r) = deceptive_point_step(
                    &[s[0], s[1]],
                    &[vx, vy],
                    (&[wall[0][0], wall[0][1]], &[wall[1][0], wall[1][1]]),
                    &[goal[0], goal[1]],
                );
                Ok((State::Cont(vec![pos[0], pos[1], vx, vy]), r))
            }
            Env::Chain { goal, max_step, .. } => {
                let x = s.as_cont()?[0];
                let a = a.as_cont()?[0].clamp(-max_step, *max_step);
                let next = x + a;
                let r = if next >= *goal { 1.0 } else { 0.0 };
                Ok((State::Cont(vec![next]), r))
            }
            Env::Tabular(mdp) => {
                let s = s.as_disc()?;
                let a = a.as_disc()?;
                let row = mdp.transition_row(s, a);
                let next = sample_categorical(row, rng);
                Ok((State::Disc(next), mdp.reward(s, a, next)))
            }
        }
    }
}

/// `-30 ||a||^2 - min(d(s, G1), d(s, G2))^2`.
pub fn multigoal_reward(s: &[f64], a: &[f64], goals: &[[f64; 2]; 2]) -> f64 {
    let action_sq = a[0] * a[0] + a[1] * a[1];
    let d1 = ((s[0] - goals[0][0]).powi(2) + (s[1] - goals[0][1]).powi(2)).sqrt();
    let d2 = ((s[0] - goals[1][0]).powi(2) + (s[1] - goals[1][1]).powi(2)).sqrt();
    -30.0 * action_sq - d1.min(d2) * d1.min(d2)
}

/// Moves `s` by `a`, truncating at the wall face if the straight motion
/// segment crosses the (horizontal) wall; reward is the negative
/// distance from the landing point to the goal.
pub fn deceptive_point_step(
    s: &[f64; 2],
    a: &[f64; 2],
    wall: (&[f64; 2], &[f64; 2]),
    goal: &[f64; 2],
) -> ([f64; 2], f64) {
    let target = [s[0] + a[0], s[1] + a[1]];
    let next = clip_at_wall(s, &target, wall);
    let r = -((next[0] - goal[0]).powi(2) + (next[1] - goal[1]).powi(2)).sqrt();
    (next, r)
}

fn clip_at_wall(from: &[f64; 2], to: &[f64; 2], wall: (&[f64; 2], &[f64; 2])) -> [f64; 2] {
    let wy = wall.0[1];
    debug_assert!((wall.1[1] - wy).abs() < 1e-12, "wall must be horizontal");
    let (x_lo, x_hi) = if wall.0[0] <= wall.1[0] {
        (wall.0[0], wall.1[0])
    } else {
        (wall.1[0], wall.0[0])
    };
    let dy = to[1] - from[1];
    let from_side = from[1] - wy;
    let to_side = to[1] - wy;
    // Crossing requires strictly opposite sides (points sitting nudged
    // off the face keep their side).
    if from_side.signum() == to_side.signum() || dy == 0.0 {
        return *to;
    }
    let t = (wy - from[1]) / dy;
    if !(0.0..=1.0).contains(&t) {
        return *to;
    }
    let cross_x = from[0] + t * (to[0] - from[0]);
    if cross_x < x_lo || cross_x > x_hi {
        return *to;
    }
    // Truncate on the approach side of the face.
    let nudge = 1e-9 * from_side.signum();
    [cross_x, wy + nudge]
}

/// Seeded, deterministic episode of exactly `H + 1` steps.
pub fn rollout(env: &Env, policy: &Policy, seed: u64) -> Result<Trajectory> {
    let mut env_rng = rng::stream(rng::derive_seed(seed, "rollout.env", 0));
    let mut act_rng = rng::stream(rng::derive_seed(seed, "rollout.act", 0));
    let horizon = env.horizon();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon + 1);
    let mut rewards = Vec::with_capacity(horizon + 1);
    let mut state = env.reset(&mut env_rng);
    for step in 0..=horizon {
        let action = policy.sample_action(&state, &mut act_rng)?;
        if let Action::Cont(v) = &action {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteAction {
                    step,
                    detail: format!("{v:?}"),
                });
            }
        }
        let (next, reward) = env.step(&state, &action, &mut env_rng)?;
        states.push(state);
        actions.push(action);
        rewards.push(reward);
        state = next;
    }
    Ok(Trajectory { states, actions, rewards })
}

/// Rolls out one episode per (policy, index) pair in parallel; results
/// are ordered by index, and each episode's seed is derived from
/// `(seed, "rollout", index)`, so the stream is independent of thread
/// scheduling.
pub fn rollout_batch(env: &Env, policies: &[&Policy], seed: u64) -> Result<Vec<Trajectory>> {
    use rayon::prelude::*;
    policies
        .par_iter()
        .enumerate()
        .map(|(k, policy)| rollout(env, policy, rng::derive_seed(seed, "rollout", k as u64)))
        .collect()
}

fn sample_categorical(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
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

// ---------------------------------------------------------------------------
// Tabular MDPs
// ---------------------------------------------------------------------------

/// Finite-horizon MDP with time-indexed (layered) states: a state
/// belongs to exactly one layer and transitions only reach the next
/// layer, so no state recurs across time. Trajectories record layers
/// `0..=H`; the final transition lands in layer `H + 1` (rewarded but
/// not recorded).
#[derive(Debug, Clone)]
pub struct TabularMDP {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Initial distribution over all states (support in layer 0).
    pub init: Vec<f64>,
    /// `P(s' | s, a)` flattened as `[s][a][s']`.
    trans: Vec<f64>,
    /// `R(s', a, s)` flattened as `[s][a][s']`.
    rew: Vec<f64>,
    /// Layer index per state.
    layer_of: Vec<usize>,
}

impl TabularMDP {
    /// Builds and validates an MDP from explicit tensors. `layer_of`
    /// must be a valid layering for `horizon` (layers `0..=horizon+1`),
    /// rows from layers `0..=horizon` must sum to 1 within 1e-12 with
    /// support only on the next layer.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        init: Vec<f64>,
        trans: Vec<f64>,
        rew: Vec<f64>,
        layer_of: Vec<usize>,
    ) -> Result<TabularMDP> {
        let mdp = TabularMDP {
            num_states,
            num_actions,
            horizon,
            init,
            trans,
            rew,
            layer_of,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_states;
        if self.init.len() != n
            || self.trans.len() != n * self.num_actions * n
            || self.rew.len() != n * self.num_actions * n
            || self.layer_of.len() != n
        {
            return Err(Error::invalid("tabular MDP tensor sizes inconsistent"));
        }
        if (self.init.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("initial distribution must sum to 1"));
        }
        for (s, &w) in self.init.iter().enumerate() {
            if w > 0.0 && self.layer_of[s] != 0 {
                return Err(Error::invalid("initial mass outside layer 0"));
            }
        }
        for s in 0..n {
            let layer = self.layer_of[s];
            if layer > self.horizon {
                continue; // terminal layer, rows unused
            }
            for a in 0..self.num_actions {
                let row = self.transition_row(s, a);
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "transition row ({s},{a}) sums to {total}"
                    )));
                }
                for (sn, &p) in row.iter().enumerate() {
                    if p > 0.0 && self.layer_of[sn] != layer + 1 {
                        return Err(Error::invalid(
                            "transition mass must land on the next layer",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.num_actions + a) * self.num_states;
        &self.trans[base..base + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.rew[(s * self.num_actions + a) * self.num_states + s_next]
    }

    pub fn layer_of(&self, s: usize) -> usize {
        self.layer_of[s]
    }

    /// States in layers `0..=horizon` (the ones trajectories record).
    pub fn visited_states(&self) -> Vec<usize> {
        (0..self.num_states)
            .filter(|s| self.layer_of[*s] <= self.horizon)
            .collect()
    }

    /// Random layered MDP: Dirichlet(1, ..., 1) transition rows (drawn
    /// as normalized exponentials), rewards uniform on [0, 1].
    /// `widths[t]` is the number of states in layer `t`; `widths` spans
    /// layers `0..=H+1`, so `horizon = widths.len() - 2`.
    pub fn random(widths: &[usize], num_actions: usize, seed: u64) -> Result<TabularMDP> {
        if widths.len() < 2 || widths.iter().any(|w| *w == 0) || num_actions == 0 {
            return Err(Error::invalid("invalid layer widths or action count"));
        }
        let horizon = widths.len() - 2;
        let num_states: usize = widths.iter().sum();
        let mut layer_of = Vec::with_capacity(num_states);
        let mut layer_start = Vec::with_capacity(widths.len());
        {
            let mut s = 0;
            for (t, &w) in widths.iter().enumerate() {
                layer_start.push(s);
                for _ in 0..w {
                    layer_of.push(t);
                    s += 1;
                }
            }
        }
        let mut r = rng::stream(rng::derive_seed(seed, "tabular.random", 0));
        let mut init = vec![0.0; num_states];
        {
            // Dirichlet(1,...,1) over layer 0.
            let mut draws: Vec<f64> = (0..widths[0]).map(|_| -rng::uniform(&mut r).max(1e-12).ln()).collect();
            let total: f64 = draws.iter().sum();
            for d in &mut draws {
                *d /= total;
            }
            init[..widths[0]].copy_from_slice(&draws);
        }
        let mut trans = vec![0.0; num_states * num_actions * num_states];
        let mut rew = vec![0.0; num_states * num_actions * num_states];
        for s in 0..num_states {
            let t = layer_of[s];
            if t > horizon {
                continue;
            }
            let next_start = layer_start[t + 1];
            let next_w = widths[t + 1];
            for a in 0..num_actions {
                let mut draws: Vec<f64> = (0..next_w).map(|_| -rng::uniform(&mut r).max(1e-12).ln()).collect();
                let total: f64 = draws.iter().sum();
                for d in &mut draws {
                    *d /= total;
                }
                let base = (s * num_actions + a) * num_states;
                for k in 0..next_w {
                    trans[base + next_start + k] = draws[k];
                    rew[base + next_start + k] = rng::uniform(&mut r);
                }
            }
        }
        TabularMDP::new(num_states, num_actions, horizon, init, trans, rew, layer_of)
    }
}

/// Exact values from finite-horizon backward induction plus the
/// visitation measure from forward propagation.
#[derive(Debug, Clone)]
pub struct ValueReport {
    /// `V^pi(s)` per state.
    pub v: Vec<f64>,
    /// `Q^pi(s, a)` flattened `[s][a]`.
    pub q: Vec<f64>,
    /// `A^pi(s, a) = Q - V` flattened `[s][a]`.
    pub adv: Vec<f64>,
    /// Visitation measure `rho_pi(s)` over recorded layers `0..=H`.
    pub rho: Vec<f64>,
    /// `V(pi) = E_{s0}[V(s0)]`.
    pub total: f64,
}

/// Backward induction for `V`, `Q`, `A` and forward propagation for
/// the state-occupancy measure.
pub fn tabular_value(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<ValueReport> {
    if policy.num_states() != mdp.num_states || policy.num_actions() != mdp.num_actions {
        return Err(Error::DimensionMismatch {
            expected: mdp.num_states,
            got: policy.num_states(),
        });
    }
    let n = mdp.num_states;
    let na = mdp.num_actions;
    for s in 0..n {
        let p = policy.probs(s);
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 || p.iter().any(|x| *x < 0.0) {
            return Err(Error::invalid("policy rows must be distributions"));
        }
    }
    let mut v = vec![0.0; n];
    let mut q = vec![0.0; n * na];
    // Backward over layers H..0; layer H+1 has V = 0.
    let mut by_layer: Vec<Vec<usize>> = vec![Vec::new(); mdp.horizon + 2];
    for s in 0..n {
        by_layer[mdp.layer_of(s)].push(s);
    }
    for t in (0..=mdp.horizon).rev() {
        for &s in &by_layer[t] {
            let probs = policy.probs(s);
            let mut vs = 0.0;
            for a in 0..na {
                let mut qa = 0.0;
                for (sn, &p) in mdp.transition_row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        qa += p * (mdp.reward(s, a, sn) + v[sn]);
                    }
                }
                q[s * na + a] = qa;
                vs += probs[a] * qa;
            }
            v[s] = vs;
        }
    }
    let adv: Vec<f64> = (0..n * na).map(|i| q[i] - v[i / na]).collect();
    // Forward occupancy over layers 0..=H.
    let mut rho = vec![0.0; n];
    for s in 0..n {
        if mdp.layer_of(s) == 0 {
            rho[s] = mdp.init[s];
        }
    }
    for t in 0..mdp.horizon {
        for &s in &by_layer[t] {
            if rho[s] == 0.0 {
                continue;
            }
            let probs = policy.probs(s);
            for a in 0..na {
                if probs[a] == 0.0 {
                    continue;
                }
                for (sn, &p) in mdp.transition_row(s, a).iter().enumerate() {
                    if p > 0.0 {
                        rho[sn] += rho[s] * probs[a] * p;
                    }
                }
            }
        }
    }
    let total = (0..n).map(|s| mdp.init[s] * v[s]).sum();
    Ok(ValueReport { v, q, adv, rho, total })
}

/// One enumerated trajectory prefix `(s_0..s_H, a_0..a_H)` with its
/// probability (the final transition is marginalized out).
#[derive(Debug, Clone)]
pub struct EnumeratedPath {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub prob: f64,
}

pub const ENUMERATION_LIMIT: usize = 100_000;

/// All positive-probability trajectory prefixes under the policy.
pub fn enumerate_paths(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<Vec<EnumeratedPath>> {
    // Count before materializing.
    let mut by_layer: Vec<Vec<usize>> = vec![Vec::new(); mdp.horizon + 2];
    for s in 0..mdp.num_states {
        by_layer[mdp.layer_of(s)].push(s);
    }
    let mut count = by_layer[0].len();
    for t in 0..mdp.horizon {
        count = count.saturating_mul(mdp.num_actions).saturating_mul(by_layer[t + 1].len());
        if count > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                count,
                limit: ENUMERATION_LIMIT,
            });
        }
    }
    count = count.saturating_mul(mdp.num_actions);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }

    let mut paths = Vec::new();
    let mut stack: Vec<EnumeratedPath> = by_layer[0]
        .iter()
        .filter(|s| mdp.init[**s] > 0.0)
        .map(|&s| EnumeratedPath {
            states: vec![s],
            actions: Vec::new(),
            prob: mdp.init[s],
        })
        .collect();
    while let Some(path) = stack.pop() {
        let t = path.states.len() - 1;
        let s = *path.states.last().unwrap();
        let probs = policy.probs(s);
        if t == mdp.horizon {
            // Final action: successor marginalizes to 1.
            for a in 0..mdp.num_actions {
                if probs[a] > 0.0 {
                    let mut done = path.clone();
                    done.actions.push(a);
                    done.prob *= probs[a];
                    paths.push(done);
                }
            }
            continue;
        }
        for a in 0..mdp.num_actions {
            if probs[a] == 0.0 {
                continue;
            }
            for (sn, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p > 0.0 {
                    let mut ext = path.clone();
                    ext.actions.push(a);
                    ext.states.push(sn);
                    ext.prob *= probs[a] * p;
                    stack.push(ext);
                }
            }
        }
    }
    Ok(paths)
}

/// Exact pushforward distribution of the state-visitation embedding
/// (per-state visit counts over layers `0..=H`) under full enumeration.
pub fn state_visitation_embedding_distribution(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
) -> Result<EmpiricalEmbedding> {
    let paths = enumerate_paths(mdp, policy)?;
    let mut points = Vec::with_capacity(paths.len());
    let mut weights = Vec::with_capacity(paths.len());
    for path in &paths {
        let mut counts = vec![0.0; mdp.num_states];
        for &s in &path.states {
            counts[s] += 1.0;
        }
        points.push(counts);
        weights.push(path.prob);
    }
    EmpiricalEmbedding::weighted(points, weights)
}

/// Exact pushforward of the state-action count embedding.
pub fn state_action_embedding_distribution(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
) -> Result<EmpiricalEmbedding> {
    let paths = enumerate_paths(mdp, policy)?;
    let mut points = Vec::with_capacity(paths.len());
    let mut weights = Vec::with_capacity(paths.len());
    for path in &paths {
        let mut counts = vec![0.0; mdp.num_states * mdp.num_actions];
        for (s, a) in path.states.iter().zip(&path.actions) {
            counts[s * mdp.num_actions + a] += 1.0;
        }
        points.push(counts);
        weights.push(path.prob);
    }
    EmpiricalEmbedding::weighted(points, weights)
}

/// Exact `WD_0` (L1 cost) between the state-visitation embedding
/// distributions of two policies, via enumeration and min-cost flow.
pub fn exact_wd0_state_visitation(
    mdp: &TabularMDP,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
) -> Result<f64> {
    let a = state_visitation_embedding_distribution(mdp, pi)?;
    let b = state_visitation_embedding_distribution(mdp, pi_tilde)?;
    Ok(exact_ot_discrete(&a, &b, CostFn::L1)?.value)
}

/// Policy-improvement bound report: with `delta` an exact `WD_0`
/// between the visitation embeddings and `epsilon = max |A^pi|`, checks
/// `V(pi_tilde) >= L(pi_tilde) - delta * epsilon`.
#[derive(Debug, Clone)]
pub struct ImprovementReport {
    pub v_pi: f64,
    pub v_pi_tilde: f64,
    pub surrogate: f64,
    pub epsilon: f64,
    pub wd0: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn verify_policy_improvement(
    mdp: &TabularMDP,
    pi: &TabularPolicy,
    pi_tilde: &TabularPolicy,
    wd0: f64,
) -> Result<ImprovementReport> {
    let base = tabular_value(mdp, pi)?;
    let target = tabular_value(mdp, pi_tilde)?;
    let na = mdp.num_actions;
    // L(pi_tilde) = V(pi) + sum_s rho_pi(s) sum_a pi_tilde(a|s) A^pi(s, a)
    let mut surrogate = base.total;
    let mut epsilon = 0.0f64;
    for s in mdp.visited_states() {
        let probs = pi_tilde.probs(s);
        for a in 0..na {
            surrogate += base.rho[s] * probs[a] * base.adv[s * na + a];
            epsilon = epsilon.max(base.adv[s * na + a].abs());
        }
    }
    let bound = surrogate - wd0 * epsilon;
    let slack = target.total - bound;
    Ok(ImprovementReport {
        v_pi: base.total,
        v_pi_tilde: target.total,
        surrogate,
        epsilon,
        wd0,
        bound,
        slack,
        holds: slack >= -1e-9,
    })
}
