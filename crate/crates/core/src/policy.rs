//! Parametric policies and their exact gradients.
//!
//! Continuous control uses a Gaussian policy: a ReLU MLP maps the state
//! to the action mean, and a state-independent `log_std` vector (stored
//! in the same flat parameter vector) sets the exploration noise. Both
//! the score-function gradient `d log pi(a|s) / d theta` and the
//! pathwise (reparameterized) gradient of `a = mean + exp(log_std) * eps`
//! are computed by hand-rolled reverse-mode accumulation; there is no
//! general autodiff here.
//!
//! Finite MDPs use a softmax-over-logits tabular policy with the same
//! score-function interface.

use crate::envsim::{Action, State};
use crate::error::{Error, Result};
use crate::rng::{self, ChaCha8Rng};

const LOG_2PI: f64 = 1.8378770664093453; // ln(2 * pi)

/// MLP shape: `input -> hidden[0] -> ... -> output`, ReLU activations
/// on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl Arch {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Arch {
        Arch { input, hidden, output }
    }

    /// Total flat parameter count: weights and biases of each layer
    /// plus one `log_std` entry per action dimension.
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut prev = self.input;
        for &h in &self.hidden {
            count += prev * h + h;
            prev = h;
        }
        count += prev * self.output + self.output;
        count + self.output
    }
}

/// Flat-parameter Gaussian MLP policy.
#[derive(Debug, Clone)]
pub struct PolicyParams {
    arch: Arch,
    theta: Vec<f64>,
}

impl PolicyParams {
    /// All-zero parameters (zero mean everywhere, unit std).
    pub fn zeros(arch: Arch) -> PolicyParams {
        let n = arch.param_count();
        PolicyParams { arch, theta: vec![0.0; n] }
    }

    /// Gaussian-initialized weights scaled by `weight_scale / sqrt(fan_in)`,
    /// zero biases, `log_std` filled with `log_std_init`.
    pub fn init(arch: Arch, weight_scale: f64, log_std_init: f64, seed: u64) -> PolicyParams {
        let mut p = PolicyParams::zeros(arch);
        let mut r = rng::stream(rng::derive_seed(seed, "policy.init", 0));
        let mut offset = 0;
        let mut prev = p.arch.input;
        let widths: Vec<usize> = p.arch.hidden.iter().copied().chain([p.arch.output]).collect();
        for &h in &widths {
            let scale = weight_scale / (prev as f64).sqrt();
            for k in 0..prev * h {
                p.theta[offset + k] = scale * rng::standard_normal(&mut r);
            }
            offset += prev * h + h; // biases stay zero
            prev = h;
        }
        let n = p.theta.len();
        for v in &mut p.theta[n - p.arch.output..] {
            *v = log_std_init;
        }
        p
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.param_count(),
                got: theta.len(),
            });
        }
        self.theta = theta;
        Ok(())
    }

    /// State-independent per-dimension log standard deviations (the
    /// tail of the flat parameter vector).
    pub fn log_std(&self) -> &[f64] {
        &self.theta[self.theta.len() - self.arch.output..]
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let n = self.theta.len();
        let k = self.arch.output;
        &mut self.theta[n - k..]
    }

    /// Deterministic head: feed-forward mean action for state `s`.
    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.arch.input {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input,
                got: s.len(),
            });
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("policy parameters contain non-finite values"));
        }
        Ok(self.forward(s).pop().unwrap())
    }

    /// Post-activation values of every layer (ReLU applied on hidden,
    /// linear output last).
    fn forward(&self, s: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = vec![s.to_vec()];
        let mut offset = 0;
        let widths: Vec<usize> = self.arch.hidden.iter().copied().chain([self.arch.output]).collect();
        let mut prev = self.arch.input;
        for (li, &h) in widths.iter().enumerate() {
            let last = li == widths.len() - 1;
            let input = acts.last().unwrap().clone();
            let mut out = vec![0.0; h];
            for j in 0..h {
                let row = &self.theta[offset + j * prev..offset + (j + 1) * prev];
                let mut v: f64 = row.iter().zip(&input).map(|(w, x)| w * x).sum();
                v += self.theta[offset + prev * h + j];
                out[j] = if last { v } else { v.max(0.0) };
            }
            offset += prev * h + h;
            acts.push(out);
            prev = h;
        }
        acts
    }

    /// Reverse-mode vector-Jacobian product through the mean network:
    /// given `d loss / d mean`, accumulates `d loss / d theta` into
    /// `grad` (which must span the full flat parameter vector; the
    /// `log_std` tail is left untouched).
    fn mean_vjp(&self, acts: &[Vec<f64>], cotangent: &[f64], grad: &mut [f64]) {
        let widths: Vec<usize> = self.arch.hidden.iter().copied().chain([self.arch.output]).collect();
        // Layer parameter offsets.
        let mut offsets = Vec::with_capacity(widths.len());
        let mut offset = 0;
        let mut prev = self.arch.input;
        for &h in &widths {
            offsets.push(offset);
            offset += prev * h + h;
            prev = h;
        }
        let mut delta = cotangent.to_vec();
        for li in (0..widths.len()).rev() {
            let h = widths[li];
            let prev = if li == 0 { self.arch.input } else { widths[li - 1] };
            let input = &acts[li];
            let base = offsets[li];
            // ReLU mask applies to hidden layers (their stored
            // activation is already post-ReLU; zero activation from a
            // negative preactivation kills the gradient; zeros from an
            // exactly-zero preactivation use the subgradient 0).
            if li != widths.len() - 1 {
                for (d, a) in delta.iter_mut().zip(&acts[li + 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let mut next_delta = vec![0.0; prev];
            for j in 0..h {
                let dj = delta[j];
                if dj != 0.0 {
                    for k in 0..prev {
                        grad[base + j * prev + k] += dj * input[k];
                        next_delta[k] += dj * self.theta[base + j * prev + k];
                    }
                }
                grad[base + prev * h + j] += dj;
            }
            delta = next_delta;
        }
    }

    /// Exact Gaussian log-density of `a` under `pi(.|s)` and its
    /// gradient in the full flat parameter vector (network weights and
    /// `log_std` components).
    pub fn log_prob_grad(&self, s: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>)> {
        if a.len() != self.arch.output {
            return Err(Error::DimensionMismatch {
                expected: self.arch.output,
                got: a.len(),
            });
        }
        if s.iter().chain(a).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite state or action"));
        }
        let _ = self.mean(s)?; // validates dims and parameter finiteness
        let acts = self.forward(s);
        let mean = acts.last().unwrap();
        let log_std = self.log_std();
        let mut logp = 0.0;
        let mut cotangent = vec![0.0; self.arch.output];
        let mut grad = vec![0.0; self.theta.len()];
        let tail = self.theta.len() - self.arch.output;
        for j in 0..self.arch.output {
            let sd = log_std[j].exp();
            let z = (a[j] - mean[j]) / sd;
            logp += -log_std[j] - 0.5 * LOG_2PI - 0.5 * z * z;
            cotangent[j] = z / sd; // d logp / d mean_j
            grad[tail + j] = z * z - 1.0; // d logp / d log_std_j
        }
        self.mean_vjp(&acts, &cotangent, &mut grad);
        Ok((logp, grad))
    }

    /// Log-density only.
    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        let acts = self.forward(s);
        let mean = acts.last().unwrap();
        if a.len() != self.arch.output {
            return Err(Error::DimensionMismatch {
                expected: self.arch.output,
                got: a.len(),
            });
        }
        let log_std = self.log_std();
        let mut logp = 0.0;
        for j in 0..self.arch.output {
            let sd = log_std[j].exp();
            let z = (a[j] - mean[j]) / sd;
            logp += -log_std[j] - 0.5 * LOG_2PI - 0.5 * z * z;
        }
        Ok(logp)
    }

    /// Reparameterized action `a = mean(s) + exp(log_std) * eps`.
    pub fn reparam_action(&self, s: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.arch.output {
            return Err(Error::DimensionMismatch {
                expected: self.arch.output,
                got: eps.len(),
            });
        }
        let mean = self.mean(s)?;
        Ok(mean
            .iter()
            .zip(self.log_std())
            .zip(eps)
            .map(|((m, ls), e)| m + ls.exp() * e)
            .collect())
    }

    /// Pathwise gradient: given the cotangent `d loss / d a` at the
    /// reparameterized action, returns `(a, d loss / d theta)`.
    pub fn reparam_vjp(&self, s: &[f64], eps: &[f64], cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if eps.len() != self.arch.output || cotangent.len() != self.arch.output {
            return Err(Error::DimensionMismatch {
                expected: self.arch.output,
                got: eps.len().max(cotangent.len()),
            });
        }
        let _ = self.mean(s)?;
        let acts = self.forward(s);
        let mean = acts.last().unwrap().clone();
        let log_std = self.log_std();
        let action: Vec<f64> = mean
            .iter()
            .zip(log_std)
            .zip(eps)
            .map(|((m, ls), e)| m + ls.exp() * e)
            .collect();
        let mut grad = vec![0.0; self.theta.len()];
        let tail = self.theta.len() - self.arch.output;
        for j in 0..self.arch.output {
            // d a_j / d log_std_j = exp(log_std_j) * eps_j
            grad[tail + j] = cotangent[j] * log_std[j].exp() * eps[j];
        }
        self.mean_vjp(&acts, cotangent, &mut grad);
        Ok((action, grad))
    }

    /// Draws `a ~ pi(.|s)` using the stream's Box-Muller normals.
    pub fn sample_action(&self, s: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let eps: Vec<f64> = (0..self.arch.output).map(|_| rng::standard_normal(rng)).collect();
        self.reparam_action(s, &eps)
    }

    /// `theta + sigma * eps`, architecture unchanged.
    pub fn perturb(&self, sigma: f64, eps: &[f64]) -> Result<PolicyParams> {
        if eps.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: eps.len(),
            });
        }
        let theta = self.theta.iter().zip(eps).map(|(t, e)| t + sigma * e).collect();
        Ok(PolicyParams { arch: self.arch.clone(), theta })
    }

    /// Serializes to the checkpoint wire format: a little-endian header
    /// (magic, input, output, hidden sizes, log_std length) followed by
    /// the flat parameter vector as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"BGPL");
        let push_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        push_u32(&mut out, self.arch.input);
        push_u32(&mut out, self.arch.output);
        push_u32(&mut out, self.arch.hidden.len());
        for &h in &self.arch.hidden {
            push_u32(&mut out, h);
        }
        push_u32(&mut out, self.arch.output); // log_std length
        out.extend_from_slice(&(self.theta.len() as u64).to_le_bytes());
        for v in &self.theta {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PolicyParams> {
        let err = || Error::invalid("malformed policy checkpoint");
        if bytes.len() < 4 || &bytes[..4] != b"BGPL" {
            return Err(err());
        }
        let mut pos = 4;
        let mut read_u32 = |pos: &mut usize| -> Result<usize> {
            let b = bytes.get(*pos..*pos + 4).ok_or_else(err)?;
            *pos += 4;
            Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
        };
        let input = read_u32(&mut pos)?;
        let output = read_u32(&mut pos)?;
        let n_hidden = read_u32(&mut pos)?;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u32(&mut pos)?);
        }
        let log_std_len = read_u32(&mut pos)?;
        if log_std_len != output {
            return Err(err());
        }
        let b = bytes.get(pos..pos + 8).ok_or_else(err)?;
        let theta_len = u64::from_le_bytes(b.try_into().unwrap()) as usize;
        pos += 8;
        let arch = Arch::new(input, hidden, output);
        if theta_len != arch.param_count() {
            return Err(err());
        }
        let mut theta = Vec::with_capacity(theta_len);
        for _ in 0..theta_len {
            let b = bytes.get(pos..pos + 8).ok_or_else(err)?;
            theta.push(f64::from_le_bytes(b.try_into().unwrap()));
            pos += 8;
        }
        Ok(PolicyParams { arch, theta })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<PolicyParams> {
        PolicyParams::from_bytes(&std::fs::read(path)?)
    }
}

/// Softmax-over-logits policy on finite state and action sets.
#[derive(Debug, Clone)]
pub struct TabularPolicy {
    num_states: usize,
    num_actions: usize,
    /// State-major logits, length `num_states * num_actions`.
    logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn uniform(num_states: usize, num_actions: usize) -> TabularPolicy {
        TabularPolicy {
            num_states,
            num_actions,
            logits: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_logits(num_states: usize, num_actions: usize, logits: Vec<f64>) -> Result<TabularPolicy> {
        if logits.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch {
                expected: num_states * num_actions,
                got: logits.len(),
            });
        }
        Ok(TabularPolicy { num_states, num_actions, logits })
    }

    pub fn random(num_states: usize, num_actions: usize, scale: f64, seed: u64) -> TabularPolicy {
        let mut r = rng::stream(rng::derive_seed(seed, "tabular.init", 0));
        let logits = (0..num_states * num_actions)
            .map(|_| scale * rng::standard_normal(&mut r))
            .collect();
        TabularPolicy { num_states, num_actions, logits }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    /// Action distribution at state `s`.
    pub fn probs(&self, s: usize) -> Vec<f64> {
        let row = &self.logits[s * self.num_actions..(s + 1) * self.num_actions];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Full conditional table, rows summing to one.
    pub fn prob_table(&self) -> Vec<Vec<f64>> {
        (0..self.num_states).map(|s| self.probs(s)).collect()
    }

    pub fn sample(&self, s: usize, rng: &mut ChaCha8Rng) -> usize {
        let p = self.probs(s);
        let u = rng::uniform(rng);
        let mut acc = 0.0;
        for (a, w) in p.iter().enumerate() {
            acc += w;
            if u < acc {
                return a;
            }
        }
        self.num_actions - 1
    }

    /// Log-probability and its gradient in the flat logits vector:
    /// for the sampled row, `d logp / d logit_b = 1(b = a) - p_b`.
    pub fn log_prob_grad(&self, s: usize, a: usize) -> (f64, Vec<f64>) {
        let p = self.probs(s);
        let mut grad = vec![0.0; self.logits.len()];
        for b in 0..self.num_actions {
            grad[s * self.num_actions + b] = ((b == a) as u8 as f64) - p[b];
        }
        (p[a].ln(), grad)
    }

    pub fn log_prob(&self, s: usize, a: usize) -> f64 {
        self.probs(s)[a].ln()
    }
}

/// A policy of either family, the theta-side of every algorithm.
#[derive(Debug, Clone)]
pub enum Policy {
    Gaussian(PolicyParams),
    Tabular(TabularPolicy),
}

impl Policy {
    pub fn theta_len(&self) -> usize {
        match self {
            Policy::Gaussian(p) => p.theta().len(),
            Policy::Tabular(p) => p.logits().len(),
        }
    }

    pub fn theta(&self) -> &[f64] {
        match self {
            Policy::Gaussian(p) => p.theta(),
            Policy::Tabular(p) => p.logits(),
        }
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        match self {
            Policy::Gaussian(p) => p.theta_mut(),
            Policy::Tabular(p) => p.logits_mut(),
        }
    }

    pub fn sample_action(&self, s: &State, rng: &mut ChaCha8Rng) -> Result<Action> {
        match (self, s) {
            (Policy::Gaussian(p), State::Cont(v)) => Ok(Action::Cont(p.sample_action(v, rng)?)),
            (Policy::Tabular(p), State::Disc(s)) => Ok(Action::Disc(p.sample(*s, rng))),
            _ => Err(Error::invalid("policy and state families do not match")),
        }
    }

    pub fn log_prob(&self, s: &State, a: &Action) -> Result<f64> {
        match (self, s, a) {
            (Policy::Gaussian(p), State::Cont(s), Action::Cont(a)) => p.log_prob(s, a),
            (Policy::Tabular(p), State::Disc(s), Action::Disc(a)) => Ok(p.log_prob(*s, *a)),
            _ => Err(Error::invalid("policy and trajectory families do not match")),
        }
    }

    pub fn log_prob_grad(&self, s: &State, a: &Action) -> Result<(f64, Vec<f64>)> {
        match (self, s, a) {
            (Policy::Gaussian(p), State::Cont(s), Action::Cont(a)) => p.log_prob_grad(s, a),
            (Policy::Tabular(p), State::Disc(s), Action::Disc(a)) => Ok(p.log_prob_grad(*s, *a)),
            _ => Err(Error::invalid("policy and trajectory families do not match")),
        }
    }
}
