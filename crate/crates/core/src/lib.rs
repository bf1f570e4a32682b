//! Behavior-guided reinforcement learning.
//!
//! Policies are identified with distributions of behavioral embeddings:
//! a behavioral embedding map sends each trajectory to a point in an
//! embedding space, and the pushforward of the policy's trajectory
//! distribution is compared to other policies through smoothed
//! Wasserstein distances. The smoothed distance is solved in dual form
//! by stochastic gradient steps over test functions spanned by random
//! Fourier features; the resulting scores steer evolution strategies
//! and policy-gradient optimizers toward or away from reference
//! behaviors (novelty, trust regions, repulsion, imitation).
//!
//! Module map:
//!
//! * [`rff`] — random Fourier feature maps approximating the RBF kernel.
//! * [`transport`] — the stochastic dual solver plus exact oracles
//!   (assignment, min-cost flow, Sinkhorn) used to validate it.
//! * [`envsim`] — episodic environments, trajectory recording and exact
//!   tabular solvers.
//! * [`embed`] — behavioral embedding maps and empirical embedding
//!   distributions (on- and off-policy).
//! * [`policy`] — Gaussian MLP and tabular softmax policies with exact
//!   score-function and pathwise gradients.
//! * [`algo`] — BGES, BGPG, repulsion/attraction and imitation loops.
//! * [`baselines`] — vanilla ES, Euclidean-BC novelty and histogram
//!   divergence regularizers.
//! * [`harness`] — experiment configuration, seeded runs, CSV metrics
//!   and verification suites (backs the command-line interface).

pub mod algo;
pub mod baselines;
pub mod embed;
pub mod envsim;
pub mod error;
pub mod harness;
pub mod policy;
pub mod rff;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
