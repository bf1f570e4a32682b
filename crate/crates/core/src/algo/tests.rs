use super::*;
use crate::embed::{embedding_distribution, Bem};
use crate::envsim::{rollout, Env, TabularMDP};
use crate::policy::{Arch, Policy, PolicyParams, TabularPolicy};
use crate::rff::FeatureMap;
use crate::rng;
use crate::transport::{clamped_exp, CostFn, DualPotentials, EmpiricalEmbedding, Side};

mod direction_formula {
    use super::*;

    fn eps_set() -> Vec<Vec<f64>> {
        let mut r = rng::stream(3);
        (0..6).map(|_| rng::standard_normal_vec(&mut r, 4)).collect()
    }

    #[test]
    fn baseline_shift_invariance_exact() {
        let eps = eps_set();
        let rewards = [1.0, -2.0, 0.5, 3.0, -1.0, 0.0];
        let scores = [0.2, 0.4, -0.1, 0.0, 0.3, 0.7];
        let a = es_direction(&eps, &rewards, 0.5, &scores, 0.3, 0.02);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + 123.456).collect();
        let b = es_direction(&eps, &shifted, 0.5 + 123.456, &scores, 0.3, 0.02);
        assert_eq!(a, b);
    }

    #[test]
    fn beta_minus_one_doubles_reward_weight() {
        let eps = eps_set();
        let rewards = [1.0, -2.0, 0.5, 3.0, -1.0, 0.0];
        let zero_scores = [0.0; 6];
        let plain = es_direction(&eps, &rewards, 0.0, &zero_scores, 0.0, 0.01);
        let imitate = es_direction(&eps, &rewards, 0.0, &zero_scores, -1.0, 0.01);
        for (p, i) in plain.iter().zip(&imitate) {
            assert!((2.0 * p - i).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_scores_and_equal_rewards_give_zero_update() {
        let eps = eps_set();
        let rewards = [2.5; 6];
        let scores = [0.0; 6];
        let d = es_direction(&eps, &rewards, 2.5, &scores, 0.7, 0.01);
        assert!(d.iter().all(|g| *g == 0.0));
    }
}

mod bges_oracle {
    use super::*;

    /// Straight-line re-implementation of one behavior-guided ES step,
    /// sharing only the primitive rollout/feature evaluations with the
    /// production path.
    #[allow(clippy::too_many_arguments)]
    fn reference_bges_step(
        policy: &PolicyParams,
        env: &Env,
        bem: &Bem,
        cfg: &RegularizedObjectiveCfg,
        cost: CostFn,
        n: usize,
        sigma: f64,
        eta: f64,
        seed: u64,
    ) -> Vec<f64> {
        // Maps and the initial base cloud exactly as the state builder.
        let dim = bem.output_dim(env.state_dim(), env.action_dim(), env.horizon());
        let map_mu = FeatureMap::new(dim, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "bges.map.mu", 0)).unwrap();
        let map_nu = FeatureMap::new(dim, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "bges.map.nu", 0)).unwrap();
        let tau0 = rollout(env, &Policy::Gaussian(policy.clone()), rng::derive_seed(seed, "bges.init", 0)).unwrap();
        let base_point = bem.embed(&tau0).unwrap();

        let iter_seed = rng::derive_seed(seed, "bges.iter", 0);
        let mut eps_rng = rng::stream(rng::derive_seed(iter_seed, "bges.eps", 0));
        let eps: Vec<Vec<f64>> = (0..n)
            .map(|_| rng::standard_normal_vec(&mut eps_rng, policy.theta().len()))
            .collect();
        let roll_seed = rng::derive_seed(iter_seed, "bges.roll", 0);
        let mut taus = Vec::new();
        for (k, e) in eps.iter().enumerate() {
            let p = Policy::Gaussian(policy.perturb(sigma, e).unwrap());
            taus.push(rollout(env, &p, rng::derive_seed(roll_seed, "rollout", k as u64)).unwrap());
        }
        let tau_base = rollout(
            env,
            &Policy::Gaussian(policy.clone()),
            rng::derive_seed(roll_seed, "rollout", n as u64),
        )
        .unwrap();
        let rewards: Vec<f64> = taus.iter().map(|t| t.total_reward()).collect();
        let r_t = tau_base.total_reward();
        let points: Vec<Vec<f64>> = taus.iter().map(|t| bem.embed(t).unwrap()).collect();
        let current_point = bem.embed(&tau_base).unwrap();

        // Dual warm start: mu = {base_point}, nu = population cloud.
        let nu_points = points.clone();
        let nu_w = vec![1.0 / n as f64; n];
        let mut p1 = vec![0.0; cfg.rff_features];
        let mut p2 = vec![0.0; cfg.rff_features];
        let mut r = rng::stream(rng::derive_seed(rng::derive_seed(iter_seed, "bges.dual", 0), "wd.solve", 0));
        for t in 0..cfg.warm_start_steps {
            // mu has one support point; one uniform draw is still consumed.
            let _ = rng::uniform(&mut r);
            let x = &base_point;
            let u = rng::uniform(&mut r);
            let mut j = nu_w.len() - 1;
            let mut acc = 0.0;
            for (idx, w) in nu_w.iter().enumerate() {
                acc += w;
                if u < acc {
                    j = idx;
                    break;
                }
            }
            let y = &nu_points[j];
            let phi_x = map_mu.eval(x).unwrap();
            let phi_y = map_nu.eval(y).unwrap();
            let lx: f64 = p1.iter().zip(&phi_x).map(|(a, b)| a * b).sum();
            let ly: f64 = p2.iter().zip(&phi_y).map(|(a, b)| a * b).sum();
            let (f, _) = clamped_exp((lx - ly - cost.eval(x, y)) / cfg.gamma);
            let rate = cfg.alpha_dual / ((t + 1) as f64).sqrt();
            for (p, phi) in p1.iter_mut().zip(&phi_x) {
                *p += rate * (1.0 - f) * phi;
            }
            for (p, phi) in p2.iter_mut().zip(&phi_y) {
                *p -= rate * (1.0 - f) * phi;
            }
        }

        // Per-perturbation estimates against the unperturbed point.
        let phi_cur = map_nu.eval(&current_point).unwrap();
        let l_cur: f64 = p2.iter().zip(&phi_cur).map(|(a, b)| a * b).sum();
        let mut estimates = Vec::with_capacity(n);
        for point in &points {
            let phi = map_mu.eval(point).unwrap();
            let l1: f64 = p1.iter().zip(&phi).map(|(a, b)| a * b).sum();
            let (f, _) = clamped_exp((l1 - l_cur - cost.eval(point, &current_point)) / cfg.gamma);
            estimates.push(1.0 * 1.0 * (l1 - l_cur - cfg.gamma * f));
        }

        let mut theta = policy.theta().to_vec();
        let mut grad = vec![0.0; theta.len()];
        for k in 0..n {
            let w = (1.0 - cfg.beta) * (rewards[k] - r_t) + cfg.beta * estimates[k];
            for (g, e) in grad.iter_mut().zip(&eps[k]) {
                *g += w * e / sigma;
            }
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t += eta * g;
        }
        theta
    }

    #[test]
    fn one_step_matches_reference_bitwise() {
        let env = Env::deceptive_point_default();
        let bem = Bem::FinalState;
        let policy = PolicyParams::init(Arch::new(2, vec![5, 5], 2), 0.6, -1.2, 21);
        let cfg = RegularizedObjectiveCfg {
            beta: 0.4,
            gamma: 0.2,
            alpha_dual: 0.05,
            warm_start_steps: 50,
            rff_features: 64,
            rff_sigma: 1.0,
            ..Default::default()
        };
        let seed = 1234;
        let want = reference_bges_step(&policy, &env, &bem, &cfg, CostFn::L2, 8, 0.05, 0.1, seed);

        let mut state = BgesState::new(policy, &env, &bem, &cfg, seed).unwrap();
        bges_step(&mut state, &env, &bem, &cfg, CostFn::L2, 8, 0.05, 0.1, &BgesBase::PreviousPolicies, seed).unwrap();
        assert_eq!(state.policy.theta(), &want[..], "production and reference theta differ");
    }

    #[test]
    fn deterministic_policy_population_collapses() {
        // Zero policy noise and zero perturbation scale: every rollout
        // is identical, so all estimates coincide and the update is
        // exactly eta * beta * wd * sum_k eps_k / sigma.
        let env = Env::deceptive_point_default();
        let bem = Bem::FinalState;
        let mut policy = PolicyParams::init(Arch::new(2, vec![5], 2), 0.4, 0.0, 3);
        for ls in policy.log_std_mut() {
            *ls = -1000.0;
        }
        let cfg = RegularizedObjectiveCfg {
            beta: 0.7,
            warm_start_steps: 25,
            rff_features: 32,
            rff_sigma: 1.0,
            ..Default::default()
        };
        let seed = 5;
        let mut state = BgesState::new(policy.clone(), &env, &bem, &cfg, seed).unwrap();
        let n = 6;
        let sigma = 1e-300; // perturbations numerically vanish in the rollout
        let eta = 0.01;

        // Recompute the shared quantities の the degenerate population.
        let iter_seed = rng::derive_seed(seed, "bges.iter", 0);
        let (eps, _, _) = es_population(&policy, &env, n, sigma, iter_seed).unwrap();

        let before = state.policy.theta().to_vec();
        let rec = bges_step(&mut state, &env, &bem, &cfg, CostFn::L2, n, sigma, eta, &BgesBase::PreviousPolicies, seed).unwrap();
        assert!(rec.reward_std.abs() < 1e-9, "identical rollouts");
        let wd = rec.wd_estimate; // all k estimates equal, mean = each
        for i in 0..before.len() {
            let eps_sum: f64 = eps.iter().map(|e| e[i]).sum();
            let want = before[i] + eta * cfg.beta * wd * eps_sum / sigma;
            let got = state.policy.theta()[i];
            let rel = (got - want).abs() / want.abs().max(1e-12);
            assert!(rel < 1e-9, "component {i}: {got} vs {want}");
        }
    }
}

mod reinforce_unbiasedness {
    use super::*;

    #[test]
    fn one_step_env_matches_closed_form_gradient() {
        // 1-step MultiGoal with a linear policy: the REINFORCE
        // estimator E[R(tau) * sum grad log pi] equals the closed-form
        // gradient of E[-30 ||a||^2] (the distance term is theta-free).
        let env = Env::MultiGoal {
            goals: [[-1.0, 0.0], [1.0, 0.0]],
            init_std: 0.1f64.sqrt(),
            horizon: 0,
        };
        let mut policy = PolicyParams::zeros(Arch::new(2, vec![], 2));
        // W = [[0.3, -0.2], [0.1, 0.4]], b = (0.05, -0.1), log_std = -0.4.
        let w = [0.3, -0.2, 0.1, 0.4];
        policy.theta_mut()[..4].copy_from_slice(&w);
        policy.theta_mut()[4] = 0.05;
        policy.theta_mut()[5] = -0.1;
        for ls in policy.log_std_mut() {
            *ls = -0.4;
        }
        let wrapped = Policy::Gaussian(policy.clone());

        let n = 100_000;
        let dim = policy.theta().len();
        let mut sums = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for k in 0..n {
            let tau = rollout(&env, &wrapped, rng::derive_seed(17, "unbiased", k)).unwrap();
            let g = score_sum(&wrapped, &tau).unwrap();
            let r = tau.total_reward();
            for i in 0..dim {
                sums[i] += r * g[i];
                sq[i] += (r * g[i]) * (r * g[i]);
            }
        }

        // Closed form: d/dW E[-30|a|^2] with a = W s + b + sd * eps,
        // s ~ N(0, 0.1 I): E[a aT] terms give dW_jk = -60 E[a_j s_k]
        // = -60 * 0.1 * W_jk, db_j = -60 E[a_j] = -60 b_j,
        // dlog_std_j = -60 sd^2.
        let sd: f64 = (-0.4f64).exp();
        let mut want = vec![0.0; dim];
        want[0] = -60.0 * 0.1 * w[0];
        want[1] = -60.0 * 0.1 * w[1];
        want[2] = -60.0 * 0.1 * w[2];
        want[3] = -60.0 * 0.1 * w[3];
        want[4] = -60.0 * 0.05;
        want[5] = -60.0 * (-0.1);
        want[6] = -60.0 * sd * sd;
        want[7] = -60.0 * sd * sd;
        for i in 0..dim {
            let mean = sums[i] / n as f64;
            let var = (sq[i] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - want[i]).abs() <= 3.0 * se,
                "component {i}: estimate {mean} vs closed form {} (se {se})",
                want[i]
            );
        }
    }
}

mod bgpg_tests {
    use super::*;

    fn three_state_mdp(seed: u64) -> TabularMDP {
        TabularMDP::random(&[1, 1, 1], 2, seed).unwrap()
    }

    #[test]
    fn zero_advantages_and_zero_beta_freeze_theta() {
        let env = Env::Chain {
            goal: 1e18,
            horizon: 5,
            max_step: 1.0,
        };
        let policy = Policy::Gaussian(PolicyParams::init(Arch::new(1, vec![4], 1), 0.5, -0.3, 2));
        let cfg = RegularizedObjectiveCfg {
            beta: 0.0,
            rff_features: 16,
            rff_sigma: 1.0,
            ..Default::default()
        };
        let mut state = BgpgState::for_env(policy.clone(), &env, &Bem::RewardToGo, &cfg, 4).unwrap();
        let before = state.policy.theta().to_vec();
        bgpg_step_onpolicy(&mut state, &env, &Bem::RewardToGo, &cfg, CostFn::L2, 4, 2, 0.05, 4).unwrap();
        assert_eq!(state.policy.theta(), &before[..]);
    }

    #[test]
    fn no_ratio_clips_at_round_start() {
        let mdp = three_state_mdp(31);
        let env = Env::Tabular(mdp.clone());
        let policy = Policy::Tabular(TabularPolicy::random(mdp.num_states, 2, 0.5, 32));
        let cfg = RegularizedObjectiveCfg {
            beta: -0.5,
            rff_features: 16,
            rff_sigma: 1.0,
            ..Default::default()
        };
        let mut state = BgpgState::for_env(policy, &env, &Bem::ActionConcat, &cfg, 6).unwrap();
        let rec = bgpg_step_onpolicy(&mut state, &env, &Bem::ActionConcat, &cfg, CostFn::L2, 6, 1, 0.0, 6).unwrap();
        assert_eq!(rec.ratio_clips, 0);
    }

    /// Straight-line reference of one on-policy outer iteration with a
    /// single inner round on a tiny tabular instance.
    fn reference_bgpg_step(
        mdp: &TabularMDP,
        policy: &TabularPolicy,
        cfg: &RegularizedObjectiveCfg,
        cost: CostFn,
        batch: usize,
        eta: f64,
        seed: u64,
    ) -> Vec<f64> {
        let env = Env::Tabular(mdp.clone());
        let bem = Bem::ActionConcat;
        let wrapped = Policy::Tabular(policy.clone());
        let iter_seed = rng::derive_seed(seed, "bgpg.iter", 0);

        let taus: Vec<_> = (0..batch)
            .map(|j| rollout(&env, &wrapped, rng::derive_seed(iter_seed, "bgpg.prev", j as u64)).unwrap())
            .collect();
        // Advantages: reward-to-go minus per-timestep batch mean.
        let h = taus[0].rewards.len();
        let mut rtg = vec![vec![0.0; h]; batch];
        for (j, tau) in taus.iter().enumerate() {
            let mut acc = 0.0;
            for i in (0..h).rev() {
                acc += tau.rewards[i];
                rtg[j][i] = acc;
            }
        }
        let mut baseline = vec![0.0; h];
        for j in 0..batch {
            for i in 0..h {
                baseline[i] += rtg[j][i] / batch as f64;
            }
        }
        let adv: Vec<Vec<f64>> = (0..batch)
            .map(|j| (0..h).map(|i| rtg[j][i] - baseline[i]).collect())
            .collect();

        let maps: (FeatureMap, FeatureMap) = (
            FeatureMap::new(h, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "bgpg.map.mu", 0)).unwrap(),
            FeatureMap::new(h, cfg.rff_features, cfg.rff_sigma, rng::derive_seed(seed, "bgpg.map.nu", 0)).unwrap(),
        );
        let p1 = vec![0.0; cfg.rff_features]; // fresh potentials: lambda = 0
        let p2 = vec![0.0; cfg.rff_features];
        let _ = (&maps, &p1, &p2);

        let fresh: Vec<_> = (0..batch)
            .map(|j| rollout(&env, &wrapped, rng::derive_seed(iter_seed, "bgpg.fresh", j as u64)).unwrap())
            .collect();
        let prev_points: Vec<Vec<f64>> = taus.iter().map(|t| bem.embed(t).unwrap()).collect();
        let fresh_points: Vec<Vec<f64>> = fresh.iter().map(|t| bem.embed(t).unwrap()).collect();

        // Gradient: surrogate (ratios are exactly 1 at round start)
        // plus the score-function distance term with lambda = 0:
        // weight_j = beta * gamma * mean_i exp(-C_ij / gamma).
        let mut grad = vec![0.0; policy.logits().len()];
        for (j, tau) in taus.iter().enumerate() {
            for (i, (s, a)) in tau.states.iter().zip(&tau.actions).enumerate() {
                let (_, glogp) = wrapped.log_prob_grad(s, a).unwrap();
                for (g, d) in grad.iter_mut().zip(&glogp) {
                    *g += adv[j][i] * 1.0 * d / batch as f64;
                }
            }
        }
        for (j, tau2) in fresh.iter().enumerate() {
            let mut damp = 0.0;
            for p1 in &prev_points {
                let (f, _) = clamped_exp((0.0 - 0.0 - cost.eval(p1, &fresh_points[j])) / cfg.gamma);
                damp += f / prev_points.len() as f64;
            }
            let weight = cfg.beta * (-0.0 + cfg.gamma * damp);
            let mut score = vec![0.0; grad.len()];
            for (s, a) in tau2.states.iter().zip(&tau2.actions) {
                let (_, glogp) = wrapped.log_prob_grad(s, a).unwrap();
                for (g, d) in score.iter_mut().zip(&glogp) {
                    *g += d;
                }
            }
            for (g, d) in grad.iter_mut().zip(&score) {
                *g += weight * d / batch as f64;
            }
        }
        let mut theta = policy.logits().to_vec();
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t += eta * g;
        }
        theta
    }

    #[test]
    fn one_inner_step_matches_reference() {
        let mdp = three_state_mdp(41);
        let policy = TabularPolicy::random(mdp.num_states, 2, 0.8, 42);
        let cfg = RegularizedObjectiveCfg {
            beta: -1.5,
            gamma: 0.3,
            rff_features: 24,
            rff_sigma: 1.0,
            dual_steps_per_iter: 5,
            ..Default::default()
        };
        let seed = 99;
        let eta = 0.07;
        let batch = 4;
        let want = reference_bgpg_step(&mdp, &policy, &cfg, CostFn::L2, batch, eta, seed);

        let env = Env::Tabular(mdp.clone());
        let mut state = BgpgState::for_env(Policy::Tabular(policy), &env, &Bem::ActionConcat, &cfg, seed).unwrap();
        bgpg_step_onpolicy(&mut state, &env, &Bem::ActionConcat, &cfg, CostFn::L2, batch, 1, eta, seed).unwrap();
        for (got, want) in state.policy.theta().iter().zip(&want) {
            assert!(
                (got - want).abs() < 1e-10,
                "theta mismatch: {got} vs {want}"
            );
        }
    }

    #[test]
    fn offpolicy_zero_coefficients_reduce_to_surrogate_step() {
        let env = Env::multigoal_default();
        let policy = Policy::Gaussian(PolicyParams::init(Arch::new(2, vec![5], 2), 0.5, -0.5, 51));
        // With fresh potentials the distance gradient vanishes, so any
        // beta gives the same first update as the surrogate alone,
        // provided the dual updates are the final phase of the round.
        let mk_cfg = |beta: f64| RegularizedObjectiveCfg {
            beta,
            rff_features: 16,
            rff_sigma: 1.0,
            dual_steps_per_iter: 3,
            ..Default::default()
        };
        let run = |beta: f64| -> Vec<f64> {
            let cfg = mk_cfg(beta);
            let mut state = BgpgState::new(policy.clone(), 4, &cfg, 52).unwrap();
            bgpg_step_offpolicy(&mut state, &env, &cfg, CostFn::L2, 4, 1, 0.02, 64, 53).unwrap();
            state.policy.theta().to_vec()
        };
        let with_beta = run(-2.0);
        let without = run(0.0);
        assert_eq!(with_beta, without);
    }

    #[test]
    fn trust_region_shrinks_step_in_behavior_space() {
        // Increasing |beta| (beta < 0) weakly decreases the exact WD_0
        // between visitation embeddings of consecutive iterates;
        // averaged over seeds, not per seed.
        let betas = [0.0, -2.0, -8.0];
        let mut means = Vec::new();
        for beta in betas {
            let mut total = 0.0;
            let mut count = 0;
            for seed in 0..20u64 {
                let mdp = TabularMDP::random(&[2, 2, 2], 2, 700 + seed).unwrap();
                let policy = TabularPolicy::random(mdp.num_states, 2, 0.7, 800 + seed);
                let cfg = RegularizedObjectiveCfg {
                    beta,
                    gamma: 0.3,
                    alpha_dual: 0.1,
                    dual_steps_per_iter: 40,
                    rff_features: 32,
                    rff_sigma: 1.0,
                    ..Default::default()
                };
                let env = Env::Tabular(mdp.clone());
                let mut state =
                    BgpgState::for_env(Policy::Tabular(policy.clone()), &env, &Bem::StateVisitCount { num_states: mdp.num_states }, &cfg, 900 + seed).unwrap();
                bgpg_step_onpolicy(
                    &mut state,
                    &env,
                    &Bem::StateVisitCount { num_states: mdp.num_states },
                    &cfg,
                    CostFn::L1,
                    8,
                    3,
                    0.5,
                    1000 + seed,
                )
                .unwrap();
                let Policy::Tabular(updated) = &state.policy else { unreachable!() };
                let wd0 = crate::envsim::exact_wd0_state_visitation(&mdp, &policy, updated).unwrap();
                total += wd0;
                count += 1;
            }
            means.push(total / count as f64);
        }
        assert!(
            means[1] <= means[0] + 1e-9 && means[2] <= means[1] + 1e-9,
            "WD_0 means not weakly decreasing in |beta|: {means:?}"
        );
    }
}

mod repulsion_tests {
    use super::*;

    #[test]
    fn beta_zero_policies_learn_independently() {
        let env = Env::multigoal_default();
        let bem = Bem::MeanXDisplacement;
        let a = PolicyParams::init(Arch::new(2, vec![5, 5], 2), 0.5, -1.0, 61);
        let b1 = PolicyParams::init(Arch::new(2, vec![5, 5], 2), 0.5, -1.0, 62);
        let b2 = PolicyParams::init(Arch::new(2, vec![5, 5], 2), 0.5, -1.0, 63);
        let cfg = RegularizedObjectiveCfg {
            beta: 0.0,
            rff_features: 16,
            rff_sigma: 0.1,
            warm_start_steps: 10,
            ..Default::default()
        };
        let mut s1 = RepulsionState::new(a.clone(), b1, &env, &bem, &cfg, 64).unwrap();
        let mut s2 = RepulsionState::new(a, b2, &env, &bem, &cfg, 64).unwrap();
        repulsion_step(&mut s1, &env, &bem, &cfg, CostFn::SquaredAbsScalar, 8, 0.01, 65).unwrap();
        repulsion_step(&mut s2, &env, &bem, &cfg, CostFn::SquaredAbsScalar, 8, 0.01, 65).unwrap();
        // Policy a's update cannot depend on which partner it had.
        assert_eq!(s1.policy_a.theta(), s2.policy_a.theta());
    }

    #[test]
    fn potential_update_direction_matches_dual_sgd_form() {
        // After one repulsion step the potentials must equal a direct
        // run of the dual update rule on the two embedding clouds.
        let env = Env::multigoal_default();
        let bem = Bem::MeanXDisplacement;
        let a = PolicyParams::init(Arch::new(2, vec![5, 5], 2), 0.5, -1.0, 71);
        let b = PolicyParams::init(Arch::new(2, vec![5, 5], 2), 0.5, -1.0, 72);
        let cfg = RegularizedObjectiveCfg {
            beta: 1.0,
            gamma: 0.5,
            alpha_dual: 0.02,
            warm_start_steps: 30,
            rff_features: 16,
            rff_sigma: 0.1,
            ..Default::default()
        };
        let seed = 73;
        let mut state = RepulsionState::new(a.clone(), b.clone(), &env, &bem, &cfg, seed).unwrap();
        repulsion_step(&mut state, &env, &bem, &cfg, CostFn::SquaredAbsScalar, 6, 0.01, seed).unwrap();

        // Reference: replay the same rollouts and dual updates.
        let iter_seed = rng::derive_seed(seed, "rep.iter", 0);
        let wrapped_a = Policy::Gaussian(a);
        let wrapped_b = Policy::Gaussian(b);
        let ra = rng::derive_seed(iter_seed, "rep.roll.a", 0);
        let rb = rng::derive_seed(iter_seed, "rep.roll.b", 0);
        let taus_a: Vec<_> = (0..6)
            .map(|k| rollout(&env, &wrapped_a, rng::derive_seed(ra, "rollout", k)).unwrap())
            .collect();
        let taus_b: Vec<_> = (0..6)
            .map(|k| rollout(&env, &wrapped_b, rng::derive_seed(rb, "rollout", k)).unwrap())
            .collect();
        let cloud_a = embedding_distribution(&bem, &taus_a).unwrap();
        let cloud_b = embedding_distribution(&bem, &taus_b).unwrap();
        let map_mu = FeatureMap::new(1, 16, 0.1, rng::derive_seed(seed, "rep.map.mu", 0)).unwrap();
        let map_nu = FeatureMap::new(1, 16, 0.1, rng::derive_seed(seed, "rep.map.nu", 0)).unwrap();
        let mut reference = DualPotentials::new(map_mu, map_nu, 0.5, 0.02).unwrap();
        crate::transport::wd_solve_empirical(
            &mut reference,
            &cloud_a,
            &cloud_b,
            CostFn::SquaredAbsScalar,
            30,
            rng::derive_seed(iter_seed, "rep.dual", 0),
        )
        .unwrap();
        assert_eq!(state.pot.coefficients(Side::Mu), reference.coefficients(Side::Mu));
        assert_eq!(state.pot.coefficients(Side::Nu), reference.coefficients(Side::Nu));
    }
}

mod imitation_tests {
    use super::*;

    #[test]
    fn rejects_nonnegative_beta() {
        let env = Env::chain_default();
        let policy = PolicyParams::init(Arch::new(1, vec![4], 1), 0.5, -0.5, 81);
        let expert = EmpiricalEmbedding::uniform(vec![vec![1.0; 21]]).unwrap();
        let cfg = RegularizedObjectiveCfg {
            beta: 0.5,
            ..Default::default()
        };
        assert!(imitation_run(policy, &env, &Bem::RewardToGo, &cfg, CostFn::L2, expert, 4, 0.05, 0.05, 1, 82).is_err());
    }

    #[test]
    fn self_expert_distance_stays_small() {
        // Expert cloud = the policy's own embedding distribution: the
        // measured distance stays on the order of the entropic bias.
        let env = Env::chain_default();
        let policy = PolicyParams::init(Arch::new(1, vec![4], 1), 0.5, -0.5, 91);
        let wrapped = Policy::Gaussian(policy.clone());
        let taus: Vec<_> = (0..16)
            .map(|k| rollout(&env, &wrapped, rng::derive_seed(92, "expert", k)).unwrap())
            .collect();
        let expert = embedding_distribution(&Bem::RewardToGo, &taus).unwrap();
        let cfg = RegularizedObjectiveCfg {
            beta: -1.0,
            gamma: 0.1,
            alpha_dual: 0.05,
            warm_start_steps: 200,
            rff_features: 64,
            rff_sigma: 5.0,
            ..Default::default()
        };
        let (_, records) =
            imitation_run(policy, &env, &Bem::RewardToGo, &cfg, CostFn::L2, expert, 8, 0.01, 0.001, 5, 93).unwrap();
        let last = records.last().unwrap();
        assert!(
            last.wd_estimate.abs() <= 1.0,
            "self-imitation distance drifted: {}",
            last.wd_estimate
        );
    }
}
