//! Self-contained verification routines used by the acceptance target:
//! finite-difference gradient checks, scalar re-evaluation of the learner
//! formulas, elementwise recomputation of the intervention algebra, and
//! brute-force confirmation of the equilibrium oracle. Each returns a short
//! success summary or the first failing instance.

use std::cell::Cell;

use ndarray::Array1;
use rand::Rng;

use steer_core::agents::{
    bandit_select, bandit_update, best_response_single_round, exp3_distribution, AgentAction,
    LearnerSpec, LearnerState, Selection,
};
use steer_core::env::bandit::{apply_intervention, episode_score, BanditTask, INTERVENTION_LEVELS};
use steer_core::env::stackelberg::{
    stackelberg_equilibrium_oracle, stackelberg_payoffs, PrincipalEquilibrium, StackelbergSetting,
};
use steer_core::env::trace::{EpisodeTrace, TraceStep};
use steer_core::learning::{reinforce_surrogate, replay_surrogate, rollout_bandit_tape, RolloutConfig};
use steer_core::nn::{act, GruSpec, MlpSpec, TapeBindings};
use steer_core::params::ParamVector;
use steer_core::principal::{
    stackelberg_logprob_tape, Conditioning, InterventionPolicy, StackelbergPolicy, WorldModel,
};
use steer_core::rng::SplitRng;
use steer_core::tape::Tape;

pub type Check = std::result::Result<String, String>;

const FD_EPS: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const ORACLE_TRIALS: usize = 1_000;
const EXACT_TOL: f64 = 1e-12;
/// Resolution of the multi-round equilibrium search grid.
const P_GRID_STEPS: usize = 10_000;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn component_slots(params: &ParamVector) -> Vec<(String, usize)> {
    let mut slots = Vec::new();
    for (name, value) in params.iter() {
        for i in 0..value.len() {
            slots.push((name.to_string(), i));
        }
    }
    slots
}

fn read_slot(params: &ParamVector, name: &str, idx: usize) -> f64 {
    let mut out = f64::NAN;
    let mut k = 0usize;
    params.get(name).unwrap().for_each(|x| {
        if k == idx {
            out = x;
        }
        k += 1;
    });
    out
}

fn perturbed(params: &ParamVector, name: &str, idx: usize, eps: f64) -> ParamVector {
    let mut out = params.clone();
    let k = Cell::new(0usize);
    let bumped = params.get(name).unwrap().map(|x| {
        let y = if k.get() == idx { x + eps } else { x };
        k.set(k.get() + 1);
        y
    });
    out.set(name, bumped).unwrap();
    out
}

/// Central-difference comparison on every component; Ok(count checked).
fn grad_matches_fd(
    params: &ParamVector,
    grad: &ParamVector,
    f: impl Fn(&ParamVector) -> f64,
    label: &str,
) -> std::result::Result<usize, String> {
    let mut checked = 0;
    for (name, idx) in component_slots(params) {
        let up = f(&perturbed(params, &name, idx, FD_EPS));
        let down = f(&perturbed(params, &name, idx, -FD_EPS));
        let fd = (up - down) / (2.0 * FD_EPS);
        let g = read_slot(grad, &name, idx);
        let tol = FD_REL_TOL * g.abs().max(fd.abs()) + 1e-8;
        ensure((g - fd).abs() <= tol, || {
            format!("{label}: {name}[{idx}] grad {g} vs fd {fd}")
        })?;
        checked += 1;
    }
    Ok(checked)
}

fn mlp_head_fd() -> std::result::Result<usize, String> {
    let mut total = 0;
    for seed in 0..20u64 {
        let mut rng = SplitRng::new(1_000 + seed);
        let hidden = 3 + (seed as usize % 4);
        let policy = StackelbergPolicy::new(hidden, &mut rng);
        let u_obs: f64 = rng.random_range(0.05..0.95);
        let intervene = rng.random::<f64>() < 0.5;

        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &policy.params).map_err(|e| e.to_string())?;
        let lp = stackelberg_logprob_tape(&policy, &mut tape, &tp, u_obs, intervene)
            .map_err(|e| e.to_string())?;
        let grad = tape.grad(lp).map_err(|e| e.to_string())?;

        let spec = MlpSpec::new(1, hidden);
        total += grad_matches_fd(
            &policy.params,
            &grad,
            |p| {
                let z = spec.logit(p, &ndarray::array![u_obs]).unwrap();
                let prob = act::sigmoid(z);
                if intervene {
                    prob.ln()
                } else {
                    (1.0 - prob).ln()
                }
            },
            "mlp sigmoid head",
        )?;
    }
    Ok(total)
}

fn gru_head_fd() -> std::result::Result<usize, String> {
    let mut total = 0;
    for seed in 0..20u64 {
        let mut rng = SplitRng::new(2_000 + seed);
        let input_dim = 2 + (seed as usize % 3);
        let hidden = 3 + (seed as usize % 3);
        let layers = 1 + (seed as usize % 2);
        let out_dim = 3 + (seed as usize % 2);
        let steps = 3 + (seed as usize % 3);
        let spec = GruSpec::new(input_dim, hidden, layers, out_dim);
        let params = spec.init_params(&mut rng);

        let inputs: Vec<Array1<f64>> = (0..steps)
            .map(|_| Array1::from_iter((0..input_dim).map(|_| rng.random_range(-1.0..1.0))))
            .collect();
        let targets: Vec<usize> = (0..steps).map(|_| rng.random_range(0..out_dim)).collect();

        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &params).map_err(|e| e.to_string())?;
        let mut state: Vec<_> =
            (0..layers).map(|_| tape.constant(Array1::<f64>::zeros(hidden))).collect();
        let mut terms = Vec::new();
        for (x, &a) in inputs.iter().zip(&targets) {
            let xn = tape.constant(x.clone());
            let (next, top) = spec.step_tape(&mut tape, &tp, xn, &state).map_err(|e| e.to_string())?;
            state = next;
            let logits = spec.head_tape(&mut tape, &tp, top).map_err(|e| e.to_string())?;
            terms.push(tape.log_softmax_pick(logits, a));
        }
        let loss = tape.add_n(&terms);
        let grad = tape.grad(loss).map_err(|e| e.to_string())?;

        total += grad_matches_fd(
            &params,
            &grad,
            |p| {
                let mut st = spec.zero_state();
                let mut sum = 0.0;
                for (x, &a) in inputs.iter().zip(&targets) {
                    let (next, top) = spec.step(p, x, &st).unwrap();
                    st = next;
                    let probs = act::softmax(&spec.head(p, &top).unwrap());
                    sum += probs[a].ln();
                }
                sum
            },
            "gru softmax head",
        )?;
    }
    Ok(total)
}

fn surrogate_fd() -> std::result::Result<usize, String> {
    let conditionings = [
        Conditioning::Full,
        Conditioning::PrevOnly,
        Conditioning::PredictedOnly,
        Conditioning::TrueActionOnly,
    ];
    let mut total = 0;
    for seed in 0..20u64 {
        let mut rng = SplitRng::new(3_000 + seed);
        let conditioning = conditionings[seed as usize % conditionings.len()];
        let num_arms = 2 + (seed as usize % 3);
        let mut rewards: Vec<f64> = (0..num_arms).map(|_| rng.random_range(0.05..0.95)).collect();
        rewards[0] = 0.97;
        let a_star = 1 + (seed as usize % (num_arms - 1));
        let task = BanditTask::new(rewards, a_star, 0.1, LearnerSpec::Ucb { beta: 0.17 })
            .map_err(|e| e.to_string())?;
        let policy = InterventionPolicy::new(num_arms, conditioning, 3, 1, &mut rng.child(0));
        let wm = conditioning
            .uses_prediction()
            .then(|| WorldModel::new(num_arms, 3, 1, &mut rng.child(1)));
        let cfg = RolloutConfig::new(5, 0.2, 0.95).map_err(|e| e.to_string())?;

        let mut tape = Tape::new();
        let bindings = TapeBindings::leaves(&mut tape, &policy.params).map_err(|e| e.to_string())?;
        let episode =
            rollout_bandit_tape(&mut tape, &bindings, &policy, wm.as_ref(), &task, &cfg, &mut rng.child(2))
                .map_err(|e| e.to_string())?;
        let baseline = 0.3;
        let replay = vec![(episode.trace.clone(), episode.utilities.clone())];
        let surrogate =
            reinforce_surrogate(&mut tape, &[episode], cfg.gamma, baseline).map_err(|e| e.to_string())?;
        let grad = tape.grad(surrogate).map_err(|e| e.to_string())?;

        let direct = replay_surrogate(&policy, &replay, cfg.gamma, baseline).map_err(|e| e.to_string())?;
        let taped = tape.value(surrogate).as_scalar().map_err(|e| e.to_string())?;
        ensure((taped - direct).abs() < 1e-9, || {
            format!("surrogate value mismatch: taped {taped} vs replay {direct}")
        })?;

        total += grad_matches_fd(
            &policy.params,
            &grad,
            |p| {
                let pol =
                    InterventionPolicy::from_params(policy.spec.clone(), conditioning, p.clone())
                        .unwrap();
                replay_surrogate(&pol, &replay, cfg.gamma, baseline).unwrap()
            },
            "reinforce surrogate",
        )?;
    }
    Ok(total)
}

/// Quadratic toy with analytic gradient through K inner updates; see the
/// second-order and first-order closed forms in the assertions.
fn quadratic_chain() -> std::result::Result<usize, String> {
    let mut checked = 0;
    for (k_steps, first_order) in [(1, false), (2, false), (1, true), (2, true)] {
        let mut rng = SplitRng::new(4_000 + k_steps as u64 + u64::from(first_order));
        let dim = 3;
        let a = Array1::from_iter((0..dim).map(|_| rng.random_range(0.2..1.0)));
        let b = Array1::from_iter((0..dim).map(|_| rng.random_range(0.2..1.0)));
        let theta0 = Array1::from_iter((0..dim).map(|_| rng.random_range(-1.0..1.0)));
        let lr = 0.07;

        let mut params = ParamVector::new();
        params.insert("theta", theta0.clone()).map_err(|e| e.to_string())?;
        let mut tape = Tape::new();
        let tp = TapeBindings::leaves(&mut tape, &params).map_err(|e| e.to_string())?;
        let a_node = tape.constant(a.clone());
        let b_node = tape.constant(b.clone());

        let mut theta = tp.get("theta").map_err(|e| e.to_string())?;
        for _ in 0..k_steps {
            let sq = tape.mul(theta, theta);
            let weighted = tape.mul(a_node, sq);
            let loss = tape.sum(weighted);
            let g = tape.grad_nodes(loss, &[theta]).map_err(|e| e.to_string())?[0];
            let g = if first_order {
                let detached = tape.value(g).clone();
                tape.constant(detached)
            } else {
                g
            };
            let step = tape.scale(g, lr);
            theta = tape.sub(theta, step);
        }
        let sq = tape.mul(theta, theta);
        let weighted = tape.mul(b_node, sq);
        let meta = tape.sum(weighted);
        let grad = tape.grad(meta).map_err(|e| e.to_string())?;
        let got = grad.get("theta").unwrap().as_vector().map_err(|e| e.to_string())?.clone();

        let exponent = if first_order { k_steps } else { 2 * k_steps };
        for j in 0..dim {
            let shrink = (1.0 - 2.0 * a[j] * lr).powi(exponent as i32);
            let want = 2.0 * b[j] * theta0[j] * shrink;
            let rel = (got[j] - want).abs() / want.abs().max(1e-12);
            ensure(rel < 1e-6, || {
                format!(
                    "quadratic chain k={k_steps} first_order={first_order} j={j}: got {} want {want}",
                    got[j]
                )
            })?;
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn check_gradients() -> Check {
    let mlp = mlp_head_fd()?;
    let gru = gru_head_fd()?;
    let sur = surrogate_fd()?;
    let quad = quadratic_chain()?;
    ensure(mlp >= 200 && gru >= 200 && sur >= 200, || {
        format!("too few components checked: mlp {mlp}, gru {gru}, surrogate {sur}")
    })?;
    Ok(format!(
        "fd components: mlp {mlp}, gru {gru}, surrogate {sur}; quadratic chain {quad} slots at 1e-6"
    ))
}

fn random_state(rng: &mut SplitRng, num_arms: usize) -> LearnerState {
    let mut s = LearnerState::new(num_arms);
    for a in 0..num_arms {
        s.counts[a] = rng.random_range(1..40);
        s.means[a] = rng.random_range(0.0..1.0);
        s.exp3_s[a] = rng.random_range(-4.0..4.0);
    }
    s.t = s.counts.iter().sum::<u64>() + 1;
    s
}

pub fn check_learner_oracles() -> Check {
    let mut rng = SplitRng::new(11);
    for trial in 0..ORACLE_TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let beta: f64 = rng.random_range(0.05..1.0);
        let t = s.t as f64;
        let mut best = 0usize;
        let mut best_idx = f64::NEG_INFINITY;
        for a in 0..num_arms {
            let idx = s.means[a] + beta * (t.ln() / s.counts[a] as f64).sqrt();
            if idx > best_idx {
                best_idx = idx;
                best = a;
            }
        }
        let got = bandit_select(&LearnerSpec::Ucb { beta }, &s, &mut rng.child(trial as u64))
            .map_err(|e| e.to_string())?;
        ensure(got.action == best, || {
            format!("ucb trial {trial}: selected {} want {best}", got.action)
        })?;
    }

    let mut rng = SplitRng::new(13);
    for trial in 0..ORACLE_TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let a = rng.random_range(0..num_arms);
        let r: f64 = rng.random_range(-1.0..2.0);
        let want_mean = (s.means[a] * s.counts[a] as f64 + r) / (s.counts[a] as f64 + 1.0);
        let next = bandit_update(
            &LearnerSpec::Ucb { beta: 0.17 },
            s.clone(),
            Selection { action: a, prob: None },
            r,
        )
        .map_err(|e| e.to_string())?;
        ensure((next.means[a] - want_mean).abs() < EXACT_TOL, || {
            format!("mean update trial {trial}: {} want {want_mean}", next.means[a])
        })?;
        ensure(next.counts[a] == s.counts[a] + 1 && next.t == s.t + 1, || {
            format!("count/time update trial {trial}")
        })?;
    }

    let mut rng = SplitRng::new(14);
    for trial in 0..ORACLE_TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let eps: f64 = rng.random_range(0.0..1.0);
        let mut oracle_rng = rng.child(trial as u64);
        let want = if oracle_rng.random::<f64>() < eps {
            oracle_rng.random_range(0..num_arms)
        } else {
            let mut best = 0;
            for a in 1..num_arms {
                if s.means[a] > s.means[best] {
                    best = a;
                }
            }
            best
        };
        let got = bandit_select(&LearnerSpec::EpsGreedy { eps }, &s, &mut rng.child(trial as u64))
            .map_err(|e| e.to_string())?;
        ensure(got.action == want, || {
            format!("eps trial {trial}: selected {} want {want}", got.action)
        })?;
    }

    let mut rng = SplitRng::new(15);
    for trial in 0..ORACLE_TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let w: f64 = rng.random_range(0.01..1.0);
        let probs = exp3_distribution(&s, w);
        let m = s.exp3_s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = s.exp3_s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        for a in 0..num_arms {
            let want = w / num_arms as f64 + (1.0 - w) * exps[a] / z;
            ensure((probs[a] - want).abs() < EXACT_TOL, || {
                format!("exp3 distribution trial {trial} arm {a}: {} want {want}", probs[a])
            })?;
        }
    }

    let mut rng = SplitRng::new(16);
    for trial in 0..ORACLE_TRIALS {
        let num_arms = 2 + trial % 9;
        let s = random_state(&mut rng, num_arms);
        let a = rng.random_range(0..num_arms);
        let r: f64 = rng.random_range(-1.0..2.0);
        let pi: f64 = rng.random_range(0.01..1.0);
        let next = bandit_update(
            &LearnerSpec::Exp3 { w: 0.1 },
            s.clone(),
            Selection { action: a, prob: Some(pi) },
            r,
        )
        .map_err(|e| e.to_string())?;
        ensure((next.exp3_s[a] - (s.exp3_s[a] + r / pi)).abs() < EXACT_TOL, || {
            format!("exp3 update trial {trial}: {} want {}", next.exp3_s[a], s.exp3_s[a] + r / pi)
        })?;
    }
    Ok(format!("{ORACLE_TRIALS} states per formula, all within {EXACT_TOL:e}"))
}

fn random_trace(rng: &mut SplitRng, len: usize) -> EpisodeTrace {
    let mut trace = EpisodeTrace::new();
    for t in 0..len {
        let level = INTERVENTION_LEVELS[rng.random_range(0..INTERVENTION_LEVELS.len())];
        trace.steps.push(TraceStep {
            t: t + 1,
            agent_action: rng.random_range(0..5),
            intervention: level,
            cost: level,
            agent_reward: rng.random_range(-1.0..2.0),
            principal_reward: f64::from(rng.random::<f64>() < 0.5),
            logprob: -rng.random_range(0.0..3.0),
            wm_prediction: None,
        });
    }
    trace
}

pub fn check_intervention_algebra() -> Check {
    let mut rng = SplitRng::new(31);
    for trial in 0..ORACLE_TRIALS {
        let num_arms = 2 + trial % 11;
        let base: Vec<f64> = (0..num_arms).map(|_| rng.random_range(0.0..1.0)).collect();
        let a_star = rng.random_range(0..num_arms);
        let level = INTERVENTION_LEVELS[rng.random_range(0..INTERVENTION_LEVELS.len())];
        let got = apply_intervention(&base, a_star, level).map_err(|e| e.to_string())?;
        for a in 0..num_arms {
            let want = if a == a_star { base[a] + level } else { base[a] - level };
            ensure(got[a] == want, || {
                format!("intervention trial {trial} arm {a}: {} want {want}", got[a])
            })?;
        }
    }

    let mut rng = SplitRng::new(32);
    for trial in 0..500 {
        let trace = random_trace(&mut rng, 1 + trial % 64);
        let alpha: f64 = rng.random_range(0.0..1.0);
        let mut want = 0.0;
        for step in &trace.steps {
            want += step.principal_reward - alpha * step.cost;
        }
        let got = episode_score(&trace, alpha, 1.0);
        ensure(got == want, || format!("undiscounted score trial {trial}: {got} vs {want}"))?;
    }

    let mut rng = SplitRng::new(33);
    for trial in 0..500 {
        let trace = random_trace(&mut rng, 1 + trial % 64);
        let alpha: f64 = rng.random_range(0.0..1.0);
        let gamma: f64 = rng.random_range(0.5..1.0);
        let want: f64 = trace
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| gamma.powi(i as i32) * (s.principal_reward - alpha * s.cost))
            .sum();
        let got = episode_score(&trace, alpha, gamma);
        ensure((got - want).abs() < EXACT_TOL, || {
            format!("discounted score trial {trial}: {got} vs {want}")
        })?;
    }
    Ok(format!(
        "{ORACLE_TRIALS} reward-shift triples elementwise exact; 1000 scores vs brute force"
    ))
}

pub fn check_equilibrium_oracle() -> Check {
    let c = 0.75;
    let mut rng = SplitRng::new(41);
    for _ in 0..ORACLE_TRIALS {
        let u: f64 = rng.random_range(0.001..0.999);
        // Brute force: the agent best-responds to each leader action (ties
        // to Cooperate); the leader takes the action with the higher payoff.
        let mut payoff = [0.0f64; 2];
        for (i, intervene) in [false, true].into_iter().enumerate() {
            let (coop, _) = stackelberg_payoffs(u, c, AgentAction::Cooperate, intervene);
            let (defect, _) = stackelberg_payoffs(u, c, AgentAction::Defect, intervene);
            let br = if coop >= defect { AgentAction::Cooperate } else { AgentAction::Defect };
            ensure(best_response_single_round(u, intervene) == br, || {
                format!("best response mismatch at u={u} intervene={intervene}")
            })?;
            payoff[i] = stackelberg_payoffs(u, c, br, intervene).1;
        }
        let want_intervene = payoff[1] > payoff[0];
        let oracle = stackelberg_equilibrium_oracle(u, c, StackelbergSetting::SingleRoundPerfect);
        match oracle.principal {
            PrincipalEquilibrium::Pure { intervene } => {
                ensure(intervene == want_intervene, || {
                    format!("single-round oracle at u={u}: intervene={intervene}, brute force {want_intervene}")
                })?;
            }
            PrincipalEquilibrium::Mixed { .. } => {
                return Err(format!("single-round oracle returned a mixed strategy at u={u}"))
            }
        }
        ensure(oracle.agent == AgentAction::Cooperate, || {
            format!("single-round oracle agent action at u={u}")
        })?;
    }

    let mut rng = SplitRng::new(42);
    for trial in 0..ORACLE_TRIALS {
        let u: f64 = rng.random_range(0.001..0.999);
        let oracle = stackelberg_equilibrium_oracle(u, c, StackelbergSetting::MultiRoundNoisy);
        let p_star = match oracle.principal {
            PrincipalEquilibrium::Mixed { p_star } => p_star,
            PrincipalEquilibrium::Pure { .. } => {
                return Err(format!("multi-round oracle returned a pure strategy at u={u}"))
            }
        };
        // Minimal grid point where cooperating weakly dominates defecting.
        let step = 1.0 / P_GRID_STEPS as f64;
        let on_grid = (p_star / step).round() * step;
        ensure((p_star - on_grid).abs() < 1e-9, || {
            format!("trial {trial}: p*={p_star} is off the {P_GRID_STEPS}-step grid")
        })?;
        ensure(u + p_star >= 1.0 - u - p_star, || {
            format!("trial {trial}: condition fails at p*={p_star} for u={u}")
        })?;
        if p_star > 0.0 {
            let prev = p_star - step;
            ensure(u + prev < 1.0 - u - prev, || {
                format!("trial {trial}: p*={p_star} not minimal for u={u}")
            })?;
        }
    }
    Ok(format!("{ORACLE_TRIALS} single-round types vs 2x2 brute force; {ORACLE_TRIALS} multi-round p* minimality"))
}
