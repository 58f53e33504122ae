//! Discrete Q-learning with target network and epsilon-greedy exploration.
//!
//! One network emits `heads * actions_per_head` values. A decentralized
//! agent uses a single 25-way head; the centralized controller gives each
//! follower its own head and scores a joint action by summing the selected
//! per-head values, which keeps the output layer linear in fleet size
//! instead of exponential.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::config::AgentConfig;
use crate::drl::replay::{stack_next_states, stack_states, ActionRecord, Transition};
use crate::nn::{clip_global_norm, hard_update, Adam, Mlp, MlpSpec};

#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: Mlp,
    target: Mlp,
    opt: Adam,
    pub heads: usize,
    pub actions_per_head: usize,
    pub epsilon: f64,
    grad_steps: u64,
    cfg: AgentConfig,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        heads: usize,
        actions_per_head: usize,
        cfg: &AgentConfig,
        rng: &mut R,
    ) -> Self {
        let spec = MlpSpec::new(state_dim, cfg.hidden_width, cfg.hidden_layers, heads * actions_per_head);
        let online = Mlp::init(spec, rng);
        let target = online.clone();
        let opt = Adam::new(cfg.lr_dqn, spec.param_count());
        DqnAgent {
            online,
            target,
            opt,
            heads,
            actions_per_head,
            epsilon: cfg.epsilon_start,
            grad_steps: 0,
            cfg: cfg.clone(),
        }
    }

    fn single(&self, state: &[f64]) -> Array2<f64> {
        let x = ArrayView2::from_shape((1, state.len()), state).unwrap();
        self.online.output(x)
    }

    fn argmax_per_head(&self, q_row: &[f64]) -> Vec<usize> {
        (0..self.heads)
            .map(|h| {
                let chunk = &q_row[h * self.actions_per_head..(h + 1) * self.actions_per_head];
                chunk
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect()
    }

    /// Greedy per-head action indices.
    pub fn greedy(&self, state: &[f64]) -> Vec<usize> {
        let q = self.single(state);
        self.argmax_per_head(q.as_slice().unwrap())
    }

    /// Epsilon-greedy: each head independently explores with probability
    /// epsilon.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Vec<usize> {
        let mut choice = self.greedy(state);
        for c in &mut choice {
            if rng.gen::<f64>() < self.epsilon {
                *c = rng.gen_range(0..self.actions_per_head);
            }
        }
        choice
    }

    /// One temporal-difference regression step toward
    /// y = r + gamma * sum_h max_a Q_target(s', h, a); terminal transitions
    /// bootstrap nothing. Returns the batch loss; a non-finite loss rejects
    /// the parameter update.
    pub fn update(&mut self, batch: &[&Transition]) -> f64 {
        let b = batch.len();
        let s = stack_states(batch);
        let s2 = stack_next_states(batch);
        let q_next = self.target.output(s2.view());
        let mut y = Vec::with_capacity(b);
        for (i, t) in batch.iter().enumerate() {
            let mut best_sum = 0.0;
            let row = q_next.row(i);
            for h in 0..self.heads {
                let chunk = &row.as_slice().unwrap()[h * self.actions_per_head..(h + 1) * self.actions_per_head];
                best_sum += chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            }
            let bootstrap = if t.done { 0.0 } else { self.cfg.gamma * best_sum };
            y.push(t.reward + bootstrap);
        }

        let (q, cache) = self.online.forward(s.view());
        let mut dout = Array2::zeros(q.raw_dim());
        let mut loss = 0.0;
        for (i, t) in batch.iter().enumerate() {
            let picks = match &t.action {
                ActionRecord::Presets(p) => p,
                ActionRecord::Continuous(_) => panic!("discrete learner fed continuous actions"),
            };
            debug_assert_eq!(picks.len(), self.heads);
            let mut selected = 0.0;
            for (h, &a) in picks.iter().enumerate() {
                selected += q[[i, h * self.actions_per_head + a]];
            }
            let diff = selected - y[i];
            loss += diff * diff / b as f64;
            for (h, &a) in picks.iter().enumerate() {
                dout[[i, h * self.actions_per_head + a]] = 2.0 * diff / b as f64;
            }
        }
        if !loss.is_finite() {
            return loss;
        }
        let (mut grads, _) = self.online.backward(&cache, dout.view());
        clip_global_norm(&mut grads, self.cfg.grad_clip_dqn);
        self.opt.step(self.online.params_mut(), &grads);
        self.grad_steps += 1;
        if self.grad_steps % self.cfg.target_copy_interval as u64 == 0 {
            hard_update(&mut self.target, &self.online);
        }
        loss
    }

    /// Episode-boundary exploration update.
    pub fn decay_epsilon(&mut self) {
        self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_floor);
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub fn state_dim(&self) -> usize {
        self.online.spec().input_dim
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.heads as u32).to_le_bytes());
        out.extend_from_slice(&(self.actions_per_head as u32).to_le_bytes());
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        out.extend_from_slice(&self.grad_steps.to_le_bytes());
        out.extend_from_slice(&self.online.to_bytes());
        out.extend_from_slice(&self.target.to_bytes());
        out.extend_from_slice(&self.opt.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], cfg: &AgentConfig) -> Result<Self, crate::nn::NnError> {
        use crate::nn::NnError;
        let mut r = crate::nn::ByteReader::new(bytes);
        let heads = r.u32()? as usize;
        let actions_per_head = r.u32()? as usize;
        let epsilon = r.f64()?;
        let grad_steps = r.u64()?;
        let rest = r.take(bytes.len() - r.consumed())?;
        let (online, used1) = Mlp::from_bytes(rest)?;
        let (target, used2) = Mlp::from_bytes(&rest[used1..])?;
        let (opt, _) = Adam::from_bytes(&rest[used1 + used2..])?;
        if online.spec() != target.spec() || online.spec().output_dim != heads * actions_per_head {
            return Err(NnError::Inconsistent);
        }
        Ok(DqnAgent { online, target, opt, heads, actions_per_head, epsilon, grad_steps, cfg: cfg.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn toy_cfg() -> AgentConfig {
        AgentConfig {
            hidden_width: 32,
            hidden_layers: 2,
            lr_dqn: 1e-3,
            gamma: 0.9,
            target_copy_interval: 100,
            ..AgentConfig::default()
        }
    }

    fn terminal(state: Vec<f64>, action: usize, reward: f64) -> Transition {
        Transition {
            next_state: state.clone(),
            state,
            action: ActionRecord::Presets(vec![action]),
            reward,
            done: true,
        }
    }

    #[test]
    fn zeroed_network_on_terminal_batch_gives_unit_loss() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut agent = DqnAgent::new(2, 1, 2, &toy_cfg(), &mut rng);
        agent.online.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let items: Vec<Transition> =
            (0..8).map(|i| terminal(vec![i as f64, 1.0], i % 2, -1.0)).collect();
        let refs: Vec<&Transition> = items.iter().collect();
        // Q = 0 everywhere, target = r = -1 on terminals: squared error 1.
        let loss = agent.update(&refs);
        assert_relative_eq!(loss, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_gamma_reduces_targets_to_rewards() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut cfg = toy_cfg();
        cfg.gamma = 0.0;
        let mut agent = DqnAgent::new(2, 1, 2, &cfg, &mut rng);
        agent.online.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let mut t = terminal(vec![0.5, -0.5], 0, -3.0);
        t.done = false;
        let refs = vec![&t];
        let loss = agent.update(&refs);
        assert_relative_eq!(loss, 9.0, max_relative = 1e-9);
    }

    #[test]
    fn epsilon_decays_monotonically_to_the_floor() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut agent = DqnAgent::new(2, 1, 2, &AgentConfig::default(), &mut rng);
        let mut prev = agent.epsilon;
        assert_relative_eq!(prev, 0.3);
        for _ in 0..5000 {
            agent.decay_epsilon();
            assert!(agent.epsilon <= prev);
            prev = agent.epsilon;
        }
        assert_relative_eq!(agent.epsilon, 0.05);
    }

    #[test]
    fn actions_stay_in_range_under_exploration() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut agent = DqnAgent::new(4, 3, 25, &AgentConfig::default(), &mut rng);
        agent.epsilon = 1.0;
        for i in 0..200 {
            let s = vec![i as f64 * 0.01, -0.5, 0.2, 0.9];
            let a = agent.act(&s, &mut rng);
            assert_eq!(a.len(), 3);
            assert!(a.iter().all(|&x| x < 25));
        }
    }

    #[test]
    fn hard_copy_happens_on_schedule() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut cfg = toy_cfg();
        cfg.target_copy_interval = 3;
        let mut agent = DqnAgent::new(2, 1, 2, &cfg, &mut rng);
        let items: Vec<Transition> = (0..4).map(|i| terminal(vec![i as f64, 0.0], 0, -1.0)).collect();
        let refs: Vec<&Transition> = items.iter().collect();
        agent.update(&refs);
        agent.update(&refs);
        assert_ne!(agent.online.params(), agent.target.params());
        agent.update(&refs);
        assert_eq!(agent.online.params(), agent.target.params());
    }

    #[test]
    fn checkpoint_bytes_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let cfg = toy_cfg();
        let mut agent = DqnAgent::new(3, 2, 4, &cfg, &mut rng);
        let items: Vec<Transition> = (0..6)
            .map(|i| Transition {
                state: vec![i as f64, 0.0, 1.0],
                action: ActionRecord::Presets(vec![i % 4, (i + 1) % 4]),
                reward: -2.0,
                next_state: vec![i as f64, 0.5, 1.0],
                done: true,
            })
            .collect();
        let refs: Vec<&Transition> = items.iter().collect();
        agent.update(&refs);
        let restored = DqnAgent::from_bytes(&agent.to_bytes(), &cfg).unwrap();
        assert_eq!(restored.epsilon, agent.epsilon);
        assert_eq!(restored.grad_steps, agent.grad_steps);
        assert_eq!(restored.greedy(&[0.1, 0.2, 0.3]), agent.greedy(&[0.1, 0.2, 0.3]));
    }

    /// Two states, two actions, deterministic dynamics: action 1 toggles the
    /// state, action 0 keeps it. Rewards favor switching from state 0 and
    /// staying in state 1; value iteration gives the unique optimal policy.
    #[test]
    fn toy_mdp_policy_matches_value_iteration() {
        let reward = |s: usize, a: usize| -> f64 {
            match (s, a) {
                (0, 0) => 0.0,
                (0, 1) => 1.0,
                (1, 0) => 2.0,
                (1, 1) => 0.0,
                _ => unreachable!(),
            }
        };
        let step = |s: usize, a: usize| -> usize { if a == 1 { 1 - s } else { s } };
        let onehot = |s: usize| -> Vec<f64> { vec![(s == 0) as u8 as f64, (s == 1) as u8 as f64] };

        // Value iteration reference.
        let gamma = 0.9;
        let mut q = [[0.0f64; 2]; 2];
        for _ in 0..500 {
            let mut next = q;
            for s in 0..2 {
                for a in 0..2 {
                    let s2 = step(s, a);
                    next[s][a] = reward(s, a) + gamma * q[s2][0].max(q[s2][1]);
                }
            }
            q = next;
        }
        assert_eq!((q[0][1] > q[0][0], q[1][0] > q[1][1]), (true, true));

        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut agent = DqnAgent::new(2, 1, 2, &toy_cfg(), &mut rng);
        let mut pool = Vec::new();
        for _ in 0..512 {
            let s = rng.gen_range(0..2usize);
            let a = rng.gen_range(0..2usize);
            pool.push(Transition {
                state: onehot(s),
                action: ActionRecord::Presets(vec![a]),
                reward: reward(s, a),
                next_state: onehot(step(s, a)),
                done: false,
            });
        }
        for _ in 0..4000 {
            let batch: Vec<&Transition> =
                (0..32).map(|_| &pool[rng.gen_range(0..pool.len())]).collect();
            let loss = agent.update(&batch);
            assert!(loss.is_finite());
        }
        assert_eq!(agent.greedy(&onehot(0)), vec![1], "state 0 should switch");
        assert_eq!(agent.greedy(&onehot(1)), vec![0], "state 1 should stay");
    }
}
