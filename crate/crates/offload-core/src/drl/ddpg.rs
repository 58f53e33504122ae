//! Deterministic actor-critic for continuous [0,1] actions.
//!
//! The actor's raw outputs pass through a sigmoid so every action component
//! is inherently legal; exploration adds scaled mean-reverting noise and
//! clamps. The critic regresses bootstrapped targets from slow-moving
//! target copies of both networks.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::config::AgentConfig;
use crate::drl::ou::OuNoise;
use crate::drl::replay::{stack_next_states, stack_states, ActionRecord, Transition};
use crate::nn::{clip_global_norm, sigmoid, soft_update, Adam, Mlp, MlpSpec};

fn concat_columns(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).unwrap()
}

fn stack_actions(batch: &[&Transition], action_dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((batch.len(), action_dim), |(b, k)| match &batch[b].action {
        ActionRecord::Continuous(a) => a[k],
        ActionRecord::Presets(_) => panic!("continuous learner fed preset actions"),
    })
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    actor: Mlp,
    actor_target: Mlp,
    critic: Mlp,
    critic_target: Mlp,
    opt_actor: Adam,
    opt_critic: Adam,
    noise: OuNoise,
    pub action_dim: usize,
    cfg: AgentConfig,
}

impl DdpgAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: &AgentConfig, rng: &mut R) -> Self {
        let actor_spec = MlpSpec::new(state_dim, cfg.hidden_width, cfg.hidden_layers, action_dim);
        let critic_spec = MlpSpec::new(state_dim + action_dim, cfg.hidden_width, cfg.hidden_layers, 1);
        let actor = Mlp::init(actor_spec, rng);
        let critic = Mlp::init(critic_spec, rng);
        DdpgAgent {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            opt_actor: Adam::new(cfg.lr_ddpg_actor, actor_spec.param_count()),
            opt_critic: Adam::new(cfg.lr_ddpg_critic, critic_spec.param_count()),
            actor,
            critic,
            noise: OuNoise::new(action_dim, cfg.ou_theta, cfg.ou_sigma),
            action_dim,
            cfg: cfg.clone(),
        }
    }

    fn policy(&self, net: &Mlp, states: ArrayView2<f64>) -> Array2<f64> {
        net.output(states).mapv(sigmoid)
    }

    /// Deterministic policy output in [0,1]^A.
    pub fn greedy(&self, state: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, state.len()), state).unwrap();
        self.policy(&self.actor, x).into_raw_vec_and_offset().0
    }

    /// Exploration action: policy plus scaled mean-reverting noise, clamped
    /// back into [0,1].
    pub fn act<R: Rng + ?Sized>(&mut self, state: &[f64], rng: &mut R) -> Vec<f64> {
        let mut a = self.greedy(state);
        let noise = self.noise.step(rng);
        for (x, n) in a.iter_mut().zip(noise) {
            *x = (*x + self.cfg.ou_scale * n).clamp(0.0, 1.0);
        }
        a
    }

    /// Episode boundary: restart the noise process.
    pub fn end_episode(&mut self) {
        self.noise.reset();
    }

    /// One critic regression step toward y = r + gamma * Q'(s', mu'(s')),
    /// then one actor ascent step on Q(s, mu(s)), then soft target updates.
    /// Returns (critic loss, actor loss); a non-finite loss skips that step.
    pub fn update(&mut self, batch: &[&Transition]) -> (f64, f64) {
        let b = batch.len() as f64;
        let s = stack_states(batch);
        let s2 = stack_next_states(batch);
        let a = stack_actions(batch, self.action_dim);

        let a2 = self.policy(&self.actor_target, s2.view());
        let q2 = self.critic_target.output(concat_columns(&s2, &a2).view());
        let y: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| t.reward + if t.done { 0.0 } else { self.cfg.gamma * q2[[i, 0]] })
            .collect();

        let sa = concat_columns(&s, &a);
        let (qv, cache_c) = self.critic.forward(sa.view());
        let mut dout_c = Array2::zeros(qv.raw_dim());
        let mut critic_loss = 0.0;
        for i in 0..batch.len() {
            let diff = qv[[i, 0]] - y[i];
            critic_loss += diff * diff / b;
            dout_c[[i, 0]] = 2.0 * diff / b;
        }
        if critic_loss.is_finite() {
            let (mut grads, _) = self.critic.backward(&cache_c, dout_c.view());
            clip_global_norm(&mut grads, self.cfg.grad_clip_ddpg);
            self.opt_critic.step(self.critic.params_mut(), &grads);
        }

        let (aout, cache_a) = self.actor.forward(s.view());
        let a01 = aout.mapv(sigmoid);
        let (qa, cache_c2) = self.critic.forward(concat_columns(&s, &a01).view());
        let actor_loss = -qa.mean().unwrap();
        if actor_loss.is_finite() {
            let dout_q = Array2::from_elem(qa.raw_dim(), -1.0 / b);
            let (_, dinput) = self.critic.backward(&cache_c2, dout_q.view());
            let da01 = dinput.slice(s![.., s.ncols()..]);
            let dout_a = &da01 * &a01.mapv(|v| v * (1.0 - v));
            let (mut grads, _) = self.actor.backward(&cache_a, dout_a.view());
            clip_global_norm(&mut grads, self.cfg.grad_clip_ddpg);
            self.opt_actor.step(self.actor.params_mut(), &grads);
        }

        soft_update(&mut self.actor_target, &self.actor, self.cfg.tau_ddpg);
        soft_update(&mut self.critic_target, &self.critic, self.cfg.tau_ddpg);
        (critic_loss, actor_loss)
    }

    pub fn state_dim(&self) -> usize {
        self.actor.spec().input_dim
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.action_dim as u32).to_le_bytes());
        for net in [&self.actor, &self.actor_target, &self.critic, &self.critic_target] {
            out.extend_from_slice(&net.to_bytes());
        }
        out.extend_from_slice(&self.opt_actor.to_bytes());
        out.extend_from_slice(&self.opt_critic.to_bytes());
        out
    }

    /// Rebuild from bytes; the noise process restarts at zero.
    pub fn from_bytes(bytes: &[u8], cfg: &AgentConfig) -> Result<Self, crate::nn::NnError> {
        let mut r = crate::nn::ByteReader::new(bytes);
        let action_dim = r.u32()? as usize;
        let mut rest = r.take(bytes.len() - r.consumed())?;
        let mut nets = Vec::with_capacity(4);
        for _ in 0..4 {
            let (net, used) = Mlp::from_bytes(rest)?;
            nets.push(net);
            rest = &rest[used..];
        }
        let (opt_actor, used) = Adam::from_bytes(rest)?;
        let (opt_critic, _) = Adam::from_bytes(&rest[used..])?;
        let critic_target = nets.pop().unwrap();
        let critic = nets.pop().unwrap();
        let actor_target = nets.pop().unwrap();
        let actor = nets.pop().unwrap();
        Ok(DdpgAgent {
            noise: OuNoise::new(action_dim, cfg.ou_theta, cfg.ou_sigma),
            actor,
            actor_target,
            critic,
            critic_target,
            opt_actor,
            opt_critic,
            action_dim,
            cfg: cfg.clone(),
        })
    }
}
