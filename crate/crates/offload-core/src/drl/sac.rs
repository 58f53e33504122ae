//! Maximum-entropy actor-critic with twin critics and tuned temperature.
//!
//! The actor outputs per-dimension Gaussian parameters (mean, log-std);
//! samples pass through tanh and an affine map into [0,1], with the exact
//! change-of-variables correction in the log-density. Twin critics take the
//! elementwise minimum to curb overestimation, and the temperature follows
//! a gradient toward a fixed entropy target of -action_dim.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::AgentConfig;
use crate::drl::replay::{stack_next_states, stack_states, ActionRecord, Transition};
use crate::nn::{clip_global_norm, soft_update, softplus, Adam, Mlp, MlpSpec};

const LOG_STD_MIN: f64 = -20.0;
const LOG_STD_MAX: f64 = 2.0;

fn concat_columns(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).unwrap()
}

fn stack_actions(batch: &[&Transition], action_dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((batch.len(), action_dim), |(b, k)| match &batch[b].action {
        ActionRecord::Continuous(a) => a[k],
        ActionRecord::Presets(_) => panic!("continuous learner fed preset actions"),
    })
}

/// A reparameterized draw plus everything needed for its gradient.
struct GaussianSample {
    a01: Array2<f64>,
    logp: Vec<f64>,
    tanh_u: Array2<f64>,
    /// std * eps = du/d(log_std) per element.
    std_eps: Array2<f64>,
    /// 1 where the log-std clamp is inactive, 0 where it saturated.
    active: Array2<f64>,
}

/// Squash a Gaussian draw u = mu + std*eps through a = (tanh(u)+1)/2 and
/// accumulate the exact log-density:
/// log pi(a) = sum_k [log N(u_k) - ln(1 - tanh^2 u_k)] + A ln 2,
/// with ln(1 - tanh^2 u) = 2(ln 2 - u - softplus(-2u)) for stability.
fn sample_squashed(out: &Array2<f64>, eps: &Array2<f64>, action_dim: usize) -> GaussianSample {
    let b = out.nrows();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let ln_2 = std::f64::consts::LN_2;
    let mut a01 = Array2::zeros((b, action_dim));
    let mut tanh_u = Array2::zeros((b, action_dim));
    let mut std_eps = Array2::zeros((b, action_dim));
    let mut active = Array2::zeros((b, action_dim));
    let mut logp = Vec::with_capacity(b);
    for i in 0..b {
        let mut lp = action_dim as f64 * ln_2;
        for k in 0..action_dim {
            let mu = out[[i, k]];
            let raw = out[[i, action_dim + k]];
            let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            active[[i, k]] = f64::from(raw > LOG_STD_MIN && raw < LOG_STD_MAX);
            let std = log_std.exp();
            let e = eps[[i, k]];
            let u = mu + std * e;
            let t = u.tanh();
            a01[[i, k]] = 0.5 * (t + 1.0);
            tanh_u[[i, k]] = t;
            std_eps[[i, k]] = std * e;
            lp += -0.5 * ln_2pi - log_std - 0.5 * e * e;
            lp -= 2.0 * (ln_2 - u - softplus(-2.0 * u));
        }
        logp.push(lp);
    }
    GaussianSample { a01, logp, tanh_u, std_eps, active }
}

fn critic_step(net: &mut Mlp, opt: &mut Adam, sa: &Array2<f64>, y: &[f64], clip: f64) -> f64 {
    let b = y.len() as f64;
    let (qv, cache) = net.forward(sa.view());
    let mut dout = Array2::zeros(qv.raw_dim());
    let mut loss = 0.0;
    for i in 0..y.len() {
        let diff = qv[[i, 0]] - y[i];
        loss += diff * diff / b;
        dout[[i, 0]] = 2.0 * diff / b;
    }
    if loss.is_finite() {
        let (mut grads, _) = net.backward(&cache, dout.view());
        clip_global_norm(&mut grads, clip);
        opt.step(net.params_mut(), &grads);
    }
    loss
}

#[derive(Debug, Clone, Copy)]
pub struct SacUpdate {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    /// Sample estimate of the policy entropy, -mean(log pi).
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    actor: Mlp,
    q1: Mlp,
    q2: Mlp,
    q1_target: Mlp,
    q2_target: Mlp,
    opt_actor: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    log_alpha: f64,
    opt_alpha: Adam,
    target_entropy: f64,
    pub action_dim: usize,
    cfg: AgentConfig,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: &AgentConfig, rng: &mut R) -> Self {
        let actor_spec = MlpSpec::new(state_dim, cfg.hidden_width, cfg.hidden_layers, 2 * action_dim);
        let critic_spec = MlpSpec::new(state_dim + action_dim, cfg.hidden_width, cfg.hidden_layers, 1);
        let actor = Mlp::init(actor_spec, rng);
        let q1 = Mlp::init(critic_spec, rng);
        let q2 = Mlp::init(critic_spec, rng);
        SacAgent {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            opt_actor: Adam::new(cfg.lr_sac, actor_spec.param_count()),
            opt_q1: Adam::new(cfg.lr_sac, critic_spec.param_count()),
            opt_q2: Adam::new(cfg.lr_sac, critic_spec.param_count()),
            actor,
            q1,
            q2,
            log_alpha: cfg.sac_alpha_init.ln(),
            opt_alpha: Adam::new(cfg.lr_sac, 1),
            target_entropy: -(action_dim as f64),
            action_dim,
            cfg: cfg.clone(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Deterministic evaluation action: squashed mean.
    pub fn greedy(&self, state: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, state.len()), state).unwrap();
        let out = self.actor.output(x);
        (0..self.action_dim).map(|k| 0.5 * (out[[0, k]].tanh() + 1.0)).collect()
    }

    /// Stochastic action from the current policy.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, state.len()), state).unwrap();
        let out = self.actor.output(x);
        let eps = Array2::from_shape_fn((1, self.action_dim), |_| rng.sample(StandardNormal));
        let g = sample_squashed(&out, &eps, self.action_dim);
        g.a01.row(0).to_vec()
    }

    /// One full update: both critics regress the entropy-adjusted
    /// bootstrapped target, the actor descends alpha*log pi - min(Q1, Q2)
    /// through reparameterized samples, the temperature tracks the entropy
    /// target, and both critic targets move by tau.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[&Transition], rng: &mut R) -> SacUpdate {
        let bsz = batch.len();
        let b = bsz as f64;
        let alpha = self.alpha();
        let s = stack_states(batch);
        let s2 = stack_next_states(batch);
        let a = stack_actions(batch, self.action_dim);

        let out2 = self.actor.output(s2.view());
        let eps2 = Array2::from_shape_fn((bsz, self.action_dim), |_| rng.sample(StandardNormal));
        let g2 = sample_squashed(&out2, &eps2, self.action_dim);
        let sa2 = concat_columns(&s2, &g2.a01);
        let q1t = self.q1_target.output(sa2.view());
        let q2t = self.q2_target.output(sa2.view());
        let y: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let qmin = q1t[[i, 0]].min(q2t[[i, 0]]);
                let bootstrap = qmin - alpha * g2.logp[i];
                t.reward + if t.done { 0.0 } else { self.cfg.gamma * bootstrap }
            })
            .collect();

        let sa = concat_columns(&s, &a);
        let l1 = critic_step(&mut self.q1, &mut self.opt_q1, &sa, &y, self.cfg.grad_clip_sac);
        let l2 = critic_step(&mut self.q2, &mut self.opt_q2, &sa, &y, self.cfg.grad_clip_sac);

        let (out, cache_a) = self.actor.forward(s.view());
        let eps = Array2::from_shape_fn((bsz, self.action_dim), |_| rng.sample(StandardNormal));
        let g = sample_squashed(&out, &eps, self.action_dim);
        let sa_pi = concat_columns(&s, &g.a01);
        let (q1v, c1) = self.q1.forward(sa_pi.view());
        let (q2v, c2) = self.q2.forward(sa_pi.view());
        let mut dout1 = Array2::zeros(q1v.raw_dim());
        let mut dout2 = Array2::zeros(q2v.raw_dim());
        let mut actor_loss = 0.0;
        for i in 0..bsz {
            let (v1, v2) = (q1v[[i, 0]], q2v[[i, 0]]);
            actor_loss += (alpha * g.logp[i] - v1.min(v2)) / b;
            if v1 <= v2 {
                dout1[[i, 0]] = -1.0 / b;
            } else {
                dout2[[i, 0]] = -1.0 / b;
            }
        }
        if actor_loss.is_finite() {
            let (_, din1) = self.q1.backward(&c1, dout1.view());
            let (_, din2) = self.q2.backward(&c2, dout2.view());
            let dinput = &din1 + &din2;
            let da = dinput.slice(s![.., s.ncols()..]);
            let mut dact = Array2::zeros((bsz, 2 * self.action_dim));
            for i in 0..bsz {
                for k in 0..self.action_dim {
                    let t = g.tanh_u[[i, k]];
                    let omt2 = 1.0 - t * t;
                    let se = g.std_eps[[i, k]];
                    let dq_da = da[[i, k]];
                    dact[[i, k]] = (alpha / b) * 2.0 * t + dq_da * 0.5 * omt2;
                    dact[[i, self.action_dim + k]] = g.active[[i, k]]
                        * ((alpha / b) * (-1.0 + 2.0 * t * se) + dq_da * 0.5 * omt2 * se);
                }
            }
            let (mut grads, _) = self.actor.backward(&cache_a, dact.view());
            clip_global_norm(&mut grads, self.cfg.grad_clip_sac);
            self.opt_actor.step(self.actor.params_mut(), &grads);
        }

        let mean_logp = g.logp.iter().sum::<f64>() / b;
        let alpha_grad = -alpha * (mean_logp + self.target_entropy);
        if alpha_grad.is_finite() {
            let mut la = [self.log_alpha];
            self.opt_alpha.step(&mut la, &[alpha_grad]);
            self.log_alpha = la[0];
        }

        soft_update(&mut self.q1_target, &self.q1, self.cfg.tau_sac);
        soft_update(&mut self.q2_target, &self.q2, self.cfg.tau_sac);
        SacUpdate {
            critic_loss: 0.5 * (l1 + l2),
            actor_loss,
            alpha: self.alpha(),
            entropy: -mean_logp,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.actor.spec().input_dim
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.action_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.log_alpha.to_le_bytes());
        out.extend_from_slice(&self.target_entropy.to_le_bytes());
        for net in [&self.actor, &self.q1, &self.q2, &self.q1_target, &self.q2_target] {
            out.extend_from_slice(&net.to_bytes());
        }
        for opt in [&self.opt_actor, &self.opt_q1, &self.opt_q2, &self.opt_alpha] {
            out.extend_from_slice(&opt.to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], cfg: &AgentConfig) -> Result<Self, crate::nn::NnError> {
        let mut r = crate::nn::ByteReader::new(bytes);
        let action_dim = r.u32()? as usize;
        let log_alpha = r.f64()?;
        let target_entropy = r.f64()?;
        let mut rest = r.take(bytes.len() - r.consumed())?;
        let mut nets = Vec::with_capacity(5);
        for _ in 0..5 {
            let (net, used) = Mlp::from_bytes(rest)?;
            nets.push(net);
            rest = &rest[used..];
        }
        let mut opts = Vec::with_capacity(4);
        for _ in 0..4 {
            let (opt, used) = Adam::from_bytes(rest)?;
            opts.push(opt);
            rest = &rest[used..];
        }
        let q2_target = nets.pop().unwrap();
        let q1_target = nets.pop().unwrap();
        let q2 = nets.pop().unwrap();
        let q1 = nets.pop().unwrap();
        let actor = nets.pop().unwrap();
        let opt_alpha = opts.pop().unwrap();
        let opt_q2 = opts.pop().unwrap();
        let opt_q1 = opts.pop().unwrap();
        let opt_actor = opts.pop().unwrap();
        Ok(SacAgent {
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            opt_actor,
            opt_q1,
            opt_q2,
            log_alpha,
            opt_alpha,
            target_entropy,
            action_dim,
            cfg: cfg.clone(),
        })
    }
}
