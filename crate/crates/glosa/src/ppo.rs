//! Clipped-surrogate policy optimization for the hybrid action policy.
//!
//! Transitions accumulate in a buffer across episodes; once full, the
//! update freezes one-step advantages and value targets, then runs several
//! shuffled minibatch epochs. Each minibatch takes three sequential
//! optimizer steps: the discrete surrogate (shared encoder + discrete
//! head), the continuous surrogate (shared encoder + continuous head +
//! noise scale), and the value regression (critic only).

use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EpisodeMetrics, GlosaEnv, HybridAction};
use crate::error::{GlosaError, Result};
use crate::nn::{Adam, LossSample, ParamGroup, PolicyConfig, PolicyGrads, PolicySet};
use crate::rng::{derive_rng, Stream};

/// Index within the policy stream reserved for weight initialization;
/// episode indices stay far below it.
pub const WEIGHT_INIT_INDEX: u64 = u64::MAX;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub lr_discrete: f64,
    pub lr_continuous: f64,
    pub lr_critic: f64,
    /// Transitions collected before an update; the update fires the moment
    /// the buffer reaches this size, even mid-episode.
    pub buffer_capacity: usize,
    pub minibatch: usize,
    /// Clip half-width for both surrogates.
    pub clip: f64,
    /// Shuffled passes over the buffer per update.
    pub epochs_per_update: u32,
    pub gamma: f64,
    pub episodes: u64,
    pub normalize_advantages: bool,
    /// Alternate reading of the update budget: one pass with minibatches
    /// of eight instead of eight passes with minibatches of `minibatch`.
    pub small_batch_mode: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            lr_discrete: 3e-5,
            lr_continuous: 3e-5,
            lr_critic: 1e-3,
            buffer_capacity: 10_000,
            minibatch: 256,
            clip: 0.1,
            epochs_per_update: 8,
            gamma: 0.99,
            episodes: 5_000,
            normalize_advantages: true,
            small_batch_mode: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [
            ("lr_discrete", self.lr_discrete),
            ("lr_continuous", self.lr_continuous),
            ("lr_critic", self.lr_critic),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(GlosaError::Config(format!("{name} must be positive")));
            }
        }
        if self.buffer_capacity == 0 || self.minibatch == 0 {
            return Err(GlosaError::Config("buffer and minibatch must be positive".into()));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(GlosaError::Config("clip must lie in (0, 1)".into()));
        }
        if self.epochs_per_update == 0 {
            return Err(GlosaError::Config("epochs_per_update must be positive".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(GlosaError::Config("gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// (epochs, minibatch size) after resolving `small_batch_mode`.
    fn schedule(&self) -> (u32, usize) {
        if self.small_batch_mode {
            (1, 8)
        } else {
            (self.epochs_per_update, self.minibatch)
        }
    }
}

/// One stored decision step. Observations are stored normalized, exactly
/// as the policy saw them; the continuous action is kept pre-clamp so old
/// log-densities stay exact.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub advise: bool,
    pub raw_accel: f64,
    pub logp_discrete: f64,
    pub logp_continuous: f64,
    pub reward: f64,
    pub obs_next: Vec<f64>,
    pub done: bool,
}

/// One-step advantage and value target from a frozen critic evaluation.
pub fn advantage_and_target(
    reward: f64,
    v_state: f64,
    v_next: f64,
    done: bool,
    gamma: f64,
) -> (f64, f64) {
    let target = reward + gamma * v_next * (1.0 - done as u8 as f64);
    (target - v_state, target)
}

/// Aggregate statistics of one buffer update, weighted over all minibatch
/// evaluations.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub transitions: usize,
    pub discrete_loss: f64,
    pub continuous_loss: f64,
    pub critic_loss: f64,
    pub discrete_ratio: f64,
    pub continuous_ratio: f64,
    pub discrete_clip_fraction: f64,
    pub continuous_clip_fraction: f64,
    pub discrete_entropy: f64,
    pub continuous_entropy: f64,
    /// Exploration noise scale after the update.
    pub sigma: f64,
    /// Ratio evaluations that hit the hard cap.
    pub ratio_caps: u64,
}

pub struct Trainer {
    pub policy: PolicySet,
    cfg: TrainerConfig,
    buffer: Vec<Transition>,
    opt_discrete: Option<Adam>,
    opt_continuous: Adam,
    opt_critic: Adam,
    grads: PolicyGrads,
    shuffle_rng: ChaCha12Rng,
    updates_done: u64,
    scratch_params: Vec<f64>,
    scratch_grads: Vec<f64>,
}

impl Trainer {
    pub fn new(policy: PolicySet, cfg: TrainerConfig, master_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let opt_discrete = policy
            .discrete
            .is_some()
            .then(|| Adam::new(cfg.lr_discrete, policy.group_len(ParamGroup::Discrete)));
        let opt_continuous = Adam::new(cfg.lr_continuous, policy.group_len(ParamGroup::Continuous));
        let opt_critic = Adam::new(cfg.lr_critic, policy.group_len(ParamGroup::Critic));
        let grads = policy.grads();
        Ok(Self {
            buffer: Vec::with_capacity(cfg.buffer_capacity + 512),
            opt_discrete,
            opt_continuous,
            opt_critic,
            grads,
            shuffle_rng: derive_rng(master_seed, Stream::Shuffle, 0),
            updates_done: 0,
            scratch_params: Vec::new(),
            scratch_grads: Vec::new(),
            policy,
            cfg,
        })
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn buffer_full(&self) -> bool {
        self.buffer.len() >= self.cfg.buffer_capacity
    }

    pub fn updates_done(&self) -> u64 {
        self.updates_done
    }

    pub fn push(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    fn adam_step(&mut self, group: ParamGroup) -> Result<()> {
        let opt = match group {
            ParamGroup::Discrete => self.opt_discrete.as_mut().expect("checked by caller"),
            ParamGroup::Continuous => &mut self.opt_continuous,
            ParamGroup::Critic => &mut self.opt_critic,
        };
        self.policy.gather_params(group, &mut self.scratch_params);
        self.policy.gather_grads(&self.grads, group, &mut self.scratch_grads);
        opt.step(&mut self.scratch_params, &self.scratch_grads)?;
        self.policy.scatter_params(group, &self.scratch_params)
    }

    /// Consume the buffer in one multi-epoch clipped update.
    pub fn update(&mut self) -> Result<UpdateStats> {
        if self.buffer.is_empty() {
            return Err(GlosaError::Contract("update on an empty buffer".into()));
        }
        let buffer = std::mem::take(&mut self.buffer);
        // Freeze advantages and targets under the current critic.
        let n = buffer.len();
        let mut advantages = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for t in &buffer {
            let v_s = self.policy.value(&t.obs);
            let v_n = self.policy.value(&t.obs_next);
            let (a, tgt) = advantage_and_target(t.reward, v_s, v_n, t.done, self.cfg.gamma);
            advantages.push(a);
            targets.push(tgt);
        }
        if self.cfg.normalize_advantages {
            let mean = advantages.iter().sum::<f64>() / n as f64;
            let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let denom = var.sqrt() + 1e-8;
            advantages.iter_mut().for_each(|a| *a = (*a - mean) / denom);
        }
        if advantages.iter().any(|a| !a.is_finite()) {
            return Err(GlosaError::Numeric("non-finite advantage".into()));
        }

        let (epochs, minibatch) = self.cfg.schedule();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats { transitions: n, ..UpdateStats::default() };
        let mut weight = 0.0;
        for _ in 0..epochs {
            idx.shuffle(&mut self.shuffle_rng);
            for chunk in idx.chunks(minibatch) {
                let batch: Vec<LossSample> = chunk
                    .iter()
                    .map(|&i| {
                        let t = &buffer[i];
                        LossSample {
                            obs: &t.obs,
                            advise: t.advise,
                            raw_accel: t.raw_accel,
                            logp_old_discrete: t.logp_discrete,
                            logp_old_continuous: t.logp_continuous,
                            advantage: advantages[i],
                            target: targets[i],
                        }
                    })
                    .collect();
                let w = batch.len() as f64;
                if self.policy.discrete.is_some() {
                    let d = self.policy.discrete_loss_grad(&batch, self.cfg.clip, &mut self.grads)?;
                    self.adam_step(ParamGroup::Discrete)?;
                    stats.discrete_loss += w * d.loss;
                    stats.discrete_ratio += w * d.mean_ratio;
                    stats.discrete_clip_fraction += w * d.clip_fraction;
                    stats.discrete_entropy += w * d.entropy;
                    stats.ratio_caps += d.ratio_caps;
                }
                let c = self.policy.continuous_loss_grad(&batch, self.cfg.clip, &mut self.grads)?;
                self.adam_step(ParamGroup::Continuous)?;
                let v = self.policy.critic_loss_grad(&batch, &mut self.grads)?;
                self.adam_step(ParamGroup::Critic)?;
                stats.continuous_loss += w * c.loss;
                stats.continuous_ratio += w * c.mean_ratio;
                stats.continuous_clip_fraction += w * c.clip_fraction;
                stats.continuous_entropy += w * c.entropy;
                stats.ratio_caps += c.ratio_caps;
                stats.critic_loss += w * v;
                weight += w;
            }
        }
        stats.discrete_loss /= weight;
        stats.discrete_ratio /= weight;
        stats.discrete_clip_fraction /= weight;
        stats.discrete_entropy /= weight;
        stats.continuous_loss /= weight;
        stats.continuous_ratio /= weight;
        stats.continuous_clip_fraction /= weight;
        stats.continuous_entropy /= weight;
        stats.critic_loss /= weight;
        stats.sigma = self.policy.sigma();
        self.updates_done += 1;
        Ok(stats)
    }
}

/// Per-episode training record.
#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub episode: u64,
    pub reward_total: f64,
    pub decision_steps: u32,
    pub metrics: EpisodeMetrics,
}

/// Per-update training record.
#[derive(Debug, Clone)]
pub struct UpdateLog {
    pub update: u64,
    pub after_episode: u64,
    pub stats: UpdateStats,
}

/// Run one training episode: drive to the advisory zone, then sample
/// hybrid actions until the stop line, pushing transitions into the
/// trainer's buffer. The buffer is consumed the moment it reaches
/// capacity, even mid-episode, so it never grows past its limit;
/// `on_update` observes each such update. Returns the episode log.
pub fn run_training_episode(
    trainer: &mut Trainer,
    env_cfg: &EnvConfig,
    master_seed: u64,
    episode: u64,
    mut on_update: impl FnMut(&UpdateLog),
) -> Result<EpisodeLog> {
    let world_rng = derive_rng(master_seed, Stream::World, episode);
    let mut init_rng = derive_rng(master_seed, Stream::Init, episode);
    let mut policy_rng = derive_rng(master_seed, Stream::Policy, episode);
    let mut env = GlosaEnv::new(env_cfg.clone(), world_rng, &mut init_rng)?;
    let mut reward_total = 0.0;
    let mut steps = 0u32;
    if let Some(first) = env.advance_to_zone()? {
        let mut obs = first;
        loop {
            let obs_n = obs.normalized(&env_cfg.obs);
            let s = trainer.policy.sample(&obs_n, &mut policy_rng);
            let out = env.step(HybridAction { advise: s.advise, accel: s.accel })?;
            let obs_next_n =
                out.obs.as_ref().map(|o| o.normalized(&env_cfg.obs)).unwrap_or(obs_n);
            trainer.push(Transition {
                obs: obs_n.to_vec(),
                advise: s.advise,
                raw_accel: s.raw_accel,
                logp_discrete: s.logp_discrete,
                logp_continuous: s.logp_continuous,
                reward: out.reward.total,
                obs_next: obs_next_n.to_vec(),
                done: out.terminal,
            });
            reward_total += out.reward.total;
            steps += 1;
            if trainer.buffer_full() {
                let stats = trainer.update()?;
                on_update(&UpdateLog {
                    update: trainer.updates_done(),
                    after_episode: episode,
                    stats,
                });
            }
            if out.terminal {
                break;
            }
            obs = out.obs.expect("non-terminal step yields an observation");
        }
    }
    env.finish()?;
    Ok(EpisodeLog { episode, reward_total, decision_steps: steps, metrics: env.metrics() })
}

/// Full training run. Callbacks observe every episode and every update.
pub fn train<FE, FU>(
    env_cfg: &EnvConfig,
    policy_cfg: &PolicyConfig,
    t_cfg: &TrainerConfig,
    master_seed: u64,
    mut on_episode: FE,
    mut on_update: FU,
) -> Result<PolicySet>
where
    FE: FnMut(&EpisodeLog),
    FU: FnMut(&UpdateLog),
{
    env_cfg.validate()?;
    let mut weight_rng = derive_rng(master_seed, Stream::Policy, WEIGHT_INIT_INDEX);
    let policy = PolicySet::new(policy_cfg.clone(), &mut weight_rng)?;
    let mut trainer = Trainer::new(policy, t_cfg.clone(), master_seed)?;
    for episode in 0..t_cfg.episodes {
        let log = run_training_episode(&mut trainer, env_cfg, master_seed, episode, &mut on_update)?;
        on_episode(&log);
    }
    Ok(trainer.policy)
}
