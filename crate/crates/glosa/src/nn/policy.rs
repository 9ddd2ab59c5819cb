//! The hybrid-action policy: a shared tanh encoder feeding a discrete
//! advise/hold head and a continuous acceleration head conditioned on the
//! discrete choice, plus a separate state-value critic. Gradients for the
//! clipped surrogate losses and the value regression are derived by hand.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dense::{dense_backward, tanh_backward, tanh_inplace, Dense, DenseGrad};
use crate::error::{GlosaError, Result};

const LN_2PI: f64 = 1.8378770664093453;
/// Probability ratios beyond this are flattened (zero gradient) to keep
/// early updates finite; occurrences are counted in the stats.
const RATIO_CAP: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub hidden: usize,
    /// Continuous actions saturate at +-accel_limit via a scaled tanh.
    pub accel_limit: f64,
    /// Initial exploration noise scale.
    pub sigma_init: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// False builds the always-advise variant without a discrete head.
    pub with_discrete: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            obs_dim: 8,
            hidden: 128,
            accel_limit: 3.0,
            sigma_init: 1.0,
            sigma_min: 1e-3,
            sigma_max: 3.0,
            with_discrete: true,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.hidden == 0 {
            return Err(GlosaError::Config("network dimensions must be positive".into()));
        }
        if !(self.accel_limit > 0.0) {
            return Err(GlosaError::Config("accel_limit must be positive".into()));
        }
        if !(0.0 < self.sigma_min && self.sigma_min <= self.sigma_init
            && self.sigma_init <= self.sigma_max)
        {
            return Err(GlosaError::Config(
                "need 0 < sigma_min <= sigma_init <= sigma_max".into(),
            ));
        }
        Ok(())
    }
}

/// One sampled hybrid action with the log-probabilities needed later for
/// importance ratios. `raw_accel` is the Gaussian draw before clamping;
/// ratios are computed against the raw value so the density is exact.
#[derive(Debug, Clone, Copy)]
pub struct ActionSample {
    pub advise: bool,
    pub raw_accel: f64,
    pub accel: f64,
    pub logp_discrete: f64,
    pub logp_continuous: f64,
}

/// One element of a training batch.
#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a> {
    pub obs: &'a [f64],
    pub advise: bool,
    pub raw_accel: f64,
    pub logp_old_discrete: f64,
    pub logp_old_continuous: f64,
    pub advantage: f64,
    /// Value-regression target.
    pub target: f64,
}

/// Aggregates from one surrogate-loss evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct SurrogateStats {
    pub loss: f64,
    pub mean_ratio: f64,
    /// Fraction of samples whose ratio left the clip band.
    pub clip_fraction: f64,
    pub entropy: f64,
    /// Samples whose ratio hit the hard cap.
    pub ratio_caps: u64,
}

/// Which parameters an optimizer owns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Shared encoder plus the discrete head.
    Discrete,
    /// Shared encoder, continuous head, and the noise scale.
    Continuous,
    /// The critic's two layers.
    Critic,
}

#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub encoder: DenseGrad,
    pub discrete: DenseGrad,
    pub continuous: DenseGrad,
    pub log_sigma: f64,
    pub critic_hidden: DenseGrad,
    pub critic_out: DenseGrad,
}

#[derive(Debug, Clone)]
pub struct PolicySet {
    pub cfg: PolicyConfig,
    pub encoder: Dense,
    pub discrete: Option<Dense>,
    pub continuous: Dense,
    pub log_sigma: f64,
    pub critic_hidden: Dense,
    pub critic_out: Dense,
}

/// Log-density of a normal distribution at `x`.
pub fn gaussian_logp(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * LN_2PI
}

impl PolicySet {
    /// Orthogonally initialized network: unit gain into hidden layers,
    /// small gain into the action heads so the initial policy is near
    /// uniform and centered.
    pub fn new<R: Rng>(cfg: PolicyConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let encoder = Dense::orthogonal(cfg.obs_dim, cfg.hidden, 1.0, rng);
        let discrete =
            cfg.with_discrete.then(|| Dense::orthogonal(cfg.hidden, 2, 0.01, rng));
        let continuous = Dense::orthogonal(cfg.hidden + 1, 1, 0.01, rng);
        let critic_hidden = Dense::orthogonal(cfg.obs_dim, cfg.hidden, 1.0, rng);
        let critic_out = Dense::orthogonal(cfg.hidden, 1, 1.0, rng);
        Ok(Self {
            log_sigma: cfg.sigma_init.ln(),
            encoder,
            discrete,
            continuous,
            critic_hidden,
            critic_out,
            cfg,
        })
    }

    pub fn grads(&self) -> PolicyGrads {
        PolicyGrads {
            encoder: DenseGrad::zeros_like(&self.encoder),
            discrete: self
                .discrete
                .as_ref()
                .map(DenseGrad::zeros_like)
                .unwrap_or_else(|| DenseGrad::zeros_like(&Dense::zeros(1, 1))),
            continuous: DenseGrad::zeros_like(&self.continuous),
            log_sigma: 0.0,
            critic_hidden: DenseGrad::zeros_like(&self.critic_hidden),
            critic_out: DenseGrad::zeros_like(&self.critic_out),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp().clamp(self.cfg.sigma_min, self.cfg.sigma_max)
    }

    pub fn encode(&self, obs: &[f64]) -> Vec<f64> {
        let mut h = self.encoder.forward_alloc(obs);
        tanh_inplace(&mut h);
        h
    }

    /// Advise/hold probabilities via a stable softmax. Without a discrete
    /// head the policy always advises.
    pub fn discrete_probs(&self, h: &[f64]) -> [f64; 2] {
        match &self.discrete {
            Some(layer) => {
                let logits = layer.forward_alloc(h);
                let m = logits[0].max(logits[1]);
                let e0 = (logits[0] - m).exp();
                let e1 = (logits[1] - m).exp();
                [e0 / (e0 + e1), e1 / (e0 + e1)]
            }
            None => [0.0, 1.0],
        }
    }

    fn cont_input(&self, h: &[f64], advise: bool) -> Vec<f64> {
        let mut inp = Vec::with_capacity(h.len() + 1);
        inp.extend_from_slice(h);
        inp.push(if advise { 1.0 } else { 0.0 });
        inp
    }

    /// Mean advised acceleration for a state and discrete choice:
    /// (pre-squash raw value, squashed mean).
    pub fn mu(&self, h: &[f64], advise: bool) -> (f64, f64) {
        let inp = self.cont_input(h, advise);
        let raw = self.continuous.forward_alloc(&inp)[0];
        (raw, self.cfg.accel_limit * raw.tanh())
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        let mut h = self.critic_hidden.forward_alloc(obs);
        tanh_inplace(&mut h);
        self.critic_out.forward_alloc(&h)[0]
    }

    /// Draw a stochastic hybrid action. The discrete bit is drawn first,
    /// then the acceleration around the bit-conditioned mean.
    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> ActionSample {
        let h = self.encode(obs);
        let (advise, logp_discrete) = match &self.discrete {
            Some(_) => {
                let probs = self.discrete_probs(&h);
                let u: f64 = rng.gen();
                let advise = u >= probs[0];
                let p = if advise { probs[1] } else { probs[0] };
                (advise, p.max(f64::MIN_POSITIVE).ln())
            }
            None => (true, 0.0),
        };
        let (_, mu) = self.mu(&h, advise);
        let sigma = self.sigma();
        let eps: f64 = rng.sample(StandardNormal);
        let raw = mu + sigma * eps;
        ActionSample {
            advise,
            raw_accel: raw,
            accel: raw.clamp(-self.cfg.accel_limit, self.cfg.accel_limit),
            logp_discrete: finite_logp_guard(logp_discrete),
            logp_continuous: gaussian_logp(raw, mu, sigma),
        }
    }

    /// Mode of the policy: argmax bit and the mean acceleration.
    pub fn act_deterministic(&self, obs: &[f64]) -> (bool, f64) {
        let h = self.encode(obs);
        let probs = self.discrete_probs(&h);
        let advise = probs[1] > probs[0];
        let advise = if self.discrete.is_none() { true } else { advise };
        let (_, mu) = self.mu(&h, advise);
        (advise, mu.clamp(-self.cfg.accel_limit, self.cfg.accel_limit))
    }

    /// Per-sample clipped surrogate in minimization sign:
    /// -min(r·Â, clip(r, 1-ε, 1+ε)·Â).
    pub fn clipped_surrogate_value(ratio: f64, advantage: f64, clip: f64) -> f64 {
        Self::surrogate(ratio, advantage, clip).0
    }

    /// Clipped-surrogate gradient branch: d(-min(r A, clip(r) A))/d logp.
    /// Returns (per-sample loss, gradient, ratio, left_band, capped).
    fn surrogate(ratio_raw: f64, advantage: f64, clip: f64) -> (f64, f64, f64, bool, bool) {
        let capped = !(ratio_raw < RATIO_CAP);
        let ratio = if capped { RATIO_CAP } else { ratio_raw };
        let surr1 = ratio * advantage;
        let surr2 = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
        let loss = -surr1.min(surr2);
        // min picks surr1 on ties; otherwise the clip is active and flat.
        let grad = if surr1 <= surr2 && !capped { -advantage * ratio } else { 0.0 };
        let left_band = ratio < 1.0 - clip || ratio > 1.0 + clip;
        (loss, grad, ratio, left_band, capped)
    }

    /// Mean clipped surrogate for the discrete head over a batch;
    /// accumulates gradients for the encoder and discrete layers.
    pub fn discrete_loss_grad(
        &self,
        batch: &[LossSample],
        clip: f64,
        grads: &mut PolicyGrads,
    ) -> Result<SurrogateStats> {
        let layer = self
            .discrete
            .as_ref()
            .ok_or_else(|| GlosaError::Contract("policy has no discrete head".into()))?;
        if batch.is_empty() {
            return Err(GlosaError::Contract("empty batch".into()));
        }
        grads.encoder.reset();
        grads.discrete.reset();
        let mut stats = SurrogateStats::default();
        let mut dh = vec![0.0; self.cfg.hidden];
        for s in batch {
            let h = self.encode(s.obs);
            let probs = self.discrete_probs(&h);
            let bit = s.advise as usize;
            let logp_new = probs[bit].max(f64::MIN_POSITIVE).ln();
            let (loss, g_logp, ratio, left, capped) =
                Self::surrogate((logp_new - s.logp_old_discrete).exp(), s.advantage, clip);
            stats.loss += loss;
            stats.mean_ratio += ratio;
            stats.clip_fraction += left as u8 as f64;
            stats.ratio_caps += capped as u64;
            stats.entropy -= probs[0].max(f64::MIN_POSITIVE).ln() * probs[0]
                + probs[1].max(f64::MIN_POSITIVE).ln() * probs[1];
            // d logp / d logits = onehot(bit) - probs.
            let dlogits = [
                g_logp * ((bit == 0) as u8 as f64 - probs[0]),
                g_logp * ((bit == 1) as u8 as f64 - probs[1]),
            ];
            dense_backward(layer, &h, &dlogits, &mut grads.discrete, Some(&mut dh));
            tanh_backward(&h, &mut dh);
            dense_backward(&self.encoder, s.obs, &dh, &mut grads.encoder, None);
        }
        let n = batch.len() as f64;
        grads.encoder.scale(1.0 / n);
        grads.discrete.scale(1.0 / n);
        stats.loss /= n;
        stats.mean_ratio /= n;
        stats.clip_fraction /= n;
        stats.entropy /= n;
        if !stats.loss.is_finite() {
            return Err(GlosaError::Numeric("non-finite discrete surrogate".into()));
        }
        Ok(stats)
    }

    /// Mean clipped surrogate for the continuous head; accumulates
    /// gradients for the encoder, continuous layer, and noise scale.
    pub fn continuous_loss_grad(
        &self,
        batch: &[LossSample],
        clip: f64,
        grads: &mut PolicyGrads,
    ) -> Result<SurrogateStats> {
        if batch.is_empty() {
            return Err(GlosaError::Contract("empty batch".into()));
        }
        grads.encoder.reset();
        grads.continuous.reset();
        grads.log_sigma = 0.0;
        let sigma = self.sigma();
        // Flat region of the sigma clamp contributes no gradient.
        let sigma_interior =
            self.log_sigma.exp() > self.cfg.sigma_min && self.log_sigma.exp() < self.cfg.sigma_max;
        let mut stats = SurrogateStats::default();
        let mut dcont = vec![0.0; self.cfg.hidden + 1];
        for s in batch {
            let h = self.encode(s.obs);
            let inp = self.cont_input(&h, s.advise);
            let raw_mu = self.continuous.forward_alloc(&inp)[0];
            let tanh_mu = raw_mu.tanh();
            let mu = self.cfg.accel_limit * tanh_mu;
            let logp_new = gaussian_logp(s.raw_accel, mu, sigma);
            let (loss, g_logp, ratio, left, capped) =
                Self::surrogate((logp_new - s.logp_old_continuous).exp(), s.advantage, clip);
            stats.loss += loss;
            stats.mean_ratio += ratio;
            stats.clip_fraction += left as u8 as f64;
            stats.ratio_caps += capped as u64;
            let z = (s.raw_accel - mu) / sigma;
            // d logp / d mu and d logp / d log_sigma.
            let dmu = g_logp * z / sigma;
            if sigma_interior {
                grads.log_sigma += g_logp * (z * z - 1.0);
            }
            let draw = dmu * self.cfg.accel_limit * (1.0 - tanh_mu * tanh_mu);
            dense_backward(&self.continuous, &inp, &[draw], &mut grads.continuous, Some(&mut dcont));
            let mut dh = dcont[..self.cfg.hidden].to_vec();
            tanh_backward(&h, &mut dh);
            dense_backward(&self.encoder, s.obs, &dh, &mut grads.encoder, None);
        }
        let n = batch.len() as f64;
        grads.encoder.scale(1.0 / n);
        grads.continuous.scale(1.0 / n);
        grads.log_sigma /= n;
        stats.loss /= n;
        stats.mean_ratio /= n;
        stats.clip_fraction /= n;
        stats.entropy = 0.5 * (LN_2PI + 1.0) + sigma.ln();
        if !stats.loss.is_finite() {
            return Err(GlosaError::Numeric("non-finite continuous surrogate".into()));
        }
        Ok(stats)
    }

    /// Half mean squared value error against fixed targets; accumulates
    /// critic gradients.
    pub fn critic_loss_grad(&self, batch: &[LossSample], grads: &mut PolicyGrads) -> Result<f64> {
        if batch.is_empty() {
            return Err(GlosaError::Contract("empty batch".into()));
        }
        grads.critic_hidden.reset();
        grads.critic_out.reset();
        let mut loss = 0.0;
        let mut dh = vec![0.0; self.cfg.hidden];
        for s in batch {
            let mut h = self.critic_hidden.forward_alloc(s.obs);
            tanh_inplace(&mut h);
            let v = self.critic_out.forward_alloc(&h)[0];
            let err = v - s.target;
            loss += 0.5 * err * err;
            dense_backward(&self.critic_out, &h, &[err], &mut grads.critic_out, Some(&mut dh));
            tanh_backward(&h, &mut dh);
            dense_backward(&self.critic_hidden, s.obs, &dh, &mut grads.critic_hidden, None);
        }
        let n = batch.len() as f64;
        grads.critic_hidden.scale(1.0 / n);
        grads.critic_out.scale(1.0 / n);
        loss /= n;
        if !loss.is_finite() {
            return Err(GlosaError::Numeric("non-finite critic loss".into()));
        }
        Ok(loss)
    }

    pub fn group_len(&self, group: ParamGroup) -> usize {
        match group {
            ParamGroup::Discrete => match &self.discrete {
                Some(d) => self.encoder.param_count() + d.param_count(),
                None => 0,
            },
            ParamGroup::Continuous => {
                self.encoder.param_count() + self.continuous.param_count() + 1
            }
            ParamGroup::Critic => self.critic_hidden.param_count() + self.critic_out.param_count(),
        }
    }

    /// Flatten a group's parameters in a fixed documented order:
    /// weights then bias per layer, encoder first, noise scale last.
    pub fn gather_params(&self, group: ParamGroup, out: &mut Vec<f64>) {
        out.clear();
        match group {
            ParamGroup::Discrete => {
                if let Some(d) = &self.discrete {
                    out.extend_from_slice(&self.encoder.w);
                    out.extend_from_slice(&self.encoder.b);
                    out.extend_from_slice(&d.w);
                    out.extend_from_slice(&d.b);
                }
            }
            ParamGroup::Continuous => {
                out.extend_from_slice(&self.encoder.w);
                out.extend_from_slice(&self.encoder.b);
                out.extend_from_slice(&self.continuous.w);
                out.extend_from_slice(&self.continuous.b);
                out.push(self.log_sigma);
            }
            ParamGroup::Critic => {
                out.extend_from_slice(&self.critic_hidden.w);
                out.extend_from_slice(&self.critic_hidden.b);
                out.extend_from_slice(&self.critic_out.w);
                out.extend_from_slice(&self.critic_out.b);
            }
        }
    }

    pub fn scatter_params(&mut self, group: ParamGroup, flat: &[f64]) -> Result<()> {
        if flat.len() != self.group_len(group) {
            return Err(GlosaError::Contract(format!(
                "expected {} params for {:?}, got {}",
                self.group_len(group),
                group,
                flat.len()
            )));
        }
        let mut at = 0;
        let take = |dst: &mut [f64], src: &[f64], at: &mut usize| {
            dst.copy_from_slice(&src[*at..*at + dst.len()]);
            *at += dst.len();
        };
        match group {
            ParamGroup::Discrete => {
                if let Some(d) = &mut self.discrete {
                    take(&mut self.encoder.w, flat, &mut at);
                    take(&mut self.encoder.b, flat, &mut at);
                    take(&mut d.w, flat, &mut at);
                    take(&mut d.b, flat, &mut at);
                }
            }
            ParamGroup::Continuous => {
                take(&mut self.encoder.w, flat, &mut at);
                take(&mut self.encoder.b, flat, &mut at);
                take(&mut self.continuous.w, flat, &mut at);
                take(&mut self.continuous.b, flat, &mut at);
                self.log_sigma = flat[at];
            }
            ParamGroup::Critic => {
                take(&mut self.critic_hidden.w, flat, &mut at);
                take(&mut self.critic_hidden.b, flat, &mut at);
                take(&mut self.critic_out.w, flat, &mut at);
                take(&mut self.critic_out.b, flat, &mut at);
            }
        }
        Ok(())
    }

    /// Flatten a group's gradients in the same order as [`gather_params`].
    pub fn gather_grads(&self, grads: &PolicyGrads, group: ParamGroup, out: &mut Vec<f64>) {
        out.clear();
        match group {
            ParamGroup::Discrete => {
                if self.discrete.is_some() {
                    out.extend_from_slice(&grads.encoder.w);
                    out.extend_from_slice(&grads.encoder.b);
                    out.extend_from_slice(&grads.discrete.w);
                    out.extend_from_slice(&grads.discrete.b);
                }
            }
            ParamGroup::Continuous => {
                out.extend_from_slice(&grads.encoder.w);
                out.extend_from_slice(&grads.encoder.b);
                out.extend_from_slice(&grads.continuous.w);
                out.extend_from_slice(&grads.continuous.b);
                out.push(grads.log_sigma);
            }
            ParamGroup::Critic => {
                out.extend_from_slice(&grads.critic_hidden.w);
                out.extend_from_slice(&grads.critic_hidden.b);
                out.extend_from_slice(&grads.critic_out.w);
                out.extend_from_slice(&grads.critic_out.b);
            }
        }
    }
}

fn finite_logp_guard(logp: f64) -> f64 {
    debug_assert!(logp.is_finite());
    logp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use approx::assert_relative_eq;

    fn tiny_policy(with_discrete: bool, seed: u64) -> PolicySet {
        let cfg = PolicyConfig { obs_dim: 3, hidden: 4, with_discrete, ..PolicyConfig::default() };
        PolicySet::new(cfg, &mut derive_rng(seed, Stream::Init, 0)).unwrap()
    }

    #[test]
    fn softmax_matches_hand_values() {
        let mut p = tiny_policy(true, 1);
        // Zero the paths so logits equal the biases.
        p.encoder.w.iter_mut().for_each(|w| *w = 0.0);
        p.encoder.b.iter_mut().for_each(|b| *b = 0.0);
        let d = p.discrete.as_mut().unwrap();
        d.w.iter_mut().for_each(|w| *w = 0.0);
        d.b = vec![0.0, 3.0f64.ln()];
        let probs = p.discrete_probs(&p.encode(&[0.2, -0.4, 0.9]));
        assert_relative_eq!(probs[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(probs[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_logp_at_mean_unit_sigma() {
        assert_relative_eq!(gaussian_logp(2.0, 2.0, 1.0), -0.9189385332046727, epsilon = 1e-15);
    }

    #[test]
    fn mu_saturates_at_accel_limit() {
        let p = tiny_policy(true, 2);
        let mut rng = derive_rng(3, Stream::Init, 1);
        for _ in 0..200 {
            let obs: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let h = p.encode(&obs);
            for advise in [false, true] {
                let (_, mu) = p.mu(&h, advise);
                assert!(mu.abs() <= 3.0);
            }
        }
    }

    #[test]
    fn sigma_respects_clamp() {
        let mut p = tiny_policy(true, 4);
        p.log_sigma = -20.0;
        assert_eq!(p.sigma(), 1e-3);
        p.log_sigma = 10.0;
        assert_eq!(p.sigma(), 3.0);
        p.log_sigma = 0.0;
        assert_eq!(p.sigma(), 1.0);
    }

    #[test]
    fn sampling_is_reproducible_and_clamped() {
        let p = tiny_policy(true, 5);
        let obs = [0.4, 0.1, -0.3];
        let a1 = p.sample(&obs, &mut derive_rng(6, Stream::Policy, 0));
        let a2 = p.sample(&obs, &mut derive_rng(6, Stream::Policy, 0));
        assert_eq!(a1.raw_accel.to_bits(), a2.raw_accel.to_bits());
        assert_eq!(a1.advise, a2.advise);
        assert!(a1.accel.abs() <= 3.0);
        assert_eq!(a1.accel, a1.raw_accel.clamp(-3.0, 3.0));
    }

    #[test]
    fn fresh_ratios_are_exactly_one() {
        let p = tiny_policy(true, 7);
        let mut rng = derive_rng(8, Stream::Policy, 0);
        let mut grads = p.grads();
        for _ in 0..100 {
            let obs: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s = p.sample(&obs, &mut rng);
            let batch = [LossSample {
                obs: &obs,
                advise: s.advise,
                raw_accel: s.raw_accel,
                logp_old_discrete: s.logp_discrete,
                logp_old_continuous: s.logp_continuous,
                advantage: 1.0,
                target: 0.0,
            }];
            let d = p.discrete_loss_grad(&batch, 0.1, &mut grads).unwrap();
            let c = p.continuous_loss_grad(&batch, 0.1, &mut grads).unwrap();
            assert_eq!(d.mean_ratio, 1.0);
            assert_eq!(c.mean_ratio, 1.0);
        }
    }

    #[test]
    fn always_advise_variant_has_no_discrete_group() {
        let p = tiny_policy(false, 9);
        assert_eq!(p.group_len(ParamGroup::Discrete), 0);
        let s = p.sample(&[0.0, 0.0, 0.0], &mut derive_rng(1, Stream::Policy, 0));
        assert!(s.advise);
        assert_eq!(s.logp_discrete, 0.0);
        let (advise, _) = p.act_deterministic(&[0.0, 0.0, 0.0]);
        assert!(advise);
        let mut grads = p.grads();
        assert!(p
            .discrete_loss_grad(
                &[LossSample {
                    obs: &[0.0, 0.0, 0.0],
                    advise: true,
                    raw_accel: 0.0,
                    logp_old_discrete: 0.0,
                    logp_old_continuous: 0.0,
                    advantage: 0.0,
                    target: 0.0,
                }],
                0.1,
                &mut grads
            )
            .is_err());
    }

    #[test]
    fn params_roundtrip_through_gather_scatter() {
        let mut p = tiny_policy(true, 10);
        for group in [ParamGroup::Discrete, ParamGroup::Continuous, ParamGroup::Critic] {
            let mut flat = Vec::new();
            p.gather_params(group, &mut flat);
            assert_eq!(flat.len(), p.group_len(group));
            let bumped: Vec<f64> = flat.iter().map(|v| v + 0.125).collect();
            p.scatter_params(group, &bumped).unwrap();
            let mut back = Vec::new();
            p.gather_params(group, &mut back);
            assert_eq!(back, bumped);
        }
        assert!(p.scatter_params(ParamGroup::Critic, &[0.0]).is_err());
    }

    /// Central-difference check of all three losses on a tiny network.
    #[test]
    fn gradients_match_finite_differences() {
        let mut p = tiny_policy(true, 11);
        let mut rng = derive_rng(12, Stream::Policy, 3);
        let obs: Vec<Vec<f64>> =
            (0..6).map(|_| (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let batch: Vec<LossSample> = obs
            .iter()
            .map(|o| {
                let s = p.sample(o, &mut rng);
                LossSample {
                    obs: o,
                    advise: s.advise,
                    raw_accel: s.raw_accel,
                    // Old logps offset so ratios differ from 1.
                    logp_old_discrete: s.logp_discrete + rng.gen_range(-0.2..0.2),
                    logp_old_continuous: s.logp_continuous + rng.gen_range(-0.2..0.2),
                    advantage: rng.gen_range(-2.0..2.0),
                    target: rng.gen_range(-1.0..1.0),
                }
            })
            .collect();

        let mut grads = p.grads();
        let clip = 0.1;
        let h = 1e-6;
        for group in [ParamGroup::Discrete, ParamGroup::Continuous, ParamGroup::Critic] {
            match group {
                ParamGroup::Discrete => p.discrete_loss_grad(&batch, clip, &mut grads).unwrap(),
                ParamGroup::Continuous => p.continuous_loss_grad(&batch, clip, &mut grads).unwrap(),
                ParamGroup::Critic => {
                    p.critic_loss_grad(&batch, &mut grads).unwrap();
                    SurrogateStats::default()
                }
            };
            let mut analytic = Vec::new();
            p.gather_grads(&grads, group, &mut analytic);
            let mut flat = Vec::new();
            p.gather_params(group, &mut flat);
            for i in 0..flat.len() {
                let orig = flat[i];
                let eval = |p: &mut PolicySet, flat: &mut Vec<f64>, v: f64| -> f64 {
                    flat[i] = v;
                    p.scatter_params(group, flat).unwrap();
                    let mut g = p.grads();
                    match group {
                        ParamGroup::Discrete => p.discrete_loss_grad(&batch, clip, &mut g).unwrap().loss,
                        ParamGroup::Continuous => {
                            p.continuous_loss_grad(&batch, clip, &mut g).unwrap().loss
                        }
                        ParamGroup::Critic => p.critic_loss_grad(&batch, &mut g).unwrap(),
                    }
                };
                let fp = eval(&mut p, &mut flat, orig + h);
                let fm = eval(&mut p, &mut flat, orig - h);
                flat[i] = orig;
                p.scatter_params(group, &flat).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let scale = analytic[i].abs().max(fd.abs()).max(1.0);
                assert!(
                    (analytic[i] - fd).abs() / scale < 1e-5,
                    "{group:?} param {i}: analytic {} vs fd {}",
                    analytic[i],
                    fd
                );
            }
        }
    }
}
