use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hcn::{evaluate_actions, forward, Batch, Features, HcnParams, StoredAction};
use crate::numerics::{AdamConfig, AdamState, Graph, Tensor};
use crate::rewards::RewardBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub steps_per_iteration: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch: 256,
            value_coef: 0.5,
            entropy_coef: 0.01,
            lr: 3e-4,
            max_grad_norm: 0.5,
            steps_per_iteration: 2048,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("ppo: {msg}")));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.steps_per_iteration == 0 {
            return bad("epochs, minibatch and steps_per_iteration must be positive");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || self.max_grad_norm.is_nan() || self.max_grad_norm <= 0.0 {
            return bad("lr and max_grad_norm must be positive");
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// One learner decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Features,
    pub action: StoredAction,
    pub log_prob: f64,
    pub value: f64,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub samples: Vec<Sample>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// min(r·Â, clip(r, 1 − ε, 1 + ε)·Â)
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Zero mean, unit (population) std. Only centred when the std is below 1e-8.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    if adv.is_empty() {
        return Vec::new();
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    if std < 1e-8 {
        adv.iter().map(|a| a - mean).collect()
    } else {
        adv.iter().map(|a| (a - mean) / std).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    /// Mean ratio of the first minibatch, before any parameter change.
    pub first_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Mean pre-clip gradient norm.
    pub grad_norm: f64,
    pub minibatches: usize,
}

struct MinibatchResult {
    grads: Vec<Vec<f64>>,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    ratios: Vec<f64>,
    log_ratios: Vec<f64>,
}

fn minibatch_loss(
    params: &HcnParams,
    samples: &[&Sample],
    cfg: &PpoConfig,
) -> Result<MinibatchResult> {
    let rows = samples.len();
    let feats: Vec<&Features> = samples.iter().map(|s| &s.features).collect();
    let actions: Vec<&StoredAction> = samples.iter().map(|s| &s.action).collect();
    let batch = Batch::stack(&feats, &params.config)?;
    let adv = normalize_advantages(&samples.iter().map(|s| s.advantage).collect::<Vec<_>>());

    let mut g = Graph::new();
    let f = forward(&mut g, params, &batch)?;
    let (logp, ent) = evaluate_actions(&mut g, &f, &batch, &actions)?;
    let old = g.constant(Tensor::vector(samples.iter().map(|s| s.log_prob).collect()));
    let log_ratio = g.sub(logp, old)?;
    let ratio = g.exp(log_ratio)?;
    let a = g.constant(Tensor::vector(adv));
    let s1 = g.mul(ratio, a)?;
    let clipped = g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)?;
    let s2 = g.mul(clipped, a)?;
    let surr = g.minimum(s1, s2)?;
    let surr = g.mean(surr)?;
    let policy_loss = g.scale(surr, -1.0)?;

    let v = g.reshape(f.value, &[rows])?;
    let returns = g.constant(Tensor::vector(samples.iter().map(|s| s.ret).collect()));
    let diff = g.sub(v, returns)?;
    let sq = g.square(diff)?;
    let value_loss = g.mean(sq)?;
    let entropy = g.mean(ent)?;

    let vl = g.scale(value_loss, cfg.value_coef)?;
    let el = g.scale(entropy, -cfg.entropy_coef)?;
    let loss = g.add(policy_loss, vl)?;
    let loss = g.add(loss, el)?;
    if !g.scalar_value(loss).is_finite() {
        return Err(Error::NumericFault("ppo loss"));
    }
    g.backward(loss)?;
    let grads = f
        .params
        .iter()
        .zip(&params.tensors)
        .map(|(&p, t)| {
            g.grad(p)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();
    Ok(MinibatchResult {
        grads,
        policy_loss: g.scalar_value(policy_loss),
        value_loss: g.scalar_value(value_loss),
        entropy: g.scalar_value(entropy),
        ratios: g.value(ratio).data().to_vec(),
        log_ratios: g.value(log_ratio).data().to_vec(),
    })
}

/// Scale gradients to at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|x| *x *= s);
    }
    norm
}

fn run_update(
    params: &mut HcnParams,
    opt: &mut AdamState,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<UpdateStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    let (mut ratio_sum, mut clipped, mut kl_sum, mut seen) = (0.0, 0usize, 0.0, 0usize);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.minibatch) {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &buffer.samples[i]).collect();
            let mut mb = minibatch_loss(params, &samples, cfg)?;
            if mb.grads.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::NumericFault("ppo gradient"));
            }
            stats.grad_norm += clip_grad_norm(&mut mb.grads, cfg.max_grad_norm);
            opt.update(&mut params.tensors, &mb.grads)?;
            if !params.tensors.iter().all(Tensor::is_finite) {
                return Err(Error::NumericFault("ppo parameter step"));
            }
            let mean_ratio = mb.ratios.iter().sum::<f64>() / mb.ratios.len() as f64;
            if stats.minibatches == 0 {
                stats.first_ratio = mean_ratio;
            }
            stats.minibatches += 1;
            stats.policy_loss += mb.policy_loss;
            stats.value_loss += mb.value_loss;
            stats.entropy += mb.entropy;
            ratio_sum += mb.ratios.iter().sum::<f64>();
            clipped += mb.ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip).count();
            // (r − 1) − log r: a non-negative KL estimate
            kl_sum += mb
                .ratios
                .iter()
                .zip(&mb.log_ratios)
                .map(|(r, lr)| (r - 1.0) - lr)
                .sum::<f64>();
            seen += mb.ratios.len();
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.grad_norm /= k;
    let s = seen.max(1) as f64;
    stats.mean_ratio = ratio_sum / s;
    stats.clip_fraction = clipped as f64 / s;
    stats.approx_kl = kl_sum / s;
    Ok(stats)
}

/// Clipped-surrogate PPO over `epochs` shuffled passes. On any error the
/// parameters and optimiser state are restored before it is returned.
pub fn ppo_update(
    params: &mut HcnParams,
    opt: &mut AdamState,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<UpdateStats> {
    if buffer.is_empty() {
        return Err(Error::Contract("ppo update on an empty buffer".into()));
    }
    let saved_params = params.tensors.clone();
    let saved_opt = opt.clone();
    let result = run_update(params, opt, buffer, cfg, seed);
    if result.is_err() {
        params.tensors = saved_params;
        *opt = saved_opt;
    }
    result
}

/// Mean clipped surrogate over the whole buffer, advantages normalised over
/// the buffer, evaluated in chunks of `minibatch` rows.
pub fn surrogate_objective(params: &HcnParams, buffer: &RolloutBuffer, cfg: &PpoConfig) -> Result<f64> {
    let adv = normalize_advantages(&buffer.samples.iter().map(|s| s.advantage).collect::<Vec<_>>());
    let mut total = 0.0;
    for (chunk, adv) in buffer
        .samples
        .chunks(cfg.minibatch)
        .zip(adv.chunks(cfg.minibatch))
    {
        let feats: Vec<&Features> = chunk.iter().map(|s| &s.features).collect();
        let actions: Vec<&StoredAction> = chunk.iter().map(|s| &s.action).collect();
        let batch = Batch::stack(&feats, &params.config)?;
        let mut g = Graph::new();
        let f = forward(&mut g, params, &batch)?;
        let (logp, _) = evaluate_actions(&mut g, &f, &batch, &actions)?;
        for ((s, lp), a) in chunk.iter().zip(g.value(logp).data()).zip(adv) {
            total += clipped_surrogate((lp - s.log_prob).exp(), *a, cfg.clip);
        }
    }
    Ok(total / buffer.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(clipped_surrogate(1.0, 3.0, 0.2), 3.0);
    }

    #[test]
    fn normalisation() {
        let a = normalize_advantages(&[1.0, 2.0, 3.0, 10.0]);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() <= 1e-8);
        assert!((std - 1.0).abs() <= 1e-6);
        assert_eq!(normalize_advantages(&[2.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn grad_clipping() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_grad_norm(&mut g, 0.5), 5.0);
        assert!((g[0][0] - 0.3).abs() < 1e-15 && (g[1][0] - 0.4).abs() < 1e-15);
        let mut small = vec![vec![0.1]];
        clip_grad_norm(&mut small, 0.5);
        assert_eq!(small[0][0], 0.1);
    }

    #[test]
    fn config_validation() {
        PpoConfig::default().validate().unwrap();
        let bad = PpoConfig {
            clip: 1.0,
            ..PpoConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
