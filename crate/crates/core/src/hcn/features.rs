use crate::env::{Observation, MESSAGE_FEATURES};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::protocol::TAG_COUNT;

use super::params::HcnConfig;

/// One observation laid out for the network: entity 0 is the observer, the
/// rest are its opponents in id order. Widths are padded to the network's
/// maximum issue and value counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub entities: usize,
    pub env: Vec<f64>,
    pub ctx: Vec<f64>,
    /// entities × history_len × MESSAGE_FEATURES, right-aligned.
    pub hist: Vec<f64>,
    pub hist_valid: Vec<bool>,
    pub legal: [bool; TAG_COUNT],
    pub value_counts: Vec<usize>,
}

fn write_history(
    dst: &mut [f64],
    valid: &mut [bool],
    history: &[[f64; MESSAGE_FEATURES]],
    len: usize,
) {
    let take = history.len().min(len);
    let offset = len - take;
    for (k, msg) in history[history.len() - take..].iter().enumerate() {
        let row = offset + k;
        dst[row * MESSAGE_FEATURES..(row + 1) * MESSAGE_FEATURES].copy_from_slice(msg);
        valid[row] = true;
    }
}

impl Features {
    pub fn from_observation(obs: &Observation, cfg: &HcnConfig) -> Result<Self> {
        let m = obs.value_counts.len();
        let vmax = obs.value_counts.iter().copied().max().unwrap_or(0);
        if m > cfg.max_issues || vmax > cfg.max_values {
            return Err(Error::Config(format!(
                "network sized for {} issues × {} values cannot play {m} issues × {vmax} values",
                cfg.max_issues, cfg.max_values
            )));
        }
        if obs.reveal_buckets != cfg.buckets {
            return Err(Error::Config(format!(
                "network built for {} reveal buckets, environment uses {}",
                cfg.buckets, obs.reveal_buckets
            )));
        }
        let (fe, fc, l) = (cfg.env_width(), cfg.context_width(), cfg.history_len);
        let e = obs.opponents.len() + 1;
        let mut env = vec![0.0; e * fe];
        let mut ctx = vec![0.0; e * fc];
        let mut hist = vec![0.0; e * l * MESSAGE_FEATURES];
        let mut hist_valid = vec![false; e * l];

        // public block shared by every entity
        let mut shared = vec![0.0; 6 + cfg.max_issues + cfg.max_issues * cfg.max_values];
        shared[obs.phase.index()] = 1.0;
        shared[5] = obs.round_fraction;
        for k in 0..m {
            shared[6 + k] = 1.0;
        }
        if let Some(deal) = &obs.standing {
            for (k, &v) in deal.values.iter().enumerate() {
                shared[6 + cfg.max_issues + k * cfg.max_values + v] = 1.0;
            }
        }
        let behavior = shared.len();
        for ent in 0..e {
            env[ent * fe..ent * fe + behavior].copy_from_slice(&shared);
        }
        env[behavior + TAG_COUNT + 3] = 1.0; // observer flag
        // position in the within-round application order
        let seat = |agent: usize| agent as f64 / (e - 1) as f64;
        env[behavior + TAG_COUNT + 6] = seat(obs.agent);

        // observer's own context
        ctx[..m].copy_from_slice(&obs.weights);
        ctx[cfg.max_issues] = obs.reservation;
        ctx[cfg.max_issues + 1] = obs.standing_utility;
        ctx[cfg.max_issues + 2] = if obs.standing_is_own { 1.0 } else { 0.0 };
        write_history(
            &mut hist[..l * MESSAGE_FEATURES],
            &mut hist_valid[..l],
            &obs.history,
            l,
        );

        for (k, o) in obs.opponents.iter().enumerate() {
            let ent = k + 1;
            let row = &mut env[ent * fe + behavior..(ent + 1) * fe];
            if let Some(t) = o.last_tag {
                row[t.index()] = 1.0;
            }
            row[TAG_COUNT] = o.argue_direction;
            row[TAG_COUNT + 1] = o.argue_strength;
            row[TAG_COUNT + 2] = if o.accepted { 1.0 } else { 0.0 };
            if let Some(u) = o.last_offer_utility {
                row[TAG_COUNT + 4] = u;
                row[TAG_COUNT + 5] = 1.0;
            }
            row[TAG_COUNT + 6] = seat(o.agent);
            let belief = &mut ctx[ent * fc + cfg.max_issues + 3..(ent + 1) * fc];
            for issue in 0..m {
                let src = &o.belief[issue * cfg.buckets..(issue + 1) * cfg.buckets];
                belief[issue * cfg.buckets..(issue + 1) * cfg.buckets].copy_from_slice(src);
            }
            write_history(
                &mut hist[ent * l * MESSAGE_FEATURES..(ent + 1) * l * MESSAGE_FEATURES],
                &mut hist_valid[ent * l..(ent + 1) * l],
                &o.history,
                l,
            );
        }
        Ok(Self {
            entities: e,
            env,
            ctx,
            hist,
            hist_valid,
            legal: obs.legal.mask(),
            value_counts: obs.value_counts.clone(),
        })
    }
}

/// A stack of feature rows padded to a common entity count.
#[derive(Debug, Clone)]
pub struct Batch {
    pub rows: usize,
    pub entities: usize,
    /// [rows·entities, env_width]
    pub env: Tensor,
    /// [rows·entities, context_width]
    pub ctx: Tensor,
    /// Per history step: [rows·entities, MESSAGE_FEATURES].
    pub hist: Vec<Tensor>,
    /// Per history step: [rows·entities, d], 1 where the step holds a message.
    pub hist_mask: Vec<Tensor>,
    /// rows × (entities − 1): true for padding opponents.
    pub opp_pad: Vec<bool>,
    /// rows × TAG_COUNT: true for illegal tags.
    pub illegal: Vec<bool>,
    /// rows × max_issues × max_values: true for values outside the scenario.
    pub value_pad: Vec<bool>,
    /// Valid opponents per row.
    pub opponents: Vec<usize>,
}

impl Batch {
    pub fn stack(items: &[&Features], cfg: &HcnConfig) -> Result<Self> {
        let rows = items.len();
        if rows == 0 {
            return Err(Error::Contract("empty batch".into()));
        }
        let e = items.iter().map(|f| f.entities).max().unwrap_or(1);
        if e < 2 {
            return Err(Error::Contract("every row needs at least one opponent".into()));
        }
        let (fe, fc, l, d) = (cfg.env_width(), cfg.context_width(), cfg.history_len, cfg.d);
        let mut env = vec![0.0; rows * e * fe];
        let mut ctx = vec![0.0; rows * e * fc];
        let mut hist = vec![vec![0.0; rows * e * MESSAGE_FEATURES]; l];
        let mut hist_mask = vec![vec![0.0; rows * e * d]; l];
        let mut opp_pad = vec![true; rows * (e - 1)];
        let mut illegal = vec![true; rows * TAG_COUNT];
        let mut value_pad = vec![true; rows * cfg.max_issues * cfg.max_values];
        let mut opponents = Vec::with_capacity(rows);
        for (r, f) in items.iter().enumerate() {
            let base = r * e;
            env[base * fe..(base + f.entities) * fe].copy_from_slice(&f.env);
            ctx[base * fc..(base + f.entities) * fc].copy_from_slice(&f.ctx);
            for ent in 0..f.entities {
                for t in 0..l {
                    if !f.hist_valid[ent * l + t] {
                        continue;
                    }
                    let src = &f.hist[(ent * l + t) * MESSAGE_FEATURES..(ent * l + t + 1) * MESSAGE_FEATURES];
                    hist[t][(base + ent) * MESSAGE_FEATURES..(base + ent + 1) * MESSAGE_FEATURES]
                        .copy_from_slice(src);
                    hist_mask[t][(base + ent) * d..(base + ent + 1) * d]
                        .iter_mut()
                        .for_each(|x| *x = 1.0);
                }
            }
            for j in 0..f.entities - 1 {
                opp_pad[r * (e - 1) + j] = false;
            }
            for (k, legal) in f.legal.iter().enumerate() {
                illegal[r * TAG_COUNT + k] = !legal;
            }
            for (m, &count) in f.value_counts.iter().enumerate() {
                let start = (r * cfg.max_issues + m) * cfg.max_values;
                value_pad[start..start + count].iter_mut().for_each(|x| *x = false);
            }
            // absent issues get one dummy value so their softmax stays finite
            for m in f.value_counts.len()..cfg.max_issues {
                value_pad[(r * cfg.max_issues + m) * cfg.max_values] = false;
            }
            opponents.push(f.entities - 1);
        }
        Ok(Self {
            rows,
            entities: e,
            env: Tensor::new(&[rows * e, fe], env)?,
            ctx: Tensor::new(&[rows * e, fc], ctx)?,
            hist: hist
                .into_iter()
                .map(|h| Tensor::new(&[rows * e, MESSAGE_FEATURES], h))
                .collect::<Result<_>>()?,
            hist_mask: hist_mask
                .into_iter()
                .map(|h| Tensor::new(&[rows * e, d], h))
                .collect::<Result<_>>()?,
            opp_pad,
            illegal,
            value_pad,
            opponents,
        })
    }
}
