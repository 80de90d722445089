use crate::error::Result;
use crate::numerics::{lstm_cell, Graph, LstmVars, Tensor, Var};
use crate::protocol::TAG_COUNT;

use super::features::Batch;
use super::params::*;

pub(crate) const MASKED_LOGIT: f64 = -1e9;

/// Stance order: firm, neutral, conceding.
pub const STANCE_SHIFT: [f64; 3] = [-0.2, 0.0, 0.2];

/// Graph handles produced by one batched forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub params: Vec<Var>,
    /// [rows·entities, d] encodings of every entity.
    pub encodings: Var,
    /// [rows, d] observer encoding.
    pub z: Var,
    /// [rows, opponents]
    pub coalition: Var,
    /// Per head [rows, opponents]; empty without attention.
    pub attention: Vec<Var>,
    /// [rows, d]
    pub attended: Var,
    /// [rows, 3]
    pub stance: Var,
    /// [rows, TAG_COUNT], illegal tags filled with a large negative logit.
    pub move_logits: Var,
    pub move_logp: Var,
    /// [rows, 1]
    pub concession_mean: Var,
    pub concession_log_std: Var,
    pub value: Var,
    /// [rows, max_issues, max_values] log-probabilities (sampled proposals only).
    pub issue_logp: Option<Var>,
}

fn affine(g: &mut Graph<'_>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

/// Encoder: W_e φ_e(e) + LSTM(φ_m(history)) + W_c c for every entity row.
pub fn encode<'a>(g: &mut Graph<'a>, p: &[Var], batch: &'a Batch, cfg: &HcnConfig) -> Result<Var> {
    let env = g.constant_ref(&batch.env);
    let h1 = affine(g, env, p[ENV1], p[ENV1_B])?;
    let h1 = g.tanh(h1)?;
    let h2 = affine(g, h1, p[ENV2], p[ENV2_B])?;
    let h2 = g.tanh(h2)?;
    let term_e = g.matmul(h2, p[W_E])?;

    let ctx = g.constant_ref(&batch.ctx);
    let term_c = g.matmul(ctx, p[W_C])?;

    let n = batch.rows * batch.entities;
    let lstm = LstmVars {
        w_input: p[LSTM_IN],
        w_hidden: p[LSTM_HID],
        bias: p[LSTM_B],
    };
    let mut h = g.constant(Tensor::zeros(&[n, cfg.d]));
    let mut c = g.constant(Tensor::zeros(&[n, cfg.d]));
    for (x, mask) in batch.hist.iter().zip(&batch.hist_mask) {
        let live = mask.data().iter().filter(|v| **v != 0.0).count();
        if live == 0 {
            continue;
        }
        let x = g.constant_ref(x);
        let emb = affine(g, x, p[MSG], p[MSG_B])?;
        let emb = g.tanh(emb)?;
        let (h_new, c_new) = lstm_cell(g, emb, h, c, &lstm)?;
        if live == mask.numel() {
            h = h_new;
            c = c_new;
        } else {
            let m = g.constant_ref(mask);
            let dh = g.sub(h_new, h)?;
            let dh = g.mul(dh, m)?;
            h = g.add(h, dh)?;
            let dc = g.sub(c_new, c)?;
            let dc = g.mul(dc, m)?;
            c = g.add(c, dc)?;
        }
    }
    let z = g.add(term_e, h)?;
    g.add(z, term_c)
}

pub fn forward<'a>(g: &mut Graph<'a>, params: &'a HcnParams, batch: &'a Batch) -> Result<Forward> {
    let cfg = &params.config;
    let p: Vec<Var> = params.tensors.iter().map(|t| g.param(t)).collect();
    let (rows, e, d) = (batch.rows, batch.entities, cfg.d);
    let j = e - 1;

    let encodings = encode(g, &p, batch, cfg)?;
    let z3 = g.reshape(encodings, &[rows, e, d])?;
    let z = g.slice(z3, 1, 0, 1)?;
    let z = g.reshape(z, &[rows, d])?;
    let others = g.slice(z3, 1, 1, j)?;

    // meso: coalition gate over opponents
    let (coalition, log_gate) = if cfg.hierarchy {
        let logits = g.matmul(others, p[COALITION])?;
        let logits = g.reshape(logits, &[rows, j])?;
        let logits = g.mask_fill(logits, &batch.opp_pad, MASKED_LOGIT)?;
        let log_gate = g.log_softmax(logits)?;
        (g.exp(log_gate)?, log_gate)
    } else {
        let mut gate = vec![0.0; rows * j];
        let mut log_gate = vec![MASKED_LOGIT; rows * j];
        for r in 0..rows {
            let k = batch.opponents[r];
            for s in 0..k {
                gate[r * j + s] = 1.0 / k as f64;
                log_gate[r * j + s] = -(k as f64).ln();
            }
        }
        (
            g.constant(Tensor::new(&[rows, j], gate)?),
            g.constant(Tensor::new(&[rows, j], log_gate)?),
        )
    };

    // micro: attention of the observer over opponents
    let values = g.matmul(others, p[W_V])?;
    let mut attention = Vec::new();
    let pooled = if cfg.attention {
        let q = g.matmul(z, p[W_Q])?;
        let keys = g.matmul(others, p[W_K])?;
        let dk = d / cfg.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut heads = Vec::with_capacity(cfg.heads);
        for k in 0..cfg.heads {
            let qk = g.slice(q, 1, k * dk, dk)?;
            let kk = g.slice(keys, 2, k * dk, dk)?;
            let vk = g.slice(values, 2, k * dk, dk)?;
            let qe = g.expand(qk, 1, j)?;
            let prod = g.mul(kk, qe)?;
            let scores = g.sum_axis(prod, 2)?;
            let scores = g.scale(scores, scale)?;
            let scores = g.add(scores, log_gate)?;
            let w = g.softmax(scores)?;
            let we = g.expand(w, 2, dk)?;
            let mixed = g.mul(vk, we)?;
            heads.push(g.sum_axis(mixed, 1)?);
            attention.push(w);
        }
        g.concat(&heads)?
    } else {
        let mut weights = vec![0.0; rows * j * d];
        for r in 0..rows {
            let k = batch.opponents[r];
            weights[r * j * d..(r * j + k) * d]
                .iter_mut()
                .for_each(|x| *x = 1.0 / k as f64);
        }
        let w = g.constant(Tensor::new(&[rows, j, d], weights)?);
        let mixed = g.mul(values, w)?;
        g.sum_axis(mixed, 1)?
    };
    let attended = affine(g, pooled, p[W_O], p[W_O_B])?;
    let attended = g.tanh(attended)?;
    let joint = g.concat(&[z, attended])?;

    // macro: stance
    let stance = if cfg.hierarchy {
        let logits = affine(g, joint, p[STANCE], p[STANCE_B])?;
        g.softmax(logits)?
    } else {
        let mut neutral = vec![0.0; rows * 3];
        for r in 0..rows {
            neutral[r * 3 + 1] = 1.0;
        }
        g.constant(Tensor::new(&[rows, 3], neutral)?)
    };

    let move_raw = affine(g, joint, p[MOVE], p[MOVE_B])?;
    let bias = g.matmul(stance, p[STANCE_MOVE])?;
    let move_raw = g.add(move_raw, bias)?;
    let move_logits = g.mask_fill(move_raw, &batch.illegal, MASKED_LOGIT)?;
    let move_logp = g.log_softmax(move_logits)?;

    let conc = affine(g, joint, p[CONCESSION], p[CONCESSION_B])?;
    let mean = g.slice(conc, 1, 0, 1)?;
    let shift = g.constant(Tensor::new(&[3, 1], STANCE_SHIFT.to_vec())?);
    let shift = g.matmul(stance, shift)?;
    let concession_mean = g.add(mean, shift)?;
    let log_std = g.slice(conc, 1, 1, 1)?;
    let concession_log_std = g.clamp(log_std, -5.0, 1.0)?;

    let value = affine(g, joint, p[VALUE], p[VALUE_B])?;

    let issue_logp = if cfg.proposal_mode == ProposalMode::Sampled {
        let logits = affine(g, joint, p[ISSUE], p[ISSUE_B])?;
        let logits = g.reshape(logits, &[rows, cfg.max_issues, cfg.max_values])?;
        let logits = g.mask_fill(logits, &batch.value_pad, MASKED_LOGIT)?;
        Some(g.log_softmax(logits)?)
    } else {
        None
    };

    debug_assert_eq!(g.shape(move_logits).dims(), &[rows, TAG_COUNT]);
    Ok(Forward {
        params: p,
        encodings,
        z,
        coalition,
        attention,
        attended,
        stance,
        move_logits,
        move_logp,
        concession_mean,
        concession_log_std,
        value,
        issue_logp,
    })
}
