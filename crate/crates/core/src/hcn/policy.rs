use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::Deal;
use crate::env::{AgentAction, Observation};
use crate::error::Result;
use crate::numerics::{sigmoid, Graph, Tensor, Var};
use crate::protocol::{MessageTag, TAG_COUNT};

use super::features::{Batch, Features};
use super::network::{forward, Forward};
use super::params::{HcnParams, ProposalMode};

/// Numeric policy outputs for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub move_logits: [f64; TAG_COUNT],
    pub move_logp: [f64; TAG_COUNT],
    /// Per issue, log-probabilities over that issue's values (sampled proposals only).
    pub issue_logp: Vec<Vec<f64>>,
    pub concession_mean: f64,
    pub concession_log_std: f64,
    pub stance: [f64; 3],
    pub coalition: Vec<f64>,
    pub value: f64,
}

/// What a rollout needs to re-score an action later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAction {
    pub tag: MessageTag,
    /// Pre-squash concession sample; the concession is sigmoid(x).
    pub x: f64,
    pub uses_concession: bool,
    pub deal: Option<Vec<usize>>,
}

impl StoredAction {
    pub fn to_agent_action(&self) -> AgentAction {
        AgentAction {
            deal: self.deal.clone().map(Deal::new),
            ..AgentAction::new(self.tag, sigmoid(self.x))
        }
    }
}

fn uses_concession(tag: MessageTag, mode: ProposalMode) -> bool {
    match tag {
        MessageTag::Argue => true,
        MessageTag::Propose | MessageTag::Counteroffer => mode == ProposalMode::TargetUtility,
        _ => false,
    }
}

fn uses_deal(tag: MessageTag, mode: ProposalMode) -> bool {
    tag.carries_deal() && mode == ProposalMode::Sampled
}

/// log σ(x)(1 − σ(x)), the change-of-variables term for c = σ(x).
fn log_sigmoid_jacobian(x: f64) -> f64 {
    let softplus = |t: f64| t.max(0.0) + (-t.abs()).exp().ln_1p();
    -softplus(-x) - softplus(x)
}

/// 9-point Gauss–Hermite rule: E[f(μ + σz)] ≈ Σ w_k f(μ + √2·σ·t_k) / √π.
const HERMITE: [(f64, f64); 9] = [
    (-3.1909932017815277, 3.9606977263264365e-05),
    (-2.266580584531843, 0.004943624275536941),
    (-1.468553289216668, 0.08847452739437664),
    (-0.7235510187528376, 0.43265155900255564),
    (0.0, 0.720235215606051),
    (0.7235510187528376, 0.43265155900255564),
    (1.468553289216668, 0.08847452739437664),
    (2.266580584531843, 0.004943624275536941),
    (3.1909932017815277, 3.9606977263264365e-05),
];

/// E[log σ'(x)] for x ~ N(mean, exp(log_std)²): the entropy of the squashed
/// concession is the Gaussian entropy plus this term. Without it the bonus
/// rewards ever wider pre-squash noise, which piles the concession onto 0 and 1.
fn squash_entropy_correction(mean: f64, log_std: f64) -> f64 {
    let scale = std::f64::consts::SQRT_2 * log_std.exp();
    HERMITE
        .iter()
        .map(|&(t, w)| w * log_sigmoid_jacobian(mean + scale * t))
        .sum::<f64>()
        / PI.sqrt()
}

fn squash_entropy_correction_graph(g: &mut Graph<'_>, mean: Var, log_std: Var) -> Result<Var> {
    let std = g.exp(log_std)?;
    let mut total: Option<Var> = None;
    for &(t, w) in &HERMITE {
        let shift = g.scale(std, std::f64::consts::SQRT_2 * t)?;
        let x = g.add(mean, shift)?;
        // log σ'(x) = −|x| − 2·ln(1 + e^{−|x|})
        let pos = g.relu(x)?;
        let neg_x = g.scale(x, -1.0)?;
        let neg = g.relu(neg_x)?;
        let abs = g.add(pos, neg)?;
        let neg_abs = g.scale(abs, -1.0)?;
        let e = g.exp(neg_abs)?;
        let e1 = g.add_scalar(e, 1.0)?;
        let l = g.log(e1)?;
        let l2 = g.scale(l, -2.0)?;
        let term = g.sub(l2, abs)?;
        let term = g.scale(term, w / PI.sqrt())?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    Ok(total.expect("quadrature has nodes"))
}

fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

/// Extract numeric outputs for every row of a forward pass.
pub fn outputs(g: &Graph<'_>, f: &Forward, batch: &Batch) -> Vec<PolicyOutput> {
    let rows = batch.rows;
    let j = batch.entities - 1;
    let logits = g.value(f.move_logits).data();
    let logp = g.value(f.move_logp).data();
    let mean = g.value(f.concession_mean).data();
    let log_std = g.value(f.concession_log_std).data();
    let stance = g.value(f.stance).data();
    let coalition = g.value(f.coalition).data();
    let value = g.value(f.value).data();
    let issue = f.issue_logp.map(|v| g.value(v));
    (0..rows)
        .map(|r| {
            let mut ml = [0.0; TAG_COUNT];
            ml.copy_from_slice(&logits[r * TAG_COUNT..(r + 1) * TAG_COUNT]);
            let mut mp = [0.0; TAG_COUNT];
            mp.copy_from_slice(&logp[r * TAG_COUNT..(r + 1) * TAG_COUNT]);
            let issue_logp = match issue {
                Some(t) => {
                    let dims = t.dims();
                    let (mi, vi) = (dims[1], dims[2]);
                    (0..mi)
                        .map(|m| t.data()[(r * mi + m) * vi..(r * mi + m + 1) * vi].to_vec())
                        .collect()
                }
                None => Vec::new(),
            };
            PolicyOutput {
                move_logits: ml,
                move_logp: mp,
                issue_logp,
                concession_mean: mean[r],
                concession_log_std: log_std[r],
                stance: [stance[r * 3], stance[r * 3 + 1], stance[r * 3 + 2]],
                coalition: coalition[r * j..r * j + batch.opponents[r]].to_vec(),
                value: value[r],
            }
        })
        .collect()
}

fn categorical<R: Rng + ?Sized>(logp: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, lp) in logp.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last = k;
            acc += p;
            if u < acc {
                return k;
            }
        }
    }
    last
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Draw an action (or take the mode when `deterministic`). Returns the
/// action, its log-probability, and the policy entropy.
pub fn sample_action<R: Rng + ?Sized>(
    out: &PolicyOutput,
    value_counts: &[usize],
    mode: ProposalMode,
    deterministic: bool,
    rng: &mut R,
) -> (StoredAction, f64, f64) {
    let k = if deterministic {
        argmax(&out.move_logits)
    } else {
        categorical(&out.move_logp, rng)
    };
    let tag = MessageTag::from_index(k).expect("tag index in range");
    let x = if deterministic {
        out.concession_mean
    } else {
        let n: f64 = StandardNormal.sample(rng);
        out.concession_mean + out.concession_log_std.exp() * n
    };
    let deal = uses_deal(tag, mode).then(|| {
        value_counts
            .iter()
            .enumerate()
            .map(|(m, &count)| {
                let lp = &out.issue_logp[m][..count];
                if deterministic {
                    argmax(lp)
                } else {
                    categorical(lp, rng)
                }
            })
            .collect::<Vec<_>>()
    });
    let action = StoredAction {
        tag,
        x,
        uses_concession: uses_concession(tag, mode),
        deal,
    };
    let logp = log_prob(out, &action);
    (action, logp, entropy(out))
}

pub fn log_prob(out: &PolicyOutput, action: &StoredAction) -> f64 {
    let mut lp = out.move_logp[action.tag.index()];
    if action.uses_concession {
        lp += gaussian_log_density(action.x, out.concession_mean, out.concession_log_std)
            - log_sigmoid_jacobian(action.x);
    }
    if let Some(deal) = &action.deal {
        lp += deal
            .iter()
            .enumerate()
            .map(|(m, &v)| out.issue_logp[m][v])
            .sum::<f64>();
    }
    lp
}

/// Categorical move entropy plus the entropy of the squashed concession.
pub fn entropy(out: &PolicyOutput) -> f64 {
    let cat: f64 = out
        .move_logp
        .iter()
        .map(|&lp| {
            let p = lp.exp();
            if p > 0.0 {
                -p * lp
            } else {
                0.0
            }
        })
        .sum();
    cat + 0.5 * (2.0 * PI * std::f64::consts::E).ln()
        + out.concession_log_std
        + squash_entropy_correction(out.concession_mean, out.concession_log_std)
}

/// Differentiable log-probabilities and entropies of stored actions, `[rows]` each.
pub fn evaluate_actions(
    g: &mut Graph<'_>,
    f: &Forward,
    batch: &Batch,
    actions: &[&StoredAction],
) -> Result<(Var, Var)> {
    let rows = batch.rows;
    let mut onehot = vec![0.0; rows * TAG_COUNT];
    let mut used = vec![0.0; rows];
    let mut xs = vec![0.0; rows];
    let mut offset = vec![0.0; rows];
    for (r, a) in actions.iter().enumerate() {
        onehot[r * TAG_COUNT + a.tag.index()] = 1.0;
        if a.uses_concession {
            used[r] = 1.0;
            xs[r] = a.x;
            offset[r] = -0.5 * (2.0 * PI).ln() - log_sigmoid_jacobian(a.x);
        }
    }
    let oh = g.constant(Tensor::new(&[rows, TAG_COUNT], onehot)?);
    let picked = g.mul(f.move_logp, oh)?;
    let mut logp = g.sum_axis(picked, 1)?;

    let x = g.constant(Tensor::new(&[rows, 1], xs)?);
    let diff = g.sub(x, f.concession_mean)?;
    let sq = g.square(diff)?;
    let neg2 = g.scale(f.concession_log_std, -2.0)?;
    let inv_var = g.exp(neg2)?;
    let z2 = g.mul(sq, inv_var)?;
    let half = g.scale(z2, -0.5)?;
    let dens = g.sub(half, f.concession_log_std)?;
    let u = g.constant(Tensor::new(&[rows, 1], used)?);
    let dens = g.mul(dens, u)?;
    let dens = g.reshape(dens, &[rows])?;
    logp = g.add(logp, dens)?;
    let off = g.constant(Tensor::vector(offset));
    logp = g.add(logp, off)?;

    if let Some(issue) = f.issue_logp {
        let dims = g.shape(issue).to_vec();
        let (mi, vi) = (dims[1], dims[2]);
        let mut pick = vec![0.0; rows * mi * vi];
        let mut any = false;
        for (r, a) in actions.iter().enumerate() {
            if let Some(deal) = &a.deal {
                any = true;
                for (m, &v) in deal.iter().enumerate() {
                    pick[(r * mi + m) * vi + v] = 1.0;
                }
            }
        }
        if any {
            let pick = g.constant(Tensor::new(&dims, pick)?);
            let chosen = g.mul(issue, pick)?;
            let per_issue = g.sum_axis(chosen, 2)?;
            let total = g.sum_axis(per_issue, 1)?;
            logp = g.add(logp, total)?;
        }
    }

    let probs = g.exp(f.move_logp)?;
    let plogp = g.mul(probs, f.move_logp)?;
    let cat = g.sum_axis(plogp, 1)?;
    let cat = g.scale(cat, -1.0)?;
    let ls = g.reshape(f.concession_log_std, &[rows])?;
    let ent = g.add(cat, ls)?;
    let corr = squash_entropy_correction_graph(g, f.concession_mean, f.concession_log_std)?;
    let corr = g.reshape(corr, &[rows])?;
    let ent = g.add(ent, corr)?;
    let ent = g.add_scalar(ent, 0.5 * (2.0 * PI * std::f64::consts::E).ln())?;
    Ok((logp, ent))
}

/// One decision per observation, batched through a single forward pass.
#[derive(Debug, Clone)]
pub struct Decision {
    pub action: AgentAction,
    pub stored: StoredAction,
    pub log_prob: f64,
    pub value: f64,
    pub features: Features,
    pub output: PolicyOutput,
}

pub fn act<R: Rng + ?Sized>(
    params: &HcnParams,
    observations: &[&Observation],
    deterministic: bool,
    rng: &mut R,
) -> Result<Vec<Decision>> {
    if observations.is_empty() {
        return Ok(Vec::new());
    }
    let features = observations
        .iter()
        .map(|o| Features::from_observation(o, &params.config))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Features> = features.iter().collect();
    let batch = Batch::stack(&refs, &params.config)?;
    let mut g = Graph::new();
    let f = forward(&mut g, params, &batch)?;
    let outs = outputs(&g, &f, &batch);
    let mode = params.config.proposal_mode;
    Ok(features
        .into_iter()
        .zip(outs)
        .zip(observations)
        .map(|((feat, out), obs)| {
            let (stored, log_prob, _) =
                sample_action(&out, &obs.value_counts, mode, deterministic, rng);
            Decision {
                action: stored.to_agent_action(),
                log_prob,
                value: out.value,
                stored,
                features: feat,
                output: out,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn squash_correction_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (mean, log_std) in [(0.0f64, -1.0f64), (0.7, 0.0), (-1.5, 0.5)] {
            let n = 200_000;
            let mc: f64 = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    log_sigmoid_jacobian(mean + log_std.exp() * z)
                })
                .sum::<f64>()
                / n as f64;
            let q = squash_entropy_correction(mean, log_std);
            assert!((q - mc).abs() < 0.005, "{mean} {log_std}: {q} vs {mc}");
        }
    }

    #[test]
    fn graph_correction_matches_scalar() {
        let (means, stds) = (vec![0.3, -2.0, 4.0], vec![-0.5, 0.0, 1.0]);
        let mut g = Graph::new();
        let m = g.constant(Tensor::new(&[3, 1], means.clone()).unwrap());
        let s = g.constant(Tensor::new(&[3, 1], stds.clone()).unwrap());
        let c = squash_entropy_correction_graph(&mut g, m, s).unwrap();
        for (k, v) in g.value(c).data().iter().enumerate() {
            assert!((v - squash_entropy_correction(means[k], stds[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn squashed_entropy_peaks_at_finite_width() {
        let h = |log_std: f64| log_std + squash_entropy_correction(0.0, log_std);
        // the logit-normal closest to uniform sits near log σ = 0.5
        assert!(h(0.5) > h(-1.0));
        assert!(h(0.5) > h(1.0));
    }
}
