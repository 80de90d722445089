use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::domain::{random_scenario, GeneratorConfig};
use crate::env::{AgentAction, EnvConfig, NegotiationEnv, Observation};
use crate::numerics::{Graph, Tensor};
use crate::protocol::{MessageTag, TagSet};

fn small_config() -> HcnConfig {
    HcnConfig {
        d: 8,
        heads: 2,
        d_m: 4,
        history_len: 3,
        max_issues: 2,
        max_values: 4,
        ..HcnConfig::default()
    }
}

/// Observations from a few rounds of random play, so histories, beliefs and
/// standing proposals are populated.
fn played_observations(n: usize, seed: u64) -> Vec<Observation> {
    let s = random_scenario(&GeneratorConfig::fixed(n, 2, 4), seed).unwrap();
    let cfg = EnvConfig {
        history_len: 3,
        ..EnvConfig::default()
    };
    let (mut env, mut obs) = NegotiationEnv::reset(s, cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..5 {
        let actions: Vec<AgentAction> = (0..n)
            .map(|i| {
                let legal: Vec<MessageTag> = env.legal(i).iter().collect();
                let tag = legal[rng.random_range(0..legal.len())];
                AgentAction::new(tag, rng.random())
            })
            .collect();
        let r = env.step(&actions).unwrap();
        obs = r.observations;
        if r.done {
            break;
        }
    }
    obs
}

fn batch_of(obs: &[Observation], cfg: &HcnConfig) -> (Vec<Features>, Batch) {
    let feats: Vec<Features> = obs
        .iter()
        .map(|o| Features::from_observation(o, cfg).unwrap())
        .collect();
    let refs: Vec<&Features> = feats.iter().collect();
    let batch = Batch::stack(&refs, cfg).unwrap();
    (feats, batch)
}

#[test]
fn zero_params_encode_to_zero() {
    let cfg = small_config();
    let p = HcnParams::zeros(cfg.clone()).unwrap();
    let (_, batch) = batch_of(&played_observations(3, 1), &cfg);
    let mut g = Graph::new();
    let vars: Vec<_> = p.tensors.iter().map(|t| g.param(t)).collect();
    let z = encode(&mut g, &vars, &batch, &cfg).unwrap();
    assert!(g.value(z).data().iter().all(|v| *v == 0.0));
}

#[test]
fn empty_history_matches_single_pass_under_zero_params() {
    let cfg = small_config();
    let p = HcnParams::zeros(cfg.clone()).unwrap();
    let s = random_scenario(&GeneratorConfig::fixed(2, 1, 4), 2).unwrap();
    let (mut env, fresh) = NegotiationEnv::reset(s, EnvConfig::default(), 0).unwrap();
    let after = env.step(&[AgentAction::pass(), AgentAction::pass()]).unwrap().observations;
    let encode_first = |o: &Observation| {
        let (_, batch) = batch_of(std::slice::from_ref(o), &cfg);
        let mut g = Graph::new();
        let vars: Vec<_> = p.tensors.iter().map(|t| g.param(t)).collect();
        let z = encode(&mut g, &vars, &batch, &cfg).unwrap();
        g.value(z).data()[..cfg.d].to_vec()
    };
    assert_eq!(encode_first(&fresh[0]), encode_first(&after[0]));
}

#[test]
fn encoder_gradient_matches_finite_differences() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let (_, batch) = batch_of(&played_observations(3, 4), &cfg);
    let loss_of = |p: &HcnParams| {
        let mut g = Graph::new();
        let vars: Vec<_> = p.tensors.iter().map(|t| g.param(t)).collect();
        let z = encode(&mut g, &vars, &batch, &cfg).unwrap();
        let sq = g.square(z).unwrap();
        let l = g.sum(sq).unwrap();
        g.scalar_value(l)
    };
    let analytic = {
        let mut g = Graph::new();
        let vars: Vec<_> = p.tensors.iter().map(|t| g.param(t)).collect();
        let z = encode(&mut g, &vars, &batch, &cfg).unwrap();
        let sq = g.square(z).unwrap();
        let l = g.sum(sq).unwrap();
        g.backward(l).unwrap();
        g.grad(vars[4]).unwrap().to_vec() // W_e
    };
    let h = 1e-5;
    for (i, a) in analytic.iter().enumerate() {
        let mut plus = p.clone();
        plus.tensors[4].data_mut()[i] += h;
        let mut minus = p.clone();
        minus.tensors[4].data_mut()[i] -= h;
        let n = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
        assert!((a - n).abs() / a.abs().max(n.abs()).max(1e-3) <= 1e-4);
    }
}

#[test]
fn attention_weights_are_distributions() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let (_, batch) = batch_of(&played_observations(4, 5), &cfg);
    let mut g = Graph::new();
    let f = forward(&mut g, &p, &batch).unwrap();
    assert_eq!(f.attention.len(), cfg.heads);
    for w in &f.attention {
        for row in g.value(*w).data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    for row in g.value(f.coalition).data().chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn identical_opponents_get_uniform_attention() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let obs = played_observations(3, 6);
    let mut f0 = Features::from_observation(&obs[0], &cfg).unwrap();
    // copy opponent 1's rows onto opponent 2
    let (fe, fc) = (cfg.env_width(), cfg.context_width());
    let lm = cfg.history_len * crate::env::MESSAGE_FEATURES;
    let l = cfg.history_len;
    f0.env.copy_within(fe..2 * fe, 2 * fe);
    f0.ctx.copy_within(fc..2 * fc, 2 * fc);
    f0.hist.copy_within(lm..2 * lm, 2 * lm);
    f0.hist_valid.copy_within(l..2 * l, 2 * l);
    let batch = Batch::stack(&[&f0], &cfg).unwrap();
    let mut g = Graph::new();
    let f = forward(&mut g, &p, &batch).unwrap();
    for w in &f.attention {
        let d = g.value(*w).data();
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn concentrated_gate_selects_one_opponent() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let (_, batch) = batch_of(&played_observations(3, 7)[..1], &cfg);
    // a huge gate weight makes the gate a hard choice
    for x in p.tensors[16].data_mut() {
        *x *= 1e6;
    }
    let mut g = Graph::new();
    let f = forward(&mut g, &p, &batch).unwrap();
    let gate = g.value(f.coalition).data().to_vec();
    let pick = if gate[0] > gate[1] { 0 } else { 1 };
    assert!(gate[pick] > 1.0 - 1e-9);
    for w in &f.attention {
        assert!(g.value(*w).data()[pick] > 1.0 - 1e-9);
    }
}

#[test]
fn masking_and_uniform_start() {
    let cfg = small_config();
    let p = HcnParams::zeros(cfg.clone()).unwrap();
    let mut obs = played_observations(2, 8);
    obs[0].legal = TagSet::of(&[MessageTag::Pass]);
    obs[1].legal = TagSet::of(&[MessageTag::Pass, MessageTag::Accept, MessageTag::Reveal]);
    let (_, batch) = batch_of(&obs, &cfg);
    let mut g = Graph::new();
    let f = forward(&mut g, &p, &batch).unwrap();
    let outs = outputs(&g, &f, &batch);
    assert!(outs[0].move_logp[MessageTag::Pass.index()].exp() >= 1.0 - 1e-12);
    for t in MessageTag::ALL {
        let pr = outs[1].move_logp[t.index()].exp();
        if obs[1].legal.contains(t) {
            assert!((pr - 1.0 / 3.0).abs() < 1e-12);
        } else {
            assert!(pr < 1e-12);
        }
    }
}

#[test]
fn firm_stance_concedes_less() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let (_, batch) = batch_of(&played_observations(2, 9)[..1], &cfg);
    let mean_with = |bias: [f64; 3]| {
        let mut p = base.clone();
        p.tensors[18].data_mut().copy_from_slice(&bias);
        let mut g = Graph::new();
        let f = forward(&mut g, &p, &batch).unwrap();
        g.value(f.concession_mean).data()[0]
    };
    assert!(mean_with([50.0, 0.0, 0.0]) < mean_with([0.0, 0.0, 50.0]));
}

#[test]
fn no_hierarchy_freezes_gate_and_stance() {
    let cfg = HcnConfig {
        hierarchy: false,
        ..small_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let (_, batch) = batch_of(&played_observations(4, 10), &cfg);
    let mut g = Graph::new();
    let f = forward(&mut g, &p, &batch).unwrap();
    assert!(g.value(f.coalition).data().iter().all(|v| *v == 1.0 / 3.0));
    for row in g.value(f.stance).data().chunks(3) {
        assert_eq!(row, &[0.0, 1.0, 0.0]);
    }
}

#[test]
fn sampling_properties() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let obs = played_observations(2, 11);
    let o = &obs[0];
    let d1 = act(&p, &[o], true, &mut rng).unwrap();
    let d2 = act(&p, &[o], true, &mut rng).unwrap();
    assert_eq!(d1[0].stored, d2[0].stored);
    let out = &d1[0].output;
    for _ in 0..10_000 {
        let (a, _, _) = sample_action(out, &o.value_counts, cfg.proposal_mode, false, &mut rng);
        assert!(o.legal.contains(a.tag));
    }
    let mut uniform = out.clone();
    uniform.move_logp = [-(7f64).ln(); 7];
    uniform.concession_log_std = 0.0;
    let gauss = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    // Gaussian entropy in logit space, less the expected squash Jacobian
    uniform.concession_mean = 0.0;
    let squashed = entropy(&uniform) - gauss - 7f64.ln();
    assert!(squashed < 0.0 && squashed > -2.0, "{squashed}");
}

fn rescored(p: &HcnParams, feats: &[Features], actions: &[StoredAction]) -> Vec<f64> {
    let refs: Vec<&Features> = feats.iter().collect();
    let batch = Batch::stack(&refs, &p.config).unwrap();
    let mut g = Graph::new();
    let f = forward(&mut g, p, &batch).unwrap();
    let acts: Vec<&StoredAction> = actions.iter().collect();
    let (lp, _) = evaluate_actions(&mut g, &f, &batch, &acts).unwrap();
    g.value(lp).data().to_vec()
}

#[test]
fn rescoring_matches_sampling_time_log_prob() {
    for mode in [ProposalMode::TargetUtility, ProposalMode::Sampled] {
        let cfg = HcnConfig {
            proposal_mode: mode,
            ..small_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
        let mut obs = played_observations(3, 12);
        obs.extend(played_observations(3, 13));
        let refs: Vec<&Observation> = obs.iter().collect();
        let ds = act(&p, &refs, false, &mut rng).unwrap();
        let feats: Vec<Features> = ds.iter().map(|d| d.features.clone()).collect();
        let actions: Vec<StoredAction> = ds.iter().map(|d| d.stored.clone()).collect();
        let again = rescored(&p, &feats, &actions);
        for (d, lp) in ds.iter().zip(&again) {
            assert!((d.log_prob - lp).abs() < 1e-12, "{mode:?}");
        }
        // raising the taken tag's logit raises its log-probability
        let tag = actions[0].tag.index();
        let mut bumped = p.clone();
        bumped.tensors[21].data_mut()[tag] += 1.0;
        assert!(rescored(&bumped, &feats, &actions)[0] > again[0]);
    }
}

#[test]
fn forward_is_pure() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = HcnParams::init(cfg.clone(), &mut rng).unwrap();
    let obs = played_observations(3, 14);
    let refs: Vec<&Observation> = obs.iter().collect();
    let a = act(&p, &refs, true, &mut rng).unwrap();
    let b = act(&p, &refs, true, &mut rng).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.output, y.output);
    }
}

#[test]
fn checkpoint_and_manifest_round_trip() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let p = HcnParams::init(cfg, &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.ddck");
    p.save(&path).unwrap();
    assert_eq!(HcnParams::load(&path).unwrap(), p);
    let s = random_scenario(&GeneratorConfig::fixed(2, 3, 4), 0).unwrap();
    assert!(p.config.check_scenario(&s).is_err());
    let t = Tensor::zeros(&[1]);
    assert_eq!(t.numel(), 1);
}
