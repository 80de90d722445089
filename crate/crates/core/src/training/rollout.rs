use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{Baseline, BaselineAgent};
use crate::domain::random_scenario;
use crate::env::{AgentAction, EnvConfig, NegotiationEnv, Observation};
use crate::error::{Error, Result};
use crate::evaluation::{episode_record, EpisodeRecord};
use crate::hcn::{act, forward, Batch, Decision, Features, HcnParams};
use crate::numerics::Graph;
use crate::rewards::ObjectiveWeights;

use super::curriculum::CurriculumStage;
use super::gae::compute_gae;
use super::pool::OpponentPool;
use super::ppo::{RolloutBuffer, Sample};

/// Rule-based seats injected by the exploiter stage.
pub const EXPLOITERS: [Baseline; 3] = [
    Baseline::Conceder { beta: 0.1 },
    Baseline::Conceder { beta: 0.5 },
    Baseline::AlternatingOffers,
];

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOptions {
    pub env: EnvConfig,
    /// Episodes stepped in lockstep so decisions are batched.
    pub lanes: usize,
    pub p_hist: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub objective: ObjectiveWeights,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            lanes: 16,
            p_hist: 0.3,
            gamma: 0.99,
            gae_lambda: 0.95,
            objective: ObjectiveWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub buffer: RolloutBuffer,
    /// Episodes that finished during collection, in completion order.
    pub episodes: Vec<EpisodeRecord>,
}

impl Rollout {
    pub fn consensus_rate(&self) -> Option<f64> {
        (!self.episodes.is_empty()).then(|| {
            self.episodes.iter().filter(|e| e.agreement).count() as f64 / self.episodes.len() as f64
        })
    }

    pub fn mean_objective(&self) -> Option<f64> {
        (!self.episodes.is_empty())
            .then(|| self.episodes.iter().map(|e| e.objective).sum::<f64>() / self.episodes.len() as f64)
    }

    fn extend(&mut self, other: Rollout) {
        self.buffer.samples.extend(other.buffer.samples);
        self.episodes.extend(other.episodes);
    }
}

#[derive(Debug, Clone)]
enum Seat {
    Learner,
    Snapshot(usize),
    Exploiter(BaselineAgent),
}

struct Lane {
    env: NegotiationEnv,
    obs: Vec<Observation>,
    seats: Vec<Seat>,
    /// Sample indices of the running episode, per seat.
    open: Vec<Vec<usize>>,
}

struct Trajectory {
    steps: Vec<usize>,
    terminal: bool,
    bootstrap: f64,
}

fn start_lane(
    stage: &CurriculumStage,
    pool: &OpponentPool,
    opts: &RolloutOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Lane> {
    let scenario_seed: u64 = rng.random();
    let scenario = random_scenario(&stage.generator, scenario_seed)?;
    let n = scenario.num_agents;
    let (env, obs) = NegotiationEnv::reset(scenario, opts.env.clone(), scenario_seed)?;
    let anchor = rng.random_range(0..n);
    let seats = (0..n)
        .map(|i| {
            if i == anchor {
                return Seat::Learner;
            }
            if rng.random::<f64>() < stage.exploiter_prob {
                let kind = EXPLOITERS[rng.random_range(0..EXPLOITERS.len())];
                return Seat::Exploiter(BaselineAgent::new(kind));
            }
            if rng.random::<f64>() < opts.p_hist {
                if let Some(k) = pool.sample_index(rng) {
                    return Seat::Snapshot(k);
                }
            }
            Seat::Learner
        })
        .collect();
    Ok(Lane {
        env,
        obs,
        seats,
        open: vec![Vec::new(); n],
    })
}

fn state_values(params: &HcnParams, obs: &[&Observation]) -> Result<Vec<f64>> {
    if obs.is_empty() {
        return Ok(Vec::new());
    }
    let feats = obs
        .iter()
        .map(|o| Features::from_observation(o, &params.config))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Features> = feats.iter().collect();
    let batch = Batch::stack(&refs, &params.config)?;
    let mut g = Graph::new();
    let f = forward(&mut g, params, &batch)?;
    Ok(g.value(f.value).data().to_vec())
}

/// Exactly `count` learner decisions from stage-generated episodes, with
/// advantages and returns filled in. Deterministic in (seed, params, pool).
pub fn collect_rollouts(
    params: &HcnParams,
    pool: &OpponentPool,
    stage: &CurriculumStage,
    count: usize,
    seed: u64,
    opts: &RolloutOptions,
) -> Result<Rollout> {
    if opts.lanes == 0 {
        return Err(Error::Config("rollout needs at least one lane".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lanes: Vec<Option<Lane>> = (0..opts.lanes).map(|_| None).collect();
    let mut samples: Vec<Sample> = Vec::with_capacity(count + opts.lanes * 8);
    let mut trajectories = Vec::new();
    let mut episodes = Vec::new();

    while samples.len() < count {
        for slot in lanes.iter_mut() {
            if slot.is_none() {
                *slot = Some(start_lane(stage, pool, opts, &mut rng)?);
            }
        }
        let mut lanes_ref: Vec<&mut Lane> = lanes.iter_mut().map(|l| l.as_mut().expect("lane")).collect();

        let mut learners = Vec::new();
        let mut snapshots: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (l, lane) in lanes_ref.iter().enumerate() {
            for (i, seat) in lane.seats.iter().enumerate() {
                match seat {
                    Seat::Learner => learners.push((l, i)),
                    Seat::Snapshot(k) => snapshots.entry(*k).or_default().push((l, i)),
                    Seat::Exploiter(_) => {}
                }
            }
        }
        let mut actions: Vec<Vec<AgentAction>> = lanes_ref
            .iter()
            .map(|lane| vec![AgentAction::pass(); lane.seats.len()])
            .collect();

        let obs: Vec<&Observation> = learners.iter().map(|&(l, i)| &lanes_ref[l].obs[i]).collect();
        let decisions = act(params, &obs, false, &mut rng)?;
        for (k, group) in &snapshots {
            let obs: Vec<&Observation> = group.iter().map(|&(l, i)| &lanes_ref[l].obs[i]).collect();
            for (d, &(l, i)) in act(pool.get(*k), &obs, false, &mut rng)?.into_iter().zip(group) {
                actions[l][i] = d.action;
            }
        }
        for (l, lane) in lanes_ref.iter_mut().enumerate() {
            let Lane { env, seats, .. } = &mut **lane;
            for (i, seat) in seats.iter_mut().enumerate() {
                if let Seat::Exploiter(agent) = seat {
                    actions[l][i] = agent.act(env, i, &mut rng);
                }
            }
        }
        let mut pending: Vec<Vec<(usize, Decision)>> =
            (0..lanes_ref.len()).map(|_| Vec::new()).collect();
        for (d, &(l, i)) in decisions.into_iter().zip(&learners) {
            actions[l][i] = d.action.clone();
            pending[l].push((i, d));
        }

        for (l, lane) in lanes_ref.iter_mut().enumerate() {
            let step = lane.env.step(&actions[l])?;
            for (i, d) in pending[l].drain(..) {
                lane.open[i].push(samples.len());
                samples.push(Sample {
                    features: d.features,
                    action: d.stored,
                    log_prob: d.log_prob,
                    value: d.value,
                    reward: step.rewards[i],
                    done: step.done,
                    advantage: 0.0,
                    ret: 0.0,
                });
            }
            lane.obs = step.observations;
        }
        for slot in lanes.iter_mut() {
            let lane = slot.as_mut().expect("lane");
            if lane.env.is_done() {
                for steps in lane.open.drain(..).filter(|s| !s.is_empty()) {
                    trajectories.push(Trajectory {
                        steps,
                        terminal: true,
                        bootstrap: 0.0,
                    });
                }
                episodes.push(episode_record(&lane.env, episodes.len(), &opts.objective, 0)?);
                *slot = None;
            }
        }
    }

    // still-running episodes are bootstrapped from the value of the next state
    let mut open_obs = Vec::new();
    let mut open_steps = Vec::new();
    for lane in lanes.iter_mut().flatten() {
        for (i, steps) in lane.open.iter_mut().enumerate() {
            if !steps.is_empty() {
                open_obs.push(&lane.obs[i]);
                open_steps.push(std::mem::take(steps));
            }
        }
    }
    for (steps, v) in open_steps.into_iter().zip(state_values(params, &open_obs)?) {
        trajectories.push(Trajectory {
            steps,
            terminal: false,
            bootstrap: v,
        });
    }

    // cut to exactly `count`; a cut trajectory bootstraps from its first dropped step
    for t in &mut trajectories {
        if let Some(cut) = t.steps.iter().position(|&s| s >= count) {
            t.bootstrap = samples[t.steps[cut]].value;
            t.terminal = false;
            t.steps.truncate(cut);
        }
    }
    for t in &trajectories {
        if t.steps.is_empty() {
            continue;
        }
        let rewards: Vec<f64> = t.steps.iter().map(|&s| samples[s].reward.total).collect();
        let values: Vec<f64> = t.steps.iter().map(|&s| samples[s].value).collect();
        let mut dones = vec![false; t.steps.len()];
        *dones.last_mut().expect("non-empty") = t.terminal;
        let bootstrap = if t.terminal { 0.0 } else { t.bootstrap };
        let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, opts.gamma, opts.gae_lambda)?;
        for ((&s, a), r) in t.steps.iter().zip(adv).zip(ret) {
            samples[s].advantage = a;
            samples[s].ret = r;
        }
    }
    samples.truncate(count);
    Ok(Rollout {
        buffer: RolloutBuffer { samples },
        episodes,
    })
}

/// Seed used by worker `w` of a fanned-out collection.
pub fn worker_seed(seed: u64, worker: usize) -> u64 {
    if worker == 0 {
        seed
    } else {
        seed ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Split `count` across `workers` threads and concatenate in worker order.
pub fn collect_parallel(
    params: &HcnParams,
    pool: &OpponentPool,
    stage: &CurriculumStage,
    count: usize,
    seed: u64,
    opts: &RolloutOptions,
    workers: usize,
) -> Result<Rollout> {
    let workers = workers.max(1);
    if workers == 1 {
        return collect_rollouts(params, pool, stage, count, seed, opts);
    }
    let share = |w: usize| count / workers + usize::from(w < count % workers);
    let parts: Vec<Result<Rollout>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || collect_rollouts(params, pool, stage, share(w), worker_seed(seed, w), opts))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("rollout worker panicked".into()))))
            .collect()
    });
    let mut out = Rollout::default();
    for part in parts {
        let mut part = part?;
        let offset = out.episodes.len();
        part.episodes.iter_mut().for_each(|e| e.episode_id += offset);
        out.extend(part);
    }
    Ok(out)
}
