//! Episode engine: turns per-agent intents into protocol messages, keeps the
//! opponent beliefs current, and hands out observations and shaped rewards.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{enumerate_grid, Deal, Scenario};
use crate::error::{Error, Result};
use crate::protocol::{
    write_transcript, Direction, Message, MessageTag, Outcome, Phase, ProtocolRules,
    ProtocolState, TagSet, DEFAULT_REVEAL_BUCKETS, TAG_COUNT,
};
use crate::rewards::{
    bucket_level, outcome_reward, process_reward, social_reward, total_reward, weight_bucket,
    BeliefState, Evidence, ProcessEvents, RewardBreakdown, RewardWeights, ShapingConfig,
};

/// Width of one encoded history message.
pub const MESSAGE_FEATURES: usize = TAG_COUNT + 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub rewards: RewardWeights,
    pub shaping: ShapingConfig,
    pub reveal_buckets: usize,
    /// Messages kept in each observation history.
    pub history_len: usize,
    /// Open every message tag in every phase.
    pub phase_free: bool,
    /// Above this many deals, proposals come from greedy single-issue search.
    pub search_limit: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            rewards: RewardWeights::default(),
            shaping: ShapingConfig::default(),
            reveal_buckets: DEFAULT_REVEAL_BUCKETS,
            history_len: 4,
            phase_free: false,
            search_limit: 100_000,
        }
    }
}

/// What an agent wants to do this round. Arguments left as `None` are filled
/// in by [`NegotiationEnv::decode_action`] from the concession level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    pub tag: MessageTag,
    /// Concession magnitude in [0, 1]; 0 demands the own-best deal.
    pub concession: f64,
    pub deal: Option<Deal>,
    pub argue: Option<(usize, Direction, f64)>,
    pub reveal: Option<(usize, usize)>,
}

impl AgentAction {
    pub fn new(tag: MessageTag, concession: f64) -> Self {
        Self {
            tag,
            concession,
            deal: None,
            argue: None,
            reveal: None,
        }
    }

    pub fn pass() -> Self {
        Self::new(MessageTag::Pass, 0.0)
    }

    pub fn with_deal(tag: MessageTag, deal: Deal) -> Self {
        Self {
            deal: Some(deal),
            ..Self::new(tag, 0.0)
        }
    }
}

/// Public behaviour of one opponent as seen by the observer.
#[derive(Debug, Clone, PartialEq)]
pub struct OpponentView {
    pub agent: usize,
    pub last_tag: Option<MessageTag>,
    /// +1 raise, −1 lower, 0 when the opponent never argued.
    pub argue_direction: f64,
    pub argue_strength: f64,
    pub accepted: bool,
    /// Observer's utility for the opponent's most recent Propose/Counteroffer,
    /// which may already have been displaced as the standing proposal.
    pub last_offer_utility: Option<f64>,
    /// Observer's weight-bucket posterior about this opponent, issue-major.
    pub belief: Vec<f64>,
    /// Last messages authored by this opponent, oldest first.
    pub history: Vec<[f64; MESSAGE_FEATURES]>,
}

/// Everything one agent observes at the start of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub agent: usize,
    pub value_counts: Vec<usize>,
    pub reveal_buckets: usize,
    pub weights: Vec<f64>,
    pub reservation: f64,
    pub phase: Phase,
    pub round_fraction: f64,
    pub standing: Option<Deal>,
    pub standing_utility: f64,
    pub standing_is_own: bool,
    pub opponents: Vec<OpponentView>,
    /// Last public messages from anyone, oldest first.
    pub history: Vec<[f64; MESSAGE_FEATURES]>,
    pub legal: TagSet,
}

impl Observation {
    /// Length of [`to_vec`](Self::to_vec) for a scenario shape.
    pub fn vector_len(num_agents: usize, value_counts: &[usize], buckets: usize) -> usize {
        let m = value_counts.len();
        m + 1 + 5 + 1 + value_counts.iter().sum::<usize>() + 2
            + (num_agents - 1) * (TAG_COUNT + 5 + buckets * m)
    }

    /// Flat vector: weights, reservation, phase one-hot, round fraction,
    /// standing deal one-hot per issue, own utility of the standing deal, own
    /// authorship flag, then per opponent (tag one-hot, argue direction and
    /// strength, acceptance flag, latest-offer utility and presence flag,
    /// belief posterior).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::vector_len(
            self.opponents.len() + 1,
            &self.value_counts,
            self.reveal_buckets,
        ));
        v.extend_from_slice(&self.weights);
        v.push(self.reservation);
        let mut phase = [0.0; 5];
        phase[self.phase.index()] = 1.0;
        v.extend_from_slice(&phase);
        v.push(self.round_fraction);
        for (m, &count) in self.value_counts.iter().enumerate() {
            let start = v.len();
            v.resize(start + count, 0.0);
            if let Some(d) = &self.standing {
                v[start + d.values[m]] = 1.0;
            }
        }
        v.push(self.standing_utility);
        v.push(if self.standing_is_own { 1.0 } else { 0.0 });
        for o in &self.opponents {
            let mut tag = [0.0; TAG_COUNT];
            if let Some(t) = o.last_tag {
                tag[t.index()] = 1.0;
            }
            v.extend_from_slice(&tag);
            v.push(o.argue_direction);
            v.push(o.argue_strength);
            v.push(if o.accepted { 1.0 } else { 0.0 });
            v.push(o.last_offer_utility.unwrap_or(0.0));
            v.push(if o.last_offer_utility.is_some() { 1.0 } else { 0.0 });
            v.extend_from_slice(&o.belief);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Observation>,
    pub rewards: Vec<RewardBreakdown>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub outcome: Outcome,
    pub utilities: Vec<f64>,
    pub rounds: usize,
    pub rewards: Vec<Vec<RewardBreakdown>>,
    pub state: ProtocolState,
}

impl EpisodeResult {
    pub fn write_transcript<W: Write>(&self, out: &mut W) -> Result<()> {
        write_transcript(out, &self.state)
    }
}

#[derive(Debug, Clone, Default)]
struct PublicBehavior {
    last_tag: Option<MessageTag>,
    argue: Option<(Direction, f64)>,
    revealed: Vec<bool>,
}

/// All deals with every agent's utility, when the space is small enough.
#[derive(Debug, Clone)]
struct DealTable {
    deals: Vec<Deal>,
    /// utilities[agent][deal]
    utilities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct NegotiationEnv {
    scenario: Scenario,
    config: EnvConfig,
    state: ProtocolState,
    beliefs: Vec<BeliefState>,
    behavior: Vec<PublicBehavior>,
    table: Option<DealTable>,
    rewards: Vec<Vec<RewardBreakdown>>,
    seed: u64,
}

fn fast_utility(scenario: &Scenario, agent: usize, deal: &Deal) -> f64 {
    let p = &scenario.profiles[agent];
    deal.values
        .iter()
        .enumerate()
        .map(|(m, &v)| p.weights[m] * p.valuations[m][v])
        .sum()
}

fn increasing(scenario: &Scenario, agent: usize, issue: usize) -> bool {
    let vals = &scenario.profiles[agent].valuations[issue];
    vals[vals.len() - 1] >= vals[0]
}

impl NegotiationEnv {
    /// Fresh episode. The engine itself draws no randomness; `seed` is kept
    /// for bookkeeping so transcripts can name their origin.
    pub fn reset(scenario: Scenario, config: EnvConfig, seed: u64) -> Result<(Self, Vec<Observation>)> {
        scenario.validate()?;
        let mut rules = ProtocolRules::for_scenario(&scenario).with_phase_free(config.phase_free);
        rules.reveal_buckets = config.reveal_buckets;
        let state = ProtocolState::new(rules)?;
        let n = scenario.num_agents;
        let m = scenario.num_issues();
        let table = if scenario.deal_count() <= config.search_limit as u128 {
            let deals: Vec<Deal> = enumerate_grid(&scenario.value_counts())?.collect();
            let utilities = (0..n)
                .map(|i| deals.iter().map(|d| fast_utility(&scenario, i, d)).collect())
                .collect();
            Some(DealTable { deals, utilities })
        } else {
            None
        };
        let env = Self {
            beliefs: (0..n)
                .map(|i| BeliefState::new(i, n, m, config.reveal_buckets))
                .collect(),
            behavior: vec![
                PublicBehavior {
                    revealed: vec![false; m],
                    ..Default::default()
                };
                n
            ],
            rewards: vec![Vec::new(); n],
            scenario,
            config,
            state,
            table,
            seed,
        };
        let obs = env.observations();
        Ok((env, obs))
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &ProtocolState {
        &self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn belief(&self, agent: usize) -> &BeliefState {
        &self.beliefs[agent]
    }

    pub fn is_done(&self) -> bool {
        self.state.is_terminated()
    }

    pub fn num_agents(&self) -> usize {
        self.scenario.num_agents
    }

    /// Tags `agent` may choose this round; `{Pass}` once the episode is over.
    pub fn legal(&self, agent: usize) -> TagSet {
        self.state
            .legal_moves(agent)
            .unwrap_or_else(|_| TagSet::of(&[MessageTag::Pass]))
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.num_agents()).map(|i| self.observation(i)).collect()
    }

    fn message_features(&self, observer: usize, logged: &crate::protocol::LoggedMessage) -> [f64; MESSAGE_FEATURES] {
        let mut f = [0.0; MESSAGE_FEATURES];
        let msg = &logged.message;
        f[msg.tag().index()] = 1.0;
        f[TAG_COUNT] = if logged.agent == observer { 1.0 } else { 0.0 };
        match msg {
            Message::Argue {
                direction, strength, ..
            } => {
                f[TAG_COUNT + 1] = match direction {
                    Direction::Raise => 1.0,
                    Direction::Lower => -1.0,
                };
                f[TAG_COUNT + 2] = *strength;
            }
            Message::Reveal { bucket, .. } => {
                f[TAG_COUNT + 3] = bucket_level(*bucket, self.config.reveal_buckets);
            }
            Message::Propose { deal } | Message::Counteroffer { deal, .. } => {
                f[TAG_COUNT + 4] = fast_utility(&self.scenario, observer, deal);
            }
            Message::Accept { proposal_id } | Message::Reject { proposal_id } => {
                let deal = &self.state.proposal_log[*proposal_id].deal;
                f[TAG_COUNT + 4] = fast_utility(&self.scenario, observer, deal);
            }
            Message::Pass => {}
        }
        f
    }

    pub fn observation(&self, agent: usize) -> Observation {
        let profile = &self.scenario.profiles[agent];
        let standing = self.state.standing_proposal();
        let l = self.config.history_len;
        let log = &self.state.message_log;
        let history = log[log.len().saturating_sub(l)..]
            .iter()
            .map(|lm| self.message_features(agent, lm))
            .collect();
        let opponents = (0..self.num_agents())
            .filter(|&j| j != agent)
            .map(|j| {
                let b = &self.behavior[j];
                let mut authored: Vec<_> = log
                    .iter()
                    .rev()
                    .filter(|lm| lm.agent == j)
                    .take(l)
                    .map(|lm| self.message_features(agent, lm))
                    .collect();
                authored.reverse();
                OpponentView {
                    agent: j,
                    last_tag: b.last_tag,
                    argue_direction: match b.argue {
                        Some((Direction::Raise, _)) => 1.0,
                        Some((Direction::Lower, _)) => -1.0,
                        None => 0.0,
                    },
                    argue_strength: b.argue.map_or(0.0, |(_, s)| s),
                    accepted: self.state.standing.is_some() && self.state.acceptances[j],
                    last_offer_utility: self
                        .state
                        .proposal_log
                        .iter()
                        .rev()
                        .find(|p| p.author == j)
                        .map(|p| fast_utility(&self.scenario, agent, &p.deal)),
                    belief: self.beliefs[agent].summary(j),
                    history: authored,
                }
            })
            .collect();
        Observation {
            agent,
            value_counts: self.state.rules.value_counts.clone(),
            reveal_buckets: self.config.reveal_buckets,
            weights: profile.weights.clone(),
            reservation: profile.reservation,
            phase: self.state.phase,
            round_fraction: self.state.round as f64 / self.state.total_budget() as f64,
            standing: standing.map(|p| p.deal.clone()),
            standing_utility: standing.map_or(0.0, |p| fast_utility(&self.scenario, agent, &p.deal)),
            standing_is_own: standing.is_some_and(|p| p.author == agent),
            opponents,
            history,
            legal: self.legal(agent),
        }
    }

    /// Estimated joint welfare of a deal from `agent`'s point of view.
    fn joint_estimate(&self, agent: usize, deal: &Deal) -> f64 {
        let belief = &self.beliefs[agent];
        fast_utility(&self.scenario, agent, deal)
            + (0..self.num_agents())
                .filter(|&j| j != agent)
                .map(|j| belief.expected_utility(j, deal, &self.scenario.issues))
                .sum::<f64>()
    }

    /// Deal an agent proposes at concession `c`: among deals worth at least
    /// u* = 1 − c·(1 − reservation) to it, the one with the highest mean
    /// belief-expected opponent utility (lowest indices on ties).
    pub fn target_deal(&self, agent: usize, concession: f64) -> Deal {
        let profile = &self.scenario.profiles[agent];
        let c = concession.clamp(0.0, 1.0);
        let target = 1.0 - c * (1.0 - profile.reservation) - 1e-9;
        let belief = &self.beliefs[agent];
        let issues = &self.scenario.issues;
        match &self.table {
            Some(table) => {
                let own = &table.utilities[agent];
                let mut best: Option<(usize, f64)> = None;
                for (k, d) in table.deals.iter().enumerate() {
                    if own[k] < target {
                        continue;
                    }
                    let w = belief.opponent_welfare(d, issues);
                    if best.is_none_or(|(_, bw)| w > bw) {
                        best = Some((k, w));
                    }
                }
                best.map_or_else(|| profile.best_deal(), |(k, _)| table.deals[k].clone())
            }
            None => {
                let mut deal = profile.best_deal();
                let mut own = fast_utility(&self.scenario, agent, &deal);
                let mut welfare = belief.opponent_welfare(&deal, issues);
                loop {
                    let mut step: Option<(usize, usize, f64, f64)> = None;
                    for (m, issue) in issues.iter().enumerate() {
                        let cur = deal.values[m];
                        for v in 0..issue.num_values {
                            if v == cur {
                                continue;
                            }
                            let u = own
                                + profile.weights[m]
                                    * (profile.valuations[m][v] - profile.valuations[m][cur]);
                            if u < target {
                                continue;
                            }
                            deal.values[m] = v;
                            let w = belief.opponent_welfare(&deal, issues);
                            deal.values[m] = cur;
                            if w > welfare && step.is_none_or(|(_, _, _, bw)| w > bw) {
                                step = Some((m, v, u, w));
                            }
                        }
                    }
                    match step {
                        Some((m, v, u, w)) => {
                            deal.values[m] = v;
                            own = u;
                            welfare = w;
                        }
                        None => break deal,
                    }
                }
            }
        }
    }

    /// Realise an intent as a concrete message against the current state.
    /// Returns `None` when the intent cannot be expressed (e.g. Accept with
    /// nothing standing).
    pub fn decode_action(&self, agent: usize, action: &AgentAction) -> Option<Message> {
        let profile = &self.scenario.profiles[agent];
        let c = action.concession.clamp(0.0, 1.0);
        match action.tag {
            MessageTag::Pass => Some(Message::Pass),
            MessageTag::Propose => Some(Message::Propose {
                deal: action
                    .deal
                    .clone()
                    .unwrap_or_else(|| self.target_deal(agent, c)),
            }),
            MessageTag::Counteroffer => {
                let deal = action
                    .deal
                    .clone()
                    .unwrap_or_else(|| self.target_deal(agent, c));
                self.state.targeted(MessageTag::Counteroffer, Some(deal))
            }
            MessageTag::Accept | MessageTag::Reject => self.state.targeted(action.tag, None),
            MessageTag::Argue => {
                let (issue, direction, strength) = action.argue.unwrap_or_else(|| {
                    let issue = match self.state.standing_proposal() {
                        Some(p) => {
                            let gap: Vec<f64> = (0..profile.weights.len())
                                .map(|m| {
                                    profile.weights[m]
                                        * (1.0 - profile.valuations[m][p.deal.values[m]])
                                })
                                .collect();
                            crate::domain::argmax_first(&gap)
                        }
                        None => crate::domain::argmax_first(&profile.weights),
                    };
                    let dir = if increasing(&self.scenario, agent, issue) {
                        Direction::Raise
                    } else {
                        Direction::Lower
                    };
                    (issue, dir, 1.0 - c)
                });
                Some(Message::Argue {
                    issue,
                    direction,
                    strength,
                })
            }
            MessageTag::Reveal => {
                let (issue, bucket) = action.reveal.unwrap_or_else(|| {
                    let mut order: Vec<usize> = (0..profile.weights.len()).collect();
                    order.sort_by(|&a, &b| profile.weights[b].total_cmp(&profile.weights[a]));
                    let revealed = &self.behavior[agent].revealed;
                    let issue = order
                        .iter()
                        .copied()
                        .find(|&m| !revealed[m])
                        .unwrap_or(order[0]);
                    (issue, weight_bucket(profile.weights[issue], self.config.reveal_buckets))
                });
                Some(Message::Reveal { issue, bucket })
            }
        }
    }

    /// One round: every agent's intent is decoded and applied in id order.
    pub fn step(&mut self, actions: &[AgentAction]) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::ProtocolClosed);
        }
        let n = self.num_agents();
        if actions.len() != n {
            return Err(Error::Contract(format!(
                "{} actions for {n} agents",
                actions.len()
            )));
        }
        let phase = self.state.phase;
        let masks: Vec<TagSet> = (0..n).map(|i| self.legal(i)).collect();
        let entropy_before: Vec<f64> = self.beliefs.iter().map(BeliefState::entropy).collect();
        let mut events = vec![ProcessEvents::default(); n];
        let mut accepted_by = vec![0usize; n];

        for agent in 0..n {
            if self.state.is_terminated() {
                break;
            }
            let action = &actions[agent];
            let msg = self
                .decode_action(agent, action)
                .filter(|m| self.state.check_message(agent, m).is_ok());
            let msg = match msg {
                Some(m) => m,
                None => {
                    // only intents outside the agent's own mask are penalised;
                    // earlier movers can invalidate a legal intent
                    events[agent].illegal_substituted = !masks[agent].contains(action.tag);
                    Message::Pass
                }
            };
            match &msg {
                Message::Propose { deal } | Message::Counteroffer { deal, .. } => {
                    if let Some(prev) = self.state.standing_proposal() {
                        events[agent].improved_joint_welfare =
                            self.joint_estimate(agent, deal) > self.joint_estimate(agent, &prev.deal);
                    }
                }
                Message::Accept { proposal_id } => {
                    accepted_by[self.state.proposal_log[*proposal_id].author] += 1;
                }
                _ => {}
            }
            let verdict_deal = match &msg {
                Message::Accept { proposal_id } | Message::Reject { proposal_id } => {
                    Some(self.state.proposal_log[*proposal_id].deal.clone())
                }
                _ => None,
            };
            self.state.apply_message(agent, msg.clone())?;

            let evidence = match (&msg, &verdict_deal) {
                (Message::Reveal { issue, bucket }, _) => Some(Evidence::Reveal {
                    issue: *issue,
                    bucket: *bucket,
                }),
                (
                    Message::Argue {
                        issue,
                        direction,
                        strength,
                    },
                    _,
                ) => Some(Evidence::Argue {
                    issue: *issue,
                    direction: *direction,
                    strength: *strength,
                }),
                (Message::Accept { .. }, Some(d)) => Some(Evidence::Verdict {
                    deal: d,
                    accepted: true,
                }),
                (Message::Reject { .. }, Some(d)) => Some(Evidence::Verdict {
                    deal: d,
                    accepted: false,
                }),
                _ => None,
            };
            if let Some(ev) = evidence {
                for observer in (0..n).filter(|&o| o != agent) {
                    self.beliefs[observer].update(agent, ev, &self.scenario.issues, &self.config.shaping);
                }
            }
            let b = &mut self.behavior[agent];
            b.last_tag = Some(msg.tag());
            match msg {
                Message::Argue {
                    direction, strength, ..
                } => b.argue = Some((direction, strength)),
                Message::Reveal { issue, .. } => b.revealed[issue] = true,
                _ => {}
            }
        }

        let outcome = self.state.terminated.clone();
        let standing_author = self.state.standing_proposal().map(|p| p.author);
        let shaping = self.config.shaping;
        let mut rewards = Vec::with_capacity(n);
        for i in 0..n {
            let profile = &self.scenario.profiles[i];
            let utility = outcome
                .as_ref()
                .and_then(|o| o.deal())
                .map_or(profile.reservation, |d| fast_utility(&self.scenario, i, d));
            let has_standing = accepted_by[i] > 0 || standing_author == Some(i);
            let r = total_reward(
                outcome_reward(utility, profile.reservation, outcome.as_ref()),
                process_reward(phase, events[i], &shaping),
                social_reward(accepted_by[i], n - 1, has_standing, &shaping),
                (entropy_before[i] - self.beliefs[i].entropy()).max(0.0),
                &self.config.rewards,
            );
            self.rewards[i].push(r);
            rewards.push(r);
        }
        Ok(StepResult {
            observations: self.observations(),
            rewards,
            done: self.is_done(),
        })
    }

    /// Per-agent utilities of the current outcome (reservations until agreement).
    pub fn utilities(&self) -> Vec<f64> {
        let deal = self.state.terminated.as_ref().and_then(|o| o.deal());
        (0..self.num_agents())
            .map(|i| match deal {
                Some(d) => fast_utility(&self.scenario, i, d),
                None => self.scenario.profiles[i].reservation,
            })
            .collect()
    }

    pub fn result(&self) -> Result<EpisodeResult> {
        let outcome = self
            .state
            .terminated
            .clone()
            .ok_or_else(|| Error::Contract("episode still running".into()))?;
        Ok(EpisodeResult {
            rounds: outcome.rounds(),
            utilities: self.utilities(),
            outcome,
            rewards: self.rewards.clone(),
            state: self.state.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{random_scenario, GeneratorConfig};

    fn scenario(n: usize, m: usize, v: usize, seed: u64) -> Scenario {
        random_scenario(&GeneratorConfig::fixed(n, m, v), seed).unwrap()
    }

    #[test]
    fn reset_starts_empty() {
        let s = scenario(3, 2, 4, 1);
        let (env, obs) = NegotiationEnv::reset(s.clone(), EnvConfig::default(), 5).unwrap();
        assert_eq!(env.state().round, 0);
        for o in &obs {
            assert!(o.standing.is_none());
            assert_eq!(o.round_fraction, 0.0);
            let v = o.to_vec();
            assert_eq!(v.len(), Observation::vector_len(3, &s.value_counts(), 3));
            assert!(v[2 + 1 + 5 + 1..2 + 1 + 5 + 1 + 8].iter().all(|x| *x == 0.0));
        }
        let (_, again) = NegotiationEnv::reset(s, EnvConfig::default(), 5).unwrap();
        assert_eq!(obs, again);
    }

    #[test]
    fn passing_to_exhaustion_fails() {
        let s = scenario(2, 1, 5, 2);
        let total = s.round_budgets.total();
        let (mut env, _) = NegotiationEnv::reset(s, EnvConfig::default(), 0).unwrap();
        let mut rounds = 0;
        loop {
            let r = env.step(&[AgentAction::pass(), AgentAction::pass()]).unwrap();
            rounds += 1;
            if r.done {
                assert!(r.rewards.iter().all(|b| b.outcome == 0.0));
                break;
            }
        }
        assert_eq!(rounds, total);
        assert_eq!(env.state().terminated, Some(Outcome::Failure { round: total }));
        assert!(env.step(&[AgentAction::pass(), AgentAction::pass()]).is_err());
    }

    #[test]
    fn bilateral_propose_then_accept() {
        let s = scenario(2, 1, 5, 3);
        let (mut env, _) = NegotiationEnv::reset(s, EnvConfig::default(), 0).unwrap();
        while env.state().phase != Phase::ProposalExchange {
            env.step(&[AgentAction::pass(), AgentAction::pass()]).unwrap();
        }
        let d = Deal::new(vec![2]);
        let r = env
            .step(&[
                AgentAction::with_deal(MessageTag::Propose, d.clone()),
                AgentAction::new(MessageTag::Accept, 0.0),
            ])
            .unwrap();
        assert!(r.done);
        assert!(matches!(env.state().terminated, Some(Outcome::Agreement { ref deal, .. }) if *deal == d));
        assert!(r.rewards[0].social > 0.0);
    }

    #[test]
    fn illegal_intent_becomes_penalised_pass() {
        let s = scenario(2, 1, 5, 4);
        let (mut env, _) = NegotiationEnv::reset(s, EnvConfig::default(), 0).unwrap();
        let r = env
            .step(&[AgentAction::new(MessageTag::Propose, 0.5), AgentAction::pass()])
            .unwrap();
        assert!((r.rewards[0].process + 0.11).abs() < 1e-12);
        assert!((r.rewards[1].process + 0.01).abs() < 1e-12);
        assert_eq!(env.state().message_log[0].message, Message::Pass);
    }

    #[test]
    fn concession_extremes() {
        let s = scenario(2, 2, 4, 9);
        let (env, _) = NegotiationEnv::reset(s.clone(), EnvConfig::default(), 0).unwrap();
        let best = env.target_deal(0, 0.0);
        assert!((s.utility(0, &best).unwrap() - 1.0).abs() < 1e-9);
        let res = s.profiles[0].reservation;
        let cheap = env.target_deal(0, 1.0);
        assert!(s.utility(0, &cheap).unwrap() >= res - 1e-9);
    }

    #[test]
    fn greedy_search_respects_target() {
        let s = scenario(2, 3, 6, 12);
        let cfg = EnvConfig {
            search_limit: 10,
            ..EnvConfig::default()
        };
        let (env, _) = NegotiationEnv::reset(s.clone(), cfg, 0).unwrap();
        for c in [0.0, 0.3, 0.7, 1.0] {
            let d = env.target_deal(1, c);
            let u = s.utility(1, &d).unwrap();
            assert!(u >= 1.0 - c * (1.0 - s.profiles[1].reservation) - 1e-9);
        }
    }

    #[test]
    fn opponent_weights_never_leak() {
        let s = scenario(3, 2, 4, 6);
        let mut t = s.clone();
        t.profiles[1].weights.reverse();
        let (_, a) = NegotiationEnv::reset(s, EnvConfig::default(), 0).unwrap();
        let (_, b) = NegotiationEnv::reset(t, EnvConfig::default(), 0).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[2], b[2]);
    }
}
