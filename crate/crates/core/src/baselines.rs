//! Hand-written negotiators: a time-dependent conceder, an alternating-offers
//! bargainer, and a uniformly random floor.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{enumerate_grid, Deal, Scenario};
use crate::env::{AgentAction, NegotiationEnv};
use crate::protocol::{Direction, MessageTag, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Random,
    /// β < 1 holds out (Boulware), β > 1 yields early.
    Conceder { beta: f64 },
    AlternatingOffers,
}

impl Baseline {
    pub fn name(&self) -> String {
        match self {
            Baseline::Random => "random".into(),
            Baseline::Conceder { beta } => format!("conceder-{beta}"),
            Baseline::AlternatingOffers => "alternating-offers".into(),
        }
    }

    /// Parse `random`, `alternating-offers` or `conceder-<beta>`.
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "random" => Some(Baseline::Random),
            "alternating-offers" | "alternating" => Some(Baseline::AlternatingOffers),
            "conceder" => Some(Baseline::Conceder { beta: 1.0 }),
            _ => text
                .strip_prefix("conceder-")
                .and_then(|b| b.parse().ok())
                .filter(|b: &f64| *b > 0.0)
                .map(|beta| Baseline::Conceder { beta }),
        }
    }
}

fn utility(scenario: &Scenario, agent: usize, deal: &Deal) -> f64 {
    let p = &scenario.profiles[agent];
    deal.values
        .iter()
        .enumerate()
        .map(|(m, &v)| p.weights[m] * p.valuations[m][v])
        .sum()
}

/// u*(t) = res + (1 − res)(1 − (t/T)^{1/β}), with t/T running from 0 in the
/// first round to 1 in the last.
pub fn conceder_target(reservation: f64, round: usize, total: usize, beta: f64) -> f64 {
    let frac = if total <= 1 {
        1.0
    } else {
        (round as f64 / (total - 1) as f64).min(1.0)
    };
    reservation + (1.0 - reservation) * (1.0 - frac.powf(1.0 / beta))
}

/// Walk down from the own-best deal, each time taking the single-issue change
/// that costs the least own utility while staying at or above `target`.
pub fn greedy_deal_above(scenario: &Scenario, agent: usize, target: f64) -> Deal {
    let p = &scenario.profiles[agent];
    let mut deal = p.best_deal();
    let mut own = utility(scenario, agent, &deal);
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (m, issue) in scenario.issues.iter().enumerate() {
            let cur = deal.values[m];
            for v in 0..issue.num_values {
                let u = own + p.weights[m] * (p.valuations[m][v] - p.valuations[m][cur]);
                if v == cur || u < target - 1e-12 || u >= own {
                    continue;
                }
                if best.is_none_or(|(_, _, bu)| u > bu) {
                    best = Some((m, v, u));
                }
            }
        }
        match best {
            Some((m, v, u)) => {
                deal.values[m] = v;
                own = u;
            }
            None => return deal,
        }
    }
}

fn standing_for(env: &NegotiationEnv, agent: usize) -> Option<(Deal, f64)> {
    env.state()
        .standing_proposal()
        .filter(|p| p.author != agent)
        .map(|p| (p.deal.clone(), utility(env.scenario(), agent, &p.deal)))
}

pub fn conceder_policy(env: &NegotiationEnv, agent: usize, beta: f64) -> AgentAction {
    let legal = env.legal(agent);
    let state = env.state();
    let res = env.scenario().profiles[agent].reservation;
    let target = conceder_target(res, state.round, state.total_budget(), beta);
    if let Some((_, u)) = standing_for(env, agent) {
        if u >= target && legal.contains(MessageTag::Accept) {
            return AgentAction::new(MessageTag::Accept, 0.0);
        }
    }
    let own_standing = state.standing_proposal().is_some_and(|p| p.author == agent);
    if own_standing {
        return AgentAction::pass();
    }
    let deal = greedy_deal_above(env.scenario(), agent, target);
    for tag in [MessageTag::Counteroffer, MessageTag::Propose] {
        if legal.contains(tag) {
            return AgentAction::with_deal(tag, deal);
        }
    }
    AgentAction::pass()
}

/// Bookkeeping for the alternating-offers bargainer.
#[derive(Debug, Clone, Default)]
pub struct AlternatingOffers {
    proposed: HashSet<Deal>,
    ranked: Option<Vec<(Deal, f64)>>,
}

impl AlternatingOffers {
    pub fn new() -> Self {
        Self::default()
    }

    fn ranked(&mut self, env: &NegotiationEnv, agent: usize) -> &[(Deal, f64)] {
        self.ranked.get_or_insert_with(|| {
            let s = env.scenario();
            let mut all: Vec<(Deal, f64)> = match enumerate_grid(&s.value_counts()) {
                Ok(it) if s.deal_count() <= env.config().search_limit as u128 => it
                    .map(|d| {
                        let u = utility(s, agent, &d);
                        (d, u)
                    })
                    .collect(),
                _ => {
                    let d = s.profiles[agent].best_deal();
                    vec![(d.clone(), utility(s, agent, &d))]
                }
            };
            all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            all
        })
    }

    pub fn act(&mut self, env: &NegotiationEnv, agent: usize) -> AgentAction {
        let legal = env.legal(agent);
        let state = env.state();
        let res = env.scenario().profiles[agent].reservation;
        let total = state.total_budget();
        let frac = if total <= 1 {
            1.0
        } else {
            state.round as f64 / (total - 1) as f64
        };
        let target = 1.0 - frac * (1.0 - res);
        let bargaining = matches!(state.phase, Phase::ProposalExchange | Phase::Convergence);
        let my_turn = state.round % state.num_agents() == agent;
        let standing = standing_for(env, agent);

        if let Some((_, u)) = &standing {
            if *u >= target - 1e-12 && legal.contains(MessageTag::Accept) {
                return AgentAction::new(MessageTag::Accept, 0.0);
            }
        }
        if !bargaining {
            return AgentAction::pass();
        }
        if !my_turn {
            if standing.is_some() && legal.contains(MessageTag::Reject) {
                return AgentAction::new(MessageTag::Reject, 0.0);
            }
            return AgentAction::pass();
        }
        self.ranked(env, agent);
        let ranked = self.ranked.as_deref().unwrap_or_default();
        let fresh = ranked
            .iter()
            .filter(|(_, u)| *u >= target - 1e-12)
            .find(|(d, _)| !self.proposed.contains(d))
            .map(|(d, _)| d.clone());
        let deal = match fresh {
            Some(d) => d,
            None => greedy_deal_above(env.scenario(), agent, target),
        };
        for tag in [MessageTag::Propose, MessageTag::Counteroffer] {
            if legal.contains(tag) {
                self.proposed.insert(deal.clone());
                return AgentAction::with_deal(tag, deal);
            }
        }
        AgentAction::pass()
    }
}

pub fn random_policy<R: Rng + ?Sized>(env: &NegotiationEnv, agent: usize, rng: &mut R) -> AgentAction {
    let legal: Vec<MessageTag> = env.legal(agent).iter().collect();
    let tag = legal[rng.random_range(0..legal.len())];
    let s = env.scenario();
    let concession = rng.random::<f64>();
    let mut action = AgentAction::new(tag, concession);
    match tag {
        MessageTag::Propose | MessageTag::Counteroffer => {
            action.deal = Some(Deal::new(
                s.issues
                    .iter()
                    .map(|i| rng.random_range(0..i.num_values))
                    .collect(),
            ));
        }
        MessageTag::Argue => {
            let dir = if rng.random::<bool>() {
                Direction::Raise
            } else {
                Direction::Lower
            };
            action.argue = Some((rng.random_range(0..s.num_issues()), dir, rng.random::<f64>()));
        }
        MessageTag::Reveal => {
            action.reveal = Some((
                rng.random_range(0..s.num_issues()),
                rng.random_range(0..env.config().reveal_buckets),
            ));
        }
        _ => {}
    }
    action
}

/// A baseline bound to one seat for one episode.
#[derive(Debug, Clone)]
pub struct BaselineAgent {
    pub kind: Baseline,
    alternating: AlternatingOffers,
}

impl BaselineAgent {
    pub fn new(kind: Baseline) -> Self {
        Self {
            kind,
            alternating: AlternatingOffers::new(),
        }
    }

    pub fn act<R: Rng + ?Sized>(&mut self, env: &NegotiationEnv, agent: usize, rng: &mut R) -> AgentAction {
        match self.kind {
            Baseline::Random => random_policy(env, agent, rng),
            Baseline::Conceder { beta } => conceder_policy(env, agent, beta),
            Baseline::AlternatingOffers => self.alternating.act(env, agent),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{enumerate_deals, random_scenario, GeneratorConfig};
    use crate::env::EnvConfig;
    use crate::protocol::Outcome;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(scenario: Scenario, kinds: &[Baseline], seed: u64) -> NegotiationEnv {
        let (mut env, _) = NegotiationEnv::reset(scenario, EnvConfig::default(), seed).unwrap();
        let mut agents: Vec<BaselineAgent> = kinds.iter().map(|k| BaselineAgent::new(*k)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while !env.is_done() {
            let actions: Vec<AgentAction> = agents
                .iter_mut()
                .enumerate()
                .map(|(i, a)| a.act(&env, i, &mut rng))
                .collect();
            for (i, a) in actions.iter().enumerate() {
                assert!(env.legal(i).contains(a.tag));
            }
            env.step(&actions).unwrap();
        }
        env
    }

    #[test]
    fn conceder_curve_examples() {
        assert_eq!(conceder_target(0.2, 0, 12, 0.5), 1.0);
        assert!((conceder_target(0.0, 5, 11, 1.0) - 0.5).abs() < 1e-15);
        assert!((conceder_target(0.3, 11, 12, 2.0) - 0.3).abs() < 1e-15);
        for beta in [0.3, 1.0, 3.0] {
            let mut prev = f64::INFINITY;
            for t in 0..12 {
                let u = conceder_target(0.1, t, 12, beta);
                assert!(u <= prev);
                prev = u;
            }
        }
    }

    #[test]
    fn greedy_deal_stays_above_target() {
        let s = random_scenario(&GeneratorConfig::fixed(2, 3, 5), 4).unwrap();
        for target in [1.0, 0.8, 0.5, 0.2, 0.0] {
            let d = greedy_deal_above(&s, 0, target);
            assert!(s.utility(0, &d).unwrap() >= target - 1e-9);
        }
    }

    #[test]
    fn yielding_conceders_agree() {
        // wide overlap between the acceptable ranges
        let cfg = GeneratorConfig {
            reservation: (0.0, 0.1),
            ..GeneratorConfig::fixed(2, 1, 5)
        };
        for seed in 0..20 {
            let s = random_scenario(&cfg, seed).unwrap();
            let env = run(s, &[Baseline::Conceder { beta: 2.0 }; 2], seed);
            assert!(env.state().terminated.as_ref().unwrap().is_agreement(), "seed {seed}");
        }
    }

    #[test]
    fn alternating_offers_finds_shared_optimum() {
        for seed in 0..10 {
            let mut s = random_scenario(&GeneratorConfig::fixed(2, 2, 4), seed).unwrap();
            s.profiles[1].weights = s.profiles[0].weights.clone();
            s.profiles[1].valuations = s.profiles[0].valuations.clone();
            let best = enumerate_deals(&s)
                .unwrap()
                .max_by(|a, b| {
                    s.utility(0, a)
                        .unwrap()
                        .total_cmp(&s.utility(0, b).unwrap())
                        .then_with(|| b.cmp(a))
                })
                .unwrap();
            let total = s.round_budgets.total();
            let env = run(s, &[Baseline::AlternatingOffers; 2], seed);
            match env.state().terminated.clone().unwrap() {
                Outcome::Agreement { deal, round } => {
                    assert_eq!(deal, best);
                    assert!(round < total);
                }
                other => panic!("no agreement: {other:?}"),
            }
        }
    }

    #[test]
    fn alternating_offers_accepts_at_target_and_never_repeats() {
        let s = random_scenario(&GeneratorConfig::fixed(2, 2, 5), 3).unwrap();
        let env = run(s, &[Baseline::AlternatingOffers, Baseline::Random], 3);
        let mut seen = HashSet::new();
        for p in env.state().proposal_log.iter().filter(|p| p.author == 0) {
            assert!(seen.insert(p.deal.clone()), "repeated {:?}", p.deal);
        }
    }

    #[test]
    fn random_policy_only_pass_when_nothing_else() {
        let s = random_scenario(&GeneratorConfig::fixed(2, 1, 5), 0).unwrap();
        let budgets = crate::protocol::PhaseBudgets([0, 0, 0, 0, 2]);
        let s = Scenario {
            round_budgets: budgets,
            ..s
        };
        let (env, _) = NegotiationEnv::reset(s, EnvConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(random_policy(&env, 0, &mut rng).tag, MessageTag::Pass);
        }
    }

    #[test]
    fn random_tags_are_uniform_and_seeded() {
        let s = random_scenario(&GeneratorConfig::fixed(2, 1, 5), 0).unwrap();
        let (env, _) = NegotiationEnv::reset(s, EnvConfig::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let legal: Vec<MessageTag> = env.legal(0).iter().collect();
        let mut counts = vec![0usize; legal.len()];
        let draws = 10_000;
        for _ in 0..draws {
            let t = random_policy(&env, 0, &mut rng).tag;
            counts[legal.iter().position(|x| *x == t).unwrap()] += 1;
        }
        let p = 1.0 / legal.len() as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma);
        }
        let a = random_policy(&env, 0, &mut ChaCha8Rng::seed_from_u64(5));
        let b = random_policy(&env, 0, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn parse_names() {
        assert_eq!(Baseline::parse("conceder-2"), Some(Baseline::Conceder { beta: 2.0 }));
        assert_eq!(Baseline::parse("random"), Some(Baseline::Random));
        assert_eq!(Baseline::parse("nope"), None);
    }
}
