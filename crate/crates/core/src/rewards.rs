//! Reward shaping, the episode-level system objective, and the per-agent
//! opponent-preference beliefs that drive the curiosity term.

use serde::{Deserialize, Serialize};

use crate::domain::{Deal, Issue};
use crate::error::Result;
use crate::evaluation::gini;
use crate::numerics::sigmoid;
use crate::protocol::{Direction, Outcome, Phase};

/// λ coefficients of the shaped per-step reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub outcome: f64,
    pub process: f64,
    pub social: f64,
    pub intrinsic: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            outcome: 1.0,
            process: 0.1,
            social: 0.1,
            intrinsic: 0.05,
        }
    }
}

impl RewardWeights {
    /// Outcome-only weights, used when shaping is ablated.
    pub fn outcome_only(&self) -> Self {
        Self {
            outcome: self.outcome,
            process: 0.0,
            social: 0.0,
            intrinsic: 0.0,
        }
    }
}

/// α, β, γ of the system objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.5,
        }
    }
}

/// Constants of the individual shaping terms and the belief likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingConfig {
    pub time_cost: f64,
    pub proposal_bonus: f64,
    pub social_bonus: f64,
    pub illegal_penalty: f64,
    /// Time cost multiplier during the convergence phase.
    pub convergence_time_multiplier: f64,
    pub reveal_noise: f64,
    pub accept_sharpness: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self {
            time_cost: 0.01,
            proposal_bonus: 0.05,
            social_bonus: 0.1,
            illegal_penalty: 0.1,
            convergence_time_multiplier: 2.0,
            reveal_noise: 0.1,
            accept_sharpness: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub outcome: f64,
    pub process: f64,
    pub social: f64,
    pub intrinsic: f64,
    pub total: f64,
}

/// λ-weighted sum of the four components.
pub fn total_reward(
    outcome: f64,
    process: f64,
    social: f64,
    intrinsic: f64,
    weights: &RewardWeights,
) -> RewardBreakdown {
    let total = weights.outcome * outcome
        + weights.process * process
        + weights.social * social
        + weights.intrinsic * intrinsic;
    RewardBreakdown {
        outcome,
        process,
        social,
        intrinsic,
        total,
    }
}

/// Normalised surplus over the reservation value on agreement, zero otherwise.
pub fn outcome_reward(utility: f64, reservation: f64, outcome: Option<&Outcome>) -> f64 {
    match outcome {
        Some(Outcome::Agreement { .. }) => (utility - reservation) / (1.0 - reservation),
        _ => 0.0,
    }
}

/// What happened to one agent during one round, as far as process shaping cares.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessEvents {
    pub improved_joint_welfare: bool,
    pub illegal_substituted: bool,
}

pub fn process_reward(phase: Phase, events: ProcessEvents, shaping: &ShapingConfig) -> f64 {
    let multiplier = if phase == Phase::Convergence {
        shaping.convergence_time_multiplier
    } else {
        1.0
    };
    let mut r = -shaping.time_cost * multiplier;
    if events.improved_joint_welfare {
        r += shaping.proposal_bonus;
    }
    if events.illegal_substituted {
        r -= shaping.illegal_penalty;
    }
    r
}

/// Share of the other agents that accepted this agent's standing proposal.
pub fn social_reward(
    accepted_by: usize,
    num_others: usize,
    has_standing: bool,
    shaping: &ShapingConfig,
) -> f64 {
    if !has_standing || num_others == 0 {
        return 0.0;
    }
    shaping.social_bonus * accepted_by as f64 / num_others as f64
}

/// α·ΣU + β·Consensus − γ·Time, with Consensus the satisfied fraction scaled
/// by (1 − Gini) and Time the used share of the round budget.
pub fn system_objective(
    outcome: &Outcome,
    utilities: &[f64],
    reservations: &[f64],
    total_budget: usize,
    weights: &ObjectiveWeights,
) -> Result<f64> {
    let n = utilities.len();
    let (utilities, consensus) = match outcome {
        Outcome::Agreement { .. } => {
            let satisfied = utilities
                .iter()
                .zip(reservations)
                .filter(|(u, r)| u >= r)
                .count();
            let c = satisfied as f64 / n as f64 * (1.0 - gini(utilities)?);
            (utilities.to_vec(), c)
        }
        Outcome::Failure { .. } => (reservations.to_vec(), 0.0),
    };
    let time = outcome.rounds() as f64 / total_budget as f64;
    Ok(weights.alpha * utilities.iter().sum::<f64>() + weights.beta * consensus
        - weights.gamma * time)
}

/// Reveal bucket that truthfully describes an issue weight.
pub fn weight_bucket(weight: f64, buckets: usize) -> usize {
    ((weight * buckets as f64).floor() as usize).min(buckets - 1)
}

/// Representative weight of a bucket (its midpoint).
pub fn bucket_level(bucket: usize, buckets: usize) -> f64 {
    (bucket as f64 + 0.5) / buckets as f64
}

/// One observer's posterior about one opponent.
#[derive(Debug, Clone, PartialEq)]
pub struct OpponentBelief {
    /// Per issue: categorical over weight buckets.
    pub weights: Vec<Vec<f64>>,
    /// Per issue: (P(increasing valuation), P(decreasing valuation)).
    pub direction: Vec<[f64; 2]>,
}

impl OpponentBelief {
    fn uniform(num_issues: usize, buckets: usize) -> Self {
        Self {
            weights: vec![vec![1.0 / buckets as f64; buckets]; num_issues],
            direction: vec![[0.5, 0.5]; num_issues],
        }
    }

    fn expected_levels(&self) -> Vec<f64> {
        let b = self.weights.first().map_or(1, |w| w.len());
        self.weights
            .iter()
            .map(|cat| {
                cat.iter()
                    .enumerate()
                    .map(|(k, p)| p * bucket_level(k, b))
                    .sum()
            })
            .collect()
    }

    fn expected_value(dir: &[f64; 2], x: f64) -> f64 {
        dir[0] * x + dir[1] * (1.0 - x)
    }

    /// Belief-expected utility of a deal.
    pub fn expected_utility(&self, deal: &Deal, issues: &[Issue]) -> f64 {
        let levels = self.expected_levels();
        let den: f64 = levels.iter().sum();
        let num: f64 = deal
            .values
            .iter()
            .enumerate()
            .map(|(m, &v)| levels[m] * Self::expected_value(&self.direction[m], issues[m].value_grid[v]))
            .sum();
        num / den
    }

    fn entropy(&self) -> f64 {
        self.weights.iter().map(|c| entropy(c)).sum::<f64>()
            + self.direction.iter().map(|c| entropy(c)).sum::<f64>()
    }
}

fn normalize(p: &mut [f64]) {
    let z: f64 = p.iter().sum();
    if z > 0.0 && z.is_finite() {
        p.iter_mut().for_each(|x| *x /= z);
    } else {
        let u = 1.0 / p.len() as f64;
        p.iter_mut().for_each(|x| *x = u);
    }
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Evidence about an issuer's preferences carried by one message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evidence<'a> {
    Reveal { issue: usize, bucket: usize },
    Verdict { deal: &'a Deal, accepted: bool },
    Argue { issue: usize, direction: Direction, strength: f64 },
}

/// Everything one agent believes about all of its opponents.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub observer: usize,
    pub buckets: usize,
    /// Indexed by agent id; the observer's own entry is never updated.
    pub opponents: Vec<OpponentBelief>,
}

impl BeliefState {
    pub fn new(observer: usize, num_agents: usize, num_issues: usize, buckets: usize) -> Self {
        Self {
            observer,
            buckets,
            opponents: (0..num_agents)
                .map(|_| OpponentBelief::uniform(num_issues, buckets))
                .collect(),
        }
    }

    pub fn about(&self, agent: usize) -> &OpponentBelief {
        &self.opponents[agent]
    }

    /// Bayes update from one message sent by `issuer`.
    pub fn update(
        &mut self,
        issuer: usize,
        evidence: Evidence<'_>,
        issues: &[Issue],
        shaping: &ShapingConfig,
    ) {
        if issuer == self.observer {
            return;
        }
        let b = self.buckets;
        let belief = &mut self.opponents[issuer];
        match evidence {
            Evidence::Reveal { issue, bucket } => {
                let eps = shaping.reveal_noise;
                for (k, p) in belief.weights[issue].iter_mut().enumerate() {
                    *p *= if k == bucket { 1.0 - eps } else { eps / (b - 1) as f64 };
                }
                normalize(&mut belief.weights[issue]);
            }
            Evidence::Argue {
                issue,
                direction,
                strength,
            } => {
                let toward = 0.5 + 0.4 * strength;
                let away = 1.0 - toward;
                let dir = &mut belief.direction[issue];
                match direction {
                    Direction::Raise => {
                        dir[0] *= toward;
                        dir[1] *= away;
                    }
                    Direction::Lower => {
                        dir[0] *= away;
                        dir[1] *= toward;
                    }
                }
                normalize(dir);
            }
            Evidence::Verdict { deal, accepted } => {
                let k = shaping.accept_sharpness;
                let lik = |u: f64| {
                    let p = sigmoid(k * (u - 0.5));
                    if accepted {
                        p
                    } else {
                        1.0 - p
                    }
                };
                let levels = belief.expected_levels();
                let den: f64 = levels.iter().sum();
                let xs: Vec<f64> = deal
                    .values
                    .iter()
                    .enumerate()
                    .map(|(m, &v)| issues[m].value_grid[v])
                    .collect();
                let vals: Vec<f64> = (0..xs.len())
                    .map(|m| OpponentBelief::expected_value(&belief.direction[m], xs[m]))
                    .collect();
                let num: f64 = levels.iter().zip(&vals).map(|(l, v)| l * v).sum();
                // mean-field: condition one factor at a time on the pre-update posterior
                let mut new_weights = belief.weights.clone();
                let mut new_dirs = belief.direction.clone();
                for m in 0..xs.len() {
                    for (kb, p) in new_weights[m].iter_mut().enumerate() {
                        let lvl = bucket_level(kb, b);
                        let u = (num - levels[m] * vals[m] + lvl * vals[m]) / (den - levels[m] + lvl);
                        *p *= lik(u);
                    }
                    normalize(&mut new_weights[m]);
                    for (kd, p) in new_dirs[m].iter_mut().enumerate() {
                        let v = if kd == 0 { xs[m] } else { 1.0 - xs[m] };
                        let u = (num - levels[m] * vals[m] + levels[m] * v) / den;
                        *p *= lik(u);
                    }
                    normalize(&mut new_dirs[m]);
                }
                belief.weights = new_weights;
                belief.direction = new_dirs;
            }
        }
    }

    pub fn expected_utility(&self, agent: usize, deal: &Deal, issues: &[Issue]) -> f64 {
        self.opponents[agent].expected_utility(deal, issues)
    }

    /// Mean belief-expected utility over all opponents.
    pub fn opponent_welfare(&self, deal: &Deal, issues: &[Issue]) -> f64 {
        let n = self.opponents.len();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = (0..n)
            .filter(|&j| j != self.observer)
            .map(|j| self.expected_utility(j, deal, issues))
            .sum();
        total / (n - 1) as f64
    }

    /// Total entropy over every opponent categorical.
    pub fn entropy(&self) -> f64 {
        self.opponents
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != self.observer)
            .map(|(_, b)| b.entropy())
            .sum()
    }

    /// Flattened weight-bucket posteriors (issue-major) for one opponent.
    pub fn summary(&self, agent: usize) -> Vec<f64> {
        self.opponents[agent].weights.iter().flatten().copied().collect()
    }
}

/// Information gained between two beliefs, clipped at zero.
pub fn intrinsic_reward(before: &BeliefState, after: &BeliefState) -> f64 {
    (before.entropy() - after.entropy()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Outcome;

    fn issues(counts: &[usize]) -> Vec<Issue> {
        counts
            .iter()
            .enumerate()
            .map(|(m, &c)| Issue::new(m, c).unwrap())
            .collect()
    }

    #[test]
    fn outcome_reward_cases() {
        let agreed = Outcome::Agreement {
            deal: Deal::new(vec![0]),
            round: 3,
        };
        assert_eq!(outcome_reward(1.0, 0.2, Some(&agreed)), 1.0);
        assert_eq!(outcome_reward(0.2, 0.2, Some(&agreed)), 0.0);
        assert_eq!(outcome_reward(0.0, 0.5, Some(&agreed)), -1.0);
        assert_eq!(outcome_reward(0.9, 0.2, Some(&Outcome::Failure { round: 6 })), 0.0);
        assert_eq!(outcome_reward(0.9, 0.2, None), 0.0);
    }

    #[test]
    fn process_reward_cases() {
        let s = ShapingConfig::default();
        let pass = ProcessEvents::default();
        assert!((process_reward(Phase::ProposalExchange, pass, &s) + 0.01).abs() < 1e-15);
        let improving = ProcessEvents {
            improved_joint_welfare: true,
            ..pass
        };
        assert!((process_reward(Phase::ProposalExchange, improving, &s) - 0.04).abs() < 1e-15);
        let illegal = ProcessEvents {
            illegal_substituted: true,
            ..pass
        };
        assert!((process_reward(Phase::Exploration, illegal, &s) + 0.11).abs() < 1e-15);
        assert!((process_reward(Phase::Convergence, pass, &s) + 0.02).abs() < 1e-15);
    }

    #[test]
    fn social_reward_cases() {
        let s = ShapingConfig::default();
        assert!((social_reward(2, 3, true, &s) - 0.1 * 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(social_reward(2, 3, false, &s), 0.0);
        assert!((social_reward(3, 3, true, &s) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn total_reward_cases() {
        let w = RewardWeights {
            outcome: 1.0,
            process: 0.0,
            social: 0.0,
            intrinsic: 0.0,
        };
        assert_eq!(total_reward(0.7, 0.3, 0.2, 0.1, &w).total, 0.7);
        let ones = RewardWeights {
            outcome: 1.0,
            process: 1.0,
            social: 1.0,
            intrinsic: 1.0,
        };
        assert!((total_reward(0.5, -0.01, 0.1, 0.2, &ones).total - 0.79).abs() < 1e-15);
        assert_eq!(total_reward(0.0, 0.0, 0.0, 0.0, &RewardWeights::default()).total, 0.0);
    }

    #[test]
    fn system_objective_cases() {
        let agreed = Outcome::Agreement {
            deal: Deal::new(vec![0]),
            round: 2,
        };
        let w = ObjectiveWeights {
            alpha: 1.0,
            beta: 0.0,
            gamma: 0.0,
        };
        let j = system_objective(&agreed, &[0.5, 0.7], &[0.1, 0.1], 10, &w).unwrap();
        assert!((j - 1.2).abs() < 1e-15);

        let w = ObjectiveWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        };
        let failed = Outcome::Failure { round: 6 };
        let j = system_objective(&failed, &[0.9, 0.9], &[0.2, 0.2], 6, &w).unwrap();
        assert!((j + 0.6).abs() < 1e-15);

        let w = ObjectiveWeights {
            alpha: 0.0,
            beta: 1.0,
            gamma: 0.0,
        };
        let j = system_objective(&agreed, &[0.6, 0.6], &[0.2, 0.2], 10, &w).unwrap();
        assert!((j - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reveal_update_matches_noise_model() {
        let iss = issues(&[3]);
        let mut b = BeliefState::new(0, 2, 1, 3);
        b.update(
            1,
            Evidence::Reveal { issue: 0, bucket: 1 },
            &iss,
            &ShapingConfig::default(),
        );
        let post = &b.about(1).weights[0];
        let expected = [0.05, 0.9, 0.05];
        for (p, e) in post.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn own_messages_leave_beliefs_untouched() {
        let iss = issues(&[3]);
        let mut b = BeliefState::new(0, 2, 1, 3);
        let before = b.clone();
        b.update(
            0,
            Evidence::Reveal { issue: 0, bucket: 2 },
            &iss,
            &ShapingConfig::default(),
        );
        assert_eq!(b, before);
        assert_eq!(intrinsic_reward(&before, &b), 0.0);
    }

    #[test]
    fn argue_shifts_direction_toward_claim() {
        let iss = issues(&[4]);
        let mut b = BeliefState::new(0, 2, 1, 3);
        b.update(
            1,
            Evidence::Argue {
                issue: 0,
                direction: Direction::Lower,
                strength: 1.0,
            },
            &iss,
            &ShapingConfig::default(),
        );
        let d = b.about(1).direction[0];
        assert!((d[1] - 0.9).abs() < 1e-12 && (d[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn acceptance_of_high_value_deal_favours_increasing() {
        let iss = issues(&[5]);
        let mut b = BeliefState::new(0, 2, 1, 3);
        b.update(
            1,
            Evidence::Verdict {
                deal: &Deal::new(vec![4]),
                accepted: true,
            },
            &iss,
            &ShapingConfig::default(),
        );
        let d = b.about(1).direction[0];
        assert!(d[0] > 0.9);
        assert!((d[0] + d[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_arithmetic() {
        let u4 = [0.25; 4];
        assert!((entropy(&u4) - 4f64.ln()).abs() < 1e-12);
        let ln2 = std::f64::consts::LN_2;
        assert!((entropy(&u4) - entropy(&[1.0, 0.0, 0.0, 0.0]) - 2.0 * ln2).abs() < 1e-12);
        assert!((entropy(&u4) - entropy(&[0.5, 0.5, 0.0, 0.0]) - ln2).abs() < 1e-12);
    }

    #[test]
    fn intrinsic_counts_information_gain() {
        let mut before = BeliefState::new(0, 2, 1, 4);
        before.opponents[1].direction[0] = [1.0, 0.0];
        let mut after = before.clone();
        after.opponents[1].weights[0] = vec![1.0, 0.0, 0.0, 0.0];
        assert!((intrinsic_reward(&before, &after) - 4f64.ln()).abs() < 1e-12);
        after.opponents[1].weights[0] = vec![0.5, 0.5, 0.0, 0.0];
        assert!((intrinsic_reward(&before, &after) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(intrinsic_reward(&before, &before), 0.0);
        // rising entropy is clipped
        assert_eq!(intrinsic_reward(&after, &before), 0.0);
    }
}
