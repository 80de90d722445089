//! Negotiation instances: issues, deals, private additive utilities, and the
//! exhaustive deal enumeration used by the oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::PhaseBudgets;

pub const MAX_AGENTS: usize = 50;
pub const MAX_ISSUE_VALUES: usize = 64;
/// Largest deal space `enumerate_deals` will walk.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

pub const SCENARIO_FORMAT: &str = "diplomat-scenario/1";

/// One negotiable decision variable discretised onto an even grid in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub id: usize,
    pub num_values: usize,
    pub value_grid: Vec<f64>,
}

impl Issue {
    pub fn new(id: usize, num_values: usize) -> Result<Self> {
        if !(2..=MAX_ISSUE_VALUES).contains(&num_values) {
            return Err(Error::InvalidScenario(format!(
                "issue {id} has {num_values} values, expected 2..={MAX_ISSUE_VALUES}"
            )));
        }
        let step = 1.0 / (num_values - 1) as f64;
        let value_grid = (0..num_values).map(|k| k as f64 * step).collect();
        Ok(Self {
            id,
            num_values,
            value_grid,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(2..=MAX_ISSUE_VALUES).contains(&self.num_values)
            || self.value_grid.len() != self.num_values
        {
            return Err(Error::InvalidScenario(format!(
                "issue {} grid malformed",
                self.id
            )));
        }
        let increasing = self.value_grid.windows(2).all(|w| w[0] < w[1]);
        if !increasing || self.value_grid[0] != 0.0 || *self.value_grid.last().unwrap() != 1.0 {
            return Err(Error::InvalidScenario(format!(
                "issue {} grid must rise strictly from 0 to 1",
                self.id
            )));
        }
        Ok(())
    }
}

/// An agent's private additive utility over issues plus its walk-away value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub agent_id: usize,
    pub weights: Vec<f64>,
    pub valuations: Vec<Vec<f64>>,
    pub reservation: f64,
}

impl PreferenceProfile {
    fn validate(&self, issues: &[Issue]) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidScenario(format!(
                "profile of agent {}: {what}",
                self.agent_id
            )))
        };
        if self.weights.len() != issues.len() || self.valuations.len() != issues.len() {
            return bad("one weight and one valuation list per issue required");
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("weights must be nonnegative");
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("weights must sum to 1");
        }
        for (vals, issue) in self.valuations.iter().zip(issues) {
            if vals.len() != issue.num_values {
                return bad("valuation list length differs from the issue grid");
            }
            if vals.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad("valuations must lie in [0, 1]");
            }
        }
        if !(0.0..1.0).contains(&self.reservation) {
            return bad("reservation must lie in [0, 1)");
        }
        Ok(())
    }

    /// Index of this agent's favourite grid value on `issue` (lowest index on ties).
    pub fn best_value(&self, issue: usize) -> usize {
        argmax_first(&self.valuations[issue])
    }

    /// The deal taking this agent's favourite value on every issue.
    pub fn best_deal(&self) -> Deal {
        Deal::new((0..self.weights.len()).map(|m| self.best_value(m)).collect())
    }
}

/// A complete assignment of grid indices, one per issue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Deal {
    pub values: Vec<usize>,
}

impl Deal {
    pub fn new(values: Vec<usize>) -> Self {
        Self { values }
    }

    pub fn validate(&self, issues: &[Issue]) -> Result<()> {
        if self.values.len() != issues.len() {
            return Err(Error::InvalidDeal(format!(
                "deal has {} entries for {} issues",
                self.values.len(),
                issues.len()
            )));
        }
        for (m, (&v, issue)) in self.values.iter().zip(issues).enumerate() {
            if v >= issue.num_values {
                return Err(Error::InvalidDeal(format!(
                    "index {v} out of range on issue {m} ({} values)",
                    issue.num_values
                )));
            }
        }
        Ok(())
    }
}

/// A negotiation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_agents: usize,
    pub issues: Vec<Issue>,
    pub profiles: Vec<PreferenceProfile>,
    pub round_budgets: PhaseBudgets,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    format: String,
    #[serde(flatten)]
    scenario: Scenario,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_AGENTS).contains(&self.num_agents) {
            return Err(Error::InvalidScenario(format!(
                "{} agents, expected 2..={MAX_AGENTS}",
                self.num_agents
            )));
        }
        if self.issues.is_empty() {
            return Err(Error::InvalidScenario("at least one issue required".into()));
        }
        for (m, issue) in self.issues.iter().enumerate() {
            if issue.id != m {
                return Err(Error::InvalidScenario(format!("issue {m} carries id {}", issue.id)));
            }
            issue.validate()?;
        }
        if self.profiles.len() != self.num_agents {
            return Err(Error::InvalidScenario(format!(
                "{} profiles for {} agents",
                self.profiles.len(),
                self.num_agents
            )));
        }
        for (i, profile) in self.profiles.iter().enumerate() {
            if profile.agent_id != i {
                return Err(Error::InvalidScenario(format!(
                    "profile {i} carries agent id {}",
                    profile.agent_id
                )));
            }
            profile.validate(&self.issues)?;
        }
        if self.round_budgets.total() == 0 {
            return Err(Error::InvalidScenario("total round budget is zero".into()));
        }
        Ok(())
    }

    pub fn num_issues(&self) -> usize {
        self.issues.len()
    }

    pub fn value_counts(&self) -> Vec<usize> {
        self.issues.iter().map(|i| i.num_values).collect()
    }

    /// Number of distinct deals, computed without overflow.
    pub fn deal_count(&self) -> u128 {
        self.issues
            .iter()
            .fold(1u128, |acc, i| acc.saturating_mul(i.num_values as u128))
    }

    pub fn utility(&self, agent: usize, deal: &Deal) -> Result<f64> {
        deal.validate(&self.issues)?;
        utility(&self.profiles[agent], deal)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ScenarioFile {
            format: SCENARIO_FORMAT.to_string(),
            scenario: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if file.format != SCENARIO_FORMAT {
            return Err(Error::InvalidScenario(format!(
                "unsupported scenario format `{}`",
                file.format
            )));
        }
        file.scenario.validate()?;
        Ok(file.scenario)
    }
}

/// Additive utility: Σ_m weight_m · valuation_m(deal_m).
pub fn utility(profile: &PreferenceProfile, deal: &Deal) -> Result<f64> {
    if deal.values.len() != profile.weights.len() {
        return Err(Error::InvalidDeal(format!(
            "deal has {} entries, profile has {} issues",
            deal.values.len(),
            profile.weights.len()
        )));
    }
    let mut total = 0.0;
    for (m, &v) in deal.values.iter().enumerate() {
        let val = profile.valuations[m].get(v).ok_or_else(|| {
            Error::InvalidDeal(format!("index {v} out of range on issue {m}"))
        })?;
        total += profile.weights[m] * val;
    }
    Ok(total)
}

/// Lexicographic walk over every deal in a scenario.
#[derive(Debug, Clone)]
pub struct DealIter {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for DealIter {
    type Item = Deal;

    fn next(&mut self) -> Option<Deal> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for m in (0..succ.len()).rev() {
            succ[m] += 1;
            if succ[m] < self.counts[m] {
                carried = false;
                break;
            }
            succ[m] = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(Deal::new(current))
    }
}

/// Every deal exactly once, first issue most significant.
pub fn enumerate_deals(scenario: &Scenario) -> Result<DealIter> {
    enumerate_grid(&scenario.value_counts())
}

pub fn enumerate_grid(counts: &[usize]) -> Result<DealIter> {
    let cardinality = counts
        .iter()
        .fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
    if cardinality > ENUMERATION_LIMIT {
        return Err(Error::EnumerationRefused {
            cardinality,
            limit: ENUMERATION_LIMIT,
        });
    }
    let next = if counts.iter().all(|&c| c > 0) {
        Some(vec![0; counts.len()])
    } else {
        None
    };
    Ok(DealIter {
        counts: counts.to_vec(),
        next,
    })
}

/// Parameters for [`random_scenario`]. Ranges are inclusive `(min, max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub agents: (usize, usize),
    pub issues: (usize, usize),
    pub values: (usize, usize),
    /// Symmetric Dirichlet concentration for issue weights.
    pub weight_concentration: f64,
    /// Probability that an issue splits agents into opposed halves.
    pub opposed_prob: f64,
    pub reservation: (f64, f64),
    pub budgets: PhaseBudgets,
    /// Draw each phase budget uniformly from 1..=2×default instead of using `budgets`.
    pub randomize_budgets: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            agents: (2, 2),
            issues: (1, 1),
            values: (5, 5),
            weight_concentration: 1.0,
            opposed_prob: 1.0,
            reservation: (0.0, 0.3),
            budgets: PhaseBudgets::default(),
            randomize_budgets: false,
        }
    }
}

impl GeneratorConfig {
    pub fn fixed(agents: usize, issues: usize, values: usize) -> Self {
        Self {
            agents: (agents, agents),
            issues: (issues, issues),
            values: (values, values),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("generator: {msg}")));
        let (a, m, v) = (self.agents, self.issues, self.values);
        if a.0 > a.1 || m.0 > m.1 || v.0 > v.1 {
            return bad("range minimum exceeds maximum".into());
        }
        if a.0 < 2 || a.1 > MAX_AGENTS {
            return bad(format!("agents {a:?} outside 2..={MAX_AGENTS}"));
        }
        if m.0 < 1 || v.0 < 2 {
            return bad(format!("need at least one issue with two values, got {m:?} × {v:?}"));
        }
        let (lo, hi) = self.reservation;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return bad(format!("reservation range {:?} outside [0, 1)", self.reservation));
        }
        if !(0.0..=1.0).contains(&self.opposed_prob) || self.weight_concentration <= 0.0 {
            return bad("opposed_prob must lie in [0, 1] and concentration be positive".into());
        }
        Ok(())
    }

    pub fn max_agents(&self) -> usize {
        self.agents.1
    }

    pub fn max_issues(&self) -> usize {
        self.issues.1
    }

    pub fn max_values(&self) -> usize {
        self.values.1
    }
}

fn draw_range(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Deterministic scenario draw. Valuations are monotone per issue; on an
/// "opposed" issue the first half of the agents prefer high values and the
/// rest prefer low ones, otherwise all agents share one random direction.
pub fn random_scenario(config: &GeneratorConfig, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_agents = draw_range(&mut rng, config.agents);
    let num_issues = draw_range(&mut rng, config.issues);
    let mut issues = Vec::with_capacity(num_issues);
    for m in 0..num_issues {
        issues.push(Issue::new(m, draw_range(&mut rng, config.values))?);
    }

    let concentration = config.weight_concentration.max(1e-3);
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::Config(format!("weight concentration: {e}")))?;

    let mut increasing = vec![vec![true; num_issues]; num_agents];
    for m in 0..num_issues {
        if rng.random::<f64>() < config.opposed_prob {
            for (i, row) in increasing.iter_mut().enumerate() {
                row[m] = i < num_agents.div_ceil(2);
            }
        } else {
            let shared = rng.random::<bool>();
            for row in increasing.iter_mut() {
                row[m] = shared;
            }
        }
    }

    let mut profiles = Vec::with_capacity(num_agents);
    for (agent_id, directions) in increasing.iter().enumerate() {
        let mut weights: Vec<f64> = (0..num_issues)
            .map(|_| gamma.sample(&mut rng).max(1e-12))
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        // renormalise once more so the sum is as close to 1 as rounding allows
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        let valuations = issues
            .iter()
            .zip(directions)
            .map(|(issue, &up)| monotone_valuation(&mut rng, issue.num_values, up))
            .collect();
        let (lo, hi) = config.reservation;
        let reservation = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
        .clamp(0.0, 0.99);
        profiles.push(PreferenceProfile {
            agent_id,
            weights,
            valuations,
            reservation,
        });
    }

    let round_budgets = if config.randomize_budgets {
        let mut b = config.budgets.0;
        for slot in b.iter_mut() {
            let cap = (*slot * 2).max(1);
            *slot = rng.random_range(1..=cap);
        }
        PhaseBudgets(b)
    } else {
        config.budgets
    };

    let scenario = Scenario {
        num_agents,
        issues,
        profiles,
        round_budgets,
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Sorted uniform interior points with the endpoints pinned to 0 and 1.
fn monotone_valuation(rng: &mut ChaCha8Rng, n: usize, increasing: bool) -> Vec<f64> {
    let mut vals: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 {
                0.0
            } else if k == n - 1 {
                1.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    if !increasing {
        vals.reverse();
    }
    vals
}

/// First index of the maximum (ties go to the lowest index).
pub(crate) fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Welfare-maximising deal composed issue by issue (additivity makes this exact).
pub fn welfare_optimal_greedy(scenario: &Scenario) -> Deal {
    let values = scenario
        .issues
        .iter()
        .enumerate()
        .map(|(m, issue)| {
            let per_value: Vec<f64> = (0..issue.num_values)
                .map(|v| {
                    scenario
                        .profiles
                        .iter()
                        .map(|p| p.weights[m] * p.valuations[m][v])
                        .sum()
                })
                .collect();
            argmax_first(&per_value)
        })
        .collect();
    Deal::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(weights: Vec<f64>, valuations: Vec<Vec<f64>>) -> PreferenceProfile {
        PreferenceProfile {
            agent_id: 0,
            weights,
            valuations,
            reservation: 0.0,
        }
    }

    #[test]
    fn utility_is_a_convex_combination() {
        let p = profile(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(utility(&p, &Deal::new(vec![1, 0])).unwrap(), 0.5);

        let p = profile(vec![0.2, 0.8], vec![vec![0.5, 1.0], vec![0.25, 0.0]]);
        assert!((utility(&p, &Deal::new(vec![0, 0])).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn top_valuations_give_unit_utility() {
        let p = profile(
            vec![0.3, 0.7],
            vec![vec![0.0, 0.4, 1.0], vec![1.0, 0.2, 0.0]],
        );
        assert!((utility(&p, &p.best_deal()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_index_is_an_invalid_deal() {
        let p = profile(vec![1.0], vec![vec![0.0, 1.0]]);
        assert!(matches!(
            utility(&p, &Deal::new(vec![2])),
            Err(Error::InvalidDeal(_))
        ));
    }

    #[test]
    fn enumeration_counts_and_order() {
        assert_eq!(enumerate_grid(&[3, 3]).unwrap().count(), 9);
        assert_eq!(enumerate_grid(&[2, 3, 4]).unwrap().count(), 24);
        let single: Vec<_> = enumerate_grid(&[5]).unwrap().map(|d| d.values[0]).collect();
        assert_eq!(single, vec![0, 1, 2, 3, 4]);
        let all: Vec<Deal> = enumerate_grid(&[2, 3]).unwrap().collect();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn enumeration_refuses_huge_spaces() {
        match enumerate_grid(&[64, 64, 64, 64]) {
            Err(Error::EnumerationRefused { cardinality, .. }) => {
                assert_eq!(cardinality, 64u128.pow(4))
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn random_scenario_is_deterministic() {
        let cfg = GeneratorConfig::fixed(3, 2, 4);
        assert_eq!(random_scenario(&cfg, 11).unwrap(), random_scenario(&cfg, 11).unwrap());
        assert_ne!(random_scenario(&cfg, 11).unwrap(), random_scenario(&cfg, 12).unwrap());
    }

    #[test]
    fn fully_opposed_bilateral_issue_reverses_preferences() {
        let cfg = GeneratorConfig {
            opposed_prob: 1.0,
            ..GeneratorConfig::fixed(2, 1, 6)
        };
        for seed in 0..20 {
            let s = random_scenario(&cfg, seed).unwrap();
            let a = &s.profiles[0].valuations[0];
            let b = &s.profiles[1].valuations[0];
            assert!(a.windows(2).all(|w| w[0] <= w[1]));
            assert!(b.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn generated_weights_sum_to_one() {
        let cfg = GeneratorConfig {
            agents: (2, 6),
            issues: (1, 5),
            values: (2, 7),
            weight_concentration: 0.5,
            ..GeneratorConfig::default()
        };
        for seed in 0..1000 {
            let s = random_scenario(&cfg, seed).unwrap();
            for p in &s.profiles {
                assert!((p.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn scenario_json_round_trip_and_version_check() {
        let s = random_scenario(&GeneratorConfig::fixed(2, 2, 3), 5).unwrap();
        let text = s.to_json().unwrap();
        assert!(text.contains(SCENARIO_FORMAT));
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
        let bad = text.replace(SCENARIO_FORMAT, "diplomat-scenario/0");
        assert!(Scenario::from_json(&bad).is_err());
    }

    #[test]
    fn greedy_optimum_matches_brute_force_small() {
        let cfg = GeneratorConfig {
            opposed_prob: 0.5,
            ..GeneratorConfig::fixed(3, 3, 4)
        };
        for seed in 0..25 {
            let s = random_scenario(&cfg, seed).unwrap();
            let mut best: Option<(f64, Deal)> = None;
            for d in enumerate_deals(&s).unwrap() {
                let w: f64 = (0..s.num_agents).map(|i| s.utility(i, &d).unwrap()).sum();
                if best.as_ref().is_none_or(|(b, _)| w > *b) {
                    best = Some((w, d));
                }
            }
            assert_eq!(best.unwrap().1, welfare_optimal_greedy(&s));
        }
    }
}
