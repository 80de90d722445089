use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{enumerate_deals, Deal, Scenario};
use crate::error::{Error, Result};

/// Deals not dominated by any other deal, with their utility vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub deals: Vec<Deal>,
    pub utilities: Vec<Vec<f64>>,
}

impl ParetoFront {
    pub fn len(&self) -> usize {
        self.deals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deals.is_empty()
    }

    pub fn contains(&self, deal: &Deal) -> bool {
        self.deals.binary_search(deal).is_ok()
    }
}

/// `a` is weakly better for everyone and strictly better for someone.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

fn utility_vector(scenario: &Scenario, deal: &Deal) -> Result<Vec<f64>> {
    (0..scenario.num_agents)
        .map(|i| scenario.utility(i, deal))
        .collect()
}

fn oracle_deals(scenario: &Scenario) -> Result<Vec<Deal>> {
    match enumerate_deals(scenario) {
        Ok(it) => Ok(it.collect()),
        Err(Error::EnumerationRefused { cardinality, limit }) => Err(Error::OracleRefused(
            format!("{cardinality} deals exceed the oracle limit of {limit}"),
        )),
        Err(e) => Err(e),
    }
}

/// Exact Pareto front. Candidates are visited by descending utility sum (ties
/// by descending utility vector) so every dominator is seen before the deals
/// it dominates; each candidate is checked against the front built so far.
pub fn pareto_front(scenario: &Scenario) -> Result<ParetoFront> {
    let deals = oracle_deals(scenario)?;
    let utils = deals
        .iter()
        .map(|d| utility_vector(scenario, d))
        .collect::<Result<Vec<_>>>()?;
    let sums: Vec<f64> = utils.iter().map(|u| u.iter().sum()).collect();
    let mut order: Vec<usize> = (0..deals.len()).collect();
    order.sort_by(|&a, &b| {
        sums[b].total_cmp(&sums[a]).then_with(|| {
            utils[b]
                .iter()
                .zip(&utils[a])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    });
    let mut front: Vec<usize> = Vec::new();
    for idx in order {
        if !front.iter().any(|&f| dominates(&utils[f], &utils[idx])) {
            front.push(idx);
        }
    }
    front.sort_unstable();
    Ok(ParetoFront {
        deals: front.iter().map(|&i| deals[i].clone()).collect(),
        utilities: front.iter().map(|&i| utils[i].clone()).collect(),
    })
}

/// Single-deal check in one pass over the deal space.
pub fn is_pareto_optimal(scenario: &Scenario, deal: &Deal) -> Result<bool> {
    let target = utility_vector(scenario, deal)?;
    for other in oracle_deals(scenario)? {
        if dominates(&utility_vector(scenario, &other)?, &target) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{random_scenario, GeneratorConfig};

    #[test]
    fn opposed_single_issue_front_is_everything() {
        let s = random_scenario(&GeneratorConfig::fixed(2, 1, 6), 3).unwrap();
        assert_eq!(pareto_front(&s).unwrap().len(), 6);
    }

    #[test]
    fn shared_preferences_give_a_singleton_front() {
        let mut s = random_scenario(&GeneratorConfig::fixed(2, 2, 4), 8).unwrap();
        s.profiles[1].weights = s.profiles[0].weights.clone();
        s.profiles[1].valuations = s.profiles[0].valuations.clone();
        let front = pareto_front(&s).unwrap();
        assert_eq!(front.len(), 1);
        assert_eq!(front.deals[0], s.profiles[0].best_deal());
    }

    #[test]
    fn single_deal_check_agrees_with_front() {
        let cfg = GeneratorConfig {
            opposed_prob: 0.5,
            ..GeneratorConfig::fixed(3, 2, 4)
        };
        let s = random_scenario(&cfg, 21).unwrap();
        let front = pareto_front(&s).unwrap();
        for d in enumerate_deals(&s).unwrap() {
            assert_eq!(is_pareto_optimal(&s, &d).unwrap(), front.contains(&d));
        }
    }
}
