//! Brute-force oracles on a random scenario: deal enumeration, the
//! welfare-optimal deal, and the Pareto front.

use diplomat::domain::{enumerate_deals, random_scenario, welfare_optimal_greedy, GeneratorConfig};
use diplomat::evaluation::{is_pareto_optimal, pareto_front};

fn main() -> diplomat::Result<()> {
    let scenario = random_scenario(&GeneratorConfig::fixed(3, 3, 4), 11)?;
    println!("{} agents, {} deals", scenario.num_agents, scenario.deal_count());
    for (i, p) in scenario.profiles.iter().enumerate() {
        println!("agent {i}: weights {:.2?} reservation {:.2}", p.weights, p.reservation);
    }

    let best = welfare_optimal_greedy(&scenario);
    let welfare = |d: &diplomat::domain::Deal| (0..scenario.num_agents).map(|i| scenario.utility(i, d).unwrap()).sum::<f64>();
    let exhaustive = enumerate_deals(&scenario)?.map(|d| welfare(&d)).fold(f64::MIN, f64::max);
    println!("welfare optimum {:?}: {:.4} (exhaustive max {:.4})", best.values, welfare(&best), exhaustive);
    println!("optimum is Pareto-optimal: {}", is_pareto_optimal(&scenario, &best)?);

    let front = pareto_front(&scenario)?;
    println!("Pareto front holds {} of {} deals", front.len(), scenario.deal_count());
    for (d, u) in front.deals.iter().zip(&front.utilities).take(8) {
        println!("  {:?} -> {:.3?}", d.values, u);
    }
    Ok(())
}
