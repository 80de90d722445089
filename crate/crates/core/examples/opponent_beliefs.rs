//! Bayesian opponent modelling: how reveals, arguments and accept/reject
//! verdicts move one observer's posterior, and the curiosity reward that
//! the entropy drop pays.

use diplomat::domain::{random_scenario, Deal, GeneratorConfig};
use diplomat::protocol::Direction;
use diplomat::rewards::{intrinsic_reward, BeliefState, Evidence, ShapingConfig};

fn main() -> diplomat::Result<()> {
    let scenario = random_scenario(&GeneratorConfig::fixed(2, 2, 4), 8)?;
    let shaping = ShapingConfig::default();
    let mut belief = BeliefState::new(0, 2, 2, 3);
    println!("prior: {:.3?} entropy {:.3}", belief.summary(1), belief.entropy());

    let deal = Deal::new(vec![3, 0]);
    let steps = [
        Evidence::Reveal { issue: 0, bucket: 2 },
        Evidence::Argue { issue: 1, direction: Direction::Raise, strength: 0.9 },
        Evidence::Verdict { deal: &deal, accepted: false },
    ];
    for evidence in steps {
        let before = belief.clone();
        let label = format!("{evidence:?}");
        belief.update(1, evidence, &scenario.issues, &shaping);
        println!(
            "{label}\n  weights {:.3?}\n  directions {:.3?}\n  info gain {:.4}",
            belief.summary(1),
            belief.about(1).direction,
            intrinsic_reward(&before, &belief)
        );
    }
    println!("true weights of agent 1: {:.3?}", scenario.profiles[1].weights);
    Ok(())
}
