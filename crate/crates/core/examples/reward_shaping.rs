//! Per-step reward breakdown of a conceder pair: outcome, process, social
//! and intrinsic terms with their weighted total.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diplomat::baselines::{Baseline, BaselineAgent};
use diplomat::domain::{random_scenario, GeneratorConfig};
use diplomat::env::{EnvConfig, NegotiationEnv};

fn main() -> diplomat::Result<()> {
    let scenario = random_scenario(&GeneratorConfig::fixed(2, 2, 5), 21)?;
    let (mut env, _) = NegotiationEnv::reset(scenario, EnvConfig::default(), 21)?;
    let mut agents = [
        BaselineAgent::new(Baseline::Conceder { beta: 1.0 }),
        BaselineAgent::new(Baseline::Conceder { beta: 3.0 }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    println!("round phase             agent  outcome  process   social  intrinsic    total");
    while !env.is_done() {
        let (round, phase) = (env.state().round, env.state().phase);
        let actions: Vec<_> = agents.iter_mut().enumerate().map(|(i, a)| a.act(&env, i, &mut rng)).collect();
        let step = env.step(&actions)?;
        for (i, r) in step.rewards.iter().enumerate() {
            println!(
                "{round:>5} {:<17} {i:>5} {:>8.4} {:>8.4} {:>8.4} {:>10.4} {:>8.4}",
                phase.to_string(),
                r.outcome,
                r.process,
                r.social,
                r.intrinsic,
                r.total
            );
        }
    }
    let result = env.result()?;
    println!("outcome {:?}, utilities {:.3?}", result.outcome, result.utilities);
    Ok(())
}
