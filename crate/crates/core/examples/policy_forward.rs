//! One batched decision from a freshly initialised network: move
//! distribution, concession, stance, coalition gate and value per seat.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diplomat::domain::{random_scenario, GeneratorConfig};
use diplomat::env::{EnvConfig, NegotiationEnv};
use diplomat::hcn::{act, HcnConfig, HcnParams};
use diplomat::protocol::MessageTag;

fn main() -> diplomat::Result<()> {
    let cfg = HcnConfig {
        d: 32,
        d_m: 16,
        max_issues: 2,
        max_values: 5,
        ..HcnConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = HcnParams::init(cfg, &mut rng)?;
    println!("{} parameters", params.parameter_count());

    let scenario = random_scenario(&GeneratorConfig::fixed(4, 2, 5), 3)?;
    let (_, obs) = NegotiationEnv::reset(scenario, EnvConfig::default(), 3)?;
    let views: Vec<_> = obs.iter().collect();
    for (i, d) in act(&params, &views, false, &mut rng)?.iter().enumerate() {
        let o = &d.output;
        let probs: Vec<String> = MessageTag::ALL
            .iter()
            .filter(|t| obs[i].legal.contains(**t))
            .map(|t| format!("{t}={:.2}", o.move_logp[t.index()].exp()))
            .collect();
        println!(
            "seat {i}: {} | stance {:.2?} | gate {:.2?} | value {:+.3} -> {:?}",
            probs.join(" "),
            o.stance,
            o.coalition,
            o.value,
            d.action.tag
        );
    }
    Ok(())
}
