//! Rule-based agents against each other on held-out stage-1 episodes.

use diplomat::baselines::Baseline;
use diplomat::evaluation::{evaluate, EvalConfig, SeatPolicy};
use diplomat::training::CurriculumStage;

fn main() -> diplomat::Result<()> {
    let cfg = EvalConfig {
        episodes: 300,
        generator: CurriculumStage::preset(1)?.generator,
        ..EvalConfig::default()
    };
    let kinds = [
        Baseline::Random,
        Baseline::Conceder { beta: 0.5 },
        Baseline::Conceder { beta: 2.0 },
        Baseline::AlternatingOffers,
    ];
    println!("{:<24} {:>9} {:>8} {:>6} {:>7}", "lineup", "consensus", "welfare", "gini", "rounds");
    for a in kinds {
        for b in kinds {
            let lineup = [SeatPolicy::Baseline(a), SeatPolicy::Baseline(b)];
            let label = format!("{} v {}", a.name(), b.name());
            let s = evaluate(&label, &lineup, &cfg, 5, 1)?.summary;
            println!(
                "{label:<24} {:>9.3} {:>8.3} {:>6.3} {:>7.2}",
                s.consensus_rate, s.social_welfare, s.gini, s.mean_rounds
            );
        }
    }
    Ok(())
}
