//! Short self-play training run on the first curriculum stage, then a
//! held-out comparison against the random baseline. Pass a step budget as
//! the first argument (default 40000).

use std::sync::Arc;

use diplomat::baselines::Baseline;
use diplomat::evaluation::{evaluate, EvalConfig, SeatPolicy};
use diplomat::hcn::HcnConfig;
use diplomat::training::{Curriculum, CurriculumStage, PpoConfig, Trainer, TrainerConfig};

fn main() -> diplomat::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40_000);
    let stage = CurriculumStage::preset(1)?;
    let cfg = TrainerConfig {
        hcn: HcnConfig { d: 32, d_m: 16, max_issues: 1, max_values: 5, ..HcnConfig::default() },
        ppo: PpoConfig { lr: 1e-3, minibatch: 64, ..PpoConfig::default() },
        curriculum: Curriculum::single(stage.clone()),
        total_steps: steps,
        ..TrainerConfig::default()
    };
    let mut trainer = Trainer::new(cfg, 0)?;
    while !trainer.is_finished() {
        let (log, _, _) = trainer.iterate()?;
        println!(
            "iter {:>3} steps {:>6} consensus {:.3} policy loss {:+.4} value loss {:.4} kl {:.4}",
            log.iteration,
            log.steps,
            log.consensus_rate.unwrap_or(f64::NAN),
            log.policy_loss,
            log.value_loss,
            log.approx_kl
        );
    }
    let eval = EvalConfig { episodes: 300, generator: stage.generator, ..EvalConfig::default() };
    let lineups = [
        ("trained", vec![SeatPolicy::Hcn(Arc::new(trainer.params.clone()))]),
        ("random", vec![SeatPolicy::Baseline(Baseline::Random)]),
    ];
    for (label, lineup) in lineups {
        let s = evaluate(label, &lineup, &eval, 99, 1)?.summary;
        println!("{label:<8} consensus {:.3} welfare {:.3} rounds {:.2}", s.consensus_rate, s.social_welfare, s.mean_rounds);
    }
    Ok(())
}
