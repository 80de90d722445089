//! Miniature ablation and scalability sweeps. The budgets are tiny so the
//! example finishes quickly; the numbers only show the report shapes.

use diplomat::config::RunConfig;
use diplomat::evaluation::{ablate, scalability_sweep, AblationFlag};
use diplomat::hcn::HcnConfig;
use diplomat::training::{Curriculum, CurriculumStage};

fn main() -> diplomat::Result<()> {
    let mut run = RunConfig::default();
    run.train.hcn = HcnConfig { d: 16, heads: 2, d_m: 8, max_issues: 3, max_values: 5, ..HcnConfig::default() };
    run.train.curriculum = Curriculum::single(CurriculumStage::preset(2)?);
    run.train.total_steps = 4096;
    run.train.ppo.steps_per_iteration = 1024;
    run.evaluation.episodes = 100;

    for v in ablate(&run, &AblationFlag::ALL, &[0, 1], None)? {
        println!(
            "{:<13} consensus {:.3} (per seed {:.3?}) welfare {:.3}",
            v.label, v.summary.consensus_rate, v.seed_consensus, v.summary.social_welfare
        );
    }

    run.train.hcn.max_issues = 1;
    for p in scalability_sweep(&run, &[2, 4, 8], 0, None)? {
        println!(
            "n={} (stage {}) consensus {:.3} after {} steps",
            p.agents,
            p.stage,
            p.summary.consensus_rate,
            p.log.last().map_or(0, |l| l.steps)
        );
    }
    Ok(())
}
