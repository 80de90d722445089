//! The stage table, the promotion rule, and the snapshot opponent pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use diplomat::hcn::{HcnConfig, HcnParams};
use diplomat::training::{curriculum_advance, Curriculum, OpponentPool, PoolConfig};

fn main() -> diplomat::Result<()> {
    let curriculum = Curriculum::default();
    for s in &curriculum.stages {
        let g = &s.generator;
        println!(
            "stage {}: agents {:?} issues {:?} values {:?} reservation {:?} exploiters {}",
            s.index, g.agents, g.issues, g.values, g.reservation, s.exploiter_prob
        );
    }

    let rule = curriculum.rule;
    let mut history = vec![0.8; rule.window - 1];
    println!("{} iterations at 0.80: stage {}", history.len(), curriculum_advance(&history, 1, &rule));
    history.extend([0.95; 10]);
    println!("after 10 at 0.95: stage {}", curriculum_advance(&history, 1, &rule));

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = HcnParams::init(HcnConfig { d: 8, heads: 2, d_m: 4, ..HcnConfig::default() }, &mut rng)?;
    let mut pool = OpponentPool::new(PoolConfig::default());
    for iteration in 1..=150 {
        pool.snapshot_to_pool(&params, iteration);
    }
    println!("pool after 150 iterations holds snapshots {:?}", pool.ids());
    let picks: Vec<usize> = (0..10).filter_map(|_| pool.sample_index(&mut rng)).collect();
    println!("sampled slots {picks:?}");
    Ok(())
}
