use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hcn::HcnParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub capacity: usize,
    /// Chance that a non-anchor seat faces a stored snapshot.
    pub p_hist: f64,
    /// Iterations between snapshots.
    pub interval: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            capacity: 10,
            p_hist: 0.3,
            interval: 10,
        }
    }
}

/// Ring buffer of frozen parameter snapshots.
#[derive(Debug, Clone)]
pub struct OpponentPool {
    pub config: PoolConfig,
    snapshots: VecDeque<(usize, Arc<HcnParams>)>,
}

impl OpponentPool {
    pub fn new(config: PoolConfig) -> Self {
        Self {
            config,
            snapshots: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Ids of the stored snapshots, oldest first.
    pub fn ids(&self) -> Vec<usize> {
        self.snapshots.iter().map(|(id, _)| *id).collect()
    }

    pub fn push(&mut self, params: &HcnParams, id: usize) {
        if self.config.capacity == 0 {
            return;
        }
        if self.snapshots.len() == self.config.capacity {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back((id, Arc::new(params.clone())));
    }

    /// Store a snapshot when `iteration` falls on the snapshot interval.
    pub fn snapshot_to_pool(&mut self, params: &HcnParams, iteration: usize) -> bool {
        let interval = self.config.interval.max(1);
        if iteration.is_multiple_of(interval) {
            self.push(params, iteration);
            true
        } else {
            false
        }
    }

    /// Uniform draw over stored snapshots; `None` when the pool is empty.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        (!self.snapshots.is_empty()).then(|| rng.random_range(0..self.snapshots.len()))
    }

    pub fn get(&self, index: usize) -> &Arc<HcnParams> {
        &self.snapshots[index].1
    }

    /// A snapshot, or `current` when nothing is stored yet.
    pub fn sample_opponent<R: Rng + ?Sized>(
        &self,
        current: &Arc<HcnParams>,
        rng: &mut R,
    ) -> Arc<HcnParams> {
        match self.sample_index(rng) {
            Some(i) => self.snapshots[i].1.clone(),
            None => current.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcn::HcnConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> HcnParams {
        HcnParams::zeros(HcnConfig {
            d: 4,
            heads: 1,
            d_m: 2,
            ..HcnConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn ring_buffer_keeps_latest() {
        let mut pool = OpponentPool::new(PoolConfig::default());
        let p = params();
        for id in 1..=25 {
            pool.push(&p, id);
        }
        assert_eq!(pool.ids(), (16..=25).collect::<Vec<_>>());
    }

    #[test]
    fn empty_pool_returns_current() {
        let pool = OpponentPool::new(PoolConfig::default());
        let cur = Arc::new(params());
        let got = pool.sample_opponent(&cur, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(Arc::ptr_eq(&got, &cur));
    }

    #[test]
    fn interval_snapshots() {
        let mut pool = OpponentPool::new(PoolConfig::default());
        let p = params();
        for it in 0..35 {
            pool.snapshot_to_pool(&p, it);
        }
        assert_eq!(pool.ids(), vec![0, 10, 20, 30]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut pool = OpponentPool::new(PoolConfig::default());
        let p = params();
        for id in 0..10 {
            pool.push(&p, id);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 10_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[pool.sample_index(&mut rng).unwrap()] += 1;
        }
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * 0.1).abs() <= 3.0 * sigma);
        }
    }
}
