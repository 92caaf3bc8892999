use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::space::{ActionSpace, ArchDescription};

/// Fixed reward per architecture, used instead of training child models.
#[derive(Clone, Debug, Default)]
pub struct SurrogateTable {
    rewards: HashMap<ArchDescription, f64>,
}

impl SurrogateTable {
    pub fn new(rewards: HashMap<ArchDescription, f64>) -> Self {
        SurrogateTable { rewards }
    }

    /// Rewards for every architecture of an enumerable space.
    pub fn from_fn(space: &ActionSpace, cap: u128, mut f: impl FnMut(&ArchDescription) -> f64) -> Result<Self> {
        let rewards = space.enumerate(cap)?.map(|a| {
            let r = f(&a);
            (a, r)
        });
        Ok(SurrogateTable { rewards: rewards.collect() })
    }

    /// An additive landscape: every (slot, option) pair gets a random
    /// effect, the reward is a squashed sum of effects plus per-arch noise.
    pub fn structured(space: &ActionSpace, noise: f64, seed: u64, cap: u128) -> Result<Self> {
        let mut rng = seeded(seed);
        let effects: Vec<Vec<f64>> = space
            .slots()
            .iter()
            .map(|s| (0..s.options).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let scale = (effects.len() as f64).sqrt().max(1.0);
        Self::from_fn(space, cap, |a| {
            let idx = space.to_indices(a).expect("enumerated from the space");
            let sum: f64 = idx.iter().zip(&effects).map(|(&i, e)| e[i]).sum::<f64>() / scale;
            let eps: f64 = rng.sample(StandardNormal);
            1.0 / (1.0 + (-(sum + noise * eps)).exp())
        })
    }

    pub fn reward(&self, arch: &ArchDescription) -> Result<f64> {
        self.rewards
            .get(arch)
            .copied()
            .ok_or_else(|| Error::Parameter(format!("surrogate table has no entry for {arch}")))
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Highest-reward architecture; ties go to the smallest in `Ord` order.
    pub fn argmax(&self) -> Option<(&ArchDescription, f64)> {
        self.rewards
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(a, &r)| (a, r))
    }

    /// Reward at quantile `q` of the table (nearest rank).
    pub fn quantile(&self, q: f64) -> Option<f64> {
        let mut v: Vec<f64> = self.rewards.values().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
        Some(v[rank - 1])
    }
}
