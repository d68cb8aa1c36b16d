//! Epoch-shuffled batch sampling without internal state.
//!
//! Step `t` takes the positions `t*B .. t*B + B` of an endless sequence made
//! of concatenated permutations, one per epoch, so any step's batch can be
//! recomputed directly. That is what makes resumed runs exact.

use rand::seq::SliceRandom;

use crate::rng::{substream, SHUFFLE};

#[derive(Debug, Clone)]
pub struct BatchSampler {
    n: usize,
    batch: usize,
    seed: u64,
    stream: String,
}

impl BatchSampler {
    /// Sampler over `n` items; `domain` keys an independent shuffle stream.
    pub fn new(n: usize, batch: usize, seed: u64, domain: u32) -> Self {
        assert!(n > 0 && batch > 0, "sampler needs items and a positive batch");
        Self {
            n,
            batch,
            seed,
            stream: format!("{SHUFFLE}/{domain}"),
        }
    }

    /// The permutation used during `epoch`.
    pub fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut substream(self.seed, &self.stream, epoch));
        order
    }

    /// Item indices of the batch drawn at `step`.
    pub fn batch(&self, step: usize) -> Vec<usize> {
        let start = step as u128 * self.batch as u128;
        let mut out = Vec::with_capacity(self.batch);
        let mut cached: Option<(u64, Vec<usize>)> = None;
        for pos in start..start + self.batch as u128 {
            let epoch = (pos / self.n as u128) as u64;
            let within = (pos % self.n as u128) as usize;
            if cached.as_ref().is_none_or(|(e, _)| *e != epoch) {
                cached = Some((epoch, self.epoch_order(epoch)));
            }
            out.push(cached.as_ref().map(|(_, o)| o[within]).unwrap_or_default());
        }
        out
    }
}
