use distfreq::netsim::StreamEvent;
use distfreq::{FrequencyVector, ItemId, PartitionedInput};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Brute-force ground truth for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exact {
    pub p: u32,
    pub global: Vec<u64>,
    pub fp: u128,
    pub fp_prime: u128,
}

fn power_sum(mut values: impl Iterator<Item = u64>, p: u32) -> Result<u128, HarnessError> {
    values.try_fold(0u128, |acc, v| {
        (v as u128)
            .checked_pow(p)
            .and_then(|x| acc.checked_add(x))
            .ok_or(HarnessError::Overflow { p })
    })
}

impl Exact {
    pub fn new(inp: &PartitionedInput, p: u32) -> Result<Self, HarnessError> {
        let n = inp.n();
        let mut global = vec![0u64; n];
        let mut fp_prime = 0u128;
        for local in inp.locals() {
            let dense: Vec<u64> = (0..n).map(|j| local.get(j)).collect();
            for (g, v) in global.iter_mut().zip(&dense) {
                *g += v;
            }
            fp_prime = fp_prime
                .checked_add(power_sum(dense.into_iter(), p)?)
                .ok_or(HarnessError::Overflow { p })?;
        }
        let fp = power_sum(global.iter().copied(), p)?;
        Ok(Self {
            p,
            global,
            fp,
            fp_prime,
        })
    }

    pub fn v(&self, item: ItemId) -> u64 {
        self.global.get(item).copied().unwrap_or(0)
    }

    pub fn lp(&self) -> f64 {
        (self.fp as f64).powf(1.0 / self.p as f64)
    }

    pub fn lp_prime(&self) -> f64 {
        (self.fp_prime as f64).powf(1.0 / self.p as f64)
    }

    pub fn support(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.global.iter().enumerate().filter(|(_, &v)| v > 0).map(|(j, _)| j)
    }

    /// Items with `v_j^p > alpha * F_p`, largest first.
    pub fn heavy(&self, alpha: f64) -> Vec<ItemId> {
        let bar = alpha * self.fp as f64;
        let mut h: Vec<ItemId> = self
            .support()
            .filter(|&j| (self.global[j] as f64).powi(self.p as i32) > bar)
            .collect();
        h.sort_by_key(|&j| (std::cmp::Reverse(self.global[j]), j));
        h
    }

    /// The `count` most frequent items, ties broken by index.
    pub fn top(&self, count: usize) -> Vec<ItemId> {
        let mut s: Vec<ItemId> = self.support().collect();
        s.sort_by_key(|&j| (std::cmp::Reverse(self.global[j]), j));
        s.truncate(count);
        s
    }
}

/// Inputs seen at each of `times` (ascending), in one pass over `events`.
pub fn prefix_inputs(events: &[StreamEvent], k: usize, n: usize, times: &[u64]) -> Vec<PartitionedInput> {
    let mut locals = vec![FrequencyVector::new(n); k];
    let mut out = Vec::with_capacity(times.len());
    let mut it = events.iter().peekable();
    for &t in times {
        while let Some(e) = it.next_if(|e| e.time <= t) {
            locals[e.site].increment(e.item);
        }
        out.push(PartitionedInput::new(locals.clone()).expect("locals share one universe"));
    }
    out
}
