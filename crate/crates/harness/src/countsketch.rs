use std::collections::BTreeMap;

use distfreq::rng::purpose;
use distfreq::{CommLedger, FrequencyVector, ItemId, PartitionedInput, PublicCoins, SeededRng};

/// Linear sketch with `depth` rows of `width` signed counters.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSketch {
    width: usize,
    depth: usize,
    coins: PublicCoins,
    table: Vec<i64>,
}

impl CountSketch {
    pub const DEPTH: usize = 5;

    pub fn width_for(eps: f64) -> usize {
        (2.0 / (eps * eps)).ceil() as usize
    }

    pub fn new(width: usize, depth: usize, coins: PublicCoins) -> Self {
        assert!(width > 0 && depth > 0);
        Self {
            width,
            depth,
            coins,
            table: vec![0; width * depth],
        }
    }

    fn cell(&self, row: usize, item: ItemId) -> (usize, i64) {
        let w = self.coins.word(row as u64, item as u64);
        let bucket = (w % self.width as u64) as usize;
        let sign = if w >> 63 == 1 { 1 } else { -1 };
        (row * self.width + bucket, sign)
    }

    pub fn add(&mut self, item: ItemId, count: u64) {
        for row in 0..self.depth {
            let (c, s) = self.cell(row, item);
            self.table[c] += s * count as i64;
        }
    }

    pub fn from_vector(width: usize, depth: usize, coins: PublicCoins, v: &FrequencyVector) -> Self {
        let mut cs = Self::new(width, depth, coins);
        for (j, c) in v.iter() {
            cs.add(j, c);
        }
        cs
    }

    pub fn merge(&mut self, other: &CountSketch) {
        assert_eq!(self.table.len(), other.table.len());
        for (a, b) in self.table.iter_mut().zip(&other.table) {
            *a += b;
        }
    }

    pub fn counters(&self) -> usize {
        self.table.len()
    }

    /// Median over rows of the signed counter.
    pub fn estimate(&self, item: ItemId) -> f64 {
        let mut r: Vec<i64> = (0..self.depth)
            .map(|row| {
                let (c, s) = self.cell(row, item);
                s * self.table[c]
            })
            .collect();
        r.sort_unstable();
        let d = r.len();
        if d % 2 == 1 {
            r[d / 2] as f64
        } else {
            (r[d / 2 - 1] + r[d / 2]) as f64 / 2.0
        }
    }
}

/// Every site ships its sketch; the coordinator merges and queries all of
/// `[0, n)`.
pub fn count_sketch_hh(
    inp: &PartitionedInput,
    eps: f64,
    rng: &SeededRng,
    ledger: &mut CommLedger,
) -> BTreeMap<ItemId, f64> {
    let coins = PublicCoins::from_rng(rng, &[purpose::PUBLIC]);
    let width = CountSketch::width_for(eps);
    let mut total = CountSketch::new(width, CountSketch::DEPTH, coins);
    for (i, local) in inp.locals().iter().enumerate() {
        let s = CountSketch::from_vector(width, CountSketch::DEPTH, coins, local);
        ledger.charge_messages(i, s.counters() as u64);
        total.merge(&s);
    }
    (0..inp.n()).map(|j| (j, total.estimate(j))).collect()
}
