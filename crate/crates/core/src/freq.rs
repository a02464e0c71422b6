//! Frequency vectors, partitioned inputs and exact moment arithmetic.
//!
//! Frequencies are non-negative integers and moments are accumulated exactly
//! in `u128`; floating point only appears when taking `p`-th roots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_p, Error, Result};

pub type ItemId = usize;
pub type SiteId = usize;

/// Sparse non-negative frequency vector over the universe `[0, n)`.
///
/// Zero entries are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyVector {
    n: usize,
    counts: BTreeMap<ItemId, u64>,
}

impl FrequencyVector {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: BTreeMap::new(),
        }
    }

    pub fn from_dense(values: &[u64]) -> Self {
        let mut v = Self::new(values.len());
        for (j, &c) in values.iter().enumerate() {
            v.add(j, c);
        }
        v
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (ItemId, u64)>) -> Self {
        let mut v = Self::new(n);
        for (j, c) in pairs {
            v.add(j, c);
        }
        v
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn get(&self, item: ItemId) -> u64 {
        self.counts.get(&item).copied().unwrap_or(0)
    }

    /// Adds `count` to `item`. Panics if `item` is outside the universe.
    pub fn add(&mut self, item: ItemId, count: u64) {
        assert!(item < self.n, "item {item} outside universe of size {}", self.n);
        if count > 0 {
            *self.counts.entry(item).or_insert(0) += count;
        }
    }

    pub fn increment(&mut self, item: ItemId) -> u64 {
        self.add(item, 1);
        self.get(item)
    }

    /// Number of non-zero entries (F0).
    pub fn support_size(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// L1 mass.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn max_entry(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, u64)> + '_ {
        self.counts.iter().map(|(&j, &c)| (j, c))
    }

    /// Keeps only the items accepted by `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(ItemId) -> bool) -> Self {
        Self {
            n: self.n,
            counts: self
                .counts
                .iter()
                .filter(|(&j, _)| keep(j))
                .map(|(&j, &c)| (j, c))
                .collect(),
        }
    }

    pub fn merge(&mut self, other: &FrequencyVector) {
        for (j, c) in other.iter() {
            self.add(j, c);
        }
    }
}

/// Real-valued sparse vector, produced by the shifted sparsification.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RealVector {
    pub n: usize,
    pub values: BTreeMap<ItemId, f64>,
}

impl RealVector {
    pub fn get(&self, item: ItemId) -> f64 {
        self.values.get(&item).copied().unwrap_or(0.0)
    }

    pub fn f2(&self) -> f64 {
        self.values.values().map(|x| x * x).sum()
    }
}

/// `k` local frequency vectors over a shared universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionedInput {
    n: usize,
    locals: Vec<FrequencyVector>,
}

impl PartitionedInput {
    pub fn new(locals: Vec<FrequencyVector>) -> Result<Self> {
        let Some(first) = locals.first() else {
            return Err(Error::Parameter("at least one site is required".into()));
        };
        let n = first.universe();
        if n == 0 {
            return Err(Error::Parameter("universe size must be >= 1".into()));
        }
        if locals.iter().any(|v| v.universe() != n) {
            return Err(Error::Parameter("all sites must share one universe".into()));
        }
        Ok(Self { n, locals })
    }

    pub fn empty(k: usize, n: usize) -> Self {
        Self {
            n,
            locals: vec![FrequencyVector::new(n); k],
        }
    }

    /// Builds an input from dense per-site rows.
    pub fn from_dense(rows: &[&[u64]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| FrequencyVector::from_dense(r)).collect())
    }

    pub fn k(&self) -> usize {
        self.locals.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn local(&self, site: SiteId) -> &FrequencyVector {
        &self.locals[site]
    }

    pub fn local_mut(&mut self, site: SiteId) -> &mut FrequencyVector {
        &mut self.locals[site]
    }

    pub fn locals(&self) -> &[FrequencyVector] {
        &self.locals
    }

    /// Entrywise sum of the local vectors.
    pub fn global(&self) -> FrequencyVector {
        let mut g = FrequencyVector::new(self.n);
        for v in &self.locals {
            g.merge(v);
        }
        g
    }

    /// Stream length `m`.
    pub fn total(&self) -> u64 {
        self.locals.iter().map(FrequencyVector::total).sum()
    }

    pub fn map_locals(&self, f: impl Fn(&FrequencyVector) -> FrequencyVector) -> Self {
        Self {
            n: self.n,
            locals: self.locals.iter().map(f).collect(),
        }
    }
}

/// Exact `x^p`, or `None` on overflow.
pub fn pow_exact(x: u64, p: u32) -> Option<u128> {
    (x as u128).checked_pow(p)
}

/// Exact `p`-th moment and the matching norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub fp: u128,
    pub lp: f64,
}

pub fn root(fp: u128, p: u32) -> f64 {
    if fp == 0 {
        0.0
    } else {
        (fp as f64).powf(1.0 / p as f64)
    }
}

pub fn moments(x: &FrequencyVector, p: u32) -> Result<Moment> {
    check_p(p, 1)?;
    let mut fp: u128 = 0;
    for (_, c) in x.iter() {
        let term = pow_exact(c, p).ok_or(Error::ArithmeticCapacity { p })?;
        fp = fp.checked_add(term).ok_or(Error::ArithmeticCapacity { p })?;
    }
    Ok(Moment { fp, lp: root(fp, p) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub p: u32,
    pub fp: u128,
    pub fp_prime: u128,
    pub lp: f64,
    pub lp_prime: f64,
}

/// `F_p` of the global vector together with the sum of local moments `F_p'`.
pub fn partition_moments(inp: &PartitionedInput, p: u32) -> Result<MomentSummary> {
    check_p(p, 2)?;
    let global = moments(&inp.global(), p)?;
    let mut fp_prime: u128 = 0;
    for local in inp.locals() {
        fp_prime = fp_prime
            .checked_add(moments(local, p)?.fp)
            .ok_or(Error::ArithmeticCapacity { p })?;
    }
    Ok(MomentSummary {
        p,
        fp: global.fp,
        fp_prime,
        lp: global.lp,
        lp_prime: root(fp_prime, p),
    })
}

/// Drops every entry below `threshold`; kept entries are unchanged.
pub fn sparsify(x: &FrequencyVector, threshold: f64) -> FrequencyVector {
    debug_assert!(threshold >= 0.0);
    FrequencyVector {
        n: x.n,
        counts: x
            .iter()
            .filter(|&(_, c)| c as f64 >= threshold)
            .collect(),
    }
}

/// Entries at or above `threshold` are shifted down by it, the rest dropped.
/// Entries that land exactly on zero are not stored.
pub fn sparsify_shifted(x: &FrequencyVector, threshold: f64) -> RealVector {
    debug_assert!(threshold >= 0.0);
    RealVector {
        n: x.n,
        values: x
            .iter()
            .filter(|&(_, c)| c as f64 >= threshold)
            .map(|(j, c)| (j, c as f64 - threshold))
            .filter(|&(_, v)| v > 0.0)
            .collect(),
    }
}
