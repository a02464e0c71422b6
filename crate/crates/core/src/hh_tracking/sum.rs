use std::collections::HashMap;

use crate::error::{check_p, Error, Result};
use crate::freq::{pow_exact, root, FrequencyVector, ItemId, PartitionedInput, SiteId};
use crate::ledger::CommLedger;

/// Coordinator-side sum of monotone per-site values. A site reports its
/// exact value on its first change and whenever it has grown by a factor of
/// at least `1 + theta` since its last report.
#[derive(Debug, Clone)]
pub struct SumTracker {
    theta: f64,
    reported: Vec<u128>,
    sum: u128,
    reports: u64,
}

impl SumTracker {
    pub fn new(k: usize, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Parameter(format!("theta must be positive, got {theta}")));
        }
        Ok(Self {
            theta,
            reported: vec![0; k],
            sum: 0,
            reports: 0,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Site `site` now holds `value`. Returns true if it reported.
    pub fn observe(&mut self, site: SiteId, value: u128, ledger: &mut CommLedger) -> bool {
        let last = self.reported[site];
        let due = if last == 0 {
            value > 0
        } else {
            value as f64 >= (1.0 + self.theta) * last as f64
        };
        if due {
            self.sum = self.sum - last + value;
            self.reported[site] = value;
            self.reports += 1;
            ledger.charge_messages(site, 1);
        }
        due
    }

    /// Sum of the last reports; the true sum lies in `[sum, (1 + theta) sum)`.
    pub fn sum(&self) -> u128 {
        self.sum
    }

    pub fn reported(&self, site: SiteId) -> u128 {
        self.reported[site]
    }

    pub fn reports(&self) -> u64 {
        self.reports
    }
}

/// Tracks `F_p'` = sum of local `p`-th moments over unit arrivals.
#[derive(Debug, Clone)]
pub struct LpPrimeTracker {
    p: u32,
    counts: Vec<HashMap<ItemId, u64>>,
    local: Vec<u128>,
    sum: SumTracker,
}

impl LpPrimeTracker {
    pub fn new(k: usize, p: u32, theta: f64) -> Result<Self> {
        check_p(p, 1)?;
        Ok(Self {
            p,
            counts: vec![HashMap::new(); k],
            local: vec![0; k],
            sum: SumTracker::new(k, theta)?,
        })
    }

    /// Records one arrival and returns the new local count `v_ij`.
    pub fn on_arrival(&mut self, site: SiteId, item: ItemId, ledger: &mut CommLedger) -> u64 {
        let c = self.counts[site].entry(item).or_insert(0);
        let old = *c;
        *c += 1;
        let new = *c;
        let grow = pow_exact(new, self.p)
            .unwrap_or(u128::MAX)
            .saturating_sub(pow_exact(old, self.p).unwrap_or(u128::MAX));
        self.local[site] = self.local[site].saturating_add(grow);
        self.sum.observe(site, self.local[site], ledger);
        new
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn count(&self, site: SiteId, item: ItemId) -> u64 {
        self.counts[site].get(&item).copied().unwrap_or(0)
    }

    pub fn global_count(&self, item: ItemId) -> u64 {
        self.counts.iter().map(|c| c.get(&item).copied().unwrap_or(0)).sum()
    }

    /// Current local vectors over the universe `[0, n)`.
    pub fn snapshot(&self, n: usize) -> PartitionedInput {
        let locals = self
            .counts
            .iter()
            .map(|c| FrequencyVector::from_pairs(n, c.iter().map(|(&j, &v)| (j, v))))
            .collect();
        PartitionedInput::new(locals).expect("sites share one universe")
    }

    pub fn local_fp(&self, site: SiteId) -> u128 {
        self.local[site]
    }

    /// Exact `F_p'`, known to nobody in the protocol; kept for diagnostics.
    pub fn exact_fp_prime(&self) -> u128 {
        self.local.iter().fold(0u128, |a, &b| a.saturating_add(b))
    }

    pub fn estimate_fp(&self) -> u128 {
        self.sum.sum()
    }

    pub fn estimate_lp(&self) -> f64 {
        root(self.sum.sum(), self.p)
    }

    pub fn reports(&self) -> u64 {
        self.sum.reports()
    }
}
