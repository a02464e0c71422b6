use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::freq::SiteId;

pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Bits charged for one protocol message: an item id, a site id and one
/// 64-bit payload.
pub fn message_bits(k: usize, n: usize) -> u64 {
    (ceil_log2(n as u64) + ceil_log2(k as u64) + 64) as u64
}

/// Communication meter for one run. Every message in either direction is
/// attributed to the site at its far end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub total_bits: u64,
    pub total_messages: u64,
    pub per_site_bits: Vec<u64>,
    pub per_round_bits: BTreeMap<u32, u64>,
    bits_per_message: u64,
    round: u32,
}

impl CommLedger {
    pub fn new(k: usize, n: usize) -> Self {
        Self {
            total_bits: 0,
            total_messages: 0,
            per_site_bits: vec![0; k],
            per_round_bits: BTreeMap::new(),
            bits_per_message: message_bits(k, n),
            round: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.per_site_bits.len()
    }

    pub fn bits_per_message(&self) -> u64 {
        self.bits_per_message
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn set_round(&mut self, round: u32) {
        self.round = round;
    }

    /// One message of `bits` between `site` and the coordinator.
    pub fn charge(&mut self, site: SiteId, bits: u64) {
        assert!(site < self.k(), "site {site} out of range");
        self.total_bits += bits;
        self.total_messages += 1;
        self.per_site_bits[site] += bits;
        *self.per_round_bits.entry(self.round).or_insert(0) += bits;
    }

    /// `count` standard-size messages between `site` and the coordinator.
    pub fn charge_messages(&mut self, site: SiteId, count: u64) {
        if count == 0 {
            return;
        }
        assert!(site < self.k(), "site {site} out of range");
        let bits = count * self.bits_per_message;
        self.total_bits += bits;
        self.total_messages += count;
        self.per_site_bits[site] += bits;
        *self.per_round_bits.entry(self.round).or_insert(0) += bits;
    }

    /// A coordinator broadcast of `count` records costs `count` messages per site.
    pub fn broadcast(&mut self, count: u64) {
        for site in 0..self.k() {
            self.charge_messages(site, count);
        }
    }

    pub fn messages_per_site(&self) -> f64 {
        self.total_messages as f64 / self.k() as f64
    }

    pub fn is_consistent(&self) -> bool {
        self.per_site_bits.iter().sum::<u64>() == self.total_bits
            && self.per_round_bits.values().sum::<u64>() == self.total_bits
    }
}
