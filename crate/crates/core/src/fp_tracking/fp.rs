use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cover::CoverSet;
use crate::error::{check_eps, check_p, Error, Result};
use crate::freq::ItemId;
use crate::ledger::CommLedger;
use crate::netsim::{StreamEvent, TrackingProtocol};
use crate::recsketch::{assemble, default_phi, RecursionSign, SketchLevels, Subsampling};
use crate::rng::{purpose, PublicCoins, SeededRng};

use super::weak_cover::{WeakCoverConfig, WeakCoverTracker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpTrackingConfig {
    pub p: u32,
    pub eps: f64,
    pub k: usize,
    pub n: usize,
    pub max_total: u64,
    pub phi: usize,
    pub sign: RecursionSign,
}

impl FpTrackingConfig {
    pub fn new(p: u32, eps: f64, k: usize, n: usize, max_total: u64) -> Self {
        Self {
            p,
            eps,
            k,
            n,
            max_total,
            phi: default_phi(n),
            sign: RecursionSign::Plus,
        }
    }

    /// Cover parameter of every weak cover: `eps^2 / phi^3`.
    pub fn alpha(&self) -> f64 {
        self.eps * self.eps / (self.phi as f64).powi(3)
    }
}

/// Continuous `F_p`: one weak-cover tracker per level `l < phi` and branch
/// `b`, fed the arrivals of `u^l` whose next subsampling bit equals `b`,
/// plus exact forwarding of the arrivals that survive all `phi` levels.
#[derive(Debug, Clone)]
pub struct FpTracking {
    cfg: FpTrackingConfig,
    sub: Subsampling,
    trackers: Vec<WeakCoverTracker>,
    depth: BTreeMap<ItemId, usize>,
    deep: BTreeMap<ItemId, u64>,
}

impl FpTracking {
    pub fn new(cfg: FpTrackingConfig, rng: &SeededRng) -> Result<Self> {
        check_p(cfg.p, 2)?;
        check_eps(cfg.eps)?;
        if cfg.phi == 0 {
            return Err(Error::Parameter("phi must be >= 1".into()));
        }
        let wc = WeakCoverConfig::new(cfg.p, cfg.alpha(), cfg.eps, cfg.k, cfg.n, cfg.max_total);
        let mut trackers = Vec::with_capacity(2 * cfg.phi);
        for l in 0..cfg.phi {
            for b in 0..2u64 {
                trackers.push(WeakCoverTracker::new(wc, &rng.derive(&[purpose::LEVEL, l as u64, b]))?);
            }
        }
        Ok(Self {
            cfg,
            sub: Subsampling::new(cfg.phi, PublicCoins::from_rng(rng, &[purpose::PUBLIC])),
            trackers,
            depth: BTreeMap::new(),
            deep: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &FpTrackingConfig {
        &self.cfg
    }

    pub fn subsampling(&self) -> &Subsampling {
        &self.sub
    }

    /// Tracker of level `l`, branch `b`.
    pub fn tracker(&self, l: usize, b: usize) -> &WeakCoverTracker {
        &self.trackers[2 * l + b]
    }

    pub fn trackers(&self) -> &[WeakCoverTracker] {
        &self.trackers
    }

    /// Level covers `Q_l = Q_{l,0} ∪ Q_{l,1}`.
    pub fn covers(&self) -> Vec<CoverSet> {
        (0..self.cfg.phi)
            .map(|l| {
                let mut c = self.trackers[2 * l].cover();
                c.pairs.extend(self.trackers[2 * l + 1].cover().pairs);
                c
            })
            .collect()
    }

    pub fn levels(&self) -> SketchLevels {
        let p = self.cfg.p as i32;
        let sub = self.sub;
        assemble(
            self.covers(),
            self.deep.values().map(|&v| (v as f64).powi(p)),
            |l, i| sub.bit(l, i),
            self.cfg.sign,
        )
    }

    pub fn estimate(&self) -> f64 {
        self.levels().estimate()
    }

    pub fn on_arrival(&mut self, time: u64, site: usize, item: ItemId, ledger: &mut CommLedger) {
        let sub = self.sub;
        let d = *self.depth.entry(item).or_insert_with(|| sub.depth(item));
        for l in 0..self.cfg.phi.min(d + 1) {
            let b = usize::from(d > l);
            self.trackers[2 * l + b].on_arrival(time, site, item, ledger);
        }
        if d >= self.cfg.phi {
            ledger.charge_messages(site, 1);
            *self.deep.entry(item).or_insert(0) += 1;
        }
    }
}

impl TrackingProtocol for FpTracking {
    type Output = f64;

    fn on_event(&mut self, event: &StreamEvent, ledger: &mut CommLedger) {
        self.on_arrival(event.time, event.site, event.item, ledger);
    }

    fn query(&self, _: u64) -> f64 {
        self.estimate()
    }
}
