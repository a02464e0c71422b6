use std::collections::{BTreeMap, HashMap};

use crate::error::{check_eps, Error, Result};
use crate::freq::{ItemId, SiteId};
use crate::hh_static::{GuaranteeNorm, HHEstimate};
use crate::ledger::CommLedger;
use crate::netsim::{StreamEvent, TrackingProtocol};
use crate::rng::{purpose, SeededRng};

/// Source of interval thresholds, uniform on `{1, ..., upper}`.
pub trait ThresholdSource {
    fn draw(&mut self, upper: u64) -> u64;
}

impl ThresholdSource for SeededRng {
    fn draw(&mut self, upper: u64) -> u64 {
        self.uniform_1_to(upper)
    }
}

/// Accuracy the automaton actually runs at so that the summed variance of
/// all open intervals stays within `eps^2 F`. The log factor is evaluated at
/// the largest possible final `F2`, namely `m^2`, and clamped at 1.
pub fn internal_eps(eps: f64, max_total: u64) -> f64 {
    let log = (eps * max_total.max(1) as f64).log2().max(1.0);
    eps / (2.0 * log).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackMsg {
    /// Type 0: the coordinator adds `amount`.
    Increment { site: SiteId, item: ItemId, amount: f64 },
    /// Type 1: the coordinator overwrites with the exact local value.
    Exact { site: SiteId, item: ItemId, value: f64 },
}

impl TrackMsg {
    pub fn from_wire(kind: u8, site: SiteId, item: ItemId, value: f64) -> Result<Self> {
        match kind {
            0 => Ok(TrackMsg::Increment { site, item, amount: value }),
            1 => Ok(TrackMsg::Exact { site, item, value }),
            other => Err(Error::Protocol(format!("unknown message type {other}"))),
        }
    }

    pub fn site(&self) -> SiteId {
        match *self {
            TrackMsg::Increment { site, .. } | TrackMsg::Exact { site, .. } => site,
        }
    }

    pub fn item(&self) -> ItemId {
        match *self {
            TrackMsg::Increment { item, .. } | TrackMsg::Exact { item, .. } => item,
        }
    }
}

/// Automaton state of one tracked item at one site.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemTracker {
    /// Local value `v_ij` (shifted by the sparsification threshold when
    /// driven by the ℓp reduction).
    pub value: f64,
    pub round: u64,
    pub phase: u64,
    pub interval: u32,
    /// Unit arrivals in the current phase.
    pub w: u64,
    /// Unit arrivals in the current interval.
    pub delta: u64,
    /// Threshold of the current interval, drawn at its first arrival.
    pub threshold: Option<u64>,
}

/// One site of the ℓ2 tracking automaton.
#[derive(Debug, Clone)]
pub struct SiteTracker {
    site: SiteId,
    eps: f64,
    round: u64,
    round_f: f64,
    f2: f64,
    items: HashMap<ItemId, ItemTracker>,
    phases_in_round: u64,
    max_phases_in_round: u64,
}

impl SiteTracker {
    pub fn new(site: SiteId, eps: f64) -> Self {
        Self {
            site,
            eps,
            round: 1,
            round_f: 1.0,
            f2: 0.0,
            items: HashMap::new(),
            phases_in_round: 0,
            max_phases_in_round: 0,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    /// `F`: the local `F2` at the start of the current round (at least 1).
    pub fn round_f(&self) -> f64 {
        self.round_f
    }

    pub fn local_f2(&self) -> f64 {
        self.f2
    }

    pub fn phases_in_round(&self) -> u64 {
        self.phases_in_round
    }

    /// Largest number of phases completed within any single round so far.
    pub fn max_phases_in_round(&self) -> u64 {
        self.max_phases_in_round.max(self.phases_in_round)
    }

    /// Interval threshold range `ceil(eps^2 F / 2^c)`, at least 1.
    pub fn level(&self, interval: u32) -> u64 {
        let x = self.eps * self.eps * self.round_f / pow2(interval);
        (x.ceil() as u64).max(1)
    }

    pub fn phase_length(&self) -> f64 {
        self.eps * self.round_f.sqrt()
    }

    /// Logical state of `item`, with any pending round reset applied.
    pub fn item(&self, item: ItemId) -> ItemTracker {
        match self.items.get(&item) {
            Some(t) if t.round == self.round => t.clone(),
            Some(t) => self.fresh(t.value, t.phase),
            None => self.fresh(0.0, 0),
        }
    }

    fn fresh(&self, value: f64, phase: u64) -> ItemTracker {
        ItemTracker {
            value,
            round: self.round,
            phase: phase + 1,
            interval: 1,
            w: 0,
            delta: 0,
            threshold: None,
        }
    }

    fn entry(&mut self, item: ItemId) -> &mut ItemTracker {
        let round = self.round;
        let t = self.items.entry(item).or_insert_with(|| ItemTracker {
            value: 0.0,
            round,
            phase: 1,
            interval: 1,
            w: 0,
            delta: 0,
            threshold: None,
        });
        if t.round != round {
            *t = ItemTracker {
                value: t.value,
                round,
                phase: t.phase + 1,
                interval: 1,
                w: 0,
                delta: 0,
                threshold: None,
            };
        }
        t
    }

    /// Starts tracking `item` at a non-zero value without a unit step. Used
    /// when a shifted local value first rises above zero.
    pub fn activate(&mut self, item: ItemId, base: f64) {
        let t = self.entry(item);
        let old = t.value;
        t.value = base;
        self.f2 += base * base - old * old;
        self.check_round();
    }

    /// One unit arrival of `item`; emitted messages are appended to `out`.
    pub fn on_arrival(&mut self, item: ItemId, src: &mut impl ThresholdSource, out: &mut Vec<TrackMsg>) {
        let site = self.site;
        let phase_len = self.phase_length();
        let round = self.round;
        let eps2f = self.eps * self.eps * self.round_f;
        let level = |c: u32| ((eps2f / pow2(c)).ceil() as u64).max(1);

        let t = self.entry(item);
        debug_assert_eq!(t.round, round);
        let old = t.value;
        t.value += 1.0;
        t.w += 1;
        t.delta += 1;
        let l = level(t.interval);
        let r = *t.threshold.get_or_insert_with(|| src.draw(l));
        if t.delta == r {
            out.push(TrackMsg::Increment { site, item, amount: l as f64 });
        }
        if t.delta as f64 >= pow2(t.interval) {
            t.interval += 1;
            t.delta = 0;
            t.threshold = None;
        }
        let mut phase_end = false;
        if t.w as f64 >= phase_len {
            t.phase += 1;
            t.interval = 1;
            t.w = 0;
            t.delta = 0;
            t.threshold = None;
            out.push(TrackMsg::Exact { site, item, value: t.value });
            phase_end = true;
        }
        let new = t.value;
        self.f2 += new * new - old * old;
        if phase_end {
            self.phases_in_round += 1;
        }
        self.check_round();
    }

    fn check_round(&mut self) {
        if self.f2 >= 2.0 * self.round_f {
            self.max_phases_in_round = self.max_phases_in_round.max(self.phases_in_round);
            self.phases_in_round = 0;
            self.round += 1;
            self.round_f = self.f2.max(1.0);
        }
    }
}

fn pow2(c: u32) -> f64 {
    2f64.powi(c as i32)
}

/// Coordinator state: one estimate per `(site, item)` and their sums.
#[derive(Debug, Clone, Default)]
pub struct HhCoordinator {
    per_site: HashMap<(SiteId, ItemId), f64>,
    totals: HashMap<ItemId, f64>,
}

impl HhCoordinator {
    pub fn apply(&mut self, msg: &TrackMsg) {
        let key = (msg.site(), msg.item());
        let slot = self.per_site.entry(key).or_insert(0.0);
        let before = *slot;
        match *msg {
            TrackMsg::Increment { amount, .. } => *slot += amount,
            TrackMsg::Exact { value, .. } => *slot = value,
        }
        let diff = *slot - before;
        *self.totals.entry(msg.item()).or_insert(0.0) += diff;
    }

    pub fn site_estimate(&self, site: SiteId, item: ItemId) -> f64 {
        self.per_site.get(&(site, item)).copied().unwrap_or(0.0)
    }

    pub fn estimate(&self, item: ItemId) -> f64 {
        self.totals.get(&item).copied().unwrap_or(0.0)
    }

    pub fn estimates(&self) -> BTreeMap<ItemId, f64> {
        self.totals
            .iter()
            .filter(|(_, &x)| x != 0.0)
            .map(|(&j, &x)| (j, x))
            .collect()
    }
}

/// `k` site automata plus the coordinator, sharing one accuracy.
#[derive(Debug, Clone)]
pub struct L2Instance {
    sites: Vec<SiteTracker>,
    rngs: Vec<SeededRng>,
    coordinator: HhCoordinator,
    scratch: Vec<TrackMsg>,
}

impl L2Instance {
    /// `eps` is used as is; callers apply [`internal_eps`] themselves.
    pub fn new(k: usize, eps: f64, rng: &SeededRng) -> Self {
        Self {
            sites: (0..k).map(|i| SiteTracker::new(i, eps)).collect(),
            rngs: (0..k).map(|i| rng.derive(&[purpose::SITE, i as u64])).collect(),
            coordinator: HhCoordinator::default(),
            scratch: Vec::new(),
        }
    }

    pub fn site(&self, site: SiteId) -> &SiteTracker {
        &self.sites[site]
    }

    pub fn coordinator(&self) -> &HhCoordinator {
        &self.coordinator
    }

    /// Delivers one unit arrival and returns the messages it caused.
    pub fn arrive(&mut self, site: SiteId, item: ItemId, ledger: &mut CommLedger) -> &[TrackMsg] {
        self.scratch.clear();
        self.sites[site].on_arrival(item, &mut self.rngs[site], &mut self.scratch);
        for msg in &self.scratch {
            ledger.charge_messages(site, 1);
            self.coordinator.apply(msg);
        }
        &self.scratch
    }

    pub fn activate(&mut self, site: SiteId, item: ItemId, base: f64) {
        self.sites[site].activate(item, base);
    }
}

/// Continuous ℓ2 heavy-hitter tracking over unit arrivals.
#[derive(Debug, Clone)]
pub struct L2HhTracking {
    eps: f64,
    instance: L2Instance,
}

impl L2HhTracking {
    /// `max_total` bounds the stream length and fixes the internal accuracy.
    pub fn new(k: usize, eps: f64, max_total: u64, rng: &SeededRng) -> Result<Self> {
        check_eps(eps)?;
        if k == 0 {
            return Err(Error::Parameter("k must be >= 1".into()));
        }
        Ok(Self {
            eps,
            instance: L2Instance::new(k, internal_eps(eps, max_total), rng),
        })
    }

    /// Runs the automaton at exactly `eps`, skipping the internal rescale.
    pub fn with_raw_eps(k: usize, eps: f64, rng: &SeededRng) -> Self {
        Self {
            eps,
            instance: L2Instance::new(k, eps, rng),
        }
    }

    pub fn instance(&self) -> &L2Instance {
        &self.instance
    }

    pub fn estimate(&self, item: ItemId) -> f64 {
        self.instance.coordinator.estimate(item)
    }
}

impl TrackingProtocol for L2HhTracking {
    type Output = HHEstimate;

    fn on_event(&mut self, event: &StreamEvent, ledger: &mut CommLedger) {
        self.instance.arrive(event.site, event.item, ledger);
    }

    fn query(&self, _: u64) -> HHEstimate {
        HHEstimate {
            estimates: self.instance.coordinator.estimates(),
            eps: self.eps,
            guarantee: GuaranteeNorm::L2Prime,
            p: 2,
        }
    }
}
