use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cover::{cover_two_round, CoverSet};
use crate::error::{check_eps, check_p, Error, Result};
use crate::freq::{moments, ItemId, SiteId};
use crate::hh_tracking::{LpHhTracking, LpPrimeTracker};
use crate::ledger::CommLedger;
use crate::recsketch::fp_static;
use crate::rng::{purpose, PublicCoins, SeededRng};

use super::vjp::VjpTracker;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakCoverConfig {
    pub p: u32,
    pub alpha: f64,
    pub eps: f64,
    pub k: usize,
    pub n: usize,
    pub max_total: u64,
    /// Accuracy of the static `F_p` run at every round start.
    pub f_hat_eps: f64,
    /// Growth factor `1 + theta` between `F_p'` reports.
    pub sum_theta: f64,
}

impl WeakCoverConfig {
    pub fn new(p: u32, alpha: f64, eps: f64, k: usize, n: usize, max_total: u64) -> Self {
        Self {
            p,
            alpha,
            eps,
            k,
            n,
            max_total,
            f_hat_eps: 0.2,
            sum_theta: 0.05,
        }
    }

    pub fn hh_eps(&self) -> f64 {
        self.alpha.powf(1.0 / self.p as f64) / 4.0
    }

    /// `6^(p+3)`, the slack factor of the round-start cover and of the
    /// admission budget.
    fn six_pow(&self) -> f64 {
        6f64.powi(self.p as i32 + 3)
    }

    pub fn round_cover_alpha(&self) -> f64 {
        self.alpha / self.six_pow()
    }

    pub fn admission_limit(&self) -> f64 {
        self.six_pow() / self.alpha
    }

    pub fn phase_limit(&self) -> f64 {
        3.0 / (self.eps * self.eps)
    }

    /// `(2/3) alpha^(1/p) F̂^(1/p)`.
    pub fn admission_threshold(&self, f_hat: f64) -> f64 {
        let inv = 1.0 / self.p as f64;
        2.0 / 3.0 * self.alpha.powf(inv) * f_hat.powf(inv)
    }

    fn validate(&self) -> Result<()> {
        check_p(self.p, 2)?;
        check_eps(self.eps)?;
        check_eps(self.f_hat_eps)?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.k == 0 || self.n == 0 {
            return Err(Error::Parameter("k and n must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundEnd {
    /// More than `3 / eps^2` phases completed.
    Phases,
    /// The `F_p'` estimate exceeded `4 F̂`.
    Growth,
    /// More than `6^(p+3) / alpha` admissions.
    Admissions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub start_time: u64,
    pub end_time: Option<u64>,
    pub end: Option<RoundEnd>,
    pub f_hat: f64,
    /// Exact `F_p` of the subsample at the round boundaries (diagnostic).
    pub fp_start: f64,
    pub fp_end: Option<f64>,
    pub initial_members: usize,
}

#[derive(Debug, Clone)]
struct Round {
    f_hat: f64,
    threshold: f64,
    initial: usize,
    phases: u64,
    members: BTreeMap<ItemId, VjpTracker>,
}

/// Maintains a weak (α, ε)-cover of `v^p` over one stream in rounds.
#[derive(Debug, Clone)]
pub struct WeakCoverTracker {
    cfg: WeakCoverConfig,
    rng: SeededRng,
    coins: PublicCoins,
    hh: LpHhTracking,
    sum: LpPrimeTracker,
    round: Option<Round>,
    records: Vec<RoundRecord>,
    selected: Option<usize>,
    static_failures: u64,
    touched: Vec<usize>,
}

impl WeakCoverTracker {
    pub fn new(cfg: WeakCoverConfig, rng: &SeededRng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rng: rng.derive(&[purpose::ROUND]),
            coins: PublicCoins::from_rng(rng, &[purpose::PUBLIC]),
            hh: LpHhTracking::new(cfg.k, cfg.p, cfg.hh_eps(), cfg.max_total, &rng.derive(&[purpose::INSTANCE]))?,
            sum: LpPrimeTracker::new(cfg.k, cfg.p, cfg.sum_theta)?,
            round: None,
            records: Vec::new(),
            selected: None,
            static_failures: 0,
            touched: Vec::new(),
        })
    }

    pub fn config(&self) -> &WeakCoverConfig {
        &self.cfg
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.records
    }

    /// Rounds started so far.
    pub fn round_count(&self) -> usize {
        self.records.len()
    }

    pub fn static_failures(&self) -> u64 {
        self.static_failures
    }

    pub fn f_hat(&self) -> Option<f64> {
        self.round.as_ref().map(|r| r.f_hat)
    }

    pub fn members(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.round.iter().flat_map(|r| r.members.keys().copied())
    }

    /// Exact `F_p` of the stream seen so far (diagnostic, not charged).
    pub fn exact_fp(&self) -> f64 {
        let global = self.sum.snapshot(self.cfg.n).global();
        moments(&global, self.cfg.p).map(|m| m.fp as f64).unwrap_or(f64::INFINITY)
    }

    pub fn global_count(&self, item: ItemId) -> u64 {
        self.sum.global_count(item)
    }

    /// `Q(t) = {(j, w_j(t)) : j in I(t)}`.
    pub fn cover(&self) -> CoverSet {
        let mut c = CoverSet::empty(self.cfg.alpha, self.cfg.eps, false);
        if let Some(r) = &self.round {
            c.pairs.extend(r.members.iter().map(|(&j, t)| (j, t.estimate())));
        }
        c
    }

    pub fn on_arrival(&mut self, time: u64, site: SiteId, item: ItemId, ledger: &mut CommLedger) {
        let mut touched = std::mem::take(&mut self.touched);
        self.hh.arrive(site, item, ledger, &mut touched);
        self.sum.on_arrival(site, item, ledger);

        let Some(round) = self.round.as_mut() else {
            self.start_round(time, ledger);
            self.admit(None, ledger);
            self.touched = touched;
            return;
        };
        if let Some(t) = round.members.get_mut(&item) {
            if t.on_arrival(site, ledger) {
                round.phases += 1;
            }
        }
        if round.phases as f64 > self.cfg.phase_limit() {
            self.restart(time, RoundEnd::Phases, ledger);
        } else if self.sum.estimate_fp() as f64 > 4.0 * round.f_hat {
            self.restart(time, RoundEnd::Growth, ledger);
        } else {
            let selected = self.hh.selected();
            let candidate = if selected != self.selected {
                None
            } else if selected.is_some_and(|t| touched.contains(&t)) {
                Some(item)
            } else {
                self.touched = touched;
                return;
            };
            if !self.admit(candidate, ledger) {
                self.restart(time, RoundEnd::Admissions, ledger);
            }
        }
        self.touched = touched;
    }

    fn restart(&mut self, time: u64, why: RoundEnd, ledger: &mut CommLedger) {
        let fp = self.exact_fp();
        if let Some(last) = self.records.last_mut() {
            last.end_time = Some(time);
            last.end = Some(why);
            last.fp_end = Some(fp);
        }
        self.start_round(time, ledger);
        self.admit(None, ledger);
    }

    /// Admits indices whose heavy-hitter estimate clears the threshold:
    /// only `item` when given, otherwise every index with an estimate.
    /// Returns false when the admission budget is exceeded; nothing is
    /// admitted in that case.
    fn admit(&mut self, item: Option<ItemId>, ledger: &mut CommLedger) -> bool {
        self.selected = self.hh.selected();
        let Some(t) = self.selected else {
            return true;
        };
        let round = self.round.as_mut().expect("round in progress");
        let coord = self.hh.instance(t).coordinator();
        let new: Vec<ItemId> = match item {
            Some(j) => vec![j],
            None => coord.estimates().into_keys().collect(),
        }
        .into_iter()
        .filter(|j| !round.members.contains_key(j) && coord.estimate(*j) >= round.threshold)
        .collect();
        if new.is_empty() {
            return true;
        }
        let grown = (round.members.len() + new.len()).saturating_sub(round.initial);
        if grown as f64 > self.cfg.admission_limit() {
            return false;
        }
        let quantum = self.cfg.eps * self.cfg.eps * round.f_hat;
        for j in new {
            // learn v_j: request, k replies, then announce the phase
            ledger.broadcast(1);
            for s in 0..self.cfg.k {
                ledger.charge_messages(s, 1);
            }
            ledger.broadcast(1);
            let count = self.sum.global_count(j);
            round
                .members
                .insert(j, VjpTracker::new(j, self.cfg.p, self.cfg.k, quantum, count, self.coins, ledger));
        }
        true
    }

    fn start_round(&mut self, time: u64, ledger: &mut CommLedger) {
        let idx = self.records.len() as u64;
        let rng = self.rng.derive(&[idx]);
        let inp = self.sum.snapshot(self.cfg.n);
        let p = self.cfg.p;

        let mut f_hat = None;
        for attempt in 0..2u64 {
            match fp_static(&inp, p, self.cfg.f_hat_eps, 2, &rng.derive(&[1, attempt]), ledger) {
                Ok(out) if out.estimate > 0.0 => {
                    f_hat = Some(out.estimate);
                    break;
                }
                _ => {}
            }
        }
        let f_hat = f_hat.unwrap_or_else(|| {
            self.static_failures += 1;
            (self.sum.estimate_fp() as f64).max(1.0)
        });

        let cover = match cover_two_round(&inp, p, self.cfg.round_cover_alpha(), &rng.derive(&[2]), ledger) {
            Ok(c) => c,
            Err(_) => {
                self.static_failures += 1;
                CoverSet::empty(self.cfg.round_cover_alpha(), 0.0, true)
            }
        };
        let quantum = self.cfg.eps * self.cfg.eps * f_hat;
        let global = inp.global();
        let mut members = BTreeMap::new();
        for (j, _) in cover.iter() {
            // the cover's second round already delivered v_j; announce the phase
            ledger.broadcast(1);
            members.insert(
                j,
                VjpTracker::new(j, p, self.cfg.k, quantum, global.get(j), self.coins, ledger),
            );
        }
        self.records.push(RoundRecord {
            start_time: time,
            end_time: None,
            end: None,
            f_hat,
            fp_start: moments(&global, p).map(|m| m.fp as f64).unwrap_or(f64::INFINITY),
            fp_end: None,
            initial_members: members.len(),
        });
        self.round = Some(Round {
            f_hat,
            threshold: self.cfg.admission_threshold(f_hat),
            initial: members.len(),
            phases: 0,
            members,
        });
    }
}
