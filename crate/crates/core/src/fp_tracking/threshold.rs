use crate::freq::SiteId;
use crate::ledger::CommLedger;

/// Exact thresholded-sum tracking by staged slack.
///
/// The coordinator knows the global count `known` exactly at the start of
/// every stage. With `R = target - known` remaining, each site reports once
/// per `floor(R / 2k)` local arrivals; after `k` reports the coordinator
/// collects exact counts and starts a new stage. Fewer than `2k` arrivals
/// fit in a stage, so the counter cannot reach the target unseen. Once
/// `R <= 2k` every arrival is reported.
#[derive(Debug, Clone)]
pub struct ThresholdTracker {
    target: u64,
    known: u64,
    slack: u64,
    since_report: Vec<u64>,
    since_stage: Vec<u64>,
    reports: usize,
    fired: bool,
}

impl ThresholdTracker {
    /// `initial` is the global count, known exactly at creation. The tracker
    /// fires once the count reaches `target`.
    pub fn new(k: usize, target: u64, initial: u64, ledger: &mut CommLedger) -> Self {
        let mut t = Self {
            target,
            known: initial,
            slack: 0,
            since_report: vec![0; k],
            since_stage: vec![0; k],
            reports: 0,
            fired: false,
        };
        t.stage(ledger, false);
        t
    }

    /// Smallest integer count reaching a real threshold `tau`.
    pub fn target_for(tau: f64) -> u64 {
        if tau <= 0.0 {
            0
        } else {
            tau.ceil() as u64
        }
    }

    pub fn fired(&self) -> bool {
        self.fired
    }

    pub fn target(&self) -> u64 {
        self.target
    }

    pub fn known(&self) -> u64 {
        self.known
    }

    fn k(&self) -> u64 {
        self.since_stage.len() as u64
    }

    fn stage(&mut self, ledger: &mut CommLedger, announce: bool) {
        if self.known >= self.target {
            self.fired = true;
            return;
        }
        let remaining = self.target - self.known;
        self.slack = if remaining <= 2 * self.k() {
            0
        } else {
            remaining / (2 * self.k())
        };
        self.since_report.iter_mut().for_each(|c| *c = 0);
        self.since_stage.iter_mut().for_each(|c| *c = 0);
        self.reports = 0;
        if announce {
            ledger.broadcast(1);
        }
    }

    /// One arrival at `site`. Returns true on the event that fires.
    pub fn on_arrival(&mut self, site: SiteId, ledger: &mut CommLedger) -> bool {
        if self.fired {
            return false;
        }
        self.since_stage[site] += 1;
        if self.slack == 0 {
            ledger.charge_messages(site, 1);
            self.known += 1;
            self.since_stage[site] = 0;
            if self.known >= self.target {
                self.fired = true;
            }
            return self.fired;
        }
        self.since_report[site] += 1;
        if self.since_report[site] < self.slack {
            return false;
        }
        self.since_report[site] = 0;
        ledger.charge_messages(site, 1);
        self.reports += 1;
        if self.reports < self.since_stage.len() {
            return false;
        }
        // collect exact counts: one request to every site, one reply each
        ledger.broadcast(1);
        for s in 0..self.since_stage.len() {
            ledger.charge_messages(s, 1);
        }
        self.known += self.since_stage.iter().sum::<u64>();
        self.stage(ledger, true);
        self.fired
    }
}
