use crate::freq::{ItemId, SiteId};
use crate::ledger::CommLedger;
use crate::rng::PublicCoins;

use super::threshold::ThresholdTracker;

/// Public uniform draws on `[0, 1)`, indexed by item and phase.
pub trait UnitDraws {
    fn unit(&self, item: ItemId, phase: u64) -> f64;
}

impl UnitDraws for PublicCoins {
    fn unit(&self, item: ItemId, phase: u64) -> f64 {
        PublicCoins::unit(self, item as u64, phase)
    }
}

/// Smallest integer `v` with `v^p >= x`.
pub fn min_root_at_least(x: f64, p: u32) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let pow = |v: u64| (v as f64).powi(p as i32);
    let mut v = x.powf(1.0 / p as f64).floor() as u64;
    while v > 0 && pow(v - 1) >= x {
        v -= 1;
    }
    while pow(v) < x {
        v += 1;
    }
    v
}

/// Tracks `v_j^p` in phases of growth `quantum = eps^2 F̂`.
///
/// At a phase start the coordinator knows `v_j(t_s)` exactly and both
/// parties read `r ~ U[0, quantum)` from public coins. The estimate jumps to
/// `v_j^p(t_s) + quantum` once `v_j^p >= v_j^p(t_s) + r`, which happens
/// with probability `(v_j^p - v_j^p(t_s)) / quantum`; the phase ends when
/// `v_j^p >= v_j^p(t_s) + quantum`.
#[derive(Debug, Clone)]
pub struct VjpTracker<C: UnitDraws = PublicCoins> {
    item: ItemId,
    p: u32,
    k: usize,
    quantum: f64,
    coins: C,
    phase: u64,
    start_count: u64,
    start_pow: f64,
    jumped: bool,
    alg1: ThresholdTracker,
    alg2: ThresholdTracker,
}

impl<C: UnitDraws> VjpTracker<C> {
    /// Starts the first phase at the exact global count `count`. The caller
    /// pays for learning `count`.
    pub fn new(item: ItemId, p: u32, k: usize, quantum: f64, count: u64, coins: C, ledger: &mut CommLedger) -> Self {
        assert!(quantum > 0.0, "phase quantum must be positive");
        let mut t = Self {
            item,
            p,
            k,
            quantum,
            coins,
            phase: 0,
            start_count: 0,
            start_pow: 0.0,
            jumped: false,
            alg1: ThresholdTracker::new(k, 0, 0, ledger),
            alg2: ThresholdTracker::new(k, 0, 0, ledger),
        };
        t.start_phase(count, ledger);
        t
    }

    fn start_phase(&mut self, count: u64, ledger: &mut CommLedger) {
        let r = self.coins.unit(self.item, self.phase) * self.quantum;
        self.start_count = count;
        self.start_pow = (count as f64).powi(self.p as i32);
        self.alg1 = ThresholdTracker::new(self.k, min_root_at_least(self.start_pow + r, self.p), count, ledger);
        self.alg2 = ThresholdTracker::new(
            self.k,
            min_root_at_least(self.start_pow + self.quantum, self.p),
            count,
            ledger,
        );
        self.jumped = self.alg1.fired();
    }

    pub fn item(&self) -> ItemId {
        self.item
    }

    pub fn phase(&self) -> u64 {
        self.phase
    }

    pub fn start_count(&self) -> u64 {
        self.start_count
    }

    /// Count at which the current phase ends.
    pub fn phase_end_count(&self) -> u64 {
        self.alg2.target()
    }

    pub fn estimate(&self) -> f64 {
        if self.jumped {
            self.start_pow + self.quantum
        } else {
            self.start_pow
        }
    }

    /// One arrival of the tracked item at `site`. Returns true when it
    /// completes a phase.
    pub fn on_arrival(&mut self, site: SiteId, ledger: &mut CommLedger) -> bool {
        if self.alg1.on_arrival(site, ledger) {
            self.jumped = true;
        }
        if !self.alg2.on_arrival(site, ledger) {
            return false;
        }
        let count = self.alg2.known();
        self.phase += 1;
        // announce the new phase; thresholds follow from public coins
        ledger.broadcast(1);
        self.start_phase(count, ledger);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(f64);

    impl UnitDraws for Fixed {
        fn unit(&self, _: ItemId, _: u64) -> f64 {
            self.0
        }
    }

    #[test]
    fn roots() {
        assert_eq!(min_root_at_least(25.0, 2), 5);
        assert_eq!(min_root_at_least(25.5, 2), 6);
        assert_eq!(min_root_at_least(0.0, 3), 0);
        assert_eq!(min_root_at_least(0.3, 3), 1);
        assert_eq!(min_root_at_least(1e12, 3), 10_000);
    }

    #[test]
    fn phase_start_and_end() {
        let mut l = CommLedger::new(2, 4);
        let mut t = VjpTracker::new(0, 2, 2, 16.0, 3, Fixed(0.5), &mut l);
        assert_eq!(t.estimate(), 9.0);
        assert_eq!(t.phase_end_count(), 5);
        // r = 8: jump once v^2 >= 17, i.e. v = 5, which also ends the phase
        assert!(!t.on_arrival(0, &mut l));
        assert_eq!(t.estimate(), 9.0);
        assert!(t.on_arrival(1, &mut l));
        assert_eq!(t.phase(), 1);
        assert_eq!(t.estimate(), 25.0);
    }

    #[test]
    fn small_draw_jumps_early() {
        let mut l = CommLedger::new(1, 4);
        let mut t = VjpTracker::new(0, 2, 1, 16.0, 3, Fixed(0.1), &mut l);
        // r = 1.6: v = 4 gives 16 >= 10.6
        t.on_arrival(0, &mut l);
        assert_eq!(t.estimate(), 25.0);
    }
}
