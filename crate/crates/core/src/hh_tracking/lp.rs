use crate::error::{check_eps, check_p, Error, Result};
use crate::freq::{ItemId, SiteId};
use crate::hh_static::{select_tau, tau_count, GuaranteeNorm, HHEstimate};
use crate::ledger::CommLedger;
use crate::netsim::{StreamEvent, TrackingProtocol};
use crate::rng::{purpose, SeededRng};

use super::l2::{internal_eps, L2Instance};
use super::sum::LpPrimeTracker;

/// Accuracy of each ℓ2 instance: `eps^(p/2) / (2^(p-2) k^(p/2-1))`.
pub fn tracking_reduced_eps(p: u32, eps: f64, k: usize) -> f64 {
    let half = p as f64 / 2.0;
    eps.powf(half) / (2f64.powi(p as i32 - 2) * (k as f64).powf(half - 1.0))
}

/// Continuous ℓp heavy hitters. Instance `t` tracks the local vectors
/// shifted down by `eps 2^t / k`; queries read the instance whose guess
/// brackets the running `ℓp'` estimate.
///
/// A shifted value starts at the fractional remainder `v_ij - eps tau / k`
/// when `v_ij` first reaches the threshold. That jump is not a unit step and
/// is not reported, so the coordinator may miss less than 1 per `(i, j)`
/// until the next phase end.
#[derive(Debug, Clone)]
pub struct LpHhTracking {
    p: u32,
    eps: f64,
    thresholds: Vec<f64>,
    lp: LpPrimeTracker,
    instances: Vec<L2Instance>,
}

impl LpHhTracking {
    pub fn new(k: usize, p: u32, eps: f64, max_total: u64, rng: &SeededRng) -> Result<Self> {
        check_p(p, 2)?;
        check_eps(eps)?;
        if k == 0 {
            return Err(Error::Parameter("k must be >= 1".into()));
        }
        let inner = internal_eps(tracking_reduced_eps(p, eps, k), max_total);
        let count = tau_count(max_total);
        Ok(Self {
            p,
            eps,
            thresholds: (0..count).map(|t| eps * 2f64.powi(t as i32) / k as f64).collect(),
            lp: LpPrimeTracker::new(k, p, 0.5)?,
            instances: (0..count)
                .map(|t| L2Instance::new(k, inner, &rng.derive(&[purpose::INSTANCE, t as u64])))
                .collect(),
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn instance(&self, t: usize) -> &L2Instance {
        &self.instances[t]
    }

    pub fn lp_prime(&self) -> &LpPrimeTracker {
        &self.lp
    }

    /// Index of the instance answering queries now, `None` before any
    /// arrival.
    pub fn selected(&self) -> Option<usize> {
        select_tau(self.lp.estimate_fp(), self.p, self.instances.len() as u32 - 1).map(|t| t as usize)
    }

    pub fn estimate(&self, item: ItemId) -> f64 {
        self.selected()
            .map(|t| self.instances[t].coordinator().estimate(item))
            .unwrap_or(0.0)
    }

    /// Delivers an arrival. `touched` receives the indices of instances in
    /// which the coordinator's view of `item` may have changed.
    pub fn arrive(&mut self, site: SiteId, item: ItemId, ledger: &mut CommLedger, touched: &mut Vec<usize>) {
        touched.clear();
        let v = self.lp.on_arrival(site, item, ledger) as f64;
        for (t, inst) in self.instances.iter_mut().enumerate() {
            let thr = self.thresholds[t];
            if v < thr {
                break;
            }
            if v - 1.0 < thr {
                inst.activate(site, item, v - thr);
            } else if !inst.arrive(site, item, ledger).is_empty() {
                touched.push(t);
            }
        }
    }
}

impl TrackingProtocol for LpHhTracking {
    type Output = HHEstimate;

    fn on_event(&mut self, event: &StreamEvent, ledger: &mut CommLedger) {
        let mut touched = Vec::new();
        self.arrive(event.site, event.item, ledger, &mut touched);
    }

    fn query(&self, _: u64) -> HHEstimate {
        let mut est = HHEstimate::zero(self.eps, GuaranteeNorm::LpPrime, self.p);
        if let Some(t) = self.selected() {
            est.estimates = self.instances[t].coordinator().estimates();
        }
        est
    }
}
