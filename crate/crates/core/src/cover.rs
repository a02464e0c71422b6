//! Static (α, ε)-covers of `u = v^p`: a set of `(index, value)` pairs
//! holding every index with `u_j > α |u|`, each value within `(1 ± ε) u_j`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_eps, check_p, Error, Result};
use crate::freq::{FrequencyVector, ItemId, PartitionedInput, SiteId};
use crate::hh_static::{boost_reps, one_round_coordinator, one_round_site, HHEstimate, OneRoundParams, TauBatch};
use crate::ledger::CommLedger;
use crate::netsim::{run_rounds, Records, RoundProtocol, Step};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSet {
    pub pairs: BTreeMap<ItemId, f64>,
    pub alpha: f64,
    pub eps: f64,
    pub exact_values: bool,
}

impl CoverSet {
    pub fn empty(alpha: f64, eps: f64, exact_values: bool) -> Self {
        Self {
            pairs: BTreeMap::new(),
            alpha,
            eps,
            exact_values,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.pairs.contains_key(&item)
    }

    pub fn value(&self, item: ItemId) -> Option<f64> {
        self.pairs.get(&item).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.pairs.iter().map(|(&j, &w)| (j, w))
    }

    pub fn total(&self) -> f64 {
        self.pairs.values().sum()
    }
}

/// Number of items a cover keeps: `floor(4^p / alpha)`, at least 1.
pub fn cover_cap(p: u32, alpha: f64) -> usize {
    let cap = 4f64.powi(p as i32) / alpha;
    if cap >= usize::MAX as f64 {
        usize::MAX
    } else {
        (cap.floor() as usize).max(1)
    }
}

/// The `cap` largest positive estimates, ties broken by smaller index.
pub fn select_top(est: &HHEstimate, cap: usize) -> Vec<ItemId> {
    est.ranked()
        .into_iter()
        .filter(|&(_, x)| x > 0.0)
        .take(cap)
        .map(|(j, _)| j)
        .collect()
}

/// Accuracy of the heavy-hitter call inside a two-round cover.
pub fn two_round_hh_eps(p: u32, alpha: f64) -> f64 {
    alpha.powf(1.0 / p as f64) / 4.0
}

/// Accuracy of the heavy-hitter call inside a one-round cover:
/// `alpha^(1/p) eps / (8p)`.
pub fn one_round_hh_eps(p: u32, alpha: f64, eps: f64) -> f64 {
    alpha.powf(1.0 / p as f64) * eps / (8.0 * p as f64)
}

/// Shared parameters of a cover computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverPlan {
    pub p: u32,
    pub alpha: f64,
    /// Value accuracy; 0 for the two-round exact-value cover.
    pub eps: f64,
    pub hh: OneRoundParams,
}

impl CoverPlan {
    pub fn two_round(p: u32, alpha: f64, k: usize, n: usize, max_total: u64) -> Self {
        Self {
            p,
            alpha,
            eps: 0.0,
            hh: OneRoundParams {
                p,
                eps: two_round_hh_eps(p, alpha),
                k,
                max_total,
                reps: boost_reps(n),
            },
        }
    }

    pub fn one_round(p: u32, alpha: f64, eps: f64, k: usize, n: usize, max_total: u64) -> Self {
        Self {
            p,
            alpha,
            eps,
            hh: OneRoundParams {
                p,
                eps: one_round_hh_eps(p, alpha, eps),
                k,
                max_total,
                reps: boost_reps(n),
            },
        }
    }

    pub fn cap(&self) -> usize {
        cover_cap(self.p, self.alpha)
    }

    /// One-round cover from the coordinator's heavy-hitter estimate.
    pub fn from_estimate(&self, est: &HHEstimate) -> CoverSet {
        let mut cover = CoverSet::empty(self.alpha, self.eps, false);
        for j in select_top(est, self.cap()) {
            cover.pairs.insert(j, est.get(j).powi(self.p as i32));
        }
        cover
    }

    /// Two-round cover from exact global counts of the selected items.
    pub fn from_counts(&self, counts: &BTreeMap<ItemId, u64>) -> CoverSet {
        let mut cover = CoverSet::empty(self.alpha, 0.0, true);
        for (&j, &v) in counts {
            cover.pairs.insert(j, (v as f64).powi(self.p as i32));
        }
        cover
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must be positive, got {alpha}")))
    }
}

/// Round-0 payload of a site running one-round heavy hitters.
#[derive(Debug, Clone, PartialEq)]
pub struct HhSketch {
    pub fp: u128,
    pub batches: Vec<TauBatch>,
    records: u64,
}

impl HhSketch {
    pub fn build(plan: &OneRoundParams, local: &FrequencyVector, rng: &SeededRng) -> Self {
        let (fp, batches) = one_round_site(plan, local, rng);
        let records = 1 + plan.batch_records(&batches);
        Self { fp, batches, records }
    }

    pub fn records(&self) -> u64 {
        self.records
    }
}

/// Combines the sketches of all sites.
pub fn combine_sketches<'a>(plan: &OneRoundParams, sketches: impl IntoIterator<Item = &'a HhSketch>) -> HHEstimate {
    let sketches: Vec<&HhSketch> = sketches.into_iter().collect();
    let fps: Vec<u128> = sketches.iter().map(|s| s.fp).collect();
    let batches: Vec<&[TauBatch]> = sketches.iter().map(|s| s.batches.as_slice()).collect();
    one_round_coordinator(plan, &fps, &batches)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoverUp {
    Sketch(HhSketch),
    Counts(Vec<(ItemId, u64)>),
}

impl Records for CoverUp {
    fn records(&self) -> u64 {
        match self {
            CoverUp::Sketch(s) => s.records,
            CoverUp::Counts(c) => c.len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selected(pub ItemId);

impl Records for Selected {}

/// Two-round (α, 0)-cover: boosted one-round heavy hitters at
/// `eps = alpha^(1/p) / 4`, broadcast of the top `4^p / alpha` indices, exact
/// counts back.
#[derive(Debug, Clone)]
pub struct CoverTwoRound {
    pub plan: CoverPlan,
}

impl RoundProtocol for CoverTwoRound {
    type SiteState = ();
    type Up = CoverUp;
    type Down = Selected;
    type Output = CoverSet;

    fn round_limit(&self) -> usize {
        2
    }

    fn init_site(&self, _: SiteId) {}

    fn site_step(
        &self,
        round: usize,
        _: SiteId,
        _: &mut (),
        local: &FrequencyVector,
        selected: &[Selected],
        rng: &mut SeededRng,
    ) -> Vec<CoverUp> {
        if round == 0 {
            return vec![CoverUp::Sketch(HhSketch::build(&self.plan.hh, local, rng))];
        }
        let counts: Vec<(ItemId, u64)> = selected
            .iter()
            .map(|s| (s.0, local.get(s.0)))
            .filter(|&(_, c)| c > 0)
            .collect();
        if counts.is_empty() {
            Vec::new()
        } else {
            vec![CoverUp::Counts(counts)]
        }
    }

    fn coordinator_step(&mut self, round: usize, inboxes: Vec<Vec<CoverUp>>) -> Step<Selected, CoverSet> {
        if round == 0 {
            let sketches = inboxes.iter().flatten().filter_map(|m| match m {
                CoverUp::Sketch(s) => Some(s),
                CoverUp::Counts(_) => None,
            });
            let est = combine_sketches(&self.plan.hh, sketches);
            return Step::Broadcast(select_top(&est, self.plan.cap()).into_iter().map(Selected).collect());
        }
        let mut counts = BTreeMap::new();
        for msg in inboxes.into_iter().flatten() {
            if let CoverUp::Counts(c) = msg {
                for (j, v) in c {
                    *counts.entry(j).or_insert(0u64) += v;
                }
            }
        }
        Step::Output(self.plan.from_counts(&counts))
    }
}

/// One-round (α, ε)-cover: boosted one-round heavy hitters at
/// `alpha^(1/p) eps / (8p)`, values `v̂_j^p` of the top `4^p / alpha`.
#[derive(Debug, Clone)]
pub struct CoverOneRound {
    pub plan: CoverPlan,
}

impl RoundProtocol for CoverOneRound {
    type SiteState = ();
    type Up = CoverUp;
    type Down = Selected;
    type Output = CoverSet;

    fn round_limit(&self) -> usize {
        1
    }

    fn init_site(&self, _: SiteId) {}

    fn site_step(
        &self,
        _: usize,
        _: SiteId,
        _: &mut (),
        local: &FrequencyVector,
        _: &[Selected],
        rng: &mut SeededRng,
    ) -> Vec<CoverUp> {
        vec![CoverUp::Sketch(HhSketch::build(&self.plan.hh, local, rng))]
    }

    fn coordinator_step(&mut self, _: usize, inboxes: Vec<Vec<CoverUp>>) -> Step<Selected, CoverSet> {
        let sketches = inboxes.iter().flatten().filter_map(|m| match m {
            CoverUp::Sketch(s) => Some(s),
            CoverUp::Counts(_) => None,
        });
        let est = combine_sketches(&self.plan.hh, sketches);
        Step::Output(self.plan.from_estimate(&est))
    }
}

pub fn cover_two_round(
    inp: &PartitionedInput,
    p: u32,
    alpha: f64,
    rng: &SeededRng,
    ledger: &mut CommLedger,
) -> Result<CoverSet> {
    check_p(p, 2)?;
    check_alpha(alpha)?;
    let plan = CoverPlan::two_round(p, alpha, inp.k(), inp.n(), inp.total());
    run_rounds(inp, &mut CoverTwoRound { plan }, rng, ledger)
}

pub fn cover_one_round(
    inp: &PartitionedInput,
    p: u32,
    alpha: f64,
    eps: f64,
    rng: &SeededRng,
    ledger: &mut CommLedger,
) -> Result<CoverSet> {
    check_p(p, 2)?;
    check_alpha(alpha)?;
    check_eps(eps)?;
    let plan = CoverPlan::one_round(p, alpha, eps, inp.k(), inp.n(), inp.total());
    run_rounds(inp, &mut CoverOneRound { plan }, rng, ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::moments;

    fn skewed() -> PartitionedInput {
        // v = (10, 1, 1) split over two sites
        PartitionedInput::from_dense(&[&[6, 1, 0], &[4, 0, 1]]).unwrap()
    }

    #[test]
    fn cap_values() {
        assert_eq!(cover_cap(2, 0.5), 32);
        assert_eq!(cover_cap(3, 100.0), 1);
        assert_eq!(cover_cap(2, 1e-300), usize::MAX);
    }

    #[test]
    fn one_round_eps_formula() {
        let e = one_round_hh_eps(2, 0.25, 0.2);
        assert!((e - 0.5 * 0.2 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn two_round_cover_holds_exact_powers() {
        let inp = skewed();
        let mut l = CommLedger::new(2, 3);
        let c = cover_two_round(&inp, 2, 0.5, &SeededRng::new(1, 0), &mut l).unwrap();
        assert!(c.exact_values);
        assert_eq!(c.value(0), Some(100.0));
        for (j, w) in c.iter() {
            assert_eq!(w, (inp.global().get(j) as f64).powi(2));
        }
        assert!(c.len() <= cover_cap(2, 0.5));
    }

    #[test]
    fn one_round_cover_contains_heavy_item() {
        let inp = skewed();
        let mut l = CommLedger::new(2, 3);
        let c = cover_one_round(&inp, 2, 0.5, 0.2, &SeededRng::new(2, 0), &mut l).unwrap();
        let w = c.value(0).unwrap();
        let u = moments(&FrequencyVector::from_dense(&[10]), 2).unwrap().fp as f64;
        assert!((w - u).abs() <= 0.2 * u);
    }

    #[test]
    fn cover_of_empty_input_is_empty() {
        let inp = PartitionedInput::empty(3, 4);
        let mut l = CommLedger::new(3, 4);
        assert!(cover_two_round(&inp, 2, 0.5, &SeededRng::new(0, 0), &mut l).unwrap().is_empty());
    }

    #[test]
    fn selection_breaks_ties_by_index() {
        let mut est = HHEstimate::zero(0.1, crate::hh_static::GuaranteeNorm::LpPrime, 2);
        est.estimates.insert(5, 2.0);
        est.estimates.insert(1, 2.0);
        est.estimates.insert(3, 7.0);
        assert_eq!(select_top(&est, 2), vec![3, 1]);
    }
}
