//! One-shot heavy-hitter estimation in the coordinator model.
//!
//! The building block is ℓ2 sampling: site `i` ships `v_ij` with probability
//! `min(1, 3 v_ij^2 / (eps^2 F2(v^(i))))` and the coordinator sums the
//! inverse-probability weighted values. ℓp estimation sparsifies the local
//! vectors first and runs ℓ2 sampling at a reduced accuracy; the one-round
//! variant runs every power-of-two guess of `ℓp'` in parallel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_eps, check_p, Error, Result};
use crate::freq::{pow_exact, root, sparsify, FrequencyVector, ItemId, PartitionedInput, SiteId};
use crate::ledger::{ceil_log2, CommLedger};
use crate::netsim::{run_rounds, Records, RoundProtocol, Step};
use crate::rng::{purpose, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuaranteeNorm {
    L2Prime,
    LpPrime,
}

/// Per-item frequency estimates. Items never sampled read as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HHEstimate {
    pub estimates: BTreeMap<ItemId, f64>,
    pub eps: f64,
    pub guarantee: GuaranteeNorm,
    pub p: u32,
}

impl HHEstimate {
    pub fn zero(eps: f64, guarantee: GuaranteeNorm, p: u32) -> Self {
        Self {
            estimates: BTreeMap::new(),
            eps,
            guarantee,
            p,
        }
    }

    pub fn get(&self, item: ItemId) -> f64 {
        self.estimates.get(&item).copied().unwrap_or(0.0)
    }

    /// Items ordered by decreasing estimate, ties by increasing id.
    pub fn ranked(&self) -> Vec<(ItemId, f64)> {
        let mut v: Vec<(ItemId, f64)> = self.estimates.iter().map(|(&j, &x)| (j, x)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// Sampling probability of one local entry.
pub fn l2_send_probability(v: f64, local_f2: f64, eps: f64) -> f64 {
    if local_f2 <= 0.0 {
        return 0.0;
    }
    (3.0 * v * v / (eps * eps * local_f2)).min(1.0)
}

/// Accuracy handed to ℓ2 sampling when estimating ℓp heavy hitters on
/// sparsified vectors: `eps^(p/2) / k^(p/2 - 1)`.
pub fn lp_reduced_eps(p: u32, eps: f64, k: usize) -> f64 {
    let half = p as f64 / 2.0;
    eps.powf(half) / (k as f64).powf(half - 1.0)
}

/// Number of independent repetitions used to push the per-item failure
/// probability down to `1/n^2`: `ceil(48 ln n)`, rounded up to odd.
pub fn boost_reps(n: usize) -> usize {
    let r = (48.0 * (n.max(1) as f64).ln()).ceil() as usize;
    let r = r.max(1);
    if r.is_multiple_of(2) {
        r + 1
    } else {
        r
    }
}

fn local_f2(entries: impl Iterator<Item = (ItemId, u64)>) -> f64 {
    entries.map(|(_, v)| (v as f64) * (v as f64)).sum()
}

/// Site side of ℓ2 sampling. Returns `(item, v_ij / p_ij)` for every sent entry.
pub(crate) fn l2_site_sample(local: &FrequencyVector, eps: f64, rng: &mut SeededRng) -> Vec<(ItemId, f64)> {
    let f2 = local_f2(local.iter());
    if f2 <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (j, v) in local.iter() {
        let p = l2_send_probability(v as f64, f2, eps);
        if rng.bernoulli(p) {
            out.push((j, v as f64 / p));
        }
    }
    out
}

/// True when every entry is sent with certainty, i.e. the site's output does
/// not depend on its random stream.
pub(crate) fn l2_site_is_deterministic(local: &FrequencyVector, eps: f64) -> bool {
    let f2 = local_f2(local.iter());
    local
        .iter()
        .all(|(_, v)| l2_send_probability(v as f64, f2, eps) >= 1.0)
}

fn accumulate(samples: impl IntoIterator<Item = (ItemId, f64)>, into: &mut BTreeMap<ItemId, f64>) {
    for (j, x) in samples {
        *into.entry(j).or_insert(0.0) += x;
    }
}

/// Per-item median over runs; an item missing from a run counts as 0.
pub fn median_per_item(runs: &[BTreeMap<ItemId, f64>]) -> BTreeMap<ItemId, f64> {
    let mut items: Vec<ItemId> = runs.iter().flat_map(|r| r.keys().copied()).collect();
    items.sort_unstable();
    items.dedup();
    let mut out = BTreeMap::new();
    let mut column = Vec::with_capacity(runs.len());
    for j in items {
        column.clear();
        column.extend(runs.iter().map(|r| r.get(&j).copied().unwrap_or(0.0)));
        column.sort_by(f64::total_cmp);
        let mid = column.len() / 2;
        let med = if column.len() % 2 == 1 {
            column[mid]
        } else {
            0.5 * (column[mid - 1] + column[mid])
        };
        if med != 0.0 {
            out.insert(j, med);
        }
    }
    out
}

/// Runs `runner` `reps` times on independent streams and keeps the per-item
/// median.
pub fn median_boost<F>(reps: usize, rng: &SeededRng, mut runner: F) -> Result<HHEstimate>
where
    F: FnMut(&SeededRng) -> Result<HHEstimate>,
{
    if reps == 0 || reps.is_multiple_of(2) {
        return Err(Error::Parameter(format!("reps must be odd and >= 1, got {reps}")));
    }
    let mut runs = Vec::with_capacity(reps);
    let mut template = None;
    for r in 0..reps {
        let est = runner(&rng.derive(&[purpose::REPETITION, r as u64]))?;
        if template.is_none() {
            template = Some((est.eps, est.guarantee, est.p));
        }
        runs.push(est.estimates);
    }
    let (eps, guarantee, p) = template.expect("reps >= 1");
    if reps == 1 {
        return Ok(HHEstimate {
            estimates: runs.pop().unwrap(),
            eps,
            guarantee,
            p,
        });
    }
    Ok(HHEstimate {
        estimates: median_per_item(&runs),
        eps,
        guarantee,
        p,
    })
}

/// Index `t` of the power-of-two guess `tau = 2^t` with `tau <= ℓp' <= 2 tau`,
/// choosing the larger guess when both qualify. Decided exactly on `F_p'`.
/// `None` when `F_p' = 0`. The index is clamped to `max_t`.
pub fn select_tau(fp_prime: u128, p: u32, max_t: u32) -> Option<u32> {
    if fp_prime == 0 {
        return None;
    }
    let mut t = 0u32;
    while t < max_t {
        let exp = (t + 1) as u64 * p as u64;
        if exp >= 128 || (1u128 << exp) > fp_prime {
            break;
        }
        t += 1;
    }
    Some(t)
}

/// Number of power-of-two guesses `1, 2, ..., 2^ceil(log2 m)`.
pub fn tau_count(max_total: u64) -> u32 {
    ceil_log2(max_total.max(1)) + 1
}

#[derive(Debug, Clone, PartialEq)]
pub enum HhUp {
    /// `F_p` of the site's local vector.
    LocalMoment(u128),
    /// Inverse-probability weighted samples.
    Samples(Vec<(ItemId, f64)>),
}

impl Records for HhUp {
    fn records(&self) -> u64 {
        match self {
            HhUp::LocalMoment(_) => 1,
            HhUp::Samples(s) => s.len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpPrimeBroadcast(pub f64);

impl Records for LpPrimeBroadcast {}

/// Single-round ℓ2 heavy hitters.
#[derive(Debug, Clone)]
pub struct L2HhStatic {
    pub eps: f64,
}

impl RoundProtocol for L2HhStatic {
    type SiteState = ();
    type Up = HhUp;
    type Down = LpPrimeBroadcast;
    type Output = HHEstimate;

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
        _: &[LpPrimeBroadcast],
        rng: &mut SeededRng,
    ) -> Vec<HhUp> {
        let s = l2_site_sample(local, self.eps, rng);
        if s.is_empty() {
            Vec::new()
        } else {
            vec![HhUp::Samples(s)]
        }
    }

    fn coordinator_step(&mut self, _: usize, inboxes: Vec<Vec<HhUp>>) -> Step<LpPrimeBroadcast, HHEstimate> {
        let mut est = HHEstimate::zero(self.eps, GuaranteeNorm::L2Prime, 2);
        for msg in inboxes.into_iter().flatten() {
            if let HhUp::Samples(s) = msg {
                accumulate(s, &mut est.estimates);
            }
        }
        Step::Output(est)
    }
}

pub fn l2hh_static(inp: &PartitionedInput, eps: f64, rng: &SeededRng, ledger: &mut CommLedger) -> Result<HHEstimate> {
    check_eps(eps)?;
    run_rounds(inp, &mut L2HhStatic { eps }, rng, ledger)
}

/// Two-round ℓp heavy hitters: learn `ℓp'` exactly, broadcast it, sparsify
/// at `eps ℓp' / k` and sample at `eps^(p/2) / k^(p/2-1)`.
#[derive(Debug, Clone)]
pub struct LpHhTwoRound {
    pub p: u32,
    pub eps: f64,
    pub k: usize,
}

impl LpHhTwoRound {
    pub fn sparsify_threshold(&self, lp_prime: f64) -> f64 {
        self.eps * lp_prime / self.k as f64
    }
}

impl RoundProtocol for LpHhTwoRound {
    type SiteState = ();
    type Up = HhUp;
    type Down = LpPrimeBroadcast;
    type Output = HHEstimate;

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
        broadcast: &[LpPrimeBroadcast],
        rng: &mut SeededRng,
    ) -> Vec<HhUp> {
        if round == 0 {
            let fp = local
                .iter()
                .map(|(_, v)| pow_exact(v, self.p).unwrap_or(u128::MAX))
                .fold(0u128, u128::saturating_add);
            return vec![HhUp::LocalMoment(fp)];
        }
        let lp_prime = broadcast.first().map(|b| b.0).unwrap_or(0.0);
        let sparse = sparsify(local, self.sparsify_threshold(lp_prime));
        let eps = lp_reduced_eps(self.p, self.eps, self.k);
        let s = l2_site_sample(&sparse, eps, rng);
        if s.is_empty() {
            Vec::new()
        } else {
            vec![HhUp::Samples(s)]
        }
    }

    fn coordinator_step(&mut self, round: usize, inboxes: Vec<Vec<HhUp>>) -> Step<LpPrimeBroadcast, HHEstimate> {
        if round == 0 {
            let fp_prime = inboxes
                .iter()
                .flatten()
                .map(|m| match m {
                    HhUp::LocalMoment(f) => *f,
                    HhUp::Samples(_) => 0,
                })
                .fold(0u128, u128::saturating_add);
            return Step::Broadcast(vec![LpPrimeBroadcast(root(fp_prime, self.p))]);
        }
        let mut est = HHEstimate::zero(self.eps, GuaranteeNorm::LpPrime, self.p);
        for msg in inboxes.into_iter().flatten() {
            if let HhUp::Samples(s) = msg {
                accumulate(s, &mut est.estimates);
            }
        }
        Step::Output(est)
    }
}

pub fn lphh_two_round(
    inp: &PartitionedInput,
    p: u32,
    eps: f64,
    rng: &SeededRng,
    ledger: &mut CommLedger,
) -> Result<HHEstimate> {
    check_p(p, 2)?;
    check_eps(eps)?;
    run_rounds(inp, &mut LpHhTwoRound { p, eps, k: inp.k() }, rng, ledger)
}

/// Which repetitions a batch of samples stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepSel {
    /// Identical for every repetition (the site sent every entry with certainty).
    All,
    One(u32),
}

/// Samples of one `(guess, repetition)` ℓ2 instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TauBatch {
    pub tau_index: u32,
    pub reps: RepSel,
    pub samples: Vec<(ItemId, f64)>,
}

/// Parameters of the one-round ℓp estimator, shared by the site and
/// coordinator halves so that covers and `F_p` protocols can embed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneRoundParams {
    pub p: u32,
    pub eps: f64,
    pub k: usize,
    /// Upper bound on the stream length; fixes the number of guesses.
    pub max_total: u64,
    /// Independent repetitions combined by per-item median (odd).
    pub reps: usize,
}

impl OneRoundParams {
    pub fn tau_count(&self) -> u32 {
        tau_count(self.max_total)
    }

    pub fn threshold(&self, tau_index: u32) -> f64 {
        self.eps * (1u64 << tau_index) as f64 / self.k as f64
    }

    /// Messages one copy of the batches costs, counting repetitions.
    pub fn batch_records(&self, batches: &[TauBatch]) -> u64 {
        batches
            .iter()
            .map(|b| {
                let copies = match b.reps {
                    RepSel::All => self.reps as u64,
                    RepSel::One(_) => 1,
                };
                copies * b.samples.len() as u64
            })
            .sum()
    }
}

/// Site half: the exact local `F_p` plus every guess's samples.
pub fn one_round_site(params: &OneRoundParams, local: &FrequencyVector, rng: &SeededRng) -> (u128, Vec<TauBatch>) {
    let fp = local
        .iter()
        .map(|(_, v)| pow_exact(v, params.p).unwrap_or(u128::MAX))
        .fold(0u128, u128::saturating_add);
    let eps = lp_reduced_eps(params.p, params.eps, params.k);
    let mut batches = Vec::new();
    for t in 0..params.tau_count() {
        let sparse = sparsify(local, params.threshold(t));
        if sparse.is_empty() {
            continue;
        }
        if params.reps == 1 || l2_site_is_deterministic(&sparse, eps) {
            let mut r = rng.derive(&[purpose::INSTANCE, t as u64, purpose::REPETITION, 0]);
            let samples = l2_site_sample(&sparse, eps, &mut r);
            let reps = if params.reps == 1 { RepSel::One(0) } else { RepSel::All };
            batches.push(TauBatch { tau_index: t, reps, samples });
            continue;
        }
        for rep in 0..params.reps {
            let mut r = rng.derive(&[purpose::INSTANCE, t as u64, purpose::REPETITION, rep as u64]);
            let samples = l2_site_sample(&sparse, eps, &mut r);
            if !samples.is_empty() {
                batches.push(TauBatch {
                    tau_index: t,
                    reps: RepSel::One(rep as u32),
                    samples,
                });
            }
        }
    }
    (fp, batches)
}

/// Coordinator half: picks the guess matching the exact `ℓp'` and returns
/// the per-item median over repetitions of that guess.
pub fn one_round_coordinator(params: &OneRoundParams, local_moments: &[u128], batches: &[&[TauBatch]]) -> HHEstimate {
    let fp_prime = local_moments.iter().fold(0u128, |a, &b| a.saturating_add(b));
    let mut est = HHEstimate::zero(params.eps, GuaranteeNorm::LpPrime, params.p);
    let Some(t) = select_tau(fp_prime, params.p, params.tau_count() - 1) else {
        return est;
    };
    let mut shared = BTreeMap::new();
    let mut per_rep: Vec<BTreeMap<ItemId, f64>> = vec![BTreeMap::new(); params.reps];
    for b in batches.iter().flat_map(|s| s.iter()).filter(|b| b.tau_index == t) {
        match b.reps {
            RepSel::All => accumulate(b.samples.iter().copied(), &mut shared),
            RepSel::One(r) => accumulate(b.samples.iter().copied(), &mut per_rep[r as usize]),
        }
    }
    if per_rep.iter().all(BTreeMap::is_empty) {
        est.estimates = shared;
        return est;
    }
    for run in &mut per_rep {
        accumulate(shared.iter().map(|(&j, &x)| (j, x)), run);
    }
    est.estimates = median_per_item(&per_rep);
    est
}

#[derive(Debug, Clone, PartialEq)]
pub enum OneRoundUp {
    LocalMoment(u128),
    Batch(TauBatch),
}

/// One-round ℓp heavy hitters, optionally boosted by repetitions.
#[derive(Debug, Clone)]
pub struct LpHhOneRound {
    pub params: OneRoundParams,
}

pub struct OneRoundMessages {
    pub fp: u128,
    pub batches: Vec<TauBatch>,
    records: u64,
}

impl Records for OneRoundMessages {
    fn records(&self) -> u64 {
        self.records
    }
}

impl RoundProtocol for LpHhOneRound {
    type SiteState = ();
    type Up = OneRoundMessages;
    type Down = LpPrimeBroadcast;
    type Output = HHEstimate;

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
        _: &[LpPrimeBroadcast],
        rng: &mut SeededRng,
    ) -> Vec<OneRoundMessages> {
        let (fp, batches) = one_round_site(&self.params, local, rng);
        let records = 1 + self.params.batch_records(&batches);
        vec![OneRoundMessages { fp, batches, records }]
    }

    fn coordinator_step(&mut self, _: usize, inboxes: Vec<Vec<OneRoundMessages>>) -> Step<LpPrimeBroadcast, HHEstimate> {
        let msgs: Vec<&OneRoundMessages> = inboxes.iter().flatten().collect();
        let fps: Vec<u128> = msgs.iter().map(|m| m.fp).collect();
        let batches: Vec<&[TauBatch]> = msgs.iter().map(|m| m.batches.as_slice()).collect();
        Step::Output(one_round_coordinator(&self.params, &fps, &batches))
    }
}

pub fn lphh_one_round(
    inp: &PartitionedInput,
    p: u32,
    eps: f64,
    reps: usize,
    rng: &SeededRng,
    ledger: &mut CommLedger,
) -> Result<HHEstimate> {
    check_p(p, 2)?;
    check_eps(eps)?;
    if reps == 0 || reps.is_multiple_of(2) {
        return Err(Error::Parameter(format!("reps must be odd and >= 1, got {reps}")));
    }
    let params = OneRoundParams {
        p,
        eps,
        k: inp.k(),
        max_total: inp.total(),
        reps,
    };
    run_rounds(inp, &mut LpHhOneRound { params }, rng, ledger)
}
