//! Recursive sketching: estimates `|u|` from covers of geometrically
//! subsampled copies `u^0 = u, u^1, ..., u^phi` of `u`, and the static `F_p`
//! protocols built on it (`u = v^p`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cover::{combine_sketches, select_top, CoverPlan, CoverSet, HhSketch, Selected};
use crate::error::{check_eps, check_p, Error, Result};
use crate::freq::{pow_exact, FrequencyVector, ItemId, PartitionedInput, SiteId};
use crate::ledger::{ceil_log2, CommLedger};
use crate::netsim::{run_rounds, Records, RoundProtocol, Step};
use crate::rng::{purpose, PublicCoins, SeededRng};

/// Largest support of `u^phi` for which `|u^phi|` is computed; beyond it the
/// estimator outputs 0.
pub const DEEP_SUPPORT_LIMIT: usize = 100;

/// Sign in front of the cover correction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecursionSign {
    /// `Y_l = 2 Y_{l+1} + sum (1 - 2 h_{l+1,i}) w`: exact whenever the cover
    /// holds every surviving index with its exact value.
    #[default]
    Plus,
    /// `Y_l = 2 Y_{l+1} - sum (1 - 2 h_{l+1,i}) w`.
    Minus,
}

pub fn default_phi(n: usize) -> usize {
    (ceil_log2(n as u64) as usize).max(1)
}

/// The public subsampling vectors `h_1, ..., h_phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subsampling {
    phi: usize,
    coins: PublicCoins,
}

impl Subsampling {
    pub fn new(phi: usize, coins: PublicCoins) -> Self {
        Self { phi, coins }
    }

    pub fn phi(&self) -> usize {
        self.phi
    }

    /// `h_{level, item}` for `level` in `1..=phi`.
    pub fn bit(&self, level: usize, item: ItemId) -> bool {
        self.coins.bit(level as u64, item as u64)
    }

    /// Largest `l` with `h_{1,item} = ... = h_{l,item} = 1`, so `item` is in
    /// the support of `u^0, ..., u^depth`.
    pub fn depth(&self, item: ItemId) -> usize {
        (1..=self.phi).take_while(|&l| self.bit(l, item)).count()
    }
}

/// Intermediate values of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchLevels {
    pub phi: usize,
    pub covers: Vec<CoverSet>,
    /// `Y_0, ..., Y_phi`; all zero when the deepest level was too large.
    pub y: Vec<f64>,
    pub deep_support: usize,
    pub overflow: bool,
}

impl SketchLevels {
    pub fn estimate(&self) -> f64 {
        self.y[0]
    }
}

/// `|u^phi|`, or `None` when its support exceeds [`DEEP_SUPPORT_LIMIT`].
pub fn deep_value(deep: impl IntoIterator<Item = f64>) -> (usize, Option<f64>) {
    let vals: Vec<f64> = deep.into_iter().filter(|&x| x != 0.0).collect();
    let support = vals.len();
    if support > DEEP_SUPPORT_LIMIT {
        (support, None)
    } else {
        (support, Some(vals.iter().sum()))
    }
}

/// Folds the recursion from `Y_phi` down to `Y_0`. `covers[l]` covers `u^l`
/// and `h(l, i)` is `h_{l,i}`.
pub fn y_recursion(covers: &[CoverSet], y_phi: f64, h: impl Fn(usize, ItemId) -> bool, sign: RecursionSign) -> Vec<f64> {
    let phi = covers.len();
    let mut y = vec![0.0; phi + 1];
    y[phi] = y_phi;
    for l in (0..phi).rev() {
        let correction: f64 = covers[l]
            .iter()
            .map(|(i, w)| if h(l + 1, i) { -w } else { w })
            .sum();
        y[l] = match sign {
            RecursionSign::Plus => 2.0 * y[l + 1] + correction,
            RecursionSign::Minus => 2.0 * y[l + 1] - correction,
        };
    }
    y
}

/// Evaluates the estimator on covers and the deepest level's values.
pub fn assemble(
    covers: Vec<CoverSet>,
    deep: impl IntoIterator<Item = f64>,
    h: impl Fn(usize, ItemId) -> bool,
    sign: RecursionSign,
) -> SketchLevels {
    let phi = covers.len();
    let (deep_support, y_phi) = deep_value(deep);
    match y_phi {
        Some(y_phi) => SketchLevels {
            phi,
            y: y_recursion(&covers, y_phi, h, sign),
            covers,
            deep_support,
            overflow: false,
        },
        None => SketchLevels {
            phi,
            y: vec![0.0; phi + 1],
            covers,
            deep_support,
            overflow: true,
        },
    }
}

/// Centralized recursive sketch of a non-negative vector `u`. `provider`
/// receives the level `l` and `u^l` and returns a cover of `u^l`.
pub fn recursive_sketch<F>(
    u: &BTreeMap<ItemId, f64>,
    phi: usize,
    h: impl Fn(usize, ItemId) -> bool,
    mut provider: F,
    sign: RecursionSign,
) -> Result<SketchLevels>
where
    F: FnMut(usize, &BTreeMap<ItemId, f64>) -> Result<CoverSet>,
{
    if phi == 0 {
        return Err(Error::Parameter("phi must be >= 1".into()));
    }
    let depth = |i: ItemId| (1..=phi).take_while(|&l| h(l, i)).count();
    let depths: BTreeMap<ItemId, usize> = u.keys().map(|&i| (i, depth(i))).collect();
    let level = |l: usize| -> BTreeMap<ItemId, f64> {
        u.iter()
            .filter(|(i, _)| depths[*i] >= l)
            .map(|(&i, &x)| (i, x))
            .collect()
    };
    let mut covers = Vec::with_capacity(phi);
    for l in 0..phi {
        covers.push(provider(l, &level(l))?);
    }
    Ok(assemble(covers, level(phi).into_values(), h, sign))
}

/// Cover holding the `cap` largest entries of `u` with exact values.
pub fn exact_top_cover(u: &BTreeMap<ItemId, f64>, cap: usize) -> CoverSet {
    let mut entries: Vec<(ItemId, f64)> = u.iter().filter(|(_, &x)| x > 0.0).map(|(&i, &x)| (i, x)).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut c = CoverSet::empty(0.0, 0.0, true);
    c.pairs.extend(entries.into_iter().take(cap));
    c
}

#[derive(Debug, Clone, PartialEq)]
pub enum FpUp {
    Sketches { levels: Vec<HhSketch>, deep: Vec<(ItemId, u64)> },
    Counts(Vec<(ItemId, u64)>),
}

impl Records for FpUp {
    fn records(&self) -> u64 {
        match self {
            FpUp::Sketches { levels, deep } => levels.iter().map(HhSketch::records).sum::<u64>() + deep.len() as u64,
            FpUp::Counts(c) => c.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpStaticOutput {
    pub estimate: f64,
    pub levels: SketchLevels,
}

/// Static `F_p` estimation: recursive sketching over `v^p` with all `phi`
/// covers computed side by side, in one round (approximate values) or two
/// (exact values of the selected indices).
#[derive(Debug, Clone)]
pub struct FpStatic {
    pub p: u32,
    pub rounds: u8,
    pub sub: Subsampling,
    pub plan: CoverPlan,
    pub sign: RecursionSign,
    selected: Vec<Vec<ItemId>>,
    deep: BTreeMap<ItemId, u64>,
}

impl FpStatic {
    pub fn new(p: u32, rounds: u8, sub: Subsampling, plan: CoverPlan, sign: RecursionSign) -> Self {
        Self {
            p,
            rounds,
            sub,
            plan,
            sign,
            selected: Vec::new(),
            deep: BTreeMap::new(),
        }
    }

    fn finish(&self, covers: Vec<CoverSet>) -> FpStaticOutput {
        let p = self.p;
        let deep = self.deep.values().map(|&v| (v as f64).powi(p as i32));
        let sub = self.sub;
        let levels = assemble(covers, deep, |l, i| sub.bit(l, i), self.sign);
        FpStaticOutput {
            estimate: levels.estimate(),
            levels,
        }
    }
}

impl RoundProtocol for FpStatic {
    type SiteState = ();
    type Up = FpUp;
    type Down = Selected;
    type Output = FpStaticOutput;

    fn round_limit(&self) -> usize {
        self.rounds as usize
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
    ) -> Vec<FpUp> {
        if round == 1 {
            let counts: Vec<(ItemId, u64)> = selected
                .iter()
                .map(|s| (s.0, local.get(s.0)))
                .filter(|&(_, c)| c > 0)
                .collect();
            return if counts.is_empty() { Vec::new() } else { vec![FpUp::Counts(counts)] };
        }
        let phi = self.sub.phi();
        let depth: BTreeMap<ItemId, usize> = local.iter().map(|(j, _)| (j, self.sub.depth(j))).collect();
        let levels = (0..phi)
            .map(|l| {
                let sub = local.restrict(|j| depth[&j] >= l);
                HhSketch::build(&self.plan.hh, &sub, &rng.derive(&[purpose::LEVEL, l as u64]))
            })
            .collect();
        let deep = local.iter().filter(|(j, _)| depth[j] >= phi).collect();
        vec![FpUp::Sketches { levels, deep }]
    }

    fn coordinator_step(&mut self, round: usize, inboxes: Vec<Vec<FpUp>>) -> Step<Selected, FpStaticOutput> {
        if round == 1 {
            let mut counts: BTreeMap<ItemId, u64> = BTreeMap::new();
            for msg in inboxes.into_iter().flatten() {
                if let FpUp::Counts(c) = msg {
                    for (j, v) in c {
                        *counts.entry(j).or_insert(0) += v;
                    }
                }
            }
            let covers = self
                .selected
                .iter()
                .map(|sel| {
                    let level: BTreeMap<ItemId, u64> =
                        sel.iter().filter_map(|j| counts.get(j).map(|&v| (*j, v))).collect();
                    self.plan.from_counts(&level)
                })
                .collect();
            return Step::Output(self.finish(covers));
        }
        let phi = self.sub.phi();
        let mut per_level: Vec<Vec<&HhSketch>> = vec![Vec::new(); phi];
        self.deep.clear();
        for msg in inboxes.iter().flatten() {
            if let FpUp::Sketches { levels, deep } = msg {
                for (l, s) in levels.iter().enumerate() {
                    per_level[l].push(s);
                }
                for &(j, v) in deep {
                    *self.deep.entry(j).or_insert(0) += v;
                }
            }
        }
        let estimates: Vec<_> = per_level
            .into_iter()
            .map(|s| combine_sketches(&self.plan.hh, s))
            .collect();
        if self.rounds == 1 {
            let covers = estimates.iter().map(|e| self.plan.from_estimate(e)).collect();
            return Step::Output(self.finish(covers));
        }
        self.selected = estimates.iter().map(|e| select_top(e, self.plan.cap())).collect();
        let mut union: Vec<ItemId> = self.selected.iter().flatten().copied().collect();
        union.sort_unstable();
        union.dedup();
        Step::Broadcast(union.into_iter().map(Selected).collect())
    }
}

/// Static `F_p` estimate with `phi = ceil(log2 n)` levels and covers at
/// `alpha = eps^2 / phi^3`.
pub fn fp_static(
    inp: &PartitionedInput,
    p: u32,
    eps: f64,
    rounds: u8,
    rng: &SeededRng,
    ledger: &mut CommLedger,
) -> Result<FpStaticOutput> {
    check_p(p, 2)?;
    check_eps(eps)?;
    let phi = default_phi(inp.n());
    let alpha = eps * eps / (phi as f64).powi(3);
    let plan = match rounds {
        1 => CoverPlan::one_round(p, alpha, eps, inp.k(), inp.n(), inp.total()),
        2 => CoverPlan::two_round(p, alpha, inp.k(), inp.n(), inp.total()),
        r => return Err(Error::Parameter(format!("rounds must be 1 or 2, got {r}"))),
    };
    let sub = Subsampling::new(phi, PublicCoins::from_rng(rng, &[purpose::PUBLIC]));
    let mut proto = FpStatic::new(p, rounds, sub, plan, RecursionSign::Plus);
    run_rounds(inp, &mut proto, &rng.derive(&[purpose::COORDINATOR]), ledger)
}

/// Exact `|u|` for `u = v^p` as a float, for callers that compare against
/// an estimate.
pub fn exact_fp(v: &FrequencyVector, p: u32) -> f64 {
    v.iter()
        .map(|(_, c)| pow_exact(c, p).map(|x| x as f64).unwrap_or(f64::INFINITY))
        .sum()
}
