use std::collections::BTreeMap;

use distfreq::fp_tracking::{FpTracking, FpTrackingConfig};
use distfreq::hh_static::{boost_reps, l2hh_static, lphh_one_round, lphh_two_round};
use distfreq::hh_tracking::{L2HhTracking, L2Instance, LpHhTracking};
use distfreq::netsim::{StreamEvent, TrackingProtocol};
use distfreq::recsketch::fp_static;
use distfreq::rng::purpose;
use distfreq::{CommLedger, ItemId, PartitionedInput, SeededRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ProtocolId};
use crate::countsketch::count_sketch_hh;
use crate::generate::{generate_stream, partition};
use crate::oracle::Exact;
use crate::stats::{mean, power_law_exponent, rate, variance};
use crate::HarnessError;

/// One estimate checked against the oracle. `item` is empty for moment
/// estimates. Ledger columns are cumulative at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub t: u64,
    pub item: Option<ItemId>,
    pub estimate: f64,
    pub exact: f64,
    pub abs_err: f64,
    pub bound: f64,
    pub covered: bool,
    pub bits: u64,
    pub messages: u64,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

/// Statistics of one `(t, item)` cell across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub t: u64,
    pub item: Option<ItemId>,
    pub count: usize,
    pub mean_estimate: f64,
    pub var_estimate: f64,
    pub mean_exact: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub rows: usize,
    pub coverage: f64,
    pub mean_abs_err: f64,
    /// Means over trials of the ledger at each trial's last checkpoint.
    pub mean_bits: f64,
    pub mean_messages: f64,
    pub mean_rounds: f64,
    pub cells: Vec<CellStats>,
}

impl Aggregate {
    /// Deterministic reduction of per-trial rows.
    pub fn from_rows(rows: &[TrialRow]) -> Self {
        let mut last: BTreeMap<usize, &TrialRow> = BTreeMap::new();
        let mut cells: BTreeMap<(u64, Option<ItemId>), Vec<&TrialRow>> = BTreeMap::new();
        for r in rows {
            let e = last.entry(r.trial).or_insert(r);
            if r.t > e.t {
                *e = r;
            }
            cells.entry((r.t, r.item)).or_default().push(r);
        }
        let col = |f: &dyn Fn(&TrialRow) -> f64| -> Vec<f64> { last.values().map(|r| f(r)).collect() };
        let abs: Vec<f64> = rows.iter().map(|r| r.abs_err).collect();
        Self {
            trials: last.len(),
            rows: rows.len(),
            coverage: rate(rows.iter().map(|r| r.covered)),
            mean_abs_err: mean(&abs),
            mean_bits: mean(&col(&|r| r.bits as f64)),
            mean_messages: mean(&col(&|r| r.messages as f64)),
            mean_rounds: mean(&col(&|r| r.rounds as f64)),
            cells: cells
                .into_iter()
                .map(|((t, item), rs)| {
                    let est: Vec<f64> = rs.iter().map(|r| r.estimate).collect();
                    let exact: Vec<f64> = rs.iter().map(|r| r.exact).collect();
                    CellStats {
                        t,
                        item,
                        count: rs.len(),
                        mean_estimate: mean(&est),
                        var_estimate: variance(&est),
                        mean_exact: mean(&exact),
                        coverage: rate(rs.iter().map(|r| r.covered)),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialRow>,
    pub failures: Vec<TrialFailure>,
    pub aggregate: Aggregate,
}

impl TrialReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Input of `trial`: shared by all trials when `fixed_input` is set.
pub fn trial_stream(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<StreamEvent>, HarnessError> {
    let base = SeededRng::new(cfg.seed, 0);
    let rng = if cfg.fixed_input {
        base.derive(&[purpose::GENERATOR])
    } else {
        base.derive(&[purpose::TRIAL, trial as u64, purpose::GENERATOR])
    };
    generate_stream(cfg.generator, cfg.k, cfg.n, cfg.m, &rng)
}

/// Protocol randomness of `trial`.
pub fn trial_rng(cfg: &ExperimentConfig, trial: usize) -> SeededRng {
    SeededRng::new(cfg.seed, 0).derive(&[purpose::TRIAL, trial as u64, purpose::COORDINATOR])
}

struct Snapshot<'a> {
    trial: usize,
    t: u64,
    ledger: &'a CommLedger,
    rounds: u64,
}

impl Snapshot<'_> {
    fn row(&self, item: Option<ItemId>, estimate: f64, exact: f64, bound: f64) -> TrialRow {
        let abs_err = (estimate - exact).abs();
        TrialRow {
            trial: self.trial,
            t: self.t,
            item,
            estimate,
            exact,
            abs_err,
            bound,
            covered: abs_err <= bound,
            bits: self.ledger.total_bits,
            messages: self.ledger.total_messages,
            rounds: self.rounds,
        }
    }
}

/// Additive error allowed for item estimates of `protocol` on `inp`.
pub fn item_bound(protocol: ProtocolId, inp: &PartitionedInput, p: u32, eps: f64) -> Result<f64, HarnessError> {
    Ok(match protocol {
        ProtocolId::L2hhStatic | ProtocolId::L2hhTracking => eps * Exact::new(inp, 2)?.lp_prime(),
        ProtocolId::CountSketch => eps * Exact::new(inp, 2)?.lp(),
        _ => 2.0 * eps * Exact::new(inp, p)?.lp_prime(),
    })
}

fn item_rows(
    snap: &Snapshot,
    inp: &PartitionedInput,
    cfg: &ExperimentConfig,
    est: impl Fn(ItemId) -> f64,
) -> Result<Vec<TrialRow>, HarnessError> {
    let bound = item_bound(cfg.protocol, inp, cfg.p, cfg.eps)?;
    let exact = Exact::new(inp, 1)?;
    Ok(exact
        .support()
        .map(|j| snap.row(Some(j), est(j), exact.v(j) as f64, bound))
        .collect())
}

fn moment_row(snap: &Snapshot, inp: &PartitionedInput, cfg: &ExperimentConfig, est: f64) -> Result<TrialRow, HarnessError> {
    let fp = Exact::new(inp, cfg.p)?.fp as f64;
    Ok(snap.row(None, est, fp, cfg.eps * fp))
}

fn run_static(cfg: &ExperimentConfig, trial: usize, events: &[StreamEvent]) -> Result<Vec<TrialRow>, HarnessError> {
    let inp = partition(events, cfg.k, cfg.n, cfg.m);
    let rng = trial_rng(cfg, trial);
    let mut ledger = CommLedger::new(cfg.k, cfg.n);
    let estimates: Result<BTreeMap<ItemId, f64>, HarnessError> = match cfg.protocol {
        ProtocolId::L2hhStatic => Ok(l2hh_static(&inp, cfg.eps, &rng, &mut ledger)?.estimates),
        ProtocolId::LphhTwoRound => Ok(lphh_two_round(&inp, cfg.p, cfg.eps, &rng, &mut ledger)?.estimates),
        ProtocolId::LphhOneRound => {
            Ok(lphh_one_round(&inp, cfg.p, cfg.eps, boost_reps(cfg.n), &rng, &mut ledger)?.estimates)
        }
        ProtocolId::CountSketch => Ok(count_sketch_hh(&inp, cfg.eps, &rng, &mut ledger)),
        _ => Err(HarnessError::Config("not an item protocol".into())),
    };
    let moment = match cfg.protocol {
        ProtocolId::FpStatic => Some(fp_static(&inp, cfg.p, cfg.eps, 2, &rng, &mut ledger)?.estimate),
        ProtocolId::FpStaticOneRound => Some(fp_static(&inp, cfg.p, cfg.eps, 1, &rng, &mut ledger)?.estimate),
        _ => None,
    };
    check_ledger(&ledger)?;
    let snap = Snapshot {
        trial,
        t: cfg.m,
        ledger: &ledger,
        rounds: ledger.per_round_bits.len() as u64,
    };
    match moment {
        Some(est) => Ok(vec![moment_row(&snap, &inp, cfg, est)?]),
        None => {
            let est = estimates?;
            item_rows(&snap, &inp, cfg, |j| est.get(&j).copied().unwrap_or(0.0))
        }
    }
}

fn check_ledger(ledger: &CommLedger) -> Result<(), HarnessError> {
    if ledger.is_consistent() {
        Ok(())
    } else {
        Err(HarnessError::Config("ledger totals disagree with per-site and per-round totals".into()))
    }
}

enum Tracker {
    L2(L2HhTracking),
    Lp(LpHhTracking),
    Fp(FpTracking),
}

impl Tracker {
    fn new(cfg: &ExperimentConfig, rng: &SeededRng) -> Result<Self, HarnessError> {
        Ok(match cfg.protocol {
            ProtocolId::L2hhTracking => Tracker::L2(L2HhTracking::new(cfg.k, cfg.eps, cfg.m, rng)?),
            ProtocolId::LphhTracking => Tracker::Lp(LpHhTracking::new(cfg.k, cfg.p, cfg.eps, cfg.m, rng)?),
            ProtocolId::FpTracking => {
                Tracker::Fp(FpTracking::new(FpTrackingConfig::new(cfg.p, cfg.eps, cfg.k, cfg.n, cfg.m), rng)?)
            }
            p => return Err(HarnessError::Config(format!("{p} is not a tracking protocol"))),
        })
    }

    fn arrive(&mut self, e: &StreamEvent, ledger: &mut CommLedger, touched: &mut Vec<usize>) {
        match self {
            Tracker::L2(t) => t.on_event(e, ledger),
            Tracker::Lp(t) => {
                touched.clear();
                t.arrive(e.site, e.item, ledger, touched);
            }
            Tracker::Fp(t) => t.on_arrival(e.time, e.site, e.item, ledger),
        }
    }

    fn rounds(&self, k: usize) -> u64 {
        let site_rounds = |inst: &L2Instance| (0..k).map(|i| inst.site(i).round()).max().unwrap_or(0);
        match self {
            Tracker::L2(t) => site_rounds(t.instance()),
            Tracker::Lp(t) => t.selected().map(|s| site_rounds(t.instance(s))).unwrap_or(0),
            Tracker::Fp(t) => t.trackers().iter().map(|w| w.round_count() as u64).sum(),
        }
    }
}

fn run_tracking_trial(cfg: &ExperimentConfig, trial: usize, events: &[StreamEvent]) -> Result<Vec<TrialRow>, HarnessError> {
    let rng = trial_rng(cfg, trial);
    let mut tracker = Tracker::new(cfg, &rng)?;
    let mut ledger = CommLedger::new(cfg.k, cfg.n);
    let mut touched = Vec::new();
    let mut rows = Vec::new();
    let mut it = events.iter().peekable();
    for t in cfg.checkpoint_times() {
        while let Some(e) = it.next_if(|e| e.time <= t) {
            tracker.arrive(e, &mut ledger, &mut touched);
        }
        check_ledger(&ledger)?;
        let inp = partition(events, cfg.k, cfg.n, t);
        let snap = Snapshot {
            trial,
            t,
            ledger: &ledger,
            rounds: tracker.rounds(cfg.k),
        };
        match &tracker {
            Tracker::L2(tr) => rows.extend(item_rows(&snap, &inp, cfg, |j| tr.estimate(j))?),
            Tracker::Lp(tr) => rows.extend(item_rows(&snap, &inp, cfg, |j| tr.estimate(j))?),
            Tracker::Fp(tr) => rows.push(moment_row(&snap, &inp, cfg, tr.estimate())?),
        }
    }
    Ok(rows)
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<TrialRow>, HarnessError> {
    let events = trial_stream(cfg, trial)?;
    if cfg.protocol.is_tracking() {
        run_tracking_trial(cfg, trial, &events)
    } else {
        run_static(cfg, trial, &events)
    }
}

/// Runs every trial (in parallel, each on its own streams) and reduces the
/// rows in trial order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrialReport, HarnessError> {
    cfg.validate()?;
    let outcomes: Vec<Result<Vec<TrialRow>, HarnessError>> =
        (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (trial, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(TrialFailure {
                trial,
                message: e.to_string(),
            }),
        }
    }
    Ok(TrialReport {
        config: cfg.clone(),
        aggregate: Aggregate::from_rows(&rows),
        rows,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub eps: f64,
    pub mean_bits: f64,
    pub coverage: f64,
}

/// Mean ledger over a `k x eps` grid with log-log fits of the scaling in
/// `k` (at the first `eps`) and in `1/eps` (at the first `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub points: Vec<GridPoint>,
    pub k_exponent: Option<f64>,
    pub inv_eps_exponent: Option<f64>,
}

impl GridReport {
    pub fn from_points(points: Vec<GridPoint>) -> Self {
        let fit = |sel: Vec<(f64, f64)>| {
            (sel.len() >= 2).then(|| {
                let (x, y): (Vec<f64>, Vec<f64>) = sel.into_iter().unzip();
                power_law_exponent(&x, &y)
            })
        };
        let (k0, e0) = points.first().map(|p| (p.k, p.eps)).unwrap_or((0, 0.0));
        Self {
            k_exponent: fit(points.iter().filter(|p| p.eps == e0).map(|p| (p.k as f64, p.mean_bits)).collect()),
            inv_eps_exponent: fit(points.iter().filter(|p| p.k == k0).map(|p| (1.0 / p.eps, p.mean_bits)).collect()),
            points,
        }
    }
}

pub fn run_grid(base: &ExperimentConfig, ks: &[usize], epss: &[f64]) -> Result<(Vec<TrialReport>, GridReport), HarnessError> {
    let mut reports = Vec::new();
    let mut points = Vec::new();
    for &eps in epss {
        for &k in ks {
            let cfg = ExperimentConfig { k, eps, ..base.clone() };
            let r = run_experiment(&cfg)?;
            points.push(GridPoint {
                k,
                eps,
                mean_bits: r.aggregate.mean_bits,
                coverage: r.aggregate.coverage,
            });
            reports.push(r);
        }
    }
    Ok((reports, GridReport::from_points(points)))
}
