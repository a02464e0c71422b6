//! Acceptance grid. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use distfreq::fp_tracking::{FpTracking, FpTrackingConfig, ThresholdTracker};
use distfreq::hh_static::{l2hh_static, lphh_two_round};
use distfreq::hh_tracking::L2HhTracking;
use distfreq::netsim::{StreamEvent, TrackingProtocol};
use distfreq::recsketch::{exact_top_cover, fp_static, recursive_sketch, RecursionSign};
use distfreq::rng::purpose;
use distfreq::{CommLedger, ItemId, SeededRng};
use distfreq_harness::generate::{generate_stream, partition};
use distfreq_harness::oracle::{prefix_inputs, Exact};
use distfreq_harness::output::csv_bytes;
use distfreq_harness::stats::rate;
use distfreq_harness::{run_experiment, run_grid, ExperimentConfig, Generator, ProtocolId};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn seed_rng(tag: u64) -> SeededRng {
    SeededRng::new(20_241_015, tag)
}

fn zipf_input(k: usize, n: usize, m: u64, s: f64, tag: u64) -> (Vec<StreamEvent>, distfreq::PartitionedInput) {
    let ev = generate_stream(Generator::Zipf { s }, k, n, m, &seed_rng(tag).derive(&[purpose::GENERATOR])).unwrap();
    let inp = partition(&ev, k, n, m);
    (ev, inp)
}

/// Shared Monte-Carlo run for the static ℓ2 criteria.
struct L2Static {
    exact: Exact,
    top: Vec<ItemId>,
    sums: Vec<(f64, f64)>,
    trials: usize,
    msgs_per_site_1e4: f64,
    elapsed: Duration,
}

fn l2_static_run() -> L2Static {
    const T: usize = 100_000;
    let (k, eps) = (4, 0.3);
    let (_, inp) = zipf_input(k, 256, 10_000, 1.1, 1);
    let exact = Exact::new(&inp, 2).unwrap();
    let top = exact.top(10);
    let mut sums = vec![(0.0, 0.0); top.len()];
    let mut msgs = 0u64;
    let base = seed_rng(2);
    let start = Instant::now();
    for t in 0..T {
        let mut ledger = CommLedger::new(k, inp.n());
        let est = l2hh_static(&inp, eps, &base.derive(&[purpose::TRIAL, t as u64]), &mut ledger).unwrap();
        for (s, &j) in sums.iter_mut().zip(&top) {
            let x = est.get(j);
            s.0 += x;
            s.1 += x * x;
        }
        if t < 10_000 {
            msgs += ledger.total_messages;
        }
    }
    L2Static {
        exact,
        top,
        sums,
        trials: T,
        msgs_per_site_1e4: msgs as f64 / (10_000.0 * k as f64),
        elapsed: start.elapsed(),
    }
}

fn c1_unbiased(r: &L2Static) -> Outcome {
    let eps: f64 = 0.3;
    let t = r.trials as f64;
    let tol = 4.0 * (eps * eps * r.exact.fp_prime as f64 / (3.0 * t)).sqrt();
    let worst = r
        .top
        .iter()
        .zip(&r.sums)
        .map(|(&j, s)| (s.0 / t - r.exact.v(j) as f64).abs())
        .fold(0.0, f64::max);
    let fast = r.elapsed < Duration::from_secs(60);
    outcome(
        worst <= tol && fast,
        format!("max |mean - v| over top-10 = {worst:.3} (tol {tol:.3}); {} trials in {:.1?}", r.trials, r.elapsed),
    )
}

fn c2_variance(r: &L2Static) -> Outcome {
    let eps: f64 = 0.3;
    let t = r.trials as f64;
    let cap = 0.4 * eps * eps * r.exact.fp_prime as f64;
    let worst = r
        .sums
        .iter()
        .map(|s| (s.1 - s.0 * s.0 / t) / (t - 1.0))
        .fold(0.0, f64::max);
    outcome(worst <= cap, format!("max Var over top-10 = {worst:.1} (cap {cap:.1})"))
}

fn c3_messages(r: &L2Static) -> Outcome {
    let cap = 3.3 / (0.3f64 * 0.3);
    outcome(
        r.msgs_per_site_1e4 <= cap,
        format!("mean messages per site = {:.2} (cap {cap:.2})", r.msgs_per_site_1e4),
    )
}

fn c4_lp_two_round() -> Outcome {
    let (k, n, m, p, eps) = (4, 512, 10_240, 3, 0.3);
    let mut details = Vec::new();
    let mut pass = true;
    for g in [Generator::EqualSplit { zipf: None }, Generator::EqualSplit { zipf: Some(1.1) }] {
        let ev = generate_stream(g, k, n, m, &seed_rng(4).derive(&[purpose::GENERATOR])).unwrap();
        let inp = partition(&ev, k, n, m);
        let exact = Exact::new(&inp, p).unwrap();
        let bound = 2.0 * eps * exact.lp_prime();
        let support: Vec<ItemId> = exact.support().collect();
        let mut hits = vec![0usize; support.len()];
        let base = seed_rng(5);
        const T: usize = 1000;
        for t in 0..T {
            let mut ledger = CommLedger::new(k, n);
            let est = lphh_two_round(&inp, p, eps, &base.derive(&[purpose::TRIAL, t as u64]), &mut ledger).unwrap();
            for (h, &j) in hits.iter_mut().zip(&support) {
                *h += usize::from((est.get(j) - exact.v(j) as f64).abs() <= bound);
            }
        }
        let worst = hits.iter().copied().min().unwrap_or(T) as f64 / T as f64;
        pass &= worst >= 0.6;
        details.push(format!("{g}: min item rate {worst:.3} over {} items", support.len()));
    }
    outcome(pass, details.join("; "))
}

fn c5_lp_scaling() -> Outcome {
    let base = ExperimentConfig {
        protocol: ProtocolId::LphhTwoRound,
        k: 2,
        n: 4096,
        p: 3,
        eps: 0.3,
        m: 100_000,
        generator: Generator::Zipf { s: 0.7 },
        trials: 50,
        seed: 5,
        checkpoints: 1,
        fixed_input: false,
    };
    let (_, grid) = run_grid(&base, &[2, 4, 8], &[0.3]).unwrap();
    let b = grid.k_exponent.unwrap();
    let bits: Vec<String> = grid.points.iter().map(|p| format!("k={}: {:.0}", p.k, p.mean_bits)).collect();
    outcome((1.6..=2.4).contains(&b), format!("k exponent {b:.3}; mean bits {}", bits.join(", ")))
}

fn c6_norm_inequality() -> Outcome {
    let mut rng = seed_rng(6);
    let mut violations = 0;
    let mut checked = 0;
    for p in [2i32, 3, 4] {
        for _ in 0..10_000 {
            let len = rng.random_range(1..=30);
            let spread = rng.random_range(1..=1000u64);
            let mut v: Vec<f64> = (0..len)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(1..=spread) as f64 })
                .collect();
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
            let lp = v.iter().map(|x| x.powi(p)).sum::<f64>().powf(1.0 / p as f64);
            // the largest beta whose premise holds: every non-zero entry >= beta * lp
            let beta = v.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min) / lp;
            let l2sq: f64 = v.iter().map(|x| x * x).sum();
            let rhs = beta.powi(-(p - 2)) * lp * lp;
            checked += 1;
            if l2sq > rhs * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations in {checked} vectors"))
}

fn c7_l2_tracking() -> Outcome {
    let (k, n, m, eps) = (4, 256, 20_000u64, 0.3);
    let (events, final_inp) = zipf_input(k, n, m, 1.1, 7);
    let top = Exact::new(&final_inp, 1).unwrap().top(5);
    let times: Vec<u64> = (1..=20).map(|c| (c * m).div_ceil(20)).collect();
    let prefix: Vec<Exact> = prefix_inputs(&events, k, n, &times)
        .iter()
        .map(|i| Exact::new(i, 2).unwrap())
        .collect();
    let mut hits = vec![vec![0usize; top.len()]; times.len()];
    let mut phase_violations = 0u64;
    let mut worst_phases = 0f64;
    let base = seed_rng(8);
    const T: usize = 200;
    for trial in 0..T {
        let mut tr = L2HhTracking::new(k, eps, m, &base.derive(&[purpose::TRIAL, trial as u64])).unwrap();
        let mut ledger = CommLedger::new(k, n);
        let mut it = events.iter().peekable();
        for (c, &t) in times.iter().enumerate() {
            while let Some(e) = it.next_if(|e| e.time <= t) {
                tr.on_event(e, &mut ledger);
            }
            let bound = eps * prefix[c].lp_prime();
            for (h, &j) in hits[c].iter_mut().zip(&top) {
                *h += usize::from((tr.estimate(j) - prefix[c].v(j) as f64).abs() <= bound);
            }
        }
        for i in 0..k {
            let s = tr.instance().site(i);
            let limit = 1.0 / (s.eps() * s.eps());
            let used = s.max_phases_in_round() as f64;
            worst_phases = worst_phases.max(used / limit);
            phase_violations += u64::from(used > limit);
        }
    }
    let worst = hits.iter().flatten().copied().min().unwrap() as f64 / T as f64;
    outcome(
        worst >= 0.6 && phase_violations == 0,
        format!(
            "min (item, checkpoint) rate {worst:.3}; phase-count violations {phase_violations} (max phases / limit {worst_phases:.3})"
        ),
    )
}

fn c8_threshold_exactness() -> Outcome {
    let mut rng = seed_rng(9);
    let mut wrong = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=8);
        let len = rng.random_range(0..=3000u64);
        let initial = rng.random_range(0..=50u64);
        let target = rng.random_range(0..=initial + len + 100);
        let skew = rng.random_range(0.0..1.0);
        let mut ledger = CommLedger::new(k, 1);
        let mut tr = ThresholdTracker::new(k, target, initial, &mut ledger);
        let brute = if target <= initial { Some(0) } else { Some(target - initial).filter(|&d| d <= len) };
        let mut fired_at = tr.fired().then_some(0);
        for a in 1..=len {
            let site = if rng.random_bool(skew) { 0 } else { rng.random_range(0..k) };
            if tr.on_arrival(site, &mut ledger) {
                assert!(fired_at.is_none(), "fired twice");
                fired_at = Some(a);
            }
        }
        wrong += usize::from(fired_at != brute);
    }
    outcome(wrong == 0, format!("{wrong} of 1000 firing indices differ from the brute-force crossing"))
}

fn c9_recursive_sketch() -> Outcome {
    let cases: [(&[f64], usize); 4] = [(&[3.0, 1.0, 4.0, 1.0], 2), (&[2.0, 7.0, 1.0, 8.0, 2.0], 2), (&[5.0, 9.0, 2.0], 3), (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2)];
    let mut details = Vec::new();
    let mut pass = true;
    for (vals, phi) in cases {
        let u: BTreeMap<ItemId, f64> = vals.iter().copied().enumerate().collect();
        let n = vals.len();
        let total: f64 = vals.iter().sum();
        let outcomes = 1u64 << (phi * n);
        let (mut sum_partial, mut exact_full) = (0.0f64, true);
        for bits in 0..outcomes {
            let h = |l: usize, i: ItemId| (bits >> ((l - 1) * n + i)) & 1 == 1;
            let partial = recursive_sketch(&u, phi, h, |_, ul| Ok(exact_top_cover(ul, 1)), RecursionSign::Plus).unwrap();
            sum_partial += partial.estimate();
            let full = recursive_sketch(&u, phi, h, |_, ul| Ok(exact_top_cover(ul, n)), RecursionSign::Plus).unwrap();
            exact_full &= full.estimate() == total;
        }
        // all values are small integers, so sums are exact in f64
        let mean_ok = sum_partial == total * outcomes as f64;
        pass &= mean_ok && exact_full;
        details.push(format!("n={n} phi={phi}: mean exact {mean_ok}, full covers exact {exact_full}"));
    }
    outcome(pass, details.join("; "))
}

fn c10_fp_static() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for p in [2, 3] {
        let cfg = ExperimentConfig {
            protocol: ProtocolId::FpStatic,
            k: 4,
            n: 256,
            p,
            eps: 0.3,
            m: 10_000,
            generator: Generator::Zipf { s: 1.1 },
            trials: 200,
            seed: 10,
            checkpoints: 1,
            fixed_input: false,
        };
        let r = run_experiment(&cfg).unwrap();
        let ok = rate(r.rows.iter().map(|x| x.covered));
        pass &= r.passed() && r.rows.len() == 200 && ok >= 0.8;
        details.push(format!("p={p}: success {ok:.3}, failures {}", r.failures.len()));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    outcome(pass, format!("{}; {:.1?}", details.join(", "), elapsed))
}

fn c11_fp_tracking() -> Outcome {
    let (k, n, m, p, eps) = (4, 128, 20_000u64, 2, 0.35);
    let start = Instant::now();
    let times: Vec<u64> = (1..=20).map(|c| (c * m).div_ceil(20)).collect();
    let mut hits = vec![0usize; times.len()];
    let mut round_violations = 0;
    let mut worst_round_ratio = 0f64;
    let (mut track_bits, mut static_bits) = (0u64, 0u64);
    const T: usize = 100;
    for trial in 0..T {
        let rng = seed_rng(11).derive(&[purpose::TRIAL, trial as u64]);
        let events = generate_stream(Generator::Zipf { s: 1.1 }, k, n, m, &rng.derive(&[purpose::GENERATOR])).unwrap();
        let prefix = prefix_inputs(&events, k, n, &times);
        let mut tr = FpTracking::new(FpTrackingConfig::new(p, eps, k, n, m), &rng.derive(&[purpose::COORDINATOR])).unwrap();
        let mut ledger = CommLedger::new(k, n);
        let mut it = events.iter().peekable();
        for (c, &t) in times.iter().enumerate() {
            while let Some(e) = it.next_if(|e| e.time <= t) {
                tr.on_event(e, &mut ledger);
            }
            let fp = Exact::new(&prefix[c], p).unwrap().fp as f64;
            hits[c] += usize::from((tr.query(t) - fp).abs() <= eps * fp);
        }
        track_bits += ledger.total_bits;
        for w in tr.trackers() {
            let limit = 6.0 * (w.exact_fp() + 2.0).log2();
            worst_round_ratio = worst_round_ratio.max(w.round_count() as f64 / limit);
            round_violations += usize::from(w.round_count() as f64 > limit);
        }
        let mut sl = CommLedger::new(k, n);
        fp_static(prefix.last().unwrap(), p, eps, 2, &rng.derive(&[purpose::INSTANCE]), &mut sl).unwrap();
        static_bits += sl.total_bits;
    }
    let worst = hits.iter().copied().min().unwrap() as f64 / T as f64;
    let ratio = track_bits as f64 / static_bits as f64;
    let elapsed = start.elapsed();
    let checks = [
        ("checkpoint rate", worst >= 0.6),
        ("round count", round_violations == 0),
        ("ledger ratio", ratio <= 4.0),
        ("runtime", elapsed < Duration::from_secs(1800)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        format!(
            "min checkpoint rate {worst:.3}; round-count violations {round_violations} (max rounds / limit {worst_round_ratio:.3}); tracking / static bits {ratio:.2} (cap 4); {elapsed:.1?}{}",
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn c12_determinism() -> Outcome {
    let mut differing = Vec::new();
    for protocol in ProtocolId::ALL {
        let cfg = ExperimentConfig {
            protocol,
            k: 3,
            n: 64,
            p: 2,
            eps: 0.3,
            m: 2000,
            generator: Generator::Zipf { s: 1.1 },
            trials: 4,
            seed: 12,
            checkpoints: 5,
            fixed_input: false,
        };
        let a = csv_bytes(&run_experiment(&cfg).unwrap().rows).unwrap();
        let b = csv_bytes(&run_experiment(&cfg).unwrap().rows).unwrap();
        if a != b {
            differing.push(protocol.name());
        }
    }
    outcome(
        differing.is_empty(),
        format!("{} protocols rerun; differing CSVs: {:?}", ProtocolId::ALL.len(), differing),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: usize| filter.is_empty() || filter.iter().any(|f| f == &id.to_string());

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    if wanted(1) || wanted(2) || wanted(3) {
        let l2 = l2_static_run();
        results.push((1, "l2 static unbiasedness", c1_unbiased(&l2)));
        results.push((2, "l2 static variance", c2_variance(&l2)));
        results.push((3, "l2 static communication", c3_messages(&l2)));
    }
    let rest: [Criterion; 9] = [
        (4, "lp two-round error", c4_lp_two_round),
        (5, "lp communication scaling in k", c5_lp_scaling),
        (6, "l2 versus lp norm inequality", c6_norm_inequality),
        (7, "l2 tracking coverage and phase count", c7_l2_tracking),
        (8, "threshold tracker exactness", c8_threshold_exactness),
        (9, "recursive sketch with exact covers", c9_recursive_sketch),
        (10, "static Fp two-round", c10_fp_static),
        (11, "Fp tracking", c11_fp_tracking),
        (12, "determinism", c12_determinism),
    ];
    for (id, name, f) in rest {
        if wanted(id) {
            results.push((id, name, f()));
        }
    }
    results.retain(|r| wanted(r.0));
    let mut all = true;
    for (id, name, o) in &results {
        println!("criterion {id:>2} [{name}]: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
