mod common;

use distfreq::hh_tracking::{LpHhTracking, LpPrimeTracker};
use distfreq::netsim::StreamEvent;
use distfreq::{partition_moments, CommLedger, SeededRng};
use proptest::prelude::*;

#[test]
fn one_site_one_item_reports_logarithmically() {
    for m in [1u64, 10, 1000, 100_000] {
        let mut t = LpPrimeTracker::new(1, 2, 0.5).unwrap();
        let mut ledger = CommLedger::new(1, 1);
        for _ in 0..m {
            t.on_arrival(0, 0, &mut ledger);
        }
        let bound = ((m * m) as f64).ln() / 1.5f64.ln() + 1.0;
        assert!(t.reports() as f64 <= bound, "m={m}: {} reports", t.reports());
        assert_eq!(t.exact_fp_prime(), (m * m) as u128);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sum_estimate_brackets_fp_prime(
        k in 1usize..5,
        p in 2u32..4,
        theta in 0.01f64..0.5,
        stream in prop::collection::vec((0usize..5, 0usize..8), 1..800),
    ) {
        let mut t = LpPrimeTracker::new(k, p, theta).unwrap();
        let mut ledger = CommLedger::new(k, 8);
        for &(s, j) in &stream {
            t.on_arrival(s % k, j, &mut ledger);
            let (est, exact) = (t.estimate_fp() as f64, t.exact_fp_prime() as f64);
            prop_assert!(est <= exact);
            prop_assert!(exact < (1.0 + theta) * est);
        }
    }
}

#[test]
fn planted_item_is_tracked_at_every_checkpoint() {
    let (k, n, p, eps, m) = (4usize, 256usize, 3u32, 0.3, 4000u64);
    let times = common::checkpoints(m, 20);
    let trials = 200u64;
    let mut good = 0;
    for trial in 0..trials {
        let mut rng = SeededRng::new(71, trial);
        let noise = common::zipf_stream(k, n - 1, 1.1, m as usize, &mut rng);
        // item 0 gets every other arrival, noise items are shifted up by one
        let events: Vec<StreamEvent> = noise
            .iter()
            .enumerate()
            .map(|(i, e)| StreamEvent {
                time: e.time,
                site: e.site,
                item: if i % 2 == 0 { 0 } else { e.item + 1 },
            })
            .collect();
        let mut t = LpHhTracking::new(k, p, eps, m, &SeededRng::new(72, trial)).unwrap();
        let mut ledger = CommLedger::new(k, n);
        let mut touched = Vec::new();
        let mut next = 0;
        let mut all = true;
        for e in &events {
            t.arrive(e.site, e.item, &mut ledger, &mut touched);
            if times[next] == e.time {
                let inp = common::partition(&events, k, n, e.time);
                let lp_prime = partition_moments(&inp, p).unwrap().lp_prime;
                let v = inp.global().get(0) as f64;
                all &= (t.estimate(0) - v).abs() <= 3.0 * eps * lp_prime;
                next += 1;
            }
        }
        good += all as u64;
    }
    assert!(good * 10 >= trials * 6, "{good} of {trials}");
}
