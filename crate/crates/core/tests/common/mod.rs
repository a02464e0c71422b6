#![allow(dead_code)]

use distfreq::netsim::StreamEvent;
use distfreq::{FrequencyVector, PartitionedInput, SeededRng};

/// `m` Zipf(`s`) arrivals over `[0, n)` with uniformly random sites.
pub fn zipf_stream(k: usize, n: usize, s: f64, m: usize, rng: &mut SeededRng) -> Vec<StreamEvent> {
    let mut cdf: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-s)).collect();
    let mut acc = 0.0;
    for w in cdf.iter_mut() {
        acc += *w;
        *w = acc;
    }
    (0..m)
        .map(|t| {
            let x = rng.unit() * acc;
            let item = cdf.partition_point(|&c| c <= x).min(n - 1);
            let site = (rng.unit() * k as f64) as usize;
            StreamEvent {
                time: t as u64 + 1,
                site: site.min(k - 1),
                item,
            }
        })
        .collect()
}

pub fn partition(events: &[StreamEvent], k: usize, n: usize, until: u64) -> PartitionedInput {
    let mut locals = vec![FrequencyVector::new(n); k];
    for e in events.iter().take_while(|e| e.time <= until) {
        locals[e.site].increment(e.item);
    }
    PartitionedInput::new(locals).unwrap()
}

pub fn exact_fp(events: &[StreamEvent], n: usize, p: u32, until: u64) -> f64 {
    let mut v = vec![0u64; n];
    for e in events.iter().take_while(|e| e.time <= until) {
        v[e.item] += 1;
    }
    v.iter().map(|&x| (x as f64).powi(p as i32)).sum()
}

pub fn checkpoints(m: u64, count: u64) -> Vec<u64> {
    (1..=count).map(|c| (c * m).div_ceil(count)).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
