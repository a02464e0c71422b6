use distfreq::netsim::StreamEvent;
use distfreq::{FrequencyVector, PartitionedInput, SeededRng};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::config::Generator;
use crate::HarnessError;

fn zipf_items(rng: &mut SeededRng, universe: usize, s: f64, count: usize) -> Result<Vec<usize>, HarnessError> {
    let z = Zipf::new(universe as f64, s).map_err(|e| HarnessError::Config(format!("zipf: {e}")))?;
    Ok((0..count).map(|_| z.sample(rng) as usize - 1).collect())
}

/// `m` arrivals over `k` sites and universe `[0, n)`, deterministic in `rng`.
/// Times run `1..=m`.
pub fn generate_stream(
    generator: Generator,
    k: usize,
    n: usize,
    m: u64,
    rng: &SeededRng,
) -> Result<Vec<StreamEvent>, HarnessError> {
    generator.validate()?;
    if k == 0 || n == 0 {
        return Err(HarnessError::Config("k and n must be positive".into()));
    }
    let mut rng = rng.clone();
    let m = m as usize;
    let mut arrivals: Vec<(usize, usize)> = match generator {
        Generator::Zipf { s } => {
            let items = zipf_items(&mut rng, n, s, m)?;
            items.into_iter().map(|j| (rng.random_range(0..k), j)).collect()
        }
        Generator::Uniform => (0..m).map(|_| (rng.random_range(0..k), rng.random_range(0..n))).collect(),
        Generator::PlantedHh { count, share } => {
            if count > n {
                return Err(HarnessError::Config(format!("cannot plant {count} items in a universe of {n}")));
            }
            let each = (share * m as f64).floor() as usize;
            let mut items: Vec<usize> = (0..count).flat_map(|j| std::iter::repeat_n(j, each)).collect();
            let rest = m - items.len();
            if rest > 0 {
                if count == n {
                    return Err(HarnessError::Config("no items left for background arrivals".into()));
                }
                items.extend(zipf_items(&mut rng, n - count, 1.1, rest)?.into_iter().map(|j| j + count));
            }
            items.into_iter().map(|j| (rng.random_range(0..k), j)).collect()
        }
        Generator::EqualSplit { zipf } => {
            let items = match zipf {
                None => (0..m).map(|t| t % n).collect(),
                Some(s) => zipf_items(&mut rng, n, s, m)?,
            };
            let mut seen = vec![0usize; n];
            items
                .into_iter()
                .map(|j| {
                    let site = seen[j] % k;
                    seen[j] += 1;
                    (site, j)
                })
                .collect()
        }
    };
    arrivals.shuffle(&mut rng);
    Ok(arrivals
        .into_iter()
        .enumerate()
        .map(|(t, (site, item))| StreamEvent {
            time: t as u64 + 1,
            site,
            item,
        })
        .collect())
}

/// Local frequency vectors of all events with `time <= until`.
pub fn partition(events: &[StreamEvent], k: usize, n: usize, until: u64) -> PartitionedInput {
    let mut locals = vec![FrequencyVector::new(n); k];
    for e in events.iter().take_while(|e| e.time <= until) {
        locals[e.site].increment(e.item);
    }
    PartitionedInput::new(locals).expect("locals share one universe")
}
