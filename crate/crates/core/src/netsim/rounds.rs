use crate::error::{Error, Result};
use crate::freq::{FrequencyVector, PartitionedInput, SiteId};
use crate::ledger::CommLedger;
use crate::rng::{purpose, SeededRng};

/// Number of standard-size messages a value occupies on the wire.
pub trait Records {
    fn records(&self) -> u64 {
        1
    }
}

impl Records for () {
    fn records(&self) -> u64 {
        0
    }
}

pub enum Step<D, O> {
    Broadcast(Vec<D>),
    Output(O),
}

/// A synchronous coordinator-model protocol.
///
/// A site only ever sees its own local vector, its own state, the broadcasts
/// of the previous round and its private random stream.
pub trait RoundProtocol {
    type SiteState;
    type Up: Records;
    type Down: Records;
    type Output;

    fn round_limit(&self) -> usize;

    fn init_site(&self, site: SiteId) -> Self::SiteState;

    fn site_step(
        &self,
        round: usize,
        site: SiteId,
        state: &mut Self::SiteState,
        local: &FrequencyVector,
        broadcast: &[Self::Down],
        rng: &mut SeededRng,
    ) -> Vec<Self::Up>;

    /// `inboxes[i]` holds what site `i` sent this round.
    fn coordinator_step(
        &mut self,
        round: usize,
        inboxes: Vec<Vec<Self::Up>>,
    ) -> Step<Self::Down, Self::Output>;
}

/// Runs `proto` to completion. Site `i` draws from `rng.derive([SITE, i])`.
pub fn run_rounds<P: RoundProtocol>(
    inp: &PartitionedInput,
    proto: &mut P,
    rng: &SeededRng,
    ledger: &mut CommLedger,
) -> Result<P::Output> {
    let k = inp.k();
    let mut states: Vec<P::SiteState> = (0..k).map(|i| proto.init_site(i)).collect();
    let mut rngs: Vec<SeededRng> = (0..k)
        .map(|i| rng.derive(&[purpose::SITE, i as u64]))
        .collect();
    let mut broadcast: Vec<P::Down> = Vec::new();
    let limit = proto.round_limit();
    for round in 0..limit {
        ledger.set_round(round as u32);
        let mut inboxes = Vec::with_capacity(k);
        for site in 0..k {
            let out = proto.site_step(
                round,
                site,
                &mut states[site],
                inp.local(site),
                &broadcast,
                &mut rngs[site],
            );
            let records: u64 = out.iter().map(Records::records).sum();
            ledger.charge_messages(site, records);
            inboxes.push(out);
        }
        match proto.coordinator_step(round, inboxes) {
            Step::Output(out) => return Ok(out),
            Step::Broadcast(msgs) => {
                let records: u64 = msgs.iter().map(Records::records).sum();
                ledger.broadcast(records);
                broadcast = msgs;
            }
        }
    }
    Err(Error::Divergence { limit })
}
