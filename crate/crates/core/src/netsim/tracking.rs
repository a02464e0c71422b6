use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{ItemId, SiteId};
use crate::ledger::CommLedger;

/// One arrival: `item` shows up at `site` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamEvent {
    pub time: u64,
    pub site: SiteId,
    pub item: ItemId,
}

/// A continuous-monitoring protocol. All site and coordinator reactions to
/// an arrival, including any request/reply exchanges it triggers, complete
/// before the next event is delivered.
pub trait TrackingProtocol {
    type Output;

    fn on_event(&mut self, event: &StreamEvent, ledger: &mut CommLedger);

    /// The coordinator's answer after all events up to `time` were delivered.
    fn query(&self, time: u64) -> Self::Output;
}

/// Replays `events` through `proto`, recording its answer at every time in
/// `query_times` (answers reflect all events with `event.time <= t`).
pub fn run_tracking<P: TrackingProtocol>(
    events: &[StreamEvent],
    proto: &mut P,
    query_times: &[u64],
    ledger: &mut CommLedger,
) -> Result<BTreeMap<u64, P::Output>> {
    if events.windows(2).any(|w| w[0].time >= w[1].time) {
        return Err(Error::Parameter("event times must be strictly increasing".into()));
    }
    let mut queries: Vec<u64> = query_times.to_vec();
    queries.sort_unstable();
    queries.dedup();
    let mut answers = BTreeMap::new();
    let mut next = 0;
    for event in events {
        while next < queries.len() && queries[next] < event.time {
            answers.insert(queries[next], proto.query(queries[next]));
            next += 1;
        }
        proto.on_event(event, ledger);
    }
    for &t in &queries[next..] {
        answers.insert(t, proto.query(t));
    }
    Ok(answers)
}

/// Parses newline-delimited `time site item` records. Blank lines and lines
/// starting with `#` are skipped.
pub fn read_stream(reader: impl BufRead) -> Result<Vec<StreamEvent>> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| Error::StreamFormat {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad("expected three fields"));
        }
        let parse = |s: &str| s.parse::<u64>().map_err(|_| bad("not an unsigned integer"));
        events.push(StreamEvent {
            time: parse(fields[0])?,
            site: parse(fields[1])? as SiteId,
            item: parse(fields[2])? as ItemId,
        });
    }
    Ok(events)
}

pub fn write_stream(mut writer: impl Write, events: &[StreamEvent]) -> Result<()> {
    for e in events {
        writeln!(writer, "{} {} {}", e.time, e.site, e.item)?;
    }
    Ok(())
}
