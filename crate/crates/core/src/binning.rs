use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventStream};

/// Default bin duration: 10 ms.
pub const DEFAULT_BIN_DURATION_US: u64 = 10_000;

/// A fixed-duration slice `[t_start, t_end)` of the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBin {
    pub index: usize,
    pub t_start: u64,
    pub t_end: u64,
    pub events: Vec<Event>,
}

impl EventBin {
    pub fn new(index: usize, t_start: u64, t_end: u64, events: Vec<Event>) -> Self {
        debug_assert!(t_start < t_end);
        debug_assert!(events.iter().all(|e| e.t >= t_start && e.t < t_end));
        Self {
            index,
            t_start,
            t_end,
            events,
        }
    }

    pub fn duration(&self) -> u64 {
        self.t_end - self.t_start
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Tiles `[t_first, t_last]` with half-open bins of `bin_duration`. The last
/// bin is padded to full length and empty bins are kept.
pub fn segment_into_bins(stream: &EventStream, bin_duration: u64) -> Result<Vec<EventBin>> {
    if bin_duration == 0 {
        return Err(Error::usage("bin duration must be positive"));
    }
    let Some((t_first, t_last)) = stream.time_span() else {
        return Ok(Vec::new());
    };
    let n_bins = ((t_last - t_first) / bin_duration + 1) as usize;
    let mut bins: Vec<EventBin> = (0..n_bins)
        .map(|i| {
            let t_start = t_first + i as u64 * bin_duration;
            EventBin {
                index: i,
                t_start,
                t_end: t_start + bin_duration,
                events: Vec::new(),
            }
        })
        .collect();
    for e in stream.events() {
        let i = ((e.t - t_first) / bin_duration) as usize;
        bins[i].events.push(*e);
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Polarity, SensorGeometry};

    fn stream(ts: &[u64]) -> EventStream {
        let g = SensorGeometry::new(4, 4).unwrap();
        EventStream::new(g, ts.iter().map(|&t| Event::new(t, 0, 0, Polarity::On)).collect()).unwrap()
    }

    #[test]
    fn hundred_ms_gives_ten_bins() {
        let bins = segment_into_bins(&stream(&[0, 45_000, 99_999]), DEFAULT_BIN_DURATION_US).unwrap();
        assert_eq!(bins.len(), 10);
        assert_eq!(bins[9].t_end, 100_000);
        assert!(bins[1].is_empty());
    }

    #[test]
    fn single_event() {
        let bins = segment_into_bins(&stream(&[0]), 10_000).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].len(), 1);
    }

    #[test]
    fn half_open_boundary() {
        let bins = segment_into_bins(&stream(&[0, 5_000, 10_000]), 10_000).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].len(), 2);
        assert_eq!(bins[1].len(), 1);
        assert_eq!(bins[1].t_start, 10_000);
    }

    #[test]
    fn origin_is_first_event() {
        let bins = segment_into_bins(&stream(&[7, 12, 30]), 10).unwrap();
        assert_eq!(bins.len(), 3);
        assert_eq!((bins[0].t_start, bins[0].t_end), (7, 17));
        assert_eq!(bins[2].events[0].t, 30);
    }

    #[test]
    fn empty_stream_and_zero_duration() {
        assert!(segment_into_bins(&stream(&[]), 10).unwrap().is_empty());
        assert!(matches!(segment_into_bins(&stream(&[1]), 0), Err(Error::Usage(_))));
    }
}
