//! Temporal antagonism signals: per-message polarity-reversal curves with
//! drift detection, and per-community daily p95 response-time series with
//! robust spike detection.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::community::CommunityAssignment;
use crate::ingest::RetweetEvent;
use crate::numfmt::fmt_sig6;

pub const SECS_PER_DAY: u64 = 86_400;

/// MAD-to-standard-deviation factor for normally distributed data.
const MAD_SCALE: f64 = 1.4826;

/// Minimum present days per community before spike detection runs.
pub const MIN_HISTORY_DAYS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemporalError {
    #[error("message '{0}' has no retweet events")]
    UnknownMessage(String),
    #[error("bin width must be positive")]
    InvalidBinWidth,
}

/// One reversal-curve bin: events bucketed by seconds since the original
/// posting, with per-community counts over assigned retweeters.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBin {
    pub start_s: u64,
    /// Count per community among assigned retweeters.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl CurveBin {
    pub fn share(&self, community: usize) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.counts[community] as f64 / self.total as f64)
        }
    }
}

/// Community shares of one message's retweets over response-time bins.
/// Bins are contiguous from zero; retweets from unassigned users are
/// dropped (and counted) before shares are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversalCurve {
    pub message_id: String,
    pub bin_width_s: u64,
    pub k: usize,
    pub bins: Vec<CurveBin>,
    pub dropped_unassigned: u64,
}

impl ReversalCurve {
    pub fn to_csv(&self) -> String {
        let mut csv = String::from("bin_start_s,community_id,share,count\n");
        for bin in &self.bins {
            if bin.total == 0 {
                continue;
            }
            for (community, &count) in bin.counts.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    bin.start_s,
                    community,
                    fmt_sig6(bin.share(community).unwrap_or(0.0)),
                    count
                ));
            }
        }
        csv
    }
}

/// Bucket one message's retweets by response time and take per-bin
/// community shares among assigned retweeters.
pub fn reversal_curve(
    message_id: &str,
    events: &[RetweetEvent],
    assignment: &CommunityAssignment,
    bin_width_s: u64,
) -> Result<ReversalCurve, TemporalError> {
    if bin_width_s == 0 {
        return Err(TemporalError::InvalidBinWidth);
    }
    let k = assignment.k();
    let mut bins: Vec<CurveBin> = Vec::new();
    let mut dropped = 0u64;
    let mut seen = false;
    for event in events {
        if event.original_tweet_id != message_id {
            continue;
        }
        seen = true;
        let label = match assignment.user_label(&event.retweeter_id) {
            Some(label) => label as usize,
            None => {
                dropped += 1;
                continue;
            }
        };
        let bin_index = (event.response_time / bin_width_s) as usize;
        if bins.len() <= bin_index {
            let from = bins.len();
            for i in from..=bin_index {
                bins.push(CurveBin {
                    start_s: i as u64 * bin_width_s,
                    counts: vec![0; k],
                    total: 0,
                });
            }
        }
        bins[bin_index].counts[label] += 1;
        bins[bin_index].total += 1;
    }
    if !seen {
        return Err(TemporalError::UnknownMessage(message_id.to_string()));
    }
    Ok(ReversalCurve {
        message_id: message_id.to_string(),
        bin_width_s,
        k,
        bins,
        dropped_unassigned: dropped,
    })
}

/// Detection parameters for polarity drift: a bin qualifies when its count
/// reaches `min_bin_count` and some community holds at least `dominance` of
/// its retweets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReversalParams {
    pub dominance: f64,
    pub min_bin_count: u64,
}

impl Default for ReversalParams {
    fn default() -> Self {
        ReversalParams {
            dominance: 0.8,
            min_bin_count: 5,
        }
    }
}

/// A detected change of the dominant retweeting community.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftEvent {
    pub message_id: String,
    /// Seconds since the original posting at the flip bin's boundary.
    pub flip_time_s: u64,
    pub from_community: u32,
    pub to_community: u32,
    pub pre_share: f64,
    pub post_share: f64,
}

fn dominant_community(bin: &CurveBin, params: &ReversalParams) -> Option<(u32, f64)> {
    if bin.total < params.min_bin_count {
        return None;
    }
    let (community, &count) = bin
        .counts
        .iter()
        .enumerate()
        .max_by_key(|&(_, &count)| count)?;
    let share = count as f64 / bin.total as f64;
    (share >= params.dominance).then_some((community as u32, share))
}

/// Earliest boundary where the dominant community differs from the dominant
/// community of the preceding qualifying bin; `None` when dominance never
/// changes or fewer than two bins qualify.
pub fn detect_reversal(curve: &ReversalCurve, params: &ReversalParams) -> Option<DriftEvent> {
    let mut previous: Option<(u32, f64)> = None;
    for bin in &curve.bins {
        let Some((community, share)) = dominant_community(bin, params) else {
            continue;
        };
        if let Some((prev_community, prev_share)) = previous {
            if community != prev_community {
                return Some(DriftEvent {
                    message_id: curve.message_id.clone(),
                    flip_time_s: bin.start_s,
                    from_community: prev_community,
                    to_community: community,
                    pre_share: prev_share,
                    post_share: share,
                });
            }
        }
        previous = Some((community, share));
    }
    None
}

/// Scan every retweeted message, returning drift events sorted by message id.
pub fn detect_all_reversals(
    events: &[RetweetEvent],
    assignment: &CommunityAssignment,
    bin_width_s: u64,
    params: &ReversalParams,
) -> Result<Vec<DriftEvent>, TemporalError> {
    if bin_width_s == 0 {
        return Err(TemporalError::InvalidBinWidth);
    }
    let mut message_ids: Vec<&str> = events
        .iter()
        .map(|e| e.original_tweet_id.as_str())
        .collect();
    message_ids.sort_unstable();
    message_ids.dedup();

    let mut drifts = Vec::new();
    for message_id in message_ids {
        let curve = reversal_curve(message_id, events, assignment, bin_width_s)?;
        if let Some(drift) = detect_reversal(&curve, params) {
            drifts.push(drift);
        }
    }
    Ok(drifts)
}

/// One (UTC day, source community) cell of the daily p95 series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayCell {
    pub n: u64,
    /// Nearest-rank 95th percentile; absent when `n` is under the series'
    /// minimum sample count.
    pub p95_s: Option<u64>,
}

/// Per (UTC day, community of the original author) p95 of the response
/// times of retweets received that day.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSeries {
    pub min_samples: usize,
    pub cells: BTreeMap<(u64, u32), DayCell>,
}

/// Nearest-rank 95th percentile of a sorted sample: always an observed value.
fn nearest_rank_p95(sorted: &[u64]) -> u64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let rank = (19 * n).div_ceil(20); // ceil(0.95 n)
    sorted[rank - 1]
}

pub fn daily_p95_series(
    events: &[RetweetEvent],
    assignment: &CommunityAssignment,
    min_samples: usize,
) -> SpikeSeries {
    let mut grouped: BTreeMap<(u64, u32), Vec<u64>> = BTreeMap::new();
    for event in events {
        let Some(community) = assignment.user_label(&event.original_user_id) else {
            continue;
        };
        let day = event.retweet_posted_at / SECS_PER_DAY;
        grouped
            .entry((day, community))
            .or_default()
            .push(event.response_time);
    }
    let cells = grouped
        .into_iter()
        .map(|(key, mut times)| {
            times.sort_unstable();
            let p95 = (times.len() >= min_samples).then(|| nearest_rank_p95(&times));
            (
                key,
                DayCell {
                    n: times.len() as u64,
                    p95_s: p95,
                },
            )
        })
        .collect();
    SpikeSeries { min_samples, cells }
}

impl SpikeSeries {
    /// Days present (p95 defined) for one community, in day order.
    pub fn present_days(&self, community: u32) -> Vec<(u64, u64)> {
        self.cells
            .iter()
            .filter(|(&(_, c), _)| c == community)
            .filter_map(|(&(day, _), cell)| cell.p95_s.map(|p95| (day, p95)))
            .collect()
    }

    pub fn communities(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.cells.keys().map(|&(_, c)| c).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("day,community_id,p95_s,n\n");
        for (&(day, community), cell) in &self.cells {
            let p95 = cell.p95_s.map(|p| p.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{},{},{},{}\n",
                format_utc_day(day),
                community,
                p95,
                cell.n
            ));
        }
        csv
    }
}

/// Civil date for a day count since the unix epoch (proleptic Gregorian).
pub fn format_utc_day(unix_day: u64) -> String {
    // Days-to-civil conversion over eras of 146097 days.
    let z = unix_day as i64 + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };
    format!("{year:04}-{month:02}-{day:02}")
}

/// Spike-detection outcome; communities without enough history are skipped
/// and reported rather than silently ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeReport {
    pub flagged: Vec<SpikeFlag>,
    pub skipped: Vec<SkippedCommunity>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeFlag {
    pub unix_day: u64,
    pub date: String,
    pub community: u32,
    pub p95_s: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCommunity {
    pub community: u32,
    pub present_days: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Flag days whose log10 p95 exceeds the per-community median by more than
/// `robust_z` robust standard deviations (MAD * 1.4826). Response times span
/// several orders of magnitude, so the statistics run in the log domain;
/// sub-second p95 values are floored at one second. A zero MAD (constant
/// history) falls back to flagging any day beyond 10x the median.
pub fn detect_spikes(series: &SpikeSeries, robust_z: f64) -> SpikeReport {
    let mut flagged = Vec::new();
    let mut skipped = Vec::new();
    for community in series.communities() {
        let days = series.present_days(community);
        if days.len() < MIN_HISTORY_DAYS {
            skipped.push(SkippedCommunity {
                community,
                present_days: days.len(),
            });
            continue;
        }
        let logs: Vec<f64> = days
            .iter()
            .map(|&(_, p95)| (p95.max(1) as f64).log10())
            .collect();
        let center = median(&mut logs.clone());
        let mut deviations: Vec<f64> = logs.iter().map(|l| (l - center).abs()).collect();
        let mad = median(&mut deviations);
        let sigma = mad * MAD_SCALE;
        let cutoff = if sigma > 0.0 {
            center + robust_z * sigma
        } else {
            center + 1.0
        };
        for (&(day, p95), &log) in days.iter().zip(logs.iter()) {
            if log > cutoff {
                flagged.push(SpikeFlag {
                    unix_day: day,
                    date: format_utc_day(day),
                    community,
                    p95_s: p95,
                });
            }
        }
    }
    flagged.sort_by_key(|f| (f.unix_day, f.community));
    SpikeReport { flagged, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::CommunityAssignment;
    use crate::graph::NodeId;
    use crate::ingest::RetweetKind;

    fn event_at(
        retweeter: &str,
        author: &str,
        message: &str,
        original_posted_at: u64,
        response: u64,
    ) -> RetweetEvent {
        RetweetEvent {
            retweeter_id: retweeter.to_string(),
            original_user_id: author.to_string(),
            original_tweet_id: message.to_string(),
            retweet_posted_at: original_posted_at + response,
            original_posted_at,
            response_time: response,
            kind: RetweetKind::Native,
        }
    }

    fn labels(pairs: &[(&str, u32)], k: usize) -> CommunityAssignment {
        CommunityAssignment::from_labels(
            k,
            pairs.iter().map(|(u, c)| (NodeId::user(*u), *c)),
        )
    }

    #[test]
    fn curve_shares_follow_bin_composition() {
        let assignment = labels(&[("a", 0), ("b", 1)], 2);
        let events = vec![
            event_at("a", "x", "m", 0, 10),
            event_at("b", "x", "m", 0, 15),
            event_at("b", "x", "m", 0, 20),
            event_at("b", "x", "m", 0, 95),
        ];
        let curve = reversal_curve("m", &events, &assignment, 50).unwrap();
        assert_eq!(curve.bins.len(), 2);
        assert_eq!(curve.bins[0].share(0), Some(1.0 / 3.0));
        assert_eq!(curve.bins[0].share(1), Some(2.0 / 3.0));
        assert_eq!(curve.bins[1].share(1), Some(1.0));
        let share_sum: f64 = (0..2).map(|c| curve.bins[0].share(c).unwrap()).sum();
        assert!((share_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_message_is_an_error() {
        let assignment = labels(&[("a", 0)], 2);
        let events = vec![event_at("a", "x", "m", 0, 10)];
        assert_eq!(
            reversal_curve("other", &events, &assignment, 50),
            Err(TemporalError::UnknownMessage("other".to_string()))
        );
    }

    #[test]
    fn constant_dominance_yields_no_drift() {
        let assignment = labels(&[("a", 0)], 2);
        let events: Vec<RetweetEvent> = (0..20)
            .map(|i| event_at("a", "x", "m", 0, i * 40))
            .collect();
        let curve = reversal_curve("m", &events, &assignment, 100).unwrap();
        assert_eq!(detect_reversal(&curve, &ReversalParams::default()), None);
    }

    #[test]
    fn single_qualifying_bin_yields_no_drift() {
        let assignment = labels(&[("a", 0)], 2);
        let events: Vec<RetweetEvent> =
            (0..6).map(|i| event_at("a", "x", "m", 0, i)).collect();
        let curve = reversal_curve("m", &events, &assignment, 100).unwrap();
        assert_eq!(detect_reversal(&curve, &ReversalParams::default()), None);
    }

    #[test]
    fn drift_is_reported_at_the_flip_bin_boundary() {
        let assignment = labels(&[("a", 0), ("b", 1)], 2);
        let mut events = Vec::new();
        for i in 0..10 {
            events.push(event_at("a", "x", "m", 0, i));
        }
        // low-count noise bin in between must not qualify
        events.push(event_at("b", "x", "m", 0, 150));
        for i in 0..19 {
            events.push(event_at("b", "x", "m", 0, 300 + i));
        }
        events.push(event_at("a", "x", "m", 0, 310));
        let curve = reversal_curve("m", &events, &assignment, 100).unwrap();
        let drift = detect_reversal(&curve, &ReversalParams::default()).unwrap();
        assert_eq!(drift.flip_time_s, 300);
        assert_eq!(drift.from_community, 0);
        assert_eq!(drift.to_community, 1);
        assert_eq!(drift.pre_share, 1.0);
        assert_eq!(drift.post_share, 0.95);
    }

    #[test]
    fn p95_is_nearest_rank_on_the_sorted_sample() {
        let times: Vec<u64> = (1..=100).collect();
        assert_eq!(nearest_rank_p95(&times), 95);
        assert_eq!(nearest_rank_p95(&[7; 20]), 7);
        assert_eq!(nearest_rank_p95(&[3]), 3);
    }

    #[test]
    fn daily_series_groups_by_day_and_author_community() {
        let assignment = labels(&[("x", 0), ("y", 1)], 2);
        let day = SECS_PER_DAY;
        let mut events = Vec::new();
        for i in 0..20 {
            events.push(event_at("r", "x", "m1", 10 * day, i + 1));
        }
        for i in 0..5 {
            events.push(event_at("r", "y", "m2", 10 * day, i + 1));
        }
        let series = daily_p95_series(&events, &assignment, 20);
        let cell = series.cells.get(&(10, 0)).unwrap();
        assert_eq!(cell.n, 20);
        assert_eq!(cell.p95_s, Some(19));
        // under min_samples: present but absent p95
        let sparse = series.cells.get(&(10, 1)).unwrap();
        assert_eq!(sparse.n, 5);
        assert_eq!(sparse.p95_s, None);
    }

    #[test]
    fn constant_series_has_no_spikes_and_outlier_day_is_flagged() {
        let assignment = labels(&[("x", 0)], 1);
        let day = SECS_PER_DAY;
        let mut events = Vec::new();
        for d in 0..30u64 {
            for i in 0..25 {
                events.push(event_at("r", "x", "m", d * day, 100 + (i % 3)));
            }
        }
        let series = daily_p95_series(&events, &assignment, 20);
        let report = detect_spikes(&series, 3.5);
        assert!(report.flagged.is_empty());

        // plant one day at 1000x; the ~1.16-day responses land on day 31
        for i in 0..25 {
            events.push(event_at("r", "x", "m", 30 * day, 100_000 + i));
        }
        let series = daily_p95_series(&events, &assignment, 20);
        let report = detect_spikes(&series, 3.5);
        assert_eq!(report.flagged.len(), 1);
        assert_eq!(report.flagged[0].unix_day, 31);
    }

    #[test]
    fn short_history_is_skipped_and_reported() {
        let assignment = labels(&[("x", 0)], 1);
        let day = SECS_PER_DAY;
        let mut events = Vec::new();
        for d in 0..5u64 {
            for i in 0..25 {
                events.push(event_at("r", "x", "m", d * day, 100 + i));
            }
        }
        let series = daily_p95_series(&events, &assignment, 20);
        let report = detect_spikes(&series, 3.5);
        assert!(report.flagged.is_empty());
        assert_eq!(
            report.skipped,
            vec![SkippedCommunity {
                community: 0,
                present_days: 5
            }]
        );
    }

    #[test]
    fn utc_day_formatting() {
        assert_eq!(format_utc_day(0), "1970-01-01");
        assert_eq!(format_utc_day(15_706), "2013-01-01");
        assert_eq!(format_utc_day(19_723), "2024-01-01");
    }
}
