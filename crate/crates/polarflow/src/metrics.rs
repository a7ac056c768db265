//! Cross-group retweet flow analytics and response-time distributions:
//! flow/ratio matrices, internal-vs-cross ECDFs, the late-retweet
//! classifier, and target-attribute breakdowns.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::community::CommunityAssignment;
use crate::ingest::{RetweetEvent, TweetRecord};
use crate::numfmt::{fmt_sig6, round_sig6};

/// Follower count at which an author counts as having a large base.
pub const BIG_FOLLOWER_MIN: u64 = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("empty sample")]
    EmptySample,
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSample { needed: usize, got: usize },
}

/// K x K counts; entry (i, j) counts retweets by community-i users of
/// messages authored by community-j users. Events with an unassigned
/// endpoint are excluded and counted separately.
#[derive(Debug, Clone, PartialEq)]
pub struct RtFlowMatrix {
    k: usize,
    counts: Vec<u64>,
    pub excluded: u64,
}

impl RtFlowMatrix {
    pub fn new(k: usize) -> Self {
        RtFlowMatrix {
            k,
            counts: vec![0; k * k],
            excluded: 0,
        }
    }

    pub fn from_counts(k: usize, rows: &[Vec<u64>]) -> Self {
        let mut counts = Vec::with_capacity(k * k);
        for row in rows {
            counts.extend_from_slice(row);
        }
        RtFlowMatrix {
            k,
            counts,
            excluded: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.k + to]
    }

    fn add(&mut self, from: usize, to: usize) {
        self.counts[from * self.k + to] += 1;
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("community");
        for j in 0..self.k {
            csv.push_str(&format!(",rt_to_{j}"));
        }
        csv.push('\n');
        for i in 0..self.k {
            csv.push_str(&i.to_string());
            for j in 0..self.k {
                csv.push_str(&format!(",{}", self.count(i, j)));
            }
            csv.push('\n');
        }
        csv
    }
}

/// Row-normalized off-diagonal flow shares; `None` marks the diagonal and
/// rows with no cross-group flow.
#[derive(Debug, Clone, PartialEq)]
pub struct RtRatioMatrix {
    k: usize,
    ratios: Vec<Option<f64>>,
}

impl RtRatioMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ratio(&self, from: usize, to: usize) -> Option<f64> {
        self.ratios[from * self.k + to]
    }

    /// Community each row targets most, when defined.
    pub fn argmax_target(&self, from: usize) -> Option<usize> {
        (0..self.k)
            .filter_map(|j| self.ratio(from, j).map(|r| (j, r)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j)
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("community");
        for j in 0..self.k {
            csv.push_str(&format!(",ratio_to_{j}"));
        }
        csv.push('\n');
        for i in 0..self.k {
            csv.push_str(&i.to_string());
            for j in 0..self.k {
                match self.ratio(i, j) {
                    Some(r) => csv.push_str(&format!(",{}", fmt_sig6(r))),
                    None => csv.push(','),
                }
            }
            csv.push('\n');
        }
        csv
    }
}

/// Count retweet flows between assigned communities. The diagonal is
/// counted too; it feeds the internal/cross split.
pub fn rt_flows(events: &[RetweetEvent], assignment: &CommunityAssignment) -> RtFlowMatrix {
    let mut flows = RtFlowMatrix::new(assignment.k());
    for event in events {
        match (
            assignment.user_label(&event.retweeter_id),
            assignment.user_label(&event.original_user_id),
        ) {
            (Some(from), Some(to)) => flows.add(from as usize, to as usize),
            _ => flows.excluded += 1,
        }
    }
    flows
}

/// Share of community i's cross-group retweets that target community j:
/// each off-diagonal entry divided by its row's off-diagonal sum.
pub fn rt_ratio(flows: &RtFlowMatrix) -> RtRatioMatrix {
    let k = flows.k();
    let mut ratios = vec![None; k * k];
    for i in 0..k {
        let denom: u64 = (0..k).filter(|&j| j != i).map(|j| flows.count(i, j)).sum();
        if denom == 0 {
            continue;
        }
        for j in 0..k {
            if j != i {
                ratios[i * k + j] = Some(flows.count(i, j) as f64 / denom as f64);
            }
        }
    }
    RtRatioMatrix { k, ratios }
}

/// Events partitioned by whether retweeter and original author share a
/// community. Events with an unassigned endpoint land in `dropped`.
#[derive(Debug, Default)]
pub struct SplitEvents<'a> {
    pub internal: Vec<&'a RetweetEvent>,
    pub cross: Vec<&'a RetweetEvent>,
    pub dropped: Vec<&'a RetweetEvent>,
}

pub fn split_internal_cross<'a>(
    events: &'a [RetweetEvent],
    assignment: &CommunityAssignment,
) -> SplitEvents<'a> {
    let mut split = SplitEvents::default();
    for event in events {
        match (
            assignment.user_label(&event.retweeter_id),
            assignment.user_label(&event.original_user_id),
        ) {
            (Some(a), Some(b)) if a == b => split.internal.push(event),
            (Some(_), Some(_)) => split.cross.push(event),
            _ => split.dropped.push(event),
        }
    }
    split
}

/// Right-continuous empirical CDF over integer-second response times.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<u64>,
}

impl Ecdf {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of the sample at or below `t`.
    pub fn fraction_at(&self, t: u64) -> Result<f64, MetricsError> {
        if self.sorted.is_empty() {
            return Err(MetricsError::EmptySample);
        }
        let below = self.sorted.partition_point(|&x| x <= t);
        Ok(below as f64 / self.sorted.len() as f64)
    }

    /// (t, fraction <= t) at every distinct sample point.
    pub fn steps(&self) -> Vec<(u64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out = Vec::new();
        for (i, &t) in self.sorted.iter().enumerate() {
            if i + 1 == self.sorted.len() || self.sorted[i + 1] != t {
                out.push((t, (i + 1) as f64 / n));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("t_seconds,fraction\n");
        for (t, fraction) in self.steps() {
            csv.push_str(&format!("{t},{}\n", fmt_sig6(fraction)));
        }
        csv
    }
}

pub fn ecdf(times: &[u64]) -> Ecdf {
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    Ecdf { sorted }
}

/// `mean + 2 * population std` late-retweet boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LateThreshold {
    pub mean_s: f64,
    pub std_s: f64,
    pub threshold_s: f64,
    /// A zero-variance sample makes every at-mean event late; callers should
    /// surface this rather than hide it.
    pub degenerate: bool,
}

pub fn late_threshold(times: &[u64]) -> Result<LateThreshold, MetricsError> {
    if times.len() < 2 {
        return Err(MetricsError::InsufficientSample {
            needed: 2,
            got: times.len(),
        });
    }
    let n = times.len() as f64;
    let mean = times.iter().map(|&t| t as f64).sum::<f64>() / n;
    let var = times
        .iter()
        .map(|&t| {
            let d = t as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    Ok(LateThreshold {
        mean_s: mean,
        std_s: std,
        threshold_s: mean + 2.0 * std,
        degenerate: std == 0.0,
    })
}

impl LateThreshold {
    pub fn is_late_time(&self, response_time_s: u64) -> bool {
        response_time_s as f64 >= self.threshold_s
    }
}

pub fn classify_late(event: &RetweetEvent, threshold: &LateThreshold) -> bool {
    threshold.is_late_time(event.response_time)
}

/// Author attributes observed across a record set. Conflicting observations
/// merge deterministically: verified is sticky, followers take the max.
#[derive(Debug, Clone, Default)]
pub struct UserAttributeMap {
    attrs: HashMap<String, (bool, u64)>,
}

impl UserAttributeMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, record: &TweetRecord) {
        let entry = self
            .attrs
            .entry(record.user_id.clone())
            .or_insert((false, 0));
        entry.0 |= record.user_verified;
        entry.1 = entry.1.max(record.user_followers);
    }

    pub fn from_records<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a TweetRecord>,
    {
        let mut map = Self::new();
        for record in records {
            map.observe(record);
        }
        map
    }

    pub fn get(&self, user_id: &str) -> Option<(bool, u64)> {
        self.attrs.get(user_id).copied()
    }
}

/// Fractions for one cohort of events. A `None` fraction means the
/// denominator was empty; `attr_excluded` counts events whose target author
/// had no observable attributes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortAttributes {
    pub n_events: u64,
    pub verified_fraction: Option<f64>,
    pub big_follower_fraction: Option<f64>,
    pub reciprocal_fraction: Option<f64>,
    pub attr_excluded: u64,
}

/// Late-vs-early target attributes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeBreakdown {
    pub late: CohortAttributes,
    pub early: CohortAttributes,
}

impl AttributeBreakdown {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }
}

fn cohort_attributes(
    events: &[&RetweetEvent],
    attrs: &UserAttributeMap,
    reciprocal: &HashSet<(String, String)>,
) -> CohortAttributes {
    let mut with_attrs = 0u64;
    let mut verified = 0u64;
    let mut big = 0u64;
    let mut recip = 0u64;
    let mut excluded = 0u64;
    for event in events {
        match attrs.get(&event.original_user_id) {
            Some((is_verified, followers)) => {
                with_attrs += 1;
                if is_verified {
                    verified += 1;
                }
                if followers >= BIG_FOLLOWER_MIN {
                    big += 1;
                }
            }
            None => excluded += 1,
        }
        let pair = (event.retweeter_id.clone(), event.original_user_id.clone());
        if reciprocal.contains(&pair) {
            recip += 1;
        }
    }
    let n = events.len() as u64;
    let frac = |num: u64, den: u64| {
        if den == 0 {
            None
        } else {
            Some(round_sig6(num as f64 / den as f64))
        }
    };
    CohortAttributes {
        n_events: n,
        verified_fraction: frac(verified, with_attrs),
        big_follower_fraction: frac(big, with_attrs),
        reciprocal_fraction: frac(recip, n),
        attr_excluded: excluded,
    }
}

/// Reciprocal retweeterer pairs over the full event set: (u, v) such that u
/// retweeted v and v retweeted u at least once each, at any time.
pub fn reciprocal_pairs(events: &[RetweetEvent]) -> HashSet<(String, String)> {
    let mut directed: HashSet<(&str, &str)> = HashSet::new();
    for event in events {
        directed.insert((&event.retweeter_id, &event.original_user_id));
    }
    let mut reciprocal = HashSet::new();
    for &(u, v) in &directed {
        if directed.contains(&(v, u)) {
            reciprocal.insert((u.to_string(), v.to_string()));
        }
    }
    reciprocal
}

/// Split `events` into late/early cohorts at `threshold` and measure how
/// often each cohort targets verified, large-follower, and reciprocal
/// authors. Reciprocity is derived from the full `events` set.
pub fn attribute_breakdown(
    events: &[RetweetEvent],
    threshold: &LateThreshold,
    attrs: &UserAttributeMap,
) -> AttributeBreakdown {
    let reciprocal = reciprocal_pairs(events);
    let (late, early): (Vec<&RetweetEvent>, Vec<&RetweetEvent>) =
        events.iter().partition(|e| classify_late(e, threshold));
    AttributeBreakdown {
        late: cohort_attributes(&late, attrs, &reciprocal),
        early: cohort_attributes(&early, attrs, &reciprocal),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::CommunityAssignment;
    use crate::graph::NodeId;
    use crate::ingest::RetweetKind;

    fn event(retweeter: &str, author: &str, message: &str, response: u64) -> RetweetEvent {
        RetweetEvent {
            retweeter_id: retweeter.to_string(),
            original_user_id: author.to_string(),
            original_tweet_id: message.to_string(),
            retweet_posted_at: 1_000_000 + response,
            original_posted_at: 1_000_000,
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
    fn flows_count_by_endpoint_labels() {
        let assignment = labels(&[("u", 0), ("v", 1)], 3);
        let events = vec![event("u", "v", "m", 5)];
        let flows = rt_flows(&events, &assignment);
        assert_eq!(flows.count(0, 1), 1);
        assert_eq!(flows.count(1, 0), 0);
        assert_eq!(flows.excluded, 0);
    }

    #[test]
    fn unassigned_endpoints_are_excluded_and_counted() {
        let assignment = labels(&[("v", 1)], 2);
        let events = vec![event("ghost", "v", "m", 5)];
        let flows = rt_flows(&events, &assignment);
        assert_eq!(flows.excluded, 1);
        assert_eq!((0..2).map(|i| flows.count(i, 1)).sum::<u64>(), 0);
    }

    #[test]
    fn ratio_normalizes_rows_off_diagonal() {
        let flows = RtFlowMatrix::from_counts(
            3,
            &[vec![7, 3, 1], vec![0, 0, 0], vec![2, 2, 0]],
        );
        let ratios = rt_ratio(&flows);
        assert_eq!(ratios.ratio(0, 0), None);
        assert_eq!(ratios.ratio(0, 1), Some(0.75));
        assert_eq!(ratios.ratio(0, 2), Some(0.25));
        // zero-flow row stays absent
        assert_eq!(ratios.ratio(1, 0), None);
        assert_eq!(ratios.ratio(1, 2), None);
        assert_eq!(ratios.ratio(2, 0), Some(0.5));
        assert_eq!(ratios.argmax_target(0), Some(1));
    }

    #[test]
    fn two_community_ratios_degenerate_to_one() {
        let flows = RtFlowMatrix::from_counts(2, &[vec![10, 4], vec![9, 3]]);
        let ratios = rt_ratio(&flows);
        assert_eq!(ratios.ratio(0, 1), Some(1.0));
        assert_eq!(ratios.ratio(1, 0), Some(1.0));
    }

    #[test]
    fn split_partitions_without_loss() {
        let assignment = labels(&[("a", 0), ("b", 0), ("c", 1)], 2);
        let events = vec![
            event("a", "b", "m1", 1),
            event("a", "c", "m2", 2),
            event("x", "c", "m3", 3),
        ];
        let split = split_internal_cross(&events, &assignment);
        assert_eq!(split.internal.len(), 1);
        assert_eq!(split.cross.len(), 1);
        assert_eq!(split.dropped.len(), 1);
        assert_eq!(
            split.internal.len() + split.cross.len() + split.dropped.len(),
            events.len()
        );
    }

    #[test]
    fn ecdf_matches_hand_counts() {
        let cdf = ecdf(&[10, 20, 30]);
        assert_eq!(cdf.fraction_at(20).unwrap(), 2.0 / 3.0);
        assert_eq!(cdf.fraction_at(9).unwrap(), 0.0);
        assert_eq!(cdf.fraction_at(1_000_000).unwrap(), 1.0);
        assert_eq!(
            cdf.steps(),
            vec![(10, 1.0 / 3.0), (20, 2.0 / 3.0), (30, 1.0)]
        );
    }

    #[test]
    fn empty_ecdf_rejects_queries() {
        let cdf = ecdf(&[]);
        assert_eq!(cdf.fraction_at(5), Err(MetricsError::EmptySample));
    }

    #[test]
    fn threshold_is_mean_plus_two_population_stds() {
        // {0, 2m} has population mean m and std m, so the boundary is 3m.
        let m = 36_000u64;
        let t = late_threshold(&[0, 2 * m]).unwrap();
        assert_eq!(t.mean_s, m as f64);
        assert_eq!(t.std_s, m as f64);
        assert_eq!(t.threshold_s, 3.0 * m as f64);
        assert!(!t.degenerate);
    }

    #[test]
    fn constant_sample_is_degenerate_and_late_at_mean() {
        let t = late_threshold(&[100, 100, 100]).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.threshold_s, 100.0);
        assert!(t.is_late_time(100));
        assert!(!t.is_late_time(99));
    }

    #[test]
    fn threshold_needs_two_samples() {
        assert_eq!(
            late_threshold(&[5]),
            Err(MetricsError::InsufficientSample { needed: 2, got: 1 })
        );
    }

    fn plain_record(user: &str, verified: bool, followers: u64) -> TweetRecord {
        TweetRecord {
            tweet_id: format!("t_{user}"),
            user_id: user.to_string(),
            posted_at: 0,
            text: "x".to_string(),
            retweet_of: None,
            user_verified: verified,
            user_followers: followers,
            is_reply: false,
        }
    }

    #[test]
    fn breakdown_counts_attributes_per_cohort() {
        let records = vec![
            plain_record("v1", true, 500_000),
            plain_record("v2", false, 50),
        ];
        let attrs = UserAttributeMap::from_records(&records);
        // 18 early events split across both targets, 2 late targeting v1.
        // With q = 0.1 of the mass at M, mean + 2 std = 0.7 M < M.
        let mut events = Vec::new();
        for i in 0..9 {
            events.push(event(&format!("e{i}"), "v1", "m1", 0));
            events.push(event(&format!("f{i}"), "v2", "m2", 0));
        }
        events.push(event("c", "v1", "m1", 10_000_000));
        events.push(event("d", "v1", "m1", 10_000_000));
        let threshold = late_threshold(
            &events.iter().map(|e| e.response_time).collect::<Vec<_>>(),
        )
        .unwrap();
        let breakdown = attribute_breakdown(&events, &threshold, &attrs);
        assert_eq!(breakdown.late.n_events, 2);
        assert_eq!(breakdown.early.n_events, 18);
        assert_eq!(breakdown.late.verified_fraction, Some(1.0));
        assert_eq!(breakdown.late.big_follower_fraction, Some(1.0));
        assert_eq!(breakdown.early.verified_fraction, Some(0.5));
        assert_eq!(breakdown.late.reciprocal_fraction, Some(0.0));
    }

    #[test]
    fn unknown_authors_are_excluded_from_attr_denominators() {
        let attrs = UserAttributeMap::from_records(&[plain_record("v1", true, 10)]);
        let events = vec![event("a", "v1", "m1", 0), event("a", "ghost", "m2", 0)];
        let threshold = LateThreshold {
            mean_s: 0.0,
            std_s: 0.0,
            threshold_s: 1e9,
            degenerate: false,
        };
        let breakdown = attribute_breakdown(&events, &threshold, &attrs);
        assert_eq!(breakdown.early.attr_excluded, 1);
        assert_eq!(breakdown.early.verified_fraction, Some(1.0));
    }

    #[test]
    fn reciprocity_is_direction_symmetric() {
        let events = vec![
            event("a", "b", "m1", 0),
            event("b", "a", "m2", 0),
            event("c", "a", "m3", 0),
        ];
        let pairs = reciprocal_pairs(&events);
        assert!(pairs.contains(&("a".to_string(), "b".to_string())));
        assert!(pairs.contains(&("b".to_string(), "a".to_string())));
        assert!(!pairs.contains(&("c".to_string(), "a".to_string())));
    }
}
