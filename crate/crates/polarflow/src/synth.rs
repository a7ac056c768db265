//! Deterministic synthetic-corpus generator with planted ground truth.
//!
//! Emits the exact JSON Lines schema the ingest module reads, plus a sidecar
//! [`GroundTruth`] describing what was planted: community memberships,
//! late-retweet flags, expected flow counts, polarity flips and spike days.
//! Identical configs produce byte-identical corpora.
//!
//! Response times come from two disjoint supports so classifier oracles are
//! exact: "normal" times are log-normal below 16 hours with a log-uniform
//! tail capped strictly under 30 days, and planted-late times are
//! log-uniform over a configurable window starting at or above 30 days.
//! Within one corpus the normal median and over-16h mass are exact
//! distributional quantities, not approximations.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::community::CommunityAssignment;
use crate::graph::NodeId;
use crate::metrics::BIG_FOLLOWER_MIN;

/// 16 hours, the response-time landmark the normal tail is calibrated to.
pub const SIXTEEN_HOURS_S: u64 = 57_600;
/// Normal and planted-late supports are disjoint at this boundary.
pub const DISJOINT_BOUNDARY_DAYS: f64 = 30.0;
const SECS_PER_DAY: u64 = 86_400;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("write failed: {0}")]
    Io(String),
}

/// One planted polarity reversal: a dedicated message authored by
/// `author_community` that gets `pre_retweets` early same-community retweets
/// and, from `flip_day` on, `post_retweets` late retweets dominated by
/// `flip_community` at `post_flip_share`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalPlant {
    pub author_community: u32,
    pub flip_community: u32,
    pub flip_day: u64,
    pub post_flip_share: f64,
    pub pre_retweets: usize,
    pub post_retweets: usize,
}

/// One planted event day: rivals retweet years-old messages of `community`
/// until `late_burst_fraction` of that day's retweets of the community's
/// messages are out-of-context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikePlant {
    /// Day offset from `base_time`.
    pub day: u64,
    pub community: u32,
    pub late_burst_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub k: usize,
    pub users_per_community: usize,
    pub messages_per_community: usize,
    /// Unordered rival community pairs.
    pub rivalry_pairs: Vec<(u32, u32)>,
    /// Expected retweets per message from each community.
    pub intra_rt_rate: f64,
    pub cross_rt_rate_rival: f64,
    pub cross_rt_rate_neutral: f64,
    /// Median of the normal response-time distribution, seconds.
    pub normal_median_s: f64,
    /// Log-normal shape; determines the mass above 16 hours.
    pub sigma_log: f64,
    /// Planted-late support, days. The lower bound must stay at or above 30
    /// days to keep the supports disjoint.
    pub late_min_days: f64,
    pub late_max_days: f64,
    /// Fraction of cross-rival retweets that are planted late.
    pub late_fraction_cross: f64,
    /// Fraction of users that are verified / have >= 100k followers.
    pub verified_rate: f64,
    pub big_follower_rate: f64,
    /// Multiplier on the verified / big-follower targeting rates among
    /// planted-late retweets.
    pub late_attr_boost: f64,
    pub reversal_plants: Vec<ReversalPlant>,
    pub spike_plants: Vec<SpikePlant>,
    /// Unix seconds, midnight-aligned; messages post uniformly across
    /// `duration_days` from here.
    pub base_time: u64,
    pub duration_days: u64,
    /// Broken JSON lines interleaved into the output.
    pub malformed_lines: usize,
    pub rng_seed: u64,
}

/// Shape parameter that puts `tail_mass` of a log-normal with the given
/// median above 16 hours.
pub fn sigma_for_16h_tail(median_s: f64, tail_mass: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (SIXTEEN_HOURS_S as f64 / median_s).ln() / normal.inverse_cdf(1.0 - tail_mass)
}

impl Default for SynthConfig {
    /// Three communities with one rival pair, a 5x assortative rate
    /// structure, and one planted reversal.
    fn default() -> Self {
        SynthConfig {
            k: 3,
            users_per_community: 100,
            messages_per_community: 50,
            rivalry_pairs: vec![(0, 1)],
            intra_rt_rate: 10.0,
            cross_rt_rate_rival: 2.0,
            cross_rt_rate_neutral: 0.4,
            normal_median_s: 864.0, // 0.24 h
            sigma_log: sigma_for_16h_tail(864.0, 0.10),
            late_min_days: 30.0,
            late_max_days: 2105.0,
            late_fraction_cross: 0.1,
            verified_rate: 0.17,
            big_follower_rate: 0.23,
            late_attr_boost: 4.0,
            reversal_plants: vec![ReversalPlant {
                author_community: 0,
                flip_community: 1,
                flip_day: 277,
                post_flip_share: 0.95,
                pre_retweets: 40,
                post_retweets: 100,
            }],
            spike_plants: Vec::new(),
            base_time: 1_356_998_400, // 2013-01-01T00:00:00Z
            duration_days: 365,
            malformed_lines: 0,
            rng_seed: 42,
        }
    }
}

impl SynthConfig {
    /// Twelve communities grouped into four rivalry clusters of sizes
    /// 2, 4, 2 and 4, every within-cluster pair rival.
    pub fn twelve_community_rivalry() -> Self {
        let clusters: [&[u32]; 4] = [&[0, 1], &[2, 3, 4, 5], &[6, 7], &[8, 9, 10, 11]];
        let mut pairs = Vec::new();
        for cluster in clusters {
            for (n, &a) in cluster.iter().enumerate() {
                for &b in &cluster[n + 1..] {
                    pairs.push((a, b));
                }
            }
        }
        SynthConfig {
            k: 12,
            users_per_community: 50,
            messages_per_community: 30,
            rivalry_pairs: pairs,
            reversal_plants: Vec::new(),
            rng_seed: 7,
            ..SynthConfig::default()
        }
    }

    /// Two cohorts of 10k retweets calibrated to 10% (internal) and 30%
    /// (cross) mass above 16 hours.
    pub fn ecdf_calibration() -> Self {
        SynthConfig {
            k: 2,
            users_per_community: 100,
            messages_per_community: 100,
            rivalry_pairs: vec![(0, 1)],
            intra_rt_rate: 50.0,
            cross_rt_rate_rival: 50.0,
            cross_rt_rate_neutral: 0.0,
            // cross mass over 16h = lf + (1 - lf) * 0.10 = 0.30
            late_fraction_cross: 2.0 / 9.0,
            reversal_plants: Vec::new(),
            rng_seed: 11,
            ..SynthConfig::default()
        }
    }

    /// Out-of-context retweets planted at 385-2105 days over a sub-hour
    /// median background, with verified/big-follower targeting boosted 4x
    /// among them.
    pub fn late_classifier() -> Self {
        SynthConfig {
            k: 2,
            users_per_community: 100,
            messages_per_community: 400,
            rivalry_pairs: vec![(0, 1)],
            intra_rt_rate: 30.0,
            cross_rt_rate_rival: 10.0,
            cross_rt_rate_neutral: 0.0,
            late_min_days: 385.0,
            late_fraction_cross: 0.05,
            reversal_plants: Vec::new(),
            rng_seed: 13,
            ..SynthConfig::default()
        }
    }

    /// A simulated year with dense daily activity and three planted event
    /// days of out-of-context retweet bursts.
    pub fn spike_year() -> Self {
        SynthConfig {
            k: 2,
            users_per_community: 200,
            messages_per_community: 730,
            rivalry_pairs: vec![(0, 1)],
            intra_rt_rate: 50.0,
            cross_rt_rate_rival: 2.0,
            cross_rt_rate_neutral: 0.0,
            late_fraction_cross: 0.0,
            reversal_plants: Vec::new(),
            spike_plants: vec![
                SpikePlant {
                    day: 100,
                    community: 0,
                    late_burst_fraction: 0.4,
                },
                SpikePlant {
                    day: 200,
                    community: 0,
                    late_burst_fraction: 0.4,
                },
                SpikePlant {
                    day: 300,
                    community: 1,
                    late_burst_fraction: 0.4,
                },
            ],
            rng_seed: 17,
            ..SynthConfig::default()
        }
    }

    /// Large flat corpus (about a million lines) for ingest throughput runs.
    pub fn ingest_throughput() -> Self {
        SynthConfig {
            k: 2,
            users_per_community: 2000,
            messages_per_community: 2000,
            rivalry_pairs: vec![(0, 1)],
            intra_rt_rate: 240.0,
            cross_rt_rate_rival: 5.0,
            cross_rt_rate_neutral: 0.0,
            late_fraction_cross: 0.01,
            reversal_plants: Vec::new(),
            malformed_lines: 1234,
            rng_seed: 23,
            ..SynthConfig::default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(SynthConfig::default()),
            "rivalry12" => Some(SynthConfig::twelve_community_rivalry()),
            "ecdf" => Some(SynthConfig::ecdf_calibration()),
            "late" => Some(SynthConfig::late_classifier()),
            "spikes" => Some(SynthConfig::spike_year()),
            "throughput" => Some(SynthConfig::ingest_throughput()),
            _ => None,
        }
    }

    pub fn is_rival(&self, a: u32, b: u32) -> bool {
        self.rivalry_pairs
            .iter()
            .any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    pub fn rivals_of(&self, c: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .rivalry_pairs
            .iter()
            .filter_map(|&(a, b)| {
                if a == c {
                    Some(b)
                } else if b == c {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn rate(&self, from: u32, to: u32) -> f64 {
        if from == to {
            self.intra_rt_rate
        } else if self.is_rival(from, to) {
            self.cross_rt_rate_rival
        } else {
            self.cross_rt_rate_neutral
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.k < 2 {
            return fail(format!("k: need at least 2 communities, got {}", self.k));
        }
        if self.users_per_community == 0 {
            return fail("users_per_community: must be positive".into());
        }
        if self.messages_per_community == 0 {
            return fail("messages_per_community: must be positive".into());
        }
        for &(a, b) in &self.rivalry_pairs {
            if a == b {
                return fail(format!("rivalry_pairs: ({a},{b}) is reflexive"));
            }
            if a as usize >= self.k || b as usize >= self.k {
                return fail(format!("rivalry_pairs: ({a},{b}) outside 0..{}", self.k));
            }
        }
        for (name, rate) in [
            ("intra_rt_rate", self.intra_rt_rate),
            ("cross_rt_rate_rival", self.cross_rt_rate_rival),
            ("cross_rt_rate_neutral", self.cross_rt_rate_neutral),
        ] {
            if !rate.is_finite() || rate < 0.0 {
                return fail(format!("{name}: must be a non-negative finite rate"));
            }
        }
        for (name, fraction) in [
            ("late_fraction_cross", self.late_fraction_cross),
            ("verified_rate", self.verified_rate),
            ("big_follower_rate", self.big_follower_rate),
        ] {
            if !(0.0..=1.0).contains(&fraction) {
                return fail(format!("{name}: {fraction} outside [0,1]"));
            }
        }
        if self.late_attr_boost < 0.0 {
            return fail("late_attr_boost: must be non-negative".into());
        }
        if !(self.normal_median_s > 0.0 && self.normal_median_s < SIXTEEN_HOURS_S as f64) {
            return fail(format!(
                "normal_median_s: {} must lie in (0, 16h)",
                self.normal_median_s
            ));
        }
        if !(self.sigma_log > 0.0) {
            return fail("sigma_log: must be positive".into());
        }
        if self.late_min_days < DISJOINT_BOUNDARY_DAYS {
            return fail(format!(
                "late_min_days: {} under the {DISJOINT_BOUNDARY_DAYS}-day disjointness boundary",
                self.late_min_days
            ));
        }
        if self.late_max_days < self.late_min_days {
            return fail("late_max_days: below late_min_days".into());
        }
        if self.duration_days == 0 {
            return fail("duration_days: must be positive".into());
        }
        if self.base_time % SECS_PER_DAY != 0 {
            return fail("base_time: must be midnight-aligned (multiple of 86400)".into());
        }
        let oldest_needed = (self.late_max_days.ceil() as u64 + self.duration_days + 10)
            .saturating_mul(SECS_PER_DAY);
        if self.base_time < oldest_needed {
            return fail(format!(
                "base_time: must be at least {oldest_needed} so years-old messages stay at non-negative timestamps"
            ));
        }
        for (i, plant) in self.reversal_plants.iter().enumerate() {
            if plant.author_community as usize >= self.k
                || plant.flip_community as usize >= self.k
            {
                return fail(format!("reversal_plants[{i}]: community outside 0..{}", self.k));
            }
            if plant.author_community == plant.flip_community {
                return fail(format!(
                    "reversal_plants[{i}]: author and flip community must differ"
                ));
            }
            if (plant.flip_day as f64) <= DISJOINT_BOUNDARY_DAYS {
                return fail(format!(
                    "reversal_plants[{i}]: flip_day must exceed the {DISJOINT_BOUNDARY_DAYS}-day normal support"
                ));
            }
            if !(0.0..=1.0).contains(&plant.post_flip_share) {
                return fail(format!("reversal_plants[{i}]: post_flip_share outside [0,1]"));
            }
        }
        for (i, plant) in self.spike_plants.iter().enumerate() {
            if plant.community as usize >= self.k {
                return fail(format!("spike_plants[{i}]: community outside 0..{}", self.k));
            }
            if plant.day >= self.duration_days {
                return fail(format!(
                    "spike_plants[{i}]: day {} outside 0..{}",
                    plant.day, self.duration_days
                ));
            }
            if !(0.0..1.0).contains(&plant.late_burst_fraction) {
                return fail(format!("spike_plants[{i}]: late_burst_fraction outside [0,1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFlip {
    pub message_id: String,
    pub flip_time_s: u64,
    pub from_community: u32,
    pub to_community: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpike {
    pub unix_day: u64,
    pub community: u32,
    pub burst_events: u64,
}

/// Everything the generator planted, for oracle checks downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub k: usize,
    pub n_records: u64,
    pub n_malformed: u64,
    pub user_community: BTreeMap<String, u32>,
    pub message_community: BTreeMap<String, u32>,
    /// First user of each community, a natural seed choice.
    pub seed_users: Vec<String>,
    /// Tweet ids of planted-late retweets, sorted.
    pub planted_late: Vec<String>,
    /// Rate-derived expectation plus exact planted contributions.
    pub expected_flows: Vec<Vec<f64>>,
    /// Exact per-(retweeter community, author community) event counts.
    pub actual_flows: Vec<Vec<u64>>,
    pub planted_flips: Vec<PlantedFlip>,
    pub planted_spikes: Vec<PlantedSpike>,
}

impl GroundTruth {
    /// Whether an event with these endpoints crosses communities; `None`
    /// when either user is unknown.
    pub fn is_cross(&self, retweeter_id: &str, original_user_id: &str) -> Option<bool> {
        let a = self.user_community.get(retweeter_id)?;
        let b = self.user_community.get(original_user_id)?;
        Some(a != b)
    }

    /// Exact assignment over every planted user and message.
    pub fn assignment(&self) -> CommunityAssignment {
        let users = self
            .user_community
            .iter()
            .map(|(id, &c)| (NodeId::user(id.clone()), c));
        let messages = self
            .message_community
            .iter()
            .map(|(id, &c)| (NodeId::message(id.clone()), c));
        CommunityAssignment::from_labels(self.k, users.chain(messages))
    }

    pub fn seed_csv(&self) -> String {
        let mut csv = String::new();
        for (community, user) in self.seed_users.iter().enumerate() {
            csv.push_str(&format!("{community},{user}\n"));
        }
        csv
    }
}

#[derive(Serialize)]
struct WireProvenance<'a> {
    original_tweet_id: &'a str,
    original_user_id: &'a str,
    original_posted_at: u64,
    kind: &'a str,
}

#[derive(Serialize)]
struct WireRecord<'a> {
    tweet_id: &'a str,
    user_id: &'a str,
    posted_at: u64,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    retweet_of: Option<WireProvenance<'a>>,
    user_verified: bool,
    user_followers: u64,
}

/// Spliced response-time sampler; see the module docs.
struct ResponseSampler {
    median_s: f64,
    sigma: f64,
    /// CDF mass of the log-normal at 16h; the tail above it is log-uniform.
    body_mass: f64,
    tail_lo_ln: f64,
    tail_hi_ln: f64,
    late_lo_ln: f64,
    late_hi_ln: f64,
    late_lo_s: u64,
    late_hi_s: u64,
    unit_normal: Normal,
}

impl ResponseSampler {
    fn new(config: &SynthConfig) -> Self {
        let unit_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let a = (SIXTEEN_HOURS_S as f64 / config.normal_median_s).ln() / config.sigma_log;
        let boundary_s = DISJOINT_BOUNDARY_DAYS * SECS_PER_DAY as f64;
        let late_lo_s = (config.late_min_days * SECS_PER_DAY as f64).round();
        let late_hi_s = (config.late_max_days * SECS_PER_DAY as f64).round();
        ResponseSampler {
            median_s: config.normal_median_s,
            sigma: config.sigma_log,
            body_mass: unit_normal.cdf(a),
            tail_lo_ln: (SIXTEEN_HOURS_S as f64 + 1.0).ln(),
            tail_hi_ln: boundary_s.ln(),
            late_lo_ln: late_lo_s.ln(),
            late_hi_ln: late_hi_s.ln(),
            late_lo_s: late_lo_s as u64,
            late_hi_s: late_hi_s as u64,
            unit_normal,
        }
    }

    /// Normal response: exact log-normal below 16h, log-uniform on
    /// (16h, 30d). Always strictly under 30 days.
    fn draw_normal(&self, rng: &mut ChaCha8Rng) -> u64 {
        let u: f64 = rng.random();
        if u >= self.body_mass {
            let ln_t = self.tail_lo_ln + rng.random::<f64>() * (self.tail_hi_ln - self.tail_lo_ln);
            let t = ln_t.exp() as u64;
            t.clamp(
                SIXTEEN_HOURS_S + 1,
                DISJOINT_BOUNDARY_DAYS as u64 * SECS_PER_DAY - 1,
            )
        } else {
            let p = (rng.random::<f64>() * self.body_mass).clamp(1e-300, 1.0 - 1e-12);
            let t = self.median_s * (self.sigma * self.unit_normal.inverse_cdf(p)).exp();
            (t as u64).min(SIXTEEN_HOURS_S)
        }
    }

    /// Planted-late response: log-uniform over the configured window,
    /// always at least 30 days.
    fn draw_late(&self, rng: &mut ChaCha8Rng) -> u64 {
        let ln_t = self.late_lo_ln + rng.random::<f64>() * (self.late_hi_ln - self.late_lo_ln);
        (ln_t.exp() as u64).clamp(self.late_lo_s, self.late_hi_s)
    }
}

/// Shuffled round-robin so every user participates evenly but in random order.
struct UserCycler {
    order: Vec<usize>,
    cursor: usize,
}

impl UserCycler {
    fn new(n: usize) -> Self {
        UserCycler {
            order: (0..n).collect(),
            cursor: n, // force a shuffle on first use
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.cursor >= self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let v = self.order[self.cursor];
        self.cursor += 1;
        v
    }
}

struct UserInfo {
    id: String,
    verified: bool,
    followers: u64,
}

struct MessageInfo {
    id: String,
    community: u32,
    author_idx: usize,
    posted_at: u64,
    text: String,
}

// Bresenham-style quota: marks floor((i+1)*rate) - floor(i*rate) == 1.
fn quota_flag(i: usize, rate: f64) -> bool {
    (((i + 1) as f64 * rate).floor() as u64) > ((i as f64 * rate).floor() as u64)
}

struct Emitter {
    users: Vec<Vec<UserInfo>>,
    lines: Vec<(u64, String, String)>, // (posted_at, tweet_id, json)
    actual_flows: Vec<Vec<u64>>,
    planted_flows: Vec<Vec<u64>>,
    planted_late: Vec<String>,
    day_counts: BTreeMap<(u64, u32), u64>,
    rt_seq: u64,
}

impl Emitter {
    fn push_message(&mut self, message: &MessageInfo) {
        let author = &self.users[message.community as usize][message.author_idx];
        let record = WireRecord {
            tweet_id: &message.id,
            user_id: &author.id,
            posted_at: message.posted_at,
            text: &message.text,
            retweet_of: None,
            user_verified: author.verified,
            user_followers: author.followers,
        };
        self.lines.push((
            message.posted_at,
            message.id.clone(),
            serde_json::to_string(&record).expect("record serializes"),
        ));
    }

    fn push_retweet(
        &mut self,
        retweeter_community: u32,
        retweeter_idx: usize,
        message: &MessageInfo,
        response_s: u64,
        planted_late: bool,
        planted: bool,
    ) {
        let retweeter = &self.users[retweeter_community as usize][retweeter_idx];
        let posted_at = message.posted_at + response_s;
        let tweet_id = format!("r{:08}", self.rt_seq);
        self.rt_seq += 1;
        let record = WireRecord {
            tweet_id: &tweet_id,
            user_id: &retweeter.id,
            posted_at,
            text: &message.text,
            retweet_of: Some(WireProvenance {
                original_tweet_id: &message.id,
                original_user_id: &self.users[message.community as usize][message.author_idx].id,
                original_posted_at: message.posted_at,
                kind: "native",
            }),
            user_verified: retweeter.verified,
            user_followers: retweeter.followers,
        };
        let json = serde_json::to_string(&record).expect("record serializes");
        self.lines.push((posted_at, tweet_id.clone(), json));
        self.actual_flows[retweeter_community as usize][message.community as usize] += 1;
        if planted {
            self.planted_flows[retweeter_community as usize][message.community as usize] += 1;
        }
        if planted_late {
            self.planted_late.push(tweet_id);
        }
        *self
            .day_counts
            .entry((posted_at / SECS_PER_DAY, message.community))
            .or_insert(0) += 1;
    }
}

/// Generate a corpus, writing JSON lines to `out` and returning the planted
/// truth. Deterministic for a fixed config.
pub fn generate<W: Write>(config: &SynthConfig, mut out: W) -> Result<GroundTruth, SynthError> {
    config.validate()?;
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let sampler = ResponseSampler::new(config);

    // Users with evenly spread attribute quotas.
    let users: Vec<Vec<UserInfo>> = (0..k)
        .map(|c| {
            (0..config.users_per_community)
                .map(|i| {
                    let verified = quota_flag(i, config.verified_rate);
                    let big = quota_flag(i, config.big_follower_rate);
                    let followers = if big {
                        BIG_FOLLOWER_MIN + (i as u64 * 7919) % 400_000
                    } else {
                        (i as u64 * 977) % (BIG_FOLLOWER_MIN - 1_000)
                    };
                    UserInfo {
                        id: format!("u{c}_{i:04}"),
                        verified,
                        followers,
                    }
                })
                .collect()
        })
        .collect();

    // Organic messages, evenly spaced over the corpus window with jitter.
    let duration_s = config.duration_days * SECS_PER_DAY;
    let slot = (duration_s / config.messages_per_community as u64).max(1);
    let mut messages: Vec<MessageInfo> = Vec::new();
    let mut organic: Vec<Vec<usize>> = vec![Vec::new(); k]; // per community
    for c in 0..k as u32 {
        for j in 0..config.messages_per_community {
            let start = (j as u64 * duration_s) / config.messages_per_community as u64;
            let posted_at = config.base_time + start + rng.random_range(0..slot);
            organic[c as usize].push(messages.len());
            messages.push(MessageInfo {
                id: format!("m{c}_{j:05}"),
                community: c,
                author_idx: j % config.users_per_community,
                posted_at,
                text: format!("group {c} update {j}"),
            });
        }
    }

    let mut emitter = Emitter {
        users,
        lines: Vec::new(),
        actual_flows: vec![vec![0; k]; k],
        planted_flows: vec![vec![0; k]; k],
        planted_late: Vec::new(),
        day_counts: BTreeMap::new(),
        rt_seq: 0,
    };

    for &m in organic.iter().flatten() {
        emitter.push_message(&messages[m]);
    }

    // Message pools by (verified, big) author attributes, for boosted
    // late-retweet targeting.
    let attr_pools: Vec<[Vec<usize>; 4]> = (0..k)
        .map(|c| {
            let mut pools: [Vec<usize>; 4] = Default::default();
            for &m in &organic[c] {
                let author = &emitter.users[c][messages[m].author_idx];
                let bucket = (author.verified as usize) * 2
                    + (author.followers >= BIG_FOLLOWER_MIN) as usize;
                pools[bucket].push(m);
            }
            pools
        })
        .collect();

    let mut cyclers: Vec<UserCycler> = (0..k)
        .map(|_| UserCycler::new(config.users_per_community))
        .collect();

    // Organic retweets: deterministic per-message quotas, with the rival
    // late fraction interleaved evenly and re-targeted by attribute boost.
    let p_verified_late = (config.late_attr_boost * config.verified_rate).min(1.0);
    let p_big_late = (config.late_attr_boost * config.big_follower_rate).min(1.0);
    for i in 0..k as u32 {
        for j in 0..k as u32 {
            let rate = config.rate(i, j);
            if rate <= 0.0 {
                continue;
            }
            let rival = i != j && config.is_rival(i, j);
            let late_fraction = if rival { config.late_fraction_cross } else { 0.0 };
            let mut acc = 0.0f64;
            let mut slot_index = 0usize;
            for &m in &organic[j as usize] {
                acc += rate;
                let count = acc.floor() as usize;
                acc -= count as f64;
                for _ in 0..count {
                    let is_late = late_fraction > 0.0 && quota_flag(slot_index, late_fraction);
                    slot_index += 1;
                    let retweeter = cyclers[i as usize].next(&mut rng);
                    if is_late {
                        let want_v = rng.random::<f64>() < p_verified_late;
                        let want_b = rng.random::<f64>() < p_big_late;
                        let preference = [
                            (want_v as usize) * 2 + want_b as usize,
                            (want_v as usize) * 2 + !want_b as usize,
                            (!want_v as usize) * 2 + want_b as usize,
                            (!want_v as usize) * 2 + !want_b as usize,
                        ];
                        let pools = &attr_pools[j as usize];
                        let pool = preference
                            .iter()
                            .map(|&p| &pools[p])
                            .find(|pool| !pool.is_empty())
                            .expect("community has messages");
                        let target = pool[rng.random_range(0..pool.len())];
                        let response = sampler.draw_late(&mut rng);
                        emitter.push_retweet(i, retweeter, &messages[target], response, true, false);
                    } else {
                        let response = sampler.draw_normal(&mut rng);
                        emitter.push_retweet(i, retweeter, &messages[m], response, false, false);
                    }
                }
            }
        }
    }

    // Reversal plants: a dedicated message each, same-community early
    // retweets, then a dominated late burst from the flip community.
    let mut planted_flips = Vec::new();
    for (p, plant) in config.reversal_plants.iter().enumerate() {
        let a = plant.author_community;
        let b = plant.flip_community;
        let message = MessageInfo {
            id: format!("mr{p:03}"),
            community: a,
            author_idx: p % config.users_per_community,
            posted_at: config.base_time + rng.random_range(0..SECS_PER_DAY),
            text: format!("bold prediction {p} from group {a}"),
        };
        emitter.push_message(&message);
        for _ in 0..plant.pre_retweets {
            let retweeter = cyclers[a as usize].next(&mut rng);
            let response = sampler.draw_normal(&mut rng);
            emitter.push_retweet(a, retweeter, &message, response, false, true);
        }
        let flip_s = plant.flip_day * SECS_PER_DAY;
        let post_window_s = 3 * SECS_PER_DAY;
        let minority = 1.0 - plant.post_flip_share;
        for e in 0..plant.post_retweets {
            let from_author_side = quota_flag(e, minority);
            let community = if from_author_side { a } else { b };
            let retweeter = cyclers[community as usize].next(&mut rng);
            let response = flip_s + rng.random_range(0..post_window_s);
            emitter.push_retweet(community, retweeter, &message, response, true, true);
        }
        planted_flips.push(PlantedFlip {
            message_id: message.id.clone(),
            flip_time_s: flip_s,
            from_community: a,
            to_community: b,
        });
        messages.push(message);
    }

    // Spike plants: bursts of retweets of years-old messages, sized so the
    // planted fraction of that day's retweets of the community is hit.
    let mut planted_spikes = Vec::new();
    for (p, plant) in config.spike_plants.iter().enumerate() {
        let c = plant.community;
        let day_start = config.base_time + plant.day * SECS_PER_DAY;
        let unix_day = day_start / SECS_PER_DAY;
        let organic_that_day = emitter
            .day_counts
            .get(&(unix_day, c))
            .copied()
            .unwrap_or(0);
        let f = plant.late_burst_fraction;
        let burst = ((organic_that_day as f64) * f / (1.0 - f)).round() as u64;
        let n_old = 5usize;
        let old_messages: Vec<MessageInfo> = (0..n_old)
            .map(|o| {
                let age_days = 500 + 180 * o as u64;
                MessageInfo {
                    id: format!("ms{p:02}_{o}"),
                    community: c,
                    author_idx: (p * n_old + o) % config.users_per_community,
                    posted_at: day_start - age_days * SECS_PER_DAY,
                    text: format!("old take {o} from group {c}"),
                }
            })
            .collect();
        for message in &old_messages {
            emitter.push_message(message);
        }
        let rival = config
            .rivals_of(c)
            .first()
            .copied()
            .unwrap_or((c + 1) % k as u32);
        for e in 0..burst {
            let message = &old_messages[e as usize % n_old];
            let retweeter = cyclers[rival as usize].next(&mut rng);
            let retweet_at = day_start + rng.random_range(0..SECS_PER_DAY);
            let response = retweet_at - message.posted_at;
            emitter.push_retweet(rival, retweeter, message, response, true, true);
        }
        planted_spikes.push(PlantedSpike {
            unix_day,
            community: c,
            burst_events: burst,
        });
        messages.extend(old_messages);
    }

    let truth = GroundTruth {
        k,
        n_records: emitter.lines.len() as u64,
        n_malformed: config.malformed_lines as u64,
        user_community: emitter
            .users
            .iter()
            .enumerate()
            .flat_map(|(c, users)| users.iter().map(move |u| (u.id.clone(), c as u32)))
            .collect(),
        message_community: messages
            .iter()
            .map(|m| (m.id.clone(), m.community))
            .collect(),
        seed_users: (0..k).map(|c| format!("u{c}_0000")).collect(),
        planted_late: {
            let mut ids = emitter.planted_late.clone();
            ids.sort_unstable();
            ids
        },
        expected_flows: (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        config.messages_per_community as f64 * config.rate(i as u32, j as u32)
                            + emitter.planted_flows[i][j] as f64
                    })
                    .collect()
            })
            .collect(),
        actual_flows: emitter.actual_flows.clone(),
        planted_flips,
        planted_spikes,
    };

    // Emit time-sorted with malformed lines interleaved evenly.
    emitter
        .lines
        .sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let n_lines = emitter.lines.len();
    let malformed = config.malformed_lines;
    let mut emitted_malformed = 0usize;
    let io = |e: std::io::Error| SynthError::Io(e.to_string());
    for (i, (_, _, json)) in emitter.lines.iter().enumerate() {
        while emitted_malformed < malformed
            && i * (malformed + 1) >= (emitted_malformed + 1) * n_lines
        {
            writeln!(out, "{{\"tweet_id\":\"corrupt-{emitted_malformed}\"").map_err(io)?;
            emitted_malformed += 1;
        }
        writeln!(out, "{json}").map_err(io)?;
    }
    while emitted_malformed < malformed {
        writeln!(out, "{{\"tweet_id\":\"corrupt-{emitted_malformed}\"").map_err(io)?;
        emitted_malformed += 1;
    }

    Ok(truth)
}

/// In-memory convenience wrapper around [`generate`].
pub fn generate_to_string(config: &SynthConfig) -> Result<(String, GroundTruth), SynthError> {
    let mut buffer = Vec::new();
    let truth = generate(config, &mut buffer)?;
    Ok((
        String::from_utf8(buffer).expect("generator emits UTF-8"),
        truth,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_records, to_retweet_event, RetweetKind};

    #[test]
    fn minimal_config_emits_only_messages() {
        let config = SynthConfig {
            k: 2,
            users_per_community: 1,
            messages_per_community: 1,
            intra_rt_rate: 0.0,
            cross_rt_rate_rival: 0.0,
            cross_rt_rate_neutral: 0.0,
            reversal_plants: Vec::new(),
            ..SynthConfig::default()
        };
        let (corpus, truth) = generate_to_string(&config).unwrap();
        let (records, malformed) = read_records(corpus.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(malformed, 0);
        assert_eq!(truth.n_records, 2);
        assert!(records.iter().all(|r| r.retweet_of.is_none()));
    }

    #[test]
    fn generation_is_byte_deterministic() {
        let config = SynthConfig {
            users_per_community: 20,
            messages_per_community: 10,
            ..SynthConfig::default()
        };
        let (a, truth_a) = generate_to_string(&config).unwrap();
        let (b, truth_b) = generate_to_string(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(truth_a, truth_b);

        let other_seed = SynthConfig {
            rng_seed: 43,
            ..config
        };
        let (c, _) = generate_to_string(&other_seed).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn corpus_parses_cleanly_and_satisfies_record_invariants() {
        let (corpus, truth) = generate_to_string(&SynthConfig::default()).unwrap();
        let (records, malformed) = read_records(corpus.as_bytes()).unwrap();
        assert_eq!(malformed, 0);
        assert_eq!(records.len() as u64, truth.n_records);
        let mut ids = std::collections::HashSet::new();
        for record in &records {
            assert!(ids.insert(record.tweet_id.clone()), "duplicate tweet id");
            if let Some(prov) = &record.retweet_of {
                assert!(prov.original_posted_at.unwrap() <= record.posted_at);
                assert_eq!(prov.kind, RetweetKind::Native);
            }
        }
    }

    #[test]
    fn malformed_lines_are_planted_exactly() {
        let config = SynthConfig {
            users_per_community: 20,
            messages_per_community: 10,
            malformed_lines: 7,
            ..SynthConfig::default()
        };
        let (corpus, truth) = generate_to_string(&config).unwrap();
        let total_lines = corpus.lines().count();
        let (records, malformed) = read_records(corpus.as_bytes()).unwrap();
        assert_eq!(malformed, 7);
        assert_eq!(truth.n_malformed, 7);
        assert_eq!(records.len(), total_lines - 7);
    }

    #[test]
    fn late_and_normal_supports_are_disjoint() {
        let (corpus, truth) = generate_to_string(&SynthConfig::default()).unwrap();
        let (records, _) = read_records(corpus.as_bytes()).unwrap();
        let boundary = (DISJOINT_BOUNDARY_DAYS * SECS_PER_DAY as f64) as u64;
        let late_ids: std::collections::HashSet<&str> =
            truth.planted_late.iter().map(|s| s.as_str()).collect();
        let mut seen_late = 0;
        for record in &records {
            let Some(event) = to_retweet_event(record) else {
                continue;
            };
            if late_ids.contains(record.tweet_id.as_str()) {
                seen_late += 1;
                assert!(event.response_time >= boundary, "late under 30d");
            } else {
                assert!(event.response_time < boundary, "normal over 30d");
            }
        }
        assert!(seen_late > 0);
        assert_eq!(seen_late, truth.planted_late.len());
    }

    #[test]
    fn actual_flows_match_a_recount_of_the_corpus() {
        let (corpus, truth) = generate_to_string(&SynthConfig::default()).unwrap();
        let (records, _) = read_records(corpus.as_bytes()).unwrap();
        let mut recount = vec![vec![0u64; truth.k]; truth.k];
        for record in &records {
            if let Some(event) = to_retweet_event(record) {
                let i = truth.user_community[&event.retweeter_id] as usize;
                let j = truth.user_community[&event.original_user_id] as usize;
                recount[i][j] += 1;
            }
        }
        assert_eq!(recount, truth.actual_flows);
    }

    #[test]
    fn organic_flows_stay_near_rate_expectations() {
        let config = SynthConfig {
            reversal_plants: Vec::new(),
            ..SynthConfig::default()
        };
        let (_, truth) = generate_to_string(&config).unwrap();
        for i in 0..truth.k {
            for j in 0..truth.k {
                let expected = truth.expected_flows[i][j];
                let actual = truth.actual_flows[i][j] as f64;
                if expected >= 10.0 {
                    assert!(
                        (actual - expected).abs() <= 0.1 * expected,
                        "flow ({i},{j}): actual {actual} vs expected {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected_with_field_names() {
        let bad_k = SynthConfig {
            k: 1,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_to_string(&bad_k),
            Err(SynthError::InvalidConfig(msg)) if msg.contains("k:")
        ));

        let bad_late = SynthConfig {
            late_min_days: 5.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_to_string(&bad_late),
            Err(SynthError::InvalidConfig(msg)) if msg.contains("late_min_days")
        ));

        let bad_pair = SynthConfig {
            rivalry_pairs: vec![(2, 2)],
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate_to_string(&bad_pair),
            Err(SynthError::InvalidConfig(msg)) if msg.contains("rivalry_pairs")
        ));
    }

    #[test]
    fn presets_validate() {
        for name in ["default", "rivalry12", "ecdf", "late", "spikes", "throughput"] {
            let config = SynthConfig::preset(name).unwrap();
            config.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(SynthConfig::preset("nope").is_none());
    }
}
