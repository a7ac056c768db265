//! JSON Lines tweet ingestion: record parsing, retweet classification,
//! retweet-event derivation and dataset summaries.
//!
//! The input schema is one flat JSON object per line with the fields of
//! [`TweetRecord`]. Unknown fields are ignored; malformed lines are skipped
//! and counted, never fatal. All timestamps are UTC unix seconds and no
//! timezone arithmetic happens anywhere.

use std::collections::HashSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds per hour, used when reporting response-time statistics.
const SECS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing required field '{0}'")]
    MissingField(String),
    #[error("bad timestamp: {0}")]
    BadTimestamp(String),
}

/// How a retweet was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetweetKind {
    /// Triggered through the platform's retweet button; always carries the
    /// original posting time.
    Native,
    /// Hand-typed `RT @username message` with no leading commentary.
    Manual,
    /// Retweet with commentary prepended to the quoted content.
    Quote,
}

/// Outcome of [`classify_retweet`]; total over all records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Native,
    Manual,
    Quote,
    NotRetweet,
}

impl Classification {
    pub fn to_kind(self) -> Option<RetweetKind> {
        match self {
            Classification::Native => Some(RetweetKind::Native),
            Classification::Manual => Some(RetweetKind::Manual),
            Classification::Quote => Some(RetweetKind::Quote),
            Classification::NotRetweet => None,
        }
    }
}

/// Provenance block attached to a record that shares another message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetweetProvenance {
    pub original_tweet_id: String,
    pub original_user_id: String,
    /// Unix seconds of the original posting. Always present for native
    /// retweets; manual/quote provenance may not know it, and such events
    /// are excluded from every response-time analysis.
    pub original_posted_at: Option<u64>,
    pub kind: RetweetKind,
}

/// One parsed input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    /// UTC unix seconds.
    pub posted_at: u64,
    pub text: String,
    pub retweet_of: Option<RetweetProvenance>,
    pub user_verified: bool,
    pub user_followers: u64,
    pub is_reply: bool,
}

/// Derived edge: retweeter toward the original message and its author.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetweetEvent {
    pub retweeter_id: String,
    pub original_user_id: String,
    pub original_tweet_id: String,
    pub retweet_posted_at: u64,
    pub original_posted_at: u64,
    /// `retweet_posted_at - original_posted_at`, exact integer seconds.
    pub response_time: u64,
    pub kind: RetweetKind,
}

/// Counts and native response-time statistics for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_records: u64,
    pub n_users: u64,
    pub n_native_rt: u64,
    pub n_manual_rt: u64,
    pub n_quote_rt: u64,
    pub n_replies: u64,
    pub rt_mean_hours: Option<f64>,
    pub rt_median_hours: Option<f64>,
    pub rt_std_hours: Option<f64>,
    pub n_malformed: u64,
}

#[derive(Deserialize)]
struct RawProvenance {
    original_tweet_id: Option<String>,
    original_user_id: Option<String>,
    original_posted_at: Option<i64>,
    kind: Option<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    tweet_id: Option<String>,
    user_id: Option<String>,
    posted_at: Option<i64>,
    text: Option<String>,
    retweet_of: Option<RawProvenance>,
    user_verified: Option<bool>,
    user_followers: Option<i64>,
    is_reply: Option<bool>,
}

fn require<T>(value: Option<T>, name: &str) -> Result<T, ParseError> {
    value.ok_or_else(|| ParseError::MissingField(name.to_string()))
}

fn require_nonempty(value: Option<String>, name: &str) -> Result<String, ParseError> {
    let s = require(value, name)?;
    if s.is_empty() {
        return Err(ParseError::MissingField(name.to_string()));
    }
    Ok(s)
}

/// Parse one JSON line into a [`TweetRecord`].
///
/// Unknown fields are ignored. Schema violations map to the three error
/// kinds the caller is expected to count and skip.
pub fn parse_record(line: &str) -> Result<TweetRecord, ParseError> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| ParseError::MalformedJson(e.to_string()))?;

    let tweet_id = require_nonempty(raw.tweet_id, "tweet_id")?;
    let user_id = require_nonempty(raw.user_id, "user_id")?;
    let posted_at = require(raw.posted_at, "posted_at")?;
    if posted_at < 0 {
        return Err(ParseError::BadTimestamp(format!(
            "posted_at {posted_at} is negative"
        )));
    }
    let posted_at = posted_at as u64;
    let text = require(raw.text, "text")?;
    let user_verified = require(raw.user_verified, "user_verified")?;
    let followers = require(raw.user_followers, "user_followers")?;
    if followers < 0 {
        return Err(ParseError::MalformedJson(format!(
            "user_followers {followers} is negative"
        )));
    }

    let retweet_of = match raw.retweet_of {
        None => None,
        Some(prov) => {
            let kind = match require(prov.kind, "retweet_of.kind")?.as_str() {
                "native" => RetweetKind::Native,
                "manual" => RetweetKind::Manual,
                "quote" => RetweetKind::Quote,
                other => {
                    return Err(ParseError::MalformedJson(format!(
                        "retweet_of.kind '{other}' is not one of native/manual/quote"
                    )))
                }
            };
            let original_posted_at = match prov.original_posted_at {
                Some(ts) if ts < 0 => {
                    return Err(ParseError::BadTimestamp(format!(
                        "retweet_of.original_posted_at {ts} is negative"
                    )))
                }
                Some(ts) => Some(ts as u64),
                None if kind == RetweetKind::Native => {
                    return Err(ParseError::MissingField(
                        "retweet_of.original_posted_at".to_string(),
                    ))
                }
                None => None,
            };
            if let Some(orig) = original_posted_at {
                if orig > posted_at {
                    return Err(ParseError::BadTimestamp(format!(
                        "original_posted_at {orig} is after posted_at {posted_at}"
                    )));
                }
            }
            Some(RetweetProvenance {
                original_tweet_id: require_nonempty(
                    prov.original_tweet_id,
                    "retweet_of.original_tweet_id",
                )?,
                original_user_id: require_nonempty(
                    prov.original_user_id,
                    "retweet_of.original_user_id",
                )?,
                original_posted_at,
                kind,
            })
        }
    };

    Ok(TweetRecord {
        tweet_id,
        user_id,
        posted_at,
        text,
        retweet_of,
        user_verified,
        user_followers: followers as u64,
        is_reply: raw.is_reply.unwrap_or(false),
    })
}

// `rest` is the part after "RT @": a username of word characters followed
// by a space and a non-empty message.
fn username_then_message(rest: &str) -> bool {
    let name_len = rest
        .bytes()
        .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
        .count();
    if name_len == 0 {
        return false;
    }
    let after = &rest[name_len..];
    after.starts_with(' ') && after.len() > 1
}

fn manual_retweet_text(text: &str) -> bool {
    match text.strip_prefix("RT @") {
        Some(rest) => username_then_message(rest),
        None => false,
    }
}

fn quoted_retweet_text(text: &str) -> bool {
    let mut from = 0;
    while let Some(pos) = text[from..].find(" RT @") {
        let at = from + pos;
        if !text[..at].trim().is_empty() && username_then_message(&text[at + 5..]) {
            return true;
        }
        from = at + 1;
    }
    false
}

/// Classify how (and whether) a record retweets another message.
///
/// Provenance metadata beats text-pattern matching; the four outcomes are
/// mutually exclusive.
pub fn classify_retweet(record: &TweetRecord) -> Classification {
    if let Some(prov) = &record.retweet_of {
        return match prov.kind {
            RetweetKind::Native => Classification::Native,
            RetweetKind::Manual => Classification::Manual,
            RetweetKind::Quote => Classification::Quote,
        };
    }
    if manual_retweet_text(&record.text) {
        return Classification::Manual;
    }
    if quoted_retweet_text(&record.text) {
        return Classification::Quote;
    }
    Classification::NotRetweet
}

/// Derive the retweet edge with its response time.
///
/// Returns `None` for non-retweets and for retweets whose original posting
/// time is unknown (text-pattern matches without provenance, or manual/quote
/// provenance without a timestamp).
pub fn to_retweet_event(record: &TweetRecord) -> Option<RetweetEvent> {
    let kind = classify_retweet(record).to_kind()?;
    let prov = record.retweet_of.as_ref()?;
    let original_posted_at = prov.original_posted_at?;
    Some(RetweetEvent {
        retweeter_id: record.user_id.clone(),
        original_user_id: prov.original_user_id.clone(),
        original_tweet_id: prov.original_tweet_id.clone(),
        retweet_posted_at: record.posted_at,
        original_posted_at,
        response_time: record.posted_at - original_posted_at,
        kind,
    })
}

/// Single-pass summary accumulator. Two accumulators over a split stream
/// merge into the accumulator of the concatenated stream.
#[derive(Debug, Clone, Default)]
pub struct SummaryBuilder {
    n_records: u64,
    users: HashSet<String>,
    n_native_rt: u64,
    n_manual_rt: u64,
    n_quote_rt: u64,
    n_replies: u64,
    n_malformed: u64,
    native_response_s: Vec<u64>,
}

impl SummaryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_record(&mut self, record: &TweetRecord) {
        self.n_records += 1;
        if !self.users.contains(record.user_id.as_str()) {
            self.users.insert(record.user_id.clone());
        }
        if let Some(prov) = &record.retweet_of {
            if !self.users.contains(prov.original_user_id.as_str()) {
                self.users.insert(prov.original_user_id.clone());
            }
        }
        if record.is_reply {
            self.n_replies += 1;
        }
        match classify_retweet(record) {
            Classification::Native => {
                self.n_native_rt += 1;
                if let Some(event) = to_retweet_event(record) {
                    self.native_response_s.push(event.response_time);
                }
            }
            Classification::Manual => self.n_manual_rt += 1,
            Classification::Quote => self.n_quote_rt += 1,
            Classification::NotRetweet => {}
        }
    }

    pub fn add_malformed(&mut self) {
        self.n_malformed += 1;
    }

    pub fn merge(&mut self, other: SummaryBuilder) {
        self.n_records += other.n_records;
        self.users.extend(other.users);
        self.n_native_rt += other.n_native_rt;
        self.n_manual_rt += other.n_manual_rt;
        self.n_quote_rt += other.n_quote_rt;
        self.n_replies += other.n_replies;
        self.n_malformed += other.n_malformed;
        self.native_response_s.extend(other.native_response_s);
    }

    pub fn finish(mut self) -> DatasetSummary {
        let (mean, median, std) = if self.native_response_s.is_empty() {
            (None, None, None)
        } else {
            self.native_response_s.sort_unstable();
            let n = self.native_response_s.len();
            let sum: f64 = self.native_response_s.iter().map(|&t| t as f64).sum();
            let mean_s = sum / n as f64;
            let var: f64 = self
                .native_response_s
                .iter()
                .map(|&t| {
                    let d = t as f64 - mean_s;
                    d * d
                })
                .sum::<f64>()
                / n as f64;
            let median_s = if n % 2 == 1 {
                self.native_response_s[n / 2] as f64
            } else {
                (self.native_response_s[n / 2 - 1] as f64 + self.native_response_s[n / 2] as f64)
                    / 2.0
            };
            (
                Some(mean_s / SECS_PER_HOUR),
                Some(median_s / SECS_PER_HOUR),
                Some(var.sqrt() / SECS_PER_HOUR),
            )
        };
        DatasetSummary {
            n_records: self.n_records,
            n_users: self.users.len() as u64,
            n_native_rt: self.n_native_rt,
            n_manual_rt: self.n_manual_rt,
            n_quote_rt: self.n_quote_rt,
            n_replies: self.n_replies,
            rt_mean_hours: mean,
            rt_median_hours: median,
            rt_std_hours: std,
            n_malformed: self.n_malformed,
        }
    }
}

/// Summarize an in-memory record set (malformed count supplied by the reader).
pub fn summarize_dataset<'a, I>(records: I, n_malformed: u64) -> DatasetSummary
where
    I: IntoIterator<Item = &'a TweetRecord>,
{
    let mut builder = SummaryBuilder::new();
    for record in records {
        builder.add_record(record);
    }
    builder.n_malformed = n_malformed;
    builder.finish()
}

/// Stream a JSON Lines reader straight into a summary without keeping records.
/// Blank lines are skipped without counting; malformed lines are counted.
pub fn summarize_reader<R: BufRead>(reader: R) -> std::io::Result<DatasetSummary> {
    let mut builder = SummaryBuilder::new();
    for_each_record(reader, |parsed| match parsed {
        Ok(record) => builder.add_record(&record),
        Err(_) => builder.add_malformed(),
    })?;
    Ok(builder.finish())
}

/// Read every non-blank line, invoking `f` with the parse result.
pub fn for_each_record<R, F>(mut reader: R, mut f: F) -> std::io::Result<()>
where
    R: BufRead,
    F: FnMut(Result<TweetRecord, ParseError>),
{
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.trim().is_empty() {
            continue;
        }
        f(parse_record(trimmed));
    }
    Ok(())
}

/// Collect all parseable records, returning the malformed-line count alongside.
pub fn read_records<R: BufRead>(reader: R) -> std::io::Result<(Vec<TweetRecord>, u64)> {
    let mut records = Vec::new();
    let mut malformed = 0u64;
    for_each_record(reader, |parsed| match parsed {
        Ok(record) => records.push(record),
        Err(_) => malformed += 1,
    })?;
    Ok((records, malformed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_line() -> String {
        concat!(
            r#"{"tweet_id":"t1","user_id":"alice","posted_at":1000,"text":"hello","#,
            r#""user_verified":true,"user_followers":120000}"#
        )
        .to_string()
    }

    fn native_rt_line(posted_at: u64, original_posted_at: u64) -> String {
        format!(
            concat!(
                r#"{{"tweet_id":"t2","user_id":"bob","posted_at":{},"text":"hello","#,
                r#""retweet_of":{{"original_tweet_id":"t1","original_user_id":"alice","#,
                r#""original_posted_at":{},"kind":"native"}},"#,
                r#""user_verified":false,"user_followers":10}}"#
            ),
            posted_at, original_posted_at
        )
    }

    #[test]
    fn parses_plain_record_without_retweet_block() {
        let record = parse_record(&full_line()).unwrap();
        assert_eq!(record.tweet_id, "t1");
        assert_eq!(record.user_id, "alice");
        assert_eq!(record.posted_at, 1000);
        assert!(record.retweet_of.is_none());
        assert!(record.user_verified);
        assert_eq!(record.user_followers, 120_000);
        assert!(!record.is_reply);
    }

    #[test]
    fn ignores_unknown_fields() {
        let line = r#"{"tweet_id":"t1","user_id":"a","posted_at":5,"text":"x","user_verified":false,"user_followers":0,"lang":"pt","extra":[1,2]}"#;
        assert!(parse_record(line).is_ok());
    }

    #[test]
    fn rejects_retweet_from_the_future() {
        let line = native_rt_line(1000, 2000);
        assert!(matches!(
            parse_record(&line),
            Err(ParseError::BadTimestamp(_))
        ));
    }

    #[test]
    fn rejects_missing_fields_by_name() {
        let line = r#"{"user_id":"a","posted_at":5,"text":"x","user_verified":false,"user_followers":0}"#;
        assert_eq!(
            parse_record(line),
            Err(ParseError::MissingField("tweet_id".to_string()))
        );
    }

    #[test]
    fn rejects_native_provenance_without_original_time() {
        let line = r#"{"tweet_id":"t","user_id":"a","posted_at":5,"text":"x","retweet_of":{"original_tweet_id":"o","original_user_id":"b","kind":"native"},"user_verified":false,"user_followers":0}"#;
        assert_eq!(
            parse_record(line),
            Err(ParseError::MissingField(
                "retweet_of.original_posted_at".to_string()
            ))
        );
    }

    #[test]
    fn manual_quote_provenance_may_omit_original_time() {
        let line = r#"{"tweet_id":"t","user_id":"a","posted_at":5,"text":"x","retweet_of":{"original_tweet_id":"o","original_user_id":"b","kind":"manual"},"user_verified":false,"user_followers":0}"#;
        let record = parse_record(line).unwrap();
        assert_eq!(record.retweet_of.unwrap().original_posted_at, None);
    }

    #[test]
    fn rejects_broken_json() {
        assert!(matches!(
            parse_record(r#"{"tweet_id":"t1""#),
            Err(ParseError::MalformedJson(_))
        ));
    }

    fn text_record(text: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: "t".into(),
            user_id: "u".into(),
            posted_at: 0,
            text: text.into(),
            retweet_of: None,
            user_verified: false,
            user_followers: 0,
            is_reply: false,
        }
    }

    #[test]
    fn classifies_manual_retweet_text() {
        assert_eq!(
            classify_retweet(&text_record("RT @alice hello")),
            Classification::Manual
        );
    }

    #[test]
    fn classifies_quote_retweet_text() {
        assert_eq!(
            classify_retweet(&text_record("Cool! RT @alice hello")),
            Classification::Quote
        );
    }

    #[test]
    fn classifies_plain_text_as_not_retweet() {
        assert_eq!(
            classify_retweet(&text_record("just a tweet about RT prices")),
            Classification::NotRetweet
        );
        assert_eq!(
            classify_retweet(&text_record("RT @alice")),
            Classification::NotRetweet
        );
    }

    #[test]
    fn provenance_beats_text_patterns() {
        let mut record = text_record("RT @alice hello");
        record.retweet_of = Some(RetweetProvenance {
            original_tweet_id: "o".into(),
            original_user_id: "alice".into(),
            original_posted_at: Some(0),
            kind: RetweetKind::Native,
        });
        assert_eq!(classify_retweet(&record), Classification::Native);
    }

    #[test]
    fn response_time_is_exact_subtraction() {
        let record = parse_record(&native_rt_line(864, 0)).unwrap();
        let event = to_retweet_event(&record).unwrap();
        assert_eq!(event.response_time, 864);

        let record = parse_record(&native_rt_line(500, 500)).unwrap();
        assert_eq!(to_retweet_event(&record).unwrap().response_time, 0);
    }

    #[test]
    fn no_event_without_original_time() {
        let line = r#"{"tweet_id":"t","user_id":"a","posted_at":5,"text":"x","retweet_of":{"original_tweet_id":"o","original_user_id":"b","kind":"quote"},"user_verified":false,"user_followers":0}"#;
        let record = parse_record(line).unwrap();
        assert_eq!(classify_retweet(&record), Classification::Quote);
        assert!(to_retweet_event(&record).is_none());
    }

    #[test]
    fn empty_stream_summarizes_to_zeros() {
        let summary = summarize_dataset([], 0);
        assert_eq!(summary.n_records, 0);
        assert_eq!(summary.n_users, 0);
        assert_eq!(summary.rt_mean_hours, None);
        assert_eq!(summary.rt_median_hours, None);
    }

    #[test]
    fn summary_statistics_over_native_retweets() {
        let records: Vec<TweetRecord> = [1u64, 2, 3]
            .iter()
            .map(|h| parse_record(&native_rt_line(h * 3600, 0)).unwrap())
            .collect();
        let summary = summarize_dataset(&records, 0);
        assert_eq!(summary.n_native_rt, 3);
        assert_eq!(summary.rt_mean_hours, Some(2.0));
        assert_eq!(summary.rt_median_hours, Some(2.0));
    }

    #[test]
    fn reader_counts_malformed_and_blank_lines() {
        let data = format!("{}\n\nnot json\n{}\n", full_line(), native_rt_line(10, 0));
        let (records, malformed) = read_records(data.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(malformed, 1);
    }

    #[test]
    fn summary_merge_matches_concatenation() {
        let a: Vec<TweetRecord> = (0..7)
            .map(|i| parse_record(&native_rt_line(100 + i * 13, i)).unwrap())
            .collect();
        let b: Vec<TweetRecord> = (0..4)
            .map(|i| parse_record(&native_rt_line(5000 + i * 97, i * 2)).unwrap())
            .collect();

        let mut left = SummaryBuilder::new();
        for r in &a {
            left.add_record(r);
        }
        let mut right = SummaryBuilder::new();
        for r in &b {
            right.add_record(r);
        }
        right.add_malformed();
        left.merge(right);

        let mut whole = SummaryBuilder::new();
        for r in a.iter().chain(&b) {
            whole.add_record(r);
        }
        whole.add_malformed();

        assert_eq!(left.finish(), whole.finish());
    }
}
