//! Analytics for retweet graphs where shares are not endorsements.
//!
//! The pipeline ingests JSON Lines tweet records, builds a weighted
//! bipartite user-message graph, detects communities by seeded random walks
//! with restart, and derives four antagonism signals on top of the
//! assignment: cross-group retweet-flow ratios, internal-vs-cross
//! response-time distributions, late-retweet classification with target
//! attributes, and temporal drift/spike detection. A deterministic
//! synthetic-corpus generator provides planted ground truth for all of it.

pub mod community;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod numfmt;
pub mod synth;
pub mod temporal;

pub use community::{
    assign_communities, detect_communities, rwr_proximities, validate_assignment,
    CommunityAssignment, CommunityError, ProximityVector, RwrParams, SeedSet, ValidationReport,
};
pub use graph::{
    build_bipartite, from_weighted_edges, BipartiteRetweetGraph, GraphError, NodeId, NodeKind,
};
pub use ingest::{
    classify_retweet, parse_record, read_records, summarize_dataset, summarize_reader,
    to_retweet_event, Classification, DatasetSummary, ParseError, RetweetEvent,
    RetweetProvenance, RetweetKind, SummaryBuilder, TweetRecord,
};
pub use metrics::{
    attribute_breakdown, classify_late, ecdf, late_threshold, reciprocal_pairs, rt_flows,
    rt_ratio, split_internal_cross, AttributeBreakdown, Ecdf, LateThreshold, MetricsError,
    RtFlowMatrix, RtRatioMatrix, SplitEvents, UserAttributeMap, BIG_FOLLOWER_MIN,
};
pub use synth::{generate, generate_to_string, GroundTruth, SynthConfig, SynthError};
pub use temporal::{
    daily_p95_series, detect_all_reversals, detect_reversal, detect_spikes, reversal_curve,
    DriftEvent, ReversalCurve, ReversalParams, SpikeReport, SpikeSeries, TemporalError,
};
