//! Batch CLI wiring the pipeline end to end.
//!
//! Every subcommand reads JSON Lines corpora, emits plot-ready CSV/JSON
//! artifacts into `--out-dir`, and is byte-deterministic for fixed inputs.
//! Options may come from a flat `key = value` config file (`--config`);
//! command-line flags win. Exit codes: 0 success, 1 input error, 2 internal
//! error. Diagnostics go to standard error.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use polarflow::community::{detect_communities, validate_assignment, RwrParams, SeedSet};
use polarflow::graph::{build_bipartite, NodeId};
use polarflow::ingest::{
    for_each_record, to_retweet_event, RetweetEvent, RetweetKind, SummaryBuilder,
};
use polarflow::metrics::{
    attribute_breakdown, ecdf, late_threshold, rt_flows, rt_ratio, split_internal_cross,
    LateThreshold, UserAttributeMap,
};
use polarflow::numfmt::{fmt_sig6, round_sig6};
use polarflow::synth::{generate, GroundTruth, SynthConfig};
use polarflow::temporal::{
    daily_p95_series, detect_all_reversals, detect_spikes, reversal_curve, ReversalParams,
};

#[derive(Debug)]
enum CliError {
    /// Bad flags, config, input files, or their contents.
    Input(String),
    /// Failures writing artifacts or other unexpected conditions.
    Internal(String),
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    fn internal(msg: impl Into<String>) -> Self {
        CliError::Internal(msg.into())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "polarflow",
    about = "Retweet-graph community and antagonism-signal analytics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset summary (counts and native response-time statistics).
    Summarize(CommonArgs),
    /// Seeded community detection; assignment CSV plus optional validation.
    Communities(CommonArgs),
    /// Cross-group retweet flow and ratio matrices.
    Rtratio(CommonArgs),
    /// Internal vs cross-group response-time ECDFs.
    Rtcdf(CommonArgs),
    /// Late-retweet threshold and target-attribute breakdown.
    Late(CommonArgs),
    /// Per-message polarity-reversal curves and drift detection.
    Reversal(CommonArgs),
    /// Daily p95 response-time series and spike detection.
    Spikes(CommonArgs),
    /// Generate a synthetic corpus with planted ground truth.
    Synth(CommonArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Input JSON Lines corpus; repeatable.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Seed file: one `community_id,user_id` line per community.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Directory artifacts are written into.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Flat key = value option file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth sidecar for validation (communities subcommand).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Restart probability of the random walk (default 0.85).
    #[arg(long)]
    restart_prob: Option<f64>,
    /// L1 convergence tolerance (default 1e-9).
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for the random walk (default 10000).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Reversal-curve bin width in seconds (default 86400).
    #[arg(long)]
    bin_width_s: Option<u64>,
    /// Dominance share for reversal detection (default 0.8).
    #[arg(long)]
    dominance: Option<f64>,
    /// Robust z cutoff for spike detection (default 3.5).
    #[arg(long)]
    robust_z: Option<f64>,
    /// Minimum samples: per reversal bin (default 5) or per day (default 20).
    #[arg(long)]
    min_samples: Option<u64>,
    /// Generator seed override (synth subcommand).
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Generator preset: default, rivalry12, ecdf, late, spikes, throughput.
    #[arg(long)]
    preset: Option<String>,
    /// Also dump the reversal curve of this message id.
    #[arg(long)]
    message_id: Option<String>,
}

/// Fully resolved options: flags over config file over defaults.
struct RunConfig {
    inputs: Vec<PathBuf>,
    seeds: Option<PathBuf>,
    out_dir: PathBuf,
    truth: Option<PathBuf>,
    rwr: RwrParams,
    bin_width_s: u64,
    dominance: f64,
    robust_z: f64,
    min_samples: Option<u64>,
    rng_seed: Option<u64>,
    preset: String,
    message_id: Option<String>,
}

fn parse_config_file(path: &Path) -> CliResult<HashMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::input(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parsed<T: std::str::FromStr>(map: &HashMap<String, String>, key: &str) -> CliResult<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| CliError::input(format!("config key '{key}': cannot parse '{raw}'"))),
    }
}

impl RunConfig {
    fn resolve(args: &CommonArgs) -> CliResult<Self> {
        let file = match &args.config {
            Some(path) => parse_config_file(path)?,
            None => HashMap::new(),
        };
        let inputs = if args.input.is_empty() {
            file.get("input")
                .map(|v| v.split(',').map(PathBuf::from).collect())
                .unwrap_or_default()
        } else {
            args.input.clone()
        };
        let seeds = args
            .seeds
            .clone()
            .or_else(|| file.get("seeds").map(PathBuf::from));
        let out_dir = args
            .out_dir
            .clone()
            .or_else(|| file.get("out_dir").map(PathBuf::from))
            .ok_or_else(|| CliError::input("--out-dir is required"))?;
        let truth = args
            .truth
            .clone()
            .or_else(|| file.get("truth").map(PathBuf::from));
        let defaults = RwrParams::default();
        let rwr = RwrParams {
            restart_prob: args
                .restart_prob
                .or(parsed(&file, "restart_prob")?)
                .unwrap_or(defaults.restart_prob),
            tol: args.tol.or(parsed(&file, "tol")?).unwrap_or(defaults.tol),
            max_iter: args
                .max_iter
                .or(parsed(&file, "max_iter")?)
                .unwrap_or(defaults.max_iter),
        };
        if !(rwr.restart_prob > 0.0 && rwr.restart_prob < 1.0) {
            return Err(CliError::input(format!(
                "restart_prob {} outside (0,1)",
                rwr.restart_prob
            )));
        }
        Ok(RunConfig {
            inputs,
            seeds,
            out_dir,
            truth,
            rwr,
            bin_width_s: args
                .bin_width_s
                .or(parsed(&file, "bin_width_s")?)
                .unwrap_or(86_400),
            dominance: args
                .dominance
                .or(parsed(&file, "dominance")?)
                .unwrap_or(0.8),
            robust_z: args
                .robust_z
                .or(parsed(&file, "robust_z")?)
                .unwrap_or(3.5),
            min_samples: args.min_samples.or(parsed(&file, "min_samples")?),
            rng_seed: args.rng_seed.or(parsed(&file, "rng_seed")?),
            preset: args
                .preset
                .clone()
                .or_else(|| file.get("preset").cloned())
                .unwrap_or_else(|| "default".to_string()),
            message_id: args
                .message_id
                .clone()
                .or_else(|| file.get("message_id").cloned()),
        })
    }

    fn require_inputs(&self) -> CliResult<&[PathBuf]> {
        if self.inputs.is_empty() {
            return Err(CliError::input("--input is required"));
        }
        for path in &self.inputs {
            if !path.is_file() {
                return Err(CliError::input(format!(
                    "input file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(&self.inputs)
    }

    fn ensure_out_dir(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| {
            CliError::input(format!(
                "cannot create out dir {}: {e}",
                self.out_dir.display()
            ))
        })
    }
}

/// Write-temp-then-rename so partially written artifacts never appear.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let tmp = dir.join(format!(".tmp.{name}"));
    let target = dir.join(name);
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, &target))
        .map_err(|e| CliError::internal(format!("writing {}: {e}", target.display())))?;
    eprintln!("wrote {}", target.display());
    Ok(())
}

struct LoadedCorpus {
    /// Native retweet events only; the analytics operate on these.
    native_events: Vec<RetweetEvent>,
    attrs: UserAttributeMap,
}

fn load_corpus(inputs: &[PathBuf]) -> CliResult<LoadedCorpus> {
    let mut native_events = Vec::new();
    let mut attrs = UserAttributeMap::new();
    let mut n_malformed = 0u64;
    for path in inputs {
        let file = fs::File::open(path)
            .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
        for_each_record(BufReader::new(file), |parsed| match parsed {
            Ok(record) => {
                attrs.observe(&record);
                if let Some(event) = to_retweet_event(&record) {
                    if event.kind == RetweetKind::Native {
                        native_events.push(event);
                    }
                }
            }
            Err(_) => n_malformed += 1,
        })
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
    }
    if n_malformed > 0 {
        eprintln!("skipped {n_malformed} malformed lines");
    }
    Ok(LoadedCorpus {
        native_events,
        attrs,
    })
}

fn load_seed_set(config: &RunConfig) -> CliResult<SeedSet> {
    let path = config
        .seeds
        .as_ref()
        .ok_or_else(|| CliError::input("--seeds is required for this subcommand"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read seeds {}: {e}", path.display())))?;
    let mut seeds = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (community, user) = line.split_once(',').ok_or_else(|| {
            CliError::input(format!(
                "{}:{}: expected `community_id,user_id`",
                path.display(),
                lineno + 1
            ))
        })?;
        let community: u32 = community.trim().parse().map_err(|_| {
            CliError::input(format!(
                "{}:{}: bad community id '{community}'",
                path.display(),
                lineno + 1
            ))
        })?;
        seeds.push((community, NodeId::user(user.trim())));
    }
    SeedSet::new(seeds).map_err(|e| CliError::input(e.to_string()))
}

fn detect(
    config: &RunConfig,
    corpus: &LoadedCorpus,
) -> CliResult<polarflow::community::CommunityAssignment> {
    let seeds = load_seed_set(config)?;
    let graph = build_bipartite(&corpus.native_events);
    let (assignment, proximities) = detect_communities(&graph, &seeds, &config.rwr)
        .map_err(|e| CliError::input(e.to_string()))?;
    for (index, proximity) in proximities.iter().enumerate() {
        if !proximity.converged {
            eprintln!(
                "warning: walk from seed {index} stopped at max_iter {} with residual {:e}",
                proximity.iterations,
                proximity.residuals.last().copied().unwrap_or(f64::NAN)
            );
        }
    }
    Ok(assignment)
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::internal(format!("serializing output: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn cmd_summarize(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let mut builder = SummaryBuilder::new();
    for path in config.require_inputs()? {
        let file = fs::File::open(path)
            .map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
        for_each_record(BufReader::new(file), |parsed| match parsed {
            Ok(record) => builder.add_record(&record),
            Err(_) => builder.add_malformed(),
        })
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
    }
    let summary = builder.finish();
    write_atomic(&config.out_dir, "summary.json", &json_bytes(&summary)?)
}

fn cmd_communities(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let corpus = load_corpus(config.require_inputs()?)?;
    let assignment = detect(config, &corpus)?;
    write_atomic(
        &config.out_dir,
        "assignment.csv",
        assignment.to_csv().as_bytes(),
    )?;
    if let Some(truth_path) = &config.truth {
        let text = fs::read_to_string(truth_path).map_err(|e| {
            CliError::input(format!("cannot read truth {}: {e}", truth_path.display()))
        })?;
        let truth: GroundTruth = serde_json::from_str(&text).map_err(|e| {
            CliError::input(format!("bad truth file {}: {e}", truth_path.display()))
        })?;
        let labeled: BTreeMap<String, u32> = truth.user_community.into_iter().collect();
        let mut report = validate_assignment(&assignment, &labeled)
            .map_err(|e| CliError::input(e.to_string()))?;
        report.accuracy = round_sig6(report.accuracy);
        write_atomic(&config.out_dir, "validation.json", &json_bytes(&report)?)?;
        println!("validation accuracy: {}", fmt_sig6(report.accuracy));
    }
    Ok(())
}

fn cmd_rtratio(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let corpus = load_corpus(config.require_inputs()?)?;
    let assignment = detect(config, &corpus)?;
    let flows = rt_flows(&corpus.native_events, &assignment);
    if flows.excluded > 0 {
        eprintln!("{} events had unassigned endpoints", flows.excluded);
    }
    let ratios = rt_ratio(&flows);
    write_atomic(&config.out_dir, "rt_flows.csv", flows.to_csv().as_bytes())?;
    write_atomic(&config.out_dir, "rt_ratio.csv", ratios.to_csv().as_bytes())
}

fn cmd_rtcdf(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let corpus = load_corpus(config.require_inputs()?)?;
    let assignment = detect(config, &corpus)?;
    let split = split_internal_cross(&corpus.native_events, &assignment);
    if !split.dropped.is_empty() {
        eprintln!("{} events had unassigned endpoints", split.dropped.len());
    }
    let internal: Vec<u64> = split.internal.iter().map(|e| e.response_time).collect();
    let cross: Vec<u64> = split.cross.iter().map(|e| e.response_time).collect();
    write_atomic(
        &config.out_dir,
        "ecdf_internal.csv",
        ecdf(&internal).to_csv().as_bytes(),
    )?;
    write_atomic(
        &config.out_dir,
        "ecdf_cross.csv",
        ecdf(&cross).to_csv().as_bytes(),
    )
}

#[derive(Serialize)]
struct LateReport {
    threshold: LateThreshold,
    breakdown: polarflow::metrics::AttributeBreakdown,
}

fn cmd_late(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let corpus = load_corpus(config.require_inputs()?)?;
    let times: Vec<u64> = corpus
        .native_events
        .iter()
        .map(|e| e.response_time)
        .collect();
    let mut threshold = late_threshold(&times).map_err(|e| CliError::input(e.to_string()))?;
    if threshold.degenerate {
        eprintln!("warning: zero-variance response times; every at-mean event is late");
    }
    let breakdown = attribute_breakdown(&corpus.native_events, &threshold, &corpus.attrs);
    threshold.mean_s = round_sig6(threshold.mean_s);
    threshold.std_s = round_sig6(threshold.std_s);
    threshold.threshold_s = round_sig6(threshold.threshold_s);
    let report = LateReport {
        threshold,
        breakdown,
    };
    write_atomic(&config.out_dir, "late.json", &json_bytes(&report)?)
}

fn cmd_reversal(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let corpus = load_corpus(config.require_inputs()?)?;
    let assignment = detect(config, &corpus)?;
    let params = ReversalParams {
        dominance: config.dominance,
        min_bin_count: config.min_samples.unwrap_or(5),
    };
    let mut drifts = detect_all_reversals(
        &corpus.native_events,
        &assignment,
        config.bin_width_s,
        &params,
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    for drift in &mut drifts {
        drift.pre_share = round_sig6(drift.pre_share);
        drift.post_share = round_sig6(drift.post_share);
    }
    write_atomic(&config.out_dir, "drifts.json", &json_bytes(&drifts)?)?;

    let mut wanted: Vec<&str> = drifts.iter().map(|d| d.message_id.as_str()).collect();
    if let Some(extra) = &config.message_id {
        wanted.push(extra.as_str());
    }
    wanted.sort_unstable();
    wanted.dedup();
    for message_id in wanted {
        let curve = reversal_curve(
            message_id,
            &corpus.native_events,
            &assignment,
            config.bin_width_s,
        )
        .map_err(|e| CliError::input(e.to_string()))?;
        write_atomic(
            &config.out_dir,
            &format!("curve_{message_id}.csv"),
            curve.to_csv().as_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_spikes(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let corpus = load_corpus(config.require_inputs()?)?;
    let assignment = detect(config, &corpus)?;
    let min_samples = config.min_samples.unwrap_or(20) as usize;
    let series = daily_p95_series(&corpus.native_events, &assignment, min_samples);
    let report = detect_spikes(&series, config.robust_z);
    for skipped in &report.skipped {
        eprintln!(
            "community {} skipped: only {} days with at least {min_samples} samples",
            skipped.community, skipped.present_days
        );
    }
    write_atomic(&config.out_dir, "daily_p95.csv", series.to_csv().as_bytes())?;
    write_atomic(&config.out_dir, "spikes.json", &json_bytes(&report)?)
}

fn cmd_synth(config: &RunConfig) -> CliResult<()> {
    config.ensure_out_dir()?;
    let mut synth_config = SynthConfig::preset(&config.preset).ok_or_else(|| {
        CliError::input(format!(
            "unknown preset '{}'; one of default, rivalry12, ecdf, late, spikes, throughput",
            config.preset
        ))
    })?;
    if let Some(seed) = config.rng_seed {
        synth_config.rng_seed = seed;
    }
    let mut corpus = Vec::new();
    let truth = generate(&synth_config, &mut corpus).map_err(|e| CliError::input(e.to_string()))?;
    write_atomic(&config.out_dir, "corpus.jsonl", &corpus)?;
    write_atomic(&config.out_dir, "truth.json", &json_bytes(&truth)?)?;
    write_atomic(&config.out_dir, "seeds.csv", truth.seed_csv().as_bytes())
}

fn limit_threads_from_env() {
    if let Ok(raw) = std::env::var("POLARFLOW_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring POLARFLOW_THREADS='{raw}'"),
        }
    }
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    limit_threads_from_env();
    let (args, handler): (&CommonArgs, fn(&RunConfig) -> CliResult<()>) = match &cli.command {
        Command::Summarize(args) => (args, cmd_summarize),
        Command::Communities(args) => (args, cmd_communities),
        Command::Rtratio(args) => (args, cmd_rtratio),
        Command::Rtcdf(args) => (args, cmd_rtcdf),
        Command::Late(args) => (args, cmd_late),
        Command::Reversal(args) => (args, cmd_reversal),
        Command::Spikes(args) => (args, cmd_spikes),
        Command::Synth(args) => (args, cmd_synth),
    };
    let config = RunConfig::resolve(args)?;
    handler(&config)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            let _ = writeln!(std::io::stderr(), "error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            let _ = writeln!(std::io::stderr(), "internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_keys_parse_with_flag_precedence() {
        let dir = std::env::temp_dir().join(format!("polarflow-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        fs::write(
            &path,
            "# comment\nrestart_prob = 0.5\nout_dir = from_config\nmin_samples = 9\n",
        )
        .unwrap();

        let args = CommonArgs {
            config: Some(path.clone()),
            restart_prob: Some(0.7),
            ..CommonArgs::default()
        };
        let config = RunConfig::resolve(&args).unwrap();
        assert_eq!(config.rwr.restart_prob, 0.7); // flag wins
        assert_eq!(config.out_dir, PathBuf::from("from_config"));
        assert_eq!(config.min_samples, Some(9));

        fs::write(&path, "restart_prob = not-a-number\nout_dir = x\n").unwrap();
        let args = CommonArgs {
            config: Some(path),
            ..CommonArgs::default()
        };
        assert!(matches!(RunConfig::resolve(&args), Err(CliError::Input(_))));
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn out_dir_is_required() {
        let args = CommonArgs::default();
        assert!(matches!(
            RunConfig::resolve(&args),
            Err(CliError::Input(msg)) if msg.contains("out-dir")
        ));
    }
}
