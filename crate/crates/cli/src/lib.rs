//! The `coco` command line: dataset ingestion and statistics, codec
//! conversion, evaluation runs and probe-task generation.
//!
//! Each command writes its human-readable output to the given writer and
//! returns a [`CliError`] whose [`CliError::exit_code`] the binary uses.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use coco_core::cap::{self, CapConfig};
use coco_core::config::{self, ConfigError, HarnessConfig};
use coco_core::eval;
use coco_core::gateway::{self, GatewayError};
use coco_core::ingest::{
    self, DatasetFormat, DatasetManifest, EpisodeRecord, IngestError, LoadReport,
};
use coco_core::model::{ActionType, CanonicalAction, Episode, LayoutItem};
use coco_core::probe::{self, AblationRow, ProbeError, ProbeParams};
use coco_core::synth::{self, SynthSpec};
use thiserror::Error;

/// Coordinate tolerance of the codec round-trip check; rendered coordinates
/// carry four decimals.
pub const ROUND_TRIP_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Transport(_) => 2,
            CliError::Config(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Manifest(_) => CliError::Config(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::Transport(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "coco",
    version,
    about = "Evaluation harness for GUI automation agents"
)]
pub struct Cli {
    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a dataset, print episode, step and type statistics.
    Ingest(IngestArgs),
    /// Convert a dataset between canonical commands and CAP strings.
    Encode(EncodeArgs),
    /// Run an agent backend over a split and write metrics reports.
    Eval(EvalArgs),
    /// Generate probe-task files.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
}

/// Where the episodes come from: a harness config, a manifest, or one file.
#[derive(Debug, Clone, Args, Default)]
pub struct DataArgs {
    /// Harness config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Standalone dataset manifest (TOML).
    #[arg(long, conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
    /// Single JSONL file.
    #[arg(long, conflicts_with_all = ["config", "manifest"])]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Aitw)]
    pub format: FormatArg,
    /// Subset tag for records without one (with --data).
    #[arg(long, default_value = "general")]
    pub tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum FormatArg {
    #[default]
    Aitw,
    Metagui,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Aitw => DatasetFormat::AitwJsonl,
            FormatArg::Metagui => DatasetFormat::MetaguiJsonl,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the statistics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodeTarget {
    Cap,
    Canonical,
}

#[derive(Debug, Clone, Args)]
pub struct EncodeArgs {
    /// JSONL records; steps carry either "action" or "cap".
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub to: Option<EncodeTarget>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Check that every step survives encode and decode.
    #[arg(long)]
    pub round_trip: bool,
    /// Harness config supplying the swipe threshold.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub swipe_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Use the prompt configuration of an ablation row (1-5).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub ablation_row: Option<u8>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Report directory (report.json and report.txt).
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub failure_budget: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Element-replacement probes.
    Replace(ReplaceArgs),
    /// n-next future-action samples.
    Future(FutureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ReplaceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0.0)]
    pub none_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FutureArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub min_steps: usize,
    #[arg(long, default_value_t = 12)]
    pub max_steps: usize,
    /// Comma-separated subset tags, assigned round-robin.
    #[arg(long, default_value = "general", value_delimiter = ',')]
    pub subsets: Vec<String>,
    /// Attach agent and user utterances to every step.
    #[arg(long)]
    pub metagui: bool,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Probe(ProbeCommand::Replace(a)) => cmd_probe_replace(&a, out),
        Command::Probe(ProbeCommand::Future(a)) => cmd_probe_future(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn data_manifest(d: &DataArgs) -> Result<(DatasetManifest, CapConfig), CliError> {
    if let Some(path) = &d.config {
        let cfg = HarnessConfig::load(path)?;
        return Ok((cfg.manifest, cfg.matching.cap()));
    }
    if let Some(path) = &d.manifest {
        return Ok((config::load_manifest(path)?, CapConfig::default()));
    }
    if let Some(path) = &d.data {
        let name = path
            .file_stem()
            .map_or("data".into(), |s| s.to_string_lossy().into_owned());
        return Ok((
            DatasetManifest::single(&name, d.format.into(), &d.tag, path),
            CapConfig::default(),
        ));
    }
    Err(CliError::Config(
        "one of --config, --manifest or --data is required".into(),
    ))
}

fn report_violations(report: &LoadReport, out: &mut dyn Write) -> Result<(), CliError> {
    for v in &report.violations {
        writeln!(
            out,
            "{}:{}: {}: {}",
            v.path.display(),
            v.line,
            v.episode_id.as_deref().unwrap_or("?"),
            v.messages.join("; ")
        )?;
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} schema violation(s)",
            report.violations.len()
        )))
    }
}

/// Loads a dataset, lists fixes and violations; fails on any violation.
fn load_checked(
    manifest: &DatasetManifest,
    cap_cfg: &CapConfig,
    out: &mut dyn Write,
) -> Result<Vec<Episode>, CliError> {
    let report = ingest::load_episodes(manifest, cap_cfg)?;
    for f in &report.fixes {
        log::info!("fixed {f}");
    }
    report_violations(&report, out)?;
    Ok(report.episodes)
}

pub fn cmd_ingest(args: &IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (manifest, cap_cfg) = data_manifest(&args.data)?;
    let report = match ingest::load_episodes(&manifest, &cap_cfg) {
        Ok(r) => r,
        Err(e) => {
            writeln!(out, "{e}")?;
            return Err(e.into());
        }
    };
    let stats = ingest::dataset_stats(&report.episodes);
    writeln!(
        out,
        "{}: {} episodes, {} steps, {} lines read, {} fixes",
        manifest.name,
        stats.episodes,
        stats.steps,
        report.lines_read,
        report.fixes.len()
    )?;
    let mut rows: Vec<(&str, &ingest::SubsetStats)> =
        stats.subsets.iter().map(|(k, v)| (k.as_str(), v)).collect();
    rows.push(("overall", &stats.overall));
    writeln!(
        out,
        "{:<16} {:<22} {:>8} {:>8}",
        "subset", "action type", "steps", "prop"
    )?;
    for (tag, s) in &rows {
        for t in ActionType::ALL {
            let c = s.type_counts.get(&t).copied().unwrap_or(0);
            let p = s.type_proportions.get(&t).copied().unwrap_or(0.0);
            writeln!(
                out,
                "{:<16} {:<22} {:>8} {:>7.2}%",
                tag,
                t.as_str(),
                c,
                p * 100.0
            )?;
        }
    }
    if manifest.format == DatasetFormat::MetaguiJsonl {
        for (tag, s) in &rows {
            writeln!(
                out,
                "{:<16} agent utterances {:>6}, user utterances {:>6}",
                tag, s.agent_utterances, s.user_utterances
            )?;
        }
    }
    if report.violations.is_empty() {
        match ingest::split_dataset(&report.episodes, &manifest) {
            Ok(s) => writeln!(
                out,
                "split: train {} / dev {} / test {} episodes",
                s.train.len(),
                s.dev.len(),
                s.test.len()
            )?,
            Err(e) => writeln!(out, "split: {e}")?,
        }
    }
    if let Some(path) = &args.out {
        let json = serde_json::json!({
            "manifest": manifest.name,
            "lines_read": report.lines_read,
            "violations": report.violations,
            "fixes": report.fixes,
            "stats": stats,
        });
        write_file(
            path,
            &(serde_json::to_string_pretty(&json).expect("stats serialize") + "\n"),
        )?;
    }
    report_violations(&report, out)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Outcome of converting one step.
struct Converted {
    action: CanonicalAction,
    cap: String,
    mismatch: Option<String>,
}

fn convert_canonical(
    a: &CanonicalAction,
    layout: &[LayoutItem],
    cfg: &CapConfig,
) -> Result<Converted, String> {
    let cap_text = cap::encode_action(a, layout, cfg).map_err(|e| e.to_string())?;
    let expected = cap::normalize_gold(a, layout, cfg);
    let mismatch = match cap::parse_action(&cap_text) {
        Ok(r) => {
            let back = cap::canonicalize(&r);
            (!back.approx_eq(&expected, ROUND_TRIP_TOL)).then(|| {
                format!(
                    "decoded {} but expected {}",
                    back.to_command_json(),
                    expected.to_command_json()
                )
            })
        }
        Err(e) => Some(format!("encoded {cap_text:?} does not parse: {e}")),
    };
    Ok(Converted {
        action: expected,
        cap: cap_text,
        mismatch,
    })
}

fn convert_cap(text: &str, layout: &[LayoutItem], cfg: &CapConfig) -> Result<Converted, String> {
    let r = cap::parse_action(text).map_err(|e| e.to_string())?;
    let action = cap::canonicalize(&r);
    let again = cap::encode_action(&action, layout, cfg).map_err(|e| e.to_string())?;
    let mismatch = (again != text).then(|| format!("{text:?} re-encodes as {again:?}"));
    Ok(Converted {
        action,
        cap: text.to_string(),
        mismatch,
    })
}

pub fn cmd_encode(args: &EncodeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cap_cfg = match &args.config {
        Some(p) => HarnessConfig::load(p)?.matching.cap(),
        None => CapConfig::default(),
    };
    if let Some(t) = args.swipe_threshold {
        cap_cfg.swipe_threshold = t;
    }
    cap_cfg
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if args.to.is_none() && !args.round_trip {
        return Err(CliError::Config(
            "nothing to do: pass --to and/or --round-trip".into(),
        ));
    }
    if args.to.is_some() && args.out.is_none() {
        return Err(CliError::Config("--to needs --out".into()));
    }
    let mut records = ingest::read_cap_records(&args.input)?;
    let mut errors = Vec::new();
    let mut mismatches = Vec::new();
    let mut steps = 0usize;
    for rec in &mut records {
        for (t, s) in rec.steps.iter_mut().enumerate() {
            steps += 1;
            let at = format!("{}#{t}", rec.id);
            let layout: Result<Vec<LayoutItem>, String> =
                s.layout.iter().map(|l| l.to_item()).collect();
            let converted = layout.and_then(|layout| match (&s.cap, &s.action) {
                (Some(text), _) => convert_cap(text, &layout, &cap_cfg),
                (None, Some(a)) => convert_canonical(&CanonicalAction::from(a), &layout, &cap_cfg),
                (None, None) => Err("step has neither \"action\" nor \"cap\"".into()),
            });
            match converted {
                Ok(c) => {
                    if let Some(m) = c.mismatch {
                        mismatches.push(format!("{at}: {m}"));
                    }
                    match args.to {
                        Some(EncodeTarget::Cap) => {
                            s.cap = Some(c.cap);
                            s.action = None;
                        }
                        Some(EncodeTarget::Canonical) => {
                            s.action = Some((&c.action).into());
                            s.cap = None;
                        }
                        None => {}
                    }
                }
                Err(e) => errors.push(format!("{at}: {e}")),
            }
        }
    }
    for e in &errors {
        writeln!(out, "error {e}")?;
    }
    if args.round_trip {
        for m in &mismatches {
            writeln!(out, "mismatch {m}")?;
        }
        writeln!(
            out,
            "round-trip: {steps} steps, {} mismatches, {} errors",
            mismatches.len(),
            errors.len()
        )?;
    }
    if let (Some(_), Some(path)) = (args.to, &args.out) {
        let mut text = String::new();
        for rec in &records {
            text.push_str(&serde_json::to_string::<EpisodeRecord>(rec).expect("records serialize"));
            text.push('\n');
        }
        write_file(path, &text)?;
        writeln!(
            out,
            "wrote {} episodes to {}",
            records.len(),
            path.display()
        )?;
    }
    if !errors.is_empty() || (args.round_trip && !mismatches.is_empty()) {
        return Err(CliError::Validation(format!(
            "{} codec error(s), {} round-trip mismatch(es)",
            errors.len(),
            if args.round_trip { mismatches.len() } else { 0 }
        )));
    }
    Ok(())
}

/// Config with flag overrides applied, validated.
fn resolved_config(run: &RunArgs) -> Result<HarnessConfig, CliError> {
    let mut cfg = HarnessConfig::load(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.run.seed = seed;
    }
    if let Some(p) = run.parallelism {
        cfg.run.parallelism = p;
    }
    if let Some(row) = run.ablation_row {
        let row = AblationRow::from_index(row.into()).expect("clap bounds the row");
        let (cep, _) = probe::make_ablation_config(row);
        cfg.cep = coco_core::cep::CepConfig {
            max_len: cfg.cep.max_len,
            image_token: cfg.cep.image_token.clone(),
            ..cep
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn select_split(
    cfg: &HarnessConfig,
    episodes: Vec<Episode>,
    split: SplitArg,
) -> Result<Vec<Episode>, CliError> {
    if split == SplitArg::All {
        return Ok(episodes);
    }
    let s = ingest::split_dataset(&episodes, &cfg.manifest)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(match split {
        SplitArg::Train => s.train,
        SplitArg::Dev => s.dev,
        _ => s.test,
    })
}

fn load_run(run: &RunArgs, out: &mut dyn Write) -> Result<(HarnessConfig, Vec<Episode>), CliError> {
    let cfg = resolved_config(run)?;
    let episodes = load_checked(&cfg.manifest, &cfg.matching.cap(), out)?;
    let episodes = select_split(&cfg, episodes, run.split)?;
    Ok((cfg, episodes))
}

fn split_name(s: SplitArg) -> &'static str {
    match s {
        SplitArg::All => "all",
        SplitArg::Train => "train",
        SplitArg::Dev => "dev",
        SplitArg::Test => "test",
    }
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (mut cfg, episodes) = load_run(&args.run, out)?;
    if let Some(t) = args.timeout_ms {
        cfg.run.timeout_ms = t;
    }
    if let Some(b) = args.failure_budget {
        cfg.run.failure_budget = b;
    }
    let factory = cfg.backend_factory(&episodes)?;
    let outcome = gateway::run_eval(
        &episodes,
        factory.as_ref(),
        &cfg.cep,
        &cfg.matching,
        &cfg.run,
    )?;
    let mut report = outcome.report;
    report.config = serde_json::json!({
        "harness": serde_json::to_value(&cfg).expect("config serializes"),
        "split": split_name(args.run.split),
        "ablation_row": args.run.ablation_row,
        "match_rules": {
            "coord": "same bbox or euclidean distance <= coord_tau",
            "typed_text": cfg.matching.typed_text_mode,
        },
    });
    let table = eval::render_table(&report);
    write!(out, "{table}")?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&args.out.join("report.json"), &json)?;
    write_file(&args.out.join("report.txt"), &table)?;
    writeln!(out, "wrote {}", args.out.display())?;
    Ok(())
}

pub fn cmd_probe_replace(args: &ReplaceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, episodes) = load_run(&args.run, out)?;
    let params = ProbeParams {
        seed: cfg.run.seed,
        none_fraction: args.none_fraction,
        count: args.count,
    };
    let samples =
        probe::make_replacement_probes(&episodes, &params, &cfg.cep, &cfg.matching.cap())?;
    let mut buf = Vec::new();
    probe::write_probes(&mut buf, &params, &samples)?;
    write_file(
        &args.out,
        &String::from_utf8(buf).expect("probe files are UTF-8"),
    )?;
    let mut counts = std::collections::BTreeMap::new();
    for s in &samples {
        *counts.entry(s.replaced).or_insert(0usize) += 1;
    }
    for (label, c) in counts {
        writeln!(out, "{label:<8} {c}")?;
    }
    writeln!(
        out,
        "wrote {} probes to {}",
        samples.len(),
        args.out.display()
    )?;
    Ok(())
}

pub fn cmd_probe_future(args: &FutureArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (cfg, episodes) = load_run(&args.run, out)?;
    let samples = probe::make_future_samples(&episodes, args.n, &cfg.cep, &cfg.matching.cap())?;
    let mut buf = Vec::new();
    probe::write_future(&mut buf, args.n, &samples)?;
    write_file(
        &args.out,
        &String::from_utf8(buf).expect("sample files are UTF-8"),
    )?;
    writeln!(
        out,
        "wrote {} samples (n = {}) to {}",
        samples.len(),
        args.n,
        args.out.display()
    )?;
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.min_steps == 0 || args.max_steps < args.min_steps {
        return Err(CliError::Config("need 1 <= min-steps <= max-steps".into()));
    }
    let spec = SynthSpec {
        seed: args.seed,
        episodes: args.episodes,
        min_steps: args.min_steps,
        max_steps: args.max_steps,
        subsets: args.subsets.clone(),
        utterances: args.metagui,
    };
    let episodes = synth::synthetic_dataset(&spec, &CapConfig::default());
    ingest::write_episodes(&args.out, &episodes)?;
    let steps: usize = episodes.iter().map(|e| e.steps.len()).sum();
    writeln!(
        out,
        "wrote {} episodes, {steps} steps to {}",
        episodes.len(),
        args.out.display()
    )?;
    Ok(())
}
